//! Finite-difference verification of tape gradients.

use serde::Serialize;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numerics::params::ParamStore;
use crate::numerics::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tol: f64,
    /// Check at most this many coordinates per parameter (seeded sample);
    /// `None` checks every coordinate.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            tol: 1e-4,
            max_coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoordCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: Vec<CoordCheck>,
    /// Largest relative error seen, failing or not.
    pub worst: Option<CoordCheck>,
    pub tol: f64,
    pub eps: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compare tape gradients of `forward` against central differences.
///
/// `forward` must be a deterministic function of the parameter values
/// (dropout disabled, no fresh randomness). It is called once to record the
/// analytic gradients and twice more per checked coordinate.
/// Relative error is `|fd - grad| / max(1, |grad|)`.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut forward: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<Var>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = forward(store, &mut tape)?;
    tape.backward(loss, store)?;

    let analytic: Vec<Vec<f64>> = store.iter().map(|(_, p)| p.grad.data().to_vec()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        checked: 0,
        failures: Vec::new(),
        worst: None,
        tol: cfg.tol,
        eps: cfg.eps,
    };

    let param_count = store.len();
    for pi in 0..param_count {
        let n = analytic[pi].len();
        let mut coords: Vec<usize> = (0..n).collect();
        if let Some(cap) = cfg.max_coords_per_param {
            coords.shuffle(&mut rng);
            coords.truncate(cap);
            coords.sort_unstable();
        }
        for ci in coords {
            let id = crate::numerics::params::ParamId(pi);
            let orig = store.get(id).value.data()[ci];

            store.get_mut(id).value.data_mut()[ci] = orig + cfg.eps;
            let mut t_plus = Tape::new();
            let l_plus = forward(store, &mut t_plus)?;
            let f_plus = t_plus.value(l_plus).item();

            store.get_mut(id).value.data_mut()[ci] = orig - cfg.eps;
            let mut t_minus = Tape::new();
            let l_minus = forward(store, &mut t_minus)?;
            let f_minus = t_minus.value(l_minus).item();

            store.get_mut(id).value.data_mut()[ci] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * cfg.eps);
            let grad = analytic[pi][ci];
            let rel_err = (numeric - grad).abs() / grad.abs().max(1.0);
            let check = CoordCheck {
                param: store.get(id).name.clone(),
                index: ci,
                analytic: grad,
                numeric,
                rel_err,
            };
            report.checked += 1;
            if report
                .worst
                .as_ref()
                .map(|w| check.rel_err > w.rel_err)
                .unwrap_or(true)
            {
                report.worst = Some(check.clone());
            }
            if rel_err >= cfg.tol {
                report.failures.push(check);
            }
        }
    }
    Ok(report)
}
