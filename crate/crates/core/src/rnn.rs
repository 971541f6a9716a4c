//! Shared gated-recurrent cell used by the question encoder and the
//! classifier's bidirectional layer.

use crate::error::Result;
use crate::numerics::{Tape, Var};

/// Parameter vars of one GRU cell in the order
/// `[w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h]`.
pub(crate) type GruVars = [Var; 9];

/// One update/reset/candidate step: returns the next hidden state.
pub(crate) fn gru_cell(tape: &mut Tape, p: &GruVars, x: Var, h: Var) -> Result<Var> {
    let [w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h] = *p;
    let zx = tape.matvec(w_z, x)?;
    let zh = tape.matvec(u_z, h)?;
    let z = {
        let s = tape.add(zx, zh)?;
        let s = tape.add(s, b_z)?;
        tape.sigmoid(s)
    };
    let rx = tape.matvec(w_r, x)?;
    let rh = tape.matvec(u_r, h)?;
    let r = {
        let s = tape.add(rx, rh)?;
        let s = tape.add(s, b_r)?;
        tape.sigmoid(s)
    };
    let cx = tape.matvec(w_h, x)?;
    let rh_gated = tape.mul(r, h)?;
    let ch = tape.matvec(u_h, rh_gated)?;
    let cand = {
        let s = tape.add(cx, ch)?;
        let s = tape.add(s, b_h)?;
        tape.tanh(s)
    };
    // h' = (1 - z) .* h + z .* cand
    let neg_z = tape.neg(z);
    let one_minus_z = tape.add_scalar(neg_z, 1.0);
    let keep = tape.mul(one_minus_z, h)?;
    let update = tape.mul(z, cand)?;
    tape.add(keep, update)
}
