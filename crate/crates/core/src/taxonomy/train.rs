use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Question;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{accuracy, confusion_matrix, macro_f1};
use crate::numerics::{Adam, Tape};
use crate::seed::component_rng;

use super::model::ClsMode;
use super::{Head, LabelSet, TaxonomyConfig, TaxonomyModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClsEpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub train_macro_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub epochs: Vec<ClsEpochStats>,
    pub final_train_accuracy: f64,
    pub final_train_macro_f1: f64,
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
}

fn gold_index(q: &Question, labels: &LabelSet, head: Head) -> Result<usize> {
    let missing = || Error::Data(format!("question {:?} has no gold {head:?} label", q.id));
    match head {
        Head::Coarse => {
            let c = q.coarse.as_deref().ok_or_else(missing)?;
            labels.coarse_index(c).ok_or_else(|| {
                Error::Data(format!(
                    "question {:?}: coarse label {c:?} not in the label set",
                    q.id
                ))
            })
        }
        Head::Fine => {
            let c = q.coarse.as_deref().ok_or_else(missing)?;
            let f = q.fine.as_deref().ok_or_else(missing)?;
            labels.fine_index(c, f).ok_or_else(|| {
                Error::Data(format!(
                    "question {:?}: fine label {c:?}/{f:?} not in the label set",
                    q.id
                ))
            })
        }
    }
}

fn predictions(
    model: &TaxonomyModel,
    questions: &[Question],
    labels: &LabelSet,
) -> Result<Vec<String>> {
    questions
        .iter()
        .map(|q| Ok(model.classify(q, labels)?.label))
        .collect()
}

fn gold_names(questions: &[Question], labels: &LabelSet, head: Head) -> Result<Vec<String>> {
    let names = labels.labels_for(head);
    questions
        .iter()
        .map(|q| Ok(names[gold_index(q, labels, head)?].clone()))
        .collect()
}

/// Cross-entropy training with Adam over seeded mini-batches. Every question
/// must carry a gold label for the head; per-epoch train (and dev, when
/// given) accuracy and macro-F1 are logged.
pub fn train_classifier(
    config: TaxonomyConfig,
    questions: &[Question],
    labels: &LabelSet,
    head: Head,
    table: Arc<EmbeddingTable>,
    dev: Option<&[Question]>,
) -> Result<(TaxonomyModel, ClassifierReport)> {
    if questions.is_empty() {
        return Err(Error::Argument("no labeled questions".into()));
    }
    let gold: Vec<usize> = questions
        .iter()
        .map(|q| gold_index(q, labels, head))
        .collect::<Result<_>>()?;

    let mut model = TaxonomyModel::new(config.clone(), head, labels, table)?;
    let mut adam = Adam::new(config.lr);
    let mut shuffle_rng = component_rng(config.seed, "taxonomy-shuffle");
    let mut dropout_rng = component_rng(config.seed, "taxonomy-dropout");

    let mut report = ClassifierReport::default();
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..questions.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch.max(1)) {
            step += 1;
            model.store_mut().zero_grads();
            let inv = 1.0 / batch.len() as f64;
            for &qi in batch {
                let mut tape = Tape::new();
                let logits = model.logits_on_tape(
                    model.store(),
                    &mut tape,
                    &questions[qi].tokens,
                    ClsMode::Train,
                    &mut dropout_rng,
                )?;
                let log_probs = tape.log_softmax(logits)?;
                let picked = tape.pick(log_probs, gold[qi])?;
                let loss = tape.neg(picked);
                let loss_val = tape.value(loss).item();
                if !loss_val.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        step,
                        msg: format!("non-finite loss for question {:?}", questions[qi].id),
                    });
                }
                epoch_loss += loss_val;
                let scaled = tape.scale(loss, inv);
                tape.backward(scaled, model.store_mut())?;
            }
            model.store_mut().clip_grad_norm(5.0);
            adam.step(model.store_mut())?;
        }

        let preds = predictions(&model, questions, labels)?;
        let golds = gold_names(questions, labels, head)?;
        let train_accuracy = accuracy(&golds, &preds)?;
        let train_macro_f1 = macro_f1(&golds, &preds)?;
        let (dev_accuracy, dev_macro_f1) = match dev {
            Some(dev) if !dev.is_empty() => {
                let dp = predictions(&model, dev, labels)?;
                let dg = gold_names(dev, labels, head)?;
                (Some(accuracy(&dg, &dp)?), Some(macro_f1(&dg, &dp)?))
            }
            _ => (None, None),
        };
        log::info!(
            "epoch {epoch}: loss {:.6}, train acc {train_accuracy:.4}",
            epoch_loss / questions.len() as f64
        );
        report.epochs.push(ClsEpochStats {
            epoch,
            mean_loss: epoch_loss / questions.len() as f64,
            train_accuracy,
            train_macro_f1,
            dev_accuracy,
            dev_macro_f1,
        });
    }

    let preds = predictions(&model, questions, labels)?;
    let golds = gold_names(questions, labels, head)?;
    report.final_train_accuracy = accuracy(&golds, &preds)?;
    report.final_train_macro_f1 = macro_f1(&golds, &preds)?;
    report.confusion = confusion_matrix(&golds, &preds);
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::OovPolicy;
    use rand::Rng;

    fn table() -> Arc<EmbeddingTable> {
        let mut rng = component_rng(23, "train-table");
        let words = [
            "how", "many", "much", "what", "is", "a", "describe", "why", "when", "who", "city",
            "count", "reason", "define",
        ];
        let entries: Vec<(&str, Vec<f64>)> = words
            .iter()
            .map(|w| (*w, (0..6).map(|_| rng.gen_range(-0.5..0.5)).collect()))
            .collect();
        Arc::new(EmbeddingTable::from_entries(&entries, OovPolicy::Zero).unwrap())
    }

    fn labeled(text: &str, coarse: &str, fine: &str, id: usize) -> Question {
        let mut q = Question::new(format!("q{id}"), text);
        q.coarse = Some(coarse.to_string());
        q.fine = Some(fine.to_string());
        q
    }

    fn fixture() -> Vec<Question> {
        vec![
            labeled("how many count", "Quantification", "Number", 0),
            labeled("how much count is", "Quantification", "Number", 1),
            labeled("who is a city", "Entity", "Person", 2),
            labeled("what city is", "Entity", "Location", 3),
            labeled("describe a reason", "Description", "Reason", 4),
            labeled("why is a reason", "Description", "Reason", 5),
            labeled("define a city", "Definition", "Entity", 6),
            labeled("what is a define", "Definition", "Entity", 7),
            labeled("what is a who", "Entity", "Person", 8),
            labeled("how many city", "Quantification", "Number", 9),
        ]
    }

    fn cfg(epochs: usize) -> TaxonomyConfig {
        TaxonomyConfig {
            dim: 6,
            filters: 6,
            width: 2,
            hidden: 8,
            lr: 0.05,
            dropout_keep: 1.0,
            batch: 10,
            epochs,
            seed: 3,
        }
    }

    #[test]
    fn overfits_a_ten_question_fixture() {
        let labels = LabelSet::builtin();
        let (model, report) = train_classifier(
            cfg(150),
            &fixture(),
            &labels,
            Head::Coarse,
            table(),
            None,
        )
        .unwrap();
        assert_eq!(report.final_train_accuracy, 1.0, "{:?}", report.confusion);
        for q in fixture() {
            let pred = model.classify(&q, &labels).unwrap();
            assert_eq!(&pred.label, q.coarse.as_ref().unwrap());
        }
    }

    #[test]
    fn empty_dataset_is_an_argument_error() {
        let labels = LabelSet::builtin();
        assert!(matches!(
            train_classifier(cfg(1), &[], &labels, Head::Coarse, table(), None),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn label_outside_labelset_names_the_question() {
        let labels = LabelSet::builtin();
        let mut qs = fixture();
        qs[3].coarse = Some("Nonsense".to_string());
        let err =
            train_classifier(cfg(1), &qs, &labels, Head::Coarse, table(), None).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("q3"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let labels = LabelSet::builtin();
        let qs = fixture();
        let (m1, _) =
            train_classifier(cfg(3), &qs, &labels, Head::Coarse, table(), None).unwrap();
        let (m2, _) =
            train_classifier(cfg(3), &qs, &labels, Head::Coarse, table(), None).unwrap();
        for ((_, a), (_, b)) in m1.store().iter().zip(m2.store().iter()) {
            assert_eq!(a.value, b.value, "parameter {} differs", a.name);
        }
    }

    #[test]
    fn fine_head_trains_on_qualified_labels() {
        let labels = LabelSet::builtin();
        let (model, report) =
            train_classifier(cfg(150), &fixture(), &labels, Head::Fine, table(), None).unwrap();
        assert_eq!(report.final_train_accuracy, 1.0);
        let pred = model
            .classify(&fixture()[0], &labels)
            .unwrap();
        assert_eq!(pred.label, "Quantification/Number");
    }
}
