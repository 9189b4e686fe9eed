//! Model evaluation: batched argmax classification, percent accuracy, and
//! the full confusion matrix.

use crate::{HarnessError, Result};
use spdnet_core::models::{predictions_from_logits, Model};
use spdnet_core::tensor::Scalar;
use spdnet_data::{batch_tensor, num_classes, RadargramSample};

/// Evaluation forwards run in chunks of this many samples to bound the
/// live activation memory.
const EVAL_BATCH: usize = 32;

/// Classification quality over one index set.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// Percent correct: `100 * trace(confusion) / total`.
    pub accuracy: f64,
    /// `confusion[true_class][predicted_class]`.
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
}

impl Evaluation {
    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }
}

/// Runs the model over the selected samples in eval mode.
pub fn evaluate_model<T: Scalar>(
    model: &Model<T>,
    samples: &[RadargramSample],
    indices: &[usize],
) -> Result<Evaluation> {
    let k = num_classes();
    if model.num_classes() != k {
        return Err(HarnessError::Eval(format!(
            "model classifies {} classes but the dataset has {k}",
            model.num_classes()
        )));
    }
    if indices.is_empty() {
        return Err(HarnessError::Eval("nothing to evaluate".into()));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, labels) = batch_tensor::<T>(samples, chunk)?;
        let logits = model.forward_eval(&x)?;
        let preds = predictions_from_logits(&logits)?;
        for (pred, &label) in preds.iter().zip(&labels) {
            confusion[label][pred.class] += 1;
        }
    }
    let total = indices.len();
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    Ok(Evaluation {
        accuracy: 100.0 * correct as f64 / total as f64,
        confusion,
        total,
    })
}

/// Renders the confusion matrix with class labels on both axes.
pub fn render_confusion(confusion: &[Vec<usize>]) -> String {
    let k = confusion.len();
    let mut out = String::from("true\\pred");
    for j in 0..k {
        out.push_str(&format!("{j:>8}"));
    }
    out.push('\n');
    for (i, row) in confusion.iter().enumerate() {
        out.push_str(&format!("{i:>9}"));
        for &v in row {
            out.push_str(&format!("{v:>8}"));
        }
        out.push('\n');
    }
    out
}
