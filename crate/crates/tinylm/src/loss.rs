//! Causal language-modeling loss.

use crate::{Logits, ModelError, Scalar};

/// Log-softmax of one logits row, evaluated in `f64`.
pub fn log_softmax_row<F: Scalar>(row: &[F]) -> Vec<f64> {
    let max = row.iter().map(|x| x.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x.as_f64() - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x.as_f64() - lse).collect()
}

fn nll_at<F: Scalar>(row: &[F], target: u32) -> f64 {
    let max = row.iter().map(|x| x.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x.as_f64() - max).exp()).sum::<f64>().ln();
    lse - row[target as usize].as_f64()
}

fn check_targets<F: Scalar>(logits: &Logits<F>, targets: &[u32]) -> Result<(), ModelError> {
    if targets.len() > logits.rows {
        return Err(ModelError::ShapeMismatch(format!(
            "{} targets for {} logits rows",
            targets.len(),
            logits.rows
        )));
    }
    if let Some(&id) = targets.iter().find(|&&id| id as usize >= logits.vocab) {
        return Err(ModelError::InvalidToken {
            id,
            vocab_size: logits.vocab,
        });
    }
    Ok(())
}

/// Per-position negative log-likelihood; row `i` of `logits` predicts `targets[i]`.
pub(crate) fn token_nlls<F: Scalar>(logits: &Logits<F>, targets: &[u32]) -> Result<Vec<f64>, ModelError> {
    check_targets(logits, targets)?;
    Ok(targets
        .iter()
        .enumerate()
        .map(|(i, &tgt)| nll_at(logits.row(i), tgt))
        .collect())
}

/// Mean token NLL (natural log). `targets` are the inputs shifted left by one;
/// logits rows past `targets.len()` are masked out.
pub fn clm_loss<F: Scalar>(logits: &Logits<F>, targets: &[u32]) -> Result<f64, ModelError> {
    let nlls = token_nlls(logits, targets)?;
    if nlls.is_empty() {
        return Err(ModelError::ShapeMismatch("no target positions".into()));
    }
    Ok(nlls.iter().sum::<f64>() / nlls.len() as f64)
}

/// Sum of NLL over `targets`, writing `scale * d(sum)/d(logits)` into `dlogits`.
pub(crate) fn nll_sum_and_grad<F: Scalar>(
    logits: &Logits<F>,
    targets: &[u32],
    scale: f64,
    dlogits: &mut [F],
) -> Result<f64, ModelError> {
    check_targets(logits, targets)?;
    dlogits.fill(F::zero());
    let mut total = 0.0;
    for (i, &tgt) in targets.iter().enumerate() {
        let row = logits.row(i);
        let logp = log_softmax_row(row);
        total -= logp[tgt as usize];
        let grad = &mut dlogits[i * logits.vocab..(i + 1) * logits.vocab];
        for (g, lp) in grad.iter_mut().zip(&logp) {
            *g = F::lit(lp.exp() * scale);
        }
        grad[tgt as usize] -= F::lit(scale);
    }
    Ok(total)
}
