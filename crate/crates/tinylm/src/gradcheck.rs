//! Finite-difference validation of the backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::train::loss_and_grad;
use crate::{init_params_with_std, ModelError, TinyLmConfig, TinyLmParams};

/// Central difference step.
pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    pub loss: f64,
}

/// Relative error with a small absolute floor so parameters whose true
/// gradient is zero (up to rounding) do not dominate.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

/// Compares analytic gradients of `params` on `ids` with central differences
/// at every parameter.
pub fn check_params(params: &TinyLmParams<f64>, ids: &[u32]) -> Result<GradCheckReport, ModelError> {
    let (loss, grads) = loss_and_grad(params, ids, 1.0)?;
    let mut probe = params.clone();
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for i in 0..params.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + FD_STEP;
        let (plus, _) = loss_and_grad(&probe, ids, 1.0)?;
        probe.as_mut_slice()[i] = orig - FD_STEP;
        let (minus, _) = loss_and_grad(&probe, ids, 1.0)?;
        probe.as_mut_slice()[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        max_rel = max_rel.max(relative_error(grads[i], numeric));
        max_abs = max_abs.max((grads[i] - numeric).abs());
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        checked: params.len(),
        loss,
    })
}

/// Builds a model from `config` (weights drawn with std 0.3 so every path
/// carries signal) and a 7-token sequence from `seed`, then checks all
/// gradients in 64-bit arithmetic.
pub fn gradient_check(config: &TinyLmConfig, seed: u64) -> Result<GradCheckReport, ModelError> {
    let params: TinyLmParams<f64> = init_params_with_std(config, seed, 0.3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let len = 7.min(config.context_len + 1);
    let ids: Vec<u32> = (0..len)
        .map(|_| rng.random_range(0..config.vocab_size as u32))
        .collect();
    check_params(&params, &ids)
}
