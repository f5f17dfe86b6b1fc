use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::loss::log_softmax_row;
use crate::model::{check_ids, forward};
use crate::{ModelError, Scalar, TinyLmParams};

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub max_new: usize,
    pub stop_ids: BTreeSet<u32>,
    /// `0.0` selects greedy decoding.
    pub temperature: f64,
    pub top_k: Option<usize>,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            max_new: 64,
            stop_ids: BTreeSet::new(),
            temperature: 0.0,
            top_k: None,
            seed: 0,
        }
    }
}

impl GenerateConfig {
    pub fn greedy(max_new: usize) -> Self {
        Self {
            max_new,
            ..Self::default()
        }
    }
}

/// Extends `prefix` by up to `max_new` tokens, stopping after emitting a stop
/// id. When the sequence outgrows the context, only the most recent
/// `context_len` tokens are fed to the model.
pub fn generate<F: Scalar>(
    params: &TinyLmParams<F>,
    prefix: &[u32],
    cfg: &GenerateConfig,
) -> Result<Vec<u32>, ModelError> {
    check_ids(params, prefix)?;
    let ctx = params.config().context_len;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = prefix.to_vec();
    for _ in 0..cfg.max_new {
        let window = &out[out.len().saturating_sub(ctx)..];
        let logits = forward(params, window)?;
        let last = logits.row(logits.rows - 1);
        let next = if cfg.temperature <= 0.0 {
            argmax(last)
        } else {
            sample(last, cfg.temperature, cfg.top_k, &mut rng)
        };
        out.push(next);
        if cfg.stop_ids.contains(&next) {
            break;
        }
    }
    Ok(out)
}

fn argmax<F: Scalar>(row: &[F]) -> u32 {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best as u32
}

fn sample<F: Scalar>(row: &[F], temperature: f64, top_k: Option<usize>, rng: &mut ChaCha8Rng) -> u32 {
    let scaled: Vec<f64> = row.iter().map(|x| x.as_f64() / temperature).collect();
    let mut candidates: Vec<usize> = (0..row.len()).collect();
    if let Some(k) = top_k.filter(|&k| k > 0 && k < row.len()) {
        candidates.sort_by(|&a, &b| scaled[b].total_cmp(&scaled[a]).then(a.cmp(&b)));
        candidates.truncate(k);
        candidates.sort_unstable();
    }
    let sub: Vec<f64> = candidates.iter().map(|&i| scaled[i]).collect();
    let probs: Vec<f64> = log_softmax_row(&sub).into_iter().map(f64::exp).collect();
    let mut u = rng.random::<f64>();
    for (&i, p) in candidates.iter().zip(&probs) {
        if u < *p {
            return i as u32;
        }
        u -= p;
    }
    *candidates.last().expect("non-empty vocabulary") as u32
}
