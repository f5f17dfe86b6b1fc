//! Skip-window perplexity scoring.
//!
//! For a sequence `w_1..w_N`, the first `s` positions are skipped and scoring
//! stops at position `e`:
//!
//! ```text
//! PPL = exp( mean_{i in (s, min(N, e)]} -log p(w_i | w_<i) )
//! ```

use serde::{Deserialize, Serialize};

use crate::loss::token_nlls;
use crate::model::forward;
use crate::{ModelError, Scalar, TinyLmParams};

/// Leading positions excluded from the document score.
pub const DEFAULT_SKIP: usize = 10;
/// Last scored position.
pub const DEFAULT_END: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    /// `None` when the sequence is too short to score.
    pub ppl: Option<f64>,
    pub mean_nll: Option<f64>,
    pub tokens_scored: usize,
    pub s: usize,
    pub e: usize,
    pub scorable: bool,
}

/// NLL of every predicted position: entry `k` is `-log p(w_{k+2} | w_1..w_{k+1})`.
/// Sequences longer than the model context are traced over their first
/// `context_len` tokens. Sequences of length 0 or 1 give an empty trace.
pub fn token_nll_trace<F: Scalar>(params: &TinyLmParams<F>, ids: &[u32]) -> Result<Vec<f64>, ModelError> {
    if ids.len() < 2 {
        return Ok(Vec::new());
    }
    let n = ids.len().min(params.config().context_len);
    let logits = forward(params, &ids[..n - 1])?;
    token_nlls(&logits, &ids[1..n])
}

/// Perplexity over positions `(s, min(N, e)]`. Sequences with `N <= s + 1`
/// are reported unscorable rather than scored over a degenerate window.
/// Position 1 has no context, so the window never starts before position 2.
pub fn perplexity_window<F: Scalar>(
    params: &TinyLmParams<F>,
    ids: &[u32],
    s: usize,
    e: usize,
) -> Result<WindowScore, ModelError> {
    let n = ids.len();
    let end = n.min(e);
    let first = s.max(1);
    let unscorable = WindowScore {
        ppl: None,
        mean_nll: None,
        tokens_scored: 0,
        s,
        e,
        scorable: false,
    };
    if n <= s + 1 || end <= first {
        return Ok(unscorable);
    }
    if end > params.config().context_len {
        return Err(ModelError::SequenceTooLong {
            len: end,
            context_len: params.config().context_len,
        });
    }
    let trace = token_nll_trace(params, &ids[..end])?;
    let window = &trace[first - 1..end - 1];
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    Ok(WindowScore {
        ppl: Some(mean.exp()),
        mean_nll: Some(mean),
        tokens_scored: window.len(),
        s,
        e,
        scorable: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{init_params, TinyLmConfig};

    fn model(vocab: usize) -> TinyLmParams<f64> {
        init_params(&TinyLmConfig::new(vocab, 8, 1, 2, 64), 11).unwrap()
    }

    fn uniform(vocab: usize) -> TinyLmParams<f64> {
        let mut p = model(vocab);
        p.tensor_mut("head").unwrap().fill(0.0);
        p
    }

    #[test]
    fn uniform_model_scores_vocab_size() {
        let ids: Vec<u32> = (0..40).map(|i| (i * 7 % 13) as u32).collect();
        for (s, e) in [(10, 1024), (0, 5), (3, 20)] {
            let score = perplexity_window(&uniform(13), &ids, s, e).unwrap();
            assert!((score.ppl.unwrap() - 13.0).abs() < 1e-9, "s={s} e={e}");
        }
    }

    #[test]
    fn window_counts() {
        let p = model(13);
        let ids: Vec<u32> = (0..20).map(|i| i % 13).collect();
        let sc = perplexity_window(&p, &ids, 10, 1024).unwrap();
        assert!(sc.scorable);
        assert_eq!(sc.tokens_scored, 10);
        let sc = perplexity_window(&p, &ids, 10, 15).unwrap();
        assert_eq!(sc.tokens_scored, 5);
        for n in [0, 1, 10, 11] {
            let sc = perplexity_window(&p, &ids[..n], 10, 1024).unwrap();
            assert!(!sc.scorable && sc.ppl.is_none(), "n={n}");
        }
        assert!(perplexity_window(&p, &ids[..12], 10, 1024).unwrap().scorable);
    }

    #[test]
    fn trace_matches_window() {
        let p = model(13);
        let ids: Vec<u32> = (0..30).map(|i| (i * 5 % 13) as u32).collect();
        let trace = token_nll_trace(&p, &ids).unwrap();
        assert_eq!(trace.len(), 29);
        let sc = perplexity_window(&p, &ids, 10, 25).unwrap();
        let mean = trace[9..24].iter().sum::<f64>() / 15.0;
        assert!((sc.ppl.unwrap() - mean.exp()).abs() < 1e-12);
        assert!(token_nll_trace(&p, &[3]).unwrap().is_empty());
    }

    #[test]
    fn window_beyond_context_is_an_error() {
        let p = model(13);
        let ids = vec![1u32; 100];
        assert!(matches!(
            perplexity_window(&p, &ids, 10, 1024),
            Err(ModelError::SequenceTooLong { len: 100, .. })
        ));
        assert!(perplexity_window(&p, &ids, 10, 64).unwrap().scorable);
    }
}
