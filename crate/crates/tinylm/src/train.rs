//! Causal LM training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::loss::nll_sum_and_grad;
use crate::model::{backward, forward_cached};
use crate::optim::{clip_grad_norm, AdamW, LrSchedule};
use crate::{init_params, Checkpoint, ModelError, Scalar, TinyLmConfig, TinyLmParams, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: u64,
    pub tokens_seen: u64,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Epochs,
    TokenLimit,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<LossPoint>,
    pub steps: u64,
    pub tokens_seen: u64,
    pub stop: StopReason,
}

impl TrainReport {
    pub fn initial_loss(&self) -> Option<f64> {
        self.curve.first().map(|p| p.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.curve.last().map(|p| p.loss)
    }

    /// Loss curve as CSV with header `step,tokens_seen,loss,lr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,tokens_seen,loss,lr\n");
        for p in &self.curve {
            out.push_str(&format!("{},{},{},{}\n", p.step, p.tokens_seen, p.loss, p.lr));
        }
        out
    }
}

/// Splits documents into training windows of at most `context_len + 1` tokens
/// (one window of `n` tokens yields `n - 1` predictions). Consecutive windows
/// overlap by one token so every transition is trained on.
pub fn make_windows(docs: &[Vec<u32>], context_len: usize) -> Vec<&[u32]> {
    let mut out = Vec::new();
    for doc in docs {
        let mut start = 0;
        while start + 1 < doc.len() {
            let end = (start + context_len + 1).min(doc.len());
            out.push(&doc[start..end]);
            start += context_len;
        }
    }
    out
}

/// Mean NLL of `ids[1..]` given their prefixes and its gradient, scaled by
/// `scale`. Runs in eval mode (no dropout).
pub fn loss_and_grad<F: Scalar>(
    params: &TinyLmParams<F>,
    ids: &[u32],
    scale: f64,
) -> Result<(f64, Vec<F>), ModelError> {
    if ids.len() < 2 {
        return Err(ModelError::ShapeMismatch("need at least two tokens".into()));
    }
    let input = &ids[..ids.len() - 1];
    let (logits, cache) = forward_cached(params, input, 0, None)?;
    let n = (ids.len() - 1) as f64;
    let mut dlogits = vec![F::zero(); logits.data.len()];
    let total = nll_sum_and_grad(&logits, &ids[1..], scale / n, &mut dlogits)?;
    let mut grads = vec![F::zero(); params.len()];
    backward(params, &cache, &dlogits, &mut grads);
    Ok((total / n, grads))
}

pub struct Trainer<F: Scalar> {
    params: TinyLmParams<F>,
    opt: AdamW<F>,
    tc: TrainConfig,
    tokens_seen: u64,
}

impl<F: Scalar> Trainer<F> {
    pub fn new(params: TinyLmParams<F>, tc: TrainConfig) -> Result<Self, ModelError> {
        tc.validate()?;
        let opt = AdamW::new(params.layout(), &tc);
        Ok(Self {
            params,
            opt,
            tc,
            tokens_seen: 0,
        })
    }

    /// Continues from a checkpoint, restoring optimizer moments when present.
    pub fn resume(ckpt: Checkpoint<F>, tc: TrainConfig) -> Result<Self, ModelError> {
        let mut trainer = Self::new(ckpt.params, tc)?;
        if let Some((m, v)) = ckpt.optimizer {
            trainer.opt = trainer.opt.with_state(ckpt.step, m, v);
        } else {
            trainer.opt.step = ckpt.step;
        }
        trainer.tokens_seen = ckpt.tokens_seen;
        Ok(trainer)
    }

    pub fn params(&self) -> &TinyLmParams<F> {
        &self.params
    }

    pub fn into_params(self) -> TinyLmParams<F> {
        self.params
    }

    pub fn step(&self) -> u64 {
        self.opt.step
    }

    pub fn checkpoint(&self, seed: u64) -> Checkpoint<F> {
        Checkpoint {
            params: self.params.clone(),
            seed,
            step: self.opt.step,
            tokens_seen: self.tokens_seen,
            train_config: Some(self.tc.clone()),
            optimizer: Some((self.opt.m.clone(), self.opt.v.clone())),
        }
    }

    /// One optimizer step over `windows`; the loss is the mean over all of
    /// their target tokens.
    pub fn step_on(&mut self, windows: &[&[u32]], schedule: &LrSchedule) -> Result<LossPoint, ModelError> {
        let targets: usize = windows.iter().map(|w| w.len().saturating_sub(1)).sum();
        if targets == 0 {
            return Err(ModelError::NoData);
        }
        let step = self.opt.step + 1;
        let scale = 1.0 / targets as f64;
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(self.tc.seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut grads = vec![F::zero(); self.params.len()];
        let mut total = 0.0;
        for w in windows.iter().filter(|w| w.len() >= 2) {
            let (logits, cache) = forward_cached(&self.params, &w[..w.len() - 1], 0, Some(&mut dropout_rng))?;
            let mut dlogits = vec![F::zero(); logits.data.len()];
            total += nll_sum_and_grad(&logits, &w[1..], scale, &mut dlogits)?;
            backward(&self.params, &cache, &dlogits, &mut grads);
        }
        let loss = total / targets as f64;
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { step, loss });
        }
        clip_grad_norm(&mut grads, self.tc.grad_clip);
        let lr = schedule.lr_at(step);
        self.opt.update(self.params.as_mut_slice(), &grads, lr);
        if !self.params.all_finite() {
            return Err(ModelError::NonFiniteLoss { step, loss: f64::NAN });
        }
        self.tokens_seen += targets as u64;
        Ok(LossPoint {
            step,
            tokens_seen: self.tokens_seen,
            loss,
            lr,
        })
    }

    /// Trains over tokenized documents until the epoch count, token limit or
    /// step limit is reached, whichever comes first.
    pub fn fit(&mut self, docs: &[Vec<u32>]) -> Result<TrainReport, ModelError> {
        let windows = make_windows(docs, self.params.config().context_len);
        if windows.is_empty() {
            return Err(ModelError::NoData);
        }
        let per_step = self.tc.batch_size * self.tc.grad_accum;
        let steps_per_epoch = windows.len().div_ceil(per_step) as u64;
        let mut total_steps = self.opt.step + steps_per_epoch * self.tc.epochs as u64;
        if let Some(max) = self.tc.max_steps {
            total_steps = total_steps.min(max);
        }
        let schedule = LrSchedule::from_config(&self.tc, total_steps);

        let mut curve = Vec::new();
        let mut stop = StopReason::Epochs;
        let mut order: Vec<usize> = (0..windows.len()).collect();
        'epochs: for epoch in 0..self.tc.epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(self.tc.seed.wrapping_add(epoch as u64));
            order.shuffle(&mut rng);
            for chunk in order.chunks(per_step) {
                if self.tc.max_steps.is_some_and(|m| self.opt.step >= m) {
                    stop = StopReason::MaxSteps;
                    break 'epochs;
                }
                let batch: Vec<&[u32]> = chunk.iter().map(|&i| windows[i]).collect();
                curve.push(self.step_on(&batch, &schedule)?);
                if self.tc.token_limit.is_some_and(|lim| self.tokens_seen >= lim) {
                    stop = StopReason::TokenLimit;
                    break 'epochs;
                }
            }
        }
        if stop == StopReason::Epochs && self.tc.max_steps.is_some_and(|m| self.opt.step >= m) {
            stop = StopReason::MaxSteps;
        }
        Ok(TrainReport {
            curve,
            steps: self.opt.step,
            tokens_seen: self.tokens_seen,
            stop,
        })
    }
}

/// Initializes a model from `tc.seed` and trains it on `docs`.
pub fn train<F: Scalar>(
    docs: &[Vec<u32>],
    config: &TinyLmConfig,
    tc: &TrainConfig,
) -> Result<(TinyLmParams<F>, TrainReport), ModelError> {
    tc.validate()?;
    let params = init_params(config, tc.seed)?;
    let mut trainer = Trainer::new(params, tc.clone())?;
    let report = trainer.fit(docs)?;
    Ok((trainer.into_params(), report))
}
