//! Architecture and optimizer configuration, including the published presets.

use serde::{Deserialize, Serialize};

use crate::ModelError;

/// Vocabulary size of the shared multilingual tokenizer used by the presets.
pub const PRESET_VOCAB: usize = 56_000;

/// Architecture of a [`crate::TinyLmParams`] model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyLmConfig {
    pub vocab_size: usize,
    pub n_embed: usize,
    pub num_blocks: usize,
    pub num_heads: usize,
    pub context_len: usize,
    /// FFN hidden width as a multiple of `n_embed`.
    pub ffn_scaling: usize,
    pub attn_dropout: f64,
    pub ffn_dropout: f64,
    pub resid_dropout: f64,
    /// Number of rotated coordinate pairs per head. The first `2 * rope_dim`
    /// coordinates of every query/key head are rotated, the rest pass through.
    pub rope_dim: usize,
    pub rope_base: f64,
    /// Reuse the token embedding as the output projection.
    pub tied_embeddings: bool,
    pub norm_eps: f64,
}

impl TinyLmConfig {
    /// Builds a config with the usual defaults for everything but the shape.
    pub fn new(
        vocab_size: usize,
        n_embed: usize,
        num_blocks: usize,
        num_heads: usize,
        context_len: usize,
    ) -> Self {
        let head_size = if num_heads == 0 { 0 } else { n_embed / num_heads };
        Self {
            vocab_size,
            n_embed,
            num_blocks,
            num_heads,
            context_len,
            ffn_scaling: 4,
            attn_dropout: 0.0,
            ffn_dropout: 0.0,
            resid_dropout: 0.0,
            rope_dim: head_size / 2,
            rope_base: 10_000.0,
            tied_embeddings: false,
            norm_eps: 1e-5,
        }
    }

    /// `mini-1k`: 768 wide, 4 blocks, 16 heads, 1024 context.
    pub fn mini_1k() -> Self {
        Self::with_preset_dropout(Self::new(PRESET_VOCAB, 768, 4, 16, 1024))
    }

    /// `base-1k`: 768 wide, 12 blocks, 12 heads, 1024 context (GPT-2 base shape).
    pub fn base_1k() -> Self {
        Self::with_preset_dropout(Self::new(PRESET_VOCAB, 768, 12, 12, 1024))
    }

    /// `mini-4k`: the filtering scorer, `mini-1k` with a 4096-token context.
    pub fn mini_4k() -> Self {
        Self {
            context_len: 4096,
            ..Self::mini_1k()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "mini-1k" => Some(Self::mini_1k()),
            "base-1k" => Some(Self::base_1k()),
            "mini-4k" => Some(Self::mini_4k()),
            _ => None,
        }
    }

    fn with_preset_dropout(mut self) -> Self {
        self.attn_dropout = 0.1;
        self.ffn_dropout = 0.1;
        self.resid_dropout = 0.1;
        self
    }

    pub fn head_size(&self) -> usize {
        self.n_embed / self.num_heads
    }

    pub fn ffn_width(&self) -> usize {
        self.ffn_scaling * self.n_embed
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        if self.n_embed == 0 || self.num_heads == 0 || self.num_blocks == 0 {
            return bad("n_embed, num_heads and num_blocks must be positive".into());
        }
        if self.n_embed % self.num_heads != 0 {
            return bad(format!(
                "n_embed {} is not divisible by num_heads {}",
                self.n_embed, self.num_heads
            ));
        }
        if 2 * self.rope_dim > self.head_size() {
            return bad(format!(
                "rope_dim {} needs {} coordinates but head_size is {}",
                self.rope_dim,
                2 * self.rope_dim,
                self.head_size()
            ));
        }
        if self.context_len < 2 {
            return bad("context_len must be at least 2".into());
        }
        if self.ffn_scaling == 0 {
            return bad("ffn_scaling must be positive".into());
        }
        for (name, p) in [
            ("attn_dropout", self.attn_dropout),
            ("ffn_dropout", self.ffn_dropout),
            ("resid_dropout", self.resid_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1), got {p}"));
            }
        }
        if !(self.rope_base > 0.0) || !(self.norm_eps > 0.0) {
            return bad("rope_base and norm_eps must be positive".into());
        }
        Ok(())
    }

    /// Parameter count excluding the token embedding and output projection.
    pub fn non_embedding_params(&self) -> u64 {
        let d = self.n_embed as u64;
        let f = self.ffn_width() as u64;
        let per_block = 4 * d * d + 2 * d * f + 4 * d;
        self.num_blocks as u64 * per_block + 2 * d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Linear warmup then cosine decay to `min_lr_ratio * lr`.
    WarmupCosine,
    /// Linear warmup then constant.
    WarmupConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: u64,
    pub schedule: Schedule,
    pub min_lr_ratio: f64,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub grad_clip: f64,
    pub epochs: usize,
    /// Stop once this many target tokens have been trained on.
    pub token_limit: Option<u64>,
    pub max_steps: Option<u64>,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl TrainConfig {
    /// Optimizer settings shared by the `mini-1k` and `base-1k` runs.
    pub fn reference() -> Self {
        Self {
            lr: 6e-4,
            weight_decay: 0.1,
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-5,
            warmup_steps: 5000,
            schedule: Schedule::WarmupCosine,
            min_lr_ratio: 0.1,
            batch_size: 48,
            grad_accum: 8,
            grad_clip: 1.0,
            epochs: 2,
            token_limit: None,
            max_steps: None,
            seed: 42,
            precision: Precision::F32,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::InvalidConfig(msg.to_string()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must be in [0, 1)");
        }
        if !(self.grad_clip > 0.0) {
            return bad("gradient clip must be positive");
        }
        if !(self.eps > 0.0) || self.weight_decay < 0.0 {
            return bad("eps must be positive and weight_decay non-negative");
        }
        if self.batch_size == 0 || self.grad_accum == 0 || self.epochs == 0 {
            return bad("batch_size, grad_accum and epochs must be positive");
        }
        if !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return bad("min_lr_ratio must be in [0, 1]");
        }
        if self.token_limit == Some(0) {
            return Err(ModelError::ZeroBudget);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in ["mini-1k", "base-1k", "mini-4k"] {
            let c = TinyLmConfig::preset(name).unwrap();
            c.validate().unwrap();
            assert_eq!(c.rope_dim, c.head_size() / 2);
        }
        assert!(TinyLmConfig::preset("huge").is_none());
    }

    #[test]
    fn non_embedding_params_match_model_sizes() {
        // 28M and 85M non-embedding parameters.
        let mini = TinyLmConfig::mini_1k().non_embedding_params() as f64;
        let base = TinyLmConfig::base_1k().non_embedding_params() as f64;
        assert!((mini / 1e6 - 28.0).abs() < 0.5, "{mini}");
        assert!((base / 1e6 - 85.0).abs() < 0.5, "{base}");
    }

    #[test]
    fn rejects_indivisible_heads() {
        let c = TinyLmConfig::new(100, 65, 1, 16, 8);
        assert!(matches!(c.validate(), Err(ModelError::InvalidConfig(_))));
    }

    #[test]
    fn train_config_checks() {
        TrainConfig::reference().validate().unwrap();
        let mut tc = TrainConfig::reference();
        tc.token_limit = Some(0);
        assert!(matches!(tc.validate(), Err(ModelError::ZeroBudget)));
        tc.token_limit = None;
        tc.beta2 = 1.0;
        assert!(tc.validate().is_err());
    }
}
