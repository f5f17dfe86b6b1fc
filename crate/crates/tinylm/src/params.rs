use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::layout::{ParamLayout, TensorKind};
use crate::{ModelError, Scalar, TinyLmConfig};

/// Standard deviation of the default weight initialization.
pub const INIT_STD: f64 = 0.02;

/// Model weights stored in one flat buffer, addressed through a [`ParamLayout`].
#[derive(Debug, Clone)]
pub struct TinyLmParams<F: Scalar> {
    config: TinyLmConfig,
    layout: ParamLayout,
    pub(crate) data: Vec<F>,
}

impl<F: Scalar> PartialEq for TinyLmParams<F> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.data == other.data
    }
}

/// Initializes a model: normal(0, 0.02) weights, residual projections scaled by
/// `1/sqrt(2 * num_blocks)`, norms at identity.
pub fn init_params<F: Scalar>(config: &TinyLmConfig, seed: u64) -> Result<TinyLmParams<F>, ModelError> {
    init_params_with_std(config, seed, INIT_STD)
}

pub fn init_params_with_std<F: Scalar>(
    config: &TinyLmConfig,
    seed: u64,
    std: f64,
) -> Result<TinyLmParams<F>, ModelError> {
    config.validate()?;
    let layout = ParamLayout::new(config);
    let mut data = vec![F::zero(); layout.total()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let residual_scale = 1.0 / (2.0 * config.num_blocks as f64).sqrt();
    let normal = Normal::new(0.0, std).map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
    for spec in layout.tensors() {
        let slot = &mut data[spec.range.clone()];
        match spec.kind {
            TensorKind::NormGain => slot.fill(F::one()),
            TensorKind::NormBias => slot.fill(F::zero()),
            TensorKind::Embedding | TensorKind::Matrix => {
                for x in slot.iter_mut() {
                    *x = F::lit(normal.sample(&mut rng));
                }
            }
            TensorKind::ResidualMatrix => {
                for x in slot.iter_mut() {
                    *x = F::lit(normal.sample(&mut rng) * residual_scale);
                }
            }
        }
    }
    Ok(TinyLmParams {
        config: config.clone(),
        layout,
        data,
    })
}

impl<F: Scalar> TinyLmParams<F> {
    pub fn from_vec(config: &TinyLmConfig, data: Vec<F>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = ParamLayout::new(config);
        if data.len() != layout.total() {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                layout.total(),
                data.len()
            )));
        }
        Ok(Self {
            config: config.clone(),
            layout,
            data,
        })
    }

    pub fn config(&self) -> &TinyLmConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Mutable view of one named tensor, e.g. `"head"` or `"blocks.0.attn.wq"`.
    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [F]> {
        let range = self
            .layout
            .tensors()
            .iter()
            .find(|t| t.name == name)?
            .range
            .clone();
        Some(&mut self.data[range])
    }

    pub fn tensor(&self, name: &str) -> Option<&[F]> {
        let range = self.layout.tensors().iter().find(|t| t.name == name)?.range.clone();
        Some(&self.data[range])
    }

    /// Converts between precisions (e.g. an `f32` checkpoint to `f64` for checks).
    pub fn cast<G: Scalar>(&self) -> TinyLmParams<G> {
        TinyLmParams {
            config: self.config.clone(),
            layout: self.layout.clone(),
            data: self.data.iter().map(|x| G::lit(x.as_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TinyLmConfig {
        TinyLmConfig::new(50, 16, 2, 4, 16)
    }

    #[test]
    fn same_seed_same_params() {
        let a: TinyLmParams<f32> = init_params(&small(), 7).unwrap();
        let b: TinyLmParams<f32> = init_params(&small(), 7).unwrap();
        let c: TinyLmParams<f32> = init_params(&small(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = TinyLmConfig::new(50, 65, 1, 16, 16);
        assert!(init_params::<f32>(&cfg, 0).is_err());
    }

    #[test]
    fn init_scale_matches_half_normal_mean() {
        // E|X| for X ~ N(0, s^2) is s * sqrt(2/pi); the standard error of the
        // sample mean of |X| is s * sqrt(1 - 2/pi) / sqrt(n).
        let cfg = TinyLmConfig::new(1000, 100, 1, 4, 8);
        let p: TinyLmParams<f64> = init_params(&cfg, 3).unwrap();
        let emb = p.tensor("tok_emb").unwrap();
        assert_eq!(emb.len(), 100_000);
        let n = emb.len() as f64;
        let mean_abs = emb.iter().map(|x| x.abs()).sum::<f64>() / n;
        let expected = INIT_STD * (2.0 / std::f64::consts::PI).sqrt();
        let se = INIT_STD * (1.0 - 2.0 / std::f64::consts::PI).sqrt() / n.sqrt();
        assert!((mean_abs - expected).abs() < 3.0 * se, "{mean_abs} vs {expected}");
    }

    #[test]
    fn norms_start_at_identity_and_residuals_are_scaled() {
        let cfg = small();
        let p: TinyLmParams<f64> = init_params(&cfg, 1).unwrap();
        assert!(p.tensor("blocks.0.ln1.gain").unwrap().iter().all(|&x| x == 1.0));
        assert!(p.tensor("lnf.bias").unwrap().iter().all(|&x| x == 0.0));
        let rms = |xs: &[f64]| (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
        let wq = rms(p.tensor("blocks.0.attn.wq").unwrap());
        let wo = rms(p.tensor("blocks.0.attn.wo").unwrap());
        assert!(wo < wq);
    }
}
