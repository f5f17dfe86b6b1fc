//! Compute-optimal token budgets.

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusManifest;
use crate::filter::BudgetUnit;
use crate::{Error, Result};

/// Chinchilla tokens-per-parameter ratio.
pub const DEFAULT_TOKENS_PER_PARAM: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub non_embedding_params: u64,
    #[serde(default = "default_ratio")]
    pub tokens_per_param: f64,
    /// Overrides the ratio rule when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hard_limit: Option<u64>,
}

fn default_ratio() -> f64 {
    DEFAULT_TOKENS_PER_PARAM
}

pub const PRESETS: [&str; 3] = ["mini-1k", "base-1k", "paper-base"];

impl BudgetSpec {
    pub fn new(non_embedding_params: u64, tokens_per_param: f64) -> Self {
        Self {
            non_embedding_params,
            tokens_per_param,
            hard_limit: None,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let spec = match name {
            "mini-1k" => Self {
                hard_limit: Some(1_000_000_000),
                ..Self::new(28_000_000, DEFAULT_TOKENS_PER_PARAM)
            },
            "base-1k" => Self {
                hard_limit: Some(2_380_000_000),
                ..Self::new(85_000_000, DEFAULT_TOKENS_PER_PARAM)
            },
            // 2.4B word tokens per language for the 85M model.
            "paper-base" => Self::new(85_000_000, 2.4e9 / 85e6),
            other => {
                return Err(Error::Budget(format!(
                    "unknown budget preset {other:?} (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tokens_per_param.is_finite() && self.tokens_per_param > 0.0) {
            return Err(Error::Budget(format!("tokens_per_param must be positive, got {}", self.tokens_per_param)));
        }
        if self.hard_limit == Some(0) {
            return Err(Error::Budget("hard_limit must be positive".into()));
        }
        Ok(())
    }
}

pub fn token_budget(spec: &BudgetSpec) -> u64 {
    match spec.hard_limit {
        Some(h) => h,
        None => (spec.non_embedding_params as f64 * spec.tokens_per_param).round() as u64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Feasibility {
    Feasible { surplus: u64 },
    Shortfall { amount: u64 },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

pub fn feasibility(total: u64, budget: u64) -> Feasibility {
    if total >= budget {
        Feasibility::Feasible { surplus: total - budget }
    } else {
        Feasibility::Shortfall { amount: budget - total }
    }
}

/// Errors only in BPE mode when a document lacks a BPE count.
pub fn budget_feasible(manifest: &CorpusManifest, spec: &BudgetSpec, unit: BudgetUnit) -> Result<Feasibility> {
    let mut total = 0u64;
    for d in &manifest.documents {
        total += unit.tokens(d)?;
    }
    Ok(feasibility(total, token_budget(spec)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, LanguageTag};
    use proptest::prelude::*;

    #[test]
    fn presets() {
        assert_eq!(token_budget(&BudgetSpec::preset("mini-1k").unwrap()), 1_000_000_000);
        assert_eq!(token_budget(&BudgetSpec::preset("base-1k").unwrap()), 2_380_000_000);
        assert_eq!(token_budget(&BudgetSpec::preset("paper-base").unwrap()), 2_400_000_000);
        assert!(BudgetSpec::preset("huge").is_err());
        assert_eq!(token_budget(&BudgetSpec::new(85_000_000, 20.0)), 1_700_000_000);
    }

    #[test]
    fn shortfall_cases() {
        assert_eq!(
            feasibility(900_000_000, token_budget(&BudgetSpec::preset("base-1k").unwrap())),
            Feasibility::Shortfall { amount: 1_480_000_000 }
        );
        assert_eq!(feasibility(10, 10), Feasibility::Feasible { surplus: 0 });
        let hi = LanguageTag::new("hi").unwrap();
        let empty = CorpusManifest::new(hi.clone(), "clean");
        let spec = BudgetSpec::new(10, 2.0);
        assert_eq!(budget_feasible(&empty, &spec, BudgetUnit::Word).unwrap(), Feasibility::Shortfall { amount: 20 });
        let mut m = empty;
        m.documents.push(Document::new(hi, None, "a b c".into()));
        assert_eq!(budget_feasible(&m, &BudgetSpec::new(1, 3.0), BudgetUnit::Word).unwrap(), Feasibility::Feasible { surplus: 0 });
    }

    #[test]
    fn validation() {
        assert!(BudgetSpec::new(1, 0.0).validate().is_err());
        assert!(BudgetSpec::new(1, f64::NAN).validate().is_err());
        let mut s = BudgetSpec::new(1, 1.0);
        s.hard_limit = Some(0);
        assert!(s.validate().is_err());
    }

    proptest! {
        #[test]
        fn monotone_and_hard_limit_dominates(p in 0u64..1_000_000_000, q in 0u64..1_000_000_000, r in 0.01f64..100.0, hard in 1u64..u32::MAX as u64) {
            let (lo, hi) = (p.min(q), p.max(q));
            prop_assert!(token_budget(&BudgetSpec::new(lo, r)) <= token_budget(&BudgetSpec::new(hi, r)));
            prop_assert!(token_budget(&BudgetSpec::new(p, r)) <= token_budget(&BudgetSpec::new(p, r * 1.5)));
            let spec = BudgetSpec { hard_limit: Some(hard), ..BudgetSpec::new(p, r) };
            prop_assert_eq!(token_budget(&spec), hard);
        }
    }
}
