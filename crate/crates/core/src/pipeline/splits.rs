//! Named pretraining splits drawn to a token budget.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::budget::{feasibility, token_budget, Feasibility};
use crate::corpus::{CorpusManifest, Stage};
use crate::filter::BudgetUnit;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSource {
    Clean,
    /// Clean documents disjoint from the `Clean` split.
    CleanExtension,
    SyntheticUnfiltered,
    SyntheticFiltered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub name: String,
    pub source: SplitSource,
    pub target_tokens: u64,
}

/// Split names follow `XX-clean`, `syn-XX_yy-unfiltered`,
/// `syn-XX_yy-filtered` and `XX-clean+N` for an N% clean extension.
pub fn plan_splits(cfg: &PipelineConfig) -> Result<Vec<SplitPlan>> {
    let budget = token_budget(&cfg.budget.spec()?);
    let (tgt, src) = (cfg.run.tgt.code(), cfg.run.src.code());
    let s = &cfg.splits;
    let mut plans = Vec::new();
    let mut push = |name: String, source, target_tokens| {
        plans.push(SplitPlan {
            name,
            source,
            target_tokens,
        })
    };
    if s.clean {
        push(format!("{tgt}-clean"), SplitSource::Clean, budget);
    }
    if s.unfiltered {
        push(format!("syn-{tgt}_{src}-unfiltered"), SplitSource::SyntheticUnfiltered, budget);
    }
    if s.filtered {
        push(format!("syn-{tgt}_{src}-filtered"), SplitSource::SyntheticFiltered, budget);
    }
    if s.extension > 0.0 {
        let pct = (s.extension * 100.0).round() as u64;
        push(format!("{tgt}-clean+{pct}"), SplitSource::CleanExtension, (budget as f64 * s.extension).round() as u64);
    }
    Ok(plans)
}

/// Seeded random order of `manifest`'s documents.
fn shuffled(manifest: &CorpusManifest, seed: u64, stream: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..manifest.len()).collect();
    order.shuffle(&mut rng);
    order
}

/// Takes documents from `order` until their tokens reach `target`. Returns
/// the taken indices and how many entries of `order` were consumed.
fn take_to_budget(manifest: &CorpusManifest, order: &[usize], target: u64, unit: BudgetUnit) -> Result<(Vec<usize>, usize)> {
    let mut taken = Vec::new();
    let mut tokens = 0u64;
    let mut used = 0;
    for &i in order {
        if tokens >= target {
            break;
        }
        tokens += unit.tokens(&manifest.documents[i])?;
        taken.push(i);
        used += 1;
    }
    Ok((taken, used))
}

fn require(name: &str, have: u64, target: u64) -> Result<()> {
    match feasibility(have, target) {
        Feasibility::Feasible { .. } => Ok(()),
        Feasibility::Shortfall { amount } => Err(Error::Budget(format!(
            "split {name} needs {target} tokens but its pool is {amount} short"
        ))),
    }
}

fn collect(manifest: &CorpusManifest, mut idx: Vec<usize>) -> CorpusManifest {
    idx.sort_unstable();
    let docs = idx.into_iter().map(|i| manifest.documents[i].clone()).collect();
    manifest.derive(Stage::Split.as_str(), docs)
}

pub struct SplitPools<'a> {
    pub clean: &'a CorpusManifest,
    pub synthetic: &'a CorpusManifest,
    pub filtered: &'a CorpusManifest,
}

/// Draws every planned split. Clean and unfiltered-synthetic splits are
/// uniform seeded samples; the extension continues the clean split's
/// random order so the two never share a document. The filtered split is
/// the filter stage's output, which was already selected to the budget.
pub fn materialize_splits(
    plans: &[SplitPlan],
    pools: &SplitPools<'_>,
    unit: BudgetUnit,
    seed: u64,
) -> Result<Vec<(SplitPlan, CorpusManifest)>> {
    let clean_order = shuffled(pools.clean, seed, 1);
    let clean_total = pools.clean.documents.iter().map(|d| unit.tokens(d)).sum::<Result<u64>>()?;
    let base = plans
        .iter()
        .find(|p| p.source == SplitSource::Clean)
        .map(|p| p.target_tokens)
        .unwrap_or(0);
    let (_, base_used) = take_to_budget(pools.clean, &clean_order, base, unit)?;

    let mut out = Vec::new();
    for plan in plans {
        let name = plan.name.as_str();
        let manifest = match plan.source {
            SplitSource::Clean => {
                require(name, clean_total, plan.target_tokens)?;
                collect(pools.clean, clean_order[..base_used].to_vec())
            }
            SplitSource::CleanExtension => {
                let rest = &clean_order[base_used..];
                let have = rest.iter().map(|&i| unit.tokens(&pools.clean.documents[i])).sum::<Result<u64>>()?;
                require(name, have, plan.target_tokens)?;
                let (taken, _) = take_to_budget(pools.clean, rest, plan.target_tokens, unit)?;
                collect(pools.clean, taken)
            }
            SplitSource::SyntheticUnfiltered => {
                let total = pools.synthetic.documents.iter().map(|d| unit.tokens(d)).sum::<Result<u64>>()?;
                require(name, total, plan.target_tokens)?;
                let order = shuffled(pools.synthetic, seed, 2);
                let (taken, _) = take_to_budget(pools.synthetic, &order, plan.target_tokens, unit)?;
                collect(pools.synthetic, taken)
            }
            SplitSource::SyntheticFiltered => {
                let total = pools.filtered.documents.iter().map(|d| unit.tokens(d)).sum::<Result<u64>>()?;
                require(name, total, plan.target_tokens)?;
                pools.filtered.derive(Stage::Split.as_str(), pools.filtered.documents.clone())
            }
        };
        out.push((plan.clone(), manifest));
    }
    Ok(out)
}
