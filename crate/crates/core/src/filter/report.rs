//! Per-position NLL statistics and document length distributions.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use tinylm::{token_nll_trace, Scalar};

use super::score::Scorer;
use crate::corpus::CorpusManifest;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionBucket {
    pub bucket_start: usize,
    pub mean_nll: f64,
    /// Population variance.
    pub var_nll: f64,
    pub n: u64,
}

#[derive(Default, Clone, Copy)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }
}

/// NLL trace of every document (truncated to the scorer context) aggregated
/// by target position in buckets of `bucket_size`. Position 0 is the first
/// predicted token.
pub fn position_stats<F: Scalar>(manifest: &CorpusManifest, scorer: &Scorer<'_, F>, bucket_size: usize) -> Result<Vec<PositionBucket>> {
    if bucket_size == 0 {
        return Err(Error::Filter("bucket size must be positive".into()));
    }
    let ctx = scorer.params.config().context_len;
    let traces: Vec<Vec<f64>> = manifest
        .documents
        .par_iter()
        .map(|d| {
            let mut ids = scorer.ids(&d.text);
            ids.truncate(ctx);
            Ok(token_nll_trace(scorer.params, &ids)?)
        })
        .collect::<Result<_>>()?;

    let mut acc: Vec<Welford> = Vec::new();
    for trace in &traces {
        for (pos, &x) in trace.iter().enumerate() {
            let b = pos / bucket_size;
            if b >= acc.len() {
                acc.resize(b + 1, Welford::default());
            }
            acc[b].push(x);
        }
    }
    Ok(acc
        .iter()
        .enumerate()
        .filter(|(_, w)| w.n > 0)
        .map(|(b, w)| PositionBucket {
            bucket_start: b * bucket_size,
            mean_nll: w.mean,
            var_nll: w.m2 / w.n as f64,
            n: w.n,
        })
        .collect())
}

pub fn position_stats_csv(buckets: &[PositionBucket]) -> String {
    let mut s = String::from("bucket_start,mean_nll,var_nll,n\n");
    for b in buckets {
        let _ = writeln!(s, "{},{},{},{}", b.bucket_start, b.mean_nll, b.var_nll, b.n);
    }
    s
}

/// Linear-interpolation quantile of sorted data (the common "type 7"
/// definition).
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub start: u64,
    pub end: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthSummary {
    pub partition: String,
    pub n: usize,
    pub total_tokens: u64,
    pub p10: Option<f64>,
    pub p50: Option<f64>,
    pub p90: Option<f64>,
    pub histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthReport {
    pub bin_width: u64,
    pub partitions: Vec<LengthSummary>,
}

fn summarize(name: &str, m: &CorpusManifest, bin_width: u64) -> LengthSummary {
    let mut lens: Vec<u64> = m.documents.iter().map(|d| d.word_tokens).collect();
    lens.sort_unstable();
    let sorted: Vec<f64> = lens.iter().map(|&x| x as f64).collect();
    let mut histogram = Vec::new();
    if let Some(&max) = lens.last() {
        let bins = max / bin_width + 1;
        histogram = (0..bins)
            .map(|b| HistogramBin {
                start: b * bin_width,
                end: (b + 1) * bin_width,
                count: 0,
            })
            .collect();
        for &l in &lens {
            histogram[(l / bin_width) as usize].count += 1;
        }
    }
    LengthSummary {
        partition: name.to_string(),
        n: lens.len(),
        total_tokens: lens.iter().sum(),
        p10: quantile(&sorted, 0.1),
        p50: quantile(&sorted, 0.5),
        p90: quantile(&sorted, 0.9),
        histogram,
    }
}

/// Word-token length distribution of the kept and dropped partitions.
pub fn length_report(kept: &CorpusManifest, dropped: &CorpusManifest, bin_width: u64) -> LengthReport {
    let bin_width = bin_width.max(1);
    LengthReport {
        bin_width,
        partitions: vec![summarize("kept", kept, bin_width), summarize("dropped", dropped, bin_width)],
    }
}

impl LengthReport {
    /// `partition,n,total_tokens,p10,p50,p90`; missing quantiles are empty.
    pub fn summary_csv(&self) -> String {
        let fmt = |q: Option<f64>| q.map(|v| v.to_string()).unwrap_or_default();
        let mut s = String::from("partition,n,total_tokens,p10,p50,p90\n");
        for p in &self.partitions {
            let _ = writeln!(s, "{},{},{},{},{},{}", p.partition, p.n, p.total_tokens, fmt(p.p10), fmt(p.p50), fmt(p.p90));
        }
        s
    }

    /// `partition,bin_start,bin_end,count`.
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("partition,bin_start,bin_end,count\n");
        for p in &self.partitions {
            for b in &p.histogram {
                let _ = writeln!(s, "{},{},{},{}", p.partition, b.start, b.end, b.count);
            }
        }
        s
    }
}
