//! Percentile bootstrap intervals and benchmark metrics.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, Effect, EffectEstimates};
use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorId};
use crate::nuisance::NuisanceSpec;
use crate::rng;

pub const DEFAULT_BOOTSTRAP_B: usize = 100;
pub const CI_LEVEL_LOW: f64 = 0.025;
pub const CI_LEVEL_HIGH: f64 = 0.975;
/// Normal quantile for the 95% repetition bands.
pub const BAND_Z: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub point: EffectEstimates,
    pub ci_low: EffectEstimates,
    pub ci_high: EffectEstimates,
    pub b: usize,
    /// Replicates dropped because the resample was degenerate.
    pub n_failed: usize,
}

/// Empirical `q`-quantile of sorted values: the smallest `x_(j)` with
/// `j/k ≥ q`. Duplicating every value leaves the result unchanged.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let k = sorted.len();
    assert!(k > 0, "percentile of an empty sample");
    let j = ((q * k as f64) - 1e-9).ceil().clamp(1.0, k as f64) as usize;
    sorted[j - 1]
}

/// Row indices of bootstrap replicate `r`.
fn resample_rows(n: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = rng::stream(&[seed], r as u64);
    (0..n)
        .map(|_| ((rng::uniform(&mut rng) * n as f64) as usize).min(n - 1))
        .collect()
}

/// Point estimate plus a 95% percentile interval from `b` resamples of the
/// rows with replacement. Replicate `r` draws rows from stream `(seed, r)`
/// and fits nuisances with seed `(spec.seed, r)`. Replicates failing with a
/// data degeneracy (one arm, one class, vanishing weights) are dropped and
/// counted.
pub fn bootstrap_ci(
    id: EstimatorId,
    ds: &Dataset,
    spec: &NuisanceSpec,
    b: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if b < 2 {
        return Err(Error::Config(format!("bootstrap needs B >= 2, got {b}")));
    }
    let point = estimators::estimate(id, ds, spec)?.effects;
    let outcomes: Vec<Result<EffectEstimates>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let sample = ds.select_rows(&resample_rows(ds.n(), seed, r));
            let spec_r = NuisanceSpec {
                seed: rng::derive_seed(&[spec.seed, r as u64]),
                ..spec.clone()
            };
            estimators::run(id, &sample, &spec_r)
        })
        .collect();

    let mut replicates = Vec::with_capacity(b);
    let mut n_failed = 0;
    for outcome in outcomes {
        match outcome {
            Ok(e) => replicates.push(e),
            Err(e) if e.is_data_degeneracy() => n_failed += 1,
            Err(e) => return Err(e),
        }
    }
    if replicates.is_empty() {
        return Err(Error::AllReplicatesFailed(b));
    }
    let bounds = |q: f64| {
        EffectEstimates::from_fn(|effect| {
            let mut v: Vec<f64> = replicates.iter().map(|r| r.get(effect)).collect();
            v.sort_unstable_by(f64::total_cmp);
            percentile(&v, q)
        })
    };
    Ok(BootstrapResult {
        point,
        ci_low: bounds(CI_LEVEL_LOW),
        ci_high: bounds(CI_LEVEL_HIGH),
        b,
        n_failed,
    })
}

/// `lo ≤ truth ≤ hi`.
pub fn covered(truth: f64, lo: f64, hi: f64) -> bool {
    !(truth < lo || truth > hi)
}

/// One estimator run on one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRecord {
    pub setting_id: u32,
    pub n: usize,
    pub estimator: EstimatorId,
    /// Nuisance variant, e.g. `linear+crossfit`.
    pub variant: String,
    pub crossfit: bool,
    pub repetition: usize,
    pub data_seed: u64,
    pub truth: EffectEstimates,
    /// `None` when the estimator failed on this dataset.
    pub estimate: Option<EffectEstimates>,
    pub error: Option<String>,
    /// `(ci_low, ci_high)` when intervals were requested and obtained.
    pub ci: Option<(EffectEstimates, EffectEstimates)>,
    pub bootstrap_b: usize,
    pub bootstrap_failed: usize,
    pub wall_time_ms: f64,
}

impl BenchmarkRecord {
    /// `estimate − truth`.
    pub fn absolute_error(&self) -> Option<EffectEstimates> {
        self.estimate
            .map(|e| EffectEstimates::from_fn(|f| e.get(f) - self.truth.get(f)))
    }

    /// `(estimate − truth) / truth`.
    pub fn relative_error(&self) -> Option<EffectEstimates> {
        self.estimate.map(|e| {
            EffectEstimates::from_fn(|f| (e.get(f) - self.truth.get(f)) / self.truth.get(f))
        })
    }

    pub fn covered(&self, effect: Effect) -> Option<bool> {
        self.ci
            .map(|(lo, hi)| covered(self.truth.get(effect), lo.get(effect), hi.get(effect)))
    }

    pub fn ci_width(&self, effect: Effect) -> Option<f64> {
        self.ci.map(|(lo, hi)| hi.get(effect) - lo.get(effect))
    }
}

/// Mean and the normal band `mean ± 1.96·sd/√R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

impl Band {
    pub fn of(values: &[f64]) -> Option<Band> {
        let r = values.len();
        if r == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / r as f64;
        let half = if r > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
            BAND_Z * (var / r as f64).sqrt()
        } else {
            0.0
        };
        Some(Band {
            mean,
            low: mean - half,
            high: mean + half,
            count: r,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectSummary {
    pub effect: Effect,
    pub relative_error: Option<Band>,
    pub absolute_error: Option<Band>,
    /// Share of repetitions whose interval holds the truth.
    pub coverage: Option<f64>,
    pub mean_ci_width: Option<f64>,
}

/// Repetition summary of one (setting, n, estimator, variant) group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub setting_id: u32,
    pub n: usize,
    pub estimator: EstimatorId,
    pub variant: String,
    pub repetitions: usize,
    pub failed: usize,
    pub bootstrap_failed: usize,
    pub effects: Vec<EffectSummary>,
}

fn mean_of(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Summarizes records assumed to share one group key.
pub fn summarize(records: &[&BenchmarkRecord]) -> Result<GroupSummary> {
    let first = records.first().ok_or(Error::EmptyGroup)?;
    let ok: Vec<&BenchmarkRecord> = records.iter().copied().filter(|r| r.estimate.is_some()).collect();
    let effects = Effect::ALL
        .into_iter()
        .map(|effect| {
            let rel: Vec<f64> = ok.iter().filter_map(|r| r.relative_error()).map(|e| e.get(effect)).collect();
            let abs: Vec<f64> = ok.iter().filter_map(|r| r.absolute_error()).map(|e| e.get(effect)).collect();
            let cov: Vec<f64> = ok
                .iter()
                .filter_map(|r| r.covered(effect))
                .map(|c| f64::from(u8::from(c)))
                .collect();
            let width: Vec<f64> = ok.iter().filter_map(|r| r.ci_width(effect)).collect();
            EffectSummary {
                effect,
                relative_error: Band::of(&rel),
                absolute_error: Band::of(&abs),
                coverage: mean_of(&cov),
                mean_ci_width: mean_of(&width),
            }
        })
        .collect();
    Ok(GroupSummary {
        setting_id: first.setting_id,
        n: first.n,
        estimator: first.estimator,
        variant: first.variant.clone(),
        repetitions: records.len(),
        failed: records.len() - ok.len(),
        bootstrap_failed: records.iter().map(|r| r.bootstrap_failed).sum(),
        effects,
    })
}

/// Groups records by (setting, n, estimator, variant), in order of first
/// appearance, and summarizes each group.
pub fn aggregate(records: &[BenchmarkRecord]) -> Result<Vec<GroupSummary>> {
    if records.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let mut keys: Vec<(u32, usize, EstimatorId, &str)> = Vec::new();
    let mut groups: Vec<Vec<&BenchmarkRecord>> = Vec::new();
    for r in records {
        let key = (r.setting_id, r.n, r.estimator, r.variant.as_str());
        match keys.iter().position(|k| *k == key) {
            Some(g) => groups[g].push(r),
            None => {
                keys.push(key);
                groups.push(vec![r]);
            }
        }
    }
    groups.iter().map(|g| summarize(g)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_rule() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.025), 1.0);
        assert_eq!(percentile(&v, 0.975), 4.0);
        assert_eq!(percentile(&v, 0.5), 2.0);
        assert_eq!(percentile(&[3.0, 8.0], 0.025), 3.0);
        assert_eq!(percentile(&[3.0, 8.0], 0.975), 8.0);
        // 100 replicates: 3rd and 98th order statistics
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.025), 3.0);
        assert_eq!(percentile(&v, 0.975), 98.0);
    }

    #[test]
    fn coverage_predicate() {
        assert!(covered(1.0, 1.0, 2.0));
        assert!(covered(2.0, 1.0, 2.0));
        assert!(!covered(0.5, 1.0, 2.0));
        assert!(!covered(2.5, 1.0, 2.0));
    }

    #[test]
    fn band_of_single_value() {
        let b = Band::of(&[0.3]).unwrap();
        assert_eq!((b.mean, b.low, b.high), (0.3, 0.3, 0.3));
        assert!(Band::of(&[]).is_none());
        let b = Band::of(&[0.2, -0.2]).unwrap();
        assert_eq!(b.mean, 0.0);
    }

    #[test]
    fn empty_aggregate() {
        assert!(matches!(aggregate(&[]), Err(Error::EmptyGroup)));
    }
}
