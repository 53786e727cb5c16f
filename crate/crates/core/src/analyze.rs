//! Estimation on a user-supplied CSV file.

use std::fs::File;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::benchmark::EstimatorConfig;
use crate::data::{Dataset, Effect, EffectEstimates, MediatorKind};
use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorId};
use crate::inference;
use crate::io::{read_dataset_csv, ColumnRoles};
use crate::nuisance::NuisanceSpec;
use crate::rng;
use crate::simulation::{overlap_diagnostic, OverlapDiagnostic};

/// Declared mediator type of an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediatorType {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub csv_path: PathBuf,
    #[serde(flatten)]
    pub roles: ColumnRoles,
    /// Inferred from the data when absent.
    #[serde(default)]
    pub mediator_type: Option<MediatorType>,
    pub estimators: Vec<EstimatorConfig>,
    #[serde(default)]
    pub bootstrap_b: usize,
    #[serde(default)]
    pub seed: u64,
}

impl AnalyzeConfig {
    pub fn validate(&self) -> Result<()> {
        self.roles.validate()?;
        if self.estimators.is_empty() {
            return Err(Error::Config("estimators must be non-empty".into()));
        }
        if self.bootstrap_b == 1 {
            return Err(Error::Config("bootstrap_b must be 0 or at least 2".into()));
        }
        for e in &self.estimators {
            e.nuisance.validate()?;
        }
        Ok(())
    }

    fn mediator_kind(&self) -> Option<MediatorKind> {
        self.mediator_type.map(|t| match t {
            MediatorType::Binary => MediatorKind::Binary1D,
            MediatorType::Continuous => MediatorKind::continuous(self.roles.mediators.len()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub estimator: EstimatorId,
    pub variant: String,
    pub seed: u64,
    pub effects: Option<EffectEstimates>,
    pub ci_low: Option<EffectEstimates>,
    pub ci_high: Option<EffectEstimates>,
    pub bootstrap_failed: usize,
    pub nuisance_models: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapSummary {
    pub min: [f64; 2],
    pub max: [f64; 2],
    /// Share of rows with `ρ̂` in the outermost histogram bins.
    pub extreme_share: f64,
    pub histogram: OverlapDiagnostic,
}

/// Two estimators whose intervals for one effect lie on opposite sides of
/// zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Disagreement {
    pub effect: Effect,
    pub positive: String,
    pub negative: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeReport {
    pub config: AnalyzeConfig,
    pub mediator_kind: MediatorKind,
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub rows_used: usize,
    pub overlap: Option<OverlapSummary>,
    pub results: Vec<EstimatorResult>,
    pub estimator_disagreement: bool,
    pub disagreements: Vec<Disagreement>,
}

/// Reads the configured CSV and analyzes it.
pub fn analyze(cfg: &AnalyzeConfig) -> Result<AnalyzeReport> {
    cfg.validate()?;
    let loaded = read_dataset_csv(File::open(&cfg.csv_path)?, &cfg.roles, cfg.mediator_kind())?;
    let mut report = analyze_dataset(cfg, &loaded.dataset)?;
    report.rows_read = loaded.rows_read;
    report.rows_dropped = loaded.rows_dropped;
    Ok(report)
}

/// Runs every configured estimator on an in-memory dataset. Estimator
/// failures are reported per estimator and do not abort the analysis.
pub fn analyze_dataset(cfg: &AnalyzeConfig, ds: &Dataset) -> Result<AnalyzeReport> {
    cfg.validate()?;
    ds.validate()?;
    let overlap = overlap_diagnostic(ds, &NuisanceSpec::default())
        .ok()
        .map(|h| OverlapSummary {
            min: h.min,
            max: h.max,
            extreme_share: h.extreme_share(),
            histogram: h,
        });

    let results: Vec<EstimatorResult> = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(slot, ec)| run_one(cfg, ds, slot, ec))
        .collect();
    let disagreements = find_disagreements(&results);
    Ok(AnalyzeReport {
        config: cfg.clone(),
        mediator_kind: ds.mediator_kind,
        rows_read: ds.n(),
        rows_dropped: 0,
        rows_used: ds.n(),
        overlap,
        estimator_disagreement: !disagreements.is_empty(),
        disagreements,
        results,
    })
}

fn run_one(cfg: &AnalyzeConfig, ds: &Dataset, slot: usize, ec: &EstimatorConfig) -> EstimatorResult {
    let seed = rng::derive_seed(&[cfg.seed, slot as u64]);
    let spec = NuisanceSpec {
        seed,
        ..ec.nuisance.clone()
    };
    let mut out = EstimatorResult {
        estimator: ec.estimator,
        variant: ec.nuisance.label(),
        seed,
        effects: None,
        ci_low: None,
        ci_high: None,
        bootstrap_failed: 0,
        nuisance_models: Vec::new(),
        error: None,
    };
    match estimators::estimate(ec.estimator, ds, &spec) {
        Ok(report) => {
            out.effects = Some(report.effects);
            out.nuisance_models = report.nuisance_models;
        }
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    }
    if cfg.bootstrap_b >= 2 {
        match inference::bootstrap_ci(ec.estimator, ds, &spec, cfg.bootstrap_b, seed) {
            Ok(b) => {
                out.ci_low = Some(b.ci_low);
                out.ci_high = Some(b.ci_high);
                out.bootstrap_failed = b.n_failed;
            }
            Err(e) => out.error = Some(format!("bootstrap: {e}")),
        }
    }
    out
}

/// Pairs of estimators whose intervals exclude zero on opposite sides.
/// Estimators without intervals are compared by point estimate only when no
/// estimator has intervals.
pub fn find_disagreements(results: &[EstimatorResult]) -> Vec<Disagreement> {
    let with_ci = results.iter().any(|r| r.ci_low.is_some());
    let sign = |r: &EstimatorResult, e: Effect| -> Option<i8> {
        let (lo, hi) = if with_ci {
            (r.ci_low?.get(e), r.ci_high?.get(e))
        } else {
            let p = r.effects?.get(e);
            (p, p)
        };
        if lo > 0.0 {
            Some(1)
        } else if hi < 0.0 {
            Some(-1)
        } else {
            None
        }
    };
    let name = |r: &EstimatorResult| format!("{} ({})", r.estimator, r.variant);
    let mut out = Vec::new();
    for effect in Effect::ALL {
        for a in results {
            for b in results {
                if sign(a, effect) == Some(1) && sign(b, effect) == Some(-1) {
                    out.push(Disagreement {
                        effect,
                        positive: name(a),
                        negative: name(b),
                    });
                }
            }
        }
    }
    out
}
