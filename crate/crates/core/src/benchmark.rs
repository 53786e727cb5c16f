//! The simulation benchmark grid.
//!
//! One task is a (setting, n, repetition) triple. A task draws one dataset
//! and runs every configured estimator on it. Seeds depend only on the task
//! identity, and results are collected in task order, so the output does not
//! depend on the number of threads.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Effect, EffectEstimates, TrueEffects};
use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorId};
use crate::inference::{self, BenchmarkRecord, GroupSummary};
use crate::nuisance::NuisanceSpec;
use crate::rng;
use crate::simulation::{self, SimSetting, DEFAULT_MC_SAMPLES};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "MEDESTIM_THREADS";

const DATA_TAG: u64 = 0xDA7A;
const TRUTH_TAG: u64 = 0x7E;
const BOOT_TAG: u64 = 0xB007;
const NUISANCE_TAG: u64 = 0x5EED;

/// An estimator and its nuisance configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub estimator: EstimatorId,
    #[serde(default)]
    pub nuisance: NuisanceSpec,
}

impl EstimatorConfig {
    pub fn new(estimator: EstimatorId, nuisance: NuisanceSpec) -> Self {
        EstimatorConfig {
            estimator,
            nuisance,
        }
    }
}

fn default_repetitions() -> usize {
    200
}

fn default_bootstrap() -> usize {
    inference::DEFAULT_BOOTSTRAP_B
}

fn default_mc() -> usize {
    DEFAULT_MC_SAMPLES
}

fn default_output() -> PathBuf {
    PathBuf::from("medestim_out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub settings: Vec<u32>,
    pub sample_sizes: Vec<usize>,
    pub estimators: Vec<EstimatorConfig>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Bootstrap replicates per estimate; 0 skips intervals.
    #[serde(default = "default_bootstrap")]
    pub bootstrap_b: usize,
    /// Required; there is no clock-based fallback.
    #[serde(default)]
    pub master_seed: Option<u64>,
    /// 0 uses every available core.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<u64> {
        let seed = self
            .master_seed
            .ok_or_else(|| Error::Config("master_seed is required".into()))?;
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.bootstrap_b == 1 {
            return Err(Error::Config("bootstrap_b must be 0 or at least 2".into()));
        }
        if self.settings.is_empty() || self.sample_sizes.is_empty() || self.estimators.is_empty() {
            return Err(Error::Config(
                "settings, sample_sizes and estimators must be non-empty".into(),
            ));
        }
        for &id in &self.settings {
            simulation::make_setting(id, 2)?;
        }
        if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < 2) {
            return Err(Error::Config(format!("sample size {n} is below 2")));
        }
        for e in &self.estimators {
            e.nuisance.validate()?;
        }
        Ok(seed)
    }
}

/// Seed of the dataset for one task.
pub fn data_seed(master_seed: u64, setting_id: u32, n: usize, repetition: usize) -> u64 {
    rng::derive_seed(&[master_seed, DATA_TAG, u64::from(setting_id), n as u64, repetition as u64])
}

/// Worker pool honoring `parallelism` and [`THREADS_ENV`] (the smaller
/// positive value wins).
pub fn thread_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    let env = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0);
    let threads = match (parallelism, env) {
        (0, None) => 0,
        (0, Some(e)) => e,
        (p, None) => p,
        (p, Some(e)) => p.min(e),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkOutput {
    pub truths: Vec<(SimSetting, TrueEffects)>,
    pub records: Vec<BenchmarkRecord>,
    pub summaries: Vec<GroupSummary>,
}

fn run_task(
    cfg: &RunConfig,
    master_seed: u64,
    setting: &SimSetting,
    truth: &EffectEstimates,
    repetition: usize,
) -> Vec<BenchmarkRecord> {
    let seed = data_seed(master_seed, setting.setting_id, setting.n, repetition);
    let dataset = simulation::generate_dataset(setting, seed);
    cfg.estimators
        .iter()
        .enumerate()
        .map(|(slot, ec)| {
            let spec = NuisanceSpec {
                seed: rng::derive_seed(&[seed, NUISANCE_TAG, slot as u64, ec.nuisance.seed]),
                ..ec.nuisance.clone()
            };
            let started = Instant::now();
            let mut record = BenchmarkRecord {
                setting_id: setting.setting_id,
                n: setting.n,
                estimator: ec.estimator,
                variant: ec.nuisance.label(),
                crossfit: ec.nuisance.crossfit(),
                repetition,
                data_seed: seed,
                truth: *truth,
                estimate: None,
                error: None,
                ci: None,
                bootstrap_b: cfg.bootstrap_b,
                bootstrap_failed: 0,
                wall_time_ms: 0.0,
            };
            let outcome = match &dataset {
                Err(e) => Err(e.to_string()),
                Ok(ds) if cfg.bootstrap_b >= 2 => {
                    let boot_seed = rng::derive_seed(&[seed, BOOT_TAG, slot as u64]);
                    inference::bootstrap_ci(ec.estimator, ds, &spec, cfg.bootstrap_b, boot_seed)
                        .map(|b| (b.point, Some((b.ci_low, b.ci_high)), b.n_failed))
                        .map_err(|e| e.to_string())
                }
                Ok(ds) => estimators::estimate(ec.estimator, ds, &spec)
                    .map(|r| (r.effects, None, 0))
                    .map_err(|e| e.to_string()),
            };
            match outcome {
                Ok((point, ci, failed)) => {
                    record.estimate = Some(point);
                    record.ci = ci;
                    record.bootstrap_failed = failed;
                }
                Err(e) => record.error = Some(e),
            }
            record.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
            record
        })
        .collect()
}

/// Runs the full grid in memory.
pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchmarkOutput> {
    let master_seed = cfg.validate()?;
    let pool = thread_pool(cfg.parallelism)?;
    pool.install(|| {
        let mut settings = Vec::new();
        for &id in &cfg.settings {
            for &n in &cfg.sample_sizes {
                settings.push(simulation::make_setting(id, n)?);
            }
        }
        let mut truths = Vec::with_capacity(cfg.settings.len());
        for &id in &cfg.settings {
            let s = simulation::make_setting(id, cfg.sample_sizes[0])?;
            let seed = rng::derive_seed(&[master_seed, TRUTH_TAG, u64::from(id)]);
            truths.push((s, simulation::true_effects(&s, cfg.mc_samples, seed)?));
        }
        let truth_of = |id: u32| {
            truths
                .iter()
                .find(|(s, _)| s.setting_id == id)
                .map(|(_, t)| t.effects)
                .expect("truth computed for every setting")
        };

        let tasks: Vec<(usize, usize)> = (0..settings.len())
            .flat_map(|s| (0..cfg.repetitions).map(move |r| (s, r)))
            .collect();
        let records: Vec<BenchmarkRecord> = tasks
            .par_iter()
            .map(|&(s, r)| {
                let setting = &settings[s];
                run_task(cfg, master_seed, setting, &truth_of(setting.setting_id), r)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect();
        let summaries = inference::aggregate(&records)?;
        Ok(BenchmarkOutput {
            truths,
            records,
            summaries,
        })
    })
}

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_JSON_FILE: &str = "summary.json";
pub const TIMINGS_FILE: &str = "timings.csv";

/// Writes `results.csv`, `summary.csv`, `summary.json` and `timings.csv`.
/// Wall-clock times live only in `timings.csv` so that the other files are
/// reproducible byte for byte.
pub fn write_outputs(dir: &Path, out: &BenchmarkOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_results_csv(BufWriter::new(File::create(dir.join(RESULTS_FILE))?), &out.records)?;
    write_summary_csv(BufWriter::new(File::create(dir.join(SUMMARY_FILE))?), &out.summaries)?;
    let mut json = BufWriter::new(File::create(dir.join(SUMMARY_JSON_FILE))?);
    serde_json::to_writer_pretty(&mut json, &out.summaries)?;
    json.write_all(b"\n")?;
    json.flush()?;
    write_timings_csv(BufWriter::new(File::create(dir.join(TIMINGS_FILE))?), &out.records)?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Column order of `results.csv`.
pub fn results_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "setting_id",
        "n",
        "estimator",
        "variant",
        "crossfit",
        "repetition",
        "data_seed",
        "status",
        "error",
    ]
    .map(String::from)
    .to_vec();
    for prefix in ["truth", "estimate", "rel_error", "abs_error", "ci_low", "ci_high", "covered"] {
        h.extend(Effect::ALL.iter().map(|e| format!("{prefix}_{}", e.name())));
    }
    h.extend(["bootstrap_b", "bootstrap_failed"].map(String::from));
    h
}

pub fn write_results_csv<W: Write>(out: W, records: &[BenchmarkRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(results_header())?;
    for r in records {
        let mut row = vec![
            r.setting_id.to_string(),
            r.n.to_string(),
            r.estimator.to_string(),
            r.variant.clone(),
            r.crossfit.to_string(),
            r.repetition.to_string(),
            r.data_seed.to_string(),
            if r.estimate.is_some() { "ok" } else { "failed" }.to_string(),
            r.error.clone().unwrap_or_default(),
        ];
        let rel = r.relative_error();
        let abs = r.absolute_error();
        for e in Effect::ALL {
            row.push(r.truth.get(e).to_string());
        }
        for e in Effect::ALL {
            row.push(opt(r.estimate.map(|v| v.get(e))));
        }
        for e in Effect::ALL {
            row.push(opt(rel.map(|v| v.get(e))));
        }
        for e in Effect::ALL {
            row.push(opt(abs.map(|v| v.get(e))));
        }
        for e in Effect::ALL {
            row.push(opt(r.ci.map(|(lo, _)| lo.get(e))));
        }
        for e in Effect::ALL {
            row.push(opt(r.ci.map(|(_, hi)| hi.get(e))));
        }
        for e in Effect::ALL {
            row.push(r.covered(e).map(|c| c.to_string()).unwrap_or_default());
        }
        row.push(r.bootstrap_b.to_string());
        row.push(r.bootstrap_failed.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, summaries: &[GroupSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "setting_id",
        "n",
        "estimator",
        "variant",
        "repetitions",
        "failed",
        "bootstrap_failed",
        "effect",
        "mean_rel_error",
        "rel_error_low",
        "rel_error_high",
        "mean_abs_error",
        "abs_error_low",
        "abs_error_high",
        "coverage",
        "mean_ci_width",
    ])?;
    for s in summaries {
        for e in &s.effects {
            let rel = e.relative_error;
            let abs = e.absolute_error;
            w.write_record([
                s.setting_id.to_string(),
                s.n.to_string(),
                s.estimator.to_string(),
                s.variant.clone(),
                s.repetitions.to_string(),
                s.failed.to_string(),
                s.bootstrap_failed.to_string(),
                e.effect.to_string(),
                opt(rel.map(|b| b.mean)),
                opt(rel.map(|b| b.low)),
                opt(rel.map(|b| b.high)),
                opt(abs.map(|b| b.mean)),
                opt(abs.map(|b| b.low)),
                opt(abs.map(|b| b.high)),
                opt(e.coverage),
                opt(e.mean_ci_width),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv<W: Write>(out: W, records: &[BenchmarkRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["setting_id", "n", "estimator", "variant", "repetition", "wall_time_ms"])?;
    for r in records {
        w.write_record([
            r.setting_id.to_string(),
            r.n.to_string(),
            r.estimator.to_string(),
            r.variant.clone(),
            r.repetition.to_string(),
            r.wall_time_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            settings: vec![1],
            sample_sizes: vec![200],
            estimators: vec![EstimatorConfig::new(
                EstimatorId::CoefficientProduct,
                NuisanceSpec::default(),
            )],
            repetitions: 3,
            bootstrap_b: 0,
            master_seed: Some(7),
            parallelism: 0,
            output_dir: PathBuf::from("unused"),
            mc_samples: 10_000,
        }
    }

    #[test]
    fn counts_rows_and_groups() {
        let out = run_benchmark(&small()).unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.summaries.len(), 1);
        assert_eq!(out.summaries[0].repetitions, 3);
    }

    #[test]
    fn seed_is_required() {
        let mut cfg = small();
        cfg.master_seed = None;
        assert!(matches!(run_benchmark(&cfg), Err(Error::Config(_))));
        let mut cfg = small();
        cfg.settings = vec![99];
        assert!(matches!(run_benchmark(&cfg), Err(Error::UnknownSetting(99))));
    }

    #[test]
    fn config_parses_with_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"settings":[1],"sample_sizes":[500],"master_seed":3,
                "estimators":[{"estimator":"dml","nuisance":{"family":"forest","crossfit_folds":2}}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.repetitions, 200);
        assert_eq!(cfg.bootstrap_b, 100);
        assert_eq!(cfg.estimators[0].nuisance.crossfit_folds, 2);
        assert_eq!(cfg.estimators[0].nuisance.clip_eps, 1e-6);
    }
}
