//! Nuisance models: outcome regressions, treatment and mediator
//! classifiers, cross-fitting and the nested cross-world regression.

mod forest;
mod linear;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

pub use forest::{Forest, ForestParams};
pub use linear::{expit, logit, LinearModel};

/// Penalty of the "unregularized" linear family; a numerical stabilizer.
pub const UNREGULARIZED_PENALTY: f64 = 1e-12;
/// Folds used to pick a ridge penalty and to calibrate probabilities.
pub const CV_FOLDS: usize = 5;

const CV_STREAM: u64 = 0xC5;
const CALIBRATION_STREAM: u64 = 0xCA1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    LinearUnregularized,
    LinearRidgeCv,
    Forest,
}

impl ModelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::LinearUnregularized => "linear",
            ModelFamily::LinearRidgeCv => "ridge_cv",
            ModelFamily::Forest => "forest",
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self, ModelFamily::Forest)
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "linear_unregularized" => Ok(ModelFamily::LinearUnregularized),
            "ridge_cv" | "linear_ridge_cv" | "ridge" => Ok(ModelFamily::LinearRidgeCv),
            "forest" => Ok(ModelFamily::Forest),
            other => Err(Error::Config(format!("unknown model family {other:?}"))),
        }
    }
}

/// Model configuration shared by every nuisance fit of an estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NuisanceSpec {
    pub family: ModelFamily,
    /// Platt recalibration of classifier outputs.
    pub calibrate: bool,
    /// 0 disables cross-fitting; otherwise at least 2.
    pub crossfit_folds: usize,
    pub clip_eps: f64,
    pub ridge_grid: Vec<f64>,
    pub forest: ForestParams,
    pub seed: u64,
}

impl Default for NuisanceSpec {
    fn default() -> Self {
        NuisanceSpec {
            family: ModelFamily::LinearUnregularized,
            calibrate: false,
            crossfit_folds: 0,
            clip_eps: 1e-6,
            ridge_grid: vec![1e-8, 1e-6, 1e-4, 1e-2, 1.0, 1e2],
            forest: ForestParams::default(),
            seed: 0,
        }
    }
}

impl NuisanceSpec {
    pub fn with_family(family: ModelFamily) -> Self {
        NuisanceSpec {
            family,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crossfit_folds == 1 {
            return Err(Error::Config("crossfit_folds must be 0 or at least 2".into()));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 0.5) {
            return Err(Error::Config(format!(
                "clip_eps must lie in (0, 0.5), got {}",
                self.clip_eps
            )));
        }
        if self.family == ModelFamily::LinearRidgeCv
            && (self.ridge_grid.is_empty() || self.ridge_grid.iter().any(|&a| !(a > 0.0)))
        {
            return Err(Error::Config("ridge_grid must hold positive penalties".into()));
        }
        if self.family == ModelFamily::Forest && self.forest.n_trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        Ok(())
    }

    pub fn crossfit(&self) -> bool {
        self.crossfit_folds >= 2
    }

    /// Short human-readable variant name, e.g. `ridge_cv+crossfit`.
    pub fn label(&self) -> String {
        let mut s = self.family.name().to_string();
        if self.calibrate {
            s.push_str("+calibrated");
        }
        if self.crossfit() {
            s.push_str("+crossfit");
        }
        s
    }
}

/// Anything that maps feature rows to one number per row.
pub trait Predictor {
    fn predict_rows(&self, x: &DMatrix<f64>) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedRegressor {
    Linear { model: LinearModel, penalty: f64 },
    Forest(Forest),
}

impl FittedRegressor {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            FittedRegressor::Linear { model, .. } => model.decision(row),
            FittedRegressor::Forest(f) => f.predict(row),
        }
    }

    /// The linear model, when the regressor is linear.
    pub fn linear(&self) -> Option<&LinearModel> {
        match self {
            FittedRegressor::Linear { model, .. } => Some(model),
            FittedRegressor::Forest(_) => None,
        }
    }
}

impl Predictor for FittedRegressor {
    fn predict_rows(&self, x: &DMatrix<f64>) -> Vec<f64> {
        match self {
            FittedRegressor::Linear { model, .. } => model.decision_rows(x),
            FittedRegressor::Forest(f) => f.predict_rows(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ClassifierBase {
    Logistic { model: LinearModel, penalty: f64 },
    Forest(Forest),
}

impl ClassifierBase {
    fn raw_rows(&self, x: &DMatrix<f64>) -> Vec<f64> {
        match self {
            ClassifierBase::Logistic { model, .. } => {
                model.decision_rows(x).into_iter().map(expit).collect()
            }
            ClassifierBase::Forest(f) => f.predict_rows(x),
        }
    }

    fn raw(&self, row: &[f64]) -> f64 {
        match self {
            ClassifierBase::Logistic { model, .. } => expit(model.decision(row)),
            ClassifierBase::Forest(f) => f.predict(row),
        }
    }
}

/// Sigmoid `expit(a·logit(q) + b)` applied on top of raw probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlattScaling {
    pub slope: f64,
    pub intercept: f64,
}

impl PlattScaling {
    fn apply(&self, q: f64) -> f64 {
        expit(self.slope * platt_score(q) + self.intercept)
    }
}

fn platt_score(q: f64) -> f64 {
    logit(q.clamp(1e-12, 1.0 - 1e-12))
}

/// Probability model for a binary target. Outputs always lie in
/// `[clip_eps, 1 − clip_eps]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedClassifier {
    base: ClassifierBase,
    calibration: Option<PlattScaling>,
    clip_eps: f64,
}

impl FittedClassifier {
    fn finish(&self, q: f64) -> f64 {
        let q = match &self.calibration {
            Some(c) => c.apply(q),
            None => q,
        };
        q.clamp(self.clip_eps, 1.0 - self.clip_eps)
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        self.finish(self.base.raw(row))
    }

    pub fn predict_proba_rows(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.base
            .raw_rows(x)
            .into_iter()
            .map(|q| self.finish(q))
            .collect()
    }

    pub fn calibration(&self) -> Option<PlattScaling> {
        self.calibration
    }

    pub fn linear(&self) -> Option<&LinearModel> {
        match &self.base {
            ClassifierBase::Logistic { model, .. } => Some(model),
            ClassifierBase::Forest(_) => None,
        }
    }
}

impl Predictor for FittedClassifier {
    fn predict_rows(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.predict_proba_rows(x)
    }
}

fn check_design(x: &DMatrix<f64>, target_len: usize) -> Result<()> {
    if x.nrows() != target_len {
        return Err(Error::ShapeMismatch(format!(
            "design has {} rows, target has {}",
            x.nrows(),
            target_len
        )));
    }
    if target_len < 2 {
        return Err(Error::ShapeMismatch(format!(
            "need at least 2 rows to fit, got {target_len}"
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::ShapeMismatch("design has no feature columns".into()));
    }
    Ok(())
}

fn take(v: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| v[i]).collect()
}

/// Picks the grid penalty with the smallest mean held-out loss. Folds whose
/// training part cannot be fit are skipped; ties go to the earlier entry.
fn select_penalty(
    x: &DMatrix<f64>,
    target: &[f64],
    grid: &[f64],
    seed: u64,
    loss: impl Fn(&DMatrix<f64>, &[f64], &DMatrix<f64>, &[f64], f64) -> Option<f64>,
) -> f64 {
    let n = x.nrows();
    let folds = CV_FOLDS.min(n);
    let Ok(partition) = fold_partition(n, folds, rng::derive_seed(&[seed, CV_STREAM])) else {
        return grid[0];
    };
    let mut best = (f64::INFINITY, grid[0]);
    for &lambda in grid {
        let mut total = 0.0;
        let mut used = 0usize;
        for (k, test) in partition.iter().enumerate() {
            let train = complement(&partition, k);
            let xt = x.select_rows(&train);
            let xv = x.select_rows(test);
            if let Some(l) = loss(&xt, &take(target, &train), &xv, &take(target, test), lambda) {
                total += l;
                used += 1;
            }
        }
        if used > 0 {
            let mean = total / used as f64;
            if mean < best.0 {
                best = (mean, lambda);
            }
        }
    }
    best.1
}

/// Fits a regression of `y` on the columns of `x` (an intercept is always
/// included).
pub fn fit_regressor(x: &DMatrix<f64>, y: &[f64], spec: &NuisanceSpec) -> Result<FittedRegressor> {
    check_design(x, y.len())?;
    match spec.family {
        ModelFamily::LinearUnregularized => Ok(FittedRegressor::Linear {
            model: linear::ridge(x, y, UNREGULARIZED_PENALTY)?,
            penalty: UNREGULARIZED_PENALTY,
        }),
        ModelFamily::LinearRidgeCv => {
            let penalty = select_penalty(x, y, &spec.ridge_grid, spec.seed, |xt, yt, xv, yv, l| {
                let m = linear::ridge(xt, yt, l).ok()?;
                let pred = m.decision_rows(xv);
                Some(pred.iter().zip(yv).map(|(p, v)| (p - v).powi(2)).sum::<f64>() / yv.len() as f64)
            });
            Ok(FittedRegressor::Linear {
                model: linear::ridge(x, y, penalty)?,
                penalty,
            })
        }
        ModelFamily::Forest => Ok(FittedRegressor::Forest(Forest::fit(
            x,
            y,
            &spec.forest,
            spec.seed,
        )?)),
    }
}

fn fit_base_classifier(x: &DMatrix<f64>, t: &[f64], spec: &NuisanceSpec) -> Result<ClassifierBase> {
    match spec.family {
        ModelFamily::LinearUnregularized => Ok(ClassifierBase::Logistic {
            model: linear::logistic(x, t, UNREGULARIZED_PENALTY)?,
            penalty: UNREGULARIZED_PENALTY,
        }),
        ModelFamily::LinearRidgeCv => {
            let penalty = select_penalty(x, t, &spec.ridge_grid, spec.seed, |xt, tt, xv, tv, l| {
                let m = linear::logistic(xt, tt, l).ok()?;
                Some(log_loss(&m.decision_rows(xv), tv))
            });
            Ok(ClassifierBase::Logistic {
                model: linear::logistic(x, t, penalty)?,
                penalty,
            })
        }
        ModelFamily::Forest => Ok(ClassifierBase::Forest(Forest::fit(
            x,
            t,
            &spec.forest,
            spec.seed,
        )?)),
    }
}

fn log_loss(logits: &[f64], t: &[f64]) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(t)
        .map(|(&z, &y)| {
            let p = expit(z).clamp(1e-15, 1.0 - 1e-15);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / t.len() as f64
}

/// Fits `P(target = 1 | x)`. Linear families use logistic regression;
/// `Forest` returns leaf class frequencies.
pub fn fit_classifier(x: &DMatrix<f64>, t: &[f64], spec: &NuisanceSpec) -> Result<FittedClassifier> {
    check_design(x, t.len())?;
    if let Some(&bad) = t.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Config(format!("classifier target must be 0/1, found {bad}")));
    }
    let positives = t.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == t.len() {
        return Err(Error::SingleClass);
    }

    let base = fit_base_classifier(x, t, spec)?;
    let calibration = if spec.calibrate {
        Some(fit_platt(x, t, spec)?)
    } else {
        None
    };
    Ok(FittedClassifier {
        base,
        calibration,
        clip_eps: spec.clip_eps,
    })
}

/// Platt scaling fit on out-of-fold raw probabilities.
fn fit_platt(x: &DMatrix<f64>, t: &[f64], spec: &NuisanceSpec) -> Result<PlattScaling> {
    let folds = CV_FOLDS.min(t.len());
    let seed = rng::derive_seed(&[spec.seed, CALIBRATION_STREAM]);
    let raw = crossfit_predictions(
        |xt, tt| fit_base_classifier(xt, tt, spec),
        x,
        t,
        folds,
        seed,
    )?;
    let scores = DMatrix::from_iterator(raw.len(), 1, raw.iter().map(|&q| platt_score(q)));
    let m = linear::logistic(&scores, t, UNREGULARIZED_PENALTY)?;
    Ok(PlattScaling {
        slope: m.coef[0],
        intercept: m.intercept,
    })
}

impl Predictor for ClassifierBase {
    fn predict_rows(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.raw_rows(x)
    }
}

/// Splits `0..n` into `folds` disjoint, exhaustive folds after a seeded
/// shuffle. Fold sizes differ by at most one; indices within a fold are
/// sorted.
pub fn fold_partition(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || n < folds {
        return Err(Error::TooFewRows { rows: n, folds });
    }
    let perm = rng::permutation(n, &mut rng::stream(&[seed], 0));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for k in 0..folds {
        let size = base + usize::from(k < extra);
        let mut fold = perm[start..start + size].to_vec();
        fold.sort_unstable();
        out.push(fold);
        start += size;
    }
    Ok(out)
}

/// All indices outside fold `k`, sorted.
pub(crate) fn complement(partition: &[Vec<usize>], k: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = partition
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .flat_map(|(_, f)| f.iter().copied())
        .collect();
    rows.sort_unstable();
    rows
}

/// Out-of-fold predictions: each row is predicted by a model fit on the
/// other folds.
pub fn crossfit_predictions<F, P>(
    fit: F,
    x: &DMatrix<f64>,
    target: &[f64],
    folds: usize,
    seed: u64,
) -> Result<Vec<f64>>
where
    F: Fn(&DMatrix<f64>, &[f64]) -> Result<P>,
    P: Predictor,
{
    if x.nrows() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "design has {} rows, target has {}",
            x.nrows(),
            target.len()
        )));
    }
    let partition = fold_partition(target.len(), folds, seed)?;
    let mut out = vec![0.0; target.len()];
    for (k, test) in partition.iter().enumerate() {
        let train = complement(&partition, k);
        let model = fit(&x.select_rows(&train), &take(target, &train))?;
        let pred = model.predict_rows(&x.select_rows(test));
        for (&i, p) in test.iter().zip(pred) {
            out[i] = p;
        }
    }
    Ok(out)
}

/// Design for the outcome regression: columns `[t, m₁..m_L, x₁..x_K]`.
pub fn outcome_design(t: &[f64], m: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, l, k) = (x.nrows(), m.ncols(), x.ncols());
    DMatrix::from_fn(n, 1 + l + k, |i, j| {
        if j == 0 {
            t[i]
        } else if j <= l {
            m[(i, j - 1)]
        } else {
            x[(i, j - 1 - l)]
        }
    })
}

/// Design for the treatment-given-mediator classifier: `[x₁..x_K, m₁..m_L]`.
pub fn mediator_propensity_design(x: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = x.ncols();
    DMatrix::from_fn(x.nrows(), k + m.ncols(), |i, j| {
        if j < k {
            x[(i, j)]
        } else {
            m[(i, j - k)]
        }
    })
}

/// Nested regression estimate of `ω(t, t', x) = E[μ(t, M, x) | T = t', X = x]`
/// fit on `train` rows and evaluated on `eval` rows.
pub(crate) fn cross_world_on(
    ds: &Dataset,
    train: &[usize],
    eval: &[usize],
    mu_hat: &FittedRegressor,
    t: u8,
    t_prime: u8,
    spec: &NuisanceSpec,
) -> Result<Vec<f64>> {
    let arm_value = f64::from(t_prime);
    let arm: Vec<usize> = train
        .iter()
        .copied()
        .filter(|&i| ds.t[i] == arm_value)
        .collect();
    if arm.is_empty() {
        return Err(Error::EmptyArm { arm: t_prime });
    }
    let x_arm = ds.x.select_rows(&arm);
    let m_arm = ds.m.select_rows(&arm);
    let fixed = vec![f64::from(t); arm.len()];
    let mu_values = mu_hat.predict_rows(&outcome_design(&fixed, &m_arm, &x_arm));
    let nu_hat = fit_regressor(&x_arm, &mu_values, spec)?;
    Ok(nu_hat.predict_rows(&ds.x.select_rows(eval)))
}

/// Cross-world conditional mean `ω̂(t, t', X_i)` for every row:
/// evaluate `μ̂(t, M_i, X_i)`, regress it on `X` within the `T = t'` arm,
/// then predict on all rows.
pub fn cross_world_mean(
    ds: &Dataset,
    mu_hat: &FittedRegressor,
    t: u8,
    t_prime: u8,
    spec: &NuisanceSpec,
) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..ds.n()).collect();
    cross_world_on(ds, &all, &all, mu_hat, t, t_prime, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(NuisanceSpec::default().validate().is_ok());
        let bad = NuisanceSpec {
            crossfit_folds: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = NuisanceSpec {
            clip_eps: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn partition_sizes() {
        let p = fold_partition(10, 2, 3).unwrap();
        assert_eq!(p.iter().map(Vec::len).collect::<Vec<_>>(), vec![5, 5]);
        let p = fold_partition(11, 3, 3).unwrap();
        assert_eq!(p.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 3]);
        assert!(matches!(fold_partition(2, 3, 0), Err(Error::TooFewRows { .. })));
        assert!(matches!(fold_partition(5, 1, 0), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn designs_layout() {
        let x = DMatrix::from_row_slice(2, 2, &[1., 2., 3., 4.]);
        let m = DMatrix::from_row_slice(2, 1, &[5., 6.]);
        let d = outcome_design(&[1., 0.], &m, &x);
        assert_eq!(d.row(0).iter().copied().collect::<Vec<_>>(), vec![1., 5., 1., 2.]);
        let d = mediator_propensity_design(&x, &m);
        assert_eq!(d.row(1).iter().copied().collect::<Vec<_>>(), vec![3., 4., 6.]);
    }

    #[test]
    fn degenerate_symmetric_classifier() {
        let x = DMatrix::zeros(10, 1);
        let t: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
        for family in [ModelFamily::LinearUnregularized, ModelFamily::LinearRidgeCv] {
            let c = fit_classifier(&x, &t, &NuisanceSpec::with_family(family)).unwrap();
            assert!((c.predict_proba(&[0.0]) - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn calibration_is_fit_when_requested() {
        let x = DMatrix::from_fn(60, 1, |i, _| (i as f64 - 30.0) / 10.0);
        let t: Vec<f64> = (0..60).map(|i| ((i * 7) % 11 < 5 + i / 12) as u8 as f64).collect();
        let spec = NuisanceSpec {
            calibrate: true,
            ..Default::default()
        };
        let c = fit_classifier(&x, &t, &spec).unwrap();
        assert!(c.calibration().is_some());
        let q = c.predict_proba(&[0.3]);
        assert!(q > 0.0 && q < 1.0);
    }
}
