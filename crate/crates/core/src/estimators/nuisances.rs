use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::{
    complement, cross_world_on, fit_classifier, fit_regressor, fold_partition,
    mediator_propensity_design, outcome_design, NuisanceSpec, Predictor,
};
use crate::rng;

const CROSSFIT_STREAM: u64 = 0xCF;

/// Which nuisance predictions an estimator needs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NuisanceRequest {
    pub propensity: bool,
    pub mediator_propensity: bool,
    pub mediator_prob: bool,
    pub outcome: bool,
    pub outcome_grid: bool,
    pub cross_world: bool,
}

/// Per-row nuisance predictions. With cross-fitting, row `i` is predicted
/// by models fit without the fold holding `i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NuisancePredictions {
    /// `p̂(X_i) = P(T = 1 | X_i)`.
    pub propensity: Option<Vec<f64>>,
    /// `ρ̂(M_i, X_i) = P(T = 1 | M_i, X_i)`.
    pub mediator_propensity: Option<Vec<f64>>,
    /// `P̂(M = 1 | T = t, X_i)`, indexed by `t` (binary mediator only).
    pub mediator_prob: Option<[Vec<f64>; 2]>,
    /// `μ̂(t, M_i, X_i)`, indexed by `t`.
    pub outcome: Option<[Vec<f64>; 2]>,
    /// `μ̂(t, m, X_i)`, indexed `[t][m]` (binary mediator only).
    pub outcome_grid: Option<[[Vec<f64>; 2]; 2]>,
    /// `ω̂(t, t', X_i)`, indexed `[t][t']`.
    pub cross_world: Option<[[Vec<f64>; 2]; 2]>,
}

fn pair(f: impl Fn(usize) -> Vec<f64>) -> [Vec<f64>; 2] {
    [f(0), f(1)]
}

fn grid(f: impl Fn(usize, usize) -> Vec<f64>) -> [[Vec<f64>; 2]; 2] {
    [[f(0, 0), f(0, 1)], [f(1, 0), f(1, 1)]]
}

fn scatter(dst: &mut [f64], rows: &[usize], values: &[f64]) {
    for (&i, &v) in rows.iter().zip(values) {
        dst[i] = v;
    }
}

/// Predictions for `eval` rows from models fit on `train` rows.
fn fit_block(
    ds: &Dataset,
    train: &[usize],
    eval: &[usize],
    req: NuisanceRequest,
    spec: &NuisanceSpec,
) -> Result<NuisancePredictions> {
    let x_train = ds.x.select_rows(train);
    let t_train: Vec<f64> = train.iter().map(|&i| ds.t[i]).collect();
    let x_eval = ds.x.select_rows(eval);
    let m_eval = ds.m.select_rows(eval);
    let mut out = NuisancePredictions::default();

    if req.propensity {
        let p_hat = fit_classifier(&x_train, &t_train, spec)?;
        out.propensity = Some(p_hat.predict_proba_rows(&x_eval));
    }

    if req.mediator_propensity {
        let design = mediator_propensity_design(&x_train, &ds.m.select_rows(train));
        let rho_hat = fit_classifier(&design, &t_train, spec)?;
        out.mediator_propensity =
            Some(rho_hat.predict_proba_rows(&mediator_propensity_design(&x_eval, &m_eval)));
    }

    if req.mediator_prob {
        let mut probs: [Vec<f64>; 2] = Default::default();
        for arm in 0..2u8 {
            let rows: Vec<usize> = train
                .iter()
                .copied()
                .filter(|&i| ds.t[i] == f64::from(arm))
                .collect();
            if rows.is_empty() {
                return Err(Error::EmptyArm { arm });
            }
            let target: Vec<f64> = rows.iter().map(|&i| ds.m[(i, 0)]).collect();
            let f_hat = fit_classifier(&ds.x.select_rows(&rows), &target, spec)?;
            probs[usize::from(arm)] = f_hat.predict_proba_rows(&x_eval);
        }
        out.mediator_prob = Some(probs);
    }

    if req.outcome || req.outcome_grid || req.cross_world {
        let design = outcome_design(&t_train, &ds.m.select_rows(train), &x_train);
        let y_train: Vec<f64> = train.iter().map(|&i| ds.y[i]).collect();
        let mu_hat = fit_regressor(&design, &y_train, spec)?;
        let k = eval.len();

        if req.outcome {
            out.outcome = Some(pair(|t| {
                mu_hat.predict_rows(&outcome_design(&vec![t as f64; k], &m_eval, &x_eval))
            }));
        }
        if req.outcome_grid {
            out.outcome_grid = Some(grid(|t, m| {
                let m_fixed = DMatrix::from_element(k, 1, m as f64);
                mu_hat.predict_rows(&outcome_design(&vec![t as f64; k], &m_fixed, &x_eval))
            }));
        }
        if req.cross_world {
            let mut cw: [[Vec<f64>; 2]; 2] = Default::default();
            for t in 0..2u8 {
                for tp in 0..2u8 {
                    cw[usize::from(t)][usize::from(tp)] =
                        cross_world_on(ds, train, eval, &mu_hat, t, tp, spec)?;
                }
            }
            out.cross_world = Some(cw);
        }
    }
    Ok(out)
}

/// Fits the requested nuisances, cross-fitted when
/// `spec.crossfit_folds >= 2` (all nuisances share one fold partition).
pub fn fit_nuisances(
    ds: &Dataset,
    spec: &NuisanceSpec,
    req: NuisanceRequest,
) -> Result<NuisancePredictions> {
    let n = ds.n();
    let all: Vec<usize> = (0..n).collect();
    if !spec.crossfit() {
        return fit_block(ds, &all, &all, req, spec);
    }

    let partition = fold_partition(
        n,
        spec.crossfit_folds,
        rng::derive_seed(&[spec.seed, CROSSFIT_STREAM]),
    )?;
    let zeros = || vec![0.0; n];
    let mut out = NuisancePredictions {
        propensity: req.propensity.then(zeros),
        mediator_propensity: req.mediator_propensity.then(zeros),
        mediator_prob: req.mediator_prob.then(|| pair(|_| zeros())),
        outcome: req.outcome.then(|| pair(|_| zeros())),
        outcome_grid: req.outcome_grid.then(|| grid(|_, _| zeros())),
        cross_world: req.cross_world.then(|| grid(|_, _| zeros())),
    };

    for (k, eval) in partition.iter().enumerate() {
        let train = complement(&partition, k);
        let block = fit_block(ds, &train, eval, req, spec)?;
        if let (Some(dst), Some(src)) = (out.propensity.as_mut(), block.propensity) {
            scatter(dst, eval, &src);
        }
        if let (Some(dst), Some(src)) = (out.mediator_propensity.as_mut(), block.mediator_propensity) {
            scatter(dst, eval, &src);
        }
        if let (Some(dst), Some(src)) = (out.mediator_prob.as_mut(), block.mediator_prob) {
            for t in 0..2 {
                scatter(&mut dst[t], eval, &src[t]);
            }
        }
        if let (Some(dst), Some(src)) = (out.outcome.as_mut(), block.outcome) {
            for t in 0..2 {
                scatter(&mut dst[t], eval, &src[t]);
            }
        }
        if let (Some(dst), Some(src)) = (out.outcome_grid.as_mut(), block.outcome_grid) {
            for t in 0..2 {
                for m in 0..2 {
                    scatter(&mut dst[t][m], eval, &src[t][m]);
                }
            }
        }
        if let (Some(dst), Some(src)) = (out.cross_world.as_mut(), block.cross_world) {
            for t in 0..2 {
                for tp in 0..2 {
                    scatter(&mut dst[t][tp], eval, &src[t][tp]);
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn missing(what: &str) -> Error {
    Error::Config(format!("nuisance prediction {what} was not supplied"))
}
