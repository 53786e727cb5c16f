//! Multiply-robust and double machine learning estimators. Both share one
//! influence-function form and differ only in the cross-world weights:
//! mediator density ratios for the former, treatment propensities given the
//! mediator for the latter.

use crate::data::{Dataset, EffectEstimates};
use crate::error::{Error, Result};
use crate::nuisance::NuisanceSpec;

use super::nuisances::missing;
use super::{
    arm_weights, check_inputs, check_len, check_probabilities, fit_nuisances, mean,
    normalized_mean, rho_cross_weights, EstimatorId, NuisanceRequest,
};

pub fn multiply_robust(ds: &Dataset, spec: &NuisanceSpec) -> Result<EffectEstimates> {
    check_inputs(EstimatorId::MultiplyRobust, ds, spec)?;
    let req = NuisanceRequest {
        propensity: true,
        mediator_prob: true,
        outcome: true,
        cross_world: true,
        ..Default::default()
    };
    let nu = fit_nuisances(ds, spec, req)?;
    multiply_robust_from(
        ds,
        nu.propensity.as_ref().ok_or_else(|| missing("propensity"))?,
        nu.mediator_prob.as_ref().ok_or_else(|| missing("mediator_prob"))?,
        nu.outcome.as_ref().ok_or_else(|| missing("outcome"))?,
        nu.cross_world.as_ref().ok_or_else(|| missing("cross_world"))?,
    )
}

pub fn dml(ds: &Dataset, spec: &NuisanceSpec) -> Result<EffectEstimates> {
    check_inputs(EstimatorId::Dml, ds, spec)?;
    let req = NuisanceRequest {
        propensity: true,
        mediator_propensity: true,
        outcome: true,
        cross_world: true,
        ..Default::default()
    };
    let nu = fit_nuisances(ds, spec, req)?;
    dml_from(
        ds,
        nu.propensity.as_ref().ok_or_else(|| missing("propensity"))?,
        nu.mediator_propensity
            .as_ref()
            .ok_or_else(|| missing("mediator_propensity"))?,
        nu.outcome.as_ref().ok_or_else(|| missing("outcome"))?,
        nu.cross_world.as_ref().ok_or_else(|| missing("cross_world"))?,
    )
}

/// Multiply-robust estimator on supplied nuisances: `p̂(X_i)`,
/// `mediator_prob[t] = f̂(1 | t, X_i)`, `outcome[t] = μ̂(t, M_i, X_i)` and
/// `cross_world[t][t'] = ω̂(t, t', X_i)`. Binary mediator only.
pub fn multiply_robust_from(
    ds: &Dataset,
    p: &[f64],
    mediator_prob: &[Vec<f64>; 2],
    outcome: &[Vec<f64>; 2],
    cross_world: &[[Vec<f64>; 2]; 2],
) -> Result<EffectEstimates> {
    if !ds.mediator_kind.is_binary() {
        return Err(Error::UnsupportedMediator {
            estimator: EstimatorId::MultiplyRobust,
            kind: ds.mediator_kind.label(),
        });
    }
    let n = ds.n();
    check_probabilities("propensity", p, n)?;
    for (t, q) in mediator_prob.iter().enumerate() {
        check_probabilities(&format!("mediator_prob[{t}]"), q, n)?;
    }
    let density = |t: usize, i: usize| {
        let q = mediator_prob[t][i];
        if ds.m[(i, 0)] == 1.0 {
            q
        } else {
            1.0 - q
        }
    };
    let (w1, w0) = arm_weights(&ds.t, p);
    let to_1 = (0..n).map(|i| w1[i] * density(0, i) / density(1, i)).collect();
    let to_0 = (0..n).map(|i| w0[i] * density(1, i) / density(0, i)).collect();
    influence_means(ds, (w1, w0), [to_0, to_1], outcome, cross_world)
}

/// Double machine learning estimator on supplied nuisances: as
/// [`multiply_robust_from`] but with `ρ̂(M_i, X_i)` replacing the mediator
/// density ratio. Any mediator kind.
pub fn dml_from(
    ds: &Dataset,
    p: &[f64],
    rho: &[f64],
    outcome: &[Vec<f64>; 2],
    cross_world: &[[Vec<f64>; 2]; 2],
) -> Result<EffectEstimates> {
    let n = ds.n();
    check_probabilities("propensity", p, n)?;
    check_probabilities("mediator_propensity", rho, n)?;
    let arms = arm_weights(&ds.t, p);
    let cross = rho_cross_weights(&ds.t, p, rho);
    influence_means(ds, arms, cross, outcome, cross_world)
}

/// Normalized influence-function estimates of the four `E[Y(t, M(t'))]`.
/// `cross[0]` reweights controls towards `M(1)`, `cross[1]` treated units
/// towards `M(0)`.
fn influence_means(
    ds: &Dataset,
    (w1, w0): (Vec<f64>, Vec<f64>),
    cross: [Vec<f64>; 2],
    outcome: &[Vec<f64>; 2],
    cross_world: &[[Vec<f64>; 2]; 2],
) -> Result<EffectEstimates> {
    let n = ds.n();
    for (t, v) in outcome.iter().enumerate() {
        check_len(&format!("outcome[{t}]"), v, n)?;
    }
    for (t, row) in cross_world.iter().enumerate() {
        for (tp, v) in row.iter().enumerate() {
            check_len(&format!("cross_world[{t}][{tp}]"), v, n)?;
        }
    }
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let y = &ds.y;
    let [mu0, mu1] = outcome;
    let omega = cross_world;

    let y11 = normalized_mean(&w1, &diff(y, &omega[1][1]), "treated arm")? + mean(&omega[1][1]);
    let y00 = normalized_mean(&w0, &diff(y, &omega[0][0]), "control arm")? + mean(&omega[0][0]);
    let y10 = normalized_mean(&cross[1], &diff(y, mu1), "cross-world Y(1, M(0))")?
        + normalized_mean(&w0, &diff(mu1, &omega[1][0]), "control arm")?
        + mean(&omega[1][0]);
    let y01 = normalized_mean(&cross[0], &diff(y, mu0), "cross-world Y(0, M(1))")?
        + normalized_mean(&w1, &diff(mu0, &omega[0][1]), "treated arm")?
        + mean(&omega[0][1]);
    Ok(EffectEstimates::from_potential_means(y11, y10, y01, y00))
}
