use crate::data::{Dataset, EffectEstimates};
use crate::error::Result;
use crate::nuisance::NuisanceSpec;

use super::nuisances::missing;
use super::{
    arm_weights, check_inputs, check_probabilities, fit_nuisances, normalized_mean,
    rho_cross_weights, EstimatorId, NuisanceRequest,
};

/// Normalized inverse probability weighting with treatment propensities
/// `p̂(X)` and `ρ̂(M, X)`.
pub fn ipw(ds: &Dataset, spec: &NuisanceSpec) -> Result<EffectEstimates> {
    check_inputs(EstimatorId::Ipw, ds, spec)?;
    let req = NuisanceRequest {
        propensity: true,
        mediator_propensity: true,
        ..Default::default()
    };
    let nu = fit_nuisances(ds, spec, req)?;
    ipw_from(
        ds,
        nu.propensity.as_ref().ok_or_else(|| missing("propensity"))?,
        nu.mediator_propensity
            .as_ref()
            .ok_or_else(|| missing("mediator_propensity"))?,
    )
}

/// IPW on supplied `p̂(X_i)` and `ρ̂(M_i, X_i)`. Each potential-outcome mean
/// is a normalized weighted mean of `Y`.
pub fn ipw_from(ds: &Dataset, p: &[f64], rho: &[f64]) -> Result<EffectEstimates> {
    let n = ds.n();
    check_probabilities("propensity", p, n)?;
    check_probabilities("mediator_propensity", rho, n)?;
    let (w1, w0) = arm_weights(&ds.t, p);
    let [cw0, cw1] = rho_cross_weights(&ds.t, p, rho);
    let y11 = normalized_mean(&w1, &ds.y, "treated arm")?;
    let y00 = normalized_mean(&w0, &ds.y, "control arm")?;
    let y10 = normalized_mean(&cw1, &ds.y, "cross-world Y(1, M(0))")?;
    let y01 = normalized_mean(&cw0, &ds.y, "cross-world Y(0, M(1))")?;
    Ok(EffectEstimates::from_potential_means(y11, y10, y01, y00))
}
