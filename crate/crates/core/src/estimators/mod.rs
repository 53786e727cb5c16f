//! The five mediation estimators.
//!
//! Every estimator except the coefficient product is written in terms of
//! the four potential-outcome means `E[Y(t, M(t'))]`; the effects follow
//! from [`EffectEstimates::from_potential_means`]. The `*_from` functions
//! take nuisance predictions directly so they can be checked against
//! hand-built nuisances.

mod coefficient_product;
mod g_computation;
mod nuisances;
mod robust;
mod weighting;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EffectEstimates, MediatorKind};
use crate::error::{Error, Result};
use crate::nuisance::NuisanceSpec;

pub use coefficient_product::coefficient_product;
pub use g_computation::{
    g_computation, g_computation_explicit_from, g_computation_implicit_from, Integration,
};
pub use nuisances::{fit_nuisances, NuisancePredictions, NuisanceRequest};
pub use robust::{dml, dml_from, multiply_robust, multiply_robust_from};
pub use weighting::{ipw, ipw_from};

/// Normalizing denominators below this raise [`Error::DegenerateWeights`].
pub const MIN_WEIGHT_SUM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    CoefficientProduct,
    GComputation,
    Ipw,
    MultiplyRobust,
    Dml,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 5] = [
        EstimatorId::CoefficientProduct,
        EstimatorId::GComputation,
        EstimatorId::Ipw,
        EstimatorId::MultiplyRobust,
        EstimatorId::Dml,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorId::CoefficientProduct => "coefficient_product",
            EstimatorId::GComputation => "g_computation",
            EstimatorId::Ipw => "ipw",
            EstimatorId::MultiplyRobust => "multiply_robust",
            EstimatorId::Dml => "dml",
        }
    }

    pub fn supports(&self, kind: MediatorKind) -> bool {
        match self {
            EstimatorId::MultiplyRobust => kind.is_binary(),
            _ => true,
        }
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .or(match s {
                "coef_product" | "cp" => Some(EstimatorId::CoefficientProduct),
                "g_formula" | "gcomp" => Some(EstimatorId::GComputation),
                "mr" => Some(EstimatorId::MultiplyRobust),
                "med_dml" => Some(EstimatorId::Dml),
                _ => None,
            })
            .ok_or_else(|| Error::Config(format!("unknown estimator {s:?}")))
    }
}

/// Estimates plus a record of how they were obtained.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimator: EstimatorId,
    pub effects: EffectEstimates,
    pub nuisance_models: Vec<String>,
    pub integration: Option<Integration>,
    pub crossfit_folds: usize,
}

/// Shared preamble of every estimator.
pub(crate) fn check_inputs(id: EstimatorId, ds: &Dataset, spec: &NuisanceSpec) -> Result<()> {
    ds.validate()?;
    spec.validate()?;
    if !id.supports(ds.mediator_kind) {
        return Err(Error::UnsupportedMediator {
            estimator: id,
            kind: ds.mediator_kind.label(),
        });
    }
    Ok(())
}

/// Runs one estimator.
pub fn run(id: EstimatorId, ds: &Dataset, spec: &NuisanceSpec) -> Result<EffectEstimates> {
    match id {
        EstimatorId::CoefficientProduct => coefficient_product(ds, spec),
        EstimatorId::GComputation => g_computation(ds, spec),
        EstimatorId::Ipw => ipw(ds, spec),
        EstimatorId::MultiplyRobust => multiply_robust(ds, spec),
        EstimatorId::Dml => dml(ds, spec),
    }
}

/// Runs one estimator and records which nuisance models it fit.
pub fn estimate(id: EstimatorId, ds: &Dataset, spec: &NuisanceSpec) -> Result<EstimateReport> {
    check_inputs(id, ds, spec)?;
    let effects = run(id, ds, spec)?;
    let integration = match id {
        EstimatorId::GComputation => Some(Integration::for_kind(ds.mediator_kind)),
        _ => None,
    };
    let family = spec.family.name();
    let models: &[&str] = match (id, integration) {
        (EstimatorId::CoefficientProduct, _) => &["mediator_linear", "outcome_linear"],
        (EstimatorId::GComputation, Some(Integration::Explicit)) => {
            &["outcome_mu", "mediator_prob_t0", "mediator_prob_t1"]
        }
        (EstimatorId::GComputation, _) => &["outcome_mu", "cross_world_nu"],
        (EstimatorId::Ipw, _) => &["propensity_p", "propensity_rho"],
        (EstimatorId::MultiplyRobust, _) => &[
            "propensity_p",
            "mediator_prob_t0",
            "mediator_prob_t1",
            "outcome_mu",
            "cross_world_nu",
        ],
        (EstimatorId::Dml, _) => &["propensity_p", "propensity_rho", "outcome_mu", "cross_world_nu"],
    };
    Ok(EstimateReport {
        estimator: id,
        effects,
        nuisance_models: models.iter().map(|m| format!("{m}:{family}")).collect(),
        integration,
        crossfit_folds: if id == EstimatorId::CoefficientProduct {
            0
        } else {
            spec.crossfit_folds
        },
    })
}

/// `Σ wᵢvᵢ / Σ wᵢ`.
pub(crate) fn normalized_mean(weights: &[f64], values: &[f64], what: &str) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&w, &v) in weights.iter().zip(values) {
        num += w * v;
        den += w;
    }
    if !den.is_finite() || !num.is_finite() || den < MIN_WEIGHT_SUM {
        return Err(Error::DegenerateWeights(format!(
            "{what}: weight sum {den:e}"
        )));
    }
    Ok(num / den)
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Treatment-arm weights `T/p̂` and `(1 − T)/(1 − p̂)`.
pub(crate) fn arm_weights(t: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w1 = t.iter().zip(p).map(|(&t, &p)| t / p).collect();
    let w0 = t.iter().zip(p).map(|(&t, &p)| (1.0 - t) / (1.0 - p)).collect();
    (w1, w0)
}

/// Cross-world weights from the treatment-given-mediator model:
/// `[ (1−T)ρ̂ / ((1−ρ̂)p̂),  T(1−ρ̂) / (ρ̂(1−p̂)) ]`, used for `E[Y(0, M(1))]`
/// and `E[Y(1, M(0))]` respectively.
pub(crate) fn rho_cross_weights(t: &[f64], p: &[f64], rho: &[f64]) -> [Vec<f64>; 2] {
    let to_0 = t
        .iter()
        .zip(p.iter().zip(rho))
        .map(|(&t, (&p, &r))| (1.0 - t) * r / ((1.0 - r) * p))
        .collect();
    let to_1 = t
        .iter()
        .zip(p.iter().zip(rho))
        .map(|(&t, (&p, &r))| t * (1.0 - r) / (r * (1.0 - p)))
        .collect();
    [to_0, to_1]
}

fn check_len(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{name} has {} entries, dataset has {n} rows",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateDesign(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn check_probabilities(name: &str, v: &[f64], n: usize) -> Result<()> {
    check_len(name, v, n)?;
    if v.iter().any(|&q| q <= 0.0 || q >= 1.0) {
        return Err(Error::DegenerateWeights(format!(
            "{name} must lie strictly inside (0, 1)"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for id in EstimatorId::ALL {
            assert_eq!(id.name().parse::<EstimatorId>().unwrap(), id);
        }
        assert!("tmle".parse::<EstimatorId>().is_err());
    }

    #[test]
    fn applicability() {
        assert!(!EstimatorId::MultiplyRobust.supports(MediatorKind::Continuous1D));
        assert!(EstimatorId::MultiplyRobust.supports(MediatorKind::Binary1D));
        assert!(EstimatorId::Dml.supports(MediatorKind::ContinuousMultiD(5)));
    }

    #[test]
    fn degenerate_weights() {
        assert!(matches!(
            normalized_mean(&[0.0, 0.0], &[1.0, 2.0], "w"),
            Err(Error::DegenerateWeights(_))
        ));
        assert_eq!(normalized_mean(&[1.0, 3.0], &[1.0, 2.0], "w").unwrap(), 1.75);
    }
}
