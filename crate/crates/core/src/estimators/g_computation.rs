use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EffectEstimates, MediatorKind};
use crate::error::Result;
use crate::nuisance::NuisanceSpec;

use super::nuisances::missing;
use super::{check_inputs, check_len, check_probabilities, fit_nuisances, mean, EstimatorId, NuisanceRequest};

/// How G-computation integrates over the mediator distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integration {
    /// Sum over `m ∈ {0, 1}` weighted by `f̂(m | t', x)`.
    Explicit,
    /// Nested regression `ω̂(t, t', x)`.
    Implicit,
}

impl Integration {
    pub fn for_kind(kind: MediatorKind) -> Self {
        if kind.is_binary() {
            Integration::Explicit
        } else {
            Integration::Implicit
        }
    }
}

pub fn g_computation(ds: &Dataset, spec: &NuisanceSpec) -> Result<EffectEstimates> {
    check_inputs(EstimatorId::GComputation, ds, spec)?;
    match Integration::for_kind(ds.mediator_kind) {
        Integration::Explicit => {
            let req = NuisanceRequest {
                outcome_grid: true,
                mediator_prob: true,
                ..Default::default()
            };
            let nu = fit_nuisances(ds, spec, req)?;
            g_computation_explicit_from(
                nu.outcome_grid.as_ref().ok_or_else(|| missing("outcome_grid"))?,
                nu.mediator_prob.as_ref().ok_or_else(|| missing("mediator_prob"))?,
            )
        }
        Integration::Implicit => {
            let req = NuisanceRequest {
                cross_world: true,
                ..Default::default()
            };
            let nu = fit_nuisances(ds, spec, req)?;
            g_computation_implicit_from(nu.cross_world.as_ref().ok_or_else(|| missing("cross_world"))?)
        }
    }
}

/// Explicit integration for a binary mediator:
/// `E[Y(t, M(t'))] = mean_i Σ_m μ̂(t, m, X_i) f̂(m | t', X_i)`.
///
/// `outcome_grid[t][m]` holds `μ̂(t, m, X_i)` and `mediator_prob[t']` holds
/// `f̂(1 | t', X_i)`.
pub fn g_computation_explicit_from(
    outcome_grid: &[[Vec<f64>; 2]; 2],
    mediator_prob: &[Vec<f64>; 2],
) -> Result<EffectEstimates> {
    let n = mediator_prob[0].len();
    for (t, row) in outcome_grid.iter().enumerate() {
        for (m, v) in row.iter().enumerate() {
            check_len(&format!("outcome_grid[{t}][{m}]"), v, n)?;
        }
    }
    for (t, q) in mediator_prob.iter().enumerate() {
        check_probabilities(&format!("mediator_prob[{t}]"), q, n)?;
    }
    let psi = |t: usize, tp: usize| {
        let q = &mediator_prob[tp];
        let mu = &outcome_grid[t];
        let per_row: Vec<f64> = (0..n)
            .map(|i| mu[1][i] * q[i] + mu[0][i] * (1.0 - q[i]))
            .collect();
        mean(&per_row)
    };
    Ok(EffectEstimates::from_potential_means(
        psi(1, 1),
        psi(1, 0),
        psi(0, 1),
        psi(0, 0),
    ))
}

/// Implicit integration: `E[Y(t, M(t'))] = mean_i ω̂(t, t', X_i)`, with
/// `cross_world[t][t']` holding `ω̂(t, t', X_i)`.
pub fn g_computation_implicit_from(cross_world: &[[Vec<f64>; 2]; 2]) -> Result<EffectEstimates> {
    let n = cross_world[0][0].len();
    for (t, row) in cross_world.iter().enumerate() {
        for (tp, v) in row.iter().enumerate() {
            check_len(&format!("cross_world[{t}][{tp}]"), v, n)?;
        }
    }
    Ok(EffectEstimates::from_potential_means(
        mean(&cross_world[1][1]),
        mean(&cross_world[1][0]),
        mean(&cross_world[0][1]),
        mean(&cross_world[0][0]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_hand_computed() {
        // one row: μ(t, m) = t + 2m, f(1|0) = 0.25, f(1|1) = 0.75
        let grid = [[vec![0.0], vec![2.0]], [vec![1.0], vec![3.0]]];
        let q = [vec![0.25], vec![0.75]];
        let e = g_computation_explicit_from(&grid, &q).unwrap();
        assert!((e.direct_0 - 1.0).abs() < 1e-12);
        assert!((e.direct_1 - 1.0).abs() < 1e-12);
        assert!((e.indirect_1 - 1.0).abs() < 1e-12);
        assert!((e.total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn implicit_means() {
        let cw = [[vec![0.0, 2.0], vec![1.0, 1.0]], [vec![3.0, 3.0], vec![5.0, 7.0]]];
        let e = g_computation_implicit_from(&cw).unwrap();
        assert_eq!(e.direct_0, 3.0 - 1.0);
        assert_eq!(e.indirect_1, 6.0 - 3.0);
        assert_eq!(e.direct_1, 6.0 - 1.0);
        assert_eq!(e.indirect_0, 1.0 - 1.0);
    }

    #[test]
    fn integration_choice() {
        assert_eq!(Integration::for_kind(MediatorKind::Binary1D), Integration::Explicit);
        assert_eq!(
            Integration::for_kind(MediatorKind::ContinuousMultiD(5)),
            Integration::Implicit
        );
    }
}
