use nalgebra::DMatrix;

use crate::data::{Dataset, EffectEstimates};
use crate::error::{Error, Result};
use crate::nuisance::{fit_regressor, outcome_design, NuisanceSpec};

use super::{check_inputs, EstimatorId};

/// Coefficient product: `θ̂ = γ̂_T` and `δ̂ = Σ_k γ̂_{M,k} β̂_{T,k}` from the
/// linear models `M_k ~ T + X` and `Y ~ T + M + X`. Both direct effects and
/// both indirect effects coincide by construction.
pub fn coefficient_product(ds: &Dataset, spec: &NuisanceSpec) -> Result<EffectEstimates> {
    check_inputs(EstimatorId::CoefficientProduct, ds, spec)?;
    if !spec.family.is_linear() {
        return Err(Error::Config(format!(
            "coefficient_product needs a linear model family, got {}",
            spec.family.name()
        )));
    }

    let no_mediator = DMatrix::zeros(ds.n(), 0);
    let mediator_design = outcome_design(&ds.t, &no_mediator, &ds.x);
    let beta_t = (0..ds.dim_m())
        .map(|k| {
            let target: Vec<f64> = ds.m.column(k).iter().copied().collect();
            let fit = fit_regressor(&mediator_design, &target, spec)?;
            Ok(fit.linear().expect("linear family").coef[0])
        })
        .collect::<Result<Vec<f64>>>()?;

    let outcome = fit_regressor(&outcome_design(&ds.t, &ds.m, &ds.x), &ds.y, spec)?;
    let gamma = &outcome.linear().expect("linear family").coef;
    let direct = gamma[0];
    let indirect: f64 = beta_t.iter().enumerate().map(|(k, b)| gamma[1 + k] * b).sum();

    Ok(EffectEstimates {
        total: direct + indirect,
        direct_1: direct,
        direct_0: direct,
        indirect_1: indirect,
        indirect_0: indirect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MediatorKind;
    use crate::nuisance::ModelFamily;

    fn noiseless() -> Dataset {
        let n = 40;
        let x = DMatrix::from_fn(n, 2, |i, j| ((i * (3 + j)) % 7) as f64 - 3.0);
        let t: Vec<f64> = (0..n).map(|i| ((i / 2) % 2) as f64).collect();
        // mediator noise orthogonal to [1, T, X], so β̂_T is exactly 0.5
        let design = DMatrix::from_fn(n, 4, |i, j| match j {
            0 => 1.0,
            1 => t[i],
            _ => x[(i, j - 2)],
        });
        let raw = nalgebra::DVector::from_fn(n, |i, _| ((i * i) % 5) as f64);
        let fitted = &design * design.clone().svd(true, true).solve(&raw, 1e-12).unwrap();
        let noise = raw - fitted;
        let m = DMatrix::from_fn(n, 1, |i, _| {
            0.5 * t[i] + 0.3 * x[(i, 0)] - 0.2 * x[(i, 1)] + noise[i]
        });
        let y = (0..n)
            .map(|i| 1.2 * t[i] + 0.5 * m[(i, 0)] + 0.1 * x[(i, 0)] + 0.4 * x[(i, 1)])
            .collect();
        Dataset::new(x, t, m, y, MediatorKind::Continuous1D).unwrap()
    }

    #[test]
    fn recovers_noiseless_coefficients() {
        let e = coefficient_product(&noiseless(), &NuisanceSpec::default()).unwrap();
        assert!((e.direct_0 - 1.2).abs() < 1e-6);
        assert!((e.indirect_1 - 0.25).abs() < 1e-6);
        assert_eq!(e.direct_0, e.direct_1);
        assert_eq!(e.indirect_0, e.indirect_1);
    }

    #[test]
    fn rejects_forest() {
        let spec = NuisanceSpec::with_family(ModelFamily::Forest);
        assert!(matches!(
            coefficient_product(&noiseless(), &spec),
            Err(Error::Config(_))
        ));
    }
}
