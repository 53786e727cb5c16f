use medestim::estimators::{self, coefficient_product, ipw_from};
use medestim::inference::{percentile, summarize, BenchmarkRecord};
use medestim::nuisance::{fit_classifier, fit_regressor, fold_partition};
use medestim::{simulation, validate_dataset, Dataset, Effect, EffectEstimates, Error, EstimatorId, ModelFamily};
use medestim::{MediatorKind, NuisanceSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn simulated(setting: u32, n: usize, seed: u64) -> Dataset {
    let s = simulation::make_setting(setting, n).unwrap();
    simulation::generate_dataset(&s, seed).unwrap()
}

fn applicable(ds: &Dataset) -> Vec<EstimatorId> {
    EstimatorId::ALL.into_iter().filter(|e| e.supports(ds.mediator_kind)).collect()
}

fn assert_close(a: &EffectEstimates, b: &EffectEstimates, tol: f64) -> Result<(), TestCaseError> {
    for e in Effect::ALL {
        let (x, y) = (a.get(e), b.get(e));
        prop_assert!((x - y).abs() <= tol * (1.0 + x.abs()), "{e:?}: {x} vs {y}");
    }
    Ok(())
}

/// Settings without extreme overlap problems at small n.
fn mild_setting() -> impl Strategy<Value = u32> {
    prop::sample::select(vec![1u32, 2, 3, 4, 5, 6, 7, 8, 9, 12, 13, 15, 17, 21, 24, 33, 36])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn validation_is_idempotent(setting in 1u32..=36, seed in any::<u64>()) {
        let ds = simulated(setting, 60, seed);
        let once = validate_dataset(ds.clone()).unwrap();
        let twice = validate_dataset(once.clone()).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(&once, &ds);
    }

    #[test]
    fn invalid_data_rejected_by_every_estimator(
        setting in 1u32..=36,
        seed in any::<u64>(),
        row in 0usize..80,
        defect in 0u8..4,
    ) {
        let mut ds = simulated(setting, 80, seed);
        match defect {
            0 => ds.y[row] = f64::NAN,
            1 => ds.t[row] = 0.5,
            2 => ds.x[(row, 0)] = f64::INFINITY,
            _ => ds.t.iter_mut().for_each(|t| *t = 1.0),
        }
        for id in EstimatorId::ALL {
            let r = estimators::run(id, &ds, &NuisanceSpec::default());
            prop_assert!(matches!(
                r,
                Err(Error::NonFiniteValue { .. } | Error::NonBinaryTreatment { .. } | Error::SingleArm)
            ), "{id}: {r:?}");
        }
    }

    #[test]
    fn decomposition_identity(setting in mild_setting(), seed in any::<u64>(), folds in prop::sample::select(vec![0usize, 2])) {
        let ds = simulated(setting, 300, seed);
        let spec = NuisanceSpec { crossfit_folds: folds, seed, ..NuisanceSpec::default() };
        for id in applicable(&ds) {
            let e = estimators::run(id, &ds, &spec).unwrap();
            prop_assert!((e.total - (e.direct_0 + e.indirect_1)).abs() < TOL, "{id}");
        }
    }

    #[test]
    fn coefficient_product_is_symmetric(setting in 1u32..=36, seed in any::<u64>()) {
        let ds = simulated(setting, 200, seed);
        let e = coefficient_product(&ds, &NuisanceSpec::default()).unwrap();
        prop_assert_eq!(e.direct_0, e.direct_1);
        prop_assert_eq!(e.indirect_0, e.indirect_1);
    }

    #[test]
    fn ipw_total_ignores_rho(
        setting in 1u32..=36,
        seed in any::<u64>(),
        rho_a in prop::collection::vec(0.01f64..0.99, 150),
        rho_b in prop::collection::vec(0.01f64..0.99, 150),
        p in prop::collection::vec(0.05f64..0.95, 150),
    ) {
        let ds = simulated(setting, 150, seed);
        let a = ipw_from(&ds, &p, &rho_a).unwrap();
        let b = ipw_from(&ds, &p, &rho_b).unwrap();
        prop_assert!((a.total - b.total).abs() < TOL);
    }

    #[test]
    fn constant_outcome_gives_zero_effects(setting in mild_setting(), seed in any::<u64>(), c in -50.0f64..50.0) {
        let mut ds = simulated(setting, 300, seed);
        ds.y.iter_mut().for_each(|y| *y = c);
        for id in [EstimatorId::Ipw, EstimatorId::Dml] {
            let e = estimators::run(id, &ds, &NuisanceSpec::default()).unwrap();
            for v in e.to_array() {
                prop_assert!(v.abs() < TOL, "{id}: {v}");
            }
        }
    }

    #[test]
    fn outcome_location_shift(setting in mild_setting(), seed in any::<u64>(), c in -20.0f64..20.0) {
        let ds = simulated(setting, 300, seed);
        let mut shifted = ds.clone();
        shifted.y.iter_mut().for_each(|y| *y += c);
        let spec = NuisanceSpec { crossfit_folds: 2, seed, ..NuisanceSpec::default() };
        for id in applicable(&ds) {
            for spec in [NuisanceSpec::default(), spec.clone()] {
                let a = estimators::run(id, &ds, &spec).unwrap();
                let b = estimators::run(id, &shifted, &spec).unwrap();
                for e in Effect::ALL {
                    prop_assert!((a.get(e) - b.get(e)).abs() < TOL, "{id} {e:?}");
                }
            }
        }
    }

    #[test]
    fn row_permutation(setting in mild_setting(), seed in any::<u64>()) {
        let ds = simulated(setting, 300, seed);
        let mut rows: Vec<usize> = (0..ds.n()).collect();
        rows.reverse();
        rows.rotate_left((seed % 300) as usize);
        let shuffled = ds.select_rows(&rows);
        for id in applicable(&ds) {
            let a = estimators::run(id, &ds, &NuisanceSpec::default()).unwrap();
            let b = estimators::run(id, &shuffled, &NuisanceSpec::default()).unwrap();
            assert_close(&a, &b, TOL)?;
        }
    }

    #[test]
    fn folds_partition_rows(n in 2usize..500, folds in 2usize..10, seed in any::<u64>()) {
        prop_assume!(n >= folds);
        let parts = fold_partition(n, folds, seed).unwrap();
        prop_assert_eq!(parts.len(), folds);
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn ridge_limit_matches_least_squares(seed in any::<u64>()) {
        let ds = simulated(5, 200, seed);
        let ridge = NuisanceSpec { ridge_grid: vec![1e-12], ..NuisanceSpec::with_family(ModelFamily::LinearRidgeCv) };
        let a = fit_regressor(&ds.x, &ds.y, &NuisanceSpec::default()).unwrap();
        let b = fit_regressor(&ds.x, &ds.y, &ridge).unwrap();
        for i in 0..ds.n() {
            let row: Vec<f64> = ds.x.row(i).iter().copied().collect();
            prop_assert!((a.predict(&row) - b.predict(&row)).abs() <= 1e-8);
        }
    }

    #[test]
    fn percentile_ignores_duplication(
        mut v in prop::collection::vec(-1e3f64..1e3, 1..300),
        q in 0.0f64..=1.0,
        copies in 2usize..5,
    ) {
        v.sort_by(f64::total_cmp);
        let mut dup: Vec<f64> = v.iter().flat_map(|&x| std::iter::repeat_n(x, copies)).collect();
        dup.sort_by(f64::total_cmp);
        prop_assert_eq!(percentile(&v, q), percentile(&dup, q));
    }

    #[test]
    fn aggregation_is_linear(
        errs in prop::collection::vec(-2.0f64..2.0, 2..40),
        split in 1usize..39,
    ) {
        prop_assume!(split < errs.len());
        let truth = EffectEstimates::from_fn(|_| 1.5);
        let records: Vec<BenchmarkRecord> = errs
            .iter()
            .enumerate()
            .map(|(r, &d)| BenchmarkRecord {
                setting_id: 1,
                n: 100,
                estimator: EstimatorId::Ipw,
                variant: "linear".into(),
                crossfit: false,
                repetition: r,
                data_seed: r as u64,
                truth,
                estimate: Some(EffectEstimates::from_fn(|_| 1.5 + d)),
                error: None,
                ci: Some((EffectEstimates::from_fn(|_| 1.5 + d - 0.5), EffectEstimates::from_fn(|_| 1.5 + d + 0.5))),
                bootstrap_b: 10,
                bootstrap_failed: 0,
                wall_time_ms: 0.0,
            })
            .collect();
        let refs: Vec<&BenchmarkRecord> = records.iter().collect();
        let (head, tail) = refs.split_at(split);
        let all = summarize(&refs).unwrap();
        let a = summarize(head).unwrap();
        let b = summarize(tail).unwrap();
        let (wa, wb) = (head.len() as f64, tail.len() as f64);
        for k in 0..5 {
            let m = |s: &medestim::inference::GroupSummary| {
                let e = &s.effects[k];
                (e.relative_error.unwrap().mean, e.absolute_error.unwrap().mean, e.coverage.unwrap(), e.mean_ci_width.unwrap())
            };
            let (x, y, z) = (m(&all), m(&a), m(&b));
            prop_assert!((x.0 - (wa * y.0 + wb * z.0) / (wa + wb)).abs() < 1e-12);
            prop_assert!((x.1 - (wa * y.1 + wb * z.1) / (wa + wb)).abs() < 1e-12);
            prop_assert!((x.2 - (wa * y.2 + wb * z.2) / (wa + wb)).abs() < 1e-12);
            prop_assert!((x.3 - (wa * y.3 + wb * z.3) / (wa + wb)).abs() < 1e-12);
        }
    }

    #[test]
    fn coverage_predicate(truth in -5.0f64..5.0, lo in -5.0f64..5.0, w in 0.0f64..5.0) {
        let hi = lo + w;
        prop_assert_eq!(medestim::inference::covered(truth, lo, hi), !(truth < lo || truth > hi));
    }
}

#[test]
fn classifier_outputs_are_clipped() {
    let n = 200;
    let x = DMatrix::from_fn(n, 1, |i, _| i as f64 - 100.0);
    let t: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i >= 100))).collect();
    for eps in [1e-6, 1e-3, 0.05] {
        let spec = NuisanceSpec { clip_eps: eps, ..NuisanceSpec::default() };
        let clf = fit_classifier(&x, &t, &spec).unwrap();
        let queries = DMatrix::from_fn(100_000, 1, |i, _| (i as f64 - 50_000.0) * 0.01);
        for q in clf.predict_proba_rows(&queries) {
            assert!((eps..=1.0 - eps).contains(&q), "{q} outside [{eps}, {}]", 1.0 - eps);
        }
    }
}

#[test]
fn linear_fits_are_deterministic() {
    let ds = simulated(13, 300, 4);
    for family in [ModelFamily::LinearUnregularized, ModelFamily::LinearRidgeCv, ModelFamily::Forest] {
        let spec = NuisanceSpec { seed: 8, crossfit_folds: 2, ..NuisanceSpec::with_family(family) };
        for id in [EstimatorId::Ipw, EstimatorId::Dml] {
            let a = estimators::run(id, &ds, &spec).unwrap();
            let b = estimators::run(id, &ds, &spec).unwrap();
            assert_eq!(a.to_array().map(f64::to_bits), b.to_array().map(f64::to_bits));
        }
    }
}

#[test]
fn multiply_robust_requires_binary_mediator() {
    let ds = simulated(5, 100, 0);
    assert_eq!(ds.mediator_kind, MediatorKind::Continuous1D);
    assert!(matches!(
        estimators::run(EstimatorId::MultiplyRobust, &ds, &NuisanceSpec::default()),
        Err(Error::UnsupportedMediator { .. })
    ));
}
