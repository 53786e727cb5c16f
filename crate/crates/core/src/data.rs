//! Core domain types: the observed dataset, mediator kinds and the five
//! mediation effects.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Type and dimension of the mediator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "dim")]
pub enum MediatorKind {
    #[serde(rename = "binary_1d")]
    Binary1D,
    #[serde(rename = "continuous_1d")]
    Continuous1D,
    #[serde(rename = "continuous_multi_d")]
    ContinuousMultiD(usize),
}

impl MediatorKind {
    pub fn dim(&self) -> usize {
        match *self {
            MediatorKind::Binary1D | MediatorKind::Continuous1D => 1,
            MediatorKind::ContinuousMultiD(dim) => dim,
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, MediatorKind::Binary1D)
    }

    /// Continuous kind for `dim` columns.
    pub fn continuous(dim: usize) -> Self {
        if dim == 1 {
            MediatorKind::Continuous1D
        } else {
            MediatorKind::ContinuousMultiD(dim)
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            MediatorKind::Binary1D => "binary",
            MediatorKind::Continuous1D => "continuous",
            MediatorKind::ContinuousMultiD(_) => "multidimensional",
        }
    }
}

impl fmt::Display for MediatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MediatorKind::ContinuousMultiD(dim) => write!(f, "continuous (dim {dim})"),
            other => f.write_str(other.label()),
        }
    }
}

/// Covariates `x` (n×K), binary treatment `t`, mediators `m` (n×L) and
/// outcome `y`.
///
/// Fields are public so that callers can assemble data freely; every
/// estimator re-validates before touching the numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub t: Vec<f64>,
    pub m: DMatrix<f64>,
    pub y: Vec<f64>,
    pub mediator_kind: MediatorKind,
}

impl Dataset {
    /// Builds a dataset and validates it.
    pub fn new(
        x: DMatrix<f64>,
        t: Vec<f64>,
        m: DMatrix<f64>,
        y: Vec<f64>,
        mediator_kind: MediatorKind,
    ) -> Result<Self> {
        let ds = Dataset {
            x,
            t,
            m,
            y,
            mediator_kind,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn dim_x(&self) -> usize {
        self.x.ncols()
    }

    pub fn dim_m(&self) -> usize {
        self.m.ncols()
    }

    pub fn is_treated(&self, row: usize) -> bool {
        self.t[row] == 1.0
    }

    /// Row indices with treatment equal to `arm`.
    pub fn arm_rows(&self, arm: u8) -> Vec<usize> {
        let value = f64::from(arm);
        (0..self.n()).filter(|&i| self.t[i] == value).collect()
    }

    /// Checks every dataset invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n < 2 {
            return Err(Error::ShapeMismatch(format!("need at least 2 rows, got {n}")));
        }
        if self.t.len() != n || self.x.nrows() != n || self.m.nrows() != n {
            return Err(Error::ShapeMismatch(format!(
                "rows: x={}, t={}, m={}, y={}",
                self.x.nrows(),
                self.t.len(),
                self.m.nrows(),
                n
            )));
        }
        let dim = self.mediator_kind.dim();
        if dim == 0 || self.m.ncols() != dim {
            return Err(Error::ShapeMismatch(format!(
                "mediator kind {} expects {} columns, got {}",
                self.mediator_kind,
                dim,
                self.m.ncols()
            )));
        }

        for (row, &v) in self.y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { field: "y", row });
            }
        }
        for (row, &v) in self.t.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { field: "t", row });
            }
            if v != 0.0 && v != 1.0 {
                return Err(Error::NonBinaryTreatment { row, value: v });
            }
        }
        if let Some(row) = first_non_finite_row(&self.x) {
            return Err(Error::NonFiniteValue { field: "x", row });
        }
        if let Some(row) = first_non_finite_row(&self.m) {
            return Err(Error::NonFiniteValue { field: "m", row });
        }
        if self.mediator_kind.is_binary() {
            for col in 0..self.m.ncols() {
                for row in 0..n {
                    let v = self.m[(row, col)];
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::NonBinaryMediator { row, col, value: v });
                    }
                }
            }
        }

        let treated = self.t.iter().filter(|&&v| v == 1.0).count();
        if treated == 0 || treated == n {
            return Err(Error::SingleArm);
        }
        Ok(())
    }

    /// New dataset made of the given rows (repeats allowed). Not validated.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            t: rows.iter().map(|&i| self.t[i]).collect(),
            m: self.m.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            mediator_kind: self.mediator_kind,
        }
    }
}

fn first_non_finite_row(a: &DMatrix<f64>) -> Option<usize> {
    let n = a.nrows();
    a.as_slice()
        .iter()
        .position(|v| !v.is_finite())
        .map(|pos| pos % n)
}

/// Validates a dataset, handing it back unchanged on success.
pub fn validate_dataset(ds: Dataset) -> Result<Dataset> {
    ds.validate()?;
    Ok(ds)
}

/// The five mediation effects.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EffectEstimates {
    pub total: f64,
    pub direct_1: f64,
    pub direct_0: f64,
    pub indirect_1: f64,
    pub indirect_0: f64,
}

impl EffectEstimates {
    /// Builds the effects from the four potential-outcome means
    /// `E[Y(t, M(t'))]`, indexed as `y_{t t'}`.
    pub fn from_potential_means(y11: f64, y10: f64, y01: f64, y00: f64) -> Self {
        let direct_0 = y10 - y00;
        let indirect_1 = y11 - y10;
        EffectEstimates {
            total: direct_0 + indirect_1,
            direct_1: y11 - y01,
            direct_0,
            indirect_1,
            indirect_0: y01 - y00,
        }
    }

    pub fn get(&self, effect: Effect) -> f64 {
        match effect {
            Effect::Total => self.total,
            Effect::Direct1 => self.direct_1,
            Effect::Direct0 => self.direct_0,
            Effect::Indirect1 => self.indirect_1,
            Effect::Indirect0 => self.indirect_0,
        }
    }

    pub fn set(&mut self, effect: Effect, value: f64) {
        match effect {
            Effect::Total => self.total = value,
            Effect::Direct1 => self.direct_1 = value,
            Effect::Direct0 => self.direct_0 = value,
            Effect::Indirect1 => self.indirect_1 = value,
            Effect::Indirect0 => self.indirect_0 = value,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Effect) -> f64) -> Self {
        let mut out = EffectEstimates::default();
        for effect in Effect::ALL {
            out.set(effect, f(effect));
        }
        out
    }

    pub fn to_array(&self) -> [f64; 5] {
        Effect::ALL.map(|e| self.get(e))
    }
}

/// Names one of the five effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Total,
    Direct1,
    Direct0,
    Indirect1,
    Indirect0,
}

impl Effect {
    pub const ALL: [Effect; 5] = [
        Effect::Total,
        Effect::Direct1,
        Effect::Direct0,
        Effect::Indirect1,
        Effect::Indirect0,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Effect::Total => "total",
            Effect::Direct1 => "direct_1",
            Effect::Direct0 => "direct_0",
            Effect::Indirect1 => "indirect_1",
            Effect::Indirect0 => "indirect_0",
        }
    }
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ground-truth effects of a simulation setting, with Monte-Carlo standard
/// errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueEffects {
    pub effects: EffectEstimates,
    /// `indirect_1 / total`.
    pub mediated_prop: f64,
    pub std_error: EffectEstimates,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(t: Vec<f64>, m: Vec<f64>, kind: MediatorKind) -> Dataset {
        let n = t.len();
        Dataset {
            x: DMatrix::from_fn(n, 1, |i, _| i as f64),
            t,
            m: DMatrix::from_vec(n, 1, m),
            y: vec![1.0; n],
            mediator_kind: kind,
        }
    }

    #[test]
    fn accepts_valid_binary() {
        let ds = small(vec![0., 1., 0., 1.], vec![0., 1., 1., 0.], MediatorKind::Binary1D);
        let again = validate_dataset(ds.clone()).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn single_arm() {
        let ds = small(vec![0.; 4], vec![0., 1., 1., 0.], MediatorKind::Binary1D);
        assert!(matches!(ds.validate(), Err(Error::SingleArm)));
    }

    #[test]
    fn non_binary_mediator() {
        let ds = small(vec![0., 1., 0., 1.], vec![0., 0.5, 1., 0.], MediatorKind::Binary1D);
        assert!(matches!(
            ds.validate(),
            Err(Error::NonBinaryMediator { row: 1, col: 0, .. })
        ));
        // the same values are fine for a continuous mediator
        let ds = small(vec![0., 1., 0., 1.], vec![0., 0.5, 1., 0.], MediatorKind::Continuous1D);
        assert!(ds.validate().is_ok());
    }

    #[test]
    fn non_binary_treatment_and_non_finite() {
        let ds = small(vec![0., 2., 0., 1.], vec![0.; 4], MediatorKind::Continuous1D);
        assert!(matches!(ds.validate(), Err(Error::NonBinaryTreatment { row: 1, .. })));

        let mut ds = small(vec![0., 1., 0., 1.], vec![0.; 4], MediatorKind::Continuous1D);
        ds.x[(2, 0)] = f64::NAN;
        assert!(matches!(
            ds.validate(),
            Err(Error::NonFiniteValue { field: "x", row: 2 })
        ));
        ds.x[(2, 0)] = 0.0;
        ds.y[3] = f64::INFINITY;
        assert!(matches!(
            ds.validate(),
            Err(Error::NonFiniteValue { field: "y", row: 3 })
        ));
    }

    #[test]
    fn shape_mismatch() {
        let mut ds = small(vec![0., 1., 0., 1.], vec![0.; 4], MediatorKind::Continuous1D);
        ds.y.pop();
        assert!(matches!(ds.validate(), Err(Error::ShapeMismatch(_))));

        let ds = small(vec![0., 1., 0., 1.], vec![0.; 4], MediatorKind::ContinuousMultiD(2));
        assert!(matches!(ds.validate(), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn potential_means_decomposition() {
        let e = EffectEstimates::from_potential_means(4.0, 2.5, 3.0, 1.0);
        assert_eq!(e.direct_0, 1.5);
        assert_eq!(e.indirect_1, 1.5);
        assert_eq!(e.direct_1, 1.0);
        assert_eq!(e.indirect_0, 2.0);
        assert_eq!(e.total, 3.0);
        assert_eq!(e.direct_1 + e.indirect_0, e.total);
    }
}
