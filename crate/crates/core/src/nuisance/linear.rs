//! Penalized least squares and logistic regression with an unpenalized
//! intercept.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const LOGISTIC_GRAD_TOL: f64 = 1e-8;
pub(crate) const LOGISTIC_MAX_ITER: usize = 1000;

/// `intercept + x·coef`; the logit for classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: DVector<f64>,
}

impl LinearModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.coef.len());
        self.intercept + row.iter().zip(self.coef.iter()).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn decision_rows(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let mut out = vec![self.intercept; x.nrows()];
        for (j, &c) in self.coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(x.column(j).iter()) {
                *o += c * v;
            }
        }
        out
    }
}

pub fn expit(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Solves a symmetric positive semi-definite system, falling back to an
/// SVD pseudo-inverse when the Cholesky factorization breaks down.
fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        let x = chol.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    let scale = a.diagonal().amax().max(f64::MIN_POSITIVE);
    a.svd(true, true)
        .solve(b, scale * 1e-13)
        .map_err(|e| Error::DegenerateDesign(e.to_string()))
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Ridge regression: minimizes `‖y − b − Xβ‖² + λ‖β‖²`.
pub(crate) fn ridge(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<LinearModel> {
    let n = x.nrows();
    if n != y.len() || n == 0 {
        return Err(Error::ShapeMismatch(format!(
            "design has {} rows, target has {}",
            n,
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateDesign("non-finite input".into()));
    }
    let means = column_means(x);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let mut gram = xc.tr_mul(&xc);
    for j in 0..gram.ncols() {
        gram[(j, j)] += lambda;
    }
    let rhs = xc.tr_mul(&yc);
    let coef = solve_spd(gram, &rhs)?;
    let intercept = y_mean - means.dot(&coef);
    Ok(LinearModel { intercept, coef })
}

/// L2-penalized logistic regression by damped Newton (IRLS) iterations on
/// the mean penalized log-loss, stopping one Newton step after the gradient
/// norm reaches [`LOGISTIC_GRAD_TOL`] or after [`LOGISTIC_MAX_ITER`]
/// iterations.
pub(crate) fn logistic(x: &DMatrix<f64>, t: &[f64], lambda: f64) -> Result<LinearModel> {
    let n = x.nrows();
    if n != t.len() || n == 0 {
        return Err(Error::ShapeMismatch(format!(
            "design has {} rows, target has {}",
            n,
            t.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateDesign("non-finite input".into()));
    }
    let positives = t.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == n {
        return Err(Error::SingleClass);
    }

    let d = x.ncols() + 1;
    let nf = n as f64;
    let design = DMatrix::from_fn(n, d, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let target = DVector::from_column_slice(t);

    let objective = |beta: &DVector<f64>, eta: &DVector<f64>| -> f64 {
        let loss: f64 = eta
            .iter()
            .zip(target.iter())
            .map(|(&e, &y)| softplus(e) - y * e)
            .sum();
        let penalty: f64 = beta.iter().skip(1).map(|b| b * b).sum();
        (loss + 0.5 * lambda * penalty) / nf
    };

    let mut beta = DVector::zeros(d);
    beta[0] = logit(positives as f64 / nf);
    let mut eta = &design * &beta;
    let mut obj = objective(&beta, &eta);

    for _ in 0..LOGISTIC_MAX_ITER {
        let p = eta.map(expit);
        let mut grad = design.tr_mul(&(&p - &target));
        for j in 1..d {
            grad[j] += lambda * beta[j];
        }
        grad /= nf;
        let converged = grad.norm() <= LOGISTIC_GRAD_TOL;

        let mut weighted = design.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= (p[i] * (1.0 - p[i])).sqrt();
        }
        let mut hessian = weighted.tr_mul(&weighted);
        for j in 1..d {
            hessian[(j, j)] += lambda;
        }
        hessian /= nf;
        let step = solve_spd(hessian, &grad)?;
        if converged {
            // One full Newton step past the tolerance removes the residual
            // that depends on summation order.
            let candidate = &beta - &step;
            let cand_eta = &design * &candidate;
            if objective(&candidate, &cand_eta).is_finite() {
                beta = candidate;
            }
            break;
        }

        // Steps that change the objective by less than its rounding error
        // are accepted so the gradient criterion decides convergence.
        let slack = 8.0 * f64::EPSILON * obj.abs();
        let mut scale = 1.0;
        let mut accepted = false;
        while scale > 1e-10 {
            let candidate = &beta - &step * scale;
            let cand_eta = &design * &candidate;
            let cand_obj = objective(&candidate, &cand_eta);
            if cand_obj.is_finite() && cand_obj <= obj + slack {
                beta = candidate;
                eta = cand_eta;
                obj = cand_obj;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(LinearModel {
        intercept: beta[0],
        coef: beta.rows(1, d - 1).into_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_exact_fit() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let m = ridge(&x, &[2.0, 4.0, 6.0], 1e-12).unwrap();
        assert!((m.decision(&[4.0]) - 8.0).abs() < 1e-6);
    }

    #[test]
    fn ridge_zero_variance_column() {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 3.0 } else { i as f64 });
        let y: Vec<f64> = (0..6).map(|i| 1.0 + 2.0 * i as f64).collect();
        let m = ridge(&x, &y, 1e-12).unwrap();
        assert!((m.decision(&[3.0, 10.0]) - 21.0).abs() < 1e-8);
    }

    #[test]
    fn ridge_shrinks() {
        let x = DMatrix::from_fn(20, 1, |i, _| i as f64 / 10.0);
        let y: Vec<f64> = (0..20).map(|i| i as f64 / 5.0).collect();
        let loose = ridge(&x, &y, 1e-12).unwrap();
        let tight = ridge(&x, &y, 100.0).unwrap();
        assert!(tight.coef[0].abs() < loose.coef[0].abs());
    }

    #[test]
    fn logistic_matches_known_mle() {
        // one binary feature: the MLE reproduces the per-group frequencies
        let x = DMatrix::from_column_slice(8, 1, &[0., 0., 0., 0., 1., 1., 1., 1.]);
        let t = [0., 0., 0., 1., 0., 1., 1., 1.];
        let m = logistic(&x, &t, 1e-12).unwrap();
        assert!((expit(m.decision(&[0.0])) - 0.25).abs() < 1e-8);
        assert!((expit(m.decision(&[1.0])) - 0.75).abs() < 1e-8);
    }

    #[test]
    fn logistic_separable_stays_finite() {
        let x = DMatrix::from_column_slice(6, 1, &[-3., -2., -1., 1., 2., 3.]);
        let t = [0., 0., 0., 1., 1., 1.];
        let m = logistic(&x, &t, 1e-12).unwrap();
        assert!(m.intercept.is_finite() && m.coef[0].is_finite());
        assert!(expit(m.decision(&[3.0])) > 0.99);
    }

    #[test]
    fn logistic_single_class() {
        let x = DMatrix::from_column_slice(3, 1, &[1., 2., 3.]);
        assert!(matches!(logistic(&x, &[1., 1., 1.], 1e-12), Err(Error::SingleClass)));
    }
}
