//! Discrete toy instances and an exhaustive-enumeration oracle.
#![allow(dead_code)]

use medestim::estimators::{dml_from, g_computation_explicit_from, multiply_robust_from};
use medestim::{Dataset, EffectEstimates, MediatorKind};
use nalgebra::DMatrix;

/// Rows grouped by cell: `cells[x][t][m]` holds the outcomes of that cell.
pub struct Toy {
    pub cells: Vec<[[Vec<f64>; 2]; 2]>,
}

impl Toy {
    /// Every cell receives `1 + counts[..] % 4` rows with outcomes taken
    /// cyclically from `ys`.
    pub fn new(support: usize, counts: &[usize], ys: &[f64]) -> Toy {
        let mut k = 0;
        let mut cells = Vec::with_capacity(support);
        for x in 0..support {
            let mut cell: [[Vec<f64>; 2]; 2] = Default::default();
            for (t, row) in cell.iter_mut().enumerate() {
                for (m, v) in row.iter_mut().enumerate() {
                    let c = 1 + counts[(x * 4 + t * 2 + m) % counts.len()] % 4;
                    for _ in 0..c {
                        v.push(ys[k % ys.len()] + x as f64 + 0.7 * t as f64 + 1.3 * m as f64);
                        k += 1;
                    }
                }
            }
            cells.push(cell);
        }
        Toy { cells }
    }

    pub fn dataset(&self) -> Dataset {
        let (mut xs, mut ts, mut ms, mut ys) = (vec![], vec![], vec![], vec![]);
        for (x, cell) in self.cells.iter().enumerate() {
            for (t, row) in cell.iter().enumerate() {
                for (m, v) in row.iter().enumerate() {
                    for &y in v {
                        xs.push(x as f64);
                        ts.push(t as f64);
                        ms.push(m as f64);
                        ys.push(y);
                    }
                }
            }
        }
        let n = ys.len();
        Dataset::new(
            DMatrix::from_vec(n, 1, xs),
            ts,
            DMatrix::from_vec(n, 1, ms),
            ys,
            MediatorKind::Binary1D,
        )
        .unwrap()
    }

    fn count(&self, x: usize, t: usize, m: usize) -> f64 {
        self.cells[x][t][m].len() as f64
    }

    fn mean_y(&self, x: usize, t: usize, m: usize) -> f64 {
        let v = &self.cells[x][t][m];
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// `P(M = 1 | T = t, X = x)`.
    fn p_m(&self, x: usize, t: usize) -> f64 {
        self.count(x, t, 1) / (self.count(x, t, 0) + self.count(x, t, 1))
    }

    /// Mediation formula `Σ_x P(x) Σ_m E[Y | t, m, x] P(m | t', x)` by
    /// enumeration of the support.
    pub fn oracle(&self) -> EffectEstimates {
        let total: f64 = (0..self.cells.len())
            .map(|x| (0..4).map(|c| self.count(x, c / 2, c % 2)).sum::<f64>())
            .sum();
        let psi = |t: usize, tp: usize| -> f64 {
            (0..self.cells.len())
                .map(|x| {
                    let px = (0..4).map(|c| self.count(x, c / 2, c % 2)).sum::<f64>() / total;
                    let q = self.p_m(x, tp);
                    px * (self.mean_y(x, t, 1) * q + self.mean_y(x, t, 0) * (1.0 - q))
                })
                .sum()
        };
        EffectEstimates::from_potential_means(psi(1, 1), psi(1, 0), psi(0, 1), psi(0, 0))
    }

    /// The three estimators fed with empirical-frequency nuisances.
    pub fn estimates(&self) -> [EffectEstimates; 3] {
        let ds = self.dataset();
        let n = ds.n();
        let row = |i: usize| (ds.x[(i, 0)] as usize, ds.t[i] as usize, ds.m[(i, 0)] as usize);

        let mut p = vec![0.0; n];
        let mut rho = vec![0.0; n];
        let mut mediator_prob: [Vec<f64>; 2] = [vec![0.0; n], vec![0.0; n]];
        let mut outcome: [Vec<f64>; 2] = [vec![0.0; n], vec![0.0; n]];
        let mut grid: [[Vec<f64>; 2]; 2] = Default::default();
        let mut cross: [[Vec<f64>; 2]; 2] = Default::default();
        for a in 0..2 {
            for b in 0..2 {
                grid[a][b] = vec![0.0; n];
                cross[a][b] = vec![0.0; n];
            }
        }
        for i in 0..n {
            let (x, _, m) = row(i);
            let treated = self.count(x, 1, 0) + self.count(x, 1, 1);
            let control = self.count(x, 0, 0) + self.count(x, 0, 1);
            p[i] = treated / (treated + control);
            rho[i] = self.count(x, 1, m) / (self.count(x, 1, m) + self.count(x, 0, m));
            for t in 0..2 {
                mediator_prob[t][i] = self.p_m(x, t);
                outcome[t][i] = self.mean_y(x, t, m);
                for mm in 0..2 {
                    grid[t][mm][i] = self.mean_y(x, t, mm);
                }
                for tp in 0..2 {
                    let q = self.p_m(x, tp);
                    cross[t][tp][i] = self.mean_y(x, t, 1) * q + self.mean_y(x, t, 0) * (1.0 - q);
                }
            }
        }
        [
            g_computation_explicit_from(&grid, &mediator_prob).unwrap(),
            multiply_robust_from(&ds, &p, &mediator_prob, &outcome, &cross).unwrap(),
            dml_from(&ds, &p, &rho, &outcome, &cross).unwrap(),
        ]
    }
}

/// A fixed toy instance with three covariate values.
pub fn fixed_toy() -> Toy {
    let counts = [3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8];
    let ys = [0.3, -1.2, 2.5, 0.8, -0.4, 1.9, 0.0, 3.1, -2.2, 0.6, 1.1];
    Toy::new(3, &counts, &ys)
}
