//! Dense two-phase simplex for small linear programs in standard form
//! `min c·x  s.t.  A x = b, x ≥ 0`, with Bland's rule against cycling.

/// Default feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-9;

const PIVOT_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Optimal phase-one objective (sum of artificial variables).
    pub infeasibility: f64,
}

struct Tableau {
    /// rows × (cols + 1); last column is the right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = col;
    }

    /// Reduced costs of `cost` with respect to the current basis.
    fn reduced(&self, cost: &[f64]) -> Vec<f64> {
        let mut d: Vec<f64> = cost.to_vec();
        d.push(0.0);
        for (r, row) in self.rows.iter().enumerate() {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for (dj, v) in d.iter_mut().zip(row) {
                    *dj -= cb * v;
                }
            }
        }
        d
    }

    /// Runs simplex iterations on columns `allowed`; returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> bool {
        let max_iter = 50 * (self.rows.len() + self.cols + 10);
        for _ in 0..max_iter {
            let d = self.reduced(cost);
            let Some(col) = (0..allowed).find(|&j| d[j] < -PIVOT_EPS && !self.basis.contains(&j)) else {
                return true;
            };
            let rhs = self.cols;
            let mut best: Option<(f64, usize)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if row[col] > PIVOT_EPS {
                    let ratio = row[rhs] / row[col];
                    best = match best {
                        None => Some((ratio, r)),
                        Some((br, bi)) => {
                            if ratio < br - PIVOT_EPS
                                || ((ratio - br).abs() <= PIVOT_EPS && self.basis[r] < self.basis[bi])
                            {
                                Some((ratio, r))
                            } else {
                                Some((br, bi))
                            }
                        }
                    };
                }
            }
            match best {
                Some((_, r)) => self.pivot(r, col),
                None => return false,
            }
        }
        true
    }

    fn solution(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.rows[r][self.cols];
            }
        }
        x
    }
}

/// Solves `min c·x, A x = b, x ≥ 0`. `a` is row-major with `c.len()` columns.
pub fn solve(c: &[f64], a: &[Vec<f64>], b: &[f64], tol: f64) -> LpSolution {
    let n = c.len();
    let m = a.len();
    let cols = n + m;
    let mut rows = Vec::with_capacity(m);
    for (i, (row, &bi)) in a.iter().zip(b).enumerate() {
        let sign = if bi < 0.0 { -1.0 } else { 1.0 };
        let mut r: Vec<f64> = row.iter().map(|v| v * sign).collect();
        r.resize(cols, 0.0);
        r[n + i] = 1.0;
        r.push(bi * sign);
        rows.push(r);
    }
    let mut t = Tableau { rows, basis: (n..n + m).collect(), cols };

    let mut phase1 = vec![0.0; cols];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    t.optimize(&phase1, cols);
    let infeasibility: f64 = t
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &bv)| bv >= n)
        .map(|(r, _)| t.rows[r][cols])
        .sum();
    if infeasibility > tol {
        return LpSolution { status: LpStatus::Infeasible, x: t.solution(n), objective: f64::NAN, infeasibility };
    }
    // Drive remaining artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| t.rows[r][j].abs() > 1e-9) {
                t.pivot(r, col);
            } else {
                t.rows.remove(r);
                t.basis.remove(r);
                continue;
            }
        }
        r += 1;
    }
    let mut phase2 = c.to_vec();
    phase2.resize(cols, 0.0);
    let bounded = t.optimize(&phase2, n);
    let x = t.solution(n);
    let objective = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    LpSolution {
        status: if bounded { LpStatus::Optimal } else { LpStatus::Unbounded },
        x,
        objective,
        infeasibility,
    }
}

/// Feasibility of `A x = b, x ≥ 0`.
pub fn feasible(a: &[Vec<f64>], b: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = a.first().map_or(0, |r| r.len());
    let sol = solve(&vec![0.0; n], a, b, tol);
    (sol.status != LpStatus::Infeasible).then_some(sol.x)
}
