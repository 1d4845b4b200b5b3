//! Dense two-phase simplex with Bland's rule.
//!
//! Sized for desk-scale dispatch problems (tens of variables). Besides the
//! primal solution it returns one dual per constraint, the sensitivity of
//! the optimal objective to that constraint's right-hand side.

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    kind: ConstraintKind,
    rhs: f64,
}

/// `min c^T x` subject to linear rows and `lower <= x <= upper`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// `d objective / d rhs` for each constraint, in insertion order.
    pub duals: Vec<f64>,
}

/// Where an original variable lives in the standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = offset + sign * y`
    Shifted { col: usize, sign: f64, offset: f64 },
    /// `x = y_pos - y_neg`
    Free { pos: usize, neg: usize },
}

impl LinearProgram {
    /// `n` variables, zero cost, bounds `[0, inf)`.
    pub fn new(n: usize) -> Self {
        Self {
            cost: vec![0.0; n],
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            rows: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.cost[var] = cost;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    /// Adds a row and returns its index.
    pub fn add_constraint(
        &mut self,
        coeffs: Vec<(usize, f64)>,
        kind: ConstraintKind,
        rhs: f64,
    ) -> usize {
        assert!(
            coeffs.iter().all(|&(j, _)| j < self.cost.len()),
            "coefficient on unknown variable"
        );
        self.rows.push(Row { coeffs, kind, rhs });
        self.rows.len() - 1
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let n = self.cost.len();
        let mut maps = Vec::with_capacity(n);
        let mut ncols = 0;
        // (column, upper bound) rows added for doubly bounded variables
        let mut bound_rows = Vec::new();
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo > hi {
                return Err(LpError::Infeasible);
            }
            let map = if lo.is_finite() {
                if hi.is_finite() {
                    bound_rows.push((ncols, hi - lo));
                }
                VarMap::Shifted {
                    col: ncols,
                    sign: 1.0,
                    offset: lo,
                }
            } else if hi.is_finite() {
                VarMap::Shifted {
                    col: ncols,
                    sign: -1.0,
                    offset: hi,
                }
            } else {
                ncols += 1;
                VarMap::Free {
                    pos: ncols - 1,
                    neg: ncols,
                }
            };
            ncols += 1;
            maps.push(map);
        }
        let structural = ncols;
        let slack_count = self
            .rows
            .iter()
            .filter(|r| r.kind != ConstraintKind::Eq)
            .count()
            + bound_rows.len();
        let nrows = self.rows.len() + bound_rows.len();
        let nstd = structural + slack_count;

        // standard form: A y = b, y >= 0
        let mut a = vec![vec![0.0; nstd]; nrows];
        let mut b = vec![0.0; nrows];
        let mut slack = structural;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rhs = row.rhs;
            for &(j, v) in &row.coeffs {
                match maps[j] {
                    VarMap::Shifted { col, sign, offset } => {
                        a[i][col] += v * sign;
                        rhs -= v * offset;
                    }
                    VarMap::Free { pos, neg } => {
                        a[i][pos] += v;
                        a[i][neg] -= v;
                    }
                }
            }
            match row.kind {
                ConstraintKind::Le => {
                    a[i][slack] = 1.0;
                    slack += 1;
                }
                ConstraintKind::Ge => {
                    a[i][slack] = -1.0;
                    slack += 1;
                }
                ConstraintKind::Eq => {}
            }
            b[i] = rhs;
        }
        for (k, &(col, ub)) in bound_rows.iter().enumerate() {
            let i = self.rows.len() + k;
            a[i][col] = 1.0;
            a[i][slack] = 1.0;
            slack += 1;
            b[i] = ub;
        }
        let mut flipped = vec![false; nrows];
        for i in 0..nrows {
            if b[i] < 0.0 {
                flipped[i] = true;
                b[i] = -b[i];
                a[i].iter_mut().for_each(|v| *v = -*v);
            }
        }

        let mut cost = vec![0.0; nstd];
        for (j, map) in maps.iter().enumerate() {
            match *map {
                VarMap::Shifted { col, sign, .. } => cost[col] = self.cost[j] * sign,
                VarMap::Free { pos, neg } => {
                    cost[pos] = self.cost[j];
                    cost[neg] = -self.cost[j];
                }
            }
        }

        let mut tab = Tableau::new(&a, &b, nstd);
        tab.phase_one()?;
        tab.phase_two(&cost)?;

        let y = tab.values();
        let x: Vec<f64> = maps
            .iter()
            .map(|map| match *map {
                VarMap::Shifted { col, sign, offset } => offset + sign * y[col],
                VarMap::Free { pos, neg } => y[pos] - y[neg],
            })
            .collect();
        let objective = x.iter().zip(&self.cost).map(|(x, c)| x * c).sum();
        let row_duals = tab.duals();
        let duals = (0..self.rows.len())
            .map(|i| {
                if flipped[i] {
                    -row_duals[i]
                } else {
                    row_duals[i]
                }
            })
            .collect();
        Ok(LpSolution {
            x,
            objective,
            duals,
        })
    }
}

/// Full tableau over `nstd` standard columns followed by one artificial
/// column per row. Row `m` holds the reduced costs; the last column holds
/// the right-hand side.
struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    m: usize,
    nstd: usize,
}

impl Tableau {
    fn new(a: &[Vec<f64>], b: &[f64], nstd: usize) -> Self {
        let m = a.len();
        let width = nstd + m + 1;
        let mut t = vec![vec![0.0; width]; m + 1];
        for i in 0..m {
            t[i][..nstd].copy_from_slice(&a[i]);
            t[i][nstd + i] = 1.0;
            t[i][width - 1] = b[i];
        }
        Self {
            t,
            basis: (nstd..nstd + m).collect(),
            m,
            nstd,
        }
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.nstd + self.m]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.t[row].len();
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for k in 0..width {
                    r[k] -= f * pivot_row[k];
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Load reduced costs for `cost` (indexed over all columns) given the current basis.
    fn price(&mut self, cost: &[f64]) {
        let width = self.t[0].len();
        let mut reduced = vec![0.0; width];
        reduced[..cost.len()].copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for k in 0..width {
                    reduced[k] -= cb * self.t[i][k];
                }
            }
        }
        self.t[self.m] = reduced;
    }

    /// Primal simplex on the loaded cost row; columns `>= allowed` never enter.
    fn iterate(&mut self, allowed: usize) -> Result<(), LpError> {
        let width = self.t[0].len();
        let max_iter = 50 * width * (self.m + 1);
        for _ in 0..max_iter {
            let Some(col) = (0..allowed).find(|&j| self.t[self.m][j] < -TOL) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let v = self.t[i][col];
                if v > TOL {
                    let ratio = self.rhs(i) / v;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - TOL
                                || (ratio <= best + TOL && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(row, col);
        }
        unreachable!("Bland's rule terminates")
    }

    fn phase_one(&mut self) -> Result<(), LpError> {
        let width = self.t[0].len();
        let mut cost = vec![0.0; width - 1];
        for c in cost.iter_mut().skip(self.nstd).take(self.m) {
            *c = 1.0;
        }
        self.price(&cost);
        self.iterate(width - 1)?;
        let scale = 1.0 + (0..self.m).map(|i| self.rhs(i).abs()).fold(0.0, f64::max);
        let infeasibility: f64 = (0..self.m)
            .filter(|&i| self.basis[i] >= self.nstd)
            .map(|i| self.rhs(i))
            .sum();
        if infeasibility > 1e-7 * scale {
            return Err(LpError::Infeasible);
        }
        // drive zero-level artificials out where a structural pivot exists
        for i in 0..self.m {
            if self.basis[i] >= self.nstd {
                if let Some(col) = (0..self.nstd).find(|&j| self.t[i][j].abs() > 1e-7) {
                    self.pivot(i, col);
                }
            }
        }
        Ok(())
    }

    fn phase_two(&mut self, cost: &[f64]) -> Result<(), LpError> {
        let mut full = cost.to_vec();
        full.resize(self.nstd + self.m, 0.0);
        self.price(&full);
        self.iterate(self.nstd)
    }

    fn values(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.nstd];
        for i in 0..self.m {
            if self.basis[i] < self.nstd {
                y[self.basis[i]] = self.rhs(i).max(0.0);
            }
        }
        y
    }

    /// Row duals; artificial column i is `e_i` with zero cost, so its
    /// reduced cost is `-y_i`.
    fn duals(&self) -> Vec<f64> {
        (0..self.m)
            .map(|i| -self.t[self.m][self.nstd + i])
            .collect()
    }
}
