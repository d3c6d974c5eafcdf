//! Dense two-phase primal simplex with Bland's rule.
//!
//! Solves `min cᵀx` subject to linear rows `aᵢᵀx {≤,≥,=} bᵢ` and `x ≥ 0`.
//! Entering columns are chosen by lowest index among improving columns and
//! ratio-test ties go to the lowest basic index, so the pivot sequence (and
//! therefore the optimal vertex returned) is a deterministic function of
//! the input.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn push(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        let n = self.objective.len();
        for c in &self.constraints {
            if c.coeffs.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "constraint row",
                    expected: n,
                    found: c.coeffs.len(),
                });
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("linear program"));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear program objective"));
        }
        Tableau::build(self).run(&self.objective)
    }
}

struct Tableau {
    /// `m` constraint rows followed by the objective row; the last column
    /// is the right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_vars: usize,
    /// Columns `first_artificial..width` are artificial.
    first_artificial: usize,
    width: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.objective.len();
        let m = lp.constraints.len();
        // Normalize to non-negative right-hand sides.
        let normalized: Vec<(Vec<f64>, Relation, f64)> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < 0.0 {
                    let flipped = match c.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (c.coeffs.iter().map(|v| -v).collect(), flipped, -c.rhs)
                } else {
                    (c.coeffs.clone(), c.relation, c.rhs)
                }
            })
            .collect();

        let n_slack = normalized.iter().filter(|(_, r, _)| *r != Relation::Eq).count();
        let n_art = normalized.iter().filter(|(_, r, _)| *r != Relation::Le).count();
        let first_artificial = n + n_slack;
        let width = first_artificial + n_art;

        let mut rows = vec![vec![0.0; width + 1]; m + 1];
        let mut basis = vec![0; m];
        let mut slack = n;
        let mut art = first_artificial;
        for (i, (coeffs, rel, rhs)) in normalized.into_iter().enumerate() {
            rows[i][..n].copy_from_slice(&coeffs);
            rows[i][width] = rhs;
            match rel {
                Relation::Le => {
                    rows[i][slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    rows[i][slack] = -1.0;
                    slack += 1;
                    rows[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    rows[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        Self {
            rows,
            basis,
            n_vars: n,
            first_artificial,
            width,
        }
    }

    fn m(&self) -> usize {
        self.basis.len()
    }

    /// Loads reduced costs for `cost` (indexed by column) into the objective row.
    fn price(&mut self, cost: &[f64]) {
        let m = self.m();
        let width = self.width;
        let mut obj = vec![0.0; width + 1];
        obj[..cost.len()].copy_from_slice(cost);
        for i in 0..m {
            let cb = cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(&self.rows[i]) {
                    *o -= cb * v;
                }
            }
        }
        self.rows[m] = obj;
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.width;
        let piv = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let factor = r[col];
            if factor != 0.0 {
                for j in 0..=width {
                    r[j] -= factor * pivot_row[j];
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    /// Runs Bland-rule pivots over columns `< allowed`. Returns `false` if
    /// the objective is unbounded below.
    fn optimize(&mut self, allowed: usize, pivots: &mut usize) -> Result<bool> {
        let m = self.m();
        let width = self.width;
        loop {
            let entering = (0..allowed).find(|&j| self.rows[m][j] < -COST_TOL);
            let Some(col) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.rows[i][col];
                if a > PIVOT_TOL {
                    let ratio = self.rows[i][width] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            let tie = (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs());
                            if (ratio < lr && !tie) || (tie && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Ok(false);
            };
            self.pivot(row, col);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(Error::PivotLimit(MAX_PIVOTS));
            }
        }
    }

    fn run(mut self, cost: &[f64]) -> Result<LpOutcome> {
        let m = self.m();
        let width = self.width;
        let mut pivots = 0;

        if self.first_artificial < width {
            let mut phase1 = vec![0.0; width];
            phase1[self.first_artificial..].fill(1.0);
            self.price(&phase1);
            self.optimize(width, &mut pivots)?;
            let infeasibility = -self.rows[m][width];
            let scale = 1.0 + self.rows[..m].iter().map(|r| r[width].abs()).fold(0.0, f64::max);
            if infeasibility > 1e-9 * scale {
                return Ok(LpOutcome::Infeasible);
            }
            // Drive zero-level artificials out of the basis where possible.
            for i in 0..m {
                if self.basis[i] >= self.first_artificial {
                    if let Some(col) =
                        (0..self.first_artificial).find(|&j| self.rows[i][j].abs() > PIVOT_TOL)
                    {
                        self.pivot(i, col);
                    }
                }
            }
        }

        self.price(cost);
        if !self.optimize(self.first_artificial, &mut pivots)? {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; self.n_vars];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_vars {
                x[b] = self.rows[i][width].max(0.0);
            }
        }
        let objective = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpOutcome::Optimal { x, objective })
    }
}
