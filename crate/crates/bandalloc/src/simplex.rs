//! Dense two-phase primal simplex for the small linear programs in this
//! crate (at most a few hundred variables).
//!
//! Bland's rule is used for both the entering and leaving choices, which
//! rules out cycling and keeps the pivot sequence deterministic. Phase 1
//! minimizes the sum of artificial variables; phase 2 maximizes the caller's
//! objective.

use crate::error::{Error, Result};

/// Feasibility slack: phase-1 optimum above this value means infeasible,
/// and basic solutions are accepted with constraint residuals up to it.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Reduced-cost tolerance for optimality.
pub const REDUCED_COST_TOL: f64 = 1e-10;

/// Pivot magnitudes below this are treated as zero.
const PIVOT_TOL: f64 = 1e-11;

/// Constraint sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelOp {
    Le,
    Ge,
    Eq,
}

/// One linear constraint `coeffs . x (op) rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub op: RelOp,
    pub rhs: f64,
}

/// `maximize objective . x  s.t.  constraints, x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self { objective, constraints: Vec::new() }
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, op: RelOp, rhs: f64) {
        self.constraints.push(Constraint { coeffs, op, rhs });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }
}

/// Solver outcome. Infeasibility and unboundedness are ordinary outcomes,
/// not errors.
#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// `rows x cols` row-major; the last column is the rhs.
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    /// Basic variable per row.
    basis: Vec<usize>,
    num_structural: usize,
    artificial_start: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.at(row, col);
        for c in 0..self.cols {
            *self.at_mut(row, c) /= piv;
        }
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let factor = self.at(r, col);
            if factor == 0.0 {
                continue;
            }
            for c in 0..self.cols {
                let v = self.at(row, c);
                *self.at_mut(r, c) -= factor * v;
            }
        }
        self.basis[row] = col;
    }

    /// One simplex pass minimizing `cost . x` (cost indexed over columns,
    /// excluding rhs). `allowed` marks columns eligible to enter.
    /// Returns Ok(true) on optimality, Ok(false) on unboundedness.
    fn minimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> bool {
        loop {
            // Reduced costs z_j = cost_j - cost_B . column_j.
            let mut entering = None;
            for c in 0..self.cols - 1 {
                if !allowed(c) || self.basis.contains(&c) {
                    continue;
                }
                let mut reduced = cost[c];
                for r in 0..self.rows {
                    reduced -= cost[self.basis[r]] * self.at(r, c);
                }
                if reduced < -REDUCED_COST_TOL {
                    entering = Some(c); // Bland: first eligible index
                    break;
                }
            }
            let Some(col) = entering else { return true };

            // Ratio test; Bland ties broken by smallest basic variable.
            let rhs_col = self.cols - 1;
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, col);
                if a > PIVOT_TOL {
                    let ratio = self.at(r, rhs_col) / a;
                    match leaving {
                        None => leaving = Some((r, ratio)),
                        Some((best_r, best)) => {
                            if ratio < best - PIVOT_TOL
                                || ((ratio - best).abs() <= PIVOT_TOL
                                    && self.basis[r] < self.basis[best_r])
                            {
                                leaving = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, _)) = leaving else { return false };
            self.pivot(row, col);
        }
    }
}

/// Solves the program with the two-phase dense simplex.
pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    let n = lp.num_vars();
    let m = lp.constraints.len();
    for (i, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "constraint {i} has {} coefficients for {n} variables",
                c.coeffs.len()
            )));
        }
    }

    // Normalize rhs >= 0, count auxiliary columns.
    let mut rows: Vec<(Vec<f64>, RelOp, f64)> = lp
        .constraints
        .iter()
        .map(|c| {
            if c.rhs < 0.0 {
                let flipped = match c.op {
                    RelOp::Le => RelOp::Ge,
                    RelOp::Ge => RelOp::Le,
                    RelOp::Eq => RelOp::Eq,
                };
                (c.coeffs.iter().map(|v| -v).collect(), flipped, -c.rhs)
            } else {
                (c.coeffs.clone(), c.op, c.rhs)
            }
        })
        .collect();

    let num_slack = rows.iter().filter(|r| r.1 != RelOp::Eq).count();
    let num_art = rows.iter().filter(|r| r.1 != RelOp::Le).count();
    let cols = n + num_slack + num_art + 1;
    let mut t = Tableau {
        data: vec![0.0; m * cols],
        rows: m,
        cols,
        basis: vec![usize::MAX; m],
        num_structural: n,
        artificial_start: n + num_slack,
    };

    let mut slack_idx = n;
    let mut art_idx = n + num_slack;
    for (r, (coeffs, op, rhs)) in rows.drain(..).enumerate() {
        for (c, v) in coeffs.into_iter().enumerate() {
            *t.at_mut(r, c) = v;
        }
        *t.at_mut(r, cols - 1) = rhs;
        match op {
            RelOp::Le => {
                *t.at_mut(r, slack_idx) = 1.0;
                t.basis[r] = slack_idx;
                slack_idx += 1;
            }
            RelOp::Ge => {
                *t.at_mut(r, slack_idx) = -1.0;
                slack_idx += 1;
                *t.at_mut(r, art_idx) = 1.0;
                t.basis[r] = art_idx;
                art_idx += 1;
            }
            RelOp::Eq => {
                *t.at_mut(r, art_idx) = 1.0;
                t.basis[r] = art_idx;
                art_idx += 1;
            }
        }
    }

    // Phase 1: minimize the sum of artificials.
    if num_art > 0 {
        let mut cost = vec![0.0; cols - 1];
        cost[t.artificial_start..].fill(1.0);
        if !t.minimize(&cost, &|_| true) {
            // A feasibility objective bounded below by zero cannot be unbounded.
            return Err(Error::ConstraintViolation("phase 1 reported unbounded".into()));
        }
        let phase1: f64 = (0..m)
            .filter(|&r| t.basis[r] >= t.artificial_start)
            .map(|r| t.at(r, cols - 1))
            .sum();
        if phase1 > FEASIBILITY_TOL {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive any artificial still basic (at zero) out of the basis.
        for r in 0..m {
            if t.basis[r] < t.artificial_start {
                continue;
            }
            let pivot_col = (0..t.artificial_start).find(|&c| t.at(r, c).abs() > PIVOT_TOL);
            if let Some(c) = pivot_col {
                t.pivot(r, c);
            }
            // If no pivot exists the row is redundant; the artificial stays
            // basic at value zero and its column is barred from re-entering.
        }
    }

    // Phase 2: maximize the objective = minimize its negation.
    let mut cost = vec![0.0; cols - 1];
    for (slot, obj) in cost.iter_mut().zip(&lp.objective) {
        *slot = -obj;
    }
    let art_start = t.artificial_start;
    if !t.minimize(&cost, &|c| c < art_start) {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = vec![0.0; n];
    for r in 0..m {
        if t.basis[r] < t.num_structural {
            x[t.basis[r]] = t.at(r, cols - 1);
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome::Optimal { x, objective })
}
