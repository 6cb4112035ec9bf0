//! Stability-region characterization for the exclusive-assignment system.
//!
//! A rate vector `(lambda_s_1, ..., lambda_s_Ms)` is stably supportable when
//! some per-slot assignment distribution serves every user faster than its
//! arrivals. The region's envelope is traced by fixing all rates but one and
//! maximizing the remaining rate, which is a linear program in either of two
//! equivalent variable sets:
//!
//! * over the assignment marginals `omega[j][k] = Pr{user k on band j}`
//!   (`M_p * M_s` variables, the practical formulation), or
//! * over the joint assignment probabilities `q(m_1, ..., m_Ms)`, one per
//!   permutation (exponentially many; kept as a cross-check oracle).
//!
//! The 2x2 case additionally has a closed-form case analysis over the single
//! free parameter `epsilon = omega[1][0] = omega[0][1]`, used to validate the
//! LP path end to end.

use crate::error::{Error, Result};
use crate::model::SuccessMatrix;
use crate::simplex::{self, LinearProgram, LpOutcome, RelOp};
use itertools::Itertools;
use rayon::prelude::*;

/// Enumeration guard for the permutation-variable program.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Slack tolerated when validating assignment-matrix sums.
pub const CONSTRAINT_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Assignment matrices and queries
// ---------------------------------------------------------------------------

/// Per-slot assignment marginals: `omega[j][k]` is the probability that
/// secondary user `k` operates on band `j` in a slot.
///
/// Rows (bands) and columns (users) each sum to at most one: a band carries
/// at most one user and a user occupies at most one band.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    omega: Vec<f64>,
    num_bands: usize,
    num_sus: usize,
}

impl AssignmentMatrix {
    /// Validates entries and row/column sums (tolerance [`CONSTRAINT_TOL`]);
    /// entries within `1e-12` below zero are clamped to zero.
    pub fn new(num_bands: usize, num_sus: usize, mut omega: Vec<f64>) -> Result<Self> {
        if omega.len() != num_bands * num_sus {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {num_bands}x{num_sus} assignment matrix",
                omega.len()
            )));
        }
        for v in omega.iter_mut() {
            if *v < 0.0 {
                if *v < -1e-12 {
                    return Err(Error::ConstraintViolation(format!("negative assignment probability {v}")));
                }
                *v = 0.0;
            }
            if *v > 1.0 + CONSTRAINT_TOL {
                return Err(Error::ConstraintViolation(format!("assignment probability {v} exceeds 1")));
            }
        }
        let m = Self { omega, num_bands, num_sus };
        for j in 0..num_bands {
            let s = m.row_sum(j);
            if s > 1.0 + CONSTRAINT_TOL {
                return Err(Error::ConstraintViolation(format!("band {j} carries total probability {s}")));
            }
        }
        for k in 0..num_sus {
            let s = m.col_sum(k);
            if s > 1.0 + CONSTRAINT_TOL {
                return Err(Error::ConstraintViolation(format!("user {k} is assigned total probability {s}")));
            }
        }
        Ok(m)
    }

    pub fn num_bands(&self) -> usize {
        self.num_bands
    }

    pub fn num_sus(&self) -> usize {
        self.num_sus
    }

    pub fn get(&self, band: usize, su: usize) -> f64 {
        self.omega[band * self.num_sus + su]
    }

    /// Total probability that band `band` is occupied.
    pub fn row_sum(&self, band: usize) -> f64 {
        (0..self.num_sus).map(|k| self.get(band, k)).sum()
    }

    /// Total probability that user `su` holds a band.
    pub fn col_sum(&self, su: usize) -> f64 {
        (0..self.num_bands).map(|j| self.get(j, su)).sum()
    }

    /// Mean service rate of `su` under these marginals:
    /// `sum_j omega[j][su] * P[j][su]`.
    pub fn service_rate(&self, p: &SuccessMatrix, su: usize) -> f64 {
        (0..self.num_bands).map(|j| self.get(j, su) * p.get(j, su)).sum()
    }
}

/// An envelope query: which user's rate to maximize, holding the others at
/// fixed values.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionQuery {
    target_su: usize,
    fixed: Vec<f64>,
}

impl RegionQuery {
    /// Query maximizing `target_su` with every other rate fixed at zero.
    pub fn new(num_sus: usize, target_su: usize) -> Result<Self> {
        if target_su >= num_sus {
            return Err(Error::IndexOutOfBounds { what: "user", index: target_su, len: num_sus });
        }
        Ok(Self { target_su, fixed: vec![0.0; num_sus] })
    }

    /// Fixes the rate of a non-target user.
    pub fn with_rate(mut self, su: usize, rate: f64) -> Result<Self> {
        if su >= self.fixed.len() {
            return Err(Error::IndexOutOfBounds { what: "user", index: su, len: self.fixed.len() });
        }
        if su == self.target_su {
            return Err(Error::InvalidParameter {
                what: "fixed rate on the maximized user".into(),
                value: rate,
            });
        }
        if !(rate >= 0.0) {
            return Err(Error::InvalidParameter { what: format!("fixed rate of user {su}"), value: rate });
        }
        self.fixed[su] = rate;
        Ok(self)
    }

    pub fn target_su(&self) -> usize {
        self.target_su
    }

    pub fn num_sus(&self) -> usize {
        self.fixed.len()
    }

    /// Fixed rate of `su` (zero for the target).
    pub fn fixed_rate(&self, su: usize) -> f64 {
        self.fixed[su]
    }
}

/// One point of the stability envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePoint {
    /// Whether the fixed rates are supportable at all.
    pub feasible: bool,
    /// Full rate vector; the target entry holds the achieved maximum
    /// (zero when infeasible).
    pub rates: Vec<f64>,
    /// Maximizing assignment marginals, absent when infeasible.
    pub omega_star: Option<AssignmentMatrix>,
}

// ---------------------------------------------------------------------------
// LP over the assignment marginals
// ---------------------------------------------------------------------------

fn check_query(p: &SuccessMatrix, query: &RegionQuery) -> Result<()> {
    if query.num_sus() != p.num_sus() {
        return Err(Error::DimensionMismatch(format!(
            "query over {} users, success matrix has {}",
            query.num_sus(),
            p.num_sus()
        )));
    }
    Ok(())
}

fn envelope_point(
    query: &RegionQuery,
    outcome: LpOutcome,
    omega_of_x: impl FnOnce(&[f64]) -> Result<AssignmentMatrix>,
) -> Result<EnvelopePoint> {
    match outcome {
        LpOutcome::Optimal { x, objective } => {
            let mut rates: Vec<f64> = (0..query.num_sus()).map(|k| query.fixed_rate(k)).collect();
            rates[query.target_su()] = objective;
            Ok(EnvelopePoint { feasible: true, rates, omega_star: Some(omega_of_x(&x)?) })
        }
        LpOutcome::Infeasible => Ok(EnvelopePoint {
            feasible: false,
            rates: (0..query.num_sus()).map(|k| query.fixed_rate(k)).collect(),
            omega_star: None,
        }),
        // Objectives are bounded by max_j P[j][k] <= 1; unboundedness would
        // be a solver defect.
        LpOutcome::Unbounded => Err(Error::ConstraintViolation(
            "bounded envelope program reported unbounded".into(),
        )),
    }
}

/// Maximizes the target user's stable arrival rate over the assignment
/// marginals.
///
/// Variables `omega[j][k]`; constraints: row sums <= 1, column sums <= 1,
/// and `sum_j omega[j][l] P[j][l] >= lambda_l` for every non-target user
/// `l`. Infeasibility is reported in the returned point, not as an error.
pub fn max_rate_lp(p: &SuccessMatrix, query: &RegionQuery) -> Result<EnvelopePoint> {
    check_query(p, query)?;
    let (mp, ms) = (p.num_bands(), p.num_sus());
    let k = query.target_su();
    let var = |j: usize, su: usize| j * ms + su;

    let mut objective = vec![0.0; mp * ms];
    for j in 0..mp {
        objective[var(j, k)] = p.get(j, k);
    }
    let mut lp = LinearProgram::new(objective);
    for j in 0..mp {
        let mut coeffs = vec![0.0; mp * ms];
        for su in 0..ms {
            coeffs[var(j, su)] = 1.0;
        }
        lp.constrain(coeffs, RelOp::Le, 1.0);
    }
    for su in 0..ms {
        let mut coeffs = vec![0.0; mp * ms];
        for j in 0..mp {
            coeffs[var(j, su)] = 1.0;
        }
        lp.constrain(coeffs, RelOp::Le, 1.0);
    }
    for l in 0..ms {
        if l == k {
            continue;
        }
        let mut coeffs = vec![0.0; mp * ms];
        for j in 0..mp {
            coeffs[var(j, l)] = p.get(j, l);
        }
        lp.constrain(coeffs, RelOp::Ge, query.fixed_rate(l));
    }

    envelope_point(query, simplex::solve(&lp)?, |x| {
        AssignmentMatrix::new(mp, ms, x.to_vec())
    })
}

/// Finds marginals supporting a complete rate point, maximizing the uniform
/// service margin: `maximize t` subject to the assignment constraints and
/// `sum_j omega[j][l] P[j][l] >= lambda_l + t` for every user.
///
/// This is the operating-point solve used when no single user is being
/// maximized; the margin makes the returned schedule robust rather than
/// boundary-tight. Returns `None` when the rates are not supportable at all.
pub fn max_slack_assignment(
    p: &SuccessMatrix,
    rates: &[f64],
) -> Result<Option<(AssignmentMatrix, f64)>> {
    if rates.len() != p.num_sus() {
        return Err(Error::DimensionMismatch(format!(
            "{} rates for {} users",
            rates.len(),
            p.num_sus()
        )));
    }
    for (k, &r) in rates.iter().enumerate() {
        if !(r >= 0.0) {
            return Err(Error::InvalidParameter { what: format!("rate of user {k}"), value: r });
        }
    }
    let (mp, ms) = (p.num_bands(), p.num_sus());
    let nv = mp * ms + 1; // omega entries, then the margin t
    let var = |j: usize, su: usize| j * ms + su;

    let mut objective = vec![0.0; nv];
    objective[nv - 1] = 1.0;
    let mut lp = LinearProgram::new(objective);
    for j in 0..mp {
        let mut coeffs = vec![0.0; nv];
        for su in 0..ms {
            coeffs[var(j, su)] = 1.0;
        }
        lp.constrain(coeffs, RelOp::Le, 1.0);
    }
    for su in 0..ms {
        let mut coeffs = vec![0.0; nv];
        for j in 0..mp {
            coeffs[var(j, su)] = 1.0;
        }
        lp.constrain(coeffs, RelOp::Le, 1.0);
    }
    for (l, &rate) in rates.iter().enumerate() {
        let mut coeffs = vec![0.0; nv];
        for j in 0..mp {
            coeffs[var(j, l)] = p.get(j, l);
        }
        coeffs[nv - 1] = -1.0;
        lp.constrain(coeffs, RelOp::Ge, rate);
    }
    // The margin cannot exceed any user's best rate; keeps phase 2 bounded.
    let mut cap = vec![0.0; nv];
    cap[nv - 1] = 1.0;
    lp.constrain(cap, RelOp::Le, 1.0);

    match simplex::solve(&lp)? {
        LpOutcome::Optimal { x, objective } => {
            let omega = AssignmentMatrix::new(mp, ms, x[..mp * ms].to_vec())?;
            Ok(Some((omega, objective)))
        }
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::ConstraintViolation(
            "bounded margin program reported unbounded".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// LP over the joint assignment probabilities (cross-check oracle)
// ---------------------------------------------------------------------------

/// All exclusive assignments as band-per-user vectors (`None` = off-air on a
/// virtual band). With more users than bands, exactly `M_p` users hold the
/// real bands in every assignment.
fn enumerate_assignments(mp: usize, ms: usize) -> Vec<Vec<Option<usize>>> {
    if mp >= ms {
        (0..mp)
            .permutations(ms)
            .map(|bands| bands.into_iter().map(Some).collect())
            .collect()
    } else {
        (0..ms)
            .permutations(mp)
            .map(|users| {
                let mut a = vec![None; ms];
                for (band, su) in users.into_iter().enumerate() {
                    a[su] = Some(band);
                }
                a
            })
            .collect()
    }
}

/// Solves the same envelope query over the joint permutation probabilities
/// `q(m_1, ..., m_Ms)`.
///
/// Exists as an independent route to the optimum of [`max_rate_lp`]; the two
/// agree to solver tolerance on every instance. Guarded by
/// [`ENUMERATION_LIMIT`] since the variable count is the full assignment
/// count.
pub fn max_rate_lp_over_q(p: &SuccessMatrix, query: &RegionQuery) -> Result<EnvelopePoint> {
    check_query(p, query)?;
    let (mp, ms) = (p.num_bands(), p.num_sus());
    let (count, _) = crate::model::assignment_count(mp, ms)?;
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationLimit { count, limit: ENUMERATION_LIMIT });
    }

    let assignments = enumerate_assignments(mp, ms);
    let k = query.target_su();
    let rate_of = |a: &[Option<usize>], su: usize| a[su].map_or(0.0, |j| p.get(j, su));

    let objective: Vec<f64> = assignments.iter().map(|a| rate_of(a, k)).collect();
    let mut lp = LinearProgram::new(objective);
    lp.constrain(vec![1.0; assignments.len()], RelOp::Eq, 1.0);
    for l in 0..ms {
        if l == k {
            continue;
        }
        let coeffs: Vec<f64> = assignments.iter().map(|a| rate_of(a, l)).collect();
        lp.constrain(coeffs, RelOp::Ge, query.fixed_rate(l));
    }

    envelope_point(query, simplex::solve(&lp)?, |q| {
        let mut omega = vec![0.0; mp * ms];
        for (a, &weight) in assignments.iter().zip(q) {
            for (su, band) in a.iter().enumerate() {
                if let Some(j) = band {
                    omega[j * ms + su] += weight;
                }
            }
        }
        AssignmentMatrix::new(mp, ms, omega)
    })
}

// ---------------------------------------------------------------------------
// Closed-form 2x2 case analysis
// ---------------------------------------------------------------------------

/// Result of the 2x2 closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm2x2 {
    /// Whether `lambda_s1` is supportable at all.
    pub feasible: bool,
    /// Optimal swap probability `epsilon = Pr{user 1 on band 2}`;
    /// `NaN` when infeasible.
    pub epsilon: f64,
    /// Maximum stable rate of user 2; `NaN` when infeasible.
    pub lambda_s2_max: f64,
}

/// Closed-form solution of the 2x2 envelope:
/// maximize `eps*P12 + (1-eps)*P22` subject to
/// `lambda_s1 <= eps*P21 + (1-eps)*P11`, `0 <= eps <= 1`.
///
/// With two bands and two users the marginals reduce to the single swap
/// probability `epsilon` (user 1 on band 2 exactly when user 2 is on
/// band 1). The optimum is `epsilon = 1` or `0` pushed against the
/// feasibility interval of the constraint, with the degenerate
/// `P12 = P22` case resolved to the smallest feasible `epsilon`.
pub fn closed_form_2x2(p: &SuccessMatrix, lambda_s1: f64) -> Result<ClosedForm2x2> {
    if p.num_bands() != 2 || p.num_sus() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "closed form requires a 2x2 success matrix, got {}x{}",
            p.num_bands(),
            p.num_sus()
        )));
    }
    if !(lambda_s1 >= 0.0) {
        return Err(Error::InvalidParameter { what: "lambda_s1".into(), value: lambda_s1 });
    }
    let (p11, p12) = (p.get(0, 0), p.get(0, 1));
    let (p21, p22) = (p.get(1, 0), p.get(1, 1));

    // Feasible epsilon interval from lambda_s1 - P11 <= eps (P21 - P11).
    let slope = p21 - p11;
    let rhs = lambda_s1 - p11;
    let (lo, hi) = if slope > 0.0 {
        ((rhs / slope).max(0.0), 1.0)
    } else if slope < 0.0 {
        (0.0, (rhs / slope).min(1.0))
    } else if rhs <= 0.0 {
        (0.0, 1.0)
    } else {
        (1.0, 0.0) // empty
    };
    if lo > hi {
        return Ok(ClosedForm2x2 { feasible: false, epsilon: f64::NAN, lambda_s2_max: f64::NAN });
    }

    // Objective slope P12 - P22 picks an endpoint; ties take the smallest
    // feasible epsilon.
    let epsilon = if p12 > p22 { hi } else { lo };
    Ok(ClosedForm2x2 {
        feasible: true,
        epsilon,
        lambda_s2_max: epsilon * p12 + (1.0 - epsilon) * p22,
    })
}

// ---------------------------------------------------------------------------
// Envelope sweeps
// ---------------------------------------------------------------------------

/// One sweep sample: the swept rate and the envelope point at it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub sweep_rate: f64,
    pub point: EnvelopePoint,
}

/// Traces a 2-D slice of the envelope: sweeps user `sweep_su` from zero to
/// its own maximum supportable rate (given `other_rates`), maximizing
/// `target_su` at each of `grid_size` equally spaced points.
///
/// `other_rates` fixes the remaining users; entries for `target_su` and
/// `sweep_su` are not allowed. Infeasible grid points are returned marked
/// rather than dropped.
pub fn envelope_sweep(
    p: &SuccessMatrix,
    target_su: usize,
    sweep_su: usize,
    other_rates: &[(usize, f64)],
    grid_size: usize,
) -> Result<Vec<SweepPoint>> {
    if target_su == sweep_su {
        return Err(Error::InvalidParameter {
            what: "sweep user equal to target user".into(),
            value: sweep_su as f64,
        });
    }
    if grid_size < 2 {
        return Err(Error::InvalidParameter { what: "grid size".into(), value: grid_size as f64 });
    }
    let base = |target: usize| -> Result<RegionQuery> {
        let mut q = RegionQuery::new(p.num_sus(), target)?;
        for &(su, rate) in other_rates {
            if su == target_su || su == sweep_su {
                return Err(Error::InvalidParameter {
                    what: format!("fixed rate given for swept/target user {su}"),
                    value: rate,
                });
            }
            q = q.with_rate(su, rate)?;
        }
        Ok(q)
    };

    // Standalone maximum of the swept user (target held at zero).
    let sweep_max_point = max_rate_lp(p, &base(sweep_su)?)?;
    let sweep_max = if sweep_max_point.feasible {
        sweep_max_point.rates[sweep_su]
    } else {
        0.0
    };

    let step = sweep_max / (grid_size - 1) as f64;
    (0..grid_size)
        .into_par_iter()
        .map(|i| {
            let rate = if i + 1 == grid_size { sweep_max } else { step * i as f64 };
            let query = base(target_su)?.with_rate(sweep_su, rate)?;
            let point = if sweep_max_point.feasible {
                max_rate_lp(p, &query)?
            } else {
                EnvelopePoint {
                    feasible: false,
                    rates: (0..query.num_sus()).map(|k| query.fixed_rate(k)).collect(),
                    omega_star: None,
                }
            };
            Ok(SweepPoint { sweep_rate: rate, point })
        })
        .collect()
}
