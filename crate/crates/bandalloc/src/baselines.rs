//! Comparison systems: independent random band selection (collision-prone)
//! and static fixed assignment.
//!
//! Under independent selection each user picks a band from its own
//! distribution `Gamma[.][k]` every slot, with no coordination; two or more
//! backlogged users on one band destroy all their packets. The saturated
//! service rate (all competitor queues assumed busy) is
//!
//! ```text
//! mu_k = sum_j P[j][k] * Gamma[j][k] * prod_{v != k} (1 - Gamma[j][v])
//! ```
//!
//! which is a conservative inner characterization of that system's region;
//! the exact region with interacting queues is open. Maximizing it is a
//! nonconvex polynomial program, handled here by a seeded multi-start
//! projected coordinate ascent that is warm-started with the best fixed
//! assignment and the exclusive system's optimal marginals — the result is
//! a certified lower bound, never a claim of global optimality.
//!
//! Fixed assignment pins each user to one band forever; it is a special
//! case of both other systems and its envelope is computed exactly by
//! enumeration.

use crate::error::{Error, Result};
use crate::model::SuccessMatrix;
use crate::stability::{max_rate_lp, RegionQuery};
use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// Enumeration guard for [`best_fixed_envelope`].
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Default number of random starts for [`shat_optimize`].
pub const DEFAULT_RESTARTS: usize = 64;
/// Default coordinate-ascent sweeps per start.
pub const DEFAULT_ITERATIONS: usize = 200;

// ---------------------------------------------------------------------------
// Selection policies and fixed assignments
// ---------------------------------------------------------------------------

/// Per-user band-selection probabilities `gamma[j][k] = Pr{user k picks
/// band j}`. Columns sum to at most one (the remainder is the probability
/// of idling); rows are unconstrained, so collisions are possible.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionPolicy {
    gamma: Vec<f64>,
    num_bands: usize,
    num_sus: usize,
}

impl SelectionPolicy {
    pub fn new(num_bands: usize, num_sus: usize, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != num_bands * num_sus {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {num_bands}x{num_sus} selection policy",
                gamma.len()
            )));
        }
        for &v in &gamma {
            if !(-1e-12..=1.0 + 1e-9).contains(&v) {
                return Err(Error::InvalidParameter { what: "selection probability".into(), value: v });
            }
        }
        let policy = Self { gamma, num_bands, num_sus };
        for k in 0..num_sus {
            let s = policy.col_sum(k);
            if s > 1.0 + 1e-9 {
                return Err(Error::ConstraintViolation(format!(
                    "selection probabilities of user {k} sum to {s}"
                )));
            }
        }
        Ok(policy)
    }

    pub fn num_bands(&self) -> usize {
        self.num_bands
    }

    pub fn num_sus(&self) -> usize {
        self.num_sus
    }

    pub fn get(&self, band: usize, su: usize) -> f64 {
        self.gamma[band * self.num_sus + su]
    }

    fn col_sum(&self, su: usize) -> f64 {
        (0..self.num_bands).map(|j| self.get(j, su)).sum()
    }
}

/// A static injective user-to-band map. Requires at least as many bands as
/// users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedAssignment {
    band_of_su: Vec<usize>,
}

impl FixedAssignment {
    pub fn new(num_bands: usize, band_of_su: Vec<usize>) -> Result<Self> {
        if band_of_su.len() > num_bands {
            return Err(Error::DimensionMismatch(format!(
                "{} users cannot be fixed onto {num_bands} bands",
                band_of_su.len()
            )));
        }
        let mut used = vec![false; num_bands];
        for &b in &band_of_su {
            if b >= num_bands {
                return Err(Error::IndexOutOfBounds { what: "band", index: b, len: num_bands });
            }
            if used[b] {
                return Err(Error::NonInjectiveAssignment);
            }
            used[b] = true;
        }
        Ok(Self { band_of_su })
    }

    pub fn band_of(&self, su: usize) -> usize {
        self.band_of_su[su]
    }

    pub fn num_sus(&self) -> usize {
        self.band_of_su.len()
    }
}

// ---------------------------------------------------------------------------
// Service rates
// ---------------------------------------------------------------------------

/// Saturated service rates of the independent-selection system: every
/// competitor queue is assumed nonempty, so a packet survives only when no
/// other user picked the same band.
pub fn shat_service_rates_saturated(
    p: &SuccessMatrix,
    gamma: &SelectionPolicy,
) -> Result<Vec<f64>> {
    shat_service_rate_conditional(p, gamma, &vec![0.0; gamma.num_sus()])
}

/// Service rates of the independent-selection system when competitor queues
/// are empty with the given (externally estimated) probabilities, treated
/// as independent: a collision with user `v` is harmless with probability
/// `empty_probs[v]`.
///
/// `empty_probs` all zero reduces to the saturated rates; all one removes
/// contention entirely.
pub fn shat_service_rate_conditional(
    p: &SuccessMatrix,
    gamma: &SelectionPolicy,
    empty_probs: &[f64],
) -> Result<Vec<f64>> {
    if p.num_bands() != gamma.num_bands() || p.num_sus() != gamma.num_sus() {
        return Err(Error::DimensionMismatch(format!(
            "success matrix {}x{} vs selection policy {}x{}",
            p.num_bands(),
            p.num_sus(),
            gamma.num_bands(),
            gamma.num_sus()
        )));
    }
    if empty_probs.len() != gamma.num_sus() {
        return Err(Error::DimensionMismatch(format!(
            "{} empty-queue probabilities for {} users",
            empty_probs.len(),
            gamma.num_sus()
        )));
    }
    for &e in empty_probs {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::InvalidParameter { what: "empty-queue probability".into(), value: e });
        }
    }
    let mut rates = Vec::with_capacity(gamma.num_sus());
    for k in 0..gamma.num_sus() {
        let mut mu = 0.0;
        for j in 0..gamma.num_bands() {
            let mut survive = 1.0;
            for (v, &empty) in empty_probs.iter().enumerate() {
                if v != k {
                    survive *= 1.0 - gamma.get(j, v) * (1.0 - empty);
                }
            }
            mu += p.get(j, k) * gamma.get(j, k) * survive;
        }
        rates.push(mu);
    }
    Ok(rates)
}

/// Service rates under a fixed assignment: `mu_k = P[band_of(k)][k]`.
pub fn fixed_assignment_rates(p: &SuccessMatrix, assignment: &FixedAssignment) -> Result<Vec<f64>> {
    if assignment.num_sus() != p.num_sus() || assignment.band_of_su.iter().any(|&b| b >= p.num_bands()) {
        return Err(Error::DimensionMismatch(format!(
            "assignment of {} users onto {} bands",
            assignment.num_sus(),
            p.num_bands()
        )));
    }
    Ok((0..p.num_sus()).map(|k| p.get(assignment.band_of(k), k)).collect())
}

// ---------------------------------------------------------------------------
// Fixed-assignment envelope by enumeration
// ---------------------------------------------------------------------------

/// Best fixed assignment for an envelope query.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedEnvelope {
    pub feasible: bool,
    /// Achieved maximum for the target user (zero when infeasible).
    pub lambda_max: f64,
    pub assignment: Option<FixedAssignment>,
}

/// Enumerates every injective assignment and returns the best feasible rate
/// for the query's target user. Requires `M_p >= M_s` and an assignment
/// count within [`ENUMERATION_LIMIT`].
pub fn best_fixed_envelope(p: &SuccessMatrix, query: &RegionQuery) -> Result<FixedEnvelope> {
    if p.num_bands() < p.num_sus() {
        return Err(Error::DimensionMismatch(format!(
            "fixed assignment needs at least as many bands as users ({} < {})",
            p.num_bands(),
            p.num_sus()
        )));
    }
    if query.num_sus() != p.num_sus() {
        return Err(Error::DimensionMismatch("query size".into()));
    }
    let (count, _) = crate::model::assignment_count(p.num_bands(), p.num_sus())?;
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationLimit { count, limit: ENUMERATION_LIMIT });
    }

    let k = query.target_su();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for bands in (0..p.num_bands()).permutations(p.num_sus()) {
        let feasible = (0..p.num_sus())
            .all(|l| l == k || query.fixed_rate(l) <= p.get(bands[l], l));
        if !feasible {
            continue;
        }
        let rate = p.get(bands[k], k);
        if best.as_ref().is_none_or(|(b, _)| rate > *b) {
            best = Some((rate, bands));
        }
    }
    Ok(match best {
        Some((lambda_max, bands)) => FixedEnvelope {
            feasible: true,
            lambda_max,
            assignment: Some(FixedAssignment::new(p.num_bands(), bands)?),
        },
        None => FixedEnvelope { feasible: false, lambda_max: 0.0, assignment: None },
    })
}

// ---------------------------------------------------------------------------
// Nonconvex optimizer for the independent-selection system
// ---------------------------------------------------------------------------

/// Best selection policy found for an envelope query. `lambda_max` is a
/// lower bound on the system's true envelope: the search is local.
#[derive(Debug, Clone, PartialEq)]
pub struct ShatResult {
    pub feasible: bool,
    pub lambda_max: f64,
    pub gamma_star: Option<SelectionPolicy>,
}

/// Feasibility cut for the optimizer: a policy counts as feasible when the
/// total constraint violation is below this.
const VIOLATION_TOL: f64 = 1e-12;

/// Maximizes the target user's saturated service rate over selection
/// policies, subject to the other users' rate constraints.
///
/// Multi-start projected coordinate ascent with a shrinking step; starts
/// are seeded deterministically and include the best fixed assignment and
/// the exclusive system's optimal marginals. Returns the best feasible
/// policy found (a lower bound), or `feasible = false` when no start
/// reached the constraint set.
pub fn shat_optimize(
    p: &SuccessMatrix,
    query: &RegionQuery,
    restarts: usize,
    iterations: usize,
) -> Result<ShatResult> {
    if query.num_sus() != p.num_sus() {
        return Err(Error::DimensionMismatch("query size".into()));
    }
    if restarts == 0 {
        return Err(Error::InvalidParameter { what: "restarts".into(), value: 0.0 });
    }
    let (mp, ms) = (p.num_bands(), p.num_sus());

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if mp >= ms {
        if let Ok(fixed) = best_fixed_envelope(p, query) {
            if let Some(assignment) = fixed.assignment {
                let mut gamma = vec![0.0; mp * ms];
                for k in 0..ms {
                    gamma[assignment.band_of(k) * ms + k] = 1.0;
                }
                starts.push(gamma);
            }
        }
    }
    if let Ok(point) = max_rate_lp(p, query) {
        if let Some(omega) = point.omega_star {
            let gamma: Vec<f64> =
                (0..mp * ms).map(|i| omega.get(i / ms, i % ms)).collect();
            starts.push(gamma);
        }
    }
    for i in 0..restarts {
        let mut rng = ChaCha12Rng::seed_from_u64(0x5e1ec7 + i as u64);
        let mut gamma = vec![0.0; mp * ms];
        for k in 0..ms {
            // Uniform point of {x >= 0, sum x <= 1} via a Dirichlet draw
            // with one phantom coordinate.
            let draws: Vec<f64> = (0..=mp).map(|_| -rng.gen_range(f64::MIN_POSITIVE..1.0f64).ln()).collect();
            let total: f64 = draws.iter().sum();
            for j in 0..mp {
                gamma[j * ms + k] = draws[j] / total;
            }
        }
        starts.push(gamma);
    }

    let evaluate = |gamma: &[f64]| -> (f64, f64) {
        // (violation, objective) for the lexicographic merit.
        let policy = SelectionPolicy { gamma: gamma.to_vec(), num_bands: mp, num_sus: ms };
        let rates = shat_service_rate_conditional(p, &policy, &vec![0.0; ms]).expect("dims fixed");
        let violation: f64 = (0..ms)
            .filter(|&l| l != query.target_su())
            .map(|l| (query.fixed_rate(l) - rates[l]).max(0.0))
            .sum();
        (violation, rates[query.target_su()])
    };

    let search = |start: Vec<f64>| -> (f64, f64, Vec<f64>) {
        let mut gamma = start;
        project_columns(&mut gamma, mp, ms);
        let (mut violation, mut objective) = evaluate(&gamma);
        let mut step = 0.25;
        for _ in 0..iterations {
            let mut improved = false;
            for j in 0..mp {
                for k in 0..ms {
                    for dir in [step, -step] {
                        let mut candidate = gamma.clone();
                        candidate[j * ms + k] += dir;
                        project_column(&mut candidate, mp, ms, k);
                        let (v, o) = evaluate(&candidate);
                        let better = v < violation - 1e-15
                            || (v <= violation + 1e-15 && o > objective + 1e-15);
                        if better {
                            gamma = candidate;
                            violation = v;
                            objective = o;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
                if step < 1e-7 {
                    break;
                }
            }
        }
        (violation, objective, gamma)
    };

    let best = starts
        .into_par_iter()
        .enumerate()
        .map(|(idx, start)| {
            let (violation, objective, gamma) = search(start);
            (violation, objective, idx, gamma)
        })
        .reduce_with(|a, b| {
            // Prefer feasibility, then objective; break ties by start index
            // so the reduction is schedule-independent.
            let fa = a.0 <= VIOLATION_TOL;
            let fb = b.0 <= VIOLATION_TOL;
            match (fa, fb) {
                (true, false) => a,
                (false, true) => b,
                (true, true) => {
                    if (b.1, std::cmp::Reverse(b.2)) > (a.1, std::cmp::Reverse(a.2)) {
                        b
                    } else {
                        a
                    }
                }
                (false, false) => {
                    if (std::cmp::Reverse(b.0), std::cmp::Reverse(b.2))
                        > (std::cmp::Reverse(a.0), std::cmp::Reverse(a.2))
                    {
                        b
                    } else {
                        a
                    }
                }
            }
        })
        .expect("at least one start");

    let (violation, objective, _, gamma) = best;
    if violation <= VIOLATION_TOL {
        Ok(ShatResult {
            feasible: true,
            lambda_max: objective,
            gamma_star: Some(SelectionPolicy::new(mp, ms, gamma)?),
        })
    } else {
        Ok(ShatResult { feasible: false, lambda_max: 0.0, gamma_star: None })
    }
}

fn project_columns(gamma: &mut [f64], mp: usize, ms: usize) {
    for k in 0..ms {
        project_column(gamma, mp, ms, k);
    }
}

/// Euclidean projection of one column onto `{x >= 0, sum x <= 1}`.
fn project_column(gamma: &mut [f64], mp: usize, ms: usize, k: usize) {
    let clipped: Vec<f64> = (0..mp).map(|j| gamma[j * ms + k].max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= 1.0 {
        for (j, v) in clipped.into_iter().enumerate() {
            gamma[j * ms + k] = v;
        }
        return;
    }
    // Project onto the probability simplex (sorted threshold method).
    let mut sorted: Vec<f64> = (0..mp).map(|j| gamma[j * ms + k]).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    for j in 0..mp {
        gamma[j * ms + k] = (gamma[j * ms + k] - theta).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_2x2() -> SuccessMatrix {
        SuccessMatrix::from_tables(&[0.25, 0.875], &[vec![0.7, 0.85], vec![0.8, 0.9]]).unwrap()
    }

    #[test]
    fn saturated_rates_without_collisions_reduce_to_fixed() {
        let p = reference_2x2();
        // User 0 always on band 0, user 1 always on band 1.
        let gamma = SelectionPolicy::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let rates = shat_service_rates_saturated(&p, &gamma).unwrap();
        assert!((rates[0] - 0.175).abs() < 1e-15);
        assert!((rates[1] - 0.7875).abs() < 1e-15);
    }

    #[test]
    fn certain_collision_annihilates_both() {
        let p = reference_2x2();
        let gamma = SelectionPolicy::new(2, 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let rates = shat_service_rates_saturated(&p, &gamma).unwrap();
        assert_eq!(rates, vec![0.0, 0.0]);
    }

    #[test]
    fn single_user_matches_marginal_rate() {
        let p = SuccessMatrix::from_values(2, 1, vec![0.3, 0.6]).unwrap();
        let gamma = SelectionPolicy::new(2, 1, vec![0.25, 0.5]).unwrap();
        let rates = shat_service_rates_saturated(&p, &gamma).unwrap();
        assert!((rates[0] - (0.25 * 0.3 + 0.5 * 0.6)).abs() < 1e-15);
    }

    #[test]
    fn conditional_rates_interpolate_contention() {
        let p = reference_2x2();
        let gamma = SelectionPolicy::new(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();

        let saturated = shat_service_rate_conditional(&p, &gamma, &[0.0, 0.0]).unwrap();
        assert!((saturated[0] - 0.21875).abs() < 1e-15, "hand-expanded value");
        assert_eq!(saturated, shat_service_rates_saturated(&p, &gamma).unwrap());

        let uncontended = shat_service_rate_conditional(&p, &gamma, &[1.0, 1.0]).unwrap();
        assert!((uncontended[0] - (0.5 * 0.175 + 0.5 * 0.7)).abs() < 1e-15);
        assert!(uncontended[0] > saturated[0]);
    }

    #[test]
    fn fixed_assignment_rates_are_lookups() {
        let p = reference_2x2();
        let d12 = FixedAssignment::new(2, vec![0, 1]).unwrap();
        let rates = fixed_assignment_rates(&p, &d12).unwrap();
        assert_eq!(rates, vec![p.get(0, 0), p.get(1, 1)]);
        assert!((rates[0] - 0.175).abs() < 1e-12 && (rates[1] - 0.7875).abs() < 1e-12);
        let d21 = FixedAssignment::new(2, vec![1, 0]).unwrap();
        let rates = fixed_assignment_rates(&p, &d21).unwrap();
        assert!((rates[0] - 0.7).abs() < 1e-12 && (rates[1] - 0.2125).abs() < 1e-12);

        assert!(matches!(
            FixedAssignment::new(2, vec![0, 0]),
            Err(Error::NonInjectiveAssignment)
        ));
    }

    #[test]
    fn best_fixed_enumeration() {
        let p = reference_2x2();
        let q = RegionQuery::new(2, 1).unwrap().with_rate(0, 0.1).unwrap();
        let best = best_fixed_envelope(&p, &q).unwrap();
        assert!(best.feasible);
        assert!((best.lambda_max - 0.7875).abs() < 1e-15, "d(1,2) serves user 1 at 0.7875");

        let q = RegionQuery::new(2, 1).unwrap().with_rate(0, 0.5).unwrap();
        let best = best_fixed_envelope(&p, &q).unwrap();
        assert!((best.lambda_max - 0.2125).abs() < 1e-15, "only d(2,1) remains feasible");

        let q = RegionQuery::new(2, 1).unwrap().with_rate(0, 0.75).unwrap();
        assert!(!best_fixed_envelope(&p, &q).unwrap().feasible);
    }

    #[test]
    fn optimizer_single_user_is_exact() {
        let p = SuccessMatrix::from_values(3, 1, vec![0.3, 0.9, 0.6]).unwrap();
        let q = RegionQuery::new(1, 0).unwrap();
        let result = shat_optimize(&p, &q, 8, 100).unwrap();
        assert!(result.feasible);
        assert!((result.lambda_max - 0.9).abs() < 1e-6);

        // Without contention all three disciplines coincide.
        let fixed = best_fixed_envelope(&p, &q).unwrap();
        let lp = max_rate_lp(&p, &q).unwrap();
        assert!((fixed.lambda_max - 0.9).abs() < 1e-12);
        assert!((lp.rates[0] - 0.9).abs() < 1e-9);
    }

    #[test]
    fn optimizer_reaches_uncontended_point() {
        let p = reference_2x2();
        let q = RegionQuery::new(2, 1).unwrap();
        let result = shat_optimize(&p, &q, 16, 100).unwrap();
        assert!(result.feasible);
        assert!(result.lambda_max >= 0.7875 - 1e-9, "found {}", result.lambda_max);
    }

    #[test]
    fn optimizer_never_beats_the_exclusive_system() {
        let p = reference_2x2();
        for i in 0..8 {
            let lambda1 = 0.7 * i as f64 / 7.0;
            let q = RegionQuery::new(2, 1).unwrap().with_rate(0, lambda1).unwrap();
            let shat = shat_optimize(&p, &q, 16, 100).unwrap();
            let lp = max_rate_lp(&p, &q).unwrap();
            assert!(lp.feasible);
            if shat.feasible {
                assert!(
                    shat.lambda_max <= lp.rates[1] + 1e-9,
                    "shat {} exceeds exclusive {}",
                    shat.lambda_max,
                    lp.rates[1]
                );
            }
        }
    }

    #[test]
    fn saturated_rate_symmetric_under_band_permutation() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha12Rng::seed_from_u64(51);
        let p_vals: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        let g_vals: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..0.33)).collect();
        let p = SuccessMatrix::from_values(3, 2, p_vals.clone()).unwrap();
        let gamma = SelectionPolicy::new(3, 2, g_vals.clone()).unwrap();
        let rates = shat_service_rates_saturated(&p, &gamma).unwrap();

        // Swap bands 0 and 2 in both tables.
        let swap = |vals: &[f64]| -> Vec<f64> {
            let mut out = vals.to_vec();
            for k in 0..2 {
                out.swap(k, 2 * 2 + k);
            }
            out
        };
        let p2 = SuccessMatrix::from_values(3, 2, swap(&p_vals)).unwrap();
        let gamma2 = SelectionPolicy::new(3, 2, swap(&g_vals)).unwrap();
        let rates2 = shat_service_rates_saturated(&p2, &gamma2).unwrap();
        for (a, b) in rates.iter().zip(&rates2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn total_throughput_bounded_by_band_capacities() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha12Rng::seed_from_u64(53);
        for _ in 0..30 {
            let mp = rng.gen_range(1..4);
            let ms = rng.gen_range(1..4);
            let pi: Vec<f64> = (0..mp).map(|_| rng.gen_range(0.0..1.0)).collect();
            let pout: Vec<Vec<f64>> =
                (0..mp).map(|_| (0..ms).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
            let p = SuccessMatrix::from_tables(&pi, &pout).unwrap();
            let mut gamma = vec![0.0; mp * ms];
            for k in 0..ms {
                let mut left = 1.0;
                for j in 0..mp {
                    let v = rng.gen_range(0.0..left);
                    gamma[j * ms + k] = v;
                    left -= v;
                }
            }
            let gamma = SelectionPolicy::new(mp, ms, gamma).unwrap();
            let total: f64 = shat_service_rates_saturated(&p, &gamma).unwrap().iter().sum();
            let cap: f64 = (0..mp)
                .map(|j| pi[j] * pout[j].iter().copied().fold(0.0, f64::max))
                .sum();
            assert!(total <= cap + 1e-12);
        }
    }
}
