//! From assignment marginals to an operational per-slot schedule.
//!
//! The stability LP produces marginals `omega[j][k]`, but the MAC layer
//! needs a concrete rule: each slot, draw one exclusive assignment
//! (a permutation) of users to bands. The bridge is classical:
//!
//! 1. pad `omega` to a square doubly stochastic matrix using virtual bands
//!    and virtual users that absorb the leftover probability mass,
//! 2. decompose that matrix into a convex combination of permutation
//!    matrices (Birkhoff-von Neumann),
//! 3. sample a permutation per slot with the decomposition weights.
//!
//! A real user mapped to a virtual band simply stays off the air for the
//! slot, so the real marginals — and therefore every service rate — are
//! preserved exactly.
//!
//! Decomposition is the greedy scheme (extract a perfect matching on the
//! positive support, subtract its minimum entry, repeat), followed by a
//! Caratheodory reduction that trims the term count to the
//! `n^2 - 2n + 2` bound whenever the greedy phase overshoots it.

use crate::error::{Error, Result};
use crate::stability::AssignmentMatrix;
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Entries at or below this are outside the matching support.
pub const SUPPORT_TOL: f64 = 1e-12;
/// Extraction stops once the residual total mass falls below this.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Row and column sums must be within this of one.
pub const SUM_TOL: f64 = 1e-9;

/// Maximum number of permutations needed to express any n x n doubly
/// stochastic matrix: `n^2 - 2n + 2`, the dimension bound on the Birkhoff
/// polytope.
pub fn term_count_bound(n: usize) -> usize {
    (n - 1) * (n - 1) + 1
}

// ---------------------------------------------------------------------------
// Doubly stochastic matrices
// ---------------------------------------------------------------------------

/// How a square matrix maps back onto the real system: the leading
/// `real_bands` rows and `real_sus` columns are physical, the rest virtual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadInfo {
    pub real_bands: usize,
    pub real_sus: usize,
    pub size: usize,
}

/// A square nonnegative matrix whose rows and columns each sum to one
/// (within [`SUM_TOL`]), tagged with its padding structure.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublyStochasticMatrix {
    values: Vec<f64>,
    pad: PadInfo,
}

impl DoublyStochasticMatrix {
    /// Validates a raw square matrix with no padding structure
    /// (all rows and columns real).
    pub fn from_raw(n: usize, values: Vec<f64>) -> Result<Self> {
        Self::validated(values, PadInfo { real_bands: n, real_sus: n, size: n })
    }

    fn validated(mut values: Vec<f64>, pad: PadInfo) -> Result<Self> {
        let n = pad.size;
        if values.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {n}x{n} matrix",
                values.len()
            )));
        }
        for v in values.iter_mut() {
            if *v < 0.0 {
                if *v < -SUPPORT_TOL {
                    return Err(Error::ConstraintViolation(format!("negative entry {v}")));
                }
                *v = 0.0;
            }
        }
        let m = Self { values, pad };
        for i in 0..n {
            let r = m.row_sum(i);
            if (r - 1.0).abs() > SUM_TOL {
                return Err(Error::ConstraintViolation(format!("row {i} sums to {r}")));
            }
            let c = m.col_sum(i);
            if (c - 1.0).abs() > SUM_TOL {
                return Err(Error::ConstraintViolation(format!("column {i} sums to {c}")));
            }
        }
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.pad.size
    }

    pub fn pad_info(&self) -> PadInfo {
        self.pad
    }

    /// Entry at (band row, user column) in padded indices.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.pad.size + col]
    }

    fn row_sum(&self, row: usize) -> f64 {
        let n = self.pad.size;
        self.values[row * n..(row + 1) * n].iter().sum()
    }

    fn col_sum(&self, col: usize) -> f64 {
        let n = self.pad.size;
        (0..n).map(|r| self.values[r * n + col]).sum()
    }
}

// ---------------------------------------------------------------------------
// Padding
// ---------------------------------------------------------------------------

/// Embeds the marginals into a square doubly stochastic matrix without
/// touching any real entry.
///
/// Virtual user columns absorb the slack of real bands and virtual band
/// rows absorb the slack of real users; whatever slack remains in both
/// dimensions lands in the virtual-virtual block. The square size is
/// `max(M_p, M_s)` when every smaller-side sum is saturated and grows just
/// enough to hold the slack otherwise.
pub fn pad_to_doubly_stochastic(omega: &AssignmentMatrix) -> Result<DoublyStochasticMatrix> {
    let mp = omega.num_bands();
    let ms = omega.num_sus();
    let mass: f64 = (0..mp).map(|j| omega.row_sum(j)).sum();

    let needed = (mp + ms) as f64 - mass;
    let n = mp.max(ms).max((needed - SUM_TOL).ceil() as usize);
    let cols_virtual = n - ms;
    let rows_virtual = n - mp;

    let mut values = vec![0.0; n * n];
    for j in 0..mp {
        for k in 0..ms {
            values[j * n + k] = omega.get(j, k);
        }
    }

    // Real-row slack into virtual columns, each of capacity one.
    let mut col_fill = vec![0.0; cols_virtual];
    for j in 0..mp {
        let mut need = (1.0 - omega.row_sum(j)).max(0.0);
        for (u, fill) in col_fill.iter_mut().enumerate() {
            if need <= 0.0 {
                break;
            }
            let take = need.min(1.0 - *fill);
            values[j * n + ms + u] += take;
            *fill += take;
            need -= take;
        }
        if need > 0.0 {
            // Numerical dust past the last column's capacity.
            if let Some(last) = col_fill.last_mut() {
                values[j * n + ms + cols_virtual - 1] += need;
                *last += need;
            }
        }
    }

    // Real-column slack into virtual rows.
    let mut row_fill = vec![0.0; rows_virtual];
    for k in 0..ms {
        let mut need = (1.0 - omega.col_sum(k)).max(0.0);
        for (t, fill) in row_fill.iter_mut().enumerate() {
            if need <= 0.0 {
                break;
            }
            let take = need.min(1.0 - *fill);
            values[(mp + t) * n + k] += take;
            *fill += take;
            need -= take;
        }
        if need > 0.0 {
            if let Some(last) = row_fill.last_mut() {
                values[(mp + rows_virtual - 1) * n + k] += need;
                *last += need;
            }
        }
    }

    // Virtual-virtual block: northwest fill of the remaining supplies and
    // demands (they balance by construction).
    let mut t = 0;
    let mut u = 0;
    let mut supply: Vec<f64> = row_fill.iter().map(|f| 1.0 - f).collect();
    let mut demand: Vec<f64> = col_fill.iter().map(|f| 1.0 - f).collect();
    while t < rows_virtual && u < cols_virtual {
        let take = supply[t].min(demand[u]).max(0.0);
        values[(mp + t) * n + ms + u] += take;
        supply[t] -= take;
        demand[u] -= take;
        if supply[t] <= SUPPORT_TOL {
            t += 1;
        }
        if u < cols_virtual && demand[u] <= SUPPORT_TOL {
            u += 1;
        }
    }

    DoublyStochasticMatrix::validated(values, PadInfo { real_bands: mp, real_sus: ms, size: n })
}

// ---------------------------------------------------------------------------
// Perfect matching on the positive support
// ---------------------------------------------------------------------------

/// Kuhn's augmenting-path matching: returns, for each row, its matched
/// column, or `None` when no perfect matching exists on the support.
fn perfect_matching(values: &[f64], n: usize) -> Option<Vec<usize>> {
    fn try_assign(
        row: usize,
        values: &[f64],
        n: usize,
        seen: &mut [bool],
        match_of_col: &mut [Option<usize>],
    ) -> bool {
        for col in 0..n {
            if values[row * n + col] > SUPPORT_TOL && !seen[col] {
                seen[col] = true;
                let free = match match_of_col[col] {
                    None => true,
                    Some(prev) => try_assign(prev, values, n, seen, match_of_col),
                };
                if free {
                    match_of_col[col] = Some(row);
                    return true;
                }
            }
        }
        false
    }

    let mut match_of_col: Vec<Option<usize>> = vec![None; n];
    for row in 0..n {
        let mut seen = vec![false; n];
        if !try_assign(row, values, n, &mut seen, &mut match_of_col) {
            return None;
        }
    }
    let mut col_of_row = vec![0; n];
    for (col, row) in match_of_col.iter().enumerate() {
        col_of_row[row.expect("perfect matching")] = col;
    }
    Some(col_of_row)
}

// ---------------------------------------------------------------------------
// Permutation schedules
// ---------------------------------------------------------------------------

/// One term of the schedule: a permutation in padded indices
/// (`band_for_su[k]` is the band row assigned to user column `k`) and its
/// probability weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleTerm {
    band_for_su: Vec<usize>,
    weight: f64,
}

impl ScheduleTerm {
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Assigned band of a padded user column.
    pub fn padded_band(&self, su: usize) -> usize {
        self.band_for_su[su]
    }
}

/// A Birkhoff decomposition: permutations with weights summing to one.
/// Operationally, the per-slot assignment rule of the exclusive system.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutationSchedule {
    pad: PadInfo,
    terms: Vec<ScheduleTerm>,
}

impl PermutationSchedule {
    pub fn pad_info(&self) -> PadInfo {
        self.pad
    }

    pub fn terms(&self) -> &[ScheduleTerm] {
        &self.terms
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    /// Band assigned to the real user `su` under `term`, or `None` when the
    /// user sits on a virtual band that slot.
    pub fn real_band(&self, term: &ScheduleTerm, su: usize) -> Option<usize> {
        let band = term.band_for_su[su];
        (band < self.pad.real_bands).then_some(band)
    }

    /// Assignment of every real user under `term`.
    pub fn real_assignment(&self, term: &ScheduleTerm) -> Vec<Option<usize>> {
        (0..self.pad.real_sus).map(|k| self.real_band(term, k)).collect()
    }

    /// Probability that real user `su` operates on real band `band`.
    pub fn marginal(&self, band: usize, su: usize) -> f64 {
        // `+ 0.0` normalizes the empty sum's negative zero.
        self.terms
            .iter()
            .filter(|t| t.band_for_su[su] == band)
            .map(|t| t.weight)
            .sum::<f64>()
            + 0.0
    }

    /// Draws one term with probability proportional to its weight.
    /// Deterministic for a given generator state.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, rng: &mut R) -> &'a ScheduleTerm {
        let total = self.total_weight();
        let mut u = rng.gen_range(0.0..total);
        for term in &self.terms {
            if u < term.weight {
                return term;
            }
            u -= term.weight;
        }
        self.terms.last().expect("schedule has at least one term")
    }

    /// Structural validation: nonempty, weights in (0, 1], weights summing
    /// to one, every term a bijection, term count within the dimension bound.
    pub fn validate(&self) -> Result<()> {
        let n = self.pad.size;
        if self.terms.is_empty() {
            return Err(Error::ConstraintViolation("schedule has no terms".into()));
        }
        if self.terms.len() > term_count_bound(n) {
            return Err(Error::ConstraintViolation(format!(
                "{} terms exceed the bound {} for size {n}",
                self.terms.len(),
                term_count_bound(n)
            )));
        }
        let mut sum = 0.0;
        for term in &self.terms {
            if !(term.weight > 0.0 && term.weight <= 1.0 + SUM_TOL) {
                return Err(Error::ConstraintViolation(format!("weight {} out of range", term.weight)));
            }
            sum += term.weight;
            if term.band_for_su.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "term over {} users in a padded size {n} schedule",
                    term.band_for_su.len()
                )));
            }
            let mut used = vec![false; n];
            for &b in &term.band_for_su {
                if b >= n || used[b] {
                    return Err(Error::ConstraintViolation("term is not a permutation".into()));
                }
                used[b] = true;
            }
        }
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::ConstraintViolation(format!("weights sum to {sum}")));
        }
        Ok(())
    }

    /// Rebuilds a schedule from real-user assignments (band per real user,
    /// `None` = off-air). Virtual rows and columns are completed
    /// deterministically; real marginals are exactly those given.
    pub fn from_real_terms(
        num_bands: usize,
        num_sus: usize,
        real_terms: &[(Vec<Option<usize>>, f64)],
    ) -> Result<Self> {
        let n = num_bands + num_sus;
        let pad = PadInfo { real_bands: num_bands, real_sus: num_sus, size: n };
        let mut terms = Vec::with_capacity(real_terms.len());
        for (assignment, weight) in real_terms {
            if assignment.len() != num_sus {
                return Err(Error::DimensionMismatch(format!(
                    "assignment over {} users, expected {num_sus}",
                    assignment.len()
                )));
            }
            let mut band_for_su = vec![usize::MAX; n];
            let mut used = vec![false; n];
            for (k, band) in assignment.iter().enumerate() {
                if let Some(b) = band {
                    if *b >= num_bands {
                        return Err(Error::IndexOutOfBounds { what: "band", index: *b, len: num_bands });
                    }
                    if used[*b] {
                        return Err(Error::NonInjectiveAssignment);
                    }
                    band_for_su[k] = *b;
                    used[*b] = true;
                }
            }
            // Off-air real users take virtual bands only (a real band here
            // would change their marginals); virtual users absorb whatever
            // bands remain.
            let mut free_virtual: Vec<usize> = (num_bands..n).rev().collect();
            for slot in band_for_su.iter_mut().take(num_sus) {
                if *slot == usize::MAX {
                    let b = free_virtual.pop().expect("enough virtual bands");
                    *slot = b;
                    used[b] = true;
                }
            }
            let mut free = (0..n).filter(|b| !used[*b]);
            for slot in band_for_su.iter_mut().skip(num_sus) {
                *slot = free.next().expect("leftover bands cover virtual users");
            }
            terms.push(ScheduleTerm { band_for_su, weight: *weight });
        }
        let schedule = Self { pad, terms };
        schedule.validate()?;
        Ok(schedule)
    }
}

// ---------------------------------------------------------------------------
// JSON form: list of real assignments with weights
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ScheduleTermWire {
    /// Band per real user, 1-based; 0 means a virtual band (off-air).
    assignment: Vec<usize>,
    q: f64,
}

#[derive(Serialize, Deserialize)]
struct ScheduleWire {
    num_bands: usize,
    num_sus: usize,
    terms: Vec<ScheduleTermWire>,
}

impl Serialize for PermutationSchedule {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let wire = ScheduleWire {
            num_bands: self.pad.real_bands,
            num_sus: self.pad.real_sus,
            terms: self
                .terms
                .iter()
                .map(|t| ScheduleTermWire {
                    assignment: (0..self.pad.real_sus)
                        .map(|k| self.real_band(t, k).map_or(0, |b| b + 1))
                        .collect(),
                    q: t.weight,
                })
                .collect(),
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PermutationSchedule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = ScheduleWire::deserialize(deserializer)?;
        let terms: Vec<(Vec<Option<usize>>, f64)> = wire
            .terms
            .iter()
            .map(|t| {
                let assignment = t
                    .assignment
                    .iter()
                    .map(|&b| if b == 0 { None } else { Some(b - 1) })
                    .collect();
                (assignment, t.q)
            })
            .collect();
        Self::from_real_terms(wire.num_bands, wire.num_sus, &terms).map_err(D::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Decomposition and reconstruction
// ---------------------------------------------------------------------------

/// Decomposes a doubly stochastic matrix into a permutation schedule.
///
/// Greedy extraction: find a perfect matching on the strictly positive
/// support, subtract the minimum matched entry as that permutation's
/// weight, repeat until the residual mass is below [`RESIDUAL_TOL`].
/// A Caratheodory reduction then enforces the [`term_count_bound`].
pub fn decompose(ds: &DoublyStochasticMatrix) -> Result<PermutationSchedule> {
    let n = ds.size();
    let mut residual = ds.values.clone();
    let mut terms: Vec<ScheduleTerm> = Vec::new();

    loop {
        let total: f64 = residual.iter().sum();
        if total < RESIDUAL_TOL {
            break;
        }
        if terms.len() > 4 * n * n {
            return Err(Error::DecompositionFailure { residual: total });
        }
        let Some(col_of_row) = perfect_matching(&residual, n) else {
            return Err(Error::DecompositionFailure { residual: total });
        };
        let theta = col_of_row
            .iter()
            .enumerate()
            .map(|(row, &col)| residual[row * n + col])
            .fold(f64::INFINITY, f64::min);
        for (row, &col) in col_of_row.iter().enumerate() {
            residual[row * n + col] -= theta;
        }
        let mut band_for_su = vec![0; n];
        for (row, &col) in col_of_row.iter().enumerate() {
            band_for_su[col] = row;
        }
        terms.push(ScheduleTerm { band_for_su, weight: theta });
    }

    if terms.len() > term_count_bound(n) {
        caratheodory_reduce(&mut terms, n);
    }
    terms.retain(|t| t.weight > SUPPORT_TOL);

    let schedule = PermutationSchedule { pad: ds.pad_info(), terms };
    schedule.validate()?;
    Ok(schedule)
}

/// Sums the schedule back into a matrix; the inverse used to verify a
/// decomposition.
pub fn reconstruct(schedule: &PermutationSchedule) -> DoublyStochasticMatrix {
    let n = schedule.pad.size;
    let mut values = vec![0.0; n * n];
    for term in &schedule.terms {
        for (su, &band) in term.band_for_su.iter().enumerate() {
            values[band * n + su] += term.weight;
        }
    }
    DoublyStochasticMatrix { values, pad: schedule.pad }
}

/// Removes affinely dependent permutations: while more terms remain than
/// the polytope dimension allows, move the weights along a null direction
/// until one hits zero. Preserves the weighted sum and the total weight.
fn caratheodory_reduce(terms: &mut Vec<ScheduleTerm>, n: usize) {
    let bound = term_count_bound(n);
    while terms.len() > bound {
        let m = terms.len();
        // Rows: n^2 matrix entries plus the all-ones row (weight total).
        let mut rows: Vec<Vec<f64>> = vec![vec![0.0; m]; n * n + 1];
        for (idx, term) in terms.iter().enumerate() {
            for (su, &band) in term.band_for_su.iter().enumerate() {
                rows[band * n + su][idx] = 1.0;
            }
            rows[n * n][idx] = 1.0;
        }
        let Some(mut delta) = null_vector(&rows, m) else {
            // Numerically full rank; cannot reduce further.
            return;
        };
        if delta.iter().all(|&d| d >= 0.0) {
            for d in delta.iter_mut() {
                *d = -*d;
            }
        }
        let mut step = f64::INFINITY;
        for (term, &d) in terms.iter().zip(&delta) {
            if d < -SUPPORT_TOL {
                step = step.min(term.weight / -d);
            }
        }
        if !step.is_finite() {
            return;
        }
        for (term, &d) in terms.iter_mut().zip(&delta) {
            term.weight = (term.weight + step * d).max(0.0);
        }
        terms.retain(|t| t.weight > SUPPORT_TOL);
        if terms.len() == m {
            // Rounding kept the zeroed term alive; drop it only while it is
            // still negligible for the reconstruction error budget.
            let min_idx = (0..m)
                .min_by(|&a, &b| {
                    terms[a].weight.partial_cmp(&terms[b].weight).expect("finite weights")
                })
                .expect("nonempty");
            if terms[min_idx].weight < 1e-10 {
                terms.remove(min_idx);
            } else {
                return;
            }
        }
    }
}

/// A nonzero solution of `rows . delta = 0`, or `None` when the columns are
/// (numerically) independent. Gauss-Jordan with partial pivoting.
fn null_vector(rows: &[Vec<f64>], m: usize) -> Option<Vec<f64>> {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let nrows = a.len();
    let mut pivot_row_of_col: Vec<Option<usize>> = vec![None; m];
    let mut next_row = 0;
    for col in 0..m {
        let Some(best) = (next_row..nrows)
            .filter(|&r| a[r][col].abs() > 1e-9)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).expect("finite"))
        else {
            continue; // free column
        };
        a.swap(next_row, best);
        let piv = a[next_row][col];
        for v in a[next_row].iter_mut() {
            *v /= piv;
        }
        let pivot_row = a[next_row].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r == next_row {
                continue;
            }
            let factor = row[col];
            if factor != 0.0 {
                for (dst, src) in row.iter_mut().zip(&pivot_row) {
                    *dst -= factor * src;
                }
            }
        }
        pivot_row_of_col[col] = Some(next_row);
        next_row += 1;
        if next_row == nrows {
            break;
        }
    }
    let free = (0..m).find(|&c| pivot_row_of_col[c].is_none())?;
    let mut delta = vec![0.0; m];
    delta[free] = 1.0;
    for (col, pivot) in pivot_row_of_col.iter().enumerate() {
        if let Some(r) = pivot {
            delta[col] = -a[*r][free];
        }
    }
    Some(delta)
}
