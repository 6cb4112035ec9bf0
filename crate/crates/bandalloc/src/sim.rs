//! Slot-level discrete-time simulation of the three access systems.
//!
//! The engine reproduces the MAC timing exactly: primaries with backlog
//! transmit from the slot start; each secondary user is pointed at (at most)
//! one band, senses the primary's slot-start occupancy perfectly, transmits
//! only on a free band with a nonempty queue, and keeps the packet on NACK.
//! Arrivals are Bernoulli and join the queue after departures (late-arrival
//! model: a packet arriving in slot `t` is first servable in `t + 1`).
//!
//! Outage is realized as a Bernoulli success draw with the analytic
//! non-outage probability; per-slot channel gains are independent, so the
//! two are distributionally identical. The closed form itself is validated
//! separately against [`crate::model::monte_carlo_success_prob`].
//!
//! Determinism: a run is a pure function of (model, policy, options). The
//! generator is ChaCha12 seeded from `options.seed`; draws are consumed in
//! a fixed order per slot — assignment, primary outages by band, secondary
//! outages by user, primary arrivals by band, secondary arrivals by user.

use crate::baselines::{FixedAssignment, SelectionPolicy};
use crate::birkhoff::PermutationSchedule;
use crate::error::{Error, Result};
use crate::model::NetworkModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use std::io::{self, Write};

/// Default least-squares drift threshold (packets/slot) separating stable
/// from unstable queue trajectories.
pub const DEFAULT_DRIFT_THRESHOLD: f64 = 5e-4;
/// Default trailing fraction of the horizon used for the verdict.
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.5;
/// Minimum horizon for a stability verdict.
pub const MIN_VERDICT_HORIZON: usize = 10_000;
/// A primary queue loaded at or beyond this fraction of its service rate is
/// flagged near-critical: its availability estimate mixes very slowly.
pub const NEAR_CRITICAL_LOAD: f64 = 0.99;

/// Per-slot assignment rule.
#[derive(Debug, Clone, Copy)]
pub enum AccessPolicy<'a> {
    /// Exclusive system: draw a permutation from the schedule each slot.
    PermutationSchedule(&'a PermutationSchedule),
    /// Free-for-all: every user draws a band from its own distribution;
    /// leftover probability means idling. Collisions destroy all packets.
    IndependentSelection(&'a SelectionPolicy),
    /// Static injective map.
    FixedAssignment(&'a FixedAssignment),
}

/// Run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub horizon: usize,
    pub seed: u64,
    /// Queue lengths are recorded every `sample_stride` slots.
    pub sample_stride: usize,
}

impl SimOptions {
    /// Stride defaults to about 4096 samples across the horizon.
    pub fn new(horizon: usize, seed: u64) -> Self {
        Self { horizon, seed, sample_stride: (horizon / 4096).max(1) }
    }

    pub fn with_stride(mut self, sample_stride: usize) -> Self {
        self.sample_stride = sample_stride.max(1);
        self
    }
}

/// Exact per-queue counters over a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct QueueStats {
    pub arrivals: u64,
    pub departures: u64,
    /// Slots in which the queue was nonempty at the slot start.
    pub nonempty_slots: u64,
    pub final_len: u64,
}

impl QueueStats {
    /// Departures per nonempty slot: the saturated service-rate estimator.
    pub fn service_rate_estimate(&self) -> f64 {
        if self.nonempty_slots == 0 {
            0.0
        } else {
            self.departures as f64 / self.nonempty_slots as f64
        }
    }
}

/// Everything observed during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub horizon: usize,
    pub sample_stride: usize,
    pub seed: u64,
    /// Slot-start queue lengths at each sampled slot, `[band][sample]`.
    pub primary_samples: Vec<Vec<u64>>,
    /// Slot-start queue lengths at each sampled slot, `[user][sample]`.
    pub secondary_samples: Vec<Vec<u64>>,
    pub primary: Vec<QueueStats>,
    pub secondary: Vec<QueueStats>,
    /// Slots in which each primary queue was empty at the slot start.
    pub empty_slot_counts: Vec<u64>,
    /// Band-slot events in which two or more users transmitted together.
    pub collisions: u64,
    /// Bands whose configured primary load is not stable
    /// (`lambda_p >= mu_p`); the run is still meaningful there, divergence
    /// is simply expected.
    pub unstable_primary_flags: Vec<bool>,
    /// Bands loaded at or beyond [`NEAR_CRITICAL_LOAD`]: stable on paper
    /// but with availability estimates that converge slowly.
    pub near_critical_primary_flags: Vec<bool>,
}

impl SimulationTrace {
    /// Slot index of sample `i`.
    pub fn sample_slot(&self, i: usize) -> usize {
        i * self.sample_stride
    }

    /// Empirical availability of a band: fraction of slots with an empty
    /// primary queue at the slot start.
    pub fn empirical_availability(&self, band: usize) -> f64 {
        self.empty_slot_counts[band] as f64 / self.horizon as f64
    }

    /// Trace export: one row per sampled slot and queue, columns
    /// `slot,queue_id,kind,length`. Queue ids are 1-based within each kind.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "slot,queue_id,kind,length")?;
        let samples = self.primary_samples.first().map_or(0, Vec::len);
        for i in 0..samples {
            let slot = self.sample_slot(i);
            for (j, series) in self.primary_samples.iter().enumerate() {
                writeln!(w, "{slot},{},primary,{}", j + 1, series[i])?;
            }
            for (k, series) in self.secondary_samples.iter().enumerate() {
                writeln!(w, "{slot},{},secondary,{}", k + 1, series[i])?;
            }
        }
        Ok(())
    }
}

/// Empirical availability of `band` in the trace.
pub fn empirical_availability(trace: &SimulationTrace, band: usize) -> f64 {
    trace.empirical_availability(band)
}

// ---------------------------------------------------------------------------
// The slot engine
// ---------------------------------------------------------------------------

/// Runs the slot engine and collects a trace.
pub fn run_slots(
    model: &NetworkModel,
    policy: &AccessPolicy<'_>,
    options: &SimOptions,
) -> Result<SimulationTrace> {
    let mp = model.num_bands();
    let ms = model.num_sus();
    if options.horizon == 0 {
        return Err(Error::InvalidParameter { what: "horizon".into(), value: 0.0 });
    }
    match policy {
        AccessPolicy::PermutationSchedule(s) => {
            let pad = s.pad_info();
            if pad.real_bands != mp || pad.real_sus != ms {
                return Err(Error::DimensionMismatch(format!(
                    "schedule over {}x{}, model has {mp} bands and {ms} users",
                    pad.real_bands, pad.real_sus
                )));
            }
            s.validate()?;
        }
        AccessPolicy::IndependentSelection(g) => {
            if g.num_bands() != mp || g.num_sus() != ms {
                return Err(Error::DimensionMismatch(format!(
                    "selection policy over {}x{}, model has {mp} bands and {ms} users",
                    g.num_bands(),
                    g.num_sus()
                )));
            }
        }
        AccessPolicy::FixedAssignment(f) => {
            if f.num_sus() != ms {
                return Err(Error::DimensionMismatch(format!(
                    "fixed assignment over {} users, model has {ms}",
                    f.num_sus()
                )));
            }
            for k in 0..ms {
                if f.band_of(k) >= mp {
                    return Err(Error::IndexOutOfBounds {
                        what: "band",
                        index: f.band_of(k),
                        len: mp,
                    });
                }
            }
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(options.seed);
    let stride = options.sample_stride.max(1);
    let samples = options.horizon.div_ceil(stride);

    let mut qp = vec![0u64; mp];
    let mut qs = vec![0u64; ms];
    let mut primary = vec![QueueStats::default(); mp];
    let mut secondary = vec![QueueStats::default(); ms];
    let mut primary_samples = vec![Vec::with_capacity(samples); mp];
    let mut secondary_samples = vec![Vec::with_capacity(samples); ms];
    let mut collisions = 0u64;

    let mut band_free = vec![false; mp];
    let mut assigned: Vec<Option<usize>> = vec![None; ms];
    let mut transmitters_on = vec![0u32; mp];
    let mut su_transmits = vec![false; ms];
    let mut su_link_ok = vec![false; ms];

    for t in 0..options.horizon {
        if t % stride == 0 {
            for (j, series) in primary_samples.iter_mut().enumerate() {
                series.push(qp[j]);
            }
            for (k, series) in secondary_samples.iter_mut().enumerate() {
                series.push(qs[k]);
            }
        }

        // Slot-start occupancy is what both primaries and sensing act on.
        for j in 0..mp {
            band_free[j] = qp[j] == 0;
        }

        // (a) Band assignment for this slot.
        match policy {
            AccessPolicy::PermutationSchedule(schedule) => {
                let term = schedule.sample(&mut rng);
                for (k, slot) in assigned.iter_mut().enumerate() {
                    *slot = schedule.real_band(term, k);
                }
            }
            AccessPolicy::IndependentSelection(gamma) => {
                for (k, slot) in assigned.iter_mut().enumerate() {
                    let mut u: f64 = rng.gen_range(0.0..1.0);
                    *slot = None;
                    for j in 0..mp {
                        u -= gamma.get(j, k);
                        if u < 0.0 {
                            *slot = Some(j);
                            break;
                        }
                    }
                }
            }
            AccessPolicy::FixedAssignment(f) => {
                for (k, slot) in assigned.iter_mut().enumerate() {
                    *slot = Some(f.band_of(k));
                }
            }
        }

        // (b) Backlogged primaries transmit; outage decides ACK/NACK.
        for j in 0..mp {
            if !band_free[j] {
                primary[j].nonempty_slots += 1;
                if rng.gen_bool(model.primary_service_rate(j)) {
                    qp[j] -= 1;
                    primary[j].departures += 1;
                }
            }
        }

        // (c) Secondaries with backlog transmit on free assigned bands.
        transmitters_on.iter_mut().for_each(|c| *c = 0);
        for k in 0..ms {
            su_transmits[k] = false;
            if qs[k] > 0 {
                secondary[k].nonempty_slots += 1;
                if let Some(j) = assigned[k] {
                    if band_free[j] {
                        su_transmits[k] = true;
                        transmitters_on[j] += 1;
                    }
                }
            }
        }
        for k in 0..ms {
            su_link_ok[k] = su_transmits[k] && {
                let j = assigned[k].expect("transmitting user is assigned");
                rng.gen_bool(model.secondary_success(j, k))
            };
        }
        for count in &transmitters_on {
            if *count >= 2 {
                collisions += 1;
            }
        }

        // (d) Departures: a secondary packet leaves only without collision.
        for k in 0..ms {
            if su_link_ok[k] {
                let j = assigned[k].expect("transmitting user is assigned");
                if transmitters_on[j] == 1 {
                    qs[k] -= 1;
                    secondary[k].departures += 1;
                }
            }
        }

        // (e) Late arrivals, appended after all departures.
        for j in 0..mp {
            if rng.gen_bool(model.primary_arrival_rate(j)) {
                qp[j] += 1;
                primary[j].arrivals += 1;
            }
        }
        for k in 0..ms {
            if rng.gen_bool(model.secondary_arrival_rate(k)) {
                qs[k] += 1;
                secondary[k].arrivals += 1;
            }
        }
    }

    for j in 0..mp {
        primary[j].final_len = qp[j];
    }
    for k in 0..ms {
        secondary[k].final_len = qs[k];
    }
    let empty_slot_counts = primary
        .iter()
        .map(|s| options.horizon as u64 - s.nonempty_slots)
        .collect();

    Ok(SimulationTrace {
        horizon: options.horizon,
        sample_stride: stride,
        seed: options.seed,
        primary_samples,
        secondary_samples,
        primary,
        secondary,
        empty_slot_counts,
        collisions,
        unstable_primary_flags: (0..mp).map(|j| model.primary_unstable(j)).collect(),
        near_critical_primary_flags: (0..mp)
            .map(|j| {
                model.primary_arrival_rate(j) >= NEAR_CRITICAL_LOAD * model.primary_service_rate(j)
            })
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Stability verdicts
// ---------------------------------------------------------------------------

/// Finite-horizon stability classification of one queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueStatus {
    Stable,
    Unstable,
    Indeterminate,
}

/// Verdict and drift estimate for one queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueueVerdict {
    pub status: QueueStatus,
    /// Least-squares slope of the queue length over the trailing window,
    /// packets/slot.
    pub drift_estimate: f64,
}

/// Verdicts for every queue of a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub primary: Vec<QueueVerdict>,
    pub secondary: Vec<QueueVerdict>,
}

/// Classifies every queue from its sampled trajectory.
///
/// Rule: over the trailing `window_fraction` of the horizon, fit a
/// least-squares line to the sampled lengths. A queue is *stable* when the
/// slope stays below `drift_threshold` and the window's maximum length
/// stays below `horizon^(2/3)` (a stable queue's excursions are
/// logarithmic, an unstable one's grow linearly); *unstable* when the
/// slope exceeds twice the threshold; *indeterminate* otherwise. Any
/// finite-horizon test of a limit statement is a heuristic — the
/// thresholds are calibrated so that points 10% inside/outside the
/// envelope classify reliably at the tested horizons.
pub fn stability_verdict(
    trace: &SimulationTrace,
    drift_threshold: f64,
    window_fraction: f64,
) -> Result<StabilityVerdict> {
    if trace.horizon < MIN_VERDICT_HORIZON {
        return Err(Error::HorizonTooShort { horizon: trace.horizon, min: MIN_VERDICT_HORIZON });
    }
    if !(drift_threshold > 0.0) {
        return Err(Error::InvalidParameter { what: "drift threshold".into(), value: drift_threshold });
    }
    if !(0.0 < window_fraction && window_fraction <= 1.0) {
        return Err(Error::InvalidParameter { what: "window fraction".into(), value: window_fraction });
    }

    let window_start = trace.horizon as f64 * (1.0 - window_fraction);
    let cap = (trace.horizon as f64).powf(2.0 / 3.0);
    let judge = |series: &[u64]| -> QueueVerdict {
        let points: Vec<(f64, f64)> = series
            .iter()
            .enumerate()
            .map(|(i, &q)| ((i * trace.sample_stride) as f64, q as f64))
            .filter(|(t, _)| *t >= window_start)
            .collect();
        if points.len() < 2 {
            return QueueVerdict { status: QueueStatus::Indeterminate, drift_estimate: 0.0 };
        }
        let n = points.len() as f64;
        let mean_t = points.iter().map(|(t, _)| t).sum::<f64>() / n;
        let mean_q = points.iter().map(|(_, q)| q).sum::<f64>() / n;
        let mut cov = 0.0;
        let mut var = 0.0;
        let mut max_len = 0.0f64;
        for (t, q) in &points {
            cov += (t - mean_t) * (q - mean_q);
            var += (t - mean_t) * (t - mean_t);
            max_len = max_len.max(*q);
        }
        let slope = if var > 0.0 { cov / var } else { 0.0 };
        let status = if slope < drift_threshold && max_len < cap {
            QueueStatus::Stable
        } else if slope > 2.0 * drift_threshold {
            QueueStatus::Unstable
        } else {
            QueueStatus::Indeterminate
        };
        QueueVerdict { status, drift_estimate: slope }
    };

    Ok(StabilityVerdict {
        primary: trace.primary_samples.iter().map(|s| judge(s)).collect(),
        secondary: trace.secondary_samples.iter().map(|s| judge(s)).collect(),
    })
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

/// Per-queue summary line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueSummary {
    pub kind: &'static str,
    /// 1-based id within the kind.
    pub id: usize,
    pub arrival_rate: f64,
    pub departure_rate: f64,
    /// Departures per nonempty slot.
    pub service_rate_estimate: f64,
    pub final_len: u64,
    pub verdict: QueueVerdict,
}

/// JSON-facing digest of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub seed: u64,
    pub horizon: usize,
    pub queues: Vec<QueueSummary>,
    /// Empirical availability per band.
    pub availability: Vec<f64>,
    pub collisions: u64,
    pub unstable_primary_flags: Vec<bool>,
    pub near_critical_primary_flags: Vec<bool>,
}

/// Combines a trace and its verdict into the exported summary.
pub fn summarize(trace: &SimulationTrace, verdict: &StabilityVerdict) -> TraceSummary {
    let horizon = trace.horizon as f64;
    let mut queues = Vec::with_capacity(trace.primary.len() + trace.secondary.len());
    for (j, stats) in trace.primary.iter().enumerate() {
        queues.push(QueueSummary {
            kind: "primary",
            id: j + 1,
            arrival_rate: stats.arrivals as f64 / horizon,
            departure_rate: stats.departures as f64 / horizon,
            service_rate_estimate: stats.service_rate_estimate(),
            final_len: stats.final_len,
            verdict: verdict.primary[j],
        });
    }
    for (k, stats) in trace.secondary.iter().enumerate() {
        queues.push(QueueSummary {
            kind: "secondary",
            id: k + 1,
            arrival_rate: stats.arrivals as f64 / horizon,
            departure_rate: stats.departures as f64 / horizon,
            service_rate_estimate: stats.service_rate_estimate(),
            final_len: stats.final_len,
            verdict: verdict.secondary[k],
        });
    }
    TraceSummary {
        seed: trace.seed,
        horizon: trace.horizon,
        queues,
        availability: (0..trace.primary.len())
            .map(|j| trace.empirical_availability(j))
            .collect(),
        collisions: trace.collisions,
        unstable_primary_flags: trace.unstable_primary_flags.clone(),
        near_critical_primary_flags: trace.near_critical_primary_flags.clone(),
    }
}
