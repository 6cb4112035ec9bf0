//! Physical-layer and queueing-parameter formulas.
//!
//! Everything downstream (the stability LP, the schedules, the simulator)
//! consumes per-slot probabilities. This module computes them from raw link
//! parameters under a Rayleigh flat-fading model:
//!
//! * the secondary transmission rate `r = b / (T - tau)`,
//! * non-outage probabilities for secondary and primary links,
//! * the availability `pi_j = 1 - lambda_p/mu_p` of each band,
//! * the success matrix `P[j][k] = pi_j * pout_bar[j][k]`,
//! * assignment counting for the exclusive and free-for-all access schemes.
//!
//! A band with zero bandwidth is a *virtual band*: its primary never
//! transmits (availability 1) and every transmission on it is lost
//! (success probability 0). Virtual bands are how a system with more users
//! than bands is squared up for scheduling.
//!
//! Probabilities may also be supplied directly as `(pi, pout_bar)` tables via
//! [`SuccessMatrix::from_tables`] and [`NetworkModel::from_tables`], matching
//! the way measurement campaigns usually report them.

use crate::error::{Error, Result};

/// Entries below this magnitude are treated as exact zeros when validating
/// probabilities that were computed in floating point.
const PROB_SLACK: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Configuration types
// ---------------------------------------------------------------------------

/// One licensed band and the statistics of the primary link operating on it.
#[derive(Debug, Clone, PartialEq)]
pub struct BandConfig {
    /// Bandwidth `W_j` in Hz. Zero denotes a virtual band.
    pub bandwidth_hz: f64,
    /// Mean primary arrival rate `lambda_p_j` in packets/slot, in `[0, 1]`.
    pub primary_arrival_rate: f64,
    /// Received SNR of the primary link at unit channel gain, `> 0`.
    pub primary_snr: f64,
    /// Mean of the exponentially distributed primary channel gain, `> 0`.
    pub primary_channel_var: f64,
}

impl BandConfig {
    /// A zero-bandwidth band whose primary never transmits.
    pub fn virtual_band() -> Self {
        Self {
            bandwidth_hz: 0.0,
            primary_arrival_rate: 0.0,
            primary_snr: 1.0,
            primary_channel_var: 1.0,
        }
    }
}

/// One secondary user: its traffic and its link statistics per band.
#[derive(Debug, Clone, PartialEq)]
pub struct SuConfig {
    /// Mean arrival rate `lambda_s_k` in packets/slot, in `[0, 1]`.
    pub arrival_rate: f64,
    /// Received SNR at the user's receiver at unit channel gain, `> 0`.
    pub snr: f64,
    /// Mean channel gain towards each band (length = number of bands).
    /// A single-valued link model is the common case; per-band values are
    /// an extension hook.
    pub channel_var_per_band: Vec<f64>,
}

impl SuConfig {
    /// User with the same mean channel gain on every band.
    pub fn uniform(arrival_rate: f64, snr: f64, channel_var: f64, num_bands: usize) -> Self {
        Self {
            arrival_rate,
            snr,
            channel_var_per_band: vec![channel_var; num_bands],
        }
    }
}

/// Full physical description of the network: slot timing, packet size,
/// bands and secondary users.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of licensed bands `M_p`.
    pub num_bands: usize,
    /// Number of secondary users `M_s`.
    pub num_sus: usize,
    /// Slot duration `T` in seconds, `> 0`.
    pub slot_duration_s: f64,
    /// Sensing duration `tau` in seconds, `0 <= tau < T`.
    pub sensing_duration_s: f64,
    /// Packet size `b` in bits, `> 0`.
    pub packet_bits: f64,
    /// Per-band parameters, length `num_bands`.
    pub bands: Vec<BandConfig>,
    /// Per-user parameters, length `num_sus`.
    pub sus: Vec<SuConfig>,
}

impl SystemConfig {
    /// Builds and validates a configuration. Counts are taken from the
    /// list lengths.
    pub fn new(
        slot_duration_s: f64,
        sensing_duration_s: f64,
        packet_bits: f64,
        bands: Vec<BandConfig>,
        sus: Vec<SuConfig>,
    ) -> Result<Self> {
        let cfg = Self {
            num_bands: bands.len(),
            num_sus: sus.len(),
            slot_duration_s,
            sensing_duration_s,
            packet_bits,
            bands,
            sus,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every structural invariant of the configuration.
    pub fn validate(&self) -> Result<()> {
        if !(self.slot_duration_s > 0.0) {
            return Err(Error::InvalidParameter {
                what: "slot duration".into(),
                value: self.slot_duration_s,
            });
        }
        if !(self.sensing_duration_s >= 0.0) || self.sensing_duration_s >= self.slot_duration_s {
            return Err(Error::InvalidTiming {
                slot_s: self.slot_duration_s,
                sensing_s: self.sensing_duration_s,
            });
        }
        if !(self.packet_bits > 0.0) {
            return Err(Error::InvalidParameter {
                what: "packet size".into(),
                value: self.packet_bits,
            });
        }
        if self.num_bands == 0 || self.bands.len() != self.num_bands {
            return Err(Error::DimensionMismatch(format!(
                "declared {} bands, found {}",
                self.num_bands,
                self.bands.len()
            )));
        }
        if self.num_sus == 0 || self.sus.len() != self.num_sus {
            return Err(Error::DimensionMismatch(format!(
                "declared {} users, found {}",
                self.num_sus,
                self.sus.len()
            )));
        }
        for (j, band) in self.bands.iter().enumerate() {
            if !(band.bandwidth_hz >= 0.0) {
                return Err(Error::InvalidParameter {
                    what: format!("bandwidth of band {j}"),
                    value: band.bandwidth_hz,
                });
            }
            if !(0.0..=1.0).contains(&band.primary_arrival_rate) {
                return Err(Error::InvalidParameter {
                    what: format!("primary arrival rate on band {j}"),
                    value: band.primary_arrival_rate,
                });
            }
            if band.bandwidth_hz == 0.0 && band.primary_arrival_rate != 0.0 {
                return Err(Error::InvalidParameter {
                    what: format!("primary arrival rate on virtual band {j}"),
                    value: band.primary_arrival_rate,
                });
            }
            if band.bandwidth_hz > 0.0 && (!(band.primary_snr > 0.0) || !(band.primary_channel_var > 0.0)) {
                return Err(Error::InvalidParameter {
                    what: format!("primary link statistics on band {j}"),
                    value: band.primary_snr.min(band.primary_channel_var),
                });
            }
        }
        for (k, su) in self.sus.iter().enumerate() {
            if !(0.0..=1.0).contains(&su.arrival_rate) {
                return Err(Error::InvalidParameter {
                    what: format!("arrival rate of user {k}"),
                    value: su.arrival_rate,
                });
            }
            if !(su.snr > 0.0) {
                return Err(Error::InvalidParameter { what: format!("SNR of user {k}"), value: su.snr });
            }
            if su.channel_var_per_band.len() != self.num_bands {
                return Err(Error::DimensionMismatch(format!(
                    "user {k} has {} channel variances for {} bands",
                    su.channel_var_per_band.len(),
                    self.num_bands
                )));
            }
            for (j, v) in su.channel_var_per_band.iter().enumerate() {
                if !(*v > 0.0) {
                    return Err(Error::InvalidParameter {
                        what: format!("channel variance of user {k} on band {j}"),
                        value: *v,
                    });
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Closed-form link probabilities
// ---------------------------------------------------------------------------

/// Transmission rate of a secondary user in bits/s.
///
/// The user senses for `tau` seconds and still delivers a whole `b`-bit
/// packet in the remaining `T - tau` seconds, so `r = b / (T - tau)`.
pub fn secondary_rate(cfg: &SystemConfig) -> Result<f64> {
    if cfg.sensing_duration_s >= cfg.slot_duration_s {
        return Err(Error::InvalidTiming {
            slot_s: cfg.slot_duration_s,
            sensing_s: cfg.sensing_duration_s,
        });
    }
    Ok(cfg.packet_bits / (cfg.slot_duration_s - cfg.sensing_duration_s))
}

/// Non-outage probability of a Rayleigh link carrying `rate_bps` over
/// `bandwidth_hz` with mean received SNR `snr * channel_var`.
///
/// Outage is the event that the rate exceeds the instantaneous capacity
/// `W log2(1 + gamma * alpha)` with `alpha ~ Exp(mean = sigma^2)`, hence
/// the complement is `exp(-(2^(r/W) - 1) / (gamma * sigma^2))`.
fn non_outage(rate_bps: f64, bandwidth_hz: f64, snr: f64, channel_var: f64) -> f64 {
    if bandwidth_hz == 0.0 {
        return 0.0;
    }
    let threshold = ((rate_bps / bandwidth_hz).exp2() - 1.0) / (snr * channel_var);
    (-threshold).exp()
}

/// Probability that a secondary packet sent by user `su` on band `band`
/// is received correctly, given the band is free.
///
/// Returns exactly 0 on a virtual (zero-bandwidth) band.
pub fn secondary_success_prob(cfg: &SystemConfig, band: usize, su: usize) -> Result<f64> {
    check_index("band", band, cfg.num_bands)?;
    check_index("user", su, cfg.num_sus)?;
    let rate = secondary_rate(cfg)?;
    let b = &cfg.bands[band];
    let s = &cfg.sus[su];
    Ok(non_outage(rate, b.bandwidth_hz, s.snr, s.channel_var_per_band[band]))
}

/// Probability that a primary packet on `band` is received correctly.
///
/// The primary transmits for the whole slot (`rate = b / T`); under perfect
/// sensing this is also the mean service rate `mu_p` of the primary queue.
pub fn primary_success_prob(cfg: &SystemConfig, band: usize) -> Result<f64> {
    check_index("band", band, cfg.num_bands)?;
    let b = &cfg.bands[band];
    if b.bandwidth_hz == 0.0 {
        return Err(Error::VirtualBandPrimary { band });
    }
    let rate = cfg.packet_bits / cfg.slot_duration_s;
    Ok(non_outage(rate, b.bandwidth_hz, b.primary_snr, b.primary_channel_var))
}

/// Stationary probability `pi_j` that band `band` is free, i.e. that its
/// primary queue is empty: `pi = 1 - lambda_p / mu_p`.
///
/// A virtual band is always free. An unstable primary queue
/// (`lambda_p >= mu_p`) has no stationary availability and is an error.
pub fn band_availability(cfg: &SystemConfig, band: usize) -> Result<f64> {
    check_index("band", band, cfg.num_bands)?;
    let b = &cfg.bands[band];
    if b.bandwidth_hz == 0.0 {
        return Ok(1.0);
    }
    let mu = primary_success_prob(cfg, band)?;
    availability_from_rates(b.primary_arrival_rate, mu, band)
}

fn availability_from_rates(lambda: f64, mu: f64, band: usize) -> Result<f64> {
    if lambda >= mu {
        return Err(Error::PrimaryUnstable { band, arrival: lambda, service: mu });
    }
    Ok(1.0 - lambda / mu)
}

fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(Error::IndexOutOfBounds { what, index, len });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Success matrix
// ---------------------------------------------------------------------------

/// The per-slot success probabilities `P[j][k] = pi_j * pout_bar[j][k]`:
/// the probability that user `k`, when assigned to band `j`, departs a
/// packet in that slot (band free AND link not in outage).
///
/// Rows index bands, columns index secondary users.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessMatrix {
    values: Vec<f64>,
    num_bands: usize,
    num_sus: usize,
}

impl SuccessMatrix {
    /// Builds the matrix from explicit entries (row-major, bands x users).
    pub fn from_values(num_bands: usize, num_sus: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_bands * num_sus {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {num_bands}x{num_sus} success matrix",
                values.len()
            )));
        }
        for &v in &values {
            if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&v) {
                return Err(Error::InvalidParameter { what: "success probability".into(), value: v });
            }
        }
        Ok(Self { values, num_bands, num_sus })
    }

    /// Builds the matrix from an availability vector and a non-outage table,
    /// entrywise `pi[j] * pout_bar[j][k]`. This is the direct input mode used
    /// when probabilities are specified rather than derived from link physics.
    pub fn from_tables(pi: &[f64], pout_bar: &[Vec<f64>]) -> Result<Self> {
        let num_bands = pi.len();
        if pout_bar.len() != num_bands {
            return Err(Error::DimensionMismatch(format!(
                "{} availability entries but {} outage rows",
                num_bands,
                pout_bar.len()
            )));
        }
        let num_sus = pout_bar.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(num_bands * num_sus);
        for (j, row) in pout_bar.iter().enumerate() {
            if row.len() != num_sus {
                return Err(Error::DimensionMismatch(format!(
                    "outage row {j} has {} entries, expected {num_sus}",
                    row.len()
                )));
            }
            if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&pi[j]) {
                return Err(Error::InvalidParameter { what: format!("availability of band {j}"), value: pi[j] });
            }
            for &p in row {
                if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&p) {
                    return Err(Error::InvalidParameter { what: "non-outage probability".into(), value: p });
                }
                values.push(pi[j] * p);
            }
        }
        Self::from_values(num_bands, num_sus, values)
    }

    pub fn num_bands(&self) -> usize {
        self.num_bands
    }

    pub fn num_sus(&self) -> usize {
        self.num_sus
    }

    /// Entry `P[band][su]`.
    pub fn get(&self, band: usize, su: usize) -> f64 {
        assert!(band < self.num_bands && su < self.num_sus, "index out of bounds");
        self.values[band * self.num_sus + su]
    }

    /// Largest success probability available to user `su` on any band.
    pub fn best_rate_for(&self, su: usize) -> f64 {
        (0..self.num_bands).map(|j| self.get(j, su)).fold(0.0, f64::max)
    }
}

/// Computes the success matrix of a physical configuration:
/// `P[j][k] = band_availability(j) * secondary_success_prob(j, k)`.
///
/// Fails if any real primary queue is unstable.
pub fn build_success_matrix(cfg: &SystemConfig) -> Result<SuccessMatrix> {
    let mut values = Vec::with_capacity(cfg.num_bands * cfg.num_sus);
    for j in 0..cfg.num_bands {
        let pi = band_availability(cfg, j)?;
        for k in 0..cfg.num_sus {
            values.push(pi * secondary_success_prob(cfg, j, k)?);
        }
    }
    SuccessMatrix::from_values(cfg.num_bands, cfg.num_sus, values)
}

// ---------------------------------------------------------------------------
// Resolved probability tables
// ---------------------------------------------------------------------------

/// The resolved per-slot probability tables that drive the simulator:
/// primary arrivals and service rates per band, secondary non-outage per
/// (band, user) pair, and secondary arrival rates.
///
/// Built either from a physical [`SystemConfig`] or directly from
/// `(pi, pout_bar)` tables. Construction does not require stable primaries
/// (the simulator deliberately supports unstable ones); anything that needs
/// a stationary availability checks at call time.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    lambda_p: Vec<f64>,
    mu_p: Vec<f64>,
    pout_bar_s: Vec<Vec<f64>>,
    lambda_s: Vec<f64>,
}

impl NetworkModel {
    /// Resolves a physical configuration into probability tables.
    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        let mut mu_p = Vec::with_capacity(cfg.num_bands);
        let mut pout_bar_s = Vec::with_capacity(cfg.num_bands);
        for j in 0..cfg.num_bands {
            if cfg.bands[j].bandwidth_hz == 0.0 {
                mu_p.push(1.0);
            } else {
                mu_p.push(primary_success_prob(cfg, j)?);
            }
            let mut row = Vec::with_capacity(cfg.num_sus);
            for k in 0..cfg.num_sus {
                row.push(secondary_success_prob(cfg, j, k)?);
            }
            pout_bar_s.push(row);
        }
        Ok(Self {
            lambda_p: cfg.bands.iter().map(|b| b.primary_arrival_rate).collect(),
            mu_p,
            pout_bar_s,
            lambda_s: cfg.sus.iter().map(|s| s.arrival_rate).collect(),
        })
    }

    /// Builds the tables directly. `pi` and `mu_p` determine the primary
    /// arrivals via `lambda_p = (1 - pi) * mu_p`.
    pub fn from_tables(
        pi: &[f64],
        mu_p: &[f64],
        pout_bar_s: Vec<Vec<f64>>,
        lambda_s: Vec<f64>,
    ) -> Result<Self> {
        if pi.len() != mu_p.len() || pout_bar_s.len() != pi.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} availabilities, {} service rates, {} outage rows",
                pi.len(),
                mu_p.len(),
                pout_bar_s.len()
            )));
        }
        let num_sus = lambda_s.len();
        let mut lambda_p = Vec::with_capacity(pi.len());
        for (j, (&p, &mu)) in pi.iter().zip(mu_p).enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter { what: format!("availability of band {j}"), value: p });
            }
            if !(0.0..=1.0).contains(&mu) {
                return Err(Error::InvalidParameter { what: format!("service rate of band {j}"), value: mu });
            }
            if pout_bar_s[j].len() != num_sus {
                return Err(Error::DimensionMismatch(format!(
                    "outage row {j} has {} entries for {num_sus} users",
                    pout_bar_s[j].len()
                )));
            }
            lambda_p.push((1.0 - p) * mu);
        }
        for (j, row) in pout_bar_s.iter().enumerate() {
            for &v in row {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidParameter {
                        what: format!("non-outage probability on band {j}"),
                        value: v,
                    });
                }
            }
        }
        for (k, &l) in lambda_s.iter().enumerate() {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidParameter { what: format!("arrival rate of user {k}"), value: l });
            }
        }
        Ok(Self { lambda_p, mu_p: mu_p.to_vec(), pout_bar_s, lambda_s })
    }

    pub fn num_bands(&self) -> usize {
        self.lambda_p.len()
    }

    pub fn num_sus(&self) -> usize {
        self.lambda_s.len()
    }

    /// Primary arrival rate on `band`, packets/slot.
    pub fn primary_arrival_rate(&self, band: usize) -> f64 {
        self.lambda_p[band]
    }

    /// Primary service rate (non-outage probability) on `band`.
    pub fn primary_service_rate(&self, band: usize) -> f64 {
        self.mu_p[band]
    }

    /// Secondary non-outage probability for `su` on `band`, given a free band.
    pub fn secondary_success(&self, band: usize, su: usize) -> f64 {
        self.pout_bar_s[band][su]
    }

    /// Secondary arrival rate of `su`, packets/slot.
    pub fn secondary_arrival_rate(&self, su: usize) -> f64 {
        self.lambda_s[su]
    }

    /// Replaces the secondary arrival rates (used when exploring rate points
    /// other than the configured ones).
    pub fn with_secondary_arrivals(mut self, lambda_s: Vec<f64>) -> Result<Self> {
        if lambda_s.len() != self.lambda_s.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} arrival rates for {} users",
                lambda_s.len(),
                self.lambda_s.len()
            )));
        }
        for (k, &l) in lambda_s.iter().enumerate() {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidParameter { what: format!("arrival rate of user {k}"), value: l });
            }
        }
        self.lambda_s = lambda_s;
        Ok(self)
    }

    /// Stationary availability `1 - lambda_p/mu_p` of `band`; an error if
    /// that primary queue is unstable.
    pub fn availability(&self, band: usize) -> Result<f64> {
        availability_from_rates(self.lambda_p[band], self.mu_p[band], band)
    }

    /// True when the primary queue on `band` has no stationary distribution.
    pub fn primary_unstable(&self, band: usize) -> bool {
        self.lambda_p[band] >= self.mu_p[band]
    }

    /// The success matrix `P[j][k] = pi_j * pout_bar[j][k]` for the
    /// stability optimizations. Requires every primary queue stable.
    pub fn success_matrix(&self) -> Result<SuccessMatrix> {
        let mut values = Vec::with_capacity(self.num_bands() * self.num_sus());
        for j in 0..self.num_bands() {
            let pi = self.availability(j)?;
            for k in 0..self.num_sus() {
                values.push(pi * self.pout_bar_s[j][k]);
            }
        }
        SuccessMatrix::from_values(self.num_bands(), self.num_sus(), values)
    }
}

// ---------------------------------------------------------------------------
// Assignment counting
// ---------------------------------------------------------------------------

/// Number of distinct user-to-band assignments under the two access schemes.
///
/// Exclusive assignment (one user per band) counts partial injections:
/// `M_p!/(M_p - M_s)!` when bands are plentiful, `M_s!/(M_s - M_p)!`
/// otherwise. Free selection counts all maps: `M_p^M_s`.
///
/// Returns `(exclusive, free_selection)` or an overflow error when a count
/// exceeds 128 bits.
pub fn assignment_count(num_bands: usize, num_sus: usize) -> Result<(u128, u128)> {
    if num_bands == 0 || num_sus == 0 {
        return Err(Error::DimensionMismatch("counts must be at least 1".into()));
    }
    let overflow = || Error::CountOverflow { num_bands, num_sus };
    let falling = |n: usize, k: usize| -> Result<u128> {
        let mut acc: u128 = 1;
        for i in 0..k {
            acc = acc.checked_mul((n - i) as u128).ok_or_else(overflow)?;
        }
        Ok(acc)
    };
    let exclusive = if num_bands >= num_sus {
        falling(num_bands, num_sus)?
    } else {
        falling(num_sus, num_bands)?
    };
    let mut free: u128 = 1;
    for _ in 0..num_sus {
        free = free.checked_mul(num_bands as u128).ok_or_else(overflow)?;
    }
    Ok((exclusive, free))
}

// ---------------------------------------------------------------------------
// Monte-Carlo validation of the outage closed form
// ---------------------------------------------------------------------------

/// Empirical estimate of a link's non-outage probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    /// Fraction of draws in which the rate was supported.
    pub p_hat: f64,
    /// Binomial standard error `sqrt(p_hat (1 - p_hat) / draws)`.
    pub std_err: f64,
    pub draws: usize,
}

/// Estimates the non-outage probability by drawing exponential channel
/// gains and counting the slots where `rate <= W log2(1 + snr * gain)`.
///
/// This is the independent check of the closed form used by [`secondary_success_prob`]
/// and [`primary_success_prob`]; it never evaluates that formula.
pub fn monte_carlo_success_prob(
    rate_bps: f64,
    bandwidth_hz: f64,
    snr: f64,
    channel_var: f64,
    draws: usize,
    seed: u64,
) -> MonteCarloEstimate {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut successes = 0usize;
    for _ in 0..draws {
        // Inverse-CDF draw of Exp(mean = channel_var).
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let gain = -channel_var * u.ln();
        let capacity = if bandwidth_hz == 0.0 {
            0.0
        } else {
            bandwidth_hz * (1.0 + snr * gain).log2()
        };
        if rate_bps <= capacity {
            successes += 1;
        }
    }
    let p_hat = successes as f64 / draws as f64;
    MonteCarloEstimate {
        p_hat,
        std_err: (p_hat * (1.0 - p_hat) / draws as f64).sqrt(),
        draws,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_band_config() -> SystemConfig {
        SystemConfig::new(
            1e-3,
            1e-4,
            1000.0,
            vec![
                BandConfig {
                    bandwidth_hz: 1e6,
                    primary_arrival_rate: 0.3,
                    primary_snr: 10.0,
                    primary_channel_var: 1.0,
                },
                BandConfig {
                    bandwidth_hz: 2e6,
                    primary_arrival_rate: 0.0,
                    primary_snr: 5.0,
                    primary_channel_var: 2.0,
                },
            ],
            vec![
                SuConfig::uniform(0.1, 10.0, 1.0, 2),
                SuConfig::uniform(0.2, 3.0, 0.5, 2),
            ],
        )
        .unwrap()
    }

    #[test]
    fn secondary_rate_matches_direct_evaluation() {
        let cfg = two_band_config();
        let r = secondary_rate(&cfg).unwrap();
        assert!((r - 1000.0 / 9e-4).abs() / r < 1e-12);

        let mut no_sensing = cfg.clone();
        no_sensing.sensing_duration_s = 0.0;
        assert_eq!(secondary_rate(&no_sensing).unwrap(), 1e6);

        let unit = SystemConfig::new(
            2.0,
            1.0,
            1.0,
            vec![BandConfig::virtual_band()],
            vec![SuConfig::uniform(0.0, 1.0, 1.0, 1)],
        )
        .unwrap();
        assert_eq!(secondary_rate(&unit).unwrap(), 1.0);
    }

    #[test]
    fn invalid_timing_rejected() {
        let mut cfg = two_band_config();
        cfg.sensing_duration_s = cfg.slot_duration_s;
        assert!(matches!(secondary_rate(&cfg), Err(Error::InvalidTiming { .. })));
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn secondary_success_reference_value() {
        // b=1000, T=1e-3, tau=1e-4, W=1e6, snr*var=10:
        // exponent (2^(10/9) - 1)/10 ~ 0.1160119, success ~ 0.8904646.
        let cfg = two_band_config();
        let p = secondary_success_prob(&cfg, 0, 0).unwrap();
        assert!((p - 0.890464584160337).abs() < 1e-12);
    }

    #[test]
    fn virtual_band_success_is_zero() {
        let cfg = SystemConfig::new(
            1e-3,
            1e-4,
            1000.0,
            vec![BandConfig::virtual_band()],
            vec![SuConfig::uniform(0.1, 10.0, 1.0, 1)],
        )
        .unwrap();
        assert_eq!(secondary_success_prob(&cfg, 0, 0).unwrap(), 0.0);
        assert!(matches!(
            primary_success_prob(&cfg, 0),
            Err(Error::VirtualBandPrimary { band: 0 })
        ));
        assert_eq!(band_availability(&cfg, 0).unwrap(), 1.0);
    }

    #[test]
    fn high_snr_limit_approaches_one() {
        let mut cfg = two_band_config();
        cfg.sus[0].snr = 1e12;
        cfg.sus[0].channel_var_per_band = vec![1.0; 2];
        assert!(secondary_success_prob(&cfg, 0, 0).unwrap() > 1.0 - 1e-6);
    }

    #[test]
    fn primary_success_reference_values() {
        let cfg = two_band_config();
        // b/(T W) = 1 -> (2^1 - 1)/10 = 0.1.
        let p = primary_success_prob(&cfg, 0).unwrap();
        assert!((p - (-0.1f64).exp()).abs() < 1e-15);
        assert!((p - 0.9048374180359595).abs() < 1e-12);

        let mut weak = cfg.clone();
        weak.bands[0].primary_snr = 0.1;
        let p = primary_success_prob(&weak, 0).unwrap();
        assert!((p - (-10.0f64).exp()).abs() < 1e-18);

        let mut tiny_packet = cfg;
        tiny_packet.packet_bits = 1e-9;
        assert!(primary_success_prob(&tiny_packet, 0).unwrap() > 1.0 - 1e-6);
    }

    #[test]
    fn availability_ratio_and_rejection() {
        let mut cfg = two_band_config();
        assert_eq!(band_availability(&cfg, 1).unwrap(), 1.0);

        // mu on band 0 is ~0.9048; pick lambda for a clean ratio.
        let mu = primary_success_prob(&cfg, 0).unwrap();
        cfg.bands[0].primary_arrival_rate = mu / 2.0;
        assert!((band_availability(&cfg, 0).unwrap() - 0.5).abs() < 1e-15);

        cfg.bands[0].primary_arrival_rate = mu;
        assert!(matches!(
            band_availability(&cfg, 0),
            Err(Error::PrimaryUnstable { band: 0, .. })
        ));
    }

    #[test]
    fn success_matrix_from_tables_matches_products() {
        // Availability and non-outage values of the two-band reference
        // scenario: pi = (0.25, 0.875), pout_bar rows (0.7, 0.85), (0.8, 0.9).
        let p = SuccessMatrix::from_tables(
            &[0.25, 0.875],
            &[vec![0.7, 0.85], vec![0.8, 0.9]],
        )
        .unwrap();
        assert_eq!(p.get(0, 0), 0.25 * 0.7);
        assert_eq!(p.get(0, 1), 0.25 * 0.85);
        assert_eq!(p.get(1, 0), 0.875 * 0.8);
        assert_eq!(p.get(1, 1), 0.875 * 0.9);
        assert_eq!(p.get(0, 0), 0.175);
        assert_eq!(p.get(1, 1), 0.7875);
    }

    #[test]
    fn success_matrix_virtual_row_is_zero() {
        let cfg = SystemConfig::new(
            1e-3,
            1e-4,
            1000.0,
            vec![
                BandConfig {
                    bandwidth_hz: 1e6,
                    primary_arrival_rate: 0.1,
                    primary_snr: 10.0,
                    primary_channel_var: 1.0,
                },
                BandConfig::virtual_band(),
            ],
            vec![SuConfig::uniform(0.1, 10.0, 1.0, 2)],
        )
        .unwrap();
        let p = build_success_matrix(&cfg).unwrap();
        assert_eq!(p.get(1, 0), 0.0);
        assert!(p.get(0, 0) > 0.0);
    }

    #[test]
    fn trivial_one_by_one_matrix() {
        let p = SuccessMatrix::from_tables(&[1.0], &[vec![1.0]]).unwrap();
        assert_eq!(p.get(0, 0), 1.0);
    }

    #[test]
    fn assignment_counts() {
        assert_eq!(assignment_count(2, 2).unwrap(), (2, 4));
        assert_eq!(assignment_count(4, 2).unwrap(), (12, 16));
        assert_eq!(assignment_count(1, 1).unwrap(), (1, 1));
        // More users than bands: count injections of bands into users.
        assert_eq!(assignment_count(2, 3).unwrap(), (6, 8));
        assert!(matches!(
            assignment_count(200, 100),
            Err(Error::CountOverflow { .. })
        ));
    }

    #[test]
    fn success_prob_monotonicity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..200 {
            let t: f64 = rng.gen_range(1e-4..1e-2);
            let tau = t * rng.gen_range(0.0..0.9);
            let b = rng.gen_range(100.0..5000.0);
            let w = rng.gen_range(1e4..1e7);
            let snr = rng.gen_range(0.1..100.0);
            let var = rng.gen_range(0.1..10.0);
            let base = |b, t, tau, w, snr, var| {
                let cfg = SystemConfig::new(
                    t,
                    tau,
                    b,
                    vec![BandConfig {
                        bandwidth_hz: w,
                        primary_arrival_rate: 0.0,
                        primary_snr: snr,
                        primary_channel_var: var,
                    }],
                    vec![SuConfig::uniform(0.0, snr, var, 1)],
                )
                .unwrap();
                secondary_success_prob(&cfg, 0, 0).unwrap()
            };
            let p = base(b, t, tau, w, snr, var);
            if !(1e-9..=1.0 - 1e-9).contains(&p) {
                // Saturated probabilities round to 0 or 1; strictness is
                // only observable in the interior.
                continue;
            }
            assert!(p < base(b, t, tau, w * 1.5, snr, var), "increasing in W");
            assert!(p < base(b, t, tau, w, snr * 1.5, var), "increasing in snr");
            assert!(p < base(b, t, tau, w, snr, var * 1.5), "increasing in var");
            assert!(p > base(b * 1.5, t, tau, w, snr, var), "decreasing in b");
            let tau_up = tau + (t - tau) * 0.5;
            assert!(p > base(b, t, tau_up, w, snr, var), "decreasing in tau");
        }
    }

    #[test]
    fn secondary_never_beats_primary_on_same_link() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        for _ in 0..100 {
            let t: f64 = rng.gen_range(1e-4..1e-2);
            let tau = t * rng.gen_range(1e-3..0.9);
            let b = rng.gen_range(100.0..5000.0);
            let w = rng.gen_range(1e4..1e7);
            let snr = rng.gen_range(0.1..100.0);
            let var = rng.gen_range(0.1..10.0);
            let cfg = SystemConfig::new(
                t,
                tau,
                b,
                vec![BandConfig {
                    bandwidth_hz: w,
                    primary_arrival_rate: 0.0,
                    primary_snr: snr,
                    primary_channel_var: var,
                }],
                vec![SuConfig::uniform(0.0, snr, var, 1)],
            )
            .unwrap();
            let secondary = secondary_success_prob(&cfg, 0, 0).unwrap();
            let primary = primary_success_prob(&cfg, 0).unwrap();
            assert!(secondary < primary, "sensing penalty must cost rate");

            let mut eq = cfg.clone();
            eq.sensing_duration_s = 0.0;
            let secondary = secondary_success_prob(&eq, 0, 0).unwrap();
            assert!((secondary - primary).abs() < 1e-15, "equal when tau = 0");
        }
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let cfg = two_band_config();
        let analytic = secondary_success_prob(&cfg, 0, 0).unwrap();
        let rate = secondary_rate(&cfg).unwrap();
        let est = monte_carlo_success_prob(rate, 1e6, 10.0, 1.0, 200_000, 12345);
        assert!(
            (est.p_hat - analytic).abs() <= 3.0 * est.std_err,
            "analytic {analytic} vs empirical {} (se {})",
            est.p_hat,
            est.std_err
        );
    }
}
