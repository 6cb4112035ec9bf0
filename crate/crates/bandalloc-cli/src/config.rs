//! JSON configuration schema and its resolution into probability tables.
//!
//! Each band and each user may be described either physically (bandwidth,
//! SNR, channel variance — probabilities are computed from the slot timing)
//! or directly (availability and non-outage probabilities). The two styles
//! can be mixed per entry; when both are present for the same quantity they
//! must agree to 1e-12. Every violation is collected so a broken file is
//! reported once, in full.
//!
//! ```json
//! {
//!   "slot": { "T": 1e-3, "tau": 1e-4, "b": 1000 },
//!   "bands": [
//!     { "W": 1e6, "lambda_p": 0.3, "gamma_p": 10.0, "sigma2_p": 1.0 },
//!     { "pi": 0.875, "pout_bar_primary": 0.8 }
//!   ],
//!   "sus": [
//!     { "lambda": 0.2, "gamma": 10.0, "sigma2": 1.0 },
//!     { "lambda": 0.1, "pout_bar": [0.85, 0.9] }
//!   ]
//! }
//! ```
//!
//! A direct-mode band without `pout_bar_primary` gets `mu_p = 1`, i.e. its
//! occupancy is redrawn independently every slot with the stated
//! availability.

use crate::error::CliError;
use bandalloc::model::{BandConfig, NetworkModel, SuConfig, SystemConfig};
use serde::Deserialize;
use std::path::Path;

/// Tolerance for agreement between physical and direct values of the same
/// quantity.
const AGREEMENT_TOL: f64 = 1e-12;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub slot: Option<SlotSection>,
    pub bands: Vec<BandSection>,
    pub sus: Vec<SuSection>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSection {
    /// Slot duration T in seconds.
    #[serde(rename = "T")]
    pub t: f64,
    /// Sensing duration tau in seconds.
    pub tau: f64,
    /// Packet size b in bits.
    pub b: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSection {
    #[serde(rename = "W")]
    pub w: Option<f64>,
    pub lambda_p: Option<f64>,
    pub gamma_p: Option<f64>,
    pub sigma2_p: Option<f64>,
    pub pi: Option<f64>,
    pub pout_bar_primary: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuSection {
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub sigma2: Option<ScalarOrList>,
    pub pout_bar: Option<Vec<f64>>,
}

/// A per-band quantity given either uniformly or per band.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

/// The resolved network: probability tables ready for the solvers and the
/// simulator.
#[derive(Debug)]
pub struct ResolvedConfig {
    pub model: NetworkModel,
}

/// Loads and resolves a configuration file, or reports every problem found.
pub fn load(path: &Path) -> Result<ResolvedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    let file: ConfigFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
    resolve(&file)
}

pub fn resolve(file: &ConfigFile) -> Result<ResolvedConfig, CliError> {
    let mut errors: Vec<String> = Vec::new();
    let mp = file.bands.len();
    let ms = file.sus.len();
    if mp == 0 {
        errors.push("at least one band is required".into());
    }
    if ms == 0 {
        errors.push("at least one user is required".into());
    }

    // Physical computations go through a SystemConfig covering the physical
    // subset; a placeholder keeps indices aligned for non-physical entries.
    let needs_slot = file.bands.iter().any(|b| b.w.is_some_and(|w| w > 0.0))
        || file.sus.iter().any(|s| s.gamma.is_some());
    let slot = match (file.slot, needs_slot) {
        (Some(s), _) => {
            if !(s.t > 0.0) {
                errors.push(format!("slot duration T must be positive, got {}", s.t));
            }
            if !(s.tau >= 0.0) || s.tau >= s.t {
                errors.push(format!("sensing time tau = {} must satisfy 0 <= tau < T = {}", s.tau, s.t));
            }
            if !(s.b > 0.0) {
                errors.push(format!("packet size b must be positive, got {}", s.b));
            }
            Some(s)
        }
        (None, true) => {
            errors.push("physical parameters are present but the slot section is missing".into());
            None
        }
        (None, false) => None,
    };

    let mut pi = vec![1.0f64; mp];
    let mut mu_p = vec![1.0f64; mp];
    let mut pout_bar = vec![vec![0.0f64; ms]; mp];
    let mut lambda_s = vec![0.0f64; ms];

    // Physical path per band, where available.
    let physical_band = |j: usize, b: &BandSection, slot: &SlotSection| -> Result<(f64, f64), String> {
        let w = b.w.expect("caller checked");
        let cfg = SystemConfig::new(
            slot.t,
            slot.tau,
            slot.b,
            vec![BandConfig {
                bandwidth_hz: w,
                primary_arrival_rate: b.lambda_p.unwrap_or(0.0),
                primary_snr: b.gamma_p.unwrap_or(1.0),
                primary_channel_var: b.sigma2_p.unwrap_or(1.0),
            }],
            vec![SuConfig::uniform(0.0, 1.0, 1.0, 1)],
        )
        .map_err(|e| format!("band {}: {e}", j + 1))?;
        let mu = bandalloc::model::primary_success_prob(&cfg, 0)
            .map_err(|e| format!("band {}: {e}", j + 1))?;
        Ok((b.lambda_p.unwrap_or(0.0), mu))
    };

    for (j, band) in file.bands.iter().enumerate() {
        let label = j + 1;
        // A float-literal pattern would be the lint-free spelling, but the
        // guard keeps the zero-bandwidth intent explicit.
        #[allow(clippy::redundant_guards)]
        match (band.w, band.pi) {
            (Some(w), maybe_pi) if w == 0.0 => {
                // Virtual band: always free, never succeeds.
                if band.lambda_p.is_some_and(|l| l != 0.0) {
                    errors.push(format!("band {label}: a virtual band cannot have primary arrivals"));
                }
                if band.pout_bar_primary.is_some() {
                    errors.push(format!("band {label}: a virtual band has no primary link"));
                }
                if let Some(p) = maybe_pi {
                    if (p - 1.0).abs() > AGREEMENT_TOL {
                        errors.push(format!("band {label}: a virtual band is always free (pi = 1), got {p}"));
                    }
                }
                pi[j] = 1.0;
                mu_p[j] = 1.0;
            }
            (Some(_), maybe_pi) => {
                if band.gamma_p.is_none() || band.sigma2_p.is_none() {
                    errors.push(format!("band {label}: physical mode needs gamma_p and sigma2_p"));
                    continue;
                }
                let Some(slot) = slot.as_ref() else { continue };
                match physical_band(j, band, slot) {
                    Ok((lambda, mu)) => {
                        if lambda >= mu {
                            errors.push(format!(
                                "band {label}: primary queue unstable (lambda_p {lambda} >= mu_p {mu})"
                            ));
                            continue;
                        }
                        let computed_pi = 1.0 - lambda / mu;
                        if let Some(given) = maybe_pi {
                            if (given - computed_pi).abs() > AGREEMENT_TOL {
                                errors.push(format!(
                                    "band {label}: pi {given} disagrees with computed {computed_pi}"
                                ));
                            }
                        }
                        if let Some(given) = band.pout_bar_primary {
                            if (given - mu).abs() > AGREEMENT_TOL {
                                errors.push(format!(
                                    "band {label}: pout_bar_primary {given} disagrees with computed {mu}"
                                ));
                            }
                        }
                        pi[j] = computed_pi;
                        mu_p[j] = mu;
                    }
                    Err(e) => errors.push(e),
                }
            }
            (None, Some(p)) => {
                if !(0.0..=1.0).contains(&p) {
                    errors.push(format!("band {label}: pi = {p} outside [0, 1]"));
                    continue;
                }
                let mu = band.pout_bar_primary.unwrap_or(1.0);
                if !(0.0..=1.0).contains(&mu) {
                    errors.push(format!("band {label}: pout_bar_primary = {mu} outside [0, 1]"));
                    continue;
                }
                if band.lambda_p.is_some() || band.gamma_p.is_some() || band.sigma2_p.is_some() {
                    errors.push(format!(
                        "band {label}: direct mode (pi) cannot mix with physical fields without W"
                    ));
                }
                pi[j] = p;
                mu_p[j] = mu;
            }
            (None, None) => {
                errors.push(format!(
                    "band {label}: give either W with gamma_p/sigma2_p, or pi"
                ));
            }
        }
    }

    for (k, su) in file.sus.iter().enumerate() {
        let label = k + 1;
        let lambda = su.lambda.unwrap_or(0.0);
        if !(0.0..=1.0).contains(&lambda) {
            errors.push(format!("user {label}: lambda = {lambda} outside [0, 1]"));
        } else {
            lambda_s[k] = lambda;
        }

        let sigma2: Option<Vec<f64>> = match &su.sigma2 {
            Some(ScalarOrList::Scalar(v)) => Some(vec![*v; mp]),
            Some(ScalarOrList::List(v)) => {
                if v.len() != mp {
                    errors.push(format!(
                        "user {label}: sigma2 lists {} entries for {mp} bands",
                        v.len()
                    ));
                    None
                } else {
                    Some(v.clone())
                }
            }
            None => None,
        };

        let physical: Option<Vec<f64>> = match (su.gamma, &sigma2, slot.as_ref()) {
            (Some(gamma), Some(vars), Some(slot)) => {
                let mut row = vec![0.0; mp];
                let mut ok = true;
                for (j, band) in file.bands.iter().enumerate() {
                    match band.w {
                        Some(w) => {
                            let cfg = SystemConfig::new(
                                slot.t,
                                slot.tau,
                                slot.b,
                                vec![if w == 0.0 {
                                    BandConfig::virtual_band()
                                } else {
                                    BandConfig {
                                        bandwidth_hz: w,
                                        primary_arrival_rate: 0.0,
                                        primary_snr: 1.0,
                                        primary_channel_var: 1.0,
                                    }
                                }],
                                vec![SuConfig::uniform(0.0, gamma, vars[j], 1)],
                            );
                            match cfg.and_then(|c| bandalloc::model::secondary_success_prob(&c, 0, 0)) {
                                Ok(p) => row[j] = p,
                                Err(e) => {
                                    errors.push(format!("user {label}: {e}"));
                                    ok = false;
                                }
                            }
                        }
                        None => {
                            if su.pout_bar.is_none() {
                                errors.push(format!(
                                    "user {label}: band {} is direct-mode, so pout_bar is required",
                                    j + 1
                                ));
                                ok = false;
                            }
                        }
                    }
                }
                ok.then_some(row)
            }
            (Some(_), _, _) => {
                errors.push(format!("user {label}: physical mode needs gamma, sigma2 and the slot section"));
                None
            }
            (None, _, _) => None,
        };

        let direct: Option<&Vec<f64>> = match &su.pout_bar {
            Some(row) if row.len() != mp => {
                errors.push(format!(
                    "user {label}: pout_bar lists {} entries for {mp} bands",
                    row.len()
                ));
                None
            }
            Some(row) => {
                let mut ok = true;
                for (j, &v) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&v) {
                        errors.push(format!("user {label}: pout_bar[{}] = {v} outside [0, 1]", j + 1));
                        ok = false;
                    }
                    if file.bands[j].w == Some(0.0) && v != 0.0 {
                        errors.push(format!(
                            "user {label}: pout_bar[{}] must be 0 on a virtual band",
                            j + 1
                        ));
                        ok = false;
                    }
                }
                ok.then_some(row)
            }
            None => None,
        };

        match (&physical, direct) {
            (Some(computed), Some(given)) => {
                for j in 0..mp {
                    if file.bands[j].w.is_some() && (computed[j] - given[j]).abs() > AGREEMENT_TOL {
                        errors.push(format!(
                            "user {label}: pout_bar[{}] = {} disagrees with computed {}",
                            j + 1,
                            given[j],
                            computed[j]
                        ));
                    }
                }
                pout_bar.iter_mut().zip(given).for_each(|(row, &v)| row[k] = v);
            }
            (Some(computed), None) => {
                for (j, row) in pout_bar.iter_mut().enumerate() {
                    row[k] = computed[j];
                }
            }
            (None, Some(given)) => {
                for (j, row) in pout_bar.iter_mut().enumerate() {
                    row[k] = given[j];
                }
            }
            (None, None) => {
                errors.push(format!(
                    "user {label}: give either gamma/sigma2 or pout_bar"
                ));
            }
        }
    }

    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }

    let model = NetworkModel::from_tables(&pi, &mu_p, pout_bar, lambda_s)
        .map_err(|e| CliError::Config(vec![e.to_string()]))?;
    Ok(ResolvedConfig { model })
}
