//! `simulate`: run the slot engine over one or more seeds and write traces,
//! per-seed summaries and a merged majority verdict.

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::util::{parse_fixed_map, parse_seeds};
use crate::{SimulateArgs, Variant};
use bandalloc::baselines::{FixedAssignment, SelectionPolicy};
use bandalloc::birkhoff::PermutationSchedule;
use bandalloc::sim::{
    run_slots, stability_verdict, summarize, AccessPolicy, QueueStatus, SimOptions,
    StabilityVerdict, TraceSummary, DEFAULT_DRIFT_THRESHOLD, DEFAULT_WINDOW_FRACTION,
    MIN_VERDICT_HORIZON,
};
use rayon::prelude::*;
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Deserialize)]
struct GammaFile {
    /// Row-major selection probabilities, one row per band.
    gamma: Vec<Vec<f64>>,
}

enum PolicyInput {
    Schedule(PermutationSchedule),
    Selection(SelectionPolicy),
    Fixed(FixedAssignment),
}

pub fn run(args: &SimulateArgs) -> Result<(), CliError> {
    let resolved = crate::config::load(&args.config)?;
    let model = resolved.model;
    let (mp, ms) = (model.num_bands(), model.num_sus());

    if args.horizon < MIN_VERDICT_HORIZON {
        return Err(CliError::Config(vec![format!(
            "horizon {} is below the verdict minimum {MIN_VERDICT_HORIZON}",
            args.horizon
        )]));
    }
    let seeds = parse_seeds(&args.seeds)?;

    let input = match args.variant {
        Variant::S => {
            let path = args.schedule.as_ref().ok_or_else(|| {
                CliError::Config(vec!["variant 's' needs --schedule".into()])
            })?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(e, format!("reading {}", path.display())))?;
            let schedule: PermutationSchedule = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
            PolicyInput::Schedule(schedule)
        }
        Variant::Shat => {
            let path = args.gamma.as_ref().ok_or_else(|| {
                CliError::Config(vec!["variant 'shat' needs --gamma".into()])
            })?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(e, format!("reading {}", path.display())))?;
            let file: GammaFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
            if file.gamma.len() != mp || file.gamma.iter().any(|r| r.len() != ms) {
                return Err(CliError::Config(vec![format!(
                    "gamma must be {mp} rows of {ms} entries"
                )]));
            }
            let flat: Vec<f64> = file.gamma.into_iter().flatten().collect();
            PolicyInput::Selection(
                SelectionPolicy::new(mp, ms, flat)
                    .map_err(|e| CliError::Config(vec![e.to_string()]))?,
            )
        }
        Variant::Fixed => {
            let map = args.map.as_ref().ok_or_else(|| {
                CliError::Config(vec!["variant 'fixed' needs --map".into()])
            })?;
            let band_of_su = parse_fixed_map(map, mp, ms)?;
            PolicyInput::Fixed(
                FixedAssignment::new(mp, band_of_su)
                    .map_err(|e| CliError::Config(vec![e.to_string()]))?,
            )
        }
    };
    let policy = match &input {
        PolicyInput::Schedule(s) => AccessPolicy::PermutationSchedule(s),
        PolicyInput::Selection(g) => AccessPolicy::IndependentSelection(g),
        PolicyInput::Fixed(f) => AccessPolicy::FixedAssignment(f),
    };

    // Seeds are independent runs; trace files are written per seed.
    let results: Vec<(u64, TraceSummary, StabilityVerdict)> = seeds
        .par_iter()
        .map(|&seed| -> Result<_, CliError> {
            let mut opts = SimOptions::new(args.horizon, seed);
            if let Some(stride) = args.stride {
                opts = opts.with_stride(stride);
            }
            let trace =
                run_slots(&model, &policy, &opts).map_err(|e| CliError::Config(vec![e.to_string()]))?;
            let verdict = stability_verdict(&trace, DEFAULT_DRIFT_THRESHOLD, DEFAULT_WINDOW_FRACTION)
                .map_err(|e| CliError::Numerical(e.to_string()))?;

            let trace_path = seed_path(&args.out, seed, "trace.csv");
            let mut buf = Vec::new();
            trace
                .write_csv(&mut buf)
                .map_err(|e| CliError::io(e, format!("writing {}", trace_path.display())))?;
            std::fs::write(&trace_path, buf)
                .map_err(|e| CliError::io(e, format!("writing {}", trace_path.display())))?;

            let summary = summarize(&trace, &verdict);
            let summary_path = seed_path(&args.out, seed, "summary.json");
            let text = serde_json::to_string_pretty(&summary)
                .map_err(|e| CliError::Numerical(format!("serializing summary: {e}")))?;
            std::fs::write(&summary_path, text)
                .map_err(|e| CliError::io(e, format!("writing {}", summary_path.display())))?;
            Ok((seed, summary, verdict))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let majority_primary = majority(results.iter().map(|(_, _, v)| &v.primary), mp);
    let majority_secondary = majority(results.iter().map(|(_, _, v)| &v.secondary), ms);

    let manifest = RunManifest::new(&args.config, seeds.clone())?;
    let merged = serde_json::json!({
        "horizon": args.horizon,
        "seeds": seeds,
        "majority_verdict": {
            "primary": majority_primary,
            "secondary": majority_secondary,
        },
        "collisions_per_seed": results.iter().map(|(s, sum, _)| serde_json::json!({
            "seed": s, "collisions": sum.collisions,
        })).collect::<Vec<_>>(),
        "manifest": manifest,
    });
    let merged_path = {
        let mut p = args.out.as_os_str().to_owned();
        p.push(".merged.json");
        PathBuf::from(p)
    };
    std::fs::write(&merged_path, serde_json::to_string_pretty(&merged).expect("valid json"))
        .map_err(|e| CliError::io(e, format!("writing {}", merged_path.display())))?;

    println!(
        "{} seed(s) over {} slots; majority verdicts: primary {:?}, secondary {:?}",
        seeds.len(),
        args.horizon,
        majority_primary,
        majority_secondary
    );
    Ok(())
}

fn seed_path(prefix: &std::path::Path, seed: u64, suffix: &str) -> PathBuf {
    let mut p = prefix.as_os_str().to_owned();
    p.push(format!(".seed{seed}.{suffix}"));
    PathBuf::from(p)
}

/// Majority status per queue; no strict majority means indeterminate.
fn majority<'a>(
    verdicts: impl Iterator<Item = &'a Vec<bandalloc::sim::QueueVerdict>>,
    queues: usize,
) -> Vec<&'static str> {
    let mut counts = vec![[0usize; 3]; queues];
    let mut total = 0;
    for per_queue in verdicts {
        total += 1;
        for (q, verdict) in per_queue.iter().enumerate() {
            let idx = match verdict.status {
                QueueStatus::Stable => 0,
                QueueStatus::Unstable => 1,
                QueueStatus::Indeterminate => 2,
            };
            counts[q][idx] += 1;
        }
    }
    counts
        .into_iter()
        .map(|c| {
            if c[0] * 2 > total {
                "stable"
            } else if c[1] * 2 > total {
                "unstable"
            } else {
                "indeterminate"
            }
        })
        .collect()
}
