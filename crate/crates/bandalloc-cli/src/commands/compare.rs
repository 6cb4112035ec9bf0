//! `compare`: the three systems' envelopes over a set of queries, with the
//! containment ordering checked on every row.

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::util::parse_su;
use crate::CompareArgs;
use bandalloc::baselines::{best_fixed_envelope, shat_optimize};
use bandalloc::stability::{max_rate_lp, RegionQuery};
use serde::Deserialize;
use std::collections::BTreeMap;

/// Slack allowed when checking `fixed <= random-selection <= exclusive`.
const ORDERING_TOL: f64 = 1e-9;

#[derive(Deserialize)]
struct QuerySpec {
    /// 1-based target user ("s2" or 2).
    target: TargetRef,
    /// Fixed rates of the other users, keyed "s1", "s2", ...
    #[serde(default)]
    fixed: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TargetRef {
    Index(usize),
    Name(String),
}

pub fn run(args: &CompareArgs) -> Result<(), CliError> {
    let resolved = crate::config::load(&args.config)?;
    let p = resolved
        .model
        .success_matrix()
        .map_err(|e| CliError::Config(vec![e.to_string()]))?;
    let (mp, ms) = (p.num_bands(), p.num_sus());

    let text = std::fs::read_to_string(&args.queries)
        .map_err(|e| CliError::io(e, format!("reading {}", args.queries.display())))?;
    let specs: Vec<QuerySpec> = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(vec![format!("{}: {e}", args.queries.display())]))?;
    if specs.is_empty() {
        return Err(CliError::Config(vec!["the query file lists no queries".into()]));
    }

    let mut csv = String::from("query,target,fixed,lambda_fixed,lambda_shat,lambda_s\n");
    for (i, spec) in specs.iter().enumerate() {
        let target = match &spec.target {
            TargetRef::Index(n) => parse_su(&n.to_string(), ms),
            TargetRef::Name(s) => parse_su(s, ms),
        }
        .map_err(|e| CliError::Config(vec![format!("query {}: {e}", i + 1)]))?;

        let mut query = RegionQuery::new(ms, target)
            .map_err(|e| CliError::Config(vec![e.to_string()]))?;
        let mut fixed_desc = Vec::new();
        for (name, &rate) in &spec.fixed {
            let su = parse_su(name, ms)
                .map_err(|e| CliError::Config(vec![format!("query {}: {e}", i + 1)]))?;
            query = query
                .with_rate(su, rate)
                .map_err(|e| CliError::Config(vec![format!("query {}: {e}", i + 1)]))?;
            fixed_desc.push(format!("s{}={rate}", su + 1));
        }

        let exclusive = max_rate_lp(&p, &query).map_err(|e| CliError::Numerical(e.to_string()))?;
        let shat = shat_optimize(&p, &query, args.restarts, args.iterations)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        // Fixed assignment only exists with at least as many bands as users.
        let fixed = if mp >= ms {
            Some(best_fixed_envelope(&p, &query).map_err(|e| CliError::Numerical(e.to_string()))?)
        } else {
            None
        };

        let fixed_rate = fixed.as_ref().and_then(|f| f.feasible.then_some(f.lambda_max));
        let shat_rate = shat.feasible.then_some(shat.lambda_max);
        let exclusive_rate = exclusive.feasible.then(|| exclusive.rates[target]);

        if let (Some(f), Some(s)) = (fixed_rate, shat_rate) {
            if f > s + ORDERING_TOL {
                return Err(CliError::Numerical(format!(
                    "query {}: fixed assignment {f} above random selection {s}",
                    i + 1
                )));
            }
        }
        if let (Some(s), Some(e)) = (shat_rate, exclusive_rate) {
            if s > e + ORDERING_TOL {
                return Err(CliError::Numerical(format!(
                    "query {}: random selection {s} above the exclusive system {e}",
                    i + 1
                )));
            }
        }

        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},s{},{},{},{},{}\n",
            i + 1,
            target + 1,
            fixed_desc.join(";"),
            cell(fixed_rate),
            cell(shat_rate),
            cell(exclusive_rate)
        ));
    }

    std::fs::write(&args.out, csv)
        .map_err(|e| CliError::io(e, format!("writing {}", args.out.display())))?;
    RunManifest::new(&args.config, vec![])?.write_sibling(&args.out)?;
    println!("wrote {} comparison rows to {} (ordering verified)", specs.len(), args.out.display());
    Ok(())
}
