//! `decompose`: solve for assignment marginals at a rate point and write
//! the operational permutation schedule.

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::util::parse_rate_list;
use crate::DecomposeArgs;
use bandalloc::birkhoff::{decompose, pad_to_doubly_stochastic, reconstruct};
use bandalloc::stability::max_slack_assignment;

pub fn run(args: &DecomposeArgs) -> Result<(), CliError> {
    let resolved = crate::config::load(&args.config)?;
    let p = resolved
        .model
        .success_matrix()
        .map_err(|e| CliError::Config(vec![e.to_string()]))?;

    // Rates default to the configured arrivals; --rates overrides per user.
    let mut rates: Vec<f64> =
        (0..p.num_sus()).map(|k| resolved.model.secondary_arrival_rate(k)).collect();
    for (su, rate) in parse_rate_list(&args.rates, p.num_sus())? {
        rates[su] = rate;
    }

    let Some((omega, slack)) = max_slack_assignment(&p, &rates)
        .map_err(|e| CliError::Numerical(e.to_string()))?
    else {
        return Err(CliError::Infeasible(format!(
            "rate point {rates:?} is outside the stable-throughput region"
        )));
    };

    let padded = pad_to_doubly_stochastic(&omega)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let schedule = decompose(&padded).map_err(|e| CliError::Numerical(e.to_string()))?;
    let back = reconstruct(&schedule);
    let n = padded.size();
    let reconstruction_error = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (back.get(i, j) - padded.get(i, j)).abs())
        .fold(0.0f64, f64::max);

    let mut doc = serde_json::to_value(&schedule)
        .map_err(|e| CliError::Numerical(format!("serializing schedule: {e}")))?;
    let obj = doc.as_object_mut().expect("schedule serializes to an object");
    obj.insert("rates".into(), serde_json::json!(rates));
    obj.insert("margin".into(), serde_json::json!(slack));
    obj.insert("reconstruction_error".into(), serde_json::json!(reconstruction_error));
    obj.insert(
        "manifest".into(),
        serde_json::to_value(RunManifest::new(&args.config, vec![])?)
            .map_err(|e| CliError::Numerical(format!("serializing manifest: {e}")))?,
    );

    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::Numerical(format!("serializing schedule: {e}")))?;
    std::fs::write(&args.out, text)
        .map_err(|e| CliError::io(e, format!("writing {}", args.out.display())))?;
    println!(
        "wrote {} schedule terms to {} (uniform margin {slack:.6}, reconstruction error {reconstruction_error:.3e})",
        schedule.num_terms(),
        args.out.display()
    );
    Ok(())
}
