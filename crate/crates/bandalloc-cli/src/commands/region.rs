//! `region`: trace a 2-D slice of the stable-throughput envelope to CSV.

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::util::{parse_rate_list, parse_su};
use crate::RegionArgs;
use bandalloc::stability::{closed_form_2x2, envelope_sweep};

/// Agreement required between the LP boundary and the 2x2 closed form.
const CLOSED_FORM_TOL: f64 = 1e-8;

pub fn run(args: &RegionArgs) -> Result<(), CliError> {
    let resolved = crate::config::load(&args.config)?;
    let p = resolved
        .model
        .success_matrix()
        .map_err(|e| CliError::Config(vec![e.to_string()]))?;
    let num_sus = p.num_sus();

    let target = parse_su(&args.target, num_sus).map_err(|e| CliError::Config(vec![e]))?;
    let sweep_su = parse_su(&args.sweep, num_sus).map_err(|e| CliError::Config(vec![e]))?;
    let fixed = parse_rate_list(&args.fixed, num_sus)?;

    let sweep = envelope_sweep(&p, target, sweep_su, &fixed, args.grid)
        .map_err(|e| CliError::Config(vec![e.to_string()]))?;
    if !sweep[0].point.feasible {
        return Err(CliError::Infeasible(
            "the fixed rates are not supportable by any assignment".into(),
        ));
    }

    // On a 2x2 instance the closed form cross-checks the LP at every grid
    // point. The closed form fixes user 1 and maximizes user 2; when the
    // query is the other way around the columns are swapped to match.
    let two_by_two = p.num_bands() == 2 && num_sus == 2;
    let closed_form_matrix = two_by_two.then(|| {
        if target == 1 {
            p.clone()
        } else {
            bandalloc::model::SuccessMatrix::from_values(
                2,
                2,
                vec![p.get(0, 1), p.get(0, 0), p.get(1, 1), p.get(1, 0)],
            )
            .expect("column swap of a valid matrix")
        }
    });
    let mut csv = String::from("lambda_sweep,lambda_target_max,feasible,epsilon\n");
    for point in &sweep {
        let mut epsilon = String::new();
        if let Some(cf) = &closed_form_matrix {
            let closed = closed_form_2x2(cf, point.sweep_rate)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            if closed.feasible != point.point.feasible {
                return Err(CliError::Numerical(format!(
                    "closed form and LP disagree on feasibility at lambda = {}",
                    point.sweep_rate
                )));
            }
            if closed.feasible {
                let err = (closed.lambda_s2_max - point.point.rates[target]).abs();
                if err > CLOSED_FORM_TOL {
                    return Err(CliError::Numerical(format!(
                        "closed form deviates from LP by {err} at lambda = {}",
                        point.sweep_rate
                    )));
                }
                epsilon = format!("{}", closed.epsilon);
            }
        }
        if point.point.feasible {
            csv.push_str(&format!(
                "{},{},true,{epsilon}\n",
                point.sweep_rate, point.point.rates[target]
            ));
        } else {
            csv.push_str(&format!("{},,false,\n", point.sweep_rate));
        }
    }

    std::fs::write(&args.out, csv)
        .map_err(|e| CliError::io(e, format!("writing {}", args.out.display())))?;
    RunManifest::new(&args.config, vec![])?.write_sibling(&args.out)?;
    println!(
        "wrote {} envelope points to {}{}",
        sweep.len(),
        args.out.display(),
        if two_by_two { " (closed-form cross-check passed)" } else { "" }
    );
    Ok(())
}
