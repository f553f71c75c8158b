//! Closed-form outer gradients against central finite differences of the
//! meta-objective, for every algorithm in both modes.

use std::path::Path;

use metarep::harness::{compare_at, gradcheck, parse_config};
use metarep::metrics::qr_orthonormalize;
use metarep::prelude::*;

fn main() -> metarep::Result<()> {
    for mode in ["POPULATION", "FINITE"] {
        for algo in ["FO_ANIL", "EXACT_ANIL", "FO_MAML", "EXACT_MAML", "AVG_RISK_MIN"] {
            let text = format!(
                r#"{{"env": {{"d": 6, "k": 2, "noise_std": 0.1}},
                    "hp": {{"algo": "{algo}", "mode": "{mode}", "alpha": 0.1, "beta": 0.1,
                            "n": 3, "m_in": 10, "m_out": 10, "iters": 1}}}}"#
            );
            let report = gradcheck(&parse_config(&text, Path::new("inline.json"))?)?;
            println!(
                "{algo:<13} {mode:<10} rep {:.1e}  head {:.1e}  {}",
                report.max_rel_err_rep,
                report.max_rel_err_head,
                if report.pass { "PASS" } else { "FAIL" }
            );
        }
    }

    // One point in detail.
    let mut rng = NormalStream::from_seed(3);
    let env = sample_environment(6, 2, DVector::zeros(2), 1.0, 0.0, &mut rng)?;
    let hp = HyperParams::population(Algo::ExactMaml, 0.2, 0.1, 2, 1);
    let rep = qr_orthonormalize(&rng.normal_matrix(6, 2))?.0 * 2.0;
    let params = ModelParams::new(rep, rng.normal_vector(2))?;
    let batch = sample_task_batch(&env, hp.n, &mut rng)?;
    let (analytic, numeric) = compare_at(&hp, &params, &env, &batch)?;
    println!("\nExact MAML head gradient at one point:");
    println!("  closed form {:?}", analytic.head.as_slice());
    println!("  numerical   {:?}", numeric.head.as_slice());
    Ok(())
}
