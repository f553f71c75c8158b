//! Margins of the inductive hypotheses A1-A6 along a first-order ANIL run
//! from a start near the truth, next to the same run for average risk
//! minimization, where the adapted-head spectrum collapses at once.

use metarep::metrics::{check_hypotheses, Hypothesis};
use metarep::prelude::*;

fn report(algo: Algo) -> metarep::Result<()> {
    let mut rng = NormalStream::from_seed(21);
    let env = sample_environment(20, 3, DVector::zeros(3), 1.0, 0.0, &mut rng)?;
    let hp = HyperParams::population(algo, 0.1, 0.1, 3, 1000);
    let init = init_model(
        &env,
        hp.alpha,
        InitScheme::NearTruth { lo: 0.65, hi: 0.70 },
        &mut rng,
    )?;
    let dist0 = principal_angle_dist(&init.rep, env.complement())?;
    let run = run_trajectory(&env, &hp, init, &mut rng, 1)?;
    let stats = run.trajectory.last().unwrap().task_stats;
    let rep = check_hypotheses(&run.trajectory, &hp, &stats, dist0);

    println!("{}: dist0 {dist0:.3}, rho {:?}", algo.name(), rep.constants.rho);
    for h in Hypothesis::ALL {
        let first = rep
            .first_violation(h)
            .map_or("never".to_string(), |t| format!("t = {t}"));
        let min = rep.min_margin(h).map_or("-".to_string(), |m| format!("{m:.3e}"));
        println!("  {}: first violation {first:<9} min margin {min}", h.label());
    }
    println!("  final dist {:.3e}\n", run.trajectory.last().unwrap().dist);
    Ok(())
}

fn main() -> metarep::Result<()> {
    report(Algo::FoAnil)?;
    report(Algo::AvgRiskMin)
}
