//! Heads centered at `10 * 1`: little task diversity. ANIL learns from a
//! random start, MAML only from a start near the truth, and first-order MAML
//! not at all.

use metarep::prelude::*;

fn main() -> metarep::Result<()> {
    let algos = [Algo::FoAnil, Algo::ExactAnil, Algo::FoMaml, Algo::ExactMaml];
    let starts = [
        ("random", InitScheme::Spec),
        ("near truth", InitScheme::NearTruth { lo: 0.65, hi: 0.70 }),
    ];
    for (label, scheme) in starts {
        println!("{label} start");
        for algo in algos {
            let mut rng = NormalStream::from_seed(5);
            let env = sample_environment(20, 3, DVector::from_element(3, 10.0), 1.0, 0.0, &mut rng)?;
            let hp = HyperParams::population(algo, 0.05, 0.05, 3, 10_000);
            let init = init_model(&env, hp.alpha, scheme, &mut rng)?;
            let run = run_trajectory(&env, &hp, init, &mut rng, 100)?;
            let first = run.trajectory.first().unwrap();
            let last = run.trajectory.last().unwrap();
            let note = match run.diverged_at {
                Some(t) => format!("diverged at t = {t}, |w| = {:.1e}", run.final_params.head.norm()),
                None => String::new(),
            };
            println!(
                "  {:<11} dist {:.3} -> {:.3e} at t = {:<6} {note}",
                algo.name(),
                first.dist,
                last.dist,
                last.iter
            );
        }
    }
    Ok(())
}
