//! All five algorithms on isotropic zero-mean heads: the four meta-learning
//! rules recover `col(B*)`, plain average risk minimization does not.
//!
//! `cargo run --release --example compare_algorithms [iters]`

use metarep::prelude::*;

fn main() -> metarep::Result<()> {
    let iters: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3000);
    let algos = [
        Algo::FoAnil,
        Algo::ExactAnil,
        Algo::FoMaml,
        Algo::ExactMaml,
        Algo::AvgRiskMin,
    ];

    println!(
        "{:>8} {}",
        "t",
        algos.map(|a| format!("{:>13}", a.name())).join("")
    );
    let mut columns = Vec::new();
    for algo in algos {
        // Same environment, start and task stream for every algorithm.
        let mut rng = NormalStream::from_seed(11);
        let env = sample_environment(20, 3, DVector::zeros(3), 1.0, 0.0, &mut rng)?;
        let hp = HyperParams::population(algo, 0.1, 0.1, 3, iters);
        let init = init_model(&env, hp.alpha, InitScheme::Spec, &mut rng)?;
        let run = run_trajectory(&env, &hp, init, &mut rng, iters / 10)?;
        columns.push(run.trajectory);
    }
    for row in 0..columns[0].len() {
        let t = columns[0][row].iter;
        let cells: String = columns
            .iter()
            .map(|c| {
                c.get(row)
                    .map_or(format!("{:>13}", "-"), |r| format!("{:>13.3e}", r.dist))
            })
            .collect();
        println!("{t:>8} {cells}");
    }
    Ok(())
}
