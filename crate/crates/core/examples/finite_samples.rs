//! Finite-sample training: each round draws fresh inner and outer datasets,
//! and the distance settles at a noise floor that shrinks with the outer
//! sample size.

use metarep::prelude::*;

fn main() -> metarep::Result<()> {
    for m_out in [25, 100, 400] {
        let mut rng = NormalStream::from_seed(4);
        let env = sample_environment(20, 3, DVector::zeros(3), 1.0, 0.1, &mut rng)?;
        let hp = HyperParams::finite(Algo::FoAnil, 0.1, 0.2, 10, 100, m_out, 500);
        let init = init_model(
            &env,
            hp.alpha,
            InitScheme::NearTruth { lo: 0.65, hi: 0.70 },
            &mut rng,
        )?;
        let run = run_trajectory(&env, &hp, init, &mut rng, 10)?;
        let tail: Vec<f64> = run
            .trajectory
            .iter()
            .filter(|r| r.iter >= 450)
            .map(|r| r.dist)
            .collect();
        let plateau = tail.iter().sum::<f64>() / tail.len() as f64;
        println!(
            "m_out {m_out:>4}: dist0 {:.3}, plateau {plateau:.3e}",
            run.trajectory[0].dist
        );
    }
    Ok(())
}
