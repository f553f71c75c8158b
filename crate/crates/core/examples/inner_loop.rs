//! One inner-loop step: head-only adaptation (ANIL) and full adaptation
//! (MAML), in closed form and from a finite dataset.

use metarep::algorithms::{
    adapt_full_finite, adapt_full_population, adapt_head_finite, adapt_head_population,
};
use metarep::env::sample_dataset;
use metarep::prelude::*;

fn main() -> metarep::Result<()> {
    let mut rng = NormalStream::from_seed(2);
    let env = sample_environment(10, 2, DVector::zeros(2), 1.0, 0.0, &mut rng)?;
    let alpha = 0.1;
    let params = init_model(&env, alpha, InitScheme::Spec, &mut rng)?;
    let head_true = DVector::from_vec(vec![1.0, -0.5]);

    let w_pop = adapt_head_population(&params, &env, &head_true, alpha);
    println!("population head step:     {:?}", w_pop.as_slice());

    for m in [10, 100, 10_000] {
        let data = sample_dataset(&env, &head_true, m, &mut rng)?;
        let w = adapt_head_finite(&params, &data, alpha);
        println!(
            "finite head step, m={m:>5}: {:?}  (gap {:.2e})",
            w.as_slice(),
            (&w - &w_pop).norm()
        );
    }

    // With w = 0 the representation only moves once the head is non-zero.
    let moved = ModelParams::new(params.rep.clone(), DVector::from_vec(vec![0.3, 0.2]))?;
    let full = adapt_full_population(&moved, &env, &head_true, alpha);
    let rep = full.rep_adapted.expect("MAML adapts the representation");
    println!(
        "population full step moves B by {:.4}",
        (&rep - &moved.rep).norm()
    );
    let data = sample_dataset(&env, &head_true, 500, &mut rng)?;
    let full = adapt_full_finite(&moved, &data, alpha);
    let rep_fs = full.rep_adapted.expect("MAML adapts the representation");
    println!(
        "finite full step (m=500) moves B by {:.4}",
        (&rep_fs - &moved.rep).norm()
    );
    Ok(())
}
