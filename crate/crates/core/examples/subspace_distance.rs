//! Principal angle distance between a learned representation and the truth.
//!
//! `dist(B, B*)` only depends on `col(B)`, so rescaling or mixing the columns
//! of `B` leaves it unchanged.

use metarep::metrics::{orth_complement, principal_angle_dist, qr_orthonormalize};
use metarep::prelude::*;

fn main() -> metarep::Result<()> {
    let mut rng = NormalStream::from_seed(1);
    let (b_star, _) = qr_orthonormalize(&rng.normal_matrix(20, 3))?;
    let perp = orth_complement(&b_star)?;

    let random = rng.normal_matrix(20, 3);
    println!(
        "random B:            {:.6}",
        principal_angle_dist(&random, &perp)?
    );

    let mixed = &b_star * rng.normal_matrix(3, 3) * 7.0;
    println!(
        "B* times a 3x3 mix:  {:.3e}",
        principal_angle_dist(&mixed, &perp)?
    );

    for eps in [1.0, 1e-2, 1e-4, 1e-6] {
        let b = &b_star + rng.normal_matrix(20, 3) * eps;
        let d = principal_angle_dist(&b, &perp)?;
        let q = b.clone().qr().q();
        let cos_min = (b_star.transpose() * q).singular_values().min();
        println!(
            "noise {eps:>6.0e}: dist {d:.3e}, dist^2 + cos^2 = {:.15}",
            d * d + cos_min * cos_min
        );
    }
    Ok(())
}
