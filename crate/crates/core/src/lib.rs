//! Gradient-based meta-learning on the multi-task linear representation model.
//!
//! Every task is a linear regression `y = <B* w*, x> + z` whose regressor lies
//! in a shared `k`-dimensional subspace `col(B*)` of `R^d`. A learner holds a
//! representation `B` (d x k) and a head `w` (k), and is trained with one of
//! five outer-loop rules:
//!
//! - FO-ANIL and Exact ANIL adapt only the head in the inner loop;
//! - FO-MAML and Exact MAML adapt head and representation;
//! - average risk minimization has no inner loop at all.
//!
//! Each algorithm runs in population mode (closed-form expectations under
//! `x ~ N(0, I_d)`) or finite-sample mode (fresh inner and outer datasets per
//! task). The [`metrics`] module measures how far `col(B)` is from `col(B*)`
//! and tracks the quantities that drive contraction; [`harness`] turns all of
//! this into seeded multi-trial experiments with CSV/JSON/SVG output.
//!
//! ```no_run
//! use metarep::prelude::*;
//!
//! let mut rng = NormalStream::from_seed(7);
//! let env = sample_environment(20, 3, DVector::zeros(3), 1.0, 0.0, &mut rng).unwrap();
//! let hp = HyperParams::population(Algo::FoAnil, 0.1, 0.1, 3, 2_000);
//! let init = init_model(&env, hp.alpha, InitScheme::Spec, &mut rng).unwrap();
//! let run = run_trajectory(&env, &hp, init, &mut rng, 100).unwrap();
//! println!("final dist {:.3e}", run.trajectory.last().unwrap().dist);
//! ```

pub mod algorithms;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod rng;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::algorithms::{
        outer_gradient, run_trajectory, run_trajectory_observed, step, OuterGradient, RunResult, StepOutcome,
    };
    pub use crate::env::{
        diversity_stats, sample_dataset, sample_environment, sample_task_batch, DataSet, DiversityStats,
        TaskBatch, TaskEnvironment,
    };
    pub use crate::metrics::{
        check_hypotheses, fit_log_linear_rate, principal_angle_dist, HypothesisReport, TrajectoryRecord,
    };
    pub use crate::model::{init_model, Algo, HyperParams, InitScheme, Mode, ModelParams};
    pub use crate::rng::{NormalStream, StreamTag};
    pub use nalgebra::{DMatrix, DVector};
}
