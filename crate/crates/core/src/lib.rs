//! Shortcut edges between a red and a blue node group that shrink red-to-blue
//! random-walk hitting times.
//!
//! The average objective `g(F)` is the mean over red nodes of the expected
//! number of steps to reach any blue node in `G + F`; the max objective
//! `f(F)` is the largest such value. Shortcuts always join a red node to a
//! blue node, so a set is described by its red endpoints ([`ShortcutSet`]).

pub mod error;
pub mod estimator;
pub mod exact;
pub mod generators;
pub mod graph;
pub mod kcenter;
pub mod optimizers;
pub mod par;
pub mod rng;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
pub use estimator::{estimate_g, EstimatorConfig, EstimatorMode};
pub use exact::{evaluate, hitting_to_blue, ExactSolver, HittingProfile, Objective};
pub use generators::GeneratorSpec;
pub use graph::{augmented_view, load_instance, BipartiteInstance, Color, ShortcutSet};
pub use kcenter::{asymm, build_quasi_metric, QuasiMetric};
pub use optimizers::{brute_force_opt, greedy_exact, greedy_plus, pure_random, top_hitting_baseline};
