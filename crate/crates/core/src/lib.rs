//! Projected zeroth-order extremum-seeking dynamics.
//!
//! This crate simulates a family of continuous-time model-free feedback
//! optimizers that steer a black-box objective toward its constrained
//! optimum using only measured function values, while a projection map keeps
//! the decision state inside a hard feasible set at all times:
//!
//! * `pgzo` — projected gradient dynamics with a Lipschitz projection and a
//!   low-pass gradient-estimate filter driven by a sinusoidal dither;
//! * `ppdzo` — the primal-dual extension handling inequality constraints
//!   that must hold asymptotically;
//! * `dpgzo` — the discontinuous variant that projects the descent
//!   direction onto the tangent cone of the feasible set;
//! * `vanilla_es` — the classic scalar extremum-seeking loop, for
//!   reference.
//!
//! Model-based target flows (projected gradient flow, projected saddle
//! flow) and the vanishing-dither average dynamics are implemented
//! alongside, so every run can be verified against the dynamics it is
//! supposed to emulate. The [`verify`] module computes the corresponding
//! diagnostics: distances to optimizers, KKT residuals, gradient-extraction
//! quadratures, Lyapunov monitors, and tracking reports.
//!
//! Scenarios (problem, feasible set, gains, dither, exosystem, switching
//! policy, noise, integration grid) load from TOML files; see [`scenario`].

pub mod dither;
pub mod dynamics;
pub mod hybrid;
pub mod integrate;
pub mod linalg;
pub mod problems;
pub mod scenario;
pub mod sets;
pub mod sim;
pub mod verify;

pub use dither::DitherBank;
pub use dynamics::GainSet;
pub use problems::{Exosystem, NoiseSpec, Problem};
pub use scenario::{BuiltScenario, Scenario, ScenarioError};
pub use sets::FeasibleSet;
pub use sim::{cosimulate, run, Algorithm, RunSpec, SimConfig, SimError, Trajectory};
