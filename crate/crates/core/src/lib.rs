//! Numerical toolkit for the linear nonlocal dispersal equation
//! `∂ₜu = ∫_D κ(y−x) u(t,y) dy + a(t,x) u` with almost periodic `a`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod coefficients;
pub mod config;
pub mod discretize;
pub mod error;
pub mod evolve;
pub mod expr;
pub mod io;
pub mod kernels;
pub mod par;
pub mod spectral;
pub mod verify;

pub use coefficients::{APField, Mode, Profile, SampledField, ScalarPath, SpaceProfileKind};
pub use discretize::{DiscreteOperator, Domain, Grid};
pub use error::{Error, Result};
pub use kernels::Kernel;
pub use config::RunConfig;
pub use verify::{Scenario, TheoremId, TheoremReport, Verdict};
