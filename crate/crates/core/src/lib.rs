//! Equilibria, persistence thresholds and optimal harvesting allocations
//! for logistic metapopulations on stream networks with biased movement.
//!
//! The crate is organized around five pieces:
//!
//! - [`model`] — the n-patch dynamical system, its Jacobian, time
//!   integration and the equilibrium/persistence machinery;
//! - [`two_patch`] — closed-form thresholds, objective derivatives and
//!   regime classification for the two-patch stream;
//! - [`asymptotics`] — effective net flow and large-growth allocation
//!   rules for general networks;
//! - [`optimizer`] — numerical maximization of equilibrium biomass or
//!   yield over the budget simplex (theta sweep, simplex grid,
//!   projected gradient);
//! - [`spectral`] — spectral bound of Metzler matrices.

pub mod asymptotics;
pub mod equilibrium;
pub mod error;
pub mod model;
pub mod ode;
pub mod optimizer;
pub mod spectral;
pub mod two_patch;

pub use equilibrium::{
    msy_unconstrained, origin_spectral_bound, solve_equilibrium, EquilibriumResult, MsySolution,
};
pub use error::{Error, Result};
pub use model::{HarvestAllocation, Model};
pub use ode::{integrate, Trajectory};
pub use spectral::spectral_bound;

/// Which equilibrium functional an optimization targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    /// Total standing biomass `sum_i u_i`.
    Biomass,
    /// Sustainable harvest `sum_i h_i u_i`.
    Yield,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Objective::Biomass => write!(f, "biomass"),
            Objective::Yield => write!(f, "yield"),
        }
    }
}
