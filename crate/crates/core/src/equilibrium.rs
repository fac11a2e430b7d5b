//! Equilibria of the harvested metapopulation.
//!
//! Persistence is decided by the exact spectral bound of the Jacobian at
//! the zero state. When positive, the unique positive equilibrium is
//! located by a hybrid scheme: time integration carries the state into the
//! basin, then damped Newton iteration polishes it to tolerance.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{HarvestAllocation, Model};
use crate::ode::integrate;
use crate::spectral::spectral_bound_metzler;

/// Newton convergence: residual max-norm below `NEWTON_TOL * (1 + max_i u_i)`.
pub const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 200;
const NEWTON_STAGNATION_LIMIT: usize = 50;
const NEWTON_MAX_HALVINGS: usize = 60;

/// Outcome of an equilibrium solve.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    /// Equilibrium densities; all zero when the population dies out.
    pub u: Vec<f64>,
    /// Max-norm of the equilibrium equations at `u`.
    pub residual: f64,
    /// Whether a positive equilibrium exists (spectral bound at the origin positive).
    pub persistent: bool,
    /// Spectral bound of the Jacobian at the zero state.
    pub s_origin: f64,
    /// Spectral bound of the Jacobian at `u`.
    pub s_equilibrium: f64,
}

impl EquilibriumResult {
    /// Total standing biomass `sum_i u_i`; zero when not persistent.
    pub fn total_biomass(&self) -> f64 {
        if self.persistent {
            self.u.iter().sum()
        } else {
            0.0
        }
    }

    /// Sustainable yield `sum_i h_i u_i`; zero when not persistent.
    pub fn total_yield(&self, harvest: &[f64]) -> f64 {
        if self.persistent {
            self.u.iter().zip(harvest).map(|(u, h)| u * h).sum()
        } else {
            0.0
        }
    }
}

fn residual_norm(f: &[f64]) -> f64 {
    f.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// Damped Newton iteration on the equilibrium equations starting from `u0`.
/// Returns the iterate and its residual max-norm.
pub(crate) fn newton_refine(model: &Model, harvest: &[f64], u0: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = model.n();
    let mut u = u0.to_vec();
    let mut f = vec![0.0; n];
    model.rhs_into(harvest, &u, &mut f);
    let mut res = residual_norm(&f);

    let mut best_u = u.clone();
    let mut best_res = res;
    let mut since_improvement = 0usize;

    for _ in 0..NEWTON_MAX_ITERS {
        let scale = u.iter().fold(0.0f64, |a, &x| a.max(x));
        if res < NEWTON_TOL * (1.0 + scale) {
            return Ok((u, res));
        }

        let jac = model.jacobian_unchecked(harvest, &u);
        let rhs_vec = DVector::from_iterator(n, f.iter().map(|&x| -x));
        let step = jac.lu().solve(&rhs_vec).ok_or_else(|| Error::Numerical {
            message: "singular Jacobian in Newton iteration".into(),
            best: Some(best_u.clone()),
        })?;

        // halve the step until the residual decreases
        let mut accepted = false;
        let mut lambda = 1.0;
        let mut trial = vec![0.0; n];
        for _ in 0..=NEWTON_MAX_HALVINGS {
            for i in 0..n {
                trial[i] = u[i] + lambda * step[i];
            }
            model.rhs_into(harvest, &trial, &mut f);
            let trial_res = residual_norm(&f);
            if trial_res.is_finite() && trial_res < res {
                u.copy_from_slice(&trial);
                res = trial_res;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }

        if res < best_res {
            best_res = res;
            best_u.copy_from_slice(&u);
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        // a fully failed damping pass would repeat itself verbatim
        if !accepted || since_improvement >= NEWTON_STAGNATION_LIMIT {
            return Err(Error::Numerical {
                message: format!(
                    "Newton iteration stagnated with residual {best_res:.3e}"
                ),
                best: Some(best_u),
            });
        }
        model.rhs_into(harvest, &u, &mut f);
    }
    Err(Error::Numerical {
        message: format!("Newton iteration did not converge, residual {best_res:.3e}"),
        best: Some(best_u),
    })
}

/// Spectral bound of the Jacobian at the zero state for the given harvest.
pub fn origin_spectral_bound(model: &Model, harvest: &[f64]) -> Result<f64> {
    model.validate_harvest(harvest)?;
    let zero = vec![0.0; model.n()];
    spectral_bound_metzler(&model.jacobian_unchecked(harvest, &zero))
}

/// Solve for the globally attracting equilibrium under the given harvest.
///
/// Returns the zero state with `persistent = false` when the spectral bound
/// at the origin is nonpositive; otherwise integrates from a carrying-
/// capacity-sized state into the basin and polishes with damped Newton.
pub fn solve_equilibrium(model: &Model, harvest: &[f64]) -> Result<EquilibriumResult> {
    model.validate_harvest(harvest)?;
    let n = model.n();
    let s_origin = origin_spectral_bound(model, harvest)?;
    if s_origin <= 0.0 {
        return Ok(EquilibriumResult {
            u: vec![0.0; n],
            residual: 0.0,
            persistent: false,
            s_origin,
            s_equilibrium: s_origin,
        });
    }

    let u0: Vec<f64> = model
        .growth()
        .iter()
        .zip(model.competition())
        .map(|(&r, &c)| r.max(1.0) / c)
        .collect();
    let t_end = (50.0 / s_origin).min(1e4);
    let dt_hint = 1e-2 / s_origin.max(1.0);
    let traj = integrate(model, harvest, &u0, t_end, dt_hint)?;

    let (u, residual) = newton_refine(model, harvest, traj.final_state())?;
    if u.iter().any(|&x| x <= 0.0) {
        return Err(Error::Numerical {
            message: "Newton converged to a non-positive state for a persistent model".into(),
            best: Some(u),
        });
    }
    let s_equilibrium = spectral_bound_metzler(&model.jacobian_unchecked(harvest, &u))?;
    Ok(EquilibriumResult {
        u,
        residual,
        persistent: true,
        s_origin,
        s_equilibrium,
    })
}

/// The unconstrained maximum-sustainable-yield solution.
#[derive(Debug, Clone, PartialEq)]
pub struct MsySolution {
    /// Signed harvesting rates; negative entries are stocking.
    pub harvest: HarvestAllocation,
    /// The target equilibrium `r_i / (2 c_i)`.
    pub equilibrium: Vec<f64>,
    /// The metapopulation maximum sustainable yield `sum_i r_i^2 / (4 c_i)`.
    pub msy: f64,
}

impl MsySolution {
    /// Whether any patch is stocked rather than harvested.
    pub fn requires_stocking(&self) -> bool {
        !self.harvest.stocking_patches().is_empty()
    }
}

/// Harvesting rates maximizing total yield with no sign or budget
/// constraint. Requires every growth rate to be positive.
///
/// The rates hold the equilibrium at `u_i = r_i / (2 c_i)`:
/// `h_i = r_i / 2 + sum_j (a_ij u_j / u_i - a_ji)`.
pub fn msy_unconstrained(model: &Model) -> Result<MsySolution> {
    let n = model.n();
    if let Some((i, &r)) = model
        .growth()
        .iter()
        .enumerate()
        .find(|(_, &r)| r <= 0.0)
    {
        return Err(Error::domain(format!(
            "unconstrained MSY needs positive growth everywhere; patch {i} has r = {r}"
        )));
    }
    let target: Vec<f64> = model
        .growth()
        .iter()
        .zip(model.competition())
        .map(|(&r, &c)| r / (2.0 * c))
        .collect();
    let mut rates = vec![0.0; n];
    for i in 0..n {
        let mut net = 0.0;
        for j in 0..n {
            net += model.rate_from_to(j, i) * target[j] / target[i] - model.rate_from_to(i, j);
        }
        rates[i] = model.growth()[i] / 2.0 + net;
    }
    let residual = residual_norm(&model.rhs(&rates, &target)?);
    let scale = model
        .growth()
        .iter()
        .zip(model.competition())
        .map(|(&r, &c)| r * r / c)
        .fold(1.0f64, f64::max);
    if residual > 1e-10 * scale {
        return Err(Error::numerical(format!(
            "MSY rates do not hold the target equilibrium (residual {residual:.3e})"
        )));
    }
    let msy = model
        .growth()
        .iter()
        .zip(model.competition())
        .map(|(&r, &c)| r * r / (4.0 * c))
        .sum();
    Ok(MsySolution {
        harvest: HarvestAllocation::signed(rates)?,
        equilibrium: target,
        msy,
    })
}
