//! The n-patch logistic metapopulation with directed movement.
//!
//! Patch `i` obeys
//!
//! ```text
//! u_i' = u_i (r_i - c_i u_i) - h_i u_i + sum_j (a_ij u_j - a_ji u_i)
//! ```
//!
//! where `a_ij` is the movement rate from patch `j` to patch `i`. The
//! movement matrix must be irreducible (its directed graph strongly
//! connected) so that every patch exchanges individuals with every other,
//! directly or indirectly.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative tolerance for the budget-sum invariant of [`HarvestAllocation`].
pub const BUDGET_TOL: f64 = 1e-12;

/// An n-patch model: growth rates, competition rates and movement matrix.
///
/// Movement is stored row-major with entry `(i, j)` the rate from patch `j`
/// to patch `i`; the diagonal is zero. Patches are indexed from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    n: usize,
    growth: Vec<f64>,
    competition: Vec<f64>,
    movement: Vec<f64>,
    /// Cached column sums: `outflow[i] = sum_j a_ji`, the total rate out of patch `i`.
    outflow: Vec<f64>,
}

impl Model {
    /// Build a model from per-patch growth rates, competition rates and a
    /// dense movement matrix given as rows (`movement[i][j]` = rate `j -> i`).
    pub fn new(growth: Vec<f64>, competition: Vec<f64>, movement: Vec<Vec<f64>>) -> Result<Self> {
        let n = growth.len();
        if n == 0 {
            return Err(Error::invalid("model must have at least one patch"));
        }
        if competition.len() != n {
            return Err(Error::invalid(format!(
                "competition has {} entries, expected {}",
                competition.len(),
                n
            )));
        }
        if movement.len() != n || movement.iter().any(|row| row.len() != n) {
            return Err(Error::invalid(format!("movement matrix must be {n}x{n}")));
        }
        for (i, &r) in growth.iter().enumerate() {
            if !r.is_finite() {
                return Err(Error::invalid(format!("growth rate of patch {i} is not finite")));
            }
        }
        for (i, &c) in competition.iter().enumerate() {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::invalid(format!(
                    "competition rate of patch {i} must be strictly positive, got {c}"
                )));
            }
        }
        let mut flat = vec![0.0; n * n];
        for (i, row) in movement.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                if i == j {
                    if a != 0.0 {
                        return Err(Error::invalid(format!(
                            "movement diagonal must be zero, entry ({i},{i}) is {a}"
                        )));
                    }
                } else if !(a.is_finite() && a >= 0.0) {
                    return Err(Error::invalid(format!(
                        "movement rate ({i},{j}) must be finite and nonnegative, got {a}"
                    )));
                }
                flat[i * n + j] = a;
            }
        }
        if n >= 2 && !strongly_connected(n, &flat) {
            return Err(Error::invalid(
                "movement matrix is not irreducible (its graph is not strongly connected)",
            ));
        }
        let mut outflow = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                outflow[j] += flat[i * n + j];
            }
        }
        Ok(Model {
            n,
            growth,
            competition,
            movement: flat,
            outflow,
        })
    }

    /// A linear chain of `n` patches: rate `d + q` from patch `i` to `i+1`
    /// (downstream) and `d` back upstream.
    pub fn straight_stream(
        n: usize,
        diffusion: f64,
        advection: f64,
        growth: Vec<f64>,
        competition: Vec<f64>,
    ) -> Result<Self> {
        if growth.len() != n {
            return Err(Error::invalid(format!(
                "growth has {} entries, expected {n}",
                growth.len()
            )));
        }
        let mut movement = vec![vec![0.0; n]; n];
        for i in 0..n.saturating_sub(1) {
            movement[i + 1][i] = diffusion + advection;
            movement[i][i + 1] = diffusion;
        }
        Model::new(growth, competition, movement)
    }

    /// The five-patch network with three head patches (0, 1, 2) feeding a
    /// junction patch (3) which drains into an outlet patch (4). Downstream
    /// edges carry rate `d + q`, upstream edges rate `d`.
    pub fn three_one_one(
        diffusion: f64,
        advection: f64,
        growth: Vec<f64>,
        competition: Vec<f64>,
    ) -> Result<Self> {
        let down = diffusion + advection;
        let mut movement = vec![vec![0.0; 5]; 5];
        for head in 0..3 {
            movement[3][head] = down;
            movement[head][3] = diffusion;
        }
        movement[4][3] = down;
        movement[3][4] = diffusion;
        Model::new(growth, competition, movement)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn growth(&self) -> &[f64] {
        &self.growth
    }

    pub fn competition(&self) -> &[f64] {
        &self.competition
    }

    /// Movement rate from patch `from` into patch `to`.
    pub fn rate_from_to(&self, from: usize, to: usize) -> f64 {
        self.movement[to * self.n + from]
    }

    /// Total movement rate out of patch `i` (`sum_j a_ji`).
    pub fn outflow(&self, i: usize) -> f64 {
        self.outflow[i]
    }

    /// Row-major movement matrix; entry `(i, j)` is the rate from `j` to `i`.
    pub fn movement_flat(&self) -> &[f64] {
        &self.movement
    }

    fn check_lengths(&self, harvest: &[f64], state: Option<&[f64]>) -> Result<()> {
        if harvest.len() != self.n {
            return Err(Error::invalid(format!(
                "harvest vector has {} entries, expected {}",
                harvest.len(),
                self.n
            )));
        }
        if let Some(u) = state {
            if u.len() != self.n {
                return Err(Error::invalid(format!(
                    "state vector has {} entries, expected {}",
                    u.len(),
                    self.n
                )));
            }
        }
        Ok(())
    }

    /// Right-hand side of the dynamics at state `u` under harvest `h`.
    pub fn rhs(&self, harvest: &[f64], state: &[f64]) -> Result<Vec<f64>> {
        self.check_lengths(harvest, Some(state))?;
        let mut out = vec![0.0; self.n];
        self.rhs_into(harvest, state, &mut out);
        Ok(out)
    }

    pub(crate) fn rhs_into(&self, harvest: &[f64], state: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let u = state[i];
            let mut inflow = 0.0;
            let row = &self.movement[i * n..(i + 1) * n];
            for j in 0..n {
                inflow += row[j] * state[j];
            }
            // row[i] is zero, so `inflow` carries no self term.
            out[i] = u * (self.growth[i] - self.competition[i] * u - harvest[i] - self.outflow[i])
                + inflow;
        }
    }

    /// Jacobian of [`Model::rhs`] at `u`: diagonal
    /// `r_i - h_i - 2 c_i u_i - sum_j a_ji`, off-diagonal `a_ij`.
    /// At `u = 0` this is the Metzler matrix governing persistence.
    pub fn jacobian(&self, harvest: &[f64], state: &[f64]) -> Result<DMatrix<f64>> {
        self.check_lengths(harvest, Some(state))?;
        Ok(self.jacobian_unchecked(harvest, state))
    }

    pub(crate) fn jacobian_unchecked(&self, harvest: &[f64], state: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.movement[i * n + j];
            }
            m[(i, i)] = self.growth[i]
                - harvest[i]
                - 2.0 * self.competition[i] * state[i]
                - self.outflow[i];
        }
        m
    }

    pub(crate) fn validate_harvest(&self, harvest: &[f64]) -> Result<()> {
        self.check_lengths(harvest, None)
    }
}

/// Strong connectivity of the directed graph with an edge `j -> i`
/// whenever `a[i][j] > 0`, via one forward and one reverse traversal.
fn strongly_connected(n: usize, flat: &[f64]) -> bool {
    let reaches_all = |transpose: bool| -> bool {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for w in 0..n {
                let a = if transpose {
                    flat[v * n + w] // edge w -> v exists, follow it backwards
                } else {
                    flat[w * n + v] // edge v -> w
                };
                if a > 0.0 && !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    };
    reaches_all(false) && reaches_all(true)
}

/// A per-patch harvesting effort vector tied to a total budget.
///
/// The standard constructor enforces `h_i >= 0` and that the efforts sum to
/// the budget; [`HarvestAllocation::signed`] drops the sign constraint and is
/// meant for the unconstrained maximum-sustainable-yield solution, where
/// negative entries represent stocking.
#[derive(Debug, Clone, PartialEq)]
pub struct HarvestAllocation {
    efforts: Vec<f64>,
    budget: f64,
}

impl HarvestAllocation {
    pub fn new(efforts: Vec<f64>, budget: f64) -> Result<Self> {
        for (i, &h) in efforts.iter().enumerate() {
            if !(h.is_finite() && h >= 0.0) {
                return Err(Error::invalid(format!(
                    "effort of patch {i} must be finite and nonnegative, got {h}"
                )));
            }
        }
        let total: f64 = efforts.iter().sum();
        if (total - budget).abs() > BUDGET_TOL * budget.abs().max(1.0) {
            return Err(Error::invalid(format!(
                "efforts sum to {total}, which differs from the budget {budget}"
            )));
        }
        Ok(HarvestAllocation { efforts, budget })
    }

    /// Allocation that may contain negative entries (stocking); the budget is
    /// taken to be the signed sum.
    pub fn signed(efforts: Vec<f64>) -> Result<Self> {
        for (i, &h) in efforts.iter().enumerate() {
            if !h.is_finite() {
                return Err(Error::invalid(format!("effort of patch {i} is not finite")));
            }
        }
        let budget = efforts.iter().sum();
        Ok(HarvestAllocation { efforts, budget })
    }

    /// The whole budget on a single patch.
    pub fn concentrated(n: usize, patch: usize, budget: f64) -> Result<Self> {
        if patch >= n {
            return Err(Error::invalid(format!("patch {patch} out of range for n={n}")));
        }
        let mut efforts = vec![0.0; n];
        efforts[patch] = budget;
        HarvestAllocation::new(efforts, budget)
    }

    pub fn efforts(&self) -> &[f64] {
        &self.efforts
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Patches with strictly negative effort (stocking).
    pub fn stocking_patches(&self) -> Vec<usize> {
        self.efforts
            .iter()
            .enumerate()
            .filter(|(_, &h)| h < 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}
