//! Numerical maximization of equilibrium biomass or yield over the budget
//! simplex `{h >= 0, sum h = H}`.
//!
//! Three methods with a common result type:
//!
//! - [`sweep_theta`] — exhaustive split sweep for the two-patch stream,
//!   with golden-section refinement around the best grid point;
//! - [`simplex_grid_search`] — brute-force lattice enumeration, the oracle
//!   against which everything else is checked;
//! - [`projected_gradient`] — multi-start ascent with finite-difference
//!   gradients and Euclidean projection back onto the simplex.
//!
//! Allocations that drive the population extinct score zero for both
//! objectives. All methods are deterministic for a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::equilibrium::{newton_refine, origin_spectral_bound, solve_equilibrium};
use crate::error::{Error, Result};
use crate::model::{HarvestAllocation, Model};
use crate::two_patch::TwoPatchScenario;
use crate::Objective;

pub const DEFAULT_SWEEP_RESOLUTION: f64 = 1e-3;
pub const DEFAULT_GRID_SUBDIVISIONS: usize = 100;
pub const DEFAULT_STARTS: usize = 8;
pub const DEFAULT_SEED: u64 = 42;

/// Width at which golden-section refinement of a sweep stops.
const REFINE_TOL: f64 = 1e-6;
/// Finite-difference step for projected-gradient ascent, relative to `H`.
const GRADIENT_STEP: f64 = 1e-5;
/// Termination threshold on the projected-gradient norm, relative to `H`.
const PG_TOL: f64 = 1e-8;
const PG_MAX_ITERS: usize = 500;
const ARMIJO_FACTOR: f64 = 0.5;
const ARMIJO_SLOPE: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;
const MAX_GRID_POINTS: u128 = 1_000_000;

/// A constrained maximization problem over the budget simplex.
#[derive(Debug, Clone)]
pub struct OptimizationProblem {
    pub model: Model,
    pub budget: f64,
    pub objective: Objective,
    pub method: Method,
}

/// Solution method; `Auto` dispatches on problem shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Auto,
    ThetaSweep,
    SimplexGrid,
    ProjectedGradient,
}

/// One sampled point of a split sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSample {
    pub theta: f64,
    pub value: f64,
    pub persistent: bool,
}

/// Outcome of an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub h_star: HarvestAllocation,
    pub value: f64,
    /// Number of equilibrium evaluations performed.
    pub evaluations: u64,
    /// Human-readable precision statement: grid resolution or
    /// projected-gradient norm at termination.
    pub certificate: String,
    /// The optimal split, for split-sweep results.
    pub theta_star: Option<f64>,
    /// Sampled objective values, for split-sweep results.
    pub landscape: Option<Vec<ThetaSample>>,
    /// Every sampled objective value was identical.
    pub flat_landscape: bool,
}

/// Objective evaluator with a warm-start cache for the Newton polish.
///
/// The positive equilibrium is unique whenever it exists, so a Newton solve
/// seeded from a neighbouring allocation lands on the same point as the
/// full integrate-then-polish pipeline; the latter remains the fallback.
pub(crate) struct Evaluator<'a> {
    model: &'a Model,
    objective: Objective,
    warm: Option<Vec<f64>>,
    pub evaluations: u64,
    pub lowest_seen: f64,
    pub highest_seen: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a Model, objective: Objective) -> Self {
        Evaluator {
            model,
            objective,
            warm: None,
            evaluations: 0,
            lowest_seen: f64::INFINITY,
            highest_seen: f64::NEG_INFINITY,
        }
    }

    fn objective_of(&self, u: &[f64], harvest: &[f64]) -> f64 {
        match self.objective {
            Objective::Biomass => u.iter().sum(),
            Objective::Yield => u.iter().zip(harvest).map(|(u, h)| u * h).sum(),
        }
    }

    fn flat(&self) -> bool {
        self.lowest_seen == self.highest_seen
    }

    /// Objective value at the attracting equilibrium; zero when extinct.
    pub fn value(&mut self, harvest: &[f64]) -> Result<f64> {
        self.evaluations += 1;
        let v = self.equilibrium_value(harvest)?;
        self.lowest_seen = self.lowest_seen.min(v);
        self.highest_seen = self.highest_seen.max(v);
        Ok(v)
    }

    fn equilibrium_value(&mut self, harvest: &[f64]) -> Result<f64> {
        if origin_spectral_bound(self.model, harvest)? <= 0.0 {
            return Ok(0.0);
        }
        if let Some(seed) = self.warm.take() {
            if let Ok((u, _)) = newton_refine(self.model, harvest, &seed) {
                if u.iter().all(|&x| x > 0.0) {
                    let v = self.objective_of(&u, harvest);
                    self.warm = Some(u);
                    return Ok(v);
                }
            }
        }
        let eq = solve_equilibrium(self.model, harvest)?;
        let v = self.objective_of(&eq.u, harvest);
        self.warm = Some(eq.u);
        Ok(v)
    }

    /// The cached equilibrium state from the latest persistent evaluation.
    pub fn cached_state(&self) -> Option<&[f64]> {
        self.warm.as_deref()
    }
}

/// Snap tiny rounding in an effort vector so it sums exactly to `budget`.
fn into_allocation(mut efforts: Vec<f64>, budget: f64) -> Result<HarvestAllocation> {
    let total: f64 = efforts.iter().sum();
    let defect = budget - total;
    if defect != 0.0 && defect.abs() <= 1e-9 * budget.abs().max(1.0) {
        let imax = efforts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("efforts are finite"))
            .map(|(i, _)| i)
            .expect("efforts are nonempty");
        efforts[imax] = (efforts[imax] + defect).max(0.0);
    }
    HarvestAllocation::new(efforts, budget)
}

fn check_resolution(resolution: f64) -> Result<()> {
    if !(resolution.is_finite() && (1e-4..=1e-1).contains(&resolution)) {
        return Err(Error::invalid(format!(
            "sweep resolution must lie in [1e-4, 1e-1], got {resolution}"
        )));
    }
    Ok(())
}

/// Evaluate biomass, yield and persistence on a uniform split grid.
/// Shared by [`sweep_theta`] and the CLI sweep output.
pub fn theta_profile(
    scenario: &TwoPatchScenario,
    resolution: f64,
) -> Result<Vec<(f64, f64, f64, bool)>> {
    check_resolution(resolution)?;
    let model = scenario.to_model();
    let steps = (1.0 / resolution).round().max(1.0) as usize;
    let mut eval = Evaluator::new(&model, Objective::Biomass);
    let mut points = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let theta = k as f64 / steps as f64;
        let alloc = scenario.allocation(theta)?;
        let persistent = scenario.origin_bound(theta)? > 0.0;
        let biomass = eval.value(alloc.efforts())?;
        let yield_value = if persistent {
            let u = eval.cached_state().expect("persistent eval caches the state");
            u.iter().zip(alloc.efforts()).map(|(u, h)| u * h).sum()
        } else {
            0.0
        };
        points.push((theta, biomass, yield_value, persistent));
    }
    Ok(points)
}

/// Maximize one objective over the split parameter for a two-patch
/// scenario: uniform grid at `resolution`, then golden-section refinement
/// to width `1e-6` around the best grid point. Extinct splits score zero.
///
/// The best grid point and the bracket endpoints stay in the candidate set
/// throughout refinement, so boundary optima are reported exactly.
pub fn sweep_theta(
    scenario: &TwoPatchScenario,
    objective: Objective,
    resolution: f64,
) -> Result<OptimizationResult> {
    check_resolution(resolution)?;
    let model = scenario.to_model();
    let steps = (1.0 / resolution).round().max(1.0) as usize;
    let mut eval = Evaluator::new(&model, objective);

    fn value_at(
        scenario: &TwoPatchScenario,
        eval: &mut Evaluator,
        theta: f64,
    ) -> Result<f64> {
        let alloc = scenario.allocation(theta)?;
        let v = eval.value(alloc.efforts())?;
        if !v.is_finite() {
            return Err(Error::numerical(format!(
                "objective is not finite at theta = {theta}"
            )));
        }
        Ok(v)
    }

    let mut landscape = Vec::with_capacity(steps + 1);
    let mut best = (0.0, f64::NEG_INFINITY);
    let mut best_index = 0;
    for k in 0..=steps {
        let theta = k as f64 / steps as f64;
        let v = value_at(scenario, &mut eval, theta)?;
        let persistent = scenario.origin_bound(theta)? > 0.0;
        landscape.push(ThetaSample {
            theta,
            value: v,
            persistent,
        });
        if v > best.1 {
            best = (theta, v);
            best_index = k;
        }
    }

    let bracket_lo = best_index.saturating_sub(1) as f64 / steps as f64;
    let bracket_hi = (best_index + 1).min(steps) as f64 / steps as f64;
    let golden: f64 = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (bracket_lo, bracket_hi);
    let mut x1 = b - golden * (b - a);
    let mut x2 = a + golden * (b - a);
    let mut f1 = value_at(scenario, &mut eval, x1)?;
    let mut f2 = value_at(scenario, &mut eval, x2)?;
    loop {
        if f1 > best.1 {
            best = (x1, f1);
        }
        if f2 > best.1 {
            best = (x2, f2);
        }
        if b - a <= REFINE_TOL {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + golden * (b - a);
            f2 = value_at(scenario, &mut eval, x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - golden * (b - a);
            f1 = value_at(scenario, &mut eval, x1)?;
        }
    }

    let (best_theta, best_value) = best;
    Ok(OptimizationResult {
        h_star: scenario.allocation(best_theta)?,
        value: best_value,
        evaluations: eval.evaluations,
        certificate: format!(
            "split grid at resolution {resolution}, refined to bracket width {REFINE_TOL:.0e}"
        ),
        theta_star: Some(best_theta),
        landscape: Some(landscape),
        flat_landscape: eval.flat(),
    })
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Advance a composition of a fixed total to its successor in decreasing
/// lexicographic order; starts from `(k, 0, ..., 0)` and ends at
/// `(0, ..., 0, k)`. Returns false after the last one.
fn next_composition(m: &mut [usize]) -> bool {
    let n = m.len();
    if n == 1 {
        return false;
    }
    let tail = m[n - 1];
    match (0..n - 1).rev().find(|&j| m[j] > 0) {
        None => false,
        Some(j) => {
            m[j] -= 1;
            m[j + 1] = tail + 1;
            if j + 1 != n - 1 {
                m[n - 1] = 0;
            }
            true
        }
    }
}

/// Exhaustive search over the lattice `h = H * m / k` with `sum m = k`.
///
/// Only strictly better values replace the incumbent and enumeration runs
/// in decreasing lexicographic order of `m`, so ties resolve
/// deterministically to the lexicographically greatest lattice point.
pub fn simplex_grid_search(
    p: &OptimizationProblem,
    subdivisions: usize,
) -> Result<OptimizationResult> {
    let n = p.model.n();
    if n > 5 {
        return Err(Error::invalid(format!(
            "simplex grid search supports up to 5 patches, got {n}"
        )));
    }
    if subdivisions == 0 {
        return Err(Error::invalid("subdivisions must be positive"));
    }
    let points = binomial((n + subdivisions - 1) as u128, (n - 1) as u128);
    if points > MAX_GRID_POINTS {
        return Err(Error::invalid(format!(
            "lattice would have {points} points (limit {MAX_GRID_POINTS}); \
             use the projected-gradient method instead"
        )));
    }

    let mut eval = Evaluator::new(&p.model, p.objective);
    let mut counts = vec![0usize; n];
    counts[0] = subdivisions;
    let mut h = vec![0.0; n];
    let mut best: Option<(Vec<f64>, f64)> = None;
    loop {
        for i in 0..n {
            h[i] = p.budget * counts[i] as f64 / subdivisions as f64;
        }
        let v = eval.value(&h)?;
        if best.as_ref().map_or(true, |(_, bv)| v > *bv) {
            best = Some((h.clone(), v));
        }
        if !next_composition(&mut counts) {
            break;
        }
    }
    let (h_best, value) = best.expect("lattice contains at least one point");
    Ok(OptimizationResult {
        h_star: into_allocation(h_best, p.budget)?,
        value,
        evaluations: eval.evaluations,
        certificate: format!(
            "exhaustive simplex lattice, {subdivisions} subdivisions ({points} points)"
        ),
        theta_star: None,
        landscape: None,
        flat_landscape: eval.flat(),
    })
}

/// Euclidean projection of `v` onto `{x >= 0, sum x = budget}`.
pub(crate) fn project_onto_simplex(v: &[f64], budget: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - budget) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

struct PgRun {
    h: Vec<f64>,
    value: f64,
    pg_norm: f64,
    improved: bool,
    line_search_failed: bool,
}

fn pg_ascent(eval: &mut Evaluator, start: &[f64], budget: f64) -> Result<PgRun> {
    let n = start.len();
    let eps = GRADIENT_STEP * budget;
    let mut h = start.to_vec();
    let mut value = eval.value(&h)?;
    let start_value = value;
    let mut grad = vec![0.0; n];
    let mut pg_norm = f64::INFINITY;
    let mut line_search_failed = false;

    for _ in 0..PG_MAX_ITERS {
        let mut probe = h.clone();
        for i in 0..n {
            probe[i] = h[i] + eps;
            let plus = eval.value(&probe)?;
            probe[i] = h[i] - eps;
            let minus = eval.value(&probe)?;
            probe[i] = h[i];
            grad[i] = (plus - minus) / (2.0 * eps);
        }
        let ascent: Vec<f64> = h.iter().zip(&grad).map(|(x, g)| x + g).collect();
        let projected = project_onto_simplex(&ascent, budget);
        pg_norm = h
            .iter()
            .zip(&projected)
            .map(|(x, p)| (p - x) * (p - x))
            .sum::<f64>()
            .sqrt();
        if pg_norm < PG_TOL * budget {
            line_search_failed = false;
            break;
        }

        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let mut alpha = budget / grad_norm.max(1e-300);
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial_raw: Vec<f64> = h
                .iter()
                .zip(&grad)
                .map(|(x, g)| x + alpha * g)
                .collect();
            let trial = project_onto_simplex(&trial_raw, budget);
            let direction_gain: f64 = grad
                .iter()
                .zip(trial.iter().zip(&h))
                .map(|(g, (t, x))| g * (t - x))
                .sum();
            let trial_value = eval.value(&trial)?;
            if trial_value > value && trial_value >= value + ARMIJO_SLOPE * direction_gain {
                h = trial;
                value = trial_value;
                accepted = true;
                break;
            }
            alpha *= ARMIJO_FACTOR;
        }
        if !accepted {
            line_search_failed = true;
            break;
        }
    }

    Ok(PgRun {
        h,
        value,
        pg_norm,
        improved: value > start_value,
        line_search_failed,
    })
}

/// Multi-start projected-gradient ascent with the default seed.
pub fn projected_gradient(p: &OptimizationProblem, starts: usize) -> Result<OptimizationResult> {
    projected_gradient_seeded(p, starts, DEFAULT_SEED)
}

/// Multi-start projected-gradient ascent: simplex vertices, the centroid,
/// then uniform Dirichlet draws from a seeded generator.
pub fn projected_gradient_seeded(
    p: &OptimizationProblem,
    starts: usize,
    seed: u64,
) -> Result<OptimizationResult> {
    let n = p.model.n();
    if n < 2 {
        return Err(Error::invalid(
            "projected gradient needs at least two patches",
        ));
    }
    if starts == 0 {
        return Err(Error::invalid("at least one start is required"));
    }
    let start_points = build_starts(n, p.budget, starts, seed);
    run_projected_gradient(p, &start_points)
}

fn build_starts(n: usize, budget: f64, starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut points = Vec::with_capacity(starts);
    for i in 0..n.min(starts) {
        let mut v = vec![0.0; n];
        v[i] = budget;
        points.push(v);
    }
    if points.len() < starts {
        points.push(vec![budget / n as f64; n]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while points.len() < starts {
        // uniform Dirichlet draw via normalized exponentials
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.gen::<f64>();
                -(u.max(f64::MIN_POSITIVE)).ln()
            })
            .collect();
        let total: f64 = draws.iter().sum();
        points.push(draws.iter().map(|&e| budget * e / total).collect());
    }
    points
}

fn run_projected_gradient(
    p: &OptimizationProblem,
    start_points: &[Vec<f64>],
) -> Result<OptimizationResult> {
    let mut eval = Evaluator::new(&p.model, p.objective);
    let mut best: Option<PgRun> = None;
    let mut any_improved = false;
    let mut all_failed_line_search = true;
    for start in start_points {
        let run = pg_ascent(&mut eval, start, p.budget)?;
        any_improved |= run.improved;
        all_failed_line_search &= run.line_search_failed;
        if best.as_ref().map_or(true, |b| run.value > b.value) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    let flat = eval.flat();
    if all_failed_line_search && !any_improved && !flat {
        return Err(Error::Numerical {
            message: format!(
                "every projected-gradient start stalled in line search \
                 (best value {:.6e}, projected-gradient norm {:.3e})",
                best.value, best.pg_norm
            ),
            best: Some(best.h),
        });
    }
    let certificate = if flat {
        "flat landscape: every sampled allocation scores the same".to_string()
    } else {
        format!(
            "projected-gradient norm {:.3e} at termination of the best run",
            best.pg_norm
        )
    };
    Ok(OptimizationResult {
        h_star: into_allocation(best.h, p.budget)?,
        value: best.value,
        evaluations: eval.evaluations,
        certificate,
        theta_star: None,
        landscape: None,
        flat_landscape: flat,
    })
}

/// Detect the biased two-patch stream shape and recover its parameters.
pub fn as_two_patch_scenario(model: &Model, budget: f64) -> Option<TwoPatchScenario> {
    if model.n() != 2 {
        return None;
    }
    let downstream_rate = model.rate_from_to(0, 1); // upstream -> downstream
    let upstream_rate = model.rate_from_to(1, 0); // downstream -> upstream
    let d = upstream_rate;
    let q = downstream_rate - upstream_rate;
    if !(d > 0.0 && q > 0.0) {
        return None;
    }
    TwoPatchScenario::new(
        [model.growth()[0], model.growth()[1]],
        [model.competition()[0], model.competition()[1]],
        d,
        q,
        budget,
    )
    .ok()
}

/// Solve an optimization problem with the default seed.
pub fn optimize(p: &OptimizationProblem) -> Result<OptimizationResult> {
    optimize_seeded(p, DEFAULT_SEED)
}

/// Solve an optimization problem.
///
/// `Auto` dispatch: a two-patch scenario with biased movement gets a split
/// sweep; up to four patches get the exhaustive lattice followed by a
/// projected-gradient polish from the lattice optimum; anything larger
/// gets multi-start projected gradient.
pub fn optimize_seeded(p: &OptimizationProblem, seed: u64) -> Result<OptimizationResult> {
    match p.method {
        Method::ThetaSweep => {
            let scenario = as_two_patch_scenario(&p.model, p.budget).ok_or_else(|| {
                Error::invalid("split sweep requires a two-patch model with biased movement")
            })?;
            sweep_theta(&scenario, p.objective, DEFAULT_SWEEP_RESOLUTION)
        }
        Method::SimplexGrid => simplex_grid_search(p, DEFAULT_GRID_SUBDIVISIONS),
        Method::ProjectedGradient => projected_gradient_seeded(p, DEFAULT_STARTS, seed),
        Method::Auto => {
            if let Some(scenario) = as_two_patch_scenario(&p.model, p.budget) {
                return sweep_theta(&scenario, p.objective, DEFAULT_SWEEP_RESOLUTION);
            }
            if p.model.n() <= 4 {
                let grid = simplex_grid_search(p, DEFAULT_GRID_SUBDIVISIONS)?;
                let polish = run_projected_gradient(p, &[grid.h_star.efforts().to_vec()])?;
                let (h_star, value) = if polish.value > grid.value {
                    (polish.h_star, polish.value)
                } else {
                    (grid.h_star, grid.value)
                };
                return Ok(OptimizationResult {
                    h_star,
                    value,
                    evaluations: grid.evaluations + polish.evaluations,
                    certificate: format!("{}; polish: {}", grid.certificate, polish.certificate),
                    theta_star: None,
                    landscape: None,
                    flat_landscape: grid.flat_landscape,
                });
            }
            projected_gradient_seeded(p, DEFAULT_STARTS, seed)
        }
    }
}
