//! Closed-form machinery for the two-patch stream.
//!
//! Patch 0 is upstream, patch 1 downstream; movement is `d + q` downstream
//! and `d` upstream. A split parameter `theta` puts effort `theta * H`
//! upstream and the rest downstream. This module provides the critical
//! growth-rate thresholds, exact expressions for the derivatives of total
//! biomass and yield with respect to `theta`, and the resulting regime
//! classifications.

use crate::equilibrium::{origin_spectral_bound, solve_equilibrium, EquilibriumResult};
use crate::error::{Error, Result};
use crate::model::{HarvestAllocation, Model};
use crate::optimizer;
use crate::Objective;

/// Number of grid points used when persistence must hold for every split.
const PERSISTENCE_GRID: usize = 101;

/// Relative tolerance for treating two boundary biomasses as tied.
const BOUNDARY_TIE_TOL: f64 = 1e-10;

/// A two-patch stream scenario with a fixed harvesting budget.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPatchScenario {
    /// Intrinsic growth rates, upstream then downstream.
    pub growth: [f64; 2],
    /// Competition rates, upstream then downstream (strictly positive).
    pub competition: [f64; 2],
    /// Symmetric movement rate `d`.
    pub diffusion: f64,
    /// Extra downstream movement rate `q`.
    pub advection: f64,
    /// Total harvesting budget `H`.
    pub budget: f64,
}

impl TwoPatchScenario {
    pub fn new(
        growth: [f64; 2],
        competition: [f64; 2],
        diffusion: f64,
        advection: f64,
        budget: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("diffusion", diffusion),
            ("advection", advection),
            ("budget", budget),
            ("upstream competition", competition[0]),
            ("downstream competition", competition[1]),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        if growth.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("growth rates must be finite"));
        }
        Ok(TwoPatchScenario {
            growth,
            competition,
            diffusion,
            advection,
            budget,
        })
    }

    /// Same growth and competition rate in both patches, bitwise.
    pub fn homogeneous(&self) -> bool {
        self.growth[0] == self.growth[1] && self.competition[0] == self.competition[1]
    }

    pub fn to_model(&self) -> Model {
        Model::new(
            self.growth.to_vec(),
            self.competition.to_vec(),
            vec![
                vec![0.0, self.diffusion],
                vec![self.diffusion + self.advection, 0.0],
            ],
        )
        .expect("two-patch scenario parameters always form a valid model")
    }

    /// Effort vector for the split `theta`: `theta * H` upstream.
    pub fn allocation(&self, theta: f64) -> Result<HarvestAllocation> {
        let split = ThetaSplit::new(theta)?;
        Ok(split.allocation(self.budget))
    }

    /// Equilibrium under the split `theta`.
    pub fn equilibrium(&self, theta: f64) -> Result<EquilibriumResult> {
        let alloc = self.allocation(theta)?;
        solve_equilibrium(&self.to_model(), alloc.efforts())
    }

    /// Spectral bound at the zero state under the split `theta`.
    pub fn origin_bound(&self, theta: f64) -> Result<f64> {
        let alloc = self.allocation(theta)?;
        origin_spectral_bound(&self.to_model(), alloc.efforts())
    }

    /// Whether the population persists for every split on a uniform grid of
    /// [`PERSISTENCE_GRID`] points.
    pub fn persistent_for_all_theta(&self) -> Result<bool> {
        for k in 0..PERSISTENCE_GRID {
            let theta = k as f64 / (PERSISTENCE_GRID - 1) as f64;
            if self.origin_bound(theta)? <= 0.0 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Fraction of the budget applied to the upstream patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSplit {
    theta: f64,
}

impl ThetaSplit {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta.is_finite() && (0.0..=1.0).contains(&theta)) {
            return Err(Error::invalid(format!(
                "theta must lie in [0, 1], got {theta}"
            )));
        }
        Ok(ThetaSplit { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn allocation(&self, budget: f64) -> HarvestAllocation {
        HarvestAllocation::new(
            vec![self.theta * budget, (1.0 - self.theta) * budget],
            self.theta * budget + (1.0 - self.theta) * budget,
        )
        .expect("theta split is feasible by construction")
    }
}

/// The critical growth rates of a two-patch scenario.
///
/// With `s = sqrt(d)`, `S = sqrt(d + q)` and `D = S - s`:
///
/// - `persistence` — `H (d+q) / (2d+q)`; weighted growth above this
///   guarantees a positive equilibrium for every split.
/// - `upper` — `2d+q + H S / D`; weighted growth above it makes biomass
///   strictly decreasing in `theta` (harvest downstream).
/// - `lower` — `2d+q - H s / D`; weighted growth below it makes biomass
///   strictly increasing in `theta` (harvest upstream).
/// - `tie` — `2d+q + H/2`; for homogeneous patches the two boundary
///   biomasses coincide exactly at this growth rate.
/// - `weighted_growth` — `(r1 S - r2 s) / D`, the quantity compared against
///   `lower` and `upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSet {
    pub persistence: f64,
    pub lower: f64,
    pub upper: f64,
    pub tie: f64,
    pub weighted_growth: f64,
}

/// Compute the threshold set of a scenario.
pub fn thresholds(s: &TwoPatchScenario) -> ThresholdSet {
    let d = s.diffusion;
    let q = s.advection;
    let h = s.budget;
    let sd = d.sqrt();
    let sdq = (d + q).sqrt();
    let denom = sdq - sd;
    ThresholdSet {
        persistence: h * (d + q) / (2.0 * d + q),
        lower: 2.0 * d + q - h * sd / denom,
        upper: 2.0 * d + q + h * sdq / denom,
        tie: 2.0 * d + q + h / 2.0,
        weighted_growth: (s.growth[0] * sdq - s.growth[1] * sd) / denom,
    }
}

/// Shared pieces of the derivative formulas: the sensitivity matrix
/// determinant and the flow imbalance `(d+q) u1^2 - d u2^2`.
struct DerivativeParts {
    u1: f64,
    u2: f64,
    det: f64,
    imbalance: f64,
}

fn derivative_parts(s: &TwoPatchScenario, theta: f64) -> Result<DerivativeParts> {
    let eq = s.equilibrium(theta)?;
    if !eq.persistent {
        return Err(Error::domain(format!(
            "no positive equilibrium at theta = {theta}; derivative undefined"
        )));
    }
    let (u1, u2) = (eq.u[0], eq.u[1]);
    let d = s.diffusion;
    let dq = d + s.advection;
    let (c1, c2) = (s.competition[0], s.competition[1]);
    let det = (c1 * u1 * u1 + d * u2) * (c2 * u2 * u2 + dq * u1) - d * dq * u1 * u2;
    if det <= 0.0 {
        return Err(Error::numerical(format!(
            "sensitivity determinant is not positive ({det}) at theta = {theta}"
        )));
    }
    Ok(DerivativeParts {
        u1,
        u2,
        det,
        imbalance: dq * u1 * u1 - d * u2 * u2,
    })
}

/// Exact derivative of total equilibrium biomass with respect to `theta`.
pub fn biomass_derivative(s: &TwoPatchScenario, theta: f64) -> Result<f64> {
    let p = derivative_parts(s, theta)?;
    let h = s.budget;
    let (c1, c2) = (s.competition[0], s.competition[1]);
    let numerator =
        h * (p.u1 + p.u2) * p.imbalance + h * p.u1 * p.u1 * p.u2 * p.u2 * (c2 - c1);
    Ok(-numerator / p.det)
}

/// Exact derivative of equilibrium yield with respect to `theta`
/// (homogeneous patches only).
pub fn yield_derivative(s: &TwoPatchScenario, theta: f64) -> Result<f64> {
    if !s.homogeneous() {
        return Err(Error::unsupported(
            "yield derivative is only derived for identical patches; \
             use the numeric optimizer for heterogeneous scenarios",
        ));
    }
    let p = derivative_parts(s, theta)?;
    let h = s.budget;
    let q = s.advection;
    let c = s.competition[0];
    let u1u2sq = p.u1 * p.u1 * p.u2 * p.u2;
    let direct =
        (h * (1.0 - 2.0 * theta) - q) / c + h * (1.0 - 2.0 * theta) * c * u1u2sq / p.det;
    let transport = p.imbalance
        * (1.0 / (c * p.u1 * p.u2) + h * (theta * p.u1 + (1.0 - theta) * p.u2) / p.det);
    Ok(h * (direct - transport))
}

/// Where the optimal split sits for a given objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// All effort on the downstream patch (`theta = 0`).
    DownstreamOnly,
    /// All effort on the upstream patch (`theta = 1`).
    UpstreamOnly,
    /// The maximum sits at one of the two boundaries.
    BoundaryEither,
    /// Interior or not analytically determined.
    InteriorOrUnknown,
}

/// A one-sided bound on the optimal split certified by the sign analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaBound {
    LessThan(f64),
    GreaterThan(f64),
}

/// Classification outcome for one objective.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeVerdict {
    pub objective: Objective,
    pub regime: Regime,
    /// The optimal split when known; `None` for an exact boundary tie.
    pub theta_star: Option<f64>,
    /// Certified one-sided bound on the optimal split, when one exists.
    pub theta_bound: Option<ThetaBound>,
    /// Which argument produced the verdict.
    pub basis: String,
}

/// Classify the biomass-maximizing split. Requires equal competition rates
/// and persistence for every split.
pub fn classify_biomass(s: &TwoPatchScenario) -> Result<RegimeVerdict> {
    if s.competition[0] != s.competition[1] {
        return Err(Error::unsupported(
            "biomass classification requires equal competition rates; \
             use the numeric optimizer for heterogeneous competition",
        ));
    }
    if !s.persistent_for_all_theta()? {
        return Err(Error::domain(
            "scenario is not persistent for every split; classification undefined",
        ));
    }
    let th = thresholds(s);
    let w = th.weighted_growth;
    if w > th.upper {
        return Ok(RegimeVerdict {
            objective: Objective::Biomass,
            regime: Regime::DownstreamOnly,
            theta_star: Some(0.0),
            theta_bound: None,
            basis: "large growth: weighted growth above the upper threshold".into(),
        });
    }
    if w < th.lower {
        return Ok(RegimeVerdict {
            objective: Objective::Biomass,
            regime: Regime::UpstreamOnly,
            theta_star: Some(1.0),
            theta_bound: None,
            basis: "small growth: weighted growth below the lower threshold".into(),
        });
    }
    // intermediate band: the maximum sits at a boundary
    if s.growth[0] == s.growth[1] {
        let r = s.growth[0];
        let tie = th.tie;
        let (theta_star, basis) = if (r - tie).abs() <= 1e-12 * tie.abs().max(1.0) {
            (None, "exact tie: both boundaries maximize biomass")
        } else if r > tie {
            (Some(0.0), "intermediate growth above the tie rate")
        } else {
            (Some(1.0), "intermediate growth below the tie rate")
        };
        return Ok(RegimeVerdict {
            objective: Objective::Biomass,
            regime: Regime::BoundaryEither,
            theta_star,
            theta_bound: None,
            basis: basis.into(),
        });
    }
    let m0 = s.equilibrium(0.0)?.total_biomass();
    let m1 = s.equilibrium(1.0)?.total_biomass();
    let theta_star = if (m0 - m1).abs() < BOUNDARY_TIE_TOL * m0.abs().max(m1.abs()) {
        None
    } else if m0 > m1 {
        Some(0.0)
    } else {
        Some(1.0)
    };
    Ok(RegimeVerdict {
        objective: Objective::Biomass,
        regime: Regime::BoundaryEither,
        theta_star,
        theta_bound: None,
        basis: "boundary comparison of equilibrium biomass".into(),
    })
}

/// Both boundary biomasses at the tie growth rate. Errors unless the
/// scenario is homogeneous with growth equal to the tie threshold; verifies
/// that the two values agree to `1e-8` relative.
pub fn tie_biomass(s: &TwoPatchScenario) -> Result<(f64, f64)> {
    if !s.homogeneous() {
        return Err(Error::domain("tie comparison requires identical patches"));
    }
    let tie = thresholds(s).tie;
    let r = s.growth[0];
    if (r - tie).abs() > 1e-12 * tie.abs().max(1.0) {
        return Err(Error::domain(format!(
            "growth rate {r} does not equal the tie rate {tie}"
        )));
    }
    let m0 = s.equilibrium(0.0)?.total_biomass();
    let m1 = s.equilibrium(1.0)?.total_biomass();
    if (m0 - m1).abs() >= 1e-8 * m0 {
        return Err(Error::numerical(format!(
            "boundary biomasses {m0} and {m1} fail the tie identity"
        )));
    }
    Ok((m0, m1))
}

/// Classify the yield-maximizing split (homogeneous patches only).
///
/// Outside the certified downstream regime the verdict is
/// `InteriorOrUnknown` and `theta_star` is filled by a numeric sweep at
/// resolution `1e-3`; when the sign analysis yields a one-sided bound it is
/// reported in `theta_bound`.
pub fn classify_yield(s: &TwoPatchScenario) -> Result<RegimeVerdict> {
    if !s.homogeneous() {
        return Err(Error::unsupported(
            "yield classification is only derived for identical patches; \
             use the numeric optimizer for heterogeneous scenarios",
        ));
    }
    let th = thresholds(s);
    let r = s.growth[0];
    let q = s.advection;
    let h = s.budget;
    if r > th.upper && q >= 2.0 * h {
        return Ok(RegimeVerdict {
            objective: Objective::Yield,
            regime: Regime::DownstreamOnly,
            theta_star: Some(0.0),
            theta_bound: None,
            basis: "certified downstream: large growth with advection at least twice the budget"
                .into(),
        });
    }
    let theta_bound = if r > th.upper {
        Some(ThetaBound::LessThan(0.5))
    } else if r < th.lower {
        Some(ThetaBound::GreaterThan(0.5 - q / (2.0 * h)))
    } else {
        None
    };
    let sweep = optimizer::sweep_theta(s, Objective::Yield, 1e-3)?;
    Ok(RegimeVerdict {
        objective: Objective::Yield,
        regime: Regime::InteriorOrUnknown,
        theta_star: Some(
            sweep
                .theta_star
                .expect("theta sweep always reports a split"),
        ),
        theta_bound,
        basis: "numeric sweep".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn scenario(r: f64, d: f64, q: f64, h: f64) -> TwoPatchScenario {
        TwoPatchScenario::new([r, r], [1.0, 1.0], d, q, h).unwrap()
    }

    #[test]
    fn threshold_values_strong_advection() {
        let th = thresholds(&scenario(10.0, 1.0, 7.0, 4.0));
        assert_relative_eq!(th.persistence, 32.0 / 9.0, max_relative = 1e-14);
        assert_abs_diff_eq!(th.tie, 11.0, epsilon = 1e-14);
        assert_abs_diff_eq!(th.lower, 6.8123, epsilon = 1e-4);
        assert_abs_diff_eq!(th.upper, 15.1877, epsilon = 1e-4);
        // weighted growth reduces to r for identical growth rates
        assert_relative_eq!(th.weighted_growth, 10.0, max_relative = 1e-12);
    }

    #[test]
    fn threshold_values_moderate_advection() {
        let th = thresholds(&scenario(5.0, 1.0, 3.0, 4.0));
        assert_relative_eq!(th.persistence, 3.2, max_relative = 1e-14);
        assert_abs_diff_eq!(th.tie, 7.0, epsilon = 1e-14);
    }

    #[test]
    fn thresholds_collapse_as_budget_vanishes() {
        let th = thresholds(&scenario(5.0, 1.0, 7.0, 1e-300));
        assert_abs_diff_eq!(th.lower, 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(th.upper, 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(th.tie, 9.0, epsilon = 1e-12);
    }

    #[test]
    fn threshold_ordering() {
        for (d, q, h) in [(1.0, 7.0, 4.0), (0.5, 2.0, 1.0), (2.0, 0.1, 3.0)] {
            let th = thresholds(&scenario(1.0, d, q, h));
            assert!(th.lower < th.tie && th.tie < th.upper);
        }
    }

    #[test]
    fn biomass_derivative_sign_laws() {
        // r above the upper threshold: strictly decreasing biomass
        let s = scenario(17.0, 1.0, 7.0, 4.0);
        for theta in [0.0, 0.25, 0.5, 0.75, 1.0] {
            assert!(biomass_derivative(&s, theta).unwrap() < 0.0);
        }
        // r below the lower threshold: strictly increasing biomass
        let s = scenario(5.0, 1.0, 7.0, 4.0);
        for theta in [0.0, 0.25, 0.5, 0.75, 1.0] {
            assert!(biomass_derivative(&s, theta).unwrap() > 0.0);
        }
    }

    #[test]
    fn biomass_derivative_matches_finite_difference() {
        let s = scenario(9.0, 1.0, 7.0, 4.0);
        let eps = 1e-4;
        for theta in [0.2, 0.5, 0.8] {
            let analytic = biomass_derivative(&s, theta).unwrap();
            let plus = s.equilibrium(theta + eps).unwrap().total_biomass();
            let minus = s.equilibrium(theta - eps).unwrap().total_biomass();
            let fd = (plus - minus) / (2.0 * eps);
            assert_relative_eq!(analytic, fd, max_relative = 1e-4);
        }
    }

    #[test]
    fn yield_derivative_matches_finite_difference() {
        let s = scenario(9.0, 1.0, 7.0, 4.0);
        let eps = 1e-4;
        for theta in [0.2, 0.5, 0.8] {
            let analytic = yield_derivative(&s, theta).unwrap();
            let value = |t: f64| {
                let eq = s.equilibrium(t).unwrap();
                eq.total_yield(s.allocation(t).unwrap().efforts())
            };
            let fd = (value(theta + eps) - value(theta - eps)) / (2.0 * eps);
            assert_relative_eq!(analytic, fd, max_relative = 1e-4);
        }
    }

    #[test]
    fn yield_derivative_negative_under_strong_advection() {
        // q = 2H with large growth: decreasing everywhere
        let s = scenario(17.0, 1.0, 8.0, 4.0);
        for theta in [0.0, 0.5, 1.0] {
            assert!(yield_derivative(&s, theta).unwrap() < 0.0);
        }
        // q < 2H but still large growth: decreasing on the upper half
        let s = scenario(17.0, 1.0, 7.0, 4.0);
        for theta in [0.5, 0.9] {
            assert!(yield_derivative(&s, theta).unwrap() < 0.0);
        }
    }

    #[test]
    fn heterogeneous_yield_derivative_unsupported() {
        let s = TwoPatchScenario::new([5.0, 6.0], [1.0, 1.0], 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            yield_derivative(&s, 0.5),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn derivative_requires_persistence() {
        // below the persistence threshold at theta = 0 the population is extinct
        let s = scenario(1.0, 1.0, 3.0, 4.0);
        assert!(matches!(biomass_derivative(&s, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn classify_biomass_regimes() {
        let v = classify_biomass(&scenario(17.0, 1.0, 7.0, 4.0)).unwrap();
        assert_eq!(v.regime, Regime::DownstreamOnly);
        assert_eq!(v.theta_star, Some(0.0));

        let v = classify_biomass(&scenario(5.0, 1.0, 7.0, 4.0)).unwrap();
        assert_eq!(v.regime, Regime::UpstreamOnly);
        assert_eq!(v.theta_star, Some(1.0));

        // intermediate growth above the tie rate resolves to downstream
        let v = classify_biomass(&scenario(13.0, 1.0, 7.0, 4.0)).unwrap();
        assert_eq!(v.regime, Regime::BoundaryEither);
        assert_eq!(v.theta_star, Some(0.0));

        // and below the tie rate to upstream
        let v = classify_biomass(&scenario(9.0, 1.0, 7.0, 4.0)).unwrap();
        assert_eq!(v.regime, Regime::BoundaryEither);
        assert_eq!(v.theta_star, Some(1.0));
    }

    #[test]
    fn classify_biomass_rejects_heterogeneous_competition() {
        let s = TwoPatchScenario::new([9.0, 9.0], [1.0, 2.0], 1.0, 7.0, 4.0).unwrap();
        assert!(matches!(classify_biomass(&s), Err(Error::Unsupported(_))));
    }

    #[test]
    fn tie_identity_and_hand_solved_equilibria() {
        let s = scenario(11.0, 1.0, 7.0, 4.0);
        let (m0, m1) = tie_biomass(&s).unwrap();
        assert_abs_diff_eq!(m0, 15.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m1, 15.0, epsilon = 1e-8);

        // scaling competition by k scales biomass by 1/k
        let scaled = TwoPatchScenario::new([11.0, 11.0], [2.0, 2.0], 1.0, 7.0, 4.0).unwrap();
        let (m0s, _) = tie_biomass(&scaled).unwrap();
        assert_relative_eq!(m0s, m0 / 2.0, max_relative = 1e-8);

        let other = scenario(10.0, 2.0, 5.0, 2.0);
        let (a, b) = tie_biomass(&other).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-8);
    }

    #[test]
    fn tie_rejects_growth_off_the_tie_rate() {
        let s = scenario(10.0, 1.0, 7.0, 4.0);
        assert!(matches!(tie_biomass(&s), Err(Error::Domain(_))));
    }

    #[test]
    fn classify_yield_certified_downstream() {
        // q = 2H and r above the upper threshold (16 here)
        let v = classify_yield(&scenario(17.0, 1.0, 8.0, 4.0)).unwrap();
        assert_eq!(v.regime, Regime::DownstreamOnly);
        assert_eq!(v.theta_star, Some(0.0));
    }

    #[test]
    fn classify_yield_interior_with_sweep() {
        let v = classify_yield(&scenario(3.0, 1.0, 3.0, 4.0)).unwrap();
        assert_eq!(v.regime, Regime::InteriorOrUnknown);
        let t = v.theta_star.unwrap();
        assert!((0.63..=0.69).contains(&t), "theta* = {t}");

        // downstream-only drives extinction here; the sweep lands a hair
        // inside the upstream boundary (~0.997)
        let v = classify_yield(&scenario(1.0, 1.0, 3.0, 4.0)).unwrap();
        let t = v.theta_star.unwrap();
        assert!((0.99..=1.0).contains(&t), "theta* = {t}");
    }

    #[test]
    fn classify_yield_bounds() {
        // large growth, weak advection: certified theta* < 1/2
        let v = classify_yield(&scenario(17.0, 1.0, 7.0, 4.0)).unwrap();
        assert_eq!(v.theta_bound, Some(ThetaBound::LessThan(0.5)));
        let t = v.theta_star.unwrap();
        assert!(t < 0.5);
    }
}
