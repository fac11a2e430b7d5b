//! Large-growth allocation rules for general stream networks.
//!
//! When growth dwarfs movement and harvesting, the optimal allocation is
//! governed by two quantities: the intraspecific competition rates (which
//! patches to harvest at all) and the effective net flow (where to
//! concentrate within that group). Biomass maximization favours the
//! highest-competition patches, yield maximization the lowest-competition
//! patches; in both cases the within-group lead is the patch with the
//! largest effective net flow.

use crate::error::{Error, Result};
use crate::model::{HarvestAllocation, Model};
use crate::Objective;

/// Relative tolerance when grouping patches by competition rate or
/// comparing net flows for leadership.
const TIE_TOL: f64 = 1e-12;

/// Per-patch effective net flow and the induced ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct NetFlowReport {
    /// `I_i = sum_j (a_ij / c_j - a_ji / c_i)`, a competition-weighted net
    /// inflow. The entries sum to zero by antisymmetry.
    pub flows: Vec<f64>,
    /// Patch indices sorted by flow, descending; ties keep the lower index first.
    pub ranking: Vec<usize>,
}

/// Compute the effective net flow of every patch.
pub fn effective_net_flow(model: &Model) -> NetFlowReport {
    let n = model.n();
    let c = model.competition();
    let mut flows = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += model.rate_from_to(j, i) / c[j] - model.rate_from_to(i, j) / c[i];
        }
        flows[i] = acc;
    }
    let mut ranking: Vec<usize> = (0..n).collect();
    ranking.sort_by(|&a, &b| {
        flows[b]
            .partial_cmp(&flows[a])
            .expect("net flows are finite")
            .then(a.cmp(&b))
    });
    let scale = flows.iter().fold(1.0f64, |m, &x| m.max(x.abs()));
    debug_assert!(flows.iter().sum::<f64>().abs() <= 1e-12 * scale);
    NetFlowReport { flows, ranking }
}

/// How firmly an asymptotic recommendation is backed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certainty {
    /// The strict-dominance (biomass) or net-flow-gap (yield) hypothesis
    /// holds, so concentrating on the lead patch is optimal for large growth.
    Certified,
    /// The hypothesis fails; for yield, the lead patch is still guaranteed
    /// more than `H / n` of the effort.
    GapConditionFailed,
    /// Only a lower bound on the lead-patch effort is certified.
    LowerBoundOnly,
}

/// Recommended harvesting target for large growth rates.
///
/// Growth rates in the model are ignored: the advice describes the limit of
/// ever-larger homogeneous growth.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticAdvice {
    pub objective: Objective,
    /// Patches eligible for harvesting effort (extreme competition rate).
    pub candidate_group: Vec<usize>,
    /// Group member with the largest effective net flow (lowest index on ties).
    pub lead_patch: usize,
    /// All group members tied for the largest effective net flow.
    pub co_leaders: Vec<usize>,
    pub certainty: Certainty,
    pub notes: String,
}

fn group_by_competition(model: &Model, objective: Objective) -> Vec<usize> {
    let c = model.competition();
    let extreme = match objective {
        Objective::Biomass => c.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        Objective::Yield => c.iter().cloned().fold(f64::INFINITY, f64::min),
    };
    (0..model.n())
        .filter(|&i| (c[i] - extreme).abs() <= TIE_TOL * extreme.abs())
        .collect()
}

fn leaders_within(flows: &[f64], group: &[usize]) -> (usize, Vec<usize>) {
    let best = group
        .iter()
        .map(|&i| flows[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = group
        .iter()
        .map(|&i| flows[i].abs())
        .fold(1.0f64, f64::max);
    let co: Vec<usize> = group
        .iter()
        .cloned()
        .filter(|&i| flows[i] >= best - TIE_TOL * scale)
        .collect();
    (co[0], co)
}

/// Where to put the effort to maximize standing biomass at large growth:
/// the highest-competition patches, all of it on the one with the largest
/// effective net flow.
pub fn asymptotic_biomass_strategy(model: &Model, budget: f64) -> AsymptoticAdvice {
    let report = effective_net_flow(model);
    let group = group_by_competition(model, Objective::Biomass);
    let (lead, co_leaders) = leaders_within(&report.flows, &group);
    let certainty = if co_leaders.len() == 1 {
        Certainty::Certified
    } else {
        Certainty::GapConditionFailed
    };
    let notes = if co_leaders.len() == 1 {
        format!(
            "place the whole budget H = {budget} on patch {} (highest competition \
             group, strictly dominant net flow)",
            lead + 1
        )
    } else {
        format!(
            "net-flow leadership is tied among patches {:?} (1-based); strict \
             dominance fails, so no single-patch certificate applies",
            co_leaders.iter().map(|i| i + 1).collect::<Vec<_>>()
        )
    };
    AsymptoticAdvice {
        objective: Objective::Biomass,
        candidate_group: group,
        lead_patch: lead,
        co_leaders,
        certainty,
        notes,
    }
}

/// Where to put the effort to maximize yield at large growth: the
/// lowest-competition patches, concentrated on the largest effective net
/// flow when the flow gap exceeds `2H / c`.
pub fn asymptotic_yield_strategy(model: &Model, budget: f64) -> AsymptoticAdvice {
    let report = effective_net_flow(model);
    let group = group_by_competition(model, Objective::Yield);
    let (lead, co_leaders) = leaders_within(&report.flows, &group);
    let c = model.competition()[lead];
    let n = model.n();

    if group.len() == 1 {
        return AsymptoticAdvice {
            objective: Objective::Yield,
            candidate_group: group,
            lead_patch: lead,
            co_leaders,
            certainty: Certainty::Certified,
            notes: format!(
                "patch {} is the unique lowest-competition patch; it takes the \
                 whole budget H = {budget}",
                lead + 1
            ),
        };
    }

    let runner_up = group
        .iter()
        .filter(|&&i| i != lead)
        .map(|&i| report.flows[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let gap = report.flows[lead] - runner_up;
    let threshold = 2.0 * budget / c;
    if co_leaders.len() == 1 && gap > threshold {
        AsymptoticAdvice {
            objective: Objective::Yield,
            candidate_group: group,
            lead_patch: lead,
            co_leaders,
            certainty: Certainty::Certified,
            notes: format!(
                "place the whole budget H = {budget} on patch {}: net-flow gap \
                 {gap:.6} exceeds 2H/c = {threshold:.6}",
                lead + 1
            ),
        }
    } else {
        AsymptoticAdvice {
            objective: Objective::Yield,
            candidate_group: group,
            lead_patch: lead,
            co_leaders,
            certainty: Certainty::GapConditionFailed,
            notes: format!(
                "net-flow gap {gap:.6} does not exceed 2H/c = {threshold:.6}; \
                 certified only: effort on patch {} must exceed H/n = {:.6}",
                lead + 1,
                budget / n as f64
            ),
        }
    }
}

/// Effort placed on a candidate group, in one of the two shapes the limit
/// formulas cover.
#[derive(Debug, Clone, PartialEq)]
pub enum WithinGroup {
    /// `(1 - delta) H` on the lead patch (`group[0]`), `gamma_i * delta * H`
    /// on the remaining group members, nothing elsewhere.
    LeadOthers { delta: f64, gamma: Vec<f64> },
    /// `beta_i (1 - theta) H` on the group, `alpha_i * theta * H` on the
    /// complement (in ascending patch order).
    TwoGroup {
        theta: f64,
        alpha: Vec<f64>,
        beta: Vec<f64>,
    },
}

/// A structured allocation over a candidate patch group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedAllocation {
    /// Candidate patches; for the lead/others shape the first entry is the lead.
    pub group: Vec<usize>,
    pub within: WithinGroup,
}

fn check_weights(name: &str, w: &[f64], expected_len: usize) -> Result<()> {
    if w.len() != expected_len {
        return Err(Error::invalid(format!(
            "{name} has {} entries, expected {expected_len}",
            w.len()
        )));
    }
    if w.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
        return Err(Error::invalid(format!("{name} must be nonnegative")));
    }
    if expected_len > 0 {
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("{name} must sum to 1, got {total}")));
        }
    }
    Ok(())
}

fn check_fraction(name: &str, x: f64) -> Result<()> {
    if !(x.is_finite() && (0.0..=1.0).contains(&x)) {
        return Err(Error::invalid(format!("{name} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

impl GroupedAllocation {
    fn validate(&self, n: usize) -> Result<()> {
        if self.group.is_empty() {
            return Err(Error::invalid("candidate group must be nonempty"));
        }
        let mut seen = vec![false; n];
        for &i in &self.group {
            if i >= n {
                return Err(Error::invalid(format!("patch {i} out of range for n={n}")));
            }
            if seen[i] {
                return Err(Error::invalid(format!("patch {i} repeated in group")));
            }
            seen[i] = true;
        }
        match &self.within {
            WithinGroup::LeadOthers { delta, gamma } => {
                check_fraction("delta", *delta)?;
                check_weights("gamma", gamma, self.group.len() - 1)?;
            }
            WithinGroup::TwoGroup { theta, alpha, beta } => {
                check_fraction("theta", *theta)?;
                check_weights("beta", beta, self.group.len())?;
                check_weights("alpha", alpha, n - self.group.len())?;
            }
        }
        Ok(())
    }

    /// Expand to a concrete per-patch effort vector for an n-patch model.
    pub fn expand(&self, n: usize, budget: f64) -> Result<HarvestAllocation> {
        self.validate(n)?;
        let mut efforts = vec![0.0; n];
        match &self.within {
            WithinGroup::LeadOthers { delta, gamma } => {
                efforts[self.group[0]] = (1.0 - delta) * budget;
                for (g, &i) in gamma.iter().zip(&self.group[1..]) {
                    efforts[i] = g * delta * budget;
                }
            }
            WithinGroup::TwoGroup { theta, alpha, beta } => {
                for (b, &i) in beta.iter().zip(&self.group) {
                    efforts[i] = b * (1.0 - theta) * budget;
                }
                let mut in_group = vec![false; n];
                for &i in &self.group {
                    in_group[i] = true;
                }
                let complement = (0..n).filter(|&i| !in_group[i]);
                for (a, i) in alpha.iter().zip(complement) {
                    efforts[i] = a * theta * budget;
                }
            }
        }
        let total = efforts.iter().sum();
        HarvestAllocation::new(efforts, total)
    }
}

/// The closed-form limit of the objective derivative as growth grows,
/// for an allocation in one of the two structured shapes.
///
/// The returned scalar is normalized differently per shape:
///
/// - biomass, two-group: `lim M' / H = 1/c - sum_off alpha_i / c_i`
/// - biomass, lead/others: `lim r M' = H (-I_lead + sum gamma_i I_i)`
/// - yield, two-group: `lim Y' / (r H) = -1/c + sum_off alpha_i / c_i`
/// - yield, lead/others: `lim Y' / H = (2H/c)(1 - delta - delta sum gamma_i^2)
///   - I_lead + sum gamma_i I_i`
///
/// where `c` is the common competition rate of the group and
/// differentiation is with respect to `theta` (two-group) or `delta`
/// (lead/others). The group must coincide with the candidate set for the
/// objective (highest competition for biomass, lowest for yield) and the
/// designated lead must carry the group's maximal net flow.
pub fn asymptotic_limits(
    model: &Model,
    alloc: &GroupedAllocation,
    objective: Objective,
    budget: f64,
) -> Result<f64> {
    let n = model.n();
    alloc.validate(n)?;
    let expected = group_by_competition(model, objective);
    let mut sorted = alloc.group.clone();
    sorted.sort_unstable();
    if sorted != expected {
        return Err(Error::invalid(format!(
            "group {:?} does not match the candidate set {:?} for {objective}",
            alloc.group, expected
        )));
    }
    let c = model.competition()[alloc.group[0]];
    let flows = effective_net_flow(model).flows;

    match (&alloc.within, objective) {
        (WithinGroup::TwoGroup { alpha, .. }, Objective::Biomass) => {
            let mut in_group = vec![false; n];
            for &i in &alloc.group {
                in_group[i] = true;
            }
            let off_sum: f64 = alpha
                .iter()
                .zip((0..n).filter(|&i| !in_group[i]))
                .map(|(a, i)| a / model.competition()[i])
                .sum();
            Ok(1.0 / c - off_sum)
        }
        (WithinGroup::TwoGroup { alpha, .. }, Objective::Yield) => {
            let mut in_group = vec![false; n];
            for &i in &alloc.group {
                in_group[i] = true;
            }
            let off_sum: f64 = alpha
                .iter()
                .zip((0..n).filter(|&i| !in_group[i]))
                .map(|(a, i)| a / model.competition()[i])
                .sum();
            Ok(-1.0 / c + off_sum)
        }
        (WithinGroup::LeadOthers { delta, gamma }, _) => {
            let lead = alloc.group[0];
            let group_max = alloc
                .group
                .iter()
                .map(|&i| flows[i])
                .fold(f64::NEG_INFINITY, f64::max);
            let scale = flows.iter().fold(1.0f64, |m, &x| m.max(x.abs()));
            if flows[lead] < group_max - TIE_TOL * scale {
                return Err(Error::invalid(format!(
                    "designated lead patch {lead} does not carry the group's \
                     maximal net flow"
                )));
            }
            let weighted_flow: f64 = gamma
                .iter()
                .zip(&alloc.group[1..])
                .map(|(g, &i)| g * flows[i])
                .sum();
            match objective {
                Objective::Biomass => Ok(budget * (-flows[lead] + weighted_flow)),
                Objective::Yield => {
                    let gamma_sq: f64 = gamma.iter().map(|g| g * g).sum();
                    Ok(2.0 * budget / c * (1.0 - delta - delta * gamma_sq) - flows[lead]
                        + weighted_flow)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn straight_stream_net_flow() {
        let m = Model::straight_stream(3, 1.0, 2.0, vec![1.0; 3], vec![1.0; 3]).unwrap();
        let report = effective_net_flow(&m);
        assert_eq!(report.flows, vec![-2.0, 0.0, 2.0]);
        assert_eq!(report.ranking, vec![2, 1, 0]);
    }

    #[test]
    fn junction_network_net_flow() {
        let m = Model::three_one_one(1.0, 2.0, vec![1.0; 5], vec![1.0; 5]).unwrap();
        let report = effective_net_flow(&m);
        assert_eq!(report.flows, vec![-2.0, -2.0, -2.0, 4.0, 2.0]);
        assert_eq!(report.ranking[0], 3);
    }

    #[test]
    fn heterogeneous_two_patch_net_flow() {
        let m = Model::new(
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![vec![0.0, 1.0], vec![2.0, 0.0]],
        )
        .unwrap();
        let report = effective_net_flow(&m);
        assert_abs_diff_eq!(report.flows[0], -1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(report.flows[1], 1.5, epsilon = 1e-14);
    }

    #[test]
    fn net_flows_sum_to_zero() {
        let m = Model::three_one_one(0.3, 1.7, vec![1.0; 5], vec![0.5, 1.0, 2.0, 0.7, 1.3])
            .unwrap();
        let report = effective_net_flow(&m);
        let total: f64 = report.flows.iter().sum();
        assert_abs_diff_eq!(total, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn biomass_strategy_targets_downstream_on_straight_streams() {
        let m = Model::straight_stream(4, 1.0, 2.0, vec![1.0; 4], vec![1.0; 4]).unwrap();
        let advice = asymptotic_biomass_strategy(&m, 4.0);
        assert_eq!(advice.candidate_group, vec![0, 1, 2, 3]);
        assert_eq!(advice.lead_patch, 3);
        assert_eq!(advice.certainty, Certainty::Certified);
    }

    #[test]
    fn biomass_strategy_targets_junction_patch() {
        let m = Model::three_one_one(1.0, 2.0, vec![1.0; 5], vec![1.0; 5]).unwrap();
        let advice = asymptotic_biomass_strategy(&m, 4.0);
        assert_eq!(advice.lead_patch, 3);
        assert_eq!(advice.certainty, Certainty::Certified);
    }

    #[test]
    fn biomass_group_follows_highest_competition() {
        let m = Model::straight_stream(3, 1.0, 2.0, vec![1.0; 3], vec![2.0, 2.0, 1.0]).unwrap();
        let advice = asymptotic_biomass_strategy(&m, 4.0);
        assert_eq!(advice.candidate_group, vec![0, 1]);
        // flows: I_0 = 1/2 - 3/2 = -1, I_1 = (3/2 + 1) - (1 + 3)/2 = 0.5
        assert_eq!(advice.lead_patch, 1);
    }

    #[test]
    fn yield_strategy_gap_condition() {
        // q > 2H: certified downstream concentration
        let m = Model::straight_stream(3, 1.0, 9.0, vec![1.0; 3], vec![1.0; 3]).unwrap();
        let advice = asymptotic_yield_strategy(&m, 4.0);
        assert_eq!(advice.lead_patch, 2);
        assert_eq!(advice.certainty, Certainty::Certified);

        // q < 2H: only the H/n lower bound is certified
        let m = Model::straight_stream(3, 1.0, 2.0, vec![1.0; 3], vec![1.0; 3]).unwrap();
        let advice = asymptotic_yield_strategy(&m, 4.0);
        assert_eq!(advice.certainty, Certainty::GapConditionFailed);
        assert!(advice.notes.contains("H/n"));
    }

    #[test]
    fn yield_group_follows_lowest_competition() {
        let m = Model::straight_stream(3, 1.0, 2.0, vec![1.0; 3], vec![1.0, 1.0, 2.0]).unwrap();
        let advice = asymptotic_yield_strategy(&m, 4.0);
        assert_eq!(advice.candidate_group, vec![0, 1]);
    }

    #[test]
    fn two_group_biomass_limit() {
        let m = Model::straight_stream(3, 1.0, 2.0, vec![1.0; 3], vec![2.0, 2.0, 1.0]).unwrap();
        let alloc = GroupedAllocation {
            group: vec![0, 1],
            within: WithinGroup::TwoGroup {
                theta: 0.3,
                alpha: vec![1.0],
                beta: vec![0.5, 0.5],
            },
        };
        let lim = asymptotic_limits(&m, &alloc, Objective::Biomass, 4.0).unwrap();
        assert_relative_eq!(lim, 0.5 - 1.0, max_relative = 1e-14);
    }

    #[test]
    fn lead_others_biomass_limit() {
        // flows (-2, 0, 2); lead patch 2, single other with gamma = 1 on patch 1
        let m = Model::straight_stream(3, 1.0, 2.0, vec![1.0; 3], vec![1.0; 3]).unwrap();
        let alloc = GroupedAllocation {
            group: vec![2, 1, 0],
            within: WithinGroup::LeadOthers {
                delta: 0.2,
                gamma: vec![1.0, 0.0],
            },
        };
        let lim = asymptotic_limits(&m, &alloc, Objective::Biomass, 4.0).unwrap();
        // H * (-I_lead + gamma . I) = 4 * (-2 + 0) = -8
        assert_relative_eq!(lim, -8.0, max_relative = 1e-14);
    }

    #[test]
    fn lead_others_yield_limit_at_delta_zero() {
        let m = Model::straight_stream(3, 1.0, 9.0, vec![1.0; 3], vec![1.0; 3]).unwrap();
        let alloc = GroupedAllocation {
            group: vec![2, 0, 1],
            within: WithinGroup::LeadOthers {
                delta: 0.0,
                gamma: vec![0.5, 0.5],
            },
        };
        let lim = asymptotic_limits(&m, &alloc, Objective::Yield, 4.0).unwrap();
        // flows are (-9, 0, 9): 2H/c - I_lead + (0.5 * -9 + 0.5 * 0) = 8 - 9 - 4.5
        assert_relative_eq!(lim, 8.0 - 9.0 - 4.5, max_relative = 1e-14);
        // consistent with the gap certificate: negative at delta = 0
        assert!(lim < 0.0);
    }

    #[test]
    fn limits_reject_inconsistent_grouping() {
        let m = Model::straight_stream(3, 1.0, 2.0, vec![1.0; 3], vec![2.0, 2.0, 1.0]).unwrap();
        // group {0, 2} is not the highest-competition set {0, 1}
        let alloc = GroupedAllocation {
            group: vec![0, 2],
            within: WithinGroup::TwoGroup {
                theta: 0.3,
                alpha: vec![1.0],
                beta: vec![0.5, 0.5],
            },
        };
        assert!(asymptotic_limits(&m, &alloc, Objective::Biomass, 4.0).is_err());
        // weights that do not sum to one
        let alloc = GroupedAllocation {
            group: vec![0, 1],
            within: WithinGroup::TwoGroup {
                theta: 0.3,
                alpha: vec![0.7],
                beta: vec![0.5, 0.4],
            },
        };
        assert!(asymptotic_limits(&m, &alloc, Objective::Biomass, 4.0).is_err());
    }

    #[test]
    fn expansion_produces_feasible_allocations() {
        let alloc = GroupedAllocation {
            group: vec![3, 4],
            within: WithinGroup::LeadOthers {
                delta: 0.25,
                gamma: vec![1.0],
            },
        };
        let h = alloc.expand(5, 4.0).unwrap();
        assert_eq!(h.efforts(), &[0.0, 0.0, 0.0, 3.0, 1.0]);

        let alloc = GroupedAllocation {
            group: vec![1, 2],
            within: WithinGroup::TwoGroup {
                theta: 0.5,
                alpha: vec![0.25, 0.75],
                beta: vec![0.5, 0.5],
            },
        };
        let h = alloc.expand(4, 8.0).unwrap();
        // complement {0, 3} gets alpha * theta * H = (1, 3); group gets (2, 2)
        assert_eq!(h.efforts(), &[1.0, 2.0, 2.0, 3.0]);
    }
}
