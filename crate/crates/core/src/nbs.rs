//! Nash-bargaining cost allocation, in closed form and by averaging consensus.
//!
//! Every agent receives the same cooperation discount
//! `ε = (Σ D_i − J) / r` off its stand-alone cost: `J_i = D_i − ε`.

use thiserror::Error;

use crate::graph::{run_consensus, CommGraph, GraphError};
use crate::oracle::PowerSchedule;
use crate::scenario::{Role, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NbsError {
    #[error("no agents to allocate to")]
    NoAgents,
    #[error("bargaining failed: sum of selfish costs {sum_selfish} is below the social cost {social}")]
    FailedBargaining { sum_selfish: f64, social: f64 },
    #[error("{got} selfish costs for {expected} agents")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Consensus(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    /// Agent ids in the order of the cost vectors.
    pub agents: Vec<u32>,
    pub social_cost: f64,
    pub selfish: Vec<f64>,
    pub allocated: Vec<f64>,
    /// Common discount ε.
    pub epsilon: f64,
    pub consumption: Option<ConsumptionCosts>,
    /// Consensus rounds used by the distributed allocation, if any.
    pub rounds: Option<usize>,
}

impl CostReport {
    /// `max_i |(D_i − J_i) − ε|`.
    pub fn discount_spread(&self) -> f64 {
        self.selfish
            .iter()
            .zip(&self.allocated)
            .map(|(d, j)| ((d - j) - self.epsilon).abs())
            .fold(0.0, f64::max)
    }

    /// `Σ_i J_i − J`.
    pub fn budget_gap(&self) -> f64 {
        self.allocated.iter().sum::<f64>() - self.social_cost
    }

    pub fn with_consumption(mut self, consumption: ConsumptionCosts) -> Self {
        self.consumption = Some(consumption);
        self
    }
}

fn bargaining_guard(selfish: &[f64], social: f64) -> Result<(), NbsError> {
    if selfish.is_empty() {
        return Err(NbsError::NoAgents);
    }
    let sum_selfish: f64 = selfish.iter().sum();
    if sum_selfish - social < -1e-6 * social.abs().max(1.0) {
        return Err(NbsError::FailedBargaining { sum_selfish, social });
    }
    Ok(())
}

/// Closed-form allocation `J_i = D_i − (Σ D − J)/r`. `agents` labels the entries of `selfish`.
pub fn allocate_centralized(agents: &[u32], social_cost: f64, selfish: &[f64]) -> Result<CostReport, NbsError> {
    if agents.len() != selfish.len() {
        return Err(NbsError::Dimension { expected: agents.len(), got: selfish.len() });
    }
    bargaining_guard(selfish, social_cost)?;
    let r = selfish.len() as f64;
    let epsilon = (selfish.iter().sum::<f64>() - social_cost) / r;
    Ok(CostReport {
        agents: agents.to_vec(),
        social_cost,
        selfish: selfish.to_vec(),
        allocated: selfish.iter().map(|d| d - epsilon).collect(),
        epsilon,
        consumption: None,
        rounds: None,
    })
}

/// Distributed allocation: agents start consensus from `D_i`, the grid node
/// from `−J`; each agent then computes `J_i = D_i − (r+1) x̂_i / r` from its
/// own converged state. `selfish` follows the scenario's user order.
///
/// The reported ε is the first agent's local value; the others agree to
/// within `tol`.
pub fn allocate_distributed(
    scenario: &Scenario,
    selfish: &[f64],
    social_cost: f64,
    graph: &CommGraph,
    tol: f64,
    max_iters: usize,
) -> Result<CostReport, NbsError> {
    let users: Vec<u32> = scenario.users().map(|a| a.id).collect();
    if users.len() != selfish.len() {
        return Err(NbsError::Dimension { expected: users.len(), got: selfish.len() });
    }
    bargaining_guard(selfish, social_cost)?;
    let r = users.len() as f64;

    let initial: Vec<f64> = graph
        .node_ids()
        .iter()
        .map(|&id| match scenario.agent(id).map(|a| a.role) {
            Some(Role::Grid) => -social_cost,
            _ => selfish[users.iter().position(|&u| u == id).expect("graph nodes are scenario agents")],
        })
        .collect();
    let outcome = run_consensus(&initial, graph, tol, max_iters)?;

    let local_discounts: Vec<f64> = users
        .iter()
        .map(|&id| (r + 1.0) * outcome.values[graph.index_of(id).expect("user is a graph node")] / r)
        .collect();
    Ok(CostReport {
        agents: users,
        social_cost,
        selfish: selfish.to_vec(),
        allocated: selfish.iter().zip(&local_discounts).map(|(d, e)| d - e).collect(),
        epsilon: local_discounts[0],
        consumption: None,
        rounds: Some(outcome.iterations),
    })
}

/// Each agent's net grid draw under the social schedule, valued at tariff
/// prices. `residual = J − Σ costs` is the saving from netting inside the
/// microgrid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionCosts {
    pub agents: Vec<u32>,
    pub costs: Vec<f64>,
    pub residual: f64,
}

pub fn consumption_costs(schedule: &PowerSchedule, scenario: &Scenario) -> ConsumptionCosts {
    let tariff = scenario.tariff();
    let dt = scenario.dt();
    let (agents, costs) = scenario
        .users()
        .map(|agent| {
            let storage = schedule.desd_power(agent.id);
            let cost = (0..scenario.horizon())
                .map(|t| {
                    let draw = agent.demand(t) - agent.renewable(t) - storage.map_or(0.0, |p| p[t]);
                    if draw >= 0.0 {
                        tariff.buy[t] * draw * dt
                    } else {
                        tariff.sell[t] * draw * dt
                    }
                })
                .sum::<f64>();
            (agent.id, cost)
        })
        .unzip::<_, _, Vec<u32>, Vec<f64>>();
    let residual = schedule.cost(tariff) - costs.iter().sum::<f64>();
    ConsumptionCosts { agents, costs, residual }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::metropolis_weights;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_examples() {
        let rep = allocate_centralized(&[1, 2], 12.0, &[10.0, 6.0]).unwrap();
        assert_eq!(rep.allocated, vec![8.0, 4.0]);
        assert_eq!(rep.epsilon, 2.0);

        let rep = allocate_centralized(&[1, 2], 16.0, &[10.0, 6.0]).unwrap();
        assert_eq!(rep.allocated, vec![10.0, 6.0]);
        assert_eq!(rep.epsilon, 0.0);

        let rep = allocate_centralized(&[1, 2, 3], 0.0, &[5.0, 0.0, -2.0]).unwrap();
        assert_eq!(rep.epsilon, 1.0);
        assert_eq!(rep.allocated, vec![4.0, -1.0, -3.0]);
    }

    #[test]
    fn failed_bargaining_is_flagged() {
        let err = allocate_centralized(&[1, 2], 20.0, &[10.0, 6.0]).unwrap_err();
        assert_eq!(err, NbsError::FailedBargaining { sum_selfish: 16.0, social: 20.0 });
        // a hair under the guard passes
        assert!(allocate_centralized(&[1, 2], 16.0 + 1e-8, &[10.0, 6.0]).is_ok());
        assert_eq!(allocate_centralized(&[], 0.0, &[]), Err(NbsError::NoAgents));
    }

    #[test]
    fn complete_graph_distributed_example() {
        let s = fixtures::three_agent();
        let edges: Vec<_> = (1..=4u32).flat_map(|a| (a + 1..=4).map(move |b| (a, b))).collect();
        let g = metropolis_weights(&edges, &[1, 2, 3, 4]).unwrap();
        let rep = allocate_distributed(&s, &[10.0, 6.0, 2.0], 12.0, &g, 1e-12, 10).unwrap();
        for (got, want) in rep.allocated.iter().zip([8.0, 4.0, 0.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(rep.epsilon, 2.0, epsilon = 1e-12);
        assert_eq!(rep.rounds, Some(1));
    }

    #[test]
    fn passive_consumption_equals_selfish() {
        let s = fixtures::all_passive();
        let sol = crate::oracle::solve_social(&s).unwrap();
        let c = consumption_costs(&sol.schedule, &s);
        let d = crate::selfish::disagreement_point(&s).unwrap();
        for (a, b) in c.costs.iter().zip(&d) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(c.residual, 0.0, epsilon = 1e-9);
    }
}
