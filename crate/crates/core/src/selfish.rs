//! Stand-alone ("selfish") scheduling of a single agent, which fixes the
//! disagreement point of the bargaining game.

use thiserror::Error;

use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus};
use crate::oracle::push_energy_rows;
use crate::scenario::{AgentSpec, Role, Scenario, Tariff};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelfishError {
    #[error("agent {agent}: {source}")]
    Lp {
        agent: u32,
        #[source]
        source: LpError,
    },
    #[error("agent {0} cannot balance its own load against the grid limit")]
    Infeasible(u32),
    #[error("agent {0}: stand-alone problem is unbounded")]
    Unbounded(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfishSolution {
    pub agent: u32,
    /// `[P⁺(1..T), P⁻(1..T), P_B(1..T)]`.
    pub decision: Vec<f64>,
    /// Stand-alone bill D_i; negative means a net profit.
    pub cost: f64,
}

impl SelfishSolution {
    pub fn horizon(&self) -> usize {
        self.decision.len() / 3
    }

    pub fn grid_buy(&self) -> &[f64] {
        &self.decision[..self.horizon()]
    }

    pub fn grid_sell(&self) -> &[f64] {
        let h = self.horizon();
        &self.decision[h..2 * h]
    }

    pub fn desd_power(&self) -> &[f64] {
        let h = self.horizon();
        &self.decision[2 * h..]
    }
}

/// LP over `[P⁺, P⁻, P_B]` with cost `f = [p_b Δt | −p_s Δt | 0]`, own power
/// balance per step, grid box `[0, P_G^max]` and, for active agents, the
/// storage rate box and two-sided energy rows. Passive agents get `P_B ≡ 0`.
pub fn build_selfish_lp(agent: &AgentSpec, tariff: &Tariff, p_grid_max: f64, horizon: usize, dt: f64) -> LinearProgram {
    let n = 3 * horizon;
    let mut objective = vec![0.0; n];
    for t in 0..horizon {
        objective[t] = tariff.buy[t] * dt;
        objective[horizon + t] = -tariff.sell[t] * dt;
    }
    let mut lp = LinearProgram::new(objective);
    for t in 0..horizon {
        lp.set_bounds(t, 0.0, p_grid_max);
        lp.set_bounds(horizon + t, 0.0, p_grid_max);
        let (lo, hi) = match (agent.role, agent.desd) {
            (Role::Active, Some(d)) => (-d.p_charge_max_kw, d.p_discharge_max_kw),
            _ => (0.0, 0.0),
        };
        lp.set_bounds(2 * horizon + t, lo, hi);
    }
    // P⁺ − P⁻ + P_B = D − R
    for t in 0..horizon {
        let mut row = vec![0.0; n];
        row[t] = 1.0;
        row[horizon + t] = -1.0;
        row[2 * horizon + t] = 1.0;
        lp.add_eq(row, agent.demand(t) - agent.renewable(t));
    }
    if let (Role::Active, Some(d)) = (agent.role, agent.desd) {
        push_energy_rows(&mut lp, 2 * horizon, horizon, dt, d.e0_kwh, d.emin_kwh, d.emax_kwh);
    }
    lp
}

pub fn solve_selfish(agent: &AgentSpec, tariff: &Tariff, p_grid_max: f64, horizon: usize, dt: f64) -> Result<SelfishSolution, SelfishError> {
    let lp = build_selfish_lp(agent, tariff, p_grid_max, horizon, dt);
    let sol = solve_lp(&lp).map_err(|source| SelfishError::Lp { agent: agent.id, source })?;
    match sol.status {
        LpStatus::Optimal => Ok(SelfishSolution { agent: agent.id, decision: sol.x, cost: sol.objective_value }),
        LpStatus::Infeasible => Err(SelfishError::Infeasible(agent.id)),
        LpStatus::Unbounded => Err(SelfishError::Unbounded(agent.id)),
    }
}

/// Stand-alone optimum of every demand-side agent, in scenario order.
/// Each solve sees only that agent's own data plus public prices and limits.
pub fn selfish_solutions(scenario: &Scenario) -> Result<Vec<SelfishSolution>, SelfishError> {
    scenario
        .users()
        .map(|agent| solve_selfish(agent, scenario.tariff(), scenario.p_grid_max(), scenario.horizon(), scenario.dt()))
        .collect()
}

/// Disagreement point `D = (D_1, …, D_r)`.
pub fn disagreement_point(scenario: &Scenario) -> Result<Vec<f64>, SelfishError> {
    Ok(selfish_solutions(scenario)?.into_iter().map(|s| s.cost).collect())
}
