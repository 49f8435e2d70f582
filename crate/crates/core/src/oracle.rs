//! Centralized social optimum: the LP ground truth the distributed solver is
//! checked against.

use thiserror::Error;

use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus};
use crate::scenario::{Scenario, Tariff};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("scenario is infeasible{}", .step.map(|t| format!(" at step {}", t + 1)).unwrap_or_default())]
    Infeasible { step: Option<usize> },
    #[error("social problem is unbounded")]
    Unbounded,
}

/// Power trajectory of one storage device. Positive values discharge.
#[derive(Debug, Clone, PartialEq)]
pub struct DesdTrajectory {
    pub agent: u32,
    pub power_kw: Vec<f64>,
}

/// Day-ahead schedule: grid exchange plus every active agent's storage power.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSchedule {
    pub dt: f64,
    pub grid_buy: Vec<f64>,
    pub grid_sell: Vec<f64>,
    pub desd: Vec<DesdTrajectory>,
}

impl PowerSchedule {
    pub fn horizon(&self) -> usize {
        self.grid_buy.len()
    }

    pub fn desd_power(&self, agent: u32) -> Option<&[f64]> {
        self.desd.iter().find(|d| d.agent == agent).map(|d| d.power_kw.as_slice())
    }

    /// Σ over active agents of P_B(t).
    pub fn total_desd_power(&self, t: usize) -> f64 {
        self.desd.iter().map(|d| d.power_kw[t]).sum()
    }

    /// Bill `Σ_t (p_b P⁺ − p_s P⁻) Δt`.
    pub fn cost(&self, tariff: &Tariff) -> f64 {
        (0..self.horizon())
            .map(|t| (tariff.buy[t] * self.grid_buy[t] - tariff.sell[t] * self.grid_sell[t]) * self.dt)
            .sum()
    }

    /// Replaces simultaneous buy and sell at a step by the net exchange.
    /// Cost never increases when sell prices do not exceed buy prices.
    pub fn netted(mut self) -> Self {
        for t in 0..self.horizon() {
            let net = self.grid_buy[t] - self.grid_sell[t];
            self.grid_buy[t] = net.max(0.0);
            self.grid_sell[t] = (-net).max(0.0);
        }
        self
    }

    /// Stored energy after each step, `E(t) = E⁰ − Σ_{τ≤t} P_B(τ) Δt`.
    pub fn energy(&self, agent: u32, e0_kwh: f64) -> Option<Vec<f64>> {
        let power = self.desd_power(agent)?;
        let mut e = e0_kwh;
        Some(
            power
                .iter()
                .map(|p| {
                    e -= p * self.dt;
                    e
                })
                .collect(),
        )
    }

    /// Power-balance residual per step, `Σ D − Σ R − Σ P_B − (P⁺ − P⁻)`.
    pub fn balance_residuals(&self, scenario: &Scenario) -> Vec<f64> {
        (0..self.horizon())
            .map(|t| {
                scenario.total_demand(t)
                    - scenario.total_renewable(t)
                    - self.total_desd_power(t)
                    - (self.grid_buy[t] - self.grid_sell[t])
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleViolation {
    Shape(String),
    Balance { step: usize, residual: f64 },
    GridBox { step: usize, buy: f64, sell: f64 },
    Complementarity { step: usize, buy: f64, sell: f64 },
    DesdRate { agent: u32, step: usize, power: f64 },
    Energy { agent: u32, step: usize, energy: f64 },
}

/// Checks balance (to `balance_tol` kW), energy bounds (to `energy_tol` kWh),
/// boxes and buy/sell complementarity of a schedule against its scenario.
pub fn validate_schedule(
    scenario: &Scenario,
    schedule: &PowerSchedule,
    balance_tol: f64,
    energy_tol: f64,
) -> Vec<ScheduleViolation> {
    const BOX_TOL: f64 = 1e-9;
    let horizon = scenario.horizon();
    let mut out = Vec::new();
    if schedule.grid_buy.len() != horizon || schedule.grid_sell.len() != horizon {
        out.push(ScheduleViolation::Shape("grid series length differs from horizon".into()));
        return out;
    }
    for agent in scenario.active_agents() {
        match schedule.desd_power(agent.id) {
            Some(p) if p.len() == horizon => {}
            _ => {
                out.push(ScheduleViolation::Shape(format!("missing or short storage series for agent {}", agent.id)));
                return out;
            }
        }
    }

    for (step, residual) in schedule.balance_residuals(scenario).into_iter().enumerate() {
        if residual.abs() > balance_tol {
            out.push(ScheduleViolation::Balance { step, residual });
        }
    }
    let p_max = scenario.p_grid_max();
    for step in 0..horizon {
        let (buy, sell) = (schedule.grid_buy[step], schedule.grid_sell[step]);
        if buy < -BOX_TOL || sell < -BOX_TOL || buy > p_max + BOX_TOL || sell > p_max + BOX_TOL {
            out.push(ScheduleViolation::GridBox { step, buy, sell });
        }
        if buy > BOX_TOL && sell > BOX_TOL {
            out.push(ScheduleViolation::Complementarity { step, buy, sell });
        }
    }
    for agent in scenario.active_agents() {
        let desd = agent.desd.expect("active agents own storage");
        let power = schedule.desd_power(agent.id).expect("checked above");
        for (step, &p) in power.iter().enumerate() {
            if p < -desd.p_charge_max_kw - BOX_TOL || p > desd.p_discharge_max_kw + BOX_TOL {
                out.push(ScheduleViolation::DesdRate { agent: agent.id, step, power: p });
            }
        }
        let energy = schedule.energy(agent.id, desd.e0_kwh).expect("checked above");
        for (step, e) in energy.into_iter().enumerate() {
            if e < desd.emin_kwh - energy_tol || e > desd.emax_kwh + energy_tol {
                out.push(ScheduleViolation::Energy { agent: agent.id, step, energy: e });
            }
        }
    }
    out
}

/// Column layout of the social LP:
/// `[P⁺(1..T), P⁻(1..T), P_{a,B}(1..T) for each active agent a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialLayout {
    pub horizon: usize,
    pub active: Vec<u32>,
}

impl SocialLayout {
    pub fn of(scenario: &Scenario) -> Self {
        Self { horizon: scenario.horizon(), active: scenario.active_agents().map(|a| a.id).collect() }
    }

    pub fn num_vars(&self) -> usize {
        (2 + self.active.len()) * self.horizon
    }

    pub fn buy(&self, t: usize) -> usize {
        t
    }

    pub fn sell(&self, t: usize) -> usize {
        self.horizon + t
    }

    /// Column of P_B(t) for the `k`-th active agent.
    pub fn desd(&self, k: usize, t: usize) -> usize {
        (2 + k) * self.horizon + t
    }

    pub fn schedule(&self, x: &[f64], dt: f64) -> PowerSchedule {
        let h = self.horizon;
        PowerSchedule {
            dt,
            grid_buy: x[..h].to_vec(),
            grid_sell: x[h..2 * h].to_vec(),
            desd: self
                .active
                .iter()
                .enumerate()
                .map(|(k, &agent)| DesdTrajectory { agent, power_kw: x[self.desd(k, 0)..self.desd(k, 0) + h].to_vec() })
                .collect(),
        }
    }

    /// Inverse of [`SocialLayout::schedule`].
    pub fn flatten(&self, schedule: &PowerSchedule) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.num_vars());
        x.extend_from_slice(&schedule.grid_buy);
        x.extend_from_slice(&schedule.grid_sell);
        for &agent in &self.active {
            x.extend_from_slice(schedule.desd_power(agent).expect("schedule covers every active agent"));
        }
        x
    }
}

/// Appends the two-sided cumulative energy rows for storage columns
/// `first..first + T`.
pub(crate) fn push_energy_rows(lp: &mut LinearProgram, first: usize, horizon: usize, dt: f64, e0: f64, emin: f64, emax: f64) {
    let n = lp.num_vars();
    for t in 0..horizon {
        let mut row = vec![0.0; n];
        for tau in 0..=t {
            row[first + tau] = dt;
        }
        let negated = row.iter().map(|v| -v).collect();
        // E⁰ − E^max ≤ Σ P_B Δt ≤ E⁰ − E^min
        lp.add_le(row, e0 - emin);
        lp.add_le(negated, emax - e0);
    }
}

pub fn build_social_lp(scenario: &Scenario) -> LinearProgram {
    let layout = SocialLayout::of(scenario);
    let horizon = scenario.horizon();
    let dt = scenario.dt();
    let tariff = scenario.tariff();
    let n = layout.num_vars();

    let mut objective = vec![0.0; n];
    for t in 0..horizon {
        objective[layout.buy(t)] = tariff.buy[t] * dt;
        objective[layout.sell(t)] = -tariff.sell[t] * dt;
    }
    let mut lp = LinearProgram::new(objective);

    let p_max = scenario.p_grid_max();
    for t in 0..horizon {
        lp.set_bounds(layout.buy(t), 0.0, p_max);
        lp.set_bounds(layout.sell(t), 0.0, p_max);
    }
    for (k, agent) in scenario.active_agents().enumerate() {
        let desd = agent.desd.expect("active agents own storage");
        for t in 0..horizon {
            lp.set_bounds(layout.desd(k, t), -desd.p_charge_max_kw, desd.p_discharge_max_kw);
        }
    }

    // P⁺ − P⁻ + Σ P_B = Σ D − Σ R
    for t in 0..horizon {
        let mut row = vec![0.0; n];
        row[layout.buy(t)] = 1.0;
        row[layout.sell(t)] = -1.0;
        for k in 0..layout.active.len() {
            row[layout.desd(k, t)] = 1.0;
        }
        lp.add_eq(row, scenario.total_demand(t) - scenario.total_renewable(t));
    }

    for (k, agent) in scenario.active_agents().enumerate() {
        let desd = agent.desd.expect("active agents own storage");
        push_energy_rows(&mut lp, layout.desd(k, 0), horizon, dt, desd.e0_kwh, desd.emin_kwh, desd.emax_kwh);
    }
    lp
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocialSolution {
    pub schedule: PowerSchedule,
    /// Optimal social bill J.
    pub cost: f64,
}

/// Solves the social problem centrally and returns the netted schedule with J.
pub fn solve_social(scenario: &Scenario) -> Result<SocialSolution, OracleError> {
    let lp = build_social_lp(scenario);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(OracleError::Infeasible { step: infeasible_step(scenario) }),
        LpStatus::Unbounded => return Err(OracleError::Unbounded),
    }
    let schedule = SocialLayout::of(scenario).schedule(&sol.x, scenario.dt()).netted();
    Ok(SocialSolution { schedule, cost: sol.objective_value })
}

// First step whose net demand lies outside what the grid and every battery
// at full rate can absorb or supply.
fn infeasible_step(scenario: &Scenario) -> Option<usize> {
    let (charge, discharge) = scenario.active_agents().filter_map(|a| a.desd).fold((0.0, 0.0), |(c, d), s| {
        (c + s.p_charge_max_kw, d + s.p_discharge_max_kw)
    });
    let p_max = scenario.p_grid_max();
    (0..scenario.horizon()).find(|&t| {
        let net = scenario.total_demand(t) - scenario.total_renewable(t);
        net > p_max + discharge || net < -p_max - charge
    })
}
