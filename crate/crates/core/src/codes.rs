//! Cooperative distributed energy scheduling (CoDES) with grid buy and sell.
//!
//! Every bus runs a projected primal-dual gradient iteration on the augmented
//! Lagrangian of the social problem. The two global quantities the gradient
//! needs, the incremental cost λ(t) and the power imbalance ΔP(t), are replaced
//! by local estimates that buses refine by exchanging [`Message`]s with their
//! neighbours only.
//!
//! Ownership: the grid node holds P_G⁺/P_G⁻, each active user holds its own
//! P_B and the two storage multipliers, passive users hold no primals and only
//! relay consensus estimates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{spread, CommGraph};
use crate::oracle::{DesdTrajectory, PowerSchedule};
use crate::scenario::{AgentSpec, DesdSpec, Role, Scenario, Tariff};

/// How the storage energy bounds enter the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyRule {
    /// Violations clamped at zero: the bound only acts once crossed, and the
    /// multipliers never decrease. An optimum with a binding energy bound is
    /// not a fixed point, so iterates chatter across it.
    Clamped,
    /// Method of multipliers on the signed margin g: gradient term `[μ + ρg]⁺`,
    /// update `μ ← [μ + ξ₂ g]⁺`. Multipliers relax when the bound is slack.
    #[default]
    Multiplier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodesConfig {
    /// Penalty factor ρ.
    pub rho: f64,
    /// Primal step for the grid node's P_G⁺/P_G⁻.
    pub xi1_grid: f64,
    /// Primal step for storage power P_B.
    pub xi1_desd: f64,
    /// Dual ascent step for the storage multipliers.
    pub xi2: f64,
    /// Gain of the imbalance feedback into the λ estimate.
    pub xi3: f64,
    pub max_iters: usize,
    /// Stop once every |ΔP(t)| is below this (kW) ...
    pub tol_balance: f64,
    /// ... and the largest primal change of the iteration is below this (kW).
    pub tol_step: f64,
    #[serde(default)]
    pub energy_rule: EnergyRule,
}

impl Default for CodesConfig {
    fn default() -> Self {
        Self {
            rho: 2.0,
            xi1_grid: 5e-2,
            xi1_desd: 1e-2,
            xi2: 0.5,
            xi3: 2e-2,
            max_iters: 20_000,
            tol_balance: 1e-3,
            tol_step: 1e-6,
            energy_rule: EnergyRule::Multiplier,
        }
    }
}

impl CodesConfig {
    pub fn validate(&self) -> Result<(), String> {
        let named = [
            ("rho", self.rho),
            ("xi1_grid", self.xi1_grid),
            ("xi1_desd", self.xi1_desd),
            ("xi2", self.xi2),
            ("xi3", self.xi3),
            ("tol_balance", self.tol_balance),
            ("tol_step", self.tol_step),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(format!("{name} must be positive"));
        }
        if self.max_iters == 0 {
            return Err("max_iters must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CodesError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(
        "CoDES did not converge in {} iterations (imbalance {:e} kW, step {:e} kW)",
        .0.iterations,
        .0.trace.last().map_or(f64::NAN, |r| r.max_imbalance),
        .0.trace.last().map_or(f64::NAN, |r| r.primal_step_norm)
    )]
    NotConverged(Box<CodesRun>),
}

/// Data every bus may know: prices, grid limit and timing.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicInfo {
    pub horizon: usize,
    pub dt: f64,
    pub tariff: Tariff,
    pub p_grid_max: f64,
}

impl PublicInfo {
    pub fn of(scenario: &Scenario) -> Self {
        Self {
            horizon: scenario.horizon(),
            dt: scenario.dt(),
            tariff: scenario.tariff().clone(),
            p_grid_max: scenario.p_grid_max(),
        }
    }
}

/// What a bus sends its neighbours each round. Nothing else leaves a bus.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub lambda_hat: Vec<f64>,
    pub imbalance_hat: Vec<f64>,
}

/// Iterate state of one bus.
#[derive(Debug, Clone, PartialEq)]
pub struct BusState {
    pub grid_buy: Vec<f64>,
    pub grid_sell: Vec<f64>,
    pub desd_power: Vec<f64>,
    /// Multiplier of the E ≤ E^max side (overcharge).
    pub mu_upper: Vec<f64>,
    /// Multiplier of the E ≥ E^min side (overdischarge).
    pub mu_lower: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub imbalance_hat: Vec<f64>,
    /// Local imbalance at the previous iteration.
    pub imbalance: Vec<f64>,
}

/// One bus: private data plus iterate state.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    id: u32,
    role: Role,
    demand: Vec<f64>,
    renewable: Vec<f64>,
    desd: Option<DesdSpec>,
    pub state: BusState,
}

impl Bus {
    /// Bus initialized with zero primals and duals, λ̂ = 0 and ΔP̂ = ΔP.
    pub fn new(agent: &AgentSpec, horizon: usize) -> Self {
        let owned = |on: bool| if on { vec![0.0; horizon] } else { Vec::new() };
        let is_grid = agent.role == Role::Grid;
        let is_active = agent.role == Role::Active;
        let mut bus = Self {
            id: agent.id,
            role: agent.role,
            demand: (0..horizon).map(|t| agent.demand(t)).collect(),
            renewable: (0..horizon).map(|t| agent.renewable(t)).collect(),
            desd: agent.desd,
            state: BusState {
                grid_buy: owned(is_grid),
                grid_sell: owned(is_grid),
                desd_power: owned(is_active),
                mu_upper: owned(is_active),
                mu_lower: owned(is_active),
                lambda_hat: vec![0.0; horizon],
                imbalance_hat: Vec::new(),
                imbalance: Vec::new(),
            },
        };
        let imbalance: Vec<f64> = (0..horizon).map(|t| bus.local_imbalance(t)).collect();
        bus.state.imbalance_hat = imbalance.clone();
        bus.state.imbalance = imbalance;
        bus
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// ΔP_i(t) from the bus's current primals.
    pub fn local_imbalance(&self, t: usize) -> f64 {
        match self.role {
            Role::Passive => self.demand[t],
            Role::Active => self.demand[t] - self.state.desd_power[t] - self.renewable[t],
            Role::Grid => -(self.state.grid_buy[t] - self.state.grid_sell[t]),
        }
    }

    pub fn message(&self) -> Message {
        Message { lambda_hat: self.state.lambda_hat.clone(), imbalance_hat: self.state.imbalance_hat.clone() }
    }

    /// Signed energy margins `(E(t) − E^max, E^min − E(t))` of the own
    /// trajectory; positive entries are violations.
    pub fn energy_margins(&self, dt: f64) -> (Vec<f64>, Vec<f64>) {
        let Some(desd) = self.desd else {
            return (Vec::new(), Vec::new());
        };
        let mut cumulative = 0.0;
        self.state
            .desd_power
            .iter()
            .map(|p| {
                cumulative += p * dt;
                (desd.e0_kwh - desd.emax_kwh - cumulative, desd.emin_kwh - desd.e0_kwh + cumulative)
            })
            .unzip()
    }

    /// Overcharge and overdischarge amounts `(ΔP₁(t), ΔP₂(t))` of the own trajectory.
    pub fn energy_violations(&self, dt: f64) -> (Vec<f64>, Vec<f64>) {
        let (over, under) = self.energy_margins(dt);
        (over.into_iter().map(|v| v.max(0.0)).collect(), under.into_iter().map(|v| v.max(0.0)).collect())
    }

    /// Gradient of the augmented Lagrangian with respect to the bus's own
    /// primals, with λ(t) and ΔP(t) replaced by the local estimates.
    /// Returns `(∂/∂P⁺, ∂/∂P⁻)` for the grid node and `(∂/∂P_B, [])` for active users.
    pub fn gradient(&self, public: &PublicInfo, cfg: &CodesConfig) -> (Vec<f64>, Vec<f64>) {
        let s = &self.state;
        let dt = public.dt;
        match self.role {
            Role::Passive => (Vec::new(), Vec::new()),
            Role::Grid => (0..public.horizon)
                .map(|t| {
                    let pull = s.lambda_hat[t] + cfg.rho * s.imbalance_hat[t];
                    (public.tariff.buy[t] * dt - pull, -public.tariff.sell[t] * dt + pull)
                })
                .unzip(),
            Role::Active => {
                let (over, under) = self.energy_margins(dt);
                let force = |mu: f64, g: f64| match cfg.energy_rule {
                    EnergyRule::Clamped if g > 0.0 => mu + cfg.rho * g,
                    EnergyRule::Clamped => 0.0,
                    EnergyRule::Multiplier => (mu + cfg.rho * g).max(0.0),
                };
                // Σ_{τ≥t} as a suffix sum
                let mut suffix = 0.0;
                let mut grad = vec![0.0; public.horizon];
                for t in (0..public.horizon).rev() {
                    suffix += dt * (force(s.mu_lower[t], under[t]) - force(s.mu_upper[t], over[t]));
                    grad[t] = -s.lambda_hat[t] - cfg.rho * s.imbalance_hat[t] + suffix;
                }
                (grad, Vec::new())
            }
        }
    }
}

/// Gradient step on the bus's primals followed by projection onto their boxes.
/// Returns the largest absolute change.
pub fn primal_step(bus: &mut Bus, public: &PublicInfo, cfg: &CodesConfig) -> f64 {
    let (g0, g1) = bus.gradient(public, cfg);
    let mut largest = 0.0f64;
    let mut apply = |values: &mut [f64], grad: &[f64], step: f64, lo: f64, hi: f64| {
        for (v, g) in values.iter_mut().zip(grad) {
            let next = (*v - step * g).clamp(lo, hi);
            largest = largest.max((next - *v).abs());
            *v = next;
        }
    };
    match bus.role {
        Role::Passive => {}
        Role::Grid => {
            apply(&mut bus.state.grid_buy, &g0, cfg.xi1_grid, 0.0, public.p_grid_max);
            apply(&mut bus.state.grid_sell, &g1, cfg.xi1_grid, 0.0, public.p_grid_max);
        }
        Role::Active => {
            let desd = bus.desd.expect("active bus owns storage");
            apply(&mut bus.state.desd_power, &g0, cfg.xi1_desd, -desd.p_charge_max_kw, desd.p_discharge_max_kw);
        }
    }
    largest
}

/// Projected ascent on the storage multipliers, `μ ← [μ + ξ₂ ΔP]⁺`, with ΔP
/// the clamped violation or the signed margin depending on the energy rule.
pub fn dual_step(bus: &mut Bus, public: &PublicInfo, cfg: &CodesConfig) {
    if bus.role != Role::Active {
        return;
    }
    let (over, under) = match cfg.energy_rule {
        EnergyRule::Clamped => bus.energy_violations(public.dt),
        EnergyRule::Multiplier => bus.energy_margins(public.dt),
    };
    for t in 0..public.horizon {
        bus.state.mu_upper[t] = (bus.state.mu_upper[t] + cfg.xi2 * over[t]).max(0.0);
        bus.state.mu_lower[t] = (bus.state.mu_lower[t] + cfg.xi2 * under[t]).max(0.0);
    }
}

/// One synchronous exchange: every bus reads its neighbours' previous
/// estimates and folds in the change of its own local imbalance.
///
/// `buses` must be in the graph's node order.
pub fn consensus_update(buses: &mut [Bus], graph: &CommGraph, cfg: &CodesConfig) {
    let outbox: Vec<Message> = buses.iter().map(Bus::message).collect();
    for (i, bus) in buses.iter_mut().enumerate() {
        let horizon = bus.state.lambda_hat.len();
        let own = &outbox[i];
        let current: Vec<f64> = (0..horizon).map(|t| bus.local_imbalance(t)).collect();
        for t in 0..horizon {
            let mut lambda = own.lambda_hat[t] + cfg.xi3 * own.imbalance_hat[t];
            let mut imbalance = own.imbalance_hat[t] + current[t] - bus.state.imbalance[t];
            for &(j, w) in graph.neighbors(i) {
                lambda += w * (outbox[j].lambda_hat[t] - own.lambda_hat[t]);
                imbalance += w * (outbox[j].imbalance_hat[t] - own.imbalance_hat[t]);
            }
            bus.state.lambda_hat[t] = lambda;
            bus.state.imbalance_hat[t] = imbalance;
        }
        bus.state.imbalance = current;
    }
}

/// Per-iteration observability record. Computed by the harness from global
/// state; no bus ever reads it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub cost_estimate: f64,
    pub max_imbalance: f64,
    pub consensus_disagreement: f64,
    pub primal_step_norm: f64,
}

pub type ConvergenceTrace = Vec<TraceRow>;

#[derive(Debug, Clone, PartialEq)]
pub struct CodesRun {
    pub schedule: PowerSchedule,
    /// Bill of the netted final schedule.
    pub cost: f64,
    pub trace: ConvergenceTrace,
    pub iterations: usize,
    pub converged: bool,
}

/// A network of buses wired to a communication graph.
#[derive(Debug, Clone)]
pub struct CodesNetwork {
    public: PublicInfo,
    graph: CommGraph,
    buses: Vec<Bus>,
    iteration: usize,
}

impl CodesNetwork {
    pub fn new(scenario: &Scenario) -> Self {
        let graph = scenario.graph().clone();
        let buses = graph
            .node_ids()
            .iter()
            .map(|&id| Bus::new(scenario.agent(id).expect("graph nodes are agents"), scenario.horizon()))
            .collect();
        Self { public: PublicInfo::of(scenario), graph, buses, iteration: 0 }
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One round: local primal and dual steps on every bus, then one message
    /// exchange. Returns the largest primal change.
    pub fn step(&mut self, cfg: &CodesConfig) -> f64 {
        let mut largest = 0.0f64;
        for bus in &mut self.buses {
            largest = largest.max(primal_step(bus, &self.public, cfg));
            dual_step(bus, &self.public, cfg);
        }
        consensus_update(&mut self.buses, &self.graph, cfg);
        self.iteration += 1;
        largest
    }

    /// Global imbalance ΔP(t) = Σ_i ΔP_i(t).
    pub fn global_imbalance(&self) -> Vec<f64> {
        (0..self.public.horizon).map(|t| self.buses.iter().map(|b| b.local_imbalance(t)).sum()).collect()
    }

    /// max_t |Σ_i ΔP̂_i(t) − Σ_i ΔP_i(t)|; zero up to rounding under matched initialization.
    pub fn imbalance_mass_gap(&self) -> f64 {
        let global = self.global_imbalance();
        (0..self.public.horizon)
            .map(|t| (self.buses.iter().map(|b| b.state.imbalance_hat[t]).sum::<f64>() - global[t]).abs())
            .fold(0.0, f64::max)
    }

    /// max_t of the spread of ΔP̂_i(t) across buses.
    pub fn disagreement(&self) -> f64 {
        (0..self.public.horizon)
            .map(|t| spread(&self.buses.iter().map(|b| b.state.imbalance_hat[t]).collect::<Vec<_>>()))
            .fold(0.0, f64::max)
    }

    /// Schedule assembled from bus-local primals, before netting.
    pub fn schedule(&self) -> PowerSchedule {
        let grid = self.buses.iter().find(|b| b.role == Role::Grid).expect("network has a grid bus");
        PowerSchedule {
            dt: self.public.dt,
            grid_buy: grid.state.grid_buy.clone(),
            grid_sell: grid.state.grid_sell.clone(),
            desd: self
                .buses
                .iter()
                .filter(|b| b.role == Role::Active)
                .map(|b| DesdTrajectory { agent: b.id, power_kw: b.state.desd_power.clone() })
                .collect(),
        }
    }

    fn trace_row(&self, step_norm: f64) -> TraceRow {
        let grid = self.buses.iter().find(|b| b.role == Role::Grid).expect("network has a grid bus");
        let tariff = &self.public.tariff;
        let cost_estimate = (0..self.public.horizon)
            .map(|t| (tariff.buy[t] * grid.state.grid_buy[t] - tariff.sell[t] * grid.state.grid_sell[t]) * self.public.dt)
            .sum();
        TraceRow {
            iter: self.iteration,
            cost_estimate,
            max_imbalance: self.global_imbalance().iter().fold(0.0, |m, v| m.max(v.abs())),
            consensus_disagreement: self.disagreement(),
            primal_step_norm: step_norm,
        }
    }
}

/// Runs CoDES until the imbalance and primal step tolerances are met or
/// `max_iters` is exhausted.
pub fn run_codes(scenario: &Scenario, cfg: &CodesConfig) -> Result<CodesRun, CodesError> {
    cfg.validate().map_err(CodesError::Config)?;
    let mut network = CodesNetwork::new(scenario);
    let mut trace = Vec::new();
    let mut converged = false;
    while network.iteration() < cfg.max_iters {
        let step = network.step(cfg);
        let row = network.trace_row(step);
        trace.push(row);
        if !row.cost_estimate.is_finite() || !row.max_imbalance.is_finite() {
            break;
        }
        if row.max_imbalance < cfg.tol_balance && row.primal_step_norm < cfg.tol_step {
            converged = true;
            break;
        }
    }
    let schedule = network.schedule().netted();
    let cost = schedule.cost(scenario.tariff());
    let run = CodesRun { schedule, cost, trace, iterations: network.iteration(), converged };
    if converged {
        Ok(run)
    } else {
        Err(CodesError::NotConverged(Box::new(run)))
    }
}
