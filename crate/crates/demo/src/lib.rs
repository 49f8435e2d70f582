//! Browser demo. Each export takes a scenario as JSON text and returns JSON
//! text, so the page needs no generated bindings beyond plain strings.

use gridshare_core::graph::{consensus_round, ConsensusState};
use gridshare_core::scenario::{synth_tariff, Role};
use gridshare_core::{
    allocate_centralized, disagreement_point, fixtures, parse_scenario, run_codes, solve_social, CodesConfig, CodesError,
    Scenario,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const TRACE_POINTS: usize = 400;
const HISTORY_ROUNDS: usize = 200;

fn err(e: impl ToString) -> String {
    e.to_string()
}

pub fn fixture_text(name: &str) -> Result<String, String> {
    match name {
        "three_agent" => Ok(fixtures::THREE_AGENT_JSON.to_string()),
        "arbitrage_t2" => Ok(fixtures::ARBITRAGE_T2_JSON.to_string()),
        "all_passive" => Ok(fixtures::ALL_PASSIVE_JSON.to_string()),
        other => Err(format!("unknown fixture {other}")),
    }
}

/// Rewires the scenario's communication graph. `star` centres on the grid node.
pub fn with_topology(s: &Scenario, topology: &str) -> Result<Scenario, String> {
    let ids: Vec<u32> = s.agents().iter().map(|a| a.id).collect();
    let n = ids.len();
    let hub = s.grid_agent().id;
    let edges: Vec<[u32; 2]> = match topology {
        "scenario" => return Ok(s.clone()),
        "complete" => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| [ids[i], ids[j]]).collect(),
        "path" => ids.windows(2).map(|w| [w[0], w[1]]).collect(),
        "ring" if n > 2 => ids.windows(2).map(|w| [w[0], w[1]]).chain([[ids[n - 1], ids[0]]]).collect(),
        "ring" => ids.windows(2).map(|w| [w[0], w[1]]).collect(),
        "star" => ids.iter().filter(|&&id| id != hub).map(|&id| [hub, id]).collect(),
        other => return Err(format!("unknown topology {other}")),
    };
    let mut file = s.to_file();
    file.graph.edges = edges;
    Scenario::from_file(file).map_err(err)
}

#[derive(Serialize)]
struct Storage {
    agent: u32,
    power_kw: Vec<f64>,
    energy_kwh: Vec<f64>,
}

#[derive(Serialize)]
struct ScheduleView {
    buy_price: Vec<f64>,
    sell_price: Vec<f64>,
    net_load_kw: Vec<f64>,
    grid_buy_kw: Vec<f64>,
    grid_sell_kw: Vec<f64>,
    storage: Vec<Storage>,
    social_cost: f64,
    agents: Vec<u32>,
    selfish: Vec<f64>,
    allocated: Vec<f64>,
    epsilon: f64,
}

/// Re-prices the scenario with a two-level tariff and solves it centrally.
/// `peak_start..=peak_end` are 1-based steps.
pub fn schedule_json(
    scenario: &str,
    base: f64,
    peak_start: usize,
    peak_end: usize,
    peak_multiplier: f64,
    sell_ratio: f64,
) -> Result<String, String> {
    let s = parse_scenario(scenario).map_err(err)?;
    let peak: Vec<usize> = (peak_start..=peak_end).collect();
    let s = s.with_tariff(synth_tariff(base, &peak, peak_multiplier, sell_ratio, s.horizon()).map_err(err)?).map_err(err)?;
    let sol = solve_social(&s).map_err(err)?;
    let selfish = disagreement_point(&s).map_err(err)?;
    let agents: Vec<u32> = s.users().map(|a| a.id).collect();
    let split = allocate_centralized(&agents, sol.cost, &selfish).map_err(err)?;
    let storage = s
        .active_agents()
        .map(|a| Storage {
            agent: a.id,
            power_kw: sol.schedule.desd_power(a.id).unwrap_or_default().to_vec(),
            energy_kwh: sol.schedule.energy(a.id, a.desd.map_or(0.0, |d| d.e0_kwh)).unwrap_or_default(),
        })
        .collect();
    let view = ScheduleView {
        buy_price: s.tariff().buy.clone(),
        sell_price: s.tariff().sell.clone(),
        net_load_kw: (0..s.horizon()).map(|t| s.total_demand(t) - s.total_renewable(t)).collect(),
        grid_buy_kw: sol.schedule.grid_buy.clone(),
        grid_sell_kw: sol.schedule.grid_sell.clone(),
        storage,
        social_cost: sol.cost,
        agents,
        selfish,
        allocated: split.allocated,
        epsilon: split.epsilon,
    };
    serde_json::to_string(&view).map_err(err)
}

#[derive(Serialize)]
struct CodesView {
    converged: bool,
    iterations: usize,
    cost: f64,
    oracle_cost: f64,
    relative_gap: f64,
    iter: Vec<usize>,
    cost_estimate: Vec<f64>,
    max_imbalance_kw: Vec<f64>,
    disagreement: Vec<f64>,
}

/// Runs CoDES with the given step sizes and returns a thinned trace.
#[allow(clippy::too_many_arguments)]
pub fn codes_json(
    scenario: &str,
    topology: &str,
    rho: f64,
    xi1_grid: f64,
    xi1_desd: f64,
    xi2: f64,
    xi3: f64,
    max_iters: usize,
) -> Result<String, String> {
    let s = with_topology(&parse_scenario(scenario).map_err(err)?, topology)?;
    let cfg = CodesConfig { rho, xi1_grid, xi1_desd, xi2, xi3, max_iters, ..s.codes_config().cloned().unwrap_or_default() };
    let run = match run_codes(&s, &cfg) {
        Ok(run) => run,
        Err(CodesError::NotConverged(run)) => *run,
        Err(e) => return Err(err(e)),
    };
    let oracle = solve_social(&s).map_err(err)?.cost;
    let stride = run.trace.len().div_ceil(TRACE_POINTS).max(1);
    let rows: Vec<_> = run.trace.iter().enumerate().filter(|(k, _)| k % stride == 0 || k + 1 == run.trace.len()).map(|(_, r)| r).collect();
    let view = CodesView {
        converged: run.converged,
        iterations: run.iterations,
        cost: run.cost,
        oracle_cost: oracle,
        relative_gap: (run.cost - oracle).abs() / oracle.abs().max(1e-12),
        iter: rows.iter().map(|r| r.iter).collect(),
        cost_estimate: rows.iter().map(|r| r.cost_estimate).collect(),
        max_imbalance_kw: rows.iter().map(|r| r.max_imbalance).collect(),
        disagreement: rows.iter().map(|r| r.consensus_disagreement).collect(),
    };
    serde_json::to_string(&view).map_err(err)
}

#[derive(Serialize)]
struct BargainView {
    nodes: Vec<u32>,
    /// Node states per round, starting from the initial values.
    history: Vec<Vec<f64>>,
    rounds: usize,
    agents: Vec<u32>,
    selfish: Vec<f64>,
    distributed: Vec<f64>,
    closed_form: Vec<f64>,
}

/// Averaging consensus for the cost split: users start from their stand-alone
/// bill, the grid node from minus the social cost.
pub fn bargain_json(scenario: &str, topology: &str, tol: f64) -> Result<String, String> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err("tolerance must be positive".into());
    }
    let s = with_topology(&parse_scenario(scenario).map_err(err)?, topology)?;
    let social = solve_social(&s).map_err(err)?.cost;
    let selfish = disagreement_point(&s).map_err(err)?;
    let agents: Vec<u32> = s.users().map(|a| a.id).collect();
    let graph = s.graph();
    let initial: Vec<f64> = graph
        .node_ids()
        .iter()
        .map(|&id| match s.agent(id).map(|a| a.role) {
            Some(Role::Grid) => -social,
            _ => selfish[agents.iter().position(|&a| a == id).expect("user")],
        })
        .collect();
    let mut state = ConsensusState::new(initial);
    let mut history = vec![state.values.clone()];
    while state.spread() > tol && state.iteration < 100_000 {
        state = consensus_round(&state, graph).map_err(err)?;
        if history.len() <= HISTORY_ROUNDS {
            history.push(state.values.clone());
        }
    }
    let r = agents.len() as f64;
    let distributed = agents
        .iter()
        .zip(&selfish)
        .map(|(&id, d)| d - (r + 1.0) * state.values[graph.index_of(id).expect("user node")] / r)
        .collect();
    let closed_form = allocate_centralized(&agents, social, &selfish).map_err(err)?.allocated;
    let view = BargainView {
        nodes: graph.node_ids().to_vec(),
        history,
        rounds: state.iteration,
        agents,
        selfish,
        distributed,
        closed_form,
    };
    serde_json::to_string(&view).map_err(err)
}

#[wasm_bindgen]
pub fn fixture(name: &str) -> Result<String, JsValue> {
    fixture_text(name).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn schedule(
    scenario: &str,
    base: f64,
    peak_start: usize,
    peak_end: usize,
    peak_multiplier: f64,
    sell_ratio: f64,
) -> Result<String, JsValue> {
    schedule_json(scenario, base, peak_start, peak_end, peak_multiplier, sell_ratio).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn codes(
    scenario: &str,
    topology: &str,
    rho: f64,
    xi1_grid: f64,
    xi1_desd: f64,
    xi2: f64,
    xi3: f64,
    max_iters: usize,
) -> Result<String, JsValue> {
    codes_json(scenario, topology, rho, xi1_grid, xi1_desd, xi2, xi3, max_iters).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn bargain(scenario: &str, topology: &str, tol: f64) -> Result<String, JsValue> {
    bargain_json(scenario, topology, tol).map_err(|e| JsValue::from_str(&e))
}
