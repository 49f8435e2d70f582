//! Randomized scenario generation and brute-force oracles.
//!
//! The oracles here deliberately share no code with the simplex solver or
//! the social LP builder, so they can check both.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lp::{LinearProgram, LpStatus};
use crate::oracle::{DesdTrajectory, PowerSchedule};
use crate::scenario::{AgentSpec, DesdSpec, GraphSpec, Role, Scenario, ScenarioFile, Tariff};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("no discretized trajectory is feasible")]
    NoFeasiblePoint,
    #[error("invalid generator spec: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFamily {
    Path,
    Ring,
    Star,
    Complete,
    RandomConnected,
}

impl GraphFamily {
    pub const ALL: [GraphFamily; 5] =
        [GraphFamily::Path, GraphFamily::Ring, GraphFamily::Star, GraphFamily::Complete, GraphFamily::RandomConnected];

    /// Edge list over `nodes`, in the given node order.
    pub fn edges(self, nodes: &[u32], rng: &mut impl Rng) -> Vec<[u32; 2]> {
        let n = nodes.len();
        let mut edges = Vec::new();
        match self {
            GraphFamily::Path => edges.extend(nodes.windows(2).map(|w| [w[0], w[1]])),
            GraphFamily::Ring => {
                edges.extend(nodes.windows(2).map(|w| [w[0], w[1]]));
                if n > 2 {
                    edges.push([nodes[n - 1], nodes[0]]);
                }
            }
            GraphFamily::Star => edges.extend(nodes[1..].iter().map(|&v| [nodes[0], v])),
            GraphFamily::Complete => {
                for i in 0..n {
                    for j in i + 1..n {
                        edges.push([nodes[i], nodes[j]]);
                    }
                }
            }
            GraphFamily::RandomConnected => {
                // random spanning tree plus extra chords
                for k in 1..n {
                    let parent = nodes[rng.gen_range(0..k)];
                    edges.push([parent, nodes[k]]);
                }
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.gen_bool(0.3) {
                            edges.push([nodes[i], nodes[j]]);
                        }
                    }
                }
            }
        }
        edges
    }
}

/// Ranges for [`gen_scenario`]. All ranges are inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub users: (usize, usize),
    pub horizon: (usize, usize),
    /// Per-step demand of each user, kW.
    pub demand_kw: (f64, f64),
    /// Peak renewable output of an active user, kW.
    pub renewable_peak_kw: (f64, f64),
    /// Probability that a user is active.
    pub active_share: f64,
    pub capacity_kwh: (f64, f64),
    pub rate_kw: (f64, f64),
    pub base_price: (f64, f64),
    pub peak_multiplier: (f64, f64),
    pub sell_ratio: (f64, f64),
    pub graphs: Vec<GraphFamily>,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            users: (1, 4),
            horizon: (2, 8),
            demand_kw: (0.0, 3.0),
            renewable_peak_kw: (0.0, 4.0),
            active_share: 0.5,
            capacity_kwh: (1.0, 8.0),
            rate_kw: (0.5, 3.0),
            base_price: (0.05, 0.15),
            peak_multiplier: (1.0, 3.0),
            sell_ratio: (0.5, 1.0),
            graphs: GraphFamily::ALL.to_vec(),
        }
    }
}

impl GenSpec {
    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: &str| Err(HarnessError::Spec(msg.into()));
        if self.users.0 < 1 || self.users.0 > self.users.1 {
            return bad("users range must be non-empty and start at 1 or more");
        }
        if self.horizon.0 < 1 || self.horizon.0 > self.horizon.1 {
            return bad("horizon range must be non-empty and start at 1 or more");
        }
        if !(0.0..=1.0).contains(&self.active_share) {
            return bad("active_share must lie in [0, 1]");
        }
        if self.graphs.is_empty() {
            return bad("at least one graph family is required");
        }
        let ranges = [
            self.demand_kw,
            self.renewable_peak_kw,
            self.capacity_kwh,
            self.rate_kw,
            self.base_price,
            self.peak_multiplier,
            self.sell_ratio,
        ];
        if ranges.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi)) {
            return bad("numeric ranges must be finite, non-negative and ordered");
        }
        if self.rate_kw.0 <= 0.0 || self.peak_multiplier.0 < 1.0 || self.sell_ratio.0 <= 0.0 || self.sell_ratio.1 > 1.0 {
            return bad("rates must be positive, multipliers >= 1, sell ratios in (0, 1]");
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Deterministic random scenario. The grid limit is set with enough slack
/// that every schedule built from stand-alone solutions stays within it.
pub fn gen_scenario(spec: &GenSpec, seed: u64) -> Result<Scenario, HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = rng.gen_range(spec.users.0..=spec.users.1);
    let horizon = rng.gen_range(spec.horizon.0..=spec.horizon.1);

    let mut agents = Vec::with_capacity(users + 1);
    for id in 1..=users as u32 {
        let demand_kw: Vec<f64> = (0..horizon).map(|_| round2(uniform(&mut rng, spec.demand_kw))).collect();
        if rng.gen_bool(spec.active_share) {
            let peak = uniform(&mut rng, spec.renewable_peak_kw);
            // half-sine daylight bump centred on the horizon
            let renewable_kw = (0..horizon)
                .map(|t| round2(peak * (std::f64::consts::PI * (t as f64 + 0.5) / horizon as f64).sin().max(0.0)))
                .collect();
            let emax = round2(uniform(&mut rng, spec.capacity_kwh));
            let emin = round2(rng.gen_range(0.0..=0.3) * emax);
            let e0 = round2(uniform(&mut rng, (emin, emax)));
            let discharge = round2(uniform(&mut rng, spec.rate_kw)).max(0.01);
            let charge = if rng.gen_bool(0.5) { discharge } else { round2(uniform(&mut rng, spec.rate_kw)).max(0.01) };
            agents.push(AgentSpec {
                id,
                role: Role::Active,
                demand_kw,
                renewable_kw,
                desd: Some(DesdSpec {
                    e0_kwh: e0,
                    emin_kwh: emin,
                    emax_kwh: emax,
                    p_charge_max_kw: charge,
                    p_discharge_max_kw: discharge,
                }),
            });
        } else {
            agents.push(AgentSpec { id, role: Role::Passive, demand_kw, renewable_kw: vec![0.0; horizon], desd: None });
        }
    }
    let grid_id = users as u32 + 1;
    agents.push(AgentSpec {
        id: grid_id,
        role: Role::Grid,
        demand_kw: vec![0.0; horizon],
        renewable_kw: vec![0.0; horizon],
        desd: None,
    });

    let base = uniform(&mut rng, spec.base_price);
    let multiplier = uniform(&mut rng, spec.peak_multiplier);
    let sell_ratio = uniform(&mut rng, spec.sell_ratio);
    let peak_len = (horizon / 4).max(1);
    let peak_start = rng.gen_range(0..=horizon - peak_len);
    let buy: Vec<f64> = (0..horizon)
        .map(|t| if (peak_start..peak_start + peak_len).contains(&t) { base * multiplier } else { base })
        .collect();
    let sell = buy.iter().map(|p| p * sell_ratio).collect();

    let peak = |f: &dyn Fn(&AgentSpec, usize) -> f64| {
        (0..horizon).map(|t| agents.iter().map(|a| f(a, t)).sum::<f64>()).fold(0.0, f64::max)
    };
    let rates: f64 = agents.iter().filter_map(|a| a.desd).map(|d| d.p_charge_max_kw + d.p_discharge_max_kw).sum();
    let p_grid_max = (peak(&|a, t| a.demand(t)) + peak(&|a, t| a.renewable(t)) + rates + 1.0).ceil();

    let mut nodes: Vec<u32> = (1..=grid_id).collect();
    nodes.shuffle(&mut rng);
    let family = *spec.graphs.choose(&mut rng).expect("validated non-empty");
    let edges = family.edges(&nodes, &mut rng);

    let file = ScenarioFile {
        horizon,
        dt_hours: 1.0,
        p_grid_max_kw: p_grid_max,
        tariff: Tariff { buy, sell },
        agents,
        graph: GraphSpec { edges },
        codes: None,
    };
    Ok(Scenario::from_file(file).expect("generator emits valid scenarios"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub cost: f64,
    pub schedule: PowerSchedule,
    /// Number of joint (state, action) transitions evaluated.
    pub evaluated: u64,
}

/// Transitions allowed before [`brute_force_schedule`] refuses an instance.
pub const BRUTE_FORCE_BUDGET: u64 = 1_000_000_000;

/// Exhaustive minimum over every storage trajectory whose powers are
/// multiples of `step_kw`, with grid exchange implied by the power balance.
///
/// Trajectories are searched stage by stage over the lattice of reachable
/// stored energies, which visits every discretized trajectory's cost without
/// materializing all of them. At most two storage devices are supported.
pub fn brute_force_schedule(scenario: &Scenario, step_kw: f64) -> Result<BruteForce, HarnessError> {
    if !(step_kw.is_finite() && step_kw > 0.0) {
        return Err(HarnessError::TooLarge("step must be positive".into()));
    }
    let horizon = scenario.horizon();
    let dt = scenario.dt();
    let devices: Vec<(u32, DesdSpec)> = scenario.active_agents().map(|a| (a.id, a.desd.expect("active"))).collect();
    if devices.len() > 2 {
        return Err(HarnessError::TooLarge(format!("{} storage devices (at most 2)", devices.len())));
    }

    // per device: action range in steps and cumulative-discharge state range
    struct Lattice {
        actions: (i64, i64),
        states: (i64, i64),
    }
    let eps = 1e-9;
    let lattices: Vec<Lattice> = devices
        .iter()
        .map(|(_, d)| Lattice {
            actions: (
                -((d.p_charge_max_kw / step_kw + eps).floor() as i64),
                (d.p_discharge_max_kw / step_kw + eps).floor() as i64,
            ),
            states: (
                ((d.e0_kwh - d.emax_kwh) / (step_kw * dt) - eps).ceil() as i64,
                ((d.e0_kwh - d.emin_kwh) / (step_kw * dt) + eps).floor() as i64,
            ),
        })
        .collect();

    let width = |r: (i64, i64)| (r.1 - r.0 + 1).max(0) as u64;
    let state_count: u64 = lattices.iter().map(|l| width(l.states)).product();
    let action_count: u64 = lattices.iter().map(|l| width(l.actions)).product();
    let work = state_count.saturating_mul(action_count).saturating_mul(horizon as u64);
    if work > BRUTE_FORCE_BUDGET {
        return Err(HarnessError::TooLarge(format!("{work} transitions")));
    }

    // dense state index over the joint lattice
    let dims: Vec<i64> = lattices.iter().map(|l| l.states.1 - l.states.0 + 1).collect();
    let encode = |s: &[i64]| -> usize {
        let mut idx = 0usize;
        for (k, &v) in s.iter().enumerate() {
            idx = idx * dims[k] as usize + (v - lattices[k].states.0) as usize;
        }
        idx
    };
    let decode = |mut idx: usize| -> Vec<i64> {
        let mut s = vec![0i64; dims.len()];
        for k in (0..dims.len()).rev() {
            s[k] = lattices[k].states.0 + (idx % dims[k] as usize) as i64;
            idx /= dims[k] as usize;
        }
        s
    };
    let joint_actions: Vec<Vec<i64>> = {
        let mut acc = vec![Vec::new()];
        for l in &lattices {
            acc = acc
                .into_iter()
                .flat_map(|prefix| {
                    (l.actions.0..=l.actions.1).map(move |a| {
                        let mut next = prefix.clone();
                        next.push(a);
                        next
                    })
                })
                .collect();
        }
        acc
    };

    let start = vec![0i64; devices.len()];
    if lattices.iter().any(|l| l.states.0 > 0 || l.states.1 < 0) {
        return Err(HarnessError::NoFeasiblePoint);
    }
    let total_states = state_count.max(1) as usize;
    let mut value = vec![f64::INFINITY; total_states];
    value[encode(&start)] = 0.0;
    // back[t][state] = (previous state, action index)
    let mut back: Vec<Vec<(usize, usize)>> = Vec::with_capacity(horizon);
    let mut evaluated = 0u64;
    let tariff = scenario.tariff();
    let p_max = scenario.p_grid_max();

    for t in 0..horizon {
        let net_load = scenario.total_demand(t) - scenario.total_renewable(t);
        let mut next = vec![f64::INFINITY; total_states];
        let mut choice = vec![(usize::MAX, usize::MAX); total_states];
        for (idx, &v) in value.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let state = decode(idx);
            'action: for (a_idx, action) in joint_actions.iter().enumerate() {
                evaluated += 1;
                let mut new_state = state.clone();
                for k in 0..action.len() {
                    new_state[k] += action[k];
                    if new_state[k] < lattices[k].states.0 || new_state[k] > lattices[k].states.1 {
                        continue 'action;
                    }
                }
                let storage: f64 = action.iter().map(|&a| a as f64 * step_kw).sum();
                let exchange = net_load - storage;
                if exchange.abs() > p_max + 1e-12 {
                    continue;
                }
                let stage = if exchange >= 0.0 { tariff.buy[t] * exchange } else { tariff.sell[t] * exchange } * dt;
                let n_idx = encode(&new_state);
                if v + stage < next[n_idx] {
                    next[n_idx] = v + stage;
                    choice[n_idx] = (idx, a_idx);
                }
            }
        }
        value = next;
        back.push(choice);
    }

    let (mut idx, &cost) = value
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(HarnessError::NoFeasiblePoint)?;

    let mut powers = vec![vec![0.0; horizon]; devices.len()];
    for t in (0..horizon).rev() {
        let (prev, a_idx) = back[t][idx];
        for (k, &a) in joint_actions[a_idx].iter().enumerate() {
            powers[k][t] = a as f64 * step_kw;
        }
        idx = prev;
    }
    let mut grid_buy = vec![0.0; horizon];
    let mut grid_sell = vec![0.0; horizon];
    for t in 0..horizon {
        let storage: f64 = powers.iter().map(|p| p[t]).sum();
        let exchange = scenario.total_demand(t) - scenario.total_renewable(t) - storage;
        grid_buy[t] = exchange.max(0.0);
        grid_sell[t] = (-exchange).max(0.0);
    }
    let desd = devices.iter().zip(powers).map(|(&(agent, _), power_kw)| DesdTrajectory { agent, power_kw }).collect();
    Ok(BruteForce { cost, schedule: PowerSchedule { dt, grid_buy, grid_sell, desd }, evaluated })
}

/// Upper bound on `brute − continuous optimum` for a lattice of `step_kw`:
/// every device may be off by one step at every time step, priced at the
/// highest buy price.
pub fn brute_force_error_bound(scenario: &Scenario, step_kw: f64) -> f64 {
    let devices = scenario.active_agents().count() as f64;
    let max_price = scenario.tariff().buy.iter().fold(0.0f64, |m, &p| m.max(p));
    2.0 * step_kw * devices * max_price * scenario.dt() * scenario.horizon() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexOutcome {
    pub status: LpStatus,
    pub value: f64,
    pub vertices_checked: usize,
}

/// Largest number of candidate bases [`enumerate_lp_vertices`] will try.
pub const ENUMERATION_BUDGET: u128 = 5_000_000;
const BOX: f64 = 1e6;

// row·x ≤ rhs, or = rhs when `equality`
struct HalfSpace {
    row: Vec<f64>,
    rhs: f64,
    equality: bool,
}

/// Optimum of `lp` by enumerating basic solutions.
///
/// Feasibility and the optimum come from the vertices of the feasible set
/// (boxed at ±1e6 along directions without a finite bound); unboundedness is
/// decided separately by minimizing the cost over the normalized recession cone.
pub fn enumerate_lp_vertices(lp: &LinearProgram) -> Result<VertexOutcome, HarnessError> {
    lp.validate().map_err(|e| HarnessError::Spec(e.to_string()))?;
    let n = lp.num_vars();
    if n == 0 {
        let feasible = lp.b_ub.iter().all(|&b| b >= -1e-9) && lp.b_eq.iter().all(|&b| b.abs() <= 1e-9);
        let status = if feasible { LpStatus::Optimal } else { LpStatus::Infeasible };
        let value = if feasible { 0.0 } else { f64::INFINITY };
        return Ok(VertexOutcome { status, value, vertices_checked: 0 });
    }
    let unit = |j: usize, sign: f64| {
        let mut r = vec![0.0; n];
        r[j] = sign;
        r
    };

    let mut primal: Vec<HalfSpace> = Vec::new();
    let mut cone: Vec<HalfSpace> = Vec::new();
    for (row, &b) in lp.a_ub.iter().zip(&lp.b_ub) {
        primal.push(HalfSpace { row: row.clone(), rhs: b, equality: false });
        cone.push(HalfSpace { row: row.clone(), rhs: 0.0, equality: false });
    }
    for (row, &b) in lp.a_eq.iter().zip(&lp.b_eq) {
        primal.push(HalfSpace { row: row.clone(), rhs: b, equality: true });
        cone.push(HalfSpace { row: row.clone(), rhs: 0.0, equality: true });
    }
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        let lower = if l.is_finite() { l } else { -BOX };
        let upper = if u.is_finite() { u } else { BOX };
        primal.push(HalfSpace { row: unit(j, -1.0), rhs: -lower, equality: false });
        primal.push(HalfSpace { row: unit(j, 1.0), rhs: upper, equality: false });
        // recession directions, normalized to the unit box
        let d_lo = if l.is_finite() { 0.0 } else { -1.0 };
        let d_hi = if u.is_finite() { 0.0 } else { 1.0 };
        cone.push(HalfSpace { row: unit(j, -1.0), rhs: -d_lo, equality: false });
        cone.push(HalfSpace { row: unit(j, 1.0), rhs: d_hi, equality: false });
    }

    let (best, checked_primal) = min_over_vertices(&primal, &lp.objective)?;
    let Some(value) = best else {
        return Ok(VertexOutcome { status: LpStatus::Infeasible, value: f64::INFINITY, vertices_checked: checked_primal });
    };
    let (ray, checked_cone) = min_over_vertices(&cone, &lp.objective)?;
    let checked = checked_primal + checked_cone;
    if ray.is_some_and(|r| r < -1e-9) {
        return Ok(VertexOutcome { status: LpStatus::Unbounded, value: f64::NEG_INFINITY, vertices_checked: checked });
    }
    Ok(VertexOutcome { status: LpStatus::Optimal, value, vertices_checked: checked })
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

// Minimum of c·x over feasible basic solutions of the half-space system.
fn min_over_vertices(rows: &[HalfSpace], cost: &[f64]) -> Result<(Option<f64>, usize), HarnessError> {
    let n = cost.len();
    let m = rows.len();
    if binomial(m, n) > ENUMERATION_BUDGET {
        return Err(HarnessError::TooLarge(format!("C({m}, {n}) candidate bases")));
    }
    let mut best: Option<f64> = None;
    let mut checked = 0usize;
    let mut subset: Vec<usize> = (0..n).collect();
    if n > m {
        return Ok((None, 0));
    }
    loop {
        checked += 1;
        let a: Vec<Vec<f64>> = subset.iter().map(|&i| rows[i].row.clone()).collect();
        let b: Vec<f64> = subset.iter().map(|&i| rows[i].rhs).collect();
        if let Some(x) = gauss_solve(a, b) {
            let feasible = rows.iter().all(|h| {
                let lhs: f64 = h.row.iter().zip(&x).map(|(r, v)| r * v).sum();
                let scale = 1.0 + h.rhs.abs() + h.row.iter().map(|v| v.abs()).sum::<f64>();
                if h.equality {
                    (lhs - h.rhs).abs() <= 1e-9 * scale
                } else {
                    lhs - h.rhs <= 1e-9 * scale
                }
            });
            if feasible {
                let value: f64 = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(value, |b| b.min(value)));
            }
        }
        // next combination in lexicographic order
        let mut i = n;
        loop {
            if i == 0 {
                return Ok((best, checked));
            }
            i -= 1;
            if subset[i] < m - n + i {
                subset[i] += 1;
                for k in i + 1..n {
                    subset[k] = subset[k - 1] + 1;
                }
                break;
            }
        }
    }
}

// Gaussian elimination with partial pivoting; `None` when singular.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Random small LP with integer data, mixing bound types, equalities,
/// zero right-hand sides (degeneracy) and duplicated rows.
pub fn gen_small_lp(seed: u64) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=6);
    let m_eq = rng.gen_range(0..=2usize.min(n));
    let m_ub = rng.gen_range(0..=8 - m_eq);
    let objective = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
    let mut lp = LinearProgram::new(objective);
    let row = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(-4..=4) as f64).collect::<Vec<f64>>();
    for k in 0..m_ub {
        let r = if k > 0 && rng.gen_bool(0.1) { lp.a_ub[k - 1].clone() } else { row(&mut rng) };
        let b = if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(-3..=8) as f64 };
        lp.add_le(r, b);
    }
    for _ in 0..m_eq {
        let r = row(&mut rng);
        let b = rng.gen_range(-3..=5) as f64;
        lp.add_eq(r, b);
    }
    for j in 0..n {
        let lower = match rng.gen_range(0..10) {
            0..=6 => 0.0,
            7 | 8 => f64::NEG_INFINITY,
            _ => -2.0,
        };
        let upper = if rng.gen_bool(0.4) { rng.gen_range(1..=5) as f64 } else { f64::INFINITY };
        lp.set_bounds(j, lower, upper);
    }
    lp
}
