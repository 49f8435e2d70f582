//! Problem instance: agents, tariff, grid limit and communication graph.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::CodesConfig;
use crate::graph::{metropolis_weights, CommGraph};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Passive,
    Active,
    Grid,
}

/// Time-of-use buy and sell prices, currency per kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    pub buy: Vec<f64>,
    pub sell: Vec<f64>,
}

/// Battery (DESD) parameters. Positive power discharges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesdSpec {
    pub e0_kwh: f64,
    pub emin_kwh: f64,
    pub emax_kwh: f64,
    pub p_charge_max_kw: f64,
    pub p_discharge_max_kw: f64,
}

// Charge rating defaults to the discharge rating when omitted.
impl<'de> Deserialize<'de> for DesdSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            e0_kwh: f64,
            emin_kwh: f64,
            emax_kwh: f64,
            p_charge_max_kw: Option<f64>,
            p_discharge_max_kw: f64,
        }
        let raw = Raw::deserialize(d)?;
        Ok(DesdSpec {
            e0_kwh: raw.e0_kwh,
            emin_kwh: raw.emin_kwh,
            emax_kwh: raw.emax_kwh,
            p_charge_max_kw: raw.p_charge_max_kw.unwrap_or(raw.p_discharge_max_kw),
            p_discharge_max_kw: raw.p_discharge_max_kw,
        })
    }
}

impl DesdSpec {
    /// Symmetric rating, the fixture default.
    pub fn symmetric(e0_kwh: f64, emin_kwh: f64, emax_kwh: f64, p_max_kw: f64) -> Self {
        Self { e0_kwh, emin_kwh, emax_kwh, p_charge_max_kw: p_max_kw, p_discharge_max_kw: p_max_kw }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: u32,
    pub role: Role,
    /// Missing or empty means zero at every step.
    #[serde(default)]
    pub demand_kw: Vec<f64>,
    #[serde(default)]
    pub renewable_kw: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desd: Option<DesdSpec>,
}

impl AgentSpec {
    pub fn demand(&self, t: usize) -> f64 {
        self.demand_kw.get(t).copied().unwrap_or(0.0)
    }

    pub fn renewable(&self, t: usize) -> f64 {
        self.renewable_kw.get(t).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub edges: Vec<[u32; 2]>,
}

/// On-disk layout of a scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub horizon: usize,
    pub dt_hours: f64,
    pub p_grid_max_kw: f64,
    pub tariff: Tariff,
    pub agents: Vec<AgentSpec>,
    pub graph: GraphSpec,
    /// CoDES hyperparameters tuned for this instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codes: Option<CodesConfig>,
}

/// A validated problem instance. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    horizon: usize,
    dt: f64,
    p_grid_max: f64,
    agents: Vec<AgentSpec>,
    tariff: Tariff,
    graph: CommGraph,
    codes: Option<CodesConfig>,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    Scenario::from_file(file)
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        let ScenarioFile { horizon, dt_hours, p_grid_max_kw, tariff, mut agents, graph, codes } = file;
        if horizon < 1 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        if !(dt_hours.is_finite() && dt_hours > 0.0) {
            return Err(invalid("dt_hours", "must be positive"));
        }
        if !(p_grid_max_kw.is_finite() && p_grid_max_kw > 0.0) {
            return Err(invalid("p_grid_max_kw", "must be positive"));
        }
        validate_tariff(&tariff, horizon)?;

        let mut grid_count = 0;
        for (k, agent) in agents.iter_mut().enumerate() {
            let field = format!("agents[{k}]");
            for (name, series) in [("demand_kw", &mut agent.demand_kw), ("renewable_kw", &mut agent.renewable_kw)] {
                if series.is_empty() {
                    *series = vec![0.0; horizon];
                }
                if series.len() != horizon {
                    return Err(invalid(
                        format!("{field}.{name}"),
                        format!("has {} entries, expected {horizon}", series.len()),
                    ));
                }
                if let Some(t) = series.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(invalid(format!("{field}.{name}[{t}]"), "must be finite and non-negative"));
                }
            }
            let has_renewable = agent.renewable_kw.iter().any(|&v| v != 0.0);
            match agent.role {
                Role::Passive => {
                    if agent.desd.is_some() {
                        return Err(invalid(format!("{field}.desd"), "passive agents cannot own storage"));
                    }
                    if has_renewable {
                        return Err(invalid(format!("{field}.renewable_kw"), "passive agents have no generation"));
                    }
                }
                Role::Active => {
                    let Some(desd) = &agent.desd else {
                        return Err(invalid(format!("{field}.desd"), "active agents need a storage block"));
                    };
                    validate_desd(desd, &format!("{field}.desd"))?;
                }
                Role::Grid => {
                    grid_count += 1;
                    if agent.desd.is_some() {
                        return Err(invalid(format!("{field}.desd"), "the grid node has no storage"));
                    }
                    if has_renewable || agent.demand_kw.iter().any(|&v| v != 0.0) {
                        return Err(invalid(field.clone(), "the grid node carries no demand or generation"));
                    }
                }
            }
        }
        if grid_count != 1 {
            return Err(invalid("agents", format!("exactly one grid agent required, found {grid_count}")));
        }
        if agents.len() < 2 {
            return Err(invalid("agents", "at least one user besides the grid is required"));
        }
        let ids: Vec<u32> = agents.iter().map(|a| a.id).collect();
        for (k, id) in ids.iter().enumerate() {
            if ids[..k].contains(id) {
                return Err(invalid(format!("agents[{k}].id"), format!("duplicate id {id}")));
            }
        }

        let edges: Vec<(u32, u32)> = graph.edges.iter().map(|e| (e[0], e[1])).collect();
        let graph = metropolis_weights(&edges, &ids).map_err(|e| invalid("graph.edges", e.to_string()))?;

        if let Some(cfg) = &codes {
            cfg.validate().map_err(|reason| invalid("codes", reason))?;
        }

        Ok(Self { horizon, dt: dt_hours, p_grid_max: p_grid_max_kw, agents, tariff, graph, codes })
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            horizon: self.horizon,
            dt_hours: self.dt,
            p_grid_max_kw: self.p_grid_max,
            tariff: self.tariff.clone(),
            agents: self.agents.clone(),
            graph: GraphSpec { edges: self.graph.edges().iter().map(|&(a, b)| [a, b]).collect() },
            codes: self.codes.clone(),
        }
    }

    /// Pretty-printed scenario document; parsing it yields an identical scenario.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes")
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn p_grid_max(&self) -> f64 {
        self.p_grid_max
    }

    pub fn tariff(&self) -> &Tariff {
        &self.tariff
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    /// Tuned CoDES hyperparameters shipped with the scenario, if any.
    pub fn codes_config(&self) -> Option<&CodesConfig> {
        self.codes.as_ref()
    }

    /// All agents including the grid node, in file order.
    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    /// Demand-side agents (everyone but the grid node), in file order.
    pub fn users(&self) -> impl Iterator<Item = &AgentSpec> {
        self.agents.iter().filter(|a| a.role != Role::Grid)
    }

    pub fn active_agents(&self) -> impl Iterator<Item = &AgentSpec> {
        self.agents.iter().filter(|a| a.role == Role::Active)
    }

    pub fn grid_agent(&self) -> &AgentSpec {
        self.agents.iter().find(|a| a.role == Role::Grid).expect("validated scenario has a grid agent")
    }

    pub fn agent(&self, id: u32) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.id == id)
    }

    /// Number of demand-side agents `r`.
    pub fn num_users(&self) -> usize {
        self.agents.len() - 1
    }

    pub fn total_demand(&self, t: usize) -> f64 {
        self.agents.iter().map(|a| a.demand(t)).sum()
    }

    pub fn total_renewable(&self, t: usize) -> f64 {
        self.agents.iter().map(|a| a.renewable(t)).sum()
    }

    /// Copy with a different tariff; the tariff is re-validated.
    pub fn with_tariff(&self, tariff: Tariff) -> Result<Self, ScenarioError> {
        let mut file = self.to_file();
        file.tariff = tariff;
        Self::from_file(file)
    }

    pub fn with_codes_config(&self, codes: Option<CodesConfig>) -> Result<Self, ScenarioError> {
        let mut file = self.to_file();
        file.codes = codes;
        Self::from_file(file)
    }
}

fn validate_tariff(tariff: &Tariff, horizon: usize) -> Result<(), ScenarioError> {
    for (name, series) in [("tariff.buy", &tariff.buy), ("tariff.sell", &tariff.sell)] {
        if series.len() != horizon {
            return Err(invalid(name, format!("has {} entries, expected {horizon}", series.len())));
        }
        if let Some(t) = series.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid(format!("{name}[{t}]"), "prices must be finite and non-negative"));
        }
    }
    if let Some(t) = (0..horizon).find(|&t| tariff.sell[t] > tariff.buy[t]) {
        return Err(invalid(
            format!("tariff.sell[{t}]"),
            format!("sell price {} exceeds buy price {}", tariff.sell[t], tariff.buy[t]),
        ));
    }
    Ok(())
}

fn validate_desd(desd: &DesdSpec, field: &str) -> Result<(), ScenarioError> {
    let all = [desd.e0_kwh, desd.emin_kwh, desd.emax_kwh, desd.p_charge_max_kw, desd.p_discharge_max_kw];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(invalid(field, "all storage parameters must be finite"));
    }
    if !(desd.emin_kwh <= desd.e0_kwh && desd.e0_kwh <= desd.emax_kwh) {
        return Err(invalid(format!("{field}.e0_kwh"), "requires emin <= e0 <= emax"));
    }
    if desd.p_charge_max_kw <= 0.0 {
        return Err(invalid(format!("{field}.p_charge_max_kw"), "must be positive"));
    }
    if desd.p_discharge_max_kw <= 0.0 {
        return Err(invalid(format!("{field}.p_discharge_max_kw"), "must be positive"));
    }
    Ok(())
}

/// Two-level time-of-use tariff. `peak_hours` are 1-based step numbers.
pub fn synth_tariff(
    base: f64,
    peak_hours: &[usize],
    peak_multiplier: f64,
    sell_ratio: f64,
    horizon: usize,
) -> Result<Tariff, ScenarioError> {
    if !(base.is_finite() && base >= 0.0) {
        return Err(invalid("base", "must be finite and non-negative"));
    }
    if !(sell_ratio > 0.0 && sell_ratio <= 1.0) {
        return Err(invalid("sell_ratio", "must lie in (0, 1]"));
    }
    if !(peak_multiplier.is_finite() && peak_multiplier >= 1.0) {
        return Err(invalid("peak_multiplier", "must be at least 1"));
    }
    if let Some(&h) = peak_hours.iter().find(|&&h| h == 0 || h > horizon) {
        return Err(invalid("peak_hours", format!("hour {h} outside 1..={horizon}")));
    }
    let buy: Vec<f64> = (1..=horizon)
        .map(|h| if peak_hours.contains(&h) { base * peak_multiplier } else { base })
        .collect();
    let sell = buy.iter().map(|p| sell_ratio * p).collect();
    Ok(Tariff { buy, sell })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn field_of(err: ScenarioError) -> String {
        match err {
            ScenarioError::Invalid { field, .. } => field,
            other => panic!("expected a validation error, got {other}"),
        }
    }

    #[test]
    fn three_agent_storage_parameters() {
        let s = fixtures::three_agent();
        assert_eq!((s.num_users(), s.horizon(), s.dt()), (3, 24, 1.0));
        let d1 = s.agent(1).unwrap().desd.unwrap();
        assert_eq!((d1.e0_kwh, d1.emin_kwh, d1.emax_kwh, d1.p_discharge_max_kw), (2.8, 2.8, 7.0, 3.3));
        let d3 = s.agent(3).unwrap().desd.unwrap();
        assert_eq!((d3.e0_kwh, d3.emin_kwh, d3.emax_kwh, d3.p_discharge_max_kw), (2.8, 2.8, 10.0, 4.3));
        assert_eq!(s.agent(2).unwrap().role, Role::Passive);
        assert_eq!(s.grid_agent().id, 4);
        for t in 0..24 {
            assert!((s.tariff().sell[t] - 0.8 * s.tariff().buy[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn passive_with_storage_rejected() {
        let mut file = fixtures::three_agent().to_file();
        file.agents[1].desd = Some(DesdSpec::symmetric(1.0, 0.0, 2.0, 1.0));
        assert_eq!(field_of(Scenario::from_file(file).unwrap_err()), "agents[1].desd");
    }

    #[test]
    fn sell_above_buy_rejected() {
        let mut file = fixtures::three_agent().to_file();
        file.tariff.sell[4] = file.tariff.buy[4] + 0.01;
        assert_eq!(field_of(Scenario::from_file(file).unwrap_err()), "tariff.sell[4]");
    }

    #[test]
    fn structural_errors() {
        let base = fixtures::three_agent().to_file();

        let mut two_grids = base.clone();
        two_grids.agents[1] = AgentSpec { role: Role::Grid, demand_kw: vec![0.0; 24], ..two_grids.agents[1].clone() };
        assert_eq!(field_of(Scenario::from_file(two_grids).unwrap_err()), "agents");

        let mut dup = base.clone();
        dup.agents[1].id = 1;
        assert_eq!(field_of(Scenario::from_file(dup).unwrap_err()), "agents[1].id");

        let mut short = base.clone();
        short.agents[0].demand_kw.pop();
        assert_eq!(field_of(Scenario::from_file(short).unwrap_err()), "agents[0].demand_kw");

        let mut split = base.clone();
        split.graph.edges = vec![[1, 2], [3, 4]];
        assert_eq!(field_of(Scenario::from_file(split).unwrap_err()), "graph.edges");

        let mut e0 = base.clone();
        e0.agents[0].desd.as_mut().unwrap().e0_kwh = 1.0;
        assert_eq!(field_of(Scenario::from_file(e0).unwrap_err()), "agents[0].desd.e0_kwh");

        let mut dt = base;
        dt.dt_hours = 0.0;
        assert_eq!(field_of(Scenario::from_file(dt).unwrap_err()), "dt_hours");
    }

    #[test]
    fn malformed_text() {
        assert!(matches!(parse_scenario("{"), Err(ScenarioError::Parse(_))));
        assert!(matches!(parse_scenario(r#"{"horizon": 1, "bogus": 2}"#), Err(ScenarioError::Parse(_))));
        assert!(matches!(load_scenario("/nonexistent/scenario.json"), Err(ScenarioError::Io { .. })));
    }

    #[test]
    fn charge_rating_defaults_to_discharge() {
        let d: DesdSpec =
            serde_json::from_str(r#"{"e0_kwh": 1, "emin_kwh": 0, "emax_kwh": 2, "p_discharge_max_kw": 1.5}"#).unwrap();
        assert_eq!(d.p_charge_max_kw, 1.5);
    }

    #[test]
    fn synth_tariff_examples() {
        let t = synth_tariff(0.10, &[14, 15, 16, 17, 18], 2.0, 0.8, 24).unwrap();
        for h in 1..=24 {
            let (buy, sell) = (t.buy[h - 1], t.sell[h - 1]);
            if (14..=18).contains(&h) {
                assert_eq!(buy, 0.2);
                assert!((sell - 0.16).abs() < 1e-15);
            } else {
                assert_eq!(buy, 0.1);
            }
        }
        let equal = synth_tariff(0.10, &[3], 2.0, 1.0, 4).unwrap();
        assert_eq!(equal.buy, equal.sell);
        let flat = synth_tariff(0.10, &[], 2.0, 0.8, 4).unwrap();
        assert!(flat.buy.iter().all(|&p| p == 0.1));

        assert!(synth_tariff(0.1, &[], 0.5, 0.8, 4).is_err());
        assert!(synth_tariff(0.1, &[], 2.0, 0.0, 4).is_err());
        assert!(synth_tariff(0.1, &[5], 2.0, 0.8, 4).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = fixtures::three_agent();
        assert_eq!(parse_scenario(&s.to_json()).unwrap(), s);
    }
}
