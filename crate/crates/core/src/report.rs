//! CSV layouts for schedules, convergence traces and cost tables.
//!
//! Numbers are written in Rust's shortest round-trip form, so parsing a
//! written file gives back the exact values.

use std::fmt::Write as _;

use thiserror::Error;

use crate::codes::TraceRow;
use crate::nbs::CostReport;
use crate::oracle::{DesdTrajectory, PowerSchedule};
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsvError {
    #[error("empty file")]
    Empty,
    #[error("bad header: {0}")]
    Header(String),
    #[error("line {line}: {reason}")]
    Row { line: usize, reason: String },
}

pub const TRACE_HEADER: &str = "iter,J_est,max_imbalance_kw,consensus_disagreement,primal_step_norm";
pub const COST_HEADER: &str = "agent,selfish_cost,allocated_cost,consumption_cost,epsilon";

pub fn schedule_header(agents: &[u32]) -> String {
    let mut h = String::from("t,P_G_buy_kw,P_G_sell_kw");
    for id in agents {
        let _ = write!(h, ",P_B_{id}_kw");
    }
    for id in agents {
        let _ = write!(h, ",E_{id}_kwh");
    }
    h
}

/// Schedule table with 1-based `t` and stored energy at the end of each step.
pub fn schedule_csv(schedule: &PowerSchedule, scenario: &Scenario) -> String {
    let agents: Vec<u32> = schedule.desd.iter().map(|d| d.agent).collect();
    let energies: Vec<Vec<f64>> = agents
        .iter()
        .map(|&id| {
            let e0 = scenario.agent(id).and_then(|a| a.desd).map_or(0.0, |d| d.e0_kwh);
            schedule.energy(id, e0).expect("agent has a trajectory")
        })
        .collect();
    let mut out = schedule_header(&agents);
    out.push('\n');
    for t in 0..schedule.horizon() {
        let _ = write!(out, "{},{},{}", t + 1, schedule.grid_buy[t], schedule.grid_sell[t]);
        for d in &schedule.desd {
            let _ = write!(out, ",{}", d.power_kw[t]);
        }
        for e in &energies {
            let _ = write!(out, ",{}", e[t]);
        }
        out.push('\n');
    }
    out
}

fn parse_rows(text: &str) -> Result<(Vec<&str>, Vec<Vec<f64>>), CsvError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or(CsvError::Empty)?.split(',').map(str::trim).collect();
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| CsvError::Row { line: k + 2, reason: e.to_string() })?;
        if row.len() != header.len() {
            return Err(CsvError::Row { line: k + 2, reason: format!("{} fields, expected {}", row.len(), header.len()) });
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Parsed schedule table; energies are returned alongside the powers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleTable {
    pub schedule: PowerSchedule,
    pub energy: Vec<(u32, Vec<f64>)>,
}

pub fn parse_schedule_csv(text: &str, dt: f64) -> Result<ScheduleTable, CsvError> {
    let (header, rows) = parse_rows(text)?;
    if header.len() < 3 || header[..3] != ["t", "P_G_buy_kw", "P_G_sell_kw"] || (header.len() - 3) % 2 != 0 {
        return Err(CsvError::Header(header.join(",")));
    }
    let k = (header.len() - 3) / 2;
    let mut agents = Vec::with_capacity(k);
    for j in 0..k {
        let id = header[3 + j]
            .strip_prefix("P_B_")
            .and_then(|s| s.strip_suffix("_kw"))
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| CsvError::Header(header[3 + j].to_string()))?;
        if header[3 + k + j] != format!("E_{id}_kwh") {
            return Err(CsvError::Header(header[3 + k + j].to_string()));
        }
        agents.push(id);
    }
    let column = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<f64>>();
    let schedule = PowerSchedule {
        dt,
        grid_buy: column(1),
        grid_sell: column(2),
        desd: agents.iter().enumerate().map(|(j, &agent)| DesdTrajectory { agent, power_kw: column(3 + j) }).collect(),
    };
    let energy = agents.iter().enumerate().map(|(j, &id)| (id, column(3 + k + j))).collect();
    Ok(ScheduleTable { schedule, energy })
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for row in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.iter, row.cost_estimate, row.max_imbalance, row.consensus_disagreement, row.primal_step_norm
        );
    }
    out
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>, CsvError> {
    let (header, rows) = parse_rows(text)?;
    if header.join(",") != TRACE_HEADER {
        return Err(CsvError::Header(header.join(",")));
    }
    Ok(rows
        .into_iter()
        .map(|r| TraceRow {
            iter: r[0] as usize,
            cost_estimate: r[1],
            max_imbalance: r[2],
            consensus_disagreement: r[3],
            primal_step_norm: r[4],
        })
        .collect())
}

/// One row per agent; the consumption column is empty when not computed.
pub fn cost_table_csv(report: &CostReport) -> String {
    let mut out = String::from(COST_HEADER);
    out.push('\n');
    for (k, id) in report.agents.iter().enumerate() {
        let consumption = report.consumption.as_ref().map(|c| c.costs[k].to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", id, report.selfish[k], report.allocated[k], consumption, report.epsilon);
    }
    out
}

/// Fixed-width rendering of a cost report for terminals.
pub fn cost_table_text(report: &CostReport) -> String {
    let mut out = format!("{:>6} {:>12} {:>12} {:>12} {:>12}\n", "agent", "D_i", "J_i", "consumption", "epsilon");
    for (k, id) in report.agents.iter().enumerate() {
        let consumption = report.consumption.as_ref().map_or("-".to_string(), |c| format!("{:.6}", c.costs[k]));
        let _ = writeln!(
            out,
            "{:>6} {:>12.6} {:>12.6} {:>12} {:>12.6}",
            id, report.selfish[k], report.allocated[k], consumption, report.epsilon
        );
    }
    let _ = writeln!(out, "{:>6} {:>12.6} {:>12.6}", "sum", report.selfish.iter().sum::<f64>(), report.allocated.iter().sum::<f64>());
    let _ = writeln!(out, "social cost J = {:.6}", report.social_cost);
    out
}
