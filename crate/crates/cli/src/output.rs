use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use gridshare_core::nbs::CostReport;
use gridshare_core::{CodesConfig, Scenario};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Writes through a temporary sibling file and renames it into place, so a
/// reader never sees a half-written file.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut file = fs::File::create(&tmp)?;
    file.write_all(contents.as_bytes())?;
    file.sync_all()?;
    fs::rename(&tmp, path)
}

/// SHA-256 of the compact JSON form of the parsed scenario. Formatting,
/// key order and number spelling in the source file do not affect it.
pub fn scenario_digest(scenario: &Scenario) -> String {
    let canonical = serde_json::to_string(&scenario.to_file()).expect("scenario serializes");
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct CostRow {
    pub agent: u32,
    pub selfish_cost: f64,
    pub allocated_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consumption_cost: Option<f64>,
}

pub fn cost_rows(report: &CostReport) -> Vec<CostRow> {
    report
        .agents
        .iter()
        .enumerate()
        .map(|(k, &agent)| CostRow {
            agent,
            selfish_cost: report.selfish[k],
            allocated_cost: report.allocated[k],
            consumption_cost: report.consumption.as_ref().map(|c| c.costs[k]),
        })
        .collect()
}

/// Summary of one command run, written as `report.json`.
#[derive(Debug, Default, Serialize)]
pub struct RunReport {
    pub command: String,
    pub scenario: String,
    pub scenario_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<CodesConfig>,
    pub outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub social_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_deviation_kw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_table: Option<Vec<CostRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consensus_rounds: Option<usize>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn new(command: &str, scenario_path: &Path, scenario: &Scenario) -> Self {
        Self {
            command: command.into(),
            scenario: scenario_path.display().to_string(),
            scenario_digest: scenario_digest(scenario),
            ..Self::default()
        }
    }

    pub fn output(&mut self, kind: &str, path: &Path) {
        self.outputs.insert(kind.into(), path.display().to_string());
    }

    pub fn write(&self, out_dir: &Path) -> std::io::Result<PathBuf> {
        let path = out_dir.join("report.json");
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        write_atomic(&path, &text)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridshare_core::fixtures;

    #[test]
    fn digest_ignores_formatting() {
        let s = fixtures::three_agent();
        let compact: serde_json::Value = serde_json::from_str(fixtures::THREE_AGENT_JSON).unwrap();
        let reparsed = gridshare_core::parse_scenario(&compact.to_string()).unwrap();
        assert_eq!(scenario_digest(&s), scenario_digest(&reparsed));
        assert_eq!(scenario_digest(&s).len(), 64);
        assert_ne!(scenario_digest(&s), scenario_digest(&fixtures::all_passive()));
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.csv");
        write_atomic(&path, "a\n").unwrap();
        write_atomic(&path, "b\n").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "b\n");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
