//! Scenarios shipped with the crate, used by tests, the CLI and the demo.

use crate::scenario::{parse_scenario, Scenario};

pub const THREE_AGENT_JSON: &str = include_str!("../fixtures/three_agent.json");
pub const ARBITRAGE_T2_JSON: &str = include_str!("../fixtures/arbitrage_t2.json");
pub const ALL_PASSIVE_JSON: &str = include_str!("../fixtures/all_passive.json");

/// Two active users, one passive user and the grid on a ring, one day in hourly steps.
pub fn three_agent() -> Scenario {
    parse_scenario(THREE_AGENT_JSON).expect("bundled fixture is valid")
}

/// One storage device, two steps, a price spread worth exploiting.
pub fn arbitrage_t2() -> Scenario {
    parse_scenario(ARBITRAGE_T2_JSON).expect("bundled fixture is valid")
}

pub fn all_passive() -> Scenario {
    parse_scenario(ALL_PASSIVE_JSON).expect("bundled fixture is valid")
}
