use gridshare_core::fixtures;
use gridshare_core::harness::{brute_force_error_bound, brute_force_schedule, gen_scenario, GenSpec};
use gridshare_core::lp::check_feasible;
use gridshare_core::oracle::{build_social_lp, solve_social, validate_schedule, SocialLayout};
use gridshare_core::scenario::{AgentSpec, Role, Scenario, ScenarioFile};
use proptest::prelude::*;

fn social_cost(file: ScenarioFile) -> f64 {
    solve_social(&Scenario::from_file(file).unwrap()).unwrap().cost
}

// Values verified by an exact search over the 0.1 kW lattice, which contains
// the optimum because every fixture series is a multiple of 0.1 kW.
const THREE_AGENT_J: f64 = 3.488;

#[test]
fn three_agent_golden_cost() {
    let sol = solve_social(&fixtures::three_agent()).unwrap();
    assert!((sol.cost - THREE_AGENT_J).abs() < 1e-9, "{}", sol.cost);
}

#[test]
fn three_agent_cost_matches_lattice_search() {
    let s = fixtures::three_agent();
    let bf = brute_force_schedule(&s, 0.1).unwrap();
    assert!((bf.cost - THREE_AGENT_J).abs() < 1e-9, "{}", bf.cost);
    assert!(validate_schedule(&s, &bf.schedule.clone().netted(), 1e-9, 1e-9).is_empty());
}

#[test]
fn three_agent_schedule_is_feasible() {
    let s = fixtures::three_agent();
    let sol = solve_social(&s).unwrap();
    assert!(validate_schedule(&s, &sol.schedule, 1e-8, 1e-9).is_empty());
    let lp = build_social_lp(&s);
    let x = SocialLayout::of(&s).flatten(&sol.schedule);
    assert!(check_feasible(&lp, &x, 1e-8).unwrap().is_empty());
    assert!((lp.objective_at(&x) - sol.cost).abs() < 1e-9);
}

#[test]
fn truncated_window_matches_brute_force() {
    // four hours around the price step, both batteries
    let full = fixtures::three_agent().to_file();
    let window = 11..15;
    let mut file = full.clone();
    file.horizon = window.len();
    file.tariff.buy = full.tariff.buy[window.clone()].to_vec();
    file.tariff.sell = full.tariff.sell[window.clone()].to_vec();
    for a in &mut file.agents {
        if !a.demand_kw.is_empty() {
            a.demand_kw = a.demand_kw[window.clone()].to_vec();
        }
        if !a.renewable_kw.is_empty() {
            a.renewable_kw = a.renewable_kw[window.clone()].to_vec();
        }
    }
    file.codes = None;
    let s = Scenario::from_file(file).unwrap();
    let lp = solve_social(&s).unwrap().cost;
    let bf = brute_force_schedule(&s, 0.1).unwrap();
    assert!(bf.cost >= lp - 1e-9);
    assert!(bf.cost - lp <= brute_force_error_bound(&s, 0.1));
    assert!((bf.cost - lp).abs() < 1e-9, "lattice contains the optimum: {} vs {lp}", bf.cost);
}

#[test]
fn arbitrage_pinned() {
    let s = fixtures::arbitrage_t2();
    let sol = solve_social(&s).unwrap();
    assert!((sol.cost + 1.4).abs() < 1e-9);
    let bf = brute_force_schedule(&s, 0.01).unwrap();
    assert!((bf.cost + 1.4).abs() <= 0.05);
}

fn small_spec() -> GenSpec {
    GenSpec { users: (1, 2), horizon: (1, 4), ..GenSpec::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn brute_force_brackets_the_optimum(seed in 0u64..10_000) {
        let s = gen_scenario(&small_spec(), seed).unwrap();
        let lp = solve_social(&s).unwrap().cost;
        let coarse = brute_force_schedule(&s, 0.1).unwrap();
        let fine = brute_force_schedule(&s, 0.05).unwrap();
        prop_assert!(coarse.cost >= lp - 1e-9);
        prop_assert!(fine.cost >= lp - 1e-9);
        prop_assert!(coarse.cost - lp <= brute_force_error_bound(&s, 0.1) + 1e-9);
        // refinement moves the cost by at most the coarse bound
        prop_assert!((coarse.cost - fine.cost).abs() <= brute_force_error_bound(&s, 0.1) + 1e-9);
    }

    #[test]
    fn generated_schedules_valid(seed in 0u64..10_000) {
        let s = gen_scenario(&GenSpec::default(), seed).unwrap();
        let sol = solve_social(&s).unwrap();
        prop_assert!(validate_schedule(&s, &sol.schedule, 1e-8, 1e-9).is_empty());
        prop_assert!((sol.schedule.cost(s.tariff()) - sol.cost).abs() < 1e-9);
    }

    #[test]
    fn relaxing_storage_never_hurts(seed in 0u64..10_000, grow in 1.0f64..3.0) {
        let s = gen_scenario(&GenSpec { active_share: 1.0, ..GenSpec::default() }, seed).unwrap();
        let base = solve_social(&s).unwrap().cost;
        let mut bigger = s.to_file();
        for d in bigger.agents.iter_mut().filter_map(|a| a.desd.as_mut()) {
            d.emax_kwh *= grow;
        }
        prop_assert!(social_cost(bigger) <= base + 1e-9);
        let mut faster = s.to_file();
        for d in faster.agents.iter_mut().filter_map(|a| a.desd.as_mut()) {
            d.p_discharge_max_kw *= grow;
        }
        prop_assert!(social_cost(faster) <= base + 1e-9);
    }

    #[test]
    fn selling_worthless_without_storage(seed in 0u64..10_000) {
        let s = gen_scenario(&GenSpec::default(), seed).unwrap();
        let mut file = s.to_file();
        file.tariff.sell = file.tariff.buy.clone();
        for a in file.agents.iter_mut().filter(|a| a.role == Role::Active) {
            *a = AgentSpec { role: Role::Passive, renewable_kw: vec![0.0; file.horizon], desd: None, ..a.clone() };
        }
        let s = Scenario::from_file(file).unwrap();
        let passive: f64 = (0..s.horizon()).map(|t| s.tariff().buy[t] * s.total_demand(t) * s.dt()).sum();
        prop_assert!((solve_social(&s).unwrap().cost - passive).abs() < 1e-9);
    }

    #[test]
    fn doubling_dt_on_paired_steps(seed in 0u64..10_000) {
        // fine: every step repeated twice at Δt; coarse: one step at 2Δt
        let coarse = gen_scenario(&GenSpec::default(), seed).unwrap();
        let mut fine = coarse.to_file();
        let twice = |v: &Vec<f64>| v.iter().flat_map(|&x| [x, x]).collect::<Vec<f64>>();
        fine.horizon *= 2;
        fine.dt_hours = coarse.dt() / 2.0;
        fine.tariff.buy = twice(&fine.tariff.buy);
        fine.tariff.sell = twice(&fine.tariff.sell);
        for a in &mut fine.agents {
            a.demand_kw = twice(&a.demand_kw);
            a.renewable_kw = twice(&a.renewable_kw);
        }
        let j_fine = social_cost(fine);
        let j_coarse = solve_social(&coarse).unwrap().cost;
        prop_assert!((j_fine - j_coarse).abs() < 1e-9, "{j_fine} vs {j_coarse}");
    }
}
