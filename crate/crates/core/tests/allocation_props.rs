use gridshare_core::fixtures;
use gridshare_core::graph::metropolis_weights;
use gridshare_core::harness::{gen_scenario, GenSpec};
use gridshare_core::lp::check_feasible;
use gridshare_core::nbs::{allocate_centralized, allocate_distributed, consumption_costs};
use gridshare_core::oracle::{build_social_lp, solve_social, validate_schedule, DesdTrajectory, PowerSchedule, SocialLayout};
use gridshare_core::scenario::{Role, Scenario};
use gridshare_core::selfish::{disagreement_point, selfish_solutions};
use proptest::prelude::*;

// Stand-alone bills of the three_agent users, confirmed by exact lattice search.
const THREE_AGENT_D: [f64; 3] = [1.136, 3.644, -0.8624];

#[test]
fn three_agent_disagreement_point() {
    let d = disagreement_point(&fixtures::three_agent()).unwrap();
    for (got, want) in d.iter().zip(THREE_AGENT_D) {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
    // the storage-rich user profits on its own, the passive user pays most
    assert!(d[2] < 0.0 && d[1] > d[0]);
}

#[test]
fn single_agent_disagreement_equals_social() {
    let s = fixtures::arbitrage_t2();
    let d = disagreement_point(&s).unwrap();
    assert_eq!(d.len(), 1);
    assert!((d[0] - solve_social(&s).unwrap().cost).abs() < 1e-12);
}

#[test]
fn all_passive_allocation_is_selfish() {
    let s = fixtures::all_passive();
    let j = solve_social(&s).unwrap().cost;
    let d = disagreement_point(&s).unwrap();
    let ids: Vec<u32> = s.users().map(|a| a.id).collect();
    let rep = allocate_centralized(&ids, j, &d).unwrap();
    assert!(rep.epsilon.abs() < 1e-12);
    for (a, b) in rep.allocated.iter().zip(&d) {
        assert!((a - b).abs() < 1e-12);
    }
}

// Stacked stand-alone schedules as one social schedule.
fn combined(s: &Scenario) -> PowerSchedule {
    let sols = selfish_solutions(s).unwrap();
    let t = s.horizon();
    let mut grid_buy = vec![0.0; t];
    let mut grid_sell = vec![0.0; t];
    let mut desd = Vec::new();
    for (agent, sol) in s.users().zip(&sols) {
        for k in 0..t {
            grid_buy[k] += sol.grid_buy()[k];
            grid_sell[k] += sol.grid_sell()[k];
        }
        if agent.role == Role::Active {
            desd.push(DesdTrajectory { agent: agent.id, power_kw: sol.desd_power().to_vec() });
        }
    }
    PowerSchedule { dt: s.dt(), grid_buy, grid_sell, desd }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bargaining_always_succeeds(seed in 0u64..100_000) {
        let s = gen_scenario(&GenSpec::default(), seed).unwrap();
        let j = solve_social(&s).unwrap().cost;
        let d = disagreement_point(&s).unwrap();
        prop_assert!(d.iter().sum::<f64>() >= j - 1e-9);
    }

    #[test]
    fn stacked_selfish_schedules_are_socially_feasible(seed in 0u64..100_000) {
        let s = gen_scenario(&GenSpec::default(), seed).unwrap();
        let stacked = combined(&s);
        let d = disagreement_point(&s).unwrap();
        let lp = build_social_lp(&s);
        let x = SocialLayout::of(&s).flatten(&stacked);
        prop_assert!(check_feasible(&lp, &x, 1e-8).unwrap().is_empty());
        prop_assert!((lp.objective_at(&x) - d.iter().sum::<f64>()).abs() < 1e-9);
        let violations = validate_schedule(&s, &stacked.netted(), 1e-8, 1e-9);
        prop_assert!(violations.is_empty(), "{:?}", violations);
    }

    #[test]
    fn selfish_cost_ignores_other_agents(seed in 0u64..100_000, scale in 0.0f64..1.0) {
        let s = gen_scenario(&GenSpec { users: (2, 4), ..GenSpec::default() }, seed).unwrap();
        let d = disagreement_point(&s).unwrap();
        let mut file = s.to_file();
        // perturb every user except the first
        for a in file.agents.iter_mut().filter(|a| a.role != Role::Grid).skip(1) {
            a.demand_kw.iter_mut().for_each(|v| *v *= scale);
            a.renewable_kw.iter_mut().for_each(|v| *v *= scale);
            if let Some(desd) = a.desd.as_mut() {
                desd.emax_kwh += 1.0;
                desd.p_discharge_max_kw += 0.5;
            }
        }
        let d2 = disagreement_point(&Scenario::from_file(file).unwrap()).unwrap();
        prop_assert_eq!(d[0], d2[0]);
    }

    #[test]
    fn allocation_identities(seed in 0u64..100_000) {
        let s = gen_scenario(&GenSpec::default(), seed).unwrap();
        let j = solve_social(&s).unwrap().cost;
        let d = disagreement_point(&s).unwrap();
        let ids: Vec<u32> = s.users().map(|a| a.id).collect();
        let rep = allocate_centralized(&ids, j, &d).unwrap();
        prop_assert!(rep.budget_gap().abs() <= 1e-9);
        prop_assert!(rep.discount_spread() <= 1e-12);
        prop_assert!(rep.epsilon >= -1e-6);
        for (a, b) in rep.allocated.iter().zip(&d) {
            prop_assert!(*a <= b + 1e-6);
        }
        let c = consumption_costs(&solve_social(&s).unwrap().schedule, &s);
        prop_assert!((c.costs.iter().sum::<f64>() + c.residual - j).abs() < 1e-9);
    }

    #[test]
    fn translation_property(
        d in proptest::collection::vec(-10.0f64..10.0, 2..6),
        pick in any::<prop::sample::Index>(),
        c in -5.0f64..5.0,
    ) {
        let r = d.len();
        let ids: Vec<u32> = (1..=r as u32).collect();
        let j = d.iter().sum::<f64>() - 3.0 - c.abs();
        let base = allocate_centralized(&ids, j, &d).unwrap();
        let i = pick.index(r);
        let mut shifted = d.clone();
        shifted[i] += c;
        let moved = allocate_centralized(&ids, j, &shifted).unwrap();
        for k in 0..r {
            let want = if k == i { c * (r as f64 - 1.0) / r as f64 } else { -c / r as f64 };
            prop_assert!((moved.allocated[k] - base.allocated[k] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn distributed_matches_closed_form(seed in 0u64..100_000) {
        let s = gen_scenario(&GenSpec::default(), seed).unwrap();
        let j = solve_social(&s).unwrap().cost;
        let d = disagreement_point(&s).unwrap();
        let ids: Vec<u32> = s.users().map(|a| a.id).collect();
        let closed = allocate_centralized(&ids, j, &d).unwrap();
        let dist = allocate_distributed(&s, &d, j, s.graph(), 1e-9, 100_000).unwrap();
        for (a, b) in dist.allocated.iter().zip(&closed.allocated) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}

type Topology = (&'static str, &'static [(u32, u32)], usize);

#[test]
fn four_node_topologies() {
    let s = fixtures::three_agent();
    let j = solve_social(&s).unwrap().cost;
    let d = disagreement_point(&s).unwrap();
    let closed = allocate_centralized(&[1, 2, 3], j, &d).unwrap();
    let ids = [1, 2, 3, 4];
    let graphs: [Topology; 4] = [
        ("complete", &[(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)], 10),
        ("path", &[(1, 2), (2, 3), (3, 4)], 200),
        ("ring", &[(1, 2), (2, 3), (3, 4), (4, 1)], 200),
        ("star", &[(4, 1), (4, 2), (4, 3)], 200),
    ];
    for (name, edges, limit) in graphs {
        let g = metropolis_weights(edges, &ids).unwrap();
        let rep = allocate_distributed(&s, &d, j, &g, 1e-7, 10_000).unwrap();
        assert!(rep.rounds.unwrap() <= limit, "{name}: {:?}", rep.rounds);
        for (a, b) in rep.allocated.iter().zip(&closed.allocated) {
            assert!((a - b).abs() < 1e-6, "{name}");
        }
    }
}
