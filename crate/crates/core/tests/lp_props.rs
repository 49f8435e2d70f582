use gridshare_core::harness::{enumerate_lp_vertices, gen_small_lp};
use gridshare_core::lp::{check_feasible, solve_lp, LinearProgram, LpStatus};
use proptest::prelude::*;

fn permuted(lp: &LinearProgram, perm: &[usize]) -> LinearProgram {
    let pick = |row: &Vec<f64>| perm.iter().map(|&j| row[j]).collect::<Vec<f64>>();
    LinearProgram {
        objective: pick(&lp.objective),
        a_ub: lp.a_ub.iter().map(pick).collect(),
        b_ub: lp.b_ub.clone(),
        a_eq: lp.a_eq.iter().map(pick).collect(),
        b_eq: lp.b_eq.clone(),
        lower: pick(&lp.lower),
        upper: pick(&lp.upper),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn agrees_with_vertex_enumeration(seed in any::<u64>()) {
        let lp = gen_small_lp(seed);
        let simplex = solve_lp(&lp).unwrap();
        let vertices = enumerate_lp_vertices(&lp).unwrap();
        prop_assert_eq!(simplex.status, vertices.status);
        if simplex.status == LpStatus::Optimal {
            prop_assert!((simplex.objective_value - vertices.value).abs() <= 1e-7, "{} vs {}", simplex.objective_value, vertices.value);
            prop_assert!(check_feasible(&lp, &simplex.x, 1e-8).unwrap().is_empty());
        }
    }

    #[test]
    fn objective_scaling(seed in any::<u64>(), c in 0.01f64..100.0) {
        let lp = gen_small_lp(seed);
        let base = solve_lp(&lp).unwrap();
        let mut scaled = lp.clone();
        scaled.objective.iter_mut().for_each(|v| *v *= c);
        let out = solve_lp(&scaled).unwrap();
        prop_assert_eq!(out.status, base.status);
        if base.status == LpStatus::Optimal {
            prop_assert!((out.objective_value - c * base.objective_value).abs() <= 1e-7 * (1.0 + c * base.objective_value.abs()));
        }
    }

    #[test]
    fn permutation_invariant(seed in any::<u64>(), shuffle in any::<u64>()) {
        let lp = gen_small_lp(seed);
        let n = lp.num_vars();
        let mut perm: Vec<usize> = (0..n).collect();
        // Fisher-Yates driven by the second seed
        let mut state = shuffle;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let base = solve_lp(&lp).unwrap();
        let out = solve_lp(&permuted(&lp, &perm)).unwrap();
        prop_assert_eq!(out.status, base.status);
        if base.status == LpStatus::Optimal {
            prop_assert!((out.objective_value - base.objective_value).abs() <= 1e-7);
        }
    }
}
