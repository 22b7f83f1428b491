use std::collections::BTreeSet;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soac_core::generators::{
    decide_edp, decide_muks, decide_one_in_three, gen_cubic_formula, gen_edp_gadget, gen_muks_k2n, gen_muks_planar_dag,
    gen_one_in_three, CnfFormula, EdpInstance, MuksInstance,
};
use soac_core::oracle::{solve_soac_oracle, solve_soac_oracle_with, OracleConfig};
use soac_core::{Cost, Instance};

fn random_muks(rng: &mut ChaCha8Rng) -> MuksInstance {
    let n = rng.gen_range(1..=4);
    let d = rng.gen_range(1..=3);
    let vectors = (0..n).map(|_| (0..d).map(|_| rng.gen_range(0..=3)).collect()).collect();
    let target = (0..d).map(|_| rng.gen_range(0..=3)).collect();
    MuksInstance::new(vectors, target, 0).unwrap()
}

fn random_edp(rng: &mut ChaCha8Rng) -> EdpInstance {
    let right = rng.gen_range(1..=4);
    let pairs = (0..rng.gen_range(1..=3))
        .map(|_| {
            let u = rng.gen_range(0..3 + right);
            let mut w = rng.gen_range(0..2 + right);
            if w >= u {
                w += 1;
            }
            (u, w)
        })
        .collect();
    EdpInstance::new(right, pairs).unwrap()
}

fn skeleton_degrees(inst: &Instance) -> Vec<usize> {
    let mut deg = vec![0; inst.vertex_count()];
    for (u, w) in inst.graph.skeleton_edges() {
        deg[u] += 1;
        deg[w] += 1;
    }
    deg
}

fn memo_cost(inst: &Instance) -> Cost {
    let config = OracleConfig {
        budget: u64::MAX,
        ..OracleConfig::memoized()
    };
    solve_soac_oracle_with(inst, &config).unwrap().cost
}

#[test]
fn knapsack_reductions_agree_with_decider() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..150 {
        let mut muks = random_muks(&mut rng);
        let n = muks.vectors.len();
        let k2n = memo_cost(&gen_muks_k2n(&muks).unwrap());
        let planar = memo_cost(&gen_muks_planar_dag(&muks).unwrap());
        for k in 0..=n + 1 {
            muks.k = k;
            let yes = decide_muks(&muks).unwrap();
            let within = |c: &Cost| k <= n && *c <= Cost::from_integer((n - k) as i64);
            assert_eq!(yes, within(&k2n), "{muks:?} k2n {k2n}");
            assert_eq!(yes, within(&planar), "{muks:?} planar {planar}");
        }
    }
}

#[test]
fn knapsack_generators_have_the_promised_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let muks = random_muks(&mut rng);
        let n = muks.vectors.len();
        let k2n = gen_muks_k2n(&muks).unwrap();
        let hubs = [n, n + 1];
        let edges: BTreeSet<_> = k2n.graph.skeleton_edges().into_iter().collect();
        let expected: BTreeSet<_> = (0..k2n.vertex_count())
            .filter(|x| !hubs.contains(x))
            .cartesian_product(hubs)
            .map(|(x, h)| (x.min(h), x.max(h)))
            .collect();
        assert_eq!(edges, expected);

        let planar = gen_muks_planar_dag(&muks).unwrap();
        assert!(planar.graph.is_acyclic());
        assert!(skeleton_degrees(&planar).into_iter().all(|d| d <= 3), "{muks:?}");
    }
}

#[test]
fn reciprocal_arc_costs_exactly_one() {
    let muks = MuksInstance::new(vec![vec![1, 2], vec![0, 1]], vec![0, 0], 0).unwrap();
    let inst = gen_muks_k2n(&muks).unwrap();
    assert_eq!(solve_soac_oracle(&inst).unwrap().cost, Cost::from_integer(2));
}

#[test]
fn edp_gadget_agrees_with_decider() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..60 {
        let edp = random_edp(&mut rng);
        let inst = gen_edp_gadget(&edp).unwrap();
        assert_eq!(inst.c_max(), 1);
        let cost = memo_cost(&inst);
        assert!(cost.is_zero() || cost.is_infinite());
        assert_eq!(decide_edp(&edp).unwrap(), cost.is_zero(), "{edp:?}");
    }
}

#[test]
fn all_orderings_of_the_three_variable_cubic_formula() {
    let orders: Vec<[usize; 3]> = [0, 1, 2]
        .into_iter()
        .permutations(3)
        .map(|p| [p[0], p[1], p[2]])
        .collect();
    for clauses in (0..3).map(|_| orders.clone()).multi_cartesian_product() {
        let formula = CnfFormula::new(3, clauses).unwrap();
        let inst = gen_one_in_three(&formula).unwrap();
        assert!(inst.graph.is_acyclic());
        assert_eq!(inst.c_max(), 3);
        assert!(decide_one_in_three(&formula).unwrap());
        assert!(memo_cost(&inst).is_zero());
    }
}

#[test]
fn random_cubic_formulas_agree_with_decider() {
    let mut seen = 0;
    for seed in 0..40 {
        let n = 3 + (seed % 3) as usize;
        let Some(formula) = gen_cubic_formula(n, seed) else {
            continue;
        };
        assert!(formula.is_cubic());
        let inst = gen_one_in_three(&formula).unwrap();
        assert!(inst.graph.is_acyclic());
        assert_eq!(inst.c_max(), 3);
        assert_eq!(
            decide_one_in_three(&formula).unwrap(),
            memo_cost(&inst).is_zero(),
            "{formula:?}"
        );
        seen += 1;
    }
    assert!(seen >= 20);
}

#[test]
fn non_cubic_formula_is_rejected() {
    let formula = CnfFormula::new(4, vec![[0, 1, 2], [1, 2, 3]]).unwrap();
    assert!(gen_one_in_three(&formula).is_err());
}
