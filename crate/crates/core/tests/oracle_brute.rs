use itertools::Itertools;
use soac_core::generators::{gen_random, LatencyRange};
use soac_core::oracle::{enumerate_simple_paths, solve_minmax_oracle, solve_soac_oracle};
use soac_core::{loads_and_cost, Cost, FlowAssignment, Instance};

fn small(seed: u64) -> Instance {
    let n = 2 + (seed % 5) as usize;
    let arcs = n - 1 + (seed as usize / 5) % 4;
    let agents = 1 + (seed as usize / 2) % 3;
    gen_random(n, arcs, agents, 1 + (seed as usize % 3), LatencyRange::default(), seed).unwrap()
}

// Independent minimum: every combination of per-agent options, no pruning.
fn product_min(inst: &Instance, options: Vec<Vec<Option<Vec<usize>>>>) -> Cost {
    options
        .into_iter()
        .multi_cartesian_product()
        .map(|paths| loads_and_cost(inst, &FlowAssignment::new(paths)).unwrap().1)
        .min()
        .unwrap_or(Cost::Infinite)
}

fn path_options(inst: &Instance) -> Vec<Vec<Option<Vec<usize>>>> {
    inst.agents
        .iter()
        .map(|a| {
            enumerate_simple_paths(&inst.graph, a.source, a.target, inst.vertex_count())
                .into_iter()
                .map(Some)
                .collect()
        })
        .collect()
}

#[test]
fn oracle_equals_product_enumeration() {
    for seed in 0..120 {
        let inst = small(seed);
        let expected = product_min(&inst, path_options(&inst));
        let got = solve_soac_oracle(&inst).unwrap();
        assert_eq!(got.cost, expected, "seed {seed}");
        if let Some(flow) = got.flow {
            assert_eq!(loads_and_cost(&inst, &flow).unwrap().1, expected);
        }
    }
}

#[test]
fn minmax_oracle_equals_product_enumeration() {
    for seed in 0..80 {
        let inst = small(seed);
        let m = inst.agent_count();
        let mut options = path_options(&inst);
        for (opts, a) in options.iter_mut().zip(&inst.agents) {
            if a.source != a.target {
                opts.push(None);
            }
        }
        for alpha in 0..=m.min(2) {
            let expected = options
                .clone()
                .into_iter()
                .multi_cartesian_product()
                .filter(|paths| paths.iter().filter(|p| p.is_none()).count() <= alpha)
                .map(|paths| loads_and_cost(&inst, &FlowAssignment::new(paths)).unwrap().1)
                .min()
                .unwrap_or(Cost::Infinite);
            assert_eq!(
                solve_minmax_oracle(&inst, alpha).unwrap().cost,
                expected,
                "seed {seed} alpha {alpha}"
            );
        }
    }
}

#[test]
fn simple_paths_are_sorted_and_simple() {
    for seed in 0..40 {
        let inst = small(seed);
        let n = inst.vertex_count();
        for s in 0..n {
            for t in 0..n {
                let paths = enumerate_simple_paths(&inst.graph, s, t, n);
                assert!(paths.windows(2).all(|w| w[0] < w[1]));
                for p in &paths {
                    let mut seen = vec![s];
                    for &a in p {
                        seen.push(inst.graph.arc(a).head);
                    }
                    assert_eq!(*seen.last().unwrap(), t);
                    assert!(seen.iter().all_unique());
                }
                assert_eq!(paths.iter().any(|p| p.is_empty()), s == t);
            }
        }
    }
}
