//! Exhaustive ground-truth solvers.
//!
//! The search routes agents one at a time over their simple paths, keeping a
//! load counter per arc and cutting a branch as soon as some load exceeds
//! the arc's capacity. An optional memo table keyed by the loads of arcs
//! that later agents can still touch collapses equivalent partial states.

use std::collections::HashMap;

use crate::cost::Cost;
use crate::error::{Result, SoacError};
use crate::model::{Agent, ArcId, Digraph, FlowAssignment, Instance, VertexId};

pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Clone, Debug)]
pub struct OracleConfig {
    /// Maximum number of partial states visited before giving up.
    pub budget: u64,
    /// Longest path considered; defaults to `vertex_count - 1`.
    pub max_len: Option<usize>,
    /// Memoise on (agent index, live arc loads).
    pub memoize: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            budget: DEFAULT_BUDGET,
            max_len: None,
            memoize: false,
        }
    }
}

impl OracleConfig {
    pub fn memoized() -> Self {
        OracleConfig {
            memoize: true,
            ..Self::default()
        }
    }
}

/// Best completion cost and first path choice, keyed by agent index and live loads.
type LoadMemo = HashMap<(usize, Vec<u16>), (Cost, Option<usize>)>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Solution {
    pub cost: Cost,
    /// A minimising assignment; `None` when every assignment is infeasible.
    pub flow: Option<FlowAssignment>,
}

/// All simple directed paths from `source` to `target` with at most
/// `max_len` arcs, in lexicographic order of their arc-id sequences.
pub fn enumerate_simple_paths(graph: &Digraph, source: VertexId, target: VertexId, max_len: usize) -> Vec<Vec<ArcId>> {
    let out = graph.out_arcs();
    let mut paths = Vec::new();
    let mut visited = vec![false; graph.vertex_count()];
    let mut current = Vec::new();
    visited[source] = true;
    dfs_paths(
        graph,
        &out,
        source,
        target,
        max_len,
        &mut visited,
        &mut current,
        &mut paths,
    );
    paths
}

#[allow(clippy::too_many_arguments)]
fn dfs_paths(
    graph: &Digraph,
    out: &[Vec<ArcId>],
    at: VertexId,
    target: VertexId,
    max_len: usize,
    visited: &mut [bool],
    current: &mut Vec<ArcId>,
    paths: &mut Vec<Vec<ArcId>>,
) {
    if at == target {
        paths.push(current.clone());
        return;
    }
    if current.len() == max_len {
        return;
    }
    for &a in &out[at] {
        let head = graph.arc(a).head;
        if visited[head] {
            continue;
        }
        visited[head] = true;
        current.push(a);
        dfs_paths(graph, out, head, target, max_len, visited, current, paths);
        current.pop();
        visited[head] = false;
    }
}

struct Search<'a> {
    instance: &'a Instance,
    agents: Vec<Agent>,
    paths: Vec<Vec<Vec<ArcId>>>,
    caps: Vec<usize>,
    budget: u64,
    visited_states: u64,
}

impl<'a> Search<'a> {
    fn new(instance: &'a Instance, agents: Vec<Agent>, config: &OracleConfig) -> Self {
        let max_len = config
            .max_len
            .unwrap_or_else(|| instance.vertex_count().saturating_sub(1));
        let mut cache: HashMap<Agent, Vec<Vec<ArcId>>> = HashMap::new();
        let paths = agents
            .iter()
            .map(|agent| {
                cache
                    .entry(*agent)
                    .or_insert_with(|| enumerate_simple_paths(&instance.graph, agent.source, agent.target, max_len))
                    .clone()
            })
            .collect();
        let (caps, _) = instance.capacities();
        Search {
            instance,
            agents,
            paths,
            caps,
            budget: config.budget,
            visited_states: 0,
        }
    }

    fn tick(&mut self) -> Result<()> {
        self.visited_states += 1;
        if self.visited_states > self.budget {
            return Err(SoacError::BudgetExceeded {
                budget: self.budget,
                context: "oracle search".to_string(),
            });
        }
        Ok(())
    }

    fn solve_plain(&mut self) -> Result<(Cost, Option<Vec<usize>>)> {
        let mut loads = vec![0usize; self.instance.graph.arc_count()];
        let mut choice = Vec::with_capacity(self.agents.len());
        let mut best: (Cost, Option<Vec<usize>>) = (Cost::Infinite, None);
        self.backtrack(0, &mut loads, &mut choice, &mut best)?;
        Ok(best)
    }

    fn backtrack(
        &mut self,
        index: usize,
        loads: &mut [usize],
        choice: &mut Vec<usize>,
        best: &mut (Cost, Option<Vec<usize>>),
    ) -> Result<()> {
        self.tick()?;
        if index == self.agents.len() {
            let cost = crate::model::total_cost(self.instance, loads);
            if cost.is_finite() && (best.1.is_none() || cost < best.0) {
                *best = (cost, Some(choice.clone()));
            }
            return Ok(());
        }
        // Identical consecutive agents take non-decreasing path indices.
        let start = if index > 0 && self.agents[index] == self.agents[index - 1] {
            choice[index - 1]
        } else {
            0
        };
        for p in start..self.paths[index].len() {
            let path = std::mem::take(&mut self.paths[index][p]);
            let mut fits = true;
            for &a in &path {
                loads[a] += 1;
                if loads[a] > self.caps[a] {
                    fits = false;
                }
            }
            let result = if fits {
                choice.push(p);
                let r = self.backtrack(index + 1, loads, choice, best);
                choice.pop();
                r
            } else {
                Ok(())
            };
            for &a in &path {
                loads[a] -= 1;
            }
            self.paths[index][p] = path;
            result?;
        }
        Ok(())
    }

    fn solve_memo(&mut self) -> Result<(Cost, Option<Vec<usize>>)> {
        let m = self.agents.len();
        let arc_count = self.instance.graph.arc_count();
        // last_use[a] = last agent index whose path list touches arc a.
        let mut last_use: Vec<Option<usize>> = vec![None; arc_count];
        for (i, list) in self.paths.iter().enumerate() {
            for path in list {
                for &a in path {
                    last_use[a] = Some(i);
                }
            }
        }
        // Arcs live at index i (used by some agent >= i), ordered by id.
        let live: Vec<Vec<ArcId>> = (0..=m)
            .map(|i| {
                (0..arc_count)
                    .filter(|&a| matches!(last_use[a], Some(l) if l >= i))
                    .collect()
            })
            .collect();
        let mut memo: LoadMemo = HashMap::new();
        let mut loads = vec![0usize; arc_count];
        let cost = self.memo_rec(0, &mut loads, &live, &last_use, &mut memo)?;
        if cost.is_infinite() {
            return Ok((Cost::Infinite, None));
        }
        // Replay the stored choices.
        let mut choice = Vec::with_capacity(m);
        loads.iter_mut().for_each(|l| *l = 0);
        for i in 0..m {
            let key = (i, live[i].iter().map(|&a| loads[a] as u16).collect::<Vec<_>>());
            let p = memo[&key].1.expect("finite state has a choice");
            for &a in &self.paths[i][p] {
                loads[a] += 1;
            }
            choice.push(p);
        }
        Ok((cost, Some(choice)))
    }

    fn memo_rec(
        &mut self,
        index: usize,
        loads: &mut [usize],
        live: &[Vec<ArcId>],
        last_use: &[Option<usize>],
        memo: &mut LoadMemo,
    ) -> Result<Cost> {
        if index == self.agents.len() {
            return Ok(Cost::zero());
        }
        let key = (index, live[index].iter().map(|&a| loads[a] as u16).collect::<Vec<_>>());
        if let Some((c, _)) = memo.get(&key) {
            return Ok(c.clone());
        }
        self.tick()?;
        let mut best = Cost::Infinite;
        let mut best_choice = None;
        for p in 0..self.paths[index].len() {
            let path = std::mem::take(&mut self.paths[index][p]);
            let mut fits = true;
            for &a in &path {
                loads[a] += 1;
                if loads[a] > self.caps[a] {
                    fits = false;
                }
            }
            let result = if fits {
                // Arcs whose last possible user is this agent are final now.
                let mut settled = Cost::zero();
                for &a in &live[index] {
                    if last_use[a] == Some(index) && loads[a] > 0 {
                        settled += self.instance.latencies[a].arc_cost(loads[a]);
                    }
                }
                if settled.is_finite() {
                    self.memo_rec(index + 1, loads, live, last_use, memo)
                        .map(|rest| settled + rest)
                } else {
                    Ok(Cost::Infinite)
                }
            } else {
                Ok(Cost::Infinite)
            };
            for &a in &path {
                loads[a] -= 1;
            }
            self.paths[index][p] = path;
            let total = result?;
            if total.is_finite() && total < best {
                best = total;
                best_choice = Some(p);
            }
        }
        memo.insert(key, (best.clone(), best_choice));
        Ok(best)
    }

    fn run(&mut self, memoize: bool) -> Result<(Cost, Option<Vec<Vec<ArcId>>>)> {
        let (cost, choice) = if memoize {
            self.solve_memo()?
        } else {
            self.solve_plain()?
        };
        Ok((
            cost,
            choice.map(|c| c.iter().enumerate().map(|(i, &p)| self.paths[i][p].clone()).collect()),
        ))
    }
}

/// Minimum cost over all assignments routing every agent, with a witness.
pub fn solve_soac_oracle(instance: &Instance) -> Result<Solution> {
    solve_soac_oracle_with(instance, &OracleConfig::default())
}

pub fn solve_soac_oracle_with(instance: &Instance, config: &OracleConfig) -> Result<Solution> {
    let mut search = Search::new(instance, instance.agents.clone(), config);
    let (cost, paths) = search.run(config.memoize)?;
    Ok(Solution {
        cost,
        flow: paths.map(|ps| FlowAssignment::new(ps.into_iter().map(Some).collect())),
    })
}

/// Minimum cost over assignments routing at least `m - alpha` agents.
pub fn solve_minmax_oracle(instance: &Instance, alpha: usize) -> Result<Solution> {
    solve_minmax_oracle_with(instance, alpha, &OracleConfig::default())
}

pub fn solve_minmax_oracle_with(instance: &Instance, alpha: usize, config: &OracleConfig) -> Result<Solution> {
    let m = instance.agent_count();
    if alpha > m {
        return Err(SoacError::InvalidInstance(format!(
            "alpha {alpha} exceeds the number of agents {m}"
        )));
    }
    let mut remaining = config.budget;
    let mut best = Solution {
        cost: Cost::Infinite,
        flow: None,
    };
    for unrouted in 0..=alpha {
        for dropped in combinations(m, unrouted) {
            let kept: Vec<usize> = (0..m).filter(|i| !dropped.contains(i)).collect();
            let agents = kept.iter().map(|&i| instance.agents[i]).collect();
            let sub_config = OracleConfig {
                budget: remaining,
                ..config.clone()
            };
            let mut search = Search::new(instance, agents, &sub_config);
            let (cost, paths) = search.run(config.memoize)?;
            remaining = remaining.saturating_sub(search.visited_states);
            if let Some(paths) = paths {
                if best.flow.is_none() || cost < best.cost {
                    let mut full = vec![None; m];
                    for (slot, path) in kept.iter().zip(paths) {
                        full[*slot] = Some(path);
                    }
                    best = Solution {
                        cost,
                        flow: Some(FlowAssignment::new(full)),
                    };
                }
            }
        }
    }
    Ok(best)
}

/// k-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            if n - i < k - current.len() {
                break;
            }
            current.push(i);
            rec(i + 1, n, k, current, out);
            current.pop();
        }
    }
    rec(0, n, k, &mut current, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{loads_and_cost, LatencyTable};

    fn parallel(caps: &[usize], agents: usize) -> Instance {
        let graph = Digraph::new(2, caps.iter().map(|_| (0, 1)).collect()).unwrap();
        let tables = caps
            .iter()
            .map(|&c| LatencyTable::from_ratios(&vec![(1, 1); c]).unwrap())
            .collect();
        Instance::new(graph, tables, vec![Agent { source: 0, target: 1 }; agents]).unwrap()
    }

    #[test]
    fn path_enumeration_basics() {
        let g = Digraph::new(2, vec![(0, 1)]).unwrap();
        assert_eq!(enumerate_simple_paths(&g, 0, 1, 1), vec![vec![0]]);
        assert_eq!(enumerate_simple_paths(&g, 1, 1, 1), vec![Vec::<usize>::new()]);
        let g = Digraph::new(2, vec![(0, 1), (0, 1)]).unwrap();
        assert_eq!(enumerate_simple_paths(&g, 0, 1, 1), vec![vec![0], vec![1]]);
    }

    #[test]
    fn path_enumeration_is_lexicographic() {
        let g = Digraph::new(4, vec![(0, 2), (0, 1), (1, 3), (2, 3), (1, 2)]).unwrap();
        let paths = enumerate_simple_paths(&g, 0, 3, 3);
        let mut sorted = paths.clone();
        sorted.sort();
        assert_eq!(paths, sorted);
        assert_eq!(paths.len(), 3);
        assert!(enumerate_simple_paths(&g, 0, 3, 1).is_empty());
    }

    #[test]
    fn single_agent_single_arc() {
        let graph = Digraph::new(2, vec![(0, 1)]).unwrap();
        let inst = Instance::new(
            graph,
            vec![LatencyTable::from_ratios(&[(5, 1)]).unwrap()],
            vec![Agent { source: 0, target: 1 }],
        )
        .unwrap();
        assert_eq!(solve_soac_oracle(&inst).unwrap().cost, Cost::from_integer(5));
    }

    #[test]
    fn two_agents_split_over_parallel_arcs() {
        let inst = parallel(&[1, 1], 2);
        let sol = solve_soac_oracle(&inst).unwrap();
        assert_eq!(sol.cost, Cost::from_integer(2));
        let flow = sol.flow.unwrap();
        assert_ne!(flow.paths[0], flow.paths[1]);
        assert_eq!(loads_and_cost(&inst, &flow).unwrap().1, sol.cost);
    }

    #[test]
    fn two_agents_one_unit_arc_is_infeasible() {
        let inst = parallel(&[1], 2);
        let sol = solve_soac_oracle(&inst).unwrap();
        assert_eq!(sol.cost, Cost::Infinite);
        assert!(sol.flow.is_none());
    }

    #[test]
    fn minmax_basics() {
        let inst = parallel(&[1], 2);
        let one = solve_minmax_oracle(&inst, 1).unwrap();
        assert_eq!(one.cost, Cost::from_integer(1));
        assert_eq!(one.flow.as_ref().unwrap().unrouted_count(), 1);
        let all = solve_minmax_oracle(&inst, 2).unwrap();
        assert!(all.cost.is_zero());
        assert_eq!(all.flow.unwrap().unrouted_count(), 2);

        let inst = parallel(&[1, 2], 2);
        assert_eq!(
            solve_minmax_oracle(&inst, 0).unwrap(),
            solve_soac_oracle(&inst).unwrap()
        );
    }

    #[test]
    fn budget_is_enforced() {
        let inst = parallel(&[3, 3, 3], 3);
        let config = OracleConfig {
            budget: 2,
            ..OracleConfig::default()
        };
        assert!(matches!(
            solve_soac_oracle_with(&inst, &config),
            Err(SoacError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn memoized_matches_plain() {
        let graph = Digraph::new(4, vec![(0, 1), (1, 3), (0, 2), (2, 3), (1, 2)]).unwrap();
        let tables = vec![
            LatencyTable::from_ratios(&[(3, 1), (1, 1)]).unwrap(),
            LatencyTable::from_ratios(&[(1, 1), (1, 2), (1, 3)]).unwrap(),
            LatencyTable::from_ratios(&[(2, 1)]).unwrap(),
            LatencyTable::from_ratios(&[(1, 2), (5, 1)]).unwrap(),
            LatencyTable::from_ratios(&[(0, 1), (0, 1)]).unwrap(),
        ];
        let agents = vec![
            Agent { source: 0, target: 3 },
            Agent { source: 0, target: 3 },
            Agent { source: 1, target: 3 },
        ];
        let inst = Instance::new(graph, tables, agents).unwrap();
        let plain = solve_soac_oracle(&inst).unwrap();
        let memo = solve_soac_oracle_with(&inst, &OracleConfig::memoized()).unwrap();
        assert_eq!(plain.cost, memo.cost);
        assert_eq!(loads_and_cost(&inst, &memo.flow.unwrap()).unwrap().1, plain.cost);
    }
}
