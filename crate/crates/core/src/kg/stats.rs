use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::KnowledgeGraph;

/// Topology summary of a knowledge graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub num_entities: usize,
    pub num_predicates: usize,
    pub num_triples: usize,
    pub num_multi_edge_triples: usize,
    pub num_scc: usize,
    pub num_wcc: usize,
}

pub fn compute_stats(g: &KnowledgeGraph) -> GraphStats {
    let adjacency = entity_adjacency(g);
    GraphStats {
        num_entities: g.num_entities(),
        num_predicates: g.num_predicates(),
        num_triples: g.num_triples(),
        num_multi_edge_triples: multi_predicate_triple_ids(g).len(),
        num_scc: strongly_connected_components(&adjacency),
        num_wcc: weakly_connected_components(g),
    }
}

/// Triples whose (head, tail) pair carries at least two distinct predicates,
/// sorted ascending.
pub fn multi_predicate_triple_ids(g: &KnowledgeGraph) -> Vec<usize> {
    // triples are unique, so the group size is the number of distinct predicates
    let mut groups: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (i, t) in g.triples().iter().enumerate() {
        groups.entry((t.head, t.tail)).or_default().push(i);
    }
    let mut ids: Vec<usize> = groups
        .into_values()
        .filter(|members| members.len() >= 2)
        .flatten()
        .collect();
    ids.sort_unstable();
    ids
}

/// Directed entity graph with parallel predicate edges collapsed.
fn entity_adjacency(g: &KnowledgeGraph) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); g.num_entities()];
    for t in g.triples() {
        adj[t.head].push(t.tail);
    }
    for out in &mut adj {
        out.sort_unstable();
        out.dedup();
    }
    adj
}

/// Number of strongly connected components (iterative Tarjan).
pub(crate) fn strongly_connected_components(adj: &[Vec<usize>]) -> usize {
    const UNVISITED: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNVISITED; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    // (node, next edge position)
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut next_index = 0;
    let mut count = 0;

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        lowlink[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = adj[v].get(*pos) {
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    lowlink[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                lowlink[parent] = lowlink[parent].min(lowlink[v]);
            }
            if lowlink[v] == index[v] {
                count += 1;
                while let Some(w) = stack.pop() {
                    on_stack[w] = false;
                    if w == v {
                        break;
                    }
                }
            }
        }
    }
    count
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

fn weakly_connected_components(g: &KnowledgeGraph) -> usize {
    let mut uf = UnionFind::new(g.num_entities());
    let mut components = g.num_entities();
    for t in g.triples() {
        if uf.union(t.head, t.tail) {
            components -= 1;
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Triple;
    use proptest::prelude::*;

    /// SCC and WCC counts by explicit reachability: O(V·(V+E)).
    fn brute_force_components(n: usize, edges: &[(usize, usize)]) -> (usize, usize) {
        let reach = |undirected: bool| -> Vec<Vec<bool>> {
            let mut adj = vec![Vec::new(); n];
            for &(a, b) in edges {
                adj[a].push(b);
                if undirected {
                    adj[b].push(a);
                }
            }
            (0..n)
                .map(|s| {
                    let mut seen = vec![false; n];
                    let mut todo = vec![s];
                    seen[s] = true;
                    while let Some(v) = todo.pop() {
                        for &w in &adj[v] {
                            if !seen[w] {
                                seen[w] = true;
                                todo.push(w);
                            }
                        }
                    }
                    seen
                })
                .collect()
        };
        let count_classes = |same: &dyn Fn(usize, usize) -> bool| {
            let mut rep: Vec<usize> = Vec::new();
            for v in 0..n {
                if !rep.iter().any(|&r| same(r, v)) {
                    rep.push(v);
                }
            }
            rep.len()
        };
        let directed = reach(false);
        let undirected = reach(true);
        let scc = count_classes(&|a, b| directed[a][b] && directed[b][a]);
        let wcc = count_classes(&|a, b| undirected[a][b]);
        (scc, wcc)
    }

    #[test]
    fn small_graph_components() {
        // a→b, b→a, c→d
        let g = KnowledgeGraph::from_named(&[("a", "r", "b"), ("b", "r", "a"), ("c", "r", "d")]).unwrap();
        let s = compute_stats(&g);
        assert_eq!(s.num_scc, 3);
        assert_eq!(s.num_wcc, 2);
        assert_eq!(s.num_multi_edge_triples, 0);
        assert_eq!(brute_force_components(4, &[(0, 1), (1, 0), (2, 3)]), (3, 2));
    }

    #[test]
    fn multi_predicate_ids() {
        let g = KnowledgeGraph::from_named(&[("a", "r1", "b"), ("a", "r2", "b"), ("a", "r1", "c")]).unwrap();
        assert_eq!(multi_predicate_triple_ids(&g), vec![0, 1]);
        assert_eq!(compute_stats(&g).num_multi_edge_triples, 2);

        let g = KnowledgeGraph::from_named(&[("a", "r1", "b"), ("b", "r1", "a"), ("a", "r2", "c")]).unwrap();
        assert!(multi_predicate_triple_ids(&g).is_empty());
    }

    #[test]
    fn deep_chain_does_not_overflow() {
        let n = 200_000;
        let triples = (0..n - 1).map(|i| Triple::new(i, 0, i + 1));
        let g = KnowledgeGraph::from_ids(n, 1, triples).unwrap();
        let s = compute_stats(&g);
        assert_eq!(s.num_scc, n);
        assert_eq!(s.num_wcc, 1);
    }

    proptest! {
        #[test]
        fn components_match_reachability_oracle(
            n in 1usize..30,
            raw in proptest::collection::vec((0usize..30, 0usize..3, 0usize..30), 0..60),
        ) {
            let triples: Vec<Triple> = raw
                .iter()
                .map(|&(h, p, t)| Triple::new(h % n, p, t % n))
                .collect();
            let g = KnowledgeGraph::from_ids(n, 3, triples.clone()).unwrap();
            let s = compute_stats(&g);
            let edges: Vec<(usize, usize)> = g.triples().iter().map(|t| (t.head, t.tail)).collect();
            let (scc, wcc) = brute_force_components(n, &edges);
            prop_assert_eq!(s.num_scc, scc);
            prop_assert_eq!(s.num_wcc, wcc);
            prop_assert!(s.num_wcc <= s.num_scc && s.num_scc <= s.num_entities);
            prop_assert!(s.num_multi_edge_triples <= s.num_triples);
        }
    }
}
