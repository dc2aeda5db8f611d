//! Undirected multigraph view of a query's main-triple endpoints, plus a
//! canonical ordering used to assign stable numeric ids to variables.
//!
//! Bound endpoints with the same entity collapse into one node; each variable
//! name is one node. Qualifiers never contribute to the skeleton.

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::hkg::EntityId;
use crate::query::{Query, Term};

/// A skeleton node: a bound entity or a named variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKey {
    Bound(EntityId),
    Var(String),
}

impl NodeKey {
    pub fn is_var(&self) -> bool {
        matches!(self, NodeKey::Var(_))
    }
}

/// One skeleton edge per fact pattern, oriented subject -> object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkelEdge {
    pub pattern: usize,
    pub subject: usize,
    pub object: usize,
}

#[derive(Debug, Clone)]
pub struct Skeleton {
    pub nodes: Vec<NodeKey>,
    pub edges: Vec<SkelEdge>,
    /// Per node: (edge index, other endpoint). A self-loop appears twice.
    pub adjacency: Vec<Vec<(usize, usize)>>,
    node_index: HashMap<NodeKey, usize>,
}

impl Skeleton {
    pub fn of(query: &Query) -> Skeleton {
        let mut skel = Skeleton {
            nodes: Vec::new(),
            edges: Vec::new(),
            adjacency: Vec::new(),
            node_index: HashMap::new(),
        };
        for (pi, pat) in query.patterns.iter().enumerate() {
            let s = skel.intern(&pat.subject);
            let o = skel.intern(&pat.object);
            let edge_idx = skel.edges.len();
            skel.edges.push(SkelEdge {
                pattern: pi,
                subject: s,
                object: o,
            });
            skel.adjacency[s].push((edge_idx, o));
            skel.adjacency[o].push((edge_idx, s));
        }
        skel
    }

    fn intern(&mut self, term: &Term<EntityId>) -> usize {
        let key = match term {
            Term::Bound(id) => NodeKey::Bound(*id),
            Term::Var(name) => NodeKey::Var(name.clone()),
        };
        if let Some(&idx) = self.node_index.get(&key) {
            return idx;
        }
        let idx = self.nodes.len();
        self.nodes.push(key.clone());
        self.adjacency.push(Vec::new());
        self.node_index.insert(key, idx);
        idx
    }

    pub fn node_of(&self, term: &Term<EntityId>) -> Option<usize> {
        let key = match term {
            Term::Bound(id) => NodeKey::Bound(*id),
            Term::Var(name) => NodeKey::Var(name.clone()),
        };
        self.node_index.get(&key).copied()
    }

    /// Degree with self-loops counted twice.
    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn component_count(&self) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut components = 0;
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            components += 1;
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(n) = queue.pop_front() {
                for &(_, other) in &self.adjacency[n] {
                    if !seen[other] {
                        seen[other] = true;
                        queue.push_back(other);
                    }
                }
            }
        }
        components
    }

    /// Number of independent cycles: `E - V + C` over the multigraph.
    pub fn cyclomatic(&self) -> usize {
        (self.edges.len() + self.component_count()).saturating_sub(self.nodes.len())
    }

    /// For a skeleton with exactly one cycle, return the edge indices on the
    /// cycle and the node indices they touch.
    pub fn find_cycle(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        // Grow a forest edge by edge; the edge closing a cycle, together with
        // the forest path between its endpoints, forms the cycle.
        let n = self.nodes.len();
        let mut forest_adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut dsu: Vec<usize> = (0..n).collect();
        fn find(dsu: &mut Vec<usize>, mut x: usize) -> usize {
            while dsu[x] != x {
                dsu[x] = dsu[dsu[x]];
                x = dsu[x];
            }
            x
        }
        for (ei, edge) in self.edges.iter().enumerate() {
            let (u, v) = (edge.subject, edge.object);
            let (ru, rv) = (find(&mut dsu, u), find(&mut dsu, v));
            if ru == rv {
                if u == v {
                    return Some((vec![ei], vec![u]));
                }
                // BFS through the forest from u to v.
                let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
                let mut seen = vec![false; n];
                let mut queue = VecDeque::from([u]);
                seen[u] = true;
                while let Some(x) = queue.pop_front() {
                    if x == v {
                        break;
                    }
                    for &(fe, other) in &forest_adj[x] {
                        if !seen[other] {
                            seen[other] = true;
                            prev[other] = Some((fe, x));
                            queue.push_back(other);
                        }
                    }
                }
                let mut cycle_edges = vec![ei];
                let mut cycle_nodes = vec![v];
                let mut cur = v;
                while cur != u {
                    let (fe, parent) = prev[cur].expect("forest path must exist");
                    cycle_edges.push(fe);
                    cycle_nodes.push(parent);
                    cur = parent;
                }
                return Some((cycle_edges, cycle_nodes));
            }
            dsu[ru] = rv;
            forest_adj[u].push((ei, v));
            forest_adj[v].push((ei, u));
        }
        None
    }
}

// ---------------------------------------------------------------------------
// Canonical ordering.
// ---------------------------------------------------------------------------

/// Canonical, rename-invariant ordering of a query's nodes, patterns, and
/// qualifier pairs, with 1-based numeric ids for every variable.
#[derive(Debug, Clone)]
pub struct CanonicalOrder {
    /// Skeleton node indices in canonical visit order.
    pub node_order: Vec<usize>,
    /// Pattern indices in canonical order.
    pub pattern_order: Vec<usize>,
    /// Per pattern (original index): qualifier indices in canonical order.
    pub qualifier_order: Vec<Vec<usize>>,
    /// Variable name (without `?`) -> 1-based numeric id.
    pub variable_ids: BTreeMap<String, u32>,
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv(acc: u64, word: u64) -> u64 {
    let mut h = acc;
    for byte in word.to_le_bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn fnv_list(words: impl IntoIterator<Item = u64>) -> u64 {
    words.into_iter().fold(FNV_OFFSET, fnv)
}

/// Rename-invariant signature of a pattern, as seen from one endpoint.
fn edge_signature(query: &Query, edge: &SkelEdge, from_subject: bool) -> u64 {
    let pat = &query.patterns[edge.pattern];
    let pred_sig = match &pat.predicate {
        Term::Bound(r) => r.0 as u64 + 1,
        Term::Var(_) => 0,
    };
    let mut qual_sigs: Vec<u64> = pat
        .qualifiers
        .iter()
        .map(|(qr, qe)| {
            let a = qr.bound().map_or(0, |r| r.0 as u64 + 1);
            let b = qe.bound().map_or(0, |e| e.0 as u64 + 1);
            fnv_list([a, b])
        })
        .collect();
    qual_sigs.sort_unstable();
    let mut words = vec![u64::from(from_subject), pred_sig, pat.qualifiers.len() as u64];
    words.extend(qual_sigs);
    fnv_list(words)
}

pub fn canonical_order(query: &Query) -> CanonicalOrder {
    let skel = Skeleton::of(query);
    let n = skel.nodes.len();

    // Weisfeiler-Lehman style refinement over rename-invariant keys.
    let mut keys: Vec<u64> = skel
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let bound_sig = match node {
                NodeKey::Bound(e) => e.0 as u64 + 1,
                NodeKey::Var(_) => 0,
            };
            fnv_list([bound_sig, skel.adjacency[i].len() as u64])
        })
        .collect();
    for _ in 0..3 {
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let mut neigh: Vec<u64> = skel.adjacency[i]
                .iter()
                .map(|&(ei, other)| {
                    let from_subject = skel.edges[ei].subject == i && skel.edges[ei].object == other;
                    fnv_list([edge_signature(query, &skel.edges[ei], from_subject), keys[other]])
                })
                .collect();
            neigh.sort_unstable();
            let mut words = vec![keys[i]];
            words.extend(neigh);
            next.push(fnv_list(words));
        }
        keys = next;
    }

    // Bound nodes sort before variables; remaining ties break on the refined
    // key and finally input order (only automorphic nodes can tie that far).
    let sort_key = |i: usize| (skel.nodes[i].is_var(), keys[i], i);

    // Pre-order traversal from the minimal node, taking neighbors in
    // signature order. Disconnected inputs restart at the next minimal node.
    let mut visited = vec![false; n];
    let mut node_order = Vec::with_capacity(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| sort_key(i));
    for &start in &order {
        if visited[start] {
            continue;
        }
        let mut stack = vec![start];
        visited[start] = true;
        while let Some(node) = stack.pop() {
            node_order.push(node);
            let mut neighbors: Vec<(u64, bool, u64, usize, usize)> = skel.adjacency[node]
                .iter()
                .filter(|&&(_, other)| !visited[other])
                .map(|&(ei, other)| {
                    let from_subject = skel.edges[ei].subject == node;
                    (
                        edge_signature(query, &skel.edges[ei], from_subject),
                        skel.nodes[other].is_var(),
                        keys[other],
                        other,
                        ei,
                    )
                })
                .collect();
            neighbors.sort_unstable();
            // Push in reverse so the smallest is visited first.
            let mut pushed = std::collections::HashSet::new();
            for &(_, _, _, other, _) in neighbors.iter().rev() {
                if !visited[other] && pushed.insert(other) {
                    visited[other] = true;
                    stack.push(other);
                }
            }
        }
    }

    let mut node_rank = vec![0usize; n];
    for (rank, &node) in node_order.iter().enumerate() {
        node_rank[node] = rank;
    }

    // Patterns in canonical order: endpoints first, then signature.
    let mut pattern_order: Vec<usize> = (0..query.patterns.len()).collect();
    pattern_order.sort_by_key(|&pi| {
        let edge = skel.edges[pi];
        (
            node_rank[edge.subject].min(node_rank[edge.object]),
            node_rank[edge.subject],
            node_rank[edge.object],
            edge_signature(query, &edge, true),
            pi,
        )
    });

    // Canonical qualifier order inside each pattern.
    let mut qualifier_order = Vec::with_capacity(query.patterns.len());
    for pat in &query.patterns {
        let mut idxs: Vec<usize> = (0..pat.qualifiers.len()).collect();
        idxs.sort_by_key(|&qi| {
            let (qr, qe) = &pat.qualifiers[qi];
            (
                qr.bound().map_or(0, |r| r.0 as u64 + 1),
                qr.var_name().map(str::to_string),
                qe.bound().map_or(0, |e| e.0 as u64 + 1),
                qe.var_name().map(str::to_string),
                qi,
            )
        });
        qualifier_order.push(idxs);
    }

    // Assign ids: node variables in visit order, then per canonical pattern
    // its predicate variable and qualifier variables.
    let mut variable_ids = BTreeMap::new();
    let mut next_id = 1u32;
    let assign = |name: &str, ids: &mut BTreeMap<String, u32>, next: &mut u32| {
        if !ids.contains_key(name) {
            ids.insert(name.to_string(), *next);
            *next += 1;
        }
    };
    for &node in &node_order {
        if let NodeKey::Var(name) = &skel.nodes[node] {
            assign(name, &mut variable_ids, &mut next_id);
        }
    }
    for &pi in &pattern_order {
        let pat = &query.patterns[pi];
        if let Term::Var(name) = &pat.predicate {
            assign(name, &mut variable_ids, &mut next_id);
        }
        for &qi in &qualifier_order[pi] {
            let (qr, qe) = &pat.qualifiers[qi];
            if let Term::Var(name) = qr {
                assign(name, &mut variable_ids, &mut next_id);
            }
            if let Term::Var(name) = qe {
                assign(name, &mut variable_ids, &mut next_id);
            }
        }
    }

    CanonicalOrder {
        node_order,
        pattern_order,
        qualifier_order,
        variable_ids,
    }
}
