//! Exact query cardinality by post-order dynamic programming.
//!
//! Counts distinct assignments of all query variables (node, predicate,
//! qualifier) such that every fact pattern is satisfied by at least one data
//! fact; parallel facts with identical matched content contribute once per
//! assignment. Acyclic skeletons run a rooted post-order DP with branch
//! merging; single-cycle skeletons pin one cycle node per candidate entity,
//! split it into two bound replicas, and sum the acyclic results.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::error::{CoreError, Result};
use crate::hkg::{EntityId, Fact, Hkg};
use crate::query::{validate, FactPattern, Query, Term, Violation};
use crate::skeleton::{NodeKey, Skeleton};

/// DP state: matched entity -> number of partial assignments; present keys
/// always carry counts >= 1, absence means zero.
pub type MatchTable = HashMap<EntityId, u64>;

fn checked_add(a: u64, b: u64) -> Result<u64> {
    a.checked_add(b).ok_or(CoreError::CountOverflow)
}

fn checked_mul(a: u64, b: u64) -> Result<u64> {
    a.checked_mul(b).ok_or(CoreError::CountOverflow)
}

/// Exact cardinality of a valid query whose predicate/qualifier variables are
/// local to a single pattern.
pub fn exact_cardinality(hkg: &Hkg, query: &Query) -> Result<u64> {
    exact_cardinality_rooted(hkg, query, None)
}

/// Same as [`exact_cardinality`] with an explicit DP root (skeleton node
/// index) for acyclic queries; used to check root invariance.
pub fn exact_cardinality_rooted(hkg: &Hkg, query: &Query, root: Option<usize>) -> Result<u64> {
    let violations = validate(query);
    if !violations.is_empty() {
        let msg = violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        let structural_only = violations
            .iter()
            .all(|v| matches!(v, Violation::EmptyQuery | Violation::Disconnected));
        if structural_only {
            return Err(CoreError::InvalidQuery(msg));
        }
        return Err(CoreError::UnsupportedQuery(msg));
    }

    let skel = Skeleton::of(query);
    let mut problem = Problem::from_skeleton(query, &skel);
    match skel.cyclomatic() {
        0 => tree_dp(hkg, query, &problem, root.unwrap_or(0)),
        1 => {
            let (cycle_edges, cycle_nodes) = skel
                .find_cycle()
                .expect("cyclomatic number 1 implies a cycle");
            // Pin a bound cycle node when one exists: single candidate.
            let pin = cycle_nodes
                .iter()
                .copied()
                .find(|&n| !skel.nodes[n].is_var())
                .unwrap_or(cycle_nodes[0]);
            let split_edge = cycle_edges
                .iter()
                .copied()
                .find(|&e| skel.edges[e].subject == pin || skel.edges[e].object == pin)
                .expect("cycle edges touch the pin node");
            let replica = problem.split(pin, split_edge);
            let candidates: Vec<EntityId> = match &skel.nodes[pin] {
                NodeKey::Bound(e) => vec![*e],
                NodeKey::Var(_) => pin_candidates(hkg, query, &skel, pin),
            };
            let mut total = 0u64;
            for v in candidates {
                problem.domains[pin] = Some(v);
                problem.domains[replica] = Some(v);
                total = checked_add(total, tree_dp(hkg, query, &problem, root.unwrap_or(pin))?)?;
            }
            Ok(total)
        }
        n => Err(CoreError::UnsupportedQuery(format!(
            "skeleton has {n} independent cycles"
        ))),
    }
}

/// Number of distinct local (predicate/qualifier variable) assignments
/// satisfiable by some fact from `s` to `o` under the pattern; 1 when all
/// pattern atoms are bound and a satisfying fact exists.
pub fn per_edge_match_weight(hkg: &Hkg, pattern: &FactPattern, s: EntityId, o: EntityId) -> u64 {
    if let Some(b) = pattern.subject.bound() {
        if b != s {
            return 0;
        }
    }
    if let Some(b) = pattern.object.bound() {
        if b != o {
            return 0;
        }
    }
    if let (Some(sn), Some(on)) = (pattern.subject.var_name(), pattern.object.var_name()) {
        if sn == on && s != o {
            return 0;
        }
    }
    let mut assignments: HashSet<Vec<u32>> = HashSet::new();
    let candidates: Vec<u32> = match pattern.predicate.bound() {
        Some(p) => hkg.facts_from_with(s, p).to_vec(),
        None => hkg.facts_from(s).to_vec(),
    };
    for fid in candidates {
        let fact = hkg.fact(fid);
        if fact.object != o {
            continue;
        }
        for asg in local_assignments(pattern, fact) {
            assignments.insert(asg);
        }
    }
    assignments.len() as u64
}

/// Distinct assignments of the pattern's local variables (predicate plus
/// qualifier atoms) witnessed by this fact, as value vectors in slot order.
/// Repeated local variable names share a slot. An empty vector means the
/// pattern has no local variables and the fact satisfies it.
pub(crate) fn local_assignments(pattern: &FactPattern, fact: &Fact) -> Vec<Vec<u32>> {
    // Slot order: predicate first, then qualifier atoms; repeats share a slot.
    fn add_slot<'a>(slots: &mut Vec<&'a str>, name: &'a str) {
        if !slots.iter().any(|&s| s == name) {
            slots.push(name);
        }
    }
    let mut pattern_slots: Vec<&str> = Vec::new();
    if let Some(name) = pattern.predicate.var_name() {
        add_slot(&mut pattern_slots, name);
    }
    for (qr, qe) in &pattern.qualifiers {
        if let Some(name) = qr.var_name() {
            add_slot(&mut pattern_slots, name);
        }
        if let Some(name) = qe.var_name() {
            add_slot(&mut pattern_slots, name);
        }
    }
    let slot_idx = |name: &str| pattern_slots.iter().position(|&s| s == name).unwrap();

    let mut assignment: Vec<Option<u32>> = vec![None; pattern_slots.len()];
    match &pattern.predicate {
        Term::Bound(r) => {
            if *r != fact.predicate {
                return Vec::new();
            }
        }
        Term::Var(name) => assignment[slot_idx(name)] = Some(fact.predicate.0),
    }

    let mut used = vec![false; fact.qualifiers.len()];
    let mut out: HashSet<Vec<u32>> = HashSet::new();
    search_qualifiers(
        pattern,
        fact,
        0,
        &mut assignment,
        &mut used,
        &slot_idx,
        &mut out,
    );
    out.into_iter().collect()
}

#[allow(clippy::too_many_arguments)]
fn search_qualifiers(
    pattern: &FactPattern,
    fact: &Fact,
    slot: usize,
    assignment: &mut Vec<Option<u32>>,
    used: &mut Vec<bool>,
    slot_idx: &dyn Fn(&str) -> usize,
    out: &mut HashSet<Vec<u32>>,
) {
    if slot == pattern.qualifiers.len() {
        out.insert(
            assignment
                .iter()
                .map(|v| v.expect("all slots bound at a full match"))
                .collect(),
        );
        return;
    }
    let (qr_term, qe_term) = &pattern.qualifiers[slot];
    for (i, &(ar, ae)) in fact.qualifiers.iter().enumerate() {
        if used[i] {
            continue;
        }
        let mut bound_here: Vec<usize> = Vec::new();
        let mut ok = true;
        match qr_term {
            Term::Bound(r) => ok = *r == ar,
            Term::Var(name) => {
                let s = slot_idx(name);
                match assignment[s] {
                    Some(v) => ok = v == ar.0,
                    None => {
                        assignment[s] = Some(ar.0);
                        bound_here.push(s);
                    }
                }
            }
        }
        if ok {
            match qe_term {
                Term::Bound(e) => ok = *e == ae,
                Term::Var(name) => {
                    let s = slot_idx(name);
                    match assignment[s] {
                        Some(v) => ok = v == ae.0,
                        None => {
                            assignment[s] = Some(ae.0);
                            bound_here.push(s);
                        }
                    }
                }
            }
        }
        if ok {
            used[i] = true;
            search_qualifiers(pattern, fact, slot + 1, assignment, used, slot_idx, out);
            used[i] = false;
        }
        for s in bound_here {
            assignment[s] = None;
        }
    }
}

// ---------------------------------------------------------------------------
// The rooted DP.
// ---------------------------------------------------------------------------

struct Problem {
    /// Per node: pinned entity (bound term, or cycle candidate) or free.
    domains: Vec<Option<EntityId>>,
    /// Edges as (subject node, object node, pattern index).
    edges: Vec<(usize, usize, usize)>,
}

impl Problem {
    fn from_skeleton(_query: &Query, skel: &Skeleton) -> Problem {
        Problem {
            domains: skel
                .nodes
                .iter()
                .map(|n| match n {
                    NodeKey::Bound(e) => Some(*e),
                    NodeKey::Var(_) => None,
                })
                .collect(),
            edges: skel
                .edges
                .iter()
                .map(|e| (e.subject, e.object, e.pattern))
                .collect(),
        }
    }

    /// Detach `edge`'s endpoint at `pin` onto a fresh replica node, breaking
    /// the cycle. Returns the replica index. Self-loops detach the object.
    fn split(&mut self, pin: usize, edge: usize) -> usize {
        let replica = self.domains.len();
        self.domains.push(None);
        let (s, o, _) = self.edges[edge];
        if s == pin && o == pin {
            self.edges[edge].1 = replica;
        } else if o == pin {
            self.edges[edge].1 = replica;
        } else {
            debug_assert_eq!(s, pin);
            self.edges[edge].0 = replica;
        }
        replica
    }
}

/// Entities that can sit at the pin node: intersection, over the pin's
/// incident patterns, of endpoint values of compatible facts.
fn pin_candidates(hkg: &Hkg, query: &Query, skel: &Skeleton, pin: usize) -> Vec<EntityId> {
    let mut result: Option<HashSet<EntityId>> = None;
    for &(edge_idx, _) in &skel.adjacency[pin] {
        let edge = skel.edges[edge_idx];
        let pattern = &query.patterns[edge.pattern];
        let pin_is_subject = edge.subject == pin;
        let mut set = HashSet::new();
        for fact in hkg.facts() {
            if let Some(p) = pattern.predicate.bound() {
                if fact.predicate != p {
                    continue;
                }
            }
            if edge.subject == edge.object && fact.subject != fact.object {
                continue;
            }
            let over_constrained = |term: &Term<EntityId>, value: EntityId| {
                term.bound().is_some_and(|b| b != value)
            };
            if over_constrained(&pattern.subject, fact.subject)
                || over_constrained(&pattern.object, fact.object)
            {
                continue;
            }
            set.insert(if pin_is_subject { fact.subject } else { fact.object });
        }
        result = Some(match result {
            None => set,
            Some(prev) => prev.intersection(&set).copied().collect(),
        });
        if result.as_ref().is_some_and(HashSet::is_empty) {
            break;
        }
    }
    let mut out: Vec<EntityId> = result.unwrap_or_default().into_iter().collect();
    out.sort_unstable();
    out
}

enum NodeTable {
    /// Free leaf with no evidence yet: weight 1 for every entity.
    Uniform,
    Map(MatchTable),
}

fn tree_dp(hkg: &Hkg, query: &Query, prob: &Problem, root: usize) -> Result<u64> {
    let n = prob.domains.len();
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (ei, &(s, o, _)) in prob.edges.iter().enumerate() {
        debug_assert_ne!(s, o, "tree DP must not see self-loops");
        adjacency[s].push((ei, o));
        adjacency[o].push((ei, s));
    }

    // BFS rooting; reverse BFS order processes children before parents.
    let mut parent_edge: Vec<Option<usize>> = vec![None; n];
    let mut bfs = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(node) = queue.pop_front() {
        bfs.push(node);
        for &(ei, other) in &adjacency[node] {
            if !seen[other] {
                seen[other] = true;
                parent_edge[other] = Some(ei);
                queue.push_back(other);
            }
        }
    }
    debug_assert_eq!(bfs.len(), n, "tree DP input must be connected");

    let mut tables: Vec<Option<NodeTable>> = (0..n).map(|_| None).collect();
    for &node in bfs.iter().rev() {
        let mut messages: Vec<MatchTable> = Vec::new();
        for &(ei, child) in &adjacency[node] {
            if parent_edge[node] == Some(ei) {
                continue;
            }
            let child_table = tables[child].take().expect("children processed first");
            messages.push(edge_message(hkg, query, prob, ei, node, child, child_table)?);
        }
        if messages.is_empty() {
            tables[node] = Some(match prob.domains[node] {
                Some(e) => NodeTable::Map(MatchTable::from([(e, 1)])),
                None => NodeTable::Uniform,
            });
            continue;
        }
        // Merge branches smallest-table-first; intersect keys, multiply counts.
        messages.sort_by_key(MatchTable::len);
        let mut merged = messages.remove(0);
        if let Some(pin) = prob.domains[node] {
            merged.retain(|&k, _| k == pin);
        }
        for other in messages {
            let mut next = MatchTable::with_capacity(merged.len().min(other.len()));
            for (&k, &v) in &merged {
                if let Some(&w) = other.get(&k) {
                    next.insert(k, checked_mul(v, w)?);
                }
            }
            merged = next;
        }
        tables[node] = Some(NodeTable::Map(merged));
    }

    match tables[root].take().expect("root processed last") {
        NodeTable::Uniform => Ok(hkg.entity_count() as u64),
        NodeTable::Map(table) => {
            let mut total = 0u64;
            for &v in table.values() {
                total = checked_add(total, v)?;
            }
            Ok(total)
        }
    }
}

/// Message from `child` to `parent` along one edge: for each parent value,
/// the number of (child value, local assignment) extensions, weighted by the
/// child's table. Distinct facts witnessing the same assignment between the
/// same endpoint pair count once.
fn edge_message(
    hkg: &Hkg,
    query: &Query,
    prob: &Problem,
    edge_idx: usize,
    parent: usize,
    child: usize,
    child_table: NodeTable,
) -> Result<MatchTable> {
    let (s_node, _o_node, pattern_idx) = prob.edges[edge_idx];
    let pattern = &query.patterns[pattern_idx];
    let child_is_subject = s_node == child;
    let mut msg = MatchTable::new();

    match child_table {
        NodeTable::Map(table) => {
            for (&child_val, &count) in &table {
                let fact_ids: Vec<u32> = if child_is_subject {
                    match pattern.predicate.bound() {
                        Some(p) => hkg.facts_from_with(child_val, p).to_vec(),
                        None => hkg.facts_from(child_val).to_vec(),
                    }
                } else {
                    match pattern.predicate.bound() {
                        Some(p) => hkg.facts_to_with(child_val, p).to_vec(),
                        None => hkg.facts_to(child_val).to_vec(),
                    }
                };
                let mut per_parent: HashMap<EntityId, HashSet<Vec<u32>>> = HashMap::new();
                for fid in fact_ids {
                    let fact = hkg.fact(fid);
                    let parent_val = if child_is_subject { fact.object } else { fact.subject };
                    if prob.domains[parent].is_some_and(|p| p != parent_val) {
                        continue;
                    }
                    for asg in local_assignments(pattern, fact) {
                        per_parent.entry(parent_val).or_default().insert(asg);
                    }
                }
                for (parent_val, set) in per_parent {
                    let add = checked_mul(set.len() as u64, count)?;
                    let entry = msg.entry(parent_val).or_insert(0);
                    *entry = checked_add(*entry, add)?;
                }
            }
        }
        NodeTable::Uniform => {
            let mut per_pair: HashMap<(EntityId, EntityId), HashSet<Vec<u32>>> = HashMap::new();
            for fact in hkg.facts() {
                if let Some(p) = pattern.predicate.bound() {
                    if fact.predicate != p {
                        continue;
                    }
                }
                let (parent_val, child_val) = if child_is_subject {
                    (fact.object, fact.subject)
                } else {
                    (fact.subject, fact.object)
                };
                if prob.domains[parent].is_some_and(|p| p != parent_val) {
                    continue;
                }
                for asg in local_assignments(pattern, fact) {
                    per_pair.entry((parent_val, child_val)).or_default().insert(asg);
                }
            }
            for ((parent_val, _), set) in per_pair {
                let entry = msg.entry(parent_val).or_insert(0);
                *entry = checked_add(*entry, set.len() as u64)?;
            }
        }
    }
    msg.retain(|_, v| *v > 0);
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hkg::{Hkg, RelationId};

    fn toy() -> Hkg {
        Hkg::parse("a,p,b\na,p,c\nb,q,c,t,x\na,p,b,t,x\n").unwrap()
    }

    fn ent(hkg: &Hkg, l: &str) -> Term<EntityId> {
        Term::Bound(hkg.vocab().entity(l).unwrap())
    }

    fn rel(hkg: &Hkg, l: &str) -> Term<RelationId> {
        Term::Bound(hkg.vocab().relation(l).unwrap())
    }

    #[test]
    fn bound_subject_open_object() {
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("o"))],
        );
        assert_eq!(exact_cardinality(&hkg, &q).unwrap(), 2);
    }

    #[test]
    fn qualifier_constraint_restricts() {
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![
                FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("o")).with_qualifiers(
                    vec![(rel(&hkg, "t"), ent(&hkg, "x"))],
                ),
            ],
        );
        assert_eq!(exact_cardinality(&hkg, &q).unwrap(), 1);
    }

    #[test]
    fn all_variable_triple_counts_distinct_triples() {
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![FactPattern::new(Term::var("s"), Term::var("p"), Term::var("o"))],
        );
        assert_eq!(exact_cardinality(&hkg, &q).unwrap(), 3);
    }

    #[test]
    fn chain_on_toy() {
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![
                FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("x")),
                FactPattern::new(Term::var("x"), rel(&hkg, "q"), Term::var("y")),
            ],
        );
        assert_eq!(exact_cardinality(&hkg, &q).unwrap(), 1);
    }

    #[test]
    fn per_edge_weights_on_toy() {
        let hkg = toy();
        let a = hkg.vocab().entity("a").unwrap();
        let b = hkg.vocab().entity("b").unwrap();
        let c = hkg.vocab().entity("c").unwrap();

        let bound = FactPattern::new(Term::var("s"), rel(&hkg, "p"), Term::var("o"));
        assert_eq!(per_edge_match_weight(&hkg, &bound, a, b), 1);

        let pred_var = FactPattern::new(Term::var("s"), Term::var("r"), Term::var("o"));
        assert_eq!(per_edge_match_weight(&hkg, &pred_var, a, b), 1);

        let qual_var = FactPattern::new(Term::var("s"), rel(&hkg, "q"), Term::var("o"))
            .with_qualifiers(vec![(rel(&hkg, "t"), Term::var("v"))]);
        assert_eq!(per_edge_match_weight(&hkg, &qual_var, b, c), 1);
    }

    #[test]
    fn root_invariance_on_acyclic() {
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![
                FactPattern::new(Term::var("s"), rel(&hkg, "p"), Term::var("x")),
                FactPattern::new(Term::var("x"), rel(&hkg, "q"), Term::var("y")),
            ],
        );
        let skel = Skeleton::of(&q);
        let baseline = exact_cardinality(&hkg, &q).unwrap();
        for root in 0..skel.nodes.len() {
            assert_eq!(
                exact_cardinality_rooted(&hkg, &q, Some(root)).unwrap(),
                baseline
            );
        }
    }

    #[test]
    fn triangle_cycle_counts() {
        // Triangle a->b->c->a plus a stray edge; count directed triangles.
        let hkg = Hkg::parse("a,p,b\nb,p,c\nc,p,a\nb,p,d\n").unwrap();
        let q = Query::new(
            "q",
            vec![
                FactPattern::new(Term::var("x"), rel(&hkg, "p"), Term::var("y")),
                FactPattern::new(Term::var("y"), rel(&hkg, "p"), Term::var("z")),
                FactPattern::new(Term::var("z"), rel(&hkg, "p"), Term::var("x")),
            ],
        );
        // Three rotations of the one triangle.
        assert_eq!(exact_cardinality(&hkg, &q).unwrap(), 3);
    }

    #[test]
    fn self_loop_query() {
        let hkg = Hkg::parse("a,p,a\nb,p,c\nd,p,d\n").unwrap();
        let q = Query::new(
            "q",
            vec![FactPattern::new(Term::var("x"), rel(&hkg, "p"), Term::var("x"))],
        );
        assert_eq!(exact_cardinality(&hkg, &q).unwrap(), 2);
    }

    #[test]
    fn two_cycles_unsupported() {
        let hkg = toy();
        let e = |s: &str, o: &str| {
            FactPattern::new(Term::var(s), rel(&hkg, "p"), Term::var(o))
        };
        let q = Query::new(
            "q",
            vec![e("a", "b"), e("b", "a"), e("b", "c"), e("c", "b")],
        );
        assert!(matches!(
            exact_cardinality(&hkg, &q),
            Err(CoreError::UnsupportedQuery(_))
        ));
    }

    #[test]
    fn shared_predicate_variable_unsupported() {
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![
                FactPattern::new(Term::var("a"), Term::var("r"), Term::var("b")),
                FactPattern::new(Term::var("b"), Term::var("r"), Term::var("c")),
            ],
        );
        assert!(matches!(
            exact_cardinality(&hkg, &q),
            Err(CoreError::UnsupportedQuery(_))
        ));
    }

    #[test]
    fn overflow_is_reported() {
        // Complete digraph over 40 entities, one relation; a long chain of
        // free variables multiplies past u64.
        let mut text = String::new();
        for i in 0..40 {
            for j in 0..40 {
                text.push_str(&format!("n{i},p,n{j}\n"));
            }
        }
        let hkg = Hkg::parse(&text).unwrap();
        let p = Term::Bound(hkg.vocab().relation("p").unwrap());
        let patterns: Vec<FactPattern> = (0..14)
            .map(|i| {
                FactPattern::new(
                    Term::var(&format!("v{i}")),
                    p.clone(),
                    Term::var(&format!("v{}", i + 1)),
                )
            })
            .collect();
        let q = Query::new("q", patterns);
        assert!(matches!(
            exact_cardinality(&hkg, &q),
            Err(CoreError::CountOverflow)
        ));
    }
}
