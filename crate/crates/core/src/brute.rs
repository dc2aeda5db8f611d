//! Independent brute-force cardinality oracle.
//!
//! Backtracking enumeration over variable assignments; counts assignments
//! where each pattern is satisfied by at least one fact with an injective
//! qualifier embedding. Supports shared predicate/qualifier variables and
//! multi-cycle skeletons (a superset of the DP engine's contract), at
//! enumeration cost. Kept free of the DP engine's matching helpers so the
//! two count through different code paths.

use std::collections::HashMap;

use crate::error::{CoreError, Result};
use crate::hkg::{EntityId, Fact, Hkg, RelationId};
use crate::query::{FactPattern, Query, Term};

/// What one unit of counting is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountingMode {
    /// Distinct variable assignments, existential over facts (the toolkit's
    /// counting semantics).
    #[default]
    Assignment,
    /// Assignment-and-fact-choice tuples: parallel identical matches count
    /// per fact. For comparison only.
    FactLevel,
}

#[derive(Debug, Clone, Copy)]
pub struct BruteConfig {
    /// Reject upfront when the full domain product exceeds this.
    pub max_domain_product: f64,
    /// Hard cap on backtracking steps actually taken.
    pub max_steps: u64,
}

impl Default for BruteConfig {
    fn default() -> Self {
        BruteConfig {
            max_domain_product: 5e8,
            max_steps: 500_000_000,
        }
    }
}

pub fn brute_force_cardinality(hkg: &Hkg, query: &Query) -> Result<u64> {
    brute_force_with(hkg, query, CountingMode::Assignment, &BruteConfig::default())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum VarKind {
    Entity,
    Relation,
}

#[derive(Clone, Copy)]
enum Slot {
    Bound(u32),
    Var(usize),
}

struct GroundPattern {
    subject: Slot,
    predicate: Slot,
    object: Slot,
    qualifiers: Vec<(Slot, Slot)>,
    /// Highest variable index used anywhere in the pattern.
    last_var: Option<usize>,
    /// Highest variable index used in the main triple.
    last_main_var: Option<usize>,
}

pub fn brute_force_with(
    hkg: &Hkg,
    query: &Query,
    mode: CountingMode,
    config: &BruteConfig,
) -> Result<u64> {
    if query.patterns.is_empty() {
        return Err(CoreError::InvalidQuery("query has no fact patterns".into()));
    }

    // Order patterns as a connected expansion when possible so grounding
    // checks fire early; fall back to input order for stray components.
    let pattern_order = connected_expansion(query);

    // Collect variables in first-use order along that expansion.
    fn touch<'q>(
        name: &'q str,
        kind: VarKind,
        var_index: &mut HashMap<&'q str, usize>,
        var_kinds: &mut Vec<VarKind>,
    ) -> Result<()> {
        match var_index.get(name) {
            Some(&i) if var_kinds[i] != kind => Err(CoreError::InvalidQuery(format!(
                "variable ?{name} used in both entity and relation positions"
            ))),
            Some(_) => Ok(()),
            None => {
                var_index.insert(name, var_kinds.len());
                var_kinds.push(kind);
                Ok(())
            }
        }
    }
    let mut var_index: HashMap<&str, usize> = HashMap::new();
    let mut var_kinds: Vec<VarKind> = Vec::new();
    for &pi in &pattern_order {
        let pat = &query.patterns[pi];
        for term in [&pat.subject, &pat.object] {
            if let Some(n) = term.var_name() {
                touch(n, VarKind::Entity, &mut var_index, &mut var_kinds)?;
            }
        }
        if let Some(n) = pat.predicate.var_name() {
            touch(n, VarKind::Relation, &mut var_index, &mut var_kinds)?;
        }
        for (qr, qe) in &pat.qualifiers {
            if let Some(n) = qr.var_name() {
                touch(n, VarKind::Relation, &mut var_index, &mut var_kinds)?;
            }
            if let Some(n) = qe.var_name() {
                touch(n, VarKind::Entity, &mut var_index, &mut var_kinds)?;
            }
        }
    }

    // Upfront guard on |V|^{#node vars}; predicate and qualifier variables
    // are pattern-local and prune fast, so the step budget covers them.
    let node_vars = query
        .patterns
        .iter()
        .flat_map(|p| [&p.subject, &p.object])
        .filter_map(|t| t.var_name())
        .collect::<std::collections::HashSet<_>>()
        .len();
    let product = (hkg.entity_count().max(1) as f64).powi(node_vars as i32);
    if product > config.max_domain_product {
        return Err(CoreError::EnumerationBudget(format!(
            "|V|^{node_vars} exceeds {:.1e}",
            config.max_domain_product
        )));
    }

    let slot = |term_kind: TermKind| -> Slot {
        match term_kind {
            TermKind::BoundE(e) => Slot::Bound(e.0),
            TermKind::BoundR(r) => Slot::Bound(r.0),
            TermKind::V(name) => Slot::Var(var_index[name]),
        }
    };
    enum TermKind<'a> {
        BoundE(EntityId),
        BoundR(RelationId),
        V(&'a str),
    }
    let eslot = |t: &Term<EntityId>| match t {
        Term::Bound(e) => slot(TermKind::BoundE(*e)),
        Term::Var(n) => slot(TermKind::V(n)),
    };
    let rslot = |t: &Term<RelationId>| match t {
        Term::Bound(r) => slot(TermKind::BoundR(*r)),
        Term::Var(n) => slot(TermKind::V(n)),
    };

    let grounded: Vec<GroundPattern> = pattern_order
        .iter()
        .map(|&pi| {
            let pat = &query.patterns[pi];
            let subject = eslot(&pat.subject);
            let predicate = rslot(&pat.predicate);
            let object = eslot(&pat.object);
            let qualifiers: Vec<(Slot, Slot)> = pat
                .qualifiers
                .iter()
                .map(|(qr, qe)| (rslot(qr), eslot(qe)))
                .collect();
            let max_var = |slots: &[Slot]| {
                slots
                    .iter()
                    .filter_map(|s| match s {
                        Slot::Var(i) => Some(*i),
                        Slot::Bound(_) => None,
                    })
                    .max()
            };
            let main = [subject, predicate, object];
            let mut all: Vec<Slot> = main.to_vec();
            for &(a, b) in &qualifiers {
                all.push(a);
                all.push(b);
            }
            GroundPattern {
                subject,
                predicate,
                object,
                qualifiers,
                last_var: max_var(&all),
                last_main_var: max_var(&main),
            }
        })
        .collect();

    let mut env = Env {
        hkg,
        grounded: &grounded,
        values: vec![0u32; var_kinds.len()],
        kinds: &var_kinds,
        mode,
        steps: 0,
        max_steps: config.max_steps,
    };
    env.count(0)
}

struct Env<'a> {
    hkg: &'a Hkg,
    grounded: &'a [GroundPattern],
    values: Vec<u32>,
    kinds: &'a [VarKind],
    mode: CountingMode,
    steps: u64,
    max_steps: u64,
}

impl Env<'_> {
    fn count(&mut self, var: usize) -> Result<u64> {
        self.steps += 1;
        if self.steps > self.max_steps {
            return Err(CoreError::EnumerationBudget(format!(
                "step budget {} exhausted",
                self.max_steps
            )));
        }
        if var == self.values.len() {
            return self.weight_of_full_assignment();
        }
        let domain = match self.kinds[var] {
            VarKind::Entity => self.hkg.entity_count() as u32,
            VarKind::Relation => self.hkg.relation_count() as u32,
        };
        let mut total = 0u64;
        for value in 0..domain {
            self.values[var] = value;
            if !self.consistent_after(var) {
                continue;
            }
            let below = self.count(var + 1)?;
            total = total
                .checked_add(below)
                .ok_or(CoreError::CountOverflow)?;
        }
        Ok(total)
    }

    /// Prune: every pattern fully grounded at `var` must be satisfiable, and
    /// every main triple grounded at `var` must match some fact.
    fn consistent_after(&self, var: usize) -> bool {
        for gp in self.grounded {
            if gp.last_var == Some(var) {
                if self.satisfying_fact_count(gp) == 0 {
                    return false;
                }
            } else if gp.last_main_var == Some(var)
                && gp.last_var.is_none_or(|lv| lv > var)
                && !self.main_triple_exists(gp)
            {
                return false;
            }
        }
        true
    }

    fn weight_of_full_assignment(&self) -> Result<u64> {
        let mut weight = 1u64;
        for gp in self.grounded {
            let k = self.satisfying_fact_count(gp);
            if k == 0 {
                return Ok(0);
            }
            match self.mode {
                CountingMode::Assignment => {}
                CountingMode::FactLevel => {
                    weight = weight.checked_mul(k).ok_or(CoreError::CountOverflow)?;
                }
            }
        }
        Ok(weight)
    }

    fn value(&self, slot: Slot) -> u32 {
        match slot {
            Slot::Bound(v) => v,
            Slot::Var(i) => self.values[i],
        }
    }

    fn main_triple_exists(&self, gp: &GroundPattern) -> bool {
        let (s, p, o) = (self.value(gp.subject), self.value(gp.predicate), self.value(gp.object));
        self.hkg
            .facts()
            .iter()
            .any(|f| f.subject.0 == s && f.predicate.0 == p && f.object.0 == o)
    }

    /// How many facts satisfy the grounded pattern. Distinct grounded
    /// qualifier pairs must all be present in the fact; duplicate grounded
    /// pairs can never embed injectively into a duplicate-free fact.
    fn satisfying_fact_count(&self, gp: &GroundPattern) -> u64 {
        let (s, p, o) = (self.value(gp.subject), self.value(gp.predicate), self.value(gp.object));
        let mut required: Vec<(u32, u32)> = gp
            .qualifiers
            .iter()
            .map(|&(qr, qe)| (self.value(qr), self.value(qe)))
            .collect();
        required.sort_unstable();
        if required.windows(2).any(|w| w[0] == w[1]) {
            return 0;
        }
        self.hkg
            .facts()
            .iter()
            .filter(|f| self.fact_matches(f, s, p, o, &required))
            .count() as u64
    }

    fn fact_matches(&self, f: &Fact, s: u32, p: u32, o: u32, required: &[(u32, u32)]) -> bool {
        f.subject.0 == s
            && f.predicate.0 == p
            && f.object.0 == o
            && required
                .iter()
                .all(|&(qr, qe)| f.qualifiers.iter().any(|&(ar, ae)| ar.0 == qr && ae.0 == qe))
    }
}

/// Pattern order where each pattern (after the first of its component)
/// shares a node with an earlier one.
fn connected_expansion(query: &Query) -> Vec<usize> {
    let n = query.patterns.len();
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    let shares_node = |a: &FactPattern, b: &FactPattern| {
        let ends = |p: &FactPattern| [p.subject.clone(), p.object.clone()];
        ends(a).iter().any(|t| ends(b).contains(t))
    };
    while order.len() < n {
        let mut progressed = false;
        for i in 0..n {
            if placed[i] {
                continue;
            }
            let connects = order.is_empty()
                || order
                    .iter()
                    .any(|&j| shares_node(&query.patterns[i], &query.patterns[j]));
            if connects {
                placed[i] = true;
                order.push(i);
                progressed = true;
            }
        }
        if !progressed {
            // Disconnected remainder: start its own component.
            let next = placed.iter().position(|&p| !p).unwrap();
            placed[next] = true;
            order.push(next);
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hkg::Hkg;

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
    fn agrees_with_hand_counts_on_toy() {
        let hkg = toy();
        let q1 = Query::new(
            "q",
            vec![FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("o"))],
        );
        assert_eq!(brute_force_cardinality(&hkg, &q1).unwrap(), 2);

        let q2 = Query::new(
            "q",
            vec![
                FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("o")).with_qualifiers(
                    vec![(rel(&hkg, "t"), ent(&hkg, "x"))],
                ),
            ],
        );
        assert_eq!(brute_force_cardinality(&hkg, &q2).unwrap(), 1);

        let q3 = Query::new(
            "q",
            vec![FactPattern::new(Term::var("s"), Term::var("p"), Term::var("o"))],
        );
        assert_eq!(brute_force_cardinality(&hkg, &q3).unwrap(), 3);
    }

    #[test]
    fn chain_counts_one() {
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![
                FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("x")),
                FactPattern::new(Term::var("x"), rel(&hkg, "q"), Term::var("y")),
            ],
        );
        assert_eq!(brute_force_cardinality(&hkg, &q).unwrap(), 1);
    }

    #[test]
    fn empty_store_counts_zero() {
        let hkg = Hkg::parse("").unwrap();
        let q = Query::new(
            "q",
            vec![FactPattern::new(Term::var("s"), Term::var("p"), Term::var("o"))],
        );
        assert_eq!(brute_force_cardinality(&hkg, &q).unwrap(), 0);
    }

    #[test]
    fn fact_level_counts_parallel_facts() {
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), ent(&hkg, "b"))],
        );
        assert_eq!(brute_force_cardinality(&hkg, &q).unwrap(), 1);
        assert_eq!(
            brute_force_with(&hkg, &q, CountingMode::FactLevel, &BruteConfig::default()).unwrap(),
            2
        );
    }

    #[test]
    fn shared_predicate_variable_supported() {
        let hkg = Hkg::parse("a,p,b\nb,p,c\nb,q,c\n").unwrap();
        let q = Query::new(
            "q",
            vec![
                FactPattern::new(Term::var("x"), Term::var("r"), Term::var("y")),
                FactPattern::new(Term::var("y"), Term::var("r"), Term::var("z")),
            ],
        );
        // Only r=p chains a->b->c.
        assert_eq!(brute_force_cardinality(&hkg, &q).unwrap(), 1);
    }

    #[test]
    fn budget_guard_fires() {
        let mut text = String::new();
        for i in 0..50 {
            text.push_str(&format!("e{i},p,e{}\n", (i + 1) % 50));
        }
        let hkg = Hkg::parse(&text).unwrap();
        let patterns: Vec<FactPattern> = (0..8)
            .map(|i| {
                FactPattern::new(
                    Term::var(&format!("v{i}")),
                    Term::Bound(hkg.vocab().relation("p").unwrap()),
                    Term::var(&format!("v{}", i + 1)),
                )
            })
            .collect();
        let q = Query::new("q", patterns);
        let config = BruteConfig {
            max_domain_product: 1e6,
            max_steps: 1_000,
        };
        assert!(matches!(
            brute_force_with(&hkg, &q, CountingMode::Assignment, &config),
            Err(CoreError::EnumerationBudget(_))
        ));
    }
}
