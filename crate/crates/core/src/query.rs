//! Hyper-relational conjunctive queries: terms, fact patterns, topology
//! classification, validation, and the JSON-lines wire format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::hkg::{EntityId, RelationId, Vocab};
use crate::skeleton::Skeleton;

/// A query position: either a bound atom or a named variable.
///
/// Variable names are stored without the leading `?`; the wire format always
/// writes `?name`. Labels starting with `?` are therefore not representable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term<T> {
    Bound(T),
    Var(String),
}

impl<T: Copy> Term<T> {
    pub fn var(name: &str) -> Self {
        Term::Var(name.strip_prefix('?').unwrap_or(name).to_string())
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn bound(&self) -> Option<T> {
        match self {
            Term::Bound(v) => Some(*v),
            Term::Var(_) => None,
        }
    }

    pub fn var_name(&self) -> Option<&str> {
        match self {
            Term::Var(name) => Some(name),
            Term::Bound(_) => None,
        }
    }
}

/// One fact pattern `(s, p, o, {(qr, qe)})` of a conjunctive query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactPattern {
    pub subject: Term<EntityId>,
    pub predicate: Term<RelationId>,
    pub object: Term<EntityId>,
    pub qualifiers: Vec<(Term<RelationId>, Term<EntityId>)>,
}

impl FactPattern {
    pub fn new(
        subject: Term<EntityId>,
        predicate: Term<RelationId>,
        object: Term<EntityId>,
    ) -> Self {
        FactPattern {
            subject,
            predicate,
            object,
            qualifiers: Vec::new(),
        }
    }

    pub fn with_qualifiers(
        mut self,
        qualifiers: Vec<(Term<RelationId>, Term<EntityId>)>,
    ) -> Self {
        self.qualifiers = qualifiers;
        self
    }
}

/// Topology class of a query skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternClass {
    Chain,
    Tree,
    Star,
    Petal,
    Flower,
}

impl PatternClass {
    pub const ALL: [PatternClass; 5] = [
        PatternClass::Chain,
        PatternClass::Tree,
        PatternClass::Star,
        PatternClass::Petal,
        PatternClass::Flower,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PatternClass::Chain => "chain",
            PatternClass::Tree => "tree",
            PatternClass::Star => "star",
            PatternClass::Petal => "petal",
            PatternClass::Flower => "flower",
        }
    }
}

impl fmt::Display for PatternClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A conjunctive hyper-relational query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub patterns: Vec<FactPattern>,
    pub declared_pattern: Option<PatternClass>,
    pub cardinality: Option<u64>,
}

impl Query {
    pub fn new(id: impl Into<String>, patterns: Vec<FactPattern>) -> Self {
        Query {
            id: id.into(),
            patterns,
            declared_pattern: None,
            cardinality: None,
        }
    }
}

/// A single validation finding; an empty report means the query is valid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyQuery,
    Disconnected,
    TooManyCycles(usize),
    /// A predicate/qualifier variable escapes its fact pattern, or a node
    /// variable is reused in a predicate/qualifier position.
    ScopeViolation { var: String, detail: String },
    /// A variable name is used in both entity and relation positions.
    TypeConflict { var: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyQuery => write!(f, "query has no fact patterns"),
            Violation::Disconnected => write!(f, "skeleton is disconnected"),
            Violation::TooManyCycles(n) => write!(f, "skeleton has {n} independent cycles (at most 1 allowed)"),
            Violation::ScopeViolation { var, detail } => write!(f, "variable ?{var}: {detail}"),
            Violation::TypeConflict { var } => {
                write!(f, "variable ?{var} is used in both entity and relation positions")
            }
        }
    }
}

/// Check connectivity, cycle count, and variable scope rules.
///
/// Node variables (subject/object positions) may be shared across patterns;
/// predicate and qualifier variables are local to a single pattern.
pub fn validate(query: &Query) -> Vec<Violation> {
    let mut violations = Vec::new();
    if query.patterns.is_empty() {
        violations.push(Violation::EmptyQuery);
        return violations;
    }
    let skel = Skeleton::of(query);
    if skel.component_count() > 1 {
        violations.push(Violation::Disconnected);
    }
    let cycles = skel.cyclomatic();
    if cycles > 1 {
        violations.push(Violation::TooManyCycles(cycles));
    }

    use std::collections::BTreeMap;
    #[derive(Default)]
    struct Usage {
        node: bool,
        entity_local: bool,
        relation_local: bool,
        local_patterns: Vec<usize>,
    }
    let mut usage: BTreeMap<&str, Usage> = BTreeMap::new();
    for (pi, pat) in query.patterns.iter().enumerate() {
        for term in [&pat.subject, &pat.object] {
            if let Some(name) = term.var_name() {
                usage.entry(name).or_default().node = true;
            }
        }
        if let Some(name) = pat.predicate.var_name() {
            let u = usage.entry(name).or_default();
            u.relation_local = true;
            u.local_patterns.push(pi);
        }
        for (qr, qe) in &pat.qualifiers {
            if let Some(name) = qr.var_name() {
                let u = usage.entry(name).or_default();
                u.relation_local = true;
                u.local_patterns.push(pi);
            }
            if let Some(name) = qe.var_name() {
                let u = usage.entry(name).or_default();
                u.entity_local = true;
                u.local_patterns.push(pi);
            }
        }
    }
    for (name, u) in &usage {
        let entity_use = u.node || u.entity_local;
        if entity_use && u.relation_local {
            violations.push(Violation::TypeConflict { var: name.to_string() });
            continue;
        }
        if u.node && u.entity_local {
            violations.push(Violation::ScopeViolation {
                var: name.to_string(),
                detail: "node variable reused in a qualifier position".into(),
            });
            continue;
        }
        if !u.node {
            let mut pats = u.local_patterns.clone();
            pats.dedup();
            if pats.len() > 1 {
                violations.push(Violation::ScopeViolation {
                    var: name.to_string(),
                    detail: format!(
                        "predicate/qualifier variable appears in {} fact patterns",
                        pats.len()
                    ),
                });
            }
        }
    }
    violations
}

/// Classify the undirected skeleton of a valid query. Qualifiers never affect
/// topology. Precedence for acyclic shapes is chain > star > tree; a star is
/// a hub with every edge incident to it.
pub fn classify_pattern(query: &Query) -> Result<PatternClass> {
    let violations = validate(query);
    let structural: Vec<&Violation> = violations
        .iter()
        .filter(|v| {
            matches!(
                v,
                Violation::EmptyQuery | Violation::Disconnected | Violation::TooManyCycles(_)
            )
        })
        .collect();
    if !structural.is_empty() {
        return Err(CoreError::InvalidQuery(
            structural
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    let skel = Skeleton::of(query);
    let degrees = skel.degrees();
    let n_edges = skel.edges.len();
    if skel.cyclomatic() == 1 {
        if degrees.iter().all(|&d| d == 2) {
            return Ok(PatternClass::Petal);
        }
        return Ok(PatternClass::Flower);
    }
    let max_deg = degrees.iter().copied().max().unwrap_or(0);
    if max_deg <= 2 {
        return Ok(PatternClass::Chain);
    }
    let hub_count = degrees.iter().filter(|&&d| d >= 3).count();
    if hub_count == 1 && max_deg == n_edges {
        return Ok(PatternClass::Star);
    }
    Ok(PatternClass::Tree)
}

// ---------------------------------------------------------------------------
// Wire format: one JSON object per line.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireQuery {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pattern: Option<PatternClass>,
    facts: Vec<WireFact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    card: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireFact {
    s: String,
    p: String,
    o: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    quals: Vec<(String, String)>,
}

fn entity_term_to_wire(term: &Term<EntityId>, vocab: &Vocab) -> String {
    match term {
        Term::Bound(id) => vocab.entity_label(*id).to_string(),
        Term::Var(name) => format!("?{name}"),
    }
}

fn relation_term_to_wire(term: &Term<RelationId>, vocab: &Vocab) -> String {
    match term {
        Term::Bound(id) => vocab.relation_label(*id).to_string(),
        Term::Var(name) => format!("?{name}"),
    }
}

fn entity_term_from_wire(text: &str, vocab: &Vocab) -> Result<Term<EntityId>> {
    if let Some(name) = text.strip_prefix('?') {
        return Ok(Term::Var(name.to_string()));
    }
    vocab
        .entity(text)
        .map(Term::Bound)
        .ok_or_else(|| CoreError::UnknownLabel {
            kind: "entity",
            label: text.to_string(),
        })
}

fn relation_term_from_wire(text: &str, vocab: &Vocab) -> Result<Term<RelationId>> {
    if let Some(name) = text.strip_prefix('?') {
        return Ok(Term::Var(name.to_string()));
    }
    vocab
        .relation(text)
        .map(Term::Bound)
        .ok_or_else(|| CoreError::UnknownLabel {
            kind: "relation",
            label: text.to_string(),
        })
}

/// Serialize a query as one JSON line (no trailing newline).
pub fn serialize(query: &Query, vocab: &Vocab) -> String {
    let wire = WireQuery {
        id: query.id.clone(),
        pattern: query.declared_pattern,
        facts: query
            .patterns
            .iter()
            .map(|p| WireFact {
                s: entity_term_to_wire(&p.subject, vocab),
                p: relation_term_to_wire(&p.predicate, vocab),
                o: entity_term_to_wire(&p.object, vocab),
                quals: p
                    .qualifiers
                    .iter()
                    .map(|(qr, qe)| {
                        (
                            relation_term_to_wire(qr, vocab),
                            entity_term_to_wire(qe, vocab),
                        )
                    })
                    .collect(),
            })
            .collect(),
        card: query.cardinality,
    };
    serde_json::to_string(&wire).expect("query serialization cannot fail")
}

/// Parse one JSON line into a query. Bound labels must exist in the vocab.
pub fn deserialize(line: &str, vocab: &Vocab) -> Result<Query> {
    let wire: WireQuery =
        serde_json::from_str(line).map_err(|e| CoreError::QueryParse(e.to_string()))?;
    let mut patterns = Vec::with_capacity(wire.facts.len());
    for f in &wire.facts {
        let mut qualifiers = Vec::with_capacity(f.quals.len());
        for (qr, qe) in &f.quals {
            qualifiers.push((
                relation_term_from_wire(qr, vocab)?,
                entity_term_from_wire(qe, vocab)?,
            ));
        }
        patterns.push(FactPattern {
            subject: entity_term_from_wire(&f.s, vocab)?,
            predicate: relation_term_from_wire(&f.p, vocab)?,
            object: entity_term_from_wire(&f.o, vocab)?,
            qualifiers,
        });
    }
    Ok(Query {
        id: wire.id,
        patterns,
        declared_pattern: wire.pattern,
        cardinality: wire.card,
    })
}

/// Read a JSON-lines queryset file; blank lines are skipped.
pub fn read_queryset(path: impl AsRef<Path>, vocab: &Vocab) -> Result<Vec<Query>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| deserialize(l, vocab))
        .collect()
}

/// Write a queryset as JSON lines.
pub fn write_queryset(
    path: impl AsRef<Path>,
    queries: &[Query],
    vocab: &Vocab,
) -> Result<()> {
    let mut out = String::new();
    for q in queries {
        out.push_str(&serialize(q, vocab));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
