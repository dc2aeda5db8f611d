//! Labeled query workload generation.
//!
//! Queries are instantiated from structural templates by walking the data
//! graph: sample a witness entity for the template root, extend edge by edge
//! with facts incident to the current witness, and close cycles only when a
//! closing fact exists. Every emitted query therefore has at least one
//! homomorphism. Generated queries are labeled with their exact cardinality
//! and stratified over pattern, fact size, cardinality range, and bounded
//! node count.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::exact::exact_cardinality;
use crate::hkg::Hkg;
use crate::query::{classify_pattern, FactPattern, PatternClass, Query, Term};
use crate::skeleton::{canonical_order, NodeKey, Skeleton};

/// Whether a template slot keeps its witness constant or becomes a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotMarker {
    Bound,
    Variable,
}

/// One directed template edge with optional forced qualifier slots.
#[derive(Debug, Clone)]
pub struct TemplateEdge {
    pub from: usize,
    pub to: usize,
    pub predicate: SlotMarker,
    /// Each forced slot consumes one distinct qualifier pair of the witness
    /// fact: (qualifier relation marker, qualifier entity marker).
    pub qual_slots: Vec<(SlotMarker, SlotMarker)>,
}

/// A query template: a connected directed multigraph with at most one cycle.
#[derive(Debug, Clone)]
pub struct Template {
    pub name: String,
    pub pattern: PatternClass,
    pub node_count: usize,
    /// Per node: `Bound` always keeps the witness; `Variable` is subject to
    /// the workload's bounded-node policy.
    pub node_markers: Vec<SlotMarker>,
    pub edges: Vec<TemplateEdge>,
}

impl Template {
    pub fn fact_size(&self) -> usize {
        self.edges.len()
    }

    fn plain(
        name: &str,
        pattern: PatternClass,
        node_count: usize,
        edges: &[(usize, usize)],
    ) -> Template {
        Template {
            name: name.to_string(),
            pattern,
            node_count,
            node_markers: vec![SlotMarker::Variable; node_count],
            edges: edges
                .iter()
                .map(|&(from, to)| TemplateEdge {
                    from,
                    to,
                    predicate: SlotMarker::Bound,
                    qual_slots: Vec::new(),
                })
                .collect(),
        }
    }
}

/// Structural templates covering all five pattern classes over fact sizes
/// {1, 2, 3, 6, 9, 12}.
pub fn builtin_templates() -> Vec<Template> {
    let mut out = Vec::new();
    for n in [1usize, 2, 3, 6, 9, 12] {
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, i + 1)).collect();
        out.push(Template::plain(
            &format!("chain{n}"),
            PatternClass::Chain,
            n + 1,
            &edges,
        ));
    }
    for n in [3usize, 6, 9, 12] {
        // Hub at node 0; alternate edge directions for variety.
        let edges: Vec<(usize, usize)> = (0..n)
            .map(|i| if i % 2 == 0 { (0, i + 1) } else { (i + 1, 0) })
            .collect();
        out.push(Template::plain(
            &format!("star{n}"),
            PatternClass::Star,
            n + 1,
            &edges,
        ));
    }
    for n in [6usize, 9, 12] {
        // Spider: hub with three outgoing legs of equal length >= 2.
        let leg = n / 3;
        let mut edges = Vec::new();
        let mut next = 1;
        for _ in 0..3 {
            let mut prev = 0;
            for _ in 0..leg {
                edges.push((prev, next));
                prev = next;
                next += 1;
            }
        }
        out.push(Template::plain(
            &format!("tree{n}"),
            PatternClass::Tree,
            next,
            &edges,
        ));
    }
    for n in [2usize, 3, 6, 9, 12] {
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        out.push(Template::plain(
            &format!("petal{n}"),
            PatternClass::Petal,
            n,
            &edges,
        ));
    }
    for n in [3usize, 6, 9, 12] {
        let mut edges: Vec<(usize, usize)> = if n == 3 {
            vec![(0, 1), (1, 0)]
        } else {
            vec![(0, 1), (1, 2), (2, 0)]
        };
        let cycle_nodes = edges.len();
        let pendant = n - cycle_nodes;
        let mut prev = 0;
        for i in 0..pendant {
            edges.push((prev, cycle_nodes + i));
            prev = cycle_nodes + i;
        }
        out.push(Template::plain(
            &format!("flower{n}"),
            PatternClass::Flower,
            cycle_nodes + pendant,
            &edges,
        ));
    }
    out
}

/// Knobs applied while instantiating a template.
#[derive(Debug, Clone, Copy)]
pub struct GenOptions {
    /// Probability of attaching one qualifier pair drawn from the witness
    /// fact's qualifiers (when it has any).
    pub qualifier_prob: f64,
    /// Probability that an attached qualifier's entity becomes a variable.
    pub qualifier_variable_prob: f64,
    /// Probability that a `Variable`-marked node keeps its witness constant.
    pub bounded_node_prob: f64,
    /// Dead-end retry budget for one query.
    pub max_retries: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            qualifier_prob: 0.3,
            qualifier_variable_prob: 0.2,
            bounded_node_prob: 0.5,
            max_retries: 50,
        }
    }
}

/// Workload request: per-(pattern, fact-size) targets plus the four
/// stratification knobs; see the JSON schema in the repository README.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub counts: Vec<BucketSpec>,
    #[serde(default = "defaults::qualifier_prob")]
    pub qualifier_prob: f64,
    #[serde(default = "defaults::qualifier_variable_prob")]
    pub qualifier_variable_prob: f64,
    #[serde(default = "defaults::bounded_node_prob")]
    pub bounded_node_prob: f64,
    /// Optional per-stratum targets for cardinality ranges
    /// `[<10^3, <10^4, <10^5, >=10^5]`; enforced by rejection.
    #[serde(default)]
    pub range_targets: Option<[usize; 4]>,
    #[serde(default = "defaults::max_retries")]
    pub max_retries: usize,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn qualifier_prob() -> f64 {
        0.3
    }
    pub fn qualifier_variable_prob() -> f64 {
        0.2
    }
    pub fn bounded_node_prob() -> f64 {
        0.5
    }
    pub fn max_retries() -> usize {
        50
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketSpec {
    pub pattern: PatternClass,
    pub size: usize,
    pub count: usize,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        for p in [
            self.qualifier_prob,
            self.qualifier_variable_prob,
            self.bounded_node_prob,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CoreError::InvalidQuery(format!(
                    "probability {p} outside [0, 1] in workload spec"
                )));
            }
        }
        Ok(())
    }

    pub fn options(&self) -> GenOptions {
        GenOptions {
            qualifier_prob: self.qualifier_prob,
            qualifier_variable_prob: self.qualifier_variable_prob,
            bounded_node_prob: self.bounded_node_prob,
            max_retries: self.max_retries,
        }
    }
}

/// Instantiate one query from a template by witness walking; the returned
/// query has at least one homomorphism by construction.
pub fn generate_query<R: Rng>(
    hkg: &Hkg,
    template: &Template,
    options: &GenOptions,
    rng: &mut R,
) -> Result<Query> {
    if hkg.facts().is_empty() {
        return Err(CoreError::InvalidQuery("cannot generate over an empty HKG".into()));
    }
    let mut attempts = 0;
    loop {
        attempts += 1;
        match try_generate(hkg, template, options, rng) {
            Some(query) => return Ok(query),
            None if attempts >= options.max_retries.max(1) => {
                return Err(CoreError::GenerationExhausted {
                    what: template.name.clone(),
                    attempts,
                })
            }
            None => continue,
        }
    }
}

fn try_generate<R: Rng>(
    hkg: &Hkg,
    template: &Template,
    options: &GenOptions,
    rng: &mut R,
) -> Option<Query> {
    let n_nodes = template.node_count;
    let mut witness: Vec<Option<crate::hkg::EntityId>> = vec![None; n_nodes];
    let mut edge_fact: Vec<Option<u32>> = vec![None; template.edges.len()];

    let root = 0usize;
    let root_witness = crate::hkg::EntityId(rng.random_range(0..hkg.entity_count() as u32));
    witness[root] = Some(root_witness);

    // Incidence list in template edge order.
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for (ei, e) in template.edges.iter().enumerate() {
        incident[e.from].push(ei);
        if e.to != e.from {
            incident[e.to].push(ei);
        }
    }

    // Pre-order walk assigning tree edges; unassigned edges close cycles.
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        let w = witness[node].expect("stacked nodes have witnesses");
        for &ei in &incident[node] {
            if edge_fact[ei].is_some() {
                continue;
            }
            let edge = &template.edges[ei];
            let (other, outgoing) = if edge.from == node {
                (edge.to, true)
            } else {
                (edge.from, false)
            };
            if witness[other].is_some() {
                continue; // closing edge, resolved after the walk
            }
            let needed_quals = edge.qual_slots.len();
            let pool: Vec<u32> = if outgoing {
                hkg.facts_from(w).to_vec()
            } else {
                hkg.facts_to(w).to_vec()
            };
            let pool: Vec<u32> = pool
                .into_iter()
                .filter(|&fid| hkg.fact(fid).qualifiers.len() >= needed_quals)
                .collect();
            if pool.is_empty() {
                return None;
            }
            let fid = pool[rng.random_range(0..pool.len())];
            edge_fact[ei] = Some(fid);
            let fact = hkg.fact(fid);
            witness[other] = Some(if outgoing { fact.object } else { fact.subject });
            stack.push(other);
        }
    }

    // Closing edges need an exact witness-to-witness fact.
    for (ei, edge) in template.edges.iter().enumerate() {
        if edge_fact[ei].is_some() {
            continue;
        }
        let (wf, wt) = (witness[edge.from]?, witness[edge.to]?);
        let pool: Vec<u32> = hkg
            .facts_from(wf)
            .iter()
            .copied()
            .filter(|&fid| {
                let f = hkg.fact(fid);
                f.object == wt && f.qualifiers.len() >= edge.qual_slots.len()
            })
            .collect();
        if pool.is_empty() {
            return None;
        }
        edge_fact[ei] = Some(pool[rng.random_range(0..pool.len())]);
    }

    // Node slots: bound markers always keep the witness; variable markers
    // keep it with the bounded-node probability.
    let mut node_terms: Vec<Term<crate::hkg::EntityId>> = Vec::with_capacity(n_nodes);
    let mut var_counter = 0usize;
    for node in 0..n_nodes {
        let w = witness[node].expect("connected template");
        let keep = match template.node_markers[node] {
            SlotMarker::Bound => true,
            SlotMarker::Variable => rng.random_bool(options.bounded_node_prob),
        };
        if keep {
            node_terms.push(Term::Bound(w));
        } else {
            var_counter += 1;
            node_terms.push(Term::var(&format!("v{var_counter}")));
        }
    }

    // Assemble fact patterns with qualifier attachments.
    let mut patterns = Vec::with_capacity(template.edges.len());
    let mut qvar_counter = 0usize;
    let mut pvar_counter = 0usize;
    for (ei, edge) in template.edges.iter().enumerate() {
        let fact = hkg.fact(edge_fact[ei].expect("all edges assigned"));
        let predicate = match edge.predicate {
            SlotMarker::Bound => Term::Bound(fact.predicate),
            SlotMarker::Variable => {
                pvar_counter += 1;
                Term::var(&format!("p{pvar_counter}"))
            }
        };
        let mut used = vec![false; fact.qualifiers.len()];
        let mut qualifiers = Vec::new();
        for &(qr_marker, qe_marker) in &edge.qual_slots {
            let free: Vec<usize> = (0..fact.qualifiers.len()).filter(|&i| !used[i]).collect();
            if free.is_empty() {
                return None;
            }
            let pick = free[rng.random_range(0..free.len())];
            used[pick] = true;
            let (qr, qe) = fact.qualifiers[pick];
            let qr_term = match qr_marker {
                SlotMarker::Bound => Term::Bound(qr),
                SlotMarker::Variable => {
                    qvar_counter += 1;
                    Term::var(&format!("qr{qvar_counter}"))
                }
            };
            let qe_term = match qe_marker {
                SlotMarker::Bound => Term::Bound(qe),
                SlotMarker::Variable => {
                    qvar_counter += 1;
                    Term::var(&format!("qe{qvar_counter}"))
                }
            };
            qualifiers.push((qr_term, qe_term));
        }
        if rng.random_bool(options.qualifier_prob) {
            let free: Vec<usize> = (0..fact.qualifiers.len()).filter(|&i| !used[i]).collect();
            if !free.is_empty() {
                let pick = free[rng.random_range(0..free.len())];
                used[pick] = true;
                let (qr, qe) = fact.qualifiers[pick];
                let qe_term = if rng.random_bool(options.qualifier_variable_prob) {
                    qvar_counter += 1;
                    Term::var(&format!("qe{qvar_counter}"))
                } else {
                    Term::Bound(qe)
                };
                qualifiers.push((Term::Bound(qr), qe_term));
            }
        }
        patterns.push(FactPattern {
            subject: node_terms[edge.from].clone(),
            predicate,
            object: node_terms[edge.to].clone(),
            qualifiers,
        });
    }

    let mut query = Query::new(String::new(), patterns);
    query.declared_pattern = Some(template.pattern);
    // Bound nodes sharing a witness entity collapse in the skeleton and can
    // change the topology; reject such draws so the declared pattern always
    // matches the classification.
    match classify_pattern(&query) {
        Ok(class) if class == template.pattern => Some(query),
        _ => None,
    }
}

/// Rename-invariant text form used to deduplicate isomorphic duplicates.
pub fn canonical_key(query: &Query) -> String {
    let canon = canonical_order(query);
    let mut out = String::new();
    for &pi in &canon.pattern_order {
        let pat = &query.patterns[pi];
        let ent = |t: &Term<crate::hkg::EntityId>| match t {
            Term::Bound(e) => format!("e{}", e.0),
            Term::Var(name) => format!("?{}", canon.variable_ids[name]),
        };
        let rel = |t: &Term<crate::hkg::RelationId>| match t {
            Term::Bound(r) => format!("r{}", r.0),
            Term::Var(name) => format!("?{}", canon.variable_ids[name]),
        };
        out.push_str(&format!("{} {} {}", ent(&pat.subject), rel(&pat.predicate), ent(&pat.object)));
        for &qi in &canon.qualifier_order[pi] {
            let (qr, qe) = &pat.qualifiers[qi];
            out.push_str(&format!(" [{} {}]", rel(qr), ent(qe)));
        }
        out.push(';');
    }
    out
}

/// Distinct bound entities among a query's main-triple endpoints.
pub fn bounded_node_count(query: &Query) -> usize {
    let skel = Skeleton::of(query);
    skel.nodes
        .iter()
        .filter(|n| matches!(n, NodeKey::Bound(_)))
        .count()
}

/// Cardinality range stratum: `<10^3, <10^4, <10^5, >=10^5`.
pub fn range_stratum(card: u64) -> usize {
    if card < 1_000 {
        0
    } else if card < 10_000 {
        1
    } else if card < 100_000 {
        2
    } else {
        3
    }
}

pub const RANGE_LABELS: [&str; 4] = ["<1e3", "<1e4", "<1e5", ">=1e5"];

#[derive(Debug, Clone, Serialize)]
pub struct BucketReport {
    pub pattern: PatternClass,
    pub size: usize,
    pub target: usize,
    pub achieved: usize,
}

/// Achieved stratification over the four workload dimensions.
#[derive(Debug, Clone, Serialize)]
pub struct StratReport {
    pub buckets: Vec<BucketReport>,
    pub range_targets: Option<[usize; 4]>,
    pub range_achieved: [usize; 4],
    pub bounded_zero: usize,
    pub bounded_positive: usize,
    /// Buckets whose retry budget ran out before meeting the target.
    pub exhausted: Vec<String>,
}

impl StratReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("criterion,group,target,achieved\n");
        for b in &self.buckets {
            out.push_str(&format!(
                "pattern_size,{}/{},{},{}\n",
                b.pattern, b.size, b.target, b.achieved
            ));
        }
        for (i, label) in RANGE_LABELS.iter().enumerate() {
            let target = self
                .range_targets
                .map_or(String::new(), |t| t[i].to_string());
            out.push_str(&format!(
                "cardinality_range,{label},{target},{}\n",
                self.range_achieved[i]
            ));
        }
        out.push_str(&format!("bounded_nodes,0,,{}\n", self.bounded_zero));
        out.push_str(&format!("bounded_nodes,>0,,{}\n", self.bounded_positive));
        for name in &self.exhausted {
            out.push_str(&format!("exhausted,{name},,\n"));
        }
        out
    }
}

/// A generated, labeled, deduplicated queryset plus its stratification report.
pub struct QuerysetBundle {
    pub queries: Vec<Query>,
    pub report: StratReport,
}

/// Generate the workload described by `spec`. Buckets are processed in
/// deterministic order; the same seed, spec, and store reproduce the output
/// byte for byte.
pub fn generate_queryset<R: Rng>(hkg: &Hkg, spec: &WorkloadSpec, rng: &mut R) -> Result<QuerysetBundle> {
    spec.validate()?;
    let templates = builtin_templates();
    let options = spec.options();
    let mut buckets: Vec<BucketSpec> = spec.counts.clone();
    buckets.sort_by_key(|b| (b.pattern, b.size));

    let mut queries: Vec<Query> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut report = StratReport {
        buckets: Vec::new(),
        range_targets: spec.range_targets,
        range_achieved: [0; 4],
        bounded_zero: 0,
        bounded_positive: 0,
        exhausted: Vec::new(),
    };

    for bucket in &buckets {
        let template = templates
            .iter()
            .find(|t| t.pattern == bucket.pattern && t.fact_size() == bucket.size)
            .ok_or_else(|| {
                CoreError::InvalidQuery(format!(
                    "no builtin template for {}/{}",
                    bucket.pattern, bucket.size
                ))
            })?;
        let mut achieved = 0usize;
        let mut attempts = 0usize;
        let budget = bucket.count.saturating_mul(spec.max_retries.max(1));
        while achieved < bucket.count && attempts < budget {
            attempts += 1;
            let mut query = match generate_query(hkg, template, &options, rng) {
                Ok(q) => q,
                Err(CoreError::GenerationExhausted { .. }) => break,
                Err(e) => return Err(e),
            };
            let key = canonical_key(&query);
            if seen.contains(&key) {
                continue;
            }
            let card = exact_cardinality(hkg, &query)?;
            debug_assert!(card >= 1, "witnessed query must have a homomorphism");
            if let Some(targets) = spec.range_targets {
                let stratum = range_stratum(card);
                if report.range_achieved[stratum] >= targets[stratum] {
                    continue;
                }
            }
            seen.insert(key);
            query.id = format!("q{:05}", queries.len() + 1);
            query.cardinality = Some(card);
            report.range_achieved[range_stratum(card)] += 1;
            if bounded_node_count(&query) == 0 {
                report.bounded_zero += 1;
            } else {
                report.bounded_positive += 1;
            }
            queries.push(query);
            achieved += 1;
        }
        if achieved < bucket.count {
            report
                .exhausted
                .push(format!("{}/{}", bucket.pattern, bucket.size));
        }
        report.buckets.push(BucketReport {
            pattern: bucket.pattern,
            size: bucket.size,
            target: bucket.count,
            achieved,
        });
    }

    Ok(QuerysetBundle { queries, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{classify_pattern, validate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> Hkg {
        Hkg::parse("a,p,b\na,p,c\nb,q,c,t,x\na,p,b,t,x\n").unwrap()
    }

    #[test]
    fn builtin_templates_cover_classes_and_sizes() {
        let templates = builtin_templates();
        for class in PatternClass::ALL {
            assert!(templates.iter().any(|t| t.pattern == class), "missing {class}");
        }
        for size in [1usize, 2, 3, 6, 9, 12] {
            assert!(templates.iter().any(|t| t.fact_size() == size), "missing size {size}");
        }
        assert!(templates
            .iter()
            .any(|t| t.pattern == PatternClass::Chain && t.fact_size() == 3));
    }

    #[test]
    fn builtin_templates_classify_as_declared() {
        // Instantiate each template with plain variables and classify.
        for template in builtin_templates() {
            let patterns: Vec<FactPattern> = template
                .edges
                .iter()
                .map(|e| {
                    FactPattern::new(
                        Term::var(&format!("n{}", e.from)),
                        Term::Bound(crate::hkg::RelationId(0)),
                        Term::var(&format!("n{}", e.to)),
                    )
                })
                .collect();
            let q = Query::new(template.name.clone(), patterns);
            assert!(validate(&q).is_empty(), "{} invalid", template.name);
            assert_eq!(
                classify_pattern(&q).unwrap(),
                template.pattern,
                "{} misclassified",
                template.name
            );
        }
    }

    #[test]
    fn generated_chain_has_witness() {
        let hkg = toy();
        let template = builtin_templates()
            .into_iter()
            .find(|t| t.name == "chain2")
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let q = generate_query(&hkg, &template, &GenOptions::default(), &mut rng).unwrap();
            assert!(validate(&q).is_empty());
            let card = exact_cardinality(&hkg, &q).unwrap();
            assert!(card >= 1, "witnessed query had cardinality 0");
        }
    }

    #[test]
    fn forced_qualifier_attachment() {
        // Single-fact store with a qualifier: q_p = 1 must attach it.
        let hkg = Hkg::parse("a,p,b,t,x\n").unwrap();
        let template = builtin_templates()
            .into_iter()
            .find(|t| t.name == "chain1")
            .unwrap();
        let options = GenOptions {
            qualifier_prob: 1.0,
            qualifier_variable_prob: 0.0,
            bounded_node_prob: 0.5,
            max_retries: 50,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = generate_query(&hkg, &template, &options, &mut rng).unwrap();
        let t = hkg.vocab().relation("t").unwrap();
        let x = hkg.vocab().entity("x").unwrap();
        assert_eq!(
            q.patterns[0].qualifiers,
            vec![(Term::Bound(t), Term::Bound(x))]
        );
    }

    #[test]
    fn queryset_generation_dedupes_and_labels() {
        let hkg = toy();
        let spec = WorkloadSpec {
            counts: vec![BucketSpec {
                pattern: PatternClass::Chain,
                size: 2,
                count: 10,
            }],
            qualifier_prob: 0.3,
            qualifier_variable_prob: 0.0,
            bounded_node_prob: 0.5,
            range_targets: None,
            max_retries: 50,
            seed: 5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let bundle = generate_queryset(&hkg, &spec, &mut rng).unwrap();
        assert!(bundle.queries.len() <= 10);
        assert!(!bundle.queries.is_empty());
        let keys: BTreeSet<String> = bundle.queries.iter().map(canonical_key).collect();
        assert_eq!(keys.len(), bundle.queries.len(), "duplicates emitted");
        for q in &bundle.queries {
            assert!(q.cardinality.unwrap() >= 1);
            assert_eq!(classify_pattern(q).unwrap(), PatternClass::Chain);
        }
    }

    #[test]
    fn zero_counts_yield_empty_set() {
        let hkg = toy();
        let spec = WorkloadSpec {
            counts: vec![BucketSpec {
                pattern: PatternClass::Chain,
                size: 2,
                count: 0,
            }],
            qualifier_prob: 0.0,
            qualifier_variable_prob: 0.0,
            bounded_node_prob: 0.5,
            range_targets: None,
            max_retries: 10,
            seed: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bundle = generate_queryset(&hkg, &spec, &mut rng).unwrap();
        assert!(bundle.queries.is_empty());
    }

    #[test]
    fn same_seed_reproduces_byte_identical_output() {
        let hkg = toy();
        let spec = WorkloadSpec {
            counts: vec![
                BucketSpec {
                    pattern: PatternClass::Chain,
                    size: 1,
                    count: 4,
                },
                BucketSpec {
                    pattern: PatternClass::Chain,
                    size: 2,
                    count: 4,
                },
            ],
            qualifier_prob: 0.5,
            qualifier_variable_prob: 0.2,
            bounded_node_prob: 0.5,
            range_targets: None,
            max_retries: 50,
            seed: 42,
        };
        let render = || {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let bundle = generate_queryset(&hkg, &spec, &mut rng).unwrap();
            bundle
                .queries
                .iter()
                .map(|q| crate::query::serialize(q, toy().vocab()))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(render(), render());
    }
}
