//! Randomized equivalence between the post-order DP engine and the
//! independent brute-force oracle, across all five query shapes, qualifier
//! constraints, variable predicates, and bound-node mutations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hrce_core::brute::brute_force_cardinality;
use hrce_core::exact::{exact_cardinality, exact_cardinality_rooted};
use hrce_core::query::{classify_pattern, validate, PatternClass, Query, Term};
use hrce_core::skeleton::Skeleton;
use hrce_core::synth::{synth_hkg, SynthConfig};
use hrce_core::workload::{generate_query, GenOptions, SlotMarker, Template, TemplateEdge};
use hrce_core::{EntityId, Hkg};

fn edge(from: usize, to: usize) -> TemplateEdge {
    TemplateEdge {
        from,
        to,
        predicate: SlotMarker::Bound,
        qual_slots: Vec::new(),
    }
}

fn template(name: &str, pattern: PatternClass, nodes: usize, edges: Vec<TemplateEdge>) -> Template {
    Template {
        name: name.into(),
        pattern,
        node_count: nodes,
        node_markers: vec![SlotMarker::Variable; nodes],
        edges,
    }
}

/// Small shapes (≤4 edges) spanning every pattern class, including variable
/// predicates and forced variable-entity qualifiers.
fn small_templates() -> Vec<Template> {
    let mut out = vec![
        template("chain1", PatternClass::Chain, 2, vec![edge(0, 1)]),
        template("chain2", PatternClass::Chain, 3, vec![edge(0, 1), edge(1, 2)]),
        template(
            "chain3",
            PatternClass::Chain,
            4,
            vec![edge(0, 1), edge(2, 1), edge(2, 3)],
        ),
        template(
            "chain4",
            PatternClass::Chain,
            5,
            vec![edge(0, 1), edge(1, 2), edge(2, 3), edge(3, 4)],
        ),
        template(
            "star3",
            PatternClass::Star,
            4,
            vec![edge(0, 1), edge(0, 2), edge(3, 0)],
        ),
        template(
            "star4",
            PatternClass::Star,
            5,
            vec![edge(0, 1), edge(0, 2), edge(3, 0), edge(0, 4)],
        ),
        template(
            "tree4",
            PatternClass::Tree,
            5,
            vec![edge(0, 1), edge(0, 2), edge(0, 3), edge(3, 4)],
        ),
        template("petal2", PatternClass::Petal, 2, vec![edge(0, 1), edge(1, 0)]),
        template(
            "petal3",
            PatternClass::Petal,
            3,
            vec![edge(0, 1), edge(1, 2), edge(2, 0)],
        ),
        template(
            "flower4",
            PatternClass::Flower,
            4,
            vec![edge(0, 1), edge(1, 2), edge(2, 0), edge(0, 3)],
        ),
    ];
    // Variable predicate on the middle edge.
    let mut var_pred = template("chain2vp", PatternClass::Chain, 3, vec![edge(0, 1), edge(1, 2)]);
    var_pred.edges[1].predicate = SlotMarker::Variable;
    out.push(var_pred);
    // Forced qualifier with a variable entity.
    let mut var_qual = template("chain1vq", PatternClass::Chain, 2, vec![edge(0, 1)]);
    var_qual.edges[0].qual_slots = vec![(SlotMarker::Bound, SlotMarker::Variable)];
    out.push(var_qual);
    out
}

/// Rebind a random bound endpoint to a random entity, possibly zeroing the
/// count; keeps the query valid.
fn mutate_bound_node<R: Rng>(query: &mut Query, hkg: &Hkg, rng: &mut R) {
    let skel = Skeleton::of(query);
    let bound: Vec<EntityId> = skel
        .nodes
        .iter()
        .filter_map(|n| match n {
            hrce_core::skeleton::NodeKey::Bound(e) => Some(*e),
            _ => None,
        })
        .collect();
    if bound.is_empty() {
        return;
    }
    let target = bound[rng.random_range(0..bound.len())];
    let replacement = EntityId(rng.random_range(0..hkg.entity_count() as u32));
    for pat in &mut query.patterns {
        for term in [&mut pat.subject, &mut pat.object] {
            if *term == Term::Bound(target) {
                *term = Term::Bound(replacement);
            }
        }
    }
}

#[test]
fn dp_matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_817);
    let templates = small_templates();
    let options = GenOptions {
        qualifier_prob: 0.5,
        qualifier_variable_prob: 0.3,
        bounded_node_prob: 0.5,
        max_retries: 30,
    };
    let mut checked = 0usize;
    let mut cyclic = 0usize;
    let mut zero_count = 0usize;
    'outer: for round in 0..40 {
        let entities = 8 + (round % 5) * 5;
        let facts = 20 + (round % 4) * 20;
        let config = SynthConfig::small(entities, facts);
        let hkg = synth_hkg(&config, &mut rng);
        for template in &templates {
            let Ok(mut query) = generate_query(&hkg, template, &options, &mut rng) else {
                continue;
            };
            assert_eq!(classify_pattern(&query).unwrap(), template.pattern);
            if rng.random_bool(0.35) {
                mutate_bound_node(&mut query, &hkg, &mut rng);
                // Rebinding can merge skeleton nodes; skip the rare draws
                // that leave the supported query family.
                if !validate(&query).is_empty() {
                    continue;
                }
            }
            assert!(validate(&query).is_empty(), "{template:?} produced invalid query");
            let dp = exact_cardinality(&hkg, &query)
                .unwrap_or_else(|e| panic!("dp failed on {}: {e}", template.name));
            let oracle = brute_force_cardinality(&hkg, &query)
                .unwrap_or_else(|e| panic!("oracle failed on {}: {e}", template.name));
            assert_eq!(
                dp, oracle,
                "engine disagreement on {} (query {:?})",
                template.name, query
            );
            checked += 1;
            if matches!(template.pattern, PatternClass::Petal | PatternClass::Flower) {
                cyclic += 1;
            }
            if dp == 0 {
                zero_count += 1;
            }
            if checked >= 320 {
                break 'outer;
            }
        }
    }
    assert!(checked >= 250, "only {checked} instances checked");
    assert!(cyclic >= 20, "only {cyclic} cyclic instances checked");
    assert!(zero_count >= 5, "mutations never zeroed a count");
}

#[test]
fn dp_is_root_invariant_on_random_acyclic_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7_531);
    let options = GenOptions {
        qualifier_prob: 0.5,
        qualifier_variable_prob: 0.2,
        bounded_node_prob: 0.4,
        max_retries: 30,
    };
    let acyclic: Vec<Template> = small_templates()
        .into_iter()
        .filter(|t| !matches!(t.pattern, PatternClass::Petal | PatternClass::Flower))
        .collect();
    let hkg = synth_hkg(&SynthConfig::small(20, 60), &mut rng);
    let mut checked = 0;
    for template in &acyclic {
        for _ in 0..6 {
            let Ok(query) = generate_query(&hkg, template, &options, &mut rng) else {
                continue;
            };
            let skel = Skeleton::of(&query);
            let baseline = exact_cardinality(&hkg, &query).unwrap();
            for root in 0..skel.nodes.len() {
                assert_eq!(
                    exact_cardinality_rooted(&hkg, &query, Some(root)).unwrap(),
                    baseline,
                    "root {root} changed the count"
                );
            }
            checked += 1;
        }
    }
    assert!(checked >= 30);
}

#[test]
fn match_facts_equals_linear_scan_on_random_probes() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let hkg = synth_hkg(&SynthConfig::small(25, 120), &mut rng);
    for _ in 0..400 {
        let s = rng
            .random_bool(0.5)
            .then(|| EntityId(rng.random_range(0..hkg.entity_count() as u32)));
        let p = rng
            .random_bool(0.5)
            .then(|| hrce_core::RelationId(rng.random_range(0..hkg.relation_count() as u32)));
        let o = rng
            .random_bool(0.5)
            .then(|| EntityId(rng.random_range(0..hkg.entity_count() as u32)));
        let quals: Vec<(hrce_core::RelationId, Option<EntityId>)> = (0..rng.random_range(0..3))
            .map(|_| {
                let vocab = hkg.qualifier_vocab();
                let (qr, qe) = vocab[rng.random_range(0..vocab.len())];
                (qr, rng.random_bool(0.5).then_some(qe))
            })
            .collect();
        let mut indexed = hkg.match_facts(s, p, o, &quals);
        indexed.sort_unstable();
        let scan: Vec<u32> = (0..hkg.facts().len() as u32)
            .filter(|&fid| {
                let f = hkg.fact(fid);
                s.is_none_or(|v| f.subject == v)
                    && p.is_none_or(|v| f.predicate == v)
                    && o.is_none_or(|v| f.object == v)
                    && embeds_ref(&quals, &f.qualifiers)
            })
            .collect();
        assert_eq!(indexed, scan);
    }
}

/// Reference injective-embedding check for the scan side of the probe test.
fn embeds_ref(
    required: &[(hrce_core::RelationId, Option<EntityId>)],
    available: &[(hrce_core::RelationId, EntityId)],
) -> bool {
    fn rec(
        required: &[(hrce_core::RelationId, Option<EntityId>)],
        available: &[(hrce_core::RelationId, EntityId)],
        used: u32,
        slot: usize,
    ) -> bool {
        if slot == required.len() {
            return true;
        }
        let (qr, qe) = required[slot];
        available.iter().enumerate().any(|(i, &(ar, ae))| {
            used & (1 << i) == 0
                && ar == qr
                && qe.is_none_or(|e| e == ae)
                && rec(required, available, used | (1 << i), slot + 1)
        })
    }
    rec(required, available, 0, 0)
}
