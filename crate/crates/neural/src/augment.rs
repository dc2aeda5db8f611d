//! Monotone query edits for data augmentation.
//!
//! Tightened variants (`Q_add`) gain one constraint: a fully bound qualifier
//! pair, or a new fact pattern from an existing node to a bound entity.
//! Relaxed variants (`Q_rm`) lose one constraint: a fully bound qualifier, or
//! a pattern carrying no variables of its own whose removal keeps the query
//! connected. Both families preserve the variable set, which is exactly what
//! makes the cardinality ordering `card(Q_add) <= card(Q) <= card(Q_rm)`
//! hold unconditionally under assignment counting: an edit only ever adds or
//! removes a filter over the same assignment space. Edits that introduce or
//! delete counted variables (say, a pattern ending in a fresh variable) can
//! move the count in either direction and are deliberately not generated.

use rand::Rng;

use hrce_core::query::{validate, FactPattern, Query, Term};
use hrce_core::skeleton::{NodeKey, Skeleton};
use hrce_core::{EntityId, Hkg, RelationId};

/// Variants of `query` with exactly one added qualifier or one added edge
/// each; bound targets keep the edit a pure constraint.
pub fn augment_add<R: Rng>(query: &Query, hkg: &Hkg, rng: &mut R, count: usize) -> Vec<Query> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let mut variant = query.clone();
        variant.id = format!("{}+a{}", query.id, i + 1);
        variant.cardinality = None;
        variant.declared_pattern = None;
        let add_qualifier = rng.random_bool(0.5);
        if add_qualifier && try_add_qualifier(&mut variant, hkg, rng) {
            out.push(variant);
            continue;
        }
        if try_add_edge(&mut variant, hkg, rng) || try_add_qualifier(&mut variant, hkg, rng) {
            out.push(variant);
        }
    }
    out
}

fn try_add_qualifier<R: Rng>(variant: &mut Query, hkg: &Hkg, rng: &mut R) -> bool {
    let pi = rng.random_range(0..variant.patterns.len());
    let pattern = &variant.patterns[pi];
    // Draw from the predicate's co-occurrence set, falling back to the
    // global qualifier vocabulary.
    let pool: Vec<(RelationId, EntityId)> = match pattern.predicate.bound() {
        Some(p) if !hkg.predicate_qualifiers(p).is_empty() => {
            hkg.predicate_qualifiers(p).to_vec()
        }
        _ => hkg.qualifier_vocab().to_vec(),
    };
    if pool.is_empty() {
        return false;
    }
    let present: Vec<(RelationId, EntityId)> = pattern
        .qualifiers
        .iter()
        .filter_map(|(qr, qe)| Some((qr.bound()?, qe.bound()?)))
        .collect();
    let fresh: Vec<(RelationId, EntityId)> = pool
        .iter()
        .copied()
        .filter(|p| !present.contains(p))
        .collect();
    let pick = if fresh.is_empty() { &pool } else { &fresh };
    let (qr, qe) = pick[rng.random_range(0..pick.len())];
    variant.patterns[pi]
        .qualifiers
        .push((Term::Bound(qr), Term::Bound(qe)));
    true
}

fn try_add_edge<R: Rng>(variant: &mut Query, hkg: &Hkg, rng: &mut R) -> bool {
    if hkg.facts().is_empty() {
        return false;
    }
    let skel = Skeleton::of(variant);
    let node = &skel.nodes[rng.random_range(0..skel.nodes.len())];
    let node_term = match node {
        NodeKey::Bound(e) => Term::Bound(*e),
        NodeKey::Var(name) => Term::Var(name.clone()),
    };
    let fact = hkg.fact(rng.random_range(0..hkg.facts().len() as u32));
    let outgoing = rng.random_bool(0.5);
    let pattern = if outgoing {
        FactPattern::new(node_term, Term::Bound(fact.predicate), Term::Bound(fact.object))
    } else {
        FactPattern::new(Term::Bound(fact.subject), Term::Bound(fact.predicate), node_term)
    };
    variant.patterns.push(pattern);
    // A bound-to-bound edge may merge skeleton nodes into a second cycle;
    // reject those rare draws.
    validate(variant).is_empty() || {
        variant.patterns.pop();
        false
    }
}

/// Removable elements of a query under the variable-preserving rule.
fn removal_candidates(query: &Query) -> Vec<Removal> {
    let mut candidates = Vec::new();
    for (pi, pattern) in query.patterns.iter().enumerate() {
        for (qi, (qr, qe)) in pattern.qualifiers.iter().enumerate() {
            if !qr.is_var() && !qe.is_var() {
                candidates.push(Removal::Qualifier(pi, qi));
            }
        }
    }
    if query.patterns.len() >= 2 {
        for pi in 0..query.patterns.len() {
            let pattern = &query.patterns[pi];
            let has_local_vars = pattern.predicate.is_var()
                || pattern
                    .qualifiers
                    .iter()
                    .any(|(qr, qe)| qr.is_var() || qe.is_var());
            if has_local_vars {
                continue;
            }
            let endpoint_safe = [&pattern.subject, &pattern.object].iter().all(|term| {
                match term.var_name() {
                    None => true,
                    Some(name) => query
                        .patterns
                        .iter()
                        .enumerate()
                        .filter(|&(pj, _)| pj != pi)
                        .any(|(_, other)| {
                            [&other.subject, &other.object]
                                .iter()
                                .any(|t| t.var_name() == Some(name))
                        }),
                }
            });
            if !endpoint_safe {
                continue;
            }
            let mut reduced = query.clone();
            reduced.patterns.remove(pi);
            if validate(&reduced).is_empty() {
                candidates.push(Removal::Pattern(pi));
            }
        }
    }
    candidates
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Removal {
    Qualifier(usize, usize),
    Pattern(usize),
}

/// Variants of `query` each missing one bound qualifier or one variable-free
/// pattern; queries with nothing removable yield the empty set.
pub fn augment_remove<R: Rng>(query: &Query, rng: &mut R, count: usize) -> Vec<Query> {
    let mut candidates = removal_candidates(query);
    let mut out = Vec::with_capacity(count.min(candidates.len()));
    for i in 0..count {
        if candidates.is_empty() {
            break;
        }
        let removal = candidates.swap_remove(rng.random_range(0..candidates.len()));
        let mut variant = query.clone();
        variant.id = format!("{}-r{}", query.id, i + 1);
        variant.cardinality = None;
        variant.declared_pattern = None;
        match removal {
            Removal::Qualifier(pi, qi) => {
                variant.patterns[pi].qualifiers.remove(qi);
            }
            Removal::Pattern(pi) => {
                variant.patterns.remove(pi);
            }
        }
        out.push(variant);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use hrce_core::brute::brute_force_cardinality;
    use hrce_core::exact::exact_cardinality;
    use hrce_core::synth::{synth_hkg, SynthConfig};
    use hrce_core::workload::{builtin_templates, generate_query, GenOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> Hkg {
        Hkg::parse("a,p,b\na,p,c\nb,q,c,t,x\na,p,b,t,x\n").unwrap()
    }

    #[test]
    fn zero_count_is_empty() {
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![FactPattern::new(
                Term::Bound(hkg.vocab().entity("a").unwrap()),
                Term::Bound(hkg.vocab().relation("p").unwrap()),
                Term::var("o"),
            )],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(augment_add(&q, &hkg, &mut rng, 0).is_empty());
        assert!(augment_remove(&q, &mut rng, 0).is_empty());
    }

    #[test]
    fn add_variant_differs_by_exactly_one_element() {
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![FactPattern::new(
                Term::Bound(hkg.vocab().entity("a").unwrap()),
                Term::Bound(hkg.vocab().relation("p").unwrap()),
                Term::var("o"),
            )],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for variant in augment_add(&q, &hkg, &mut rng, 20) {
            let pattern_delta = variant.patterns.len() - q.patterns.len();
            let qual_delta: usize = variant
                .patterns
                .iter()
                .map(|p| p.qualifiers.len())
                .sum::<usize>()
                - q.patterns.iter().map(|p| p.qualifiers.len()).sum::<usize>();
            assert_eq!(pattern_delta + qual_delta, 1, "variant {variant:?}");
            assert!(validate(&variant).is_empty());
        }
    }

    #[test]
    fn single_pattern_with_one_bound_qualifier_only_removes_it() {
        let hkg = toy();
        let t = hkg.vocab().relation("t").unwrap();
        let x = hkg.vocab().entity("x").unwrap();
        let q = Query::new(
            "q",
            vec![FactPattern::new(
                Term::Bound(hkg.vocab().entity("a").unwrap()),
                Term::Bound(hkg.vocab().relation("p").unwrap()),
                Term::var("o"),
            )
            .with_qualifiers(vec![(Term::Bound(t), Term::Bound(x))])],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let variants = augment_remove(&q, &mut rng, 5);
        assert_eq!(variants.len(), 1);
        assert!(variants[0].patterns[0].qualifiers.is_empty());
        assert_eq!(variants[0].patterns.len(), 1);
    }

    #[test]
    fn single_edge_qualifier_free_query_yields_empty_set() {
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![FactPattern::new(
                Term::var("s"),
                Term::Bound(hkg.vocab().relation("p").unwrap()),
                Term::var("o"),
            )],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(augment_remove(&q, &mut rng, 3).is_empty());
    }

    #[test]
    fn removal_never_disconnects() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hkg = synth_hkg(&SynthConfig::small(20, 80), &mut rng);
        let options = GenOptions {
            qualifier_prob: 0.6,
            qualifier_variable_prob: 0.0,
            bounded_node_prob: 0.6,
            max_retries: 40,
        };
        let templates = builtin_templates();
        let mut checked = 0;
        for template in templates.iter().filter(|t| t.fact_size() <= 3) {
            for _ in 0..5 {
                let Ok(q) = generate_query(&hkg, template, &options, &mut rng) else {
                    continue;
                };
                for variant in augment_remove(&q, &mut rng, 4) {
                    assert!(validate(&variant).is_empty(), "{variant:?}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn monotone_in_both_directions_on_random_edits() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let hkg = synth_hkg(&SynthConfig::small(18, 60), &mut rng);
        let options = GenOptions {
            qualifier_prob: 0.6,
            qualifier_variable_prob: 0.2,
            bounded_node_prob: 0.6,
            max_retries: 40,
        };
        let templates = builtin_templates();
        let mut add_checked = 0;
        let mut rm_checked = 0;
        for template in templates.iter().filter(|t| t.fact_size() <= 3) {
            for _ in 0..4 {
                let Ok(q) = generate_query(&hkg, template, &options, &mut rng) else {
                    continue;
                };
                let base = exact_cardinality(&hkg, &q).unwrap();
                for variant in augment_add(&q, &hkg, &mut rng, 3) {
                    let card = exact_cardinality(&hkg, &variant).unwrap();
                    assert!(card <= base, "add raised {base} -> {card}: {variant:?}");
                    assert_eq!(card, brute_force_cardinality(&hkg, &variant).unwrap());
                    add_checked += 1;
                }
                for variant in augment_remove(&q, &mut rng, 3) {
                    let card = exact_cardinality(&hkg, &variant).unwrap();
                    assert!(card >= base, "remove lowered {base} -> {card}: {variant:?}");
                    rm_checked += 1;
                }
            }
        }
        assert!(add_checked >= 30, "only {add_checked} add edits");
        assert!(rm_checked >= 15, "only {rm_checked} remove edits");
    }
}
