//! Random-walk (join-sampling) cardinality estimator.
//!
//! Each trial follows a connected plan over the query's fact patterns. At
//! every step the trial enumerates the (fact, local-assignment) extensions
//! consistent with the bindings so far, picks one uniformly, and multiplies
//! the running weight by the number of choices; a step with no extensions
//! zeroes the trial. A final correction divides by the number of parallel
//! facts matching each grounded pattern, which makes the mean an unbiased
//! estimate of the assignment-level cardinality. Failed trials contribute
//! zero weight, so scarce matches drive the mean toward underestimation at
//! small sample counts.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::exact::local_assignments;
use crate::hkg::{EntityId, Hkg, RelationId};
use crate::query::{validate, FactPattern, Query, Term};

/// Pattern evaluation order forming a connected expansion.
#[derive(Debug, Clone)]
pub struct WalkPlan {
    pub order: Vec<usize>,
}

impl WalkPlan {
    /// Greedy most-selective-first: start at the pattern with the fewest
    /// statically matching facts, then repeatedly take the connected pattern
    /// with the smallest static candidate count.
    pub fn build(hkg: &Hkg, query: &Query) -> Result<WalkPlan> {
        let n = query.patterns.len();
        if n == 0 {
            return Err(CoreError::InvalidQuery("query has no fact patterns".into()));
        }
        let selectivity: Vec<usize> = query
            .patterns
            .iter()
            .map(|p| static_candidates(hkg, p).len())
            .collect();
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        let first = (0..n).min_by_key(|&i| (selectivity[i], i)).unwrap();
        placed[first] = true;
        order.push(first);
        while order.len() < n {
            let next = (0..n)
                .filter(|&i| !placed[i])
                .filter(|&i| {
                    order
                        .iter()
                        .any(|&j| shares_node(&query.patterns[i], &query.patterns[j]))
                })
                .min_by_key(|&i| (selectivity[i], i));
            match next {
                Some(i) => {
                    placed[i] = true;
                    order.push(i);
                }
                None => {
                    return Err(CoreError::InvalidQuery(
                        "query skeleton is disconnected".into(),
                    ))
                }
            }
        }
        Ok(WalkPlan { order })
    }
}

fn shares_node(a: &FactPattern, b: &FactPattern) -> bool {
    let ends = |p: &FactPattern| [p.subject.clone(), p.object.clone()];
    ends(a).iter().any(|t| ends(b).contains(t))
}

/// Facts matching the pattern's bound constants only (variables unconstrained).
fn static_candidates(hkg: &Hkg, pattern: &FactPattern) -> Vec<u32> {
    let quals: Vec<(RelationId, Option<EntityId>)> = pattern
        .qualifiers
        .iter()
        .filter_map(|(qr, qe)| qr.bound().map(|r| (r, qe.bound())))
        .collect();
    hkg.match_facts(
        pattern.subject.bound(),
        pattern.predicate.bound(),
        pattern.object.bound(),
        &quals,
    )
}

/// Mean trial weight over `n_samples` random walks.
pub fn estimate_sampling<R: Rng>(
    hkg: &Hkg,
    query: &Query,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let violations = validate(query);
    if !violations.is_empty() {
        return Err(CoreError::InvalidQuery(
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    if n_samples == 0 {
        return Err(CoreError::ZeroSamples);
    }
    let plan = WalkPlan::build(hkg, query)?;
    // Independent per-trial streams: parallel schedules with the same stream
    // assignment reproduce the single-threaded mean.
    let base = rng.next_u64();
    let mut sum = 0f64;
    for trial in 0..n_samples {
        let mut trial_rng = ChaCha8Rng::seed_from_u64(base);
        trial_rng.set_stream(trial as u64);
        sum += run_trial(hkg, query, &plan, &mut trial_rng)?;
    }
    Ok(sum / n_samples as f64)
}

/// Per-trial success indicator and weight, exposed for diagnostics.
pub fn estimate_sampling_detailed<R: Rng>(
    hkg: &Hkg,
    query: &Query,
    n_samples: usize,
    rng: &mut R,
) -> Result<(f64, f64, Vec<f64>)> {
    if n_samples == 0 {
        return Err(CoreError::ZeroSamples);
    }
    let plan = WalkPlan::build(hkg, query)?;
    let base = rng.next_u64();
    let mut weights = Vec::with_capacity(n_samples);
    for trial in 0..n_samples {
        let mut trial_rng = ChaCha8Rng::seed_from_u64(base);
        trial_rng.set_stream(trial as u64);
        weights.push(run_trial(hkg, query, &plan, &mut trial_rng)?);
    }
    let mean = weights.iter().sum::<f64>() / n_samples as f64;
    let success = weights.iter().filter(|&&w| w > 0.0).count() as f64 / n_samples as f64;
    Ok((mean, success, weights))
}

#[derive(Default, Clone)]
struct Bindings {
    entities: HashMap<String, EntityId>,
    relations: HashMap<String, RelationId>,
}

impl Bindings {
    fn ground_entity(&self, term: &Term<EntityId>) -> Option<EntityId> {
        match term {
            Term::Bound(e) => Some(*e),
            Term::Var(name) => self.entities.get(name).copied(),
        }
    }

    fn ground_relation(&self, term: &Term<RelationId>) -> Option<RelationId> {
        match term {
            Term::Bound(r) => Some(*r),
            Term::Var(name) => self.relations.get(name).copied(),
        }
    }
}

fn run_trial(hkg: &Hkg, query: &Query, plan: &WalkPlan, rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut bindings = Bindings::default();
    let mut weight = 1f64;
    for &pi in &plan.order {
        let pattern = &query.patterns[pi];
        let partial = substituted(pattern, &bindings);
        // Candidate extensions: (fact, distinct local assignment) pairs.
        let mut choices: Vec<(u32, Vec<u32>)> = Vec::new();
        for fid in candidate_facts(hkg, &partial) {
            for asg in local_assignments(&partial, hkg.fact(fid)) {
                choices.push((fid, asg));
            }
        }
        if choices.is_empty() {
            return Ok(0.0);
        }
        choices.sort_unstable();
        weight *= choices.len() as f64;
        let (fid, asg) = choices[rng.random_range(0..choices.len())].clone();
        bind_from_choice(pattern, &partial, hkg, fid, &asg, &mut bindings);
    }
    // Dedup correction: divide by the number of parallel facts matched by
    // each pattern under the completed assignment.
    for pattern in &query.patterns {
        let grounded = substituted(pattern, &bindings);
        let parallel = candidate_facts(hkg, &grounded)
            .into_iter()
            .filter(|&fid| !local_assignments(&grounded, hkg.fact(fid)).is_empty())
            .count();
        debug_assert!(parallel >= 1, "completed trial must match every pattern");
        weight /= parallel as f64;
    }
    Ok(weight)
}

/// Replace bound variables by their values; unbound variables stay variables.
fn substituted(pattern: &FactPattern, bindings: &Bindings) -> FactPattern {
    let e = |t: &Term<EntityId>| match bindings.ground_entity(t) {
        Some(v) => Term::Bound(v),
        None => t.clone(),
    };
    let r = |t: &Term<RelationId>| match bindings.ground_relation(t) {
        Some(v) => Term::Bound(v),
        None => t.clone(),
    };
    FactPattern {
        subject: e(&pattern.subject),
        predicate: r(&pattern.predicate),
        object: e(&pattern.object),
        qualifiers: pattern
            .qualifiers
            .iter()
            .map(|(qr, qe)| (r(qr), e(qe)))
            .collect(),
    }
}

/// Facts compatible with the partially grounded pattern's fixed positions,
/// via the most selective index; qualifier satisfiability is checked by the
/// caller through local-assignment enumeration.
fn candidate_facts(hkg: &Hkg, partial: &FactPattern) -> Vec<u32> {
    let s = partial.subject.bound();
    let p = partial.predicate.bound();
    let o = partial.object.bound();
    let base: Vec<u32> = match (s, p, o) {
        (Some(s), Some(p), _) => hkg.facts_from_with(s, p).to_vec(),
        (_, Some(p), Some(o)) => hkg.facts_to_with(o, p).to_vec(),
        (Some(s), None, _) => hkg.facts_from(s).to_vec(),
        (None, _, Some(o)) => hkg.facts_to(o).to_vec(),
        (None, _, None) => (0..hkg.facts().len() as u32).collect(),
    };
    let same_var_endpoints = match (partial.subject.var_name(), partial.object.var_name()) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    };
    base.into_iter()
        .filter(|&fid| {
            let f = hkg.fact(fid);
            s.is_none_or(|v| f.subject == v)
                && p.is_none_or(|v| f.predicate == v)
                && o.is_none_or(|v| f.object == v)
                && (!same_var_endpoints || f.subject == f.object)
        })
        .collect()
}

fn bind_from_choice(
    original: &FactPattern,
    partial: &FactPattern,
    hkg: &Hkg,
    fid: u32,
    assignment: &[u32],
    bindings: &mut Bindings,
) {
    let fact = hkg.fact(fid);
    if let Term::Var(name) = &original.subject {
        bindings.entities.entry(name.clone()).or_insert(fact.subject);
    }
    if let Term::Var(name) = &original.object {
        bindings.entities.entry(name.clone()).or_insert(fact.object);
    }
    // Local variables (predicate/qualifier atoms) take the sampled
    // assignment's values, read back in the partial pattern's slot order,
    // which mirrors local_assignments.
    let mut slots: Vec<&str> = Vec::new();
    if let Some(n) = partial.predicate.var_name() {
        if !slots.contains(&n) {
            slots.push(n);
        }
    }
    for (qr, qe) in &partial.qualifiers {
        if let Some(n) = qr.var_name() {
            if !slots.contains(&n) {
                slots.push(n);
            }
        }
        if let Some(n) = qe.var_name() {
            if !slots.contains(&n) {
                slots.push(n);
            }
        }
    }
    debug_assert_eq!(slots.len(), assignment.len());
    for (i, name) in slots.iter().enumerate() {
        let is_relation_slot = partial.predicate.var_name() == Some(name)
            || partial
                .qualifiers
                .iter()
                .any(|(qr, _)| qr.var_name() == Some(name));
        if is_relation_slot {
            bindings
                .relations
                .entry(name.to_string())
                .or_insert(RelationId(assignment[i]));
        } else {
            bindings
                .entities
                .entry(name.to_string())
                .or_insert(EntityId(assignment[i]));
        }
    }
}
