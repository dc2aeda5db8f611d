//! Seeded synthetic HKG builder for tests, benchmarks, and demos.
//!
//! Produces hub-skewed graphs with reciprocal edges, closed triangles,
//! optional rings (so cyclic query shapes are instantiable), and qualifier
//! pairs whose relations correlate with the fact predicate (so qualifier
//! completion has signal to learn).

use rand::Rng;

use crate::hkg::Hkg;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub entities: usize,
    pub relations: usize,
    pub facts: usize,
    /// Probability that a fact carries qualifiers.
    pub qualifier_prob: f64,
    /// 1..=max qualifier pairs per qualified fact.
    pub max_qualifiers: usize,
    /// Number of distinct qualifier relations.
    pub qual_relations: usize,
    /// Number of distinct qualifier value entities.
    pub qual_entities: usize,
    /// Probability of also inserting the reverse edge.
    pub reciprocal_prob: f64,
    /// Probability of closing a length-2 path into a triangle.
    pub triangle_prob: f64,
    /// Also lay down directed rings of lengths 3, 6, 9, 12.
    pub with_rings: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            entities: 150,
            relations: 8,
            facts: 1000,
            qualifier_prob: 0.5,
            max_qualifiers: 3,
            qual_relations: 6,
            qual_entities: 12,
            reciprocal_prob: 0.08,
            triangle_prob: 0.12,
            with_rings: true,
        }
    }
}

impl SynthConfig {
    pub fn small(entities: usize, facts: usize) -> SynthConfig {
        SynthConfig {
            entities,
            relations: 4,
            facts,
            qualifier_prob: 0.5,
            max_qualifiers: 2,
            qual_relations: 3,
            qual_entities: 4,
            reciprocal_prob: 0.15,
            triangle_prob: 0.2,
            with_rings: false,
        }
    }
}

pub fn synth_hkg<R: Rng>(config: &SynthConfig, rng: &mut R) -> Hkg {
    let mut lines: Vec<String> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();

    // Skewed endpoint draw: squaring biases toward low indices (hubs).
    let skewed = |rng: &mut R, n: usize| -> usize {
        let u: f64 = rng.random();
        ((u * u) * n as f64) as usize % n.max(1)
    };

    let push_fact =
        |rng: &mut R, lines: &mut Vec<String>, edges: &mut Vec<(usize, usize)>, s: usize, p: usize, o: usize| {
            let mut line = format!("e{s},r{p},e{o}");
            if rng.random_bool(config.qualifier_prob) && config.qual_relations > 0 {
                let k = rng.random_range(1..=config.max_qualifiers.max(1));
                let mut used: Vec<(usize, usize)> = Vec::new();
                for j in 0..k {
                    // First pair is the predicate's signature; extras are random.
                    let (qr, qe) = if j == 0 {
                        (p % config.qual_relations, p % config.qual_entities.max(1))
                    } else {
                        (
                            rng.random_range(0..config.qual_relations),
                            rng.random_range(0..config.qual_entities.max(1)),
                        )
                    };
                    if used.contains(&(qr, qe)) {
                        continue;
                    }
                    used.push((qr, qe));
                    line.push_str(&format!(",qr{qr},qv{qe}"));
                }
            }
            lines.push(line);
            edges.push((s, o));
        };

    while edges.len() < config.facts {
        let roll: f64 = rng.random();
        if roll < config.triangle_prob && edges.len() >= 2 {
            // Close a directed triangle over an existing 2-path.
            let (a, b) = edges[rng.random_range(0..edges.len())];
            let second: Vec<(usize, usize)> = edges
                .iter()
                .copied()
                .filter(|&(s, _)| s == b)
                .collect();
            if let Some(&(_, c)) = second.get(rng.random_range(0..second.len().max(1)).min(second.len().saturating_sub(1))) {
                let p = rng.random_range(0..config.relations);
                push_fact(rng, &mut lines, &mut edges, c, p, a);
                continue;
            }
        } else if roll < config.triangle_prob + config.reciprocal_prob && !edges.is_empty() {
            let (s, o) = edges[rng.random_range(0..edges.len())];
            let p = rng.random_range(0..config.relations);
            push_fact(rng, &mut lines, &mut edges, o, p, s);
            continue;
        }
        let s = skewed(rng, config.entities);
        let o = skewed(rng, config.entities);
        let p = rng.random_range(0..config.relations);
        push_fact(rng, &mut lines, &mut edges, s, p, o);
    }

    if config.with_rings {
        for len in [3usize, 6, 9, 12] {
            for i in 0..len {
                let s = format!("ring{len}_{i}");
                let o = format!("ring{len}_{}", (i + 1) % len);
                lines.push(format!("{s},rring,{o}"));
                // A spoke so flowers can grow pendant chains off the ring.
                if i == 0 {
                    lines.push(format!("{s},r0,e0"));
                }
            }
        }
    }

    Hkg::parse(&lines.join("\n")).expect("synthetic fact lines are well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn synth_is_deterministic_and_sized() {
        let config = SynthConfig::default();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let h1 = synth_hkg(&config, &mut r1);
        let h2 = synth_hkg(&config, &mut r2);
        assert_eq!(h1, h2);
        assert!(h1.facts().len() >= config.facts);
        let stats = h1.stats();
        assert!(stats.qualified_fact_fraction > 0.2);
    }

    #[test]
    fn small_config_has_qualifiers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hkg = synth_hkg(&SynthConfig::small(20, 60), &mut rng);
        assert!(hkg.facts().iter().any(|f| f.qualifiers.len() >= 2));
    }
}
