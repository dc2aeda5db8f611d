//! Immutable hyper-relational fact store.
//!
//! Facts are `(subject, predicate, object)` triples extended with an ordered
//! sequence of `(qualifier relation, qualifier entity)` pairs. The store
//! interns labels into dense ids, keeps adjacency and `(endpoint, predicate)`
//! indices, and never mutates after load.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Dense id of an interned entity label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

/// Dense id of an interned relation label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

/// Index of a fact in [`Hkg::facts`].
pub type FactId = u32;

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// One hyper-relational fact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fact {
    pub subject: EntityId,
    pub predicate: RelationId,
    pub object: EntityId,
    /// Ordered qualifier pairs; duplicates within one fact are rejected at load.
    pub qualifiers: Vec<(RelationId, EntityId)>,
}

impl Fact {
    pub fn is_qualified(&self) -> bool {
        !self.qualifiers.is_empty()
    }

    /// True when the fact carries the exact qualifier pair.
    pub fn has_qualifier(&self, qr: RelationId, qe: EntityId) -> bool {
        self.qualifiers.iter().any(|&(r, e)| r == qr && e == qe)
    }
}

/// Bidirectional label interner; ids are contiguous from 0 in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    entity_labels: Vec<String>,
    relation_labels: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    relation_ids: HashMap<String, RelationId>,
}

impl Vocab {
    fn intern_entity(&mut self, label: &str) -> EntityId {
        if let Some(&id) = self.entity_ids.get(label) {
            return id;
        }
        let id = EntityId(self.entity_labels.len() as u32);
        self.entity_labels.push(label.to_string());
        self.entity_ids.insert(label.to_string(), id);
        id
    }

    fn intern_relation(&mut self, label: &str) -> RelationId {
        if let Some(&id) = self.relation_ids.get(label) {
            return id;
        }
        let id = RelationId(self.relation_labels.len() as u32);
        self.relation_labels.push(label.to_string());
        self.relation_ids.insert(label.to_string(), id);
        id
    }

    pub fn entity(&self, label: &str) -> Option<EntityId> {
        self.entity_ids.get(label).copied()
    }

    pub fn relation(&self, label: &str) -> Option<RelationId> {
        self.relation_ids.get(label).copied()
    }

    pub fn entity_label(&self, id: EntityId) -> &str {
        &self.entity_labels[id.0 as usize]
    }

    pub fn relation_label(&self, id: RelationId) -> &str {
        &self.relation_labels[id.0 as usize]
    }

    pub fn entity_count(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_labels.len()
    }
}

/// Aggregate statistics of an [`Hkg`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HkgStats {
    pub fact_count: usize,
    /// Fraction of facts carrying at least one qualifier; 0 for an empty store.
    pub qualified_fact_fraction: f64,
    pub entity_count: usize,
    pub relation_count: usize,
}

/// Immutable, fully indexed hyper-relational knowledge graph.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Hkg {
    vocab: Vocab,
    facts: Vec<Fact>,
    out_index: HashMap<EntityId, Vec<FactId>>,
    in_index: HashMap<EntityId, Vec<FactId>>,
    sp_index: HashMap<(EntityId, RelationId), Vec<FactId>>,
    op_index: HashMap<(EntityId, RelationId), Vec<FactId>>,
    /// All distinct qualifier pairs seen anywhere, sorted.
    qualifier_vocab: Vec<(RelationId, EntityId)>,
    /// Per predicate: the sorted distinct qualifier pairs co-occurring with it.
    predicate_qualifiers: HashMap<RelationId, Vec<(RelationId, EntityId)>>,
}

/// One fact in the snapshot wire format: ids only, indices are rebuilt on load.
#[derive(Serialize, Deserialize)]
struct SnapshotFact {
    s: u32,
    p: u32,
    o: u32,
    q: Vec<(u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    entities: Vec<String>,
    relations: Vec<String>,
    facts: Vec<SnapshotFact>,
}

impl Hkg {
    /// Parse the comma-separated fact dialect: one fact per line,
    /// `s,p,o[,qr,qe]*`, `#` starts a comment line, blank lines are skipped.
    pub fn parse(text: &str) -> Result<Hkg> {
        let mut builder = HkgBuilder::default();
        for (idx, raw) in text.lines().enumerate() {
            builder.push_line(idx + 1, raw)?;
        }
        Ok(builder.finish())
    }

    /// Load a fact file from disk; see [`Hkg::parse`] for the dialect.
    pub fn load(path: impl AsRef<Path>) -> Result<Hkg> {
        let file = std::fs::File::open(path)?;
        let mut builder = HkgBuilder::default();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            builder.push_line(idx + 1, &line?)?;
        }
        Ok(builder.finish())
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn fact(&self, id: FactId) -> &Fact {
        &self.facts[id as usize]
    }

    pub fn entity_count(&self) -> usize {
        self.vocab.entity_count()
    }

    pub fn relation_count(&self) -> usize {
        self.vocab.relation_count()
    }

    pub fn facts_from(&self, subject: EntityId) -> &[FactId] {
        self.out_index.get(&subject).map_or(&[], Vec::as_slice)
    }

    pub fn facts_to(&self, object: EntityId) -> &[FactId] {
        self.in_index.get(&object).map_or(&[], Vec::as_slice)
    }

    pub fn facts_from_with(&self, subject: EntityId, predicate: RelationId) -> &[FactId] {
        self.sp_index
            .get(&(subject, predicate))
            .map_or(&[], Vec::as_slice)
    }

    pub fn facts_to_with(&self, object: EntityId, predicate: RelationId) -> &[FactId] {
        self.op_index
            .get(&(object, predicate))
            .map_or(&[], Vec::as_slice)
    }

    pub fn qualifier_vocab(&self) -> &[(RelationId, EntityId)] {
        &self.qualifier_vocab
    }

    /// Qualifier pairs observed on facts with this predicate (sorted, distinct).
    pub fn predicate_qualifiers(&self, predicate: RelationId) -> &[(RelationId, EntityId)] {
        self.predicate_qualifiers
            .get(&predicate)
            .map_or(&[], Vec::as_slice)
    }

    pub fn stats(&self) -> HkgStats {
        let qualified = self.facts.iter().filter(|f| f.is_qualified()).count();
        let fraction = if self.facts.is_empty() {
            0.0
        } else {
            qualified as f64 / self.facts.len() as f64
        };
        HkgStats {
            fact_count: self.facts.len(),
            qualified_fact_fraction: fraction,
            entity_count: self.vocab.entity_count(),
            relation_count: self.vocab.relation_count(),
        }
    }

    /// All facts whose fixed positions equal the given constants and whose
    /// qualifier set admits an injective embedding of `required_quals`.
    ///
    /// A required pair with an absent entity matches any qualifier pair with
    /// that relation. Picks the most selective available index, then filters.
    pub fn match_facts(
        &self,
        s: Option<EntityId>,
        p: Option<RelationId>,
        o: Option<EntityId>,
        required_quals: &[(RelationId, Option<EntityId>)],
    ) -> Vec<FactId> {
        let candidates: Vec<FactId> = match (s, p, o) {
            (Some(s), Some(p), _) => self.facts_from_with(s, p).to_vec(),
            (_, Some(p), Some(o)) => self.facts_to_with(o, p).to_vec(),
            (Some(s), None, _) => self.facts_from(s).to_vec(),
            (None, _, Some(o)) => self.facts_to(o).to_vec(),
            (None, _, None) => (0..self.facts.len() as FactId).collect(),
        };
        candidates
            .into_iter()
            .filter(|&id| {
                let f = self.fact(id);
                s.is_none_or(|v| f.subject == v)
                    && p.is_none_or(|v| f.predicate == v)
                    && o.is_none_or(|v| f.object == v)
                    && embeds_injectively(required_quals, &f.qualifiers)
            })
            .collect()
    }

    /// Logical snapshot as JSON; reloading yields an identical store.
    pub fn to_snapshot_json(&self) -> String {
        let snap = Snapshot {
            entities: self.vocab.entity_labels.clone(),
            relations: self.vocab.relation_labels.clone(),
            facts: self
                .facts
                .iter()
                .map(|f| SnapshotFact {
                    s: f.subject.0,
                    p: f.predicate.0,
                    o: f.object.0,
                    q: f.qualifiers.iter().map(|&(r, e)| (r.0, e.0)).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&snap).expect("snapshot serialization cannot fail")
    }

    pub fn from_snapshot_json(json: &str) -> Result<Hkg> {
        let snap: Snapshot =
            serde_json::from_str(json).map_err(|e| CoreError::Snapshot(e.to_string()))?;
        let mut vocab = Vocab::default();
        for label in &snap.entities {
            vocab.intern_entity(label);
        }
        for label in &snap.relations {
            vocab.intern_relation(label);
        }
        if vocab.entity_count() != snap.entities.len() || vocab.relation_count() != snap.relations.len()
        {
            return Err(CoreError::Snapshot("duplicate labels in snapshot".into()));
        }
        let ne = snap.entities.len() as u32;
        let nr = snap.relations.len() as u32;
        let mut facts = Vec::with_capacity(snap.facts.len());
        for f in &snap.facts {
            let in_range = f.s < ne
                && f.o < ne
                && f.p < nr
                && f.q.iter().all(|&(r, e)| r < nr && e < ne);
            if !in_range {
                return Err(CoreError::Snapshot("fact references out-of-range id".into()));
            }
            facts.push(Fact {
                subject: EntityId(f.s),
                predicate: RelationId(f.p),
                object: EntityId(f.o),
                qualifiers: f
                    .q
                    .iter()
                    .map(|&(r, e)| (RelationId(r), EntityId(e)))
                    .collect(),
            });
        }
        Ok(Hkg::from_parts(vocab, facts))
    }

    pub fn save_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_snapshot_json())?;
        Ok(())
    }

    pub fn load_snapshot(path: impl AsRef<Path>) -> Result<Hkg> {
        let text = std::fs::read_to_string(path)?;
        Hkg::from_snapshot_json(&text)
    }

    fn from_parts(vocab: Vocab, facts: Vec<Fact>) -> Hkg {
        let mut hkg = Hkg {
            vocab,
            facts,
            ..Hkg::default()
        };
        let mut qual_set: HashSet<(RelationId, EntityId)> = HashSet::new();
        let mut pred_quals: HashMap<RelationId, HashSet<(RelationId, EntityId)>> = HashMap::new();
        for (idx, fact) in hkg.facts.iter().enumerate() {
            let id = idx as FactId;
            hkg.out_index.entry(fact.subject).or_default().push(id);
            hkg.in_index.entry(fact.object).or_default().push(id);
            hkg.sp_index
                .entry((fact.subject, fact.predicate))
                .or_default()
                .push(id);
            hkg.op_index
                .entry((fact.object, fact.predicate))
                .or_default()
                .push(id);
            for &pair in &fact.qualifiers {
                qual_set.insert(pair);
                pred_quals.entry(fact.predicate).or_default().insert(pair);
            }
        }
        let mut qual_vocab: Vec<_> = qual_set.into_iter().collect();
        qual_vocab.sort_unstable();
        hkg.qualifier_vocab = qual_vocab;
        hkg.predicate_qualifiers = pred_quals
            .into_iter()
            .map(|(p, set)| {
                let mut v: Vec<_> = set.into_iter().collect();
                v.sort_unstable();
                (p, v)
            })
            .collect();
        hkg
    }
}

/// True when every required pair can be matched to a distinct qualifier pair
/// of the fact. `(qr, None)` matches any pair with relation `qr`.
pub(crate) fn embeds_injectively(
    required: &[(RelationId, Option<EntityId>)],
    available: &[(RelationId, EntityId)],
) -> bool {
    if required.len() > available.len() {
        return false;
    }
    let mut used = vec![false; available.len()];
    fn rec(
        required: &[(RelationId, Option<EntityId>)],
        available: &[(RelationId, EntityId)],
        used: &mut [bool],
        slot: usize,
    ) -> bool {
        if slot == required.len() {
            return true;
        }
        let (qr, qe) = required[slot];
        for (i, &(ar, ae)) in available.iter().enumerate() {
            if used[i] || ar != qr || qe.is_some_and(|e| e != ae) {
                continue;
            }
            used[i] = true;
            if rec(required, available, used, slot + 1) {
                used[i] = false;
                return true;
            }
            used[i] = false;
        }
        false
    }
    rec(required, available, &mut used, 0)
}

#[derive(Default)]
struct HkgBuilder {
    vocab: Vocab,
    facts: Vec<Fact>,
}

impl HkgBuilder {
    fn push_line(&mut self, line_no: usize, raw: &str) -> Result<()> {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            return Ok(());
        }
        let tokens: Vec<&str> = line.split(',').map(str::trim).collect();
        if tokens.len() < 3 {
            return Err(CoreError::MalformedLine {
                line: line_no,
                msg: format!("expected at least 3 comma-separated tokens, got {}", tokens.len()),
            });
        }
        if tokens.iter().any(|t| t.is_empty()) {
            return Err(CoreError::MalformedLine {
                line: line_no,
                msg: "empty token".into(),
            });
        }
        let tail = &tokens[3..];
        if tail.len() % 2 != 0 {
            return Err(CoreError::OddQualifierTail {
                line: line_no,
                ntokens: tail.len(),
            });
        }
        let subject = self.vocab.intern_entity(tokens[0]);
        let predicate = self.vocab.intern_relation(tokens[1]);
        let object = self.vocab.intern_entity(tokens[2]);
        let mut qualifiers = Vec::with_capacity(tail.len() / 2);
        for pair in tail.chunks_exact(2) {
            let qr = self.vocab.intern_relation(pair[0]);
            let qe = self.vocab.intern_entity(pair[1]);
            if qualifiers.contains(&(qr, qe)) {
                return Err(CoreError::DuplicateQualifier {
                    line: line_no,
                    qr: pair[0].to_string(),
                    qe: pair[1].to_string(),
                });
            }
            qualifiers.push((qr, qe));
        }
        self.facts.push(Fact {
            subject,
            predicate,
            object,
            qualifiers,
        });
        Ok(())
    }

    fn finish(self) -> Hkg {
        Hkg::from_parts(self.vocab, self.facts)
    }
}
