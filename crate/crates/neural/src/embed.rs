//! Layer-0 embedding sources: a word2vec-style text table for pretrained
//! rows plus a deterministic seeded fallback for atoms without one.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hrce_core::hkg::Vocab;
use hrce_core::{EntityId, RelationId};

use crate::error::{NeuralError, Result};
use crate::params::normal;

/// Text table: a first line holding the dimension, then `label v1..vD` per
/// line, whitespace separated.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    rows: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn parse(text: &str) -> Result<EmbeddingTable> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| NeuralError::Invalid("empty embedding table".into()))?;
        let dim: usize = header
            .trim()
            .parse()
            .map_err(|_| NeuralError::Invalid(format!("bad dimension header {header:?}")))?;
        let mut rows = HashMap::new();
        for (idx, line) in lines.enumerate() {
            let mut parts = line.split_whitespace();
            let label = parts
                .next()
                .ok_or_else(|| NeuralError::Invalid(format!("line {}: empty", idx + 2)))?;
            let values: Vec<f64> = parts
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| NeuralError::Invalid(format!("line {}: bad float {t:?}", idx + 2)))
                })
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(NeuralError::Invalid(format!(
                    "line {}: expected {dim} values, got {}",
                    idx + 2,
                    values.len()
                )));
            }
            rows.insert(label.to_string(), values);
        }
        Ok(EmbeddingTable { dim, rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
        EmbeddingTable::parse(&std::fs::read_to_string(path)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, label: &str) -> Option<&[f64]> {
        self.rows.get(label).map(Vec::as_slice)
    }
}

/// Resolves bound atoms to layer-0 rows: table rows when available,
/// otherwise seeded unit-normal rows keyed by the atom's label.
#[derive(Debug, Clone)]
pub struct EmbeddingSource {
    pub dim: usize,
    table: Option<EmbeddingTable>,
    fallback_seed: u64,
    /// With a table present, atoms missing from it are an error rather than
    /// a fallback draw.
    strict: bool,
}

impl EmbeddingSource {
    pub fn fallback(dim: usize, seed: u64) -> EmbeddingSource {
        EmbeddingSource {
            dim,
            table: None,
            fallback_seed: seed,
            strict: false,
        }
    }

    pub fn from_table(table: EmbeddingTable) -> EmbeddingSource {
        EmbeddingSource {
            dim: table.dim(),
            table: Some(table),
            fallback_seed: 0,
            strict: true,
        }
    }

    fn row_for_label(&self, kind: &str, label: &str) -> Result<Vec<f64>> {
        if let Some(table) = &self.table {
            return match table.row(label) {
                Some(row) => Ok(row.to_vec()),
                None if self.strict => Err(NeuralError::MissingEmbedding(label.to_string())),
                None => Ok(self.seeded_row(kind, label)),
            };
        }
        Ok(self.seeded_row(kind, label))
    }

    fn seeded_row(&self, kind: &str, label: &str) -> Vec<f64> {
        let mut h = self.fallback_seed ^ 0xcbf29ce484222325;
        for byte in kind.bytes().chain([0u8]).chain(label.bytes()) {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        (0..self.dim).map(|_| normal(&mut rng)).collect()
    }

    pub fn entity_row(&self, vocab: &Vocab, id: EntityId) -> Result<Vec<f64>> {
        self.row_for_label("entity", vocab.entity_label(id))
    }

    pub fn relation_row(&self, vocab: &Vocab, id: RelationId) -> Result<Vec<f64>> {
        self.row_for_label("relation", vocab.relation_label(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hrce_core::Hkg;

    #[test]
    fn parses_header_and_rows() {
        let table = EmbeddingTable::parse("3\nalice 0.1 0.2 0.3\nbob 1 2 3\n").unwrap();
        assert_eq!(table.dim(), 3);
        assert_eq!(table.row("bob").unwrap(), &[1.0, 2.0, 3.0]);
        assert!(table.row("carol").is_none());
    }

    #[test]
    fn row_length_mismatch_rejected() {
        assert!(EmbeddingTable::parse("3\nalice 0.1 0.2\n").unwrap_err().to_string().contains("expected 3"));
    }

    #[test]
    fn fallback_rows_are_deterministic_per_label() {
        let hkg = Hkg::parse("a,p,b\n").unwrap();
        let source = EmbeddingSource::fallback(8, 42);
        let a = hkg.vocab().entity("a").unwrap();
        let row1 = source.entity_row(hkg.vocab(), a).unwrap();
        let row2 = source.entity_row(hkg.vocab(), a).unwrap();
        assert_eq!(row1, row2);
        let b = hkg.vocab().entity("b").unwrap();
        assert_ne!(row1, source.entity_row(hkg.vocab(), b).unwrap());
    }

    #[test]
    fn strict_table_reports_missing_atoms() {
        let hkg = Hkg::parse("a,p,b\n").unwrap();
        let table = EmbeddingTable::parse("2\na 1 0\np 0 1\n").unwrap();
        let source = EmbeddingSource::from_table(table);
        let b = hkg.vocab().entity("b").unwrap();
        assert!(matches!(
            source.entity_row(hkg.vocab(), b),
            Err(NeuralError::MissingEmbedding(_))
        ));
    }
}
