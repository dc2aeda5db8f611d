//! Qualifier-aware GNN query encoder and cardinality decoder.
//!
//! Per layer, each fact pattern aggregates its qualifier pairs by rotate
//! composition into a projected summary, optionally blended with a CVAE
//! completion of missing qualifiers, adds that to the relation embedding,
//! and exchanges GIN-style messages between its endpoints. Node states from
//! all layers are combined through a gated sum, read out by global
//! summation, and decoded by an MLP into the predicted log-cardinality.
//!
//! All sums run in a canonical, rename-invariant order, so reordering fact
//! patterns or renaming variables reproduces the output bit for bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use hrce_core::hkg::Vocab;
use hrce_core::query::{Query, Term};
use hrce_core::skeleton::{canonical_order, NodeKey, Skeleton};

use crate::cvae::{complete_qualifiers_tape, CvaeModel};
use crate::embed::EmbeddingSource;
use crate::error::{NeuralError, Result};
use crate::mlp::{init_mlp, mlp_forward, Activation};
use crate::params::ParamStore;
use crate::tape::{Tape, ValueId};

pub use crate::tape::rotate_mul_vec as rotate_compose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    /// Logistic gate: retainment scores in (0, 1). The default.
    Sigmoid,
    /// ReLU gate, kept for ablation.
    Relu,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension d (even).
    pub dim: usize,
    /// Message-passing layer count L.
    pub layers: usize,
    /// Qualifier-completion weight in [0, 1]; 0 bypasses the CVAE entirely.
    pub lambda: f64,
    /// Hidden width of the per-layer GIN update MLP.
    pub mlp_hidden: usize,
    /// Hidden width of the cardinality decoder.
    pub decoder_hidden: usize,
    pub gate: GateKind,
    /// Seed of the fallback layer-0 embedding rows; part of the model's
    /// identity whenever no pretrained table is supplied.
    #[serde(default)]
    pub embed_seed: u64,
}

impl ModelConfig {
    pub fn new(dim: usize, layers: usize, lambda: f64) -> ModelConfig {
        ModelConfig {
            dim,
            layers,
            lambda,
            mlp_hidden: dim,
            decoder_hidden: dim,
            gate: GateKind::Sigmoid,
            embed_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim % 2 != 0 {
            return Err(NeuralError::Invalid(format!(
                "embedding dim must be even and positive, got {}",
                self.dim
            )));
        }
        if self.layers == 0 {
            return Err(NeuralError::Invalid("layer count must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(NeuralError::Invalid(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        Ok(())
    }

    fn mtheta_sizes(&self) -> Vec<usize> {
        vec![self.dim, self.mlp_hidden, self.dim]
    }

    fn decoder_sizes(&self) -> Vec<usize> {
        vec![self.dim, self.decoder_hidden, 1]
    }
}

#[derive(Debug, Clone)]
pub struct HrqeModel {
    pub config: ModelConfig,
    pub params: ParamStore,
}

pub fn init_model<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<HrqeModel> {
    config.validate()?;
    let d = config.dim;
    let mut params = ParamStore::new();
    for k in 0..config.layers {
        params.init_matrix(&format!("layer{k}.w_qual"), d, d, rng)?;
        params.init_matrix(&format!("layer{k}.w_e"), d, 3 * d, rng)?;
        params.init_matrix(&format!("layer{k}.w_r"), d, d, rng)?;
        params.init_matrix(&format!("layer{k}.w_qr"), d, d, rng)?;
        params.init_matrix(&format!("layer{k}.w_qe"), d, d, rng)?;
        init_mlp(&mut params, &format!("layer{k}.mtheta"), &config.mtheta_sizes(), rng)?;
    }
    params.init_zero_vector("gate.w", d)?;
    init_mlp(&mut params, "decoder", &config.decoder_sizes(), rng)?;
    Ok(HrqeModel { config, params })
}

impl HrqeModel {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let blob = serde_json::json!({
            "config": self.config,
            "params": serde_json::from_str::<serde_json::Value>(&self.params.to_checkpoint_json())
                .expect("checkpoint json"),
        });
        std::fs::write(path, blob.to_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<HrqeModel> {
        let text = std::fs::read_to_string(path)?;
        let blob: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let config: ModelConfig = serde_json::from_value(blob["config"].clone())
            .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let params = ParamStore::from_checkpoint_json(&blob["params"].to_string())?;
        Ok(HrqeModel { config, params })
    }
}

/// Layer-0 embeddings plus the canonical structure of one query.
#[derive(Debug, Clone)]
pub struct QueryEncoding {
    pub dim: usize,
    /// Per skeleton node.
    pub node_vecs: Vec<Vec<f64>>,
    /// Per pattern.
    pub pred_vecs: Vec<Vec<f64>>,
    /// Per pattern, per qualifier: (relation row, entity row).
    pub qual_vecs: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
    /// Per pattern: (subject node, object node).
    pub edges: Vec<(usize, usize)>,
    /// Canonical orders driving every summation.
    pub node_order: Vec<usize>,
    pub pattern_order: Vec<usize>,
    pub qual_order: Vec<Vec<usize>>,
}

/// Build layer-0 embeddings: bound atoms from the embedding source,
/// variables from their canonical numeric id — node and predicate variables
/// as `[id, 0, ...]`, qualifier-atom variables as `[id, 1, ..., 1]`.
pub fn init_query_embeddings(
    query: &Query,
    vocab: &Vocab,
    source: &EmbeddingSource,
) -> Result<QueryEncoding> {
    let dim = source.dim;
    let skel = Skeleton::of(query);
    let canon = canonical_order(query);

    let id_vec = |id: u32, fill: f64| -> Vec<f64> {
        let mut v = vec![fill; dim];
        v[0] = id as f64;
        v
    };

    let mut node_vecs = Vec::with_capacity(skel.nodes.len());
    for node in &skel.nodes {
        node_vecs.push(match node {
            NodeKey::Bound(e) => source.entity_row(vocab, *e)?,
            NodeKey::Var(name) => id_vec(canon.variable_ids[name], 0.0),
        });
    }

    let mut pred_vecs = Vec::with_capacity(query.patterns.len());
    let mut qual_vecs = Vec::with_capacity(query.patterns.len());
    let mut edges = Vec::with_capacity(query.patterns.len());
    for pat in &query.patterns {
        pred_vecs.push(match &pat.predicate {
            Term::Bound(r) => source.relation_row(vocab, *r)?,
            Term::Var(name) => id_vec(canon.variable_ids[name], 0.0),
        });
        let mut quals = Vec::with_capacity(pat.qualifiers.len());
        for (qr, qe) in &pat.qualifiers {
            let qr_vec = match qr {
                Term::Bound(r) => source.relation_row(vocab, *r)?,
                Term::Var(name) => id_vec(canon.variable_ids[name], 1.0),
            };
            let qe_vec = match qe {
                Term::Bound(e) => source.entity_row(vocab, *e)?,
                Term::Var(name) => id_vec(canon.variable_ids[name], 1.0),
            };
            quals.push((qr_vec, qe_vec));
        }
        qual_vecs.push(quals);
        edges.push((
            skel.node_of(&pat.subject).expect("endpoint interned"),
            skel.node_of(&pat.object).expect("endpoint interned"),
        ));
    }

    Ok(QueryEncoding {
        dim,
        node_vecs,
        pred_vecs,
        qual_vecs,
        edges,
        node_order: canon.node_order,
        pattern_order: canon.pattern_order,
        qual_order: canon.qualifier_order,
    })
}

/// Tape values of one layer's embeddings.
pub struct LayerState {
    pub nodes: Vec<ValueId>,
    pub preds: Vec<ValueId>,
    pub quals: Vec<Vec<(ValueId, ValueId)>>,
}

impl LayerState {
    /// Layer 0: constants from the encoding.
    pub fn input(tape: &mut Tape, enc: &QueryEncoding) -> Result<LayerState> {
        let nodes = enc
            .node_vecs
            .iter()
            .map(|v| tape.constant(v.clone()))
            .collect::<Result<_>>()?;
        let preds = enc
            .pred_vecs
            .iter()
            .map(|v| tape.constant(v.clone()))
            .collect::<Result<_>>()?;
        let quals = enc
            .qual_vecs
            .iter()
            .map(|pairs| {
                pairs
                    .iter()
                    .map(|(a, b)| Ok((tape.constant(a.clone())?, tape.constant(b.clone())?)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(LayerState { nodes, preds, quals })
    }
}

/// Sum of rotate compositions over a pattern's qualifier pairs, projected by
/// the layer's qualifier matrix; the empty set aggregates to zero.
pub fn aggregate_qualifiers(
    tape: &mut Tape,
    params: &ParamStore,
    layer_prefix: &str,
    pairs: &[(ValueId, ValueId)],
    order: &[usize],
    dim: usize,
) -> Result<ValueId> {
    if pairs.is_empty() {
        return tape.zeros(dim);
    }
    let mut composed = Vec::with_capacity(pairs.len());
    for &qi in order {
        let (qr, qe) = pairs[qi];
        composed.push(tape.rotate_mul(qr, qe)?);
    }
    let total = tape.sum(&composed)?;
    tape.matvec(params, &format!("{layer_prefix}.w_qual"), total)
}

/// Convex blend of the aggregated qualifier summary with the CVAE completion
/// of the pattern's context; `lambda == 0` bypasses the completer entirely.
#[allow(clippy::too_many_arguments)]
pub fn blend_qualifier(
    tape: &mut Tape,
    cvae: Option<&CvaeModel>,
    lambda: f64,
    h_tilde: ValueId,
    h_s: ValueId,
    h_p: ValueId,
    h_o: ValueId,
) -> Result<ValueId> {
    if lambda == 0.0 {
        return Ok(h_tilde);
    }
    let cvae = cvae.ok_or_else(|| {
        NeuralError::Invalid("lambda > 0 requires a qualifier completer".into())
    })?;
    let x = tape.concat(&[h_s, h_p, h_o, h_tilde])?;
    let completed = complete_qualifiers_tape(tape, cvae, x)?;
    if lambda == 1.0 {
        return Ok(completed);
    }
    let kept = tape.scale(h_tilde, 1.0 - lambda)?;
    let gen = tape.scale(completed, lambda)?;
    tape.add(kept, gen)
}

/// One qualifier-aware message-passing layer; `layer_prefix` selects the
/// parameter set (`layer{k-1}` advances layer k-1 to k).
pub fn message_passing_layer(
    tape: &mut Tape,
    params: &ParamStore,
    config: &ModelConfig,
    cvae: Option<&CvaeModel>,
    enc: &QueryEncoding,
    layer_prefix: &str,
    state: &LayerState,
) -> Result<LayerState> {
    // Per pattern: qualifier summary blended into the relation.
    let mut gamma = vec![None; enc.edges.len()];
    for &pi in &enc.pattern_order {
        let h_tilde = aggregate_qualifiers(
            tape,
            params,
            layer_prefix,
            &state.quals[pi],
            &enc.qual_order[pi],
            config.dim,
        )?;
        let (s_node, o_node) = enc.edges[pi];
        let h_qf = blend_qualifier(
            tape,
            cvae,
            config.lambda,
            h_tilde,
            state.nodes[s_node],
            state.preds[pi],
            state.nodes[o_node],
        )?;
        gamma[pi] = Some(tape.add(state.preds[pi], h_qf)?);
    }

    // Node updates: self + incoming + outgoing messages through the GIN MLP.
    let w_e = format!("{layer_prefix}.w_e");
    let mut new_nodes = Vec::with_capacity(state.nodes.len());
    for n in 0..state.nodes.len() {
        let mut terms = vec![state.nodes[n]];
        for &pi in &enc.pattern_order {
            let (s_node, o_node) = enc.edges[pi];
            let g = gamma[pi].expect("all patterns processed");
            // Incoming: facts pointing into n.
            if o_node == n {
                let x = tape.concat(&[state.nodes[n], g, state.nodes[s_node]])?;
                let m = tape.matvec(params, &w_e, x)?;
                terms.push(tape.relu(m)?);
            }
            // Outgoing: facts leaving n.
            if s_node == n {
                let x = tape.concat(&[state.nodes[o_node], g, state.nodes[n]])?;
                let m = tape.matvec(params, &w_e, x)?;
                terms.push(tape.relu(m)?);
            }
        }
        let total = tape.sum(&terms)?;
        new_nodes.push(mlp_forward(
            tape,
            params,
            &format!("{layer_prefix}.mtheta"),
            total,
            &config.mtheta_sizes(),
            Activation::Relu,
        )?);
    }

    // Relation and qualifier-atom updates.
    let mut new_preds = Vec::with_capacity(state.preds.len());
    for &p in &state.preds {
        let lin = tape.matvec(params, &format!("{layer_prefix}.w_r"), p)?;
        new_preds.push(tape.relu(lin)?);
    }
    let mut new_quals = Vec::with_capacity(state.quals.len());
    for pairs in &state.quals {
        let mut out = Vec::with_capacity(pairs.len());
        for &(qr, qe) in pairs {
            let r = tape.matvec(params, &format!("{layer_prefix}.w_qr"), qr)?;
            let e = tape.matvec(params, &format!("{layer_prefix}.w_qe"), qe)?;
            out.push((tape.relu(r)?, tape.relu(e)?));
        }
        new_quals.push(out);
    }

    Ok(LayerState {
        nodes: new_nodes,
        preds: new_preds,
        quals: new_quals,
    })
}

/// Gated multi-layer combination of one node's per-layer states
/// (layers 1..=L; the initialization layer is excluded).
pub fn combine_layers(
    tape: &mut Tape,
    params: &ParamStore,
    gate: GateKind,
    layer_states: &[ValueId],
) -> Result<ValueId> {
    let w = tape.param(params, "gate.w")?;
    let mut terms = Vec::with_capacity(layer_states.len());
    for &h in layer_states {
        let wh = tape.mul(w, h)?;
        let score = match gate {
            GateKind::Sigmoid => tape.sigmoid(wh)?,
            GateKind::Relu => tape.relu(wh)?,
        };
        terms.push(tape.mul(score, h)?);
    }
    tape.sum(&terms)
}

/// Full forward pass: returns the scalar predicted log-cardinality node.
pub fn forward_tape(
    tape: &mut Tape,
    params: &ParamStore,
    config: &ModelConfig,
    enc: &QueryEncoding,
    cvae: Option<&CvaeModel>,
) -> Result<ValueId> {
    config.validate()?;
    if enc.dim != config.dim {
        return Err(NeuralError::Shape(format!(
            "encoding dim {} vs model dim {}",
            enc.dim, config.dim
        )));
    }
    let mut state = LayerState::input(tape, enc)?;
    let mut per_layer_nodes: Vec<Vec<ValueId>> = Vec::with_capacity(config.layers);
    for k in 0..config.layers {
        state = message_passing_layer(tape, params, config, cvae, enc, &format!("layer{k}"), &state)?;
        per_layer_nodes.push(state.nodes.clone());
    }

    let mut finals = Vec::with_capacity(state.nodes.len());
    for &n in &enc.node_order {
        let states: Vec<ValueId> = per_layer_nodes.iter().map(|layer| layer[n]).collect();
        finals.push(combine_layers(tape, params, config.gate, &states)?);
    }
    let readout = tape.sum(&finals)?;
    mlp_forward(tape, params, "decoder", readout, &config.decoder_sizes(), Activation::Relu)
}

/// Forward pass as a plain value.
pub fn predict_log_cardinality(
    model: &HrqeModel,
    cvae: Option<&CvaeModel>,
    enc: &QueryEncoding,
) -> Result<f64> {
    let mut tape = Tape::new();
    let out = forward_tape(&mut tape, &model.params, &model.config, enc, cvae)?;
    Ok(tape.value(out)[0])
}

/// Cardinality estimate from a predicted natural-log value, floored at 1.
pub fn estimate_from_log(log_card: f64) -> u64 {
    if !log_card.is_finite() {
        return 1;
    }
    let est = log_card.exp().round();
    if est < 1.0 {
        1
    } else if est >= u64::MAX as f64 {
        u64::MAX
    } else {
        est as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hrce_core::query::FactPattern;
    use hrce_core::{EntityId, Hkg, RelationId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> Hkg {
        Hkg::parse("a,p,b\na,p,c\nb,q,c,t,x\na,p,b,t,x\n").unwrap()
    }

    fn ent(hkg: &Hkg, l: &str) -> Term<EntityId> {
        Term::Bound(hkg.vocab().entity(l).unwrap())
    }

    fn rel(hkg: &Hkg, l: &str) -> Term<RelationId> {
        Term::Bound(hkg.vocab().relation(l).unwrap())
    }

    fn model(dim: usize, layers: usize, lambda: f64, seed: u64) -> HrqeModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        init_model(ModelConfig::new(dim, layers, lambda), &mut rng).unwrap()
    }

    #[test]
    fn variable_ids_fill_dim_zero() {
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![
                FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("v1")),
                FactPattern::new(Term::var("v1"), rel(&hkg, "q"), Term::var("v2")),
            ],
        );
        let source = EmbeddingSource::fallback(6, 1);
        let enc = init_query_embeddings(&q, hkg.vocab(), &source).unwrap();
        let skel = Skeleton::of(&q);
        let v1 = skel.node_of(&Term::var("v1")).unwrap();
        let v2 = skel.node_of(&Term::var("v2")).unwrap();
        assert_eq!(enc.node_vecs[v1], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(enc.node_vecs[v2], vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn variable_qualifier_atom_fills_ones() {
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("v1"))
                .with_qualifiers(vec![(rel(&hkg, "t"), Term::var("w"))])],
        );
        let source = EmbeddingSource::fallback(4, 1);
        let enc = init_query_embeddings(&q, hkg.vocab(), &source).unwrap();
        // v1 gets id 1, w gets id 2.
        assert_eq!(enc.qual_vecs[0][0].1, vec![2.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn bound_atom_copies_table_row() {
        let hkg = toy();
        let table = crate::embed::EmbeddingTable::parse(
            "4\na 9 8 7 6\nb 1 1 1 1\nc 0 0 0 1\nx 2 2 2 2\np 1 0 1 0\nq 0 1 0 1\nt 5 5 5 5\n",
        )
        .unwrap();
        let source = EmbeddingSource::from_table(table);
        let q = Query::new(
            "q",
            vec![FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("o"))],
        );
        let enc = init_query_embeddings(&q, hkg.vocab(), &source).unwrap();
        let skel = Skeleton::of(&q);
        let a = skel.node_of(&ent(&hkg, "a")).unwrap();
        assert_eq!(enc.node_vecs[a], vec![9.0, 8.0, 7.0, 6.0]);
    }

    #[test]
    fn missing_table_row_is_an_error() {
        let hkg = toy();
        let table = crate::embed::EmbeddingTable::parse("4\na 9 8 7 6\n").unwrap();
        let source = EmbeddingSource::from_table(table);
        let q = Query::new(
            "q",
            vec![FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("o"))],
        );
        assert!(matches!(
            init_query_embeddings(&q, hkg.vocab(), &source),
            Err(NeuralError::MissingEmbedding(_))
        ));
    }

    #[test]
    fn empty_qualifier_aggregation_is_zero() {
        let m = model(4, 1, 0.0, 3);
        let mut tape = Tape::new();
        let agg = aggregate_qualifiers(&mut tape, &m.params, "layer0", &[], &[], 4).unwrap();
        assert_eq!(tape.value(agg), &[0.0; 4]);
    }

    #[test]
    fn identity_projection_aggregation_is_zeta() {
        let mut m = model(4, 1, 0.0, 3);
        let eye = crate::tensor::Tensor::matrix(
            4,
            4,
            vec![
                1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
            ],
        )
        .unwrap();
        *m.params.get_mut("layer0.w_qual").unwrap() = eye;
        let mut tape = Tape::new();
        let qr = tape.constant(vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let qe = tape.constant(vec![0.5, 0.25, -1.0, 2.0]).unwrap();
        let agg =
            aggregate_qualifiers(&mut tape, &m.params, "layer0", &[(qr, qe)], &[0], 4).unwrap();
        let expected = rotate_compose(&[0.0, 1.0, 1.0, 0.0], &[0.5, 0.25, -1.0, 2.0]).unwrap();
        assert_eq!(tape.value(agg), expected.as_slice());
    }

    #[test]
    fn blend_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cvae =
            crate::cvae::CvaeModel::init(crate::cvae::CvaeConfig::new(4, 2, 5), &mut rng).unwrap();
        let m = model(4, 1, 0.0, 3);
        let mut tape = Tape::new();
        let h = tape.constant(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = tape.constant(vec![0.1; 4]).unwrap();
        let p = tape.constant(vec![0.2; 4]).unwrap();
        let o = tape.constant(vec![0.3; 4]).unwrap();

        // lambda = 0: identical node, CVAE never consulted.
        let b0 = blend_qualifier(&mut tape, None, 0.0, h, s, p, o).unwrap();
        assert_eq!(b0, h);

        // lambda = 1: the completion alone.
        let b1 = blend_qualifier(&mut tape, Some(&cvae), 1.0, h, s, p, o).unwrap();
        let x: Vec<f64> = [vec![0.1; 4], vec![0.2; 4], vec![0.3; 4], vec![1.0, 2.0, 3.0, 4.0]]
            .concat();
        let direct = crate::cvae::complete_qualifiers_deterministic(&cvae, &x).unwrap();
        assert_eq!(tape.value(b1), direct.as_slice());

        // lambda = 0.5: elementwise mean of the two.
        let bh = blend_qualifier(&mut tape, Some(&cvae), 0.5, h, s, p, o).unwrap();
        let want: Vec<f64> = tape
            .value(h)
            .iter()
            .zip(&direct)
            .map(|(a, b)| 0.5 * a + 0.5 * b)
            .collect();
        for (got, want) in tape.value(bh).iter().zip(&want) {
            assert!((got - want).abs() < 1e-12);
        }
        let _ = m;
    }

    #[test]
    fn lambda_positive_without_cvae_fails() {
        let mut tape = Tape::new();
        let h = tape.constant(vec![0.0; 4]).unwrap();
        assert!(blend_qualifier(&mut tape, None, 0.5, h, h, h, h).is_err());
    }

    #[test]
    fn isolated_node_update_is_mlp_of_self() {
        let m = model(4, 1, 0.0, 5);
        let enc = QueryEncoding {
            dim: 4,
            node_vecs: vec![vec![0.4, -0.2, 0.9, 0.1]],
            pred_vecs: vec![],
            qual_vecs: vec![],
            edges: vec![],
            node_order: vec![0],
            pattern_order: vec![],
            qual_order: vec![],
        };
        let mut tape = Tape::new();
        let state = LayerState::input(&mut tape, &enc).unwrap();
        let next =
            message_passing_layer(&mut tape, &m.params, &m.config, None, &enc, "layer0", &state)
                .unwrap();
        let got = tape.value(next.nodes[0]).to_vec();

        let mut tape2 = Tape::new();
        let x = tape2.constant(vec![0.4, -0.2, 0.9, 0.1]).unwrap();
        let want = mlp_forward(
            &mut tape2,
            &m.params,
            "layer0.mtheta",
            x,
            &[4, 4, 4],
            Activation::Relu,
        )
        .unwrap();
        assert_eq!(got, tape2.value(want));
    }

    #[test]
    fn all_zero_parameters_propagate_zero() {
        let mut m = model(4, 2, 0.0, 6);
        let names: Vec<String> = m.params.names().map(str::to_string).collect();
        for name in names {
            m.params.get_mut(&name).unwrap().data_mut().fill(0.0);
        }
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("o"))],
        );
        let source = EmbeddingSource::fallback(4, 2);
        let enc = init_query_embeddings(&q, hkg.vocab(), &source).unwrap();
        let v = predict_log_cardinality(&m, None, &enc).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn combine_layers_examples() {
        let m = model(4, 1, 0.0, 7);
        // gate.w is zero-initialized; logistic gate at 0 is exactly 0.5.
        let mut tape = Tape::new();
        let h1 = tape.constant(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let h2 = tape.constant(vec![-1.0, 0.5, 0.0, 2.0]).unwrap();
        let combined = combine_layers(&mut tape, &m.params, GateKind::Sigmoid, &[h1, h2]).unwrap();
        assert_eq!(tape.value(combined), &[0.0, 1.25, 1.5, 3.0]);

        // Single layer: gate(w ⊙ h) ⊙ h.
        let single = combine_layers(&mut tape, &m.params, GateKind::Sigmoid, &[h1]).unwrap();
        assert_eq!(tape.value(single), &[0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn zero_decoder_outputs_bias() {
        let mut m = model(4, 1, 0.0, 8);
        for name in ["decoder.w0", "decoder.w1"] {
            m.params.get_mut(name).unwrap().data_mut().fill(0.0);
        }
        m.params.get_mut("decoder.b1").unwrap().data_mut()[0] = 2.3;
        let hkg = toy();
        let q = Query::new(
            "q",
            vec![FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("o"))],
        );
        let source = EmbeddingSource::fallback(4, 2);
        let enc = init_query_embeddings(&q, hkg.vocab(), &source).unwrap();
        let v = predict_log_cardinality(&m, None, &enc).unwrap();
        assert!((v - 2.3).abs() < 1e-12);
        assert_eq!(estimate_from_log(v), (2.3f64.exp().round()) as u64);
    }

    #[test]
    fn pattern_permutation_and_renaming_leave_output_unchanged() {
        let hkg = toy();
        let m = model(6, 2, 0.0, 9);
        let source = EmbeddingSource::fallback(6, 3);
        let q1 = Query::new(
            "q",
            vec![
                FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("x"))
                    .with_qualifiers(vec![(rel(&hkg, "t"), ent(&hkg, "x"))]),
                FactPattern::new(Term::var("x"), rel(&hkg, "q"), Term::var("y")),
                FactPattern::new(Term::var("y"), rel(&hkg, "p"), Term::var("z")),
            ],
        );
        let q2 = Query::new(
            "q",
            vec![
                FactPattern::new(Term::var("beta"), rel(&hkg, "p"), Term::var("gamma")),
                FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("alpha"))
                    .with_qualifiers(vec![(rel(&hkg, "t"), ent(&hkg, "x"))]),
                FactPattern::new(Term::var("alpha"), rel(&hkg, "q"), Term::var("beta")),
            ],
        );
        let e1 = init_query_embeddings(&q1, hkg.vocab(), &source).unwrap();
        let e2 = init_query_embeddings(&q2, hkg.vocab(), &source).unwrap();
        let v1 = predict_log_cardinality(&m, None, &e1).unwrap();
        let v2 = predict_log_cardinality(&m, None, &e2).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits());
    }

    #[test]
    fn lambda_zero_is_bit_identical_with_or_without_cvae() {
        let hkg = toy();
        let m = model(4, 2, 0.0, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cvae =
            crate::cvae::CvaeModel::init(crate::cvae::CvaeConfig::new(4, 2, 5), &mut rng).unwrap();
        let q = Query::new(
            "q",
            vec![FactPattern::new(ent(&hkg, "b"), rel(&hkg, "q"), Term::var("o"))
                .with_qualifiers(vec![(rel(&hkg, "t"), Term::var("v"))])],
        );
        let source = EmbeddingSource::fallback(4, 5);
        let enc = init_query_embeddings(&q, hkg.vocab(), &source).unwrap();
        let without = predict_log_cardinality(&m, None, &enc).unwrap();
        let with = predict_log_cardinality(&m, Some(&cvae), &enc).unwrap();
        assert_eq!(without.to_bits(), with.to_bits());
    }

    #[test]
    fn estimate_floors_at_one() {
        assert_eq!(estimate_from_log(-10.0), 1);
        assert_eq!(estimate_from_log(0.0), 1);
        assert_eq!(estimate_from_log(2.0), 7);
    }
}
