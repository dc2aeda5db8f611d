//! Straight-line reference evaluation of the displayed model equations with
//! plain vector arithmetic, independent of the tape, compared against the
//! production forward pass.

use hrce_core::query::{FactPattern, Query, Term};
use hrce_core::{EntityId, Hkg, RelationId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hrce_neural::cvae::{CvaeConfig, CvaeModel};
use hrce_neural::embed::EmbeddingSource;
use hrce_neural::hrqe::{
    init_model, init_query_embeddings, predict_log_cardinality, GateKind, ModelConfig,
    QueryEncoding,
};
use hrce_neural::{ParamStore, Tensor};

// --- minimal standalone linear algebra -------------------------------------

fn matvec(m: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (m.rows(), m.cols());
    let d = m.data();
    (0..rows)
        .map(|r| (0..cols).map(|c| d[r * cols + c] * x[c]).sum())
        .collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn relu(a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| x.max(0.0)).collect()
}

fn sigmoid(a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect()
}

fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn rotate(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for j in 0..a.len() / 2 {
        out[2 * j] = a[2 * j] * b[2 * j] - a[2 * j + 1] * b[2 * j + 1];
        out[2 * j + 1] = a[2 * j] * b[2 * j + 1] + a[2 * j + 1] * b[2 * j];
    }
    out
}

fn mlp2(store: &ParamStore, prefix: &str, x: &[f64]) -> Vec<f64> {
    let h = relu(&add(
        &matvec(store.get(&format!("{prefix}.w0")).unwrap(), x),
        store.get(&format!("{prefix}.b0")).unwrap().data(),
    ));
    add(
        &matvec(store.get(&format!("{prefix}.w1")).unwrap(), &h),
        store.get(&format!("{prefix}.b1")).unwrap().data(),
    )
}

fn concat3(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    [a, b, c].concat()
}

// --- reference model forward ------------------------------------------------

fn reference_forward(
    store: &ParamStore,
    config: &ModelConfig,
    enc: &QueryEncoding,
    cvae: Option<&CvaeModel>,
) -> f64 {
    let dim = config.dim;
    let mut nodes = enc.node_vecs.clone();
    let mut preds = enc.pred_vecs.clone();
    let mut quals = enc.qual_vecs.clone();
    let mut per_layer: Vec<Vec<Vec<f64>>> = Vec::new();

    for k in 0..config.layers {
        let p = |n: &str| format!("layer{k}.{n}");
        // Qualifier summaries and gamma per pattern.
        let mut gammas = Vec::new();
        for (pi, pairs) in quals.iter().enumerate() {
            let mut zsum = vec![0.0; dim];
            for &qi in &enc.qual_order[pi] {
                let (qr, qe) = &pairs[qi];
                zsum = add(&zsum, &rotate(qr, qe));
            }
            let h_tilde = if pairs.is_empty() {
                vec![0.0; dim]
            } else {
                matvec(store.get(&p("w_qual")).unwrap(), &zsum)
            };
            let h_qf = if config.lambda == 0.0 {
                h_tilde
            } else {
                let model = cvae.expect("lambda > 0 needs a completer");
                let (s, o) = enc.edges[pi];
                let x = [
                    nodes[s].as_slice(),
                    preds[pi].as_slice(),
                    nodes[o].as_slice(),
                    h_tilde.as_slice(),
                ]
                .concat();
                let xz = [x.as_slice(), &vec![0.0; model.config.latent]].concat();
                let completed = mlp2(&model.params, "decode", &xz);
                h_tilde
                    .iter()
                    .zip(&completed)
                    .map(|(t, c)| (1.0 - config.lambda) * t + config.lambda * c)
                    .collect()
            };
            gammas.push(add(&preds[pi], &h_qf));
        }

        // Node updates.
        let w_e = store.get(&p("w_e")).unwrap();
        let mut new_nodes = Vec::new();
        for n in 0..nodes.len() {
            let mut total = nodes[n].clone();
            for &pi in &enc.pattern_order {
                let (s, o) = enc.edges[pi];
                if o == n {
                    let x = concat3(&nodes[n], &gammas[pi], &nodes[s]);
                    total = add(&total, &relu(&matvec(w_e, &x)));
                }
                if s == n {
                    let x = concat3(&nodes[o], &gammas[pi], &nodes[n]);
                    total = add(&total, &relu(&matvec(w_e, &x)));
                }
            }
            new_nodes.push(mlp2(store, &p("mtheta"), &total));
        }
        nodes = new_nodes;
        preds = preds
            .iter()
            .map(|v| relu(&matvec(store.get(&p("w_r")).unwrap(), v)))
            .collect();
        quals = quals
            .iter()
            .map(|pairs| {
                pairs
                    .iter()
                    .map(|(qr, qe)| {
                        (
                            relu(&matvec(store.get(&p("w_qr")).unwrap(), qr)),
                            relu(&matvec(store.get(&p("w_qe")).unwrap(), qe)),
                        )
                    })
                    .collect()
            })
            .collect();
        per_layer.push(nodes.clone());
    }

    // Gated combination, sum readout, decode.
    let w = store.get("gate.w").unwrap().data();
    let mut readout = vec![0.0; dim];
    for &n in &enc.node_order {
        let mut combined = vec![0.0; dim];
        for layer in &per_layer {
            let h = &layer[n];
            let score = match config.gate {
                GateKind::Sigmoid => sigmoid(&hadamard(w, h)),
                GateKind::Relu => relu(&hadamard(w, h)),
            };
            combined = add(&combined, &hadamard(&score, h));
        }
        readout = add(&readout, &combined);
    }
    mlp2(store, "decoder", &readout)[0]
}

fn toy() -> Hkg {
    Hkg::parse("a,p,b\na,p,c\nb,q,c,t,x\na,p,b,t,x\n").unwrap()
}

fn ent(hkg: &Hkg, l: &str) -> Term<EntityId> {
    Term::Bound(hkg.vocab().entity(l).unwrap())
}

fn rel(hkg: &Hkg, l: &str) -> Term<RelationId> {
    Term::Bound(hkg.vocab().relation(l).unwrap())
}

fn assert_close(a: f64, b: f64) {
    let rel_err = (a - b).abs() / a.abs().max(b.abs()).max(1e-12);
    assert!(rel_err < 1e-9, "reference {b} vs forward {a} (rel {rel_err})");
}

#[test]
fn two_edge_chain_matches_reference() {
    let hkg = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let model = init_model(ModelConfig::new(6, 2, 0.0), &mut rng).unwrap();
    let q = Query::new(
        "q",
        vec![
            FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("x"))
                .with_qualifiers(vec![(rel(&hkg, "t"), ent(&hkg, "x"))]),
            FactPattern::new(Term::var("x"), rel(&hkg, "q"), Term::var("y")),
        ],
    );
    let source = EmbeddingSource::fallback(6, 17);
    let enc = init_query_embeddings(&q, hkg.vocab(), &source).unwrap();
    let forward = predict_log_cardinality(&model, None, &enc).unwrap();
    let reference = reference_forward(&model.params, &model.config, &enc, None);
    assert_close(forward, reference);
}

#[test]
fn three_edge_query_with_cvae_blend_matches_reference() {
    let hkg = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let model = init_model(ModelConfig::new(4, 3, 0.5), &mut rng).unwrap();
    let cvae = CvaeModel::init(CvaeConfig::new(4, 2, 5), &mut rng).unwrap();
    let q = Query::new(
        "q",
        vec![
            FactPattern::new(ent(&hkg, "a"), rel(&hkg, "p"), Term::var("x")),
            FactPattern::new(Term::var("x"), rel(&hkg, "q"), Term::var("y"))
                .with_qualifiers(vec![(rel(&hkg, "t"), Term::var("v"))]),
            FactPattern::new(Term::var("y"), rel(&hkg, "p"), ent(&hkg, "c")),
        ],
    );
    let source = EmbeddingSource::fallback(4, 19);
    let enc = init_query_embeddings(&q, hkg.vocab(), &source).unwrap();
    let forward = predict_log_cardinality(&model, Some(&cvae), &enc).unwrap();
    let reference = reference_forward(&model.params, &model.config, &enc, Some(&cvae));
    assert_close(forward, reference);
}

#[test]
fn petal_query_matches_reference() {
    let hkg = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = init_model(ModelConfig::new(4, 2, 0.0), &mut rng).unwrap();
    let q = Query::new(
        "q",
        vec![
            FactPattern::new(Term::var("u"), rel(&hkg, "p"), Term::var("v")),
            FactPattern::new(Term::var("v"), rel(&hkg, "q"), Term::var("u")),
        ],
    );
    let source = EmbeddingSource::fallback(4, 23);
    let enc = init_query_embeddings(&q, hkg.vocab(), &source).unwrap();
    let forward = predict_log_cardinality(&model, None, &enc).unwrap();
    let reference = reference_forward(&model.params, &model.config, &enc, None);
    assert_close(forward, reference);
}
