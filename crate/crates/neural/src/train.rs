//! Training loop, composite augmentation loss, and q-error evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hrce_core::query::{classify_pattern, Query};
use hrce_core::sampling::estimate_sampling;
use hrce_core::workload::{bounded_node_count, range_stratum, RANGE_LABELS};
use hrce_core::Hkg;

use crate::augment::{augment_add, augment_remove};
use crate::cvae::CvaeModel;
use crate::embed::EmbeddingSource;
use crate::error::{NeuralError, Result};
use crate::hrqe::{
    estimate_from_log, forward_tape, init_model, init_query_embeddings, predict_log_cardinality,
    HrqeModel, ModelConfig, QueryEncoding,
};
use crate::params::ParamStore;
use crate::tape::{Tape, ValueId};

/// Symmetric ratio error: `max(true/est, est/true) >= 1`.
pub fn q_error(true_card: f64, est_card: f64) -> Result<f64> {
    if true_card <= 0.0 || !true_card.is_finite() {
        return Err(NeuralError::Invalid(format!(
            "q-error undefined for true cardinality {true_card}"
        )));
    }
    if est_card <= 0.0 || !est_card.is_finite() {
        return Err(NeuralError::Invalid(format!(
            "q-error undefined for estimate {est_card}"
        )));
    }
    Ok((true_card / est_card).max(est_card / true_card))
}

/// One training item: the labeled query plus its precomputed tightened and
/// relaxed variants. Variants never need ground-truth labels; only the base
/// query's log-cardinality enters the hinges.
pub struct AugmentedBatch {
    pub target_ln: f64,
    pub query: QueryEncoding,
    pub tightened: Vec<QueryEncoding>,
    pub relaxed: Vec<QueryEncoding>,
}

/// Composite loss on predictions: squared error on the base query plus mean
/// hinge penalties pushing tightened variants below the target and relaxed
/// variants above it. Empty variant sets contribute nothing.
pub fn assemble_loss(
    tape: &mut Tape,
    pred_query: ValueId,
    target_ln: f64,
    tightened_preds: &[ValueId],
    relaxed_preds: &[ValueId],
) -> Result<ValueId> {
    let target = tape.scalar(target_ln)?;
    let diff = tape.sub(pred_query, target)?;
    let mut terms = vec![tape.mul(diff, diff)?];
    if !tightened_preds.is_empty() {
        let mut hinges = Vec::with_capacity(tightened_preds.len());
        for &p in tightened_preds {
            let over = tape.sub(p, target)?;
            hinges.push(tape.relu(over)?);
        }
        let total = tape.sum(&hinges)?;
        terms.push(tape.scale(total, 1.0 / tightened_preds.len() as f64)?);
    }
    if !relaxed_preds.is_empty() {
        let mut hinges = Vec::with_capacity(relaxed_preds.len());
        for &p in relaxed_preds {
            let under = tape.sub(target, p)?;
            hinges.push(tape.relu(under)?);
        }
        let total = tape.sum(&hinges)?;
        terms.push(tape.scale(total, 1.0 / relaxed_preds.len() as f64)?);
    }
    tape.sum(&terms)
}

/// Full training loss of one augmented batch on the tape.
pub fn training_loss_tape(
    tape: &mut Tape,
    params: &ParamStore,
    config: &ModelConfig,
    cvae: Option<&CvaeModel>,
    batch: &AugmentedBatch,
) -> Result<ValueId> {
    let pred = forward_tape(tape, params, config, &batch.query, cvae)?;
    let tightened = batch
        .tightened
        .iter()
        .map(|enc| forward_tape(tape, params, config, enc, cvae))
        .collect::<Result<Vec<_>>>()?;
    let relaxed = batch
        .relaxed
        .iter()
        .map(|enc| forward_tape(tape, params, config, enc, cvae))
        .collect::<Result<Vec<_>>>()?;
    assemble_loss(tape, pred, batch.target_ln, &tightened, &relaxed)
}

/// Training loss value of one batch.
pub fn training_loss(
    model: &HrqeModel,
    cvae: Option<&CvaeModel>,
    batch: &AugmentedBatch,
) -> Result<f64> {
    let mut tape = Tape::new();
    let loss = training_loss_tape(&mut tape, &model.params, &model.config, cvae, batch)?;
    Ok(tape.value(loss)[0])
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Train : test split ratio applied after a seeded shuffle.
    pub split: (usize, usize),
    /// Tightened / relaxed variants per query, precomputed once.
    pub add_variants: usize,
    pub rm_variants: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            split: (6, 4),
            add_variants: 2,
            rm_variants: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub test_mean_q_error: Vec<f64>,
    pub optimizer_steps: usize,
}

pub struct TrainOutcome {
    pub model: HrqeModel,
    pub history: TrainHistory,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Split a labeled queryset by seeded shuffle, precompute augmented batches,
/// and Adam-train the estimator. The same seed reproduces the trajectory
/// bit for bit.
pub fn train(
    hkg: &Hkg,
    queryset: &[Query],
    model_config: ModelConfig,
    cvae: Option<&CvaeModel>,
    source: &EmbeddingSource,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if queryset.is_empty() {
        return Err(NeuralError::Invalid("empty queryset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = init_model(model_config, &mut rng)?;

    let mut order: Vec<usize> = (0..queryset.len()).collect();
    shuffle(&mut order, &mut rng);
    let (a, b) = config.split;
    let n_train = queryset.len() * a / (a + b).max(1);
    let train_indices: Vec<usize> = order[..n_train].to_vec();
    let test_indices: Vec<usize> = order[n_train..].to_vec();

    let mut batches = Vec::with_capacity(train_indices.len());
    for &qi in &train_indices {
        batches.push(prepare_batch(hkg, &queryset[qi], source, config, &mut rng)?);
    }
    let mut test_items = Vec::with_capacity(test_indices.len());
    for &qi in &test_indices {
        let query = &queryset[qi];
        let card = query
            .cardinality
            .ok_or_else(|| NeuralError::Invalid(format!("query {} is unlabeled", query.id)))?;
        test_items.push((
            card,
            init_query_embeddings(query, hkg.vocab(), source)?,
        ));
    }

    let mut history = TrainHistory {
        train_loss: Vec::with_capacity(config.epochs),
        test_mean_q_error: Vec::with_capacity(config.epochs),
        optimizer_steps: 0,
    };
    let mut batch_order: Vec<usize> = (0..batches.len()).collect();
    for _ in 0..config.epochs {
        shuffle(&mut batch_order, &mut rng);
        let mut epoch_loss = 0.0;
        for chunk in batch_order.chunks(config.batch_size.max(1)) {
            model.params.zero_grads();
            for &bi in chunk {
                let mut tape = Tape::new();
                let loss = training_loss_tape(
                    &mut tape,
                    &model.params,
                    &model.config,
                    cvae,
                    &batches[bi],
                )?;
                epoch_loss += tape.value(loss)[0];
                tape.backward_scaled(loss, 1.0 / chunk.len() as f64, &mut model.params)?;
            }
            model
                .params
                .adam_step(config.learning_rate, 0.9, 0.999, 1e-8);
            history.optimizer_steps += 1;
        }
        history
            .train_loss
            .push(epoch_loss / batches.len().max(1) as f64);

        let mut q_sum = 0.0;
        for (card, enc) in &test_items {
            let pred = predict_log_cardinality(&model, cvae, enc)?;
            let est = estimate_from_log(pred);
            q_sum += q_error((*card).max(1) as f64, est as f64)?;
        }
        history
            .test_mean_q_error
            .push(q_sum / test_items.len().max(1) as f64);
    }

    Ok(TrainOutcome {
        model,
        history,
        train_indices,
        test_indices,
    })
}

fn prepare_batch<R: Rng>(
    hkg: &Hkg,
    query: &Query,
    source: &EmbeddingSource,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<AugmentedBatch> {
    let card = query
        .cardinality
        .ok_or_else(|| NeuralError::Invalid(format!("query {} is unlabeled", query.id)))?;
    let target_ln = (card.max(1) as f64).ln();
    let tightened = augment_add(query, hkg, rng, config.add_variants)
        .iter()
        .map(|v| init_query_embeddings(v, hkg.vocab(), source))
        .collect::<Result<Vec<_>>>()?;
    let relaxed = augment_remove(query, rng, config.rm_variants)
        .iter()
        .map(|v| init_query_embeddings(v, hkg.vocab(), source))
        .collect::<Result<Vec<_>>>()?;
    Ok(AugmentedBatch {
        target_ln,
        query: init_query_embeddings(query, hkg.vocab(), source)?,
        tightened,
        relaxed,
    })
}

fn shuffle<R: Rng>(items: &mut [usize], rng: &mut R) {
    for i in (1..items.len()).rev() {
        items.swap(i, rng.random_range(0..=i));
    }
}

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

/// A cardinality estimator under evaluation.
pub trait Estimator {
    fn name(&self) -> &str;
    fn estimate(&mut self, hkg: &Hkg, query: &Query) -> Result<f64>;
}

pub struct HrqeEstimator<'a> {
    pub model: &'a HrqeModel,
    pub cvae: Option<&'a CvaeModel>,
    pub source: &'a EmbeddingSource,
}

impl Estimator for HrqeEstimator<'_> {
    fn name(&self) -> &str {
        "hrqe"
    }

    fn estimate(&mut self, hkg: &Hkg, query: &Query) -> Result<f64> {
        let enc = init_query_embeddings(query, hkg.vocab(), self.source)?;
        let pred = predict_log_cardinality(self.model, self.cvae, &enc)?;
        Ok(estimate_from_log(pred) as f64)
    }
}

pub struct SamplingEstimator {
    pub samples: usize,
    pub seed: u64,
}

impl Estimator for SamplingEstimator {
    fn name(&self) -> &str {
        "sampling"
    }

    fn estimate(&mut self, hkg: &Hkg, query: &Query) -> Result<f64> {
        let mut h: u64 = 0xcbf29ce484222325;
        for byte in query.id.bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ h);
        Ok(estimate_sampling(hkg, query, self.samples, &mut rng)?)
    }
}

/// Predicts the same value for every query.
pub struct ConstantEstimator(pub f64);

impl Estimator for ConstantEstimator {
    fn name(&self) -> &str {
        "constant"
    }

    fn estimate(&mut self, _hkg: &Hkg, query: &Query) -> Result<f64> {
        let _ = query;
        Ok(self.0)
    }
}

/// Replays the stored label; useful as a perfect-estimator control.
pub struct OracleEstimator;

impl Estimator for OracleEstimator {
    fn name(&self) -> &str {
        "oracle"
    }

    fn estimate(&mut self, _hkg: &Hkg, query: &Query) -> Result<f64> {
        query
            .cardinality
            .map(|c| c.max(1) as f64)
            .ok_or_else(|| NeuralError::Invalid(format!("query {} is unlabeled", query.id)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupCriterion {
    Pattern,
    Size,
    Range,
    Bounded,
    Incomplete,
}

impl GroupCriterion {
    pub const ALL: [GroupCriterion; 5] = [
        GroupCriterion::Pattern,
        GroupCriterion::Size,
        GroupCriterion::Range,
        GroupCriterion::Bounded,
        GroupCriterion::Incomplete,
    ];

    pub fn parse(text: &str) -> Result<GroupCriterion> {
        match text.trim() {
            "pattern" => Ok(GroupCriterion::Pattern),
            "size" => Ok(GroupCriterion::Size),
            "range" => Ok(GroupCriterion::Range),
            "bounded" => Ok(GroupCriterion::Bounded),
            "incomplete" => Ok(GroupCriterion::Incomplete),
            other => Err(NeuralError::Invalid(format!("unknown group criterion {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            GroupCriterion::Pattern => "pattern",
            GroupCriterion::Size => "size",
            GroupCriterion::Range => "range",
            GroupCriterion::Bounded => "bounded",
            GroupCriterion::Incomplete => "incomplete",
        }
    }
}

fn size_bucket(n: usize) -> &'static str {
    match n {
        0..=3 => "<=3",
        4..=6 => "4-6",
        7..=9 => "7-9",
        10..=12 => "10-12",
        _ => ">12",
    }
}

/// A query counts as qualifier-incomplete when some pattern with a bound
/// predicate carries no qualifiers although that predicate co-occurs with
/// qualifiers in the data.
pub fn has_incomplete_qualifiers(hkg: &Hkg, query: &Query) -> bool {
    query.patterns.iter().any(|p| {
        p.qualifiers.is_empty()
            && p.predicate
                .bound()
                .is_some_and(|pred| !hkg.predicate_qualifiers(pred).is_empty())
    })
}

fn group_label(hkg: &Hkg, query: &Query, criterion: GroupCriterion) -> Result<String> {
    Ok(match criterion {
        GroupCriterion::Pattern => classify_pattern(query)?.to_string(),
        GroupCriterion::Size => size_bucket(query.patterns.len()).to_string(),
        GroupCriterion::Range => {
            RANGE_LABELS[range_stratum(query.cardinality.unwrap_or(0))].to_string()
        }
        GroupCriterion::Bounded => {
            if bounded_node_count(query) == 0 {
                "0".into()
            } else {
                ">0".into()
            }
        }
        GroupCriterion::Incomplete => {
            if has_incomplete_qualifiers(hkg, query) {
                "incomplete".into()
            } else {
                "exact".into()
            }
        }
    })
}

#[derive(Debug, Clone)]
pub struct GroupRow {
    pub group: String,
    pub n: usize,
    pub mean_q_error: f64,
    pub p50: f64,
    pub p95: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub estimator: String,
    pub overall: GroupRow,
    pub rows: Vec<GroupRow>,
    pub per_query: Vec<(String, f64)>,
}

fn summarize(group: &str, mut q_errors: Vec<f64>) -> GroupRow {
    q_errors.sort_by(|a, b| a.partial_cmp(b).expect("finite q-errors"));
    let n = q_errors.len();
    let pct = |q: f64| -> f64 {
        if n == 0 {
            return f64::NAN;
        }
        let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
        q_errors[rank - 1]
    };
    GroupRow {
        group: group.to_string(),
        n,
        mean_q_error: q_errors.iter().sum::<f64>() / n.max(1) as f64,
        p50: pct(0.5),
        p95: pct(0.95),
    }
}

/// Run the estimator over a labeled queryset and report q-errors overall and
/// per group. Estimates are floored at 1 before the q-error.
pub fn evaluate(
    hkg: &Hkg,
    queryset: &[Query],
    estimator: &mut dyn Estimator,
    criteria: &[GroupCriterion],
) -> Result<EvalReport> {
    use std::collections::BTreeMap;
    let mut per_query = Vec::with_capacity(queryset.len());
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::with_capacity(queryset.len());
    for query in queryset {
        let card = query
            .cardinality
            .ok_or_else(|| NeuralError::Invalid(format!("query {} is unlabeled", query.id)))?;
        let est = estimator.estimate(hkg, query)?.max(1.0);
        let q = q_error(card.max(1) as f64, est)?;
        per_query.push((query.id.clone(), q));
        all.push(q);
        for &criterion in criteria {
            let label = group_label(hkg, query, criterion)?;
            groups
                .entry(format!("{}/{}", criterion.as_str(), label))
                .or_default()
                .push(q);
        }
    }
    Ok(EvalReport {
        estimator: estimator.name().to_string(),
        overall: summarize("all", all),
        rows: groups
            .into_iter()
            .map(|(label, qs)| summarize(&label, qs))
            .collect(),
        per_query,
    })
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,n,mean_q_error,p50,p95\n");
        let mut write_row = |row: &GroupRow| {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                row.group, row.n, row.mean_q_error, row.p50, row.p95
            ));
        };
        write_row(&self.overall);
        for row in &self.rows {
            write_row(row);
        }
        out
    }
}
