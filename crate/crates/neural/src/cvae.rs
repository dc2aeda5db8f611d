//! Conditional VAE qualifier completer.
//!
//! Trained on fact contexts `x = h_s || h_p || h_o || h_kept-qualifiers` to
//! predict the aggregated embedding `y` of the qualifiers missing from the
//! context. The recognition network maps `(x, y)` to a diagonal Gaussian
//! `(mu, log sigma^2)`; the decoder maps `(x, z)` back to `y`. Loss is the
//! negative ELBO against a standard-normal prior: closed-form KL plus a
//! squared-error reconstruction with one Monte-Carlo sample. Inference
//! samples `z ~ N(0, I)`, or pins `z = 0` in deterministic mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use hrce_core::Hkg;

use crate::embed::EmbeddingSource;
use crate::error::{NeuralError, Result};
use crate::mlp::{init_mlp, mlp_forward, mlp_forward_frozen, Activation};
use crate::params::ParamStore;
use crate::tape::{rotate_mul_vec, Tape, ValueId};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CvaeConfig {
    /// Embedding dimension d (even; rotate pairs dimensions).
    pub dim: usize,
    /// Latent dimension d_z.
    pub latent: usize,
    /// Hidden width of both MLPs.
    pub hidden: usize,
    /// Append the GNN layer index to the condition vector. Off by default;
    /// the completer is trained once on layer-0 embeddings and frozen.
    pub layer_aware: bool,
}

impl CvaeConfig {
    pub fn new(dim: usize, latent: usize, hidden: usize) -> CvaeConfig {
        CvaeConfig {
            dim,
            latent,
            hidden,
            layer_aware: false,
        }
    }

    pub fn x_dim(&self) -> usize {
        4 * self.dim + usize::from(self.layer_aware)
    }

    fn recognition_sizes(&self) -> Vec<usize> {
        vec![self.x_dim() + self.dim, self.hidden, 2 * self.latent]
    }

    fn decoder_sizes(&self) -> Vec<usize> {
        vec![self.x_dim() + self.latent, self.hidden, self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim % 2 != 0 {
            return Err(NeuralError::Invalid(format!(
                "embedding dim must be even and positive, got {}",
                self.dim
            )));
        }
        if self.latent == 0 || self.hidden == 0 {
            return Err(NeuralError::Invalid("latent/hidden must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CvaeModel {
    pub config: CvaeConfig,
    pub params: ParamStore,
}

impl CvaeModel {
    pub fn init<R: Rng>(config: CvaeConfig, rng: &mut R) -> Result<CvaeModel> {
        config.validate()?;
        let mut params = ParamStore::new();
        init_mlp(&mut params, "recog", &config.recognition_sizes(), rng)?;
        init_mlp(&mut params, "decode", &config.decoder_sizes(), rng)?;
        Ok(CvaeModel { config, params })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let blob = serde_json::json!({
            "config": self.config,
            "params": serde_json::from_str::<serde_json::Value>(&self.params.to_checkpoint_json())
                .expect("checkpoint json"),
        });
        std::fs::write(path, blob.to_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<CvaeModel> {
        let text = std::fs::read_to_string(path)?;
        let blob: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let config: CvaeConfig = serde_json::from_value(blob["config"].clone())
            .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let params = ParamStore::from_checkpoint_json(&blob["params"].to_string())?;
        Ok(CvaeModel { config, params })
    }
}

/// One supervised completion instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairScheme {
    /// Keep a random nonempty proper subset of a fact's qualifiers; predict
    /// the aggregate of the complement.
    Split,
    /// Zero one main-triple block and the qualifier block; predict the
    /// aggregate of all qualifiers.
    Mask,
    Both,
}

/// Aggregate qualifier pairs with the identity projection: the sum of
/// rotate compositions.
fn aggregate_identity(
    hkg: &Hkg,
    source: &EmbeddingSource,
    quals: &[(hrce_core::RelationId, hrce_core::EntityId)],
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; source.dim];
    for &(qr, qe) in quals {
        let hr = source.relation_row(hkg.vocab(), qr)?;
        let he = source.entity_row(hkg.vocab(), qe)?;
        let z = rotate_mul_vec(&hr, &he)?;
        for (a, v) in acc.iter_mut().zip(&z) {
            *a += v;
        }
    }
    Ok(acc)
}

/// Build training pairs from the store's qualified facts using layer-0
/// embeddings. The split scheme skips facts with fewer than two qualifiers;
/// the mask scheme emits one pair per qualified fact with one main-triple
/// block zeroed.
pub fn build_training_pairs<R: Rng>(
    hkg: &Hkg,
    source: &EmbeddingSource,
    scheme: PairScheme,
    rng: &mut R,
) -> Result<Vec<CompletionPair>> {
    let dim = source.dim;
    let mut pairs = Vec::new();
    let want_split = matches!(scheme, PairScheme::Split | PairScheme::Both);
    let want_mask = matches!(scheme, PairScheme::Mask | PairScheme::Both);
    for fact in hkg.facts() {
        if fact.qualifiers.is_empty() {
            continue;
        }
        let h_s = source.entity_row(hkg.vocab(), fact.subject)?;
        let h_p = source.relation_row(hkg.vocab(), fact.predicate)?;
        let h_o = source.entity_row(hkg.vocab(), fact.object)?;
        if want_split && fact.qualifiers.len() >= 2 {
            let n = fact.qualifiers.len();
            let keep = rng.random_range(1..n);
            let mut idxs: Vec<usize> = (0..n).collect();
            // Seeded partial shuffle picks the kept subset.
            for i in 0..keep {
                let j = rng.random_range(i..n);
                idxs.swap(i, j);
            }
            let kept: Vec<_> = idxs[..keep].iter().map(|&i| fact.qualifiers[i]).collect();
            let missing: Vec<_> = idxs[keep..].iter().map(|&i| fact.qualifiers[i]).collect();
            let mut x = Vec::with_capacity(4 * dim);
            x.extend_from_slice(&h_s);
            x.extend_from_slice(&h_p);
            x.extend_from_slice(&h_o);
            x.extend_from_slice(&aggregate_identity(hkg, source, &kept)?);
            let y = aggregate_identity(hkg, source, &missing)?;
            pairs.push(CompletionPair { x, y });
        }
        if want_mask {
            let masked = rng.random_range(0..3u32);
            let block = |idx: u32, row: &[f64]| -> Vec<f64> {
                if masked == idx {
                    vec![0.0; dim]
                } else {
                    row.to_vec()
                }
            };
            let mut x = Vec::with_capacity(4 * dim);
            x.extend(block(0, &h_s));
            x.extend(block(1, &h_p));
            x.extend(block(2, &h_o));
            x.extend(std::iter::repeat_n(0.0, dim));
            let y = aggregate_identity(hkg, source, &fact.qualifiers)?;
            pairs.push(CompletionPair { x, y });
        }
    }
    if want_split && pairs.is_empty() && !want_mask {
        return Err(NeuralError::Invalid(
            "split scheme needs at least one fact with two or more qualifiers".into(),
        ));
    }
    Ok(pairs)
}

/// Closed-form KL of a diagonal Gaussian against the standard normal:
/// `0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1)`.
pub fn kl_standard_normal(tape: &mut Tape, mu: ValueId, logvar: ValueId) -> Result<ValueId> {
    let mu_sq = tape.mul(mu, mu)?;
    let var = tape.exp(logvar)?;
    let sum = tape.add(mu_sq, var)?;
    let sum = tape.sub(sum, logvar)?;
    let sum = tape.add_const(sum, -1.0)?;
    let total = tape.reduce_sum(sum)?;
    tape.scale(total, 0.5)
}

/// Negative ELBO of one pair on the tape: KL + squared reconstruction
/// error, with the reparameterized latent `z = mu + sigma * eps`.
pub fn cvae_loss_tape(
    tape: &mut Tape,
    params: &ParamStore,
    config: &CvaeConfig,
    pair: &CompletionPair,
    eps: &[f64],
) -> Result<ValueId> {
    if pair.x.len() != config.x_dim() || pair.y.len() != config.dim {
        return Err(NeuralError::Shape(format!(
            "pair dims ({}, {}) do not match config ({}, {})",
            pair.x.len(),
            pair.y.len(),
            config.x_dim(),
            config.dim
        )));
    }
    let x = tape.constant(pair.x.clone())?;
    let y = tape.constant(pair.y.clone())?;
    let xy = tape.concat(&[x, y])?;
    let stats = mlp_forward(tape, params, "recog", xy, &config.recognition_sizes(), Activation::Relu)?;
    let mu = tape.slice(stats, 0, config.latent)?;
    let logvar = tape.slice(stats, config.latent, config.latent)?;
    let kl = kl_standard_normal(tape, mu, logvar)?;

    let half_logvar = tape.scale(logvar, 0.5)?;
    let sigma = tape.exp(half_logvar)?;
    let eps_node = tape.constant(eps.to_vec())?;
    let noise = tape.mul(sigma, eps_node)?;
    let z = tape.add(mu, noise)?;
    let xz = tape.concat(&[x, z])?;
    let recon = mlp_forward(tape, params, "decode", xz, &config.decoder_sizes(), Activation::Relu)?;
    let diff = tape.sub(recon, y)?;
    let sq = tape.mul(diff, diff)?;
    let recon_err = tape.reduce_sum(sq)?;
    tape.add(kl, recon_err)
}

/// Negative ELBO value with one sampled latent.
pub fn cvae_loss<R: Rng>(model: &CvaeModel, pair: &CompletionPair, rng: &mut R) -> Result<f64> {
    let eps: Vec<f64> = (0..model.config.latent)
        .map(|_| crate::params::normal(rng))
        .collect();
    let mut tape = Tape::new();
    let loss = cvae_loss_tape(&mut tape, &model.params, &model.config, pair, &eps)?;
    Ok(tape.value(loss)[0])
}

/// KL value of one pair (diagnostic; nonnegative by construction).
pub fn cvae_kl(model: &CvaeModel, pair: &CompletionPair) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(pair.x.clone())?;
    let y = tape.constant(pair.y.clone())?;
    let xy = tape.concat(&[x, y])?;
    let stats = mlp_forward(
        &mut tape,
        &model.params,
        "recog",
        xy,
        &model.config.recognition_sizes(),
        Activation::Relu,
    )?;
    let mu = tape.slice(stats, 0, model.config.latent)?;
    let logvar = tape.slice(stats, model.config.latent, model.config.latent)?;
    let kl = kl_standard_normal(&mut tape, mu, logvar)?;
    Ok(tape.value(kl)[0])
}

#[derive(Debug, Clone)]
pub struct CvaeTrainHistory {
    /// Mean loss over all pairs before any update.
    pub initial_loss: f64,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Smallest KL term observed across all steps.
    pub min_kl: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct CvaeTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for CvaeTrainOptions {
    fn default() -> Self {
        CvaeTrainOptions {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

/// Adam-train the completer on the given pairs; zero epochs leave the
/// parameters untouched.
pub fn train_cvae<R: Rng>(
    model: &mut CvaeModel,
    pairs: &[CompletionPair],
    options: &CvaeTrainOptions,
    rng: &mut R,
) -> Result<CvaeTrainHistory> {
    if pairs.is_empty() {
        return Err(NeuralError::Invalid("no training pairs".into()));
    }
    let mut eval_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
    let initial_loss = pairs
        .iter()
        .map(|p| cvae_loss(model, p, &mut eval_rng))
        .sum::<Result<f64>>()?
        / pairs.len() as f64;

    let mut history = CvaeTrainHistory {
        initial_loss,
        epoch_losses: Vec::with_capacity(options.epochs),
        min_kl: f64::INFINITY,
    };
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for _ in 0..options.epochs {
        // Seeded shuffle.
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(options.batch_size.max(1)) {
            model.params.zero_grads();
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let pair = &pairs[idx];
                let eps: Vec<f64> = (0..model.config.latent)
                    .map(|_| crate::params::normal(rng))
                    .collect();
                let mut tape = Tape::new();
                let loss =
                    cvae_loss_tape(&mut tape, &model.params, &model.config, pair, &eps)?;
                batch_loss += tape.value(loss)[0];
                history.min_kl = history.min_kl.min(cvae_kl(model, pair)?);
                tape.backward_scaled(loss, 1.0 / chunk.len() as f64, &mut model.params)?;
            }
            model
                .params
                .adam_step(options.learning_rate, 0.9, 0.999, 1e-8);
            epoch_loss += batch_loss / chunk.len() as f64;
        }
        history
            .epoch_losses
            .push(epoch_loss / order.len().div_ceil(options.batch_size.max(1)) as f64);
    }
    Ok(history)
}

/// Decoder output for a context vector with a sampled latent.
pub fn complete_qualifiers<R: Rng>(
    model: &CvaeModel,
    x: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let z: Vec<f64> = (0..model.config.latent)
        .map(|_| crate::params::normal(rng))
        .collect();
    decode_with_latent(model, x, &z)
}

/// Deterministic completion: the decoder evaluated at `z = 0`. A pure
/// function of the context vector.
pub fn complete_qualifiers_deterministic(model: &CvaeModel, x: &[f64]) -> Result<Vec<f64>> {
    decode_with_latent(model, x, &vec![0.0; model.config.latent])
}

fn decode_with_latent(model: &CvaeModel, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let x_node = tape.constant(x.to_vec())?;
    let z_node = tape.constant(z.to_vec())?;
    let xz = tape.concat(&[x_node, z_node])?;
    let out = mlp_forward(
        &mut tape,
        &model.params,
        "decode",
        xz,
        &model.config.decoder_sizes(),
        Activation::Relu,
    )?;
    Ok(tape.value(out).to_vec())
}

/// Tape version used inside the GNN forward pass: frozen decoder weights,
/// `z = 0`, gradients flow through to the context only.
pub fn complete_qualifiers_tape(
    tape: &mut Tape,
    model: &CvaeModel,
    x: ValueId,
) -> Result<ValueId> {
    let z = tape.zeros(model.config.latent)?;
    let xz = tape.concat(&[x, z])?;
    mlp_forward_frozen(
        tape,
        &model.params,
        "decode",
        xz,
        &model.config.decoder_sizes(),
        Activation::Relu,
    )
}
