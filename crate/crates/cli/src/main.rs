//! Command-line shell for the HKG cardinality estimation toolkit.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hrce_core::brute::brute_force_cardinality;
use hrce_core::exact::exact_cardinality;
use hrce_core::query::{read_queryset, write_queryset};
use hrce_core::workload::{generate_queryset, WorkloadSpec};
use hrce_core::Hkg;
use hrce_neural::cvae::{
    build_training_pairs, train_cvae, CvaeConfig, CvaeModel, CvaeTrainOptions, PairScheme,
};
use hrce_neural::embed::{EmbeddingSource, EmbeddingTable};
use hrce_neural::hrqe::{HrqeModel, ModelConfig};
use hrce_neural::train::{
    evaluate, train, Estimator, GroupCriterion, HrqeEstimator, SamplingEstimator, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "hrce",
    about = "Cardinality estimation toolkit for hyper-relational knowledge graphs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CardMode {
    Exact,
    Brute,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Sampling,
    Hrqe,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Split,
    Mask,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a fact file and write an indexed store snapshot.
    Ingest {
        #[arg(long)]
        facts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a labeled queryset from a workload spec.
    Gen {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the seed in the spec file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Stratification report CSV.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fill the `card` field of a queryset with exact counts.
    Card {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        mode: CardMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the CVAE qualifier completer on the store's facts.
    TrainCvae {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        scheme: Scheme,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 8)]
        latent: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        /// Pretrained embedding table (word2vec-style text).
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Fallback embedding seed when no table is given.
        #[arg(long, default_value_t = 0)]
        embed_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the GNN estimator on a labeled queryset.
    Train {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        cvae: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        embed_seed: u64,
        /// Per-epoch CSV of train loss and test mean q-error.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate cardinalities and write an id,true,estimate CSV.
    Estimate {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        cvae: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an estimator against labels and write grouped q-error CSV.
    Eval {
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Comma-separated: pattern,size,range,bounded,incomplete.
        #[arg(long, default_value = "pattern,size,range,bounded,incomplete")]
        group_by: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        cvae: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest { facts, out } => {
            let hkg = Hkg::load(&facts).with_context(|| format!("loading {facts:?}"))?;
            let stats = hkg.stats();
            hkg.save_snapshot(&out)?;
            println!(
                "ingested {} facts ({} entities, {} relations, {:.1}% qualified) -> {}",
                stats.fact_count,
                stats.entity_count,
                stats.relation_count,
                100.0 * stats.qualified_fact_fraction,
                out.display()
            );
        }
        Command::Gen {
            store,
            spec,
            seed,
            out,
            report,
        } => {
            let hkg = load_store(&store)?;
            let text =
                std::fs::read_to_string(&spec).with_context(|| format!("reading {spec:?}"))?;
            let mut spec: WorkloadSpec =
                serde_json::from_str(&text).context("parsing workload spec")?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let bundle = generate_queryset(&hkg, &spec, &mut rng)?;
            write_queryset(&out, &bundle.queries, hkg.vocab())?;
            println!(
                "generated {} queries -> {}",
                bundle.queries.len(),
                out.display()
            );
            if let Some(report_path) = report {
                std::fs::write(&report_path, bundle.report.to_csv())?;
                println!("stratification report -> {}", report_path.display());
            }
            for exhausted in &bundle.report.exhausted {
                eprintln!("warning: bucket {exhausted} exhausted its retry budget");
            }
        }
        Command::Card {
            store,
            queries,
            mode,
            out,
        } => {
            let hkg = load_store(&store)?;
            let mut set = read_queryset(&queries, hkg.vocab())?;
            for query in &mut set {
                let card = match mode {
                    CardMode::Exact => exact_cardinality(&hkg, query)
                        .with_context(|| format!("query {} (try --mode brute)", query.id))?,
                    CardMode::Brute => brute_force_cardinality(&hkg, query)
                        .with_context(|| format!("query {}", query.id))?,
                };
                query.cardinality = Some(card);
            }
            write_queryset(&out, &set, hkg.vocab())?;
            println!("labeled {} queries -> {}", set.len(), out.display());
        }
        Command::TrainCvae {
            store,
            scheme,
            epochs,
            seed,
            dim,
            latent,
            hidden,
            embeddings,
            embed_seed,
            out,
        } => {
            let hkg = load_store(&store)?;
            let source = embedding_source(embeddings.as_deref(), dim, embed_seed)?;
            let scheme = match scheme {
                Scheme::Split => PairScheme::Split,
                Scheme::Mask => PairScheme::Mask,
                Scheme::Both => PairScheme::Both,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs = build_training_pairs(&hkg, &source, scheme, &mut rng)?;
            let mut model = CvaeModel::init(CvaeConfig::new(dim, latent, hidden), &mut rng)?;
            let options = CvaeTrainOptions {
                epochs,
                ..CvaeTrainOptions::default()
            };
            let history = train_cvae(&mut model, &pairs, &options, &mut rng)?;
            model.save(&out)?;
            let final_loss = history
                .epoch_losses
                .last()
                .copied()
                .unwrap_or(history.initial_loss);
            println!(
                "trained on {} pairs: loss {:.4} -> {:.4} (min KL {:.3e}) -> {}",
                pairs.len(),
                history.initial_loss,
                final_loss,
                history.min_kl,
                out.display()
            );
        }
        Command::Train {
            store,
            queries,
            layers,
            lambda,
            dim,
            epochs,
            batch,
            lr,
            seed,
            cvae,
            embeddings,
            embed_seed,
            history,
            out,
        } => {
            let hkg = load_store(&store)?;
            let set = read_queryset(&queries, hkg.vocab())?;
            let cvae_model = cvae.map(CvaeModel::load).transpose()?;
            let source = embedding_source(embeddings.as_deref(), dim, embed_seed)?;
            let mut model_config = ModelConfig::new(dim, layers, lambda);
            model_config.embed_seed = embed_seed;
            let train_config = TrainConfig {
                epochs,
                batch_size: batch,
                learning_rate: lr,
                seed,
                ..TrainConfig::default()
            };
            let outcome = train(
                &hkg,
                &set,
                model_config,
                cvae_model.as_ref(),
                &source,
                &train_config,
            )?;
            outcome.model.save(&out)?;
            println!(
                "trained on {} queries ({} steps); final test mean q-error {:.3} -> {}",
                outcome.train_indices.len(),
                outcome.history.optimizer_steps,
                outcome
                    .history
                    .test_mean_q_error
                    .last()
                    .copied()
                    .unwrap_or(f64::NAN),
                out.display()
            );
            if let Some(history_path) = history {
                let mut csv = String::from("epoch,train_loss,test_mean_q_error\n");
                for (i, (loss, q)) in outcome
                    .history
                    .train_loss
                    .iter()
                    .zip(&outcome.history.test_mean_q_error)
                    .enumerate()
                {
                    csv.push_str(&format!("{},{:.6},{:.6}\n", i + 1, loss, q));
                }
                std::fs::write(&history_path, csv)?;
                println!("history -> {}", history_path.display());
            }
        }
        Command::Estimate {
            method,
            store,
            queries,
            samples,
            seed,
            model,
            cvae,
            embeddings,
            out,
        } => {
            let hkg = load_store(&store)?;
            let set = read_queryset(&queries, hkg.vocab())?;
            let mut estimator =
                build_estimator(method, samples, seed, model, cvae, embeddings.as_deref())?;
            let mut csv = String::from("id,true_card,estimate\n");
            for query in &set {
                let est = estimator.as_estimator().estimate(&hkg, query)?;
                let truth = query.cardinality.map_or(String::new(), |c| c.to_string());
                csv.push_str(&format!("{},{},{:.4}\n", query.id, truth, est));
            }
            std::fs::write(&out, csv)?;
            println!("estimated {} queries -> {}", set.len(), out.display());
        }
        Command::Eval {
            method,
            store,
            queries,
            group_by,
            samples,
            seed,
            model,
            cvae,
            embeddings,
            out,
        } => {
            let hkg = load_store(&store)?;
            let set = read_queryset(&queries, hkg.vocab())?;
            let criteria = group_by
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(GroupCriterion::parse)
                .collect::<hrce_neural::Result<Vec<_>>>()?;
            let mut estimator =
                build_estimator(method, samples, seed, model, cvae, embeddings.as_deref())?;
            let report = evaluate(&hkg, &set, &mut *estimator.as_estimator(), &criteria)?;
            std::fs::write(&out, report.to_csv())?;
            println!(
                "{}: mean q-error {:.3} over {} queries -> {}",
                report.estimator,
                report.overall.mean_q_error,
                report.overall.n,
                out.display()
            );
        }
    }
    Ok(())
}

fn load_store(path: &std::path::Path) -> Result<Hkg> {
    Hkg::load_snapshot(path).with_context(|| format!("loading store snapshot {path:?}"))
}

fn embedding_source(
    table: Option<&std::path::Path>,
    dim: usize,
    embed_seed: u64,
) -> Result<EmbeddingSource> {
    Ok(match table {
        Some(path) => {
            let table = EmbeddingTable::load(path)?;
            if table.dim() != dim {
                bail!(
                    "embedding table dim {} does not match --dim {}",
                    table.dim(),
                    dim
                );
            }
            EmbeddingSource::from_table(table)
        }
        None => EmbeddingSource::fallback(dim, embed_seed),
    })
}

/// Owns an estimator plus everything it borrows.
enum EstimatorBox {
    Sampling(SamplingEstimator),
    Hrqe {
        model: Box<HrqeModel>,
        cvae: Option<Box<CvaeModel>>,
        source: Box<EmbeddingSource>,
    },
}

impl EstimatorBox {
    fn as_estimator(&mut self) -> Box<dyn Estimator + '_> {
        match self {
            EstimatorBox::Sampling(s) => Box::new(SamplingEstimator {
                samples: s.samples,
                seed: s.seed,
            }),
            EstimatorBox::Hrqe {
                model,
                cvae,
                source,
            } => Box::new(HrqeEstimator {
                model,
                cvae: cvae.as_deref(),
                source,
            }),
        }
    }
}

fn build_estimator(
    method: Method,
    samples: usize,
    seed: u64,
    model: Option<PathBuf>,
    cvae: Option<PathBuf>,
    embeddings: Option<&std::path::Path>,
) -> Result<EstimatorBox> {
    Ok(match method {
        Method::Sampling => EstimatorBox::Sampling(SamplingEstimator { samples, seed }),
        Method::Hrqe => {
            let model_path = model.context("--model is required with --method hrqe")?;
            let model = HrqeModel::load(&model_path)?;
            let cvae = cvae.map(CvaeModel::load).transpose()?;
            if model.config.lambda > 0.0 && cvae.is_none() {
                bail!("model was trained with lambda > 0; pass --cvae");
            }
            let source = embedding_source(embeddings, model.config.dim, model.config.embed_seed)?;
            EstimatorBox::Hrqe {
                model: Box::new(model),
                cvae: cvae.map(Box::new),
                source: Box::new(source),
            }
        }
    })
}
