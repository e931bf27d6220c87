//! `riffle`: command-line pipelines over ranking datasets — structure
//! learning, parameter fitting, evaluation, sampling, marginals, Fourier
//! self-checks, bootstrap stability, and synthetic data generation.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::rngs::StdRng;
use rand::SeedableRng;

use riffle_core::fourier::{fourier_transform, inverse_fourier_transform, rifflehat};
use riffle_core::io::{
    load_model, load_rankings, model_to_document, save_model, save_rankings, synth, Notation,
};
use riffle_core::learn::{
    bootstrap_stability, learn_hierarchy, LearnMode, LearnOptions, ObjectiveKind, SearchMethod,
};
use riffle_core::model::embed_interleaving;
use riffle_core::{InterleavingDistribution, SampleSet, TreeShape};

#[derive(Parser)]
#[command(name = "riffle", version, about = "Riffled-independence modeling of rankings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Cross,
    Balanced,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exhaustive,
    Anchors,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    /// Chain that peels off k items per level.
    Thin,
    /// Recursively halved item set.
    Balanced,
}

#[derive(Args)]
struct LearnFlags {
    /// Fix the size of the block split off at each level (thin-chain mode).
    #[arg(long)]
    k: Option<usize>,
    /// Item sets of this size or smaller become leaves.
    #[arg(long, default_value_t = 2)]
    leaf_cap: usize,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Cross)]
    objective: ObjectiveArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Exhaustive)]
    method: MethodArg,
}

impl LearnFlags {
    fn options(&self) -> LearnOptions {
        LearnOptions {
            mode: match self.k {
                Some(k) => LearnMode::ThinChain { k },
                None => LearnMode::General,
            },
            method: match self.method {
                MethodArg::Exhaustive => SearchMethod::Exhaustive,
                MethodArg::Anchors => SearchMethod::Anchors,
            },
            objective: match self.objective {
                ObjectiveArg::Cross => ObjectiveKind::Cross,
                ObjectiveArg::Balanced => ObjectiveKind::Balanced,
            },
            leaf_cap: self.leaf_cap,
            ..LearnOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Learn a hierarchical riffle independent model from ranking data.
    LearnStructure {
        /// Ranking file.
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        #[command(flatten)]
        learn: LearnFlags,
        /// Where to write the fitted model JSON (default: stdout).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Refit the parameters of an existing model's tree to new data.
    FitParams {
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        /// Model file providing the tree structure.
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Replace each fitted interleaving table with its best
        /// single-parameter biased-riffle fit.
        #[arg(long)]
        biased: bool,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Mean log-likelihood of held-out data under a model.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Test ranking file.
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
    },
    /// Draw rankings from a model.
    Sample {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Low-order marginal counts of a ranking file (CSV).
    Marginals {
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        /// Marginal order (1 or 2).
        #[arg(long, default_value_t = 1)]
        order: usize,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Verify the shuffle-transform recurrence against the direct transform.
    FourierCheck {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
    },
    /// Bootstrap stability of the learned structure.
    Bootstrap {
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        /// Resamples per size.
        #[arg(long = "bootstrap-B", default_value_t = 50)]
        bootstrap_b: usize,
        /// Comma-separated resample sizes (default: the dataset size).
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        learn: LearnFlags,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Generate a random model and samples from it.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = ShapeArg::Thin)]
        shape: ShapeArg,
        /// Block size for the thin chain (or leaf cap for balanced shapes).
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the sample file (default: stdout).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Where to write the ground-truth model JSON.
        #[arg(long, value_name = "FILE")]
        model_out: Option<PathBuf>,
    },
}

fn emit(out: &Option<PathBuf>, text: &str) -> riffle_core::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn shape_json(shape: &TreeShape) -> serde_json::Value {
    match shape {
        TreeShape::Leaf(items) => serde_json::json!({
            "items": items.iter().map(|i| i + 1).collect::<Vec<_>>()
        }),
        TreeShape::Split(l, r) => serde_json::json!({
            "items": shape.items().iter().map(|i| i + 1).collect::<Vec<_>>(),
            "children": [shape_json(l), shape_json(r)]
        }),
    }
}

fn run(cli: Cli) -> riffle_core::Result<i32> {
    match cli.command {
        Command::LearnStructure { r#in, learn, out } => {
            let samples = load_rankings(&r#in)?;
            let learned = learn_hierarchy(&samples, &learn.options())?;
            let mut report = serde_json::json!({
                "tree": shape_json(&learned.shape.canonical()),
                "node_scores": learned.scores.iter().map(|s| serde_json::json!({
                    "items": s.items.iter().map(|i| i + 1).collect::<Vec<_>>(),
                    "block": s.block.iter().map(|i| i + 1).collect::<Vec<_>>(),
                    "objective": s.objective,
                })).collect::<Vec<_>>(),
            });
            // --out gets a loadable model file; the report goes to stdout
            match &out {
                Some(path) => save_model(&learned.model, path)?,
                None => {
                    report["model"] = serde_json::to_value(model_to_document(&learned.model))
                        .expect("model document serializes");
                }
            }
            emit(&None, &format!("{:#}\n", report))?;
            Ok(0)
        }
        Command::FitParams {
            r#in,
            model,
            biased,
            out,
        } => {
            let samples = load_rankings(&r#in)?;
            let shape = load_model(&model)?.shape();
            let mut fitted =
                riffle_core::HierarchicalModel::fit_samples(&shape, &samples, 0.0)?;
            if biased {
                fitted = fitted.map_interleavings(&|m: &InterleavingDistribution| {
                    let alpha = m.fit_alpha();
                    InterleavingDistribution::biased(m.p(), m.q(), alpha)
                })?;
            }
            let mean_ll = mean_log_likelihood(&fitted, &samples);
            let mut report = serde_json::json!({
                "mean_log_likelihood": mean_ll,
            });
            match &out {
                Some(path) => save_model(&fitted, path)?,
                None => {
                    report["model"] = serde_json::to_value(model_to_document(&fitted))
                        .expect("model document serializes");
                }
            }
            emit(&None, &format!("{:#}\n", report))?;
            Ok(0)
        }
        Command::Evaluate { model, r#in } => {
            let m = load_model(&model)?;
            let samples = load_rankings(&r#in)?;
            if samples.n() != m.n() {
                return Err(riffle_core::Error::SizeMismatch(format!(
                    "model over {} items, data over {}",
                    m.n(),
                    samples.n()
                )));
            }
            let report = serde_json::json!({
                "n": m.n(),
                "total": samples.total(),
                "mean_log_likelihood": mean_log_likelihood(&m, &samples),
            });
            emit(&None, &format!("{:#}\n", report))?;
            Ok(0)
        }
        Command::Sample {
            model,
            count,
            seed,
            out,
        } => {
            let m = load_model(&model)?;
            let mut rng = StdRng::seed_from_u64(seed);
            let samples =
                SampleSet::from_rankings(m.n(), (0..count).map(|_| m.sample(&mut rng)))?;
            match out {
                Some(path) => save_rankings(&samples, path, Notation::Ordering)?,
                None => emit(
                    &None,
                    &riffle_core::io::format_rankings(&samples, Notation::Ordering),
                )?,
            }
            Ok(0)
        }
        Command::Marginals { r#in, order, out } => {
            let samples = load_rankings(&r#in)?;
            let text = marginal_csv(&samples, order)?;
            emit(&out, &text)?;
            Ok(0)
        }
        Command::FourierCheck { n, alpha } => {
            if n < 2 || n > riffle_core::fourier::fourier_cap() {
                return Err(riffle_core::Error::EnumerationCap {
                    n,
                    cap: riffle_core::fourier::fourier_cap(),
                });
            }
            if !(0.0..=1.0).contains(&alpha) {
                return Err(riffle_core::Error::InvalidRanking(format!(
                    "alpha must lie in [0,1], got {}",
                    alpha
                )));
            }
            let mut worst: f64 = 0.0;
            for p in 1..n {
                let hat = rifflehat(p, n - p, alpha)?;
                let direct = fourier_transform(&embed_interleaving(
                    &InterleavingDistribution::biased(p, n - p, alpha)?,
                )?)?;
                worst = worst.max(hat.max_abs_diff(&direct)?);
                // and the transform must invert cleanly
                let back = inverse_fourier_transform(&direct)?;
                let embedded =
                    embed_interleaving(&InterleavingDistribution::biased(p, n - p, alpha)?)?;
                worst = worst.max(back.max_abs_diff(&embedded)?);
            }
            let pass = worst < 1e-9;
            let report = serde_json::json!({
                "n": n,
                "alpha": alpha,
                "max_deviation": worst,
                "pass": pass,
            });
            emit(&None, &format!("{:#}\n", report))?;
            Ok(if pass { 0 } else { 1 })
        }
        Command::Bootstrap {
            r#in,
            bootstrap_b,
            sizes,
            seed,
            learn,
            out,
        } => {
            let samples = load_rankings(&r#in)?;
            let sizes = if sizes.is_empty() {
                vec![samples.total() as usize]
            } else {
                sizes
            };
            let mut rng = StdRng::seed_from_u64(seed);
            let report = bootstrap_stability(
                &samples,
                bootstrap_b,
                &sizes,
                &learn.options(),
                &[],
                &mut rng,
            )?;
            let mut csv = String::from("size,exact_tree,top_partition,leaf_sets\n");
            for e in &report.entries {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    e.size, e.exact, e.top_partition, e.leaf_sets
                ));
            }
            emit(&out, &csv)?;
            Ok(0)
        }
        Command::Synth {
            n,
            shape,
            k,
            count,
            seed,
            out,
            model_out,
        } => {
            let shape = match shape {
                ShapeArg::Thin => TreeShape::thin_chain(n, k.max(1)),
                ShapeArg::Balanced => {
                    TreeShape::balanced(&(0..n).collect::<Vec<_>>(), k.max(1))
                }
            };
            let (model, samples) = synth(&shape, count, seed)?;
            if let Some(path) = model_out {
                save_model(&model, path)?;
            }
            match out {
                Some(path) => save_rankings(&samples, path, Notation::Ordering)?,
                None => emit(
                    &None,
                    &riffle_core::io::format_rankings(&samples, Notation::Ordering),
                )?,
            }
            Ok(0)
        }
    }
}

fn mean_log_likelihood(model: &riffle_core::HierarchicalModel, samples: &SampleSet) -> f64 {
    let total = samples.total() as f64;
    samples
        .records()
        .iter()
        .map(|(r, c)| *c as f64 * model.log_prob(r))
        .sum::<f64>()
        / total
}

/// CSV of marginal counts. Order 1 is the rank-by-item count matrix; order 2
/// lists one `(item pair, rank pair, count)` row per observed combination.
fn marginal_csv(samples: &SampleSet, order: usize) -> riffle_core::Result<String> {
    let n = samples.n();
    match order {
        1 => {
            let mut counts = vec![vec![0u64; n]; n];
            for (r, c) in samples.records() {
                for item in 0..n {
                    counts[r.rank(item)][item] += c;
                }
            }
            let header: Vec<String> = (1..=n).map(|i| format!("item{}", i)).collect();
            let mut out = format!("rank,{}\n", header.join(","));
            for (rank, row) in counts.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
                out.push_str(&format!("{},{}\n", rank + 1, cells.join(",")));
            }
            Ok(out)
        }
        2 => {
            let mut out = String::from("item_i,item_j,rank_i,rank_j,count\n");
            let mut counts = std::collections::BTreeMap::new();
            for (r, c) in samples.records() {
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            *counts.entry((i, j, r.rank(i), r.rank(j))).or_insert(0u64) += c;
                        }
                    }
                }
            }
            for ((i, j, ri, rj), c) in counts {
                out.push_str(&format!("{},{},{},{},{}\n", i + 1, j + 1, ri + 1, rj + 1, c));
            }
            Ok(out)
        }
        other => Err(riffle_core::Error::SizeMismatch(format!(
            "marginal order must be 1 or 2, got {}",
            other
        ))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {}", err);
            ExitCode::from(2)
        }
    }
}
