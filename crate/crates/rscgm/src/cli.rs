//! Command-line front end: graph construction, training, evaluation, the
//! method comparison harness and sparsity sampling.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::affinity::{
    build_affinity_graph, build_pairwise_graph, AffinityGraph, Entity, GraphSource,
    PairwiseCombiner,
};
use crate::dataset::{
    load_ratings, load_social, load_tags, sample_ratings, sample_users, RatingDataset,
    RatingFormat, RatingMode,
};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_rating_model, evaluate_ranking_model, render_csv, render_table, run_comparison,
    ComparisonConfig,
};
use crate::model::{train, train_pairwise, FactorModel, Hyperparameters};

#[derive(Parser)]
#[command(name = "rscgm", about = "Graph-smoothed collaborative filtering")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RatingArgs {
    /// Rating file.
    #[arg(long)]
    ratings: PathBuf,
    /// Rating file layout.
    #[arg(long, value_enum, default_value = "generic-csv")]
    format: FormatArg,
    /// Explicit real-valued or implicit binary ratings.
    #[arg(long, value_enum, default_value = "explicit")]
    mode: ModeArg,
}

impl RatingArgs {
    fn load(&self) -> Result<RatingDataset> {
        load_ratings(&self.ratings, self.format.into(), self.mode.into())
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    HetrecTsv,
    MovielensColons,
    GenericCsv,
}

impl From<FormatArg> for RatingFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::HetrecTsv => RatingFormat::HetrecTsv,
            FormatArg::MovielensColons => RatingFormat::MovielensColons,
            FormatArg::GenericCsv => RatingFormat::GenericCsv,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Explicit,
    Implicit,
}

impl From<ModeArg> for RatingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Explicit => RatingMode::Explicit,
            ModeArg::Implicit => RatingMode::Implicit,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum EntityArg {
    User,
    Item,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SourceArg {
    RatingPcc,
    TagJaccard,
    Social,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum CombinerArg {
    Product,
    Min,
}

#[derive(Subcommand)]
enum Command {
    /// Build a user or item affinity graph and write its edge list.
    BuildGraph {
        #[command(flatten)]
        ratings: RatingArgs,
        #[arg(long, value_enum)]
        entity: EntityArg,
        #[arg(long, value_enum, default_value = "rating-pcc")]
        source: SourceArg,
        /// Minimum co-rating overlap for correlation edges.
        #[arg(long, default_value_t = 3)]
        min_overlap: usize,
        /// Per-node neighbor cap before symmetrization.
        #[arg(long, default_value_t = 50)]
        top_k: usize,
        /// User-user edge file (social source).
        #[arg(long)]
        social: Option<PathBuf>,
        /// Item tag assignment file (tag-jaccard source).
        #[arg(long)]
        tags: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train a model and write a factor checkpoint.
    Train {
        #[command(flatten)]
        ratings: RatingArgs,
        #[arg(long)]
        user_graph: PathBuf,
        #[arg(long)]
        item_graph: PathBuf,
        /// JSON hyperparameter file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Smooth over the user-item pairwise graph instead of the joint graphs.
        #[arg(long)]
        pairwise: bool,
        #[arg(long, value_enum, default_value = "product")]
        combiner: CombinerArg,
        #[arg(long)]
        output: PathBuf,
        /// Optional JSON training report (objective trace, timing).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a checkpoint against a held-out rating file.
    Evaluate {
        /// Held-out ratings to score.
        #[command(flatten)]
        ratings: RatingArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Training ratings; enables top-m ranking metrics.
        #[arg(long)]
        train_ratings: Option<PathBuf>,
        #[arg(long)]
        ranking_m: Option<usize>,
        #[arg(long, default_value_t = 4.0)]
        like_threshold: f64,
    },
    /// Cross-validated method comparison from a JSON config.
    Compare {
        #[command(flatten)]
        ratings: RatingArgs,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        social: Option<PathBuf>,
        #[arg(long)]
        tags: Option<PathBuf>,
        /// JSON report destination.
        #[arg(long)]
        output: PathBuf,
        /// Plot-ready CSV destination.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Subsample ratings and write the survivors as generic csv.
    Sample {
        #[command(flatten)]
        ratings: RatingArgs,
        /// Fraction of ratings to remove uniformly at random.
        #[arg(long, conflicts_with = "max_per_user")]
        remove_fraction: Option<f64>,
        /// Drop all ratings of users above this activity threshold.
        #[arg(long)]
        max_per_user: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.clone(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write_text(path: &PathBuf, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.clone(), e))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildGraph {
            ratings,
            entity,
            source,
            min_overlap,
            top_k,
            social,
            tags,
            output,
        } => {
            let ds = ratings.load()?;
            let entity = match entity {
                EntityArg::User => Entity::User,
                EntityArg::Item => Entity::Item,
            };
            let source = match source {
                SourceArg::RatingPcc => GraphSource::RatingPcc,
                SourceArg::TagJaccard => GraphSource::TagJaccard,
                SourceArg::Social => GraphSource::Social,
            };
            let social = social
                .map(|p| load_social(&p, Some(&ds.user_ids)))
                .transpose()?;
            let tags = tags.map(|p| load_tags(&p, &ds.item_ids)).transpose()?;
            let g = build_affinity_graph(
                &ds,
                entity,
                source,
                min_overlap,
                top_k,
                social.as_ref(),
                tags.as_ref(),
            )?;
            g.save(&output)?;
            println!(
                "{} graph: {} nodes, {} edges -> {}",
                g.entity.as_str(),
                g.num_nodes,
                g.num_edges(),
                output.display()
            );
        }
        Command::Train {
            ratings,
            user_graph,
            item_graph,
            config,
            pairwise,
            combiner,
            output,
            report,
        } => {
            let ds = ratings.load()?;
            let gu = AffinityGraph::load(&user_graph)?;
            let gi = AffinityGraph::load(&item_graph)?;
            let hp: Hyperparameters = match config {
                Some(p) => read_json(&p)?,
                None => Hyperparameters::default(),
            };
            hp.validate()?;
            let (model, train_report) = if pairwise {
                let combiner = match combiner {
                    CombinerArg::Product => PairwiseCombiner::Product,
                    CombinerArg::Min => PairwiseCombiner::Min,
                };
                let pg = build_pairwise_graph(&gu, &gi, combiner, &ds)?;
                train_pairwise(&ds, &pg, &hp, None, None)?
            } else {
                train(&ds, &gu, &gi, &hp, None, None)?
            };
            model.save(&output)?;
            println!(
                "trained {} sweeps in {:.2}s, final objective {:.6e}, converged: {} -> {}",
                train_report.iterations_run,
                train_report.wall_time_secs,
                train_report.objective_trace.last().unwrap(),
                train_report.converged,
                output.display()
            );
            if let Some(p) = report {
                write_text(&p, &serde_json::to_string_pretty(&train_report).unwrap())?;
            }
        }
        Command::Evaluate {
            ratings,
            checkpoint,
            train_ratings,
            ranking_m,
            like_threshold,
        } => {
            let test = ratings.load()?;
            let model = FactorModel::load(&checkpoint)?;
            if model.num_users() < test.num_users || model.num_items() < test.num_items {
                return Err(Error::Dimension(format!(
                    "checkpoint covers {}x{}, test data needs {}x{}",
                    model.num_users(),
                    model.num_items(),
                    test.num_users,
                    test.num_items
                )));
            }
            let rating = evaluate_rating_model(&model, &test)?;
            let mut out = serde_json::json!({
                "mae": rating.mae,
                "rmse": rating.rmse,
                "num_predictions": rating.num_predictions,
            });
            if let (Some(train_path), Some(m)) = (train_ratings, ranking_m) {
                let train_ds =
                    load_ratings(&train_path, ratings.format.into(), ratings.mode.into())?;
                let ranking =
                    evaluate_ranking_model(&model, &train_ds, &test, m, like_threshold)?;
                out[format!("precision_at_{m}")] = ranking.precision.into();
                out[format!("recall_at_{m}")] = ranking.recall.into();
                out["users_evaluated"] = ranking.users_evaluated.into();
                out["users_excluded"] = ranking.users_excluded.into();
            }
            println!("{}", serde_json::to_string_pretty(&out).unwrap());
        }
        Command::Compare {
            ratings,
            config,
            social,
            tags,
            output,
            csv,
        } => {
            let ds = ratings.load()?;
            let cfg: ComparisonConfig = read_json(&config)?;
            let social = social
                .map(|p| load_social(&p, Some(&ds.user_ids)))
                .transpose()?;
            let tags = tags.map(|p| load_tags(&p, &ds.item_ids)).transpose()?;
            let report = run_comparison(&ds, &cfg, social.as_ref(), tags.as_ref())?;
            write_text(&output, &serde_json::to_string_pretty(&report).unwrap())?;
            if let Some(p) = csv {
                write_text(&p, &render_csv(&report))?;
            }
            print!("{}", render_table(&report));
        }
        Command::Sample {
            ratings,
            remove_fraction,
            max_per_user,
            seed,
            output,
        } => {
            let ds = ratings.load()?;
            let sampled = match (remove_fraction, max_per_user) {
                (Some(f), None) => {
                    if !(0.0..1.0).contains(&f) {
                        return Err(Error::Config(format!(
                            "remove fraction {f} outside [0, 1)"
                        )));
                    }
                    sample_ratings(&ds, f, seed)
                }
                (None, Some(m)) => {
                    if m == 0 {
                        return Err(Error::Config("max-per-user must be at least 1".into()));
                    }
                    sample_users(&ds, m)
                }
                _ => {
                    return Err(Error::Config(
                        "exactly one of --remove-fraction or --max-per-user is required".into(),
                    ))
                }
            };
            sampled.save_generic_csv(&output)?;
            println!(
                "kept {} of {} ratings -> {}",
                sampled.len(),
                ds.len(),
                output.display()
            );
        }
    }
    Ok(())
}

/// Parse arguments, run, and map errors to process exit codes.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
