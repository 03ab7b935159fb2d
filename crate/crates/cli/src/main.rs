use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use bourne::injection::{inject, InjectionConfig};
use bourne::io::{read_dataset, read_json, write_dataset, write_json};
use bourne::metrics::{evaluate, EvalReport, Task};
use bourne::nn::{read_checkpoint, write_checkpoint};
use bourne::rng::{self, Stream};
use bourne::sweeps::{run_correlation_sweep, run_hyperparameter_sweep, write_csv, SweepGrid};
use bourne::synth::{erdos_renyi, SynthConfig};
use bourne::trainer::{build_views, infer_scores, train_with, TrainConfig};
use bourne::views::{dump_view, epoch_batches};
use bourne::{Model, ScoresFile};

#[derive(Parser)]
#[command(name = "bourne", version, about = "Bootstrapped node and edge anomaly detection")]
struct Cli {
    /// Seed for every random stream; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (1 gives the reference single-threaded mode).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON training configuration; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an Erdős–Rényi graph with Gaussian features.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        nodes: usize,
        #[arg(long, default_value_t = 0.02)]
        edge_prob: f64,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 2)]
        smoothing_rounds: usize,
        #[arg(long, default_value_t = 0.8)]
        smoothing_weight: f64,
    },
    /// Plant structural and attributive anomalies into a dataset.
    Inject {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15)]
        clique_size: usize,
        #[arg(long, default_value_t = 1)]
        clique_count: usize,
        #[arg(long, default_value_t = 50)]
        candidate_pool: usize,
        #[arg(long, default_value_t = 2)]
        attr_edges: usize,
    },
    /// Train a model and write the best-loss checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines training log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write a few epoch-0 views as CSV for inspection.
        #[arg(long)]
        dump_views: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        symmetric_roles: bool,
    },
    /// Score every node and edge with a trained model.
    Score {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare scores against the dataset labels.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = TaskArg::Both)]
        task: TaskArg,
        /// Extra cutoff for precision/recall.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Directory for ROC point CSVs.
        #[arg(long)]
        roc_dir: Option<PathBuf>,
    },
    /// Grid over alpha, beta, hidden size, rounds, tau and seeds.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        /// JSON grid; defaults to the 5x5 alpha/beta grid.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// AUC as a function of node/edge anomaly correlation.
    CorrelationSweep {
        /// Unlabeled base graph.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 32)]
        anomalies: usize,
        #[arg(long, default_value_t = 20)]
        candidate_pool: usize,
        #[arg(long, default_value_t = 2)]
        attr_edges: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(serde::Serialize)]
struct RocPoint {
    fpr: f64,
    tpr: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Node,
    Edge,
    Both,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e
                .chain()
                .any(|c| c.downcast_ref::<bourne::Error>().is_some_and(bourne::Error::is_numerical));
            ExitCode::from(if numerical { 3 } else { 2 })
        }
    }
}

fn train_config(cli: &Cli) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = match &cli.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Synth {
            out,
            nodes,
            edge_prob,
            dim,
            smoothing_rounds,
            smoothing_weight,
        } => {
            let g = erdos_renyi(&SynthConfig {
                num_nodes: *nodes,
                edge_prob: *edge_prob,
                feature_dim: *dim,
                smoothing_rounds: *smoothing_rounds,
                smoothing_weight: *smoothing_weight,
                seed,
            })?;
            write_dataset(out, &g)?;
            log::info!("wrote {} nodes, {} edges to {}", g.num_nodes(), g.num_edges(), out.display());
        }
        Command::Inject {
            data,
            out,
            clique_size,
            clique_count,
            candidate_pool,
            attr_edges,
        } => {
            let g = read_dataset(data)?;
            let (g, report) = inject(
                &g,
                &InjectionConfig {
                    clique_size: *clique_size,
                    clique_count: *clique_count,
                    candidate_pool: *candidate_pool,
                    attr_edge_count: *attr_edges,
                    seed,
                },
            )?;
            write_dataset(out, &g)?;
            write_json(&out.join("injection_report.json"), &report)?;
            log::info!(
                "{} anomalous nodes, {} anomalous edges, correlation {:?}",
                report.injected_node_ids.len(),
                report.injected_edge_ids.len(),
                report.anomaly_correlation
            );
        }
        Command::Train {
            data,
            out,
            log: log_path,
            dump_views: dump,
            epochs,
            symmetric_roles,
        } => {
            let mut cfg = train_config(&cli)?;
            if let Some(e) = epochs {
                cfg.epochs = *e;
            }
            cfg.symmetric_roles |= *symmetric_roles;
            let g = read_dataset(data)?;
            if let Some(dir) = dump {
                dump_epoch0_views(&g, &cfg, dir)?;
            }
            let mut log_file = log_path
                .as_ref()
                .map(|p| File::create(p).map(BufWriter::new).with_context(|| format!("creating {}", p.display())))
                .transpose()?;
            let mut log_err = None;
            let outcome = train_with(&g, &cfg, |entry| {
                if let Some(w) = log_file.as_mut() {
                    let line = serde_json::to_string(entry).expect("plain struct");
                    if let Err(e) = writeln!(w, "{line}") {
                        log_err.get_or_insert(e);
                    }
                }
            })?;
            if let Some(e) = log_err {
                return Err(e).context("writing the training log");
            }
            if let Some(mut w) = log_file {
                w.flush()?;
            }
            let run = serde_json::to_value(cfg)?;
            let ckpt = outcome.best.to_checkpoint(outcome.steps, cfg.tau, run);
            write_checkpoint(out, &ckpt)?;
            log::info!(
                "best epoch {:?} loss {:.6}; checkpoint at {}",
                outcome.best_epoch,
                outcome.best_loss,
                out.display()
            );
            if let Some(msg) = outcome.halted {
                return Err(bourne::Error::Numerical(msg)).context("training halted");
            }
        }
        Command::Score {
            ckpt,
            data,
            rounds,
            out,
        } => {
            let ck = read_checkpoint(ckpt)?;
            let model = Model::<f32>::from_checkpoint(&ck)?;
            let run: TrainConfig = ck
                .header
                .config
                .get("run")
                .cloned()
                .map(serde_json::from_value)
                .transpose()?
                .unwrap_or_default();
            let g = read_dataset(data)?;
            if g.feature_dim() != model.config.in_dim {
                bail!(bourne::Error::Shape(format!(
                    "dataset has {} features, model expects {}",
                    g.feature_dim(),
                    model.config.in_dim
                )));
            }
            let mut icfg = run.infer_config();
            if let Some(r) = rounds {
                icfg.rounds = *r;
            }
            if let Some(s) = cli.seed {
                icfg.seed = s;
            }
            let table = infer_scores(&g, &model, &icfg)?;
            write_json(out, &table.to_file())?;
            log::info!("scored {} rounds into {}", icfg.rounds, out.display());
        }
        Command::Eval {
            scores,
            data,
            task,
            k,
            out,
            roc_dir,
        } => {
            let s: ScoresFile = read_json(scores)?;
            let g = read_dataset(data)?;
            let tasks: &[Task] = match task {
                TaskArg::Node => &[Task::Node],
                TaskArg::Edge => &[Task::Edge],
                TaskArg::Both => &[Task::Node, Task::Edge],
            };
            let echo = serde_json::json!({ "scores": scores, "data": data });
            let mut reports: Vec<EvalReport> = Vec::new();
            for &t in tasks {
                let (values, labels) = match t {
                    Task::Node => (&s.node_scores, g.node_labels()),
                    Task::Edge => (&s.edge_scores, g.edge_labels()),
                };
                let labels = labels.with_context(|| format!("{} labels missing from {}", t, data.display()))?;
                let r = evaluate(t, values, labels, *k, echo.clone())?;
                println!("{}", r.summary());
                if let Some(dir) = roc_dir {
                    std::fs::create_dir_all(dir)?;
                    let points: Vec<RocPoint> = r.roc_points.iter().map(|&(fpr, tpr)| RocPoint { fpr, tpr }).collect();
                    write_csv(&dir.join(format!("roc_{t}.csv")), &points)?;
                }
                reports.push(r);
            }
            if reports.len() == 1 {
                write_json(out, &reports[0])?;
            } else {
                write_json(out, &reports)?;
            }
        }
        Command::Sweep {
            data,
            grid,
            cache,
            out,
        } => {
            let cfg = train_config(&cli)?;
            let g = read_dataset(data)?;
            let grid: SweepGrid = match grid {
                Some(p) => read_json(p)?,
                None => SweepGrid::default(),
            };
            let (rows, stats) = run_hyperparameter_sweep(&g, &cfg, &grid, cache)?;
            write_csv(out, &rows)?;
            log::info!("{} cells trained, {} from cache", stats.trained, stats.cached);
        }
        Command::CorrelationSweep {
            data,
            levels,
            anomalies,
            candidate_pool,
            attr_edges,
            out,
        } => {
            let cfg = train_config(&cli)?;
            let g = read_dataset(data)?;
            let generator = bourne::injection::CorrelationConfig {
                anomalies: *anomalies,
                candidate_pool: *candidate_pool,
                attr_edge_count: *attr_edges,
                level: 0.0,
                seed: cfg.seed,
            };
            let rows = run_correlation_sweep(&g, levels, &generator, &cfg)?;
            write_csv(out, &rows)?;
        }
    }
    Ok(())
}

fn dump_epoch0_views(g: &bourne::AttributedGraph, cfg: &TrainConfig, dir: &Path) -> Result<()> {
    let mut shuffle = rng::stream(cfg.seed, Stream::Shuffle, &[0]);
    let batches = epoch_batches(g, cfg.batch_size, &mut shuffle)?;
    let first: Vec<usize> = batches[0].iter().take(4).copied().collect();
    let views = build_views(g, &first, &cfg.subgraph, &cfg.augment, cfg.seed, Stream::TrainView, 0)?;
    for v in &views {
        dump_view(v, &dir.join(format!("target_{}", v.target)))?;
    }
    Ok(())
}
