use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ptss::eval::{evaluate, ClassifierChoice, EvalConfig, EvalReport, ReportMetadata, Task};
use ptss::kg::{compute_stats, load_triples, KnowledgeGraph};
use ptss::pipeline::{compare_report, run_pipeline, ExperimentConfig, RunOptions};
use ptss::sampler::{build_dataset, PtssDataset};
use ptss::seed::{
    import_embeddings, read_indexed_tsv, train_seed, write_indexed_tsv, EmbeddingSet, ModelTag, SeedTrainConfig,
    ValueKind,
};
use ptss::siamese::{init_embedding_layer, train, AggregationOp, Checkpoint, FineTuneConfig, SiameseModel};
use ptss::triple2vec::{run_triple2vec, write_corpus, SkipGramConfig, Triple2vecConfig};
use ptss::Error;

#[derive(Parser)]
#[command(
    name = "ptss",
    version,
    about = "Triple embeddings from pre-trained knowledge graph embeddings"
)]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GraphArgs {
    /// Tab-separated triple files (head, predicate, tail); their union is used.
    #[arg(short, long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct SeedFiles {
    #[arg(long)]
    entities: PathBuf,
    #[arg(long)]
    predicates: PathBuf,
    /// Model that produced the embeddings.
    #[arg(long, default_value = "transe")]
    model: ModelTag,
    /// Storage layout; defaults to the model's.
    #[arg(long)]
    value_kind: Option<ValueKind>,
}

impl SeedFiles {
    fn load(&self, g: &KnowledgeGraph) -> ptss::Result<EmbeddingSet> {
        let kind = self.value_kind.unwrap_or_else(|| self.model.value_kind());
        import_embeddings(g, &self.entities, &self.predicates, kind, self.model)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Graph statistics as JSON.
    Stats {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Train seed entity and predicate embeddings.
    SeedTrain {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value = "transe")]
        model: ModelTag,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 1.0)]
        margin: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Check external embeddings against the graph and rewrite them aligned.
    SeedImport {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        seed: SeedFiles,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Sample triple pairs and label them with PTSS.
    Sample {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        seed_files: SeedFiles,
        #[arg(short = 'n', long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Fine-tune triple embeddings on a PTSS dataset.
    Finetune {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        seed_files: SeedFiles,
        #[arg(long)]
        ptss: PathBuf,
        #[arg(long, default_value = "avg")]
        agg: AggregationOp,
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 2e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0.1)]
        warmup: f64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Classification and clusterability of triple embeddings.
    Eval {
        #[command(flatten)]
        graph: GraphArgs,
        /// Row-indexed triple embeddings.
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value = "all")]
        task: Task,
        #[arg(long, default_value = "both")]
        classifier: ClassifierChoice,
        #[arg(long)]
        restrict_multi_predicate: bool,
        /// Z-score features before logistic regression.
        #[arg(long)]
        standardize: bool,
        #[arg(long, default_value = "ptss")]
        method: String,
        #[arg(long, default_value = "")]
        dataset_name: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
        /// Per-fold scores as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Line-graph random-walk baseline embeddings.
    Baseline {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 10)]
        walks: usize,
        #[arg(long, default_value_t = 20)]
        walk_length: usize,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long)]
        zero_diagonal: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Tabulate evaluation reports.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        /// CSV output; JSON goes next to it with a `.json` extension.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run every stage from a TOML config.
    RunAll {
        #[arg(short, long)]
        config: PathBuf,
        /// Recompute stages even when the manifest says they are current.
        #[arg(long)]
        force: bool,
    },
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Stats { .. } => "stats",
            Command::SeedTrain { .. } => "seed-train",
            Command::SeedImport { .. } => "seed-import",
            Command::Sample { .. } => "sample",
            Command::Finetune { .. } => "finetune",
            Command::Eval { .. } => "eval",
            Command::Baseline { .. } => "baseline",
            Command::Compare { .. } => "compare",
            Command::RunAll { .. } => "run-all",
        }
    }
}

fn graph(args: &GraphArgs) -> ptss::Result<KnowledgeGraph> {
    let (g, summary) = load_triples(&args.inputs)?;
    log::info!(
        "loaded {} triples ({} lines, {} duplicates dropped)",
        g.num_triples(),
        summary.lines,
        summary.duplicates
    );
    Ok(g)
}

fn mkdir(dir: &Path) -> ptss::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_owned(),
        source: e,
    })
}

fn write(path: &Path, text: &str) -> ptss::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn run(cmd: Command) -> ptss::Result<()> {
    match cmd {
        Command::Stats { graph: args, out } => {
            let stats = compute_stats(&graph(&args)?);
            let json = serde_json::to_string_pretty(&stats)?;
            match out {
                Some(p) => write(&p, &json)?,
                None => println!("{json}"),
            }
        }
        Command::SeedTrain {
            graph: args,
            model,
            dim,
            epochs,
            lr,
            margin,
            seed,
            out_dir,
        } => {
            let g = graph(&args)?;
            let cfg = SeedTrainConfig {
                dim,
                epochs,
                learning_rate: lr,
                margin,
                rng_seed: seed,
                ..Default::default()
            };
            let trained = train_seed(&g, model, &cfg)?;
            mkdir(&out_dir)?;
            trained
                .embeddings
                .export(&g, &out_dir.join("entities.tsv"), &out_dir.join("predicates.tsv"))?;
            write(
                &out_dir.join("losses.json"),
                &serde_json::to_string(&trained.epoch_losses)?,
            )?;
        }
        Command::SeedImport {
            graph: args,
            seed,
            out_dir,
        } => {
            let g = graph(&args)?;
            let emb = seed.load(&g)?;
            mkdir(&out_dir)?;
            emb.export(&g, &out_dir.join("entities.tsv"), &out_dir.join("predicates.tsv"))?;
        }
        Command::Sample {
            graph: args,
            seed_files,
            n,
            seed,
            out,
        } => {
            let g = graph(&args)?;
            let d = build_dataset(&g, &seed_files.load(&g)?, n, seed)?;
            log::info!(
                "{} pairs, {} anchors short of negatives",
                d.pairs.len(),
                d.negative_shortfalls
            );
            d.write_tsv(&out)?;
        }
        Command::Finetune {
            graph: args,
            seed_files,
            ptss,
            agg,
            batch,
            lr,
            warmup,
            epochs,
            seed,
            out_dir,
        } => {
            let g = graph(&args)?;
            let emb = seed_files.load(&g)?;
            let data = PtssDataset::read_tsv(&ptss)?;
            let cfg = FineTuneConfig {
                batch_size: batch,
                learning_rate: lr,
                warmup_fraction: warmup,
                epochs,
                rng_seed: seed,
                ..Default::default()
            };
            let init = init_embedding_layer(&g, &emb, agg)?;
            let out = train(SiameseModel::new(init, seed), &data, &cfg)?;
            mkdir(&out_dir)?;
            write_indexed_tsv(
                &out_dir.join("triple_embeddings.tsv"),
                &out.model.export_triple_embeddings(),
            )?;
            write(&out_dir.join("losses.json"), &serde_json::to_string(&out.epoch_losses)?)?;
            Checkpoint {
                model: out.model,
                config: cfg,
            }
            .save(&out_dir.join("model.json"))?;
        }
        Command::Eval {
            graph: args,
            embeddings,
            task,
            classifier,
            restrict_multi_predicate,
            standardize,
            method,
            dataset_name,
            seed,
            out,
            csv,
        } => {
            let g = graph(&args)?;
            let x = read_indexed_tsv(&embeddings)?;
            let mut cfg = EvalConfig {
                task,
                classifiers: classifier,
                restrict_multi_predicate,
                rng_seed: seed,
                ..Default::default()
            };
            cfg.logreg.standardize = standardize;
            let meta = ReportMetadata {
                method,
                dataset: dataset_name,
                dim: x.cols(),
                ..Default::default()
            };
            let report = evaluate(&x, &g, &cfg, meta)?;
            report.write_json(&out)?;
            if let Some(p) = csv {
                write(&p, &report.fold_csv())?;
            }
        }
        Command::Baseline {
            graph: args,
            dim,
            walks,
            walk_length,
            epochs,
            zero_diagonal,
            seed,
            out_dir,
        } => {
            let g = graph(&args)?;
            let cfg = Triple2vecConfig {
                walks_per_node: walks,
                walk_length,
                zero_diagonal,
                skipgram: SkipGramConfig {
                    dim,
                    epochs,
                    rng_seed: seed,
                    ..Default::default()
                },
            };
            let out = run_triple2vec(&g, &cfg)?;
            mkdir(&out_dir)?;
            write_corpus(&out_dir.join("walks.txt"), &out.corpus)?;
            write_indexed_tsv(&out_dir.join("triple_embeddings.tsv"), &out.embeddings)?;
        }
        Command::Compare { reports, out } => {
            let loaded = reports
                .iter()
                .map(|p| EvalReport::read_json(p))
                .collect::<ptss::Result<Vec<_>>>()?;
            let table = compare_report(&loaded)?;
            match out {
                Some(p) => {
                    write(&p, &table.to_csv())?;
                    write(&p.with_extension("json"), &serde_json::to_string_pretty(&table)?)?;
                }
                None => print!("{}", table.to_csv()),
            }
        }
        Command::RunAll { config, force } => {
            let cfg = ExperimentConfig::from_toml_file(&config)?;
            let manifest = run_pipeline(&cfg, RunOptions { force })?;
            for s in &manifest.stages {
                let state = if s.skipped { "skipped" } else { "done" };
                println!("{:<9} {state:<8} {:.2}s", s.name, s.seconds);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let stage = cli.command.stage();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Stage { stage, message }) => {
            eprintln!("error: stage `{stage}` failed: {message}");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: stage `{stage}` failed: {e}");
            ExitCode::FAILURE
        }
    }
}
