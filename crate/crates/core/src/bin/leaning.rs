use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use leaning::classifier::LinearModel;
use leaning::corpus::{load_posts, Format, Post};
use leaning::ingest::parse_source_spec;
use leaning::pipeline::{
    predict_posts, run_agree, run_build_dataset, run_curve, run_eval, run_ingest, run_label, run_loo, run_pipeline,
    run_synth, run_train, run_writer_shift, unix_now, write_report, RunConfig, RunDir, RunManifest, StageIo,
};
use leaning::{Error, Result};

#[derive(Parser)]
#[command(name = "leaning", version, about = "Like-based political affiliation labeling and classification")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "LEANING_CONFIG")]
    config: Option<PathBuf>,

    /// Global seed; stage seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Data source, `file:<dir>`.
    #[arg(long, global = true, env = "LEANING_SOURCE")]
    source: Option<String>,

    /// Seed registry (politicians, priors, topic keywords).
    #[arg(long, visible_alias = "topics", global = true, env = "LEANING_SEEDS")]
    seeds: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "LEANING_OUT", default_value = "out")]
    out: PathBuf,

    /// Dataset split format.
    #[arg(long, global = true, default_value = "csv", value_parser = parse_format)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic source directory into --out.
    Synth,
    /// Collect likes and posts from --source.
    Ingest,
    /// Assign heuristic labels from like tallies.
    Label,
    /// Annotator agreement and heuristic-vs-manual accuracy.
    Agree {
        #[arg(long, env = "LEANING_ANNOTATIONS")]
        annotations: Option<PathBuf>,
    },
    /// Filter, label and split posts into the dataset files.
    BuildDataset,
    /// Train the classifier on the train/validation splits.
    Train,
    /// Classify posts from a dataset file or literal texts.
    Predict {
        #[arg(long, env = "LEANING_MODEL")]
        model: Option<PathBuf>,
        /// Dataset file (csv or jsonl, by extension).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Literal texts to classify.
        #[arg(long)]
        text: Vec<String>,
    },
    /// Post- and profile-level scores on the test splits.
    Eval,
    /// k-post aggregation curve on the manual-test users.
    Curve,
    /// Leave-one-topic-out folds with in-domain controls.
    Loo,
    /// Profile-level scores on politicians' own posts.
    WriterShift,
    /// Run every stage from ingest to writer-shift.
    Pipeline,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Ingest => "ingest",
            Command::Label => "label",
            Command::Agree { .. } => "agree",
            Command::BuildDataset => "build-dataset",
            Command::Train => "train",
            Command::Predict { .. } => "predict",
            Command::Eval => "eval",
            Command::Curve => "curve",
            Command::Loo => "loo",
            Command::WriterShift => "writer-shift",
            Command::Pipeline => "pipeline",
        }
    }
}

fn parse_format(s: &str) -> std::result::Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn source_dir(cli: &Cli) -> Result<PathBuf> {
    let spec = cli
        .source
        .as_deref()
        .ok_or_else(|| Error::Config("--source file:<dir> is required".into()))?;
    parse_source_spec(spec)
}

fn print(s: &str) {
    let mut out = io::stdout().lock();
    let _ = out.write_all(s.as_bytes());
    if !s.ends_with('\n') {
        let _ = out.write_all(b"\n");
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap_or_default()
}

fn predict(model_path: &Path, input: Option<&Path>, texts: &[String]) -> Result<()> {
    let model = LinearModel::load(model_path)?;
    let mut posts: Vec<Post> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Post::new(format!("text-{i}"), "", t.clone()))
        .collect();
    if let Some(path) = input {
        let format = Format::from_path(path)
            .ok_or_else(|| Error::Config(format!("{}: unknown file extension", path.display())))?;
        let loaded = load_posts(path, format)?;
        for e in &loaded.row_errors {
            log::warn!("{} line {}: {}", path.display(), e.line, e.message);
        }
        posts.extend(loaded.posts);
    }
    let mut out = io::stdout().lock();
    for row in predict_posts(&model, &posts) {
        serde_json::to_writer(&mut out, &row)?;
        let _ = out.write_all(b"\n");
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    cfg = cfg.with_seed(seed);
    let run = RunDir::new(&cli.out, cli.format);
    let started = unix_now();
    let name = cli.command.name();
    info!("{name}: seed {seed}, out {}", cli.out.display());

    let io: StageIo = match &cli.command {
        Command::Synth => {
            let (s, io) = run_synth(&cfg, &cli.out)?;
            print(&json(&s));
            io
        }
        Command::Ingest => {
            let (s, io) = run_ingest(&source_dir(cli)?, cli.seeds.as_deref(), &run)?;
            write_report(&run, name, &s, None)?;
            print(&json(&s));
            io
        }
        Command::Label => {
            let (s, io) = run_label(&cfg, &run)?;
            write_report(&run, name, &s, None)?;
            print(&json(&s));
            io
        }
        Command::Agree { annotations } => {
            let (r, io) = run_agree(&run, annotations.as_deref())?;
            let table = r.to_table();
            write_report(&run, name, &r, Some(&table))?;
            print(&table);
            io
        }
        Command::BuildDataset => {
            let (s, io) = run_build_dataset(&cfg, &run)?;
            write_report(&run, name, &s, None)?;
            print(&json(&s));
            io
        }
        Command::Train => {
            let (m, io) = run_train(&cfg, &run)?;
            write_report(&run, name, &m, None)?;
            print(&format!(
                "epochs run {}, best epoch {}, best validation micro-F1 {:.4}",
                m.epochs_run, m.best_epoch, m.best_valid_micro_f1
            ));
            io
        }
        Command::Predict { model, input, text } => {
            let model = model.clone().unwrap_or_else(|| run.model());
            predict(&model, input.as_deref(), text)?;
            let mut inputs = vec![model];
            inputs.extend(input.clone());
            StageIo {
                inputs,
                outputs: Vec::new(),
            }
        }
        Command::Eval => {
            let (s, io) = run_eval(&run)?;
            let table = s.to_table();
            write_report(&run, name, &s, Some(&table))?;
            print(&table);
            io
        }
        Command::Curve => {
            let (c, io) = run_curve(&cfg, &run)?;
            let csv = c.to_csv();
            write_report(&run, name, &c, Some(&csv))?;
            print(&csv);
            io
        }
        Command::Loo => {
            let (l, io) = run_loo(&cfg, &run)?;
            let table = l.to_table();
            write_report(&run, name, &l, Some(&table))?;
            print(&table);
            io
        }
        Command::WriterShift => {
            let (r, io) = run_writer_shift(&run)?;
            let table = r.to_table();
            write_report(&run, name, &r, Some(&table))?;
            print(&table);
            io
        }
        Command::Pipeline => {
            let (s, io) = run_pipeline(&cfg, &source_dir(cli)?, cli.seeds.as_deref(), &run)?;
            print(&s.eval.to_table());
            if let Some(f1) = s.user_level_micro_f1 {
                print(&format!("user-level micro-F1 (manual-test): {f1:.4}"));
            }
            io
        }
    };

    let mut manifest = RunManifest::new(name, &cfg, started);
    manifest.inputs = RunManifest::digest_all(&io.inputs);
    manifest.outputs = RunManifest::digest_all(&io.outputs);
    manifest.finished_at = unix_now();
    let path = manifest.write(&run)?;
    info!("manifest written to {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
