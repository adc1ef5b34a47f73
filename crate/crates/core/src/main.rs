use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sensecnn::harness::{self, Mode};

#[derive(Parser)]
#[command(
    name = "sensecnn",
    version,
    about = "CNN sense classification experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stratified k-fold cross-validation per target word.
    Cv(Common),
    /// Train on a corpus, optionally evaluate on a test corpus, save checkpoints.
    Train(Common),
    /// Evaluate saved checkpoints on a corpus.
    Eval(Common),
    /// Lexical-sample word sense disambiguation.
    Wsd(Common),
    /// Feature-detector analysis of trained CNN filters.
    Analyze(Common),
    /// Region-size selection on an 80:20 split per word.
    Tune(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// cnn, mlp, majority or random.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// static or tuned.
    #[arg(long)]
    embedding_mode: Option<String>,
    /// over, under or none.
    #[arg(long)]
    balance: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(mode: Mode, args: Common) -> sensecnn::Result<()> {
    let mut spec = harness::load_spec(mode, &args.config)?;
    let here = std::path::Path::new("");
    let mut set = |key: &str, value: toml::Value| spec.set(key, &value, here);
    if let Some(seed) = args.seed {
        set("seed", toml::Value::Integer(seed as i64))?;
    }
    let strings = [
        ("model", args.model),
        ("embedding_mode", args.embedding_mode),
        ("balance", args.balance),
    ];
    for (key, value) in strings {
        if let Some(v) = value {
            set(key, toml::Value::String(v))?;
        }
    }
    if let Some(p) = args.embeddings {
        set("embeddings", toml::Value::String(p.display().to_string()))?;
    }
    if let Some(p) = args.out {
        set("out", toml::Value::String(p.display().to_string()))?;
    }
    let summary = harness::run(&spec)?;
    if let Some(report) = &summary.results.report {
        println!("micro accuracy {:.4}", report.micro);
    }
    println!(
        "wrote {} files to {}",
        summary.files.len(),
        spec.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Cv(a) => (Mode::Cv, a),
        Command::Train(a) => (Mode::Train, a),
        Command::Eval(a) => (Mode::Eval, a),
        Command::Wsd(a) => (Mode::Wsd, a),
        Command::Analyze(a) => (Mode::Analyze, a),
        Command::Tune(a) => (Mode::Tune, a),
    };
    match run(mode, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
