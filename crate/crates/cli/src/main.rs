use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

mod commands;
mod manifest;

use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "ehdiscrim", about = "Pre-train and fine-tune generator/discriminator text encoders", version = &*Box::leak(version_string().into_boxed_str()))]
struct Cli {
    /// Seed for every random stream; overrides config files.
    #[arg(long, global = true, env = "EHDISCRIM_SEED")]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Where to write the run manifest. Commands with an output directory
    /// default to `<output>/manifest.json`.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Only warnings and errors on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Command,
}

fn version_string() -> String {
    format!(
        "{} (checkpoint format {}, shard format {})",
        env!("CARGO_PKG_VERSION"),
        ehdiscrim_core::model::CHECKPOINT_VERSION,
        ehdiscrim_core::corpus::SHARD_FORMAT_VERSION
    )
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Layout {
    /// One document per line.
    Lines,
    /// Documents separated by blank lines.
    Blocks,
}

impl From<Layout> for ehdiscrim_core::corpus::DocLayout {
    fn from(l: Layout) -> Self {
        match l {
            Layout::Lines => Self::PerLine,
            Layout::Blocks => Self::BlankSeparated,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a WordPiece vocabulary.
    BuildVocab(BuildVocabArgs),
    /// Print the pieces of a text, comma-separated.
    Tokenize(TokenizeArgs),
    /// Deduplicate, chunk, and segment a corpus into shards.
    Preprocess(PreprocessArgs),
    /// Pre-train generator and discriminator on shards.
    Pretrain(PretrainArgs),
    /// Fine-tune a pre-trained discriminator on a task.
    Finetune(FinetuneArgs),
    /// Score predictions, or predict with a fine-tuned checkpoint first.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    /// Corpus file or directory.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 21128)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    min_count: u64,
    #[arg(long, value_enum, default_value = "lines")]
    layout: Layout,
}

#[derive(Args, Debug)]
pub struct TokenizeArgs {
    #[arg(long)]
    vocab: PathBuf,
    /// Text to tokenize; without it, each stdin line is tokenized.
    #[arg(long)]
    text: Option<String>,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Shard directory.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = ehdiscrim_core::corpus::MAX_LEN)]
    max_len: usize,
    #[arg(long, default_value_t = ehdiscrim_core::corpus::MIN_LEN)]
    min_len: usize,
    /// Word list for whole-word segmentation of Chinese text.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 4096)]
    shard_size: usize,
    #[arg(long, value_enum, default_value = "lines")]
    layout: Layout,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Shard directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// `key = value` file; omitted keys take the default values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// full, no-csp, no-mts, or no-csp-mts.
    #[arg(long)]
    ablation: Option<String>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop after this many steps in total.
    #[arg(long)]
    stop_at: Option<u64>,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[arg(long)]
    task: String,
    /// JSONL training records.
    #[arg(long)]
    train: PathBuf,
    /// JSONL records scored after every epoch and predicted at the end.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Pre-trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Relation schema (JSON), for relation extraction.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// One term per line, for term normalization.
    #[arg(long)]
    terminology: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    task: String,
    /// JSONL gold records.
    #[arg(long)]
    gold: PathBuf,
    /// JSONL predictions aligned with the gold records.
    #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
    pred: Option<PathBuf>,
    /// Fine-tuned checkpoint to predict the gold inputs with.
    #[arg(long, requires = "vocab")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Where to write predictions made from `--checkpoint`.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BuildVocab(_) => "build-vocab",
            Command::Tokenize(_) => "tokenize",
            Command::Preprocess(_) => "preprocess",
            Command::Pretrain(_) => "pretrain",
            Command::Finetune(_) => "finetune",
            Command::Eval(_) => "eval",
        }
    }

    fn default_manifest(&self) -> Option<PathBuf> {
        let dir: &Path = match self {
            Command::Preprocess(a) => &a.output,
            Command::Pretrain(a) => &a.output,
            Command::Finetune(a) => &a.output,
            _ => return None,
        };
        Some(dir.join("manifest.json"))
    }
}

/// `error[kind]: message` on one line.
fn error_line(e: &anyhow::Error) -> String {
    use ehdiscrim_core::Error as E;
    let kind = e
        .chain()
        .find_map(|c| c.downcast_ref::<E>())
        .map(|ce| match ce {
            E::Config(_) => "config",
            E::Format(_) | E::Json(_) => "format",
            E::Io(_) => "io",
            E::Vocab(_) => "vocab",
            E::Invalid(_) => "invalid",
            _ => "compute",
        })
        .or_else(|| e.chain().find_map(|c| c.downcast_ref::<std::io::Error>()).map(|_| "io"))
        .unwrap_or("runtime");
    let msg = format!("{e:#}").replace(['\n', '\r'], " ");
    format!("error[{kind}]: {msg}")
}

fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    if cli.threads == 0 {
        bail!("--threads must be at least 1");
    }
    let mut m = RunManifest::new(cli.cmd.name(), argv, cli.seed);
    let path = cli.manifest.clone().or_else(|| cli.cmd.default_manifest());
    let ctx = commands::Ctx { seed: cli.seed, threads: cli.threads };
    let outcome = match &cli.cmd {
        Command::BuildVocab(a) => commands::build_vocab(&ctx, a, &mut m, path),
        Command::Tokenize(a) => commands::tokenize(&ctx, a, &mut m, path),
        Command::Preprocess(a) => commands::preprocess(&ctx, a, &mut m, path),
        Command::Pretrain(a) => commands::pretrain(&ctx, a, &mut m, path),
        Command::Finetune(a) => commands::finetune(&ctx, a, &mut m, path),
        Command::Eval(a) => commands::eval(&ctx, a, &mut m, path),
    };
    let fin = m.finish(&outcome).context("writing manifest");
    outcome.and(fin)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let msg: Vec<&str> = text
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty() && !l.starts_with("tip:"))
                .collect();
            eprintln!("error[usage]: {}", msg.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .init();
    info!("ehdiscrim {}", version_string());
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
