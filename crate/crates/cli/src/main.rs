//! `kgdecode`: decode, validate, evaluate and filter knowledge graphs from
//! the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 every instance
//! failed to decode.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "kgdecode", version, about = "Knowledge-graph constrained decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decode one question over a graph, or every instance of a dataset.
    Decode(DecodeArgs),
    /// Check a reasoning chain for well-formedness against a graph.
    Validate(ValidateArgs),
    /// Score decode traces against a dataset.
    Eval(EvalArgs),
    /// Keep the top-k question-relevant triplets, connected to the query entities.
    SelectTopk(SelectArgs),
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Graph TSV (head, relation, tail per line); needs --question and --entity.
    #[arg(long, conflicts_with = "dataset", requires_all = ["question", "entity"])]
    graph: Option<PathBuf>,
    /// JSON Lines dataset.
    #[arg(long, required_unless_present = "graph")]
    dataset: Option<PathBuf>,
    #[arg(long)]
    question: Option<String>,
    /// Query entity; repeat for several.
    #[arg(long)]
    entity: Vec<String>,
    /// Gold answer for single-graph mode; repeat for several.
    #[arg(long)]
    answer: Vec<String>,
    #[arg(long, default_value_t = 1)]
    beam_size: usize,
    #[arg(long, default_value_t = 4)]
    max_steps: usize,
    #[arg(long, default_value_t = kgdecode_core::decoder::DEFAULT_MAX_UNCONSTRAINED_TOKENS)]
    max_unconstrained_tokens: usize,
    /// `table:PATH` (JSON logit table), `scripted:PATH` (text to replay) or `random`.
    #[arg(long)]
    scorer: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SearchMode::Beam)]
    token_search: SearchMode,
    /// Trace output (JSON Lines); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Prompt template with {graph} and {question} slots.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Fixed vocabulary, one token per line, the three markers first.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SearchMode {
    Beam,
    Exact,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Chain TSV, one step per line.
    #[arg(long)]
    chain: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, required = true)]
    entity: Vec<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Print the aggregate as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    question: String,
    #[arg(long, required = true)]
    entity: Vec<String>,
    #[arg(long, default_value_t = 120)]
    k: usize,
    /// Precomputed similarities: head, relation, tail, score per line.
    /// Word overlap with the question is used when omitted.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Decode(args) => commands::decode(args),
        Command::Validate(args) => commands::validate(args),
        Command::Eval(args) => commands::eval(args),
        Command::SelectTopk(args) => commands::select_topk(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("kgdecode: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
