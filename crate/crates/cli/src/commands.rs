use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use kgdecode_core::chain::{validate_chain, Chain};
use kgdecode_core::decoder::{DecodeConfig, TableSpec, TokenSearch};
use kgdecode_core::eval::{
    decode_instance, load_dataset, run_dataset, score_trace, AggregateReport, DatasetEntry, DecodeTrace,
    PromptTemplate, QaInstance, RunOptions, ScorerSpec,
};
use kgdecode_core::graph::{select_topk_connected, KnowledgeGraph, Triplet, WordOverlapScorer};
use kgdecode_core::vocab::Vocabulary;

use crate::{DecodeArgs, EvalArgs, SearchMode, SelectArgs, ValidateArgs};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    AllFailed(usize),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::AllFailed(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Data(m) => f.write_str(m),
            Failure::AllFailed(n) => write!(f, "decoding failed on all {n} instances"),
        }
    }
}

impl From<kgdecode_core::Error> for Failure {
    fn from(e: kgdecode_core::Error) -> Self {
        match e {
            kgdecode_core::Error::InvalidArgument(m) => Failure::Usage(m),
            other => Failure::Data(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_graph(path: &Path) -> Result<KnowledgeGraph> {
    KnowledgeGraph::load_path(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_err(e: io::Error) -> Failure {
    Failure::Data(format!("write failed: {e}"))
}

fn parse_scorer(spec: &str) -> Result<ScorerSpec> {
    if spec == "random" {
        return Ok(ScorerSpec::Random);
    }
    match spec.split_once(':') {
        Some(("table", path)) => Ok(ScorerSpec::Table(TableSpec::from_json(&read(Path::new(path))?)?)),
        Some(("scripted", path)) => Ok(ScorerSpec::Scripted(read(Path::new(path))?)),
        _ => Err(Failure::Usage(format!(
            "--scorer must be table:PATH, scripted:PATH or random, got `{spec}`"
        ))),
    }
}

pub fn decode(args: DecodeArgs) -> Result<()> {
    let config = DecodeConfig {
        beam_size: args.beam_size,
        max_steps: args.max_steps,
        max_unconstrained_tokens: args.max_unconstrained_tokens,
        seed: args.seed,
        token_search: match args.token_search {
            SearchMode::Beam => TokenSearch::Beam,
            SearchMode::Exact => TokenSearch::Exact,
        },
        length_normalize: false,
    };
    config.validate()?;
    let scorer = parse_scorer(&args.scorer)?;
    let template = match &args.template {
        Some(p) => PromptTemplate::new(&read(p)?)?,
        None => PromptTemplate::default(),
    };
    let vocab = match &args.vocab {
        Some(p) => Some(Vocabulary::load_path(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let options = RunOptions { config, template, vocab };
    let mut out = output(args.out.as_ref())?;

    if let Some(graph_path) = &args.graph {
        let instance = QaInstance {
            id: "cli".into(),
            question: args.question.clone().unwrap_or_default(),
            query_entities: args.entity.clone(),
            answers: args.answer.clone(),
            graph: Arc::new(load_graph(graph_path)?),
            gold_chain: None,
        };
        let mut trace = decode_instance(&instance, &scorer, &options)?;
        if instance.answers.is_empty() {
            trace.metrics.hits_at_1 = None;
        }
        writeln!(out, "{}", trace.to_json_line()).map_err(write_err)?;
        return out.flush().map_err(write_err);
    }

    let path = args.dataset.as_ref().expect("clap requires --graph or --dataset");
    let entries = load_dataset(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let (traces, report) = run_dataset(&entries, &scorer, &options)?;
    for t in &traces {
        writeln!(out, "{}", t.to_json_line()).map_err(write_err)?;
    }
    out.flush().map_err(write_err)?;
    eprintln!("{}", summary(&report));
    if report.decoded == 0 {
        return Err(Failure::AllFailed(report.instances));
    }
    Ok(())
}

fn summary(r: &AggregateReport) -> String {
    let f1 = r.triplet_f1.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    format!(
        "instances {} decoded {} failed {} | hits@1 {:.4} triplet-f1 {f1} ill-rate {:.4}",
        r.instances, r.decoded, r.failed, r.hits_at_1, r.ill_triplet_rate
    )
}

fn read_triplet_rows(path: &Path, extra: usize) -> Result<Vec<(Triplet, Vec<String>)>> {
    let file = fs::File::open(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 + extra {
            return Err(Failure::Data(format!(
                "{}:{}: expected {} tab-separated fields, found {}",
                path.display(),
                i + 1,
                3 + extra,
                fields.len()
            )));
        }
        let t = Triplet::new(fields[0], fields[1], fields[2])
            .map_err(|e| Failure::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        rows.push((t, fields[3..].iter().map(|s| s.to_string()).collect()));
    }
    Ok(rows)
}

pub fn validate(args: ValidateArgs) -> Result<()> {
    let graph = load_graph(&args.graph)?;
    let chain = Chain::new(read_triplet_rows(&args.chain, 0)?.into_iter().map(|(t, _)| t).collect());
    let report = validate_chain(&chain, &graph, &args.entity);
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let entries = load_dataset(&args.dataset).map_err(|e| Failure::Data(format!("{}: {e}", args.dataset.display())))?;
    let instances: HashMap<&str, &QaInstance> = entries
        .iter()
        .filter_map(|e| match e {
            DatasetEntry::Instance(inst) => Some((inst.id.as_str(), inst)),
            DatasetEntry::Invalid { .. } => None,
        })
        .collect();

    let text = read(&args.traces)?;
    let mut traces = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut trace: DecodeTrace = serde_json::from_str(line)
            .map_err(|e| Failure::Data(format!("{}:{}: {e}", args.traces.display(), i + 1)))?;
        if trace.error.is_none() {
            match instances.get(trace.instance_id.as_str()) {
                Some(inst) => trace.metrics = score_trace(&trace, inst),
                None => {
                    log::warn!("trace {} has no dataset instance", trace.instance_id);
                    continue;
                }
            }
        }
        traces.push(trace);
    }
    if traces.is_empty() {
        return Err(Failure::Data("no traces to evaluate".into()));
    }
    let report = AggregateReport::from_traces(&traces);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        return Ok(());
    }
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!("{:<24} {:>8} {:>10} {:>9}", "instance", "hits@1", "triplet-f1", "ill-rate");
    for t in &traces {
        if let Some(err) = &t.error {
            println!("{:<24} error: {err}", t.instance_id);
            continue;
        }
        let m = &t.metrics;
        println!(
            "{:<24} {:>8} {:>10} {:>9}",
            t.instance_id,
            fmt(m.hits_at_1),
            fmt(m.triplet_f1),
            fmt(m.ill_triplet_rate)
        );
    }
    println!("{}", summary(&report));
    Ok(())
}

pub fn select_topk(args: SelectArgs) -> Result<()> {
    let graph = load_graph(&args.graph)?;
    let selected = match &args.scores {
        None => select_topk_connected(&graph, &args.entity, &WordOverlapScorer, &args.question, args.k)?,
        Some(path) => {
            let mut table = HashMap::new();
            for (t, rest) in read_triplet_rows(path, 1)? {
                let score: f64 = rest[0]
                    .trim()
                    .parse()
                    .map_err(|_| Failure::Data(format!("{}: bad score `{}` for {t}", path.display(), rest[0])))?;
                table.insert(t, score);
            }
            let lookup = |t: &Triplet, _: &str| table.get(t).copied().unwrap_or(f64::NEG_INFINITY);
            let missing = graph.triplets().iter().filter(|t| !table.contains_key(*t)).count();
            if missing > 0 {
                return Err(Failure::Data(format!("{}: {missing} graph triplets have no score", path.display())));
            }
            select_topk_connected(&graph, &args.entity, &lookup, &args.question, args.k)?
        }
    };
    let mut out = output(args.out.as_ref())?;
    out.write_all(selected.to_tsv().as_bytes()).map_err(write_err)?;
    out.flush().map_err(write_err)
}
