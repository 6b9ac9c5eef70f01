//! Command-line front end. Exit codes: 0 satisfied, 2 violations, 1 error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dsl::{load_dsl_spec, DslSpec};
use crate::eval::{evaluate_dirs, Metric};
use crate::execution::{Declarations, InstructionEdit};
use crate::extractor::{Cassette, ExtractorGateway, ServiceConfig, Transport};
use crate::flow::ReagentFlowGraph;
use crate::pdg::{from_json, to_dot, to_json};
use crate::pipeline::{analyze, artifacts, translate, write_artifacts, Formats, PipelineError, RunConfig};
use crate::program::DslProgram;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATIONS: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "protoflow", version, about = "Translate natural-language protocols into checked DSL programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Protocol text to structured, completed and linked programs plus a simulation report.
    Translate {
        #[arg(required = true)]
        protocols: Vec<PathBuf>,
        #[command(flatten)]
        opts: Options,
    },
    /// Reagent-flow analysis of a completed listing.
    Flow {
        program: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Simulate a completed listing against resources and safety rules.
    Simulate {
        program: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Protocol dependence graph of a listing, or re-render a saved `pdg.json`.
    Graph {
        input: PathBuf,
        #[command(flatten)]
        opts: Options,
    },
    /// Score prediction records against references, matched by file name.
    Eval {
        predictions: PathBuf,
        references: PathBuf,
        #[arg(long, default_value = "exact")]
        metric: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtractorKind {
    Rule,
    Service,
    Fallback,
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// DSL spec (TOML).
    #[arg(long)]
    pub dsl: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "rule")]
    pub extractor: ExtractorKind,
    /// Safety rules file; merged with --resources.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Container and reagent declarations.
    #[arg(long)]
    pub resources: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated subset of json, dot, text.
    #[arg(long, value_delimiter = ',')]
    pub format: Vec<String>,
    /// `set I slot=value`, `delete I` or `insert I <instruction>`.
    #[arg(long)]
    pub whatif: Option<String>,
    /// Maximum extraction service requests per run.
    #[arg(long, default_value_t = 500)]
    pub budget: usize,
    /// Replay service replies from this cassette; records into it when it does not exist yet.
    #[arg(long)]
    pub cassette: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Usage(String),
}

impl From<crate::dsl::DslError> for CliError {
    fn from(e: crate::dsl::DslError) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl From<crate::execution::ExecutionError> for CliError {
    fn from(e: crate::execution::ExecutionError) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl Options {
    fn formats(&self, default: Formats) -> Result<Formats, CliError> {
        if self.format.is_empty() {
            return Ok(default);
        }
        let mut f = Formats { json: false, dot: false, text: false };
        for name in &self.format {
            match name.trim() {
                "json" => f.json = true,
                "dot" => f.dot = true,
                "text" => f.text = true,
                other => return Err(CliError::Usage(format!("unknown format `{other}` (json, dot, text)"))),
            }
        }
        Ok(f)
    }

    fn spec(&self) -> Result<DslSpec, CliError> {
        let path = self.dsl.as_ref().ok_or_else(|| CliError::Usage("--dsl is required".into()))?;
        Ok(load_dsl_spec(path)?)
    }

    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut declarations = Declarations::default();
        for path in [&self.resources, &self.rules].into_iter().flatten() {
            declarations.merge(Declarations::load(path)?);
        }
        let whatif = self.whatif.as_deref().map(str::parse::<InstructionEdit>).transpose()?;
        Ok(RunConfig { seed: self.seed, declarations, whatif, ..Default::default() })
    }

    fn gateway(&self) -> Result<(ExtractorGateway, Option<Arc<Cassette>>), CliError> {
        if self.extractor == ExtractorKind::Rule {
            return Ok((ExtractorGateway::rule().with_budget(self.budget), None));
        }
        let fallback = self.extractor == ExtractorKind::Fallback;
        let config = ServiceConfig::from_env();
        let cassette = match &self.cassette {
            Some(p) if p.exists() => Some(Arc::new(Cassette::load(p).map_err(|e| CliError::Pipeline(PipelineError::io(p, e)))?)),
            Some(p) => {
                require_endpoint(&config)?;
                Some(Arc::new(Cassette::record(Arc::new(crate::extractor::HttpTransport::new(config.clone())), p.clone())))
            }
            None => None,
        };
        let gateway = match &cassette {
            Some(c) => ExtractorGateway::service(c.clone() as Arc<dyn Transport>, config, fallback),
            None => {
                require_endpoint(&config)?;
                ExtractorGateway::http(config, fallback)
            }
        };
        Ok((gateway.with_budget(self.budget), cassette))
    }
}

fn require_endpoint(config: &ServiceConfig) -> Result<(), CliError> {
    if config.endpoint.is_empty() {
        return Err(CliError::Usage("extractor: PROTOFLOW_LLM_ENDPOINT is not set".into()));
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Pipeline(PipelineError::io(path, e)))
}

fn read_listing(path: &Path) -> Result<DslProgram, CliError> {
    Ok(DslProgram::from_listing(&read(path)?).map_err(PipelineError::from)?)
}

fn emit(out: &Option<PathBuf>, files: &BTreeMap<String, String>, stdout_key: &str) -> Result<(), CliError> {
    match out {
        Some(dir) => write_artifacts(dir, files)?,
        None => {
            if let Some(body) = files.get(stdout_key).or_else(|| files.values().next()) {
                print!("{body}");
            }
        }
    }
    Ok(())
}

fn flow_text(flow: &ReagentFlowGraph) -> String {
    let mut out = format!("accept: {}\n", flow.accept);
    for r in &flow.reagents {
        let killed = r.killed_at.map_or("-".to_string(), |k| k.to_string());
        out.push_str(&format!("reagent {} defined {} killed {}\n", r.id, r.defined_at, killed));
    }
    for (a, b) in &flow.dependences {
        out.push_str(&format!("depends {a} -> {b}\n"));
    }
    for d in &flow.dangling {
        out.push_str(&format!("dangling {d}\n"));
    }
    out
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "protocol".into())
}

fn cmd_translate(protocols: &[PathBuf], opts: &Options) -> Result<i32, CliError> {
    let spec = opts.spec()?;
    let cfg = opts.run_config()?;
    let formats = opts.formats(Formats::default())?;
    let (gateway, cassette) = opts.gateway()?;
    let texts: Vec<String> = protocols.iter().map(|p| read(p)).collect::<Result<_, _>>()?;
    // one pipeline per protocol; results printed in argument order
    type Outcome = Result<(bool, BTreeMap<String, String>), PipelineError>;
    let results: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = texts
            .iter()
            .map(|text| {
                let (spec, cfg, gateway) = (&spec, &cfg, &gateway);
                s.spawn(move || translate(text, spec, gateway, cfg).map(|t| (t.is_clean(), artifacts(&t, formats))))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("pipeline thread panicked")).collect()
    });
    if let Some(c) = cassette {
        c.save().map_err(|e| CliError::Usage(format!("cassette: {e}")))?;
    }
    let mut code = EXIT_OK;
    for (path, result) in protocols.iter().zip(results) {
        let (clean, files) = result?;
        let dir = opts.out.as_ref().map(|o| if protocols.len() > 1 { o.join(stem(path)) } else { o.clone() });
        if protocols.len() > 1 && dir.is_none() {
            println!("== {}", path.display());
        }
        emit(&dir, &files, "report.txt")?;
        if !clean {
            code = EXIT_VIOLATIONS;
        }
    }
    Ok(code)
}

fn cmd_flow(program: &Path, opts: &Options) -> Result<i32, CliError> {
    let spec = opts.spec()?;
    let (gateway, _) = opts.gateway()?;
    let p = read_listing(program)?;
    let flow = crate::flow::analyze_flow(&p, &spec, &gateway).map_err(PipelineError::from)?;
    let formats = opts.formats(Formats { json: false, dot: false, text: true })?;
    let mut files = BTreeMap::new();
    if formats.text {
        files.insert("flow.txt".to_string(), flow_text(&flow));
    }
    if formats.json {
        files.insert("flow.json".to_string(), serde_json::to_string_pretty(&flow).expect("flow serializes") + "\n");
    }
    emit(&opts.out, &files, "flow.txt")?;
    Ok(if flow.accept { EXIT_OK } else { EXIT_VIOLATIONS })
}

fn cmd_simulate(program: &Path, opts: &Options) -> Result<i32, CliError> {
    let spec = opts.spec()?;
    let cfg = opts.run_config()?;
    let (gateway, _) = opts.gateway()?;
    let p = read_listing(program)?;
    let (_, _, report) = analyze(&p, &spec, &gateway, &cfg)?;
    let formats = opts.formats(Formats { json: false, dot: false, text: true })?;
    let mut files = BTreeMap::new();
    if formats.text {
        files.insert("report.txt".to_string(), report.to_text());
    }
    if formats.json {
        files.insert("report.json".to_string(), report.to_json() + "\n");
    }
    emit(&opts.out, &files, "report.txt")?;
    Ok(if report.satisfied { EXIT_OK } else { EXIT_VIOLATIONS })
}

fn cmd_graph(input: &Path, opts: &Options) -> Result<i32, CliError> {
    let pdg = if input.extension().is_some_and(|x| x == "json") {
        from_json(&read(input)?).map_err(PipelineError::from)?
    } else {
        let spec = opts.spec()?;
        let cfg = opts.run_config()?;
        let (gateway, _) = opts.gateway()?;
        let p = read_listing(input)?;
        analyze(&p, &spec, &gateway, &cfg)?.1
    };
    let formats = opts.formats(Formats { json: false, dot: true, text: false })?;
    let mut files = BTreeMap::new();
    if formats.dot {
        files.insert("pdg.dot".to_string(), to_dot(&pdg));
    }
    if formats.json {
        files.insert("pdg.json".to_string(), to_json(&pdg) + "\n");
    }
    if formats.text {
        let report = crate::pdg::check_duality(&pdg);
        let mut text = format!(
            "ops {} edges {} reagents {} duality {}\n",
            pdg.op_nodes.len(),
            pdg.op_edges.len(),
            pdg.reagent_nodes.len(),
            report.holds()
        );
        for p in &report.problems {
            text.push_str(&format!("problem: {p}\n"));
        }
        files.insert("pdg.txt".to_string(), text);
    }
    emit(&opts.out, &files, "pdg.dot")?;
    Ok(EXIT_OK)
}

fn cmd_eval(predictions: &Path, references: &Path, metric: &str, out: &Option<PathBuf>) -> Result<i32, CliError> {
    let metric: Metric = metric.parse().map_err(|e: crate::eval::EvalError| CliError::Usage(e.to_string()))?;
    let table = evaluate_dirs(predictions, references, metric).map_err(|e| CliError::Usage(e.to_string()))?;
    let files = BTreeMap::from([("eval.txt".to_string(), table.to_text()), ("eval.csv".to_string(), table.to_csv())]);
    emit(out, &files, "eval.txt")?;
    Ok(EXIT_OK)
}

pub fn run(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Translate { protocols, opts } => cmd_translate(protocols, opts),
        Command::Flow { program, opts } => cmd_flow(program, opts),
        Command::Simulate { program, opts } => cmd_simulate(program, opts),
        Command::Graph { input, opts } => cmd_graph(input, opts),
        Command::Eval { predictions, references, metric, out } => cmd_eval(predictions, references, metric, out),
    }
}

/// Parse arguments, run, report errors on stderr, return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
