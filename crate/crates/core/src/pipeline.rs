//! End-to-end wiring: protocol text to structured, completed and linked
//! programs plus a simulation report, and the artifact files for each stage.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::dsl::{validate_program, DslError, DslSpec, ValidationReport};
use crate::eval::to_canonical;
use crate::execution::{make_model, run_report, whatif, Declarations, ExecutionError, InstructionEdit, SimulationReport};
use crate::extractor::{ExtractorError, ExtractorGateway};
use crate::flow::{
    analyze_flow, complete_parameters, complete_preconditions, complete_termination, link_program, FlowError, ReagentFlowGraph,
};
use crate::pdg::{build_pdg, to_dot, to_json, Pdg, PdgError};
use crate::preprocess::{preprocess, MatchConfig};
use crate::program::{DslProgram, ListingError};
use crate::synthesis::{detect_control_flow, synthesize, SynthesisConfig, SynthesisError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("dsl stage: {0}")]
    Dsl(#[from] DslError),
    #[error("preprocess stage: {0}")]
    Preprocess(ExtractorError),
    #[error("synthesis stage: {0}")]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Pdg(#[from] PdgError),
    #[error(transparent)]
    Execution(#[from] ExecutionError),
    #[error("input: {0}")]
    Listing(#[from] ListingError),
    #[error("io: {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.display().to_string(), source }
    }
}

/// Knobs of one run besides the DSL and the extractor.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub seed: u64,
    pub synthesis: SynthesisConfig,
    pub matching: MatchConfig,
    pub declarations: Declarations,
    pub whatif: Option<InstructionEdit>,
}

/// The three program stages and what was derived from the last one.
#[derive(Debug, Clone)]
pub struct Translation {
    /// After synthesis and control-flow detection.
    pub structured: DslProgram,
    /// After linking and completion.
    pub completed: DslProgram,
    pub validation: ValidationReport,
    pub flow: ReagentFlowGraph,
    pub pdg: Pdg,
    pub report: SimulationReport,
}

impl Translation {
    /// Fully satisfied, flow accepted and syntax verified.
    pub fn is_clean(&self) -> bool {
        self.report.satisfied && self.flow.accept && self.validation.is_verified()
    }
}

pub fn structure(text: &str, spec: &DslSpec, gateway: &ExtractorGateway, cfg: &RunConfig) -> Result<DslProgram, PipelineError> {
    let pre = preprocess(text, spec, gateway, &cfg.matching).map_err(PipelineError::Preprocess)?;
    let synthesis_cfg = SynthesisConfig { seed: cfg.seed, ..cfg.synthesis.clone() };
    let syn = synthesize(&pre.sequence, spec, &synthesis_cfg)?;
    let mut program = detect_control_flow(&syn.sequence, syn.program, spec);
    program.product = pre.protocol.metadata.product.clone();
    Ok(program)
}

pub fn complete(structured: &DslProgram, spec: &DslSpec, gateway: &ExtractorGateway) -> Result<DslProgram, PipelineError> {
    let linked = link_program(structured, spec, gateway)?;
    let linked = complete_preconditions(&linked, spec, gateway)?;
    let linked = complete_parameters(&linked, spec, gateway);
    Ok(complete_termination(&linked, spec))
}

/// Flow, graph and simulation of an already completed program.
pub fn analyze(
    program: &DslProgram,
    spec: &DslSpec,
    gateway: &ExtractorGateway,
    cfg: &RunConfig,
) -> Result<(ReagentFlowGraph, Pdg, SimulationReport), PipelineError> {
    let flow = analyze_flow(program, spec, gateway)?;
    let pdg = build_pdg(program, &flow, &spec.name, cfg.seed)?;
    let model = make_model(program, &pdg, &cfg.declarations.rules, &cfg.declarations.resources, spec)?;
    let mut report = run_report(&model, cfg.seed)?;
    if let Some(edit) = &cfg.whatif {
        report.whatif = Some(whatif(&model, edit, cfg.seed)?);
    }
    Ok((flow, pdg, report))
}

pub fn translate(text: &str, spec: &DslSpec, gateway: &ExtractorGateway, cfg: &RunConfig) -> Result<Translation, PipelineError> {
    let structured = structure(text, spec, gateway, cfg)?;
    let completed = complete(&structured, spec, gateway)?;
    let validation = validate_program(&completed, spec);
    let (flow, pdg, report) = analyze(&completed, spec, gateway, cfg)?;
    Ok(Translation { structured, completed, validation, flow, pdg, report })
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

/// Which artifact encodings to write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub json: bool,
    pub dot: bool,
    pub text: bool,
}

impl Default for Formats {
    fn default() -> Self {
        Formats { json: true, dot: true, text: true }
    }
}

/// File name to contents for every artifact of a translation.
pub fn artifacts(t: &Translation, formats: Formats) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    out.insert("structured.dsl".into(), t.structured.to_listing());
    out.insert("completed.dsl".into(), t.completed.to_listing());
    if formats.json {
        out.insert("canonical.json".into(), pretty(&to_canonical(&t.completed)));
        out.insert("validation.json".into(), pretty(&t.validation));
        out.insert("flow.json".into(), pretty(&t.flow));
        out.insert("pdg.json".into(), format!("{}\n", to_json(&t.pdg)));
        out.insert("report.json".into(), format!("{}\n", t.report.to_json()));
    }
    if formats.dot {
        out.insert("pdg.dot".into(), to_dot(&t.pdg));
    }
    if formats.text {
        let mut text = t.report.to_text();
        for v in t.validation.violations() {
            text.push_str(&format!("syntax: {v}\n"));
        }
        if !t.flow.accept {
            text.push_str(&format!("flow: rejected, dangling {}\n", t.flow.dangling.join(", ")));
        }
        out.insert("report.txt".into(), text);
    }
    out
}

pub fn write_artifacts(dir: &Path, files: &BTreeMap<String, String>) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| PipelineError::io(&path, e))?;
    }
    Ok(())
}
