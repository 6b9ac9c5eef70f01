//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

pub mod oracles;

use std::path::PathBuf;

use protoflow::dsl::{load_dsl_spec, DslSpec};
use protoflow::program::DslProgram;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn spec(name: &str) -> DslSpec {
    load_dsl_spec(fixture(&format!("specs/{name}.toml"))).unwrap()
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap()
}

/// Every corpus listing as (file name, spec, program), sorted by name.
pub fn corpus() -> Vec<(String, DslSpec, DslProgram)> {
    let mut out = Vec::new();
    for spec_name in ["chemistry", "cooking"] {
        let spec = spec(spec_name);
        let mut files: Vec<PathBuf> = std::fs::read_dir(fixture(&format!("corpus/{spec_name}")))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "listing"))
            .collect();
        files.sort();
        for f in files {
            let program = DslProgram::from_listing(&std::fs::read_to_string(&f).unwrap()).unwrap();
            out.push((format!("{spec_name}/{}", f.file_name().unwrap().to_string_lossy()), spec.clone(), program));
        }
    }
    out
}
