use std::path::Path;

use scalex_core::error::{Error, Result};
use scalex_core::report::{render_report, write_files, ReportInputs};

use super::{read_json, ATLAS_FILE, DELTAS_FILE, RANKINGS_FILE, VALIDATION_FILE};
use crate::config::RunConfig;

pub const ANALYSES: [&str; 4] = ["defaults", "rank", "atlas", "validate"];

fn load<T: serde::de::DeserializeOwned>(path: &Path, requested: bool) -> Result<Option<T>> {
    if path.exists() {
        read_json(path).map(Some)
    } else if requested {
        Err(Error::MissingAnalysis(format!("{} not found", path.display())))
    } else {
        Ok(None)
    }
}

/// Collects the outputs of earlier commands. Explicitly requested analyses must exist.
pub fn gather(cfg: &RunConfig) -> Result<ReportInputs> {
    let wanted = &cfg.report.analyses;
    if let Some(a) = wanted.iter().find(|a| !ANALYSES.contains(&a.as_str())) {
        return Err(Error::InvalidConfig(format!("unknown analysis `{a}`")));
    }
    let include = |a: &str| wanted.is_empty() || wanted.iter().any(|w| w == a);
    let requested = |a: &str| wanted.iter().any(|w| w == a);
    let mut inputs = ReportInputs::default();
    if include("defaults") {
        let dir = cfg.command_dir("defaults");
        if let Some(d) = load(&dir.join(DELTAS_FILE), requested("defaults"))? {
            inputs.deltas = d;
        }
        if let Some(c) = load(&dir.join("variant_correlations.json"), false)? {
            inputs.variant_correlations = c;
        }
    }
    if include("rank") {
        if let Some(r) = load(&cfg.command_dir("rank").join(RANKINGS_FILE), requested("rank"))? {
            inputs.rankings = r;
        }
    }
    if include("atlas") {
        inputs.atlas = load(&cfg.command_dir("atlas").join(ATLAS_FILE), requested("atlas"))?;
    }
    if include("validate") {
        inputs.validation = load(
            &cfg.command_dir("validate").join(VALIDATION_FILE),
            requested("validate"),
        )?;
    }
    Ok(inputs)
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let inputs = gather(cfg)?;
    if inputs.is_empty() {
        return Err(Error::MissingAnalysis(format!(
            "no finished analyses under {}",
            cfg.out.display()
        )));
    }
    let files = render_report(&inputs)?;
    let dir = cfg.command_dir("report");
    write_files(&dir, &files)?;
    cfg.write_into(&dir)?;
    for f in &files {
        println!("{}", dir.join(&f.name).display());
    }
    Ok(())
}
