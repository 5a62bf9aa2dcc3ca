use serde::Serialize;

use scalex_core::atlas::ConceptAtlas;
use scalex_core::conditioning::{
    compose_direction, conditioned_generate, generate_baseline, ConditioningMode, ConditioningRun, DirectionTerm,
    StoreResolver,
};
use scalex_core::error::{Error, Result};
use scalex_core::extraction::BackendMode;
use scalex_core::store::VectorStore;

use super::{prepare_dir, prompt_spec, read_json, write_json, ATLAS_FILE};
use crate::config::RunConfig;

pub const IMAGE_FILE: &str = "conditioned.png";
pub const BASELINE_FILE: &str = "baseline.png";

#[derive(Debug, Serialize)]
struct ConditionSummary<'a> {
    prompt: &'a str,
    seed: u64,
    terms: &'a [DirectionTerm],
    scale: f64,
    mode: ConditioningMode,
    direction_norm: f64,
    steps_executed: usize,
    forward_passes: usize,
    injected_steps: Vec<usize>,
    image: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<&'a str>,
}

fn load_atlas(cfg: &RunConfig) -> Result<Option<ConceptAtlas>> {
    match &cfg.condition.atlas {
        Some(p) => read_json(p).map(Some),
        None => {
            let p = cfg.command_dir("atlas").join(ATLAS_FILE);
            if p.exists() {
                read_json(&p).map(Some)
            } else {
                Ok(None)
            }
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let c = &cfg.condition;
    if c.terms.is_empty() {
        return Err(Error::InvalidConfig("no direction terms given".into()));
    }
    let terms = c
        .terms
        .iter()
        .map(|t| t.parse::<DirectionTerm>())
        .collect::<Result<Vec<_>>>()?;
    let store = VectorStore::open(&cfg.store)?;
    let atlas = load_atlas(cfg)?;
    let resolver = StoreResolver {
        store: &store,
        atlas: atlas.as_ref(),
    };
    let direction = compose_direction(&terms, &resolver)?;
    let backend_mode = match c.mode {
        ConditioningMode::Lcm => BackendMode::Lcm,
        ConditioningMode::LdmTransfer => BackendMode::Ldm,
    };
    let handle = super::backend(cfg, backend_mode)?;
    let prompt = prompt_spec(cfg, &c.prompt, c.seed)?;
    let dir = prepare_dir(cfg, "condition")?;

    let norm = direction.norm();
    let mut run = ConditioningRun::new(prompt.clone(), direction, c.scale, c.mode);
    run.steps = c.steps;
    run.inject_steps = c.inject_steps.clone();
    run.output_image_path = Some(dir.join(IMAGE_FILE));
    let image = conditioned_generate(&run, &handle)?;

    if c.baseline {
        let png = generate_baseline(&prompt, c.steps, &handle)?;
        let p = dir.join(BASELINE_FILE);
        std::fs::write(&p, png).map_err(|e| Error::io(&p, e))?;
    }
    let mut injected: Vec<usize> = image.injections.iter().map(|e| e.step).collect();
    injected.dedup();
    let summary = ConditionSummary {
        prompt: &c.prompt,
        seed: c.seed,
        terms: &terms,
        scale: c.scale,
        mode: c.mode,
        direction_norm: norm,
        steps_executed: image.steps_executed,
        forward_passes: image.forward_passes,
        injected_steps: injected,
        image: IMAGE_FILE,
        baseline: c.baseline.then_some(BASELINE_FILE),
    };
    write_json(&dir.join("condition.json"), &summary)?;
    println!(
        "wrote {} ({} step(s), direction norm {})",
        dir.join(IMAGE_FILE).display(),
        image.steps_executed,
        scalex_core::report::fmt4(norm)
    );
    Ok(())
}
