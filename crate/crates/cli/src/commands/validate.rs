use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use scalex_core::compare::ProfessionDelta;
use scalex_core::conditioning::generate_baseline;
use scalex_core::corpus::{load_corpus, profession_jobs};
use scalex_core::error::{Error, Result};
use scalex_core::store::keys;
use scalex_core::validation::{
    classify_batch, percent_of, validate_bias, ClassificationProtocol, Classifier, HttpClassifier, ImagePercentage,
    RecordingClassifier, ReplayClassifier,
};

use super::{prompt_spec, read_json, write_json, DELTAS_FILE, VALIDATION_FILE};
use crate::config::{RunConfig, SetKind};

/// Prompt ids use spaces; directory names use underscores.
pub fn normalize_id(id: &str) -> String {
    id.trim().replace('_', " ")
}

fn classifier(spec: &str) -> Result<Box<dyn Classifier>> {
    match spec {
        "env" => Ok(Box::new(HttpClassifier::from_env()?)),
        s => match s.strip_prefix("replay:") {
            Some(p) => Ok(Box::new(ReplayClassifier::load(p)?)),
            None => Err(Error::InvalidConfig(format!("unknown classifier `{s}`"))),
        },
    }
}

fn protocol(cfg: &RunConfig) -> Result<ClassificationProtocol> {
    let v = &cfg.validate;
    if !v.class_prompts.is_empty() {
        return ClassificationProtocol::new(v.protocol.clone(), v.class_prompts.clone());
    }
    match v.protocol.as_str() {
        "gender" => Ok(ClassificationProtocol::gender()),
        p => Err(Error::InvalidConfig(format!("protocol `{p}` needs class_prompts"))),
    }
}

/// Renders each neutral profession prompt once per seed into `<dir>/<profession>/<scenario>_<seed>.png`.
fn generate(cfg: &RunConfig, dir: &Path) -> Result<usize> {
    let set = cfg.extract.sets.iter().find(|s| s.kind == SetKind::Professions);
    let source = set.and_then(|s| s.corpus.as_deref()).unwrap_or("builtin:professions");
    let mut corpus = load_corpus(source)?;
    if let Some(n) = set.and_then(|s| s.limit) {
        corpus.prompts.truncate(n);
    }
    let handle = super::backend(cfg, cfg.mode)?;
    let mut n = 0;
    for job in profession_jobs(&corpus, &[], &[])? {
        let profession = job.tags[keys::PROFESSION].replace(' ', "_");
        let sub = dir.join(&profession);
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for &seed in &cfg.seeds {
            let png = generate_baseline(&prompt_spec(cfg, &job.text, seed)?, None, &handle)?;
            let p = sub.join(format!("{}_{seed}.png", job.tags[keys::SCENARIO]));
            std::fs::write(&p, png).map_err(|e| Error::io(&p, e))?;
            n += 1;
        }
    }
    Ok(n)
}

/// PNG files per sub-directory of `dir`, both in name order.
pub fn image_groups(dir: &Path) -> Result<Vec<(String, Vec<PathBuf>)>> {
    let list = |d: &Path| -> Result<Vec<PathBuf>> {
        let mut v: Vec<PathBuf> = std::fs::read_dir(d)
            .map_err(|e| Error::io(d, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        v.sort();
        Ok(v)
    };
    let mut out = Vec::new();
    for sub in list(dir)?.into_iter().filter(|p| p.is_dir()) {
        let pngs: Vec<PathBuf> = list(&sub)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
            .collect();
        if pngs.is_empty() {
            continue;
        }
        let name = sub.file_name().unwrap_or_default().to_string_lossy().into_owned();
        out.push((normalize_id(&name), pngs));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

/// Per-prompt deltas from a CSV (`profession`/`prompt_id`, `delta`, optional
/// `variant`) or from the defaults command's JSON.
pub fn load_deltas(path: &Path, variant: &str) -> Result<Vec<(String, f64)>> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if !is_csv {
        let all: BTreeMap<String, Vec<ProfessionDelta>> = read_json(path)?;
        let table = all
            .get(variant)
            .ok_or_else(|| Error::MissingVariant(format!("{} has no `{variant}` deltas", path.display())))?;
        return Ok(table.iter().map(|d| (normalize_id(&d.group), d.delta)).collect());
    }
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    let headers = rd
        .headers()
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        .clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h.trim()));
    let id_col = col(&["profession", "prompt_id", "group"])
        .ok_or_else(|| Error::InvalidConfig(format!("{}: no profession or prompt_id column", path.display())))?;
    let delta_col =
        col(&["delta"]).ok_or_else(|| Error::InvalidConfig(format!("{}: no delta column", path.display())))?;
    let variant_col = col(&["variant"]);
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        if variant_col.is_some_and(|c| row.get(c).map(str::trim) != Some(variant)) {
            continue;
        }
        let raw = row.get(delta_col).unwrap_or("").trim();
        let delta: f64 = raw
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("{}: bad delta `{raw}`", path.display())))?;
        out.push((normalize_id(row.get(id_col).unwrap_or("")), delta));
    }
    if out.is_empty() {
        return Err(Error::MissingVariant(format!(
            "{} has no `{variant}` deltas",
            path.display()
        )));
    }
    Ok(out)
}

enum Client {
    Plain(Box<dyn Classifier>),
    Recording(RecordingClassifier<Box<dyn Classifier>>),
}

impl Client {
    fn get(&self) -> &dyn Classifier {
        match self {
            Client::Plain(c) => c.as_ref(),
            Client::Recording(r) => r,
        }
    }
}

#[derive(Debug, Serialize)]
struct Labels<'a> {
    class_prompts: &'a [String],
    /// Class index per image path.
    labels: BTreeMap<String, usize>,
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let v = &cfg.validate;
    // `--out` naming a JSON file writes the report there instead of a directory.
    let (dir, report_path) = if cfg.out.extension().is_some_and(|e| e == "json") {
        let dir = cfg.out.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir.clone(), cfg.out.clone())
    } else {
        let dir = cfg.command_dir("validate");
        (dir.clone(), dir.join(VALIDATION_FILE))
    };
    let protocol = protocol(cfg)?;
    let target = protocol.class_index(&v.target_class)?;
    let deltas_path = v
        .deltas
        .clone()
        .unwrap_or_else(|| cfg.command_dir("defaults").join(DELTAS_FILE));
    let deltas = load_deltas(&deltas_path, &v.variant)?;
    let inner = classifier(&v.classifier)?;

    let images_dir = match (&v.images, v.generate) {
        (Some(p), _) => p.clone(),
        (None, true) => dir.join("images"),
        (None, false) => return Err(Error::InvalidConfig("no image directory given".into())),
    };
    if v.generate {
        let n = generate(cfg, &images_dir)?;
        println!("generated {n} image(s) under {}", images_dir.display());
    }
    let groups = image_groups(&images_dir)?;

    let client = match &v.record_classifications {
        Some(_) => Client::Recording(RecordingClassifier::new(inner)),
        None => Client::Plain(inner),
    };

    let mut percentages = Vec::new();
    let mut labels = BTreeMap::new();
    for (id, paths) in &groups {
        let images = paths
            .iter()
            .map(|p| std::fs::read(p).map_err(|e| Error::io(p, e)))
            .collect::<Result<Vec<_>>>()?;
        let l = classify_batch(&images, &protocol, client.get(), v.concurrency)?;
        for (p, &c) in paths.iter().zip(&l) {
            labels.insert(
                p.strip_prefix(&images_dir).unwrap_or(p).to_string_lossy().into_owned(),
                c,
            );
        }
        percentages.push(ImagePercentage {
            prompt_id: id.clone(),
            percent: percent_of(&l, target)?,
            n_images: images.len(),
        });
    }
    if let (Client::Recording(r), Some(path)) = (&client, &v.record_classifications) {
        r.save(path)?;
    }

    let have: BTreeMap<&str, ()> = percentages.iter().map(|p| (p.prompt_id.as_str(), ())).collect();
    let (kept, dropped): (Vec<_>, Vec<_>) = deltas.into_iter().partition(|(id, _)| have.contains_key(id.as_str()));
    if !dropped.is_empty() {
        log::warn!("{} prompt(s) have deltas but no images", dropped.len());
    }
    let report = validate_bias(&kept, &percentages)?;

    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    cfg.write_into(&dir)?;
    write_json(&report_path, &report)?;
    write_json(
        &dir.join("labels.json"),
        &Labels {
            class_prompts: &protocol.class_prompts,
            labels,
        },
    )?;
    println!(
        "{} prompt(s), {} image(s): pearson {} spearman {}",
        report.per_prompt.len(),
        report.n_images,
        scalex_core::report::fmt4(report.correlation.pearson),
        scalex_core::report::fmt4(report.correlation.spearman)
    );
    Ok(())
}
