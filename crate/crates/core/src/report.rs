//! Tables and plots rendered from finished analyses.
//!
//! Rendering is pure: every file is produced in memory first, so a failing
//! report writes nothing. Numbers are printed with four decimals.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atlas::ConceptAtlas;
use crate::compare::{Correlation, ProfessionDelta, RankingResult};
use crate::error::{Error, Result};
use crate::validation::ValidationReport;

/// Four-decimal rendering; values that round to zero print without a sign.
pub fn fmt4(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    /// Profession deltas per prompt variant.
    #[serde(default)]
    pub deltas: BTreeMap<String, Vec<ProfessionDelta>>,
    /// Correlation of each variant's deltas with the baseline variant.
    #[serde(default)]
    pub variant_correlations: BTreeMap<String, Correlation>,
    #[serde(default)]
    pub rankings: Vec<RankingResult>,
    #[serde(default)]
    pub validation: Option<ValidationReport>,
    #[serde(default)]
    pub atlas: Option<ConceptAtlas>,
}

impl ReportInputs {
    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
            && self.variant_correlations.is_empty()
            && self.rankings.is_empty()
            && self.validation.is_none()
            && self.atlas.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidConfig(format!("csv: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidConfig(format!("csv: {e}")))
}

/// `variant,profession,delta`, variants in name order, deltas ascending.
pub fn deltas_csv(deltas: &BTreeMap<String, Vec<ProfessionDelta>>) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for (variant, table) in deltas {
        let mut t: Vec<&ProfessionDelta> = table.iter().collect();
        t.sort_by(|a, b| a.delta.total_cmp(&b.delta).then_with(|| a.group.cmp(&b.group)));
        rows.extend(t.iter().map(|d| vec![variant.clone(), d.group.clone(), fmt4(d.delta)]));
    }
    csv_bytes(&["variant", "profession", "delta"], rows)
}

pub fn variant_correlations_csv(c: &BTreeMap<String, Correlation>) -> Result<Vec<u8>> {
    csv_bytes(
        &["variant", "pearson", "spearman"],
        c.iter()
            .map(|(v, c)| vec![v.clone(), fmt4(c.pearson), fmt4(c.spearman)]),
    )
}

/// `descriptor_id,score` in ranking order.
pub fn ranking_csv(r: &RankingResult) -> Result<Vec<u8>> {
    csv_bytes(
        &["descriptor_id", "score"],
        r.ranked.iter().map(|d| vec![d.descriptor_id.clone(), fmt4(d.score)]),
    )
}

pub fn validation_csv(v: &ValidationReport) -> Result<Vec<u8>> {
    csv_bytes(
        &["prompt_id", "percent_class", "mean_delta"],
        v.per_prompt
            .iter()
            .map(|p| vec![p.prompt_id.clone(), fmt4(p.percent_class), fmt4(p.mean_delta)]),
    )
}

pub fn atlas_csv(a: &ConceptAtlas) -> Result<Vec<u8>> {
    csv_bytes(
        &["record_id", "x", "y", "cluster", "category"],
        a.record_ids.iter().enumerate().map(|(i, id)| {
            vec![
                id.clone(),
                fmt4(a.points[i][0]),
                fmt4(a.points[i][1]),
                a.labels[i].to_string(),
                a.categories.as_ref().map(|c| c[i].clone()).unwrap_or_default(),
            ]
        }),
    )
}

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 110.0;
const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];
const NOISE: &str = "#bbbbbb";

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        esc(title)
    );
    s
}

/// Padded [lo, hi] covering `vals` (and zero when `with_zero`).
fn range(vals: impl Iterator<Item = f64>, with_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if with_zero {
        lo = lo.min(0.0);
        hi = hi.max(0.0);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn scale(v: f64, (lo, hi): (f64, f64), a: f64, b: f64) -> f64 {
    a + (v - lo) / (hi - lo) * (b - a)
}

fn y_axis(s: &mut String, yr: (f64, f64), label: &str) {
    let bottom = H - BOTTOM;
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{bottom}" stroke="black"/>"#
    );
    for k in 0..=4 {
        let v = yr.0 + (yr.1 - yr.0) * k as f64 / 4.0;
        let y = scale(v, yr, bottom, TOP);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            fmt4(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text transform="translate(14 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (TOP + bottom) / 2.0,
        esc(label)
    );
}

/// Grouped bars: one group per category, one bar per series.
pub fn grouped_bar_svg(title: &str, y_label: &str, categories: &[String], series: &[(String, Vec<f64>)]) -> String {
    let mut s = svg_open(title);
    let yr = range(series.iter().flat_map(|(_, v)| v.iter().copied()), true);
    let bottom = H - BOTTOM;
    let n_cat = categories.len().max(1) as f64;
    let group_w = (W - LEFT - RIGHT) / n_cat;
    let bar_w = 0.8 * group_w / series.len().max(1) as f64;
    y_axis(&mut s, yr, y_label);
    let zero = scale(0.0, yr, bottom, TOP);
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{zero:.1}" x2="{:.1}" y2="{zero:.1}" stroke="black"/>"#,
        W - RIGHT
    );
    for (ci, cat) in categories.iter().enumerate() {
        let gx = LEFT + group_w * ci as f64;
        for (si, (_, vals)) in series.iter().enumerate() {
            let Some(&v) = vals.get(ci) else { continue };
            let y = scale(v, yr, bottom, TOP);
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                gx + 0.1 * group_w + bar_w * si as f64,
                y.min(zero),
                bar_w,
                (y - zero).abs(),
                PALETTE[si % PALETTE.len()]
            );
        }
        let _ = writeln!(
            s,
            r#"<text transform="translate({:.1} {:.1}) rotate(-40)" text-anchor="end">{}</text>"#,
            gx + group_w / 2.0,
            bottom + 14.0,
            esc(cat)
        );
    }
    if series.len() > 1 {
        for (si, (name, _)) in series.iter().enumerate() {
            let x = LEFT + 10.0 + 110.0 * si as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                H - 16.0,
                PALETTE[si % PALETTE.len()],
                x + 14.0,
                H - 7.0,
                esc(name)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Labelled scatter plot of `(label, x, y)` points.
pub fn scatter_svg(title: &str, x_label: &str, y_label: &str, points: &[(String, f64, f64)]) -> String {
    let mut s = svg_open(title);
    let xr = range(points.iter().map(|p| p.1), false);
    let yr = range(points.iter().map(|p| p.2), false);
    let bottom = H - BOTTOM;
    y_axis(&mut s, yr, y_label);
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{bottom}" x2="{:.1}" y2="{bottom}" stroke="black"/>"#,
        W - RIGHT
    );
    for k in 0..=4 {
        let v = xr.0 + (xr.1 - xr.0) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            scale(v, xr, LEFT, W - RIGHT),
            bottom + 16.0,
            fmt4(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        bottom + 36.0,
        esc(x_label)
    );
    for (label, x, y) in points {
        let (px, py) = (scale(*x, xr, LEFT, W - RIGHT), scale(*y, yr, bottom, TOP));
        let _ = writeln!(
            s,
            r#"<circle cx="{px:.1}" cy="{py:.1}" r="4" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            PALETTE[0],
            px + 6.0,
            py - 6.0,
            esc(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// The 2-D embedding coloured by cluster; noise is grey.
pub fn atlas_svg(a: &ConceptAtlas) -> String {
    let mut s = svg_open(&format!(
        "Concept atlas: {} points, {} clusters, {} noise",
        a.points.len(),
        a.cluster_ids().len(),
        a.noise_count()
    ));
    let xr = range(a.points.iter().map(|p| p[0]), false);
    let yr = range(a.points.iter().map(|p| p[1]), false);
    for (p, &l) in a.points.iter().zip(&a.labels) {
        let colour = if l < 0 {
            NOISE
        } else {
            PALETTE[l as usize % PALETTE.len()]
        };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{colour}"/>"#,
            scale(p[0], xr, LEFT, W - RIGHT),
            scale(p[1], yr, H - 20.0, TOP)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn slug(s: &str) -> String {
    let out: String = s
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect();
    out.trim_matches('_').to_string()
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    Ok((serde_json::to_string_pretty(v)? + "\n").into_bytes())
}

/// Every file of a report, in name order.
pub fn render_report(inputs: &ReportInputs) -> Result<Vec<RenderedFile>> {
    if inputs.is_empty() {
        return Err(Error::MissingAnalysis("no analyses to report".into()));
    }
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    if !inputs.deltas.is_empty() {
        files.insert("deltas.csv".into(), deltas_csv(&inputs.deltas)?);
        files.insert("deltas.json".into(), json_bytes(&inputs.deltas)?);
        // Professions ordered by the first variant's deltas.
        let (_, first) = inputs.deltas.iter().next().expect("non-empty");
        let mut cats: Vec<&ProfessionDelta> = first.iter().collect();
        cats.sort_by(|a, b| a.delta.total_cmp(&b.delta).then_with(|| a.group.cmp(&b.group)));
        let cats: Vec<String> = cats.iter().map(|d| d.group.clone()).collect();
        let series: Vec<(String, Vec<f64>)> = inputs
            .deltas
            .iter()
            .map(|(v, t)| {
                let by: BTreeMap<&str, f64> = t.iter().map(|d| (d.group.as_str(), d.delta)).collect();
                (
                    v.clone(),
                    cats.iter()
                        .map(|c| by.get(c.as_str()).copied().unwrap_or(0.0))
                        .collect(),
                )
            })
            .collect();
        files.insert(
            "deltas_bar.svg".into(),
            grouped_bar_svg("Cosine distance difference (female - male)", "delta", &cats, &series).into_bytes(),
        );
    }
    if !inputs.variant_correlations.is_empty() {
        files.insert(
            "variant_correlations.csv".into(),
            variant_correlations_csv(&inputs.variant_correlations)?,
        );
    }
    for r in &inputs.rankings {
        let name = format!("ranking_{}_{}.csv", slug(&r.target_concept_id), slug(&r.normalization));
        if files.insert(name.clone(), ranking_csv(r)?).is_some() {
            return Err(Error::InvalidConfig(format!("two rankings render to {name}")));
        }
    }
    if !inputs.rankings.is_empty() {
        files.insert("rankings.json".into(), json_bytes(&inputs.rankings)?);
    }
    if let Some(v) = &inputs.validation {
        files.insert("validation.csv".into(), validation_csv(v)?);
        files.insert("validation.json".into(), json_bytes(v)?);
        let pts: Vec<(String, f64, f64)> = v
            .per_prompt
            .iter()
            .map(|p| (p.prompt_id.clone(), p.mean_delta, p.percent_class))
            .collect();
        files.insert(
            "validation_scatter.svg".into(),
            scatter_svg(
                &format!(
                    "Pearson {} / Spearman {}",
                    fmt4(v.correlation.pearson),
                    fmt4(v.correlation.spearman)
                ),
                "delta",
                "% images in class",
                &pts,
            )
            .into_bytes(),
        );
    }
    if let Some(a) = &inputs.atlas {
        files.insert("atlas.csv".into(), atlas_csv(a)?);
        files.insert("atlas.svg".into(), atlas_svg(a).into_bytes());
        files.insert("atlas.json".into(), json_bytes(a)?);
    }
    Ok(files
        .into_iter()
        .map(|(name, bytes)| RenderedFile { name, bytes })
        .collect())
}

/// Writes each file beside a temporary twin and renames it into place.
pub fn write_files(dir: &Path, files: &[RenderedFile]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in files {
        let tmp = dir.join(format!(".{}.tmp", f.name));
        std::fs::write(&tmp, &f.bytes).map_err(|e| Error::io(&tmp, e))?;
        let dst = dir.join(&f.name);
        std::fs::rename(&tmp, &dst).map_err(|e| Error::io(&dst, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compare::RankedDescriptor;

    fn pd(group: &str, delta: f64) -> ProfessionDelta {
        ProfessionDelta {
            group: group.into(),
            delta,
            prompts: vec![],
        }
    }

    #[test]
    fn four_decimals() {
        assert_eq!(fmt4(-0.0003), "-0.0003");
        assert_eq!(fmt4(0.04701), "0.0470");
        assert_eq!(fmt4(-0.00001), "0.0000");
        assert_eq!(fmt4(58.333333), "58.3333");
    }

    #[test]
    fn deltas_table_sorted_and_quoted() {
        let mut d = BTreeMap::new();
        d.insert(
            "female_male".to_string(),
            vec![pd("pilot", 0.047), pd("teacher", -0.0003), pd("a, b", 0.01)],
        );
        let got = String::from_utf8(deltas_csv(&d).unwrap()).unwrap();
        assert_eq!(
            got,
            "variant,profession,delta\nfemale_male,teacher,-0.0003\nfemale_male,\"a, b\",0.0100\nfemale_male,pilot,0.0470\n"
        );
    }

    #[test]
    fn empty_report_is_missing_analysis() {
        assert!(matches!(
            render_report(&ReportInputs::default()),
            Err(Error::MissingAnalysis(_))
        ));
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut inputs = ReportInputs::default();
        inputs
            .deltas
            .insert("female_male".into(), vec![pd("pilot", 0.047), pd("teacher", -0.0003)]);
        inputs
            .deltas
            .insert("pronoun".into(), vec![pd("pilot", 0.03), pd("teacher", 0.001)]);
        inputs.rankings.push(RankingResult {
            target_concept_id: "a photo portrait of a woman".into(),
            reference_concept_id: Some("a photo portrait of a man".into()),
            normalization: "mean_centered".into(),
            ranked: vec![
                RankedDescriptor {
                    descriptor_id: "hair/10".into(),
                    score: -0.2,
                },
                RankedDescriptor {
                    descriptor_id: "hair/09".into(),
                    score: 0.2014,
                },
            ],
        });
        let a = render_report(&inputs).unwrap();
        let b = render_report(&inputs).unwrap();
        assert_eq!(a, b);
        let names: Vec<&str> = a.iter().map(|f| f.name.as_str()).collect();
        assert!(names.contains(&"ranking_a_photo_portrait_of_a_woman_mean_centered.csv"));
        assert!(names.contains(&"deltas_bar.svg"));
        let dir = tempfile::tempdir().unwrap();
        write_files(dir.path(), &a).unwrap();
        let csv =
            std::fs::read_to_string(dir.path().join("ranking_a_photo_portrait_of_a_woman_mean_centered.csv")).unwrap();
        assert_eq!(csv, "descriptor_id,score\nhair/10,-0.2000\nhair/09,0.2014\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), a.len());
    }

    #[test]
    fn svg_escapes_labels() {
        let s = scatter_svg("t", "x", "y", &[("<a&b>".into(), 0.0, 1.0), ("c".into(), 1.0, 0.0)]);
        assert!(s.contains("&lt;a&amp;b&gt;"));
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
    }
}
