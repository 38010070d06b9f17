//! CSV surfaces: the append-only step log, the dataset manifest, subject
//! training-set listings, and evaluation reports.
//!
//! Float columns use Rust's shortest round-trip formatting, so identical
//! runs produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::synthbench::factors::{
    BgColor, SceneSpec, SubjectScale, SubjectShape, SubjectSpec, Texture,
};
use crate::tuning::StepRecord;

pub const STEP_LOG_HEADER: &str = "iteration,t,L1,L2,L3,L,grad_norm";

pub fn step_log_to_string(records: &[StepRecord]) -> String {
    let mut out = String::from(STEP_LOG_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iteration, r.t, r.l1, r.l2, r.l3, r.total, r.grad_norm
        );
    }
    out
}

pub fn write_step_log(path: &Path, records: &[StepRecord]) -> Result<()> {
    std::fs::write(path, step_log_to_string(records))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

// ── dataset manifest ─────────────────────────────────────────────────

pub const MANIFEST_HEADER: &str =
    "image_path,subject_id,shape,fill,marker,bg_color,texture,pos,scale";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub image_path: String,
    pub subject_id: usize,
    pub subject: SubjectSpec,
    pub scene: SceneSpec,
}

pub fn manifest_to_string(rows: &[ManifestRow]) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.image_path,
            r.subject_id,
            r.subject.shape.word(),
            r.subject.fill.word(),
            r.subject.markers,
            r.scene.bg.word(),
            r.scene.texture.word(),
            r.scene.position,
            r.scene.scale.word()
        );
    }
    out
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    std::fs::write(path, manifest_to_string(rows))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn lookup<T: Copy>(pairs: &[(&str, T)], word: &str, what: &str) -> Result<T> {
    pairs
        .iter()
        .find(|(w, _)| *w == word)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::format("manifest", format!("unknown {what} {word:?}")))
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == MANIFEST_HEADER => {}
        other => {
            return Err(Error::format("manifest", format!("bad header {other:?}")));
        }
    }
    let shapes: Vec<(&str, SubjectShape)> =
        SubjectShape::ALL.iter().map(|&s| (s.word(), s)).collect();
    let fills: Vec<(&str, crate::synthbench::factors::FillColor)> =
        crate::synthbench::factors::FillColor::ALL.iter().map(|&c| (c.word(), c)).collect();
    let bgs: Vec<(&str, BgColor)> = BgColor::ALL.iter().map(|&c| (c.word(), c)).collect();
    let textures: Vec<(&str, Texture)> = Texture::ALL.iter().map(|&t| (t.word(), t)).collect();
    let scales: Vec<(&str, SubjectScale)> =
        SubjectScale::ALL.iter().map(|&s| (s.word(), s)).collect();

    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 9 {
            return Err(Error::format(
                "manifest",
                format!("line {}: expected 9 columns, got {}", lineno + 2, parts.len()),
            ));
        }
        rows.push(ManifestRow {
            image_path: parts[0].to_string(),
            subject_id: parts[1]
                .parse()
                .map_err(|_| Error::format("manifest", format!("bad subject_id {:?}", parts[1])))?,
            subject: SubjectSpec {
                shape: lookup(&shapes, parts[2], "shape")?,
                fill: lookup(&fills, parts[3], "fill")?,
                markers: parts[4]
                    .parse()
                    .map_err(|_| Error::format("manifest", format!("bad marker {:?}", parts[4])))?,
            },
            scene: SceneSpec {
                bg: lookup(&bgs, parts[5], "bg_color")?,
                texture: lookup(&textures, parts[6], "texture")?,
                position: parts[7]
                    .parse()
                    .map_err(|_| Error::format("manifest", format!("bad pos {:?}", parts[7])))?,
                scale: lookup(&scales, parts[8], "scale")?,
            },
        });
    }
    Ok(rows)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_manifest(&text)
}

// ── subject training sets ────────────────────────────────────────────

pub const TRAINSET_HEADER: &str = "subject_id,image_path,prompt";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSetRow {
    pub subject_id: usize,
    pub image_path: String,
    pub prompt: String,
}

pub fn trainsets_to_string(rows: &[TrainSetRow]) -> String {
    let mut out = String::from(TRAINSET_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.subject_id, r.image_path, r.prompt);
    }
    out
}

pub fn write_trainsets(path: &Path, rows: &[TrainSetRow]) -> Result<()> {
    std::fs::write(path, trainsets_to_string(rows))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn parse_trainsets(text: &str) -> Result<Vec<TrainSetRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRAINSET_HEADER => {}
        other => return Err(Error::format("trainsets", format!("bad header {other:?}"))),
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.splitn(3, ',').collect();
        if parts.len() != 3 {
            return Err(Error::format("trainsets", format!("bad row {line:?}")));
        }
        rows.push(TrainSetRow {
            subject_id: parts[0]
                .parse()
                .map_err(|_| Error::format("trainsets", format!("bad subject_id {:?}", parts[0])))?,
            image_path: parts[1].to_string(),
            prompt: parts[2].to_string(),
        });
    }
    Ok(rows)
}

pub fn read_trainsets(path: &Path) -> Result<Vec<TrainSetRow>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_trainsets(&text)
}

// ── evaluation reports ───────────────────────────────────────────────

pub const REPORT_HEADER: &str = "name,value,seed,n";

/// One metric row: numeric values are formatted round-trip, textual values
/// (digests) pass through.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub value: String,
    pub seed: u64,
    pub n: usize,
}

impl ReportRow {
    pub fn metric(name: impl Into<String>, value: f64, seed: u64, n: usize) -> Self {
        ReportRow { name: name.into(), value: format!("{value}"), seed, n }
    }

    pub fn text(name: impl Into<String>, value: impl Into<String>, seed: u64) -> Self {
        ReportRow { name: name.into(), value: value.into(), seed, n: 0 }
    }
}

pub fn report_to_string(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.name, r.value, r.seed, r.n);
    }
    out
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    std::fs::write(path, report_to_string(rows))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbench::factors::{default_subjects, all_scenes};

    #[test]
    fn step_log_layout() {
        let records = vec![StepRecord {
            iteration: 1,
            t: 42,
            l1: 0.5,
            l2: 0.0125,
            l3: 0.001,
            total: 0.5135,
            grad_norm: 1.25,
        }];
        let text = step_log_to_string(&records);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), STEP_LOG_HEADER);
        assert_eq!(lines.next().unwrap(), "1,42,0.5,0.0125,0.001,0.5135,1.25");
    }

    #[test]
    fn manifest_round_trip() {
        let subject = default_subjects()[1];
        let scene = all_scenes()[100];
        let rows = vec![ManifestRow {
            image_path: "images/x.ppm".into(),
            subject_id: 1,
            subject,
            scene,
        }];
        let text = manifest_to_string(&rows);
        let parsed = parse_manifest(&text).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn trainset_round_trip_with_prompt_spaces() {
        let rows = vec![TrainSetRow {
            subject_id: 2,
            image_path: "images/a.ppm".into(),
            prompt: "a S* triangle".into(),
        }];
        let parsed = parse_trainsets(&trainsets_to_string(&rows)).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn malformed_manifest_rejected() {
        assert!(parse_manifest("nope\n").is_err());
        let bad = format!("{MANIFEST_HEADER}\na,b,c\n");
        assert!(parse_manifest(&bad).is_err());
    }
}
