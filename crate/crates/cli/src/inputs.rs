//! File loading shared by the subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use avexpr_core::alignment::frame_pairs_from_records;
use avexpr_core::datamodel::aff1::read_feature_file;
use avexpr_core::datamodel::manifest::read_manifest;
use avexpr_core::datamodel::{Expression, ManifestEntry, VideoSequence};
use avexpr_core::head::Batch;
use avexpr_core::smoothing::{decide, lgt1};
use avexpr_core::trainer::FeatureSet;
use avexpr_core::{par, Error, Result};
use serde::Deserialize;

/// Manifest entries, rejecting ids that would escape an output directory.
pub fn manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let entries = read_manifest(path)?;
    for e in &entries {
        check_id(&e.id)?;
    }
    Ok(entries)
}

pub fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
        return Err(Error::Validation(format!("video id {id:?} is not usable as a file name")));
    }
    Ok(())
}

pub fn read_sequence(entry: &ManifestEntry) -> Result<VideoSequence> {
    let seq = read_feature_file(&entry.path)?;
    if seq.video_id != entry.id {
        return Err(Error::Validation(format!(
            "{}: file holds video {:?}, manifest says {:?}",
            entry.path.display(),
            seq.video_id,
            entry.id
        )));
    }
    Ok(seq)
}

pub fn sequence_labels(seq: &VideoSequence) -> Vec<Option<usize>> {
    seq.labels().into_iter().map(|l| l.map(Expression::index)).collect()
}

pub fn sequence_batch(seq: &VideoSequence) -> Result<Batch> {
    let pairs = frame_pairs_from_records(seq)?;
    Batch::from_pairs(&pairs, seq.visual_dim, seq.audio_dim)
}

pub fn feature_set(seq: &VideoSequence) -> Result<FeatureSet> {
    FeatureSet::new(sequence_batch(seq)?, sequence_labels(seq))
}

/// Per-video feature sets, in manifest order.
pub fn load_videos(path: &Path) -> Result<Vec<(String, FeatureSet)>> {
    let entries = manifest(path)?;
    if entries.is_empty() {
        return Err(Error::Validation(format!("{}: empty manifest", path.display())));
    }
    par::try_map(&entries, |e| Ok((e.id.clone(), feature_set(&read_sequence(e)?)?)))
}

pub fn logits_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.lgt1"))
}

/// Per-frame labels from LGT1 logits (argmax), AFF1 records, or text with
/// one label per line (class index or name, `-` for a missing label).
pub fn read_labels(path: &Path) -> Result<Vec<Option<usize>>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("lgt1") => Ok(decide(&lgt1::read_logits(path)?).into_iter().map(Some).collect()),
        Some("aff1") => Ok(sequence_labels(&read_feature_file(path)?)),
        _ => parse_label_text(&fs::read_to_string(path)?),
    }
}

pub fn parse_label_text(text: &str) -> Result<Vec<Option<usize>>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| if l == "-" { Ok(None) } else { l.parse::<Expression>().map(|e| Some(e.index())) })
        .collect()
}

pub fn label_text(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

/// One line of an image manifest. Crop jobs also need the face box.
#[derive(Clone, Debug, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    pub path: PathBuf,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
    pub side: Option<f64>,
}

pub fn image_manifest(path: &Path) -> Result<Vec<ImageEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (n, line) in fs::read_to_string(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut e: ImageEntry = serde_json::from_str(line)
            .map_err(|err| Error::Format(format!("{}:{}: {err}", path.display(), n + 1)))?;
        check_id(&e.id)?;
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
        out.push(e);
    }
    Ok(out)
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
