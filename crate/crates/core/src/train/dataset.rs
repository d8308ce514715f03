//! Manifests and in-memory utterance sets.
//!
//! A manifest is a UTF-8 text file with one utterance per line:
//!
//! ```text
//! id<TAB>path<TAB>phone phone phone ...
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the manifest's directory. Paths ending in `.wav` are
//! run through the feature front end; anything else is read as a feature
//! file.

use std::path::{Path, PathBuf};

use crate::ctc::SymbolTable;
use crate::error::{Error, Result};
use crate::features::{extract, read_features, read_wav, write_features, FeatureConfig, FeatureSequence};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub phones: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub features: FeatureSequence,
    pub labels: Vec<usize>,
}

impl Utterance {
    pub fn n_frames(&self) -> usize {
        self.features.n_frames()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub utterances: Vec<Utterance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(Utterance::n_frames).sum()
    }
}

/// Reads and parses a manifest file.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |detail: &str| Error::Format { what: "manifest", detail: format!("line {}: {detail}", n + 1) };
        let mut fields = line.splitn(3, '\t');
        let (Some(id), Some(path), Some(phones)) = (fields.next(), fields.next(), fields.next()) else {
            return Err(bad("expected id, path and phones separated by tabs"));
        };
        let id = id.trim();
        if id.is_empty() {
            return Err(bad("empty utterance id"));
        }
        let phones: Vec<String> = phones.split_whitespace().map(String::from).collect();
        if phones.is_empty() {
            return Err(bad("empty transcription"));
        }
        let path = Path::new(path.trim());
        let path = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
        out.push(ManifestEntry { id: id.to_string(), path, phones });
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&format!("{}\t{}\t{}\n", e.id, e.path.display(), e.phones.join(" ")));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Features for one manifest entry.
pub fn load_features(path: &Path, cfg: &FeatureConfig) -> Result<FeatureSequence> {
    let is_wav = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    let seq = if is_wav {
        let (samples, sr) = read_wav(path)?;
        if sr != cfg.sample_rate {
            return Err(Error::Audio(format!(
                "{}: sample rate {sr} Hz, expected {} Hz",
                path.display(),
                cfg.sample_rate
            )));
        }
        extract(&samples, cfg)?
    } else {
        read_features(path)?
    };
    if seq.width() != cfg.width() {
        return Err(Error::Format {
            what: "features",
            detail: format!("{}: {} bands, expected {}", path.display(), seq.width(), cfg.width()),
        });
    }
    Ok(seq)
}

/// Reads a manifest and every utterance it lists.
pub fn load_dataset(manifest: &Path, cfg: &FeatureConfig, symbols: &SymbolTable) -> Result<Dataset> {
    let entries = read_manifest(manifest)?;
    let mut utterances = Vec::with_capacity(entries.len());
    for e in entries {
        let labels = symbols.encode(e.phones.iter().map(String::as_str))?;
        let features = load_features(&e.path, cfg)?;
        utterances.push(Utterance { id: e.id, features, labels });
    }
    Ok(Dataset { utterances })
}

/// Extracts features for every entry into `out_dir/<id>.feat` and returns
/// entries pointing at the new files (paths relative to `out_dir`).
/// Utterances are processed in parallel on the current rayon pool; the
/// result keeps manifest order.
pub fn extract_manifest(entries: &[ManifestEntry], cfg: &FeatureConfig, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    use rayon::prelude::*;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    entries
        .par_iter()
        .map(|e| {
            let seq = load_features(&e.path, cfg)?;
            let name = format!("{}.feat", e.id);
            write_features(&out_dir.join(&name), &seq)?;
            Ok(ManifestEntry { id: e.id.clone(), path: PathBuf::from(name), phones: e.phones.clone() })
        })
        .collect()
}
