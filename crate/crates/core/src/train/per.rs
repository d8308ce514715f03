//! Phone error rate: Levenshtein distance between the decoded and reference
//! label sequences, summed over a set and divided by the total reference
//! length.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Minimum number of substitutions, insertions and deletions turning
/// `hyp` into `reference`.
pub fn edit_distance<T: PartialEq>(reference: &[T], hyp: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hyp.len()).collect();
    let mut cur = vec![0; hyp.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hyp.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hyp.len()]
}

/// Running totals for PER over a set of utterances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PerStats {
    pub errors: usize,
    pub reference_len: usize,
    pub utterances: usize,
    /// Utterances decoded exactly.
    pub exact: usize,
}

impl PerStats {
    pub fn add<T: PartialEq>(&mut self, reference: &[T], hyp: &[T]) {
        let e = edit_distance(reference, hyp);
        self.errors += e;
        self.reference_len += reference.len();
        self.utterances += 1;
        self.exact += usize::from(e == 0 && reference.len() == hyp.len());
    }

    pub fn merge(&mut self, other: &PerStats) {
        self.errors += other.errors;
        self.reference_len += other.reference_len;
        self.utterances += other.utterances;
        self.exact += other.exact;
    }

    /// Errors per reference label; an empty set scores 0.
    pub fn per(&self) -> f64 {
        if self.reference_len == 0 {
            0.0
        } else {
            self.errors as f64 / self.reference_len as f64
        }
    }

    pub fn sequence_accuracy(&self) -> f64 {
        if self.utterances == 0 {
            0.0
        } else {
            self.exact as f64 / self.utterances as f64
        }
    }
}

/// PER of a whole set of `(reference, hypothesis)` pairs.
pub fn per<T: PartialEq>(pairs: &[(Vec<T>, Vec<T>)]) -> f64 {
    let mut s = PerStats::default();
    for (r, h) in pairs {
        s.add(r, h);
    }
    s.per()
}

/// Many-to-one phone folding applied to both sides before scoring.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhoneMap {
    map: HashMap<String, Option<String>>,
}

const TIMIT_39: &str = include_str!("../../data/timit_61_to_39.map");

impl PhoneMap {
    /// Parses `source target` lines; `-` as target deletes the source
    /// phone; lines starting with `#` are comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [src, dst] = fields[..] else {
                return Err(Error::Format { what: "phone map", detail: format!("line {}: expected two fields", n + 1) });
            };
            let dst = (dst != "-").then(|| dst.to_string());
            if map.insert(src.to_string(), dst).is_some() {
                return Err(Error::Format { what: "phone map", detail: format!("line {}: duplicate {src}", n + 1) });
            }
        }
        Ok(PhoneMap { map })
    }

    pub fn timit39() -> Self {
        PhoneMap::parse(TIMIT_39).expect("bundled map parses")
    }

    /// `""` gives the identity map, `"timit39"` the bundled folding,
    /// anything else is read as a map file.
    pub fn resolve(spec: &str) -> Result<Self> {
        match spec {
            "" => Ok(PhoneMap::default()),
            "timit39" => Ok(PhoneMap::timit39()),
            path => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(Path::new(path), e))?;
                PhoneMap::parse(&text)
            }
        }
    }

    /// Folds a label sequence; labels not in the map pass through.
    pub fn apply<'a>(&'a self, labels: impl IntoIterator<Item = &'a str>) -> Vec<&'a str> {
        labels
            .into_iter()
            .filter_map(|l| match self.map.get(l) {
                Some(Some(t)) => Some(t.as_str()),
                Some(None) => None,
                None => Some(l),
            })
            .collect()
    }

    pub fn targets(&self) -> std::collections::BTreeSet<&str> {
        self.map.values().flatten().map(String::as_str).collect()
    }
}
