//! Corpus manifests from directory trees.
//!
//! Labels come from each corpus's file-name convention:
//!
//! | corpus  | example                 | emotion field            |
//! |---------|-------------------------|--------------------------|
//! | SAVEE   | `DC/sa03.wav`, `DC_sa03.wav` | leading letters     |
//! | EmoDB   | `03a01Fa.wav`           | sixth character          |
//! | CREMA-D | `1001_DFA_ANG_XX.wav`   | third `_` field          |
//!
//! Class indices follow the alphabetical order of emotion names.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAVEE_CODES: [(&str, &str); 7] = [
    ("a", "anger"),
    ("d", "disgust"),
    ("f", "fear"),
    ("h", "happiness"),
    ("n", "neutral"),
    ("sa", "sadness"),
    ("su", "surprise"),
];

pub const EMODB_CODES: [(&str, &str); 7] = [
    ("W", "anger"),
    ("A", "anxiety"),
    ("L", "boredom"),
    ("E", "disgust"),
    ("F", "happiness"),
    ("N", "neutral"),
    ("T", "sadness"),
];

pub const CREMA_D_CODES: [(&str, &str); 6] = [
    ("ANG", "anger"),
    ("DIS", "disgust"),
    ("FEA", "fear"),
    ("HAP", "happiness"),
    ("NEU", "neutral"),
    ("SAD", "sadness"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetName {
    #[serde(rename = "savee")]
    Savee,
    #[serde(rename = "emodb")]
    Emodb,
    #[serde(rename = "crema-d")]
    CremaD,
    /// SAVEE naming without an expected size.
    #[serde(rename = "fixture")]
    Fixture,
}

impl DatasetName {
    pub fn name(self) -> &'static str {
        match self {
            DatasetName::Savee => "savee",
            DatasetName::Emodb => "emodb",
            DatasetName::CremaD => "crema-d",
            DatasetName::Fixture => "fixture",
        }
    }

    pub fn codes(self) -> &'static [(&'static str, &'static str)] {
        match self {
            DatasetName::Savee | DatasetName::Fixture => &SAVEE_CODES,
            DatasetName::Emodb => &EMODB_CODES,
            DatasetName::CremaD => &CREMA_D_CODES,
        }
    }

    pub fn labels(self) -> Vec<String> {
        self.codes().iter().map(|(_, n)| n.to_string()).collect()
    }

    pub fn expected_total(self) -> Option<usize> {
        match self {
            DatasetName::Savee => Some(480),
            DatasetName::Emodb => Some(535),
            DatasetName::CremaD => Some(7442),
            DatasetName::Fixture => None,
        }
    }

    /// `(speaker, code)` from a file stem and its parent directory name.
    fn parse(self, stem: &str, parent: &str) -> Option<(String, String)> {
        match self {
            DatasetName::Savee | DatasetName::Fixture => {
                let (speaker, rest) = match stem.split_once('_') {
                    Some((s, r)) => (s.to_string(), r),
                    None => (parent.to_string(), stem),
                };
                let code: String = rest.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
                let digits = &rest[code.len()..];
                if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
                    return None;
                }
                Some((speaker, code))
            }
            DatasetName::Emodb => {
                let chars: Vec<char> = stem.chars().collect();
                if chars.len() != 7 || !chars[..2].iter().all(|c| c.is_ascii_digit()) {
                    return None;
                }
                Some((chars[..2].iter().collect(), chars[5].to_string()))
            }
            DatasetName::CremaD => {
                let fields: Vec<&str> = stem.split('_').collect();
                if fields.len() != 4 || !fields[0].chars().all(|c| c.is_ascii_digit()) {
                    return None;
                }
                Some((fields[0].to_string(), fields[2].to_string()))
            }
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [DatasetName::Savee, DatasetName::Emodb, DatasetName::CremaD, DatasetName::Fixture]
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown dataset {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    /// Path relative to the corpus root with separators replaced by `_`
    /// and the extension dropped; unique within a manifest.
    pub clip_id: String,
    pub speaker: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub dataset: DatasetName,
    pub labels: Vec<String>,
    /// Sorted by path.
    pub entries: Vec<ManifestEntry>,
    /// Files that looked like audio but did not parse, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
    pub warnings: Vec<String>,
}

impl DatasetManifest {
    pub fn label_ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.label).collect()
    }
}

fn wav_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            wav_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            out.push(path);
        }
    }
    Ok(())
}

pub fn ingest(root: &Path, dataset: DatasetName) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::Ingest(format!("{} is not a directory", root.display())));
    }
    let mut files = Vec::new();
    wav_files(root, &mut files)?;
    files.sort();
    let codes = dataset.codes();
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for path in files {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let parent = path
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        let Some((speaker, code)) = dataset.parse(stem, parent) else {
            skipped.push((path, format!("name does not follow the {dataset} convention")));
            continue;
        };
        let Some(label) = codes.iter().position(|(c, _)| *c == code) else {
            skipped.push((path, format!("unknown emotion code {code:?}")));
            continue;
        };
        let rel = path.strip_prefix(root).unwrap_or(&path).with_extension("");
        let clip_id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("_");
        entries.push(ManifestEntry {
            path,
            clip_id,
            speaker,
            label,
        });
    }
    if entries.is_empty() {
        return Err(Error::Ingest(format!(
            "no {dataset} clips found under {} ({} skipped)",
            root.display(),
            skipped.len()
        )));
    }
    let mut warnings = Vec::new();
    if let Some(expected) = dataset.expected_total() {
        if entries.len() != expected {
            warnings.push(format!("{dataset}: found {} clips, the full corpus has {expected}", entries.len()));
        }
    }
    Ok(DatasetManifest {
        dataset,
        labels: dataset.labels(),
        entries,
        skipped,
        warnings,
    })
}
