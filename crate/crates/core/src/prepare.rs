//! Spectrogram cache building.
//!
//! A prepared cache directory holds one `<clip_id>.<variant>.vser` file
//! per (clip, variant) pair plus three text files:
//!
//! * `split.tsv`: `file clip_id variant split label speaker`, one row per
//!   cache file, in manifest order;
//! * `labels.tsv`: `index name`;
//! * `index.tsv`: a settings fingerprint line, then `file sha256` rows.
//!
//! Training clips get the original plus one draw of each augmentation;
//! test clips only the original. Re-running with the same settings hashes
//! the existing files and recomputes only what is missing or damaged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use vser_dsp::{augment, cache, derive_seed, AugmentKind, AugmentSpec, Frontend, LogMelImage};

use crate::config::RunConfig;
use crate::dataset::{ingest, DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::train::{split_dataset, Example};

pub const ORIGINAL: &str = "original";

/// Variant names in cache order.
pub fn variant_names(augmented: bool) -> Vec<&'static str> {
    let mut v = vec![ORIGINAL];
    if augmented {
        v.extend(AugmentKind::ALL.iter().map(|k| k.name()));
    }
    v
}

pub fn cache_file_name(clip_id: &str, variant: &str) -> String {
    format!("{clip_id}.{variant}.vser")
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Image of one variant of a standardized clip. Augmentation parameters
/// and noise come from `(seed, clip_id, kind)` alone.
pub fn variant_image(
    frontend: &Frontend,
    clip: &vser_dsp::AudioClip,
    clip_id: &str,
    variant: &str,
    seed: u64,
) -> Result<LogMelImage> {
    if variant == ORIGINAL {
        return Ok(frontend.image_standardized(clip)?);
    }
    let kind = AugmentKind::parse(variant).ok_or_else(|| Error::Config(format!("unknown variant {variant:?}")))?;
    let s = derive_seed(seed, clip_id, Some(kind));
    let spec = AugmentSpec::sample(kind, &mut ChaCha8Rng::seed_from_u64(s));
    let augmented = augment(clip, &spec, s.rotate_left(17))?;
    Ok(frontend.image_standardized(&augmented)?)
}

/// All variants of a clip on disk, in [`variant_names`] order.
pub fn clip_variants(
    frontend: &Frontend,
    path: &Path,
    clip_id: &str,
    seed: u64,
) -> Result<Vec<(&'static str, LogMelImage)>> {
    let clip = frontend.standardize(&vser_dsp::wav::read(path)?)?;
    variant_names(true)
        .into_iter()
        .map(|v| Ok((v, variant_image(frontend, &clip, clip_id, v, seed)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheRow {
    pub file: String,
    pub clip_id: String,
    pub variant: String,
    pub split: String,
    pub label: usize,
    pub speaker: String,
}

#[derive(Debug, Clone)]
pub struct PrepareReport {
    pub manifest: DatasetManifest,
    pub rows: Vec<CacheRow>,
    /// Cache files written by this run.
    pub computed: usize,
    /// Cache files whose recorded hash still matched.
    pub reused: usize,
    /// Clips that could not be processed, with the reason.
    pub failed: Vec<(PathBuf, String)>,
}

impl PrepareReport {
    pub fn count(&self, split: &str) -> usize {
        self.rows.iter().filter(|r| r.split == split).count()
    }
}

/// Everything that changes cache contents.
fn fingerprint(cfg: &RunConfig) -> String {
    let text = format!(
        "{}\nseed={}\naugment={}\nratio={}\ndataset={}\n",
        toml::to_string(&cfg.frontend).expect("serializable"),
        cfg.seed,
        cfg.data.augment,
        cfg.data.split_ratio,
        cfg.data.dataset
    );
    sha256_hex(text.as_bytes())
}

fn read_index(path: &Path, fingerprint: &str) -> BTreeMap<String, String> {
    let Ok(text) = fs::read_to_string(path) else {
        return BTreeMap::new();
    };
    let mut lines = text.lines();
    if lines.next() != Some(&format!("# fingerprint {fingerprint}")) {
        return BTreeMap::new();
    }
    lines
        .filter_map(|l| l.split_once('\t'))
        .map(|(f, h)| (f.to_string(), h.to_string()))
        .collect()
}

struct Job<'a> {
    entry: &'a ManifestEntry,
    split: &'static str,
    variants: Vec<&'static str>,
}

struct JobResult {
    hashes: Vec<(String, String)>,
    computed: usize,
    reused: usize,
}

fn run_job(job: &Job<'_>, dir: &Path, frontend: &Frontend, seed: u64, known: &BTreeMap<String, String>) -> Result<JobResult> {
    let id = &job.entry.clip_id;
    let mut result = JobResult {
        hashes: Vec::new(),
        computed: 0,
        reused: 0,
    };
    let mut missing = Vec::new();
    for &v in &job.variants {
        let file = cache_file_name(id, v);
        let current = fs::read(dir.join(&file)).ok().map(|b| sha256_hex(&b));
        match (current, known.get(&file)) {
            (Some(h), Some(k)) if &h == k => {
                result.reused += 1;
                result.hashes.push((file, h));
            }
            _ => missing.push((v, file)),
        }
    }
    if missing.is_empty() {
        return Ok(result);
    }
    let clip = frontend.standardize(&vser_dsp::wav::read(&job.entry.path)?)?;
    for (v, file) in missing {
        let bytes = cache::encode(&variant_image(frontend, &clip, id, v, seed)?)?;
        fs::write(dir.join(&file), &bytes)?;
        result.computed += 1;
        result.hashes.push((file, sha256_hex(&bytes)));
    }
    Ok(result)
}

/// Ingest, split and materialize every cache file under `dir`. Per-clip
/// failures are collected in the report; the run goes on without them.
pub fn prepare(cfg: &RunConfig, dir: &Path, threads: usize) -> Result<PrepareReport> {
    cfg.validate()?;
    let frontend = cfg.frontend.build()?;
    let manifest = ingest(&cfg.data.root, cfg.data.dataset)?;
    let split = split_dataset(&manifest.label_ids(), cfg.data.split_ratio, cfg.seed)?;
    fs::create_dir_all(dir)?;
    let fp = fingerprint(cfg);
    let known = read_index(&dir.join("index.tsv"), &fp);

    let mut which = vec!["train"; manifest.entries.len()];
    for &i in &split.test {
        which[i] = "test";
    }
    let jobs: Vec<Job> = manifest
        .entries
        .iter()
        .zip(&which)
        .map(|(entry, &split)| Job {
            entry,
            split,
            variants: variant_names(cfg.data.augment && split == "train"),
        })
        .collect();

    let work = |chunk: &[Job]| -> Vec<Result<JobResult>> {
        chunk.iter().map(|j| run_job(j, dir, &frontend, cfg.seed, &known)).collect()
    };
    let results: Vec<Result<JobResult>> = if threads <= 1 || jobs.len() < 2 {
        work(&jobs)
    } else {
        let per = jobs.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs.chunks(per).map(|c| s.spawn(move || work(c))).collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("prepare worker panicked"))
                .collect()
        })
    };

    let mut report = PrepareReport {
        manifest: manifest.clone(),
        rows: Vec::new(),
        computed: 0,
        reused: 0,
        failed: Vec::new(),
    };
    let mut index = format!("# fingerprint {fp}\n");
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok(r) => {
                report.computed += r.computed;
                report.reused += r.reused;
                for ((file, hash), v) in r.hashes.into_iter().zip(&job.variants) {
                    writeln!(index, "{file}\t{hash}").unwrap();
                    report.rows.push(CacheRow {
                        file,
                        clip_id: job.entry.clip_id.clone(),
                        variant: v.to_string(),
                        split: job.split.to_string(),
                        label: job.entry.label,
                        speaker: job.entry.speaker.clone(),
                    });
                }
            }
            Err(e) => report.failed.push((job.entry.path.clone(), e.to_string())),
        }
    }
    if report.rows.is_empty() {
        return Err(Error::InvalidDataset("every clip failed to decode".into()));
    }
    fs::write(dir.join("index.tsv"), index)?;
    let mut split_tsv = String::from("file\tclip_id\tvariant\tsplit\tlabel\tspeaker\n");
    for r in &report.rows {
        writeln!(split_tsv, "{}\t{}\t{}\t{}\t{}\t{}", r.file, r.clip_id, r.variant, r.split, r.label, r.speaker).unwrap();
    }
    fs::write(dir.join("split.tsv"), split_tsv)?;
    let mut labels = String::from("index\tname\n");
    for (i, name) in manifest.labels.iter().enumerate() {
        writeln!(labels, "{i}\t{name}").unwrap();
    }
    fs::write(dir.join("labels.tsv"), labels)?;
    Ok(report)
}

/// A prepared cache loaded into memory.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub labels: Vec<String>,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

fn missing_cache(dir: &Path) -> Error {
    Error::Prerequisite {
        what: format!("spectrogram cache in {}", dir.display()),
        hint: "run `vser prepare` first".into(),
    }
}

pub fn read_rows(dir: &Path) -> Result<Vec<CacheRow>> {
    let text = fs::read_to_string(dir.join("split.tsv")).map_err(|_| missing_cache(dir))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            let bad = || Error::InvalidDataset(format!("malformed split.tsv row {l:?}"));
            if f.len() != 6 {
                return Err(bad());
            }
            Ok(CacheRow {
                file: f[0].into(),
                clip_id: f[1].into(),
                variant: f[2].into(),
                split: f[3].into(),
                label: f[4].parse().map_err(|_| bad())?,
                speaker: f[5].into(),
            })
        })
        .collect()
}

pub fn load_prepared(dir: &Path) -> Result<PreparedData> {
    let rows = read_rows(dir)?;
    let labels_text = fs::read_to_string(dir.join("labels.tsv")).map_err(|_| missing_cache(dir))?;
    let labels = labels_text
        .lines()
        .skip(1)
        .filter_map(|l| l.split_once('\t').map(|(_, n)| n.to_string()))
        .collect();
    let mut data = PreparedData {
        labels,
        train: Vec::new(),
        test: Vec::new(),
    };
    for r in rows {
        let example = Example {
            image: cache::read(&dir.join(&r.file))?.pixels,
            clip_id: r.clip_id,
            variant: r.variant,
            label: r.label,
        };
        match r.split.as_str() {
            "train" => data.train.push(example),
            "test" => data.test.push(example),
            other => return Err(Error::InvalidDataset(format!("unknown split {other:?}"))),
        }
    }
    Ok(data)
}
