//! The `vser` command line.
//!
//! Every command works inside a run directory:
//!
//! ```text
//! <run-dir>/cache/            spectrogram caches, split.tsv, labels.tsv, index.tsv
//! <run-dir>/teacher/          stage A: best.vsck, last.vsck, metrics.tsv
//! <run-dir>/match/            stage B
//! <run-dir>/student/          stage C
//! <run-dir>/eval/             <checkpoint>.<split>.tsv reports
//! <run-dir>/attend/           <clip>.mask.pgm and <clip>.image.pgm panels
//! <run-dir>/meta/<command>.toml   version, seed, threads and the full config
//! ```
//!
//! Exit status: 0 success, 2 configuration error, 3 missing prerequisite,
//! 4 data or I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vser_dsp::derive_seed;
use vser_nn::Checkpoint;

use crate::attend::{extract_attention_mask, gaussian_smooth};
use crate::config::RunConfig;
use crate::dataset::{ingest, DatasetName};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::figure::emit_figure;
use crate::flops::{count_flops_with, FlopsConvention};
use crate::prepare::{clip_variants, load_prepared, prepare, read_rows};
use crate::spec::{ModelSpec, Role};
use crate::train::{train_stage_a, train_stage_b, train_stage_c, EpochMetrics, Observer, Stage};
use crate::vit::VitModel;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "vser", version, about = "Speech emotion recognition with vision transformers")]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "run")]
    pub run_dir: PathBuf,
    /// Worker threads for `prepare`; 1 is strictly sequential. Training is
    /// always sequential.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Overrides the configured corpus and resizes both classifiers to it.
    #[arg(long, global = true)]
    pub dataset: Option<DatasetName>,
    /// Overrides the configured corpus root.
    #[arg(long, global = true)]
    pub data_root: Option<PathBuf>,
    /// Suppress per-epoch progress.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    MacAsOne,
    MacAsTwo,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest the corpus, split it and build spectrogram caches.
    Prepare,
    /// Stage A: train the teacher with cross entropy.
    TrainTeacher,
    /// Stage B: match the student's feature map to the frozen teacher's.
    Match,
    /// Stage C: train the student with cross entropy plus alpha * L1.
    TrainStudent,
    /// Weighted accuracy and confusion matrix of a checkpoint.
    Eval {
        /// Defaults to the stage-C best checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Attention-mask panels for the four variants of one clip.
    Attend {
        /// Defaults to the stage-C best checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Clip id from split.tsv; defaults to the first test clip.
        #[arg(long)]
        clip: Option<String>,
    },
    /// Analytic FLOPs of the configured networks.
    Flops {
        /// One role only; defaults to teacher and student.
        #[arg(long)]
        role: Option<Role>,
        #[arg(long, value_enum, default_value = "mac-as-one")]
        convention: ConventionArg,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::TrainTeacher => "train-teacher",
            Command::Match => "match",
            Command::TrainStudent => "train-student",
            Command::Eval { .. } => "eval",
            Command::Attend { .. } => "attend",
            Command::Flops { .. } => "flops",
        }
    }
}

/// Parse `args` (program name first), run, and return the exit status.
pub fn run_from_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// The effective configuration after file, defaults and flag overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::for_dataset(cli.dataset.unwrap_or(DatasetName::Savee)),
    };
    if let Some(d) = cli.dataset {
        let n = d.labels().len();
        cfg.data.dataset = d;
        cfg.teacher.n_classes = n;
        cfg.student.n_classes = n;
    }
    if let Some(root) = &cli.data_root {
        cfg.data.root = root.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run a parsed command; the returned text is the command's report.
pub fn run(cli: &Cli) -> Result<String> {
    if cli.threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let cfg = resolve_config(cli)?;
    let ctx = Context {
        cfg: &cfg,
        run_dir: &cli.run_dir,
        threads: cli.threads,
        quiet: cli.quiet,
    };
    if !matches!(cli.command, Command::Flops { .. }) {
        ctx.write_meta(cli.command.name())?;
    }
    match &cli.command {
        Command::Prepare => ctx.prepare(),
        Command::TrainTeacher => ctx.train_teacher(),
        Command::Match => ctx.train_match(),
        Command::TrainStudent => ctx.train_student(),
        Command::Eval { checkpoint, split } => ctx.eval(checkpoint.as_deref(), *split),
        Command::Attend { checkpoint, clip } => ctx.attend(checkpoint.as_deref(), clip.as_deref()),
        Command::Flops { role, convention } => Ok(flops(&cfg, *role, *convention)),
    }
}

struct Context<'a> {
    cfg: &'a RunConfig,
    run_dir: &'a Path,
    threads: usize,
    quiet: bool,
}

/// Per-epoch progress on stderr.
struct Progress {
    quiet: bool,
}

impl Observer for Progress {
    fn on_epoch(&mut self, m: &EpochMetrics) -> ControlFlow<()> {
        if !self.quiet {
            eprintln!(
                "epoch {:>3}  lr {:.3e}  train ce {:.4} l1 {:.4} wa {:.4}  test ce {:.4} l1 {:.4} wa {:.4}",
                m.epoch, m.lr, m.train.ce, m.train.l1, m.train.wa, m.test.ce, m.test.l1, m.test.wa
            );
        }
        ControlFlow::Continue(())
    }
}

fn prerequisite(path: &Path, hint: &str) -> Error {
    Error::Prerequisite {
        what: path.display().to_string(),
        hint: hint.into(),
    }
}

fn load_model(path: &Path, hint: &str) -> Result<VitModel<f32>> {
    if !path.is_file() {
        return Err(prerequisite(path, hint));
    }
    VitModel::from_checkpoint(&Checkpoint::load(path)?)
}

impl Context<'_> {
    fn cache_dir(&self) -> PathBuf {
        self.cfg.cache_dir(self.run_dir)
    }

    fn stage_dir(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }

    fn write_meta(&self, command: &str) -> Result<()> {
        let dir = self.run_dir.join("meta");
        fs::create_dir_all(&dir)?;
        let mut text = String::new();
        writeln!(text, "version = \"{VERSION}\"").unwrap();
        writeln!(text, "command = \"{command}\"").unwrap();
        writeln!(text, "seed = {}", self.cfg.seed).unwrap();
        writeln!(text, "threads = {}", self.threads).unwrap();
        fs::write(dir.join(format!("{command}.toml")), text)?;
        fs::write(dir.join(format!("{command}.config.toml")), self.cfg.to_toml())?;
        Ok(())
    }

    fn model_rng(&self, role: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, role, None))
    }

    fn teacher_path(&self) -> PathBuf {
        self.stage_dir("teacher").join("best.vsck")
    }

    fn match_path(&self) -> PathBuf {
        self.stage_dir("match").join("best.vsck")
    }

    fn student_path(&self) -> PathBuf {
        self.stage_dir("student").join("best.vsck")
    }

    fn check_spec(&self, model: &VitModel<f32>, want: &ModelSpec, what: &str) -> Result<()> {
        if &model.spec != want {
            return Err(Error::Config(format!("{what} checkpoint was trained with a different model configuration")));
        }
        Ok(())
    }

    fn prepare(&self) -> Result<String> {
        let dir = self.cache_dir();
        let report = prepare(self.cfg, &dir, self.threads)?;
        let mut out = String::new();
        for w in &report.manifest.warnings {
            eprintln!("warning: {w}");
        }
        for (path, why) in &report.manifest.skipped {
            eprintln!("skipped {}: {why}", path.display());
        }
        for (path, why) in &report.failed {
            eprintln!("failed {}: {why}", path.display());
        }
        writeln!(out, "clips        {}", report.manifest.entries.len()).unwrap();
        writeln!(out, "train files  {}", report.count("train")).unwrap();
        writeln!(out, "test files   {}", report.count("test")).unwrap();
        writeln!(out, "computed     {}", report.computed).unwrap();
        writeln!(out, "reused       {}", report.reused).unwrap();
        writeln!(out, "failed       {}", report.failed.len()).unwrap();
        writeln!(out, "cache        {}", dir.display()).unwrap();
        Ok(out)
    }

    fn data(&self) -> Result<crate::prepare::PreparedData> {
        let data = load_prepared(&self.cache_dir())?;
        if data.labels.len() != self.cfg.teacher.n_classes {
            return Err(Error::Config(format!(
                "cache has {} labels, the models have {} outputs",
                data.labels.len(),
                self.cfg.teacher.n_classes
            )));
        }
        Ok(data)
    }

    fn summary(&self, dir: &Path, run: &crate::train::TrainRun) -> String {
        let best = &run.metrics[run.best_epoch];
        format!(
            "best epoch   {}\ntest wa      {}\ntest l1      {:.6}\noutput       {}\n",
            run.best_epoch,
            crate::eval::format_truncated(best.test.wa),
            best.test.l1,
            dir.display()
        )
    }

    fn train_teacher(&self) -> Result<String> {
        let data = self.data()?;
        let mut teacher = VitModel::<f32>::new(&self.cfg.teacher, &mut self.model_rng("teacher"))?;
        let cfg = self.cfg.train.stage(Stage::ATeacher);
        let run = train_stage_a(&mut teacher, &data.train, &data.test, &cfg, self.cfg.seed, &mut Progress { quiet: self.quiet })?;
        let dir = self.stage_dir("teacher");
        run.save(&dir)?;
        Ok(self.summary(&dir, &run))
    }

    fn train_match(&self) -> Result<String> {
        let teacher = load_model(&self.teacher_path(), "run `vser train-teacher` first")?;
        self.check_spec(&teacher, &self.cfg.teacher, "teacher")?;
        let data = self.data()?;
        let mut student = VitModel::<f32>::new(&self.cfg.student, &mut self.model_rng("student"))?;
        let cfg = self.cfg.train.stage(Stage::BMatch);
        let run = train_stage_b(
            &mut student,
            &teacher,
            &data.train,
            &data.test,
            &cfg,
            self.cfg.seed,
            &mut Progress { quiet: self.quiet },
        )?;
        let dir = self.stage_dir("match");
        run.save(&dir)?;
        Ok(self.summary(&dir, &run))
    }

    fn train_student(&self) -> Result<String> {
        let teacher = load_model(&self.teacher_path(), "run `vser train-teacher` first")?;
        self.check_spec(&teacher, &self.cfg.teacher, "teacher")?;
        let mut student = load_model(&self.match_path(), "run `vser match` first")?;
        self.check_spec(&student, &self.cfg.student, "matched student")?;
        let data = self.data()?;
        let cfg = self.cfg.train.stage(Stage::CStudent);
        let run = train_stage_c(
            &mut student,
            &teacher,
            &data.train,
            &data.test,
            &cfg,
            self.cfg.seed,
            &mut Progress { quiet: self.quiet },
        )?;
        let dir = self.stage_dir("student");
        run.save(&dir)?;
        Ok(self.summary(&dir, &run))
    }

    fn eval(&self, checkpoint: Option<&Path>, split: SplitArg) -> Result<String> {
        let path = checkpoint.map_or_else(|| self.student_path(), Path::to_path_buf);
        let model = load_model(&path, "train a model first or pass --checkpoint")?;
        let data = self.data()?;
        let (name, examples) = match split {
            SplitArg::Train => ("train", &data.train),
            SplitArg::Test => ("test", &data.test),
        };
        let images: Vec<_> = examples.iter().map(|e| e.image.view()).collect();
        let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
        let report = evaluate(&model, &images, &labels)?;
        let tsv = report.to_tsv(&data.labels);
        let dir = self.stage_dir("eval");
        fs::create_dir_all(&dir)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        let parent = path
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
            .unwrap_or("run");
        fs::write(dir.join(format!("{parent}.{stem}.{name}.tsv")), &tsv)?;
        Ok(tsv)
    }

    fn attend(&self, checkpoint: Option<&Path>, clip: Option<&str>) -> Result<String> {
        let path = checkpoint.map_or_else(|| self.student_path(), Path::to_path_buf);
        let model = load_model(&path, "train a model first or pass --checkpoint")?;
        let rows = read_rows(&self.cache_dir())?;
        let clip_id = match clip {
            Some(c) => c.to_string(),
            None => rows
                .iter()
                .find(|r| r.split == "test")
                .or(rows.first())
                .map(|r| r.clip_id.clone())
                .ok_or_else(|| Error::InvalidDataset("empty cache".into()))?,
        };
        let manifest = ingest(&self.cfg.data.root, self.cfg.data.dataset)?;
        let entry = manifest
            .entries
            .iter()
            .find(|e| e.clip_id == clip_id)
            .ok_or_else(|| Error::InvalidDataset(format!("clip {clip_id:?} is not in the corpus")))?;
        let frontend = self.cfg.frontend.build()?;
        let variants = clip_variants(&frontend, &entry.path, &clip_id, self.cfg.seed)?;
        let mut masks: Vec<Array2<f32>> = Vec::new();
        let mut images = Vec::new();
        for (_, img) in &variants {
            let mask = extract_attention_mask(&model, img.pixels.view())?;
            masks.push(gaussian_smooth(&mask, self.cfg.attend.sigma)?.mask.mapv(|v| v as f32));
            images.push(img.pixels.clone());
        }
        let dir = self.stage_dir("attend");
        fs::create_dir_all(&dir)?;
        let mask_path = dir.join(format!("{clip_id}.mask.pgm"));
        let image_path = dir.join(format!("{clip_id}.image.pgm"));
        emit_figure(&masks, 2, 2, &mask_path)?;
        emit_figure(&images, 2, 2, &image_path)?;
        let order: Vec<&str> = variants.iter().map(|(v, _)| *v).collect();
        Ok(format!(
            "clip         {clip_id}\npanels       {} (row-major)\nmasks        {}\nimages       {}\n",
            order.join(", "),
            mask_path.display(),
            image_path.display()
        ))
    }
}

fn flops(cfg: &RunConfig, role: Option<Role>, convention: ConventionArg) -> String {
    let convention = match convention {
        ConventionArg::MacAsOne => FlopsConvention::MacAsOne,
        ConventionArg::MacAsTwo => FlopsConvention::MacAsTwo,
    };
    let n = cfg.teacher.n_classes;
    let specs: Vec<(String, ModelSpec)> = match role {
        None => vec![("teacher".into(), cfg.teacher.clone()), ("student".into(), cfg.student.clone())],
        Some(Role::Teacher) => vec![("teacher".into(), cfg.teacher.clone())],
        Some(Role::Student) => vec![("student".into(), cfg.student.clone())],
        Some(Role::SquareVariant) => vec![("square_variant".into(), ModelSpec::square_variant(cfg.teacher.depth, cfg.teacher.heads, n))],
        Some(Role::TeacherNoIce) => vec![("teacher_no_ice".into(), ModelSpec::teacher_no_ice(cfg.teacher.depth, cfg.teacher.heads, n))],
    };
    let mut out = String::new();
    for (name, spec) in specs {
        writeln!(out, "[{name}] depth {} heads {}", spec.depth, spec.heads).unwrap();
        writeln!(out, "{}", count_flops_with(&spec, convention)).unwrap();
    }
    out
}
