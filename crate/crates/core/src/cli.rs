//! The `subembed` command line. Exit codes: 0 success, 2 invalid input,
//! 1 runtime failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::emb::{Embedding, EmbeddingSet};
use crate::error::Error;
use crate::eval::{classify, mean_image_baseline, nearest_neighbors, precision_at_k, project_2d};
use crate::fixtures::gradcheck_suite;
use crate::io::{
    label_images, read_addressed, read_emb1, read_labels, read_run_config, read_seq_config, to_json_pretty, write_emb1,
    write_text, BasisDocument, RunConfig,
};
use crate::neighborhood::rank_fine_negatives;
use crate::optim::{fit_class, fit_sequential_each, ClassData, FitReport};
use crate::subspace::{fit_pca, pc_ratio_report, suggest_k, DEFAULT_RATIO_THRESHOLD};

/// Caps worker threads for `fit-seq`. Results do not depend on it.
pub const THREADS_ENV: &str = "SUBEMBED_THREADS";

/// Instances in the `gradcheck` suite.
pub const GRADCHECK_INSTANCES: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "subembed", version, about = "Few-shot class embedding refinement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize one class embedding from a run config.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Optimize a sequence of classes, each independently.
    FitSeq {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit a PCA basis; with labels, also report per-component category ratios.
    Pca {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Eval(EvalCommand),
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Nearest vocabulary entries to one embedding.
    Neighbors {
        /// `<file>:<name>`
        #[arg(long)]
        query: String,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        n: usize,
    },
    /// Rank candidate negatives by mean similarity to exemplar images.
    FilterNegatives {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        exemplars: PathBuf,
        #[arg(long)]
        keep: usize,
    },
    /// Check analytic gradients against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// 2-D coordinates on the set's own top two principal components.
    Project2d {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Top-1 zero-shot classification of labelled images.
    Classify {
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precision@k of a text query against a labelled gallery.
    Retrieve(RetrieveArgs),
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// `<file>:<name>`; the name is the positive class.
    #[arg(long)]
    query: String,
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    k: usize,
}

#[derive(Debug, Subcommand)]
pub enum BaselineCommand {
    /// Per-class mean of labelled exemplar images.
    MeanImage {
        #[arg(long)]
        exemplars: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure of one command, carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Runtime(m) => m,
        }
    }

    fn runtime(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

fn with_path<T>(path: &Path, r: crate::Result<T>) -> CliResult<T> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Invalid(m) if !m.contains(&*path.to_string_lossy()) => {
            Failure::Invalid(format!("{}: {m}", path.display()))
        }
        f => f,
    })
}

fn load(path: &Path) -> CliResult<EmbeddingSet> {
    with_path(path, read_emb1(path))
}

fn load_labelled(images: &Path, labels: &Path) -> CliResult<crate::eval::LabeledImageSet> {
    let set = load(images)?;
    let rows = with_path(labels, read_labels(labels))?;
    with_path(labels, label_images(set, &rows))
}

/// Writes `text` to `out` or prints it.
fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(p) => write_text(p, text).map_err(Failure::runtime),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = to_json_pretty(value);
    s.push('\n');
    s
}

struct FitInputs {
    data: ClassData,
    vocab: EmbeddingSet,
}

fn load_run(cfg: &RunConfig) -> CliResult<FitInputs> {
    let exemplars = load(&cfg.exemplars_file)?;
    let base = load(&cfg.base_text_file)?;
    let z0 = base.get(&cfg.class_name).cloned().ok_or_else(|| {
        invalid(format!(
            "{}: no record named `{}` (base_text_file)",
            cfg.base_text_file.display(),
            cfg.class_name
        ))
    })?;
    let vocab = load(&cfg.vocab_file)?;
    for (field, path, set) in [
        ("exemplars_file", &cfg.exemplars_file, &exemplars),
        ("base_text_file", &cfg.base_text_file, &base),
    ] {
        if set.dim() != vocab.dim() {
            return Err(invalid(format!(
                "{field} {}: dimension {} does not match vocab_file dimension {}",
                path.display(),
                set.dim(),
                vocab.dim()
            )));
        }
    }
    let spec = cfg.candidate_spec();
    spec.validate()?;
    Ok(FitInputs {
        data: ClassData { exemplars, z0, spec },
        vocab,
    })
}

fn write_fit_output(cfg: &RunConfig, report: &FitReport) -> CliResult {
    let set = EmbeddingSet::from_entries(report.embedding.dim(), vec![report.embedding.clone()])?;
    write_emb1(&set, &cfg.output_file).map_err(Failure::runtime)
}

fn thread_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Serialize)]
struct SeqSummary<'a> {
    class_name: &'a str,
    output_file: &'a Path,
    final_loss: f64,
    provenance: &'a str,
}

fn run_command(cmd: Command) -> CliResult {
    match cmd {
        Command::Fit { config, report } => {
            let cfg = with_path(&config, read_run_config(&config))?;
            let inputs = load_run(&cfg)?;
            let fit_cfg = cfg.fit_config();
            fit_cfg.validate()?;
            let d = &inputs.data;
            let r = fit_class(&d.exemplars, &d.z0, &d.spec, &inputs.vocab, &fit_cfg)?;
            write_fit_output(&cfg, &r)?;
            emit(report.as_deref(), &json(&r))
        }
        Command::FitSeq { config } => {
            let cfgs = with_path(&config, read_seq_config(&config))?;
            let first = cfgs
                .first()
                .ok_or_else(|| invalid(format!("{}: empty sequence", config.display())))?;
            if let Some(c) = cfgs.iter().find(|c| c.vocab_file != first.vocab_file) {
                return Err(invalid(format!(
                    "{}: class `{}` uses vocab_file {}, expected {}",
                    config.display(),
                    c.class_name,
                    c.vocab_file.display(),
                    first.vocab_file.display()
                )));
            }
            let mut jobs = Vec::with_capacity(cfgs.len());
            let mut vocab = None;
            for c in &cfgs {
                let inputs = load_run(c)?;
                let fit_cfg = c.fit_config();
                fit_cfg.validate()?;
                vocab.get_or_insert(inputs.vocab);
                jobs.push((inputs.data, fit_cfg));
            }
            let vocab = vocab.expect("nonempty sequence");
            let (registry, reports) = fit_sequential_each(&jobs, &vocab, thread_cap())?;
            for (c, r) in cfgs.iter().zip(&reports) {
                write_fit_output(c, r)?;
            }
            let summary: Vec<SeqSummary> = cfgs
                .iter()
                .zip(&reports)
                .zip(registry.entries())
                .map(|((c, r), e)| SeqSummary {
                    class_name: &c.class_name,
                    output_file: &c.output_file,
                    final_loss: r.final_loss().total,
                    provenance: &e.provenance,
                })
                .collect();
            emit(None, &json(&summary))
        }
        Command::Pca { input, labels, k, out } => {
            let set = load(&input)?;
            let basis = fit_pca(&set, true)?;
            let report = match &labels {
                Some(l) => {
                    let rows = with_path(l, read_labels(l))?;
                    let lab = with_path(l, label_images(set.clone(), &rows))?;
                    let r = with_path(l, pc_ratio_report(&set, lab.labels(), &basis))?;
                    let s = suggest_k(&r, DEFAULT_RATIO_THRESHOLD);
                    Some((r, s))
                }
                None => None,
            };
            let k = k.or(report.as_ref().map(|(_, s)| *s));
            if let Some(k) = k {
                basis.split(k)?;
            }
            let doc = BasisDocument::new(&basis, k, report.as_ref().map(|(r, s)| (r, *s)));
            emit(Some(&out), &json(&doc))
        }
        Command::Eval(EvalCommand::Classify {
            classes,
            images,
            labels,
            out,
        }) => {
            let class_embs = load(&classes)?;
            let imgs = load_labelled(&images, &labels)?;
            let r = classify(&imgs, &class_embs)?;
            let mut csv = String::from("class,correct,total,accuracy\n");
            for c in &r.per_class {
                let acc = c.accuracy.map_or(String::new(), |a| a.to_string());
                let _ = writeln!(csv, "{},{},{},{acc}", c.class, c.correct, c.total);
            }
            let _ = writeln!(csv, "overall,{},{},{}", r.correct, r.total, r.accuracy);
            emit(out.as_deref(), &csv)
        }
        Command::Eval(EvalCommand::Retrieve(a)) => {
            let q = read_addressed(&a.query).map_err(|e| match Failure::from(e) {
                Failure::Invalid(m) => invalid(format!("--query {}: {m}", a.query)),
                f => f,
            })?;
            let gallery = load_labelled(&a.gallery, &a.labels)?;
            let r = precision_at_k(&q.vector, &gallery, a.k, &q.name)?;
            emit(None, &json(&r))
        }
        Command::Baseline(BaselineCommand::MeanImage { exemplars, labels, out }) => {
            let imgs = load_labelled(&exemplars, &labels)?;
            let means = mean_image_baseline(&imgs)?;
            write_emb1(&means, &out).map_err(Failure::runtime)
        }
        Command::Neighbors { query, vocab, n } => {
            let q: Embedding = read_addressed(&query)?;
            let v = load(&vocab)?;
            emit(None, &json(&nearest_neighbors(&q.vector, &v, n)?))
        }
        Command::FilterNegatives {
            candidates,
            exemplars,
            keep,
        } => {
            let c = load(&candidates)?;
            let x = load(&exemplars)?;
            emit(None, &json(&rank_fine_negatives(&c, &x, keep)?))
        }
        Command::Gradcheck { seed } => {
            let s = gradcheck_suite(seed, GRADCHECK_INSTANCES)?;
            emit(None, &json(&s))?;
            if s.passed() {
                Ok(())
            } else {
                Err(Failure::Runtime("gradient check exceeded tolerance".into()))
            }
        }
        Command::Project2d { input, out } => {
            let set = load(&input)?;
            let coords = project_2d(&set)?;
            let mut csv = String::from("name,x,y\n");
            for (name, [x, y]) in set.names().zip(coords) {
                let _ = writeln!(csv, "{name},{x},{y}");
            }
            emit(Some(&out), &csv)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run_command(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
