//! Deterministic synthetic data sets used by the examples, the CLI
//! `gradcheck` command and the test suites.
//!
//! Axes of the collapse fixture space (dimension [`COLLAPSE_DIM`]):
//!
//! | axis | meaning |
//! |------|---------|
//! | 0 | text modality |
//! | 1 | image modality |
//! | 2 | sweet (negative: savory) |
//! | 3 | fried |
//! | 4..=6 | attributes of the first target |
//! | 7..=9 | attributes of the second target |
//! | 10..=13 | identities of the coarse words |
//! | 14..=17 | identities of the named items |
//! | 18.. | nuisance |

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::emb::{cosine_sim, Embedding, EmbeddingSet};
use crate::encoder::{PromptTemplate, Slot, ToyConfig, ToyTextEncoder, EOT, SOT};
use crate::error::Result;
use crate::eval::{classify, max_vocab_sim, mean_image_text_cosine, LabeledImageSet};
use crate::io::{format_labels, to_json_pretty, write_emb1, write_text, Candidates, RunConfig};
use crate::neighborhood::{build_neighborhood, CandidateSpec};
use crate::objective::{
    gradcheck, loss_coarse, loss_fine, loss_img_align, projected_similarities, total_loss, LossWeights,
};
use crate::optim::{fit_class, fit_geometry, ClassData, FitConfig, FitReport};
use crate::subspace::fit_pca;

pub const COLLAPSE_DIM: usize = 24;
const TEXT: usize = 0;
const IMAGE: usize = 1;
const SWEET: usize = 2;
const FRIED: usize = 3;
const ATTR_A: [usize; 3] = [4, 5, 6];
const ATTR_B: [usize; 3] = [7, 8, 9];
const NUISANCE: std::ops::Range<usize> = 18..COLLAPSE_DIM;

fn sparse(dim: usize, entries: &[(usize, f64)]) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for &(i, x) in entries {
        v[i] += x;
    }
    v
}

fn jitter(v: &mut [f64], axes: std::ops::Range<usize>, scale: f64, rng: &mut ChaCha8Rng) {
    let normal = Normal::new(0.0, scale).expect("positive scale");
    for i in axes {
        v[i] += normal.sample(rng);
    }
}

/// Two target classes whose few-shot exemplars all point the same way, with a
/// shared coarse neighborhood and disjoint fine negatives.
#[derive(Debug, Clone)]
pub struct CollapseFixture {
    /// Text vocabulary: coarse words, fine negatives and both targets' names.
    pub vocab: EmbeddingSet,
    pub targets: Vec<ClassData>,
    /// Images not used for fitting, labelled with the target names.
    pub held_out: LabeledImageSet,
}

/// Measurements of one configuration on the collapse fixture.
#[derive(Debug, Clone)]
pub struct CollapseOutcome {
    pub reports: Vec<FitReport>,
    pub embeddings: EmbeddingSet,
    pub mutual_cosine: f64,
    /// Per target: highest cosine to any vocabulary entry.
    pub max_vocab_sim: Vec<f64>,
    /// Per target: projected cosine to each coarse neighbor in the coarse subspace.
    pub coarse_similarities: Vec<Vec<f64>>,
    /// Held-out accuracy in percent.
    pub accuracy: f64,
    pub mean_image_text_cosine: f64,
}

#[derive(Debug, Clone, Copy)]
struct CollapseShape {
    coarse_attr: f64,
    item_attr: f64,
    savory: f64,
    extra_text: f64,
    image_attr: f64,
}

// Target attributes sit just under the distance Adam can travel in the default
// schedule (about 0.45 per coordinate), so alignment alone can erase them.
const COLLAPSE_SHAPE: CollapseShape = CollapseShape {
    coarse_attr: 0.55,
    item_attr: 0.45,
    savory: -0.6,
    extra_text: 0.55,
    image_attr: 0.15,
};

pub fn collapse() -> CollapseFixture {
    collapse_with(COLLAPSE_SHAPE)
}

fn collapse_with(p: CollapseShape) -> CollapseFixture {
    let d = COLLAPSE_DIM;
    let text = |extra: &[(usize, f64)]| {
        let mut e = vec![(TEXT, 0.3)];
        e.extend_from_slice(extra);
        sparse(d, &e)
    };
    let with_attrs = |mut v: Vec<f64>, axes: &[usize], x: f64| {
        axes.iter().for_each(|&i| v[i] += x);
        v
    };
    let coarse_word = |sweet: f64, fried: f64, id: usize| {
        let v = text(&[(SWEET, sweet), (FRIED, fried), (id, 0.1)]);
        with_attrs(with_attrs(v, &ATTR_A, p.coarse_attr), &ATTR_B, p.coarse_attr)
    };
    let item = |sweet: f64, attrs: &[usize], id: usize| {
        with_attrs(text(&[(SWEET, sweet), (FRIED, 0.15), (id, 0.1)]), attrs, p.item_attr)
    };

    // The second target's name carries extra text-modality weight, more than
    // alignment alone can remove in the step budget.
    let mut malapua = item(0.2, &ATTR_B, 15);
    malapua[TEXT] = p.extra_text;
    let vocab = EmbeddingSet::from_pairs([
        ("fried sweet", coarse_word(0.3, 0.3, 10)),
        ("dessert", coarse_word(0.35, 0.1, 11)),
        ("pastry", coarse_word(0.3, 0.2, 12)),
        ("confection", coarse_word(0.4, 0.05, 13)),
        ("anarsa", item(0.2, &ATTR_A, 14)),
        ("malapua", malapua),
        ("vada", item(p.savory, &ATTR_B, 16)),
        ("samosa", item(p.savory, &ATTR_A, 17)),
    ])
    .expect("static vocabulary");

    let shared = sparse(d, &[(IMAGE, 1.0), (SWEET, 0.3), (FRIED, 0.3)]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut exemplars = |name: &str| {
        EmbeddingSet::from_pairs((0..4).map(|i| {
            let mut v = shared.clone();
            jitter(&mut v, NUISANCE, 0.01, &mut rng);
            (format!("{name}-shot-{i}"), v)
        }))
        .expect("static exemplars")
    };
    let coarse: Vec<String> = ["fried sweet", "dessert", "pastry", "confection"]
        .map(String::from)
        .into();
    let target = |name: &str, fine: [&str; 2], ex: EmbeddingSet| ClassData {
        exemplars: ex,
        z0: vocab.get(name).expect("target in vocabulary").clone(),
        spec: CandidateSpec {
            class_name: name.to_string(),
            coarse: coarse.clone(),
            fine: fine.map(String::from).into(),
        },
    };
    // Each target's fine negatives carry only the other target's attributes.
    let targets = vec![
        target("anarsa", ["malapua", "vada"], exemplars("anarsa")),
        target("malapua", ["anarsa", "samosa"], exemplars("malapua")),
    ];

    let mut images = EmbeddingSet::new(d);
    let mut labels = Vec::new();
    for (name, attrs) in [("anarsa", ATTR_A), ("malapua", ATTR_B)] {
        for i in 0..6 {
            let v = with_attrs(shared.clone(), &attrs, p.image_attr);
            let mut v = v;
            jitter(&mut v, NUISANCE, 0.03, &mut rng);
            images
                .push(Embedding::new(format!("{name}-test-{i}"), v))
                .expect("unique");
            labels.push(name.to_string());
        }
    }
    CollapseFixture {
        vocab,
        targets,
        held_out: LabeledImageSet::new(images, labels).expect("aligned labels"),
    }
}

impl CollapseFixture {
    /// Fits both targets under `config` and measures the result.
    pub fn run(&self, config: &FitConfig) -> Result<CollapseOutcome> {
        let mut reports = Vec::new();
        let mut coarse_similarities = Vec::new();
        for t in &self.targets {
            let report = fit_class(&t.exemplars, &t.z0, &t.spec, &self.vocab, config)?;
            let geometry = fit_geometry(&t.exemplars, &t.spec, &self.vocab, config)?;
            coarse_similarities.push(projected_similarities(
                &report.embedding.vector,
                &geometry.neighborhood.coarse,
                &geometry.coarse,
            )?);
            reports.push(report);
        }
        let embeddings =
            EmbeddingSet::from_entries(self.vocab.dim(), reports.iter().map(|r| r.embedding.clone()).collect())?;
        let vectors: Vec<&[f64]> = embeddings.vectors().collect();
        let mutual_cosine = cosine_sim(vectors[0], vectors[1])?;
        let max_vocab_sim = vectors
            .iter()
            .map(|z| Ok(max_vocab_sim(z, &self.vocab)?.similarity))
            .collect::<Result<_>>()?;
        let accuracy = classify(&self.held_out, &embeddings)?.accuracy;
        let mean_image_text_cosine = mean_image_text_cosine(&self.held_out, &embeddings)?;
        Ok(CollapseOutcome {
            reports,
            embeddings,
            mutual_cosine,
            max_vocab_sim,
            coarse_similarities,
            accuracy,
            mean_image_text_cosine,
        })
    }
}

/// Configuration used for the collapse fixture: defaults apart from `weights`,
/// a `keep_k` matching its two fine candidates per target, and `k = 2` since a
/// single coarse component gives the coarse term no gradient.
pub fn collapse_config(weights: LossWeights) -> FitConfig {
    FitConfig {
        weights,
        keep_k: 2,
        k: 2,
        ..FitConfig::default()
    }
}

/// Seed of the shipped hierarchical fixture.
pub const HIERARCHICAL_SEED: u64 = 11;

/// `categories` coarse groups of `per_category` points each. Category centers
/// are spread along one axis with spacing `3.0`, plus a small per-category
/// offset on four more axes; every point gets isotropic noise of scale `0.5`.
pub fn hierarchical(seed: u64, categories: usize, per_category: usize, dim: usize) -> (EmbeddingSet, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.5).expect("positive scale");
    let mut set = EmbeddingSet::new(dim);
    let mut labels = Vec::new();
    let middle = (categories as f64 - 1.0) / 2.0;
    for c in 0..categories {
        let mut center = vec![0.0; dim];
        center[0] = 3.0 * (c as f64 - middle);
        for v in center.iter_mut().take(5.min(dim)).skip(1) {
            *v = rng.random_range(-0.3..0.3);
        }
        for i in 0..per_category {
            let v: Vec<f64> = center.iter().map(|m| m + noise.sample(&mut rng)).collect();
            set.push(Embedding::new(format!("cat{c}-class{i}"), v))
                .expect("unique names");
            labels.push(format!("cat{c}"));
        }
    }
    (set, labels)
}

/// One class-incremental task: the class to fit and its held-out images.
#[derive(Debug, Clone)]
pub struct ContinualTask {
    pub class: ClassData,
    pub test_images: LabeledImageSet,
}

/// Five well-separated classes sharing one text vocabulary, for the
/// sequential driver.
#[derive(Debug, Clone)]
pub struct ContinualFixture {
    pub vocab: EmbeddingSet,
    pub tasks: Vec<ContinualTask>,
}

pub fn continual(seed: u64) -> ContinualFixture {
    const NAMES: [&str; 5] = ["heron", "otter", "lichen", "quartz", "comet"];
    let d = 16;
    let id = |i: usize| 3 + i;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vocab = EmbeddingSet::new(d);
    for (i, n) in NAMES.iter().enumerate() {
        vocab
            .push(Embedding::new(*n, sparse(d, &[(0, 0.3), (id(i), 0.3)])))
            .expect("unique");
    }
    for (n, axis) in [("thing", 1), ("object", 2), ("nature", 1)] {
        let mut v = sparse(d, &[(0, 0.3), (axis, 0.3)]);
        jitter(&mut v, 8..d, 0.05, &mut rng);
        vocab.push(Embedding::new(n, v)).expect("unique");
    }

    let mut tasks = Vec::new();
    for (i, n) in NAMES.iter().enumerate() {
        let mut image = |tag: &str, k: usize| {
            let mut v = sparse(d, &[(1, 1.0), (id(i), 0.6)]);
            jitter(&mut v, 8..d, 0.05, &mut rng);
            (format!("{n}-{tag}-{k}"), v)
        };
        let exemplars = EmbeddingSet::from_pairs((0..4).map(|k| image("shot", k))).expect("unique");
        let test = EmbeddingSet::from_pairs((0..5).map(|k| image("test", k))).expect("unique");
        let fine: Vec<String> = NAMES.iter().filter(|m| *m != n).map(|m| m.to_string()).collect();
        tasks.push(ContinualTask {
            class: ClassData {
                exemplars,
                z0: vocab.get(n).expect("in vocab").clone(),
                spec: CandidateSpec {
                    class_name: n.to_string(),
                    coarse: vec!["thing".into(), "object".into(), "nature".into()],
                    fine,
                },
            },
            test_images: LabeledImageSet::new(test, vec![n.to_string(); 5]).expect("aligned"),
        });
    }
    ContinualFixture { vocab, tasks }
}

/// Configuration used for the continual fixture: defaults apart from a
/// `keep_k` matching its four fine candidates per class.
pub fn continual_config() -> FitConfig {
    FitConfig {
        keep_k: 4,
        ..FitConfig::default()
    }
}

/// Three orthogonal class embeddings and nine labelled images, two of which
/// resemble another class more than their own. Top-1 accuracy is 7/9.
pub fn three_class() -> (EmbeddingSet, LabeledImageSet) {
    let classes = EmbeddingSet::from_pairs([
        ("red", vec![1.0, 0.0, 0.0]),
        ("green", vec![0.0, 1.0, 0.0]),
        ("blue", vec![0.0, 0.0, 1.0]),
    ])
    .expect("static");
    let rows: [(&str, [f64; 3], &str); 9] = [
        ("r0", [0.9, 0.1, 0.0], "red"),
        ("r1", [0.8, 0.3, 0.1], "red"),
        ("r2", [0.4, 0.6, 0.0], "red"),
        ("g0", [0.1, 0.9, 0.2], "green"),
        ("g1", [0.0, 0.7, 0.1], "green"),
        ("g2", [0.2, 0.8, 0.3], "green"),
        ("b0", [0.1, 0.1, 0.9], "blue"),
        ("b1", [0.3, 0.0, 0.6], "blue"),
        ("b2", [0.2, 0.7, 0.5], "blue"),
    ];
    let images = EmbeddingSet::from_pairs(rows.iter().map(|(n, v, _)| (*n, v.to_vec()))).expect("static");
    let labels = rows.iter().map(|(_, _, l)| l.to_string()).collect();
    (classes, LabeledImageSet::new(images, labels).expect("aligned"))
}

/// Paths written by [`write_suite`].
#[derive(Debug, Clone)]
pub struct SuitePaths {
    pub dir: PathBuf,
    /// Collapse vocabulary; also the base-text file of both targets.
    pub vocab: PathBuf,
    /// One run config per collapse target, full objective.
    pub run_configs: Vec<PathBuf>,
    /// Both collapse targets as one sequence config.
    pub seq_config: PathBuf,
    pub held_out: PathBuf,
    pub held_out_labels: PathBuf,
    /// Exemplar images of the first collapse target.
    pub exemplars: PathBuf,
    pub three_class_classes: PathBuf,
    pub three_class_images: PathBuf,
    pub three_class_labels: PathBuf,
    pub hierarchical: PathBuf,
    pub hierarchical_labels: PathBuf,
}

/// Writes the collapse, three-class and hierarchical fixtures into `dir` as
/// EMB1, CSV and JSON files. Run configs use paths relative to `dir`.
pub fn write_suite(dir: impl AsRef<Path>) -> Result<SuitePaths> {
    let dir = dir.as_ref().to_path_buf();
    let labelled = |stem: &str, set: &LabeledImageSet| -> Result<(PathBuf, PathBuf)> {
        let emb = dir.join(format!("{stem}.emb1"));
        let csv = dir.join(format!("{stem}_labels.csv"));
        write_emb1(set.images(), &emb)?;
        let rows: Vec<(String, String)> = set
            .images()
            .names()
            .zip(set.labels())
            .map(|(n, l)| (n.to_string(), l.clone()))
            .collect();
        write_text(&csv, &format_labels(&rows)?)?;
        Ok((emb, csv))
    };

    let f = collapse();
    let vocab = dir.join("vocab.emb1");
    write_emb1(&f.vocab, &vocab)?;
    let (held_out, held_out_labels) = labelled("held_out", &f.held_out)?;
    let cfg = collapse_config(LossWeights::default());
    let mut runs = Vec::new();
    let mut run_configs = Vec::new();
    for t in &f.targets {
        let name = t.name();
        let exemplars = format!("{name}_exemplars.emb1");
        write_emb1(&t.exemplars, dir.join(&exemplars))?;
        let run = RunConfig {
            class_name: name.to_string(),
            exemplars_file: exemplars.into(),
            base_text_file: "vocab.emb1".into(),
            vocab_file: "vocab.emb1".into(),
            candidates: Candidates {
                coarse: t.spec.coarse.clone(),
                fine: t.spec.fine.clone(),
            },
            keep_k: cfg.keep_k,
            k: cfg.k,
            lambda1: cfg.weights.lambda1,
            lambda2: cfg.weights.lambda2,
            eta: cfg.eta,
            warmup_steps: cfg.warmup_steps,
            total_steps: cfg.total_steps,
            seed: cfg.seed,
            mode: cfg.mode,
            output_file: format!("{name}_fitted.emb1").into(),
        };
        let path = dir.join(format!("{name}_run.json"));
        write_text(&path, &to_json_pretty(&run))?;
        run_configs.push(path);
        runs.push(run);
    }
    let seq_config = dir.join("seq.json");
    write_text(&seq_config, &to_json_pretty(&runs))?;

    let (classes, images) = three_class();
    let three_class_classes = dir.join("three_class_classes.emb1");
    write_emb1(&classes, &three_class_classes)?;
    let (three_class_images, three_class_labels) = labelled("three_class_images", &images)?;

    let (set, labels) = hierarchical(HIERARCHICAL_SEED, 5, 15, 16);
    let (hierarchical, hierarchical_labels) = labelled("hierarchical", &LabeledImageSet::new(set, labels)?)?;

    Ok(SuitePaths {
        exemplars: dir.join(format!("{}_exemplars.emb1", f.targets[0].name())),
        dir,
        vocab,
        run_configs,
        seq_config,
        held_out,
        held_out_labels,
        three_class_classes,
        three_class_images,
        three_class_labels,
        hierarchical,
        hierarchical_labels,
    })
}

/// Worst relative errors over a batch of random gradient checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GradcheckSummary {
    pub instances: usize,
    pub img_align: f64,
    pub coarse: f64,
    pub fine: f64,
    pub total: f64,
    pub encoder_vjp: f64,
}

pub const GRADCHECK_STEP: f64 = 1e-4;
pub const LOSS_GRAD_TOL: f64 = 1e-5;
pub const VJP_GRAD_TOL: f64 = 1e-4;

impl GradcheckSummary {
    pub fn passed(&self) -> bool {
        [self.img_align, self.coarse, self.fine, self.total]
            .iter()
            .all(|&e| e <= LOSS_GRAD_TOL)
            && self.encoder_vjp <= VJP_GRAD_TOL
    }
}

fn uniform_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn uniform_set(rng: &mut ChaCha8Rng, prefix: &str, n: usize, d: usize) -> EmbeddingSet {
    EmbeddingSet::from_pairs((0..n).map(|i| (format!("{prefix}{i}"), uniform_vec(rng, d)))).expect("unique")
}

/// Runs `instances` random loss and encoder checks, instance `i` seeded with
/// `seed + i`.
pub fn gradcheck_suite(seed: u64, instances: usize) -> Result<GradcheckSummary> {
    let mut s = GradcheckSummary {
        instances,
        ..Default::default()
    };
    let h = GRADCHECK_STEP;
    for i in 0..instances as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
        let d = rng.random_range(8..=32);
        let shots = rng.random_range(1..=5);
        let exemplars = uniform_set(&mut rng, "x", shots, d);
        let lookup = uniform_set(&mut rng, "t", 8, d);
        let names: Vec<String> = lookup.names().map(String::from).collect();
        let spec = CandidateSpec {
            class_name: "target".into(),
            coarse: names[..4].to_vec(),
            fine: names[4..].to_vec(),
        };
        let nb = build_neighborhood(&spec, &lookup, &exemplars, 4)?;
        let basis = fit_pca(&nb.union, true)?;
        let k = rng.random_range(1..basis.rank());
        let (cp, fp) = basis.split(k)?;
        let z = uniform_vec(&mut rng, d);
        let w = LossWeights::new(rng.random_range(0.0..2.0), rng.random_range(0.0..2.0))?;

        let (_, g) = loss_img_align(&z, &exemplars)?;
        s.img_align = s
            .img_align
            .max(gradcheck(|z| Ok(loss_img_align(z, &exemplars)?.0), &g, &z, h)?);
        let (_, g) = loss_coarse(&z, &nb.coarse, &cp)?;
        s.coarse = s
            .coarse
            .max(gradcheck(|z| Ok(loss_coarse(z, &nb.coarse, &cp)?.0), &g, &z, h)?);
        let (_, g) = loss_fine(&z, &nb.fine, &fp)?;
        s.fine = s
            .fine
            .max(gradcheck(|z| Ok(loss_fine(z, &nb.fine, &fp)?.0), &g, &z, h)?);
        let (_, g) = total_loss(&z, &exemplars, &nb, &cp, &fp, w)?;
        s.total = s.total.max(gradcheck(
            |z| Ok(total_loss(z, &exemplars, &nb, &cp, &fp, w)?.0.total),
            &g,
            &z,
            h,
        )?);

        let out_dim = rng.random_range(4..=16);
        let enc = ToyTextEncoder::init_frozen(rng.random(), ToyConfig::with_out_dim(out_dim));
        let cfg = enc.config();
        let hole = rng.random_range(1..cfg.ctx_len - 1);
        let slots = (0..cfg.ctx_len - 1)
            .map(|j| match j {
                0 => Slot::Token(SOT),
                j if j == hole => Slot::Placeholder,
                _ => Slot::Token(rng.random_range(2..cfg.vocab_size)),
            })
            .chain(std::iter::once(Slot::Token(EOT)))
            .collect();
        let template = if i % 2 == 0 {
            PromptTemplate::new(slots)?
        } else {
            // placeholder in the read-out position
            PromptTemplate::new(vec![Slot::Token(SOT), Slot::Token(2), Slot::Placeholder])?
        };
        let e_c = uniform_vec(&mut rng, cfg.d_tok);
        let up = uniform_vec(&mut rng, out_dim);
        let g = enc.encode_vjp(&template, &e_c, &up)?;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        s.encoder_vjp = s
            .encoder_vjp
            .max(gradcheck(|x| Ok(dot(&up, &enc.encode(&template, x)?)), &g, &e_c, h)?);
    }
    Ok(s)
}
