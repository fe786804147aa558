//! Per-class optimization (Adam with linear warm-up) and the sequential
//! class-incremental driver.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::emb::{check_dim, l2_normalize, Embedding, EmbeddingSet};
use crate::encoder::{Encoder, PromptTemplate, ToyConfig, ToyTextEncoder};
use crate::error::{Error, Result};
use crate::neighborhood::{build_neighborhood, CandidateSpec, NeighborhoodSpec, DEFAULT_KEEP_K};
use crate::objective::{LossBreakdown, LossWeights, Objective};
use crate::subspace::{fit_pca, Subspace, SubspaceBasis};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// Advances the moments with gradient `g` and returns the update to add to
    /// the parameters.
    pub fn step(&mut self, g: &[f64], lr: f64, cfg: &AdamConfig) -> Result<Vec<f64>> {
        check_dim(self.m.len(), g.len())?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let mut update = Vec::with_capacity(g.len());
        for ((m, v), gi) in self.m.iter_mut().zip(self.v.iter_mut()).zip(g) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            update.push(-lr * m_hat / (v_hat.sqrt() + cfg.eps));
        }
        Ok(update)
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step(state: &AdamState, g: &[f64], lr: f64, cfg: &AdamConfig) -> Result<(AdamState, Vec<f64>)> {
    let mut next = state.clone();
    let update = next.step(g, lr, cfg)?;
    Ok((next, update))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    /// Optimize the text embedding directly.
    Identity,
    /// Optimize a token fed through a frozen [`ToyTextEncoder`].
    Toy,
}

/// Toy-mode encoder shape and token initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToySettings {
    pub vocab_size: usize,
    pub d_tok: usize,
    pub ctx_len: usize,
    /// Token row to start from; the table mean when absent.
    pub init_token: Option<usize>,
}

impl Default for ToySettings {
    fn default() -> Self {
        let c = ToyConfig::with_out_dim(0);
        Self {
            vocab_size: c.vocab_size,
            d_tok: c.d_tok,
            ctx_len: c.ctx_len,
            init_token: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub eta: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub weights: LossWeights,
    /// Number of leading components in the coarse subspace.
    pub k: usize,
    pub keep_k: usize,
    pub seed: u64,
    pub mode: EncoderMode,
    pub renormalize_each_step: bool,
    /// Subtract the neighborhood mean before projecting onto the subspaces.
    pub center_projections: bool,
    pub log_interval: usize,
    pub adam: AdamConfig,
    pub toy: ToySettings,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            eta: 1e-4,
            warmup_steps: 1000,
            total_steps: 5000,
            weights: LossWeights::default(),
            k: 1,
            keep_k: DEFAULT_KEEP_K,
            seed: 0,
            mode: EncoderMode::Identity,
            renormalize_each_step: false,
            center_projections: true,
            log_interval: 50,
            adam: AdamConfig::default(),
            toy: ToySettings::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if self.warmup_steps == 0 || self.warmup_steps > self.total_steps {
            return bad("need 0 < warmup_steps <= total_steps");
        }
        if self.log_interval == 0 {
            return bad("log_interval must be positive");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.keep_k == 0 {
            return bad("keep_k must be at least 1");
        }
        self.weights.validate()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Linear warm-up to `eta` over `warmup_steps`, then constant.
pub fn lr_at(config: &FitConfig, t: usize) -> Result<f64> {
    if t >= config.total_steps {
        return Err(Error::OutOfRange {
            t,
            total: config.total_steps,
        });
    }
    let ramp = ((t + 1) as f64 / config.warmup_steps as f64).min(1.0);
    Ok(config.eta * ramp)
}

/// Loss after `step` parameter updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub class_name: String,
    pub config: FitConfig,
    pub initial_embedding: Vec<f64>,
    pub embedding: Embedding,
    /// Final placeholder token in toy mode.
    pub token: Option<Vec<f64>>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub steps: usize,
    pub coarse_names: Vec<String>,
    pub fine_names: Vec<String>,
    pub basis_rank: usize,
    pub basis_checksum: String,
    pub encoder_checksum: Option<String>,
}

impl FitReport {
    pub fn final_loss(&self) -> LossBreakdown {
        self.trajectory.last().expect("trajectory is never empty").loss
    }
}

/// Inputs for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassData {
    pub exemplars: EmbeddingSet,
    /// Base text embedding used as the starting point in identity mode.
    pub z0: Embedding,
    pub spec: CandidateSpec,
}

impl ClassData {
    pub fn name(&self) -> &str {
        &self.spec.class_name
    }
}

/// Neighborhood and frozen subspaces of one class fit.
#[derive(Debug, Clone)]
pub struct FitGeometry {
    pub neighborhood: NeighborhoodSpec,
    pub basis: SubspaceBasis,
    pub coarse: Subspace,
    pub fine: Subspace,
}

/// Builds the neighborhood, fits PCA on its union and splits at `config.k`.
pub fn fit_geometry(
    exemplars: &EmbeddingSet,
    spec: &CandidateSpec,
    text_lookup: &EmbeddingSet,
    config: &FitConfig,
) -> Result<FitGeometry> {
    let neighborhood = build_neighborhood(spec, text_lookup, exemplars, config.keep_k)?;
    let basis = fit_pca(&neighborhood.union, true)?;
    if basis.rank() < 2 {
        return Err(Error::SplitInfeasible(basis.rank()));
    }
    let (mut coarse, mut fine) = basis.split(config.k)?;
    if !config.center_projections {
        coarse = coarse.uncentered();
        fine = fine.uncentered();
    }
    Ok(FitGeometry {
        neighborhood,
        basis,
        coarse,
        fine,
    })
}

/// Builds the neighborhood, fits PCA on it once, splits at `k`, and runs
/// `total_steps` Adam updates on the learnable token.
pub fn fit_class(
    exemplars: &EmbeddingSet,
    z0: &Embedding,
    spec: &CandidateSpec,
    text_lookup: &EmbeddingSet,
    config: &FitConfig,
) -> Result<FitReport> {
    config.validate()?;
    let d = text_lookup.dim();
    check_dim(d, exemplars.dim())?;
    check_dim(d, z0.dim())?;

    let FitGeometry {
        neighborhood,
        basis,
        coarse,
        fine,
    } = fit_geometry(exemplars, spec, text_lookup, config)?;
    let basis_checksum = basis.checksum();
    let objective = Objective {
        exemplars,
        neighborhood: &neighborhood,
        coarse_part: &coarse,
        fine_part: &fine,
        weights: config.weights,
    };

    let template = PromptTemplate::photo_of();
    let (encoder, mut param) = match config.mode {
        EncoderMode::Identity => (Encoder::Identity, z0.vector.clone()),
        EncoderMode::Toy => {
            let toy = ToyTextEncoder::init_frozen(
                config.seed,
                ToyConfig {
                    vocab_size: config.toy.vocab_size,
                    d_tok: config.toy.d_tok,
                    ctx_len: config.toy.ctx_len,
                    out_dim: d,
                },
            );
            let start = match config.toy.init_token {
                Some(id) => toy
                    .token_embedding(id)
                    .ok_or_else(|| Error::InvalidConfig(format!("init_token {id} outside vocabulary")))?
                    .to_vec(),
                None => toy.mean_token(),
            };
            (Encoder::Toy(Box::new(toy)), start)
        }
    };
    let encoder_checksum = encoder.checksum();
    let initial_embedding = encoder.encode(&template, &param)?;

    let mut adam = AdamState::new(param.len());
    let mut trajectory = Vec::with_capacity(config.total_steps / config.log_interval + 2);
    for t in 0..config.total_steps {
        let z = encoder.encode(&template, &param)?;
        let (loss, grad_z) = objective.evaluate(&z)?;
        if t % config.log_interval == 0 {
            trajectory.push(TrajectoryPoint { step: t, loss });
        }
        let grad = encoder.encode_vjp(&template, &param, &grad_z)?;
        let update = adam.step(&grad, lr_at(config, t)?, &config.adam)?;
        param.iter_mut().zip(&update).for_each(|(p, u)| *p += u);
        if config.renormalize_each_step {
            param = l2_normalize(&param)?;
        }
    }
    let z = encoder.encode(&template, &param)?;
    let (loss, _) = objective.evaluate(&z)?;
    trajectory.push(TrajectoryPoint {
        step: config.total_steps,
        loss,
    });

    debug_assert_eq!(basis.checksum(), basis_checksum);
    debug_assert_eq!(encoder.checksum(), encoder_checksum);
    Ok(FitReport {
        class_name: spec.class_name.clone(),
        config: config.clone(),
        initial_embedding,
        embedding: Embedding::new(spec.class_name.clone(), z),
        token: matches!(config.mode, EncoderMode::Toy).then_some(param),
        trajectory,
        steps: config.total_steps,
        coarse_names: neighborhood.coarse.names().map(str::to_string).collect(),
        fine_names: neighborhood.fine.names().map(str::to_string).collect(),
        basis_rank: basis.rank(),
        basis_checksum,
        encoder_checksum,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub embedding: Embedding,
    /// Hash of the fit config and inputs that produced the embedding.
    pub provenance: String,
}

/// Insertion-ordered store of optimized class embeddings. Entries are never
/// modified once inserted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassRegistry {
    entries: Vec<RegistryEntry>,
}

impl ClassRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, embedding: Embedding, provenance: String) -> Result<()> {
        if self.get(&embedding.name).is_some() {
            return Err(Error::DuplicateClass(embedding.name));
        }
        if let Some(first) = self.entries.first() {
            check_dim(first.embedding.dim(), embedding.dim())?;
        }
        self.entries.push(RegistryEntry { embedding, provenance });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.embedding.name == name)
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The first `n` class embeddings as a set.
    pub fn prefix(&self, n: usize) -> Result<EmbeddingSet> {
        let entries: Vec<Embedding> = self.entries[..n.min(self.len())]
            .iter()
            .map(|e| e.embedding.clone())
            .collect();
        let dim = entries.first().map_or(0, Embedding::dim);
        EmbeddingSet::from_entries(dim, entries)
    }

    pub fn embeddings(&self) -> Result<EmbeddingSet> {
        self.prefix(self.len())
    }
}

fn provenance(data: &ClassData, config: &FitConfig) -> String {
    let mut h = Sha256::new();
    h.update(config.hash().as_bytes());
    h.update(serde_json::to_string(&data.spec).expect("spec serializes").as_bytes());
    for x in data.z0.vector.iter().chain(data.exemplars.vectors().flatten()) {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Fits each class on its own, in order, with a shared config.
pub fn fit_sequential(classes: &[ClassData], text_lookup: &EmbeddingSet, config: &FitConfig) -> Result<ClassRegistry> {
    let jobs: Vec<(ClassData, FitConfig)> = classes.iter().map(|c| (c.clone(), config.clone())).collect();
    Ok(fit_sequential_each(&jobs, text_lookup, 1)?.0)
}

/// Fits each `(class, config)` job and inserts the results in input order.
///
/// Classes never see each other's data, so spreading jobs over `threads`
/// workers gives bitwise the same registry as a serial run.
pub fn fit_sequential_each(
    jobs: &[(ClassData, FitConfig)],
    text_lookup: &EmbeddingSet,
    threads: usize,
) -> Result<(ClassRegistry, Vec<FitReport>)> {
    let mut seen = std::collections::HashSet::new();
    for (c, _) in jobs {
        if !seen.insert(c.name()) {
            return Err(Error::DuplicateClass(c.name().to_string()));
        }
    }

    let run = |(c, cfg): &(ClassData, FitConfig)| fit_class(&c.exemplars, &c.z0, &c.spec, text_lookup, cfg);
    let threads = threads.max(1).min(jobs.len().max(1));
    let results: Vec<Result<FitReport>> = if threads == 1 {
        jobs.iter().map(run).collect()
    } else {
        let chunk = jobs.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(run).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("fit worker panicked"))
                .collect()
        })
    };

    let mut registry = ClassRegistry::new();
    let mut reports = Vec::with_capacity(jobs.len());
    for ((data, cfg), report) in jobs.iter().zip(results) {
        let report = report?;
        registry.insert(report.embedding.clone(), provenance(data, cfg))?;
        reports.push(report);
    }
    Ok((registry, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emb::cosine_sim;

    #[test]
    fn warmup_schedule() {
        let c = FitConfig::default();
        assert!((lr_at(&c, 0).unwrap() - 1e-7).abs() < 1e-20);
        assert_eq!(lr_at(&c, 999).unwrap(), 1e-4);
        assert_eq!(lr_at(&c, 4999).unwrap(), 1e-4);
        assert!(matches!(lr_at(&c, 5000), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn adam_first_step() {
        let (s, u) = adam_step(&AdamState::new(2), &[1.0, -1.0], 1e-3, &AdamConfig::default()).unwrap();
        let expected = 1e-3 / (1.0 + 1e-8);
        assert!((u[0] + expected).abs() < 1e-18);
        assert!((u[1] - expected).abs() < 1e-18);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn adam_zero_gradient_and_nonfinite() {
        let (_, u) = adam_step(&AdamState::new(3), &[0.0; 3], 1e-3, &AdamConfig::default()).unwrap();
        assert_eq!(u, vec![0.0; 3]);
        assert!(matches!(
            adam_step(&AdamState::new(1), &[f64::NAN], 1e-3, &AdamConfig::default()),
            Err(Error::NonFiniteGradient)
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = FitConfig::default();
        c.warmup_steps = 6000;
        assert!(c.validate().is_err());
        let mut c = FitConfig::default();
        c.eta = 0.0;
        assert!(c.validate().is_err());
        assert!(FitConfig::default().validate().is_ok());
    }

    fn toy_problem() -> (EmbeddingSet, EmbeddingSet, CandidateSpec) {
        let lookup = EmbeddingSet::from_pairs([
            ("c0", vec![1.0, 0.3, 0.0, 0.1]),
            ("c1", vec![0.9, -0.2, 0.2, 0.0]),
            ("f0", vec![0.2, 0.1, 1.0, 0.3]),
            ("f1", vec![0.1, 0.2, 0.4, 1.0]),
        ])
        .unwrap();
        let ex = EmbeddingSet::from_pairs([("x0", vec![0.0, 1.0, 0.0, 0.0])]).unwrap();
        let spec = CandidateSpec {
            class_name: "t".into(),
            coarse: vec!["c0".into(), "c1".into()],
            fine: vec!["f0".into(), "f1".into()],
        };
        (lookup, ex, spec)
    }

    #[test]
    fn alignment_only_reaches_exemplar_direction() {
        let (lookup, ex, spec) = toy_problem();
        let z0 = Embedding::new("t", vec![0.05, 0.0, 0.0, 0.0]);
        let cfg = FitConfig {
            weights: LossWeights::align_only(),
            keep_k: 2,
            ..FitConfig::default()
        };
        let r = fit_class(&ex, &z0, &spec, &lookup, &cfg).unwrap();
        let c = cosine_sim(&r.embedding.vector, &ex.entries()[0].vector).unwrap();
        assert!(c >= 0.99, "{c}");
        assert_eq!(r.trajectory.len(), 5000 / 50 + 1);
        for p in &r.trajectory {
            let l = p.loss;
            assert!((l.total - l.img_align).abs() <= 1e-9);
        }
    }

    #[test]
    fn toy_mode_runs_and_descends() {
        let (lookup, ex, spec) = toy_problem();
        let z0 = Embedding::new("t", vec![1.0, 0.0, 0.0, 0.0]);
        let cfg = FitConfig {
            mode: EncoderMode::Toy,
            // k = 1 makes the coarse term a sign test with no gradient
            k: 2,
            keep_k: 2,
            total_steps: 1000,
            warmup_steps: 100,
            eta: 1e-2,
            ..FitConfig::default()
        };
        let r = fit_class(&ex, &z0, &spec, &lookup, &cfg).unwrap();
        assert!(r.token.is_some());
        assert!(r.final_loss().total < r.trajectory[0].loss.total);
        let again = fit_class(&ex, &z0, &spec, &lookup, &cfg).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn registry_rejects_duplicates() {
        let mut reg = ClassRegistry::new();
        reg.insert(Embedding::new("a", vec![1.0]), "p".into()).unwrap();
        assert!(matches!(
            reg.insert(Embedding::new("a", vec![2.0]), "q".into()),
            Err(Error::DuplicateClass(_))
        ));
        assert_eq!(reg.prefix(1).unwrap().len(), 1);
        let (lookup, _, _) = toy_problem();
        assert!(fit_sequential(&[], &lookup, &FitConfig::default()).unwrap().is_empty());
    }
}
