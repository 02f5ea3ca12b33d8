//! EM training over image/tree pairs, evaluation and the end-to-end
//! gradient check.

mod dataset;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::labeler::{claim_quotas, pixel_softmax, predict_labels, quota_labels, quota_size, Cnn, CnnConfig, CnnTrace, Image, LabelMap};
use crate::losses::{
    parse_losses, semantic_label_loss_scores, total_loss, weight_decay_backward, LossBreakdown,
};
use crate::metrics::{EvalReport, Evaluator, SampleEval};
use crate::nncore::{finite_diff_check_with, Activation, Checkpoint, GradCheckReport, Param, ParamSet, Rng, Sgd};
use crate::pooling::{entity_features, lse_pool_backward, EntityFeatureSet};
use crate::rnn::{constrained_trace, greedy_parse, MergePlan, ParseTree, Rnn, RnnConfig};
use crate::synthdata::{generate, SceneSpec};
use crate::treeconv::SemanticTree;

pub use dataset::{write_synthetic, Dataset, Manifest, ManifestEntry, Sample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Weak,
    Fusion,
    Waterfall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub lambda: f64,
    pub margin: f64,
    pub pi: f64,
    pub rho_fg: f64,
    /// Minimum background share in the E-step; 0 leaves background
    /// without a quota.
    pub rho_bg: f64,
    /// Initial foreground quota. It is held until `rho_anneal_from` and
    /// then decayed linearly to `rho_fg` at `rho_anneal_to`.
    pub rho_fg_start: Option<f64>,
    pub rho_anneal_from: usize,
    pub rho_anneal_to: usize,
    pub d_sem: usize,
    pub cnn_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mode: Mode,
    pub fusion_weight_strong: f64,
    pub fusion_weight_weak: f64,
    /// Strong-only CNN iterations in waterfall mode; defaults to a third of
    /// `iterations`.
    pub pretrain_iterations: Option<usize>,
    /// Use at most this many strongly labeled samples (manifest order).
    pub max_strong: Option<usize>,
    /// Iterations between checkpoints; 0 disables them.
    pub checkpoint_interval: usize,
    /// Compute the samples of a mini-batch concurrently.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.03,
            momentum: 0.9,
            lambda: 1e-4,
            margin: 0.1,
            pi: 4.0,
            rho_fg: 0.05,
            rho_bg: 0.0,
            rho_fg_start: Some(0.12),
            rho_anneal_from: 0,
            rho_anneal_to: 2000,
            d_sem: 32,
            cnn_hidden: vec![8, 16],
            feature_dim: 16,
            activation: Activation::Tanh,
            iterations: 3000,
            batch_size: 8,
            seed: 0,
            mode: Mode::Weak,
            fusion_weight_strong: 1.0,
            fusion_weight_weak: 1.0,
            pretrain_iterations: None,
            max_strong: None,
            checkpoint_interval: 0,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("pi", self.pi),
            ("rho_fg", self.rho_fg),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
        let nonneg = [
            ("lambda", self.lambda),
            ("rho_bg", self.rho_bg),
            ("rho_fg_start", self.rho_fg_start.unwrap_or(self.rho_fg)),
            ("margin", self.margin),
            ("fusion_weight_strong", self.fusion_weight_strong),
            ("fusion_weight_weak", self.fusion_weight_weak),
        ];
        if let Some((name, v)) = nonneg.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.d_sem == 0 || self.feature_dim == 0 || self.batch_size == 0 || self.cnn_hidden.contains(&0) {
            return Err(Error::Config("layer widths and batch size must be positive".into()));
        }
        if self.rho_anneal_from > self.rho_anneal_to {
            return Err(Error::Config("rho_anneal_from exceeds rho_anneal_to".into()));
        }
        if self.pretrain_iterations.is_some_and(|p| p > self.iterations) {
            return Err(Error::Config("pretrain_iterations exceeds iterations".into()));
        }
        Ok(())
    }

    pub fn cnn_config(&self, classes: usize) -> CnnConfig {
        CnnConfig {
            classes,
            hidden: self.cnn_hidden.clone(),
            feature_dim: self.feature_dim,
            activation: self.activation,
        }
    }

    fn pretrain(&self) -> usize {
        match self.mode {
            Mode::Waterfall => self.pretrain_iterations.unwrap_or(self.iterations / 3),
            _ => 0,
        }
    }

    /// Foreground quota in effect at iteration `iter`.
    pub fn rho_at(&self, iter: usize) -> f64 {
        match self.rho_fg_start {
            Some(start) if iter < self.rho_anneal_to => {
                let span = self.rho_anneal_to.saturating_sub(self.rho_anneal_from).max(1);
                let t = iter.saturating_sub(self.rho_anneal_from) as f64 / span as f64;
                start + (self.rho_fg - start) * t
            }
            _ => self.rho_fg,
        }
    }

    fn exec(&self) -> Exec {
        if self.parallel {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// CNN labeler and recursive parser trained jointly.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub cnn: Cnn,
    pub rnn: Rnn,
}

impl Model {
    /// `classes` counts background; `relations` is `S`.
    pub fn new(config: &TrainConfig, classes: usize, relations: usize, rng: &mut Rng) -> Self {
        let cnn = Cnn::new(&config.cnn_config(classes), rng);
        let rnn = Rnn::new(
            &RnnConfig {
                input_dim: config.feature_dim,
                hidden: config.d_sem,
                relations,
            },
            rng,
        );
        Model { cnn, rnn }
    }

    pub fn classes(&self) -> usize {
        self.cnn.classes()
    }

    /// Rebuild a model from a checkpoint. Layer widths, class and relation
    /// counts come from the stored shapes; the activation comes from
    /// `config`.
    pub fn from_checkpoint(checkpoint: &Checkpoint, config: &TrainConfig) -> Result<Self> {
        let dim = |name: &str, axis: usize| {
            checkpoint
                .find(name)
                .and_then(|r| r.shape.get(axis).copied())
                .ok_or_else(|| Error::Data(format!("checkpoint lacks `{name}`")))
        };
        let mut hidden = Vec::new();
        while checkpoint.find(&format!("cnn.conv{}.weight", hidden.len() + 2)).is_some() {
            hidden.push(dim(&format!("cnn.conv{}.weight", hidden.len() + 1), 0)?);
        }
        let shaped = TrainConfig {
            cnn_hidden: hidden,
            feature_dim: dim("cnn.score.weight", 1)?,
            d_sem: dim("rnn.sem.weight", 0)?,
            ..config.clone()
        };
        shaped.validate()?;
        let classes = dim("cnn.score.weight", 0)?;
        let relations = dim("rnn.cat.weight", 0)?;
        let mut model = Model::new(&shaped, classes, relations, &mut Rng::new(0));
        checkpoint.restore(&mut model)?;
        Ok(model)
    }
}

impl ParamSet for Model {
    fn params(&self) -> Vec<&Param> {
        let mut out = self.cnn.params();
        out.extend(self.rnn.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.cnn.params_mut();
        out.extend(self.rnn.params_mut());
        out
    }
}

/// Categories the tree mentions, background included when the tree has a
/// background leaf.
fn tree_classes(tree: &SemanticTree) -> BTreeSet<usize> {
    tree.leaves().into_iter().collect()
}

/// Output of the E-step for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EStep {
    pub labels: LabelMap,
    pub entities: EntityFeatureSet,
    pub plan: MergePlan,
}

/// Quota relabeling restricted to `classes` and background, with the
/// optional background share.
fn quota_map(trace: &CnnTrace, classes: &BTreeSet<usize>, rho_fg: f64, config: &TrainConfig) -> Result<LabelMap> {
    let probs = pixel_softmax(&trace.scores);
    let list: Vec<usize> = classes.iter().copied().collect();
    if let Some(&k) = list.iter().find(|&&k| k >= probs.classes) {
        return Err(Error::Data(format!("category {k} outside 0..{}", probs.classes)));
    }
    if config.rho_bg == 0.0 {
        return quota_labels(&probs, &list, rho_fg);
    }
    let m = probs.pixel_count();
    let mut quotas: BTreeMap<usize, usize> = list.iter().map(|&k| (k, quota_size(rho_fg, m))).collect();
    let bg = quotas.entry(0).or_insert(0);
    *bg = (*bg).max(quota_size(config.rho_bg, m));
    claim_quotas(&probs, &quotas.into_iter().collect::<Vec<_>>())
}

fn estimate_labels(trace: &CnnTrace, tree: &SemanticTree, rho_fg: f64, config: &TrainConfig) -> Result<LabelMap> {
    quota_map(trace, &tree_classes(tree), rho_fg, config)
}

/// Estimate the latent label map, pool entity features and replay the
/// tree's merges against the current model.
pub fn e_step(sample: &Sample, model: &Model, config: &TrainConfig) -> Result<EStep> {
    let trace = model.cnn.trace(&sample.image);
    let labels = estimate_labels(&trace, &sample.tree, config.rho_fg, config)?;
    let entities = entity_features(&trace.features, &labels, &tree_classes(&sample.tree), config.pi)?;
    let plan = constrained_trace(&entities, &sample.tree, &model.rnn)?.plan;
    Ok(EStep {
        labels,
        entities,
        plan,
    })
}

/// Which labels supervise the pixel scores of one sample.
#[derive(Clone, Copy, Debug)]
enum Target<'a> {
    /// Re-estimate with the E-step from the current model, using this
    /// foreground quota.
    Estimate(f64),
    Fixed(&'a LabelMap),
}

/// Per-sample data losses.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct DataLoss {
    j_c: f64,
    j_struc: f64,
    j_rel: f64,
}

/// Forward and backward pass for one sample, accumulating gradients into
/// `model`. `label_weight` scales the semantic-label term and `scale`
/// scales everything (mini-batch averaging). With `parse` off only the
/// labeling loss is used.
fn accumulate(
    model: &mut Model,
    sample: &Sample,
    target: Target,
    label_weight: f64,
    parse: bool,
    scale: f64,
    config: &TrainConfig,
) -> Result<DataLoss> {
    let trace = model.cnn.trace(&sample.image);
    let estimated;
    let labels = match target {
        Target::Fixed(l) => l,
        Target::Estimate(rho_fg) => {
            estimated = estimate_labels(&trace, &sample.tree, rho_fg, config)?;
            &estimated
        }
    };
    let probs = pixel_softmax(&trace.scores);
    let (j_c, mut dscores) = semantic_label_loss_scores(&probs, labels)?;
    for g in &mut dscores {
        *g *= label_weight * scale;
    }
    let mut out = DataLoss {
        j_c: label_weight * j_c,
        ..DataLoss::default()
    };

    let mut dfeatures = None;
    if parse {
        let present = tree_classes(&sample.tree);
        let entities = entity_features(&trace.features, labels, &present, config.pi)?;
        if let Some(&k) = entities.missing.iter().next() {
            return Err(Error::MissingEntity(k));
        }
        let ptrace = constrained_trace(&entities, &sample.tree, &model.rnn)?;
        let (j_struc, j_rel, mut grads) = parse_losses(&ptrace, config.margin)?;
        grads.d_correct_q.iter_mut().for_each(|g| *g *= scale);
        grads.d_violator_q.iter_mut().for_each(|g| *g *= scale);
        grads.d_relation_probs.iter_mut().flatten().for_each(|g| *g *= scale);
        let dv = ptrace.backward(&mut model.rnn, &entities, &grads);
        let mut df = vec![0.0; trace.features.data.len()];
        for (e, g) in entities.entities.iter().zip(&dv) {
            lse_pool_backward(&trace.features, labels, e.category, config.pi, g, &mut df);
        }
        dfeatures = Some(df);
        out.j_struc = j_struc;
        out.j_rel = j_rel;
    }
    model.cnn.backward(&trace, &dscores, dfeatures.as_deref());
    Ok(out)
}

/// Recompute all losses against fixed E-step outputs, backpropagate and
/// apply one optimizer step.
pub fn m_step(
    sample: &Sample,
    estep: &EStep,
    model: &mut Model,
    optimizer: &mut Sgd,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    model.zero_grads();
    let d = accumulate(model, sample, Target::Fixed(&estep.labels), 1.0, true, 1.0, config)?;
    let breakdown = total_loss(d.j_c, d.j_struc, d.j_rel, model.params(), config.lambda)?;
    if !breakdown.is_finite() {
        return Err(Error::NonFiniteLoss {
            iter: 0,
            detail: format!("{breakdown:?}"),
        });
    }
    weight_decay_backward(model.params_mut(), config.lambda);
    optimizer.step(&mut model.params_mut())?;
    Ok(breakdown)
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iter: usize,
    pub j_c: f64,
    pub j_struc: f64,
    pub j_rel: f64,
    pub reg: f64,
    pub total: f64,
}

impl LogEntry {
    fn new(iter: usize, b: &LossBreakdown) -> Self {
        LogEntry {
            iter,
            j_c: b.j_c,
            j_struc: b.j_struc,
            j_rel: b.j_rel,
            reg: b.reg,
            total: b.total,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log entries serialize")
    }
}

#[derive(Clone, Copy, Debug)]
enum Role {
    Weak,
    Strong,
    /// Strong labels, labeling loss only.
    Pretrain,
}

/// EM trainer. Each iteration draws a mini-batch from a per-epoch shuffle,
/// computes every sample's gradients against the pre-update model, sums
/// them in batch order and applies one SGD step.
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    optimizer: Sgd,
    rng: Rng,
    samples: Vec<Sample>,
    roles: Vec<Role>,
    iter: usize,
}

impl Trainer {
    pub fn new(samples: Vec<Sample>, classes: usize, relations: usize, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if samples.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        for s in &samples {
            let k = s.tree.leaves().into_iter().max().unwrap_or(0);
            if k >= classes {
                return Err(Error::Data(format!("tree category {k} outside 0..{classes}")));
            }
            if let Some(lm) = &s.strong_labels {
                lm.validate(classes)?;
            }
        }
        let base = Rng::new(config.seed);
        let model = Model::new(&config, classes, relations, &mut base.fork(0));
        let mut trainer = Trainer {
            model,
            optimizer: Sgd::new(config.lr, config.momentum)?,
            rng: base.fork(1),
            roles: Vec::new(),
            samples,
            config,
            iter: 0,
        };
        trainer.assign_roles()?;
        Ok(trainer)
    }

    /// Replace the freshly initialized model, e.g. from a checkpoint.
    pub fn with_model(mut self, model: Model) -> Self {
        self.model = model;
        self
    }

    fn assign_roles(&mut self) -> Result<()> {
        let limit = self.config.max_strong.unwrap_or(usize::MAX);
        let mut strong = 0;
        self.roles = self
            .samples
            .iter()
            .map(|s| {
                if self.config.mode == Mode::Fusion && s.strong_labels.is_some() && strong < limit {
                    strong += 1;
                    Role::Strong
                } else {
                    Role::Weak
                }
            })
            .collect();
        if self.config.mode != Mode::Weak {
            let available = self.samples.iter().filter(|s| s.strong_labels.is_some()).count().min(limit);
            if available == 0 {
                return Err(Error::Data(format!(
                    "{:?} mode needs at least one strongly labeled sample",
                    self.config.mode
                )));
            }
        }
        Ok(())
    }

    fn pretrain_pool(&self) -> Vec<usize> {
        let limit = self.config.max_strong.unwrap_or(usize::MAX);
        (0..self.samples.len())
            .filter(|&i| self.samples[i].strong_labels.is_some())
            .take(limit)
            .collect()
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    /// Run every configured iteration, calling `on_iter` after each update.
    pub fn run(&mut self, mut on_iter: impl FnMut(&LogEntry, &Model) -> Result<()>) -> Result<Vec<LogEntry>> {
        let pretrain = self.config.pretrain();
        let batch = self.config.batch_size;
        let mut log = Vec::with_capacity(self.config.iterations);
        let mut order: Vec<(usize, Role)> = Vec::new();
        let mut cursor = 0;
        let mut phase_pretrain = None;
        while self.iter < self.config.iterations {
            let in_pretrain = self.iter < pretrain;
            if phase_pretrain != Some(in_pretrain) {
                phase_pretrain = Some(in_pretrain);
                order.clear();
                cursor = 0;
            }
            let mut picks = Vec::with_capacity(batch);
            while picks.len() < batch {
                if cursor == order.len() {
                    order = if in_pretrain {
                        self.pretrain_pool().into_iter().map(|i| (i, Role::Pretrain)).collect()
                    } else {
                        (0..self.samples.len()).map(|i| (i, self.roles[i])).collect()
                    };
                    self.rng.shuffle(&mut order);
                    cursor = 0;
                }
                picks.push(order[cursor]);
                cursor += 1;
            }
            let entry = self.step(&picks)?;
            on_iter(&entry, &self.model)?;
            log.push(entry);
        }
        Ok(log)
    }

    fn step(&mut self, picks: &[(usize, Role)]) -> Result<LogEntry> {
        let scale = 1.0 / picks.len() as f64;
        let config = &self.config;
        let rho_fg = config.rho_at(self.iter - config.pretrain().min(self.iter));
        let samples = &self.samples;
        let mut snapshot = self.model.clone();
        snapshot.zero_grads();
        let results: Vec<Result<(DataLoss, Vec<Vec<f64>>)>> = config.exec().map(picks.len(), |b| {
            let (i, role) = picks[b];
            let sample = &samples[i];
            let mut work = snapshot.clone();
            let loss = match role {
                Role::Weak => {
                    let w = if config.mode == Mode::Fusion {
                        config.fusion_weight_weak
                    } else {
                        1.0
                    };
                    accumulate(&mut work, sample, Target::Estimate(rho_fg), w, true, scale, config)
                }
                Role::Strong => {
                    let labels = sample.strong_labels.as_ref().expect("strong role has labels");
                    accumulate(
                        &mut work,
                        sample,
                        Target::Fixed(labels),
                        config.fusion_weight_strong,
                        true,
                        scale,
                        config,
                    )
                }
                Role::Pretrain => {
                    let labels = sample.strong_labels.as_ref().expect("pretrain role has labels");
                    accumulate(&mut work, sample, Target::Fixed(labels), 1.0, false, scale, config)
                }
            }?;
            Ok((loss, work.params().iter().map(|p| p.grad.data().to_vec()).collect()))
        });

        let mut data = DataLoss::default();
        let mut params = self.model.params_mut();
        params.iter_mut().for_each(|p| p.zero_grad());
        for r in results {
            let (loss, grads) = r.map_err(|e| match e {
                Error::NonFiniteGradient(_) | Error::NonFiniteLoss { .. } => Error::NonFiniteLoss {
                    iter: self.iter,
                    detail: e.to_string(),
                },
                other => other,
            })?;
            data.j_c += scale * loss.j_c;
            data.j_struc += scale * loss.j_struc;
            data.j_rel += scale * loss.j_rel;
            for (p, g) in params.iter_mut().zip(grads) {
                for (a, b) in p.grad.data_mut().iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        drop(params);

        let breakdown = total_loss(data.j_c, data.j_struc, data.j_rel, self.model.params(), config.lambda)?;
        if !breakdown.is_finite() {
            return Err(Error::NonFiniteLoss {
                iter: self.iter,
                detail: format!("{breakdown:?}"),
            });
        }
        weight_decay_backward(self.model.params_mut(), config.lambda);
        self.optimizer.step(&mut self.model.params_mut()).map_err(|e| Error::NonFiniteLoss {
            iter: self.iter,
            detail: e.to_string(),
        })?;
        let entry = LogEntry::new(self.iter, &breakdown);
        self.iter += 1;
        Ok(entry)
    }
}

/// Train a fresh model; `classes` counts background.
pub fn train(
    samples: Vec<Sample>,
    classes: usize,
    relations: usize,
    config: &TrainConfig,
) -> Result<(Model, Vec<LogEntry>)> {
    let mut trainer = Trainer::new(samples, classes, relations, config.clone())?;
    let log = trainer.run(|_, _| Ok(()))?;
    Ok((trainer.model, log))
}

/// Label map used to pool entities for parsing: the categories are taken
/// as given and each receives its quota of pixels.
fn parse_labels(trace: &CnnTrace, classes: &BTreeSet<usize>, config: &TrainConfig) -> Result<LabelMap> {
    quota_map(trace, classes, config.rho_fg, config)
}

/// Parse an image whose entity categories are known. A single category is
/// paired with the background entity.
pub fn parse_image(model: &Model, image: &Image, classes: &BTreeSet<usize>, config: &TrainConfig) -> Result<ParseTree> {
    let mut classes = classes.clone();
    if classes.is_empty() {
        return Err(Error::Data("no categories to parse".into()));
    }
    if classes.len() == 1 {
        classes.insert(0);
    }
    let trace = model.cnn.trace(image);
    let labels = parse_labels(&trace, &classes, config)?;
    let entities = entity_features(&trace.features, &labels, &classes, config.pi)?;
    greedy_parse(&entities, &model.rnn)
}

/// Predicted labels (plain argmax) for IoU and a greedy parse over the
/// ground-truth tree's categories for the accuracies.
pub fn evaluate_sample(model: &Model, sample: &Sample, labels: &LabelMap, config: &TrainConfig) -> Result<SampleEval> {
    let trace = model.cnn.trace(&sample.image);
    let pred = predict_labels(&pixel_softmax(&trace.scores));
    let classes = tree_classes(&sample.tree);
    let plabels = parse_labels(&trace, &classes, config)?;
    let entities = entity_features(&trace.features, &plabels, &classes, config.pi)?;
    let tree = greedy_parse(&entities, &model.rnn)?;
    let all: BTreeSet<usize> = (0..model.classes()).collect();
    SampleEval::new(&pred, labels, &all, Some(&tree), &sample.tree)
}

/// Corpus metrics over samples that carry ground-truth label maps.
pub fn evaluate(model: &Model, samples: &[Sample], config: &TrainConfig, exec: Exec) -> Result<EvalReport> {
    let evals = exec.map(samples.len(), |i| {
        let s = &samples[i];
        let labels = s
            .strong_labels
            .as_ref()
            .ok_or_else(|| Error::Data(format!("sample {i} has no ground-truth label map")))?;
        evaluate_sample(model, s, labels, config)
    });
    let mut ev = Evaluator::default();
    for e in evals {
        ev.add(&e?);
    }
    Ok(ev.report())
}

/// Scene used by [`gradcheck`]: 8x8 with three entities.
pub fn gradcheck_scene(seed: u64) -> Result<Sample> {
    let spec = SceneSpec {
        height: 8,
        width: 8,
        min_entities: 3,
        max_entities: 3,
        min_side: 2,
        max_side: 3,
        seed,
        ..SceneSpec::default()
    };
    Ok(generate(&spec, 0)?.into())
}

pub const GRADCHECK_EPS: f64 = 1e-4;

/// Finite-difference check of every parameter of the full loss (labeling,
/// structure, relation and weight decay) on a small synthetic sample. The
/// E-step label map is estimated once and held fixed.
pub fn gradcheck(seed: u64, eps: f64, config: &TrainConfig, exec: Exec) -> Result<GradCheckReport> {
    let sample = gradcheck_scene(seed)?;
    let spec = SceneSpec::default();
    let mut rng = Rng::new(seed).fork(0);
    let model = Model::new(config, spec.classes + 1, spec.relations, &mut rng);
    let estep = e_step(&sample, &model, config)?;
    let labels = estep.labels;
    finite_diff_check_with(exec, &model, eps, |m: &mut Model| {
        let d = accumulate(m, &sample, Target::Fixed(&labels), 1.0, true, 1.0, config)
            .expect("gradcheck sample is well formed");
        let reg = crate::losses::weight_decay(m.params(), config.lambda);
        weight_decay_backward(m.params_mut(), config.lambda);
        d.j_c + d.j_struc + d.j_rel + reg
    })
}
