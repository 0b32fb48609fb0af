//! D8, I8, H8 and standard ViT families: construction, forward and backward
//! passes, optimisers and the training loop.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{OcticError, Result};
use crate::group::{GroupElement, ORDER};
use crate::invariants::{HeadCache, InvariantHead, InvariantizationKind};
use crate::layers::block::BlockCache;
use crate::layers::checkpoint::{load_params, read_checkpoint, save_params};
use crate::layers::embed::{append_posenc_cls, split_posenc_cls_grad};
use crate::layers::norm::NormCache;
use crate::layers::{
    join, Block, ClassToken, DenseLinear, EquivLayerNorm, LayerNorm, Norm, ParamRef,
    Parameterized, PatchEmbed, PositionalEncoding,
};
use crate::steerable::{image_action, patchify, Image};
use crate::tensor::Mat;

/// Samples per gradient work item. Fixed, so the reduction tree does not
/// depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Plain ViT.
    Standard,
    /// Octic blocks throughout, invariantised before the classifier.
    D8,
    /// `k` octic blocks, invariant seam, then standard blocks.
    I8,
    /// `k` octic blocks, then standard blocks reading the raw features.
    H8,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Standard => "standard",
            Family::D8 => "d8",
            Family::I8 => "i8",
            Family::H8 => "h8",
        })
    }
}

impl FromStr for Family {
    type Err = OcticError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(Family::Standard),
            "d8" => Ok(Family::D8),
            "i8" => Ok(Family::I8),
            "h8" => Ok(Family::H8),
            _ => Err(OcticError::InvalidConfig(format!(
                "unknown family '{s}' (expected standard, d8, i8 or h8)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    /// Total number of blocks `l`.
    pub depth: usize,
    /// Number of leading octic blocks `k`.
    pub octic_depth: usize,
    pub width: usize,
    pub heads: usize,
    pub patch: usize,
    pub image: usize,
    pub classes: usize,
    pub invariant: InvariantizationKind,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            family: Family::D8,
            depth: 2,
            octic_depth: 2,
            width: 16,
            heads: 1,
            patch: 4,
            image: 16,
            classes: 8,
            invariant: InvariantizationKind::PowerSpectrum,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(OcticError::InvalidConfig(msg));
        if self.width == 0 || self.heads == 0 || self.patch == 0 || self.classes == 0 {
            return bad("width, heads, patch and classes must be positive".into());
        }
        if self.image == 0 || self.image % self.patch != 0 {
            return bad(format!("image size {} is not a multiple of patch size {}", self.image, self.patch));
        }
        if self.octic_depth > self.depth {
            return bad(format!("octic depth {} exceeds depth {}", self.octic_depth, self.depth));
        }
        match self.family {
            Family::D8 if self.octic_depth != self.depth => {
                return bad("the D8 family has only octic blocks (octic_depth = depth)".into())
            }
            Family::Standard if self.octic_depth != 0 => {
                return bad("the standard family has no octic blocks (octic_depth = 0)".into())
            }
            _ => {}
        }
        if self.width % self.heads != 0 {
            return bad(format!("width {} is not divisible by {} heads", self.width, self.heads));
        }
        if self.family != Family::Standard && self.width % (ORDER * self.heads) != 0 {
            return bad(format!(
                "octic width {} must be divisible by 8 x heads = {}",
                self.width,
                ORDER * self.heads
            ));
        }
        Ok(())
    }

    pub fn tokens_per_side(&self) -> usize {
        self.image / self.patch
    }

    /// Whether the patch embedding and token parameters are constrained.
    pub fn octic_stem(&self) -> bool {
        self.family != Family::Standard
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub embed: PatchEmbed,
    pub posenc: PositionalEncoding,
    pub cls: ClassToken,
    /// The first `octic_depth` blocks are octic.
    pub blocks: Vec<Block>,
    pub final_norm: Norm,
    /// Invariant head: at the seam for I8, after the final norm for D8.
    pub head: Option<InvariantHead>,
    pub classifier: DenseLinear,
}

/// Seeded, deterministic construction with every constraint satisfied.
pub fn build_model(cfg: &ModelConfig) -> Result<Model> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c = cfg.width;
    let octic = cfg.octic_stem();
    let embed = PatchEmbed::init(c, cfg.patch, octic, &mut rng)?;
    let posenc = PositionalEncoding::init(c, cfg.tokens_per_side(), octic, &mut rng)?;
    let cls = ClassToken::init(c, octic, &mut rng)?;
    let mut blocks = Vec::with_capacity(cfg.depth);
    for i in 0..cfg.depth {
        blocks.push(if i < cfg.octic_depth {
            Block::octic(c, cfg.heads, &mut rng)?
        } else {
            Block::standard(c, cfg.heads, &mut rng)?
        });
    }
    let final_norm = if cfg.family == Family::D8 {
        Norm::Equiv(EquivLayerNorm::new(c)?)
    } else {
        Norm::Standard(LayerNorm::new(c))
    };
    let head = match cfg.family {
        Family::D8 | Family::I8 => Some(InvariantHead::new(cfg.invariant, c, &mut rng)?),
        _ => None,
    };
    let classifier = DenseLinear::init(c, cfg.classes, true, &mut rng);
    Ok(Model {
        cfg: cfg.clone(),
        embed,
        posenc,
        cls,
        blocks,
        final_norm,
        head,
        classifier,
    })
}

/// Intermediate values needed by the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    patches: Mat,
    blocks: Vec<BlockCache>,
    seam: Option<HeadCache>,
    norm: NormCache,
    head: Option<HeadCache>,
    feature: Mat,
}

/// Named intermediate features of one forward pass.
pub type Trace = Vec<(String, Mat)>;

/// Cross-entropy of one logit column and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Mat, label: usize) -> (f64, Mat) {
    let z = logits.data();
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
    let lse = max + sum.ln();
    let mut d = Mat::from_vec(z.len(), 1, z.iter().map(|v| (v - lse).exp()).collect());
    *d.at_mut(label, 0) -= 1.0;
    (lse - z[label], d)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl Model {
    fn run(&self, img: &Image, mut trace: Option<&mut Trace>) -> Result<(Mat, ForwardCache)> {
        let cfg = &self.cfg;
        if img.m != cfg.image {
            return Err(OcticError::DimensionMismatch(format!(
                "model expects {0}x{0} images, got {1}x{1}",
                cfg.image, img.m
            )));
        }
        let mut record = |name: &str, m: &Mat| {
            if let Some(t) = trace.as_deref_mut() {
                t.push((name.to_string(), m.clone()));
            }
        };
        let patches = patchify(img, cfg.patch)?;
        let e = self.embed.forward(&patches)?;
        record("embed", &e);
        let mut x = append_posenc_cls(&e, &self.posenc.value, &self.cls.value)?;
        record("tokens", &x);
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut seam = None;
        for i in 0..=self.blocks.len() {
            if i == cfg.octic_depth && cfg.family == Family::I8 {
                let (y, c) = self.head.as_ref().expect("I8 has a head").forward(&x)?;
                record("seam", &y);
                x = y;
                seam = Some(c);
            }
            if let Some(b) = self.blocks.get(i) {
                let (y, c) = b.forward(&x)?;
                record(&format!("block{i}"), &y);
                x = y;
                caches.push(c);
            }
        }
        let (mut x, norm) = self.final_norm.forward(&x)?;
        record("norm", &x);
        let mut head = None;
        if cfg.family == Family::D8 {
            let (y, c) = self.head.as_ref().expect("D8 has a head").forward(&x)?;
            record("head", &y);
            x = y;
            head = Some(c);
        }
        let feature = x.cols_range(x.cols() - 1, 1);
        let logits = self.classifier.forward(&feature)?;
        record("logits", &logits);
        Ok((
            logits,
            ForwardCache {
                patches,
                blocks: caches,
                seam,
                norm,
                head,
                feature,
            },
        ))
    }

    /// Class logits (`classes×1`).
    pub fn forward(&self, img: &Image) -> Result<Mat> {
        Ok(self.run(img, None)?.0)
    }

    pub fn forward_cached(&self, img: &Image) -> Result<(Mat, ForwardCache)> {
        self.run(img, None)
    }

    /// Every intermediate feature, for equivariance diagnostics.
    pub fn trace(&self, img: &Image) -> Result<Trace> {
        let mut t = Vec::new();
        self.run(img, Some(&mut t))?;
        Ok(t)
    }

    /// Accumulate the gradient of `⟨dlogits, logits⟩` into `grad`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Mat, grad: &mut Model) -> Result<()> {
        let dfeat = self.classifier.backward(&cache.feature, dlogits, &mut grad.classifier)?;
        let n_tokens = cache.patches.cols() + 1;
        let mut dx = Mat::zeros(self.cfg.width, n_tokens);
        dx.set_col(n_tokens - 1, dfeat.data());
        if let (Some(h), Some(c)) = (&self.head, &cache.head) {
            dx = h.backward(c, &dx, grad.head.as_mut().expect("matching gradient"))?;
        }
        dx = self.final_norm.backward(&cache.norm, &dx, &mut grad.final_norm)?;
        for i in (0..=self.blocks.len()).rev() {
            if let Some(b) = self.blocks.get(i) {
                dx = b.backward(&cache.blocks[i], &dx, &mut grad.blocks[i])?;
            }
            if i == self.cfg.octic_depth {
                if let (Some(h), Some(c)) = (&self.head, &cache.seam) {
                    dx = h.backward(c, &dx, grad.head.as_mut().expect("matching gradient"))?;
                }
            }
        }
        let (dimg, dcls) = split_posenc_cls_grad(&dx);
        grad.posenc.value.add_assign(&dimg);
        grad.cls.value.add_assign(&dcls);
        self.embed.backward(&cache.patches, &dimg, &mut grad.embed);
        Ok(())
    }

    /// A gradient accumulator: same structure, all zeros.
    pub fn zeros_like(&self) -> Model {
        let mut g = self.clone();
        g.zero();
        g
    }

    /// Mean cross-entropy over `batch`, its gradient, and the number of
    /// correct predictions. Work is split into fixed chunks evaluated in
    /// parallel and summed in a fixed pairwise order, so the result does not
    /// depend on the thread count.
    pub fn loss_and_grad(&self, batch: &[Sample]) -> Result<(f64, Model, usize)> {
        if batch.is_empty() {
            return Err(OcticError::InvalidConfig("empty batch".into()));
        }
        let parts: Vec<(f64, Model, usize)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| -> Result<(f64, Model, usize)> {
                let mut grad = self.zeros_like();
                let mut loss = 0.0;
                let mut correct = 0;
                for (img, label) in chunk {
                    if *label >= self.cfg.classes {
                        return Err(OcticError::InvalidConfig(format!(
                            "label {label} out of range for {} classes",
                            self.cfg.classes
                        )));
                    }
                    let (logits, cache) = self.forward_cached(img)?;
                    let (l, d) = softmax_cross_entropy(&logits, *label);
                    loss += l;
                    correct += usize::from(argmax(logits.data()) == *label);
                    self.backward(&cache, &d, &mut grad)?;
                }
                Ok((loss, grad, correct))
            })
            .collect::<Result<_>>()?;
        let (loss, mut grad, correct) = tree_sum(parts);
        let scale = 1.0 / batch.len() as f64;
        for p in grad.params_mut("") {
            p.value.scale(scale);
        }
        Ok((loss * scale, grad, correct))
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        let cfg = serde_json::to_value(&self.cfg).map_err(|e| OcticError::Format(e.to_string()))?;
        let f = std::io::BufWriter::new(std::fs::File::create(path).map_err(OcticError::at(path))?);
        save_params(f, self, &cfg)
    }

    pub fn load(path: &Path) -> Result<Model> {
        let bytes = std::fs::read(path).map_err(OcticError::at(path))?;
        let ckpt = read_checkpoint(bytes.as_slice())?;
        let cfg: ModelConfig =
            serde_json::from_value(ckpt.config).map_err(|e| OcticError::Format(e.to_string()))?;
        let mut model = build_model(&cfg)?;
        load_params(bytes.as_slice(), &mut model)?;
        Ok(model)
    }

    /// Largest violation of any parameter constraint.
    pub fn constraint_violation(&mut self) -> Result<f64> {
        let mut worst = 0.0f64;
        for p in self.params_mut("") {
            let projected = p.constraint.project(p.value)?;
            worst = worst.max(projected.max_abs_diff(p.value));
        }
        Ok(worst)
    }

    /// Parameters held by linear layers of the octic and standard blocks.
    pub fn block_linear_params(&self) -> (usize, usize) {
        let k = self.cfg.octic_depth;
        let sum = |bs: &[Block]| bs.iter().map(Block::linear_params).sum();
        (sum(&self.blocks[..k]), sum(&self.blocks[k..]))
    }
}

fn add_into(dst: &mut Model, src: &mut Model) {
    for (d, s) in dst.params_mut("").into_iter().zip(src.params_mut("")) {
        d.value.add_assign(s.value);
    }
}

fn tree_sum(mut parts: Vec<(f64, Model, usize)>) -> (f64, Model, usize) {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(mut b) = it.next() {
                a.0 += b.0;
                a.2 += b.2;
                add_into(&mut a.1, &mut b.1);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().expect("at least one part")
}

impl Parameterized for Model {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        self.embed.collect_params(&join(prefix, "embed"), out);
        self.posenc.collect_params(&join(prefix, "posenc"), out);
        self.cls.collect_params(&join(prefix, "cls"), out);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.collect_params(&join(prefix, &format!("blocks.{i}")), out);
        }
        self.final_norm.collect_params(&join(prefix, "final_norm"), out);
        if let Some(h) = self.head.as_mut() {
            h.collect_params(&join(prefix, "head"), out);
        }
        self.classifier.collect_params(&join(prefix, "classifier"), out);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn sgd(lr: f64) -> Self {
        OptimizerKind::Sgd { lr, momentum: 0.9 }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First-order optimiser; constrained parameters are re-projected after
/// every step.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn step(&mut self, model: &mut Model, grad: &mut Model) -> Result<()> {
        let params = model.params_mut("");
        let grads = grad.params_mut("");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Mat::zeros(p.value.rows(), p.value.cols())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (w, gr) = (p.value.data_mut(), g.value.data());
            match self.kind {
                OptimizerKind::Sgd { lr, momentum } => {
                    let buf = self.m[i].data_mut();
                    for ((w, &g), b) in w.iter_mut().zip(gr).zip(buf.iter_mut()) {
                        *b = momentum * *b + g;
                        *w -= lr * *b;
                    }
                }
                OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(self.t);
                    let c2 = 1.0 - beta2.powi(self.t);
                    let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
                    for (((w, &g), m), v) in w.iter_mut().zip(gr).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
        model.reproject()
    }
}

/// Accuracy on the samples as given, accuracy over the seven non-trivial
/// D8 transforms of every sample, and the largest logit change caused by
/// any transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub acc: f64,
    pub rot_acc: f64,
    pub max_logit_shift: f64,
}

pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<Evaluation> {
    let per: Vec<(usize, usize, f64)> = samples
        .par_iter()
        .map(|(img, label)| -> Result<(usize, usize, f64)> {
            let base = model.forward(img)?;
            let hit = usize::from(argmax(base.data()) == *label);
            let mut rot_hits = 0;
            let mut shift = 0.0f64;
            for &g in &GroupElement::ALL[1..] {
                let z = model.forward(&image_action(g, img))?;
                rot_hits += usize::from(argmax(z.data()) == *label);
                shift = shift.max(z.max_abs_diff(&base));
            }
            Ok((hit, rot_hits, shift))
        })
        .collect::<Result<_>>()?;
    let n = samples.len().max(1) as f64;
    Ok(Evaluation {
        acc: per.iter().map(|p| p.0).sum::<usize>() as f64 / n,
        rot_acc: per.iter().map(|p| p.1).sum::<usize>() as f64 / (n * (ORDER - 1) as f64),
        max_logit_shift: per.iter().fold(0.0, |m, p| m.max(p.2)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch: usize,
    pub optimizer: OptimizerKind,
    /// Evaluate every this many steps (and after the last step).
    pub eval_every: usize,
    /// Seed of the minibatch sampler.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch: 32,
            optimizer: OptimizerKind::adam(1e-3),
            eval_every: 100,
            seed: 0,
        }
    }
}

/// One metrics row; `loss` is the mean training loss since the last row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub loss: f64,
    pub acc: f64,
    pub rot_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub rows: Vec<MetricRow>,
    pub final_eval: Evaluation,
}

/// Minibatch training with periodic evaluation. `on_row` sees every metrics
/// row as soon as it is computed.
pub fn train_demo(
    model: &mut Model,
    train: &[Sample],
    eval: &[Sample],
    opts: &TrainOptions,
    mut on_row: impl FnMut(&MetricRow),
) -> Result<TrainReport> {
    if train.is_empty() || opts.batch == 0 || opts.eval_every == 0 {
        return Err(OcticError::InvalidConfig(
            "training needs data, a positive batch size and a positive eval interval".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut opt = Optimizer::new(opts.optimizer);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut rows = Vec::new();
    let mut loss_acc = 0.0;
    let mut loss_n = 0;
    let mut final_eval = None;
    for step in 1..=opts.steps {
        let batch: Vec<Sample> = (0..opts.batch)
            .map(|_| {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                cursor += 1;
                train[order[cursor - 1]].clone()
            })
            .collect();
        let (loss, mut grad, _) = model.loss_and_grad(&batch)?;
        if !loss.is_finite() {
            return Err(OcticError::Diverged {
                step,
                detail: format!("loss is {loss}"),
            });
        }
        opt.step(model, &mut grad)?;
        loss_acc += loss;
        loss_n += 1;
        if step % opts.eval_every == 0 || step == opts.steps {
            let ev = evaluate(model, eval)?;
            let row = MetricRow {
                step,
                loss: loss_acc / loss_n as f64,
                acc: ev.acc,
                rot_acc: ev.rot_acc,
            };
            on_row(&row);
            rows.push(row);
            loss_acc = 0.0;
            loss_n = 0;
            final_eval = Some(ev);
        }
    }
    let final_eval = match final_eval {
        Some(ev) => ev,
        None => evaluate(model, eval)?,
    };
    Ok(TrainReport { rows, final_eval })
}

/// Cap the global rayon pool at `OCTIC_THREADS` when set. Returns the
/// resulting thread count.
pub fn init_threads_from_env() -> Result<usize> {
    if let Ok(v) = std::env::var("OCTIC_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| OcticError::InvalidConfig(format!("OCTIC_THREADS='{v}' is not a positive integer")))?;
        // a pool may already exist (e.g. in tests); keep it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_shapes;

    fn tiny(family: Family, k: usize, l: usize) -> ModelConfig {
        ModelConfig {
            family,
            depth: l,
            octic_depth: k,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(tiny(Family::D8, 1, 2).validate().is_err());
        assert!(tiny(Family::H8, 3, 2).validate().is_err());
        assert!(tiny(Family::Standard, 1, 2).validate().is_err());
        let mut c = tiny(Family::D8, 2, 2);
        c.image = 18;
        assert!(c.validate().is_err());
        c.image = 16;
        c.heads = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        let cfg = tiny(Family::I8, 1, 2);
        assert_eq!(build_model(&cfg).unwrap(), build_model(&cfg).unwrap());
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let (l, _) = softmax_cross_entropy(&Mat::zeros(8, 1), 3);
        assert!((l - 8f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn h8_has_no_invariant_head() {
        let m = build_model(&tiny(Family::H8, 1, 2)).unwrap();
        assert!(m.head.is_none());
        assert!(m.blocks[0].is_octic() && !m.blocks[1].is_octic());
    }

    #[test]
    fn gradient_is_thread_count_independent() {
        let m = build_model(&tiny(Family::D8, 1, 1)).unwrap();
        let batch = synthetic_shapes(10, 16, 1);
        let (l1, mut g1, _) = m.loss_and_grad(&batch).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let (l2, mut g2, _) = pool.install(|| m.loss_and_grad(&batch)).unwrap();
        assert_eq!(l1.to_bits(), l2.to_bits());
        for (a, b) in g1.params_mut("").into_iter().zip(g2.params_mut("")) {
            assert_eq!(a.value, b.value);
        }
    }
}
