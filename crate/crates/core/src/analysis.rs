//! Cost models: multiply-accumulate counts, arithmetic intensity of linear
//! layers, and a wall-clock comparison of standard and octic MLPs.
//!
//! Counts are MACs (a multiply-add is one operation). Matrix products are
//! split into `linear` (projections, MLP, patch embedding, heads) and
//! `attention` (`QKᵀ` and `AV`). Everything else (softmax, norms, GELU,
//! residual adds, Fourier transforms) is `other` and only enters the total.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_divisible, OcticError, Result};
use crate::group::ORDER;
use crate::invariants::InvariantizationKind;
use crate::layers::{equiv_gelu, gelu, DenseLinear, EquivLinear};
use crate::model::{Family, ModelConfig};
use crate::tensor::Mat;

/// Element operations of one 8-point Fourier butterfly (24 adds, 8 mults).
pub const BUTTERFLY_OPS: u64 = 32;
/// MACs of the same transform done as a dense 8×8 product.
pub const DENSE_FOURIER_MACS: u64 = (ORDER * ORDER) as u64;
/// Element operations per entry of a layer norm with gain.
pub const NORM_OPS: u64 = 5;
/// Element operations per attention logit: scale, exponential, normalise.
pub const SOFTMAX_OPS: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OpClass {
    Linear,
    Attention,
    Other,
}

/// How the octic nonlinearity's change of basis is charged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FourierCost {
    /// Butterfly element ops, counted under `other`.
    Butterfly,
    /// A dense 8×8 product per copy, counted as `linear` (what a matmul
    /// profiler sees when the transform is a plain matrix product).
    Dense,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerCount {
    pub name: String,
    pub class: OpClass,
    pub macs: u64,
}

/// Per-layer counts of one family.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FlopReport {
    pub layers: Vec<LayerCount>,
}

impl FlopReport {
    fn push(&mut self, name: impl Into<String>, class: OpClass, macs: u64) {
        self.layers.push(LayerCount {
            name: name.into(),
            class,
            macs,
        });
    }

    fn extend(&mut self, prefix: &str, other: FlopReport) {
        for l in other.layers {
            self.push(format!("{prefix}.{}", l.name), l.class, l.macs);
        }
    }

    pub fn sum(&self, class: OpClass) -> u64 {
        self.layers.iter().filter(|l| l.class == class).map(|l| l.macs).sum()
    }

    pub fn linear(&self) -> u64 {
        self.sum(OpClass::Linear)
    }

    pub fn attention(&self) -> u64 {
        self.sum(OpClass::Attention)
    }

    pub fn other(&self) -> u64 {
        self.sum(OpClass::Other)
    }

    /// Matrix products only.
    pub fn matmul(&self) -> u64 {
        self.linear() + self.attention()
    }

    pub fn total(&self) -> u64 {
        self.matmul() + self.other()
    }
}

/// Standard and octic counts of the same shape.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlopComparison {
    pub standard: FlopReport,
    pub octic: FlopReport,
}

impl FlopComparison {
    pub fn linear_ratio(&self) -> f64 {
        self.standard.linear() as f64 / self.octic.linear() as f64
    }

    pub fn matmul_ratio(&self) -> f64 {
        self.standard.matmul() as f64 / self.octic.matmul() as f64
    }

    pub fn total_ratio(&self) -> f64 {
        self.standard.total() as f64 / self.octic.total() as f64
    }
}

fn dense_macs(c_in: usize, c_out: usize) -> u64 {
    (c_in * c_out) as u64
}

/// `3·C_in·C_out/16`: four `(C/8)²` blocks plus the shared E block used twice.
pub fn equiv_macs(c_in: usize, c_out: usize) -> u64 {
    let (ki, ko) = ((c_in / ORDER) as u64, (c_out / ORDER) as u64);
    4 * ki * ko + 2 * (2 * ki) * (2 * ko)
}

/// One transformer block over `l` tokens with hidden width `mlp`.
pub fn count_block(c: usize, mlp: usize, heads: usize, l: usize, octic: bool, fourier: FourierCost) -> Result<FlopReport> {
    if c == 0 || heads == 0 || l == 0 {
        return Err(OcticError::InvalidConfig("block dimensions must be positive".into()));
    }
    check_divisible("width", c, heads)?;
    if octic {
        check_divisible("width", c, ORDER * heads)?;
        check_divisible("MLP width", mlp, ORDER)?;
    }
    let lin = |a, b| if octic { equiv_macs(a, b) } else { dense_macs(a, b) };
    let (c64, l64, mlp64, h64) = (c as u64, l as u64, mlp as u64, heads as u64);
    let mut r = FlopReport::default();
    r.push("norm1", OpClass::Other, NORM_OPS * c64 * l64);
    r.push("qkv", OpClass::Linear, 3 * lin(c, c) * l64);
    r.push("logits", OpClass::Attention, l64 * l64 * c64);
    r.push("softmax", OpClass::Other, SOFTMAX_OPS * h64 * l64 * l64);
    r.push("mix", OpClass::Attention, l64 * l64 * c64);
    r.push("proj", OpClass::Linear, lin(c, c) * l64);
    r.push("residual", OpClass::Other, 2 * c64 * l64);
    r.push("norm2", OpClass::Other, NORM_OPS * c64 * l64);
    r.push("fc1", OpClass::Linear, lin(c, mlp) * l64);
    r.push("gelu", OpClass::Other, mlp64 * l64);
    if octic {
        let copies = mlp64 / ORDER as u64 * l64;
        match fourier {
            FourierCost::Butterfly => r.push("fourier", OpClass::Other, 2 * BUTTERFLY_OPS * copies),
            FourierCost::Dense => r.push("fourier", OpClass::Linear, 2 * DENSE_FOURIER_MACS * copies),
        }
    }
    r.push("fc2", OpClass::Linear, lin(mlp, c) * l64);
    Ok(r)
}

/// Standard and octic counts of one block with MLP ratio 4.
pub fn count_block_flops(c: usize, heads: usize, l: usize) -> Result<FlopComparison> {
    Ok(FlopComparison {
        standard: count_block(c, 4 * c, heads, l, false, FourierCost::Butterfly)?,
        octic: count_block(c, 4 * c, heads, l, true, FourierCost::Butterfly)?,
    })
}

/// Geometry of a whole model for counting. Unlike [`ModelConfig`] the MLP
/// width is free, so published shapes can be described.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelShape {
    pub name: String,
    pub width: usize,
    pub depth: usize,
    pub mlp: usize,
    pub heads: usize,
    pub patch: usize,
    pub image: usize,
    pub classes: usize,
    pub family: Family,
    /// Leading octic blocks (all of them for D8).
    pub octic_depth: usize,
    pub invariant: InvariantizationKind,
}

impl ModelShape {
    /// Tokens including the class token.
    pub fn tokens(&self) -> usize {
        (self.image / self.patch).pow(2) + 1
    }

    /// The same geometry as a plain ViT.
    pub fn standard(&self) -> ModelShape {
        ModelShape {
            family: Family::Standard,
            octic_depth: 0,
            ..self.clone()
        }
    }

    /// The same geometry with every block octic.
    pub fn d8(&self) -> ModelShape {
        ModelShape {
            family: Family::D8,
            octic_depth: self.depth,
            ..self.clone()
        }
    }
}

impl From<&ModelConfig> for ModelShape {
    fn from(cfg: &ModelConfig) -> Self {
        ModelShape {
            name: format!("{}", cfg.family),
            width: cfg.width,
            depth: cfg.depth,
            mlp: crate::layers::block::MLP_RATIO * cfg.width,
            heads: cfg.heads,
            patch: cfg.patch,
            image: cfg.image,
            classes: cfg.classes,
            family: cfg.family,
            octic_depth: cfg.octic_depth,
            invariant: cfg.invariant,
        }
    }
}

/// Published ViT shapes at 224² pixels, patch 14 and 1000 classes.
pub const PRESETS: [(&str, usize, usize, usize, usize); 5] = [
    ("vit-l", 1024, 24, 4096, 16),
    ("vit-h", 1280, 32, 5120, 16),
    ("vit-g", 1664, 48, 8192, 16),
    ("vit-e", 1792, 56, 15360, 16),
    ("vit-22b", 6144, 36, 24576, 48),
];

/// Whole-model improvement factors published for [`PRESETS`].
pub const PUBLISHED_RATIOS: [f64; 5] = [4.58, 4.58, 4.88, 5.01, 5.18];

/// Look up a preset by name (`vit-22b`, `vit22b` and `ViT-22B` all work).
pub fn preset(name: &str) -> Result<ModelShape> {
    let key: String = name.to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    let (n, width, depth, mlp, heads) = PRESETS
        .iter()
        .copied()
        .find(|p| p.0.replace('-', "") == key)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
            OcticError::InvalidConfig(format!("unknown shape '{name}' (known: {})", names.join(", ")))
        })?;
    Ok(ModelShape {
        name: n.to_string(),
        width,
        depth,
        mlp,
        heads,
        patch: 14,
        image: 224,
        classes: 1000,
        family: Family::D8,
        octic_depth: depth,
        invariant: InvariantizationKind::PowerSpectrum,
    })
}

/// Patch embedding, every block, final norm, invariant head and classifier.
/// The patch kernel is charged as a dense convolution in both families; the
/// invariant head runs on every token, as the model does.
pub fn count_model(shape: &ModelShape, fourier: FourierCost) -> Result<FlopReport> {
    let c = shape.width;
    if shape.patch == 0 || shape.image % shape.patch != 0 {
        return Err(OcticError::InvalidConfig(format!(
            "image size {} is not a multiple of patch size {}",
            shape.image, shape.patch
        )));
    }
    if shape.octic_depth > shape.depth {
        return Err(OcticError::InvalidConfig("more octic blocks than blocks".into()));
    }
    let l = shape.tokens();
    let (c64, l64) = (c as u64, l as u64);
    let mut r = FlopReport::default();
    let pixels = (3 * shape.patch * shape.patch) as u64;
    r.push("embed", OpClass::Linear, pixels * c64 * (l64 - 1));
    r.push("posenc", OpClass::Other, c64 * (l64 - 1));
    let mut head_done = false;
    let head = |r: &mut FlopReport| {
        let d = shape.invariant.output_dim(c) as u64;
        r.push("head.psi", OpClass::Other, d * l64);
        r.push("head.fc1", OpClass::Linear, d * c64 * l64);
        r.push("head.gelu", OpClass::Other, c64 * l64);
        r.push("head.fc2", OpClass::Linear, c64 * c64 * l64);
    };
    for i in 0..shape.depth {
        if shape.family == Family::I8 && i == shape.octic_depth {
            head(&mut r);
            head_done = true;
        }
        let octic = i < shape.octic_depth;
        r.extend(&format!("blocks.{i}"), count_block(c, shape.mlp, shape.heads, l, octic, fourier)?);
    }
    if shape.family == Family::I8 && !head_done {
        head(&mut r);
    }
    r.push("final_norm", OpClass::Other, NORM_OPS * c64 * l64);
    if shape.family == Family::D8 {
        head(&mut r);
    }
    r.push("classifier", OpClass::Linear, c64 * shape.classes as u64);
    Ok(r)
}

/// `shape` against its plain-ViT counterpart.
pub fn count_model_flops(shape: &ModelShape, fourier: FourierCost) -> Result<FlopComparison> {
    Ok(FlopComparison {
        standard: count_model(&shape.standard(), fourier)?,
        octic: count_model(shape, fourier)?,
    })
}

/// A linear layer moving `b` tokens from `c` to `f` channels at `p` bytes
/// per element.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntensityModel {
    pub b: f64,
    pub c: f64,
    pub f: f64,
    pub p: f64,
}

/// FLOP saving of an octic linear layer.
pub const OCTIC_FLOP_SAVING: f64 = 16.0 / 3.0;
/// Parameter saving of an octic linear layer.
pub const OCTIC_PARAM_SAVING: f64 = 8.0;

/// FLOPs per transferred byte: `2BCF / (P(BC + CF/s_w + BF))`, divided by the
/// FLOP saving `s_f` for octic layers.
pub fn arithmetic_intensity(m: &IntensityModel, octic: bool) -> f64 {
    let (s_f, s_w) = if octic {
        (OCTIC_FLOP_SAVING, OCTIC_PARAM_SAVING)
    } else {
        (1.0, 1.0)
    };
    intensity_with_savings(m, s_f, s_w)
}

pub fn intensity_with_savings(m: &IntensityModel, flop_saving: f64, param_saving: f64) -> f64 {
    let IntensityModel { b, c, f, p } = *m;
    (2.0 * b * c * f / flop_saving) / (p * (b * c + c * f / param_saving + b * f))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Crossover {
    pub c: f64,
    pub standard: f64,
    pub octic: f64,
    /// `|octic − standard| / standard` at the root.
    pub residual: f64,
    pub iterations: usize,
}

/// Width above which octic layers have the higher intensity, for
/// `F = f_ratio·C`, by bisection on `[lo, hi]`.
pub fn intensity_crossover(b: f64, p: f64, f_ratio: f64, lo: f64, hi: f64) -> Result<Crossover> {
    let at = |c: f64| IntensityModel { b, c, f: f_ratio * c, p };
    let diff = |c: f64| arithmetic_intensity(&at(c), true) - arithmetic_intensity(&at(c), false);
    let (mut a, mut z) = (lo, hi);
    let (fa, fz) = (diff(a), diff(z));
    if !(fa < 0.0 && fz > 0.0) {
        return Err(OcticError::InvalidConfig(format!(
            "no crossover in [{lo}, {hi}]: intensity differences {fa:.3e} and {fz:.3e}"
        )));
    }
    let mut iterations = 0;
    while z - a > 1e-12 * z && iterations < 200 {
        let mid = 0.5 * (a + z);
        if diff(mid) < 0.0 {
            a = mid;
        } else {
            z = mid;
        }
        iterations += 1;
    }
    let c = 0.5 * (a + z);
    let (standard, octic) = (arithmetic_intensity(&at(c), false), arithmetic_intensity(&at(c), true));
    Ok(Crossover {
        c,
        standard,
        octic,
        residual: (octic - standard).abs() / standard,
        iterations,
    })
}

/// Mean, standard deviation and median of block means, in microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimingStats {
    pub mean_us: f64,
    pub std_us: f64,
    pub median_of_means_us: f64,
}

impl TimingStats {
    fn from_samples(us: &[f64]) -> Self {
        let n = us.len() as f64;
        let mean = us.iter().sum::<f64>() / n;
        let var = us.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let mut means: Vec<f64> = us
            .chunks(BENCH_BLOCK)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        means.sort_by(f64::total_cmp);
        let mid = means.len() / 2;
        let median = if means.len() % 2 == 1 {
            means[mid]
        } else {
            0.5 * (means[mid - 1] + means[mid])
        };
        Self {
            mean_us: mean,
            std_us: var.sqrt(),
            median_of_means_us: median,
        }
    }
}

pub const MIN_WARMUP: usize = 10;
pub const MIN_TRIALS: usize = 30;
/// Trials per block for the median-of-means estimate.
pub const BENCH_BLOCK: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BenchOptions {
    pub c: usize,
    /// Tokens per forward pass.
    pub tokens: usize,
    pub warmup: usize,
    pub trials: usize,
    pub threads: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            c: 1024,
            tokens: 32,
            warmup: MIN_WARMUP,
            trials: MIN_TRIALS,
            threads: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub c: usize,
    pub tokens: usize,
    pub trials: usize,
    pub threads: usize,
    pub standard: TimingStats,
    pub octic: TimingStats,
    /// Analytic MAC ratio of the two MLPs (linear layers plus nonlinearity).
    pub mac_ratio: f64,
}

/// Time forward passes of `C → 4C → C` MLPs: dense with GELU against
/// octic with the equivariant GELU. Trials of the two are interleaved.
pub fn bench_mlp(opts: &BenchOptions) -> Result<BenchRecord> {
    if opts.trials < MIN_TRIALS || opts.warmup < MIN_WARMUP {
        return Err(OcticError::InvalidConfig(format!(
            "benchmark needs at least {MIN_WARMUP} warm-up runs and {MIN_TRIALS} trials"
        )));
    }
    if opts.threads == 0 || opts.tokens == 0 {
        return Err(OcticError::InvalidConfig("threads and tokens must be positive".into()));
    }
    check_divisible("width", opts.c, ORDER)?;
    let c = opts.c;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let d1 = DenseLinear::init(c, 4 * c, true, &mut rng);
    let d2 = DenseLinear::init(4 * c, c, true, &mut rng);
    let e1 = EquivLinear::init(c, 4 * c, true, &mut rng)?;
    let e2 = EquivLinear::init(4 * c, c, true, &mut rng)?;
    let x = Mat::uniform(c, opts.tokens, 1.0, &mut rng);
    let standard = || -> Result<Mat> { d2.forward(&d1.forward(&x)?.map(gelu)) };
    let octic = || -> Result<Mat> { e2.forward(&equiv_gelu(&e1.forward(&x)?)?) };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| OcticError::InvalidConfig(e.to_string()))?;
    let (ts, to) = pool.install(|| -> Result<(Vec<f64>, Vec<f64>)> {
        for _ in 0..opts.warmup {
            std::hint::black_box(standard()?);
            std::hint::black_box(octic()?);
        }
        let mut ts = Vec::with_capacity(opts.trials);
        let mut to = Vec::with_capacity(opts.trials);
        for _ in 0..opts.trials {
            let t = Instant::now();
            std::hint::black_box(standard()?);
            ts.push(t.elapsed().as_secs_f64() * 1e6);
            let t = Instant::now();
            std::hint::black_box(octic()?);
            to.push(t.elapsed().as_secs_f64() * 1e6);
        }
        Ok((ts, to))
    })?;
    let l = opts.tokens as u64;
    let std_macs = (dense_macs(c, 4 * c) + dense_macs(4 * c, c)) * l;
    let oct_macs = (equiv_macs(c, 4 * c) + equiv_macs(4 * c, c)) * l;
    Ok(BenchRecord {
        c,
        tokens: opts.tokens,
        trials: opts.trials,
        threads: opts.threads,
        standard: TimingStats::from_samples(&ts),
        octic: TimingStats::from_samples(&to),
        mac_ratio: std_macs as f64 / oct_macs as f64,
    })
}

impl fmt::Display for FourierCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FourierCost::Butterfly => "butterfly",
            FourierCost::Dense => "dense",
        })
    }
}

impl FromStr for FourierCost {
    type Err = OcticError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "butterfly" => Ok(FourierCost::Butterfly),
            "dense" => Ok(FourierCost::Dense),
            _ => Err(OcticError::InvalidConfig(format!("unknown Fourier cost '{s}' (butterfly, dense)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_ratio_is_sixteen_thirds() {
        for c in [8, 64, 384, 1024] {
            let r = count_block_flops(c, 1, 10).unwrap();
            assert_eq!(r.standard.linear() * 3, r.octic.linear() * 16);
            assert_eq!(r.standard.attention(), r.octic.attention());
        }
    }

    #[test]
    fn c8_block_by_hand() {
        // C = 8, one head, 3 tokens, MLP 32
        let r = count_block(8, 32, 1, 3, false, FourierCost::Butterfly).unwrap();
        assert_eq!(r.linear(), 3 * (3 * 64 + 64 + 8 * 32 + 32 * 8));
        assert_eq!(r.attention(), 2 * 9 * 8);
        let o = count_block(8, 32, 1, 3, true, FourierCost::Butterfly).unwrap();
        // per 8×8 map: four 1×1 blocks and a 2×2 block used twice = 12
        assert_eq!(equiv_macs(8, 8), 12);
        assert_eq!(o.linear(), 3 * (3 * 12 + 12 + 48 + 48));
    }

    #[test]
    fn depth_zero_is_embed_and_head() {
        let mut s = preset("vit-l").unwrap();
        s.depth = 0;
        s.octic_depth = 0;
        let r = count_model(&s, FourierCost::Butterfly).unwrap();
        assert!(r.layers.iter().all(|l| !l.name.starts_with("blocks")));
    }

    #[test]
    fn intensity_reduces_without_savings() {
        let m = IntensityModel { b: 196.0, c: 512.0, f: 2048.0, p: 2.0 };
        assert_eq!(intensity_with_savings(&m, 1.0, 1.0), arithmetic_intensity(&m, false));
    }

    #[test]
    fn preset_names_are_forgiving() {
        assert_eq!(preset("ViT-22B").unwrap().width, 6144);
        assert!(preset("vit-x").is_err());
    }
}
