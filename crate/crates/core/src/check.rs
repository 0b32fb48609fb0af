//! Property suites behind `octic check`: group algebra, layer
//! equivariance, model invariance and the invariant maps.
//!
//! Every row carries either one residual per group element (slot order of
//! [`GroupElement::ALL`]) or a single scalar, plus the tolerance it is held
//! to. A row fails when its worst value exceeds the tolerance.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{OcticError, Result};
use crate::group::{
    act_isotypical8, fourier_matrix, irrep_matrix, isotypical_matrix, isotypical_to_regular8,
    regular_matrix, regular_to_isotypical8, GroupElement, IrrepLabel, ORDER,
};
use crate::invariants::{InvariantizationKind, Invariantizer};
use crate::layers::{
    add_posenc_and_cls, equiv_gelu, Attention, Block, ClassToken, EquivLayerNorm, EquivLinear, Parameterized,
    PatchEmbed, PositionalEncoding,
};
use crate::model::{build_model, Family, ModelConfig};
use crate::steerable::{
    act, image_action, iso_act_rows, patchify, reynolds_project_intertwiner, residuals_by_element,
    ChannelRep, GridGeometry, Image, SteerableFeature, IMAGE_CHANNELS,
};
use crate::tensor::{matmul, Mat};

pub const GROUP_TOL: f64 = 1e-13;
pub const PATTERN_TOL: f64 = 1e-12;
pub const LAYER_TOL: f64 = 1e-11;
pub const MODEL_TOL: f64 = 1e-9;
pub const INVARIANT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Group,
    Layers,
    Model,
    Invariants,
    All,
}

impl Scope {
    pub fn includes(self, other: Scope) -> bool {
        self == Scope::All || self == other
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Group => "group",
            Scope::Layers => "layers",
            Scope::Model => "model",
            Scope::Invariants => "invariants",
            Scope::All => "all",
        })
    }
}

impl FromStr for Scope {
    type Err = OcticError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "group" => Ok(Scope::Group),
            "layers" => Ok(Scope::Layers),
            "model" => Ok(Scope::Model),
            "invariants" => Ok(Scope::Invariants),
            "all" => Ok(Scope::All),
            _ => Err(OcticError::InvalidConfig(format!(
                "unknown scope '{s}' (expected group, layers, model, invariants or all)"
            ))),
        }
    }
}

/// Deliberate defects, used to show that the suites can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Flip the sign of the off-diagonal entries of `ρ_E(r)`.
    ESignFlip,
    /// Apply a different E matrix to the second doublet component of every
    /// equivariant linear map.
    UnsharedE,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Residual {
    PerElement([f64; ORDER]),
    Scalar(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub suite: Scope,
    pub name: String,
    pub residual: Residual,
    pub tol: f64,
    /// Samples behind each value.
    pub samples: usize,
}

impl CheckRow {
    pub fn worst(&self) -> f64 {
        match self.residual {
            Residual::PerElement(v) => v.into_iter().fold(0.0, nan_max),
            Residual::Scalar(v) => v,
        }
    }

    pub fn passed(&self) -> bool {
        self.worst() <= self.tol
    }
}

/// NaN-propagating max, so a broken layer never reads as a pass.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    /// Random inputs per layer (and per invariant map, tokens = 10× this).
    pub inputs: usize,
    pub seed: u64,
    pub fault: Fault,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            inputs: 100,
            seed: 0,
            fault: Fault::None,
        }
    }
}

pub fn run_checks(scope: Scope, opts: &CheckOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    if scope.includes(Scope::Group) {
        rows.extend(group_suite(opts)?);
    }
    if scope.includes(Scope::Layers) {
        rows.extend(layer_suite(opts)?);
    }
    if scope.includes(Scope::Model) {
        rows.extend(model_suite(opts)?);
    }
    if scope.includes(Scope::Invariants) {
        rows.extend(invariant_suite(opts)?);
    }
    Ok(rows)
}

type M8 = [[f64; ORDER]; ORDER];

fn mul8(a: &M8, b: &M8) -> M8 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..ORDER).map(|k| a[i][k] * b[k][j]).sum()))
}

fn transpose8(a: &M8) -> M8 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[j][i]))
}

fn diff8(a: &M8, b: &M8) -> f64 {
    (0..ORDER * ORDER).fold(0.0, |m, n| m.max((a[n / ORDER][n % ORDER] - b[n / ORDER][n % ORDER]).abs()))
}

fn rotation() -> GroupElement {
    GroupElement::R
}

fn irrep(label: IrrepLabel, g: GroupElement, fault: Fault) -> Vec<Vec<f64>> {
    let mut m = irrep_matrix(label, g);
    if fault == Fault::ESignFlip && label == IrrepLabel::E && g == rotation() {
        m[0][1] = -m[0][1];
        m[1][0] = -m[1][0];
    }
    m
}

fn iso_matrix(g: GroupElement, fault: Fault) -> M8 {
    let mut m = isotypical_matrix(g);
    if fault == Fault::ESignFlip && g == rotation() {
        for base in [4, 6] {
            m[base][base + 1] = -m[base][base + 1];
            m[base + 1][base] = -m[base + 1][base];
        }
    }
    m
}

fn group_suite(opts: &CheckOptions) -> Result<Vec<CheckRow>> {
    let fault = opts.fault;
    let row = |name: &str, residual, tol, samples| CheckRow {
        suite: Scope::Group,
        name: name.to_string(),
        residual,
        tol,
        samples,
    };
    let mut out = Vec::new();

    let mut reg = [0.0f64; ORDER];
    let mut irr = [0.0f64; ORDER];
    for g in GroupElement::ALL {
        for h in GroupElement::ALL {
            let gh = g.mul(h);
            let r = diff8(&mul8(&regular_matrix(g), &regular_matrix(h)), &regular_matrix(gh));
            reg[g.index()] = reg[g.index()].max(r);
            for label in [IrrepLabel::A1, IrrepLabel::A2, IrrepLabel::B1, IrrepLabel::B2, IrrepLabel::E] {
                let (a, b, c) = (irrep(label, g, fault), irrep(label, h, fault), irrep(label, gh, fault));
                let d = a.len();
                for i in 0..d {
                    for j in 0..d {
                        let prod: f64 = (0..d).map(|k| a[i][k] * b[k][j]).sum();
                        irr[g.index()] = irr[g.index()].max((prod - c[i][j]).abs());
                    }
                }
            }
        }
    }
    out.push(row("regular homomorphism", Residual::PerElement(reg), GROUP_TOL, ORDER));
    out.push(row("irrep homomorphism", Residual::PerElement(irr), GROUP_TOL, ORDER));

    let q = fourier_matrix();
    let qt = transpose8(&q);
    let eye: M8 = std::array::from_fn(|i| std::array::from_fn(|j| f64::from(u8::from(i == j))));
    let orth = diff8(&mul8(&q, &qt), &eye).max(diff8(&mul8(&qt, &q), &eye));
    out.push(row("fourier orthogonality", Residual::Scalar(orth), GROUP_TOL, 1));

    let block = GroupElement::ALL.map(|g| diff8(&mul8(&mul8(&qt, &regular_matrix(g)), &q), &iso_matrix(g, fault)));
    out.push(row("block diagonalisation", Residual::PerElement(block), GROUP_TOL, 1));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = 100 * opts.inputs.max(1);
    let mut fly = 0.0f64;
    let mut fourier_eq = [0.0f64; ORDER];
    for _ in 0..n {
        let x: [f64; ORDER] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let dense_inv: [f64; ORDER] = std::array::from_fn(|i| (0..ORDER).map(|j| q[i][j] * x[j]).sum());
        let dense_fwd: [f64; ORDER] = std::array::from_fn(|i| (0..ORDER).map(|j| qt[i][j] * x[j]).sum());
        let (inv, fwd) = (isotypical_to_regular8(&x), regular_to_isotypical8(&x));
        for i in 0..ORDER {
            fly = fly.max((inv[i] - dense_inv[i]).abs()).max((fwd[i] - dense_fwd[i]).abs());
        }
        for g in GroupElement::ALL {
            let rg = regular_matrix(g);
            let moved: [f64; ORDER] = std::array::from_fn(|i| (0..ORDER).map(|j| rg[i][j] * x[j]).sum());
            let lhs = regular_to_isotypical8(&moved);
            let mut rhs = fwd;
            if fault == Fault::None {
                act_isotypical8(g, &mut rhs);
            } else {
                let m = iso_matrix(g, fault);
                rhs = std::array::from_fn(|i| (0..ORDER).map(|j| m[i][j] * fwd[j]).sum());
            }
            for i in 0..ORDER {
                fourier_eq[g.index()] = fourier_eq[g.index()].max((lhs[i] - rhs[i]).abs());
            }
        }
    }
    out.push(row("butterfly vs dense", Residual::Scalar(fly), GROUP_TOL, n));
    out.push(row("fourier intertwines", Residual::PerElement(fourier_eq), GROUP_TOL, n));
    Ok(out)
}

/// Read the Schur blocks of a dense `C×C` iso map back out and measure how
/// far the map is from the block pattern they span.
pub fn off_pattern_mass(w: &Mat) -> Result<f64> {
    let c = w.rows();
    let mut lin = EquivLinear::zeros(w.cols(), c, false)?;
    let (ko, ki) = (c / ORDER, w.cols() / ORDER);
    for (b, blk) in lin.w1d.iter_mut().enumerate() {
        *blk = Mat::from_fn(ko, ki, |r, s| w.get(b * ko + r, b * ki + s));
    }
    // W_E from the first doublet component's rows and columns only
    let rows_of = |h: usize, r: usize| if h == 0 { 4 * ko + r } else { 6 * ko + r };
    let cols_of = |h: usize, s: usize| if h == 0 { 4 * ki + s } else { 6 * ki + s };
    lin.w_e = Mat::from_fn(2 * ko, 2 * ki, |r, s| w.get(rows_of(r / ko, r % ko), cols_of(s / ki, s % ki)));
    Ok(lin.assemble_dense().max_abs_diff(w))
}

/// `W` with the second doublet component's copy of `W_E` perturbed.
fn unshare_e(lin: &EquivLinear, rng: &mut ChaCha8Rng) -> Mat {
    let mut d = lin.assemble_dense();
    let (ko, ki) = (lin.c_out / ORDER, lin.c_in / ORDER);
    for ob in [5, 7] {
        for ib in [5, 7] {
            for r in 0..ko {
                for s in 0..ki {
                    *d.at_mut(ob * ko + r, ib * ki + s) += rng.gen_range(-0.1..0.1);
                }
            }
        }
    }
    d
}

fn linear_apply(lin: &EquivLinear, faulty: Option<&Mat>, x: &Mat) -> Result<Mat> {
    match faulty {
        None => lin.forward(x),
        Some(d) => {
            let mut y = matmul(d, x);
            if let Some(b) = &lin.bias {
                for r in 0..b.rows() {
                    let v = b.get(r, 0);
                    y.row_mut(r).iter_mut().for_each(|t| *t += v);
                }
            }
            Ok(y)
        }
    }
}

fn worst_over<F>(samples: usize, mut one: F) -> Result<[f64; ORDER]>
where
    F: FnMut() -> Result<[f64; ORDER]>,
{
    let mut worst = [0.0; ORDER];
    for _ in 0..samples {
        let r = one()?;
        for (w, v) in worst.iter_mut().zip(r) {
            *w = nan_max(*w, v);
        }
    }
    Ok(worst)
}

/// Channels, tokens per side, patch size and heads of the layer suite.
const LAYER_C: usize = 16;
const LAYER_N: usize = 4;
const LAYER_P: usize = 4;
const LAYER_HEADS: usize = 2;

fn random_feature(rng: &mut ChaCha8Rng, geom: GridGeometry) -> Result<SteerableFeature> {
    SteerableFeature::new(Mat::uniform(LAYER_C, geom.len(), 1.0, rng), ChannelRep::IsoMultiple, geom)
}

fn layer_suite(opts: &CheckOptions) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let n = opts.inputs.max(1);
    let geom = GridGeometry::new(LAYER_N, true)?;
    let mut out = Vec::new();

    // Schur pattern of projected dense maps
    let mut mass = 0.0f64;
    for _ in 0..n {
        let w = Mat::uniform(LAYER_C, LAYER_C, 1.0, &mut rng);
        let p = reynolds_project_intertwiner(&w, ChannelRep::IsoMultiple, ChannelRep::IsoMultiple)?;
        mass = mass.max(off_pattern_mass(&p)?);
    }
    out.push(CheckRow {
        suite: Scope::Layers,
        name: "reynolds off-pattern mass".into(),
        residual: Residual::Scalar(mass),
        tol: PATTERN_TOL,
        samples: n,
    });
    let mut push = |name: &str, worst: [f64; ORDER], tol: f64| {
        out.push(CheckRow {
            suite: Scope::Layers,
            name: name.to_string(),
            residual: Residual::PerElement(worst),
            tol,
            samples: n,
        })
    };

    let lin = EquivLinear::init(LAYER_C, 2 * LAYER_C, true, &mut rng)?;
    let faulty = (opts.fault == Fault::UnsharedE).then(|| unshare_e(&lin, &mut rng));
    let f = |x: &SteerableFeature| Ok(x.with_data(linear_apply(&lin, faulty.as_ref(), &x.data)?));
    push("linear", worst_over(n, || residuals_by_element(&f, &random_feature(&mut rng, geom)?))?, LAYER_TOL);

    let mut ln = EquivLayerNorm::new(LAYER_C)?;
    ln.gains = Mat::uniform(ln.gains.rows(), 1, 2.0, &mut rng);
    let f = |x: &SteerableFeature| Ok(x.with_data(ln.forward(&x.data)?.0));
    push("layer norm", worst_over(n, || residuals_by_element(&f, &random_feature(&mut rng, geom)?))?, LAYER_TOL);

    let f = |x: &SteerableFeature| Ok(x.with_data(equiv_gelu(&x.data)?));
    push("gelu", worst_over(n, || residuals_by_element(&f, &random_feature(&mut rng, geom)?))?, LAYER_TOL);

    let attn = Attention::octic(LAYER_C, LAYER_HEADS, &mut rng)?;
    let f = |x: &SteerableFeature| Ok(x.with_data(attn.forward(&x.data)?.0));
    push("attention", worst_over(n, || residuals_by_element(&f, &random_feature(&mut rng, geom)?))?, LAYER_TOL);

    let mut block = Block::octic(LAYER_C, LAYER_HEADS, &mut rng)?;
    for p in block.params_mut("") {
        if p.value.rows() == crate::layers::norm::EQUIV_LN_GAINS && p.value.cols() == 1 {
            p.value.data_mut().iter_mut().for_each(|g| *g += 0.1);
        }
    }
    let f = |x: &SteerableFeature| Ok(x.with_data(block.forward(&x.data)?.0));
    push("block", worst_over(n, || residuals_by_element(&f, &random_feature(&mut rng, geom)?))?, LAYER_TOL);

    let embed = PatchEmbed::init(LAYER_C, LAYER_P, true, &mut rng)?;
    let grid = GridGeometry::new(LAYER_N, false)?;
    let worst = worst_over(n, || {
        let m = LAYER_N * LAYER_P;
        let img = Image::new(m, (0..IMAGE_CHANNELS * m * m).map(|_| rng.gen_range(0.0..1.0)).collect())?;
        let fx = SteerableFeature::new(embed.forward(&patchify(&img, LAYER_P)?)?, ChannelRep::IsoMultiple, grid)?;
        let scale = fx.data.max_abs() + crate::steerable::RESIDUAL_EPS;
        let mut r = [0.0; ORDER];
        for g in GroupElement::ALL {
            let lhs = embed.forward(&patchify(&image_action(g, &img), LAYER_P)?)?;
            r[g.index()] = lhs.max_abs_diff(&act(g, &fx)?.data) / scale;
        }
        Ok(r)
    })?;
    push("patch embed", worst, LAYER_TOL);

    let pe = PositionalEncoding::init(LAYER_C, LAYER_N, true, &mut rng)?;
    let cls = ClassToken::init(LAYER_C, true, &mut rng)?;
    let worst = worst_over(n, || {
        let x = random_feature(&mut rng, grid)?;
        let y = SteerableFeature::new(add_posenc_and_cls(&x.data, &pe, &cls)?, ChannelRep::IsoMultiple, geom)?;
        let scale = y.data.max_abs() + crate::steerable::RESIDUAL_EPS;
        let mut r = [0.0; ORDER];
        for g in GroupElement::ALL {
            let lhs = add_posenc_and_cls(&act(g, &x)?.data, &pe, &cls)?;
            r[g.index()] = lhs.max_abs_diff(&act(g, &y)?.data) / scale;
        }
        Ok(r)
    })?;
    push("posenc + class token", worst, LAYER_TOL);
    Ok(out)
}

/// Small D8 and I8 models whose logits must not move under any transform.
fn model_suite(opts: &CheckOptions) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(2));
    let n = (opts.inputs / 10).max(1);
    let mut out = Vec::new();
    for (family, k) in [(Family::D8, 2), (Family::I8, 1)] {
        for kind in [InvariantizationKind::PowerSpectrum, InvariantizationKind::MaxFiltering] {
            let cfg = ModelConfig {
                family,
                octic_depth: k,
                invariant: kind,
                seed: opts.seed,
                ..ModelConfig::default()
            };
            let model = build_model(&cfg)?;
            let worst = worst_over(n, || {
                let m = cfg.image;
                let img = Image::new(m, (0..IMAGE_CHANNELS * m * m).map(|_| rng.gen_range(0.0..1.0)).collect())?;
                let base = model.forward(&img)?;
                let mut r = [0.0; ORDER];
                for g in GroupElement::ALL {
                    r[g.index()] = model.forward(&image_action(g, &img))?.max_abs_diff(&base);
                }
                Ok(r)
            })?;
            out.push(CheckRow {
                suite: Scope::Model,
                name: format!("{family} {kind} logits"),
                residual: Residual::PerElement(worst),
                tol: MODEL_TOL,
                samples: n,
            });
        }
    }
    Ok(out)
}

/// Brute-force invariance of every ψ over `10 × inputs` tokens, and the
/// output width against `K·C/8`.
fn invariant_suite(opts: &CheckOptions) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(3));
    let tokens = 10 * opts.inputs.max(1);
    let mut out = Vec::new();
    for kind in InvariantizationKind::ALL {
        let psi = Invariantizer::new(kind, LAYER_C, &mut rng)?;
        let x = Mat::uniform(LAYER_C, tokens, 1.0, &mut rng);
        let y = psi.forward(&x)?;
        let scale = y.max_abs() + crate::steerable::RESIDUAL_EPS;
        let mut r = [0.0; ORDER];
        for g in GroupElement::ALL {
            let mut gx = x.clone();
            iso_act_rows(g, &mut gx);
            r[g.index()] = psi.forward(&gx)?.max_abs_diff(&y) / scale;
        }
        let expected = kind.k().map_or(kind.output_dim(LAYER_C), |k| k * LAYER_C / ORDER);
        out.push(CheckRow {
            suite: Scope::Invariants,
            name: format!("{kind} invariance"),
            residual: Residual::PerElement(r),
            tol: INVARIANT_TOL,
            samples: tokens,
        });
        out.push(CheckRow {
            suite: Scope::Invariants,
            name: format!("{kind} output width"),
            residual: Residual::Scalar((y.rows() as f64 - expected as f64).abs()),
            tol: 0.0,
            samples: 1,
        });
    }
    Ok(out)
}
