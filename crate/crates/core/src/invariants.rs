//! Invariantization maps `ψ` from `(C/8)ρ_iso` tokens to `KC/8` (or `2C`,
//! `C`) invariant features, and the invariant head that follows them with a
//! small MLP.
//!
//! Closed-form maps act on every iso copy `j` separately; their output row
//! for feature `f` and copy `j` is `f·(C/8) + j`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_divisible, OcticError, Result};
use crate::group::{GroupElement, ORDER};
use crate::layers::{gelu, gelu_grad, join, Constraint, DenseLinear, ParamRef, Parameterized};
use crate::steerable::iso_act_rows;
use crate::tensor::{matmul, matmul_nt, matmul_tn, Mat};

const SLOT_NAMES: [&str; ORDER] = ["A1", "A2", "B1", "B2", "E11", "E12", "E21", "E22"];

/// Degree-3 invariants, one polynomial per line.
const TRIPLE_CORRELATION: [&str; 15] = [
    "A1^3",
    "A1*E21^2 + A1*E22^2",
    "A1*E11*E21 + A1*E12*E22",
    "A1*E11^2 + A1*E12^2",
    "A1*B2^2",
    "A1*B1^2",
    "A1*A2^2",
    "B2*E21*E22",
    "B2*E12*E21 + B2*E11*E22",
    "B2*E11*E12",
    "B1*E21^2 - B1*E22^2",
    "B1*E11*E21 - B1*E12*E22",
    "B1*E11^2 - B1*E12^2",
    "A2*E12*E21 - A2*E11*E22",
    "A2*B1*B2",
];

/// Generators of the invariant ring.
const POLYNOMIAL: [&str; 32] = [
    "A1",
    "E21^2 + E22^2",
    "E11*E21 + E12*E22",
    "E11^2 + E12^2",
    "B2^2",
    "B1^2",
    "A2^2",
    "B2*E21*E22",
    "B2*E12*E21 + B2*E11*E22",
    "B2*E11*E12",
    "B1*E21^2 - B1*E22^2",
    "B1*E11*E21 - B1*E12*E22",
    "B1*E11^2 - B1*E12^2",
    "A2*E12*E21 - A2*E11*E22",
    "A2*B1*B2",
    "E21^4 + E22^4",
    "E11*E21^3 + E12*E22^3",
    "E11^2*E21^2 + E12^2*E22^2",
    "E11^3*E21 + E12^3*E22",
    "E11^4 + E12^4",
    "B1*B2*E12*E21 - B1*B2*E11*E22",
    "A2*B2*E21^2 - A2*B2*E22^2",
    "A2*B2*E11*E21 - A2*B2*E12*E22",
    "A2*B2*E11^2 - A2*B2*E12^2",
    "A2*B1*E21*E22",
    "A2*B1*E12*E21 + A2*B1*E11*E22",
    "A2*B1*E11*E12",
    "A2*E21^3*E22 - A2*E21*E22^3",
    "A2*E12*E21^3 - A2*E11*E22^3",
    "A2*E11*E12*E21^2 - A2*E11*E12*E22^2",
    "A2*E11^2*E12*E21 - A2*E11*E12^2*E22",
    "A2*E11^3*E12 - A2*E11*E12^3",
];

/// `coef · Π v[s]^powers[s]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub powers: [u8; ORDER],
}

pub type Polynomial = Vec<Monomial>;

fn parse_polynomial(src: &str) -> Polynomial {
    let mut terms = Vec::new();
    let mut sign = 1.0;
    for tok in src.split_whitespace() {
        match tok {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            term => {
                let mut powers = [0u8; ORDER];
                for factor in term.split('*') {
                    let (name, pow) = match factor.split_once('^') {
                        Some((n, p)) => (n, p.parse::<u8>().expect("integer power")),
                        None => (factor, 1),
                    };
                    let slot = SLOT_NAMES
                        .iter()
                        .position(|&s| s == name)
                        .unwrap_or_else(|| panic!("unknown component {name}"));
                    powers[slot] += pow;
                }
                terms.push(Monomial { coef: sign, powers });
            }
        }
    }
    terms
}

pub fn triple_correlation_polynomials() -> &'static [Polynomial] {
    static CELL: OnceLock<Vec<Polynomial>> = OnceLock::new();
    CELL.get_or_init(|| TRIPLE_CORRELATION.iter().map(|s| parse_polynomial(s)).collect())
}

pub fn invariant_ring_generators() -> &'static [Polynomial] {
    static CELL: OnceLock<Vec<Polynomial>> = OnceLock::new();
    CELL.get_or_init(|| POLYNOMIAL.iter().map(|s| parse_polynomial(s)).collect())
}

pub fn eval_polynomial(p: &[Monomial], v: &[f64; ORDER]) -> f64 {
    p.iter()
        .map(|m| {
            m.powers
                .iter()
                .zip(v)
                .fold(m.coef, |acc, (&e, &x)| acc * x.powi(e as i32))
        })
        .sum()
}

/// Add `scale · ∇p(v)` into `grad`.
fn polynomial_grad_acc(p: &[Monomial], v: &[f64; ORDER], scale: f64, grad: &mut [f64; ORDER]) {
    for m in p {
        for s in 0..ORDER {
            let e = m.powers[s];
            if e == 0 {
                continue;
            }
            let mut d = m.coef * e as f64 * v[s].powi(e as i32 - 1);
            for (t, &et) in m.powers.iter().enumerate() {
                if t != s && et != 0 {
                    d *= v[t].powi(et as i32);
                }
            }
            grad[s] += scale * d;
        }
    }
}

/// The six invariantization methods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InvariantizationKind {
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "power")]
    PowerSpectrum,
    #[serde(rename = "triple")]
    TripleCorrelation,
    #[serde(rename = "poly")]
    Polynomial,
    #[serde(rename = "maxfilter")]
    MaxFiltering,
    #[serde(rename = "canon")]
    Canonisation,
}

impl InvariantizationKind {
    pub const ALL: [Self; 6] = [
        Self::Linear,
        Self::PowerSpectrum,
        Self::TripleCorrelation,
        Self::Polynomial,
        Self::MaxFiltering,
        Self::Canonisation,
    ];

    /// Features per iso copy for the closed-form maps.
    pub fn k(self) -> Option<usize> {
        match self {
            Self::Linear => Some(1),
            Self::PowerSpectrum => Some(6),
            Self::TripleCorrelation => Some(15),
            Self::Polynomial => Some(32),
            Self::MaxFiltering | Self::Canonisation => None,
        }
    }

    /// Width of `ψ(x)` for `C`-channel tokens.
    pub fn output_dim(self, c: usize) -> usize {
        match self {
            Self::MaxFiltering => 2 * c,
            Self::Canonisation => c,
            _ => self.k().unwrap() * c / ORDER,
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::PowerSpectrum => "power",
            Self::TripleCorrelation => "triple",
            Self::Polynomial => "poly",
            Self::MaxFiltering => "maxfilter",
            Self::Canonisation => "canon",
        }
    }
}

impl fmt::Display for InvariantizationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for InvariantizationKind {
    type Err = OcticError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.cli_name() == s)
            .ok_or_else(|| {
                OcticError::InvalidConfig(format!(
                    "unknown invariant '{s}' (expected linear, power, triple, poly, maxfilter or canon)"
                ))
            })
    }
}

fn gather(x: &Mat, k: usize, j: usize, t: usize) -> [f64; ORDER] {
    std::array::from_fn(|b| x.get(b * k + j, t))
}

/// Apply `f(v) -> features` to every `(copy, token)` and lay the features out
/// feature-major.
fn per_copy(x: &Mat, nfeat: usize, f: impl Fn(&[f64; ORDER], &mut [f64])) -> Result<Mat> {
    check_divisible("channel count", x.rows(), ORDER)?;
    let k = x.rows() / ORDER;
    let mut out = Mat::zeros(nfeat * k, x.cols());
    let mut buf = vec![0.0; nfeat];
    for j in 0..k {
        for t in 0..x.cols() {
            f(&gather(x, k, j, t), &mut buf);
            for (fi, &v) in buf.iter().enumerate() {
                out.set(fi * k + j, t, v);
            }
        }
    }
    Ok(out)
}

/// VJP counterpart of [`per_copy`]: `f(v, dy_features, dv)`.
fn per_copy_vjp(x: &Mat, dy: &Mat, nfeat: usize, f: impl Fn(&[f64; ORDER], &[f64], &mut [f64; ORDER])) -> Result<Mat> {
    check_divisible("channel count", x.rows(), ORDER)?;
    let k = x.rows() / ORDER;
    if dy.shape() != (nfeat * k, x.cols()) {
        return Err(OcticError::DimensionMismatch(format!(
            "cotangent has shape {:?}, expected {:?}",
            dy.shape(),
            (nfeat * k, x.cols())
        )));
    }
    let mut dx = Mat::zeros(x.rows(), x.cols());
    let mut g = vec![0.0; nfeat];
    for j in 0..k {
        for t in 0..x.cols() {
            for (fi, gv) in g.iter_mut().enumerate() {
                *gv = dy.get(fi * k + j, t);
            }
            let mut dv = [0.0; ORDER];
            f(&gather(x, k, j, t), &g, &mut dv);
            for (b, &d) in dv.iter().enumerate() {
                dx.set(b * k + j, t, d);
            }
        }
    }
    Ok(dx)
}

pub fn psi_linear(x: &Mat) -> Result<Mat> {
    check_divisible("channel count", x.rows(), ORDER)?;
    let k = x.rows() / ORDER;
    Ok(Mat::from_vec(k, x.cols(), x.rows_slice(0, k).to_vec()))
}

fn power_spectrum8(v: &[f64; ORDER], out: &mut [f64]) {
    out[0] = v[0];
    out[1] = v[1].abs();
    out[2] = v[2].abs();
    out[3] = v[3].abs();
    out[4] = v[4].hypot(v[5]);
    out[5] = v[6].hypot(v[7]);
}

/// `(A1, |A2|, |B1|, |B2|, ‖(E11,E12)‖, ‖(E21,E22)‖)` per copy.
pub fn psi_power_spectrum(x: &Mat) -> Result<Mat> {
    per_copy(x, 6, power_spectrum8)
}

fn eval_all(polys: &[Polynomial], x: &Mat) -> Result<Mat> {
    per_copy(x, polys.len(), |v, out| {
        for (o, p) in out.iter_mut().zip(polys) {
            *o = eval_polynomial(p, v);
        }
    })
}

/// The 15 degree-3 invariants per copy.
pub fn psi_triple_correlation(x: &Mat) -> Result<Mat> {
    eval_all(triple_correlation_polynomials(), x)
}

/// The 32 invariant-ring generators per copy.
pub fn psi_polynomial(x: &Mat) -> Result<Mat> {
    eval_all(invariant_ring_generators(), x)
}

/// `ρ_chan(g)·x` for every `g`, in slot order.
fn orbit(x: &Mat) -> Vec<Mat> {
    GroupElement::ALL
        .iter()
        .map(|&g| {
            let mut m = x.clone();
            iso_act_rows(g, &mut m);
            m
        })
        .collect()
}

/// Scores `⟨y_i, ρ(g)x_t⟩` for each `g` and the first maximising element
/// per `(i, t)`.
fn max_scores(templates: &Mat, x: &Mat) -> Result<(Mat, Vec<u8>, Vec<Mat>)> {
    if templates.cols() != x.rows() {
        return Err(OcticError::DimensionMismatch(format!(
            "templates have width {}, tokens have {} channels",
            templates.cols(),
            x.rows()
        )));
    }
    check_divisible("channel count", x.rows(), ORDER)?;
    let gx = orbit(x);
    let scores: Vec<Mat> = gx.iter().map(|m| matmul(templates, m)).collect();
    let mut best = scores[0].clone();
    let mut arg = vec![0u8; best.data().len()];
    for (gi, s) in scores.iter().enumerate().skip(1) {
        for (idx, (&v, b)) in s.data().iter().zip(best.data_mut()).enumerate() {
            if v > *b {
                *b = v;
                arg[idx] = gi as u8;
            }
        }
    }
    Ok((best, arg, gx))
}

/// `max_g ⟨y_i, ρ_chan(g)x⟩` for every template row `y_i`.
pub fn psi_max_filtering(templates: &Mat, x: &Mat) -> Result<Mat> {
    Ok(max_scores(templates, x)?.0)
}

/// Element maximising `⟨y, ρ_chan(g)x_t⟩` for each token; the first
/// maximiser in slot order wins ties.
pub fn canonising_elements(reference: &Mat, x: &Mat) -> Result<Vec<GroupElement>> {
    if reference.shape() != (x.rows(), 1) {
        return Err(OcticError::DimensionMismatch(format!(
            "reference token has shape {:?}, expected ({}, 1)",
            reference.shape(),
            x.rows()
        )));
    }
    let (_, arg, _) = max_scores(&reference.transpose(), x)?;
    Ok(arg
        .into_iter()
        .map(|i| GroupElement::from_index(i as usize).expect("slot index"))
        .collect())
}

/// `ρ_chan(g*)·x_t` with `g*` from [`canonising_elements`].
pub fn psi_canonise(reference: &Mat, x: &Mat) -> Result<Mat> {
    let elems = canonising_elements(reference, x)?;
    let mut out = Mat::zeros(x.rows(), x.cols());
    for (t, g) in elems.into_iter().enumerate() {
        let mut col = x.cols_range(t, 1);
        iso_act_rows(g, &mut col);
        out.set_col(t, col.data());
    }
    Ok(out)
}

/// A `ψ` together with its learnable arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct Invariantizer {
    pub kind: InvariantizationKind,
    /// `2C×C` templates for max filtering, `C×1` reference for
    /// canonisation, empty otherwise.
    pub tokens: Mat,
}

impl Invariantizer {
    pub fn new<R: Rng>(kind: InvariantizationKind, c: usize, rng: &mut R) -> Result<Self> {
        check_divisible("channel count", c, ORDER)?;
        let bound = 1.0 / (c as f64).sqrt();
        let tokens = match kind {
            InvariantizationKind::MaxFiltering => Mat::uniform(2 * c, c, bound, rng),
            InvariantizationKind::Canonisation => Mat::uniform(c, 1, bound, rng),
            _ => Mat::zeros(0, 0),
        };
        Ok(Self { kind, tokens })
    }

    pub fn output_dim(&self, c: usize) -> usize {
        self.kind.output_dim(c)
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        match self.kind {
            InvariantizationKind::Linear => psi_linear(x),
            InvariantizationKind::PowerSpectrum => psi_power_spectrum(x),
            InvariantizationKind::TripleCorrelation => psi_triple_correlation(x),
            InvariantizationKind::Polynomial => psi_polynomial(x),
            InvariantizationKind::MaxFiltering => psi_max_filtering(&self.tokens, x),
            InvariantizationKind::Canonisation => psi_canonise(&self.tokens, x),
        }
    }

    /// VJP at `x`. Non-smooth points use `|·|′(0) = 0` and route max/argmax
    /// gradients through the first attained maximiser; the canonisation
    /// reference receives no gradient (the output is piecewise constant in it).
    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut Self) -> Result<Mat> {
        match self.kind {
            InvariantizationKind::Linear => {
                check_divisible("channel count", x.rows(), ORDER)?;
                let k = x.rows() / ORDER;
                let mut dx = Mat::zeros(x.rows(), x.cols());
                dx.rows_slice_mut(0, k).copy_from_slice(dy.data());
                Ok(dx)
            }
            InvariantizationKind::PowerSpectrum => per_copy_vjp(x, dy, 6, |v, g, dv| {
                dv[0] = g[0];
                for s in 1..4 {
                    dv[s] = g[s] * sign0(v[s]);
                }
                for (pair, slot) in [(4, 4), (6, 5)] {
                    let n = v[pair].hypot(v[pair + 1]);
                    if n > 0.0 {
                        dv[pair] = g[slot] * v[pair] / n;
                        dv[pair + 1] = g[slot] * v[pair + 1] / n;
                    }
                }
            }),
            InvariantizationKind::TripleCorrelation => {
                polys_vjp(triple_correlation_polynomials(), x, dy)
            }
            InvariantizationKind::Polynomial => polys_vjp(invariant_ring_generators(), x, dy),
            InvariantizationKind::MaxFiltering => {
                let (_, arg, gx) = max_scores(&self.tokens, x)?;
                let mut dx = Mat::zeros(x.rows(), x.cols());
                for (gi, g) in GroupElement::ALL.into_iter().enumerate() {
                    let mut d = dy.clone();
                    for (v, &a) in d.data_mut().iter_mut().zip(&arg) {
                        if a as usize != gi {
                            *v = 0.0;
                        }
                    }
                    if d.max_abs() == 0.0 {
                        continue;
                    }
                    grad.tokens.add_assign(&matmul_nt(&d, &gx[gi]));
                    let mut back = matmul_tn(&self.tokens, &d);
                    iso_act_rows(g.inverse(), &mut back);
                    dx.add_assign(&back);
                }
                Ok(dx)
            }
            InvariantizationKind::Canonisation => {
                let elems = canonising_elements(&self.tokens, x)?;
                let mut dx = Mat::zeros(x.rows(), x.cols());
                for (t, g) in elems.into_iter().enumerate() {
                    let mut col = dy.cols_range(t, 1);
                    iso_act_rows(g.inverse(), &mut col);
                    dx.set_col(t, col.data());
                }
                Ok(dx)
            }
        }
    }
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn polys_vjp(polys: &[Polynomial], x: &Mat, dy: &Mat) -> Result<Mat> {
    per_copy_vjp(x, dy, polys.len(), |v, g, dv| {
        for (p, &gi) in polys.iter().zip(g) {
            if gi != 0.0 {
                polynomial_grad_acc(p, v, gi, dv);
            }
        }
    })
}

impl Parameterized for Invariantizer {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        if !self.tokens.data().is_empty() {
            out.push(ParamRef {
                name: join(prefix, "tokens"),
                value: &mut self.tokens,
                constraint: Constraint::Free,
            });
        }
    }
}

/// `ψ`, then a tokenwise MLP `KC/8 → C → C` with GELU. The output tokens are
/// invariant under the channel action.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantHead {
    pub psi: Invariantizer,
    pub fc1: DenseLinear,
    pub fc2: DenseLinear,
}

#[derive(Clone, Debug)]
pub struct HeadCache {
    x: Mat,
    feats: Mat,
    pre: Mat,
    post: Mat,
}

impl InvariantHead {
    pub fn new<R: Rng>(kind: InvariantizationKind, c: usize, rng: &mut R) -> Result<Self> {
        let psi = Invariantizer::new(kind, c, rng)?;
        let d = psi.output_dim(c);
        Ok(Self {
            psi,
            fc1: DenseLinear::init(d, c, true, rng),
            fc2: DenseLinear::init(c, c, true, rng),
        })
    }

    pub fn forward(&self, x: &Mat) -> Result<(Mat, HeadCache)> {
        let feats = self.psi.forward(x)?;
        let pre = self.fc1.forward(&feats)?;
        let post = pre.map(gelu);
        let y = self.fc2.forward(&post)?;
        Ok((
            y,
            HeadCache {
                x: x.clone(),
                feats,
                pre,
                post,
            },
        ))
    }

    pub fn backward(&self, cache: &HeadCache, dy: &Mat, grad: &mut Self) -> Result<Mat> {
        let mut d = self.fc2.backward(&cache.post, dy, &mut grad.fc2)?;
        for (g, &p) in d.data_mut().iter_mut().zip(cache.pre.data()) {
            *g *= gelu_grad(p);
        }
        let dfeat = self.fc1.backward(&cache.feats, &d, &mut grad.fc1)?;
        self.psi.backward(&cache.x, &dfeat, &mut grad.psi)
    }
}

impl Parameterized for InvariantHead {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        self.psi.collect_params(&join(prefix, "psi"), out);
        self.fc1.collect_params(&join(prefix, "fc1"), out);
        self.fc2.collect_params(&join(prefix, "fc2"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn token(v: [f64; 8]) -> Mat {
        Mat::from_vec(8, 1, v.to_vec())
    }

    #[test]
    fn transcribed_lists_have_expected_sizes() {
        assert_eq!(triple_correlation_polynomials().len(), 15);
        assert_eq!(invariant_ring_generators().len(), 32);
        for p in triple_correlation_polynomials() {
            for m in p {
                assert_eq!(m.powers.iter().map(|&e| e as u32).sum::<u32>(), 3);
            }
        }
    }

    #[test]
    fn parser_reads_signs_and_powers() {
        let p = parse_polynomial("B1*E21^2 - B1*E22^2");
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].coef, -1.0);
        assert_eq!(p[1].powers, [0, 0, 1, 0, 0, 0, 0, 2]);
    }

    #[test]
    fn power_spectrum_doublet_norm() {
        let y = psi_power_spectrum(&token([0., 0., 0., 0., 3., 4., 0., 0.])).unwrap();
        assert_eq!(y.get(4, 0), 5.0);
    }

    #[test]
    fn triple_correlation_of_pure_a1() {
        let y = psi_triple_correlation(&token([2., 0., 0., 0., 0., 0., 0., 0.])).unwrap();
        assert_eq!(y.get(0, 0), 8.0);
        assert_eq!(y.rows_slice(1, 14).iter().fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
    }

    #[test]
    fn second_generator_on_e2_doublet() {
        let y = psi_polynomial(&token([0., 0., 0., 0., 0., 0., 1., 2.])).unwrap();
        assert_eq!(y.get(1, 0), 5.0);
    }

    #[test]
    fn every_generator_is_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let v: [f64; 8] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            for g in GroupElement::ALL {
                let mut w = v;
                crate::group::act_isotypical8(g, &mut w);
                for p in invariant_ring_generators().iter().chain(triple_correlation_polynomials()) {
                    assert!((eval_polynomial(p, &v) - eval_polynomial(p, &w)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn canonise_pure_a1_picks_identity() {
        let x = token([1.5, 0., 0., 0., 0., 0., 0., 0.]);
        let y = token([1., 0.3, -0.2, 0.1, 0.5, 0.5, -0.4, 0.2]);
        assert_eq!(canonising_elements(&y, &x).unwrap(), vec![GroupElement::E]);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in InvariantizationKind::ALL {
            assert_eq!(k.cli_name().parse::<InvariantizationKind>().unwrap(), k);
        }
        assert!("bogus".parse::<InvariantizationKind>().is_err());
    }
}
