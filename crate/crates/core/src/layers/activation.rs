use crate::error::{check_divisible, Result};
use crate::group::{isotypical_to_regular8, regular_to_isotypical8, ORDER};
use crate::tensor::Mat;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU, `x·Φ(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
        + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Gather the 8 isotypical coordinates of every `(copy, token)` pair: slot
/// `b` of pair `i` is element `i` of the contiguous slab of sub-block `b`.
#[inline]
fn for_each_copy(x: &Mat, mut f: impl FnMut(usize, [f64; ORDER])) {
    let slab = x.data().len() / ORDER;
    let d = x.data();
    for i in 0..slab {
        let v: [f64; ORDER] = std::array::from_fn(|b| d[b * slab + i]);
        f(i, v);
    }
}

#[inline]
fn scatter(out: &mut [f64], slab: usize, i: usize, v: &[f64; ORDER]) {
    for (b, &val) in v.iter().enumerate() {
        out[b * slab + i] = val;
    }
}

/// Equivariant GELU on `(C/8)ρ_iso` features: inverse Fourier transform to
/// the regular basis, pointwise GELU, Fourier transform back.
pub fn equiv_gelu(x: &Mat) -> Result<Mat> {
    check_divisible("channel count", x.rows(), ORDER)?;
    let slab = x.data().len() / ORDER;
    let mut out = Mat::zeros(x.rows(), x.cols());
    let buf = out.data_mut();
    for_each_copy(x, |i, v| {
        let u = isotypical_to_regular8(&v);
        let z = u.map(gelu);
        scatter(buf, slab, i, &regular_to_isotypical8(&z));
    });
    Ok(out)
}

/// VJP of [`equiv_gelu`] at `x`.
pub fn equiv_gelu_vjp(x: &Mat, dy: &Mat) -> Result<Mat> {
    check_divisible("channel count", x.rows(), ORDER)?;
    assert_eq!(x.shape(), dy.shape());
    let slab = x.data().len() / ORDER;
    let dyd = dy.data();
    let mut out = Mat::zeros(x.rows(), x.cols());
    let buf = out.data_mut();
    for_each_copy(x, |i, v| {
        let u = isotypical_to_regular8(&v);
        let g: [f64; ORDER] = std::array::from_fn(|b| dyd[b * slab + i]);
        // y = Qᵀ·gelu(Q·v)  =>  v̄ = Qᵀ·(gelu'(Q·v) ⊙ Q·ȳ)
        let dz = isotypical_to_regular8(&g);
        let du: [f64; ORDER] = std::array::from_fn(|s| dz[s] * gelu_grad(u[s]));
        scatter(buf, slab, i, &regular_to_isotypical8(&du));
    });
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// GELU applied in the regular basis of every iso copy.
    EquivGelu,
    /// Plain elementwise GELU.
    Gelu,
}

impl Activation {
    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        match self {
            Activation::EquivGelu => equiv_gelu(x),
            Activation::Gelu => Ok(x.map(gelu)),
        }
    }

    pub fn backward(&self, x: &Mat, dy: &Mat) -> Result<Mat> {
        match self {
            Activation::EquivGelu => equiv_gelu_vjp(x, dy),
            Activation::Gelu => {
                let mut dx = dy.clone();
                for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
                    *d *= gelu_grad(v);
                }
                Ok(dx)
            }
        }
    }
}
