use rand::Rng;

use super::{join, Constraint, ParamRef, Parameterized};
use crate::error::{check_divisible, OcticError, Result};
use crate::group::ORDER;
use crate::steerable::{GridGeometry, IMAGE_CHANNELS};
use crate::tensor::{matmul, matmul_nt_acc, Mat};

/// Tolerance of the constraint guard in [`add_posenc_and_cls`].
pub const CONSTRAINT_GUARD: f64 = 1e-10;

/// Stride-`P` patch convolution, written as a `C×3P²` kernel applied to the
/// patch matrix. The octic variant keeps the kernel on the intertwiners
/// `ρ_patch → (C/8)ρ_iso` and only carries an A1 bias.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchEmbed {
    pub patch: usize,
    pub octic: bool,
    pub weight: Mat,
    /// `C/8×1` for octic, `C×1` otherwise.
    pub bias: Mat,
}

impl PatchEmbed {
    pub fn zeros(c: usize, patch: usize, octic: bool) -> Result<Self> {
        if patch == 0 {
            return Err(OcticError::InvalidConfig("patch size must be >= 1".into()));
        }
        let bias_rows = if octic {
            check_divisible("channel count", c, ORDER)?;
            c / ORDER
        } else {
            c
        };
        Ok(Self {
            patch,
            octic,
            weight: Mat::zeros(c, IMAGE_CHANNELS * patch * patch),
            bias: Mat::zeros(bias_rows, 1),
        })
    }

    pub fn init<R: Rng>(c: usize, patch: usize, octic: bool, rng: &mut R) -> Result<Self> {
        let mut pe = Self::zeros(c, patch, octic)?;
        let fan_in = pe.weight.cols();
        pe.weight = Mat::uniform(c, fan_in, 1.0 / (fan_in as f64).sqrt(), rng);
        pe.reproject()?;
        Ok(pe)
    }

    pub fn channels(&self) -> usize {
        self.weight.rows()
    }

    fn kernel_constraint(&self) -> Constraint {
        if self.octic {
            Constraint::PatchKernel { p: self.patch }
        } else {
            Constraint::Free
        }
    }

    /// `3P²×N²` patches to `C×N²` tokens.
    pub fn forward(&self, patches: &Mat) -> Result<Mat> {
        if patches.rows() != self.weight.cols() {
            return Err(OcticError::DimensionMismatch(format!(
                "patch embedding expects {} rows, got {}",
                self.weight.cols(),
                patches.rows()
            )));
        }
        let mut y = matmul(&self.weight, patches);
        for r in 0..self.bias.rows() {
            let b = self.bias.get(r, 0);
            y.row_mut(r).iter_mut().for_each(|v| *v += b);
        }
        Ok(y)
    }

    /// Accumulates parameter gradients; the image is not differentiated.
    pub fn backward(&self, patches: &Mat, dy: &Mat, grad: &mut Self) {
        matmul_nt_acc(dy, patches, &mut grad.weight);
        for r in 0..self.bias.rows() {
            *grad.bias.at_mut(r, 0) += dy.row(r).iter().sum::<f64>();
        }
    }

    pub fn macs_per_token(&self) -> usize {
        self.weight.rows() * self.weight.cols()
    }
}

impl Parameterized for PatchEmbed {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        let constraint = self.kernel_constraint();
        out.push(ParamRef {
            name: join(prefix, "weight"),
            value: &mut self.weight,
            constraint,
        });
        out.push(ParamRef {
            name: join(prefix, "bias"),
            value: &mut self.bias,
            constraint: Constraint::Free,
        });
    }
}

/// Learned positional encoding over the `N²` image tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionalEncoding {
    pub geom: GridGeometry,
    pub octic: bool,
    pub value: Mat,
}

impl PositionalEncoding {
    pub fn init<R: Rng>(c: usize, n: usize, octic: bool, rng: &mut R) -> Result<Self> {
        let geom = GridGeometry::new(n, false)?;
        let mut pe = Self {
            geom,
            octic,
            value: Mat::uniform(c, geom.len(), 0.02, rng),
        };
        pe.reproject()?;
        Ok(pe)
    }

    /// Largest entry of `e − Π(e)`; zero when the constraint holds.
    pub fn constraint_violation(&self) -> Result<f64> {
        if !self.octic {
            return Ok(0.0);
        }
        let projected = Constraint::Posenc(self.geom).project(&self.value)?;
        Ok(projected.max_abs_diff(&self.value))
    }
}

impl Parameterized for PositionalEncoding {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        out.push(ParamRef {
            name: join(prefix, "value"),
            value: &mut self.value,
            constraint: if self.octic {
                Constraint::Posenc(self.geom)
            } else {
                Constraint::Free
            },
        });
    }
}

/// Learned class token, appended after the image tokens. Octic class tokens
/// only carry A1 content.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassToken {
    pub octic: bool,
    pub value: Mat,
}

impl ClassToken {
    pub fn init<R: Rng>(c: usize, octic: bool, rng: &mut R) -> Result<Self> {
        if octic {
            check_divisible("channel count", c, ORDER)?;
        }
        let mut cls = Self {
            octic,
            value: Mat::uniform(c, 1, 0.02, rng),
        };
        cls.reproject()?;
        Ok(cls)
    }

    pub fn constraint_violation(&self) -> f64 {
        if !self.octic {
            return 0.0;
        }
        let k = self.value.rows() / ORDER;
        self.value.data()[k..].iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Parameterized for ClassToken {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        out.push(ParamRef {
            name: join(prefix, "value"),
            value: &mut self.value,
            constraint: if self.octic {
                Constraint::A1Only
            } else {
                Constraint::Free
            },
        });
    }
}

/// `[x + e | cls]` without validating constraints.
pub fn append_posenc_cls(x: &Mat, e: &Mat, cls: &Mat) -> Result<Mat> {
    if x.shape() != e.shape() || cls.rows() != x.rows() || cls.cols() != 1 {
        return Err(OcticError::DimensionMismatch(format!(
            "tokens {:?}, positional encoding {:?}, class token {:?}",
            x.shape(),
            e.shape(),
            cls.shape()
        )));
    }
    let mut sum = x.clone();
    sum.add_assign(e);
    Ok(Mat::hcat(&[&sum, cls]))
}

/// Add the positional encoding to the image tokens and append the class
/// token. Rejects parameters that left their constrained subspace.
pub fn add_posenc_and_cls(x: &Mat, e: &PositionalEncoding, cls: &ClassToken) -> Result<Mat> {
    let pv = e.constraint_violation()?;
    if pv > CONSTRAINT_GUARD {
        return Err(OcticError::Constraint(format!(
            "positional encoding is off its fixed subspace by {pv:.3e}"
        )));
    }
    let cv = cls.constraint_violation();
    if cv > CONSTRAINT_GUARD {
        return Err(OcticError::Constraint(format!(
            "class token has non-A1 content of magnitude {cv:.3e}"
        )));
    }
    append_posenc_cls(x, &e.value, &cls.value)
}

/// Split the gradient of [`add_posenc_and_cls`] into the image-token part
/// (shared by `x` and `e`) and the class-token column.
pub fn split_posenc_cls_grad(dy: &Mat) -> (Mat, Mat) {
    let n_img = dy.cols() - 1;
    (dy.cols_range(0, n_img), dy.cols_range(n_img, 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_posenc_and_cls_appends_zero_token() {
        let x = Mat::from_fn(16, 4, |r, c| (r * 4 + c) as f64);
        let e = PositionalEncoding {
            geom: GridGeometry::new(2, false).unwrap(),
            octic: true,
            value: Mat::zeros(16, 4),
        };
        let cls = ClassToken {
            octic: true,
            value: Mat::zeros(16, 1),
        };
        let y = add_posenc_and_cls(&x, &e, &cls).unwrap();
        assert_eq!(y.cols_range(0, 4), x);
        assert_eq!(y.cols_range(4, 1).max_abs(), 0.0);
    }

    #[test]
    fn cls_with_b1_content_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = PositionalEncoding::init(16, 2, true, &mut rng).unwrap();
        let mut cls = ClassToken::init(16, true, &mut rng).unwrap();
        cls.value.set(2 * 2, 0, 0.5);
        let err = add_posenc_and_cls(&Mat::zeros(16, 4), &e, &cls).unwrap_err();
        assert!(matches!(err, OcticError::Constraint(_)));
    }

    #[test]
    fn octic_bias_is_a1_only() {
        let pe = PatchEmbed::zeros(16, 2, true).unwrap();
        assert_eq!(pe.bias.rows(), 2);
        let y = pe.forward(&Mat::zeros(12, 4)).unwrap();
        assert_eq!(y.max_abs(), 0.0);
    }
}
