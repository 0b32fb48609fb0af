use rand::Rng;

use super::{join, join_blocks, split_blocks, Constraint, ParamRef, Parameterized};
use crate::error::{check_divisible, OcticError, Result};
use crate::group::ORDER;
use crate::tensor::{matmul, matmul_nt_acc, matmul_tn, Mat};

/// An intertwiner between `(C_in/8)ρ_iso` and `(C_out/8)ρ_iso`, stored by its
/// Schur blocks: one matrix per one-dimensional irrep and a single shared
/// matrix for E that acts on both doublet components.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivLinear {
    pub c_in: usize,
    pub c_out: usize,
    /// `A1, A2, B1, B2` blocks, each `(C_out/8)×(C_in/8)`.
    pub w1d: [Mat; 4],
    /// `(C_out/4)×(C_in/4)`, applied to `[E11; E21]` and `[E12; E22]`.
    pub w_e: Mat,
    /// Bias on the A1 sub-block only.
    pub bias: Option<Mat>,
}

impl EquivLinear {
    pub fn zeros(c_in: usize, c_out: usize, bias: bool) -> Result<Self> {
        check_divisible("input channels", c_in, ORDER)?;
        check_divisible("output channels", c_out, ORDER)?;
        let (ki, ko) = (c_in / ORDER, c_out / ORDER);
        Ok(Self {
            c_in,
            c_out,
            w1d: std::array::from_fn(|_| Mat::zeros(ko, ki)),
            w_e: Mat::zeros(2 * ko, 2 * ki),
            bias: bias.then(|| Mat::zeros(ko, 1)),
        })
    }

    /// Uniform init with bound `1/√C_in`.
    pub fn init<R: Rng>(c_in: usize, c_out: usize, bias: bool, rng: &mut R) -> Result<Self> {
        let mut w = Self::zeros(c_in, c_out, bias)?;
        let bound = 1.0 / (c_in as f64).sqrt();
        for p in w.params_mut("") {
            *p.value = Mat::uniform(p.value.rows(), p.value.cols(), bound, rng);
        }
        Ok(w)
    }

    /// Every block the identity; requires `c_in == c_out`.
    pub fn identity(c: usize) -> Result<Self> {
        let mut w = Self::zeros(c, c, false)?;
        let k = c / ORDER;
        w.w1d = std::array::from_fn(|_| Mat::identity(k));
        w.w_e = Mat::identity(2 * k);
        Ok(w)
    }

    pub fn num_params(&self) -> usize {
        let k_in = self.c_in / ORDER;
        let k_out = self.c_out / ORDER;
        4 * k_in * k_out + 4 * k_in * k_out + self.bias.as_ref().map_or(0, |b| b.rows())
    }

    /// Multiplications per token: `3·C_in·C_out/16`.
    pub fn macs_per_token(&self) -> usize {
        let (ki, ko) = (self.c_in / ORDER, self.c_out / ORDER);
        4 * ki * ko + 2 * (2 * ki) * (2 * ko)
    }

    fn check_input(&self, x: &Mat) -> Result<()> {
        if x.rows() != self.c_in {
            return Err(OcticError::DimensionMismatch(format!(
                "equivariant linear expects {} channels, got {}",
                self.c_in,
                x.rows()
            )));
        }
        Ok(())
    }

    /// Stack the E sub-blocks into a `(C/4)×2L` matrix
    /// `[[E11; E21], [E12; E22]]`.
    fn stack_e(blocks: &[Mat; ORDER]) -> Mat {
        let first = Mat::vcat(&[&blocks[4], &blocks[6]]);
        let second = Mat::vcat(&[&blocks[5], &blocks[7]]);
        Mat::hcat(&[&first, &second])
    }

    /// Inverse of [`Self::stack_e`], writing into `blocks[4..8]`.
    fn unstack_e(y: &Mat, k: usize, l: usize, blocks: &mut [Mat; ORDER]) {
        let first = y.cols_range(0, l);
        let second = y.cols_range(l, l);
        blocks[4] = Mat::from_vec(k, l, first.rows_slice(0, k).to_vec());
        blocks[6] = Mat::from_vec(k, l, first.rows_slice(k, k).to_vec());
        blocks[5] = Mat::from_vec(k, l, second.rows_slice(0, k).to_vec());
        blocks[7] = Mat::from_vec(k, l, second.rows_slice(k, k).to_vec());
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        self.check_input(x)?;
        let l = x.cols();
        let ko = self.c_out / ORDER;
        let xb = split_blocks(x);
        let mut yb: [Mat; ORDER] = std::array::from_fn(|_| Mat::zeros(ko, l));
        for i in 0..4 {
            yb[i] = matmul(&self.w1d[i], &xb[i]);
        }
        let ye = matmul(&self.w_e, &Self::stack_e(&xb));
        Self::unstack_e(&ye, ko, l, &mut yb);
        if let Some(b) = &self.bias {
            for r in 0..ko {
                let v = b.get(r, 0);
                yb[0].row_mut(r).iter_mut().for_each(|y| *y += v);
            }
        }
        Ok(join_blocks(&yb))
    }

    /// VJP: returns `x̄` and accumulates `w̄` into `grad`.
    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut Self) -> Result<Mat> {
        self.check_input(x)?;
        if dy.shape() != (self.c_out, x.cols()) {
            return Err(OcticError::DimensionMismatch(format!(
                "output gradient has shape {:?}, expected ({}, {})",
                dy.shape(),
                self.c_out,
                x.cols()
            )));
        }
        let l = x.cols();
        let ki = self.c_in / ORDER;
        let xb = split_blocks(x);
        let db = split_blocks(dy);
        let mut dxb: [Mat; ORDER] = std::array::from_fn(|_| Mat::zeros(ki, l));
        for i in 0..4 {
            matmul_nt_acc(&db[i], &xb[i], &mut grad.w1d[i]);
            dxb[i] = matmul_tn(&self.w1d[i], &db[i]);
        }
        let xe = Self::stack_e(&xb);
        let de = Self::stack_e(&db);
        // both doublet components contribute to the shared E block
        matmul_nt_acc(&de, &xe, &mut grad.w_e);
        let dxe = matmul_tn(&self.w_e, &de);
        Self::unstack_e(&dxe, ki, l, &mut dxb);
        if let Some(gb) = &mut grad.bias {
            for r in 0..db[0].rows() {
                *gb.at_mut(r, 0) += db[0].row(r).iter().sum::<f64>();
            }
        }
        Ok(join_blocks(&dxb))
    }

    /// The equivalent dense `C_out×C_in` matrix.
    pub fn assemble_dense(&self) -> Mat {
        let (ki, ko) = (self.c_in / ORDER, self.c_out / ORDER);
        let mut d = Mat::zeros(self.c_out, self.c_in);
        for (b, w) in self.w1d.iter().enumerate() {
            for r in 0..ko {
                for c in 0..ki {
                    d.set(b * ko + r, b * ki + c, w.get(r, c));
                }
            }
        }
        // rows/cols of w_e: first half E1x, second half E2x
        for (out_first, in_first) in [(4, 4), (5, 5)] {
            let out_blocks = [out_first, out_first + 2];
            let in_blocks = [in_first, in_first + 2];
            for (oh, &ob) in out_blocks.iter().enumerate() {
                for (ih, &ib) in in_blocks.iter().enumerate() {
                    for r in 0..ko {
                        for c in 0..ki {
                            d.set(ob * ko + r, ib * ki + c, self.w_e.get(oh * ko + r, ih * ki + c));
                        }
                    }
                }
            }
        }
        d
    }
}

impl Parameterized for EquivLinear {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        const NAMES: [&str; 4] = ["w_a1", "w_a2", "w_b1", "w_b2"];
        for (w, name) in self.w1d.iter_mut().zip(NAMES) {
            out.push(ParamRef {
                name: join(prefix, name),
                value: w,
                constraint: Constraint::Free,
            });
        }
        out.push(ParamRef {
            name: join(prefix, "w_e"),
            value: &mut self.w_e,
            constraint: Constraint::Free,
        });
        if let Some(b) = &mut self.bias {
            out.push(ParamRef {
                name: join(prefix, "b_a1"),
                value: b,
                constraint: Constraint::Free,
            });
        }
    }
}

/// An ordinary affine map `y = W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLinear {
    pub weight: Mat,
    pub bias: Option<Mat>,
}

impl DenseLinear {
    pub fn zeros(c_in: usize, c_out: usize, bias: bool) -> Self {
        Self {
            weight: Mat::zeros(c_out, c_in),
            bias: bias.then(|| Mat::zeros(c_out, 1)),
        }
    }

    pub fn init<R: Rng>(c_in: usize, c_out: usize, bias: bool, rng: &mut R) -> Self {
        let bound = 1.0 / (c_in as f64).sqrt();
        Self {
            weight: Mat::uniform(c_out, c_in, bound, rng),
            bias: bias.then(|| Mat::uniform(c_out, 1, bound, rng)),
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn c_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn num_params(&self) -> usize {
        self.weight.data().len() + self.bias.as_ref().map_or(0, |b| b.rows())
    }

    pub fn macs_per_token(&self) -> usize {
        self.c_in() * self.c_out()
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        if x.rows() != self.c_in() {
            return Err(OcticError::DimensionMismatch(format!(
                "linear expects {} channels, got {}",
                self.c_in(),
                x.rows()
            )));
        }
        let mut y = matmul(&self.weight, x);
        if let Some(b) = &self.bias {
            for r in 0..y.rows() {
                let v = b.get(r, 0);
                y.row_mut(r).iter_mut().for_each(|e| *e += v);
            }
        }
        Ok(y)
    }

    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut Self) -> Result<Mat> {
        if dy.shape() != (self.c_out(), x.cols()) {
            return Err(OcticError::DimensionMismatch(format!(
                "output gradient has shape {:?}, expected ({}, {})",
                dy.shape(),
                self.c_out(),
                x.cols()
            )));
        }
        matmul_nt_acc(dy, x, &mut grad.weight);
        if let Some(gb) = &mut grad.bias {
            for r in 0..dy.rows() {
                *gb.at_mut(r, 0) += dy.row(r).iter().sum::<f64>();
            }
        }
        Ok(matmul_tn(&self.weight, dy))
    }
}

impl Parameterized for DenseLinear {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        out.push(ParamRef {
            name: join(prefix, "weight"),
            value: &mut self.weight,
            constraint: Constraint::Free,
        });
        if let Some(b) = &mut self.bias {
            out.push(ParamRef {
                name: join(prefix, "bias"),
                value: b,
                constraint: Constraint::Free,
            });
        }
    }
}

/// Either kind of linear layer, so blocks can be shared between families.
#[derive(Clone, Debug, PartialEq)]
pub enum Linear {
    Equiv(EquivLinear),
    Dense(DenseLinear),
}

impl Linear {
    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        match self {
            Linear::Equiv(l) => l.forward(x),
            Linear::Dense(l) => l.forward(x),
        }
    }

    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut Self) -> Result<Mat> {
        match (self, grad) {
            (Linear::Equiv(l), Linear::Equiv(g)) => l.backward(x, dy, g),
            (Linear::Dense(l), Linear::Dense(g)) => l.backward(x, dy, g),
            _ => Err(OcticError::DimensionMismatch("gradient kind differs from layer".into())),
        }
    }

    pub fn macs_per_token(&self) -> usize {
        match self {
            Linear::Equiv(l) => l.macs_per_token(),
            Linear::Dense(l) => l.macs_per_token(),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Linear::Equiv(l) => l.num_params(),
            Linear::Dense(l) => l.num_params(),
        }
    }
}

impl Parameterized for Linear {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        match self {
            Linear::Equiv(l) => l.collect_params(prefix, out),
            Linear::Dense(l) => l.collect_params(prefix, out),
        }
    }
}
