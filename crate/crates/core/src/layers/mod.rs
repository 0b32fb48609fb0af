//! Transformer building blocks, each with a forward pass and a
//! vector-Jacobian product.
//!
//! Features are `C×L` matrices (one column per token). Octic layers expect
//! iso-steerable channels laid out as eight contiguous sub-blocks
//! `(A1, A2, B1, B2, E11, E12, E21, E22)` of `C/8` rows each; the E doublets
//! are `(E11[j], E12[j])` and `(E21[j], E22[j])`.
//!
//! Backward passes take a gradient accumulator of the same type as the layer
//! (`grad`), add parameter gradients into it, and return the input gradient.

pub mod activation;
pub mod attention;
pub mod block;
pub mod checkpoint;
pub mod embed;
pub mod linear;
pub mod norm;

pub use activation::{equiv_gelu, equiv_gelu_vjp, gelu, gelu_grad, Activation};
pub use attention::{Attention, HeadLayout};
pub use block::Block;
pub use embed::{add_posenc_and_cls, append_posenc_cls, split_posenc_cls_grad, ClassToken, PatchEmbed, PositionalEncoding};
pub use linear::{DenseLinear, EquivLinear, Linear};
pub use norm::{EquivLayerNorm, LayerNorm, Norm};

use crate::error::Result;
use crate::group::ORDER;
use crate::steerable::{
    reynolds_project_a1, reynolds_project_patch_kernel, reynolds_project_posenc, GridGeometry,
};
use crate::tensor::Mat;

/// Subspace a stored parameter must stay on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    Free,
    /// Intertwiner from `ρ_patch` (patch size `p`) to `(C/8)ρ_iso`.
    PatchKernel { p: usize },
    /// Fixed point of the two-sided action on the token grid.
    Posenc(GridGeometry),
    /// Iso-steerable vector with only A1 content.
    A1Only,
}

impl Constraint {
    /// Reynolds projection onto the constrained subspace.
    pub fn project(&self, m: &Mat) -> Result<Mat> {
        match *self {
            Constraint::Free => Ok(m.clone()),
            Constraint::PatchKernel { p } => reynolds_project_patch_kernel(m, p),
            Constraint::Posenc(geom) => reynolds_project_posenc(m, geom),
            Constraint::A1Only => {
                let mut out = m.clone();
                let mut col = out.col_vec(0);
                reynolds_project_a1(&mut col)?;
                out.set_col(0, &col);
                Ok(out)
            }
        }
    }
}

/// A named, mutable view of one parameter array.
pub struct ParamRef<'a> {
    pub name: String,
    pub value: &'a mut Mat,
    pub constraint: Constraint,
}

/// Anything holding trainable arrays.
pub trait Parameterized {
    /// Append every parameter in a fixed, deterministic order.
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>);

    fn params_mut(&mut self, prefix: &str) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        self.collect_params(prefix, &mut out);
        out
    }

    fn num_params(&mut self) -> usize {
        self.params_mut("").iter().map(|p| p.value.data().len()).sum()
    }

    /// Re-apply every constraint in place.
    fn reproject(&mut self) -> Result<()> {
        for p in self.params_mut("") {
            if p.constraint != Constraint::Free {
                let projected = p.constraint.project(p.value)?;
                *p.value = projected;
            }
        }
        Ok(())
    }

    /// Set every parameter to zero (gradient accumulators).
    fn zero(&mut self) {
        for p in self.params_mut("") {
            p.value.fill(0.0);
        }
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Split an iso-steerable `C×L` matrix into its eight sub-blocks.
pub fn split_blocks(x: &Mat) -> [Mat; ORDER] {
    let k = x.rows() / ORDER;
    std::array::from_fn(|b| Mat::from_vec(k, x.cols(), x.rows_slice(b * k, k).to_vec()))
}

/// Inverse of [`split_blocks`].
pub fn join_blocks(blocks: &[Mat; ORDER]) -> Mat {
    let refs: Vec<&Mat> = blocks.iter().collect();
    Mat::vcat(&refs)
}
