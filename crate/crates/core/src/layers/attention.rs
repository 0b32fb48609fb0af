use rand::Rng;

use super::{join, DenseLinear, EquivLinear, Linear, ParamRef, Parameterized};
use crate::error::{check_divisible, OcticError, Result};
use crate::group::ORDER;
use crate::tensor::{matmul, matmul_nt, matmul_tn, Mat};

/// How channels are assigned to heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadLayout {
    /// Head `h` owns channels `h·d .. (h+1)·d`.
    Contiguous,
    /// Head `h` owns iso copies `h·C/(8H) .. (h+1)·C/(8H)` in every sub-block,
    /// so each head sees whole copies of `ρ_iso`.
    IsoCopies,
}

impl HeadLayout {
    pub fn channels(&self, c: usize, heads: usize, h: usize) -> Vec<usize> {
        let d = c / heads;
        match self {
            HeadLayout::Contiguous => (h * d..(h + 1) * d).collect(),
            HeadLayout::IsoCopies => {
                let k = c / ORDER;
                let kh = k / heads;
                (0..ORDER)
                    .flat_map(|b| (h * kh..(h + 1) * kh).map(move |j| b * k + j))
                    .collect()
            }
        }
    }
}

/// Multi-head self-attention with logits `qᵀk/√(C/H)`.
///
/// The key projection has no bias: a key bias only shifts each query's
/// logits by a constant, which the softmax removes.
#[derive(Clone, Debug, PartialEq)]
pub struct Attention {
    pub heads: usize,
    pub layout: HeadLayout,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    x: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    probs: Vec<Mat>,
    mixed: Mat,
}

fn gather_rows(m: &Mat, rows: &[usize]) -> Mat {
    let mut out = Mat::zeros(rows.len(), m.cols());
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from_slice(m.row(r));
    }
    out
}

fn scatter_rows(dst: &mut Mat, rows: &[usize], src: &Mat) {
    for (i, &r) in rows.iter().enumerate() {
        dst.row_mut(r).copy_from_slice(src.row(i));
    }
}

fn softmax_rows(s: &mut Mat) {
    for r in 0..s.rows() {
        let row = s.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

impl Attention {
    pub fn octic<R: Rng>(c: usize, heads: usize, rng: &mut R) -> Result<Self> {
        check_divisible("channel count", c, ORDER * heads)?;
        let mut lin = |bias| EquivLinear::init(c, c, bias, rng).map(Linear::Equiv);
        Ok(Self {
            heads,
            layout: HeadLayout::IsoCopies,
            q: lin(true)?,
            k: lin(false)?,
            v: lin(true)?,
            o: lin(true)?,
        })
    }

    pub fn standard<R: Rng>(c: usize, heads: usize, rng: &mut R) -> Result<Self> {
        check_divisible("channel count", c, heads)?;
        let mut lin = |bias| Linear::Dense(DenseLinear::init(c, c, bias, rng));
        Ok(Self {
            heads,
            layout: HeadLayout::Contiguous,
            q: lin(true),
            k: lin(false),
            v: lin(true),
            o: lin(true),
        })
    }

    fn scale(&self, c: usize) -> f64 {
        1.0 / ((c / self.heads) as f64).sqrt()
    }

    /// Attention logits of one head (`L×L`, row = query token).
    pub fn head_logits(&self, q: &Mat, k: &Mat, h: usize) -> Mat {
        let rows = self.layout.channels(q.rows(), self.heads, h);
        let mut s = matmul_tn(&gather_rows(q, &rows), &gather_rows(k, &rows));
        s.scale(self.scale(q.rows()));
        s
    }

    /// Projected queries and keys, exposed for logit-invariance checks.
    pub fn project_qk(&self, x: &Mat) -> Result<(Mat, Mat)> {
        Ok((self.q.forward(x)?, self.k.forward(x)?))
    }

    pub fn forward(&self, x: &Mat) -> Result<(Mat, AttentionCache)> {
        let c = x.rows();
        if c % self.heads != 0 {
            return Err(OcticError::NotDivisible {
                what: "channel count",
                value: c,
                divisor: self.heads,
            });
        }
        let q = self.q.forward(x)?;
        let k = self.k.forward(x)?;
        let v = self.v.forward(x)?;
        let mut mixed = Mat::zeros(c, x.cols());
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let rows = self.layout.channels(c, self.heads, h);
            let mut a = self.head_logits(&q, &k, h);
            softmax_rows(&mut a);
            // out_i = Σ_j a_ij v_j
            let out = matmul_nt(&gather_rows(&v, &rows), &a);
            scatter_rows(&mut mixed, &rows, &out);
            probs.push(a);
        }
        let y = self.o.forward(&mixed)?;
        Ok((
            y,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                probs,
                mixed,
            },
        ))
    }

    pub fn backward(&self, cache: &AttentionCache, dy: &Mat, grad: &mut Self) -> Result<Mat> {
        let c = cache.x.rows();
        let scale = self.scale(c);
        let dmixed = self.o.backward(&cache.mixed, dy, &mut grad.o)?;
        let mut dq = Mat::zeros(c, cache.x.cols());
        let mut dk = Mat::zeros(c, cache.x.cols());
        let mut dv = Mat::zeros(c, cache.x.cols());
        for h in 0..self.heads {
            let rows = self.layout.channels(c, self.heads, h);
            let a = &cache.probs[h];
            let dout = gather_rows(&dmixed, &rows);
            let vh = gather_rows(&cache.v, &rows);
            scatter_rows(&mut dv, &rows, &matmul(&dout, a));
            let da = matmul_tn(&dout, &vh);
            // softmax VJP row by row
            let mut ds = Mat::zeros(a.rows(), a.cols());
            for i in 0..a.rows() {
                let dot: f64 = a.row(i).iter().zip(da.row(i)).map(|(p, g)| p * g).sum();
                for j in 0..a.cols() {
                    ds.set(i, j, a.get(i, j) * (da.get(i, j) - dot) * scale);
                }
            }
            let qh = gather_rows(&cache.q, &rows);
            let kh = gather_rows(&cache.k, &rows);
            scatter_rows(&mut dq, &rows, &matmul_nt(&kh, &ds));
            scatter_rows(&mut dk, &rows, &matmul(&qh, &ds));
        }
        let mut dx = self.q.backward(&cache.x, &dq, &mut grad.q)?;
        dx.add_assign(&self.k.backward(&cache.x, &dk, &mut grad.k)?);
        dx.add_assign(&self.v.backward(&cache.x, &dv, &mut grad.v)?);
        Ok(dx)
    }

    pub fn linear_macs_per_token(&self) -> usize {
        [&self.q, &self.k, &self.v, &self.o]
            .iter()
            .map(|l| l.macs_per_token())
            .sum()
    }
}

impl Parameterized for Attention {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        self.q.collect_params(&join(prefix, "q"), out);
        self.k.collect_params(&join(prefix, "k"), out);
        self.v.collect_params(&join(prefix, "v"), out);
        self.o.collect_params(&join(prefix, "o"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupElement;
    use crate::steerable::{act, ChannelRep, GridGeometry, SteerableFeature};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn iso_head_layout_covers_every_channel_once() {
        let mut seen = vec![0; 32];
        for h in 0..2 {
            for ch in HeadLayout::IsoCopies.channels(32, 2, h) {
                seen[ch] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
    }

    #[test]
    fn single_token_is_output_projection_of_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let attn = Attention::octic(16, 1, &mut rng).unwrap();
        let x = Mat::uniform(16, 1, 1.0, &mut rng);
        let (y, _) = attn.forward(&x).unwrap();
        let expect = attn.o.forward(&attn.v.forward(&x).unwrap()).unwrap();
        assert!(y.max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn logits_permute_with_tokens() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let attn = Attention::octic(32, 2, &mut rng).unwrap();
        let geom = GridGeometry::new(3, true).unwrap();
        let x = SteerableFeature::new(Mat::uniform(32, 10, 1.0, &mut rng), ChannelRep::IsoMultiple, geom)
            .unwrap();
        let (q, k) = attn.project_qk(&x.data).unwrap();
        for g in GroupElement::ALL {
            let gx = act(g, &x).unwrap();
            let (gq, gk) = attn.project_qk(&gx.data).unwrap();
            let perm = crate::steerable::token_permutation(g, geom);
            for h in 0..2 {
                let base = attn.head_logits(&q, &k, h);
                let moved = attn.head_logits(&gq, &gk, h);
                for i in 0..10 {
                    for j in 0..10 {
                        assert!((moved.get(perm[i], perm[j]) - base.get(i, j)).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
