use super::{join, Constraint, ParamRef, Parameterized};
use crate::error::{check_divisible, OcticError, Result};
use crate::group::ORDER;
use crate::tensor::Mat;

pub const LN_EPS: f64 = 1e-6;

/// Number of learnable gains of the equivariant layer norm: one per
/// one-dimensional irrep block and one per E doublet pair.
pub const EQUIV_LN_GAINS: usize = 6;

/// Gain slot for each of the eight sub-blocks.
const GAIN_OF_BLOCK: [usize; ORDER] = [0, 1, 2, 3, 4, 4, 5, 5];

/// Layer norm commuting with `(C/8)ρ_iso`: centre every sub-block, divide by
/// the RMS of the whole centred token, scale each irrep block by one gain.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivLayerNorm {
    pub channels: usize,
    /// `6×1`: A1, A2, B1, B2, (E11, E12), (E21, E22).
    pub gains: Mat,
}

#[derive(Clone, Debug)]
pub struct NormCache {
    normalized: Mat,
    inv_rms: Vec<f64>,
}

impl EquivLayerNorm {
    pub fn new(channels: usize) -> Result<Self> {
        check_divisible("channel count", channels, ORDER)?;
        Ok(Self {
            channels,
            gains: Mat::from_vec(EQUIV_LN_GAINS, 1, vec![1.0; EQUIV_LN_GAINS]),
        })
    }

    pub fn forward(&self, x: &Mat) -> Result<(Mat, NormCache)> {
        if x.rows() != self.channels {
            return Err(OcticError::DimensionMismatch(format!(
                "layer norm expects {} channels, got {}",
                self.channels,
                x.rows()
            )));
        }
        let (c, l) = x.shape();
        let k = c / ORDER;
        let mut z = x.clone();
        let mut inv_rms = vec![0.0; l];
        for t in 0..l {
            let mut sq = 0.0;
            for b in 0..ORDER {
                let mean = (0..k).map(|j| x.get(b * k + j, t)).sum::<f64>() / k as f64;
                for j in 0..k {
                    let v = x.get(b * k + j, t) - mean;
                    z.set(b * k + j, t, v);
                    sq += v * v;
                }
            }
            let inv = 1.0 / (sq / c as f64 + LN_EPS).sqrt();
            inv_rms[t] = inv;
            for r in 0..c {
                *z.at_mut(r, t) *= inv;
            }
        }
        let mut y = z.clone();
        for b in 0..ORDER {
            let gain = self.gains.get(GAIN_OF_BLOCK[b], 0);
            y.rows_slice_mut(b * k, k).iter_mut().for_each(|v| *v *= gain);
        }
        Ok((
            y,
            NormCache {
                normalized: z,
                inv_rms,
            },
        ))
    }

    pub fn backward(&self, cache: &NormCache, dy: &Mat, grad: &mut Self) -> Mat {
        let z = &cache.normalized;
        let (c, l) = z.shape();
        let k = c / ORDER;
        let mut dz = dy.clone();
        for b in 0..ORDER {
            let slot = GAIN_OF_BLOCK[b];
            let gsum: f64 = dy
                .rows_slice(b * k, k)
                .iter()
                .zip(z.rows_slice(b * k, k))
                .map(|(d, v)| d * v)
                .sum();
            *grad.gains.at_mut(slot, 0) += gsum;
            let gain = self.gains.get(slot, 0);
            dz.rows_slice_mut(b * k, k).iter_mut().for_each(|v| *v *= gain);
        }
        let mut dx = Mat::zeros(c, l);
        for t in 0..l {
            let inv = cache.inv_rms[t];
            let proj: f64 = (0..c).map(|r| dz.get(r, t) * z.get(r, t)).sum::<f64>() / c as f64;
            for r in 0..c {
                dx.set(r, t, inv * (dz.get(r, t) - z.get(r, t) * proj));
            }
            for b in 0..ORDER {
                let mean = (0..k).map(|j| dx.get(b * k + j, t)).sum::<f64>() / k as f64;
                for j in 0..k {
                    *dx.at_mut(b * k + j, t) -= mean;
                }
            }
        }
        dx
    }
}

impl Parameterized for EquivLayerNorm {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        out.push(ParamRef {
            name: join(prefix, "gains"),
            value: &mut self.gains,
            constraint: Constraint::Free,
        });
    }
}

/// Standard per-token layer norm with per-channel affine parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Mat,
    pub beta: Mat,
}

impl LayerNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Mat::from_vec(channels, 1, vec![1.0; channels]),
            beta: Mat::zeros(channels, 1),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.rows()
    }

    pub fn forward(&self, x: &Mat) -> Result<(Mat, NormCache)> {
        if x.rows() != self.channels() {
            return Err(OcticError::DimensionMismatch(format!(
                "layer norm expects {} channels, got {}",
                self.channels(),
                x.rows()
            )));
        }
        let (c, l) = x.shape();
        let mut z = Mat::zeros(c, l);
        let mut inv_rms = vec![0.0; l];
        for t in 0..l {
            let mean = (0..c).map(|r| x.get(r, t)).sum::<f64>() / c as f64;
            let var = (0..c).map(|r| (x.get(r, t) - mean).powi(2)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_rms[t] = inv;
            for r in 0..c {
                z.set(r, t, (x.get(r, t) - mean) * inv);
            }
        }
        let y = Mat::from_fn(c, l, |r, t| self.gamma.get(r, 0) * z.get(r, t) + self.beta.get(r, 0));
        Ok((
            y,
            NormCache {
                normalized: z,
                inv_rms,
            },
        ))
    }

    pub fn backward(&self, cache: &NormCache, dy: &Mat, grad: &mut Self) -> Mat {
        let z = &cache.normalized;
        let (c, l) = z.shape();
        for r in 0..c {
            let (mut gg, mut gb) = (0.0, 0.0);
            for t in 0..l {
                gg += dy.get(r, t) * z.get(r, t);
                gb += dy.get(r, t);
            }
            *grad.gamma.at_mut(r, 0) += gg;
            *grad.beta.at_mut(r, 0) += gb;
        }
        let mut dx = Mat::zeros(c, l);
        for t in 0..l {
            let dz: Vec<f64> = (0..c).map(|r| dy.get(r, t) * self.gamma.get(r, 0)).collect();
            let mean_dz = dz.iter().sum::<f64>() / c as f64;
            let mean_dzz = (0..c).map(|r| dz[r] * z.get(r, t)).sum::<f64>() / c as f64;
            let inv = cache.inv_rms[t];
            for r in 0..c {
                dx.set(r, t, inv * (dz[r] - mean_dz - z.get(r, t) * mean_dzz));
            }
        }
        dx
    }
}

impl Parameterized for LayerNorm {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        out.push(ParamRef {
            name: join(prefix, "gamma"),
            value: &mut self.gamma,
            constraint: Constraint::Free,
        });
        out.push(ParamRef {
            name: join(prefix, "beta"),
            value: &mut self.beta,
            constraint: Constraint::Free,
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Norm {
    Equiv(EquivLayerNorm),
    Standard(LayerNorm),
}

impl Norm {
    pub fn forward(&self, x: &Mat) -> Result<(Mat, NormCache)> {
        match self {
            Norm::Equiv(n) => n.forward(x),
            Norm::Standard(n) => n.forward(x),
        }
    }

    pub fn backward(&self, cache: &NormCache, dy: &Mat, grad: &mut Self) -> Result<Mat> {
        match (self, grad) {
            (Norm::Equiv(n), Norm::Equiv(g)) => Ok(n.backward(cache, dy, g)),
            (Norm::Standard(n), Norm::Standard(g)) => Ok(n.backward(cache, dy, g)),
            _ => Err(OcticError::DimensionMismatch("gradient kind differs from layer".into())),
        }
    }
}

impl Parameterized for Norm {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        match self {
            Norm::Equiv(n) => n.collect_params(prefix, out),
            Norm::Standard(n) => n.collect_params(prefix, out),
        }
    }
}
