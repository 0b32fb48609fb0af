use rand::Rng;

use super::attention::AttentionCache;
use super::norm::NormCache;
use super::{
    join, Activation, Attention, DenseLinear, EquivLayerNorm, EquivLinear, LayerNorm, Linear, Norm,
    ParamRef, Parameterized,
};
use crate::error::Result;
use crate::tensor::Mat;

/// MLP expansion factor.
pub const MLP_RATIO: usize = 4;

/// Pre-norm transformer block: `x + MHA(LN x)`, then `x + MLP(LN x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub norm1: Norm,
    pub attn: Attention,
    pub norm2: Norm,
    pub fc1: Linear,
    pub act: Activation,
    pub fc2: Linear,
}

#[derive(Clone, Debug)]
pub struct BlockCache {
    n1: NormCache,
    attn: AttentionCache,
    n2: NormCache,
    ln2: Mat,
    pre_act: Mat,
    post_act: Mat,
}

impl Block {
    pub fn octic<R: Rng>(c: usize, heads: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            norm1: Norm::Equiv(EquivLayerNorm::new(c)?),
            attn: Attention::octic(c, heads, rng)?,
            norm2: Norm::Equiv(EquivLayerNorm::new(c)?),
            fc1: Linear::Equiv(EquivLinear::init(c, MLP_RATIO * c, true, rng)?),
            act: Activation::EquivGelu,
            fc2: Linear::Equiv(EquivLinear::init(MLP_RATIO * c, c, true, rng)?),
        })
    }

    pub fn standard<R: Rng>(c: usize, heads: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            norm1: Norm::Standard(LayerNorm::new(c)),
            attn: Attention::standard(c, heads, rng)?,
            norm2: Norm::Standard(LayerNorm::new(c)),
            fc1: Linear::Dense(DenseLinear::init(c, MLP_RATIO * c, true, rng)),
            act: Activation::Gelu,
            fc2: Linear::Dense(DenseLinear::init(MLP_RATIO * c, c, true, rng)),
        })
    }

    pub fn is_octic(&self) -> bool {
        matches!(self.act, Activation::EquivGelu)
    }

    pub fn forward(&self, x: &Mat) -> Result<(Mat, BlockCache)> {
        let (ln1, n1) = self.norm1.forward(x)?;
        let (a, attn) = self.attn.forward(&ln1)?;
        let mut h = x.clone();
        h.add_assign(&a);
        let (ln2, n2) = self.norm2.forward(&h)?;
        let pre_act = self.fc1.forward(&ln2)?;
        let post_act = self.act.forward(&pre_act)?;
        let mut y = h.clone();
        y.add_assign(&self.fc2.forward(&post_act)?);
        Ok((
            y,
            BlockCache {
                n1,
                attn,
                n2,
                ln2,
                pre_act,
                post_act,
            },
        ))
    }

    pub fn backward(&self, cache: &BlockCache, dy: &Mat, grad: &mut Self) -> Result<Mat> {
        let dpost = self.fc2.backward(&cache.post_act, dy, &mut grad.fc2)?;
        let dpre = self.act.backward(&cache.pre_act, &dpost)?;
        let dln2 = self.fc1.backward(&cache.ln2, &dpre, &mut grad.fc1)?;
        let mut dh = self.norm2.backward(&cache.n2, &dln2, &mut grad.norm2)?;
        dh.add_assign(dy);
        let dln1 = self.attn.backward(&cache.attn, &dh, &mut grad.attn)?;
        let mut dx = self.norm1.backward(&cache.n1, &dln1, &mut grad.norm1)?;
        dx.add_assign(&dh);
        Ok(dx)
    }

    /// Multiply-accumulates per token spent in linear layers.
    pub fn linear_macs_per_token(&self) -> usize {
        self.attn.linear_macs_per_token() + self.fc1.macs_per_token() + self.fc2.macs_per_token()
    }

    /// Parameters held by linear layers (weights and biases).
    pub fn linear_params(&self) -> usize {
        [&self.attn.q, &self.attn.k, &self.attn.v, &self.attn.o, &self.fc1, &self.fc2]
            .iter()
            .map(|l| l.num_params())
            .sum()
    }
}

impl Parameterized for Block {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        self.norm1.collect_params(&join(prefix, "norm1"), out);
        self.attn.collect_params(&join(prefix, "attn"), out);
        self.norm2.collect_params(&join(prefix, "norm2"), out);
        self.fc1.collect_params(&join(prefix, "fc1"), out);
        self.fc2.collect_params(&join(prefix, "fc2"), out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steerable::{equivariance_residual, ChannelRep, GridGeometry, SteerableFeature};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn octic_block_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let block = Block::octic(32, 2, &mut rng).unwrap();
        let geom = GridGeometry::new(4, true).unwrap();
        let x = SteerableFeature::new(Mat::uniform(32, 17, 1.0, &mut rng), ChannelRep::IsoMultiple, geom)
            .unwrap();
        let res = equivariance_residual(|f: &SteerableFeature| -> crate::Result<SteerableFeature> { Ok(f.with_data(block.forward(&f.data)?.0)) }, &x)
            .unwrap();
        assert!(res < 1e-11, "residual {res}");
    }

    #[test]
    fn standard_block_is_not_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let block = Block::standard(16, 2, &mut rng).unwrap();
        let geom = GridGeometry::new(2, true).unwrap();
        let x = SteerableFeature::new(Mat::uniform(16, 5, 1.0, &mut rng), ChannelRep::IsoMultiple, geom)
            .unwrap();
        let res = equivariance_residual(|f: &SteerableFeature| -> crate::Result<SteerableFeature> { Ok(f.with_data(block.forward(&f.data)?.0)) }, &x)
            .unwrap();
        assert!(res > 1e-3);
    }

    #[test]
    fn octic_linear_params_are_an_eighth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let o = Block::octic(32, 2, &mut rng).unwrap();
        let s = Block::standard(32, 2, &mut rng).unwrap();
        // weights only: octic biases are C/8 long, dense ones C; keys have none
        let weights = |b: &Block| b.linear_params();
        let bias_o = 3 * 4 + 16 + 4;
        let bias_s = 3 * 32 + 128 + 32;
        assert_eq!((weights(&o) - bias_o) * 8, weights(&s) - bias_s);
    }
}
