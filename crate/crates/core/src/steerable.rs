//! Steerable features and the D8 actions on images, patches, token grids and
//! channels, plus the Reynolds (group-averaging) projectors that build
//! constrained parameters.
//!
//! Grid convention: index `t = row·N + col`. With centred coordinates
//! `u = col − (N−1)/2` (right) and `v = (N−1)/2 − row` (up), an element acts
//! by its 2×2 matrix on `(u, v)`. In index space `r` sends
//! `(row, col) → (N−1−col, row)`: an anticlockwise quarter turn. `s` mirrors
//! left to right.

use crate::error::{check_divisible, OcticError, Result};
use crate::group::{character_1d, GroupElement, IrrepLabel, ORDER};
use crate::tensor::Mat;

/// Geometry of a square token grid, optionally with a trailing class token.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridGeometry {
    pub n: usize,
    pub has_cls: bool,
}

impl GridGeometry {
    pub fn new(n: usize, has_cls: bool) -> Result<Self> {
        if n == 0 {
            return Err(OcticError::InvalidConfig("token grid side must be >= 1".into()));
        }
        Ok(Self { n, has_cls })
    }

    /// Number of tokens `L`.
    pub fn len(&self) -> usize {
        self.n * self.n + self.has_cls as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn with_cls(self) -> Self {
        Self {
            has_cls: true,
            ..self
        }
    }
}

/// The representation carried by the channel dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelRep {
    /// `C/8` copies of `ρ_iso`, laid out as eight contiguous sub-blocks.
    IsoMultiple,
    /// `C` copies of the trivial representation.
    A1Multiple,
    /// No declared action.
    None,
}

/// A `C×L` feature matrix with a declared channel action and token grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SteerableFeature {
    pub data: Mat,
    pub rep: ChannelRep,
    pub geom: GridGeometry,
}

impl SteerableFeature {
    pub fn new(data: Mat, rep: ChannelRep, geom: GridGeometry) -> Result<Self> {
        if data.cols() != geom.len() {
            return Err(OcticError::DimensionMismatch(format!(
                "feature has {} tokens but geometry expects {}",
                data.cols(),
                geom.len()
            )));
        }
        if rep == ChannelRep::IsoMultiple {
            check_divisible("channel count", data.rows(), ORDER)?;
        }
        Ok(Self { data, rep, geom })
    }

    pub fn channels(&self) -> usize {
        self.data.rows()
    }

    /// Same rep and geometry, new data.
    pub fn with_data(&self, data: Mat) -> Self {
        Self {
            data,
            rep: self.rep,
            geom: self.geom,
        }
    }
}

/// A `3×M×M` image stored channel-major, then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub m: usize,
    pub data: Vec<f64>,
}

pub const IMAGE_CHANNELS: usize = 3;

impl Image {
    pub fn new(m: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != IMAGE_CHANNELS * m * m {
            return Err(OcticError::DimensionMismatch(format!(
                "image buffer has {} values, expected 3x{m}x{m}",
                data.len()
            )));
        }
        Ok(Self { m, data })
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            data: vec![0.0; IMAGE_CHANNELS * m * m],
        }
    }

    #[inline]
    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.m + row) * self.m + col]
    }

    #[inline]
    pub fn set(&mut self, c: usize, row: usize, col: usize, v: f64) {
        self.data[(c * self.m + row) * self.m + col] = v;
    }
}

/// Pixel permutation of an `n×n` grid: index `p` moves to `perm[p]`.
pub fn square_permutation(g: GroupElement, n: usize) -> Vec<usize> {
    let m = g.matrix();
    let span = n as i64 - 1;
    let mut perm = vec![0; n * n];
    for row in 0..n {
        for col in 0..n {
            // doubled centred coordinates keep everything integral
            let u = 2 * col as i64 - span;
            let v = span - 2 * row as i64;
            let u2 = m[0][0] as i64 * u + m[0][1] as i64 * v;
            let v2 = m[1][0] as i64 * u + m[1][1] as i64 * v;
            let col2 = ((u2 + span) / 2) as usize;
            let row2 = ((span - v2) / 2) as usize;
            perm[row * n + col] = row2 * n + col2;
        }
    }
    perm
}

/// `ρ_token(g)` as a permutation of the `L` tokens; the class token is fixed.
pub fn token_permutation(g: GroupElement, geom: GridGeometry) -> Vec<usize> {
    let mut perm = square_permutation(g, geom.n);
    if geom.has_cls {
        perm.push(geom.n * geom.n);
    }
    perm
}

/// `ρ_patch(g)`: rotates or mirrors a `P×P` patch, identity on colour.
/// Rows of a patchified image are indexed `c·P² + row·P + col`.
pub fn patch_permutation(g: GroupElement, p: usize) -> Vec<usize> {
    let inner = square_permutation(g, p);
    let mut perm = Vec::with_capacity(IMAGE_CHANNELS * p * p);
    for c in 0..IMAGE_CHANNELS {
        perm.extend(inner.iter().map(|&q| c * p * p + q));
    }
    perm
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (s, &t) in perm.iter().enumerate() {
        inv[t] = s;
    }
    inv
}

/// `ρ_image(g)` applied to an image.
pub fn image_action(g: GroupElement, img: &Image) -> Image {
    let perm = square_permutation(g, img.m);
    let mm = img.m * img.m;
    let mut out = Image::zeros(img.m);
    for c in 0..IMAGE_CHANNELS {
        let src = &img.data[c * mm..(c + 1) * mm];
        let dst = &mut out.data[c * mm..(c + 1) * mm];
        for (s, &t) in perm.iter().enumerate() {
            dst[t] = src[s];
        }
    }
    out
}

/// Reshape a `3×M×M` image into its `3P²×N²` patch matrix.
pub fn patchify(img: &Image, p: usize) -> Result<Mat> {
    if p == 0 {
        return Err(OcticError::InvalidConfig("patch size must be >= 1".into()));
    }
    check_divisible("image size", img.m, p)?;
    let n = img.m / p;
    let mut out = Mat::zeros(IMAGE_CHANNELS * p * p, n * n);
    for c in 0..IMAGE_CHANNELS {
        for tr in 0..n {
            for tc in 0..n {
                let t = tr * n + tc;
                for pr in 0..p {
                    for pc in 0..p {
                        let v = img.get(c, tr * p + pr, tc * p + pc);
                        out.set(c * p * p + pr * p + pc, t, v);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patchify`].
pub fn unpatchify(x: &Mat, p: usize) -> Result<Image> {
    let n = (x.cols() as f64).sqrt().round() as usize;
    if n * n != x.cols() || x.rows() != IMAGE_CHANNELS * p * p {
        return Err(OcticError::DimensionMismatch(format!(
            "cannot unpatchify a {}x{} matrix with patch size {p}",
            x.rows(),
            x.cols()
        )));
    }
    let mut img = Image::zeros(n * p);
    for c in 0..IMAGE_CHANNELS {
        for t in 0..n * n {
            let (tr, tc) = (t / n, t % n);
            for pr in 0..p {
                for pc in 0..p {
                    img.set(c, tr * p + pr, tc * p + pc, x.get(c * p * p + pr * p + pc, t));
                }
            }
        }
    }
    Ok(img)
}

/// Apply `(C/8)ρ_iso(g)` to the rows of `m` (every column is a token).
pub fn iso_act_rows(g: GroupElement, m: &mut Mat) {
    let rows = m.rows();
    assert_eq!(rows % ORDER, 0, "iso action needs a channel count divisible by 8");
    let k = rows / ORDER;
    let stride = k * m.cols();
    let data = m.data_mut();
    for (block, label) in [(1, IrrepLabel::A2), (2, IrrepLabel::B1), (3, IrrepLabel::B2)] {
        if character_1d(label, g) < 0.0 {
            data[block * stride..(block + 1) * stride]
                .iter_mut()
                .for_each(|v| *v = -*v);
        }
    }
    let e = g.matrix();
    let (m00, m01, m10, m11) = (e[0][0] as f64, e[0][1] as f64, e[1][0] as f64, e[1][1] as f64);
    for base in [4, 6] {
        let (first, second) = data[base * stride..(base + 2) * stride].split_at_mut(stride);
        for (u, v) in first.iter_mut().zip(second.iter_mut()) {
            let (a, b) = (*u, *v);
            *u = m00 * a + m01 * b;
            *v = m10 * a + m11 * b;
        }
    }
}

/// Apply the channel action of `rep` to the rows of `m`.
pub fn channel_act_rows(g: GroupElement, rep: ChannelRep, m: &mut Mat) -> Result<()> {
    match rep {
        ChannelRep::IsoMultiple => {
            check_divisible("channel count", m.rows(), ORDER)?;
            iso_act_rows(g, m);
            Ok(())
        }
        ChannelRep::A1Multiple => Ok(()),
        ChannelRep::None => Err(OcticError::InvalidConfig(
            "feature has no declared channel representation".into(),
        )),
    }
}

pub fn apply_channel_action(g: GroupElement, x: &SteerableFeature) -> Result<SteerableFeature> {
    let mut data = x.data.clone();
    channel_act_rows(g, x.rep, &mut data)?;
    Ok(x.with_data(data))
}

/// Two-sided action `ρ_chan(g)·x·ρ_token(g)ᵀ`.
pub fn act(g: GroupElement, x: &SteerableFeature) -> Result<SteerableFeature> {
    let mut data = x.data.permute_cols(&token_permutation(g, x.geom));
    channel_act_rows(g, x.rep, &mut data)?;
    Ok(x.with_data(data))
}

/// Two-sided action on a bare matrix whose columns are permuted by `perm`.
pub fn act_matrix(g: GroupElement, rep: ChannelRep, x: &Mat, col_perm: &[usize]) -> Result<Mat> {
    let mut data = x.permute_cols(col_perm);
    channel_act_rows(g, rep, &mut data)?;
    Ok(data)
}

/// Apply a channel action to the columns: `m · ρ(g)ᵀ`.
fn channel_act_cols(g: GroupElement, rep: ChannelRep, m: &Mat) -> Result<Mat> {
    let mut t = m.transpose();
    channel_act_rows(g, rep, &mut t)?;
    Ok(t.transpose())
}

/// `(1/8) Σ_g ρ_out(g)ᵀ · W · ρ_in(g)`: the orthogonal projection of `W` onto
/// the intertwiners from `rep_in` to `rep_out`.
pub fn reynolds_project_intertwiner(w: &Mat, rep_in: ChannelRep, rep_out: ChannelRep) -> Result<Mat> {
    if rep_in == ChannelRep::None || rep_out == ChannelRep::None {
        return Err(OcticError::InvalidConfig(
            "intertwiner projection needs declared representations".into(),
        ));
    }
    for (rep, dim, what) in [(rep_in, w.cols(), "input channels"), (rep_out, w.rows(), "output channels")] {
        if rep == ChannelRep::IsoMultiple {
            check_divisible(what, dim, ORDER)?;
        }
    }
    let mut acc = Mat::zeros(w.rows(), w.cols());
    for g in GroupElement::ALL {
        // ρ(g)ᵀ = ρ(g⁻¹) for orthogonal representations
        let gi = g.inverse();
        let mut term = channel_act_cols(gi, rep_in, w)?;
        channel_act_rows(gi, rep_out, &mut term)?;
        acc.add_assign(&term);
    }
    acc.scale(1.0 / ORDER as f64);
    Ok(acc)
}

/// Average of the two-sided action over the group.
fn average_two_sided(x: &Mat, rep: ChannelRep, perms: &[Vec<usize>]) -> Result<Mat> {
    let mut acc = Mat::zeros(x.rows(), x.cols());
    for g in GroupElement::ALL {
        acc.add_assign(&act_matrix(g, rep, x, &perms[g.index()])?);
    }
    acc.scale(1.0 / ORDER as f64);
    Ok(acc)
}

/// `(1/8) Σ_g ρ_chan(g)ᵀ·e·ρ_token(g)`: projects a positional encoding onto
/// the encodings satisfying `e = ρ_chan(g)·e·ρ_token(g)ᵀ`.
pub fn reynolds_project_posenc(e: &Mat, geom: GridGeometry) -> Result<Mat> {
    if e.cols() != geom.len() {
        return Err(OcticError::DimensionMismatch(format!(
            "positional encoding has {} tokens, geometry expects {}",
            e.cols(),
            geom.len()
        )));
    }
    check_divisible("channel count", e.rows(), ORDER)?;
    let perms: Vec<_> = GroupElement::ALL
        .iter()
        .map(|&g| token_permutation(g, geom))
        .collect();
    average_two_sided(e, ChannelRep::IsoMultiple, &perms)
}

/// Projects a `C×3P²` patch-embedding kernel onto the intertwiners
/// `W·ρ_patch(g) = ρ_chan(g)·W`.
pub fn reynolds_project_patch_kernel(w: &Mat, p: usize) -> Result<Mat> {
    if w.cols() != IMAGE_CHANNELS * p * p {
        return Err(OcticError::DimensionMismatch(format!(
            "kernel has {} inputs, expected 3*{p}^2",
            w.cols()
        )));
    }
    check_divisible("channel count", w.rows(), ORDER)?;
    let perms: Vec<_> = GroupElement::ALL
        .iter()
        .map(|&g| patch_permutation(g, p))
        .collect();
    average_two_sided(w, ChannelRep::IsoMultiple, &perms)
}

/// Keep only the A1 sub-block of an iso-steerable column vector (the
/// Reynolds projection for a single token without token action).
pub fn reynolds_project_a1(v: &mut [f64]) -> Result<()> {
    check_divisible("channel count", v.len(), ORDER)?;
    let k = v.len() / ORDER;
    v[k..].iter_mut().for_each(|x| *x = 0.0);
    Ok(())
}

/// Largest residual of `y = ρ_chan(g)·y·ρ_cols(g)ᵀ` over all `g`.
pub fn fixed_point_residual(y: &Mat, rep: ChannelRep, perms: &[Vec<usize>]) -> Result<f64> {
    let mut worst = 0.0f64;
    for g in GroupElement::ALL {
        let moved = act_matrix(g, rep, y, &perms[g.index()])?;
        worst = worst.max(moved.max_abs_diff(y));
    }
    Ok(worst)
}

pub const RESIDUAL_EPS: f64 = 1e-30;

/// Residual of `f` at one group element: `‖f(g·x) − g·f(x)‖∞ / (‖f(x)‖∞ + ε)`.
pub fn residual_at<F>(f: &F, x: &SteerableFeature, g: GroupElement) -> Result<f64>
where
    F: Fn(&SteerableFeature) -> Result<SteerableFeature>,
{
    let fx = f(x)?;
    let lhs = f(&act(g, x)?)?;
    let rhs = act(g, &fx)?;
    Ok(lhs.data.max_abs_diff(&rhs.data) / (fx.data.max_abs() + RESIDUAL_EPS))
}

/// Per-element residuals, indexed by slot.
pub fn residuals_by_element<F>(f: &F, x: &SteerableFeature) -> Result<[f64; ORDER]>
where
    F: Fn(&SteerableFeature) -> Result<SteerableFeature>,
{
    let mut out = [0.0; ORDER];
    for g in GroupElement::ALL {
        out[g.index()] = residual_at(f, x, g)?;
    }
    Ok(out)
}

/// `max_g ‖f(g·x) − g·f(x)‖∞ / (‖f(x)‖∞ + ε)`.
pub fn equivariance_residual<F>(f: F, x: &SteerableFeature) -> Result<f64>
where
    F: Fn(&SteerableFeature) -> Result<SteerableFeature>,
{
    Ok(residuals_by_element(&f, x)?
        .into_iter()
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{act_isotypical8, GroupElement as G};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rotation_formula_matches_enumeration() {
        // (i, j) -> (N-1-j, i) for N = 2
        let perm = square_permutation(G::R, 2);
        let expect = |i: usize, j: usize| (1 - j) * 2 + i;
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(perm[i * 2 + j], expect(i, j));
            }
        }
        // top-right corner moves to the top-left corner
        assert_eq!(perm[1], 0);
    }

    #[test]
    fn token_permutation_identity_and_order() {
        let geom = GridGeometry::new(7, true).unwrap();
        let id: Vec<usize> = (0..geom.len()).collect();
        assert_eq!(token_permutation(G::E, geom), id);
        let r = token_permutation(G::R, geom);
        let mut p = id.clone();
        for _ in 0..4 {
            p = p.iter().map(|&t| r[t]).collect();
        }
        assert_eq!(p, id);
        assert_eq!(r[49], 49);
    }

    #[test]
    fn permutations_are_homomorphisms() {
        for n in [1, 2, 3, 5] {
            for g in G::ALL {
                for h in G::ALL {
                    let pg = square_permutation(g, n);
                    let ph = square_permutation(h, n);
                    let pgh = square_permutation(g.mul(h), n);
                    let composed: Vec<usize> = (0..n * n).map(|t| pg[ph[t]]).collect();
                    assert_eq!(composed, pgh);
                }
            }
        }
    }

    #[test]
    fn patch_permutation_cases() {
        for g in G::ALL {
            assert_eq!(patch_permutation(g, 1), vec![0, 1, 2]);
        }
        // s swaps left and right pixels of the 2x2 patch in every plane
        let p = patch_permutation(G::S, 2);
        for c in 0..3 {
            let o = 4 * c;
            assert_eq!(&p[o..o + 4], &[o + 1, o, o + 3, o + 2]);
        }
    }

    fn random_image(m: usize, rng: &mut impl Rng) -> Image {
        Image::new(m, (0..3 * m * m).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn patchify_commutes_with_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in [1, 2, 4] {
            let img = random_image(8, &mut rng);
            let base = patchify(&img, p).unwrap();
            let geom = GridGeometry::new(8 / p, false).unwrap();
            for g in G::ALL {
                let lhs = patchify(&image_action(g, &img), p).unwrap();
                let rows = base.transpose().permute_cols(&patch_permutation(g, p)).transpose();
                let rhs = rows.permute_cols(&token_permutation(g, geom));
                assert_eq!(lhs, rhs);
            }
            assert_eq!(unpatchify(&base, p).unwrap(), img);
        }
    }

    #[test]
    fn channel_action_matches_per_copy_iso_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Mat::uniform(16, 3, 1.0, &mut rng);
        for g in G::ALL {
            let mut y = x.clone();
            iso_act_rows(g, &mut y);
            for t in 0..3 {
                for j in 0..2 {
                    let mut v = [0.0; 8];
                    for (b, slot) in v.iter_mut().enumerate() {
                        *slot = x.get(b * 2 + j, t);
                    }
                    act_isotypical8(g, &mut v);
                    for (b, &val) in v.iter().enumerate() {
                        assert_eq!(y.get(b * 2 + j, t), val);
                    }
                }
            }
        }
    }

    #[test]
    fn a2_content_negated_by_s() {
        let geom = GridGeometry::new(1, false).unwrap();
        let mut data = Mat::zeros(8, 1);
        data.set(1, 0, 2.5);
        let x = SteerableFeature::new(data, ChannelRep::IsoMultiple, geom).unwrap();
        let y = apply_channel_action(G::S, &x).unwrap();
        assert_eq!(y.data.get(1, 0), -2.5);
        assert_eq!(apply_channel_action(G::E, &x).unwrap(), x);
    }

    #[test]
    fn iso_rep_requires_divisible_channels() {
        let geom = GridGeometry::new(1, false).unwrap();
        assert!(SteerableFeature::new(Mat::zeros(12, 1), ChannelRep::IsoMultiple, geom).is_err());
        let mut m = Mat::zeros(12, 1);
        assert!(channel_act_rows(G::R, ChannelRep::IsoMultiple, &mut m).is_err());
        assert!(channel_act_rows(G::R, ChannelRep::None, &mut m).is_err());
    }

    #[test]
    fn two_sided_action_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let geom = GridGeometry::new(3, true).unwrap();
        let x = SteerableFeature::new(Mat::uniform(16, 10, 1.0, &mut rng), ChannelRep::IsoMultiple, geom)
            .unwrap();
        for g in G::ALL {
            for h in G::ALL {
                let lhs = act(g, &act(h, &x).unwrap()).unwrap();
                let rhs = act(g.mul(h), &x).unwrap();
                assert!(lhs.data.max_abs_diff(&rhs.data) < 1e-13);
            }
            let y = act(g, &x).unwrap();
            assert!((y.data.frobenius() - x.data.frobenius()).abs() < 1e-12);
        }
    }

    #[test]
    fn posenc_projection_is_idempotent_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let geom = GridGeometry::new(4, false).unwrap();
        let e = Mat::uniform(16, 16, 1.0, &mut rng);
        let p = reynolds_project_posenc(&e, geom).unwrap();
        let perms: Vec<_> = G::ALL.iter().map(|&g| token_permutation(g, geom)).collect();
        assert!(fixed_point_residual(&p, ChannelRep::IsoMultiple, &perms).unwrap() < 1e-12);
        let pp = reynolds_project_posenc(&p, geom).unwrap();
        assert!(pp.max_abs_diff(&p) < 1e-13);
        let z = reynolds_project_posenc(&Mat::zeros(16, 16), geom).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        assert!(reynolds_project_posenc(&Mat::zeros(16, 5), geom).is_err());
    }

    #[test]
    fn patch_kernel_projection_intertwines() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let w = Mat::uniform(16, 12, 1.0, &mut rng);
        let p = reynolds_project_patch_kernel(&w, 2).unwrap();
        for g in G::ALL {
            // W·ρ_patch(g) == ρ_chan(g)·W; permute_cols(π) multiplies by ρ(g)ᵀ
            let perm = patch_permutation(g.inverse(), 2);
            let lhs = p.permute_cols(&perm);
            let mut rhs = p.clone();
            iso_act_rows(g, &mut rhs);
            assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }
    }

    #[test]
    fn intertwiner_projection_is_block_sparse() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let w = Mat::uniform(8, 8, 1.0, &mut rng);
        let p = reynolds_project_intertwiner(&w, ChannelRep::IsoMultiple, ChannelRep::IsoMultiple).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let in_1d = i < 4 && i == j;
                let in_e = i >= 4 && j >= 4 && (i % 2 == j % 2);
                if !(in_1d || in_e) {
                    assert!(p.get(i, j).abs() < 1e-15, "({i},{j}) = {}", p.get(i, j));
                }
            }
        }
        // weight sharing between the two doublet components
        assert!((p.get(4, 4) - p.get(5, 5)).abs() < 1e-15);
        assert!((p.get(4, 6) - p.get(5, 7)).abs() < 1e-15);
        let again = reynolds_project_intertwiner(&p, ChannelRep::IsoMultiple, ChannelRep::IsoMultiple).unwrap();
        assert!(again.max_abs_diff(&p) < 1e-15);
    }

    #[test]
    fn a1_multiple_projection_keeps_only_a1_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let w = Mat::uniform(4, 16, 1.0, &mut rng);
        let p = reynolds_project_intertwiner(&w, ChannelRep::IsoMultiple, ChannelRep::A1Multiple).unwrap();
        for r in 0..4 {
            for c in 0..16 {
                let expect = if c < 2 { w.get(r, c) } else { 0.0 };
                assert!((p.get(r, c) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn residual_of_identity_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let geom = GridGeometry::new(2, true).unwrap();
        let x = SteerableFeature::new(Mat::uniform(8, 5, 1.0, &mut rng), ChannelRep::IsoMultiple, geom)
            .unwrap();
        assert_eq!(equivariance_residual(|x| Ok(x.clone()), &x).unwrap(), 0.0);
        let random = Mat::uniform(8, 8, 1.0, &mut rng);
        let r = equivariance_residual(|x| Ok(x.with_data(crate::tensor::matmul(&random, &x.data))), &x)
            .unwrap();
        assert!(r > 0.05, "generic map residual {r}");
    }
}
