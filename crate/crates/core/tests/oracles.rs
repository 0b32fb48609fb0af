//! Independent oracles: dense linear algebra for the intertwiner space and
//! hand-written pixel rules for the spatial action.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use octic::group::{isotypical_matrix, GroupElement};
use octic::steerable::{
    act, image_action, reynolds_project_intertwiner, ChannelRep, GridGeometry, Image, SteerableFeature,
};
use octic::tensor::Mat;

/// Block-diagonal `k` copies of `ρ_iso(g)` in the sub-block channel layout.
fn rho(g: GroupElement, k: usize) -> DMatrix<f64> {
    let r = isotypical_matrix(g);
    DMatrix::from_fn(8 * k, 8 * k, |i, j| if i % k == j % k { r[i / k][j / k] } else { 0.0 })
}

/// The stacked linear system `W ↦ (ρ(g)W − Wρ(g))_g` on vectorised `W`.
fn commutator_system(k: usize) -> DMatrix<f64> {
    let n = 8 * k;
    let mut sys = DMatrix::zeros(8 * n * n, n * n);
    for (gi, g) in GroupElement::ALL.into_iter().enumerate() {
        let r = rho(g, k);
        for col in 0..n * n {
            let mut w = DMatrix::zeros(n, n);
            w[(col / n, col % n)] = 1.0;
            let c = &r * &w - &w * &r;
            for (i, v) in c.iter().enumerate() {
                sys[(gi * n * n + i, col)] = *v;
            }
        }
    }
    sys
}

fn projector_matrix(k: usize) -> DMatrix<f64> {
    let n = 8 * k;
    let mut p = DMatrix::zeros(n * n, n * n);
    for col in 0..n * n {
        let mut w = Mat::zeros(n, n);
        w.set(col / n, col % n, 1.0);
        let q = reynolds_project_intertwiner(&w, ChannelRep::IsoMultiple, ChannelRep::IsoMultiple).unwrap();
        for r in 0..n {
            for c in 0..n {
                p[(r * n + c, col)] = q.get(r, c);
            }
        }
    }
    p
}

fn rank(m: &DMatrix<f64>) -> usize {
    m.clone().svd(false, false).singular_values.iter().filter(|s| **s > 1e-9).count()
}

#[test]
fn intertwiner_space_has_dimension_eight_k_squared() {
    for k in [1, 2] {
        let n = 8 * k;
        let nullity = n * n - rank(&commutator_system(k));
        assert_eq!(nullity, 8 * k * k, "k = {k}");
    }
}

#[test]
fn reynolds_projector_is_an_idempotent_onto_the_commutant() {
    for k in [1, 2] {
        let p = projector_matrix(k);
        assert_eq!(rank(&p), 8 * k * k);
        assert!((&p * &p - &p).amax() < 1e-13);
        assert!((&p - p.transpose()).amax() < 1e-13, "orthogonal projector");
        assert!((commutator_system(k) * &p).amax() < 1e-13);
    }
}

fn marked_image(m: usize, row: usize, col: usize) -> Image {
    let mut img = Image::zeros(m);
    for c in 0..3 {
        img.set(c, row, col, 1.0 + c as f64);
    }
    img
}

fn hot_pixel(img: &Image) -> (usize, usize) {
    let m = img.m;
    let p = (0..m * m).find(|&p| img.data[p] != 0.0).unwrap();
    (p / m, p % m)
}

#[test]
fn quarter_turn_is_anticlockwise_and_s_mirrors() {
    for m in [4, 5] {
        for row in 0..m {
            for col in 0..m {
                let img = marked_image(m, row, col);
                assert_eq!(hot_pixel(&image_action(GroupElement::R, &img)), (m - 1 - col, row));
                assert_eq!(hot_pixel(&image_action(GroupElement::S, &img)), (row, m - 1 - col));
                assert_eq!(hot_pixel(&image_action(GroupElement::R2, &img)), (m - 1 - row, m - 1 - col));
            }
        }
    }
    // top-right corner goes to top-left under an anticlockwise turn
    assert_eq!(hot_pixel(&image_action(GroupElement::R, &marked_image(4, 0, 3))), (0, 0));
}

#[test]
fn token_action_composes_and_fixes_the_class_token() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let geom = GridGeometry::new(3, true).unwrap();
    let x = SteerableFeature::new(Mat::uniform(16, geom.len(), 1.0, &mut rng), ChannelRep::IsoMultiple, geom).unwrap();
    for g in GroupElement::ALL {
        for h in GroupElement::ALL {
            let lhs = act(g, &act(h, &x).unwrap()).unwrap();
            let rhs = act(g.mul(h), &x).unwrap();
            assert!(lhs.data.max_abs_diff(&rhs.data) < 1e-15, "{g} {h}");
        }
        let y = act(g, &x).unwrap();
        let cls = geom.len() - 1;
        let r = rho(g, 2);
        for i in 0..16 {
            let expected: f64 = (0..16).map(|j| r[(i, j)] * x.data.get(j, cls)).sum();
            assert!((y.data.get(i, cls) - expected).abs() < 1e-15);
        }
    }
}
