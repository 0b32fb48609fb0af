use proptest::prelude::*;

use octic::config::RunConfig;
use octic::data::quantize;
use octic::group::{isotypical_to_regular, regular_to_isotypical, GroupElement};
use octic::steerable::{patchify, unpatchify, Image};

fn element() -> impl Strategy<Value = GroupElement> {
    (0usize..8).prop_map(|i| GroupElement::from_index(i).unwrap())
}

proptest! {
    #[test]
    fn fourier_round_trip(x in prop::collection::vec(-1e3f64..1e3, 8..=64)) {
        let x = &x[..x.len() / 8 * 8];
        let back = isotypical_to_regular(&regular_to_isotypical(x));
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn fourier_preserves_norm(x in prop::collection::vec(-10f64..10.0, 8)) {
        let y = regular_to_isotypical(&x);
        let (nx, ny): (f64, f64) = (x.iter().map(|v| v * v).sum(), y.iter().map(|v| v * v).sum());
        prop_assert!((nx - ny).abs() < 1e-11 * (1.0 + nx));
    }

    #[test]
    fn group_axioms(a in element(), b in element(), c in element()) {
        prop_assert_eq!(a.mul(b).mul(c), a.mul(b.mul(c)));
        prop_assert_eq!(a.mul(a.inverse()), GroupElement::E);
        let (ma, mb, mab) = (a.matrix(), b.matrix(), a.mul(b).matrix());
        for i in 0..2 {
            for j in 0..2 {
                prop_assert_eq!(mab[i][j], ma[i][0] * mb[0][j] + ma[i][1] * mb[1][j]);
            }
        }
    }

    #[test]
    fn patchify_round_trip(n in 1usize..4, p in 1usize..5, seed in any::<u64>()) {
        let m = n * p;
        let data: Vec<f64> = (0..3 * m * m).map(|i| ((i as u64).wrapping_mul(seed | 1) % 251) as f64).collect();
        let img = Image::new(m, data).unwrap();
        prop_assert_eq!(unpatchify(&patchify(&img, p).unwrap(), p).unwrap(), img);
    }

    #[test]
    fn quantize_spans_the_byte_range(v in prop::collection::vec(-1e6f64..1e6, 1..64)) {
        let q = quantize(&v);
        prop_assert_eq!(q.len(), v.len());
        let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(l, h), x| (l.min(*x), h.max(*x)));
        if hi > lo {
            prop_assert_eq!(*q.iter().min().unwrap(), 0);
            prop_assert_eq!(*q.iter().max().unwrap(), 255);
        } else {
            prop_assert!(q.iter().all(|b| *b == 128));
        }
    }

    #[test]
    fn config_parser_never_panics(text in "\\PC*") {
        let _ = RunConfig::parse(&text);
    }

    #[test]
    fn config_width_round_trips(w in 1usize..64) {
        let text = format!("model.width = {}\nmodel.heads = 1", 8 * w);
        let cfg = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(cfg.model.width, 8 * w);
        prop_assert_eq!(RunConfig::parse(&cfg.canonical().replace("data.manifest = \n", "").replace("data.eval_manifest = \n", "")).unwrap(), cfg);
    }
}
