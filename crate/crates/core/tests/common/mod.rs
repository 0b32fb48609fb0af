//! Shared finite-difference machinery for the gradient and acceptance tests.
#![allow(dead_code)]

use octic::data::synthetic_shapes;
use octic::invariants::InvariantizationKind;
use octic::layers::{
    append_posenc_cls, split_posenc_cls_grad, ClassToken, ParamRef, Parameterized, PositionalEncoding,
};
use octic::model::{build_model, softmax_cross_entropy, Family, Model, ModelConfig};
use octic::steerable::patchify;
use octic::tensor::Mat;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
pub const SAMPLES: usize = 5;
/// Denominator floor of the relative error. At [`STEP`] each output element
/// carries roundoff of about `ulp(|y|)/2h ≈ 1e-10·|y|`, so entries with
/// `|g|` below this are compared absolutely (to `tol·REL_FLOOR`).
pub const REL_FLOOR: f64 = 1e-2;
/// Those entries are also confirmed at a step where roundoff is negligible.
pub const WIDE_STEP: f64 = 1e-4;
pub const WIDE_TOL: f64 = 1e-4;

/// Sampled comparison of one array's analytic gradient against central
/// differences.
#[derive(Clone, Debug, Default)]
pub struct GroupCheck {
    pub name: String,
    pub samples: usize,
    pub len: usize,
    /// Worst `|fd − g| / max(|fd|, |g|)` at [`STEP`].
    pub worst_rel: f64,
    /// Worst `|fd − g| / max(|fd|, |g|, REL_FLOOR)` at [`STEP`].
    pub worst_floored: f64,
    /// Samples with `|g| < REL_FLOOR`, where roundoff dominates at [`STEP`].
    pub below_floor: usize,
    /// Worst plain relative error of those samples at [`WIDE_STEP`].
    pub worst_wide: f64,
    /// Smallest analytic `|g|` among the samples.
    pub min_abs: f64,
}

impl GroupCheck {
    fn record(&mut self, g: f64, mut objective: impl FnMut(f64) -> f64) {
        let central = |h: f64, f: &mut dyn FnMut(f64) -> f64| (f(h) - f(-h)) / (2.0 * h);
        let fd = central(STEP, &mut objective);
        self.samples += 1;
        self.worst_rel = self.worst_rel.max(rel_err(fd, g));
        self.worst_floored = self.worst_floored.max((fd - g).abs() / fd.abs().max(g.abs()).max(REL_FLOOR));
        self.min_abs = self.min_abs.min(g.abs());
        if g.abs() < REL_FLOOR {
            self.below_floor += 1;
            let wide = central(WIDE_STEP, &mut objective);
            self.worst_wide = self.worst_wide.max(rel_err(wide, g));
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.samples >= SAMPLES.min(self.len) && self.worst_floored < tol && self.worst_wide < WIDE_TOL
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let d = a.abs().max(b.abs());
    if d == 0.0 {
        0.0
    } else {
        (a - b).abs() / d
    }
}

/// Stand-in for operations without parameters.
#[derive(Clone, Debug, Default)]
pub struct NoParams;

impl Parameterized for NoParams {
    fn collect_params<'a>(&'a mut self, _: &str, _: &mut Vec<ParamRef<'a>>) {}
}

/// Positional encoding and class token appended to the patch tokens.
#[derive(Clone, Debug)]
pub struct Tokens {
    pub posenc: PositionalEncoding,
    pub cls: ClassToken,
}

impl Parameterized for Tokens {
    fn collect_params<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a>>) {
        self.posenc.collect_params(&octic::layers::join(prefix, "posenc"), out);
        self.cls.collect_params(&octic::layers::join(prefix, "cls"), out);
    }
}

fn sample_indices(len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    sample(rng, len, SAMPLES.min(len)).into_vec()
}

/// Check the VJP of `y = fwd(p, x)` against central differences of
/// `⟨ȳ, y⟩` for a random cotangent ȳ. `bwd` accumulates parameter
/// gradients and returns the input gradient when the input is
/// differentiable.
pub fn check_vjp<P: Parameterized + Clone>(
    label: &str,
    layer: &P,
    x: &Mat,
    fwd: impl Fn(&P, &Mat) -> Mat,
    bwd: impl Fn(&P, &Mat, &Mat, &mut P) -> Option<Mat>,
    seed: u64,
) -> Vec<GroupCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = fwd(layer, x);
    let ybar = Mat::from_fn(y.rows(), y.cols(), |_, _| rng.gen_range(-1.0..1.0));
    let objective = |p: &P, x: &Mat| fwd(p, x).dot(&ybar);

    let mut grad = layer.clone();
    grad.zero();
    let dx = bwd(layer, x, &ybar, &mut grad);
    let grads: Vec<(String, Vec<f64>)> = grad
        .params_mut(label)
        .into_iter()
        .map(|p| (p.name, p.value.data().to_vec()))
        .collect();

    let mut out = Vec::new();
    let mut probe = layer.clone();
    for (gi, (name, g)) in grads.iter().enumerate() {
        let mut check = GroupCheck {
            name: name.clone(),
            len: g.len(),
            min_abs: f64::INFINITY,
            ..GroupCheck::default()
        };
        for i in sample_indices(g.len(), &mut rng) {
            let orig = probe.params_mut("")[gi].value.data()[i];
            check.record(g[i], |h| {
                probe.params_mut("")[gi].value.data_mut()[i] = orig + h;
                let v = objective(&probe, x);
                probe.params_mut("")[gi].value.data_mut()[i] = orig;
                v
            });
        }
        out.push(check);
    }
    if let Some(dx) = dx {
        let mut check = GroupCheck {
            name: format!("{label}.input"),
            len: x.data().len(),
            min_abs: f64::INFINITY,
            ..GroupCheck::default()
        };
        let mut xp = x.clone();
        for i in sample_indices(x.data().len(), &mut rng) {
            let orig = x.data()[i];
            check.record(dx.data()[i], |h| {
                xp.data_mut()[i] = orig + h;
                let v = objective(layer, &xp);
                xp.data_mut()[i] = orig;
                v
            });
        }
        out.push(check);
    }
    out
}

/// The small octic model the gradient criterion is stated for.
pub fn toy_config(kind: InvariantizationKind) -> ModelConfig {
    ModelConfig {
        family: Family::D8,
        depth: 2,
        octic_depth: 2,
        width: 16,
        heads: 1,
        patch: 4,
        image: 16,
        invariant: kind,
        ..ModelConfig::default()
    }
}

/// A toy model moved off its initialisation (non-unit gains, non-zero
/// biases) so that no parameter sits at a special point.
pub fn perturbed_model(cfg: &ModelConfig, seed: u64) -> Model {
    let mut model = build_model(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.params_mut("") {
        for v in p.value.data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    model.reproject().unwrap();
    model
}

/// Every VJP of the model, layer by layer with the model's own parameters.
/// Each layer is evaluated at a uniform random input of the shape a real
/// sample produces there: propagated activations leave some irrep channels
/// nearly empty, which makes their gradients too small to difference.
pub fn model_vjp_checks(model: &Model, seed: u64) -> Vec<GroupCheck> {
    let mut irng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut prep = |m: &Mat| Mat::uniform(m.rows(), m.cols(), 1.0, &mut irng);
    let cfg = &model.cfg;
    let (img, label) = noise_sample(cfg, seed);
    let mut out = Vec::new();
    let mut s = seed;
    let mut next = || {
        s += 1;
        s
    };

    let patches = patchify(&img, cfg.patch).unwrap();
    out.extend(check_vjp(
        "embed",
        &model.embed,
        &prep(&patches),
        |e, x| e.forward(x).unwrap(),
        |e, x, dy, g| {
            e.backward(x, dy, g);
            None
        },
        next(),
    ));

    let e = model.embed.forward(&patches).unwrap();
    let tokens = Tokens {
        posenc: model.posenc.clone(),
        cls: model.cls.clone(),
    };
    out.extend(check_vjp(
        "",
        &tokens,
        &prep(&e),
        |t, x| append_posenc_cls(x, &t.posenc.value, &t.cls.value).unwrap(),
        |_, _, dy, g| {
            let (dimg, dcls) = split_posenc_cls_grad(dy);
            g.posenc.value.add_assign(&dimg);
            g.cls.value.add_assign(&dcls);
            Some(dimg)
        },
        next(),
    ));

    let mut x = append_posenc_cls(&e, &model.posenc.value, &model.cls.value).unwrap();
    for (i, b) in model.blocks.iter().enumerate() {
        let p = format!("blocks.{i}");
        out.extend(check_vjp(
            &format!("{p}.norm1"),
            &b.norm1,
            &prep(&x),
            |n, x| n.forward(x).unwrap().0,
            |n, x, dy, g| Some(n.backward(&n.forward(x).unwrap().1, dy, g).unwrap()),
            next(),
        ));
        let ln1 = b.norm1.forward(&x).unwrap().0;
        out.extend(check_vjp(
            &format!("{p}.attn"),
            &b.attn,
            &prep(&ln1),
            |a, x| a.forward(x).unwrap().0,
            |a, x, dy, g| Some(a.backward(&a.forward(x).unwrap().1, dy, g).unwrap()),
            next(),
        ));
        let mut h = x.clone();
        h.add_assign(&b.attn.forward(&ln1).unwrap().0);
        out.extend(check_vjp(
            &format!("{p}.norm2"),
            &b.norm2,
            &prep(&h),
            |n, x| n.forward(x).unwrap().0,
            |n, x, dy, g| Some(n.backward(&n.forward(x).unwrap().1, dy, g).unwrap()),
            next(),
        ));
        let ln2 = b.norm2.forward(&h).unwrap().0;
        out.extend(check_vjp(
            &format!("{p}.fc1"),
            &b.fc1,
            &prep(&ln2),
            |l, x| l.forward(x).unwrap(),
            |l, x, dy, g| Some(l.backward(x, dy, g).unwrap()),
            next(),
        ));
        let pre = b.fc1.forward(&ln2).unwrap();
        let act = b.act;
        out.extend(check_vjp(
            &format!("{p}.act"),
            &NoParams,
            &prep(&pre),
            |_, x| act.forward(x).unwrap(),
            |_, x, dy, _| Some(act.backward(x, dy).unwrap()),
            next(),
        ));
        let post = act.forward(&pre).unwrap();
        out.extend(check_vjp(
            &format!("{p}.fc2"),
            &b.fc2,
            &prep(&post),
            |l, x| l.forward(x).unwrap(),
            |l, x, dy, g| Some(l.backward(x, dy, g).unwrap()),
            next(),
        ));
        out.extend(check_vjp(
            &p,
            b,
            &prep(&x),
            |b, x| b.forward(x).unwrap().0,
            |b, x, dy, g| Some(b.backward(&b.forward(x).unwrap().1, dy, g).unwrap()),
            next(),
        ));
        x = b.forward(&x).unwrap().0;
    }

    out.extend(check_vjp(
        "final_norm",
        &model.final_norm,
        &prep(&x),
        |n, x| n.forward(x).unwrap().0,
        |n, x, dy, g| Some(n.backward(&n.forward(x).unwrap().1, dy, g).unwrap()),
        next(),
    ));
    x = model.final_norm.forward(&x).unwrap().0;

    let head = model.head.as_ref().expect("octic toy model has a head");
    out.extend(check_vjp(
        "head",
        head,
        &prep(&x),
        |h, x| h.forward(x).unwrap().0,
        |h, x, dy, g| Some(h.backward(&h.forward(x).unwrap().1, dy, g).unwrap()),
        next(),
    ));
    x = head.forward(&x).unwrap().0;

    let feature = x.cols_range(x.cols() - 1, 1);
    out.extend(check_vjp(
        "classifier",
        &model.classifier,
        &prep(&feature),
        |l, x| l.forward(x).unwrap(),
        |l, x, dy, g| Some(l.backward(x, dy, g).unwrap()),
        next(),
    ));

    let logits = model.classifier.forward(&feature).unwrap();
    out.extend(check_vjp(
        "cross_entropy",
        &NoParams,
        &prep(&logits),
        |_, z| Mat::from_vec(1, 1, vec![softmax_cross_entropy(z, label).0]),
        |_, z, dy, _| {
            let mut d = softmax_cross_entropy(z, label).1;
            d.scale(dy.data()[0]);
            Some(d)
        },
        next(),
    ));
    out
}

/// Directional check of the composed loss gradient: for every parameter
/// array, the derivative of the loss along `g/‖g‖` against `‖g‖`.
/// Returns `(name, ‖g‖, relative error, relative error with the
/// denominator floored at `floor`)`.
pub fn composed_gradient_check(
    model: &Model,
    batch: &[octic::data::Sample],
    step: f64,
    floor: f64,
) -> Vec<(String, f64, f64, f64)> {
    let loss = |m: &Model| m.loss_and_grad(batch).unwrap().0;
    let (_, mut grad, _) = model.loss_and_grad(batch).unwrap();
    let grads: Vec<(String, Vec<f64>)> = grad
        .params_mut("")
        .into_iter()
        .map(|p| (p.name, p.value.data().to_vec()))
        .collect();
    let mut probe = model.clone();
    let mut out = Vec::new();
    for (gi, (name, g)) in grads.iter().enumerate() {
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            out.push((name.clone(), 0.0, 0.0, 0.0));
            continue;
        }
        let orig = probe.params_mut("")[gi].value.data().to_vec();
        let shift = |p: &mut Model, s: f64| {
            for ((v, o), gv) in p.params_mut("")[gi].value.data_mut().iter_mut().zip(&orig).zip(g) {
                *v = o + s * gv / norm;
            }
        };
        shift(&mut probe, step);
        let up = loss(&probe);
        shift(&mut probe, -step);
        let down = loss(&probe);
        shift(&mut probe, 0.0);
        let fd = (up - down) / (2.0 * step);
        let floored = (fd - norm).abs() / fd.abs().max(norm).max(floor);
        out.push((name.clone(), norm, rel_err(fd, norm), floored));
    }
    out
}

/// A uniform-noise image: unlike the smooth shapes it excites every irrep,
/// so no gradient is accidentally tiny.
pub fn noise_sample(cfg: &ModelConfig, seed: u64) -> octic::data::Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = octic::steerable::IMAGE_CHANNELS * cfg.image * cfg.image;
    let img = octic::steerable::Image::new(cfg.image, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    (img, rng.gen_range(0..cfg.classes))
}

pub fn toy_batch(cfg: &ModelConfig, n: usize, seed: u64) -> Vec<octic::data::Sample> {
    synthetic_shapes(n, cfg.image, seed)
}
