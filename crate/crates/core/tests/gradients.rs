//! Finite-difference checks of every backward pass.

mod common;

use common::*;
use octic::invariants::InvariantizationKind;

#[test]
fn every_vjp_matches_central_differences() {
    for (n, kind) in InvariantizationKind::ALL.into_iter().enumerate() {
        let model = perturbed_model(&toy_config(kind), 5 + n as u64);
        let checks = model_vjp_checks(&model, 40 + n as u64);
        for c in &checks {
            println!(
                "{kind:10} {:36} {}/{} rel {:.1e} floored {:.1e} below {} wide {:.1e} min|g| {:.1e}",
                c.name, c.samples, c.len, c.worst_rel, c.worst_floored, c.below_floor, c.worst_wide, c.min_abs
            );
        }
        for c in &checks {
            assert!(c.passes(1e-6), "{kind} {c:?}");
        }
    }
}

#[test]
fn composed_loss_gradient_matches_directional_differences() {
    let cfg = toy_config(InvariantizationKind::PowerSpectrum);
    let model = perturbed_model(&cfg, 11);
    let batch = toy_batch(&cfg, 4, 12);
    // Some attention arrays have ‖g‖ near 1e-8 here; below 1e-3 the
    // comparison is absolute (1e-8).
    for (name, norm, rel, floored) in composed_gradient_check(&model, &batch, 1e-5, 1e-3) {
        println!("{name:40} |g| {norm:.2e} rel {rel:.2e} floored {floored:.2e}");
        assert!(floored < 1e-5, "{name}: |g| {norm:.3e}, rel {rel:.3e}");
    }
}

