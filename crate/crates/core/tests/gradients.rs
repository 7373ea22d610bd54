//! Parameter gradients against central differences at h = 1e-3.
//!
//! At this step a perturbed conv weight pushes some pre-activations across
//! zero, so the ReLU gates are frozen at their unperturbed values; the loss
//! is then exactly quadratic in each parameter and the central difference is
//! exact up to rounding.

use firesr::Scale;

mod fd;

fn check(scale: Scale) {
    let mut c = fd::case(scale);
    if let Err(m) = fd::check_all(&mut c, 1e-3, true) {
        panic!(
            "{scale} layer {} param {}: analytic {:e} vs numeric {:e}",
            m.layer, m.index, m.analytic, m.numeric
        );
    }
}

#[test]
fn gated_differences_match_at_2x() {
    check(Scale::X2);
}

#[test]
fn gated_differences_match_at_4x() {
    check(Scale::X4);
}

#[test]
fn gated_differences_match_at_8x() {
    check(Scale::X8);
}
