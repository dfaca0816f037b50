use ibpg::oracle::{prox_oracle, GridSpec};
use ibpg::problems::prox_inclusion_residual;
use ibpg::{bregman_prox, Error, Kernel, KernelKind, NonsmoothPart};
use nalgebra::{dvector, DVector};
use proptest::prelude::*;

fn subproblem(
    g: &NonsmoothPart,
    h: &Kernel,
    p: &DVector<f64>,
    lambda: f64,
    x: &DVector<f64>,
) -> f64 {
    lambda * g.value(x) + h.value(x).unwrap() - p.dot(x)
}

fn pairings() -> impl Strategy<Value = (NonsmoothPart, KernelKind)> {
    prop_oneof![
        Just((NonsmoothPart::Zero, KernelKind::Quadratic)),
        Just((NonsmoothPart::Zero, KernelKind::QuarticNorm)),
        (0.01f64..3.0).prop_map(|w| (NonsmoothPart::L1 { weight: w }, KernelKind::Quadratic)),
        (0.01f64..3.0).prop_map(|w| (NonsmoothPart::L1 { weight: w }, KernelKind::QuarticNorm)),
        (0.01f64..3.0).prop_map(|w| (NonsmoothPart::L0 { weight: w }, KernelKind::Quadratic)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn agrees_with_grid_search(
        (g, kind) in pairings(),
        p in prop::collection::vec(-4.0f64..4.0, 2).prop_map(DVector::from_vec),
        lambda in 0.05f64..2.0,
    ) {
        let h = Kernel::new(kind, 2).unwrap();
        let x = bregman_prox(&g, &h, &p, lambda).unwrap();
        let sol = prox_oracle(&g, kind, &p, lambda, &GridSpec::for_prox(&p, 41)).unwrap();
        // Near an l0 switching point both candidates are within grid resolution in value.
        let gap = subproblem(&g, &h, &p, lambda, &x) - sol.value;
        prop_assert!(gap <= 1e-12 * (1.0 + sol.value.abs()), "prox value above oracle by {gap}");
        if !matches!(g, NonsmoothPart::L0 { .. }) {
            prop_assert!((&x - &sol.x).norm() <= sol.cell_diameter);
        }
        prop_assert!(prox_inclusion_residual(&g, &h, &p, lambda, &x).unwrap() <= 1e-10);
    }

    #[test]
    fn prox_beats_perturbations(
        (g, kind) in pairings(),
        p in prop::collection::vec(-10.0f64..10.0, 5).prop_map(DVector::from_vec),
        delta in prop::collection::vec(-0.1f64..0.1, 5).prop_map(DVector::from_vec),
        lambda in 0.05f64..2.0,
    ) {
        let h = Kernel::new(kind, 5).unwrap();
        let x = bregman_prox(&g, &h, &p, lambda).unwrap();
        let base = subproblem(&g, &h, &p, lambda, &x);
        let moved = subproblem(&g, &h, &p, lambda, &(&x + &delta));
        prop_assert!(base <= moved + 1e-10 * (1.0 + base.abs()));
    }
}

#[test]
fn l0_with_quartic_kernel_is_rejected() {
    let h = Kernel::quartic(2).unwrap();
    let err = bregman_prox(
        &NonsmoothPart::L0 { weight: 1.0 },
        &h,
        &dvector![1.0, 2.0],
        0.5,
    );
    assert!(matches!(err, Err(Error::Configuration(_))));
}
