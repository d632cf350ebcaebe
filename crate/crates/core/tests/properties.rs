use holoflow::holonomy::Subalgebra;
use holoflow::verify::{algebra_identities, builtin_scenario, holonomy_preservation_experiment, reaction_identities};
use holoflow::wedge::{pair_index, TwoForm};
use proptest::prelude::*;

// In a run whose H is the holonomy algebra, the hatted quantities start at
// round-off and must not grow into anything larger.
#[test]
fn hatted_quantities_never_activate() {
    for name in ["flat-torus", "round-s3", "product-s2xs2", "berger-114", "warped-t3-split", "conformal-t2"] {
        let run = holonomy_preservation_experiment(&builtin_scenario(name).unwrap()).unwrap();
        let size = |r: &holoflow::verify::HolonomyRecord| r.sup_rm_phat + r.sup_a + r.sup_b;
        let start = size(&run.records[0]);
        let worst = run.records.iter().map(size).fold(0.0, f64::max);
        assert!(worst <= 10.0 * (start + 1e-10), "{name}: {worst:e} from {start:e}");
    }
}

#[test]
fn too_small_h_activates() {
    let mut sc = builtin_scenario("warped-t3").unwrap();
    sc.flow.t_end = 0.005;
    let run = holonomy_preservation_experiment(&sc).unwrap();
    assert!(run.records.iter().all(|r| r.sup_rm_phat > 0.1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn algebra_identities_hold_for_any_seed(seed in any::<u64>(), n in 3usize..=5) {
        for r in algebra_identities(n, 3, seed).unwrap() {
            prop_assert!(r.pass, "{} {:e}", r.identity, r.max_residual);
        }
    }

    #[test]
    fn reaction_identities_hold_for_any_seed(seed in any::<u64>()) {
        let h = Subalgebra::from_orthonormal(
            4,
            vec![TwoForm::unit(4, pair_index(4, 0, 1)), TwoForm::unit(4, pair_index(4, 2, 3))],
        )
        .unwrap();
        for r in reaction_identities(&h, 2, seed).unwrap() {
            prop_assert!(r.pass, "{} {:e}", r.identity, r.max_residual);
        }
    }
}
