use lorentzkit_core::causal::{CutOptions, FamilyConfig, ObserverFamily};
use lorentzkit_core::reconstruction::{calibrate_kappa, CalibrationOptions, KappaEstimate};
use lorentzkit_core::Metric;

// Strong narrow lens just off the observer, so that light rays from the
// observer refocus and can still signal it before s₊₂.
fn lens_kappa(directions: usize) -> KappaEstimate {
    let m = Metric::lens(3.0, 0.1);
    let fam = ObserverFamily::new(
        &m,
        FamilyConfig {
            z0: [0.0, -0.1, 0.0, 0.0],
            radius: 0.02,
            ..FamilyConfig::default()
        },
    )
    .unwrap();
    let opts = CalibrationOptions {
        s_minus: -0.9,
        s_plus: -0.5,
        s_plus2: 1.0,
        s_samples: 2,
        directions,
        cut: CutOptions {
            s_max: 1.5,
            competing: false,
            ..CutOptions::default()
        },
        ..CalibrationOptions::default()
    };
    calibrate_kappa(&m, &fam, 0.0, &opts).unwrap()
}

#[test]
fn lens_kappa_is_stable_under_refinement() {
    let coarse = lens_kappa(8);
    let fine = lens_kappa(16);
    eprintln!("coarse {coarse:?}\nfine   {fine:?}");
    for k in [&coarse, &fine] {
        assert!(k.min_gap.is_some(), "{k:?}");
        assert!(k.kappa2 > 0.0 && k.kappa2 < 0.4);
        assert!(k.kappa1 > 0.0 && k.kappa1 <= k.min_rho / 5.0);
        assert!(2 * k.unresolved < k.samples, "{k:?}");
    }
    assert!((fine.kappa2 / coarse.kappa2 - 1.0).abs() <= 0.2);
}

#[test]
fn unfocused_lens_keeps_the_window_sentinel() {
    let m = Metric::lens(0.6, 0.5);
    let fam = ObserverFamily::new(&m, FamilyConfig::default()).unwrap();
    let opts = CalibrationOptions {
        directions: 6,
        s_samples: 2,
        cut: CutOptions {
            competing: false,
            ..CalibrationOptions::default().cut
        },
        ..CalibrationOptions::default()
    };
    let k = calibrate_kappa(&m, &fam, 0.0, &opts).unwrap();
    assert!(k.min_gap.is_none());
    assert_eq!(k.kappa2, 0.6);
    assert!(k.kappa1 <= k.min_rho / 5.0);
}
