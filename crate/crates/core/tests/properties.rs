use proptest::prelude::*;

use lorentzkit_core::adaptive::{
    condition_a_matrix, identity_permutation, solve_adaptive_sources, source_differential, PointFrame,
    SolverOptions, SourceInput,
};
use lorentzkit_core::causal::{
    earliest_light_observation_set, f_plus, geodesic_flow, null_vector, orthonormal_frame, time_separation,
    FamilyConfig, FlowOptions, Observer, ObserverFamily, ShootOptions, TauOptions,
};
use lorentzkit_core::geometry::{divergence, einstein, metric_inverse, reduced_einstein, ricci, EinsteinField};
use lorentzkit_core::interaction::{build_covectors, pairing};
use lorentzkit_core::linalg::{mat_vec, numeric_rank};
use lorentzkit_core::reconstruction::{cut_observation_s, SOptions};
use lorentzkit_core::symbol::{
    conservation_residual, constraint_matrix, harmonicity_residual, transport_symbol, Constraint, Decoupled,
    NullCovectorFrame, PolarizationVector, SourceForm,
};
use lorentzkit_core::{Metric, MetricProvider, ScalarFieldFrame};

fn point(r: f64) -> impl Strategy<Value = [f64; 4]> {
    [-r..r, -r..r, -r..r, -r..r]
}

fn direction() -> impl Strategy<Value = [f64; 3]> {
    [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64]
        .prop_filter("non-degenerate", |v| v.iter().map(|c| c * c).sum::<f64>() > 0.05)
        .prop_map(|v| {
            let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            v.map(|c| c / n)
        })
}

fn metric() -> impl Strategy<Value = Metric> {
    (0..Metric::bundled().len()).prop_map(|i| Metric::bundled()[i].clone())
}

fn symmetric() -> impl Strategy<Value = [[f64; 4]; 4]> {
    prop::array::uniform10(-1.0..1.0f64).prop_map(|c| {
        let mut m = [[0.0; 4]; 4];
        let mut k = 0;
        for i in 0..4 {
            for j in i..4 {
                m[i][j] = c[k];
                m[j][i] = c[k];
                k += 1;
            }
        }
        m
    })
}

fn null_frame(m: &Metric, x: [f64; 4], n: [f64; 3]) -> NullCovectorFrame {
    let v = null_vector(&orthonormal_frame(m, x).unwrap(), n);
    NullCovectorFrame::from_vector(m, x, v).unwrap()
}

fn perturbed_frame(shift: &[f64]) -> PointFrame {
    let mut f = PointFrame::at(&Metric::Minkowski, &ScalarFieldFrame::canonical(5, 1.0), [0.0; 4]).unwrap();
    let mut k = 0;
    for p in f.phi.iter_mut() {
        *p += shift[k];
        k += 1;
    }
    for d in f.dphi.iter_mut() {
        for c in d.iter_mut() {
            *c += shift[k];
            k += 1;
        }
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn einstein_is_divergence_free(m in metric(), x in point(0.6)) {
        let d = divergence(&m, &EinsteinField(&m), x).unwrap();
        prop_assert!(d.iter().all(|v| v.abs() <= 1e-7), "{d:?}");
    }

    #[test]
    fn reduced_einstein_of_self_is_einstein(m in metric(), x in point(0.6)) {
        let e = einstein(&m, x).unwrap();
        prop_assert!(reduced_einstein(&m, &m, x).unwrap().max_abs_diff(&e) <= 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(e.get(i, j), e.get(j, i));
            }
        }
    }

    #[test]
    fn raise_then_lower_is_identity(m in metric(), x in point(0.6)) {
        let g = m.eval(x);
        let t = ricci(&m, x).unwrap();
        let back = t.raise(&metric_inverse(&g, x).unwrap()).lower(&g);
        prop_assert!(back.max_abs_diff(&t) <= 1e-13 * (1.0 + t.max_abs()));
    }

    #[test]
    fn null_norm_is_conserved(m in metric(), x in point(0.4), n in direction()) {
        let v = null_vector(&orthonormal_frame(&m, x).unwrap(), n);
        let path = geodesic_flow(&m, x, v, 1.0, &FlowOptions::default()).unwrap();
        for st in path.states() {
            prop_assert!(st.norm(&m).abs() <= 1e-10, "{}", st.norm(&m));
        }
    }

    #[test]
    fn reverse_triangle_inequality(
        x in point(0.3),
        a in (0.0..0.4f64, direction(), 0.0..1.0f64),
        b in (0.0..0.4f64, direction(), 0.0..1.0f64),
    ) {
        let step = |p: [f64; 4], (t, n, f): (f64, [f64; 3], f64)| {
            [p[0] + t, p[1] + f * t * n[0], p[2] + f * t * n[1], p[3] + f * t * n[2]]
        };
        let y = step(x, a);
        let z = step(y, b);
        let m = Metric::Minkowski;
        let o = TauOptions::default();
        let lhs = time_separation(&m, x, z, &o);
        let rhs = time_separation(&m, x, y, &o) + time_separation(&m, y, z, &o);
        prop_assert!(lhs >= rhs - 1e-6, "{lhs} < {rhs}");
    }

    #[test]
    fn first_observation_is_monotone(
        flat in any::<bool>(),
        x in point(0.2),
        t in 0.0..0.2f64,
        n in direction(),
        f in 0.0..1.0f64,
    ) {
        let m = if flat { Metric::Minkowski } else { Metric::product(0.1, 0.8) };
        let mu = Observer::new(&m, [0.0; 4], [1.0, 0.0, 0.0, 0.0]).unwrap();
        // Coordinate speed 1/1.2 stays inside the cone of both metrics.
        let r = f * t / 1.2;
        let later = [x[0] + t, x[1] + r * n[0], x[2] + r * n[1], x[3] + r * n[2]];
        let o = ShootOptions::default();
        let a = f_plus(&m, &mu, x, &o).unwrap();
        let b = f_plus(&m, &mu, later, &o).unwrap();
        prop_assert!(a <= b + 1e-6, "{a} > {b}");
    }

    #[test]
    fn constraint_maps_have_rank_four(m in metric(), x in point(0.5), n in direction()) {
        let f = null_frame(&m, x, n);
        for which in [Constraint::Harmonicity, Constraint::Conservation] {
            let a = constraint_matrix(&f, which, 0);
            let sv = a.clone().svd(false, false).singular_values;
            let scale = sv.max();
            prop_assert_eq!(sv.iter().filter(|s| **s > 1e-6 * scale).count(), 4);
            prop_assert_eq!(numeric_rank(&a, 1e-10), 4);
        }
    }

    #[test]
    fn residuals_are_linear(
        x in point(0.5),
        n in direction(),
        u in symmetric(),
        v in symmetric(),
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
    ) {
        let m = Metric::perturbed(Metric::Minkowski, 0.05, 7);
        let f = null_frame(&m, x, n);
        let mut w = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                w[i][j] = a * u[i][j] + b * v[i][j];
            }
        }
        let (pu, pv, pw) = (PolarizationVector::metric(u, 0), PolarizationVector::metric(v, 0), PolarizationVector::metric(w, 0));
        for res in [harmonicity_residual, conservation_residual] {
            let (ru, rv, rw) = (res(&f, &pu), res(&f, &pv), res(&f, &pw));
            for k in 0..4 {
                prop_assert!((rw[k] - a * ru[k] - b * rv[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn transport_composes(x in point(0.3), n in direction(), s1 in 0.1..0.5f64, s2 in 0.1..0.5f64) {
        let m = Metric::product(0.1, 0.8);
        let from = null_frame(&m, x, n);
        let flow = FlowOptions::default();
        let at = |s: f64| {
            let path = geodesic_flow(&m, x, from.sharp(), s, &flow).unwrap();
            let (p, v) = path.at(s);
            NullCovectorFrame::new(&m, p, mat_vec(&m.eval(p), &v)).unwrap()
        };
        let (mid, to) = (at(s1), at(s1 + s2));
        let r = |a: &NullCovectorFrame, b: &NullCovectorFrame| {
            transport_symbol(&m, &Decoupled, a, b, 2, SourceForm::Wave).unwrap().r
        };
        let composed = r(&mid, &to) * r(&from, &mid);
        prop_assert!((composed - r(&from, &to)).amax() <= 1e-8);
    }

    #[test]
    fn fixed_point_contracts(shift in prop::collection::vec(-0.2..0.2f64, 25), input in prop::collection::vec(-1.0..1.0f64, 10)) {
        let f = perturbed_frame(&shift);
        let sigma = identity_permutation(5);
        prop_assume!(condition_a_matrix(&f, &sigma).holds());
        let y = nalgebra::Matrix5::from_fn(|i, j| condition_a_matrix(&f, &sigma).b[i][j]).try_inverse().unwrap();
        let radius = 0.1 / y.singular_values().max();
        let mut q = SourceInput { q: input[..6].to_vec(), r: [input[6], input[7], input[8], input[9]] };
        let scale = 0.5 * radius / q.norm().max(1e-300);
        q.q.iter_mut().for_each(|c| *c *= scale);
        q.r.iter_mut().for_each(|c| *c *= scale);
        let sol = solve_adaptive_sources(&f, &q, &sigma, &SolverOptions::default()).unwrap();
        for w in sol.steps.windows(2).skip(1) {
            if w[0] > 1e-15 {
                prop_assert!(w[1] <= 0.5 * w[0], "{:?}", sol.steps);
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_sources(shift in prop::collection::vec(-0.2..0.2f64, 25)) {
        let f = perturbed_frame(&shift);
        let sigma = identity_permutation(5);
        prop_assume!(condition_a_matrix(&f, &sigma).holds());
        let sol = solve_adaptive_sources(&f, &SourceInput::zero(6), &sigma, &SolverOptions::default()).unwrap();
        prop_assert!(sol.s.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn differential_rank_tracks_condition_a(shift in prop::collection::vec(-0.2..0.2f64, 25), collapse in 0..6usize) {
        let mut f = perturbed_frame(&shift);
        if collapse < 5 {
            // Make field `collapse` a copy of another one.
            let other = (collapse + 1) % 5;
            f.phi[collapse] = f.phi[other];
            f.dphi[collapse] = f.dphi[other];
        }
        let sigma = identity_permutation(5);
        let ca = condition_a_matrix(&f, &sigma);
        match source_differential(&f, &sigma) {
            Ok(d) => {
                prop_assert!(ca.holds());
                prop_assert_eq!(d.rank, 5);
            }
            Err(_) => prop_assert!(!ca.holds()),
        }
        prop_assert_eq!(ca.holds(), collapse == 5);
    }

    #[test]
    fn covectors_are_null(rho in [0.01..0.45f64, 0.01..0.45f64, 0.01..0.45f64, 0.01..0.45f64]) {
        let s = build_covectors(rho).unwrap();
        for j in 0..5 {
            prop_assert!(pairing(&s.b[j], &s.b[j]).abs() <= 1e-14);
        }
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    prop_assert!((s.omega(i, j) - pairing(&s.b[i], &s.b[j])).abs() <= 1e-14);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn first_observation_of_entry_grows_with_window(
        t in -0.7..-0.3f64,
        dir in direction(),
        rad in 0.15..0.35f64,
        n in direction(),
        s1 in -0.3..0.2f64,
        ds in 0.01..0.1f64,
    ) {
        let m = Metric::Minkowski;
        let fam = ObserverFamily::new(&m, FamilyConfig::default()).unwrap();
        let y = [t, rad * dir[0], rad * dir[1], rad * dir[2]];
        prop_assume!(t - rad < s1);
        let zeta = [1.0, n[0], n[1], n[2]];
        let o = SOptions::default();
        let (Ok(a), Ok(b)) = (
            cut_observation_s(&m, y, zeta, s1, &fam, &o),
            cut_observation_s(&m, y, zeta, s1 + ds, &fam, &o),
        ) else {
            return Ok(());
        };
        prop_assert!(a.value <= b.value + 1e-12, "{a:?} {b:?}");
    }
}

#[test]
fn observation_records_are_injective() {
    use rand::{Rng, SeedableRng};
    let m = Metric::Minkowski;
    let fam = ObserverFamily::new(&m, FamilyConfig::default()).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
    let mut recs = Vec::new();
    while recs.len() < 50 {
        let p: [f64; 4] = [rng.gen_range(-0.4..0.4), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
        if p[0].abs() + (p[1] * p[1] + p[2] * p[2] + p[3] * p[3]).sqrt() < 0.5 {
            recs.push(earliest_light_observation_set(&m, p, &fam, &ShootOptions::default()));
        }
    }
    for (i, a) in recs.iter().enumerate() {
        for b in &recs[i + 1..] {
            assert!(a.sup_diff(b) > 1e-6, "{:?} {:?}", a.q, b.q);
        }
    }
}
