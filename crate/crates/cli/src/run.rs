use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;

use lorentzkit_core::adaptive::{
    condition_a_matrix, identity_permutation, solve_adaptive_sources, source_differential, AdaptiveError, PointFrame,
    SolverOptions, SourceInput,
};
use lorentzkit_core::causal::{
    earliest_light_observation_set, f_minus_raw, f_plus_raw, first_conjugate, flow_to, null_vector, orthonormal_frame,
    Curve, CutOptions, FlowOptions, ObserverFamily, ShootOptions,
};
use lorentzkit_core::geometry::{
    christoffel, divergence, einstein, harmonicity_functions, metric_inverse, reduced_einstein,
    EinsteinField,
};
use lorentzkit_core::interaction::{
    build_covectors, catalog, chosen_polarizations, compare_exponents, dual_basis, exponents, fitted_slope,
    harmonicity_basis, integral_leading, kappa_determinant, oscillatory_integral_oracle, CatalogEntry, Dominance,
    Hierarchy, OracleOptions,
};
use lorentzkit_core::reconstruction::{
    conformal_consistency, ground_truth, reconstruct_diamond, DiamondOptions, Matching, Scenario,
};
use lorentzkit_core::{Metric, MetricProvider, ScalarFieldFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, ScenarioConfig};
use crate::manifest::{Assertion, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    GeometryCheck,
    Causal,
    Interaction,
    Adaptive,
    Reconstruct,
    All,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::GeometryCheck => "geometry-check",
            Subcommand::Causal => "causal",
            Subcommand::Interaction => "interaction",
            Subcommand::Adaptive => "adaptive",
            Subcommand::Reconstruct => "reconstruct",
            Subcommand::All => "all",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Subcommand::GeometryCheck => 0x67,
            Subcommand::Causal => 0x63,
            Subcommand::Interaction => 0x69,
            Subcommand::Adaptive => 0x61,
            Subcommand::Reconstruct => 0x72,
            Subcommand::All => 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{stage}: {reason}")]
    Compute { stage: &'static str, reason: String },
}

fn compute<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> RunError {
    move |e| RunError::Compute {
        stage,
        reason: e.to_string(),
    }
}

#[derive(Default)]
struct Output {
    files: Vec<(String, String)>,
    assertions: Vec<Assertion>,
    values: BTreeMap<String, f64>,
}

impl Output {
    fn value(&mut self, key: &str, v: f64) {
        if v.is_finite() {
            self.values.insert(key.to_string(), v);
        }
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) {
        let mut s = serde_json::to_string_pretty(v).expect("serializable output");
        s.push('\n');
        self.files.push((name.to_string(), s));
    }

    fn merge(&mut self, other: Output) {
        self.files.extend(other.files);
        self.assertions.extend(other.assertions);
        self.values.extend(other.values);
    }
}

/// Runs a subcommand and writes its files and `manifest.json` to the
/// configured output directory.
pub fn execute(cfg: &ScenarioConfig, sub: Subcommand) -> Result<Manifest, RunError> {
    let metric = cfg.metric()?;
    let out = match sub {
        Subcommand::All => {
            let mut all = Output::default();
            for s in [
                Subcommand::GeometryCheck,
                Subcommand::Causal,
                Subcommand::Interaction,
                Subcommand::Adaptive,
                Subcommand::Reconstruct,
            ] {
                all.merge(single(cfg, &metric, s)?);
            }
            all
        }
        s => single(cfg, &metric, s)?,
    };
    let dir = &cfg.output;
    let io = |path: &std::path::Path| {
        let path = path.display().to_string();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, body) in &out.files {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io(&p))?;
    }
    let manifest = Manifest {
        subcommand: sub.name().to_string(),
        metric: metric.to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        files: out.files.iter().map(|(n, _)| n.clone()).collect(),
        assertions: out.assertions,
        values: out.values,
    };
    let p = dir.join("manifest.json");
    fs::write(&p, manifest.to_json()).map_err(io(&p))?;
    Ok(manifest)
}

fn single(cfg: &ScenarioConfig, m: &Metric, sub: Subcommand) -> Result<Output, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (sub.salt() << 56));
    match sub {
        Subcommand::GeometryCheck => geometry_check(cfg, m, &mut rng),
        Subcommand::Causal => causal(cfg, m, &mut rng),
        Subcommand::Interaction => interaction(cfg),
        Subcommand::Adaptive => adaptive(cfg, &mut rng),
        Subcommand::Reconstruct => reconstruct(cfg, m, &mut rng),
        Subcommand::All => unreachable!("expanded by execute"),
    }
}

/// Uniform point of `|t| + |x| < radius`.
fn diamond_point(r: &mut ChaCha8Rng, radius: f64) -> [f64; 4] {
    loop {
        let p: [f64; 4] = std::array::from_fn(|_| r.gen_range(-radius..radius));
        if p[0].abs() + (p[1] * p[1] + p[2] * p[2] + p[3] * p[3]).sqrt() < radius {
            return p;
        }
    }
}

fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

fn csv_row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let row: Vec<String> = cells.into_iter().collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

/// Gauge correction `-½(g_pn ∇_q F^n + g_qn ∇_p F^n)` with its trace removed,
/// from central differences of the harmonicity functions.
fn fd_correction(g: &Metric, ghat: &Metric, x: [f64; 4], h: f64) -> Result<[[f64; 4]; 4], RunError> {
    let f = |q: usize, t: f64| {
        let mut y = x;
        y[q] += t;
        harmonicity_functions(g, ghat, y).map_err(compute("harmonicity"))
    };
    let hf = harmonicity_functions(g, ghat, x).map_err(compute("harmonicity"))?;
    let gam = christoffel(ghat, x).map_err(compute("christoffel"))?;
    let mut nab = [[0.0; 4]; 4];
    for (q, row) in nab.iter_mut().enumerate() {
        let (p, n) = (f(q, h)?, f(q, -h)?);
        for k in 0..4 {
            row[k] = (p[k] - n[k]) / (2.0 * h) + (0..4).map(|j| gam.get(k, q, j) * hf[j]).sum::<f64>();
        }
    }
    let gm = g.eval(x);
    let mut c = [[0.0; 4]; 4];
    for p in 0..4 {
        for q in 0..4 {
            c[p][q] = -0.5 * (0..4).map(|n| gm[p][n] * nab[q][n] + gm[q][n] * nab[p][n]).sum::<f64>();
        }
    }
    let ginv = metric_inverse(&gm, x).map_err(compute("metric inverse"))?;
    let tr: f64 = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| ginv[i][j] * c[i][j]).sum();
    let mut out = [[0.0; 4]; 4];
    for p in 0..4 {
        for q in 0..4 {
            out[p][q] = c[p][q] - 0.5 * tr * gm[p][q];
        }
    }
    Ok(out)
}

fn geometry_check(cfg: &ScenarioConfig, m: &Metric, rng: &mut ChaCha8Rng) -> Result<Output, RunError> {
    let c = &cfg.geometry;
    let ghat = Metric::Minkowski;
    let mut csv = String::new();
    csv_row(&mut csv, ["point", "x0", "x1", "x2", "x3", "bianchi", "self_gauge", "correction_defect"].map(String::from));
    let (mut bianchi, mut self_gauge, mut defect) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..c.points {
        let x = diamond_point(rng, c.radius);
        let d = divergence(m, &EinsteinField(m), x).map_err(compute("divergence"))?;
        let b = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let e = einstein(m, x).map_err(compute("einstein"))?;
        let s = reduced_einstein(m, m, x).map_err(compute("reduced einstein"))?.max_abs_diff(&e);
        let red = reduced_einstein(m, &ghat, x).map_err(compute("reduced einstein"))?;
        let oracle = fd_correction(m, &ghat, x, c.fd_step)?;
        let mut df = 0.0f64;
        for p in 0..4 {
            for q in 0..4 {
                df = df.max((red.get(p, q) - e.get(p, q) - oracle[p][q]).abs());
            }
        }
        bianchi = bianchi.max(b);
        self_gauge = self_gauge.max(s);
        defect = defect.max(df);
        csv_row(
            &mut csv,
            [i.to_string()].into_iter().chain(x.iter().chain([b, s, df].iter()).map(|v| v.to_string())),
        );
    }
    let mut out = Output::default();
    out.files.push(("geometry.csv".into(), csv));
    out.value("geometry.bianchi_max", bianchi);
    out.value("geometry.self_gauge_max", self_gauge);
    out.value("geometry.correction_defect_max", defect);
    out.value("geometry.fd_step", c.fd_step);
    out.assertions.push(Assertion::at_most("geometry.bianchi", bianchi, c.bianchi_tol));
    out.assertions.push(Assertion::at_most("geometry.self_gauge", self_gauge, c.gauge_tol));
    out.assertions.push(Assertion::at_most("geometry.gauge_correction", defect, c.correction_tol));
    Ok(out)
}

#[derive(Serialize)]
struct RayRecord {
    direction: [f64; 3],
    conjugate: Option<f64>,
    max_null_defect: f64,
}

#[derive(Serialize)]
struct CausalRecords {
    observers: Vec<([f64; 4], [f64; 4])>,
    rays: Vec<RayRecord>,
    records: Vec<lorentzkit_core::causal::ObservationRecord>,
}

fn causal(cfg: &ScenarioConfig, m: &Metric, rng: &mut ChaCha8Rng) -> Result<Output, RunError> {
    let c = &cfg.causal;
    let fam = ObserverFamily::new(m, cfg.observers.family()).map_err(compute("observer family"))?;
    let x0 = fam.central().point(0.0);
    let frame = orthonormal_frame(m, x0).map_err(compute("frame"))?;
    let flow = FlowOptions::default();
    let cut = CutOptions {
        competing: false,
        s_max: c.s_max,
        ..CutOptions::default()
    };
    let mut csv = String::new();
    csv_row(&mut csv, ["ray", "step", "param", "x0", "x1", "x2", "x3", "null_defect"].map(String::from));
    let mut rays = Vec::new();
    let mut null_max = 0.0f64;
    for (k, n) in fibonacci_sphere(c.rays).into_iter().enumerate() {
        let xi = null_vector(&frame, n);
        let mut worst = 0.0f64;
        for step in 0..=c.steps {
            let s = c.s_max * step as f64 / c.steps as f64;
            let (p, v) = flow_to(m, x0, xi, s, &flow).map_err(compute("geodesic flow"))?;
            let g = m.eval(p);
            let norm: f64 = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).map(|(i, j)| g[i][j] * v[i] * v[j]).sum();
            let scale: f64 = v.iter().map(|c| c * c).sum();
            let defect = norm.abs() / scale;
            worst = worst.max(defect);
            csv_row(
                &mut csv,
                [k.to_string(), step.to_string(), s.to_string()]
                    .into_iter()
                    .chain(p.iter().map(|v| v.to_string()))
                    .chain([defect.to_string()]),
            );
        }
        null_max = null_max.max(worst);
        let conjugate = first_conjugate(m, x0, xi, c.s_max, &cut).map_err(compute("conjugate points"))?;
        rays.push(RayRecord {
            direction: n,
            conjugate,
            max_null_defect: worst,
        });
    }
    let shoot = ShootOptions::default();
    let mut records = Vec::new();
    let mut span_ok = true;
    let mut closed = 0.0f64;
    for _ in 0..c.samples {
        let d = diamond_point(rng, 0.3);
        let q = [d[0] + x0[0], d[1] + x0[1], d[2] + x0[2], d[3] + x0[3]];
        let rec = earliest_light_observation_set(m, q, &fam, &shoot);
        span_ok &= rec.values.iter().all(|v| (-1.0..=1.0).contains(v));
        if m.is_flat() {
            for (o, val) in fam.observers.iter().zip(&rec.values) {
                let d = [o.z[0] - q[0], o.z[1] - q[1], o.z[2] - q[2], o.z[3] - q[3]];
                let mk = |a: &[f64; 4], b: &[f64; 4]| -a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
                let a = mk(&o.eta, &d);
                let want = (a + (a * a + mk(&d, &d)).sqrt()).clamp(-1.0, 1.0);
                closed = closed.max((val - want).abs());
            }
        }
        records.push(rec);
    }
    let mut out = Output::default();
    out.files.push(("geodesics.csv".into(), csv));
    let conj_min = rays.iter().filter_map(|r| r.conjugate).fold(f64::INFINITY, f64::min);
    out.json(
        "records.json",
        &CausalRecords {
            observers: fam.observers.iter().map(|o| (o.z, o.eta)).collect(),
            rays,
            records: records.clone(),
        },
    );
    out.value("causal.null_defect_max", null_max);
    out.value("causal.first_conjugate_min", conj_min);
    for (i, r) in records.iter().enumerate() {
        out.value(&format!("causal.record.{i:03}.first"), r.values[0]);
    }
    out.assertions.push(Assertion::at_most("causal.null_norm", null_max, c.null_tol));
    out.assertions.push(Assertion::equal("causal.record_span", span_ok as u8 as f64, 1.0));
    if m.is_flat() {
        out.value("causal.closed_form_error", closed);
        out.assertions.push(Assertion::at_most("causal.closed_form", closed, c.closed_form_tol));
    }
    Ok(out)
}

#[derive(Serialize)]
struct CatalogLine {
    entry: String,
    sigma: [usize; 4],
    k: [u32; 4],
    tau_exponent: i64,
    rho_exponents: [i64; 4],
    versus_leader: Dominance,
}

fn interaction(cfg: &ScenarioConfig) -> Result<Output, RunError> {
    let c = &cfg.interaction;
    let all = catalog(c.a);
    let leader = all.iter().find(|e| e.is_leader()).ok_or_else(|| RunError::Compute {
        stage: "catalog",
        reason: "no leading entry".into(),
    })?;
    let lead = exponents(leader, c.a);
    let mut lines = Vec::with_capacity(all.len());
    let (mut stronger, mut leaders) = (0usize, 0usize);
    for e in &all {
        let ex = exponents(e, c.a);
        let dom = compare_exponents(ex, lead, c.hierarchy);
        match dom {
            Dominance::Stronger => stronger += 1,
            Dominance::Equal => leaders += 1,
            Dominance::Weaker => {}
        }
        lines.push(CatalogLine {
            entry: e.to_string(),
            sigma: e.sigma,
            k: e.k,
            tau_exponent: ex.0,
            rho_exponents: ex.1,
            versus_leader: dom,
        });
    }
    let mut out = Output::default();
    out.json("catalog.json", &lines);

    let set = build_covectors(c.rho).map_err(compute("covectors"))?;
    let mut picks: Vec<&CatalogEntry> = vec![leader];
    picks.extend(all.iter().find(|e| e.k == [2, 2, 1, 1] && e.sigma == [0, 1, 2, 3]));
    picks.extend(all.iter().find(|e| e.k == [0, 1, 0, 1] && e.sigma == [3, 2, 1, 0]));
    let mut csv = String::new();
    csv_row(
        &mut csv,
        ["entry", "tau", "oracle_re", "oracle_im", "leading_re", "leading_im", "ratio"].map(String::from),
    );
    let (mut slope_err, mut ratio_err) = (0.0f64, 0.0f64);
    let last = *c.taus.last().expect("validated");
    for (i, e) in picks.iter().enumerate() {
        let mut vals = Vec::new();
        for &t in &c.taus {
            let v = oscillatory_integral_oracle(e, c.a, &set, t, &OracleOptions::default()).map_err(compute("oracle"))?;
            let l = integral_leading(e, c.a, &set, t);
            csv_row(
                &mut csv,
                [e.to_string().replace(',', ";"), t.to_string(), v.re.to_string(), v.im.to_string()]
                    .into_iter()
                    .chain([l.re.to_string(), l.im.to_string(), (v / l).norm().to_string()]),
            );
            vals.push(v);
        }
        let expect = -e.slot_exponents(c.a).iter().map(|n| n + 1).sum::<i64>() as f64;
        let slope = fitted_slope(&c.taus, &vals);
        let ratio = vals[vals.len() - 1] / integral_leading(e, c.a, &set, last);
        out.value(&format!("interaction.pick{i}.slope"), slope);
        out.value(&format!("interaction.pick{i}.ratio"), ratio.norm());
        slope_err = slope_err.max((slope - expect).abs());
        ratio_err = ratio_err.max((ratio - 1.0).norm());
    }
    out.files.push(("oracle.csv".into(), csv));

    let r1 = c.kappa_rho1;
    let n = match c.hierarchy {
        Hierarchy::Exponent(n) => n as i32,
        Hierarchy::Limit => 2,
    };
    let r3 = r1.powi(n);
    let r2 = r3.powi(n);
    let r4 = r2.powi(n);
    let kset = build_covectors([r1, r2, r3, r4]).map_err(compute("covectors"))?;
    let v1 = harmonicity_basis(&kset).map_err(compute("harmonicity basis"))?;
    let k = kappa_determinant(&kset, &chosen_polarizations(&kset), &v1, &dual_basis(&v1), c.a, c.hierarchy)
        .map_err(compute("kappa"))?;

    out.value("interaction.catalog_size", all.len() as f64);
    out.value("interaction.slope_error", slope_err);
    out.value("interaction.ratio_error", ratio_err);
    out.value("interaction.kappa_abs", k.kappa.norm());
    out.assertions.push(Assertion::equal("interaction.leaders", leaders as f64, 2.0));
    out.assertions.push(Assertion::equal("interaction.stronger_than_leader", stronger as f64, 0.0));
    out.assertions.push(Assertion::at_most("interaction.slope", slope_err, c.slope_tol));
    out.assertions.push(Assertion::at_most("interaction.ratio", ratio_err, c.ratio_tol));
    out.assertions.push(Assertion::at_least("interaction.kappa", k.kappa.norm(), 1e-8));
    Ok(out)
}

fn shifted_frame(fields: usize, shift: f64, r: &mut ChaCha8Rng) -> Result<PointFrame, RunError> {
    let mut f = PointFrame::at(&Metric::Minkowski, &ScalarFieldFrame::canonical(fields, 1.0), [0.0; 4])
        .map_err(compute("point frame"))?;
    for p in f.phi.iter_mut() {
        *p += r.gen_range(-shift..=shift);
    }
    for d in f.dphi.iter_mut() {
        for c in d.iter_mut() {
            *c += r.gen_range(-shift..=shift);
        }
    }
    Ok(f)
}

fn adaptive(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<Output, RunError> {
    let c = &cfg.adaptive;
    let sigma = identity_permutation(c.fields);
    let mut csv = String::new();
    csv_row(&mut csv, ["frame", "condition_a", "iterations", "residual", "rank"].map(String::from));
    let (mut max_iter, mut max_res, mut bad_rank, mut skipped) = (0usize, 0.0f64, 0usize, 0usize);
    for i in 0..c.frames {
        let f = shifted_frame(c.fields, c.shift, rng)?;
        if !condition_a_matrix(&f, &sigma).holds() {
            skipped += 1;
            csv_row(&mut csv, [i.to_string(), "false".into(), String::new(), String::new(), String::new()]);
            continue;
        }
        let mut input = SourceInput::zero(f.k);
        input.q.iter_mut().for_each(|q| *q = rng.gen_range(-1.0..1.0));
        input.r.iter_mut().for_each(|q| *q = rng.gen_range(-1.0..1.0));
        let scale = rng.gen_range(c.input_min..=c.input_max) / input.norm();
        input.q.iter_mut().for_each(|q| *q *= scale);
        input.r.iter_mut().for_each(|q| *q *= scale);
        let sol = solve_adaptive_sources(&f, &input, &sigma, &SolverOptions::default()).map_err(compute("adaptive"))?;
        let rank = source_differential(&f, &sigma).map_err(compute("adaptive differential"))?.rank;
        max_iter = max_iter.max(sol.iterations);
        max_res = max_res.max(sol.residual);
        bad_rank += (rank != c.fields) as usize;
        csv_row(
            &mut csv,
            [i.to_string(), "true".into(), sol.iterations.to_string(), sol.residual.to_string(), rank.to_string()],
        );
    }
    let mut refused = 0usize;
    let degenerate = c.fields.min(3);
    for k in 0..degenerate {
        let mut f = shifted_frame(c.fields, c.shift, rng)?;
        let l = c.fields;
        match k {
            0 => {
                f.phi[l - 1] = 0.0;
                f.dphi[l - 1] = [0.0; 4];
            }
            1 => {
                f.phi[1] = f.phi[0];
                f.dphi[1] = f.dphi[0];
            }
            _ => {
                f.phi[2] = f.phi[0] - 2.0 * f.phi[1];
                for j in 0..4 {
                    f.dphi[2][j] = f.dphi[0][j] - 2.0 * f.dphi[1][j];
                }
            }
        }
        refused += matches!(source_differential(&f, &sigma), Err(AdaptiveError::ConditionA { .. })) as usize;
    }
    let mut out = Output::default();
    out.files.push(("adaptive.csv".into(), csv));
    out.value("adaptive.max_iterations", max_iter as f64);
    out.value("adaptive.max_residual", max_res);
    out.value("adaptive.skipped_frames", skipped as f64);
    out.assertions.push(Assertion::at_most("adaptive.iterations", max_iter as f64, c.max_iterations as f64));
    out.assertions.push(Assertion::at_most("adaptive.residual", max_res, c.residual_tol));
    out.assertions.push(Assertion::equal("adaptive.full_rank", bad_rank as f64, 0.0));
    out.assertions.push(Assertion::equal("adaptive.degenerate_refused", refused as f64, degenerate as f64));
    Ok(out)
}

fn reconstruct(cfg: &ScenarioConfig, m: &Metric, rng: &mut ChaCha8Rng) -> Result<Output, RunError> {
    let c = &cfg.reconstruction;
    let fam = ObserverFamily::new(m, cfg.observers.family()).map_err(compute("observer family"))?;
    let mut sc = Scenario::new(m.clone());
    sc.family = cfg.observers.family();
    sc.s_minus = c.s_minus;
    sc.s_plus = c.s_plus;
    sc.s_plus2 = c.s_plus2;
    sc.t0 = c.t0;
    sc.eps = c.eps;
    sc.seed = cfg.seed;
    sc.validate().map_err(compute("scenario"))?;
    let mut o = DiamondOptions::for_scenario(&sc, c.delta);
    if !m.is_flat() {
        o.collect.detection.intersection.respect_cut = false;
    }
    let cloud = reconstruct_diamond(m, &sc, &fam, &o).map_err(compute("reconstruction"))?;
    let shoot = ShootOptions::default();
    let truth = ground_truth(m, &cloud, &fam, &shoot);
    let score = conformal_consistency(&cloud, &truth, Matching::Index).map_err(compute("consistency"))?;
    let mu = fam.central();
    let z = mu.point(0.5 * (c.s_minus + c.s_plus));
    let half = 0.5 * (c.s_plus - c.s_minus);
    let mut targets = Vec::with_capacity(c.targets);
    let mut tries = 0usize;
    while targets.len() < c.targets && tries < 1000 * c.targets.max(1) {
        tries += 1;
        let p: [f64; 4] = std::array::from_fn(|i| z[i] + rng.gen_range(-half..half));
        let fp = f_plus_raw(m, mu, p, &shoot).unwrap_or(f64::INFINITY);
        let fm = f_minus_raw(m, mu, p, &shoot).unwrap_or(f64::NEG_INFINITY);
        if fp < c.s_plus && fm > c.s_minus {
            targets.push(p);
        }
    }
    let coverage = cloud.coverage(&targets);
    let mut out = Output::default();
    out.files.push(("cloud.json".into(), cloud.to_json()));
    out.files.push(("cloud.csv".into(), cloud.to_csv()));
    let mut summary = String::new();
    let _ = writeln!(summary, "points,{}\nscore,{score}\ncoverage,{coverage}", cloud.len());
    out.files.push(("reconstruction.csv".into(), summary));
    out.value("reconstruction.points", cloud.len() as f64);
    out.value("reconstruction.score", score);
    out.value("reconstruction.coverage", coverage);
    out.assertions.push(Assertion::at_most("reconstruction.score", score, c.score_tol));
    out.assertions.push(Assertion::at_most("reconstruction.coverage", coverage, c.delta));
    out.assertions.push(Assertion::equal("reconstruction.targets", targets.len() as f64, c.targets as f64));
    Ok(out)
}
