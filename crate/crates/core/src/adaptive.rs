//! Pointwise adaptive source functions and their symbol-level consequences.

use nalgebra::{DMatrix, DVector, Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::geometry::{metric_inverse, GeometryError, MetricProvider, ScalarFieldFrame};
use crate::linalg::{kernel_basis, range_basis, M4};
use crate::symbol::{PolarizationVector, SYM_INDEX};

/// Largest condition number of `B^σ` still treated as invertible.
pub const CONDITION_A_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdaptiveError {
    #[error("at least 5 scalar fields are required, got {l}")]
    TooFewFields { l: usize },
    #[error("K = {k} must be at least L + 1 = {}", l + 1)]
    TooFewControls { k: usize, l: usize },
    #[error("Condition A fails: cond(B) = {cond:e}")]
    ConditionA { cond: f64 },
    #[error("input norm {norm:e} exceeds the admission radius {radius:e}")]
    RadiusExceeded { norm: f64, radius: f64 },
    #[error("fixed point did not converge in {iterations} iterations")]
    Diverged { iterations: usize },
    #[error("symbol input violates the leading-order conservation law (residual {residual:e})")]
    NotConserved { residual: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Background values at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFrame {
    pub g: M4<f64>,
    pub phi: Vec<f64>,
    /// `dphi[ℓ][j] = ∂_j φ_ℓ`.
    pub dphi: Vec<[f64; 4]>,
    pub mass: f64,
    pub k: usize,
}

impl PointFrame {
    pub fn new(g: M4<f64>, phi: Vec<f64>, dphi: Vec<[f64; 4]>, mass: f64, k: usize) -> Result<Self, AdaptiveError> {
        let l = phi.len();
        if l < 5 || dphi.len() != l {
            return Err(AdaptiveError::TooFewFields { l: l.min(dphi.len()) });
        }
        if k < l + 1 {
            return Err(AdaptiveError::TooFewControls { k, l });
        }
        let frame = PointFrame { g, phi, dphi, mass, k };
        crate::geometry::check_signature(&ConstMetric(g), [0.0; 4])?;
        Ok(frame)
    }

    /// Frame of a background field configuration at `x`, with `K = L + 1`.
    pub fn at<M: MetricProvider>(m: &M, fields: &ScalarFieldFrame, x: [f64; 4]) -> Result<Self, AdaptiveError> {
        let l = fields.len();
        Self::new(m.eval(x), fields.phi(x), fields.d_phi(x), fields.mass, l + 1)
    }

    pub fn l(&self) -> usize {
        self.phi.len()
    }
}

struct ConstMetric(M4<f64>);

impl MetricProvider for ConstMetric {
    fn eval<S: crate::Scalar>(&self, _x: [S; 4]) -> [[S; 4]; 4] {
        let mut g = [[S::zero(); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                g[i][j] = S::from_f64(self.0[i][j]);
            }
        }
        g
    }

    fn is_flat(&self) -> bool {
        true
    }
}

/// Controlled scalars `Q ∈ ℝ^K` (the last entry targets `Z`) and divergence
/// data `R ∈ ℝ⁴`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInput {
    pub q: Vec<f64>,
    pub r: [f64; 4],
}

impl SourceInput {
    pub fn zero(k: usize) -> Self {
        SourceInput {
            q: vec![0.0; k],
            r: [0.0; 4],
        }
    }

    pub fn norm(&self) -> f64 {
        self.q
            .iter()
            .chain(self.r.iter())
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    }
}

/// A permutation of the field indices; the first five select `B^σ`.
pub type Permutation = Vec<usize>;

pub fn identity_permutation(l: usize) -> Permutation {
    (0..l).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionA {
    pub b: [[f64; 5]; 5],
    pub det: f64,
    pub cond: f64,
}

impl ConditionA {
    pub fn holds(&self) -> bool {
        self.cond <= CONDITION_A_LIMIT
    }

    fn matrix(&self) -> Matrix5<f64> {
        Matrix5::from_fn(|i, j| self.b[i][j])
    }
}

/// Rows 1-4 are `∂_j φ_{σ(ℓ)}`, row 5 is `φ_{σ(ℓ)}`, for `ℓ ≤ 5`.
pub fn condition_a_matrix(frame: &PointFrame, sigma: &[usize]) -> ConditionA {
    let mut b = [[0.0; 5]; 5];
    for (col, &f) in sigma.iter().take(5).enumerate() {
        for j in 0..4 {
            b[j][col] = frame.dphi[f][j];
        }
        b[4][col] = frame.phi[f];
    }
    let m = Matrix5::from_fn(|i, j| b[i][j]);
    let sv = m.singular_values();
    let smin = sv.min();
    let cond = if smin == 0.0 { f64::INFINITY } else { sv.max() / smin };
    ConditionA {
        b,
        det: m.determinant(),
        cond,
    }
}

/// Identity if it satisfies Condition A, otherwise the 5-subset with the
/// largest `|det B^σ|`, followed by the remaining fields in order.
pub fn select_permutation(frame: &PointFrame) -> Result<Permutation, AdaptiveError> {
    let l = frame.l();
    let id = identity_permutation(l);
    let first = condition_a_matrix(frame, &id);
    if first.holds() {
        return Ok(id);
    }
    let mut best: Option<(f64, Permutation)> = None;
    let mut pick = [0usize; 5];
    fn rec(
        start: usize,
        depth: usize,
        l: usize,
        pick: &mut [usize; 5],
        frame: &PointFrame,
        best: &mut Option<(f64, Permutation)>,
    ) {
        if depth == 5 {
            let mut sigma: Permutation = pick.to_vec();
            sigma.extend((0..l).filter(|i| !pick.contains(i)));
            let c = condition_a_matrix(frame, &sigma);
            if c.holds() && best.as_ref().is_none_or(|(d, _)| c.det.abs() > *d) {
                *best = Some((c.det.abs(), sigma));
            }
            return;
        }
        for i in start..l {
            pick[depth] = i;
            rec(i + 1, depth + 1, l, pick, frame, best);
        }
    }
    rec(0, 0, l, &mut pick, frame, &mut best);
    best.map(|(_, s)| s)
        .ok_or(AdaptiveError::ConditionA { cond: first.cond })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Admission radius; `None` uses `0.1 / ‖Y_σ‖`.
    pub radius: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 100,
            tol: 1e-13,
            radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSolution {
    /// `S_ℓ` indexed by field.
    pub s: Vec<f64>,
    pub iterations: usize,
    /// Max residual of the four gradient equations and the `Z` equation.
    pub residual: f64,
    /// Successive iterate distances.
    pub steps: Vec<f64>,
}

fn rhs(frame: &PointFrame, sigma: &[usize], input: &SourceInput) -> Vector5<f64> {
    let mut b = Vector5::zeros();
    for j in 0..4 {
        b[j] = -input.r[j];
    }
    b[4] = -input.q[frame.k - 1];
    for &f in sigma.iter().skip(5) {
        let q = input.q[f];
        for j in 0..4 {
            b[j] -= q * frame.dphi[f][j];
        }
        b[4] -= q * frame.phi[f];
    }
    b
}

fn quadratic(frame: &PointFrame, s: &[f64]) -> f64 {
    s.iter().map(|v| v * v).sum::<f64>() / (2.0 * frame.mass * frame.mass)
}

/// Residuals of the four gradient equations and of the `Z` equation.
pub fn defining_residuals(frame: &PointFrame, input: &SourceInput, s: &[f64]) -> [f64; 5] {
    let mut r = [0.0; 5];
    for j in 0..4 {
        r[j] = input.r[j] + (0..frame.l()).map(|f| s[f] * frame.dphi[f][j]).sum::<f64>();
    }
    r[4] = input.q[frame.k - 1]
        + (0..frame.l()).map(|f| s[f] * frame.phi[f]).sum::<f64>()
        + quadratic(frame, s);
    r
}

/// `S` from the Banach iteration of the source formulas.
pub fn solve_adaptive_sources(
    frame: &PointFrame,
    input: &SourceInput,
    sigma: &[usize],
    opts: &SolverOptions,
) -> Result<AdaptiveSolution, AdaptiveError> {
    let ca = condition_a_matrix(frame, sigma);
    if !ca.holds() {
        return Err(AdaptiveError::ConditionA { cond: ca.cond });
    }
    let y = ca.matrix().try_inverse().ok_or(AdaptiveError::ConditionA { cond: ca.cond })?;
    let radius = opts.radius.unwrap_or(0.1 / y.singular_values().max());
    let norm = input.norm();
    if norm > radius {
        return Err(AdaptiveError::RadiusExceeded { norm, radius });
    }
    let l = frame.l();
    let mut s = vec![0.0; l];
    for &f in sigma.iter().skip(5) {
        s[f] = input.q[f];
    }
    let b = rhs(frame, sigma, input);
    let mut steps = Vec::new();
    let mut iterations = 0;
    loop {
        let mut rhs5 = b;
        rhs5[4] -= quadratic(frame, &s);
        let s5 = y * rhs5;
        let mut step = 0.0f64;
        for (i, &f) in sigma.iter().take(5).enumerate() {
            step = step.max((s5[i] - s[f]).abs());
            s[f] = s5[i];
        }
        iterations += 1;
        steps.push(step);
        if step <= opts.tol {
            break;
        }
        if iterations >= opts.max_iter || !step.is_finite() {
            return Err(AdaptiveError::Diverged { iterations });
        }
    }
    let residual = defining_residuals(frame, input, &s)
        .iter()
        .fold(0.0f64, |a, r| a.max(r.abs()));
    Ok(AdaptiveSolution {
        s,
        iterations,
        residual,
        steps,
    })
}

/// `Z = -Σ_ℓ (S_ℓ φ_ℓ + S_ℓ²/(2m²))`.
pub fn stress_density_z(s: &[f64], phi: &[f64], mass: f64) -> f64 {
    -s.iter()
        .zip(phi.iter())
        .map(|(s, p)| s * p + s * s / (2.0 * mass * mass))
        .sum::<f64>()
}

/// `Σ_ℓ S_ℓ ∂_j φ_ℓ + R_j`.
pub fn conservation_residual_pointwise(frame: &PointFrame, s: &[f64], r: &[f64; 4]) -> [f64; 4] {
    let mut out = *r;
    for j in 0..4 {
        for (f, sf) in s.iter().enumerate() {
            out[j] += sf * frame.dphi[f][j];
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDifferential {
    /// `L x (K+4)`; columns are `Q_1..Q_K` then `R_1..R_4`.
    pub d: DMatrix<f64>,
    pub rank: usize,
}

/// Closed-form differential of `S_σ` in `(Q, R)` at the origin.
pub fn source_differential(frame: &PointFrame, sigma: &[usize]) -> Result<SourceDifferential, AdaptiveError> {
    let ca = condition_a_matrix(frame, sigma);
    if !ca.holds() {
        return Err(AdaptiveError::ConditionA { cond: ca.cond });
    }
    let y = ca.matrix().try_inverse().ok_or(AdaptiveError::ConditionA { cond: ca.cond })?;
    let (l, k) = (frame.l(), frame.k);
    let mut d = DMatrix::zeros(l, k + 4);
    // Columns of the right-hand side vector in (R, Q_K) order.
    let put = |d: &mut DMatrix<f64>, col: usize, e: Vector5<f64>| {
        let v = -(y * e);
        for (i, &f) in sigma.iter().take(5).enumerate() {
            d[(f, col)] += v[i];
        }
    };
    for j in 0..4 {
        put(&mut d, k + j, Vector5::ith(j, 1.0));
    }
    put(&mut d, k - 1, Vector5::ith(4, 1.0));
    for &f in sigma.iter().skip(5) {
        let mut e = Vector5::zeros();
        for j in 0..4 {
            e[j] = frame.dphi[f][j];
        }
        e[4] = frame.phi[f];
        put(&mut d, f, e);
        d[(f, f)] = 1.0;
    }
    let rank = crate::linalg::numeric_rank(&d, 1e-10);
    Ok(SourceDifferential { d, rank })
}

/// Principal and subprincipal symbol data of the controlled sources at one
/// conormal point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolData {
    pub v_a: M4<f64>,
    pub v_b: M4<f64>,
    /// `x`-derivatives of the principal symbol of `p`, one matrix per `j`.
    pub v_c: [M4<f64>; 4],
    /// Principal symbol of `q'`.
    pub w1_a: Vec<f64>,
    pub w2_a: f64,
    pub w2_b: f64,
    /// `x`-derivatives of the principal symbol of `z`.
    pub d_c: [f64; 4],
}

impl SymbolData {
    pub fn zero(k: usize) -> Self {
        SymbolData {
            v_a: [[0.0; 4]; 4],
            v_b: [[0.0; 4]; 4],
            v_c: [[[0.0; 4]; 4]; 4],
            w1_a: vec![0.0; k - 1],
            w2_a: 0.0,
            w2_b: 0.0,
            d_c: [0.0; 4],
        }
    }

    /// Number of free real parameters, ignoring the conservation constraint.
    pub fn dim(k: usize) -> usize {
        10 + 10 + 40 + (k - 1) + 1 + 1 + 4
    }

    /// Unpacks a parameter vector: `v_a, v_b, v_c[0..4]` in the symmetric
    /// index map, then `w1_a, w2_a, w2_b, d_c`.
    pub fn from_flat(p: &[f64], k: usize) -> Self {
        let mut out = Self::zero(k);
        let sym = |off: usize| {
            let mut m = [[0.0; 4]; 4];
            for (i, &(a, b)) in SYM_INDEX.iter().enumerate() {
                m[a][b] = p[off + i];
                m[b][a] = p[off + i];
            }
            m
        };
        out.v_a = sym(0);
        out.v_b = sym(10);
        for j in 0..4 {
            out.v_c[j] = sym(20 + 10 * j);
        }
        let mut o = 60;
        for w in out.w1_a.iter_mut() {
            *w = p[o];
            o += 1;
        }
        out.w2_a = p[o];
        out.w2_b = p[o + 1];
        for j in 0..4 {
            out.d_c[j] = p[o + 2 + j];
        }
        out
    }
}

fn contract_xi(ginv: &M4<f64>, xi: &[f64; 4], m: &M4<f64>) -> [f64; 4] {
    let mut r = [0.0; 4];
    for j in 0..4 {
        for l in 0..4 {
            for k in 0..4 {
                r[j] += ginv[l][k] * xi[l] * m[k][j];
            }
        }
    }
    r
}

fn plus_g(m: &M4<f64>, g: &M4<f64>, z: f64) -> M4<f64> {
    let mut out = *m;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] += z * g[i][j];
        }
    }
    out
}

/// Principal symbol `(f₁, f₂)` of the linearized source.
///
/// `f₁ = v^(a) + w₂^(a) ĝ`. `f₂` is the source differential applied to
/// `(w₁^(a), w₂^(a), r)` with `r_j = ĝ^{lk} ξ_l m^(b)_{kj} + ĝ^{pk} m^(c)_{p,kj}`,
/// where `m^(b) = v^(b) + w₂^(b) ĝ` and `m^(c)_p = v^(c)_p + d^(c)_p ĝ`.
pub fn linearized_source(
    frame: &PointFrame,
    sigma: &[usize],
    xi: [f64; 4],
    data: &SymbolData,
) -> Result<PolarizationVector, AdaptiveError> {
    let ginv = metric_inverse(&frame.g, [0.0; 4])?;
    let f1 = plus_g(&data.v_a, &frame.g, data.w2_a);
    let cons = contract_xi(&ginv, &xi, &f1);
    let scale = 1.0 + f1.iter().flatten().fold(0.0f64, |a, c| a.max(c.abs()));
    let residual = cons.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    if residual > 1e-10 * scale {
        return Err(AdaptiveError::NotConserved { residual });
    }
    let mb = plus_g(&data.v_b, &frame.g, data.w2_b);
    let mut r = contract_xi(&ginv, &xi, &mb);
    for p in 0..4 {
        let mc = plus_g(&data.v_c[p], &frame.g, data.d_c[p]);
        for j in 0..4 {
            for k in 0..4 {
                r[j] += ginv[p][k] * mc[k][j];
            }
        }
    }
    let d = source_differential(frame, sigma)?;
    let mut arg = DVector::zeros(frame.k + 4);
    for (i, w) in data.w1_a.iter().enumerate() {
        arg[i] = *w;
    }
    arg[frame.k - 1] = data.w2_a;
    for j in 0..4 {
        arg[frame.k + j] = r[j];
    }
    let f2 = &d.d * arg;
    Ok(PolarizationVector {
        v: f1,
        w: f2.iter().cloned().collect(),
    })
}

/// Orthonormal basis of all principal symbols reachable by admissible
/// symbol data.
pub fn source_image_basis(frame: &PointFrame, sigma: &[usize], xi: [f64; 4]) -> Result<DMatrix<f64>, AdaptiveError> {
    let k = frame.k;
    let n = SymbolData::dim(k);
    let ginv = metric_inverse(&frame.g, [0.0; 4])?;
    // Constraint on (v_a, w2_a): ĝ^{lk} ξ_l (v_a + w2_a ĝ)_{kj} = 0.
    let mut c = DMatrix::zeros(4, 11);
    for (i, &(a, b)) in SYM_INDEX.iter().enumerate() {
        let mut e = [[0.0; 4]; 4];
        e[a][b] = 1.0;
        e[b][a] = 1.0;
        let r = contract_xi(&ginv, &xi, &e);
        for j in 0..4 {
            c[(j, i)] = r[j];
        }
    }
    let rg = contract_xi(&ginv, &xi, &frame.g);
    for j in 0..4 {
        c[(j, 10)] = rg[j];
    }
    let ker = kernel_basis(&c, 1e-10);
    let mut inputs: Vec<Vec<f64>> = Vec::new();
    let w2a = 60 + (k - 1);
    for col in ker.column_iter() {
        let mut p = vec![0.0; n];
        p[..10].copy_from_slice(&col.as_slice()[..10]);
        p[w2a] = col[10];
        inputs.push(p);
    }
    for i in (10..n).filter(|&i| i != w2a) {
        let mut p = vec![0.0; n];
        p[i] = 1.0;
        inputs.push(p);
    }
    let cols: Vec<DVector<f64>> = inputs
        .iter()
        .map(|p| linearized_source(frame, sigma, xi, &SymbolData::from_flat(p, k)).map(|f| f.to_flat()))
        .collect::<Result<_, _>>()?;
    Ok(range_basis(&DMatrix::from_columns(&cols), 1e-10))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Metric;

    fn canonical() -> PointFrame {
        let fields = ScalarFieldFrame::canonical(5, 1.0);
        PointFrame::at(&Metric::Minkowski, &fields, [0.0; 4]).unwrap()
    }

    #[test]
    fn canonical_b_is_identity() {
        let f = canonical();
        let c = condition_a_matrix(&f, &identity_permutation(5));
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(c.b[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(c.det, 1.0);
    }

    #[test]
    fn vanishing_fifth_field_is_singular() {
        let mut f = canonical();
        f.phi[4] = 0.0;
        assert!(!condition_a_matrix(&f, &identity_permutation(5)).holds());
        assert!(select_permutation(&f).is_err());
    }

    #[test]
    fn zero_input_gives_zero_sources() {
        let f = canonical();
        let s = solve_adaptive_sources(&f, &SourceInput::zero(6), &identity_permutation(5), &SolverOptions::default())
            .unwrap();
        assert!(s.s.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn z_target_is_met() {
        let f = canonical();
        let mut input = SourceInput::zero(6);
        input.q[5] = 1e-4;
        let sol = solve_adaptive_sources(&f, &input, &identity_permutation(5), &SolverOptions::default()).unwrap();
        assert!(sol.residual < 1e-13);
        assert!((stress_density_z(&sol.s, &f.phi, f.mass) - 1e-4).abs() < 1e-12);
        let c = conservation_residual_pointwise(&f, &sol.s, &input.r);
        assert!(c.iter().all(|v| v.abs() < 1e-11));
    }

    #[test]
    fn z_single_field() {
        assert_eq!(stress_density_z(&[4.0], &[0.0], 2.0), -2.0);
        assert_eq!(stress_density_z(&[0.0, 0.0], &[1.0, 2.0], 1.0), 0.0);
    }

    #[test]
    fn differential_has_full_rank() {
        let f = canonical();
        let d = source_differential(&f, &identity_permutation(5)).unwrap();
        assert_eq!(d.rank, 5);
        assert_eq!(d.d.ncols(), 10);
    }

    #[test]
    fn radius_gate() {
        let f = canonical();
        let mut input = SourceInput::zero(6);
        input.r[0] = 1.0;
        assert!(matches!(
            solve_adaptive_sources(&f, &input, &identity_permutation(5), &SolverOptions::default()),
            Err(AdaptiveError::RadiusExceeded { .. })
        ));
    }

    #[test]
    fn zero_symbol_data() {
        let f = canonical();
        let out = linearized_source(&f, &identity_permutation(5), [-1.0, 1.0, 0.0, 0.0], &SymbolData::zero(6)).unwrap();
        assert!(out.to_flat().iter().all(|v| *v == 0.0));
    }

    fn perturbed(seed: u64) -> PointFrame {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = canonical();
        for p in f.phi.iter_mut() {
            *p += rng.gen_range(-0.2..0.2);
        }
        for d in f.dphi.iter_mut() {
            for c in d.iter_mut() {
                *c += rng.gen_range(-0.2..0.2);
            }
        }
        f
    }

    // Newton on the full 5x5 nonlinear system, independent of the iteration.
    fn newton_oracle(f: &PointFrame, input: &SourceInput) -> Vec<f64> {
        let mut s = vec![0.0; 5];
        for _ in 0..30 {
            let r = defining_residuals(f, input, &s);
            let mut j = Matrix5::zeros();
            for c in 0..5 {
                for row in 0..4 {
                    j[(row, c)] = f.dphi[c][row];
                }
                j[(4, c)] = f.phi[c] + s[c] / (f.mass * f.mass);
            }
            let step = j.lu().solve(&Vector5::from_column_slice(&r)).unwrap();
            for c in 0..5 {
                s[c] -= step[c];
            }
        }
        s
    }

    #[test]
    fn fixed_point_matches_newton() {
        let f = canonical();
        let mut input = SourceInput::zero(6);
        input.q[5] = 1e-4;
        input.r = [2e-5, -1e-5, 3e-5, 0.0];
        let sol = solve_adaptive_sources(&f, &input, &identity_permutation(5), &SolverOptions::default()).unwrap();
        let oracle = newton_oracle(&f, &input);
        for (a, b) in sol.s.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(sol.residual <= 1e-13);
    }

    #[test]
    fn determinant_matches_dense() {
        let f = perturbed(3);
        let c = condition_a_matrix(&f, &identity_permutation(5));
        let dense = DMatrix::from_fn(5, 5, |i, j| c.b[i][j]).determinant();
        assert!((c.det - dense).abs() < 1e-12);
    }

    #[test]
    fn differential_matches_finite_differences() {
        let sigma = identity_permutation(6);
        let mut f = perturbed(11);
        f.phi.push(0.3);
        f.dphi.push([0.1, -0.2, 0.05, 0.3]);
        f.k = 7;
        let d = source_differential(&f, &sigma).unwrap();
        assert_eq!(d.rank, 6);
        let h = 1e-6;
        let opts = SolverOptions::default();
        for col in 0..f.k + 4 {
            let mut plus = SourceInput::zero(f.k);
            let mut minus = SourceInput::zero(f.k);
            if col < f.k {
                plus.q[col] = h;
                minus.q[col] = -h;
            } else {
                plus.r[col - f.k] = h;
                minus.r[col - f.k] = -h;
            }
            let sp = solve_adaptive_sources(&f, &plus, &sigma, &opts).unwrap().s;
            let sm = solve_adaptive_sources(&f, &minus, &sigma, &opts).unwrap().s;
            for row in 0..6 {
                let fd = (sp[row] - sm[row]) / (2.0 * h);
                assert!((fd - d.d[(row, col)]).abs() < 1e-6, "({row},{col}) {fd} {}", d.d[(row, col)]);
            }
        }
        for c in 0..5 {
            assert_eq!(d.d[(5, c)], 0.0);
        }
        assert_eq!(d.d[(5, 5)], 1.0);
    }

    #[test]
    fn iteration_contracts() {
        let f = perturbed(5);
        let sigma = identity_permutation(5);
        let y = Matrix5::from_fn(|i, j| condition_a_matrix(&f, &sigma).b[i][j]).try_inverse().unwrap();
        let radius = 0.1 / y.singular_values().max();
        let mut input = SourceInput::zero(6);
        input.q[5] = 0.3 * radius;
        input.r = [0.2 * radius, -0.2 * radius, 0.1 * radius, 0.1 * radius];
        let sol = solve_adaptive_sources(&f, &input, &sigma, &SolverOptions::default()).unwrap();
        for w in sol.steps.windows(2).skip(1) {
            if w[0] > 1e-15 {
                assert!(w[1] <= 0.5 * w[0]);
            }
        }
    }

    #[test]
    fn permutation_recovers_condition_a() {
        let mut f = canonical();
        f.phi.push(1.0);
        f.dphi.push([0.0; 4]);
        f.k = 7;
        f.phi[4] = 0.0;
        let sigma = select_permutation(&f).unwrap();
        assert_eq!(&sigma[..5], &[0, 1, 2, 3, 5]);
        assert_eq!(source_differential(&f, &sigma).unwrap().rank, 6);
    }

    #[test]
    fn projected_z_input_is_conserved() {
        let f = canonical();
        let xi = [-1.0, 1.0, 0.0, 0.0];
        let z = 0.7;
        // v = -z ĝ + (ξ⊗ξ) leaves ĝ^{lk} ξ_l (v + zĝ)_{kj} = ξ^k ξ_k ξ_j = 0.
        let mut data = SymbolData::zero(6);
        for i in 0..4 {
            for j in 0..4 {
                data.v_a[i][j] = -z * f.g[i][j] + xi[i] * xi[j];
            }
        }
        data.w2_a = z;
        let out = linearized_source(&f, &identity_permutation(5), xi, &data).unwrap();
        assert_eq!(out.v[0][0], 1.0);
        data.v_a[0][0] += 0.1;
        assert!(linearized_source(&f, &identity_permutation(5), xi, &data).is_err());
    }

    #[test]
    fn image_is_the_conservation_space() {
        use crate::symbol::{constraint_space_basis, Constraint, NullCovectorFrame};
        for seed in [1, 2] {
            let f = perturbed(seed);
            let xi = [-1.0, 0.6, 0.8, 0.0];
            let img = source_image_basis(&f, &identity_permutation(5), xi).unwrap();
            assert_eq!(img.ncols(), 5 + 6);
            let frame = NullCovectorFrame::new(&Metric::Minkowski, [0.0; 4], xi).unwrap();
            let cons = constraint_space_basis(&frame, Constraint::Conservation, 5).unwrap();
            assert!(crate::linalg::inclusion_defect(&img, &cons) < 1e-8);
            assert!(crate::linalg::inclusion_defect(&cons, &img) < 1e-8);
        }
    }
}
