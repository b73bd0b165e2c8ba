//! Principal-symbol linear algebra on null conormal fibers.

mod beam;

pub use beam::{gaussian_beam_phase, BeamOptions, BeamSample, GaussianBeam, TestSource};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::causal::{flow_to, CausalError, FlowOptions};
use crate::geometry::{metric_inverse, MetricProvider};
use crate::linalg::{condition_number, kernel_basis, mat_vec, M4};

/// Flat index map of the ten independent metric components.
pub const SYM_INDEX: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

/// Relative singular-value threshold for constraint kernels.
pub const BASIS_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SymbolError {
    #[error("covector is not null: g(ξ,ξ) = {norm:e}")]
    NotNull { norm: f64 },
    #[error("degenerate frame: constraint map has rank {rank}")]
    DegenerateFrame { rank: usize },
    #[error("frames are not on one bicharacteristic (defect {defect:e})")]
    NotOnBicharacteristic { defect: f64 },
    #[error("caustic encountered at s = {s}")]
    Caustic { s: f64 },
    #[error(transparent)]
    Causal(#[from] CausalError),
}

/// A fiber value: symmetric metric part and `L` scalar-field components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationVector {
    pub v: M4<f64>,
    pub w: Vec<f64>,
}

impl PolarizationVector {
    pub fn zero(l: usize) -> Self {
        PolarizationVector {
            v: [[0.0; 4]; 4],
            w: vec![0.0; l],
        }
    }

    pub fn metric(v: M4<f64>, l: usize) -> Self {
        PolarizationVector { v, w: vec![0.0; l] }
    }

    pub fn dim(&self) -> usize {
        10 + self.w.len()
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (i, &(j, k)) in SYM_INDEX.iter().enumerate() {
            out[i] = self.v[j][k];
        }
        for (i, w) in self.w.iter().enumerate() {
            out[10 + i] = *w;
        }
        out
    }

    pub fn from_flat(f: &DVector<f64>) -> Self {
        let mut v = [[0.0; 4]; 4];
        for (i, &(j, k)) in SYM_INDEX.iter().enumerate() {
            v[j][k] = f[i];
            v[k][j] = f[i];
        }
        PolarizationVector {
            v,
            w: f.iter().skip(10).cloned().collect(),
        }
    }
}

/// A null covector `ξ` at `x` together with the background metric there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullCovectorFrame {
    pub x: [f64; 4],
    pub xi: [f64; 4],
    pub g: M4<f64>,
    pub ginv: M4<f64>,
}

const NULL_TOL: f64 = 1e-10;

impl NullCovectorFrame {
    pub fn new<M: MetricProvider>(m: &M, x: [f64; 4], xi: [f64; 4]) -> Result<Self, SymbolError> {
        let g = m.eval(x);
        let ginv = metric_inverse(&g, x).map_err(CausalError::from)?;
        let f = NullCovectorFrame { x, xi, g, ginv };
        let n2: f64 = xi.iter().map(|c| c * c).sum();
        let norm = f.norm();
        if norm.abs() > NULL_TOL * n2.max(f64::MIN_POSITIVE) {
            return Err(SymbolError::NotNull { norm });
        }
        Ok(f)
    }

    /// Frame for the covector `v♭` of a null vector `v` at `x`.
    pub fn from_vector<M: MetricProvider>(m: &M, x: [f64; 4], v: [f64; 4]) -> Result<Self, SymbolError> {
        let xi = mat_vec(&m.eval(x), &v);
        Self::new(m, x, xi)
    }

    pub fn norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                s += self.ginv[i][j] * self.xi[i] * self.xi[j];
            }
        }
        s
    }

    /// `ξ♯`.
    pub fn sharp(&self) -> [f64; 4] {
        mat_vec(&self.ginv, &self.xi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    Harmonicity,
    Conservation,
}

fn trace(ginv: &M4<f64>, v: &M4<f64>) -> f64 {
    let mut t = 0.0;
    for p in 0..4 {
        for q in 0..4 {
            t += ginv[p][q] * v[p][q];
        }
    }
    t
}

/// `r_j = -ĝ^{mn} ξ_m v_{nj} + ½ ξ_j ĝ^{pq} v_{pq}`.
pub fn harmonicity_residual(frame: &NullCovectorFrame, v: &PolarizationVector) -> [f64; 4] {
    let xs = frame.sharp();
    let tr = trace(&frame.ginv, &v.v);
    let mut r = [0.0; 4];
    for j in 0..4 {
        let mut s = 0.0;
        for n in 0..4 {
            s += xs[n] * v.v[n][j];
        }
        r[j] = -s + 0.5 * frame.xi[j] * tr;
    }
    r
}

/// `r_j = ĝ^{lk} ξ_l v_{kj}`.
pub fn conservation_residual(frame: &NullCovectorFrame, v: &PolarizationVector) -> [f64; 4] {
    let xs = frame.sharp();
    let mut r = [0.0; 4];
    for j in 0..4 {
        for k in 0..4 {
            r[j] += xs[k] * v.v[k][j];
        }
    }
    r
}

/// The 4 x (10+L) matrix of a constraint in the flat index map.
pub fn constraint_matrix(frame: &NullCovectorFrame, which: Constraint, l: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(4, 10 + l);
    for (i, &(j, k)) in SYM_INDEX.iter().enumerate() {
        let mut e = PolarizationVector::zero(0);
        e.v[j][k] = 1.0;
        e.v[k][j] = 1.0;
        let r = match which {
            Constraint::Harmonicity => harmonicity_residual(frame, &e),
            Constraint::Conservation => conservation_residual(frame, &e),
        };
        for (row, rv) in r.iter().enumerate() {
            a[(row, i)] = *rv;
        }
    }
    a
}

/// Orthonormal basis (columns) of the constraint kernel in `ℝ^{10+L}`.
pub fn constraint_space_basis(
    frame: &NullCovectorFrame,
    which: Constraint,
    l: usize,
) -> Result<DMatrix<f64>, SymbolError> {
    let a = constraint_matrix(frame, which, l);
    let basis = kernel_basis(&a, BASIS_THRESHOLD);
    if basis.ncols() != 6 + l {
        return Err(SymbolError::DegenerateFrame {
            rank: 10 + l - basis.ncols(),
        });
    }
    Ok(basis)
}

/// Coefficients of the first transport equation `dΦ/ds = -½ C(x, ẋ) Φ`.
pub trait Subprincipal: Sync {
    fn coefficient(&self, x: [f64; 4], v: [f64; 4], dim: usize) -> DMatrix<f64>;
}

/// The decoupled system: no first-order coupling along rays.
#[derive(Debug, Clone, Copy, Default)]
pub struct Decoupled;

impl Subprincipal for Decoupled {
    fn coefficient(&self, _x: [f64; 4], _v: [f64; 4], dim: usize) -> DMatrix<f64> {
        DMatrix::zeros(dim, dim)
    }
}

/// How the source enters the linearized system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceForm {
    /// The source is already the right-hand side of the wave system.
    Wave,
    /// The source perturbs the Einstein tensor; its metric block is trace
    /// reversed before entering the wave system.
    Einstein,
}

/// `c ↦ c - ½ ĝ tr_ĝ c` on the metric block, identity on scalars.
pub fn trace_reversal(g: &M4<f64>, ginv: &M4<f64>, l: usize) -> DMatrix<f64> {
    let n = 10 + l;
    let mut p = DMatrix::identity(n, n);
    for (col, &(a, b)) in SYM_INDEX.iter().enumerate() {
        let mut e = [[0.0; 4]; 4];
        e[a][b] = 1.0;
        e[b][a] = 1.0;
        let tr = trace(ginv, &e);
        for (row, &(j, k)) in SYM_INDEX.iter().enumerate() {
            p[(row, col)] -= 0.5 * g[j][k] * tr;
        }
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transport {
    pub r: DMatrix<f64>,
    pub condition: f64,
    /// Affine parameter from the source frame to the target frame.
    pub s: f64,
}

impl Transport {
    pub fn apply(&self, v: &PolarizationVector) -> PolarizationVector {
        PolarizationVector::from_flat(&(&self.r * v.to_flat()))
    }
}

/// Parameter at which the bicharacteristic from `from` meets `to`.
fn locate(
    m: &impl MetricProvider,
    from: &NullCovectorFrame,
    to: &NullCovectorFrame,
    flow: &FlowOptions,
) -> Result<f64, SymbolError> {
    let v0 = from.sharp();
    let d: Vec<f64> = (0..4).map(|k| to.x[k] - from.x[k]).collect();
    let vv: f64 = v0.iter().map(|c| c * c).sum();
    let mut s = d.iter().zip(v0.iter()).map(|(a, b)| a * b).sum::<f64>() / vv;
    for _ in 0..30 {
        let (x, v) = flow_to(m, from.x, v0, s, flow)?;
        let r: Vec<f64> = (0..4).map(|k| x[k] - to.x[k]).collect();
        let num: f64 = r.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        let den: f64 = v.iter().map(|c| c * c).sum();
        let ds = num / den;
        s -= ds;
        if ds.abs() < 1e-14 {
            break;
        }
    }
    let (x, v) = flow_to(m, from.x, v0, s, flow)?;
    let xi = mat_vec(&m.eval(x), &v);
    let scale = 1.0 + to.xi.iter().map(|c| c.abs()).fold(0.0, f64::max);
    let defect = (0..4)
        .map(|k| (x[k] - to.x[k]).abs().max((xi[k] - to.xi[k]).abs() / scale))
        .fold(0.0, f64::max);
    if defect > 1e-8 {
        return Err(SymbolError::NotOnBicharacteristic { defect });
    }
    Ok(s)
}

/// The symbol map `R(y,η,x,ξ)` between two frames on one bicharacteristic.
pub fn transport_symbol<M: MetricProvider, V: Subprincipal>(
    m: &M,
    system: &V,
    from: &NullCovectorFrame,
    to: &NullCovectorFrame,
    l: usize,
    form: SourceForm,
) -> Result<Transport, SymbolError> {
    let flow = FlowOptions::default();
    let s_end = locate(m, from, to, &flow)?;
    let n = 10 + l;
    let v0 = from.sharp();
    let steps = ((s_end.abs() / 0.01).ceil() as usize).max(1);
    let h = s_end / steps as f64;
    let mut phi = DMatrix::identity(n, n);
    let rate = |s: f64, phi: &DMatrix<f64>| -> Result<DMatrix<f64>, SymbolError> {
        let (x, v) = flow_to(m, from.x, v0, s, &flow)?;
        Ok(system.coefficient(x, v, n) * phi * -0.5)
    };
    let probe = system.coefficient(from.x, v0, n);
    if probe.iter().any(|c| *c != 0.0) || !m.is_flat() {
        for i in 0..steps {
            let s = i as f64 * h;
            let k1 = rate(s, &phi)?;
            let k2 = rate(s + 0.5 * h, &(&phi + &k1 * (0.5 * h)))?;
            let k3 = rate(s + 0.5 * h, &(&phi + &k2 * (0.5 * h)))?;
            let k4 = rate(s + h, &(&phi + &k3 * h))?;
            phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
    let r = match form {
        SourceForm::Wave => phi,
        SourceForm::Einstein => phi * trace_reversal(&from.g, &from.ginv, l),
    };
    Ok(Transport {
        condition: condition_number(&r),
        r,
        s: s_end,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Metric;
    use crate::linalg::{inclusion_defect, numeric_rank};

    fn flat_frame() -> NullCovectorFrame {
        NullCovectorFrame::new(&Metric::Minkowski, [0.0; 4], [-1.0, 0.6, 0.8, 0.0]).unwrap()
    }

    fn outer(a: [f64; 4], b: [f64; 4]) -> M4<f64> {
        let mut v = [[0.0; 4]; 4];
        for j in 0..4 {
            for k in 0..4 {
                v[j][k] = 0.5 * (a[j] * b[k] + a[k] * b[j]);
            }
        }
        v
    }

    #[test]
    fn xi_xi_satisfies_both_constraints() {
        let f = flat_frame();
        let v = PolarizationVector::metric(outer(f.xi, f.xi), 5);
        assert!(harmonicity_residual(&f, &v).iter().all(|r| r.abs() < 1e-15));
        assert!(conservation_residual(&f, &v).iter().all(|r| r.abs() < 1e-15));
    }

    #[test]
    fn metric_itself_violates_harmonicity() {
        let f = flat_frame();
        let v = PolarizationVector::metric(f.g, 0);
        let r = harmonicity_residual(&f, &v);
        for j in 0..4 {
            assert!((r[j] - f.xi[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn orthogonal_outer_product_is_conserved() {
        let f = flat_frame();
        // a = (0,0,0,1) is orthogonal to ξ♯.
        let v = PolarizationVector::metric(outer([0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 1.0]), 0);
        assert!(conservation_residual(&f, &v).iter().all(|r| r.abs() < 1e-15));
    }

    #[test]
    fn flat_round_trip() {
        let mut v = PolarizationVector::zero(3);
        v.v = outer([1.0, 2.0, 3.0, 4.0], [0.5, -1.0, 0.0, 2.0]);
        v.w = vec![1.0, -2.0, 3.0];
        assert_eq!(PolarizationVector::from_flat(&v.to_flat()), v);
    }

    #[test]
    fn basis_dimensions() {
        let f = flat_frame();
        for l in [0, 5] {
            for which in [Constraint::Harmonicity, Constraint::Conservation] {
                let b = constraint_space_basis(&f, which, l).unwrap();
                assert_eq!(b.ncols(), 6 + l);
                let a = constraint_matrix(&f, which, l);
                assert!((a * &b).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_covector_is_degenerate() {
        let f = NullCovectorFrame::new(&Metric::Minkowski, [0.0; 4], [0.0; 4]).unwrap();
        assert!(matches!(
            constraint_space_basis(&f, Constraint::Harmonicity, 0),
            Err(SymbolError::DegenerateFrame { .. })
        ));
    }

    #[test]
    fn flat_transport() {
        let m = Metric::Minkowski;
        let from = flat_frame();
        let v = from.sharp();
        let y = [2.0 * v[0], 2.0 * v[1], 2.0 * v[2], 2.0 * v[3]];
        let to = NullCovectorFrame::new(&m, y, from.xi).unwrap();
        let l = 5;
        let wave = transport_symbol(&m, &Decoupled, &from, &to, l, SourceForm::Wave).unwrap();
        assert!((wave.r.clone() - DMatrix::identity(15, 15)).amax() < 1e-15);
        assert!((wave.s - 2.0).abs() < 1e-12);
        let ein = transport_symbol(&m, &Decoupled, &from, &to, l, SourceForm::Einstein).unwrap();
        let c = constraint_space_basis(&from, Constraint::Conservation, l).unwrap();
        let s = constraint_space_basis(&to, Constraint::Harmonicity, l).unwrap();
        let image = &ein.r * &c;
        assert_eq!(numeric_rank(&image, 1e-8), 6 + l);
        assert!(inclusion_defect(&image, &s) < 1e-12);
        let mut g_only = PolarizationVector::zero(l);
        g_only.v = outer([1.0, 0.0, 2.0, 0.0], [0.0, 1.0, 1.0, 0.0]);
        assert!(ein.apply(&g_only).w.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn off_ray_frames_are_rejected() {
        let m = Metric::Minkowski;
        let from = flat_frame();
        let to = NullCovectorFrame::new(&m, [1.0, 0.0, 1.0, 0.0], from.xi).unwrap();
        assert!(matches!(
            transport_symbol(&m, &Decoupled, &from, &to, 0, SourceForm::Wave),
            Err(SymbolError::NotOnBicharacteristic { .. })
        ));
    }
}
