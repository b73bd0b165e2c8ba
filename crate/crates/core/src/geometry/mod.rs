//! Connection, curvature and stress-energy on a single global chart.

mod fields;
mod metric;

pub use fields::{FieldProfile, ScalarFieldFrame};
pub use metric::{Bump, CatalogError, Metric, MetricProvider, Mode};

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::linalg::{inverse4, to_na, M4};
use crate::scalar::{lift, seed, Dual4, Scalar};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate metric at {x:?}")]
    DegenerateMetric { x: [f64; 4] },
    #[error("metric at {x:?} has {negative} negative eigenvalues, expected 1")]
    Signature { x: [f64; 4], negative: usize },
    #[error("tensor is not symmetric (defect {defect:e})")]
    NotSymmetric { defect: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variance {
    Covariant,
    Contravariant,
}

/// Dense rank-2 tensor with index placement and a symmetry flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    pub c: M4<f64>,
    pub variance: Variance,
    pub symmetric: bool,
}

impl Tensor2 {
    pub fn new(c: M4<f64>, variance: Variance) -> Self {
        Tensor2 {
            c,
            variance,
            symmetric: false,
        }
    }

    /// Accepts `c` only if it is symmetric to `tol`, then stores the exact
    /// symmetrization.
    pub fn symmetric(c: M4<f64>, variance: Variance, tol: f64) -> Result<Self, GeometryError> {
        let mut defect = 0.0f64;
        let mut s = c;
        for i in 0..4 {
            for j in 0..4 {
                defect = defect.max((c[i][j] - c[j][i]).abs());
                s[i][j] = 0.5 * (c[i][j] + c[j][i]);
            }
        }
        if defect > tol {
            return Err(GeometryError::NotSymmetric { defect });
        }
        Ok(Tensor2 {
            c: s,
            variance,
            symmetric: true,
        })
    }

    pub fn zero(variance: Variance) -> Self {
        Tensor2 {
            c: [[0.0; 4]; 4],
            variance,
            symmetric: true,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[i][j]
    }

    /// Raises both indices of a covariant tensor with the inverse metric.
    pub fn raise(&self, ginv: &M4<f64>) -> Tensor2 {
        debug_assert_eq!(self.variance, Variance::Covariant);
        Tensor2 {
            c: sandwich(ginv, &self.c),
            variance: Variance::Contravariant,
            symmetric: self.symmetric,
        }
    }

    pub fn lower(&self, g: &M4<f64>) -> Tensor2 {
        debug_assert_eq!(self.variance, Variance::Contravariant);
        Tensor2 {
            c: sandwich(g, &self.c),
            variance: Variance::Covariant,
            symmetric: self.symmetric,
        }
    }

    /// Full contraction `a^{jk} t_{jk}` with a contravariant weight.
    pub fn trace_with(&self, a: &M4<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                s += a[i][j] * self.c[i][j];
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.c
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn max_abs_diff(&self, o: &Tensor2) -> f64 {
        let mut m = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                m = m.max((self.c[i][j] - o.c[i][j]).abs());
            }
        }
        m
    }
}

/// `a m a^T` for symmetric `a`.
fn sandwich(a: &M4<f64>, m: &M4<f64>) -> M4<f64> {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut s = 0.0;
            for p in 0..4 {
                for q in 0..4 {
                    s += a[i][p] * a[j][q] * m[p][q];
                }
            }
            out[i][j] = s;
        }
    }
    out
}

/// Christoffel symbols `Γ^k_{ij}` stored as `c[k][i][j]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub c: [[[f64; 4]; 4]; 4],
}

impl Tensor3 {
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.c[k][i][j]
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut m = 0.0f64;
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    m = m.max((self.c[k][i][j] - self.c[k][j][i]).abs());
                }
            }
        }
        m
    }
}

pub type Gamma<S> = [[[S; 4]; 4]; 4];

const PIVOT_EPS: f64 = 1e-12;

pub fn metric_inverse<S: Scalar>(g: &M4<S>, x: [f64; 4]) -> Result<M4<S>, GeometryError> {
    inverse4(g, PIVOT_EPS).ok_or(GeometryError::DegenerateMetric { x })
}

/// Metric components and their first partials `dg[p][j][k] = ∂_p g_{jk}`.
pub fn metric_with_derivatives<S: Scalar, M: MetricProvider>(
    m: &M,
    x: [S; 4],
) -> (M4<S>, [M4<S>; 4]) {
    let gd = m.eval(seed(x));
    let mut g = [[S::zero(); 4]; 4];
    let mut dg = [[[S::zero(); 4]; 4]; 4];
    for j in 0..4 {
        for k in 0..4 {
            g[j][k] = gd[j][k].v;
            for (p, dgp) in dg.iter_mut().enumerate() {
                dgp[j][k] = gd[j][k].d[p];
            }
        }
    }
    (g, dg)
}

/// Second partials `d2[p][q][j][k] = ∂_p∂_q g_{jk}`.
pub fn metric_second_derivatives<M: MetricProvider>(m: &M, x: [f64; 4]) -> [[M4<f64>; 4]; 4] {
    let inner: [Dual4<f64>; 4] = seed(x);
    let gd = m.eval(seed(inner));
    let mut out = [[[[0.0; 4]; 4]; 4]; 4];
    for j in 0..4 {
        for k in 0..4 {
            for p in 0..4 {
                for q in 0..4 {
                    out[p][q][j][k] = gd[j][k].d[p].d[q];
                }
            }
        }
    }
    out
}

pub fn check_signature<M: MetricProvider>(m: &M, x: [f64; 4]) -> Result<(), GeometryError> {
    let g = m.eval(x);
    let eig = SymmetricEigen::new(to_na(&g));
    let negative = eig.eigenvalues.iter().filter(|v| **v < 0.0).count();
    if eig.eigenvalues.iter().any(|v| v.abs() < 1e-14) {
        return Err(GeometryError::DegenerateMetric { x });
    }
    if negative != 1 {
        return Err(GeometryError::Signature { x, negative });
    }
    Ok(())
}

pub(crate) fn christoffel_generic<S: Scalar, M: MetricProvider>(
    m: &M,
    x: [S; 4],
) -> Result<(M4<S>, M4<S>, Gamma<S>), GeometryError> {
    let (g, dg) = metric_with_derivatives(m, x);
    let ginv = metric_inverse(&g, crate::scalar::values(&x))?;
    let mut gam = [[[S::zero(); 4]; 4]; 4];
    for k in 0..4 {
        for i in 0..4 {
            for j in i..4 {
                let mut s = S::zero();
                for l in 0..4 {
                    s += ginv[k][l] * (dg[i][l][j] + dg[j][l][i] - dg[l][i][j]);
                }
                let s = s.scale(0.5);
                gam[k][i][j] = s;
                gam[k][j][i] = s;
            }
        }
    }
    Ok((g, ginv, gam))
}

/// Levi-Civita connection coefficients `Γ^k_{ij}`.
pub fn christoffel<M: MetricProvider>(m: &M, x: [f64; 4]) -> Result<Tensor3, GeometryError> {
    let (_, _, c) = christoffel_generic::<f64, M>(m, x)?;
    Ok(Tensor3 { c })
}

pub(crate) fn ricci_generic<S: Scalar, M: MetricProvider>(
    m: &M,
    x: [S; 4],
) -> Result<(M4<S>, M4<S>, M4<S>), GeometryError> {
    let (gd, ginvd, gamd) = christoffel_generic::<Dual4<S>, M>(m, seed(x))?;
    let mut g = [[S::zero(); 4]; 4];
    let mut ginv = [[S::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            g[i][j] = gd[i][j].v;
            ginv[i][j] = ginvd[i][j].v;
        }
    }
    let gam = |n: usize, i: usize, j: usize| gamd[n][i][j].v;
    let mut ric = [[S::zero(); 4]; 4];
    for j in 0..4 {
        for k in j..4 {
            let mut s = S::zero();
            for n in 0..4 {
                s += gamd[n][j][k].d[n] - gamd[n][j][n].d[k];
                for mm in 0..4 {
                    s += gam(n, n, mm) * gam(mm, j, k) - gam(n, k, mm) * gam(mm, j, n);
                }
            }
            ric[j][k] = s;
            ric[k][j] = s;
        }
    }
    Ok((g, ginv, ric))
}

pub(crate) fn einstein_generic<S: Scalar, M: MetricProvider>(
    m: &M,
    x: [S; 4],
) -> Result<(M4<S>, M4<S>, M4<S>), GeometryError> {
    let (g, ginv, ric) = ricci_generic(m, x)?;
    let mut r = S::zero();
    for j in 0..4 {
        for k in 0..4 {
            r += ginv[j][k] * ric[j][k];
        }
    }
    let mut ein = ric;
    for j in 0..4 {
        for k in 0..4 {
            ein[j][k] = ric[j][k] - (r * g[j][k]).scale(0.5);
        }
    }
    Ok((g, ginv, ein))
}

pub fn ricci<M: MetricProvider>(m: &M, x: [f64; 4]) -> Result<Tensor2, GeometryError> {
    let (_, _, r) = ricci_generic::<f64, M>(m, x)?;
    Ok(Tensor2 {
        c: r,
        variance: Variance::Covariant,
        symmetric: true,
    })
}

pub fn einstein<M: MetricProvider>(m: &M, x: [f64; 4]) -> Result<Tensor2, GeometryError> {
    let (_, _, e) = einstein_generic::<f64, M>(m, x)?;
    Ok(Tensor2 {
        c: e,
        variance: Variance::Covariant,
        symmetric: true,
    })
}

fn harmonicity_generic<S: Scalar, M: MetricProvider, H: MetricProvider>(
    g: &M,
    ghat: &H,
    x: [S; 4],
) -> Result<[S; 4], GeometryError> {
    let (_, ginv, gam) = christoffel_generic(g, x)?;
    let (_, _, gamh) = christoffel_generic(ghat, x)?;
    let mut f = [S::zero(); 4];
    for (n, fn_) in f.iter_mut().enumerate() {
        for j in 0..4 {
            for k in 0..4 {
                *fn_ += ginv[j][k] * (gam[n][j][k] - gamh[n][j][k]);
            }
        }
    }
    Ok(f)
}

/// Harmonicity functions `F̂^n = g^{jk}(Γ^n_{jk} − Γ̂^n_{jk})`.
pub fn harmonicity_functions<M: MetricProvider, H: MetricProvider>(
    g: &M,
    ghat: &H,
    x: [f64; 4],
) -> Result<[f64; 4], GeometryError> {
    harmonicity_generic(g, ghat, x)
}

/// `∇̂_q F̂^n`, stored as `[q][n]`.
pub fn harmonicity_gradient<M: MetricProvider, H: MetricProvider>(
    g: &M,
    ghat: &H,
    x: [f64; 4],
) -> Result<M4<f64>, GeometryError> {
    let fd = harmonicity_generic(g, ghat, seed(x))?;
    let gamh = christoffel(ghat, x)?;
    let mut out = [[0.0; 4]; 4];
    for q in 0..4 {
        for n in 0..4 {
            let mut s = fd[n].d[q];
            for mm in 0..4 {
                s += gamh.c[n][q][mm] * fd[mm].v;
            }
            out[q][n] = s;
        }
    }
    Ok(out)
}

/// The ĝ-reduced Ricci tensor `Ric − ½(g_{pn}∇̂_q F̂^n + g_{qn}∇̂_p F̂^n)`.
pub fn reduced_ricci<M: MetricProvider, H: MetricProvider>(
    g: &M,
    ghat: &H,
    x: [f64; 4],
) -> Result<Tensor2, GeometryError> {
    let ric = ricci(g, x)?;
    let gm = g.eval(x);
    let nab = harmonicity_gradient(g, ghat, x)?;
    let mut c = ric.c;
    for p in 0..4 {
        for q in 0..4 {
            let mut s = 0.0;
            for n in 0..4 {
                s += gm[p][n] * nab[q][n] + gm[q][n] * nab[p][n];
            }
            c[p][q] -= 0.5 * s;
        }
    }
    Ok(Tensor2 {
        c,
        variance: Variance::Covariant,
        symmetric: true,
    })
}

/// The ĝ-reduced Einstein tensor: reduced Ricci minus half its trace times `g`.
pub fn reduced_einstein<M: MetricProvider, H: MetricProvider>(
    g: &M,
    ghat: &H,
    x: [f64; 4],
) -> Result<Tensor2, GeometryError> {
    let rr = reduced_ricci(g, ghat, x)?;
    let gm = g.eval(x);
    let ginv = metric_inverse(&gm, x)?;
    let tr = rr.trace_with(&ginv);
    let mut c = rr.c;
    for p in 0..4 {
        for q in 0..4 {
            c[p][q] -= 0.5 * tr * gm[p][q];
        }
    }
    Ok(Tensor2 {
        c,
        variance: Variance::Covariant,
        symmetric: true,
    })
}

pub(crate) fn stress_energy_generic<S: Scalar, M: MetricProvider>(
    m: &M,
    fields: &ScalarFieldFrame,
    x: [S; 4],
) -> Result<M4<S>, GeometryError> {
    let g = m.eval(x);
    let ginv = metric_inverse(&g, crate::scalar::values(&x))?;
    let mut t = [[S::zero(); 4]; 4];
    let xs = seed(x);
    let mass2 = fields.mass * fields.mass;
    for f in &fields.fields {
        let p = f.eval(xs);
        let d = p.d;
        let mut kin = S::zero();
        for a in 0..4 {
            for b in 0..4 {
                kin += ginv[a][b] * d[a] * d[b];
            }
        }
        let pot = (p.v * p.v).scale(mass2);
        for j in 0..4 {
            for k in 0..4 {
                t[j][k] += d[j] * d[k] - ((kin + pot) * g[j][k]).scale(0.5);
            }
        }
    }
    Ok(t)
}

/// `T_{jk} = Σ_ℓ (∂_jφ_ℓ∂_kφ_ℓ − ½ g_{jk} g^{pq}∂_pφ_ℓ∂_qφ_ℓ − ½ m²φ_ℓ² g_{jk})`.
pub fn stress_energy<M: MetricProvider>(
    m: &M,
    fields: &ScalarFieldFrame,
    x: [f64; 4],
) -> Result<Tensor2, GeometryError> {
    let c = stress_energy_generic(m, fields, x)?;
    Ok(Tensor2 {
        c,
        variance: Variance::Covariant,
        symmetric: true,
    })
}

/// A covariant rank-2 field that can be evaluated on dual numbers.
pub trait TensorField: Sync {
    fn eval<S: Scalar>(&self, x: [S; 4]) -> Result<M4<S>, GeometryError>;
}

/// The metric itself as a tensor field.
pub struct MetricField<'a, M>(pub &'a M);

impl<M: MetricProvider> TensorField for MetricField<'_, M> {
    fn eval<S: Scalar>(&self, x: [S; 4]) -> Result<M4<S>, GeometryError> {
        Ok(self.0.eval(x))
    }
}

pub struct EinsteinField<'a, M>(pub &'a M);

impl<M: MetricProvider> TensorField for EinsteinField<'_, M> {
    fn eval<S: Scalar>(&self, x: [S; 4]) -> Result<M4<S>, GeometryError> {
        einstein_generic(self.0, x).map(|(_, _, e)| e)
    }
}

pub struct StressEnergyField<'a, M> {
    pub metric: &'a M,
    pub fields: &'a ScalarFieldFrame,
}

impl<M: MetricProvider> TensorField for StressEnergyField<'_, M> {
    fn eval<S: Scalar>(&self, x: [S; 4]) -> Result<M4<S>, GeometryError> {
        stress_energy_generic(self.metric, self.fields, x)
    }
}

/// A chart-constant tensor.
pub struct ConstantField(pub M4<f64>);

impl TensorField for ConstantField {
    fn eval<S: Scalar>(&self, _x: [S; 4]) -> Result<M4<S>, GeometryError> {
        let mut out = [[S::zero(); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = S::from_f64(self.0[i][j]);
            }
        }
        Ok(out)
    }
}

/// Covariant divergence `(div_g T)_k = g^{nj} ∇_n T_{jk}`.
pub fn divergence<M: MetricProvider, T: TensorField>(
    m: &M,
    t: &T,
    x: [f64; 4],
) -> Result<[f64; 4], GeometryError> {
    let (_, ginv, gam) = christoffel_generic::<f64, M>(m, x)?;
    let td = t.eval(seed(x))?;
    let mut out = [0.0; 4];
    for (k, ok) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for n in 0..4 {
            for j in 0..4 {
                let mut nab = td[j][k].d[n];
                for mm in 0..4 {
                    nab -= gam[mm][n][j] * td[mm][k].v + gam[mm][n][k] * td[j][mm].v;
                }
                s += ginv[n][j] * nab;
            }
        }
        *ok = s;
    }
    Ok(out)
}

/// Metric components at a plain point, promoted to any scalar type.
pub fn metric_at<S: Scalar, M: MetricProvider>(m: &M, x: [f64; 4]) -> M4<S> {
    m.eval(lift::<S>(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_christoffel<M: MetricProvider>(m: &M, x: [f64; 4], h: f64) -> [[[f64; 4]; 4]; 4] {
        let g = m.eval(x);
        let ginv = to_na(&g).try_inverse().unwrap();
        let mut dg = [[[0.0; 4]; 4]; 4];
        for p in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[p] += h;
            xm[p] -= h;
            let gp = m.eval(xp);
            let gm = m.eval(xm);
            for j in 0..4 {
                for k in 0..4 {
                    dg[p][j][k] = (gp[j][k] - gm[j][k]) / (2.0 * h);
                }
            }
        }
        let mut out = [[[0.0; 4]; 4]; 4];
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    for l in 0..4 {
                        out[k][i][j] +=
                            0.5 * ginv[(k, l)] * (dg[i][l][j] + dg[j][l][i] - dg[l][i][j]);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn minkowski_connection_vanishes() {
        let c = christoffel(&Metric::Minkowski, [0.3, 1.0, -2.0, 0.5]).unwrap();
        assert!(c.c.iter().flatten().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn desitter_connection_at_origin() {
        let c = christoffel(&Metric::DesitterLike, [0.0; 4]).unwrap();
        assert!((c.get(0, 1, 1) - 1.0).abs() < 1e-14);
        assert!((c.get(1, 0, 1) - 1.0).abs() < 1e-14);
        assert!((c.get(1, 1, 0) - 1.0).abs() < 1e-14);
        let fd = fd_christoffel(&Metric::DesitterLike, [0.0; 4], 1e-5);
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    assert!((c.c[k][i][j] - fd[k][i][j]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn connection_is_symmetric_on_all_metrics() {
        for m in Metric::bundled() {
            let c = christoffel(&m, [0.1, 0.2, -0.3, 0.15]).unwrap();
            assert_eq!(c.symmetry_defect(), 0.0, "{m}");
        }
    }

    #[test]
    fn desitter_ricci_is_three_g() {
        for x in [[0.0; 4], [0.4, 0.1, -0.2, 0.3]] {
            let r = ricci(&Metric::DesitterLike, x).unwrap();
            let g = Metric::DesitterLike.eval(x);
            for i in 0..4 {
                for j in 0..4 {
                    assert!((r.c[i][j] - 3.0 * g[i][j]).abs() < 1e-12);
                }
            }
            let e = einstein(&Metric::DesitterLike, x).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    assert!((e.c[i][j] + 3.0 * g[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn einstein_trace_is_minus_ricci_trace() {
        let m = Metric::perturbed(Metric::Minkowski, 0.05, 7);
        let x = [0.2, -0.1, 0.3, 0.05];
        let ginv = to_na(&m.eval(x)).try_inverse().unwrap();
        let ginv = crate::linalg::from_na(&ginv);
        let r = ricci(&m, x).unwrap().trace_with(&ginv);
        let e = einstein(&m, x).unwrap().trace_with(&ginv);
        assert!((r + e).abs() < 1e-12);
    }

    #[test]
    fn metric_is_divergence_free() {
        for m in Metric::bundled() {
            let d = divergence(&m, &MetricField(&m), [0.1, 0.3, -0.2, 0.4]).unwrap();
            assert!(d.iter().all(|v| v.abs() < 1e-12), "{m}: {d:?}");
        }
    }

    #[test]
    fn raise_then_lower_is_identity() {
        let m = Metric::perturbed(Metric::Minkowski, 0.05, 7);
        let x = [0.2, -0.1, 0.3, 0.05];
        let g = m.eval(x);
        let ginv = metric_inverse(&g, x).unwrap();
        let t = ricci(&m, x).unwrap();
        let back = t.raise(&ginv).lower(&g);
        assert!(back.max_abs_diff(&t) < 1e-13 * (1.0 + t.max_abs()));
    }

    #[test]
    fn symmetric_constructor_rejects_asymmetry() {
        let mut c = [[0.0; 4]; 4];
        c[0][1] = 1.0;
        assert!(Tensor2::symmetric(c, Variance::Covariant, 1e-12).is_err());
        c[1][0] = 1.0;
        assert!(Tensor2::symmetric(c, Variance::Covariant, 1e-12).unwrap().symmetric);
    }

    #[test]
    fn degenerate_metric_is_reported() {
        struct Flat0;
        impl MetricProvider for Flat0 {
            fn eval<S: Scalar>(&self, _x: [S; 4]) -> [[S; 4]; 4] {
                let mut g = [[S::zero(); 4]; 4];
                g[1][1] = S::one();
                g
            }
        }
        assert!(matches!(
            christoffel(&Flat0, [0.0; 4]),
            Err(GeometryError::DegenerateMetric { .. })
        ));
        assert!(check_signature(&Flat0, [0.0; 4]).is_err());
    }

    #[test]
    fn bundled_metrics_are_lorentzian() {
        for m in Metric::bundled() {
            for x in [[0.0; 4], [0.8, 0.5, -0.6, 0.7], [-0.9, -0.7, 0.2, -0.4]] {
                check_signature(&m, x).unwrap();
            }
        }
    }

    #[test]
    fn bianchi_identity_on_bundled_metrics() {
        for m in Metric::bundled() {
            for x in [[0.0; 4], [0.3, -0.2, 0.5, 0.1], [-0.6, 0.4, 0.0, -0.3]] {
                let d = divergence(&m, &EinsteinField(&m), x).unwrap();
                assert!(d.iter().all(|v| v.abs() < 1e-9), "{m} at {x:?}: {d:?}");
            }
        }
    }

    #[test]
    fn reduced_einstein_with_itself_is_einstein() {
        for m in Metric::bundled() {
            let x = [0.2, 0.1, -0.4, 0.3];
            let e = einstein(&m, x).unwrap();
            let r = reduced_einstein(&m, &m, x).unwrap();
            assert!(r.max_abs_diff(&e) < 1e-12, "{m}");
        }
    }

    #[test]
    fn harmonicity_vanishes_for_identical_metrics() {
        let m = Metric::perturbed(Metric::DesitterLike, 0.02, 11);
        let f = harmonicity_functions(&m, &m, [0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stress_energy_of_constant_field() {
        let fields = ScalarFieldFrame {
            fields: vec![FieldProfile::Affine {
                c0: 2.0,
                c: [0.0; 4],
            }],
            mass: 1.5,
        };
        let t = stress_energy(&Metric::Minkowski, &fields, [0.3, 0.1, 0.0, -0.2]).unwrap();
        let expect = -0.5 * 1.5 * 1.5 * 4.0;
        assert!((t.get(0, 0) + expect).abs() < 1e-14);
        for i in 1..4 {
            assert!((t.get(i, i) - expect).abs() < 1e-14);
        }
    }
}
