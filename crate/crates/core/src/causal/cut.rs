use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use super::geodesic::{flow_monitored, flow_to, Control, FlowOptions};
use super::shooting::{separation_avoiding, TauOptions};
use super::CausalError;
use crate::geometry::MetricProvider;
use crate::scalar::{lift, Dual4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutKind {
    Conjugate,
    Competing,
    /// No cut point before the horizon `s_max`.
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutPoint {
    pub rho: f64,
    pub kind: CutKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutOptions {
    pub s_max: f64,
    /// Search for non-conjugate cut points through competing geodesics.
    pub competing: bool,
    pub grid: usize,
    /// Starting velocities per `τ` evaluation in the competing search.
    pub starts: usize,
    pub tau_threshold: f64,
    pub tol: f64,
    pub flow: FlowOptions,
}

impl Default for CutOptions {
    fn default() -> Self {
        CutOptions {
            s_max: 4.0,
            competing: true,
            grid: 40,
            starts: 8,
            tau_threshold: 1e-6,
            tol: 1e-9,
            flow: FlowOptions {
                tol: 1e-11,
                h_max: 0.05,
                ..FlowOptions::default()
            },
        }
    }
}

fn dual_start(v: [f64; 4]) -> [Dual4<f64>; 4] {
    [
        Dual4::variable(v[0], 0),
        Dual4::variable(v[1], 1),
        Dual4::variable(v[2], 2),
        Dual4::variable(v[3], 3),
    ]
}

fn jacobian(x: &[Dual4<f64>; 4]) -> Matrix4<f64> {
    Matrix4::from_fn(|i, k| x[i].d[k])
}

/// `det d(exp_x)` at `s v`; equals 1 in flat space and vanishes exactly at
/// points conjugate to `x` along `s ↦ exp_x(s v)`.
pub fn jacobi_determinant<M: MetricProvider>(
    m: &M,
    x: [f64; 4],
    v: [f64; 4],
    s: f64,
    flow: &FlowOptions,
) -> Result<f64, CausalError> {
    if s == 0.0 {
        return Ok(1.0);
    }
    let (p, _) = flow_to(m, lift::<Dual4<f64>>(x), dual_start(v), s, flow)?;
    Ok((jacobian(&p) / s).determinant())
}

fn min_singular(j: &Matrix4<f64>, s: f64) -> f64 {
    (j / s).singular_values().min()
}

/// First conjugate parameter in `(0, s_max]` along `exp_x(s v)`.
///
/// Simple zeros show up as sign changes of the determinant. Even-order zeros
/// (symmetric focusing) are caught as near-vanishing local minima of the
/// smallest singular value.
pub fn first_conjugate<M: MetricProvider>(
    m: &M,
    x: [f64; 4],
    v: [f64; 4],
    s_max: f64,
    opts: &CutOptions,
) -> Result<Option<f64>, CausalError> {
    if m.is_flat() {
        return Ok(None);
    }
    let s_min = 1e-3 * s_max.abs().max(1e-3);
    let mut prev: Option<(f64, f64, f64)> = None;
    let mut prev2: Option<f64> = None;
    let mut bracket: Option<(f64, f64, bool)> = None;
    let mon = |s: f64, p: &[Dual4<f64>; 4], _v: &[Dual4<f64>; 4]| {
        if s < s_min {
            return Control::Continue;
        }
        let j = jacobian(p);
        let det = (j / s).determinant();
        let sv = min_singular(&j, s);
        if let Some((ps, pdet, psv)) = prev {
            if pdet > 0.0 && det <= 0.0 {
                bracket = Some((ps, s, true));
                return Control::Stop;
            }
            if let Some(pp) = prev2 {
                if psv < pp && psv <= sv && psv < 0.05 {
                    bracket = Some((ps, s, false));
                    return Control::Stop;
                }
            }
            prev2 = Some(psv);
        }
        prev = Some((s, det, sv));
        Control::Continue
    };
    flow_monitored(m, lift::<Dual4<f64>>(x), dual_start(v), s_max, &opts.flow, mon)?;
    let Some((lo, hi, sign_change)) = bracket else {
        return Ok(None);
    };
    if sign_change {
        let (mut lo, mut hi) = (lo, hi);
        while hi - lo > opts.tol {
            let mid = 0.5 * (lo + hi);
            if jacobi_determinant(m, x, v, mid, &opts.flow)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Ok(Some(0.5 * (lo + hi)));
    }
    // Golden-section search on the smallest singular value; the bracket is
    // widened by one sampling step on the left.
    let sv = |s: f64| -> Result<f64, CausalError> {
        let (p, _) = flow_to(m, lift::<Dual4<f64>>(x), dual_start(v), s, &opts.flow)?;
        Ok(min_singular(&jacobian(&p), s))
    };
    let width = hi - lo;
    let (mut a, mut b) = ((lo - width).max(s_min), hi);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (sv(c)?, sv(d)?);
    while b - a > opts.tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = sv(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = sv(d)?;
        }
    }
    let s = 0.5 * (a + b);
    if sv(s)? < 1e-4 {
        Ok(Some(s))
    } else {
        Ok(None)
    }
}

/// The cut parameter `ρ(x, ξ)` of a future null geodesic.
pub fn cut_locus<M: MetricProvider>(
    m: &M,
    x: [f64; 4],
    xi: [f64; 4],
    opts: &CutOptions,
) -> Result<CutPoint, CausalError> {
    if m.is_flat() {
        return Ok(CutPoint {
            rho: opts.s_max,
            kind: CutKind::Horizon,
        });
    }
    let conj = first_conjugate(m, x, xi, opts.s_max, opts)?;
    let limit = conj.unwrap_or(opts.s_max);
    let mut best = match conj {
        Some(rho) => CutPoint {
            rho,
            kind: CutKind::Conjugate,
        },
        None => CutPoint {
            rho: opts.s_max,
            kind: CutKind::Horizon,
        },
    };
    if opts.competing && opts.grid > 0 {
        let tau_opts = TauOptions {
            flow: opts.flow,
            ring: opts.starts,
            ..TauOptions::default()
        };
        let timelike = |s: f64| -> Result<bool, CausalError> {
            let (p, _) = flow_to(m, x, xi, s, &opts.flow)?;
            let own = [s * xi[0], s * xi[1], s * xi[2], s * xi[3]];
            Ok(separation_avoiding(m, x, p, Some(own), &tau_opts) > opts.tau_threshold)
        };
        let ds = limit / opts.grid as f64;
        let mut lo = 0.0;
        for i in 1..=opts.grid {
            let s = i as f64 * ds;
            if s >= limit {
                break;
            }
            if timelike(s)? {
                let mut hi = s;
                while hi - lo > opts.tol.max(1e-7) {
                    let mid = 0.5 * (lo + hi);
                    if timelike(mid)? {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let rho = 0.5 * (lo + hi);
                if rho < best.rho {
                    best = CutPoint {
                        rho,
                        kind: CutKind::Competing,
                    };
                }
                break;
            }
            lo = s;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Metric;

    #[test]
    fn minkowski_has_no_cut_point() {
        let c = cut_locus(
            &Metric::Minkowski,
            [0.0; 4],
            [1.0, 1.0, 0.0, 0.0],
            &CutOptions::default(),
        )
        .unwrap();
        assert_eq!(c.kind, CutKind::Horizon);
        assert_eq!(
            jacobi_determinant(&Metric::Minkowski, [0.0; 4], [1.0, 0.6, 0.8, 0.0], 2.0, &FlowOptions::default())
                .unwrap(),
            1.0
        );
    }

    #[test]
    fn lens_focuses_off_axis_ray() {
        let m = Metric::lens(0.6, 0.5);
        let x = [0.0, -1.5, 0.05, 0.0];
        let n = 1.0 + 0.6 * (-(1.5f64 * 1.5 + 0.0025) / 0.25).exp();
        let xi = [n, 1.0, 0.0, 0.0];
        let opts = CutOptions {
            competing: false,
            ..CutOptions::default()
        };
        let c = first_conjugate(&m, x, xi, 4.0, &opts).unwrap();
        let s = c.expect("lens should focus");
        assert!(s > 1.0 && s < 4.0, "{s}");
        assert!(jacobi_determinant(&m, x, xi, s, &opts.flow).unwrap().abs() < 1e-6);
    }
}
