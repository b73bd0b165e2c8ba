use nalgebra::{DMatrix, DVector, Matrix4};

use crate::scalar::Scalar;

pub type M4<S> = [[S; 4]; 4];

/// Inverse of a 4x4 matrix over any scalar, by Gauss-Jordan with partial pivoting
/// on the real parts. Returns `None` when a pivot underflows `eps`.
pub fn inverse4<S: Scalar>(m: &M4<S>, eps: f64) -> Option<M4<S>> {
    let mut a = *m;
    let mut inv = [[S::zero(); 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = S::one();
    }
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.re().abs()))
        .max(1e-300);
    for col in 0..4 {
        let mut piv = col;
        for r in col + 1..4 {
            if a[r][col].re().abs() > a[piv][col].re().abs() {
                piv = r;
            }
        }
        if a[piv][col].re().abs() <= eps * scale {
            return None;
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let p = S::one() / a[col][col];
        for k in 0..4 {
            a[col][k] = a[col][k] * p;
            inv[col][k] = inv[col][k] * p;
        }
        for r in 0..4 {
            if r == col {
                continue;
            }
            let f = a[r][col];
            for k in 0..4 {
                a[r][k] = a[r][k] - f * a[col][k];
                inv[r][k] = inv[r][k] - f * inv[col][k];
            }
        }
    }
    Some(inv)
}

pub fn to_na(m: &M4<f64>) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| m[i][j])
}

pub fn from_na(m: &Matrix4<f64>) -> M4<f64> {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

pub fn mat_vec(m: &M4<f64>, v: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i] += m[i][j] * v[j];
        }
    }
    out
}

pub fn quad(m: &M4<f64>, u: &[f64; 4], v: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            s += m[i][j] * u[i] * v[j];
        }
    }
    s
}

pub fn norm4(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sub4(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

pub fn add4(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

pub fn axpy4(a: f64, x: &[f64; 4], y: &[f64; 4]) -> [f64; 4] {
    [a * x[0] + y[0], a * x[1] + y[1], a * x[2] + y[2], a * x[3] + y[3]]
}

pub fn dist4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    norm4(&sub4(a, b))
}

/// Numeric rank with a threshold relative to the largest singular value.
pub fn numeric_rank(m: &DMatrix<f64>, rel: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel * smax).count()
}

/// Orthonormal basis of the kernel of `m`, as columns. Singular values at or
/// below `rel * ‖m‖` count as zero.
pub fn kernel_basis(m: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let n = m.ncols();
    // Pad with zero rows so the thin SVD exposes the full right singular basis.
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = rel * smax.max(f64::MIN_POSITIVE);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] <= cut)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the column space of `m`.
pub fn range_basis(m: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested left singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<DVector<f64>> = (0..svd.singular_values.len())
        .filter(|&i| smax > 0.0 && svd.singular_values[i] > rel * smax)
        .map(|i| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Largest distance from a column of `a` to the span of the orthonormal columns of `b`.
pub fn inclusion_defect(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for c in a.column_iter() {
        let proj = b * (b.transpose() * c);
        worst = worst.max((c - proj).norm());
    }
    worst
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_matches_nalgebra() {
        let m = [
            [2.0, 0.3, -0.1, 0.0],
            [0.3, -1.5, 0.2, 0.4],
            [-0.1, 0.2, 1.1, 0.0],
            [0.0, 0.4, 0.0, 0.9],
        ];
        let inv = inverse4(&m, 1e-14).unwrap();
        let reference = to_na(&m).try_inverse().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((inv[i][j] - reference[(i, j)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn singular_is_rejected() {
        let m = [[1.0, 2.0, 0.0, 0.0], [2.0, 4.0, 0.0, 0.0], [0.0; 4], [0.0; 4]];
        assert!(inverse4(&m, 1e-12).is_none());
    }

    #[test]
    fn kernel_of_rank_one_map() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let k = kernel_basis(&m, 1e-10);
        assert_eq!(k.ncols(), 2);
        assert!((&m * &k).norm() < 1e-14);
        assert_eq!(numeric_rank(&m, 1e-10), 1);
    }
}
