//! Small dense linear algebra: exact Gaussian elimination over any field
//! scalar, and a Jacobi eigensolver for the tiny symmetric matrices this
//! crate produces (5x5 up to 15x15 Gram matrices).

use thiserror::Error;

use crate::scalar::{Field, Real};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinalgError {
    #[error("singular linear system")]
    Singular,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("eigensolver did not converge")]
    NotConverged,
    #[error("dimension mismatch")]
    Dimension,
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
///
/// A pivot whose magnitude is `<= min_pivot` is treated as zero. Pass
/// `T::zero()` for exact scalars so only true zeros are rejected.
pub fn solve_linear<T: Field>(
    mut a: Vec<Vec<T>>,
    mut b: Vec<T>,
    min_pivot: &T,
) -> Result<Vec<T>, LinalgError> {
    let n = a.len();
    if b.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(LinalgError::Dimension);
    }
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col][col].abs();
        for row in col + 1..n {
            let mag = a[row][col].abs();
            if mag > best {
                best = mag;
                pivot = row;
            }
        }
        if best <= *min_pivot {
            return Err(LinalgError::Singular);
        }
        if pivot != col {
            a.swap(pivot, col);
            b.swap(pivot, col);
        }
        let diag = a[col][col].clone();
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col].clone() / diag.clone();
            if factor.is_zero() {
                continue;
            }
            for k in col..n {
                let sub = factor.clone() * a[col][k].clone();
                a[row][k] = a[row][k].clone() - sub;
            }
            let sub = factor * b[col].clone();
            b[row] = b[row].clone() - sub;
        }
    }
    Ok(b.into_iter()
        .zip(a.into_iter().enumerate().map(|(i, row)| row[i].clone()))
        .map(|(rhs, diag)| rhs / diag)
        .collect())
}

/// Inverse of a square matrix via column-wise elimination.
pub fn invert<T: Field>(m: &[Vec<T>], min_pivot: &T) -> Result<Vec<Vec<T>>, LinalgError> {
    let n = m.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        cols.push(solve_linear(m.to_vec(), e, min_pivot)?);
    }
    // cols[j] is the j-th column of the inverse
    let mut inv = vec![vec![T::zero(); n]; n];
    for (j, col) in cols.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            inv[i][j] = v;
        }
    }
    Ok(inv)
}

/// Determinant by elimination with row pivoting.
pub fn determinant<T: Field>(m: &[Vec<T>]) -> T {
    let n = m.len();
    let mut a: Vec<Vec<T>> = m.to_vec();
    let mut det = T::one();
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col][col].abs();
        for row in col + 1..n {
            let mag = a[row][col].abs();
            if mag > best {
                best = mag;
                pivot = row;
            }
        }
        if a[pivot][col].is_zero() {
            return T::zero();
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det = det * a[col][col].clone();
        let diag = a[col][col].clone();
        for row in col + 1..n {
            let factor = a[row][col].clone() / diag.clone();
            if factor.is_zero() {
                continue;
            }
            for k in col..n {
                let sub = factor.clone() * a[col][k].clone();
                a[row][k] = a[row][k].clone() - sub;
            }
        }
    }
    det
}

/// Eigendecomposition of a small symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<T>>,
}

const MAX_JACOBI_SWEEPS: usize = 128;

/// Cyclic Jacobi on a symmetric matrix. Intended for n <= ~20.
pub fn sym_eigen<T: Real>(a: &[Vec<T>]) -> Result<SymEigen<T>, LinalgError> {
    let n = a.len();
    if a.iter().any(|row| row.len() != n) {
        return Err(LinalgError::Dimension);
    }
    let mut scale = T::zero();
    for row in a {
        for v in row {
            scale = scale.max(v.abs());
        }
    }
    let sym_tol = scale * T::epsilon() * T::from_usize(64 * n).unwrap();
    for i in 0..n {
        for j in i + 1..n {
            if (a[i][j] - a[j][i]).abs() > sym_tol {
                return Err(LinalgError::NotSymmetric);
            }
        }
    }

    let mut m: Vec<Vec<T>> = a.to_vec();
    // symmetrize so roundoff in the input cannot bias the sweeps
    for i in 0..n {
        for j in i + 1..n {
            let avg = (m[i][j] + m[j][i]) / (T::one() + T::one());
            m[i][j] = avg;
            m[j][i] = avg;
        }
    }
    let mut v = vec![vec![T::zero(); n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }
    if n <= 1 {
        return Ok(collect_eigen(m, v));
    }

    let off_tol = scale * T::epsilon();
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off = off.max(m[i][j].abs());
            }
        }
        if off <= off_tol {
            return Ok(collect_eigen(m, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq.abs() <= off_tol {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (apq + apq);
                let t = {
                    let root = (theta * theta + T::one()).sqrt();
                    if theta >= T::zero() {
                        T::one() / (theta + root)
                    } else {
                        -T::one() / (-theta + root)
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(LinalgError::NotConverged)
}

fn collect_eigen<T: Real>(m: Vec<Vec<T>>, v: Vec<Vec<T>>) -> SymEigen<T> {
    let n = m.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i][i].partial_cmp(&m[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&col| {
            let mut vec: Vec<T> = (0..n).map(|row| v[row][col]).collect();
            fix_sign(&mut vec);
            vec
        })
        .collect();
    SymEigen { values, vectors }
}

/// Sign convention: the component of largest magnitude is made positive
/// (first such component on ties).
pub fn fix_sign<T: Real>(v: &mut [T]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < T::zero() {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Unit eigenvector for the smallest eigenvalue of a symmetric PSD matrix.
pub fn smallest_eigenpair<T: Real>(a: &[Vec<T>]) -> Result<(T, Vec<T>), LinalgError> {
    let eig = sym_eigen(a)?;
    Ok((eig.values[0], eig.vectors[0].clone()))
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}
