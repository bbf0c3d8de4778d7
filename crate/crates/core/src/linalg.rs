//! Small dense linear algebra over [`Scalar`].

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
pub type Matrix<S> = Vec<Vec<S>>;

pub fn identity<S: Scalar>(n: usize) -> Matrix<S> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { S::one() } else { S::zero() }).collect())
        .collect()
}

pub fn zeros<S: Scalar>(rows: usize, cols: usize) -> Matrix<S> {
    vec![vec![S::zero(); cols]; rows]
}

pub fn mat_vec<S: Scalar>(a: &Matrix<S>, v: &[S]) -> Vec<S> {
    a.iter().map(|row| dot(row, v)).collect()
}

pub fn mat_mul<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>) -> Matrix<S> {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    row.iter()
                        .zip(b)
                        .fold(S::zero(), |acc, (x, brow)| acc + x.clone() * brow[j].clone())
                })
                .collect()
        })
        .collect()
}

pub fn transpose<S: Scalar>(a: &Matrix<S>) -> Matrix<S> {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|r| r[j].clone()).collect()).collect()
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

pub fn add<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.clone() + y.clone()).collect()
}

pub fn sub<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.clone() - y.clone()).collect()
}

pub fn scale<S: Scalar>(c: &S, a: &[S]) -> Vec<S> {
    a.iter().map(|x| c.clone() * x.clone()).collect()
}

/// Euclidean norm computed in `f64`.
pub fn norm<S: Scalar>(v: &[S]) -> f64 {
    v.iter().map(|x| x.to_f64().powi(2)).sum::<f64>().sqrt()
}

/// Solves `A X = B` by Gaussian elimination with magnitude pivoting.
pub fn solve<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>) -> Result<Matrix<S>> {
    let n = a.len();
    if a.iter().any(|r| r.len() != n) || b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.len(),
        });
    }
    let cols = b.first().map_or(0, Vec::len);
    let mut m: Matrix<S> = a
        .iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().chain(rb).cloned().collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .filter(|&r| !m[r][col].is_zero())
            .max_by(|&x, &y| m[x][col].magnitude().total_cmp(&m[y][col].magnitude()))
            .ok_or(Error::Singular)?;
        m.swap(col, pivot);
        let p = m[col][col].clone();
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let f = m[r][col].try_div(&p)?;
            for c in col..n + cols {
                let v = m[col][c].clone();
                m[r][c] = m[r][c].clone() - f.clone() * v;
            }
        }
    }
    (0..n)
        .map(|r| {
            (0..cols)
                .map(|c| m[r][n + c].try_div(&m[r][r]).map_err(Error::from))
                .collect()
        })
        .collect()
}

pub fn solve_vec<S: Scalar>(a: &Matrix<S>, b: &[S]) -> Result<Vec<S>> {
    let rhs = b.iter().map(|v| vec![v.clone()]).collect();
    Ok(solve(a, &rhs)?.into_iter().map(|mut r| r.remove(0)).collect())
}

pub fn inverse<S: Scalar>(a: &Matrix<S>) -> Result<Matrix<S>> {
    solve(a, &identity(a.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn q(p: i64) -> Rational {
        Rational::from_integer(p.into())
    }

    #[test]
    fn exact_inverse() {
        let a = vec![vec![q(2), q(1)], vec![q(1), q(1)]];
        let inv = inverse(&a).unwrap();
        assert_eq!(mat_mul(&a, &inv), identity(2));
        assert_eq!(inv, vec![vec![q(1), q(-1)], vec![q(-1), q(2)]]);
    }

    #[test]
    fn singular_is_reported() {
        let a = vec![vec![q(1), q(2)], vec![q(2), q(4)]];
        assert_eq!(inverse(&a), Err(Error::Singular));
    }

    #[test]
    fn needs_pivoting() {
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(solve_vec(&a, &[3.0, 4.0]).unwrap(), vec![4.0, 3.0]);
    }
}
