//! Small dense matrices and Householder-QR least squares.
//!
//! Designs here are tall and skinny (at most a few hundred rows, at most six
//! columns), so a straightforward row-major implementation is enough.

// Index loops read closer to the textbook algorithms here.
#![allow(clippy::needless_range_loop)]

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }
}

/// Solution of a (weighted) least-squares problem.
#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    pub coefficients: Vec<T>,
    /// `(X' W X)^{-1}`.
    pub gram_inverse: Matrix<T>,
}

impl<T: Scalar> LeastSquares<T> {
    /// Linear weights `l_i` such that coefficient `j` equals `sum_i l_i y_i`.
    pub fn coefficient_weights(&self, design: &Matrix<T>, weights: Option<&[T]>, j: usize) -> Vec<T> {
        let k = design.cols();
        (0..design.rows())
            .map(|i| {
                let x = design.row(i);
                let mut acc = T::zero();
                for c in 0..k {
                    acc += self.gram_inverse.get(j, c) * x[c];
                }
                match weights {
                    Some(w) => acc * w[i],
                    None => acc,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankDeficient;

/// Minimizes `sum_i w_i (y_i - x_i' b)^2` via Householder QR of `sqrt(W) X`.
///
/// Weights must be nonnegative. Rows with zero weight contribute nothing.
pub fn least_squares<T: Scalar>(
    design: &Matrix<T>,
    y: &[T],
    weights: Option<&[T]>,
) -> Result<LeastSquares<T>, RankDeficient> {
    let n = design.rows();
    let k = design.cols();
    assert_eq!(y.len(), n);
    if n < k || k == 0 {
        return Err(RankDeficient);
    }

    let mut a = design.clone();
    let mut b = y.to_vec();
    if let Some(w) = weights {
        assert_eq!(w.len(), n);
        for i in 0..n {
            let s = w[i].sqrt();
            for j in 0..k {
                a.set(i, j, a.get(i, j) * s);
            }
            b[i] *= s;
        }
    }

    // Column scales for the rank test.
    let col_norm: Vec<T> = (0..k)
        .map(|j| (0..n).map(|i| a.get(i, j).powi(2)).sum::<T>().sqrt())
        .collect();

    let mut v = vec![T::zero(); n];
    for j in 0..k {
        let norm = (j..n).map(|i| a.get(i, j).powi(2)).sum::<T>().sqrt();
        if norm == T::zero() {
            return Err(RankDeficient);
        }
        let ajj = a.get(j, j);
        let alpha = if ajj >= T::zero() { -norm } else { norm };
        for i in j..n {
            v[i] = a.get(i, j);
        }
        v[j] -= alpha;
        let vnorm2: T = (j..n).map(|i| v[i] * v[i]).sum();
        if vnorm2 > T::zero() {
            let two = T::of(2.0);
            for c in j..k {
                let dot: T = (j..n).map(|i| v[i] * a.get(i, c)).sum();
                let f = two * dot / vnorm2;
                for i in j..n {
                    a.set(i, c, a.get(i, c) - f * v[i]);
                }
            }
            let dot: T = (j..n).map(|i| v[i] * b[i]).sum();
            let f = two * dot / vnorm2;
            for i in j..n {
                b[i] -= f * v[i];
            }
        }
    }

    let tol = T::epsilon() * T::of_usize(n.max(k)) * T::of(16.0);
    for j in 0..k {
        if a.get(j, j).abs() <= tol * col_norm[j] {
            return Err(RankDeficient);
        }
    }

    // Back substitution for R b = Q'y.
    let mut coef = vec![T::zero(); k];
    for j in (0..k).rev() {
        let mut s = b[j];
        for c in j + 1..k {
            s -= a.get(j, c) * coef[c];
        }
        coef[j] = s / a.get(j, j);
    }

    // R^{-1} (upper triangular), then (X'WX)^{-1} = R^{-1} R^{-T}.
    let mut r_inv = Matrix::zeros(k, k);
    for col in 0..k {
        for row in (0..=col).rev() {
            let mut s = if row == col { T::one() } else { T::zero() };
            for m in row + 1..=col {
                s -= a.get(row, m) * r_inv.get(m, col);
            }
            r_inv.set(row, col, s / a.get(row, row));
        }
    }
    let gram_inverse = Matrix::from_fn(k, k, |r, c| {
        (r.max(c)..k).map(|m| r_inv.get(r, m) * r_inv.get(c, m)).sum()
    });

    Ok(LeastSquares {
        coefficients: coef,
        gram_inverse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = Matrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y: Vec<f64> = (0..5).map(|i| 3.0 - 2.0 * i as f64).collect();
        let ls = least_squares(&x, &y, None).unwrap();
        assert!((ls.coefficients[0] - 3.0).abs() < 1e-12);
        assert!((ls.coefficients[1] + 2.0).abs() < 1e-12);
        // (X'X)^{-1} for t = 0..4: X'X = [[5, 10], [10, 30]], det 50.
        assert!((ls.gram_inverse.get(0, 0) - 30.0 / 50.0).abs() < 1e-12);
        assert!((ls.gram_inverse.get(0, 1) + 10.0 / 50.0).abs() < 1e-12);
        assert!((ls.gram_inverse.get(1, 1) - 5.0 / 50.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_rejected() {
        let x = Matrix::from_fn(6, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => 2.0 * i as f64 + 1.0,
        });
        let y = vec![1.0; 6];
        assert_eq!(least_squares(&x, &y, None).unwrap_err(), RankDeficient);
    }

    #[test]
    fn zero_weight_rows_are_ignored() {
        let x = Matrix::from_fn(4, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = vec![0.0, 1.0, 2.0, 100.0];
        let w = vec![1.0, 1.0, 1.0, 0.0];
        let ls = least_squares(&x, &y, Some(&w)).unwrap();
        assert!((ls.coefficients[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coefficient_weights_reproduce_estimate() {
        let x = Matrix::from_fn(7, 3, |i, j| (i as f64 - 3.0).powi(j as i32));
        let y: Vec<f64> = (0..7).map(|i| ((i * 7919) % 13) as f64).collect();
        let w: Vec<f64> = (0..7).map(|i| 1.0 + i as f64).collect();
        let ls = least_squares(&x, &y, Some(&w)).unwrap();
        for j in 0..3 {
            let l = ls.coefficient_weights(&x, Some(&w), j);
            let via: f64 = l.iter().zip(&y).map(|(a, b)| a * b).sum();
            assert!((via - ls.coefficients[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn works_in_f32() {
        let x = Matrix::from_fn(6, 2, |i, j| if j == 0 { 1.0f32 } else { i as f32 });
        let y: Vec<f32> = (0..6).map(|i| 0.5 + 0.25 * i as f32).collect();
        let ls = least_squares(&x, &y, None).unwrap();
        assert!((ls.coefficients[1] - 0.25).abs() < 1e-5);
    }
}
