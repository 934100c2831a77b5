//! Dense real-matrix kernel shared by every compiled network.
//!
//! Everything here is deliberately small and deterministic. `affine`
//! accumulates each output row strictly left to right and adds the bias last,
//! so repeated runs produce bit-identical results on any platform with IEEE
//! 754 doubles. The least-squares solver factors the system with a
//! column-pivoted Householder QR rather than normal equations, both for
//! numerical honesty and so rank deficiency is detected instead of silently
//! smeared.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("entry at ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("rank-deficient system: pivot {pivot:e} at column {col} is negligible")]
    RankDeficient { col: usize, pivot: f64 },
}

/// Row-major dense matrix of `f64`. Constructors reject non-finite entries;
/// every other routine may assume finiteness.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Matrix, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(LinalgError::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {c}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(LinalgError::NonFinite { row: i, col: j });
                }
                data.push(v);
            }
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Append a row; the row length must match the current column count.
    pub fn push_row(&mut self, row: &[f64]) -> Result<(), LinalgError> {
        if row.len() != self.cols {
            return Err(LinalgError::DimensionMismatch(format!(
                "pushed row has {} entries, expected {}",
                row.len(),
                self.cols
            )));
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }
}

/// `W x + b`, accumulating each row's products left to right and adding the
/// bias last. The summation order is part of the contract: compiled networks
/// must be bit-reproducible across runs.
pub fn affine(w: &Matrix, b: &[f64], x: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if w.cols() != x.len() {
        return Err(LinalgError::DimensionMismatch(format!(
            "affine: matrix is {}x{} but input has length {}",
            w.rows(),
            w.cols(),
            x.len()
        )));
    }
    if w.rows() != b.len() {
        return Err(LinalgError::DimensionMismatch(format!(
            "affine: matrix is {}x{} but bias has length {}",
            w.rows(),
            w.cols(),
            b.len()
        )));
    }
    let mut out = Vec::with_capacity(w.rows());
    for i in 0..w.rows() {
        let mut acc = 0.0;
        for (wj, xj) in w.row(i).iter().zip(x) {
            acc += wj * xj;
        }
        out.push(acc + b[i]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    Satlin,
    /// Row softmax of `kappa * x`, with the maximum subtracted before
    /// exponentiation. At large gain the losing entries underflow to exactly
    /// zero, which is what the hard-attention layers rely on.
    SoftmaxRow { kappa: f64 },
}

pub fn activate(activation: Activation, x: &[f64]) -> Vec<f64> {
    match activation {
        Activation::Identity => x.to_vec(),
        Activation::Relu => x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        Activation::Satlin => x.iter().map(|&v| v.clamp(0.0, 1.0)).collect(),
        Activation::SoftmaxRow { kappa } => softmax_row(kappa, x),
    }
}

fn softmax_row(kappa: f64, x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|&v| (kappa * (v - m)).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub x: Matrix,
    /// Frobenius norm of `A x - B`, computed from the original inputs after
    /// the solve.
    pub residual: f64,
}

/// Minimum-norm-ish least squares via column-pivoted Householder QR.
///
/// Requires `a` to have full column rank; a negligible pivot is reported as
/// `RankDeficient` rather than solved through.
pub fn lstsq(a: &Matrix, b: &Matrix) -> Result<LstsqSolution, LinalgError> {
    let m = a.rows();
    let n = a.cols();
    if b.rows() != m {
        return Err(LinalgError::DimensionMismatch(format!(
            "lstsq: A is {}x{} but B has {} rows",
            m,
            n,
            b.rows()
        )));
    }
    if m < n {
        return Err(LinalgError::RankDeficient { col: m, pivot: 0.0 });
    }
    let r = b.cols();
    let mut qr = a.clone();
    let mut qb = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    for k in 0..n {
        // Column pivot: bring the column with the largest remaining norm to
        // position k. Norms are recomputed; the systems here are small.
        let mut best = k;
        let mut best_norm = trailing_norm2(&qr, k, k);
        for j in k + 1..n {
            let nj = trailing_norm2(&qr, k, j);
            if nj > best_norm {
                best = j;
                best_norm = nj;
            }
        }
        if best != k {
            swap_cols(&mut qr, k, best);
            perm.swap(k, best);
        }

        // Householder reflector for column k.
        let norm = trailing_norm2(&qr, k, k).sqrt();
        let akk = qr.get(k, k);
        if norm == 0.0 {
            return Err(LinalgError::RankDeficient { col: k, pivot: 0.0 });
        }
        let alpha = if akk >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| qr.get(i, k)).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|&t| t * t).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                apply_reflector(&mut qr, k, j, &v, vnorm2);
            }
            for j in 0..r {
                apply_reflector(&mut qb, k, j, &v, vnorm2);
            }
        }
        qr.set(k, k, alpha);
        for i in k + 1..m {
            qr.set(i, k, 0.0);
        }
    }

    let tol = f64::EPSILON * (m.max(n) as f64) * qr.get(0, 0).abs().max(1.0);
    for k in 0..n {
        let pivot = qr.get(k, k);
        if pivot.abs() <= tol {
            return Err(LinalgError::RankDeficient { col: perm[k], pivot });
        }
    }

    // Back-substitute R x = Q^T b, then undo the column permutation.
    let mut x = Matrix::zeros(n, r);
    for j in 0..r {
        let mut col = vec![0.0; n];
        for i in (0..n).rev() {
            let mut acc = qb.get(i, j);
            for k in i + 1..n {
                acc -= qr.get(i, k) * col[k];
            }
            col[i] = acc / qr.get(i, i);
        }
        for i in 0..n {
            x.set(perm[i], j, col[i]);
        }
    }

    let ax = a.matmul(&x)?;
    let mut resid2 = 0.0;
    for i in 0..m {
        for j in 0..r {
            let d = ax.get(i, j) - b.get(i, j);
            resid2 += d * d;
        }
    }
    Ok(LstsqSolution { x, residual: resid2.sqrt() })
}

fn trailing_norm2(m: &Matrix, from_row: usize, col: usize) -> f64 {
    (from_row..m.rows()).map(|i| m.get(i, col).powi(2)).sum()
}

fn swap_cols(m: &mut Matrix, a: usize, b: usize) {
    for i in 0..m.rows() {
        let t = m.get(i, a);
        m.set(i, a, m.get(i, b));
        m.set(i, b, t);
    }
}

/// Apply `I - 2 v v^T / |v|^2` (v lives in rows `k..`) to column `j` of `m`.
fn apply_reflector(m: &mut Matrix, k: usize, j: usize, v: &[f64], vnorm2: f64) {
    let mut dot = 0.0;
    for (t, &vi) in v.iter().enumerate() {
        dot += vi * m.get(k + t, j);
    }
    let scale = 2.0 * dot / vnorm2;
    for (t, &vi) in v.iter().enumerate() {
        let cur = m.get(k + t, j);
        m.set(k + t, j, cur - scale * vi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn affine_computes_wx_plus_b() {
        let w = mat(&[&[1.0, 2.0], &[0.0, -1.0], &[3.0, 0.5]]);
        let y = affine(&w, &[10.0, 0.0, -1.0], &[2.0, 4.0]).unwrap();
        assert_eq!(y, vec![20.0, -4.0, 7.0]);
    }

    #[test]
    fn affine_rejects_bad_shapes() {
        let w = mat(&[&[1.0, 2.0]]);
        assert!(matches!(
            affine(&w, &[0.0], &[1.0]),
            Err(LinalgError::DimensionMismatch(_))
        ));
        assert!(matches!(
            affine(&w, &[0.0, 0.0], &[1.0, 2.0]),
            Err(LinalgError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn constructors_reject_non_finite() {
        let err = Matrix::from_rows(vec![vec![1.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, LinalgError::NonFinite { row: 0, col: 1 }));
        let err = Matrix::from_rows(vec![vec![f64::INFINITY]]).unwrap_err();
        assert!(matches!(err, LinalgError::NonFinite { row: 0, col: 0 }));
    }

    #[test]
    fn relu_and_satlin() {
        assert_eq!(
            activate(Activation::Relu, &[-1.0, 0.0, 0.5, 2.0]),
            vec![0.0, 0.0, 0.5, 2.0]
        );
        assert_eq!(
            activate(Activation::Satlin, &[-1.0, 0.0, 0.5, 2.0]),
            vec![0.0, 0.0, 0.5, 1.0]
        );
    }

    #[test]
    fn sharp_softmax_saturates_to_exact_hard_max() {
        // One clear winner: the rest must underflow to exactly 0.0 at this
        // gain, which the attention layers rely on.
        let w = activate(Activation::SoftmaxRow { kappa: 9999.0 }, &[0.5, 0.0, -1.0]);
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
        // An exact tie splits evenly.
        let w = activate(Activation::SoftmaxRow { kappa: 9999.0 }, &[1.0, 1.0]);
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn lstsq_recovers_exact_solution() {
        let a = mat(&[&[1.0, 0.0], &[0.0, 2.0], &[1.0, 1.0]]);
        let x_true = mat(&[&[3.0], &[-1.0]]);
        let b = a.matmul(&x_true).unwrap();
        let sol = lstsq(&a, &b).unwrap();
        assert!(sol.residual < 1e-12);
        for i in 0..2 {
            assert!((sol.x.get(i, 0) - x_true.get(i, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn lstsq_overdetermined_residual_is_honest() {
        // No exact solution: residual must come back positive and equal the
        // true distance.
        let a = mat(&[&[1.0], &[1.0]]);
        let b = mat(&[&[0.0], &[2.0]]);
        let sol = lstsq(&a, &b).unwrap();
        assert!((sol.x.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((sol.residual - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn lstsq_reports_rank_deficiency() {
        let a = mat(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        let b = mat(&[&[1.0], &[2.0], &[3.0]]);
        assert!(matches!(lstsq(&a, &b), Err(LinalgError::RankDeficient { .. })));
    }

    #[test]
    fn lstsq_multiple_right_hand_sides() {
        let a = mat(&[&[2.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[0.5, -1.0]]);
        let x_true = mat(&[&[1.0, -2.0], &[0.5, 4.0]]);
        let b = a.matmul(&x_true).unwrap();
        let sol = lstsq(&a, &b).unwrap();
        assert!(sol.residual < 1e-12);
        for i in 0..2 {
            for j in 0..2 {
                assert!((sol.x.get(i, j) - x_true.get(i, j)).abs() < 1e-10);
            }
        }
    }

    proptest! {
        /// Small-integer affine maps must be computed exactly: every product
        /// and partial sum is an integer well inside 2^53.
        #[test]
        fn affine_is_exact_on_small_integers(
            w_vals in proptest::collection::vec(-8i32..=8, 12),
            x_vals in proptest::collection::vec(-8i32..=8, 4),
            b_vals in proptest::collection::vec(-8i32..=8, 3),
        ) {
            let w = Matrix::from_rows(
                w_vals.chunks(4).map(|c| c.iter().map(|&v| v as f64).collect()).collect()
            ).unwrap();
            let x: Vec<f64> = x_vals.iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = b_vals.iter().map(|&v| v as f64).collect();
            let y = affine(&w, &b, &x).unwrap();
            for i in 0..3 {
                let mut expect = b_vals[i] as i64;
                for j in 0..4 {
                    expect += (w_vals[i * 4 + j] as i64) * (x_vals[j] as i64);
                }
                prop_assert_eq!(y[i], expect as f64);
            }
        }

        /// Random well-conditioned systems: the QR solve must reproduce a
        /// planted solution to tight tolerance.
        #[test]
        fn lstsq_recovers_planted_solutions(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = rng.gen_range(3..8);
            let n = rng.gen_range(1..=m.min(4));
            let mut a = Matrix::zeros(m, n);
            for i in 0..m {
                for j in 0..n {
                    a.set(i, j, rng.gen_range(-3.0..3.0));
                }
            }
            // Guard against accidental near-singularity.
            for j in 0..n {
                let v = a.get(j, j) + 4.0;
                a.set(j, j, v);
            }
            let mut x_true = Matrix::zeros(n, 1);
            for i in 0..n {
                x_true.set(i, 0, rng.gen_range(-5.0..5.0));
            }
            let b = a.matmul(&x_true).unwrap();
            let sol = lstsq(&a, &b).unwrap();
            prop_assert!(sol.residual < 1e-9);
            for i in 0..n {
                prop_assert!((sol.x.get(i, 0) - x_true.get(i, 0)).abs() < 1e-8);
            }
        }
    }
}
