//! Dense linear-algebra kernel for the weight solver.
//!
//! Only what the solver needs: row scaling by a diagonal, the Gram product
//! `XᵀX`, transposed matrix-vector products, and a Cholesky solve for SPD
//! systems. Everything is `f64`, row-major.

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `Aᵀ x`, accumulated row by row in a fixed order.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                actual: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(out)
    }

    /// Largest `|A_ij - A_ji|` relative to the largest `|A_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let mut max_diff = 0.0_f64;
        let mut max_abs = 0.0_f64;
        for i in 0..self.rows {
            for j in 0..self.cols {
                max_abs = max_abs.max(self[(i, j)].abs());
                if j > i {
                    max_diff = max_diff.max((self[(i, j)] - self[(j, i)]).abs());
                }
            }
        }
        if max_abs == 0.0 {
            0.0
        } else {
            max_diff / max_abs
        }
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// An `m × m` diagonal matrix stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMatrix(pub Vec<f64>);

impl DiagonalMatrix {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `S H` with `S` diagonal: row `s` of the result is `S_s` times row `s` of `H`.
pub fn scale_rows(s: &DiagonalMatrix, h: &DenseMatrix) -> Result<DenseMatrix> {
    if s.len() != h.rows() {
        return Err(Error::DimensionMismatch {
            expected: h.rows(),
            actual: s.len(),
        });
    }
    let mut out = h.clone();
    for (i, &si) in s.diag().iter().enumerate() {
        for v in out.row_mut(i) {
            *v *= si;
        }
    }
    Ok(out)
}

/// `XᵀX`. The upper triangle is accumulated as a sum of row outer products
/// (so the `l × l` accumulator stays cache resident while `X` streams), then
/// mirrored, which makes the result exactly symmetric.
pub fn gram(x: &DenseMatrix) -> Result<DenseMatrix> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::EmptyInput);
    }
    let l = x.cols();
    let mut g = DenseMatrix::zeros(l, l);
    for s in 0..x.rows() {
        let row = x.row(s);
        for r in 0..l {
            let xr = row[r];
            if xr == 0.0 {
                continue;
            }
            let g_row = &mut g.data[r * l + r..(r + 1) * l];
            for (gv, &xq) in g_row.iter_mut().zip(&row[r..]) {
                *gv += xr * xq;
            }
        }
    }
    for r in 0..l {
        for q in 0..r {
            g.data[r * l + q] = g.data[q * l + r];
        }
    }
    Ok(g)
}

/// Lower-triangular Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    pub fn factor(m: &DenseMatrix) -> Result<Self> {
        let n = m.rows();
        if m.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: m.cols(),
            });
        }
        if !m.is_finite() {
            return Err(Error::NonFinite {
                stage: "cholesky input",
            });
        }
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let lj = l.row(j);
            let mut d = m[(j, j)] - dot(&lj[..j], &lj[..j]);
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let s = m[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.l.rows();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: b.len(),
            });
        }
        // L z = b
        let mut z = vec![0.0; n];
        for i in 0..n {
            let row = self.l.row(i);
            z[i] = (b[i] - dot(&row[..i], &z[..i])) / row[i];
        }
        // Lᵀ x = z
        let mut x = z;
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        Ok(x)
    }

    pub fn lower(&self) -> &DenseMatrix {
        &self.l
    }
}

const SYMMETRY_TOL: f64 = 1e-8;

/// Solves `M w = b` for symmetric positive-definite `M`.
pub fn solve_spd(m: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if m.rows() != m.cols() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            actual: m.cols(),
        });
    }
    if b.len() != m.rows() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            actual: b.len(),
        });
    }
    let asym = m.asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Cholesky::factor(m)?.solve(b)
}

/// Like [`solve_spd`], but when factorization hits a non-positive pivot it
/// retries once with `1e-10 · trace(M) / n` added to the diagonal.
/// The flag in the result reports whether the bump was needed.
pub fn solve_spd_with_retry(m: &DenseMatrix, b: &[f64]) -> Result<(Vec<f64>, bool)> {
    match solve_spd(m, b) {
        Ok(w) => Ok((w, false)),
        Err(Error::NotPositiveDefinite { pivot }) => {
            let n = m.rows();
            let bump = 1e-10 * m.trace() / n as f64;
            log::warn!("cholesky failed at pivot {pivot}; retrying with diagonal bump {bump:.3e}");
            let mut bumped = m.clone();
            for i in 0..n {
                bumped[(i, i)] += bump;
            }
            Ok((solve_spd(&bumped, b)?, true))
        }
        Err(e) => Err(e),
    }
}

/// `‖M w − b‖₂ / ‖b‖₂` (or the absolute residual when `b = 0`).
pub fn relative_residual(m: &DenseMatrix, w: &[f64], b: &[f64]) -> f64 {
    let mw = match m.mul_vec(w) {
        Ok(v) => v,
        Err(_) => return f64::INFINITY,
    };
    let r: Vec<f64> = mw.iter().zip(b).map(|(a, c)| a - c).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DenseMatrix::from_vec(rows, cols, data).unwrap()
    }

    fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut c = DenseMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                c[(i, j)] = s;
            }
        }
        c
    }

    fn max_rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        let scale = b.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
            / scale
    }

    #[test]
    fn scale_rows_identity() {
        let h = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let s = DiagonalMatrix(vec![1.0, 1.0]);
        assert_eq!(scale_rows(&s, &h).unwrap(), h);
    }

    #[test]
    fn scale_rows_scalar() {
        let h = DenseMatrix::from_rows(&[vec![3.0, -1.0]]).unwrap();
        let out = scale_rows(&DiagonalMatrix(vec![2.0]), &h).unwrap();
        assert_eq!(out.as_slice(), &[6.0, -2.0]);
    }

    #[test]
    fn scale_rows_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random_matrix(50, 10, &mut rng);
        let s: Vec<f64> = (0..50).map(|_| rng.gen_range(0.1..3.0)).collect();
        let mut dense_s = DenseMatrix::zeros(50, 50);
        for (i, &v) in s.iter().enumerate() {
            dense_s[(i, i)] = v;
        }
        let oracle = naive_matmul(&dense_s, &h);
        let out = scale_rows(&DiagonalMatrix(s), &h).unwrap();
        assert!(max_rel_diff(&out, &oracle) <= 1e-15);
    }

    #[test]
    fn scale_rows_dimension_mismatch() {
        let h = DenseMatrix::zeros(3, 2);
        assert!(matches!(
            scale_rows(&DiagonalMatrix(vec![1.0; 2]), &h),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gram_small_cases() {
        assert_eq!(
            gram(&DenseMatrix::identity(3)).unwrap(),
            DenseMatrix::identity(3)
        );
        let x = DenseMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(gram(&x).unwrap().as_slice(), &[5.0]);
        assert!(matches!(gram(&DenseMatrix::zeros(0, 3)), Err(Error::EmptyInput)));
    }

    #[test]
    fn gram_matches_naive_and_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(100, 20, &mut rng);
        let g = gram(&x).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(g[(i, j)].to_bits(), g[(j, i)].to_bits());
            }
        }
        let oracle = naive_matmul(&x.transpose(), &x);
        assert!(max_rel_diff(&g, &oracle) <= 1e-12);
    }

    #[test]
    fn scale_then_gram_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_matrix(60, 12, &mut rng);
        let s: Vec<f64> = (0..60).map(|_| rng.gen_range(0.1..2.0)).collect();
        let mut dense_s = DenseMatrix::zeros(60, 60);
        for (i, &v) in s.iter().enumerate() {
            dense_s[(i, i)] = v;
        }
        let sh = naive_matmul(&dense_s, &h);
        let oracle = naive_matmul(&sh.transpose(), &sh);
        let g = gram(&scale_rows(&DiagonalMatrix(s), &h).unwrap()).unwrap();
        assert!(max_rel_diff(&g, &oracle) <= 1e-12);
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let w = solve_spd(&DenseMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(w, vec![1.0, 2.0, 3.0]);
        let m = DenseMatrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 9.0]]).unwrap();
        let w = solve_spd(&m, &[8.0, 27.0]).unwrap();
        assert_eq!(w, vec![2.0, 3.0]);
    }

    #[test]
    fn solve_random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = random_matrix(30, 30, &mut rng);
            let mut m = gram(&a).unwrap();
            for i in 0..30 {
                m[(i, i)] += 1.0;
            }
            let b: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w = solve_spd(&m, &b).unwrap();
            assert!(relative_residual(&m, &w, &b) <= 1e-10);
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = DenseMatrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]).unwrap();
        let c = Cholesky::factor(&m).unwrap();
        let l = c.lower();
        let llt = naive_matmul(l, &l.transpose());
        assert!(max_rel_diff(&llt, &m) < 1e-15);
    }

    #[test]
    fn indefinite_reports_pivot() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        match solve_spd(&m, &[1.0, 1.0]) {
            Err(Error::NotPositiveDefinite { pivot }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn asymmetric_rejected() {
        let m = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 2.0]]).unwrap();
        assert!(matches!(solve_spd(&m, &[1.0, 1.0]), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn retry_bumps_semidefinite() {
        // rank one, singular: second pivot is exactly zero
        let m = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let (w, bumped) = solve_spd_with_retry(&m, &[1.0, 1.0]).unwrap();
        assert!(bumped);
        assert!(w.iter().all(|v| v.is_finite()));
        let (_, bumped) = solve_spd_with_retry(&DenseMatrix::identity(2), &[1.0, 1.0]).unwrap();
        assert!(!bumped);
    }

    #[test]
    fn non_finite_rejected() {
        let m = DenseMatrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(matches!(
            solve_spd(&m, &[1.0]),
            Err(Error::NonFinite { .. }) | Err(Error::NotSymmetric(_))
        ));
    }
}
