//! Small numerical kernels shared by assembly, time stepping and spectral analysis.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64;

use crate::error::{MgtError, Result};

pub fn csr_from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> CsrMatrix<f64> {
    let mut coo = CooMatrix::new(n, n);
    for &(i, j, v) in triplets {
        coo.push(i, j, v);
    }
    CsrMatrix::from(&coo)
}

pub fn spmv(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(a.nrows());
    for (i, row) in a.row_iter().enumerate() {
        let mut s = 0.0;
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            s += v * x[j];
        }
        y[i] = s;
    }
    y
}

/// `xᵀ A y`.
pub fn bilinear(a: &CsrMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    a.row_iter()
        .enumerate()
        .map(|(i, row)| {
            let s: f64 = row.col_indices().iter().zip(row.values()).map(|(&j, &v)| v * y[j]).sum();
            x[i] * s
        })
        .sum()
}

pub fn quad(a: &CsrMatrix<f64>, x: &DVector<f64>) -> f64 {
    bilinear(a, x, x)
}

/// `Σ cᵢ Aᵢ` over matrices of equal shape (patterns may differ).
pub fn lin_comb(terms: &[(f64, &CsrMatrix<f64>)]) -> CsrMatrix<f64> {
    let n = terms[0].1.nrows();
    let mut coo = CooMatrix::new(n, terms[0].1.ncols());
    for &(c, a) in terms {
        if c == 0.0 {
            continue;
        }
        for (i, j, &v) in a.triplet_iter() {
            coo.push(i, j, c * v);
        }
    }
    CsrMatrix::from(&coo)
}

pub fn to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, &v) in a.triplet_iter() {
        d[(i, j)] += v;
    }
    d
}

/// LU factorisation with partial pivoting of a square banded matrix.
///
/// Rows are stored as windows `[i - kl, i + kl + ku]` so that pivoting fill-in
/// stays inside the band.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(MgtError::Shape(format!("banded LU needs a square matrix, got {}x{}", n, a.ncols())));
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for (i, j, _) in a.triplet_iter() {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu { n, kl, ku, width, data: vec![0.0; n * width], pivots: vec![0; n] };
        let mut scale = 0.0f64;
        for (i, j, &v) in a.triplet_iter() {
            *lu.at_mut(i, j) += v;
            scale = scale.max(v.abs());
        }
        lu.eliminate(scale)?;
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let k = self.idx(i, j);
        &mut self.data[k]
    }

    fn eliminate(&mut self, scale: f64) -> Result<()> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let tiny = scale * f64::EPSILON * n as f64;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.at(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.at(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny {
                return Err(MgtError::Singular(format!("zero pivot at row {k} (|pivot| = {best:.3e})")));
            }
            self.pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.at(k, k);
            for i in k + 1..=last_row {
                let l = self.at(i, k) / pivot;
                *self.at_mut(i, k) = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let u = self.at(k, j);
                        *self.at_mut(i, j) -= l * u;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut DVector<f64>) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap_rows(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.at(i, k) * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                s -= self.at(k, j) * b[j];
            }
            b[k] = s / self.at(k, k);
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }
}

/// Diagonal similarity scaling (powers of two) that equalises row and column
/// norms before an eigenvalue computation. Returns the balanced matrix.
pub fn balance(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let radix = 2.0f64;
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut g = r / radix;
            let mut f = 1.0;
            let s = c + r;
            while c < g {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    m[(i, j)] *= inv;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
    m
}

/// All eigenvalues of a real square matrix (balanced, then Francis QR).
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if a.nrows() != a.ncols() {
        return Err(MgtError::Shape("eigenvalues of a non-square matrix".into()));
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let balanced = balance(a);
    let m = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| balanced[(i, j)]);
    m.eigenvalues().map_err(|e| MgtError::NoConvergence {
        message: format!("dense eigensolver failed: {e:?}"),
        residuals: Vec::new(),
    })
}

pub fn symmetric_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Generalised symmetric-definite eigenpairs `K φ = μ M φ`, ascending in `μ`,
/// with `φᵀ M φ = 1`.
pub fn generalized_symmetric_eigen(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| MgtError::Singular("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv_k = l
        .solve_lower_triangular(k)
        .ok_or_else(|| MgtError::Singular("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&linv_k.transpose())
        .ok_or_else(|| MgtError::Singular("triangular solve failed".into()))?;
    let c = symmetric_part(&c);
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mu: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = k.nrows();
    let mut vecs = DMatrix::zeros(n, n);
    let lt = l.transpose();
    for (col, &i) in order.iter().enumerate() {
        let y = eig.eigenvectors.column(i).into_owned();
        let mut phi = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| MgtError::Singular("triangular solve failed".into()))?;
        // deterministic sign: first significant entry positive
        if let Some(&first) = phi.iter().find(|v| v.abs() > 1e-12) {
            if first < 0.0 {
                phi = -phi;
            }
        }
        vecs.set_column(col, &phi);
    }
    Ok((mu, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, lo: f64, d: f64, up: f64) -> CsrMatrix<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, d));
            if i > 0 {
                t.push((i, i - 1, lo));
            }
            if i + 1 < n {
                t.push((i, i + 1, up));
            }
        }
        csr_from_triplets(n, &t)
    }

    #[test]
    fn banded_lu_matches_dense_solve() {
        // nonsymmetric, needs pivoting in places (small diagonal)
        let n = 12;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, if i % 3 == 0 { 1e-3 } else { 4.0 }));
            if i >= 1 {
                t.push((i, i - 1, 1.0 + i as f64));
            }
            if i >= 2 {
                t.push((i, i - 2, -0.5));
            }
            if i + 1 < n {
                t.push((i, i + 1, 2.0));
            }
        }
        let a = csr_from_triplets(n, &t);
        let lu = BandedLu::factor(&a).unwrap();
        assert_eq!(lu.bandwidths(), (2, 1));
        let b = DVector::from_fn(n, |i, _| (i as f64).sin());
        let x = lu.solve(&b);
        let r = spmv(&a, &x) - &b;
        assert!(r.amax() < 1e-12, "residual {}", r.amax());
        let xd = to_dense(&a).lu().solve(&b).unwrap();
        assert!((x - xd).amax() < 1e-10);
    }

    #[test]
    fn singular_band_is_reported() {
        let a = tridiag(4, 1.0, 1.0, 1.0);
        let mut t: Vec<_> = a.triplet_iter().map(|(i, j, &v)| (i, j, v)).collect();
        t.retain(|&(i, _, _)| i != 2);
        let a = csr_from_triplets(4, &t);
        assert!(matches!(BandedLu::factor(&a), Err(MgtError::Singular(_))));
    }

    #[test]
    fn balancing_preserves_spectrum() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1e6, 0.0, 1e-6, 2.0, 1e4, 0.0, 1e-4, 3.0]);
        let mut e1: Vec<f64> = eigenvalues(&a).unwrap().iter().map(|z| z.re).collect();
        e1.sort_by(|a, b| a.total_cmp(b));
        let mut e2: Vec<f64> = a.clone().complex_eigenvalues().iter().map(|z| z.re).collect();
        e2.sort_by(|a, b| a.total_cmp(b));
        for (x, y) in e1.iter().zip(&e2) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn generalized_eigen_normalisation() {
        let k = to_dense(&tridiag(6, -1.0, 2.0, -1.0));
        let m = to_dense(&tridiag(6, 1.0, 4.0, 1.0)) / 6.0;
        let (mu, phi) = generalized_symmetric_eigen(&k, &m).unwrap();
        for (i, &l) in mu.iter().enumerate() {
            let v = phi.column(i);
            let r = &k * v - &m * v * l;
            assert!(r.amax() < 1e-12);
            assert!(((v.transpose() * &m * v)[0] - 1.0).abs() < 1e-12);
        }
        assert!(mu.windows(2).all(|w| w[0] <= w[1]));
    }
}
