use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;

use crate::assembly::CompanionSystem;
use crate::error::{MgtError, Result};
use crate::linalg::eigenvalues;
use crate::model::PhysicalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMethod {
    Dense,
    ShiftInvert,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    /// Largest `3N` handled by the dense eigensolver.
    pub dense_threshold: usize,
    /// Real shift for the iterative path; it returns the eigenvalues nearest to it.
    pub shift: f64,
    pub n_eigs: usize,
    /// Krylov dimension; `None` picks `max(2 n_eigs + 20, 80)`.
    pub krylov_dim: Option<usize>,
    /// Relative Ritz residual accepted as converged.
    pub tol: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { dense_threshold: 3000, shift: 0.0, n_eigs: 12, krylov_dim: None, tol: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Sorted by decreasing real part, then decreasing imaginary part.
    pub eigenvalues: Vec<Complex64>,
    pub abscissa: f64,
    pub method: SpectrumMethod,
    /// Ritz residuals (relative) for the iterative path, empty for dense.
    pub residuals: Vec<f64>,
}

fn sort_desc(ev: &mut [Complex64]) {
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
}

/// Eigenvalues of the pencil `J x = λ E x` of a companion system.
pub fn spectrum(sys: &CompanionSystem, opts: &SpectrumOptions) -> Result<Spectrum> {
    let n = sys.n();
    let (mut ev, method, residuals) = if 3 * n <= opts.dense_threshold {
        (dense_pencil_eigenvalues(sys)?, SpectrumMethod::Dense, Vec::new())
    } else {
        let (ev, res) = shift_invert_arnoldi(sys, opts)?;
        (ev, SpectrumMethod::ShiftInvert, res)
    };
    sort_desc(&mut ev);
    let abscissa = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(Spectrum { eigenvalues: ev, abscissa, method, residuals })
}

/// Symmetric reduction `L⁻¹ J L⁻ᵀ` with `E = L Lᵀ`, then a dense eigensolve.
fn dense_pencil_eigenvalues(sys: &CompanionSystem) -> Result<Vec<Complex64>> {
    let n = sys.n();
    let (mut a, e) = sys.dense_pencil();
    let l3 = e
        .view((2 * n, 2 * n), (n, n))
        .into_owned()
        .cholesky()
        .ok_or_else(|| MgtError::Singular("leading mass matrix is not positive definite".into()))?
        .l();
    let rows = l3
        .solve_lower_triangular(&a.rows(2 * n, n).into_owned())
        .ok_or_else(|| MgtError::Singular("triangular solve failed".into()))?;
    a.rows_mut(2 * n, n).copy_from(&rows);
    let cols = l3
        .solve_lower_triangular(&a.columns(2 * n, n).transpose())
        .ok_or_else(|| MgtError::Singular("triangular solve failed".into()))?;
    a.columns_mut(2 * n, n).copy_from(&cols.transpose());
    eigenvalues(&a)
}

fn shift_invert_arnoldi(sys: &CompanionSystem, opts: &SpectrumOptions) -> Result<(Vec<Complex64>, Vec<f64>)> {
    let dim = 3 * sys.n();
    let m = opts.krylov_dim.unwrap_or((2 * opts.n_eigs + 20).max(80)).min(dim);
    let solver = sys.shifted_solver(opts.shift)?;
    let op = |v: &DVector<f64>| -> Result<DVector<f64>> { solver.solve(&sys.apply_e(v)?) };

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m + 1);
    let v0 = DVector::from_fn(dim, |i, _| 1.0 + 0.5 * ((i as f64) * 0.7).sin());
    basis.push(v0.normalize());
    let mut h = DMatrix::<f64>::zeros(m + 1, m);
    let mut steps = m;
    for j in 0..m {
        let mut w = op(&basis[j])?;
        for _ in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let c = v.dot(&w);
                h[(i, j)] += c;
                w.axpy(-c, v, 1.0);
            }
        }
        let norm = w.norm();
        h[(j + 1, j)] = norm;
        if norm <= 1e-14 * h.column(j).norm() {
            steps = j + 1;
            break;
        }
        basis.push(w / norm);
    }
    let hm = h.view((0, 0), (steps, steps)).into_owned();
    let beta = h[(steps, steps - 1)];
    let thetas = eigenvalues(&hm)?;

    let hc: DMatrix<Complex<f64>> = hm.map(|x| Complex::new(x, 0.0));
    let mut ritz: Vec<(Complex64, f64)> = thetas
        .iter()
        .map(|&theta| {
            let y = inverse_iteration(&hc, theta);
            let res = beta * y[steps - 1].norm() / theta.norm().max(f64::MIN_POSITIVE);
            (theta, res)
        })
        .collect();
    ritz.sort_by(|a, b| b.0.norm().total_cmp(&a.0.norm()));
    ritz.truncate(opts.n_eigs.min(ritz.len()));
    let residuals: Vec<f64> = ritz.iter().map(|r| r.1).collect();
    if residuals.iter().any(|&r| !(r <= opts.tol)) {
        return Err(MgtError::NoConvergence {
            message: format!("shift-invert Arnoldi with {steps} vectors around {}", opts.shift),
            residuals,
        });
    }
    let ev = ritz.iter().map(|(theta, _)| Complex64::new(opts.shift, 0.0) + theta.inv()).collect();
    Ok((ev, residuals))
}

/// Unit eigenvector of a small complex matrix for an approximate eigenvalue.
fn inverse_iteration(h: &DMatrix<Complex<f64>>, theta: Complex64) -> DVector<Complex<f64>> {
    let n = h.nrows();
    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let shift = Complex::new(theta.re, theta.im) + Complex::new(1e-12 * scale, 0.0);
    let lu = (h - DMatrix::<Complex<f64>>::identity(n, n) * shift).lu();
    let mut y = DVector::from_fn(n, |i, _| Complex::new(1.0, 0.1 * i as f64));
    for _ in 0..3 {
        if let Some(next) = lu.solve(&y) {
            let nrm = next.norm();
            if nrm.is_finite() && nrm > 0.0 {
                y = next / Complex::new(nrm, 0.0);
            }
        }
    }
    y
}

/// Roots of `τλ³ + αλ² + bμλ + c²μ` (separation of variables on one
/// Laplacian eigenvalue `μ`), sorted by real then imaginary part.
pub fn characteristic_roots_1d(params: &PhysicalParams, mu: f64) -> Result<[Complex64; 3]> {
    let alpha = params
        .alpha
        .as_constant()
        .ok_or_else(|| MgtError::Validation("characteristic roots need a constant α".into()))?;
    if !(mu > 0.0) {
        return Err(MgtError::Validation(format!("μ must be positive, got {mu}")));
    }
    let tau = params.tau;
    let comp = DMatrix::from_row_slice(
        3,
        3,
        &[
            -alpha / tau,
            -params.b * mu / tau,
            -params.c * params.c * mu / tau,
            1.0,
            0.0,
            0.0,
            0.0,
            1.0,
            0.0,
        ],
    );
    let mut r = eigenvalues(&comp)?;
    r.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok([r[0], r[1], r[2]])
}

/// Greedy nearest-neighbour matching of two multisets; returns the largest
/// matched distance (infinite when the sizes differ).
pub fn match_multisets(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("sizes match");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

/// `‖(λI - A)⁻¹‖` in the metric `xᵀ G x`, as the largest singular value of
/// `Lᵀ (λI - A)⁻¹ L⁻ᵀ` with `G = L Lᵀ`.
pub fn resolvent_norm(gen: &DMatrix<f64>, gram: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(MgtError::Validation(format!("λ must be positive, got {lambda}")));
    }
    let n = gen.nrows();
    if gen.ncols() != n || gram.shape() != (n, n) {
        return Err(MgtError::Shape("generator and Gram matrix must be square of equal size".into()));
    }
    let l = gram
        .clone()
        .cholesky()
        .ok_or_else(|| MgtError::Singular("Gram matrix is not positive definite".into()))?
        .l();
    let l_inv_t = l
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| MgtError::Singular("triangular solve failed".into()))?;
    let shifted = DMatrix::identity(n, n) * lambda - gen;
    let y = shifted
        .lu()
        .solve(&l_inv_t)
        .ok_or_else(|| MgtError::Singular(format!("λ = {lambda} is an eigenvalue")))?;
    let c = l.transpose() * y;
    Ok(c.singular_values().max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_fem, build_generator_z, DiscreteOperators};
    use crate::geometry::{build_mesh, partition_boundary, BoundaryPartition, DomainSpec};
    use crate::model::{derive_params, ScalarField};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn factorised_roots() {
        let p = derive_params(1.0, 1.0, 0.0, 0.0, ScalarField::Constant(1.0)).unwrap();
        let pi = std::f64::consts::PI;
        let r = characteristic_roots_1d(&p, pi * pi).unwrap();
        assert!(match_multisets(&r, &[c(-1.0, 0.0), c(0.0, pi), c(0.0, -pi)]) < 1e-12);
    }

    #[test]
    fn viscous_roots_are_stable_and_continuous() {
        let p = derive_params(1.0, 1.0, 1.0, 0.0, ScalarField::Constant(1.0)).unwrap();
        assert!((p.gamma.as_constant().unwrap() - 0.5).abs() < 1e-15);
        let mu = std::f64::consts::PI.powi(2);
        let r = characteristic_roots_1d(&p, mu).unwrap();
        assert!(r.iter().all(|z| z.re < 0.0));
        let r2 = characteristic_roots_1d(&p, mu + 1e-9).unwrap();
        assert!(match_multisets(&r, &r2) <= 1e-6);
        assert!(characteristic_roots_1d(&p, 0.0).is_err());
        let pc = p.with_alpha(ScalarField::PerCell(vec![1.0, 2.0])).unwrap();
        assert!(characteristic_roots_1d(&pc, mu).is_err());
    }

    fn dirichlet_ops(n: usize) -> (DiscreteOperators, PhysicalParams) {
        let mesh = build_mesh(&DomainSpec::Interval { a: 0.0, b: 1.0 }, &[n]).unwrap();
        let p = derive_params(1.0, 1.0, 0.0, 0.0, ScalarField::Constant(1.0)).unwrap();
        (assemble_fem(&mesh, &BoundaryPartition::all_dirichlet(&mesh), &p).unwrap(), p)
    }

    #[test]
    fn dense_and_iterative_agree_near_shift() {
        // factorised case: -1 (semisimple, found once by Arnoldi) and ±i√μ
        let (ops, p) = dirichlet_ops(50);
        let sys = ops.companion(&p);
        let dense = spectrum(&sys, &SpectrumOptions::default()).unwrap();
        let opts = SpectrumOptions { dense_threshold: 0, n_eigs: 5, ..Default::default() };
        let it = spectrum(&sys, &opts).unwrap();
        assert_eq!(it.method, SpectrumMethod::ShiftInvert);
        assert_eq!(it.eigenvalues.len(), 5);
        assert!(it.residuals.iter().all(|&r| r <= 1e-8));
        for z in &it.eigenvalues {
            let d = dense.eigenvalues.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-8 * z.norm().max(1.0), "{z} off by {d}");
        }
    }

    #[test]
    fn arnoldi_reports_non_convergence() {
        let (ops, p) = dirichlet_ops(60);
        let opts = SpectrumOptions { dense_threshold: 0, n_eigs: 30, krylov_dim: Some(32), tol: 1e-14, shift: 0.3 };
        match spectrum(&ops.companion(&p), &opts) {
            Err(MgtError::NoConvergence { residuals, .. }) => assert_eq!(residuals.len(), 30),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn resolvent_bound_small_case() {
        let mesh = build_mesh(&DomainSpec::Interval { a: 0.0, b: 1.0 }, &[12]).unwrap();
        let part = partition_boundary(&mesh, [-1.0, 0.0]).unwrap();
        let p = derive_params(2.0, 1.0, 0.5, 1.0, ScalarField::Constant(3.0)).unwrap();
        let ops = assemble_fem(&mesh, &part, &p).unwrap();
        let (_, gzd, _) = build_generator_z(&ops, &p).unwrap();
        let g = ops.gram(&p);
        for lam in [0.1, 1.0, 10.0] {
            let r = resolvent_norm(&gzd, &g, lam).unwrap();
            assert!(lam * r <= 1.0 + 1e-9, "λ = {lam}: {}", lam * r);
        }
        assert!(resolvent_norm(&gzd, &g, 0.0).is_err());
    }
}
