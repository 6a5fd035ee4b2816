//! P1 finite element assembly and the discrete generators.
//!
//! Dirichlet vertices (those touching a Γ1 facet) are eliminated; every
//! matrix here acts on the remaining free degrees of freedom, numbered in
//! vertex order so structured meshes keep a narrow band.
//!
//! The semi-discrete system in `(u, u_t, u_tt)` reads
//!
//! ```text
//! τ M u''' + (M_α + bη B) u'' + (b K + c²η B) u' + c² K u = M f
//! ```
//!
//! where the feedback condition `∂u/∂ν + η u_t = 0` on Γ0 enters only through
//! the boundary mass matrix `B`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use crate::error::{MgtError, Result};
use crate::geometry::{BoundaryPartition, MeshGeometry, GAUSS2_NODES, GAUSS2_WEIGHTS};
use crate::linalg::{csr_from_triplets, lin_comb, spmv, to_dense, BandedLu};
use crate::model::{PhysicalParams, ScalarField};

#[derive(Debug, Clone)]
pub struct DofMap {
    pub free_of_vertex: Vec<Option<usize>>,
    pub vertex_of_free: Vec<usize>,
    /// Free dofs lying on a Γ0 facet, ascending.
    pub gamma0_dofs: Vec<usize>,
}

impl DofMap {
    pub fn n_free(&self) -> usize {
        self.vertex_of_free.len()
    }

    /// Scatter a free-dof vector onto all vertices (zero on Γ1).
    pub fn expand(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.free_of_vertex.len());
        for (dof, &vx) in self.vertex_of_free.iter().enumerate() {
            out[vx] = v[dof];
        }
        out
    }

    /// Nodal interpolation of a function onto the free dofs.
    pub fn interpolate(&self, mesh: &MeshGeometry, f: impl Fn([f64; 2]) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.n_free(), self.vertex_of_free.iter().map(|&v| f(mesh.vertices[v])))
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub dofs: DofMap,
    /// `∫ φᵢ φⱼ`
    pub mass: CsrMatrix<f64>,
    /// `∫ ∇φᵢ·∇φⱼ`
    pub stiffness: CsrMatrix<f64>,
    /// `∫_{Γ0} φᵢ φⱼ`
    pub boundary: CsrMatrix<f64>,
    pub mass_alpha: CsrMatrix<f64>,
    pub mass_gamma: CsrMatrix<f64>,
    /// Stiffness over all vertices, before Dirichlet elimination.
    pub stiffness_full: CsrMatrix<f64>,
    /// Mass over all vertices, before Dirichlet elimination.
    pub mass_full: CsrMatrix<f64>,
}

fn cell_mass_coeff(dim: usize) -> f64 {
    if dim == 1 {
        1.0 / 6.0
    } else {
        1.0 / 12.0
    }
}

pub fn assemble_fem(
    mesh: &MeshGeometry,
    partition: &BoundaryPartition,
    params: &PhysicalParams,
) -> Result<DiscreteOperators> {
    if partition.gamma1.is_empty() {
        return Err(MgtError::SingularStiffness("Γ1 is empty, the stiffness matrix has constants in its kernel".into()));
    }
    params.alpha.check_len(mesh.n_cells())?;

    let nv = mesh.n_vertices();
    let mut dirichlet = vec![false; nv];
    for &f in &partition.gamma1 {
        for &v in &mesh.facets[f].vertices {
            dirichlet[v] = true;
        }
    }
    let mut free_of_vertex = vec![None; nv];
    let mut vertex_of_free = Vec::new();
    for v in 0..nv {
        if !dirichlet[v] {
            free_of_vertex[v] = Some(vertex_of_free.len());
            vertex_of_free.push(v);
        }
    }
    let mut gamma0_dofs: Vec<usize> = partition
        .gamma0
        .iter()
        .flat_map(|&f| mesh.facets[f].vertices.iter().filter_map(|&v| free_of_vertex[v]))
        .collect();
    gamma0_dofs.sort_unstable();
    gamma0_dofs.dedup();
    let dofs = DofMap { free_of_vertex, vertex_of_free, gamma0_dofs };

    let mc = cell_mass_coeff(mesh.dim);
    let (mut k_full, mut m_full) = (Vec::new(), Vec::new());
    let (mut k_t, mut m_t, mut ma_t, mut mg_t) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let meas = mesh.cell_measure(ci);
        let grads = mesh.basis_gradients(ci);
        let (a, g) = (params.alpha.on_cell(ci), params.gamma.on_cell(ci));
        for (li, &vi) in cell.iter().enumerate() {
            for (lj, &vj) in cell.iter().enumerate() {
                let kij = meas * (grads[li][0] * grads[lj][0] + grads[li][1] * grads[lj][1]);
                let mij = meas * mc * if li == lj { 2.0 } else { 1.0 };
                k_full.push((vi, vj, kij));
                m_full.push((vi, vj, mij));
                if let (Some(i), Some(j)) = (dofs.free_of_vertex[vi], dofs.free_of_vertex[vj]) {
                    k_t.push((i, j, kij));
                    m_t.push((i, j, mij));
                    ma_t.push((i, j, a * mij));
                    mg_t.push((i, j, g * mij));
                }
            }
        }
    }

    let mut b_t = Vec::new();
    for &fi in &partition.gamma0 {
        let f = &mesh.facets[fi];
        match f.vertices.as_slice() {
            [v] => {
                if let Some(i) = dofs.free_of_vertex[*v] {
                    b_t.push((i, i, f.measure));
                }
            }
            [va, vb] => {
                let ids = [dofs.free_of_vertex[*va], dofs.free_of_vertex[*vb]];
                for (s, w) in GAUSS2_NODES.iter().zip(GAUSS2_WEIGHTS) {
                    let phi = [1.0 - s, *s];
                    for p in 0..2 {
                        for q in 0..2 {
                            if let (Some(i), Some(j)) = (ids[p], ids[q]) {
                                b_t.push((i, j, f.measure * w * phi[p] * phi[q]));
                            }
                        }
                    }
                }
            }
            _ => unreachable!("facets have one or two vertices"),
        }
    }

    let n = dofs.n_free();
    Ok(DiscreteOperators {
        mass: csr_from_triplets(n, &m_t),
        stiffness: csr_from_triplets(n, &k_t),
        boundary: csr_from_triplets(n, &b_t),
        mass_alpha: csr_from_triplets(n, &ma_t),
        mass_gamma: csr_from_triplets(n, &mg_t),
        stiffness_full: csr_from_triplets(nv, &k_full),
        mass_full: csr_from_triplets(nv, &m_full),
        dofs,
    })
}

/// Mesh, boundary partition, parameters and the assembled operators, kept together.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: MeshGeometry,
    pub partition: BoundaryPartition,
    pub params: PhysicalParams,
    pub ops: DiscreteOperators,
}

impl Problem {
    pub fn new(mesh: MeshGeometry, partition: BoundaryPartition, params: PhysicalParams) -> Result<Self> {
        let ops = assemble_fem(&mesh, &partition, &params)?;
        Ok(Problem { mesh, partition, params, ops })
    }

    pub fn companion(&self) -> CompanionSystem {
        self.ops.companion(&self.params)
    }

    pub fn n_free(&self) -> usize {
        self.ops.n_free()
    }
}

impl DiscreteOperators {
    pub fn n_free(&self) -> usize {
        self.dofs.n_free()
    }

    /// Block-diagonal phase-space metric `diag(K, bK, τM)`.
    pub fn gram(&self, params: &PhysicalParams) -> DMatrix<f64> {
        let n = self.n_free();
        let k = to_dense(&self.stiffness);
        let m = to_dense(&self.mass);
        let mut g = DMatrix::zeros(3 * n, 3 * n);
        g.view_mut((0, 0), (n, n)).copy_from(&k);
        g.view_mut((n, n), (n, n)).copy_from(&(&k * params.b));
        g.view_mut((2 * n, 2 * n), (n, n)).copy_from(&(m * params.tau));
        g
    }

    /// `B` restricted to the Γ0 dofs (symmetric positive definite when Γ0 has free dofs).
    pub fn boundary_block(&self) -> DMatrix<f64> {
        let idx = &self.dofs.gamma0_dofs;
        let b = to_dense(&self.boundary);
        DMatrix::from_fn(idx.len(), idx.len(), |i, j| b[(idx[i], idx[j])])
    }

    /// Third-order companion system in `(u, u_t, u_tt)`.
    pub fn companion(&self, params: &PhysicalParams) -> CompanionSystem {
        let (b, c2, eta) = (params.b, params.c * params.c, params.eta);
        CompanionSystem {
            lead: lin_comb(&[(params.tau, &self.mass)]),
            damping: lin_comb(&[(1.0, &self.mass_alpha), (b * eta, &self.boundary)]),
            mid: lin_comb(&[(b, &self.stiffness), (c2 * eta, &self.boundary)]),
            stiff: lin_comb(&[(c2, &self.stiffness)]),
            load: self.mass.clone(),
        }
    }
}

/// `E x' = J x + F` with `E = diag(I, I, lead)` and
///
/// ```text
/// J = [   0      I      0    ]
///     [   0      0      I    ]
///     [ -stiff -mid  -damping ]
/// ```
///
/// and `F = (0, 0, load·f)`.
#[derive(Debug, Clone)]
pub struct CompanionSystem {
    pub lead: CsrMatrix<f64>,
    pub damping: CsrMatrix<f64>,
    pub mid: CsrMatrix<f64>,
    pub stiff: CsrMatrix<f64>,
    pub load: CsrMatrix<f64>,
}

impl CompanionSystem {
    pub fn n(&self) -> usize {
        self.lead.nrows()
    }

    fn split<'a>(&self, x: &'a DVector<f64>) -> Result<[nalgebra::DVectorView<'a, f64>; 3]> {
        let n = self.n();
        if x.len() != 3 * n {
            return Err(MgtError::Shape(format!("state length {} != 3 x {n}", x.len())));
        }
        Ok([x.rows(0, n), x.rows(n, n), x.rows(2 * n, n)])
    }

    pub fn apply_e(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        let [_, _, x3] = self.split(x)?;
        let mut out = x.clone();
        out.rows_mut(2 * n, n).copy_from(&spmv(&self.lead, &x3.into_owned()));
        Ok(out)
    }

    pub fn apply_j(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n();
        let [x1, x2, x3] = self.split(x)?;
        let (x1, x2, x3) = (x1.into_owned(), x2.into_owned(), x3.into_owned());
        let mut out = DVector::zeros(3 * n);
        out.rows_mut(0, n).copy_from(&x2);
        out.rows_mut(n, n).copy_from(&x3);
        let third = -(spmv(&self.stiff, &x1) + spmv(&self.mid, &x2) + spmv(&self.damping, &x3));
        out.rows_mut(2 * n, n).copy_from(&third);
        Ok(out)
    }

    /// Dense `(J, E)` pencil.
    pub fn dense_pencil(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n();
        let mut j = DMatrix::zeros(3 * n, 3 * n);
        let mut e = DMatrix::identity(3 * n, 3 * n);
        for i in 0..n {
            j[(i, n + i)] = 1.0;
            j[(n + i, 2 * n + i)] = 1.0;
        }
        j.view_mut((2 * n, 0), (n, n)).copy_from(&-to_dense(&self.stiff));
        j.view_mut((2 * n, n), (n, n)).copy_from(&-to_dense(&self.mid));
        j.view_mut((2 * n, 2 * n), (n, n)).copy_from(&-to_dense(&self.damping));
        e.view_mut((2 * n, 2 * n), (n, n)).copy_from(&to_dense(&self.lead));
        (j, e)
    }

    /// Matrix polynomial `σ³ lead + σ² damping + σ mid + stiff`.
    pub fn characteristic_matrix(&self, sigma: f64) -> CsrMatrix<f64> {
        lin_comb(&[
            (sigma.powi(3), &self.lead),
            (sigma * sigma, &self.damping),
            (sigma, &self.mid),
            (1.0, &self.stiff),
        ])
    }

    /// Factorises `J - σE` through its `n x n` Schur complement.
    pub fn shifted_solver(&self, sigma: f64) -> Result<ShiftedSolver<'_>> {
        let lu = BandedLu::factor(&self.characteristic_matrix(sigma))?;
        Ok(ShiftedSolver { sys: self, sigma, lu })
    }
}

/// Solves `(J - σE) x = r` for a [`CompanionSystem`].
pub struct ShiftedSolver<'a> {
    sys: &'a CompanionSystem,
    sigma: f64,
    lu: BandedLu,
}

impl ShiftedSolver<'_> {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn solve(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        let sys = self.sys;
        let n = sys.n();
        let [r1, r2, r3] = sys.split(r)?;
        let (r1, r2, r3) = (r1.into_owned(), r2.into_owned(), r3.into_owned());
        let s = self.sigma;
        let mut out = DVector::zeros(3 * n);
        if s == 0.0 {
            // J x = r: x2 = r1, x3 = r2, -stiff x1 = r3 + mid r1 + damping r2
            let rhs = -(r3 + spmv(&sys.mid, &r1) + spmv(&sys.damping, &r2));
            let x1 = self.lu.solve(&rhs);
            out.rows_mut(0, n).copy_from(&x1);
            out.rows_mut(n, n).copy_from(&r1);
            out.rows_mut(2 * n, n).copy_from(&r2);
            return Ok(out);
        }
        let rhs = r3 * (-s * s) + spmv(&sys.stiff, &(&r2 + &r1 * s)) + spmv(&sys.mid, &r2) * s;
        let x3 = self.lu.solve(&rhs);
        let x2 = (&x3 - &r2) / s;
        let x1 = (&x2 - &r1) / s;
        out.rows_mut(0, n).copy_from(&x1);
        out.rows_mut(n, n).copy_from(&x2);
        out.rows_mut(2 * n, n).copy_from(&x3);
        Ok(out)
    }
}

/// Dense generators and the state isomorphism.
#[derive(Debug, Clone)]
pub struct GeneratorBundle {
    /// `Φ' = gen_u Φ` in `(u, u_t, u_tt)`.
    pub gen_u: DMatrix<f64>,
    /// `Ψ' = gen_z Ψ` in `(u, z, z_t)`.
    pub gen_z: DMatrix<f64>,
    /// Dissipative part of `gen_z`.
    pub gen_zd: DMatrix<f64>,
    /// Bounded remainder `gen_z - gen_zd`.
    pub perturbation: DMatrix<f64>,
    pub m_iso: DMatrix<f64>,
    pub m_iso_inv: DMatrix<f64>,
}

fn lead_inverse_times(ops: &DiscreteOperators, params: &PhysicalParams, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lead = to_dense(&ops.mass) * params.tau;
    let chol = lead
        .cholesky()
        .ok_or_else(|| MgtError::Singular("mass matrix is not positive definite".into()))?;
    Ok(chol.solve(rhs))
}

fn set_block(dst: &mut DMatrix<f64>, bi: usize, bj: usize, n: usize, src: &DMatrix<f64>) {
    dst.view_mut((bi * n, bj * n), (n, n)).copy_from(src);
}

pub fn build_generator_u(ops: &DiscreteOperators, params: &PhysicalParams) -> Result<DMatrix<f64>> {
    let sys = ops.companion(params);
    let n = sys.n();
    let (j, _) = sys.dense_pencil();
    let third = lead_inverse_times(ops, params, &j.rows(2 * n, n).into_owned())?;
    let mut gen = j;
    gen.rows_mut(2 * n, n).copy_from(&third);
    Ok(gen)
}

/// Returns `(gen_z, gen_zd, perturbation)`, each assembled from its own formula.
pub fn build_generator_z(
    ops: &DiscreteOperators,
    params: &PhysicalParams,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = ops.n_free();
    let (k, b, eta) = (params.k(), params.b, params.eta);
    let id = DMatrix::<f64>::identity(n, n);
    let stiff = to_dense(&ops.stiffness);
    let mass = to_dense(&ops.mass);
    let mg = to_dense(&ops.mass_gamma);
    let bnd = to_dense(&ops.boundary);

    // τ M z_t' = -Mγ (ξ3 - kξ2 + k²ξ1) - bK ξ2 - bη B ξ3
    let mut row = DMatrix::zeros(n, 3 * n);
    row.view_mut((0, 0), (n, n)).copy_from(&(&mg * (-k * k)));
    row.view_mut((0, n), (n, n)).copy_from(&(&mg * k - &stiff * b));
    row.view_mut((0, 2 * n), (n, n)).copy_from(&(-&mg - &bnd * (b * eta)));
    let third = lead_inverse_times(ops, params, &row)?;
    let mut gen_z = DMatrix::zeros(3 * n, 3 * n);
    set_block(&mut gen_z, 0, 0, n, &(&id * -k));
    set_block(&mut gen_z, 0, 1, n, &id);
    set_block(&mut gen_z, 1, 2, n, &id);
    gen_z.rows_mut(2 * n, n).copy_from(&third);

    // τ M z_t' = -M ξ3 - bK ξ2 - bη B ξ3
    let mut row = DMatrix::zeros(n, 3 * n);
    row.view_mut((0, n), (n, n)).copy_from(&(&stiff * -b));
    row.view_mut((0, 2 * n), (n, n)).copy_from(&(-&mass - &bnd * (b * eta)));
    let third = lead_inverse_times(ops, params, &row)?;
    let mut gen_zd = DMatrix::zeros(3 * n, 3 * n);
    set_block(&mut gen_zd, 0, 0, n, &(&id * -k));
    set_block(&mut gen_zd, 1, 2, n, &id);
    gen_zd.rows_mut(2 * n, n).copy_from(&third);

    // P = (ξ2, 0, (τM)⁻¹[k Mγ (ξ2 - k ξ1) + (M - Mγ) ξ3])
    let mut row = DMatrix::zeros(n, 3 * n);
    row.view_mut((0, 0), (n, n)).copy_from(&(&mg * (-k * k)));
    row.view_mut((0, n), (n, n)).copy_from(&(&mg * k));
    row.view_mut((0, 2 * n), (n, n)).copy_from(&(&mass - &mg));
    let third = lead_inverse_times(ops, params, &row)?;
    let mut p = DMatrix::zeros(3 * n, 3 * n);
    set_block(&mut p, 0, 1, n, &id);
    p.rows_mut(2 * n, n).copy_from(&third);

    Ok((gen_z, gen_zd, p))
}

/// Block matrices of `M` and `M⁻¹` acting on stacked `(ξ1, ξ2, ξ3)`.
pub fn state_isomorphism(n: usize, params: &PhysicalParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = params.k();
    let id = DMatrix::<f64>::identity(n, n);
    let mut m = DMatrix::identity(3 * n, 3 * n);
    set_block(&mut m, 1, 0, n, &(&id * k));
    set_block(&mut m, 2, 1, n, &(&id * k));
    let mut minv = DMatrix::identity(3 * n, 3 * n);
    set_block(&mut minv, 1, 0, n, &(&id * -k));
    set_block(&mut minv, 2, 1, n, &(&id * -k));
    set_block(&mut minv, 2, 0, n, &(&id * (k * k)));
    (m, minv)
}

impl GeneratorBundle {
    pub fn build(ops: &DiscreteOperators, params: &PhysicalParams) -> Result<Self> {
        let gen_u = build_generator_u(ops, params)?;
        let (gen_z, gen_zd, perturbation) = build_generator_z(ops, params)?;
        let (m_iso, m_iso_inv) = state_isomorphism(ops.n_free(), params);
        Ok(GeneratorBundle { gen_u, gen_z, gen_zd, perturbation, m_iso, m_iso_inv })
    }

    /// `max |gen_z - M gen_u M⁻¹|`.
    pub fn conjugacy_defect(&self) -> f64 {
        (&self.gen_z - &self.m_iso * &self.gen_u * &self.m_iso_inv).amax()
    }

    /// `max |gen_zd + P - gen_z|`.
    pub fn split_defect(&self) -> f64 {
        (&self.gen_zd + &self.perturbation - &self.gen_z).amax()
    }
}

/// Discrete harmonic extension with flux data: solves `K ψ = B φ`.
///
/// `phi` is a free-dof vector that must vanish off the Γ0 dofs.
pub fn discrete_neumann_map(ops: &DiscreteOperators, phi: &DVector<f64>) -> Result<DVector<f64>> {
    let n = ops.n_free();
    if phi.len() != n {
        return Err(MgtError::Shape(format!("boundary vector has length {}, expected {n}", phi.len())));
    }
    let on_gamma0 = |i: usize| ops.dofs.gamma0_dofs.binary_search(&i).is_ok();
    if let Some(i) = (0..n).find(|&i| phi[i] != 0.0 && !on_gamma0(i)) {
        return Err(MgtError::Validation(format!("boundary data is nonzero at dof {i}, which is not on Γ0")));
    }
    let lu = BandedLu::factor(&ops.stiffness).map_err(|e| MgtError::SingularStiffness(e.to_string()))?;
    Ok(lu.solve(&spmv(&ops.boundary, phi)))
}

/// Adjoint of the discrete Neumann map (L²(Ω) → L²(Γ0)) applied to `v`,
/// returned as values on the Γ0 dofs: `B₀₀⁻¹ (B K⁻¹ M v)|Γ0`.
pub fn neumann_adjoint(ops: &DiscreteOperators, v: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = BandedLu::factor(&ops.stiffness).map_err(|e| MgtError::SingularStiffness(e.to_string()))?;
    let w = lu.solve(&spmv(&ops.mass, v));
    let bw = spmv(&ops.boundary, &w);
    let idx = &ops.dofs.gamma0_dofs;
    let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| bw[i]));
    let chol = ops
        .boundary_block()
        .cholesky()
        .ok_or_else(|| MgtError::Singular("Γ0 boundary mass is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// Coordinate-format text dump, one `row col value` line per stored entry.
pub fn dump_coordinate(a: &CsrMatrix<f64>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "% {} {} {}", a.nrows(), a.ncols(), a.nnz());
    for (i, j, v) in a.triplet_iter() {
        let _ = writeln!(s, "{i} {j} {v:.16e}");
    }
    s
}

/// Uniform field helper for per-cell data.
pub fn per_cell(mesh: &MeshGeometry, f: impl Fn([f64; 2]) -> f64) -> ScalarField {
    ScalarField::PerCell((0..mesh.n_cells()).map(|c| f(mesh.cell_centroid(c))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, partition_boundary, DomainSpec};
    use crate::linalg::{quad, symmetric_eigenvalues};
    use crate::model::derive_params;

    fn interval(n: usize) -> MeshGeometry {
        build_mesh(&DomainSpec::Interval { a: 0.0, b: 1.0 }, &[n]).unwrap()
    }

    fn critical() -> PhysicalParams {
        derive_params(1.0, 1.0, 0.0, 1.0, ScalarField::Constant(1.0)).unwrap()
    }

    #[test]
    fn textbook_1d_matrices() {
        let mesh = interval(4);
        let part = partition_boundary(&mesh, [-1.0, 0.0]).unwrap();
        let ops = assemble_fem(&mesh, &part, &critical()).unwrap();
        assert_eq!(ops.n_free(), 4); // x = 0.25, 0.5, 0.75, 1
        let k = to_dense(&ops.stiffness);
        let h = 0.25;
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[2.0, -1.0, 0.0, 0.0, -1.0, 2.0, -1.0, 0.0, 0.0, -1.0, 2.0, -1.0, 0.0, 0.0, -1.0, 1.0],
        ) / h;
        assert!((k - expect).amax() < 1e-12);
        let b = to_dense(&ops.boundary);
        let mut eb = DMatrix::zeros(4, 4);
        eb[(3, 3)] = 1.0;
        assert_eq!(b, eb);
        assert_eq!(ops.dofs.gamma0_dofs, vec![3]);
    }

    #[test]
    fn constants_are_in_the_kernel_before_elimination() {
        let mesh = build_mesh(&DomainSpec::Rectangle { x: (0.0, 2.0), y: (-1.0, 1.0) }, &[5, 4]).unwrap();
        let part = partition_boundary(&mesh, [-1.0, -2.0]).unwrap();
        let ops = assemble_fem(&mesh, &part, &critical()).unwrap();
        let one = DVector::from_element(mesh.n_vertices(), 1.0);
        assert!(spmv(&ops.stiffness_full, &one).amax() < 1e-12);
        assert!(quad(&ops.stiffness_full, &one).abs() < 1e-12);
        assert!((quad(&ops.mass_full, &one) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn spd_and_boundary_rank() {
        let mesh = build_mesh(&DomainSpec::Rectangle { x: (0.0, 1.0), y: (0.0, 1.0) }, &[4, 3]).unwrap();
        let part = partition_boundary(&mesh, [-0.5, -0.5]).unwrap();
        let ops = assemble_fem(&mesh, &part, &critical()).unwrap();
        for a in [&ops.mass, &ops.stiffness] {
            let d = to_dense(a);
            assert!((&d - d.transpose()).amax() < 1e-14);
            assert!(symmetric_eigenvalues(&d)[0] > 0.0);
        }
        let b = to_dense(&ops.boundary);
        assert!((&b - b.transpose()).amax() < 1e-14);
        let ev = symmetric_eigenvalues(&b);
        assert!(ev[0] > -1e-14);
        let rank = ev.iter().filter(|&&x| x > 1e-12).count();
        // Γ0 = right + top, corner vertices shared with Γ1 eliminated
        assert_eq!(rank, ops.dofs.gamma0_dofs.len());
        assert_eq!(rank, 3 + 4 - 1);
    }

    #[test]
    fn weighted_mass_mirror_of_gamma() {
        let mesh = build_mesh(&DomainSpec::Rectangle { x: (0.0, 1.0), y: (0.0, 1.0) }, &[3, 3]).unwrap();
        let part = partition_boundary(&mesh, [-1.0, -1.0]).unwrap();
        let p0 = derive_params(2.0, 1.5, 0.3, 1.0, ScalarField::Constant(1.0)).unwrap();
        let alpha = per_cell(&mesh, |x| 1.0 + x[0] * x[1]);
        let p = p0.with_alpha(alpha).unwrap();
        let ops = assemble_fem(&mesh, &part, &p).unwrap();
        let lhs = to_dense(&ops.mass_gamma);
        let rhs = to_dense(&ops.mass_alpha) - to_dense(&ops.mass) * p.critical_alpha();
        assert!((lhs - rhs).amax() < 1e-12);

        let ops = assemble_fem(&interval(6), &partition_boundary(&interval(6), [-1.0, 0.0]).unwrap(), &critical()).unwrap();
        assert_eq!(to_dense(&ops.mass_gamma).amax(), 0.0);
    }

    #[test]
    fn empty_gamma1_is_singular() {
        let mesh = interval(4);
        let part = BoundaryPartition::prescribed(&mesh, vec![0, 1], vec![]).unwrap();
        assert!(matches!(assemble_fem(&mesh, &part, &critical()), Err(MgtError::SingularStiffness(_))));
    }

    #[test]
    fn per_cell_alpha_length_is_checked() {
        let mesh = interval(4);
        let part = partition_boundary(&mesh, [-1.0, 0.0]).unwrap();
        let p = critical().with_alpha(ScalarField::PerCell(vec![1.0; 3])).unwrap();
        assert!(matches!(assemble_fem(&mesh, &part, &p), Err(MgtError::Shape(_))));
    }

    #[test]
    fn shifted_solver_inverts_pencil() {
        let mesh = build_mesh(&DomainSpec::Rectangle { x: (0.0, 1.0), y: (0.0, 1.0) }, &[3, 4]).unwrap();
        let part = partition_boundary(&mesh, [-1.0, -1.0]).unwrap();
        let p = derive_params(1.3, 0.7, 0.2, 0.8, ScalarField::Constant(2.0)).unwrap();
        let ops = assemble_fem(&mesh, &part, &p).unwrap();
        let sys = ops.companion(&p);
        let (j, e) = sys.dense_pencil();
        let r = DVector::from_fn(3 * sys.n(), |i, _| ((i * 7 % 11) as f64) - 5.0);
        for sigma in [0.0, 0.5, -2.0, 400.0] {
            let x = sys.shifted_solver(sigma).unwrap().solve(&r).unwrap();
            let res = (&j - &e * sigma) * &x - &r;
            assert!(res.amax() < 1e-9 * r.amax().max(1.0), "sigma {sigma}: {}", res.amax());
        }
        let x = DVector::from_fn(3 * sys.n(), |i, _| (i as f64 * 0.37).cos());
        assert!((sys.apply_j(&x).unwrap() - &j * &x).amax() < 1e-12);
        assert!((sys.apply_e(&x).unwrap() - &e * &x).amax() < 1e-12);
    }

    #[test]
    fn neumann_map_basics() {
        let mesh = build_mesh(&DomainSpec::Rectangle { x: (0.0, 1.0), y: (0.0, 1.0) }, &[4, 4]).unwrap();
        let part = partition_boundary(&mesh, [-1.0, -1.0]).unwrap();
        let ops = assemble_fem(&mesh, &part, &critical()).unwrap();
        let n = ops.n_free();
        assert_eq!(discrete_neumann_map(&ops, &DVector::zeros(n)).unwrap().amax(), 0.0);

        let mut interior = DVector::zeros(n);
        let off = (0..n).find(|i| !ops.dofs.gamma0_dofs.contains(i)).unwrap();
        interior[off] = 1.0;
        assert!(discrete_neumann_map(&ops, &interior).is_err());

        let mut f = DVector::zeros(n);
        let mut g = DVector::zeros(n);
        for (k, &i) in ops.dofs.gamma0_dofs.iter().enumerate() {
            f[i] = (k as f64).sin();
            g[i] = 1.0 + k as f64;
        }
        let lin = discrete_neumann_map(&ops, &(&f * 2.5 - &g * 0.5)).unwrap();
        let sep = discrete_neumann_map(&ops, &f).unwrap() * 2.5 - discrete_neumann_map(&ops, &g).unwrap() * 0.5;
        assert!((lin - &sep).amax() <= 1e-13 * sep.amax().max(1.0));
    }
}
