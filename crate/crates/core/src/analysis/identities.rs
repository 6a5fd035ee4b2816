//! Time-integrated energy and multiplier identities evaluated on trajectories.
//!
//! With `z = u_t + k u`, `k = c²/b`, the semi-discrete solution satisfies
//! `τ M z_tt + b K z + bη B z_t + M_γ u_tt = M f`. Testing with `z_t`, `z` and
//! `h·∇z` (where `h = x - x0`) gives the three identities below; every time
//! integral uses the trapezoidal rule on the trajectory samples.

use std::str::FromStr;

use nalgebra::DVector;
use nalgebra_sparse::CsrMatrix;

use crate::assembly::Problem;
use crate::error::{MgtError, Result};
use crate::evolution::Trajectory;
use crate::geometry::{eval_h, Point, GAUSS2_NODES, GAUSS2_WEIGHTS};
use crate::linalg::{bilinear, csr_from_triplets, quad};

use super::energy::energy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identity {
    /// `E1(t) + ∫ bη‖z_t‖²_Γ0 + ∫ ‖γ^½ u_tt‖² = E1(s) + ∫ (f, z_t)`
    E1id,
    /// `∫ [b‖∇z‖² - τ‖z_t‖²] = -∫ (γu_tt, z) - [τ(z_t, z) + (bη/2)‖z‖²_Γ0]ₛᵗ + ∫ (f, z)`
    Zmul,
    /// The `h·∇z` multiplier identity with the boundary term `(b+1)∫∫_Γ0 z_t² h·ν`.
    HzmultPrinted,
    /// The `h·∇z` multiplier identity rederived for general τ and η, see [`MultiplierForms`].
    HzmultDerived,
}

impl Identity {
    pub const ALL: [Identity; 4] = [Identity::E1id, Identity::Zmul, Identity::HzmultPrinted, Identity::HzmultDerived];

    pub fn tag(self) -> &'static str {
        match self {
            Identity::E1id => "e1id",
            Identity::Zmul => "zmul",
            Identity::HzmultPrinted => "hzmult",
            Identity::HzmultDerived => "hzmult-derived",
        }
    }
}

impl FromStr for Identity {
    type Err = MgtError;

    fn from_str(s: &str) -> Result<Self> {
        Identity::ALL
            .into_iter()
            .find(|i| i.tag() == s)
            .ok_or_else(|| MgtError::UnknownIdentity(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct IdentityResidual {
    pub which: Identity,
    pub times: Vec<f64>,
    /// Both sides on `[0, t]` for every sample `t`.
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// `max |lhs - rhs| / E(0)` (unnormalised when `E(0) = 0`).
    pub residual: f64,
}

/// Bilinear forms of the `h·∇z` multiplier on the free dofs.
///
/// For the P1 interpolants `v`, `w`:
/// * `h_grad`: `(v, h·∇w)`, and `h_grad_gamma` the same weighted by γ,
/// * `g0_mass`: `∫_Γ0 v w h·ν`,
/// * `g0_tangential`: `∫_Γ0 ∂_T v ∂_T w h·ν` (zero in 1D),
/// * `g0_cross`: `∫_Γ0 v (h·T) ∂_T w` (zero in 1D),
/// * `g1_normal`: `∫_Γ1 (∂_ν v)(∂_ν w) h·ν` with the normal derivative taken
///   from the adjacent cell gradient.
///
/// The derived identity then reads
///
/// ```text
/// ∫ [(τn/2)‖z_t‖² - (b(n-2)/2)‖∇z‖²]
///   = ∫∫_Γ0 [(τ + bη²)/2 z_t² - (b/2)|∇_T z|²] h·ν - bη ∫∫_Γ0 z_t (h·T) ∂_T z
///     + (b/2) ∫∫_Γ1 (∂_ν z)² h·ν - τ (z_t, h·∇z)|ₛᵗ - ∫ (γ u_tt, h·∇z) + ∫ (f, h·∇z)
/// ```
#[derive(Debug, Clone)]
pub struct MultiplierForms {
    pub x0: Point,
    pub h_grad: CsrMatrix<f64>,
    pub h_grad_gamma: CsrMatrix<f64>,
    pub g0_mass: CsrMatrix<f64>,
    pub g0_tangential: CsrMatrix<f64>,
    pub g0_cross: CsrMatrix<f64>,
    pub g1_normal: CsrMatrix<f64>,
}

impl MultiplierForms {
    pub fn new(problem: &Problem, x0: Point) -> Self {
        let mesh = &problem.mesh;
        let dofs = &problem.ops.dofs;
        let free = |v: usize| dofs.free_of_vertex[v];
        let push = |t: &mut Vec<(usize, usize, f64)>, vi: usize, vj: usize, val: f64| {
            if let (Some(i), Some(j)) = (free(vi), free(vj)) {
                t.push((i, j, val));
            }
        };

        let (mut hg, mut hgg) = (Vec::new(), Vec::new());
        for (ci, cell) in mesh.cells.iter().enumerate() {
            let grads = mesh.basis_gradients(ci);
            let meas = mesh.cell_measure(ci);
            let gamma = problem.params.gamma.on_cell(ci);
            // (point, weight, basis values at the point)
            let rule: Vec<(Point, f64, Vec<f64>)> = match mesh.dim {
                1 => {
                    let (a, b) = (mesh.vertices[cell[0]][0], mesh.vertices[cell[1]][0]);
                    GAUSS2_NODES
                        .iter()
                        .zip(GAUSS2_WEIGHTS)
                        .map(|(&s, w)| ([a + s * (b - a), 0.0], w * meas, vec![1.0 - s, s]))
                        .collect()
                }
                _ => (0..3)
                    .map(|e| {
                        let (p, q) = (mesh.vertices[cell[e]], mesh.vertices[cell[(e + 1) % 3]]);
                        let mut phi = vec![0.0; 3];
                        phi[e] = 0.5;
                        phi[(e + 1) % 3] = 0.5;
                        ([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])], meas / 3.0, phi)
                    })
                    .collect(),
            };
            for (li, &vi) in cell.iter().enumerate() {
                for (lj, &vj) in cell.iter().enumerate() {
                    let val: f64 = rule
                        .iter()
                        .map(|(x, w, phi)| {
                            let h = eval_h(*x, x0);
                            w * phi[li] * (h[0] * grads[lj][0] + h[1] * grads[lj][1])
                        })
                        .sum();
                    push(&mut hg, vi, vj, val);
                    push(&mut hgg, vi, vj, gamma * val);
                }
            }
        }

        let (mut g0m, mut g0t, mut g0c, mut g1n) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (fi, f) in mesh.facets.iter().enumerate() {
            let hn_at = |s: f64| {
                let h = eval_h(mesh.facet_point(f, s), x0);
                h[0] * f.normal[0] + h[1] * f.normal[1]
            };
            if problem.partition.is_gamma0(fi) {
                match f.vertices.as_slice() {
                    [v] => push(&mut g0m, *v, *v, f.measure * hn_at(0.0)),
                    [va, vb] => {
                        let ids = [*va, *vb];
                        let (a, b) = (mesh.vertices[*va], mesh.vertices[*vb]);
                        let tangent = [(b[0] - a[0]) / f.measure, (b[1] - a[1]) / f.measure];
                        let dt = [-1.0 / f.measure, 1.0 / f.measure];
                        for (&s, w) in GAUSS2_NODES.iter().zip(GAUSS2_WEIGHTS) {
                            let phi = [1.0 - s, s];
                            let hn = hn_at(s);
                            let h = eval_h(mesh.facet_point(f, s), x0);
                            let ht = h[0] * tangent[0] + h[1] * tangent[1];
                            let wq = w * f.measure;
                            for p in 0..2 {
                                for q in 0..2 {
                                    push(&mut g0m, ids[p], ids[q], wq * phi[p] * phi[q] * hn);
                                    push(&mut g0t, ids[p], ids[q], wq * dt[p] * dt[q] * hn);
                                    push(&mut g0c, ids[p], ids[q], wq * phi[p] * ht * dt[q]);
                                }
                            }
                        }
                    }
                    _ => unreachable!("facets have one or two vertices"),
                }
            } else {
                let cell = &mesh.cells[f.cell];
                let grads = mesh.basis_gradients(f.cell);
                let dn: Vec<f64> = grads.iter().map(|g| g[0] * f.normal[0] + g[1] * f.normal[1]).collect();
                let int_hn: f64 = match f.vertices.len() {
                    1 => f.measure * hn_at(0.0),
                    _ => GAUSS2_NODES.iter().zip(GAUSS2_WEIGHTS).map(|(&s, w)| w * f.measure * hn_at(s)).sum(),
                };
                for (li, &vi) in cell.iter().enumerate() {
                    for (lj, &vj) in cell.iter().enumerate() {
                        push(&mut g1n, vi, vj, dn[li] * dn[lj] * int_hn);
                    }
                }
            }
        }

        let n = dofs.n_free();
        MultiplierForms {
            x0,
            h_grad: csr_from_triplets(n, &hg),
            h_grad_gamma: csr_from_triplets(n, &hgg),
            g0_mass: csr_from_triplets(n, &g0m),
            g0_tangential: csr_from_triplets(n, &g0t),
            g0_cross: csr_from_triplets(n, &g0c),
            g1_normal: csr_from_triplets(n, &g1n),
        }
    }
}

/// Per-sample integrands and endpoint terms of one identity.
struct Terms {
    /// integrated on the left
    lhs_rate: f64,
    /// left side point value (E1 for e1id, zero otherwise)
    lhs_point: f64,
    /// integrated on the right
    rhs_rate: f64,
    /// `B(t)` in a `-[B]ₛᵗ` endpoint term on the right
    rhs_bracket: f64,
}

fn cumulative_trapezoid(times: &[f64], rate: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..times.len() {
        acc += 0.5 * (times[i] - times[i - 1]) * (rate[i] + rate[i - 1]);
        out.push(acc);
    }
    out
}

/// Evaluates an identity on `[0, t]` for every sample `t` of the trajectory.
///
/// `x0` defaults to the one stored in the problem's partition and is only
/// needed by the multiplier identities.
pub fn identity_residual(
    problem: &Problem,
    traj: &Trajectory,
    which: Identity,
    x0: Option<Point>,
) -> Result<IdentityResidual> {
    if traj.is_empty() {
        return Err(MgtError::Validation("empty trajectory".into()));
    }
    let (ops, p) = (&problem.ops, &problem.params);
    let (tau, b, eta, k) = (p.tau, p.b, p.eta, p.k());
    let n_dim = problem.mesh.dim as f64;
    let forms = match which {
        Identity::HzmultPrinted | Identity::HzmultDerived => {
            let x0 = x0.or(problem.partition.x0).ok_or_else(|| {
                MgtError::Validation("the h·∇z multiplier needs an observation point x0".into())
            })?;
            Some(MultiplierForms::new(problem, x0))
        }
        _ => None,
    };

    let zero = DVector::zeros(ops.n_free());
    let terms: Vec<Terms> = traj
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (u, ut, utt) = (&s.xi1, &s.xi2, &s.xi3);
            let z = ut + u * k;
            let zt = utt + ut * k;
            let f = traj.source_at(i).unwrap_or(&zero);
            match (which, &forms) {
                (Identity::E1id, _) => Terms {
                    lhs_rate: b * eta * quad(&ops.boundary, &zt) + quad(&ops.mass_gamma, utt),
                    lhs_point: energy(s, ops, p).e1,
                    rhs_rate: bilinear(&ops.mass, f, &zt),
                    rhs_bracket: 0.0,
                },
                (Identity::Zmul, _) => Terms {
                    lhs_rate: b * quad(&ops.stiffness, &z) - tau * quad(&ops.mass, &zt),
                    lhs_point: 0.0,
                    rhs_rate: -bilinear(&ops.mass_gamma, utt, &z) + bilinear(&ops.mass, f, &z),
                    rhs_bracket: tau * bilinear(&ops.mass, &zt, &z) + 0.5 * b * eta * quad(&ops.boundary, &z),
                },
                (Identity::HzmultPrinted, Some(m)) => Terms {
                    lhs_rate: 0.5 * n_dim * quad(&ops.mass, &zt) - 0.5 * b * (n_dim - 2.0) * quad(&ops.stiffness, &z),
                    lhs_point: 0.0,
                    rhs_rate: (b + 1.0) * quad(&m.g0_mass, &zt) - bilinear(&m.h_grad_gamma, utt, &z)
                        + bilinear(&m.h_grad, f, &z),
                    rhs_bracket: bilinear(&m.h_grad, &zt, &z),
                },
                (Identity::HzmultDerived, Some(m)) => Terms {
                    lhs_rate: 0.5 * tau * n_dim * quad(&ops.mass, &zt)
                        - 0.5 * b * (n_dim - 2.0) * quad(&ops.stiffness, &z),
                    lhs_point: 0.0,
                    rhs_rate: 0.5 * (tau + b * eta * eta) * quad(&m.g0_mass, &zt)
                        - 0.5 * b * quad(&m.g0_tangential, &z)
                        - b * eta * bilinear(&m.g0_cross, &zt, &z)
                        + 0.5 * b * quad(&m.g1_normal, &z)
                        - bilinear(&m.h_grad_gamma, utt, &z)
                        + bilinear(&m.h_grad, f, &z),
                    rhs_bracket: tau * bilinear(&m.h_grad, &zt, &z),
                },
                _ => unreachable!("multiplier forms are built for the multiplier identities"),
            }
        })
        .collect();

    let times = &traj.times;
    let lhs_int = cumulative_trapezoid(times, &terms.iter().map(|t| t.lhs_rate).collect::<Vec<_>>());
    let rhs_int = cumulative_trapezoid(times, &terms.iter().map(|t| t.rhs_rate).collect::<Vec<_>>());
    let (lp0, rb0) = (terms[0].lhs_point, terms[0].rhs_bracket);
    let lhs: Vec<f64> = terms.iter().zip(&lhs_int).map(|(t, i)| t.lhs_point + i).collect();
    let rhs: Vec<f64> = terms
        .iter()
        .zip(&rhs_int)
        .map(|(t, i)| lp0 + i - (t.rhs_bracket - rb0))
        .collect();
    let e0 = energy(&traj.states[0], ops, p).total;
    let dev = lhs.iter().zip(&rhs).map(|(l, r)| (l - r).abs()).fold(0.0, f64::max);
    let residual = if e0 > 0.0 { dev / e0 } else { dev };
    Ok(IdentityResidual { which, times: times.clone(), lhs, rhs, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{integrate, initial_state, InitialPreset, Scheme};
    use crate::geometry::{build_mesh, partition_boundary, DomainSpec};
    use crate::linalg::to_dense;
    use crate::model::{derive_params, ScalarField, StateTriple};

    fn problem_1d(n: usize, alpha: f64, eta: f64) -> Problem {
        let mesh = build_mesh(&DomainSpec::Interval { a: 0.0, b: 1.0 }, &[n]).unwrap();
        let part = partition_boundary(&mesh, [-1.0, 0.0]).unwrap();
        let p = derive_params(1.0, 1.0, 0.0, eta, ScalarField::Constant(alpha)).unwrap();
        Problem::new(mesh, part, p).unwrap()
    }

    #[test]
    fn tags_parse() {
        for i in Identity::ALL {
            assert_eq!(i.tag().parse::<Identity>().unwrap(), i);
        }
        assert!(matches!("bogus".parse::<Identity>(), Err(MgtError::UnknownIdentity(_))));
    }

    #[test]
    fn h_grad_matches_divergence_theorem() {
        // (v, h·∇w) + (w, h·∇v) = ∫_∂Ω v w h·ν - n (v, w); with w = 1 on a
        // mesh whose boundary is all Γ0 this checks the quadrature.
        let mesh = build_mesh(&DomainSpec::Rectangle { x: (0.0, 1.0), y: (0.0, 1.0) }, &[3, 3]).unwrap();
        let part = partition_boundary(&mesh, [-0.5, -0.5]).unwrap();
        let p = derive_params(1.0, 1.0, 0.0, 1.0, ScalarField::Constant(1.0)).unwrap();
        let pr = Problem::new(mesh, part, p).unwrap();
        let m = MultiplierForms::new(&pr, [-0.5, -0.5]);
        let h = to_dense(&m.h_grad);
        let sym = &h + h.transpose();
        let expect = to_dense(&m.g0_mass) - to_dense(&pr.ops.mass) * 2.0;
        // the Γ1 part of ∫ v w h·ν vanishes because Dirichlet dofs are eliminated
        assert!((sym - expect).amax() < 1e-12);
    }

    #[test]
    fn zero_trajectory_has_zero_residual() {
        let pr = problem_1d(10, 1.0, 1.0);
        let tr = integrate(&pr.companion(), &StateTriple::zeros(pr.n_free()), 1.0, 0.1, Scheme::ImplicitMidpoint, 1, None)
            .unwrap();
        for which in Identity::ALL {
            assert_eq!(identity_residual(&pr, &tr, which, None).unwrap().residual, 0.0);
        }
    }

    #[test]
    fn e1id_and_zmul_are_time_discretisation_error_only() {
        let pr = problem_1d(20, 1.5, 1.0);
        let s0 = initial_state(&InitialPreset::Bump { seed: 1 }, &pr.mesh, &pr.ops).unwrap();
        let run = |dt: f64| integrate(&pr.companion(), &s0, 1.0, dt, Scheme::ImplicitMidpoint, 1, None).unwrap();
        for which in [Identity::E1id, Identity::Zmul] {
            let r1 = identity_residual(&pr, &run(0.01), which, None).unwrap().residual;
            let r2 = identity_residual(&pr, &run(0.005), which, None).unwrap().residual;
            assert!(r1 < 1e-2, "{which:?}: {r1}");
            let ratio = r1 / r2;
            assert!(ratio > 3.0 && ratio < 5.0, "{which:?}: {r1} -> {r2}");
        }
    }

    #[test]
    fn forced_e1id_uses_z_t_pairing() {
        let pr = problem_1d(16, 2.0, 0.5);
        let n = pr.n_free();
        let f = |t: f64| DVector::from_fn(n, |i, _| (t + i as f64 * 0.1).sin());
        let s0 = StateTriple::zeros(n);
        let run = |dt: f64| integrate(&pr.companion(), &s0, 1.0, dt, Scheme::ImplicitMidpoint, 1, Some(&f)).unwrap();
        let r1 = identity_residual(&pr, &run(0.01), Identity::E1id, None).unwrap();
        let r2 = identity_residual(&pr, &run(0.005), Identity::E1id, None).unwrap();
        let d = |r: &IdentityResidual| r.lhs.iter().zip(&r.rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = r2.lhs.last().unwrap().abs();
        assert!(d(&r1) < 1e-3 * scale, "{} vs {}", d(&r1), scale);
        assert!(d(&r1) / d(&r2) > 3.0);
    }

    #[test]
    fn hzmult_needs_x0() {
        let mesh = build_mesh(&DomainSpec::Interval { a: 0.0, b: 1.0 }, &[6]).unwrap();
        let part = crate::geometry::BoundaryPartition::prescribed(&mesh, vec![1], vec![0]).unwrap();
        let p = derive_params(1.0, 1.0, 0.0, 1.0, ScalarField::Constant(1.0)).unwrap();
        let pr = Problem::new(mesh, part, p).unwrap();
        let tr = integrate(&pr.companion(), &StateTriple::zeros(pr.n_free()), 0.2, 0.1, Scheme::ImplicitMidpoint, 1, None)
            .unwrap();
        assert!(identity_residual(&pr, &tr, Identity::HzmultDerived, None).is_err());
        assert!(identity_residual(&pr, &tr, Identity::HzmultDerived, Some([-1.0, 0.0])).is_ok());
    }
}
