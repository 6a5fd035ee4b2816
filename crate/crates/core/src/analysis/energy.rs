use nalgebra::DVector;

use crate::assembly::DiscreteOperators;
use crate::evolution::Trajectory;
use crate::linalg::{bilinear, quad};
use crate::model::{apply_m, PhysicalParams, StateTriple, ZStateTriple};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    pub e0: f64,
    pub e1: f64,
    pub total: f64,
}

/// `E0 = ½ u_tᵀ M_α u_t + (c²/2) uᵀ K u` and
/// `E1 = (b/2) zᵀ K z + (τ/2) z_tᵀ M z_t + (c²/2b) u_tᵀ M_γ u_t`.
pub fn energy(state: &StateTriple, ops: &DiscreteOperators, params: &PhysicalParams) -> Energies {
    let k = params.k();
    let c2 = params.c * params.c;
    let (u, ut, utt) = (&state.xi1, &state.xi2, &state.xi3);
    let z = ut + u * k;
    let zt = utt + ut * k;
    let e0 = 0.5 * quad(&ops.mass_alpha, ut) + 0.5 * c2 * quad(&ops.stiffness, u);
    let e1 = 0.5 * params.b * quad(&ops.stiffness, &z)
        + 0.5 * params.tau * quad(&ops.mass, &zt)
        + 0.5 * k * quad(&ops.mass_gamma, ut);
    Energies { e0, e1, total: e0 + e1 }
}

/// The functional Σ on `(ξ1, ξ2, ξ3) = (u, z, z_t)`.
pub fn sigma(state: &ZStateTriple, ops: &DiscreteOperators, params: &PhysicalParams) -> f64 {
    let k = params.k();
    let c2 = params.c * params.c;
    let v = &state.xi2 - &state.xi1 * k;
    0.5 * c2 * quad(&ops.stiffness, &state.xi1)
        + 0.5 * quad(&ops.mass_alpha, &v)
        + 0.5 * k * quad(&ops.mass_gamma, &v)
        + 0.5 * params.b * quad(&ops.stiffness, &state.xi2)
        + 0.5 * params.tau * quad(&ops.mass, &state.xi3)
}

/// Inner product of `diag(K, bK, τM)` between two z-states.
pub fn gram_inner(x: &ZStateTriple, y: &ZStateTriple, ops: &DiscreteOperators, params: &PhysicalParams) -> f64 {
    bilinear(&ops.stiffness, &x.xi1, &y.xi1)
        + params.b * bilinear(&ops.stiffness, &x.xi2, &y.xi2)
        + params.tau * bilinear(&ops.mass, &x.xi3, &y.xi3)
}

/// Closed form of `⟨gen_zd ξ, ξ⟩` in the Gram metric:
/// `-k ξ1ᵀKξ1 - ξ3ᵀMξ3 - bη ξ3ᵀBξ3`.
pub fn dissipation_form(x: &ZStateTriple, ops: &DiscreteOperators, params: &PhysicalParams) -> f64 {
    -params.k() * quad(&ops.stiffness, &x.xi1)
        - quad(&ops.mass, &x.xi3)
        - params.b * params.eta * quad(&ops.boundary, &x.xi3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    pub t: f64,
    pub e0: f64,
    pub e1: f64,
    pub e: f64,
    pub sigma: f64,
    /// `bη z_tᵀ B z_t`
    pub boundary_dissipation: f64,
    /// `u_ttᵀ M_γ u_tt`
    pub interior_dissipation: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EnergyReport {
    pub samples: Vec<EnergySample>,
}

impl EnergyReport {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn total(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.e).collect()
    }

    pub fn e1(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.e1).collect()
    }

    /// `max |E1(t) - E1(0)| / E1(0)`.
    pub fn e1_drift(&self) -> f64 {
        let e10 = self.samples.first().map_or(0.0, |s| s.e1);
        let d = self.samples.iter().map(|s| (s.e1 - e10).abs()).fold(0.0, f64::max);
        if e10 > 0.0 {
            d / e10
        } else {
            d
        }
    }
}

pub fn energy_report(traj: &Trajectory, ops: &DiscreteOperators, params: &PhysicalParams) -> EnergyReport {
    let k = params.k();
    let samples = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| {
            let en = energy(s, ops, params);
            let zs = apply_m(s, params).expect("trajectory states are well shaped");
            let zt: DVector<f64> = &s.xi3 + &s.xi2 * k;
            EnergySample {
                t,
                e0: en.e0,
                e1: en.e1,
                e: en.e0 + en.e1,
                sigma: sigma(&zs, ops, params),
                boundary_dissipation: params.b * params.eta * quad(&ops.boundary, &zt),
                interior_dissipation: quad(&ops.mass_gamma, &s.xi3),
            }
        })
        .collect();
    EnergyReport { samples }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_fem;
    use crate::geometry::{build_mesh, partition_boundary, BoundaryPartition, DomainSpec};
    use crate::linalg::{generalized_symmetric_eigen, to_dense};
    use crate::model::{derive_params, ScalarField};
    use proptest::prelude::*;

    fn ops_2d(alpha: f64, eta: f64) -> (DiscreteOperators, PhysicalParams) {
        let mesh = build_mesh(&DomainSpec::Rectangle { x: (0.0, 1.0), y: (0.0, 1.5) }, &[4, 5]).unwrap();
        let part = partition_boundary(&mesh, [-0.3, -0.2]).unwrap();
        let p = derive_params(1.5, 0.8, 0.4, eta, ScalarField::Constant(alpha)).unwrap();
        (assemble_fem(&mesh, &part, &p).unwrap(), p)
    }

    #[test]
    fn zero_state_has_zero_energy() {
        let (ops, p) = ops_2d(2.0, 1.0);
        let z = StateTriple::zeros(ops.n_free());
        assert_eq!(energy(&z, &ops, &p), Energies { e0: 0.0, e1: 0.0, total: 0.0 });
        assert_eq!(sigma(&apply_m(&z, &p).unwrap(), &ops, &p), 0.0);
    }

    #[test]
    fn eigenmode_energies() {
        let mesh = build_mesh(&DomainSpec::Interval { a: 0.0, b: 1.0 }, &[16]).unwrap();
        let part = BoundaryPartition::all_dirichlet(&mesh);
        let p = derive_params(1.0, 1.0, 0.0, 0.0, ScalarField::Constant(1.0)).unwrap();
        let ops = assemble_fem(&mesh, &part, &p).unwrap();
        let (mu, v) = generalized_symmetric_eigen(&to_dense(&ops.stiffness), &to_dense(&ops.mass)).unwrap();
        let n = ops.n_free();
        let s = StateTriple::new(v.column(2).into_owned(), DVector::zeros(n), DVector::zeros(n)).unwrap();
        let en = energy(&s, &ops, &p);
        assert!((en.e0 - 0.5 * mu[2]).abs() < 1e-10 * mu[2]);
        assert!((en.e1 - 0.5 * mu[2]).abs() < 1e-10 * mu[2]);
    }

    proptest! {
        #[test]
        fn sigma_equals_energy_and_scales_quadratically(seed in proptest::collection::vec(-1.0f64..1.0, 3 * 24), a in -3.0f64..3.0) {
            let (ops, p) = ops_2d(3.0, 1.0);
            let n = ops.n_free();
            prop_assume!(3 * n <= seed.len());
            let s = StateTriple::from_flat(&DVector::from_column_slice(&seed[..3 * n])).unwrap();
            let en = energy(&s, &ops, &p);
            let sg = sigma(&apply_m(&s, &p).unwrap(), &ops, &p);
            prop_assert!((sg - en.total).abs() <= 1e-12 * en.total.max(1e-300));
            let scaled = energy(&s.scaled(a), &ops, &p);
            prop_assert!((scaled.total - a * a * en.total).abs() <= 1e-12 * (a * a * en.total).max(1e-300));
        }
    }
}
