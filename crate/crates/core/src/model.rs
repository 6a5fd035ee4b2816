//! Physical parameters, the state change of variables `(u, u_t, u_tt) ↦ (u, z, z_t)`
//! with `z = u_t + (c²/b) u`, and the standing-assumption diagnostics.

use nalgebra::DVector;

use crate::error::{ensure_finite, MgtError, Result};
use crate::geometry::{partition_boundary, MeshGeometry, Point};

/// A scalar coefficient on Ω: one value everywhere, or one value per mesh cell.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarField {
    Constant(f64),
    PerCell(Vec<f64>),
}

impl ScalarField {
    pub fn on_cell(&self, cell: usize) -> f64 {
        match self {
            ScalarField::Constant(v) => *v,
            ScalarField::PerCell(v) => v[cell],
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            ScalarField::Constant(v) => std::slice::from_ref(v),
            ScalarField::PerCell(v) => v,
        }
    }

    pub fn min(&self) -> f64 {
        self.values().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        match self {
            ScalarField::Constant(v) => ScalarField::Constant(f(*v)),
            ScalarField::PerCell(v) => ScalarField::PerCell(v.iter().map(|&x| f(x)).collect()),
        }
    }

    /// The common value if the field is spatially uniform.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            ScalarField::Constant(v) => Some(*v),
            ScalarField::PerCell(v) => {
                let first = *v.first()?;
                v.iter().all(|&x| x == first).then_some(first)
            }
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        self.values().iter().all(|&x| x == 0.0)
    }

    pub(crate) fn check_len(&self, n_cells: usize) -> Result<()> {
        match self {
            ScalarField::PerCell(v) if v.len() != n_cells => Err(MgtError::Shape(format!(
                "per-cell field has {} values for {n_cells} cells",
                v.len()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub tau: f64,
    pub c: f64,
    pub delta: f64,
    /// `delta + tau * c²`.
    pub b: f64,
    pub eta: f64,
    pub alpha: ScalarField,
    /// `alpha - tau * c² / b`.
    pub gamma: ScalarField,
}

pub fn derive_params(tau: f64, c: f64, delta: f64, eta: f64, alpha: ScalarField) -> Result<PhysicalParams> {
    for (name, v) in [("tau", tau), ("c", c), ("delta", delta), ("eta", eta)] {
        ensure_finite(name, v)?;
    }
    if let Some(bad) = alpha.values().iter().find(|v| !v.is_finite()) {
        return Err(MgtError::Validation(format!("alpha must be finite, got {bad}")));
    }
    if tau <= 0.0 {
        return Err(MgtError::Validation(format!("tau must be positive, got {tau}")));
    }
    if c <= 0.0 {
        return Err(MgtError::Validation(format!("c must be positive, got {c}")));
    }
    if delta < 0.0 {
        return Err(MgtError::Validation(format!("delta must be non-negative, got {delta}")));
    }
    let b = delta + tau * c * c;
    assert!(b > 0.0, "b = delta + tau c^2 must be positive");
    let crit = tau * c * c / b;
    let gamma = alpha.map(|a| a - crit);
    Ok(PhysicalParams { tau, c, delta, b, eta, alpha, gamma })
}

impl PhysicalParams {
    /// `c² / b`, the rate in `z = u_t + (c²/b) u`.
    pub fn k(&self) -> f64 {
        self.c * self.c / self.b
    }

    /// The value of α at which γ vanishes: `tau c² / b`.
    pub fn critical_alpha(&self) -> f64 {
        self.tau * self.c * self.c / self.b
    }

    pub fn gamma_range(&self) -> (f64, f64) {
        (self.gamma.min(), self.gamma.max())
    }

    /// Same constants with a different α field.
    pub fn with_alpha(&self, alpha: ScalarField) -> Result<PhysicalParams> {
        derive_params(self.tau, self.c, self.delta, self.eta, alpha)
    }

    pub fn with_eta(&self, eta: f64) -> Result<PhysicalParams> {
        derive_params(self.tau, self.c, self.delta, eta, self.alpha.clone())
    }
}

/// Coefficients of `(u, u_t, u_tt)` on the free degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTriple {
    pub xi1: DVector<f64>,
    pub xi2: DVector<f64>,
    pub xi3: DVector<f64>,
}

/// Coefficients of `(u, z, z_t)` on the free degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct ZStateTriple {
    pub xi1: DVector<f64>,
    pub xi2: DVector<f64>,
    pub xi3: DVector<f64>,
}

macro_rules! triple_common {
    ($t:ty) => {
        impl $t {
            pub fn new(xi1: DVector<f64>, xi2: DVector<f64>, xi3: DVector<f64>) -> Result<Self> {
                if xi1.len() != xi2.len() || xi1.len() != xi3.len() {
                    return Err(MgtError::Shape(format!(
                        "component lengths differ: {}, {}, {}",
                        xi1.len(),
                        xi2.len(),
                        xi3.len()
                    )));
                }
                Ok(Self { xi1, xi2, xi3 })
            }

            pub fn zeros(n: usize) -> Self {
                Self { xi1: DVector::zeros(n), xi2: DVector::zeros(n), xi3: DVector::zeros(n) }
            }

            /// Number of free degrees of freedom per component.
            pub fn len(&self) -> usize {
                self.xi1.len()
            }

            pub fn is_empty(&self) -> bool {
                self.xi1.is_empty()
            }

            /// Stacked `[xi1; xi2; xi3]`.
            pub fn to_flat(&self) -> DVector<f64> {
                let n = self.len();
                let mut out = DVector::zeros(3 * n);
                out.rows_mut(0, n).copy_from(&self.xi1);
                out.rows_mut(n, n).copy_from(&self.xi2);
                out.rows_mut(2 * n, n).copy_from(&self.xi3);
                out
            }

            pub fn from_flat(v: &DVector<f64>) -> Result<Self> {
                if v.len() % 3 != 0 {
                    return Err(MgtError::Shape(format!("flat state length {} is not a multiple of 3", v.len())));
                }
                let n = v.len() / 3;
                Ok(Self {
                    xi1: v.rows(0, n).into_owned(),
                    xi2: v.rows(n, n).into_owned(),
                    xi3: v.rows(2 * n, n).into_owned(),
                })
            }

            pub fn scaled(&self, a: f64) -> Self {
                Self { xi1: &self.xi1 * a, xi2: &self.xi2 * a, xi3: &self.xi3 * a }
            }

            pub fn is_finite(&self) -> bool {
                self.xi1.iter().chain(self.xi2.iter()).chain(self.xi3.iter()).all(|x| x.is_finite())
            }
        }
    };
}

triple_common!(StateTriple);
triple_common!(ZStateTriple);

pub fn apply_m(state: &StateTriple, params: &PhysicalParams) -> Result<ZStateTriple> {
    let k = params.k();
    ZStateTriple::new(
        state.xi1.clone(),
        &state.xi2 + &state.xi1 * k,
        &state.xi3 + &state.xi2 * k,
    )
}

pub fn apply_m_inverse(state: &ZStateTriple, params: &PhysicalParams) -> Result<StateTriple> {
    let k = params.k();
    StateTriple::new(
        state.xi1.clone(),
        &state.xi2 - &state.xi1 * k,
        &state.xi3 - &state.xi2 * k + &state.xi1 * (k * k),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Check { passed, detail: detail.into() }
    }
}

/// Pass/fail per standing assumption of the stabilisation result.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionDiagnostics {
    pub gamma_nonnegative: Check,
    pub eta_positive: Check,
    pub x0_outside: Check,
    pub partition_consistent: Check,
}

impl AssumptionDiagnostics {
    pub fn all_pass(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.passed)
    }

    pub fn checks(&self) -> [(&'static str, &Check); 4] {
        [
            ("gamma_nonnegative", &self.gamma_nonnegative),
            ("eta_positive", &self.eta_positive),
            ("x0_outside", &self.x0_outside),
            ("partition_consistent", &self.partition_consistent),
        ]
    }

    /// True when the feedback gain has the wrong sign.
    pub fn anti_damping(&self) -> bool {
        self.eta_positive.detail.contains("anti-damping")
    }
}

pub fn validate_stability_assumptions(
    params: &PhysicalParams,
    mesh: &MeshGeometry,
    x0: Point,
) -> AssumptionDiagnostics {
    let (gmin, gmax) = params.gamma_range();
    let gamma_nonnegative = Check::new(gmin >= 0.0, format!("gamma in [{gmin:.6e}, {gmax:.6e}]"));

    let eta = params.eta;
    let eta_positive = if eta > 0.0 {
        Check::new(true, format!("eta = {eta}"))
    } else if eta < 0.0 {
        Check::new(false, format!("eta = {eta} < 0: anti-damping feedback"))
    } else {
        Check::new(false, "eta = 0: no boundary feedback")
    };

    let dist = mesh.domain.distance_to_closure(x0);
    let x0_outside = Check::new(
        dist > crate::geometry::OUTSIDE_TOL,
        format!("distance from x0 to closed domain = {dist:.6e}"),
    );

    let partition_consistent = match partition_boundary(mesh, x0) {
        Ok(p) => {
            let ok = p.sign_consistent(mesh);
            Check::new(
                ok,
                format!("|Γ0| = {} facets, |Γ1| = {} facets, sign check {}", p.gamma0.len(), p.gamma1.len(), if ok { "ok" } else { "failed" }),
            )
        }
        Err(e) => Check::new(false, e.to_string()),
    };

    AssumptionDiagnostics { gamma_nonnegative, eta_positive, x0_outside, partition_consistent }
}
