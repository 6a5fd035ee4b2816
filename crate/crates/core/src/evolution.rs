//! Implicit time stepping of the companion system and the boundary trace Υ.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{CompanionSystem, DiscreteOperators};
use crate::error::{ensure_finite, MgtError, Result};
use crate::geometry::{MeshGeometry, Side};
use crate::linalg::{generalized_symmetric_eigen, quad, spmv, to_dense};
use crate::model::{PhysicalParams, StateTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ImplicitMidpoint,
    /// Second-order backward differentiation, started with one midpoint step.
    Bdf2,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ImplicitMidpoint => "implicit-midpoint",
            Scheme::Bdf2 => "bdf2",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = MgtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implicit-midpoint" | "midpoint" => Ok(Scheme::ImplicitMidpoint),
            "bdf2" | "backward-differentiation-2" => Ok(Scheme::Bdf2),
            other => Err(MgtError::Validation(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Right-hand side `f(t)` on the free dofs.
pub type Source<'a> = &'a (dyn Fn(f64) -> DVector<f64> + Sync);

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateTriple>,
    pub scheme: Scheme,
    pub dt: f64,
    pub stride: usize,
    /// `f` at each sampled time; `None` means zero source.
    pub sources: Option<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &StateTriple {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn source_at(&self, i: usize) -> Option<&DVector<f64>> {
        self.sources.as_ref().map(|s| &s[i])
    }

    /// Writes the binary dump: little-endian `u64` N, stride and record count,
    /// then per record `t` followed by the 3N state coefficients.
    pub fn write_dump(&self, w: &mut impl Write) -> Result<()> {
        let n = self.states.first().map_or(0, StateTriple::len);
        for h in [n as u64, self.stride as u64, self.len() as u64] {
            w.write_all(&h.to_le_bytes())?;
        }
        for (t, s) in self.times.iter().zip(&self.states) {
            w.write_all(&t.to_le_bytes())?;
            for v in s.to_flat().iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Reads a dump written by [`Trajectory::write_dump`] as `(stride, times, states)`.
pub fn read_dump(r: &mut impl Read) -> Result<(usize, Vec<f64>, Vec<StateTriple>)> {
    let mut buf = [0u8; 8];
    let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
        r.read_exact(&mut buf)?;
        Ok(buf)
    };
    let n = u64::from_le_bytes(next(r)?) as usize;
    let stride = u64::from_le_bytes(next(r)?) as usize;
    let count = u64::from_le_bytes(next(r)?) as usize;
    let mut times = Vec::with_capacity(count);
    let mut states = Vec::with_capacity(count);
    for _ in 0..count {
        times.push(f64::from_le_bytes(next(r)?));
        let mut flat = DVector::zeros(3 * n);
        for v in flat.iter_mut() {
            *v = f64::from_le_bytes(next(r)?);
        }
        states.push(StateTriple::from_flat(&flat)?);
    }
    Ok((stride, times, states))
}

fn load(sys: &CompanionSystem, f: &DVector<f64>) -> DVector<f64> {
    let n = sys.n();
    let mut out = DVector::zeros(3 * n);
    out.rows_mut(2 * n, n).copy_from(&spmv(&sys.load, f));
    out
}

/// Integrates `E x' = J x + (0, 0, M f)` from `t = 0`.
///
/// The grid is uniform with `ceil(t_final / dt)` steps (a ratio within `1e-9`
/// of an integer is rounded), so the last sample may overshoot `t_final` by
/// less than one step. Samples are kept every `stride` steps plus the last one.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    sys: &CompanionSystem,
    state0: &StateTriple,
    t_final: f64,
    dt: f64,
    scheme: Scheme,
    stride: usize,
    source: Option<Source<'_>>,
) -> Result<Trajectory> {
    ensure_finite("t_final", t_final)?;
    ensure_finite("dt", dt)?;
    if dt <= 0.0 {
        return Err(MgtError::Validation(format!("dt must be positive, got {dt}")));
    }
    if t_final < dt {
        return Err(MgtError::Validation(format!("t_final = {t_final} is smaller than dt = {dt}")));
    }
    if stride == 0 {
        return Err(MgtError::Validation("stride must be at least 1".into()));
    }
    let n = sys.n();
    if state0.len() != n {
        return Err(MgtError::Shape(format!("initial state has {} dofs, system has {n}", state0.len())));
    }
    let ratio = t_final / dt;
    let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio { ratio.round() } else { ratio.ceil() } as usize;

    let mid = sys.shifted_solver(2.0 / dt)?;
    let bdf = match scheme {
        Scheme::Bdf2 if steps > 1 => Some(sys.shifted_solver(1.5 / dt)?),
        _ => None,
    };

    let mut times = vec![0.0];
    let mut states = vec![state0.clone()];
    let mut sources = source.map(|f| vec![f(0.0)]);
    let mut x = state0.to_flat();
    let mut prev: Option<DVector<f64>> = None;
    for k in 0..steps {
        let t = k as f64 * dt;
        let next = match (&bdf, &prev) {
            (Some(solver), Some(xm1)) => {
                // (E - (2dt/3) J) x⁺ = E (4x - x⁻)/3 + (2dt/3) F(t + dt)
                let a = 2.0 * dt / 3.0;
                let mut rhs = sys.apply_e(&((&x * 4.0 - xm1) / 3.0))?;
                if let Some(f) = source {
                    rhs += load(sys, &f(t + dt)) * a;
                }
                solver.solve(&(rhs / -a))?
            }
            _ => {
                // (E - (dt/2) J) x⁺ = (E + (dt/2) J) x + dt F(t + dt/2)
                let a = 0.5 * dt;
                let mut rhs = sys.apply_e(&x)? + sys.apply_j(&x)? * a;
                if let Some(f) = source {
                    rhs += load(sys, &f(t + a)) * dt;
                }
                mid.solve(&(rhs / -a))?
            }
        };
        prev = Some(std::mem::replace(&mut x, next));
        let done = k + 1;
        if done % stride == 0 || done == steps {
            let tn = done as f64 * dt;
            times.push(tn);
            states.push(StateTriple::from_flat(&x)?);
            if let (Some(s), Some(f)) = (sources.as_mut(), source) {
                s.push(f(tn));
            }
        }
    }
    if !states.last().is_some_and(StateTriple::is_finite) {
        return Err(MgtError::Singular("time stepping produced non-finite values".into()));
    }
    Ok(Trajectory { times, states, scheme, dt, stride, sources })
}

/// `√(vᵀ B₀₀ v)` with `v` the Γ0 representative of the functional `K u + ηB u_t`.
fn gamma0_functional_norm(ops: &DiscreteOperators, params: &PhysicalParams, u: &DVector<f64>, ut: &DVector<f64>) -> f64 {
    let idx = &ops.dofs.gamma0_dofs;
    if idx.is_empty() {
        return 0.0;
    }
    let w = spmv(&ops.stiffness, u) + spmv(&ops.boundary, ut) * params.eta;
    let r = DVector::from_iterator(idx.len(), idx.iter().map(|&i| w[i]));
    let chol = ops.boundary_block().cholesky().expect("Γ0 boundary mass is positive definite");
    r.dot(&chol.solve(&r)).max(0.0).sqrt()
}

/// Discrete Γ0 norm of the weak residual of `∂u0/∂ν + η u1 = 0`.
pub fn check_compatibility(state0: &StateTriple, ops: &DiscreteOperators, params: &PhysicalParams) -> f64 {
    gamma0_functional_norm(ops, params, &state0.xi1, &state0.xi2)
}

#[derive(Debug, Clone)]
pub struct TraceResidual {
    pub times: Vec<f64>,
    pub upsilon: Vec<f64>,
}

impl TraceResidual {
    /// Least-squares slope of `ln Υ` against `t`, using the samples that stay
    /// above `floor · Υ(0)` before Υ first drops below it.
    pub fn fit_rate(&self, floor: f64) -> Result<f64> {
        let u0 = *self.upsilon.first().ok_or_else(|| MgtError::Window("empty trace series".into()))?;
        if u0 <= 0.0 {
            return Err(MgtError::Window("Υ(0) = 0, nothing to fit".into()));
        }
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.upsilon)
            .take_while(|(_, &u)| u >= floor * u0)
            .map(|(&t, &u)| (t, u.ln()))
            .collect();
        if pts.len() < 2 {
            return Err(MgtError::Window("fewer than two samples above the floor".into()));
        }
        let n = pts.len() as f64;
        let (mt, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        Ok(sxy / sxx)
    }
}

pub fn trace_residual(traj: &Trajectory, ops: &DiscreteOperators, params: &PhysicalParams) -> TraceResidual {
    let upsilon = traj.states.iter().map(|s| gamma0_functional_norm(ops, params, &s.xi1, &s.xi2)).collect();
    TraceResidual { times: traj.times.clone(), upsilon }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPreset {
    /// 1-based index into the ascending discrete Dirichlet-Laplacian spectrum.
    Eigenmode(usize),
    Bump { seed: u64 },
    Zero,
}

/// Generalised eigenpairs of `K φ = μ M φ`, ascending and M-normalised.
pub fn laplacian_modes(ops: &DiscreteOperators) -> Result<(Vec<f64>, DMatrix<f64>)> {
    generalized_symmetric_eigen(&to_dense(&ops.stiffness), &to_dense(&ops.mass))
}

pub fn initial_state(preset: &InitialPreset, mesh: &MeshGeometry, ops: &DiscreteOperators) -> Result<StateTriple> {
    let n = ops.n_free();
    match preset {
        InitialPreset::Zero => Ok(StateTriple::zeros(n)),
        InitialPreset::Eigenmode(k) => {
            if *k == 0 || *k > n {
                return Err(MgtError::Validation(format!("eigenmode index must be in 1..={n}, got {k}")));
            }
            let (_, vecs) = laplacian_modes(ops)?;
            StateTriple::new(vecs.column(k - 1).into_owned(), DVector::zeros(n), DVector::zeros(n))
        }
        InitialPreset::Bump { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let [lo, hi] = bounding_box(mesh);
            let dirichlet_sides = dirichlet_sides(mesh, ops);
            let mut bump = || {
                let centre: [f64; 2] = std::array::from_fn(|d| lo[d] + (hi[d] - lo[d]) * rng.random_range(0.3..0.7));
                let width = rng.random_range(0.1..0.25) * (hi[0] - lo[0]).max(hi[1] - lo[1]);
                let amp = rng.random_range(0.5..1.5);
                ops.dofs.interpolate(mesh, |x| {
                    let r2: f64 = (0..mesh.dim).map(|d| (x[d] - centre[d]).powi(2)).sum();
                    let cutoff: f64 = dirichlet_sides.iter().map(|s| side_distance(*s, x, lo, hi)).product();
                    amp * cutoff * (-r2 / (2.0 * width * width)).exp()
                })
            };
            let u0 = bump();
            let u1 = bump() * 0.5;
            StateTriple::new(u0, u1, DVector::zeros(n))
        }
    }
}

fn bounding_box(mesh: &MeshGeometry) -> [[f64; 2]; 2] {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for v in &mesh.vertices {
        for d in 0..2 {
            lo[d] = lo[d].min(v[d]);
            hi[d] = hi[d].max(v[d]);
        }
    }
    [lo, hi]
}

fn dirichlet_sides(mesh: &MeshGeometry, ops: &DiscreteOperators) -> Vec<Side> {
    let mut sides: Vec<Side> = mesh
        .facets
        .iter()
        .filter(|f| f.vertices.iter().all(|&v| ops.dofs.free_of_vertex[v].is_none()))
        .map(|f| f.side)
        .collect();
    sides.dedup();
    sides
}

fn side_distance(side: Side, x: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> f64 {
    match side {
        Side::Left => (x[0] - lo[0]) / (hi[0] - lo[0]),
        Side::Right => (hi[0] - x[0]) / (hi[0] - lo[0]),
        Side::Bottom => (x[1] - lo[1]) / (hi[1] - lo[1]),
        Side::Top => (hi[1] - x[1]) / (hi[1] - lo[1]),
    }
}

/// `(‖u‖_M, ‖u_t‖_M, ‖u_tt‖_M)` per sample.
pub fn state_norms(traj: &Trajectory, ops: &DiscreteOperators) -> Vec<[f64; 3]> {
    traj.states
        .iter()
        .map(|s| [&s.xi1, &s.xi2, &s.xi3].map(|v| quad(&ops.mass, v).max(0.0).sqrt()))
        .collect()
}
