//! Structured meshes on intervals and rectangles, outward normals, and the
//! star-shaped boundary partition driven by the multiplier field `h(x) = x - x0`.
//!
//! Points are stored as `[f64; 2]` in both dimensions; in 1D the second
//! coordinate is identically zero and normals are `(±1, 0)`.

use std::fmt::Write as _;

use crate::error::{MgtError, Result};

pub type Point = [f64; 2];

/// Tolerance used when deciding whether `x0` touches the closed domain.
pub const OUTSIDE_TOL: f64 = 1e-12;

/// Gauss-Legendre nodes/weights on `[0, 1]`, two points.
pub(crate) const GAUSS2_NODES: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_9, // 1/(2*sqrt(3))
    0.5 + 0.288_675_134_594_812_9,
];
pub(crate) const GAUSS2_WEIGHTS: [f64; 2] = [0.5, 0.5];

#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    Interval { a: f64, b: f64 },
    Rectangle { x: (f64, f64), y: (f64, f64) },
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Rectangle { .. } => 2,
        }
    }

    /// Corners of the closed domain (endpoints in 1D).
    pub fn corners(&self) -> Vec<Point> {
        match *self {
            DomainSpec::Interval { a, b } => vec![[a, 0.0], [b, 0.0]],
            DomainSpec::Rectangle { x, y } => {
                vec![[x.0, y.0], [x.1, y.0], [x.1, y.1], [x.0, y.1]]
            }
        }
    }

    /// Euclidean distance from `p` to the closed domain (zero inside).
    pub fn distance_to_closure(&self, p: Point) -> f64 {
        match *self {
            DomainSpec::Interval { a, b } => {
                if p[0] < a {
                    a - p[0]
                } else if p[0] > b {
                    p[0] - b
                } else {
                    0.0
                }
            }
            DomainSpec::Rectangle { x, y } => {
                let dx = (x.0 - p[0]).max(0.0).max(p[0] - x.1);
                let dy = (y.0 - p[1]).max(0.0).max(p[1] - y.1);
                dx.hypot(dy)
            }
        }
    }

    pub fn centroid(&self) -> Point {
        match *self {
            DomainSpec::Interval { a, b } => [0.5 * (a + b), 0.0],
            DomainSpec::Rectangle { x, y } => [0.5 * (x.0 + x.1), 0.5 * (y.0 + y.1)],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo < hi;
        let good = match *self {
            DomainSpec::Interval { a, b } => ok(a, b),
            DomainSpec::Rectangle { x, y } => ok(x.0, x.1) && ok(y.0, y.1),
        };
        if good {
            Ok(())
        } else {
            Err(MgtError::Validation(format!("degenerate domain bounds {self:?}")))
        }
    }
}

/// Which straight side of the domain a boundary facet lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone)]
pub struct BoundaryFacet {
    /// One vertex in 1D, two (ordered counter-clockwise along ∂Ω) in 2D.
    pub vertices: Vec<usize>,
    pub normal: Point,
    pub measure: f64,
    pub cell: usize,
    pub side: Side,
}

#[derive(Debug, Clone)]
pub struct MeshGeometry {
    pub domain: DomainSpec,
    pub dim: usize,
    pub vertices: Vec<Point>,
    /// Intervals (2 vertices) or counter-clockwise triangles (3 vertices).
    pub cells: Vec<Vec<usize>>,
    pub facets: Vec<BoundaryFacet>,
}

pub fn build_mesh(domain: &DomainSpec, resolution: &[usize]) -> Result<MeshGeometry> {
    domain.validate()?;
    if resolution.len() != domain.dim() {
        return Err(MgtError::Validation(format!(
            "resolution needs {} entries, got {}",
            domain.dim(),
            resolution.len()
        )));
    }
    if let Some(&r) = resolution.iter().find(|&&r| r < 2) {
        return Err(MgtError::Validation(format!(
            "resolution must be at least 2 cells per direction, got {r}"
        )));
    }
    Ok(match *domain {
        DomainSpec::Interval { a, b } => interval_mesh(domain.clone(), a, b, resolution[0]),
        DomainSpec::Rectangle { x, y } => {
            rectangle_mesh(domain.clone(), x, y, resolution[0], resolution[1])
        }
    })
}

fn interval_mesh(domain: DomainSpec, a: f64, b: f64, n: usize) -> MeshGeometry {
    let h = (b - a) / n as f64;
    let mut vertices: Vec<Point> = (0..=n).map(|i| [a + h * i as f64, 0.0]).collect();
    vertices[n][0] = b;
    let cells = (0..n).map(|i| vec![i, i + 1]).collect();
    let facets = vec![
        BoundaryFacet { vertices: vec![0], normal: [-1.0, 0.0], measure: 1.0, cell: 0, side: Side::Left },
        BoundaryFacet { vertices: vec![n], normal: [1.0, 0.0], measure: 1.0, cell: n - 1, side: Side::Right },
    ];
    MeshGeometry { domain, dim: 1, vertices, cells, facets }
}

fn rectangle_mesh(domain: DomainSpec, xr: (f64, f64), yr: (f64, f64), nx: usize, ny: usize) -> MeshGeometry {
    let hx = (xr.1 - xr.0) / nx as f64;
    let hy = (yr.1 - yr.0) / ny as f64;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { xr.1 } else { xr.0 + hx * i as f64 };
            let y = if j == ny { yr.1 } else { yr.0 + hy * j as f64 };
            vertices.push([x, y]);
        }
    }
    // Each square (i, j) is split along its (i,j)-(i+1,j+1) diagonal into
    // cells 2*(j*nx+i) (lower-right) and 2*(j*nx+i)+1 (upper-left).
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            cells.push(vec![v00, v10, v11]);
            cells.push(vec![v00, v11, v01]);
        }
    }
    let sq = |i: usize, j: usize| 2 * (j * nx + i);
    let mut facets = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        facets.push(BoundaryFacet {
            vertices: vec![vid(i, 0), vid(i + 1, 0)],
            normal: [0.0, -1.0],
            measure: hx,
            cell: sq(i, 0),
            side: Side::Bottom,
        });
    }
    for j in 0..ny {
        facets.push(BoundaryFacet {
            vertices: vec![vid(nx, j), vid(nx, j + 1)],
            normal: [1.0, 0.0],
            measure: hy,
            cell: sq(nx - 1, j),
            side: Side::Right,
        });
    }
    for i in (0..nx).rev() {
        facets.push(BoundaryFacet {
            vertices: vec![vid(i + 1, ny), vid(i, ny)],
            normal: [0.0, 1.0],
            measure: hx,
            cell: sq(i, ny - 1) + 1,
            side: Side::Top,
        });
    }
    for j in (0..ny).rev() {
        facets.push(BoundaryFacet {
            vertices: vec![vid(0, j + 1), vid(0, j)],
            normal: [-1.0, 0.0],
            measure: hy,
            cell: sq(0, j) + 1,
            side: Side::Left,
        });
    }
    MeshGeometry { domain, dim: 2, vertices, cells, facets }
}

impl MeshGeometry {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Length (1D) or area (2D) of a cell.
    pub fn cell_measure(&self, cell: usize) -> f64 {
        let c = &self.cells[cell];
        let p = |k: usize| self.vertices[c[k]];
        match self.dim {
            1 => p(1)[0] - p(0)[0],
            _ => {
                let (a, b, q) = (p(0), p(1), p(2));
                0.5 * ((b[0] - a[0]) * (q[1] - a[1]) - (q[0] - a[0]) * (b[1] - a[1]))
            }
        }
    }

    /// Gradients of the P1 hat functions of a cell (constant per cell).
    pub fn basis_gradients(&self, cell: usize) -> Vec<Point> {
        let c = &self.cells[cell];
        match self.dim {
            1 => {
                let h = self.cell_measure(cell);
                vec![[-1.0 / h, 0.0], [1.0 / h, 0.0]]
            }
            _ => {
                let area2 = 2.0 * self.cell_measure(cell);
                let p = |k: usize| self.vertices[c[k]];
                (0..3)
                    .map(|k| {
                        let (pj, pk) = (p((k + 1) % 3), p((k + 2) % 3));
                        [(pj[1] - pk[1]) / area2, (pk[0] - pj[0]) / area2]
                    })
                    .collect()
            }
        }
    }

    pub fn cell_centroid(&self, cell: usize) -> Point {
        let c = &self.cells[cell];
        let k = c.len() as f64;
        let mut out = [0.0; 2];
        for &v in c {
            out[0] += self.vertices[v][0] / k;
            out[1] += self.vertices[v][1] / k;
        }
        out
    }

    pub fn facet_midpoint(&self, facet: &BoundaryFacet) -> Point {
        self.facet_point(facet, 0.5)
    }

    /// Point at parameter `s ∈ [0,1]` along a facet (the vertex itself in 1D).
    pub fn facet_point(&self, facet: &BoundaryFacet, s: f64) -> Point {
        let a = self.vertices[facet.vertices[0]];
        match facet.vertices.get(1) {
            None => a,
            Some(&v) => {
                let b = self.vertices[v];
                [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
            }
        }
    }

    /// Total boundary measure: perimeter in 2D, number of endpoints in 1D.
    pub fn boundary_measure(&self) -> f64 {
        self.facets.iter().map(|f| f.measure).sum()
    }

    /// Plain-text vertex / cell / facet listing for debugging.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# dim {}", self.dim);
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for (i, v) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "{i} {:.17e} {:.17e}", v[0], v[1]);
        }
        let _ = writeln!(s, "cells {}", self.cells.len());
        for (i, c) in self.cells.iter().enumerate() {
            let ids: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{i} {}", ids.join(" "));
        }
        let _ = writeln!(s, "facets {}", self.facets.len());
        for (i, f) in self.facets.iter().enumerate() {
            let ids: Vec<String> = f.vertices.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(
                s,
                "{i} {} normal {} {} cell {}",
                ids.join(" "),
                f.normal[0],
                f.normal[1],
                f.cell
            );
        }
        s
    }
}

/// Multiplier field `h(x) = x - x0`.
pub fn eval_h(x: Point, x0: Point) -> Point {
    [x[0] - x0[0], x[1] - x0[1]]
}

/// `div h` equals the space dimension.
pub fn div_h(dim: usize) -> f64 {
    dim as f64
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Maximum of `|h|` over the closed domain, attained at a corner.
pub fn max_h_norm(domain: &DomainSpec, x0: Point) -> f64 {
    domain
        .corners()
        .into_iter()
        .map(|p| {
            let h = eval_h(p, x0);
            h[0].hypot(h[1])
        })
        .fold(0.0, f64::max)
}

/// Pads a user-supplied point of length `dim` to a [`Point`].
pub fn point_from_slice(dim: usize, x: &[f64]) -> Result<Point> {
    if x.len() != dim {
        return Err(MgtError::Validation(format!(
            "point needs {dim} coordinates, got {}",
            x.len()
        )));
    }
    Ok([x[0], if dim == 2 { x[1] } else { 0.0 }])
}

#[derive(Debug, Clone)]
pub struct BoundaryPartition {
    /// Feedback (Robin) facets.
    pub gamma0: Vec<usize>,
    /// Dirichlet facets.
    pub gamma1: Vec<usize>,
    /// `None` when the partition was prescribed rather than derived from `x0`.
    pub x0: Option<Point>,
}

impl BoundaryPartition {
    /// Homogeneous Dirichlet data on the whole boundary (no feedback).
    pub fn all_dirichlet(mesh: &MeshGeometry) -> Self {
        BoundaryPartition { gamma0: Vec::new(), gamma1: (0..mesh.facets.len()).collect(), x0: None }
    }

    /// A prescribed partition; only checks that it is a disjoint cover.
    pub fn prescribed(mesh: &MeshGeometry, mut gamma0: Vec<usize>, mut gamma1: Vec<usize>) -> Result<Self> {
        gamma0.sort_unstable();
        gamma1.sort_unstable();
        let mut all: Vec<usize> = gamma0.iter().chain(gamma1.iter()).copied().collect();
        all.sort_unstable();
        all.dedup();
        if all.len() != gamma0.len() + gamma1.len() {
            return Err(MgtError::Partition("gamma0 and gamma1 overlap".into()));
        }
        if all != (0..mesh.facets.len()).collect::<Vec<_>>() {
            return Err(MgtError::Partition("gamma0 ∪ gamma1 must cover every boundary facet".into()));
        }
        Ok(BoundaryPartition { gamma0, gamma1, x0: None })
    }

    pub fn is_gamma0(&self, facet: usize) -> bool {
        self.gamma0.binary_search(&facet).is_ok()
    }

    /// Re-evaluates `ν·h` at three points per facet and reports whether the
    /// sign is `> 0` on every Γ0 point and `<= 0` on every Γ1 point.
    pub fn sign_consistent(&self, mesh: &MeshGeometry) -> bool {
        let Some(x0) = self.x0 else { return false };
        let sample = [0.0, 0.5, 1.0];
        let check = |ids: &[usize], positive: bool| {
            ids.iter().all(|&fi| {
                let f = &mesh.facets[fi];
                sample.iter().all(|&s| {
                    let hn = dot(f.normal, eval_h(mesh.facet_point(f, s), x0));
                    if positive {
                        hn > 0.0
                    } else {
                        hn <= 0.0
                    }
                })
            })
        };
        check(&self.gamma0, true) && check(&self.gamma1, false)
    }
}

/// Classifies boundary facets by the sign of `ν·(midpoint - x0)`.
pub fn partition_boundary(mesh: &MeshGeometry, x0: Point) -> Result<BoundaryPartition> {
    let dist = mesh.domain.distance_to_closure(x0);
    if dist <= OUTSIDE_TOL {
        return Err(MgtError::GeometricCondition(format!(
            "x0 = ({}, {}) must lie strictly outside the closed domain",
            x0[0], x0[1]
        )));
    }
    let (mut gamma0, mut gamma1) = (Vec::new(), Vec::new());
    for (i, f) in mesh.facets.iter().enumerate() {
        let hn = dot(f.normal, eval_h(mesh.facet_midpoint(f), x0));
        if hn > 0.0 {
            gamma0.push(i);
        } else {
            gamma1.push(i);
        }
    }
    if gamma0.is_empty() {
        return Err(MgtError::Partition("Γ0 is empty for this x0".into()));
    }
    if gamma1.is_empty() {
        return Err(MgtError::Partition("Γ1 is empty for this x0".into()));
    }
    Ok(BoundaryPartition { gamma0, gamma1, x0: Some(x0) })
}
