//! Cartesian discretization of a convex planar domain.
//!
//! Every grid node inside the closed domain is an unknown. Nodes whose eight
//! neighbours are also inside carry the interior equation with the 9-point
//! Hessian stencil; the remaining inside nodes form the boundary band and
//! carry the Neumann closure at their closest boundary point.
//!
//! The closure differentiates along the inward normal ray from the boundary
//! point `p`, through the node itself at depth `d` and two deeper ray points
//! at depths `d + H` and `d + 2H`. Off-grid ray values come from biquadratic
//! interpolation on a 3×3 block of unknowns, which keeps the normal derivative
//! second-order accurate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hessop::SymmetricMatrix;

/// Minimum number of grid spacings across the domain diameter.
pub const MIN_NODES_ACROSS: f64 = 16.0;

/// Ray spacings tried for the Neumann closure, in multiples of `h`.
const RAY_STEPS: [f64; 4] = [1.0, 1.5, 2.0, 3.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("invalid domain: {0}")]
    BadDomain(String),
    #[error("grid too coarse: {across:.2} spacings across the diameter, need at least {MIN_NODES_ACROSS}")]
    TooCoarse { across: f64 },
    #[error("invalid spacing h = {0}")]
    BadSpacing(f64),
    #[error("normal ray from boundary node at ({x:.4}, {y:.4}) leaves the grid")]
    RayLeavesGrid { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainKind {
    Disk { radius: f64 },
    Ellipse { a: f64, b: f64 },
    /// `|x/a|^p + |y/b|^p ≤ 1`
    Superellipse { a: f64, b: f64, p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(flatten)]
    pub kind: DomainKind,
    #[serde(default)]
    pub center: [f64; 2],
}

/// Closest boundary point of a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point: [f64; 2],
    /// outward unit normal at `point`
    pub normal: [f64; 2],
    /// distance to the boundary, positive inside
    pub signed_distance: f64,
}

impl DomainSpec {
    pub fn disk(radius: f64) -> Self {
        Self { kind: DomainKind::Disk { radius }, center: [0.0, 0.0] }
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Self { kind: DomainKind::Ellipse { a, b }, center: [0.0, 0.0] }
    }

    pub fn superellipse(a: f64, b: f64, p: f64) -> Self {
        Self { kind: DomainKind::Superellipse { a, b, p }, center: [0.0, 0.0] }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(GridError::BadDomain(format!("{name} = {v} must be positive")))
            }
        };
        match self.kind {
            DomainKind::Disk { radius } => pos("radius", radius)?,
            DomainKind::Ellipse { a, b } => {
                pos("a", a)?;
                pos("b", b)?;
            }
            DomainKind::Superellipse { a, b, p } => {
                pos("a", a)?;
                pos("b", b)?;
                if !(p >= 2.0 && p.is_finite()) {
                    return Err(GridError::BadDomain(format!("superellipse exponent p = {p} must be ≥ 2")));
                }
            }
        }
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(GridError::BadDomain("center must be finite".into()));
        }
        Ok(())
    }

    /// `(a, b, p)` of the equivalent superellipse.
    fn axes(&self) -> (f64, f64, f64) {
        match self.kind {
            DomainKind::Disk { radius } => (radius, radius, 2.0),
            DomainKind::Ellipse { a, b } => (a, b, 2.0),
            DomainKind::Superellipse { a, b, p } => (a, b, p),
        }
    }

    fn local(&self, x: [f64; 2]) -> [f64; 2] {
        [x[0] - self.center[0], x[1] - self.center[1]]
    }

    /// Level-set function, negative inside.
    pub fn implicit(&self, x: [f64; 2]) -> f64 {
        let [u, v] = self.local(x);
        match self.kind {
            DomainKind::Disk { radius } => (u * u + v * v) / (radius * radius) - 1.0,
            _ => {
                let (a, b, p) = self.axes();
                (u / a).abs().powf(p) + (v / b).abs().powf(p) - 1.0
            }
        }
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        self.implicit(x) <= 0.0
    }

    /// Gradient and second derivatives `(F_x, F_y, F_xx, F_yy)` of the level
    /// set in local coordinates (`F_xy = 0` for all supported shapes).
    fn level_set_derivs(&self, local: [f64; 2]) -> (f64, f64, f64, f64) {
        let (a, b, p) = self.axes();
        let d1 = |t: f64, s: f64| p * (t / s).abs().powf(p - 1.0) * t.signum() / s;
        let d2 = |t: f64, s: f64| p * (p - 1.0) * (t / s).abs().powf(p - 2.0) / (s * s);
        (d1(local[0], a), d1(local[1], b), d2(local[0], a), d2(local[1], b))
    }

    /// Outward unit normal at a boundary point.
    pub fn normal_at(&self, x: [f64; 2]) -> [f64; 2] {
        let l = self.local(x);
        if let DomainKind::Disk { .. } = self.kind {
            let r = l[0].hypot(l[1]);
            return [l[0] / r, l[1] / r];
        }
        let (fx, fy, _, _) = self.level_set_derivs(l);
        let g = fx.hypot(fy);
        [fx / g, fy / g]
    }

    /// Counter-clockwise unit tangent at a boundary point.
    pub fn tangent_at(&self, x: [f64; 2]) -> [f64; 2] {
        let n = self.normal_at(x);
        [-n[1], n[0]]
    }

    /// Curvature of the boundary at a boundary point.
    pub fn curvature_at(&self, x: [f64; 2]) -> f64 {
        if let DomainKind::Disk { radius } = self.kind {
            return 1.0 / radius;
        }
        let (fx, fy, fxx, fyy) = self.level_set_derivs(self.local(x));
        (fy * fy * fxx + fx * fx * fyy) / fx.hypot(fy).powi(3)
    }

    /// Boundary point at polar angle `theta` about the center.
    pub fn boundary_point(&self, theta: f64) -> [f64; 2] {
        let (s, c) = theta.sin_cos();
        let (a, b, p) = self.axes();
        let rad = match self.kind {
            DomainKind::Disk { radius } => radius,
            _ => ((c / a).abs().powf(p) + (s / b).abs().powf(p)).powf(-1.0 / p),
        };
        [self.center[0] + rad * c, self.center[1] + rad * s]
    }

    /// `(κ_min, κ_max)`. Closed form for disks and ellipses; for `p > 2`
    /// superellipses the curvature vanishes at the axis points and the
    /// maximum is located by sampling the closed-form curvature.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        match self.kind {
            DomainKind::Disk { radius } => (1.0 / radius, 1.0 / radius),
            DomainKind::Ellipse { a, b } => {
                let (k1, k2) = (a / (b * b), b / (a * a));
                (k1.min(k2), k1.max(k2))
            }
            DomainKind::Superellipse { a, b, p } => {
                if p == 2.0 {
                    return DomainSpec::ellipse(a, b).curvature_bounds();
                }
                let samples = 20_000;
                let kmax = (0..samples)
                    .map(|i| {
                        let t = std::f64::consts::TAU * (i as f64 + 0.5) / samples as f64;
                        self.curvature_at(self.boundary_point(t))
                    })
                    .fold(0.0, f64::max);
                (0.0, kmax)
            }
        }
    }

    pub fn is_strictly_convex(&self) -> bool {
        self.curvature_bounds().0 > 0.0
    }

    /// Diameter. The domain is centrally symmetric, so this is twice the
    /// largest boundary radius.
    pub fn diameter(&self) -> f64 {
        match self.kind {
            DomainKind::Disk { radius } => 2.0 * radius,
            DomainKind::Ellipse { a, b } => 2.0 * a.max(b),
            DomainKind::Superellipse { .. } => {
                let r = |t: f64| {
                    let q = self.boundary_point(t);
                    (q[0] - self.center[0]).hypot(q[1] - self.center[1])
                };
                let samples = 4096;
                let dt = std::f64::consts::TAU / samples as f64;
                let best = (0..samples).max_by(|&i, &j| r(i as f64 * dt).total_cmp(&r(j as f64 * dt))).unwrap();
                let (mut lo, mut hi) = ((best as f64 - 1.0) * dt, (best as f64 + 1.0) * dt);
                for _ in 0..100 {
                    let m1 = lo + (hi - lo) / 3.0;
                    let m2 = hi - (hi - lo) / 3.0;
                    if r(m1) < r(m2) {
                        lo = m1;
                    } else {
                        hi = m2;
                    }
                }
                2.0 * r(0.5 * (lo + hi))
            }
        }
    }

    /// Half-widths of the axis-aligned bounding box about the center.
    pub fn half_extent(&self) -> [f64; 2] {
        let (a, b, _) = self.axes();
        [a, b]
    }

    /// Closest boundary point.
    pub fn project(&self, x: [f64; 2]) -> Projection {
        let l = self.local(x);
        let inside = self.contains(x);
        let point = if let DomainKind::Disk { radius } = self.kind {
            let r = l[0].hypot(l[1]);
            let dir = if r > 0.0 { [l[0] / r, l[1] / r] } else { [1.0, 0.0] };
            [self.center[0] + radius * dir[0], self.center[1] + radius * dir[1]]
        } else {
            self.project_general(x)
        };
        let dist = (x[0] - point[0]).hypot(x[1] - point[1]);
        Projection {
            point,
            normal: self.normal_at(point),
            signed_distance: if inside { dist } else { -dist },
        }
    }

    fn project_general(&self, x: [f64; 2]) -> [f64; 2] {
        let d2 = |t: f64| {
            let q = self.boundary_point(t);
            (q[0] - x[0]).powi(2) + (q[1] - x[1]).powi(2)
        };
        // derivative sign of the squared distance along the curve
        let slope = |t: f64| {
            let q = self.boundary_point(t);
            let tan = self.tangent_at(q);
            (q[0] - x[0]) * tan[0] + (q[1] - x[1]) * tan[1]
        };
        let samples = 720;
        let dt = std::f64::consts::TAU / samples as f64;
        let best = (0..samples).min_by(|&i, &j| d2(i as f64 * dt).total_cmp(&d2(j as f64 * dt))).unwrap();
        let (mut lo, mut hi) = ((best as f64 - 1.0) * dt, (best as f64 + 1.0) * dt);
        if slope(lo) < 0.0 && slope(hi) > 0.0 {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if slope(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        } else {
            for _ in 0..200 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if d2(m1) < d2(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
        }
        self.boundary_point(0.5 * (lo + hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Interior,
    Boundary,
    Exterior,
}

impl NodeKind {
    pub fn label(self) -> &'static str {
        match self {
            NodeKind::Interior => "interior",
            NodeKind::Boundary => "boundary",
            NodeKind::Exterior => "exterior",
        }
    }
}

/// Unknown indices of the eight neighbours, ordered E, W, N, S, NE, NW, SE, SW.
pub type Neighbours = [usize; 8];

const OFFSETS: [(isize, isize); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, 1), (1, -1), (-1, -1)];

#[derive(Debug, Clone)]
pub struct InteriorNode {
    pub unknown: usize,
    pub neighbours: Neighbours,
}

/// Linear Neumann closure at one boundary-band node.
#[derive(Debug, Clone)]
pub struct BoundaryNode {
    pub unknown: usize,
    /// closest boundary point
    pub point: [f64; 2],
    /// outward unit normal at `point`
    pub normal: [f64; 2],
    /// distance from the node to `point`
    pub distance: f64,
    /// ray spacing used, in units of length
    pub ray_step: f64,
    /// `D_ν u(p) = Σ w·u` over unknowns
    pub deriv_weights: Vec<(usize, f64)>,
    /// `u(p) = Σ w·u` over unknowns
    pub value_weights: Vec<(usize, f64)>,
}

impl BoundaryNode {
    pub fn normal_derivative(&self, u: &[f64]) -> f64 {
        self.deriv_weights.iter().map(|&(m, w)| w * u[m]).sum()
    }

    pub fn boundary_value(&self, u: &[f64]) -> f64 {
        self.value_weights.iter().map(|&(m, w)| w * u[m]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Interior(usize),
    Boundary(usize),
}

#[derive(Debug, Clone)]
pub struct Grid {
    spec: DomainSpec,
    h: f64,
    nx: usize,
    ny: usize,
    origin: [f64; 2],
    kinds: Vec<NodeKind>,
    /// grid index -> unknown index
    unknown_of: Vec<Option<usize>>,
    /// unknown index -> grid index
    nodes: Vec<usize>,
    roles: Vec<Role>,
    interior: Vec<InteriorNode>,
    boundary: Vec<BoundaryNode>,
}

/// Node classification without the Neumann closure; works at any spacing.
pub fn classify(spec: &DomainSpec, h: f64) -> Result<(usize, usize, [f64; 2], Vec<NodeKind>), GridError> {
    spec.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(GridError::BadSpacing(h));
    }
    let ext = spec.half_extent();
    let mx = (ext[0] / h).ceil() as usize + 2;
    let my = (ext[1] / h).ceil() as usize + 2;
    let (nx, ny) = (2 * mx + 1, 2 * my + 1);
    let origin = [spec.center[0] - mx as f64 * h, spec.center[1] - my as f64 * h];
    let inside: Vec<bool> = (0..nx * ny)
        .map(|g| spec.contains([origin[0] + (g % nx) as f64 * h, origin[1] + (g / nx) as f64 * h]))
        .collect();
    let kinds = (0..nx * ny)
        .map(|g| {
            if !inside[g] {
                return NodeKind::Exterior;
            }
            let (i, j) = ((g % nx) as isize, (g / nx) as isize);
            let all_in = OFFSETS.iter().all(|&(di, dj)| {
                let (a, b) = (i + di, j + dj);
                a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny && inside[b as usize * nx + a as usize]
            });
            if all_in {
                NodeKind::Interior
            } else {
                NodeKind::Boundary
            }
        })
        .collect();
    Ok((nx, ny, origin, kinds))
}

/// 1-D quadratic Lagrange weights on nodes `-1, 0, 1` at offset `s`.
fn quad_weights(s: f64) -> [f64; 3] {
    [0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)]
}

impl Grid {
    pub fn build(spec: DomainSpec, h: f64) -> Result<Self, GridError> {
        let (nx, ny, origin, kinds) = classify(&spec, h)?;
        let across = spec.diameter() / h;
        if across < MIN_NODES_ACROSS {
            return Err(GridError::TooCoarse { across });
        }
        let mut unknown_of = vec![None; nx * ny];
        let mut nodes = Vec::new();
        for (g, k) in kinds.iter().enumerate() {
            if *k != NodeKind::Exterior {
                unknown_of[g] = Some(nodes.len());
                nodes.push(g);
            }
        }
        let mut grid = Grid {
            spec,
            h,
            nx,
            ny,
            origin,
            kinds,
            unknown_of,
            nodes,
            roles: Vec::new(),
            interior: Vec::new(),
            boundary: Vec::new(),
        };
        let mut roles = Vec::with_capacity(grid.nodes.len());
        for (m, &g) in grid.nodes.iter().enumerate() {
            match grid.kinds[g] {
                NodeKind::Interior => {
                    let (i, j) = (g % nx, g / nx);
                    let mut neighbours = [0; 8];
                    for (slot, &(di, dj)) in neighbours.iter_mut().zip(OFFSETS.iter()) {
                        let gg = (j as isize + dj) as usize * nx + (i as isize + di) as usize;
                        *slot = grid.unknown_of[gg].expect("interior neighbours are inside");
                    }
                    roles.push(Role::Interior(grid.interior.len()));
                    grid.interior.push(InteriorNode { unknown: m, neighbours });
                }
                NodeKind::Boundary => {
                    let b = grid.neumann_closure(m)?;
                    roles.push(Role::Boundary(grid.boundary.len()));
                    grid.boundary.push(b);
                }
                NodeKind::Exterior => unreachable!(),
            }
        }
        grid.roles = roles;
        Ok(grid)
    }

    fn neumann_closure(&self, m: usize) -> Result<BoundaryNode, GridError> {
        let x = self.point_of_unknown(m);
        let proj = self.spec.project(x);
        let d = proj.signed_distance.max(0.0);
        let nu = proj.normal;
        for step in RAY_STEPS {
            let ray = step * self.h;
            let ts = [d, d + ray, d + 2.0 * ray];
            let q = |t: f64| [proj.point[0] - t * nu[0], proj.point[1] - t * nu[1]];
            let (Some(b1), Some(b2)) = (self.interpolation_block(q(ts[1])), self.interpolation_block(q(ts[2])))
            else {
                continue;
            };
            // quadratic in t through (t_j, u_j): value and slope at t = 0
            let mut val = [0.0; 3];
            let mut der = [0.0; 3];
            for j in 0..3 {
                let (o1, o2) = ((j + 1) % 3, (j + 2) % 3);
                let denom = (ts[j] - ts[o1]) * (ts[j] - ts[o2]);
                val[j] = ts[o1] * ts[o2] / denom;
                der[j] = -(ts[o1] + ts[o2]) / denom;
            }
            let mut value_weights = vec![(m, val[0])];
            // D_ν u = -du/dt along the inward ray
            let mut deriv_weights = vec![(m, -der[0])];
            for (block, j) in [(b1, 1), (b2, 2)] {
                for (idx, w) in block {
                    value_weights.push((idx, val[j] * w));
                    deriv_weights.push((idx, -der[j] * w));
                }
            }
            return Ok(BoundaryNode {
                unknown: m,
                point: proj.point,
                normal: nu,
                distance: d,
                ray_step: ray,
                deriv_weights: merge_weights(deriv_weights),
                value_weights: merge_weights(value_weights),
            });
        }
        Err(GridError::RayLeavesGrid { x: x[0], y: x[1] })
    }

    /// Biquadratic interpolation weights at `q` over a 3×3 block of unknowns
    /// whose span contains `q`, nearest block first.
    fn interpolation_block(&self, q: [f64; 2]) -> Option<Vec<(usize, f64)>> {
        let fx = (q[0] - self.origin[0]) / self.h;
        let fy = (q[1] - self.origin[1]) / self.h;
        let range = |f: f64| ((f - 1.0).ceil() as isize)..=((f + 1.0).floor() as isize);
        let mut candidates: Vec<(f64, isize, isize)> = Vec::new();
        for cj in range(fy) {
            for ci in range(fx) {
                candidates.push(((ci as f64 - fx).powi(2) + (cj as f64 - fy).powi(2), cj, ci));
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        'cand: for (_, cj, ci) in candidates {
            let mut idx = [0usize; 9];
            for (slot, (dj, di)) in idx.iter_mut().zip((-1..=1).flat_map(|dj| (-1..=1).map(move |di| (dj, di)))) {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i as usize >= self.nx || j as usize >= self.ny {
                    continue 'cand;
                }
                match self.unknown_of[j as usize * self.nx + i as usize] {
                    Some(u) => *slot = u,
                    None => continue 'cand,
                }
            }
            let wx = quad_weights(fx - ci as f64);
            let wy = quad_weights(fy - cj as f64);
            let mut out = Vec::with_capacity(9);
            for (a, wyv) in wy.iter().enumerate() {
                for (b, wxv) in wx.iter().enumerate() {
                    out.push((idx[a * 3 + b], wyv * wxv));
                }
            }
            return Some(out);
        }
        None
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn num_unknowns(&self) -> usize {
        self.nodes.len()
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn interior(&self) -> &[InteriorNode] {
        &self.interior
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn role(&self, unknown: usize) -> Role {
        self.roles[unknown]
    }

    pub fn grid_index(&self, unknown: usize) -> usize {
        self.nodes[unknown]
    }

    pub fn unknown_at(&self, grid_index: usize) -> Option<usize> {
        self.unknown_of[grid_index]
    }

    pub fn grid_point(&self, g: usize) -> [f64; 2] {
        [self.origin[0] + (g % self.nx) as f64 * self.h, self.origin[1] + (g / self.nx) as f64 * self.h]
    }

    pub fn point_of_unknown(&self, m: usize) -> [f64; 2] {
        self.grid_point(self.nodes[m])
    }

    pub fn unknown_points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.nodes.iter().map(|&g| self.grid_point(g))
    }

    /// Unknown index of the node at `p`, if `p` is (to rounding) a node.
    pub fn unknown_near(&self, p: [f64; 2]) -> Option<usize> {
        let fi = ((p[0] - self.origin[0]) / self.h).round();
        let fj = ((p[1] - self.origin[1]) / self.h).round();
        if fi < 0.0 || fj < 0.0 || fi as usize >= self.nx || fj as usize >= self.ny {
            return None;
        }
        self.unknown_of[fj as usize * self.nx + fi as usize]
    }

    /// Arithmetic mean over all unknowns.
    pub fn mean(&self, u: &[f64]) -> f64 {
        u.iter().sum::<f64>() / u.len() as f64
    }

    /// Second-order central Hessian at an interior node.
    pub fn hessian_at(&self, u: &[f64], node: &InteriorNode) -> SymmetricMatrix {
        let nb = node.neighbours;
        hessian_stencil(u[node.unknown], [u[nb[0]], u[nb[1]], u[nb[2]], u[nb[3]], u[nb[4]], u[nb[5]], u[nb[6]], u[nb[7]]], self.h)
    }

    /// Central-difference gradient at an interior node.
    pub fn gradient_at(&self, u: &[f64], node: &InteriorNode) -> [f64; 2] {
        let nb = node.neighbours;
        [(u[nb[0]] - u[nb[1]]) / (2.0 * self.h), (u[nb[2]] - u[nb[3]]) / (2.0 * self.h)]
    }

    /// `D_ν u − (−ε u + φ)` at a boundary node's projection point.
    pub fn neumann_residual(&self, u: &[f64], b: &BoundaryNode, eps: f64, phi: f64) -> f64 {
        b.normal_derivative(u) + eps * b.boundary_value(u) - phi
    }

    /// Plain-text listing of every inside node and its classification; boundary
    /// nodes also carry their projection point, normal and depth.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# h={} nx={} ny={} unknowns={}", self.h, self.nx, self.ny, self.nodes.len());
        let _ = writeln!(s, "# x y kind [px py nx ny depth]");
        for (m, &g) in self.nodes.iter().enumerate() {
            let p = self.grid_point(g);
            match self.roles[m] {
                Role::Interior(_) => {
                    let _ = writeln!(s, "{:?} {:?} interior", p[0], p[1]);
                }
                Role::Boundary(b) => {
                    let b = &self.boundary[b];
                    let _ = writeln!(
                        s,
                        "{:?} {:?} boundary {:?} {:?} {:?} {:?} {:?}",
                        p[0], p[1], b.point[0], b.point[1], b.normal[0], b.normal[1], b.distance
                    );
                }
            }
        }
        s
    }
}

fn merge_weights(mut w: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    w.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(w.len());
    for (i, v) in w {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => out.push((i, v)),
        }
    }
    out
}

/// 9-point Hessian from a center value and neighbours ordered
/// E, W, N, S, NE, NW, SE, SW.
#[inline]
pub fn hessian_stencil(c: f64, nb: [f64; 8], h: f64) -> SymmetricMatrix {
    let h2 = h * h;
    let uxx = (nb[0] - 2.0 * c + nb[1]) / h2;
    let uyy = (nb[2] - 2.0 * c + nb[3]) / h2;
    let uxy = (nb[4] - nb[5] - nb[6] + nb[7]) / (4.0 * h2);
    SymmetricMatrix::planar(uxx, uxy, uyy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        grid.unknown_points().map(|p| f(p[0], p[1])).collect()
    }

    #[test]
    fn coarse_disk_classification_matches_distance() {
        let spec = DomainSpec::disk(1.0);
        let (nx, ny, origin, kinds) = classify(&spec, 0.5).unwrap();
        assert_eq!((nx, ny), (9, 9));
        for (g, k) in kinds.iter().enumerate() {
            let p = [origin[0] + (g % nx) as f64 * 0.5, origin[1] + (g / nx) as f64 * 0.5];
            let inside = p[0].hypot(p[1]) <= 1.0;
            assert_eq!(*k != NodeKind::Exterior, inside, "{p:?}");
        }
        let interior: Vec<_> = kinds.iter().filter(|k| **k == NodeKind::Interior).collect();
        // only nodes with every neighbour inside the unit disk
        assert_eq!(interior.len(), 1);
        assert!(matches!(Grid::build(spec, 0.5), Err(GridError::TooCoarse { .. })));
    }

    #[test]
    fn disk_normals_are_radial() {
        let grid = Grid::build(DomainSpec::disk(1.0), 1.0 / 16.0).unwrap();
        for b in grid.boundary() {
            let r = b.point[0].hypot(b.point[1]);
            assert!((r - 1.0).abs() < 1e-15);
            assert!((b.normal[0] - b.point[0]).abs() < 1e-15 && (b.normal[1] - b.point[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn ellipse_curvature_extremes() {
        let spec = DomainSpec::ellipse(1.5, 1.0);
        let (kmin, kmax) = spec.curvature_bounds();
        assert!((kmin - 4.0 / 9.0).abs() < 1e-15);
        assert!((kmax - 1.5).abs() < 1e-15);
        assert!((spec.curvature_at([1.5, 0.0]) - 1.5).abs() < 1e-12);
        assert!((spec.curvature_at([0.0, 1.0]) - 4.0 / 9.0).abs() < 1e-12);
        let grid = Grid::build(spec, 0.05).unwrap();
        for b in grid.boundary() {
            let k = spec.curvature_at(b.point);
            assert!(kmin - 1e-9 <= k && k <= kmax + 1e-9);
        }
    }

    #[test]
    fn superellipse_curvature_vanishes_on_axes() {
        let spec = DomainSpec::superellipse(1.0, 1.0, 4.0);
        assert_eq!(spec.curvature_bounds().0, 0.0);
        assert!(!spec.is_strictly_convex());
        assert!(spec.curvature_at([1.0, 0.0]).abs() < 1e-12);
        assert!(spec.diameter() > 2.0);
        assert!(DomainSpec::superellipse(1.0, 1.0, 1.5).validate().is_err());
    }

    #[test]
    fn projections_are_orthogonal() {
        for spec in [DomainSpec::ellipse(1.5, 1.0), DomainSpec::superellipse(1.2, 0.9, 3.0)] {
            let grid = Grid::build(spec, 0.05).unwrap();
            for b in grid.boundary() {
                assert!(spec.implicit(b.point).abs() < 1e-12);
                let t = spec.tangent_at(b.point);
                assert!((t[0] * b.normal[0] + t[1] * b.normal[1]).abs() < 1e-12);
                let x = grid.point_of_unknown(b.unknown);
                let off = [x[0] - b.point[0], x[1] - b.point[1]];
                // node sits on the inward normal ray
                assert!((off[0] * t[0] + off[1] * t[1]).abs() < 1e-10, "{x:?}");
            }
        }
    }

    #[test]
    fn interior_nodes_have_inside_neighbours() {
        let grid = Grid::build(DomainSpec::ellipse(1.5, 1.0), 0.05).unwrap();
        for n in grid.interior() {
            for &m in &n.neighbours {
                assert!(grid.spec().contains(grid.point_of_unknown(m)));
            }
        }
        assert_eq!(grid.interior().len() + grid.boundary().len(), grid.num_unknowns());
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let grid = Grid::build(DomainSpec::disk(1.0), 1.0 / 16.0).unwrap();
        let u = sample(&grid, |x, _| x * x);
        let v = sample(&grid, |x, y| x * y);
        for n in grid.interior() {
            let hu = grid.hessian_at(&u, n);
            assert!((hu.get(0, 0) - 2.0).abs() < 1e-10 && hu.get(1, 1).abs() < 1e-10 && hu.get(0, 1).abs() < 1e-10);
            let hv = grid.hessian_at(&v, n);
            assert!((hv.get(0, 1) - 1.0).abs() < 1e-10 && hv.get(0, 0).abs() < 1e-10);
        }
        let q = sample(&grid, |x, y| 0.5 * (x * x + y * y) + 0.3 * x * y - y);
        for b in grid.boundary() {
            let p = b.point;
            let grad = [p[0] + 0.3 * p[1], p[1] + 0.3 * p[0] - 1.0];
            let exact = grad[0] * b.normal[0] + grad[1] * b.normal[1];
            assert!((b.normal_derivative(&q) - exact).abs() < 1e-10);
            let val = 0.5 * (p[0] * p[0] + p[1] * p[1]) + 0.3 * p[0] * p[1] - p[1];
            assert!((b.boundary_value(&q) - val).abs() < 1e-11);
        }
    }

    #[test]
    fn neumann_residual_examples() {
        let grid = Grid::build(DomainSpec::disk(1.0), 1.0 / 16.0).unwrap();
        let (cst, eps) = (2.5, 0.1);
        let u = vec![cst; grid.num_unknowns()];
        let r = sample(&grid, |x, y| 0.5 * (x * x + y * y));
        for b in grid.boundary() {
            assert!(grid.neumann_residual(&u, b, eps, eps * cst).abs() < 1e-12);
            assert!(grid.neumann_residual(&r, b, 0.0, 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn hessian_of_quartic_converges_at_second_order() {
        let mut errs = Vec::new();
        for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
            let grid = Grid::build(DomainSpec::disk(1.0), h).unwrap();
            let u = sample(&grid, |x, _| x.powi(4));
            let m = grid.unknown_near([0.5, 0.0]).unwrap();
            let Role::Interior(i) = grid.role(m) else { panic!("(0.5, 0) should be interior") };
            errs.push((grid.hessian_at(&u, &grid.interior()[i]).get(0, 0) - 3.0).abs());
        }
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!(rate > 1.99 && rate < 2.01, "{rate}");
        }
    }

    #[test]
    fn dump_lists_every_unknown() {
        let grid = Grid::build(DomainSpec::disk(1.0), 1.0 / 8.0).unwrap();
        let text = grid.dump();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), grid.num_unknowns());
        assert!(text.contains(" boundary "));
    }
}
