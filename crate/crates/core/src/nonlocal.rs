//! Nonlocal stiffness assembly over pairs of triangles and the matching
//! shape-derivative contractions.
//!
//! The bilinear form is
//! `A(u, v) = sum_T sum_T' int_T int_T' u(x) (v(x) - v(y)) gamma(x, y) dy dx`
//! where the kernel side is chosen by the label of the triangle containing
//! `x`. Truncation is applied pointwise at the quadrature nodes.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::geometry::{barycentric_gradients, Point};
use crate::kernel::{KernelSpec, Norm, Side};
use crate::linalg::SparseMatrix;
use crate::mesh::{Mesh, MeshError};
use crate::quadrature::QuadratureRule;

/// How the truncation indicator enters the inner integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Truncation {
    /// Indicator evaluated at the inner quadrature nodes.
    Pointwise,
    /// Inner triangle clipped against the interaction square and the pieces
    /// integrated with the inner rule. Infinity norm only; Euclidean balls
    /// fall back to pointwise truncation. The design contractions are the
    /// exact derivative of the discrete form only while the inner rule
    /// integrates the kernel exactly on each piece (for instance constant or
    /// low-degree polynomial kernels).
    Clipped,
    /// Clip for kernels that are nonzero on the truncation boundary,
    /// pointwise otherwise.
    #[default]
    Auto,
}

impl std::str::FromStr for Truncation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pointwise" => Ok(Self::Pointwise),
            "clipped" => Ok(Self::Clipped),
            "auto" => Ok(Self::Auto),
            _ => Err(format!("unknown truncation '{s}' (expected pointwise, clipped or auto)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AssemblyOptions {
    pub outer: QuadratureRule,
    pub inner: QuadratureRule,
    pub truncation: Truncation,
    pub parallel: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            outer: QuadratureRule::dunavant7(),
            inner: QuadratureRule::dunavant7(),
            truncation: Truncation::Auto,
            parallel: true,
        }
    }
}

impl AssemblyOptions {
    /// Whether the inner integral is clipped for outer points on `side`.
    pub fn clips(&self, kernel: &KernelSpec, side: Side) -> bool {
        kernel.norm() == Norm::Inf
            && match self.truncation {
                Truncation::Pointwise => false,
                Truncation::Clipped => true,
                Truncation::Auto => !kernel.partial(side).vanishes_at_horizon(),
            }
    }
}

/// Candidate interacting triangle pairs, grouped by outer triangle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairList {
    offsets: Vec<usize>,
    inner: Vec<usize>,
}

impl PairList {
    pub fn partners(&self, outer: usize) -> &[usize] {
        &self.inner[self.offsets[outer]..self.offsets[outer + 1]]
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    pub fn n_outer(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_outer()).flat_map(move |t| self.partners(t).iter().map(move |&s| (t, s)))
    }
}

fn diameter(p: &[Point; 3]) -> f64 {
    (p[0] - p[1]).norm().max((p[1] - p[2]).norm()).max((p[2] - p[0]).norm())
}

/// All pairs `(T, T')` whose barycenters are within `delta + h_T + h_T'`
/// in the truncation norm, found with a uniform grid hash. Outer index major,
/// inner index ascending.
pub fn candidate_pairs(mesh: &Mesh, kernel: &KernelSpec) -> PairList {
    let nt = mesh.n_triangles();
    let delta = kernel.delta();
    let norm = kernel.norm();
    let centers: Vec<Point> = (0..nt).map(|t| mesh.barycenter(t)).collect();
    let diam: Vec<f64> = (0..nt).map(|t| diameter(&mesh.triangle_points(t))).collect();
    let h = diam.iter().copied().fold(0.0, f64::max);
    let cell = delta + 2.0 * h;
    let (mut lo, mut hi) = (Point::repeat(f64::INFINITY), Point::repeat(f64::NEG_INFINITY));
    for c in &centers {
        lo = lo.inf(c);
        hi = hi.sup(c);
    }
    let dims = [
        (((hi.x - lo.x) / cell).floor() as usize + 1).max(1),
        (((hi.y - lo.y) / cell).floor() as usize + 1).max(1),
    ];
    let cell_of = |p: &Point| {
        let i = (((p.x - lo.x) / cell).floor() as usize).min(dims[0] - 1);
        let j = (((p.y - lo.y) / cell).floor() as usize).min(dims[1] - 1);
        (i, j)
    };
    let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
    for (t, c) in centers.iter().enumerate() {
        let (i, j) = cell_of(c);
        buckets[j * dims[0] + i].push(t);
    }
    let mut offsets = Vec::with_capacity(nt + 1);
    let mut inner = Vec::new();
    offsets.push(0);
    let mut found = Vec::new();
    for t in 0..nt {
        found.clear();
        let (i, j) = cell_of(&centers[t]);
        for bj in j.saturating_sub(1)..=(j + 1).min(dims[1] - 1) {
            for bi in i.saturating_sub(1)..=(i + 1).min(dims[0] - 1) {
                for &s in &buckets[bj * dims[0] + bi] {
                    if norm.of(&(centers[s] - centers[t])) <= delta + diam[t] + diam[s] {
                        found.push(s);
                    }
                }
            }
        }
        found.sort_unstable();
        inner.extend_from_slice(&found);
        offsets.push(inner.len());
    }
    PairList { offsets, inner }
}

/// Per-triangle geometry shared by the assembly loops.
struct Element {
    vertices: [usize; 3],
    points: [Point; 3],
    lo: Point,
    hi: Point,
    /// `2 |T|`: Jacobian of the reference map.
    jac: f64,
    grads: [Point; 3],
    side: Side,
    outer_points: Vec<Point>,
    inner_points: Vec<Point>,
}

fn elements(mesh: &Mesh, opts: &AssemblyOptions) -> Vec<Element> {
    (0..mesh.n_triangles())
        .map(|t| {
            let pts = mesh.triangle_points(t);
            Element {
                vertices: mesh.triangles()[t],
                points: pts,
                lo: pts[0].inf(&pts[1]).inf(&pts[2]),
                hi: pts[0].sup(&pts[1]).sup(&pts[2]),
                jac: 2.0 * mesh.area(t),
                grads: barycentric_gradients(&pts),
                side: Side::from(mesh.labels()[t]),
                outer_points: opts.outer.map(&pts),
                inner_points: opts.inner.map(&pts),
            }
        })
        .collect()
}

impl Element {
    fn barycentric(&self, y: &Point) -> [f64; 3] {
        let r = y - self.points[0];
        let (l1, l2) = (self.grads[1].dot(&r), self.grads[2].dot(&r));
        [1.0 - l1 - l2, l1, l2]
    }
}

/// Inner integration node: position, weight (Jacobian included) and
/// barycentric coordinates in the inner triangle.
#[derive(Debug, Clone, Copy)]
struct Node {
    y: Point,
    w: f64,
    lam: [f64; 3],
}

/// Node on the boundary of the interaction square, with its outward normal.
#[derive(Debug, Clone, Copy)]
struct EdgeNode {
    y: Point,
    w: f64,
    lam: [f64; 3],
    normal: Point,
}

/// Nodes of the inner integral over `f` for the outer point `x`.
fn inner_nodes(x: &Point, f: &Element, kernel: &KernelSpec, clip: bool, rule: &QuadratureRule, out: &mut Vec<Node>) {
    out.clear();
    let (wi, li) = (rule.weights(), rule.barycentric());
    if !clip {
        for (qp, y) in f.inner_points.iter().enumerate() {
            if kernel.in_support(x, y) {
                out.push(Node { y: *y, w: wi[qp] * f.jac, lam: li[qp] });
            }
        }
        return;
    }
    let r = Point::repeat(kernel.delta());
    let (lo, hi) = (x - r, x + r);
    if f.hi.x < lo.x || f.lo.x > hi.x || f.hi.y < lo.y || f.lo.y > hi.y {
        return;
    }
    if f.lo.x >= lo.x && f.hi.x <= hi.x && f.lo.y >= lo.y && f.hi.y <= hi.y {
        for (qp, y) in f.inner_points.iter().enumerate() {
            out.push(Node { y: *y, w: wi[qp] * f.jac, lam: li[qp] });
        }
        return;
    }
    let poly = clip_to_box(&f.points, &lo, &hi);
    for k in 1..poly.len().saturating_sub(1) {
        let (p0, p1, p2) = (poly[0], poly[k], poly[k + 1]);
        let jac = (p1 - p0).perp(&(p2 - p0));
        if jac <= 0.0 {
            continue;
        }
        for (qp, l) in li.iter().enumerate() {
            let y = p0 * l[0] + p1 * l[1] + p2 * l[2];
            out.push(Node { y, w: wi[qp] * jac, lam: f.barycentric(&y) });
        }
    }
}

/// Sutherland-Hodgman clipping of a counter-clockwise triangle against an
/// axis-aligned box.
fn clip_to_box(tri: &[Point; 3], lo: &Point, hi: &Point) -> Vec<Point> {
    let mut poly: Vec<Point> = tri.to_vec();
    for (axis, bound, below) in [(0, hi.x, true), (0, lo.x, false), (1, hi.y, true), (1, lo.y, false)] {
        let inside = |p: &Point| if below { p[axis] <= bound } else { p[axis] >= bound };
        let mut next = Vec::with_capacity(poly.len() + 2);
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            let (ia, ib) = (inside(&a), inside(&b));
            if ia {
                next.push(a);
            }
            if ia != ib {
                let s = (bound - a[axis]) / (b[axis] - a[axis]);
                let mut p = a + (b - a) * s;
                p[axis] = bound;
                next.push(p);
            }
        }
        poly = next;
        if poly.is_empty() {
            break;
        }
    }
    poly
}

/// Three-point Gauss-Legendre rule on `[0, 1]`.
const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Nodes on the part of the interaction square boundary inside `f`.
fn boundary_nodes(x: &Point, f: &Element, delta: f64, out: &mut Vec<EdgeNode>) {
    out.clear();
    let r = Point::repeat(delta);
    let (lo, hi) = (x - r, x + r);
    if f.hi.x < lo.x || f.lo.x > hi.x || f.hi.y < lo.y || f.lo.y > hi.y {
        return;
    }
    if f.lo.x > lo.x && f.hi.x < hi.x && f.lo.y > lo.y && f.hi.y < hi.y {
        return;
    }
    let sides = [
        (Point::new(hi.x, lo.y), Point::new(hi.x, hi.y), Point::new(1.0, 0.0)),
        (Point::new(lo.x, lo.y), Point::new(lo.x, hi.y), Point::new(-1.0, 0.0)),
        (Point::new(lo.x, hi.y), Point::new(hi.x, hi.y), Point::new(0.0, 1.0)),
        (Point::new(lo.x, lo.y), Point::new(hi.x, lo.y), Point::new(0.0, -1.0)),
    ];
    for (a, b, normal) in sides {
        let (mut s0, mut s1) = (0.0f64, 1.0f64);
        for i in 0..3 {
            let (p, q) = (f.points[i], f.points[(i + 1) % 3]);
            let e = q - p;
            let (fa, fb) = (e.perp(&(a - p)), e.perp(&(b - p)));
            if fa < 0.0 && fb < 0.0 {
                s1 = -1.0;
                break;
            }
            if fa < 0.0 {
                s0 = s0.max(fa / (fa - fb));
            } else if fb < 0.0 {
                s1 = s1.min(fa / (fa - fb));
            }
        }
        if s1 <= s0 {
            continue;
        }
        let len = (b - a).norm() * (s1 - s0);
        for (s, w) in GAUSS3 {
            let y = a + (b - a) * (s0 + s * (s1 - s0));
            out.push(EdgeNode { y, w: w * len, lam: f.barycentric(&y), normal });
        }
    }
}

const CHUNK: usize = 512;

/// Evaluate `f` on `0..n` (in parallel if requested) and feed the results to
/// `sink` in index order.
fn ordered_map<T: Send>(
    n: usize,
    parallel: bool,
    f: impl Fn(usize) -> T + Sync + Send,
    mut sink: impl FnMut(usize, T),
) {
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let results: Vec<T> = if parallel {
            (start..end).into_par_iter().map(&f).collect()
        } else {
            (start..end).map(&f).collect()
        };
        for (k, r) in results.into_iter().enumerate() {
            sink(start + k, r);
        }
        start = end;
    }
}

const DROPPED: usize = usize::MAX;

/// Full nonlocal matrix over all vertices; row = test function, column =
/// trial function.
pub fn assemble_nonlocal(mesh: &Mesh, kernel: &KernelSpec, opts: &AssemblyOptions) -> SparseMatrix {
    let index: Vec<usize> = (0..mesh.n_vertices()).collect();
    assemble_indexed(mesh, kernel, opts, &index, mesh.n_vertices())
}

/// Nonlocal matrix restricted to the interior degrees of freedom; equal to
/// `assemble_nonlocal(..).restrict(interior)` bit for bit.
pub fn assemble_nonlocal_interior(
    mesh: &Mesh,
    kernel: &KernelSpec,
    opts: &AssemblyOptions,
) -> SparseMatrix {
    let index: Vec<usize> = (0..mesh.n_vertices())
        .map(|v| mesh.interior_index(v).unwrap_or(DROPPED))
        .collect();
    assemble_indexed(mesh, kernel, opts, &index, mesh.n_interior())
}

fn assemble_indexed(
    mesh: &Mesh,
    kernel: &KernelSpec,
    opts: &AssemblyOptions,
    index: &[usize],
    dim: usize,
) -> SparseMatrix {
    let pairs = candidate_pairs(mesh, kernel);
    let elems = elements(mesh, opts);
    let wo = opts.outer.weights();
    let lo = opts.outer.barycentric();

    let outer_block = |t: usize| -> Vec<(usize, usize, f64)> {
        let e = &elems[t];
        if e.vertices.iter().all(|&v| index[v] == DROPPED) {
            return Vec::new();
        }
        let phi = kernel.partial(e.side);
        let clip = opts.clips(kernel, e.side);
        let mut phi_acc = vec![0.0; wo.len()];
        let mut slots: HashMap<usize, usize> = HashMap::new();
        let mut rows: Vec<(usize, [f64; 3])> = Vec::new();
        let mut nodes = Vec::new();
        for &tp in pairs.partners(t) {
            let f = &elems[tp];
            let mut block = [[0.0; 3]; 3];
            let mut any = false;
            for (q, x) in e.outer_points.iter().enumerate() {
                inner_nodes(x, f, kernel, clip, &opts.inner, &mut nodes);
                let mut total = 0.0;
                let mut lam = [0.0; 3];
                for n in &nodes {
                    let g = n.w * phi.value(x, &n.y);
                    total += g;
                    for a in 0..3 {
                        lam[a] += g * n.lam[a];
                    }
                }
                if total == 0.0 && lam == [0.0; 3] {
                    continue;
                }
                any = true;
                phi_acc[q] += total;
                let wq = wo[q] * e.jac;
                for a in 0..3 {
                    for b in 0..3 {
                        block[a][b] -= wq * lo[q][b] * lam[a];
                    }
                }
            }
            if !any {
                continue;
            }
            for a in 0..3 {
                let va = f.vertices[a];
                if index[va] == DROPPED {
                    continue;
                }
                let slot = *slots.entry(va).or_insert_with(|| {
                    rows.push((va, [0.0; 3]));
                    rows.len() - 1
                });
                for b in 0..3 {
                    rows[slot].1[b] += block[a][b];
                }
            }
        }
        let mut out = Vec::with_capacity(9 + 3 * rows.len());
        for a in 0..3 {
            let ra = index[e.vertices[a]];
            if ra == DROPPED {
                continue;
            }
            for b in 0..3 {
                let cb = index[e.vertices[b]];
                if cb == DROPPED {
                    continue;
                }
                let d: f64 = (0..wo.len())
                    .map(|q| wo[q] * e.jac * lo[q][a] * lo[q][b] * phi_acc[q])
                    .sum();
                out.push((ra, cb, d));
            }
        }
        for (va, vals) in rows {
            for b in 0..3 {
                let cb = index[e.vertices[b]];
                if cb != DROPPED {
                    out.push((index[va], cb, vals[b]));
                }
            }
        }
        out
    };

    let mut triplets = Vec::new();
    ordered_map(mesh.n_triangles(), opts.parallel, outer_block, |_, block| {
        triplets.extend(block)
    });
    SparseMatrix::from_triplets(dim, dim, &triplets).expect("indices are in range")
}

/// Shape-derivative contractions of the nonlocal form `A(u, v)` on the nodal
/// vector basis fields `V = psi_a e_d`, stored interleaved (`2 a + d`).
#[derive(Debug, Clone, PartialEq)]
pub struct NonlocalContractions {
    /// `u (v(x) - v(y)) phi div V(x)`.
    pub div: Vec<f64>,
    /// `u (v(x) - v(y)) (grad_x phi + grad_y phi) . V(x)`.
    pub grad_sum: Vec<f64>,
    /// `u (v(x) - v(y)) [phi div V(y) + grad_y phi . (V(y) - V(x))]`, plus
    /// the flux through the interaction boundary when it is clipped: the
    /// motion of the inner integration region, needed for the exact
    /// derivative of the discrete form.
    pub transport: Vec<f64>,
}

impl NonlocalContractions {
    /// Sum of all three parts: the derivative of the discrete form.
    pub fn total(&self) -> Vec<f64> {
        (0..self.div.len())
            .map(|i| self.div[i] + self.grad_sum[i] + self.transport[i])
            .collect()
    }
}

pub fn assemble_design_contractions(
    mesh: &Mesh,
    kernel: &KernelSpec,
    u: &[f64],
    v: &[f64],
    opts: &AssemblyOptions,
) -> Result<NonlocalContractions, MeshError> {
    let nv = mesh.n_vertices();
    for f in [u, v] {
        if f.len() != nv {
            return Err(MeshError::FieldLength { expected: nv, found: f.len() });
        }
    }
    let pairs = candidate_pairs(mesh, kernel);
    let elems = elements(mesh, opts);
    let wo = opts.outer.weights();
    let lo = opts.outer.barycentric();
    let eval = |f: &[f64], e: &Element, lam: &[f64; 3]| -> f64 {
        lam[0] * f[e.vertices[0]] + lam[1] * f[e.vertices[1]] + lam[2] * f[e.vertices[2]]
    };

    // (vertex, part, value pair); part 0 = div, 1 = grad_sum, 2 = transport
    let outer_block = |t: usize| -> Vec<(usize, usize, [f64; 2])> {
        let e = &elems[t];
        let ux: Vec<f64> = lo.iter().map(|l| eval(u, e, l)).collect();
        if ux.iter().all(|&x| x == 0.0) {
            return Vec::new();
        }
        let vx: Vec<f64> = lo.iter().map(|l| eval(v, e, l)).collect();
        let phi = kernel.partial(e.side);
        let radial = phi.is_radial();
        let clip = opts.clips(kernel, e.side);
        let mut div_sum = 0.0;
        let mut gs = [[0.0; 2]; 3];
        let mut tr_x = [[0.0; 2]; 3];
        let mut out = Vec::new();
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for &tp in pairs.partners(t) {
            let f = &elems[tp];
            let mut r = 0.0;
            let mut gy_acc = [[0.0; 2]; 3];
            for (q, x) in e.outer_points.iter().enumerate() {
                if ux[q] == 0.0 {
                    continue;
                }
                let wq = wo[q] * e.jac * ux[q];
                inner_nodes(x, f, kernel, clip, &opts.inner, &mut nodes);
                for n in &nodes {
                    let c = wq * n.w * (vx[q] - eval(v, f, &n.lam));
                    if c == 0.0 {
                        continue;
                    }
                    r += c * phi.value(x, &n.y);
                    let gy = phi.grad_y(x, &n.y);
                    for d in 0..2 {
                        for a in 0..3 {
                            gy_acc[a][d] += c * gy[d] * n.lam[a];
                            tr_x[a][d] -= c * gy[d] * lo[q][a];
                        }
                    }
                    if !radial {
                        let g = kernel.grad_sum(e.side, x, &n.y);
                        for d in 0..2 {
                            for a in 0..3 {
                                gs[a][d] += c * g[d] * lo[q][a];
                            }
                        }
                    }
                }
                if clip {
                    // the square moves with x while the inner mesh moves
                    // with V(y): flux (V(x) - V(y)) . n through its boundary
                    boundary_nodes(x, f, kernel.delta(), &mut edges);
                    for b in &edges {
                        let c = wq * b.w * (vx[q] - eval(v, f, &b.lam)) * phi.value(x, &b.y);
                        if c == 0.0 {
                            continue;
                        }
                        for d in 0..2 {
                            for a in 0..3 {
                                tr_x[a][d] += c * lo[q][a] * b.normal[d];
                                gy_acc[a][d] -= c * b.lam[a] * b.normal[d];
                            }
                        }
                    }
                }
            }
            div_sum += r;
            for a in 0..3 {
                let gr = f.grads[a];
                out.push((f.vertices[a], 2, [r * gr.x + gy_acc[a][0], r * gr.y + gy_acc[a][1]]));
            }
        }
        for a in 0..3 {
            let va = e.vertices[a];
            let gr = e.grads[a];
            out.push((va, 0, [div_sum * gr.x, div_sum * gr.y]));
            out.push((va, 1, gs[a]));
            out.push((va, 2, tr_x[a]));
        }
        out
    };

    let mut parts = [vec![0.0; 2 * nv], vec![0.0; 2 * nv], vec![0.0; 2 * nv]];
    ordered_map(mesh.n_triangles(), opts.parallel, outer_block, |_, block| {
        for (vertex, part, val) in block {
            parts[part][2 * vertex] += val[0];
            parts[part][2 * vertex + 1] += val[1];
        }
    });
    let [div, grad_sum, transport] = parts;
    Ok(NonlocalContractions { div, grad_sum, transport })
}
