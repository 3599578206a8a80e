//! Classical P1 finite element operators on the unit-square part of the mesh.

use thiserror::Error;

use crate::geometry::{barycentric_gradients, Point};
use crate::linalg::{BandLu, LinalgError, SparseMatrix};
use crate::mesh::{Mesh, Region};

#[derive(Debug, Error)]
pub enum FemError {
    #[error("nonpositive Lamé parameter mu = {mu:e} on triangle {triangle}")]
    NonpositiveMu { triangle: usize, mu: f64 },
    #[error("field has length {found}, expected {expected}")]
    FieldLength { expected: usize, found: usize },
    #[error("invalid Lamé bounds: mu_min = {min}, mu_max = {max}")]
    InvalidBounds { min: f64, max: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Triangles inside the unit square.
fn omega_triangles(mesh: &Mesh) -> impl Iterator<Item = usize> + '_ {
    (0..mesh.n_triangles()).filter(|&t| mesh.labels()[t].in_omega())
}

/// Stiffness matrix of `int grad u . grad v` over the unit square.
pub fn assemble_laplace(mesh: &Mesh) -> SparseMatrix {
    let mut t = Vec::new();
    for tri in omega_triangles(mesh) {
        let g = barycentric_gradients(&mesh.triangle_points(tri));
        let area = mesh.area(tri);
        let v = mesh.triangles()[tri];
        for a in 0..3 {
            for b in 0..3 {
                t.push((v[a], v[b], area * g[a].dot(&g[b])));
            }
        }
    }
    let n = mesh.n_vertices();
    SparseMatrix::from_triplets(n, n, &t).expect("vertex indices are in range")
}

/// Consistent mass matrix over the unit square.
pub fn assemble_mass(mesh: &Mesh) -> SparseMatrix {
    let mut t = Vec::new();
    for tri in omega_triangles(mesh) {
        let area = mesh.area(tri);
        let v = mesh.triangles()[tri];
        for a in 0..3 {
            for b in 0..3 {
                let f = if a == b { 2.0 } else { 1.0 };
                t.push((v[a], v[b], area * f / 12.0));
            }
        }
    }
    let n = mesh.n_vertices();
    SparseMatrix::from_triplets(n, n, &t).expect("vertex indices are in range")
}

/// Linear elasticity `int 2 mu eps(U):eps(V) + lambda div U div V` over the
/// unit square, with `mu` averaged per triangle. Degrees of freedom are
/// interleaved: `2 * vertex + component`.
pub fn assemble_elasticity(mesh: &Mesh, mu: &[f64], lambda: f64) -> Result<SparseMatrix, FemError> {
    if mu.len() != mesh.n_vertices() {
        return Err(FemError::FieldLength { expected: mesh.n_vertices(), found: mu.len() });
    }
    let mut t = Vec::new();
    for tri in omega_triangles(mesh) {
        let v = mesh.triangles()[tri];
        let mu_t = (mu[v[0]] + mu[v[1]] + mu[v[2]]) / 3.0;
        if !(mu_t > 0.0) {
            if v.iter().any(|&k| mesh.is_interior(k)) {
                return Err(FemError::NonpositiveMu { triangle: tri, mu: mu_t });
            }
            continue;
        }
        let g = barycentric_gradients(&mesh.triangle_points(tri));
        let area = mesh.area(tri);
        for a in 0..3 {
            for b in 0..3 {
                let gg = g[a].dot(&g[b]);
                for d in 0..2 {
                    for e in 0..2 {
                        let shear = if d == e { gg } else { 0.0 } + g[a][e] * g[b][d];
                        let val = area * (mu_t * shear + lambda * g[a][d] * g[b][e]);
                        t.push((2 * v[a] + d, 2 * v[b] + e, val));
                    }
                }
            }
        }
    }
    let n = 2 * mesh.n_vertices();
    Ok(SparseMatrix::from_triplets(n, n, &t)?)
}

/// Lamé field: harmonic on the unit square with `mu_max` on the interface
/// and `mu_min` on the boundary (and in the collar).
pub fn solve_mu_field(mesh: &Mesh, mu_min: f64, mu_max: f64) -> Result<Vec<f64>, FemError> {
    if !(mu_min >= 0.0 && mu_max >= mu_min) {
        return Err(FemError::InvalidBounds { min: mu_min, max: mu_max });
    }
    let n = mesh.n_vertices();
    let mut mu = vec![mu_min; n];
    let mut fixed = vec![true; n];
    for &v in mesh.interior_vertices() {
        fixed[v] = false;
    }
    // the interface separates the inner region, where the discrete harmonic
    // solution is the constant mu_max; only the outer part needs a solve
    for (tri, label) in mesh.triangles().iter().zip(mesh.labels()) {
        if *label == Region::Omega1 {
            for &v in tri {
                mu[v] = mu_max;
                fixed[v] = true;
            }
        }
    }
    for &v in mesh.interface() {
        mu[v] = mu_max;
        fixed[v] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&v| !fixed[v]).collect();
    if free.is_empty() {
        return Ok(mu);
    }
    let k = assemble_laplace(mesh);
    // rhs = -K_{free, fixed} mu_fixed
    let lifted: Vec<f64> = (0..n).map(|v| if fixed[v] { mu[v] } else { 0.0 }).collect();
    let k_lift = k.mul_vec(&lifted)?;
    let rhs: Vec<f64> = free.iter().map(|&v| -k_lift[v]).collect();
    let x = BandLu::factor(&k.restrict(&free)?)?.solve(&rhs)?;
    for (&v, xi) in free.iter().zip(x) {
        mu[v] = xi;
    }
    Ok(mu)
}

/// Gradient of a P1 field on triangle `t`.
pub fn p1_gradient(mesh: &Mesh, t: usize, field: &[f64]) -> Point {
    let g = barycentric_gradients(&mesh.triangle_points(t));
    let v = mesh.triangles()[t];
    g[0] * field[v[0]] + g[1] * field[v[1]] + g[2] * field[v[2]]
}

/// Interleaved vector field from per-vertex points.
pub fn interleave(values: &[Point]) -> Vec<f64> {
    values.iter().flat_map(|p| [p.x, p.y]).collect()
}
