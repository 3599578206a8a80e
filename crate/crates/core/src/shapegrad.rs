//! Shape derivative of the reduced objective on nodal vector basis fields,
//! interface-support zeroing and the deformation (shape gradient) solve.
//!
//! Design vectors are interleaved: entry `2 a + d` is the derivative in the
//! direction `V = psi_a e_d`.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::fem::{assemble_elasticity, p1_gradient, FemError};
use crate::geometry::barycentric_gradients;
use crate::linalg::{norm2, solve, LinalgError};
use crate::mesh::{Mesh, MeshError};
use crate::nonlocal::assemble_design_contractions;
use crate::system::{perimeter_term, Objective, ProblemConfig, StateSystem, SystemError, Tracking};
use crate::transfer::DataField;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("field has length {found}, expected {expected}")]
    FieldLength { expected: usize, found: usize },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which tracking and nonlocal terms enter the derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    /// Exact derivative of the discrete objective: includes the motion of the
    /// inner quadrature nodes and the moving target samples.
    #[default]
    Consistent,
    /// Continuous formula: tracking term `-int (u - u_bar) grad u . V` and the
    /// nonlocal terms evaluated at the outer point only.
    Literal,
}

impl FromStr for DerivativeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "consistent" => Ok(Self::Consistent),
            "literal" => Ok(Self::Literal),
            _ => Err(format!("unknown derivative mode '{s}' (expected consistent or literal)")),
        }
    }
}

/// The shape derivative split by term.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTerms {
    pub perimeter: Vec<f64>,
    /// `-int f v div V`.
    pub load: Vec<f64>,
    /// `-int (grad f . V) v`; zero for piecewise constant forcing.
    pub load_rate: Vec<f64>,
    pub tracking: Vec<f64>,
    /// `eps [int grad u . grad v div V - grad u^T (DV + DV^T) grad v]`.
    pub local: Vec<f64>,
    pub nonlocal_div: Vec<f64>,
    pub nonlocal_grad_sum: Vec<f64>,
    /// Zero in literal mode.
    pub nonlocal_transport: Vec<f64>,
}

const TERM_NAMES: [&str; 8] = [
    "perimeter",
    "load",
    "load_rate",
    "tracking",
    "local",
    "nonlocal_div",
    "nonlocal_grad_sum",
    "nonlocal_transport",
];

impl ShapeTerms {
    fn columns(&self) -> [&[f64]; 8] {
        [
            &self.perimeter,
            &self.load,
            &self.load_rate,
            &self.tracking,
            &self.local,
            &self.nonlocal_div,
            &self.nonlocal_grad_sum,
            &self.nonlocal_transport,
        ]
    }

    pub fn total(&self) -> Vec<f64> {
        let cols = self.columns();
        (0..self.perimeter.len()).map(|i| cols.iter().map(|c| c[i]).sum()).collect()
    }

    /// One row per vertex and component with every term and the total.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex,component");
        for name in TERM_NAMES {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",total\n");
        let total = self.total();
        let cols = self.columns();
        for i in 0..total.len() {
            write!(out, "{},{}", i / 2, i % 2).unwrap();
            for c in cols {
                write!(out, ",{:e}", c[i]).unwrap();
            }
            writeln!(out, ",{:e}", total[i]).unwrap();
        }
        out
    }
}

fn check_len(expected: usize, f: &[f64]) -> Result<(), ShapeError> {
    if f.len() != expected {
        return Err(ShapeError::FieldLength { expected, found: f.len() });
    }
    Ok(())
}

/// Derivative of `nu |Gamma|` with respect to the interface vertices.
pub fn perimeter_derivative(mesh: &Mesh, nu: f64) -> Vec<f64> {
    let mut g = vec![0.0; 2 * mesh.n_vertices()];
    let iface = mesh.interface();
    let n = iface.len();
    if nu == 0.0 || n < 2 {
        return g;
    }
    let p = mesh.vertices();
    for i in 0..n {
        let (a, b) = (iface[i], iface[(i + 1) % n]);
        let e = p[b] - p[a];
        let unit = e / e.norm();
        for d in 0..2 {
            g[2 * b + d] += nu * unit[d];
            g[2 * a + d] -= nu * unit[d];
        }
    }
    g
}

/// Assemble every term of the shape derivative for state `u`, adjoint `v`
/// and target samples `tracking`, all on `mesh`.
pub fn assemble_shape_derivative(
    mesh: &Mesh,
    cfg: &ProblemConfig,
    u: &[f64],
    v: &[f64],
    tracking: &Tracking,
    mode: DerivativeMode,
) -> Result<ShapeTerms, ShapeError> {
    let nv = mesh.n_vertices();
    check_len(nv, u)?;
    check_len(nv, v)?;
    let zeros = vec![0.0; 2 * nv];
    let mut load = zeros.clone();
    let mut track = zeros.clone();
    let mut local = zeros.clone();
    let rule = tracking.rule();
    for t in 0..mesh.n_triangles() {
        let label = mesh.labels()[t];
        if !label.in_omega() {
            continue;
        }
        let tri = mesh.triangles()[t];
        let area = mesh.area(t);
        let g = barycentric_gradients(&mesh.triangle_points(t));
        let gu = p1_gradient(mesh, t, u);
        let gv = p1_gradient(mesh, t, v);
        let v_mean = (v[tri[0]] + v[tri[1]] + v[tri[2]]) / 3.0;
        let f = cfg.forcing(label);
        let misfit = tracking.misfit(mesh, u, t);
        let samples = tracking.samples(t);
        for (k, &a) in tri.iter().enumerate() {
            for d in 0..2 {
                let div = g[k][d];
                let i = 2 * a + d;
                load[i] -= f * area * v_mean * div;
                local[i] += cfg.eps
                    * area
                    * (gu.dot(&gv) * div - gu[d] * g[k].dot(&gv) - gu.dot(&g[k]) * gv[d]);
                let mut s = 0.0;
                for q in 0..rule.len() {
                    let (w, lam, e) = (rule.weights()[q], rule.barycentric()[q][k], misfit[q]);
                    s += w * match mode {
                        DerivativeMode::Consistent => 0.5 * e * e * div - e * samples[q].1[d] * lam,
                        DerivativeMode::Literal => -e * gu[d] * lam,
                    };
                }
                track[i] += 2.0 * area * s;
            }
        }
    }
    let nl = assemble_design_contractions(mesh, &cfg.kernel, u, v, &cfg.assembly)?;
    let transport = match mode {
        DerivativeMode::Consistent => nl.transport,
        DerivativeMode::Literal => zeros.clone(),
    };
    Ok(ShapeTerms {
        perimeter: perimeter_derivative(mesh, cfg.nu),
        load,
        load_rate: zeros,
        tracking: track,
        local,
        nonlocal_div: nl.div,
        nonlocal_grad_sum: nl.grad_sum,
        nonlocal_transport: transport,
    })
}

/// Design vector restricted to the basis fields whose support meets the
/// interface.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVector {
    pub values: Vec<f64>,
    /// Vertices whose entries may be nonzero.
    pub active: Vec<usize>,
}

impl DesignVector {
    pub fn norm(&self) -> f64 {
        norm2(&self.values)
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Zero every entry outside the interface one-ring and on constrained
/// vertices.
pub fn zero_non_interface(g: &[f64], mesh: &Mesh) -> Result<DesignVector, ShapeError> {
    check_len(2 * mesh.n_vertices(), g)?;
    let active: Vec<usize> = mesh
        .interface_one_ring()
        .into_iter()
        .filter(|&a| mesh.is_interior(a))
        .collect();
    let mut values = vec![0.0; g.len()];
    for &a in &active {
        values[2 * a] = g[2 * a];
        values[2 * a + 1] = g[2 * a + 1];
    }
    Ok(DesignVector { values, active })
}

/// Solve the elasticity system with right-hand side `g` on the interior
/// vertices; the displacement vanishes on constrained vertices.
pub fn solve_deformation(mesh: &Mesh, g: &[f64], mu: &[f64], lambda: f64) -> Result<Vec<f64>, ShapeError> {
    check_len(2 * mesh.n_vertices(), g)?;
    let dofs: Vec<usize> = mesh.interior_vertices().iter().flat_map(|&v| [2 * v, 2 * v + 1]).collect();
    let mut out = vec![0.0; g.len()];
    if dofs.iter().all(|&i| g[i] == 0.0) {
        return Ok(out);
    }
    let k = assemble_elasticity(mesh, mu, lambda)?.restrict(&dofs)?;
    let rhs: Vec<f64> = dofs.iter().map(|&i| g[i]).collect();
    let x = solve(&k, &rhs, true)?;
    for (&i, xi) in dofs.iter().zip(x) {
        out[i] = xi;
    }
    Ok(out)
}

/// Reduced objective: solve the state on `mesh` and compare with `data`.
pub fn evaluate_objective(mesh: &Mesh, cfg: &ProblemConfig, data: &DataField) -> Result<Objective, ShapeError> {
    let u = StateSystem::new(mesh, cfg)?.solve_state(mesh)?;
    let tracking = Tracking::sample(mesh, data, &cfg.assembly.outer);
    Ok(Objective { tracking: tracking.value(mesh, &u)?, perimeter: perimeter_term(mesh, cfg) })
}

/// Everything computed at one iterate.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub objective: Objective,
    pub terms: ShapeTerms,
    /// Zeroed design vector.
    pub design: DesignVector,
}

/// State, adjoint, objective and zeroed shape derivative at `mesh`.
pub fn evaluate(
    mesh: &Mesh,
    cfg: &ProblemConfig,
    data: &DataField,
    mode: DerivativeMode,
) -> Result<Evaluation, ShapeError> {
    let system = StateSystem::new(mesh, cfg)?;
    let u = system.solve_state(mesh)?;
    let tracking = Tracking::sample(mesh, data, &cfg.assembly.outer);
    let objective = Objective { tracking: tracking.value(mesh, &u)?, perimeter: perimeter_term(mesh, cfg) };
    let v = system.solve_adjoint(mesh, &tracking.adjoint_rhs(mesh, &u)?)?;
    let terms = assemble_shape_derivative(mesh, cfg, &u, &v, &tracking, mode)?;
    let design = zero_non_interface(&terms.total(), mesh)?;
    Ok(Evaluation { u, v, objective, terms, design })
}
