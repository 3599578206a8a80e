//! The outer optimization loop and its optional warm-started second stage.

use std::fmt::Write as _;

use thiserror::Error;

use super::lbfgs::{DirectionKind, Lbfgs};
use super::linesearch::{line_search, Evaluator, LineSearchParams, ParamError, StepCheck};
use crate::fem::{solve_mu_field, FemError};
use crate::geometry::Point;
use crate::linalg::dot;
use crate::mesh::{out_of_omega, self_intersects, Mesh, MeshError};
use crate::shapegrad::{evaluate, evaluate_objective, solve_deformation, DerivativeMode, ShapeError};
use crate::system::{Objective, ProblemConfig};
use crate::transfer::{remesh_around_interface, DataField};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("invalid optimizer option: {0}")]
    Options(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerOptions {
    /// Stop once the Euclidean norm of the design vector is at most `tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of stored L-BFGS pairs.
    pub memory: usize,
    pub mu_min: f64,
    /// When positive, the lower Lamé bound follows the adapted upper one as
    /// `mu_min_ratio * mu_max` and `mu_min` is ignored.
    pub mu_min_ratio: f64,
    /// Initial upper Lamé bound; adapted by the line search.
    pub mu_max: f64,
    pub lambda: f64,
    pub max_restarts: usize,
    pub line_search: LineSearchParams,
    pub mode: DerivativeMode,
    /// When set, the first iteration replaces `mu_max` so that the full step
    /// `alpha = 1` moves the mesh by at most this multiple of `h_max`.
    pub calibrate_step: Option<f64>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 100,
            memory: 15,
            mu_min: 0.0,
            mu_min_ratio: 0.0,
            mu_max: 20.0,
            lambda: 0.0,
            max_restarts: 3,
            line_search: LineSearchParams::default(),
            mode: DerivativeMode::Consistent,
            calibrate_step: None,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        self.line_search.validate()?;
        if !(self.tol >= 0.0) {
            return Err(OptimizeError::Options("tol must be nonnegative"));
        }
        if !(self.mu_min >= 0.0 && self.mu_max > 0.0 && self.mu_max >= self.mu_min) {
            return Err(OptimizeError::Options("need 0 <= mu_min <= mu_max and mu_max > 0"));
        }
        if !(self.mu_min_ratio >= 0.0 && self.mu_min_ratio <= 1.0) {
            return Err(OptimizeError::Options("mu_min_ratio must lie in [0, 1]"));
        }
        if !(self.lambda >= 0.0) {
            return Err(OptimizeError::Options("lambda must be nonnegative"));
        }
        if self.calibrate_step.is_some_and(|f| !(f > 0.0 && f.is_finite())) {
            return Err(OptimizeError::Options("calibrate_step must be positive"));
        }
        Ok(())
    }

    /// Lower Lamé bound paired with `mu_max`.
    pub fn mu_min_for(&self, mu_max: f64) -> f64 {
        if self.mu_min_ratio > 0.0 {
            self.mu_min_ratio * mu_max
        } else {
            self.mu_min.min(mu_max)
        }
    }
}

/// One row of the history: the iterate `k` and the step taken from it.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: Objective,
    pub grad_norm: f64,
    pub alpha: f64,
    pub ls_rounds: usize,
    /// Value after the line search adaption.
    pub mu_max: f64,
    pub restarts: usize,
}

pub const HISTORY_HEADER: &str = "iter,J,J_tracking,J_perimeter,grad_norm,alpha,ls_rounds,mu_max,restarts";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<IterationRecord>,
}

impl History {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.iter,
                r.objective.total(),
                r.objective.tracking,
                r.objective.perimeter,
                r.grad_norm,
                r.alpha,
                r.ls_rounds,
                r.mu_max,
                r.restarts
            );
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == HISTORY_HEADER => {}
            _ => return Err(format!("line 1: expected header '{HISTORY_HEADER}'")),
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 9 {
                return Err(format!("line {}: expected 9 fields, found {}", i + 1, f.len()));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|e| format!("line {}: field {}: {e}", i + 1, k + 1));
            let int = |k: usize| f[k].parse::<usize>().map_err(|e| format!("line {}: field {}: {e}", i + 1, k + 1));
            records.push(IterationRecord {
                iter: int(0)?,
                objective: Objective { tracking: num(2)?, perimeter: num(3)? },
                grad_norm: num(4)?,
                alpha: num(5)?,
                ls_rounds: int(6)?,
                mu_max: num(7)?,
                restarts: int(8)?,
            });
        }
        Ok(Self { records })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// More restarts were requested than allowed.
    RestartBudget,
    /// The line search failed along the plain gradient.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub mesh: Mesh,
    pub history: History,
    pub stop: StopReason,
    /// Interface of the initial mesh followed by every accepted iterate.
    pub iterates: Vec<Vec<Point>>,
}

/// Error together with everything computed before it.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: OptimizeError,
    pub partial: Box<RunResult>,
}

/// Trial steps `x - alpha * dir` of one mesh.
struct MeshStep<'a> {
    mesh: &'a Mesh,
    dir: &'a [f64],
    cfg: &'a ProblemConfig,
    data: &'a DataField,
}

impl Evaluator for MeshStep<'_> {
    type Error = ShapeError;

    fn check(&mut self, alpha: f64) -> StepCheck {
        StepCheck {
            self_intersects: self_intersects(&self.mesh.displaced_interface(self.dir, alpha)),
            out_of_omega: out_of_omega(self.mesh, self.dir, alpha),
            inverted: self.mesh.would_invert(self.dir, alpha).unwrap_or(true),
        }
    }

    fn objective(&mut self, alpha: f64) -> Result<f64, ShapeError> {
        let moved = self.mesh.deform(self.dir, alpha)?;
        Ok(evaluate_objective(&moved, self.cfg, self.data)?.total())
    }
}

/// Run the shape optimization from `mesh`. `observer` sees every history
/// record together with the mesh reached after that iteration.
pub fn optimize(
    mesh: Mesh,
    cfg: &ProblemConfig,
    data: &DataField,
    opts: &OptimizerOptions,
    first_iter: usize,
    mut observer: impl FnMut(&IterationRecord, &Mesh),
) -> Result<RunResult, RunFailure> {
    let mut result = RunResult {
        iterates: vec![mesh.interface_points()],
        mesh,
        history: History::default(),
        stop: StopReason::MaxIterations,
    };
    match drive(&mut result, cfg, data, opts, first_iter, &mut observer) {
        Ok(()) => Ok(result),
        Err(error) => Err(RunFailure { error, partial: Box::new(result) }),
    }
}

fn drive(
    res: &mut RunResult,
    cfg: &ProblemConfig,
    data: &DataField,
    opts: &OptimizerOptions,
    first_iter: usize,
    observer: &mut impl FnMut(&IterationRecord, &Mesh),
) -> Result<(), OptimizeError> {
    opts.validate()?;
    let mut lbfgs = Lbfgs::new(opts.memory);
    let mut mu_max = opts.mu_max;
    let mut restarts = 0;
    // previous gradient and step, for the next curvature pair
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;

    for k in 0..opts.max_iter {
        let iter = first_iter + k;
        let eval = evaluate(&res.mesh, cfg, data, opts.mode)?;
        let grad_norm = eval.design.norm();
        let mut record = IterationRecord {
            iter,
            objective: eval.objective,
            grad_norm,
            alpha: 0.0,
            ls_rounds: 0,
            mu_max,
            restarts,
        };
        if grad_norm <= opts.tol {
            res.history.records.push(record.clone());
            observer(&record, &res.mesh);
            res.stop = StopReason::Converged;
            return Ok(());
        }

        if let (0, Some(frac)) = (k, opts.calibrate_step) {
            mu_max = calibrated_mu_max(&res.mesh, &eval.design.values, opts, frac)?;
            record.mu_max = mu_max;
        }
        let mu = solve_mu_field(&res.mesh, opts.mu_min_for(mu_max), mu_max)?;
        let gradient = solve_deformation(&res.mesh, &eval.design.values, &mu, opts.lambda)?;
        let candidate = previous.take().map(|(g_old, s)| {
            let y: Vec<f64> = gradient.iter().zip(&g_old).map(|(a, b)| a - b).collect();
            (s, y)
        });
        let (mut dir, mut kind) = lbfgs.direction(candidate, &gradient);
        if kind == DirectionKind::QuasiNewton && dot(&eval.design.values, &dir) <= 0.0 {
            dir = gradient.clone();
            kind = DirectionKind::Gradient;
        }

        let j_old = eval.objective.total();
        let mut step = MeshStep { mesh: &res.mesh, dir: &dir, cfg, data };
        let ls = line_search(&mut step, j_old, &opts.line_search, mu_max);
        mu_max = ls.mu_max;
        record.alpha = ls.alpha;
        record.ls_rounds = ls.rounds;
        record.mu_max = mu_max;

        if !ls.underflow {
            res.mesh = res.mesh.deform(&dir, ls.alpha)?;
            res.iterates.push(res.mesh.interface_points());
            let s: Vec<f64> = dir.iter().map(|d| -ls.alpha * d).collect();
            previous = Some((gradient, s));
        }
        let mut stop = None;
        if ls.restart {
            if ls.underflow && kind == DirectionKind::Gradient && lbfgs.is_empty() {
                stop = Some(StopReason::Stalled);
            } else {
                restarts += 1;
                lbfgs.clear();
                previous = None;
                if restarts > opts.max_restarts {
                    stop = Some(StopReason::RestartBudget);
                }
            }
        }
        record.restarts = restarts;
        res.history.records.push(record.clone());
        observer(&record, &res.mesh);
        if let Some(reason) = stop {
            res.stop = reason;
            return Ok(());
        }
    }
    res.stop = StopReason::MaxIterations;
    Ok(())
}

/// `mu_max` for which the deformation has maximum nodal length `frac * h_max`.
/// Exact when `mu_min` is zero or follows `mu_max`, since the deformation then
/// scales like `1 / mu_max`.
fn calibrated_mu_max(mesh: &Mesh, design: &[f64], opts: &OptimizerOptions, frac: f64) -> Result<f64, OptimizeError> {
    let probe = opts.mu_max;
    let mu = solve_mu_field(mesh, opts.mu_min_for(probe), probe)?;
    let u = solve_deformation(mesh, design, &mu, opts.lambda)?;
    let largest = u.chunks_exact(2).map(|d| d[0].hypot(d[1])).fold(0.0, f64::max);
    if largest == 0.0 {
        return Ok(probe);
    }
    Ok(probe * largest / (frac * mesh.h_max()))
}

/// Second stage on a finer structured mesh rebuilt around the coarse result.
#[derive(Debug, Clone, Copy)]
pub struct WarmStart {
    pub n_fine: usize,
    pub max_iter: usize,
}

/// Coarse stage followed by an optional warm-started fine stage. Iteration
/// numbers continue across stages; `mu_max` carries over, the L-BFGS memory
/// and restart budget do not.
pub fn run(
    cfg: &ProblemConfig,
    coarse: Mesh,
    warm: Option<WarmStart>,
    data: &DataField,
    opts: &OptimizerOptions,
    mut observer: impl FnMut(&IterationRecord, &Mesh),
) -> Result<RunResult, RunFailure> {
    let first = optimize(coarse, cfg, data, opts, 1, &mut observer)?;
    let Some(warm) = warm else {
        return Ok(first);
    };
    let fine = match remesh_around_interface(&first.mesh, warm.n_fine, cfg.kernel.delta()) {
        Ok(m) => m,
        Err(e) => return Err(RunFailure { error: e.into(), partial: Box::new(first) }),
    };
    let mu_max = first.history.records.last().map_or(opts.mu_max, |r| r.mu_max);
    let fine_opts = OptimizerOptions { max_iter: warm.max_iter, mu_max, calibrate_step: None, ..opts.clone() };
    let next_iter = first.history.records.last().map_or(1, |r| r.iter + 1);
    let merge = |mut second: RunResult, first: RunResult| {
        let mut history = first.history;
        history.records.append(&mut second.history.records);
        let mut iterates = first.iterates;
        iterates.append(&mut second.iterates);
        RunResult { mesh: second.mesh, history, stop: second.stop, iterates }
    };
    match optimize(fine, cfg, data, &fine_opts, next_iter, &mut observer) {
        Ok(second) => Ok(merge(second, first)),
        Err(fail) => Err(RunFailure { error: fail.error, partial: Box::new(merge(*fail.partial, first)) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::mesh::InterfacePolyline;
    use crate::system::generate_data;
    use crate::transfer::mesh_around_polyline;

    fn local_cfg() -> ProblemConfig {
        ProblemConfig { eps: 1.0, f1: 10.0, kernel: KernelSpec::zero(0.1), ..ProblemConfig::two_phase() }
    }

    fn circle(c: f64, r: f64) -> InterfacePolyline {
        InterfacePolyline::circle(Point::new(c, c), r, 40).unwrap()
    }

    fn data_for(cfg: &ProblemConfig, target: &InterfacePolyline, n: usize) -> DataField {
        let (m, u) = generate_data(cfg, &target.resample(1.25 / n as f64).unwrap(), n).unwrap();
        DataField::new(m, u).unwrap()
    }

    #[test]
    fn history_round_trips() {
        let h = History {
            records: vec![
                IterationRecord {
                    iter: 1,
                    objective: Objective { tracking: 0.1 + 0.2, perimeter: 1e-300 },
                    grad_norm: 3.5,
                    alpha: 0.25,
                    ls_rounds: 2,
                    mu_max: 19.2,
                    restarts: 0,
                },
                IterationRecord {
                    iter: 2,
                    objective: Objective { tracking: 7.0, perimeter: 0.0 },
                    grad_norm: f64::MIN_POSITIVE,
                    alpha: 1.0,
                    ls_rounds: 0,
                    mu_max: 16.0,
                    restarts: 1,
                },
            ],
        };
        assert_eq!(History::parse_csv(&h.to_csv()).unwrap(), h);
        assert!(History::parse_csv("iter,J\n").is_err());
        let bad = format!("{HISTORY_HEADER}\n1,2,3\n");
        assert!(History::parse_csv(&bad).unwrap_err().starts_with("line 2"));
    }

    #[test]
    fn zero_iterations_return_the_initial_mesh() {
        let cfg = local_cfg();
        let data = data_for(&cfg, &circle(0.5, 0.25), 12);
        let mesh = mesh_around_polyline(&circle(0.45, 0.2), 10, 0.1).unwrap();
        let opts = OptimizerOptions { max_iter: 0, ..Default::default() };
        let res = optimize(mesh.clone(), &cfg, &data, &opts, 1, |_, _| {}).unwrap();
        assert!(res.history.is_empty());
        assert_eq!(res.mesh.vertices(), mesh.vertices());
        assert_eq!(res.stop, StopReason::MaxIterations);
    }

    #[test]
    fn matching_data_converges_immediately() {
        let cfg = local_cfg();
        let mesh = mesh_around_polyline(&circle(0.5, 0.25), 10, 0.1).unwrap();
        let u = crate::system::solve_state(&mesh, &cfg).unwrap();
        let data = DataField::new(mesh.clone(), u).unwrap();
        let res = optimize(mesh, &cfg, &data, &OptimizerOptions::default(), 1, |_, _| {}).unwrap();
        assert_eq!(res.stop, StopReason::Converged);
        assert_eq!(res.history.len(), 1);
        assert_eq!(res.history.records[0].iter, 1);
    }

    #[test]
    fn local_problem_descends_monotonically() {
        let cfg = local_cfg();
        let data = data_for(&cfg, &circle(0.5, 0.25), 16);
        let mesh = mesh_around_polyline(&circle(0.45, 0.2), 12, 0.1).unwrap();
        let opts = OptimizerOptions { max_iter: 6, tol: 0.0, mu_max: 1.0, ..Default::default() };
        let mut seen = 0;
        let res = optimize(mesh, &cfg, &data, &opts, 1, |_, _| seen += 1).unwrap();
        assert_eq!(seen, res.history.len());
        let c = opts.line_search.c;
        let recs = &res.history.records;
        assert!(recs.len() >= 2);
        for w in recs.windows(2) {
            assert!(w[1].objective.total() < c * w[0].objective.total());
        }
        assert_eq!(res.iterates.len(), recs.iter().filter(|r| r.alpha > 0.0).count() + 1);
    }

    #[test]
    fn warm_start_continues_numbering() {
        let cfg = local_cfg();
        let data = data_for(&cfg, &circle(0.5, 0.25), 16);
        let mesh = mesh_around_polyline(&circle(0.45, 0.2), 8, 0.1).unwrap();
        let opts = OptimizerOptions { max_iter: 2, tol: 0.0, mu_max: 1.0, ..Default::default() };
        let warm = WarmStart { n_fine: 12, max_iter: 2 };
        let res = run(&cfg, mesh, Some(warm), &data, &opts, |_, _| {}).unwrap();
        let iters: Vec<usize> = res.history.records.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![1, 2, 3, 4]);
        assert!(res.mesh.n_vertices() > 200);
    }

    #[test]
    fn invalid_options_fail_with_partial_result() {
        let cfg = local_cfg();
        let data = data_for(&cfg, &circle(0.5, 0.25), 12);
        let mesh = mesh_around_polyline(&circle(0.45, 0.2), 8, 0.1).unwrap();
        let opts = OptimizerOptions { mu_max: -1.0, ..Default::default() };
        let fail = optimize(mesh, &cfg, &data, &opts, 1, |_, _| {}).unwrap_err();
        assert!(matches!(fail.error, OptimizeError::Options(_)));
        assert!(fail.partial.history.is_empty());
    }
}
