//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Unknown and repeated keys are errors. [`KEYS`] lists every key with its
//! default.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::geometry::Point;
use crate::gradcheck::{CheckOptions, DEFAULT_AMPLITUDE, DEFAULT_JITTER, DEFAULT_STEPS};
use crate::kernel::{c_delta, Constant, KernelSpec, Norm, Parabolic};
use crate::mesh::{InterfacePolyline, Mesh, MeshError};
use crate::nonlocal::{AssemblyOptions, Truncation};
use crate::optimizer::{LineSearchParams, OptimizerOptions};
use crate::quadrature::QuadratureRule;
use crate::shapegrad::DerivativeMode;
use crate::system::{generate_data, ProblemConfig, SystemError};
use crate::transfer::{mesh_around_polyline, RESAMPLE_SPACING};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected 'key = value'")]
    Syntax { line: usize },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key '{key}' repeats line {first}")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("missing required key '{0}'")]
    Missing(&'static str),
    #[error("line {line}: invalid value for '{key}': {message}")]
    Invalid { line: usize, key: &'static str, message: String },
    #[error("{0}")]
    Inconsistent(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

/// Every accepted key, its default (empty when required) and a short
/// description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("kernel.delta", "", "interaction horizon"),
    ("kernel.preset", "two_phase", "two_phase | custom"),
    ("kernel.norm", "inf", "truncation norm: inf | euclidean (custom preset)"),
    ("kernel.phi1_scale", "c_delta/1000", "constant inner kernel value (custom preset)"),
    ("kernel.phi2_scale", "100*c_delta", "peak of the parabolic outer kernel (custom preset)"),
    ("quad.outer_order", "5", "degree of the outer triangle rule: 1 | 2 | 5"),
    ("quad.inner_order", "5", "degree of the inner triangle rule: 1 | 2 | 5"),
    ("assembly.parallel", "on", "on | off"),
    ("assembly.truncation", "auto", "auto | pointwise | clipped"),
    ("problem.eps", "", "weight of the local Laplacian"),
    ("problem.f1", "", "forcing inside the interface"),
    ("problem.f2", "", "forcing outside the interface"),
    ("problem.nu", "0", "perimeter weight"),
    ("target.center", "0.5, 0.5", "center of the target circle"),
    ("target.radius", "0.25", "radius of the target circle"),
    ("target.n_points", "64", "points on the target circle"),
    ("initial.center", "0.45, 0.45", "center of the initial circle"),
    ("initial.radius", "0.2", "radius of the initial circle"),
    ("initial.n_points", "64", "points on the initial circle"),
    ("mesh.n", "", "cells per unit length of the optimization mesh"),
    ("mesh.fine_n", "none", "resolution of the warm-started second stage"),
    ("data.n", "mesh.n", "cells per unit length of the data mesh"),
    ("lame.mu_min", "0", "Lamé parameter on the outer boundary"),
    ("lame.mu_min_ratio", "0", "when positive, mu_min = ratio * mu_max throughout"),
    ("lame.mu_max", "20", "initial Lamé parameter on the interface"),
    ("lame.lambda", "0", "first Lamé parameter"),
    ("lame.calibrate_step", "off", "off | fraction of h_max moved by the first full step"),
    ("optimizer.tol", "1e-6", "stop when the design vector norm is at most tol"),
    ("optimizer.max_iter", "100", "iterations of the first stage"),
    ("optimizer.fine_max_iter", "optimizer.max_iter", "iterations of the second stage"),
    ("optimizer.memory", "15", "stored L-BFGS pairs"),
    ("optimizer.max_restarts", "3", "restarts before giving up"),
    ("linesearch.alpha0", "1", "initial step"),
    ("linesearch.tau", "0.5", "step reduction factor"),
    ("linesearch.c", "0.99", "acceptance requires J_new < c * J_old"),
    ("linesearch.n_up", "1", "rounds at or above which mu_max grows"),
    ("linesearch.n_down", "4", "rounds at or below which mu_max shrinks"),
    ("linesearch.n_restart", "8", "rounds that trigger a restart"),
    ("linesearch.c_up", "1.2", "growth factor of mu_max"),
    ("linesearch.c_down", "0.8", "shrink factor of mu_max"),
    ("linesearch.min_alpha", "1e-12", "smallest step before the search fails"),
    ("gradient.mode", "consistent", "consistent | literal"),
    ("gradient.jitter", "0.05", "interior jitter of the check mesh, in units of h_max"),
    ("gradient.amplitude", "0.05", "maximum nodal entry of the check directions"),
    ("gradient.directions", "5", "number of random check directions"),
    ("gradient.steps", "1e-2, 5e-3, ..., 1e-4", "difference quotient steps"),
    ("rng.seed", "0", "seed for jitter and check directions"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelPreset {
    TwoPhase,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSettings {
    pub delta: f64,
    pub preset: KernelPreset,
    pub norm: Norm,
    pub phi1_scale: f64,
    pub phi2_scale: f64,
}

impl KernelSettings {
    pub fn build(&self) -> KernelSpec {
        match self.preset {
            KernelPreset::TwoPhase => KernelSpec::two_phase(self.delta),
            KernelPreset::Custom => KernelSpec::new(
                Arc::new(Constant(self.phi1_scale)),
                Arc::new(Parabolic { scale: self.phi2_scale, delta: self.delta, norm: self.norm }),
                self.delta,
                self.norm,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circle {
    pub center: Point,
    pub radius: f64,
    pub n_points: usize,
}

impl Circle {
    pub fn polyline(&self) -> Result<InterfacePolyline, MeshError> {
        InterfacePolyline::circle(self.center, self.radius, self.n_points)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSettings {
    pub jitter: f64,
    pub amplitude: f64,
    pub directions: usize,
    pub steps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub kernel: KernelSettings,
    pub outer_order: usize,
    pub inner_order: usize,
    pub parallel: bool,
    pub truncation: Truncation,
    pub eps: f64,
    pub f1: f64,
    pub f2: f64,
    pub nu: f64,
    pub target: Circle,
    pub initial: Circle,
    pub mesh_n: usize,
    pub fine_n: Option<usize>,
    pub data_n: usize,
    pub optimizer: OptimizerOptions,
    pub fine_max_iter: usize,
    pub gradient: GradientSettings,
    pub seed: u64,
}

struct Entries {
    map: BTreeMap<&'static str, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &'static str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn parse<T>(&self, key: &'static str, f: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => f(v).map(Some).map_err(|message| ConfigError::Invalid { line, key, message }),
        }
    }

    fn get<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.parse(key, |v| v.parse::<T>().map_err(|e| e.to_string()))
    }

    fn or<T: FromStr>(&self, key: &'static str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, key: &'static str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or(ConfigError::Missing(key))
    }

    fn point(&self, key: &'static str, default: Point) -> Result<Point, ConfigError> {
        Ok(self.parse(key, parse_point)?.unwrap_or(default))
    }

    fn switch(&self, key: &'static str, default: bool) -> Result<bool, ConfigError> {
        let on_off = |v: &str| match v {
            "on" | "true" | "yes" => Ok(true),
            "off" | "false" | "no" => Ok(false),
            other => Err(format!("expected on or off, found '{other}'")),
        };
        Ok(self.parse(key, on_off)?.unwrap_or(default))
    }

    fn invalid(&self, key: &'static str, message: impl Into<String>) -> ConfigError {
        let line = self.raw(key).map_or(0, |(l, _)| l);
        ConfigError::Invalid { line, key, message: message.into() }
    }
}

fn parse_point(v: &str) -> Result<Point, String> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [x, y] => Ok(Point::new(
            x.parse().map_err(|e| format!("x: {e}"))?,
            y.parse().map_err(|e| format!("y: {e}"))?,
        )),
        _ => Err("expected 'x, y'".into()),
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(|s| s.trim().parse::<f64>().map_err(|e| format!("'{}': {e}", s.trim()))).collect()
}

impl Config {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            let Some(&(known, _, _)) = KEYS.iter().find(|k| k.0 == key) else {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            };
            if let Some((first, _)) = map.insert(known, (line, value.to_string())) {
                return Err(ConfigError::Duplicate { line, key: key.to_string(), first });
            }
        }
        Self::from_entries(&Entries { map })
    }

    fn from_entries(e: &Entries) -> Result<Self, ConfigError> {
        let delta: f64 = e.required("kernel.delta")?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(e.invalid("kernel.delta", "must be positive"));
        }
        let preset = e
            .parse("kernel.preset", |v| match v {
                "two_phase" => Ok(KernelPreset::TwoPhase),
                "custom" => Ok(KernelPreset::Custom),
                other => Err(format!("expected two_phase or custom, found '{other}'")),
            })?
            .unwrap_or(KernelPreset::TwoPhase);
        let norm: Norm = e.or("kernel.norm", Norm::Inf)?;
        let c = c_delta(delta);
        let kernel = KernelSettings {
            delta,
            preset,
            norm,
            phi1_scale: e.or("kernel.phi1_scale", c / 1000.0)?,
            phi2_scale: e.or("kernel.phi2_scale", 100.0 * c)?,
        };
        if preset == KernelPreset::TwoPhase {
            for key in ["kernel.phi1_scale", "kernel.phi2_scale"] {
                if e.raw(key).is_some() {
                    return Err(ConfigError::Inconsistent(format!("{key} requires kernel.preset = custom")));
                }
            }
            if norm != Norm::Inf {
                return Err(e.invalid("kernel.norm", "the two_phase preset truncates by the infinity norm"));
            }
        }
        if kernel.phi1_scale < 0.0 || kernel.phi2_scale < 0.0 {
            return Err(ConfigError::Inconsistent("kernel scales must be nonnegative".into()));
        }

        let order = |key: &'static str| -> Result<usize, ConfigError> {
            let d: usize = e.or(key, 5)?;
            QuadratureRule::with_degree(d).map_err(|err| e.invalid(key, err.to_string()))?;
            Ok(d)
        };
        let mesh_n: usize = e.required("mesh.n")?;
        let min_n = |key: &'static str, n: usize| {
            if n < 4 {
                Err(e.invalid(key, "must be at least 4"))
            } else {
                Ok(n)
            }
        };
        min_n("mesh.n", mesh_n)?;
        let fine_n = e.get::<usize>("mesh.fine_n")?;
        if let Some(n) = fine_n {
            min_n("mesh.fine_n", n)?;
        }
        let data_n = min_n("data.n", e.or("data.n", mesh_n)?)?;

        let circle = |keys: [&'static str; 3], center: Point, radius: f64| -> Result<Circle, ConfigError> {
            let c = Circle { center: e.point(keys[0], center)?, radius: e.or(keys[1], radius)?, n_points: e.or(keys[2], 64)? };
            if !(c.radius > 0.0) || c.n_points < 3 {
                return Err(ConfigError::Inconsistent(format!("{}: need radius > 0 and at least 3 points", keys[1])));
            }
            Ok(c)
        };

        let d = LineSearchParams::default();
        let line_search = LineSearchParams {
            alpha0: e.or("linesearch.alpha0", d.alpha0)?,
            tau: e.or("linesearch.tau", d.tau)?,
            c: e.or("linesearch.c", d.c)?,
            n_up: e.or("linesearch.n_up", d.n_up)?,
            n_down: e.or("linesearch.n_down", d.n_down)?,
            n_restart: e.or("linesearch.n_restart", d.n_restart)?,
            c_up: e.or("linesearch.c_up", d.c_up)?,
            c_down: e.or("linesearch.c_down", d.c_down)?,
            min_alpha: e.or("linesearch.min_alpha", d.min_alpha)?,
        };
        line_search.validate().map_err(|err| ConfigError::Inconsistent(err.to_string()))?;

        let o = OptimizerOptions::default();
        let calibrate_step = e
            .parse("lame.calibrate_step", |v| match v {
                "off" | "none" => Ok(None),
                v => v.parse::<f64>().map(Some).map_err(|err| err.to_string()),
            })?
            .flatten();
        let max_iter: usize = e.or("optimizer.max_iter", o.max_iter)?;
        let optimizer = OptimizerOptions {
            tol: e.or("optimizer.tol", o.tol)?,
            max_iter,
            memory: e.or("optimizer.memory", o.memory)?,
            mu_min: e.or("lame.mu_min", o.mu_min)?,
            mu_min_ratio: e.or("lame.mu_min_ratio", o.mu_min_ratio)?,
            mu_max: e.or("lame.mu_max", o.mu_max)?,
            lambda: e.or("lame.lambda", o.lambda)?,
            max_restarts: e.or("optimizer.max_restarts", o.max_restarts)?,
            line_search,
            mode: e.or("gradient.mode", DerivativeMode::Consistent)?,
            calibrate_step,
        };
        optimizer.validate().map_err(|err| ConfigError::Inconsistent(err.to_string()))?;

        let gradient = GradientSettings {
            jitter: e.or("gradient.jitter", DEFAULT_JITTER)?,
            amplitude: e.or("gradient.amplitude", DEFAULT_AMPLITUDE)?,
            directions: e.or("gradient.directions", 5)?,
            steps: e.parse("gradient.steps", parse_list)?.unwrap_or_else(|| DEFAULT_STEPS.to_vec()),
        };
        if !(gradient.jitter >= 0.0 && gradient.jitter < 0.5) {
            return Err(e.invalid("gradient.jitter", "must lie in [0, 0.5)"));
        }
        if !(gradient.amplitude > 0.0) {
            return Err(e.invalid("gradient.amplitude", "must be positive"));
        }
        if gradient.steps.is_empty() || gradient.steps.iter().any(|&t| !(t > 0.0)) {
            return Err(e.invalid("gradient.steps", "steps must be positive"));
        }

        let cfg = Config {
            kernel,
            outer_order: order("quad.outer_order")?,
            inner_order: order("quad.inner_order")?,
            parallel: e.switch("assembly.parallel", true)?,
            truncation: e.or("assembly.truncation", Truncation::Auto)?,
            eps: e.required("problem.eps")?,
            f1: e.required("problem.f1")?,
            f2: e.required("problem.f2")?,
            nu: e.or("problem.nu", 0.0)?,
            target: circle(["target.center", "target.radius", "target.n_points"], Point::new(0.5, 0.5), 0.25)?,
            initial: circle(["initial.center", "initial.radius", "initial.n_points"], Point::new(0.45, 0.45), 0.2)?,
            mesh_n,
            fine_n,
            data_n,
            fine_max_iter: e.or("optimizer.fine_max_iter", max_iter)?,
            optimizer,
            gradient,
            seed: e.or("rng.seed", 0)?,
        };
        cfg.problem().validate().map_err(|err| ConfigError::Inconsistent(err.to_string()))?;
        Ok(cfg)
    }

    pub fn problem(&self) -> ProblemConfig {
        ProblemConfig {
            eps: self.eps,
            f1: self.f1,
            f2: self.f2,
            nu: self.nu,
            kernel: self.kernel.build(),
            assembly: AssemblyOptions {
                outer: QuadratureRule::with_degree(self.outer_order).expect("validated order"),
                inner: QuadratureRule::with_degree(self.inner_order).expect("validated order"),
                truncation: self.truncation,
                parallel: self.parallel,
            },
        }
    }

    /// Mesh of resolution `data.n` around the target circle and the state on it.
    pub fn generate_data(&self) -> Result<(Mesh, Vec<f64>), SystemError> {
        let target = self.target.polyline()?.resample(RESAMPLE_SPACING / self.data_n as f64)?;
        generate_data(&self.problem(), &target, self.data_n)
    }

    /// Mesh of resolution `mesh.n` around the initial circle.
    pub fn initial_mesh(&self) -> Result<Mesh, MeshError> {
        mesh_around_polyline(&self.initial.polyline()?, self.mesh_n, self.kernel.delta)
    }

    pub fn check_options(&self) -> CheckOptions {
        CheckOptions {
            steps: self.gradient.steps.clone(),
            directions: self.gradient.directions,
            amplitude: self.gradient.amplitude,
            seed: self.seed,
        }
    }

    /// Every key with its resolved value; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let k = &self.kernel;
        let o = &self.optimizer;
        let l = &o.line_search;
        let g = &self.gradient;
        let point = |p: &Point| format!("{}, {}", p.x, p.y);
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
        let mut rows: Vec<(&str, String)> = vec![("kernel.delta", k.delta.to_string())];
        match k.preset {
            KernelPreset::TwoPhase => rows.push(("kernel.preset", "two_phase".into())),
            KernelPreset::Custom => {
                rows.push(("kernel.preset", "custom".into()));
                rows.push(("kernel.norm", norm_name(k.norm).into()));
                rows.push(("kernel.phi1_scale", k.phi1_scale.to_string()));
                rows.push(("kernel.phi2_scale", k.phi2_scale.to_string()));
            }
        }
        rows.extend([
            ("quad.outer_order", self.outer_order.to_string()),
            ("quad.inner_order", self.inner_order.to_string()),
            ("assembly.parallel", if self.parallel { "on" } else { "off" }.into()),
            ("assembly.truncation", truncation_name(self.truncation).into()),
            ("problem.eps", self.eps.to_string()),
            ("problem.f1", self.f1.to_string()),
            ("problem.f2", self.f2.to_string()),
            ("problem.nu", self.nu.to_string()),
            ("target.center", point(&self.target.center)),
            ("target.radius", self.target.radius.to_string()),
            ("target.n_points", self.target.n_points.to_string()),
            ("initial.center", point(&self.initial.center)),
            ("initial.radius", self.initial.radius.to_string()),
            ("initial.n_points", self.initial.n_points.to_string()),
            ("mesh.n", self.mesh_n.to_string()),
        ]);
        if let Some(n) = self.fine_n {
            rows.push(("mesh.fine_n", n.to_string()));
        }
        rows.extend([
            ("data.n", self.data_n.to_string()),
            ("lame.mu_min", o.mu_min.to_string()),
            ("lame.mu_min_ratio", o.mu_min_ratio.to_string()),
            ("lame.mu_max", o.mu_max.to_string()),
            ("lame.lambda", o.lambda.to_string()),
            ("lame.calibrate_step", o.calibrate_step.map_or("off".into(), |f| f.to_string())),
            ("optimizer.tol", o.tol.to_string()),
            ("optimizer.max_iter", o.max_iter.to_string()),
            ("optimizer.fine_max_iter", self.fine_max_iter.to_string()),
            ("optimizer.memory", o.memory.to_string()),
            ("optimizer.max_restarts", o.max_restarts.to_string()),
            ("linesearch.alpha0", l.alpha0.to_string()),
            ("linesearch.tau", l.tau.to_string()),
            ("linesearch.c", l.c.to_string()),
            ("linesearch.n_up", l.n_up.to_string()),
            ("linesearch.n_down", l.n_down.to_string()),
            ("linesearch.n_restart", l.n_restart.to_string()),
            ("linesearch.c_up", l.c_up.to_string()),
            ("linesearch.c_down", l.c_down.to_string()),
            ("linesearch.min_alpha", l.min_alpha.to_string()),
            ("gradient.mode", mode_name(o.mode).into()),
            ("gradient.jitter", g.jitter.to_string()),
            ("gradient.amplitude", g.amplitude.to_string()),
            ("gradient.directions", g.directions.to_string()),
            ("gradient.steps", list(&g.steps)),
            ("rng.seed", self.seed.to_string()),
        ]);
        let mut out = String::new();
        for (key, value) in rows {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

fn norm_name(n: Norm) -> &'static str {
    match n {
        Norm::Inf => "inf",
        Norm::Euclidean => "euclidean",
    }
}

fn truncation_name(t: Truncation) -> &'static str {
    match t {
        Truncation::Pointwise => "pointwise",
        Truncation::Clipped => "clipped",
        Truncation::Auto => "auto",
    }
}

fn mode_name(m: DerivativeMode) -> &'static str {
    match m {
        DerivativeMode::Consistent => "consistent",
        DerivativeMode::Literal => "literal",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "kernel.delta = 0.1\nproblem.eps = 1e-4\nproblem.f1 = 100\nproblem.f2 = 1\nmesh.n = 20\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = Config::parse(MINIMAL).unwrap();
        assert_eq!(cfg.kernel.preset, KernelPreset::TwoPhase);
        assert_eq!(cfg.data_n, 20);
        assert_eq!(cfg.fine_n, None);
        assert_eq!(cfg.optimizer, OptimizerOptions::default());
        assert_eq!(cfg.target.radius, 0.25);
        let k = cfg.problem().kernel;
        assert_eq!(k.delta(), 0.1);
        assert_eq!(k.norm(), Norm::Inf);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = format!("# header\n\n{MINIMAL}rng.seed = 7   # trailing\n");
        assert_eq!(Config::parse(&text).unwrap().seed, 7);
    }

    #[test]
    fn missing_delta_names_the_key() {
        let text = MINIMAL.replace("kernel.delta = 0.1\n", "");
        let err = Config::parse(&text).unwrap_err();
        assert!(matches!(err, ConfigError::Missing("kernel.delta")));
        assert!(err.to_string().contains("kernel.delta"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let unknown = format!("{MINIMAL}mesh.m = 3\n");
        assert!(matches!(Config::parse(&unknown), Err(ConfigError::UnknownKey { line: 6, .. })));
        let dup = format!("{MINIMAL}mesh.n = 30\n");
        assert!(matches!(Config::parse(&dup), Err(ConfigError::Duplicate { line: 6, first: 5, .. })));
        let syntax = format!("{MINIMAL}mesh.fine_n 30\n");
        assert!(matches!(Config::parse(&syntax), Err(ConfigError::Syntax { line: 6 })));
        let bad = MINIMAL.replace("problem.f1 = 100", "problem.f1 = lots");
        let err = Config::parse(&bad).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { line: 3, key: "problem.f1", .. }), "{err}");
        let order = format!("{MINIMAL}quad.inner_order = 3\n");
        assert!(matches!(Config::parse(&order), Err(ConfigError::Invalid { line: 6, .. })));
    }

    #[test]
    fn preset_consistency() {
        let scales = format!("{MINIMAL}kernel.phi1_scale = 2\n");
        assert!(matches!(Config::parse(&scales), Err(ConfigError::Inconsistent(_))));
        let norm = format!("{MINIMAL}kernel.norm = euclidean\n");
        assert!(Config::parse(&norm).is_err());
        let custom = format!("{MINIMAL}kernel.preset = custom\nkernel.norm = euclidean\nkernel.phi1_scale = 2\n");
        let cfg = Config::parse(&custom).unwrap();
        assert_eq!(cfg.kernel.phi1_scale, 2.0);
        assert!((cfg.kernel.phi2_scale - 750_000.0).abs() < 1e-6);
        assert_eq!(cfg.problem().kernel.norm(), Norm::Euclidean);
    }

    #[test]
    fn invalid_numbers_are_rejected() {
        for extra in [
            "linesearch.tau = 1.5",
            "lame.mu_max = -1",
            "lame.calibrate_step = 0",
            "gradient.steps = 1e-2, -1e-3",
            "mesh.fine_n = 2",
            "problem.eps = 0",
        ] {
            let text = if extra.starts_with("problem.eps") {
                MINIMAL.replace("problem.eps = 1e-4", extra)
            } else {
                format!("{MINIMAL}{extra}\n")
            };
            assert!(Config::parse(&text).is_err(), "{extra}");
        }
    }

    #[test]
    fn text_round_trip() {
        let text = format!(
            "{MINIMAL}mesh.fine_n = 40\nkernel.preset = custom\nkernel.phi2_scale = 0.1\n\
             lame.calibrate_step = 0.5\nlame.mu_min_ratio = 0.3\ngradient.mode = literal\n\
             gradient.steps = 0.1, 0.01\nassembly.truncation = pointwise\nassembly.parallel = off\n\
             target.center = 0.4, 0.6\ninitial.radius = 0.15\n"
        );
        let cfg = Config::parse(&text).unwrap();
        assert_eq!(Config::parse(&cfg.to_text()).unwrap(), cfg);
        let plain = Config::parse(MINIMAL).unwrap();
        assert_eq!(Config::parse(&plain.to_text()).unwrap(), plain);
    }

    #[test]
    fn every_key_is_documented_once() {
        let mut keys: Vec<&str> = KEYS.iter().map(|k| k.0).collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(keys.len(), KEYS.len());
    }
}
