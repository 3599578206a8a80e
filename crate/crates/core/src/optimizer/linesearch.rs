//! Backtracking line search gated by mesh quality, with adaption of the
//! stiffness bound `mu_max` and a restart signal.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("invalid line search parameter: {0}")]
pub struct ParamError(pub &'static str);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchParams {
    pub alpha0: f64,
    pub tau: f64,
    /// Acceptance requires `J_new < c * J_old`.
    pub c: f64,
    pub n_up: usize,
    pub n_down: usize,
    pub n_restart: usize,
    pub c_up: f64,
    pub c_down: f64,
    /// Steps below this count as a failed search.
    pub min_alpha: f64,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            tau: 0.5,
            c: 0.99,
            n_up: 1,
            n_down: 4,
            n_restart: 8,
            c_up: 1.2,
            c_down: 0.8,
            min_alpha: 1e-12,
        }
    }
}

impl LineSearchParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        if !(self.alpha0 > 0.0) {
            return Err(ParamError("alpha0 must be positive"));
        }
        if !open(self.tau) {
            return Err(ParamError("tau must lie in (0, 1)"));
        }
        if !open(self.c) {
            return Err(ParamError("c must lie in (0, 1)"));
        }
        if !(self.c_up > 1.0) {
            return Err(ParamError("c_up must exceed 1"));
        }
        if !open(self.c_down) {
            return Err(ParamError("c_down must lie in (0, 1)"));
        }
        if !(self.min_alpha > 0.0) {
            return Err(ParamError("min_alpha must be positive"));
        }
        Ok(())
    }
}

/// Geometric validity of the trial mesh `x - alpha * dir`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepCheck {
    pub self_intersects: bool,
    pub out_of_omega: bool,
    /// Some triangle is inverted or degenerate.
    pub inverted: bool,
}

impl StepCheck {
    pub fn ok(&self) -> bool {
        !(self.self_intersects || self.out_of_omega || self.inverted)
    }
}

/// Trial-step oracle used by [`line_search`].
pub trait Evaluator {
    type Error;

    fn check(&mut self, alpha: f64) -> StepCheck;

    /// Reduced objective at the trial mesh.
    fn objective(&mut self, alpha: f64) -> Result<f64, Self::Error>;
}

#[derive(Debug)]
pub struct LineSearchOutcome<E> {
    /// Accepted step, 0 after a failed search.
    pub alpha: f64,
    /// Number of downscalings over both phases.
    pub rounds: usize,
    /// Objective at the accepted step.
    pub objective: Option<f64>,
    pub mu_max: f64,
    pub restart: bool,
    /// The step fell below `min_alpha`.
    pub underflow: bool,
    /// Last error raised by a trial evaluation (treated as a rejection).
    pub last_error: Option<E>,
}

/// Phase 1 shrinks `alpha` until the trial mesh is valid, phase 2 until
/// `J < c * J_old`; afterwards `mu_max` is adapted by the two independent
/// rules `rounds >= n_up` and `rounds <= n_down`, and a restart is requested
/// when `rounds >= n_restart`.
pub fn line_search<V: Evaluator>(
    eval: &mut V,
    j_old: f64,
    params: &LineSearchParams,
    mu_max: f64,
) -> LineSearchOutcome<V::Error> {
    let mut alpha = params.alpha0;
    let mut rounds = 0;
    let mut last_error = None;
    let mut objective = None;
    let mut underflow = false;

    'search: {
        while !eval.check(alpha).ok() {
            alpha *= params.tau;
            rounds += 1;
            if alpha < params.min_alpha {
                underflow = true;
                break 'search;
            }
        }
        loop {
            match eval.objective(alpha) {
                Ok(j) if j < params.c * j_old => {
                    objective = Some(j);
                    break 'search;
                }
                Ok(_) => {}
                Err(e) => last_error = Some(e),
            }
            alpha *= params.tau;
            rounds += 1;
            if alpha < params.min_alpha {
                underflow = true;
                break 'search;
            }
        }
    }

    let mut mu = mu_max;
    if rounds >= params.n_up {
        mu *= params.c_up;
    }
    if rounds <= params.n_down {
        mu *= params.c_down;
    }
    LineSearchOutcome {
        alpha: if underflow { 0.0 } else { alpha },
        rounds,
        objective,
        mu_max: mu,
        restart: underflow || rounds >= params.n_restart,
        underflow,
        last_error,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scripted evaluator: geometry fails above `valid_below`, the objective
    /// is a closure of alpha.
    struct Script<F: Fn(f64) -> Result<f64, &'static str>> {
        valid_below: f64,
        flag: fn(&mut StepCheck),
        j: F,
        calls: Vec<(char, f64)>,
    }

    impl<F: Fn(f64) -> Result<f64, &'static str>> Evaluator for Script<F> {
        type Error = &'static str;

        fn check(&mut self, alpha: f64) -> StepCheck {
            self.calls.push(('g', alpha));
            let mut c = StepCheck::default();
            if alpha >= self.valid_below {
                (self.flag)(&mut c);
            }
            c
        }

        fn objective(&mut self, alpha: f64) -> Result<f64, &'static str> {
            self.calls.push(('j', alpha));
            (self.j)(alpha)
        }
    }

    fn script<F: Fn(f64) -> Result<f64, &'static str>>(valid_below: f64, flag: fn(&mut StepCheck), j: F) -> Script<F> {
        Script { valid_below, flag, j, calls: Vec::new() }
    }

    fn bowtie(c: &mut StepCheck) {
        c.self_intersects = true;
    }

    fn outside(c: &mut StepCheck) {
        c.out_of_omega = true;
    }

    #[test]
    fn immediate_acceptance_shrinks_mu() {
        let mut s = script(f64::INFINITY, bowtie, |a| Ok(1.0 - 0.5 * a));
        let out = line_search(&mut s, 1.0, &LineSearchParams::default(), 20.0);
        assert_eq!(out.alpha, 1.0);
        assert_eq!(out.rounds, 0);
        assert_eq!(out.objective, Some(0.5));
        assert!((out.mu_max - 16.0).abs() < 1e-12);
        assert!(!out.restart);
        assert_eq!(s.calls, vec![('g', 1.0), ('j', 1.0)]);
    }

    #[test]
    fn self_intersection_consumes_rounds_before_any_solve() {
        let mut s = script(0.2, bowtie, |_| Ok(0.0));
        let out = line_search(&mut s, 1.0, &LineSearchParams::default(), 20.0);
        assert_eq!(out.alpha, 0.125);
        assert_eq!(out.rounds, 3);
        let geometry: Vec<f64> = s.calls.iter().filter(|c| c.0 == 'g').map(|c| c.1).collect();
        assert_eq!(geometry, vec![1.0, 0.5, 0.25, 0.125]);
        assert_eq!(s.calls.iter().filter(|c| c.0 == 'j').count(), 1);
        // rounds = 3 fires both rules: 20 * 1.2 * 0.8
        assert!((out.mu_max - 19.2).abs() < 1e-12);
    }

    #[test]
    fn leaving_the_domain_gates_too() {
        let mut s = script(0.3, outside, |_| Ok(0.0));
        let out = line_search(&mut s, 1.0, &LineSearchParams::default(), 20.0);
        assert_eq!((out.alpha, out.rounds), (0.25, 2));
    }

    #[test]
    fn sufficient_decrease_phase() {
        // J(alpha) = 1 + alpha - 4 alpha^2 ... decreases below 0.99 only for small steps
        let mut s = script(f64::INFINITY, bowtie, |a| Ok(1.0 + 20.0 * a * (a - 0.05)));
        let out = line_search(&mut s, 1.0, &LineSearchParams::default(), 20.0);
        assert_eq!(out.rounds, 5);
        assert_eq!(out.alpha, 1.0 / 32.0);
        assert!(out.objective.unwrap() < 0.99);
        // five rounds: only the upscaling rule
        assert!((out.mu_max - 24.0).abs() < 1e-12);
        assert!(!out.restart);
    }

    #[test]
    fn one_round_fires_both_rules() {
        let mut s = script(f64::INFINITY, bowtie, |a| Ok(if a > 0.6 { 2.0 } else { 0.0 }));
        let out = line_search(&mut s, 1.0, &LineSearchParams::default(), 20.0);
        assert_eq!(out.rounds, 1);
        assert!((out.mu_max - 19.2).abs() < 1e-12);
    }

    #[test]
    fn eight_rounds_request_restart() {
        let mut s = script(f64::INFINITY, bowtie, |a| Ok(if a > 0.004 { 2.0 } else { 0.5 }));
        let out = line_search(&mut s, 1.0, &LineSearchParams::default(), 20.0);
        assert_eq!(out.rounds, 8);
        assert!(out.restart);
        assert!(!out.underflow);
        assert_eq!(out.alpha, 1.0 / 256.0);
        let mut s = script(f64::INFINITY, bowtie, |a| Ok(if a > 0.008 { 2.0 } else { 0.5 }));
        assert!(!line_search(&mut s, 1.0, &LineSearchParams::default(), 20.0).restart);
    }

    #[test]
    fn alpha_underflow_fails_and_restarts() {
        let mut s = script(f64::INFINITY, bowtie, |_| Ok(5.0));
        let out = line_search(&mut s, 1.0, &LineSearchParams::default(), 20.0);
        assert!(out.underflow && out.restart);
        assert_eq!(out.alpha, 0.0);
        assert_eq!(out.objective, None);
        assert_eq!(out.rounds, 40);
        let mut s = script(0.0, outside, |_| Ok(0.0));
        let out = line_search(&mut s, 1.0, &LineSearchParams::default(), 20.0);
        assert!(out.underflow);
        assert!(s.calls.iter().all(|c| c.0 == 'g'));
    }

    #[test]
    fn evaluation_errors_count_as_rejections() {
        let mut s = script(f64::INFINITY, bowtie, |a| if a > 0.3 { Err("singular") } else { Ok(0.1) });
        let out = line_search(&mut s, 1.0, &LineSearchParams::default(), 20.0);
        assert_eq!((out.alpha, out.rounds), (0.25, 2));
        assert_eq!(out.last_error, Some("singular"));
    }

    #[test]
    fn parameter_validation() {
        assert!(LineSearchParams::default().validate().is_ok());
        for bad in [
            LineSearchParams { tau: 1.0, ..Default::default() },
            LineSearchParams { c: 0.0, ..Default::default() },
            LineSearchParams { c_up: 1.0, ..Default::default() },
            LineSearchParams { c_down: 1.5, ..Default::default() },
            LineSearchParams { alpha0: -1.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
