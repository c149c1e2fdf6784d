//! Closed-form queueing models for the three content-delivery scenarios and
//! the priority-based countermeasure.
//!
//! Scenario times are mean times in system (waiting plus service) of a
//! single-server queue with exponential service:
//!
//! * `mm1_time` — plain M/M/1, Poisson request arrivals at rate `lambda`.
//! * `batch_cdn_time` — the same request volume arriving in bursts of `b`
//!   (one burst per legitimate request, `b` pirate consumers each).
//! * `infra_time` — the pirate-infrastructure variant: the upstream fetch
//!   rate drops to `lambda / b` while bursts keep size `b`.
//!
//! The countermeasure model classifies customers into a legal (high
//! priority) and an illegal (low priority) class served by a single
//! non-preemptive server; `priority_times` gives the per-class mean queue
//! waiting times and `legal_price_threshold` the price below which the
//! legal service is the cheaper choice once quality of service is priced
//! in. All formulas are validated against the event-driven simulator in
//! [`crate::des`]; that comparison is what pins the in-system vs. in-queue
//! reading above.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which scenario failed a stability check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Mm1,
    BatchCdn,
    BatchInfra,
    Priority,
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioKind::Mm1 => write!(f, "mm1"),
            ScenarioKind::BatchCdn => write!(f, "batch-cdn"),
            ScenarioKind::BatchInfra => write!(f, "batch-infra"),
            ScenarioKind::Priority => write!(f, "priority"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueueError {
    /// Offered load at or above capacity; the queue has no steady state.
    #[error("UnstableQueue: {scenario} utilization {utilization} >= 1")]
    UnstableQueue {
        scenario: ScenarioKind,
        utilization: f64,
    },
    #[error("InvalidParam: {0}")]
    InvalidParam(String),
}

/// Arrival/service rates and burst size for a scenario evaluation.
///
/// Rates and times share one abstract time unit; no conversion happens
/// anywhere in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueParams {
    /// Request arrival rate, > 0.
    pub lambda: f64,
    /// Service rate, > 0.
    pub mu: f64,
    /// Burst size: pirate users per legitimate request, >= 1.
    pub b: u32,
}

impl QueueParams {
    pub fn new(lambda: f64, mu: f64, b: u32) -> Result<Self, QueueError> {
        let p = Self { lambda, mu, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), QueueError> {
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(QueueError::InvalidParam(format!(
                "lambda must be finite and > 0, got {}",
                self.lambda
            )));
        }
        if !self.mu.is_finite() || self.mu <= 0.0 {
            return Err(QueueError::InvalidParam(format!(
                "mu must be finite and > 0, got {}",
                self.mu
            )));
        }
        if self.b < 1 {
            return Err(QueueError::InvalidParam("b must be >= 1".into()));
        }
        Ok(())
    }

    /// Offered load `lambda / mu`.
    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }

    fn check_stable(&self, utilization: f64, scenario: ScenarioKind) -> Result<(), QueueError> {
        if utilization >= 1.0 {
            return Err(QueueError::UnstableQueue {
                scenario,
                utilization,
            });
        }
        Ok(())
    }
}

/// Mean time in system for the three scenarios at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEval {
    pub t_orig: f64,
    pub t_cdn: f64,
    pub t_infra: f64,
}

/// Mean time in system of an M/M/1 queue: `1 / (mu (1 - rho))`.
///
/// Ignores `b`.
pub fn mm1_time(p: &QueueParams) -> Result<f64, QueueError> {
    p.validate()?;
    let rho = p.rho();
    p.check_stable(rho, ScenarioKind::Mm1)?;
    Ok(1.0 / (p.mu * (1.0 - rho)))
}

/// Mean time in system when the request volume `lambda` arrives in bursts
/// of size `b`: `(1 + b) / (2 mu (1 - rho))`.
///
/// Reduces to [`mm1_time`] at `b = 1`.
pub fn batch_cdn_time(p: &QueueParams) -> Result<f64, QueueError> {
    p.validate()?;
    let rho = p.rho();
    p.check_stable(rho, ScenarioKind::BatchCdn)?;
    Ok((1.0 + p.b as f64) / (2.0 * p.mu * (1.0 - rho)))
}

/// Mean time in system for the pirate-infrastructure scenario, where the
/// upstream burst volume drops to `lambda / b`:
/// `(1 + b) / (2 mu (1 - lambda / (b mu)))`.
///
/// Reduces to [`mm1_time`] at `b = 1`.
pub fn infra_time(p: &QueueParams) -> Result<f64, QueueError> {
    p.validate()?;
    let util = p.lambda / (p.b as f64 * p.mu);
    p.check_stable(util, ScenarioKind::BatchInfra)?;
    Ok((1.0 + p.b as f64) / (2.0 * p.mu * (1.0 - util)))
}

/// Evaluates all three scenario times at one parameter point.
///
/// Fails with the scenario tag of the first unstable formula.
pub fn evaluate_scenarios(p: &QueueParams) -> Result<ScenarioEval, QueueError> {
    Ok(ScenarioEval {
        t_orig: mm1_time(p)?,
        t_cdn: batch_cdn_time(p)?,
        t_infra: infra_time(p)?,
    })
}

/// Priority-split and pricing parameters for the countermeasure model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorityEconParams {
    /// Total arrival rate, > 0.
    pub lambda: f64,
    /// Service rate, > 0.
    pub mu: f64,
    /// Priority split in [0, 1]: the legal class carries load `q * lambda / mu`,
    /// the illegal class the complement.
    pub q: f64,
    /// Quality-of-service weight (price per unit time), >= 0.
    pub alpha: f64,
    /// Illegal price as a fraction of the legal price, in [0, 1).
    pub beta: f64,
    /// Legal price, >= 0.
    pub p_legal: f64,
}

impl PriorityEconParams {
    pub fn validate(&self) -> Result<(), QueueError> {
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(QueueError::InvalidParam(format!(
                "lambda must be finite and > 0, got {}",
                self.lambda
            )));
        }
        if !self.mu.is_finite() || self.mu <= 0.0 {
            return Err(QueueError::InvalidParam(format!(
                "mu must be finite and > 0, got {}",
                self.mu
            )));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(QueueError::InvalidParam(format!(
                "q must be in [0, 1], got {}",
                self.q
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(QueueError::InvalidParam(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(QueueError::InvalidParam(format!(
                "beta must be in [0, 1), got {}",
                self.beta
            )));
        }
        if !self.p_legal.is_finite() || self.p_legal < 0.0 {
            return Err(QueueError::InvalidParam(format!(
                "p_legal must be finite and >= 0, got {}",
                self.p_legal
            )));
        }
        Ok(())
    }

    /// Total offered load `lambda / mu`.
    pub fn rho(&self) -> f64 {
        self.lambda / self.mu
    }

    /// Legal-class load `q * lambda / mu`.
    pub fn rho_legal(&self) -> f64 {
        self.q * self.lambda / self.mu
    }

    /// Illegal-class load `(1 - q) * lambda / mu`.
    pub fn rho_illegal(&self) -> f64 {
        (1.0 - self.q) * self.lambda / self.mu
    }
}

/// Mean queue waiting times of the two priority classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorityTimes {
    pub t_legal: f64,
    pub t_illegal: f64,
}

/// Mean queue waiting times of a non-preemptive two-class M/M/1 priority
/// queue with shared service rate `mu`; the legal class is served first.
///
/// With mean residual work `w0 = rho / mu`:
/// `t_legal = w0 / (1 - rho_l)` and
/// `t_illegal = w0 / ((1 - rho_l)(1 - rho_l - rho_i))`.
///
/// An empty illegal class (`rho_i = 0`) reports `t_illegal = t_legal`:
/// with no low-priority traffic both classes see the single-class value.
pub fn priority_times(p: &PriorityEconParams) -> Result<PriorityTimes, QueueError> {
    p.validate()?;
    let rho = p.rho();
    if rho >= 1.0 {
        return Err(QueueError::UnstableQueue {
            scenario: ScenarioKind::Priority,
            utilization: rho,
        });
    }
    let rho_l = p.rho_legal();
    let rho_i = p.rho_illegal();
    let w0 = rho / p.mu;
    let t_legal = w0 / (1.0 - rho_l);
    let t_illegal = if rho_i == 0.0 {
        t_legal
    } else {
        w0 / ((1.0 - rho_l) * (1.0 - rho_l - rho_i))
    };
    Ok(PriorityTimes { t_legal, t_illegal })
}

/// Limiting legal price `alpha (t_illegal - t_legal) / (1 - beta)`.
///
/// Below this price the legal service is the cheaper option for a customer
/// weighing price against waiting time.
pub fn legal_price_threshold(p: &PriorityEconParams) -> Result<f64, QueueError> {
    let times = priority_times(p)?;
    Ok(p.alpha * (times.t_illegal - times.t_legal) / (1.0 - p.beta))
}

/// Whether the configured legal price is at or below the limiting price.
/// Ties count as worthwhile.
pub fn is_legal_worthwhile(p: &PriorityEconParams) -> Result<bool, QueueError> {
    Ok(p.p_legal <= legal_price_threshold(p)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const REL_TOL: f64 = 1e-12;

    fn assert_rel(actual: f64, expected: f64) {
        let err = if expected == 0.0 {
            actual.abs()
        } else {
            ((actual - expected) / expected).abs()
        };
        assert!(
            err <= REL_TOL,
            "expected {expected}, got {actual} (rel err {err:e})"
        );
    }

    fn params(lambda: f64, mu: f64, b: u32) -> QueueParams {
        QueueParams { lambda, mu, b }
    }

    fn econ(lambda: f64, mu: f64, q: f64, alpha: f64, beta: f64, p_legal: f64) -> PriorityEconParams {
        PriorityEconParams {
            lambda,
            mu,
            q,
            alpha,
            beta,
            p_legal,
        }
    }

    #[test]
    fn mm1_hand_values() {
        assert_rel(mm1_time(&params(0.5, 1.0, 1)).unwrap(), 2.0);
        assert_rel(mm1_time(&params(0.5, 0.6, 1)).unwrap(), 10.0);
    }

    #[test]
    fn mm1_unstable_at_rho_one() {
        let err = mm1_time(&params(0.5, 0.5, 1)).unwrap_err();
        assert!(matches!(
            err,
            QueueError::UnstableQueue {
                scenario: ScenarioKind::Mm1,
                ..
            }
        ));
    }

    #[test]
    fn mm1_rejects_bad_rates() {
        assert!(matches!(
            mm1_time(&params(0.0, 1.0, 1)),
            Err(QueueError::InvalidParam(_))
        ));
        assert!(matches!(
            mm1_time(&params(0.5, -1.0, 1)),
            Err(QueueError::InvalidParam(_))
        ));
        assert!(matches!(
            mm1_time(&params(0.5, 1.0, 0)),
            Err(QueueError::InvalidParam(_))
        ));
    }

    #[test]
    fn batch_cdn_hand_values() {
        // b = 1 collapses to the M/M/1 value.
        assert_eq!(
            batch_cdn_time(&params(0.5, 1.0, 1)).unwrap(),
            mm1_time(&params(0.5, 1.0, 1)).unwrap()
        );
        assert_rel(batch_cdn_time(&params(0.5, 1.0, 2)).unwrap(), 3.0);
        // (1 + 10) / (2 * 1 * 0.5)
        assert_rel(batch_cdn_time(&params(0.5, 1.0, 10)).unwrap(), 11.0);
    }

    #[test]
    fn infra_hand_values() {
        assert_eq!(
            infra_time(&params(0.5, 1.0, 1)).unwrap(),
            mm1_time(&params(0.5, 1.0, 1)).unwrap()
        );
        // 3 / (2 * (1 - 0.25))
        assert_rel(infra_time(&params(0.5, 1.0, 2)).unwrap(), 2.0);
        // 3 / (1.2 * (1 - 0.5/1.2)) = 3 / 0.7
        assert_rel(infra_time(&params(0.5, 0.6, 2)).unwrap(), 3.0 / 0.7);
    }

    #[test]
    fn infra_stable_where_mm1_is_not() {
        // lambda/mu = 1.67 but lambda/(b mu) = 0.83: only the infra formula applies.
        let p = params(0.5, 0.3, 2);
        assert!(mm1_time(&p).is_err());
        assert!(infra_time(&p).is_ok());
    }

    #[test]
    fn scenario_bundle_hand_values() {
        let eval = evaluate_scenarios(&params(0.5, 1.0, 2)).unwrap();
        assert_rel(eval.t_orig, 2.0);
        assert_rel(eval.t_cdn, 3.0);
        assert_rel(eval.t_infra, 2.0);

        // All three collapse at b = 1.
        let eval = evaluate_scenarios(&params(0.5, 1.0, 1)).unwrap();
        assert_eq!(eval.t_orig, eval.t_cdn);
        assert_eq!(eval.t_orig, eval.t_infra);

        let eval = evaluate_scenarios(&params(0.5, 4.0, 4)).unwrap();
        assert_rel(eval.t_orig, 2.0 / 7.0);
        assert_rel(eval.t_cdn, 5.0 / 7.0);
        assert_rel(eval.t_infra, 5.0 / 7.75);
    }

    #[test]
    fn scenario_ordering() {
        for &mu in &[0.6, 0.8, 1.0, 2.0, 4.0] {
            for &b in &[1u32, 2, 4, 10] {
                let eval = evaluate_scenarios(&params(0.5, mu, b)).unwrap();
                assert!(eval.t_cdn >= eval.t_orig, "mu={mu} b={b}");
                assert!(eval.t_cdn >= eval.t_infra, "mu={mu} b={b}");
                assert!(eval.t_orig > 0.0 && eval.t_infra > 0.0);
            }
        }
    }

    #[test]
    fn scenario_times_decrease_in_mu() {
        let grid: Vec<f64> = (0..40).map(|i| 0.6 + i as f64 * (4.0 - 0.6) / 39.0).collect();
        for &b in &[1u32, 2, 4, 10] {
            let mut prev: Option<ScenarioEval> = None;
            for &mu in &grid {
                let eval = evaluate_scenarios(&params(0.5, mu, b)).unwrap();
                if let Some(p) = prev {
                    assert!(eval.t_orig < p.t_orig);
                    assert!(eval.t_cdn < p.t_cdn);
                    assert!(eval.t_infra < p.t_infra);
                }
                prev = Some(eval);
            }
        }
    }

    #[test]
    fn priority_hand_values() {
        let t = priority_times(&econ(0.5, 1.0, 0.0, 2.0, 0.2, 1.0)).unwrap();
        assert_rel(t.t_legal, 0.5);
        assert_rel(t.t_illegal, 1.0);

        let t = priority_times(&econ(0.5, 1.0, 0.1, 2.0, 0.2, 1.0)).unwrap();
        assert_rel(t.t_legal, 10.0 / 19.0);
        assert_rel(t.t_illegal, 20.0 / 19.0);
    }

    #[test]
    fn priority_empty_illegal_class_sees_single_class_value() {
        let t = priority_times(&econ(0.5, 1.0, 1.0, 2.0, 0.2, 1.0)).unwrap();
        assert_rel(t.t_legal, 1.0);
        assert_rel(t.t_illegal, 1.0);
    }

    #[test]
    fn priority_illegal_waits_at_least_legal() {
        for q in [0.0, 0.1, 0.3, 0.5, 0.9, 0.99] {
            let t = priority_times(&econ(0.7, 1.0, q, 2.0, 0.2, 1.0)).unwrap();
            assert!(t.t_illegal >= t.t_legal, "q={q}");
        }
    }

    #[test]
    fn priority_unstable() {
        assert!(matches!(
            priority_times(&econ(1.0, 1.0, 0.1, 2.0, 0.2, 1.0)),
            Err(QueueError::UnstableQueue {
                scenario: ScenarioKind::Priority,
                ..
            })
        ));
    }

    #[test]
    fn legal_price_hand_values() {
        assert_rel(
            legal_price_threshold(&econ(0.5, 1.0, 0.0, 2.0, 0.2, 1.0)).unwrap(),
            1.25
        );
        assert_rel(
            legal_price_threshold(&econ(0.5, 1.0, 0.0, 0.0, 0.2, 1.0)).unwrap(),
            0.0
        );
        assert_rel(
            legal_price_threshold(&econ(0.5, 1.0, 0.0, 2.0, 0.4, 1.0)).unwrap(),
            1.0 / 0.6
        );
    }

    #[test]
    fn legal_price_rejects_beta_one() {
        let p = econ(0.5, 1.0, 0.0, 2.0, 1.0, 1.0);
        assert!(matches!(
            legal_price_threshold(&p),
            Err(QueueError::InvalidParam(_))
        ));
    }

    #[test]
    fn legal_price_increases_in_beta() {
        let mut prev = -1.0;
        for beta in [0.0, 0.2, 0.4, 0.6, 0.8, 0.95] {
            let v = legal_price_threshold(&econ(0.5, 1.0, 0.1, 2.0, beta, 1.0)).unwrap();
            assert!(v > prev, "beta={beta}");
            prev = v;
        }
    }

    #[test]
    fn worthwhile_boundary() {
        // Threshold is 1.25 for these parameters.
        assert!(is_legal_worthwhile(&econ(0.5, 1.0, 0.0, 2.0, 0.2, 1.0)).unwrap());
        assert!(is_legal_worthwhile(&econ(0.5, 1.0, 0.0, 2.0, 0.2, 1.25)).unwrap());
        assert!(!is_legal_worthwhile(&econ(0.5, 1.0, 0.0, 2.0, 0.2, 2.0)).unwrap());
    }
}
