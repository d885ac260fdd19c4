//! Survival and observation probability tables of the three-state process.

use serde::{Deserialize, Serialize};

use super::history::CaptureCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurvivalState {
    Alive = 1,
    /// Died in the interval just ended; recoverable.
    RecentDead = 2,
    /// Died earlier; never recovered.
    LongDead = 3,
}

impl SurvivalState {
    pub const ALL: [SurvivalState; 3] = [SurvivalState::Alive, SurvivalState::RecentDead, SurvivalState::LongDead];
}

/// `f(s_next | s_prev)` given the survival probability `phi` over the interval.
pub fn survival_transition(prev: SurvivalState, next: SurvivalState, phi: f64) -> f64 {
    use SurvivalState::*;
    match (prev, next) {
        (Alive, Alive) => phi,
        (Alive, RecentDead) => 1.0 - phi,
        (RecentDead | LongDead, LongDead) => 1.0,
        _ => 0.0,
    }
}

/// `f(x | s)` given recapture probability `p` and recovery probability `lambda`.
pub fn observation_prob(x: CaptureCode, s: SurvivalState, p: f64, lambda: f64) -> f64 {
    use CaptureCode::*;
    use SurvivalState::*;
    match (x, s) {
        (Seen, Alive) => p,
        (Unseen, Alive) => 1.0 - p,
        (Recovered, RecentDead) => lambda,
        (Unseen, RecentDead) => 1.0 - lambda,
        (Unseen, LongDead) => 1.0,
        _ => 0.0,
    }
}

/// Logistic function without overflow for large `|x|`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Survival probability under `logit(phi) = beta0 + beta1 * y`.
pub fn survival_prob(beta0: f64, beta1: f64, y: f64) -> f64 {
    logistic(beta0 + beta1 * y)
}
