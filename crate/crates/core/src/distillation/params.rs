use serde::{Deserialize, Serialize};

use super::BuildError;

/// Constants of the distillation-column instance.
///
/// Trays are numbered from 1 (condenser) to `trays` (reboiler). Values the
/// original instance leaves open (holdups, feed composition, setpoints,
/// initial profile) have explicit defaults and can be overridden from a flat
/// `key = value` file via [`DistillationParams::from_toml_str`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillationParams {
    pub trays: usize,
    pub feed_tray: usize,
    /// relative volatility α
    pub alpha: f64,
    pub distillate_flow: f64,
    pub feed_flow: f64,
    pub feed_composition: f64,
    pub holdup_condenser: f64,
    pub holdup_tray: f64,
    pub holdup_reboiler: f64,
    /// objective weight on the top-tray deviation
    pub gamma: f64,
    /// objective weight on the reflux deviation
    pub rho: f64,
    pub horizon: f64,
    pub x1_setpoint: f64,
    pub u_setpoint: f64,
    pub u_lower: f64,
    pub u_upper: f64,
    /// x̄_{n,0}; `None` means the steady state at `u_setpoint`
    pub initial_profile: Option<Vec<f64>>,
}

impl Default for DistillationParams {
    fn default() -> Self {
        Self {
            trays: 32,
            feed_tray: 17,
            alpha: 1.6,
            distillate_flow: 0.2,
            feed_flow: 0.4,
            feed_composition: 0.5,
            holdup_condenser: 5.0,
            holdup_tray: 1.0,
            holdup_reboiler: 5.0,
            gamma: 1000.0,
            rho: 1.0,
            horizon: 10.0,
            x1_setpoint: 0.98,
            u_setpoint: 2.0,
            u_lower: 1.0,
            u_upper: 5.0,
            initial_profile: None,
        }
    }
}

impl DistillationParams {
    /// Defaults overridden by the keys present in `text`.
    pub fn from_toml_str(text: &str) -> Result<Self, BuildError> {
        let p: Self = toml::from_str(text).map_err(|e| BuildError::InvalidParams(e.message().to_string()))?;
        p.validate()?;
        Ok(p)
    }

    /// Step length for a horizon split into `n` intervals.
    pub fn dt(&self, n: usize) -> f64 {
        self.horizon / n as f64
    }

    pub fn holdup(&self, tray: usize) -> f64 {
        if tray == 1 {
            self.holdup_condenser
        } else if tray == self.trays {
            self.holdup_reboiler
        } else {
            self.holdup_tray
        }
    }

    pub fn validate(&self) -> Result<(), BuildError> {
        let bad = |msg: &str| Err(BuildError::InvalidParams(msg.to_string()));
        if self.trays < 5 || self.feed_tray < 3 || self.feed_tray > self.trays - 2 {
            return bad("need trays >= 5 and 3 <= feed_tray <= trays - 2");
        }
        let positive = [
            self.distillate_flow,
            self.feed_flow,
            self.holdup_condenser,
            self.holdup_tray,
            self.holdup_reboiler,
            self.horizon,
            self.alpha,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("flows, holdups, horizon and alpha must be positive");
        }
        if self.feed_flow <= self.distillate_flow {
            return bad("feed_flow must exceed distillate_flow");
        }
        if !(self.u_lower <= self.u_upper) || !(self.u_lower > 0.0) {
            return bad("need 0 < u_lower <= u_upper");
        }
        if let Some(p) = &self.initial_profile {
            if p.len() != self.trays {
                return bad("initial_profile must have one entry per tray");
            }
        }
        Ok(())
    }
}
