//! Adaptive promotion threshold.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptParams {
    pub up_factor: f64,
    pub down_factor: f64,
    /// Upper bound as a multiple of rho.
    pub max_factor: f64,
    /// Lower bound as a multiple of rho.
    pub min_factor: f64,
    /// Weight of the newest window in the trailing averages.
    pub smoothing: f64,
}

impl Default for AdaptParams {
    fn default() -> Self {
        Self {
            up_factor: 1.25,
            down_factor: 0.9,
            max_factor: 4.0,
            min_factor: 0.25,
            smoothing: 0.5,
        }
    }
}

/// Moves theta from one closed metrics window to the next.
#[derive(Debug, Clone)]
pub struct ThetaController {
    params: AdaptParams,
    rho: f64,
    theta: f64,
    trailing: Option<(f64, f64)>,
}

impl ThetaController {
    pub fn new(rho: f64, params: AdaptParams) -> Self {
        Self {
            params,
            rho,
            theta: rho,
            trailing: None,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn set_theta(&mut self, theta: f64) {
        self.theta = theta;
    }

    /// Feeds one window's miss rate and mean `F_lambda`; returns the new
    /// theta. The first window only seeds the trailing averages.
    pub fn observe(&mut self, miss_rate: f64, mean_f: f64) -> f64 {
        let p = self.params;
        if let Some((avg_miss, avg_f)) = self.trailing {
            if miss_rate > avg_miss && mean_f > avg_f {
                self.theta = (self.theta * p.up_factor).min(p.max_factor * self.rho);
            } else if miss_rate < avg_miss {
                self.theta = (self.theta * p.down_factor).max(p.min_factor * self.rho);
            }
        }
        self.trailing = Some(match self.trailing {
            None => (miss_rate, mean_f),
            Some((m, f)) => (
                m + p.smoothing * (miss_rate - m),
                f + p.smoothing * (mean_f - f),
            ),
        });
        self.theta
    }
}
