//! Cost model: the expected benefit of promoting a vector.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub t_hot: f64,
    pub t_cold: f64,
    /// Amortized per-vector promotion cost.
    pub t_transfer: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            t_hot: 1.0,
            t_cold: 5.0,
            t_transfer: 40.0,
        }
    }
}

impl CostModel {
    pub fn new(t_hot: f64, t_cold: f64, t_transfer: f64) -> Result<Self> {
        let m = Self {
            t_hot,
            t_cold,
            t_transfer,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.t_hot, self.t_cold, self.t_transfer]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.t_cold > self.t_hot && self.t_hot > 0.0 && self.t_transfer > 0.0) {
            return Err(Error::Config(format!(
                "cost model needs T_cold > T_hot > 0 and T_transfer > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Break-even access count `rho = T_transfer / (T_cold - T_hot)`.
    pub fn rho(&self) -> f64 {
        self.t_transfer / (self.t_cold - self.t_hot)
    }

    /// `lambda * (T_cold - T_hot) - T_transfer`, evaluated as
    /// `(lambda - rho) * (T_cold - T_hot)` so that the sign agrees with
    /// `lambda > rho` exactly under floating point.
    pub fn gain(&self, lambda: f64) -> f64 {
        (lambda - self.rho()) * (self.t_cold - self.t_hot)
    }

    /// `lambda * (T_cold - T_hot) - T_transfer` evaluated literally; may differ from [`gain`](Self::gain) by
    /// rounding.
    pub fn gain_direct(&self, lambda: f64) -> f64 {
        lambda * (self.t_cold - self.t_hot) - self.t_transfer
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gain_examples() {
        let m = CostModel::new(2.0, 10.0, 30.0).unwrap();
        assert_eq!(m.gain(5.0), 10.0);
        assert_eq!(m.gain_direct(5.0), 10.0);
        assert_eq!(m.rho(), 3.75);
        assert_eq!(m.gain(3.75), 0.0);
        assert_eq!(m.gain(0.0), -30.0);
    }

    #[test]
    fn default_rho_is_ten() {
        assert_eq!(CostModel::default().rho(), 10.0);
    }

    #[test]
    fn rejects_inverted_costs() {
        assert!(CostModel::new(5.0, 1.0, 40.0).is_err());
        assert!(CostModel::new(0.0, 1.0, 40.0).is_err());
        assert!(CostModel::new(1.0, 2.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn gain_sign_matches_threshold(
            t_hot in 1e-3f64..100.0,
            spread in 1e-3f64..100.0,
            t_transfer in 1e-3f64..1e4,
            lambda in 0.0f64..1e4,
            on_boundary in any::<bool>(),
        ) {
            let m = CostModel::new(t_hot, t_hot + spread, t_transfer).unwrap();
            let lambda = if on_boundary { m.rho() } else { lambda };
            prop_assert_eq!(m.gain(lambda) > 0.0, lambda > m.rho());
        }
    }
}
