use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup from 0 to `peak_lr`, linear decay to `final_lr` over
/// `decay_steps`, then constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LwsgdSchedule {
    pub warmup_steps: u64,
    pub peak_lr: f64,
    pub decay_steps: u64,
    pub final_lr: f64,
}

impl Default for LwsgdSchedule {
    fn default() -> Self {
        LwsgdSchedule {
            warmup_steps: 5_000,
            peak_lr: 0.01,
            decay_steps: 100_000,
            final_lr: 0.001,
        }
    }
}

impl LwsgdSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.final_lr > 0.0 && self.peak_lr > self.final_lr) {
            return Err(Error::Config(format!(
                "schedule needs peak_lr > final_lr > 0, got {} and {}",
                self.peak_lr, self.final_lr
            )));
        }
        if !self.peak_lr.is_finite() {
            return Err(Error::Config("peak_lr must be finite".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.peak_lr * step as f64 / self.warmup_steps as f64;
        }
        let since = step - self.warmup_steps;
        if since >= self.decay_steps {
            return self.final_lr;
        }
        let frac = since as f64 / self.decay_steps as f64;
        self.peak_lr - (self.peak_lr - self.final_lr) * frac
    }
}

/// Free-function form of [`LwsgdSchedule::lr_at`].
pub fn lr_at(schedule: &LwsgdSchedule, step: u64) -> f64 {
    schedule.lr_at(step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn anchor_values() {
        let s = LwsgdSchedule::default();
        assert_eq!(lr_at(&s, 0), 0.0);
        assert_eq!(lr_at(&s, 5_000), 0.01);
        assert!((lr_at(&s, 55_000) - 0.0055).abs() < 1e-15);
        assert_eq!(lr_at(&s, 105_000), 0.001);
        assert_eq!(lr_at(&s, 10_000_000), 0.001);
        assert!((lr_at(&s, 2_500) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn zero_warmup_starts_at_peak() {
        let s = LwsgdSchedule {
            warmup_steps: 0,
            peak_lr: 1.0,
            decay_steps: 10,
            final_lr: 0.5,
        };
        assert_eq!(s.lr_at(0), 1.0);
        assert_eq!(s.lr_at(10), 0.5);
    }

    #[test]
    fn validation() {
        assert!(LwsgdSchedule::default().validate().is_ok());
        let bad = LwsgdSchedule {
            peak_lr: 0.001,
            final_lr: 0.01,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn continuous_and_piecewise_linear(
            warmup in 0u64..500, decay in 1u64..500, peak in 0.01f64..1.0, t in 0u64..2000,
        ) {
            let s = LwsgdSchedule { warmup_steps: warmup, peak_lr: peak, decay_steps: decay, final_lr: peak / 10.0 };
            // adjacent steps never jump by more than the steepest slope
            let slope = if warmup > 0 { peak / warmup as f64 } else { 0.0 }
                .max((peak - s.final_lr) / decay as f64);
            let jump = (s.lr_at(t + 1) - s.lr_at(t)).abs();
            prop_assert!(jump <= slope * (1.0 + 1e-9) || (warmup == 0 && t == 0));
            prop_assert_eq!(s.lr_at(warmup + decay + t), s.final_lr);
            prop_assert!(s.lr_at(t) <= peak + 1e-12);
        }
    }
}
