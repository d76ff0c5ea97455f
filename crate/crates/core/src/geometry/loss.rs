use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Robust loss `ρ` applied to the squared residual `s = ‖e‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossFunction {
    Trivial,
    /// Quadratic up to `s = δ²`, then `2δ√s − δ²`.
    Huber { delta: f64 },
}

impl LossFunction {
    pub fn huber(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Huber scale must be positive, got {delta}"
            )));
        }
        Ok(Self::Huber { delta })
    }

    /// `(ρ(s), ρ'(s))` for `s ≥ 0`; callers guarantee the sign.
    pub(crate) fn eval(&self, s: f64) -> (f64, f64) {
        match *self {
            LossFunction::Trivial => (s, 1.0),
            LossFunction::Huber { delta } => {
                if s <= delta * delta {
                    (s, 1.0)
                } else {
                    let r = s.sqrt();
                    (2.0 * delta * r - delta * delta, delta / r)
                }
            }
        }
    }

    pub(crate) fn rho(&self, s: f64) -> f64 {
        self.eval(s).0
    }
}

/// Returns `(ρ(s), ρ'(s))`.
pub fn robust_loss(loss: &LossFunction, s: f64) -> Result<(f64, f64)> {
    if s.is_nan() || s < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "loss argument must be nonnegative, got {s}"
        )));
    }
    Ok(loss.eval(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(robust_loss(&LossFunction::Trivial, 7.0).unwrap(), (7.0, 1.0));
        let h1 = LossFunction::Huber { delta: 1.0 };
        assert_eq!(robust_loss(&h1, 1.0).unwrap(), (1.0, 1.0));
        let above = robust_loss(&h1, 1.0 + 1e-12).unwrap();
        assert!((above.0 - 1.0).abs() < 1e-11 && (above.1 - 1.0).abs() < 1e-11);

        let h2 = LossFunction::Huber { delta: 2.0 };
        let (v, d) = robust_loss(&h2, 16.0).unwrap();
        assert_eq!((v, d), (12.0, 0.5));
        let step = 1e-5;
        let fd = (h2.rho(16.0 + step) - h2.rho(16.0 - step)) / (2.0 * step);
        assert!((fd - 0.5).abs() < 1e-9);

        assert!(robust_loss(&h1, -1.0).is_err());
        assert!(robust_loss(&h1, f64::NAN).is_err());
        assert!(LossFunction::huber(0.0).is_err());
    }

    fn losses() -> impl Strategy<Value = LossFunction> {
        prop_oneof![
            Just(LossFunction::Trivial),
            (0.01f64..10.0).prop_map(|delta| LossFunction::Huber { delta }),
        ]
    }

    proptest! {
        #[test]
        fn loss_contract(loss in losses(), a in 0.0f64..100.0, b in 0.0f64..100.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (r0, d0) = robust_loss(&loss, 0.0).unwrap();
            prop_assert_eq!((r0, d0), (0.0, 1.0));
            let (rl, dl) = robust_loss(&loss, lo).unwrap();
            let (rh, dh) = robust_loss(&loss, hi).unwrap();
            prop_assert!(rl <= rh);
            prop_assert!((0.0..=1.0).contains(&dl) && (0.0..=1.0).contains(&dh));
            prop_assert!(dh <= dl);
            let mid = loss.rho(0.5 * (lo + hi));
            prop_assert!(mid >= 0.5 * (rl + rh) - 1e-12 * (1.0 + rh));
        }
    }
}
