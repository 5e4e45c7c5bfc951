//! Scalar activation functions used inside the gated FFN.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Real;

/// Gate activation.
///
/// Serialized as `{"kind": "swish"}`, `{"kind": "relu"}`,
/// `{"kind": "shifted_relu", "bias": 0.1}` or `{"kind": "fatrelu", "threshold": 0.01}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawActivation", into = "RawActivation")]
pub enum ActivationKind {
    Swish,
    Relu,
    /// `max(z - bias, 0)`, `bias >= 0`.
    ShiftedRelu { bias: f64 },
    /// `z` when `z >= threshold`, else 0; `threshold > 0`.
    FatRelu { threshold: f64 },
}

impl ActivationKind {
    /// Thresholded ReLU. A zero threshold collapses to [`ActivationKind::Relu`].
    pub fn fatrelu(threshold: f64) -> Result<Self> {
        if threshold == 0.0 {
            Ok(Self::Relu)
        } else if threshold > 0.0 && threshold.is_finite() {
            Ok(Self::FatRelu { threshold })
        } else {
            Err(Error::InvalidInput(format!(
                "FATReLU threshold must be positive and finite, got {threshold}"
            )))
        }
    }

    pub fn shifted_relu(bias: f64) -> Result<Self> {
        if bias >= 0.0 && bias.is_finite() {
            Ok(Self::ShiftedRelu { bias })
        } else {
            Err(Error::InvalidInput(format!(
                "shifted ReLU bias must be non-negative and finite, got {bias}"
            )))
        }
    }

    /// Whether the sparse FFN kernels can execute this activation.
    pub fn is_kernel_supported(&self) -> bool {
        matches!(self, Self::Relu | Self::FatRelu { .. })
    }

    /// Gate threshold for ReLU-family kernels: columns with `z >= threshold`
    /// stay active (with the ReLU case using a strict `z > 0`).
    pub fn gate_threshold(&self) -> Option<f64> {
        match *self {
            Self::Relu => Some(0.0),
            Self::FatRelu { threshold } => Some(threshold),
            _ => None,
        }
    }

    #[inline]
    pub fn apply<T: Real>(&self, z: T) -> T {
        match *self {
            Self::Swish => z * sigmoid(z),
            Self::Relu => relu(z),
            Self::ShiftedRelu { bias } => relu(z - T::lit(bias)),
            Self::FatRelu { threshold } => {
                if z >= T::lit(threshold) {
                    z
                } else {
                    T::zero()
                }
            }
        }
    }

    /// Derivative, with subgradient 0 at the ReLU-family kinks.
    #[inline]
    pub fn derivative<T: Real>(&self, z: T) -> T {
        match *self {
            Self::Swish => {
                let s = sigmoid(z);
                s * (T::one() + z * (T::one() - s))
            }
            Self::Relu => step(z > T::zero()),
            Self::ShiftedRelu { bias } => step(z > T::lit(bias)),
            Self::FatRelu { threshold } => step(z >= T::lit(threshold)),
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Swish => write!(f, "swish"),
            Self::Relu => write!(f, "relu"),
            Self::ShiftedRelu { bias } => write!(f, "shifted_relu(b={bias})"),
            Self::FatRelu { threshold } => write!(f, "fatrelu(T={threshold})"),
        }
    }
}

#[inline]
fn relu<T: Real>(z: T) -> T {
    // Not `max`: the result must be +0.0 for every non-positive input.
    if z > T::zero() {
        z
    } else {
        T::zero()
    }
}

#[inline]
fn step<T: Real>(on: bool) -> T {
    if on {
        T::one()
    } else {
        T::zero()
    }
}

#[inline]
fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawActivation {
    Swish,
    Relu,
    ShiftedRelu { bias: f64 },
    #[serde(rename = "fatrelu")]
    FatRelu { threshold: f64 },
}

impl TryFrom<RawActivation> for ActivationKind {
    type Error = Error;

    fn try_from(raw: RawActivation) -> Result<Self> {
        match raw {
            RawActivation::Swish => Ok(Self::Swish),
            RawActivation::Relu => Ok(Self::Relu),
            RawActivation::ShiftedRelu { bias } => Self::shifted_relu(bias),
            RawActivation::FatRelu { threshold } => Self::fatrelu(threshold),
        }
    }
}

impl From<ActivationKind> for RawActivation {
    fn from(kind: ActivationKind) -> Self {
        match kind {
            ActivationKind::Swish => Self::Swish,
            ActivationKind::Relu => Self::Relu,
            ActivationKind::ShiftedRelu { bias } => Self::ShiftedRelu { bias },
            ActivationKind::FatRelu { threshold } => Self::FatRelu { threshold },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, SeededRng};
    use proptest::prelude::*;

    const FAT: ActivationKind = ActivationKind::FatRelu { threshold: 0.01 };

    #[test]
    fn apply_examples() {
        assert_eq!(FAT.apply(0.005f64), 0.0);
        assert_eq!(FAT.apply(0.02f64), 0.02);
        assert_eq!(ActivationKind::Relu.apply(-1.5f64), 0.0);
        assert_eq!(ActivationKind::Swish.apply(0.0f64), 0.0);
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(ActivationKind::Relu.derivative(0.0f64), 0.0);
        assert_eq!(FAT.derivative(0.02f64), 1.0);
        let swish = ActivationKind::Swish;
        let err = grad_check(
            |p| swish.apply(p[0]),
            |p| vec![swish.derivative(p[0])],
            &[5.0],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn threshold_is_inclusive() {
        assert_eq!(FAT.apply(0.01f64), 0.01);
        assert_eq!(FAT.derivative(0.01f64), 1.0);
    }

    #[test]
    fn zero_threshold_is_relu_and_invalid_params_rejected() {
        assert_eq!(ActivationKind::fatrelu(0.0).unwrap(), ActivationKind::Relu);
        assert!(ActivationKind::fatrelu(-0.1).is_err());
        assert!(ActivationKind::shifted_relu(-0.1).is_err());
        assert!(ActivationKind::fatrelu(f64::NAN).is_err());
    }

    #[test]
    fn zero_preservation() {
        for kind in [
            ActivationKind::Swish,
            ActivationKind::Relu,
            ActivationKind::ShiftedRelu { bias: 0.3 },
            FAT,
        ] {
            assert_eq!(kind.apply(0.0f64), 0.0, "{kind}");
        }
    }

    #[test]
    fn serde_shapes() {
        let json = serde_json::to_value(FAT).unwrap();
        assert_eq!(json, serde_json::json!({"kind": "fatrelu", "threshold": 0.01}));
        let back: ActivationKind =
            serde_json::from_str(r#"{"kind": "shifted_relu", "bias": 0.5}"#).unwrap();
        assert_eq!(back, ActivationKind::ShiftedRelu { bias: 0.5 });
        let relu: ActivationKind =
            serde_json::from_str(r#"{"kind": "fatrelu", "threshold": 0.0}"#).unwrap();
        assert_eq!(relu, ActivationKind::Relu);
        assert!(serde_json::from_str::<ActivationKind>(r#"{"kind": "fatrelu", "threshold": -1}"#)
            .is_err());
    }

    #[test]
    fn derivatives_match_central_differences_away_from_kinks() {
        let kinds = [
            ActivationKind::Swish,
            ActivationKind::Relu,
            ActivationKind::ShiftedRelu { bias: 0.3 },
            ActivationKind::FatRelu { threshold: 0.05 },
        ];
        let mut rng = SeededRng::new(11);
        let mut checked = 0;
        while checked < 1000 {
            let z = rng.uniform(-6.0, 6.0);
            let kind = kinds[checked % kinds.len()];
            let kink = match kind {
                ActivationKind::Swish => None,
                ActivationKind::Relu => Some(0.0),
                ActivationKind::ShiftedRelu { bias } => Some(bias),
                ActivationKind::FatRelu { threshold } => Some(threshold),
            };
            if kink.is_some_and(|k| (z - k).abs() < 1e-3) {
                continue;
            }
            let err = grad_check(
                |p| kind.apply(p[0]),
                |p| vec![kind.derivative(p[0])],
                &[z],
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-6, "{kind} at {z}: {err}");
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn fatrelu_outputs_zero_or_identity(z in -10.0f64..10.0, t in 1e-6f64..5.0) {
            let out = ActivationKind::FatRelu { threshold: t }.apply(z);
            prop_assert!(out == 0.0 || out == z);
        }

        #[test]
        fn shifted_is_relu_of_shift(z in -10.0f64..10.0, b in 0.0f64..5.0) {
            let lhs = ActivationKind::ShiftedRelu { bias: b }.apply(z);
            let rhs = ActivationKind::Relu.apply(z - b);
            prop_assert_eq!(lhs.to_bits(), rhs.to_bits());
        }

        #[test]
        fn tiny_threshold_matches_relu_bitwise(z in -10.0f64..10.0) {
            let fat = ActivationKind::FatRelu { threshold: 1e-300 }.apply(z);
            prop_assert_eq!(fat.to_bits(), ActivationKind::Relu.apply(z).to_bits());
        }
    }
}
