//! Parameter sequences for the outer iteration.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `θ_k = (1/k)^p`, the summable sequence bounding the inertial weights.
pub fn theta(k: usize, p: f64) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k", "theta is defined for k >= 1"));
    }
    if !(p > 1.0) {
        return Err(invalid("theta_exponent", format!("must exceed 1, got {p}")));
    }
    Ok((k as f64).powf(-p))
}

/// Sequence of Lagrange multipliers `λ_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LambdaSchedule {
    /// `λ_k = r^k`
    Geometric(f64),
    Constant(f64),
    /// Explicit values; indices past the end repeat the last entry.
    Custom(Vec<f64>),
}

impl LambdaSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Geometric(r) | Self::Constant(r) if !(*r > 0.0 && r.is_finite()) => Err(invalid(
                "lambda_schedule",
                format!("needs a positive finite value, got {r}"),
            )),
            Self::Custom(v) if v.is_empty() => Err(invalid("lambda_schedule", "empty custom list")),
            Self::Custom(v) if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) => Err(invalid(
                "lambda_schedule",
                "custom values must be positive and finite",
            )),
            _ => Ok(()),
        }
    }

    pub fn value(&self, k: usize) -> Result<f64> {
        self.validate()?;
        let v = match self {
            Self::Geometric(r) => r.powi(k.min(i32::MAX as usize) as i32),
            Self::Constant(c) => *c,
            Self::Custom(list) => list[k.min(list.len() - 1)],
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(
                "lambda_schedule",
                format!("value at k={k} is not a positive finite number ({v})"),
            ));
        }
        Ok(v)
    }

    /// Whether `Σ_k λ_k` diverges, which finite stopping of the
    /// discrepancy principle requires.
    pub fn has_divergent_sum(&self) -> bool {
        match self {
            Self::Geometric(r) => *r >= 1.0,
            Self::Constant(_) | Self::Custom(_) => true,
        }
    }
}

/// Adaptive inertial weight:
/// `α_0 = ᾱ`, and for `k ≥ 1` either `min{θ_k/‖x_k − x_{k−1}‖², θ_k, ᾱ}`
/// or `0` when the last two iterates coincide.
pub fn inertial_weight(k: usize, diff_norm_sq: f64, theta_k: f64, alpha_bar: f64) -> f64 {
    if k == 0 {
        return alpha_bar;
    }
    if diff_norm_sq <= 0.0 {
        return 0.0;
    }
    (theta_k / diff_norm_sq)
        .min(theta_k)
        .min(alpha_bar)
        .max(0.0)
}

/// Momentum of Nesterov's scheme, `(k−1)/(k−1+α)` clamped at zero.
pub fn nesterov_momentum(k: usize, alpha: f64) -> f64 {
    let km1 = k as f64 - 1.0;
    (km1 / (km1 + alpha)).max(0.0)
}

/// Beck–Teboulle sequence `t_1 = 1, t_{k+1} = (1 + √(1 + 4t_k²))/2`.
#[derive(Clone, Debug)]
pub struct FistaSequence {
    t: f64,
}

impl Default for FistaSequence {
    fn default() -> Self {
        Self { t: 1.0 }
    }
}

impl FistaSequence {
    pub fn current(&self) -> f64 {
        self.t
    }

    /// Advances `t_k → t_{k+1}` and returns the momentum `(t_k − 1)/t_{k+1}`.
    pub fn advance(&mut self) -> f64 {
        let next = 0.5 * (1.0 + (1.0 + 4.0 * self.t * self.t).sqrt());
        let momentum = (self.t - 1.0) / next;
        self.t = next;
        momentum
    }
}
