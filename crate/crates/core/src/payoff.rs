//! Closed catalog of bounded continuous initial data.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    /// `f(x) = value`
    Constant { value: f64 },
    /// `f(x) = amp · exp(−|x − center|² / (2 width²))`
    GaussianBump {
        center: Vec<f64>,
        width: f64,
        #[serde(default = "one")]
        amp: f64,
    },
    /// `f(x) = amp · cos(2π freq·x + phase)`
    Cosine {
        freq: Vec<f64>,
        #[serde(default)]
        phase: f64,
        #[serde(default = "one")]
        amp: f64,
    },
    /// `f(x) = amp · tanh((x_axis − shift) / scale)`
    Tanh {
        axis: usize,
        scale: f64,
        #[serde(default)]
        shift: f64,
        #[serde(default = "one")]
        amp: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Payoff {
    /// Standard gaussian bump `exp(−|x|²/2)` centred at the origin.
    pub fn standard_bump(d: usize) -> Self {
        Self::GaussianBump {
            center: vec![0.0; d],
            width: 1.0,
            amp: 1.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::GaussianBump { center, width, amp } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                amp * (-0.5 * r2 / (width * width)).exp()
            }
            Self::Cosine { freq, phase, amp } => {
                let s: f64 = x.iter().zip(freq).map(|(a, k)| a * k).sum();
                amp * (std::f64::consts::TAU * s + phase).cos()
            }
            Self::Tanh {
                axis,
                scale,
                shift,
                amp,
            } => amp * ((x[*axis] - shift) / scale).tanh(),
        }
    }

    /// The payoff `x ↦ f(x − y)`.
    pub fn translated(&self, y: &[f64]) -> Self {
        match self {
            Self::Constant { .. } => self.clone(),
            Self::GaussianBump { center, width, amp } => Self::GaussianBump {
                center: center.iter().zip(y).map(|(c, s)| c + s).collect(),
                width: *width,
                amp: *amp,
            },
            Self::Cosine { freq, phase, amp } => {
                let s: f64 = freq.iter().zip(y).map(|(k, v)| k * v).sum();
                Self::Cosine {
                    freq: freq.clone(),
                    phase: phase - std::f64::consts::TAU * s,
                    amp: *amp,
                }
            }
            Self::Tanh {
                axis,
                scale,
                shift,
                amp,
            } => Self::Tanh {
                axis: *axis,
                scale: *scale,
                shift: shift + y[*axis],
                amp: *amp,
            },
        }
    }

    /// Dimension the payoff expects, if it fixes one.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            Self::Constant { .. } | Self::Tanh { .. } => None,
            Self::GaussianBump { center, .. } => Some(center.len()),
            Self::Cosine { freq, .. } => Some(freq.len()),
        }
    }

    pub fn accepts_dimension(&self, d: usize) -> bool {
        match self {
            Self::Tanh { axis, .. } => *axis < d,
            _ => self.dimension().is_none_or(|n| n == d),
        }
    }
}
