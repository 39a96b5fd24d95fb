use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Slope of [`ActivationKind::LeakyRelu`] for negative inputs.
pub const LEAKY_RELU_SLOPE: f64 = 0.01;

/// Elementwise nonlinearity used between hidden layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Silu,
    Relu,
    Gelu,
    Tanh,
    Sigmoid,
    Softplus,
    #[serde(rename = "leakyrelu")]
    LeakyRelu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 7] = [
        ActivationKind::Silu,
        ActivationKind::Relu,
        ActivationKind::Gelu,
        ActivationKind::Tanh,
        ActivationKind::Sigmoid,
        ActivationKind::Softplus,
        ActivationKind::LeakyRelu,
    ];

    /// True when the first derivative is continuous everywhere.
    pub fn is_smooth(self) -> bool {
        !matches!(self, ActivationKind::Relu | ActivationKind::LeakyRelu)
    }

    /// Value and exact first derivative at `x`.
    pub fn eval(self, x: f64) -> (f64, f64) {
        (self.derivative(x, 0), self.derivative(x, 1))
    }

    /// The `order`-th derivative at `x` (order 0 is the function itself).
    ///
    /// Orders 0..=2 are available, which is what a gradient of a gradient
    /// needs. Piecewise-linear kinds use the convention f'(0) = 0 for ReLU
    /// and f'(0) = slope for LeakyReLU.
    pub fn derivative(self, x: f64, order: u8) -> f64 {
        assert!(
            order <= 2,
            "activation derivatives above second order are not supported"
        );
        match self {
            ActivationKind::Silu => {
                let s = sigmoid(x);
                match order {
                    0 => x * s,
                    1 => s * (1.0 + x * (1.0 - s)),
                    _ => s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s)),
                }
            }
            ActivationKind::Relu => match order {
                0 => x.max(0.0),
                1 if x > 0.0 => 1.0,
                _ => 0.0,
            },
            ActivationKind::LeakyRelu => match order {
                0 => {
                    if x > 0.0 {
                        x
                    } else {
                        LEAKY_RELU_SLOPE * x
                    }
                }
                1 => {
                    if x > 0.0 {
                        1.0
                    } else {
                        LEAKY_RELU_SLOPE
                    }
                }
                _ => 0.0,
            },
            ActivationKind::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
                match order {
                    0 => x * cdf,
                    1 => cdf + x * pdf,
                    _ => pdf * (2.0 - x * x),
                }
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                match order {
                    0 => t,
                    1 => 1.0 - t * t,
                    _ => -2.0 * t * (1.0 - t * t),
                }
            }
            ActivationKind::Sigmoid => {
                let s = sigmoid(x);
                match order {
                    0 => s,
                    1 => s * (1.0 - s),
                    _ => s * (1.0 - s) * (1.0 - 2.0 * s),
                }
            }
            ActivationKind::Softplus => match order {
                0 => x.max(0.0) + (-x.abs()).exp().ln_1p(),
                1 => sigmoid(x),
                _ => {
                    let s = sigmoid(x);
                    s * (1.0 - s)
                }
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Silu => "silu",
            ActivationKind::Relu => "relu",
            ActivationKind::Gelu => "gelu",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Softplus => "softplus",
            ActivationKind::LeakyRelu => "leakyrelu",
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase().replace(['-', '_'], "");
        ActivationKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::config(format!("unknown activation '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_points() {
        assert_eq!(ActivationKind::Sigmoid.eval(0.0), (0.5, 0.25));
        assert_eq!(ActivationKind::Relu.eval(-1.0), (0.0, 0.0));
        let (v, d) = ActivationKind::Softplus.eval(0.0);
        assert_abs_diff_eq!(v, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(d, 0.5, epsilon = 1e-15);
        assert_eq!(ActivationKind::Silu.eval(0.0).0, 0.0);
        assert_eq!(ActivationKind::LeakyRelu.eval(-2.0), (-0.02, 0.01));
        // GELU(1) = Phi(1) with the exact erf form.
        assert_abs_diff_eq!(
            ActivationKind::Gelu.eval(1.0).0,
            0.841_344_746_068_542_9,
            epsilon = 1e-12
        );
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-5;
        for kind in ActivationKind::ALL {
            for &x in &[-3.1, -0.7, 0.35, 1.9, 4.2] {
                for order in 0..2u8 {
                    let fd = (kind.derivative(x + h, order) - kind.derivative(x - h, order))
                        / (2.0 * h);
                    let exact = kind.derivative(x, order + 1);
                    assert!(
                        (fd - exact).abs() <= 1e-7 * (1.0 + exact.abs()),
                        "{kind} order {order} at {x}: fd {fd} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        assert_eq!(ActivationKind::Softplus.eval(800.0).0, 800.0);
        assert!(ActivationKind::Softplus.eval(-800.0).0 >= 0.0);
    }

    #[test]
    fn parse_names() {
        assert_eq!("SiLU".parse::<ActivationKind>().unwrap(), ActivationKind::Silu);
        assert_eq!(
            "leaky_relu".parse::<ActivationKind>().unwrap(),
            ActivationKind::LeakyRelu
        );
        assert!("swish2".parse::<ActivationKind>().is_err());
    }
}
