use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance softening for the Charge and Orbital laws.
pub const DEFAULT_SOFTENING: f64 = 0.01;

/// Analytic pairwise interaction laws.
///
/// `F_ij` is the force on particle `i` exerted by particle `j`, `P_ij` the
/// potential incurred by `j` on `i`, and `n_ij` the unit vector from `i`
/// towards `j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum ForceLaw {
    /// `F = k (r - L) n`, `P = k (r - L)^2 / 2`
    Spring { k: f64, rest_length: f64 },
    /// `F = -c q_i q_j n / (r + delta)^2`, `P = c q_i q_j / (r + delta)`
    Charge { c: f64, softening: f64 },
    /// `F = m_i m_j n / (r + delta)`, `P = m_i m_j ln(r + delta)`
    Orbital { softening: f64 },
    /// Zero for `r < threshold`, otherwise `F = (r - 1) n`,
    /// `P = (r - 1)^2 / 2`.
    Discontinuous { threshold: f64 },
}

/// Properties of one endpoint of a pair interaction.
#[derive(Clone, Copy, Debug)]
pub struct Body<'a> {
    pub position: &'a [f64],
    pub mass: f64,
    pub charge: f64,
}

impl ForceLaw {
    pub fn spring() -> Self {
        ForceLaw::Spring {
            k: 2.0,
            rest_length: 1.0,
        }
    }

    pub fn charge() -> Self {
        ForceLaw::Charge {
            c: 1.0,
            softening: DEFAULT_SOFTENING,
        }
    }

    pub fn orbital() -> Self {
        ForceLaw::Orbital {
            softening: DEFAULT_SOFTENING,
        }
    }

    pub fn discontinuous() -> Self {
        ForceLaw::Discontinuous { threshold: 2.0 }
    }

    pub fn all_defaults() -> [ForceLaw; 4] {
        [
            Self::spring(),
            Self::charge(),
            Self::orbital(),
            Self::discontinuous(),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ForceLaw::Spring { .. } => "spring",
            ForceLaw::Charge { .. } => "charge",
            ForceLaw::Orbital { .. } => "orbital",
            ForceLaw::Discontinuous { .. } => "discontinuous",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ForceLaw::Spring { k, rest_length } => k > 0.0 && rest_length > 0.0,
            ForceLaw::Charge { c, softening } => c > 0.0 && softening >= 0.0,
            ForceLaw::Orbital { softening } => softening >= 0.0,
            ForceLaw::Discontinuous { threshold } => threshold > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid constants for {self:?}")))
        }
    }

    /// True when the force is the exact negative gradient of the potential
    /// everywhere.
    pub fn is_differentiable(&self) -> bool {
        !matches!(self, ForceLaw::Discontinuous { .. })
    }

    /// Scalar force along `n_ij` and the potential, as functions of the
    /// unsoftened distance `r`.
    fn radial(&self, r: f64, a: &Body, b: &Body) -> Option<(f64, f64)> {
        match *self {
            ForceLaw::Spring { k, rest_length } => {
                let stretch = r - rest_length;
                Some((k * stretch, 0.5 * k * stretch * stretch))
            }
            ForceLaw::Charge { c, softening } => {
                let rs = r + softening;
                if rs == 0.0 {
                    return None;
                }
                let qq = c * a.charge * b.charge;
                Some((-qq / (rs * rs), qq / rs))
            }
            ForceLaw::Orbital { softening } => {
                let rs = r + softening;
                if rs == 0.0 {
                    return None;
                }
                let mm = a.mass * b.mass;
                Some((mm / rs, mm * rs.ln()))
            }
            ForceLaw::Discontinuous { threshold } => {
                if r < threshold {
                    Some((0.0, 0.0))
                } else {
                    let stretch = r - 1.0;
                    Some((stretch, 0.5 * stretch * stretch))
                }
            }
        }
    }

    /// Force on `a` from `b` written into `out`, and the pair potential.
    ///
    /// `displacement` is `r_b - r_a` (possibly under a periodic convention).
    /// Returns `None` when the pair is singular.
    pub fn evaluate_displacement(
        &self,
        displacement: &[f64],
        a: &Body,
        b: &Body,
        out: &mut [f64],
    ) -> Option<f64> {
        let r = displacement.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (magnitude, potential) = self.radial(r, a, b)?;
        if r == 0.0 {
            // Direction undefined; only a vanishing force is acceptable.
            if magnitude != 0.0 {
                return None;
            }
            out.iter_mut().for_each(|o| *o = 0.0);
        } else {
            let scale = magnitude / r;
            for (o, d) in out.iter_mut().zip(displacement) {
                *o = scale * d;
            }
        }
        Some(potential)
    }

    /// `F_ij`: force on particle `i` from particle `j`.
    pub fn pairwise_force(&self, i: &Body, j: &Body) -> Result<Vec<f64>> {
        let disp = displacement(i.position, j.position);
        let mut out = vec![0.0; disp.len()];
        self.evaluate_displacement(&disp, i, j, &mut out)
            .ok_or(Error::Singularity { i: 0, j: 1 })?;
        Ok(out)
    }

    /// `P_ij`: potential incurred by particle `j` on particle `i`.
    pub fn pairwise_potential(&self, i: &Body, j: &Body) -> Result<f64> {
        let disp = displacement(i.position, j.position);
        let mut out = vec![0.0; disp.len()];
        self.evaluate_displacement(&disp, i, j, &mut out)
            .ok_or(Error::Singularity { i: 0, j: 1 })
    }
}

pub(crate) fn displacement(from: &[f64], to: &[f64]) -> Vec<f64> {
    to.iter().zip(from).map(|(t, f)| t - f).collect()
}

impl fmt::Display for ForceLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ForceLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spring" => Ok(Self::spring()),
            "charge" => Ok(Self::charge()),
            "orbital" => Ok(Self::orbital()),
            "discontinuous" | "discnt" => Ok(Self::discontinuous()),
            other => Err(Error::config(format!("unknown force law '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn body(position: &[f64], mass: f64, charge: f64) -> Body<'_> {
        Body {
            position,
            mass,
            charge,
        }
    }

    #[test]
    fn spring_reference_values() {
        let law = ForceLaw::spring();
        let a = body(&[0.0, 0.0], 1.0, 0.0);
        let at_rest = body(&[1.0, 0.0], 1.0, 0.0);
        assert_eq!(law.pairwise_force(&a, &at_rest).unwrap(), vec![0.0, 0.0]);
        assert_eq!(law.pairwise_potential(&a, &at_rest).unwrap(), 0.0);
        let stretched = body(&[0.0, 2.0], 1.0, 0.0);
        // Attractive: points from a towards b with magnitude k(r - L) = 2.
        assert_eq!(law.pairwise_force(&a, &stretched).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn discontinuous_branches() {
        let law = ForceLaw::discontinuous();
        let a = body(&[0.0, 0.0], 1.0, 0.0);
        let near = body(&[1.5, 0.0], 1.0, 0.0);
        assert_eq!(law.pairwise_force(&a, &near).unwrap(), vec![0.0, 0.0]);
        let far = body(&[-3.0, 0.0], 1.0, 0.0);
        assert_eq!(law.pairwise_force(&a, &far).unwrap(), vec![-2.0, 0.0]);
        // Exactly at the threshold the outer branch applies.
        let edge = body(&[2.0, 0.0], 1.0, 0.0);
        assert_eq!(law.pairwise_force(&a, &edge).unwrap(), vec![1.0, 0.0]);
        assert_eq!(law.pairwise_potential(&a, &edge).unwrap(), 0.5);
    }

    #[test]
    fn softened_potentials() {
        let a = body(&[0.0, 0.0], 1.0, 1.0);
        let b = body(&[1.0, 0.0], 1.0, -1.0);
        assert_abs_diff_eq!(
            ForceLaw::charge().pairwise_potential(&a, &b).unwrap(),
            -1.0 / 1.01,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            ForceLaw::orbital().pairwise_potential(&a, &b).unwrap(),
            1.01f64.ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(1.01f64.ln(), 0.00995, epsilon = 1e-5);
    }

    #[test]
    fn charge_sign_convention() {
        // Like charges repel: force on a points away from b.
        let a = body(&[0.0, 0.0, 0.0], 1.0, 1.0);
        let b = body(&[0.0, 0.0, 1.0], 1.0, 1.0);
        let f = ForceLaw::charge().pairwise_force(&a, &b).unwrap();
        assert!(f[2] < 0.0);
    }

    #[test]
    fn coincident_particles_without_softening_are_singular() {
        let law = ForceLaw::Charge {
            c: 1.0,
            softening: 0.0,
        };
        let a = body(&[0.5, 0.5], 1.0, 1.0);
        assert!(matches!(
            law.pairwise_force(&a, &a),
            Err(Error::Singularity { .. })
        ));
        // Spring at r = 0 has a nonzero force with no direction.
        assert!(ForceLaw::spring().pairwise_force(&a, &a).is_err());
    }

    #[test]
    fn force_is_negative_potential_gradient() {
        let h = 1e-6;
        let pj = [0.3, -0.8];
        for law in ForceLaw::all_defaults() {
            if !law.is_differentiable() {
                continue;
            }
            for pi in [[1.7, 0.4], [-0.2, 0.9], [0.9, -2.6]] {
                let j = body(&pj, 1.3, -0.6);
                let f = law.pairwise_force(&body(&pi, 0.7, 0.9), &j).unwrap();
                for k in 0..2 {
                    let mut plus = pi;
                    let mut minus = pi;
                    plus[k] += h;
                    minus[k] -= h;
                    let pp = law.pairwise_potential(&body(&plus, 0.7, 0.9), &j).unwrap();
                    let pm = law.pairwise_potential(&body(&minus, 0.7, 0.9), &j).unwrap();
                    let fd = -(pp - pm) / (2.0 * h);
                    assert!(
                        (fd - f[k]).abs() <= 1e-6 * (1.0 + f[k].abs()),
                        "{law}: {fd} vs {}",
                        f[k]
                    );
                }
            }
        }
    }
}
