//! The three radial kernels, their derivatives in the signed argument
//! u = (x - s)/h, and their antiderivatives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RbfKind {
    /// exp(-u²)
    Gaussian,
    /// (1 + |u|)^{-5}
    #[serde(alias = "imq", alias = "inverse_multiquadric")]
    InverseMultiquadric,
    /// (1 - |u|)³ (3|u| + 1) on |u| ≤ 1
    Wendland,
}

impl RbfKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RbfKind::Gaussian => "gaussian",
            RbfKind::InverseMultiquadric => "inversemultiquadric",
            RbfKind::Wendland => "wendland",
        }
    }

    /// (k, k', k'') at u.
    #[inline]
    pub fn eval<T: Real>(self, u: T) -> (T, T, T) {
        let [a, b, c, _] = self.eval3(u);
        (a, b, c)
    }

    /// (k, k', k'', k''') at u. Odd derivatives of the even extension vanish at 0.
    #[inline]
    pub fn eval3<T: Real>(self, u: T) -> [T; 4] {
        let c = |x: f64| T::of(x);
        match self {
            RbfKind::Gaussian => {
                let u2 = u * u;
                let e = (-u2).exp();
                [e, c(-2.0) * u * e, (c(4.0) * u2 - c(2.0)) * e, (c(-8.0) * u2 + c(12.0)) * u * e]
            }
            RbfKind::InverseMultiquadric => {
                let sg = sign(u);
                let q = T::one() / (T::one() + u.abs());
                let q2 = q * q;
                let q5 = q2 * q2 * q;
                [q5, c(-5.0) * sg * q5 * q, c(30.0) * q5 * q2, c(-210.0) * sg * q5 * q2 * q]
            }
            RbfKind::Wendland => {
                let t = u.abs();
                if t > T::one() {
                    return [T::zero(); 4];
                }
                let u2 = u * u;
                [
                    T::one() - c(6.0) * u2 + c(8.0) * u2 * t - c(3.0) * u2 * u2,
                    u * (c(-12.0) + c(24.0) * t - c(12.0) * u2),
                    c(-12.0) + c(48.0) * t - c(36.0) * u2,
                    c(48.0) * sign(u) - c(72.0) * u,
                ]
            }
        }
    }

    /// ∫_a^b k(u) du, in f64.
    pub fn integral(self, a: f64, b: f64) -> f64 {
        match self {
            RbfKind::Gaussian => {
                let k = 0.5 * std::f64::consts::PI.sqrt();
                // erfc keeps relative accuracy when both limits sit in the same tail
                if a >= 0.0 {
                    k * (libm::erfc(a) - libm::erfc(b))
                } else if b <= 0.0 {
                    k * (libm::erfc(-b) - libm::erfc(-a))
                } else {
                    k * (libm::erf(b) - libm::erf(a))
                }
            }
            RbfKind::InverseMultiquadric => {
                let tail = |t: f64| (1.0 + t).powi(-4) / 4.0;
                if a >= 0.0 {
                    tail(a) - tail(b)
                } else if b <= 0.0 {
                    tail(-b) - tail(-a)
                } else {
                    0.5 - tail(b) - tail(-a)
                }
            }
            RbfKind::Wendland => wendland_antiderivative(b) - wendland_antiderivative(a),
        }
    }
}

fn wendland_antiderivative(u: f64) -> f64 {
    let t = u.abs().min(1.0);
    let t2 = t * t;
    let w = t - 2.0 * t2 * t + 2.0 * t2 * t2 - 0.6 * t2 * t2 * t;
    w.copysign(u)
}

#[inline]
fn sign<T: Real>(u: T) -> T {
    if u > T::zero() {
        T::one()
    } else if u < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

impl fmt::Display for RbfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RbfKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(RbfKind::Gaussian),
            "inversemultiquadric" | "inverse_multiquadric" | "imq" => Ok(RbfKind::InverseMultiquadric),
            "wendland" => Ok(RbfKind::Wendland),
            _ => Err(Error::Config(format!("unknown kernel `{s}`"))),
        }
    }
}

/// Unnormalized 1D integral of a basis: ∫_lo^hi k((x - s)/h) dx.
pub fn analytic_integral_1d(kind: RbfKind, s: f64, h: f64, lo: f64, hi: f64) -> f64 {
    h * kind.integral((lo - s) / h, (hi - s) / h)
}
