//! f-divergences and their convex conjugates.
//!
//! Each divergence `D_phi(q || p) = sum_x p(x) phi(q(x) / p(x))` comes with
//! the conjugate `phi*` and its derivative, which the variational form
//! `D_phi(q || p) = max_f  E_q[f] - E_p[phi*(f)]`
//! needs, plus the closed-form maximizer of that inner problem for exact
//! tabular evaluation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FDivergence {
    /// `phi(x) = (x - 1)^2`.
    ChiSquared,
    /// `phi(x) = x ln x`.
    Kl,
    /// `phi(x) = x ln x - (x + 1) ln((x + 1) / 2)`.
    Js,
}

impl FDivergence {
    pub const ALL: [FDivergence; 3] = [FDivergence::ChiSquared, FDivergence::Kl, FDivergence::Js];

    pub fn name(self) -> &'static str {
        match self {
            FDivergence::ChiSquared => "chi2",
            FDivergence::Kl => "kl",
            FDivergence::Js => "js",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "chi2" => Ok(FDivergence::ChiSquared),
            "kl" => Ok(FDivergence::Kl),
            "js" => Ok(FDivergence::Js),
            other => Err(Error::UnknownName {
                kind: "divergence",
                name: other.to_string(),
            }),
        }
    }

    /// `phi(x)` for `x >= 0`, using the continuous extension at `x = 0`.
    pub fn phi<S: Scalar>(self, x: S) -> Result<S> {
        if x < S::zero() || !x.is_finite() {
            return Err(Error::InvalidArgument {
                what: "phi argument",
                requirement: "finite and nonnegative",
                value: x.to_f64(),
            });
        }
        Ok(match self {
            FDivergence::ChiSquared => {
                let d = x - S::one();
                d * d
            }
            FDivergence::Kl => {
                if x == S::zero() {
                    S::zero()
                } else {
                    x * x.ln()
                }
            }
            FDivergence::Js => {
                let half = S::of(0.5);
                let xlnx = if x == S::zero() { S::zero() } else { x * x.ln() };
                xlnx - (x + S::one()) * (half * (x + S::one())).ln()
            }
        })
    }

    /// Convex conjugate `phi*(y) = sup_x (x y - phi(x))`. For `Js` the
    /// conjugate is finite only below `ln 2`.
    pub fn phi_star<S: Scalar>(self, y: S) -> Result<S> {
        match self {
            FDivergence::ChiSquared => Ok(y + y * y * S::of(0.25)),
            FDivergence::Kl => Ok((y - S::one()).exp()),
            FDivergence::Js => {
                let ln2 = S::of(core::f64::consts::LN_2);
                if y >= ln2 {
                    return Err(Error::ConjugateDomain {
                        divergence: self.name(),
                        y: y.to_f64(),
                        limit: ln2.to_f64(),
                    });
                }
                // -ln(2 - e^y) written as -ln 2 - ln(1 - e^(y - ln 2)) to
                // stay accurate as y approaches the boundary.
                let d = (y - ln2).exp_m1();
                Ok(-(ln2 + (-d).ln()))
            }
        }
    }

    /// `d/dy phi*(y)`, which is also the maximizing `x` in the conjugate.
    pub fn phi_star_deriv<S: Scalar>(self, y: S) -> Result<S> {
        match self {
            FDivergence::ChiSquared => Ok(S::one() + y * S::of(0.5)),
            FDivergence::Kl => Ok((y - S::one()).exp()),
            FDivergence::Js => {
                let ln2 = S::of(core::f64::consts::LN_2);
                if y >= ln2 {
                    return Err(Error::ConjugateDomain {
                        divergence: self.name(),
                        y: y.to_f64(),
                        limit: ln2.to_f64(),
                    });
                }
                let ey = y.exp();
                Ok(ey / (S::of(2.0) - ey))
            }
        }
    }

    /// Maximizer `f` of `r f - phi*(f)` for a ratio `r > 0`; evaluating the
    /// variational form at this point recovers `phi(r)` exactly.
    pub fn closed_form_dual<S: Scalar>(self, r: S) -> Option<S> {
        if r <= S::zero() {
            return None;
        }
        Some(match self {
            FDivergence::ChiSquared => S::of(2.0) * (r - S::one()),
            FDivergence::Kl => S::one() + r.ln(),
            FDivergence::Js => (S::of(2.0) * r / (S::one() + r)).ln(),
        })
    }

    /// Upper end of the conjugate's domain, when it is bounded.
    pub fn conjugate_domain_max<S: Scalar>(self) -> Option<S> {
        match self {
            FDivergence::Js => Some(S::of(core::f64::consts::LN_2)),
            _ => None,
        }
    }
}

impl std::fmt::Display for FDivergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `D_phi(q || p)` over a shared finite support. States with `p = q = 0`
/// contribute nothing; `p = 0 < q` makes the divergence undefined.
pub fn eval_divergence<S: Scalar>(
    divergence: FDivergence,
    q: &crate::markov::Distribution<S>,
    p: &crate::markov::Distribution<S>,
) -> Result<S> {
    if q.len() != p.len() {
        return Err(Error::DimensionMismatch {
            context: format!("divergence between supports of {} and {}", q.len(), p.len()),
        });
    }
    let mut acc = S::zero();
    for i in 0..q.len() {
        let (qi, pi) = (q.get(i), p.get(i));
        if pi == S::zero() {
            if qi > S::zero() {
                return Err(Error::AbsoluteContinuity {
                    index: i,
                    q: qi.to_f64(),
                });
            }
            continue;
        }
        acc = acc + pi * divergence.phi(qi / pi)?;
    }
    Ok(acc)
}
