//! Generalized Gamma distribution `GG(mu, sigma, nu)`.
//!
//! With `z = (y / mu)^nu` and `theta = 1 / (sigma^2 nu^2)` the density is
//!
//! ```text
//! f(y) = |nu| theta^theta z^theta exp(-z theta) / (Gamma(theta) y),   y > 0
//! ```
//!
//! so `theta * z` is Gamma(theta, 1) distributed. Everything below is built
//! on that change of variables.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::special::{self, SpecialError};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum DistError {
    #[error("invalid parameters mu={mu}, sigma={sigma}, nu={nu}")]
    InvalidParams { mu: f64, sigma: f64, nu: f64 },
    #[error("value {0} is outside the support (0, inf)")]
    OutsideSupport(f64),
    #[error("probability {0} is outside (0, 1)")]
    InvalidProbability(f64),
    #[error("mean undefined: theta = {theta} does not exceed -1/nu = {bound}")]
    MeanUndefined { theta: f64, bound: f64 },
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// Parameters of a generalized Gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GGParams {
    pub mu: f64,
    pub sigma: f64,
    pub nu: f64,
}

impl GGParams {
    pub fn new(mu: f64, sigma: f64, nu: f64) -> Result<Self, DistError> {
        let params = GGParams { mu, sigma, nu };
        let theta = params.theta();
        let ok = mu > 0.0
            && mu.is_finite()
            && sigma > 0.0
            && sigma.is_finite()
            && nu != 0.0
            && nu.is_finite()
            && theta > 0.0
            && theta.is_finite();
        if ok {
            Ok(params)
        } else {
            Err(DistError::InvalidParams { mu, sigma, nu })
        }
    }

    /// Build from the log-link scale used by the mixed model.
    pub fn from_links(log_mu: f64, log_sigma: f64, nu: f64) -> Result<Self, DistError> {
        Self::new(log_mu.exp(), log_sigma.exp(), nu)
    }

    #[inline]
    pub fn theta(&self) -> f64 {
        1.0 / (self.sigma * self.sigma * self.nu * self.nu)
    }

    pub fn log_density(&self, y: f64) -> Result<f64, DistError> {
        if !(y > 0.0) || !y.is_finite() {
            return Err(DistError::OutsideSupport(y));
        }
        Ok(log_density_unchecked(self.mu.ln(), self.theta(), self.nu, y.ln()))
    }

    pub fn density(&self, y: f64) -> Result<f64, DistError> {
        self.log_density(y).map(f64::exp)
    }

    /// `(P(Y <= y), P(Y > y))`, each tail computed directly.
    pub fn cdf_pair(&self, y: f64) -> (f64, f64) {
        if !(y > 0.0) {
            return (0.0, 1.0);
        }
        if y.is_infinite() {
            return (1.0, 0.0);
        }
        let theta = self.theta();
        let z = (self.nu * (y.ln() - self.mu.ln())).exp();
        let (p, q) = special::gamma_pq(theta, theta * z).unwrap_or((1.0, 0.0));
        if self.nu > 0.0 {
            (p, q)
        } else {
            (q, p)
        }
    }

    /// `P(Y <= y)`; zero left of the support.
    pub fn cdf(&self, y: f64) -> f64 {
        self.cdf_pair(y).0
    }

    pub fn sf(&self, y: f64) -> f64 {
        self.cdf_pair(y).1
    }

    pub fn quantile(&self, p: f64) -> Result<f64, DistError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(DistError::InvalidProbability(p));
        }
        let theta = self.theta();
        // For nu < 0, y is decreasing in the Gamma variate.
        let g = if self.nu > 0.0 {
            special::inv_gamma_p(theta, p)?
        } else {
            special::inv_gamma_q(theta, p)?
        };
        Ok(self.transform(g, theta))
    }

    /// Draw via `mu (G / theta)^(1 / nu)` with `G ~ Gamma(theta, 1)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let theta = self.theta();
        let gamma = Gamma::new(theta, 1.0).expect("theta validated at construction");
        self.transform(gamma.sample(rng), theta)
    }

    #[inline]
    fn transform(&self, g: f64, theta: f64) -> f64 {
        self.mu * ((g / theta).ln() / self.nu).exp()
    }

    /// `mu Gamma(theta + 1/nu) / (theta^(1/nu) Gamma(theta))`, when it exists.
    pub fn mean(&self) -> Result<f64, DistError> {
        let theta = self.theta();
        let inv_nu = 1.0 / self.nu;
        if !(theta > -inv_nu) {
            return Err(DistError::MeanUndefined {
                theta,
                bound: -inv_nu,
            });
        }
        let log_ratio = special::ln_gamma(theta + inv_nu) - special::ln_gamma(theta);
        Ok(self.mu * (log_ratio - inv_nu * theta.ln()).exp())
    }
}

/// `theta ln theta - ln Gamma(theta) - theta`, formed from the Stirling
/// remainder once theta is large enough for the direct form to cancel.
pub(crate) fn theta_norm(theta: f64) -> f64 {
    if theta >= 15.0 {
        0.5 * (theta / std::f64::consts::TAU).ln() - special::stirlerr(theta)
    } else {
        theta * theta.ln() - special::ln_gamma(theta) - theta
    }
}

/// Log density on raw working quantities; callers guarantee `theta > 0`,
/// `nu != 0` and finite `ln_y`.
///
/// Rearranged as `ln|nu| + K(theta) - theta (e^w - 1 - w) - ln y` with
/// `w = nu (ln y - ln mu)`, which stays finite for very large theta.
pub(crate) fn log_density_unchecked(ln_mu: f64, theta: f64, nu: f64, ln_y: f64) -> f64 {
    let w = nu * (ln_y - ln_mu);
    nu.abs().ln() + theta_norm(theta) - theta * special::expm1mx(w) - ln_y
}
