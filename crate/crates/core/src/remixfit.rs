//! Generalized Gamma model with a venue random effect on `log mu` and a
//! heat random effect (nested in venue) on `log sigma`:
//!
//! ```text
//! Y_ijk ~ GG(mu_ij, sigma_ij, nu)
//! log mu_ijk    = beta0  + v_i,      v_i   ~ N(0, tau_v^2)
//! log sigma_ijk = gamma0 + h_{i/j},  h_i/j ~ N(0, tau_h^2)
//! ```
//!
//! Fitting maximizes the penalized log-likelihood
//! `Σ log f - Σ v²/(2 tau_v²) - Σ h²/(2 tau_h²)` by block-coordinate
//! ascent. Each random-effect block (intercept plus effects) is solved by
//! Newton / Fisher scoring on its arrow-shaped Hessian with step halving.
//! `nu` takes a safeguarded one-dimensional Newton step. Variance
//! components follow the effective-degrees-of-freedom rule
//! `tau² = Σ e² / Σ_r I_r / (I_r + 1/tau²)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ModelDataset;
use crate::gengamma::{self, DistError, GGParams};
use crate::rng;
use crate::special::{self, ln_minus_digamma, norm_quantile, x_trigamma_m1};

const MARGINAL_SHARD: usize = 1 << 16;

#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error("dataset has {0} observations; the model needs at least 2 venues and 2 heats")]
    TooSmall(usize),
    #[error("model and dataset index structures differ: {0}")]
    StructureMismatch(String),
    #[error("non-finite log-likelihood at the starting values")]
    BadStart,
    #[error(transparent)]
    Dist(#[from] DistError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// Stop when the penalized log-likelihood changes by less than this
    /// between outer iterations.
    pub tol: f64,
    pub max_iter: usize,
    /// Lower bound for both random-effect standard deviations.
    pub tau_floor: f64,
    pub initial_tau: f64,
    pub initial_nu: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tol: 1e-6,
            max_iter: 200,
            tau_floor: 1e-6,
            initial_tau: 0.1,
            initial_nu: -1.0,
        }
    }
}

/// Population-level parameters; everything needed to simulate the
/// marginal scale mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub beta0: f64,
    pub gamma0: f64,
    pub nu: f64,
    pub tau_v: f64,
    pub tau_h: f64,
}

impl PopulationParams {
    pub fn new(beta0: f64, gamma0: f64, nu: f64, tau_v: f64, tau_h: f64) -> Result<Self, DistError> {
        GGParams::from_links(beta0, gamma0, nu)?;
        if !(tau_v >= 0.0 && tau_h >= 0.0 && tau_v.is_finite() && tau_h.is_finite()) {
            return Err(DistError::InvalidParams {
                mu: beta0.exp(),
                sigma: gamma0.exp(),
                nu,
            });
        }
        Ok(PopulationParams {
            beta0,
            gamma0,
            nu,
            tau_v,
            tau_h,
        })
    }

    /// GG distribution at zero random effects.
    pub fn base(&self) -> GGParams {
        GGParams {
            mu: self.beta0.exp(),
            sigma: self.gamma0.exp(),
            nu: self.nu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VenueEffect {
    pub year: u16,
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatEffect {
    pub year: u16,
    pub heat_id: String,
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    /// Penalized log-likelihood before and after the coordinate sweep, both
    /// at the variance components in force during the sweep.
    pub start: f64,
    pub end: f64,
    pub tau_v: f64,
    pub tau_h: f64,
}

/// A fitted model; serializes to JSON at full precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedGGModel {
    pub beta0: f64,
    pub gamma0: f64,
    pub nu: f64,
    pub tau_v: f64,
    pub tau_h: f64,
    pub se_beta0: Option<f64>,
    pub se_gamma0: Option<f64>,
    pub se_nu: Option<f64>,
    pub venue_effects: Vec<VenueEffect>,
    pub heat_effects: Vec<HeatEffect>,
    pub loglik: Option<f64>,
    pub loglik_penalized: Option<f64>,
    pub converged: bool,
    pub n_iterations: usize,
    pub n_observations: usize,
    pub tau_v_at_boundary: bool,
    pub tau_h_at_boundary: bool,
    pub trace: Vec<IterationTrace>,
}

impl MixedGGModel {
    pub fn population(&self) -> PopulationParams {
        PopulationParams {
            beta0: self.beta0,
            gamma0: self.gamma0,
            nu: self.nu,
            tau_v: self.tau_v,
            tau_h: self.tau_h,
        }
    }

    /// A model carrying only population parameters, e.g. published
    /// estimates, with no fitted effects.
    pub fn from_population(p: PopulationParams) -> Self {
        MixedGGModel {
            beta0: p.beta0,
            gamma0: p.gamma0,
            nu: p.nu,
            tau_v: p.tau_v,
            tau_h: p.tau_h,
            se_beta0: None,
            se_gamma0: None,
            se_nu: None,
            venue_effects: Vec::new(),
            heat_effects: Vec::new(),
            loglik: None,
            loglik_penalized: None,
            converged: false,
            n_iterations: 0,
            n_observations: 0,
            tau_v_at_boundary: false,
            tau_h_at_boundary: false,
            trace: Vec::new(),
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    fn check_structure(&self, data: &ModelDataset) -> Result<(), FitError> {
        if self.venue_effects.len() != data.venues.len() || self.heat_effects.len() != data.heats.len() {
            return Err(FitError::StructureMismatch(format!(
                "model has {} venues / {} heats, data has {} / {}",
                self.venue_effects.len(),
                self.heat_effects.len(),
                data.venues.len(),
                data.heats.len()
            )));
        }
        for (v, &year) in self.venue_effects.iter().zip(&data.venues) {
            if v.year != year {
                return Err(FitError::StructureMismatch(format!("venue {} vs {}", v.year, year)));
            }
        }
        for (h, key) in self.heat_effects.iter().zip(&data.heats) {
            if h.heat_id != key.heat_id || h.year != data.venues[key.venue] {
                return Err(FitError::StructureMismatch(format!("heat {} vs {}", h.heat_id, key.heat_id)));
            }
        }
        Ok(())
    }

    /// Conditional GG parameters of observation `idx` in `data`.
    pub fn observation_params(&self, data: &ModelDataset, idx: usize) -> GGParams {
        let o = &data.observations[idx];
        GGParams {
            mu: (self.beta0 + self.venue_effects[o.venue].effect).exp(),
            sigma: (self.gamma0 + self.heat_effects[o.heat].effect).exp(),
            nu: self.nu,
        }
    }
}

/// Working state of the optimizer.
#[derive(Clone)]
struct State {
    ln_y: Vec<f64>,
    venue_of: Vec<usize>,
    heat_of: Vec<usize>,
    venue_groups: Vec<Vec<usize>>,
    heat_groups: Vec<Vec<usize>>,
    beta0: f64,
    gamma0: f64,
    nu: f64,
    v: Vec<f64>,
    h: Vec<f64>,
    tau_v: f64,
    tau_h: f64,
}

/// Per-group contribution `(loglik, score, information)` at linear
/// predictor `eta`.
type GroupEval<'s> = dyn Fn(usize, f64) -> (f64, f64, f64) + 's;

impl State {
    fn new(data: &ModelDataset, config: &FitConfig) -> Self {
        let ln_y: Vec<f64> = data.values().map(f64::ln).collect();
        let n = ln_y.len() as f64;
        let mean = data.values().sum::<f64>() / n;
        let var = data.values().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let cv = (var.sqrt() / mean).max(1e-3);
        let mut venue_groups = vec![Vec::new(); data.venue_count()];
        let mut heat_groups = vec![Vec::new(); data.heat_count()];
        for (i, o) in data.observations.iter().enumerate() {
            venue_groups[o.venue].push(i);
            heat_groups[o.heat].push(i);
        }
        State {
            venue_of: data.observations.iter().map(|o| o.venue).collect(),
            heat_of: data.observations.iter().map(|o| o.heat).collect(),
            ln_y,
            venue_groups,
            heat_groups,
            beta0: mean.ln(),
            gamma0: cv.ln(),
            nu: config.initial_nu,
            v: vec![0.0; data.venue_count()],
            h: vec![0.0; data.heat_count()],
            tau_v: config.initial_tau,
            tau_h: config.initial_tau,
        }
    }

    #[inline]
    fn ln_mu(&self, i: usize) -> f64 {
        self.beta0 + self.v[self.venue_of[i]]
    }

    #[inline]
    fn ln_sigma(&self, i: usize) -> f64 {
        self.gamma0 + self.h[self.heat_of[i]]
    }

    fn loglik_with_nu(&self, nu: f64) -> f64 {
        (0..self.ln_y.len())
            .map(|i| {
                let theta = theta_of(self.ln_sigma(i), nu);
                gengamma::log_density_unchecked(self.ln_mu(i), theta, nu, self.ln_y[i])
            })
            .sum()
    }

    fn loglik(&self) -> f64 {
        self.loglik_with_nu(self.nu)
    }

    fn penalty(&self) -> f64 {
        let sv = self.v.iter().map(|e| e * e).sum::<f64>();
        let sh = self.h.iter().map(|e| e * e).sum::<f64>();
        sv / (2.0 * self.tau_v * self.tau_v) + sh / (2.0 * self.tau_h * self.tau_h)
    }

    fn penalized(&self) -> f64 {
        self.loglik() - self.penalty()
    }

    /// Venue contribution as a function of `eta = log mu` for that venue.
    fn venue_eval(&self, g: usize, eta: f64) -> (f64, f64, f64) {
        let nu = self.nu;
        let (mut ll, mut score, mut info) = (0.0, 0.0, 0.0);
        for &i in &self.venue_groups[g] {
            let theta = theta_of(self.ln_sigma(i), nu);
            let w = nu * (self.ln_y[i] - eta);
            let z = w.exp();
            ll += gengamma::log_density_unchecked(eta, theta, nu, self.ln_y[i]);
            score += theta * nu * (z - 1.0);
            info += theta * nu * nu * z;
        }
        (ll, score, info)
    }

    /// Heat contribution as a function of `eta = log sigma` for that heat.
    /// Uses expected information, which is always positive.
    fn heat_eval(&self, g: usize, eta: f64) -> (f64, f64, f64) {
        let nu = self.nu;
        let theta = theta_of(eta, nu);
        let lead = ln_minus_digamma(theta);
        let (mut ll, mut score) = (0.0, 0.0);
        let members = &self.heat_groups[g];
        for &i in members {
            let ln_mu = self.ln_mu(i);
            let w = nu * (self.ln_y[i] - ln_mu);
            ll += gengamma::log_density_unchecked(ln_mu, theta, nu, self.ln_y[i]);
            score += -2.0 * theta * (lead - special::expm1mx(w));
        }
        let info = members.len() as f64 * 4.0 * theta * x_trigamma_m1(theta);
        (ll, score, info)
    }

    /// d loglik / d nu with location and scale predictors held fixed.
    fn nu_score(&self, nu: f64) -> f64 {
        (0..self.ln_y.len())
            .map(|i| {
                let theta = theta_of(self.ln_sigma(i), nu);
                let l = self.ln_y[i] - self.ln_mu(i);
                let w = nu * l;
                let z = w.exp();
                let lead = ln_minus_digamma(theta) - special::expm1mx(w);
                1.0 / nu - 2.0 * theta / nu * lead + theta * l * (1.0 - z)
            })
            .sum()
    }

    /// Gradient of the log-likelihood in `(beta0, gamma0, nu)` holding the
    /// random effects fixed.
    fn fixed_gradient(&self, beta0: f64, gamma0: f64, nu: f64) -> [f64; 3] {
        let mut g = [0.0; 3];
        for i in 0..self.ln_y.len() {
            let ln_mu = beta0 + self.v[self.venue_of[i]];
            let ln_sigma = gamma0 + self.h[self.heat_of[i]];
            let theta = theta_of(ln_sigma, nu);
            let l = self.ln_y[i] - ln_mu;
            let w = nu * l;
            let z = w.exp();
            let lead = ln_minus_digamma(theta) - special::expm1mx(w);
            g[0] += theta * nu * (z - 1.0);
            g[1] += -2.0 * theta * lead;
            g[2] += 1.0 / nu - 2.0 * theta / nu * lead + theta * l * (1.0 - z);
        }
        g
    }
}

#[inline]
fn theta_of(ln_sigma: f64, nu: f64) -> f64 {
    (-2.0 * ln_sigma).exp() / (nu * nu)
}

/// Maximize `Σ_g ll_g(intercept + e_g) - λ/2 Σ e_g²` over the intercept
/// and effects jointly, then centre the effects into the intercept.
fn solve_block(intercept: &mut f64, effects: &mut [f64], lambda: f64, eval: &GroupEval<'_>) {
    let objective = |icpt: f64, eff: &[f64]| -> f64 {
        let mut total = 0.0;
        for (g, e) in eff.iter().enumerate() {
            total += eval(g, icpt + e).0 - 0.5 * lambda * e * e;
        }
        total
    };
    let q = effects.len();
    let mut grads = vec![0.0; q];
    let mut infos = vec![0.0; q];
    let mut step = vec![0.0; q];
    let mut trial = vec![0.0; q];
    for _ in 0..50 {
        let mut current = 0.0;
        for g in 0..q {
            let (ll, s, info) = eval(g, *intercept + effects[g]);
            current += ll - 0.5 * lambda * effects[g] * effects[g];
            grads[g] = s;
            infos[g] = info.max(1e-12);
        }
        // Arrow system: [Σ I, I_g; I_g, I_g + λ] [d0; d_g] = [Σ s; s_g - λ e_g]
        let mut schur = 0.0;
        let mut rhs0 = 0.0;
        for g in 0..q {
            let d = infos[g] + lambda;
            let rg = grads[g] - lambda * effects[g];
            schur += infos[g] - infos[g] * infos[g] / d;
            rhs0 += grads[g] - infos[g] * rg / d;
        }
        let d0 = if schur > 1e-300 { rhs0 / schur } else { 0.0 };
        for g in 0..q {
            step[g] = (grads[g] - lambda * effects[g] - infos[g] * d0) / (infos[g] + lambda);
        }

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for g in 0..q {
                trial[g] = effects[g] + t * step[g];
            }
            let value = objective(*intercept + t * d0, &trial);
            if value.is_finite() && value >= current {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        let max_move = step.iter().fold((t * d0).abs(), |m, s| m.max((t * s).abs()));
        *intercept += t * d0;
        effects.copy_from_slice(&trial);
        if max_move < 1e-10 {
            break;
        }
    }
    let mean = effects.iter().sum::<f64>() / q as f64;
    for e in effects.iter_mut() {
        *e -= mean;
    }
    *intercept += mean;
}

/// Shapes with `|nu|` below this are avoided; the density is continuous
/// through the log-normal limit at zero but the parametrization is not.
const NU_GAP: f64 = 1e-3;

fn clamp_nu(candidate: f64, direction: f64) -> f64 {
    if candidate.abs() >= NU_GAP {
        candidate
    } else if direction > 0.0 {
        NU_GAP
    } else {
        -NU_GAP
    }
}

fn update_nu(state: &mut State) {
    for _ in 0..30 {
        let nu = state.nu;
        let current = state.loglik_with_nu(nu);
        let score = state.nu_score(nu);
        let eps = 1e-5 * nu.abs().max(0.1);
        let curvature = (state.nu_score(nu + eps) - state.nu_score(nu - eps)) / (2.0 * eps);
        let mut step = if curvature < 0.0 {
            -score / curvature
        } else {
            score.signum() * 0.1 * nu.abs().max(0.1)
        };
        let mut accepted = None;
        for _ in 0..40 {
            let trial = clamp_nu(nu + step, step);
            let value = state.loglik_with_nu(trial);
            if value.is_finite() && value >= current {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else { return };
        state.nu = next;
        if (next - nu).abs() < 1e-10 * nu.abs().max(1.0) {
            return;
        }
    }
}

/// Effective-degrees-of-freedom update; returns the new tau.
fn update_tau(effects: &[f64], infos: &[f64], tau: f64, floor: f64) -> f64 {
    let lambda = 1.0 / (tau * tau);
    let edf: f64 = infos.iter().map(|i| i / (i + lambda)).sum();
    let ss: f64 = effects.iter().map(|e| e * e).sum();
    if !(edf > 0.0) || !(ss > 0.0) {
        return floor;
    }
    (ss / edf).sqrt().max(floor)
}

/// Fit the venue/heat random-effects model.
pub fn fit(data: &ModelDataset, config: &FitConfig) -> Result<MixedGGModel, FitError> {
    if data.venue_count() < 2 || data.heat_count() < 2 || data.len() < 3 {
        return Err(FitError::TooSmall(data.len()));
    }
    let mut state = State::new(data, config);
    if !state.penalized().is_finite() {
        return Err(FitError::BadStart);
    }
    let mut trace = Vec::new();
    let mut previous: Option<f64> = None;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=config.max_iter {
        iterations = it;
        let start = state.penalized();

        let lambda_v = 1.0 / (state.tau_v * state.tau_v);
        // Each block evaluator reads only the other block's effects.
        let mut beta0 = state.beta0;
        let mut v = std::mem::take(&mut state.v);
        solve_block(&mut beta0, &mut v, lambda_v, &|g, eta| state.venue_eval(g, eta));
        state.beta0 = beta0;
        state.v = v;

        let lambda_h = 1.0 / (state.tau_h * state.tau_h);
        let mut gamma0 = state.gamma0;
        let mut h = std::mem::take(&mut state.h);
        solve_block(&mut gamma0, &mut h, lambda_h, &|g, eta| state.heat_eval(g, eta));
        state.gamma0 = gamma0;
        state.h = h;

        update_nu(&mut state);

        let end = state.penalized();
        trace.push(IterationTrace {
            iteration: it,
            start,
            end,
            tau_v: state.tau_v,
            tau_h: state.tau_h,
        });
        if let Some(prev) = previous {
            if (end - prev).abs() < config.tol {
                converged = true;
                break;
            }
        }
        previous = Some(end);

        let venue_info: Vec<f64> = (0..state.v.len())
            .map(|g| state.venue_eval(g, state.beta0 + state.v[g]).2)
            .collect();
        let heat_info: Vec<f64> = (0..state.h.len())
            .map(|g| state.heat_eval(g, state.gamma0 + state.h[g]).2)
            .collect();
        state.tau_v = update_tau(&state.v, &venue_info, state.tau_v, config.tau_floor);
        state.tau_h = update_tau(&state.h, &heat_info, state.tau_h, config.tau_floor);
    }

    let (se_beta0, se_gamma0, se_nu) = fixed_effect_ses(&state);
    let loglik = state.loglik();
    let loglik_penalized = loglik - state.penalty();
    Ok(MixedGGModel {
        beta0: state.beta0,
        gamma0: state.gamma0,
        nu: state.nu,
        tau_v: state.tau_v,
        tau_h: state.tau_h,
        se_beta0,
        se_gamma0,
        se_nu,
        venue_effects: data
            .venues
            .iter()
            .zip(&state.v)
            .map(|(&year, &effect)| VenueEffect { year, effect })
            .collect(),
        heat_effects: data
            .heats
            .iter()
            .zip(&state.h)
            .map(|(key, &effect)| HeatEffect {
                year: data.venues[key.venue],
                heat_id: key.heat_id.clone(),
                effect,
            })
            .collect(),
        loglik: Some(loglik),
        loglik_penalized: Some(loglik_penalized),
        converged,
        n_iterations: iterations,
        n_observations: data.len(),
        tau_v_at_boundary: state.tau_v <= config.tau_floor * (1.0 + 1e-9),
        tau_h_at_boundary: state.tau_h <= config.tau_floor * (1.0 + 1e-9),
        trace,
    })
}

/// Standard errors from the observed information of `(beta0, gamma0, nu)`
/// with random effects and variance components held at their estimates.
fn fixed_effect_ses(state: &State) -> (Option<f64>, Option<f64>, Option<f64>) {
    let x = [state.beta0, state.gamma0, state.nu];
    let mut hess = [[0.0; 3]; 3];
    for k in 0..3 {
        let eps = 1e-5 * x[k].abs().max(0.1);
        let mut up = x;
        let mut down = x;
        up[k] += eps;
        down[k] -= eps;
        let gu = state.fixed_gradient(up[0], up[1], up[2]);
        let gd = state.fixed_gradient(down[0], down[1], down[2]);
        for j in 0..3 {
            hess[j][k] = (gu[j] - gd[j]) / (2.0 * eps);
        }
    }
    let mut info = [[0.0; 3]; 3];
    for j in 0..3 {
        for k in 0..3 {
            info[j][k] = -0.5 * (hess[j][k] + hess[k][j]);
        }
    }
    match invert3(&info) {
        Some(cov) if cov[0][0] > 0.0 && cov[1][1] > 0.0 && cov[2][2] > 0.0 => {
            (Some(cov[0][0].sqrt()), Some(cov[1][1].sqrt()), Some(cov[2][2].sqrt()))
        }
        _ => (None, None, None),
    }
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    if !(det.abs() > 1e-300) || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    Some([
        [
            c00 * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            c01 * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            c02 * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ])
}

/// Normalized quantile residuals and their normal Q-Q pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSet {
    /// One per observation, in dataset order.
    pub z_scores: Vec<f64>,
    /// `(theoretical normal quantile, sorted z-score)`.
    pub qq_pairs: Vec<(f64, f64)>,
    /// Observations whose cdf value was clamped away from 0 or 1.
    pub clamped: Vec<usize>,
}

pub const RESIDUAL_CLAMP: f64 = 1e-12;

impl ResidualSet {
    /// Correlation between the ordered residuals and their normal scores.
    pub fn filliben(&self) -> f64 {
        let (x, y): (Vec<f64>, Vec<f64>) = self.qq_pairs.iter().copied().unzip();
        crate::diagnostics::pearson(&x, &y)
    }
}

/// `Φ⁻¹(F(y))` conditional on the fitted random effects.
pub fn quantile_residuals(model: &MixedGGModel, data: &ModelDataset) -> Result<ResidualSet, FitError> {
    model.check_structure(data)?;
    let mut clamped = Vec::new();
    let z_scores: Vec<f64> = (0..data.len())
        .map(|i| {
            let (lower, upper) = model.observation_params(data, i).cdf_pair(data.observations[i].value);
            // Work from the smaller tail to keep precision.
            let (tail, sign) = if lower <= upper { (lower, 1.0) } else { (upper, -1.0) };
            let tail = if tail < RESIDUAL_CLAMP {
                clamped.push(i);
                RESIDUAL_CLAMP
            } else {
                tail
            };
            sign * norm_quantile(tail)
        })
        .collect();
    Ok(ResidualSet {
        qq_pairs: qq_pairs(&z_scores),
        z_scores,
        clamped,
    })
}

/// Pairs sorted values with `Φ⁻¹((r - 0.375) / (n + 0.25))`.
pub fn qq_pairs(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(r, z)| (norm_quantile((r as f64 + 1.0 - 0.375) / (n + 0.25)), z))
        .collect()
}

/// `n` independent draws from the marginal scale mixture.
///
/// Each draw takes fresh `v ~ N(0, tau_v²)` and `h ~ N(0, tau_h²)`.
/// Output is a deterministic function of `(params, n, seed)`.
pub fn simulate_marginal(params: &PopulationParams, n: usize, seed: u64) -> Vec<f64> {
    let shards: Vec<_> = rng::shards(n, MARGINAL_SHARD).collect();
    shards
        .into_par_iter()
        .map(|(k, _, len)| {
            let mut rng = rng::stream_rng(seed, k);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                out.push(marginal_draw(params, &mut rng));
            }
            out
        })
        .collect::<Vec<_>>()
        .concat()
}

fn marginal_draw<R: Rng + ?Sized>(p: &PopulationParams, rng: &mut R) -> f64 {
    let z: f64 = rand_distr::StandardNormal.sample(rng);
    let v = p.tau_v * z;
    let z: f64 = rand_distr::StandardNormal.sample(rng);
    let h = p.tau_h * z;
    GGParams {
        mu: (p.beta0 + v).exp(),
        sigma: (p.gamma0 + h).exp(),
        nu: p.nu,
    }
    .sample(rng)
}

/// New responses on `structure`'s index layout with freshly drawn venue
/// and heat effects.
pub fn simulate_dataset(structure: &ModelDataset, params: &PopulationParams, seed: u64) -> ModelDataset {
    let mut rng = rng::stream_rng(seed, 0);
    let venue = Normal::new(0.0, params.tau_v).expect("tau_v >= 0");
    let heat = Normal::new(0.0, params.tau_h).expect("tau_h >= 0");
    let v: Vec<f64> = (0..structure.venue_count()).map(|_| venue.sample(&mut rng)).collect();
    let h: Vec<f64> = (0..structure.heat_count()).map(|_| heat.sample(&mut rng)).collect();
    let values: Vec<f64> = structure
        .observations
        .iter()
        .map(|o| {
            GGParams {
                mu: (params.beta0 + v[o.venue]).exp(),
                sigma: (params.gamma0 + h[o.heat]).exp(),
                nu: params.nu,
            }
            .sample(&mut rng)
        })
        .collect();
    structure.with_values(&values)
}

/// New responses drawn from the fitted conditional distributions.
pub fn simulate_conditional(model: &MixedGGModel, data: &ModelDataset, seed: u64) -> Result<ModelDataset, FitError> {
    model.check_structure(data)?;
    let mut rng = rng::stream_rng(seed, 0);
    let values: Vec<f64> = (0..data.len())
        .map(|i| model.observation_params(data, i).sample(&mut rng))
        .collect();
    Ok(data.with_values(&values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_structure(years: u16, heats_per_year: usize, per_heat: usize) -> ModelDataset {
        let mut ids = Vec::new();
        for y in 0..years {
            for h in 0..heats_per_year {
                for _ in 0..per_heat {
                    ids.push((0.15, 2000 + y, format!("{y}-{h}")));
                }
            }
        }
        ModelDataset::from_triples(ids.iter().map(|(v, y, h)| (*v, *y, h.as_str()))).unwrap()
    }

    fn truth() -> PopulationParams {
        PopulationParams::new(-1.910, -2.200, -1.178, 0.058, 0.320).unwrap()
    }

    #[test]
    fn analytic_scores_match_finite_differences() {
        let data = simulate_dataset(&toy_structure(4, 3, 6), &truth(), 1);
        let mut state = State::new(&data, &FitConfig::default());
        state.v = vec![0.01, -0.02, 0.03, -0.02];
        state.h = (0..12).map(|k| 0.05 * (k as f64 - 5.5) / 6.0).collect();
        state.nu = -1.3;
        state.gamma0 = -2.1;
        state.beta0 = -1.9;
        let g = state.fixed_gradient(state.beta0, state.gamma0, state.nu);
        let f = |b: f64, c: f64, n: f64| {
            let mut s = state.clone();
            s.beta0 = b;
            s.gamma0 = c;
            s.loglik_with_nu(n)
        };
        let e = 1e-6;
        let fd = [
            (f(state.beta0 + e, state.gamma0, state.nu) - f(state.beta0 - e, state.gamma0, state.nu)) / (2.0 * e),
            (f(state.beta0, state.gamma0 + e, state.nu) - f(state.beta0, state.gamma0 - e, state.nu)) / (2.0 * e),
            (f(state.beta0, state.gamma0, state.nu + e) - f(state.beta0, state.gamma0, state.nu - e)) / (2.0 * e),
        ];
        for k in 0..3 {
            assert!((g[k] - fd[k]).abs() < 1e-4 * fd[k].abs().max(1.0), "k={k} {} vs {}", g[k], fd[k]);
        }
        assert!((state.nu_score(state.nu) - fd[2]).abs() < 1e-4 * fd[2].abs().max(1.0));
        // group scores
        let (_, s, _) = state.venue_eval(1, state.beta0 + state.v[1]);
        let fdv = (state.venue_eval(1, state.beta0 + state.v[1] + e).0 - state.venue_eval(1, state.beta0 + state.v[1] - e).0) / (2.0 * e);
        assert!((s - fdv).abs() < 1e-4 * fdv.abs().max(1.0));
        let eta = state.gamma0 + state.h[5];
        let (_, s, _) = state.heat_eval(5, eta);
        let fdh = (state.heat_eval(5, eta + e).0 - state.heat_eval(5, eta - e).0) / (2.0 * e);
        assert!((s - fdh).abs() < 1e-4 * fdh.abs().max(1.0), "{s} vs {fdh}");
    }

    #[test]
    fn too_small_is_rejected() {
        let data = ModelDataset::from_triples([(0.15, 2001, "a"), (0.16, 2001, "a")]).unwrap();
        assert!(matches!(fit(&data, &FitConfig::default()), Err(FitError::TooSmall(_))));
    }

    #[test]
    fn fit_is_deterministic_and_centred() {
        let data = simulate_dataset(&toy_structure(6, 6, 7), &truth(), 2);
        let a = fit(&data, &FitConfig::default()).unwrap();
        let b = fit(&data, &FitConfig::default()).unwrap();
        assert_eq!(a, b);
        let mv = a.venue_effects.iter().map(|e| e.effect).sum::<f64>() / a.venue_effects.len() as f64;
        let mh = a.heat_effects.iter().map(|e| e.effect).sum::<f64>() / a.heat_effects.len() as f64;
        assert!(mv.abs() < 1e-8 && mh.abs() < 1e-8);
        for t in &a.trace {
            assert!(t.end >= t.start - 1e-9, "iteration {} descended", t.iteration);
        }
        assert!(a.se_beta0.unwrap() > 0.0 && a.se_gamma0.unwrap() > 0.0 && a.se_nu.unwrap() > 0.0);
    }

    #[test]
    fn json_round_trip_preserves_model() {
        let data = simulate_dataset(&toy_structure(3, 3, 5), &truth(), 4);
        let model = fit(&data, &FitConfig { max_iter: 20, ..FitConfig::default() }).unwrap();
        let back = MixedGGModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn residual_at_conditional_median_is_zero() {
        let data = ModelDataset::from_triples([(0.15, 2001, "a")]).unwrap();
        let mut model = MixedGGModel::from_population(truth());
        model.venue_effects = vec![VenueEffect { year: 2001, effect: 0.0 }];
        model.heat_effects = vec![HeatEffect { year: 2001, heat_id: "a".into(), effect: 0.0 }];
        let median = model.observation_params(&data, 0).quantile(0.5).unwrap();
        let data = data.with_values(&[median]);
        let r = quantile_residuals(&model, &data).unwrap();
        assert!(r.z_scores[0].abs() < 1e-9);
        assert!(r.clamped.is_empty());
    }

    #[test]
    fn residuals_clamp_extremes_and_reject_mismatch() {
        let data = ModelDataset::from_triples([(0.15, 2001, "a"), (1e-5, 2001, "a")]).unwrap();
        let mut model = MixedGGModel::from_population(truth());
        model.venue_effects = vec![VenueEffect { year: 2001, effect: 0.0 }];
        model.heat_effects = vec![HeatEffect { year: 2001, heat_id: "a".into(), effect: 0.0 }];
        let r = quantile_residuals(&model, &data).unwrap();
        assert_eq!(r.clamped, vec![1]);
        assert!((r.z_scores[1] - norm_quantile(RESIDUAL_CLAMP)).abs() < 1e-12);
        let other = ModelDataset::from_triples([(0.15, 2003, "b")]).unwrap();
        assert!(matches!(quantile_residuals(&model, &other), Err(FitError::StructureMismatch(_))));
    }

    #[test]
    fn qq_pairs_sorted() {
        let pairs = qq_pairs(&[0.3, -1.0, 2.0, 0.0]);
        assert!(pairs.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        assert_eq!(pairs[0].1, -1.0);
    }

    #[test]
    fn marginal_is_deterministic() {
        let p = truth();
        assert_eq!(simulate_marginal(&p, 200_000, 9), simulate_marginal(&p, 200_000, 9));
        assert_ne!(simulate_marginal(&p, 1000, 9), simulate_marginal(&p, 1000, 10));
    }

    #[test]
    fn mixture_inflates_variance() {
        let p = truth();
        let flat = PopulationParams { tau_v: 0.0, tau_h: 0.0, ..p };
        let var = |x: &[f64]| {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
        };
        let mixed = simulate_marginal(&p, 1_000_000, 5);
        let base = simulate_marginal(&flat, 1_000_000, 5);
        assert!(var(&mixed) > var(&base));
    }
}
