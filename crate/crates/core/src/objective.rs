//! Variational lower bound and its exact gradients.
//!
//! For one instance the objective is
//!
//! ```text
//! L = -KL(q(z|x,y) || q'(z|x)) + 1/L Σ_l [log p(x|z_l) + log p(y|z_l)],   z_l = μ + σ ⊙ ε_l
//! ```
//!
//! Gradients are ascent directions: they point toward larger `L`. The KL term
//! is differentiated analytically into both the posterior and the prior
//! networks; the reconstruction terms reach the posterior through the
//! reparameterized sample.

use std::ops::{Deref, DerefMut};

use crate::data::EncodedInstance;
use crate::error::{Error, Result};
use crate::model::{GaussianParams, ModelParams};
use crate::numerics::{sample_standard_gaussian, DenseVector, RngState};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-10;

/// Gradient buffer with exactly the layout of [`ModelParams`]; tied matrices
/// therefore have a single accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(ModelParams);

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let mut g = params.clone();
        g.arrays_mut().into_iter().for_each(|(_, a)| a.fill(0.0));
        Gradients(g)
    }

    pub fn fill_zero(&mut self) {
        self.0.arrays_mut().into_iter().for_each(|(_, a)| a.fill(0.0));
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((_, dst), (_, src)) in self.0.arrays_mut().into_iter().zip(other.0.arrays()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, a) in self.0.arrays_mut() {
            a.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Name of the first array holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.0
            .arrays()
            .into_iter()
            .find(|(_, a)| a.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }
}

impl Deref for Gradients {
    type Target = ModelParams;

    fn deref(&self) -> &ModelParams {
        &self.0
    }
}

impl DerefMut for Gradients {
    fn deref_mut(&mut self) -> &mut ModelParams {
        &mut self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboBreakdown {
    pub kl_term: f64,
    pub recon_x_term: f64,
    pub recon_y_term: f64,
    pub total: f64,
}

/// Closed-form KL(q ‖ p) between diagonal Gaussians.
pub fn kl_diag_gaussians(q: &GaussianParams, p: &GaussianParams) -> Result<f64> {
    check_same_dims(q, p)?;
    Ok((0..q.dim())
        .map(|i| {
            let r = q.log_var[i] - p.log_var[i];
            let delta = q.mu[i] - p.mu[i];
            // expm1(r) - r >= 0 and is exactly 0 when r == 0.
            0.5 * (r.exp_m1() - r + delta * delta * (-p.log_var[i]).exp())
        })
        .sum())
}

/// Partial derivatives of KL(q ‖ p) with respect to
/// (μ_q, log σ²_q, μ_p, log σ²_p).
fn kl_partials(q: &GaussianParams, p: &GaussianParams) -> [Vec<f64>; 4] {
    let n = q.dim();
    let mut d_mu_q = vec![0.0; n];
    let mut d_lv_q = vec![0.0; n];
    let mut d_mu_p = vec![0.0; n];
    let mut d_lv_p = vec![0.0; n];
    for i in 0..n {
        let inv_var_p = (-p.log_var[i]).exp();
        let delta = q.mu[i] - p.mu[i];
        let ratio = (q.log_var[i] - p.log_var[i]).exp();
        d_mu_q[i] = delta * inv_var_p;
        d_mu_p[i] = -delta * inv_var_p;
        d_lv_q[i] = 0.5 * (ratio - 1.0);
        d_lv_p[i] = 0.5 * (1.0 - ratio - delta * delta * inv_var_p);
    }
    [d_mu_q, d_lv_q, d_mu_p, d_lv_p]
}

fn check_same_dims(q: &GaussianParams, p: &GaussianParams) -> Result<()> {
    let dims = [q.mu.dim(), q.log_var.dim(), p.mu.dim(), p.log_var.dim()];
    if dims.iter().any(|d| *d != dims[0]) {
        return Err(Error::shape(
            "kl_diag_gaussians",
            "equal Gaussian dimensions",
            format!("q=({}, {}), p=({}, {})", dims[0], dims[1], dims[2], dims[3]),
        ));
    }
    Ok(())
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

fn bernoulli_log_likelihood(x: &[f64], p: &[f64]) -> f64 {
    x.iter()
        .zip(p)
        .map(|(&xi, &pi)| {
            let pi = clamp_prob(pi);
            xi * pi.ln() + (1.0 - xi) * (-pi).ln_1p()
        })
        .sum()
}

/// log p(x | z) for the two bag-of-words arguments under independent
/// Bernoulli units.
///
/// # Panics
/// If a target vector and its prediction differ in length.
pub fn log_px_given_z(x1: &DenseVector, x2: &DenseVector, x1p: &DenseVector, x2p: &DenseVector) -> f64 {
    assert_eq!(x1.dim(), x1p.dim(), "x1 and x1p lengths differ");
    assert_eq!(x2.dim(), x2p.dim(), "x2 and x2p lengths differ");
    bernoulli_log_likelihood(x1.as_slice(), x1p.as_slice())
        + bernoulli_log_likelihood(x2.as_slice(), x2p.as_slice())
}

/// log p(y | z) = Σ y_i log y'_i.
///
/// # Panics
/// If `y` and `yp` differ in length.
pub fn log_py_given_z(y: &DenseVector, yp: &DenseVector) -> f64 {
    assert_eq!(y.dim(), yp.dim(), "y and yp lengths differ");
    y.iter().zip(yp.iter()).map(|(yi, pi)| yi * clamp_prob(*pi).ln()).sum()
}

/// Draws `samples` noise vectors and evaluates the bound and its gradient.
pub fn elbo_and_gradients(
    params: &ModelParams,
    inst: &EncodedInstance,
    rng: &mut RngState,
    samples: usize,
) -> Result<(ElboBreakdown, Gradients)> {
    if samples == 0 {
        return Err(Error::Config("number of Monte Carlo samples must be >= 1".into()));
    }
    let eps = (0..samples)
        .map(|_| sample_standard_gaussian(rng, params.dims.d_z))
        .collect::<Result<Vec<_>>>()?;
    let mut grad = Gradients::zeros_like(params);
    let elbo = accumulate_elbo_gradients(params, inst, &eps, &mut grad)?;
    Ok((elbo, grad))
}

/// Bound and gradient with the noise supplied explicitly, one vector per
/// Monte Carlo sample.
pub fn elbo_and_gradients_with_noise(
    params: &ModelParams,
    inst: &EncodedInstance,
    eps: &[DenseVector],
) -> Result<(ElboBreakdown, Gradients)> {
    let mut grad = Gradients::zeros_like(params);
    let elbo = accumulate_elbo_gradients(params, inst, eps, &mut grad)?;
    Ok((elbo, grad))
}

/// Bound only, with explicit noise. Same arithmetic as the gradient path.
pub fn elbo_with_noise(
    params: &ModelParams,
    inst: &EncodedInstance,
    eps: &[DenseVector],
) -> Result<ElboBreakdown> {
    check_instance(params, inst, eps)?;
    let post = params.phi.posterior.forward(&inst.x1, &inst.x2, Some(&inst.y)).gaussian;
    let prior = params.phi.prior.forward(&inst.x1, &inst.x2, None).gaussian;
    let kl = kl_diag_gaussians(&post, &prior)?;
    let mut recon_x = 0.0;
    let mut recon_y = 0.0;
    for e in eps {
        let z = sample_latent(&post, e);
        let args = params.theta.forward_arguments(&z);
        let rel = params.theta.forward_relation(&z);
        recon_x += bernoulli_log_likelihood(inst.x1.as_slice(), &args.x1p)
            + bernoulli_log_likelihood(inst.x2.as_slice(), &args.x2p);
        recon_y += log_py_given_z(&inst.y, &rel.probs.into());
    }
    finish(kl, recon_x, recon_y, eps.len())
}

/// Adds this instance's gradient into `grad` and returns its bound. Used by
/// the trainer to reduce a minibatch without per-instance buffers.
pub fn accumulate_elbo_gradients(
    params: &ModelParams,
    inst: &EncodedInstance,
    eps: &[DenseVector],
    grad: &mut Gradients,
) -> Result<ElboBreakdown> {
    check_instance(params, inst, eps)?;
    let posterior = &params.phi.posterior;
    let prior = &params.phi.prior;
    let theta = &params.theta;

    let post_trace = posterior.forward(&inst.x1, &inst.x2, Some(&inst.y));
    let prior_trace = prior.forward(&inst.x1, &inst.x2, None);
    let q = &post_trace.gaussian;
    let p = &prior_trace.gaussian;
    ensure_finite("posterior mean", q.mu.as_slice())?;
    ensure_finite("posterior log-variance", q.log_var.as_slice())?;
    ensure_finite("prior mean", p.mu.as_slice())?;
    ensure_finite("prior log-variance", p.log_var.as_slice())?;

    let kl = kl_diag_gaussians(q, p)?;
    let [kl_mu_q, kl_lv_q, kl_mu_p, kl_lv_p] = kl_partials(q, p);
    // Ascent direction: the bound contains -KL.
    let mut d_mu_q: Vec<f64> = kl_mu_q.iter().map(|v| -v).collect();
    let mut d_lv_q: Vec<f64> = kl_lv_q.iter().map(|v| -v).collect();
    let d_mu_p: Vec<f64> = kl_mu_p.iter().map(|v| -v).collect();
    let d_lv_p: Vec<f64> = kl_lv_p.iter().map(|v| -v).collect();

    let sigma = q.sigma();
    let weight = 1.0 / eps.len() as f64;
    let mut recon_x = 0.0;
    let mut recon_y = 0.0;
    for e in eps {
        let z = sample_latent(q, e);
        ensure_finite("latent sample", &z)?;
        let args = theta.forward_arguments(&z);
        let rel = theta.forward_relation(&z);
        recon_x += bernoulli_log_likelihood(inst.x1.as_slice(), &args.x1p)
            + bernoulli_log_likelihood(inst.x2.as_slice(), &args.x2p);
        recon_y += inst
            .y
            .iter()
            .zip(&rel.probs)
            .map(|(yi, pi)| yi * clamp_prob(*pi).ln())
            .sum::<f64>();

        // d/d(pre-activation) of the Bernoulli and categorical log-likelihoods.
        let d_pre1: Vec<f64> = inst.x1.iter().zip(&args.x1p).map(|(x, p)| weight * (x - p)).collect();
        let d_pre2: Vec<f64> = inst.x2.iter().zip(&args.x2p).map(|(x, p)| weight * (x - p)).collect();
        let d_logits: Vec<f64> = inst.y.iter().zip(&rel.probs).map(|(y, p)| weight * (y - p)).collect();

        let mut d_z = theta.backward_arguments(&args, &z, &d_pre1, &d_pre2, &mut grad.theta);
        let d_z_rel = theta.backward_relation(&rel, &d_logits, &mut grad.theta);
        for (a, b) in d_z.iter_mut().zip(&d_z_rel) {
            *a += b;
        }
        for i in 0..d_z.len() {
            d_mu_q[i] += d_z[i];
            d_lv_q[i] += d_z[i] * e[i] * 0.5 * sigma[i];
        }
    }

    posterior.backward(&post_trace, &inst.x1, &inst.x2, Some(&inst.y), &d_mu_q, &d_lv_q, &mut grad.phi.posterior);
    prior.backward(&prior_trace, &inst.x1, &inst.x2, None, &d_mu_p, &d_lv_p, &mut grad.phi.prior);

    if let Some(name) = grad.first_non_finite() {
        return Err(Error::NonFinite { array: format!("gradient {name}") });
    }
    finish(kl, recon_x, recon_y, eps.len())
}

fn finish(kl: f64, recon_x: f64, recon_y: f64, samples: usize) -> Result<ElboBreakdown> {
    let n = samples as f64;
    let out = ElboBreakdown {
        kl_term: kl,
        recon_x_term: recon_x / n,
        recon_y_term: recon_y / n,
        total: -kl + recon_x / n + recon_y / n,
    };
    ensure_finite("KL term", &[out.kl_term])?;
    ensure_finite("argument reconstruction term", &[out.recon_x_term])?;
    ensure_finite("relation term", &[out.recon_y_term])?;
    Ok(out)
}

fn sample_latent(q: &GaussianParams, eps: &DenseVector) -> Vec<f64> {
    q.mu
        .iter()
        .zip(q.log_var.iter())
        .zip(eps.iter())
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { array: what.to_string() })
    }
}

fn check_instance(params: &ModelParams, inst: &EncodedInstance, eps: &[DenseVector]) -> Result<()> {
    let d = &params.dims;
    if inst.x1.dim() != d.d_x1 || inst.x2.dim() != d.d_x2 || inst.y.dim() != d.d_y {
        return Err(Error::shape(
            "elbo_and_gradients",
            format!("x1[{}], x2[{}], y[{}]", d.d_x1, d.d_x2, d.d_y),
            format!("x1[{}], x2[{}], y[{}]", inst.x1.dim(), inst.x2.dim(), inst.y.dim()),
        ));
    }
    if eps.is_empty() {
        return Err(Error::Config("at least one noise sample is required".into()));
    }
    if let Some(bad) = eps.iter().find(|e| e.dim() != d.d_z) {
        return Err(Error::shape("elbo_and_gradients", format!("eps[{}]", d.d_z), format!("eps[{}]", bad.dim())));
    }
    Ok(())
}
