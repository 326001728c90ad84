//! Helpers shared by the integration tests, including a straight-line
//! re-implementation of the forward pass that shares no code with the crate.
#![allow(dead_code, clippy::needless_range_loop)]

pub mod criteria;

use varndrr::data::{label_vector, EncodedInstance};
use varndrr::model::{init_params, DimensionsConfig, GaussianEncoder, GenerativeParams, ModelParams};
use varndrr::numerics::{DenseMatrix, DenseVector, RngState};

pub fn tiny_dims() -> DimensionsConfig {
    DimensionsConfig {
        d_z: 3,
        d_x1: 7,
        d_x2: 7,
        d_h1: 5,
        d_h2: 5,
        d_hy: 5,
        d_h1p: 5,
        d_h2p: 5,
        d_m: 4,
        d_y: 2,
    }
}

/// Parameters drawn from N(0, scale²) so every path carries signal.
pub fn random_params(dims: DimensionsConfig, seed: u64, scale: f64) -> ModelParams {
    let mut params = init_params(dims, &mut RngState::new(seed)).unwrap();
    let mut rng = RngState::new(seed ^ 0xdead_beef);
    for (_, a) in params.arrays_mut() {
        for v in a.iter_mut() {
            *v = scale * rng.standard_normal();
        }
    }
    params
}

pub fn random_binary(rng: &mut RngState, dim: usize) -> DenseVector {
    let mut v: Vec<f64> = (0..dim).map(|_| if rng.uniform() < 0.4 { 1.0 } else { 0.0 }).collect();
    v[rng.index(dim)] = 1.0;
    v.into()
}

pub fn random_instance(rng: &mut RngState, dims: &DimensionsConfig) -> EncodedInstance {
    EncodedInstance {
        x1: random_binary(rng, dims.d_x1),
        x2: random_binary(rng, dims.d_x2),
        y: label_vector(rng.uniform() < 0.5),
    }
}

pub fn random_vector(rng: &mut RngState, dim: usize) -> DenseVector {
    (0..dim).map(|_| rng.standard_normal()).collect::<Vec<_>>().into()
}

// ---- straight-line oracle ----

fn mv(w: &DenseMatrix, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for r in 0..w.rows() {
        let mut s = 0.0;
        for c in 0..w.cols() {
            s += w.get(r, c) * x[c];
        }
        out.push(s);
    }
    out
}

fn plus(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn tanh_of(a: Vec<f64>) -> Vec<f64> {
    a.into_iter().map(f64::tanh).collect()
}

pub fn oracle_encoder(enc: &GaussianEncoder, x1: &[f64], x2: &[f64], y: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let h1 = tanh_of(plus(&mv(enc.arg.w_h1(), x1), enc.b_h1.as_slice()));
    let h2 = tanh_of(plus(&mv(enc.arg.w_h2(), x2), enc.b_h2.as_slice()));
    let mut mu = plus(&plus(&mv(&enc.w_mu1, &h1), &mv(&enc.w_mu2, &h2)), enc.b_mu.as_slice());
    let mut lv = plus(&plus(&mv(&enc.w_sig1, &h1), &mv(&enc.w_sig2, &h2)), enc.b_sig.as_slice());
    if let (Some(l), Some(y)) = (&enc.label, y) {
        let hy = tanh_of(plus(&mv(&l.w_hy, y), l.b_hy.as_slice()));
        mu = plus(&mu, &mv(&l.w_mu_y, &hy));
        lv = plus(&lv, &mv(&l.w_sig_y, &hy));
    }
    (mu, lv)
}

pub fn oracle_arguments(theta: &GenerativeParams, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h1p = tanh_of(plus(&mv(&theta.w_h1p, z), theta.b_h1p.as_slice()));
    let h2p = tanh_of(plus(&mv(&theta.w_h2p, z), theta.b_h2p.as_slice()));
    let sig = |a: Vec<f64>| -> Vec<f64> { a.into_iter().map(|t| 1.0 / (1.0 + (-t).exp())).collect() };
    (
        sig(plus(&mv(theta.w_x1p(), &h1p), theta.b_x1p.as_slice())),
        sig(plus(&mv(theta.w_x2p(), &h2p), theta.b_x2p.as_slice())),
    )
}

pub fn oracle_relation(theta: &GenerativeParams, z: &[f64]) -> Vec<f64> {
    let mut h = z.to_vec();
    for layer in &theta.mlp {
        h = tanh_of(plus(&mv(&layer.weight, &h), layer.bias.as_slice()));
    }
    let logits = plus(&mv(&theta.w_yp, &h), theta.b_yp.as_slice());
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// The full bound for one noise draw, computed without any crate kernels.
pub fn oracle_elbo(params: &ModelParams, inst: &EncodedInstance, eps: &[f64]) -> f64 {
    let (x1, x2, y) = (inst.x1.as_slice(), inst.x2.as_slice(), inst.y.as_slice());
    let (mq, lq) = oracle_encoder(&params.phi.posterior, x1, x2, Some(y));
    let (mp, lp) = oracle_encoder(&params.phi.prior, x1, x2, None);
    let mut kl = 0.0;
    for i in 0..mq.len() {
        let d = mq[i] - mp[i];
        kl += 0.5 * (lp[i] - lq[i] + (lq[i].exp() + d * d) / lp[i].exp() - 1.0);
    }
    let z: Vec<f64> = (0..mq.len()).map(|i| mq[i] + (0.5 * lq[i]).exp() * eps[i]).collect();
    let (p1, p2) = oracle_arguments(&params.theta, &z);
    let bern = |x: &[f64], p: &[f64]| -> f64 {
        x.iter().zip(p).map(|(xi, pi)| xi * pi.ln() + (1.0 - xi) * (1.0 - pi).ln()).sum()
    };
    let py = oracle_relation(&params.theta, &z);
    let rel: f64 = y.iter().zip(&py).map(|(yi, pi)| yi * pi.ln()).sum();
    -kl + bern(x1, &p1) + bern(x2, &p2) + rel
}
