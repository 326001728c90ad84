//! Checks shared by the focused test files and the acceptance report. Each
//! returns a one-line summary on success and a description of the first
//! violation otherwise.

use std::collections::HashSet;
use std::io::Cursor;
use std::path::Path;

use varndrr::data::{balance_by_resampling, build_vocab, label_vector, parse_corpus, tokenize, vectorize};
use varndrr::data::{EncodedInstance, RawDocumentPair, Relation};
use varndrr::eval::{compute_metrics, parse_reference_rows, reference_rows, render_comparison, MetricsReport};
use varndrr::model::{decode_arguments, decode_relation, encode_posterior, encode_prior, GaussianParams};
use varndrr::numerics::{DenseVector, RngState};
use varndrr::objective::{elbo_and_gradients_with_noise, elbo_with_noise, kl_diag_gaussians};

use super::*;

pub type Check = Result<String, String>;

fn e<T>(r: varndrr::Result<T>) -> Result<T, String> {
    r.map_err(|err| err.to_string())
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_FLOOR: f64 = 1e-8;

/// Every analytic partial against a central difference of the bound.
pub fn gradient_check(seed: u64, instances: usize, samples: usize) -> Check {
    let dims = tiny_dims();
    let mut params = random_params(dims, seed, 0.5);
    let mut rng = RngState::new(seed + 1000);
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, &dims);
        let eps: Vec<DenseVector> = (0..samples).map(|_| random_vector(&mut rng, dims.d_z)).collect();
        let (_, grads) = elbo_and_gradients_with_noise(&params, &inst, &eps).map_err(|e| e.to_string())?;
        let analytic: Vec<(String, Vec<f64>)> =
            grads.arrays().into_iter().map(|(n, a)| (n, a.to_vec())).collect();

        for (k, (name, g)) in analytic.iter().enumerate() {
            for i in 0..g.len() {
                let mut eval_at = |delta: f64| -> Result<f64, String> {
                    let mut arrays = params.arrays_mut();
                    let orig = arrays[k].1[i];
                    arrays[k].1[i] = orig + delta;
                    drop(arrays);
                    let v = elbo_with_noise(&params, &inst, &eps).map_err(|e| e.to_string())?.total;
                    params.arrays_mut()[k].1[i] = orig;
                    Ok(v)
                };
                let numeric = (eval_at(FD_STEP)? - eval_at(-FD_STEP)?) / (2.0 * FD_STEP);
                let diff = (g[i] - numeric).abs();
                let scale = g[i].abs().max(numeric.abs());
                let ok = diff < FD_ABS_FLOOR || diff / scale < FD_REL_TOL;
                if !ok {
                    return Err(format!("{name}[{i}]: analytic {} vs numeric {numeric}", g[i]));
                }
                if scale > 1e-6 {
                    worst = worst.max(diff / scale);
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} partials, worst relative error {worst:.2e}"))
}

/// Analytic KL against a Monte Carlo estimate of E_q[log q − log p].
pub fn kl_monte_carlo(pairs: usize, samples: usize, rel_tol: f64) -> Check {
    let mut rng = RngState::new(77);
    let log_density = |x: &[f64], g: &GaussianParams| -> f64 {
        (0..x.len())
            .map(|i| {
                let lv = g.log_var[i];
                let d = x[i] - g.mu[i];
                -0.5 * ((2.0 * std::f64::consts::PI).ln() + lv + d * d / lv.exp())
            })
            .sum()
    };
    let mut worst = 0.0f64;
    for pair in 0..pairs {
        let dim = 1 + rng.index(4);
        let gauss = |rng: &mut RngState| GaussianParams {
            mu: (0..dim).map(|_| rng.standard_normal()).collect::<Vec<_>>().into(),
            log_var: (0..dim).map(|_| 0.8 * rng.standard_normal()).collect::<Vec<_>>().into(),
        };
        let q = gauss(&mut rng);
        let p = gauss(&mut rng);
        let analytic = kl_diag_gaussians(&q, &p).map_err(|e| e.to_string())?;
        if kl_diag_gaussians(&q, &q).map_err(|e| e.to_string())? != 0.0 {
            return Err(format!("pair {pair}: KL(q, q) is not exactly 0"));
        }
        let mut sum = 0.0;
        let mut x = vec![0.0; dim];
        for _ in 0..samples {
            for i in 0..dim {
                x[i] = q.mu[i] + (0.5 * q.log_var[i]).exp() * rng.standard_normal();
            }
            sum += log_density(&x, &q) - log_density(&x, &p);
        }
        let estimate = sum / samples as f64;
        let rel = (estimate - analytic).abs() / analytic;
        if rel >= rel_tol {
            return Err(format!("pair {pair}: analytic {analytic} vs Monte Carlo {estimate}"));
        }
        worst = worst.max(rel);
    }
    Ok(format!("{pairs} pairs, worst relative error {worst:.2e}; KL(q, q) = 0"))
}

/// Crate forward passes against the straight-line oracle.
pub fn forward_oracle(cases: usize, tol: f64) -> Check {
    let mut rng = RngState::new(5);
    let mut worst = 0.0f64;
    let mut track = |what: &str, a: &[f64], b: &[f64]| -> Result<(), String> {
        if a.len() != b.len() {
            return Err(format!("{what}: length {} vs {}", a.len(), b.len()));
        }
        for (x, y) in a.iter().zip(b) {
            let d = (x - y).abs();
            if d >= tol {
                return Err(format!("{what}: {x} vs oracle {y}"));
            }
            worst = worst.max(d);
        }
        Ok(())
    };
    for case in 0..cases {
        let mut dims = tiny_dims();
        dims.d_z = 1 + rng.index(5);
        dims.d_x1 = 2 + rng.index(10);
        dims.d_x2 = dims.d_x1;
        dims.d_h1 = 1 + rng.index(6);
        dims.d_h2 = dims.d_h1;
        dims.d_hy = 1 + rng.index(6);
        dims.d_h1p = 1 + rng.index(6);
        dims.d_h2p = dims.d_h1p;
        dims.d_m = 1 + rng.index(6);
        let params = random_params(dims, 100 + case as u64, 0.7);
        let inst = random_instance(&mut rng, &dims);
        let z = random_vector(&mut rng, dims.d_z);

        let post = e(encode_posterior(&params.phi, &inst.x1, &inst.x2, &inst.y))?;
        let (mu, lv) = oracle_encoder(&params.phi.posterior, inst.x1.as_slice(), inst.x2.as_slice(), Some(inst.y.as_slice()));
        track("posterior mean", post.mu.as_slice(), &mu)?;
        track("posterior log-variance", post.log_var.as_slice(), &lv)?;

        let prior = e(encode_prior(&params.phi, &inst.x1, &inst.x2))?;
        let (mu, lv) = oracle_encoder(&params.phi.prior, inst.x1.as_slice(), inst.x2.as_slice(), None);
        track("prior mean", prior.mu.as_slice(), &mu)?;
        track("prior log-variance", prior.log_var.as_slice(), &lv)?;

        let (x1p, x2p) = e(decode_arguments(&params.theta, &z))?;
        let (o1, o2) = oracle_arguments(&params.theta, z.as_slice());
        track("x1'", x1p.as_slice(), &o1)?;
        track("x2'", x2p.as_slice(), &o2)?;

        let yp = e(decode_relation(&params.theta, &z))?;
        track("y'", yp.as_slice(), &oracle_relation(&params.theta, z.as_slice()))?;

        let eps = random_vector(&mut rng, dims.d_z);
        let total = e(elbo_with_noise(&params, &inst, std::slice::from_ref(&eps)))?.total;
        let oracle = oracle_elbo(&params, &inst, eps.as_slice());
        if (total - oracle).abs() >= 1e-9 * oracle.abs().max(1.0) {
            return Err(format!("bound: {total} vs oracle {oracle}"));
        }
    }
    Ok(format!("{cases} random configurations, worst absolute difference {worst:.2e}"))
}

/// Balancing arithmetic, binary duplication-invariant encoding and a
/// train-only vocabulary.
pub fn data_invariants() -> Check {
    // 1942 positives against every other training instance of the split.
    let (pos, neg) = (1942usize, 3342 + 7004 + 760);
    let mk = |p: bool| EncodedInstance {
        x1: vec![1.0].into(),
        x2: vec![1.0].into(),
        y: label_vector(p),
    };
    let mut train: Vec<EncodedInstance> = (0..pos).map(|_| mk(true)).collect();
    train.extend((0..neg).map(|_| mk(false)));
    let balanced = balance_by_resampling(train, &mut RngState::new(3)).map_err(|e| e.to_string())?;
    let n_pos = balanced.iter().filter(|i| i.is_positive()).count();
    if n_pos != neg || balanced.len() != 22212 {
        return Err(format!("balanced to {n_pos} positives of {} total", balanced.len()));
    }

    let corpus = "train\tCOM\tthe cat the cat\tsat\n\
                  train\tEXP\ta dog\tran far\n\
                  dev\tCOM\tunseen words here\tthe\n\
                  test\tTEM\tonly test tokens\tcat\n";
    let data = parse_corpus(Cursor::new(corpus), Path::new("inline")).map_err(|e| e.to_string())?;
    let vocab = build_vocab(&data.train, 50).map_err(|e| e.to_string())?;
    for word in ["unseen", "words", "here", "only", "tokens", "test"] {
        if vocab.get(word).is_some() {
            return Err(format!("held-out token {word:?} entered the vocabulary"));
        }
    }
    let once = RawDocumentPair {
        arg1_tokens: tokenize("the cat"),
        arg2_tokens: tokenize("sat"),
        relation: Relation::Comparison,
    };
    let twice = RawDocumentPair {
        arg1_tokens: tokenize("the cat the cat cat"),
        ..once.clone()
    };
    let a = vectorize(&once, &vocab, Relation::Comparison);
    let b = vectorize(&twice, &vocab, Relation::Comparison);
    if a != b {
        return Err("repeating tokens changed the encoding".into());
    }
    if a.x1.iter().chain(a.x2.iter()).any(|v| *v != 0.0 && *v != 1.0) {
        return Err("encoding is not binary".into());
    }
    let seen: HashSet<usize> = a.x1.nonzero_indices().into_iter().collect();
    if seen.len() != 2 {
        return Err(format!("expected 2 active units for \"the cat\", found {}", seen.len()));
    }
    Ok(format!("{pos} positives balanced to {} instances; binary, duplicate-free, train-only vocabulary", balanced.len()))
}

/// Hand-computed confusion matrices and the bundled reference table.
pub fn metric_fixtures() -> Check {
    let expand = |tp: usize, fp: usize, fn_: usize, tn: usize| {
        let mut p = Vec::new();
        let mut g = Vec::new();
        for (n, pred, gold) in [(tp, true, true), (fp, true, false), (fn_, false, true), (tn, false, false)] {
            p.extend(std::iter::repeat_n(pred, n));
            g.extend(std::iter::repeat_n(gold, n));
        }
        (p, g)
    };
    // (tp, fp, fn, tn) -> (acc, p, r, f1) as exact fractions.
    let cases = [
        ((3usize, 1usize, 1usize, 5usize), [8.0 / 10.0, 3.0 / 4.0, 3.0 / 4.0, 3.0 / 4.0]),
        ((2, 2, 0, 0), [2.0 / 4.0, 2.0 / 4.0, 1.0, 2.0 / 3.0]),
        ((0, 0, 3, 7), [7.0 / 10.0, 0.0, 0.0, 0.0]),
        ((5, 0, 0, 5), [1.0, 1.0, 1.0, 1.0]),
    ];
    for ((tp, fp, fn_, tn), want) in cases {
        let (p, g) = expand(tp, fp, fn_, tn);
        let m = compute_metrics(&p, &g).map_err(|e| e.to_string())?;
        let got = [m.accuracy, m.precision, m.recall, m.f1];
        if got.iter().zip(&want).any(|(a, b)| (a - b).abs() > 1e-15) {
            return Err(format!("counts {:?}: got {got:?}, want {want:?}", (tp, fp, fn_, tn)));
        }
    }

    let exp = reference_rows(Relation::Expansion);
    let ours = exp
        .iter()
        .find(|r| r.system == "VarNDRR")
        .ok_or("EXP reference row for VarNDRR missing")?;
    if ours.f1 != Some(71.48) || ours.accuracy != Some(57.36) {
        return Err(format!("EXP reference row parsed as {ours:?}"));
    }
    let all: usize = Relation::ALL.iter().map(|r| reference_rows(*r).len()).sum();
    if all != 20 {
        return Err(format!("expected 20 reference rows, found {all}"));
    }
    if parse_reference_rows("task,system,acc,p,r,f1\nEXP,x,1,2\n").is_ok() {
        return Err("short reference row accepted".into());
    }
    let table = render_comparison(Relation::Expansion, "this", &MetricsReport::from_counts(559, 431, 15, 41));
    let needle = "57.36   56.46   97.39   71.48";
    if table.lines().filter(|l| l.contains(needle)).count() != 2 {
        return Err(format!("comparison table does not line up:\n{table}"));
    }
    Ok("4 confusion fixtures exact; 20 reference rows parse and render".into())
}
