//! Parameters and forward passes of the recognizer networks (θ) and the
//! prior/posterior approximators (φ).
//!
//! Tied matrices are stored once. `ArgumentWeights::Tied` holds the single
//! matrix that embeds both arguments in the posterior, and
//! `GenerativeParams::w_xp` is the single output matrix of both argument
//! decoders. Because gradients use the same structs, a tied matrix has exactly
//! one gradient slot and one set of optimizer moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    add_assign, add_outer, add_outer_sparse, affine_kernel, matvec_sparse, matvec_transposed,
    sigmoid, softmax, DenseMatrix, DenseVector, RngState,
};

/// Standard deviation of the Gaussian used to initialize every parameter.
pub const INIT_STD: f64 = 0.01;

/// Number of tanh layers between `z` and the relation softmax.
pub const MLP_LAYERS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionsConfig {
    pub d_z: usize,
    pub d_x1: usize,
    pub d_x2: usize,
    pub d_h1: usize,
    pub d_h2: usize,
    pub d_hy: usize,
    pub d_h1p: usize,
    pub d_h2p: usize,
    pub d_m: usize,
    pub d_y: usize,
}

impl Default for DimensionsConfig {
    fn default() -> Self {
        Self::uniform(10_001, 400, 20)
    }
}

impl DimensionsConfig {
    /// One vocabulary size for both arguments and one width for every hidden
    /// layer, including the relation MLP.
    pub fn uniform(vocab: usize, hidden: usize, latent: usize) -> Self {
        Self {
            d_z: latent,
            d_x1: vocab,
            d_x2: vocab,
            d_h1: hidden,
            d_h2: hidden,
            d_hy: hidden,
            d_h1p: hidden,
            d_h2p: hidden,
            d_m: hidden,
            d_y: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("d_z", self.d_z),
            ("d_x1", self.d_x1),
            ("d_x2", self.d_x2),
            ("d_h1", self.d_h1),
            ("d_h2", self.d_h2),
            ("d_hy", self.d_hy),
            ("d_h1p", self.d_h1p),
            ("d_h2p", self.d_h2p),
            ("d_m", self.d_m),
            ("d_y", self.d_y),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.d_y != 2 {
            return Err(Error::Config(format!(
                "d_y must be 2 for one-vs-all tasks, got {}",
                self.d_y
            )));
        }
        // Tied matrices need matching shapes on both sides.
        if self.d_x1 != self.d_x2 || self.d_h1 != self.d_h2 {
            return Err(Error::Config(
                "tied argument encoders require d_x1 == d_x2 and d_h1 == d_h2".into(),
            ));
        }
        if self.d_h1p != self.d_h2p {
            return Err(Error::Config(
                "tied argument decoders require d_h1p == d_h2p".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mu: DenseVector,
    pub log_var: DenseVector,
}

impl GaussianParams {
    pub fn sigma(&self) -> DenseVector {
        self.log_var.iter().map(|lv| (0.5 * lv).exp()).collect::<Vec<_>>().into()
    }

    pub fn dim(&self) -> usize {
        self.mu.dim()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weight: DenseMatrix,
    pub bias: DenseVector,
}

impl DenseLayer {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: DenseMatrix::zeros(out_dim, in_dim),
            bias: DenseVector::zeros(out_dim),
        }
    }
}

/// Input-to-hidden matrices of the two argument branches of an approximator.
#[derive(Clone, Debug, PartialEq)]
pub enum ArgumentWeights {
    Tied(DenseMatrix),
    Untied { arg1: DenseMatrix, arg2: DenseMatrix },
}

impl ArgumentWeights {
    pub fn w_h1(&self) -> &DenseMatrix {
        match self {
            ArgumentWeights::Tied(w) => w,
            ArgumentWeights::Untied { arg1, .. } => arg1,
        }
    }

    pub fn w_h2(&self) -> &DenseMatrix {
        match self {
            ArgumentWeights::Tied(w) => w,
            ArgumentWeights::Untied { arg2, .. } => arg2,
        }
    }

    pub fn is_tied(&self) -> bool {
        matches!(self, ArgumentWeights::Tied(_))
    }
}

/// Relation branch of the posterior: `hy = tanh(W_hy·y + b_hy)` and its
/// contributions to the mean and log-variance.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelBranch {
    pub w_hy: DenseMatrix,
    pub b_hy: DenseVector,
    pub w_mu_y: DenseMatrix,
    pub w_sig_y: DenseMatrix,
}

/// One approximator network producing a diagonal Gaussian over `z`. The
/// posterior has a `label` branch; the prior does not.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianEncoder {
    pub arg: ArgumentWeights,
    pub b_h1: DenseVector,
    pub b_h2: DenseVector,
    pub label: Option<LabelBranch>,
    pub w_mu1: DenseMatrix,
    pub w_mu2: DenseMatrix,
    pub b_mu: DenseVector,
    pub w_sig1: DenseMatrix,
    pub w_sig2: DenseMatrix,
    pub b_sig: DenseVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproximatorParams {
    pub posterior: GaussianEncoder,
    pub prior: GaussianEncoder,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeParams {
    pub w_h1p: DenseMatrix,
    pub b_h1p: DenseVector,
    pub w_h2p: DenseMatrix,
    pub b_h2p: DenseVector,
    /// Output matrix shared by both argument decoders.
    pub w_xp: DenseMatrix,
    pub b_x1p: DenseVector,
    pub b_x2p: DenseVector,
    pub mlp: Vec<DenseLayer>,
    pub w_yp: DenseMatrix,
    pub b_yp: DenseVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dims: DimensionsConfig,
    pub theta: GenerativeParams,
    pub phi: ApproximatorParams,
}

type Named<'a> = Vec<(String, &'a [f64])>;
type NamedMut<'a> = Vec<(String, &'a mut [f64])>;

macro_rules! push_arrays {
    ($out:ident, $prefix:expr, $method:ident, [$($name:literal => $field:expr),* $(,)?]) => {
        {
            $( $out.push((format!("{}.{}", $prefix, $name), $field.$method())); )*
        }
    };
}

impl GaussianEncoder {
    fn zeros(dims: &DimensionsConfig, tied: bool, with_label: bool) -> Self {
        let arg = if tied {
            ArgumentWeights::Tied(DenseMatrix::zeros(dims.d_h1, dims.d_x1))
        } else {
            ArgumentWeights::Untied {
                arg1: DenseMatrix::zeros(dims.d_h1, dims.d_x1),
                arg2: DenseMatrix::zeros(dims.d_h2, dims.d_x2),
            }
        };
        let label = with_label.then(|| LabelBranch {
            w_hy: DenseMatrix::zeros(dims.d_hy, dims.d_y),
            b_hy: DenseVector::zeros(dims.d_hy),
            w_mu_y: DenseMatrix::zeros(dims.d_z, dims.d_hy),
            w_sig_y: DenseMatrix::zeros(dims.d_z, dims.d_hy),
        });
        Self {
            arg,
            b_h1: DenseVector::zeros(dims.d_h1),
            b_h2: DenseVector::zeros(dims.d_h2),
            label,
            w_mu1: DenseMatrix::zeros(dims.d_z, dims.d_h1),
            w_mu2: DenseMatrix::zeros(dims.d_z, dims.d_h2),
            b_mu: DenseVector::zeros(dims.d_z),
            w_sig1: DenseMatrix::zeros(dims.d_z, dims.d_h1),
            w_sig2: DenseMatrix::zeros(dims.d_z, dims.d_h2),
            b_sig: DenseVector::zeros(dims.d_z),
        }
    }

    fn collect<'a>(&'a self, prefix: &str, out: &mut Named<'a>) {
        match &self.arg {
            ArgumentWeights::Tied(w) => push_arrays!(out, prefix, as_slice, ["w_h12" => w]),
            ArgumentWeights::Untied { arg1, arg2 } => {
                push_arrays!(out, prefix, as_slice, ["w_h1" => arg1, "w_h2" => arg2])
            }
        }
        push_arrays!(out, prefix, as_slice, ["b_h1" => self.b_h1, "b_h2" => self.b_h2]);
        if let Some(l) = &self.label {
            push_arrays!(out, prefix, as_slice, [
                "w_hy" => l.w_hy, "b_hy" => l.b_hy, "w_mu_y" => l.w_mu_y, "w_sig_y" => l.w_sig_y,
            ]);
        }
        push_arrays!(out, prefix, as_slice, [
            "w_mu1" => self.w_mu1, "w_mu2" => self.w_mu2, "b_mu" => self.b_mu,
            "w_sig1" => self.w_sig1, "w_sig2" => self.w_sig2, "b_sig" => self.b_sig,
        ]);
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut NamedMut<'a>) {
        match &mut self.arg {
            ArgumentWeights::Tied(w) => push_arrays!(out, prefix, as_mut_slice, ["w_h12" => w]),
            ArgumentWeights::Untied { arg1, arg2 } => {
                push_arrays!(out, prefix, as_mut_slice, ["w_h1" => arg1, "w_h2" => arg2])
            }
        }
        push_arrays!(out, prefix, as_mut_slice, ["b_h1" => self.b_h1, "b_h2" => self.b_h2]);
        if let Some(l) = &mut self.label {
            push_arrays!(out, prefix, as_mut_slice, [
                "w_hy" => l.w_hy, "b_hy" => l.b_hy, "w_mu_y" => l.w_mu_y, "w_sig_y" => l.w_sig_y,
            ]);
        }
        push_arrays!(out, prefix, as_mut_slice, [
            "w_mu1" => self.w_mu1, "w_mu2" => self.w_mu2, "b_mu" => self.b_mu,
            "w_sig1" => self.w_sig1, "w_sig2" => self.w_sig2, "b_sig" => self.b_sig,
        ]);
    }

    fn check_inputs(
        &self,
        op: &'static str,
        x1: &DenseVector,
        x2: &DenseVector,
        y: Option<&DenseVector>,
    ) -> Result<()> {
        let (w1, w2) = (self.arg.w_h1(), self.arg.w_h2());
        if x1.dim() != w1.cols() || x2.dim() != w2.cols() {
            return Err(Error::shape(
                op,
                format!("x1[{}], x2[{}]", w1.cols(), w2.cols()),
                format!("x1[{}], x2[{}]", x1.dim(), x2.dim()),
            ));
        }
        if let (Some(l), Some(y)) = (&self.label, y) {
            if y.dim() != l.w_hy.cols() {
                return Err(Error::shape(op, format!("y[{}]", l.w_hy.cols()), format!("y[{}]", y.dim())));
            }
        }
        Ok(())
    }

    /// Forward pass. `y` is used only when the encoder has a label branch.
    pub(crate) fn forward(
        &self,
        x1: &DenseVector,
        x2: &DenseVector,
        y: Option<&DenseVector>,
    ) -> EncoderTrace {
        let support1 = x1.nonzero_indices();
        let support2 = x2.nonzero_indices();
        let h1 = tanh_add(matvec_sparse(self.arg.w_h1(), x1.as_slice(), &support1), &self.b_h1);
        let h2 = tanh_add(matvec_sparse(self.arg.w_h2(), x2.as_slice(), &support2), &self.b_h2);

        let mut mu = affine_kernel(&self.w_mu1, &h1, self.b_mu.as_slice());
        add_assign(&mut mu, &matvec(&self.w_mu2, &h2));
        let mut log_var = affine_kernel(&self.w_sig1, &h1, self.b_sig.as_slice());
        add_assign(&mut log_var, &matvec(&self.w_sig2, &h2));

        let hy = match (&self.label, y) {
            (Some(l), Some(y)) => {
                let hy: Vec<f64> = affine_kernel(&l.w_hy, y.as_slice(), l.b_hy.as_slice())
                    .into_iter()
                    .map(f64::tanh)
                    .collect();
                add_assign(&mut mu, &matvec(&l.w_mu_y, &hy));
                add_assign(&mut log_var, &matvec(&l.w_sig_y, &hy));
                Some(hy)
            }
            _ => None,
        };

        EncoderTrace {
            support1,
            support2,
            h1,
            h2,
            hy,
            gaussian: GaussianParams {
                mu: mu.into(),
                log_var: log_var.into(),
            },
        }
    }

    /// Accumulates into `grad` the gradient of a scalar whose derivatives with
    /// respect to this encoder's mean and log-variance are `d_mu`, `d_log_var`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward(
        &self,
        trace: &EncoderTrace,
        x1: &DenseVector,
        x2: &DenseVector,
        y: Option<&DenseVector>,
        d_mu: &[f64],
        d_log_var: &[f64],
        grad: &mut GaussianEncoder,
    ) {
        add_assign(grad.b_mu.as_mut_slice(), d_mu);
        add_assign(grad.b_sig.as_mut_slice(), d_log_var);
        add_outer(&mut grad.w_mu1, d_mu, &trace.h1);
        add_outer(&mut grad.w_mu2, d_mu, &trace.h2);
        add_outer(&mut grad.w_sig1, d_log_var, &trace.h1);
        add_outer(&mut grad.w_sig2, d_log_var, &trace.h2);

        let d_pre1 = tanh_backward(
            &trace.h1,
            sum2(matvec_transposed(&self.w_mu1, d_mu), matvec_transposed(&self.w_sig1, d_log_var)),
        );
        let d_pre2 = tanh_backward(
            &trace.h2,
            sum2(matvec_transposed(&self.w_mu2, d_mu), matvec_transposed(&self.w_sig2, d_log_var)),
        );
        add_assign(grad.b_h1.as_mut_slice(), &d_pre1);
        add_assign(grad.b_h2.as_mut_slice(), &d_pre2);
        match &mut grad.arg {
            ArgumentWeights::Tied(g) => {
                add_outer_sparse(g, &d_pre1, x1.as_slice(), &trace.support1);
                add_outer_sparse(g, &d_pre2, x2.as_slice(), &trace.support2);
            }
            ArgumentWeights::Untied { arg1, arg2 } => {
                add_outer_sparse(arg1, &d_pre1, x1.as_slice(), &trace.support1);
                add_outer_sparse(arg2, &d_pre2, x2.as_slice(), &trace.support2);
            }
        }

        if let (Some(l), Some(gl), Some(hy), Some(y)) =
            (&self.label, grad.label.as_mut(), trace.hy.as_ref(), y)
        {
            add_outer(&mut gl.w_mu_y, d_mu, hy);
            add_outer(&mut gl.w_sig_y, d_log_var, hy);
            let d_pre_y = tanh_backward(
                hy,
                sum2(matvec_transposed(&l.w_mu_y, d_mu), matvec_transposed(&l.w_sig_y, d_log_var)),
            );
            add_assign(gl.b_hy.as_mut_slice(), &d_pre_y);
            add_outer(&mut gl.w_hy, &d_pre_y, y.as_slice());
        }
    }
}

/// Intermediate values of one approximator forward pass.
#[derive(Clone, Debug)]
pub(crate) struct EncoderTrace {
    support1: Vec<usize>,
    support2: Vec<usize>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    hy: Option<Vec<f64>>,
    pub(crate) gaussian: GaussianParams,
}

impl ApproximatorParams {
    fn zeros(dims: &DimensionsConfig) -> Self {
        Self {
            posterior: GaussianEncoder::zeros(dims, true, true),
            prior: GaussianEncoder::zeros(dims, false, false),
        }
    }
}

impl GenerativeParams {
    fn zeros(dims: &DimensionsConfig) -> Self {
        let mut mlp = Vec::with_capacity(MLP_LAYERS);
        mlp.push(DenseLayer::zeros(dims.d_m, dims.d_z));
        for _ in 1..MLP_LAYERS {
            mlp.push(DenseLayer::zeros(dims.d_m, dims.d_m));
        }
        Self {
            w_h1p: DenseMatrix::zeros(dims.d_h1p, dims.d_z),
            b_h1p: DenseVector::zeros(dims.d_h1p),
            w_h2p: DenseMatrix::zeros(dims.d_h2p, dims.d_z),
            b_h2p: DenseVector::zeros(dims.d_h2p),
            w_xp: DenseMatrix::zeros(dims.d_x1, dims.d_h1p),
            b_x1p: DenseVector::zeros(dims.d_x1),
            b_x2p: DenseVector::zeros(dims.d_x2),
            mlp,
            w_yp: DenseMatrix::zeros(dims.d_y, dims.d_m),
            b_yp: DenseVector::zeros(dims.d_y),
        }
    }

    pub fn w_x1p(&self) -> &DenseMatrix {
        &self.w_xp
    }

    pub fn w_x2p(&self) -> &DenseMatrix {
        &self.w_xp
    }

    fn latent_dim(&self) -> usize {
        self.w_h1p.cols()
    }

    fn collect<'a>(&'a self, out: &mut Named<'a>) {
        push_arrays!(out, "theta", as_slice, [
            "w_h1p" => self.w_h1p, "b_h1p" => self.b_h1p, "w_h2p" => self.w_h2p, "b_h2p" => self.b_h2p,
            "w_x12p" => self.w_xp, "b_x1p" => self.b_x1p, "b_x2p" => self.b_x2p,
        ]);
        for (i, layer) in self.mlp.iter().enumerate() {
            let prefix = format!("theta.mlp{i}");
            push_arrays!(out, prefix, as_slice, ["weight" => layer.weight, "bias" => layer.bias]);
        }
        push_arrays!(out, "theta", as_slice, ["w_yp" => self.w_yp, "b_yp" => self.b_yp]);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut NamedMut<'a>) {
        push_arrays!(out, "theta", as_mut_slice, [
            "w_h1p" => self.w_h1p, "b_h1p" => self.b_h1p, "w_h2p" => self.w_h2p, "b_h2p" => self.b_h2p,
            "w_x12p" => self.w_xp, "b_x1p" => self.b_x1p, "b_x2p" => self.b_x2p,
        ]);
        for (i, layer) in self.mlp.iter_mut().enumerate() {
            let prefix = format!("theta.mlp{i}");
            push_arrays!(out, prefix, as_mut_slice, ["weight" => layer.weight, "bias" => layer.bias]);
        }
        push_arrays!(out, "theta", as_mut_slice, ["w_yp" => self.w_yp, "b_yp" => self.b_yp]);
    }

    fn check_latent(&self, op: &'static str, z: &DenseVector) -> Result<()> {
        if z.dim() != self.latent_dim() {
            return Err(Error::shape(op, format!("z[{}]", self.latent_dim()), format!("z[{}]", z.dim())));
        }
        Ok(())
    }

    pub(crate) fn forward_arguments(&self, z: &[f64]) -> ArgumentTrace {
        let h1p = tanh_add(affine_kernel(&self.w_h1p, z, &vec![0.0; self.w_h1p.rows()]), &self.b_h1p);
        let h2p = tanh_add(affine_kernel(&self.w_h2p, z, &vec![0.0; self.w_h2p.rows()]), &self.b_h2p);
        let x1p = affine_kernel(&self.w_xp, &h1p, self.b_x1p.as_slice())
            .into_iter()
            .map(sigmoid)
            .collect();
        let x2p = affine_kernel(&self.w_xp, &h2p, self.b_x2p.as_slice())
            .into_iter()
            .map(sigmoid)
            .collect();
        ArgumentTrace { h1p, h2p, x1p, x2p }
    }

    /// `d_pre1`, `d_pre2` are derivatives with respect to the sigmoid inputs.
    /// Returns the derivative with respect to `z`.
    pub(crate) fn backward_arguments(
        &self,
        trace: &ArgumentTrace,
        z: &[f64],
        d_pre1: &[f64],
        d_pre2: &[f64],
        grad: &mut GenerativeParams,
    ) -> Vec<f64> {
        add_outer(&mut grad.w_xp, d_pre1, &trace.h1p);
        add_outer(&mut grad.w_xp, d_pre2, &trace.h2p);
        add_assign(grad.b_x1p.as_mut_slice(), d_pre1);
        add_assign(grad.b_x2p.as_mut_slice(), d_pre2);

        let d_h1 = tanh_backward(&trace.h1p, matvec_transposed(&self.w_xp, d_pre1));
        let d_h2 = tanh_backward(&trace.h2p, matvec_transposed(&self.w_xp, d_pre2));
        add_assign(grad.b_h1p.as_mut_slice(), &d_h1);
        add_assign(grad.b_h2p.as_mut_slice(), &d_h2);
        add_outer(&mut grad.w_h1p, &d_h1, z);
        add_outer(&mut grad.w_h2p, &d_h2, z);
        sum2(matvec_transposed(&self.w_h1p, &d_h1), matvec_transposed(&self.w_h2p, &d_h2))
    }

    pub(crate) fn forward_relation(&self, z: &[f64]) -> RelationTrace {
        let mut activations = Vec::with_capacity(self.mlp.len() + 1);
        activations.push(z.to_vec());
        for layer in &self.mlp {
            let input = activations.last().expect("non-empty");
            let out = tanh_add(affine_kernel(&layer.weight, input, &vec![0.0; layer.bias.dim()]), &layer.bias);
            activations.push(out);
        }
        let top = activations.last().expect("non-empty");
        let probs = softmax(&affine_kernel(&self.w_yp, top, self.b_yp.as_slice()));
        RelationTrace { activations, probs }
    }

    /// `d_logits` is the derivative with respect to the softmax input.
    /// Returns the derivative with respect to `z`.
    pub(crate) fn backward_relation(
        &self,
        trace: &RelationTrace,
        d_logits: &[f64],
        grad: &mut GenerativeParams,
    ) -> Vec<f64> {
        let top = trace.activations.last().expect("non-empty");
        add_outer(&mut grad.w_yp, d_logits, top);
        add_assign(grad.b_yp.as_mut_slice(), d_logits);
        let mut d_out = matvec_transposed(&self.w_yp, d_logits);
        for (k, layer) in self.mlp.iter().enumerate().rev() {
            let d_pre = tanh_backward(&trace.activations[k + 1], d_out);
            let g = &mut grad.mlp[k];
            add_assign(g.bias.as_mut_slice(), &d_pre);
            add_outer(&mut g.weight, &d_pre, &trace.activations[k]);
            d_out = matvec_transposed(&layer.weight, &d_pre);
        }
        d_out
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ArgumentTrace {
    h1p: Vec<f64>,
    h2p: Vec<f64>,
    pub(crate) x1p: Vec<f64>,
    pub(crate) x2p: Vec<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct RelationTrace {
    activations: Vec<Vec<f64>>,
    pub(crate) probs: Vec<f64>,
}

impl ModelParams {
    /// All parameters zero. Mostly useful for tests and as a gradient buffer.
    pub fn zeros(dims: DimensionsConfig) -> Result<Self> {
        dims.validate()?;
        Ok(Self {
            dims,
            theta: GenerativeParams::zeros(&dims),
            phi: ApproximatorParams::zeros(&dims),
        })
    }

    /// Every trainable array exactly once, in a fixed order. Tied matrices
    /// appear under a single name.
    pub fn arrays(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        self.theta.collect(&mut out);
        self.phi.posterior.collect("phi.posterior", &mut out);
        self.phi.prior.collect("phi.prior", &mut out);
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        self.theta.collect_mut(&mut out);
        self.phi.posterior.collect_mut("phi.posterior", &mut out);
        self.phi.prior.collect_mut("phi.prior", &mut out);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.arrays().iter().map(|(_, a)| a.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|(_, a)| a.iter().all(|v| v.is_finite()))
    }
}

/// Draws every weight and bias from N(0, 0.01²), one array at a time in the
/// order of [`ModelParams::arrays`].
pub fn init_params(dims: DimensionsConfig, rng: &mut RngState) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(dims)?;
    for (_, array) in params.arrays_mut() {
        for v in array.iter_mut() {
            *v = INIT_STD * rng.standard_normal();
        }
    }
    Ok(params)
}

/// Posterior q(z | x1, x2, y).
pub fn encode_posterior(
    phi: &ApproximatorParams,
    x1: &DenseVector,
    x2: &DenseVector,
    y: &DenseVector,
) -> Result<GaussianParams> {
    let enc = &phi.posterior;
    enc.check_inputs("encode_posterior", x1, x2, Some(y))?;
    Ok(enc.forward(x1, x2, Some(y)).gaussian)
}

/// Prior q'(z | x1, x2).
pub fn encode_prior(
    phi: &ApproximatorParams,
    x1: &DenseVector,
    x2: &DenseVector,
) -> Result<GaussianParams> {
    let enc = &phi.prior;
    enc.check_inputs("encode_prior", x1, x2, None)?;
    Ok(enc.forward(x1, x2, None).gaussian)
}

/// `μ + exp(½·log σ²) ⊙ ε`.
pub fn reparameterize(g: &GaussianParams, eps: &DenseVector) -> Result<DenseVector> {
    if eps.dim() != g.dim() || g.log_var.dim() != g.dim() {
        return Err(Error::shape("reparameterize", format!("eps[{}]", g.dim()), format!("eps[{}]", eps.dim())));
    }
    Ok(g
        .mu
        .iter()
        .zip(g.log_var.iter())
        .zip(eps.iter())
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect::<Vec<_>>()
        .into())
}

/// Bernoulli means of both argument bags given `z`.
pub fn decode_arguments(
    theta: &GenerativeParams,
    z: &DenseVector,
) -> Result<(DenseVector, DenseVector)> {
    theta.check_latent("decode_arguments", z)?;
    let trace = theta.forward_arguments(z.as_slice());
    Ok((trace.x1p.into(), trace.x2p.into()))
}

/// Relation distribution y' given `z`.
pub fn decode_relation(theta: &GenerativeParams, z: &DenseVector) -> Result<DenseVector> {
    theta.check_latent("decode_relation", z)?;
    Ok(theta.forward_relation(z.as_slice()).probs.into())
}

fn matvec(w: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    affine_kernel(w, v, &vec![0.0; w.rows()])
}

fn tanh_add(mut pre: Vec<f64>, bias: &DenseVector) -> Vec<f64> {
    for (p, b) in pre.iter_mut().zip(bias.iter()) {
        *p = (*p + b).tanh();
    }
    pre
}

/// Multiplies an upstream gradient by tanh' evaluated from the tanh output.
fn tanh_backward(out: &[f64], mut upstream: Vec<f64>) -> Vec<f64> {
    for (u, h) in upstream.iter_mut().zip(out) {
        *u *= 1.0 - h * h;
    }
    upstream
}

fn sum2(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    add_assign(&mut a, &b);
    a
}
