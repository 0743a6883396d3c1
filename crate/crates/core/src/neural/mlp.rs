//! Swish multilayer perceptron with hand-written reverse-mode gradients.

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Softmax over `k` classes.
    SoftmaxClasses(usize),
    /// Unconstrained `d`-vector.
    Velocity(usize),
}

impl Head {
    pub fn width(&self) -> usize {
        match *self {
            Head::SoftmaxClasses(k) => k,
            Head::Velocity(d) => d,
        }
    }
}

/// How the scalar time enters the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeEmbedding {
    /// The network ignores time.
    None,
    ScalarAppend,
    /// `width / 2` sine and cosine features at geometric frequencies.
    Sinusoidal(usize),
}

impl TimeEmbedding {
    pub fn width(&self) -> usize {
        match *self {
            TimeEmbedding::None => 0,
            TimeEmbedding::ScalarAppend => 1,
            TimeEmbedding::Sinusoidal(w) => w,
        }
    }

    fn write(&self, t: f64, out: &mut [f64]) {
        match *self {
            TimeEmbedding::None => {}
            TimeEmbedding::ScalarAppend => out[0] = t,
            TimeEmbedding::Sinusoidal(w) => {
                let half = w / 2;
                for j in 0..half {
                    let freq = (-(100f64).ln() * j as f64 / half.max(1) as f64).exp() * 10.0;
                    out[2 * j] = (freq * t).sin();
                    out[2 * j + 1] = (freq * t).cos();
                }
                if w % 2 == 1 {
                    out[w - 1] = t;
                }
            }
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

/// First and second derivatives of swish.
#[inline]
fn swish_derivs(x: f64) -> (f64, f64) {
    let s = sigmoid(x);
    let q = s * (1.0 - s);
    (s + x * q, q * (2.0 + x * (1.0 - 2.0 * s)))
}

/// Numerically stable log-softmax.
pub fn log_softmax(o: &[f64]) -> Vec<f64> {
    let m = o.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + o.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    o.iter().map(|v| v - lse).collect()
}

pub fn softmax(o: &[f64]) -> Vec<f64> {
    log_softmax(o)
        .into_iter()
        .map(|l| l.exp().max(f64::MIN_POSITIVE))
        .collect()
}

/// Parameters are one flat vector, layer by layer, each layer storing its
/// row-major `out x in` weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    params: Vec<f64>,
    head: Head,
    time_embedding: TimeEmbedding,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Tape {
    /// `post[0]` is the input, `post[l]` the activation of layer `l`.
    post: Vec<Vec<f64>>,
    /// Pre-activations, one per layer; the last is the raw output.
    pre: Vec<Vec<f64>>,
}

impl Tape {
    pub(crate) fn output(&self) -> &[f64] {
        self.pre.last().expect("at least one layer")
    }
}

impl MlpModel {
    /// Glorot-uniform initialised network with zero biases.
    pub fn new(
        data_dim: usize,
        hidden: &[usize],
        head: Head,
        time_embedding: TimeEmbedding,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let mut m = Self::zeros(data_dim, hidden, head, time_embedding)?;
        let dims = m.layer_dims.clone();
        let mut off = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut m.params[off..off + fan_in * fan_out] {
                *p = (2.0 * rng.uniform() - 1.0) * limit;
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(m)
    }

    pub fn zeros(data_dim: usize, hidden: &[usize], head: Head, time_embedding: TimeEmbedding) -> Result<Self> {
        if data_dim == 0 {
            return Err(Error::config("network input dimension must be positive"));
        }
        if head.width() == 0 || hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("layer widths must be positive"));
        }
        let mut dims = vec![data_dim + time_embedding.width()];
        dims.extend_from_slice(hidden);
        dims.push(head.width());
        let n = param_count(&dims);
        Ok(Self {
            layer_dims: dims,
            params: vec![0.0; n],
            head,
            time_embedding,
        })
    }

    /// Assemble a model from explicit dims and flat parameters.
    pub fn from_parts(
        layer_dims: Vec<usize>,
        params: Vec<f64>,
        head: Head,
        time_embedding: TimeEmbedding,
    ) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&w| w == 0) {
            return Err(Error::size(format!("invalid layer dims {layer_dims:?}")));
        }
        if *layer_dims.last().unwrap() != head.width() {
            return Err(Error::size(format!(
                "output width {} does not match head {head:?}",
                layer_dims.last().unwrap()
            )));
        }
        if layer_dims[0] <= time_embedding.width() {
            return Err(Error::size("input layer leaves no room for data"));
        }
        if params.len() != param_count(&layer_dims) {
            return Err(Error::size(format!(
                "{} parameters for dims {layer_dims:?} (need {})",
                params.len(),
                param_count(&layer_dims)
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::numeric("non-finite parameter"));
        }
        Ok(Self {
            layer_dims,
            params,
            head,
            time_embedding,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn time_embedding(&self) -> TimeEmbedding {
        self.time_embedding
    }

    /// Dimension of the data part of the input.
    pub fn data_dim(&self) -> usize {
        self.layer_dims[0] - self.time_embedding.width()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64], usize, usize) {
        let mut off = 0;
        for w in self.layer_dims.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        let (fi, fo) = (self.layer_dims[l], self.layer_dims[l + 1]);
        (
            &self.params[off..off + fi * fo],
            &self.params[off + fi * fo..off + fi * fo + fo],
            fi,
            fo,
        )
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.n_layers());
        let mut off = 0;
        for w in self.layer_dims.windows(2) {
            offs.push(off);
            off += w[0] * w[1] + w[1];
        }
        offs
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.data_dim() {
            return Err(Error::size(format!(
                "network expects {} inputs, got {}",
                self.data_dim(),
                z.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn input(&self, z: &[f64], t: f64) -> Vec<f64> {
        let d = self.data_dim();
        let mut x = vec![0.0; self.layer_dims[0]];
        x[..d].copy_from_slice(z);
        self.time_embedding.write(t, &mut x[d..]);
        x
    }

    pub(crate) fn tape(&self, x: &[f64]) -> Tape {
        let nl = self.n_layers();
        let mut post = Vec::with_capacity(nl);
        let mut pre = Vec::with_capacity(nl);
        post.push(x.to_vec());
        for l in 0..nl {
            let (w, b, fi, fo) = self.layer(l);
            let h = &post[l];
            let mut a = b.to_vec();
            for (o, ao) in a.iter_mut().enumerate() {
                let row = &w[o * fi..(o + 1) * fi];
                *ao += row.iter().zip(h).map(|(p, q)| p * q).sum::<f64>();
            }
            debug_assert_eq!(a.len(), fo);
            if l + 1 < nl {
                post.push(a.iter().map(|&v| swish(v)).collect());
            }
            pre.push(a);
        }
        Tape { post, pre }
    }

    /// Raw network output (logits for the softmax head).
    pub fn raw_output(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_input(z)?;
        Ok(self.tape(&self.input(z, t)).output().to_vec())
    }

    /// Class probabilities for the softmax head, velocities otherwise.
    pub fn forward(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        let o = self.raw_output(z, t)?;
        Ok(match self.head {
            Head::SoftmaxClasses(_) => softmax(&o),
            Head::Velocity(_) => o,
        })
    }

    pub fn log_probs(&self, z: &[f64], t: f64) -> Result<Vec<f64>> {
        if !matches!(self.head, Head::SoftmaxClasses(_)) {
            return Err(Error::Build("log-probabilities need a softmax head".into()));
        }
        Ok(log_softmax(&self.raw_output(z, t)?))
    }

    /// Reverse pass from output adjoint `d_out`. Accumulates parameter
    /// gradients into `grads` when given and returns the input adjoint.
    pub(crate) fn backward(&self, tape: &Tape, d_out: &[f64], mut grads: Option<&mut [f64]>) -> Vec<f64> {
        let offs = self.layer_offsets();
        let mut adj = d_out.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (w, _, fi, fo) = self.layer(l);
            if l + 1 < self.n_layers() {
                for (o, g) in adj.iter_mut().enumerate() {
                    *g *= swish_derivs(tape.pre[l][o]).0;
                }
            }
            let h = &tape.post[l];
            if let Some(gr) = grads.as_deref_mut() {
                let off = offs[l];
                for o in 0..fo {
                    let go = adj[o];
                    if go != 0.0 {
                        let row = &mut gr[off + o * fi..off + (o + 1) * fi];
                        for (r, hv) in row.iter_mut().zip(h) {
                            *r += go * hv;
                        }
                    }
                    gr[off + fi * fo + o] += go;
                }
            }
            let mut prev = vec![0.0; fi];
            for o in 0..fo {
                let go = adj[o];
                if go != 0.0 {
                    for (p, wv) in prev.iter_mut().zip(&w[o * fi..(o + 1) * fi]) {
                        *p += go * wv;
                    }
                }
            }
            adj = prev;
        }
        adj
    }

    /// Gradient with respect to the data input of `coeffᵀ o(z, t)` where `o`
    /// is the raw output.
    pub fn grad_input_linear(&self, z: &[f64], t: f64, coeff: &[f64]) -> Result<Vec<f64>> {
        self.check_input(z)?;
        if coeff.len() != self.head.width() {
            return Err(Error::size("output coefficient length mismatch"));
        }
        let tape = self.tape(&self.input(z, t));
        let mut g = self.backward(&tape, coeff, None);
        g.truncate(self.data_dim());
        Ok(g)
    }

    /// `∇_z log p_s(z)` for the softmax head.
    pub fn grad_input_logprob(&self, z: &[f64], t: f64, s: usize) -> Result<Vec<f64>> {
        let k = match self.head {
            Head::SoftmaxClasses(k) => k,
            Head::Velocity(_) => return Err(Error::Build("log-probabilities need a softmax head".into())),
        };
        if s >= k {
            return Err(Error::Index(format!("class {s} of {k}")));
        }
        self.check_input(z)?;
        let tape = self.tape(&self.input(z, t));
        let p = softmax(tape.output());
        let mut coeff: Vec<f64> = p.iter().map(|v| -v).collect();
        coeff[s] += 1.0;
        let mut g = self.backward(&tape, &coeff, None);
        g.truncate(self.data_dim());
        Ok(g)
    }

    /// Parameter gradient of a standard loss averaged over the batch.
    pub fn grad_params(&self, loss: LossFn, batch: &Batch<'_>) -> Result<(f64, Vec<f64>)> {
        let n = batch.inputs.len();
        if n == 0 || batch.times.len() != n {
            return Err(Error::size("batch inputs and times must be non-empty and aligned"));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut total = 0.0;
        let inv_n = 1.0 / n as f64;
        match (loss, self.head, &batch.targets) {
            (LossFn::CrossEntropy, Head::SoftmaxClasses(k), Targets::Classes(labels)) => {
                if labels.len() != n {
                    return Err(Error::size("label count mismatch"));
                }
                for i in 0..n {
                    self.check_input(batch.inputs[i])?;
                    let s = labels[i];
                    if s >= k {
                        return Err(Error::Index(format!("class {s} of {k}")));
                    }
                    let tape = self.tape(&self.input(batch.inputs[i], batch.times[i]));
                    let lp = log_softmax(tape.output());
                    total -= lp[s] * inv_n;
                    let mut d: Vec<f64> = lp.iter().map(|l| l.exp() * inv_n).collect();
                    d[s] -= inv_n;
                    self.backward(&tape, &d, Some(&mut grads));
                }
            }
            (LossFn::SquaredError, Head::Velocity(w), Targets::Values(ys)) => {
                if ys.len() != n {
                    return Err(Error::size("target count mismatch"));
                }
                for i in 0..n {
                    self.check_input(batch.inputs[i])?;
                    if ys[i].len() != w {
                        return Err(Error::size("target width mismatch"));
                    }
                    let tape = self.tape(&self.input(batch.inputs[i], batch.times[i]));
                    let d: Vec<f64> = tape
                        .output()
                        .iter()
                        .zip(ys[i])
                        .map(|(o, y)| {
                            total += (o - y) * (o - y) * inv_n;
                            2.0 * (o - y) * inv_n
                        })
                        .collect();
                    self.backward(&tape, &d, Some(&mut grads));
                }
            }
            (loss, head, _) => {
                return Err(Error::Build(format!(
                    "loss {loss:?} is not supported for head {head:?} with these targets"
                )))
            }
        }
        Ok((total, grads))
    }

    /// Value and parameter gradient of the classification-diffusion loss
    ///
    /// `α/B Σ -log p_{s_i}(z_i) + w/B Σ ||σ_i (P ∇_z(o_K - o_{s_i}) + z_i) - ε_i||²`
    ///
    /// where `K` is the last class and `P` an optional symmetric
    /// preconditioner. The second term differentiates an input gradient, so
    /// each example runs a tangent pass in the direction of the residual
    /// adjoint followed by a joint reverse pass over primal and tangent.
    pub fn grad_params_of_input_grad(&self, loss: &MixtureLoss<'_>, batch: &MixtureBatch<'_>) -> Result<MixtureGrad> {
        let k = match self.head {
            Head::SoftmaxClasses(k) => k,
            Head::Velocity(_) => return Err(Error::Build("the mixture loss needs a softmax head".into())),
        };
        let n = batch.inputs.len();
        let d = self.data_dim();
        if n == 0 || batch.labels.len() != n || batch.targets.len() != n || batch.scales.len() != n {
            return Err(Error::size("mixture batch fields must be non-empty and aligned"));
        }
        if let Some(p) = loss.precond {
            if p.len() != d * d {
                return Err(Error::size("preconditioner must be d x d"));
            }
        }
        let inv_n = 1.0 / n as f64;
        let mut out = MixtureGrad {
            ce: 0.0,
            mse: 0.0,
            grads: vec![0.0; self.params.len()],
        };
        let need_mse = loss.mse_weight != 0.0;
        for i in 0..n {
            let z = batch.inputs[i];
            self.check_input(z)?;
            let s = batch.labels[i];
            if s >= k {
                return Err(Error::Index(format!("class {s} of {k}")));
            }
            if batch.targets[i].len() != d {
                return Err(Error::size("target width mismatch"));
            }
            let x = self.input(z, 0.0);
            let tape = self.tape(&x);
            let lp = log_softmax(tape.output());
            out.ce -= lp[s] * inv_n;
            let mut d_o: Vec<f64> = lp.iter().map(|l| l.exp() * loss.alpha * inv_n).collect();
            d_o[s] -= loss.alpha * inv_n;

            if !need_mse {
                self.backward(&tape, &d_o, Some(&mut out.grads));
                continue;
            }
            let mut c = vec![0.0; k];
            c[k - 1] += 1.0;
            c[s] -= 1.0;
            let g_full = self.backward(&tape, &c, None);
            let g = &g_full[..d];
            let pg = apply_precond(loss.precond, g, d);
            let sigma = batch.scales[i];
            let r: Vec<f64> = (0..d).map(|j| sigma * (pg[j] + z[j]) - batch.targets[i][j]).collect();
            out.mse += r.iter().map(|v| v * v).sum::<f64>() * inv_n;
            let coef = 2.0 * loss.mse_weight * sigma * inv_n;
            let scaled: Vec<f64> = r.iter().map(|v| v * coef).collect();
            let g_bar = apply_precond(loss.precond, &scaled, d);
            let mut dot_x = vec![0.0; x.len()];
            dot_x[..d].copy_from_slice(&g_bar);
            self.dual_backward(&tape, &dot_x, &d_o, &c, &mut out.grads);
        }
        Ok(out)
    }

    /// Tangent pass along `dot_x`, then the reverse pass of
    /// `d_outᵀ o + cᵀ ȯ` with respect to the parameters.
    fn dual_backward(&self, tape: &Tape, dot_x: &[f64], d_out: &[f64], c: &[f64], grads: &mut [f64]) {
        let nl = self.n_layers();
        let offs = self.layer_offsets();
        // tangents of pre-activations and activations
        let mut dot_pre: Vec<Vec<f64>> = Vec::with_capacity(nl);
        let mut dot_post: Vec<Vec<f64>> = Vec::with_capacity(nl);
        dot_post.push(dot_x.to_vec());
        for l in 0..nl {
            let (w, _, fi, fo) = self.layer(l);
            let hp = &dot_post[l];
            let da: Vec<f64> = (0..fo)
                .map(|o| w[o * fi..(o + 1) * fi].iter().zip(hp).map(|(p, q)| p * q).sum())
                .collect();
            if l + 1 < nl {
                dot_post.push(
                    da.iter()
                        .zip(&tape.pre[l])
                        .map(|(t, a)| swish_derivs(*a).0 * t)
                        .collect(),
                );
            }
            dot_pre.push(da);
        }

        let mut adj_a = d_out.to_vec();
        let mut adj_da = c.to_vec();
        for l in (0..nl).rev() {
            let (w, _, fi, fo) = self.layer(l);
            if l + 1 < nl {
                for o in 0..fo {
                    let (s1, s2) = swish_derivs(tape.pre[l][o]);
                    let h_bar = adj_a[o];
                    let hd_bar = adj_da[o];
                    adj_da[o] = hd_bar * s1;
                    adj_a[o] = h_bar * s1 + hd_bar * dot_pre[l][o] * s2;
                }
            }
            let h = &tape.post[l];
            let hd = &dot_post[l];
            let off = offs[l];
            for o in 0..fo {
                let (ga, gd) = (adj_a[o], adj_da[o]);
                let row = &mut grads[off + o * fi..off + (o + 1) * fi];
                for ((r, hv), hdv) in row.iter_mut().zip(h).zip(hd) {
                    *r += ga * hv + gd * hdv;
                }
                grads[off + fi * fo + o] += ga;
            }
            if l > 0 {
                let mut prev_a = vec![0.0; fi];
                let mut prev_da = vec![0.0; fi];
                for o in 0..fo {
                    let wr = &w[o * fi..(o + 1) * fi];
                    let (ga, gd) = (adj_a[o], adj_da[o]);
                    for j in 0..fi {
                        prev_a[j] += ga * wr[j];
                        prev_da[j] += gd * wr[j];
                    }
                }
                adj_a = prev_a;
                adj_da = prev_da;
            }
        }
    }
}

fn apply_precond(p: Option<&[f64]>, x: &[f64], d: usize) -> Vec<f64> {
    match p {
        None => x.to_vec(),
        Some(m) => (0..d)
            .map(|i| m[i * d..(i + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect(),
    }
}

pub(crate) fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossFn {
    /// Mean negative log-probability of the labelled class.
    CrossEntropy,
    /// Mean squared Euclidean error of the raw output.
    SquaredError,
}

#[derive(Debug, Clone)]
pub enum Targets<'a> {
    Classes(&'a [usize]),
    Values(Vec<&'a [f64]>),
}

#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub inputs: Vec<&'a [f64]>,
    pub times: Vec<f64>,
    pub targets: Targets<'a>,
}

/// Weights of the classification-diffusion loss.
#[derive(Debug, Clone, Copy)]
pub struct MixtureLoss<'a> {
    pub alpha: f64,
    pub mse_weight: f64,
    /// Row-major `d x d` symmetric preconditioner; identity when absent.
    pub precond: Option<&'a [f64]>,
}

#[derive(Debug, Clone)]
pub struct MixtureBatch<'a> {
    /// Diffused inputs `z`.
    pub inputs: Vec<&'a [f64]>,
    pub labels: Vec<usize>,
    /// Noise `ε` that produced each input.
    pub targets: Vec<&'a [f64]>,
    /// `√(1 - e^{-2 T_s})` for each example.
    pub scales: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MixtureGrad {
    /// Unweighted mean cross-entropy.
    pub ce: f64,
    /// Unweighted mean squared noise-prediction error.
    pub mse: f64,
    /// Gradient of `α ce + mse_weight mse`.
    pub grads: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_net(seed: u64, d: usize, hidden: &[usize], head: Head, emb: TimeEmbedding) -> MlpModel {
        let mut rng = RngStream::new(seed, 0);
        let mut m = MlpModel::new(d, hidden, head, emb, &mut rng).unwrap();
        for p in m.params_mut() {
            *p += 0.3 * rng.normal();
        }
        m
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn zero_params_give_uniform_or_zero() {
        let m = MlpModel::zeros(3, &[8], Head::SoftmaxClasses(4), TimeEmbedding::ScalarAppend).unwrap();
        assert_eq!(m.forward(&[0.1, 0.2, 0.3], 0.5).unwrap(), vec![0.25; 4]);
        let v = MlpModel::zeros(3, &[8], Head::Velocity(3), TimeEmbedding::ScalarAppend).unwrap();
        assert_eq!(v.forward(&[0.1, 0.2, 0.3], 0.5).unwrap(), vec![0.0; 3]);
        assert_eq!(m.grad_input_logprob(&[0.1, 0.2, 0.3], 0.5, 2).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn linear_softmax_closed_form() {
        // 2 inputs, 3 classes, no hidden layer.
        let w = [0.5, -1.0, 2.0, 0.3, -0.7, 0.1];
        let mut params = w.to_vec();
        params.extend_from_slice(&[0.0; 3]);
        let m = MlpModel::from_parts(vec![2, 3], params, Head::SoftmaxClasses(3), TimeEmbedding::None).unwrap();
        let p = m.forward(&[1.0, 0.0], 0.0).unwrap();
        let col: Vec<f64> = (0..3).map(|o| w[o * 2]).collect();
        let e: Vec<f64> = col.iter().map(|v| v.exp()).collect();
        let z: f64 = e.iter().sum();
        for (a, b) in p.iter().zip(e.iter().map(|v| v / z)) {
            assert!((a - b).abs() < 1e-15);
        }
        // gradient of log p_s is W_s - Σ p_j W_j
        let x = [0.4, -1.3];
        let p = m.forward(&x, 0.0).unwrap();
        for s in 0..3 {
            let g = m.grad_input_logprob(&x, 0.0, s).unwrap();
            for i in 0..2 {
                let want = w[s * 2 + i] - (0..3).map(|j| p[j] * w[j * 2 + i]).sum::<f64>();
                assert!((g[i] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn logprob_difference_is_logit_difference() {
        let m = random_net(2, 3, &[6, 6], Head::SoftmaxClasses(2), TimeEmbedding::None);
        let z = [0.2, -0.4, 1.1];
        let g1 = m.grad_input_logprob(&z, 0.0, 0).unwrap();
        let g2 = m.grad_input_logprob(&z, 0.0, 1).unwrap();
        let gl = m.grad_input_linear(&z, 0.0, &[1.0, -1.0]).unwrap();
        for i in 0..3 {
            assert!((g1[i] - g2[i] - gl[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_input_logprob_matches_fd() {
        let m = random_net(3, 2, &[10, 10], Head::SoftmaxClasses(4), TimeEmbedding::ScalarAppend);
        let z = [0.3, -0.8];
        for s in 0..4 {
            let g = m.grad_input_logprob(&z, 0.7, s).unwrap();
            for i in 0..2 {
                let h = 1e-5;
                let mut zp = z;
                let mut zm = z;
                zp[i] += h;
                zm[i] -= h;
                let fd = (m.log_probs(&zp, 0.7).unwrap()[s] - m.log_probs(&zm, 0.7).unwrap()[s]) / (2.0 * h);
                assert!(rel_err(g[i], fd) < 1e-4, "{} vs {fd}", g[i]);
            }
        }
        assert!(matches!(m.grad_input_logprob(&z, 0.7, 4), Err(Error::Index(_))));
    }

    #[test]
    fn softmax_outputs_are_distributions() {
        let m = random_net(5, 3, &[16], Head::SoftmaxClasses(5), TimeEmbedding::Sinusoidal(4));
        let mut rng = RngStream::new(5, 1);
        for _ in 0..10_000 {
            let z: Vec<f64> = rng.normals(3).iter().map(|v| v * 3.0).collect();
            let p = m.forward(&z, rng.uniform()).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn least_squares_gradient() {
        // one linear layer with a velocity head is a linear regression
        let w = [0.4, -0.2, 0.1];
        let mut params = w.to_vec();
        params.push(0.0);
        let m = MlpModel::from_parts(vec![3, 1], params, Head::Velocity(1), TimeEmbedding::None).unwrap();
        let xs = [[1.0, 2.0, 0.5], [0.0, -1.0, 3.0], [2.0, 0.3, -0.4], [1.5, 1.5, 1.5]];
        let ys = [[1.0], [0.5], [-0.2], [2.0]];
        let batch = Batch {
            inputs: xs.iter().map(|x| &x[..]).collect(),
            times: vec![0.0; 4],
            targets: Targets::Values(ys.iter().map(|y| &y[..]).collect()),
        };
        let (_, g) = m.grad_params(LossFn::SquaredError, &batch).unwrap();
        for j in 0..3 {
            let want: f64 = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| 2.0 * x[j] * (x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() - y[0]) / 4.0)
                .sum();
            assert!((g[j] - want).abs() < 1e-14);
        }
        // zero residual
        let ys0: Vec<[f64; 1]> = xs
            .iter()
            .map(|x| [x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()])
            .collect();
        let batch0 = Batch {
            inputs: xs.iter().map(|x| &x[..]).collect(),
            times: vec![0.0; 4],
            targets: Targets::Values(ys0.iter().map(|y| &y[..]).collect()),
        };
        let (loss, g0) = m.grad_params(LossFn::SquaredError, &batch0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn head_mismatch_is_build_error() {
        let m = random_net(1, 2, &[4], Head::Velocity(2), TimeEmbedding::None);
        let labels = [0usize];
        let x = [0.0, 0.0];
        let batch = Batch {
            inputs: vec![&x[..]],
            times: vec![0.0],
            targets: Targets::Classes(&labels),
        };
        assert!(matches!(
            m.grad_params(LossFn::CrossEntropy, &batch),
            Err(Error::Build(_))
        ));
        assert!(matches!(
            m.grad_params(LossFn::SquaredError, &batch),
            Err(Error::Build(_))
        ));
    }

    fn fd_check<F: Fn(&MlpModel) -> f64>(m: &MlpModel, analytic: &[f64], f: F, tol: f64) {
        let h = 1e-5;
        for i in 0..m.n_params() {
            let mut mp = m.clone();
            mp.params_mut()[i] += h;
            let mut mm = m.clone();
            mm.params_mut()[i] -= h;
            let fd = (f(&mp) - f(&mm)) / (2.0 * h);
            assert!(rel_err(analytic[i], fd) < tol, "param {i}: {} vs {fd}", analytic[i]);
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_fd() {
        let m = random_net(7, 2, &[5, 5], Head::SoftmaxClasses(3), TimeEmbedding::ScalarAppend);
        let mut rng = RngStream::new(7, 2);
        let xs: Vec<Vec<f64>> = (0..6).map(|_| rng.normals(2)).collect();
        let ts: Vec<f64> = (0..6).map(|_| rng.uniform()).collect();
        let labels: Vec<usize> = (0..6).map(|i| i % 3).collect();
        let batch = Batch {
            inputs: xs.iter().map(|x| &x[..]).collect(),
            times: ts,
            targets: Targets::Classes(&labels),
        };
        let (_, g) = m.grad_params(LossFn::CrossEntropy, &batch).unwrap();
        fd_check(
            &m,
            &g,
            |mm| mm.grad_params(LossFn::CrossEntropy, &batch).unwrap().0,
            1e-4,
        );
    }

    fn mixture_fixture(seed: u64) -> (MlpModel, Vec<Vec<f64>>, Vec<usize>, Vec<Vec<f64>>, Vec<f64>) {
        let m = random_net(seed, 2, &[6, 6], Head::SoftmaxClasses(3), TimeEmbedding::None);
        let mut rng = RngStream::new(seed, 3);
        let xs: Vec<Vec<f64>> = (0..8).map(|_| rng.normals(2)).collect();
        let eps: Vec<Vec<f64>> = (0..8).map(|_| rng.normals(2)).collect();
        let labels: Vec<usize> = (0..8).map(|i| i % 3).collect();
        let scales: Vec<f64> = labels.iter().map(|&s| [0.0, 0.7, 1.0][s]).collect();
        (m, xs, labels, eps, scales)
    }

    #[test]
    fn mixture_gradient_matches_fd() {
        let (m, xs, labels, eps, scales) = mixture_fixture(11);
        let precond = [1.0, 0.4, 0.4, 1.0];
        for p in [None, Some(&precond[..])] {
            let loss = MixtureLoss {
                alpha: 0.3,
                mse_weight: 1.0,
                precond: p,
            };
            let batch = MixtureBatch {
                inputs: xs.iter().map(|x| &x[..]).collect(),
                labels: labels.clone(),
                targets: eps.iter().map(|x| &x[..]).collect(),
                scales: scales.clone(),
            };
            let g = m.grad_params_of_input_grad(&loss, &batch).unwrap();
            fd_check(
                &m,
                &g.grads,
                |mm| {
                    let r = mm.grad_params_of_input_grad(&loss, &batch).unwrap();
                    0.3 * r.ce + r.mse
                },
                2e-4,
            );
        }
    }

    #[test]
    fn alpha_only_mixture_is_cross_entropy() {
        let (m, xs, labels, eps, scales) = mixture_fixture(12);
        let batch = MixtureBatch {
            inputs: xs.iter().map(|x| &x[..]).collect(),
            labels: labels.clone(),
            targets: eps.iter().map(|x| &x[..]).collect(),
            scales,
        };
        let g = m
            .grad_params_of_input_grad(
                &MixtureLoss {
                    alpha: 1.0,
                    mse_weight: 0.0,
                    precond: None,
                },
                &batch,
            )
            .unwrap();
        let ce_batch = Batch {
            inputs: xs.iter().map(|x| &x[..]).collect(),
            times: vec![0.0; 8],
            targets: Targets::Classes(&labels),
        };
        let (ce, gc) = m.grad_params(LossFn::CrossEntropy, &ce_batch).unwrap();
        assert_eq!(g.ce, ce);
        assert_eq!(g.grads, gc);
    }

    #[test]
    fn mse_only_at_zero_params_has_zero_gradient() {
        let (_, xs, labels, eps, scales) = mixture_fixture(13);
        let m = MlpModel::zeros(2, &[6, 6], Head::SoftmaxClasses(3), TimeEmbedding::None).unwrap();
        let batch = MixtureBatch {
            inputs: xs.iter().map(|x| &x[..]).collect(),
            labels,
            targets: eps.iter().map(|x| &x[..]).collect(),
            scales: scales.clone(),
        };
        let g = m
            .grad_params_of_input_grad(
                &MixtureLoss {
                    alpha: 0.0,
                    mse_weight: 1.0,
                    precond: None,
                },
                &batch,
            )
            .unwrap();
        assert!(g.grads.iter().all(|&v| v == 0.0));
        let want: f64 = (0..8)
            .map(|i| (0..2).map(|j| (scales[i] * xs[i][j] - eps[i][j]).powi(2)).sum::<f64>())
            .sum::<f64>()
            / 8.0;
        assert!((g.mse - want).abs() < 1e-12);
    }
}
