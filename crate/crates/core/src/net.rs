//! Two-layer softmax policy with analytic gradients.
//!
//! The network is `softmax(W2 · relu(W1 · x + b1) + b2)`. Parameters live in
//! one flat vector laid out as `[W1 row-major, b1, W2 row-major, b2]`, with
//! `W1` of shape `hidden × in_dim` and `W2` of shape `out_dim × hidden`.
//!
//! Besides the usual parameter gradient of the cross-entropy loss, this module
//! provides the gradient of the gradient-matching distance
//! `‖g_real − g_syn(φ)‖²` with respect to the synthetic inputs `φ`, derived
//! by hand for this fixed architecture.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    #[serde(rename = "in")]
    pub in_dim: usize,
    pub hidden: usize,
    #[serde(rename = "out")]
    pub out_dim: usize,
}

impl NetShape {
    pub fn new(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        Self { in_dim, hidden, out_dim }
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.hidden + self.hidden + self.hidden * self.out_dim + self.out_dim
    }

    fn offsets(&self) -> Offsets {
        let w1 = 0;
        let b1 = w1 + self.in_dim * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden * self.out_dim;
        Offsets { b1, w2, b2, end: b2 + self.out_dim }
    }
}

#[derive(Clone, Copy)]
struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

/// Borrowed view of a flat parameter-shaped vector.
struct Layers<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
}

fn split<'a>(shape: &NetShape, v: &'a [f64]) -> Layers<'a> {
    let o = shape.offsets();
    Layers { w1: &v[..o.b1], b1: &v[o.b1..o.w2], w2: &v[o.w2..o.b2], b2: &v[o.b2..o.end] }
}

struct LayersMut<'a> {
    w1: &'a mut [f64],
    b1: &'a mut [f64],
    w2: &'a mut [f64],
    b2: &'a mut [f64],
}

fn split_mut<'a>(shape: &NetShape, v: &'a mut [f64]) -> LayersMut<'a> {
    let o = shape.offsets();
    let (w1, rest) = v.split_at_mut(o.b1);
    let (b1, rest) = rest.split_at_mut(o.w2 - o.b1);
    let (w2, b2) = rest.split_at_mut(o.b2 - o.w2);
    LayersMut { w1, b1, w2, b2 }
}

/// Flat parameter vector plus its shape. Entries are always finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub shape: NetShape,
    pub theta: Vec<f64>,
}

impl PolicyParams {
    pub fn new(shape: NetShape, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != shape.param_count() {
            return Err(Error::DimensionMismatch { expected: shape.param_count(), got: theta.len() });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { shape, theta })
    }

    pub fn zeros(shape: NetShape) -> Self {
        Self { shape, theta: vec![0.0; shape.param_count()] }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(self)?;
        std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: PolicyParams =
            serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))?;
        Self::new(raw.shape, raw.theta)
    }
}

/// Gradient with the same layout as [`PolicyParams::theta`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradVector(pub Vec<f64>);

impl GradVector {
    pub fn squared_distance(&self, other: &GradVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn scale(&self, s: f64) -> GradVector {
        GradVector(self.0.iter().map(|v| v * s).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Label {
    Hard(usize),
    Soft(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub label: Label,
}

impl LabeledExample {
    pub fn hard(x: Vec<f64>, action: usize) -> Self {
        Self { x, label: Label::Hard(action) }
    }

    /// Soft labels must be nonnegative and sum to one within `1e-9`.
    pub fn soft(x: Vec<f64>, dist: Vec<f64>) -> Result<Self> {
        let sum: f64 = dist.iter().sum();
        if dist.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("soft label is not a distribution (sum {sum})")));
        }
        Ok(Self { x, label: Label::Soft(dist) })
    }

    fn target_into(&self, out: &mut [f64]) {
        match &self.label {
            Label::Hard(a) => {
                out.fill(0.0);
                out[*a] = 1.0;
            }
            Label::Soft(d) => out.copy_from_slice(d),
        }
    }
}

/// Weights uniform in `±sqrt(6 / fan_in)`, biases zero. `W1` is drawn before
/// `W2`, row-major.
pub fn init_params(shape: NetShape, rng: &mut RngStream) -> PolicyParams {
    let mut theta = vec![0.0; shape.param_count()];
    let l = split_mut(&shape, &mut theta);
    let bound1 = (6.0 / shape.in_dim as f64).sqrt();
    for w in l.w1.iter_mut() {
        *w = (2.0 * rng.next_uniform() - 1.0) * bound1;
    }
    let bound2 = (6.0 / shape.hidden as f64).sqrt();
    for w in l.w2.iter_mut() {
        *w = (2.0 * rng.next_uniform() - 1.0) * bound2;
    }
    PolicyParams { shape, theta }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for z in v.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    for z in v.iter_mut() {
        *z /= sum;
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Intermediate values of one forward pass.
struct Activations {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

fn activations(shape: &NetShape, l: &Layers<'_>, x: &[f64]) -> Activations {
    let pre: Vec<f64> = l
        .w1
        .chunks_exact(shape.in_dim)
        .zip(l.b1)
        .map(|(row, b)| b + dot(row, x))
        .collect();
    let hidden: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
    let logits: Vec<f64> = l
        .w2
        .chunks_exact(shape.hidden)
        .zip(l.b2)
        .map(|(row, b)| b + dot(row, &hidden))
        .collect();
    Activations { pre, hidden, logits }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_input(shape: &NetShape, x: &[f64]) -> Result<()> {
    if x.len() != shape.in_dim {
        return Err(Error::DimensionMismatch { expected: shape.in_dim, got: x.len() });
    }
    Ok(())
}

fn check_example(shape: &NetShape, ex: &LabeledExample) -> Result<()> {
    check_input(shape, &ex.x)?;
    match &ex.label {
        Label::Hard(a) if *a >= shape.out_dim => {
            Err(Error::DimensionMismatch { expected: shape.out_dim, got: *a + 1 })
        }
        Label::Soft(d) if d.len() != shape.out_dim => {
            Err(Error::DimensionMismatch { expected: shape.out_dim, got: d.len() })
        }
        _ => Ok(()),
    }
}

/// Action distribution for input `x`.
pub fn forward(params: &PolicyParams, x: &[f64]) -> Result<Vec<f64>> {
    check_input(&params.shape, x)?;
    let l = split(&params.shape, &params.theta);
    let mut out = activations(&params.shape, &l, x).logits;
    softmax_in_place(&mut out);
    Ok(out)
}

/// Normalised example weights `w_i / Σw`.
fn normalised_weights(batch: &[LabeledExample], weights: &[f64]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if weights.len() != batch.len() {
        return Err(Error::DimensionMismatch { expected: batch.len(), got: weights.len() });
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidConfig("example weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// Weighted mean cross-entropy `(1/Σw) Σ w_i · CE(π(x_i), y_i)`.
pub fn bc_loss(params: &PolicyParams, batch: &[LabeledExample], weights: &[f64]) -> Result<f64> {
    let c = normalised_weights(batch, weights)?;
    let shape = &params.shape;
    let l = split(shape, &params.theta);
    let mut target = vec![0.0; shape.out_dim];
    let mut loss = 0.0;
    for (ex, ci) in batch.iter().zip(&c) {
        check_example(shape, ex)?;
        let logp = log_softmax(&activations(shape, &l, &ex.x).logits);
        ex.target_into(&mut target);
        loss -= ci * dot(&target, &logp);
    }
    Ok(loss)
}

/// Exact gradient of [`bc_loss`] with respect to the parameters.
pub fn bc_grad(params: &PolicyParams, batch: &[LabeledExample], weights: &[f64]) -> Result<GradVector> {
    let c = normalised_weights(batch, weights)?;
    let shape = &params.shape;
    let l = split(shape, &params.theta);
    let mut grad = vec![0.0; shape.param_count()];
    let mut target = vec![0.0; shape.out_dim];
    let mut delta_hidden = vec![0.0; shape.hidden];
    {
        let g = split_mut(shape, &mut grad);
        for (ex, &ci) in batch.iter().zip(&c) {
            check_example(shape, ex)?;
            let act = activations(shape, &l, &ex.x);
            let mut delta_out = act.logits;
            softmax_in_place(&mut delta_out);
            ex.target_into(&mut target);
            for (d, t) in delta_out.iter_mut().zip(&target) {
                *d = ci * (*d - t);
            }
            delta_hidden.fill(0.0);
            for (k, &dk) in delta_out.iter().enumerate() {
                g.b2[k] += dk;
                let w_row = &l.w2[k * shape.hidden..(k + 1) * shape.hidden];
                let g_row = &mut g.w2[k * shape.hidden..(k + 1) * shape.hidden];
                for j in 0..shape.hidden {
                    g_row[j] += dk * act.hidden[j];
                    delta_hidden[j] += dk * w_row[j];
                }
            }
            for j in 0..shape.hidden {
                if act.pre[j] <= 0.0 {
                    continue;
                }
                let dj = delta_hidden[j];
                g.b1[j] += dj;
                let g_row = &mut g.w1[j * shape.in_dim..(j + 1) * shape.in_dim];
                for (gv, xv) in g_row.iter_mut().zip(&ex.x) {
                    *gv += dj * xv;
                }
            }
        }
    }
    Ok(GradVector(grad))
}

/// Gradient of the matching distance with respect to a synthetic batch.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchingGrad {
    /// `‖g_real − g_syn‖²` at the current synthetic batch.
    pub loss: f64,
    /// One gradient per synthetic input vector.
    pub x_grads: Vec<Vec<f64>>,
    /// Gradient with respect to the logits parameterising each soft label,
    /// present when label learning was requested.
    pub label_grads: Option<Vec<Vec<f64>>>,
}

/// Gradient of `D(φ) = ‖g_real − g_syn(φ)‖²` where
/// `g_syn = bc_grad(params, syn_batch, uniform)`.
///
/// With residual `r = g_syn − g_real` split into `(R1, rb1, R2, rb2)`, the
/// per-example contribution to `⟨r, g_syn⟩` is `δ·u` where `δ = p − y`,
/// `u = R2·h + rb2 + W2·(m ⊙ (R1·x + rb1))` and `m` is the ReLU mask. Its
/// input gradient is
/// `W1ᵀ[m ⊙ (W2ᵀ J u + R2ᵀ δ)] + R1ᵀ[m ⊙ W2ᵀ δ]` with `J` the softmax
/// Jacobian, and its gradient with respect to label logits is `−J_y u`.
/// Everything is scaled by `2 / batch size`.
pub fn matching_grad_wrt_examples(
    params: &PolicyParams,
    real_grad: &GradVector,
    syn_batch: &[LabeledExample],
    learn_labels: bool,
) -> Result<MatchingGrad> {
    let shape = &params.shape;
    if real_grad.0.len() != shape.param_count() {
        return Err(Error::DimensionMismatch { expected: shape.param_count(), got: real_grad.0.len() });
    }
    let weights = vec![1.0; syn_batch.len()];
    let syn_grad = bc_grad(params, syn_batch, &weights)?;
    let residual: Vec<f64> = syn_grad.0.iter().zip(&real_grad.0).map(|(s, r)| s - r).collect();
    let loss = residual.iter().map(|v| v * v).sum();

    let l = split(shape, &params.theta);
    let r = split(shape, &residual);
    let scale = 2.0 / syn_batch.len() as f64;
    let (n_in, n_hid, n_out) = (shape.in_dim, shape.hidden, shape.out_dim);

    let mut x_grads = Vec::with_capacity(syn_batch.len());
    let mut label_grads = learn_labels.then(|| Vec::with_capacity(syn_batch.len()));
    let mut target = vec![0.0; n_out];
    for ex in syn_batch {
        let act = activations(shape, &l, &ex.x);
        let mask: Vec<f64> = act.pre.iter().map(|&z| if z > 0.0 { 1.0 } else { 0.0 }).collect();
        let p = softmax(&act.logits);
        ex.target_into(&mut target);
        let delta: Vec<f64> = p.iter().zip(&target).map(|(p, y)| p - y).collect();

        // c = R1·x + rb1, masked
        let masked_c: Vec<f64> = r
            .w1
            .chunks_exact(n_in)
            .zip(r.b1)
            .zip(&mask)
            .map(|((row, b), m)| m * (b + dot(row, &ex.x)))
            .collect();
        // u = R2·h + rb2 + W2·(m ⊙ c)
        let u: Vec<f64> = (0..n_out)
            .map(|k| {
                let r_row = &r.w2[k * n_hid..(k + 1) * n_hid];
                let w_row = &l.w2[k * n_hid..(k + 1) * n_hid];
                r.b2[k] + dot(r_row, &act.hidden) + dot(w_row, &masked_c)
            })
            .collect();
        let pu = dot(&p, &u);
        let ju: Vec<f64> = p.iter().zip(&u).map(|(p, u)| p * (u - pu)).collect();

        // alpha = m ⊙ (W2ᵀ J u + R2ᵀ δ), beta = m ⊙ (W2ᵀ δ)
        let mut alpha = vec![0.0; n_hid];
        let mut beta = vec![0.0; n_hid];
        for k in 0..n_out {
            let w_row = &l.w2[k * n_hid..(k + 1) * n_hid];
            let r_row = &r.w2[k * n_hid..(k + 1) * n_hid];
            for j in 0..n_hid {
                alpha[j] += w_row[j] * ju[k] + r_row[j] * delta[k];
                beta[j] += w_row[j] * delta[k];
            }
        }
        let mut gx = vec![0.0; n_in];
        for j in 0..n_hid {
            if mask[j] == 0.0 {
                continue;
            }
            let a = scale * alpha[j];
            let b = scale * beta[j];
            let w_row = &l.w1[j * n_in..(j + 1) * n_in];
            let r_row = &r.w1[j * n_in..(j + 1) * n_in];
            for i in 0..n_in {
                gx[i] += a * w_row[i] + b * r_row[i];
            }
        }
        x_grads.push(gx);

        if let Some(lg) = label_grads.as_mut() {
            let yu = dot(&target, &u);
            lg.push(target.iter().zip(&u).map(|(y, u)| -scale * y * (u - yu)).collect());
        }
    }
    Ok(MatchingGrad { loss, x_grads, label_grads })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 2-2-2 net with hand-picked weights.
    fn hand_net() -> PolicyParams {
        // W1 = [[1, -1], [0.5, 2]], b1 = [0, -0.25], W2 = [[1, 0], [-1, 2]], b2 = [0.1, 0]
        PolicyParams::new(
            NetShape::new(2, 2, 2),
            vec![1.0, -1.0, 0.5, 2.0, 0.0, -0.25, 1.0, 0.0, -1.0, 2.0, 0.1, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn default_param_count() {
        assert_eq!(NetShape::new(144, 32, 5).param_count(), 144 * 32 + 32 + 32 * 5 + 5);
        assert_eq!(NetShape::new(144, 32, 5).param_count(), 4805);
    }

    #[test]
    fn init_bounds_and_biases() {
        let shape = NetShape::new(144, 32, 5);
        let p = init_params(shape, &mut RngStream::derive(0, "init"));
        let l = split(&shape, &p.theta);
        assert!(l.b1.iter().chain(l.b2).all(|&b| b == 0.0));
        let bound = (6.0f64 / 144.0).sqrt();
        assert!((bound - 0.2041).abs() < 1e-4);
        assert!(l.w1.iter().all(|w| w.abs() <= bound));
        assert!(l.w2.iter().all(|w| w.abs() <= (6.0f64 / 32.0).sqrt()));
        assert_eq!(p, init_params(shape, &mut RngStream::derive(0, "init")));
    }

    #[test]
    fn zero_params_uniform() {
        let p = PolicyParams::zeros(NetShape::new(4, 3, 5));
        let probs = forward(&p, &[1.0, 0.0, 2.0, -1.0]).unwrap();
        assert!(probs.iter().all(|&q| (q - 0.2).abs() < 1e-15));
    }

    #[test]
    fn hand_net_forward() {
        // x = [1, 0]: pre = [1, 0.25], h = [1, 0.25]
        // logits = [1 + 0.1, -1 + 0.5] = [1.1, -0.5]
        let probs = forward(&hand_net(), &[1.0, 0.0]).unwrap();
        let e0 = 1.1f64.exp();
        let e1 = (-0.5f64).exp();
        assert!((probs[0] - e0 / (e0 + e1)).abs() < 1e-14);
        assert!((probs[1] - e1 / (e0 + e1)).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = hand_net();
        assert!(forward(&p, &[1.0]).is_err());
        assert!(PolicyParams::new(p.shape, vec![f64::NAN; 12]).is_err());
        assert!(PolicyParams::new(p.shape, vec![0.0; 3]).is_err());
        let ex = LabeledExample::hard(vec![1.0, 0.0], 0);
        assert!(matches!(bc_loss(&p, &[ex.clone()], &[0.0]), Err(Error::ZeroWeights)));
        assert!(bc_loss(&p, &[], &[]).is_err());
        assert!(bc_loss(&p, &[LabeledExample::hard(vec![1.0, 0.0], 7)], &[1.0]).is_err());
        assert!(LabeledExample::soft(vec![0.0], vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn zero_params_loss_is_log5() {
        let p = PolicyParams::zeros(NetShape::new(3, 4, 5));
        let batch: Vec<_> = (0..5).map(|a| LabeledExample::hard(vec![a as f64, 1.0, -1.0], a)).collect();
        let loss = bc_loss(&p, &batch, &[1.0; 5]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn self_label_loss_is_entropy() {
        let p = hand_net();
        let x = vec![0.3, -0.7];
        let probs = forward(&p, &x).unwrap();
        let entropy: f64 = -probs.iter().map(|q| q * q.ln()).sum::<f64>();
        let ex = LabeledExample::soft(x, probs).unwrap();
        assert!((bc_loss(&p, &[ex.clone()], &[1.0]).unwrap() - entropy).abs() < 1e-12);
        // p - label = 0 everywhere
        assert!(bc_grad(&p, &[ex], &[1.0]).unwrap().0.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn weighted_hand_loss() {
        let p = hand_net();
        let a = LabeledExample::hard(vec![1.0, 0.0], 0);
        let b = LabeledExample::hard(vec![0.0, 1.0], 1);
        // x = [0, 1]: pre = [-1, 1.75], h = [0, 1.75], logits = [0.1, 3.5]
        let ce_a = -(1.1f64.exp() / (1.1f64.exp() + (-0.5f64).exp())).ln();
        let ce_b = -((3.5f64).exp() / ((0.1f64).exp() + (3.5f64).exp())).ln();
        let expected = (1.0 * ce_a + 3.0 * ce_b) / 4.0;
        assert!((bc_loss(&p, &[a, b], &[1.0, 3.0]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn batch_gradient_is_mean() {
        let p = hand_net();
        let a = LabeledExample::hard(vec![1.0, 0.5], 0);
        let b = LabeledExample::hard(vec![-0.2, 1.0], 1);
        let ga = bc_grad(&p, &[a.clone()], &[1.0]).unwrap();
        let gb = bc_grad(&p, &[b.clone()], &[1.0]).unwrap();
        let gab = bc_grad(&p, &[a, b], &[1.0, 1.0]).unwrap();
        for i in 0..gab.0.len() {
            assert!((gab.0[i] - 0.5 * (ga.0[i] + gb.0[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_batch_matching_grad_vanishes() {
        let shape = NetShape::new(6, 5, 3);
        let mut rng = RngStream::derive(1, "m");
        let p = init_params(shape, &mut rng);
        let batch: Vec<_> =
            (0..4).map(|i| LabeledExample::hard((0..6).map(|_| rng.next_gauss()).collect(), i % 3)).collect();
        let g = bc_grad(&p, &batch, &[1.0; 4]).unwrap();
        let m = matching_grad_wrt_examples(&p, &g, &batch, true).unwrap();
        assert_eq!(m.loss, 0.0);
        assert!(m.x_grads.iter().flatten().all(|v| v.abs() <= 1e-10));
        assert!(m.label_grads.unwrap().iter().flatten().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("student_0.json");
        let p = init_params(NetShape::new(4, 3, 5), &mut RngStream::derive(2, "ckpt"));
        p.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("{\"shape\":{\"in\":4,\"hidden\":3,\"out\":5},\"theta\":["));
        assert_eq!(PolicyParams::load(&path).unwrap(), p);
    }
}
