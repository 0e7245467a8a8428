//! Reference implementations shared by the integration tests. They index the
//! flat parameter vector directly and share no code with the library's
//! forward or backward passes.
#![allow(dead_code)]

use offline_distill::net::{bc_grad, softmax, Label, LabeledExample, NetShape, PolicyParams};
use offline_distill::rng::RngStream;

pub fn w1(shape: NetShape, theta: &[f64], h: usize, i: usize) -> f64 {
    theta[h * shape.in_dim + i]
}

pub fn b1(shape: NetShape, theta: &[f64], h: usize) -> f64 {
    theta[shape.in_dim * shape.hidden + h]
}

pub fn w2(shape: NetShape, theta: &[f64], o: usize, h: usize) -> f64 {
    theta[shape.in_dim * shape.hidden + shape.hidden + o * shape.hidden + h]
}

pub fn b2(shape: NetShape, theta: &[f64], o: usize) -> f64 {
    theta[shape.in_dim * shape.hidden + shape.hidden + shape.hidden * shape.out_dim + o]
}

pub fn naive_logits(shape: NetShape, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let mut hidden = vec![0.0; shape.hidden];
    for (h, slot) in hidden.iter_mut().enumerate() {
        let mut z = b1(shape, theta, h);
        for (i, xi) in x.iter().enumerate() {
            z += w1(shape, theta, h, i) * xi;
        }
        *slot = if z > 0.0 { z } else { 0.0 };
    }
    (0..shape.out_dim)
        .map(|o| {
            let mut z = b2(shape, theta, o);
            for (h, hv) in hidden.iter().enumerate() {
                z += w2(shape, theta, o, h) * hv;
            }
            z
        })
        .collect()
}

pub fn target(ex: &LabeledExample, out: usize) -> Vec<f64> {
    match &ex.label {
        Label::Hard(a) => (0..out).map(|k| if k == *a { 1.0 } else { 0.0 }).collect(),
        Label::Soft(d) => d.clone(),
    }
}

/// Weighted mean cross-entropy computed from scratch.
pub fn naive_loss(shape: NetShape, theta: &[f64], batch: &[LabeledExample], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    let mut loss = 0.0;
    for (ex, w) in batch.iter().zip(weights) {
        let z = naive_logits(shape, theta, &ex.x);
        let m = z.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let y = target(ex, shape.out_dim);
        let ce: f64 = y.iter().zip(&z).map(|(yk, zk)| -yk * (zk - lse)).sum();
        loss += w * ce;
    }
    loss / total
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

pub fn gauss_vec(len: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..len).map(|_| rng.next_gauss()).collect()
}

pub struct BcInstance {
    pub shape: NetShape,
    pub params: PolicyParams,
    pub batch: Vec<LabeledExample>,
    pub weights: Vec<f64>,
}

/// Random shape, parameters, hard or soft labels and positive weights.
pub fn bc_instance(i: usize) -> BcInstance {
    let mut rng = RngStream::derive(1234, &format!("oracle:bc:{i}"));
    let shape = NetShape::new(1 + rng.next_index(6), 1 + rng.next_index(6), 2 + rng.next_index(4));
    let theta = gauss_vec(shape.param_count(), &mut rng);
    let n = 1 + rng.next_index(8);
    let batch = (0..n)
        .map(|_| {
            let x = gauss_vec(shape.in_dim, &mut rng);
            if rng.next_uniform() < 0.5 {
                LabeledExample::hard(x, rng.next_index(shape.out_dim))
            } else {
                LabeledExample::soft(x, softmax(&gauss_vec(shape.out_dim, &mut rng))).unwrap()
            }
        })
        .collect();
    let weights = (0..n).map(|_| 0.05 + rng.next_uniform()).collect();
    BcInstance { shape, params: PolicyParams::new(shape, theta).unwrap(), batch, weights }
}

/// Max relative error of `bc_grad` against central differences of
/// [`naive_loss`] with step `h`.
pub fn bc_grad_fd_error(inst: &BcInstance, h: f64) -> f64 {
    let analytic = bc_grad(&inst.params, &inst.batch, &inst.weights).unwrap().0;
    let mut theta = inst.params.theta.clone();
    let mut worst = 0.0f64;
    for (j, a) in analytic.iter().enumerate() {
        let orig = theta[j];
        theta[j] = orig + h;
        let up = naive_loss(inst.shape, &theta, &inst.batch, &inst.weights);
        theta[j] = orig - h;
        let down = naive_loss(inst.shape, &theta, &inst.batch, &inst.weights);
        theta[j] = orig;
        worst = worst.max(rel_err(*a, (up - down) / (2.0 * h)));
    }
    worst
}

/// `‖g_real − g_syn‖²` recomputed from the library's parameter gradient.
pub fn matching_distance(params: &PolicyParams, real: &[f64], syn: &[LabeledExample]) -> f64 {
    let g = bc_grad(params, syn, &vec![1.0; syn.len()]).unwrap().0;
    g.iter().zip(real).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub struct MatchingInstance {
    pub params: PolicyParams,
    pub real: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
}

impl MatchingInstance {
    pub fn syn(&self, xs: &[Vec<f64>], logits: &[Vec<f64>]) -> Vec<LabeledExample> {
        xs.iter().zip(logits).map(|(x, l)| LabeledExample::soft(x.clone(), softmax(l)).unwrap()).collect()
    }
}

/// Small instance: input 4, hidden 3, output 2, two synthetic rows.
pub fn matching_instance(i: usize) -> MatchingInstance {
    let shape = NetShape::new(4, 3, 2);
    let mut rng = RngStream::derive(1234, &format!("oracle:matching:{i}"));
    let params = PolicyParams::new(shape, gauss_vec(shape.param_count(), &mut rng)).unwrap();
    let real_batch: Vec<LabeledExample> =
        (0..5).map(|_| LabeledExample::hard(gauss_vec(4, &mut rng), rng.next_index(2))).collect();
    let real = bc_grad(&params, &real_batch, &[1.0; 5]).unwrap().0;
    let xs = (0..2).map(|_| gauss_vec(4, &mut rng)).collect();
    let logits = (0..2).map(|_| gauss_vec(2, &mut rng)).collect();
    MatchingInstance { params, real, xs, logits }
}

/// Max relative error of the analytic matching gradient (inputs and label
/// logits) against central differences with step `h`.
pub fn matching_fd_error(inst: &MatchingInstance, h: f64) -> f64 {
    use offline_distill::net::{matching_grad_wrt_examples, GradVector};
    let mg = matching_grad_wrt_examples(
        &inst.params,
        &GradVector(inst.real.clone()),
        &inst.syn(&inst.xs, &inst.logits),
        true,
    )
    .unwrap();
    let lg = mg.label_grads.unwrap();
    let mut worst = 0.0f64;
    for r in 0..inst.xs.len() {
        for c in 0..inst.xs[r].len() {
            let (mut up, mut down) = (inst.xs.clone(), inst.xs.clone());
            up[r][c] += h;
            down[r][c] -= h;
            let fd = (matching_distance(&inst.params, &inst.real, &inst.syn(&up, &inst.logits))
                - matching_distance(&inst.params, &inst.real, &inst.syn(&down, &inst.logits)))
                / (2.0 * h);
            worst = worst.max(rel_err(mg.x_grads[r][c], fd));
        }
        for c in 0..inst.logits[r].len() {
            let (mut up, mut down) = (inst.logits.clone(), inst.logits.clone());
            up[r][c] += h;
            down[r][c] -= h;
            let fd = (matching_distance(&inst.params, &inst.real, &inst.syn(&inst.xs, &up))
                - matching_distance(&inst.params, &inst.real, &inst.syn(&inst.xs, &down)))
                / (2.0 * h);
            worst = worst.max(rel_err(lg[r][c], fd));
        }
    }
    worst
}

/// Best undiscounted return over all action sequences, by brute force.
pub fn brute_force_best(spec: &offline_distill::env::GridSpec) -> f64 {
    use offline_distill::env::{Action, GridState};
    fn go(s: &GridState<'_>) -> f64 {
        if s.terminated {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for a in Action::ALL {
            let out = s.step(a);
            best = best.max(out.reward + go(&out.state));
        }
        best
    }
    go(&spec.reset())
}
