//! One-hidden-layer MLP with ReLU and softmax cross-entropy, trained
//! full-batch with adaptive-moment updates. Hand-rolled because the probe
//! is the deliverable: every gradient must be auditable against finite
//! differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Weights are row-major: w1 is `[hidden][input]`, w2 is `[classes][hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        MlpParams {
            input,
            hidden,
            classes,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; classes * hidden],
            b2: vec![0.0; classes],
        }
    }

    /// Symmetric uniform init scaled by fan-in; biases start at zero.
    pub fn init(input: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(input, hidden, classes);
        let lim1 = 1.0 / (input as f64).sqrt();
        for w in &mut p.w1 {
            *w = rng.random_range(-lim1..lim1);
        }
        let lim2 = 1.0 / (hidden as f64).sqrt();
        for w in &mut p.w2 {
            *w = rng.random_range(-lim2..lim2);
        }
        p
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input {
            return Err(Error::invalid_input(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.input
            )));
        }
        Ok(())
    }

    /// Hidden activations and class probabilities for one example.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        let mut h = vec![0.0f64; self.hidden];
        for j in 0..self.hidden {
            let row = &self.w1[j * self.input..(j + 1) * self.input];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
            h[j] = z.max(0.0);
        }
        let mut logits = vec![0.0f64; self.classes];
        for c in 0..self.classes {
            let row = &self.w2[c * self.hidden..(c + 1) * self.hidden];
            logits[c] = row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + self.b2[c];
        }
        Ok((h, softmax(&logits)))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let (_, probs) = self.forward(x)?;
        Ok(argmax(&probs))
    }

    /// Mean cross-entropy over a batch.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::invalid_input("loss needs a non-empty batch with matching labels"));
        }
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            if y >= self.classes {
                return Err(Error::invalid_input(format!(
                    "label {y} out of range for {} classes",
                    self.classes
                )));
            }
            let (_, probs) = self.forward(x)?;
            total -= probs[y].max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / xs.len() as f64)
    }

    /// Mean cross-entropy gradients over a batch (full backprop by hand).
    pub fn grads(&self, xs: &[Vec<f64>], ys: &[usize]) -> Result<MlpGrads> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::invalid_input("grads need a non-empty batch with matching labels"));
        }
        let mut g = MlpGrads::zeros(self);
        for (x, &y) in xs.iter().zip(ys) {
            if y >= self.classes {
                return Err(Error::invalid_input(format!(
                    "label {y} out of range for {} classes",
                    self.classes
                )));
            }
            let (h, probs) = self.forward(x)?;
            // d loss / d logits = probs - onehot(y)
            for c in 0..self.classes {
                let dz2 = probs[c] - f64::from(u8::from(c == y));
                g.b2[c] += dz2;
                for j in 0..self.hidden {
                    g.w2[c * self.hidden + j] += dz2 * h[j];
                }
            }
            for j in 0..self.hidden {
                if h[j] <= 0.0 {
                    continue;
                }
                let dh: f64 = (0..self.classes)
                    .map(|c| (probs[c] - f64::from(u8::from(c == y))) * self.w2[c * self.hidden + j])
                    .sum();
                g.b1[j] += dh;
                for (k, &xv) in x.iter().enumerate() {
                    g.w1[j * self.input + k] += dh * xv;
                }
            }
        }
        let scale = 1.0 / xs.len() as f64;
        for vec in g.flat_mut() {
            for v in vec.iter_mut() {
                *v *= scale;
            }
        }
        Ok(g)
    }

    pub fn flat_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpGrads {
    fn zeros(p: &MlpParams) -> Self {
        MlpGrads {
            w1: vec![0.0; p.w1.len()],
            b1: vec![0.0; p.b1.len()],
            w2: vec![0.0; p.w2.len()],
            b2: vec![0.0; p.b2.len()],
        }
    }

    pub fn flat(&self) -> [&Vec<f64>; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn flat_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Adaptive-moment optimizer state (step size 1e-3, decays 0.9/0.999,
/// epsilon 1e-8 unless configured otherwise).
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: u32,
    m: [Vec<f64>; 4],
    v: [Vec<f64>; 4],
}

impl AdamState {
    pub fn new(params: &MlpParams, step_size: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let shape = |v: &Vec<f64>| vec![0.0; v.len()];
        AdamState {
            step_size,
            beta1,
            beta2,
            epsilon,
            t: 0,
            m: [shape(&params.w1), shape(&params.b1), shape(&params.w2), shape(&params.b2)],
            v: [shape(&params.w1), shape(&params.b1), shape(&params.w2), shape(&params.b2)],
        }
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let param_vecs = params.flat_mut();
        let grad_vecs = grads.flat();
        for ((pv, gv), (m, v)) in param_vecs
            .into_iter()
            .zip(grad_vecs)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..pv.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gv[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gv[i] * gv[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                pv[i] -= self.step_size * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn zero_model_is_uniform() {
        let p = MlpParams::zeros(3, 4, 2);
        let (_, probs) = p.forward(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(probs, vec![0.5, 0.5]);
        let p3 = MlpParams::zeros(3, 4, 3);
        let loss = p3.loss(&[vec![1.0, 0.0, 0.0]], &[2]).unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_forward_pass() {
        // 2 inputs, 2 hidden, 2 classes, weights set by hand
        let mut p = MlpParams::zeros(2, 2, 2);
        p.w1 = vec![1.0, 0.0, -1.0, 1.0];
        p.b1 = vec![0.0, 0.5];
        p.w2 = vec![1.0, -1.0, 0.0, 1.0];
        p.b2 = vec![0.1, -0.1];
        let x = [2.0, 1.0];
        // z1 = [2.0, -0.5]; h = [2.0, 0.0]
        // logits = [2.0*1 + 0*(-1) + 0.1, 0 + 0 - 0.1] = [2.1, -0.1]
        let (h, probs) = p.forward(&x).unwrap();
        assert_eq!(h, vec![2.0, 0.0]);
        let e0 = (2.1f64).exp();
        let e1 = (-0.1f64).exp();
        assert!((probs[0] - e0 / (e0 + e1)).abs() < 1e-12);
        assert!((probs[1] - e1 / (e0 + e1)).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one_and_loss_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = MlpParams::init(4, 5, 3, rng.random());
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (_, probs) = p.forward(&x).unwrap();
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(probs.iter().all(|&q| q > 0.0));
            let loss = p.loss(&[x], &[1]).unwrap();
            assert!(loss >= 0.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = MlpParams::zeros(3, 2, 2);
        assert!(p.forward(&[1.0]).is_err());
        assert!(p.loss(&[vec![1.0, 2.0, 3.0]], &[7]).is_err());
        assert!(p.loss(&[], &[]).is_err());
    }

    /// Central-difference check of every parameter's gradient.
    fn gradient_check(seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = rng.random_range(2..=8);
        let hidden = rng.random_range(2..=8);
        let classes = rng.random_range(2..=4);
        let n = rng.random_range(3..=6);
        let mut p = MlpParams::init(input, hidden, classes, rng.random());
        let xs: Vec<Vec<f64>> =
            (0..n).map(|_| (0..input).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();

        let analytic = p.grads(&xs, &ys).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for part in 0..4 {
            for i in 0..analytic.flat()[part].len() {
                let orig = p.flat_mut()[part][i];
                p.flat_mut()[part][i] = orig + h;
                let up = p.loss(&xs, &ys).unwrap();
                p.flat_mut()[part][i] = orig - h;
                let down = p.loss(&xs, &ys).unwrap();
                p.flat_mut()[part][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic.flat()[part][i];
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..10 {
            let worst = gradient_check(seed);
            assert!(worst < 1e-4, "seed {seed}: worst relative error {worst}");
        }
    }

    #[test]
    fn adam_reduces_loss_on_a_small_problem() {
        let xs = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![-1.0, -1.0]];
        let ys = vec![0, 1, 0, 1];
        let mut p = MlpParams::init(2, 8, 2, 11);
        let mut adam = AdamState::new(&p, 1e-2, 0.9, 0.999, 1e-8);
        let before = p.loss(&xs, &ys).unwrap();
        for _ in 0..200 {
            let g = p.grads(&xs, &ys).unwrap();
            adam.step(&mut p, &g);
        }
        let after = p.loss(&xs, &ys).unwrap();
        assert!(after < before * 0.5, "{after} not well below {before}");
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        assert_eq!(MlpParams::init(3, 4, 2, 9), MlpParams::init(3, 4, 2, 9));
        assert_ne!(MlpParams::init(3, 4, 2, 9), MlpParams::init(3, 4, 2, 10));
    }
}
