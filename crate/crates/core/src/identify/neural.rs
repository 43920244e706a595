use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralConfig {
    pub hidden: usize,
    pub learn_rate: f64,
    /// Cap on the Frobenius norm of each weight matrix.
    pub w_max: f64,
    pub seed: u64,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            hidden: 20,
            learn_rate: 1e-3,
            w_max: 100.0,
            seed: 0,
        }
    }
}

/// One hidden tanh layer with biases on both layers:
/// `y = W_o [tanh(W_h [x; 1]); 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNet {
    /// `H × (p + 1)`, last column is the bias.
    pub w_hidden: DMatrix<f64>,
    /// `m × (H + 1)`, last column is the bias.
    pub w_out: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w_hidden: DMatrix<f64>,
    pub w_out: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainOutcome {
    Stepped {
        loss: f64,
    },
    /// A non-finite gradient was produced; weights are unchanged.
    Skipped,
}

impl NeuralNet {
    /// Hidden weights uniform in `±1/√p`, output weights zero so the network
    /// starts out predicting nothing.
    pub fn new(inputs: usize, outputs: usize, cfg: &NeuralConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let a = 1.0 / (inputs.max(1) as f64).sqrt();
        let w_hidden = DMatrix::from_fn(cfg.hidden, inputs + 1, |_, _| rng.random_range(-a..a));
        Self {
            w_hidden,
            w_out: DMatrix::zeros(outputs, cfg.hidden + 1),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        Self {
            w_hidden: DMatrix::zeros(hidden, inputs + 1),
            w_out: DMatrix::zeros(outputs, hidden + 1),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w_hidden.ncols() - 1
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w_out.nrows()
    }

    fn hidden_activation(&self, x: &DVector<f64>) -> DVector<f64> {
        let h = self.hidden();
        let p = self.inputs();
        let pre = self.w_hidden.columns(0, p) * x + self.w_hidden.column(p);
        let mut a = DVector::zeros(h + 1);
        a.rows_mut(0, h).copy_from(&pre.map(f64::tanh));
        a[h] = 1.0;
        a
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.inputs(), "network input length");
        &self.w_out * self.hidden_activation(x)
    }

    /// Gradients of `½‖target − y(x)‖²`.
    pub fn gradients(&self, x: &DVector<f64>, target: &DVector<f64>) -> (Gradients, f64) {
        let h = self.hidden();
        let a = self.hidden_activation(x);
        let y = &self.w_out * &a;
        let delta_out = &y - target;
        let loss = 0.5 * delta_out.norm_squared();
        let g_out = &delta_out * a.transpose();
        let back = self.w_out.columns(0, h).tr_mul(&delta_out);
        let delta_hidden = back.zip_map(&a.rows(0, h), |b, t| b * (1.0 - t * t));
        let mut x_aug = DVector::zeros(x.len() + 1);
        x_aug.rows_mut(0, x.len()).copy_from(x);
        x_aug[x.len()] = 1.0;
        let g_hidden = delta_hidden * x_aug.transpose();
        (
            Gradients {
                w_hidden: g_hidden,
                w_out: g_out,
            },
            loss,
        )
    }

    /// One SGD step followed by the norm cap.
    pub fn train_step(
        &mut self,
        x: &DVector<f64>,
        target: &DVector<f64>,
        learn_rate: f64,
        w_max: f64,
    ) -> TrainOutcome {
        let (g, loss) = self.gradients(x, target);
        let finite = g.w_hidden.iter().chain(g.w_out.iter()).all(|v| v.is_finite());
        if !finite {
            log::warn!("non-finite network gradient, training step skipped");
            return TrainOutcome::Skipped;
        }
        self.w_hidden -= learn_rate * g.w_hidden;
        self.w_out -= learn_rate * g.w_out;
        cap_norm(&mut self.w_hidden, w_max);
        cap_norm(&mut self.w_out, w_max);
        TrainOutcome::Stepped { loss }
    }

    pub fn weight_norm(&self) -> f64 {
        (self.w_hidden.norm_squared() + self.w_out.norm_squared()).sqrt()
    }
}

fn cap_norm(w: &mut DMatrix<f64>, w_max: f64) {
    let n = w.norm();
    if n > w_max {
        *w *= w_max / n;
    }
}
