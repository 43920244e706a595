use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::linear::{EstimatorBounds, LinearEstimator, UpdateReport};
use super::neural::{NeuralConfig, NeuralNet, TrainOutcome};
use super::regressor::regressor_len;
use super::IdentifyError;

/// Network evaluation made when a control was computed, kept until the
/// output it affects is measured `d` samples later.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedEstimate {
    pub input: DVector<f64>,
    pub h_hat: DVector<f64>,
}

/// `θ̂_N` (updated exactly like the linear estimator, driven by `e_N`) plus a
/// network estimating the unmodeled dynamics.
#[derive(Debug, Clone)]
pub struct NonlinearEstimator {
    params: LinearEstimator,
    net: NeuralNet,
    cfg: NeuralConfig,
    /// Newest first; entry `d − 1` is the one made at `k − d`.
    cache: VecDeque<CachedEstimate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearUpdate {
    pub params: UpdateReport,
    pub train: TrainOutcome,
}

impl NonlinearEstimator {
    pub fn new(
        m: usize,
        n: usize,
        d: usize,
        bounds: EstimatorBounds,
        theta0: DMatrix<f64>,
        cfg: NeuralConfig,
    ) -> Result<Self, IdentifyError> {
        if !(cfg.learn_rate >= 0.0 && cfg.w_max > 0.0) || cfg.hidden == 0 {
            return Err(IdentifyError::InvalidBounds(
                "network needs a hidden layer, non-negative learn rate and positive w_max".into(),
            ));
        }
        let params = LinearEstimator::new(m, n, d, bounds, theta0)?;
        let net = NeuralNet::new(regressor_len(m, n, d), m, &cfg);
        Ok(Self {
            params,
            net,
            cfg,
            cache: VecDeque::new(),
        })
    }

    pub fn params(&self) -> &LinearEstimator {
        &self.params
    }

    pub fn net(&self) -> &NeuralNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut NeuralNet {
        &mut self.net
    }

    pub fn config(&self) -> &NeuralConfig {
        &self.cfg
    }

    /// `ĥ*` for a network input, with the current weights.
    pub fn h_hat(&self, input: &DVector<f64>) -> DVector<f64> {
        self.net.forward(input)
    }

    /// Records the evaluation made at this step for use `d` steps later.
    pub fn push_cache(&mut self, entry: CachedEstimate) {
        self.cache.push_front(entry);
        self.cache.truncate(self.params.delay());
    }

    /// Evaluation made at `k − d`.
    pub fn lagged_cache(&self) -> Option<&CachedEstimate> {
        self.cache.get(self.params.delay() - 1)
    }

    /// `e_N(k) = Y(k) − θ̂_N(k−d)ᵀX(k−d) − ĥ*(k−d)` with the cached `ĥ*`.
    pub fn identification_error(
        &self,
        y: &DVector<f64>,
        x_lagged: &DVector<f64>,
    ) -> Result<DVector<f64>, IdentifyError> {
        let cached = self.lagged_cache().ok_or(IdentifyError::WarmUp {
            needed: self.params.delay(),
            available: self.cache.len(),
        })?;
        Ok(self.params.identification_error(y, x_lagged)? - &cached.h_hat)
    }

    /// No adaptation and no training this step.
    pub fn hold(&mut self) -> UpdateReport {
        self.params.hold()
    }

    /// Trains the network toward `h*(k) = Y(k) − θ̂_N(k−d)ᵀX(k−d)` on the
    /// cached input, then updates `θ̂_N` with `e_N`.
    pub fn update(
        &mut self,
        y: &DVector<f64>,
        e_n: &DVector<f64>,
        x_lagged: &DVector<f64>,
    ) -> Result<NonlinearUpdate, IdentifyError> {
        let target = self.params.identification_error(y, x_lagged)?;
        let input = self
            .lagged_cache()
            .ok_or(IdentifyError::WarmUp {
                needed: self.params.delay(),
                available: self.cache.len(),
            })?
            .input
            .clone();
        let train = self
            .net
            .train_step(&input, &target, self.cfg.learn_rate, self.cfg.w_max);
        let params = self.params.update(e_n, x_lagged)?;
        Ok(NonlinearUpdate { params, train })
    }
}
