use std::collections::VecDeque;

use nalgebra::DVector;

use super::IdentifyError;

/// Rolling input–output history from which the regression vector
/// `X(k) = [V(k) … V(k−n+1), E(k) … E(k−n−d+2)]` is assembled.
///
/// Outputs are pushed as they are measured and inputs once they are applied,
/// so between the two calls of a step the newest input slot `E(k)` is still
/// open and must be supplied by the caller.
#[derive(Debug, Clone)]
pub struct RegressorState {
    m: usize,
    n: usize,
    d: usize,
    /// Newest first.
    outputs: VecDeque<DVector<f64>>,
    /// Applied inputs, newest first.
    inputs: VecDeque<DVector<f64>>,
    output_depth: usize,
    outputs_seen: usize,
    inputs_seen: usize,
}

impl RegressorState {
    /// `output_depth` is the number of outputs kept; it is raised to `n` if
    /// smaller. Use `deg F + 1` or more when `Y(k) = F(z⁻¹)V(k)` is formed
    /// from the same history.
    pub fn new(m: usize, n: usize, d: usize, output_depth: usize) -> Self {
        assert!(m > 0 && n > 0 && d > 0, "m, n and d must be positive");
        Self {
            m,
            n,
            d,
            outputs: VecDeque::new(),
            inputs: VecDeque::new(),
            output_depth: output_depth.max(n),
            outputs_seen: 0,
            inputs_seen: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn delay(&self) -> usize {
        self.d
    }

    /// `m(2n + d − 1)`.
    pub fn regressor_len(&self) -> usize {
        regressor_len(self.m, self.n, self.d)
    }

    /// Number of past inputs `E(k−1) … E(k−n−d+2)` in `X(k)`.
    pub fn past_input_count(&self) -> usize {
        self.n + self.d - 2
    }

    pub fn push_output(&mut self, v: DVector<f64>) {
        assert_eq!(v.len(), self.m);
        self.outputs.push_front(v);
        self.outputs.truncate(self.output_depth);
        self.outputs_seen += 1;
    }

    pub fn push_input(&mut self, e: DVector<f64>) {
        assert_eq!(e.len(), self.m);
        self.inputs.push_front(e);
        self.inputs.truncate(self.past_input_count().max(1));
        self.inputs_seen += 1;
    }

    /// Outputs newest first, `V(k), V(k−1), …`.
    pub fn outputs(&self) -> &VecDeque<DVector<f64>> {
        &self.outputs
    }

    pub fn output(&self, lag: usize) -> Option<&DVector<f64>> {
        self.outputs.get(lag)
    }

    /// Applied input `E(k−lag)` for `lag ≥ 1`.
    pub fn past_input(&self, lag: usize) -> Option<&DVector<f64>> {
        lag.checked_sub(1).and_then(|i| self.inputs.get(i))
    }

    /// True once `X(k)` can be built without reaching before the first
    /// sample.
    pub fn is_full(&self) -> bool {
        self.outputs_seen >= self.n && self.inputs_seen >= self.past_input_count()
    }

    /// `X(k)` with `e_now` in the `E(k)` slot.
    pub fn regressor(&self, e_now: &DVector<f64>) -> Result<DVector<f64>, IdentifyError> {
        if !self.is_full() {
            return Err(IdentifyError::WarmUp {
                needed: self.n.max(self.past_input_count()),
                available: self.outputs_seen.min(self.inputs_seen),
            });
        }
        let mut x = DVector::zeros(self.regressor_len());
        let m = self.m;
        for i in 0..self.n {
            x.rows_mut(i * m, m).copy_from(&self.outputs[i]);
        }
        let base = self.n * m;
        x.rows_mut(base, m).copy_from(e_now);
        for j in 1..=self.past_input_count() {
            x.rows_mut(base + j * m, m).copy_from(&self.inputs[j - 1]);
        }
        Ok(x)
    }

    /// Network input: `X(k)` with the open `E(k)` slot held at `E(k−1)`.
    pub fn network_input(&self) -> Result<DVector<f64>, IdentifyError> {
        let held = self
            .inputs
            .front()
            .cloned()
            .unwrap_or_else(|| DVector::zeros(self.m));
        self.regressor(&held)
    }
}

pub fn regressor_len(m: usize, n: usize, d: usize) -> usize {
    m * (2 * n + d - 1)
}

/// Row offset of the leading input block `(LB)₀ᵀ` inside `θ`.
pub fn leading_block_offset(m: usize, n: usize) -> usize {
    m * n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn layout_matches_definition() {
        // m = 2, n = 2, d = 2: X = [V(k), V(k−1), E(k), E(k−1), E(k−2)].
        let mut r = RegressorState::new(2, 2, 2, 2);
        r.push_output(v(&[1.0, 2.0]));
        r.push_input(v(&[10.0, 20.0]));
        r.push_output(v(&[3.0, 4.0]));
        r.push_input(v(&[30.0, 40.0]));
        r.push_output(v(&[5.0, 6.0]));
        let x = r.regressor(&v(&[50.0, 60.0])).unwrap();
        assert_eq!(
            x.as_slice(),
            &[5.0, 6.0, 3.0, 4.0, 50.0, 60.0, 30.0, 40.0, 10.0, 20.0]
        );
        assert_eq!(r.regressor_len(), 10);
        let xn = r.network_input().unwrap();
        assert_eq!(&xn.as_slice()[4..6], &[30.0, 40.0]);
    }

    #[test]
    fn warm_up_reported() {
        let mut r = RegressorState::new(1, 2, 1, 2);
        r.push_output(v(&[1.0]));
        assert!(matches!(
            r.regressor(&v(&[0.0])),
            Err(IdentifyError::WarmUp { .. })
        ));
        r.push_input(v(&[0.5]));
        r.push_output(v(&[1.0]));
        assert!(r.regressor(&v(&[0.0])).is_ok());
    }
}
