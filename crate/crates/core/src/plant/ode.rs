/// Right-hand side of `ẋ = f(x)` for a time-invariant system under held input.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn derivative(&self, x: &[f64], dx: &mut [f64]);
}

/// Classic fixed-step fourth-order Runge–Kutta with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    pub fn step<S: OdeSystem + ?Sized>(&mut self, sys: &S, x: &mut [f64], h: f64) {
        let n = x.len();
        sys.derivative(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        sys.derivative(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        sys.derivative(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        sys.derivative(&self.tmp, &mut self.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn derivative(&self, x: &[f64], dx: &mut [f64]) {
            dx[0] = -x[0];
        }
    }

    #[test]
    fn fourth_order_on_decay() {
        let run = |h: f64| {
            let mut rk = Rk4::new(1);
            let mut x = [1.0];
            let steps = (1.0 / h).round() as usize;
            for _ in 0..steps {
                rk.step(&Decay, &mut x, h);
            }
            (x[0] - (-1.0f64).exp()).abs()
        };
        let order = (run(0.1) / run(0.05)).log2();
        assert!(order > 3.8, "order {order}");
    }
}
