//! Fits the one-hidden-layer network to a smooth two-input map and compares
//! its backpropagated gradient with central differences.

use microgrid_svc::identify::{NeuralConfig, NeuralNet};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn target(x: &DVector<f64>) -> DVector<f64> {
    DVector::from_element(1, (2.0 * x[0]).sin() * 0.5 + 0.3 * x[1] * x[1])
}

fn main() {
    let cfg = NeuralConfig {
        hidden: 16,
        learn_rate: 0.05,
        w_max: 100.0,
        seed: 3,
    };
    let mut net = NeuralNet::new(2, 1, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sample = |rng: &mut ChaCha8Rng| DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));

    for epoch in 0..=5 {
        let mse: f64 = (0..500)
            .map(|_| {
                let x = sample(&mut rng);
                (net.forward(&x) - target(&x)).norm_squared()
            })
            .sum::<f64>()
            / 500.0;
        println!("epoch {epoch}: mse {mse:.5}");
        for _ in 0..4000 {
            let x = sample(&mut rng);
            net.train_step(&x, &target(&x), cfg.learn_rate, cfg.w_max);
        }
    }

    let x = sample(&mut rng);
    let t = target(&x);
    let (g, _) = net.gradients(&x, &t);
    let loss = |n: &NeuralNet| 0.5 * (n.forward(&x) - &t).norm_squared();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..g.w_out.len() {
        let (mut p, mut q) = (net.clone(), net.clone());
        p.w_out[i] += h;
        q.w_out[i] -= h;
        let fd = (loss(&p) - loss(&q)) / (2.0 * h);
        worst = worst.max((fd - g.w_out[i]).abs());
    }
    println!("output-layer gradient vs finite differences: max abs diff {worst:.2e}");
}
