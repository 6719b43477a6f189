use std::sync::Arc;

use graspolab_core::gdqn::{minibatch_loss, q_targets, Transition};
use graspolab_core::nn::{Activation, Gradients, HuberParams, LayerSpec, Network, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-9 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

/// `L = Σ c_k · out_k` so that `dL/dout = c`.
fn projected(net: &Network, x: &Tensor, c: &[f64]) -> f64 {
    net.forward(x)
        .unwrap()
        .data()
        .iter()
        .zip(c)
        .map(|(o, w)| o * w)
        .sum()
}

/// Checks `sample` parameters of slot `slot` against central differences;
/// returns how many were checked.
fn check_slot(
    net: &mut Network,
    grads: &Gradients,
    slot: usize,
    sample: usize,
    rng: &mut ChaCha8Rng,
    loss: &dyn Fn(&Network) -> f64,
) -> usize {
    let len = grads.slot(slot).len();
    let picks: Vec<usize> = if len <= sample {
        (0..len).collect()
    } else {
        (0..sample).map(|_| rng.random_range(0..len)).collect()
    };
    for &i in &picks {
        let orig = net.parameters().nth(slot).unwrap()[i];
        net.parameters_mut().nth(slot).unwrap()[i] = orig + STEP;
        let up = loss(net);
        net.parameters_mut().nth(slot).unwrap()[i] = orig - STEP;
        let down = loss(net);
        net.parameters_mut().nth(slot).unwrap()[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let analytic = grads.slot(slot)[i];
        assert!(
            rel_err(analytic, numeric) < TOL,
            "slot {slot} index {i}: backprop {analytic} vs finite difference {numeric}"
        );
    }
    picks.len()
}

#[test]
fn small_network_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let specs = [
        LayerSpec::Conv2d {
            out_channels: 3,
            kernel_size: 3,
            stride: 1,
            activation: Activation::Relu,
        },
        LayerSpec::Conv2d {
            out_channels: 4,
            kernel_size: 2,
            stride: 2,
            activation: Activation::Relu,
        },
        LayerSpec::Dense {
            out_units: 5,
            activation: Activation::Relu,
        },
        LayerSpec::Dense {
            out_units: 3,
            activation: Activation::Linear,
        },
    ];
    let mut net = Network::new([6, 6, 2], &specs, &mut rng).unwrap();
    // Positive biases keep most ReLUs away from their kink.
    for layer in 0..4 {
        let (_, b) = net.layer_weights_mut(layer);
        b.iter_mut().for_each(|v| *v = 0.1);
    }
    let x = random_tensor(vec![6, 6, 2], &mut rng);
    let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    net.forward_recorded(&x).unwrap();
    let grads = net.backward(&c).unwrap();
    let loss = |n: &Network| projected(n, &x, &c);

    let (mut conv, mut dense) = (0, 0);
    for slot in 0..8 {
        let checked = check_slot(&mut net, &grads, slot, usize::MAX, &mut rng, &loss);
        if slot < 4 {
            conv += checked;
        } else {
            dense += checked;
        }
    }
    assert!(conv >= 100 && dense >= 100, "conv {conv}, dense {dense}");
}

#[test]
fn gdqn_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = Network::gdqn(3, 2).unwrap();
    let x = random_tensor(vec![84, 84, 1], &mut rng);
    let c = [0.7, -1.3, 0.4];
    net.forward_recorded(&x).unwrap();
    let grads = net.backward(&c).unwrap();
    let loss = |n: &Network| projected(n, &x, &c);
    let mut per_type = [0usize; 2];
    for slot in 0..8 {
        let sample = if slot % 2 == 0 { 60 } else { 16 };
        per_type[usize::from(slot >= 4)] +=
            check_slot(&mut net, &grads, slot, sample, &mut rng, &loss);
    }
    assert!(per_type.iter().all(|n| *n >= 100), "{per_type:?}");
}

#[test]
fn dense_gradient_is_outer_product() {
    let specs = [LayerSpec::Dense {
        out_units: 2,
        activation: Activation::Linear,
    }];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = Network::new([1, 1, 3], &specs, &mut rng).unwrap();
    let x = Tensor::new(vec![1, 1, 3], vec![0.5, -2.0, 3.0]).unwrap();
    let g = [1.5, -0.25];
    net.forward_recorded(&x).unwrap();
    let grads = net.backward(&g).unwrap();
    let expected_w: Vec<f64> = g
        .iter()
        .flat_map(|gi| x.data().iter().map(move |xi| gi * xi))
        .collect();
    assert_eq!(grads.slot(0), expected_w.as_slice());
    assert_eq!(grads.slot(1), &g);
}

#[test]
fn q_learning_loss_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut online = Network::gdqn(3, 4).unwrap();
    let target = Network::gdqn(3, 5).unwrap();
    let batch: Vec<Transition> = (0..4)
        .map(|i| {
            let s = Arc::new(random_tensor(vec![84, 84, 1], &mut rng));
            let s2 = Arc::new(random_tensor(vec![84, 84, 1], &mut rng));
            Transition::new(s, i % 3, (i % 2) as u8, s2, i == 3, 3).unwrap()
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    let targets = q_targets(&refs, &target, 0.9).unwrap();
    // Small delta so both Huber branches appear in the batch.
    let huber = HuberParams::new(0.05).unwrap();
    let mut grads = Gradients::zeros_like(&online);
    minibatch_loss(&mut online, &refs, &targets, huber, &mut grads).unwrap();

    let loss = |n: &Network| {
        let mut scratch = n.clone();
        let mut g = Gradients::zeros_like(n);
        let frozen = q_targets(&refs, &target, 0.9).unwrap();
        minibatch_loss(&mut scratch, &refs, &frozen, huber, &mut g).unwrap()
    };
    for slot in 0..8 {
        check_slot(&mut online, &grads, slot, 12, &mut rng, &loss);
    }
}
