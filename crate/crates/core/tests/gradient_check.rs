//! BPTT gradients against central finite differences.

use becaptcha::nn::{compute_loss, LossKind, NetArch, OutputActivation, SequenceNet};
use becaptcha_oracles::{central_difference, relative_error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const MAX_REL: f64 = 1e-4;
const T: usize = 6;

fn flat(net: &SequenceNet) -> Vec<f64> {
    net.params().into_iter().flatten().copied().collect()
}

fn with_flat(net: &SequenceNet, x: &[f64]) -> SequenceNet {
    let mut out = net.clone();
    let mut at = 0;
    for p in out.params_mut() {
        let n = p.len();
        p.copy_from_slice(&x[at..at + n]);
        at += n;
    }
    out
}

fn random_seq(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    (0..T).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn net(input: usize, hidden: Vec<usize>, out: usize, act: OutputActivation, seed: u64) -> SequenceNet {
    let arch = NetArch {
        init_scale: 0.5,
        forget_bias: 0.0,
        ..NetArch::new(input, hidden, out, act)
    };
    SequenceNet::new(&arch, seed).unwrap()
}

fn check(label: &str, analytic: &[f64], loss: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]) {
    for i in 0..x.len() {
        let numeric = central_difference(loss, x, i, H);
        let err = relative_error(analytic[i], numeric);
        assert!(err < MAX_REL, "{label} param {i}: analytic {} numeric {numeric} rel {err}", analytic[i]);
    }
}

fn single_net_case(hidden: Vec<usize>, act: OutputActivation, kind: LossKind, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out_dim = if act == OutputActivation::Sigmoid { 1 } else { 2 };
    let n = net(3, hidden.clone(), out_dim, act, seed);
    let seq = random_seq(&mut rng, 3);
    let target: Vec<f64> = match act {
        OutputActivation::Sigmoid => vec![if seed % 2 == 0 { 1.0 } else { 0.0 }],
        OutputActivation::Linear => (0..T * out_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let (pred, cache) = n.forward(&seq).unwrap();
    let (_, grad) = compute_loss(kind, &pred, &target).unwrap();
    let grads = n.backward(&cache, &grad).unwrap();
    let analytic: Vec<f64> = grads.params.iter().flatten().copied().collect();
    let x = flat(&n);
    let mut loss = |p: &[f64]| {
        let pred = with_flat(&n, p).predict(&seq).unwrap();
        compute_loss(kind, &pred, &target).unwrap().0
    };
    let label = format!("{hidden:?} {act:?} {kind:?}");
    check(&label, &analytic, &mut loss, &x);

    // Input gradient as well.
    let x_in: Vec<f64> = seq.iter().flatten().copied().collect();
    let analytic_in: Vec<f64> = grads.input.iter().flatten().copied().collect();
    let mut loss_in = |v: &[f64]| {
        let s: Vec<Vec<f64>> = v.chunks(3).map(<[f64]>::to_vec).collect();
        compute_loss(kind, &n.predict(&s).unwrap(), &target).unwrap().0
    };
    check(&format!("{label} input"), &analytic_in, &mut loss_in, &x_in);
}

#[test]
fn discriminator_head_both_losses() {
    for hidden in [vec![4], vec![4, 4]] {
        for (i, kind) in [LossKind::Bce, LossKind::Mse].into_iter().enumerate() {
            single_net_case(hidden.clone(), OutputActivation::Sigmoid, kind, 10 + i as u64);
            single_net_case(hidden.clone(), OutputActivation::Sigmoid, kind, 21 + i as u64);
        }
    }
}

#[test]
fn generator_head_mse() {
    for hidden in [vec![4], vec![4, 4]] {
        single_net_case(hidden, OutputActivation::Linear, LossKind::Mse, 33);
    }
}

/// Generator loss through a frozen discriminator: MSE(D(G(x)), 1) and the
/// discriminator's BCE on generated sequences, both w.r.t. generator weights.
#[test]
fn stacked_generator_through_discriminator() {
    for hidden in [vec![4], vec![4, 4]] {
        for kind in [LossKind::Mse, LossKind::Bce] {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let g = net(2, hidden.clone(), 2, OutputActivation::Linear, 5);
            let d = net(2, hidden.clone(), 1, OutputActivation::Sigmoid, 6);
            let seq = random_seq(&mut rng, 2);
            let target = [if kind == LossKind::Mse { 1.0 } else { 0.0 }];

            let (g_out, g_cache) = g.forward(&seq).unwrap();
            let fake: Vec<Vec<f64>> = g_out.chunks(2).map(<[f64]>::to_vec).collect();
            let (p, d_cache) = d.forward(&fake).unwrap();
            let (_, dp) = compute_loss(kind, &p, &target).unwrap();
            let d_grads = d.backward(&d_cache, &dp).unwrap();
            let upstream: Vec<f64> = d_grads.input.iter().flatten().copied().collect();
            let g_grads = g.backward(&g_cache, &upstream).unwrap();
            let analytic: Vec<f64> = g_grads.params.iter().flatten().copied().collect();

            let mut loss = |x: &[f64]| {
                let out = with_flat(&g, x).predict(&seq).unwrap();
                let fake: Vec<Vec<f64>> = out.chunks(2).map(<[f64]>::to_vec).collect();
                compute_loss(kind, &d.predict(&fake).unwrap(), &target).unwrap().0
            };
            check(&format!("stacked {hidden:?} {kind:?}"), &analytic, &mut loss, &flat(&g));
        }
    }
}
