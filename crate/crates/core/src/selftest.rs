//! Quick oracle checks runnable from an installed binary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::ctc::{ctc_loss, ctc_loss_node, min_frames};
use crate::error::Result;
use crate::features::{log_mel_energies, FeatureConfig};
use crate::layers::{hamilton_apply, quaternion_init, InitSpec, QConv2d, QDense, QTensor, QVar};
use crate::oracle::{
    block_real_dense, block_real_kernel, check_gradients, ctc_brute_force, edit_distance_reference, naive_conv2d,
    naive_matmul, reference_log_mel, stack_planes, unstack_planes,
};
use crate::params::{Mode, ParamStore, Session};
use crate::quaternion::Quaternion;
use crate::tensor::{Conv2dGeometry, Tensor};
use crate::train::edit_distance;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Measured error or statistic.
    pub value: f64,
    pub threshold: f64,
}

fn result(name: &'static str, value: f64, threshold: f64) -> CheckResult {
    CheckResult { name, passed: value < threshold, value, threshold }
}

fn random_q(shape: &[usize], rng: &mut ChaCha8Rng) -> QTensor {
    QTensor::from_fn(shape, |_| {
        Quaternion::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn algebra(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let a = Quaternion::from_array([0; 4].map(|_| rng.random_range(-10.0..10.0)));
        let b = Quaternion::from_array([0; 4].map(|_| rng.random_range(-10.0..10.0)));
        let m = b.to_real_matrix().row_mul(a.to_array());
        for (x, y) in m.iter().zip(a.hamilton(b).to_array()) {
            worst = worst.max((x - y).abs());
        }
    }
    result("hamilton product vs matrix form", worst, 1e-12)
}

fn layers(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut store = ParamStore::new();
        let (in_q, out_q) = (rng.random_range(1..4), rng.random_range(1..4));
        let geom = Conv2dGeometry::new((1, rng.random_range(1..3)), (1, 2));
        let conv = QConv2d::new(&mut store, "c", in_q, out_q, (3, 5), geom, false, &InitSpec::he(in_q * 15), false, rng)?;
        let dense = QDense::new(&mut store, "d", in_q, out_q, false, &InitSpec::he(in_q), false, rng)?;
        let image = random_q(&[1, in_q, 6, 7], rng);
        let rows = random_q(&[3, in_q], rng);
        let mut sess = Session::new(&store, Mode::Eval);
        let x = QVar::constant(&mut sess.graph, &image);
        let yc = conv.forward(&mut sess, x)?.value(&sess.graph);
        let x = QVar::constant(&mut sess.graph, &rows);
        let yd = dense.forward(&mut sess, x)?.value(&sess.graph);
        let wc = QTensor::from_planes(conv.weight.map(|id| store.get(id).value.clone()))?;
        let wd = QTensor::from_planes(dense.weight.map(|id| store.get(id).value.clone()))?;
        let rc = naive_conv2d(&stack_planes(&image), &block_real_kernel(&wc), geom.stride, geom.padding);
        let rd = naive_matmul(&stack_planes(&rows), &block_real_dense(&wd));
        worst = worst.max(yc.max_abs_diff(&unstack_planes(&rc))).max(yd.max_abs_diff(&unstack_planes(&rd)));
    }
    Ok(result("quaternion layers vs block real form", worst, 1e-10))
}

fn gradients(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut inputs: Vec<Tensor> = (0..8)
        .map(|i| {
            let shape: &[usize] = if i < 4 { &[1, 2, 5, 4] } else { &[2, 2, 3, 3] };
            Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
        })
        .collect();
    inputs.push(Tensor::new(&[2], vec![0.25, 0.1])?);
    let geom = Conv2dGeometry::same(3, 3);
    let check = check_gradients(&inputs, 1e-5, |g: &mut Graph, v: &[Var]| {
        let x = QVar::from_planes([v[0], v[1], v[2], v[3]]);
        let y = hamilton_apply(g, [v[4], v[5], v[6], v[7]], x, |g, w, x| g.conv2d(x, w, geom))?;
        let y = crate::layers::prelu(g, y, v[8])?;
        let y = crate::layers::split_maxpool_freq(g, y, 2)?;
        let joined = g.concat(&y.planes(), 1)?;
        let flat = g.reshape(joined, &[16, 4])?;
        ctc_loss_node(g, flat, &[0, 1], 3)
    })?;
    Ok(result("finite-difference gradients", check.max_rel_err, 1e-4))
}

fn ctc(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let labels = rng.random_range(1..=4);
        let frames = rng.random_range(1..=6);
        let target: Vec<usize> = (0..rng.random_range(1..=3)).map(|_| rng.random_range(0..labels)).collect();
        if min_frames(&target) > frames {
            continue;
        }
        let logits = Tensor::from_fn(&[frames, labels + 1], |_| rng.random_range(-3.0..3.0));
        let fast = ctc_loss(&logits, &target, labels)?.loss;
        worst = worst.max((fast - ctc_brute_force(&logits, &target, labels)).abs());
    }
    Ok(result("ctc vs path enumeration", worst, 1e-8))
}

fn filterbank(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let cfg = FeatureConfig::default();
    let wave: Vec<f64> = (0..2400).map(|_| rng.random_range(-0.5..0.5)).collect();
    let fast = log_mel_energies(&wave, &cfg)?;
    let slow = reference_log_mel(&wave, &cfg);
    let worst = fast.data().iter().zip(slow.data()).map(|(a, b)| (a - b).exp_m1().abs()).fold(0.0, f64::max);
    Ok(result("filterbank vs direct DFT (relative)", worst, 1e-6))
}

fn init(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let spec = InitSpec::he(128);
    let n = 100_000;
    let w = quaternion_init(&spec, &[n], rng)?;
    let var = (0..n).map(|i| w.get_flat(i).norm().powi(2)).sum::<f64>() / n as f64;
    let target = 4.0 * spec.sigma().powi(2);
    Ok(result("initializer variance (relative deviation)", (var - target).abs() / target, 0.03))
}

fn edit(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut mismatches = 0;
    for _ in 0..500 {
        let a: Vec<u8> = (0..rng.random_range(0..=10)).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<u8> = (0..rng.random_range(0..=10)).map(|_| rng.random_range(0..4)).collect();
        mismatches += usize::from(edit_distance(&a, &b) != edit_distance_reference(&a, &b));
    }
    result("edit distance vs recursive oracle (mismatches)", mismatches as f64, 0.5)
}

/// Runs every check with a fixed seed.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        algebra(&mut rng),
        layers(&mut rng)?,
        gradients(&mut rng)?,
        ctc(&mut rng)?,
        filterbank(&mut rng)?,
        init(&mut rng)?,
        edit(&mut rng),
    ])
}
