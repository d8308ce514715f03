//! End-to-end acceptance checks. Runs every criterion, prints one line per
//! criterion and exits non-zero if any of them fails.

use std::time::{Duration, Instant};

use qcnn::autodiff::{Graph, Var};
use qcnn::ctc::{best_path_decode, collapse, ctc_loss, ctc_loss_node, min_frames};
use qcnn::features::{delta, extract, log_mel_energies, FeatureConfig};
use qcnn::layers::{quaternion_init, Algebra, InitSpec, LayerShape, QConv2d, QDense, QTensor, QVar};
use qcnn::oracle::{block_real_dense, block_real_kernel, check_gradients, ctc_brute_force, naive_conv2d,
    naive_matmul, reference_log_mel, stack_planes, unstack_planes};
use qcnn::params::{Mode, ParamStore, Session};
use qcnn::tensor::{Conv2dGeometry, Tensor};
use qcnn::train::synth::{toy_dataset, toy_symbols, ToySpec};
use qcnn::train::{evaluate, Checkpoint, Config, Model, ModelConfig, PhoneMap, Trainer};
use qcnn::Quaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: String) -> Outcome {
    if cond { Ok(msg) } else { Err(msg) }
}

fn within(elapsed: Duration, limit: Duration, msg: String) -> Outcome {
    let msg = format!("{msg} time={:.2}s", elapsed.as_secs_f64());
    ensure(elapsed < limit, format!("{msg} (limit {}s)", limit.as_secs()))
}

fn random_quaternion(rng: &mut impl Rng) -> Quaternion {
    Quaternion::new(
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
    )
}

fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn random_qtensor(shape: &[usize], rng: &mut impl Rng) -> QTensor {
    QTensor::from_fn(shape, |_| {
        Quaternion::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn algebra_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let a = random_quaternion(&mut rng);
        let b = random_quaternion(&mut rng);
        let via_matrix = b.to_real_matrix().row_mul(a.to_array());
        let direct = a.hamilton(b).to_array();
        for (m, d) in via_matrix.iter().zip(direct) {
            worst = worst.max((m - d).abs());
        }
    }
    let (i, j, k) = (Quaternion::I, Quaternion::J, Quaternion::K);
    let minus_one = Quaternion::new(-1.0, 0.0, 0.0, 0.0);
    let basis = i * j == k && i * i == minus_one && j * j == minus_one && k * k == minus_one;
    let elapsed = start.elapsed();
    if !basis {
        return Err("basis relations violated".into());
    }
    if worst >= 1e-12 {
        return Err(format!("max_abs_diff={worst:e}"));
    }
    within(elapsed, Duration::from_secs(1), format!("pairs=10000 max_abs_diff={worst:e} basis=exact"))
}

fn conv_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for n in 0..100 {
        let mut store = ParamStore::new();
        let in_q = rng.random_range(1..=3);
        let out_q = rng.random_range(1..=3);
        let diff = if n % 2 == 0 {
            let kernel = (rng.random_range(1..=3) * 2 - 1, rng.random_range(1..=3) * 2 - 1);
            let geom = Conv2dGeometry::new(
                (rng.random_range(1..=2), rng.random_range(1..=2)),
                (rng.random_range(0..=kernel.0 / 2), rng.random_range(0..=kernel.1 / 2)),
            );
            let spec = InitSpec::he(in_q * kernel.0 * kernel.1);
            let layer = QConv2d::new(&mut store, "c", in_q, out_q, kernel, geom, false, &spec, false, &mut rng)
                .map_err(|e| e.to_string())?;
            let input = random_qtensor(&[rng.random_range(1..=2), in_q, rng.random_range(5..=9), rng.random_range(5..=9)], &mut rng);
            let mut sess = Session::new(&store, Mode::Eval);
            let x = QVar::constant(&mut sess.graph, &input);
            let y = layer.forward(&mut sess, x).map_err(|e| e.to_string())?.value(&sess.graph);
            let w = QTensor::from_planes(layer.weight.map(|id| store.get(id).value.clone())).unwrap();
            let real = naive_conv2d(&stack_planes(&input), &block_real_kernel(&w), geom.stride, geom.padding);
            y.max_abs_diff(&unstack_planes(&real))
        } else {
            let spec = InitSpec::he(in_q);
            let layer = QDense::new(&mut store, "d", in_q, out_q, false, &spec, false, &mut rng).map_err(|e| e.to_string())?;
            let input = random_qtensor(&[rng.random_range(1..=5), in_q], &mut rng);
            let mut sess = Session::new(&store, Mode::Eval);
            let x = QVar::constant(&mut sess.graph, &input);
            let y = layer.forward(&mut sess, x).map_err(|e| e.to_string())?.value(&sess.graph);
            let w = QTensor::from_planes(layer.weight.map(|id| store.get(id).value.clone())).unwrap();
            let real = naive_matmul(&stack_planes(&input), &block_real_dense(&w));
            y.max_abs_diff(&unstack_planes(&real))
        };
        worst = worst.max(diff);
    }
    if worst >= 1e-10 {
        return Err(format!("max_abs_diff={worst:e}"));
    }
    within(start.elapsed(), Duration::from_secs(30), format!("layers=100 max_abs_diff={worst:e}"))
}

fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        symbols: toy_symbols(),
        n_conv_layers: 2,
        feature_maps: 2,
        n_dense: 1,
        dense_width: 2,
        ..ModelConfig::default()
    }
}

/// Finite differences through the whole model (dropout mask held fixed).
fn model_gradient_check(eps: f64) -> Result<f64, String> {
    let model = Model::build(&tiny_model_config(), 11).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let frames = 8;
    let input = QTensor::from_fn(&[1, 1, 41, frames], |_| Quaternion::new(0.0, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let target = vec![0, 3, 1];
    let dropout_rng = ChaCha8Rng::seed_from_u64(13);
    let loss_of = |store: &ParamStore| -> (f64, Option<Vec<Tensor>>) {
        let mut m = model.clone();
        m.store = store.clone();
        let mut sess = Session::new(&m.store, Mode::Train(Box::new(dropout_rng.clone())));
        let logits = m.forward(&mut sess, &input).unwrap();
        let loss = ctc_loss_node(&mut sess.graph, logits, &target, m.symbols().blank()).unwrap();
        let v = sess.graph.value(loss).item().unwrap();
        let grads = sess.param_grads(loss).unwrap();
        (v, Some(grads.iter().cloned().collect()))
    };
    let (_, grads) = loss_of(&model.store);
    let grads = grads.unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = model.store.clone();
    for (pi, g) in grads.iter().enumerate() {
        for j in 0..g.len() {
            let orig = probe.iter().nth(pi).unwrap().value.data()[j];
            let set = |s: &mut ParamStore, v: f64| s.iter_mut().nth(pi).unwrap().value.data_mut()[j] = v;
            set(&mut probe, orig + eps);
            let up = loss_of(&probe).0;
            set(&mut probe, orig - eps);
            let down = loss_of(&probe).0;
            set(&mut probe, orig);
            let numeric = (up - down) / (2.0 * eps);
            let a = g.data()[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(qcnn::oracle::REL_ERR_FLOOR));
        }
    }
    Ok(worst)
}

fn weighted_sum(g: &mut Graph, v: Var, seed: u64) -> qcnn::Result<Var> {
    let shape = g.shape(v).to_vec();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::from_fn(&shape, |_| r.random_range(-1.0..1.0));
    let p = g.mul_const(v, w)?;
    Ok(g.sum(p))
}

/// A scalar that depends on every output component with distinct weights.
fn quaternion_sum(g: &mut Graph, y: QVar, seed: u64) -> qcnn::Result<Var> {
    let mut total = None;
    for (i, p) in y.planes().into_iter().enumerate() {
        let s = weighted_sum(g, p, seed + i as u64)?;
        total = Some(match total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
    }
    Ok(total.expect("four planes"))
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let eps = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut results: Vec<(&str, f64)> = Vec::new();
    let mut run = |name: &'static str, inputs: Vec<Tensor>, f: &dyn Fn(&mut Graph, &[Var]) -> qcnn::Result<Var>| -> Result<(), String> {
        let c = check_gradients(&inputs, eps, f).map_err(|e| format!("{name}: {e}"))?;
        results.push((name, c.max_rel_err));
        Ok(())
    };
    let planes = |rng: &mut ChaCha8Rng, shape: &[usize]| (0..4).map(|_| random_tensor(shape, rng)).collect::<Vec<_>>();

    let geom = Conv2dGeometry::new((1, 2), (1, 1));
    let mut inputs = planes(&mut rng, &[1, 2, 5, 6]);
    inputs.extend(planes(&mut rng, &[2, 2, 3, 3]));
    run("qconv2d", inputs, &|g, v| {
        let x = QVar::from_planes([v[0], v[1], v[2], v[3]]);
        let w = [v[4], v[5], v[6], v[7]];
        let y = qcnn::layers::hamilton_apply(g, w, x, |g, w, x| g.conv2d(x, w, geom))?;
        quaternion_sum(g, y, 0)
    })?;

    let mut inputs = planes(&mut rng, &[3, 2]);
    inputs.extend(planes(&mut rng, &[2, 3]));
    run("qdense", inputs, &|g, v| {
        let x = QVar::from_planes([v[0], v[1], v[2], v[3]]);
        let w = [v[4], v[5], v[6], v[7]];
        let y = qcnn::layers::hamilton_apply(g, w, x, |g, w, x| g.matmul(x, w))?;
        quaternion_sum(g, y, 10)
    })?;

    let mut inputs = planes(&mut rng, &[1, 2, 6, 3]);
    inputs.push(Tensor::new(&[2], vec![0.25, -0.3]).unwrap());
    run("prelu", inputs, &|g, v| {
        let x = QVar::from_planes([v[0], v[1], v[2], v[3]]);
        let y = qcnn::layers::prelu(g, x, v[4])?;
        quaternion_sum(g, y, 20)
    })?;

    run("split_maxpool", planes(&mut rng, &[1, 2, 7, 3]), &|g, v| {
        let x = QVar::from_planes([v[0], v[1], v[2], v[3]]);
        let y = qcnn::layers::split_maxpool_freq(g, x, 3)?;
        quaternion_sum(g, y, 30)
    })?;

    let mask_rng = ChaCha8Rng::seed_from_u64(4);
    run("quaternion_dropout", planes(&mut rng, &[2, 5]), &|g, v| {
        let x = QVar::from_planes([v[0], v[1], v[2], v[3]]);
        let mut r = mask_rng.clone();
        let y = qcnn::layers::quaternion_dropout(g, x, 0.3, Some(&mut r))?;
        quaternion_sum(g, y, 40)
    })?;

    run("ctc", vec![random_tensor(&[7, 4], &mut rng)], &|g, v| ctc_loss_node(g, v[0], &[0, 2, 2], 3))?;

    let model_err = model_gradient_check(eps)?;
    results.push(("small_qcnn", model_err));

    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let detail = results.iter().map(|(n, e)| format!("{n}={e:.1e}")).collect::<Vec<_>>().join(" ");
    if worst >= 1e-4 {
        return Err(format!("max_rel_err={worst:e} {detail}"));
    }
    within(start.elapsed(), Duration::from_secs(120), format!("max_rel_err={worst:.2e} {detail}"))
}

fn init_statistics() -> Outcome {
    let n = 100_000;
    let spec = InitSpec::he(128);
    let sigma = 1.0 / (2.0f64 * 128.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = quaternion_init(&spec, &[n], &mut rng).map_err(|e| e.to_string())?;
    let sq: Vec<f64> = (0..n).map(|i| w.get_flat(i).norm().powi(2)).collect();
    let var = sq.iter().sum::<f64>() / n as f64;
    let target = 4.0 * sigma * sigma;
    let rel = (var - target).abs() / target;
    let mut worst_z: f64 = 0.0;
    for plane in w.planes() {
        let d = plane.data();
        let mean = d.iter().sum::<f64>() / n as f64;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        worst_z = worst_z.max(mean.abs() / (sd / (n as f64).sqrt()));
    }
    ensure(
        rel < 0.03 && worst_z < 3.0,
        format!("var={var:.6e} target={target:.6e} rel_dev={:.2}% max_mean_z={worst_z:.2}", 100.0 * rel),
    )
}

fn ctc_oracle() -> Outcome {
    let (z1, z2, z3, b) = (0, 1, 2, 3);
    let cases = collapse(&[z1, z2, b, z3, b], b) == [z1, z2, z3]
        && collapse(&[z1, z2, z3, z3, b], b) == [z1, z2, z3]
        && collapse(&[z1, b, z2, z3, z3], b) == [z1, z2, z3];
    if !cases {
        return Err("collapse cases differ".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    for frames in 1..=8 {
        for labels in 1..=4 {
            for len in 1..=3 {
                for _ in 0..3 {
                    let target: Vec<usize> = (0..len).map(|_| rng.random_range(0..labels)).collect();
                    if min_frames(&target) > frames {
                        continue;
                    }
                    let logits = Tensor::from_fn(&[frames, labels + 1], |_| rng.random_range(-3.0..3.0));
                    let fast = ctc_loss(&logits, &target, labels).map_err(|e| e.to_string())?.loss;
                    let brute = ctc_brute_force(&logits, &target, labels);
                    worst = worst.max((fast - brute).abs());
                    instances += 1;
                }
            }
        }
    }
    ensure(worst < 1e-8, format!("instances={instances} max_abs_diff={worst:e} collapse_cases=exact"))
}

fn parameter_arithmetic() -> Outcome {
    let real = LayerShape::Dense { inputs: 1024, outputs: 1024 }.weight_count(Algebra::Real);
    let quat = LayerShape::Dense { inputs: 256, outputs: 256 }.weight_count(Algebra::Quaternion);
    if real != 1_048_576 || quat != 262_144 {
        return Err(format!("real={real} quaternion={quat}"));
    }
    let mut paired = 0;
    for (maps, layers) in [(8, 6), (32, 10), (64, 10)] {
        let cfg = ModelConfig { n_conv_layers: layers, feature_maps: maps, ..ModelConfig::default() };
        let model = Model::build(&cfg, 0).map_err(|e| e.to_string())?;
        for row in model.layer_table().iter().filter(|r| r.name != "output") {
            if row.real_weights != 4 * row.weights {
                return Err(format!("{} ratio {}/{}", row.name, row.real_weights, row.weights));
            }
            paired += 1;
        }
    }
    ensure(true, format!("dense 1024x1024 real={real} vs 256qx256q={quat} ratio={:.3} paired_layers={paired} all_ratio=4", real as f64 / quat as f64))
}

fn feature_pipeline() -> Outcome {
    let cfg = FeatureConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let wave: Vec<f64> = (0..16_000)
        .map(|n| 0.3 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 16_000.0).sin() + rng.random_range(-0.05..0.05))
        .collect();
    let seq = extract(&wave, &cfg).map_err(|e| e.to_string())?;
    let q = seq.quaternions();
    let real_zero = q.r.data().iter().all(|&v| v == 0.0);
    if q.shape()[2] != 41 || !real_zero {
        return Err(format!("shape={:?} real_plane_zero={real_zero}", q.shape()));
    }
    let constant = Tensor::full(&[41, 30], 3.7);
    let d = delta(&constant, 2).map_err(|e| e.to_string())?;
    if d.data().iter().any(|&v| v != 0.0) {
        return Err("delta of a constant is not zero".into());
    }
    let fast = log_mel_energies(&wave[..4000], &cfg).map_err(|e| e.to_string())?;
    let slow = reference_log_mel(&wave[..4000], &cfg);
    let worst = fast.data().iter().zip(slow.data()).map(|(a, b)| (a - b).exp_m1().abs()).fold(0.0, f64::max);
    ensure(
        worst < 1e-6,
        format!("quaternions_per_frame=41 frames={} real_plane=0 delta_const=0 filterbank_rel_err={worst:.1e}", seq.n_frames()),
    )
}

fn toy_config() -> Config {
    let mut c = Config::default();
    c.model.symbols = toy_symbols();
    c.model.n_conv_layers = 2;
    c.model.feature_maps = 8;
    c.model.n_dense = 1;
    c.model.dense_width = 32;
    c.model.dropout = 0.0;
    c.training.epochs = 100;
    c.training.fine_tune_epochs = 0;
    c.training.batch_size = 4;
    c.training.adam_lr = 3e-3;
    c.training.workers = 1;
    c
}

fn toy_overfit() -> Outcome {
    let start = Instant::now();
    let data = toy_dataset(&ToySpec::default(), 7).map_err(|e| e.to_string())?;
    let mut trainer = Trainer::new(toy_config()).map_err(|e| e.to_string())?;
    let map = PhoneMap::default();
    let mut last = None;
    while !trainer.is_finished() {
        trainer.run_epoch(&data, None).map_err(|e| e.to_string())?;
        let report = evaluate(&trainer.model, &data, &map).map_err(|e| e.to_string())?;
        let done = report.stats.exact == data.len() && report.loss < 0.1;
        last = Some(report);
        if done {
            break;
        }
    }
    let report = last.ok_or("no epochs run")?;
    let exact = data
        .utterances
        .iter()
        .filter(|u| {
            let logits = trainer.model.logits(u.features.quaternions()).unwrap();
            best_path_decode(&logits, trainer.model.symbols().blank()).unwrap() == u.labels
        })
        .count();
    let msg = format!(
        "epochs={} sequence_accuracy={}/{} train_loss={:.4}",
        trainer.epochs_done,
        exact,
        data.len(),
        report.loss
    );
    if exact != data.len() || report.loss >= 0.1 {
        return Err(msg);
    }
    within(start.elapsed(), Duration::from_secs(600), msg)
}

fn determinism() -> Outcome {
    let data = toy_dataset(&ToySpec { utterances: 6, ..ToySpec::default() }, 8).map_err(|e| e.to_string())?;
    let mut cfg = toy_config();
    cfg.model.dropout = 0.3;
    let run = || -> Result<(f64, ParamStore), String> {
        let mut t = Trainer::new(cfg.clone()).map_err(|e| e.to_string())?;
        let r = t.run_epoch(&data, None).map_err(|e| e.to_string())?;
        Ok((r.train_loss, t.model.store))
    };
    let (l1, p1) = run()?;
    let (l2, p2) = run()?;
    if l1.to_bits() != l2.to_bits() || p1 != p2 {
        return Err(format!("epoch-1 losses {l1:e} vs {l2:e}"));
    }
    let mut t = Trainer::new(cfg.clone()).map_err(|e| e.to_string())?;
    t.run_epoch(&data, None).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("last.ckpt");
    t.checkpoint().save(&path).map_err(|e| e.to_string())?;
    let restored = Trainer::resume(cfg, Checkpoint::load(&path).map_err(|e| e.to_string())?, None).map_err(|e| e.to_string())?;
    let mut identical = true;
    for u in &data.utterances {
        let a = t.model.logits(u.features.quaternions()).map_err(|e| e.to_string())?;
        let b = restored.model.logits(u.features.quaternions()).map_err(|e| e.to_string())?;
        identical &= a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
    }
    ensure(identical, format!("epoch1_loss={l1:.12e} (bit-identical) checkpoint_forward_identical={identical}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("algebra oracle", algebra_oracle),
        ("convolution equivalence", conv_equivalence),
        ("gradient checks", gradient_checks),
        ("initializer statistics", init_statistics),
        ("ctc oracle", ctc_oracle),
        ("parameter arithmetic", parameter_arithmetic),
        ("feature pipeline", feature_pipeline),
        ("toy overfit", toy_overfit),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(msg) => println!("criterion {} {name}: PASS {msg}", n + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {} {name}: FAIL {msg}", n + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
