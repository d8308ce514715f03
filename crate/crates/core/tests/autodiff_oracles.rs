use qcnn::autodiff::{Graph, Var};
use qcnn::oracle::{check_gradients, naive_conv2d};
use qcnn::tensor::{conv2d, Conv2dGeometry, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn rand_t(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn positive(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(0.2..2.0))
}

/// Random projection to a scalar so every output element matters.
fn project(g: &mut Graph, v: Var, seed: u64) -> qcnn::Result<Var> {
    let w = rand_t(g.shape(v), seed + 1000);
    let p = g.mul_const(v, w)?;
    Ok(g.sum(p))
}

fn check(inputs: Vec<Tensor>, f: impl Fn(&mut Graph, &[Var]) -> qcnn::Result<Var>) -> f64 {
    let c = check_gradients(&inputs, EPS, |g, v| {
        let out = f(g, v)?;
        project(g, out, 7)
    })
    .unwrap();
    assert!(c.checked > 0);
    c.max_rel_err
}

#[test]
fn elementwise_rules() {
    let a = rand_t(&[3, 4], 1);
    let b = rand_t(&[3, 4], 2);
    assert!(check(vec![a.clone(), b.clone()], |g, v| g.add(v[0], v[1])) < TOL);
    assert!(check(vec![a.clone(), b.clone()], |g, v| g.sub(v[0], v[1])) < TOL);
    assert!(check(vec![a.clone(), b.clone()], |g, v| g.mul(v[0], v[1])) < TOL);
    assert!(check(vec![a.clone()], |g, v| Ok(g.scale(v[0], -2.5))) < TOL);
    assert!(check(vec![a.clone()], |g, v| g.mul_const(v[0], rand_t(&[3, 4], 9))) < TOL);
    assert!(check(vec![a.clone()], |g, v| Ok(g.exp(v[0]))) < TOL);
    assert!(check(vec![positive(&[3, 4], 3)], |g, v| Ok(g.log(v[0]))) < TOL);
    assert!(check(vec![a], |g, v| Ok(g.relu(v[0]))) < TOL);
}

#[test]
fn reduction_rules() {
    let a = rand_t(&[2, 3, 4], 4);
    assert!(check(vec![a.clone()], |g, v| Ok(g.sum(v[0]))) < TOL);
    for axis in 0..3 {
        assert!(check(vec![a.clone()], |g, v| g.sum_axis(v[0], axis)) < TOL);
        assert!(check(vec![a.clone()], |g, v| g.max_axis(v[0], axis)) < TOL);
        assert!(check(vec![a.clone()], |g, v| g.softmax(v[0], axis)) < TOL);
        assert!(check(vec![a.clone()], |g, v| g.log_softmax(v[0], axis)) < TOL);
    }
    assert!(check(vec![rand_t(&[2, 7, 3], 5)], |g, v| g.max_pool(v[0], 1, 3)) < TOL);
}

#[test]
fn linear_algebra_rules() {
    let a = rand_t(&[3, 5], 6);
    let b = rand_t(&[5, 2], 7);
    assert!(check(vec![a.clone(), b.clone()], |g, v| g.matmul(v[0], v[1])) < TOL);
    // gradient of sum(A×B) w.r.t. A
    let c = check_gradients(&[a, b], EPS, |g, v| {
        let p = g.matmul(v[0], v[1])?;
        Ok(g.sum(p))
    })
    .unwrap();
    assert!(c.max_rel_err < TOL);

    let x = rand_t(&[2, 3, 6, 5], 8);
    let k = rand_t(&[4, 3, 3, 3], 9);
    for geom in [Conv2dGeometry::same(3, 3), Conv2dGeometry::new((2, 1), (0, 1)), Conv2dGeometry::new((1, 2), (2, 0))] {
        assert!(check(vec![x.clone(), k.clone()], |g, v| g.conv2d(v[0], v[1], geom)) < TOL);
    }
    let bias = rand_t(&[3], 10);
    assert!(check(vec![x, bias], |g, v| g.add_bias(v[0], v[1], 1)) < TOL);
}

#[test]
fn shape_rules() {
    let a = rand_t(&[2, 3, 4], 11);
    let b = rand_t(&[2, 1, 4], 12);
    assert!(check(vec![a.clone()], |g, v| g.reshape(v[0], &[4, 6])) < TOL);
    assert!(check(vec![a.clone()], |g, v| g.permute(v[0], &[2, 0, 1])) < TOL);
    assert!(check(vec![a.clone(), b], |g, v| g.concat(&[v[0], v[1]], 1)) < TOL);
    let slopes = Tensor::new(&[3], vec![0.25, -0.5, 1.5]).unwrap();
    assert!(check(vec![a, slopes], |g, v| g.prelu(v[0], v[1], 1)) < TOL);
}

#[test]
fn conv_matches_naive_loops() {
    let x = rand_t(&[2, 3, 5, 5], 13);
    let k = rand_t(&[4, 3, 3, 3], 14);
    for (stride, padding) in [((1, 1), (0, 0)), ((1, 1), (1, 1)), ((2, 2), (1, 0)), ((1, 2), (2, 2))] {
        let fast = conv2d(&x, &k, Conv2dGeometry::new(stride, padding)).unwrap();
        let slow = naive_conv2d(&x, &k, stride, padding);
        assert_eq!(fast.shape(), slow.shape());
        assert!(fast.max_abs_diff(&slow) < 1e-12);
    }
}

#[test]
fn forward_is_deterministic() {
    let run = || {
        let mut g = Graph::new();
        let x = g.leaf(rand_t(&[2, 3, 6, 5], 15));
        let k = g.leaf(rand_t(&[2, 3, 3, 3], 16));
        let y = g.conv2d(x, k, Conv2dGeometry::same(3, 3)).unwrap();
        let s = g.softmax(y, 1).unwrap();
        g.value(s).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn softmax_normalizes() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::full(&[2, 5], 3.0));
    let s = g.softmax(x, 1).unwrap();
    assert!(g.value(s).data().iter().all(|&p| (p - 0.2).abs() < 1e-15));
    let y = g.constant(rand_t(&[4, 6], 17));
    let s = g.softmax(y, 1).unwrap();
    for row in g.value(s).data().chunks(6) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }
}
