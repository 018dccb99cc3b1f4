//! Shared instance generators, finite-difference checks and inference oracles.
#![allow(dead_code)]

use ccrf::crf::{self, PrecisionSystem};
use ccrf::data::synth::{gen_scene, SyntheticSceneSpec};
use ccrf::data::LabeledExample;
use ccrf::losses::TaskLossKind;
use ccrf::model::{Model, ModelConfig, Task};
use ccrf::networks::{Mlp, PairwiseNet};
use ccrf::graph::NodeGraph;
use ccrf::training::forward_loss;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

/// Symmetric, zero-diagonal affinities in `[lo, hi)`.
pub fn affinity(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut r = Array2::zeros((n, n));
    for p in 0..n {
        for q in (p + 1)..n {
            let v = rng.random_range(lo..hi);
            r[[p, q]] = v;
            r[[q, p]] = v;
        }
    }
    r
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-8)
}

/// Central differences of `f` at `x`.
pub fn central_diff(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            work[i] = x[i] + FD_STEP;
            let up = f(&work);
            work[i] = x[i] - FD_STEP;
            let down = f(&work);
            work[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Upper-triangle entries of a symmetric matrix, one per unordered pair.
pub fn pairs(r: ArrayView2<'_, f64>) -> Vec<f64> {
    let n = r.nrows();
    (0..n).flat_map(|p| ((p + 1)..n).map(move |q| (p, q))).map(|(p, q)| r[[p, q]]).collect()
}

pub fn from_pairs(n: usize, v: &[f64]) -> Array2<f64> {
    let mut r = Array2::zeros((n, n));
    let mut k = 0;
    for p in 0..n {
        for q in (p + 1)..n {
            r[[p, q]] = v[k];
            r[[q, p]] = v[k];
            k += 1;
        }
    }
    r
}

fn mat(v: &[f64], rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), v.to_vec()).unwrap()
}

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

fn mlp_flat(m: &Mlp) -> Vec<f64> {
    let mut out = Vec::new();
    m.visit(&mut |s| out.extend_from_slice(s));
    out
}

fn mlp_with(m: &Mlp, values: &[f64]) -> Mlp {
    let mut out = m.clone();
    let mut k = 0;
    out.visit_mut(&mut |s| {
        s.copy_from_slice(&values[k..k + s.len()]);
        k += s.len();
    });
    out
}

/// Smallest |pre-activation| over the hidden layers of `m` on input `x`.
pub fn kink_margin(m: &Mlp, x: ArrayView2<'_, f64>) -> f64 {
    let mut h = x.to_owned();
    let mut margin = f64::INFINITY;
    let last = m.layers.len() - 1;
    for (i, l) in m.layers.iter().enumerate() {
        let a = h.dot(&l.weight) + &l.bias;
        if i < last {
            margin = a.iter().fold(margin, |acc, v| acc.min(v.abs()));
        }
        h = a.mapv(|v| v.max(0.0));
    }
    margin
}

/// Redraw until no hidden unit sits within `1e-3` of its rectifier kink, so
/// differencing with step 1e-4 stays on one linear piece.
fn smooth_mlp(dims: &[usize], x: ArrayView2<'_, f64>, rng: &mut ChaCha8Rng) -> Mlp {
    loop {
        let mut m = Mlp::xavier(dims, rng);
        for l in &mut m.layers {
            l.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
        if kink_margin(&m, x) > 1e-3 {
            return m;
        }
    }
}

pub fn size(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

/// NLL gradients against differencing over `Z` and over each affinity pair.
pub fn nll_backward_error(rng: &mut ChaCha8Rng) -> f64 {
    let n = size(rng, 2, 8);
    let m = size(rng, 1, 4);
    let r = affinity(n, 0.05, 1.5, rng);
    let z = uniform(n, m, -1.0, 1.0, rng);
    let y = uniform(n, m, -1.0, 1.0, rng);
    let system = crf::assemble(r.view()).unwrap();
    let (dz, dr) = crf::nll_backward(&system, z.view(), y.view()).unwrap();
    let fd_z = central_diff(&flat(&z), |v| crf::nll(&system, mat(v, n, m).view(), y.view()).unwrap());
    let fd_r = central_diff(&pairs(r.view()), |v| {
        let s = crf::assemble(from_pairs(n, v).view()).unwrap();
        crf::nll(&s, z.view(), y.view()).unwrap()
    });
    rel_err(&flat(&dz), &fd_z).max(rel_err(&pairs(dr.view()), &fd_r))
}

/// MAP backward against differencing of `L = sum(W * Yhat)`.
pub fn map_backward_error(rng: &mut ChaCha8Rng) -> f64 {
    let n = size(rng, 2, 8);
    let m = size(rng, 1, 4);
    let r = affinity(n, 0.05, 1.5, rng);
    let z = uniform(n, m, -1.0, 1.0, rng);
    let w = uniform(n, m, -1.0, 1.0, rng);
    let objective = |s: &PrecisionSystem, z: ArrayView2<'_, f64>| (crf::map_infer(s, z).unwrap() * &w).sum();
    let system = crf::assemble(r.view()).unwrap();
    let yhat = crf::map_infer(&system, z.view()).unwrap();
    let (dz, dr) = crf::map_backward(&system, yhat.view(), w.view()).unwrap();
    let fd_z = central_diff(&flat(&z), |v| objective(&system, mat(v, n, m).view()));
    let fd_r = central_diff(&pairs(r.view()), |v| objective(&crf::assemble(from_pairs(n, v).view()).unwrap(), z.view()));
    rel_err(&flat(&dz), &fd_z).max(rel_err(&pairs(dr.view()), &fd_r))
}

/// Unary-style MLP backward (inputs and parameters) for `L = sum(W * Y)`.
pub fn mlp_backward_error(rng: &mut ChaCha8Rng) -> f64 {
    let n = size(rng, 1, 8);
    let dims = [size(rng, 2, 6), size(rng, 2, 7), size(rng, 2, 7), size(rng, 1, 4)];
    let x = uniform(n, dims[0], -1.0, 1.0, rng);
    let mlp = smooth_mlp(&dims, x.view(), rng);
    let w = uniform(n, dims[3], -1.0, 1.0, rng);
    let (y, cache) = mlp.forward(x.view()).unwrap();
    let (dx, grads) = mlp.backward(&cache, w.view()).unwrap();
    assert_eq!(y.dim(), w.dim());
    let fd_x = central_diff(&flat(&x), |v| (mlp.apply(mat(v, n, dims[0]).view()).unwrap() * &w).sum());
    let fd_p = central_diff(&mlp_flat(&mlp), |v| (mlp_with(&mlp, v).apply(x.view()).unwrap() * &w).sum());
    rel_err(&flat(&dx), &fd_x).max(rel_err(&mlp_flat(&grads), &fd_p))
}

fn random_graph(n: usize, f: usize, rng: &mut ChaCha8Rng) -> NodeGraph {
    NodeGraph { features: uniform(n, f, 0.0, 1.0, rng), centroids: uniform(n, 2, 0.0, 1.0, rng), pixel_counts: vec![1; n] }
}

/// Pairwise network backward for `L = sum_{p<q} W_pq R_pq`.
pub fn pairwise_backward_error(rng: &mut ChaCha8Rng) -> f64 {
    let n = size(rng, 2, 8);
    let f = size(rng, 2, 6);
    let graph = random_graph(n, f, rng);
    let dims = [f, size(rng, 2, 6), size(rng, 1, 4)];
    let embed = loop {
        let mut e = smooth_mlp(&dims, graph.features.view(), rng);
        // Keep embeddings close so kernel values are not vanishingly small.
        for l in &mut e.layers {
            l.weight.mapv_inplace(|v| 0.5 * v);
        }
        if kink_margin(&e, graph.features.view()) > 1e-3 {
            break e;
        }
    };
    let net = PairwiseNet { embed, beta_raw: rng.random_range(-1.0..1.5), gamma: 0.1 };
    let w = affinity(n, -1.0, 1.0, rng);
    let objective = |net: &PairwiseNet| pairs(net.forward(&graph).unwrap().0.view()).iter().zip(pairs(w.view())).map(|(r, w)| r * w).sum::<f64>();
    let (_, cache) = net.forward(&graph).unwrap();
    let g = net.backward(&cache, w.view()).unwrap();
    let mut analytic = mlp_flat(&g.embed);
    analytic.push(g.beta_raw);
    let mut x0 = mlp_flat(&net.embed);
    x0.push(net.beta_raw);
    let fd = central_diff(&x0, |v| {
        let k = v.len() - 1;
        objective(&PairwiseNet { embed: mlp_with(&net.embed, &v[..k]), beta_raw: v[k], gamma: net.gamma })
    });
    rel_err(&analytic, &fd)
}

/// A small scene with at most 8 nodes.
pub fn tiny_example(task: Task, seed: u64) -> LabeledExample {
    let mut spec = SyntheticSceneSpec::new(task, seed);
    spec.size = 32;
    spec.nodes = [4, 6, 8][(seed % 3) as usize];
    spec.noise_level = 0.2;
    gen_scene(&spec).unwrap()
}

fn tiny_model(feature_dim: usize, task: Task, rng: &mut ChaCha8Rng) -> Model {
    let cfg = ModelConfig { unary_hidden: vec![5], embed_hidden: vec![4], embed_dim: 3, gamma: 0.1, beta_init: 0.7 };
    let mut model = Model::init(feature_dim, task, &cfg, rng);
    for l in &mut model.unary.mlp.layers {
        l.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    }
    model
}

fn model_margin(model: &Model, ex: &LabeledExample) -> f64 {
    kink_margin(&model.unary.mlp, ex.graph.features.view()).min(kink_margin(&model.pairwise.embed, ex.graph.features.view()))
}

/// End-to-end gradient of the regularized loss through both networks and the solve.
pub fn forward_loss_error(rng: &mut ChaCha8Rng, instance: u64) -> f64 {
    let (task, loss) = match instance % 4 {
        0 => (Task::Segmentation { classes: 3 }, TaskLossKind::SOFTMAX),
        1 => (Task::Segmentation { classes: 2 }, TaskLossKind::LogLikelihood),
        2 => (Task::Depth, TaskLossKind::Tukey { c: 1.0 }),
        _ => (Task::Depth, TaskLossKind::LeastSquares),
    };
    let ex = tiny_example(task, 500 + instance);
    let mut model = tiny_model(ex.graph.feature_dim(), task, rng);
    while model_margin(&model, &ex) <= 1e-3 {
        model = tiny_model(ex.graph.feature_dim(), task, rng);
    }
    let wd = 1e-3;
    let step = forward_loss(&model, &ex, loss, wd, false).unwrap();
    let x0 = model.flat_params();
    let fd = central_diff(&x0, |v| {
        let mut m = model.clone();
        m.set_flat_params(v);
        forward_loss(&m, &ex, loss, wd, false).unwrap().total_loss()
    });
    rel_err(&step.grads.flatten(), &fd)
}

/// Residual and local-minimum check of one random inference. Returns
/// `(scaled residual, smallest energy increase over 100 unit perturbations)`.
pub fn inference_exactness(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = size(rng, 1, 50);
    let m = size(rng, 1, 8);
    let scale = [0.1, 1.0, 5.0][rng.random_range(0..3)];
    let r = affinity(n, 0.0, scale, rng);
    let z = uniform(n, m, -3.0, 3.0, rng);
    let system = crf::assemble(r.view()).unwrap();
    let yhat = crf::map_infer(&system, z.view()).unwrap();
    let z_inf = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let residual = crf::residual_inf(&system, yhat.view(), z.view()) / (1.0 + z_inf);
    let e0 = crf::energy(&system, z.view(), yhat.view()).unwrap();
    let mut min_increase = f64::INFINITY;
    for _ in 0..100 {
        let u = uniform(n, m, -1.0, 1.0, rng);
        let u = &u / u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let e = crf::energy(&system, z.view(), (&yhat + &(u * 1e-3)).view()).unwrap();
        min_increase = min_increase.min(e - e0);
    }
    (residual, min_increase)
}

/// Blockwise MAP against an explicit `(nm x nm)` solve with `A0 ⊗ I_m`, plus
/// the energy written on vectorized labels. Largest absolute difference.
pub fn kronecker_difference(rng: &mut ChaCha8Rng) -> f64 {
    let n = size(rng, 1, 4);
    let m = size(rng, 1, 3);
    let r = affinity(n, 0.0, 2.0, rng);
    let z = uniform(n, m, -2.0, 2.0, rng);
    let y = uniform(n, m, -2.0, 2.0, rng);
    let system = crf::assemble(r.view()).unwrap();
    let yhat = crf::map_infer(&system, z.view()).unwrap();
    let a0 = system.a0();
    // vec index of Y[p, i] is p * m + i
    let big = DMatrix::from_fn(n * m, n * m, |a, b| if a % m == b % m { a0[[a / m, b / m]] } else { 0.0 });
    let zv = DVector::from_iterator(n * m, z.iter().copied());
    let yv = DVector::from_iterator(n * m, y.iter().copied());
    let explicit = big.clone().lu().solve(&zv).unwrap();
    let solve_diff = yhat.iter().zip(explicit.iter()).fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
    let vec_energy = (yv.transpose() * &big * &yv)[0] - 2.0 * zv.dot(&yv) + zv.dot(&zv);
    let e = crf::energy(&system, z.view(), y.view()).unwrap();
    solve_diff.max((vec_energy - e).abs())
}

/// Relative gap between the brute-force 2-D integral of `exp(-E)` and the
/// normalizer implied by the NLL (`log Zx = nll(y) - E(y)` for any `y`).
pub fn quadrature_rel_err(rng: &mut ChaCha8Rng) -> f64 {
    let r = affinity(2, 0.0, 3.0, rng);
    let z = uniform(2, 1, -2.0, 2.0, rng);
    let system = crf::assemble(r.view()).unwrap();
    let y = uniform(2, 1, -1.0, 1.0, rng);
    let log_norm = crf::nll(&system, z.view(), y.view()).unwrap() - crf::energy(&system, z.view(), y.view()).unwrap();
    let a = system.a0();
    let (a00, a01, a11) = (a[[0, 0]], a[[0, 1]], a[[1, 1]]);
    let (z0, z1) = (z[[0, 0]], z[[1, 0]]);
    let zz = z0 * z0 + z1 * z1;
    let h = 0.02;
    let steps = (20.0 / h) as usize;
    let mut total = 0.0;
    for i in 0..=steps {
        let y0 = -10.0 + h * i as f64;
        let wi = if i == 0 || i == steps { 0.5 } else { 1.0 };
        for j in 0..=steps {
            let y1 = -10.0 + h * j as f64;
            let wj = if j == 0 || j == steps { 0.5 } else { 1.0 };
            let e = a00 * y0 * y0 + 2.0 * a01 * y0 * y1 + a11 * y1 * y1 - 2.0 * (z0 * y0 + z1 * y1) + zz;
            total += wi * wj * (-e).exp();
        }
    }
    let brute = total * h * h;
    (brute - log_norm.exp()).abs() / log_norm.exp()
}

/// Eigenvalues of `A0` lie in `[1, 1 + 2 max degree]`.
pub fn eigen_bounds_hold(rng: &mut ChaCha8Rng) -> bool {
    let n = size(rng, 1, 20);
    let r = affinity(n, 0.0, 3.0, rng);
    let system = crf::assemble(r.view()).unwrap();
    let a = system.a0();
    let eig = DMatrix::from_fn(n, n, |i, j| a[[i, j]]).symmetric_eigen().eigenvalues;
    let max_deg = system.degree().iter().fold(0.0f64, |m, &d| m.max(d));
    eig.iter().all(|&l| l >= 1.0 - 1e-10 && l <= 1.0 + 2.0 * max_deg + 1e-10)
}
