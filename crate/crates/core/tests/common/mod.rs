#![allow(dead_code)]

use std::sync::Arc;

use fingertrain::gin::{Activation, GinConfig, GinModel, GraphBatch, LayerAgg, Pooling, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;

/// Relative error between two gradient tensors, measured on their norms.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of a scalar function of one flattened input.
pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Checks a scalar-valued tape computation of several parameter inputs.
/// Returns the worst per-input relative error.
pub fn check_primitive(inputs: &[Tensor], build: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let eval = |vals: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().enumerate().map(|(i, t)| tape.param(t.clone(), i)).collect();
        let out = build(&mut tape, &vars);
        (tape, vars, out)
    };
    let (tape, vars, out) = eval(inputs);
    let grads = tape.backward(out).expect("scalar output");
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.of(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[i].rows(), inputs[i].cols()));
        let numeric = numeric_gradient(inputs[i].data(), |probe| {
            let mut vals = inputs.to_vec();
            vals[i] = Tensor::from_vec(inputs[i].rows(), inputs[i].cols(), probe.to_vec());
            let (t, _, o) = eval(&vals);
            t.value(o).item()
        });
        worst = worst.max(relative_error(analytic.data(), &numeric));
    }
    worst
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Connected random graph: a random spanning tree plus a few extra edges.
pub fn random_batch(rng: &mut ChaCha8Rng, nodes: usize, width: usize, vocab: u32) -> GraphBatch {
    let mut edges = Vec::new();
    for v in 1..nodes {
        let u = rng.gen_range(0..v);
        edges.push((u, v));
        edges.push((v, u));
    }
    for _ in 0..2 {
        let (u, v) = (rng.gen_range(0..nodes), rng.gen_range(0..nodes));
        if u != v && !edges.contains(&(u, v)) {
            edges.push((u, v));
            edges.push((v, u));
        }
    }
    let tokens = (0..nodes * width).map(|_| rng.gen_range(0..vocab)).collect();
    GraphBatch {
        tokens: Arc::new(tokens),
        width,
        edges: Arc::new(edges),
        graph_of: Arc::new(vec![0; nodes]),
        n_graphs: 1,
        n_nodes: nodes,
    }
}

pub fn small_gin_config(pooling: Pooling) -> GinConfig {
    GinConfig {
        message_layers: 3,
        hidden_dim: 4,
        mlp_layers: 3,
        activation: Activation::Gelu,
        pooling,
        layer_agg: LayerAgg::Concat,
        dropout: 0.125,
        share_weights: true,
        train_eps: true,
        r_max: 1,
        embed_dim: 3,
        vocab_size: 6,
        output_dim: 3,
    }
}

fn gin_loss(model: &GinModel, batch: &GraphBatch, targets: &Tensor, readout_target: &Tensor, seed: u64) -> (Tape, Var) {
    let mut tape = Tape::new();
    let mut drop_rng = ChaCha8Rng::seed_from_u64(seed);
    let f = model.forward(&mut tape, batch, None, Some(&mut drop_rng)).expect("forward");
    let w = vec![1.5; model.config.output_dim];
    let m = vec![1.0; model.config.output_dim];
    let bce = tape.bce_with_logits(f.logits, targets.clone(), w, m, 1.0);
    let mse = tape.mse(f.global, readout_target.clone());
    let loss = tape.add(bce, mse);
    (tape, loss)
}

/// Full-model gradient check on one random graph. Returns per-parameter
/// `(name, relative error)`; a fixed dropout seed keeps masks identical
/// between analytic and numeric passes.
pub fn gin_gradient_check(seed: u64, pooling: Pooling) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = small_gin_config(pooling);
    let mut model = GinModel::new(cfg.clone(), seed).expect("config");
    for p in model.params.iter_mut().filter(|p| p.name.starts_with("eps") || p.name.ends_with("bias")) {
        let r = p.value.rows();
        let c = p.value.cols();
        p.value = random_tensor(&mut rng, r, c);
    }
    let batch = random_batch(&mut rng, 5, cfg.r_max as usize + 1, cfg.vocab_size as u32);
    let targets = Tensor::from_vec(1, cfg.output_dim, (0..cfg.output_dim).map(|_| f64::from(rng.gen_range(0..2u8))).collect());
    let readout = random_tensor(&mut rng, 1, cfg.global_dim());
    let drop_seed = rng.gen();

    let (tape, loss) = gin_loss(&model, &batch, &targets, &readout, drop_seed);
    let grads = tape.backward(loss).expect("backward");
    let mut out = Vec::new();
    for i in 0..model.params.len() {
        let analytic = grads
            .param(i)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(model.params[i].value.rows(), model.params[i].value.cols()));
        let base = model.params[i].value.data().to_vec();
        let mut probe_model = model.clone();
        let numeric = numeric_gradient(&base, |probe| {
            probe_model.params[i].value.data_mut().copy_from_slice(probe);
            let (t, l) = gin_loss(&probe_model, &batch, &targets, &readout, drop_seed);
            t.value(l).item()
        });
        out.push((model.params[i].name.clone(), relative_error(analytic.data(), &numeric)));
    }
    out
}
