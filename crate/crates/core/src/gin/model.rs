use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Activation, Pooling, Tape, Var};
use super::tensor::Tensor;
use super::GinError;
use crate::par::Exec;
use crate::vocab::TokenizedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LayerAgg {
    Last,
    #[default]
    Concat,
}

impl std::str::FromStr for LayerAgg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "last" => Ok(LayerAgg::Last),
            "concat" => Ok(LayerAgg::Concat),
            other => Err(format!("unknown layer aggregation '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GinConfig {
    pub message_layers: usize,
    pub hidden_dim: usize,
    /// Linear layers inside each GIN update MLP.
    pub mlp_layers: usize,
    pub activation: Activation,
    pub pooling: Pooling,
    pub layer_agg: LayerAgg,
    pub dropout: f64,
    pub share_weights: bool,
    pub train_eps: bool,
    pub r_max: u32,
    /// Token embedding width `l`.
    pub embed_dim: usize,
    /// Embedding rows: padding, ranked tokens and unk.
    pub vocab_size: usize,
    /// Prediction-head outputs (fingerprint bits during pre-training).
    pub output_dim: usize,
}

impl Default for GinConfig {
    fn default() -> Self {
        GinConfig {
            message_layers: 3,
            hidden_dim: 512,
            mlp_layers: 3,
            activation: Activation::Hardswish,
            pooling: Pooling::Sum,
            layer_agg: LayerAgg::Concat,
            dropout: 0.125,
            share_weights: true,
            train_eps: true,
            r_max: 2,
            embed_dim: 512,
            vocab_size: 2050,
            output_dim: 2048,
        }
    }
}

impl GinConfig {
    pub fn validate(&self) -> Result<(), GinError> {
        let positive = [
            ("message_layers", self.message_layers),
            ("hidden_dim", self.hidden_dim),
            ("mlp_layers", self.mlp_layers),
            ("embed_dim", self.embed_dim),
            ("vocab_size", self.vocab_size),
            ("output_dim", self.output_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(GinError::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..=0.5).contains(&self.dropout) {
            return Err(GinError::Config(format!("dropout {} outside [0, 0.5]", self.dropout)));
        }
        Ok(())
    }

    /// Width of a node feature row: one embedding per radius.
    pub fn node_input_dim(&self) -> usize {
        (self.r_max as usize + 1) * self.embed_dim
    }

    /// Width of the global embedding under the configured readout.
    pub fn global_dim(&self) -> usize {
        match self.layer_agg {
            LayerAgg::Last => self.hidden_dim,
            LayerAgg::Concat => self.node_input_dim() + self.message_layers * self.hidden_dim,
        }
    }

    fn mlp_params(&self, input: usize) -> usize {
        let h = self.hidden_dim;
        (input * h + h) + (self.mlp_layers - 1) * (h * h + h)
    }

    /// Trainable parameter count from the configuration alone.
    pub fn analytic_parameter_count(&self) -> usize {
        let h = self.hidden_dim;
        let embedding = self.vocab_size * self.embed_dim;
        let first = self.mlp_params(self.node_input_dim());
        let rest_blocks = match (self.message_layers, self.share_weights) {
            (1, _) => 0,
            (_, true) => 1,
            (l, false) => l - 1,
        };
        let rest = rest_blocks * self.mlp_params(h);
        let eps = if self.train_eps { self.message_layers } else { 0 };
        let head = (h * h + h) + (h * self.output_dim + self.output_dim);
        embedding + first + rest + eps + head
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub trainable: bool,
}

/// Disjoint union of tokenised graphs.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub tokens: Arc<Vec<u32>>,
    pub width: usize,
    /// Directed edges `(src, dst)`, both directions of every bond.
    pub edges: Arc<Vec<(usize, usize)>>,
    pub graph_of: Arc<Vec<usize>>,
    pub n_graphs: usize,
    pub n_nodes: usize,
}

impl GraphBatch {
    pub fn new(graphs: &[&TokenizedGraph]) -> Self {
        let width = graphs.first().map_or(1, |g| g.width);
        let mut tokens = Vec::new();
        let mut edges = Vec::new();
        let mut graph_of = Vec::new();
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            assert_eq!(g.width, width, "mixed token widths in one batch");
            tokens.extend_from_slice(&g.tokens);
            for b in &g.graph.bonds {
                edges.push((offset + b.begin, offset + b.end));
                edges.push((offset + b.end, offset + b.begin));
            }
            graph_of.extend(std::iter::repeat_n(gi, g.atom_count()));
            offset += g.atom_count();
        }
        GraphBatch {
            tokens: Arc::new(tokens),
            width,
            edges: Arc::new(edges),
            graph_of: Arc::new(graph_of),
            n_graphs: graphs.len(),
            n_nodes: offset,
        }
    }
}

/// Variables produced by one forward pass.
pub struct Forward {
    /// Pooled node features before the first layer and after every layer.
    pub pooled: Vec<Var>,
    pub global: Var,
    /// Head logits computed from the last layer's pooled features.
    pub logits: Var,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GinModel {
    pub config: GinConfig,
    pub params: Vec<Param>,
}

const EMBEDDING: usize = 0;

impl GinModel {
    /// Standard-normal embeddings, Xavier-normal weights, zero biases, zero
    /// eps and a zero padding row.
    pub fn new(config: GinConfig, seed: u64) -> Result<Self, GinError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut table = Tensor::standard_normal(config.vocab_size, config.embed_dim, &mut rng);
        table.row_mut(0).fill(0.0);
        params.push(Param {
            name: "embedding".into(),
            value: table,
            trainable: true,
        });
        let blocks = match (config.message_layers, config.share_weights) {
            (1, _) => 1,
            (_, true) => 2,
            (l, false) => l,
        };
        for b in 0..blocks {
            let mut input = if b == 0 { config.node_input_dim() } else { config.hidden_dim };
            for j in 0..config.mlp_layers {
                params.push(Param {
                    name: format!("gin{b}.linear{j}.weight"),
                    value: Tensor::xavier_normal(input, config.hidden_dim, &mut rng),
                    trainable: true,
                });
                params.push(Param {
                    name: format!("gin{b}.linear{j}.bias"),
                    value: Tensor::zeros(1, config.hidden_dim),
                    trainable: true,
                });
                input = config.hidden_dim;
            }
        }
        for l in 0..config.message_layers {
            params.push(Param {
                name: format!("eps{l}"),
                value: Tensor::zeros(1, 1),
                trainable: config.train_eps,
            });
        }
        let h = config.hidden_dim;
        for (j, (i, o)) in [(h, h), (h, config.output_dim)].into_iter().enumerate() {
            params.push(Param {
                name: format!("head.linear{j}.weight"),
                value: Tensor::xavier_normal(i, o, &mut rng),
                trainable: true,
            });
            params.push(Param {
                name: format!("head.linear{j}.bias"),
                value: Tensor::zeros(1, o),
                trainable: true,
            });
        }
        Ok(GinModel { config, params })
    }

    /// Trainable parameter count (d_model).
    pub fn parameter_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn embedding(&self) -> &Tensor {
        &self.params[EMBEDDING].value
    }

    fn block_start(&self, layer: usize) -> usize {
        let c = &self.config;
        let block = match (layer, c.share_weights) {
            (0, _) => 0,
            (_, true) => 1,
            (l, false) => l,
        };
        1 + block * 2 * c.mlp_layers
    }

    fn eps_index(&self, layer: usize) -> usize {
        let c = &self.config;
        let blocks = match (c.message_layers, c.share_weights) {
            (1, _) => 1,
            (_, true) => 2,
            (l, false) => l,
        };
        1 + blocks * 2 * c.mlp_layers + layer
    }

    fn head_start(&self) -> usize {
        self.eps_index(self.config.message_layers)
    }

    /// Node features without recording: embeddings of each atom's tokens
    /// concatenated in radius order.
    pub fn node_features(&self, batch: &GraphBatch) -> Result<Tensor, GinError> {
        let table = self.embedding();
        let l = table.cols();
        let mut out = Tensor::zeros(batch.n_nodes, batch.width * l);
        for (cell, &tok) in batch.tokens.iter().enumerate() {
            if tok as usize >= table.rows() {
                return Err(GinError::TokenOutOfRange {
                    token: tok,
                    rows: table.rows(),
                });
            }
            if tok == 0 {
                continue;
            }
            let (r, j) = (cell / batch.width, cell % batch.width);
            out.row_mut(r)[j * l..(j + 1) * l].copy_from_slice(table.row(tok as usize));
        }
        Ok(out)
    }

    /// Place every parameter on the tape. The embedding table is skipped when
    /// node features are supplied directly.
    fn bind(&self, tape: &mut Tape, with_embedding: bool) -> Vec<Option<Var>> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i == EMBEDDING && !with_embedding {
                    None
                } else {
                    Some(tape.param(p.value.clone(), i))
                }
            })
            .collect()
    }

    fn dropout(&self, tape: &mut Tape, x: Var, rng: &mut Option<&mut ChaCha8Rng>) -> Var {
        let p = self.config.dropout;
        match rng {
            Some(rng) if p > 0.0 => {
                let n = tape.value(x).len();
                let keep = 1.0 / (1.0 - p);
                let mask = (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
                tape.dropout(x, mask)
            }
            _ => x,
        }
    }

    fn linear(&self, tape: &mut Tape, vars: &[Option<Var>], x: Var, w: usize) -> Var {
        let y = tape.matmul(x, vars[w].expect("bound"));
        tape.add_bias(y, vars[w + 1].expect("bound"))
    }

    /// Record a forward pass. `rng` enables dropout (training mode).
    pub fn forward(
        &self,
        tape: &mut Tape,
        batch: &GraphBatch,
        features: Option<Tensor>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Forward, GinError> {
        let c = &self.config;
        let vars = self.bind(tape, features.is_none());
        let x0 = match features {
            Some(f) => {
                if f.shape() != [batch.n_nodes, c.node_input_dim()] {
                    return Err(GinError::Shape(format!(
                        "node features {:?}, expected [{}, {}]",
                        f.shape(),
                        batch.n_nodes,
                        c.node_input_dim()
                    )));
                }
                tape.constant(f)
            }
            None => {
                if batch.width != c.r_max as usize + 1 {
                    return Err(GinError::Shape(format!(
                        "token width {} does not match radius {}",
                        batch.width, c.r_max
                    )));
                }
                if let Some(&bad) = batch.tokens.iter().find(|&&t| t as usize >= c.vocab_size) {
                    return Err(GinError::TokenOutOfRange {
                        token: bad,
                        rows: c.vocab_size,
                    });
                }
                tape.embed(vars[EMBEDDING].expect("bound"), batch.tokens.clone(), batch.width)
            }
        };
        let mut pooled = vec![tape.pool(x0, batch.graph_of.clone(), batch.n_graphs, c.pooling)];
        let mut h = x0;
        for layer in 0..c.message_layers {
            let agg = tape.neighbour_sum(h, batch.edges.clone());
            let own = tape.one_plus_scale(h, vars[self.eps_index(layer)].expect("bound"));
            let mut z = tape.add(own, agg);
            let start = self.block_start(layer);
            for j in 0..c.mlp_layers {
                z = self.linear(tape, &vars, z, start + 2 * j);
                if j + 1 < c.mlp_layers {
                    z = tape.activation(z, c.activation);
                    z = self.dropout(tape, z, &mut rng);
                }
            }
            h = tape.activation(z, c.activation);
            pooled.push(tape.pool(h, batch.graph_of.clone(), batch.n_graphs, c.pooling));
        }
        let last = *pooled.last().expect("at least one layer");
        let global = match c.layer_agg {
            LayerAgg::Last => last,
            LayerAgg::Concat => tape.concat(&pooled),
        };
        let hs = self.head_start();
        let mut y = self.linear(tape, &vars, last, hs);
        y = tape.activation(y, c.activation);
        let logits = self.linear(tape, &vars, y, hs + 2);
        Ok(Forward { pooled, global, logits })
    }

    /// Global embeddings of a batch in evaluation mode.
    pub fn embed_batch(&self, batch: &GraphBatch) -> Result<Tensor, GinError> {
        let features = self.node_features(batch)?;
        self.embed_from_features(batch, features)
    }

    /// Global embeddings from externally supplied node features.
    pub fn embed_from_features(&self, batch: &GraphBatch, features: Tensor) -> Result<Tensor, GinError> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, batch, Some(features), None)?;
        Ok(tape.value(f.global).clone())
    }

    /// Head logits in evaluation mode.
    pub fn logits(&self, graphs: &[&TokenizedGraph]) -> Result<Tensor, GinError> {
        let batch = GraphBatch::new(graphs);
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, &batch, None, None)?;
        Ok(tape.value(f.logits).clone())
    }

    /// Frozen global embeddings, one row per molecule in input order.
    pub fn featurise(&self, graphs: &[TokenizedGraph], exec: Exec) -> Result<Vec<Vec<f64>>, GinError> {
        const CHUNK: usize = 32;
        let chunks: Vec<&[TokenizedGraph]> = graphs.chunks(CHUNK).collect();
        let parts = exec.map(&chunks, |chunk| {
            let refs: Vec<&TokenizedGraph> = chunk.iter().collect();
            self.embed_batch(&GraphBatch::new(&refs)).map(|t| t.to_rows())
        });
        let mut rows = Vec::with_capacity(graphs.len());
        for p in parts {
            rows.extend(p?);
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concatenated_dimension_table() {
        for (r, node, global) in [(0u32, 512, 2048), (1, 1024, 2560), (2, 1536, 3072)] {
            let c = GinConfig {
                r_max: r,
                ..Default::default()
            };
            assert_eq!(c.node_input_dim(), node);
            assert_eq!(c.global_dim(), global);
        }
    }

    #[test]
    fn parameter_count_matches_formula() {
        for share in [true, false] {
            for layers in [1, 2, 3] {
                let c = GinConfig {
                    message_layers: layers,
                    hidden_dim: 6,
                    embed_dim: 4,
                    vocab_size: 9,
                    output_dim: 5,
                    r_max: 1,
                    share_weights: share,
                    ..Default::default()
                };
                let m = GinModel::new(c.clone(), 0).unwrap();
                assert_eq!(m.parameter_count(), c.analytic_parameter_count());
                assert!(m.embedding().row(0).iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut c = GinConfig::default();
        c.dropout = 0.6;
        assert!(c.validate().is_err());
        c.dropout = 0.1;
        c.hidden_dim = 0;
        assert!(c.validate().is_err());
    }
}
