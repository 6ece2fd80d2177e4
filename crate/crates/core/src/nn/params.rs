use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError};

/// Offsets of one LSTM direction's tensors.
///
/// Gate blocks are fused column-wise in the order input, forget, cell,
/// output: `w` is `[input_dim x 4H]`, `u` is `[H x 4H]`, `b` is `[4H]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmOffsets {
    pub w: usize,
    pub u: usize,
    pub b: usize,
    pub input_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Where each tensor lives in the flat parameter buffer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub embedding: usize,
    /// `lstm[layer][direction]`, direction 0 = forward, 1 = backward.
    pub lstm: Vec<[LstmOffsets; 2]>,
    pub fc_w: usize,
    pub fc_b: usize,
    pub out_w: usize,
    pub out_b: usize,
    pub total: usize,
    tensors: Vec<TensorInfo>,
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Layout {
        let h = config.hidden_per_direction;
        let mut tensors = Vec::new();
        let mut next = 0;
        let mut add = |name: String, rows: usize, cols: usize| {
            let offset = next;
            next += rows * cols;
            tensors.push(TensorInfo {
                name,
                offset,
                rows,
                cols,
            });
            offset
        };
        let embedding = add(
            "embedding".into(),
            config.input_vocab_size,
            config.embedding_dim,
        );
        let mut lstm = Vec::with_capacity(config.recurrent_layers);
        for layer in 0..config.recurrent_layers {
            let input_dim = if layer == 0 {
                config.embedding_dim
            } else {
                2 * h
            };
            let mut dirs = [LstmOffsets {
                w: 0,
                u: 0,
                b: 0,
                input_dim,
            }; 2];
            for (d, dir) in ["fwd", "bwd"].iter().enumerate() {
                dirs[d].w = add(format!("lstm.{layer}.{dir}.w"), input_dim, 4 * h);
                dirs[d].u = add(format!("lstm.{layer}.{dir}.u"), h, 4 * h);
                dirs[d].b = add(format!("lstm.{layer}.{dir}.b"), 1, 4 * h);
            }
            lstm.push(dirs);
        }
        let fc_w = add("fc.w".into(), 2 * h, config.fc_units);
        let fc_b = add("fc.b".into(), 1, config.fc_units);
        let out_w = add("out.w".into(), config.fc_units, config.output_vocab_size);
        let out_b = add("out.b".into(), 1, config.output_vocab_size);
        Layout {
            embedding,
            lstm,
            fc_w,
            fc_b,
            out_w,
            out_b,
            total: next,
            tensors,
        }
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Tensor containing flat index `i`.
    pub fn locate(&self, i: usize) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.range().contains(&i))
    }
}

/// All trainable weights of the classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    layout: Layout,
    values: Vec<f64>,
    generation: u64,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, forget-gate biases at 1.
    pub fn init(config: &ModelConfig) -> Result<ModelParams, ModelError> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut values = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden_per_direction;
        for t in layout.tensors() {
            if t.name.ends_with(".b") {
                continue;
            }
            // per-gate fan-out for the fused LSTM matrices
            let fan_out = if t.name.starts_with("lstm.") {
                h
            } else {
                t.cols
            };
            let limit = (6.0 / (t.rows + fan_out) as f64).sqrt();
            for v in &mut values[t.range()] {
                *v = rng.gen_range(-limit..limit);
            }
        }
        for dirs in &layout.lstm {
            for dir in dirs {
                values[dir.b + h..dir.b + 2 * h].fill(1.0);
            }
        }
        Ok(ModelParams {
            config: config.clone(),
            layout,
            values,
            generation: 0,
        })
    }

    /// Wraps an existing flat buffer laid out for `config`.
    pub fn from_values(config: &ModelConfig, values: Vec<f64>) -> Result<ModelParams, ModelError> {
        config.validate()?;
        let layout = Layout::new(config);
        if values.len() != layout.total {
            return Err(ModelError::ShapeMismatch {
                expected: layout.total,
                actual: values.len(),
            });
        }
        Ok(ModelParams {
            config: config.clone(),
            layout,
            values,
            generation: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access; invalidates outstanding forward passes.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn generation(&self) -> u64 {
        self.generation
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.tensor(name).map(|t| &self.values[t.range()])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `(weight_decay / 2) * (|fc.w|^2 + |out.w|^2)`.
    pub fn weight_penalty(&self) -> f64 {
        let sq: f64 = self
            .decayed_ranges()
            .map(|r| self.values[r].iter().map(|w| w * w).sum::<f64>())
            .sum();
        0.5 * self.config.weight_decay * sq
    }

    pub(crate) fn decayed_ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let c = &self.config;
        let fc = self.layout.fc_w..self.layout.fc_w + 2 * c.hidden_per_direction * c.fc_units;
        let out = self.layout.out_w..self.layout.out_w + c.fc_units * c.output_vocab_size;
        [fc, out].into_iter()
    }
}

/// Gradient buffer with the same layout as [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros(len: usize) -> Gradients {
        Gradients {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.values {
            *a *= factor;
        }
    }
}
