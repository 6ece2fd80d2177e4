use rand::{Rng, RngCore};

use super::params::{Gradients, LstmOffsets, ModelParams};
use super::ModelError;

pub enum Mode<'a> {
    /// Deterministic, no dropout.
    Infer,
    /// Dropout masks drawn from the given generator.
    Train(&'a mut dyn RngCore),
}

/// Inverted-dropout multipliers (`0` or `1 / (1 - p)`).
///
/// `None` means identity. Recurrent masks are `[T x 2H]` per layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DropoutMasks {
    pub recurrent: Vec<Option<Vec<f64>>>,
    pub fc: Option<Vec<f64>>,
}

impl DropoutMasks {
    pub fn identity(layers: usize) -> DropoutMasks {
        DropoutMasks {
            recurrent: vec![None; layers],
            fc: None,
        }
    }
}

#[derive(Clone, Debug)]
struct DirectionCache {
    /// `[T x 4H]` post-activation gates, indexed by sequence position.
    gates: Vec<f64>,
    cell: Vec<f64>,
    cell_tanh: Vec<f64>,
    hidden: Vec<f64>,
}

#[derive(Clone, Debug)]
struct LayerCache {
    /// `[T x input_dim]`
    input: Vec<f64>,
    dirs: [DirectionCache; 2],
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    generation: u64,
    input: Vec<usize>,
    masks: DropoutMasks,
    layers: Vec<LayerCache>,
    summary: Vec<f64>,
    fc_pre: Vec<f64>,
    fc_out: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl ForwardPass {
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn masks(&self) -> &DropoutMasks {
        &self.masks
    }

    /// `-log p[target]`, computed from the logits.
    pub fn cross_entropy(&self, target: usize) -> f64 {
        let max = self
            .logits
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + self
                .logits
                .iter()
                .map(|z| (z - max).exp())
                .sum::<f64>()
                .ln();
        lse - self.logits[target]
    }

    /// Index of the largest probability; ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += x * W` for row-major `W` with `cols` columns.
fn acc_vec_mat(out: &mut [f64], x: &[f64], w: &[f64], cols: usize) {
    for (xi, row) in x.iter().zip(w.chunks_exact(cols)) {
        if *xi == 0.0 {
            continue;
        }
        for (o, wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// `out += W * d`, i.e. the transpose product used in backpropagation.
fn acc_mat_vec(out: &mut [f64], w: &[f64], cols: usize, d: &[f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `dw += x^T d`.
fn acc_outer(dw: &mut [f64], x: &[f64], d: &[f64]) {
    let cols = d.len();
    for (xi, row) in x.iter().zip(dw.chunks_exact_mut(cols)) {
        if *xi == 0.0 {
            continue;
        }
        for (g, dj) in row.iter_mut().zip(d) {
            *g += xi * dj;
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    p
}

fn dropout_mask(len: usize, p: f64, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(
        (0..len)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect(),
    )
}

impl ModelParams {
    fn check_input(&self, input: &[usize]) -> Result<(), ModelError> {
        if input.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let size = self.config().input_vocab_size;
        if let Some(&index) = input.iter().find(|&&i| i >= size) {
            return Err(ModelError::IndexOutOfVocab { index, size });
        }
        Ok(())
    }

    /// Draws train-mode dropout masks for a sequence of length `len`.
    pub fn sample_masks(&self, len: usize, rng: &mut dyn RngCore) -> DropoutMasks {
        let c = self.config();
        let width = 2 * c.hidden_per_direction;
        DropoutMasks {
            recurrent: (0..c.recurrent_layers)
                .map(|_| dropout_mask(len * width, c.dropout_recurrent, rng))
                .collect(),
            fc: dropout_mask(c.fc_units, c.dropout_fc, rng),
        }
    }

    pub fn forward(&self, input: &[usize], mode: Mode<'_>) -> Result<ForwardPass, ModelError> {
        self.check_input(input)?;
        let masks = match mode {
            Mode::Infer => DropoutMasks::identity(self.config().recurrent_layers),
            Mode::Train(rng) => self.sample_masks(input.len(), rng),
        };
        self.forward_with_masks(input, &masks)
    }

    /// Forward pass with fixed dropout masks.
    pub fn forward_with_masks(
        &self,
        input: &[usize],
        masks: &DropoutMasks,
    ) -> Result<ForwardPass, ModelError> {
        self.check_input(input)?;
        let c = self.config();
        let layout = self.layout();
        let v = self.values();
        let seq = input.len();
        let h = c.hidden_per_direction;
        let e = c.embedding_dim;
        if masks.recurrent.len() != c.recurrent_layers {
            return Err(ModelError::ShapeMismatch {
                expected: c.recurrent_layers,
                actual: masks.recurrent.len(),
            });
        }

        let mut x = Vec::with_capacity(seq * e);
        for &idx in input {
            let row = layout.embedding + idx * e;
            x.extend_from_slice(&v[row..row + e]);
        }

        let mut layers = Vec::with_capacity(c.recurrent_layers);
        for (layer, dirs) in layout.lstm.iter().enumerate() {
            let fwd = self.run_direction(&dirs[0], &x, seq, false);
            let bwd = self.run_direction(&dirs[1], &x, seq, true);
            let mut y = Vec::with_capacity(seq * 2 * h);
            for t in 0..seq {
                y.extend_from_slice(&fwd.hidden[t * h..(t + 1) * h]);
                y.extend_from_slice(&bwd.hidden[t * h..(t + 1) * h]);
            }
            if let Some(mask) = &masks.recurrent[layer] {
                check_len(mask.len(), y.len())?;
                for (yi, m) in y.iter_mut().zip(mask) {
                    *yi *= m;
                }
            }
            layers.push(LayerCache {
                input: std::mem::replace(&mut x, y),
                dirs: [fwd, bwd],
            });
        }

        // x now holds the (dropped-out) output of the last layer
        let width = 2 * h;
        let mut summary = Vec::with_capacity(width);
        summary.extend_from_slice(&x[(seq - 1) * width..(seq - 1) * width + h]);
        summary.extend_from_slice(&x[h..width]);

        let mut fc_pre = v[layout.fc_b..layout.fc_b + c.fc_units].to_vec();
        acc_vec_mat(
            &mut fc_pre,
            &summary,
            &v[layout.fc_w..layout.fc_b],
            c.fc_units,
        );
        let mut fc_out: Vec<f64> = fc_pre.iter().map(|&a| a.max(0.0)).collect();
        if let Some(mask) = &masks.fc {
            check_len(mask.len(), fc_out.len())?;
            for (r, m) in fc_out.iter_mut().zip(mask) {
                *r *= m;
            }
        }
        let n_out = c.output_vocab_size;
        let mut logits = v[layout.out_b..layout.out_b + n_out].to_vec();
        acc_vec_mat(&mut logits, &fc_out, &v[layout.out_w..layout.out_b], n_out);
        let probs = softmax(&logits);

        Ok(ForwardPass {
            generation: self.generation(),
            input: input.to_vec(),
            masks: masks.clone(),
            layers,
            summary,
            fc_pre,
            fc_out,
            logits,
            probs,
        })
    }

    fn run_direction(
        &self,
        off: &LstmOffsets,
        x: &[f64],
        seq: usize,
        reverse: bool,
    ) -> DirectionCache {
        let h = self.config().hidden_per_direction;
        let g4 = 4 * h;
        let v = self.values();
        let w = &v[off.w..off.u];
        let u = &v[off.u..off.b];
        let b = &v[off.b..off.b + g4];
        let din = off.input_dim;
        let mut cache = DirectionCache {
            gates: vec![0.0; seq * g4],
            cell: vec![0.0; seq * h],
            cell_tanh: vec![0.0; seq * h],
            hidden: vec![0.0; seq * h],
        };
        let mut z = vec![0.0; g4];
        for step in 0..seq {
            let t = if reverse { seq - 1 - step } else { step };
            let prev = (step > 0).then(|| if reverse { t + 1 } else { t - 1 });
            z.copy_from_slice(b);
            acc_vec_mat(&mut z, &x[t * din..(t + 1) * din], w, g4);
            if let Some(p) = prev {
                acc_vec_mat(&mut z, &cache.hidden[p * h..(p + 1) * h], u, g4);
            }
            let gates = &mut cache.gates[t * g4..(t + 1) * g4];
            for j in 0..h {
                gates[j] = sigmoid(z[j]);
                gates[h + j] = sigmoid(z[h + j]);
                gates[2 * h + j] = z[2 * h + j].tanh();
                gates[3 * h + j] = sigmoid(z[3 * h + j]);
            }
            for j in 0..h {
                let c_prev = prev.map_or(0.0, |p| cache.cell[p * h + j]);
                let c = gates[h + j] * c_prev + gates[j] * gates[2 * h + j];
                let tc = c.tanh();
                cache.cell[t * h + j] = c;
                cache.cell_tanh[t * h + j] = tc;
                cache.hidden[t * h + j] = gates[3 * h + j] * tc;
            }
        }
        cache
    }

    /// Exact gradient of `cross_entropy + weight_penalty` for the recorded pass.
    pub fn backward(&self, pass: &ForwardPass, target: usize) -> Result<Gradients, ModelError> {
        if pass.generation != self.generation() {
            return Err(ModelError::StaleCache);
        }
        let c = self.config();
        let layout = self.layout();
        let v = self.values();
        if target >= c.output_vocab_size {
            return Err(ModelError::IndexOutOfVocab {
                index: target,
                size: c.output_vocab_size,
            });
        }
        let mut grads = Gradients::zeros(self.len());
        let g = &mut grads.values;
        let h = c.hidden_per_direction;
        let seq = pass.input.len();
        let n_out = c.output_vocab_size;
        let wd = c.weight_decay;

        let mut dlogits = pass.probs.clone();
        dlogits[target] -= 1.0;
        acc_outer(&mut g[layout.out_w..layout.out_b], &pass.fc_out, &dlogits);
        for (gb, d) in g[layout.out_b..layout.out_b + n_out]
            .iter_mut()
            .zip(&dlogits)
        {
            *gb += d;
        }
        let mut dfc = vec![0.0; c.fc_units];
        acc_mat_vec(&mut dfc, &v[layout.out_w..layout.out_b], n_out, &dlogits);
        for (j, d) in dfc.iter_mut().enumerate() {
            let m = pass.masks.fc.as_ref().map_or(1.0, |m| m[j]);
            *d *= if pass.fc_pre[j] > 0.0 { m } else { 0.0 };
        }
        acc_outer(&mut g[layout.fc_w..layout.fc_b], &pass.summary, &dfc);
        for (gb, d) in g[layout.fc_b..layout.fc_b + c.fc_units]
            .iter_mut()
            .zip(&dfc)
        {
            *gb += d;
        }
        let mut dsummary = vec![0.0; 2 * h];
        acc_mat_vec(
            &mut dsummary,
            &v[layout.fc_w..layout.fc_b],
            c.fc_units,
            &dfc,
        );

        for range in self.decayed_ranges() {
            for i in range {
                g[i] += wd * v[i];
            }
        }

        // gradient w.r.t. the dropped-out output of the current layer
        let width = 2 * h;
        let mut dy = vec![0.0; seq * width];
        dy[(seq - 1) * width..(seq - 1) * width + h].copy_from_slice(&dsummary[..h]);
        for j in 0..h {
            dy[h + j] += dsummary[h + j];
        }

        for (layer, cache) in pass.layers.iter().enumerate().rev() {
            if let Some(mask) = &pass.masks.recurrent[layer] {
                for (d, m) in dy.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            let dirs = &layout.lstm[layer];
            let mut dx = vec![0.0; seq * dirs[0].input_dim];
            for (d, dir) in dirs.iter().enumerate() {
                self.bptt_direction(dir, &cache.dirs[d], &cache.input, &dy, d, &mut dx, g);
            }
            dy = dx;
        }

        let e = c.embedding_dim;
        for (t, &idx) in pass.input.iter().enumerate() {
            let row = layout.embedding + idx * e;
            for (gv, d) in g[row..row + e].iter_mut().zip(&dy[t * e..(t + 1) * e]) {
                *gv += d;
            }
        }
        Ok(grads)
    }

    #[allow(clippy::too_many_arguments)]
    fn bptt_direction(
        &self,
        off: &LstmOffsets,
        cache: &DirectionCache,
        x: &[f64],
        dy: &[f64],
        dir: usize,
        dx: &mut [f64],
        g: &mut [f64],
    ) {
        let h = self.config().hidden_per_direction;
        let g4 = 4 * h;
        let v = self.values();
        let w = &v[off.w..off.u];
        let u = &v[off.u..off.b];
        let din = off.input_dim;
        let seq = x.len() / din;
        let reverse = dir == 1;

        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; g4];
        for step in (0..seq).rev() {
            let t = if reverse { seq - 1 - step } else { step };
            let prev = (step > 0).then(|| if reverse { t + 1 } else { t - 1 });
            let gates = &cache.gates[t * g4..(t + 1) * g4];
            for j in 0..h {
                let dh = dy[t * 2 * h + dir * h + j] + dh_next[j];
                let (i, f, gc, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = cache.cell_tanh[t * h + j];
                let c_prev = prev.map_or(0.0, |p| cache.cell[p * h + j]);
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                dc_next[j] = dc * f;
                dz[j] = dc * gc * i * (1.0 - i);
                dz[h + j] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - gc * gc);
                dz[3 * h + j] = dh * tc * o * (1.0 - o);
            }
            let xt = &x[t * din..(t + 1) * din];
            acc_outer(&mut g[off.w..off.u], xt, &dz);
            for (gb, d) in g[off.b..off.b + g4].iter_mut().zip(&dz) {
                *gb += d;
            }
            acc_mat_vec(&mut dx[t * din..(t + 1) * din], w, g4, &dz);
            dh_next.fill(0.0);
            if let Some(p) = prev {
                acc_outer(&mut g[off.u..off.b], &cache.hidden[p * h..(p + 1) * h], &dz);
                acc_mat_vec(&mut dh_next, u, g4, &dz);
            }
        }
    }

    /// Cross-entropy of a probability vector plus the weight penalty.
    pub fn loss(&self, probabilities: &[f64], target: usize) -> f64 {
        -probabilities[target].ln() + self.weight_penalty()
    }

    /// Inference-mode argmax and the full distribution.
    pub fn predict(&self, input: &[usize]) -> Result<(usize, Vec<f64>), ModelError> {
        let pass = self.forward(input, Mode::Infer)?;
        Ok((pass.argmax(), pass.probs))
    }
}

fn check_len(actual: usize, expected: usize) -> Result<(), ModelError> {
    if actual != expected {
        return Err(ModelError::ShapeMismatch { expected, actual });
    }
    Ok(())
}
