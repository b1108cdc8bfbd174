//! Stacked bidirectional LSTM with max and mean pooling over valid timesteps
//! and a two-layer head.
//!
//! Each direction owns `W` (in x 4h), `U` (h x 4h) and `b` (1 x 4h) with gate
//! blocks ordered input, forget, candidate, output. Rows of a sequence at or
//! beyond its true length are never read.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::training::{f1_at_half, train_loop, LoopSettings, Trainable};
use super::{ModelError, ModelKind, Network, Result, TrainedModel};
use crate::features::{FeatureKind, FeatureSet, SequenceFeature, SequenceSource};
use crate::numerics::{glorot_uniform, relu, seeded_rng, sigmoid, DenseMatrix, OptimizerKind, ParamSet};

/// Upper bound on the number of work units a batch is split into. Gradients
/// are summed unit by unit in order, so results do not depend on thread count.
const BATCH_UNITS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiLstmConfig {
    pub embed_dim: usize,
    pub max_len: usize,
    /// Per direction.
    pub hidden_units: usize,
    pub layers: usize,
    pub head_hidden: usize,
    pub spatial_dropout: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for BiLstmConfig {
    fn default() -> Self {
        Self {
            embed_dim: 25,
            max_len: 200,
            hidden_units: 128,
            layers: 2,
            head_hidden: 128,
            spatial_dropout: 0.3,
            batch_size: 512,
            learning_rate: 1e-5,
            epochs: 10,
            seed: 0,
            optimizer: OptimizerKind::adam(),
        }
    }
}

impl BiLstmConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("embed_dim", self.embed_dim),
            ("max_len", self.max_len),
            ("hidden_units", self.hidden_units),
            ("layers", self.layers),
            ("head_hidden", self.head_hidden),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.spatial_dropout) {
            return Err(ModelError::Config(format!("spatial_dropout must be in [0, 1), got {}", self.spatial_dropout)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(ModelError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }

    /// Width of the pooled vector fed to the head.
    pub fn pooled_width(&self) -> usize {
        4 * self.hidden_units
    }
}

/// One LSTM direction borrowed from a parameter set.
#[derive(Debug, Clone, Copy)]
pub struct LstmDirection<'a> {
    pub w: &'a DenseMatrix,
    pub u: &'a DenseMatrix,
    pub b: &'a DenseMatrix,
}

struct Step {
    t: usize,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `[i, f, g, o]`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmDirection<'_> {
    fn hidden(&self) -> usize {
        self.u.rows()
    }

    /// Hidden states indexed by timestep for the first `len` rows of `x`,
    /// scanning from the last valid row when `reverse` is set.
    pub fn run(&self, x: &DenseMatrix, len: usize, reverse: bool) -> Vec<Vec<f64>> {
        let (out, _) = self.forward(x, len, reverse);
        (0..len).map(|t| out.row(t).to_vec()).collect()
    }

    fn forward(&self, x: &DenseMatrix, len: usize, reverse: bool) -> (DenseMatrix, Vec<Step>) {
        let h = self.hidden();
        let mut out = DenseMatrix::zeros(len, h);
        let mut steps = Vec::with_capacity(len);
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for s in 0..len {
            let t = if reverse { len - 1 - s } else { s };
            let mut z = self.b.as_slice().to_vec();
            for (k, &xv) in x.row(t).iter().enumerate() {
                if xv != 0.0 {
                    for (zj, wj) in z.iter_mut().zip(self.w.row(k)) {
                        *zj += xv * wj;
                    }
                }
            }
            for (k, &hv) in h_prev.iter().enumerate() {
                for (zj, uj) in z.iter_mut().zip(self.u.row(k)) {
                    *zj += hv * uj;
                }
            }
            let mut c = vec![0.0; h];
            let mut tanh_c = vec![0.0; h];
            for j in 0..h {
                z[j] = sigmoid(z[j]);
                z[h + j] = sigmoid(z[h + j]);
                z[2 * h + j] = z[2 * h + j].tanh();
                z[3 * h + j] = sigmoid(z[3 * h + j]);
                c[j] = z[h + j] * c_prev[j] + z[j] * z[2 * h + j];
                tanh_c[j] = c[j].tanh();
                out.set(t, j, z[3 * h + j] * tanh_c[j]);
            }
            let h_next = out.row(t).to_vec();
            steps.push(Step { t, h_prev, c_prev, gates: z, tanh_c });
            h_prev = h_next;
            c_prev = c;
        }
        (out, steps)
    }

    /// Backpropagates `d_out` (len x h) through the recorded steps, adding
    /// weight gradients into `dw`, `du`, `db` and returning the input gradient.
    fn backward(
        &self,
        x: &DenseMatrix,
        steps: &[Step],
        d_out: &DenseMatrix,
        dw: &mut DenseMatrix,
        du: &mut DenseMatrix,
        db: &mut DenseMatrix,
    ) -> DenseMatrix {
        let h = self.hidden();
        let mut dx = DenseMatrix::zeros(x.rows(), x.cols());
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for step in steps.iter().rev() {
            let g = &step.gates;
            for j in 0..h {
                let dh = d_out.get(step.t, j) + dh_next[j];
                let (i, f, cand, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = step.tanh_c[j];
                let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
                dc_next[j] = dc * f;
                dz[j] = dc * cand * i * (1.0 - i);
                dz[h + j] = dc * step.c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - cand * cand);
                dz[3 * h + j] = dh * tc * o * (1.0 - o);
            }
            for (d, g) in db.as_mut_slice().iter_mut().zip(&dz) {
                *d += g;
            }
            let xt = x.row(step.t);
            for (k, &xv) in xt.iter().enumerate() {
                if xv != 0.0 {
                    for (d, g) in dw.row_mut(k).iter_mut().zip(&dz) {
                        *d += xv * g;
                    }
                }
                dx.set(step.t, k, crate::numerics::dot(self.w.row(k), &dz));
            }
            for (k, &hv) in step.h_prev.iter().enumerate() {
                for (d, g) in du.row_mut(k).iter_mut().zip(&dz) {
                    *d += hv * g;
                }
                dh_next[k] = crate::numerics::dot(self.u.row(k), &dz);
            }
        }
        dx
    }
}

struct LayerTrace {
    input: DenseMatrix,
    fwd: Vec<Step>,
    bwd: Vec<Step>,
}

struct ExampleTrace {
    layers: Vec<LayerTrace>,
    len: usize,
    argmax: Vec<usize>,
    pooled: Vec<f64>,
    head_pre: Vec<f64>,
    logit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmNet {
    config: BiLstmConfig,
    params: ParamSet,
}

impl BiLstmNet {
    /// Glorot-uniform weights, zero biases except a forget-gate bias of 1.
    pub fn init(config: BiLstmConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(config.seed);
        let h = config.hidden_units;
        let mut tensors = Vec::new();
        for l in 0..config.layers {
            let input = if l == 0 { config.embed_dim } else { 2 * h };
            for _ in 0..2 {
                tensors.push(glorot_uniform(&mut rng, input, 4 * h));
                tensors.push(glorot_uniform(&mut rng, h, 4 * h));
                let mut b = DenseMatrix::zeros(1, 4 * h);
                b.as_mut_slice()[h..2 * h].fill(1.0);
                tensors.push(b);
            }
        }
        tensors.push(glorot_uniform(&mut rng, config.pooled_width(), config.head_hidden));
        tensors.push(DenseMatrix::zeros(1, config.head_hidden));
        tensors.push(glorot_uniform(&mut rng, config.head_hidden, 1));
        tensors.push(DenseMatrix::zeros(1, 1));
        Ok(Self { config, params: ParamSet::new(tensors) })
    }

    pub fn from_params(config: BiLstmConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let shapes = ParamSet::zeros_like(Self::init_shapes(&config).params());
        let ok = params.len() == shapes.len()
            && params.tensors().iter().zip(shapes.tensors()).all(|(a, b)| a.shape() == b.shape());
        if !ok {
            return Err(ModelError::Shape("parameters do not fit the configured network".into()));
        }
        Ok(Self { config, params })
    }

    fn init_shapes(config: &BiLstmConfig) -> Self {
        Self::init(config.clone()).expect("validated config")
    }

    pub fn config(&self) -> &BiLstmConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn direction(&self, layer: usize, reverse: bool) -> LstmDirection<'_> {
        let base = 3 * (2 * layer + usize::from(reverse));
        LstmDirection { w: self.params.get(base), u: self.params.get(base + 1), b: self.params.get(base + 2) }
    }

    fn head_base(&self) -> usize {
        6 * self.config.layers
    }

    fn check_shape(&self, seq: &SequenceFeature) -> Result<()> {
        if seq.dim() != self.config.embed_dim || seq.true_length > seq.max_len() {
            return Err(ModelError::Shape(format!(
                "sequence is {}x{} with true length {}, network expects width {}",
                seq.max_len(),
                seq.dim(),
                seq.true_length,
                self.config.embed_dim
            )));
        }
        Ok(())
    }

    /// Channel mask with kept channels scaled by `1 / (1 - rate)`.
    fn dropout_mask(&self, noise_seed: u64, position: usize) -> Vec<f64> {
        let rate = self.config.spatial_dropout;
        let mut rng = seeded_rng(noise_seed);
        rng.set_stream(position as u64);
        (0..self.config.embed_dim)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / (1.0 - rate) })
            .collect()
    }

    fn forward_example(&self, seq: &SequenceFeature, mask: Option<&[f64]>) -> ExampleTrace {
        let len = seq.true_length;
        let mut input = DenseMatrix::zeros(len, self.config.embed_dim);
        for t in 0..len {
            let row = input.row_mut(t);
            row.copy_from_slice(seq.matrix.row(t));
            if let Some(m) = mask {
                row.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
        }
        let h = self.config.hidden_units;
        let mut layers = Vec::with_capacity(self.config.layers);
        for l in 0..self.config.layers {
            let (out_f, fwd) = self.direction(l, false).forward(&input, len, false);
            let (out_b, bwd) = self.direction(l, true).forward(&input, len, true);
            let mut next = DenseMatrix::zeros(len, 2 * h);
            for t in 0..len {
                let row = next.row_mut(t);
                row[..h].copy_from_slice(out_f.row(t));
                row[h..].copy_from_slice(out_b.row(t));
            }
            layers.push(LayerTrace { input: std::mem::replace(&mut input, next), fwd, bwd });
        }
        let top = input;
        let width = 2 * h;
        let mut pooled = vec![0.0; 2 * width];
        let mut argmax = vec![0; width];
        if len > 0 {
            for j in 0..width {
                let mut best = top.get(0, j);
                let mut sum = 0.0;
                for t in 0..len {
                    let v = top.get(t, j);
                    if v > best {
                        best = v;
                        argmax[j] = t;
                    }
                    sum += v;
                }
                pooled[j] = best;
                pooled[width + j] = sum / len as f64;
            }
        }
        let hb = self.head_base();
        let (w1, b1, w2, b2) = (self.params.get(hb), self.params.get(hb + 1), self.params.get(hb + 2), self.params.get(hb + 3));
        let mut head_pre = b1.as_slice().to_vec();
        for (k, &pv) in pooled.iter().enumerate() {
            if pv != 0.0 {
                for (a, w) in head_pre.iter_mut().zip(w1.row(k)) {
                    *a += pv * w;
                }
            }
        }
        let logit = b2.as_slice()[0]
            + head_pre.iter().zip(w2.as_slice()).map(|(&a, w)| relu(a) * w).sum::<f64>();
        ExampleTrace { layers, len, argmax, pooled, head_pre, logit }
    }

    fn backward_example(&self, trace: &ExampleTrace, d_logit: f64, grads: &mut ParamSet) {
        let hb = self.head_base();
        let hh = self.config.head_hidden;
        let mut d_pre = vec![0.0; hh];
        {
            let w2 = self.params.get(hb + 2).as_slice().to_vec();
            grads.get_mut(hb + 3).as_mut_slice()[0] += d_logit;
            let dw2 = grads.get_mut(hb + 2).as_mut_slice();
            for j in 0..hh {
                let a = trace.head_pre[j];
                dw2[j] += relu(a) * d_logit;
                d_pre[j] = if a > 0.0 { w2[j] * d_logit } else { 0.0 };
            }
        }
        grads
            .get_mut(hb + 1)
            .as_mut_slice()
            .iter_mut()
            .zip(&d_pre)
            .for_each(|(d, g)| *d += g);
        let w1 = self.params.get(hb);
        let mut d_pooled = vec![0.0; trace.pooled.len()];
        {
            let dw1 = grads.get_mut(hb);
            for (k, &pv) in trace.pooled.iter().enumerate() {
                if pv != 0.0 {
                    for (d, g) in dw1.row_mut(k).iter_mut().zip(&d_pre) {
                        *d += pv * g;
                    }
                }
                d_pooled[k] = crate::numerics::dot(w1.row(k), &d_pre);
            }
        }
        let len = trace.len;
        if len == 0 {
            return;
        }
        let h = self.config.hidden_units;
        let width = 2 * h;
        let mut d_top = DenseMatrix::zeros(len, width);
        for j in 0..width {
            let mean_share = d_pooled[width + j] / len as f64;
            for t in 0..len {
                d_top.set(t, j, mean_share);
            }
            let t = trace.argmax[j];
            d_top.set(t, j, d_top.get(t, j) + d_pooled[j]);
        }
        for (l, layer) in trace.layers.iter().enumerate().rev() {
            let mut d_f = DenseMatrix::zeros(len, h);
            let mut d_b = DenseMatrix::zeros(len, h);
            for t in 0..len {
                d_f.row_mut(t).copy_from_slice(&d_top.row(t)[..h]);
                d_b.row_mut(t).copy_from_slice(&d_top.row(t)[h..]);
            }
            let mut d_input = DenseMatrix::zeros(len, layer.input.cols());
            for (reverse, steps, d_out) in [(false, &layer.fwd, &d_f), (true, &layer.bwd, &d_b)] {
                let base = 3 * (2 * l + usize::from(reverse));
                let dir = self.direction(l, reverse);
                let mut dw = std::mem::replace(grads.get_mut(base), DenseMatrix::zeros(0, 0));
                let mut du = std::mem::replace(grads.get_mut(base + 1), DenseMatrix::zeros(0, 0));
                let mut db = std::mem::replace(grads.get_mut(base + 2), DenseMatrix::zeros(0, 0));
                let dx = dir.backward(&layer.input, steps, d_out, &mut dw, &mut du, &mut db);
                *grads.get_mut(base) = dw;
                *grads.get_mut(base + 1) = du;
                *grads.get_mut(base + 2) = db;
                d_input.add_scaled(1.0, &dx).expect("same shape");
            }
            d_top = d_input;
        }
    }

    /// Probabilities for a batch; dropout applies only when `train_mode` is set.
    pub fn forward(&self, batch: &[SequenceFeature], train_mode: bool, dropout_seed: u64) -> Result<Vec<f64>> {
        for s in batch {
            self.check_shape(s)?;
        }
        Ok(self.batch_map(batch.len(), |pos| {
            let mask = (train_mode && self.config.spatial_dropout > 0.0).then(|| self.dropout_mask(dropout_seed, pos));
            sigmoid(self.forward_example(&batch[pos], mask.as_deref()).logit)
        }))
    }

    pub fn predict_source(&self, source: &dyn SequenceSource) -> Result<Vec<f64>> {
        if !source.is_empty() && source.dim() != self.config.embed_dim {
            return Err(ModelError::Shape(format!(
                "sequences have width {} but the network expects {}",
                source.dim(),
                self.config.embed_dim
            )));
        }
        Ok(self.batch_map(source.len(), |i| sigmoid(self.forward_example(&source.get(i), None).logit)))
    }

    fn batch_map(&self, n: usize, f: impl Fn(usize) -> f64 + Sync) -> Vec<f64> {
        let unit = n.div_ceil(BATCH_UNITS).max(1);
        let positions: Vec<usize> = (0..n).collect();
        positions
            .par_chunks(unit)
            .map(|c| c.iter().map(|&p| f(p)).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .concat()
    }

    /// Mean binary cross-entropy over a batch and its gradient. With
    /// `train_mode` set, each example gets its own spatial dropout mask drawn
    /// from `dropout_seed` and its position in the batch.
    pub fn loss_and_grad(
        &self,
        batch: &[SequenceFeature],
        labels: &[u8],
        train_mode: bool,
        dropout_seed: u64,
    ) -> Result<(f64, ParamSet)> {
        if batch.len() != labels.len() {
            return Err(ModelError::Shape(format!("{} sequences but {} labels", batch.len(), labels.len())));
        }
        for s in batch {
            self.check_shape(s)?;
        }
        Ok(self.batch_loss(batch.len(), |p| (batch[p].clone(), labels[p]), train_mode, dropout_seed))
    }

    fn batch_loss(
        &self,
        n: usize,
        fetch: impl Fn(usize) -> (SequenceFeature, u8) + Sync,
        train_mode: bool,
        dropout_seed: u64,
    ) -> (f64, ParamSet) {
        let scale = 1.0 / n.max(1) as f64;
        let unit = n.div_ceil(BATCH_UNITS).max(1);
        let positions: Vec<usize> = (0..n).collect();
        let partials: Vec<(f64, ParamSet)> = positions
            .par_chunks(unit)
            .map(|chunk| {
                let mut grads = ParamSet::zeros_like(&self.params);
                let mut loss = 0.0;
                for &pos in chunk {
                    let (seq, y) = fetch(pos);
                    let mask =
                        (train_mode && self.config.spatial_dropout > 0.0).then(|| self.dropout_mask(dropout_seed, pos));
                    let trace = self.forward_example(&seq, mask.as_deref());
                    let z = trace.logit;
                    let y = f64::from(y);
                    loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
                    self.backward_example(&trace, (sigmoid(z) - y) * scale, &mut grads);
                }
                (loss, grads)
            })
            .collect();
        let mut total = ParamSet::zeros_like(&self.params);
        let mut loss = 0.0;
        for (l, g) in partials {
            loss += l;
            total.accumulate(&g).expect("same layout");
        }
        (loss * scale, total)
    }
}

struct LstmTrainer<'a> {
    net: BiLstmNet,
    source: &'a dyn SequenceSource,
    val: (&'a dyn SequenceSource, &'a [u8]),
}

impl Trainable for LstmTrainer<'_> {
    fn params(&self) -> &ParamSet {
        &self.net.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.net.params
    }

    fn batch_loss_grad(&self, rows: &[usize], labels: &[u8], noise_seed: u64) -> Result<(f64, ParamSet)> {
        Ok(self.net.batch_loss(rows.len(), |p| (self.source.get(rows[p]), labels[rows[p]]), true, noise_seed))
    }

    fn validation_f1(&self) -> Option<f64> {
        let probs = self.net.predict_source(self.val.0).ok()?;
        Some(f1_at_half(&probs, self.val.1))
    }
}

fn sequences(f: &FeatureSet) -> Result<&dyn SequenceSource> {
    match f {
        FeatureSet::Sequences(s) => Ok(s.as_ref()),
        other => Err(ModelError::KindMismatch { expected: FeatureKind::EmbedSeq, found: other.kind() }),
    }
}

/// Adam-trained network; the epoch with the best validation F1 is kept.
pub fn fit_bilstm(
    config: &BiLstmConfig,
    train: &FeatureSet,
    labels: &[u8],
    val: (&FeatureSet, &[u8]),
) -> Result<TrainedModel> {
    config.validate()?;
    let source = sequences(train)?;
    let val_source = sequences(val.0)?;
    super::check_labels(source.len(), labels)?;
    super::check_labels(val_source.len(), val.1)?;
    if val_source.is_empty() {
        return Err(ModelError::Fit("the validation set is empty".into()));
    }
    for s in [source, val_source] {
        if !s.is_empty() && s.dim() != config.embed_dim {
            return Err(ModelError::Shape(format!("sequences have width {}, config says {}", s.dim(), config.embed_dim)));
        }
    }
    let mut trainer = LstmTrainer { net: BiLstmNet::init(config.clone())?, source, val: (val_source, val.1) };
    let outcome = train_loop(
        &mut trainer,
        labels,
        &LoopSettings {
            epochs: config.epochs,
            batch_size: config.batch_size,
            seed: config.seed,
            optimizer: config.optimizer,
            learning_rate: config.learning_rate,
        },
    )?;
    Ok(TrainedModel {
        family: "bilstm".into(),
        kind: ModelKind::BiLstm,
        input: FeatureKind::EmbedSeq,
        config: serde_json::to_value(config).map_err(|e| ModelError::Config(e.to_string()))?,
        history: outcome.history,
        selected_epoch: outcome.selected_epoch,
        network: Network::BiLstm(trainer.net),
    })
}
