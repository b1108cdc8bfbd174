//! Logistic regression and fully connected ReLU networks over sparse or dense
//! vector features.

use serde::{Deserialize, Serialize};

use super::training::{f1_at_half, train_loop, LoopSettings, Trainable};
use super::{check_labels, ModelError, ModelKind, Network, Result, TrainedModel};
use crate::features::{FeatureKind, FeatureSet, SparseRows};
use crate::numerics::{
    affine, affine_backward, glorot_uniform, relu, seeded_rng, sigmoid, softmax_cross_entropy, DenseMatrix,
    OptimizerKind, ParamSet,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Architecture {
    /// Single sigmoid output trained with binary cross-entropy.
    Logistic,
    /// ReLU hidden layers ending in two class scores with softmax cross-entropy.
    Mlp { hidden: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientModelConfig {
    pub architecture: Architecture,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for GradientModelConfig {
    fn default() -> Self {
        Self::logistic()
    }
}

impl GradientModelConfig {
    pub fn logistic() -> Self {
        Self {
            architecture: Architecture::Logistic,
            learning_rate: 0.1,
            batch_size: 512,
            epochs: 10,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
        }
    }

    pub fn mlp(hidden: Vec<usize>) -> Self {
        Self {
            architecture: Architecture::Mlp { hidden },
            learning_rate: 1e-5,
            ..Self::logistic()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Architecture::Mlp { hidden } = &self.architecture {
            if hidden.is_empty() || hidden.contains(&0) {
                return Err(ModelError::Config(format!("hidden sizes must be positive and non-empty, got {hidden:?}")));
            }
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(ModelError::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Borrowed row-major inputs for the first layer.
#[derive(Debug, Clone, Copy)]
pub enum Inputs<'a> {
    Sparse(&'a SparseRows),
    Dense(&'a DenseMatrix),
}

impl<'a> Inputs<'a> {
    pub fn from_features(f: &'a FeatureSet) -> Result<Self> {
        match f {
            FeatureSet::Counts(s) | FeatureSet::Tfidf(s) => Ok(Inputs::Sparse(s)),
            FeatureSet::Dense(m) => Ok(Inputs::Dense(m)),
            FeatureSet::Sequences(_) => Err(ModelError::KindMismatch {
                expected: FeatureKind::Tfidf,
                found: FeatureKind::EmbedSeq,
            }),
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Inputs::Sparse(s) => s.rows(),
            Inputs::Dense(m) => m.rows(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Inputs::Sparse(s) => s.dim(),
            Inputs::Dense(m) => m.cols(),
        }
    }

    fn for_each_entry(&self, r: usize, mut f: impl FnMut(usize, f64)) {
        match self {
            Inputs::Sparse(s) => s.row(r).for_each(|(k, v)| f(k, v)),
            Inputs::Dense(m) => m
                .row(r)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .for_each(|(k, &v)| f(k, v)),
        }
    }

    /// `x[rows] · W + b` without densifying sparse rows.
    fn first_layer(&self, rows: &[usize], w: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(rows.len(), w.cols());
        for (i, &r) in rows.iter().enumerate() {
            let o = out.row_mut(i);
            o.copy_from_slice(b.as_slice());
            self.for_each_entry(r, |k, v| {
                for (oj, wj) in o.iter_mut().zip(w.row(k)) {
                    *oj += v * wj;
                }
            });
        }
        out
    }

    fn first_layer_backward(&self, rows: &[usize], dout: &DenseMatrix, dw: &mut DenseMatrix, db: &mut DenseMatrix) {
        for (i, &r) in rows.iter().enumerate() {
            let g = dout.row(i);
            self.for_each_entry(r, |k, v| {
                for (d, gj) in dw.row_mut(k).iter_mut().zip(g) {
                    *d += v * gj;
                }
            });
            for (d, gj) in db.as_mut_slice().iter_mut().zip(g) {
                *d += gj;
            }
        }
    }
}

/// Weights are stored as alternating `W_l` (in x out) and `b_l` (1 x out).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    architecture: Architecture,
    input_dim: usize,
    params: ParamSet,
}

impl DenseNet {
    /// Glorot-uniform weights and zero biases.
    pub fn init(architecture: Architecture, input_dim: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let widths = layer_widths(&architecture, input_dim);
        let mut tensors = Vec::new();
        for pair in widths.windows(2) {
            tensors.push(glorot_uniform(&mut rng, pair[0], pair[1]));
            tensors.push(DenseMatrix::zeros(1, pair[1]));
        }
        Self { architecture, input_dim, params: ParamSet::new(tensors) }
    }

    pub fn from_params(architecture: Architecture, input_dim: usize, params: ParamSet) -> Result<Self> {
        let widths = layer_widths(&architecture, input_dim);
        let ok = params.len() == 2 * (widths.len() - 1)
            && widths.windows(2).enumerate().all(|(l, p)| {
                params.get(2 * l).shape() == (p[0], p[1]) && params.get(2 * l + 1).shape() == (1, p[1])
            });
        if !ok {
            return Err(ModelError::Shape(format!("parameters do not fit layer widths {widths:?}")));
        }
        Ok(Self { architecture, input_dim, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    fn layers(&self) -> usize {
        self.params.len() / 2
    }

    /// Pre-activation outputs of every layer for the given rows.
    fn forward(&self, x: &Inputs, rows: &[usize]) -> Result<Vec<DenseMatrix>> {
        let mut pre = vec![x.first_layer(rows, self.params.get(0), self.params.get(1))];
        for l in 1..self.layers() {
            let act = pre[l - 1].map(relu);
            pre.push(affine(&act, self.params.get(2 * l), self.params.get(2 * l + 1).as_slice())?);
        }
        Ok(pre)
    }

    fn output_proba(&self, out: &DenseMatrix) -> Vec<f64> {
        match self.architecture {
            Architecture::Logistic => out.as_slice().iter().map(|&z| sigmoid(z)).collect(),
            Architecture::Mlp { .. } => (0..out.rows()).map(|r| sigmoid(out.get(r, 1) - out.get(r, 0))).collect(),
        }
    }

    pub fn predict_proba(&self, x: &Inputs) -> Vec<f64> {
        let all: Vec<usize> = (0..x.rows()).collect();
        let mut probs = Vec::with_capacity(all.len());
        for chunk in all.chunks(1024) {
            let pre = self.forward(x, chunk).expect("widths checked at construction");
            probs.extend(self.output_proba(pre.last().expect("at least one layer")));
        }
        probs
    }

    /// Mean loss over `rows` and its gradient with respect to every weight.
    pub fn loss_and_grad(&self, x: &Inputs, rows: &[usize], labels: &[u8]) -> Result<(f64, ParamSet)> {
        let pre = self.forward(x, rows)?;
        let out = pre.last().expect("at least one layer");
        let n = rows.len().max(1) as f64;
        let (loss, mut dout) = match self.architecture {
            Architecture::Logistic => {
                let mut loss = 0.0;
                let mut d = DenseMatrix::zeros(rows.len(), 1);
                for (i, &r) in rows.iter().enumerate() {
                    let z = out.get(i, 0);
                    let y = f64::from(labels[r]);
                    loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
                    d.set(i, 0, (sigmoid(z) - y) / n);
                }
                (loss / n, d)
            }
            Architecture::Mlp { .. } => {
                let classes: Vec<usize> = rows.iter().map(|&r| usize::from(labels[r])).collect();
                softmax_cross_entropy(out, &classes)?
            }
        };
        let mut grads = ParamSet::zeros_like(&self.params);
        for l in (1..self.layers()).rev() {
            let act = pre[l - 1].map(relu);
            let (dx, dw, db) = affine_backward(&act, self.params.get(2 * l), &dout)?;
            *grads.get_mut(2 * l) = dw;
            grads.get_mut(2 * l + 1).as_mut_slice().copy_from_slice(&db);
            dout = dx;
            for (g, z) in dout.as_mut_slice().iter_mut().zip(pre[l - 1].as_slice()) {
                if *z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let (dw0, db0) = {
            let mut dw = DenseMatrix::zeros(self.input_dim, self.params.get(0).cols());
            let mut db = DenseMatrix::zeros(1, self.params.get(0).cols());
            x.first_layer_backward(rows, &dout, &mut dw, &mut db);
            (dw, db)
        };
        *grads.get_mut(0) = dw0;
        *grads.get_mut(1) = db0;
        Ok((loss, grads))
    }
}

fn layer_widths(architecture: &Architecture, input_dim: usize) -> Vec<usize> {
    match architecture {
        Architecture::Logistic => vec![input_dim, 1],
        Architecture::Mlp { hidden } => std::iter::once(input_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(2))
            .collect(),
    }
}

struct DenseTrainer<'a> {
    net: DenseNet,
    x: Inputs<'a>,
    val: Option<(Inputs<'a>, &'a [u8])>,
}

impl Trainable for DenseTrainer<'_> {
    fn params(&self) -> &ParamSet {
        &self.net.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.net.params
    }

    fn batch_loss_grad(&self, rows: &[usize], labels: &[u8], _noise_seed: u64) -> Result<(f64, ParamSet)> {
        self.net.loss_and_grad(&self.x, rows, labels)
    }

    fn validation_f1(&self) -> Option<f64> {
        self.val.map(|(x, y)| f1_at_half(&self.net.predict_proba(&x), y))
    }
}

/// Mini-batch training; with a validation set the best epoch's weights are kept.
pub fn fit_gradient_model(
    config: &GradientModelConfig,
    train: &FeatureSet,
    labels: &[u8],
    val: Option<(&FeatureSet, &[u8])>,
) -> Result<TrainedModel> {
    config.validate()?;
    let x = Inputs::from_features(train)?;
    check_labels(x.rows(), labels)?;
    let val = match val {
        Some((f, y)) => {
            if f.kind() != train.kind() {
                return Err(ModelError::KindMismatch { expected: train.kind(), found: f.kind() });
            }
            let vx = Inputs::from_features(f)?;
            check_labels(vx.rows(), y)?;
            if vx.dim() != x.dim() {
                return Err(ModelError::Shape(format!("validation width {} vs training width {}", vx.dim(), x.dim())));
            }
            Some((vx, y))
        }
        None => None,
    };
    let net = DenseNet::init(config.architecture.clone(), x.dim(), config.seed);
    let mut trainer = DenseTrainer { net, x, val };
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
    let (kind, family) = match config.architecture {
        Architecture::Logistic => (ModelKind::Logistic, "logistic"),
        Architecture::Mlp { .. } => (ModelKind::Mlp, "mlp"),
    };
    Ok(TrainedModel {
        family: family.into(),
        kind,
        input: train.kind(),
        config: serde_json::to_value(config).map_err(|e| ModelError::Config(e.to_string()))?,
        history: outcome.history,
        selected_epoch: outcome.selected_epoch,
        network: Network::Dense(trainer.net),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SparseVector;
    use crate::numerics::grad_check;
    use rand::Rng;

    fn random_dense(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = seeded_rng(seed);
        DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_sparse(rows: usize, dim: usize, seed: u64) -> SparseRows {
        let mut rng = seeded_rng(seed);
        SparseRows::from_vectors(
            dim,
            (0..rows).map(|_| {
                let mut entries = Vec::new();
                for k in 0..dim {
                    if rng.gen_bool(0.4) {
                        entries.push((k, rng.gen_range(0.1..1.0)));
                    }
                }
                SparseVector { dim, entries }
            }),
        )
    }

    fn check_gradients(arch: Architecture, x: Inputs, labels: &[u8]) -> f64 {
        let net = DenseNet::init(arch.clone(), x.dim(), 5);
        let mut rng = seeded_rng(17);
        let mut params = net.params.clone();
        for t in params.tensors_mut() {
            t.as_mut_slice().iter_mut().for_each(|v| *v = rng.gen_range(-0.8..0.8));
        }
        let rows: Vec<usize> = (0..x.rows()).collect();
        let theta = params.flatten();
        grad_check(
            |flat| {
                let mut p = params.clone();
                p.assign_flat(flat).unwrap();
                let n = DenseNet::from_params(arch.clone(), x.dim(), p).unwrap();
                let (l, g) = n.loss_and_grad(&x, &rows, labels).unwrap();
                (l, g.flatten())
            },
            &theta,
            1e-5,
        )
        .unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let dense = random_dense(5, 4, 1);
        let sparse = random_sparse(6, 7, 2);
        let y5 = [1, 0, 1, 1, 0];
        let y6 = [0, 1, 1, 0, 1, 0];
        for arch in [
            Architecture::Logistic,
            Architecture::Mlp { hidden: vec![6] },
            Architecture::Mlp { hidden: vec![5, 4] },
        ] {
            let e = check_gradients(arch.clone(), Inputs::Dense(&dense), &y5);
            assert!(e < 1e-4, "{arch:?} dense: {e}");
            let e = check_gradients(arch.clone(), Inputs::Sparse(&sparse), &y6);
            assert!(e < 1e-4, "{arch:?} sparse: {e}");
        }
    }

    fn separable() -> (DenseMatrix, Vec<u8>) {
        let mut rng = seeded_rng(9);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        while rows.len() < 20 {
            let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let margin = a + 2.0 * b - 0.3;
            if margin.abs() > 0.1 {
                rows.push(vec![a, b]);
                labels.push(u8::from(margin > 0.0));
            }
        }
        (DenseMatrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn logistic_separates_toy_set() {
        let (x, y) = separable();
        let config = GradientModelConfig { learning_rate: 0.5, batch_size: 4, epochs: 200, seed: 3, ..GradientModelConfig::logistic() };
        let features = FeatureSet::Dense(x);
        let m = fit_gradient_model(&config, &features, &y, None).unwrap();
        let preds = crate::metrics::classify(&m.predict_proba(&features).unwrap(), 0.5);
        assert_eq!(preds, y);
        assert_eq!(m.history.len(), 200);
    }

    #[test]
    fn mlp_learns_xor() {
        let x = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let y = [0, 1, 1, 0];
        let config = GradientModelConfig {
            learning_rate: 0.01,
            batch_size: 4,
            epochs: 1500,
            seed: 11,
            optimizer: OptimizerKind::adam(),
            ..GradientModelConfig::mlp(vec![100])
        };
        let features = FeatureSet::Dense(x);
        let m = fit_gradient_model(&config, &features, &y, None).unwrap();
        let preds = crate::metrics::classify(&m.predict_proba(&features).unwrap(), 0.5);
        assert_eq!(preds, y);
    }

    #[test]
    fn zero_epochs_returns_initial_weights() {
        let (x, y) = separable();
        let config = GradientModelConfig { epochs: 0, seed: 8, ..GradientModelConfig::mlp(vec![75, 50]) };
        let m = fit_gradient_model(&config, &FeatureSet::Dense(x), &y, None).unwrap();
        assert!(m.history.is_empty());
        assert_eq!(m.selected_epoch, None);
        assert_eq!(m.dense().unwrap(), &DenseNet::init(config.architecture.clone(), 2, 8));
    }

    #[test]
    fn zero_weight_logistic_is_bias_only() {
        let params = ParamSet::new(vec![DenseMatrix::zeros(3, 1), DenseMatrix::row_vector(vec![0.7])]);
        let net = DenseNet::from_params(Architecture::Logistic, 3, params).unwrap();
        let x = random_dense(4, 3, 2);
        for p in net.predict_proba(&Inputs::Dense(&x)) {
            assert_eq!(p, sigmoid(0.7));
        }
    }

    #[test]
    fn zero_hidden_weights_give_constant_scores() {
        let arch = Architecture::Mlp { hidden: vec![3] };
        let b1 = vec![0.5, -1.0, 2.0];
        let w2 = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![3.0, 3.0], vec![0.25, 0.5]]).unwrap();
        let b2 = vec![0.1, -0.2];
        let params = ParamSet::new(vec![
            DenseMatrix::zeros(4, 3),
            DenseMatrix::row_vector(b1.clone()),
            w2.clone(),
            DenseMatrix::row_vector(b2.clone()),
        ]);
        let net = DenseNet::from_params(arch, 4, params).unwrap();
        let hidden: Vec<f64> = b1.iter().map(|&v| relu(v)).collect();
        let s0 = hidden[0] * 1.0 + hidden[1] * 3.0 + hidden[2] * 0.25 + b2[0];
        let s1 = -hidden[0] + hidden[1] * 3.0 + hidden[2] * 0.5 + b2[1];
        let expected = sigmoid(s1 - s0);
        for p in net.predict_proba(&Inputs::Dense(&random_dense(6, 4, 3))) {
            assert!((p - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let x = random_sparse(40, 12, 4);
        let y: Vec<u8> = (0..40).map(|i| (i % 3 == 0) as u8).collect();
        let f = FeatureSet::Tfidf(x);
        let config = GradientModelConfig { batch_size: 7, epochs: 3, ..GradientModelConfig::mlp(vec![5]) };
        let a = fit_gradient_model(&config, &f, &y, Some((&f, &y))).unwrap();
        let b = fit_gradient_model(&config, &f, &y, Some((&f, &y))).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.history.len(), 3);
        assert!(a.history.iter().all(|r| r.val_f1.is_some()));
    }

    #[test]
    fn divergence_reports_position() {
        // Identical rows with opposite labels: one of them is always far on the wrong side.
        let x = DenseMatrix::from_rows(&[vec![1e200, 1e200], vec![1e200, 1e200]]).unwrap();
        let config = GradientModelConfig { learning_rate: 1e300, batch_size: 1, epochs: 5, ..GradientModelConfig::logistic() };
        let err = fit_gradient_model(&config, &FeatureSet::Dense(x), &[1, 0], None).unwrap_err();
        assert!(matches!(err, ModelError::Divergence { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn rejects_invalid_config() {
        let bad = GradientModelConfig::mlp(vec![0]);
        assert!(bad.validate().is_err());
        let bad = GradientModelConfig { learning_rate: 0.0, ..GradientModelConfig::logistic() };
        assert!(bad.validate().is_err());
    }
}
