//! One-layer convolutional sentence classifier.
//!
//! Each filter `w ∈ R^{n×d}` slides over the sentence matrix with narrow
//! convolution: for window start `j` the activation is
//! `ReLU(⟨x[j..j+n], w⟩_F + b)`. Max-over-time pooling keeps one value per
//! filter; the pooled vector (optionally dropped out) feeds a softmax layer.
//!
//! Sentences shorter than the largest region size are right-padded with zero
//! rows. Pooling ties go to the leftmost window.

use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingMode, SentenceMatrix};
use crate::error::{Error, Result};
use crate::numerics::{argmax, axpy, cross_entropy, dot, glorot_limit, softmax, Matrix, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub dim: usize,
    pub region_sizes: Vec<usize>,
    pub maps_per_size: usize,
    pub classes: usize,
    pub dropout_keep: f64,
    pub l2_lambda: f64,
    pub embedding_mode: EmbeddingMode,
}

impl CnnConfig {
    /// Region sizes 3, 4, 5 with 100 maps each, keep probability 0.5, λ = 1e-3,
    /// static embeddings.
    pub fn new(dim: usize, classes: usize) -> Self {
        CnnConfig {
            dim,
            region_sizes: vec![3, 4, 5],
            maps_per_size: 100,
            classes,
            dropout_keep: 0.5,
            l2_lambda: 1e-3,
            embedding_mode: EmbeddingMode::Static,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.region_sizes.is_empty() || self.region_sizes.contains(&0) {
            return Err(Error::Config(
                "region sizes must be non-empty and positive".into(),
            ));
        }
        let mut sorted = self.region_sizes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.region_sizes.len() {
            return Err(Error::Config("region sizes must be distinct".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.dim == 0 || self.maps_per_size == 0 {
            return Err(Error::Config(
                "dimension and map count must be positive".into(),
            ));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::Config(format!(
                "dropout keep {} not in (0, 1]",
                self.dropout_keep
            )));
        }
        if self.l2_lambda.is_nan() || self.l2_lambda < 0.0 {
            return Err(Error::Config("l2 lambda must be non-negative".into()));
        }
        Ok(())
    }

    pub fn total_maps(&self) -> usize {
        self.region_sizes.len() * self.maps_per_size
    }

    pub fn max_region(&self) -> usize {
        self.region_sizes.iter().copied().max().unwrap_or(1)
    }

    /// Position of a filter in the pooled vector.
    pub fn flat_index(&self, id: FilterId) -> Result<usize> {
        let bank = self
            .region_sizes
            .iter()
            .position(|&n| n == id.region_size)
            .ok_or_else(|| {
                Error::Invalid(format!("no filters of region size {}", id.region_size))
            })?;
        if id.map >= self.maps_per_size {
            return Err(Error::IndexOutOfRange {
                index: id.map,
                len: self.maps_per_size,
            });
        }
        Ok(bank * self.maps_per_size + id.map)
    }

    pub fn filter_ids(&self) -> Vec<FilterId> {
        self.region_sizes
            .iter()
            .flat_map(|&n| {
                (0..self.maps_per_size).map(move |map| FilterId {
                    region_size: n,
                    map,
                })
            })
            .collect()
    }
}

/// A filter, addressed by its region size and index within that size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FilterId {
    pub region_size: usize,
    pub map: usize,
}

impl std::fmt::Display for FilterId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.region_size, self.map)
    }
}

/// All filters of one region size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub region_size: usize,
    /// `maps_per_size` matrices of shape `region_size × dim`.
    pub weights: Vec<Matrix>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnParams {
    pub banks: Vec<FilterBank>,
    /// `classes × total_maps`
    pub softmax_w: Matrix,
    pub softmax_b: Vec<f64>,
}

impl CnnParams {
    pub fn zeros(cfg: &CnnConfig) -> Self {
        CnnParams {
            banks: cfg
                .region_sizes
                .iter()
                .map(|&n| FilterBank {
                    region_size: n,
                    weights: vec![Matrix::zeros(n, cfg.dim); cfg.maps_per_size],
                    biases: vec![0.0; cfg.maps_per_size],
                })
                .collect(),
            softmax_w: Matrix::zeros(cfg.classes, cfg.total_maps()),
            softmax_b: vec![0.0; cfg.classes],
        }
    }

    /// Every parameter tensor in a fixed order: per bank each filter then
    /// the bank's biases, then softmax weights and bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for bank in &self.banks {
            out.extend(bank.weights.iter().map(Matrix::data));
            out.push(&bank.biases);
        }
        out.push(self.softmax_w.data());
        out.push(&self.softmax_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for bank in &mut self.banks {
            out.extend(bank.weights.iter_mut().map(Matrix::data_mut));
            out.push(&mut bank.biases);
        }
        out.push(self.softmax_w.data_mut());
        out.push(&mut self.softmax_b);
        out
    }

    /// `‖softmax_W‖²_F + Σ‖w‖²_F`; biases are not penalized.
    pub fn penalized_norm_sq(&self) -> f64 {
        let filters: f64 = self
            .banks
            .iter()
            .flat_map(|b| &b.weights)
            .map(Matrix::frobenius_norm_sq)
            .sum();
        filters + self.softmax_w.frobenius_norm_sq()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn filter(&self, flat: usize, maps: usize) -> (&Matrix, f64) {
        let bank = &self.banks[flat / maps];
        (&bank.weights[flat % maps], bank.biases[flat % maps])
    }
}

/// Glorot-uniform filters and softmax weights, zero biases. A bank of region
/// size `n` is treated as a map `R^{n·d} → R^m`.
pub fn init_params(cfg: &CnnConfig, rng: &mut SeededRng) -> CnnParams {
    let mut params = CnnParams::zeros(cfg);
    for bank in &mut params.banks {
        let limit = glorot_limit(bank.region_size * cfg.dim, cfg.maps_per_size);
        for w in &mut bank.weights {
            for x in w.data_mut() {
                *x = rng.uniform(-limit, limit);
            }
        }
    }
    let limit = glorot_limit(cfg.total_maps(), cfg.classes);
    for x in params.softmax_w.data_mut() {
        *x = rng.uniform(-limit, limit);
    }
    params
}

/// Activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub sentence: SentenceMatrix,
    /// Sentence matrix after zero padding to the largest region size.
    pub input: Matrix,
    /// Post-ReLU feature map of every filter, flat filter order.
    pub feature_maps: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
    /// Window start (0-based) of each filter's pooled maximum.
    pub argmax_pos: Vec<usize>,
    pub dropout_mask: Option<Vec<bool>>,
    pub dropout_keep: f64,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    /// The vector the softmax layer saw: pooled values after dropout.
    pub fn penultimate(&self) -> Vec<f64> {
        match &self.dropout_mask {
            None => self.pooled.clone(),
            Some(mask) => self
                .pooled
                .iter()
                .zip(mask)
                .map(|(&p, &k)| if k { p / self.dropout_keep } else { 0.0 })
                .collect(),
        }
    }
}

/// Draws an inverted-dropout mask of the given length.
pub fn dropout_mask(len: usize, keep: f64, rng: &mut SeededRng) -> Vec<bool> {
    (0..len).map(|_| rng.bernoulli(keep)).collect()
}

/// Forward pass; with an rng, a fresh dropout mask is applied to the pooled
/// vector.
pub fn forward(
    params: &CnnParams,
    cfg: &CnnConfig,
    sm: &SentenceMatrix,
    rng_for_dropout: Option<&mut SeededRng>,
) -> Result<ForwardTrace> {
    let mask = rng_for_dropout.map(|rng| dropout_mask(cfg.total_maps(), cfg.dropout_keep, rng));
    forward_with_mask(params, cfg, sm, mask)
}

/// Forward pass with an explicit dropout mask (`None` for inference).
pub fn forward_with_mask(
    params: &CnnParams,
    cfg: &CnnConfig,
    sm: &SentenceMatrix,
    mask: Option<Vec<bool>>,
) -> Result<ForwardTrace> {
    if sm.dim() != cfg.dim {
        return Err(Error::shape(format!("embedding dim {}", cfg.dim), sm.dim()));
    }
    if sm.is_empty() {
        return Err(Error::Empty("sentence".into()));
    }
    let total = cfg.total_maps();
    if let Some(m) = &mask {
        if m.len() != total {
            return Err(Error::shape(format!("mask of length {total}"), m.len()));
        }
    }
    let s = sm.len().max(cfg.max_region());
    let mut input = sm.matrix.clone();
    while input.rows() < s {
        input.push_row(&vec![0.0; cfg.dim])?;
    }

    let mut feature_maps = Vec::with_capacity(total);
    let mut pooled = Vec::with_capacity(total);
    let mut argmax_pos = Vec::with_capacity(total);
    for bank in &params.banks {
        let n = bank.region_size;
        for (w, &b) in bank.weights.iter().zip(&bank.biases) {
            let fmap: Vec<f64> = (0..=s - n)
                .map(|j| (dot(input.row_block(j, n), w.data()) + b).max(0.0))
                .collect();
            let pos = argmax(&fmap);
            pooled.push(fmap[pos]);
            argmax_pos.push(pos);
            feature_maps.push(fmap);
        }
    }

    let mut trace = ForwardTrace {
        sentence: sm.clone(),
        input,
        feature_maps,
        pooled,
        argmax_pos,
        dropout_mask: mask,
        dropout_keep: cfg.dropout_keep,
        logits: Vec::new(),
        probs: Vec::new(),
    };
    let h = trace.penultimate();
    let mut logits = params.softmax_w.matvec(&h);
    for (z, b) in logits.iter_mut().zip(&params.softmax_b) {
        *z += b;
    }
    trace.probs = softmax(&logits);
    trace.logits = logits;
    Ok(trace)
}

/// Cross-entropy plus `λ (‖softmax_W‖²_F + Σ‖w‖²_F)`.
pub fn loss(trace: &ForwardTrace, gold: usize, params: &CnnParams, cfg: &CnnConfig) -> Result<f64> {
    Ok(cross_entropy(&trace.probs, gold)? + cfg.l2_lambda * params.penalized_norm_sq())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnGradients {
    pub params: CnnParams,
    /// Gradient w.r.t. each real (unpadded) sentence row; tuned mode only.
    pub input: Option<Matrix>,
}

/// Exact gradient of [`loss`] for the trace's dropout mask.
pub fn backward(
    trace: &ForwardTrace,
    gold: usize,
    params: &CnnParams,
    cfg: &CnnConfig,
) -> Result<CnnGradients> {
    let eg = example_gradient(trace, gold, params, cfg)?;
    let mut grads = CnnParams::zeros(cfg);
    eg.accumulate(&mut grads, 1.0);
    add_l2_gradient(params, cfg, &mut grads, 1.0);
    Ok(CnnGradients {
        params: grads,
        input: eg.input,
    })
}

/// The data term of one example's gradient in factored form. Every filter
/// gradient is a multiple of one input window, so storing the multipliers
/// is enough; [`CnnExampleGrad::accumulate`] expands them.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnExampleGrad {
    pub dlogits: Vec<f64>,
    /// Penultimate layer (pooled vector after dropout).
    pub penultimate: Vec<f64>,
    /// Loss gradient per pooled feature, zero where the ReLU is closed.
    pub dpooled: Vec<f64>,
    pub argmax_pos: Vec<usize>,
    /// Padded input the windows are read from.
    pub padded: Matrix,
    /// Gradient w.r.t. the real sentence rows; tuned mode only.
    pub input: Option<Matrix>,
}

pub fn example_gradient(
    trace: &ForwardTrace,
    gold: usize,
    params: &CnnParams,
    cfg: &CnnConfig,
) -> Result<CnnExampleGrad> {
    if gold >= cfg.classes {
        return Err(Error::IndexOutOfRange {
            index: gold,
            len: cfg.classes,
        });
    }
    let maps = cfg.maps_per_size;
    let mut dlogits = trace.probs.clone();
    dlogits[gold] -= 1.0;

    let mut dpooled = params.softmax_w.matvec_t(&dlogits);
    if let Some(mask) = &trace.dropout_mask {
        for (g, &k) in dpooled.iter_mut().zip(mask) {
            *g = if k { *g / trace.dropout_keep } else { 0.0 };
        }
    }
    // ReLU gate: pooled > 0 exactly when the pre-activation at argmax is.
    for (g, &p) in dpooled.iter_mut().zip(&trace.pooled) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }

    let tuned = cfg.embedding_mode == EmbeddingMode::Tuned;
    let real_rows = trace.sentence.len();
    let d = cfg.dim;
    let input = tuned.then(|| {
        let mut dx = Matrix::zeros(real_rows, d);
        for (f, &g) in dpooled.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let (w, _) = params.filter(f, maps);
            let pos = trace.argmax_pos[f];
            for r in 0..w.rows() {
                let row = pos + r;
                if row < real_rows {
                    axpy(g, &w.data()[r * d..(r + 1) * d], dx.row_mut(row));
                }
            }
        }
        dx
    });
    Ok(CnnExampleGrad {
        dlogits,
        penultimate: trace.penultimate(),
        dpooled,
        argmax_pos: trace.argmax_pos.clone(),
        padded: trace.input.clone(),
        input,
    })
}

impl CnnExampleGrad {
    /// `grads += scale · ∂CE/∂θ` for this example.
    pub fn accumulate(&self, grads: &mut CnnParams, scale: f64) {
        for (c, &dz) in self.dlogits.iter().enumerate() {
            axpy(scale * dz, &self.penultimate, grads.softmax_w.row_mut(c));
            grads.softmax_b[c] += scale * dz;
        }
        let mut f = 0;
        for bank in &mut grads.banks {
            let n = bank.region_size;
            for (w, b) in bank.weights.iter_mut().zip(bank.biases.iter_mut()) {
                let g = self.dpooled[f];
                if g != 0.0 {
                    axpy(
                        scale * g,
                        self.padded.row_block(self.argmax_pos[f], n),
                        w.data_mut(),
                    );
                    *b += scale * g;
                }
                f += 1;
            }
        }
    }
}

/// `grads += scale · 2λ θ` for the penalized tensors.
pub fn add_l2_gradient(params: &CnnParams, cfg: &CnnConfig, grads: &mut CnnParams, scale: f64) {
    let k = scale * 2.0 * cfg.l2_lambda;
    if k == 0.0 {
        return;
    }
    for (gb, pb) in grads.banks.iter_mut().zip(&params.banks) {
        for (g, w) in gb.weights.iter_mut().zip(&pb.weights) {
            axpy(k, w.data(), g.data_mut());
        }
    }
    axpy(k, params.softmax_w.data(), grads.softmax_w.data_mut());
}

/// Dropout-free class prediction; ties go to the lowest index.
pub fn predict(params: &CnnParams, cfg: &CnnConfig, sm: &SentenceMatrix) -> Result<usize> {
    Ok(argmax(&forward_with_mask(params, cfg, sm, None)?.probs))
}

/// Configuration and parameters together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cnn {
    pub config: CnnConfig,
    pub params: CnnParams,
}

impl Cnn {
    pub fn new(config: CnnConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, rng);
        Ok(Cnn { config, params })
    }

    pub fn forward(
        &self,
        sm: &SentenceMatrix,
        rng: Option<&mut SeededRng>,
    ) -> Result<ForwardTrace> {
        forward(&self.params, &self.config, sm, rng)
    }

    pub fn predict(&self, sm: &SentenceMatrix) -> Result<usize> {
        predict(&self.params, &self.config, sm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(sizes: Vec<usize>, maps: usize) -> CnnConfig {
        CnnConfig {
            dim: 2,
            region_sizes: sizes,
            maps_per_size: maps,
            classes: 2,
            dropout_keep: 0.5,
            l2_lambda: 0.0,
            embedding_mode: EmbeddingMode::Static,
        }
    }

    fn sentence(rows: &[&[f64]]) -> SentenceMatrix {
        SentenceMatrix::from_matrix(Matrix::from_rows(rows).unwrap())
    }

    #[test]
    fn glorot_limits_and_zero_biases() {
        let cfg = CnnConfig {
            dim: 100,
            ..CnnConfig::new(100, 3)
        };
        let params = init_params(&cfg, &mut SeededRng::new(1));
        let limit = (6.0f64 / 400.0).sqrt();
        assert!((limit - 0.122_474_487).abs() < 1e-9);
        let bank3 = &params.banks[0];
        assert_eq!(bank3.region_size, 3);
        assert!(bank3
            .weights
            .iter()
            .all(|w| w.data().iter().all(|x| x.abs() <= limit)));
        assert!(params
            .banks
            .iter()
            .all(|b| b.biases.iter().all(|&x| x == 0.0)));
        assert!(params.softmax_b.iter().all(|&x| x == 0.0));
        assert_eq!(params, init_params(&cfg, &mut SeededRng::new(1)));
    }

    #[test]
    fn feature_map_length() {
        let cfg = CnnConfig {
            dim: 2,
            ..tiny_cfg(vec![3], 1)
        };
        let params = init_params(&cfg, &mut SeededRng::new(0));
        let sm = SentenceMatrix::from_matrix(Matrix::zeros(10, 2));
        let t = forward(&params, &cfg, &sm, None).unwrap();
        assert_eq!(t.feature_maps[0].len(), 8);
    }

    #[test]
    fn all_ones_filter_gives_relu_row_sums() {
        let cfg = tiny_cfg(vec![1], 1);
        let mut params = CnnParams::zeros(&cfg);
        params.banks[0].weights[0] = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let sm = sentence(&[&[1.0, 2.0], &[-3.0, 1.0], &[0.5, 0.25]]);
        let t = forward(&params, &cfg, &sm, None).unwrap();
        assert_eq!(t.feature_maps[0], vec![3.0, 0.0, 0.75]);
        assert_eq!(t.pooled, vec![3.0]);
        assert_eq!(t.argmax_pos, vec![0]);
    }

    #[test]
    fn short_sentence_is_padded() {
        let cfg = tiny_cfg(vec![2, 4], 1);
        let params = init_params(&cfg, &mut SeededRng::new(0));
        let sm = sentence(&[&[1.0, 2.0], &[0.0, 1.0]]);
        let t = forward(&params, &cfg, &sm, None).unwrap();
        assert_eq!(t.input.rows(), 4);
        assert_eq!(t.feature_maps[0].len(), 3);
        assert_eq!(t.feature_maps[1].len(), 1);
    }

    #[test]
    fn dim_mismatch_is_error() {
        let cfg = tiny_cfg(vec![1], 1);
        let params = CnnParams::zeros(&cfg);
        let sm = SentenceMatrix::from_matrix(Matrix::zeros(3, 5));
        assert!(matches!(
            forward(&params, &cfg, &sm, None),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn inference_is_deterministic() {
        let cfg = tiny_cfg(vec![2], 4);
        let params = init_params(&cfg, &mut SeededRng::new(3));
        let sm = sentence(&[&[1.0, 2.0], &[0.0, 1.0], &[0.3, -1.0]]);
        let a = forward(&params, &cfg, &sm, None).unwrap();
        let b = forward(&params, &cfg, &sm, None).unwrap();
        assert!(a.dropout_mask.is_none());
        assert_eq!(a.probs, b.probs);
    }

    #[test]
    fn loss_penalty() {
        let mut cfg = tiny_cfg(vec![1], 1);
        let mut params = CnnParams::zeros(&cfg);
        let sm = sentence(&[&[1.0, 2.0]]);
        cfg.l2_lambda = 0.7;
        let t = forward(&params, &cfg, &sm, None).unwrap();
        let ce = cross_entropy(&t.probs, 0).unwrap();
        assert_eq!(loss(&t, 0, &params, &cfg).unwrap(), ce);

        params.banks[0].weights[0] = Matrix::from_rows(&[[1.0, -2.0]]).unwrap();
        params.banks[0].biases[0] = 5.0;
        params.softmax_w = Matrix::from_rows(&[[0.5], [3.0]]).unwrap();
        cfg.l2_lambda = 1e-3;
        let t = forward(&params, &cfg, &sm, None).unwrap();
        // (1 + 4) + (0.25 + 9) = 14.25
        let want = cross_entropy(&t.probs, 1).unwrap() + 1e-3 * 14.25;
        assert!((loss(&t, 1, &params, &cfg).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn zero_loss_when_confident() {
        let cfg = tiny_cfg(vec![1], 1);
        let mut params = CnnParams::zeros(&cfg);
        params.softmax_b = vec![0.0, 1000.0];
        let t = forward(&params, &cfg, &sentence(&[&[1.0, 1.0]]), None).unwrap();
        assert_eq!(loss(&t, 1, &params, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn max_pool_routes_gradient_to_window() {
        let mut cfg = tiny_cfg(vec![1], 1);
        cfg.embedding_mode = EmbeddingMode::Tuned;
        let mut params = CnnParams::zeros(&cfg);
        params.banks[0].weights[0] = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        params.softmax_w = Matrix::from_rows(&[[1.0], [-1.0]]).unwrap();
        let sm = sentence(&[&[0.1, 0.0], &[2.0, 0.0], &[0.5, 0.0]]);
        let t = forward(&params, &cfg, &sm, None).unwrap();
        assert_eq!(t.argmax_pos, vec![1]);
        let g = backward(&t, 0, &params, &cfg).unwrap();
        let dx = g.input.unwrap();
        assert_eq!(dx.row(0), &[0.0, 0.0]);
        assert_eq!(dx.row(2), &[0.0, 0.0]);
        assert!(dx.row(1)[0] != 0.0);
    }

    #[test]
    fn static_mode_has_no_input_gradient() {
        let cfg = tiny_cfg(vec![1, 2], 2);
        let params = init_params(&cfg, &mut SeededRng::new(0));
        let t = forward(&params, &cfg, &sentence(&[&[1.0, 2.0], &[3.0, 4.0]]), None).unwrap();
        assert!(backward(&t, 0, &params, &cfg).unwrap().input.is_none());
    }

    #[test]
    fn predict_ties_and_argmax() {
        let cfg = tiny_cfg(vec![1], 1);
        let params = CnnParams::zeros(&cfg);
        assert_eq!(
            predict(&params, &cfg, &sentence(&[&[1.0, 1.0]])).unwrap(),
            0
        );
        let mut params = params;
        params.softmax_b = vec![0.2, 0.9];
        assert_eq!(
            predict(&params, &cfg, &sentence(&[&[1.0, 1.0]])).unwrap(),
            1
        );
    }

    #[test]
    fn config_validation() {
        assert!(CnnConfig::new(10, 3).validate().is_ok());
        assert!(CnnConfig {
            classes: 1,
            ..CnnConfig::new(10, 3)
        }
        .validate()
        .is_err());
        assert!(CnnConfig {
            region_sizes: vec![],
            ..CnnConfig::new(10, 3)
        }
        .validate()
        .is_err());
        assert!(CnnConfig {
            region_sizes: vec![3, 3],
            ..CnnConfig::new(10, 3)
        }
        .validate()
        .is_err());
        assert!(CnnConfig {
            dropout_keep: 0.0,
            ..CnnConfig::new(10, 3)
        }
        .validate()
        .is_err());
    }
}
