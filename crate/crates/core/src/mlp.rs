//! Bag-of-vectors baseline: the summed word vectors of a sentence go through
//! one ReLU hidden layer and a softmax layer. Dropout, when training, is
//! applied to the hidden layer; L2 covers both weight matrices.

use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingMode, SentenceMatrix};
use crate::error::{Error, Result};
use crate::numerics::{argmax, axpy, cross_entropy, glorot_limit, softmax, Matrix, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub dropout_keep: f64,
    pub l2_lambda: f64,
    pub embedding_mode: EmbeddingMode,
}

impl MlpConfig {
    /// Hidden size 1024, keep probability 0.5, λ = 1e-3.
    pub fn new(dim: usize, classes: usize) -> Self {
        MlpConfig {
            dim,
            hidden: 1024,
            classes,
            dropout_keep: 0.5,
            l2_lambda: 1e-3,
            embedding_mode: EmbeddingMode::Static,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "dimension and hidden size must be positive".into(),
            ));
        }
        if self.classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
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
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// `hidden × dim`
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `classes × hidden`
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(cfg: &MlpConfig) -> Self {
        MlpParams {
            w1: Matrix::zeros(cfg.hidden, cfg.dim),
            b1: vec![0.0; cfg.hidden],
            w2: Matrix::zeros(cfg.classes, cfg.hidden),
            b2: vec![0.0; cfg.classes],
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w1.data(), &self.b1, self.w2.data(), &self.b2]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.data_mut(),
            &mut self.b1,
            self.w2.data_mut(),
            &mut self.b2,
        ]
    }

    pub fn penalized_norm_sq(&self) -> f64 {
        self.w1.frobenius_norm_sq() + self.w2.frobenius_norm_sq()
    }
}

pub fn mlp_init(cfg: &MlpConfig, rng: &mut SeededRng) -> MlpParams {
    let mut p = MlpParams::zeros(cfg);
    let l1 = glorot_limit(cfg.dim, cfg.hidden);
    for x in p.w1.data_mut() {
        *x = rng.uniform(-l1, l1);
    }
    let l2 = glorot_limit(cfg.hidden, cfg.classes);
    for x in p.w2.data_mut() {
        *x = rng.uniform(-l2, l2);
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpTrace {
    pub rows: usize,
    /// Sum of the sentence's word vectors.
    pub input: Vec<f64>,
    pub pre_hidden: Vec<f64>,
    pub hidden: Vec<f64>,
    pub dropout_mask: Option<Vec<bool>>,
    pub dropout_keep: f64,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl MlpTrace {
    fn dropped_hidden(&self) -> Vec<f64> {
        match &self.dropout_mask {
            None => self.hidden.clone(),
            Some(mask) => self
                .hidden
                .iter()
                .zip(mask)
                .map(|(&h, &k)| if k { h / self.dropout_keep } else { 0.0 })
                .collect(),
        }
    }
}

pub fn mlp_forward(
    params: &MlpParams,
    cfg: &MlpConfig,
    sm: &SentenceMatrix,
    rng_for_dropout: Option<&mut SeededRng>,
) -> Result<MlpTrace> {
    let mask =
        rng_for_dropout.map(|rng| crate::cnn::dropout_mask(cfg.hidden, cfg.dropout_keep, rng));
    mlp_forward_with_mask(params, cfg, sm, mask)
}

pub fn mlp_forward_with_mask(
    params: &MlpParams,
    cfg: &MlpConfig,
    sm: &SentenceMatrix,
    mask: Option<Vec<bool>>,
) -> Result<MlpTrace> {
    if sm.dim() != cfg.dim {
        return Err(Error::shape(format!("embedding dim {}", cfg.dim), sm.dim()));
    }
    if sm.is_empty() {
        return Err(Error::Empty("sentence".into()));
    }
    if let Some(m) = &mask {
        if m.len() != cfg.hidden {
            return Err(Error::shape(
                format!("mask of length {}", cfg.hidden),
                m.len(),
            ));
        }
    }
    let mut input = vec![0.0; cfg.dim];
    for r in 0..sm.len() {
        for (u, x) in input.iter_mut().zip(sm.matrix.row(r)) {
            *u += x;
        }
    }
    let mut pre_hidden = params.w1.matvec(&input);
    for (z, b) in pre_hidden.iter_mut().zip(&params.b1) {
        *z += b;
    }
    let hidden: Vec<f64> = pre_hidden.iter().map(|&z| z.max(0.0)).collect();
    let mut trace = MlpTrace {
        rows: sm.len(),
        input,
        pre_hidden,
        hidden,
        dropout_mask: mask,
        dropout_keep: cfg.dropout_keep,
        logits: Vec::new(),
        probs: Vec::new(),
    };
    let mut logits = params.w2.matvec(&trace.dropped_hidden());
    for (z, b) in logits.iter_mut().zip(&params.b2) {
        *z += b;
    }
    trace.probs = softmax(&logits);
    trace.logits = logits;
    Ok(trace)
}

pub fn mlp_loss(trace: &MlpTrace, gold: usize, params: &MlpParams, cfg: &MlpConfig) -> Result<f64> {
    Ok(cross_entropy(&trace.probs, gold)? + cfg.l2_lambda * params.penalized_norm_sq())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub params: MlpParams,
    /// One gradient row per sentence token (all equal); tuned mode only.
    pub input: Option<Matrix>,
}

pub fn mlp_backward(
    trace: &MlpTrace,
    gold: usize,
    params: &MlpParams,
    cfg: &MlpConfig,
) -> Result<MlpGradients> {
    let eg = mlp_example_gradient(trace, gold, params, cfg)?;
    let mut g = MlpParams::zeros(cfg);
    eg.accumulate(&mut g, 1.0);
    mlp_add_l2_gradient(params, cfg, &mut g, 1.0);
    Ok(MlpGradients {
        params: g,
        input: eg.input,
    })
}

/// Data term of one example's gradient as the two outer-product factors of
/// each weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpExampleGrad {
    pub dlogits: Vec<f64>,
    /// Hidden layer after dropout.
    pub hidden: Vec<f64>,
    /// Gradient w.r.t. the hidden pre-activations.
    pub dhidden: Vec<f64>,
    /// Summed word vectors.
    pub summed: Vec<f64>,
    /// One gradient row per sentence token (all equal); tuned mode only.
    pub input: Option<Matrix>,
}

pub fn mlp_example_gradient(
    trace: &MlpTrace,
    gold: usize,
    params: &MlpParams,
    cfg: &MlpConfig,
) -> Result<MlpExampleGrad> {
    if gold >= cfg.classes {
        return Err(Error::IndexOutOfRange {
            index: gold,
            len: cfg.classes,
        });
    }
    let mut dlogits = trace.probs.clone();
    dlogits[gold] -= 1.0;
    let mut dz = params.w2.matvec_t(&dlogits);
    for (j, d) in dz.iter_mut().enumerate() {
        let kept = trace.dropout_mask.as_ref().is_none_or(|m| m[j]);
        let scale = if trace.dropout_mask.is_some() {
            1.0 / trace.dropout_keep
        } else {
            1.0
        };
        *d = if kept && trace.pre_hidden[j] > 0.0 {
            *d * scale
        } else {
            0.0
        };
    }
    let input = (cfg.embedding_mode == EmbeddingMode::Tuned).then(|| {
        let du = params.w1.matvec_t(&dz);
        let mut m = Matrix::zeros(trace.rows, cfg.dim);
        for r in 0..trace.rows {
            m.row_mut(r).copy_from_slice(&du);
        }
        m
    });
    Ok(MlpExampleGrad {
        dlogits,
        hidden: trace.dropped_hidden(),
        dhidden: dz,
        summed: trace.input.clone(),
        input,
    })
}

impl MlpExampleGrad {
    /// `grads += scale · ∂CE/∂θ` for this example.
    pub fn accumulate(&self, g: &mut MlpParams, scale: f64) {
        for (c, &dz) in self.dlogits.iter().enumerate() {
            axpy(scale * dz, &self.hidden, g.w2.row_mut(c));
            g.b2[c] += scale * dz;
        }
        for (j, &d) in self.dhidden.iter().enumerate() {
            if d != 0.0 {
                axpy(scale * d, &self.summed, g.w1.row_mut(j));
                g.b1[j] += scale * d;
            }
        }
    }
}

/// `grads += scale · 2λ θ` for W1 and W2.
pub fn mlp_add_l2_gradient(params: &MlpParams, cfg: &MlpConfig, g: &mut MlpParams, scale: f64) {
    let k = scale * 2.0 * cfg.l2_lambda;
    if k == 0.0 {
        return;
    }
    axpy(k, params.w1.data(), g.w1.data_mut());
    axpy(k, params.w2.data(), g.w2.data_mut());
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub config: MlpConfig,
    pub params: MlpParams,
}

impl Mlp {
    pub fn new(config: MlpConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let params = mlp_init(&config, rng);
        Ok(Mlp { config, params })
    }

    pub fn forward(&self, sm: &SentenceMatrix, rng: Option<&mut SeededRng>) -> Result<MlpTrace> {
        mlp_forward(&self.params, &self.config, sm, rng)
    }

    pub fn predict(&self, sm: &SentenceMatrix) -> Result<usize> {
        Ok(argmax(
            &mlp_forward_with_mask(&self.params, &self.config, sm, None)?.probs,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dim: usize, hidden: usize, classes: usize) -> MlpConfig {
        MlpConfig {
            hidden,
            ..MlpConfig::new(dim, classes)
        }
    }

    #[test]
    fn init_limits() {
        let c = cfg(100, 1024, 3);
        let p = mlp_init(&c, &mut SeededRng::new(2));
        let l1 = (6.0f64 / 1124.0).sqrt();
        assert!(p.w1.data().iter().all(|x| x.abs() <= l1));
        assert!(p.w1.data().iter().any(|x| x.abs() > 0.9 * l1));
        assert!(p.b1.iter().chain(&p.b2).all(|&x| x == 0.0));
        assert_eq!(p, mlp_init(&c, &mut SeededRng::new(2)));
    }

    #[test]
    fn single_token_input_is_its_vector() {
        let c = cfg(3, 4, 2);
        let p = mlp_init(&c, &mut SeededRng::new(0));
        let sm = SentenceMatrix::from_matrix(Matrix::from_rows(&[[0.1, -0.2, 0.3]]).unwrap());
        let t = mlp_forward(&p, &c, &sm, None).unwrap();
        assert_eq!(t.input, vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn order_invariance() {
        let c = cfg(3, 8, 3);
        let p = mlp_init(&c, &mut SeededRng::new(0));
        // Dyadic values keep the row sums exact regardless of order.
        let a =
            Matrix::from_rows(&[[0.5, 0.25, -1.0], [2.0, -0.75, 0.125], [1.0, 1.0, 0.5]]).unwrap();
        let b =
            Matrix::from_rows(&[[1.0, 1.0, 0.5], [0.5, 0.25, -1.0], [2.0, -0.75, 0.125]]).unwrap();
        let pa = mlp_forward(&p, &c, &SentenceMatrix::from_matrix(a), None).unwrap();
        let pb = mlp_forward(&p, &c, &SentenceMatrix::from_matrix(b), None).unwrap();
        assert_eq!(pa.probs, pb.probs);
    }

    #[test]
    fn zero_sentence_reduces_to_biases() {
        let c = cfg(2, 3, 2);
        let mut p = mlp_init(&c, &mut SeededRng::new(0));
        p.b1 = vec![0.5, -0.5, 1.0];
        p.b2 = vec![0.1, -0.1];
        let t = mlp_forward(
            &p,
            &c,
            &SentenceMatrix::from_matrix(Matrix::zeros(2, 2)),
            None,
        )
        .unwrap();
        let h = vec![0.5, 0.0, 1.0];
        let mut z = p.w2.matvec(&h);
        z[0] += 0.1;
        z[1] -= 0.1;
        assert_eq!(t.probs, softmax(&z));
    }

    #[test]
    fn confident_correct_prediction_has_zero_gradient() {
        let mut c = cfg(2, 3, 2);
        c.l2_lambda = 0.0;
        c.embedding_mode = EmbeddingMode::Tuned;
        let mut p = mlp_init(&c, &mut SeededRng::new(0));
        p.b2 = vec![1000.0, 0.0];
        let sm = SentenceMatrix::from_matrix(Matrix::from_rows(&[[0.1, 0.2]]).unwrap());
        let t = mlp_forward(&p, &c, &sm, None).unwrap();
        assert_eq!(t.probs, vec![1.0, 0.0]);
        let g = mlp_backward(&t, 0, &p, &c).unwrap();
        assert!(g
            .params
            .tensors()
            .iter()
            .all(|t| t.iter().all(|&x| x == 0.0)));
        assert!(g.input.unwrap().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn static_mode_has_no_input_gradient() {
        let c = cfg(2, 3, 2);
        let p = mlp_init(&c, &mut SeededRng::new(0));
        let sm = SentenceMatrix::from_matrix(Matrix::from_rows(&[[0.1, 0.2]]).unwrap());
        let t = mlp_forward(&p, &c, &sm, None).unwrap();
        assert!(mlp_backward(&t, 1, &p, &c).unwrap().input.is_none());
    }

    #[test]
    fn dim_mismatch() {
        let c = cfg(2, 3, 2);
        let p = mlp_init(&c, &mut SeededRng::new(0));
        let sm = SentenceMatrix::from_matrix(Matrix::zeros(1, 3));
        assert!(mlp_forward(&p, &c, &sm, None).is_err());
    }
}
