//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use sensecnn::cnn::{
    backward, dropout_mask, forward_with_mask, init_params, loss, CnnConfig, CnnParams,
};
use sensecnn::embeddings::{EmbeddingMode, SentenceMatrix};
use sensecnn::mlp::{
    mlp_backward, mlp_forward_with_mask, mlp_init, mlp_loss, MlpConfig, MlpParams,
};
use sensecnn::numerics::{Matrix, SeededRng};

pub const FD_STEP: f64 = 1e-6;

/// Relative error with a denominator floor, so entries whose true gradient
/// is (near) zero are judged on absolute error instead.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Entries with a nonzero analytic gradient.
    pub nonzero: usize,
}

impl GradReport {
    fn add(&mut self, a: f64, n: f64) {
        self.max_rel_err = self.max_rel_err.max(rel_err(a, n));
        self.checked += 1;
        self.nonzero += usize::from(a != 0.0);
    }
}

pub fn random_sentence(len: usize, dim: usize, rng: &mut SeededRng) -> SentenceMatrix {
    let data = (0..len * dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    SentenceMatrix::from_matrix(Matrix::from_vec(len, dim, data).unwrap())
}

pub fn small_cnn_config(mode: EmbeddingMode) -> CnnConfig {
    CnnConfig {
        region_sizes: vec![2, 3],
        maps_per_size: 3,
        embedding_mode: mode,
        ..CnnConfig::new(5, 3)
    }
}

/// Central differences against [`backward`] on a d=5, {2,3}×3, 3-class CNN
/// and a 7-token sentence, for every parameter and (tuned) every input entry.
pub fn cnn_gradient_check(mode: EmbeddingMode, with_dropout: bool, seed: u64) -> GradReport {
    let cfg = small_cnn_config(mode);
    let mut rng = SeededRng::new(seed);
    let mut params: CnnParams = init_params(&cfg, &mut rng);
    // Nonzero biases so their gradients are exercised away from zero.
    for b in params.banks.iter_mut().flat_map(|b| b.biases.iter_mut()) {
        *b = rng.uniform(0.0, 0.2);
    }
    for b in params.softmax_b.iter_mut() {
        *b = rng.uniform(-0.2, 0.2);
    }
    let mut sm = random_sentence(7, cfg.dim, &mut rng);
    let mask = with_dropout.then(|| dropout_mask(cfg.total_maps(), cfg.dropout_keep, &mut rng));
    let gold = 1;

    let f = |p: &CnnParams, s: &SentenceMatrix| {
        let trace = forward_with_mask(p, &cfg, s, mask.clone()).unwrap();
        loss(&trace, gold, p, &cfg).unwrap()
    };
    let trace = forward_with_mask(&params, &cfg, &sm, mask.clone()).unwrap();
    let grads = backward(&trace, gold, &params, &cfg).unwrap();

    let mut report = GradReport {
        max_rel_err: 0.0,
        checked: 0,
        nonzero: 0,
    };
    let analytic: Vec<Vec<f64>> = grads.params.tensors().iter().map(|t| t.to_vec()).collect();
    for (k, g) in analytic.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let orig = params.tensors()[k][i];
            params.tensors_mut()[k][i] = orig + FD_STEP;
            let up = f(&params, &sm);
            params.tensors_mut()[k][i] = orig - FD_STEP;
            let down = f(&params, &sm);
            params.tensors_mut()[k][i] = orig;
            report.add(a, (up - down) / (2.0 * FD_STEP));
        }
    }

    match mode {
        EmbeddingMode::Static => assert!(
            grads.input.is_none(),
            "static mode must not produce input gradients"
        ),
        EmbeddingMode::Tuned => {
            let dx = grads.input.expect("tuned mode input gradient");
            assert_eq!(dx.shape(), sm.matrix.shape());
            for i in 0..sm.matrix.data().len() {
                let orig = sm.matrix.data()[i];
                sm.matrix.data_mut()[i] = orig + FD_STEP;
                let up = f(&params, &sm);
                sm.matrix.data_mut()[i] = orig - FD_STEP;
                let down = f(&params, &sm);
                sm.matrix.data_mut()[i] = orig;
                report.add(dx.data()[i], (up - down) / (2.0 * FD_STEP));
            }
        }
    }
    report
}

/// The same check for the summed-embedding MLP (d=5, hidden 11, 3 classes).
pub fn mlp_gradient_check(mode: EmbeddingMode, with_dropout: bool, seed: u64) -> GradReport {
    let cfg = MlpConfig {
        hidden: 11,
        embedding_mode: mode,
        ..MlpConfig::new(5, 3)
    };
    let mut rng = SeededRng::new(seed);
    let mut params: MlpParams = mlp_init(&cfg, &mut rng);
    for b in params.b1.iter_mut().chain(params.b2.iter_mut()) {
        *b = rng.uniform(-0.2, 0.2);
    }
    let mut sm = random_sentence(7, cfg.dim, &mut rng);
    let mask = with_dropout.then(|| dropout_mask(cfg.hidden, cfg.dropout_keep, &mut rng));
    let gold = 2;

    let f = |p: &MlpParams, s: &SentenceMatrix| {
        let trace = mlp_forward_with_mask(p, &cfg, s, mask.clone()).unwrap();
        mlp_loss(&trace, gold, p, &cfg).unwrap()
    };
    let trace = mlp_forward_with_mask(&params, &cfg, &sm, mask.clone()).unwrap();
    let grads = mlp_backward(&trace, gold, &params, &cfg).unwrap();

    let mut report = GradReport {
        max_rel_err: 0.0,
        checked: 0,
        nonzero: 0,
    };
    let analytic: Vec<Vec<f64>> = grads.params.tensors().iter().map(|t| t.to_vec()).collect();
    for (k, g) in analytic.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let orig = params.tensors()[k][i];
            params.tensors_mut()[k][i] = orig + FD_STEP;
            let up = f(&params, &sm);
            params.tensors_mut()[k][i] = orig - FD_STEP;
            let down = f(&params, &sm);
            params.tensors_mut()[k][i] = orig;
            report.add(a, (up - down) / (2.0 * FD_STEP));
        }
    }
    match mode {
        EmbeddingMode::Static => assert!(grads.input.is_none()),
        EmbeddingMode::Tuned => {
            let dx = grads.input.expect("tuned mode input gradient");
            for i in 0..sm.matrix.data().len() {
                let orig = sm.matrix.data()[i];
                sm.matrix.data_mut()[i] = orig + FD_STEP;
                let up = f(&params, &sm);
                sm.matrix.data_mut()[i] = orig - FD_STEP;
                let down = f(&params, &sm);
                sm.matrix.data_mut()[i] = orig;
                report.add(dx.data()[i], (up - down) / (2.0 * FD_STEP));
            }
        }
    }
    report
}

/// Writes `lines` as a JSONL corpus of `(id, tokens, label, target_index)`.
pub fn write_corpus(path: &std::path::Path, data: &sensecnn::dataset::Dataset) {
    std::fs::write(path, data.to_jsonl()).unwrap();
}

/// Text embedding file with a header line and uniform random vectors.
pub fn write_embeddings(path: &std::path::Path, tokens: &[String], dim: usize, seed: u64) {
    let mut rng = SeededRng::new(seed);
    let mut text = format!("{} {dim}\n", tokens.len());
    for t in tokens {
        text.push_str(t);
        for _ in 0..dim {
            text.push_str(&format!(" {}", rng.uniform(-0.5, 0.5)));
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}
