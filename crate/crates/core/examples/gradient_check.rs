//! Compares hand-derived CNN gradients with central differences.

use sensecnn::cnn::{backward, forward, init_params, loss, CnnConfig};
use sensecnn::embeddings::{EmbeddingMode, SentenceMatrix};
use sensecnn::numerics::{Matrix, SeededRng};

fn main() -> sensecnn::Result<()> {
    let cfg = CnnConfig {
        region_sizes: vec![2, 3],
        maps_per_size: 2,
        embedding_mode: EmbeddingMode::Tuned,
        ..CnnConfig::new(4, 3)
    };
    let mut rng = SeededRng::new(0);
    let mut params = init_params(&cfg, &mut rng);
    let data = (0..5 * 4).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let sm = SentenceMatrix::from_matrix(Matrix::from_vec(5, 4, data)?);
    let gold = 2;

    let trace = forward(&params, &cfg, &sm, None)?;
    let grads = backward(&trace, gold, &params, &cfg)?;
    let analytic: Vec<Vec<f64>> = grads.params.tensors().iter().map(|t| t.to_vec()).collect();

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, g) in analytic.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let orig = params.tensors()[k][i];
            params.tensors_mut()[k][i] = orig + h;
            let up = loss(&forward(&params, &cfg, &sm, None)?, gold, &params, &cfg)?;
            params.tensors_mut()[k][i] = orig - h;
            let down = loss(&forward(&params, &cfg, &sm, None)?, gold, &params, &cfg)?;
            params.tensors_mut()[k][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5));
        }
    }
    println!(
        "checked {} parameters, max relative error {worst:.2e}",
        analytic.iter().map(Vec::len).sum::<usize>()
    );
    println!("input gradient shape {:?}", grads.input.map(|m| m.shape()));
    Ok(())
}
