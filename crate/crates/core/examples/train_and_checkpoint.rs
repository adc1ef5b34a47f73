//! Trains a model with tuned embeddings, saves a checkpoint and shows that
//! the reloaded model makes the same predictions.

use sensecnn::checkpoint::Checkpoint;
use sensecnn::cnn::{Cnn, CnnConfig};
use sensecnn::dataset::{synth_cue_dataset, CueSpec};
use sensecnn::embeddings::{EmbeddingMode, EmbeddingTable};
use sensecnn::numerics::SeededRng;
use sensecnn::optim::{predict_all, train, Model, TrainConfig};

fn main() -> sensecnn::Result<()> {
    let cue = CueSpec::random(2, 50, 8, 40, false, 2);
    let data = synth_cue_dataset(&cue, 2)?;
    let mut table = EmbeddingTable::random_init(16, 0.25, 2)?;
    let cfg = CnnConfig {
        region_sizes: vec![2, 3],
        maps_per_size: 8,
        embedding_mode: EmbeddingMode::Tuned,
        ..CnnConfig::new(16, 2)
    };
    let mut model = Model::Cnn(Cnn::new(cfg, &mut SeededRng::new(2))?);
    let history = train(
        &mut model,
        &data,
        &mut table,
        &TrainConfig {
            iterations: 100,
            ..TrainConfig::cnn_default(2)
        },
    )?;
    println!(
        "loss {:.4} -> {:.4}",
        history.losses[0],
        history.losses.last().unwrap()
    );
    println!("{} embedding rows updated", table.modified_rows().count());

    let path = std::env::temp_dir().join("sensecnn-example-checkpoint.json");
    Checkpoint::from_model(&model, &data.label_set, &table, 2).save(&path)?;
    let ck = Checkpoint::load(&path)?;
    let restored = ck.to_model()?;
    let mut fresh = EmbeddingTable::random_init(16, 0.25, 99)?;
    ck.apply_embeddings(&mut fresh)?;

    let before = predict_all(&model, &data, &mut table)?;
    let after = predict_all(&restored, &data, &mut fresh)?;
    println!("checkpoint at {}", path.display());
    println!("predictions identical after reload: {}", before == after);
    Ok(())
}
