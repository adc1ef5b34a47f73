//! Trains a CNN on sentences whose class is marked by a cue trigram, then
//! lists the n-grams that most strongly activate a few filters.

use sensecnn::cnn::{Cnn, CnnConfig};
use sensecnn::dataset::{synth_cue_dataset, CueSpec};
use sensecnn::embeddings::EmbeddingTable;
use sensecnn::introspect::analyze;
use sensecnn::numerics::SeededRng;
use sensecnn::optim::{train, Model, TrainConfig};

fn main() -> sensecnn::Result<()> {
    let cue = CueSpec::random(3, 100, 10, 60, false, 5);
    let data = synth_cue_dataset(&cue, 5)?;
    for (label, trigram) in cue.labels.iter().zip(&cue.cues) {
        println!("cue for {label}: {}", trigram.join(" "));
    }

    let mut table = EmbeddingTable::random_init(30, 0.25, 5)?;
    let cfg = CnnConfig {
        maps_per_size: 10,
        ..CnnConfig::new(30, 3)
    };
    let mut model = Model::Cnn(Cnn::new(cfg, &mut SeededRng::new(5))?);
    let history = train(&mut model, &data, &mut table, &TrainConfig::cnn_default(5))?;
    println!("training accuracy {:.3}", history.train_accuracy);

    let Model::Cnn(cnn) = &model else {
        unreachable!()
    };
    let report = analyze(cnn, &data, &mut table, 3)?;
    for (filter, hits) in report.hits.iter().take(4) {
        let ngrams: Vec<String> = hits
            .iter()
            .map(|h| format!("{} ({})", h.ngram.join(" "), h.label))
            .collect();
        println!("filter {filter}: {}", ngrams.join(" | "));
    }
    Ok(())
}
