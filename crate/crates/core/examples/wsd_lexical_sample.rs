//! Lexical-sample WSD for one word: region sizes are tuned on an 80:20
//! split, then the chosen CNN is scored against the majority sense.

use sensecnn::dataset::{synth_cue_dataset, CueSpec, Dataset};
use sensecnn::embeddings::EmbeddingTable;
use sensecnn::harness::{run_wsd_group, ExperimentSpec, Mode};

fn word_data(n_per_sense: usize, seed: u64) -> sensecnn::Result<Dataset> {
    let cue = CueSpec::random(3, 80, 9, n_per_sense, false, 9);
    let mut ds = synth_cue_dataset(&cue, seed)?;
    for inst in &mut ds.instances {
        inst.tokens[0] = "bank".into();
        inst.label = format!("bank%{}", inst.label);
    }
    Ok(Dataset::new(ds.instances))
}

fn main() -> sensecnn::Result<()> {
    let train_data = word_data(25, 1)?;
    let test = word_data(8, 2)?;

    let mut spec = ExperimentSpec::new(Mode::Wsd);
    spec.embedding_dim = 20;
    spec.maps_per_size = 10;
    spec.iterations = Some(500);
    spec.tune = true;

    let mut table = EmbeddingTable::random_init(20, 0.25, 1)?;
    table.warm(
        train_data
            .instances
            .iter()
            .chain(&test.instances)
            .map(|i| &i.tokens),
    );
    let outcome = run_wsd_group(&spec, "bank", &train_data, &test, &table)?;
    if let Some(t) = &outcome.tuned {
        for s in &t.scores {
            println!(
                "region sizes {:?}: held-out accuracy {:.3}",
                s.region_sizes, s.accuracy
            );
        }
        println!("chosen {:?}", t.chosen);
    }
    println!(
        "cnn {:.3}, majority {:.3}",
        outcome.results[0].accuracy, outcome.results[1].accuracy
    );
    Ok(())
}
