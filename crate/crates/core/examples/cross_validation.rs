//! Five-fold stratified cross-validation of a small CNN against the
//! majority and random baselines on a synthetic cue corpus.

use sensecnn::dataset::{synth_cue_dataset, CueSpec, Dataset};
use sensecnn::embeddings::EmbeddingTable;
use sensecnn::harness::{run_cv_group, systems, ExperimentSpec, Mode, ModelKind};

fn main() -> sensecnn::Result<()> {
    let cue = CueSpec::random(3, 60, 10, 30, false, 3);
    let data = synth_cue_dataset(&cue, 3)?;

    let mut spec = ExperimentSpec::new(Mode::Cv);
    spec.embedding_dim = 20;
    spec.region_sizes = vec![2, 3, 4];
    spec.maps_per_size = 20;
    spec.iterations = Some(300);
    spec.compare = vec![ModelKind::Majority, ModelKind::Random];

    let mut table = EmbeddingTable::random_init(20, 0.25, 3)?;
    table.warm(data.instances.iter().map(|i| &i.tokens));
    let outcome = run_cv_group(&spec, "all", &data, &Dataset::new(Vec::new()), &table)?;
    for (kind, r) in systems(&spec).iter().zip(&outcome.results) {
        println!(
            "{:>8}: {}/{} = {:.3}",
            kind.name(),
            r.correct,
            r.n,
            r.accuracy
        );
    }
    Ok(())
}
