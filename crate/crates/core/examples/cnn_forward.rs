//! One forward pass through the sentence CNN, printing the pooled features
//! and where each filter fired.

use sensecnn::cnn::{Cnn, CnnConfig};
use sensecnn::embeddings::EmbeddingTable;
use sensecnn::numerics::SeededRng;

fn main() -> sensecnn::Result<()> {
    let mut table = EmbeddingTable::random_init(8, 0.25, 1)?;
    let tokens: Vec<String> = "you can leave whenever you like"
        .split(' ')
        .map(String::from)
        .collect();
    let sm = table.embed_sentence(&tokens)?;

    let cfg = CnnConfig {
        region_sizes: vec![2, 3],
        maps_per_size: 2,
        ..CnnConfig::new(8, 3)
    };
    let cnn = Cnn::new(cfg, &mut SeededRng::new(2))?;
    let trace = cnn.forward(&sm, None)?;
    for (f, id) in cnn.config.filter_ids().into_iter().enumerate() {
        let start = trace.argmax_pos[f];
        let end = (start + id.region_size).min(tokens.len());
        println!(
            "filter {id}: pooled {:.4} at {:?}",
            trace.pooled[f],
            &tokens[start.min(tokens.len())..end]
        );
    }
    println!("probs {:?}", trace.probs);
    println!("predicted class {}", cnn.predict(&sm)?);
    Ok(())
}
