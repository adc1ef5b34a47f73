//! Loads word vectors in the text format and shows OOV handling.

use sensecnn::embeddings::load_embeddings;

const VECTORS: &str = "3 4
can 0.1 -0.2 0.3 0.05
must -0.3 0.2 0.1 0.4
may 0.25 0.1 -0.15 -0.2
";

fn main() -> sensecnn::Result<()> {
    let mut table = load_embeddings(VECTORS.as_bytes(), 4, 7)?;
    println!(
        "{} pre-trained rows, OOV bound {:.4}",
        table.pretrained_len(),
        table.oov_bound()
    );
    for token in ["can", "should", "should"] {
        let row = table.resolve(token);
        println!("{token:>7} -> row {row} {:?}", table.row(row));
    }
    println!("{} OOV rows", table.oov_len());
    Ok(())
}
