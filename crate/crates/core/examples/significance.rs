//! Mid-p McNemar test between two classifiers' predictions.

use sensecnn::eval::{mcnemar_midp, midp_value};

fn main() -> sensecnn::Result<()> {
    let golds = ["ep", "de", "dy", "ep", "ep", "de", "dy", "ep", "de", "ep"];
    let cnn = ["ep", "de", "dy", "ep", "de", "de", "dy", "ep", "de", "ep"];
    let majority = ["ep"; 10];
    let cmp = mcnemar_midp(&cnn, &majority, &golds)?;
    println!("cnn right / majority wrong: {}", cmp.b);
    println!("cnn wrong / majority right: {}", cmp.c);
    println!("mid-p {:.4}", cmp.midp);

    for (b, c) in [(5, 1), (1, 1), (30, 12), (400, 350)] {
        println!("midp({b}, {c}) = {:.6}", midp_value(b, c));
    }
    Ok(())
}
