//! Regenerates the training corpus of the golden dataset.
//!
//! ```text
//! cargo run -p suaex --example golden_corpus > data/golden/corpus.txt
//! ```

use std::io::{self, BufWriter, Write};

use suaex::synthetic::TopicDomain;

const SENTENCES: usize = 3000;
const SEED: u64 = 20;

fn main() -> io::Result<()> {
    let mut out = BufWriter::new(io::stdout().lock());
    for (text, _) in TopicDomain::restaurant().sentences(SENTENCES, SEED) {
        writeln!(out, "{text}")?;
    }
    out.flush()
}
