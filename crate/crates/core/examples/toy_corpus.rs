//! Writes the bundled toy corpus as CoNLL-U.
//!
//! ```text
//! cargo run -p termset-core --example toy_corpus > crates/core/data/toy.conllu
//! ```

use termset_core::corpus::write_conllu;
use termset_core::synth::{toy_corpus, TOY_SEED, TOY_SENTENCES};

fn main() {
    print!("{}", write_conllu(&toy_corpus(TOY_SEED, TOY_SENTENCES)));
}
