//! Regenerate `weights/demo_weights.json`.

use centaur_core::rnn::{generate_demo_bank, DEMO_SEED};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/weights/demo_weights.json");
    std::fs::write(path, generate_demo_bank(DEMO_SEED).to_json() + "\n").expect("write weights");
    println!("wrote {path}");
}
