//! Regenerate the regression files in `testdata/`. Run only after the
//! oracle suites pass.

use centaur_core::config::ComponentConfig;
use centaur_core::pedal::PedalParams;
use centaur_core::render::render_wav;
use centaur_core::rnn::ModelBank;
use centaur_core::signal::guitar_like;
use centaur_core::wav::{self, Encoding};

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/testdata");
    std::fs::create_dir_all(dir).expect("create testdata");
    let input = guitar_like(2024, 5.0, 44100.0, 0.5);
    let input = wav::write_bytes(44100, Encoding::Float32, &input).expect("encode");
    let out = render_wav(&input, &PedalParams::default(), &ComponentConfig::canonical(), &ModelBank::demo())
        .expect("render");
    std::fs::write(format!("{dir}/guitar_5s.wav"), &input).expect("write input");
    std::fs::write(format!("{dir}/guitar_5s_traditional_g05.wav"), &out.wav).expect("write golden");
    println!("wrote {dir}");
}
