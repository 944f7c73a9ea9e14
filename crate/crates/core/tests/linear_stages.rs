//! Linear sections against small-signal analysis of their circuits and a
//! plain recurrence.

use centaur_core::analysis::{freq_response, log_frequencies, ProbeSettings};
use centaur_core::config::ComponentConfig;
use centaur_core::linear::{
    bilinear_transform, process_first_order, stage_coeffs, tone_analog_prototype, AnalogFirstOrder,
    FilterState, FirstOrderFilter, StageConfig, StageId, ToneComponents,
};
use centaur_core::signal::white_noise;
use centaur_oracle::mna::Netlist;
use centaur_oracle::scalar::first_order_recurrence;
use proptest::prelude::*;

const FS: f64 = 44100.0;

fn tone_netlist(c: &ComponentConfig, treble: f64) -> String {
    let g = |n: &str| c.get(n).unwrap();
    let rv2 = g("RV2");
    format!(
        "Vin in 0 IN\n\
         RA in x {}\n\
         RB x out {}\n\
         C14 x m {}\n\
         R22 in m {}\n\
         R24 m out {}\n\
         O1 out 0 m\n",
        g("R21") + treble * rv2,
        g("R23") + (1.0 - treble) * rv2,
        g("C14"),
        g("R22"),
        g("R24"),
    )
}

fn stage_netlist(c: &ComponentConfig, stage: StageId, rv1_lower: f64) -> String {
    let g = |n: &str| c.get(n).unwrap();
    match stage {
        StageId::InputBuffer => format!("Vin in 0 IN\nC1 in a {}\nR2 a 0 {}\nO1 out a out\n", g("C1"), g("R2")),
        StageId::OutputBuffer => format!("Vin in 0 IN\nC20 in out {}\nR28 out 0 {}\n", g("C20"), g("R28")),
        StageId::AmpStage => format!(
            "Vin in 0 IN\nO1 out in m\nR9 m 0 {}\nR10 m h {}\nRV1 h out {}\nC7 m out {}\n",
            g("R9"),
            g("R10"),
            rv1_lower,
            g("C7")
        ),
        StageId::SummingAmp => format!(
            "Vin in 0 IN\nR19 in m {}\nO1 out 0 m\nR20 m out {}\nC12 m out {}\n",
            g("R19"),
            g("R20"),
            g("C12")
        ),
        StageId::Tone => tone_netlist(c, 0.5),
    }
}

fn rel(a: num_complex::Complex64, b: num_complex::Complex64) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn tone_prototype_matches_circuit_analysis() {
    let config = ComponentConfig::canonical();
    let parts = ToneComponents::from_config(&config).unwrap();
    for treble in [0.0, 0.1, 0.5, 0.9, 1.0] {
        let net = Netlist::parse(&tone_netlist(&config, treble)).unwrap();
        let proto = tone_analog_prototype(&parts, treble).unwrap();
        for f in log_frequencies(10.0, 40000.0, 60) {
            let e = rel(proto.response(f), net.ac_voltage("out", f));
            assert!(e < 1e-9, "treble {treble} f {f}: {e}");
        }
    }
}

#[test]
fn every_stage_prototype_matches_circuit_analysis() {
    let config = ComponentConfig::canonical();
    for stage in StageId::ALL {
        let cfg = match stage {
            StageId::Tone => StageConfig::tone(&config, 0.5).unwrap(),
            StageId::AmpStage => StageConfig::amp_stage(&config, 37e3).unwrap(),
            s => StageConfig::from_config(s, &config).unwrap(),
        };
        let proto = cfg.prototype().unwrap();
        let net = Netlist::parse(&stage_netlist(&config, stage, 37e3)).unwrap();
        for f in log_frequencies(5.0, 40000.0, 40) {
            let e = rel(proto.response(f), net.ac_voltage("out", f));
            assert!(e < 1e-9, "{stage} at {f} Hz: {e}");
        }
    }
}

fn db(x: f64) -> f64 {
    20.0 * x.log10()
}

#[test]
fn digital_tone_within_one_db_of_analog_to_10k() {
    let config = ComponentConfig::canonical();
    let parts = ToneComponents::from_config(&config).unwrap();
    let freqs = log_frequencies(20.0, 10000.0, 40);
    for treble in [0.0, 0.5, 1.0] {
        let net = Netlist::parse(&tone_netlist(&config, treble)).unwrap();
        let coeffs = bilinear_transform(tone_analog_prototype(&parts, treble).unwrap(), FS).unwrap();
        let probed = freq_response(
            || {
                let mut f = FirstOrderFilter::new(coeffs);
                move |b: &mut [f64]| f.process(b)
            },
            &freqs,
            FS,
            ProbeSettings::default(),
        )
        .unwrap();
        for (k, &f) in freqs.iter().enumerate() {
            let analog = db(net.ac_voltage("out", f).norm());
            let exact = db(coeffs.response(f).norm());
            assert!((exact - analog).abs() < 1.0, "treble {treble} f {f}");
            assert!((probed.magnitudes_db[k] - exact).abs() < 0.01, "probe at {f}");
        }
    }
}

#[test]
fn treble_cuts_highs_monotonically() {
    // Turning treble up lowers the 10 kHz level with this wiper orientation.
    let parts = ToneComponents::default();
    let level = |t: f64| db(tone_analog_prototype(&parts, t).unwrap().response(10e3).norm());
    let mut prev = f64::INFINITY;
    for k in 0..=10 {
        let l = level(k as f64 / 10.0);
        assert!(l < prev);
        prev = l;
    }
}

#[test]
fn filter_equals_plain_recurrence() {
    let config = ComponentConfig::canonical();
    let x = white_noise(21, 10000, 1.0);
    for stage in [StageId::InputBuffer, StageId::OutputBuffer, StageId::SummingAmp] {
        let c = stage_coeffs(&StageConfig::from_config(stage, &config).unwrap(), FS).unwrap();
        let expect = first_order_recurrence(c.b0, c.b1, c.a1, &x);
        let mut y = x.clone();
        process_first_order(&c, &mut FilterState::default(), &mut y);
        assert_eq!(y, expect);
    }
}

#[test]
fn rc_corner_is_three_db_down() {
    // 1 kOhm / 1 uF high-pass probed at its corner, with the corner prewarped.
    let proto = AnalogFirstOrder::new(1e-3, 0.0, 1e-3, 1.0).unwrap();
    let fc = 1.0 / (2.0 * std::f64::consts::PI * 1e-3);
    let c = bilinear_transform(proto, FS).unwrap();
    let m = db(c.response(fc).norm());
    assert!((m + 3.0103).abs() < 0.01, "{m}");
}

proptest! {
    #[test]
    fn filtering_is_linear(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        seed in 0u64..1000,
    ) {
        let c = stage_coeffs(
            &StageConfig::tone(&ComponentConfig::canonical(), 0.3).unwrap(),
            FS,
        ).unwrap();
        let x = white_noise(seed, 256, 1.0);
        let y = white_noise(seed + 1, 256, 1.0);
        let run = |s: &[f64]| {
            let mut v = s.to_vec();
            process_first_order(&c, &mut FilterState::default(), &mut v);
            v
        };
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (fx, fy, fm) = (run(&x), run(&y), run(&mix));
        for i in 0..256 {
            prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn filtering_is_block_invariant(cut in 1usize..999, seed in 0u64..1000) {
        let c = stage_coeffs(&StageConfig::from_config(StageId::InputBuffer, &ComponentConfig::canonical()).unwrap(), FS).unwrap();
        let x = white_noise(seed, 1000, 1.0);
        let mut whole = x.clone();
        process_first_order(&c, &mut FilterState::default(), &mut whole);
        let mut split = x.clone();
        let mut st = FilterState::default();
        let (l, r) = split.split_at_mut(cut);
        process_first_order(&c, &mut st, l);
        process_first_order(&c, &mut st, r);
        prop_assert_eq!(whole, split);
    }
}
