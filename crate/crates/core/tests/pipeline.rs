use cmpkit_core::fit::{fit, initial_guess, symmetrize, FitProblem};
use cmpkit_core::spectrum::{extract_branches, synthesize, ExtractOptions};
use cmpkit_core::{BranchLabel, DispersionParams, FmrParams, GridSpec, Model, SynthConfig};

fn grid() -> GridSpec {
    GridSpec { field_start: -0.4, field_stop: 0.4, field_steps: 201, freq_start: 0.0, freq_stop: 18.0, freq_steps: 401 }
}

fn run(seed: u64) -> (f64, f64, f64) {
    let truth = DispersionParams::shifted(4.46, 2.03, 2.39);
    let fmr = FmrParams::yig_slab();
    let config = SynthConfig { dm_freq: 1.38, snr_db: Some(40.0), seed, ..SynthConfig::default() };
    let spec = synthesize(&truth, &fmr, &config, &grid()).unwrap();
    let ex = extract_branches(&spec, &ExtractOptions::default()).unwrap();
    assert!(ex.data.count(BranchLabel::Lower) > 50, "{}", ex.data.count(BranchLabel::Lower));
    assert!(ex.data.count(BranchLabel::Upper) > 100);
    let dark = ex.dark_freq.expect("dark mode found");
    assert!((dark - 1.38).abs() < 0.05, "{dark}");

    let data = symmetrize(&ex.data);
    let guess = initial_guess(&data).unwrap();
    let res = fit(&FitProblem::new(data, Model::ShiftedDicke, fmr, guess)).unwrap();
    assert!(res.converged, "{res:?}");
    (
        (res.params.f_bm - 4.46).abs() / 4.46,
        (res.params.g - 2.03).abs() / 2.03,
        (res.params.delta_m - 2.39).abs() / 2.39,
    )
}

#[test]
fn synthesize_extract_fit_recovers_parameters() {
    for seed in [1, 2, 3] {
        let (e_bm, e_g, e_dm) = run(seed);
        assert!(e_bm < 0.03 && e_g < 0.03 && e_dm < 0.03, "seed {seed}: {e_bm} {e_g} {e_dm}");
    }
}

#[test]
fn pipeline_is_deterministic() {
    let truth = DispersionParams::shifted(4.46, 2.03, 2.39);
    let config = SynthConfig { dm_freq: 1.38, snr_db: Some(40.0), seed: 9, ..SynthConfig::default() };
    let a = synthesize(&truth, &FmrParams::yig_slab(), &config, &grid()).unwrap();
    let b = synthesize(&truth, &FmrParams::yig_slab(), &config, &grid()).unwrap();
    assert_eq!(a, b);
    let ea = extract_branches(&a, &ExtractOptions::default()).unwrap();
    let eb = extract_branches(&b, &ExtractOptions::default()).unwrap();
    assert_eq!(ea, eb);
}
