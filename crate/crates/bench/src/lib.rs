//! Fixtures shared by the benchmarks.

use bayesdid::design::{build_design, LinearModelSpec};
use bayesdid::synth::{generate, SynthSpec};
use bayesdid::{Ar1Params, PanelDataset};

/// A panel shaped like a weekly retail series: 26 periods, onset at 14.
pub fn retail_panel(units_per_group: usize, seed: u64) -> PanelDataset {
    let spec = SynthSpec {
        num_periods: 26,
        onset_period: 14,
        true_att: -0.5,
        post_xi_params: Some(Ar1Params::new(0.2, 0.6, 0.05)),
        cell_noise_sd: 0.1,
        units_per_group,
        seed,
        ..SynthSpec::default()
    };
    generate(&spec).expect("fixture spec is valid").0
}

pub fn retail_model(units_per_group: usize, seed: u64) -> (PanelDataset, LinearModelSpec) {
    let panel = retail_panel(units_per_group, seed);
    let design = build_design(&panel, None).expect("fixture design has full rank");
    (panel, LinearModelSpec::with_defaults(design))
}
