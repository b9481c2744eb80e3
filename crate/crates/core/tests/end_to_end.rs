//! Synthetic panel through design, sampler and effects.

use bayesdid::calibration::{fit_eb, lookup_regime, realize_regime, ParamSpec, TABLE_REGIMES};
use bayesdid::design::{build_design, LinearModelSpec};
use bayesdid::effects::{att_parallel_trends, att_with_violation, compose, AttPosterior, HyperSampling};
use bayesdid::model::{fit_twfe, NoiseModel};
use bayesdid::synth::{generate, GroundTruth, SynthSpec};
use bayesdid::{Ar1Params, PanelDataset, PriorRegime, SamplerConfig};

fn fit(panel: &PanelDataset, noise: NoiseModel, seed: u64) -> AttPosterior {
    let model = LinearModelSpec::with_defaults(build_design(panel, None).unwrap());
    let config = SamplerConfig::with_seed(seed);
    let draws = fit_twfe(&model, noise, &config).unwrap();
    assert!(draws.converged(), "max R-hat {:?}", draws.max_rhat());
    att_parallel_trends(panel, None, &draws, seed).unwrap()
}

fn weekly(seed: u64, xi: Option<Ar1Params>) -> (PanelDataset, GroundTruth) {
    generate(&SynthSpec {
        num_periods: 26,
        onset_period: 14,
        true_att: -0.5,
        post_xi_params: xi,
        cell_noise_sd: 0.1,
        units_per_group: 4,
        seed,
        ..SynthSpec::default()
    })
    .unwrap()
}

#[test]
fn noiseless_panel_recovers_effect_exactly() {
    let (panel, _) = generate(&SynthSpec {
        cell_noise_sd: 0.0,
        seed: 1,
        ..SynthSpec::default()
    })
    .unwrap();
    let att = fit(&panel, NoiseModel::Fixed { sd: 1e-9 }, 1);
    for row in &att.per_period_pt {
        assert_eq!(row[0], 0.0);
        for psi in &row[1..] {
            assert!((psi + 0.5).abs() < 1e-6);
        }
    }
    assert!((att.summary().pooled.mean + 0.5).abs() < 1e-6);
}

#[test]
fn null_panel_covers_zero() {
    let (panel, _) = generate(&SynthSpec {
        true_att: 0.0,
        seed: 2,
        ..SynthSpec::default()
    })
    .unwrap();
    let s = fit(&panel, NoiseModel::Estimated, 2).summary();
    assert!(s.pooled.contains(0.0), "{:?}", s.pooled);
}

#[test]
fn identical_groups_center_beta_at_zero() {
    let (panel, _) = generate(&SynthSpec {
        true_att: 0.0,
        group_offset: 0.0,
        cell_noise_sd: 0.0,
        seed: 3,
        ..SynthSpec::default()
    })
    .unwrap();
    let s = fit(&panel, NoiseModel::Fixed { sd: 0.05 }, 3).summary();
    assert!(s.pooled.mean.abs() < s.pooled.width() / 2.0);
}

#[test]
fn interval_width_grows_with_innovation_scale() {
    let (panel, _) = weekly(4, None);
    let base = fit(&panel, NoiseModel::Estimated, 4);
    let config = SamplerConfig::with_seed(4);
    for family in [["Fixed-1", "Fixed-2", "Fixed-3"], ["Fully-1", "Fully-2", "Fully-3"]] {
        let widths: Vec<f64> = family
            .iter()
            .map(|name| {
                let v = att_with_violation(&base, &lookup_regime(name).unwrap(), None, &config).unwrap();
                v.summary().total_violation.unwrap().width()
            })
            .collect();
        assert!(widths[0] < widths[1] && widths[1] < widths[2], "{family:?}: {widths:?}");
    }
    let fixed = att_with_violation(&base, &lookup_regime("Fixed-1").unwrap(), None, &config).unwrap();
    let fully = att_with_violation(&base, &lookup_regime("Fully-1").unwrap(), None, &config).unwrap();
    assert!(fully.summary().total_violation.unwrap().width() > fixed.summary().total_violation.unwrap().width());
}

#[test]
fn all_table_regimes_run_with_an_estimate() {
    let (panel, _) = weekly(5, None);
    let base = fit(&panel, NoiseModel::Estimated, 5);
    let eb = fit_eb(&panel.pre_violation_series(None).unwrap()).unwrap();
    let config = SamplerConfig::with_seed(5);
    for name in TABLE_REGIMES {
        let v = att_with_violation(&base, &lookup_regime(name).unwrap(), Some(&eb), &config).unwrap();
        assert_eq!(v.total_violation.len(), base.num_draws());
        assert!(v.total_violation.iter().all(|x| x.is_finite()), "{name}");
    }
}

#[test]
fn violation_intervals_cover_truth_with_true_hyperparameters() {
    let truth_params = Ar1Params::new(0.05, 0.5, 0.05);
    let regime = PriorRegime {
        name: "truth".into(),
        eta: ParamSpec::Fixed { value: truth_params.eta },
        rho: ParamSpec::Fixed { value: truth_params.rho },
        sigma: ParamSpec::Fixed { value: truth_params.sigma },
        ..lookup_regime("Fixed-1").unwrap()
    };
    let mut covered = 0;
    let runs = 12;
    for seed in 0..runs {
        let (panel, truth) = weekly(100 + seed, Some(truth_params));
        let base = fit(&panel, NoiseModel::Estimated, 100 + seed);
        let v = att_with_violation(&base, &regime, None, &SamplerConfig::with_seed(seed)).unwrap();
        if v.summary().total_violation.unwrap().contains(truth.true_att) {
            covered += 1;
        }
    }
    // nominal 95%; 9 of 12 has probability below 3% under the nominal rate
    assert!(covered >= 10, "covered {covered} of {runs}");
}

#[test]
fn hmc_and_direct_hyperparameter_draws_agree() {
    let (panel, _) = weekly(6, None);
    let base = fit(&panel, NoiseModel::Estimated, 6);
    let hyper = realize_regime(&lookup_regime("Fully-2").unwrap(), None).unwrap();
    let config = SamplerConfig::with_seed(6);
    let a = compose(&base, "direct", &hyper, HyperSampling::Direct, &config).unwrap();
    let b = compose(&base, "hmc", &hyper, HyperSampling::Hmc, &config).unwrap();
    let (sa, sb) = (a.summary().total_violation.unwrap(), b.summary().total_violation.unwrap());
    assert!((sa.mean - sb.mean).abs() < 0.15 * sa.sd, "{sa:?} vs {sb:?}");
    assert!((sa.width() / sb.width() - 1.0).abs() < 0.1);
}
