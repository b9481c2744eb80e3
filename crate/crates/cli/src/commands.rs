use std::collections::BTreeMap;

use bayesdid::calibration::{builtin_regimes, fit_eb, realize_regime, ParamSpec, TABLE_REGIMES};
use bayesdid::design::{build_design, LinearModelSpec};
use bayesdid::effects::{att_parallel_trends, compose, trend_rows, AttSummary};
use bayesdid::model::fit_twfe;
use bayesdid::panel::{load_panel, write_panel};
use bayesdid::synth::{generate, SynthSpec};
use bayesdid::tipping::{monotonicity_check, sweep};
use bayesdid::{AttPosterior, EbEstimate, HyperSpec, PanelDataset, PosteriorDraws, PriorRegime, RegimeKind, SamplerConfig, Summary, TippingResult};
use serde::Serialize;

use crate::args::{RegimesArgs, RunArgs, SimulateArgs};
use crate::config::{read_toml, RunConfig};
use crate::error::CliError;
use crate::report::{self, coefficient_summaries, diagnostics_body, num, rhat_map, Envelope, OutputDir, VERSION};

struct Session {
    cfg: RunConfig,
    panel: PanelDataset,
    out: OutputDir,
}

impl Session {
    fn open(args: &RunArgs) -> Result<Session, CliError> {
        let cfg = RunConfig::resolve(args)?;
        let panel = load_panel(cfg.data_path()?, &cfg.columns, cfg.onset()?, cfg.log_transform)?;
        log::info!(
            "loaded {} observations over {} periods",
            panel.observations().len(),
            panel.num_periods()
        );
        let out = OutputDir::create(&cfg.output_dir)?;
        Ok(Session { cfg, panel, out })
    }

    fn stratum(&self) -> Option<&str> {
        self.cfg.stratum.as_deref()
    }

    fn envelope<'a, B: Serialize>(
        &'a self,
        command: &'a str,
        rhat: BTreeMap<String, bayesdid::Diagnostic>,
        body: B,
    ) -> Envelope<'a, RunConfig, B> {
        Envelope {
            command,
            version: VERSION,
            seed: self.cfg.seed,
            config: &self.cfg,
            rhat,
            body,
        }
    }

    /// TWFE fit and the parallel-trends effects built on it.
    fn fit_base(&self, sampler: &SamplerConfig) -> Result<(LinearModelSpec, PosteriorDraws, AttPosterior), CliError> {
        let design = build_design(&self.panel, self.stratum())?;
        let spec = LinearModelSpec::new(design, self.cfg.coefficient_prior_sd, self.cfg.noise_prior_scale)?;
        let draws = fit_twfe(&spec, self.cfg.noise_model()?, sampler)?;
        log::info!(
            "twfe fit: max split-rhat {:?}, {} divergences",
            draws.max_rhat(),
            draws.divergence_count
        );
        let base = att_parallel_trends(&self.panel, self.stratum(), &draws, sampler.seed)?;
        Ok((spec, draws, base))
    }

    fn eb_estimate(&self) -> Result<(Vec<f64>, EbEstimate), CliError> {
        let x = self.panel.pre_violation_series(self.stratum())?;
        let est = fit_eb(&x)?;
        Ok((x, est))
    }

    fn check_convergence<'a>(&self, runs: impl IntoIterator<Item = &'a PosteriorDraws>) -> Result<(), CliError> {
        if !self.cfg.strict_convergence {
            return Ok(());
        }
        let worst = runs
            .into_iter()
            .filter(|d| !d.converged())
            .filter_map(|d| d.max_rhat())
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
        match worst {
            Some(r) => Err(CliError::Convergence(format!(
                "max split-rhat {r:.4} >= {}; reports were written",
                bayesdid::sampler::RHAT_THRESHOLD
            ))),
            None => Ok(()),
        }
    }
}

fn scale_name(panel: &PanelDataset) -> &'static str {
    if panel.log_scale() {
        "log"
    } else {
        "raw"
    }
}

fn print_summary(label: &str, s: &Summary) {
    println!("{label:<28} {:>10.4}  [{:.4}, {:.4}]", s.mean, s.lower95, s.upper95);
}

#[derive(Serialize)]
struct FitBody<'a> {
    converged: bool,
    scale: &'static str,
    onset_period: usize,
    num_periods: usize,
    num_observations: usize,
    divergence_count: usize,
    coefficients: Vec<report::CoefficientSummary>,
    att: &'a AttSummary,
}

pub fn fit(args: &RunArgs) -> Result<(), CliError> {
    let s = Session::open(args)?;
    let sampler = s.cfg.sampler_config()?;
    let (spec, draws, base) = s.fit_base(&sampler)?;
    let att = base.summary();
    let rhat = rhat_map([("", &draws)]);

    let body = FitBody {
        converged: draws.converged(),
        scale: scale_name(&s.panel),
        onset_period: s.panel.onset_period(),
        num_periods: s.panel.num_periods(),
        num_observations: spec.design.num_rows(),
        divergence_count: draws.divergence_count,
        coefficients: coefficient_summaries(&draws),
        att: &att,
    };
    s.out.write_json("posterior_summary.json", &s.envelope("fit", rhat.clone(), body))?;
    s.out.write_json("diagnostics.json", &s.envelope("fit", rhat, diagnostics_body(&draws)))?;
    s.out
        .write_csv("trends.csv", &report::TREND_HEADER, &report::trend_records(&trend_rows(&base)))?;

    print_summary("pooled ATT", &att.pooled);
    print_summary("cumulative ATT at last period", &att.total_pt);
    s.check_convergence([&draws])
}

#[derive(Serialize)]
struct RegimeEntry {
    regime: String,
    kind: RegimeKind,
    hyper: Option<HyperSpec>,
    nonstationary_draws: usize,
    warning: Option<String>,
    /// Why the regime was not run, if it was skipped.
    skipped: Option<String>,
    att: Option<AttSummary>,
}

#[derive(Serialize)]
struct SensitivityBody<'a> {
    converged: bool,
    scale: &'static str,
    eb_estimate: Option<&'a EbEstimate>,
    parallel_trends: &'a AttSummary,
    regimes: Vec<RegimeEntry>,
}

fn csv_row(regime: &str, estimand: &str, period: String, s: &Summary, warning: &str) -> Vec<String> {
    vec![
        regime.to_string(),
        estimand.to_string(),
        period,
        num(s.mean),
        num(s.sd),
        num(s.lower95),
        num(s.upper95),
        warning.to_string(),
    ]
}

pub fn sensitivity(args: &RunArgs) -> Result<(), CliError> {
    let s = Session::open(args)?;
    let sampler = s.cfg.sampler_config()?;
    let regimes = s.cfg.regimes()?;
    let single = regimes.len() == 1;

    let eb = if regimes.iter().any(PriorRegime::needs_estimate) {
        match s.eb_estimate() {
            Ok((_, est)) => Some(Ok(est)),
            // With one requested regime the failure is the answer.
            Err(e) if single => return Err(e),
            Err(e) => Some(Err(e.to_string())),
        }
    } else {
        None
    };
    let eb_ok = eb.as_ref().and_then(|r| r.as_ref().ok());

    let (_, draws, base) = s.fit_base(&sampler)?;
    let pt = base.summary();
    let mut runs: Vec<(String, PosteriorDraws)> = Vec::new();
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for (k, q) in [("pooled", &pt.pooled), ("total", &pt.total_pt)] {
        rows.push(csv_row("parallel_trends", "parallel_trends", k.into(), q, ""));
    }
    for p in &pt.per_period {
        rows.push(csv_row("parallel_trends", "parallel_trends", p.period.to_string(), &p.pt, ""));
    }

    for regime in &regimes {
        if let Some(Err(reason)) = eb.as_ref().filter(|_| regime.needs_estimate()) {
            log::warn!("skipping {}: {reason}", regime.name);
            entries.push(RegimeEntry {
                regime: regime.name.clone(),
                kind: regime.kind,
                hyper: None,
                nonstationary_draws: 0,
                warning: None,
                skipped: Some(reason.clone()),
                att: None,
            });
            continue;
        }
        let hyper = realize_regime(regime, eb_ok)?;
        let att = compose(&base, &regime.name, &hyper, s.cfg.hyper_sampling, &sampler)?;
        let summary = att.summary();
        let info = att.violation.expect("composed posterior carries its regime");
        let warning = info.warning.clone().unwrap_or_default();
        if let Some(total) = &summary.total_violation {
            rows.push(csv_row(&regime.name, "violation", "total".into(), total, &warning));
        }
        for p in &summary.per_period {
            if let Some(v) = &p.violation {
                rows.push(csv_row(&regime.name, "violation", p.period.to_string(), v, &warning));
            }
        }
        if let Some(total) = &summary.total_violation {
            print_summary(&regime.name, total);
        }
        if let Some(d) = info.hyper_draws {
            runs.push((regime.name.clone(), d));
        }
        entries.push(RegimeEntry {
            regime: regime.name.clone(),
            kind: regime.kind,
            hyper: Some(info.hyper),
            nonstationary_draws: info.nonstationary_draws,
            warning: info.warning,
            skipped: None,
            att: Some(summary),
        });
    }

    let all_runs = || std::iter::once(&draws).chain(runs.iter().map(|(_, d)| d));
    let rhat = rhat_map(std::iter::once(("", &draws)).chain(runs.iter().map(|(n, d)| (n.as_str(), d))));
    let body = SensitivityBody {
        converged: all_runs().all(PosteriorDraws::converged),
        scale: scale_name(&s.panel),
        eb_estimate: eb_ok,
        parallel_trends: &pt,
        regimes: entries,
    };
    s.out.write_json("sensitivity_summary.json", &s.envelope("sensitivity", rhat, body))?;
    s.out.write_csv(
        "att_by_regime.csv",
        &["regime", "estimand", "period", "mean", "sd", "lower95", "upper95", "warning"],
        &rows,
    )?;
    s.check_convergence(all_runs())
}

#[derive(Serialize)]
struct EbBody<'a> {
    violation_series: &'a [f64],
    estimate: &'a EbEstimate,
}

pub fn eb(args: &RunArgs) -> Result<(), CliError> {
    let s = Session::open(args)?;
    let (x, est) = s.eb_estimate()?;
    s.out
        .write_json("eb_estimate.json", &s.envelope("eb", BTreeMap::new(), EbBody { violation_series: &x, estimate: &est }))?;
    println!(
        "eta_hat {}  rho_hat {:.4}  sigma_hat {:.4}  (n = {}{})",
        est.eta_hat.map_or("undefined".into(), |e| format!("{e:.4}")),
        est.rho_hat,
        est.sigma_hat,
        est.n_used,
        if est.stationary { "" } else { ", nonstationary" }
    );
    Ok(())
}

#[derive(Serialize)]
struct TippingBody<'a> {
    monotone: bool,
    parallel_trends_total: &'a Summary,
    eb_estimate: Option<&'a EbEstimate>,
    #[serde(flatten)]
    result: &'a TippingResult,
}

pub fn tipping(args: &RunArgs) -> Result<(), CliError> {
    let s = Session::open(args)?;
    let sampler = s.cfg.sampler_config()?;
    let template = s.cfg.single_regime()?;
    let grid = s.cfg.eta_grid()?;
    // only rho and sigma can still need the estimate; eta is swept
    let eb = if template.with_fixed_eta(0.0).needs_estimate() {
        Some(s.eb_estimate()?.1)
    } else {
        None
    };
    let (_, draws, base) = s.fit_base(&sampler)?;
    let result = sweep(&base, &template, eb.as_ref(), &grid, &sampler, s.cfg.baseline_ounces, s.cfg.tipping.bound)?;
    let pt = base.summary().total_pt;
    let monotone = monotonicity_check(&result);
    if !monotone {
        log::warn!("tipping curve is not monotone in eta beyond Monte Carlo error");
    }

    let body = TippingBody {
        monotone,
        parallel_trends_total: &pt,
        eb_estimate: eb.as_ref(),
        result: &result,
    };
    s.out.write_json("tipping.json", &s.envelope("tipping", rhat_map([("", &draws)]), body))?;
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| {
            vec![
                num(result.eta_grid[i]),
                num(result.means[i]),
                num(result.lower95[i]),
                num(result.upper95[i]),
                num(result.mc_se[i]),
            ]
        })
        .collect();
    s.out
        .write_csv("tipping_curve.csv", &["eta", "mean", "lower95", "upper95", "mc_se"], &rows)?;

    match result.eta_star {
        Some(e) => println!("{}: eta* = {e:.4} (fold change {:.4})", result.regime, bayesdid::effects::fold_change(e)),
        None => println!("{}: no crossing on the grid", result.regime),
    }
    s.check_convergence([&draws])
}

#[derive(Serialize)]
struct SimulateBody<'a> {
    truth: &'a bayesdid::GroundTruth,
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut spec: SynthSpec = match &args.spec {
        Some(path) => read_toml(path)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (panel, truth) = generate(&spec)?;
    let out = OutputDir::create(args.output_dir.as_deref().unwrap_or("out".as_ref()))?;
    let mut buf = Vec::new();
    write_panel(&panel, &mut buf)?;
    out.write_bytes("panel.csv", &buf)?;
    let envelope = Envelope {
        command: "simulate",
        version: VERSION,
        seed: Some(spec.seed),
        config: &spec,
        rhat: BTreeMap::new(),
        body: SimulateBody { truth: &truth },
    };
    out.write_json("ground_truth.json", &envelope)?;
    println!(
        "{} rows, onset {}, true ATT {}",
        panel.observations().len(),
        panel.onset_period(),
        truth.true_att
    );
    Ok(())
}

fn describe(spec: &ParamSpec, multiplier: f64) -> String {
    let base = match spec {
        ParamSpec::Fixed { value } => format!("{value}"),
        ParamSpec::Uniform { lower, upper } => format!("U({lower}, {upper})"),
        ParamSpec::Beta { alpha, beta } => format!("Beta({alpha}, {beta})"),
        ParamSpec::HalfNormal { scale } => format!("N+(0, {scale}^2)"),
        ParamSpec::Estimated => "EB".into(),
    };
    if multiplier == 1.0 {
        base
    } else {
        format!("{multiplier} x {base}")
    }
}

pub fn regimes(args: &RegimesArgs) -> Result<(), CliError> {
    let mut all = builtin_regimes();
    let mut ordered: Vec<PriorRegime> = TABLE_REGIMES.iter().filter_map(|n| all.remove(*n)).collect();
    ordered.extend(all.into_values());
    if args.json {
        let text = serde_json::to_string_pretty(&ordered).map_err(|e| CliError::Input(e.to_string()))?;
        println!("{text}");
        return Ok(());
    }
    println!("{:<8} {:<16} {:<18} {:<18} {:<18}", "name", "kind", "eta", "rho", "sigma");
    for r in &ordered {
        let m = r.scale_multipliers;
        let kind = match r.kind {
            RegimeKind::Fixed => "fixed",
            RegimeKind::FullyBayesian => "fully_bayesian",
            RegimeKind::EmpiricalBayes => "empirical_bayes",
        };
        println!(
            "{:<8} {:<16} {:<18} {:<18} {:<18}",
            r.name,
            kind,
            describe(&r.eta, m.eta),
            describe(&r.rho, m.rho),
            describe(&r.sigma, m.sigma)
        );
    }
    Ok(())
}
