//! Experiment orchestration and result files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ProblemKind, QuadraticRuleKind, Regime, WindowKindName, WindowSpec};
use crate::constants::{derive_constants, DerivedConstants, ProblemConstants};
use crate::dataset::{load_csv, Provenance, Sample};
use crate::error::{Error, Result};
use crate::hypergrad::{WeightKind, WeightWindow};
use crate::inner::{contraction_beta, InnerSchedule, KRule};
use crate::linalg::Vector;
use crate::driver::{full_info_run, Oagd, StepSizeSchedule, Trace};
use crate::par;
use crate::problems::{
    elastic_net_stream, ho_stream, ho_stream_from_samples, mean_squared_error, quadratic_constants, quadratic_stream,
    synthesize, CoefficientRule, SyntheticStreamConfig,
};
use crate::regret::{compute_report, OracleOptions, RegretReport, ReportOptions};
use crate::round::{DecisionPair, Stream};
use crate::set::FeasibleSet;

/// A materialized problem: the round stream plus whatever the report needs.
#[derive(Debug, Clone)]
pub struct Problem {
    pub stream: Stream,
    pub d2: usize,
    /// Constants known for the family, before config overrides.
    pub constants: Option<ProblemConstants>,
    /// Held-out samples for a test error, when the problem has them.
    pub test: Vec<Sample>,
    pub dataset: Option<Provenance>,
}

fn quadratic_rule(cfg: &ExperimentConfig) -> Result<(CoefficientRule, f64)> {
    let rule = cfg.rule.ok_or_else(|| Error::Config("missing rule".into()))?;
    Ok(match rule {
        QuadraticRuleKind::AltSqrt => (CoefficientRule::AltSqrt { outer_tracks_inner: true }, 1.0),
        QuadraticRuleKind::AltSqrtFixedOuter => (CoefficientRule::AltSqrt { outer_tracks_inner: false }, 1.0),
        QuadraticRuleKind::Constant => {
            let (a1, a2) = (cfg.a1.unwrap_or(0.0), cfg.a2.unwrap_or(0.0));
            (
                CoefficientRule::Constant {
                    a1,
                    a2,
                    a3: cfg.a3.unwrap_or(0.0),
                    a4: cfg.a4.unwrap_or(0.0),
                },
                a1.abs().max(a2.abs()),
            )
        }
        QuadraticRuleKind::AltOuter => {
            let amplitude = cfg.amplitude.unwrap_or(0.0);
            let a2 = cfg.a2.unwrap_or(0.0);
            (CoefficientRule::AltOuter { amplitude, a2 }, amplitude.abs().max(a2.abs()))
        }
    })
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    cfg.validate()?;
    let set = cfg.feasible_set()?;
    match cfg.problem {
        ProblemKind::Quadratic => {
            let (rule, bound) = quadratic_rule(cfg)?;
            Ok(Problem {
                stream: quadratic_stream(&rule, cfg.horizon)?,
                d2: 1,
                constants: quadratic_constants(&set, bound).ok(),
                test: Vec::new(),
                dataset: None,
            })
        }
        ProblemKind::Ho | ProblemKind::ElasticNet => {
            let path = cfg.dataset.as_ref().expect("validated");
            let label = cfg.label_column.as_deref().expect("validated");
            let table = load_csv(path, label, cfg.shuffle_seed)?;
            let stream = if cfg.problem == ProblemKind::Ho {
                ho_stream(&table, cfg.d1, cfg.horizon)?
            } else {
                elastic_net_stream(&table, cfg.d1, cfg.mu_smooth.expect("validated"), cfg.horizon)?
            };
            Ok(Problem {
                stream,
                d2: table.feature_dim(),
                constants: None,
                test: table.test().to_vec(),
                dataset: Some(table.provenance().clone()),
            })
        }
        ProblemKind::Synthetic => {
            let d2 = cfg.d2.expect("validated");
            let mut sc = SyntheticStreamConfig::equal_stages(cfg.horizon, cfg.stages.expect("validated"), cfg.d1, d2, cfg.seed)?;
            if let Some(n) = cfg.noise_max {
                sc.noise_max = n;
            }
            let data = synthesize(&sc)?;
            Ok(Problem {
                stream: ho_stream_from_samples(&data.train, &data.val, cfg.d1, cfg.horizon)?,
                d2,
                constants: None,
                test: Vec::new(),
                dataset: None,
            })
        }
    }
}

/// Where each schedule value came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleProvenance {
    pub regime: Regime,
    pub step_rule: String,
    pub alpha_1: f64,
    pub k_rule: String,
    pub k_1: usize,
    pub k_max: usize,
    pub beta: f64,
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Schedules {
    pub steps: StepSizeSchedule,
    pub inner: InnerSchedule,
    pub constants: Option<ProblemConstants>,
    pub derived: Option<DerivedConstants>,
    pub provenance: ScheduleProvenance,
}

pub fn weight_window(cfg: &ExperimentConfig, w: usize) -> Result<WeightWindow> {
    let kind = match cfg.window_kind {
        WindowKindName::Uniform => WeightKind::Uniform,
        WindowKindName::Exponential => WeightKind::Exponential {
            gamma: cfg.gamma.unwrap_or(1.0),
        },
    };
    WeightWindow::new(kind, w)
}

pub fn build_schedules(
    cfg: &ExperimentConfig,
    problem: &Problem,
    set: &FeasibleSet,
    window: &WeightWindow,
) -> Result<Schedules> {
    let constants = cfg.constants(problem.constants);
    let derived = constants.as_ref().map(derive_constants).transpose()?;
    let need = |what: &str| {
        Error::Config(format!(
            "regime {:?} needs problem constants (ell_f0, ell_f1, ell_g1, ell_g2, mu_g{what}) or explicit alpha, beta and k",
            cfg.regime
        ))
    };
    let fully_manual = cfg.alpha.is_some() && cfg.beta.is_some() && cfg.k.is_some();

    let (steps, rule) = if cfg.regime == Regime::Manual || (fully_manual && derived.is_none()) {
        (
            StepSizeSchedule::Constant(cfg.alpha.expect("validated")),
            KRule::Fixed(cfg.k.expect("validated")),
        )
    } else {
        let (c, d) = match (constants.as_ref(), derived.as_ref()) {
            (Some(c), Some(d)) => (c, d),
            _ => return Err(need("")),
        };
        match cfg.regime {
            Regime::StronglyConvex => {
                let (s, cc) = StepSizeSchedule::strongly_convex_dynamic(c, d).map_err(|_| need(", mu_f"))?;
                (s, KRule::StronglyConvex { c: cc })
            }
            Regime::StronglyConvexStatic => {
                let s = StepSizeSchedule::strongly_convex_static(c).map_err(|_| need(", mu_f"))?;
                (s, KRule::StronglyConvexStatic { mu_f: c.mu_f_required()? })
            }
            Regime::ConvexDynamic => (StepSizeSchedule::Constant(1.0 / (2.0 * d.l_f * d.l_f)), KRule::ConvexLogT),
            Regime::ConvexStatic => (StepSizeSchedule::convex_static(c, set)?, KRule::ConvexLogT),
            Regime::Nonconvex => {
                let s = StepSizeSchedule::nonconvex(d);
                let alpha = cfg.alpha.unwrap_or(s.alpha_at(1));
                (s, KRule::nonconvex(d, alpha, window.total()))
            }
            Regime::Manual => unreachable!(),
        }
    };
    let steps = match cfg.alpha {
        Some(a) => StepSizeSchedule::Constant(a),
        None => steps,
    };
    let rule = match cfg.k {
        Some(k) => KRule::Fixed(k),
        None => rule,
    };
    let mut inner = match (constants.as_ref(), derived) {
        (Some(c), Some(d)) => InnerSchedule::from_constants(c, d, rule),
        _ => {
            let mut s = InnerSchedule::fixed(cfg.beta.expect("manual schedules carry beta"), 1);
            s.rule = rule;
            s
        }
    };
    if let Some(b) = cfg.beta {
        inner = inner.with_beta(b);
    }
    if let Some(m) = cfg.k_max {
        inner = inner.with_k_max(m);
    }
    steps.validate()?;
    inner.validate()?;
    let provenance = ScheduleProvenance {
        regime: cfg.regime,
        step_rule: steps.name().to_string(),
        alpha_1: steps.alpha_at(1),
        k_rule: inner.rule.name().to_string(),
        k_1: inner.k_at(1)?.k,
        k_max: inner.k_max,
        beta: inner.beta,
        overrides: cfg.overrides().into_iter().map(String::from).collect(),
    };
    debug_assert!(constants.is_none() || cfg.beta.is_some() || inner.beta == contraction_beta(constants.as_ref().unwrap()));
    Ok(Schedules {
        steps,
        inner,
        constants,
        derived,
        provenance,
    })
}

pub fn initial_pair(cfg: &ExperimentConfig, set: &FeasibleSet, d2: usize) -> DecisionPair {
    let mut init = DecisionPair::default_for(set, d2);
    if let Some(x) = cfg.init_x {
        init.x = Vector::from_element(set.dim(), x);
    }
    if let Some(y) = cfg.init_y {
        init.y = Vector::from_element(d2, y);
    }
    init
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub window: usize,
    pub trace: Trace,
    pub report: RegretReport,
    pub baseline: Option<(Trace, RegretReport)>,
    /// Mean squared error of the final follower on held-out samples.
    pub test_error: Option<f64>,
    pub schedules: Schedules,
}

pub fn report_options(cfg: &ExperimentConfig) -> ReportOptions {
    ReportOptions {
        oracle: OracleOptions {
            inner_tol: cfg.inner_tol,
            outer_tol: cfg.outer_tol,
            ..OracleOptions::default()
        },
        compute_dynamic: cfg.report_dynamic,
        compute_static: cfg.report_static,
        compute_local: cfg.report_local,
        compute_h: cfg.report_h,
        h_samples: cfg.h_samples,
        exec: cfg.execution,
    }
}

pub fn run_with_window(cfg: &ExperimentConfig, problem: &Problem, w: usize) -> Result<RunOutcome> {
    let set = cfg.feasible_set()?;
    let window = weight_window(cfg, w)?;
    let schedules = build_schedules(cfg, problem, &set, &window)?;
    let init = initial_pair(cfg, &set, problem.d2);
    let oagd = Oagd {
        set: set.clone(),
        window: window.clone(),
        steps: schedules.steps.clone(),
        inner: schedules.inner.clone(),
        exec: cfg.execution,
    };
    let trace = oagd.run(&problem.stream, &init, cfg.horizon)?;
    let opts = report_options(cfg);
    let report = compute_report(&trace, &problem.stream, &set, &window, &opts)?;
    let baseline = if cfg.baseline {
        let b = full_info_run(&problem.stream, &init, &set, cfg.horizon, &opts.oracle)?;
        let r = compute_report(&b, &problem.stream, &set, &window, &opts)?;
        Some((b, r))
    } else {
        None
    };
    let test_error = (!problem.test.is_empty()).then(|| mean_squared_error(&problem.test, &trace.next.y));
    Ok(RunOutcome {
        window: w,
        trace,
        report,
        baseline,
        test_error,
        schedules,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let problem = build_problem(cfg)?;
    run_with_window(cfg, &problem, cfg.window.resolve(cfg.horizon)?)
}

/// One run per window, sharing the stream; runs are independent and may execute concurrently.
pub fn sweep(cfg: &ExperimentConfig, windows: &[WindowSpec]) -> Result<Vec<RunOutcome>> {
    let problem = build_problem(cfg)?;
    let sizes = windows.iter().map(|w| w.resolve(cfg.horizon)).collect::<Result<Vec<_>>>()?;
    par::try_map(cfg.execution, sizes.len(), |i| run_with_window(cfg, &problem, sizes[i]))
}

/// One line of the per-round CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t: usize,
    pub f_value: f64,
    pub bd_regret_cum: Option<f64>,
    pub bs_regret_cum: Option<f64>,
    pub bl_regret_cum: Option<f64>,
    pub p2_cum: Option<f64>,
    pub y2_cum: Option<f64>,
    pub alpha_t: f64,
    #[serde(rename = "K_t")]
    pub k_t: Option<usize>,
    pub inner_residual: f64,
    pub wall_nanos: u64,
}

pub fn csv_rows(trace: &Trace, report: &RegretReport) -> Vec<CsvRow> {
    trace
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| CsvRow {
            t: r.t,
            f_value: r.f_value,
            bd_regret_cum: report.bd_regret.get(i).copied(),
            bs_regret_cum: report.bs_regret.as_ref().map(|s| s[i]),
            bl_regret_cum: report.bl_regret.as_ref().map(|s| s[i]),
            p2_cum: report.p2_cum.get(i).copied(),
            y2_cum: report.y2_cum.get(i).copied(),
            alpha_t: r.alpha,
            k_t: r.k,
            inner_residual: r.inner_residual,
            wall_nanos: r.wall_nanos,
        })
        .collect()
}

fn io(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn write_csv(path: &Path, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io(path, e))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                row: i + 2,
                column: 0,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct Summary {
    window: usize,
    rounds: usize,
    bd_regret: f64,
    bs_regret: Option<f64>,
    bl_regret: Option<f64>,
    p1: f64,
    p2: f64,
    y1: f64,
    y2: f64,
    ybar1: f64,
    ybar2: f64,
    h_t_lower_bound: Option<f64>,
    h_t_samples: usize,
    comparator_grad_sum: f64,
    f_star_sum: f64,
    static_x: Option<Vec<f64>>,
    comparators_local_only: bool,
    capped_rounds: usize,
    test_error: Option<f64>,
    baseline_bd_regret: Option<f64>,
    warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct Metadata<'a> {
    version: &'static str,
    dataset_rows: Option<usize>,
    dataset_splits: Option<[usize; 3]>,
    summary: Summary,
    schedule: &'a ScheduleProvenance,
    constants: Option<ProblemConstants>,
    derived: Option<DerivedConstants>,
    config: &'a ExperimentConfig,
}

pub fn metadata_toml(cfg: &ExperimentConfig, problem: Option<&Problem>, outcome: &RunOutcome) -> String {
    let report = &outcome.report;
    let splits = problem.and_then(|p| p.dataset.as_ref()).map(|d| {
        let (a, b, c) = d.splits.sizes();
        [a, b, c]
    });
    let meta = Metadata {
        version: env!("CARGO_PKG_VERSION"),
        dataset_rows: problem.and_then(|p| p.dataset.as_ref()).map(|d| d.rows),
        dataset_splits: splits,
        summary: Summary {
            window: outcome.window,
            rounds: outcome.trace.len(),
            bd_regret: report.bd_total(),
            bs_regret: report.bs_total(),
            bl_regret: report.bl_total(),
            p1: report.p1,
            p2: report.p2,
            y1: report.y1,
            y2: report.y2,
            ybar1: report.ybar1,
            ybar2: report.ybar2,
            h_t_lower_bound: report.h_t,
            h_t_samples: report.h_samples,
            comparator_grad_sum: report.comparator_grad_sum,
            f_star_sum: report.f_star_sum,
            static_x: report.static_x.as_ref().map(|x| x.iter().copied().collect()),
            comparators_local_only: report.local_only,
            capped_rounds: outcome.trace.records.iter().filter(|r| r.k_capped).count(),
            test_error: outcome.test_error,
            baseline_bd_regret: outcome.baseline.as_ref().map(|(_, r)| r.bd_total()),
            warnings: outcome.trace.warnings.clone(),
        },
        schedule: &outcome.schedules.provenance,
        constants: outcome.schedules.constants,
        derived: outcome.schedules.derived,
        config: cfg,
    };
    toml::to_string(&meta).expect("metadata serializes")
}

/// Writes `<stem>.csv` and `<stem>.meta.toml` (plus `<stem>.baseline.csv`); returns the CSV path.
pub fn write_outputs(cfg: &ExperimentConfig, problem: Option<&Problem>, outcome: &RunOutcome, stem: &Path) -> Result<PathBuf> {
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    let with_ext = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    let csv_path = with_ext(".csv");
    write_csv(&csv_path, &csv_rows(&outcome.trace, &outcome.report))?;
    if let Some((trace, report)) = &outcome.baseline {
        write_csv(&with_ext(".baseline.csv"), &csv_rows(trace, report))?;
    }
    let meta = with_ext(".meta.toml");
    std::fs::write(&meta, metadata_toml(cfg, problem, outcome)).map_err(|e| io(&meta, e))?;
    Ok(csv_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            "problem = \"quadratic\"\nrule = \"alt_sqrt\"\nhorizon = 64\nregime = \"strongly_convex\"\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn csv_round_trips_exactly() {
        let cfg = quad("window = 4\nbaseline = true");
        let out = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_outputs(&cfg, None, &out, &dir.path().join("nested/run")).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back, csv_rows(&out.trace, &out.report));
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with(
            "t,f_value,bd_regret_cum,bs_regret_cum,bl_regret_cum,p2_cum,y2_cum,alpha_t,K_t,inner_residual,wall_nanos\n"
        ));
        assert!(dir.path().join("nested/run.baseline.csv").exists());
        let meta: toml::Value = std::fs::read_to_string(dir.path().join("nested/run.meta.toml")).unwrap().parse().unwrap();
        assert_eq!(meta["summary"]["window"].as_integer(), Some(4));
        assert_eq!(meta["schedule"]["step_rule"].as_str(), Some("constant"));
        assert_eq!(meta["schedule"]["k_rule"].as_str(), Some("strongly_convex"));
    }

    #[test]
    fn config_echo_reproduces_the_run() {
        let cfg = quad("window = 3\nexecution = \"sequential\"");
        let first = run_experiment(&cfg).unwrap();
        let meta: toml::Value = metadata_toml(&cfg, None, &first).parse().unwrap();
        let echoed: ExperimentConfig = meta["config"].clone().try_into().unwrap();
        assert_eq!(echoed, cfg);
        let second = run_experiment(&echoed).unwrap();
        assert_eq!(second.trace.without_timing(), first.trace.without_timing());
        assert_eq!(second.report, first.report);
    }

    #[test]
    fn overrides_are_recorded() {
        let cfg = quad("alpha = 0.05\nk = 2");
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.schedules.provenance.overrides, vec!["alpha", "k"]);
        assert!(out.trace.records.iter().all(|r| r.alpha == 0.05 && r.k == Some(2)));
    }

    #[test]
    fn stationary_stream_has_bounded_regret() {
        let cfg = ExperimentConfig {
            horizon: 2000,
            rule: Some(QuadraticRuleKind::Constant),
            ..quad("a1 = 0.2\na2 = 0.5")
        };
        let out = run_experiment(&cfg).unwrap();
        let bd = &out.report.bd_regret;
        assert!((bd[1999] - bd[999]).abs() < 1e-9, "{} {}", bd[999], bd[1999]);
    }

    #[test]
    fn regime_without_constants_is_a_config_error() {
        let cfg = ExperimentConfig::from_toml_str(
            "problem = \"synthetic\"\nhorizon = 30\nstages = 3\nd2 = 2\nregime = \"nonconvex\"\nlower = -3.0\nupper = 3.0",
        )
        .unwrap();
        assert_eq!(run_experiment(&cfg).unwrap_err().category(), "invalid_config");
        let cfg = ExperimentConfig {
            alpha: Some(0.1),
            beta: Some(0.2),
            k: Some(3),
            ..cfg
        };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.trace.len(), 30);
    }
}
