use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use super::config::{ConfigError, CriterionChoice, ExperimentConfig};
use super::output::{num, read_csv, write_atomic, write_json, CsvTable};
use super::{BoundsArgs, Command, ExperimentArgs};
use crate::coupling::{failure_sweep, CouplingError};
use crate::exact::{
    constants, deterministic_times, epsilon_m, BlockSchedule, ConstantsReport, CriterionKind,
    ExactError,
};
use crate::model::{FiniteModel, ModelError, ValidatedModel};
use crate::smc::{run, RunConfig, SmcError, Trigger};
use crate::stats::{
    alpha, bias_and_lm_experiment, bound_fk743, bound_improved, bound_main, clt_experiment,
    local_field_experiment, tail_experiment, uniform_quantile, Experiment, ExperimentError,
    TailRow,
};
use crate::thresholds::{ThresholdError, ThresholdSchedule};

/// Result of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Self::Pass
        } else {
            Self::Fail
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
        }
    }
}

/// Everything that maps to exit code 1.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Model(ModelError),
    Exact(ExactError),
    Smc(SmcError),
    Threshold(ThresholdError),
    Coupling(CouplingError),
    Experiment(ExperimentError),
    Io(PathBuf, std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "{e}"),
            Self::Model(e) => write!(f, "model: {e}"),
            Self::Exact(e) => write!(f, "oracle: {e}"),
            Self::Smc(e) => write!(f, "particle run: {e}"),
            Self::Threshold(e) => write!(f, "thresholds: {e}"),
            Self::Coupling(e) => write!(f, "coupling: {e}"),
            Self::Experiment(e) => write!(f, "experiment: {e}"),
            Self::Io(path, e) => write!(f, "{}: {e}", path.display()),
        }
    }
}

macro_rules! from_error {
    ($($variant:ident($ty:ty)),*) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                Self::$variant(e)
            }
        })*
    };
}

from_error!(
    Config(ConfigError),
    Model(ModelError),
    Exact(ExactError),
    Smc(SmcError),
    Threshold(ThresholdError),
    Coupling(CouplingError),
    Experiment(ExperimentError)
);

type Result<T> = std::result::Result<T, CliError>;

trait IoContext<T> {
    fn at(self, path: &Path) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|e| CliError::Io(path.to_path_buf(), e))
    }
}

pub fn dispatch(command: &Command) -> Result<Outcome> {
    match command {
        Command::Validate(args) => validate(&args.model),
        Command::Bounds(args) => bounds(args),
        Command::Oracle(args) => oracle(&Setup::new(args)?),
        Command::Run(args) => run_once(&Setup::new(args)?),
        Command::Couple(args) => couple(&Setup::new(args)?),
        Command::Concentrate(args) => concentrate(&Setup::new(args)?),
        Command::Bias(args) => bias(&Setup::new(args)?),
        Command::Localfield(args) => localfield(&Setup::new(args)?),
        Command::Clt(args) => clt(&Setup::new(args)?),
    }
}

fn validate(path: &Path) -> Result<Outcome> {
    let model = FiniteModel::load(path)?;
    println!(
        "{}: valid, {} states, horizon {}",
        path.display(),
        model.num_states(),
        model.horizon()
    );
    Ok(Outcome::Pass)
}

fn bounds(args: &BoundsArgs) -> Result<Outcome> {
    let main = bound_main(args.eps, args.n, args.sigma1);
    let improved = bound_improved(args.eps, args.n, args.sigma_sq, args.sigma1);
    let fk743 = bound_fk743(args.eps, args.n, args.sigma_tilde_sq);
    println!(
        "alpha = {}",
        num(alpha(args.eps, args.sigma_sq, args.sigma1))
    );
    println!("main = {}", num(main));
    println!("improved = {}", num(improved));
    println!("fk743 = {}", num(fk743));
    match args.delta {
        Some(delta) => println!(
            "uniform_quantile = {}",
            num(uniform_quantile(
                args.rho, args.n, delta, args.r_hi, args.r_lo, args.m
            ))
        ),
        None => println!("uniform_quantile = (needs --delta)"),
    }
    Ok(Outcome::Pass)
}

/// Resolved config, loaded model and the exact schedule every command works from.
struct Setup {
    config: ExperimentConfig,
    model: ValidatedModel,
    hash: String,
    schedule: BlockSchedule,
    /// The adaptive rule behind `schedule`; `None` for a fixed schedule.
    adaptive: Option<(CriterionKind, ThresholdSchedule)>,
}

impl Setup {
    fn new(args: &ExperimentArgs) -> Result<Self> {
        let config = args.resolve()?;
        let path = config.require_model()?.to_path_buf();
        let bytes = std::fs::read(&path).at(&path)?;
        let text = String::from_utf8_lossy(&bytes);
        let model = FiniteModel::from_json_str(&text)?.validate()?;
        let hash = config.hash(&bytes);
        let (schedule, adaptive) = resolve_schedule(&config, &model)?;
        Ok(Self {
            config,
            model,
            hash,
            schedule,
            adaptive,
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.out.join(name)
    }

    fn write_csv(&self, name: &str, table: &CsvTable) -> Result<()> {
        let path = self.out(name);
        table.write(&path, &self.hash).at(&path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.out(name);
        write_json(&path, value).at(&path)
    }

    fn write_verdict<T: Serialize>(&self, name: &str, pass: bool, reports: &T) -> Result<Outcome> {
        let outcome = Outcome::from_pass(pass);
        self.write_json(
            name,
            &json!({
                "verdict": outcome.label(),
                "config_hash": self.hash,
                "reports": reports,
            }),
        )?;
        println!("{}: {}", name, outcome.label());
        Ok(outcome)
    }

    fn f(&self) -> Result<Vec<f64>> {
        let k = self.model.num_states();
        match &self.config.f {
            Some(f) if f.len() == k => Ok(f.clone()),
            Some(f) => Err(ConfigError::Invalid {
                key: "f".into(),
                message: format!("has {} entries for {k} states", f.len()),
            }
            .into()),
            // Indicator of the last state.
            None => Ok((0..k).map(|i| if i + 1 == k { 1.0 } else { 0.0 }).collect()),
        }
    }

    /// `block` if given, else every complete block up to `blocks` (default: all).
    fn blocks(&self) -> Vec<usize> {
        let m = self.schedule.num_blocks();
        match self.config.block {
            Some(n) => vec![n],
            None => (0..=self.config.blocks.unwrap_or(m).min(m)).collect(),
        }
    }

    fn experiment<'a>(&'a self, f: &'a [f64], block: usize) -> Result<Experiment<'a>> {
        Ok(Experiment {
            model: &self.model,
            schedule: &self.schedule,
            f,
            block,
            particles: self.config.n,
            replicates: self.config.replicates,
            seed: self.config.require_seed()?,
            resampler: self.config.resampler,
        })
    }

    fn sigma1(&self, constants: &ConstantsReport, n: usize) -> f64 {
        self.config.sigma1_override.unwrap_or(constants.sigma1[n])
    }
}

fn resolve_schedule(
    config: &ExperimentConfig,
    model: &ValidatedModel,
) -> Result<(BlockSchedule, Option<(CriterionKind, ThresholdSchedule)>)> {
    let kind = match config.criterion {
        CriterionChoice::Fixed => {
            let mut times = config
                .schedule
                .clone()
                .ok_or_else(|| ConfigError::MissingField("schedule".into()))?;
            // The leading 0 is optional on the command line.
            if times.first() != Some(&0) {
                times.insert(0, 0);
            }
            return Ok((BlockSchedule::from_times(model, times)?, None));
        }
        CriterionChoice::Cv2 => CriterionKind::Cv2,
        CriterionChoice::Entropy => CriterionKind::Entropy,
    };
    let thresholds = match (&config.threshold_range, &config.threshold) {
        (Some((lo, hi)), _) => ThresholdSchedule::randomized(*lo, *hi, config.require_seed()?)?,
        (None, Some(values)) => ThresholdSchedule::listed(values.clone())?,
        (None, None) => return Err(ConfigError::MissingField("threshold".into()).into()),
    };
    let schedule = deterministic_times(model, kind, &thresholds)?;
    Ok((schedule, Some((kind, thresholds))))
}

fn oracle(setup: &Setup) -> Result<Outcome> {
    let schedule = &setup.schedule;
    let mut table = CsvTable::new(&["block", "t_n", "truncated"]);
    for (n, t) in schedule.times.iter().enumerate() {
        table.push(vec![n.to_string(), t.to_string(), "false".into()]);
    }
    if schedule.truncated {
        table.push(vec![
            schedule.times.len().to_string(),
            schedule.horizon.to_string(),
            "true".into(),
        ]);
    }
    setup.write_csv("schedule.csv", &table)?;

    let mut curves = CsvTable::new(&["block", "s", "value"]);
    for (n, curve) in schedule.criterion_curves.iter().enumerate() {
        let start = schedule.times[n];
        for (i, v) in curve.iter().enumerate() {
            curves.push(vec![n.to_string(), (start + i + 1).to_string(), num(*v)]);
        }
    }
    setup.write_csv("criterion_curves.csv", &curves)?;

    let report = constants(&setup.model, schedule);
    let mut table = CsvTable::new(&[
        "p",
        "n",
        "q_pn",
        "beta_pn",
        "sigma1",
        "sigma2",
        "sigma_sq",
        "sigma_tilde_sq",
    ]);
    for n in 0..=report.num_blocks() {
        for p in 0..=n {
            table.push(vec![
                p.to_string(),
                n.to_string(),
                num(report.q(p, n)),
                num(report.beta(p, n)),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ]);
        }
    }
    for n in 0..=report.num_blocks() {
        table.push(vec![
            String::new(),
            n.to_string(),
            String::new(),
            String::new(),
            num(report.sigma1[n]),
            num(report.sigma2[n]),
            num(report.sigma_sq[n]),
            num(report.sigma_tilde_sq[n]),
        ]);
    }
    setup.write_csv("constants.csv", &table)?;

    let epsilon = match setup.adaptive {
        None => "not applicable: fixed schedule\n".to_string(),
        Some(_) => match epsilon_m(schedule) {
            Ok(eps) => format!("{}\n", num(eps)),
            Err(e) => format!("{e}\n"),
        },
    };
    let path = setup.out("epsilon.txt");
    write_atomic(&path, epsilon.as_bytes()).at(&path)?;

    let mixing = report.mixing_report().map(|m| {
        json!({
            "delta_min": m.delta_min,
            "r_max": m.r_max,
            "checked": m.checked,
            "q_violations": m.q_violations,
            "beta_violations": m.beta_violations,
            "series_violations": m.series_violations,
            "holds": m.holds(),
        })
    });
    setup.write_json(
        "oracle.json",
        &json!({
            "config_hash": setup.hash,
            "times": schedule.times,
            "truncated": schedule.truncated,
            "thresholds": schedule.thresholds,
            "updated_marginals": schedule.updated_marginals,
            "delta": report.delta,
            "r": report.r,
            "mixing_unavailable": report.mixing_unavailable,
            "mixing": mixing,
        }),
    )?;
    println!(
        "times {:?}{}",
        schedule.times,
        if schedule.truncated {
            " (truncated)"
        } else {
            ""
        }
    );
    Ok(Outcome::Pass)
}

fn trigger(setup: &Setup) -> Result<Trigger> {
    Ok(match &setup.adaptive {
        Some((kind, thresholds)) => Trigger::Adaptive {
            kind: *kind,
            thresholds: thresholds.clone(),
        },
        None => Trigger::fixed(&setup.schedule.times, setup.model.horizon())?,
    })
}

fn run_once(setup: &Setup) -> Result<Outcome> {
    let config = RunConfig::new(setup.config.n, setup.config.require_seed()?)
        .resampler(setup.config.resampler);
    let record = run(&setup.model, &trigger(setup)?, config)?;
    setup.write_json(
        "run.json",
        &json!({
            "config_hash": setup.hash,
            "particles": record.particles,
            "resampling_times": record.resampling_times,
            "truncated": record.truncated,
            "log_gamma": record.log_gamma,
            "gamma": record.gamma(),
            "blocks": record.blocks,
        }),
    )?;
    let k = setup.model.num_states();
    let mut header: Vec<String> = ["time", "block", "cv2", "entropy", "ess", "mean_weight"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..k).map(|i| format!("weighted_{i}")));
    header.extend((0..k).map(|i| format!("unweighted_{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = CsvTable::new(&header);
    for e in &record.estimates {
        let mut row = vec![
            e.time.to_string(),
            e.block.to_string(),
            num(e.cv2),
            num(e.entropy),
            num(e.ess),
            num(e.mean_weight),
        ];
        row.extend(e.weighted.iter().copied().map(num));
        row.extend(e.unweighted.iter().copied().map(num));
        table.push(row);
    }
    setup.write_csv("estimates.csv", &table)?;
    println!("resampling times {:?}", record.resampling_times);
    Ok(Outcome::Pass)
}

fn couple(setup: &Setup) -> Result<Outcome> {
    let (kind, thresholds) = setup.adaptive.clone().ok_or_else(|| ConfigError::Invalid {
        key: "criterion".into(),
        message: "couple needs an adaptive criterion".into(),
    })?;
    let m = setup
        .config
        .blocks
        .unwrap_or(setup.schedule.num_blocks())
        .min(setup.schedule.num_blocks());
    let seed = setup.config.require_seed()?;
    let base = RunConfig::new(1, seed).resampler(setup.config.resampler);
    let report = failure_sweep(
        &setup.model,
        kind,
        &thresholds,
        &setup.schedule,
        m,
        &setup.config.n_list,
        setup.config.replicates,
        seed,
        &base,
    )?;
    let mut table = CsvTable::new(&["N", "failures", "R", "freq", "wilson_lo", "wilson_hi"]);
    for p in &report.points {
        table.push(vec![
            p.particles.to_string(),
            p.failures.to_string(),
            p.replicates.to_string(),
            num(p.freq),
            num(p.wilson_lo),
            num(p.wilson_hi),
        ]);
    }
    setup.write_csv("coupling.csv", &table)?;
    let epsilon = epsilon_m(&setup.schedule).ok();
    let zero_at_largest = report.points.last().is_some_and(|p| p.failures == 0);
    let pass = report.non_increasing && report.transfer_exact && zero_at_largest;
    let outcome = Outcome::from_pass(pass);
    setup.write_json(
        "coupling_fit.json",
        &json!({
            "verdict": outcome.label(),
            "config_hash": setup.hash,
            "blocks": m,
            "epsilon_m": epsilon,
            "slope": report.fit.slope,
            "intercept": report.fit.intercept,
            "points_used": report.fit.points_used,
            "non_increasing": report.non_increasing,
            "zero_at_largest": zero_at_largest,
            "transfer_exact": report.transfer_exact,
        }),
    )?;
    println!("coupling_fit.json: {}", outcome.label());
    Ok(outcome)
}

const TAIL_HEADER: &[&str] = &[
    "block",
    "N",
    "sigma1",
    "eps",
    "exceedances",
    "R",
    "freq",
    "wilson_upper",
    "bound",
    "pass",
];

fn concentrate(setup: &Setup) -> Result<Outcome> {
    let f = setup.f()?;
    let report = constants(&setup.model, &setup.schedule);
    let mut table = CsvTable::new(TAIL_HEADER);
    let mut reports = Vec::new();
    for n in setup.blocks() {
        let tails = tail_experiment(
            &setup.experiment(&f, n)?,
            &setup.config.epsilons,
            setup.sigma1(&report, n),
        )?;
        for r in &tails.rows {
            table.push(vec![
                n.to_string(),
                tails.particles.to_string(),
                num(tails.sigma1),
                num(r.eps),
                r.exceedances.to_string(),
                r.replicates.to_string(),
                num(r.freq),
                num(r.wilson_upper),
                num(r.bound),
                r.pass.to_string(),
            ]);
        }
        reports.push(tails);
    }
    setup.write_csv("concentrate.csv", &table)?;
    let pass = reports.iter().all(|r| r.pass);
    setup.write_verdict("concentrate.json", pass, &reports)
}

/// Recomputes every row of a `concentrate.csv` from its recorded counts and
/// reports whether all derived columns, including the verdict, reproduce exactly.
pub fn reverify_tail_csv(path: &Path) -> std::io::Result<bool> {
    let (header, rows) = read_csv(path)?;
    if header != TAIL_HEADER {
        return Err(std::io::Error::other("not a concentrate table"));
    }
    let bad = |e: String| std::io::Error::other(e);
    for row in rows {
        let particles: usize = row[1].parse().map_err(|e| bad(format!("{e}")))?;
        let sigma1: f64 = row[2].parse().map_err(|e| bad(format!("{e}")))?;
        let eps: f64 = row[3].parse().map_err(|e| bad(format!("{e}")))?;
        let count: u64 = row[4].parse().map_err(|e| bad(format!("{e}")))?;
        let replicates: u64 = row[5].parse().map_err(|e| bad(format!("{e}")))?;
        let again = TailRow::evaluate(eps, count, replicates, particles, sigma1);
        let derived = [
            num(again.freq),
            num(again.wilson_upper),
            num(again.bound),
            again.pass.to_string(),
        ];
        if derived[..] != row[6..10] {
            return Ok(false);
        }
    }
    Ok(true)
}

fn bias(setup: &Setup) -> Result<Outcome> {
    let f = setup.f()?;
    let report = constants(&setup.model, &setup.schedule);
    let mut table = CsvTable::new(&[
        "block", "N", "quantity", "m", "value", "se", "bound", "pass",
    ]);
    let mut reports = Vec::new();
    for n in setup.blocks() {
        let r = bias_and_lm_experiment(
            &setup.experiment(&f, n)?,
            &setup.config.m_list,
            setup.sigma1(&report, n),
            report.sigma2[n],
        )?;
        let nf = r.particles as f64;
        table.push(vec![
            n.to_string(),
            r.particles.to_string(),
            "scaled_bias".into(),
            String::new(),
            num(r.scaled_bias),
            num(nf * r.bias_se),
            num(r.sigma1),
            r.bias_pass.to_string(),
        ]);
        for row in &r.lm {
            table.push(vec![
                n.to_string(),
                r.particles.to_string(),
                "scaled_lm".into(),
                row.m.to_string(),
                num(row.value),
                num(row.se),
                num(row.bound),
                row.pass.to_string(),
            ]);
        }
        reports.push(r);
    }
    setup.write_csv("bias.csv", &table)?;
    let pass = reports.iter().all(|r| r.pass);
    setup.write_verdict("bias.json", pass, &reports)
}

fn localfield(setup: &Setup) -> Result<Outcome> {
    let f = setup.f()?;
    let mut table = CsvTable::new(&[
        "block", "N", "quantity", "m", "value", "se", "target", "pass",
    ]);
    let mut reports = Vec::new();
    for n in setup.blocks() {
        let r = local_field_experiment(
            &setup.experiment(&f, n)?,
            &setup.config.m_list,
            setup.config.enum_cap,
        )?;
        let common = |q: &str, m: Option<u32>, v: f64, se: f64, target: f64, pass: bool| {
            vec![
                n.to_string(),
                r.particles.to_string(),
                q.to_string(),
                m.map(|m| m.to_string()).unwrap_or_default(),
                num(v),
                num(se),
                num(target),
                pass.to_string(),
            ]
        };
        table.push(common(
            "mean",
            None,
            r.moments.mean,
            r.moments.mean_se,
            0.0,
            r.mean_pass,
        ));
        table.push(common(
            "variance",
            None,
            r.moments.variance,
            r.moments.variance_se,
            r.exact_variance,
            r.variance_pass,
        ));
        for row in &r.lm {
            table.push(common(
                "lm",
                Some(row.m),
                row.value,
                row.se,
                row.bound,
                row.pass,
            ));
        }
        reports.push(r);
    }
    setup.write_csv("localfield.csv", &table)?;
    let pass = reports.iter().all(|r| r.pass);
    setup.write_verdict("localfield.json", pass, &reports)
}

fn clt(setup: &Setup) -> Result<Outcome> {
    let f = setup.f()?;
    let mut table = CsvTable::new(&[
        "block",
        "N",
        "variance",
        "variance_se",
        "exact_variance",
        "ratio",
        "skewness",
        "excess_kurtosis",
        "pass",
    ]);
    let mut reports = Vec::new();
    for n in setup.blocks() {
        let r = clt_experiment(&setup.experiment(&f, n)?, setup.config.enum_cap)?;
        table.push(vec![
            n.to_string(),
            r.particles.to_string(),
            num(r.moments.variance),
            num(r.moments.variance_se),
            num(r.exact_variance),
            num(r.ratio),
            num(r.moments.skewness),
            num(r.moments.excess_kurtosis),
            r.pass.to_string(),
        ]);
        reports.push(r);
    }
    setup.write_csv("clt.csv", &table)?;
    let pass = reports.iter().all(|r| r.pass);
    setup.write_verdict("clt.json", pass, &reports)
}
