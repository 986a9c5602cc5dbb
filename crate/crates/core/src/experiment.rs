//! Sweep experiments over BS transmit power and the result table they emit.
//!
//! Every trial draws one channel realisation (seeded by `seed + trial`) and
//! reuses it across the whole power sweep, so rows for different powers of
//! the same trial differ only in the budgets.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dualopt::{solve_joint, JointConfig, MappingRule, DEFAULT_PI0};
use crate::error::{Error, Result};
use crate::mapping3d::{
    exhaustive_3d, greedy_3d, proposed_3d, random_3d, ProposedConfig, DEFAULT_ITERATIONS, EXHAUSTIVE_MAX_K,
};
use crate::model::{total_throughput, Assignment3D, Scenario};
use crate::scenario::{
    equal_power_allocation, equal_power_rates, generate_scenario, watts_to_dbm, with_bs_power, ScenarioParams,
};

pub const RESULT_FORMAT_VERSION: u32 = 1;
pub const CSV_COLUMNS: [&str; 6] = [
    "bs_power_dbm",
    "scheme",
    "seed",
    "throughput_bps",
    "runtime_ms",
    "duality_gap",
];

/// Offset mixed into the trial seed for the random-mapping baseline.
const RANDOM_SCHEME_SALT: u64 = 0x5eed_0f4a_11d0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Multi-start iterative Hungarian mapping, equal power.
    Proposed,
    Exhaustive,
    Random,
    Greedy,
    /// Dual-optimised mapping and power.
    Joint,
    /// Equal power on the proposed mapping.
    Equal,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Proposed,
        Scheme::Exhaustive,
        Scheme::Random,
        Scheme::Greedy,
        Scheme::Joint,
        Scheme::Equal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Exhaustive => "exhaustive",
            Scheme::Random => "random",
            Scheme::Greedy => "greedy",
            Scheme::Joint => "joint",
            Scheme::Equal => "equal",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::validation("scheme", format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    AssignCompare,
    JointCompare,
    Sweep,
    Gen,
    Solve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

fn d_sweep() -> Vec<f64> {
    vec![10.0, 15.0, 20.0, 25.0, 30.0]
}
fn d_trials() -> usize {
    1
}
fn d_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSettings {
    #[serde(default = "JointSettings::d_max_iters")]
    pub max_iters: usize,
    #[serde(default = "JointSettings::d_pi0")]
    pub pi0: f64,
    #[serde(default = "JointSettings::d_eps_gap")]
    pub eps_gap: f64,
    /// 2D re-solves per heuristic run inside each dual evaluation.
    #[serde(default = "JointSettings::d_iterations")]
    pub mapping_iterations: usize,
}

impl JointSettings {
    fn d_max_iters() -> usize {
        2000
    }
    fn d_pi0() -> f64 {
        DEFAULT_PI0
    }
    fn d_eps_gap() -> f64 {
        1e-3
    }
    fn d_iterations() -> usize {
        DEFAULT_ITERATIONS
    }

    pub fn to_config(&self) -> JointConfig {
        JointConfig {
            max_iters: self.max_iters,
            pi0: Some(self.pi0),
            eps_gap: self.eps_gap,
            mapping: MappingRule::Iterative(self.mapping_iterations),
        }
    }
}

impl Default for JointSettings {
    fn default() -> Self {
        JointSettings {
            max_iters: Self::d_max_iters(),
            pi0: Self::d_pi0(),
            eps_gap: Self::d_eps_gap(),
            mapping_iterations: Self::d_iterations(),
        }
    }
}

/// Everything one CLI run needs; mirrors the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub scenario: ScenarioParams,
    #[serde(default = "d_sweep")]
    pub bs_power_sweep_dbm: Vec<f64>,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Scheme for `sweep` and `solve`.
    #[serde(default)]
    pub scheme: Option<Scheme>,
    /// Scenario file read by `solve`.
    #[serde(default)]
    pub input_path: Option<PathBuf>,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub output_format: OutputFormat,
    #[serde(default)]
    pub joint: JointSettings,
    /// When false the runtime column is left empty, making whole files
    /// reproducible byte for byte.
    #[serde(default = "d_true")]
    pub record_runtime: bool,
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        RunConfig {
            experiment,
            scenario: ScenarioParams::default(),
            bs_power_sweep_dbm: d_sweep(),
            trials: d_trials(),
            seed: 0,
            scheme: None,
            input_path: None,
            output_path: None,
            output_format: OutputFormat::Csv,
            joint: JointSettings::default(),
            record_runtime: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("config line {} column {}: {}", e.line(), e.column(), e)))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.trials == 0 {
            return Err(Error::validation("trials", "must be at least 1"));
        }
        let sweeps = matches!(
            self.experiment,
            Experiment::AssignCompare | Experiment::JointCompare | Experiment::Sweep
        );
        if sweeps {
            if self.bs_power_sweep_dbm.is_empty() {
                return Err(Error::validation("bs_power_sweep_dbm", "must not be empty"));
            }
            if self.bs_power_sweep_dbm.iter().any(|p| !p.is_finite()) {
                return Err(Error::validation("bs_power_sweep_dbm", "entries must be finite"));
            }
            if self.bs_power_sweep_dbm.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::validation("bs_power_sweep_dbm", "must be strictly ascending"));
            }
        }
        if matches!(self.experiment, Experiment::Sweep | Experiment::Solve) && self.scheme.is_none() {
            return Err(Error::validation("scheme", "required for this experiment"));
        }
        if self.experiment == Experiment::Solve && self.input_path.is_none() {
            return Err(Error::validation("input_path", "required for solve"));
        }
        let j = &self.joint;
        if j.max_iters == 0 || !(j.pi0.is_finite() && j.pi0 > 0.0) || j.eps_gap.is_nan() || j.eps_gap < 0.0 {
            return Err(Error::validation(
                "joint",
                "max_iters >= 1, pi0 > 0 and eps_gap >= 0 required",
            ));
        }
        Ok(())
    }

    fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub bs_power_dbm: f64,
    pub scheme: Scheme,
    pub seed: u64,
    pub throughput_bps: f64,
    pub runtime_ms: Option<f64>,
    pub duality_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunResult {
    pub rows: Vec<RunRow>,
}

impl RunResult {
    /// Trial-averaged throughput per `(power, scheme)` in row order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut out: Vec<(SummaryRow, usize)> = Vec::new();
        for row in &self.rows {
            let slot = out
                .iter_mut()
                .find(|(s, _)| s.bs_power_dbm == row.bs_power_dbm && s.scheme == row.scheme);
            match slot {
                Some((s, count)) => {
                    s.mean_throughput_bps += row.throughput_bps;
                    s.mean_gap = s.mean_gap.zip(row.duality_gap).map(|(a, b)| a + b);
                    *count += 1;
                }
                None => out.push((
                    SummaryRow {
                        bs_power_dbm: row.bs_power_dbm,
                        scheme: row.scheme,
                        mean_throughput_bps: row.throughput_bps,
                        mean_gap: row.duality_gap,
                    },
                    1,
                )),
            }
        }
        out.into_iter()
            .map(|(mut s, count)| {
                s.mean_throughput_bps /= count as f64;
                s.mean_gap = s.mean_gap.map(|g| g / count as f64);
                s
            })
            .collect()
    }

    pub fn mean(&self, bs_power_dbm: f64, scheme: Scheme) -> Option<f64> {
        self.summary()
            .into_iter()
            .find(|s| s.bs_power_dbm == bs_power_dbm && s.scheme == scheme)
            .map(|s| s.mean_throughput_bps)
    }

    pub fn write<W: Write>(&self, format: OutputFormat, out: W) -> Result<()> {
        match format {
            OutputFormat::Csv => self.write_csv(out),
            OutputFormat::Json => self.write_json(out),
        }
    }

    fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(CSV_COLUMNS).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.bs_power_dbm.to_string(),
                r.scheme.to_string(),
                r.seed.to_string(),
                r.throughput_bps.to_string(),
                r.runtime_ms.map(|v| format!("{v:.3}")).unwrap_or_default(),
                r.duality_gap.map(|v| v.to_string()).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            format_version: u32,
            columns: [&'static str; 6],
            rows: &'a [RunRow],
        }
        let doc = Doc {
            format_version: RESULT_FORMAT_VERSION,
            columns: CSV_COLUMNS,
            rows: &self.rows,
        };
        serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::Io(e.into()))?;
        writeln!(out)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub bs_power_dbm: f64,
    pub scheme: Scheme,
    pub mean_throughput_bps: f64,
    pub mean_gap: Option<f64>,
}

/// Outcome of running one scheme on one scenario.
#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub assignment: Assignment3D,
    /// Sum spectral efficiency (bits/s/Hz summed over subchannels).
    pub spectral_efficiency: f64,
    pub duality_gap: Option<f64>,
}

/// Runs `scheme` on `scenario`. Mapping-only schemes use equal power.
pub fn run_scheme(scenario: &Scenario, scheme: Scheme, seed: u64, joint: &JointSettings) -> Result<SchemeOutcome> {
    let with_equal_power = |assignment: Assignment3D| -> Result<SchemeOutcome> {
        let powers = equal_power_allocation(scenario, &assignment)?;
        Ok(SchemeOutcome {
            spectral_efficiency: total_throughput(&assignment, &powers, scenario)?,
            assignment,
            duality_gap: None,
        })
    };
    let proposed_cfg = ProposedConfig {
        seed,
        ..ProposedConfig::default()
    };
    match scheme {
        Scheme::Joint => {
            let sol = solve_joint(scenario, &joint.to_config())?;
            Ok(SchemeOutcome {
                spectral_efficiency: sol.primal_value,
                assignment: sol.assignment,
                duality_gap: Some(sol.gap),
            })
        }
        Scheme::Proposed | Scheme::Equal => {
            with_equal_power(proposed_3d(&equal_power_rates(scenario)?, &proposed_cfg)?)
        }
        Scheme::Exhaustive => with_equal_power(exhaustive_3d(&equal_power_rates(scenario)?)?.0),
        Scheme::Random => with_equal_power(random_3d(&equal_power_rates(scenario)?, seed ^ RANDOM_SCHEME_SALT)),
        Scheme::Greedy => with_equal_power(greedy_3d(&equal_power_rates(scenario)?)),
    }
}

fn exhaustive_feasible(params: &ScenarioParams) -> bool {
    params.num_uue == params.num_due && params.num_due == params.num_sub && params.num_sub <= EXHAUSTIVE_MAX_K
}

/// Schemes emitted by an experiment, in row order.
pub fn schemes_for(config: &RunConfig) -> Vec<Scheme> {
    match config.experiment {
        Experiment::AssignCompare => {
            let mut s = vec![Scheme::Proposed];
            if exhaustive_feasible(&config.scenario) {
                s.push(Scheme::Exhaustive);
            }
            s.extend([Scheme::Random, Scheme::Greedy]);
            s
        }
        Experiment::JointCompare => vec![Scheme::Joint, Scheme::Equal],
        Experiment::Sweep | Experiment::Solve => config.scheme.into_iter().collect(),
        Experiment::Gen => Vec::new(),
    }
}

fn timed_row(
    scenario: &Scenario,
    scheme: Scheme,
    seed: u64,
    bs_power_dbm: f64,
    config: &RunConfig,
    bandwidth_per_sub: f64,
) -> Result<RunRow> {
    let start = Instant::now();
    let outcome = run_scheme(scenario, scheme, seed, &config.joint)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    Ok(RunRow {
        bs_power_dbm,
        scheme,
        seed,
        throughput_bps: outcome.spectral_efficiency * bandwidth_per_sub,
        runtime_ms: config.record_runtime.then_some(elapsed),
        duality_gap: outcome.duality_gap,
    })
}

/// Runs a sweep experiment (`assign-compare`, `joint-compare` or `sweep`).
pub fn run_sweep(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    if !matches!(
        config.experiment,
        Experiment::AssignCompare | Experiment::JointCompare | Experiment::Sweep
    ) {
        return Err(Error::validation("experiment", "not a sweep experiment"));
    }
    let schemes = schemes_for(config);
    if schemes.contains(&Scheme::Exhaustive) && !exhaustive_feasible(&config.scenario) {
        return Err(Error::TooLarge(format!(
            "exhaustive search needs M = N = K <= {EXHAUSTIVE_MAX_K}"
        )));
    }
    let bandwidth_per_sub = config.scenario.subchannel_bandwidth_hz();

    let base: Vec<Scenario> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            generate_scenario(&ScenarioParams {
                seed: config.trial_seed(t),
                ..config.scenario.clone()
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &power in &config.bs_power_sweep_dbm {
        let per_trial: Vec<Vec<RunRow>> = base
            .par_iter()
            .enumerate()
            .map(|(t, scenario)| {
                let scenario = with_bs_power(scenario, power, config.scenario.uue_power_offset_db);
                let seed = config.trial_seed(t);
                schemes
                    .iter()
                    .map(|&scheme| timed_row(&scenario, scheme, seed, power, config, bandwidth_per_sub))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        rows.extend(per_trial.into_iter().flatten());
    }
    Ok(RunResult { rows })
}

/// Runs `config.scheme` once on a scenario loaded from disk.
pub fn run_solve(config: &RunConfig, scenario: &Scenario) -> Result<RunResult> {
    config.validate()?;
    scenario.validate()?;
    let scheme = config
        .scheme
        .ok_or_else(|| Error::validation("scheme", "required for solve"))?;
    let bandwidth_per_sub = config.scenario.bandwidth_hz / scenario.num_sub as f64;
    let row = timed_row(
        scenario,
        scheme,
        config.seed,
        watts_to_dbm(scenario.bs_budget),
        config,
        bandwidth_per_sub,
    )?;
    Ok(RunResult { rows: vec![row] })
}

/// Scenario for `gen`: the configured parameters with `config.seed`.
pub fn run_gen(config: &RunConfig) -> Result<Scenario> {
    config.validate()?;
    generate_scenario(&ScenarioParams {
        seed: config.seed,
        ..config.scenario.clone()
    })
}
