//! Experiment configuration, task dispatch and versioned JSON/CSV reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dimension::{self, DimensionStatus};
use crate::error::{LabError, Result};
use crate::group::{doubling_constant, Group};
use crate::harmonic::{self, Backend, BallFunction};
use crate::inequality::{self, PoincareVariant};
use crate::measure::{self, HittingMode, StepMeasure};
use crate::polynomial;

pub const SCHEMA_VERSION: u32 = 1;
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Standard errors allowed between sampled masses of `g` and `g^{-1}`.
pub const MC_SYMMETRY_SIGMAS: f64 = 3.0;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Growth,
    Courteous,
    Hitting,
    Poincare,
    ReversePoincare,
    Cover,
    Dim,
    Polytest,
    Weights,
}

impl Task {
    pub const ALL: [Task; 9] = [
        Task::Growth,
        Task::Courteous,
        Task::Hitting,
        Task::Poincare,
        Task::ReversePoincare,
        Task::Cover,
        Task::Dim,
        Task::Polytest,
        Task::Weights,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Task::Growth => "growth",
            Task::Courteous => "courteous",
            Task::Hitting => "hitting",
            Task::Poincare => "poincare",
            Task::ReversePoincare => "reverse-poincare",
            Task::Cover => "cover",
            Task::Dim => "dim",
            Task::Polytest => "polytest",
            Task::Weights => "weights",
        }
    }

    pub fn parse(s: &str) -> Result<Task> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown task '{s}'")))
    }
}

fn default_measure() -> String {
    "uniform".into()
}
fn one() -> u32 {
    1
}
fn default_rank_tol() -> f64 {
    harmonic::RANK_TOL
}
fn default_functions() -> usize {
    100
}
fn default_variant() -> String {
    "both".into()
}
fn default_word_cap() -> u32 {
    polynomial::DEFAULT_WORD_CAP
}
fn default_hitting_mode() -> String {
    "exact".into()
}
fn default_trunc_radius() -> u32 {
    16
}
fn default_samples() -> usize {
    100_000
}

/// One experiment. Output paths are not echoed into reports.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    /// `Z^d:d=2`, `heisenberg`, `lamplighter`, `sublattice:basis=[[2,0],[0,1]]`.
    pub group: String,
    /// `uniform`, `simple` (nonidentity generators) or `geometric:c=1,tol=1e-8`.
    #[serde(default = "default_measure")]
    pub measure: String,
    /// Convolution power applied to the measure.
    #[serde(default = "one")]
    pub power: u32,
    #[serde(default)]
    pub radii: Vec<u32>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default = "one")]
    pub k: u32,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Subgroup spec for the hitting task.
    #[serde(default)]
    pub subgroup: Option<String>,
    /// `exact` or `monte-carlo`.
    #[serde(default = "default_hitting_mode")]
    pub hitting_mode: String,
    #[serde(default = "default_trunc_radius")]
    pub trunc_radius: u32,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Random functions per radius in the Poincaré task.
    #[serde(default = "default_functions")]
    pub functions: usize,
    /// `inf`, `courteous` or `both`.
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default = "default_word_cap")]
    pub word_cap: u32,
    #[serde(default)]
    pub radius_cap: Option<u32>,
    #[serde(default)]
    pub point_budget: Option<usize>,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing)]
    pub csv: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(task: Task, group: &str) -> Self {
        ExperimentConfig {
            task,
            group: group.into(),
            measure: default_measure(),
            power: 1,
            radii: Vec::new(),
            eps: None,
            k: 1,
            rank_tol: default_rank_tol(),
            seed: None,
            subgroup: None,
            hitting_mode: default_hitting_mode(),
            trunc_radius: default_trunc_radius(),
            samples: default_samples(),
            functions: default_functions(),
            variant: default_variant(),
            word_cap: default_word_cap(),
            radius_cap: None,
            point_budget: None,
            out: None,
            csv: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.message().replace('\n', " ")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn stochastic(&self) -> bool {
        match self.task {
            Task::Poincare => true,
            Task::Hitting => self.hitting_mode != "exact",
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        let needs_radii = !matches!(self.task, Task::Courteous | Task::Hitting);
        if needs_radii && self.radii.is_empty() {
            return bad(format!("task {} needs a nonempty radii list", self.task.name()));
        }
        if self.radii.iter().any(|&r| r == 0 || r > 4096) {
            return bad("radii must lie in 1..=4096".into());
        }
        if self.task == Task::Dim && self.radii.windows(2).any(|w| w[0] >= w[1]) {
            return bad("dim radii must be strictly increasing".into());
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return bad(format!("rank_tol must lie in (0, 1), got {}", self.rank_tol));
        }
        if self.k > 8 {
            return bad(format!("k must be at most 8, got {}", self.k));
        }
        if self.power == 0 || self.power > 4 {
            return bad(format!("power must lie in 1..=4, got {}", self.power));
        }
        if let Some(eps) = self.eps {
            let hi = if self.task == Task::Cover { f64::INFINITY } else { 1.0 / 3.0 };
            if !(eps > 0.0 && eps < hi) {
                return bad(format!("eps out of range for task {}: {eps}", self.task.name()));
            }
        }
        if self.task == Task::Cover && self.eps.is_none() {
            return bad("cover needs eps".into());
        }
        if self.stochastic() && self.seed.is_none() {
            return bad(format!("task {} is stochastic and needs a seed", self.task.name()));
        }
        if self.task == Task::Hitting {
            if self.subgroup.is_none() {
                return bad("hitting needs a subgroup".into());
            }
            if !matches!(self.hitting_mode.as_str(), "exact" | "monte-carlo") {
                return bad(format!("hitting_mode must be exact or monte-carlo, got {}", self.hitting_mode));
            }
        }
        if self.task == Task::Poincare && !matches!(self.variant.as_str(), "inf" | "courteous" | "both") {
            return bad(format!("variant must be inf, courteous or both, got {}", self.variant));
        }
        if self.task == Task::Poincare && self.functions == 0 {
            return bad("functions must be positive".into());
        }
        if self.word_cap == 0 {
            return bad("word_cap must be positive".into());
        }
        Ok(())
    }

    fn build_group(&self) -> Result<Group> {
        let mut g = Group::parse(&self.group)?;
        if let Some(cap) = self.radius_cap {
            g = g.with_radius_cap(cap);
        }
        if let Some(b) = self.point_budget {
            g = g.with_point_budget(b);
        }
        Ok(g)
    }
}

/// Parse a measure spec and apply the convolution power.
pub fn build_measure(group: &Group, spec: &str, power: u32) -> Result<StepMeasure> {
    let spec = spec.trim();
    let (family, params) = spec.split_once(':').unwrap_or((spec, ""));
    let mut kv: BTreeMap<&str, f64> = BTreeMap::new();
    for part in params.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| LabError::Config(format!("bad measure parameter '{part}'")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| LabError::Config(format!("bad number in measure parameter '{part}'")))?;
        kv.insert(k.trim(), v);
    }
    let base = match family {
        "uniform" => measure::uniform_on_generators(group),
        "simple" => measure::uniform_on_nonidentity_generators(group),
        "geometric" => {
            let c = kv.get("c").copied().unwrap_or(1.0);
            let tol = kv.get("tol").copied().unwrap_or(1e-8);
            if !(c > 0.0) || !(tol > 0.0 && tol < 1.0) {
                return Err(LabError::Config(format!("geometric needs c > 0 and 0 < tol < 1: '{spec}'")));
            }
            measure::geometric_tail_measure(group, c, tol)?
        }
        other => return Err(LabError::Config(format!("unknown measure family '{other}'"))),
    };
    measure::convolution_power(group, &base, power)
}

/// A CSV table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

/// Fields read back by [`emit_summary`].
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub group: String,
    pub measure: String,
    pub k: u32,
    pub dimension: Option<usize>,
    pub kleiner_bound: Option<u64>,
    pub checks_passed: Option<usize>,
    pub checks_total: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub schema_version: u32,
    pub library_version: String,
    pub task: Task,
    pub config: ExperimentConfig,
    /// `ok`, `failed` (some check did not pass) or `inconclusive`.
    pub status: String,
    pub constants: BTreeMap<String, f64>,
    pub summary: Summary,
    pub result: Value,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Report,
    pub table: Table,
    /// 0 ok, 4 inconclusive.
    pub exit_code: i32,
}

fn f(v: f64) -> String {
    format!("{v}")
}

struct TaskOutput {
    result: Value,
    table: Table,
    constants: BTreeMap<String, f64>,
    summary: Summary,
    passed: bool,
    inconclusive: bool,
}

impl TaskOutput {
    fn new(result: Value, table: Table) -> Self {
        TaskOutput {
            result,
            table,
            constants: BTreeMap::new(),
            summary: Summary::default(),
            passed: true,
            inconclusive: false,
        }
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let group = config.build_group()?;
    let mu = build_measure(&group, &config.measure, config.power)?;
    let mut out = match config.task {
        Task::Growth => task_growth(&group, config)?,
        Task::Courteous => task_courteous(&group, &mu)?,
        Task::Hitting => task_hitting(&group, &mu, config)?,
        Task::Poincare => task_poincare(&group, &mu, config)?,
        Task::ReversePoincare => task_reverse(&group, &mu, config)?,
        Task::Cover => task_cover(&group, config)?,
        Task::Dim => task_dim(&group, &mu, config)?,
        Task::Polytest => task_polytest(&group, &mu, config)?,
        Task::Weights => task_weights(&group, &mu, config)?,
    };
    out.constants.insert("rank_tol".into(), config.rank_tol);
    out.constants.insert("sigma2".into(), mu.second_moment());
    out.constants.insert("discarded_mass".into(), mu.discarded_mass());
    out.summary.group = group.name.clone();
    out.summary.measure = mu.label.clone();
    out.summary.k = config.k;
    let status = if out.inconclusive {
        "inconclusive"
    } else if out.passed {
        "ok"
    } else {
        "failed"
    };
    let report = Report {
        schema_version: SCHEMA_VERSION,
        library_version: LIBRARY_VERSION.into(),
        task: config.task,
        config: config.clone(),
        status: status.into(),
        constants: out.constants,
        summary: out.summary,
        result: out.result,
    };
    Ok(Outcome { report, table: out.table, exit_code: if out.inconclusive { 4 } else { 0 } })
}

/// Write the JSON report and the CSV table to the configured paths.
pub fn write_outputs(outcome: &Outcome, json_path: Option<&Path>, csv_path: Option<&Path>) -> Result<()> {
    if let Some(p) = json_path {
        std::fs::write(p, outcome.report.to_json()?)?;
    }
    if let Some(p) = csv_path {
        std::fs::write(p, outcome.table.to_csv())?;
    }
    Ok(())
}

fn max_radius(config: &ExperimentConfig) -> u32 {
    config.radii.iter().copied().max().unwrap_or(0)
}

fn task_growth(group: &Group, config: &ExperimentConfig) -> Result<TaskOutput> {
    let rep = doubling_constant(group, max_radius(config))?;
    let mut table = Table::new(&["R", "count", "haar_volume", "doubling_ratio"]);
    for (r, (&c, &v)) in rep.counts.iter().zip(&rep.haar_volumes).enumerate() {
        let ratio = if r >= 1 { rep.doubling_ratios.get(r - 1).map(|&x| f(x)) } else { None };
        table.push(vec![r.to_string(), c.to_string(), f(v), ratio.unwrap_or_default()]);
    }
    let mut out = TaskOutput::new(serde_json::to_value(&rep)?, table);
    out.constants.insert("D".into(), rep.doubling_constant);
    out.constants.insert("ratio_trend".into(), rep.ratio_trend);
    out.constants.insert("uniform_doubling_trend".into(), crate::group::UNIFORM_DOUBLING_TREND);
    Ok(out)
}

fn courteous_constants(rep: &measure::CourteousReport, consts: &mut BTreeMap<String, f64>) {
    if let Some(c) = rep.certified_tail_rate {
        consts.insert("c_mu".into(), c);
    }
    if let Some(fl) = rep.density_floors.iter().find(|f| f.n == 2) {
        consts.insert("c".into(), fl.c);
    }
}

fn task_courteous(group: &Group, mu: &StepMeasure) -> Result<TaskOutput> {
    let rep = measure::check_courteous(group, mu);
    let mut table = Table::new(&["element", "length", "mass"]);
    for p in &mu.support {
        table.push(vec![p.element.to_string(), p.length.to_string(), f(p.mass)]);
    }
    let mut out = TaskOutput::new(serde_json::to_value(&rep)?, table);
    courteous_constants(&rep, &mut out.constants);
    out.passed = rep.symmetric && rep.adapted_radius.is_some();
    Ok(out)
}

fn task_hitting(group: &Group, mu: &StepMeasure, config: &ExperimentConfig) -> Result<TaskOutput> {
    let sub = Group::parse(config.subgroup.as_deref().unwrap_or_default())?;
    let mode = if config.hitting_mode == "exact" {
        HittingMode::Exact { trunc_radius: config.trunc_radius }
    } else {
        HittingMode::MonteCarlo { samples: config.samples, seed: config.seed.unwrap_or_default() }
    };
    let res = measure::hitting_measure(group, &sub, mu, mode)?;
    let court = measure::check_courteous(&sub, &res.measure);
    let mut table = Table::new(&["element", "mass"]);
    let mut masses = BTreeMap::new();
    for p in &res.measure.support {
        table.push(vec![p.element.to_string(), f(p.mass)]);
        masses.insert(p.element.to_string(), p.mass);
    }
    // Sampled masses are only symmetric up to noise: compare each pair
    // against MC_SYMMETRY_SIGMAS combined standard errors.
    let est = &res.diagnostics.estimates;
    let symmetric = if est.is_empty() {
        court.symmetric
    } else {
        est.iter().all(|e| {
            let inv = sub.invert(&e.element);
            let (p, se) = est
                .iter()
                .find(|o| o.element == inv)
                .map_or((0.0, 0.0), |o| (o.probability, o.standard_error));
            (e.probability - p).abs() <= MC_SYMMETRY_SIGMAS * e.standard_error.hypot(se)
        })
    };
    let result = json!({
        "subgroup": sub.name,
        "measure": masses,
        "diagnostics": res.diagnostics,
        "courteous": court,
        "symmetric_within_error": symmetric,
    });
    let mut out = TaskOutput::new(result, table);
    courteous_constants(&court, &mut out.constants);
    if !est.is_empty() {
        out.constants.insert("mc_symmetry_sigmas".into(), MC_SYMMETRY_SIGMAS);
    }
    out.passed = symmetric && court.adapted_radius.is_some();
    Ok(out)
}

fn task_poincare(group: &Group, mu: &StepMeasure, config: &ExperimentConfig) -> Result<TaskOutput> {
    let seed = config.seed.expect("validated");
    let variants: Vec<&str> = match config.variant.as_str() {
        "both" => vec!["inf", "courteous"],
        v => vec![v],
    };
    let reach = mu.support_radius().max(1);
    let mut table = Table::new(&["R", "variant", "checked", "passed", "worst_ratio"]);
    let mut rows = Vec::new();
    let (mut passed, mut total) = (0usize, 0usize);
    let mut c_floor = None;
    for &r in &config.radii {
        let ball = Arc::new(group.ball(3 * r + reach)?);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let funcs: Vec<BallFunction> = (0..config.functions)
            .map(|_| {
                let vals = (0..ball.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                BallFunction { domain: ball.clone(), values: vals }
            })
            .collect();
        for v in &variants {
            let mut ok = 0usize;
            let mut worst: f64 = 0.0;
            for fun in &funcs {
                let variant = if *v == "inf" {
                    PoincareVariant::Inf
                } else {
                    PoincareVariant::Courteous { mu, c: None }
                };
                let rep = inequality::poincare_check(group, fun, r, variant)?;
                if let Some(&c) = rep.constants.get("c") {
                    c_floor = Some(c);
                }
                worst = worst.max(rep.ratio);
                ok += rep.pass as usize;
            }
            passed += ok;
            total += funcs.len();
            table.push(vec![r.to_string(), v.to_string(), funcs.len().to_string(), ok.to_string(), f(worst)]);
            rows.push(json!({"radius": r, "variant": v, "checked": funcs.len(), "passed": ok, "worst_ratio": worst}));
        }
    }
    let result = json!({ "rows": rows, "passed": passed, "checked": total });
    let mut out = TaskOutput::new(result, table);
    if let Some(c) = c_floor {
        out.constants.insert("c".into(), c);
    }
    out.summary.checks_passed = Some(passed);
    out.summary.checks_total = Some(total);
    out.passed = passed == total;
    Ok(out)
}

fn ansatz_basis(group: &Group, mu: &StepMeasure, k: u32, radius: u32, rank_tol: f64) -> Result<harmonic::HarmonicBasis> {
    harmonic::harmonic_basis(group, mu, k, Backend::PolyAnsatz { eval_radius: radius }, rank_tol)
}

fn task_reverse(group: &Group, mu: &StepMeasure, config: &ExperimentConfig) -> Result<TaskOutput> {
    let reach = mu.support_radius();
    let hb = ansatz_basis(group, mu, config.k, 3 * max_radius(config) + reach, config.rank_tol)?;
    let c_mu = measure::check_courteous(group, mu).certified_tail_rate;
    let polys = hb.polynomials.clone().unwrap_or_default();
    let mut table = Table::new(&["function", "R", "lhs", "rhs_main", "rhs_error", "ratio"]);
    let mut per_fn = Vec::new();
    let (mut passed, mut total) = (0usize, 0usize);
    let mut decay_all = true;
    for (p, fun) in polys.iter().zip(&hb.functions) {
        let mut reps = Vec::new();
        for &r in &config.radii {
            let rep = inequality::reverse_poincare_check(group, fun, r, mu, config.k, None)?;
            table.push(vec![
                p.to_string(),
                r.to_string(),
                f(rep.lhs),
                f(rep.rhs_main),
                f(rep.rhs_error),
                f(rep.ratio),
            ]);
            passed += rep.pass as usize;
            total += 1;
            reps.push(rep);
        }
        let fit = inequality::fit_error_decay(&reps);
        // Vacuous for compactly supported measures: the error terms vanish.
        let decay_ok = match (&fit, c_mu) {
            (Some(fit), Some(c)) => fit.rate >= c / 2.0,
            _ => true,
        };
        decay_all &= decay_ok;
        per_fn.push(json!({
            "function": p.to_string(),
            "reports": reps,
            "decay_fit": fit,
            "decay_ok": decay_ok,
        }));
    }
    let result = json!({ "functions": per_fn, "passed": passed, "checked": total, "decay_ok": decay_all });
    let mut out = TaskOutput::new(result, table);
    if let Some(c) = c_mu {
        out.constants.insert("c_mu".into(), c);
    }
    out.constants.insert("tail_factor".into(), inequality::TAIL_FACTOR);
    out.summary.checks_passed = Some(passed);
    out.summary.checks_total = Some(total);
    out.passed = passed == total && decay_all;
    Ok(out)
}

fn task_cover(group: &Group, config: &ExperimentConfig) -> Result<TaskOutput> {
    let eps = config.eps.expect("validated");
    let mut table = Table::new(&["R", "eps", "J", "beta", "D", "j_bound", "beta_bound", "covering"]);
    let mut rows = Vec::new();
    let (mut passed, mut total) = (0usize, 0usize);
    let mut d_last = 0.0;
    for &r in &config.radii {
        let cover = inequality::separated_cover(group, r, eps)?;
        let d = doubling_constant(group, 2 * r)?.doubling_constant;
        d_last = d;
        let b = inequality::cover_bounds(&cover, d)?;
        let ok = cover.covering_verified
            && cover.separation_verified
            && cover.maximality_verified
            && b.j_ok
            && b.beta_ok;
        passed += ok as usize;
        total += 1;
        table.push(vec![
            r.to_string(),
            f(eps),
            cover.j.to_string(),
            cover.beta.to_string(),
            f(d),
            b.j_bound.to_string(),
            b.beta_bound.to_string(),
            cover.covering_verified.to_string(),
        ]);
        rows.push(json!({ "cover": cover, "bounds": b, "pass": ok }));
    }
    let result = json!({ "rows": rows, "passed": passed, "checked": total });
    let mut out = TaskOutput::new(result, table);
    out.constants.insert("D".into(), d_last);
    out.constants.insert("eps".into(), eps);
    out.summary.checks_passed = Some(passed);
    out.summary.checks_total = Some(total);
    out.passed = passed == total;
    Ok(out)
}

fn task_dim(group: &Group, mu: &StepMeasure, config: &ExperimentConfig) -> Result<TaskOutput> {
    let est = dimension::estimate_hfk_dim(group, mu, config.k, &config.radii, config.rank_tol)?;
    let eps = config.eps.unwrap_or(0.25);
    let r_d = (2 * max_radius(config)).min(group.radius_cap);
    let d = doubling_constant(group, r_d)?.doubling_constant;
    let bound = dimension::kleiner_bound(d, eps)?;
    let mut table = Table::new(&["r_fit", "r_eval", "trial_size", "rank", "gap_ok"]);
    for p in &est.per_radius {
        table.push(vec![
            p.r_fit.to_string(),
            p.r_eval.to_string(),
            p.trial_size.to_string(),
            p.rank.to_string(),
            p.gap_ok.to_string(),
        ]);
    }
    let within = est.dimension.map(|dim| dim as u64 <= bound);
    let result = json!({
        "estimate": est,
        "dimension": est.dimension,
        "status": est.status,
        "kleiner_bound": bound,
        "doubling_radius": r_d,
        "within_kleiner_bound": within,
    });
    let mut out = TaskOutput::new(result, table);
    out.constants.insert("D".into(), d);
    out.constants.insert("eps".into(), eps);
    out.constants.insert("gap_factor".into(), dimension::GAP_FACTOR);
    out.summary.dimension = est.dimension;
    out.summary.kleiner_bound = Some(bound);
    out.inconclusive = est.status == DimensionStatus::Inconclusive;
    out.passed = within.unwrap_or(true);
    Ok(out)
}

fn task_polytest(group: &Group, mu: &StepMeasure, config: &ExperimentConfig) -> Result<TaskOutput> {
    let r = max_radius(config);
    let hb = ansatz_basis(group, mu, config.k, r, config.rank_tol)?;
    let space = polynomial::poly_space_basis(group, config.k, r)?;
    let mut table = Table::new(&["source", "function", "k", "max_violation", "pass"]);
    let mut rows = Vec::new();
    let (mut passed, mut total) = (0usize, 0usize);
    let harmonic_polys = hb.polynomials.clone().unwrap_or_default();
    let items = harmonic_polys
        .iter()
        .zip(&hb.functions)
        .map(|(p, fun)| ("harmonic", p, fun))
        .chain(space.polynomials.iter().zip(&space.functions).map(|(p, fun)| ("monomial", p, fun)));
    for (source, p, fun) in items {
        let t = polynomial::polynomial_degree_test(group, fun, config.k, config.word_cap, r)?;
        passed += t.is_degree_at_most_k as usize;
        total += 1;
        table.push(vec![
            source.into(),
            p.to_string(),
            config.k.to_string(),
            f(t.max_violation),
            t.is_degree_at_most_k.to_string(),
        ]);
        rows.push(json!({ "source": source, "function": p.to_string(), "test": t }));
    }
    let result = json!({
        "harmonic_dimension": hb.dimension,
        "poly_space_size": space.polynomials.len(),
        "rows": rows,
        "passed": passed,
        "checked": total,
    });
    let mut out = TaskOutput::new(result, table);
    out.constants.insert("derivative_tol".into(), polynomial::DERIVATIVE_TOL);
    out.constants.insert("word_cap".into(), config.word_cap as f64);
    out.summary.dimension = Some(hb.dimension);
    out.summary.checks_passed = Some(passed);
    out.summary.checks_total = Some(total);
    out.passed = passed == total;
    Ok(out)
}

fn task_weights(group: &Group, mu: &StepMeasure, config: &ExperimentConfig) -> Result<TaskOutput> {
    let r = max_radius(config);
    let gens = polynomial::action_generators(group);
    let reach = gens.iter().map(|g| group.word_length(g)).collect::<Result<Vec<_>>>()?;
    let hb = ansatz_basis(group, mu, config.k, r + reach.into_iter().max().unwrap_or(0), config.rank_tol)?;
    let q = harmonic::gram_matrix(&hb.functions, r, config.rank_tol)?;
    let rep = polynomial::weight_decomposition(group, &hb.functions, &gens, &q)?;
    let mut table = Table::new(&["generator", "re", "im", "multiplicity", "spread", "residual"]);
    for a in &rep.actions {
        for c in &a.eigenvalues {
            table.push(vec![
                a.element.to_string(),
                f(c.re),
                f(c.im),
                c.multiplicity.to_string(),
                f(c.spread),
                f(a.residual),
            ]);
        }
    }
    let polys: Vec<String> = hb.polynomials.iter().flatten().map(|p| p.to_string()).collect();
    let result = json!({ "basis": polys, "gram": q, "decomposition": rep });
    let mut out = TaskOutput::new(result, table);
    out.constants.insert("unipotent_tol".into(), polynomial::UNIPOTENT_TOL);
    out.constants.insert("cluster_tol".into(), polynomial::CLUSTER_TOL);
    out.summary.dimension = Some(hb.dimension);
    out.passed = rep.unipotent;
    Ok(out)
}

/// One CSV row per report: task, group, measure, k, dimension, Kleiner
/// bound and check pass rate. All reports must share the schema version.
pub fn emit_summary(paths: &[PathBuf]) -> Result<String> {
    if paths.is_empty() {
        return Err(LabError::usage("no reports given"));
    }
    let mut reports = Vec::new();
    let mut offending = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p)?;
        let v: Value = serde_json::from_str(&text)?;
        let version = v.get("schema_version").and_then(Value::as_u64);
        if version != Some(SCHEMA_VERSION as u64) {
            offending.push(format!("{} (schema {:?})", p.display(), version));
            continue;
        }
        let rep: Report = serde_json::from_value(v)?;
        reports.push(rep);
    }
    if !offending.is_empty() {
        return Err(LabError::Schema(format!(
            "expected schema version {SCHEMA_VERSION}; offending: {}",
            offending.join(", ")
        )));
    }
    let mut table = Table::new(&["task", "group", "measure", "k", "status", "dimension", "kleiner_bound", "pass_rate"]);
    for r in &reports {
        let s = &r.summary;
        let rate = match (s.checks_passed, s.checks_total) {
            (Some(p), Some(t)) if t > 0 => f(p as f64 / t as f64),
            _ => String::new(),
        };
        table.push(vec![
            r.task.name().into(),
            s.group.clone(),
            s.measure.clone(),
            s.k.to_string(),
            r.status.clone(),
            s.dimension.map(|d| d.to_string()).unwrap_or_default(),
            s.kleiner_bound.map(|d| d.to_string()).unwrap_or_default(),
            rate,
        ]);
    }
    Ok(table.to_csv())
}
