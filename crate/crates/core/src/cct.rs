//! Step-by-step (SBS) ground truth: post-fault stability verdicts, critical
//! clearing time by bisection, the relative CCT error and report rows.

use serde::{Deserialize, Serialize};

use crate::direct::{critical_value, fault_on_trajectory, post_fault_energy, BcuOptions, FaultOnTrajectory, Method};
use crate::dynamics::{integrate_with, Controls, Flow, Scheme, SystemModel, Termination};
use crate::expansion::{improve_cct, ExpandedFunction, DEFAULT_CCT_ITERATIONS, DEFAULT_H};
use crate::grid::par_map;
use crate::error::{Error, Result};
use crate::models::scenario::FaultScenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerdictOptions {
    pub horizon: f64,
    pub max_horizon: f64,
    /// Unstable once some angle separation exceeds `π + separation_margin`.
    pub separation_margin: f64,
    pub ball_radius: f64,
    pub dwell: f64,
    pub max_step: f64,
}

impl Default for VerdictOptions {
    fn default() -> Self {
        Self { horizon: 15.0, max_horizon: 60.0, separation_margin: 0.5, ball_radius: 0.05, dwell: 2.0, max_step: 0.05 }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Simulates the post-fault system from `x_clear` and decides whether it
/// returns to `x_s`.
///
/// * unstable: angle separation beyond `π + margin`, escape, or (models
///   without angles) settling at an equilibrium other than `x_s`;
/// * stable: staying within `ball_radius` of `x_s` for `dwell` seconds, or,
///   for conservative models, staying within the separation limit for the
///   whole horizon.
///
/// Inconclusive runs double the horizon up to `max_horizon`.
pub fn stability_verdict(post: &dyn SystemModel, x_clear: &[f64], x_s: &[f64], opts: &VerdictOptions) -> Result<Verdict> {
    let limit = std::f64::consts::PI + opts.separation_margin;
    let controls = Controls::default().with_max_step(opts.max_step);
    let mut x0 = x_clear.to_vec();
    let mut elapsed = 0.0;
    let mut horizon = opts.horizon;
    let mut entered: Option<f64> = None;
    let mut dx = vec![0.0; post.dim()];
    loop {
        let span = horizon - elapsed;
        let mut verdict = None;
        let (traj, term) = integrate_with(post, &x0, span, &controls, |t, x| {
            let t = elapsed + t;
            if post.angle_separation(x).is_some_and(|s| s > limit) {
                verdict = Some(Verdict::Unstable);
                return Flow::Stop;
            }
            if dist(x, x_s) < opts.ball_radius {
                let t0 = *entered.get_or_insert(t);
                if t - t0 >= opts.dwell {
                    verdict = Some(Verdict::Stable);
                    return Flow::Stop;
                }
            } else {
                entered = None;
                if post.angle_separation(x).is_none() {
                    post.field_into(x, &mut dx);
                    if dx.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6 {
                        verdict = Some(Verdict::Unstable);
                        return Flow::Stop;
                    }
                }
            }
            Flow::Continue
        })?;
        if let Termination::Diverged { .. } = term {
            return Ok(Verdict::Unstable);
        }
        if let Some(v) = verdict {
            return Ok(v);
        }
        if post.is_conservative() {
            return Ok(Verdict::Stable);
        }
        if horizon >= opts.max_horizon {
            return Err(Error::VerdictTimeout { horizon });
        }
        elapsed = horizon;
        x0 = traj.final_state().to_vec();
        horizon = (2.0 * horizon).min(opts.max_horizon);
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbsOptions {
    pub t_lo: f64,
    pub t_hi: f64,
    pub tol: f64,
    /// Bracket search never goes beyond this clearing time.
    pub scan_limit: f64,
    pub verdict: VerdictOptions,
}

impl Default for SbsOptions {
    fn default() -> Self {
        Self { t_lo: 0.0, t_hi: 1.0, tol: 1e-3, scan_limit: 5.0, verdict: VerdictOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SbsResult {
    pub cct: f64,
    /// Post-fault energy at `x_F(cct)`.
    pub v_cr_true: f64,
    /// Last stable and first unstable clearing times.
    pub stable: f64,
    pub unstable: f64,
}

/// Critical clearing time by bisection on the clearing time, with the
/// fault-on trajectory integrated once up to the scan limit.
pub fn sbs_cct(scenario: &FaultScenario, fault_on: &FaultOnTrajectory, energy: &dyn crate::energy::EnergyFunction, opts: &SbsOptions) -> Result<SbsResult> {
    let traj = &fault_on.trajectory;
    let post = &scenario.post_fault;
    let x_s = post.sep_state();
    let t_max = traj.t_end().min(opts.scan_limit);
    let verdict = |t: f64| stability_verdict(post, &traj.interpolate(t), &x_s, &opts.verdict);

    let mut lo = opts.t_lo.clamp(0.0, t_max);
    while lo > 0.0 && verdict(lo)? != Verdict::Stable {
        lo = if lo < 1e-3 { 0.0 } else { 0.5 * lo };
    }
    let mut hi = opts.t_hi.clamp(lo, t_max);
    while verdict(hi)? != Verdict::Unstable {
        if hi >= t_max {
            return Err(Error::NoInstability);
        }
        lo = hi;
        hi = (2.0 * hi).min(t_max);
    }
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        match verdict(mid)? {
            Verdict::Stable => lo = mid,
            Verdict::Unstable => hi = mid,
        }
    }
    let cct = 0.5 * (lo + hi);
    Ok(SbsResult { cct, v_cr_true: energy.value(&traj.interpolate(cct)), stable: lo, unstable: hi })
}

/// Fault-on trajectory long enough for the default SBS scan.
pub fn sbs_trajectory(scenario: &FaultScenario, opts: &SbsOptions) -> Result<FaultOnTrajectory> {
    fault_on_trajectory(scenario, opts.scan_limit, &Controls::default())
}

/// Relative CCT error in percent.
pub fn cct_error(estimated: f64, real: f64) -> Result<f64> {
    if !(real > 0.0) {
        return Err(Error::Domain("real CCT must be positive".into()));
    }
    Ok((estimated - real) / real * 100.0)
}

/// Expansion settings for CCT assessment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    pub scheme: Scheme,
    pub h: f64,
    pub iterations: usize,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self { scheme: Scheme::Rk3, h: DEFAULT_H, iterations: DEFAULT_CCT_ITERATIONS }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectEstimate {
    pub method: Method,
    pub v_cr: f64,
    pub cct: f64,
    pub error_pct: f64,
    /// Seconds spent on the critical value and the first crossing.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionEstimate {
    pub iteration: usize,
    pub cct: f64,
    pub error_pct: f64,
    /// Cumulative seconds on top of the direct method.
    pub wall_time_increase: f64,
}

/// One fault's row of the assessment table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CCTReport {
    pub fault: String,
    pub sbs: Option<SbsResult>,
    pub direct: Option<DirectEstimate>,
    pub expansion: Vec<ExpansionEstimate>,
    /// Set when some stage failed; the row is then left out of aggregates.
    pub failure: Option<String>,
}

impl CCTReport {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationAggregate {
    pub iteration: usize,
    pub error_pct: Spread,
    pub wall_time_increase: Spread,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub direct_error_pct: Option<Spread>,
    pub expansion: Vec<IterationAggregate>,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub method: Method,
    pub expansion: ExpansionConfig,
    pub rows: Vec<CCTReport>,
    pub aggregate: Aggregate,
}

/// Full pipeline for one fault: SBS ground truth, direct-method estimate and
/// the expanded CCT sequence.
pub fn assess_fault(
    scenario: &FaultScenario,
    method: Method,
    config: &ExpansionConfig,
    sbs: &SbsOptions,
    bcu: &BcuOptions,
) -> CCTReport {
    let mut report = CCTReport { fault: fault_label(scenario), sbs: None, direct: None, expansion: Vec::new(), failure: None };
    if let Err(e) = assess_into(&mut report, scenario, method, config, sbs, bcu) {
        report.failure = Some(e.to_string());
    }
    report
}

/// Faulted bus number, or the scenario name when there is none.
pub fn fault_label(scenario: &FaultScenario) -> String {
    scenario.faulted_bus.map(|b| b.to_string()).unwrap_or_else(|| scenario.name.clone())
}

fn assess_into(
    report: &mut CCTReport,
    scenario: &FaultScenario,
    method: Method,
    config: &ExpansionConfig,
    sbs_opts: &SbsOptions,
    bcu: &BcuOptions,
) -> Result<()> {
    let fault_on = sbs_trajectory(scenario, sbs_opts)?;
    let energy = post_fault_energy(scenario);
    let sbs = sbs_cct(scenario, &fault_on, &energy, sbs_opts)?;
    let real = sbs.cct;
    report.sbs = Some(sbs);

    let traj = &fault_on.trajectory;
    let cv = critical_value(scenario, traj, &energy, method, bcu)?;
    let exp = ExpandedFunction::new(&energy, &scenario.post_fault, config.scheme, config.h, config.iterations)?;
    let seq = improve_cct(traj, &exp, cv.v_cr);
    let Some(first) = seq.steps.first() else {
        return Err(Error::NoCrossing);
    };
    report.direct = Some(DirectEstimate {
        method,
        v_cr: cv.v_cr,
        cct: first.cct,
        error_pct: cct_error(first.cct, real)?,
        wall_time: cv.wall_time + first.wall_time,
    });
    for step in &seq.steps[1..] {
        report.expansion.push(ExpansionEstimate {
            iteration: step.iteration,
            cct: step.cct,
            error_pct: cct_error(step.cct, real)?,
            wall_time_increase: step.wall_time - first.wall_time,
        });
    }
    match seq.failure {
        Some(msg) => Err(Error::Domain(msg)),
        None => Ok(()),
    }
}

/// Assesses every scenario (in parallel) and aggregates the successful rows.
pub fn build_report(
    scenarios: &[FaultScenario],
    method: Method,
    config: &ExpansionConfig,
    sbs: &SbsOptions,
    bcu: &BcuOptions,
) -> Report {
    let rows = par_map(scenarios.len(), |k| assess_fault(&scenarios[k], method, config, sbs, bcu));
    let aggregate = aggregate(&rows, config.iterations);
    Report { method, expansion: *config, rows, aggregate }
}

pub fn aggregate(rows: &[CCTReport], iterations: usize) -> Aggregate {
    let ok: Vec<&CCTReport> = rows.iter().filter(|r| r.succeeded()).collect();
    let direct: Vec<f64> = ok.iter().filter_map(|r| r.direct.as_ref().map(|d| d.error_pct)).collect();
    let mut expansion = Vec::new();
    for i in 1..=iterations {
        let pick = |f: fn(&ExpansionEstimate) -> f64| -> Vec<f64> {
            ok.iter().filter_map(|r| r.expansion.iter().find(|e| e.iteration == i).map(f)).collect()
        };
        if let (Some(error_pct), Some(wall_time_increase)) =
            (Spread::of(&pick(|e| e.error_pct)), Spread::of(&pick(|e| e.wall_time_increase)))
        {
            expansion.push(IterationAggregate { iteration: i, error_pct, wall_time_increase });
        }
    }
    Aggregate { direct_error_pct: Spread::of(&direct), expansion, failed: rows.len() - ok.len() }
}

impl Report {
    /// Table in the usual CCT-table layout: fault, SBS `V_cr` and CCT, method
    /// `V_cr`, CCT, error and time, then a CCT / error / time-increase
    /// triple per iteration, followed by `AVE` and `VAR` (standard
    /// deviation) rows. With `timings` off the time columns are blank so
    /// that repeated runs are byte-identical.
    pub fn table(&self, timings: bool) -> (Vec<String>, Vec<Vec<String>>) {
        let m = self.method.to_string().to_uppercase();
        let mut header: Vec<String> =
            ["Fault Bus", "SBS Vcr", "SBS CCT"].iter().map(|s| s.to_string()).collect();
        header.extend([format!("{m} Vcr"), format!("{m} CCT"), "Error(%)".into(), "T.C.(s)".into()]);
        for i in 1..=self.expansion.iterations {
            header.extend([format!("N={i} CCT"), format!("N={i} Error(%)"), format!("N={i} T.C.INC(s)")]);
        }
        let f = |v: f64, d: usize| format!("{v:.d$}");
        let time = |v: f64| if timings { format!("{v:.4}") } else { String::new() };
        let width = header.len();
        let mut rows = Vec::new();
        for r in &self.rows {
            let mut row = vec![r.fault.clone()];
            match &r.sbs {
                Some(s) => row.extend([f(s.v_cr_true, 3), f(s.cct, 4)]),
                None => row.extend([String::new(), String::new()]),
            }
            match &r.direct {
                Some(d) => row.extend([f(d.v_cr, 3), f(d.cct, 4), f(d.error_pct, 2), time(d.wall_time)]),
                None => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
            for i in 1..=self.expansion.iterations {
                match r.expansion.iter().find(|e| e.iteration == i) {
                    Some(e) => row.extend([f(e.cct, 4), f(e.error_pct, 2), time(e.wall_time_increase)]),
                    None => row.extend(std::iter::repeat_n(String::new(), 3)),
                }
            }
            rows.push(row);
        }
        for (label, pick) in [("AVE", (|s: &Spread| s.mean) as fn(&Spread) -> f64), ("VAR", |s: &Spread| s.std)] {
            let mut row = vec![label.to_string(); 1];
            row.extend(std::iter::repeat_n(String::new(), 4));
            row.push(self.aggregate.direct_error_pct.as_ref().map(|s| f(pick(s), 2)).unwrap_or_default());
            row.push(String::new());
            for i in 1..=self.expansion.iterations {
                match self.aggregate.expansion.iter().find(|a| a.iteration == i) {
                    Some(a) => row.extend([String::new(), f(pick(&a.error_pct), 2), time(pick(&a.wall_time_increase))]),
                    None => row.extend(std::iter::repeat_n(String::new(), 3)),
                }
            }
            debug_assert_eq!(row.len(), width);
            rows.push(row);
        }
        (header, rows)
    }
}
