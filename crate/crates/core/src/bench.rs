//! Monte-Carlo experiment runner, concentration bounds and figure data.

use std::fmt::Write as _;

use num_rational::Rational64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::FourTopologyParams;
use crate::region;
use crate::scheme::{corner, sumrate, ErrorType, RunOptions, SchemeResult};

/// `min(1, 2·exp(−α²/(4·Σ var)))`.
pub fn bernstein_bound(alpha: f64, variances: &[f64]) -> f64 {
    let total: f64 = variances.iter().sum();
    if alpha <= 0.0 {
        return 1.0;
    }
    if total <= 0.0 {
        return 0.0;
    }
    (2.0 * (-alpha * alpha / (4.0 * total)).exp()).min(1.0)
}

/// Bound on the probability that a phase overruns its `m^{2/3}` guard.
pub fn type1_bound(m: usize, delta: f64) -> f64 {
    if delta <= 0.0 || delta >= 1.0 {
        return 0.0;
    }
    let m = m as f64;
    let d4 = delta.powi(4);
    let denom = 4.0 * (1.0 - d4) * d4 * (m / (1.0 - delta * delta) + m.powf(2.0 / 3.0));
    (4.0 * (-m.powf(4.0 / 3.0) / denom).exp()).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    SumRate,
    Corner,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sumrate" => Ok(Scheme::SumRate),
            "corner" => Ok(Scheme::Corner),
            other => Err(Error::Parameter(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub delta: f64,
    pub eps: f64,
    /// Bits per user (sum-rate) or of user 2 (corner).
    pub m: usize,
    pub trials: usize,
    pub seed0: u64,
    pub options: RunOptions,
}

impl ExperimentConfig {
    pub fn new(scheme: Scheme, delta: f64, eps: f64, m: usize, trials: usize, seed0: u64) -> Self {
        Self {
            scheme,
            delta,
            eps,
            m,
            trials,
            seed0,
            options: RunOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Parameter("trials must be at least 1".into()));
        }
        if self.options.allow_out_of_condition {
            FourTopologyParams::new(self.delta, self.eps)?;
            return Ok(());
        }
        match self.scheme {
            Scheme::SumRate => sumrate::analytic_times(self.delta, self.eps, self.m).map(|_| ()),
            Scheme::Corner => {
                corner::analytic_times(&corner::CornerConfig::new(self.delta, self.eps, self.m)?).map(|_| ())
            }
        }
    }

    pub fn run_trial(&self, seed: u64) -> Result<SchemeResult> {
        match self.scheme {
            Scheme::SumRate => sumrate::run(
                FourTopologyParams::new(self.delta, self.eps)?,
                self.m,
                seed,
                &self.options,
            ),
            Scheme::Corner => corner::run(
                &corner::CornerConfig::new(self.delta, self.eps, self.m)?,
                seed,
                &self.options,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for fewer than two values.
    pub sd: f64,
}

impl Stat {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        let n = xs.len();
        if n == 0 {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { n, mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trials: usize,
    pub decoded_trials: usize,
    pub t_total: Stat,
    /// Over decoded trials only.
    pub sum_rate: Stat,
    pub r1: Stat,
    pub r2: Stat,
    pub error_i_freq: f64,
    pub error_ii_freq: f64,
    pub decode_failure_freq: f64,
    /// Decoded trials whose output differed from the message.
    pub bit_errors: usize,
}

pub fn aggregate(results: &[SchemeResult]) -> Aggregate {
    let n = results.len().max(1) as f64;
    let ok: Vec<&SchemeResult> = results.iter().filter(|r| r.sum_rate.is_some()).collect();
    let freq = |e: ErrorType| results.iter().filter(|r| r.error_type == Some(e)).count() as f64 / n;
    Aggregate {
        trials: results.len(),
        decoded_trials: ok.len(),
        t_total: Stat::of(results.iter().map(|r| r.t_total as f64)),
        sum_rate: Stat::of(ok.iter().filter_map(|r| r.sum_rate)),
        r1: Stat::of(ok.iter().filter_map(|r| r.r1)),
        r2: Stat::of(ok.iter().filter_map(|r| r.r2)),
        error_i_freq: freq(ErrorType::I),
        error_ii_freq: freq(ErrorType::II),
        decode_failure_freq: results.iter().filter(|r| r.decoded != [true, true]).count() as f64 / n,
        bit_errors: ok.iter().filter(|r| !r.bit_exact).count(),
    }
}

/// Runs all trials (seed `seed0 + i`) in parallel; results are in trial
/// order, so the aggregate does not depend on scheduling.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<SchemeResult>> {
    cfg.validate()?;
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| cfg.run_trial(cfg.seed0 + i))
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Aggregate> {
    Ok(aggregate(&run_trials(cfg)?))
}

pub fn trial_csv_header(scheme: Scheme) -> &'static str {
    match scheme {
        Scheme::SumRate => "seed,m,delta,eps,t_p1,t_p2,t_p3,t_total,decoded,error_type,sum_rate",
        Scheme::Corner => "seed,m,delta,eps,t_p1,t_p2,t_p3,t_total,decoded,error_type,sum_rate,r1,r2",
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn trial_csv_row(cfg: &ExperimentConfig, r: &SchemeResult) -> String {
    let mut row = format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.seed,
        cfg.m,
        cfg.delta,
        cfg.eps,
        r.t_p1,
        r.t_p2,
        r.t_p3,
        r.t_total,
        r.decoded == [true, true],
        r.error_type.map_or("none", |e| e.as_str()),
        opt(r.sum_rate)
    );
    if cfg.scheme == Scheme::Corner {
        write!(row, ",{},{}", opt(r.r1), opt(r.r2)).unwrap();
    }
    row
}

pub fn trials_csv(cfg: &ExperimentConfig, results: &[SchemeResult]) -> String {
    let mut out = String::from(trial_csv_header(cfg.scheme));
    out.push('\n');
    for r in results {
        out.push_str(&trial_csv_row(cfg, r));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorProbRow {
    pub m: usize,
    pub trials: usize,
    pub error_i: usize,
    pub error_ii: usize,
    pub bound: f64,
    /// `bound + 3·sqrt(b(1−b)/trials)`.
    pub allowance: f64,
}

impl ErrorProbRow {
    pub fn freq_i(&self) -> f64 {
        self.error_i as f64 / self.trials as f64
    }

    pub fn freq_ii(&self) -> f64 {
        self.error_ii as f64 / self.trials as f64
    }

    pub fn within_bound(&self) -> bool {
        self.freq_i() <= self.allowance
    }
}

pub fn error_prob_sweep(
    delta: f64,
    eps: f64,
    m_list: &[usize],
    trials: usize,
    seed0: u64,
) -> Result<Vec<ErrorProbRow>> {
    m_list
        .iter()
        .map(|&m| {
            let cfg = ExperimentConfig::new(Scheme::SumRate, delta, eps, m, trials, seed0);
            let results = run_trials(&cfg)?;
            let count = |e| results.iter().filter(|r| r.error_type == Some(e)).count();
            let b = type1_bound(m, delta);
            Ok(ErrorProbRow {
                m,
                trials,
                error_i: count(ErrorType::I),
                error_ii: count(ErrorType::II),
                bound: b,
                allowance: b + 3.0 * (b * (1.0 - b) / trials as f64).sqrt(),
            })
        })
        .collect()
}

pub fn error_prob_csv(rows: &[ErrorProbRow]) -> String {
    let mut out = String::from("m,trials,error_i_freq,error_ii_freq,type1_bound\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{:e}", r.m, r.trials, r.freq_i(), r.freq_ii(), r.bound).unwrap();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Figure {
    Fig2,
    Fig3,
    Fig5,
    Sec5c,
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            "fig5" => Ok(Figure::Fig5),
            "sec5c" => Ok(Figure::Sec5c),
            other => Err(Error::Parameter(format!("unknown figure {other:?}"))),
        }
    }
}

pub const FIG_GRID: usize = 200;

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

/// Time ledger of the out-of-condition example at δ = 1/2, ε = 3/4, per
/// unit `m`, as printed alongside the values it is meant to total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutOfConditionLedger {
    pub delta: Rational64,
    pub eps: Rational64,
    /// Phase 1, phase-2 multicast, phase-3 point-to-point.
    pub terms: [Rational64; 3],
    pub stated_total: Rational64,
    pub stated_sum_rate: Rational64,
    pub terms_total: Rational64,
    /// Sum rate without any side information at the same δ.
    pub no_side_info_reference: Rational64,
}

pub fn out_of_condition_ledger() -> OutOfConditionLedger {
    let (d, e) = (r(1, 2), r(3, 4));
    let one = r(1, 1);
    let q = one - d * d;
    let terms = [
        one / q * e,
        one / q * (d * d / q) * e,
        r(2, 1) / (one - d) * (one - e),
    ];
    OutOfConditionLedger {
        delta: d,
        eps: e,
        terms,
        stated_total: r(9, 4),
        stated_sum_rate: r(8, 9),
        terms_total: terms.iter().sum(),
        no_side_info_reference: r(9, 10),
    }
}

fn fig2_csv() -> String {
    let mut out = String::from("one_minus_delta,envelope_eps_1,envelope_eps_0.5,envelope_eps_0,parallel\n");
    for k in 0..FIG_GRID {
        let x = k as f64 / (FIG_GRID - 1) as f64;
        let d = 1.0 - x;
        writeln!(
            out,
            "{},{},{},{},{}",
            x,
            region::sum_rate_envelope(d, 1.0),
            region::sum_rate_envelope(d, 0.5),
            region::sum_rate_envelope(d, 0.0),
            2.0 * (1.0 - d)
        )
        .unwrap();
    }
    out
}

pub const FIG3_EPS: [(i64, i64); 3] = [(1, 1), (5, 7), (5, 16)];

fn fig3_csv() -> String {
    let mut out = String::from("delta,eps,vertex,r1,r2\n");
    for (n, d) in FIG3_EPS {
        let eps = n as f64 / d as f64;
        let p = FourTopologyParams::new(0.25, eps).expect("valid");
        let reg = region::outer_region(&crate::params::ChannelParams::from_four_topology(p).expect("valid"));
        for (i, v) in reg.vertices.iter().enumerate() {
            writeln!(out, "0.25,{n}/{d},{i},{},{}", v.r1, v.r2).unwrap();
        }
    }
    out
}

/// ε used for the achievability figure.
pub const FIG5_EPS: f64 = 0.75;

pub fn fig5_achievable(delta: f64) -> bool {
    delta <= 0.5 && region::sum_capacity_condition(delta, FIG5_EPS)
}

fn fig5_csv() -> String {
    let mut out = String::from("delta,envelope,achievable\n");
    for k in 0..FIG_GRID {
        let d = k as f64 / FIG_GRID as f64;
        writeln!(
            out,
            "{},{},{}",
            d,
            region::sum_rate_envelope(d, FIG5_EPS),
            fig5_achievable(d)
        )
        .unwrap();
    }
    out
}

fn ratio(x: Rational64) -> String {
    format!("{},{}", x, *x.numer() as f64 / *x.denom() as f64)
}

fn sec5c_csv() -> String {
    let l = out_of_condition_ledger();
    let mut out = String::from("quantity,exact,value\n");
    let names = ["phase1", "phase2_multicast", "phase3_point_to_point"];
    for (name, t) in names.iter().zip(l.terms) {
        writeln!(out, "{name},{}", ratio(t)).unwrap();
    }
    writeln!(out, "terms_total,{}", ratio(l.terms_total)).unwrap();
    writeln!(out, "stated_total,{}", ratio(l.stated_total)).unwrap();
    writeln!(out, "stated_sum_rate,{}", ratio(l.stated_sum_rate)).unwrap();
    writeln!(out, "no_side_info_reference,{}", ratio(l.no_side_info_reference)).unwrap();
    out
}

pub fn emit_figure_data(which: Figure) -> String {
    match which {
        Figure::Fig2 => fig2_csv(),
        Figure::Fig3 => fig3_csv(),
        Figure::Fig5 => fig5_csv(),
        Figure::Sec5c => sec5c_csv(),
    }
}
