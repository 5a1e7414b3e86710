use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use eic_cache::bench::{self, ExperimentConfig, Figure, Scheme};
use eic_cache::entropy;
use eic_cache::region;
use eic_cache::scheme::{CacheMode, SchemeResult};
use eic_cache::{ChannelParams, Error, FourTopologyParams, ParamConfig};

#[derive(Parser)]
#[command(name = "eic", version, about = "Erasure interference channel with caches: bounds and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Outer-bound rate region as CSV.
    Region {
        #[command(flatten)]
        channel: ChannelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo runs of one scheme; one CSV row per trial.
    Simulate {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Swap the roles of the two users (corner scheme only).
        #[arg(long)]
        mirror: bool,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate statistics over a list of δ values.
    Sweep {
        #[arg(long, default_value = "2/3", value_parser = parse_prob)]
        eps: f64,
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_prob)]
        deltas: Vec<f64>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive check of the converse leakage inequality on random strategies (JSON).
    VerifyEntropy {
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical phase-overrun frequency against the concentration bound.
    ErrorProb {
        #[arg(long, default_value = "1/5", value_parser = parse_prob)]
        delta: f64,
        #[arg(long, default_value = "2/3", value_parser = parse_prob)]
        eps: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [1_000usize, 10_000, 100_000])]
        m: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Data behind the published figures.
    Figure {
        #[arg(value_enum)]
        which: FigureArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ChannelArgs {
    #[arg(long, default_value = "1/5", value_parser = parse_prob)]
    delta: f64,
    #[arg(long, default_value = "2/3", value_parser = parse_prob)]
    eps: f64,
    /// Parameter file; its values override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value_t = SchemeArg::Sumrate)]
    scheme: SchemeArg,
    /// Bits per user for the sum-rate scheme, bits of user 2 for the corner scheme.
    #[arg(long, default_value_t = 100_000)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = CacheArg::Deterministic)]
    cache_mode: CacheArg,
    #[arg(long)]
    allow_out_of_condition: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Sumrate,
    Corner,
}

#[derive(Clone, Copy, ValueEnum)]
enum CacheArg {
    Deterministic,
    Bernoulli,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureArg {
    Fig2,
    Fig3,
    Fig5,
    Sec5c,
}

/// Accepts a decimal or a fraction such as `5/7`.
fn parse_prob(s: &str) -> std::result::Result<f64, String> {
    let value = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
            let d: f64 = d.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
            if d == 0.0 {
                return Err(format!("zero denominator in {s:?}"));
            }
            n / d
        }
        None => s.trim().parse().map_err(|_| format!("cannot parse {s:?} as a number"))?,
    };
    Ok(value)
}

impl ChannelArgs {
    fn file(&self) -> Result<Option<ParamConfig>> {
        let Some(path) = &self.config else { return Ok(None) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Some(ParamConfig::parse(&text)?))
    }

    fn channel(&self) -> Result<ChannelParams> {
        match self.file()? {
            Some(cfg) => Ok(cfg.channel_params()?),
            None => Ok(ChannelParams::from_four_topology(FourTopologyParams::new(self.delta, self.eps)?)?),
        }
    }

    fn four_topology(&self) -> Result<FourTopologyParams> {
        match self.file()? {
            Some(cfg) => Ok(cfg.four_topology()?),
            None => Ok(FourTopologyParams::new(self.delta, self.eps)?),
        }
    }
}

impl RunArgs {
    fn experiment(&self, delta: f64, eps: f64) -> ExperimentConfig {
        let scheme = match self.scheme {
            SchemeArg::Sumrate => Scheme::SumRate,
            SchemeArg::Corner => Scheme::Corner,
        };
        let mut cfg = ExperimentConfig::new(scheme, delta, eps, self.m, self.trials, self.seed);
        cfg.options.cache_mode = match self.cache_mode {
            CacheArg::Deterministic => CacheMode::Deterministic,
            CacheArg::Bernoulli => CacheMode::Bernoulli,
        };
        cfg.options.allow_out_of_condition = self.allow_out_of_condition;
        cfg
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn mirror(results: &mut [SchemeResult]) {
    for r in results {
        std::mem::swap(&mut r.r1, &mut r.r2);
        r.m.swap(0, 1);
        r.decoded.swap(0, 1);
    }
}

fn trial_json(r: &SchemeResult) -> serde_json::Value {
    json!({
        "seed": r.seed,
        "m": r.m,
        "t_p1": r.t_p1,
        "t_p2": r.t_p2,
        "t_p3": r.t_p3,
        "t_total": r.t_total,
        "decoded": r.decoded,
        "bit_exact": r.bit_exact,
        "error_type": r.error_type.map(|e| e.as_str()),
        "sum_rate": r.sum_rate,
        "r1": r.r1,
        "r2": r.r2,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Region { channel, out } => {
            let params = channel.channel()?;
            emit(&out, &region::outer_region(&params).to_csv())
        }
        Command::Simulate {
            channel,
            run,
            mirror: swap,
            format,
            out,
        } => {
            let p = channel.four_topology()?;
            let cfg = run.experiment(p.delta, p.eps);
            if swap && cfg.scheme != Scheme::Corner {
                anyhow::bail!("--mirror applies to the corner scheme only");
            }
            let mut results = bench::run_trials(&cfg)?;
            if swap {
                mirror(&mut results);
            }
            let agg = bench::aggregate(&results);
            eprintln!(
                "trials={} decoded={} sum_rate={:.6}±{:.6} r1={:.6} r2={:.6} error_i={} error_ii={}",
                agg.trials,
                agg.decoded_trials,
                agg.sum_rate.mean,
                agg.sum_rate.sd,
                agg.r1.mean,
                agg.r2.mean,
                agg.error_i_freq,
                agg.error_ii_freq
            );
            let text = match format {
                Format::Csv => bench::trials_csv(&cfg, &results),
                Format::Json => {
                    let doc = json!({
                        "scheme": cfg.scheme,
                        "delta": cfg.delta,
                        "eps": cfg.eps,
                        "m": cfg.m,
                        "seed0": cfg.seed0,
                        "mirrored": swap,
                        "aggregate": agg,
                        "trials": results.iter().map(trial_json).collect::<Vec<_>>(),
                    });
                    serde_json::to_string_pretty(&doc)? + "\n"
                }
            };
            emit(&out, &text)
        }
        Command::Sweep { eps, deltas, run, out } => {
            let mut text = String::from(
                "delta,eps,trials,decoded,sum_rate_mean,sum_rate_sd,t_total_mean,error_i_freq,error_ii_freq,decode_failure_freq,envelope\n",
            );
            for d in deltas {
                let cfg = run.experiment(d, eps);
                match bench::run_experiment(&cfg) {
                    Ok(a) => text.push_str(&format!(
                        "{d},{eps},{},{},{},{},{},{},{},{},{}\n",
                        a.trials,
                        a.decoded_trials,
                        a.sum_rate.mean,
                        a.sum_rate.sd,
                        a.t_total.mean,
                        a.error_i_freq,
                        a.error_ii_freq,
                        a.decode_failure_freq,
                        region::sum_rate_envelope(d, eps)
                    )),
                    Err(Error::Scope(msg)) => eprintln!("skipping delta={d}: {msg}"),
                    Err(e) => return Err(e.into()),
                }
            }
            emit(&out, &text)
        }
        Command::VerifyEntropy { cases, seed, out } => {
            let reports = entropy::fuzz_leakage(cases, seed);
            let precursor_fail = reports.iter().filter(|r| !r.precursor.holds).count();
            let leakage_fail = reports.iter().filter(|r| !r.leakage.holds).count();
            let c_fail = reports.iter().filter(|r| !r.leakage_c_slack.holds).count();
            let doc = json!({
                "cases": cases,
                "seed0": seed,
                "precursor_violations": precursor_fail,
                "leakage_violations": leakage_fail,
                "leakage_c_slack_violations": c_fail,
                "reports": reports,
            });
            emit(&out, &(serde_json::to_string_pretty(&doc)? + "\n"))
        }
        Command::ErrorProb {
            delta,
            eps,
            m,
            trials,
            seed,
            out,
        } => {
            let rows = bench::error_prob_sweep(delta, eps, &m, trials, seed)?;
            emit(&out, &bench::error_prob_csv(&rows))
        }
        Command::Figure { which, out } => {
            let fig = match which {
                FigureArg::Fig2 => Figure::Fig2,
                FigureArg::Fig3 => Figure::Fig3,
                FigureArg::Fig5 => Figure::Fig5,
                FigureArg::Sec5c => Figure::Sec5c,
            };
            emit(&out, &bench::emit_figure_data(fig))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Scope(_)) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
