//! Three-phase scheme for the symmetric maximum sum-rate point.
//!
//! Phase 1 sends uncached bits uncoded and sorts them by the topology of
//! their first non-erased slot. Phase 2 multicasts `a ⊕ s` for a topology-A
//! bit `a` and a side-information bit `s` the other receiver already knows.
//! Phase 3 multicasts one representative per remaining topology-A pair and
//! sends any unpaired side-information bits point to point.

use serde::{Deserialize, Serialize};

use super::{
    budget, initial_records, multicast, phase1, Abort, Diagnostics, ErrorType, Link, MessageSet,
    Outcome, RunOptions, SchemeResult,
};
use crate::channel::{stream_rng, streams, RandomTopology, TopologySource};
use crate::error::{Error, Result};
use crate::params::FourTopologyParams;
use crate::region;

/// Expected phase lengths in slots, without the `m^{2/3}` guard terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumRateTimes {
    pub t_p1: f64,
    pub t_p2: f64,
    pub t_p3: f64,
    pub t_total: f64,
    /// Expected side-information pool per transmitter.
    pub side_pool: f64,
    /// Expected topology-A bits per transmitter.
    pub n_a: f64,
}

pub fn closed_form_total(delta: f64, eps: f64, m: usize) -> f64 {
    let q = 1.0 - delta * delta;
    (1.0 - delta) * (1.0 + delta + eps) * m as f64 / (q * q)
}

fn check_scope(delta: f64, eps: f64) -> Result<()> {
    if delta > 0.5 || !region::sum_capacity_condition(delta, eps) {
        return Err(Error::Scope(format!(
            "sum-rate scheme needs delta <= 1/2 and eps >= {} (got delta={delta}, eps={eps})",
            region::thresholds::sum_capacity(delta)
        )));
    }
    Ok(())
}

pub fn analytic_times(delta: f64, eps: f64, m: usize) -> Result<SumRateTimes> {
    if m == 0 {
        return Err(Error::Parameter("m must be at least 1".into()));
    }
    check_scope(delta, eps)?;
    Ok(analytic_times_unchecked(delta, eps, m))
}

/// Same model without the scope check. When the side pool exceeds the
/// topology-A count, phase 2 pairs only `N_A` bits and the excess side
/// bits go point to point at rate `1−δ` in phase 3.
pub fn analytic_times_unchecked(delta: f64, eps: f64, m: usize) -> SumRateTimes {
    let m = m as f64;
    let q = 1.0 - delta * delta;
    let t_p1 = eps * m / q;
    let side_pool = (1.0 - eps) * m + delta * (1.0 - delta) * eps * m / q;
    let n_a = (1.0 - delta) * (1.0 - delta) * eps * m / q;
    let paired = side_pool.min(n_a);
    let t_p2 = 2.0 * paired / q;
    let mut t_p3 = (n_a - paired) / q;
    if side_pool > n_a {
        t_p3 += (side_pool - n_a) / (1.0 - delta);
    }
    SumRateTimes {
        t_p1,
        t_p2,
        t_p3,
        t_total: t_p1 + t_p2 + t_p3,
        side_pool,
        n_a,
    }
}

pub fn run(params: FourTopologyParams, m: usize, seed: u64, opts: &RunOptions) -> Result<SchemeResult> {
    let source = RandomTopology::new(&params.pmf(), seed);
    run_with_source(params, m, seed, opts, Box::new(source))
}

/// Runs the scheme against any topology source, e.g. a scripted one.
pub fn run_with_source(
    params: FourTopologyParams,
    m: usize,
    seed: u64,
    opts: &RunOptions,
    source: Box<dyn TopologySource>,
) -> Result<SchemeResult> {
    let (delta, eps) = (params.delta, params.eps);
    if m == 0 {
        return Err(Error::Parameter("m must be at least 1".into()));
    }
    if !opts.allow_out_of_condition {
        check_scope(delta, eps)?;
    }
    let times = analytic_times_unchecked(delta, eps, m);
    let msgs = MessageSet::generate([m, m], eps, opts.cache_mode, seed);
    let mut link = Link::new(&msgs, source, opts.record_transcript);
    let mut records = initial_records(&msgs);
    let mut history = opts.record_status.then(Vec::new);
    let mut diag = Diagnostics {
        cached: [0, 1].map(|u| msgs.cached(u).len()),
        ..Default::default()
    };
    let mut out = Outcome {
        m: [m, m],
        seed,
        times: [0; 3],
        error: None,
        diagnostics: Diagnostics::default(),
        status_history: None,
    };

    // Phase 1.
    let uncached = [msgs.uncached(0), msgs.uncached(1)];
    let p1 = phase1::run(
        &mut link,
        &mut records,
        [&uncached[0], &uncached[1]],
        budget(times.t_p1, m),
        history.as_mut(),
    );
    out.times[0] = p1.slots;
    out.status_history = history;
    diag.n_a = [p1.a[0].len(), p1.a[1].len()];
    diag.n_b = [p1.b[0].len(), p1.b[1].len()];
    diag.delivered_p1 = p1.delivered;
    if let Some(backlog) = p1.backlog {
        out.error = Some((ErrorType::I, Abort { phase: 1, backlog }));
        out.diagnostics = diag;
        return Ok(out.into_result(&mut link));
    }
    let guard = (m as f64).powf(2.0 / 3.0);
    let q = 1.0 - delta * delta;
    let min_a = (1.0 - delta) * (1.0 - delta) * eps * m as f64 / q - guard;
    let min_b = delta * (1.0 - delta) * eps * m as f64 / q - guard;
    let shortfall: f64 = (0..2)
        .map(|u| (min_a - diag.n_a[u] as f64).max(0.0) + (min_b - diag.n_b[u] as f64).max(0.0))
        .sum();
    if shortfall > 0.0 {
        out.error = Some((
            ErrorType::II,
            Abort {
                phase: 1,
                backlog: shortfall.ceil() as usize,
            },
        ));
        out.diagnostics = diag;
        return Ok(out.into_result(&mut link));
    }

    // Phase 2: side pool is cached bits in index order, then topology-B
    // bits in slot order.
    let a = [0, 1].map(|u| p1.a[u].iter().map(|&k| link.global(u, k)).collect::<Vec<_>>());
    let side = [0, 1].map(|u| {
        msgs.cached(u)
            .into_iter()
            .chain(p1.b[u].iter().copied())
            .map(|k| link.global(u, k))
            .collect::<Vec<_>>()
    });
    diag.side_pool = [side[0].len(), side[1].len()];
    let n_xor = [0, 1].map(|u| side[u].len().min(a[u].len()));
    diag.coded_symbols = n_xor;
    let xors = [0, 1].map(|u| (0..n_xor[u]).map(|k| vec![a[u][k], side[u][k]]).collect::<Vec<_>>());
    let mut coding = stream_rng(seed, streams::CODING);
    let mc = multicast::run(
        &mut link,
        [&xors[0], &xors[1]],
        opts.generation_size,
        &mut coding,
        budget(times.t_p2, m),
    );
    out.times[1] = mc.slots;
    if let Some(backlog) = mc.backlog {
        out.error = Some((ErrorType::I, Abort { phase: 2, backlog }));
        out.diagnostics = diag;
        return Ok(out.into_result(&mut link));
    }

    // Phase 3: one representative per pair not covered by both XOR lists,
    // alternating owners so both transmitters stay busy.
    let pairs = a[0].len();
    let first = n_xor[0].min(n_xor[1]);
    let mut reps: [Vec<Vec<usize>>; 2] = [Vec::new(), Vec::new()];
    for k in first..pairs {
        let u = (k - first) % 2;
        reps[u].push(vec![a[u][k]]);
    }
    diag.representatives = [reps[0].len(), reps[1].len()];
    let b3 = budget(times.t_p3, m);
    let mc = multicast::run(
        &mut link,
        [&reps[0], &reps[1]],
        opts.generation_size,
        &mut coding,
        b3,
    );
    out.times[2] = mc.slots;
    if let Some(backlog) = mc.backlog {
        out.error = Some((ErrorType::I, Abort { phase: 3, backlog }));
        out.diagnostics = diag;
        return Ok(out.into_result(&mut link));
    }
    let leftover = [0, 1].map(|u| side[u][n_xor[u]..].to_vec());
    diag.leftover_side = [leftover[0].len(), leftover[1].len()];
    let (slots, backlog) = point_to_point(&mut link, [&leftover[0], &leftover[1]], b3 - out.times[2]);
    out.times[2] += slots;
    if let Some(backlog) = backlog {
        out.error = Some((ErrorType::I, Abort { phase: 3, backlog }));
    }
    out.diagnostics = diag;
    Ok(out.into_result(&mut link))
}

/// Each transmitter repeats its current bit until its direct link is on.
/// The bits are side information at the unintended receiver, so whatever
/// leaks across cancels there.
fn point_to_point(link: &mut Link, bits: [&[usize]; 2], budget: usize) -> (usize, Option<usize>) {
    let mut pos = [0usize; 2];
    let mut slots = 0;
    while pos[0] < bits[0].len() || pos[1] < bits[1].len() {
        if slots >= budget {
            return (slots, Some(bits[0].len() - pos[0] + bits[1].len() - pos[1]));
        }
        let t = [0, 1].map(|u| bits[u].get(pos[u]).map(|&g| vec![g]).unwrap_or_default());
        let state = link.send(&t[0], &t[1]);
        slots += 1;
        for u in 0..2 {
            if pos[u] < bits[u].len() && state.gain(u, u) == 1 {
                pos[u] += 1;
            }
        }
    }
    (slots, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ScriptedTopology, TopologyState};
    use crate::scheme::{BitStatus, CacheMode};
    use approx::assert_abs_diff_eq;

    fn p(delta: f64, eps: f64) -> FourTopologyParams {
        FourTopologyParams::new(delta, eps).unwrap()
    }

    #[test]
    fn analytic_golden_point() {
        let t = analytic_times(0.2, 2.0 / 3.0, 1).unwrap();
        assert_abs_diff_eq!(t.t_total, 0.8 * (1.2 + 2.0 / 3.0) / 0.9216, epsilon = 1e-12);
        assert_eq!((t.t_total * 1e4).round() / 1e4, 1.6204);
        assert_abs_diff_eq!(t.t_p3, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.n_a, t.side_pool, epsilon = 1e-12);
    }

    #[test]
    fn analytic_no_erasure_no_cache() {
        let t = analytic_times(0.0, 1.0, 1000).unwrap();
        assert_eq!((t.t_p1, t.t_p2, t.t_p3, t.t_total), (1000.0, 0.0, 1000.0, 2000.0));
    }

    #[test]
    fn analytic_scope() {
        assert!(matches!(analytic_times(0.6, 1.0, 10), Err(Error::Scope(_))));
        assert!(matches!(analytic_times(0.2, 0.6, 10), Err(Error::Scope(_))));
        assert!(matches!(analytic_times(0.2, 0.7, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn closed_form_on_grid() {
        for i in 0..=10 {
            let d = 0.05 * i as f64;
            for j in 0..=10 {
                let e = region::thresholds::sum_capacity(d) + j as f64 * 0.01;
                if e > 1.0 {
                    continue;
                }
                let m = 1000;
                let t = analytic_times(d, e, m).unwrap();
                assert!((t.t_total - closed_form_total(d, e, m)).abs() <= 1e-9 * m as f64);
                assert!(t.t_p3 >= -1e-9);
            }
        }
    }

    #[test]
    fn condition_identity() {
        for i in 0..=20 {
            let d = 0.025 * i as f64;
            for j in 0..=20 {
                let e = 0.05 * j as f64;
                let t = analytic_times_unchecked(d, e, 1);
                let gap = e * (1.0 - 2.0 * d) / (1.0 + d) - (1.0 - e);
                assert_abs_diff_eq!(t.n_a - t.side_pool, gap, epsilon = 1e-12);
                if (gap).abs() > 1e-9 {
                    assert_eq!(gap > 0.0, region::sum_capacity_condition(d, e), "d={d} e={e}");
                }
            }
        }
    }

    #[test]
    fn no_erasures_take_exactly_the_expected_phases() {
        let r = run(p(0.0, 1.0), 1000, 5, &RunOptions::default()).unwrap();
        assert!(r.success() && r.bit_exact);
        assert_eq!(r.t_p1, 1000);
        assert_eq!(r.t_p2, 0);
        assert_eq!(r.diagnostics.n_a, [1000, 1000]);
        // Random GF(2) coding spends a few extra slots per generation.
        assert!(r.t_p3 >= 1000 && r.t_p3 <= 1000 + 8 * 2, "t_p3 = {}", r.t_p3);
    }

    #[test]
    fn fig6_cell() {
        // a, b under A; c, d cached; a⊕c and b⊕d then reach both receivers.
        let script = vec![TopologyState::A, TopologyState::B, TopologyState::C];
        let opts = RunOptions {
            record_transcript: true,
            ..Default::default()
        };
        let r = run_with_source(p(0.0, 0.5), 2, 9, &opts, Box::new(ScriptedTopology::new(script)))
            .unwrap();
        assert_eq!(r.diagnostics.n_a, [1, 1]);
        assert_eq!(r.diagnostics.cached, [1, 1]);
        assert_eq!(r.diagnostics.coded_symbols, [1, 1]);
        assert_eq!((r.t_p1, r.t_p2, r.t_p3), (1, 2, 0));
        assert!(r.success() && r.bit_exact);
        let t = r.transcript.unwrap();
        for rx in 0..2 {
            // Cache unit equation, a⊕b, and one coded symbol from each side.
            assert_eq!(t.equations[rx].len(), 4);
            assert!(t.global_solve(rx).is_ok());
        }
    }

    #[test]
    fn small_m_matches_global_solve() {
        for seed in 0..6 {
            let opts = RunOptions {
                record_transcript: true,
                generation_size: 16,
                ..Default::default()
            };
            let r = run(p(0.2, 0.8), 300, seed, &opts).unwrap();
            assert!(r.success(), "seed {seed}: {:?}", r.error_type);
            let msgs = MessageSet::generate([300, 300], 0.8, CacheMode::Deterministic, seed);
            let t = r.transcript.unwrap();
            assert_eq!(t.global_solve(0).unwrap(), msgs.bits[0]);
            assert_eq!(t.global_solve(1).unwrap(), msgs.bits[1]);
        }
    }

    #[test]
    fn status_buckets_conserved() {
        let opts = RunOptions {
            record_status: true,
            cache_mode: CacheMode::Bernoulli,
            ..Default::default()
        };
        let r = run(p(0.3, 0.9), 500, 17, &opts).unwrap();
        let h = r.status_history.unwrap();
        assert!(h.len() >= 2 && h.len() <= r.t_p1 + 1);
        for counts in &h {
            for u in 0..2 {
                assert_eq!(counts[u].iter().sum::<usize>(), 500);
            }
        }
        let last = h.last().unwrap();
        for u in 0..2 {
            assert_eq!(last[u][BitStatus::Pending as usize], 0);
            assert_eq!(last[u][BitStatus::ClassifiedA as usize], r.diagnostics.n_a[u]);
            assert_eq!(last[u][BitStatus::SideInfo as usize], r.diagnostics.cached[u]);
        }
    }

    #[test]
    fn out_of_scope_needs_opt_in() {
        assert!(matches!(
            run(p(0.5, 0.75), 100, 1, &RunOptions::default()),
            Err(Error::Scope(_))
        ));
        let opts = RunOptions {
            allow_out_of_condition: true,
            ..Default::default()
        };
        let r = run(p(0.5, 0.75), 3000, 1, &opts).unwrap();
        assert!(r.success() && r.bit_exact);
        assert!(r.diagnostics.leftover_side.iter().all(|&n| n > 0));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = run(p(0.2, 2.0 / 3.0), 2000, 42, &RunOptions::default()).unwrap();
        let b = run(p(0.2, 2.0 / 3.0), 2000, 42, &RunOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
