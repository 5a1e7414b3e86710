//! Corner-point scheme: user 2 runs at its point-to-point rate `1−δ` while
//! Tx1 fits its `m1` bits around it.
//!
//! Phase 1 is the sum-rate phase 1 on `ε·m1` bits per transmitter. In phase
//! 2 Tx2 finishes its uncached bits, each repeated until `G22 = 1`, while
//! Tx1 multicasts its topology-A bits with the usual delayed-feedback XOR
//! queues. In phase 3 Tx2 sends bits Rx1 already knows, so Rx1 always hears
//! Tx1 cleanly, and Tx1 superposes its remaining A bits with the bits Rx2
//! knows but Rx1 needs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{
    budget, initial_records, phase1, round_half_up, Abort, Diagnostics, ErrorType, Link,
    MessageSet, Outcome, RunOptions, SchemeResult,
};
use crate::channel::{RandomTopology, TopologyClass, TopologySource};
use crate::error::{Error, Result};
use crate::params::FourTopologyParams;
use crate::region;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerConfig {
    pub delta: f64,
    pub eps: f64,
    /// Bits of user 2.
    pub m: usize,
    /// Bits of user 1, `round(δ(1+δ)m/ε)`.
    pub m1: usize,
}

impl CornerConfig {
    pub fn new(delta: f64, eps: f64, m: usize) -> Result<Self> {
        FourTopologyParams::new(delta, eps)?;
        if eps <= 0.0 {
            return Err(Error::Degenerate("corner scheme needs eps > 0".into()));
        }
        if m == 0 {
            return Err(Error::Parameter("m must be at least 1".into()));
        }
        let m1 = round_half_up(delta * (1.0 + delta) * m as f64 / eps);
        Ok(Self { delta, eps, m, m1 })
    }

    pub fn params(&self) -> FourTopologyParams {
        FourTopologyParams {
            delta: self.delta,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerTimes {
    pub t_p1: f64,
    pub t_p2: f64,
    /// `m − t_p2`: the time Tx2 needs for its bits known at Rx1.
    pub t_p3: f64,
    pub t_p23: f64,
    pub t_total: f64,
    /// Phase-3 length as `(1 − ε/(1+δ))/(1−δ)·m`.
    pub t_p3_stated: f64,
    /// Tx1 side-information count as `δ(1+δ−ε)/ε·m`.
    pub side_info_stated: f64,
    /// Tx1 side-information count as `(1−ε)·m1`.
    pub side_info_cached: f64,
    /// Time to send `side_info_stated` bits at rate `(1−δ)²`.
    pub side_time_stated: f64,
}

pub fn analytic_times(cfg: &CornerConfig) -> Result<CornerTimes> {
    if !region::region_condition(cfg.delta, cfg.eps)? {
        return Err(Error::Scope(format!(
            "corner scheme needs eps >= {} at delta = {}",
            region::thresholds::sum_capacity(cfg.delta).max(region::thresholds::corner(cfg.delta)),
            cfg.delta
        )));
    }
    Ok(analytic_times_unchecked(cfg))
}

/// Closed forms with the unrounded `m1 = δ(1+δ)m/ε`.
pub fn analytic_times_unchecked(cfg: &CornerConfig) -> CornerTimes {
    let (d, e, m) = (cfg.delta, cfg.eps, cfg.m as f64);
    let m1 = d * (1.0 + d) * m / e;
    let t_p1 = e * m1 / (1.0 - d * d);
    let t_p2 = (e * m - e * m1) / (1.0 - d);
    let t_p3 = m - t_p2;
    let side_info_stated = d * (1.0 + d - e) / e * m;
    CornerTimes {
        t_p1,
        t_p2,
        t_p3,
        t_p23: t_p2 + t_p3,
        t_total: t_p1 + t_p2 + t_p3,
        t_p3_stated: (1.0 - e / (1.0 + d)) / (1.0 - d) * m,
        side_info_stated,
        side_info_cached: (1.0 - e) * m1,
        side_time_stated: side_info_stated / ((1.0 - d) * (1.0 - d)),
    }
}

pub fn run(cfg: &CornerConfig, seed: u64, opts: &RunOptions) -> Result<SchemeResult> {
    let source = RandomTopology::new(&cfg.params().pmf(), seed);
    run_with_source(cfg, seed, opts, Box::new(source))
}

/// What Tx1 puts on the air in one slot.
#[derive(Debug, Clone, Copy)]
enum Tx1Symbol {
    Silent,
    /// Head of Q1 xor head of Q2 (phase 2) or of the Rx2-known pool (phase 3).
    Pair(usize, usize),
    Fresh(usize),
    /// A bit only Rx2 still needs.
    ForRx2(usize),
    /// A bit only Rx1 still needs.
    ForRx1(usize),
}

impl Tx1Symbol {
    fn terms(&self) -> Vec<usize> {
        match *self {
            Tx1Symbol::Silent => vec![],
            Tx1Symbol::Pair(a, b) => vec![a, b],
            Tx1Symbol::Fresh(f) | Tx1Symbol::ForRx2(f) | Tx1Symbol::ForRx1(f) => vec![f],
        }
    }
}

/// Tx1's bookkeeping for its topology-A bits.
///
/// `q0`: known to neither receiver. `q1`: known to Rx1 only. `q2`: known
/// to Rx2 only. `known_rx2`: bits Rx2 knows from the start (cached at Rx2
/// or first received under B); only Rx1 still needs them.
struct Tx1Queues {
    q0: VecDeque<usize>,
    q1: VecDeque<usize>,
    q2: VecDeque<usize>,
    known_rx2: VecDeque<usize>,
}

impl Tx1Queues {
    fn rx1_done(&self) -> bool {
        self.q0.is_empty() && self.q2.is_empty() && self.known_rx2.is_empty()
    }

    fn rx2_done(&self) -> bool {
        self.q0.is_empty() && self.q1.is_empty()
    }

    fn backlog(&self) -> usize {
        self.q0.len() + self.q1.len() + self.q2.len() + self.known_rx2.len()
    }

    fn pick_phase2(&self) -> Tx1Symbol {
        match (self.q1.front(), self.q2.front(), self.q0.front()) {
            (Some(&a), Some(&b), _) => Tx1Symbol::Pair(a, b),
            (_, _, Some(&f)) => Tx1Symbol::Fresh(f),
            (Some(&a), None, None) => Tx1Symbol::ForRx2(a),
            (None, Some(&b), None) => Tx1Symbol::ForRx1(b),
            (None, None, None) => Tx1Symbol::Silent,
        }
    }

    fn rx1_pool_head(&self) -> Option<usize> {
        self.q2.front().or(self.known_rx2.front()).copied()
    }

    fn pick_phase3(&self) -> Tx1Symbol {
        match (self.q1.front(), self.rx1_pool_head(), self.q0.front()) {
            (Some(&a), Some(p), _) => Tx1Symbol::Pair(a, p),
            (_, _, Some(&f)) => Tx1Symbol::Fresh(f),
            (None, Some(p), None) => Tx1Symbol::ForRx1(p),
            (Some(&a), None, None) => Tx1Symbol::ForRx2(a),
            (None, None, None) => Tx1Symbol::Silent,
        }
    }

    fn pop_rx1_pool(&mut self) {
        if self.q2.pop_front().is_none() {
            self.known_rx2.pop_front();
        }
    }

    /// Applies the feedback of one slot. In phase 2 the second half of a
    /// pair is the head of Q2; in phase 3 it is the head of the Rx1 pool.
    fn update(&mut self, sym: Tx1Symbol, rx1_clean: bool, rx2_clean: bool) {
        match sym {
            Tx1Symbol::Silent => {}
            Tx1Symbol::Pair(_, _) => {
                if rx2_clean {
                    self.q1.pop_front();
                }
                if rx1_clean {
                    self.pop_rx1_pool();
                }
            }
            Tx1Symbol::Fresh(f) => {
                if rx1_clean || rx2_clean {
                    self.q0.pop_front();
                    if rx1_clean && !rx2_clean {
                        self.q1.push_back(f);
                    } else if rx2_clean && !rx1_clean {
                        self.q2.push_back(f);
                    }
                }
            }
            Tx1Symbol::ForRx2(_) => {
                if rx2_clean {
                    self.q1.pop_front();
                }
            }
            Tx1Symbol::ForRx1(_) => {
                if rx1_clean {
                    self.pop_rx1_pool();
                }
            }
        }
    }
}

pub fn run_with_source(
    cfg: &CornerConfig,
    seed: u64,
    opts: &RunOptions,
    source: Box<dyn TopologySource>,
) -> Result<SchemeResult> {
    if !opts.allow_out_of_condition {
        analytic_times(cfg)?;
    }
    let (delta, eps, m, m1) = (cfg.delta, cfg.eps, cfg.m, cfg.m1);
    let times = analytic_times_unchecked(cfg);
    let msgs = MessageSet::generate([m1, m], eps, opts.cache_mode, seed);
    let mut link = Link::new(&msgs, source, opts.record_transcript);
    let mut records = initial_records(&msgs);
    let mut history = opts.record_status.then(Vec::new);
    let mut diag = Diagnostics {
        cached: [0, 1].map(|u| msgs.cached(u).len()),
        tx2_direct_hits: vec![0; m],
        ..Default::default()
    };
    let mut out = Outcome {
        m: [m1, m],
        seed,
        times: [0; 3],
        error: None,
        diagnostics: Diagnostics::default(),
        status_history: None,
    };

    // Phase 1: the same number of uncached bits from each transmitter.
    let uncached = [msgs.uncached(0), msgs.uncached(1)];
    let n1 = uncached[0].len().min(uncached[1].len());
    let p1 = phase1::run(
        &mut link,
        &mut records,
        [&uncached[0], &uncached[1][..n1]],
        budget(times.t_p1, m),
        history.as_mut(),
    );
    out.times[0] = p1.slots;
    out.status_history = history;
    diag.n_a = [p1.a[0].len(), p1.a[1].len()];
    diag.n_b = [p1.b[0].len(), p1.b[1].len()];
    diag.delivered_p1 = p1.delivered;
    for &k in &uncached[1][..n1] {
        if matches!(
            records[1][k].first_success_topology,
            Some(TopologyClass::A | TopologyClass::C)
        ) {
            diag.tx2_direct_hits[k] = 1;
        }
    }
    if let Some(backlog) = p1.backlog {
        out.error = Some((ErrorType::I, Abort { phase: 1, backlog }));
        out.diagnostics = diag;
        return Ok(out.into_result(&mut link));
    }
    let guard = (m as f64).powf(2.0 / 3.0);
    let sent = eps * m1 as f64 / (1.0 - delta * delta);
    let min_a = (1.0 - delta) * (1.0 - delta) * sent - guard;
    let min_b = delta * (1.0 - delta) * sent - guard;
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

    let g1 = |k: usize| link.global(0, k);
    let mut queues = Tx1Queues {
        q0: p1.a[0].iter().map(|&k| g1(k)).collect(),
        q1: VecDeque::new(),
        q2: VecDeque::new(),
        known_rx2: msgs
            .cached(0)
            .into_iter()
            .chain(p1.b[0].iter().copied())
            .map(g1)
            .collect(),
    };
    diag.side_pool = [queues.known_rx2.len(), 0];

    // Phase 2.
    let fresh2: Vec<usize> = uncached[1][n1..].to_vec();
    let b2 = budget(times.t_p2, m);
    let mut pos = 0;
    let mut rx1_knows = false;
    while pos < fresh2.len() {
        if out.times[1] >= b2 {
            out.error = Some((
                ErrorType::I,
                Abort {
                    phase: 2,
                    backlog: fresh2.len() - pos,
                },
            ));
            out.diagnostics = diag;
            return Ok(out.into_result(&mut link));
        }
        let sym = queues.pick_phase2();
        let cur = fresh2[pos];
        let s = link.send(&sym.terms(), &[link.global(1, cur)]);
        out.times[1] += 1;
        let tx1_silent = matches!(sym, Tx1Symbol::Silent);
        let rx1_clean = s.g11 == 1 && (s.g12 == 0 || rx1_knows);
        let rx2_clean = s.g21 == 1 && s.g22 == 0;
        queues.update(sym, rx1_clean, rx2_clean);
        if s.g12 == 1 && (s.g11 == 0 || tx1_silent) {
            rx1_knows = true;
        }
        if s.g22 == 1 {
            diag.tx2_direct_hits[cur] += 1;
            pos += 1;
            rx1_knows = false;
        }
    }

    // Phase 3: Tx2's bits are all known at Rx1.
    let side2: Vec<usize> = msgs
        .cached(1)
        .into_iter()
        .chain(p1.b[1].iter().copied())
        .collect();
    diag.side_pool[1] = side2.len();
    diag.rx1_p3_needed = queues.q0.len() + queues.q2.len() + queues.known_rx2.len();
    let b3 = budget(times.t_p3, m);
    let mut pos = 0;
    while pos < side2.len() || !(queues.rx1_done() && queues.rx2_done()) {
        if out.times[2] >= b3 {
            out.error = Some((
                ErrorType::I,
                Abort {
                    phase: 3,
                    backlog: side2.len() - pos + queues.backlog(),
                },
            ));
            out.diagnostics = diag;
            return Ok(out.into_result(&mut link));
        }
        let sym = queues.pick_phase3();
        let tx2 = side2.get(pos).copied();
        let t2 = tx2.map(|k| vec![link.global(1, k)]).unwrap_or_default();
        let s = link.send(&sym.terms(), &t2);
        out.times[2] += 1;
        let rx1_clean = s.g11 == 1;
        let rx2_clean = s.g21 == 1 && (s.g22 == 0 || tx2.is_none());
        if rx1_clean && tx2.is_some() {
            diag.rx1_p3_clean += 1;
        }
        queues.update(sym, rx1_clean, rx2_clean);
        if let Some(k) = tx2 {
            if s.g22 == 1 {
                diag.tx2_direct_hits[k] += 1;
                pos += 1;
            }
        }
    }
    out.diagnostics = diag;
    Ok(out.into_result(&mut link))
}
