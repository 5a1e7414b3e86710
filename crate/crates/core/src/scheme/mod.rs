//! Packet-level achievability schemes for the symmetric four-topology
//! channel, and the slot engine they share.

use std::ops::Range;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    stream_rng, streams, DelayedCsitChannel, SlotOutcome, TopologyClass, TopologySource,
    TopologyState,
};
use crate::error::Result;
use crate::gf2::{EquationSystem, PeelingDecoder};

pub mod corner;
mod multicast;
mod phase1;
pub mod sumrate;

/// Default joint RLNC generation size per transmitter.
pub const DEFAULT_GENERATION: usize = 256;
/// Residual size up to which the staged decoder falls back to elimination.
const RESIDUAL_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CacheMode {
    /// Exactly `round((1−ε)·m)` cached bits, chosen uniformly.
    #[default]
    Deterministic,
    /// Each bit cached independently with probability `1−ε`.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageSet {
    pub bits: [Vec<u8>; 2],
    /// `cache_mask[i][k]`: bit `k` of user `i` is known at the other receiver.
    pub cache_mask: [Vec<bool>; 2],
}

impl MessageSet {
    pub fn generate(lens: [usize; 2], eps: f64, mode: CacheMode, seed: u64) -> Self {
        let mut msg_rng = stream_rng(seed, streams::MESSAGES);
        let mut cache_rng = stream_rng(seed, streams::CACHE);
        let bits = lens.map(|n| (0..n).map(|_| msg_rng.gen::<u8>() & 1).collect::<Vec<u8>>());
        let cache_mask = lens.map(|n| match mode {
            CacheMode::Bernoulli => (0..n).map(|_| cache_rng.gen::<f64>() < 1.0 - eps).collect(),
            CacheMode::Deterministic => {
                let k = round_half_up((1.0 - eps) * n as f64).min(n);
                let mut mask = vec![false; n];
                for i in sample(&mut cache_rng, n, k) {
                    mask[i] = true;
                }
                mask
            }
        });
        Self { bits, cache_mask }
    }

    pub fn len(&self, user: usize) -> usize {
        self.bits[user].len()
    }

    pub fn uncached(&self, user: usize) -> Vec<usize> {
        (0..self.len(user)).filter(|&k| !self.cache_mask[user][k]).collect()
    }

    pub fn cached(&self, user: usize) -> Vec<usize> {
        (0..self.len(user)).filter(|&k| self.cache_mask[user][k]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BitStatus {
    Pending,
    Delivered,
    ClassifiedA,
    ClassifiedB,
    SideInfo,
}

impl BitStatus {
    pub const ALL: [BitStatus; 5] = [
        BitStatus::Pending,
        BitStatus::Delivered,
        BitStatus::ClassifiedA,
        BitStatus::ClassifiedB,
        BitStatus::SideInfo,
    ];

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitRecord {
    pub status: BitStatus,
    pub first_success_topology: Option<TopologyClass>,
}

/// Type I: a queue is still non-empty when its phase budget runs out.
/// Type II: too few topology-A or topology-B bits after phase 1. No other
/// error type is defined, so none is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorType {
    I,
    II,
}

impl ErrorType {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorType::I => "I",
            ErrorType::II => "II",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abort {
    pub phase: u8,
    /// Bits (or coded symbols) still owed when the run stopped.
    pub backlog: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub cache_mode: CacheMode,
    pub generation_size: usize,
    /// Run outside the scheme's proven operating region instead of
    /// returning a scope error.
    pub allow_out_of_condition: bool,
    /// Keep every receiver equation at message level for a global re-solve.
    pub record_transcript: bool,
    /// Keep per-slot status bucket counts during phase 1.
    pub record_status: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            cache_mode: CacheMode::Deterministic,
            generation_size: DEFAULT_GENERATION,
            allow_out_of_condition: false,
            record_transcript: false,
            record_status: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equation {
    pub terms: Vec<usize>,
    pub rhs: u8,
}

/// Message-level equations seen by each receiver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub unknowns: usize,
    pub own: [Range<usize>; 2],
    pub equations: [Vec<Equation>; 2],
}

impl Transcript {
    /// Dense global solve of receiver `rx`'s own message.
    pub fn global_solve(&self, rx: usize) -> Result<Vec<u8>> {
        let mut sys = EquationSystem::new(self.unknowns);
        for eq in &self.equations[rx] {
            sys.add_sparse(&eq.terms, eq.rhs)?;
        }
        let targets: Vec<usize> = self.own[rx].clone().collect();
        sys.solve(&targets)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub cached: [usize; 2],
    pub n_a: [usize; 2],
    pub n_b: [usize; 2],
    pub delivered_p1: [usize; 2],
    pub side_pool: [usize; 2],
    pub coded_symbols: [usize; 2],
    pub representatives: [usize; 2],
    pub leftover_side: [usize; 2],
    /// Corner scheme: clean views of Tx1 at Rx1 while Tx2 sends its side
    /// bits, and what Rx1 still needed when that phase began.
    pub rx1_p3_clean: usize,
    pub rx1_p3_needed: usize,
    /// Corner scheme: per Tx2 bit, slots in which it was sent with G22 = 1.
    pub tx2_direct_hits: Vec<u8>,
    /// Non-erased slots per receiver.
    pub heard_slots: [usize; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeResult {
    pub seed: u64,
    pub m: [usize; 2],
    pub t_p1: usize,
    pub t_p2: usize,
    pub t_p3: usize,
    pub t_total: usize,
    pub decoded: [bool; 2],
    /// Decoded values equal the transmitted messages bit for bit.
    pub bit_exact: bool,
    pub error_type: Option<ErrorType>,
    pub abort: Option<Abort>,
    /// `(m1 + m2) / t_total`, present only when both receivers decode.
    pub sum_rate: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub diagnostics: Diagnostics,
    pub transcript: Option<Transcript>,
    pub status_history: Option<Vec<[[usize; 5]; 2]>>,
}

impl SchemeResult {
    pub fn success(&self) -> bool {
        self.decoded == [true, true] && self.error_type.is_none()
    }
}

pub(crate) fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Slot budget for a phase: `ceil(expected + m^{2/3})`.
pub fn budget(expected: f64, m: usize) -> usize {
    (expected + (m as f64).powf(2.0 / 3.0)).ceil() as usize
}

/// Channel, message bits and receivers of one trial. Message bits live in
/// one index space: user 1 at `0..m1`, user 2 at `m1..m1+m2`.
pub(crate) struct Link {
    channel: DelayedCsitChannel<Box<dyn TopologySource>>,
    values: Vec<u8>,
    offset: [usize; 2],
    pub decoders: [PeelingDecoder; 2],
    transcript: Option<[Vec<Equation>; 2]>,
    heard: [usize; 2],
}

impl Link {
    pub fn new(msgs: &MessageSet, source: Box<dyn TopologySource>, record: bool) -> Self {
        let m = [msgs.len(0), msgs.len(1)];
        let mut values = msgs.bits[0].clone();
        values.extend_from_slice(&msgs.bits[1]);
        let n = m[0] + m[1];
        let mut link = Self {
            channel: DelayedCsitChannel::new(source),
            values,
            offset: [0, m[0]],
            decoders: [PeelingDecoder::new(n), PeelingDecoder::new(n)],
            transcript: record.then(|| [Vec::new(), Vec::new()]),
            heard: [0, 0],
        };
        // Rx r holds the other user's cached bits.
        for (rx, user) in [(0, 1), (1, 0)] {
            for k in msgs.cached(user) {
                let g = link.global(user, k);
                let v = link.values[g];
                link.hear(rx, &[g], v);
            }
        }
        link
    }

    pub fn global(&self, user: usize, k: usize) -> usize {
        self.offset[user] + k
    }

    pub fn xor_of(&self, terms: &[usize]) -> u8 {
        terms.iter().fold(0, |a, &t| a ^ self.values[t])
    }

    pub fn total_unknowns(&self) -> usize {
        self.values.len()
    }

    pub fn recording(&self) -> bool {
        self.transcript.is_some()
    }

    pub fn transmit_raw(&mut self, x1: u8, x2: u8) -> SlotOutcome {
        let out = self.channel.transmit(x1, x2);
        for rx in 0..2 {
            if out.state.gain(rx, 0) == 1 || out.state.gain(rx, 1) == 1 {
                self.heard[rx] += 1;
            }
        }
        out
    }

    /// Transmits two sparse symbols (empty = silent) and feeds each
    /// receiver the equation it observes.
    pub fn send(&mut self, t1: &[usize], t2: &[usize]) -> TopologyState {
        let x1 = self.xor_of(t1);
        let x2 = self.xor_of(t2);
        let out = self.transmit_raw(x1, x2);
        let ys = [out.signals.y1, out.signals.y2];
        let mut terms = Vec::with_capacity(t1.len() + t2.len());
        for (rx, &y) in ys.iter().enumerate() {
            terms.clear();
            if out.state.gain(rx, 0) == 1 {
                terms.extend_from_slice(t1);
            }
            if out.state.gain(rx, 1) == 1 {
                terms.extend_from_slice(t2);
            }
            if !terms.is_empty() {
                self.hear(rx, &terms, y);
            }
        }
        out.state
    }

    /// Feeds one message-level equation to a receiver's decoder.
    pub fn hear(&mut self, rx: usize, terms: &[usize], rhs: u8) {
        self.decoders[rx].add_equation(terms, rhs);
        self.log(rx, terms, rhs);
    }

    /// Records an equation in the transcript without decoding it; used when
    /// the staged decoder sees a coded slot only after generation solve.
    pub fn log(&mut self, rx: usize, terms: &[usize], rhs: u8) {
        if let Some(t) = self.transcript.as_mut() {
            t[rx].push(Equation {
                terms: terms.to_vec(),
                rhs,
            });
        }
    }

    pub fn heard_slots(&self) -> [usize; 2] {
        self.heard
    }

    /// Finishes decoding and compares against the truth.
    pub fn finish(&mut self) -> ([bool; 2], bool) {
        let own = self.own_ranges();
        let mut decoded = [false; 2];
        let mut exact = true;
        for rx in 0..2 {
            if !self.decoders[rx].all_known(own[rx].clone()) {
                self.decoders[rx].complete_residual(RESIDUAL_LIMIT);
            }
            decoded[rx] =
                !self.decoders[rx].is_inconsistent() && self.decoders[rx].all_known(own[rx].clone());
            exact &= decoded[rx]
                && own[rx]
                    .clone()
                    .all(|g| self.decoders[rx].value(g) == Some(self.values[g]));
        }
        (decoded, exact)
    }

    pub fn own_ranges(&self) -> [Range<usize>; 2] {
        [
            self.offset[0]..self.offset[1],
            self.offset[1]..self.values.len(),
        ]
    }

    pub fn take_transcript(&mut self) -> Option<Transcript> {
        let own = self.own_ranges();
        let unknowns = self.values.len();
        self.transcript.take().map(|equations| Transcript {
            unknowns,
            own,
            equations,
        })
    }
}

/// Assembles a result once a run has stopped, normally or by abort.
pub(crate) struct Outcome {
    pub m: [usize; 2],
    pub seed: u64,
    pub times: [usize; 3],
    pub error: Option<(ErrorType, Abort)>,
    pub diagnostics: Diagnostics,
    pub status_history: Option<Vec<[[usize; 5]; 2]>>,
}

impl Outcome {
    pub fn into_result(self, link: &mut Link) -> SchemeResult {
        let (decoded, bit_exact) = if self.error.is_some() {
            ([false, false], false)
        } else {
            link.finish()
        };
        let t_total: usize = self.times.iter().sum();
        let ok = decoded == [true, true] && self.error.is_none() && t_total > 0;
        let rate = |bits: usize| ok.then(|| bits as f64 / t_total as f64);
        let mut diagnostics = self.diagnostics;
        diagnostics.heard_slots = link.heard_slots();
        SchemeResult {
            seed: self.seed,
            m: self.m,
            t_p1: self.times[0],
            t_p2: self.times[1],
            t_p3: self.times[2],
            t_total,
            decoded,
            bit_exact,
            error_type: self.error.map(|e| e.0),
            abort: self.error.map(|e| e.1),
            sum_rate: rate(self.m[0] + self.m[1]),
            r1: rate(self.m[0]),
            r2: rate(self.m[1]),
            diagnostics,
            transcript: link.take_transcript(),
            status_history: self.status_history,
        }
    }
}

pub(crate) fn status_counts(records: &[Vec<BitRecord>; 2]) -> [[usize; 5]; 2] {
    let mut out = [[0; 5]; 2];
    for (u, recs) in records.iter().enumerate() {
        for r in recs {
            out[u][r.status.slot()] += 1;
        }
    }
    out
}

pub(crate) fn initial_records(msgs: &MessageSet) -> [Vec<BitRecord>; 2] {
    [0, 1].map(|u| {
        msgs.cache_mask[u]
            .iter()
            .map(|&c| BitRecord {
                status: if c { BitStatus::SideInfo } else { BitStatus::Pending },
                first_success_topology: None,
            })
            .collect()
    })
}
