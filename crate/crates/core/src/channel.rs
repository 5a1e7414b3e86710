//! Slot-level channel simulation.
//!
//! Transmitters only ever see the link states of *past* slots. The
//! [`DelayedCsitChannel`] draws the state of slot `t` after both inputs for
//! slot `t` have been committed, so an encoder that peeks at the current
//! state cannot be written against this interface.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::params::{ChannelParams, JointLinkPmf};

/// Link gains `(G11, G12, G21, G22)` of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopologyState {
    pub g11: u8,
    pub g12: u8,
    pub g21: u8,
    pub g22: u8,
}

/// The four configurations of the restricted channel, plus everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TopologyClass {
    /// All links on.
    A,
    /// Only the cross links on.
    B,
    /// Only the direct links on.
    C,
    /// All links off.
    D,
    Other,
}

impl TopologyState {
    pub const A: Self = Self::new(1, 1, 1, 1);
    pub const B: Self = Self::new(0, 1, 1, 0);
    pub const C: Self = Self::new(1, 0, 0, 1);
    pub const D: Self = Self::new(0, 0, 0, 0);

    pub const fn new(g11: u8, g12: u8, g21: u8, g22: u8) -> Self {
        Self { g11, g12, g21, g22 }
    }

    /// `g11·8 + g12·4 + g21·2 + g22`.
    pub fn index(&self) -> usize {
        ((self.g11 as usize) << 3)
            | ((self.g12 as usize) << 2)
            | ((self.g21 as usize) << 1)
            | self.g22 as usize
    }

    pub fn from_index(idx: usize) -> Self {
        assert!(idx < 16, "state index {idx} out of range");
        Self::new(
            ((idx >> 3) & 1) as u8,
            ((idx >> 2) & 1) as u8,
            ((idx >> 1) & 1) as u8,
            (idx & 1) as u8,
        )
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..16).map(Self::from_index)
    }

    /// Gain from transmitter `j` to receiver `i` (zero-based).
    pub fn gain(&self, rx: usize, tx: usize) -> u8 {
        match (rx, tx) {
            (0, 0) => self.g11,
            (0, 1) => self.g12,
            (1, 0) => self.g21,
            (1, 1) => self.g22,
            _ => panic!("user index out of range: ({rx}, {tx})"),
        }
    }

    pub fn class(&self) -> TopologyClass {
        classify(*self)
    }
}

pub fn classify(s: TopologyState) -> TopologyClass {
    match s {
        TopologyState::A => TopologyClass::A,
        TopologyState::B => TopologyClass::B,
        TopologyState::C => TopologyClass::C,
        TopologyState::D => TopologyClass::D,
        _ => TopologyClass::Other,
    }
}

/// Received bits `(y1, y2)` for inputs `(x1, x2)` over GF(2).
pub fn receive(s: TopologyState, x1: u8, x2: u8) -> (u8, u8) {
    let y1 = (s.g11 & x1) ^ (s.g12 & x2);
    let y2 = (s.g21 & x1) ^ (s.g22 & x2);
    (y1, y2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSignals {
    pub x1: u8,
    pub x2: u8,
    pub y1: u8,
    pub y2: u8,
}

/// Deterministic RNG for one named stream of one trial.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids used by the simulator; kept apart so that e.g. drawing more
/// coding coefficients never shifts the topology sequence.
pub mod streams {
    pub const TOPOLOGY: u64 = 0;
    pub const MESSAGES: u64 = 1;
    pub const CACHE: u64 = 2;
    pub const CODING: u64 = 3;
}

/// Anything that yields one link state per slot.
pub trait TopologySource {
    fn next_state(&mut self) -> TopologyState;
}

impl<T: TopologySource + ?Sized> TopologySource for Box<T> {
    fn next_state(&mut self) -> TopologyState {
        (**self).next_state()
    }
}

/// i.i.d. draws from a joint link law.
#[derive(Debug, Clone)]
pub struct RandomTopology {
    rng: ChaCha8Rng,
    cdf: Vec<(f64, TopologyState)>,
}

impl RandomTopology {
    pub fn new(pmf: &JointLinkPmf, seed: u64) -> Self {
        let mut acc = 0.0;
        let mut cdf = Vec::new();
        for s in pmf.support() {
            acc += pmf.prob(s);
            cdf.push((acc, s));
        }
        Self {
            rng: stream_rng(seed, streams::TOPOLOGY),
            cdf,
        }
    }
}

impl TopologySource for RandomTopology {
    fn next_state(&mut self) -> TopologyState {
        if self.cdf.len() == 1 {
            return self.cdf[0].1;
        }
        let u: f64 = self.rng.gen();
        for &(c, s) in &self.cdf {
            if u < c {
                return s;
            }
        }
        self.cdf.last().unwrap().1
    }
}

/// Replays a fixed sequence, then repeats its last element.
#[derive(Debug, Clone)]
pub struct ScriptedTopology {
    states: Vec<TopologyState>,
    pos: usize,
}

impl ScriptedTopology {
    pub fn new(states: Vec<TopologyState>) -> Self {
        assert!(!states.is_empty(), "scripted trace must not be empty");
        Self { states, pos: 0 }
    }
}

impl TopologySource for ScriptedTopology {
    fn next_state(&mut self) -> TopologyState {
        let s = self.states[self.pos.min(self.states.len() - 1)];
        self.pos += 1;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyTrace {
    pub states: Vec<TopologyState>,
    pub seed: u64,
}

impl TopologyTrace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `t,g11,g12,g21,g22,class` per slot, one-based `t`, with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,g11,g12,g21,g22,class\n");
        for (t, s) in self.states.iter().enumerate() {
            let class = match s.class() {
                TopologyClass::A => "A",
                TopologyClass::B => "B",
                TopologyClass::C => "C",
                TopologyClass::D => "D",
                TopologyClass::Other => "other",
            };
            writeln!(out, "{},{},{},{},{},{}", t + 1, s.g11, s.g12, s.g21, s.g22, class).unwrap();
        }
        out
    }
}

pub fn sample_trace(params: &ChannelParams, n: usize, seed: u64) -> TopologyTrace {
    let mut src = RandomTopology::new(&params.pmf, seed);
    TopologyTrace {
        states: (0..n).map(|_| src.next_state()).collect(),
        seed,
    }
}

/// Outcome of one slot, revealed to the transmitters only after they
/// committed their inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotOutcome {
    pub state: TopologyState,
    pub signals: SlotSignals,
}

/// A channel with one-slot-delayed state feedback.
#[derive(Debug, Clone)]
pub struct DelayedCsitChannel<S> {
    source: S,
    history: Vec<TopologyState>,
}

impl<S: TopologySource> DelayedCsitChannel<S> {
    pub fn new(source: S) -> Self {
        Self {
            source,
            history: Vec::new(),
        }
    }

    /// States of all completed slots, `G^{t-1}` when slot `t` is next.
    pub fn history(&self) -> &[TopologyState] {
        &self.history
    }

    pub fn slots(&self) -> usize {
        self.history.len()
    }

    /// Commits `(x1, x2)` for the next slot; only then is its state drawn.
    pub fn transmit(&mut self, x1: u8, x2: u8) -> SlotOutcome {
        let state = self.source.next_state();
        self.history.push(state);
        let (y1, y2) = receive(state, x1, x2);
        SlotOutcome {
            state,
            signals: SlotSignals { x1, x2, y1, y2 },
        }
    }

    /// Advances one slot without looking at inputs (both transmitters idle).
    pub fn idle(&mut self) -> TopologyState {
        self.transmit(0, 0).state
    }

    pub fn into_trace(self, seed: u64) -> TopologyTrace {
        TopologyTrace {
            states: self.history,
            seed,
        }
    }
}

/// Runs `n` slots with an encoder that sees only past states.
pub fn run_encoder<F>(
    params: &ChannelParams,
    n: usize,
    seed: u64,
    mut encoder: F,
) -> (TopologyTrace, Vec<SlotSignals>)
where
    F: FnMut(&[TopologyState]) -> (u8, u8),
{
    let mut ch = DelayedCsitChannel::new(RandomTopology::new(&params.pmf, seed));
    let mut signals = Vec::with_capacity(n);
    for _ in 0..n {
        let (x1, x2) = encoder(ch.history());
        signals.push(ch.transmit(x1, x2).signals);
    }
    (ch.into_trace(seed), signals)
}
