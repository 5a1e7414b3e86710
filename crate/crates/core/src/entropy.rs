//! Exhaustive entropy oracle for tiny coding strategies: enumerates every
//! message pair and link-state trace, and evaluates the leakage inequality
//! and its exact precursor.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{receive, stream_rng, TopologyState};
use crate::error::{Error, Result};
use crate::params::{ChannelParams, FourTopologyParams};

pub const MAX_SLOTS: usize = 5;
pub const MAX_BITS: usize = 3;
pub const MAX_ATOMS: u128 = 10_000_000;
pub const ENTROPY_TOL: f64 = 1e-10;

/// Delayed-CSIT encoders for both users over `n` slots.
///
/// `tables[i][t]` maps `(w_i, G^{t})` to `X_i[t+1]`, indexed as
/// `w_i · 16^t + h` where `h` is the base-16 index of the past states (most
/// recent slot in the lowest digit). The own cache mask is a function of
/// `W_i`, so `W_i` alone is the message input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub n: usize,
    pub m: [usize; 2],
    /// `cache_mask[i][k]`: bit `k` of `W_i` is cached at the other receiver.
    pub cache_mask: [Vec<bool>; 2],
    pub tables: [Vec<Vec<u8>>; 2],
}

fn history_len(t: usize) -> usize {
    16usize.pow(t as u32)
}

impl StrategySpec {
    pub fn from_fn(
        n: usize,
        m: [usize; 2],
        cache_mask: [Vec<bool>; 2],
        f: impl Fn(usize, usize, u8, &[TopologyState]) -> u8,
    ) -> Result<Self> {
        let tables = [0, 1].map(|u| {
            (0..n)
                .map(|t| {
                    let h = history_len(t);
                    (0..(1usize << m[u]) * h)
                        .map(|idx| {
                            let (w, hist) = (idx / h, idx % h);
                            let past: Vec<TopologyState> = (0..t)
                                .map(|j| TopologyState::from_index((hist >> (4 * (t - 1 - j))) & 15))
                                .collect();
                            f(u, t, w as u8, &past) & 1
                        })
                        .collect()
                })
                .collect()
        });
        let s = Self {
            n,
            m,
            cache_mask,
            tables,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn silent(n: usize, m: [usize; 2], cache_mask: [Vec<bool>; 2]) -> Result<Self> {
        Self::from_fn(n, m, cache_mask, |_, _, _, _| 0)
    }

    /// Uniformly random truth tables.
    pub fn random(rng: &mut ChaCha8Rng, n: usize, m: [usize; 2], cache_mask: [Vec<bool>; 2]) -> Result<Self> {
        let tables = [0, 1].map(|u| {
            (0..n)
                .map(|t| (0..(1usize << m[u]) * history_len(t)).map(|_| rng.gen::<u8>() & 1).collect())
                .collect()
        });
        let s = Self {
            n,
            m,
            cache_mask,
            tables,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_SLOTS {
            return Err(Error::Parameter(format!("horizon {} outside 1..={MAX_SLOTS}", self.n)));
        }
        for u in 0..2 {
            if self.m[u] > MAX_BITS {
                return Err(Error::Parameter(format!("m{} = {} exceeds {MAX_BITS}", u + 1, self.m[u])));
            }
            if self.cache_mask[u].len() != self.m[u] {
                return Err(Error::LengthMismatch {
                    expected: self.m[u],
                    got: self.cache_mask[u].len(),
                });
            }
            if self.tables[u].len() != self.n {
                return Err(Error::LengthMismatch {
                    expected: self.n,
                    got: self.tables[u].len(),
                });
            }
            for (t, tab) in self.tables[u].iter().enumerate() {
                let want = (1usize << self.m[u]) * history_len(t);
                if tab.len() != want {
                    return Err(Error::LengthMismatch {
                        expected: want,
                        got: tab.len(),
                    });
                }
            }
        }
        Ok(())
    }

    fn mask_bits(&self, u: usize) -> u8 {
        self.cache_mask[u]
            .iter()
            .enumerate()
            .fold(0, |a, (k, &c)| if c { a | (1 << k) } else { a })
    }

    /// Fraction of `W_i` not cached at the other receiver.
    pub fn miss_fraction(&self, u: usize) -> Option<f64> {
        (self.m[u] > 0).then(|| {
            self.cache_mask[u].iter().filter(|&&c| !c).count() as f64 / self.m[u] as f64
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub w: [u8; 2],
    /// Base-16 trace index, first slot in the highest digit.
    pub trace: u32,
    /// Received bits, slot `t` in bit `t`.
    pub y: [u8; 2],
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub n: usize,
    pub m: [usize; 2],
    pub cache_bits: [u8; 2],
    pub atoms: Vec<Atom>,
}

pub fn enumerate_joint(strategy: &StrategySpec, params: &ChannelParams) -> Result<JointTable> {
    strategy.validate()?;
    let support = params.pmf.support();
    let n = strategy.n;
    let size = (1u128 << (strategy.m[0] + strategy.m[1])) * (support.len() as u128).pow(n as u32);
    if size > MAX_ATOMS {
        return Err(Error::SizeCap(size));
    }
    let traces = support.len().pow(n as u32);
    let mut atoms = Vec::with_capacity(size as usize);
    let mut states = vec![TopologyState::D; n];
    for tr in 0..traces {
        let mut rest = tr;
        let mut prob = 1.0;
        let mut code = 0u32;
        for s in states.iter_mut() {
            *s = support[rest % support.len()];
            rest /= support.len();
            prob *= params.pmf.prob(*s);
            code = code * 16 + s.index() as u32;
        }
        prob /= (1u64 << (strategy.m[0] + strategy.m[1])) as f64;
        for w1 in 0..(1u8 << strategy.m[0]) {
            for w2 in 0..(1u8 << strategy.m[1]) {
                let mut y = [0u8; 2];
                let mut hist = 0usize;
                for (t, s) in states.iter().enumerate() {
                    let x = [(0, w1), (1, w2)].map(|(u, w)| {
                        strategy.tables[u][t][w as usize * history_len(t) + hist]
                    });
                    let (y1, y2) = receive(*s, x[0], x[1]);
                    y[0] |= y1 << t;
                    y[1] |= y2 << t;
                    hist = hist * 16 + s.index();
                }
                atoms.push(Atom {
                    w: [w1, w2],
                    trace: code,
                    y,
                    prob,
                });
            }
        }
    }
    Ok(JointTable {
        n,
        m: strategy.m,
        cache_bits: [strategy.mask_bits(0), strategy.mask_bits(1)],
        atoms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    W1,
    W2,
    /// Part of `W1` cached at Rx2.
    W12,
    /// Part of `W2` cached at Rx1.
    W21,
    Y1,
    Y2,
    /// Full link-state trace `Gⁿ`. Every conditioning on the state sequence
    /// uses it, including the one written `Sⁿ` in the leakage bound.
    G,
}

impl FromStr for Var {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "W1" => Var::W1,
            "W2" => Var::W2,
            "W12" => Var::W12,
            "W21" => Var::W21,
            "Y1" => Var::Y1,
            "Y2" => Var::Y2,
            "G" => Var::G,
            other => return Err(Error::UnknownVariable(other.to_string())),
        })
    }
}

impl JointTable {
    fn key(&self, a: &Atom, vars: &[Var]) -> u64 {
        vars.iter().fold(0u64, |k, v| {
            k | match v {
                Var::W1 => a.w[0] as u64,
                Var::W2 => (a.w[1] as u64) << 4,
                Var::W12 => ((a.w[0] & self.cache_bits[0]) as u64) << 8,
                Var::W21 => ((a.w[1] & self.cache_bits[1]) as u64) << 12,
                Var::Y1 => (a.y[0] as u64) << 16,
                Var::Y2 => (a.y[1] as u64) << 24,
                Var::G => (a.trace as u64) << 32,
            }
        })
    }

    /// Joint entropy in bits.
    pub fn entropy(&self, vars: &[Var]) -> f64 {
        let mut mass: BTreeMap<u64, f64> = BTreeMap::new();
        for a in &self.atoms {
            if a.prob > 0.0 {
                *mass.entry(self.key(a, vars)).or_default() += a.prob;
            }
        }
        mass.values().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
    }

    pub fn total_probability(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).sum()
    }
}

/// `H(target | given)` over the enumerated law.
pub fn conditional_entropy(table: &JointTable, target: &[Var], given: &[Var]) -> f64 {
    let all: Vec<Var> = target.iter().chain(given).copied().collect();
    (table.entropy(&all) - table.entropy(given)).max(0.0)
}

/// Same, with variables named as in `W1, W2, W12, W21, Y1, Y2, G`.
pub fn conditional_entropy_named(table: &JointTable, target: &[&str], given: &[&str]) -> Result<f64> {
    let parse = |xs: &[&str]| xs.iter().map(|s| s.parse()).collect::<Result<Vec<Var>>>();
    Ok(conditional_entropy(table, &parse(target)?, &parse(given)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            slack: lhs - rhs,
            holds: lhs - rhs >= -ENTROPY_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub n: usize,
    pub m: [usize; 2],
    /// `(1−δ21)/(1−δ_Tx1)`.
    pub coefficient: f64,
    pub eps2: f64,
    pub beta1: f64,
    /// `H(W1 | Y1ⁿ, W2, Gⁿ)`.
    pub fano: f64,
    /// `H(Y2ⁿ|W12,W2,Gⁿ) ≥ c·H(Y1ⁿ|W12,W2,Gⁿ)`.
    pub precursor: InequalityCheck,
    /// `H(Y2ⁿ|W12,W2,Gⁿ) + β1·F ≥ β1·H(Y1ⁿ|W2,Gⁿ)`.
    pub leakage: InequalityCheck,
    /// Same with slack `c·F`, which is what the precursor chain yields.
    pub leakage_c_slack: InequalityCheck,
}

pub fn check_leakage(strategy: &StrategySpec, params: &ChannelParams) -> Result<LeakageReport> {
    let table = enumerate_joint(strategy, params)?;
    let denom = 1.0 - params.delta_tx[0];
    let coefficient = if denom > 0.0 {
        (1.0 - params.delta[1][0]) / denom
    } else {
        0.0
    };
    let eps2 = strategy.miss_fraction(0).unwrap_or(params.eps[1]);
    let beta1 = eps2 * coefficient;
    use Var::*;
    let lhs = conditional_entropy(&table, &[Y2], &[W12, W2, G]);
    let y1_side = conditional_entropy(&table, &[Y1], &[W12, W2, G]);
    let y1 = conditional_entropy(&table, &[Y1], &[W2, G]);
    let fano = conditional_entropy(&table, &[W1], &[Y1, W2, G]);
    Ok(LeakageReport {
        n: strategy.n,
        m: strategy.m,
        coefficient,
        eps2,
        beta1,
        fano,
        precursor: InequalityCheck::new(lhs, coefficient * y1_side),
        leakage: InequalityCheck::new(lhs + beta1 * fano, beta1 * y1),
        leakage_c_slack: InequalityCheck::new(lhs + coefficient * fano, beta1 * y1),
    })
}

pub const FUZZ_DELTAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Random strategy on the four-topology channel: `m_i ∈ {1, 2}`,
/// `n ∈ {1, 2, 3}`, δ from [`FUZZ_DELTAS`], random cache masks.
pub fn random_case(seed: u64) -> (StrategySpec, ChannelParams) {
    let mut rng = stream_rng(seed, 7);
    let n = rng.gen_range(1..=3);
    let m = [rng.gen_range(1..=2), rng.gen_range(1..=2)];
    let masks = m.map(|k| (0..k).map(|_| rng.gen::<bool>()).collect::<Vec<bool>>());
    let delta = FUZZ_DELTAS[rng.gen_range(0..FUZZ_DELTAS.len())];
    let strategy = StrategySpec::random(&mut rng, n, m, masks).expect("sizes within limits");
    let eps = [0, 1].map(|u| strategy.miss_fraction(1 - u).unwrap_or(1.0));
    let four = FourTopologyParams::new(delta, eps[1]).expect("grid delta");
    let mut params = ChannelParams::from_four_topology(four).expect("valid law");
    params.eps = eps;
    (strategy, params)
}

/// Leakage reports for `cases` random strategies, seeds `seed0..`.
pub fn fuzz_leakage(cases: usize, seed0: u64) -> Vec<LeakageReport> {
    (0..cases as u64)
        .into_par_iter()
        .map(|i| {
            let (s, p) = random_case(seed0 + i);
            check_leakage(&s, &p).expect("fuzz cases are enumerable")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use Var::*;

    fn four(delta: f64) -> ChannelParams {
        ChannelParams::from_four_topology(FourTopologyParams::new(delta, 1.0).unwrap()).unwrap()
    }

    fn indep(delta: f64) -> ChannelParams {
        ChannelParams::from_independent(delta, delta, delta, delta, 1.0, 1.0).unwrap()
    }

    fn x1_is_w1() -> StrategySpec {
        StrategySpec::from_fn(1, [1, 0], [vec![false], vec![]], |u, _, w, _| if u == 0 { w } else { 0 })
            .unwrap()
    }

    #[test]
    fn one_slot_one_bit_half_erasure() {
        let s = StrategySpec::silent(1, [1, 1], [vec![false], vec![false]]).unwrap();
        let t = enumerate_joint(&s, &four(0.5)).unwrap();
        assert_eq!(t.atoms.len(), 16);
        for a in &t.atoms {
            assert_abs_diff_eq!(a.prob, 1.0 / 16.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(t.total_probability(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn silent_outputs_are_zero() {
        let s = StrategySpec::silent(2, [2, 1], [vec![true, false], vec![false]]).unwrap();
        let t = enumerate_joint(&s, &indep(0.3)).unwrap();
        assert!(t.atoms.iter().all(|a| a.y == [0, 0]));
        assert_abs_diff_eq!(t.entropy(&[Y1, Y2]), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cross_delivery_probability() {
        let t = enumerate_joint(&x1_is_w1(), &four(0.2)).unwrap();
        for w in 0..2u8 {
            let p: f64 = t
                .atoms
                .iter()
                .filter(|a| a.w[0] == w && a.y[1] == w && a.trace == TopologyState::B.index() as u32)
                .map(|a| a.prob)
                .sum();
            assert_abs_diff_eq!(p, 0.5 * 4.0 / 25.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn basic_entropies() {
        let s = StrategySpec::silent(1, [2, 1], [vec![false, false], vec![false]]).unwrap();
        let t = enumerate_joint(&s, &four(0.4)).unwrap();
        assert_abs_diff_eq!(conditional_entropy(&t, &[W1], &[]), 2.0, epsilon = 1e-12);
        let t = enumerate_joint(&x1_is_w1(), &indep(0.5)).unwrap();
        assert_abs_diff_eq!(conditional_entropy(&t, &[Y1], &[W1, W2, G]), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(conditional_entropy(&t, &[Y2], &[W12, W2, G]), 0.5, epsilon = 1e-12);
        assert!(matches!(
            conditional_entropy_named(&t, &["Y3"], &[]),
            Err(Error::UnknownVariable(_))
        ));
        assert_abs_diff_eq!(
            conditional_entropy_named(&t, &["Y2"], &["W12", "W2", "G"]).unwrap(),
            0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn one_slot_leakage_example() {
        let r = check_leakage(&x1_is_w1(), &indep(0.5)).unwrap();
        assert_abs_diff_eq!(r.precursor.lhs, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.coefficient, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.precursor.rhs, 1.0 / 3.0, epsilon = 1e-12);
        assert!(r.precursor.holds && r.leakage.holds);
    }

    #[test]
    fn silent_leakage_is_tight_zero() {
        let s = StrategySpec::silent(3, [2, 2], [vec![true, false], vec![false, true]]).unwrap();
        let r = check_leakage(&s, &four(0.3)).unwrap();
        assert_abs_diff_eq!(r.precursor.lhs, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.precursor.rhs, 0.0, epsilon = 1e-12);
        assert!(r.leakage.holds);
    }

    #[test]
    fn size_cap() {
        let s = StrategySpec::silent(5, [3, 3], [vec![false; 3], vec![false; 3]]).unwrap();
        assert!(matches!(enumerate_joint(&s, &indep(0.5)), Err(Error::SizeCap(_))));
    }

    #[test]
    fn invariants_on_random_strategies() {
        for seed in 0..200 {
            let (s, p) = random_case(seed);
            let t = enumerate_joint(&s, &p).unwrap();
            assert_abs_diff_eq!(t.total_probability(), 1.0, epsilon = 1e-12);
            assert!(conditional_entropy(&t, &[Y1], &[W1, W2, G]) < ENTROPY_TOL);
            assert!(conditional_entropy(&t, &[Y2], &[W1, W2, G]) < ENTROPY_TOL);
            assert!(conditional_entropy(&t, &[W1], &[]) + ENTROPY_TOL >= conditional_entropy(&t, &[Y1], &[W2, G]));
            // Chain rule.
            let h_joint = t.entropy(&[Y1, Y2, G]);
            let chained = t.entropy(&[G])
                + conditional_entropy(&t, &[Y1], &[G])
                + conditional_entropy(&t, &[Y2], &[Y1, G]);
            assert_abs_diff_eq!(h_joint, chained, epsilon = 1e-10);
        }
    }

    #[test]
    fn history_is_passed_oldest_first() {
        // X1 at slot 2 echoes whether slot 1 was topology B.
        let s = StrategySpec::from_fn(2, [0, 0], [vec![], vec![]], |u, t, _, past| {
            (u == 0 && t == 1 && past[0] == TopologyState::B) as u8
        })
        .unwrap();
        let t = enumerate_joint(&s, &four(0.5)).unwrap();
        for a in &t.atoms {
            let first = (a.trace / 16) as usize;
            let second = TopologyState::from_index((a.trace % 16) as usize);
            let sent = (first == TopologyState::B.index()) as u8;
            assert_eq!(a.y[0] >> 1, sent & second.g11);
        }
    }
}
