//! Multicast of coded symbols from both transmitters to both receivers over
//! the erasure MAC, by generation-based random linear network coding.
//!
//! A symbol is the XOR of a few message bits. In each generation both
//! transmitters send random nonzero combinations of their current block of
//! symbols every slot; the block is retired once both receivers hold full
//! rank over the joint block, at which point the solved symbol values go to
//! the message-level decoders as sparse equations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Link;
use crate::gf2::{BitRow, EquationSystem};

pub(crate) struct Multicast {
    pub slots: usize,
    /// Symbols not yet retired when the budget ran out.
    pub backlog: Option<usize>,
}

fn random_nonzero(rng: &mut ChaCha8Rng, len: usize) -> Vec<u64> {
    let words = len.div_ceil(64);
    let tail = len % 64;
    loop {
        let mut v: Vec<u64> = (0..words).map(|_| rng.gen()).collect();
        if tail != 0 {
            *v.last_mut().unwrap() &= (1u64 << tail) - 1;
        }
        if v.iter().any(|&w| w != 0) {
            return v;
        }
    }
}

#[cfg(test)]
fn ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(i, &w)| {
        let mut w = w;
        std::iter::from_fn(move || {
            if w == 0 {
                return None;
            }
            let b = w.trailing_zeros() as usize;
            w &= w - 1;
            Some(i * 64 + b)
        })
    })
}

fn pack(bits: &[u8]) -> Vec<u64> {
    let mut v = vec![0u64; bits.len().div_ceil(64)];
    for (k, &b) in bits.iter().enumerate() {
        if b & 1 == 1 {
            v[k / 64] |= 1 << (k % 64);
        }
    }
    v
}

fn parity(a: &[u64], b: &[u64]) -> u8 {
    (a.iter().zip(b).map(|(x, y)| (x & y).count_ones()).sum::<u32>() & 1) as u8
}

pub(crate) fn run(
    link: &mut Link,
    symbols: [&[Vec<usize>]; 2],
    generation: usize,
    rng: &mut ChaCha8Rng,
    budget: usize,
) -> Multicast {
    // Blocks split each transmitter's list proportionally so that every
    // block keeps both transmitters busy when both have symbols.
    let lens = [symbols[0].len(), symbols[1].len()];
    let blocks = (lens[0] + lens[1]).div_ceil(2 * generation.max(1));
    let cut = |u: usize, j: usize| j * lens[u] / blocks.max(1);
    let mut slots = 0;
    for j in 0..blocks {
        let block = [0, 1].map(|u| &symbols[u][cut(u, j)..cut(u, j + 1)]);
        let sizes = [block[0].len(), block[1].len()];
        let n = sizes[0] + sizes[1];
        let packed = [0, 1].map(|u| {
            let vals: Vec<u8> = block[u].iter().map(|t| link.xor_of(t)).collect();
            pack(&vals)
        });
        let mut sys = [EquationSystem::new(n), EquationSystem::new(n)];
        while !(sys[0].is_full_rank() && sys[1].is_full_rank()) {
            if slots >= budget {
                let owed = |u: usize| lens[u] - cut(u, j);
                return Multicast {
                    slots,
                    backlog: Some(owed(0) + owed(1)),
                };
            }
            let coeffs = [0, 1].map(|u| (sizes[u] > 0).then(|| random_nonzero(rng, sizes[u])));
            let x = [0, 1].map(|u| coeffs[u].as_ref().map_or(0, |c| parity(c, &packed[u])));
            let out = link.transmit_raw(x[0], x[1]);
            slots += 1;
            let ys = [out.signals.y1, out.signals.y2];
            for rx in 0..2 {
                let mut row = BitRow::zeros(n);
                let mut any = false;
                for u in 0..2 {
                    if out.state.gain(rx, u) == 1 {
                        if let Some(c) = &coeffs[u] {
                            let base = if u == 0 { 0 } else { sizes[0] };
                            row.xor_bits_at(base, c, sizes[u]);
                            any = true;
                        }
                    }
                }
                if !any {
                    continue;
                }
                if link.recording() {
                    let mut msg = BitRow::zeros(link.total_unknowns());
                    for k in row.ones() {
                        let (u, i) = if k < sizes[0] { (0, k) } else { (1, k - sizes[0]) };
                        for &t in &block[u][i] {
                            msg.flip(t);
                        }
                    }
                    let terms: Vec<usize> = msg.ones().collect();
                    link.log(rx, &terms, ys[rx]);
                }
                if !sys[rx].is_full_rank() {
                    sys[rx]
                        .add_equation(row, ys[rx])
                        .expect("row sized to the block");
                }
            }
        }
        for (rx, s) in sys.iter().enumerate() {
            let vals = s.solve_full().expect("full rank");
            for (k, v) in vals.into_iter().enumerate() {
                let (u, i) = if k < sizes[0] { (0, k) } else { (1, k - sizes[0]) };
                // Already in the transcript at slot level.
                link.decoders[rx].add_equation(&block[u][i], v);
            }
        }
    }
    Multicast {
        slots,
        backlog: None,
    }
}
