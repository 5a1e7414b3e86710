//! Linear algebra over GF(2).
//!
//! Two decoders share one contract (a unit vector is decodable iff it lies
//! in the row space of the received equations):
//!
//! * [`EquationSystem`] keeps a dense, bit-packed echelon basis and answers
//!   rank questions exactly. Incremental insertion costs `O(rank · words)`.
//! * [`PeelingDecoder`] handles very large sparse systems by substitution.
//!   Anything it cannot resolve can be handed to a dense elimination over
//!   the residual unknowns with [`PeelingDecoder::complete_residual`].

use crate::error::{Error, Result};

const NO_PIVOT: u32 = u32::MAX;

/// A packed row of GF(2) coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitRow {
    words: Vec<u64>,
    len: usize,
}

impl BitRow {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn unit(len: usize, k: usize) -> Self {
        let mut r = Self::zeros(len);
        r.set(k, true);
        r
    }

    pub fn from_indices(len: usize, idx: &[usize]) -> Self {
        let mut r = Self::zeros(len);
        for &k in idx {
            r.flip(k);
        }
        r
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut r = Self::zeros(bits.len());
        for (k, &b) in bits.iter().enumerate() {
            if b & 1 == 1 {
                r.set(k, true);
            }
        }
        r
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, k: usize) -> bool {
        (self.words[k / 64] >> (k % 64)) & 1 == 1
    }

    pub fn set(&mut self, k: usize, v: bool) {
        assert!(k < self.len, "bit {k} out of range {}", self.len);
        let mask = 1u64 << (k % 64);
        if v {
            self.words[k / 64] |= mask;
        } else {
            self.words[k / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, k: usize) {
        assert!(k < self.len, "bit {k} out of range {}", self.len);
        self.words[k / 64] ^= 1u64 << (k % 64);
    }

    pub fn xor_assign(&mut self, other: &BitRow) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    /// XORs the packed bits `src` into positions starting at `offset`.
    pub fn xor_bits_at(&mut self, offset: usize, src: &[u64], src_len: usize) {
        assert!(offset + src_len <= self.len, "source runs past the row");
        let (w0, shift) = (offset / 64, offset % 64);
        for (i, &s) in src.iter().enumerate() {
            if s == 0 {
                continue;
            }
            self.words[w0 + i] ^= s << shift;
            if shift > 0 && w0 + i + 1 < self.words.len() {
                self.words[w0 + i + 1] ^= s >> (64 - shift);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Inner product with a bit vector.
    pub fn dot(&self, bits: &[u8]) -> u8 {
        self.ones().fold(0, |acc, k| acc ^ (bits[k] & 1))
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut x = word;
            std::iter::from_fn(move || {
                if x == 0 {
                    return None;
                }
                let tz = x.trailing_zeros() as usize;
                x &= x - 1;
                Some(w * 64 + tz)
            })
        })
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

/// Dense GF(2) system with incrementally maintained echelon basis.
///
/// Every basis row is stored with its lowest set bit as pivot, and no two
/// basis rows share a pivot. Reducing a vector by repeatedly cancelling its
/// lowest bit therefore terminates in zero exactly when the vector lies in
/// the row space.
#[derive(Debug, Clone)]
pub struct EquationSystem {
    unknowns: usize,
    rows: Vec<(BitRow, u8)>,
    basis: Vec<(BitRow, u8)>,
    pivot_of: Vec<u32>,
}

impl EquationSystem {
    pub fn new(unknown_count: usize) -> Self {
        Self {
            unknowns: unknown_count,
            rows: Vec::new(),
            basis: Vec::new(),
            pivot_of: vec![NO_PIVOT; unknown_count],
        }
    }

    pub fn unknown_count(&self) -> usize {
        self.unknowns
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[(BitRow, u8)] {
        &self.rows
    }

    pub fn is_full_rank(&self) -> bool {
        self.basis.len() == self.unknowns
    }

    /// Reduces `row` in place against the basis. Returns the lowest
    /// remaining bit, or `None` if the row reduced to zero.
    fn reduce(&self, row: &mut BitRow, rhs: &mut u8) -> Option<usize> {
        let words = row.words.len();
        let mut w = 0;
        loop {
            while w < words && row.words[w] == 0 {
                w += 1;
            }
            if w == words {
                return None;
            }
            let col = w * 64 + row.words[w].trailing_zeros() as usize;
            let b = self.pivot_of[col];
            if b == NO_PIVOT {
                return Some(col);
            }
            let (brow, brhs) = &self.basis[b as usize];
            for (a, x) in row.words[w..].iter_mut().zip(&brow.words[w..]) {
                *a ^= x;
            }
            *rhs ^= brhs;
        }
    }

    /// Stores the equation and returns whether it increased the rank.
    pub fn add_equation(&mut self, coeffs: BitRow, rhs: u8) -> Result<bool> {
        if coeffs.len() != self.unknowns {
            return Err(Error::LengthMismatch {
                expected: self.unknowns,
                got: coeffs.len(),
            });
        }
        let rhs = rhs & 1;
        let mut red = coeffs.clone();
        let mut red_rhs = rhs;
        self.rows.push((coeffs, rhs));
        match self.reduce(&mut red, &mut red_rhs) {
            None => Ok(false),
            Some(col) => {
                self.pivot_of[col] = self.basis.len() as u32;
                self.basis.push((red, red_rhs));
                Ok(true)
            }
        }
    }

    pub fn add_sparse(&mut self, indices: &[usize], rhs: u8) -> Result<bool> {
        if let Some(&k) = indices.iter().find(|&&k| k >= self.unknowns) {
            return Err(Error::LengthMismatch {
                expected: self.unknowns,
                got: k + 1,
            });
        }
        self.add_equation(BitRow::from_indices(self.unknowns, indices), rhs)
    }

    /// True iff `coeffs` lies in the current row space.
    pub fn in_row_space(&self, coeffs: &BitRow) -> bool {
        let mut r = coeffs.clone();
        let mut rhs = 0;
        self.reduce(&mut r, &mut rhs).is_none()
    }

    /// Value implied for unknown `k`, if it is determined.
    pub fn value_of(&self, k: usize) -> Option<u8> {
        let mut r = BitRow::unit(self.unknowns, k);
        let mut acc = 0;
        match self.reduce(&mut r, &mut acc) {
            None => Some(acc),
            Some(_) => None,
        }
    }

    pub fn solvable_for(&self, targets: &[usize]) -> bool {
        targets.iter().all(|&k| k < self.unknowns && self.value_of(k).is_some())
    }

    /// Bits of `targets`, in the same order. Fails on the first target that
    /// is not determined by the stored rows.
    pub fn solve(&self, targets: &[usize]) -> Result<Vec<u8>> {
        targets
            .iter()
            .map(|&k| {
                if k >= self.unknowns {
                    return Err(Error::NotSolvable(k));
                }
                self.value_of(k).ok_or(Error::NotSolvable(k))
            })
            .collect()
    }

    /// All unknowns by one back-substitution pass, if the system has full
    /// rank. Each basis row has its pivot as lowest bit, so pivots are
    /// resolved from the highest column down.
    pub fn solve_full(&self) -> Option<Vec<u8>> {
        if !self.is_full_rank() {
            return None;
        }
        let mut x = BitRow::zeros(self.unknowns);
        for col in (0..self.unknowns).rev() {
            let (row, rhs) = &self.basis[self.pivot_of[col] as usize];
            let mut v = *rhs;
            for (a, b) in row.words.iter().zip(&x.words) {
                v ^= ((a & b).count_ones() & 1) as u8;
            }
            x.set(col, v == 1);
        }
        Some((0..self.unknowns).map(|k| x.get(k) as u8).collect())
    }

    /// Rank obtained by eliminating every stored row afresh.
    pub fn rank_from_scratch(&self) -> usize {
        let mut fresh = EquationSystem::new(self.unknowns);
        for (r, rhs) in &self.rows {
            fresh.add_equation(r.clone(), *rhs).expect("row length already checked");
        }
        fresh.rank()
    }
}

const UNKNOWN: u8 = 2;

/// Substitution decoder for large sparse systems.
///
/// Equations are reduced by every known value on arrival; an equation with a
/// single unknown left resolves it, and the resolution propagates through
/// every equation that mentions the unknown.
#[derive(Debug, Clone)]
pub struct PeelingDecoder {
    values: Vec<u8>,
    eq_start: Vec<u32>,
    eq_terms: Vec<u32>,
    eq_remaining: Vec<u32>,
    eq_rhs: Vec<u8>,
    watch: Vec<Vec<u32>>,
    equations_seen: usize,
    inconsistent: bool,
}

impl PeelingDecoder {
    pub fn new(unknown_count: usize) -> Self {
        Self {
            values: vec![UNKNOWN; unknown_count],
            eq_start: vec![0],
            eq_terms: Vec::new(),
            eq_remaining: Vec::new(),
            eq_rhs: Vec::new(),
            watch: vec![Vec::new(); unknown_count],
            equations_seen: 0,
            inconsistent: false,
        }
    }

    pub fn unknown_count(&self) -> usize {
        self.values.len()
    }

    /// Number of equations handed to the decoder, including redundant ones.
    pub fn equations_seen(&self) -> usize {
        self.equations_seen
    }

    /// Set if two equations ever contradicted each other.
    pub fn is_inconsistent(&self) -> bool {
        self.inconsistent
    }

    pub fn value(&self, k: usize) -> Option<u8> {
        match self.values[k] {
            UNKNOWN => None,
            v => Some(v),
        }
    }

    pub fn is_known(&self, k: usize) -> bool {
        self.values[k] != UNKNOWN
    }

    pub fn all_known(&self, targets: impl IntoIterator<Item = usize>) -> bool {
        targets.into_iter().all(|k| self.is_known(k))
    }

    pub fn add_equation(&mut self, terms: &[usize], rhs: u8) {
        self.equations_seen += 1;
        let mut rhs = rhs & 1;
        let mut open: Vec<usize> = Vec::with_capacity(terms.len());
        for &k in terms {
            match self.values[k] {
                UNKNOWN => open.push(k),
                v => rhs ^= v,
            }
        }
        // x ⊕ x = 0: repeated terms cancel pairwise.
        open.sort_unstable();
        let mut dedup: Vec<usize> = Vec::with_capacity(open.len());
        for k in open {
            if dedup.last() == Some(&k) {
                dedup.pop();
            } else {
                dedup.push(k);
            }
        }
        match dedup.len() {
            0 => {
                if rhs != 0 {
                    self.inconsistent = true;
                }
            }
            1 => self.assign(dedup[0], rhs),
            _ => {
                let id = self.eq_remaining.len() as u32;
                for &k in &dedup {
                    self.eq_terms.push(k as u32);
                    self.watch[k].push(id);
                }
                self.eq_start.push(self.eq_terms.len() as u32);
                self.eq_remaining.push(dedup.len() as u32);
                self.eq_rhs.push(rhs);
            }
        }
    }

    /// Records a known value (cache contents, decoded symbols) and propagates.
    pub fn assign(&mut self, k: usize, v: u8) {
        let mut pending: Vec<(usize, u8)> = vec![(k, v & 1)];
        let mut ready: Vec<u32> = Vec::new();
        loop {
            if let Some((k, v)) = pending.pop() {
                if self.values[k] != UNKNOWN {
                    if self.values[k] != v {
                        self.inconsistent = true;
                    }
                    continue;
                }
                self.values[k] = v;
                for e in std::mem::take(&mut self.watch[k]) {
                    let e_idx = e as usize;
                    self.eq_remaining[e_idx] -= 1;
                    self.eq_rhs[e_idx] ^= v;
                    match self.eq_remaining[e_idx] {
                        1 => ready.push(e),
                        0 if self.eq_rhs[e_idx] != 0 => self.inconsistent = true,
                        _ => {}
                    }
                }
            } else if let Some(e) = ready.pop() {
                let e = e as usize;
                if self.eq_remaining[e] != 1 {
                    continue;
                }
                let (lo, hi) = (self.eq_start[e] as usize, self.eq_start[e + 1] as usize);
                let k = self.eq_terms[lo..hi]
                    .iter()
                    .map(|&t| t as usize)
                    .find(|&t| self.values[t] == UNKNOWN)
                    .expect("one open term remains");
                pending.push((k, self.eq_rhs[e]));
            } else {
                break;
            }
        }
    }

    /// Runs dense elimination over the equations peeling could not finish.
    /// Returns `false` without changing anything if the residual has more
    /// than `max_unknowns` unknowns.
    pub fn complete_residual(&mut self, max_unknowns: usize) -> bool {
        let open_eqs: Vec<usize> = (0..self.eq_remaining.len())
            .filter(|&e| self.eq_remaining[e] >= 2)
            .collect();
        let mut local: std::collections::BTreeMap<usize, usize> = Default::default();
        for &e in &open_eqs {
            let (lo, hi) = (self.eq_start[e] as usize, self.eq_start[e + 1] as usize);
            for &t in &self.eq_terms[lo..hi] {
                let t = t as usize;
                if self.values[t] == UNKNOWN {
                    let next = local.len();
                    local.entry(t).or_insert(next);
                }
            }
        }
        if local.len() > max_unknowns {
            return false;
        }
        let mut sys = EquationSystem::new(local.len());
        for &e in &open_eqs {
            let (lo, hi) = (self.eq_start[e] as usize, self.eq_start[e + 1] as usize);
            let idx: Vec<usize> = self.eq_terms[lo..hi]
                .iter()
                .map(|&t| t as usize)
                .filter(|&t| self.values[t] == UNKNOWN)
                .map(|t| local[&t])
                .collect();
            sys.add_sparse(&idx, self.eq_rhs[e]).expect("indices are local");
        }
        let solved: Vec<(usize, u8)> = local
            .iter()
            .filter_map(|(&global, &li)| sys.value_of(li).map(|v| (global, v)))
            .collect();
        for (k, v) in solved {
            self.assign(k, v);
        }
        true
    }
}
