//! Seeded multiply-shift hash family.
//!
//! Every sketch row carries an index hash mapping item identifiers to bins
//! and a sign hash mapping them to +/-1. Both are multiply-shift hashes: for
//! a 64-bit odd multiplier `a` and addend `b`, the value `a*x + b (mod 2^64)`
//! has close to uniformly distributed high and middle bits. The index hash
//! keeps bits `[32, 32+log2(width))`, i.e. it shifts by a fixed 32 and masks
//! to the width. Because widths are powers of two, masking the same shifted
//! value to half the width gives exactly `old_bin mod (width/2)`, which is
//! what sketch halving needs. The sign hash is the top bit of a second,
//! independent multiply-shift.

use crate::error::{Error, Result};

/// Sign of a hashed item: `+1` or `-1`.
pub type Sign = i8;

const SPLITMIX_GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 step, used to derive per-row seeds and multipliers.
pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(SPLITMIX_GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct RowParams {
    index_mul: u64,
    index_add: u64,
    sign_mul: u64,
    sign_add: u64,
}

impl RowParams {
    fn derive(index_seed: u64, sign_seed: u64) -> Self {
        RowParams {
            index_mul: splitmix64(index_seed) | 1,
            index_add: splitmix64(index_seed.wrapping_add(SPLITMIX_GOLDEN)),
            sign_mul: splitmix64(sign_seed) | 1,
            sign_add: splitmix64(sign_seed.wrapping_add(SPLITMIX_GOLDEN)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HashMode {
    /// Seeded multiply-shift rows.
    Seeded,
    /// Identity index map with all-positive signs; exact storage when the
    /// width covers the domain. Used by the oracle configuration.
    Injective,
}

/// A family of `depth` independent (index, sign) hash pairs over a fixed
/// item domain and power-of-two width.
#[derive(Debug, Clone, PartialEq)]
pub struct HashFamily {
    depth: usize,
    width: usize,
    domain: usize,
    mode: HashMode,
    index_seeds: Vec<u64>,
    sign_seeds: Vec<u64>,
    rows: Vec<RowParams>,
}

impl HashFamily {
    /// Builds a seeded family with `depth` rows of `width` bins over items
    /// `0..domain`. `width` must be a power of two and at least 2.
    pub fn new(depth: usize, width: usize, domain: usize, seed: u64) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("hash family depth must be at least 1".to_string()));
        }
        if width < 2 || !width.is_power_of_two() {
            return Err(Error::Config(format!(
                "hash family width must be a power of two >= 2, got {}",
                width
            )));
        }
        if width > (1usize << 32) {
            return Err(Error::Config(format!("hash family width {} exceeds 2^32", width)));
        }
        if domain == 0 {
            return Err(Error::Config("hash family domain must be at least 1".to_string()));
        }
        let mut state = splitmix64(seed);
        let mut next = || {
            state = splitmix64(state);
            state
        };
        let index_seeds: Vec<u64> = (0..depth).map(|_| next()).collect();
        let sign_seeds: Vec<u64> = (0..depth).map(|_| next()).collect();
        Ok(HashFamily::from_parts(depth, width, domain, HashMode::Seeded, index_seeds, sign_seeds))
    }

    /// Builds the degenerate injective family: one row, identity index map,
    /// all signs +1, width rounded up to the next power of two covering the
    /// domain. A sketch over this family stores every item exactly.
    pub fn injective(domain: usize) -> Result<Self> {
        if domain == 0 {
            return Err(Error::Config("hash family domain must be at least 1".to_string()));
        }
        let width = domain.next_power_of_two().max(2);
        Ok(HashFamily::from_parts(1, width, domain, HashMode::Injective, vec![0], vec![0]))
    }

    fn from_parts(
        depth: usize,
        width: usize,
        domain: usize,
        mode: HashMode,
        index_seeds: Vec<u64>,
        sign_seeds: Vec<u64>,
    ) -> Self {
        let rows = index_seeds
            .iter()
            .zip(&sign_seeds)
            .map(|(&i, &s)| RowParams::derive(i, s))
            .collect();
        HashFamily { depth, width, domain, mode, index_seeds, sign_seeds, rows }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    /// True for the injective (exact-storage) mode.
    pub fn is_injective(&self) -> bool {
        self.mode == HashMode::Injective
    }

    /// Raw per-row index seeds, as stored in checkpoints.
    pub fn index_seeds(&self) -> &[u64] {
        &self.index_seeds
    }

    /// Raw per-row sign seeds, as stored in checkpoints.
    pub fn sign_seeds(&self) -> &[u64] {
        &self.sign_seeds
    }

    /// Reassembles a family from checkpointed parts.
    pub(crate) fn from_checkpoint(
        width: usize,
        domain: usize,
        injective: bool,
        index_seeds: Vec<u64>,
        sign_seeds: Vec<u64>,
    ) -> Result<Self> {
        if index_seeds.is_empty() || index_seeds.len() != sign_seeds.len() {
            return Err(Error::Data("checkpoint seed lists empty or mismatched".to_string()));
        }
        if width < 2 || !width.is_power_of_two() {
            return Err(Error::Data(format!("checkpoint width {} is not a power of two", width)));
        }
        if domain == 0 {
            return Err(Error::Data("checkpoint domain must be at least 1".to_string()));
        }
        let depth = index_seeds.len();
        let mode = if injective { HashMode::Injective } else { HashMode::Seeded };
        Ok(HashFamily::from_parts(depth, width, domain, mode, index_seeds, sign_seeds))
    }

    /// Checks that `item` lies in the hashed domain.
    #[inline]
    pub fn check_item(&self, item: usize) -> Result<()> {
        if item >= self.domain {
            return Err(Error::Index { item, domain: self.domain });
        }
        Ok(())
    }

    /// Bin index of `item` in row `row`. The item must be in-domain.
    #[inline]
    pub fn index(&self, row: usize, item: usize) -> usize {
        debug_assert!(row < self.depth && item < self.domain);
        match self.mode {
            HashMode::Injective => item & (self.width - 1),
            HashMode::Seeded => {
                let p = self.rows[row];
                let mixed = p.index_mul.wrapping_mul(item as u64).wrapping_add(p.index_add);
                ((mixed >> 32) as usize) & (self.width - 1)
            }
        }
    }

    /// Sign of `item` in row `row`.
    #[inline]
    pub fn sign(&self, row: usize, item: usize) -> Sign {
        debug_assert!(row < self.depth && item < self.domain);
        match self.mode {
            HashMode::Injective => 1,
            HashMode::Seeded => {
                let p = self.rows[row];
                let mixed = p.sign_mul.wrapping_mul(item as u64).wrapping_add(p.sign_add);
                if mixed >> 63 == 0 {
                    1
                } else {
                    -1
                }
            }
        }
    }

    /// Same family over half the width. Bin indices become `old mod width/2`.
    pub(crate) fn halved(&self) -> Result<Self> {
        if self.width < 4 {
            return Err(Error::Config(format!(
                "cannot halve width {} below the minimum of 2",
                self.width
            )));
        }
        let mut halved = self.clone();
        halved.width = self.width / 2;
        Ok(halved)
    }
}
