// SPDX-License-Identifier: Apache-2.0

/// Fixed-length bitmask over instance indices `0..N`.
///
/// Bits past `len` in the last word are always zero, so derived equality
/// and [`count`](Self::count) are exact.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoverageMask {
    words: Vec<u64>,
    len: usize,
}

impl CoverageMask {
    pub fn empty(len: usize) -> Self {
        CoverageMask {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut mask = CoverageMask {
            words: vec![u64::MAX; len.div_ceil(64)],
            len,
        };
        mask.clear_tail();
        mask
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut words = vec![0u64; len.div_ceil(64)];
        for (w, word) in words.iter_mut().enumerate() {
            let base = w * 64;
            let end = (base + 64).min(len);
            let mut bits = 0u64;
            for n in base..end {
                bits |= u64::from(f(n)) << (n - base);
            }
            *word = bits;
        }
        CoverageMask { words, len }
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = Self::empty(len);
        for n in indices {
            mask.insert(n);
        }
        mask
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Mask length `N`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn contains(&self, n: usize) -> bool {
        debug_assert!(n < self.len);
        self.words[n / 64] >> (n % 64) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, n: usize) {
        assert!(n < self.len, "index {n} out of range for mask of length {}", self.len);
        self.words[n / 64] |= 1 << (n % 64);
    }

    /// Number of set bits (the support).
    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn union_with(&mut self, other: &CoverageMask) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &CoverageMask) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    /// Bits set in `self` but not in `other`.
    pub fn difference(&self, other: &CoverageMask) -> CoverageMask {
        assert_eq!(self.len, other.len);
        CoverageMask {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & !b).collect(),
            len: self.len,
        }
    }

    pub fn is_subset(&self, other: &CoverageMask) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Set indices in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + tz)
            })
        })
    }
}
