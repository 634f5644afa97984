//! Wavevectors and the shell-major half-lattice ordering.
//!
//! Modes of the half lattice `Z²₊ = {k2 > 0} ∪ {k2 = 0, k1 > 0}` are stored
//! shell by shell in the sup-norm `s = max(|k1|, |k2|)`. Shell `s` holds `4s`
//! modes and starts at offset `2s(s-1)`, so a field with cutoff `N` has
//! `2N(N+1)` stored modes and the storage of a smaller cutoff is a prefix of
//! the storage of a larger one. That prefix property makes truncation a slice
//! and lets noise streams be keyed by a cutoff-independent mode index.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Wavevector {
    pub k1: i32,
    pub k2: i32,
}

impl Wavevector {
    /// Returns `None` for the excluded zero mode.
    pub fn new(k1: i32, k2: i32) -> Option<Self> {
        if k1 == 0 && k2 == 0 {
            None
        } else {
            Some(Self { k1, k2 })
        }
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        let (a, b) = (self.k1 as f64, self.k2 as f64);
        a * a + b * b
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn linf(self) -> usize {
        self.k1.unsigned_abs().max(self.k2.unsigned_abs()) as usize
    }

    /// `k^⊥ = (k2, -k1)`.
    #[inline]
    pub fn perp(self) -> [f64; 2] {
        [self.k2 as f64, -(self.k1 as f64)]
    }

    #[inline]
    pub fn neg(self) -> Self {
        Self {
            k1: -self.k1,
            k2: -self.k2,
        }
    }

    /// Whether `k` is a stored (half-lattice) representative.
    #[inline]
    pub fn is_upper(self) -> bool {
        self.k2 > 0 || (self.k2 == 0 && self.k1 > 0)
    }

    pub fn as_f64(self) -> [f64; 2] {
        [self.k1 as f64, self.k2 as f64]
    }
}

/// Number of stored modes for cutoff `n`.
#[inline]
pub fn mode_count(n: usize) -> usize {
    2 * n * (n + 1)
}

/// Storage index of a half-lattice wavevector.
///
/// Panics in debug builds if `k` is not a half-lattice representative.
pub fn index_of(k: Wavevector) -> usize {
    debug_assert!(k.is_upper());
    let s = k.linf();
    let base = 2 * s * (s - 1);
    let si = s as i32;
    let j = if k.k2 == 0 {
        0
    } else if k.k2 < si {
        1 + 2 * (k.k2 as usize - 1) + usize::from(k.k1 < 0)
    } else {
        (2 * si - 1 + k.k1 + si) as usize
    };
    base + j
}

/// Wavevector stored at `index`.
pub fn wavevector_at(index: usize) -> Wavevector {
    // largest s with 2s(s-1) <= index
    let mut s = ((1.0 + (1.0 + 2.0 * index as f64).sqrt()) / 2.0).floor() as usize;
    while 2 * s * (s - 1) > index {
        s -= 1;
    }
    while 2 * (s + 1) * s <= index {
        s += 1;
    }
    let j = index - 2 * s * (s - 1);
    let si = s as i32;
    if j == 0 {
        Wavevector { k1: si, k2: 0 }
    } else if j < 2 * s - 1 {
        let k2 = ((j - 1) / 2 + 1) as i32;
        let k1 = if (j - 1) % 2 == 0 { si } else { -si };
        Wavevector { k1, k2 }
    } else {
        let k1 = j as i32 - (2 * si - 1) - si;
        Wavevector { k1, k2: si }
    }
}

/// Stored wavevectors for cutoff `n`, in storage order.
pub fn half_lattice(n: usize) -> impl Iterator<Item = Wavevector> + Clone {
    (1..=n as i32).flat_map(|s| {
        std::iter::once(Wavevector { k1: s, k2: 0 })
            .chain((1..s).flat_map(move |k2| {
                [Wavevector { k1: s, k2 }, Wavevector { k1: -s, k2 }]
            }))
            .chain((-s..=s).map(move |k1| Wavevector { k1, k2: s }))
    })
}

/// Cached wavevector table for one cutoff.
#[derive(Clone, Debug)]
pub struct Lattice {
    cutoff: usize,
    modes: Vec<Wavevector>,
}

impl Lattice {
    pub fn new(cutoff: usize) -> Self {
        Self {
            cutoff,
            modes: half_lattice(cutoff).collect(),
        }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn modes(&self) -> &[Wavevector] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Index into the "full" layout used by the kernels: stored modes first,
    /// then their negatives at `len + i`.
    pub fn full_index(&self, k: Wavevector) -> Option<usize> {
        if k.linf() > self.cutoff || (k.k1 == 0 && k.k2 == 0) {
            return None;
        }
        if k.is_upper() {
            Some(index_of(k))
        } else {
            Some(self.len() + index_of(k.neg()))
        }
    }

    pub fn full_wavevector(&self, idx: usize) -> Wavevector {
        if idx < self.len() {
            self.modes[idx]
        } else {
            self.modes[idx - self.len()].neg()
        }
    }
}
