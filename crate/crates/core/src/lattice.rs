//! Ultrametric geometry of the hierarchical lattice.
//!
//! The lattice with branching number `N` and `n` levels has `N^n` vertices,
//! labelled 0-based internally (user-facing output is 1-based). A `k`-block is
//! a contiguous group of `N^k` vertices aligned on a multiple of `N^k`. The
//! hierarchical distance between two vertices is the level of the smallest
//! block containing both, which makes the distance an ultrametric.
//!
//! Note on the distance convention: we define `d(a, b)` as the smallest `k`
//! with `floor(a / N^k) == floor(b / N^k)` on 0-based labels, i.e. the size of
//! the smallest box containing both vertices is `N^{d(a,b)}`. This is the only
//! reading consistent with the block counts used everywhere else (the
//! alternative "mod" formulation one sometimes sees gives the wrong value for
//! adjacent labels).

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default cap on the vertex count for exhaustive (2^V) computations.
pub const DEFAULT_ORACLE_CAP: u64 = 24;

/// Static model definition: lattice geometry plus interaction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    /// Branching number N (the hierarchical dimension), N >= 2.
    pub dim: u32,
    /// Number of hierarchical levels n >= 1.
    pub levels: u32,
    /// Couplings J_1..J_n; J_i > 0 couples spin pairs at distance i.
    pub couplings: Vec<f64>,
    /// External field h > 0.
    pub field: f64,
}

impl LatticeParams {
    pub fn new(dim: u32, levels: u32, couplings: Vec<f64>, field: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParams(format!("N must be >= 2, got {dim}")));
        }
        if levels < 1 {
            return Err(Error::InvalidParams("n must be >= 1".into()));
        }
        if couplings.len() != levels as usize {
            return Err(Error::InvalidParams(format!(
                "need {} couplings, got {}",
                levels,
                couplings.len()
            )));
        }
        if couplings.iter().any(|&j| !j.is_finite() || j <= 0.0) {
            return Err(Error::InvalidParams(
                "all J_i must be positive and finite".into(),
            ));
        }
        if !field.is_finite() || field <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "h must be positive, got {field}"
            )));
        }
        // N^n must fit i64/f64-exact integer range; counts go through u128.
        let v = (dim as u128)
            .checked_pow(levels)
            .ok_or_else(|| Error::InvalidParams(format!("N^n overflows: N={dim}, n={levels}")))?;
        if v > (1u128 << 52) {
            return Err(Error::InvalidParams(format!(
                "N^n = {v} too large (max 2^52)"
            )));
        }
        Ok(LatticeParams {
            dim,
            levels,
            couplings,
            field,
        })
    }

    /// Standard interaction J_i = J~ / N^i.
    pub fn standard(dim: u32, levels: u32, j_tilde: f64, field: f64) -> Result<Self> {
        if !j_tilde.is_finite() || j_tilde <= 0.0 {
            return Err(Error::InvalidParams("J~ must be positive".into()));
        }
        let couplings = (1..=levels)
            .map(|i| j_tilde / (dim as f64).powi(i as i32))
            .collect();
        Self::new(dim, levels, couplings, field)
    }

    /// Scaled interaction J_i = J~_i / N^i.
    pub fn scaled(dim: u32, levels: u32, j_tildes: &[f64], field: f64) -> Result<Self> {
        if j_tildes.len() != levels as usize {
            return Err(Error::InvalidParams(format!(
                "need {} scaled couplings, got {}",
                levels,
                j_tildes.len()
            )));
        }
        let couplings = j_tildes
            .iter()
            .enumerate()
            .map(|(i, &jt)| jt / (dim as f64).powi(i as i32 + 1))
            .collect();
        Self::new(dim, levels, couplings, field)
    }

    /// Total number of vertices V = N^n.
    pub fn vertex_count(&self) -> u64 {
        (self.dim as u64).pow(self.levels)
    }

    /// N^k for 0 <= k <= n.
    pub fn block_size(&self, level: u32) -> u64 {
        debug_assert!(level <= self.levels);
        (self.dim as u64).pow(level)
    }

    /// J_i for 1 <= i <= n.
    pub fn coupling(&self, distance: u32) -> f64 {
        self.couplings[distance as usize - 1]
    }

    pub fn is_non_increasing(&self) -> bool {
        self.couplings.windows(2).all(|w| w[0] >= w[1])
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.couplings.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.couplings.windows(2).all(|w| w[0] > w[1])
    }

    /// Recover J~ when the couplings are exactly standard (J_i = J~/N^i).
    pub fn standard_j_tilde(&self) -> Option<f64> {
        let jt = self.couplings[0] * self.dim as f64;
        let n = self.dim as f64;
        for (i, &j) in self.couplings.iter().enumerate() {
            let expect = jt / n.powi(i as i32 + 1);
            if (j - expect).abs() > 1e-12 * expect.abs().max(1e-300) {
                return None;
            }
        }
        Some(jt)
    }

    /// Recover the J~_i vector for scaled couplings (always succeeds).
    pub fn scaled_j_tildes(&self) -> Vec<f64> {
        self.couplings
            .iter()
            .enumerate()
            .map(|(i, &j)| j * (self.dim as f64).powi(i as i32 + 1))
            .collect()
    }

    pub fn check_vertex(&self, v: VertexId) -> Result<()> {
        if v.0 < self.vertex_count() {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "vertex id",
                value: v.0 as i128,
                allowed: format!("0..{}", self.vertex_count()),
            })
        }
    }
}

/// A vertex of the lattice, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub u64);

impl VertexId {
    /// 1-based label used in human-facing output.
    pub fn label(self) -> u64 {
        self.0 + 1
    }
}

/// Base-N digits, least significant first: value = sum a_i N^i.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaryDigits {
    pub digits: Vec<u32>,
    /// Set when the decomposed value was exactly N^n (the full lattice).
    pub full_lattice: bool,
}

impl NaryDigits {
    pub fn value(&self, dim: u32) -> u64 {
        if self.full_lattice {
            return (dim as u64).pow(self.digits.len() as u32);
        }
        let mut acc = 0u64;
        for &d in self.digits.iter().rev() {
            acc = acc * dim as u64 + d as u64;
        }
        acc
    }

    /// Index of the highest nonzero digit, if any.
    pub fn top_nonzero(&self) -> Option<usize> {
        self.digits.iter().rposition(|&d| d > 0)
    }
}

/// Hierarchical distance: the smallest k such that a and b share a k-block.
/// Zero iff a == b; satisfies the ultrametric inequality.
pub fn distance(a: VertexId, b: VertexId, p: &LatticeParams) -> Result<u32> {
    p.check_vertex(a)?;
    p.check_vertex(b)?;
    let n = p.dim as u64;
    let (mut x, mut y) = (a.0, b.0);
    let mut level = 0u32;
    while x != y {
        x /= n;
        y /= n;
        level += 1;
    }
    Ok(level)
}

/// The k-block containing v, as a contiguous 0-based vertex range.
pub fn block_members(v: VertexId, level: u32, p: &LatticeParams) -> Result<std::ops::Range<u64>> {
    p.check_vertex(v)?;
    if level > p.levels {
        return Err(Error::OutOfRange {
            what: "block level",
            value: level as i128,
            allowed: format!("0..={}", p.levels),
        });
    }
    let size = p.block_size(level);
    let start = (v.0 / size) * size;
    Ok(start..start + size)
}

/// Base-N decomposition of 0 <= k <= N^n. The value k = N^n is flagged as
/// "full lattice" rather than widened to an extra digit.
pub fn nary_decomposition(k: u64, p: &LatticeParams) -> Result<NaryDigits> {
    let v = p.vertex_count();
    if k > v {
        return Err(Error::OutOfRange {
            what: "volume",
            value: k as i128,
            allowed: format!("0..={v}"),
        });
    }
    if k == v {
        return Ok(NaryDigits {
            digits: vec![0; p.levels as usize],
            full_lattice: true,
        });
    }
    let mut digits = Vec::with_capacity(p.levels as usize);
    let mut rest = k;
    for _ in 0..p.levels {
        digits.push((rest % p.dim as u64) as u32);
        rest /= p.dim as u64;
    }
    Ok(NaryDigits {
        digits,
        full_lattice: false,
    })
}

pub(crate) fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of distinct images of the volume-M reference configuration under
/// distance-preserving bijections of the lattice.
///
/// Closed form (for digits a_i of M with top nonzero index t):
/// `N^{n-t-1} * C(N, a_t) * prod_{i<t, below the lowest nonzero digit shifted}
/// C(N, a_i) (N - a_i)`; computed here by the block recursion that the closed
/// form compresses, which also handles M a multiple of N (lowest digit zero)
/// without special-casing the singular `(N - a_0)^{-1}` factor.
pub fn translation_count(volume: u64, p: &LatticeParams) -> Result<u128> {
    let v = p.vertex_count();
    if volume > v {
        return Err(Error::OutOfRange {
            what: "volume",
            value: volume as i128,
            allowed: format!("0..={v}"),
        });
    }
    if volume == 0 || volume == v {
        return Ok(1); // the empty and full configurations are fixed points
    }
    // orbit(M, level): images of the left-aligned volume-M set inside one
    // level-block. With t full sub-blocks and remainder r:
    //   r == 0: C(N, t)
    //   r  > 0: C(N, t) * (N - t) * orbit(r, level - 1)
    let n = p.dim as u64;
    let mut acc: u128 = 1;
    let mut level = p.levels;
    let mut m = volume;
    loop {
        let sub = (n as u128).pow(level - 1) as u64;
        let t = m / sub;
        let r = m % sub;
        if r == 0 {
            acc = acc
                .checked_mul(binomial(n, t))
                .ok_or_else(|| Error::Structural("translation count overflow".into()))?;
            return Ok(acc);
        }
        acc = acc
            .checked_mul(binomial(n, t) * (n - t) as u128)
            .ok_or_else(|| Error::Structural("translation count overflow".into()))?;
        m = r;
        level -= 1;
        // level >= 1 here: r > 0 and r < sub forces at least one more level,
        // and at level 1 every remainder is 0 (sub-blocks are vertices).
        debug_assert!(level >= 1);
    }
}

/// A spin configuration identified with its set of +1 vertices.
///
/// Immutable once built; `flip` returns a new value. The per-level block
/// counts required for O(n) single-flip energy deltas are carried along.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    bits: Vec<u64>,
    vertices: u64,
    volume: u64,
}

impl Configuration {
    pub fn empty(p: &LatticeParams) -> Self {
        let v = p.vertex_count();
        Configuration {
            bits: vec![0; v.div_ceil(64) as usize],
            vertices: v,
            volume: 0,
        }
    }

    pub fn full(p: &LatticeParams) -> Self {
        let v = p.vertex_count();
        let mut bits = vec![u64::MAX; v.div_ceil(64) as usize];
        let tail = (v % 64) as u32;
        if tail != 0 {
            *bits.last_mut().unwrap() = (1u64 << tail) - 1;
        }
        Configuration {
            bits,
            vertices: v,
            volume: v,
        }
    }

    /// The reference-path configuration of the given volume: vertices 0..k.
    pub fn prefix(k: u64, p: &LatticeParams) -> Result<Self> {
        let v = p.vertex_count();
        if k > v {
            return Err(Error::OutOfRange {
                what: "volume",
                value: k as i128,
                allowed: format!("0..={v}"),
            });
        }
        let mut c = Self::empty(p);
        for i in 0..k {
            c.set(VertexId(i));
        }
        Ok(c)
    }

    /// Build from an explicit vertex set.
    pub fn from_vertices(vs: &[VertexId], p: &LatticeParams) -> Result<Self> {
        let mut c = Self::empty(p);
        for &v in vs {
            p.check_vertex(v)?;
            if !c.contains(v) {
                c.set(VertexId(v.0));
            }
        }
        Ok(c)
    }

    /// Build from a bit code (vertex i present iff bit i set); V <= 64 only.
    pub fn from_bitcode(code: u64, p: &LatticeParams) -> Result<Self> {
        let v = p.vertex_count();
        if v > 64 {
            return Err(Error::SizeCap {
                required: v,
                cap: 64,
            });
        }
        if v < 64 && code >> v != 0 {
            return Err(Error::OutOfRange {
                what: "bitcode",
                value: code as i128,
                allowed: format!("< 2^{v}"),
            });
        }
        Ok(Configuration {
            bits: vec![code],
            vertices: v,
            volume: code.count_ones() as u64,
        })
    }

    /// Bit code, if the lattice fits in 64 bits.
    pub fn bitcode(&self) -> Option<u64> {
        if self.vertices <= 64 {
            Some(self.bits[0])
        } else {
            None
        }
    }

    fn set(&mut self, v: VertexId) -> &mut Self {
        let (w, b) = (v.0 / 64, v.0 % 64);
        debug_assert_eq!(self.bits[w as usize] >> b & 1, 0);
        self.bits[w as usize] |= 1 << b;
        self.volume += 1;
        self
    }

    #[inline]
    pub fn contains(&self, v: VertexId) -> bool {
        self.bits[(v.0 / 64) as usize] >> (v.0 % 64) & 1 == 1
    }

    pub fn volume(&self) -> u64 {
        self.volume
    }

    pub fn vertex_count(&self) -> u64 {
        self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.volume == 0
    }

    pub fn is_full(&self) -> bool {
        self.volume == self.vertices
    }

    /// New configuration with the spin at v flipped.
    pub fn flip(&self, v: VertexId) -> Self {
        let mut c = self.clone();
        let (w, b) = (v.0 / 64, v.0 % 64);
        c.bits[w as usize] ^= 1 << b;
        if c.contains(v) {
            c.volume += 1;
        } else {
            c.volume -= 1;
        }
        c
    }

    /// Iterator over the +1 vertices.
    pub fn iter(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.bits.iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    None
                } else {
                    let b = rest.trailing_zeros();
                    rest &= rest - 1;
                    Some(VertexId(w as u64 * 64 + b as u64))
                }
            })
        })
    }

    /// Count of +1 vertices inside a 0-based range (word-level popcounts).
    pub fn count_in_range(&self, range: std::ops::Range<u64>) -> u64 {
        if range.is_empty() {
            return 0;
        }
        let (lo, hi) = (range.start, range.end);
        let (wl, wh) = ((lo / 64) as usize, ((hi - 1) / 64) as usize);
        let mask_lo = u64::MAX << (lo % 64);
        let mask_hi = u64::MAX >> (63 - (hi - 1) % 64);
        if wl == wh {
            return (self.bits[wl] & mask_lo & mask_hi).count_ones() as u64;
        }
        let mut acc = (self.bits[wl] & mask_lo).count_ones() as u64;
        for w in wl + 1..wh {
            acc += self.bits[w].count_ones() as u64;
        }
        acc + (self.bits[wh] & mask_hi).count_ones() as u64
    }

    /// Swap the contents of two equal-length vertex ranges (used for block
    /// switches; the caller guarantees disjointness).
    pub fn swap_ranges(&self, a: std::ops::Range<u64>, b: std::ops::Range<u64>) -> Self {
        debug_assert_eq!(a.end - a.start, b.end - b.start);
        let mut c = self.clone();
        for off in 0..(a.end - a.start) {
            let (va, vb) = (VertexId(a.start + off), VertexId(b.start + off));
            let (ba, bb) = (self.contains(va), self.contains(vb));
            if ba != bb {
                c = c.flip(va);
                c = c.flip(vb);
            }
        }
        c
    }
}

/// The orbit of a configuration under the full group of distance-preserving
/// bijections (sub-block permutations at every level, applied recursively).
///
/// Enumerated by closure under the adjacent sub-block transpositions, which
/// generate the whole group. Errors out if the orbit exceeds `cap`.
pub fn enumerate_isometry_images(
    sigma: &Configuration,
    p: &LatticeParams,
    cap: usize,
) -> Result<Vec<Configuration>> {
    use std::collections::{HashSet, VecDeque};

    let n = p.dim as u64;
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(sigma.bits.clone());
    queue.push_back(sigma.clone());
    let mut orbit = vec![sigma.clone()];

    while let Some(current) = queue.pop_front() {
        // Generators: for every block at level >= 1, transpose each adjacent
        // pair of its sub-blocks.
        for level in 1..=p.levels {
            let sub = p.block_size(level - 1);
            let blocks = p.vertex_count() / p.block_size(level);
            for blk in 0..blocks {
                let base = blk * p.block_size(level);
                for j in 0..(n - 1) {
                    let a = base + j * sub;
                    let b = base + (j + 1) * sub;
                    let image = current.swap_ranges(a..a + sub, b..b + sub);
                    if !seen.contains(&image.bits) {
                        if orbit.len() >= cap {
                            return Err(Error::OrbitTooLarge { cap });
                        }
                        seen.insert(image.bits.clone());
                        orbit.push(image.clone());
                        queue.push_back(image);
                    }
                }
            }
        }
    }
    orbit.sort_by(|a, b| a.bits.cmp(&b.bits));
    Ok(orbit)
}
