//! Reference paths from all-minus to all-plus and their energy profiles.
//!
//! Two canonical flip orders exist. The natural order fills vertices (hence
//! blocks) consecutively and is uniformly optimal for non-increasing
//! couplings; the spread order interleaves flips across the largest blocks
//! first and is uniformly optimal for non-decreasing couplings. "Uniformly
//! optimal" means each path configuration minimises the energy within its
//! volume class.

use crate::energy::relative_energy;
use crate::error::{Error, Result};
use crate::lattice::{block_members, distance, Configuration, LatticeParams, VertexId};
use serde::{Deserialize, Serialize};

/// Flip order of a reference path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    /// Vertices flipped in label order (dense block filling).
    Natural,
    /// Vertices flipped in the block-interleaved order given by `theta`.
    Spread,
}

/// Spread-order flip sequence: the k-th flipped vertex, 1 <= k <= N^n.
///
/// This is the digit-reversal permutation: consecutive prefixes spread as
/// evenly as possible across the top-level blocks, then recursively within.
pub fn theta(k: u64, p: &LatticeParams) -> Result<VertexId> {
    let v = p.vertex_count();
    if k < 1 || k > v {
        return Err(Error::OutOfRange {
            what: "path step",
            value: k as i128,
            allowed: format!("1..={v}"),
        });
    }
    let n = p.dim as u64;
    let mut rest = k - 1;
    let mut acc = 0u64;
    for _ in 0..p.levels {
        acc = acc * n + rest % n;
        rest /= n;
    }
    // acc is the reversed-digit value of k-1, already a 0-based id (the
    // 1-based label convention would add one here).
    Ok(VertexId(acc))
}

/// A reference path as a sequence of configurations gamma_0 .. gamma_{N^n}.
#[derive(Debug, Clone, Copy)]
pub struct ReferencePath<'a> {
    pub kind: PathKind,
    pub params: &'a LatticeParams,
}

impl<'a> ReferencePath<'a> {
    pub fn new(kind: PathKind, params: &'a LatticeParams) -> Self {
        ReferencePath { kind, params }
    }

    /// The vertex flipped at step k (1-based step index).
    pub fn flipped_vertex(&self, k: u64) -> Result<VertexId> {
        match self.kind {
            PathKind::Natural => {
                let v = self.params.vertex_count();
                if k < 1 || k > v {
                    return Err(Error::OutOfRange {
                        what: "path step",
                        value: k as i128,
                        allowed: format!("1..={v}"),
                    });
                }
                Ok(VertexId(k - 1))
            }
            PathKind::Spread => theta(k, self.params),
        }
    }

    /// The configuration gamma_k (volume k).
    pub fn config(&self, k: u64) -> Result<Configuration> {
        match self.kind {
            PathKind::Natural => Configuration::prefix(k, self.params),
            PathKind::Spread => {
                let v = self.params.vertex_count();
                if k > v {
                    return Err(Error::OutOfRange {
                        what: "volume",
                        value: k as i128,
                        allowed: format!("0..={v}"),
                    });
                }
                let vs: Vec<VertexId> = (1..=k)
                    .map(|i| theta(i, self.params))
                    .collect::<Result<_>>()?;
                Configuration::from_vertices(&vs, self.params)
            }
        }
    }

    /// E(gamma_k). O(n) for the natural path, O(k n) for the spread path.
    pub fn energy(&self, k: u64) -> Result<f64> {
        match self.kind {
            PathKind::Natural => profile_closed_form(k, self.params),
            PathKind::Spread => Ok(relative_energy(&self.config(k)?, self.params)?.0),
        }
    }
}

/// Materialized energy profile along a reference path.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyProfile {
    pub values: Vec<f64>,
    /// All volumes attaining the maximum (ties reported, never broken).
    pub argmax: Vec<u64>,
}

impl EnergyProfile {
    pub fn max(&self) -> f64 {
        self.values[self.argmax[0] as usize]
    }
}

/// Closed-form energy of the natural-path configuration of volume k.
///
/// Per level i the crossing pairs split into those across the partly filled
/// (i-1)-sub-block boundary and those across the filled part; both counts are
/// elementary functions of k mod N^i and floor(k / N^{i-1}) mod N.
pub fn profile_closed_form(k: u64, p: &LatticeParams) -> Result<f64> {
    let v = p.vertex_count();
    if k > v {
        return Err(Error::OutOfRange {
            what: "volume",
            value: k as i128,
            allowed: format!("0..={v}"),
        });
    }
    let n = p.dim as u64;
    let nf = n as f64;
    let mut acc = 0.0;
    let mut pow_prev = 1u64; // N^{i-1}
    for i in 1..=p.levels {
        let pow_i = pow_prev * n; // N^i
        let k_mod_i = (k % pow_i) as f64;
        let k_mod_prev = (k % pow_prev) as f64;
        let digit = ((k / pow_prev) % n) as f64; // floor(k / N^{i-1}) mod N
        acc += p.coupling(i)
            * pow_prev as f64
            * (k_mod_i * (nf - digit - 1.0) + (pow_prev as f64 - k_mod_prev) * digit);
        pow_prev = pow_i;
    }
    Ok(acc - p.field * k as f64)
}

/// E(gamma_{N^a}) - E(gamma_0) = (N-1) N^a sum_{i=a}^{n-1} N^i J_{i+1} - h N^a.
/// Non-negative exactly when level a is still inside the metastable scale.
pub fn block_increment(a: u32, p: &LatticeParams) -> Result<f64> {
    if a >= p.levels {
        return Err(Error::OutOfRange {
            what: "block level",
            value: a as i128,
            allowed: format!("0..={}", p.levels - 1),
        });
    }
    let nf = p.dim as f64;
    let sum: f64 = (a..p.levels)
        .map(|i| nf.powi(i as i32) * p.coupling(i + 1))
        .sum();
    Ok((nf - 1.0) * nf.powi(a as i32) * sum - p.field * nf.powi(a as i32))
}

/// Result of scanning the natural-path profile for its maximum.
#[derive(Debug, Clone)]
pub struct ProfileScan {
    pub max: f64,
    /// Maximizing volumes in increasing order (ties within 1e-12 scale).
    pub argmax: Vec<u64>,
    /// Upper end of the scanned volume range.
    pub scanned_upper: u64,
}

/// Above this many vertices the maximum scan restricts itself to the
/// metastable window instead of walking every volume.
const FULL_SCAN_LIMIT: u64 = 1 << 20;
/// Hard cap for materializing a whole profile (vectors of V + 1 values).
const MATERIALIZE_LIMIT: u64 = 1 << 24;

/// Scan the natural-path profile for its global maximum.
///
/// For lattices beyond 2^20 vertices the scan is restricted to volumes up to
/// N^{m-hat + 1}: higher-volume profile values never exceed the value at the
/// volume reduced mod N^{m-hat+1} (full-block increments above the metastable
/// scale are non-positive and the shift bound caps the remainder), so the
/// global maximum lives in the window.
pub fn profile_scan(p: &LatticeParams) -> Result<ProfileScan> {
    let v = p.vertex_count();
    let upper = if v <= FULL_SCAN_LIMIT {
        v
    } else {
        match crate::analytics::mhat(p) {
            Ok(mhat) if p.block_size(mhat + 1) <= FULL_SCAN_LIMIT => p.block_size(mhat + 1),
            _ => {
                return Err(Error::SizeCap {
                    required: v,
                    cap: FULL_SCAN_LIMIT,
                })
            }
        }
    };
    let mut max = 0.0f64; // profile value at volume zero
    let mut argmax: Vec<u64> = vec![0];
    for k in 1..=upper {
        let e = profile_closed_form(k, p)?;
        let tol = 1e-12 * max.abs().max(1.0);
        if e > max + tol {
            max = e;
            argmax.clear();
            argmax.push(k);
        } else if (e - max).abs() <= tol {
            argmax.push(k);
        }
    }
    Ok(ProfileScan {
        max,
        argmax,
        scanned_upper: upper,
    })
}

/// Materialize the energy profile of a reference path (V + 1 values).
pub fn energy_profile(kind: PathKind, p: &LatticeParams) -> Result<EnergyProfile> {
    let v = p.vertex_count();
    if v > MATERIALIZE_LIMIT {
        return Err(Error::SizeCap {
            required: v,
            cap: MATERIALIZE_LIMIT,
        });
    }
    let mut values = Vec::with_capacity(v as usize + 1);
    match kind {
        PathKind::Natural => {
            for k in 0..=v {
                values.push(profile_closed_form(k, p)?);
            }
        }
        PathKind::Spread => {
            // Incremental flips with per-level block counts: O(n) per step.
            let levels = p.levels as usize;
            let mut counts: Vec<Vec<u64>> = (0..=levels)
                .map(|l| vec![0u64; (v / p.block_size(l as u32)) as usize])
                .collect();
            let mut e = 0.0;
            values.push(e);
            for k in 1..=v {
                let w = theta(k, p)?.0;
                let enclosing: Vec<u64> = (0..=levels)
                    .map(|l| counts[l][(w / p.block_size(l as u32)) as usize])
                    .collect();
                e += crate::energy::flip_delta_from_counts(&enclosing, false, p);
                for (l, c) in counts.iter_mut().enumerate() {
                    c[(w / p.block_size(l as u32)) as usize] += 1;
                }
                values.push(e);
            }
        }
    }
    let mut max = values[0];
    let mut argmax = vec![0u64];
    for (k, &e) in values.iter().enumerate().skip(1) {
        let tol = 1e-12 * max.abs().max(1.0);
        if e > max + tol {
            max = e;
            argmax.clear();
            argmax.push(k as u64);
        } else if (e - max).abs() <= tol {
            argmax.push(k as u64);
        }
    }
    Ok(EnergyProfile { values, argmax })
}

/// Write a profile as CSV lines `k,energy` (no header).
pub fn write_profile_csv<W: std::io::Write>(
    mut out: W,
    kind: PathKind,
    p: &LatticeParams,
) -> Result<()> {
    let profile = energy_profile(kind, p)?;
    for (k, e) in profile.values.iter().enumerate() {
        writeln!(out, "{k},{e}").map_err(|e| Error::Structural(format!("io: {e}")))?;
    }
    Ok(())
}

/// A k-block handle: `index` counts k-blocks from the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockRef {
    pub level: u32,
    pub index: u64,
}

impl BlockRef {
    pub fn range(&self, p: &LatticeParams) -> std::ops::Range<u64> {
        let size = p.block_size(self.level);
        self.index * size..(self.index + 1) * size
    }
}

/// Outcome of a block switch: the transformed configuration and the energy
/// change predicted by the distance-count identity, which must equal the
/// directly measured change.
#[derive(Debug, Clone)]
pub struct BlockSwitch {
    pub result: Configuration,
    pub predicted_delta: f64,
}

/// Swap the spin values of two equal-level blocks through the translation
/// isometry and predict the energy change from minus-spin distance counts.
///
/// With the two k-blocks sitting inside disjoint m-blocks of a common
/// (m+1)-block, only the couplings at distances k+1..=m+1 see any change, and
/// the change collapses to
/// `sum_{i=k+1}^{m} 2 (J_i - J_{m+1}) (|A_i| - |C_i|) (|U2 cap sigma| - |U1 cap sigma|)`
/// where A_i and C_i count the minus spins at distance i from the first and
/// second block inside their m-blocks.
pub fn switch_blocks(
    sigma: &Configuration,
    u1: BlockRef,
    u2: BlockRef,
    p: &LatticeParams,
) -> Result<BlockSwitch> {
    if u1.level != u2.level {
        return Err(Error::BlockGeometry(format!(
            "blocks must have equal level, got {} and {}",
            u1.level, u2.level
        )));
    }
    if u1.level >= p.levels {
        return Err(Error::BlockGeometry(format!(
            "block level {} too large for {} levels",
            u1.level, p.levels
        )));
    }
    let blocks_total = p.vertex_count() / p.block_size(u1.level);
    if u1.index >= blocks_total || u2.index >= blocks_total {
        return Err(Error::BlockGeometry("block index out of range".into()));
    }
    if u1.index == u2.index {
        return Err(Error::BlockGeometry("blocks must be disjoint".into()));
    }
    let k = u1.level;
    let r1 = u1.range(p);
    let r2 = u2.range(p);
    // Level of the smallest common block; the enclosing disjoint blocks live
    // one level below it.
    let common = distance(VertexId(r1.start), VertexId(r2.start), p)?;
    let m = common - 1;

    let result = sigma.swap_ranges(r1.clone(), r2.clone());

    let vol1 = sigma.count_in_range(r1.clone()) as f64;
    let vol2 = sigma.count_in_range(r2.clone()) as f64;

    // Minus spins at distance exactly i from a block: block counts around its
    // first vertex, with the whole block at distance 0..k collapsed.
    let minus_at = |anchor: u64, i: u32| -> u64 {
        let outer = block_members(VertexId(anchor), i, p).unwrap();
        let inner = block_members(VertexId(anchor), i - 1, p).unwrap();
        let outer_minus = (outer.end - outer.start) - sigma.count_in_range(outer);
        let inner_minus = (inner.end - inner.start) - sigma.count_in_range(inner);
        outer_minus - inner_minus
    };

    let mut predicted = 0.0;
    if m > k {
        let j_out = p.coupling(m + 1);
        for i in (k + 1)..=m {
            let a_i = minus_at(r1.start, i) as f64;
            let c_i = minus_at(r2.start, i) as f64;
            predicted += 2.0 * (p.coupling(i) - j_out) * (a_i - c_i) * (vol2 - vol1);
        }
    }
    Ok(BlockSwitch {
        result,
        predicted_delta: predicted,
    })
}

/// Report from the exhaustive uniform-optimality check.
#[derive(Debug, Clone)]
pub struct OptimalityCheck {
    pub holds: bool,
    /// First volume k where E(gamma_k) exceeds the volume-class minimum,
    /// with that minimum.
    pub first_violation: Option<(u64, f64)>,
}

/// Exhaustively verify that every path configuration minimises the energy in
/// its volume class (V <= cap).
pub fn check_uniform_optimality(
    kind: PathKind,
    p: &LatticeParams,
    cap: u64,
) -> Result<OptimalityCheck> {
    let v = p.vertex_count();
    if v > cap {
        return Err(Error::SizeCap { required: v, cap });
    }
    let landscape = crate::oracle::LandscapeIndex::build(p, cap)?;
    let mut class_min = vec![f64::INFINITY; v as usize + 1];
    for code in 0..landscape.states() {
        let vol = (code as u64).count_ones() as usize;
        let e = landscape.energy(code);
        if e < class_min[vol] {
            class_min[vol] = e;
        }
    }
    let path = ReferencePath::new(kind, p);
    for k in 0..=v {
        let e = path.energy(k)?;
        if e > class_min[k as usize] + 1e-9 * class_min[k as usize].abs().max(1.0) {
            return Ok(OptimalityCheck {
                holds: false,
                first_violation: Some((k, class_min[k as usize])),
            });
        }
    }
    Ok(OptimalityCheck {
        holds: true,
        first_violation: None,
    })
}

/// Second difference of the profile along an arithmetic triple inside one
/// block: returns (E(gamma_k) - E(gamma_j)) - (E(gamma_l) - E(gamma_k)) for
/// k = j + N^a, l = k + N^a. Equals 2 J_{a+1} N^{2a} exactly whenever the
/// vertices flipped across the triple stay inside one (a+1)-block.
pub fn check_concavity(j: u64, a: u32, p: &LatticeParams) -> Result<f64> {
    let step = p.block_size(a);
    let k = j + step;
    let l = k + step;
    if l > p.vertex_count() {
        return Err(Error::OutOfRange {
            what: "triple end",
            value: l as i128,
            allowed: format!("0..={}", p.vertex_count()),
        });
    }
    if a + 1 > p.levels {
        return Err(Error::BlockGeometry("level a+1 exceeds lattice".into()));
    }
    // All flipped vertices (0-based j..l-1) and the anchor vertex of gamma_j
    // must share one (a+1)-block.
    let span = p.block_size(a + 1);
    let lo = j.saturating_sub(1);
    if lo / span != (l - 1) / span {
        return Err(Error::BlockGeometry(format!(
            "triple ({j}, {k}, {l}) does not stay inside one {}-block",
            a + 1
        )));
    }
    let ej = profile_closed_form(j, p)?;
    let ek = profile_closed_form(k, p)?;
    let el = profile_closed_form(l, p)?;
    Ok((ek - ej) - (el - ek))
}

/// Mirror-symmetry diagnostics of the standard-interaction profile at the
/// special field value h^(m,s).
#[derive(Debug, Clone, Serialize)]
pub struct SymmetryCheck {
    /// The field value h^(m,s) the profile was evaluated at.
    pub field: f64,
    /// max_K |E(gamma_K) - E(gamma_{sN^m - K})| over 0 <= K <= s N^m.
    pub global_deviation: f64,
    /// Per nested interval: (interval index, lower end, upper end, deviation).
    pub intervals: Vec<(u32, u64, u64, f64)>,
}

fn parity(x: u64) -> u64 {
    x % 2
}

/// Nested mirror-symmetric integer intervals of the standard profile at
/// h^(m,s); interval k is defined for the parity class of k fixed by N and s.
pub fn symmetry_intervals(m: u32, s: u32, p: &LatticeParams) -> Vec<(u32, u64, u64)> {
    let n = p.dim as u64;
    let (s, m) = (s as u64, m);
    let mut out = Vec::new();
    let lead = (s / 2 + parity(s * (n + 1))) as i64 - 1;
    if lead < 0 {
        return out;
    }
    let valid = |k: u32| -> bool {
        if n % 2 == 1 {
            true
        } else if s % 2 == 0 {
            k % 2 == 1
        } else {
            k.is_multiple_of(2)
        }
    };
    for k in 1..=m {
        if !valid(k) {
            continue;
        }
        let mut base = lead as u64 * n.pow(m);
        for j in 1..k {
            let a_mj = n / 2 - parity((j as u64 + s + 1) * (n + 1));
            base += a_mj * n.pow(m - j);
        }
        let lo = base + (1 + parity(s * n)) * n.pow(m - k);
        let hi = base + n.pow(m - k + 1);
        out.push((k, lo, hi));
    }
    out
}

/// Evaluate the mirror symmetries of the standard-interaction profile: the
/// whole segment [0, sN^m] at field h^(m,s), and the nested sub-intervals.
/// Both deviations are identically zero in exact arithmetic.
pub fn check_symmetry_standard(m: u32, s: u32, p: &LatticeParams) -> Result<SymmetryCheck> {
    let j_tilde = p
        .standard_j_tilde()
        .ok_or_else(|| Error::MethodPrecondition("standard couplings required".into()))?;
    if m >= p.levels || s < 1 || s as u64 > p.dim as u64 {
        return Err(Error::OutOfRange {
            what: "regime pair",
            value: (m as i128) << 32 | s as i128,
            allowed: format!("m in 0..{}, s in 1..={}", p.levels, p.dim),
        });
    }
    let h = crate::analytics::h_threshold(m, s, p)?;
    if h <= 0.0 {
        return Err(Error::MethodPrecondition(format!(
            "h^({m},{s}) = {h} is not a positive field"
        )));
    }
    let q = LatticeParams::standard(p.dim, p.levels, j_tilde, h)?;
    let top = s as u64 * q.block_size(m);
    let mut global: f64 = 0.0;
    for k in 0..=top / 2 {
        let a = profile_closed_form(k, &q)?;
        let b = profile_closed_form(top - k, &q)?;
        global = global.max((a - b).abs());
    }
    let mut intervals = Vec::new();
    for (k, lo, hi) in symmetry_intervals(m, s, &q) {
        let mut dev: f64 = 0.0;
        for x in lo..=hi {
            let mirror = lo + hi - x;
            let a = profile_closed_form(x, &q)?;
            let b = profile_closed_form(mirror, &q)?;
            dev = dev.max((a - b).abs());
        }
        intervals.push((k, lo, hi, dev));
    }
    Ok(SymmetryCheck {
        field: h,
        global_deviation: global,
        intervals,
    })
}
