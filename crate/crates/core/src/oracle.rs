//! Exhaustive ground truth on small instances: the full 2^V energy landscape,
//! exact communication heights by threshold percolation, stability levels,
//! gate extraction, capacity (the inverse prefactor), exact mean hitting
//! times and the spectral gap of the generator.
//!
//! Everything here is deterministic and single-pass; results do not depend on
//! thread counts because nothing here is threaded.

use crate::error::{Error, Result};
use crate::lattice::{LatticeParams, DEFAULT_ORACLE_CAP};
use serde::Serialize;

/// Hard cap for the exact chain solvers (2^16 states).
pub const SOLVER_CAP: u64 = 16;

/// The complete energy landscape, indexed by configuration bit code.
pub struct LandscapeIndex {
    params: LatticeParams,
    energies: Vec<f64>,
    vertices: u32,
    /// Rank of each configuration in the deduplicated sorted energy order.
    ranks: Vec<u32>,
    /// Distinct energy values, ascending (merged at 1e-12 relative).
    distinct: Vec<f64>,
    /// Configurations sorted by (rank, code).
    order: Vec<u32>,
}

impl LandscapeIndex {
    /// Enumerate all 2^V energies via single-flip increments along the
    /// lowest-set-bit recursion.
    pub fn build(p: &LatticeParams, cap: u64) -> Result<Self> {
        let v = p.vertex_count();
        if v > cap || v > 25 {
            return Err(Error::SizeCap {
                required: v,
                cap: cap.min(25),
            });
        }
        let v = v as u32;
        let states = 1usize << v;
        // Per-vertex, per-level block masks.
        let levels = p.levels as usize;
        let mut masks = vec![0u32; v as usize * (levels + 1)];
        for w in 0..v as u64 {
            masks[w as usize * (levels + 1)] = 1 << w;
            for l in 1..=levels {
                let size = p.block_size(l as u32);
                let start = (w / size) * size;
                let mut m = 0u32;
                for b in start..start + size {
                    m |= 1 << b;
                }
                masks[w as usize * (levels + 1) + l] = m;
            }
        }
        let mut energies = vec![0.0f64; states];
        let mut counts = vec![0u64; levels + 1];
        for code in 1..states {
            let w = code.trailing_zeros() as usize;
            let prev = code & (code - 1);
            let mrow = &masks[w * (levels + 1)..(w + 1) * (levels + 1)];
            for l in 0..=levels {
                counts[l] = (prev as u32 & mrow[l]).count_ones() as u64;
            }
            energies[code] =
                energies[prev] + crate::energy::flip_delta_from_counts(&counts, false, p);
        }

        // Deduplicated energy ranks.
        let mut order: Vec<u32> = (0..states as u32).collect();
        order.sort_by(|&a, &b| {
            energies[a as usize]
                .partial_cmp(&energies[b as usize])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut ranks = vec![0u32; states];
        let mut distinct = Vec::new();
        let mut rep = f64::NEG_INFINITY;
        for &code in &order {
            let e = energies[code as usize];
            if distinct.is_empty() || e > rep + 1e-12 * rep.abs().max(1.0) {
                distinct.push(e);
                rep = e;
            }
            ranks[code as usize] = (distinct.len() - 1) as u32;
        }
        Ok(LandscapeIndex {
            params: p.clone(),
            energies,
            vertices: v,
            ranks,
            distinct,
            order,
        })
    }

    pub fn states(&self) -> usize {
        self.energies.len()
    }

    pub fn vertices(&self) -> u32 {
        self.vertices
    }

    pub fn energy(&self, code: usize) -> f64 {
        self.energies[code]
    }

    pub fn params(&self) -> &LatticeParams {
        &self.params
    }

    fn full_code(&self) -> usize {
        self.states() - 1
    }

    /// Weak local minima: no strictly lower neighbour (by rank).
    fn is_weak_minimum(&self, code: usize) -> bool {
        let r = self.ranks[code];
        (0..self.vertices).all(|w| self.ranks[code ^ (1 << w)] >= r)
    }

    /// Strict local minima: every neighbour strictly higher.
    pub fn is_local_minimum(&self, code: usize) -> bool {
        let r = self.ranks[code];
        (0..self.vertices).all(|w| self.ranks[code ^ (1 << w)] > r)
    }

    /// CSV dump `bitcode,volume,energy` (one configuration per line).
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for code in 0..self.states() {
            writeln!(
                out,
                "{code},{},{}",
                (code as u64).count_ones(),
                self.energies[code]
            )
            .map_err(|e| Error::Structural(format!("io: {e}")))?;
        }
        Ok(())
    }
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            self.parent[x as usize] = self.parent[self.parent[x as usize] as usize];
            x = self.parent[x as usize];
        }
        x
    }
}

/// Exact communication height between two configuration sets: the lowest
/// threshold at which some member of `a` and some member of `b` lie in one
/// connected component of the sublevel graph. Thresholds walk the distinct
/// energy values upward (bottleneck search by percolation).
pub fn communication_height(landscape: &LandscapeIndex, a: &[u64], b: &[u64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParams(
            "endpoint sets must be non-empty".into(),
        ));
    }
    let states = landscape.states();
    let mut in_a = vec![false; states];
    let mut in_b = vec![false; states];
    for &c in a {
        in_a[c as usize] = true;
    }
    for &c in b {
        in_b[c as usize] = true;
        if in_a[c as usize] {
            return Err(Error::InvalidParams(
                "endpoint sets must be disjoint".into(),
            ));
        }
    }
    let mut uf = UnionFind::new(states);
    let mut flags = vec![0u8; states]; // per root: 1 = touches a, 2 = touches b
    let mut present = vec![false; states];
    let v = landscape.vertices;
    let order = &landscape.order;
    let mut i = 0usize;
    while i < order.len() {
        let r = landscape.ranks[order[i] as usize];
        let mut j = i;
        while j < order.len() && landscape.ranks[order[j] as usize] == r {
            let code = order[j] as usize;
            present[code] = true;
            flags[code] = (in_a[code] as u8) | ((in_b[code] as u8) << 1);
            j += 1;
        }
        for &code in &order[i..j] {
            for w in 0..v {
                let nb = code ^ (1 << w);
                if present[nb as usize] {
                    let (ra, rb) = (uf.find(code), uf.find(nb));
                    if ra != rb {
                        let (big, small) = if uf.size[ra as usize] >= uf.size[rb as usize] {
                            (ra, rb)
                        } else {
                            (rb, ra)
                        };
                        uf.parent[small as usize] = big;
                        uf.size[big as usize] += uf.size[small as usize];
                        flags[big as usize] |= flags[small as usize];
                    }
                }
            }
        }
        for k in i..j {
            if flags[uf.find(order[k]) as usize] == 3 {
                return Ok(landscape.distinct[r as usize]);
            }
        }
        i = j;
    }
    Err(Error::Structural("endpoint sets never connected".into()))
}

/// Stability level of one configuration with its energy.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityEntry {
    pub code: u64,
    pub volume: u32,
    pub energy: f64,
    /// Barrier to reach strictly lower energy; None for the ground state.
    pub level: Option<f64>,
}

/// Stability analysis of the landscape.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    /// Weak local minima (no strictly lower neighbour) with their levels.
    pub minima: Vec<StabilityEntry>,
    /// Strict local minima among them.
    pub strict_minima: Vec<u64>,
    pub omega_stab: Vec<u64>,
    pub omega_meta: Vec<u64>,
}

/// Stability levels for every weak local minimum, the ground set, and the
/// deepest non-global minima. Every other configuration reaches strictly
/// lower energy without climbing, so its stability level is zero.
pub fn stability_report(landscape: &LandscapeIndex) -> Result<StabilityReport> {
    let states = landscape.states();
    let v = landscape.vertices;
    let minima: Vec<u32> = (0..states as u32)
        .filter(|&c| landscape.is_weak_minimum(c as usize))
        .collect();

    let mut uf = UnionFind::new(states);
    let mut present = vec![false; states];
    let mut min_rank = vec![u32::MAX; states]; // per root
    let mut level: Vec<Option<f64>> = vec![None; minima.len()];
    let mut unresolved: Vec<usize> = (0..minima.len()).collect();

    let order = &landscape.order;
    let mut i = 0usize;
    while i < order.len() {
        let r = landscape.ranks[order[i] as usize];
        let t = landscape.distinct[r as usize];
        let mut j = i;
        while j < order.len() && landscape.ranks[order[j] as usize] == r {
            let code = order[j] as usize;
            present[code] = true;
            min_rank[code] = r;
            j += 1;
        }
        for &code in &order[i..j] {
            for w in 0..v {
                let nb = code ^ (1 << w);
                if present[nb as usize] {
                    let (ra, rb) = (uf.find(code), uf.find(nb));
                    if ra != rb {
                        let (big, small) = if uf.size[ra as usize] >= uf.size[rb as usize] {
                            (ra, rb)
                        } else {
                            (rb, ra)
                        };
                        uf.parent[small as usize] = big;
                        uf.size[big as usize] += uf.size[small as usize];
                        min_rank[big as usize] =
                            min_rank[big as usize].min(min_rank[small as usize]);
                    }
                }
            }
        }
        unresolved.retain(|&mi| {
            let code = minima[mi];
            if !present[code as usize] {
                return true;
            }
            let root = uf.find(code);
            if min_rank[root as usize] < landscape.ranks[code as usize] {
                level[mi] = Some(t - landscape.energy(code as usize));
                false
            } else {
                true
            }
        });
        i = j;
    }

    let entries: Vec<StabilityEntry> = minima
        .iter()
        .zip(level.iter())
        .map(|(&code, &lv)| StabilityEntry {
            code: code as u64,
            volume: code.count_ones(),
            energy: landscape.energy(code as usize),
            level: lv,
        })
        .collect();
    let stab_rank = 0u32;
    let omega_stab: Vec<u64> = (0..states as u32)
        .filter(|&c| landscape.ranks[c as usize] == stab_rank)
        .map(|c| c as u64)
        .collect();
    let mut best = f64::NEG_INFINITY;
    for e in &entries {
        if let Some(lv) = e.level {
            if lv > best + 1e-12 {
                best = lv;
            }
        }
    }
    let omega_meta: Vec<u64> = entries
        .iter()
        .filter(|e| {
            e.level
                .is_some_and(|lv| (lv - best).abs() <= 1e-12 * best.abs().max(1.0))
        })
        .map(|e| e.code)
        .collect();
    let strict_minima: Vec<u64> = minima
        .iter()
        .filter(|&&c| landscape.is_local_minimum(c as usize))
        .map(|&c| c as u64)
        .collect();
    Ok(StabilityReport {
        minima: entries,
        strict_minima,
        omega_stab,
        omega_meta,
    })
}

/// Verbatim re-checks of the gate-defining conditions on the produced sets.
#[derive(Debug, Clone, Serialize)]
pub struct GateConditions {
    /// Every protocritical member has a gate neighbour and vice versa.
    pub adjacency_both_ways: bool,
    /// Every protocritical member is closer to the start than to the target.
    pub protocritical_on_start_side: bool,
    /// Every gate member reaches the target without exceeding the barrier or
    /// re-entering the start valley.
    pub gate_reaches_target: bool,
    /// All gate members share one volume.
    pub uniform_volume: Option<u64>,
    /// No two gate members are a single flip apart.
    pub no_internal_moves: bool,
    /// Every volume-down neighbour of the gate lies in the start valley and
    /// every volume-up neighbour in the target valley.
    pub escape_neighbourhoods_clean: bool,
}

/// The valley/gate decomposition of the landscape at the barrier threshold.
pub struct GateSets {
    /// Barrier value (energy of the gate level).
    pub phi: f64,
    phi_rank: u32,
    /// Join ranks to the start / target components.
    join_minus: Vec<u32>,
    join_plus: Vec<u32>,
    /// Membership flags per configuration.
    flags: Vec<u8>,
    pub wells: Vec<Vec<u64>>,
    pub c_star: Vec<u64>,
    pub p_star: Vec<u64>,
    pub conditions: GateConditions,
}

const F_SSTAR: u8 = 1;
const F_SMINUS: u8 = 2;
const F_SPLUS: u8 = 4;
const F_WELL: u8 = 8;
const F_CSTAR: u8 = 16;
const F_PSTAR: u8 = 32;

impl GateSets {
    pub fn in_start_valley(&self, code: u64) -> bool {
        self.flags[code as usize] & F_SMINUS != 0
    }
    pub fn in_target_valley(&self, code: u64) -> bool {
        self.flags[code as usize] & F_SPLUS != 0
    }
    pub fn in_saddle_set(&self, code: u64) -> bool {
        self.flags[code as usize] & F_SSTAR != 0
    }
    pub fn in_gate(&self, code: u64) -> bool {
        self.flags[code as usize] & F_CSTAR != 0
    }
    pub fn size_start_valley(&self) -> usize {
        self.flags.iter().filter(|&&f| f & F_SMINUS != 0).count()
    }
    pub fn size_target_valley(&self) -> usize {
        self.flags.iter().filter(|&&f| f & F_SPLUS != 0).count()
    }
    pub fn size_saddle_set(&self) -> usize {
        self.flags.iter().filter(|&&f| f & F_SSTAR != 0).count()
    }
    /// Exact barrier height from the start, per configuration.
    pub fn height_to_start(&self, landscape: &LandscapeIndex, code: u64) -> f64 {
        landscape.distinct[self.join_minus[code as usize] as usize]
    }
    pub fn height_to_target(&self, landscape: &LandscapeIndex, code: u64) -> f64 {
        landscape.distinct[self.join_plus[code as usize] as usize]
    }
}

/// Extract the valleys around the start and target, the wells at the top, the
/// gate and its protocritical shell.
///
/// The gate extraction is constructive: a configuration sits in the gate when
/// it has the barrier energy, touches the start valley by one flip, and can
/// reach the target without exceeding the barrier while avoiding the start
/// valley. The produced sets are re-checked verbatim against the defining
/// conditions in `GateConditions`.
pub fn gate_sets(landscape: &LandscapeIndex) -> Result<GateSets> {
    let states = landscape.states();
    let v = landscape.vertices;
    let start = 0usize;
    let target = landscape.full_code();

    // One percolation sweep records, for every configuration, the threshold
    // rank at which it first joins the start component and the target
    // component.
    let mut uf = UnionFind::new(states);
    let mut present = vec![false; states];
    let mut join_minus = vec![u32::MAX; states];
    let mut join_plus = vec![u32::MAX; states];
    let mut has_minus = vec![false; states]; // per root
    let mut has_plus = vec![false; states];
    // Intrusive member lists per root.
    let head: Vec<u32> = (0..states as u32).collect();
    let mut tail: Vec<u32> = (0..states as u32).collect();
    let mut next = vec![u32::MAX; states];
    let mut phi_rank = u32::MAX;

    let assign = |list_head: u32, next: &[u32], out: &mut [u32], value: u32| {
        let mut cur = list_head;
        while cur != u32::MAX {
            out[cur as usize] = value;
            cur = next[cur as usize];
        }
    };

    let order = &landscape.order;
    let mut i = 0usize;
    while i < order.len() {
        let r = landscape.ranks[order[i] as usize];
        let mut j = i;
        while j < order.len() && landscape.ranks[order[j] as usize] == r {
            let code = order[j] as usize;
            present[code] = true;
            if code == start {
                has_minus[code] = true;
                join_minus[code] = r;
            }
            if code == target {
                has_plus[code] = true;
                join_plus[code] = r;
            }
            j += 1;
        }
        for &code in &order[i..j] {
            for w in 0..v {
                let nb = code ^ (1 << w);
                if !present[nb as usize] {
                    continue;
                }
                let (ra, rb) = (uf.find(code), uf.find(nb));
                if ra == rb {
                    continue;
                }
                let (big, small) = if uf.size[ra as usize] >= uf.size[rb as usize] {
                    (ra, rb)
                } else {
                    (rb, ra)
                };
                // Flag propagation: if exactly one side already touches the
                // start (target), every member of the other side joins it now.
                if has_minus[big as usize] != has_minus[small as usize] {
                    let other = if has_minus[big as usize] { small } else { big };
                    assign(head[other as usize], &next, &mut join_minus, r);
                }
                if has_plus[big as usize] != has_plus[small as usize] {
                    let other = if has_plus[big as usize] { small } else { big };
                    assign(head[other as usize], &next, &mut join_plus, r);
                }
                uf.parent[small as usize] = big;
                uf.size[big as usize] += uf.size[small as usize];
                has_minus[big as usize] |= has_minus[small as usize];
                has_plus[big as usize] |= has_plus[small as usize];
                next[tail[big as usize] as usize] = head[small as usize];
                tail[big as usize] = tail[small as usize];
            }
        }
        if phi_rank == u32::MAX {
            let root = uf.find(start as u32);
            if has_minus[root as usize] && has_plus[root as usize] {
                phi_rank = r;
            }
        }
        i = j;
    }
    if phi_rank == u32::MAX {
        return Err(Error::Structural("start and target never connected".into()));
    }
    let phi = landscape.distinct[phi_rank as usize];

    let mut flags = vec![0u8; states];
    for code in 0..states {
        let jm = join_minus[code];
        let jp = join_plus[code];
        if jm <= phi_rank && jp <= phi_rank {
            flags[code] |= F_SSTAR;
        }
        if jm < phi_rank {
            flags[code] |= F_SMINUS;
        }
        if jp < phi_rank {
            flags[code] |= F_SPLUS;
        }
    }

    // Wells: components (inside themselves) of saddle-set configurations
    // strictly below the barrier that belong to neither valley.
    let mut wells: Vec<Vec<u64>> = Vec::new();
    let mut seen = vec![false; states];
    for code in 0..states {
        let well_member = |c: usize, flags: &[u8]| {
            flags[c] & F_SSTAR != 0
                && flags[c] & (F_SMINUS | F_SPLUS) == 0
                && landscape.ranks[c] < phi_rank
        };
        if seen[code] || !well_member(code, &flags) {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![code as u32];
        seen[code] = true;
        while let Some(c) = stack.pop() {
            comp.push(c as u64);
            flags[c as usize] |= F_WELL;
            for w in 0..v {
                let nb = (c ^ (1 << w)) as usize;
                if !seen[nb] && well_member(nb, &flags) {
                    seen[nb] = true;
                    stack.push(nb as u32);
                }
            }
        }
        comp.sort_unstable();
        wells.push(comp);
    }
    wells.sort();

    // Reachability of the target through the closed sublevel set avoiding the
    // start valley.
    let mut reach_plus = vec![false; states];
    let mut stack = vec![target as u32];
    reach_plus[target] = true;
    while let Some(c) = stack.pop() {
        for w in 0..v {
            let nb = (c ^ (1 << w)) as usize;
            if !reach_plus[nb]
                && landscape.ranks[nb] <= phi_rank
                && flags[nb] & F_SSTAR != 0
                && flags[nb] & F_SMINUS == 0
            {
                reach_plus[nb] = true;
                stack.push(nb as u32);
            }
        }
    }

    let mut c_star = Vec::new();
    for code in 0..states {
        if landscape.ranks[code] != phi_rank || flags[code] & F_SSTAR == 0 {
            continue;
        }
        if !reach_plus[code] {
            continue;
        }
        let touches_start = (0..v).any(|w| flags[code ^ (1usize << w)] & F_SMINUS != 0);
        if touches_start {
            flags[code] |= F_CSTAR;
            c_star.push(code as u64);
        }
    }
    let mut p_star = Vec::new();
    for code in 0..states {
        if flags[code] & F_SMINUS == 0 {
            continue;
        }
        if (0..v).any(|w| flags[code ^ (1usize << w)] & F_CSTAR != 0) {
            flags[code] |= F_PSTAR;
            p_star.push(code as u64);
        }
    }

    // Verbatim condition checks on the produced sets.
    let adjacency_both_ways = c_star
        .iter()
        .all(|&c| (0..v).any(|w| flags[(c ^ (1u64 << w)) as usize] & F_PSTAR != 0))
        && p_star
            .iter()
            .all(|&c| (0..v).any(|w| flags[(c ^ (1u64 << w)) as usize] & F_CSTAR != 0));
    let protocritical_on_start_side = p_star
        .iter()
        .all(|&c| join_minus[c as usize] < join_plus[c as usize]);
    let gate_reaches_target = c_star.iter().all(|&c| reach_plus[c as usize]);
    let uniform_volume = {
        let volumes: Vec<u32> = c_star.iter().map(|&c| (c as u32).count_ones()).collect();
        if !volumes.is_empty() && volumes.iter().all(|&x| x == volumes[0]) {
            Some(volumes[0] as u64)
        } else {
            None
        }
    };
    let no_internal_moves = c_star
        .iter()
        .all(|&c| (0..v).all(|w| flags[(c ^ (1u64 << w)) as usize] & F_CSTAR == 0));
    // Strict escape condition: every saddle-set neighbour of the gate lies
    // in the valley matching its volume direction (no flat top, no wells
    // adjacent to the gate). This is what the reduced prefactor needs.
    let escape_neighbourhoods_clean = c_star.iter().all(|&c| {
        (0..v).all(|w| {
            let nb = (c ^ (1u64 << w)) as usize;
            if flags[nb] & F_SSTAR == 0 {
                return true;
            }
            if nb.count_ones() > c.count_ones() {
                flags[nb] & F_SPLUS != 0
            } else {
                flags[nb] & F_SMINUS != 0
            }
        })
    });

    Ok(GateSets {
        phi,
        phi_rank,
        join_minus,
        join_plus,
        flags,
        wells,
        c_star,
        p_star,
        conditions: GateConditions {
            adjacency_both_ways,
            protocritical_on_start_side,
            gate_reaches_target,
            uniform_volume,
            no_internal_moves,
            escape_neighbourhoods_clean,
        },
    })
}

/// Exact capacity 1/K* between the two valleys: Dirichlet energy of the
/// harmonic potential with unit conductances on allowed moves inside the
/// saddle set, wells contracted to single free nodes.
pub fn capacity(landscape: &LandscapeIndex, gates: &GateSets) -> Result<f64> {
    let states = landscape.states();
    let v = landscape.vertices;
    let flags = &gates.flags;

    // Unknowns: barrier-level saddle configurations plus one node per well.
    let mut unknown = vec![u32::MAX; states];
    let mut n_unknown = 0u32;
    for code in 0..states {
        if flags[code] & F_SSTAR != 0
            && landscape.ranks[code] == gates.phi_rank
            && flags[code] & (F_SMINUS | F_SPLUS) == 0
        {
            unknown[code] = n_unknown;
            n_unknown += 1;
        }
    }
    for well in &gates.wells {
        for &c in well {
            unknown[c as usize] = n_unknown;
        }
        n_unknown += 1;
    }

    // Potential: 1 on the start valley, 0 on the target valley.
    let fixed = |code: usize| -> Option<f64> {
        if flags[code] & F_SMINUS != 0 {
            Some(1.0)
        } else if flags[code] & F_SPLUS != 0 {
            Some(0.0)
        } else {
            None
        }
    };

    let n = n_unknown as usize;
    let mut x = vec![0.0; n];
    if n > 0 {
        // Assemble the grounded Laplacian rows (diagonal degree, off-diagonal
        // -1 per edge, wells aggregate their members' external edges).
        let mut diag = vec![0.0f64; n];
        let mut rhs = vec![0.0f64; n];
        let mut offdiag: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for code in 0..states {
            let ui = unknown[code];
            if ui == u32::MAX || flags[code] & F_SSTAR == 0 {
                continue;
            }
            for w in 0..v {
                let nb = code ^ (1usize << w);
                if flags[nb] & F_SSTAR == 0 {
                    continue;
                }
                if unknown[nb] == ui {
                    continue; // edge inside one well
                }
                diag[ui as usize] += 1.0;
                if let Some(val) = fixed(nb) {
                    rhs[ui as usize] += val;
                } else {
                    offdiag[ui as usize].push((unknown[nb], 1.0));
                }
            }
        }
        if n <= 2048 {
            let mut a = vec![0.0f64; n * n];
            for i in 0..n {
                a[i * n + i] = diag[i];
                for &(j, w) in &offdiag[i] {
                    a[i * n + j as usize] -= w;
                }
            }
            let mut b = rhs.clone();
            x = crate::linalg::dense_solve(&mut a, &mut b, n)
                .ok_or_else(|| Error::Structural("singular capacity system".into()))?;
        } else {
            let apply = |input: &[f64], out: &mut [f64]| {
                for i in 0..n {
                    let mut acc = diag[i] * input[i];
                    for &(j, w) in &offdiag[i] {
                        acc -= w * input[j as usize];
                    }
                    out[i] = acc;
                }
            };
            x = crate::linalg::conjugate_gradient(apply, &rhs, 1e-13, 20 * n + 100);
        }
    }

    let value_of = |code: usize| -> Option<f64> {
        if flags[code] & F_SSTAR == 0 {
            None
        } else if let Some(val) = fixed(code) {
            Some(val)
        } else {
            Some(x[unknown[code] as usize])
        }
    };

    // Dirichlet sum over unordered saddle-set edges.
    let mut energy = 0.0;
    for code in 0..states {
        let Some(fc) = value_of(code) else { continue };
        for w in 0..v {
            let nb = code ^ (1usize << w);
            if nb < code {
                continue;
            }
            if let Some(fn_) = value_of(nb) {
                if unknown[code] != u32::MAX && unknown[code] == unknown[nb] {
                    continue; // inside a well
                }
                energy += (fc - fn_) * (fc - fn_);
            }
        }
    }
    Ok(energy)
}

/// Upper and lower certificates for the capacity: shorting everything but the
/// gate-to-target edges raises it, and the unit-flow certificate from the
/// harmonic solution itself lower-bounds it (Thomson).
pub fn capacity_bounds(landscape: &LandscapeIndex, gates: &GateSets) -> (f64, f64) {
    let v = landscape.vertices;
    // Cut bound: every unit flow into the target valley crosses an edge from
    // outside it, so the capacity is at most the size of that edge cut. When
    // the gate conditions hold this cut is exactly the union of the gate
    // members' upward escape edges.
    let mut upper = 0.0;
    for code in 0..landscape.states() {
        if gates.flags[code] & F_SSTAR == 0 || gates.flags[code] & F_SPLUS != 0 {
            continue;
        }
        for w in 0..v {
            let nb = code ^ (1usize << w);
            if gates.flags[nb] & F_SPLUS != 0 {
                upper += 1.0;
            }
        }
    }
    let cap = capacity(landscape, gates).unwrap_or(0.0);
    (cap, upper)
}

/// Builds the continuous-time generator action for the Glauber chain at
/// inverse temperature beta, in the symmetrized (similarity-transformed)
/// representation where it is a symmetric PSD operator.
struct SymmetrizedChain<'a> {
    landscape: &'a LandscapeIndex,
    beta: f64,
    /// Total exit rate per state (the diagonal).
    total_rate: Vec<f64>,
}

impl<'a> SymmetrizedChain<'a> {
    fn new(landscape: &'a LandscapeIndex, beta: f64) -> Self {
        let states = landscape.states();
        let v = landscape.vertices;
        let mut total_rate = vec![0.0; states];
        for (code, rate) in total_rate.iter_mut().enumerate() {
            let e = landscape.energy(code);
            let mut acc = 0.0;
            for w in 0..v {
                let de = landscape.energy(code ^ (1usize << w)) - e;
                acc += (-beta * de.max(0.0)).exp();
            }
            *rate = acc;
        }
        SymmetrizedChain {
            landscape,
            beta,
            total_rate,
        }
    }

    /// y = A x with A = D (-L) D^{-1}, D = diag(sqrt(pi)); the off-diagonal
    /// couplings become exp(-beta |dE| / 2).
    fn apply(&self, x: &[f64], y: &mut [f64], skip: Option<usize>) {
        let states = self.landscape.states();
        let v = self.landscape.vertices;
        for code in 0..states {
            if Some(code) == skip {
                y[code] = 0.0;
                continue;
            }
            let e = self.landscape.energy(code);
            let mut acc = self.total_rate[code] * x[code];
            for w in 0..v {
                let nb = code ^ (1usize << w);
                if Some(nb) == skip {
                    continue;
                }
                let de = self.landscape.energy(nb) - e;
                acc -= (-self.beta * de.abs() / 2.0).exp() * x[nb];
            }
            y[code] = acc;
        }
    }

    /// Dense symmetrized matrix (for small state counts).
    fn dense(&self, skip: Option<usize>) -> (Vec<f64>, Vec<usize>) {
        let states = self.landscape.states();
        let v = self.landscape.vertices;
        let keep: Vec<usize> = (0..states).filter(|&c| Some(c) != skip).collect();
        let index: std::collections::HashMap<usize, usize> =
            keep.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let n = keep.len();
        let mut a = vec![0.0; n * n];
        for (i, &code) in keep.iter().enumerate() {
            a[i * n + i] = self.total_rate[code];
            let e = self.landscape.energy(code);
            for w in 0..v {
                let nb = code ^ (1usize << w);
                if let Some(&j) = index.get(&nb) {
                    let de = self.landscape.energy(nb) - e;
                    a[i * n + j] = -(-self.beta * de.abs() / 2.0).exp();
                }
            }
        }
        (a, keep)
    }
}

/// Exact mean hitting time of the all-plus state from the all-minus state for
/// the Glauber chain at inverse temperature beta, by the first-step linear
/// system (V <= 16).
pub fn exact_mean_hitting_time(p: &LatticeParams, beta: f64, cap: u64) -> Result<f64> {
    if beta < 0.0 {
        return Err(Error::InvalidParams("beta must be >= 0".into()));
    }
    let landscape = LandscapeIndex::build(p, cap.min(SOLVER_CAP))?;
    let states = landscape.states();
    let target = landscape.full_code();
    let chain = SymmetrizedChain::new(&landscape, beta);
    // Shift energies so the sqrt-weights stay in range.
    let eshift = (0..states)
        .filter(|&c| c != target)
        .map(|c| landscape.energy(c))
        .fold(f64::INFINITY, f64::min);
    let weight = |c: usize| (-beta * (landscape.energy(c) - eshift) / 2.0).exp();

    if states <= 512 {
        let (mut a, keep) = chain.dense(Some(target));
        let n = keep.len();
        let mut b: Vec<f64> = keep.iter().map(|&c| weight(c)).collect();
        let y = crate::linalg::dense_solve(&mut a, &mut b, n)
            .ok_or_else(|| Error::Structural("singular hitting-time system".into()))?;
        let idx0 = keep.iter().position(|&c| c == 0).unwrap();
        Ok(y[idx0] / weight(0))
    } else {
        let mut b = vec![0.0; states];
        for (code, slot) in b.iter_mut().enumerate() {
            if code != target {
                *slot = weight(code);
            }
        }
        let apply = |input: &[f64], out: &mut [f64]| chain.apply(input, out, Some(target));
        let y = crate::linalg::conjugate_gradient(apply, &b, 1e-13, 40 * states);
        Ok(y[0] / weight(0))
    }
}

/// Principal (smallest nonzero) eigenvalue of the generator at inverse
/// temperature beta: the spectral gap of the chain (V <= 16).
pub fn spectral_gap(p: &LatticeParams, beta: f64, cap: u64) -> Result<f64> {
    if beta < 0.0 {
        return Err(Error::InvalidParams("beta must be >= 0".into()));
    }
    let landscape = LandscapeIndex::build(p, cap.min(SOLVER_CAP))?;
    let states = landscape.states();
    let chain = SymmetrizedChain::new(&landscape, beta);
    if states <= 128 {
        let (mut a, _) = chain.dense(None);
        let eigs = crate::linalg::jacobi_eigenvalues(&mut a, states);
        // First eigenvalue is 0 (equilibrium); the gap is the next one.
        return Ok(eigs[1]);
    }
    // Matrix-free: deflate the equilibrium direction sqrt(pi).
    let emin = (0..states)
        .map(|c| landscape.energy(c))
        .fold(f64::INFINITY, f64::min);
    let mut kernel: Vec<f64> = (0..states)
        .map(|c| (-beta * (landscape.energy(c) - emin) / 2.0).exp())
        .collect();
    let norm = crate::linalg::dot(&kernel, &kernel).sqrt();
    for x in kernel.iter_mut() {
        *x /= norm;
    }
    let apply = |input: &[f64], out: &mut [f64]| chain.apply(input, out, None);
    Ok(crate::linalg::lanczos_smallest_deflated(
        apply, &kernel, 400,
    ))
}

/// Serializable oracle summary.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub dim: u32,
    pub levels: u32,
    pub field: f64,
    pub couplings: Vec<f64>,
    /// Barrier Phi(start, target) relative to the start energy.
    pub phi: f64,
    pub stability: Vec<StabilityEntry>,
    pub omega_stab: Vec<u64>,
    pub omega_meta: Vec<u64>,
    pub s_star_size: usize,
    pub s_minus_size: usize,
    pub s_plus_size: usize,
    pub wells: Vec<Vec<u64>>,
    pub c_star: Vec<u64>,
    pub p_star: Vec<u64>,
    pub capacity: f64,
    pub gate_conditions: GateConditions,
}

/// Run the full exhaustive analysis.
pub fn oracle_report(p: &LatticeParams, cap: Option<u64>) -> Result<OracleReport> {
    let cap = cap.unwrap_or(DEFAULT_ORACLE_CAP);
    let landscape = LandscapeIndex::build(p, cap)?;
    let stability = stability_report(&landscape)?;
    let gates = gate_sets(&landscape)?;
    let cap_value = capacity(&landscape, &gates)?;
    Ok(OracleReport {
        dim: p.dim,
        levels: p.levels,
        field: p.field,
        couplings: p.couplings.clone(),
        phi: gates.phi,
        stability: stability.minima,
        omega_stab: stability.omega_stab,
        omega_meta: stability.omega_meta,
        s_star_size: gates.size_saddle_set(),
        s_minus_size: gates.size_start_valley(),
        s_plus_size: gates.size_target_valley(),
        wells: gates.wells.clone(),
        c_star: gates.c_star.clone(),
        p_star: gates.p_star.clone(),
        capacity: cap_value,
        gate_conditions: gates.conditions.clone(),
    })
}
