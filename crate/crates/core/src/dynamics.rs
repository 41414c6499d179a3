//! Continuous-time kinetic Monte Carlo for Glauber spin-flip dynamics and
//! statistics of the metastable crossover time.
//!
//! Rates are c(sigma, eta) = exp(-beta [E(eta) - E(sigma)]_+) for single-flip
//! neighbours. Within a 1-block all plus spins share one flip increment and
//! all minus spins another, so the rate table is kept per block class: exact
//! integer block counts are updated in O(n) per event and the class rates are
//! rebuilt from them, which keeps the table bit-identical to a from-scratch
//! recomputation at every step.

use crate::error::{Error, Result};
use crate::lattice::LatticeParams;
use crate::rng::Rng;
use serde::Serialize;

/// Simulation parameters for hitting-time sampling.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub beta: f64,
    pub replicas: u64,
    pub seed: u64,
    /// Safety cap per replica; exceeding it censors the sample.
    pub max_events: u64,
    /// Track whether the final excursion passes through the gate set.
    pub record_gate: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(Error::InvalidParams("beta must be finite and >= 0".into()));
        }
        if self.replicas < 1 {
            return Err(Error::InvalidParams("need at least one replica".into()));
        }
        if self.max_events < 1 {
            return Err(Error::InvalidParams("max_events must be >= 1".into()));
        }
        Ok(())
    }
}

/// One sampled crossover.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HittingSample {
    pub replica: u64,
    /// Continuous time from the start until the all-plus state is hit.
    pub tau: f64,
    pub events: u64,
    /// Whether the excursion after the last visit to the all-minus state
    /// passed through the supplied gate set.
    pub hit_gate: bool,
    /// Set when the event cap was reached before absorption.
    pub censored: bool,
}

/// Sorted gate set for membership tests during simulation.
#[derive(Debug, Clone, Default)]
pub struct GateLookup {
    codes: Vec<u64>,
}

impl GateLookup {
    pub fn new(mut codes: Vec<u64>) -> Self {
        codes.sort_unstable();
        codes.dedup();
        GateLookup { codes }
    }

    #[inline]
    pub fn contains(&self, code: u64) -> bool {
        self.codes.binary_search(&code).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Mutable chain state for one simulation worker: bitmask configuration,
/// exact per-level block counts, and the per-block class rates.
pub struct ChainState<'a> {
    params: &'a LatticeParams,
    beta: f64,
    vertices: u64,
    blocks: usize,
    block_size: u64,
    state: u64,
    /// counts[l][i]: plus spins in the i-th level-(l+1) block.
    counts: Vec<Vec<u32>>,
    /// Interaction constant sum_b J_b (N-1) N^{b-1}.
    shell_sum: f64,
    /// Per-block cumulative rates (rebuilt each event).
    cum: Vec<f64>,
    /// Per-block class rates (down for plus spins, up for minus spins).
    class_rates: Vec<(f64, f64)>,
}

impl<'a> ChainState<'a> {
    pub fn new(p: &'a LatticeParams, beta: f64) -> Result<Self> {
        let v = p.vertex_count();
        if v > 64 {
            return Err(Error::SizeCap {
                required: v,
                cap: 64,
            });
        }
        let nf = p.dim as f64;
        let shell_sum = (1..=p.levels)
            .map(|b| p.coupling(b) * (nf - 1.0) * nf.powi(b as i32 - 1))
            .sum();
        let blocks = (v / p.dim as u64) as usize;
        let counts = (1..=p.levels)
            .map(|l| vec![0u32; (v / p.block_size(l)) as usize])
            .collect();
        Ok(ChainState {
            params: p,
            beta,
            vertices: v,
            blocks,
            block_size: p.dim as u64,
            state: 0,
            counts,
            shell_sum,
            cum: vec![0.0; blocks],
            class_rates: vec![(0.0, 0.0); blocks],
        })
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn full_state(&self) -> u64 {
        if self.vertices == 64 {
            u64::MAX
        } else {
            (1u64 << self.vertices) - 1
        }
    }

    /// Reset to the all-minus configuration.
    pub fn reset(&mut self) {
        self.state = 0;
        for c in self.counts.iter_mut() {
            c.iter_mut().for_each(|x| *x = 0);
        }
    }

    /// Flip increments (down for a plus spin, up for a minus spin) shared by
    /// all spins of one 1-block, from the block-count ladder.
    fn class_deltas(&self, block: usize) -> (f64, f64) {
        let p = self.params;
        let n = p.levels as usize;
        // W = 2 J_n c_n + 2 sum_{b<n} (J_b - J_{b+1}) c_b - shell_sum
        let mut idx = block;
        let mut w = 0.0;
        for b in 1..n {
            w += 2.0 * (p.couplings[b - 1] - p.couplings[b]) * self.counts[b - 1][idx] as f64;
            idx /= p.dim as usize;
        }
        w += 2.0 * p.couplings[n - 1] * self.counts[n - 1][idx] as f64;
        w -= self.shell_sum;
        let down = w - 2.0 * p.couplings[0] + p.field;
        let up = -(w + p.field);
        (down, up)
    }

    /// Recompute every class rate and the cumulative table from the exact
    /// counts; returns the total rate.
    fn rebuild_rates(&mut self) -> f64 {
        let n = self.block_size as f64;
        let mut acc = 0.0;
        for b in 0..self.blocks {
            let (down, up) = self.class_deltas(b);
            let rate_down = (-self.beta * down.max(0.0)).exp();
            let rate_up = (-self.beta * up.max(0.0)).exp();
            self.class_rates[b] = (rate_down, rate_up);
            let c1 = self.counts[0][b] as f64;
            acc += c1 * rate_down + (n - c1) * rate_up;
            self.cum[b] = acc;
        }
        acc
    }

    /// Execute one event; returns (flipped vertex, waiting time).
    pub fn step(&mut self, rng: &mut Rng) -> Result<(u64, f64)> {
        let total = self.rebuild_rates();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::Structural("total rate vanished".into()));
        }
        let dt = rng.exponential() / total;
        let u = rng.uniform_co() * total;
        let block = self.cum.partition_point(|&c| c <= u).min(self.blocks - 1);
        let before = if block == 0 { 0.0 } else { self.cum[block - 1] };
        let mut x = u - before;
        let (rate_down, rate_up) = self.class_rates[block];
        let c1 = self.counts[0][block] as u64;
        let base = block as u64 * self.block_size;
        let plus_mass = c1 as f64 * rate_down;
        let minus = self.block_size - c1;
        // Rounding at a class boundary may point into an empty class; fall
        // back to the populated one.
        let (want_plus, k) = if (x < plus_mass && c1 > 0) || minus == 0 {
            (true, ((x / rate_down) as u64).min(c1 - 1))
        } else {
            x -= plus_mass;
            (false, ((x / rate_up) as u64).min(minus - 1))
        };
        // k-th plus (or minus) vertex within the block.
        let mut remaining = k;
        let mut vertex = base;
        for off in 0..self.block_size {
            let w = base + off;
            let is_plus = self.state >> w & 1 == 1;
            if is_plus == want_plus {
                if remaining == 0 {
                    vertex = w;
                    break;
                }
                remaining -= 1;
            }
        }
        self.flip(vertex);
        Ok((vertex, dt))
    }

    fn flip(&mut self, vertex: u64) {
        let was_plus = self.state >> vertex & 1 == 1;
        self.state ^= 1 << vertex;
        let delta: i32 = if was_plus { -1 } else { 1 };
        for l in 1..=self.params.levels {
            let idx = (vertex / self.params.block_size(l)) as usize;
            let c = &mut self.counts[l as usize - 1][idx];
            *c = (*c as i32 + delta) as u32;
        }
    }

    /// Consistency probe: recompute the block counts from the bitmask and
    /// compare with the maintained ones (must match exactly).
    pub fn counts_consistent(&self) -> bool {
        for l in 1..=self.params.levels {
            let size = self.params.block_size(l);
            for (i, &c) in self.counts[l as usize - 1].iter().enumerate() {
                let start = i as u64 * size;
                let mut fresh = 0u32;
                for w in start..start + size {
                    fresh += (self.state >> w & 1) as u32;
                }
                if fresh != c {
                    return false;
                }
            }
        }
        true
    }

    /// Consistency probe: the rate table derived from the maintained counts
    /// must be bit-identical to one derived from counts recomputed off the
    /// raw bitmask.
    pub fn rates_consistent(&mut self) -> bool {
        if !self.counts_consistent() {
            return false;
        }
        let mut fresh = match ChainState::new(self.params, self.beta) {
            Ok(c) => c,
            Err(_) => return false,
        };
        fresh.state = self.state;
        for l in 1..=self.params.levels {
            let size = self.params.block_size(l);
            for (i, slot) in fresh.counts[l as usize - 1].iter_mut().enumerate() {
                let start = i as u64 * size;
                *slot = (start..start + size)
                    .map(|w| (self.state >> w & 1) as u32)
                    .sum();
            }
        }
        let total_a = self.rebuild_rates();
        let total_b = fresh.rebuild_rates();
        total_a.to_bits() == total_b.to_bits()
            && self.class_rates == fresh.class_rates
            && self
                .cum
                .iter()
                .zip(&fresh.cum)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn run_replica(
    p: &LatticeParams,
    cfg: &SimConfig,
    gate: &GateLookup,
    replica: u64,
) -> Result<HittingSample> {
    let mut rng = Rng::from_seed_stream(cfg.seed, replica);
    let mut chain = ChainState::new(p, cfg.beta)?;
    chain.reset();
    let full = chain.full_state();
    let mut tau = 0.0;
    let mut events = 0u64;
    let mut gate_flag = false;
    loop {
        if events >= cfg.max_events {
            return Ok(HittingSample {
                replica,
                tau,
                events,
                hit_gate: gate_flag,
                censored: true,
            });
        }
        let (_, dt) = chain.step(&mut rng)?;
        tau += dt;
        events += 1;
        let s = chain.state();
        if cfg.record_gate {
            if s == 0 {
                gate_flag = false;
            } else if gate.contains(s) {
                gate_flag = true;
            }
        }
        if s == full {
            return Ok(HittingSample {
                replica,
                tau,
                events,
                hit_gate: gate_flag,
                censored: false,
            });
        }
    }
}

/// Sample the crossover time from all-minus to all-plus for every replica.
///
/// Deterministic: the sample for replica i depends only on (seed, i), so the
/// output is bit-identical for any thread count.
pub fn simulate_hitting(
    p: &LatticeParams,
    cfg: &SimConfig,
    gate: Option<&GateLookup>,
    threads: usize,
) -> Result<Vec<HittingSample>> {
    cfg.validate()?;
    if cfg.record_gate && gate.is_none_or(|g| g.is_empty()) {
        return Err(Error::InvalidParams(
            "record_gate requires a non-empty gate set".into(),
        ));
    }
    let empty = GateLookup::default();
    let gate = gate.unwrap_or(&empty);
    let threads = threads.max(1);
    let n = cfg.replicas;
    let mut out: Vec<Option<HittingSample>> = vec![None; n as usize];
    if threads == 1 || n < 2 {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = Some(run_replica(p, cfg, gate, i as u64)?);
        }
    } else {
        let chunk = n.div_ceil(threads as u64) as usize;
        let results: Vec<Result<Vec<HittingSample>>> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for t in 0..threads {
                let lo = t * chunk;
                if lo >= n as usize {
                    break;
                }
                let hi = ((t + 1) * chunk).min(n as usize);
                handles.push(scope.spawn(move || {
                    (lo..hi)
                        .map(|i| run_replica(p, cfg, gate, i as u64))
                        .collect::<Result<Vec<_>>>()
                }));
            }
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut idx = 0usize;
        for r in results {
            for s in r? {
                out[idx] = Some(s);
                idx += 1;
            }
        }
    }
    Ok(out.into_iter().map(|s| s.unwrap()).collect())
}

/// Pairwise (cascade) summation: order-stable and accurate.
fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Kolmogorov-Smirnov statistic of a sample against the unit exponential law.
pub fn ks_statistic_unit_exponential(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = 1.0 - (-x).exp();
        d = d.max((i as f64 + 1.0) / n - cdf);
        d = d.max(cdf - i as f64 / n);
    }
    d
}

/// Summary statistics of a batch of hitting samples.
#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub samples: usize,
    pub censored: usize,
    pub mean: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    /// KS distance of tau / mean(tau) from the unit exponential.
    pub ks_exponential: f64,
    pub gate_frequency: Option<f64>,
    pub gate_ci95: Option<(f64, f64)>,
}

/// Mean, spread, exponentiality and gate statistics; needs at least 100
/// uncensored samples.
pub fn summarize(samples: &[HittingSample], gate_recorded: bool) -> Result<SimSummary> {
    let taus: Vec<f64> = samples
        .iter()
        .filter(|s| !s.censored)
        .map(|s| s.tau)
        .collect();
    let censored = samples.len() - taus.len();
    if taus.len() < 100 {
        return Err(Error::TooFewSamples {
            got: taus.len(),
            need: 100,
        });
    }
    let n = taus.len() as f64;
    let mean = pairwise_sum(&taus) / n;
    let sq: Vec<f64> = taus.iter().map(|&t| (t - mean) * (t - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    let std_error = (var / n).sqrt();
    let ci95 = (mean - 1.96 * std_error, mean + 1.96 * std_error);
    let normalized: Vec<f64> = taus.iter().map(|&t| t / mean).collect();
    let ks = ks_statistic_unit_exponential(&normalized);
    let (gate_frequency, gate_ci95) = if gate_recorded {
        let hits = samples.iter().filter(|s| !s.censored && s.hit_gate).count() as f64;
        let f = hits / n;
        let half = 1.96 * (f * (1.0 - f) / n).sqrt();
        (Some(f), Some(((f - half).max(0.0), (f + half).min(1.0))))
    } else {
        (None, None)
    };
    Ok(SimSummary {
        samples: taus.len(),
        censored,
        mean,
        std_error,
        ci95,
        ks_exponential: ks,
        gate_frequency,
        gate_ci95,
    })
}

/// CSV export `replica,tau,events,hit_gate,censored` with a header line.
pub fn write_samples_csv<W: std::io::Write>(mut out: W, samples: &[HittingSample]) -> Result<()> {
    writeln!(out, "replica,tau,events,hit_gate,censored")
        .map_err(|e| Error::Structural(format!("io: {e}")))?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.replica, s.tau, s.events, s.hit_gate as u8, s.censored as u8
        )
        .map_err(|e| Error::Structural(format!("io: {e}")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{flip_delta, relative_energy};
    use crate::lattice::{Configuration, VertexId};

    fn instance_a() -> LatticeParams {
        LatticeParams::standard(3, 2, 1.0, 0.8).unwrap()
    }

    #[test]
    fn detailed_balance_of_rates() {
        // c(sigma,eta) e^{-beta E(sigma)} = c(eta,sigma) e^{-beta E(eta)}
        let p = instance_a();
        let beta = 1.7;
        let mut rng = crate::rng::Rng::from_seed_stream(11, 0);
        for _ in 0..500 {
            let code = rng.below(1 << 9);
            let v = VertexId(rng.below(9));
            let sigma = Configuration::from_bitcode(code, &p).unwrap();
            let e_s = relative_energy(&sigma, &p).unwrap().0;
            let d = flip_delta(&sigma, v, &p).unwrap();
            let e_t = e_s + d;
            let fwd = (-beta * d.max(0.0)).exp() * (-beta * e_s).exp();
            let bwd = (-beta * (-d).max(0.0)).exp() * (-beta * e_t).exp();
            assert!((fwd - bwd).abs() <= 1e-12 * fwd.abs().max(1.0));
        }
    }

    #[test]
    fn chain_deltas_match_energy_module() {
        let p = instance_a();
        let mut chain = ChainState::new(&p, 2.0).unwrap();
        let mut rng = crate::rng::Rng::from_seed_stream(5, 0);
        for _ in 0..2000 {
            chain.step(&mut rng).unwrap();
            if chain.state() == chain.full_state() {
                chain.reset();
            }
            let sigma = Configuration::from_bitcode(chain.state(), &p).unwrap();
            for b in 0..3usize {
                let (down, up) = chain.class_deltas(b);
                for off in 0..3u64 {
                    let w = VertexId(b as u64 * 3 + off);
                    let direct = flip_delta(&sigma, w, &p).unwrap();
                    let class = if sigma.contains(w) { down } else { up };
                    assert!(
                        (direct - class).abs() < 1e-12,
                        "state {:#b} vertex {w:?}",
                        chain.state()
                    );
                }
            }
        }
    }

    #[test]
    fn long_trajectory_keeps_counts_and_rates_exact() {
        let p = instance_a();
        let mut chain = ChainState::new(&p, 1.0).unwrap();
        let mut rng = crate::rng::Rng::from_seed_stream(0xABCD, 3);
        for step in 0..100_000 {
            chain.step(&mut rng).unwrap();
            if chain.state() == chain.full_state() {
                chain.reset();
            }
            if step % 10_000 == 0 {
                assert!(chain.counts_consistent());
            }
        }
        assert!(chain.counts_consistent());
        assert!(chain.rates_consistent());
    }

    #[test]
    fn smallest_instance_hits_quickly() {
        let p = LatticeParams::new(2, 1, vec![1.0], 0.5).unwrap();
        let cfg = SimConfig {
            beta: 2.0,
            replicas: 50,
            seed: 9,
            max_events: 1_000_000,
            record_gate: false,
        };
        let samples = simulate_hitting(&p, &cfg, None, 1).unwrap();
        for s in &samples {
            assert!(!s.censored);
            assert!(s.tau > 0.0);
            assert!(s.events >= 2);
        }
    }

    #[test]
    fn replicas_reproducible_across_thread_counts() {
        let p = instance_a();
        let cfg = SimConfig {
            beta: 1.5,
            replicas: 64,
            seed: 4242,
            max_events: 1_000_000,
            record_gate: false,
        };
        let a = simulate_hitting(&p, &cfg, None, 1).unwrap();
        let b = simulate_hitting(&p, &cfg, None, 2).unwrap();
        let c = simulate_hitting(&p, &cfg, None, 5).unwrap();
        for ((x, y), z) in a.iter().zip(&b).zip(&c) {
            assert_eq!(x.tau.to_bits(), y.tau.to_bits());
            assert_eq!(x.tau.to_bits(), z.tau.to_bits());
            assert_eq!(x.events, y.events);
            assert_eq!(x.events, z.events);
        }
    }

    #[test]
    fn sampled_means_match_exact_solver_at_small_beta() {
        let p = LatticeParams::standard(2, 2, 1.0, 0.5).unwrap();
        for beta in [0.0, 1.0, 2.0] {
            let exact = crate::oracle::exact_mean_hitting_time(&p, beta, 16).unwrap();
            let cfg = SimConfig {
                beta,
                replicas: 4000,
                seed: 31,
                max_events: 1_000_000,
                record_gate: false,
            };
            let samples = simulate_hitting(&p, &cfg, None, 2).unwrap();
            let s = summarize(&samples, false).unwrap();
            assert!(
                (s.mean - exact).abs() <= 3.0 * s.std_error,
                "beta={beta}: exact {exact}, sampled {} +- {}",
                s.mean,
                s.std_error
            );
        }
    }

    #[test]
    fn censoring_is_flagged() {
        let p = instance_a();
        let cfg = SimConfig {
            beta: 6.0,
            replicas: 5,
            seed: 1,
            max_events: 3,
            record_gate: false,
        };
        let samples = simulate_hitting(&p, &cfg, None, 1).unwrap();
        assert!(samples.iter().all(|s| s.censored));
        assert!(samples.iter().all(|s| s.events == 3));
    }

    #[test]
    fn record_gate_needs_a_gate() {
        let p = instance_a();
        let cfg = SimConfig {
            beta: 1.0,
            replicas: 1,
            seed: 0,
            max_events: 10,
            record_gate: true,
        };
        assert!(simulate_hitting(&p, &cfg, None, 1).is_err());
    }

    #[test]
    fn simulation_is_capped_at_64_vertices() {
        let p = LatticeParams::standard(3, 4, 1.0, 0.5).unwrap();
        assert!(matches!(
            ChainState::new(&p, 1.0),
            Err(crate::error::Error::SizeCap { .. })
        ));
    }

    #[test]
    fn summary_of_synthetic_exponentials() {
        let mut rng = crate::rng::Rng::from_seed_stream(77, 0);
        let n = 10_000usize;
        let samples: Vec<HittingSample> = (0..n)
            .map(|i| HittingSample {
                replica: i as u64,
                tau: rng.exponential(),
                events: 4,
                hit_gate: false,
                censored: false,
            })
            .collect();
        let s = summarize(&samples, false).unwrap();
        assert!((s.mean - 1.0).abs() < 3.0 / (n as f64).sqrt());
        assert!(s.ks_exponential < 0.02);
        assert_eq!(s.censored, 0);
    }

    #[test]
    fn summary_needs_enough_samples() {
        let samples: Vec<HittingSample> = (0..50)
            .map(|i| HittingSample {
                replica: i,
                tau: 1.0,
                events: 4,
                hit_gate: false,
                censored: false,
            })
            .collect();
        assert!(summarize(&samples, false).is_err());
    }

    #[test]
    fn ks_statistic_detects_non_exponential() {
        let uniform: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_statistic_unit_exponential(&uniform) > 0.2);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let samples = vec![HittingSample {
            replica: 0,
            tau: 1.5,
            events: 12,
            hit_gate: true,
            censored: false,
        }];
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &samples).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "replica,tau,events,hit_gate,censored");
        assert!(lines[1].starts_with("0,1.5,12,1,0"));
    }
}
