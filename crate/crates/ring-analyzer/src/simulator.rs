//! Monte Carlo simulation of the election protocol.
//!
//! Each trial plays the actual protocol: with `n` active processors the
//! number of candidates is one `Binomial(n, t/n)` draw (distributionally
//! identical to `n` individual coin flips, and O(1) per round); every
//! candidate's pebble circles the full ring of `N` links, so a round with `k`
//! candidates costs exactly `k·N` pebble hops. Zero-candidate rounds count as
//! rounds and cost nothing; the final single-candidate round still circulates
//! one pebble so the ring learns the outcome.
//!
//! Reproducibility contract: trial `i` runs on a `ChaCha8` stream seeded with
//! the SplitMix64 output for index `i` under the master seed. Reports are
//! bit-identical for identical configs, independent of thread count, because
//! per-trial results are aggregated with pairwise summation in trial order.

use crate::exact::{mean_table, BaseConvention, CandidacyParam};
use crate::optimizer::SegmentKind;
use crate::util::{ceil_log2, pairwise_sum, splitmix64};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Name of the RNG scheme recorded in every report.
pub const RNG_ALGORITHM: &str = "chacha8/splitmix64-per-trial";

/// Hard cap on rounds per election (probability below 2^{-10^6} at t = 1).
pub const LIVELOCK_GUARD: u64 = 1_000_000;

/// Configuration of one simulation batch.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimConfig {
    pub ring_size: u64,
    pub t: f64,
    pub trials: u64,
    pub master_seed: u64,
    /// Histogram width (rounds beyond this go to the tail bin).
    pub j_max: usize,
    /// Required to simulate t ≥ 2; the election then stops by convention
    /// (adding ⌈log2 k⌉ rounds) once the active count falls to k ≤ ξ.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment: Option<SegmentKind>,
}

impl SimConfig {
    pub fn new(ring_size: u64, t: f64, trials: u64, master_seed: u64) -> Self {
        Self {
            ring_size,
            t,
            trials,
            master_seed,
            j_max: 40,
            segment: None,
        }
    }

    /// The convention threshold ξ: active counts at or below it cannot
    /// continue the protocol when t ≥ 2.
    fn conventional_xi(&self) -> Result<Option<u64>> {
        if self.t < 2.0 {
            return Ok(None);
        }
        match self.segment {
            None => Err(Error::Domain(format!(
                "t = {} needs a declared segment convention (symmetry cannot be broken below ⌈t⌉ active processors)",
                self.t
            ))),
            Some(SegmentKind::Open02) => Err(Error::Domain(
                "segment (0,2) cannot host t ≥ 2".into(),
            )),
            Some(SegmentKind::Int2To3) => {
                if !(2.0..3.0).contains(&self.t) {
                    return Err(Error::Domain(format!(
                        "t = {} is outside the declared segment [2,3)",
                        self.t
                    )));
                }
                Ok(Some(2))
            }
            Some(SegmentKind::GeneralXi) => {
                let xi = self.t.floor() as u64;
                if self.t == xi as f64 {
                    return Err(Error::Domain(format!(
                        "t = {} is an integer pole; segments (ξ, ξ+1) are open",
                        self.t
                    )));
                }
                Ok(Some(xi))
            }
        }
    }

    fn validate(&self) -> Result<Option<u64>> {
        if self.ring_size < 2 {
            return Err(Error::Domain("ring size must be ≥ 2".into()));
        }
        if self.trials == 0 {
            return Err(Error::Domain("trial count must be ≥ 1".into()));
        }
        CandidacyParam::new(self.t)?;
        let xi = self.conventional_xi()?;
        if let Some(xi) = xi {
            if self.ring_size <= xi {
                return Err(Error::Domain(format!(
                    "ring size {} cannot run the protocol at t = {} (needs N > {xi})",
                    self.ring_size, self.t
                )));
            }
        }
        Ok(xi)
    }
}

/// Outcome of a single election.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElectionOutcome {
    pub rounds: u64,
    pub pebble_hops: u64,
}

/// Per-round trace used by instrumented tests.
#[derive(Debug, Clone, Copy)]
pub struct RoundTrace {
    pub active: u64,
    pub candidates: u64,
    pub hops: u64,
}

/// One exact Binomial(n, p) draw by inverse-CDF walk with the PMF ratio
/// recurrence. For p = t/n the walk averages t+1 steps.
fn sample_binomial<R: Rng>(n: u64, p: f64, rng: &mut R) -> u64 {
    if p >= 1.0 {
        return n;
    }
    if p <= 0.0 {
        return 0;
    }
    let u: f64 = rng.gen();
    let nf = n as f64;
    let ratio = p / (1.0 - p);
    let mut k = 0u64;
    let mut pmf = (nf * (-p).ln_1p()).exp();
    let mut cdf = pmf;
    while u >= cdf && k < n {
        pmf *= (nf - k as f64) / (k as f64 + 1.0) * ratio;
        k += 1;
        cdf += pmf;
        if pmf == 0.0 && cdf < u {
            // numerical tail exhausted; remaining mass is indistinguishable
            break;
        }
    }
    k
}

/// Runs one election from `n_active` processors on a ring of `ring_size`
/// links, recording every round.
pub fn run_election_traced<R: Rng>(
    n_active: u64,
    ring_size: u64,
    t: f64,
    conventional_xi: Option<u64>,
    rng: &mut R,
) -> Result<(ElectionOutcome, Vec<RoundTrace>)> {
    if n_active < 2 || n_active > ring_size {
        return Err(Error::Domain(format!(
            "need 2 ≤ n_active ≤ ring_size, got {n_active} of {ring_size}"
        )));
    }
    let mut active = n_active;
    let mut rounds = 0u64;
    let mut hops = 0u64;
    let mut trace = Vec::new();
    loop {
        if let Some(xi) = conventional_xi {
            if active <= xi {
                // symmetry cannot be broken below here; charge the
                // conventional ⌈log2 k⌉ rounds and stop
                rounds += ceil_log2(active as u32) as u64;
                break;
            }
        }
        let p = t / active as f64;
        if p > 1.0 {
            return Err(Error::Domain(format!(
                "flip probability t/n = {t}/{active} exceeded 1 mid-election"
            )));
        }
        let k = sample_binomial(active, p, rng);
        rounds += 1;
        let round_hops = k * ring_size;
        hops += round_hops;
        trace.push(RoundTrace {
            active,
            candidates: k,
            hops: round_hops,
        });
        match k {
            0 => {} // everyone retries
            1 => break,
            _ => active = k,
        }
        if rounds >= LIVELOCK_GUARD {
            return Err(Error::Livelock { rounds });
        }
    }
    Ok((
        ElectionOutcome {
            rounds,
            pebble_hops: hops,
        },
        trace,
    ))
}

/// Runs one election without tracing.
pub fn run_election<R: Rng>(
    n_active: u64,
    ring_size: u64,
    t: f64,
    conventional_xi: Option<u64>,
    rng: &mut R,
) -> Result<ElectionOutcome> {
    run_election_traced(n_active, ring_size, t, conventional_xi, rng).map(|(o, _)| o)
}

/// Debug-fidelity variant: flips one coin per active processor instead of a
/// single binomial draw. Distributionally identical, O(n) per round.
pub fn run_election_per_processor<R: Rng>(
    n_active: u64,
    ring_size: u64,
    t: f64,
    rng: &mut R,
) -> Result<ElectionOutcome> {
    if n_active < 2 || n_active > ring_size {
        return Err(Error::Domain(format!(
            "need 2 ≤ n_active ≤ ring_size, got {n_active} of {ring_size}"
        )));
    }
    let mut active = n_active;
    let mut rounds = 0u64;
    let mut hops = 0u64;
    loop {
        let p = t / active as f64;
        if p > 1.0 {
            return Err(Error::Domain(format!(
                "flip probability t/n = {t}/{active} exceeded 1 mid-election"
            )));
        }
        let mut k = 0u64;
        for _ in 0..active {
            if rng.gen::<f64>() < p {
                k += 1;
            }
        }
        rounds += 1;
        hops += k * ring_size;
        match k {
            0 => {}
            1 => break,
            _ => active = k,
        }
        if rounds >= LIVELOCK_GUARD {
            return Err(Error::Livelock { rounds });
        }
    }
    Ok(ElectionOutcome {
        rounds,
        pebble_hops: hops,
    })
}

/// Monte Carlo estimates with their analytic counterparts.
#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub rng_algorithm: &'static str,
    pub trials_run: u64,
    pub mean_rounds: f64,
    pub stderr_rounds: f64,
    /// Fraction of trials with exactly `j` rounds, `j = 1..=j_max`.
    pub round_histogram: Vec<f64>,
    /// Fraction of trials beyond `j_max` rounds.
    pub histogram_tail_mass: f64,
    /// Mean round count contributed by tail trials (so that
    /// `Σ j·hist[j] + tail_mean_contribution = mean_rounds`).
    pub tail_mean_contribution: f64,
    pub mean_bits: f64,
    pub stderr_bits: f64,
    /// Mean of the per-trial gap `bits/N − rounds`; ≈ 0 at t = 1, where each
    /// round costs `N` bits on average.
    pub bits_per_link_gap: f64,
    /// Standard error of that gap.
    pub stderr_bits_per_link_gap: f64,
    /// Exact `M(N,t)` from the recurrence engine.
    pub analytic_mean: f64,
    /// `(mean_rounds − analytic_mean) / stderr_rounds`.
    pub z_score: f64,
}

/// Per-trial RNG for `trial` under `master_seed`.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(master_seed, trial))
}

/// Runs `config.trials` independent elections and aggregates deterministically.
pub fn simulate(config: &SimConfig) -> Result<SimReport> {
    let xi = config.validate()?;
    let n = config.ring_size;
    let results: Vec<Result<ElectionOutcome>> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(config.master_seed, i);
            run_election(n, n, config.t, xi, &mut rng)
        })
        .collect();
    // guard trips drop their trials and yield a partial report; anything
    // else aborts the batch
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(Error::Livelock { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if outcomes.is_empty() {
        return Err(Error::Livelock {
            rounds: LIVELOCK_GUARD,
        });
    }

    let trials = outcomes.len() as f64;
    let rounds: Vec<f64> = outcomes.iter().map(|o| o.rounds as f64).collect();
    let bits: Vec<f64> = outcomes.iter().map(|o| o.pebble_hops as f64).collect();
    let mean_rounds = pairwise_sum(&rounds) / trials;
    let mean_bits = pairwise_sum(&bits) / trials;
    let var_of = |xs: &[f64], mean: f64| {
        let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        pairwise_sum(&sq) / (trials - 1.0).max(1.0)
    };
    let stderr_rounds = (var_of(&rounds, mean_rounds) / trials).sqrt();
    let stderr_bits = (var_of(&bits, mean_bits) / trials).sqrt();
    let gaps: Vec<f64> = outcomes
        .iter()
        .map(|o| o.pebble_hops as f64 / n as f64 - o.rounds as f64)
        .collect();
    let bits_per_link_gap = pairwise_sum(&gaps) / trials;
    let stderr_bits_per_link_gap = (var_of(&gaps, bits_per_link_gap) / trials).sqrt();

    let mut hist = vec![0u64; config.j_max];
    let mut tail_count = 0u64;
    let mut tail_rounds = 0u64;
    for o in &outcomes {
        if (o.rounds as usize) <= config.j_max && o.rounds >= 1 {
            hist[(o.rounds - 1) as usize] += 1;
        } else {
            tail_count += 1;
            tail_rounds += o.rounds;
        }
    }

    let base = match xi {
        None => BaseConvention::Protocol,
        Some(x) => BaseConvention::FixedBase { xi: x as u32 },
    };
    let analytic_mean = mean_table(config.t, n, base)?[n as usize];
    let z_score = if stderr_rounds > 0.0 {
        (mean_rounds - analytic_mean) / stderr_rounds
    } else {
        0.0
    };

    Ok(SimReport {
        config: *config,
        rng_algorithm: RNG_ALGORITHM,
        trials_run: outcomes.len() as u64,
        mean_rounds,
        stderr_rounds,
        round_histogram: hist.iter().map(|&c| c as f64 / trials).collect(),
        histogram_tail_mass: tail_count as f64 / trials,
        tail_mean_contribution: tail_rounds as f64 / trials,
        mean_bits,
        stderr_bits,
        bits_per_link_gap,
        stderr_bits_per_link_gap,
        analytic_mean,
        z_score,
    })
}

/// Empirical counterpart of the `M(∞,t)` curve: one simulation per grid
/// point with common random numbers (trial `i` reuses the same seed at every
/// `t`) to stabilize comparisons along the grid.
pub fn empirical_t_curve(
    ring_size: u64,
    t_grid: &[f64],
    trials: u64,
    master_seed: u64,
) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !(0.0 < t && t < 2.0) {
            return Err(Error::Domain(format!(
                "empirical curve needs t in (0,2), got {t}"
            )));
        }
        let report = simulate(&SimConfig {
            ring_size,
            t,
            trials,
            master_seed,
            j_max: 1,
            segment: None,
        })?;
        out.push((t, report.mean_rounds, report.stderr_rounds));
    }
    Ok(out)
}

/// Pearson chi-square statistic of observed counts against expected
/// probabilities (callers append the tail bin).
pub fn chi_square_statistic(observed: &[u64], expected_probs: &[f64], trials: u64) -> f64 {
    assert_eq!(observed.len(), expected_probs.len());
    observed
        .iter()
        .zip(expected_probs)
        .map(|(&o, &p)| {
            let e = p * trials as f64;
            let d = o as f64 - e;
            d * d / e
        })
        .sum()
}
