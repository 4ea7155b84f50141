//! The limit functional `M(∞,t)` in the candidacy parameter.
//!
//! On `(0,2)` the limit of the mean round count solves
//!
//! ```text
//! M(∞,t) (1 − e^{−t}) = 1 + Σ_{k≥2} e^{−t} t^k / k! · M(k,t),
//! ```
//!
//! and differentiating once in `t` gives the matching linear equation for
//! `M′(∞,t)`. The function is strictly convex and positive on `(0,2)` with a
//! unique minimum `t*`; the nonnegative integers other than 1 are poles.
//! Beyond `t = 2` the protocol cannot break symmetry once the active count
//! falls to `k ≤ ⌊t⌋`, so each segment `(ξ, ξ+1)` carries the convention
//! `M(k,t) = ⌈log2 k⌉` for `k ≤ ξ` (in particular `M(2,t) = 1` on `[2,3)`),
//! and the functional is increasing there with a pole at `ξ+1`.

use crate::exact::{mean_derivative_table, mean_table, BaseConvention};
use crate::util::NeumaierSum;
use crate::{binom, Error, Result};
use rayon::prelude::*;
use serde::Serialize;

/// Open-endpoint guard: evaluations within this margin of a pole are rejected
/// rather than returning huge values.
pub const ENDPOINT_MARGIN: f64 = 1e-6;

/// Which `t`-segment an evaluation lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SegmentKind {
    /// `(0,2)`, the protocol proper; no convention needed.
    Open02,
    /// `[2,3)` with the convention `M(2,t) = 1` (closed at 2).
    Int2To3,
    /// `(ξ, ξ+1)` for `ξ ≥ 3` with `M(k,t) = ⌈log2 k⌉` for `k ≤ ξ`.
    GeneralXi,
}

/// A `t`-segment with its base convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpec {
    pub lo: f64,
    pub hi: f64,
    pub kind: SegmentKind,
    /// Only set for `GeneralXi`.
    pub xi: Option<u32>,
    /// Value pinned to `M(⌈lo⌉, t)` on the segment (none on `Open02`).
    pub base_convention: Option<f64>,
}

impl SegmentSpec {
    pub fn open02() -> Self {
        Self {
            lo: 0.0,
            hi: 2.0,
            kind: SegmentKind::Open02,
            xi: None,
            base_convention: None,
        }
    }

    pub fn int2to3() -> Self {
        Self {
            lo: 2.0,
            hi: 3.0,
            kind: SegmentKind::Int2To3,
            xi: None,
            base_convention: Some(1.0),
        }
    }

    /// The segment `(ξ, ξ+1)` for `ξ ≥ 3`.
    pub fn general(xi: u32) -> Result<Self> {
        if xi < 3 {
            return Err(Error::Domain(format!(
                "general segment needs ξ ≥ 3, got {xi}"
            )));
        }
        Ok(Self {
            lo: xi as f64,
            hi: xi as f64 + 1.0,
            kind: SegmentKind::GeneralXi,
            xi: Some(xi),
            base_convention: Some(crate::util::ceil_log2(xi) as f64),
        })
    }

    /// The base convention handed to the exact engine.
    fn engine_base(&self) -> BaseConvention {
        match self.kind {
            SegmentKind::Open02 => BaseConvention::Protocol,
            SegmentKind::Int2To3 => BaseConvention::FixedBase { xi: 2 },
            SegmentKind::GeneralXi => BaseConvention::FixedBase {
                xi: self.xi.expect("general segment carries ξ"),
            },
        }
    }

    /// Checks `t` is inside the segment respecting open/closed ends and the
    /// pole guard margin.
    pub fn check(&self, t: f64) -> Result<()> {
        let lo_ok = match self.kind {
            SegmentKind::Int2To3 => t >= self.lo,
            _ => t > self.lo + ENDPOINT_MARGIN,
        };
        let hi_ok = t < self.hi - ENDPOINT_MARGIN;
        if !t.is_finite() || !lo_ok || !hi_ok {
            return Err(Error::Singularity(format!(
                "t = {t} is outside (or on the guarded edge of) the segment [{}, {})",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Truncation policy: the Poisson weights peak near `k = t`, so the cutoff
/// grows with the segment.
pub fn default_nu(t: f64) -> u64 {
    30u64.max(t.ceil() as u64 + 25)
}

fn check_nu(t: f64, nu: u64) -> Result<()> {
    let need = 3u64.max(t.ceil() as u64 + 1);
    if nu < need {
        return Err(Error::Domain(format!(
            "truncation ν = {nu} too small at t = {t}; need at least {need}"
        )));
    }
    Ok(())
}

/// `M(∞,t)` on the given segment, truncating the Poisson sum at `ν`.
pub fn limit_mean_t(t: f64, nu: u64, segment: &SegmentSpec) -> Result<f64> {
    segment.check(t)?;
    check_nu(t, nu)?;
    let mean = mean_table(t, nu, segment.engine_base())?;
    let w = binom::poisson_weights(t, nu);
    let mut acc = NeumaierSum::new();
    acc.add(1.0);
    for (i, k) in (2..=nu).enumerate() {
        acc.add(w[i] * mean[k as usize]);
    }
    Ok(acc.total() / -(-t).exp_m1())
}

/// `M′(∞,t)` on the given segment, from the differentiated limit equation
/// with the exact finite-`n` derivative tables.
pub fn limit_mean_derivative_t(t: f64, nu: u64, segment: &SegmentSpec) -> Result<f64> {
    segment.check(t)?;
    check_nu(t, nu)?;
    let base = segment.engine_base();
    let mean = mean_table(t, nu, base)?;
    let deriv = mean_derivative_table(t, nu, &mean, base)?;
    let w = binom::poisson_weights(t, nu);
    let m_inf = {
        let mut acc = NeumaierSum::new();
        acc.add(1.0);
        for (i, k) in (2..=nu).enumerate() {
            acc.add(w[i] * mean[k as usize]);
        }
        acc.total() / -(-t).exp_m1()
    };
    let mut acc = NeumaierSum::new();
    acc.add(1.0 - m_inf);
    for (i, k) in (2..=nu).enumerate() {
        // e^{−t} t^{k−1}/(k−1)! = pois(t,k)·k/t, conventional bases included;
        // their derivative entries are zero.
        acc.add(w[i] * (k as f64 / t * mean[k as usize] + deriv[k as usize]));
    }
    Ok(acc.total() / -(-t).exp_m1())
}

/// Located minimum of `M(∞,t)` on `(0,2)`.
#[derive(Debug, Clone, Copy)]
pub struct Extremum {
    pub t_star: f64,
    pub m_star: f64,
}

/// Finds the unique root of `M′(∞,t)` on `(0,2)` by bisection on `[0.5, 1.5]`
/// after verifying there is exactly one sign change on a 0.01 grid.
pub fn find_t_star(tolerance: f64) -> Result<Extremum> {
    if tolerance < 1e-10 {
        return Err(Error::Domain(format!(
            "tolerance {tolerance:e} below the supported 1e-10"
        )));
    }
    let seg = SegmentSpec::open02();
    let nu = default_nu(2.0);
    // full-grid sign scan: strict convexity means exactly one − → + change
    let mut changes = 0u32;
    let mut prev_sign = None;
    let mut grid_t = 0.01f64;
    while grid_t < 1.995 {
        let d = limit_mean_derivative_t(grid_t, nu, &seg)?;
        let sign = d > 0.0;
        if let Some(p) = prev_sign {
            if p != sign {
                changes += 1;
            }
        }
        prev_sign = Some(sign);
        grid_t += 0.01;
    }
    if changes != 1 {
        return Err(Error::Bracket(format!(
            "expected exactly one sign change of M'(∞,t) on (0,2), found {changes}"
        )));
    }
    let (mut lo, mut hi) = (0.5f64, 1.5f64);
    let f_lo = limit_mean_derivative_t(lo, nu, &seg)?;
    let f_hi = limit_mean_derivative_t(hi, nu, &seg)?;
    if f_lo >= 0.0 || f_hi <= 0.0 {
        return Err(Error::Bracket(format!(
            "no sign change on [0.5, 1.5]: M'({lo}) = {f_lo}, M'({hi}) = {f_hi}"
        )));
    }
    for _ in 0..60 {
        if hi - lo <= tolerance {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if limit_mean_derivative_t(mid, nu, &seg)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_star = 0.5 * (lo + hi);
    Ok(Extremum {
        t_star,
        m_star: limit_mean_t(t_star, nu, &seg)?,
    })
}

/// The three explicit `[2,3)` bound formulas evaluated at `t`.
///
/// * `upper  = 2e^t/(t(t+2)) + t/(t+2)`, valid near `t = 2`, where the
///   finite means still increase in `n`;
/// * `lower  = (1 + t²e^{−t}/2 + M(3,t) e^{−t}(e^t − t²/2 − t − 1)) / (1−e^{−t})`
///   with `M(3,t) = (9+3t²−t³)/(3t(3−t))`, same caveat;
/// * `dprime_lower = 2e^t/(t(t+2)) − 2e^t(2e^t+t²)/(t²(t+2)²)
///                   + 2(e^t−t−1)(9+3t²−t³)/(3t(t+2)(3−t))`,
///   the quantity whose sampled minimum over `[2,3)` is `2.26605840…` (at
///   `t = 2`).
///
/// The sandwich `lower ≤ M(∞,t) ≤ upper` is only faithful close to `t = 2`;
/// the monotonicity of the finite means in `n` that the bound derivations
/// rely on stops holding past `t ≈ 2.1`, and the derivative bound exceeds the
/// true `M′(∞,t)` on the left half of the segment (`M′(∞,2) ≈ 0.70`).
pub fn segment_bounds_2_3(t: f64) -> Result<(f64, f64, f64)> {
    if !(2.0..3.0).contains(&t) {
        return Err(Error::Domain(format!(
            "segment bounds are defined on [2,3), got t = {t}"
        )));
    }
    let et = t.exp();
    let emt = (-t).exp();
    let m3 = (9.0 + 3.0 * t * t - t.powi(3)) / (3.0 * t * (3.0 - t));
    let upper = 2.0 * et / (t * (t + 2.0)) + t / (t + 2.0);
    let lower =
        (1.0 + 0.5 * t * t * emt + m3 * emt * (et - 0.5 * t * t - t - 1.0)) / -(-t).exp_m1();
    let dprime_lower = 2.0 * et / (t * (t + 2.0))
        - 2.0 * et * (2.0 * et + t * t) / (t * t * (t + 2.0) * (t + 2.0))
        + 2.0 * (et - t - 1.0) * (9.0 + 3.0 * t * t - t.powi(3))
            / (3.0 * t * (t + 2.0) * (3.0 - t));
    Ok((upper, lower, dprime_lower))
}

/// One sampled point of a scan.
#[derive(Debug, Clone, Copy)]
pub struct ScanSample {
    pub t: f64,
    pub m_inf_t: f64,
    pub m_prime_t: f64,
}

/// A sampled curve over one segment.
#[derive(Debug, Clone)]
pub struct ParamScan {
    pub segment: SegmentSpec,
    pub samples: Vec<ScanSample>,
    /// Grid points that failed to evaluate, with the error.
    pub gaps: Vec<(f64, Error)>,
    /// Minimum on `(0,2)` only.
    pub extremum: Option<Extremum>,
    /// On `(0,2)`: all second central differences positive. Elsewhere:
    /// samples strictly increasing.
    pub convexity_ok: bool,
}

/// Samples `M(∞,t)` and `M′(∞,t)` on a uniform grid strictly inside the
/// segment.
pub fn scan_segment(segment: &SegmentSpec, step: f64, nu: u64) -> Result<ParamScan> {
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::Domain(format!("scan step must be > 0, got {step}")));
    }
    let start = if segment.kind == SegmentKind::Int2To3 {
        segment.lo
    } else {
        segment.lo + step
    };
    let mut grid = Vec::new();
    let mut t = start;
    while t < segment.hi - ENDPOINT_MARGIN {
        grid.push(t);
        t += step;
    }
    // grid points are independent given the (per-t) tables; evaluate in
    // parallel and keep grid order
    let evaluated: Vec<(f64, Result<(f64, f64)>)> = grid
        .par_iter()
        .map(|&t| {
            let r = limit_mean_t(t, nu, segment)
                .and_then(|m| limit_mean_derivative_t(t, nu, segment).map(|mp| (m, mp)));
            (t, r)
        })
        .collect();
    let mut samples = Vec::new();
    let mut gaps = Vec::new();
    for (t, r) in evaluated {
        match r {
            Ok((m, mp)) => samples.push(ScanSample {
                t,
                m_inf_t: m,
                m_prime_t: mp,
            }),
            Err(e) => gaps.push((t, e)),
        }
    }
    let convexity_ok = match segment.kind {
        SegmentKind::Open02 => samples
            .windows(3)
            .all(|w| w[0].m_inf_t - 2.0 * w[1].m_inf_t + w[2].m_inf_t > 0.0),
        _ => samples.windows(2).all(|w| w[1].m_inf_t > w[0].m_inf_t),
    };
    let extremum = if segment.kind == SegmentKind::Open02 {
        Some(find_t_star(1e-8)?)
    } else {
        None
    };
    Ok(ParamScan {
        segment: *segment,
        samples,
        gaps,
        extremum,
        convexity_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{normalizer, CandidacyParam};

    #[test]
    fn reduces_to_limit_mean_at_t1() {
        let seg = SegmentSpec::open02();
        let via_t = limit_mean_t(1.0, 30, &seg).unwrap();
        assert!((via_t - crate::asymptotics::limit_mean(30)).abs() < 1e-13);
        assert!((via_t - 2.441715879).abs() < 1e-9);
    }

    #[test]
    fn derivative_negative_at_t1_zero_at_tstar() {
        let seg = SegmentSpec::open02();
        assert!(limit_mean_derivative_t(1.0, 30, &seg).unwrap() < 0.0);
        let ext = find_t_star(1e-8).unwrap();
        let d = limit_mean_derivative_t(ext.t_star, default_nu(2.0), &seg).unwrap();
        assert!(d.abs() < 1e-7, "M'(t*) = {d:e}");
    }

    #[test]
    fn t_star_published_values() {
        let ext = find_t_star(1e-8).unwrap();
        assert!(
            (ext.t_star - 1.0654388051).abs() < 1e-6,
            "t* = {}",
            ext.t_star
        );
        assert!(
            (ext.m_star - 2.4348109638).abs() < 1e-8,
            "M(∞,t*) = {:.12}",
            ext.m_star
        );
        let m1 = limit_mean_t(1.0, 30, &SegmentSpec::open02()).unwrap();
        let gain = (m1 - ext.m_star) / m1;
        assert!((gain - 0.0028278945).abs() < 1e-4, "gain = {gain}");
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let seg = SegmentSpec::open02();
        let h = 1e-5;
        for &t in &[0.3, 0.8, 1.065, 1.7] {
            let nu = default_nu(t);
            let an = limit_mean_derivative_t(t, nu, &seg).unwrap();
            let fd = (limit_mean_t(t + h, nu, &seg).unwrap()
                - limit_mean_t(t - h, nu, &seg).unwrap())
                / (2.0 * h);
            assert!((an - fd).abs() <= 1e-5, "t={t}: analytic {an} fd {fd}");
        }
    }

    #[test]
    fn endpoint_guards() {
        let seg = SegmentSpec::open02();
        assert!(matches!(
            limit_mean_t(2.0, 30, &seg),
            Err(Error::Singularity(_))
        ));
        assert!(matches!(
            limit_mean_t(1e-7, 30, &seg),
            Err(Error::Singularity(_))
        ));
        assert!(matches!(
            limit_mean_t(2.0 - 1e-7, 30, &seg),
            Err(Error::Singularity(_))
        ));
        // divergence toward the (guarded) endpoints
        assert!(limit_mean_t(2.0 - 1e-5, 30, &seg).unwrap() > 1e3);
        assert!(limit_mean_t(1e-5, 35, &seg).unwrap() > 1e3);
    }

    #[test]
    fn int2to3_value_bracket() {
        let seg = SegmentSpec::int2to3();
        let m2 = limit_mean_t(2.0, default_nu(2.0), &seg).unwrap();
        assert!((2.2797..=2.34726).contains(&m2), "M(∞,2) = {m2}");
        let (upper, lower, dlow) = segment_bounds_2_3(2.0).unwrap();
        // the three formulas reproduce the published constants at t = 2
        let e2 = 2.0f64.exp();
        assert!((upper - (2.0 * e2 / 8.0 + 0.5)).abs() < 1e-14);
        assert!((upper - 2.34726402).abs() < 1e-8);
        assert!((lower - 2.2797333578).abs() < 1e-9);
        assert!((dlow - 2.2660584091).abs() < 1e-9);
        assert!(lower <= m2 && m2 <= upper);
    }

    #[test]
    fn int2to3_sandwich_near_two() {
        // the bound derivations rely on monotonicity in n, which holds near 2
        let seg = SegmentSpec::int2to3();
        for &t in &[2.0, 2.05, 2.1] {
            let m = limit_mean_t(t, default_nu(t), &seg).unwrap();
            let (upper, lower, _) = segment_bounds_2_3(t).unwrap();
            assert!(
                lower <= m + 1e-12 && m <= upper + 1e-12,
                "t={t}: {lower} {m} {upper}"
            );
        }
    }

    #[test]
    fn int2to3_derivative_examples() {
        let seg = SegmentSpec::int2to3();
        // true derivative clears the threshold from mid-segment on
        let d25 = limit_mean_derivative_t(2.5, default_nu(2.5), &seg).unwrap();
        assert!(d25 > 2.26605840, "M'(∞,2.5) = {d25}");
        // near t = 2 the functional rises much more slowly
        let d20 = limit_mean_derivative_t(2.0, default_nu(2.0), &seg).unwrap();
        assert!(d20 > 0.0 && d20 < 1.0, "M'(∞,2) = {d20}");
        // the bound formula stays positive late in the segment
        let (_, _, dlow) = segment_bounds_2_3(2.9).unwrap();
        assert!(dlow > 0.0);
    }

    #[test]
    fn int2to3_derivative_matches_fd() {
        let seg = SegmentSpec::int2to3();
        let h = 1e-5;
        for &t in &[2.05, 2.5, 2.9] {
            let nu = default_nu(t);
            let an = limit_mean_derivative_t(t, nu, &seg).unwrap();
            let fd = (limit_mean_t(t + h, nu, &seg).unwrap()
                - limit_mean_t(t - h, nu, &seg).unwrap())
                / (2.0 * h);
            assert!((an - fd).abs() <= 1e-4 * an.abs().max(1.0), "t={t}");
        }
    }

    #[test]
    fn scan_open02_convex_with_minimum() {
        let scan = scan_segment(&SegmentSpec::open02(), 0.05, 30).unwrap();
        assert!(scan.convexity_ok);
        assert!(scan.gaps.is_empty());
        let ext = scan.extremum.unwrap();
        assert!((ext.t_star - 1.065).abs() < 1e-3);
        // endpoint samples exceed the minimum
        let at = |t: f64| {
            scan.samples
                .iter()
                .find(|s| (s.t - t).abs() < 1e-9)
                .unwrap()
                .m_inf_t
        };
        assert!(at(0.5) > ext.m_star && at(1.9) > ext.m_star);
    }

    #[test]
    fn scan_3_4_increasing_without_minimum() {
        let seg = SegmentSpec::general(3).unwrap();
        let scan = scan_segment(&seg, 0.05, default_nu(4.0)).unwrap();
        assert!(scan.convexity_ok, "samples not strictly increasing");
        assert!(scan.extremum.is_none());
        assert!(scan.samples.windows(2).all(|w| w[1].m_inf_t > w[0].m_inf_t));
    }

    #[test]
    fn monotone_in_n_up_to_limit() {
        for &t in &[0.5, 1.0, 1.5] {
            let table = mean_table(t, 201, BaseConvention::Protocol).unwrap();
            for n in 2..=200usize {
                assert!(table[n] <= table[n + 1] + 1e-13);
            }
            let m_inf = limit_mean_t(t, default_nu(t), &SegmentSpec::open02()).unwrap();
            assert!(table[201] <= m_inf);
        }
    }

    #[test]
    fn lambda_sandwich() {
        // e^{−t}(1 − t²/n) ≤ (1−t/n)^n ≤ e^{−t} translated to λ, with the
        // (t/n)^n corner kept on both sides
        for &t in &[0.5, 1.0, 1.5, 2.5] {
            for &n in &[5u64, 50, 500] {
                let lam = normalizer(n, CandidacyParam::new(t).unwrap())
                    .unwrap()
                    .value;
                let nf = n as f64;
                let qn = (t / nf).powi(n as i32);
                let lower = 1.0 / (1.0 - (-t).exp() * (1.0 - t * t / nf) - qn);
                let upper = 1.0 / (1.0 - (-t).exp() - qn);
                assert!(
                    lower <= lam && lam <= upper,
                    "t={t} n={n}: {lower} {lam} {upper}"
                );
            }
        }
    }

    #[test]
    fn nu_and_segment_validation() {
        assert!(SegmentSpec::general(2).is_err());
        let seg = SegmentSpec::int2to3();
        assert!(limit_mean_t(2.5, 3, &seg).is_err()); // ν too small
        assert!(segment_bounds_2_3(1.9).is_err());
        assert!(segment_bounds_2_3(3.0).is_err());
        assert!(find_t_star(1e-12).is_err());
    }
}
