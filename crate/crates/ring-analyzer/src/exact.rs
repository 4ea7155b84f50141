//! Exact finite-`n` evaluation of the election recurrences.
//!
//! With `n` active processors each flipping with probability `p = t/n`, a
//! round produces `k` candidates with probability `b(n,k;t)`. Conditioning on
//! `k` gives lower-triangular recurrences for the expected round count, its
//! second moment, the moment generating function and the `t`-derivative. All
//! of them are solved bottom-up after moving the self-referential `k = 0` and
//! `k = n` terms to the left-hand side, which introduces the normalizer
//!
//! ```text
//! λ(n,t) = 1 / (1 − (1−t/n)^n − (t/n)^n).
//! ```
//!
//! Tables are plain `Vec<f64>` indexed by the active count and are immutable
//! once built; building is single-threaded, sharing afterwards is free.

use crate::binom;
use crate::util::NeumaierSum;
use crate::{Error, Result};

/// Denominators below this trip [`Error::Singularity`].
pub const SINGULARITY_EPS: f64 = 1e-15;

/// Candidacy parameter `t`: each active processor out of `n` participates
/// with probability `t/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidacyParam(f64);

impl CandidacyParam {
    pub fn new(t: f64) -> Result<Self> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Domain(format!(
                "candidacy parameter must be a finite nonnegative real, got {t}"
            )));
        }
        Ok(Self(t))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// One binomial weight `b(n,k;t) = C(n,k)(t/n)^k(1−t/n)^{n−k}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialWeight {
    pub n: u64,
    pub k: u64,
    pub value: f64,
}

/// The normalizer `λ(n,t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub n: u64,
    pub t: f64,
    pub value: f64,
}

/// Exact round-count moments at one `(n,t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMoments {
    pub n: u64,
    pub t: f64,
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    /// Set when the raw variance fell in `(-1e-12, 0)` and was clamped to 0.
    pub variance_clamped: bool,
}

/// Moment generating function value `E(e^{-α X(n)})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgfValue {
    pub n: u64,
    pub alpha: f64,
    pub value: f64,
}

/// Base condition for the mean-table recurrence.
///
/// `Protocol` is the plain election: `M(1) = 0` and the recurrence runs from
/// `n = 2`, which requires `t < 2` (the recursion reaches two active
/// processors, where the flip probability is `t/2`).
///
/// `FixedBase { xi }` is the convention for `t` in the segment `(ξ, ξ+1)`:
/// every active count `k ≤ ξ` would need a flip probability above 1, so the
/// round count from those states is pinned to `⌈log2 k⌉` and the recurrence
/// runs from `n = ξ+1`. With `ξ = 2` this is the `[2,3)` convention
/// `M(2,t) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseConvention {
    Protocol,
    FixedBase { xi: u32 },
}

impl BaseConvention {
    /// First index computed by the recurrence (everything below is a base value).
    pub fn first_recursive(&self) -> u64 {
        match self {
            BaseConvention::Protocol => 2,
            BaseConvention::FixedBase { xi } => *xi as u64 + 1,
        }
    }

    /// The pinned value of `M(k,t)` for base indices `k` (0 for `k ≤ 1`).
    pub fn base_value(&self, k: u64) -> f64 {
        match self {
            BaseConvention::Protocol => 0.0,
            BaseConvention::FixedBase { .. } => {
                if k >= 2 {
                    crate::util::ceil_log2(k as u32) as f64
                } else {
                    0.0
                }
            }
        }
    }
}

/// Checks `0 ≤ t/n ≤ 1` for a single evaluation level.
fn check_ratio(n: u64, t: f64) -> Result<f64> {
    let p = t / n as f64;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "flip probability t/n = {t}/{n} is outside [0,1]"
        )));
    }
    Ok(p)
}

/// `(1−t/n)^n`, `(1−t/n)^{n−1}` and `(t/n)^n` without intermediate loss.
fn corner_terms(n: u64, p: f64) -> (f64, f64, f64) {
    let nf = n as f64;
    let ln1mp = (-p).ln_1p();
    let q0 = (nf * ln1mp).exp();
    let q0m1 = ((nf - 1.0) * ln1mp).exp();
    let qn = if p == 0.0 { 0.0 } else { (nf * p.ln()).exp() };
    (q0, q0m1, qn)
}

/// Raw normalizer denominator `1 − (1−t/n)^n − (t/n)^n`.
fn normalizer_denominator(n: u64, p: f64) -> f64 {
    let nf = n as f64;
    let qn = if p == 0.0 { 0.0 } else { (nf * p.ln()).exp() };
    // 1 − e^{n ln(1−p)} via expm1 keeps relative accuracy for small t
    -(nf * (-p).ln_1p()).exp_m1() - qn
}

/// The binomial weight `b(n,k;t)`.
pub fn binomial_weight(n: u64, k: u64, t: CandidacyParam) -> Result<BinomialWeight> {
    if n == 0 || k > n {
        return Err(Error::Domain(format!(
            "candidate count k={k} outside 0..={n}"
        )));
    }
    let p = check_ratio(n, t.value())?;
    Ok(BinomialWeight {
        n,
        k,
        value: binom::pmf(n, k, p),
    })
}

/// The normalizer `λ(n,t) = 1/(1 − (1−t/n)^n − (t/n)^n)`.
pub fn normalizer(n: u64, t: CandidacyParam) -> Result<Normalizer> {
    if n < 2 {
        return Err(Error::Domain(format!("normalizer needs n ≥ 2, got {n}")));
    }
    let p = check_ratio(n, t.value())?;
    let d = normalizer_denominator(n, p);
    if d <= SINGULARITY_EPS {
        return Err(Error::Singularity(format!(
            "normalizer denominator {d:e} at n={n}, t={}",
            t.value()
        )));
    }
    Ok(Normalizer {
        n,
        t: t.value(),
        value: 1.0 / d,
    })
}

/// Bottom-up table of `M(n,t)` for `n = 0..=n_max` under the given base
/// convention. `table[n]` is the expected number of rounds from `n` active
/// processors; entries below the first recursive index hold the base values.
pub fn mean_table(t: f64, n_max: u64, base: BaseConvention) -> Result<Vec<f64>> {
    let start = base.first_recursive();
    let mut m = vec![0.0; (n_max + 1) as usize];
    for k in 2..start.min(n_max + 1) {
        m[k as usize] = base.base_value(k);
    }
    for n in start..=n_max {
        let p = check_ratio(n, t)?;
        let d = normalizer_denominator(n, p);
        if d <= SINGULARITY_EPS {
            return Err(Error::Singularity(format!(
                "normalizer denominator {d:e} at n={n}, t={t}"
            )));
        }
        let mut sum = NeumaierSum::new();
        binom::for_each_weight(n, p, n - 1, |k, w| sum.add(w * m[k as usize]));
        m[n as usize] = (1.0 + sum.total()) / d;
    }
    Ok(m)
}

/// Bottom-up table of second moments `M⁽²⁾(n,t)` built on a mean table from
/// [`mean_table`] with the `Protocol` convention.
pub fn second_moment_table(t: f64, n_max: u64, mean: &[f64]) -> Result<Vec<f64>> {
    assert!(mean.len() as u64 > n_max);
    let mut m2 = vec![0.0; (n_max + 1) as usize];
    for n in 2..=n_max {
        let p = check_ratio(n, t)?;
        let (q0, _, qn) = corner_terms(n, p);
        let d = normalizer_denominator(n, p);
        if d <= SINGULARITY_EPS {
            return Err(Error::Singularity(format!(
                "normalizer denominator {d:e} at n={n}, t={t}"
            )));
        }
        let mut s_mean = NeumaierSum::new();
        let mut s_second = NeumaierSum::new();
        binom::for_each_weight(n, p, n - 1, |k, w| {
            s_mean.add(w * mean[k as usize]);
            s_second.add(w * m2[k as usize]);
        });
        // the k = 0 and k = n branches both restart/continue with mean M(n,t)
        m2[n as usize] =
            (1.0 + 2.0 * (q0 + qn) * mean[n as usize] + 2.0 * s_mean.total() + s_second.total())
                / d;
    }
    Ok(m2)
}

/// Bottom-up table of `∂M(n,t)/∂t` under the given base convention. The base
/// values are constants in `t`, so their derivative entries are 0.
pub fn mean_derivative_table(
    t: f64,
    n_max: u64,
    mean: &[f64],
    base: BaseConvention,
) -> Result<Vec<f64>> {
    assert!(mean.len() as u64 > n_max);
    let start = base.first_recursive();
    let mut mp = vec![0.0; (n_max + 1) as usize];
    for n in start..=n_max {
        let p = check_ratio(n, t)?;
        let (_, q0m1, qn) = corner_terms(n, p);
        let d = normalizer_denominator(n, p);
        if d <= SINGULARITY_EPS {
            return Err(Error::Singularity(format!(
                "normalizer denominator {d:e} at n={n}, t={t}"
            )));
        }
        let nf = n as f64;
        // ∂b/∂t = b · (k/t − (n−k)/(n−t)); the k = n summand reduces to
        // (t/n)^{n−1} M(n,t), and d(1−t/n)^n/dt contributes −(1−t/n)^{n−1} M(n,t).
        let mut rhs = NeumaierSum::new();
        rhs.add((qn * nf / t - q0m1) * mean[n as usize]);
        binom::for_each_weight(n, p, n - 1, |k, w| {
            let kf = k as f64;
            rhs.add(w * ((kf / t - (nf - kf) / (nf - t)) * mean[k as usize] + mp[k as usize]));
        });
        mp[n as usize] = rhs.total() / d;
    }
    Ok(mp)
}

/// Expected number of rounds `M(n,t)` from `n` active processors.
pub fn mean_rounds(n: u64, t: CandidacyParam) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("active count must be ≥ 1".into()));
    }
    if n == 1 {
        return Ok(0.0);
    }
    let table = mean_table(t.value(), n, BaseConvention::Protocol)?;
    Ok(table[n as usize])
}

/// All round-count moments at `(n,t)`.
pub fn second_moment_rounds(n: u64, t: CandidacyParam) -> Result<RoundMoments> {
    if n == 0 {
        return Err(Error::Domain("active count must be ≥ 1".into()));
    }
    if n == 1 {
        return Ok(RoundMoments {
            n,
            t: t.value(),
            mean: 0.0,
            second_moment: 0.0,
            variance: 0.0,
            variance_clamped: false,
        });
    }
    let mean = mean_table(t.value(), n, BaseConvention::Protocol)?;
    let m2 = second_moment_table(t.value(), n, &mean)?;
    moments_from_tables(n, t.value(), &mean, &m2)
}

/// Assembles a [`RoundMoments`] row out of prebuilt tables.
pub fn moments_from_tables(n: u64, t: f64, mean: &[f64], m2: &[f64]) -> Result<RoundMoments> {
    let m = mean[n as usize];
    let s = m2[n as usize];
    let raw_var = s - m * m;
    let (variance, variance_clamped) = if raw_var >= 0.0 {
        (raw_var, false)
    } else if raw_var > -1e-12 {
        (0.0, true)
    } else {
        return Err(Error::Domain(format!(
            "variance {raw_var:e} at n={n}, t={t}: cancellation beyond tolerance"
        )));
    };
    Ok(RoundMoments {
        n,
        t,
        mean: m,
        second_moment: s,
        variance,
        variance_clamped,
    })
}

/// Table of `φ(n) = E(e^{-α X(n)})` for `n = 0..=n_max` at `t`.
pub fn mgf_table(alpha: f64, t: f64, n_max: u64) -> Result<Vec<f64>> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::Domain(format!("mgf needs α ≥ 0, got {alpha}")));
    }
    let mut phi = vec![0.0; (n_max + 1) as usize];
    if n_max >= 1 {
        phi[1] = 1.0;
    }
    let ea = (-alpha).exp();
    for n in 2..=n_max {
        let p = check_ratio(n, t)?;
        let (q0, q0m1, qn) = corner_terms(n, p);
        let q1 = n as f64 * p * q0m1; // b(n,1;t): elect on this round
        let denom = 1.0 - ea * (q0 + qn);
        if denom <= SINGULARITY_EPS {
            return Err(Error::Singularity(format!(
                "mgf denominator {denom:e} at n={n}, α={alpha}, t={t}"
            )));
        }
        let mut sum = NeumaierSum::new();
        binom::for_each_weight(n, p, n - 1, |k, w| sum.add(w * phi[k as usize]));
        phi[n as usize] = ea * (q1 + sum.total()) / denom;
    }
    Ok(phi)
}

/// `φ(n) = E(e^{-α X(n)})`, exactly 1 at `α = 0`.
pub fn mgf(n: u64, alpha: f64, t: CandidacyParam) -> Result<MgfValue> {
    if n == 0 {
        return Err(Error::Domain("active count must be ≥ 1".into()));
    }
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::Domain(format!("mgf needs α ≥ 0, got {alpha}")));
    }
    if alpha == 0.0 || n == 1 {
        return Ok(MgfValue {
            n,
            alpha,
            value: 1.0,
        });
    }
    let table = mgf_table(alpha, t.value(), n)?;
    Ok(MgfValue {
        n,
        alpha,
        value: table[n as usize],
    })
}

/// Residual of the original (un-normalized) recurrence at level `n`: plugging
/// the computed table back in must reproduce `M(n,t)`.
pub fn recurrence_residual(n: u64, t: f64, mean: &[f64]) -> f64 {
    let p = t / n as f64;
    let (q0, _, _) = corner_terms(n, p);
    let mut sum = NeumaierSum::new();
    sum.add(1.0);
    sum.add(q0 * mean[n as usize]);
    binom::for_each_weight(n, p, n, |k, w| sum.add(w * mean[k as usize]));
    sum.total() - mean[n as usize]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(v: f64) -> CandidacyParam {
        CandidacyParam::new(v).unwrap()
    }

    #[test]
    fn binomial_weight_examples() {
        let w = binomial_weight(3, 2, t(1.0)).unwrap();
        assert!((w.value - 2.0 / 9.0).abs() < 1e-15);
        let w = binomial_weight(2, 2, t(1.0)).unwrap();
        assert!((w.value - 0.25).abs() < 1e-16);
        let w = binomial_weight(1000, 0, t(1.0)).unwrap();
        assert!((w.value - (-1.0f64).exp()).abs() < 1e-3);
        assert!(binomial_weight(3, 4, t(1.0)).is_err());
        assert!(binomial_weight(3, 1, t(4.0)).is_err());
    }

    #[test]
    fn normalizer_examples() {
        assert!((normalizer(2, t(1.0)).unwrap().value - 2.0).abs() < 1e-15);
        assert!((normalizer(3, t(1.0)).unwrap().value - 1.5).abs() < 1e-15);
        // denominator vanishes at t = 2, n = 2 and within 1e-15 of it
        assert!(matches!(normalizer(2, t(2.0)), Err(Error::Singularity(_))));
        assert!(matches!(
            normalizer(2, t(2.0 - 1e-16)),
            Err(Error::Singularity(_))
        ));
        // t/n > 1 is a domain error, not a singularity
        assert!(matches!(normalizer(2, t(2.5)), Err(Error::Domain(_))));
    }

    #[test]
    fn normalizer_monotone_toward_limit() {
        // λ(n,t) rises to 1/(1−e^{−t}); monotone once n clears the small-n
        // wiggle (λ(2,1) = 2 already exceeds the limit, so sampling starts
        // at n = 10)
        for &tv in &[0.5f64, 1.0, 1.5] {
            let limit = 1.0 / -(-tv).exp_m1();
            let mut prev = normalizer(10, t(tv)).unwrap().value;
            for n in [20u64, 50, 100, 500, 2000, 10_000] {
                let cur = normalizer(n, t(tv)).unwrap().value;
                assert!(cur > prev, "λ({n},{tv}) = {cur} not above {prev}");
                assert!(cur < limit);
                prev = cur;
            }
            assert!((limit - prev) / limit < 1e-4);
        }
    }

    #[test]
    fn mean_closed_forms() {
        assert_eq!(mean_rounds(1, t(1.0)).unwrap(), 0.0);
        assert!((mean_rounds(2, t(1.0)).unwrap() - 2.0).abs() < 1e-12);
        assert!((mean_rounds(3, t(1.0)).unwrap() - 13.0 / 6.0).abs() < 1e-12);
        // M(2,t) = 2/(t(2−t)) and M(3,t) = (18−3t−2t²)/(3t(2−t)(3−t)) on (0,2)
        for &tv in &[0.3, 0.7, 1.0, 1.3, 1.9] {
            let table = mean_table(tv, 3, BaseConvention::Protocol).unwrap();
            let m2c = 2.0 / (tv * (2.0 - tv));
            let m3c = (18.0 - 3.0 * tv - 2.0 * tv * tv) / (3.0 * tv * (2.0 - tv) * (3.0 - tv));
            assert!((table[2] - m2c).abs() < 1e-12 * m2c, "t={tv}");
            assert!((table[3] - m3c).abs() < 1e-12 * m3c, "t={tv}");
        }
    }

    #[test]
    fn mean_monotone_and_bounded_by_e() {
        let table = mean_table(1.0, 300, BaseConvention::Protocol).unwrap();
        for n in 2..300 {
            assert!(table[n + 1] >= table[n] - 1e-13, "drop at n={n}");
            assert!(table[n] < std::f64::consts::E);
        }
    }

    #[test]
    fn recurrence_fixed_point() {
        for &tv in &[0.5, 1.0, 1.5] {
            let table = mean_table(tv, 500, BaseConvention::Protocol).unwrap();
            for &n in &[2u64, 3, 10, 47, 200, 500] {
                let r = recurrence_residual(n, tv, &table);
                assert!(r.abs() < 1e-10, "residual {r:e} at n={n}, t={tv}");
            }
        }
    }

    #[test]
    fn geometric_base_case_moments() {
        // X(2) at t = 1 is geometric(1/2); brute-force oracle for E X and E X²
        let (mut mean_oracle, mut second_oracle) = (0.0f64, 0.0f64);
        for j in 1..200u32 {
            let pj = 0.5f64.powi(j as i32);
            mean_oracle += j as f64 * pj;
            second_oracle += (j as f64) * (j as f64) * pj;
        }
        let m = second_moment_rounds(2, t(1.0)).unwrap();
        assert!((mean_oracle - 2.0).abs() < 1e-12);
        assert!((second_oracle - 6.0).abs() < 1e-12);
        assert!((m.mean - mean_oracle).abs() < 1e-12);
        assert!((m.second_moment - second_oracle).abs() < 1e-12);
        assert!((m.variance - 2.0).abs() < 1e-12);
    }

    #[test]
    fn second_moment_base_and_limit() {
        let m = second_moment_rounds(1, t(1.0)).unwrap();
        assert_eq!(m.second_moment, 0.0);
        assert_eq!(m.variance, 0.0);
        let m = second_moment_rounds(200, t(1.0)).unwrap();
        assert!((m.variance - 2.832554383).abs() < 0.05);
    }

    #[test]
    fn mgf_values() {
        assert_eq!(mgf(5, 0.0, t(1.0)).unwrap().value, 1.0);
        // geometric oracle: Σ 2^{-j} e^{-αj} = e^{-α}/(2 − e^{-α})
        for &a in &[0.1, 1.0, 3.0] {
            let mut oracle = 0.0f64;
            for j in 1..400u32 {
                oracle += 0.5f64.powi(j as i32) * (-a * j as f64).exp();
            }
            let closed = (-a).exp() / (2.0 - (-a).exp());
            let got = mgf(2, a, t(1.0)).unwrap().value;
            assert!((oracle - closed).abs() < 1e-14);
            assert!((got - closed).abs() < 1e-12, "α={a}");
        }
        // first-order expansion
        let m100 = mean_rounds(100, t(1.0)).unwrap();
        let phi = mgf(100, 1e-6, t(1.0)).unwrap().value;
        assert!((phi - (1.0 - 1e-6 * m100)).abs() < 1e-9);
        assert!(mgf(5, -0.1, t(1.0)).is_err());
    }

    #[test]
    fn mgf_nonincreasing_in_alpha() {
        let mut prev = 1.0;
        for i in 0..=20 {
            let a = i as f64 * 0.25;
            let v = mgf(7, a, t(1.0)).unwrap().value;
            assert!(v <= prev + 1e-15);
            assert!(v > 0.0 && v <= 1.0);
            prev = v;
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = 1e-5;
        let mean = mean_table(1.0, 50, BaseConvention::Protocol).unwrap();
        let mp = mean_derivative_table(1.0, 50, &mean, BaseConvention::Protocol).unwrap();
        let up = mean_table(1.0 + h, 50, BaseConvention::Protocol).unwrap();
        let dn = mean_table(1.0 - h, 50, BaseConvention::Protocol).unwrap();
        let fd = (up[50] - dn[50]) / (2.0 * h);
        assert!((mp[50] - fd).abs() < 1e-6, "analytic {} fd {fd}", mp[50]);
    }

    #[test]
    fn fixed_base_convention_tables() {
        // [2,3) convention: M(2,t) = 1, M(3,t) = (9+3t²−t³)/(3t(3−t))
        for &tv in &[2.0, 2.25, 2.5, 2.9] {
            let table = mean_table(tv, 6, BaseConvention::FixedBase { xi: 2 }).unwrap();
            assert_eq!(table[2], 1.0);
            let m3c = (9.0 + 3.0 * tv * tv - tv.powi(3)) / (3.0 * tv * (3.0 - tv));
            assert!((table[3] - m3c).abs() < 1e-12 * m3c, "t={tv}");
        }
        // (3,4) convention: M(2) = 1, M(3) = 2
        let table = mean_table(3.5, 6, BaseConvention::FixedBase { xi: 3 }).unwrap();
        assert_eq!(table[2], 1.0);
        assert_eq!(table[3], 2.0);
        assert!(table[4] > 1.0);
    }

    #[test]
    fn domain_errors_propagate() {
        // protocol recurrence reaches k = 2, so t > 2 is out of domain
        assert!(mean_rounds(10, t(2.5)).is_err());
        // and t = 2 exactly hits the λ(2,2) singularity
        assert!(matches!(
            mean_rounds(10, t(2.0)),
            Err(Error::Singularity(_))
        ));
        assert!(CandidacyParam::new(-0.5).is_err());
        assert!(CandidacyParam::new(f64::NAN).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

        #[test]
        fn prop_row_sums_to_one(n in 2u64..400, tv in 0.05f64..1.95) {
            let p = tv / n as f64;
            let mut sum = NeumaierSum::new();
            for k in 0..=n {
                sum.add(binom::pmf(n, k, p));
            }
            prop_assert!((sum.total() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn prop_mean_at_least_one(n in 2u64..200, tv in 0.05f64..1.95) {
            let m = mean_rounds(n, t(tv)).unwrap();
            prop_assert!(m.is_finite() && m >= 1.0);
        }

        #[test]
        fn prop_variance_nonnegative(n in 1u64..120, tv in 0.1f64..1.9) {
            let m = second_moment_rounds(n, t(tv)).unwrap();
            prop_assert!(m.variance >= 0.0);
        }

        #[test]
        fn prop_mgf_in_unit_interval(n in 1u64..80, a in 0.0f64..5.0) {
            let v = mgf(n, a, t(1.0)).unwrap().value;
            prop_assert!(v > 0.0 && v <= 1.0);
        }
    }
}
