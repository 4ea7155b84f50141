//! The `n → ∞` constants of the election and their error bounds.
//!
//! Taking the limit in the round recurrences turns the binomial weights into
//! Poisson weights `e^{-1}/k!`, which gives closed expressions for the limit
//! mean, second moment, variance and MGF in terms of the finite tables from
//! [`crate::exact`]. Truncating the weighted sums at `ν` terms costs at most
//! `(1/(1−e⁻¹)) Σ_{k>ν} 1/k!` on the mean, which is reported alongside every
//! result.
//!
//! The module also carries an elementary upper-bound sequence `B(n)` on the
//! finite means (fixed point `e`), the constants `c₀…c₈` describing how
//! `Δ(n) = e − B(n)` decays, and a saddle-point diagnostic for the binomial
//! right tail used only to sanity-check truncation points.

use crate::exact::{mean_table, mgf_table, second_moment_table, BaseConvention};
use crate::util::NeumaierSum;
use crate::{binom, Error, Result};
use std::f64::consts::E;

/// Default truncation for the Poisson-weighted limit sums. Fifteen terms
/// already reach 1e-12; thirty leaves the tail bound far below double
/// precision roundoff.
pub const DEFAULT_NU: u64 = 30;

/// All limit constants with their truncation bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct LimitReport {
    /// Limit mean number of rounds `M(∞)`.
    pub m_inf: f64,
    /// Limit second moment `M⁽²⁾(∞)`.
    pub m2_inf: f64,
    /// Limit variance.
    pub var_inf: f64,
    /// `S₁ = Σ_{k≥2} e⁻¹/k! · M(k)`.
    pub s1: f64,
    /// `S₂ = Σ_{k≥2} e⁻¹/k! · M⁽²⁾(k)`.
    pub s2: f64,
    /// Coefficient of `1/n` in the expansion of `M(n)`.
    pub c1: f64,
    /// Coefficient of `1/n²`, obtained by least-squares fit.
    pub c2: f64,
    /// Truncation point of the weighted sums.
    pub truncation_nu: u64,
    /// `(1/(1−e⁻¹)) Σ_{k>ν} 1/k!`, the worst-case truncation error on the mean.
    pub tail_bound: f64,
}

/// One row of the bound sequence `B(n)` and its decomposition.
#[derive(Debug, Clone, Copy)]
pub struct BoundSequence {
    pub n: u64,
    /// Upper bound on `M(n)`.
    pub b_n: f64,
    /// `Δ(n) = e − B(n)`.
    pub delta_n: f64,
    /// Contraction factor in `Δ(n) = a(n)Δ(n−1) + b(n)/n` (0 at n ≤ 2).
    pub a_n: f64,
    /// Forcing coefficient `b(n)` of the same recurrence (0 at n = 1).
    pub bcoef_n: f64,
}

/// The closed-form constants `c₀…c₈` in `e` governing the decay of `Δ(n)`.
#[derive(Debug, Clone, Copy)]
pub struct AsymConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
}

impl AsymConstants {
    pub fn new() -> Self {
        let em1 = E - 1.0;
        let c0 = (E - 2.0) / em1;
        let c1 = 0.5 * E / em1;
        let c2 = -0.5 * (E - 2.0) / (em1 * em1);
        let c3 = E * (7.0 * E - 13.0) / (24.0 * em1 * em1);
        let c4 = (-7.0 * E * E + 25.0 * E - 24.0) / (24.0 * em1 * em1);
        let c6 = 1.0 / (1.0 - c0);
        let c5 = c1 * c2 * c6 + c3;
        let c7 = c0 / ((1.0 - c0) * (1.0 - c0));
        let c8 = c1 * c7 + c5 * c6;
        Self {
            c0,
            c1,
            c2,
            c3,
            c4,
            c5,
            c6,
            c7,
            c8,
        }
    }
}

impl Default for AsymConstants {
    fn default() -> Self {
        Self::new()
    }
}

/// `Σ_{k>ν} 1/k!`, summed until the terms vanish in double precision.
fn factorial_tail(nu: u64) -> f64 {
    let mut term = 1.0f64;
    for k in 1..=nu {
        term /= k as f64;
    }
    let mut sum = NeumaierSum::new();
    let mut k = nu + 1;
    loop {
        term /= k as f64;
        if term == 0.0 {
            break;
        }
        let before = sum.total();
        sum.add(term);
        if sum.total() == before {
            break;
        }
        k += 1;
    }
    sum.total()
}

/// Worst-case truncation error of the limit mean at cutoff `ν`.
pub fn tail_bound(nu: u64) -> f64 {
    factorial_tail(nu) / (1.0 - (-1.0f64).exp())
}

/// `Σ_{k>ν} k^w / k!` for small integer powers `w`, used to bound truncation
/// of sums whose summands carry polynomial weights.
pub fn weighted_factorial_tail(nu: u64, power: u32) -> f64 {
    let mut term = 1.0f64;
    for k in 1..=nu {
        term /= k as f64;
    }
    let mut sum = NeumaierSum::new();
    let mut k = nu + 1;
    loop {
        term /= k as f64;
        let weighted = term * (k as f64).powi(power as i32);
        if weighted == 0.0 {
            break;
        }
        let before = sum.total();
        sum.add(weighted);
        if sum.total() == before {
            break;
        }
        k += 1;
    }
    sum.total()
}

/// Poisson weights `e⁻¹/k!` for `k = 2..=nu`.
fn limit_weights(nu: u64) -> Vec<f64> {
    binom::poisson_weights(1.0, nu)
}

/// `S₁(ν)` from a prebuilt mean table at `t = 1`.
fn s1_from_table(nu: u64, mean: &[f64]) -> f64 {
    let w = limit_weights(nu);
    let mut s = NeumaierSum::new();
    for (i, k) in (2..=nu).enumerate() {
        s.add(w[i] * mean[k as usize]);
    }
    s.total()
}

/// Limit mean `M(∞) = (1 + S₁)/(1 − e⁻¹)` truncated at `ν`.
pub fn limit_mean(nu: u64) -> f64 {
    let mean = mean_table(1.0, nu, BaseConvention::Protocol).expect("t = 1 is regular");
    (1.0 + s1_from_table(nu, &mean)) / (1.0 - (-1.0f64).exp())
}

/// Limit second moment `M⁽²⁾(∞) = (−1 + 2M(∞) + S₂)/(1 − e⁻¹)` truncated at `ν`.
pub fn limit_second_moment(nu: u64) -> f64 {
    LimitReport::compute(nu).m2_inf
}

/// Limit MGF `φ(∞)(α) = e^{−α}/(1 − e^{−(α+1)}) (e⁻¹ + Σ_{k≥2} e⁻¹/k! φ(k))`.
pub fn limit_mgf(alpha: f64, nu: u64) -> Result<f64> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::Domain(format!("limit mgf needs α ≥ 0, got {alpha}")));
    }
    let phi = mgf_table(alpha, 1.0, nu)?;
    let w = limit_weights(nu);
    let mut s = NeumaierSum::new();
    s.add((-1.0f64).exp());
    for (i, k) in (2..=nu).enumerate() {
        s.add(w[i] * phi[k as usize]);
    }
    Ok((-alpha).exp() / (1.0 - (-(alpha + 1.0)).exp()) * s.total())
}

/// The `1/n` correction coefficient of `M(n)`, from its closed form
/// `C₁ = −e⁻²/(1−e⁻¹)² + Σ_{k≥3} e⁻¹((1−e⁻¹)k(3−k) − 1)/(2(1−e⁻¹)² k!) · M(k)`.
pub fn correction_c1(nu: u64) -> f64 {
    assert!(nu >= 3, "c1 needs ν ≥ 3");
    let e1 = (-1.0f64).exp();
    let em = 1.0 - e1;
    let mean = mean_table(1.0, nu, BaseConvention::Protocol).expect("t = 1 is regular");
    let w = limit_weights(nu);
    let mut sum = NeumaierSum::new();
    sum.add(-e1 * e1 / (em * em));
    for (i, k) in (2..=nu).enumerate() {
        if k < 3 {
            continue;
        }
        let kf = k as f64;
        sum.add(w[i] * (em * kf * (3.0 - kf) - 1.0) / (2.0 * em * em) * mean[k as usize]);
    }
    sum.total()
}

/// Result of the `C₂` least-squares fit.
#[derive(Debug, Clone, Copy)]
pub struct C2Fit {
    pub value: f64,
    /// max − min of the fitted quantity over the window.
    pub spread: f64,
    /// spread / |value|.
    pub rel_spread: f64,
    /// Set when the relative spread exceeds 5% (but stayed under the 10%
    /// error threshold): the window is too small for the fit to be clean.
    pub flagged: bool,
}

/// Fits `n²(M(n) − M(∞) − C₁/n)` to a constant over `n ∈ [n_lo, n_hi]`.
pub fn correction_c2_fit(n_lo: u64, n_hi: u64) -> Result<C2Fit> {
    if n_lo <= 2 || n_hi <= n_lo || n_hi > 10_000 {
        return Err(Error::Domain(format!(
            "c2 fit window must satisfy 2 < n_lo < n_hi ≤ 10^4, got [{n_lo}, {n_hi}]"
        )));
    }
    let mean = mean_table(1.0, n_hi, BaseConvention::Protocol)?;
    let m_inf = limit_mean(DEFAULT_NU);
    let c1 = correction_c1(DEFAULT_NU);
    let mut acc = NeumaierSum::new();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for n in n_lo..=n_hi {
        let nf = n as f64;
        let g = nf * nf * (mean[n as usize] - m_inf - c1 / nf);
        acc.add(g);
        lo = lo.min(g);
        hi = hi.max(g);
    }
    let value = acc.total() / (n_hi - n_lo + 1) as f64;
    let spread = hi - lo;
    let rel_spread = spread / value.abs();
    if rel_spread > 0.10 {
        return Err(Error::Fit(format!(
            "residual spread {spread:e} exceeds 10% of fitted value {value:e}"
        )));
    }
    Ok(C2Fit {
        value,
        spread,
        rel_spread,
        flagged: rel_spread > 0.05,
    })
}

impl LimitReport {
    /// Computes the whole limit panel at truncation `ν` (the `C₂` fit uses
    /// the `n ∈ [250, 300]` window).
    pub fn compute(nu: u64) -> Self {
        let e1 = (-1.0f64).exp();
        let em = 1.0 - e1;
        let mean = mean_table(1.0, nu, BaseConvention::Protocol).expect("t = 1 is regular");
        let m2 = second_moment_table(1.0, nu, &mean).expect("t = 1 is regular");
        let w = limit_weights(nu);
        let (mut s1acc, mut s2acc) = (NeumaierSum::new(), NeumaierSum::new());
        for (i, k) in (2..=nu).enumerate() {
            s1acc.add(w[i] * mean[k as usize]);
            s2acc.add(w[i] * m2[k as usize]);
        }
        let (s1, s2) = (s1acc.total(), s2acc.total());
        let m_inf = (1.0 + s1) / em;
        let m2_inf = (-1.0 + 2.0 * m_inf + s2) / em;
        let var_inf = (e1 + em * s2 - s1 * s1) / (em * em);
        let c1 = correction_c1(nu.max(3));
        let c2 = correction_c2_fit(250, 300)
            .map(|f| f.value)
            .unwrap_or(f64::NAN);
        Self {
            m_inf,
            m2_inf,
            var_inf,
            s1,
            s2,
            c1,
            c2,
            truncation_nu: nu,
            tail_bound: tail_bound(nu),
        }
    }
}

/// Iterates the bound recurrence `B(n) = B(n−1) + (1 − B(n−1)(1−1/n)^{n−1}) /
/// (1 − (1−1/n)^n − (1/n)^n)` from `B(1) = 0`, together with `Δ(n) = e − B(n)`
/// and the decomposition coefficients `a(n)`, `b(n)`.
pub fn bound_sequence(n_max: u64) -> Vec<BoundSequence> {
    let mut out = Vec::with_capacity(n_max as usize);
    let mut b_prev = 0.0f64;
    out.push(BoundSequence {
        n: 1,
        b_n: 0.0,
        delta_n: E,
        a_n: 0.0,
        bcoef_n: 0.0,
    });
    for n in 2..=n_max {
        let nf = n as f64;
        let ln1m = (-1.0 / nf).ln_1p();
        let t_n = (nf * ln1m).exp();
        let t_nm1 = ((nf - 1.0) * ln1m).exp();
        let d = 1.0 - t_n - (-nf * nf.ln()).exp();
        let b_n = b_prev + (1.0 - b_prev * t_nm1) / d;
        out.push(BoundSequence {
            n,
            b_n,
            delta_n: E - b_n,
            a_n: 1.0 - t_nm1 / d,
            bcoef_n: nf * (E * t_nm1 - 1.0) / d,
        });
        b_prev = b_n;
    }
    out
}

/// Saddle-point estimate of the right binomial tail `Σ_{k≥r} b(n,k)` at
/// `p = 1/n`. A truncation diagnostic only; never feeds results.
pub fn laplace_tail(n: u64, r: u64) -> Result<f64> {
    if r < 2 || r > n {
        return Err(Error::Domain(format!(
            "laplace tail needs 2 ≤ r ≤ n, got r={r}, n={n}"
        )));
    }
    Ok(binom::saddle_point_tail(r))
}
