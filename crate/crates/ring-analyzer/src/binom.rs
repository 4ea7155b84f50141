//! Numerically stable binomial probabilities.
//!
//! `b(n,k) = C(n,k) p^k (1-p)^{n-k}` evaluated the way R's `dbinom` does it:
//! Stirling's approximation with an explicit error term (`stirlerr`) plus the
//! saddle-point deviance `bd0`, so every probability is produced with relative
//! error of a few ulps regardless of `n`. Naive `lgamma` differences lose
//! ~`n·eps` absolute accuracy in the log and cannot hold the 1e-12 row-sum
//! budget at `n = 10^4`, let alone `n = 10^6`.
//!
//! Everything here works on the log scale internally with one final
//! exponentiation; values whose log falls below roughly -745 underflow to 0.

#![allow(clippy::excessive_precision)] // reference table digits kept verbatim

use std::f64::consts::PI;

const LN_2PI: f64 = 1.837877066409345483560659472811;

/// stirlerr(n) = ln(n!) - ln( sqrt(2πn) (n/e)^n ), exact table for n ≤ 15.
const SFERR: [f64; 16] = [
    0.0, // n = 0, never used
    0.0810614667953272582196702,
    0.0413406959554092940938221,
    0.02767792568499833914878929,
    0.02079067210376509311152277,
    0.01664469118982119216319487,
    0.01387612882307074799874573,
    0.01189670994589177009505572,
    0.010411265261972096497478567,
    0.009255462182712732917728637,
    0.008330563433362871256469318,
    0.007573675487951840794972024,
    0.006942840107209529865664152,
    0.006408994188004207068439631,
    0.005951370112758847735624416,
    0.005554733551962801371038690,
];

// Coefficients 1/12, 1/360, 1/1260, 1/1680, 1/1188 of the asymptotic series.
const S0: f64 = 1.0 / 12.0;
const S1: f64 = 1.0 / 360.0;
const S2: f64 = 1.0 / 1260.0;
const S3: f64 = 1.0 / 1680.0;
const S4: f64 = 1.0 / 1188.0;
const S5: f64 = 691.0 / 360360.0;
const S6: f64 = 1.0 / 156.0;

/// Stirling series error term for integer arguments.
fn stirlerr(n: f64) -> f64 {
    debug_assert!(n >= 1.0 && n == n.trunc());
    if n <= 15.0 {
        return SFERR[n as usize];
    }
    let nn = n * n;
    if n <= 23.5 {
        return (S0 - (S1 - (S2 - (S3 - (S4 - (S5 - S6 / nn) / nn) / nn) / nn) / nn) / nn) / n;
    }
    if n > 15.7e6 {
        return S0 / n;
    }
    if n > 6180.0 {
        return (S0 - S1 / nn) / n;
    }
    if n > 205.0 {
        return (S0 - (S1 - S2 / nn) / nn) / n;
    }
    if n > 86.0 {
        return (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n;
    }
    if n > 27.0 {
        return (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n;
    }
    (S0 - (S1 - (S2 - (S3 - (S4 - S5 / nn) / nn) / nn) / nn) / nn) / n
}

/// Binomial deviance term bd0(x, np) = x·ln(x/np) + np − x, computed without
/// cancellation when x ≈ np.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let d = x - np;
        let mut v = d / (x + np);
        let mut s = 0.5 * d * v;
        let mut ej = x * v;
        v *= v;
        let mut j = 1u32;
        loop {
            ej *= v;
            let s_prev = s;
            s += ej / (2 * j + 1) as f64;
            if s == s_prev {
                return 2.0 * s;
            }
            j += 1;
        }
    }
    if x > np {
        x * ((x / np).ln() - 1.0) + np
    } else {
        x * (x / np).ln() + np - x
    }
}

/// (1 + x)^y without the precision loss of forming 1 + x first.
fn pow1p(x: f64, y: f64) -> f64 {
    if x.abs() > 0.5 {
        (1.0 + x).powf(y)
    } else {
        (y * x.ln_1p()).exp()
    }
}

/// ln of the binomial PMF `C(n,k) p^k (1-p)^{n-k}` for integer `0 ≤ k ≤ n`.
pub fn ln_pmf(n: u64, k: u64, p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    debug_assert!(k <= n);
    let q = 1.0 - p;
    let (nf, kf) = (n as f64, k as f64);
    if p == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    if k == 0 {
        return if p > q {
            nf * q.ln()
        } else {
            nf * (-p).ln_1p()
        };
    }
    if k == n {
        return if p > q {
            nf * (-q).ln_1p()
        } else {
            nf * p.ln()
        };
    }
    let lc =
        stirlerr(nf) - stirlerr(kf) - stirlerr(nf - kf) - bd0(kf, nf * p) - bd0(nf - kf, nf * q);
    let lf = LN_2PI + kf.ln() + (-kf / nf).ln_1p();
    lc - 0.5 * lf
}

/// Binomial PMF `C(n,k) p^k (1-p)^{n-k}` for integer `0 ≤ k ≤ n`.
pub fn pmf(n: u64, k: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    if k == 0 {
        let nf = n as f64;
        return if p > q { q.powf(nf) } else { pow1p(-p, nf) };
    }
    if k == n {
        let nf = n as f64;
        return if p > q { pow1p(-q, nf) } else { p.powf(nf) };
    }
    ln_pmf(n, k, p).exp()
}

/// Visits `k = 2, 3, …, k_hi` with the weight `b(n,k; p)`, skipping the tail
/// once the weights are past the mode and have underflowed to zero.
///
/// All recurrences in this crate take weighted sums of lower-index table
/// entries with these weights; for the parameters of interest (`p = t/n`,
/// `t ≤ 4`) the weights die off like a Poisson tail, so the effective window
/// is a couple hundred terms even when `n` is 10^6.
pub fn for_each_weight<F: FnMut(u64, f64)>(n: u64, p: f64, k_hi: u64, mut visit: F) {
    let mode = (n as f64 + 1.0) * p;
    for k in 2..=k_hi {
        let w = pmf(n, k, p);
        if w == 0.0 && k as f64 > mode {
            break;
        }
        if w > 0.0 {
            visit(k, w);
        }
    }
}

/// Poisson weights `e^{-t} t^k / k!` for `k = 2, …, k_hi`, by the stable
/// iterative product.
pub fn poisson_weights(t: f64, k_hi: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity((k_hi.saturating_sub(1)) as usize);
    let mut w = (-t).exp() * t * t / 2.0;
    for k in 2..=k_hi {
        out.push(w);
        w *= t / (k + 1) as f64;
    }
    out
}

/// Saddle-point estimate of the right binomial tail Σ_{k≥r} b(n,k) at p = 1/n:
/// `e^{-1} e^r / (sqrt(2π) r^{r+1/2} (1 − 1/r))`.
pub fn saddle_point_tail(r: u64) -> f64 {
    let rf = r as f64;
    (-1.0f64).exp() * rf.exp() / ((2.0 * PI).sqrt() * rf.powf(rf + 0.5) * (1.0 - 1.0 / rf))
}
