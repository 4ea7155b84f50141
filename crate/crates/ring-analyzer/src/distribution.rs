//! Exact and limiting distributions of the round count.
//!
//! `P(n,j)` is the probability that an election starting from `n` active
//! processors takes exactly `j` rounds. Conditioning on the first round gives
//! a forward recurrence in `j` over the whole triangle of active counts
//! `k ≤ n`, with `P(n,1) = b(n,1;t)`. The `n → ∞` column limit `P(∞,j)`
//! follows with Poisson weights, and the generating functions of the columns
//! share a simple pole at `z = 2` whose residues `R(k)` produce the geometric
//! tail law `P(∞,j) ≈ (2ρ/(1−2e⁻¹)) 2^{-j}`.

use crate::binom;
use crate::exact::SINGULARITY_EPS;
use crate::util::NeumaierSum;
use crate::{Error, Result};

/// Entries smaller than this are reported as exact zeros and folded into the
/// tail mass.
const PROB_FLOOR: f64 = 1e-300;

/// A round-count distribution table for one ring size (or the limit).
#[derive(Debug, Clone)]
pub struct RoundDistribution {
    /// Active count, or `None` for the `n → ∞` table.
    pub n: Option<u64>,
    pub j_max: usize,
    /// `probs[j-1] = P(n, j)` for `j = 1..=j_max`.
    pub probs: Vec<f64>,
    /// Mass beyond `j_max` (exactly `1 − Σ probs` for finite `n`).
    pub tail_mass: f64,
}

impl RoundDistribution {
    /// `P(n, j)`, 1-based in `j`.
    pub fn prob(&self, j: usize) -> f64 {
        self.probs[j - 1]
    }
}

/// The geometric tail law of `P(∞,j)`.
#[derive(Debug, Clone, Copy)]
pub struct TailLaw {
    /// `ρ = Σ_{k≥2} e⁻¹/k! · R(k)`.
    pub rho: f64,
    /// `2ρ/(1 − 2e⁻¹)`.
    pub coefficient: f64,
    /// Ratio of the geometric law (1/2).
    pub base: f64,
}

/// Full triangle `P(k,j)` for `2 ≤ k ≤ n`, `1 ≤ j ≤ j_max` at parameter `t`.
/// Row-major in `k`; this is the shared building block for both the exact
/// and the limiting tables.
fn distribution_triangle(n: u64, j_max: usize, t: f64) -> Result<Vec<Vec<f64>>> {
    if n < 2 || j_max < 1 {
        return Err(Error::Domain(format!(
            "distribution needs n ≥ 2 and j_max ≥ 1, got n={n}, j_max={j_max}"
        )));
    }
    if t / 2.0 > 1.0 {
        // the triangle always contains the k = 2 row
        return Err(Error::Domain(format!(
            "flip probability t/k exceeds 1 at k = 2 for t = {t}"
        )));
    }
    let rows = (n - 1) as usize;
    let mut table = vec![vec![0.0f64; j_max]; rows];
    for k in 2..=n {
        let p = t / k as f64;
        table[(k - 2) as usize][0] = k as f64 * p * ((k as f64 - 1.0) * (-p).ln_1p()).exp();
    }
    for j in 1..j_max {
        for k in 2..=n {
            let kf = k as f64;
            let p = t / kf;
            let q0 = (kf * (-p).ln_1p()).exp();
            let mut acc = NeumaierSum::new();
            acc.add(q0 * table[(k - 2) as usize][j - 1]);
            binom::for_each_weight(k, p, k, |l, w| {
                acc.add(w * table[(l - 2) as usize][j - 1]);
            });
            let v = acc.total();
            table[(k - 2) as usize][j] = if v < PROB_FLOOR { 0.0 } else { v };
        }
    }
    Ok(table)
}

/// Exact distribution of the round count from `n` active processors.
pub fn exact_distribution(n: u64, j_max: usize, t: f64) -> Result<RoundDistribution> {
    let triangle = distribution_triangle(n, j_max, t)?;
    let probs = triangle[(n - 2) as usize].clone();
    let mut mass = NeumaierSum::new();
    for &p in &probs {
        mass.add(p);
    }
    Ok(RoundDistribution {
        n: Some(n),
        j_max,
        probs,
        tail_mass: 1.0 - mass.total(),
    })
}

/// Limiting distribution `P(∞,j)`: `P(∞,1) = e⁻¹` and
/// `P(∞,j) = e⁻¹ P(∞,j−1) + Σ_{k=2}^{ν} e⁻¹/k! P(k,j−1)` with exact `P(k,·)`
/// columns at `t = 1`.
pub fn limit_distribution(j_max: usize, nu: u64) -> RoundDistribution {
    assert!(j_max >= 1 && nu >= 2);
    let e1 = (-1.0f64).exp();
    let triangle =
        distribution_triangle(nu, j_max.saturating_sub(1).max(1), 1.0).expect("t = 1 is regular");
    let w = binom::poisson_weights(1.0, nu);
    let mut probs = vec![0.0f64; j_max];
    probs[0] = e1;
    for j in 2..=j_max {
        let mut acc = NeumaierSum::new();
        acc.add(e1 * probs[j - 2]);
        for (i, k) in (2..=nu).enumerate() {
            acc.add(w[i] * triangle[(k - 2) as usize][j - 2]);
        }
        probs[j - 1] = acc.total();
    }
    let mut mass = NeumaierSum::new();
    for &p in &probs {
        mass.add(p);
    }
    RoundDistribution {
        n: None,
        j_max,
        probs,
        tail_mass: 1.0 - mass.total(),
    }
}

/// Residues `R(k)` of the column generating functions at their common pole
/// `z = 2`: `R(2) = 1` and
/// `R(k)(1 − 2(1−1/k)^k − 2(1/k)^k) = 2 Σ_{ℓ=2}^{k−1} b(k,ℓ) R(ℓ)`.
///
/// Returned as a table indexed by `k` (entries 0 and 1 unused).
pub fn residues(k_max: u64) -> Result<Vec<f64>> {
    if k_max < 2 {
        return Err(Error::Domain(format!(
            "residues need k_max ≥ 2, got {k_max}"
        )));
    }
    let mut r = vec![0.0f64; (k_max + 1) as usize];
    r[2] = 1.0;
    for k in 3..=k_max {
        let kf = k as f64;
        let p = 1.0 / kf;
        let d = 1.0 - 2.0 * (kf * (-p).ln_1p()).exp() - 2.0 * (-kf * kf.ln()).exp();
        if d <= SINGULARITY_EPS {
            return Err(Error::Singularity(format!(
                "residue denominator {d:e} at k={k}"
            )));
        }
        let mut acc = NeumaierSum::new();
        binom::for_each_weight(k, p, k - 1, |l, w| acc.add(w * r[l as usize]));
        r[k as usize] = 2.0 * acc.total() / d;
    }
    Ok(r)
}

/// The tail law `P(∞,j) ≈ coefficient · 2^{-j}` with
/// `coefficient = 2ρ/(1 − 2e⁻¹)`.
pub fn tail_law(k_max: u64) -> Result<TailLaw> {
    let r = residues(k_max)?;
    let w = binom::poisson_weights(1.0, k_max);
    let mut acc = NeumaierSum::new();
    for (i, k) in (2..=k_max).enumerate() {
        acc.add(w[i] * r[k as usize]);
    }
    let rho = acc.total();
    let e1 = (-1.0f64).exp();
    Ok(TailLaw {
        rho,
        coefficient: 2.0 * rho / (1.0 - 2.0 * e1),
        base: 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Closed form for the n = 3 column at t = 1, solved by hand from the
    /// two-term linear recurrence: P(3,j) = (4/3)2^{-j} − (2/3)3^{-j}.
    fn p3_closed(j: u32) -> f64 {
        (4.0 / 3.0) * 0.5f64.powi(j as i32) - (2.0 / 3.0) * (1.0f64 / 3.0).powi(j as i32)
    }

    #[test]
    fn first_round_probability() {
        let d = exact_distribution(3, 1, 1.0).unwrap();
        assert!((d.prob(1) - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn two_processors_geometric() {
        let d = exact_distribution(2, 10, 1.0).unwrap();
        for j in 1..=10usize {
            assert!(
                (d.prob(j) - 0.5f64.powi(j as i32)).abs() < 1e-14,
                "P(2,{j}) = {}",
                d.prob(j)
            );
        }
    }

    #[test]
    fn three_processors_closed_form() {
        let d = exact_distribution(3, 30, 1.0).unwrap();
        for j in 1..=30usize {
            let c = p3_closed(j as u32);
            assert!((d.prob(j) - c).abs() < 1e-13 * c.max(1e-12), "j={j}");
        }
    }

    #[test]
    fn mass_conservation() {
        for &(n, t) in &[(2u64, 1.0), (3, 0.5), (10, 1.5), (100, 1.0), (100, 0.5)] {
            let d = exact_distribution(n, 40, t).unwrap();
            let total: f64 = d.probs.iter().sum::<f64>() + d.tail_mass;
            assert!((total - 1.0).abs() < 1e-10, "n={n} t={t}");
            assert!(d.probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn limit_table_mass_grows_to_one() {
        let mut prev_tail = 1.0;
        for &j_max in &[5usize, 15, 30, 60] {
            let d = limit_distribution(j_max, 30);
            let mass: f64 = d.probs.iter().sum();
            assert!(mass <= 1.0 + 1e-12, "mass {mass} at j_max={j_max}");
            assert!(d.tail_mass < prev_tail);
            prev_tail = d.tail_mass;
        }
        assert!(prev_tail < 1e-15);
    }

    #[test]
    fn large_n_close_to_limit_values() {
        let d = exact_distribution(10_000, 13, 1.0).unwrap();
        let published = [
            0.3678794411,
            0.2625161028,
            0.1634224110,
            0.0946536614,
            0.0524658088,
            0.0282518527,
            0.0149122813,
            0.0077602315,
            0.0039970064,
            0.0020432067,
            0.0010386252,
            0.0005257697,
            0.0002653262,
        ];
        for (j, &pv) in published.iter().enumerate() {
            assert!(
                (d.prob(j + 1) - pv).abs() < 1e-3,
                "j={} got {}",
                j + 1,
                d.prob(j + 1)
            );
        }
    }

    #[test]
    fn limit_distribution_published_values() {
        let d = limit_distribution(13, 30);
        let published = [
            0.3678794411,
            0.2625161028,
            0.1634224110,
            0.0946536614,
            0.0524658088,
            0.0282518527,
            0.0149122813,
            0.0077602315,
            0.0039970064,
            0.0020432067,
            0.0010386252,
            0.0005257697,
            0.0002653262,
        ];
        for (j, &pv) in published.iter().enumerate() {
            assert!(
                (d.prob(j + 1) - pv).abs() < 1e-9,
                "j={} got {:.12}",
                j + 1,
                d.prob(j + 1)
            );
        }
    }

    #[test]
    fn column_convergence_monotone_in_error() {
        let dinf = limit_distribution(13, 30);
        let mut prev_err = f64::INFINITY;
        for &n in &[100u64, 1000, 10_000] {
            let d = exact_distribution(n, 13, 1.0).unwrap();
            let err = (1..=13)
                .map(|j| (d.prob(j) - dinf.prob(j)).abs())
                .fold(0.0f64, f64::max);
            assert!(err < prev_err, "error not shrinking at n={n}");
            prev_err = err;
        }
    }

    #[test]
    fn moment_identities_at_limit() {
        let d = limit_distribution(60, 30);
        let mut m = NeumaierSum::new();
        let mut m2 = NeumaierSum::new();
        for j in 1..=60usize {
            m.add(j as f64 * d.prob(j));
            m2.add((j * j) as f64 * d.prob(j));
        }
        assert!((m.total() - crate::asymptotics::limit_mean(30)).abs() < 1e-8);
        assert!((m2.total() - crate::asymptotics::limit_second_moment(30)).abs() < 1e-7);
    }

    #[test]
    fn residues_hand_values() {
        let r = residues(20).unwrap();
        assert_eq!(r[2], 1.0);
        // R(3) solves R(3)/3 = 2 b(3,2) R(2) with b(3,2) = 2/9
        assert!((r[3] - 4.0 / 3.0).abs() < 1e-12);
        assert!(r[2..].iter().all(|&x| x > 0.0));
    }

    #[test]
    fn residue_matches_long_j_column() {
        // P(3,j) 2^j → R(3): the closed form gives 4/3 − (2/3)(2/3)^j
        let d = exact_distribution(3, 40, 1.0).unwrap();
        let r3 = d.prob(40) * 2.0f64.powi(40);
        assert!((r3 - 4.0 / 3.0).abs() < 1e-6, "got {r3}");
    }

    #[test]
    fn tail_law_published_values() {
        let law = tail_law(15).unwrap();
        assert!((law.rho - 0.2950911517).abs() < 1e-9, "rho {}", law.rho);
        assert!(
            (law.coefficient - 2.233499118).abs() < 1e-8,
            "coef {}",
            law.coefficient
        );
        let e1 = (-1.0f64).exp();
        assert!((law.coefficient - 2.0 * law.rho / (1.0 - 2.0 * e1)).abs() < 1e-12);
        assert!(law.rho > 0.0 && law.rho < 1.0);
    }

    #[test]
    fn geometric_tail_regime() {
        let d = limit_distribution(31, 30);
        let law = tail_law(15).unwrap();
        let ratio = d.prob(25) / (law.coefficient * 0.5f64.powi(25));
        assert!((ratio - 1.0).abs() < 1e-3, "ratio {ratio}");
        // log₂ increments approach −1
        let slope = d.prob(30).log2() - d.prob(29).log2();
        assert!((slope + 1.0).abs() < 1e-3, "slope {slope}");
    }

    #[test]
    fn domain_checks() {
        assert!(exact_distribution(1, 5, 1.0).is_err());
        assert!(exact_distribution(5, 0, 1.0).is_err());
        assert!(exact_distribution(5, 5, 2.5).is_err());
        assert!(residues(1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

        #[test]
        fn prop_mass_conserved(n in 2u64..300, tv in 0.1f64..1.9, j_max in 1usize..40) {
            let d = exact_distribution(n, j_max, tv).unwrap();
            let total: f64 = d.probs.iter().sum::<f64>() + d.tail_mass;
            prop_assert!((total - 1.0).abs() < 1e-10);
            prop_assert!(d.probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }
}
