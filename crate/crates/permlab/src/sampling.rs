//! Random permutations from measures and Gibbs models over permutations.
//!
//! A measure `mu` on the unit square with continuous marginals induces a
//! *mu-random permutation* of size `n`: draw `n` independent points and read
//! off the permutation given by their x/y ranks. The Gibbs model tilts this
//! law by a pattern density,
//!
//! ```text
//!     dQ / dmu^(n)  =  exp( n * theta * t_sigma  -  n * F_n ),
//! ```
//!
//! so permutations rich (theta > 0) or poor (theta < 0) in the pattern
//! `sigma` are favoured, with `F_n` the normalizing free energy. This module
//! provides exact enumeration of the model for small `n` over the uniform
//! measure, Metropolis MCMC for everything else, and a direct Monte-Carlo
//! estimator of `F_n`. All randomness is seed-deterministic.

use crate::error::{Error, Result};
use crate::measures::Permuton;
use crate::patterns::{
    h_sigma, induced_permutation, t_sigma_perm, McEstimate, Pattern, Permutation, Point,
    PointConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Retry budget per point before point sampling reports exhaustion
/// (collisions of continuous coordinates are measure-zero; this only guards
/// against degenerate inputs).
const COLLISION_RETRIES: usize = 64;

/// Parameters of the Gibbs permutation model.
#[derive(Debug, Clone)]
pub struct GibbsParams {
    pub sigma: Pattern,
    pub mu: Permuton,
    pub theta: f64,
    pub n: usize,
}

impl GibbsParams {
    pub fn new(sigma: Pattern, mu: Permuton, theta: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput("model size n must be at least 2".into()));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite theta {theta}")));
        }
        Ok(GibbsParams { sigma, mu, theta, n })
    }
}

/// MCMC proposal kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    /// Resample one point of the underlying configuration from `mu`
    /// (valid for every base measure).
    PointResample,
    /// Swap the values at two adjacent positions (valid only for the
    /// uniform base measure, whose induced permutation is uniform).
    AdjacentTransposition,
}

/// Chain length, burn-in, thinning, and seed of one MCMC run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub steps: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
    pub proposal: Proposal,
}

impl ChainConfig {
    pub fn new(steps: u64, burn_in: u64, thinning: u64, seed: u64, proposal: Proposal) -> Result<Self> {
        if burn_in > steps {
            return Err(Error::InvalidInput(format!(
                "burn-in {burn_in} exceeds total steps {steps}"
            )));
        }
        if thinning == 0 {
            return Err(Error::InvalidInput("thinning must be at least 1".into()));
        }
        Ok(ChainConfig { steps, burn_in, thinning, seed, proposal })
    }

    /// Default schedule for emitting `n_samples` states from a size-`n`
    /// model: burn-in `100 n`, thinning `n`.
    pub fn for_samples(n: usize, n_samples: u64, seed: u64, proposal: Proposal) -> Self {
        let burn_in = 100 * n as u64;
        let thinning = n as u64;
        ChainConfig {
            steps: burn_in + n_samples * thinning,
            burn_in,
            thinning,
            seed,
            proposal,
        }
    }
}

/// Counters of one MCMC run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GibbsStats {
    pub proposed: u64,
    pub accepted: u64,
    pub samples_emitted: u64,
}

impl GibbsStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Collected output of [`gibbs_mcmc`].
#[derive(Debug, Clone)]
pub struct GibbsRun {
    pub samples: Vec<Permutation>,
    pub stats: GibbsStats,
}

/// Exact probability table of the Gibbs model over the uniform measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PmfTable {
    pub sigma: Pattern,
    pub theta: f64,
    pub n: usize,
    /// All permutations of size `n` in lexicographic order.
    pub perms: Vec<Permutation>,
    /// Model probabilities, summing to 1.
    pub probs: Vec<f64>,
    /// `log sum_tau exp(n * theta * t_sigma(tau))` over all of `S_n`.
    pub log_sum: f64,
}

impl PmfTable {
    /// Free energy per site: `(1/n) log E_uniform[exp(n theta t_sigma)]`.
    pub fn free_energy(&self) -> f64 {
        (self.log_sum - ln_factorial(self.n)) / self.n as f64
    }

    /// Probability of one permutation (linear scan; tables are small).
    pub fn prob_of(&self, pi: &Permutation) -> Option<f64> {
        self.perms
            .iter()
            .position(|p| p == pi)
            .map(|i| self.probs[i])
    }

    /// Model expectation of the pattern density `t_sigma`.
    pub fn mean_t_sigma(&self) -> f64 {
        self.perms
            .iter()
            .zip(&self.probs)
            .map(|(p, q)| q * t_sigma_perm(&self.sigma, p))
            .sum()
    }
}

/// `ln(n!)`.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Draw `n` independent points from `mu`, redrawing any point whose x- or
/// y-coordinate exactly collides with an earlier one.
pub fn sample_points<R: Rng>(mu: &Permuton, n: usize, rng: &mut R) -> Result<PointConfig> {
    let mut pts: Vec<Point> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut ok = false;
        for _ in 0..COLLISION_RETRIES {
            let p = mu.draw_point(rng);
            if pts.iter().all(|q| q.0 != p.0 && q.1 != p.1) {
                pts.push(p);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::SamplingExhausted);
        }
    }
    PointConfig::new(pts)
}

/// One mu-random permutation of size `n`.
pub fn sample_mu_random_perm<R: Rng>(mu: &Permuton, n: usize, rng: &mut R) -> Result<Permutation> {
    Ok(sample_points(mu, n, rng)?.induced())
}

/// Number of `k`-subsets containing the point at `idx` that induce `sigma`
/// (`O(n^(k-1))` subset enumeration; the `k = 2` case reduces to comparing
/// against every other point).
fn occ_with_point(sigma: &Pattern, pts: &[Point], idx: usize) -> u64 {
    let k = sigma.k();
    let n = pts.len();
    debug_assert!((2..=4).contains(&k));
    if k == 2 {
        let sig_inv = sigma.is_21();
        let p = pts[idx];
        return pts
            .iter()
            .enumerate()
            .filter(|&(j, q)| {
                j != idx && {
                    let lo = if q.0 < p.0 { *q } else { p };
                    let hi = if q.0 < p.0 { p } else { *q };
                    if sig_inv {
                        lo.1 > hi.1
                    } else {
                        lo.1 < hi.1
                    }
                }
            })
            .count() as u64;
    }
    let mut count = 0u64;
    let mut buf = [(0.0f64, 0.0f64); 4];
    buf[0] = pts[idx];
    let others: Vec<usize> = (0..n).filter(|&j| j != idx).collect();
    let m = others.len();
    match k {
        3 => {
            for a in 0..m {
                buf[1] = pts[others[a]];
                for b in a + 1..m {
                    buf[2] = pts[others[b]];
                    if h_sigma(sigma, &buf[..3]) == 1.0 {
                        count += 1;
                    }
                }
            }
        }
        4 => {
            for a in 0..m {
                buf[1] = pts[others[a]];
                for b in a + 1..m {
                    buf[2] = pts[others[b]];
                    for c in b + 1..m {
                        buf[3] = pts[others[c]];
                        if h_sigma(sigma, &buf) == 1.0 {
                            count += 1;
                        }
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    count
}

/// Occurrences among position subsets containing both `j` and `j + 1`
/// (all other occurrence counts are invariant under swapping the values at
/// those positions).
fn occ_with_pair(sigma: &Pattern, vals: &[usize], j: usize) -> u64 {
    let k = sigma.k();
    let n = vals.len();
    debug_assert!(k >= 2);
    if k == 2 {
        let inverted = vals[j] > vals[j + 1];
        return u64::from(inverted == sigma.is_21());
    }
    // choose k - 2 further positions, keep position order, compare patterns
    let sig = sigma.values();
    let mut count = 0u64;
    let mut positions = [0usize; 4];
    let others: Vec<usize> = (0..n).filter(|&p| p != j && p != j + 1).collect();
    let mut check = |ps: &[usize]| {
        // ps sorted by position; compare value ranks against sigma
        let kk = ps.len();
        let matches = (0..kk).all(|a| {
            (a + 1..kk).all(|b| (vals[ps[a]] < vals[ps[b]]) == (sig[a] < sig[b]))
        });
        if matches {
            count += 1;
        }
    };
    match k {
        3 => {
            for &o in &others {
                let mut ps = [j, j + 1, o];
                ps.sort_unstable();
                check(&ps);
            }
        }
        4 => {
            for a in 0..others.len() {
                for b in a + 1..others.len() {
                    positions[..4].copy_from_slice(&[j, j + 1, others[a], others[b]]);
                    positions.sort_unstable();
                    check(&positions);
                }
            }
        }
        _ => unreachable!(),
    }
    count
}

enum ChainState {
    Points(Vec<Point>),
    Perm(Vec<usize>),
}

impl ChainState {
    fn induced(&self) -> Permutation {
        match self {
            ChainState::Points(pts) => {
                induced_permutation(pts).expect("chain maintains distinct coordinates")
            }
            ChainState::Perm(vals) => {
                Permutation::new(vals.clone()).expect("chain maintains a permutation")
            }
        }
    }
}

/// Run Metropolis MCMC for the Gibbs model and pass every emitted state to
/// `observe` (post burn-in, thinned).
pub fn gibbs_mcmc_observe<F: FnMut(&Permutation)>(
    params: &GibbsParams,
    config: &ChainConfig,
    mut observe: F,
) -> Result<GibbsStats> {
    let n = params.n;
    let k = params.sigma.k();
    if k > n {
        return Err(Error::InvalidInput(format!(
            "pattern size {k} exceeds model size {n}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut state = match config.proposal {
        Proposal::PointResample => {
            ChainState::Points(sample_points(&params.mu, n, &mut rng)?.points().to_vec())
        }
        Proposal::AdjacentTransposition => {
            if !params.mu.is_lebesgue() {
                return Err(Error::InvalidInput(
                    "adjacent-transposition proposals require the uniform measure".into(),
                ));
            }
            // uniform initial permutation via Fisher-Yates
            let mut vals: Vec<usize> = (1..=n).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                vals.swap(i, j);
            }
            ChainState::Perm(vals)
        }
    };
    // n * theta * t_sigma = theta * k! * occ / n^(k-1); precompute the factor
    let kfact: f64 = (1..=k).product::<usize>() as f64;
    let occ_factor = params.theta * kfact / (n as f64).powi(k as i32 - 1);
    let mut stats = GibbsStats {
        proposed: 0,
        accepted: 0,
        samples_emitted: 0,
    };
    for step in 1..=config.steps {
        stats.proposed += 1;
        match &mut state {
            ChainState::Points(pts) => {
                let idx = rng.gen_range(0..n);
                // redraw, avoiding exact coordinate collisions with the rest
                let mut candidate = None;
                for _ in 0..COLLISION_RETRIES {
                    let p = params.mu.draw_point(&mut rng);
                    let clash = pts
                        .iter()
                        .enumerate()
                        .any(|(j, q)| j != idx && (q.0 == p.0 || q.1 == p.1));
                    if !clash {
                        candidate = Some(p);
                        break;
                    }
                }
                let Some(p_new) = candidate else {
                    return Err(Error::SamplingExhausted);
                };
                let occ_old = occ_with_point(&params.sigma, pts, idx);
                let p_old = pts[idx];
                pts[idx] = p_new;
                let occ_new = occ_with_point(&params.sigma, pts, idx);
                let log_ratio = occ_factor * (occ_new as f64 - occ_old as f64);
                if log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp() {
                    stats.accepted += 1;
                } else {
                    pts[idx] = p_old;
                }
            }
            ChainState::Perm(vals) => {
                let j = rng.gen_range(0..n - 1);
                let occ_old = occ_with_pair(&params.sigma, vals, j);
                vals.swap(j, j + 1);
                let occ_new = occ_with_pair(&params.sigma, vals, j);
                let log_ratio = occ_factor * (occ_new as f64 - occ_old as f64);
                if log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp() {
                    stats.accepted += 1;
                } else {
                    vals.swap(j, j + 1);
                }
            }
        }
        if step > config.burn_in && (step - config.burn_in).is_multiple_of(config.thinning) {
            observe(&state.induced());
            stats.samples_emitted += 1;
        }
    }
    Ok(stats)
}

/// Run Metropolis MCMC and collect the emitted permutations.
pub fn gibbs_mcmc(params: &GibbsParams, config: &ChainConfig) -> Result<GibbsRun> {
    let mut samples = Vec::new();
    let stats = gibbs_mcmc_observe(params, config, |p| samples.push(p.clone()))?;
    Ok(GibbsRun { samples, stats })
}

/// Exact Gibbs distribution over `S_n` for the uniform base measure
/// (`n <= 8`; the table has `n!` rows).
pub fn exact_gibbs_pmf(params: &GibbsParams) -> Result<PmfTable> {
    if !params.mu.is_lebesgue() {
        return Err(Error::Unsupported(
            "exact enumeration is implemented for the uniform measure".into(),
        ));
    }
    if params.n > 8 {
        return Err(Error::InvalidInput(format!(
            "exact enumeration is limited to n <= 8 (got {})",
            params.n
        )));
    }
    let perms = Permutation::all(params.n);
    let exponents: Vec<f64> = perms
        .iter()
        .map(|p| params.n as f64 * params.theta * t_sigma_perm(&params.sigma, p))
        .collect();
    let m = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = exponents.iter().map(|e| (e - m).exp()).sum();
    let log_sum = m + sum.ln();
    let probs: Vec<f64> = exponents.iter().map(|e| (e - log_sum).exp()).collect();
    Ok(PmfTable {
        sigma: params.sigma.clone(),
        theta: params.theta,
        n: params.n,
        perms,
        probs,
        log_sum,
    })
}

/// Monte-Carlo estimate of the free energy
/// `F_n = (1/n) log E[exp(n theta t_sigma)]` over mu-random permutations,
/// with a jackknife standard error.
pub fn estimate_fn(
    sigma: &Pattern,
    mu: &Permuton,
    theta: f64,
    n: usize,
    n_samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples < 2 {
        return Err(Error::InvalidInput(
            "need at least 2 samples for a standard error".into(),
        ));
    }
    if sigma.k() > n {
        return Err(Error::InvalidInput(format!(
            "pattern size {} exceeds permutation size {n}",
            sigma.k()
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let nf = n as f64;
    let mut exponents = Vec::with_capacity(n_samples as usize);
    for _ in 0..n_samples {
        let pi = sample_mu_random_perm(mu, n, &mut rng)?;
        exponents.push(nf * theta * t_sigma_perm(sigma, &pi));
    }
    let m = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = exponents.iter().map(|e| (e - m).exp()).collect();
    let total: f64 = shifted.iter().sum();
    let nn = n_samples as f64;
    let value = (m + (total / nn).ln()) / nf;
    // jackknife over the leave-one-out log-mean-exp values
    let mut loo = Vec::with_capacity(shifted.len());
    for s in &shifted {
        let rest = (total - s).max(f64::MIN_POSITIVE);
        loo.push((m + (rest / (nn - 1.0)).ln()) / nf);
    }
    let loo_mean: f64 = loo.iter().sum::<f64>() / nn;
    let var: f64 = loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>() * (nn - 1.0) / nn;
    Ok(McEstimate {
        value,
        stderr: var.sqrt(),
        n_samples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{mix, Segment};
    use std::collections::HashMap;

    /// 99.9% quantile of the chi-square distribution with 5 degrees of
    /// freedom.
    const CHI2_5_999: f64 = 20.515005652432873;

    fn pat(s: &str) -> Pattern {
        Pattern::parse(s).unwrap()
    }

    fn xi() -> Permuton {
        let s1 = Segment::new((0.0, 0.5), (0.5, 0.0), 1.0).unwrap();
        let s2 = Segment::new((0.5, 1.0), (1.0, 0.5), 1.0).unwrap();
        mix(
            vec![
                Permuton::segments(vec![s1]).unwrap(),
                Permuton::segments(vec![s2]).unwrap(),
            ],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn uniform_measure_gives_uniform_permutations() {
        let lam = Permuton::lebesgue();
        let mut rng = ChaCha12Rng::seed_from_u64(314159);
        let draws = 60_000usize;
        let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
        for _ in 0..draws {
            let p = sample_mu_random_perm(&lam, 3, &mut rng).unwrap();
            *counts.entry(p.values().to_vec()).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = draws as f64 / 6.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < CHI2_5_999, "chi2 = {chi2}");
    }

    #[test]
    fn xi_points_lie_on_the_two_antidiagonals() {
        let xi = xi();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..500 {
            let (x, y) = xi.draw_point(&mut rng);
            let on_lower = (x + y - 0.5).abs() < 1e-12;
            let on_upper = (x + y - 1.5).abs() < 1e-12;
            assert!(on_lower || on_upper, "({x}, {y}) is off the support");
        }
    }

    #[test]
    fn xi_pairs_are_inverted_half_the_time() {
        let xi = xi();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let n = 40_000;
        let mut inv = 0u64;
        for _ in 0..n {
            let p = sample_mu_random_perm(&xi, 2, &mut rng).unwrap();
            if p.values() == [2, 1] {
                inv += 1;
            }
        }
        let freq = inv as f64 / n as f64;
        let se = (0.25f64 / n as f64).sqrt();
        assert!((freq - 0.5).abs() <= 3.0 * se, "freq = {freq}");
    }

    #[test]
    fn chain_config_validation() {
        assert!(ChainConfig::new(10, 20, 1, 0, Proposal::PointResample).is_err());
        assert!(ChainConfig::new(10, 5, 0, 0, Proposal::PointResample).is_err());
        let c = ChainConfig::for_samples(6, 100, 1, Proposal::PointResample);
        assert_eq!(c.burn_in, 600);
        assert_eq!(c.thinning, 6);
        assert_eq!(c.steps, 600 + 600);
    }

    #[test]
    fn theta_zero_accepts_every_proposal() {
        let params = GibbsParams::new(pat("21"), Permuton::lebesgue(), 0.0, 8).unwrap();
        for proposal in [Proposal::PointResample, Proposal::AdjacentTransposition] {
            let config = ChainConfig::new(2_000, 100, 4, 5, proposal).unwrap();
            let run = gibbs_mcmc(&params, &config).unwrap();
            assert_eq!(run.stats.accepted, run.stats.proposed);
            assert_eq!(run.samples.len(), ((2_000 - 100) / 4) as usize);
        }
    }

    #[test]
    fn positive_theta_raises_the_inversion_density() {
        let n = 64;
        let params = GibbsParams::new(pat("21"), Permuton::lebesgue(), 1.0, n).unwrap();
        let config = ChainConfig::for_samples(n, 400, 11, Proposal::PointResample);
        let mut total = 0.0;
        let mut count = 0u64;
        gibbs_mcmc_observe(&params, &config, |p| {
            total += crate::patterns::t_21_perm(p);
            count += 1;
        })
        .unwrap();
        let mean = total / count as f64;
        assert!(mean > 0.5, "mean t21 = {mean}");
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let params = GibbsParams::new(pat("21"), xi(), 0.7, 10).unwrap();
        let config = ChainConfig::for_samples(10, 50, 123, Proposal::PointResample);
        let a = gibbs_mcmc(&params, &config).unwrap();
        let b = gibbs_mcmc(&params, &config).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn adjacent_transposition_requires_uniform_base() {
        let params = GibbsParams::new(pat("21"), xi(), 0.5, 6).unwrap();
        let config = ChainConfig::new(100, 0, 1, 0, Proposal::AdjacentTransposition).unwrap();
        assert!(gibbs_mcmc(&params, &config).is_err());
    }

    #[test]
    fn exact_pmf_uniform_at_theta_zero() {
        let params = GibbsParams::new(pat("21"), Permuton::lebesgue(), 0.0, 4).unwrap();
        let table = exact_gibbs_pmf(&params).unwrap();
        assert_eq!(table.perms.len(), 24);
        for &p in &table.probs {
            assert!((p - 1.0 / 24.0).abs() < 1e-14);
        }
        let total: f64 = table.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_pmf_two_point_closed_form() {
        for theta in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            let params = GibbsParams::new(pat("21"), Permuton::lebesgue(), theta, 2).unwrap();
            let table = exact_gibbs_pmf(&params).unwrap();
            let p21 = table
                .prob_of(&"21".parse::<Permutation>().unwrap())
                .unwrap();
            let expect = theta.exp() / (1.0 + theta.exp());
            assert!((p21 - expect).abs() < 1e-14, "theta={theta}: {p21}");
        }
    }

    #[test]
    fn reverse_identity_probability_grows_with_theta() {
        let rev = "4321".parse::<Permutation>().unwrap();
        let mut last = -1.0;
        for theta in [-1.0, 0.0, 1.0] {
            let params = GibbsParams::new(pat("21"), Permuton::lebesgue(), theta, 4).unwrap();
            let table = exact_gibbs_pmf(&params).unwrap();
            let p = table.prob_of(&rev).unwrap();
            assert!(p > last, "theta={theta}: {p} <= {last}");
            last = p;
        }
    }

    #[test]
    fn exact_pmf_rejects_large_n_and_non_uniform() {
        let params = GibbsParams::new(pat("21"), Permuton::lebesgue(), 0.5, 9).unwrap();
        assert!(exact_gibbs_pmf(&params).is_err());
        let params = GibbsParams::new(pat("21"), xi(), 0.5, 4).unwrap();
        assert!(matches!(exact_gibbs_pmf(&params), Err(Error::Unsupported(_))));
    }

    #[test]
    fn free_energy_estimate_at_theta_zero_is_exact() {
        let est = estimate_fn(&pat("21"), &Permuton::lebesgue(), 0.0, 20, 100, 3).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn free_energy_estimate_is_bounded_by_theta() {
        for theta in [-1.5, -0.5, 0.5, 1.5] {
            let est = estimate_fn(&pat("21"), &Permuton::lebesgue(), theta, 30, 2_000, 17).unwrap();
            assert!(
                est.value.abs() <= theta.abs() + 1e-12,
                "theta={theta}: {}",
                est.value
            );
        }
    }

    #[test]
    fn free_energy_estimate_matches_enumeration_for_small_n() {
        // n = 6 is exactly enumerable; the estimator should land within a
        // few standard errors
        let params = GibbsParams::new(pat("21"), Permuton::lebesgue(), 0.8, 6).unwrap();
        let table = exact_gibbs_pmf(&params).unwrap();
        let est = estimate_fn(&pat("21"), &Permuton::lebesgue(), 0.8, 6, 40_000, 23).unwrap();
        let gap = (est.value - table.free_energy()).abs();
        assert!(
            gap <= 4.0 * est.stderr + 1e-4,
            "gap {gap} vs se {}",
            est.stderr
        );
    }

    /// The point-resample chain at `n = 3` over the uniform measure
    /// marginalizes to an explicit 6-state Markov chain on permutations:
    /// removing a uniformly chosen point leaves a uniform 2-point pattern,
    /// and the redrawn point has independent uniform x- and y-ranks among
    /// the remaining ones. The Gibbs distribution must be stationary for it.
    #[test]
    fn point_resample_chain_is_stationary_for_the_gibbs_law() {
        fn remove_rank(p: &Permutation, r: usize) -> Vec<usize> {
            // pattern of the points at x-ranks != r
            let kept: Vec<usize> = p
                .values()
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != r)
                .map(|(_, &v)| v)
                .collect();
            let mut sorted: Vec<usize> = kept.clone();
            sorted.sort_unstable();
            kept.iter()
                .map(|v| sorted.iter().position(|s| s == v).unwrap() + 1)
                .collect()
        }
        fn insert(base: &[usize], a: usize, b: usize) -> Vec<usize> {
            // insert a point at x-rank a (0-based) with y-rank b (0-based)
            let mut vals: Vec<usize> = base
                .iter()
                .map(|&v| if v > b { v + 1 } else { v })
                .collect();
            vals.insert(a, b + 1);
            vals
        }

        for theta in [0.0, 0.7, -1.3] {
            let perms = Permutation::all(3);
            let sigma = pat("21");
            let weights: Vec<f64> = perms
                .iter()
                .map(|p| (3.0 * theta * t_sigma_perm(&sigma, p)).exp())
                .collect();
            let z: f64 = weights.iter().sum();
            let gibbs: Vec<f64> = weights.iter().map(|w| w / z).collect();

            let index = |vals: &[usize]| perms.iter().position(|p| p.values() == vals).unwrap();
            let mut trans = vec![vec![0.0f64; 6]; 6];
            for (i, p) in perms.iter().enumerate() {
                let ti = t_sigma_perm(&sigma, p);
                for r in 0..3 {
                    let base = remove_rank(p, r);
                    for a in 0..3 {
                        for b in 0..3 {
                            let q = insert(&base, a, b);
                            let j = index(&q);
                            let tj = t_sigma_perm(&sigma, &perms[j]);
                            let acc = (3.0 * theta * (tj - ti)).exp().min(1.0);
                            let prob = (1.0 / 3.0) * (1.0 / 9.0);
                            trans[i][j] += prob * acc;
                            trans[i][i] += prob * (1.0 - acc);
                        }
                    }
                }
            }
            // rows sum to one
            for row in &trans {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
            // stationarity of the Gibbs law
            for j in 0..6 {
                let flow: f64 = (0..6).map(|i| gibbs[i] * trans[i][j]).sum();
                assert!(
                    (flow - gibbs[j]).abs() < 1e-10,
                    "theta={theta}, state {j}: {flow} vs {}",
                    gibbs[j]
                );
            }
        }
    }

    /// At `theta = 0` the chain must reproduce the uniform distribution on
    /// `S_4`; compare a long thinned run against iid draws by a two-sample
    /// chi-square test on the 24 cells.
    #[test]
    fn theta_zero_chain_matches_iid_uniform() {
        /// 99.9% quantile of the chi-square distribution with 23 degrees of
        /// freedom.
        const CHI2_23_999: f64 = 49.7282324664315;
        let n_draws = 100_000u64;
        let params = GibbsParams::new(pat("21"), Permuton::lebesgue(), 0.0, 4).unwrap();
        let config = ChainConfig::for_samples(4, n_draws, 2024, Proposal::PointResample);
        let mut chain_counts: HashMap<Vec<usize>, f64> = HashMap::new();
        gibbs_mcmc_observe(&params, &config, |p| {
            *chain_counts.entry(p.values().to_vec()).or_insert(0.0) += 1.0;
        })
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2025);
        let mut iid_counts: HashMap<Vec<usize>, f64> = HashMap::new();
        for _ in 0..n_draws {
            let p = sample_mu_random_perm(&Permuton::lebesgue(), 4, &mut rng).unwrap();
            *iid_counts.entry(p.values().to_vec()).or_insert(0.0) += 1.0;
        }
        let mut chi2 = 0.0;
        for perm in Permutation::all(4) {
            let a = chain_counts.get(perm.values()).copied().unwrap_or(0.0);
            let b = iid_counts.get(perm.values()).copied().unwrap_or(0.0);
            // two-sample statistic with equal totals: sum (a-b)^2 / (a+b)
            if a + b > 0.0 {
                chi2 += (a - b).powi(2) / (a + b);
            }
        }
        assert!(chi2 < CHI2_23_999, "two-sample chi2 = {chi2}");
    }
}
