//! Exact distributions over `S_n` stored as full `n!` probability tables.
//!
//! This is the brute-force oracle: every structured representation in the
//! crate is tested by materializing it here and comparing entrywise.

use serde::{Deserialize, Serialize};

use crate::perm::{enumerate_sn, factorial, Ranking};
use crate::{Error, Result};

/// A distribution (or unnormalized weight table) over all of `S_n`, indexed
/// by [`Ranking::rank_index`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseDistribution {
    n: usize,
    probs: Vec<f64>,
}

/// `n x n` matrix of first-order marginals: entry `(i, j)` is the mass on
/// rankings that put item `j` at rank `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstOrderMatrix {
    pub n: usize,
    /// row-major, rows = ranks, columns = items
    pub entries: Vec<Vec<f64>>,
}

/// A multiset of observed rankings with multiplicities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    n: usize,
    records: Vec<(Ranking, u64)>,
}

impl SampleSet {
    pub fn new(n: usize, records: Vec<(Ranking, u64)>) -> Result<Self> {
        for (r, c) in &records {
            if r.n() != n {
                return Err(Error::SizeMismatch(format!(
                    "sample of size {} in a set with n={}",
                    r.n(),
                    n
                )));
            }
            if *c == 0 {
                return Err(Error::InvalidRanking("zero count in sample set".into()));
            }
        }
        Ok(SampleSet { n, records })
    }

    pub fn from_rankings(n: usize, rankings: impl IntoIterator<Item = Ranking>) -> Result<Self> {
        let mut counts = std::collections::BTreeMap::new();
        for r in rankings {
            *counts.entry(r).or_insert(0u64) += 1;
        }
        SampleSet::new(n, counts.into_iter().collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total(&self) -> u64 {
        self.records.iter().map(|(_, c)| c).sum()
    }

    pub fn records(&self) -> &[(Ranking, u64)] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Expands to one ranking per observation (for resampling).
    pub fn expand(&self) -> Vec<Ranking> {
        let mut out = Vec::with_capacity(self.total() as usize);
        for (r, c) in &self.records {
            for _ in 0..*c {
                out.push(r.clone());
            }
        }
        out
    }
}

impl DenseDistribution {
    /// Builds from an explicit table; must be nonnegative and sum to 1.
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self> {
        let d = DenseDistribution::new_unnormalized(n, probs)?;
        let total: f64 = d.probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidRanking(format!(
                "probabilities sum to {} (expected 1)",
                total
            )));
        }
        Ok(d)
    }

    /// Builds an unnormalized nonnegative table (for count matrices and
    /// likelihood functions that are not distributions).
    pub fn new_unnormalized(n: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() as u64 != factorial(n) {
            return Err(Error::SizeMismatch(format!(
                "table has {} entries, S_{} needs {}",
                probs.len(),
                n,
                factorial(n)
            )));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidRanking("negative or non-finite entry".into()));
        }
        Ok(DenseDistribution { n, probs })
    }

    /// Normalizes in place; errors if the total mass is zero.
    pub fn normalized(mut self) -> Result<Self> {
        let total: f64 = self.probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroEvidence);
        }
        for p in &mut self.probs {
            *p /= total;
        }
        Ok(self)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        let size = factorial(n) as usize;
        Ok(DenseDistribution {
            n,
            probs: vec![1.0 / size as f64; size],
        })
    }

    pub fn delta(s: &Ranking) -> Self {
        let mut probs = vec![0.0; factorial(s.n()) as usize];
        probs[s.rank_index() as usize] = 1.0;
        DenseDistribution { n: s.n(), probs }
    }

    /// Builds a table by evaluating `f` on every ranking; does not normalize.
    pub fn from_fn(n: usize, mut f: impl FnMut(&Ranking) -> f64) -> Result<Self> {
        let probs: Vec<f64> = enumerate_sn(n)?.iter().map(|s| f(s)).collect();
        DenseDistribution::new_unnormalized(n, probs)
    }

    /// Empirical distribution with optional pseudocount smoothing.
    pub fn from_samples(samples: &SampleSet, smoothing: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let n = samples.n();
        let mut probs = vec![smoothing; factorial(n) as usize];
        for (r, c) in samples.records() {
            probs[r.rank_index() as usize] += *c as f64;
        }
        DenseDistribution::new_unnormalized(n, probs)?.normalized()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, s: &Ranking) -> f64 {
        self.probs[s.rank_index() as usize]
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Lexicographically-smallest argmax.
    pub fn mode(&self) -> Ranking {
        let mut best = 0usize;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        Ranking::from_index(self.n, best as u64).unwrap()
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }

    /// KL divergence `D(self || q)` in nats; `+inf` when the support of
    /// `self` is not contained in the support of `q`.
    pub fn kl_divergence(&self, q: &DenseDistribution) -> Result<f64> {
        if self.n != q.n {
            return Err(Error::SizeMismatch(format!("kl: {} vs {}", self.n, q.n)));
        }
        let mut kl = 0.0;
        for (&p, &qv) in self.probs.iter().zip(&q.probs) {
            if p > 0.0 {
                if qv <= 0.0 {
                    return Ok(f64::INFINITY);
                }
                kl += p * (p / qv).ln();
            }
        }
        Ok(kl.max(0.0))
    }

    pub fn tv_distance(&self, q: &DenseDistribution) -> Result<f64> {
        if self.n != q.n {
            return Err(Error::SizeMismatch(format!("tv: {} vs {}", self.n, q.n)));
        }
        Ok(self
            .probs
            .iter()
            .zip(&q.probs)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
            / 2.0)
    }

    pub fn max_abs_diff(&self, q: &DenseDistribution) -> Result<f64> {
        if self.n != q.n {
            return Err(Error::SizeMismatch(format!("diff: {} vs {}", self.n, q.n)));
        }
        Ok(self
            .probs
            .iter()
            .zip(&q.probs)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max))
    }

    pub fn first_order_marginals(&self) -> FirstOrderMatrix {
        let n = self.n;
        let mut entries = vec![vec![0.0; n]; n];
        for (idx, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let s = Ranking::from_index(n, idx as u64).unwrap();
            for item in 0..n {
                entries[s.rank(item)][item] += p;
            }
        }
        FirstOrderMatrix { n, entries }
    }

    /// Marginal table over ordered k-tuples: for each ordered tuple of
    /// distinct items `(j_1,…,j_k)` and ranks `(i_1,…,i_k)`, the mass on
    /// rankings with `σ(j_t)=i_t` for all t. Keys are (items, ranks).
    pub fn kth_order_marginals(
        &self,
        k: usize,
    ) -> Result<std::collections::BTreeMap<(Vec<usize>, Vec<usize>), f64>> {
        if k > self.n {
            return Err(Error::SizeMismatch(format!(
                "order {} marginals of n={}",
                k, self.n
            )));
        }
        let n = self.n;
        let tuples = ordered_tuples(n, k);
        let mut out = std::collections::BTreeMap::new();
        for (idx, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let s = Ranking::from_index(n, idx as u64).unwrap();
            for items in &tuples {
                let ranks: Vec<usize> = items.iter().map(|&j| s.rank(j)).collect();
                *out.entry((items.clone(), ranks)).or_insert(0.0) += p;
            }
        }
        Ok(out)
    }

    /// `h(σ(i) < σ(j))`: mass on rankings preferring item `i` to item `j`.
    pub fn pairwise_marginal(&self, i: usize, j: usize) -> f64 {
        let mut total = 0.0;
        for (idx, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let s = Ranking::from_index(self.n, idx as u64).unwrap();
            if s.rank(i) < s.rank(j) {
                total += p;
            }
        }
        total
    }

    /// `[m ∗ h](σ) = Σ_π m(π) h(π⁻¹ σ)`. Not commutative.
    pub fn convolve(&self, h: &DenseDistribution) -> Result<DenseDistribution> {
        if self.n != h.n {
            return Err(Error::SizeMismatch(format!(
                "convolve: {} vs {}",
                self.n, h.n
            )));
        }
        let all = enumerate_sn(self.n)?;
        let mut out = vec![0.0; self.probs.len()];
        for (pi_idx, pi) in all.iter().enumerate() {
            let m_pi = self.probs[pi_idx];
            if m_pi == 0.0 {
                continue;
            }
            let pi_inv = pi.inverse();
            for (sigma_idx, sigma) in all.iter().enumerate() {
                let t = pi_inv.compose(sigma).unwrap();
                out[sigma_idx] += m_pi * h.probs[t.rank_index() as usize];
            }
        }
        DenseDistribution::new_unnormalized(self.n, out)
    }

    /// Bayes update: normalized pointwise product of prior and likelihood.
    pub fn pointwise_condition(&self, likelihood: &DenseDistribution) -> Result<DenseDistribution> {
        if self.n != likelihood.n {
            return Err(Error::SizeMismatch(format!(
                "condition: {} vs {}",
                self.n, likelihood.n
            )));
        }
        let probs: Vec<f64> = self
            .probs
            .iter()
            .zip(&likelihood.probs)
            .map(|(p, l)| p * l)
            .collect();
        DenseDistribution::new_unnormalized(self.n, probs)?.normalized()
    }
}

impl FirstOrderMatrix {
    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| self.entries.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Scales all entries (e.g. probabilities to ballot counts).
    pub fn scaled(&self, factor: f64) -> FirstOrderMatrix {
        FirstOrderMatrix {
            n: self.n,
            entries: self
                .entries
                .iter()
                .map(|r| r.iter().map(|v| v * factor).collect())
                .collect(),
        }
    }
}

fn ordered_tuples(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in 0..n {
            if !cur.contains(&j) {
                cur.push(j);
                rec(n, k, cur, out);
                cur.pop();
            }
        }
    }
    rec(n, k, &mut cur, &mut out);
    out
}
