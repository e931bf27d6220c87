//! Exact combinatorics of rankings.
//!
//! A [`Ranking`] assigns each of `n` items a distinct rank. Items and ranks
//! are 0-based internally; file formats convert at the boundary.
//!
//! Composition convention: `compose(s, t)[i] = s[t[i]]`, i.e. `t` first, then
//! `s`. Every module in the crate inherits this convention.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default cap on `n` for anything that enumerates all of `S_n`.
pub const DEFAULT_MAX_N: usize = 10;

/// Enumeration cap, overridable through the `RIFFLE_MAX_N` environment variable.
pub fn max_enum_n() -> usize {
    std::env::var("RIFFLE_MAX_N")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_MAX_N)
}

pub fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// A ranking of `n` items: `rank(j)` is the 0-based rank of item `j`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ranking {
    ranks: Vec<usize>,
}

impl std::fmt::Debug for Ranking {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // printed 1-based to match the usual notation
        let one: Vec<usize> = self.ranks.iter().map(|r| r + 1).collect();
        write!(f, "Ranking{:?}", one)
    }
}

impl Ranking {
    /// Builds a ranking from 0-based ranks; must be a permutation of `0..n`.
    pub fn new(ranks: Vec<usize>) -> Result<Self> {
        let n = ranks.len();
        let mut seen = vec![false; n];
        for &r in &ranks {
            if r >= n {
                return Err(Error::InvalidRanking(format!(
                    "rank {} out of range for n={}",
                    r + 1,
                    n
                )));
            }
            if seen[r] {
                return Err(Error::InvalidRanking(format!("duplicate rank {}", r + 1)));
            }
            seen[r] = true;
        }
        Ok(Ranking { ranks })
    }

    /// Builds a ranking from the usual 1-based one-line notation.
    pub fn from_one_based(ranks: &[usize]) -> Result<Self> {
        for &r in ranks {
            if r == 0 {
                return Err(Error::InvalidRanking("rank 0 in 1-based input".into()));
            }
        }
        Self::new(ranks.iter().map(|r| r - 1).collect())
    }

    pub fn identity(n: usize) -> Self {
        Ranking {
            ranks: (0..n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.ranks.len()
    }

    /// Rank of item `item` (0-based).
    pub fn rank(&self, item: usize) -> usize {
        self.ranks[item]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.ranks
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.ranks.iter().map(|r| r + 1).collect()
    }

    /// The ordering view: items listed from most to least preferred.
    /// This is the inverse permutation of the rank vector.
    pub fn ordering(&self) -> Vec<usize> {
        self.inverse().ranks
    }

    /// Builds a ranking from an ordering (0-based items, most preferred first).
    pub fn from_ordering(items: &[usize]) -> Result<Self> {
        Ranking::new(items.to_vec()).map(|r| r.inverse())
    }

    /// `compose(s, t)[i] = s[t[i]]`; applies `t` first, then `self`.
    pub fn compose(&self, t: &Ranking) -> Result<Ranking> {
        if self.n() != t.n() {
            return Err(Error::SizeMismatch(format!(
                "compose: {} vs {}",
                self.n(),
                t.n()
            )));
        }
        Ok(Ranking {
            ranks: t.ranks.iter().map(|&r| self.ranks[r]).collect(),
        })
    }

    pub fn inverse(&self) -> Ranking {
        let mut inv = vec![0; self.n()];
        for (item, &r) in self.ranks.iter().enumerate() {
            inv[r] = item;
        }
        Ranking { ranks: inv }
    }

    /// Lexicographic Lehmer-code index of this ranking within `S_n`.
    pub fn rank_index(&self) -> u64 {
        let n = self.n();
        let mut idx = 0u64;
        for i in 0..n {
            let smaller_later = self.ranks[i + 1..]
                .iter()
                .filter(|&&r| r < self.ranks[i])
                .count() as u64;
            idx += smaller_later * factorial(n - 1 - i);
        }
        idx
    }

    /// Inverse of [`Ranking::rank_index`].
    pub fn from_index(n: usize, idx: u64) -> Result<Ranking> {
        let max = factorial(n);
        if idx >= max {
            return Err(Error::IndexOutOfRange { n, idx, max });
        }
        let mut avail: Vec<usize> = (0..n).collect();
        let mut rem = idx;
        let mut ranks = Vec::with_capacity(n);
        for i in 0..n {
            let f = factorial(n - 1 - i);
            let d = (rem / f) as usize;
            rem %= f;
            ranks.push(avail.remove(d));
        }
        Ok(Ranking { ranks })
    }
}

/// All `n!` rankings in lexicographic order (consistent with `rank_index`).
pub fn enumerate_sn(n: usize) -> Result<Vec<Ranking>> {
    let cap = max_enum_n();
    if n > cap {
        return Err(Error::EnumerationCap { n, cap });
    }
    let mut out = Vec::with_capacity(factorial(n) as usize);
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(Ranking { ranks: cur.clone() });
        // next_permutation in lexicographic order
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
    Ok(out)
}

/// A two-block partition of the item set `{0,…,n-1}` into `A` and its
/// complement `B`, together with the relabeling that makes `A` contiguous.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemPartition {
    a_items: Vec<usize>,
    b_items: Vec<usize>,
    n: usize,
}

impl ItemPartition {
    pub fn new(n: usize, a_items: &[usize]) -> Result<Self> {
        let mut a: Vec<usize> = a_items.to_vec();
        a.sort_unstable();
        a.dedup();
        if a.len() != a_items.len() {
            return Err(Error::InvalidRanking("duplicate items in A".into()));
        }
        if a.is_empty() || a.len() >= n {
            return Err(Error::SizeMismatch(format!(
                "partition blocks must be nonempty: |A|={} of n={}",
                a.len(),
                n
            )));
        }
        if *a.last().unwrap() >= n {
            return Err(Error::IndexOutOfRange {
                n,
                idx: *a.last().unwrap() as u64,
                max: n as u64,
            });
        }
        let b: Vec<usize> = (0..n).filter(|i| a.binary_search(i).is_err()).collect();
        Ok(ItemPartition {
            a_items: a,
            b_items: b,
            n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.a_items.len()
    }
    pub fn q(&self) -> usize {
        self.b_items.len()
    }
    pub fn a_items(&self) -> &[usize] {
        &self.a_items
    }
    pub fn b_items(&self) -> &[usize] {
        &self.b_items
    }

    /// Maps an item to its contiguous label: `A` maps onto `0..p`, `B` onto `p..n`.
    pub fn relabel(&self, item: usize) -> usize {
        match self.a_items.binary_search(&item) {
            Ok(i) => i,
            Err(_) => self.p() + self.b_items.binary_search(&item).unwrap(),
        }
    }

    /// Inverse of [`ItemPartition::relabel`].
    pub fn unrelabel(&self, local: usize) -> usize {
        if local < self.p() {
            self.a_items[local]
        } else {
            self.b_items[local - self.p()]
        }
    }
}

/// A `(p,q)`-interleaving: a ranking whose first `p` and last `q` entries are
/// each ascending. Exactly `C(p+q, p)` of these exist.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interleaving {
    tau: Ranking,
    p: usize,
}

impl Interleaving {
    pub fn new(tau: Ranking, p: usize) -> Result<Self> {
        let n = tau.n();
        if p == 0 || p >= n {
            return Err(Error::SizeMismatch(format!("p={} out of range for n={}", p, n)));
        }
        let asc = |s: &[usize]| s.windows(2).all(|w| w[0] < w[1]);
        if !asc(&tau.as_slice()[..p]) || !asc(&tau.as_slice()[p..]) {
            return Err(Error::InvalidRanking(format!(
                "not a ({},{})-interleaving: {:?}",
                p,
                n - p,
                tau
            )));
        }
        Ok(Interleaving { tau, p })
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn q(&self) -> usize {
        self.tau.n() - self.p
    }
    pub fn n(&self) -> usize {
        self.tau.n()
    }
    pub fn ranking(&self) -> &Ranking {
        &self.tau
    }

    /// Position of this interleaving in the lexicographic enumeration order.
    pub fn index(&self) -> usize {
        // lexicographic rank of the p-combination of ranks taken by the A block
        let n = self.n();
        let p = self.p;
        let combo = &self.tau.as_slice()[..p];
        let mut idx = 0u64;
        let mut prev: isize = -1;
        for (i, &c) in combo.iter().enumerate() {
            for v in (prev + 1) as usize..c {
                idx += binomial(n - 1 - v, p - 1 - i);
            }
            prev = c as isize;
        }
        idx as usize
    }
}

/// All `(p,q)`-interleavings in lexicographic order.
pub fn enumerate_interleavings(p: usize, q: usize) -> Result<Vec<Interleaving>> {
    if p == 0 || q == 0 {
        return Err(Error::SizeMismatch(format!("p={}, q={} must be >= 1", p, q)));
    }
    let n = p + q;
    let count = binomial(n, p);
    let cap = factorial(max_enum_n());
    if count > cap {
        return Err(Error::TableCap {
            what: format!("Omega_{{{},{}}}", p, q),
            size: count,
            cap,
        });
    }
    // combinations of ranks for the A block, in lexicographic order
    let mut combo: Vec<usize> = (0..p).collect();
    let mut out = Vec::with_capacity(count as usize);
    loop {
        let mut ranks = vec![usize::MAX; 0];
        ranks.extend_from_slice(&combo);
        let in_a = |r: usize| combo.binary_search(&r).is_ok();
        ranks.extend((0..n).filter(|&r| !in_a(r)));
        out.push(Interleaving {
            tau: Ranking { ranks },
            p,
        });
        // next combination
        let Some(i) = (0..p).rev().find(|&i| combo[i] < n - p + i) else {
            break;
        };
        combo[i] += 1;
        for j in i + 1..p {
            combo[j] = combo[j - 1] + 1;
        }
    }
    Ok(out)
}

/// The interleaving of `A` and `B` induced by `s`: sorted ranks of `A`
/// followed by sorted ranks of `B`.
pub fn interleaving_map(s: &Ranking, part: &ItemPartition) -> Result<Interleaving> {
    if part.n() != s.n() {
        return Err(Error::SizeMismatch(format!(
            "interleaving_map: partition n={} vs ranking n={}",
            part.n(),
            s.n()
        )));
    }
    let mut a_ranks: Vec<usize> = part.a_items().iter().map(|&i| s.rank(i)).collect();
    let mut b_ranks: Vec<usize> = part.b_items().iter().map(|&i| s.rank(i)).collect();
    a_ranks.sort_unstable();
    b_ranks.sort_unstable();
    a_ranks.extend(b_ranks);
    Ok(Interleaving {
        tau: Ranking { ranks: a_ranks },
        p: part.p(),
    })
}

/// Relative ranks of `items` within themselves: order-isomorphic to the
/// restriction of `s`.
pub fn relative_rank_map(s: &Ranking, items: &[usize]) -> Ranking {
    let ranks: Vec<usize> = items.iter().map(|&i| s.rank(i)).collect();
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by_key(|&j| ranks[j]);
    let mut rel = vec![0; items.len()];
    for (pos, &j) in order.iter().enumerate() {
        rel[j] = pos;
    }
    Ranking { ranks: rel }
}

/// Unique decomposition of `s` into an interleaving and relative rankings of
/// the two blocks.
pub fn decompose(s: &Ranking, part: &ItemPartition) -> Result<(Interleaving, Ranking, Ranking)> {
    let tau = interleaving_map(s, part)?;
    let pa = relative_rank_map(s, part.a_items());
    let pb = relative_rank_map(s, part.b_items());
    Ok((tau, pa, pb))
}

/// Inverse of [`decompose`]: stacks `pb` offset by `p` and applies `tau`.
pub fn recompose(
    tau: &Interleaving,
    pa: &Ranking,
    pb: &Ranking,
    part: &ItemPartition,
) -> Result<Ranking> {
    let (p, q, n) = (part.p(), part.q(), part.n());
    if tau.n() != n || pa.n() != p || pb.n() != q {
        return Err(Error::SizeMismatch(format!(
            "recompose: tau n={}, pa n={}, pb n={} vs partition ({},{})",
            tau.n(),
            pa.n(),
            pb.n(),
            p,
            q
        )));
    }
    let mut ranks = vec![0; n];
    for (j, &item) in part.a_items().iter().enumerate() {
        ranks[item] = tau.ranking().rank(pa.rank(j));
    }
    for (j, &item) in part.b_items().iter().enumerate() {
        ranks[item] = tau.ranking().rank(p + pb.rank(j));
    }
    Ok(Ranking { ranks })
}
