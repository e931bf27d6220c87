//! Riffle independent and hierarchical riffle independent models.
//!
//! A hierarchical model is a binary tree over the item set. Each internal
//! node carries a distribution over the interleavings of its two children;
//! each leaf carries a dense distribution over the relative rankings of its
//! items. A full ranking is generated by ranking each leaf independently and
//! recursively interleaving the blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{DenseDistribution, SampleSet};
use crate::perm::{
    binomial, decompose, enumerate_interleavings, factorial, max_enum_n, recompose, Interleaving,
    ItemPartition, Ranking,
};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Interleaving distributions
// ---------------------------------------------------------------------------

/// How an interleaving table was parameterized (kept for serialization and
/// reporting; the materialized table is always authoritative).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InterleavingKind {
    Table,
    Biased { alpha: f64 },
    Mixture { weights: Vec<f64>, alphas: Vec<f64> },
}

/// A distribution over the `C(p+q, p)` interleavings of a `(p, q)` split,
/// indexed consistently with [`enumerate_interleavings`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterleavingDistribution {
    p: usize,
    q: usize,
    probs: Vec<f64>,
    kind: InterleavingKind,
}

/// Bias parameter of the one-parameter riffle shuffle family.
///
/// Orientation: dropped cards land at the bottom (worst rank) first, and
/// `alpha` is the per-card drop weight of the A pile (`1 - alpha` for B). So
/// `alpha = 0` concentrates on the interleaving that places all of A ahead of
/// B, `alpha = 1` places B ahead of A, and `alpha = 0.5` is uniform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasedRiffleParams {
    pub alpha: f64,
}

impl InterleavingDistribution {
    pub fn from_table(p: usize, q: usize, probs: Vec<f64>) -> Result<Self> {
        Self::from_weights(p, q, probs, InterleavingKind::Table)
    }

    fn from_weights(p: usize, q: usize, weights: Vec<f64>, kind: InterleavingKind) -> Result<Self> {
        let count = binomial(p + q, p);
        if weights.len() as u64 != count {
            return Err(Error::SizeMismatch(format!(
                "interleaving table has {} entries, Omega_{{{},{}}} needs {}",
                weights.len(),
                p,
                q,
                count
            )));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidRanking(
                "negative or non-finite interleaving weight".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroEvidence);
        }
        // keep already-normalized tables bit-identical (round-trip stability)
        let probs = if (total - 1.0).abs() < 1e-12 {
            weights
        } else {
            weights.iter().map(|w| w / total).collect()
        };
        Ok(InterleavingDistribution { p, q, probs, kind })
    }

    pub fn uniform(p: usize, q: usize) -> Result<Self> {
        let count = binomial(p + q, p) as usize;
        Self::from_weights(p, q, vec![1.0; count], InterleavingKind::Table)
    }

    pub fn delta(tau: &Interleaving) -> Result<Self> {
        let count = binomial(tau.n(), tau.p()) as usize;
        let mut probs = vec![0.0; count];
        probs[tau.index()] = 1.0;
        Self::from_weights(tau.p(), tau.q(), probs, InterleavingKind::Table)
    }

    /// The biased riffle shuffle `m^alpha`, built by evaluating the drop
    /// recursion exactly on every interleaving.
    pub fn biased(p: usize, q: usize, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidRanking(format!("alpha {} not in [0,1]", alpha)));
        }
        let probs: Vec<f64> = enumerate_interleavings(p, q)?
            .iter()
            .map(|tau| riffle_probability(tau, alpha))
            .collect();
        Self::from_weights(p, q, probs, InterleavingKind::Biased { alpha })
    }

    /// Convex combination of biased riffles.
    pub fn mixture(p: usize, q: usize, weights: &[f64], alphas: &[f64]) -> Result<Self> {
        if weights.len() != alphas.len() || weights.is_empty() {
            return Err(Error::SizeMismatch("mixture weights vs alphas".into()));
        }
        let wsum: f64 = weights.iter().sum();
        let count = binomial(p + q, p) as usize;
        let mut probs = vec![0.0; count];
        for (&w, &a) in weights.iter().zip(alphas) {
            let comp = Self::biased(p, q, a)?;
            for (acc, &c) in probs.iter_mut().zip(&comp.probs) {
                *acc += (w / wsum) * c;
            }
        }
        Self::from_weights(
            p,
            q,
            probs,
            InterleavingKind::Mixture {
                weights: weights.iter().map(|w| w / wsum).collect(),
                alphas: alphas.to_vec(),
            },
        )
    }

    pub fn p(&self) -> usize {
        self.p
    }
    pub fn q(&self) -> usize {
        self.q
    }
    pub fn n(&self) -> usize {
        self.p + self.q
    }
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
    pub fn kind(&self) -> &InterleavingKind {
        &self.kind
    }

    pub fn prob_at(&self, index: usize) -> f64 {
        self.probs[index]
    }

    pub fn prob(&self, tau: &Interleaving) -> f64 {
        self.probs[tau.index()]
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }

    /// Index of the most probable interleaving (first among ties).
    pub fn mode_index(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Interleaving {
        let idx = sample_categorical(&self.probs, rng);
        interleaving_from_index(self.p, self.q, idx)
    }

    /// Pointwise product with a likelihood table, renormalized.
    pub fn pointwise_product(&self, like: &InterleavingDistribution) -> Result<Self> {
        if self.p != like.p || self.q != like.q {
            return Err(Error::SizeMismatch("interleaving product shapes".into()));
        }
        let weights: Vec<f64> = self
            .probs
            .iter()
            .zip(&like.probs)
            .map(|(a, b)| a * b)
            .collect();
        Self::from_weights(self.p, self.q, weights, InterleavingKind::Table)
    }

    /// Maximum-likelihood bias parameter: the `alpha` maximizing
    /// `sum_tau m(tau) ln m^alpha(tau)`, by golden-section search.
    pub fn fit_alpha(&self) -> f64 {
        let taus = enumerate_interleavings(self.p, self.q).unwrap();
        weighted_alpha_mle(&taus, &self.probs)
    }

    /// EM fit of a mixture of biased riffles to this table. Deterministic
    /// given `seed`; keeps the best of `restarts` random initializations.
    pub fn fit_mixture(&self, components: usize, restarts: usize, seed: u64) -> MixtureFit {
        use rand::SeedableRng;
        let taus = enumerate_interleavings(self.p, self.q).unwrap();
        let mut best: Option<MixtureFit> = None;
        for r in 0..restarts.max(1) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed.wrapping_add(r as u64));
            let alphas: Vec<f64> = (0..components).map(|_| rng.random::<f64>()).collect();
            let fit = em_mixture(&taus, &self.probs, alphas);
            if best
                .as_ref()
                .map(|b| fit.log_likelihood > b.log_likelihood)
                .unwrap_or(true)
            {
                best = Some(fit);
            }
        }
        best.unwrap()
    }
}

/// Result of a biased-riffle mixture fit.
#[derive(Clone, Debug)]
pub struct MixtureFit {
    pub weights: Vec<f64>,
    pub alphas: Vec<f64>,
    pub log_likelihood: f64,
    /// Per-iteration log-likelihood trace (non-decreasing).
    pub trace: Vec<f64>,
}

/// Exact probability of `tau` under the biased riffle shuffle: the deck is
/// rebuilt from the bottom rank up, dropping from the A pile with weight
/// `alpha * |A remaining|` and from B with weight `(1-alpha) * |B remaining|`.
pub fn riffle_probability(tau: &Interleaving, alpha: f64) -> f64 {
    let n = tau.n();
    let p = tau.p();
    let t = tau.ranking();
    // from_a[r]: whether rank r is taken by an A card
    let mut from_a = vec![false; n];
    for i in 0..p {
        from_a[t.rank(i)] = true;
    }
    let mut a = p;
    let mut b = n - p;
    let mut prob = 1.0;
    for r in (0..n).rev() {
        let wa = alpha * a as f64;
        let wb = (1.0 - alpha) * b as f64;
        let total = wa + wb;
        let step = if from_a[r] {
            a -= 1;
            if total > 0.0 {
                wa / total
            } else {
                1.0 // the other pile is empty and weightless
            }
        } else {
            b -= 1;
            if total > 0.0 {
                wb / total
            } else {
                1.0
            }
        };
        prob *= step;
    }
    prob
}

/// Draws an interleaving from the biased riffle shuffle by simulating drops.
pub fn draw_interleaving(p: usize, q: usize, alpha: f64, rng: &mut impl Rng) -> Result<Interleaving> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidRanking(format!("alpha {} not in [0,1]", alpha)));
    }
    let n = p + q;
    let mut a = p;
    let mut b = q;
    let mut from_a = vec![false; n];
    for slot in (0..n).rev() {
        let wa = alpha * a as f64;
        let wb = (1.0 - alpha) * b as f64;
        let total = wa + wb;
        let drop_a = if total > 0.0 {
            rng.random::<f64>() * total < wa
        } else {
            a > 0
        };
        if drop_a {
            from_a[slot] = true;
            a -= 1;
        } else {
            b -= 1;
        }
    }
    let mut ranks: Vec<usize> = (0..n).filter(|&r| from_a[r]).collect();
    ranks.extend((0..n).filter(|&r| !from_a[r]));
    Interleaving::new(Ranking::new(ranks)?, p)
}

/// Unranks the lexicographic interleaving enumeration (combinatorial number
/// system over the A block's rank set).
pub fn interleaving_from_index(p: usize, q: usize, mut idx: usize) -> Interleaving {
    let n = p + q;
    let mut combo = Vec::with_capacity(p);
    let mut v = 0usize;
    for i in 0..p {
        loop {
            let cnt = binomial(n - 1 - v, p - 1 - i) as usize;
            if idx < cnt {
                combo.push(v);
                v += 1;
                break;
            }
            idx -= cnt;
            v += 1;
        }
    }
    let mut ranks = combo.clone();
    ranks.extend((0..n).filter(|r| combo.binary_search(r).is_err()));
    Interleaving::new(Ranking::new(ranks).unwrap(), p).unwrap()
}

fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let mut u = rng.random::<f64>();
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

/// Golden-section maximization on [0,1], with an endpoint check since the
/// optimum can sit on the boundary.
fn golden_max(mut f: impl FnMut(f64) -> f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let xm = (a + b) / 2.0;
    let candidates = [0.0, xm, 1.0];
    let mut best = xm;
    let mut best_v = f64::NEG_INFINITY;
    for &x in &candidates {
        let v = f(x);
        if v > best_v {
            best_v = v;
            best = x;
        }
    }
    best
}

fn weighted_alpha_mle(taus: &[Interleaving], weights: &[f64]) -> f64 {
    let ll = |alpha: f64| -> f64 {
        let mut total = 0.0;
        for (tau, &w) in taus.iter().zip(weights) {
            if w > 0.0 {
                let p = riffle_probability(tau, alpha);
                if p <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                total += w * p.ln();
            }
        }
        total
    };
    golden_max(ll, 1e-7)
}

fn em_mixture(taus: &[Interleaving], data: &[f64], mut alphas: Vec<f64>) -> MixtureFit {
    let c = alphas.len();
    let mut weights = vec![1.0 / c as f64; c];
    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..500 {
        // component tables at current alphas
        let comps: Vec<Vec<f64>> = alphas
            .iter()
            .map(|&a| taus.iter().map(|t| riffle_probability(t, a)).collect())
            .collect();
        let mix = |t: usize| -> f64 { (0..c).map(|k| weights[k] * comps[k][t]).sum() };
        let ll: f64 = taus
            .iter()
            .enumerate()
            .filter(|(t, _)| data[*t] > 0.0)
            .map(|(t, _)| data[t] * mix(t).max(1e-300).ln())
            .sum();
        trace.push(ll);
        if ll - prev_ll < 1e-9 && prev_ll.is_finite() {
            break;
        }
        prev_ll = ll;
        // E-step: responsibilities; M-step: weights and per-component alphas
        let mut resp = vec![vec![0.0; taus.len()]; c];
        for t in 0..taus.len() {
            let m = mix(t);
            if m > 0.0 {
                for k in 0..c {
                    resp[k][t] = data[t] * weights[k] * comps[k][t] / m;
                }
            }
        }
        for k in 0..c {
            let mass: f64 = resp[k].iter().sum();
            weights[k] = mass;
            if mass > 1e-12 {
                alphas[k] = weighted_alpha_mle(taus, &resp[k]);
            }
        }
        let wsum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= wsum;
        }
    }
    MixtureFit {
        log_likelihood: *trace.last().unwrap_or(&f64::NEG_INFINITY),
        weights,
        alphas,
        trace,
    }
}

// ---------------------------------------------------------------------------
// Tree shapes
// ---------------------------------------------------------------------------

/// The structure (item-set tree) of a hierarchical model, without parameters.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TreeShape {
    Leaf(Vec<usize>),
    Split(Box<TreeShape>, Box<TreeShape>),
}

impl TreeShape {
    pub fn leaf(mut items: Vec<usize>) -> TreeShape {
        items.sort_unstable();
        TreeShape::Leaf(items)
    }

    pub fn split(left: TreeShape, right: TreeShape) -> TreeShape {
        TreeShape::Split(Box::new(left), Box::new(right))
    }

    /// Sorted item set covered by this subtree.
    pub fn items(&self) -> Vec<usize> {
        match self {
            TreeShape::Leaf(items) => items.clone(),
            TreeShape::Split(l, r) => {
                let mut v = l.items();
                v.extend(r.items());
                v.sort_unstable();
                v
            }
        }
    }

    pub fn leaf_sets(&self) -> Vec<Vec<usize>> {
        match self {
            TreeShape::Leaf(items) => vec![items.clone()],
            TreeShape::Split(l, r) => {
                let mut v = l.leaf_sets();
                v.extend(r.leaf_sets());
                v
            }
        }
    }

    /// Canonical form: children ordered so the block containing the smallest
    /// item comes first; leaf families and topmost partitions of canonical
    /// trees compare structurally.
    pub fn canonical(&self) -> TreeShape {
        match self {
            TreeShape::Leaf(items) => TreeShape::leaf(items.clone()),
            TreeShape::Split(l, r) => {
                let (lc, rc) = (l.canonical(), r.canonical());
                let (lmin, rmin) = (lc.items()[0], rc.items()[0]);
                if lmin < rmin {
                    TreeShape::split(lc, rc)
                } else {
                    TreeShape::split(rc, lc)
                }
            }
        }
    }

    /// Item sets of the two children of the root (canonically ordered), or
    /// the single leaf set for a leaf tree.
    pub fn top_partition(&self) -> Vec<Vec<usize>> {
        match self.canonical() {
            TreeShape::Leaf(items) => vec![items],
            TreeShape::Split(l, r) => vec![l.items(), r.items()],
        }
    }

    /// A chain that peels `k` items off the front at every split.
    pub fn thin_chain(n: usize, k: usize) -> TreeShape {
        ThinChainSpec::contiguous(n, k).to_shape()
    }

    /// Recursively halves the item set until blocks are `leaf_cap` or smaller.
    pub fn balanced(items: &[usize], leaf_cap: usize) -> TreeShape {
        let mut sorted = items.to_vec();
        sorted.sort_unstable();
        if sorted.len() <= leaf_cap.max(1) {
            return TreeShape::Leaf(sorted);
        }
        let mid = sorted.len() / 2;
        TreeShape::split(
            TreeShape::balanced(&sorted[..mid], leaf_cap),
            TreeShape::balanced(&sorted[mid..], leaf_cap),
        )
    }
}

/// A `k`-thin chain: each split peels off one size-`k` group, in a stated
/// insertion order; whatever remains at the end forms the last leaf.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThinChainSpec {
    pub k: usize,
    pub groups: Vec<Vec<usize>>,
}

impl ThinChainSpec {
    /// Groups `{0..k-1}, {k..2k-1}, …` in ascending order.
    pub fn contiguous(n: usize, k: usize) -> ThinChainSpec {
        let k = k.max(1);
        let groups = (0..n)
            .collect::<Vec<_>>()
            .chunks(k)
            .map(|c| c.to_vec())
            .collect();
        ThinChainSpec { k, groups }
    }

    pub fn to_shape(&self) -> TreeShape {
        assert!(!self.groups.is_empty());
        let mut shape = TreeShape::leaf(self.groups.last().unwrap().clone());
        for g in self.groups[..self.groups.len() - 1].iter().rev() {
            shape = TreeShape::split(TreeShape::leaf(g.clone()), shape);
        }
        shape
    }
}

// ---------------------------------------------------------------------------
// Hierarchical models
// ---------------------------------------------------------------------------

/// One node of a hierarchical model; see [`HierarchicalModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelNode {
    Leaf {
        items: Vec<usize>,
        factor: DenseDistribution,
    },
    Internal {
        items: Vec<usize>,
        interleaving: InterleavingDistribution,
        left: Box<ModelNode>,
        right: Box<ModelNode>,
    },
}

impl ModelNode {
    fn items(&self) -> &[usize] {
        match self {
            ModelNode::Leaf { items, .. } | ModelNode::Internal { items, .. } => items,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelNode::Leaf { items, factor } => {
                if factor.n() != items.len() {
                    return Err(Error::SizeMismatch(format!(
                        "leaf of {} items with factor over S_{}",
                        items.len(),
                        factor.n()
                    )));
                }
                if (factor.total_mass() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidRanking("unnormalized leaf factor".into()));
                }
            }
            ModelNode::Internal {
                items,
                interleaving,
                left,
                right,
            } => {
                let mut merged: Vec<usize> = left.items().to_vec();
                merged.extend_from_slice(right.items());
                merged.sort_unstable();
                if merged != *items || merged.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::SizeMismatch(
                        "children do not partition the parent's item set".into(),
                    ));
                }
                if interleaving.p() != left.items().len() || interleaving.q() != right.items().len()
                {
                    return Err(Error::SizeMismatch(
                        "interleaving shape does not match child sizes".into(),
                    ));
                }
                left.validate()?;
                right.validate()?;
            }
        }
        Ok(())
    }

    /// Positions of the left child's items within this node's (sorted) items.
    fn left_positions(&self) -> Vec<usize> {
        match self {
            ModelNode::Leaf { .. } => Vec::new(),
            ModelNode::Internal { items, left, .. } => left
                .items()
                .iter()
                .map(|it| items.binary_search(it).unwrap())
                .collect(),
        }
    }

    fn shape(&self) -> TreeShape {
        match self {
            ModelNode::Leaf { items, .. } => TreeShape::Leaf(items.clone()),
            ModelNode::Internal { left, right, .. } => TreeShape::split(left.shape(), right.shape()),
        }
    }

    fn prob(&self, rel: &Ranking) -> f64 {
        match self {
            ModelNode::Leaf { factor, .. } => factor.prob(rel),
            ModelNode::Internal {
                items,
                interleaving,
                left,
                right,
            } => {
                let part = ItemPartition::new(items.len(), &self.left_positions()).unwrap();
                let (tau, pa, pb) = decompose(rel, &part).unwrap();
                interleaving.prob(&tau) * left.prob(&pa) * right.prob(&pb)
            }
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> Ranking {
        match self {
            ModelNode::Leaf { factor, .. } => {
                let idx = sample_categorical(factor.probs(), rng);
                Ranking::from_index(factor.n(), idx as u64).unwrap()
            }
            ModelNode::Internal {
                items,
                interleaving,
                left,
                right,
            } => {
                let part = ItemPartition::new(items.len(), &self.left_positions()).unwrap();
                let tau = interleaving.sample(rng);
                let pa = left.sample(rng);
                let pb = right.sample(rng);
                recompose(&tau, &pa, &pb, &part).unwrap()
            }
        }
    }

    fn map_ranking(&self) -> Ranking {
        match self {
            ModelNode::Leaf { factor, .. } => factor.mode(),
            ModelNode::Internal {
                items,
                interleaving,
                left,
                right,
            } => {
                let part = ItemPartition::new(items.len(), &self.left_positions()).unwrap();
                let tau =
                    interleaving_from_index(interleaving.p(), interleaving.q(), interleaving.mode_index());
                recompose(&tau, &left.map_ranking(), &right.map_ranking(), &part).unwrap()
            }
        }
    }

    fn entropy(&self) -> f64 {
        match self {
            ModelNode::Leaf { factor, .. } => factor.entropy(),
            ModelNode::Internal {
                interleaving,
                left,
                right,
                ..
            } => interleaving.entropy() + left.entropy() + right.entropy(),
        }
    }

    fn condition(&self, like: &ModelNode) -> Result<ModelNode> {
        match (self, like) {
            (
                ModelNode::Leaf { items, factor },
                ModelNode::Leaf {
                    items: li,
                    factor: lf,
                },
            ) if items == li => Ok(ModelNode::Leaf {
                items: items.clone(),
                factor: factor.pointwise_condition(lf)?,
            }),
            (
                ModelNode::Internal {
                    items,
                    interleaving,
                    left,
                    right,
                },
                ModelNode::Internal {
                    items: li,
                    interleaving: lm,
                    left: ll,
                    right: lr,
                },
            ) if items == li && left.items() == ll.items() => Ok(ModelNode::Internal {
                items: items.clone(),
                interleaving: interleaving.pointwise_product(lm)?,
                left: Box::new(left.condition(ll)?),
                right: Box::new(right.condition(lr)?),
            }),
            _ => Err(Error::SizeMismatch(
                "likelihood model does not share the prior's tree".into(),
            )),
        }
    }

    /// Pairwise update at local item positions `li`, `lj` (observation:
    /// the item at `li` outranks the item at `lj`, with confidence `beta`).
    fn condition_pairwise(&self, gi: usize, gj: usize, beta: f64) -> Result<ModelNode> {
        match self {
            ModelNode::Leaf { items, factor } => {
                let li = items.binary_search(&gi).unwrap();
                let lj = items.binary_search(&gj).unwrap();
                let like = DenseDistribution::from_fn(items.len(), |s| {
                    if s.rank(li) < s.rank(lj) {
                        beta
                    } else {
                        1.0 - beta
                    }
                })?;
                Ok(ModelNode::Leaf {
                    items: items.clone(),
                    factor: factor.pointwise_condition(&like)?,
                })
            }
            ModelNode::Internal { items, interleaving, left, right } => {
                let in_left = |g: usize| left.items().binary_search(&g).is_ok();
                match (in_left(gi), in_left(gj)) {
                    (true, true) => Ok(ModelNode::Internal {
                        items: items.clone(),
                        interleaving: interleaving.clone(),
                        left: Box::new(left.condition_pairwise(gi, gj, beta)?),
                        right: right.clone(),
                    }),
                    (false, false) => Ok(ModelNode::Internal {
                        items: items.clone(),
                        interleaving: interleaving.clone(),
                        left: left.clone(),
                        right: Box::new(right.condition_pairwise(gi, gj, beta)?),
                    }),
                    _ => Err(Error::NonDecomposable { i: gi, j: gj }),
                }
            }
        }
    }
}

/// A binary hierarchy of riffle independent blocks over items `0..n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalModel {
    root: ModelNode,
}

impl HierarchicalModel {
    pub fn new(root: ModelNode) -> Result<Self> {
        root.validate()?;
        let items = root.items();
        if items.iter().copied().ne(0..items.len()) {
            return Err(Error::SizeMismatch(
                "root must cover the contiguous item set 0..n".into(),
            ));
        }
        Ok(HierarchicalModel { root })
    }

    /// A single-leaf model: one dense factor over all items.
    pub fn single(factor: DenseDistribution) -> Result<Self> {
        let items = (0..factor.n()).collect();
        HierarchicalModel::new(ModelNode::Leaf { items, factor })
    }

    /// A two-block riffle independent model `h = m * (f . g)`.
    pub fn two_block(
        part: &ItemPartition,
        m: InterleavingDistribution,
        f: DenseDistribution,
        g: DenseDistribution,
    ) -> Result<Self> {
        HierarchicalModel::new(ModelNode::Internal {
            items: (0..part.n()).collect(),
            interleaving: m,
            left: Box::new(ModelNode::Leaf {
                items: part.a_items().to_vec(),
                factor: f,
            }),
            right: Box::new(ModelNode::Leaf {
                items: part.b_items().to_vec(),
                factor: g,
            }),
        })
    }

    /// Builds a model over `shape` with all tables uniform.
    pub fn uniform(shape: &TreeShape) -> Result<Self> {
        fn build(shape: &TreeShape) -> Result<ModelNode> {
            match shape {
                TreeShape::Leaf(items) => Ok(ModelNode::Leaf {
                    items: items.clone(),
                    factor: DenseDistribution::uniform(items.len())?,
                }),
                TreeShape::Split(l, r) => {
                    let (ln, rn) = (build(l)?, build(r)?);
                    let mut items = ln.items().to_vec();
                    items.extend_from_slice(rn.items());
                    items.sort_unstable();
                    Ok(ModelNode::Internal {
                        interleaving: InterleavingDistribution::uniform(
                            ln.items().len(),
                            rn.items().len(),
                        )?,
                        items,
                        left: Box::new(ln),
                        right: Box::new(rn),
                    })
                }
            }
        }
        HierarchicalModel::new(build(shape)?)
    }

    /// Builds a model over `shape` with every table drawn from a floor-bounded
    /// random simplex (full support, so log-probabilities stay finite).
    pub fn random(shape: &TreeShape, rng: &mut impl Rng) -> Result<Self> {
        fn table(len: usize, rng: &mut impl Rng) -> Vec<f64> {
            (0..len).map(|_| 0.05 + rng.random::<f64>()).collect()
        }
        fn build(shape: &TreeShape, rng: &mut impl Rng) -> Result<ModelNode> {
            match shape {
                TreeShape::Leaf(items) => Ok(ModelNode::Leaf {
                    items: items.clone(),
                    factor: DenseDistribution::new_unnormalized(
                        items.len(),
                        table(factorial(items.len()) as usize, rng),
                    )?
                    .normalized()?,
                }),
                TreeShape::Split(l, r) => {
                    let (ln, rn) = (build(l, rng)?, build(r, rng)?);
                    let (p, q) = (ln.items().len(), rn.items().len());
                    let mut items = ln.items().to_vec();
                    items.extend_from_slice(rn.items());
                    items.sort_unstable();
                    Ok(ModelNode::Internal {
                        interleaving: InterleavingDistribution::from_table(
                            p,
                            q,
                            table(binomial(p + q, p) as usize, rng),
                        )?,
                        items,
                        left: Box::new(ln),
                        right: Box::new(rn),
                    })
                }
            }
        }
        HierarchicalModel::new(build(shape, rng)?)
    }

    /// Maximum-likelihood fit of all tables from weighted samples, with a
    /// per-cell pseudocount.
    pub fn fit_samples(shape: &TreeShape, samples: &SampleSet, smoothing: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let data: Vec<(Ranking, f64)> = samples
            .records()
            .iter()
            .map(|(r, c)| (r.clone(), *c as f64))
            .collect();
        let root = fit_node(shape, &data, smoothing)?;
        HierarchicalModel::new(root)
    }

    /// Maximum-likelihood fit from an exact distribution (the infinite-sample
    /// limit of [`HierarchicalModel::fit_samples`]).
    pub fn fit_dense(shape: &TreeShape, h: &DenseDistribution) -> Result<Self> {
        let all = crate::perm::enumerate_sn(h.n())?;
        let data: Vec<(Ranking, f64)> = all
            .into_iter()
            .zip(h.probs().iter().copied())
            .filter(|(_, w)| *w > 0.0)
            .collect();
        let root = fit_node(shape, &data, 0.0)?;
        HierarchicalModel::new(root)
    }

    pub fn n(&self) -> usize {
        self.root.items().len()
    }

    pub fn root(&self) -> &ModelNode {
        &self.root
    }

    pub fn shape(&self) -> TreeShape {
        self.root.shape()
    }

    pub fn prob(&self, s: &Ranking) -> f64 {
        self.root.prob(s)
    }

    pub fn log_prob(&self, s: &Ranking) -> f64 {
        self.prob(s).ln()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Ranking {
        self.root.sample(rng)
    }

    pub fn to_dense(&self) -> Result<DenseDistribution> {
        DenseDistribution::from_fn(self.n(), |s| self.root.prob(s))
    }

    /// Mode of the distribution, assembled factorwise: the modal interleaving
    /// composed with the children's modes. Ties resolve to the first index at
    /// each table (deterministic; coincides with the lexicographically
    /// smallest ranking when the leaf blocks are contiguous).
    pub fn map_assignment(&self) -> Ranking {
        self.root.map_ranking()
    }

    /// Entropy, summed factorwise (exact by the independence decomposition).
    pub fn entropy(&self) -> f64 {
        self.root.entropy()
    }

    /// Bayes update against a likelihood that decomposes along the same tree:
    /// every table is pointwise-multiplied and renormalized.
    pub fn condition(&self, likelihood: &HierarchicalModel) -> Result<HierarchicalModel> {
        HierarchicalModel::new(self.root.condition(&likelihood.root)?)
    }

    /// Bayes update on the observation "item `i` outranks item `j`" with
    /// likelihood `beta` (and `1-beta` for the reverse). Exact and
    /// structure-preserving only when `i` and `j` share a leaf; when they
    /// straddle a split the posterior no longer factors and this errors.
    pub fn condition_pairwise(&self, i: usize, j: usize, beta: f64) -> Result<HierarchicalModel> {
        let n = self.n();
        if i >= n || j >= n || i == j {
            return Err(Error::IndexOutOfRange {
                n,
                idx: i.max(j) as u64,
                max: n as u64,
            });
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidRanking(format!("beta {} not in [0,1]", beta)));
        }
        HierarchicalModel::new(self.root.condition_pairwise(i, j, beta)?)
    }

    /// Rebuilds the model with every internal node's interleaving replaced by
    /// `f`'s output (e.g. swapping fitted tables for parametric fits).
    pub fn map_interleavings(
        &self,
        f: &dyn Fn(&InterleavingDistribution) -> Result<InterleavingDistribution>,
    ) -> Result<HierarchicalModel> {
        fn walk(
            node: &ModelNode,
            f: &dyn Fn(&InterleavingDistribution) -> Result<InterleavingDistribution>,
        ) -> Result<ModelNode> {
            Ok(match node {
                ModelNode::Leaf { items, factor } => ModelNode::Leaf {
                    items: items.clone(),
                    factor: factor.clone(),
                },
                ModelNode::Internal {
                    items,
                    interleaving,
                    left,
                    right,
                } => ModelNode::Internal {
                    items: items.clone(),
                    interleaving: f(interleaving)?,
                    left: Box::new(walk(left, f)?),
                    right: Box::new(walk(right, f)?),
                },
            })
        }
        HierarchicalModel::new(walk(&self.root, f)?)
    }

    /// Flattens the hierarchy into a single d-way decomposition over its
    /// leaf sets.
    pub fn flatten_to_dway(&self) -> Result<DwayDecomposition> {
        let leaf_sets = self.shape().leaf_sets();
        let n = self.n() as u64;
        let mut count = factorial(n as usize);
        for set in &leaf_sets {
            count /= factorial(set.len());
        }
        let cap = factorial(max_enum_n());
        if count > cap {
            return Err(Error::TableCap {
                what: format!("{}-way interleaving", leaf_sets.len()),
                size: count,
                cap,
            });
        }
        // leaf index owning each item
        let mut owner = vec![0usize; self.n()];
        for (l, set) in leaf_sets.iter().enumerate() {
            for &it in set {
                owner[it] = l;
            }
        }
        let mut words = Vec::with_capacity(count as usize);
        enumerate_words(
            &leaf_sets.iter().map(|s| s.len()).collect::<Vec<_>>(),
            &mut vec![0u8; self.n()],
            0,
            &mut words,
        );
        let word_probs: Vec<f64> = words
            .iter()
            .map(|w| multiway_word_prob(&self.root, w, 0))
            .collect();
        let leaf_factors = collect_leaf_factors(&self.root);
        Ok(DwayDecomposition {
            leaf_sets,
            words,
            word_probs,
            leaf_factors,
            owner,
        })
    }
}

fn fit_node(shape: &TreeShape, data: &[(Ranking, f64)], smoothing: f64) -> Result<ModelNode> {
    match shape {
        TreeShape::Leaf(items) => {
            let sz = items.len();
            let mut probs = vec![smoothing; factorial(sz) as usize];
            for (r, w) in data {
                probs[r.rank_index() as usize] += w;
            }
            Ok(ModelNode::Leaf {
                items: items.clone(),
                factor: DenseDistribution::new_unnormalized(sz, probs)?.normalized()?,
            })
        }
        TreeShape::Split(l, r) => {
            let (li, ri) = (l.items(), r.items());
            let mut items = li.clone();
            items.extend(ri.iter().copied());
            items.sort_unstable();
            let a_local: Vec<usize> = li.iter().map(|it| items.binary_search(it).unwrap()).collect();
            let part = ItemPartition::new(items.len(), &a_local)?;
            let mut m_counts = vec![smoothing; binomial(items.len(), part.p()) as usize];
            let mut left_data = Vec::with_capacity(data.len());
            let mut right_data = Vec::with_capacity(data.len());
            for (rk, w) in data {
                let (tau, pa, pb) = decompose(rk, &part)?;
                m_counts[tau.index()] += w;
                left_data.push((pa, *w));
                right_data.push((pb, *w));
            }
            Ok(ModelNode::Internal {
                interleaving: InterleavingDistribution::from_weights(
                    part.p(),
                    part.q(),
                    m_counts,
                    InterleavingKind::Table,
                )?,
                items,
                left: Box::new(fit_node(l, &left_data, smoothing)?),
                right: Box::new(fit_node(r, &right_data, smoothing)?),
            })
        }
    }
}

fn collect_leaf_factors(node: &ModelNode) -> Vec<DenseDistribution> {
    match node {
        ModelNode::Leaf { factor, .. } => vec![factor.clone()],
        ModelNode::Internal { left, right, .. } => {
            let mut v = collect_leaf_factors(left);
            v.extend(collect_leaf_factors(right));
            v
        }
    }
}

fn enumerate_words(sizes: &[usize], cur: &mut Vec<u8>, pos: usize, out: &mut Vec<Vec<u8>>) {
    if pos == cur.len() {
        out.push(cur.clone());
        return;
    }
    let mut used = vec![0usize; sizes.len()];
    for &c in cur[..pos].iter() {
        used[c as usize] += 1;
    }
    for l in 0..sizes.len() {
        if used[l] < sizes[l] {
            cur[pos] = l as u8;
            enumerate_words(sizes, cur, pos + 1, out);
        }
    }
}

fn count_leaves(node: &ModelNode) -> usize {
    match node {
        ModelNode::Leaf { .. } => 1,
        ModelNode::Internal { left, right, .. } => count_leaves(left) + count_leaves(right),
    }
}

/// Probability of a multi-way rank-to-leaf assignment word under the tree:
/// the product over internal nodes of the induced binary interleaving's
/// probability. `base` is the index of this subtree's first leaf in the
/// in-order leaf list.
fn multiway_word_prob(node: &ModelNode, word: &[u8], base: u8) -> f64 {
    match node {
        ModelNode::Leaf { .. } => 1.0,
        ModelNode::Internal {
            interleaving,
            left,
            right,
            ..
        } => {
            let split = base + count_leaves(left) as u8;
            let a_ranks: Vec<usize> = word
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c >= base && c < split)
                .map(|(r, _)| r)
                .collect();
            let b_ranks: Vec<usize> = word
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c >= split)
                .map(|(r, _)| r)
                .collect();
            let mut ranks = a_ranks.clone();
            ranks.extend_from_slice(&b_ranks);
            let tau = Interleaving::new(Ranking::new(ranks).unwrap(), a_ranks.len()).unwrap();
            let left_word: Vec<u8> = a_ranks.iter().map(|&r| word[r]).collect();
            let right_word: Vec<u8> = b_ranks.iter().map(|&r| word[r]).collect();
            interleaving.prob(&tau)
                * multiway_word_prob(left, &left_word, base)
                * multiway_word_prob(right, &right_word, split)
        }
    }
}

/// A single-level d-way decomposition: leaf sets, a joint table over
/// rank-to-leaf assignment words, and per-leaf relative ranking factors.
#[derive(Clone, Debug)]
pub struct DwayDecomposition {
    pub leaf_sets: Vec<Vec<usize>>,
    /// each word assigns every rank (position) to a leaf index
    pub words: Vec<Vec<u8>>,
    pub word_probs: Vec<f64>,
    pub leaf_factors: Vec<DenseDistribution>,
    owner: Vec<usize>,
}

impl DwayDecomposition {
    pub fn n(&self) -> usize {
        self.owner.len()
    }

    pub fn to_dense(&self) -> Result<DenseDistribution> {
        let mut index: std::collections::HashMap<&[u8], f64> = std::collections::HashMap::new();
        for (w, &p) in self.words.iter().zip(&self.word_probs) {
            index.insert(w.as_slice(), p);
        }
        DenseDistribution::from_fn(self.n(), |s| {
            let inv = s.inverse();
            let word: Vec<u8> = (0..self.n())
                .map(|r| self.owner[inv.rank(r)] as u8)
                .collect();
            let mut prob = *index.get(word.as_slice()).unwrap_or(&0.0);
            if prob == 0.0 {
                return 0.0;
            }
            for (set, factor) in self.leaf_sets.iter().zip(&self.leaf_factors) {
                prob *= factor.prob(&crate::perm::relative_rank_map(s, set));
            }
            prob
        })
    }
}

// ---------------------------------------------------------------------------
// Two-block MLE (RiffleSplit) and embeddings
// ---------------------------------------------------------------------------

/// Maximum-likelihood split of an exact distribution: the marginal
/// distributions of the interleaving and of the two relative rankings.
pub fn riffle_split_mle(
    h: &DenseDistribution,
    part: &ItemPartition,
) -> Result<(InterleavingDistribution, DenseDistribution, DenseDistribution)> {
    if h.n() != part.n() {
        return Err(Error::SizeMismatch(format!(
            "split: h over S_{} vs partition of {}",
            h.n(),
            part.n()
        )));
    }
    let mut m = vec![0.0; binomial(part.n(), part.p()) as usize];
    let mut f = vec![0.0; factorial(part.p()) as usize];
    let mut g = vec![0.0; factorial(part.q()) as usize];
    for (idx, &w) in h.probs().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let s = Ranking::from_index(h.n(), idx as u64)?;
        let (tau, pa, pb) = decompose(&s, part)?;
        m[tau.index()] += w;
        f[pa.rank_index() as usize] += w;
        g[pb.rank_index() as usize] += w;
    }
    Ok((
        InterleavingDistribution::from_weights(part.p(), part.q(), m, InterleavingKind::Table)?,
        DenseDistribution::new_unnormalized(part.p(), f)?.normalized()?,
        DenseDistribution::new_unnormalized(part.q(), g)?.normalized()?,
    ))
}

/// Count-based MLE split of a sample set (Eqs. of the two-block fit).
pub fn riffle_split_mle_samples(
    samples: &SampleSet,
    part: &ItemPartition,
) -> Result<(InterleavingDistribution, DenseDistribution, DenseDistribution)> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut m = vec![0.0; binomial(part.n(), part.p()) as usize];
    let mut f = vec![0.0; factorial(part.p()) as usize];
    let mut g = vec![0.0; factorial(part.q()) as usize];
    for (s, c) in samples.records() {
        let (tau, pa, pb) = decompose(s, part)?;
        m[tau.index()] += *c as f64;
        f[pa.rank_index() as usize] += *c as f64;
        g[pb.rank_index() as usize] += *c as f64;
    }
    Ok((
        InterleavingDistribution::from_weights(part.p(), part.q(), m, InterleavingKind::Table)?,
        DenseDistribution::new_unnormalized(part.p(), f)?.normalized()?,
        DenseDistribution::new_unnormalized(part.q(), g)?.normalized()?,
    ))
}

/// Embeds factors `(f, g)` as the product distribution on `S_{p+q}` supported
/// on stacked rankings (A on ranks `0..p`, B on `p..n`, both in block order).
pub fn embed_product(f: &DenseDistribution, g: &DenseDistribution) -> Result<DenseDistribution> {
    let (p, q) = (f.n(), g.n());
    let part = ItemPartition::new(p + q, &(0..p).collect::<Vec<_>>())?;
    let id_tau = interleaving_from_index(p, q, 0);
    debug_assert_eq!(id_tau.ranking(), &Ranking::identity(p + q));
    let mut probs = vec![0.0; factorial(p + q) as usize];
    for (fi, &fp) in f.probs().iter().enumerate() {
        if fp == 0.0 {
            continue;
        }
        let pa = Ranking::from_index(p, fi as u64)?;
        for (gi, &gp) in g.probs().iter().enumerate() {
            if gp == 0.0 {
                continue;
            }
            let pb = Ranking::from_index(q, gi as u64)?;
            let s = recompose(&id_tau, &pa, &pb, &part)?;
            probs[s.rank_index() as usize] = fp * gp;
        }
    }
    DenseDistribution::new_unnormalized(p + q, probs)
}

/// Embeds an interleaving distribution as a distribution on `S_{p+q}`.
pub fn embed_interleaving(m: &InterleavingDistribution) -> Result<DenseDistribution> {
    let mut probs = vec![0.0; factorial(m.n()) as usize];
    for (i, tau) in enumerate_interleavings(m.p(), m.q())?.iter().enumerate() {
        probs[tau.ranking().rank_index() as usize] = m.prob_at(i);
    }
    DenseDistribution::new_unnormalized(m.n(), probs)
}
