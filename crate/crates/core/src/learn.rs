//! Structure discovery: which item sets are riffle independent of which?
//!
//! The evidence is the tensor of triplet mutual informations
//! `I(sigma(i); sigma(j) < sigma(k))` — the mutual information between one
//! item's absolute rank and the relative order of two others. Across a riffle
//! independent split every such "crossing" term is exactly zero, so the sum
//! of crossing terms is an objective whose minimum identifies the split, and
//! recursing on the two sides grows a full hierarchy. A normalized variant
//! removes the bias toward lopsided cuts when the block size is unknown, and
//! an anchor-based search avoids enumerating subsets.

use rand::Rng;

use crate::dense::{DenseDistribution, SampleSet};
use crate::model::{HierarchicalModel, TreeShape};
use crate::perm::{binomial, factorial, relative_rank_map, Ranking};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Triplet mutual information
// ---------------------------------------------------------------------------

/// Estimated `I(sigma(i); sigma(j) < sigma(k))` for every ordered triplet of
/// distinct items. Entries with repeated indices are stored as zero and never
/// enter any objective.
#[derive(Clone, Debug)]
pub struct TripletMITensor {
    n: usize,
    values: Vec<f64>,
    /// Total sample weight the tensor was estimated from.
    pub weight: f64,
    /// Pseudocount added to each joint-table cell.
    pub smoothing: f64,
}

impl TripletMITensor {
    /// Plug-in estimate from counted samples. `smoothing` is the pseudocount
    /// added to each of the `2n` joint cells; `None` uses `1/m`.
    pub fn estimate(samples: &SampleSet, smoothing: Option<f64>) -> Result<TripletMITensor> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let m = samples.total() as f64;
        let s = smoothing.unwrap_or(1.0 / m);
        let weighted: Vec<(Ranking, f64)> = samples
            .records()
            .iter()
            .map(|(r, c)| (r.clone(), *c as f64))
            .collect();
        Ok(Self::from_weighted(samples.n(), &weighted, s))
    }

    /// Exact tensor of a fully known distribution (no smoothing).
    pub fn exact(h: &DenseDistribution) -> TripletMITensor {
        let n = h.n();
        let weighted: Vec<(Ranking, f64)> = (0..factorial(n))
            .map(|idx| Ranking::from_index(n, idx).unwrap())
            .map(|r| {
                let p = h.prob(&r);
                (r, p)
            })
            .filter(|(_, p)| *p > 0.0)
            .collect();
        Self::from_weighted(n, &weighted, 0.0)
    }

    pub(crate) fn from_weighted(
        n: usize,
        records: &[(Ranking, f64)],
        smoothing: f64,
    ) -> TripletMITensor {
        // joint[(i,j,k)] is the n x 2 table of (rank of i, 1[sigma(j)<sigma(k)])
        let mut joint = vec![0.0f64; n * n * n * n * 2];
        let mut weight = 0.0;
        for (r, w) in records {
            weight += w;
            let ranks = r.as_slice();
            for i in 0..n {
                let row = ranks[i] * 2;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    for k in 0..n {
                        if k == i || k == j {
                            continue;
                        }
                        let b = usize::from(ranks[j] < ranks[k]);
                        joint[(((i * n) + j) * n + k) * (n * 2) + row + b] += w;
                    }
                }
            }
        }
        let mut values = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if i == j || i == k || j == k {
                        continue;
                    }
                    let base = (((i * n) + j) * n + k) * (n * 2);
                    let table = &joint[base..base + n * 2];
                    values[(i * n + j) * n + k] = plugin_mi(table, n, 2, smoothing).max(0.0);
                }
            }
        }
        TripletMITensor {
            n,
            values,
            weight,
            smoothing,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `I(sigma(i); sigma(j) < sigma(k))`; zero whenever indices repeat.
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(i * self.n + j) * self.n + k]
    }

    /// Smallest internal value over distinct triplets of `items`; `+inf` when
    /// `items` has fewer than three elements (connectivity holds vacuously).
    pub fn min_internal(&self, items: &[usize]) -> f64 {
        let mut best = f64::INFINITY;
        for &i in items {
            for &j in items {
                for &k in items {
                    if i != j && i != k && j < k {
                        best = best.min(self.get(i, j, k));
                    }
                }
            }
        }
        best
    }
}

/// Both blocks have every internal triplet strictly above `eps`
/// (third-order strong connectivity, the detectability condition).
pub fn is_third_order_connected(t: &TripletMITensor, blocks: &[&[usize]], eps: f64) -> bool {
    blocks.iter().all(|b| t.min_internal(b) > eps)
}

/// Plug-in mutual information of a `rows x cols` contingency table with a
/// pseudocount added to every cell.
fn plugin_mi(table: &[f64], rows: usize, cols: usize, smoothing: f64) -> f64 {
    let total: f64 = table.iter().sum::<f64>() + smoothing * (rows * cols) as f64;
    if total <= 0.0 {
        return 0.0;
    }
    let mut px = vec![0.0; rows];
    let mut py = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            let p = (table[r * cols + c] + smoothing) / total;
            px[r] += p;
            py[c] += p;
        }
    }
    let mut mi = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let p = (table[r * cols + c] + smoothing) / total;
            if p > 0.0 && px[r] > 0.0 && py[c] > 0.0 {
                mi += p * (p / (px[r] * py[c])).ln();
            }
        }
    }
    mi
}

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

/// Number of crossing triplets for a `k` / `n-k` split: the probe item on one
/// side, a distinct ordered pair on the other.
pub fn cross_triplet_count(n: usize, k: usize) -> usize {
    let q = n - k;
    k * q * q.saturating_sub(1) + q * k * k.saturating_sub(1)
}

fn complement(n: usize, a: &[usize]) -> Vec<usize> {
    let mut in_a = vec![false; n];
    for &i in a {
        in_a[i] = true;
    }
    (0..n).filter(|&i| !in_a[i]).collect()
}

/// Sum of `I_{i;j,k}` with the probe `i` in `probe` and the ordered pair in
/// `pair_side` (distinct `j != k`).
fn cross_sum(t: &TripletMITensor, probe: &[usize], pair_side: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in probe {
        for &j in pair_side {
            for &k in pair_side {
                if j != k {
                    total += t.get(i, j, k);
                }
            }
        }
    }
    total
}

/// Sum of internal triplets of `items` (all three indices inside, distinct).
fn internal_sum(t: &TripletMITensor, items: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in items {
        for &j in items {
            for &k in items {
                if i != j && i != k && j != k {
                    total += t.get(i, j, k);
                }
            }
        }
    }
    total
}

/// Total triplet mutual information crossing the cut `A | complement`.
/// Zero exactly when no third-order evidence against riffled independence
/// of the split exists.
pub fn objective_cross(t: &TripletMITensor, a: &[usize]) -> f64 {
    assert!(!a.is_empty() && a.len() < t.n(), "split must be proper");
    let b = complement(t.n(), a);
    cross_sum(t, a, &b) + cross_sum(t, &b, a)
}

/// Normalized-cut variant: each side's crossing mass is divided by crossing
/// plus internal mass, which penalizes lopsided cuts whose small side carries
/// no internal evidence. A `0/0` ratio contributes zero.
pub fn objective_balanced(t: &TripletMITensor, a: &[usize]) -> f64 {
    assert!(!a.is_empty() && a.len() < t.n(), "split must be proper");
    let b = complement(t.n(), a);
    let term = |probe: &[usize], pair: &[usize]| {
        let cross = cross_sum(t, probe, pair);
        let den = cross + internal_sum(t, probe);
        if den == 0.0 {
            0.0
        } else {
            cross / den
        }
    };
    term(a, &b) + term(&b, a)
}

/// Which objective scores candidate splits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectiveKind {
    Cross,
    Balanced,
}

impl ObjectiveKind {
    pub fn score(self, t: &TripletMITensor, a: &[usize]) -> f64 {
        match self {
            ObjectiveKind::Cross => objective_cross(t, a),
            ObjectiveKind::Balanced => objective_balanced(t, a),
        }
    }
}

/// `I(sigma(i)<sigma(j); sigma(k)<sigma(l))` from counted samples — mutual
/// information between two pairwise-comparison events.
pub fn quad_mi(
    samples: &SampleSet,
    i: usize,
    j: usize,
    k: usize,
    l: usize,
    smoothing: Option<f64>,
) -> f64 {
    let weighted: Vec<(Ranking, f64)> = samples
        .records()
        .iter()
        .map(|(r, c)| (r.clone(), *c as f64))
        .collect();
    let s = smoothing.unwrap_or(1.0 / samples.total().max(1) as f64);
    quad_mi_weighted(&weighted, i, j, k, l, s)
}

fn quad_mi_weighted(
    records: &[(Ranking, f64)],
    i: usize,
    j: usize,
    k: usize,
    l: usize,
    smoothing: f64,
) -> f64 {
    let mut table = [0.0f64; 4];
    for (r, w) in records {
        let x = usize::from(r.rank(i) < r.rank(j));
        let y = usize::from(r.rank(k) < r.rank(l));
        table[x * 2 + y] += w;
    }
    plugin_mi(&table, 2, 2, smoothing).max(0.0)
}

/// Sum of quadruplet terms with both pair events crossing the cut:
/// `(i,j)` inside `A`, `(k,l)` in the complement. Defined as zero when either
/// side has fewer than two items (a singleton side has no pair event).
pub fn objective_quad(samples: &SampleSet, a: &[usize], smoothing: Option<f64>) -> f64 {
    let weighted: Vec<(Ranking, f64)> = samples
        .records()
        .iter()
        .map(|(r, c)| (r.clone(), *c as f64))
        .collect();
    let s = smoothing.unwrap_or(1.0 / samples.total().max(1) as f64);
    objective_quad_weighted(samples.n(), &weighted, a, s)
}

/// Exact quadruplet objective of a fully known distribution.
pub fn objective_quad_exact(h: &DenseDistribution, a: &[usize]) -> f64 {
    let n = h.n();
    let weighted: Vec<(Ranking, f64)> = (0..factorial(n))
        .map(|idx| Ranking::from_index(n, idx).unwrap())
        .map(|r| {
            let p = h.prob(&r);
            (r, p)
        })
        .filter(|(_, p)| *p > 0.0)
        .collect();
    objective_quad_weighted(n, &weighted, a, 0.0)
}

fn objective_quad_weighted(
    n: usize,
    records: &[(Ranking, f64)],
    a: &[usize],
    smoothing: f64,
) -> f64 {
    let b = complement(n, a);
    if a.len() < 2 || b.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for &i in a {
        for &j in a {
            if i >= j {
                continue;
            }
            for &k in &b {
                for &l in &b {
                    if k >= l {
                        continue;
                    }
                    total += quad_mi_weighted(records, i, j, k, l, smoothing);
                }
            }
        }
    }
    total
}

/// Mutual information between the two relative rankings of a split — the
/// necessary-but-insufficient independence test the triplet objective
/// strengthens (an interleaving that depends on a side's relative ranking is
/// invisible here).
pub fn relative_rank_mi(h: &DenseDistribution, part: &crate::perm::ItemPartition) -> f64 {
    let (p, q) = (part.p(), part.q());
    let (fp, fq) = (factorial(p) as usize, factorial(q) as usize);
    let mut table = vec![0.0f64; fp * fq];
    for idx in 0..factorial(h.n()) {
        let r = Ranking::from_index(h.n(), idx).unwrap();
        let w = h.prob(&r);
        if w == 0.0 {
            continue;
        }
        let pa = relative_rank_map(&r, part.a_items());
        let pb = relative_rank_map(&r, part.b_items());
        table[pa.rank_index() as usize * fq + pb.rank_index() as usize] += w;
    }
    plugin_mi(&table, fp, fq, 0.0).max(0.0)
}

// ---------------------------------------------------------------------------
// Partition search
// ---------------------------------------------------------------------------

fn lex_combinations(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        // advance to the next combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

const SUBSET_BUDGET: u64 = 1_000_000;

/// Global minimum of the crossing objective over all `k`-subsets, ties going
/// to the lexicographically smallest subset.
pub fn exhaustive_partition(t: &TripletMITensor, k: usize) -> Result<(Vec<usize>, f64)> {
    let n = t.n();
    if k == 0 || k >= n {
        return Err(Error::SizeMismatch(format!(
            "subset size {} is not a proper split of {} items",
            k, n
        )));
    }
    let count = binomial(n, k);
    if count > SUBSET_BUDGET {
        return Err(Error::TableCap {
            what: "k-subset search".into(),
            size: count,
            cap: SUBSET_BUDGET,
        });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    lex_combinations(n, k, |a| {
        let v = objective_cross(t, a);
        if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
            best = Some((a.to_vec(), v));
        }
    });
    Ok(best.unwrap())
}

/// Anchor-based partition search. Item 0 is the first anchor; every other
/// item serves in turn as the second. For each anchor pair the remaining
/// items are sorted by `I(sigma(x); sigma(a1) < sigma(a2))` — near zero means
/// `x` sits on the other side of the cut from the anchors. Candidate splits
/// are read off both ways (the low-information prefix as one block, or the
/// anchors plus the high-information suffix as one block) and the best
/// candidate under the objective wins: crossing objective when the block
/// size `k` is known, the balanced objective over all sizes otherwise.
///
/// Returns the designated block (size `k` when known) and its score.
pub fn anchors_partition(t: &TripletMITensor, k: Option<usize>) -> Result<(Vec<usize>, f64)> {
    let n = t.n();
    if n < 3 {
        return Err(Error::SizeMismatch(format!(
            "anchor search needs at least 3 items, got {}",
            n
        )));
    }
    if let Some(k) = k {
        if k == 0 || k >= n {
            return Err(Error::SizeMismatch(format!(
                "subset size {} is not a proper split of {} items",
                k, n
            )));
        }
    }
    let objective = match k {
        Some(_) => ObjectiveKind::Cross,
        None => ObjectiveKind::Balanced,
    };
    let a1 = 0usize;
    let mut best: Option<(Vec<usize>, f64)> = None;
    let consider = |a: Vec<usize>, best: &mut Option<(Vec<usize>, f64)>| {
        let v = objective.score(t, &a);
        let better = match best {
            None => true,
            Some((ba, bv)) => v < *bv || (v == *bv && a < *ba),
        };
        if better {
            *best = Some((a, v));
        }
    };
    for a2 in 1..n {
        let mut xs: Vec<usize> = (0..n).filter(|&x| x != a1 && x != a2).collect();
        xs.sort_by(|&x, &y| {
            t.get(x, a1, a2)
                .partial_cmp(&t.get(y, a1, a2))
                .unwrap()
                .then(x.cmp(&y))
        });
        let sizes: Vec<usize> = match k {
            Some(k) => vec![k],
            None => (1..n).collect(),
        };
        for s in sizes {
            // the s lowest-information items as the far block
            if s <= xs.len() {
                let mut a: Vec<usize> = xs[..s].to_vec();
                a.sort_unstable();
                consider(a, &mut best);
            }
            // the anchors plus the s-2 highest-information items as one block
            if s >= 2 && s <= n - 1 {
                let take = s - 2;
                if take <= xs.len() && n - s >= 1 {
                    let mut a = vec![a1, a2];
                    a.extend_from_slice(&xs[xs.len() - take..]);
                    a.sort_unstable();
                    consider(a, &mut best);
                }
            }
        }
    }
    Ok(best.unwrap())
}

// ---------------------------------------------------------------------------
// Hierarchy learning
// ---------------------------------------------------------------------------

/// How splits are chosen while growing a hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub enum LearnMode {
    /// Free recursive partitioning (block sizes decided by the objective).
    General,
    /// Peel off a block of exactly `k` items at every level.
    ThinChain { k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchMethod {
    Exhaustive,
    Anchors,
}

#[derive(Clone, Debug)]
pub struct LearnOptions {
    pub mode: LearnMode,
    pub method: SearchMethod,
    /// Objective for general exhaustive splits. Thin-chain splits always use
    /// the crossing objective (the size is fixed); anchor search uses the
    /// balanced objective whenever the size is unknown. Note the balanced
    /// ratio of a block with fewer than three items is pinned near 1 (no
    /// internal triplets), so the crossing objective is the default.
    pub objective: ObjectiveKind,
    /// Item sets of this size or smaller become leaves.
    pub leaf_cap: usize,
    /// Pseudocount for triplet tables; `None` uses `1/m` per node.
    pub smoothing: Option<f64>,
    /// Smoothing for fitted leaf factors and interleaving tables.
    pub fit_smoothing: f64,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            mode: LearnMode::General,
            method: SearchMethod::Exhaustive,
            objective: ObjectiveKind::Cross,
            leaf_cap: 2,
            smoothing: None,
            fit_smoothing: 0.0,
        }
    }
}

/// Objective value recorded at one internal node of a learned tree.
#[derive(Clone, Debug)]
pub struct NodeScore {
    /// Item set being split (original labels, sorted).
    pub items: Vec<usize>,
    /// The chosen block (original labels, sorted).
    pub block: Vec<usize>,
    pub objective: f64,
}

/// A hierarchy learned from data: the tree, a model fit to it, and the
/// per-node objective values.
#[derive(Clone, Debug)]
pub struct LearnedHierarchy {
    pub shape: TreeShape,
    pub model: HierarchicalModel,
    pub scores: Vec<NodeScore>,
    pub options: LearnOptions,
}

fn split_local(
    t: &TripletMITensor,
    opts: &LearnOptions,
) -> Result<(Vec<usize>, f64)> {
    let n = t.n();
    match (&opts.mode, opts.method) {
        (LearnMode::ThinChain { k }, SearchMethod::Exhaustive) => {
            exhaustive_partition(t, (*k).min(n - 1))
        }
        (LearnMode::ThinChain { k }, SearchMethod::Anchors) => {
            if n < 3 {
                exhaustive_partition(t, (*k).min(n - 1))
            } else {
                anchors_partition(t, Some((*k).min(n - 1)))
            }
        }
        (LearnMode::General, SearchMethod::Exhaustive) => {
            // enumerate each unordered split once: A always contains item 0
            let mut best: Option<(Vec<usize>, f64)> = None;
            for mask in 0u64..(1 << (n - 1)) {
                let a: Vec<usize> = std::iter::once(0)
                    .chain((1..n).filter(|&i| mask >> (i - 1) & 1 == 1))
                    .collect();
                if a.len() == n {
                    continue;
                }
                let v = opts.objective.score(t, &a);
                if best.as_ref().map_or(true, |(ba, bv)| {
                    v < *bv || (v == *bv && a < *ba)
                }) {
                    best = Some((a, v));
                }
            }
            Ok(best.unwrap())
        }
        (LearnMode::General, SearchMethod::Anchors) => {
            if n < 3 {
                return Ok((vec![0], opts.objective.score(t, &[0])));
            }
            anchors_partition(t, None)
        }
    }
}

fn build_tree(
    items: &[usize],
    records: &[(Ranking, f64)],
    opts: &LearnOptions,
    scores: &mut Vec<NodeScore>,
) -> Result<TreeShape> {
    let n = items.len();
    let stop = match &opts.mode {
        LearnMode::General => n <= opts.leaf_cap.max(1),
        LearnMode::ThinChain { k } => n <= opts.leaf_cap.max(*k),
    };
    if stop {
        return Ok(TreeShape::leaf(items.to_vec()));
    }
    let weight: f64 = records.iter().map(|(_, w)| w).sum();
    // counted samples (weight = m > 1) get the default 1/m pseudocount;
    // exact probabilities (weight = 1 up to rounding) get none
    let smoothing = opts.smoothing.unwrap_or_else(|| {
        if weight > 1.5 {
            1.0 / weight
        } else {
            0.0
        }
    });
    let t = TripletMITensor::from_weighted(n, records, smoothing);
    let (block_local, value) = split_local(&t, opts)?;
    let rest_local = complement(n, &block_local);
    let block: Vec<usize> = block_local.iter().map(|&i| items[i]).collect();
    let rest: Vec<usize> = rest_local.iter().map(|&i| items[i]).collect();
    scores.push(NodeScore {
        items: items.to_vec(),
        block: block.clone(),
        objective: value,
    });
    let restrict = |local: &[usize]| -> Vec<(Ranking, f64)> {
        records
            .iter()
            .map(|(r, w)| (relative_rank_map(r, local), *w))
            .collect()
    };
    let left = build_tree(&block, &restrict(&block_local), opts, scores)?;
    let right = build_tree(&rest, &restrict(&rest_local), opts, scores)?;
    Ok(TreeShape::split(left, right))
}

/// Learn a full hierarchy from counted samples: recursively split item sets
/// (re-estimating the triplet tensor from each set's relative rankings),
/// stop at `leaf_cap`, then fit the model parameters to the learned tree.
pub fn learn_hierarchy(samples: &SampleSet, opts: &LearnOptions) -> Result<LearnedHierarchy> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let items: Vec<usize> = (0..samples.n()).collect();
    let records: Vec<(Ranking, f64)> = samples
        .records()
        .iter()
        .map(|(r, c)| (r.clone(), *c as f64))
        .collect();
    let mut scores = Vec::new();
    let shape = build_tree(&items, &records, opts, &mut scores)?;
    let model = HierarchicalModel::fit_samples(&shape, samples, opts.fit_smoothing)?;
    Ok(LearnedHierarchy {
        shape,
        model,
        scores,
        options: opts.clone(),
    })
}

/// Learn a hierarchy from exact probabilities instead of samples (no
/// estimation noise; tensors are exact, smoothing defaults to zero).
pub fn learn_hierarchy_exact(h: &DenseDistribution, opts: &LearnOptions) -> Result<LearnedHierarchy> {
    let n = h.n();
    let items: Vec<usize> = (0..n).collect();
    let records: Vec<(Ranking, f64)> = (0..factorial(n))
        .map(|idx| Ranking::from_index(n, idx).unwrap())
        .map(|r| {
            let p = h.prob(&r);
            (r, p)
        })
        .filter(|(_, p)| *p > 0.0)
        .collect();
    let mut scores = Vec::new();
    let shape = build_tree(&items, &records, opts, &mut scores)?;
    let model = HierarchicalModel::fit_dense(&shape, h)?;
    Ok(LearnedHierarchy {
        shape,
        model,
        scores,
        options: opts.clone(),
    })
}

// ---------------------------------------------------------------------------
// Agreement and stability
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgreementMeasure {
    /// Identical canonical trees.
    ExactTree,
    /// Same unordered partition at the root.
    TopPartition,
    /// Same family of leaf sets (tree shape above them may differ).
    LeafSets,
}

pub fn structure_agreement(a: &TreeShape, b: &TreeShape, measure: AgreementMeasure) -> bool {
    match measure {
        AgreementMeasure::ExactTree => a.canonical() == b.canonical(),
        AgreementMeasure::TopPartition => {
            sorted_sets(a.top_partition()) == sorted_sets(b.top_partition())
        }
        AgreementMeasure::LeafSets => sorted_sets(a.leaf_sets()) == sorted_sets(b.leaf_sets()),
    }
}

fn sorted_sets(mut sets: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for s in &mut sets {
        s.sort_unstable();
    }
    sets.sort();
    sets
}

/// Stability fractions for one resample size.
#[derive(Clone, Debug)]
pub struct BootstrapEntry {
    pub size: usize,
    /// Fraction of resamples whose learned tree matched the reference exactly.
    pub exact: f64,
    /// Fraction matching the reference's topmost partition.
    pub top_partition: f64,
    /// Fraction recovering the reference's leaf-set family.
    pub leaf_sets: f64,
    /// Fractions for caller-supplied named predicates.
    pub named: Vec<(String, f64)>,
}

#[derive(Clone, Debug)]
pub struct BootstrapReport {
    /// Resamples per size.
    pub b: usize,
    /// Tree learned from the full data, the agreement reference.
    pub reference: TreeShape,
    pub entries: Vec<BootstrapEntry>,
}

/// Draw `size` rankings with replacement from the empirical distribution.
fn resample(samples: &SampleSet, size: usize, rng: &mut impl Rng) -> SampleSet {
    let mut cum: Vec<u64> = Vec::with_capacity(samples.records().len());
    let mut acc = 0u64;
    for (_, c) in samples.records() {
        acc += c;
        cum.push(acc);
    }
    let drawn = (0..size).map(|_| {
        let u = rng.random_range(0..acc);
        let pos = cum.partition_point(|&c| c <= u);
        samples.records()[pos].0.clone()
    });
    SampleSet::from_rankings(samples.n(), drawn).unwrap()
}

/// Re-learn the hierarchy on `b` bootstrap resamples at each size and report
/// how often each kind of structure agreement with the full-data tree holds.
pub fn bootstrap_stability(
    samples: &SampleSet,
    b: usize,
    sizes: &[usize],
    opts: &LearnOptions,
    predicates: &[(&str, &dyn Fn(&TreeShape) -> bool)],
    rng: &mut impl Rng,
) -> Result<BootstrapReport> {
    if b == 0 {
        return Err(Error::EmptySamples);
    }
    let reference = learn_hierarchy(samples, opts)?.shape;
    let mut entries = Vec::new();
    for &size in sizes {
        let mut exact = 0usize;
        let mut top = 0usize;
        let mut leaves = 0usize;
        let mut named = vec![0usize; predicates.len()];
        for _ in 0..b {
            let shape = learn_hierarchy(&resample(samples, size, rng), opts)?.shape;
            exact += usize::from(structure_agreement(&shape, &reference, AgreementMeasure::ExactTree));
            top += usize::from(structure_agreement(
                &shape,
                &reference,
                AgreementMeasure::TopPartition,
            ));
            leaves += usize::from(structure_agreement(
                &shape,
                &reference,
                AgreementMeasure::LeafSets,
            ));
            for (slot, (_, pred)) in named.iter_mut().zip(predicates) {
                *slot += usize::from(pred(&shape));
            }
        }
        let frac = |c: usize| c as f64 / b as f64;
        entries.push(BootstrapEntry {
            size,
            exact: frac(exact),
            top_partition: frac(top),
            leaf_sets: frac(leaves),
            named: predicates
                .iter()
                .zip(&named)
                .map(|((name, _), &c)| (name.to_string(), frac(c)))
                .collect(),
        });
    }
    Ok(BootstrapReport {
        b,
        reference,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InterleavingDistribution;
    use crate::perm::{enumerate_sn, recompose, Interleaving, ItemPartition};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Riffle independent distribution on the given split with random
    /// strictly positive factors.
    fn random_two_block(
        n: usize,
        a: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> (HierarchicalModel, DenseDistribution) {
        let part = ItemPartition::new(n, a).unwrap();
        let shape = TreeShape::split(
            TreeShape::leaf(a.to_vec()),
            TreeShape::leaf(part.b_items().to_vec()),
        );
        let model = HierarchicalModel::random(&shape, rng).unwrap();
        let dense = model.to_dense().unwrap();
        (model, dense)
    }

    #[test]
    fn uniform_samples_give_zero_tensor() {
        let samples =
            SampleSet::from_rankings(4, enumerate_sn(4).unwrap()).unwrap();
        let t = TripletMITensor::estimate(&samples, Some(0.0)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    assert!(t.get(i, j, k).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn repeated_indices_are_zero_and_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, dense) = random_two_block(4, &[0, 1], &mut rng);
        let t = TripletMITensor::exact(&dense);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(t.get(i, i, j), 0.0);
                assert_eq!(t.get(i, j, i), 0.0);
                assert_eq!(t.get(i, j, j), 0.0);
            }
        }
    }

    #[test]
    fn cross_triplets_vanish_under_riffled_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (_, dense) = random_two_block(6, &[0, 1], &mut rng);
        let t = TripletMITensor::exact(&dense);
        let b = [2, 3, 4, 5];
        for &i in &[0, 1] {
            for &j in &b {
                for &k in &b {
                    if j != k {
                        assert!(t.get(i, j, k) < 1e-12, "I({};{},{})", i, j, k);
                    }
                }
            }
        }
        for &i in &b {
            assert!(t.get(i, 0, 1) < 1e-12);
            assert!(t.get(i, 1, 0) < 1e-12);
        }
        assert!(objective_cross(&t, &[0, 1]) < 1e-12);
    }

    #[test]
    fn balanced_objective_vanishes_at_true_split_with_interior() {
        // both blocks need internal triplets for the ratios to vanish
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let (_, dense) = random_two_block(6, &[0, 1, 2], &mut rng);
        let t = TripletMITensor::exact(&dense);
        assert!(t.min_internal(&[0, 1, 2]) > 1e-6);
        assert!(t.min_internal(&[3, 4, 5]) > 1e-6);
        assert!(objective_balanced(&t, &[0, 1, 2]) < 1e-10);
        // a singleton block's ratio is pinned at 1 whenever anything crosses,
        // so the true three-item split is the balanced argmin
        for wrong in [vec![0], vec![3], vec![0, 1], vec![0, 3, 4]] {
            assert!(objective_balanced(&t, &wrong) > 0.5, "A={:?}", wrong);
        }
    }

    #[test]
    fn cross_count_convention() {
        // n=3, |A|=1: brute enumeration leaves exactly two valid triplets
        assert_eq!(cross_triplet_count(3, 1), 2);
        assert_eq!(cross_triplet_count(8, 3), 3 * 5 * 4 + 5 * 3 * 2);
        // all-equal tensor: objective = c * count
        let n = 5;
        let c = 0.3;
        let mut t = TripletMITensor::exact(&DenseDistribution::uniform(n).unwrap());
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if i != j && i != k && j != k {
                        t.values[(i * n + j) * n + k] = c;
                    }
                }
            }
        }
        for k in 1..n {
            let a: Vec<usize> = (0..k).collect();
            assert_abs_diff_eq!(
                objective_cross(&t, &a),
                c * cross_triplet_count(n, k) as f64,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn balanced_objective_arithmetic() {
        let n = 6;
        let c = 0.2;
        let mut t = TripletMITensor::exact(&DenseDistribution::uniform(n).unwrap());
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if i != j && i != k && j != k {
                        t.values[(i * n + j) * n + k] = c;
                    }
                }
            }
        }
        // the ratios are scale free: every singleton scores exactly 1
        // (crossing term saturates, the other side contributes nothing)
        assert_abs_diff_eq!(objective_balanced(&t, &[0]), 1.0, epsilon = 1e-12);
        // and the three-way split's value follows from the triplet counts:
        // 18/(18+6) per side
        assert_abs_diff_eq!(
            objective_balanced(&t, &[0, 1, 2]),
            1.5,
            epsilon = 1e-12
        );
        // all-zero tensor: every ratio is 0/0, guarded to zero
        let z = TripletMITensor::exact(&DenseDistribution::uniform(4).unwrap());
        assert_eq!(objective_balanced(&z, &[0]), 0.0);
        assert_eq!(objective_balanced(&z, &[0, 1]), 0.0);
    }

    #[test]
    fn quad_objective_basics() {
        // uniform: zero
        let samples = SampleSet::from_rankings(4, enumerate_sn(4).unwrap()).unwrap();
        assert!(objective_quad(&samples, &[0, 1], Some(0.0)) < 1e-12);
        // riffle independent split: zero
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, dense) = random_two_block(5, &[0, 1], &mut rng);
        assert!(objective_quad_exact(&dense, &[0, 1]) < 1e-12);
        // singleton side: defined as zero
        assert_eq!(objective_quad_exact(&dense, &[0]), 0.0);
        // symmetry of the underlying quantity
        let recs: Vec<(Ranking, f64)> = samples
            .records()
            .iter()
            .map(|(r, c)| (r.clone(), *c as f64))
            .collect();
        let a = quad_mi_weighted(&recs, 0, 1, 2, 3, 0.0);
        let b = quad_mi_weighted(&recs, 2, 3, 0, 1, 0.0);
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
    }

    /// Distribution on S_4 where the relative rankings of {1,2} and {3,4} are
    /// independent and uniform, but the interleaving copies the relative
    /// ranking of the first block: AABB when the block is in order, BBAA
    /// otherwise. Relative ranks are independent, yet the split is not riffle
    /// independent.
    fn interleaving_leak_example() -> DenseDistribution {
        let part = ItemPartition::new(4, &[0, 1]).unwrap();
        let aabb = Interleaving::new(Ranking::new(vec![0, 1, 2, 3]).unwrap(), 2).unwrap();
        let bbaa = Interleaving::new(Ranking::new(vec![2, 3, 0, 1]).unwrap(), 2).unwrap();
        let mut probs = vec![0.0; 24];
        for pa_idx in 0..2u64 {
            for pb_idx in 0..2u64 {
                let pa = Ranking::from_index(2, pa_idx).unwrap();
                let pb = Ranking::from_index(2, pb_idx).unwrap();
                let tau = if pa_idx == 0 { &aabb } else { &bbaa };
                let s = recompose(tau, &pa, &pb, &part).unwrap();
                probs[s.rank_index() as usize] += 0.25;
            }
        }
        DenseDistribution::new(4, probs).unwrap()
    }

    #[test]
    fn relative_rank_independence_is_insufficient() {
        let h = interleaving_leak_example();
        let part = ItemPartition::new(4, &[0, 1]).unwrap();
        // relative rankings are exactly independent
        assert!(relative_rank_mi(&h, &part) < 1e-12);
        // and the quadruplet objective sees nothing
        assert!(objective_quad_exact(&h, &[0, 1]) < 1e-12);
        // but the triplet objective catches the dependent interleaving
        let t = TripletMITensor::exact(&h);
        assert!(objective_cross(&t, &[0, 1]) > 0.1);
    }

    #[test]
    fn exhaustive_recovers_true_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = [1usize, 3];
        let (_, dense) = random_two_block(6, &truth, &mut rng);
        let t = TripletMITensor::exact(&dense);
        assert!(is_third_order_connected(
            &t,
            &[&truth, &[0, 2, 4, 5]],
            1e-6
        ));
        let (a, v) = exhaustive_partition(&t, 2).unwrap();
        assert_eq!(a, truth.to_vec());
        assert!(v < 1e-12);
        // complement size also lands on the true cut
        let (b, _) = exhaustive_partition(&t, 4).unwrap();
        assert_eq!(b, vec![0, 2, 4, 5]);
    }

    #[test]
    fn exhaustive_edge_cases() {
        let t = TripletMITensor::exact(&DenseDistribution::uniform(2).unwrap());
        let (a, v) = exhaustive_partition(&t, 1).unwrap();
        assert_eq!(a, vec![0]); // lex tie-break
        assert_eq!(v, 0.0);
        assert!(exhaustive_partition(&t, 0).is_err());
        assert!(exhaustive_partition(&t, 2).is_err());
    }

    #[test]
    fn anchors_recovers_true_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = [0usize, 2, 5];
        let (_, dense) = random_two_block(6, &truth, &mut rng);
        let t = TripletMITensor::exact(&dense);
        assert!(is_third_order_connected(&t, &[&truth, &[1, 3, 4]], 1e-6));
        let (a, v) = anchors_partition(&t, Some(3)).unwrap();
        assert_eq!(a, truth.to_vec());
        assert!(v < 1e-12);
        // unknown size, balanced objective
        let (a, v) = anchors_partition(&t, None).unwrap();
        assert!(v < 1e-10);
        let found = if a.contains(&0) { a } else { complement(6, &a) };
        assert_eq!(found, truth.to_vec());
    }

    #[test]
    fn anchors_on_uniform_data_scores_zero() {
        let samples = SampleSet::from_rankings(5, enumerate_sn(5).unwrap()).unwrap();
        let t = TripletMITensor::estimate(&samples, Some(0.0)).unwrap();
        let (_, v) = anchors_partition(&t, None).unwrap();
        assert!(v.abs() < 1e-10);
        assert!(anchors_partition(
            &TripletMITensor::exact(&DenseDistribution::uniform(2).unwrap()),
            None
        )
        .is_err());
    }

    #[test]
    fn anchors_agrees_with_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for &a_set in &[[0usize, 1], [2, 4], [1, 5]] {
            let (model, _) = random_two_block(6, &a_set, &mut rng);
            let mut draw = ChaCha8Rng::seed_from_u64(99);
            let samples = SampleSet::from_rankings(
                6,
                (0..3000).map(|_| model.sample(&mut draw)),
            )
            .unwrap();
            let t = TripletMITensor::estimate(&samples, None).unwrap();
            let (ex, _) = exhaustive_partition(&t, 2).unwrap();
            let (an, _) = anchors_partition(&t, Some(2)).unwrap();
            assert_eq!(ex, an);
        }
    }

    #[test]
    fn learns_thin_chain_from_exact_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let true_shape = TreeShape::thin_chain(6, 1);
        let model = HierarchicalModel::random(&true_shape, &mut rng).unwrap();
        let dense = model.to_dense().unwrap();
        let opts = LearnOptions {
            mode: LearnMode::ThinChain { k: 1 },
            leaf_cap: 1,
            ..LearnOptions::default()
        };
        let learned = learn_hierarchy_exact(&dense, &opts).unwrap();
        assert!(structure_agreement(
            &learned.shape,
            &true_shape,
            AgreementMeasure::ExactTree
        ));
        // the fitted model reproduces the distribution it was learned from
        let refit = learned.model.to_dense().unwrap();
        assert!(dense.max_abs_diff(&refit).unwrap() < 1e-10);
    }

    #[test]
    fn learns_general_hierarchy_from_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let true_shape = TreeShape::split(
            TreeShape::leaf(vec![0, 3]),
            TreeShape::split(TreeShape::leaf(vec![1, 4]), TreeShape::leaf(vec![2, 5])),
        );
        let model = HierarchicalModel::random(&true_shape, &mut rng).unwrap();
        let mut draw = ChaCha8Rng::seed_from_u64(9);
        let samples = SampleSet::from_rankings(
            6,
            (0..20000).map(|_| model.sample(&mut draw)),
        )
        .unwrap();
        let learned = learn_hierarchy(&samples, &LearnOptions::default()).unwrap();
        // three mutually independent pairs admit several equally valid
        // binary trees; the leaf family is what must be recovered
        assert!(
            structure_agreement(&learned.shape, &true_shape, AgreementMeasure::LeafSets),
            "learned {:?}",
            learned.shape.canonical()
        );
        assert_eq!(learned.scores.len(), 2);
        for s in &learned.scores {
            assert!(s.objective < 0.05, "node {:?} scored {}", s.items, s.objective);
        }
    }

    #[test]
    fn learning_is_invariant_to_sample_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let model =
            HierarchicalModel::random(&TreeShape::thin_chain(5, 1), &mut rng).unwrap();
        let rankings: Vec<Ranking> = (0..2000).map(|_| model.sample(&mut rng)).collect();
        let forward = SampleSet::from_rankings(5, rankings.clone()).unwrap();
        let mut reversed = rankings;
        reversed.reverse();
        let backward = SampleSet::from_rankings(5, reversed).unwrap();
        let a = learn_hierarchy(&forward, &LearnOptions::default()).unwrap();
        let b = learn_hierarchy(&backward, &LearnOptions::default()).unwrap();
        assert_eq!(a.shape.canonical(), b.shape.canonical());
    }

    #[test]
    fn agreement_measures() {
        let a = TreeShape::split(
            TreeShape::split(TreeShape::leaf(vec![0, 1]), TreeShape::leaf(vec![2, 3])),
            TreeShape::leaf(vec![4, 5]),
        );
        // same leaf family, different nesting
        let b = TreeShape::split(
            TreeShape::leaf(vec![0, 1]),
            TreeShape::split(TreeShape::leaf(vec![2, 3]), TreeShape::leaf(vec![4, 5])),
        );
        assert!(structure_agreement(&a, &a, AgreementMeasure::ExactTree));
        assert!(structure_agreement(&a, &a, AgreementMeasure::TopPartition));
        assert!(structure_agreement(&a, &a, AgreementMeasure::LeafSets));
        assert!(!structure_agreement(&a, &b, AgreementMeasure::ExactTree));
        assert!(!structure_agreement(&a, &b, AgreementMeasure::TopPartition));
        assert!(structure_agreement(&a, &b, AgreementMeasure::LeafSets));
        // child order is immaterial
        let flipped = TreeShape::split(
            TreeShape::split(TreeShape::leaf(vec![4, 5]), TreeShape::leaf(vec![2, 3])),
            TreeShape::leaf(vec![0, 1]),
        );
        assert!(structure_agreement(&b, &flipped, AgreementMeasure::ExactTree));
    }

    #[test]
    fn bootstrap_degenerate_and_fractions() {
        // a single distinct ranking: every resample is identical, so every
        // agreement fraction is 1
        let one = SampleSet::new(
            4,
            vec![(Ranking::from_one_based(&[2, 1, 4, 3]).unwrap(), 50)],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let report = bootstrap_stability(
            &one,
            1,
            &[50],
            &LearnOptions::default(),
            &[("has_4_items", &|s: &TreeShape| s.items().len() == 4)],
            &mut rng,
        )
        .unwrap();
        assert_eq!(report.entries[0].exact, 1.0);
        assert_eq!(report.entries[0].leaf_sets, 1.0);
        assert_eq!(report.entries[0].named[0], ("has_4_items".to_string(), 1.0));

        // fractions stay in [0,1] and the run is deterministic under a seed
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = HierarchicalModel::random(&TreeShape::thin_chain(4, 1), &mut rng).unwrap();
        let samples =
            SampleSet::from_rankings(4, (0..500).map(|_| model.sample(&mut rng))).unwrap();
        let run = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            bootstrap_stability(&samples, 5, &[100, 500], &LearnOptions::default(), &[], &mut r)
                .unwrap()
        };
        let r1 = run(7);
        let r2 = run(7);
        for (e1, e2) in r1.entries.iter().zip(&r2.entries) {
            assert_eq!(e1.exact, e2.exact);
            assert_eq!(e1.top_partition, e2.top_partition);
            assert_eq!(e1.leaf_sets, e2.leaf_sets);
            for f in [e1.exact, e1.top_partition, e1.leaf_sets] {
                assert!((0.0..=1.0).contains(&f));
            }
            assert!(e1.leaf_sets >= e1.exact);
        }
    }

    #[test]
    fn true_split_is_unique_minimum_when_connected() {
        // with both blocks strongly connected, every wrong subset scores
        // strictly positive while the true one scores zero
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let truth = vec![0usize, 1, 2];
        let (_, dense) = random_two_block(6, &truth, &mut rng);
        let t = TripletMITensor::exact(&dense);
        let eps = t
            .min_internal(&truth)
            .min(t.min_internal(&[3, 4, 5]));
        assert!(eps > 1e-4, "blocks not strongly connected: {}", eps);
        for k in 1..6 {
            lex_combinations(6, k, |a| {
                let v = objective_cross(&t, a);
                let is_truth = a == truth.as_slice() || a == [3, 4, 5];
                if is_truth {
                    assert!(v < 1e-12);
                } else {
                    assert!(v > 1e-8, "subset {:?} scored {}", a, v);
                }
            });
        }
    }

    #[test]
    fn mixture_interleaving_fit_metadata_kept() {
        // smoke check that learned interleavings remain table-kind
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let model = HierarchicalModel::random(&TreeShape::thin_chain(4, 2), &mut rng).unwrap();
        let samples =
            SampleSet::from_rankings(4, (0..400).map(|_| model.sample(&mut rng))).unwrap();
        let learned = learn_hierarchy(
            &samples,
            &LearnOptions {
                mode: LearnMode::ThinChain { k: 2 },
                ..LearnOptions::default()
            },
        )
        .unwrap();
        let _ = InterleavingDistribution::uniform(2, 2).unwrap();
        assert_eq!(learned.model.n(), 4);
    }
}
