//! Fourier analysis on the symmetric group at small `n`.
//!
//! Irreducible representations are Young's orthogonal representation (YOR),
//! built from standard Young tableaux; frequency levels are integer
//! partitions of `n` in descending lexicographic order (a refinement of
//! dominance). The transform convention is
//!
//! ```text
//! h_hat[lambda] = sum_sigma h(sigma) rho_lambda(sigma)
//! h(sigma)      = (1/n!) sum_lambda d_lambda Tr(rho_lambda(sigma)^T h_hat[lambda])
//! ```
//!
//! so the trivial coefficient of a probability distribution is the scalar 1
//! and `FT(m * h) = m_hat . h_hat` levelwise.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dense::DenseDistribution;
use crate::model::{embed_interleaving, embed_product, InterleavingDistribution};
use crate::perm::{factorial, max_enum_n, ItemPartition, Ranking};
use crate::{Error, Result};

/// Cap on `n` for full transforms (`n!`-step sweeps); tighter than the dense
/// cap because every sweep touches all of `S_n`.
pub fn fourier_cap() -> usize {
    max_enum_n().min(7)
}

// ---------------------------------------------------------------------------
// Partitions
// ---------------------------------------------------------------------------

/// An integer partition of `n`, labeling one irreducible frequency level.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartitionLabel(Vec<usize>);

impl PartitionLabel {
    pub fn new(parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty()
            || parts.windows(2).any(|w| w[0] < w[1])
            || parts.iter().any(|&p| p == 0)
        {
            return Err(Error::InvalidRanking(format!(
                "not a partition: {:?}",
                parts
            )));
        }
        Ok(PartitionLabel(parts))
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.iter().sum()
    }

    /// Partitions of `n-1` reachable by removing one corner cell, ordered by
    /// the row the corner is removed from (top first). This order matches
    /// the block order of YOR restricted to `S_{n-1}`.
    pub fn corners_removed(&self) -> Vec<PartitionLabel> {
        let mut out = Vec::new();
        for r in 0..self.0.len() {
            let removable = self.0[r] > *self.0.get(r + 1).unwrap_or(&0);
            if removable {
                let mut parts = self.0.clone();
                parts[r] -= 1;
                if parts[r] == 0 {
                    parts.remove(r);
                }
                out.push(PartitionLabel(parts));
            }
        }
        out
    }
}

impl std::fmt::Display for PartitionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({})",
            self.0
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
    }
}

/// All partitions of `n` in descending lexicographic order:
/// `(n), (n-1,1), (n-2,2), (n-2,1,1), …, (1,…,1)`.
pub fn partitions_of(n: usize) -> Vec<PartitionLabel> {
    fn rec(rem: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<PartitionLabel>) {
        if rem == 0 {
            out.push(PartitionLabel(cur.clone()));
            return;
        }
        for part in (1..=rem.min(max)).rev() {
            cur.push(part);
            rec(rem - part, part, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, &mut Vec::new(), &mut out);
    out
}

// ---------------------------------------------------------------------------
// Small dense matrices
// ---------------------------------------------------------------------------

/// Row-major dense matrix, sized for irreducible blocks (tiny at desk scale).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Mat, w: f64) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += w * b;
        }
    }

    pub fn scale(&mut self, w: f64) {
        for a in &mut self.data {
            *a *= w;
        }
    }

    /// `Tr(self . other^T)`: the elementwise dot product.
    pub fn trace_dot(&self, other: &Mat) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.abs()).fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Young's orthogonal representation
// ---------------------------------------------------------------------------

type Tableau = Vec<Vec<usize>>;

/// Standard Young tableaux of `lambda`, ordered recursively by the row of
/// the corner holding the largest entry (top rows first). With this order
/// the restriction of YOR to `S_{n-1}` is block diagonal, with blocks in
/// [`PartitionLabel::corners_removed`] order.
fn standard_tableaux(lambda: &[usize]) -> Vec<Tableau> {
    let n: usize = lambda.iter().sum();
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for r in 0..lambda.len() {
        let removable = lambda[r] > *lambda.get(r + 1).unwrap_or(&0);
        if !removable {
            continue;
        }
        let mut sub = lambda.to_vec();
        sub[r] -= 1;
        if sub[r] == 0 {
            sub.remove(r);
        }
        for mut t in standard_tableaux(&sub) {
            if t.len() <= r {
                t.push(Vec::new());
            }
            t[r].push(n);
            out.push(t);
        }
    }
    out
}

/// One irreducible representation: dimension plus YOR matrices for the
/// adjacent transpositions.
#[derive(Clone, Debug)]
pub struct Irrep {
    pub label: PartitionLabel,
    pub dim: usize,
    /// `generators[k]` represents the transposition of items `k` and `k+1`
    /// (0-based), i.e. `s_{k+1}` in 1-based notation.
    pub generators: Vec<Mat>,
}

/// All irreducibles of `S_n`, in [`partitions_of`] order.
#[derive(Clone, Debug)]
pub struct IrrepTable {
    pub n: usize,
    pub irreps: Vec<Irrep>,
}

impl IrrepTable {
    pub fn build(n: usize) -> IrrepTable {
        let irreps = partitions_of(n)
            .into_iter()
            .map(|label| {
                let tableaux = standard_tableaux(label.parts());
                let dim = tableaux.len();
                let index: HashMap<&Tableau, usize> =
                    tableaux.iter().enumerate().map(|(i, t)| (t, i)).collect();
                let mut generators = Vec::with_capacity(n.saturating_sub(1));
                for k in 1..n {
                    // transposition (k, k+1), 1-based entries
                    let mut g = Mat::zeros(dim, dim);
                    for (ti, t) in tableaux.iter().enumerate() {
                        let (r1, c1) = find_entry(t, k);
                        let (r2, c2) = find_entry(t, k + 1);
                        let d = (c2 as f64 - r2 as f64) - (c1 as f64 - r1 as f64);
                        g.set(ti, ti, 1.0 / d);
                        if r1 != r2 && c1 != c2 {
                            let mut swapped = t.clone();
                            swapped[r1][c1] = k + 1;
                            swapped[r2][c2] = k;
                            let tj = index[&swapped];
                            g.set(ti, tj, (1.0 - 1.0 / (d * d)).sqrt());
                        }
                    }
                    generators.push(g);
                }
                Irrep {
                    label,
                    dim,
                    generators,
                }
            })
            .collect();
        IrrepTable { n, irreps }
    }

    pub fn level_index(&self, label: &PartitionLabel) -> Option<usize> {
        self.irreps.iter().position(|ir| &ir.label == label)
    }

    /// `rho_lambda(s)` by factoring `s` into adjacent transpositions.
    pub fn matrix(&self, level: usize, s: &Ranking) -> Mat {
        let ir = &self.irreps[level];
        let mut rho = Mat::identity(ir.dim);
        // bubble-sort s to the identity; each position swap right-multiplies
        // by a generator, so s = gen[k_m] ∘ … ∘ gen[k_1] and
        // rho(s) = G[k_m] … G[k_1]
        let mut ranks = s.as_slice().to_vec();
        let mut swaps = Vec::new();
        loop {
            let mut done = true;
            for k in 0..ranks.len().saturating_sub(1) {
                if ranks[k] > ranks[k + 1] {
                    ranks.swap(k, k + 1);
                    swaps.push(k);
                    done = false;
                }
            }
            if done {
                break;
            }
        }
        for &k in swaps.iter().rev() {
            rho = rho.mul(&ir.generators[k]);
        }
        rho
    }
}

fn find_entry(t: &Tableau, v: usize) -> (usize, usize) {
    for (r, row) in t.iter().enumerate() {
        if let Some(c) = row.iter().position(|&x| x == v) {
            return (r, c);
        }
    }
    unreachable!("entry {} missing from tableau", v)
}

/// `rho_lambda(s)` as a standalone call (builds the table; prefer
/// [`IrrepTable::matrix`] in loops).
pub fn yor_matrix(label: &PartitionLabel, s: &Ranking) -> Result<Mat> {
    if label.n() != s.n() {
        return Err(Error::SizeMismatch(format!(
            "partition of {} vs ranking of {}",
            label.n(),
            s.n()
        )));
    }
    let table = IrrepTable::build(s.n());
    let idx = table.level_index(label).unwrap();
    Ok(table.matrix(idx, s))
}

// ---------------------------------------------------------------------------
// Plain-changes sweep
// ---------------------------------------------------------------------------

/// Visits all of `S_n` in Steinhaus–Johnson–Trotter order. The callback gets
/// each ranking and the generator index taken to reach it (`None` first), so
/// callers can maintain `rho(sigma)` with one sparse multiplication per step.
fn sjt_sweep(n: usize, mut visit: impl FnMut(&Ranking, Option<usize>)) {
    let mut vals: Vec<usize> = (0..n).collect();
    let mut dirs: Vec<isize> = vec![-1; n]; // -1 = pointing left
    visit(&Ranking::new(vals.clone()).unwrap(), None);
    loop {
        // largest mobile value: points at a smaller neighbor
        let mut mobile: Option<(usize, usize)> = None; // (position, value)
        for (i, &v) in vals.iter().enumerate() {
            let j = i as isize + dirs[v];
            if j < 0 || j >= n as isize || vals[j as usize] > v {
                continue;
            }
            if mobile.map(|(_, mv)| v > mv).unwrap_or(true) {
                mobile = Some((i, v));
            }
        }
        let Some((i, v)) = mobile else { break };
        let j = (i as isize + dirs[v]) as usize;
        vals.swap(i, j);
        for w in v + 1..n {
            dirs[w] = -dirs[w];
        }
        visit(&Ranking::new(vals.clone()).unwrap(), Some(i.min(j)));
    }
}

// ---------------------------------------------------------------------------
// Fourier coefficients and transforms
// ---------------------------------------------------------------------------

/// Fourier coefficient matrices, one per kept frequency level, in
/// [`partitions_of`] order (possibly a truncated subset).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierCoefficients {
    pub n: usize,
    pub levels: Vec<(PartitionLabel, Mat)>,
}

impl FourierCoefficients {
    pub fn level(&self, label: &PartitionLabel) -> Option<&Mat> {
        self.levels
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, m)| m)
    }

    pub fn is_full(&self) -> bool {
        let all = partitions_of(self.n);
        all.len() == self.levels.len()
            && all
                .iter()
                .zip(&self.levels)
                .all(|(a, (b, _))| a == b)
    }

    /// Keeps only the levels needed for order-`s` marginals (first part of
    /// the partition at least `n - s`).
    pub fn truncate(&self, order: usize) -> FourierCoefficients {
        FourierCoefficients {
            n: self.n,
            levels: self
                .levels
                .iter()
                .filter(|(l, _)| l.parts()[0] + order >= self.n)
                .cloned()
                .collect(),
        }
    }

    /// Fills in any missing levels with zero matrices (the projection of a
    /// truncated transform back into the full coefficient space).
    pub fn zero_completed(&self) -> FourierCoefficients {
        let table = IrrepTable::build(self.n);
        let levels = table
            .irreps
            .iter()
            .map(|ir| {
                let m = self
                    .level(&ir.label)
                    .cloned()
                    .unwrap_or_else(|| Mat::zeros(ir.dim, ir.dim));
                (ir.label.clone(), m)
            })
            .collect();
        FourierCoefficients { n: self.n, levels }
    }

    pub fn max_abs_diff(&self, other: &FourierCoefficients) -> Result<f64> {
        if self.n != other.n || self.levels.len() != other.levels.len() {
            return Err(Error::LevelMismatch(format!(
                "{} levels over S_{} vs {} over S_{}",
                self.levels.len(),
                self.n,
                other.levels.len(),
                other.n
            )));
        }
        let mut worst = 0.0f64;
        for ((la, ma), (lb, mb)) in self.levels.iter().zip(&other.levels) {
            if la != lb {
                return Err(Error::LevelMismatch(format!("{} vs {}", la, lb)));
            }
            worst = worst.max(ma.max_abs_diff(mb));
        }
        Ok(worst)
    }
}

/// Direct-definition Fourier transform via one plain-changes sweep.
pub fn fourier_transform(h: &DenseDistribution) -> Result<FourierCoefficients> {
    let n = h.n();
    if n > fourier_cap() {
        return Err(Error::EnumerationCap {
            n,
            cap: fourier_cap(),
        });
    }
    let table = IrrepTable::build(n);
    let mut rhos: Vec<Mat> = table.irreps.iter().map(|ir| Mat::identity(ir.dim)).collect();
    let mut coeffs: Vec<Mat> = table.irreps.iter().map(|ir| Mat::zeros(ir.dim, ir.dim)).collect();
    sjt_sweep(n, |s, gen| {
        if let Some(k) = gen {
            for (rho, ir) in rhos.iter_mut().zip(&table.irreps) {
                *rho = rho.mul(&ir.generators[k]);
            }
        }
        let w = h.probs()[s.rank_index() as usize];
        if w != 0.0 {
            for (c, rho) in coeffs.iter_mut().zip(&rhos) {
                c.add_scaled(rho, w);
            }
        }
    });
    Ok(FourierCoefficients {
        n,
        levels: table
            .irreps
            .iter()
            .map(|ir| ir.label.clone())
            .zip(coeffs)
            .collect(),
    })
}

/// Inverse transform to a raw value table indexed by `rank_index`. The input
/// must carry all levels (zero-complete a truncation first).
pub fn inverse_fourier_values(f: &FourierCoefficients) -> Result<Vec<f64>> {
    let n = f.n;
    if n > fourier_cap() {
        return Err(Error::EnumerationCap {
            n,
            cap: fourier_cap(),
        });
    }
    if !f.is_full() {
        let missing: Vec<String> = partitions_of(n)
            .iter()
            .filter(|l| f.level(l).is_none())
            .map(|l| l.to_string())
            .collect();
        return Err(Error::MissingLevels {
            order: n,
            missing: missing.join(" "),
        });
    }
    let table = IrrepTable::build(n);
    let mut rhos: Vec<Mat> = table.irreps.iter().map(|ir| Mat::identity(ir.dim)).collect();
    let mut out = vec![0.0; factorial(n) as usize];
    let scale = 1.0 / factorial(n) as f64;
    sjt_sweep(n, |s, gen| {
        if let Some(k) = gen {
            for (rho, ir) in rhos.iter_mut().zip(&table.irreps) {
                *rho = rho.mul(&ir.generators[k]);
            }
        }
        let mut v = 0.0;
        for (rho, (_, c)) in rhos.iter().zip(&f.levels) {
            v += rho.rows as f64 * rho.trace_dot(c);
        }
        out[s.rank_index() as usize] = v * scale;
    });
    Ok(out)
}

/// Inverse transform to a distribution; tiny negative round-off is clamped.
pub fn inverse_fourier_transform(f: &FourierCoefficients) -> Result<DenseDistribution> {
    let vals = inverse_fourier_values(f)?;
    let clamped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
    DenseDistribution::new_unnormalized(f.n, clamped)
}

/// Levelwise matrix product: the transform of the convolution `m * h` when
/// the inputs are `FT(m)` and `FT(h)`.
pub fn convolve_fourier(
    m: &FourierCoefficients,
    h: &FourierCoefficients,
) -> Result<FourierCoefficients> {
    if m.n != h.n || m.levels.len() != h.levels.len() {
        return Err(Error::LevelMismatch(format!(
            "convolve_fourier: S_{} ({} levels) vs S_{} ({})",
            m.n,
            m.levels.len(),
            h.n,
            h.levels.len()
        )));
    }
    let levels = m
        .levels
        .iter()
        .zip(&h.levels)
        .map(|((la, ma), (lb, mb))| {
            if la != lb {
                return Err(Error::LevelMismatch(format!("{} vs {}", la, lb)));
            }
            Ok((la.clone(), ma.mul(mb)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FourierCoefficients { n: m.n, levels })
}

/// Levelwise transpose: the transform of the dual `sigma -> m(sigma^{-1})`.
pub fn dual_transpose(f: &FourierCoefficients) -> FourierCoefficients {
    FourierCoefficients {
        n: f.n,
        levels: f
            .levels
            .iter()
            .map(|(l, m)| (l.clone(), m.transpose()))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// RiffleHat: transform of biased riffle shuffles by dynamic programming
// ---------------------------------------------------------------------------

/// Block-diagonal embedding by the branching rule: the transform over `S_m`
/// of `f↑(sigma) = f(sigma restricted) [sigma(m)=m]`, assembled from the
/// coefficients of `f` over `S_{m-1}`.
fn embed_coefficients(prev: &FourierCoefficients, table: &IrrepTable) -> FourierCoefficients {
    let levels = table
        .irreps
        .iter()
        .map(|ir| {
            let mut m = Mat::zeros(ir.dim, ir.dim);
            let mut off = 0;
            for mu in ir.label.corners_removed() {
                let block = prev.level(&mu).expect("missing branching level");
                for r in 0..block.rows {
                    for c in 0..block.cols {
                        m.set(off + r, off + c, block.get(r, c));
                    }
                }
                off += block.rows;
            }
            debug_assert_eq!(off, ir.dim);
            (ir.label.clone(), m)
        })
        .collect();
    FourierCoefficients {
        n: table.n,
        levels,
    }
}

/// The cycle `(i, i-1, …, j)` in 1-based notation, as a ranking of `i`
/// items: `j` maps to `i` and everything in `(j, i]` shifts down by one.
fn dp_cycle(i: usize, j: usize) -> Ranking {
    let mut ranks: Vec<usize> = (0..i).collect();
    for t in j..i {
        ranks[t] = t - 1; // 0-based: items j..i-1 shift down
    }
    ranks[j - 1] = i - 1;
    Ranking::new(ranks).unwrap()
}

/// Fourier transform of the biased riffle shuffle `m^alpha_{p,q}` computed
/// by the Pascal's-triangle dynamic program, one level of `S_i` at a time.
pub fn rifflehat(p: usize, q: usize, alpha: f64) -> Result<FourierCoefficients> {
    let n = p + q;
    if n > fourier_cap() {
        return Err(Error::EnumerationCap {
            n,
            cap: fourier_cap(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidRanking(format!("alpha {} not in [0,1]", alpha)));
    }
    let mut prev: Vec<Option<FourierCoefficients>> = vec![None; p + 1];
    for i in 1..=n {
        let table = IrrepTable::build(i);
        let identity_ft = FourierCoefficients {
            n: i,
            levels: table
                .irreps
                .iter()
                .map(|ir| (ir.label.clone(), Mat::identity(ir.dim)))
                .collect(),
        };
        let jlo = p.saturating_sub(n - i);
        let jhi = i.min(p);
        let mut curr: Vec<Option<FourierCoefficients>> = vec![None; p + 1];
        for j in jlo..=jhi {
            if j == 0 || j == i {
                curr[j] = Some(identity_ft.clone());
                continue;
            }
            // drop weights at deck size i with j cards from A
            let wa = alpha * j as f64;
            let wb = (1.0 - alpha) * (i - j) as f64;
            let (wa, wb) = if wa + wb > 0.0 {
                (wa / (wa + wb), wb / (wa + wb))
            } else {
                (0.0, 1.0) // unreachable for 0 < j < i
            };
            let cycle = dp_cycle(i, j);
            let mut levels = Vec::with_capacity(table.irreps.len());
            let ea = embed_coefficients(prev[j - 1].as_ref().unwrap(), &table);
            let eb = embed_coefficients(prev[j].as_ref().unwrap(), &table);
            for (li, ir) in table.irreps.iter().enumerate() {
                let rho_c = table.matrix(li, &cycle);
                let mut m = ea.levels[li].1.mul(&rho_c);
                m.scale(wa);
                m.add_scaled(&eb.levels[li].1, wb);
                levels.push((ir.label.clone(), m));
            }
            curr[j] = Some(FourierCoefficients { n: i, levels });
        }
        prev = curr;
    }
    Ok(prev[p].take().unwrap())
}

// ---------------------------------------------------------------------------
// Join / Split
// ---------------------------------------------------------------------------

/// Transform of the product distribution `f . g` on `S_{p+q}` (supported on
/// stacked rankings), from the factor transforms. Realized by a time-domain
/// round trip at desk scale; truncated inputs are zero-completed first.
pub fn join_fourier(
    fp: &FourierCoefficients,
    gq: &FourierCoefficients,
) -> Result<FourierCoefficients> {
    let f = inverse_fourier_transform(&fp.zero_completed())?;
    let g = inverse_fourier_transform(&gq.zero_completed())?;
    fourier_transform(&embed_product(&f, &g)?)
}

/// Splits the transform of a product distribution back into the factor
/// transforms by marginalizing over the opposite block.
pub fn split_fourier(
    h: &FourierCoefficients,
    p: usize,
) -> Result<(FourierCoefficients, FourierCoefficients)> {
    let n = h.n;
    if p == 0 || p >= n {
        return Err(Error::SizeMismatch(format!("split at p={} of n={}", p, n)));
    }
    let vals = inverse_fourier_values(&h.zero_completed())?;
    let (f, g) = marginalize_stacked(&vals, n, p)?;
    Ok((fourier_transform(&f)?, fourier_transform(&g)?))
}

/// Sums a value table over the stacked support to recover the two factors,
/// normalized.
fn marginalize_stacked(vals: &[f64], n: usize, p: usize) -> Result<(DenseDistribution, DenseDistribution)> {
    let q = n - p;
    let part = ItemPartition::new(n, &(0..p).collect::<Vec<_>>())?;
    let id_tau = crate::model::interleaving_from_index(p, q, 0);
    let mut f = vec![0.0; factorial(p) as usize];
    let mut g = vec![0.0; factorial(q) as usize];
    for fi in 0..factorial(p) {
        let pa = Ranking::from_index(p, fi)?;
        for gi in 0..factorial(q) {
            let pb = Ranking::from_index(q, gi)?;
            let s = crate::perm::recompose(&id_tau, &pa, &pb, &part)?;
            let v = vals[s.rank_index() as usize];
            f[fi as usize] += v;
            g[gi as usize] += v;
        }
    }
    let clamp = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x.max(0.0)).collect() };
    let fd = DenseDistribution::new_unnormalized(p, clamp(f))?.normalized()?;
    let gd = DenseDistribution::new_unnormalized(q, clamp(g))?.normalized()?;
    Ok((fd, gd))
}

/// Transform of the riffle independent joint: join the factors, then
/// left-multiply each level by the interleaving transform.
pub fn riffle_join_fourier(
    fp: &FourierCoefficients,
    gq: &FourierCoefficients,
    m: &FourierCoefficients,
) -> Result<FourierCoefficients> {
    let joined = join_fourier(fp, gq)?;
    convolve_fourier(&m.zero_completed(), &joined)
}

/// Recovers the transforms of the MLE relative ranking factors from the
/// transform of an arbitrary distribution: deconvolve by the dual of the
/// uniform shuffle, then split.
pub fn riffle_split_fourier(
    h: &FourierCoefficients,
    p: usize,
) -> Result<(FourierCoefficients, FourierCoefficients)> {
    let n = h.n;
    if p == 0 || p >= n {
        return Err(Error::SizeMismatch(format!("split at p={} of n={}", p, n)));
    }
    let m_unif = fourier_transform(&embed_interleaving(
        &InterleavingDistribution::uniform(p, n - p)?,
    )?)?;
    let deconvolved = convolve_fourier(&dual_transpose(&m_unif), &h.zero_completed())?;
    split_fourier(&deconvolved, p)
}

// ---------------------------------------------------------------------------
// Marginal reconstruction from truncated coefficients
// ---------------------------------------------------------------------------

/// Frequency levels required for order-`k` marginals.
pub fn order_levels(n: usize, k: usize) -> Vec<PartitionLabel> {
    partitions_of(n)
        .into_iter()
        .filter(|l| l.parts()[0] + k >= n)
        .collect()
}

/// Reconstructs the order-`k` marginal table (ordered item `k`-tuples to
/// rank `k`-tuples) from Fourier coefficients, using only the order-`k`
/// levels. Exact when those levels are present.
pub fn reconstruct_kth_order_marginals(
    f: &FourierCoefficients,
    k: usize,
) -> Result<std::collections::BTreeMap<(Vec<usize>, Vec<usize>), f64>> {
    let n = f.n;
    if k > n {
        return Err(Error::SizeMismatch(format!("order {} of n={}", k, n)));
    }
    let needed = order_levels(n, k);
    let missing: Vec<String> = needed
        .iter()
        .filter(|l| f.level(l).is_none())
        .map(|l| l.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingLevels {
            order: k,
            missing: missing.join(" "),
        });
    }
    let table = IrrepTable::build(n);
    let kept: Vec<usize> = needed
        .iter()
        .map(|l| table.level_index(l).unwrap())
        .collect();
    // transforms of every k-tuple indicator, accumulated in one sweep
    let item_tuples = ordered_tuples(n, k);
    let mut indicator_fts: HashMap<(usize, Vec<usize>), Vec<Mat>> = HashMap::new();
    let mut rhos: Vec<Mat> = table.irreps.iter().map(|ir| Mat::identity(ir.dim)).collect();
    sjt_sweep(n, |s, gen| {
        if let Some(kk) = gen {
            for (rho, ir) in rhos.iter_mut().zip(&table.irreps) {
                *rho = rho.mul(&ir.generators[kk]);
            }
        }
        for (ti, items) in item_tuples.iter().enumerate() {
            let ranks: Vec<usize> = items.iter().map(|&j| s.rank(j)).collect();
            let entry = indicator_fts.entry((ti, ranks)).or_insert_with(|| {
                kept.iter()
                    .map(|&li| Mat::zeros(table.irreps[li].dim, table.irreps[li].dim))
                    .collect()
            });
            for (slot, &li) in kept.iter().enumerate() {
                entry[slot].add_scaled(&rhos[li], 1.0);
            }
        }
    });
    // Plancherel: <h, indicator> over the shared (low-order) levels only;
    // the indicator has no energy outside them, so truncation loses nothing
    let scale = 1.0 / factorial(n) as f64;
    let kept_coeffs: Vec<&Mat> = needed.iter().map(|l| f.level(l).unwrap()).collect();
    let mut out = std::collections::BTreeMap::new();
    for ((ti, ranks), mats) in indicator_fts {
        let mut v = 0.0;
        for (slot, &li) in kept.iter().enumerate() {
            v += table.irreps[li].dim as f64 * kept_coeffs[slot].trace_dot(&mats[slot]);
        }
        out.insert((item_tuples[ti].clone(), ranks), v * scale);
    }
    Ok(out)
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
