//! Multi-indices, their total order, cached jet-space index tables and index sets.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

/// A multi-index `(α_1, …, α_n)`.
#[derive(Clone, PartialEq, Eq, Hash, Debug, serde::Serialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = vec![0; n];
        v[i] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total order `|α|`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self − other` when `other ≤ self` componentwise.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        let mut out = Vec::with_capacity(self.0.len());
        for (a, b) in self.0.iter().zip(&other.0) {
            if b > a {
                return None;
            }
            out.push(a - b);
        }
        Some(MultiIndex(out))
    }

    /// Componentwise `self ≤ other`.
    pub fn le_componentwise(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `α!` as a float.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&a| factorial(a)).product()
    }

    /// `z^α`.
    pub fn monomial(&self, z: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(z)
            .map(|(&a, &x)| x.powi(a as i32))
            .product()
    }

    /// Key used in the JSON jet encoding, e.g. `"(1,0)"`.
    pub fn key(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|a| a.to_string()).collect();
        format!("({})", parts.join(","))
    }

    pub fn parse_key(s: &str) -> Option<MultiIndex> {
        let inner = s.trim().strip_prefix('(')?.strip_suffix(')')?;
        if inner.trim().is_empty() {
            return Some(MultiIndex(Vec::new()));
        }
        inner
            .split(',')
            .map(|p| p.trim().parse::<u32>().ok())
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

pub fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// The total order on multi-indices: pick the largest `k` whose prefix sums
/// differ; the index with the smaller prefix sum there is the smaller one.
pub fn idx_compare(a: &MultiIndex, b: &MultiIndex) -> Ordering {
    assert_eq!(a.dim(), b.dim(), "multi-indices of different dimension");
    let mut sa = 0u32;
    let mut sb = 0u32;
    let mut last = Ordering::Equal;
    for (x, y) in a.0.iter().zip(&b.0) {
        sa += x;
        sb += y;
        if sa != sb {
            last = sa.cmp(&sb);
        }
    }
    last
}

/// All multi-indices in `n` variables of order at most `degree`, sorted by
/// [`idx_compare`], together with the product and transport tables used by
/// jet arithmetic.
#[derive(Debug)]
pub struct JetSpace {
    pub n: usize,
    pub degree: u32,
    pub indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
    /// `(i, j, k, coef)`: `∂^{α_k}(PQ) += coef · ∂^{α_i}P · ∂^{α_j}Q` with `α_k = α_i + α_j`.
    pub(crate) products: Vec<(usize, usize, usize, f64)>,
    /// `(β, β+γ, γ)` triples with `|β+γ| ≤ degree`.
    pub(crate) shifts: Vec<(usize, usize, usize)>,
}

impl JetSpace {
    /// Shared, cached space for `(n, degree)`.
    pub fn get(n: usize, degree: u32) -> Arc<JetSpace> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, u32), Arc<JetSpace>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        guard
            .entry((n, degree))
            .or_insert_with(|| Arc::new(JetSpace::build(n, degree)))
            .clone()
    }

    fn build(n: usize, degree: u32) -> JetSpace {
        assert!(n >= 1, "ambient dimension must be positive");
        let mut indices = Vec::new();
        let mut cur = vec![0u32; n];
        enumerate(&mut cur, 0, degree, &mut indices);
        indices.sort_by(idx_compare);
        let lookup: HashMap<MultiIndex, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        let mut products = Vec::new();
        let mut shifts = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                if a.order() + b.order() > degree {
                    continue;
                }
                let s = a.add(b);
                let k = lookup[&s];
                let coef = s.factorial() / (a.factorial() * b.factorial());
                products.push((i, j, k, coef));
                shifts.push((i, k, j));
            }
        }
        JetSpace {
            n,
            degree,
            indices,
            lookup,
            products,
            shifts,
        }
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn index_of(&self, a: &MultiIndex) -> Option<usize> {
        self.lookup.get(a).copied()
    }

    pub fn order_of(&self, i: usize) -> u32 {
        self.indices[i].order()
    }

    /// Linear map taking derivatives at `x` to derivatives at `x + dz`:
    /// `out[β] = Σ_δ mat[β][δ] · in[δ]`.
    pub fn transport_matrix(&self, dz: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mono: Vec<f64> = self
            .indices
            .iter()
            .map(|g| g.monomial(dz) / g.factorial())
            .collect();
        let mut mat = vec![vec![0.0; d]; d];
        for &(b, bg, g) in &self.shifts {
            mat[b][bg] += mono[g];
        }
        mat
    }
}

fn enumerate(cur: &mut Vec<u32>, pos: usize, budget: u32, out: &mut Vec<MultiIndex>) {
    if pos == cur.len() {
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for v in 0..=budget {
        cur[pos] = v;
        enumerate(cur, pos + 1, budget - v, out);
    }
    cur[pos] = 0;
}

/// `dim 𝒫 = C(m−1+n, n)`.
pub fn dim_p(m: u32, n: usize) -> usize {
    let mut num = 1u128;
    let mut den = 1u128;
    for i in 0..n as u128 {
        num *= (m as u128 - 1) + n as u128 - i;
        den *= i + 1;
    }
    (num / den) as usize
}

/// A subset of ℳ stored as a bitmask over the sorted index list.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default)]
pub struct IndexSet {
    pub bits: u128,
}

impl IndexSet {
    pub fn empty() -> Self {
        IndexSet { bits: 0 }
    }

    pub fn full(size: usize) -> Self {
        assert!(size <= 128, "index set limited to 128 elements");
        if size == 128 {
            IndexSet { bits: u128::MAX }
        } else {
            IndexSet {
                bits: (1u128 << size) - 1,
            }
        }
    }

    pub fn from_positions(pos: &[usize]) -> Self {
        let mut s = IndexSet::empty();
        for &p in pos {
            s.insert(p);
        }
        s
    }

    pub fn contains(&self, i: usize) -> bool {
        self.bits >> i & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        self.bits |= 1u128 << i;
    }

    pub fn remove(&mut self, i: usize) {
        self.bits &= !(1u128 << i);
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        IndexSet {
            bits: self.bits | other.bits,
        }
    }

    /// Positions in increasing index order.
    pub fn positions(&self) -> Vec<usize> {
        (0..128).filter(|&i| self.contains(i)).collect()
    }

    pub fn indices(&self, space: &JetSpace) -> Vec<MultiIndex> {
        self.positions()
            .into_iter()
            .map(|i| space.indices[i].clone())
            .collect()
    }

    pub fn describe(&self, space: &JetSpace) -> String {
        let parts: Vec<String> = self.indices(space).iter().map(|a| a.key()).collect();
        format!("{{{}}}", parts.join(","))
    }
}

/// Set order: the least element of the symmetric difference decides, and the
/// set containing it is the smaller one.
pub fn set_compare(a: &IndexSet, b: &IndexSet) -> Ordering {
    let diff = a.bits ^ b.bits;
    if diff == 0 {
        return Ordering::Equal;
    }
    let least = diff.trailing_zeros() as usize;
    if a.contains(least) {
        Ordering::Less
    } else {
        Ordering::Greater
    }
}

/// Closed under adding multi-indices while staying inside ℳ.
pub fn is_monotonic(space: &JetSpace, a: &IndexSet) -> bool {
    for i in a.positions() {
        for g in &space.indices {
            let s = space.indices[i].add(g);
            if let Some(k) = space.index_of(&s) {
                if !a.contains(k) {
                    return false;
                }
            }
        }
    }
    true
}

/// Every monotonic subset of ℳ, in increasing set order.
pub fn monotonic_sets(space: &JetSpace) -> Vec<IndexSet> {
    let d = space.dim();
    // Process from the highest order down so that the successors of an
    // element are decided before the element itself.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| space.order_of(b).cmp(&space.order_of(a)).then(b.cmp(&a)));
    let succ: Vec<Vec<usize>> = (0..d)
        .map(|i| {
            (0..space.n)
                .filter_map(|k| {
                    space.index_of(&space.indices[i].add(&MultiIndex::unit(space.n, k)))
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    fn rec(
        pos: usize,
        order: &[usize],
        succ: &[Vec<usize>],
        cur: IndexSet,
        out: &mut Vec<IndexSet>,
    ) {
        if pos == order.len() {
            out.push(cur);
            return;
        }
        let e = order[pos];
        rec(pos + 1, order, succ, cur, out);
        if succ[e].iter().all(|&s| cur.contains(s)) {
            let mut with = cur;
            with.insert(e);
            rec(pos + 1, order, succ, with, out);
        }
    }
    rec(0, &order, &succ, IndexSet::empty(), &mut out);
    out.sort_by(set_compare);
    out
}

/// `l(𝒜) = 1 + 3·#{monotonic 𝒜′ < 𝒜}`; reported, not used to drive recursion.
pub fn l_count(space: &JetSpace, a: &IndexSet) -> usize {
    let below = monotonic_sets(space)
        .iter()
        .filter(|s| set_compare(s, a) == Ordering::Less)
        .count();
    1 + 3 * below
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn prefix_rule_examples() {
        assert_eq!(idx_compare(&mi(&[1, 0]), &mi(&[0, 1])), Ordering::Greater);
        assert_eq!(idx_compare(&mi(&[0, 1]), &mi(&[1, 0])), Ordering::Less);
        assert_eq!(idx_compare(&mi(&[1]), &mi(&[2])), Ordering::Less);
        assert_eq!(idx_compare(&mi(&[2, 1]), &mi(&[2, 1])), Ordering::Equal);
    }

    #[test]
    fn set_order_chain_m2_n1() {
        let s = JetSpace::get(1, 1);
        assert_eq!(s.indices, vec![mi(&[0]), mi(&[1])]);
        let chain = [
            IndexSet::from_positions(&[0, 1]),
            IndexSet::from_positions(&[0]),
            IndexSet::from_positions(&[1]),
            IndexSet::empty(),
        ];
        for w in chain.windows(2) {
            assert_eq!(set_compare(&w[0], &w[1]), Ordering::Less);
        }
        assert_eq!(set_compare(&chain[1], &chain[1]), Ordering::Equal);
    }

    #[test]
    fn monotonic_examples() {
        let s = JetSpace::get(1, 2);
        assert!(is_monotonic(&s, &IndexSet::empty()));
        assert!(is_monotonic(&s, &IndexSet::from_positions(&[1, 2])));
        assert!(!is_monotonic(&s, &IndexSet::from_positions(&[1])));
        assert!(is_monotonic(&s, &IndexSet::full(3)));
    }

    #[test]
    fn monotonic_enumeration_matches_filter() {
        for (n, d) in [(1, 3), (2, 2), (2, 3), (3, 1)] {
            let s = JetSpace::get(n, d);
            let all: Vec<IndexSet> = (0..(1u128 << s.dim()))
                .map(|bits| IndexSet { bits })
                .filter(|a| is_monotonic(&s, a))
                .collect();
            let got = monotonic_sets(&s);
            assert_eq!(got.len(), all.len());
            for a in &all {
                assert!(got.contains(a));
            }
        }
    }

    #[test]
    fn dim_p_binomial() {
        assert_eq!(dim_p(1, 3), 1);
        assert_eq!(dim_p(3, 2), 6);
        assert_eq!(dim_p(4, 3), 20);
        assert_eq!(JetSpace::get(2, 2).dim(), dim_p(3, 2));
    }

    #[test]
    fn l_count_extremes() {
        let s = JetSpace::get(1, 1);
        assert_eq!(l_count(&s, &IndexSet::full(2)), 1);
        // monotonic sets for m=2,n=1: {0,1}, {1}, ∅
        assert_eq!(l_count(&s, &IndexSet::empty()), 1 + 3 * 2);
    }
}
