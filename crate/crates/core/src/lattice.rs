//! Integer modes `m ∈ ℤⁿ` and leaf multi-indices `J ⊂ {1..k}`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Mul, Neg};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Integer frequency vector indexing the Fourier mode `e_m(x) = exp(2πi⟨m, x⟩)`.
///
/// Modes order by squared norm first and lexicographically within a shell,
/// which is the order [`enumerate_ball`] returns them in.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct LatticeMode(SmallVec<[i64; 4]>);

impl LatticeMode {
    pub fn new(entries: impl Into<Vec<i64>>) -> Self {
        LatticeMode(SmallVec::from_vec(entries.into()))
    }

    pub fn zero(n: usize) -> Self {
        LatticeMode(SmallVec::from_elem(0, n))
    }

    pub fn from_slice(entries: &[i64]) -> Self {
        LatticeMode(SmallVec::from_slice(entries))
    }

    pub fn entries(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|&x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    /// `⟨m, v⟩` for a real vector `v` of the same length.
    pub fn dot(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(self.0.len(), v.len());
        self.0.iter().zip(v).map(|(&m, &x)| m as f64 * x).sum()
    }

    /// True when the last nonzero entry is positive. Exactly one of `m`, `-m`
    /// has this property for `m ≠ 0`.
    pub fn is_upper_half(&self) -> bool {
        self.0.iter().rev().find(|&&x| x != 0).is_some_and(|&x| x > 0)
    }
}

impl Neg for &LatticeMode {
    type Output = LatticeMode;

    fn neg(self) -> LatticeMode {
        LatticeMode(self.0.iter().map(|&x| -x).collect())
    }
}

impl Neg for LatticeMode {
    type Output = LatticeMode;

    fn neg(self) -> LatticeMode {
        -&self
    }
}

impl Ord for LatticeMode {
    fn cmp(&self, other: &Self) -> Ordering {
        self.norm_sq()
            .cmp(&other.norm_sq())
            .then_with(|| self.0.as_slice().cmp(other.0.as_slice()))
    }
}

impl PartialOrd for LatticeMode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for LatticeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for LatticeMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for LatticeMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Vec::<i64>::deserialize(d).map(LatticeMode::new)
    }
}

/// All modes with `‖m‖ ≤ radius`, sorted by squared norm then lexicographically.
///
/// The origin is always included for `radius ≥ 0`; a negative or NaN radius
/// yields an empty list.
pub fn enumerate_ball(n: usize, radius: f64) -> Vec<LatticeMode> {
    let mut out = Vec::new();
    for_each_in_ball(n, radius, |m| out.push(LatticeMode::from_slice(m)));
    out.sort_unstable();
    out
}

/// Visits every mode of the closed ball without allocating per mode. Visit
/// order is lexicographic, not the canonical shell order.
pub fn for_each_in_ball(n: usize, radius: f64, mut visit: impl FnMut(&[i64])) {
    if !(radius >= 0.0) || n == 0 {
        return;
    }
    let bound = radius * radius;
    let reach = radius.floor() as i64;
    let mut buf = vec![0i64; n];

    fn recurse(
        buf: &mut [i64],
        depth: usize,
        partial: i64,
        bound: f64,
        reach: i64,
        visit: &mut dyn FnMut(&[i64]),
    ) {
        if depth == buf.len() {
            visit(buf);
            return;
        }
        for x in -reach..=reach {
            let sq = partial + x * x;
            if sq as f64 > bound {
                continue;
            }
            buf[depth] = x;
            recurse(buf, depth + 1, sq, bound, reach, visit);
        }
    }

    recurse(&mut buf, 0, 0, bound, reach, &mut visit);
}

/// Orientation sign `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn from_parity(count: usize) -> Self {
        if count % 2 == 0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

impl Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl Neg for Sign {
    type Output = Sign;

    fn neg(self) -> Sign {
        self * Sign::Minus
    }
}

/// Largest supported leaf dimension.
pub const MAX_LEAF_DIM: usize = 31;

/// Strictly increasing set of leaf axes `J = (j_1 < … < j_p)`, 1-based,
/// naming the basis form `dϖ_J = dϖ_{j_1} ∧ … ∧ dϖ_{j_p}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MultiIndex(u32);

impl MultiIndex {
    pub fn empty() -> Self {
        MultiIndex(0)
    }

    /// `{1, …, k}`.
    pub fn full(k: usize) -> Self {
        assert!(k <= MAX_LEAF_DIM, "leaf dimension {k} exceeds {MAX_LEAF_DIM}");
        MultiIndex(((1u64 << k) - 1) as u32)
    }

    /// Builds from a strictly increasing list of axes in `1..=MAX_LEAF_DIM`.
    pub fn new(members: &[usize]) -> Result<Self> {
        let invalid = |reason: &str| Error::InvalidMultiIndex {
            members: members.to_vec(),
            reason: reason.to_string(),
        };
        let mut bits = 0u32;
        let mut prev = 0usize;
        for &j in members {
            if j == 0 || j > MAX_LEAF_DIM {
                return Err(invalid("axis out of range"));
            }
            if j <= prev {
                return Err(invalid("axes must be strictly increasing"));
            }
            bits |= 1 << (j - 1);
            prev = j;
        }
        Ok(MultiIndex(bits))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, j: usize) -> bool {
        (1..=MAX_LEAF_DIM).contains(&j) && self.0 & (1 << (j - 1)) != 0
    }

    /// Largest member, or 0 when empty.
    pub fn max_axis(self) -> usize {
        32 - self.0.leading_zeros() as usize
    }

    pub fn members(self) -> impl Iterator<Item = usize> {
        (1..=MAX_LEAF_DIM).filter(move |&j| self.0 & (1 << (j - 1)) != 0)
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.members().collect()
    }

    pub fn with(self, j: usize) -> Self {
        MultiIndex(self.0 | (1 << (j - 1)))
    }

    pub fn without(self, j: usize) -> Self {
        MultiIndex(self.0 & !(1 << (j - 1)))
    }

    /// `Jᶜ = {1..k} ∖ J`.
    pub fn complement(self, k: usize) -> Self {
        MultiIndex(Self::full(k).0 & !self.0)
    }

    /// Number of members strictly smaller than `j`.
    fn count_below(self, j: usize) -> usize {
        (self.0 & ((1u32 << (j - 1)) - 1)).count_ones() as usize
    }

    /// All `J ⊂ {1..k}` with `|J| = p`, in lexicographic order.
    pub fn all_of_degree(k: usize, p: usize) -> Vec<MultiIndex> {
        fn go(start: usize, k: usize, left: usize, acc: u32, out: &mut Vec<MultiIndex>) {
            if left == 0 {
                out.push(MultiIndex(acc));
                return;
            }
            for j in start..=k {
                if k - j + 1 < left {
                    break;
                }
                go(j + 1, k, left - 1, acc | (1 << (j - 1)), out);
            }
        }
        let mut out = Vec::new();
        if p <= k {
            go(1, k, p, 0, &mut out);
        }
        out
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.members().cmp(other.members()))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.members()).finish()
    }
}

impl Serialize for MultiIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_vec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultiIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let members = Vec::<usize>::deserialize(d)?;
        MultiIndex::new(&members).map_err(serde::de::Error::custom)
    }
}

/// Sign `σ` with `dϖ_j ∧ dϖ_J = σ · dϖ_{J ∪ {j}}`, i.e. `(-1)^#{i ∈ J : i < j}`.
pub fn insertion_sign(j: usize, set: MultiIndex) -> Result<Sign> {
    if set.contains(j) {
        return Err(Error::DegenerateWedge { axis: j });
    }
    if j == 0 || j > MAX_LEAF_DIM {
        return Err(Error::InvalidMultiIndex {
            members: vec![j],
            reason: "axis out of range".into(),
        });
    }
    Ok(Sign::from_parity(set.count_below(j)))
}

/// Sign of the permutation taking `(1, …, k)` to `(J, Jᶜ)`, each part sorted.
/// This is the `±` in `*dϖ_J = ±dϖ_{Jᶜ}`.
///
/// # Panics
///
/// If `J` has an axis above `k`.
pub fn complement_sign(set: MultiIndex, k: usize) -> Sign {
    assert!(
        set.max_axis() <= k,
        "multi-index {set:?} is not contained in 1..={k}"
    );
    let rest = set.complement(k);
    // Inversions: pairs (j ∈ J, i ∈ Jᶜ) with i < j.
    let inversions: usize = set.members().map(|j| rest.count_below(j)).sum();
    Sign::from_parity(inversions)
}

/// `C(n, r)`.
pub fn binomial(n: usize, r: usize) -> usize {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    (0..r).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mi(xs: &[usize]) -> MultiIndex {
        MultiIndex::new(xs).unwrap()
    }

    /// Sign of a permutation given as a list, by counting inversions.
    fn permutation_sign(perm: &[usize]) -> Sign {
        let mut inv = 0;
        for a in 0..perm.len() {
            for b in a + 1..perm.len() {
                if perm[a] > perm[b] {
                    inv += 1;
                }
            }
        }
        Sign::from_parity(inv)
    }

    #[test]
    fn ball_examples() {
        assert_eq!(enumerate_ball(2, 0.0), vec![LatticeMode::new(vec![0, 0])]);
        let unit = enumerate_ball(2, 1.0);
        assert_eq!(unit.len(), 5);
        assert_eq!(unit[0], LatticeMode::new(vec![0, 0]));
        for m in &unit[1..] {
            assert_eq!(m.norm_sq(), 1);
        }
        // brute-force count of m₁² + m₂² ≤ 6.25
        let mut count = 0;
        for a in -3i64..=3 {
            for b in -3i64..=3 {
                if ((a * a + b * b) as f64) <= 6.25 {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 21);
        assert_eq!(enumerate_ball(2, 2.5).len(), count);
        assert!(enumerate_ball(3, -1.0).is_empty());
    }

    #[test]
    fn ball_order_is_shell_then_lex() {
        let modes = enumerate_ball(2, 1.5);
        let shown: Vec<_> = modes.iter().map(|m| m.entries().to_vec()).collect();
        assert_eq!(
            shown,
            vec![
                vec![0, 0],
                vec![-1, 0],
                vec![0, -1],
                vec![0, 1],
                vec![1, 0],
                vec![-1, -1],
                vec![-1, 1],
                vec![1, -1],
                vec![1, 1],
            ]
        );
    }

    #[test]
    fn insertion_sign_examples() {
        assert_eq!(insertion_sign(1, mi(&[2, 3])).unwrap(), Sign::Plus);
        assert_eq!(insertion_sign(3, mi(&[1, 2])).unwrap(), Sign::Plus);
        // brute force: (2,1,3) has one inversion
        assert_eq!(permutation_sign(&[2, 1, 3]), Sign::Minus);
        assert_eq!(insertion_sign(2, mi(&[1, 3])).unwrap(), Sign::Minus);
        assert_eq!(
            insertion_sign(2, mi(&[1, 2])),
            Err(Error::DegenerateWedge { axis: 2 })
        );
    }

    #[test]
    fn complement_sign_examples() {
        assert_eq!(complement_sign(mi(&[1]), 2), Sign::Plus);
        assert_eq!(complement_sign(mi(&[2]), 2), Sign::Minus);
        assert_eq!(permutation_sign(&[2, 3, 1, 4]), Sign::Plus);
        assert_eq!(complement_sign(mi(&[2, 3]), 4), Sign::Plus);
        assert_eq!(complement_sign(MultiIndex::empty(), 3), Sign::Plus);
    }

    #[test]
    fn multi_index_validation() {
        assert!(MultiIndex::new(&[2, 1]).is_err());
        assert!(MultiIndex::new(&[1, 1]).is_err());
        assert!(MultiIndex::new(&[0]).is_err());
        assert_eq!(mi(&[1, 3]).to_vec(), vec![1, 3]);
        assert_eq!(mi(&[1, 3]).complement(4).to_vec(), vec![2, 4]);
        let lex: Vec<_> = MultiIndex::all_of_degree(4, 2)
            .into_iter()
            .map(MultiIndex::to_vec)
            .collect();
        assert_eq!(
            lex,
            vec![
                vec![1, 2],
                vec![1, 3],
                vec![1, 4],
                vec![2, 3],
                vec![2, 4],
                vec![3, 4]
            ]
        );
        for k in 0..6 {
            for p in 0..=k {
                assert_eq!(MultiIndex::all_of_degree(k, p).len(), binomial(k, p));
            }
        }
    }

    #[test]
    fn complement_sign_matches_brute_force() {
        for k in 1..=5 {
            for p in 0..=k {
                for set in MultiIndex::all_of_degree(k, p) {
                    let mut perm = set.to_vec();
                    perm.extend(set.complement(k).members());
                    assert_eq!(complement_sign(set, k), permutation_sign(&perm));
                }
            }
        }
    }

    fn subset_strategy() -> impl Strategy<Value = (usize, MultiIndex)> {
        (1usize..=6).prop_flat_map(|k| {
            proptest::collection::vec(any::<bool>(), k).prop_map(move |flags| {
                let members: Vec<usize> = flags
                    .iter()
                    .enumerate()
                    .filter(|(_, &f)| f)
                    .map(|(i, _)| i + 1)
                    .collect();
                (k, MultiIndex::new(&members).unwrap())
            })
        })
    }

    proptest! {
        #[test]
        fn star_star_sign((k, set) in subset_strategy()) {
            let p = set.len();
            let product = complement_sign(set, k) * complement_sign(set.complement(k), k);
            prop_assert_eq!(product, Sign::from_parity(p * (k - p)));
        }

        #[test]
        fn insertion_anticommutes(
            (k, a, b, flags) in (2usize..=8).prop_flat_map(|k| {
                (Just(k), 1..=k, 1..=k, proptest::collection::vec(any::<bool>(), k))
            })
        ) {
            prop_assume!(a != b);
            let members: Vec<usize> = (1..=k).filter(|&j| flags[j - 1] && j != a && j != b).collect();
            let set = MultiIndex::new(&members).unwrap();
            let lhs = insertion_sign(a, set).unwrap() * insertion_sign(b, set.with(a)).unwrap();
            let rhs = insertion_sign(b, set).unwrap() * insertion_sign(a, set.with(b)).unwrap();
            prop_assert_eq!(lhs, -rhs);
        }

        #[test]
        fn ball_is_prefix_monotone(n in 1usize..=3, r1 in 0.0f64..4.0, extra in 0.0f64..3.0) {
            let small = enumerate_ball(n, r1);
            let large = enumerate_ball(n, r1 + extra);
            prop_assert!(small.len() <= large.len());
            prop_assert_eq!(&large[..small.len()], &small[..]);
        }
    }
}
