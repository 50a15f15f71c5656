//! Exact correlations inside a finite tower.
//!
//! At stage `K` the map sends level `l` to level `l + 1`; only the image of
//! the top level is unknown. A correlation `mu(T^n A ∩ B)` computed by
//! shifting indicators inside the stage-`K` tower is therefore exact up to
//! the top `n` levels, i.e. within `n w_K`.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::construction::Tower;
use crate::error::{Error, Result};
use crate::rational::to_decimal;

/// Largest tower (in levels) for which an explicit indicator is built.
pub const MAX_INDICATOR_LEVELS: usize = 1 << 31;

/// A union of levels of one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSet {
    pub stage: usize,
    members: Vec<u64>,
}

impl LevelSet {
    /// Sorts and deduplicates `members`; range is checked against a tower
    /// when the set is used.
    pub fn new(stage: usize, mut members: Vec<u64>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { stage, members }
    }

    /// Every level of stage `k`.
    pub fn full(tower: &Tower, stage: usize) -> Result<Self> {
        let h = indicator_len(&tower.stage(stage)?.height)? as u64;
        Ok(Self {
            stage,
            members: (0..h).collect(),
        })
    }

    pub fn empty(stage: usize) -> Self {
        Self {
            stage,
            members: Vec::new(),
        }
    }

    pub fn members(&self) -> &[u64] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `|A| w_k`.
    pub fn measure(&self, tower: &Tower) -> Result<BigRational> {
        let stage = tower.stage(self.stage)?;
        Ok(BigRational::from_integer(BigInt::from(self.members.len())) * &stage.width)
    }
}

fn indicator_len(height: &BigUint) -> Result<usize> {
    height
        .to_usize()
        .filter(|&h| h <= MAX_INDICATOR_LEVELS)
        .ok_or_else(|| Error::TowerTooTall(height.to_string()))
}

/// Packed indicator of a set of levels `[0, len)`. Bits at or beyond `len`
/// are always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelIndicator {
    words: Vec<u64>,
    len: usize,
}

impl LevelIndicator {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    fn with_capacity(bits: usize) -> Self {
        Self {
            words: Vec::with_capacity(bits.div_ceil(64)),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }

    fn push_zeros(&mut self, count: usize) {
        self.len += count;
        self.words.resize(self.len.div_ceil(64), 0);
    }

    fn extend_from(&mut self, other: &LevelIndicator) {
        let shift = self.len % 64;
        let start_len = self.len;
        self.len += other.len;
        self.words.resize(self.len.div_ceil(64), 0);
        let base = start_len / 64;
        for (i, &w) in other.words.iter().enumerate() {
            if shift == 0 {
                self.words[base + i] = w;
            } else {
                self.words[base + i] |= w << shift;
                if let Some(next) = self.words.get_mut(base + i + 1) {
                    *next |= w >> (64 - shift);
                }
            }
        }
    }

    /// 64 bits starting at bit `pos`, zero-filled past the end.
    fn word_at(&self, pos: usize) -> u64 {
        let q = pos / 64;
        let r = pos % 64;
        let lo = self.words.get(q).copied().unwrap_or(0);
        if r == 0 {
            return lo;
        }
        let hi = self.words.get(q + 1).copied().unwrap_or(0);
        (lo >> r) | (hi << (64 - r))
    }

    /// `#{ l : self[l] and other[l + shift] }`.
    pub fn shifted_overlap(&self, other: &LevelIndicator, shift: usize) -> u64 {
        self.words
            .iter()
            .enumerate()
            .map(|(w, &bits)| u64::from((bits & other.word_at(w * 64 + shift)).count_ones()))
            .sum()
    }
}

/// Indicator over `[0, h_K)` of the stage-`K` levels that sit inside a level
/// of `set`. Spacer levels added after stage `set.stage` are never included.
pub fn lift_level_set(tower: &Tower, set: &LevelSet, k_eval: usize) -> Result<LevelIndicator> {
    if k_eval < set.stage {
        return Err(Error::param(format!(
            "cannot lift a stage-{} set to earlier stage {k_eval}",
            set.stage
        )));
    }
    let base_len = indicator_len(&tower.stage(set.stage)?.height)?;
    let final_len = indicator_len(&tower.stage(k_eval)?.height)?;
    let mut ind = LevelIndicator::zeros(base_len);
    for &m in set.members() {
        let m = usize::try_from(m).ok().filter(|&m| m < base_len).ok_or_else(|| {
            Error::Index(format!(
                "level {m} out of range for stage {} of height {base_len}",
                set.stage
            ))
        })?;
        ind.set(m);
    }
    for j in set.stage..k_eval {
        let spacers = tower.spacers(j)?;
        let mut next = LevelIndicator::with_capacity(indicator_len(&tower.stage(j + 1)?.height)?);
        for &a in &spacers.a {
            next.extend_from(&ind);
            next.push_zeros(a as usize);
        }
        ind = next;
    }
    debug_assert_eq!(ind.len(), final_len);
    Ok(ind)
}

/// `mu(T^n A ∩ B)` at stage `K` with its rigorous error bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelationReport {
    pub n: u64,
    pub k_eval: usize,
    pub value: BigRational,
    /// `n w_K`.
    pub error_bound: BigRational,
    pub measure_a: BigRational,
    pub measure_b: BigRational,
    /// `h_K w_K`, the mass used for normalisation.
    pub mass: BigRational,
    /// `value * mass / (mu(A) mu(B))`; `None` when either set is null.
    pub normalized: Option<BigRational>,
}

struct Lifted {
    a: LevelIndicator,
    b: LevelIndicator,
    measure_a: BigRational,
    measure_b: BigRational,
}

fn lift_pair(tower: &Tower, a: &LevelSet, b: &LevelSet, k_eval: usize) -> Result<Lifted> {
    Ok(Lifted {
        a: lift_level_set(tower, a, k_eval)?,
        b: lift_level_set(tower, b, k_eval)?,
        measure_a: a.measure(tower)?,
        measure_b: b.measure(tower)?,
    })
}

fn correlation_lifted(tower: &Tower, lifted: &Lifted, n: u64, k_eval: usize) -> Result<CorrelationReport> {
    let stage = tower.stage(k_eval)?;
    if BigUint::from(n) >= stage.height {
        return Err(Error::ShiftExceedsHeight {
            shift: n,
            height: stage.height.to_string(),
        });
    }
    let count = lifted.b.shifted_overlap(&lifted.a, n as usize);
    let value = BigRational::from_integer(BigInt::from(count)) * &stage.width;
    let error_bound = BigRational::from_integer(BigInt::from(n)) * &stage.width;
    let mass = stage.mass();
    let product = &lifted.measure_a * &lifted.measure_b;
    let normalized = (!product.is_zero()).then(|| &value * &mass / &product);
    Ok(CorrelationReport {
        n,
        k_eval,
        value,
        error_bound,
        measure_a: lifted.measure_a.clone(),
        measure_b: lifted.measure_b.clone(),
        mass,
        normalized,
    })
}

/// Counts `l` with `l` in lift(B) and `l + n` in lift(A) inside the stage-`K`
/// tower.
pub fn correlation(tower: &Tower, a: &LevelSet, b: &LevelSet, n: u64, k_eval: usize) -> Result<CorrelationReport> {
    let lifted = lift_pair(tower, a, b, k_eval)?;
    correlation_lifted(tower, &lifted, n, k_eval)
}

/// One evaluated shift of a rigidity scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RigidityEntry {
    pub n: u64,
    /// `mu(T^n A ∩ A) / mu(A)` at stage `K`.
    pub overlap_ratio: BigRational,
    /// `(value - n w_K) / mu(A)`, a certified lower bound.
    pub certified_ratio: BigRational,
    /// `certified_ratio >= threshold`.
    pub flagged: bool,
}

/// Evaluates `mu(T^n A ∩ A)` for each shift and flags those whose certified
/// lower bound reaches `threshold * mu(A)`.
pub fn rigidity_scan(
    tower: &Tower,
    a: &LevelSet,
    shifts: &[u64],
    k_eval: usize,
    threshold: &BigRational,
) -> Result<Vec<RigidityEntry>> {
    let lifted = lift_pair(tower, a, a, k_eval)?;
    if lifted.measure_a.is_zero() {
        return Err(Error::param("rigidity scan needs a non-null set"));
    }
    shifts
        .iter()
        .map(|&n| {
            let r = correlation_lifted(tower, &lifted, n, k_eval)?;
            let overlap_ratio = &r.value / &lifted.measure_a;
            let certified_ratio = (&r.value - &r.error_bound) / &lifted.measure_a;
            Ok(RigidityEntry {
                n,
                flagged: certified_ratio >= *threshold,
                overlap_ratio,
                certified_ratio,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CesaroScore {
    pub horizon: u64,
    /// `(1/N) sum_{n=1..N} |mu(T^n A ∩ B) - mu(A) mu(B) / m|`.
    pub score: BigRational,
    /// `(1/N) sum_{n=1..N} n w_K`.
    pub error_bound: BigRational,
}

/// Averaged correlation deviation over shifts `1..=N`, measured against the
/// independent value for the stage-`K` mass `m`.
pub fn cesaro_score(tower: &Tower, a: &LevelSet, b: &LevelSet, horizon: u64, k_eval: usize) -> Result<CesaroScore> {
    if horizon == 0 {
        return Err(Error::param("Cesaro horizon must be at least 1"));
    }
    let stage = tower.stage(k_eval)?;
    if BigUint::from(horizon) >= stage.height {
        return Err(Error::ShiftExceedsHeight {
            shift: horizon,
            height: stage.height.to_string(),
        });
    }
    let lifted = lift_pair(tower, a, b, k_eval)?;
    let independent = &lifted.measure_a * &lifted.measure_b / stage.mass();
    let mut total = BigRational::zero();
    for n in 1..=horizon {
        let r = correlation_lifted(tower, &lifted, n, k_eval)?;
        total += (r.value - &independent).abs();
    }
    let big_n = BigRational::from_integer(BigInt::from(horizon));
    // sum_{n=1..N} n = N (N + 1) / 2
    let shift_sum = BigRational::from_integer(BigInt::from(horizon) * (horizon + 1) / 2);
    Ok(CesaroScore {
        horizon,
        score: total / &big_n,
        error_bound: shift_sum * &stage.width / big_n,
    })
}

pub const CORRELATION_CSV_HEADER: &str = "n,value_num,value_den,err_num,err_den,normalized";

/// Correlation rows as CSV; `normalized` is a 12-digit display decimal
/// (empty when undefined).
pub fn correlations_to_csv(reports: &[CorrelationReport]) -> String {
    let mut out = String::from(CORRELATION_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let normalized = r.normalized.as_ref().map(|v| to_decimal(v, 12)).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n,
            r.value.numer(),
            r.value.denom(),
            r.error_bound.numer(),
            r.error_bound.denom(),
            normalized
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::ConstructionSpec;
    use crate::rational::ratio;

    fn chacon(k: usize) -> Tower {
        let spec = ConstructionSpec::deterministic(vec![vec![0, 1, 0]; k]).unwrap();
        Tower::deterministic(&spec).unwrap()
    }

    #[test]
    fn bit_append_across_word_boundaries() {
        let mut src = LevelIndicator::zeros(70);
        for i in [0, 3, 63, 64, 69] {
            src.set(i);
        }
        let mut dst = LevelIndicator::with_capacity(0);
        dst.push_zeros(5);
        dst.extend_from(&src);
        dst.push_zeros(61);
        dst.extend_from(&src);
        let ones: Vec<usize> = dst.ones().collect();
        assert_eq!(ones, vec![5, 8, 68, 69, 74, 136, 139, 199, 200, 205]);
        assert_eq!(dst.len(), 206);
    }

    #[test]
    fn overlap_matches_naive() {
        let mut a = LevelIndicator::zeros(200);
        let mut b = LevelIndicator::zeros(200);
        for i in (0..200).filter(|i| i % 3 == 0 || i % 7 == 1) {
            a.set(i);
        }
        for i in (0..200).filter(|i| i % 5 != 2) {
            b.set(i);
        }
        for shift in [0usize, 1, 63, 64, 65, 130, 199] {
            let naive = (0..200 - shift).filter(|&l| b.get(l) && a.get(l + shift)).count() as u64;
            assert_eq!(b.shifted_overlap(&a, shift), naive, "shift {shift}");
        }
    }

    #[test]
    fn chacon_lift_of_bottom_level() {
        let t = chacon(2);
        let lift = lift_level_set(&t, &LevelSet::new(1, vec![0]), 2).unwrap();
        assert_eq!(lift.len(), 13);
        assert_eq!(lift.ones().collect::<Vec<_>>(), vec![0, 4, 9]);
    }

    #[test]
    fn empty_and_full_lifts() {
        let t = chacon(3);
        assert_eq!(lift_level_set(&t, &LevelSet::empty(1), 3).unwrap().count_ones(), 0);
        let full = LevelSet::full(&t, 1).unwrap();
        // 4 levels of stage 1, each split into 9 stage-3 levels
        assert_eq!(lift_level_set(&t, &full, 3).unwrap().count_ones(), 36);
        assert!(lift_level_set(&t, &full, 0).is_err());
    }

    #[test]
    fn disjoint_neighbouring_levels() {
        let t = chacon(3);
        let a = LevelSet::new(3, vec![0]);
        let r = correlation(&t, &a, &a, 1, 3).unwrap();
        assert!(r.value.is_zero());
    }

    #[test]
    fn full_tower_counts_every_level_but_the_top() {
        let t = chacon(4);
        let x = LevelSet::full(&t, 4).unwrap();
        let h = 121u64;
        for n in [0u64, 1, 5, 120] {
            let r = correlation(&t, &x, &x, n, 4).unwrap();
            assert_eq!(r.value, ratio((h - n) as i64, 81));
            assert_eq!(r.error_bound, ratio(n as i64, 81));
        }
        assert!(matches!(
            correlation(&t, &x, &x, 121, 4),
            Err(Error::ShiftExceedsHeight { .. })
        ));
    }

    #[test]
    fn shift_one_is_not_rigid() {
        let t = chacon(5);
        let a = LevelSet::new(2, vec![3, 7]);
        let r = rigidity_scan(&t, &a, &[1], 5, &ratio(1, 2)).unwrap();
        assert!(!r[0].flagged);
    }

    #[test]
    fn cesaro_of_null_set_is_zero() {
        let t = chacon(4);
        let a = LevelSet::empty(2);
        let b = LevelSet::full(&t, 2).unwrap();
        assert!(cesaro_score(&t, &a, &b, 10, 4).unwrap().score.is_zero());
    }

    #[test]
    fn correlation_csv_layout() {
        let t = chacon(2);
        let x = LevelSet::full(&t, 2).unwrap();
        let r = correlation(&t, &x, &x, 1, 2).unwrap();
        let csv = correlations_to_csv(&[r]);
        assert_eq!(csv, format!("{CORRELATION_CSV_HEADER}\n1,4,3,1,9,0.923076923077\n"));
    }
}
