//! Finite-stage cutting-and-stacking towers.
//!
//! Stage 0 is the unit interval, a tower of height 1 and width 1. Stage `k+1`
//! cuts the stage-`k` tower into `p_k` equal columns, puts `a_j` spacer levels
//! above column `j` and stacks the columns left to right, so
//! `h_{k+1} = p_k h_k + sum_j a_j`. Heights are `BigUint` throughout and level
//! widths are exact rationals `1 / (p_0 ... p_{k-1})`.
//!
//! Spacers of stage `k` (the ones used to build stage `k+1`) are indexed by
//! the stage being cut.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// How the spacer counts of each stage are obtained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpacerMode {
    /// Explicit spacer rows, one per stage; `p_k` is the row length.
    Deterministic { spacers: Vec<Vec<u64>> },
    /// Spacers `a_i = 2 t_k + x_{k,i} - x_{k,i-1}` driven by random draws
    /// `x_{k,i}` uniform on `{-t_k, ..., t_k}` and a fixed last offset.
    Ornstein { t: Vec<u64>, x_last: Vec<u64> },
}

/// Parameter schedules for `K` stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstructionSpec {
    p: Vec<u32>,
    mode: SpacerMode,
}

impl ConstructionSpec {
    /// A construction with explicit spacer rows. `p_k` is the length of row `k`.
    pub fn deterministic(spacers: Vec<Vec<u64>>) -> Result<Self> {
        if spacers.is_empty() {
            return Err(Error::param("stage count K must be at least 1"));
        }
        let mut p = Vec::with_capacity(spacers.len());
        for (k, row) in spacers.iter().enumerate() {
            let len = u32::try_from(row.len()).map_err(|_| Error::param(format!("stage {k}: too many columns")))?;
            if len < 2 {
                return Err(Error::param(format!(
                    "stage {k}: cutting parameter must be at least 2, got {len}"
                )));
            }
            p.push(len);
        }
        Ok(Self {
            p,
            mode: SpacerMode::Deterministic { spacers },
        })
    }

    /// An Ornstein construction. Validates `p_k >= 2` and `2 t_k <= h_k` at
    /// every stage; the heights do not depend on the draws, so this check is
    /// done before any sampling.
    pub fn ornstein(p: Vec<u32>, t: Vec<u64>, x_last: Vec<u64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::param("stage count K must be at least 1"));
        }
        if t.len() != p.len() || x_last.len() != p.len() {
            return Err(Error::param(format!(
                "schedule lengths differ: p has {}, t has {}, x_last has {}",
                p.len(),
                t.len(),
                x_last.len()
            )));
        }
        if let Some(k) = p.iter().position(|&pk| pk < 2) {
            return Err(Error::param(format!(
                "stage {k}: cutting parameter must be at least 2, got {}",
                p[k]
            )));
        }
        let spec = Self {
            p,
            mode: SpacerMode::Ornstein { t, x_last },
        };
        let heights = spec
            .ornstein_heights()
            .expect("ornstein mode always has closed-form heights");
        if let SpacerMode::Ornstein { t, .. } = &spec.mode {
            for (k, &tk) in t.iter().enumerate() {
                if BigUint::from(tk) * 2u32 > heights[k] {
                    return Err(Error::Construction {
                        stage: k,
                        message: format!("2*t_k = {} exceeds h_k = {}", 2 * u128::from(tk), heights[k]),
                    });
                }
            }
        }
        Ok(spec)
    }

    /// Number of cutting stages `K`.
    pub fn stages(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[u32] {
        &self.p
    }

    pub fn p_max(&self) -> u32 {
        self.p.iter().copied().max().unwrap_or(0)
    }

    pub fn mode(&self) -> &SpacerMode {
        &self.mode
    }

    pub fn is_ornstein(&self) -> bool {
        matches!(self.mode, SpacerMode::Ornstein { .. })
    }

    pub fn t(&self, k: usize) -> Option<u64> {
        match &self.mode {
            SpacerMode::Ornstein { t, .. } => t.get(k).copied(),
            SpacerMode::Deterministic { .. } => None,
        }
    }

    pub fn x_last(&self, k: usize) -> Option<u64> {
        match &self.mode {
            SpacerMode::Ornstein { x_last, .. } => x_last.get(k).copied(),
            SpacerMode::Deterministic { .. } => None,
        }
    }

    /// Heights from `h_{k+1} = p_k (h_k + 2 t_k) + x_{k,p_k}`; `None` outside
    /// Ornstein mode.
    pub fn ornstein_heights(&self) -> Option<Vec<BigUint>> {
        let SpacerMode::Ornstein { t, x_last } = &self.mode else {
            return None;
        };
        let mut h = Vec::with_capacity(self.p.len() + 1);
        h.push(BigUint::one());
        for k in 0..self.p.len() {
            let next = (&h[k] + BigUint::from(t[k]) * 2u32) * self.p[k] + x_last[k];
            h.push(next);
        }
        Some(h)
    }

    /// The deterministic spacer rows as `SpacerStage`s, if any.
    pub fn explicit_spacers(&self) -> Option<Vec<SpacerStage>> {
        match &self.mode {
            SpacerMode::Deterministic { spacers } => Some(
                spacers
                    .iter()
                    .enumerate()
                    .map(|(k, a)| SpacerStage { k, a: a.clone() })
                    .collect(),
            ),
            SpacerMode::Ornstein { .. } => None,
        }
    }
}

/// Spacer counts `a_1..a_{p_k}` placed above the columns when cutting stage `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpacerStage {
    pub k: usize,
    pub a: Vec<u64>,
}

impl SpacerStage {
    pub fn total(&self) -> u128 {
        self.a.iter().map(|&a| u128::from(a)).sum()
    }
}

/// Spacers of one Ornstein stage from its draws.
///
/// `a_i = 2t + x_i - x_{i-1}` with `x_0 = 0` and `x_p = x_last`. The sum
/// telescopes to `2 t p + x_last`.
pub fn ornstein_spacers(k: usize, t: u64, p: u32, draws: &[i64], x_last: u64) -> Result<SpacerStage> {
    if p < 2 {
        return Err(Error::param(format!("stage {k}: cutting parameter must be at least 2")));
    }
    if draws.len() + 1 != p as usize {
        return Err(Error::param(format!(
            "stage {k}: expected {} draws, got {}",
            p - 1,
            draws.len()
        )));
    }
    let t_wide = i128::from(t);
    if let Some(bad) = draws.iter().find(|&&x| i128::from(x).abs() > t_wide) {
        return Err(Error::param(format!("stage {k}: draw {bad} outside [-{t}, {t}]")));
    }
    let x_last_wide = i128::from(x_last);
    let mut prev = 0i128;
    let mut a = Vec::with_capacity(p as usize);
    let positions = draws.iter().map(|&x| i128::from(x)).chain(std::iter::once(x_last_wide));
    for (i, cur) in positions.enumerate() {
        let ai = 2 * t_wide + cur - prev;
        let ai = u64::try_from(ai)
            .map_err(|_| Error::param(format!("stage {k}: spacer a_{} = {ai} out of range", i + 1)))?;
        a.push(ai);
        prev = cur;
    }
    Ok(SpacerStage { k, a })
}

/// Heights `h_0..h_K` from the generic recursion `h_{k+1} = p_k h_k + sum_j a_j`.
///
/// In Ornstein mode the result is also checked against the closed form
/// `p_k (h_k + 2 t_k) + x_{k,p_k}`.
pub fn height_sequence(spec: &ConstructionSpec, spacers: &[SpacerStage]) -> Result<Vec<BigUint>> {
    if spacers.len() != spec.stages() {
        return Err(Error::param(format!(
            "expected {} spacer stages, got {}",
            spec.stages(),
            spacers.len()
        )));
    }
    let mut h = Vec::with_capacity(spec.stages() + 1);
    h.push(BigUint::one());
    for (k, stage) in spacers.iter().enumerate() {
        let pk = spec.p()[k];
        if stage.a.len() != pk as usize {
            return Err(Error::param(format!(
                "stage {k}: expected {pk} spacer counts, got {}",
                stage.a.len()
            )));
        }
        let next = &h[k] * pk + BigUint::from(stage.total());
        h.push(next);
    }
    if let Some(closed) = spec.ornstein_heights() {
        if let Some(k) = (0..h.len()).find(|&k| h[k] != closed[k]) {
            return Err(Error::Invariant {
                module: "core_construction",
                stage: k,
                message: format!("generic height {} != closed form {}", h[k], closed[k]),
            });
        }
    }
    Ok(h)
}

/// One stage of a built tower.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TowerStage {
    pub k: usize,
    pub height: BigUint,
    /// Measure of a single level.
    pub width: BigRational,
    /// Spacers of stage `k-1` that produced this stage; `None` for the base.
    pub spacers: Option<SpacerStage>,
    /// Start of each column inside this tower, `c_1 = 0`,
    /// `c_{j+1} = c_j + h_{k-1} + a_j`.
    pub column_offsets: Vec<BigUint>,
}

impl TowerStage {
    /// Total measure `h_k w_k` carried by this stage.
    pub fn mass(&self) -> BigRational {
        BigRational::from_integer(BigInt::from(self.height.clone())) * &self.width
    }
}

/// Where a level of stage `k` sits inside the stage `k-1` picture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LevelPosition {
    /// Level `inner` of the copy of stage `k-1` in column `column` (1-based).
    Column { column: usize, inner: BigUint },
    /// Spacer `index` above column `column` (1-based).
    Spacer { column: usize, index: BigUint },
}

/// Tower stages `0..=K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tower {
    spec: ConstructionSpec,
    stages: Vec<TowerStage>,
}

impl Tower {
    /// Builds all stages from explicit spacer stages.
    pub fn build(spec: &ConstructionSpec, spacers: Vec<SpacerStage>) -> Result<Self> {
        let heights = height_sequence(spec, &spacers)?;
        let mut stages = Vec::with_capacity(heights.len());
        stages.push(TowerStage {
            k: 0,
            height: BigUint::one(),
            width: BigRational::one(),
            spacers: None,
            column_offsets: vec![BigUint::zero()],
        });
        for (k, stage) in spacers.into_iter().enumerate() {
            let pk = spec.p()[k];
            let prev_h = &heights[k];
            let mut offsets = Vec::with_capacity(pk as usize);
            let mut c = BigUint::zero();
            for &a in &stage.a {
                offsets.push(c.clone());
                c += prev_h + BigUint::from(a);
            }
            debug_assert_eq!(c, heights[k + 1]);
            let width = &stages[k].width / BigRational::from_integer(BigInt::from(pk));
            stages.push(TowerStage {
                k: k + 1,
                height: heights[k + 1].clone(),
                width,
                spacers: Some(stage),
                column_offsets: offsets,
            });
        }
        Ok(Self {
            spec: spec.clone(),
            stages,
        })
    }

    /// Builds a deterministic-mode tower from the spec's own spacer rows.
    pub fn deterministic(spec: &ConstructionSpec) -> Result<Self> {
        let spacers = spec
            .explicit_spacers()
            .ok_or_else(|| Error::param("spec is not in deterministic mode"))?;
        Self::build(spec, spacers)
    }

    /// Builds an Ornstein tower from the draw matrix `x[k] = (x_{k,1}..x_{k,p_k-1})`.
    pub fn ornstein(spec: &ConstructionSpec, draws: &[Vec<i64>]) -> Result<Self> {
        let SpacerMode::Ornstein { t, x_last } = spec.mode() else {
            return Err(Error::param("spec is not in ornstein mode"));
        };
        if draws.len() != spec.stages() {
            return Err(Error::param(format!(
                "expected draws for {} stages, got {}",
                spec.stages(),
                draws.len()
            )));
        }
        let spacers = draws
            .iter()
            .enumerate()
            .map(|(k, row)| ornstein_spacers(k, t[k], spec.p()[k], row, x_last[k]))
            .collect::<Result<Vec<_>>>()?;
        Self::build(spec, spacers)
    }

    pub fn spec(&self) -> &ConstructionSpec {
        &self.spec
    }

    /// Index of the last stage, `K`.
    pub fn top(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn stage(&self, k: usize) -> Result<&TowerStage> {
        self.stages
            .get(k)
            .ok_or_else(|| Error::Index(format!("stage {k} not built (K = {})", self.top())))
    }

    pub fn stages(&self) -> &[TowerStage] {
        &self.stages
    }

    pub fn heights(&self) -> Vec<BigUint> {
        self.stages.iter().map(|s| s.height.clone()).collect()
    }

    /// Spacers used to cut stage `k` (`k < K`).
    pub fn spacers(&self, k: usize) -> Result<&SpacerStage> {
        self.stages
            .get(k + 1)
            .and_then(|s| s.spacers.as_ref())
            .ok_or_else(|| Error::Index(format!("no spacers for stage {k} (K = {})", self.top())))
    }

    /// All spacer stages `0..K`.
    pub fn spacer_stages(&self) -> Vec<&SpacerStage> {
        self.stages.iter().filter_map(|s| s.spacers.as_ref()).collect()
    }

    /// Return times `h_k + a_1^{(k)}` for `k = 0..K-1`.
    pub fn first_column_returns(&self) -> Vec<BigUint> {
        (0..self.top())
            .map(|k| &self.stages[k].height + self.stages[k + 1].spacers.as_ref().map_or(0, |s| s.a[0]))
            .collect()
    }

    /// Classifies level `l` of stage `k >= 1` as a column level or a spacer.
    pub fn decode_level(&self, k: usize, l: &BigUint) -> Result<LevelPosition> {
        if k == 0 {
            return Err(Error::Index("stage 0 has no column structure".into()));
        }
        let stage = self.stage(k)?;
        if *l >= stage.height {
            return Err(Error::Index(format!(
                "level {l} out of range for stage {k} of height {}",
                stage.height
            )));
        }
        let prev_h = &self.stages[k - 1].height;
        // Last column whose offset is <= l.
        let col = stage.column_offsets.partition_point(|c| c <= l) - 1;
        let rel = l - &stage.column_offsets[col];
        if &rel < prev_h {
            Ok(LevelPosition::Column {
                column: col + 1,
                inner: rel,
            })
        } else {
            Ok(LevelPosition::Spacer {
                column: col + 1,
                index: rel - prev_h,
            })
        }
    }

    /// The stage-`k` word over `{B, s}`: `B` marks a level of the base
    /// interval, `s` a spacer added at some stage `< k`.
    pub fn symbolic_name(&self, k: usize) -> Result<String> {
        let stage = self.stage(k)?;
        let len = stage
            .height
            .to_usize()
            .filter(|&n| n <= 1 << 28)
            .ok_or_else(|| Error::TowerTooTall(stage.height.to_string()))?;
        let mut word = String::with_capacity(len);
        word.push('B');
        for j in 1..=k {
            let spacers = self.stages[j].spacers.as_ref().expect("stage >= 1 has spacers");
            let prev = std::mem::take(&mut word);
            for &a in &spacers.a {
                word.push_str(&prev);
                word.extend(std::iter::repeat_n('s', a as usize));
            }
        }
        Ok(word)
    }

    /// Exact mass accounting through stage `K`. `risk_threshold` bounds the
    /// last ratio `t_{K-1} / h_{K-1}` above which the report is flagged.
    pub fn mass_report(&self, risk_threshold: &BigRational) -> MassReport {
        let k_top = self.top();
        let to_rat = |n: &BigUint| BigRational::from_integer(BigInt::from(n.clone()));
        let (partial_sum_spacers, partial_sum_last, diverging_risk) = match self.spec.mode() {
            SpacerMode::Ornstein { t, x_last } => {
                let mut spacers = BigRational::zero();
                let mut last = BigRational::zero();
                for k in 0..k_top {
                    let h = to_rat(&self.stages[k].height);
                    spacers += BigRational::from_integer(BigInt::from(t[k])) / &h;
                    last += BigRational::from_integer(BigInt::from(x_last[k]))
                        / (h * BigRational::from_integer(BigInt::from(self.spec.p()[k])));
                }
                let last_ratio =
                    BigRational::from_integer(BigInt::from(t[k_top - 1])) / to_rat(&self.stages[k_top - 1].height);
                (Some(spacers), Some(last), &last_ratio > risk_threshold)
            }
            SpacerMode::Deterministic { .. } => (None, None, false),
        };
        let mut added = BigRational::zero();
        for stage in &self.stages[1..] {
            let count = stage.spacers.as_ref().map_or(0, SpacerStage::total);
            added += BigRational::from_integer(BigInt::from(count)) * &stage.width;
        }
        MassReport {
            partial_sum_spacers,
            partial_sum_last,
            total_mass_at_k: self.stages[k_top].mass(),
            added_spacer_mass: added,
            diverging_risk,
        }
    }
}

/// Finite-stage view of the total-mass series. Finiteness of the limit is a
/// tail property and is only reported, never decided.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MassReport {
    /// `sum_{k<K} t_k / h_k` (Ornstein mode only).
    pub partial_sum_spacers: Option<BigRational>,
    /// `sum_{k<K} x_{k,p_k} / (p_k h_k)` (Ornstein mode only).
    pub partial_sum_last: Option<BigRational>,
    /// `h_K w_K`.
    pub total_mass_at_k: BigRational,
    /// Measure of all spacer levels added through stage `K`; equals
    /// `total_mass_at_k - 1`.
    pub added_spacer_mass: BigRational,
    /// The last ratio `t_{K-1}/h_{K-1}` exceeded the threshold.
    pub diverging_risk: bool,
}

/// `prod_{i<k} p_i`, the number of base levels in stage `k`.
pub fn base_level_count(p: &[u32], k: usize) -> BigUint {
    p[..k].iter().fold(BigUint::one(), |acc, &pi| acc * pi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chacon(k: usize) -> Tower {
        let spec = ConstructionSpec::deterministic(vec![vec![0, 1, 0]; k]).unwrap();
        Tower::deterministic(&spec).unwrap()
    }

    fn big(n: u64) -> BigUint {
        BigUint::from(n)
    }

    #[test]
    fn pure_product_heights() {
        let spec = ConstructionSpec::deterministic(vec![vec![0; 4]; 3]).unwrap();
        let tower = Tower::deterministic(&spec).unwrap();
        assert_eq!(tower.heights(), vec![big(1), big(4), big(16), big(64)]);
    }

    #[test]
    fn ornstein_heights_by_hand() {
        let spec = ConstructionSpec::ornstein(vec![4, 4], vec![0, 2], vec![0, 0]).unwrap();
        let tower = Tower::ornstein(&spec, &[vec![0, 0, 0], vec![2, -1, 0]]).unwrap();
        assert_eq!(tower.heights(), vec![big(1), big(4), big(32)]);
    }

    #[test]
    fn chacon_first_stage() {
        let t = chacon(1);
        assert_eq!(t.heights(), vec![big(1), big(4)]);
        assert_eq!(t.stage(1).unwrap().column_offsets, vec![big(0), big(1), big(3)]);
    }

    #[test]
    fn ornstein_spacer_examples() {
        assert_eq!(ornstein_spacers(0, 2, 3, &[1, -2], 5).unwrap().a, vec![5, 1, 11]);
        assert_eq!(ornstein_spacers(0, 0, 2, &[0], 0).unwrap().a, vec![0, 0]);
        assert_eq!(ornstein_spacers(0, 1, 2, &[-1], 0).unwrap().a, vec![1, 3]);
    }

    #[test]
    fn ornstein_spacers_reject_bad_draws() {
        assert!(ornstein_spacers(0, 2, 3, &[3, 0], 0).is_err());
        assert!(ornstein_spacers(0, 2, 3, &[0], 0).is_err());
    }

    #[test]
    fn height_sequence_rejects_mismatched_rows() {
        let spec = ConstructionSpec::deterministic(vec![vec![0, 0, 0]]).unwrap();
        let bad = vec![SpacerStage { k: 0, a: vec![0, 0] }];
        assert!(matches!(height_sequence(&spec, &bad), Err(Error::Parameter(_))));
    }

    #[test]
    fn ornstein_rejects_wide_first_stage() {
        let err = ConstructionSpec::ornstein(vec![3, 3], vec![1, 0], vec![0, 0]).unwrap_err();
        assert!(matches!(err, Error::Construction { stage: 0, .. }));
    }

    #[test]
    fn chacon_decoding() {
        let t = chacon(1);
        let got: Vec<_> = (0..4u64).map(|l| t.decode_level(1, &big(l)).unwrap()).collect();
        assert_eq!(
            got,
            vec![
                LevelPosition::Column {
                    column: 1,
                    inner: big(0)
                },
                LevelPosition::Column {
                    column: 2,
                    inner: big(0)
                },
                LevelPosition::Spacer {
                    column: 2,
                    index: big(0)
                },
                LevelPosition::Column {
                    column: 3,
                    inner: big(0)
                },
            ]
        );
        assert!(matches!(t.decode_level(1, &big(4)), Err(Error::Index(_))));
    }

    #[test]
    fn spacer_free_decoding_is_concatenation() {
        let spec = ConstructionSpec::deterministic(vec![vec![0; 3]; 3]).unwrap();
        let t = Tower::deterministic(&spec).unwrap();
        for j in 0..3u64 {
            assert_eq!(
                t.decode_level(3, &big(j * 9)).unwrap(),
                LevelPosition::Column {
                    column: j as usize + 1,
                    inner: big(0)
                }
            );
        }
    }

    #[test]
    fn symbolic_names() {
        assert_eq!(chacon(1).symbolic_name(1).unwrap(), "BBsB");
        assert_eq!(chacon(2).symbolic_name(2).unwrap(), "BBsBBBsBsBBsB");
        let spec = ConstructionSpec::deterministic(vec![vec![0, 0]; 2]).unwrap();
        assert_eq!(Tower::deterministic(&spec).unwrap().symbolic_name(2).unwrap(), "BBBB");
    }

    #[test]
    fn trivial_mass() {
        let spec = ConstructionSpec::ornstein(vec![3; 5], vec![0; 5], vec![0; 5]).unwrap();
        let t = Tower::ornstein(&spec, &vec![vec![0, 0]; 5]).unwrap();
        let m = t.mass_report(&crate::rational::ratio(1, 4));
        assert!(m.partial_sum_spacers.unwrap().is_zero());
        assert!(m.partial_sum_last.unwrap().is_zero());
        assert!(m.total_mass_at_k.is_one());
        assert!(!m.diverging_risk);
    }

    #[test]
    fn chacon_mass_stays_below_three_halves() {
        let t = chacon(20);
        let mut prev = BigRational::zero();
        for stage in t.stages() {
            let m = stage.mass();
            assert!(m > prev);
            assert!(m < crate::rational::ratio(3, 2));
            // h_k = (3^{k+1} - 1) / 2
            let expected = (num_traits::pow(BigUint::from(3u32), stage.k + 1) - 1u32) / 2u32;
            assert_eq!(stage.height, expected);
            prev = m;
        }
    }
}
