//! Seeded sampling of Ornstein draws.
//!
//! The generator is SplitMix64 with its published constants, and draws are
//! taken in row-major order (stage ascending, column ascending) so that a
//! `(spec, seed)` pair reproduces the same matrix on any platform.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;

use crate::construction::{ConstructionSpec, SpacerMode, SpacerStage, Tower};
use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step: returns the advanced state and the output word.
pub fn prng_next(state: u64) -> (u64, u64) {
    let s = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = s;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (s, z ^ (z >> 31))
}

/// Uniform value in `[0, m)` by rejection: outputs at or above
/// `m * floor(2^64 / m)` are discarded.
pub fn sample_uniform(state: u64, m: u64) -> Result<(u64, u64)> {
    if m == 0 {
        return Err(Error::param("sample_uniform: m must be at least 1"));
    }
    let m_wide = u128::from(m);
    let limit = ((1u128 << 64) / m_wide) * m_wide;
    let mut state = state;
    loop {
        let (next, out) = prng_next(state);
        state = next;
        if u128::from(out) < limit {
            return Ok((state, out % m));
        }
    }
}

/// Seeds for `count` independent trials: the successive outputs of the
/// generator started at `master`.
pub fn trial_seeds(master: u64, count: usize) -> Vec<u64> {
    let mut state = master;
    (0..count)
        .map(|_| {
            let (next, out) = prng_next(state);
            state = next;
            out
        })
        .collect()
}

/// A sampled point of the draw space: `x[k] = (x_{k,1}, ..., x_{k,p_k-1})`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OmegaDraw {
    pub seed: u64,
    pub x: Vec<Vec<i64>>,
}

impl OmegaDraw {
    pub fn stages(&self) -> usize {
        self.x.len()
    }

    /// Golden-file text: one line per stage, space-separated decimals, LF.
    pub fn to_golden(&self) -> String {
        let mut out = String::new();
        for row in &self.x {
            let line: Vec<String> = row.iter().map(i64::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Tower built from this draw.
    pub fn tower(&self, spec: &ConstructionSpec) -> Result<Tower> {
        Tower::ornstein(spec, &self.x)
    }
}

/// Parses the golden draw format back into rows. Every line, including the
/// last, must end in LF; fields are single-space separated decimal integers.
pub fn parse_golden(text: &str) -> Result<Vec<Vec<i64>>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| Error::Parse("golden draw file must end with LF".into()))?;
    body.split('\n')
        .enumerate()
        .map(|(line_no, line)| {
            if line.contains('\r') {
                return Err(Error::Parse(format!("line {}: CR not allowed", line_no + 1)));
            }
            if line.is_empty() {
                return Err(Error::Parse(format!("line {}: empty row", line_no + 1)));
            }
            line.split(' ')
                .map(|field| {
                    let digits = field.strip_prefix('-').unwrap_or(field);
                    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                        return Err(Error::Parse(format!("line {}: bad integer {field:?}", line_no + 1)));
                    }
                    field
                        .parse::<i64>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", line_no + 1)))
                })
                .collect()
        })
        .collect()
}

/// Draws `x_{k,i}` uniformly on `{-t_k, ..., t_k}` for every stage of an
/// Ornstein spec, in row-major order from `seed`.
pub fn sample_omega(spec: &ConstructionSpec, seed: u64) -> Result<OmegaDraw> {
    let SpacerMode::Ornstein { t, .. } = spec.mode() else {
        return Err(Error::param("sample_omega requires an ornstein spec"));
    };
    let heights = spec.ornstein_heights().expect("ornstein spec");
    let mut state = seed;
    let mut x = Vec::with_capacity(spec.stages());
    for (k, (&pk, &tk)) in spec.p().iter().zip(t).enumerate() {
        if BigUint::from(tk) * 2u32 > heights[k] {
            return Err(Error::Construction {
                stage: k,
                message: format!("2*t_k exceeds h_k = {}", heights[k]),
            });
        }
        let tk = i64::try_from(tk)
            .ok()
            .filter(|t| *t < i64::MAX / 2)
            .ok_or_else(|| Error::Construction {
                stage: k,
                message: "t_k too large to sample".into(),
            })?;
        let m = (2 * tk + 1) as u64;
        let mut row = Vec::with_capacity(pk as usize - 1);
        for _ in 1..pk {
            let (next, v) = sample_uniform(state, m)?;
            state = next;
            row.push(v as i64 - tk);
        }
        x.push(row);
    }
    Ok(OmegaDraw { seed, x })
}

/// Strictly increasing sequence of positive integers `n_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencySequence {
    n: Vec<BigUint>,
}

impl FrequencySequence {
    pub fn new(n: Vec<BigUint>) -> Result<Self> {
        if n.first().is_some_and(Zero::is_zero) {
            return Err(Error::param("frequency sequence must be positive"));
        }
        if let Some(k) = n.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::param(format!(
                "frequency sequence not strictly increasing at index {}: {} -> {}",
                k,
                n[k],
                n[k + 1]
            )));
        }
        Ok(Self { n })
    }

    pub fn from_u64(values: &[u64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| BigUint::from(v)).collect())
    }

    pub fn values(&self) -> &[BigUint] {
        &self.n
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    /// Largest consecutive ratio `n_{k+1} / n_k`, if there are two terms.
    pub fn max_ratio(&self) -> Option<BigRational> {
        self.n
            .windows(2)
            .map(|w| BigRational::new(BigInt::from(w[1].clone()), BigInt::from(w[0].clone())))
            .max()
    }

    /// Restriction to indices `lo..=hi`.
    pub fn window(&self, lo: usize, hi: usize) -> Result<Self> {
        if lo > hi || hi >= self.n.len() {
            return Err(Error::param(format!(
                "window [{lo}, {hi}] outside indices 0..{}",
                self.n.len()
            )));
        }
        Ok(Self {
            n: self.n[lo..=hi].to_vec(),
        })
    }
}

/// `n_k = h_k + x_{k,1}` for `k = 0..K-1`, checked against
/// `n_{k+1} / n_k <= p_max + 1`.
pub fn frequency_sequence(draw: &OmegaDraw, tower: &Tower) -> Result<FrequencySequence> {
    let stages = tower.top();
    if draw.stages() != stages {
        return Err(Error::param(format!(
            "draw has {} stages, tower has {stages}",
            draw.stages()
        )));
    }
    let mut n = Vec::with_capacity(stages);
    for k in 0..stages {
        let first = *draw.x[k]
            .first()
            .ok_or_else(|| Error::param(format!("stage {k}: no draw x_(k,1)")))?;
        let h = BigInt::from(tower.stage(k)?.height.clone());
        let value = (h + first)
            .to_biguint()
            .filter(|v| !v.is_zero())
            .ok_or_else(|| Error::Invariant {
                module: "ornstein_ensemble",
                stage: k,
                message: "n_k is not positive".into(),
            })?;
        n.push(value);
    }
    let bound = BigUint::from(tower.spec().p_max()) + 1u32;
    for k in 1..n.len() {
        if n[k] > &n[k - 1] * &bound {
            return Err(Error::Invariant {
                module: "ornstein_ensemble",
                stage: k,
                message: format!("n_k / n_(k-1) = {}/{} exceeds p_max + 1 = {bound}", n[k], n[k - 1]),
            });
        }
    }
    FrequencySequence::new(n).map_err(|e| Error::Invariant {
        module: "ornstein_ensemble",
        stage: 0,
        message: e.to_string(),
    })
}

/// Stages containing two adjacent columns with `a_{i+1} = a_i + 1`.
pub fn chacon_pattern_scan<'a>(spacers: impl IntoIterator<Item = &'a SpacerStage>) -> Vec<usize> {
    spacers
        .into_iter()
        .filter(|s| s.a.windows(2).any(|w| w[1] == w[0] + 1))
        .map(|s| s.k)
        .collect()
}
