//! Eigenvalue candidates as exact arc chains on the circle `[0, 1)`.
//!
//! For a sequence `n_k` and a tolerance `eps`, the set
//! `B(n) = { a : ||n a|| < eps }` is the union of the `n` open arcs of
//! half-width `eps / n` around `j / n`. Intersecting `B(n_k)` over a window of
//! indices yields finitely many open arcs, and a frequency `a` can only be an
//! eigenvalue if it survives every such window from some point on.
//!
//! Every endpoint is a `BigRational`; there is no floating point in this
//! module.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::construction::Tower;
use crate::ensemble::{frequency_sequence, FrequencySequence, OmegaDraw};
use crate::error::{Error, Result};
use crate::rational::ratio;

/// Distance from `x` to the nearest integer.
pub fn circle_norm(x: &BigRational) -> BigRational {
    let frac = x - x.floor();
    let other = BigRational::one() - &frac;
    if frac <= other {
        frac
    } else {
        other
    }
}

fn fract(x: &BigRational) -> BigRational {
    x - x.floor()
}

fn big(n: &BigUint) -> BigInt {
    BigInt::from(n.clone())
}

fn rat(n: &BigUint) -> BigRational {
    BigRational::from_integer(big(n))
}

/// A point `alpha` of `[0, 1)`, standing for `exp(2 pi i alpha)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CircleFrequency(BigRational);

impl CircleFrequency {
    /// Reduces any rational modulo 1.
    pub fn new(alpha: BigRational) -> Self {
        Self(fract(&alpha))
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    pub fn is_trivial(&self) -> bool {
        self.0.is_zero()
    }
}

/// `||n_k alpha||` for every term of the sequence.
pub fn defect_sequence(alpha: &CircleFrequency, n_seq: &FrequencySequence) -> Vec<BigRational> {
    n_seq
        .values()
        .iter()
        .map(|n| circle_norm(&(alpha.value() * rat(n))))
        .collect()
}

/// Smallest tolerance in `candidates` that `alpha` satisfies strictly on
/// every term of `n_seq`. A candidate is reported with the strongest `eps`
/// it survives; the limiting group is never materialised.
pub fn smallest_surviving_eps(
    alpha: &CircleFrequency,
    n_seq: &FrequencySequence,
    candidates: &[BigRational],
) -> Option<BigRational> {
    let worst = defect_sequence(alpha, n_seq).into_iter().max()?;
    candidates.iter().filter(|eps| **eps > worst).min().cloned()
}

/// The arcs `(j/n - eps/n, j/n + eps/n)`, `j = 0..n`, kept implicitly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalFamily {
    pub n: BigUint,
    pub eps: BigRational,
}

impl IntervalFamily {
    pub fn new(n: BigUint, eps: BigRational) -> Result<Self> {
        check_eps(&eps)?;
        if n.is_zero() {
            return Err(Error::param("interval family needs n >= 1"));
        }
        Ok(Self { n, eps })
    }

    /// `||n alpha|| < eps`.
    pub fn contains(&self, alpha: &BigRational) -> bool {
        circle_norm(&(alpha * rat(&self.n))) < self.eps
    }

    /// The arc around `j / n`.
    pub fn arc(&self, j: &BigUint) -> Arc {
        let n = rat(&self.n);
        Arc {
            center: fract(&(rat(j) / &n)),
            half_width: &self.eps / n,
            parent: None,
        }
    }

    /// Materialises all `n` arcs. Only sensible for small `n`.
    pub fn arcs(&self) -> Vec<Arc> {
        let mut out = Vec::new();
        let mut j = BigUint::zero();
        while j < self.n {
            out.push(self.arc(&j));
            j += 1u32;
        }
        out
    }
}

fn check_eps(eps: &BigRational) -> Result<()> {
    if !eps.is_positive() || *eps >= ratio(1, 2) {
        return Err(Error::param(format!(
            "eps must lie in (0, 1/2), got {}/{}",
            eps.numer(),
            eps.denom()
        )));
    }
    Ok(())
}

/// An open arc of the circle with exact center in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arc {
    pub center: BigRational,
    pub half_width: BigRational,
    /// Index of the enclosing arc in the previous chain stage.
    pub parent: Option<usize>,
}

impl Arc {
    /// Left endpoint in unwrapped coordinates (may be negative).
    pub fn lo(&self) -> BigRational {
        &self.center - &self.half_width
    }

    /// Right endpoint in unwrapped coordinates (may exceed 1).
    pub fn hi(&self) -> BigRational {
        &self.center + &self.half_width
    }

    pub fn contains(&self, alpha: &BigRational) -> bool {
        circle_norm(&(alpha - &self.center)) < self.half_width
    }

    /// Whether the arc contains the trivial frequency 0.
    pub fn contains_zero(&self) -> bool {
        self.contains(&BigRational::zero())
    }

    fn from_endpoints(lo: BigRational, hi: BigRational, parent: usize) -> Self {
        let two = BigRational::from_integer(BigInt::from(2));
        let center = (&lo + &hi) / &two;
        let half_width = (hi - lo) / two;
        Arc {
            center: fract(&center),
            half_width,
            parent: Some(parent),
        }
    }
}

fn cmp_center(a: &Arc, b: &Arc) -> Ordering {
    a.center.cmp(&b.center).then_with(|| a.half_width.cmp(&b.half_width))
}

/// Surviving arcs after intersecting with `B(n)` for one more index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainStage {
    /// Position of this stage inside the original sequence.
    pub index: usize,
    pub n: BigUint,
    pub arcs: Vec<Arc>,
}

/// `A(eps, L) = intersection of B(n_k) over n_k > L`, truncated at the end
/// of the supplied sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateChain {
    pub eps: BigRational,
    pub l: BigUint,
    /// First index with `n_k > L`.
    pub k0: usize,
    /// The tail `n_{k0}, n_{k0+1}, ...`.
    pub tail: FrequencySequence,
    /// `B(n_{k0})`, kept implicit.
    pub start: IntervalFamily,
    /// One entry per refinement `k0+1, k0+2, ...`; parent links of the first
    /// entry are arc numbers `j` of `start`.
    pub stages: Vec<ChainStage>,
    /// Final arcs sorted by center.
    pub survivors: Vec<Arc>,
}

impl CandidateChain {
    pub fn n_k0(&self) -> &BigUint {
        &self.start.n
    }

    /// Whether `alpha` lies in a surviving arc.
    pub fn contains(&self, alpha: &BigRational) -> bool {
        let alpha = fract(alpha);
        self.survivors.iter().any(|arc| arc.contains(&alpha))
    }

    /// Survivors that do not contain 0.
    pub fn nontrivial(&self) -> Vec<Arc> {
        self.survivors.iter().filter(|a| !a.contains_zero()).cloned().collect()
    }
}

/// Intersects the arc families of every `n_k > L` in order, keeping parent
/// links.
pub fn chain_intersect(n_seq: &FrequencySequence, eps: &BigRational, l: &BigUint) -> Result<CandidateChain> {
    check_eps(eps)?;
    let values = n_seq.values();
    let k0 = values
        .iter()
        .position(|n| n > l)
        .ok_or_else(|| Error::WindowEmpty(l.to_string()))?;
    let tail = FrequencySequence::new(values[k0..].to_vec())?;
    let start = IntervalFamily::new(values[k0].clone(), eps.clone())?;

    let mut stages: Vec<ChainStage> = Vec::with_capacity(tail.len().saturating_sub(1));
    for (offset, n_next) in tail.values().iter().enumerate().skip(1) {
        let arcs = match stages.last() {
            None => refine_family(&start, n_next, eps),
            Some(prev) => refine_arcs(&prev.arcs, n_next, eps),
        };
        stages.push(ChainStage {
            index: k0 + offset,
            n: n_next.clone(),
            arcs,
        });
    }

    let mut survivors = match stages.last() {
        Some(stage) => stage.arcs.clone(),
        None => start.arcs(),
    };
    survivors.sort_by(cmp_center);
    Ok(CandidateChain {
        eps: eps.clone(),
        l: l.clone(),
        k0,
        tail,
        start,
        stages,
        survivors,
    })
}

/// First refinement. `B(n_{k0})` can hold many thousands of arcs and most of
/// them die immediately, so the meeting pairs `(j, i)` are found in integer
/// arithmetic and only the hits become rational arcs.
fn refine_family(family: &IntervalFamily, n_next: &BigUint, eps: &BigRational) -> Vec<Arc> {
    let n_rat = rat(&family.n);
    let m_rat = rat(n_next);
    let mut out = Vec::new();
    let mut emit = |j: BigInt, i: BigInt| {
        let jr = BigRational::from_integer(j);
        let ir = BigRational::from_integer(i);
        let lo = std::cmp::max((&jr - eps) / &n_rat, (&ir - eps) / &m_rat);
        let hi = std::cmp::min((&jr + eps) / &n_rat, (&ir + eps) / &m_rat);
        if lo < hi {
            let parent = jr.to_integer().to_usize().expect("arc index fits in usize");
            out.push(Arc::from_endpoints(lo, hi, parent));
        }
    };
    // Child i meets parent j iff (j - eps) m / n - eps < i < (j + eps) m / n + eps,
    // i.e. ((jb - a) m - an) / nb < i < ((jb + a) m + an) / nb with eps = a/b.
    let small = |x: &BigInt, bits: u64| x.bits() <= bits;
    let (a, b) = (eps.numer(), eps.denom());
    let (n, m) = (big(&family.n), big(n_next));
    if small(&n, 48) && small(&m, 48) && small(a, 24) && small(b, 24) {
        let to = |x: &BigInt| x.to_i128().expect("checked bit length");
        let (n, m, a, b) = (to(&n), to(&m), to(a), to(b));
        let nb = n * b;
        for j in 0..n {
            let low = Integer::div_floor(&((j * b - a) * m - a * n), &nb) + 1;
            let high = -Integer::div_floor(&(-((j * b + a) * m + a * n)), &nb) - 1;
            for i in low..=high {
                emit(BigInt::from(j), BigInt::from(i));
            }
        }
    } else {
        let nb = &n * b;
        let mut j = BigInt::zero();
        while j < n {
            let low: BigInt = ((&j * b - a) * &m - a * &n).div_floor(&nb) + 1;
            let high = ceil_div(&((&j * b + a) * &m + a * &n), &nb) - 1;
            let mut i = low;
            while i <= high {
                emit(j.clone(), i.clone());
                i += 1;
            }
            j += 1;
        }
    }
    out
}

fn refine_arcs(parents: &[Arc], n_next: &BigUint, eps: &BigRational) -> Vec<Arc> {
    let m_rat = rat(n_next);
    let mut out = Vec::new();
    for (p_idx, parent) in parents.iter().enumerate() {
        let lo = parent.lo();
        let hi = parent.hi();
        let i_min: BigInt = (&lo * &m_rat - eps).floor().to_integer() + 1;
        let i_max = (&hi * &m_rat + eps).ceil().to_integer() - 1;
        let mut i = i_min;
        while i <= i_max {
            let ir = BigRational::from_integer(i.clone());
            let child_lo = (&ir - eps) / &m_rat;
            let child_hi = (&ir + eps) / &m_rat;
            let new_lo = std::cmp::max(lo.clone(), child_lo);
            let new_hi = std::cmp::min(hi.clone(), child_hi);
            if new_lo < new_hi {
                out.push(Arc::from_endpoints(new_lo, new_hi, p_idx));
            }
            i += 1;
        }
    }
    out
}

fn ceil_div(num: &BigInt, den: &BigInt) -> BigInt {
    -((-num).div_floor(den))
}

/// Outcome of checking the finite-stage cardinality bound on a chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundReport {
    /// Every arc had at most one child and `|survivors| <= n_{k0}`.
    Pass { survivors: usize, bound: BigUint },
    /// The check failed at the given chain index.
    Fail { stage: usize, reason: String },
    /// The hypotheses `eps < 1/(4M)` or `n_{k+1}/n_k < M` do not hold.
    NotApplicable { reason: String },
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        matches!(self, BoundReport::Pass { .. })
    }
}

/// Checks that when `eps < 1/(4M)` and all ratios are below `M`, no arc
/// meets two arcs of the next family (the separation
/// `(1 - 2 eps)/n_{k+1} > 2 eps / n_k` holds) and at most `n_{k0}` arcs
/// survive.
pub fn cardinality_bound_check(chain: &CandidateChain, ratio_bound: &BigRational) -> BoundReport {
    let four_m = ratio_bound * BigRational::from_integer(BigInt::from(4));
    if !ratio_bound.is_positive() || chain.eps.clone() * &four_m >= BigRational::one() {
        return BoundReport::NotApplicable {
            reason: format!("eps = {} is not below 1/(4M) with M = {}", chain.eps, ratio_bound),
        };
    }
    let values = chain.tail.values();
    for (offset, w) in values.windows(2).enumerate() {
        if BigRational::new(big(&w[1]), big(&w[0])) >= *ratio_bound {
            return BoundReport::NotApplicable {
                reason: format!(
                    "ratio n_{}/n_{} = {}/{} is not below M = {}",
                    chain.k0 + offset + 1,
                    chain.k0 + offset,
                    w[1],
                    w[0],
                    ratio_bound
                ),
            };
        }
    }

    let one = BigRational::one();
    let two_eps = &chain.eps * BigRational::from_integer(BigInt::from(2));
    for (offset, w) in values.windows(2).enumerate() {
        let gap = (&one - &two_eps) / rat(&w[1]);
        let overlap = &two_eps / rat(&w[0]);
        if gap <= overlap {
            return BoundReport::Fail {
                stage: chain.k0 + offset + 1,
                reason: format!("separation (1-2eps)/n = {gap} does not exceed 2eps/n = {overlap}"),
            };
        }
    }

    for (s, stage) in chain.stages.iter().enumerate() {
        let parent_count = if s == 0 {
            None
        } else {
            Some(chain.stages[s - 1].arcs.len())
        };
        let mut seen: Vec<usize> = stage.arcs.iter().filter_map(|a| a.parent).collect();
        seen.sort_unstable();
        if let Some(dup) = seen.windows(2).find(|w| w[0] == w[1]) {
            return BoundReport::Fail {
                stage: stage.index,
                reason: format!("arc {} of the previous stage has two children", dup[0]),
            };
        }
        if let (Some(count), Some(&last)) = (parent_count, seen.last()) {
            if last >= count {
                return BoundReport::Fail {
                    stage: stage.index,
                    reason: format!("dangling parent link {last}"),
                };
            }
        }
    }

    let bound = chain.n_k0().clone();
    if BigUint::from(chain.survivors.len()) > bound {
        return BoundReport::Fail {
            stage: chain.k0 + chain.stages.len(),
            reason: format!("{} survivors exceed n_k0 = {bound}", chain.survivors.len()),
        };
    }
    BoundReport::Pass {
        survivors: chain.survivors.len(),
        bound,
    }
}

/// Result of combining the defects at `n` and `n + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GateOutcome {
    /// Both defects are below `eps`; `||alpha|| <= bound < 2 eps`.
    Certified { bound: BigRational },
    /// At least one defect is not below `eps`.
    Inapplicable {
        defect_n: BigRational,
        defect_next: BigRational,
    },
}

/// Since `alpha = (n+1) alpha - n alpha` and the circle norm is subadditive,
/// small defects at two consecutive return times force `alpha` near 0.
pub fn chacon_gate(alpha: &CircleFrequency, n: &BigUint, eps: &BigRational) -> GateOutcome {
    let defect_n = circle_norm(&(alpha.value() * rat(n)));
    let defect_next = circle_norm(&(alpha.value() * rat(&(n + 1u32))));
    if defect_n < *eps && defect_next < *eps {
        GateOutcome::Certified {
            bound: defect_n + defect_next,
        }
    } else {
        GateOutcome::Inapplicable { defect_n, defect_next }
    }
}

/// Which return-time sequence a screen runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScreenSequence {
    /// `h_k + a_1^{(k)}`, the return time of the first column.
    FirstColumn,
    /// `h_k + x_{k,1}`, defined from the draw.
    Omega,
}

impl ScreenSequence {
    pub fn name(self) -> &'static str {
        match self {
            ScreenSequence::FirstColumn => "first-column",
            ScreenSequence::Omega => "omega",
        }
    }
}

/// Builds the selected return-time sequence for a tower.
pub fn screen_sequence(tower: &Tower, draw: Option<&OmegaDraw>, sequence: ScreenSequence) -> Result<FrequencySequence> {
    match sequence {
        ScreenSequence::FirstColumn => FrequencySequence::new(tower.first_column_returns()),
        ScreenSequence::Omega => {
            let draw = draw.ok_or_else(|| Error::param("the omega sequence needs a sampled draw"))?;
            frequency_sequence(draw, tower)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScreenResult {
    pub sequence: ScreenSequence,
    pub window: (usize, usize),
    pub chain: CandidateChain,
    /// Surviving arcs not containing 0.
    pub nontrivial: Vec<Arc>,
}

impl ScreenResult {
    /// No nontrivial candidate survived at this `(eps, window)`.
    pub fn is_empty(&self) -> bool {
        self.nontrivial.is_empty()
    }
}

/// Runs the chain over `n_{k1}..=n_{k2}` of the chosen sequence, starting at
/// `k1` (`L = n_{k1} - 1`).
pub fn eigenvalue_screen(
    tower: &Tower,
    draw: Option<&OmegaDraw>,
    sequence: ScreenSequence,
    eps: &BigRational,
    window: (usize, usize),
) -> Result<ScreenResult> {
    let full = screen_sequence(tower, draw, sequence)?;
    let (k1, k2) = window;
    let n_seq = full.window(k1, k2)?;
    let l = &n_seq.values()[0] - 1u32;
    let mut chain = chain_intersect(&n_seq, eps, &l)?;
    chain.k0 = k1;
    for stage in &mut chain.stages {
        stage.index += k1;
    }
    let nontrivial = chain.nontrivial();
    Ok(ScreenResult {
        sequence,
        window,
        chain,
        nontrivial,
    })
}

pub const SURVIVOR_CSV_HEADER: &str = "center_numerator,center_denominator,halfwidth_numerator,halfwidth_denominator";

/// Survivor arcs as CSV, sorted by center.
pub fn survivors_to_csv(arcs: &[Arc]) -> String {
    let mut sorted: Vec<&Arc> = arcs.iter().collect();
    sorted.sort_by(|a, b| cmp_center(a, b));
    let mut out = String::from(SURVIVOR_CSV_HEADER);
    out.push('\n');
    for arc in sorted {
        out.push_str(&format!(
            "{},{},{},{}\n",
            arc.center.numer(),
            arc.center.denom(),
            arc.half_width.numer(),
            arc.half_width.denom()
        ));
    }
    out
}

/// Reads a survivor CSV back. Rows must be sorted by center, with centers
/// in `[0, 1)`, positive half-widths below `1/2` and reduced fractions.
pub fn parse_survivors_csv(text: &str) -> Result<Vec<Arc>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == SURVIVOR_CSV_HEADER => {}
        _ => return Err(Error::Parse("missing survivor CSV header".into())),
    }
    let mut arcs: Vec<Arc> = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!("row {}: expected 4 columns", row + 1)));
        }
        let nums = fields
            .iter()
            .map(|f| {
                let f = f.trim();
                let digits = f.strip_prefix('-').unwrap_or(f);
                if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(Error::Parse(format!("row {}: bad integer {f:?}", row + 1)));
                }
                f.parse::<BigInt>()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        let frac = |num: &BigInt, den: &BigInt| -> Result<BigRational> {
            if !den.is_positive() {
                return Err(Error::Parse(format!("row {}: non-positive denominator", row + 1)));
            }
            if !num.gcd(den).is_one() {
                return Err(Error::Parse(format!("row {}: fraction not reduced", row + 1)));
            }
            Ok(BigRational::new_raw(num.clone(), den.clone()))
        };
        let center = frac(&nums[0], &nums[1])?;
        let half_width = frac(&nums[2], &nums[3])?;
        if center.is_negative() || center >= BigRational::one() {
            return Err(Error::Parse(format!("row {}: center outside [0, 1)", row + 1)));
        }
        if !half_width.is_positive() || half_width >= ratio(1, 2) {
            return Err(Error::Parse(format!("row {}: half-width outside (0, 1/2)", row + 1)));
        }
        let arc = Arc {
            center,
            half_width,
            parent: None,
        };
        if arcs
            .last()
            .is_some_and(|prev| cmp_center(prev, &arc) == Ordering::Greater)
        {
            return Err(Error::Parse(format!("row {}: rows not sorted by center", row + 1)));
        }
        arcs.push(arc);
    }
    Ok(arcs)
}
