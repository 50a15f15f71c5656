//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when any
//! criterion fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use stacklab::experiment::{montecarlo_chacon, montecarlo_wmix, run_experiment};
use stacklab::output::{manifest, write_outputs};
use stacklab::{ExperimentConfig, Overrides};
use stacklab_core::rational::{format_ratio, ratio, to_decimal};
use stacklab_core::*;

/// Deterministic test-input generator on top of the library PRNG.
struct Rng(u64);

impl Rng {
    fn below(&mut self, m: u64) -> u64 {
        let (s, v) = sample_uniform(self.0, m).unwrap();
        self.0 = s;
        v
    }

    fn range(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.below(hi - lo + 1)
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let in_budget = elapsed <= budget;
    let pass = outcome.pass && in_budget;
    println!(
        "criterion {id} [{name}]: {} - {} ({:.2}s, budget {}s{})",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail,
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_budget { "" } else { ", over budget" }
    );
    pass
}

fn exact_identities() -> Outcome {
    let mut rng = Rng(0x5EED_0001);
    let mut failures = Vec::new();

    // Telescoping spacer sums on 1000 random stages.
    for i in 0..1000 {
        let t = rng.below(10_000);
        let p = rng.range(2, 12) as u32;
        let x_last = rng.below(100);
        let draws: Vec<i64> = (1..p).map(|_| rng.below(2 * t + 1) as i64 - t as i64).collect();
        let stage = ornstein_spacers(0, t, p, &draws, x_last).unwrap();
        if stage.total() != 2 * u128::from(t) * u128::from(p) + u128::from(x_last) {
            failures.push(format!("telescoping stage {i}"));
        }
    }

    // Both height recursions through K = 20 on 100 random specs.
    for i in 0..100 {
        let k_max = 20;
        let p: Vec<u32> = (0..k_max).map(|_| rng.range(2, 6) as u32).collect();
        let x_last: Vec<u64> = (0..k_max).map(|_| rng.below(5)).collect();
        let mut h = BigUint::one();
        let mut t = Vec::new();
        for k in 0..k_max {
            let cap = (&h / 2u32).to_u64().unwrap_or(u64::MAX).min(1 << 30);
            let tk = if cap == 0 { 0 } else { rng.below(cap + 1) };
            t.push(tk);
            h = (h + 2 * tk) * p[k] + x_last[k];
        }
        let spec = ConstructionSpec::ornstein(p.clone(), t.clone(), x_last.clone()).unwrap();
        let draw = sample_omega(&spec, rng.below(u64::MAX)).unwrap();
        let tower = draw.tower(&spec).unwrap();
        // Cut-and-stack: h_{k+1} = p_k h_k + sum of the stage's spacers.
        let mut stacked = vec![BigUint::one()];
        // Closed form: h_{k+1} = p_k (h_k + 2 t_k) + x_{k,p_k}.
        let mut closed = vec![BigUint::one()];
        for k in 0..k_max {
            let sum: u128 = tower.spacers(k).unwrap().a.iter().map(|&a| u128::from(a)).sum();
            stacked.push(&stacked[k] * p[k] + sum);
            closed.push((&closed[k] + 2 * t[k]) * p[k] + x_last[k]);
        }
        if stacked != closed || tower.heights() != closed {
            failures.push(format!("height recursion spec {i}"));
        }
    }

    // Measure preservation for 50 (n, K) pairs on the Chacon tower.
    let chacon = ConstructionSpec::deterministic(vec![vec![0, 1, 0]; 8]).unwrap();
    let tower = Tower::deterministic(&chacon).unwrap();
    for i in 0..50 {
        let k = rng.range(1, 8) as usize;
        let stage = tower.stage(k).unwrap();
        let h = stage.height.to_u64().unwrap();
        let n = rng.below(h);
        let x = LevelSet::full(&tower, k).unwrap();
        let r = correlation(&tower, &x, &x, n, k).unwrap();
        if r.value != BigRational::from_integer(BigInt::from(h - n)) * &stage.width {
            failures.push(format!("measure preservation pair {i} (n={n}, K={k})"));
        }
    }

    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "1000 telescoping stages, 100 specs x 20 stages, 50 (n,K) pairs; 0 mismatches".into()
        } else {
            format!("{} mismatches, first: {}", failures.len(), failures[0])
        },
    }
}

/// Grid points `m / g` inside any survivor arc, located by integer ranges.
fn survivor_bitmap(arcs: &[Arc], g: u64) -> Vec<bool> {
    let mut marks = vec![false; g as usize];
    let g_rat = BigRational::from_integer(BigInt::from(g));
    for arc in arcs {
        let lo: BigInt = (arc.lo() * &g_rat).floor().to_integer() + 1;
        let hi: BigInt = (arc.hi() * &g_rat).ceil().to_integer() - 1;
        let mut m = lo;
        while m <= hi {
            let idx = m.mod_floor_u64(g);
            marks[idx as usize] = true;
            m += 1;
        }
    }
    marks
}

trait ModFloor {
    fn mod_floor_u64(&self, g: u64) -> u64;
}

impl ModFloor for BigInt {
    fn mod_floor_u64(&self, g: u64) -> u64 {
        let g = BigInt::from(g);
        (((self % &g) + &g) % &g).to_u64().unwrap()
    }
}

/// `||n m / g|| < a / b` in integers.
fn defect_below(n: u64, m: u64, g: u64, a: u64, b: u64) -> bool {
    let r = (u128::from(n) * u128::from(m)) % u128::from(g);
    let dist = r.min(u128::from(g) - r);
    dist * u128::from(b) < u128::from(a) * u128::from(g)
}

fn cardinality_bound() -> Outcome {
    const GRID: u64 = 100_000;
    let mut rng = Rng(0x5EED_0002);
    let mut bound_failures = 0;
    let mut discrepancies = 0u64;
    let mut max_survivors = 0;
    for _ in 0..100 {
        let m_bound = rng.range(2, 6);
        // Ratios drawn in (1, M): n_{k+1} = floor(n_k * r) with r = q / 16.
        let len = rng.range(3, 6) as usize;
        let mut n = vec![rng.range(2, 40)];
        while n.len() < len {
            let last = *n.last().unwrap();
            let q = rng.range(17, 16 * m_bound - 1);
            let next = (last * q / 16).max(last + 1);
            if next >= last * m_bound {
                continue;
            }
            n.push(next);
        }
        let eps_den = 4 * m_bound + rng.range(1, 20);
        let eps = ratio(1, eps_den as i64);
        let seq = FrequencySequence::from_u64(&n).unwrap();
        let l = BigUint::from(rng.below(n[0]));
        let chain = chain_intersect(&seq, &eps, &l).unwrap();
        match cardinality_bound_check(&chain, &ratio(m_bound as i64, 1)) {
            BoundReport::Pass { survivors, .. } => max_survivors = max_survivors.max(survivors),
            _ => bound_failures += 1,
        }
        let marks = survivor_bitmap(&chain.survivors, GRID);
        for m in 0..GRID {
            let oracle = n.iter().all(|&nk| defect_below(nk, m, GRID, 1, eps_den));
            if oracle != marks[m as usize] {
                discrepancies += 1;
            }
        }
    }
    Outcome {
        pass: bound_failures == 0 && discrepancies == 0,
        detail: format!(
            "100 sequences, M in [2,6]: {bound_failures} bound/nesting failures (max survivors {max_survivors}), {discrepancies} grid discrepancies over 10^5 points each"
        ),
    }
}

fn gate_soundness() -> Outcome {
    const GRID: u64 = 10_000;
    let mut violations = 0;
    let mut certified = 0;
    for n in [10u64, 50, 200] {
        for eps_den in [100i64, 500] {
            let eps = ratio(1, eps_den);
            let two_eps = &eps * BigRational::from_integer(2.into());
            for m in 0..GRID {
                let alpha = CircleFrequency::new(ratio(m as i64, GRID as i64));
                if let GateOutcome::Certified { bound } = chacon_gate(&alpha, &BigUint::from(n), &eps) {
                    certified += 1;
                    let norm = circle_norm(alpha.value());
                    if norm >= two_eps || norm > bound {
                        violations += 1;
                    }
                }
            }
        }
    }
    Outcome {
        pass: violations == 0 && certified > 0,
        detail: format!(
            "grid m/10^4 x n in {{10,50,200}} x eps in {{1/100,1/500}}: {certified} certified, {violations} violations"
        ),
    }
}

fn chacon_reproduction() -> Outcome {
    let k = 7;
    let spec = ConstructionSpec::deterministic(vec![vec![0, 1, 0]; k]).unwrap();
    let tower = Tower::deterministic(&spec).unwrap();
    let a = LevelSet::full(&tower, 1).unwrap();
    let h1 = tower.stage(1).unwrap().height.to_u64().unwrap();
    let r = correlation(&tower, &a, &a, h1, k).unwrap();
    let certified = (&r.value - &r.error_bound) * &r.mass / (&r.measure_a * &r.measure_b);
    let rigid = certified >= ratio(3, 5);

    let eps = ratio(1, 5);
    let mut empty_windows = 0;
    let mut windows = 0;
    for k2 in 1..k {
        windows += 1;
        let s = eigenvalue_screen(&tower, None, ScreenSequence::FirstColumn, &eps, (0, k2)).unwrap();
        if s.is_empty() {
            empty_windows += 1;
        }
    }
    // Reported, not asserted: later-starting windows keep finite-stage survivors.
    let late = eigenvalue_screen(&tower, None, ScreenSequence::FirstColumn, &eps, (2, 6)).unwrap();
    Outcome {
        pass: rigid && empty_windows == windows,
        detail: format!(
            "certified normalized correlation at n = h_1 = {h1}, K = {k}: {} (>= 0.6); screen eps 1/5 windows [0,1..6]: {empty_windows}/{windows} empty (window [2,6] keeps {} nontrivial)",
            to_decimal(&certified, 4),
            late.nontrivial.len()
        ),
    }
}

fn odometer_control() -> Outcome {
    let spec = ConstructionSpec::ornstein(vec![2; 10], vec![0; 10], vec![0; 10]).unwrap();
    let draw = sample_omega(&spec, 0).unwrap();
    let tower = draw.tower(&spec).unwrap();
    let mut bad = Vec::new();
    let mut checked = 0;
    for eps in [ratio(1, 50), ratio(1, 10)] {
        for k1 in 0..6 {
            for k2 in [k1 + 1, k1 + 3, 9] {
                checked += 1;
                let s = eigenvalue_screen(&tower, Some(&draw), ScreenSequence::FirstColumn, &eps, (k1, k2)).unwrap();
                let expected = 1usize << k1;
                let dyadic = s
                    .chain
                    .survivors
                    .iter()
                    .all(|arc| (&arc.center * BigRational::from_integer(BigInt::from(expected))).is_integer());
                let centers: std::collections::BTreeSet<_> =
                    s.chain.survivors.iter().map(|a| a.center.clone()).collect();
                if s.chain.survivors.len() != expected || centers.len() != expected || !dyadic {
                    bad.push(format!(
                        "eps {} window [{k1},{k2}]: {} survivors",
                        format_ratio(&eps),
                        s.chain.survivors.len()
                    ));
                }
                if k1 > 0 && s.is_empty() {
                    bad.push(format!("window [{k1},{k2}] reported empty"));
                }
            }
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("{checked} windows: exactly 2^k1 survivors centred at j/2^k1, nontrivial ones kept for k1 >= 1")
        } else {
            bad.join("; ")
        },
    }
}

const WMIX_CONFIG: &str = r#"{
    "experiment": "montecarlo",
    "construction": { "stages": 13, "p": 4, "t": { "monomial": { "coeff": 1, "exp": 2 } }, "x_last": 0 },
    "eps": "1/50",
    "window": [5, 12],
    "trials": 200,
    "master_seed": 1
}"#;

const DIVERGENT_CONFIG: &str = r#"{
    "experiment": "chacon-scan",
    "construction": { "stages": 50, "p": 4, "t": { "constant": { "value": 2, "start": 1 } }, "x_last": 0 },
    "trials": 200,
    "master_seed": 1
}"#;

const CONVERGENT_CONFIG: &str = r#"{
    "experiment": "chacon-scan",
    "construction": { "stages": 30, "p": 4, "t": { "geometric": { "base": 2, "start": 1 } }, "x_last": 0 },
    "trials": 200,
    "master_seed": 1
}"#;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json_str(text, &Overrides::default()).unwrap()
}

fn monte_carlo_trend() -> Outcome {
    let mc = montecarlo_wmix(&config(WMIX_CONFIG)).unwrap();
    let by_end: Vec<BigRational> = (8..=12).map(|e| mc.fraction_empty_at(e).unwrap()).collect();
    let counts: Vec<usize> = mc.by_end.iter().filter(|e| e.end >= 8).map(|e| e.empty).collect();
    let monotone = by_end.windows(2).all(|w| w[0] <= w[1]);
    let final_fraction = mc.fraction_empty().unwrap();
    let high = final_fraction >= ratio(95, 100);
    // Frozen on the first verified run.
    let golden = counts == [0, 49, 151, 184, 198];
    Outcome {
        pass: monotone && high && golden,
        detail: format!(
            "window [5,8..12], 200 trials, seed 1: empty trials {counts:?} (golden [0, 49, 151, 184, 198]), fraction_empty {} >= 0.95, nondecreasing: {monotone}",
            to_decimal(&final_fraction, 3)
        ),
    }
}

fn pattern_scan() -> Outcome {
    let divergent = montecarlo_chacon(&config(DIVERGENT_CONFIG))
        .unwrap()
        .fraction_with_pattern();
    let convergent = montecarlo_chacon(&config(CONVERGENT_CONFIG))
        .unwrap()
        .fraction_with_pattern();
    let golden = divergent == ratio(1, 1) && convergent == ratio(81, 200);
    Outcome {
        pass: divergent >= ratio(99, 100) && convergent < divergent && golden,
        detail: format!(
            "t = 2, K = 50: {} (>= 0.99); t = 2^k, K = 30: {} (strictly lower; golden 1 and 0.405)",
            to_decimal(&divergent, 3),
            to_decimal(&convergent, 3)
        ),
    }
}

fn run_into(text: &str, dir: &Path) -> (Vec<u8>, String) {
    let overrides = Overrides {
        output_path: Some(dir.to_path_buf()),
        ..Overrides::default()
    };
    let cfg = ExperimentConfig::from_json_str(text, &overrides).unwrap();
    let run = run_experiment(&cfg).unwrap();
    let path = write_outputs(dir, &cfg, &run).unwrap();
    let hashes = manifest(&cfg, &run)["files"].to_string();
    assert!(path.exists());
    (fs::read(dir.join("montecarlo.csv")).unwrap(), hashes)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut identical = 0;
    let mut total = 0;
    for (name, text) in [
        ("wmix", WMIX_CONFIG),
        ("divergent", DIVERGENT_CONFIG),
        ("convergent", CONVERGENT_CONFIG),
    ] {
        let dir = tmp.path().join(name);
        let first = run_into(text, &dir);
        let manifest_first = fs::read(dir.join("manifest.json")).unwrap();
        let second = run_into(text, &dir);
        let manifest_second = fs::read(dir.join("manifest.json")).unwrap();
        total += 1;
        if first == second && manifest_first == manifest_second {
            identical += 1;
        }
    }
    Outcome {
        pass: identical == total,
        detail: format!("{identical}/{total} reruns byte-identical (montecarlo.csv, manifest.json, file hashes)"),
    }
}

fn main() {
    // `cargo test -- <filter>` passes arguments; this target runs everything.
    let secs = Duration::from_secs;
    let results = [
        check(1, "exact identities", secs(1), exact_identities),
        check(2, "cardinality bound", secs(10), cardinality_bound),
        check(3, "two-defect gate", secs(5), gate_soundness),
        check(4, "Chacon reproduction", secs(30), chacon_reproduction),
        check(5, "odometer control", secs(10), odometer_control),
        check(6, "Monte Carlo trend", secs(300), monte_carlo_trend),
        check(7, "pattern scan", secs(60), pattern_scan),
        check(8, "determinism", secs(600), determinism),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
