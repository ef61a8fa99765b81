//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

mod common;

use cone_bandit::analysis::{
    bound_multiple_shift, bound_single_shift, dissimilarity, dissimilarity_monte_carlo, step_regret,
    BoundParams, Dissimilarity, RegretMeasure,
};
use cone_bandit::cone::ConeSpec;
use cone_bandit::environment::{DistributionSpec, ShiftSchedule, SyntheticInstance};
use cone_bandit::harness::{sweep, PolicyKind, RunConfig, RunResult, SweepConfig};
use cone_bandit::pareto::{gap_table, pareto_indices, pareto_set, pref_distance, GapSolverConfig};
use cone_bandit::partition::BinId;
use cone_bandit::policy::{InvariantReport, Policy, PolicyParams, PolicyState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

const GRID_RESOLUTION: f64 = 1e-4;
const GAP_TOL: f64 = 2e-3;
const GAP_TABLE_BUDGET: Duration = Duration::from_secs(5);
const METRIC_TRIPLES: usize = 1000;
const METRIC_SLACK: f64 = 4.0 * GRID_RESOLUTION;
const METRIC_BUDGET: Duration = Duration::from_secs(60);
const ORDER_SAMPLES: usize = 10_000;
const ORDER_TOL: f64 = 1e-9;
const DISSIMILARITY_MAX_DEPTH: u32 = 10;
const DISSIMILARITY_TOL: f64 = 1e-9;
const MONTE_CARLO_SAMPLES: usize = 1_000_000;
const MONTE_CARLO_REL_TOL: f64 = 0.02;
const STUDY_ARMS: usize = 20;
const STUDY_HORIZON: u64 = 20_000;
const STUDY_CHANGE_POINTS: [u64; 3] = [1000, 2000, 3000];
const STUDY_SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];
const STUDY_REGRET_RATIO: f64 = 0.5;
const STUDY_WINDOW: f64 = 0.1;
const STUDY_BUDGET: Duration = Duration::from_secs(600);
const ZERO_NOISE_HORIZON: u64 = 10_000;
const ZERO_NOISE_C_BETA: f64 = 1e-3;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn gap_cfg() -> GapSolverConfig {
    GapSolverConfig {
        grid_resolution: GRID_RESOLUTION,
        ..GapSolverConfig::default()
    }
}

fn criterion_1() -> Verdict {
    let expected_c1 = [0.1719, 0.1542, 0.0870, 0.2231, 0.0488, 0.0, 0.0, 0.3054, 0.0, 0.0];
    let expected_c3 = [0.0, 0.0, 0.0, 0.0392, 0.0, 0.0, 0.0, 0.0556, 0.0, 0.0];
    let pareto_c1 = [false, false, false, false, false, true, true, false, true, true];
    let pareto_c3 = [false, true, true, false, true, true, true, false, true, true];
    let start = Instant::now();
    let cones = vec![
        ("C1".to_string(), common::orthant2()),
        ("C3".to_string(), common::narrow_cone()),
    ];
    let rows = gap_table(&common::arm_table(), &cones, &gap_cfg()).unwrap();
    let elapsed = start.elapsed();
    let mut worst: f64 = 0.0;
    let mut flags_ok = true;
    for (k, row) in rows.iter().enumerate() {
        flags_ok &= row.pareto == [pareto_c1[k], pareto_c3[k]];
        worst = worst.max((row.delta[0] - expected_c1[k]).abs());
        worst = worst.max((row.delta[1] - expected_c3[k]).abs());
    }
    verdict(
        flags_ok && worst <= GAP_TOL && elapsed < GAP_TABLE_BUDGET,
        format!("flags match: {flags_ok}, max |Δ error| {worst:.2e} (tol {GAP_TOL:e}), {elapsed:.2?}"),
    )
}

fn criterion_2() -> Verdict {
    let t = common::arm_table();
    let c1 = pareto_set(&t, &common::orthant2()).unwrap();
    let c3 = pareto_set(&t, &common::narrow_cone()).unwrap();
    let ok = c1 == [5, 6, 8, 9] && c3 == [1, 2, 4, 5, 6, 8, 9];
    verdict(ok, format!("orthant {c1:?}, narrow cone {c3:?}"))
}

fn random_front(rng: &mut ChaCha8Rng, dim: usize, cone: &ConeSpec) -> Vec<Vec<f64>> {
    let n = rng.random_range(1..=4);
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(0.1..=10.0)).collect())
        .collect();
    pareto_indices(&pts, cone).into_iter().map(|k| pts[k].clone()).collect()
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let cfg = gap_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut nonneg, mut symmetry, mut identity, mut triangle) = (0, 0, 0, 0);
    let mut worst_excess: f64 = 0.0;
    for _ in 0..METRIC_TRIPLES {
        let dim = if rng.random_bool(0.5) { 2 } else { 3 };
        let cone = ConeSpec::orthant(dim).unwrap();
        let a = random_front(&mut rng, dim, &cone);
        let b = random_front(&mut rng, dim, &cone);
        let c = random_front(&mut rng, dim, &cone);
        let d = |x: &[Vec<f64>], y: &[Vec<f64>]| pref_distance(x, y, &cone, &cfg).unwrap();
        let (ab, ba, bc, ac, aa) = (d(&a, &b), d(&b, &a), d(&b, &c), d(&a, &c), d(&a, &a));
        if ab < 0.0 || bc < 0.0 || ac < 0.0 {
            nonneg += 1;
        }
        if (ab - ba).abs() > METRIC_SLACK {
            symmetry += 1;
        }
        if aa > METRIC_SLACK {
            identity += 1;
        }
        let excess = ac - ab - bc;
        if excess > METRIC_SLACK {
            triangle += 1;
            worst_excess = worst_excess.max(excess);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        nonneg + symmetry + identity + triangle == 0 && elapsed < METRIC_BUDGET,
        format!(
            "violations over {METRIC_TRIPLES} triples: nonnegativity {nonneg}, symmetry {symmetry}, \
             identity {identity}, triangle {triangle} (worst excess {worst_excess:.4}); {elapsed:.2?}"
        ),
    )
}

fn random_vec(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(lo..hi)).collect()
}

fn mat_vec(rows: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    rows.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn criterion_4() -> Verdict {
    let cones = vec![
        ("orthant2", ConeSpec::orthant(2).unwrap()),
        ("orthant3", ConeSpec::orthant(3).unwrap()),
        ("narrow2", common::narrow_cone()),
        (
            "skew3",
            ConeSpec::from_generators(&[vec![1.0, 0.3, 0.2], vec![0.1, 1.0, 0.4], vec![0.3, 0.2, 1.0]]).unwrap(),
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = Vec::new();
    for (name, cone) in &cones {
        let dim = cone.dim();
        let w = cone.generator_rows();
        let a = cone.normal_rows();
        let mut bad = 0usize;
        for i in 0..dim {
            let col: Vec<f64> = (0..dim).map(|r| w[r][i]).collect();
            let e = mat_vec(&a, &col);
            for (j, v) in e.iter().enumerate() {
                if (v - if i == j { 1.0 } else { 0.0 }).abs() > ORDER_TOL {
                    bad += 1;
                }
            }
        }
        for _ in 0..ORDER_SAMPLES {
            let y = random_vec(&mut rng, dim, -5.0, 5.0);
            if !cone.weakly_dominates(&y, &y).unwrap() || cone.dominates(&y, &y).unwrap() || cone.strictly_dominates(&y, &y).unwrap() {
                bad += 1;
            }
            // generator combinations lie in the cone; a negative coefficient leaves it
            let mut coef = random_vec(&mut rng, dim, 0.0, 2.0);
            if rng.random_bool(0.2) {
                coef[rng.random_range(0..dim)] = 0.0;
            }
            let v = mat_vec(&w, &coef);
            let margins = cone.margins(&v).unwrap();
            if margins.iter().zip(&coef).any(|(m, c)| (m - c).abs() > ORDER_TOL) || !cone.contains(&v).unwrap() {
                bad += 1;
            }
            let mut out = coef.clone();
            out[rng.random_range(0..dim)] = -rng.random_range(ORDER_TOL * 10.0..1.0);
            if cone.contains(&mat_vec(&w, &out)).unwrap() {
                bad += 1;
            }
            // chains x ≤ y ≤ z built from generator steps
            let x = random_vec(&mut rng, dim, -5.0, 5.0);
            let step1 = mat_vec(&w, &random_vec(&mut rng, dim, 0.01, 1.0));
            let step2 = mat_vec(&w, &random_vec(&mut rng, dim, 0.01, 1.0));
            let yv: Vec<f64> = x.iter().zip(&step1).map(|(a, b)| a + b).collect();
            let zv: Vec<f64> = yv.iter().zip(&step2).map(|(a, b)| a + b).collect();
            let chain = cone.dominates(&yv, &x).unwrap() && cone.dominates(&zv, &yv).unwrap();
            if !chain || !cone.dominates(&zv, &x).unwrap() || cone.dominates(&x, &zv).unwrap() {
                bad += 1;
            }
            if !(cone.strictly_dominates(&zv, &x).unwrap() && cone.strictly_dominates(&yv, &x).unwrap()) {
                bad += 1;
            }
            // random pairs: strict implies plain implies weak, and no two-way dominance
            let u = random_vec(&mut rng, dim, -1.0, 1.0);
            let s = cone.strictly_dominates(&u, &y).unwrap();
            let p = cone.dominates(&u, &y).unwrap();
            let wk = cone.weakly_dominates(&u, &y).unwrap();
            if (s && !p) || (p && !wk) || (p && cone.dominates(&y, &u).unwrap()) {
                bad += 1;
            }
        }
        if bad > 0 {
            failures.push(format!("{name}: {bad}"));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{} cones × {ORDER_SAMPLES} samples, tol {ORDER_TOL:e}; failures: {}",
            cones.len(),
            if failures.is_empty() { "none".to_string() } else { failures.join(", ") }
        ),
    )
}

fn criterion_5() -> Verdict {
    let u = DistributionSpec::uniform(1);
    let p = DistributionSpec::power_law(1.0);
    let mut exact = true;
    for h in 0..=DISSIMILARITY_MAX_DEPTH {
        exact &= dissimilarity(&u, &u, h, 1).unwrap() == Dissimilarity::Finite((1u64 << h) as f64);
    }
    let closed = dissimilarity(&p, &u, 1, 1).unwrap().value();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mc = dissimilarity_monte_carlo(&p, &u, 1, 1, MONTE_CARLO_SAMPLES, &mut rng)
        .unwrap()
        .value();
    let target = 8.0 / 3.0;
    let closed_ok = (closed - target).abs() <= DISSIMILARITY_TOL;
    let mc_rel = (mc - target).abs() / target;
    verdict(
        exact && closed_ok && mc_rel <= MONTE_CARLO_REL_TOL,
        format!(
            "ρ_h(Q,Q)=2^h for h≤{DISSIMILARITY_MAX_DEPTH}: {exact}; closed form {closed:.12} (tol {DISSIMILARITY_TOL:e}); \
             Monte Carlo {mc:.4} (rel err {mc_rel:.4}, tol {MONTE_CARLO_REL_TOL})"
        ),
    )
}

struct Study {
    /// (change point, policy) -> result
    cells: BTreeMap<(u64, &'static str), RunResult>,
    elapsed: Duration,
}

fn run_study() -> Study {
    let start = Instant::now();
    let mut cfg = RunConfig::from_toml_str(&common::study_toml(STUDY_ARMS, STUDY_HORIZON, 2000, &STUDY_SEEDS)).unwrap();
    cfg.sweep = SweepConfig {
        change_points: STUDY_CHANGE_POINTS.to_vec(),
        policies: vec![PolicyKind::Algorithm1, PolicyKind::RandomBaseline],
        ..SweepConfig::default()
    };
    let mut cells = BTreeMap::new();
    for cell in sweep(&cfg).unwrap() {
        let name = match cell.point.policy.unwrap() {
            PolicyKind::Algorithm1 => "algorithm1",
            PolicyKind::RandomBaseline => "random",
        };
        cells.insert((cell.point.change_point.unwrap(), name), cell.result.unwrap());
    }
    Study {
        cells,
        elapsed: start.elapsed(),
    }
}

fn criterion_6(study: &Study) -> Verdict {
    let mut lines = Vec::new();
    let mut ratio_ok = true;
    for tp in STUDY_CHANGE_POINTS {
        let a = study.cells[&(tp, "algorithm1")].summary().mean;
        let r = study.cells[&(tp, "random")].summary().mean;
        ratio_ok &= a <= STUDY_REGRET_RATIO * r;
        lines.push(format!("t_p={tp}: alg {a:.1} vs random {r:.1} (ratio {:.3})", a / r));
    }
    let alg: Vec<_> = STUDY_CHANGE_POINTS
        .iter()
        .map(|tp| study.cells[&(*tp, "algorithm1")].summary().clone())
        .collect();
    let mut inversions = 0;
    let mut inversion_ok = true;
    for w in alg.windows(2) {
        if w[1].mean > w[0].mean {
            inversions += 1;
            let pooled = ((w[0].std.powi(2) + w[1].std.powi(2)) / 2.0).sqrt();
            inversion_ok &= w[1].mean - w[0].mean <= pooled;
        }
    }
    let monotone_ok = inversions == 0 || (inversions == 1 && inversion_ok);
    let mut sublinear_ok = true;
    for tp in STUDY_CHANGE_POINTS {
        let traces = &study.cells[&(tp, "algorithm1")].traces;
        let (mut first, mut last) = (0.0, 0.0);
        for t in traces {
            let w = ((t.len() as f64) * STUDY_WINDOW) as usize;
            first += t.window_mean(0, w);
            last += t.window_mean(t.len() - w, t.len());
        }
        let n = traces.len() as f64;
        sublinear_ok &= last / n < first / n;
        lines.push(format!("t_p={tp}: per-round first 10% {:.4}, last 10% {:.4}", first / n, last / n));
    }
    let time_ok = study.elapsed < STUDY_BUDGET;
    verdict(
        ratio_ok && monotone_ok && sublinear_ok && time_ok,
        format!(
            "(a) {ratio_ok} (b) {monotone_ok} [{inversions} inversion(s)] (c) {sublinear_ok}; {:.1?}; {}",
            study.elapsed,
            lines.join("; ")
        ),
    )
}

struct ZeroNoise {
    pareto_losses: u64,
    stabilized_at: u64,
    nonzero_after: usize,
    reached_zero: bool,
    invariants: InvariantReport,
    audit: Vec<String>,
}

fn run_zero_noise() -> ZeroNoise {
    let table = common::arm_table();
    let instance = SyntheticInstance::table_fixed(table.clone(), 1);
    let cone = common::orthant2();
    let front = pareto_set(&table, &cone).unwrap();
    let schedule = ShiftSchedule::single_shift(
        DistributionSpec::uniform(1),
        0,
        DistributionSpec::uniform(1),
        ZERO_NOISE_HORIZON,
    );
    let params = PolicyParams {
        sigma: 0.0,
        c_beta: ZERO_NOISE_C_BETA,
        ..PolicyParams::new(table.len(), table.dim(), 1.0 / ZERO_NOISE_HORIZON as f64)
    };
    let mut policy = PolicyState::new(params, 1, cone.clone(), ChaCha8Rng::seed_from_u64(72)).unwrap();
    let mut ctx = ChaCha8Rng::seed_from_u64(71);
    let cfg = gap_cfg();
    let mut last_sets: BTreeMap<BinId, Vec<usize>> = BTreeMap::new();
    let mut regret = Vec::new();
    let mut stabilized_at = 0;
    let mut pareto_losses = 0;
    for t in 1..=ZERO_NOISE_HORIZON {
        let x = schedule.sample_context(t, &mut ctx).unwrap();
        let rec = policy
            .step(&x, &mut |k| instance.mean_reward(k, &x).unwrap().into_inner())
            .unwrap();
        if front.iter().any(|k| !rec.active_set.contains(k)) {
            pareto_losses += 1;
        }
        if last_sets.get(&rec.bin) != Some(&rec.active_set) {
            last_sets.insert(rec.bin, rec.active_set.clone());
            stabilized_at = t;
        }
        let played = step_regret(&rec, &instance, &cone, &cfg, RegretMeasure::PlayedArm).unwrap();
        let support = step_regret(&rec, &instance, &cone, &cfg, RegretMeasure::ActiveSupport).unwrap();
        regret.push(played.max(support));
    }
    for (_, node) in policy.tree().nodes() {
        if front.iter().any(|k| !node.stats.is_active(*k)) {
            pareto_losses += 1;
        }
    }
    let after = &regret[stabilized_at as usize..];
    ZeroNoise {
        pareto_losses,
        stabilized_at,
        nonzero_after: after.iter().filter(|r| **r != 0.0).count(),
        reached_zero: !after.is_empty(),
        invariants: policy.invariants(),
        audit: policy.tree().audit(),
    }
}

fn criterion_7(z: &ZeroNoise) -> Verdict {
    verdict(
        z.pareto_losses == 0 && z.reached_zero && z.nonzero_after == 0,
        format!(
            "Pareto arms lost {}; active sets stable from round {} of {ZERO_NOISE_HORIZON}; \
             nonzero regret rounds afterwards {}",
            z.pareto_losses, z.stabilized_at, z.nonzero_after
        ),
    )
}

fn criterion_8(study: &Study, z: &ZeroNoise) -> Verdict {
    let mut report = z.invariants;
    let mut audit = z.audit.len();
    let mut runs = 1;
    for ((_, name), result) in &study.cells {
        if *name == "algorithm1" {
            for s in &result.manifest.seeds {
                report.merge(&s.invariants);
                audit += s.audit.len();
                runs += 1;
            }
        }
    }
    verdict(
        report.total() == 0 && audit == 0,
        format!(
            "{runs} runs: depth monotonicity {}, nested active sets {}, partition {}, tree audit findings {audit}",
            report.depth_monotonicity, report.nested_active, report.partition
        ),
    )
}

fn criterion_9() -> Verdict {
    let u = DistributionSpec::uniform(1);
    let source = DistributionSpec::power_law(2.0);
    let h = 5;
    let base = BoundParams {
        alpha: 0.2,
        c_alpha: 1.0,
        beta: 1.0,
        c_beta: 1.0,
        gamma: 1.0,
        c_gamma: 2.0,
        arms: 20,
        objectives: 2,
        delta: 1e-4,
        change_point: 2000,
        horizon: 50_000,
        rho_pq: dissimilarity(&source, &u, h, 1).unwrap().value(),
        rho_qq: dissimilarity(&u, &u, h, 1).unwrap().value(),
    };
    let schedule = ShiftSchedule::single_shift(source, 2000, u, 50_000);
    let single = bound_single_shift(&base).unwrap();
    let multiple = bound_multiple_shift(&base, &schedule, h).unwrap();
    let bit_exact = single.to_bits() == multiple.to_bits();

    let no_shift = BoundParams {
        change_point: 0,
        ..base
    };
    let l = 20.0 * (20.0f64 * 2.0 / 1e-4).ln();
    let t = 50_000.0;
    let (a, b) = (0.2f64, 1.0f64);
    let remark = (l / t).powf((a + 1.0) / b) + (l * no_shift.rho_qq / t).powf(((a + 1.0) / a) * ((b + 1.0) / b));
    let got = bound_single_shift(&no_shift).unwrap();
    let remark_ok = ((got - remark) / remark).abs() <= 1e-12;
    verdict(
        bit_exact && remark_ok,
        format!("single {single:e} vs one-phase multiple {multiple:e} (bit-exact {bit_exact}); t_p=0 {got:e} vs {remark:e}"),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Verdict, Duration)> = Vec::new();
    let mut check = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        println!(
            "criterion {n} [{}] {name}: {} ({took:.2?})",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((n, name, v, took));
    };
    check(1, "golden gap table", &mut criterion_1);
    check(2, "Pareto sets", &mut criterion_2);
    check(3, "metric axioms", &mut criterion_3);
    check(4, "order theory", &mut criterion_4);
    check(5, "dissimilarity", &mut criterion_5);
    let study = catch_unwind(run_study).ok();
    let zero = catch_unwind(run_zero_noise).ok();
    check(6, "regret study", &mut || match &study {
        Some(s) => criterion_6(s),
        None => verdict(false, "study run panicked"),
    });
    check(7, "zero-noise soundness", &mut || match &zero {
        Some(z) => criterion_7(z),
        None => verdict(false, "zero-noise run panicked"),
    });
    check(8, "runtime invariants", &mut || match (&study, &zero) {
        (Some(s), Some(z)) => criterion_8(s, z),
        _ => verdict(false, "source runs panicked"),
    });
    check(9, "bound evaluators", &mut criterion_9);

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" (criteria {failed:?})") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
