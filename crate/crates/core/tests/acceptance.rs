//! End-to-end acceptance checks. Each test prints one PASS/FAIL line before
//! asserting, so `--nocapture` gives a compact report.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use cheeger_core::granulation::{box_counts, chernoff_tail, classify_boxes, modified_cut, BoxColor, BoxGrid, BoxKernel};
use cheeger_core::harness::{median, run_convergence_with_threads, write_csv, write_recovery_csv, ConvergenceRecord};
use cheeger_core::numeric::CompensatedSum;
use cheeger_core::optimize::{exact_cheeger, exact_mbis, greyscale_removal, GreyscaleMode};
use cheeger_core::{
    recovery_curve, CheegerObjective, CutSet, DomainDensity, ExperimentConfig, GeoGraph, IndicatorField, Kernel,
    Partition, PointCloud, RRule, RecoveryRow, VolumeKind, DEFAULT_TAIL_EPS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MASTER_SEED: u64 = 20_240_601;

fn report(id: u32, name: &str, ok: bool, detail: String, elapsed: Duration) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} [{verdict}] {name}: {detail} ({:.2} s)", elapsed.as_secs_f64());
    assert!(ok, "criterion {id} failed: {detail}");
}

fn config(objectives: &[&str], n: Vec<usize>, r: RRule, replicates: usize) -> ExperimentConfig {
    ExperimentConfig {
        domain: "square".into(),
        dim: 2,
        density: "uniform".into(),
        kernel: "uniform".into(),
        objectives: objectives.iter().map(|s| s.to_string()).collect(),
        n,
        r,
        replicates,
        seed: MASTER_SEED,
        method: "refine".into(),
        max_passes: 50,
        out: None,
    }
}

fn csv_bytes(records: &[ConvergenceRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(records, &mut out).unwrap();
    out
}

fn recovery_bytes(rows: &[RecoveryRow]) -> Vec<u8> {
    let mut out = Vec::new();
    write_recovery_csv(rows, &mut out).unwrap();
    out
}

// Shared configurations for criteria 3 to 6 and 9, 10.

fn vol_config() -> ExperimentConfig {
    config(&["vol2"], vec![20_000], RRule::List(vec![0.05]), 10)
}

fn convergence_config() -> ExperimentConfig {
    config(&["che:1,1", "mbis"], vec![2_000, 8_000, 32_000], RRule::Formula { c: 2.0 }, 5)
}

const RECOVERY_RADII: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
const RECOVERY_SAMPLES: usize = 1_000_000;

fn recovery(threads: usize) -> Vec<RecoveryRow> {
    let dd = DomainDensity::unit_square();
    let k = Kernel::uniform(2).unwrap();
    let u = IndicatorField::of(CutSet::axis_halfspace(2, 0, 0.5));
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| recovery_curve(&dd, &k, &u, &RECOVERY_RADII, RECOVERY_SAMPLES, MASTER_SEED).unwrap())
}

struct Shared {
    records: Vec<ConvergenceRecord>,
    elapsed: Duration,
}

fn convergence_run() -> &'static Shared {
    static RUN: OnceLock<Shared> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let records = run_convergence_with_threads(&convergence_config(), Some(4)).unwrap();
        Shared {
            records,
            elapsed: start.elapsed(),
        }
    })
}

fn medians_by_n(records: &[ConvergenceRecord], objective: &str, f: impl Fn(&ConvergenceRecord) -> f64) -> Vec<(usize, f64)> {
    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n && r.objective == objective)
                .map(&f)
                .collect();
            (n, median(&vals))
        })
        .collect()
}

#[test]
fn criterion_01_surface_tension_closed_forms() {
    let start = Instant::now();
    let cases = [
        (Kernel::uniform(2).unwrap(), 4.0 / 3.0),
        (Kernel::uniform(3).unwrap(), std::f64::consts::FRAC_PI_2),
        (Kernel::gaussian(2).unwrap(), std::f64::consts::PI.sqrt()),
    ];
    let mut worst: f64 = 0.0;
    for (k, exact) in &cases {
        let q = k.surface_tension_quadrature().unwrap();
        worst = worst.max((q - exact).abs() / exact);
    }
    let elapsed = start.elapsed();
    report(
        1,
        "surface tension quadrature",
        worst <= 1e-4 && elapsed < Duration::from_secs(1),
        format!("max relative error {worst:.2e}"),
        elapsed,
    );
}

/// Objective of the mask computed pair by pair from coordinates.
fn naive_objective(pts: &[[f64; 2]], r: f64, k: &Kernel, mask: u64, obj: CheegerObjective) -> f64 {
    let n = pts.len();
    let w = |i: usize, j: usize| {
        let d = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
        k.weight(d / r)
    };
    let inside = |i: usize| mask >> i & 1 == 1;
    let mut cut = 0.0;
    let mut vol = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        let mut deg = 0.0;
        for j in 0..n {
            if i != j {
                deg += w(i, j);
                if inside(i) && !inside(j) {
                    cut += w(i, j);
                }
            }
        }
        let contrib = match obj.volume {
            VolumeKind::Count => 1.0,
            VolumeKind::Degree => deg,
        };
        total += contrib;
        if inside(i) {
            vol += contrib;
        }
    }
    if cut == 0.0 {
        return 0.0;
    }
    let rest = total - vol;
    let bal = match obj.balance.index() {
        1 => vol.min(rest) / total,
        _ => vol * rest / (total * total),
    };
    if bal <= 0.0 {
        f64::INFINITY
    } else {
        cut / bal
    }
}

fn naive_bisection(pts: &[[f64; 2]], r: f64, k: &Kernel) -> f64 {
    let n = pts.len();
    let mut best = f64::INFINITY;
    for mask in 0u64..1 << n {
        if mask.count_ones() as usize != n / 2 {
            continue;
        }
        let mut cut = 0.0;
        for i in 0..n {
            for j in 0..n {
                if mask >> i & 1 == 1 && mask >> j & 1 == 0 {
                    let d = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
                    cut += k.weight(d / r);
                }
            }
        }
        best = best.min(cut);
    }
    best
}

#[test]
fn criterion_02_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let k = Kernel::uniform(2).unwrap();
    let mut mismatches = Vec::new();
    for inst in 0..200 {
        let n = rng.random_range(3..=12);
        let r = rng.random_range(0.2..0.9);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let cloud = PointCloud::from_points(&pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap();
        let g = GeoGraph::build(cloud, r, k.clone(), DEFAULT_TAIL_EPS).unwrap();
        if g.total_volume(VolumeKind::Degree) > 0.0 {
            let (v, b) = (1 + inst % 2, 1 + (inst / 2) % 2);
            let obj = CheegerObjective::new(v as u8, b as u8).unwrap();
            let naive = (1..(1u64 << n) - 1)
                .map(|m| naive_objective(&pts, r, &k, m, obj))
                .fold(f64::INFINITY, f64::min);
            let exact = exact_cheeger(&g, obj).unwrap().value;
            if exact != naive {
                mismatches.push(format!("instance {inst} {obj}: {exact} vs {naive}"));
            }
        }
        let exact = exact_mbis(&g).unwrap().value;
        let naive = naive_bisection(&pts, r, &k);
        if exact != naive {
            mismatches.push(format!("instance {inst} mbis: {exact} vs {naive}"));
        }
    }

    // Cell-list functionals against all-pairs sums with a smooth kernel.
    let gk = Kernel::gaussian(2).unwrap();
    let mut worst: f64 = 0.0;
    for (n, r) in [(200, 0.05), (350, 0.1), (500, 0.03)] {
        let cloud = DomainDensity::unit_square().sample_points(n, MASTER_SEED + n as u64).unwrap();
        // Tight tail cutoff so truncation stays far below the tolerance.
        let g = GeoGraph::build(cloud.clone(), r, gk.clone(), 1e-18).unwrap();
        let y = Partition::new((0..n).map(|_| rng.random::<bool>()).collect());
        let (mut cut, mut vol) = (CompensatedSum::new(), CompensatedSum::new());
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = gk.weight(cloud.dist2(i, j).sqrt() / r);
                if y.contains(i) {
                    vol.add(w);
                    if !y.contains(j) {
                        cut.add(w);
                    }
                }
            }
        }
        let (cut, vol) = (cut.value(), vol.value());
        worst = worst
            .max((g.cut_weight(&y) - cut).abs() / cut)
            .max((g.volume(&y, VolumeKind::Degree) - vol).abs() / vol);
    }
    let elapsed = start.elapsed();
    report(
        2,
        "exact optimisers and cell lists vs naive oracles",
        mismatches.is_empty() && worst <= 1e-12 && elapsed < Duration::from_secs(120),
        format!(
            "{} enumeration mismatches {:?}, functional rel. error {worst:.1e}",
            mismatches.len(),
            mismatches.first()
        ),
        elapsed,
    );
}

#[test]
fn criterion_03_volume_law() {
    let start = Instant::now();
    let records = run_convergence_with_threads(&vol_config(), Some(4)).unwrap();
    let pi = std::f64::consts::PI;
    let worst = records.iter().map(|r| (r.rescaled - pi).abs() / pi).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    report(
        3,
        "rescaled edge volume on 10 seeds",
        records.len() == 10 && worst <= 0.05 && elapsed < Duration::from_secs(60),
        format!("max |Vol2/(n^2 r^2) - pi| / pi = {worst:.4}"),
        elapsed,
    );
}

#[test]
fn criterion_04_nonlocal_tv_recovery() {
    let start = Instant::now();
    let rows = recovery(4);
    let target = 4.0 / 3.0;
    let last = rows.last().unwrap();
    let final_ok = (last.estimate - target).abs() <= 0.05 * target + 3.0 * last.stderr;
    let devs: Vec<f64> = rows.iter().map(|r| (r.estimate - target).abs()).collect();
    let trend_ok = rows
        .windows(2)
        .zip(devs.windows(2))
        .all(|(r, d)| d[1] <= d[0] + 2.0 * r[1].stderr);
    let elapsed = start.elapsed();
    report(
        4,
        "nonlocal TV recovers sigma * TV",
        final_ok && trend_ok && elapsed < Duration::from_secs(60),
        format!(
            "estimates {:?}, final stderr {:.1e}",
            rows.iter().map(|r| (r.estimate * 1e4).round() / 1e4).collect::<Vec<_>>(),
            last.stderr
        ),
        elapsed,
    );
}

fn convergence_check(id: u32, objective: &str, target: f64, band: (f64, f64)) {
    let shared = convergence_run();
    let med = medians_by_n(&shared.records, objective, |r| r.rescaled);
    let dev = medians_by_n(&shared.records, objective, |r| (r.rescaled - target).abs());
    let last = med.last().unwrap().1;
    let ok = (band.0..=band.1).contains(&last)
        && dev.last().unwrap().1 < dev[0].1
        && shared.elapsed < Duration::from_secs(600);
    report(
        id,
        &format!("{objective} rescaled convergence"),
        ok,
        format!("medians {med:?}, median |dev| {dev:?}"),
        shared.elapsed,
    );
}

#[test]
fn criterion_05_cheeger_convergence() {
    convergence_check(5, "che:1,1", 4.0 / 3.0, (0.9, 1.8));
}

#[test]
fn criterion_06_bisection_convergence() {
    convergence_check(6, "mbis", 2.0 / 3.0, (0.45, 1.1));
}

#[test]
fn criterion_07_greyscale_removal() {
    let start = Instant::now();
    let dd = DomainDensity::unit_square();
    let k = Kernel::uniform(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED ^ 7);
    let (mut grey_left, mut increases, mut nonlocal, mut instances_with_grey) = (0, 0, 0, 0);
    for inst in 0..1000u64 {
        let n = rng.random_range(150..400);
        let r = rng.random_range(0.15..0.3);
        let gamma = rng.random_range(0.2..0.5);
        let cloud = dd.sample_points(n, MASTER_SEED + inst).unwrap();
        let g = GeoGraph::build(cloud, r, k.clone(), DEFAULT_TAIL_EPS).unwrap();
        let Ok(grid) = BoxGrid::build(&dd, g.cloud(), r, gamma) else { continue };
        let bk = BoxKernel::new(&grid, &g);
        // A random halfplane with a noisy boundary layer.
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let offset = rng.random_range(0.3..0.7);
        let noise = rng.random_range(0.0..0.2);
        let y = Partition::new(
            (0..n)
                .map(|i| {
                    let p = g.cloud().point(i);
                    let s = (p[0] - 0.5) * angle.cos() + (p[1] - 0.5) * angle.sin() + 0.5 - offset;
                    s + noise * (rng.random::<f64>() - 0.5) < 0.0
                })
                .collect(),
        );
        let before = classify_boxes(&grid, &y);
        if before.grey_count() > 0 {
            instances_with_grey += 1;
        }
        let out = greyscale_removal(&grid, &bk, &y, GreyscaleMode::Cut, VolumeKind::Count);
        let after = classify_boxes(&grid, &out);
        grey_left += (0..grid.len())
            .filter(|&i| after.labels[i] == BoxColor::Grey && !after.unclassifiable[i])
            .count();
        let (cb, ca) = (modified_cut(&grid, &bk, &y), modified_cut(&grid, &bk, &out));
        if ca > cb * (1.0 + 1e-12) {
            increases += 1;
        }
        nonlocal += (0..n)
            .filter(|&p| out.contains(p) != y.contains(p) && before.labels[grid.box_of(p)] != BoxColor::Grey)
            .count();
        let (blacks, whites) = box_counts(&grid, &out);
        debug_assert_eq!(blacks.len(), whites.len());
    }
    let elapsed = start.elapsed();
    report(
        7,
        "greyscale removal purity, monotonicity, locality",
        grey_left == 0 && increases == 0 && nonlocal == 0 && instances_with_grey > 500 && elapsed < Duration::from_secs(60),
        format!(
            "{instances_with_grey} instances with grey boxes; {grey_left} grey left, {increases} increases, {nonlocal} non-local flips"
        ),
        elapsed,
    );
}

/// Exact binomial probabilities by recurrence on the pmf.
fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    if p == 0.0 {
        pmf[0] = 1.0;
        return pmf;
    }
    if p == 1.0 {
        pmf[n] = 1.0;
        return pmf;
    }
    // log pmf to stay accurate in the tails.
    let mut log_choose = 0.0;
    for k in 0..=n {
        if k > 0 {
            log_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        pmf[k] = (log_choose + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp();
    }
    pmf
}

#[test]
fn criterion_08_chernoff_soundness() {
    let start = Instant::now();
    let mut violations = Vec::new();
    let mut checked = 0;
    for n in [10usize, 50, 200] {
        for p in [0.05, 0.2, 0.5] {
            let pmf = binomial_pmf(n, p);
            let np = n as f64 * p;
            for k in 0..=n {
                let kf = k as f64;
                let exact = if kf >= np {
                    pmf[k..].iter().sum::<f64>()
                } else {
                    pmf[..=k].iter().sum::<f64>()
                };
                let bound = chernoff_tail(n, p, kf).unwrap();
                checked += 1;
                if bound < exact * (1.0 - 1e-12) {
                    violations.push((n, p, k, bound, exact));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        8,
        "Chernoff bound dominates the binomial tail",
        violations.is_empty() && elapsed < Duration::from_secs(1),
        format!("{checked} tails checked, violations {violations:?}"),
        elapsed,
    );
}

#[test]
fn criterion_09_weak_convergence() {
    let shared = convergence_run();
    let med = medians_by_n(&shared.records, "che:1,1", |r| r.weak_distance.unwrap());
    let ok = med.last().unwrap().1 < med[0].1 && shared.elapsed < Duration::from_secs(600);
    report(
        9,
        "weak distance to the continuum minimiser",
        ok,
        format!("median distances {med:?}"),
        shared.elapsed,
    );
}

#[test]
fn criterion_10_determinism() {
    let start = Instant::now();
    let vol = csv_bytes(&run_convergence_with_threads(&vol_config(), Some(1)).unwrap())
        == csv_bytes(&run_convergence_with_threads(&vol_config(), Some(4)).unwrap());
    let tv = recovery_bytes(&recovery(1)) == recovery_bytes(&recovery(4));
    let conv = csv_bytes(&run_convergence_with_threads(&convergence_config(), Some(1)).unwrap())
        == csv_bytes(&convergence_run().records);
    report(
        10,
        "CSV identical for 1 and 4 threads",
        vol && tv && conv,
        format!("volume law {vol}, nonlocal TV {tv}, convergence {conv}"),
        start.elapsed(),
    );
}
