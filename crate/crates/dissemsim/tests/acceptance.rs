//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.
//!
//! Monte Carlo criteria use shortened run lengths by default so the whole
//! gate fits in a few minutes on one core; set `DISSEMSIM_ACCEPTANCE_FULL=1`
//! for warm-up 2000, horizon 20000 and 10 replications everywhere.

use std::fmt::Write as _;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use dissem_core::hydro::{backward_map, fixed_point, DensityGrid};
use dissem_core::transform::{free_expected_sojourn, gamma_table};
use dissemsim::experiments::{
    self as ex, Discipline, MetricSummary, MndfResult, Replications, RunLength,
};
use dissemsim::io;

const SEED: u64 = 20240601;

struct Check {
    ok: bool,
    notes: String,
}

impl Check {
    fn new() -> Self {
        Self {
            ok: true,
            notes: String::new(),
        }
    }

    /// Records a sub-check with its measured values.
    fn that(&mut self, ok: bool, what: impl AsRef<str>) {
        self.ok &= ok;
        let _ = writeln!(self.notes, "    [{}] {}", if ok { "ok" } else { "FAILED" }, what.as_ref());
    }
}

type Criterion = fn(&mut Plan) -> Check;

struct Plan {
    full: bool,
    overlays: PathBuf,
    /// OU delay profiles at N = 50, 100, 200 kept for the overlays.
    ou_profiles: Vec<MndfResult>,
}

impl Plan {
    fn reps(&self) -> Replications {
        Replications::new(10, SEED)
    }

    fn length(&self, warmup: f64, horizon: f64) -> RunLength {
        if self.full {
            RunLength::DEFAULT
        } else {
            RunLength::new(warmup, horizon).unwrap()
        }
    }
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target.abs()
}

fn pct(x: f64, target: f64) -> f64 {
    100.0 * (x - target) / target
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `Σ 1/(i(N-i))` in exact rational arithmetic, rounded once.
fn exact_free_sojourn(n: u128) -> f64 {
    let (mut num, mut den) = (0u128, 1u128);
    for i in 1..n {
        let d = i * (n - i);
        num = num * d + den;
        den *= d;
        let g = gcd(num, den);
        num /= g;
        den /= g;
    }
    num as f64 / den as f64
}

fn criterion_1(_: &mut Plan) -> Check {
    let mut c = Check::new();
    let start = Instant::now();
    for n in [2usize, 3, 4, 10] {
        let got = free_expected_sojourn(n).unwrap();
        let want = exact_free_sojourn(n as u128);
        c.that(got == want, format!("B_{n} = {got:e}, exact sum {want:e}"));
    }
    let mut worst = 0.0f64;
    for n in [2usize, 3, 4, 7, 10, 100, 1000, 12345, 1_000_000] {
        let t = gamma_table(n).unwrap();
        let g = &t.gamma;
        let mut dev = g[0].abs().max((g[n - 1] - 1.0).abs());
        for i in 0..n {
            dev = dev.max((g[i] + g[n - 1 - i] - 1.0).abs());
        }
        for i in 1..n {
            let inc = 1.0 / (i as f64 * (n - i) as f64 * t.b_n);
            dev = dev.max((g[i] - g[i - 1] - inc).abs());
        }
        worst = worst.max(dev);
    }
    c.that(worst <= 1e-12, format!("gamma invariants, N up to 1e6: max deviation {worst:.2e}"));
    let mut worst = 0.0f64;
    for k in 1..=9 {
        let l = k as f64 / 10.0;
        let psi = fixed_point(l).unwrap();
        worst = worst.max((psi + (1.0 - l).ln()).abs());
        worst = worst.max((backward_map(psi, l).unwrap() - psi).abs());
    }
    c.that(worst <= 1e-10, format!("fixed point and M(psi) = psi: max deviation {worst:.2e}"));
    let secs = start.elapsed().as_secs_f64();
    c.that(secs < 1.0, format!("runtime {secs:.3}s"));
    c
}

fn criterion_2(_: &mut Plan) -> Check {
    let mut c = Check::new();
    for n in [10, 100, 1000] {
        let r = ex::free_experiment(n, 0.5, 10_000, SEED).unwrap();
        let z = (r.sojourn.mean - r.b_n) / r.sojourn.stderr;
        c.that(
            z.abs() <= 3.0,
            format!("N={n}: mean sojourn {:.5} vs B_N {:.5} ({z:+.2} SE)", r.sojourn.mean, r.b_n),
        );
        if n == 1000 {
            c.that(
                r.profile_deviation < 0.05,
                format!("N=1000: sup |R(x) - x| = {:.4}", r.profile_deviation),
            );
        }
    }
    c
}

/// (discipline, distinct, undelivered, AoI) reference values for N = 50.
const TABLE_L03: [(Discipline, f64, f64, f64); 3] = [
    (Discipline::Ou, 3.538, 96.350, 0.175),
    (Discipline::Ru, 3.604, 84.294, 0.179),
    (Discipline::Selfish, 3.394, 85.462, 0.163),
];
const TABLE_L05: [(Discipline, f64, f64, f64); 3] = [
    (Discipline::Ou, 7.897, 231.623, 0.282),
    (Discipline::Ru, 7.956, 174.702, 0.307),
    (Discipline::Selfish, 7.131, 177.919, 0.248),
];

fn criterion_3(plan: &mut Plan) -> Check {
    let mut c = Check::new();
    let length = plan.length(200.0, 2200.0);
    for (lambda, table) in [(0.3, TABLE_L03), (0.5, TABLE_L05)] {
        let rows = ex::table_comparison(50, lambda, length, &plan.reps()).unwrap();
        for (d, distinct, undelivered, aoi) in table {
            let r = rows.iter().find(|r| r.discipline == d).unwrap();
            let line = |name: &str, got: &dissem_core::metrics::SummaryStats, want: f64, tol: f64| {
                (
                    within(got.mean, want, tol),
                    format!(
                        "lambda={lambda} {d} {name}: {:.4} ± {:.4} vs {want} ({:+.2}%, tolerance {:.0}%)",
                        got.mean,
                        got.stderr,
                        pct(got.mean, want),
                        tol * 100.0
                    ),
                )
            };
            for (ok, s) in [
                line("distinct", &r.distinct, distinct, 0.05),
                line("undelivered", &r.undelivered, undelivered, 0.05),
                line("aoi", &r.aoi, aoi, 0.07),
            ] {
                c.that(ok, s);
            }
        }
    }
    c
}

fn slowdown_of(m: &MndfResult) -> f64 {
    m.summary.slowdown.expect("completed packets").mean
}

fn criterion_4(plan: &mut Plan) -> Check {
    let mut c = Check::new();
    let reps = plan.reps();
    let mut ou = vec![];
    for (n, warmup, horizon) in [(50, 20.0, 420.0), (100, 20.0, 220.0), (200, 10.0, 110.0)] {
        let m = ex::mndf_experiment(Discipline::Ou, &[n], 0.5, plan.length(warmup, horizon), &reps).unwrap();
        ou.extend(m);
    }
    let ru = ex::mndf_experiment(Discipline::Ru, &[100], 0.5, plan.length(20.0, 220.0), &reps)
        .unwrap()
        .remove(0);
    for (m, want) in [(&ou[1], 1.767), (&ru, 1.793)] {
        let s = m.summary.slowdown.unwrap();
        c.that(
            within(s.mean, want, 0.05),
            format!(
                "{} N=100 slowdown {:.4} ± {:.4} vs {want} ({:+.2}%)",
                m.summary.discipline,
                s.mean,
                s.stderr,
                pct(s.mean, want)
            ),
        );
    }
    let v: Vec<f64> = ou.iter().map(slowdown_of).collect();
    let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    c.that(
        (hi - lo) / lo < 0.03,
        format!(
            "OU slowdown over N=50,100,200: {:.4}, {:.4}, {:.4}; spread {:.2}%",
            v[0],
            v[1],
            v[2],
            100.0 * (hi - lo) / lo
        ),
    );
    plan.ou_profiles = ou;
    c
}

fn disjoint_below(a: &dissem_core::metrics::SummaryStats, b: &dissem_core::metrics::SummaryStats) -> bool {
    a.ci95().1 < b.ci95().0
}

fn criterion_5(plan: &mut Plan) -> Check {
    let mut c = Check::new();
    let rows = ex::table_comparison(50, 0.7, plan.length(200.0, 2200.0), &plan.reps()).unwrap();
    let get = |d| rows.iter().find(|r: &&MetricSummary| r.discipline == d).unwrap();
    let (ou, ru, sf) = (get(Discipline::Ou), get(Discipline::Ru), get(Discipline::Selfish));
    let ci = |s: &dissem_core::metrics::SummaryStats| {
        let (a, b) = s.ci95();
        format!("[{a:.4}, {b:.4}]")
    };
    c.that(
        disjoint_below(&sf.aoi, &ou.aoi) && disjoint_below(&ou.aoi, &ru.aoi),
        format!(
            "AoI selfish {} < ou {} < ru {}",
            ci(&sf.aoi),
            ci(&ou.aoi),
            ci(&ru.aoi)
        ),
    );
    c.that(
        disjoint_below(&ru.undelivered, &sf.undelivered) && disjoint_below(&sf.undelivered, &ou.undelivered),
        format!(
            "undelivered ru {} < selfish {} < ou {}",
            ci(&ru.undelivered),
            ci(&sf.undelivered),
            ci(&ou.undelivered)
        ),
    );
    c
}

fn criterion_6(plan: &mut Plan) -> Check {
    let mut c = Check::new();
    let rows = ex::instability_experiment(0.05, 1e5, &plan.reps()).unwrap();
    let (ou, ru) = (&rows[0], &rows[1]);
    let (a, b) = ou.slope.ci95();
    c.that(a > 0.0, format!("OU slope {:.4}, CI [{a:.4}, {b:.4}]", ou.slope.mean));
    let (ra, rb) = ou.creation_rate.ci95();
    c.that(
        rb < 2.0,
        format!("OU in-transit creation rate {:.4}, CI [{ra:.4}, {rb:.4}]", ou.creation_rate.mean),
    );
    let (a, b) = ru.slope.ci95();
    c.that(a <= 0.0 && 0.0 <= b, format!("RU slope {:.4}, CI [{a:.4}, {b:.4}]", ru.slope.mean));
    c.that(
        ou.mixed_states == 0 && ou.bookkeeping_errors == 0,
        format!(
            "OU mixed in-transit states {} (bookkeeping errors {})",
            ou.mixed_states, ou.bookkeeping_errors
        ),
    );
    c
}

/// Reference maximum-likelihood estimates at N = 200.
const MLE_N200: [(f64, f64); 3] = [(0.3, 0.369), (0.5, 0.701), (0.7, 1.238)];

fn criterion_7(plan: &mut Plan) -> Check {
    let mut c = Check::new();
    let lambdas: Vec<f64> = MLE_N200.iter().map(|p| p.0).collect();
    let reports = ex::rs_poisson_table(&[200], &lambdas, plan.length(50.0, 1050.0), &plan.reps()).unwrap();
    for (r, &(lambda, mle)) in reports.iter().zip(&MLE_N200) {
        c.that(
            within(r.psi_hat, mle, 0.04),
            format!(
                "lambda={lambda}: psi_hat {:.4} ± {:.4} vs {mle} ({:+.2}%)",
                r.psi_hat,
                r.psi_runs.stderr,
                pct(r.psi_hat, mle)
            ),
        );
        c.that(r.tv < 0.02, format!("lambda={lambda}: TV to Poisson(psi_hat) {:.4}", r.tv));
        let target = r.slowdown_target();
        c.that(
            within(r.slowdown.mean, target, 0.05),
            format!(
                "lambda={lambda}: slowdown {:.4} ± {:.4} vs {target:.4} ({:+.2}%)",
                r.slowdown.mean,
                r.slowdown.stderr,
                pct(r.slowdown.mean, target)
            ),
        );
        let ratios = r.decile_ratios();
        let worst = ratios.iter().map(|q| (q.2 - 1.0).abs()).fold(0.0, f64::max);
        let shown: Vec<String> = ratios.iter().map(|q| format!("{:.3}", q.2)).collect();
        c.that(
            worst <= 0.05,
            format!(
                "lambda={lambda}: stage profile / (psi x) at deciles [{}], worst {:.2}%",
                shown.join(", "),
                100.0 * worst
            ),
        );
    }
    c
}

fn criterion_8(_: &mut Plan) -> Check {
    let mut c = Check::new();
    let lambda = 0.5;
    let psi = fixed_point(lambda).unwrap();
    let times: Vec<f64> = (0..=40).map(|k| 0.5 * k as f64).collect();
    let mut worst_rise = 0.0f64;
    let mut worst_final = 0.0f64;
    for k in 0..20u64 {
        let max = 0.5 + 3.0 * k as f64 / 19.0;
        let xi0 = ex::random_step_density(SEED + k, 2 + (k as usize % 7) * 3, max, lambda).unwrap();
        let r = ex::hydro_convergence(&xi0, &times).unwrap();
        for w in r.sup_deviation.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
        worst_final = worst_final.max(*r.sup_deviation.last().unwrap());
    }
    c.that(
        worst_rise <= 0.0,
        format!("sup |xi - psi| nonincreasing on t = 0, 0.5, ..., 20: largest rise {worst_rise:.2e}"),
    );
    c.that(worst_final < 1e-3, format!("sup |xi - psi| at t = 20: {worst_final:.2e}"));
    let flat = DensityGrid::constant(psi, lambda).unwrap();
    let r = ex::hydro_convergence(&flat, &[0.0, 1.0, 7.3, 20.0]).unwrap();
    let dev = r.sup_deviation.iter().fold(0.0f64, |a, &b| a.max(b));
    c.that(dev <= 1e-12, format!("constant psi profile under evolution: max deviation {dev:.2e}"));
    c
}

fn criterion_9(plan: &mut Plan) -> Check {
    let mut c = Check::new();
    let r = ex::impulse_experiment(5.0, 10_000, &plan.reps()).unwrap();
    let total = r.rs.total().unwrap();
    c.that(
        within(total.mean, 6.0, 0.10),
        format!("RS total transformed sojourn {:.4} ± {:.4} vs 6 ({:+.2}%)", total.mean, total.stderr, pct(total.mean, 6.0)),
    );
    let q = r.rs.at(0.25).unwrap();
    c.that(q.mean < 0.35, format!("RS time to x=0.25: {:.4} ± {:.4}", q.mean, q.stderr));
    let (a, b) = (r.rs.at(0.4).unwrap().mean, r.rs.at(0.6).unwrap().mean);
    let share = (b - a - 0.2) / (total.mean - 1.0);
    c.that(
        share >= 0.5,
        format!("share of the excess delay spent in (0.4, 0.6): {share:.3} (R(0.4)={a:.3}, R(0.6)={b:.3})"),
    );
    let mut near_one = vec![];
    let mut ok = true;
    for x in [0.9, 0.95, 1.0] {
        let (s, u) = (r.rs.at(x).unwrap(), r.ru.at(x).unwrap());
        ok &= u.mean >= s.mean;
        near_one.push(format!("x={x}: ru {:.3} rs {:.3}", u.mean, s.mean));
    }
    c.that(ok, format!("RU >= RS near x=1: {}", near_one.join("; ")));
    let mut worst = 0.0f64;
    for k in 1..=10 {
        let x = 0.05 * k as f64;
        let (s, u) = (r.rs.at(x).unwrap(), r.ru.at(x).unwrap());
        let z = (u.mean - s.mean) / (s.stderr.powi(2) + u.stderr.powi(2)).sqrt();
        worst = worst.max(z.abs());
    }
    c.that(
        worst <= 3.0,
        format!("RU vs RS on x = 0.05, ..., 0.5: largest difference {worst:.2} combined SE"),
    );
    c
}

fn criterion_10(plan: &mut Plan) -> Check {
    let mut c = Check::new();
    if plan.ou_profiles.is_empty() {
        c.that(false, "no OU profiles (criterion 4 did not complete)");
        return c;
    }
    std::fs::create_dir_all(&plan.overlays).unwrap();
    let m = &plan.ou_profiles;
    let p = io::write_csv(&plan.overlays, "profile.csv", m.iter().flat_map(|r| io::profile_rows(r, 0.5))).unwrap();
    let h = io::write_csv(&plan.overlays, "histogram.csv", m.iter().flat_map(io::histogram_rows)).unwrap();
    for path in [&p, &h] {
        let mut rdr = csv::Reader::from_path(path).unwrap();
        let ns: std::collections::BTreeSet<String> = rdr.records().map(|r| r.unwrap()[1].to_string()).collect();
        c.that(
            ns.len() == m.len(),
            format!("{} covers N = {}", path.display(), ns.into_iter().collect::<Vec<_>>().join(", ")),
        );
    }
    let at = |x: f64| -> String {
        m.iter().map(|r| format!("{:.3}", r.profile.at(x))).collect::<Vec<_>>().join("/")
    };
    c.that(
        true,
        format!("R(0.5) across N: {}; R(1): {} (informational, not asserted)", at(0.5), at(1.0)),
    );
    c
}

fn main() {
    let full = std::env::var_os("DISSEMSIM_ACCEPTANCE_FULL").is_some();
    let mut plan = Plan {
        full,
        overlays: PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-overlays"),
        ou_profiles: vec![],
    };
    let criteria: [(u32, &str, Criterion); 10] = [
        (1, "closed-form oracles", criterion_1),
        (2, "free system vs closed form", criterion_2),
        (3, "metric table at N=50", criterion_3),
        (4, "slowdown table", criterion_4),
        (5, "orderings at lambda=0.7", criterion_5),
        (6, "three-node instability", criterion_6),
        (7, "reshuffling Poisson and profile", criterion_7),
        (8, "transport solver", criterion_8),
        (9, "impulse experiment", criterion_9),
        (10, "profile and histogram overlays", criterion_10),
    ];
    println!(
        "acceptance ({} run lengths, seed {SEED})",
        if full { "full" } else { "shortened" }
    );
    let mut failed = vec![];
    for (id, name, f) in criteria {
        let start = Instant::now();
        let out = panic::catch_unwind(AssertUnwindSafe(|| f(&mut plan)));
        let secs = start.elapsed().as_secs_f64();
        let (ok, notes) = match out {
            Ok(c) => (c.ok, c.notes),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("    [FAILED] panicked: {msg}\n"))
            }
        };
        println!("criterion {id:>2} {}: {name} ({secs:.1}s)", if ok { "PASS" } else { "FAIL" });
        print!("{notes}");
        if !ok {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
