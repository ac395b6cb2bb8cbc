//! Acceptance suite. One line per criterion; exits non-zero if any fails.
//!
//! Built with `harness = false` so the lines come out in order and unbuffered.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use bhl::cli;
use bhl::convexity::{abp_check, containment_check, parabolic_abp_check};
use bhl::effective::{estimate_effective, AverageOptions};
use bhl::environment::{EnvBox, Environment, EnvironmentLaw, Observable, WeightLaw};
use bhl::experiments::{
    berry_esseen, corrector_sublinearity, ergodicity_rate, homog_error_elliptic, mu_decay, BerryEsseenSetup,
    CorrectorSetup, DataFn, ErgodicitySetup, ExperimentReport, HomogSetup, MuDecaySetup,
};
use bhl::lattice::{apply_l, norm_sq, LatticeDomain, LatticeField, Radius, Site, SpaceTimeDomain, SpaceTimeField};
use bhl::rng::Stream;
use bhl::solver::{
    expected_exit_time, solve_elliptic, solve_elliptic_direct, solve_parabolic, EllipticProblem, ParabolicProblem,
    SolveSettings,
};
use bhl::walk::feynman_kac_elliptic;

const EXACTNESS_TOL: f64 = 1e-9;
const MARTINGALE_TOL: f64 = 1e-9;
const FK_SE_MULTIPLE: f64 = 4.0;
const FK_MIN_AGREEING: usize = 9;
const COEFFICIENT_TOL: f64 = 1e-12;
const PARABOLIC_RESIDUAL_TOL: f64 = 1e-12;
const KS_THRESHOLD: f64 = 0.02;

const SECONDS: Duration = Duration::from_secs(60);
const MINUTE: Duration = Duration::from_secs(60);

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn two_point() -> EnvironmentLaw {
    EnvironmentLaw::new(2, WeightLaw::TwoPoint { v1: 1.0, v2: 4.0, p: 0.5 }).unwrap()
}

/// Alternates between a two-point and a uniform law.
fn random_law(d: usize, k: usize) -> EnvironmentLaw {
    let w = if k.is_multiple_of(2) {
        WeightLaw::TwoPoint { v1: 1.0, v2: 4.0, p: 0.5 }
    } else {
        WeightLaw::Uniform { low: 0.5, high: 3.0 }
    };
    EnvironmentLaw::new(d, w).unwrap()
}

fn env_for(law: &EnvironmentLaw, r: u32, seed: u64) -> Environment {
    Environment::sample(law, EnvBox::cube(law.dim(), r).unwrap(), seed).unwrap()
}

fn ball(r: u32, d: usize) -> Arc<LatticeDomain> {
    Arc::new(LatticeDomain::ball(Radius::int(r).unwrap(), d).unwrap())
}

fn between(s: &mut Stream, lo: u32, hi: u32) -> u32 {
    lo + (s.uniform() * (hi - lo + 1) as f64) as u32
}

fn sym(s: &mut Stream) -> f64 {
    2.0 * s.uniform() - 1.0
}

fn report_line(rep: &ExperimentReport) -> String {
    let ladder: Vec<String> = rep.ladder.iter().map(|(x, y)| format!("{x}:{y:.3e}")).collect();
    let slope = rep.fit.as_ref().map(|f| format!("{:.3}", f.slope)).unwrap_or_else(|| "none".into());
    let failed: Vec<&str> = rep.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    format!("ladder [{}], slope {slope}, failed checks {:?}", ladder.join(", "), failed)
}

fn exactness() -> Outcome {
    let mut worst = 0.0f64;
    let mut largest = 0;
    for k in 0..50u64 {
        let mut s = Stream::new(101, k);
        let d = 1 + (k % 2) as usize;
        let r = if d == 1 { between(&mut s, 2, 60) } else { between(&mut s, 2, 12) };
        let env = env_for(&random_law(d, k as usize), r + 1, k);
        let dom = ball(r, d);
        largest = largest.max(dom.n_interior());
        let rhs: Vec<f64> = (0..dom.n_interior()).map(|_| sym(&mut s) / (r * r) as f64).collect();
        let bnd: Vec<f64> = (0..dom.boundary().len()).map(|_| sym(&mut s)).collect();
        let p = EllipticProblem::new(&env, dom, rhs, bnd).unwrap();
        // a residual δ moves u by at most δ (R+1)²
        let tol = 0.1 * EXACTNESS_TOL / ((r + 1) * (r + 1)) as f64;
        let (it, _) = solve_elliptic(&p, &SolveSettings::absolute(tol)).unwrap();
        let direct = solve_elliptic_direct(&p).unwrap();
        let diff = it.values().iter().zip(direct.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    outcome(
        worst <= EXACTNESS_TOL,
        format!("max |iterative - direct| = {worst:.2e} over 50 instances, |B| <= {largest}"),
    )
}

fn martingale() -> Outcome {
    let r = 8;
    let dom = ball(r, 2);
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let env = env_for(&random_law(2, k as usize), r + 1, 200 + k);
        let (t, _) = expected_exit_time(&env, dom.clone(), &SolveSettings::absolute(1e-12)).unwrap();
        let closure: Vec<Site> = dom.closure().collect();
        let v: Vec<f64> = closure.iter().zip(t.values()).map(|(x, tv)| tv + norm_sq(x) as f64).collect();
        let field = LatticeField::new(dom.clone(), v).unwrap();
        for x in dom.interior() {
            worst = worst.max(apply_l(&env, &field, x).unwrap().abs());
        }
    }
    outcome(worst <= MARTINGALE_TOL, format!("max |L(E[τ] + |x|²)| = {worst:.2e} on B_8, 20 environments"))
}

fn feynman_kac() -> Outcome {
    let r = 4u32;
    let rf = r as f64;
    let dom = ball(r, 2);
    let psi = Observable::CoordRatio { axis: 0 };
    let mut agree = 0;
    let mut zs = Vec::new();
    for k in 0..10u64 {
        let env = env_for(&random_law(2, k as usize), r + 1, 300 + k);
        let mut s = Stream::new(303, k);
        let (a, b, c) = (sym(&mut s), sym(&mut s), sym(&mut s));
        let f = move |z: &[f64]| 1.0 + a * z[0] + b * z[1];
        let g = move |z: &[f64]| z[0] + c * z[1] * z[1];
        let p = EllipticProblem::from_fns(
            &env,
            dom.clone(),
            |x| {
                let w = env.weights(x).unwrap();
                f(&[x[0] as f64 / rf, x[1] as f64 / rf]) * psi.eval(w) / (rf * rf * w.iter().sum::<f64>())
            },
            |y| {
                let n = (norm_sq(y) as f64).sqrt();
                g(&[y[0] as f64 / n, y[1] as f64 / n])
            },
        )
        .unwrap();
        let exact = solve_elliptic_direct(&p).unwrap();
        let x = [0, 1, 0];
        let e = feynman_kac_elliptic(&env, x, &dom, f, &psi, g, rf, 10_000, 3000 + k).unwrap();
        let z = (e.mean - exact.get(&x).unwrap()).abs() / e.se;
        zs.push(format!("{z:.1}"));
        if z <= FK_SE_MULTIPLE {
            agree += 1;
        }
    }
    outcome(agree >= FK_MIN_AGREEING, format!("{agree}/10 within {FK_SE_MULTIPLE} SE (|z| = {})", zs.join(" ")))
}

fn effective_coefficients() -> Outcome {
    // exact identities, so short paths suffice; long ones need huge d=3 boxes
    let opts = AverageOptions::new(200, 2, 10, 7);
    let one = Observable::Const { value: 1.0 };
    let mut ok = true;
    let mut notes = Vec::new();
    for w in [WeightLaw::TwoPoint { v1: 1.0, v2: 4.0, p: 0.3 }, WeightLaw::Uniform { low: 0.5, high: 2.0 }] {
        let c = estimate_effective(&EnvironmentLaw::new(1, w).unwrap(), &one, &opts).unwrap();
        let dev = (c.abar[0] - 1.0).abs();
        ok &= dev == 0.0;
        notes.push(format!("d=1 |ā-1| = {dev:.1e}"));
    }
    let c = estimate_effective(&EnvironmentLaw::constant(2, 1.0).unwrap(), &one, &opts).unwrap();
    let dev = c.abar.iter().map(|a| (a - 0.5).abs()).fold((c.bbar - 0.5).abs(), f64::max);
    ok &= dev <= COEFFICIENT_TOL;
    notes.push(format!("ω≡I deviation {dev:.1e}"));
    let mut trace = 0.0f64;
    for d in 1..=3 {
        for k in 0..2 {
            let c = estimate_effective(&random_law(d, k), &one, &opts).unwrap();
            trace = trace.max(c.trace_defect());
        }
    }
    ok &= trace <= COEFFICIENT_TOL;
    notes.push(format!("max |Σā-1| = {trace:.1e}"));
    outcome(ok, notes.join(", "))
}

fn random_field(dom: &Arc<LatticeDomain>, s: &mut Stream) -> LatticeField {
    let a = s.uniform();
    let tilt = [sym(s), sym(s)];
    let noise = 0.5 + 2.0 * s.uniform();
    let values = dom
        .closure()
        .map(|x| {
            let conv = a * norm_sq(&x) as f64 + tilt[0] * x[0] as f64 + tilt[1] * x[1] as f64;
            conv + noise * sym(s)
        })
        .collect();
    LatticeField::new(dom.clone(), values).unwrap()
}

fn elliptic_abp() -> Outcome {
    let mut violations = 0;
    let mut tight = f64::INFINITY;
    for k in 0..100u64 {
        let mut s = Stream::new(505, k);
        let dom = ball(between(&mut s, 2, 6), 2);
        let rep = abp_check(&random_field(&dom, &mut s)).unwrap();
        if !rep.holds {
            violations += 1;
        }
        if rep.m > 0.0 {
            tight = tight.min(rep.rhs / rep.m);
        }
    }
    outcome(violations == 0, format!("{violations} violations on 100 fields, smallest bound/defect ratio {tight:.3}"))
}

fn containment() -> Outcome {
    let mut violations = 0;
    let mut cells = 0;
    for k in 0..100u64 {
        let mut s = Stream::new(606, k);
        let r = between(&mut s, 2, 5);
        let env = env_for(&random_law(2, k as usize), r + 1, 600 + k);
        let dom = ball(r, 2);
        let field = random_field(&dom, &mut s);
        for x in dom.interior() {
            cells += 1;
            if !containment_check(&env, &field, x).unwrap().holds {
                violations += 1;
            }
        }
    }
    outcome(violations == 0, format!("{violations} violations over {cells} cells on 100 fields"))
}

fn parabolic_abp() -> Outcome {
    let mut violations = 0;
    for k in 0..50u64 {
        let mut s = Stream::new(707, k);
        let r = between(&mut s, 1, 4);
        let dom = Arc::new(SpaceTimeDomain::cylinder(Radius::int(r).unwrap(), 1).unwrap());
        let (a, b) = (s.uniform(), sym(&mut s));
        let noise = 0.5 + s.uniform();
        let mut cells = Vec::new();
        for _ in 0..dom.space().n_closure() * (dom.horizon() + 1) {
            cells.push(noise * sym(&mut s));
        }
        let width = dom.space().n_closure();
        let space = dom.space().clone();
        let field = SpaceTimeField::from_fn(dom.clone(), |x, n| {
            let i = space.index_of(x).unwrap();
            a * (x[0] * x[0]) as f64 - b * n as f64 + cells[n * width + i]
        });
        if !parabolic_abp_check(&field).unwrap().holds {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations} violations on 50 d=1 cylinders, R <= 4"))
}

fn parabolic_exactness() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let mut s = Stream::new(808, k);
        let d = 1 + (k % 2) as usize;
        let r = between(&mut s, 1, 8);
        let env = env_for(&random_law(d, k as usize), r + 1, 800 + k);
        let dom = Arc::new(SpaceTimeDomain::cylinder(Radius::int(r).unwrap(), d).unwrap());
        let key = 8000 + k;
        let noise = |x: &Site, n: usize, salt: u64| {
            let h = (x[0] as i64 + 64) as u64 * 131 + (x[1] as i64 + 64) as u64;
            Stream::new(key, salt + 1000 * n as u64 + h * 1_000_000).uniform() - 0.5
        };
        let r2 = (r * r) as f64;
        let p = ParabolicProblem::from_fns(&env, dom, |x, n| noise(x, n, 1) / r2, |x, n| noise(x, n, 2)).unwrap();
        let (_, rep) = solve_parabolic(&p).unwrap();
        worst = worst.max(rep.residual);
    }
    outcome(worst <= PARABOLIC_RESIDUAL_TOL, format!("max residual {worst:.2e} on 20 cylinders, R <= 8"))
}

fn decay_outcome(rep: &ExperimentReport) -> Outcome {
    let decreasing = rep.ladder.windows(2).all(|w| w[1].1 < w[0].1);
    let slope = rep.fit.as_ref().map(|f| f.slope < 0.0).unwrap_or(false);
    outcome(
        decreasing && slope && rep.warnings.is_empty(),
        format!("{}, warnings {}", report_line(rep), rep.warnings.len()),
    )
}

fn homogenization() -> Outcome {
    let rep = homog_error_elliptic(&HomogSetup {
        law: two_point(),
        ladder: vec![9, 27, 81],
        f: DataFn::Constant { value: 1.0 },
        g: DataFn::CosineBoundary,
        psi: Observable::Const { value: 1.0 },
        replicas: 8,
        seed: 1,
        reference: AverageOptions::new(100_000, 8, 100, 0),
        spacing: None,
        solver: SolveSettings::default(),
    })
    .unwrap();
    decay_outcome(&rep)
}

fn corrector() -> Outcome {
    let rep = corrector_sublinearity(&CorrectorSetup {
        law: two_point(),
        ladder: vec![9, 27, 81],
        psi: Observable::CoordRatio { axis: 0 },
        replicas: 16,
        seed: 1,
        reference: AverageOptions::new(65_610, 8, 100, 0),
        solver: SolveSettings::default(),
    })
    .unwrap();
    decay_outcome(&rep)
}

fn ergodicity() -> Outcome {
    let rep = ergodicity_rate(&ErgodicitySetup {
        law: two_point(),
        ladder: vec![100, 1000, 10_000],
        psi: Observable::CoordRatio { axis: 0 },
        replicas: 8,
        walks: 1000,
        seed: 1,
        reference: AverageOptions::new(100_000, 8, 100, 0),
    })
    .unwrap();
    let decreasing = rep.ladder.windows(2).all(|w| w[1].1 < w[0].1);
    outcome(decreasing, report_line(&rep))
}

fn berry_esseen_rates() -> Outcome {
    let exact = berry_esseen(&BerryEsseenSetup {
        law: EnvironmentLaw::constant(2, 1.0).unwrap(),
        ladder: vec![400, 6400],
        direction: vec![1.0, 0.0],
        walks: 100_000,
        environments: 1,
        seed: 1,
        reference: AverageOptions::new(1, 1, 1, 0),
        threshold: Some(KS_THRESHOLD),
    })
    .unwrap();
    let stat = exact.ladder.last().unwrap().1;
    let oracle = exact.checks.iter().find(|c| c.name == "exact_law_agreement").map(|c| c.passed).unwrap_or(false);
    let random = berry_esseen(&BerryEsseenSetup {
        law: two_point(),
        ladder: vec![400, 6400],
        direction: vec![1.0, 0.0],
        walks: 20_000,
        environments: 5,
        seed: 1,
        reference: AverageOptions::new(100_000, 8, 100, 0),
        threshold: None,
    })
    .unwrap();
    let (s400, s6400) = (random.ladder[0].1, random.ladder[1].1);
    outcome(
        stat <= KS_THRESHOLD && oracle && s6400 < s400,
        format!("ω≡I: statistic {stat:.4} at n=6400, oracle agreement {oracle}; two-point: {s400:.4} at n=400, {s6400:.4} at n=6400"),
    )
}

fn mu() -> Outcome {
    let rep = mu_decay(&MuDecaySetup {
        law: two_point(),
        ladder: vec![1, 2, 3],
        offsets: vec![0.5],
        psi: Observable::CoordRatio { axis: 0 },
        replicas: 16,
        seed: 1,
        reference: AverageOptions::new(100_000, 8, 100, 0),
        solver: SolveSettings::default(),
    })
    .unwrap();
    let decreasing = rep.ladder.windows(2).all(|w| w[1].1 < w[0].1);
    outcome(decreasing, report_line(&rep))
}

const REPRO_CONFIG: &str = r#"
schema_version = 1
seed = 11
workers = 2

[law]
dim = 2
weights = { family = "two_point", v1 = 1.0, v2 = 4.0, p = 0.5 }

[experiment]
kind = "homog_elliptic"
ladder = [9, 27]
replicas = 2
f = { kind = "constant", value = 1.0 }
g = { kind = "cosine_boundary" }
reference = { horizon = 20000, replicas = 4, walks = 50 }
"#;

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, REPRO_CONFIG).unwrap();
    let a = cli::run(&cfg, Some(&dir.path().join("a"))).unwrap();
    let b = cli::run(&cfg, Some(&dir.path().join("b"))).unwrap();
    let ta = std::fs::read(a.dir.join(cli::TABLE_FILE)).unwrap();
    let tb = std::fs::read(b.dir.join(cli::TABLE_FILE)).unwrap();
    outcome(ta == tb && !ta.is_empty(), format!("two runs, {} bytes of table.csv, identical {}", ta.len(), ta == tb))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 14] = [
        ("iterative solver matches direct solve", MINUTE, exactness),
        ("exit-time martingale identity", SECONDS, martingale),
        ("Feynman-Kac agrees with direct solve", minutes(2), feynman_kac),
        ("effective coefficients exact cases", SECONDS, effective_coefficients),
        ("elliptic ABP", minutes(2), elliptic_abp),
        ("subdifferential containment", MINUTE, containment),
        ("parabolic ABP", minutes(2), parabolic_abp),
        ("parabolic solver exactness", SECONDS, parabolic_exactness),
        ("homogenization error decays", minutes(20), homogenization),
        ("corrector sublinearity", minutes(15), corrector),
        ("ergodic averages converge", minutes(10), ergodicity),
        ("Berry-Esseen statistic", minutes(10), berry_esseen_rates),
        ("μ̂ decay", minutes(15), mu),
        ("byte-identical reruns", minutes(30), reproducibility),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let passed = out.passed && took <= *budget;
        if !passed {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} {} [{:.1}s of {}s]",
            k + 1,
            if passed { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of 14 passed", 14 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
