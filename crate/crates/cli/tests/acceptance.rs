//! Acceptance suite at reference scale (n = 500).
//!
//! Prints one PASS/FAIL line per criterion. Criteria listed in `KNOWN_FAILURES`
//! are reproducible mismatches with a documented cause: they still print FAIL,
//! but only an unexpected FAIL (or an unexpected PASS of a known failure)
//! makes the run exit non-zero. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 2 9`.

use std::collections::BTreeMap;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use hybridcond::bounds::{self, Theorem};
use hybridcond::covariance::{self, GridGeometry};
use hybridcond::experiments::cg::{cg_betas, cg_sweep, spearman};
use hybridcond::experiments::problem::Side;
use hybridcond::experiments::sweep::FamilyMember;
use hybridcond::experiments::validation::MAX_STATE_DIM;
use hybridcond::experiments::{
    figure, run_beta_sweep, run_parameter_family, run_sandwich_suite, ExperimentConfig, Problem, Study,
};
use hybridcond::linalg;
use hybridcond::observation::HVariant;
use hybridcond::rng;
use hybridcond::solver::cg_solve;

// Pinned tolerances and limits.
const SANDWICH_TRIALS: usize = 200;
const SANDWICH_SEED: u64 = 7;
const SANDWICH_MAX_N: usize = 60;
const SANDWICH_SLACK: f64 = 1e-9;
const SANDWICH_RUNTIME: Duration = Duration::from_secs(60);

const FIG1_MONOTONE_FROM: f64 = 0.5;
const FIG1_KAPPA_AT_END: f64 = 1e6;
const FIG1_END_WEIGHT: f64 = 0.99;
const FIG1_PREC_CEILING: f64 = 1e4;
const FIG1_RUNTIME: Duration = Duration::from_secs(300);

const SWITCH_GRID_POINTS: usize = 51;
const SWITCH_TOLERANCE: f64 = 0.1;
const SWITCH_RUNTIME: Duration = Duration::from_secs(600);

const GAP_MAX_WEIGHT: f64 = 0.9;
const GAP_MIN_DECADES: f64 = 0.0;
const GAP_MAX_DECADES: f64 = 3.5;

const P_VALUES: [f64; 3] = [50.0, 100.0, 200.0];
const P_BOUND_RTOL: f64 = 1e-12;
const P_KAPPA_MIN_SPREAD: f64 = 1e-6;

const SELECTION_VARIANTS: [HVariant; 3] = [HVariant::RowsFirstP, HVariant::EveryNthPoint, HVariant::RandomPlacement];
const SELECTION_SIGMA2: [f64; 3] = [0.5, 1.0, 2.0];
const SELECTION_RTOL: f64 = 1e-10;

const CG_TOL: f64 = 1e-6;
const CG_GRID_POINTS: usize = 20;
const CG_MIN_SPEARMAN: f64 = 0.6;
const CG_RUNTIME: Duration = Duration::from_secs(600);

const ORACLE_PAIRS: usize = 500;
const ORACLE_MAX_N: usize = 30;
const SQRT_RECONSTRUCTION: f64 = 1e-10;
const RANK_REL_TOL: f64 = 1e-10;

/// Criteria that fail for a documented reason.
const KNOWN_FAILURES: [(usize, &str); 2] = [
    (
        1,
        "the cross-term lower bound for the preconditioned Hessian is not a valid bound \
         (counterexample: ensemble spread orthogonal to the observed subspace)",
    ),
    (
        3,
        "the minimiser of the preconditioned condition number tracks the switch point in \
         direction but not within 0.1 away from the base setting",
    ),
];

type Criterion = (usize, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn panels(fig: &str) -> Vec<(String, Study)> {
    figure(fig).unwrap().panels.into_iter().map(|p| (p.name, p.study)).collect()
}

fn sweep_config(fig: &str, name: &str) -> ExperimentConfig {
    match panels(fig).into_iter().find(|(n, _)| n == name) {
        Some((_, Study::Sweep { config })) => config,
        _ => panic!("{fig} has no sweep panel {name}"),
    }
}

fn families(fig: &str) -> Vec<(String, Vec<FamilyMember>)> {
    panels(fig)
        .into_iter()
        .filter_map(|(name, study)| match study {
            Study::Family { config, family, values } => {
                Some((name, run_parameter_family(&config, family, &values).unwrap()))
            }
            _ => None,
        })
        .collect()
}

fn rel_eq(a: f64, b: f64, rtol: f64) -> bool {
    a == b || (a - b).abs() <= rtol * a.abs().max(b.abs())
}

fn bound_sandwich() -> Outcome {
    let clock = Instant::now();
    let report = run_sandwich_suite(SANDWICH_TRIALS, SANDWICH_SEED);
    let elapsed = clock.elapsed();
    let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
    let mut errors = 0;
    for t in &report.failed_trials {
        errors += usize::from(t.error.is_some());
        for v in &t.violations {
            let side = if v.side == Side::Lower { "lower" } else { "upper" };
            *by_kind.entry(format!("{}_{side}", v.theorem)).or_default() += 1;
        }
    }
    let max_n = MAX_STATE_DIM;
    let pass = report.passed() && max_n <= SANDWICH_MAX_N && elapsed < SANDWICH_RUNTIME;
    Outcome::new(
        pass,
        format!(
            "{} trials (n <= {max_n}, seed {SANDWICH_SEED}, slack {SANDWICH_SLACK:e}), {} checks, {} failing trials, \
             violations {by_kind:?}, errors {errors}, {:.1}s (limit {}s)",
            report.trials,
            report.checks,
            report.failed_trials.len(),
            elapsed.as_secs_f64(),
            SANDWICH_RUNTIME.as_secs()
        ),
    )
}

fn fig1_reproduction() -> Outcome {
    let clock = Instant::now();
    let unprec_cfg = sweep_config("fig1", "fig1_unprec");
    let unprec = run_beta_sweep(&unprec_cfg).unwrap();
    let prec = run_beta_sweep(&sweep_config("fig1", "fig1_prec")).unwrap();
    let at_one = Problem::build(&unprec_cfg).unwrap().evaluate_unpreconditioned(1.0).unwrap();
    let elapsed = clock.elapsed();

    let tail: Vec<_> = unprec.records.iter().filter(|r| r.beta >= FIG1_MONOTONE_FROM).collect();
    let monotone = tail.windows(2).all(|w| w[1].kappa > w[0].kappa);
    let end = unprec
        .records
        .iter()
        .find(|r| (r.beta - FIG1_END_WEIGHT).abs() < 1e-12)
        .map(|r| r.kappa)
        .unwrap_or(f64::NAN);
    let upper_above = unprec
        .records
        .iter()
        .all(|r| r.upper(Theorem::Thm4).is_some_and(|u| u >= r.kappa));
    let uppers: Vec<f64> = unprec.records.iter().map(|r| r.upper(Theorem::Thm4).unwrap()).collect();
    let upper_grows = uppers.windows(2).all(|w| w[1] > w[0]);
    let diverges = at_one.upper(Theorem::Thm4) == Some(f64::INFINITY) && at_one.kappa.is_infinite();
    let prec_max = prec.kappas().into_iter().fold(0.0, f64::max);
    let includes_one = prec.records.last().is_some_and(|r| r.beta == 1.0);
    let pass = monotone
        && end > FIG1_KAPPA_AT_END
        && upper_above
        && upper_grows
        && diverges
        && prec_max < FIG1_PREC_CEILING
        && includes_one
        && elapsed < FIG1_RUNTIME;
    Outcome::new(
        pass,
        format!(
            "monotone beyond {FIG1_MONOTONE_FROM}: {monotone}; kappa({FIG1_END_WEIGHT}) = {end:.3e} (> {FIG1_KAPPA_AT_END:e}); \
             upper >= kappa everywhere: {upper_above}; upper increasing: {upper_grows}; upper at beta=1 infinite: {diverges}; \
             max preconditioned kappa incl. beta=1 = {prec_max:.3e} (< {FIG1_PREC_CEILING:e}); {:.1}s (limit {}s)",
            elapsed.as_secs_f64(),
            FIG1_RUNTIME.as_secs()
        ),
    )
}

fn switch_point_prediction() -> Outcome {
    let clock = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, members) in families("fig5") {
        for m in &members {
            let ks = m.sweep.kappas();
            assert_eq!(ks.len(), SWITCH_GRID_POINTS);
            let best = (0..ks.len()).min_by(|&a, &b| ks[a].total_cmp(&ks[b])).unwrap();
            let argmin = m.sweep.records[best].beta;
            let ok = (argmin - m.sweep.switch_point).abs() <= SWITCH_TOLERANCE;
            pass &= ok;
            lines.push(format!(
                "{name}={}: argmin {argmin:.2} vs switch {:.3} {}",
                m.value,
                m.sweep.switch_point,
                if ok { "ok" } else { "off" }
            ));
        }
    }
    let elapsed = clock.elapsed();
    pass &= elapsed < SWITCH_RUNTIME;
    Outcome::new(
        pass,
        format!(
            "+-{SWITCH_TOLERANCE} on {SWITCH_GRID_POINTS} points; {}; {:.1}s (limit {}s)",
            lines.join("; "),
            elapsed.as_secs_f64(),
            SWITCH_RUNTIME.as_secs()
        ),
    )
}

fn magnitude_gap() -> Outcome {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, members) in families("fig3") {
        for m in &members {
            for r in m.sweep.records.iter().filter(|r| r.beta <= GAP_MAX_WEIGHT) {
                let gap = r.upper(Theorem::Thm4).unwrap().log10() - r.kappa.log10();
                lo = lo.min(gap);
                hi = hi.max(gap);
            }
        }
    }
    let pass = lo >= GAP_MIN_DECADES && hi <= GAP_MAX_DECADES;
    Outcome::new(
        pass,
        format!("gap over beta <= {GAP_MAX_WEIGHT} in [{lo:.3}, {hi:.3}] decades (allowed [{GAP_MIN_DECADES}, {GAP_MAX_DECADES}])"),
    )
}

fn observation_count_independence() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (fig, theorem) in [("fig4", Theorem::Thm4), ("fig6", Theorem::Thm5)] {
        let (name, members) = families(fig)
            .into_iter()
            .find(|(n, _)| n.ends_with('c'))
            .expect("observation count panel");
        let values: Vec<f64> = members.iter().map(|m| m.value).collect();
        assert_eq!(values, P_VALUES);
        let base = &members[0].sweep.records;
        let mut bounds_equal = true;
        let mut spread: f64 = 0.0;
        for (i, r0) in base.iter().enumerate() {
            for m in &members[1..] {
                let r = &m.sweep.records[i];
                bounds_equal &= rel_eq(r0.upper(theorem).unwrap(), r.upper(theorem).unwrap(), P_BOUND_RTOL);
                if r.kappa.is_finite() && r0.kappa.is_finite() {
                    spread = spread.max((r.kappa - r0.kappa).abs() / r0.kappa);
                }
            }
        }
        let varies = spread > P_KAPPA_MIN_SPREAD;
        pass &= bounds_equal && varies;
        details.push(format!(
            "{name} {theorem}: bounds equal to {P_BOUND_RTOL:e}: {bounds_equal}, max relative kappa change {spread:.3e}"
        ));
    }
    Outcome::new(pass, details.join("; "))
}

fn selection_operator_consistency() -> Outcome {
    let mut worst_k: f64 = 0.0;
    let mut worst_bound: f64 = 0.0;
    let base = sweep_config("fig1", "fig1_unprec");
    for variant in SELECTION_VARIANTS {
        for sigma2 in SELECTION_SIGMA2 {
            let cfg = ExperimentConfig {
                h_variant: variant,
                sigma2_r: sigma2,
                p: 100,
                ..base.clone()
            };
            let problem = Problem::build(&cfg).unwrap();
            worst_k = worst_k.max((problem.lambda_max_k - 1.0 / sigma2).abs() * sigma2);
            for beta in [0.0, 0.5, 0.9] {
                let rec = problem.evaluate_unpreconditioned(beta).unwrap();
                let coro = rec.report(Theorem::Coro2).expect("selection bound reported");
                let explicit = bounds::bounds_thm4(
                    problem.lambda_max_b0,
                    problem.lambda_min_b0,
                    problem.kappa_b0(),
                    problem.lambda_max_pf,
                    problem.lambda_max_k,
                    beta,
                )
                .unwrap();
                for (a, b) in [(coro.lower, explicit.lower), (coro.upper, explicit.upper)] {
                    worst_bound = worst_bound.max((a - b).abs() / a.abs().max(b.abs()));
                }
            }
        }
    }
    let pass = worst_k <= SELECTION_RTOL && worst_bound <= SELECTION_RTOL;
    Outcome::new(
        pass,
        format!(
            "H1/H2/H4, sigma2 in {SELECTION_SIGMA2:?}: max rel error of lambda_1(K) = {worst_k:.2e}, \
             of selection vs explicit-K bounds = {worst_bound:.2e} (limit {SELECTION_RTOL:e})"
        ),
    )
}

fn cg_trend() -> Outcome {
    let clock = Instant::now();
    let cg_config = |fig: &str| match panels(fig).into_iter().next() {
        Some((_, Study::Cg { config, .. })) => config,
        _ => panic!("{fig} is not a CG study"),
    };
    let unprec_cfg = cg_config("fig7");
    let prec_cfg = cg_config("fig8");
    let unprec = cg_sweep(&unprec_cfg, &cg_betas(&unprec_cfg), &[CG_TOL]).unwrap();
    let prec = cg_sweep(&prec_cfg, &cg_betas(&prec_cfg), &[CG_TOL]).unwrap();
    let elapsed = clock.elapsed();

    let solved = unprec.iter().chain(&prec).all(|r| r.error.is_none() && r.converged);
    let iters = |rows: &[hybridcond::solver::CgSweepRow]| -> Vec<f64> {
        rows.iter().map(|r| r.iterations.map_or(f64::NAN, |k| k as f64)).collect()
    };
    let (ui, pi) = (iters(&unprec), iters(&prec));
    let kappas: Vec<f64> = unprec.iter().map(|r| r.kappa).collect();
    let rho = spearman(&ui, &kappas);
    let interior = pi[1..pi.len() - 1].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (first, last) = (pi[0], pi[pi.len() - 1]);
    let ends_highest = first >= interior && last >= interior;
    let pass = solved
        && ui.len() == CG_GRID_POINTS
        && pi.len() == CG_GRID_POINTS
        && rho >= CG_MIN_SPEARMAN
        && ends_highest
        && elapsed < CG_RUNTIME;
    Outcome::new(
        pass,
        format!(
            "tol {CG_TOL:e}, {CG_GRID_POINTS} weights; all converged: {solved}; spearman(iterations, kappa) = {rho:.3} \
             (>= {CG_MIN_SPEARMAN}); preconditioned iterations at ends {first}/{last}, interior max {interior}; \
             {:.1}s (limit {}s)",
            elapsed.as_secs_f64(),
            CG_RUNTIME.as_secs()
        ),
    )
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::stream_rng(seed, rng::VALIDATION_STREAM);
    DMatrix::from_vec(rows, cols, rng::standard_normals(&mut r, rows * cols))
}

fn oracle_suites() -> Outcome {
    let mut weyl_ok = 0;
    let mut product_ok = 0;
    for i in 0..ORACLE_PAIRS {
        let seed = 1000 + 2 * i as u64;
        let n = 1 + i % ORACLE_MAX_N;
        let (g1, g2) = (gaussian(n, n, seed), gaussian(n, n, seed + 1));
        let (s1, s2) = ((&g1 + g1.transpose()) * 0.5, (&g2 + g2.transpose()) * 0.5);
        weyl_ok += usize::from(bounds::check_weyl(&s1, &s2).unwrap());
        let rank = 1 + (i * 7) % n;
        let p1 = linalg::symmetrize(&(g1.columns(0, rank) * g1.columns(0, rank).transpose()));
        let p2 = linalg::symmetrize(&(&g2 * g2.transpose()));
        product_ok += usize::from(bounds::check_product_inequality(&p1, &p2).unwrap());
    }

    let eye = DMatrix::<f64>::identity(50, 50);
    let rhs = gaussian(50, 1, 5).column(0).into_owned();
    let identity_iters = cg_solve(&eye, &rhs, 1e-10, 250).unwrap().iterations;

    let geom = GridGeometry::unit(500).unwrap();
    let b0 = covariance::build_static_b(&geom, 0.1, 1.0).unwrap();
    let root = covariance::sym_sqrt(&b0).unwrap();
    let sqrt_err = linalg::relative_frobenius_error(&(&root * &root), b0.data());

    let b1 = covariance::build_static_b(&geom, 0.05, 1.0).unwrap();
    let mut rank_ok = true;
    let mut ranks = Vec::new();
    for m in [10, 50, 100] {
        let x = covariance::sample_ensemble_factor(&b1, m, 1).unwrap();
        let e = linalg::eigenvalues_desc(covariance::ensemble_covariance(&x).data());
        let r = linalg::numerical_rank(&e, RANK_REL_TOL);
        rank_ok &= r < m;
        ranks.push(format!("m={m}: {r}"));
    }

    let pass = weyl_ok == ORACLE_PAIRS
        && product_ok == ORACLE_PAIRS
        && identity_iters == 1
        && sqrt_err < SQRT_RECONSTRUCTION
        && rank_ok;
    Outcome::new(
        pass,
        format!(
            "Weyl {weyl_ok}/{ORACLE_PAIRS}, product {product_ok}/{ORACLE_PAIRS} (n <= {ORACLE_MAX_N}); CG on identity \
             {identity_iters} iteration(s); sqrt reconstruction {sqrt_err:.2e} (< {SQRT_RECONSTRUCTION:e}); \
             ensemble rank {}",
            ranks.join(", ")
        ),
    )
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_hybridcond"))
            .args(["figure", "fig1", "--seed", "5", "--out"])
            .arg(d.path())
            .output()
            .unwrap();
        if !status.status.success() {
            return Outcome::new(false, format!("figure fig1 failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
    }
    let mut compared = Vec::new();
    let mut pass = true;
    for name in ["fig1_unprec.csv", "fig1_prec.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        pass &= !a.is_empty() && a == b;
        compared.push(format!("{name} {} bytes identical: {}", a.len(), a == b));
    }
    Outcome::new(pass, compared.join(", "))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "bound sandwich suite", bound_sandwich),
        (2, "fig1 reproduction", fig1_reproduction),
        (3, "switch point predicts minimum", switch_point_prediction),
        (4, "magnitude gap of the hybrid bound", magnitude_gap),
        (5, "bounds independent of observation count", observation_count_independence),
        (6, "selection-operator bound consistency", selection_operator_consistency),
        (7, "CG iteration trend", cg_trend),
        (8, "oracle suites", oracle_suites),
        (9, "determinism of figure output", determinism),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let outcome = check();
        let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == id).map(|(_, why)| *why);
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} {verdict}: {name}: {}", outcome.detail);
        match (outcome.pass, known) {
            (false, Some(why)) => println!("criterion {id} known failure: {why}"),
            (false, None) => unexpected += 1,
            (true, Some(_)) => {
                println!("criterion {id} passed but is listed as a known failure");
                unexpected += 1;
            }
            (true, None) => {}
        }
    }
    if unexpected > 0 {
        println!("acceptance: {unexpected} unexpected outcome(s)");
        std::process::exit(1);
    }
    println!("acceptance: all outcomes as expected");
}
