//! End-to-end acceptance checks. One pass/fail line is printed per
//! criterion; the test fails if any criterion fails.

use std::fmt::Write as _;

use rand::Rng;
use statrs::function::gamma::gamma_lr;

use edgeboot::bootstrap::{
    bootstrap_distribution, exact_bootstrap_cdf, Provenance, SampleSet,
};
use edgeboot::diagnostics::{
    e1_indicator, e2_indicator, e3_e4_indicator, rate_fit, E2Exponent, EventConfig,
};
use edgeboot::edgeworth::build_expansion;
use edgeboot::harness::{run_compare, run_prop1, ExperimentConfig};
use edgeboot::linalg::Matrix;
use edgeboot::mc::McConfig;
use edgeboot::populations::{CenteredExp, Population, StdNormal};
use edgeboot::regions::{gaussian_boundary_mass, lemma1_select, Ball};
use edgeboot::rng::{mix, stream_rng};
use edgeboot::smooth_model::StandardizedMean;
use edgeboot::tensors::{index_multisets, CumulantSet};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

// -- 1: moment/cumulant round trip ------------------------------------------

fn ac1_cumulant_round_trip() -> Outcome {
    let mut rng = stream_rng(0xAC01, 0);
    let mut max_err: f64 = 0.0;
    for trial in 0..100 {
        let d = 1 + trial % 3;
        let order = 3 + trial % 4;
        let mut moments = CumulantSet::new(d, order);
        for r in 1..=order {
            for ms in index_multisets(d, r) {
                let idx: Vec<usize> = ms.iter().map(|&i| i as usize).collect();
                moments.set(&idx, rng.gen_range(-1.0..1.0));
            }
        }
        let cums = moments.moments_to_cumulants().unwrap();
        let back = cums.cumulants_to_moments().unwrap();
        for r in 1..=order {
            for ms in index_multisets(d, r) {
                let idx: Vec<usize> = ms.iter().map(|&i| i as usize).collect();
                max_err = max_err.max((moments.get(&idx) - back.get(&idx)).abs());
            }
        }
    }
    outcome(
        "AC1 cumulant-round-trip",
        max_err <= 1e-10,
        format!("max_abs_err = {max_err:e} tol = 1e-10"),
    )
}

// -- 2: structural properties of the expansion polynomials ------------------

fn random_cumulants(rng: &mut rand_chacha::ChaCha8Rng, q: usize, nu: usize) -> (CumulantSet, Matrix) {
    let mut v = Matrix::identity(q);
    for i in 0..q {
        for j in 0..=i {
            let bump = rng.gen_range(-0.2..0.2);
            if i == j {
                v[(i, i)] += rng.gen_range(0.0..0.5);
            } else {
                v[(i, j)] += bump;
                v[(j, i)] += bump;
            }
        }
    }
    let mut cums = CumulantSet::new(q, nu + 2);
    for i in 0..q {
        for j in 0..q {
            cums.set(&[i, j], v[(i, j)]);
        }
    }
    for r in 3..=nu + 2 {
        for ms in index_multisets(q, r) {
            let idx: Vec<usize> = ms.iter().map(|&i| i as usize).collect();
            cums.set(&idx, rng.gen_range(-0.5..0.5));
        }
    }
    (cums, v)
}

fn ac2_term_structure() -> Outcome {
    let mut rng = stream_rng(0xAC02, 0);
    let mut detail = String::new();
    let mut pass = true;
    for trial in 0..50u64 {
        let q = 1 + (trial as usize) % 3;
        let nu = 1 + (trial as usize) % 2;
        let (cums, v) = random_cumulants(&mut rng, q, nu);
        let exp = match build_expansion(&cums, &v, nu) {
            Ok(e) => e,
            Err(e) => {
                pass = false;
                let _ = write!(detail, "build failed: {e}; ");
                continue;
            }
        };
        for j in 1..=nu {
            let term = exp.term(j).unwrap();
            if term.degree() > 3 * j as u32 {
                pass = false;
                let _ = write!(detail, "degree {} > {} at trial {trial}; ", term.degree(), 3 * j);
            }
            for (alpha, c) in term.terms() {
                let deg: u32 = alpha.iter().sum();
                if c != 0.0 && (deg as usize) % 2 != j % 2 {
                    pass = false;
                    let _ = write!(detail, "parity violation trial {trial} j={j}; ");
                }
            }
            // dependence: only cumulants up to order j+2 matter
            let mut bumped = cums.clone();
            for r in j + 3..=nu + 2 {
                for ms in index_multisets(q, r) {
                    let idx: Vec<usize> = ms.iter().map(|&i| i as usize).collect();
                    bumped.set(&idx, bumped.get(&idx) + 1.0);
                }
            }
            let exp2 = build_expansion(&bumped, &v, nu).unwrap();
            let term2 = exp2.term(j).unwrap();
            for (alpha, c) in term.terms() {
                if term2.coefficient(alpha) != c {
                    pass = false;
                    let _ = write!(detail, "order-(j+2) dependence broken trial {trial} j={j}; ");
                    break;
                }
            }
            // centered: integral of Pj against the Gaussian is zero
            let (est, se) = exp
                .signed_measure(j, &Ball::all_space(q), &McConfig::new(1_000_000, mix(0xAC02, trial * 4 + j as u64)))
                .unwrap();
            if est.abs() > 3.0 * se {
                pass = false;
                let _ = write!(detail, "nonzero total mass {est:e} (3se {:e}) trial {trial} j={j}; ", 3.0 * se);
            }
        }
    }
    // Gaussian input: every correction term vanishes identically
    for q in 1..=3usize {
        let mut cums = CumulantSet::new(q, 4);
        for i in 0..q {
            cums.set(&[i, i], 1.0);
        }
        let exp = build_expansion(&cums, &Matrix::identity(q), 2).unwrap();
        for j in 1..=2 {
            let max_c = exp
                .term(j)
                .unwrap()
                .terms()
                .map(|(_, c)| c.abs())
                .fold(0.0f64, f64::max);
            if max_c >= 1e-12 {
                pass = false;
                let _ = write!(detail, "gaussian input left coefficient {max_c:e} q={q} j={j}; ");
            }
        }
    }
    if detail.is_empty() {
        detail = "parity, degree, dependence, gaussian-null, centered-mass all hold".into();
    }
    outcome("AC2 term-structure", pass, detail)
}

// -- 3: expansion vs the exact standardized-mean law of Exp(1) --------------

fn ac3_gamma_closed_form() -> Outcome {
    // population cumulants of Exp(1): kappa_r = (r-1)!
    let mut cums = CumulantSet::new(1, 3);
    cums.set(&[0, 0], 1.0);
    cums.set(&[0, 0, 0], 2.0);
    let exp = build_expansion(&cums, &Matrix::identity(1), 1).unwrap();
    let grid: Vec<f64> = (0..25).map(|i| -3.0 + 0.25 * i as f64).collect();
    let n_grid = [10u64, 20, 40, 80, 160];
    let fit = rate_fit(
        &|n| {
            let nf = n as f64;
            let mut sup: f64 = 0.0;
            for &t in &grid {
                let exact = gamma_lr(nf, nf + nf.sqrt() * t);
                let approx = exp.probability_quadrature(&Ball::half_line(t), n, 1).unwrap();
                sup = sup.max((exact - approx).abs());
            }
            Ok((sup, 0.0))
        },
        &n_grid,
    )
    .unwrap();
    let slope = fit.fit.map(|f| f.slope).unwrap_or(f64::NAN);
    outcome(
        "AC3 gamma-closed-form",
        (-1.3..=-0.7).contains(&slope),
        format!("log-log slope = {slope:.4} target [-1.3, -0.7]"),
    )
}

// -- 4: exact enumeration vs Monte Carlo bootstrap --------------------------

fn ac4_exact_vs_mc() -> Outcome {
    let pop = CenteredExp;
    let mut rng = stream_rng(0xAC04, 0);
    let sset = SampleSet::new(vec![pop.sample(&mut rng, 6)], Provenance::External).unwrap();
    let stat = StandardizedMean { sigma: 1.0 };
    let regions: Vec<Ball> =
        (0..20).map(|i| Ball::half_line(-2.0 + 4.0 * i as f64 / 19.0)).collect();
    let exact = exact_bootstrap_cdf(&stat, &sset, &regions).unwrap();
    let dist = bootstrap_distribution(&stat, &sset, 200_000, 0xAC04).unwrap();
    let mut sup: f64 = 0.0;
    for (region, e) in regions.iter().zip(&exact) {
        let (p, _) = dist.prob_region(region).unwrap();
        sup = sup.max((p - e).abs());
    }
    outcome(
        "AC4 exact-bootstrap-oracle",
        sup <= 0.006,
        format!("sup_gap = {sup:e} tol = 6e-3"),
    )
}

// -- 5: expansion error decay against the bootstrap -------------------------

fn ac5_rate_shape() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "[experiment]\nkind = compare\nseed = 41\nout = {}\n\
         [population]\nname = centered-exp\n\
         [statistic]\nname = standardized-mean\nparam = 1.0\nnu = 1\n\
         [grid]\nn = 25,50,100\nreplicates = 10\n\
         [budget]\nbootstrap_reps = 200000\n\
         [regions]\nkind = half-line-grid\nlo = -2\nhi = 2\ncount = 20\n",
        tmp.path().display()
    );
    let cfg = ExperimentConfig::from_text(&text).unwrap();
    let report = run_compare(&cfg).unwrap();
    let med: Vec<(u64, f64, f64)> = report
        .sup_gaps
        .iter()
        .map(|(n, sups)| (*n, sups[0], sups[1]))
        .collect();
    let mut pass = true;
    let mut detail = String::new();
    // the per-replicate sup gap cannot resolve below the Kolmogorov-Smirnov
    // noise of the bootstrap MC itself (median ~ 0.83 / sqrt(reps)); a gap
    // at that floor counts as decay below MC resolution
    let floor = 1.2 * 0.83 / (200_000f64).sqrt();
    for w in med.windows(2) {
        let ratio = w[1].2 / w[0].2;
        if w[1].2 <= floor {
            let _ = write!(
                detail,
                "err({}) = {:.2e} at the MC resolution floor ({floor:.2e}); ",
                w[1].0, w[1].2
            );
        } else {
            let _ = write!(detail, "err({})/err({}) = {ratio:.3}; ", w[1].0, w[0].0);
            if ratio > 0.75 {
                pass = false;
            }
        }
    }
    for (n, e0, e1) in &med {
        if e1 >= e0 {
            pass = false;
            let _ = write!(detail, "order-1 gap {e1:.4} not below order-0 gap {e0:.4} at n={n}; ");
        }
    }
    outcome("AC5 expansion-error-decay", pass, detail)
}

// -- 6: boundary-shell probability scaling ----------------------------------

fn ac6_shell_scaling() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "[experiment]\nkind = prop1\nseed = 17\nout = {}\n\
         [statistic]\nname = mean-difference\nk = 2\nnu = 1\n\
         [grid]\nn = 100,1000,10000\n\
         [budget]\nmc_samples = 1000000\n\
         [regions]\nkind = half-line-grid\nlo = -1.5\nhi = 1.5\ncount = 20\n\
         [prop1]\nbeta = 0.5\n",
        tmp.path().display()
    );
    let cfg = ExperimentConfig::from_text(&text).unwrap();
    let report = run_prop1(&cfg).unwrap();
    let scaled: Vec<String> = report
        .per_n
        .iter()
        .map(|(n, p, _)| format!("{:.4}@n={n}", p * (*n as f64).sqrt()))
        .collect();
    outcome(
        "AC6 shell-scaling",
        report.pass,
        format!("scaled sup shell probs: {}", scaled.join(", ")),
    )
}

// -- 7: rank-one downdate selection stays positive definite -----------------

fn ac7_downdate_selection() -> Outcome {
    let mut rng = stream_rng(0xAC07, 0);
    let mut min_lambda = f64::INFINITY;
    let mut pass = true;
    for trial in 0..1000 {
        let q = 1 + trial % 3;
        let d = q + 1 + trial % 3;
        let vs: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..q).map(|_| rng.gen_range(-1.0f64..1.0) + 0.1).collect())
            .collect();
        match lemma1_select(&vs) {
            Ok((_, lam)) => {
                min_lambda = min_lambda.min(lam);
                if lam <= 1e-12 {
                    pass = false;
                }
            }
            Err(_) => {
                // near-singular W0 draw: resample deterministically
                let vs2: Vec<Vec<f64>> = (0..d)
                    .map(|_| (0..q).map(|_| rng.gen_range(-1.0f64..1.0) + 0.5).collect())
                    .collect();
                match lemma1_select(&vs2) {
                    Ok((_, lam)) => {
                        min_lambda = min_lambda.min(lam);
                        if lam <= 1e-12 {
                            pass = false;
                        }
                    }
                    Err(_) => pass = false,
                }
            }
        }
    }
    outcome(
        "AC7 downdate-selection",
        pass,
        format!("min selected eigenvalue over 1000 families = {min_lambda:e}"),
    )
}

// -- 8: boundary mass scales linearly in the shell width --------------------

fn ac8_boundary_mass_linearity() -> Outcome {
    let ball = Ball::new(vec![0.0, 0.0], 1.0).unwrap();
    let v = Matrix::identity(2);
    let mut ratios = Vec::new();
    for (i, eps) in [0.02, 0.01, 0.005].into_iter().enumerate() {
        let (mass, _) =
            gaussian_boundary_mass(&ball, &v, eps, &McConfig::new(1_000_000, mix(0xAC08, i as u64)))
                .unwrap();
        ratios.push(mass / eps);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let max_dev = ratios.iter().map(|r| (r - mean).abs() / mean).fold(0.0f64, f64::max);
    outcome(
        "AC8 boundary-mass-linearity",
        max_dev <= 0.15,
        format!("mass/eps = {ratios:.4?}, max relative deviation = {max_dev:.3}"),
    )
}

// -- 9: sample-event failure rates decay ------------------------------------

fn event_rates(event: &str, ec: &EventConfig, seed: u64) -> Vec<f64> {
    let pop = StdNormal { d: 1 };
    let stat = StandardizedMean { sigma: 1.0 };
    let mu = pop.mean();
    [25u64, 50, 100, 200]
        .iter()
        .map(|&n| {
            let replicates = 2000;
            let mut failures = 0u64;
            for rep in 0..replicates {
                let mut rng = stream_rng(mix(seed, n), rep);
                let sset = SampleSet::new(
                    vec![pop.sample(&mut rng, n as usize)],
                    Provenance::External,
                )
                .unwrap();
                let hold = match event {
                    "e1" => e1_indicator(&sset, &stat, &mu, ec).unwrap(),
                    "e2" => e2_indicator(&sset, ec, E2Exponent::EventForm).unwrap(),
                    "e3" => e3_e4_indicator(&sset, ec).unwrap().0,
                    _ => unreachable!(),
                };
                if !hold {
                    failures += 1;
                }
            }
            failures as f64 / replicates as f64
        })
        .collect()
}

/// Strictly decreasing, except that once the estimate hits the Monte Carlo
/// floor (zero failures in 2000 replicates) it may stay there.
fn decays(seq: &[f64]) -> bool {
    seq.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0))
}

fn ac9_event_rates() -> Outcome {
    let mut ec = EventConfig {
        d: 1,
        nu: 1,
        ..EventConfig::default()
    };
    ec.m = EventConfig::minimal_legal_m(1, ec.u, 1, 1);
    let e3 = event_rates("e3", &ec, 0xAC93);
    let e1 = event_rates("e1", &ec, 0xAC91);
    // a constant close enough to the population moment that exceedances
    // remain observable at this replication budget
    let mut ec2 = ec;
    ec2.c2 = 1.5 * StdNormal { d: 1 }.abs_moment(5.0);
    let e2 = event_rates("e2", &ec2, 0xAC92);
    let pass = decays(&e3)
        && *e3.last().unwrap() <= 0.01
        && decays(&e1)
        && decays(&e2);
    outcome(
        "AC9 event-rate-decay",
        pass,
        format!("1-P(E3) = {e3:?}, 1-P(E1) = {e1:?}, 1-P(E2) = {e2:?}"),
    )
}

// -- 10: worker-count independence ------------------------------------------

fn ac10_determinism() -> Outcome {
    let make = |out: &std::path::Path| {
        format!(
            "[experiment]\nkind = compare\nseed = 99\nout = {}\n\
             [population]\nname = centered-exp\n\
             [statistic]\nparam = 1.0\n\
             [grid]\nn = 40\n\
             [budget]\nbootstrap_reps = 30000\n\
             [regions]\nkind = half-line-grid\nlo = -1\nhi = 1\ncount = 6\n",
            out.display()
        )
    };
    let tmp1 = tempfile::tempdir().unwrap();
    let tmp2 = tempfile::tempdir().unwrap();
    let cfg1 = ExperimentConfig::from_text(&make(tmp1.path())).unwrap();
    let cfg2 = ExperimentConfig::from_text(&make(tmp2.path())).unwrap();
    let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let pool8 = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
    pool1.install(|| run_compare(&cfg1)).unwrap();
    pool8.install(|| run_compare(&cfg2)).unwrap();
    // the config hash covers the out path, so drop that single metadata line
    let strip = |p: &std::path::Path| {
        std::fs::read_to_string(p.join("compare.csv"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("# config_hash"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let identical = strip(tmp1.path()) == strip(tmp2.path());
    outcome(
        "AC10 worker-count-determinism",
        identical,
        if identical {
            "compare.csv bit-identical under --jobs 1 and --jobs 8".into()
        } else {
            "outputs differ between worker counts".into()
        },
    )
}

#[test]
fn acceptance_criteria() {
    let outcomes = vec![
        ac1_cumulant_round_trip(),
        ac2_term_structure(),
        ac3_gamma_closed_form(),
        ac4_exact_vs_mc(),
        ac5_rate_shape(),
        ac6_shell_scaling(),
        ac7_downdate_selection(),
        ac8_boundary_mass_linearity(),
        ac9_event_rates(),
        ac10_determinism(),
    ];
    let mut failures = Vec::new();
    for o in &outcomes {
        println!("{} {} — {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        if !o.pass {
            failures.push(format!("{}: {}", o.name, o.detail));
        }
    }
    assert!(failures.is_empty(), "failed criteria:\n{}", failures.join("\n"));
}
