//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Regenerate the golden summary with `HLAB_UPDATE_GOLDEN=1 cargo test --test acceptance`.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use num::{BigInt, BigRational, One, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use harmonic_lab::dimension::{
    det_doubling_scan, estimate_hfk_dim, kernel_injectivity_check, kleiner_bound, restrict_to_subgroup,
    DimensionStatus,
};
use harmonic_lab::experiment::{emit_summary, run_experiment, ExperimentConfig, Task};
use harmonic_lab::group::doubling_constant;
use harmonic_lab::harmonic::{gram_matrix, harmonic_basis, harmonicity_residual, Backend, BallFunction};
use harmonic_lab::inequality::{
    cover_bounds, cover_exponent, fit_error_decay, poincare_check, reverse_poincare_check, separated_cover,
    PoincareVariant,
};
use harmonic_lab::measure::{
    check_courteous, convolution_power, geometric_tail_measure, hitting_measure, uniform_on_generators,
    uniform_on_nonidentity_generators, HittingMode,
};
use harmonic_lab::poly::MultiPoly;
use harmonic_lab::polynomial::{action_generators, polynomial_degree_test, weight_decomposition};
use harmonic_lab::{Group, GroupElement};

const RANK_TOL: f64 = 1e-8;
const SCHEDULE: [u32; 3] = [6, 8, 10];
const DIM_SECONDS: f64 = 10.0;
const HITTING_EXACT_TOL: f64 = 1e-12;
const MC_SIGMAS: f64 = 3.0;
const MC_SAMPLES: usize = 100_000;
const MC_SEED: u64 = 20240917;
const SUBGROUP_RESIDUAL_TOL: f64 = 1e-6;
const POINCARE_FUNCTIONS: usize = 100;
const POINCARE_SECONDS: f64 = 60.0;
const POINCARE_SEED: u64 = 7;
const DET_REL_TOL: f64 = 1e-9;
const UNIPOTENT_TOL: f64 = 1e-6;
const KLEINER_EPS: f64 = 0.25;
const GEOMETRIC_DECAY: f64 = 1.0;
const GEOMETRIC_MASS_TOL: f64 = 1e-8;

struct Line {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn z(d: usize) -> Group {
    Group::lattice(d)
}

fn expected_dim(d: usize, k: u32) -> usize {
    if d == 1 {
        2
    } else {
        2 * k as usize + 1
    }
}

// ---------------------------------------------------------------------------
// Exact rational oracle: dim ker(P - I) on polynomials of degree <= k in Z^d.

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn binom(n: u32, k: u32) -> BigInt {
    let mut b = BigInt::one();
    for i in 0..k {
        b = b * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    b
}

fn exponents(d: usize, k: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|e: Vec<u32>| {
                let used: u32 = e.iter().sum();
                (0..=k - used).map(move |a| {
                    let mut e2 = e.clone();
                    e2.push(a);
                    e2
                })
            })
            .collect();
    }
    out
}

fn rational_rank(mut m: Vec<Vec<BigRational>>) -> usize {
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&r| !m[r][c].is_zero()) else { continue };
        m.swap(rank, p);
        let pivot = m[rank][c].clone();
        for r in 0..m.len() {
            if r != rank && !m[r][c].is_zero() {
                let f = m[r][c].clone() / pivot.clone();
                for j in c..cols {
                    let t = m[rank][j].clone() * f.clone();
                    m[r][j] -= t;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// `steps` is a list of (displacement, mass) pairs.
fn oracle_dim(d: usize, k: u32, steps: &[(Vec<i64>, BigRational)]) -> usize {
    let monos = exponents(d, k);
    let index = |e: &[u32]| monos.iter().position(|m| m == e).unwrap();
    let mut m = vec![vec![BigRational::zero(); monos.len()]; monos.len()];
    for (col, alpha) in monos.iter().enumerate() {
        // sum_s mu(s) prod_i (x_i + s_i)^{alpha_i} - x^alpha
        for (s, w) in steps {
            let mut terms: Vec<(Vec<u32>, BigRational)> = vec![(vec![], w.clone())];
            for i in 0..d {
                let mut next = Vec::new();
                for (e, c) in &terms {
                    for j in 0..=alpha[i] {
                        let coef = BigRational::from(binom(alpha[i], j) * BigInt::from(s[i]).pow(alpha[i] - j));
                        let mut e2 = e.clone();
                        e2.push(j);
                        next.push((e2, c.clone() * coef));
                    }
                }
                terms = next;
            }
            for (e, c) in terms {
                m[index(&e)][col] += c;
            }
        }
        m[col][col] -= BigRational::one();
    }
    monos.len() - rational_rank(m)
}

fn uniform_steps(d: usize) -> Vec<(Vec<i64>, BigRational)> {
    let n = 2 * d as i64 + 1;
    let mut steps = vec![(vec![0; d], rat(1, n))];
    for i in 0..d {
        for s in [1, -1] {
            let mut e = vec![0; d];
            e[i] = s;
            steps.push((e, rat(1, n)));
        }
    }
    steps
}

fn srw_steps(d: usize) -> Vec<(Vec<i64>, BigRational)> {
    uniform_steps(d).into_iter().skip(1).map(|(e, _)| (e, rat(1, 2 * d as i64))).collect()
}

// ---------------------------------------------------------------------------

fn c01() -> Line {
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, label) in [(1usize, "uniform"), (2, "uniform"), (2, "srw")] {
        let g = z(d);
        let mu = if label == "srw" { uniform_on_nonidentity_generators(&g) } else { uniform_on_generators(&g) };
        let steps = if label == "srw" { srw_steps(d) } else { uniform_steps(d) };
        for k in 1..=3 {
            let t = Instant::now();
            let est = estimate_hfk_dim(&g, &mu, k, &SCHEDULE, RANK_TOL);
            let secs = t.elapsed().as_secs_f64();
            let oracle = oracle_dim(d, k, &steps);
            let got = est.ok().and_then(|e| e.dimension);
            let good = got == Some(oracle) && oracle == expected_dim(d, k) && secs < DIM_SECONDS;
            ok &= good;
            parts.push(format!("Z{d}/{label}/k{k}={got:?}(oracle {oracle},{secs:.2}s)"));
        }
    }
    Line { id: 1, name: "dimension oracle equivalence", pass: ok, detail: parts.join(" ") }
}

fn c02() -> Line {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [1usize, 2] {
        let g = z(d);
        let base = uniform_on_generators(&g);
        let geo = geometric_tail_measure(&g, GEOMETRIC_DECAY, GEOMETRIC_MASS_TOL).unwrap();
        let sq = convolution_power(&g, &base, 2).unwrap();
        for (label, mu) in [("geometric", &geo), ("mu*2", &sq)] {
            for k in 1..=3 {
                let got = estimate_hfk_dim(&g, mu, k, &SCHEDULE, RANK_TOL).ok().and_then(|e| e.dimension);
                ok &= got == Some(expected_dim(d, k));
                parts.push(format!("Z{d}/{label}/k{k}={got:?}"));
            }
        }
    }
    Line { id: 2, name: "measure independence", pass: ok, detail: parts.join(" ") }
}

fn c03() -> Line {
    let g = z(1);
    let even = Group::sublattice(vec![vec![2]]).unwrap();
    let mu = uniform_on_nonidentity_generators(&g);
    let want = [(-2i64, 0.25), (0, 0.5), (2, 0.25)];
    let exact = hitting_measure(&g, &even, &mu, HittingMode::Exact { trunc_radius: 16 }).unwrap();
    let exact_err = want
        .iter()
        .map(|&(x, p)| (exact.measure.mass_of(&GroupElement::new(vec![x])) - p).abs())
        .fold(0.0, f64::max);
    let exact_ok = exact_err < HITTING_EXACT_TOL && exact.measure.support.len() == 3;

    let mc = hitting_measure(&g, &even, &mu, HittingMode::MonteCarlo { samples: MC_SAMPLES, seed: MC_SEED }).unwrap();
    let mut worst_sigma: f64 = 0.0;
    for &(x, p) in &want {
        let e = mc.diagnostics.estimates.iter().find(|e| e.element.coords() == [x]);
        let sigma = e.map_or(f64::INFINITY, |e| (e.probability - p).abs() / e.standard_error);
        worst_sigma = worst_sigma.max(sigma);
    }
    let mc_ok = worst_sigma <= MC_SIGMAS;

    let court = check_courteous(&even, &exact.measure);
    let court_ok = court.symmetric && court.adapted_radius.is_some();

    // HF_1(Z^2) restricted to the checkerboard sublattice.
    let g2 = z(2);
    let srw = uniform_on_nonidentity_generators(&g2);
    let checker = Group::sublattice(vec![vec![1, 1], vec![1, -1]]).unwrap();
    let mu_h = hitting_measure(&g2, &checker, &srw, HittingMode::Exact { trunc_radius: 16 }).unwrap().measure;
    let hb = harmonic_basis(&g2, &srw, 1, Backend::PolyAnsatz { eval_radius: 40 }, RANK_TOL).unwrap();
    let r_sub = 10;
    let restricted = restrict_to_subgroup(&checker, &hb.functions, r_sub + mu_h.support_radius()).unwrap();
    let residual = restricted
        .iter()
        .map(|f| harmonicity_residual(&checker, f, &mu_h, r_sub).unwrap().sup)
        .fold(0.0, f64::max);
    let rank = gram_matrix(&restricted, r_sub, RANK_TOL).unwrap().numerical_rank;
    let sub_ok = residual < SUBGROUP_RESIDUAL_TOL && rank == 3;

    Line {
        id: 3,
        name: "hitting measure exactness",
        pass: exact_ok && mc_ok && court_ok && sub_ok,
        detail: format!(
            "exact_err={exact_err:.1e} mc_worst={worst_sigma:.2}se symmetric={} adapted={:?} sublattice_residual={residual:.1e} gram_rank={rank}",
            court.symmetric, court.adapted_radius
        ),
    }
}

fn random_functions(ball: &Arc<harmonic_lab::Ball>, n: usize, seed: u64, stream: u64) -> Vec<BallFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n)
        .map(|_| {
            let values = (0..ball.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            BallFunction::new(ball.clone(), values).unwrap()
        })
        .collect()
}

fn c04() -> Line {
    let t = Instant::now();
    let (mut passed, mut total) = (0usize, 0usize);
    let mut worst: f64 = 0.0;
    let mut floors = Vec::new();
    for d in [1usize, 2] {
        let g = z(d);
        let mu2 = convolution_power(&g, &uniform_on_generators(&g), 2).unwrap();
        for r in [4u32, 8, 16] {
            let ball = Arc::new(g.ball(3 * r + mu2.support_radius()).unwrap());
            for f in random_functions(&ball, POINCARE_FUNCTIONS, POINCARE_SEED, r as u64) {
                for variant in [PoincareVariant::Inf, PoincareVariant::Courteous { mu: &mu2, c: None }] {
                    let rep = poincare_check(&g, &f, r, variant).unwrap();
                    if let Some(&c) = rep.constants.get("c") {
                        if !floors.contains(&c) {
                            floors.push(c);
                        }
                    }
                    worst = worst.max(rep.ratio);
                    passed += rep.pass as usize;
                    total += 1;
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Line {
        id: 4,
        name: "Poincare suite",
        pass: passed == total && secs < POINCARE_SECONDS,
        detail: format!("{passed}/{total} pass, worst ratio {worst:.3}, density floors {floors:?}, {secs:.1}s"),
    }
}

fn c05() -> Line {
    let mut ok = true;
    let mut parts = Vec::new();
    let x = |n| MultiPoly::variable(n, 0);
    let y = MultiPoly::variable(2, 1);
    let mut x2y2 = x(2).mul(&x(2));
    x2y2.add_scaled(&y.mul(&y), -1.0);
    let cases: Vec<(usize, &str, MultiPoly, u32)> = vec![
        (1, "1", MultiPoly::constant(1, 1.0), 1),
        (1, "x", x(1), 1),
        (2, "1", MultiPoly::constant(2, 1.0), 2),
        (2, "x", x(2), 2),
        (2, "y", y.clone(), 2),
        (2, "xy", x(2).mul(&y), 2),
        (2, "x^2-y^2", x2y2, 2),
    ];
    let radii: Vec<u32> = (4..=16).collect();
    for d in [1usize, 2] {
        let g = z(d);
        let compact = uniform_on_generators(&g);
        let geo = geometric_tail_measure(&g, GEOMETRIC_DECAY, GEOMETRIC_MASS_TOL).unwrap();
        for (mlabel, mu) in [("compact", &compact), ("geometric", &geo)] {
            let c_mu = check_courteous(&g, mu).certified_tail_rate;
            let ball = Arc::new(g.ball(3 * 16 + mu.support_radius()).unwrap());
            for (_, flabel, p, k) in cases.iter().filter(|c| c.0 == d) {
                let f = BallFunction::from_poly(ball.clone(), p);
                let reps: Vec<_> =
                    radii.iter().map(|&r| reverse_poincare_check(&g, &f, r, mu, *k, None).unwrap()).collect();
                let all_pass = reps.iter().all(|r| r.pass);
                let worst = reps.iter().map(|r| r.ratio).fold(0.0, f64::max);
                let fit = fit_error_decay(&reps);
                let decay = match (&fit, c_mu) {
                    (Some(fit), Some(c)) => fit.rate >= c / 2.0,
                    // No tail: the error term is identically zero.
                    (None, _) => reps.iter().all(|r| r.rhs_error == 0.0) && mlabel == "compact",
                    (Some(_), None) => false,
                };
                ok &= all_pass && decay;
                let rate = fit.map_or("n/a".to_string(), |f| format!("{:.3}", f.rate));
                parts.push(format!(
                    "Z{d}/{mlabel}/{flabel}:worst={worst:.1e},rate={rate}/c_mu/2={}",
                    c_mu.map_or("n/a".to_string(), |c| format!("{:.3}", c / 2.0))
                ));
            }
        }
    }
    Line { id: 5, name: "reverse Poincare suite", pass: ok, detail: parts.join(" ") }
}

fn c06() -> Line {
    let g = z(2);
    let mut ok = true;
    let mut parts = Vec::new();
    for r in [12u32, 24] {
        let d = doubling_constant(&g, 2 * r).unwrap().doubling_constant;
        for eps in [0.25, 1.0 / 3.0] {
            let cover = separated_cover(&g, r, eps).unwrap();
            let b = cover_bounds(&cover, d).unwrap();
            // Independent integer bounds.
            let n = cover_exponent(eps).unwrap();
            let j_bound = d.powi(n as i32).floor() as u64;
            let beta_bound = d.powi(3).floor() as u64;
            let good = cover.covering_verified
                && cover.separation_verified
                && cover.j as u64 <= j_bound
                && cover.beta as u64 <= beta_bound
                && b.j_ok
                && b.beta_ok
                && n == (2.0 / eps).log2().ceil() as u32;
            ok &= good;
            parts.push(format!(
                "R{r}/eps{eps:.3}:J={}<={j_bound},beta={}<={beta_bound}",
                cover.j, cover.beta
            ));
        }
    }
    Line { id: 6, name: "cover bounds", pass: ok, detail: parts.join(" ") }
}

fn c07() -> Line {
    let mut ok = true;
    let mut parts = Vec::new();
    for d in [1usize, 2] {
        let g = z(d);
        let mu = uniform_on_generators(&g);
        let doubling = doubling_constant(&g, 2 * SCHEDULE[SCHEDULE.len() - 1]).unwrap().doubling_constant;
        let bound = kleiner_bound(doubling, KLEINER_EPS).unwrap();
        for k in 1..=3 {
            let dim = estimate_hfk_dim(&g, &mu, k, &SCHEDULE, RANK_TOL).ok().and_then(|e| e.dimension);
            ok &= dim.is_some_and(|v| v as u64 <= bound);
            parts.push(format!("Z{d}/k{k}:{dim:?}<={bound}"));
        }
    }
    let g = z(2);
    let mu2 = convolution_power(&g, &uniform_on_generators(&g), 2).unwrap();
    let r = 24;
    let hb = harmonic_basis(&g, &mu2, 1, Backend::PolyAnsatz { eval_radius: 6 * r + 4 }, RANK_TOL).unwrap();
    let kernel = kernel_injectivity_check(&g, &hb.functions, &mu2, KLEINER_EPS, r, RANK_TOL);
    let detail = match &kernel {
        Ok(k) => format!("ker dim {} (J={}, dim V={})", k.kernel_dim, k.j, k.dim_v),
        Err(e) => format!("kernel check error: {e}"),
    };
    ok &= kernel.is_ok_and(|k| k.injective && k.kernel_dim == 0 && k.dim_v == 3);
    parts.push(detail);
    Line { id: 7, name: "Kleiner bound consistency", pass: ok, detail: parts.join(" ") }
}

fn c08() -> Line {
    let g = z(1);
    let w = 1.0 / 3.0;
    let radii = [5u32, 10, 30];
    let ball = Arc::new(g.ball(6 * 30).unwrap());
    let basis = vec![BallFunction::constant(ball.clone(), 1.0), BallFunction::from_poly(ball, &MultiPoly::variable(1, 0))];
    let closed = |r: u32| {
        let r = r as f64;
        let s0 = 2.0 * r + 1.0;
        let s2 = r * (r + 1.0) * (2.0 * r + 1.0) / 3.0;
        w * w * s0 * s2
    };
    let scan = det_doubling_scan(&basis, &radii, 1, 1, RANK_TOL).unwrap();
    let rel = radii
        .iter()
        .zip(&scan.det)
        .map(|(&r, &det)| ((det - closed(r)) / closed(r)).abs())
        .fold(0.0, f64::max);
    let delta = 6f64.powi(2 * (1 + 2)) + 1.0;
    let under = scan.ratios.iter().all(|q| q.ln() <= 1.0 * delta.ln());
    let pass = rel < DET_REL_TOL && scan.hadamard_ok.iter().all(|&h| h) && under && scan.hits.len() == radii.len();
    Line {
        id: 8,
        name: "determinant doubling",
        pass,
        detail: format!(
            "max rel err {rel:.1e}, ratios {:?} vs Delta^d_v={:.0}",
            scan.ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>(),
            delta
        ),
    }
}

fn c09() -> Line {
    let mut ok = true;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for d in [1usize, 2] {
        let g = z(d);
        let mu = uniform_on_generators(&g);
        for k in 1..=3 {
            let hb = harmonic_basis(&g, &mu, k, Backend::PolyAnsatz { eval_radius: 12 }, RANK_TOL).unwrap();
            ok &= hb.dimension == expected_dim(d, k);
            for f in &hb.functions {
                let t = polynomial_degree_test(&g, f, k, 2, 12).unwrap();
                ok &= t.is_degree_at_most_k;
                worst = worst.max(t.max_violation);
                checked += 1;
            }
        }
    }
    let g = z(2);
    let mu = uniform_on_generators(&g);
    let hb = harmonic_basis(&g, &mu, 2, Backend::PolyAnsatz { eval_radius: 11 }, RANK_TOL).unwrap();
    let q = gram_matrix(&hb.functions, 10, RANK_TOL).unwrap();
    let rep = weight_decomposition(&g, &hb.functions, &action_generators(&g), &q).unwrap();
    let eig_ok = rep
        .actions
        .iter()
        .flat_map(|a| &a.eigenvalues)
        .all(|c| (c.re - 1.0).hypot(c.im) <= UNIPOTENT_TOL);
    ok &= rep.unipotent && eig_ok && rep.chain_dims.last() == Some(&5);
    Line {
        id: 9,
        name: "polynomial structure",
        pass: ok,
        detail: format!(
            "{checked} basis elements, worst violation {worst:.1e}; unipotent={} chain={:?}",
            rep.unipotent, rep.chain_dims
        ),
    }
}

fn c10() -> Line {
    let g = Group::lamplighter();
    let growth = doubling_constant(&g, 12).unwrap();
    let increasing = growth.doubling_ratios.windows(2).all(|w| w[1] > w[0]);
    let mu = uniform_on_generators(&g);
    let est = estimate_hfk_dim(&g, &mu, 1, &[5, 7, 9], RANK_TOL).unwrap();
    let inconclusive =
        est.status == DimensionStatus::Inconclusive && est.dimension.is_none() && est.certified().is_err();
    Line {
        id: 10,
        name: "lamplighter negative control",
        pass: !growth.uniform_doubling && increasing && inconclusive,
        detail: format!(
            "ratios {:?}, ranks {:?}, status {:?}",
            growth.doubling_ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>(),
            est.per_radius.iter().map(|p| p.rank).collect::<Vec<_>>(),
            est.status
        ),
    }
}

/// The experiments behind criteria 1 to 10, as CLI configs.
fn suite_configs() -> Vec<ExperimentConfig> {
    let mut v = Vec::new();
    let mut cfg = |task: Task, group: &str, f: &dyn Fn(&mut ExperimentConfig)| {
        let mut c = ExperimentConfig::new(task, group);
        f(&mut c);
        v.push(c);
    };
    for (group, measure) in [("Z^d:d=1", "uniform"), ("Z^d:d=2", "uniform"), ("Z^d:d=2", "simple")] {
        for k in 1..=3 {
            cfg(Task::Dim, group, &|c| {
                c.measure = measure.into();
                c.k = k;
                c.radii = SCHEDULE.to_vec();
                c.eps = Some(KLEINER_EPS);
            });
        }
    }
    cfg(Task::Dim, "Z^d:d=2", &|c| {
        c.measure = format!("geometric:c={GEOMETRIC_DECAY},tol={GEOMETRIC_MASS_TOL}");
        c.k = 2;
        c.radii = SCHEDULE.to_vec();
    });
    cfg(Task::Dim, "Z^d:d=2", &|c| {
        c.power = 2;
        c.k = 2;
        c.radii = SCHEDULE.to_vec();
    });
    for mode in ["exact", "monte-carlo"] {
        cfg(Task::Hitting, "Z^d:d=1", &|c| {
            c.measure = "simple".into();
            c.subgroup = Some("sublattice:basis=[[2]]".into());
            c.hitting_mode = mode.into();
            c.samples = MC_SAMPLES;
            c.seed = Some(MC_SEED);
        });
    }
    for group in ["Z^d:d=1", "Z^d:d=2"] {
        cfg(Task::Poincare, group, &|c| {
            c.power = 2;
            c.radii = vec![4, 8, 16];
            c.seed = Some(POINCARE_SEED);
            c.functions = POINCARE_FUNCTIONS;
        });
    }
    for (group, k) in [("Z^d:d=1", 1), ("Z^d:d=2", 2)] {
        for measure in ["uniform".to_string(), format!("geometric:c={GEOMETRIC_DECAY},tol={GEOMETRIC_MASS_TOL}")] {
            cfg(Task::ReversePoincare, group, &|c| {
                c.measure = measure.clone();
                c.k = k;
                c.radii = (4..=16).collect();
            });
        }
    }
    for eps in [0.25, 1.0 / 3.0] {
        cfg(Task::Cover, "Z^d:d=2", &|c| {
            c.radii = vec![12, 24];
            c.eps = Some(eps);
        });
    }
    cfg(Task::Polytest, "Z^d:d=2", &|c| {
        c.k = 3;
        c.radii = vec![12];
    });
    cfg(Task::Weights, "Z^d:d=2", &|c| {
        c.k = 2;
        c.radii = vec![10];
    });
    cfg(Task::Growth, "lamplighter", &|c| c.radii = vec![12]);
    cfg(Task::Dim, "lamplighter", &|c| c.radii = vec![5, 7, 9]);
    v
}

fn run_suite(threads: usize) -> Vec<String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        suite_configs()
            .iter()
            .map(|c| run_experiment(c).and_then(|o| o.report.to_json()).unwrap_or_else(|e| format!("error: {e}")))
            .collect()
    })
}

fn c11() -> Line {
    let runs: Vec<Vec<String>> = [1, 2, 8].into_iter().map(run_suite).collect();
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    let errors = runs[0].iter().filter(|r| r.starts_with("error")).count();

    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = runs[0]
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.starts_with("error"))
        .map(|(i, r)| {
            let p = dir.path().join(format!("report_{i:02}.json"));
            std::fs::write(&p, r).unwrap();
            p
        })
        .collect();
    let summary = emit_summary(&paths).unwrap();
    let golden_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/acceptance_summary.csv");
    if std::env::var_os("HLAB_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden_path.parent().unwrap()).unwrap();
        std::fs::write(&golden_path, &summary).unwrap();
    }
    let golden = std::fs::read_to_string(&golden_path).unwrap_or_default();
    let golden_ok = golden == summary;
    Line {
        id: 11,
        name: "determinism",
        pass: identical && errors == 0 && golden_ok,
        detail: format!(
            "{} reports byte-identical across 1/2/8 threads: {identical}; errors {errors}; golden summary match: {golden_ok}",
            runs[0].len()
        ),
    }
}

fn main() {
    // Ignore libtest flags such as --nocapture; honour a name filter.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(u32, fn() -> Line); 11] =
        [(1, c01), (2, c02), (3, c03), (4, c04), (5, c05), (6, c06), (7, c07), (8, c08), (9, c09), (10, c10), (11, c11)];
    let mut failed = Vec::new();
    for (id, run) in criteria {
        if let Some(f) = &filter {
            if !format!("c{id:02}").contains(f.as_str()) {
                continue;
            }
        }
        let t = Instant::now();
        let line = run();
        println!(
            "criterion {:>2} {} [{}] ({:.1}s) {}",
            line.id,
            if line.pass { "PASS" } else { "FAIL" },
            line.name,
            t.elapsed().as_secs_f64(),
            line.detail
        );
        if !line.pass {
            failed.push(line.id);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
