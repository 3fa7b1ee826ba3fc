//! Separated covers and numerical checks of the Poincaré and reverse
//! Poincaré inequalities, including exponential tail error terms.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::group::{Ball, Group, GroupElement};
use crate::harmonic::{self, BallFunction, GradientMode};
use crate::measure::{check_courteous, StepMeasure};

/// Harmonicity tolerance for the reverse inequality, relative to `max(1, sup|f|)`.
pub const HARMONIC_TOL: f64 = 1e-9;
/// Combinatorial factor multiplying the tail terms in the reverse inequality.
pub const TAIL_FACTOR: f64 = 12.0;

/// Cutoff `phi(x)`: 1 on `B(R)`, `(2R - |x|)/R` on `R < |x| <= 2R`, 0 beyond.
pub fn cutoff(len: u32, r: u32) -> f64 {
    if len <= r {
        1.0
    } else if len <= 2 * r {
        (2 * r - len) as f64 / r as f64
    } else {
        0.0
    }
}

/// Smallest `n >= 0` with `2^n >= 2/eps`, i.e. `ceil(log(2/eps)/log 2)`.
pub fn cover_exponent(eps: f64) -> Result<u32> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(LabError::usage(format!("eps must be positive, got {eps}")));
    }
    let mut n = 0u32;
    while (2f64).powi(n as i32) * eps < 2.0 {
        n += 1;
    }
    Ok(n)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoverStructure {
    pub radius: u32,
    pub eps: f64,
    /// `floor(eps R)`: the cover balls are `B(x_j, eps_r)`.
    pub eps_r: u32,
    pub centers: Vec<GroupElement>,
    pub j: usize,
    /// Largest number of balls `B(x_j, 3 eps R)` sharing a point.
    pub beta: usize,
    pub covering_verified: bool,
    /// Centers pairwise more than `eps R` apart.
    pub separation_verified: bool,
    /// Removing any center uncovers a point.
    pub maximality_verified: bool,
}

/// Greedy maximal `eps R`-separated set in `B(R)`, scanned in ball order.
pub fn separated_cover(group: &Group, r: u32, eps: f64) -> Result<CoverStructure> {
    if !(eps > 0.0) || (r as f64) <= 2.0 / eps {
        return Err(LabError::usage(format!("need eps > 0 and R > 2/eps (R={r}, eps={eps})")));
    }
    let eps_r = (eps * r as f64).floor() as u32;
    let beta_r = (3.0 * eps * r as f64).floor() as u32;
    let ball = group.ball(r)?;
    // Distances d(x, y) = |x^{-1} y| read off a ball large enough for every pair used.
    let reach = 2 * r + beta_r;
    let metric = group.ball(reach)?;
    let dist = |x: &GroupElement, y: &GroupElement| -> u32 {
        let g = group.multiply(&group.invert(x), y);
        metric.index_of(&g).map_or(u32::MAX, |i| metric.distances[i])
    };

    let mut centers: Vec<GroupElement> = Vec::new();
    for p in &ball.points {
        if centers.iter().all(|c| dist(c, p) > eps_r) {
            centers.push(p.clone());
        }
    }
    let j = centers.len();

    // Per point: the centers within eps R.
    let owners: Vec<Vec<usize>> = ball
        .points
        .par_iter()
        .map(|p| (0..j).filter(|&c| dist(&centers[c], p) <= eps_r).collect())
        .collect();
    let covering_verified = owners.iter().all(|o| !o.is_empty());
    let separation_verified = (0..j).all(|a| (a + 1..j).all(|b| dist(&centers[a], &centers[b]) > eps_r));
    // Center c is removable only if every point it covers has another owner;
    // its own point has no other owner by separation.
    let maximality_verified = (0..j).all(|c| {
        owners.iter().any(|o| o.len() == 1 && o[0] == c)
    });

    let region = group.ball(r + beta_r)?;
    let beta = region
        .points
        .par_iter()
        .map(|x| centers.iter().filter(|c| dist(c, x) <= beta_r).count())
        .max()
        .unwrap_or(0);

    Ok(CoverStructure {
        radius: r,
        eps,
        eps_r,
        centers,
        j,
        beta,
        covering_verified,
        separation_verified,
        maximality_verified,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CoverBounds {
    pub doubling: f64,
    pub exponent: u32,
    /// `floor(D^n)`, `n = ceil(log(2/eps)/log 2)`.
    pub j_bound: u64,
    /// `floor(D^3)`.
    pub beta_bound: u64,
    pub j_ok: bool,
    pub beta_ok: bool,
}

pub fn cover_bounds(cover: &CoverStructure, doubling: f64) -> Result<CoverBounds> {
    let exponent = cover_exponent(cover.eps)?;
    let j_bound = doubling.powi(exponent as i32).floor() as u64;
    let beta_bound = doubling.powi(3).floor() as u64;
    Ok(CoverBounds {
        doubling,
        exponent,
        j_bound,
        beta_bound,
        j_ok: cover.j as u64 <= j_bound,
        beta_ok: cover.beta as u64 <= beta_bound,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InequalityReport {
    pub inequality: String,
    pub radius: u32,
    pub lhs: f64,
    pub rhs_main: f64,
    pub rhs_error: f64,
    /// `lhs / (rhs_main + rhs_error)`; `f64::MAX` if the right side vanishes and the left does not.
    pub ratio: f64,
    pub pass: bool,
    pub constants: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

fn finish(
    inequality: &str,
    radius: u32,
    lhs: f64,
    rhs_main: f64,
    rhs_error: f64,
    constants: BTreeMap<String, f64>,
    notes: Vec<String>,
) -> InequalityReport {
    let rhs = rhs_main + rhs_error;
    let ratio = if lhs == 0.0 {
        0.0
    } else if rhs > 0.0 {
        lhs / rhs
    } else {
        f64::MAX
    };
    InequalityReport {
        inequality: inequality.into(),
        radius,
        lhs,
        rhs_main,
        rhs_error,
        ratio,
        pass: ratio <= 1.0,
        constants,
        notes,
    }
}

#[derive(Clone, Copy, Debug)]
pub enum PoincareVariant<'a> {
    /// `(2R)^2 |2B|/|B| int_{3B} |grad f|_inf^2`.
    Inf,
    /// `c^{-1} 32 R^2 (|2B|/|B|)^2 int_{3B} |grad f|_mu^2`, `c` the density
    /// floor of `mu` on `S^2` (measured when `None`).
    Courteous { mu: &'a StepMeasure, c: Option<f64> },
}

/// `int_B |f - f_B|^2` against the chosen right-hand side, `B = B(R)`.
pub fn poincare_check(
    group: &Group,
    f: &BallFunction,
    r: u32,
    variant: PoincareVariant<'_>,
) -> Result<InequalityReport> {
    if f.domain.center != group.identity() {
        return Err(LabError::usage("Poincaré checks use balls centered at the identity"));
    }
    let d = &f.domain;
    let w = d.point_weight;
    let nb = d.count_within(r);
    let mean = f.values[..nb].iter().sum::<f64>() / nb as f64;
    let lhs = f.values[..nb].iter().map(|v| (v - mean).powi(2)).sum::<f64>() * w;
    // |2B| / |B| from counts; B(2R) may lie outside the domain.
    let vol_ratio = if 2 * r <= d.radius {
        d.count_within(2 * r) as f64 / nb as f64
    } else {
        group.ball(2 * r)?.len() as f64 / nb as f64
    };
    let rf = r as f64;
    let mut constants = BTreeMap::new();
    constants.insert("volume_ratio".to_string(), vol_ratio);
    let (name, mode, factor) = match variant {
        PoincareVariant::Inf => ("poincare_inf", GradientMode::Inf, (2.0 * rf).powi(2) * vol_ratio),
        PoincareVariant::Courteous { mu, c } => {
            let c = match c {
                Some(c) => c,
                None => check_courteous(group, mu)
                    .density_floors
                    .iter()
                    .find(|fl| fl.n == 2)
                    .map(|fl| fl.c)
                    .unwrap_or(0.0),
            };
            if !(c > 0.0) {
                return Err(LabError::usage(
                    "measure has no positive density floor on S^2; \
                     use a convolution power (e.g. mu^*2) for the courteous variant",
                ));
            }
            constants.insert("c".to_string(), c);
            ("poincare_courteous", GradientMode::Mu(mu), 32.0 * rf * rf * vol_ratio.powi(2) / c)
        }
    };
    let grad = harmonic::gradient(group, f, mode, 3 * r)?;
    let energy = grad.values.iter().map(|v| v * v).sum::<f64>() * w;
    constants.insert("factor".to_string(), factor);
    Ok(finish(name, r, lhs, factor * energy, 0.0, constants, Vec::new()))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct TailTerms {
    /// `int_{G \ B(3R)} int_{B(2R)} |f(y)||f(x) - f(y)| dmu(x^{-1}y) dm(x)`.
    pub term1: f64,
    /// `int_{B(2R)} int_{G \ B(3R)} f(y)^2 dmu(x^{-1}y) dm(x)`.
    pub term2: f64,
    /// The measure's truncation radius is below `R`, so part of the outer
    /// region is out of reach.
    pub truncated: bool,
}

/// Both tail integrals by direct summation over the retained support.
pub fn tail_error_terms(group: &Group, f: &BallFunction, r: u32, mu: &StepMeasure) -> Result<TailTerms> {
    let reach = mu.support_radius();
    let need = 2 * r + reach;
    if f.radius() < need {
        return Err(LabError::DomainTooSmall { needed: need as i64, available: f.radius() });
    }
    let d = &f.domain;
    let n2 = d.count_within(2 * r);
    // With mu symmetric and m unimodular, x = y s ranges over the same pairs
    // as y = x s, so both integrals run over the inner point and a step.
    let (t1, t2) = d.points[..n2]
        .par_iter()
        .enumerate()
        .map(|(i, y)| {
            let fy = f.values[i];
            let mut a = 0.0;
            let mut b = 0.0;
            for s in &mu.support {
                if s.length <= r {
                    continue;
                }
                let j = d.index_of(&group.multiply(y, &s.element)).expect("inside");
                if d.distances[j] > 3 * r {
                    let fx = f.values[j];
                    a += s.mass * fy.abs() * (fx - fy).abs();
                    b += s.mass * fx * fx;
                }
            }
            (a, b)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
    let w = d.point_weight;
    Ok(TailTerms { term1: t1 * w, term2: t2 * w, truncated: reach < r && mu.discarded_mass() > 0.0 })
}

/// Reverse Poincaré check for a harmonic `f` on `B(R)`.
///
/// `c_f` defaults to the ball-restricted polynomial `k`-norm of `f`.
pub fn reverse_poincare_check(
    group: &Group,
    f: &BallFunction,
    r: u32,
    mu: &StepMeasure,
    k: u32,
    c_f: Option<f64>,
) -> Result<InequalityReport> {
    if f.domain.center != group.identity() {
        return Err(LabError::usage("reverse Poincaré checks use balls centered at the identity"));
    }
    let reach = mu.support_radius();
    let need = 3 * r + reach;
    if f.radius() < need {
        return Err(LabError::DomainTooSmall { needed: need as i64, available: f.radius() });
    }
    let law = mu.conditioned();
    let res = harmonic::harmonicity_residual(group, f, &law, 3 * r)?;
    let scale = f.restrict(need)?.sup_norm().max(1.0);
    if res.sup > HARMONIC_TOL * scale {
        return Err(LabError::Precondition(format!(
            "f is not harmonic on B({}): sup residual {:e} (tolerance {:e})",
            3 * r,
            res.sup,
            HARMONIC_TOL * scale
        )));
    }
    let c_f = match c_f {
        Some(c) => c,
        None => harmonic::polynomial_k_norm(group, f, k)?,
    };

    let d = &f.domain;
    let w = d.point_weight;
    let n1 = d.count_within(r);
    let lhs = d.points[..n1]
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            mu.support
                .iter()
                .map(|s| {
                    let j = d.index_of(&group.multiply(x, &s.element)).expect("inside");
                    s.mass * (f.values[i] - f.values[j]).powi(2)
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        * w;
    let sigma2 = mu.second_moment();
    let mass3 = f.seminorm(3 * r)?.powi(2);
    let rf = r as f64;
    let rhs_main = 8.0 * sigma2 / (rf * rf) * mass3;
    let tails = tail_error_terms(group, f, r, mu)?;
    let direct = TAIL_FACTOR * tails.term1.max(tails.term2);
    // Mass beyond the truncation radius is not summed; charge it at the
    // largest growth the ball-restricted norm allows.
    let discarded = mu.discarded_mass();
    let ball3 = d.count_within(3 * r) as f64 * w;
    let slack = if discarded > 0.0 {
        4.0 * c_f * c_f * discarded * ball3 * (1.0 + (3 * r + reach) as f64).powi(2 * k as i32)
    } else {
        0.0
    };
    let mut constants = BTreeMap::new();
    constants.insert("sigma2".to_string(), sigma2);
    constants.insert("c_f".to_string(), c_f);
    constants.insert("term1".to_string(), tails.term1);
    constants.insert("term2".to_string(), tails.term2);
    constants.insert("tail_factor".to_string(), TAIL_FACTOR);
    constants.insert("truncation_slack".to_string(), slack);
    constants.insert("harmonic_residual".to_string(), res.sup);
    if let Some(c_mu) = check_courteous(group, mu).certified_tail_rate {
        constants.insert("c_mu".to_string(), c_mu);
    }
    let mut notes = vec![
        "rhs_main uses 8 sigma^2 / R^2 and rhs_error uses 12 max(term1, term2): \
         computed stand-ins for the non-explicit constants"
            .to_string(),
    ];
    if tails.truncated {
        notes.push("truncation radius below R: outer region only partly summed".into());
    }
    Ok(finish("reverse_poincare", r, lhs, rhs_main, direct + slack, constants, notes))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DecayFit {
    /// `-slope` of `ln(error)` against `R`.
    pub rate: f64,
    pub points: usize,
}

/// Log-linear fit of `12 max(term1, term2)` over a sweep; `None` when fewer
/// than two radii have a nonzero error (compactly supported measures).
pub fn fit_error_decay(reports: &[InequalityReport]) -> Option<DecayFit> {
    let pts: Vec<(f64, f64)> = reports
        .iter()
        .filter_map(|r| {
            let t = r.constants.get("term1")?.max(*r.constants.get("term2")?);
            (t > 0.0).then(|| (r.radius as f64, (TAIL_FACTOR * t).ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(DecayFit { rate: -sxy / sxx, points: pts.len() })
}

/// Sweep table as CSV: `R,lhs,rhs_main,rhs_error,ratio`.
pub fn write_sweep_csv<W: Write>(out: &mut W, reports: &[InequalityReport]) -> Result<()> {
    writeln!(out, "R,lhs,rhs_main,rhs_error,ratio")?;
    for r in reports {
        writeln!(out, "{},{:e},{:e},{:e},{:e}", r.radius, r.lhs, r.rhs_main, r.rhs_error, r.ratio)?;
    }
    Ok(())
}

/// Ball-order index of `g` in `ball`, for callers assembling functions by hand.
pub fn ball_position(ball: &Ball, g: &GroupElement) -> Option<usize> {
    ball.index_of(g)
}
