//! Functions on balls, the Markov operator, gradients, Gram forms and
//! numerical bases of polynomial-growth harmonic functions.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::group::{Ball, BallRef, Group, GroupElement, GroupKind};
use crate::linalg;
use crate::measure::StepMeasure;
use crate::poly::{self, MultiPoly};

/// Default relative rank tolerance.
pub const RANK_TOL: f64 = 1e-8;

/// A real function on a ball, aligned with the ball's point order.
#[derive(Clone, Debug)]
pub struct BallFunction {
    pub domain: BallRef,
    pub values: Vec<f64>,
}

impl BallFunction {
    pub fn new(domain: BallRef, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(LabError::usage(format!(
                "{} values for a ball of {} points",
                values.len(),
                domain.len()
            )));
        }
        Ok(BallFunction { domain, values })
    }

    pub fn from_fn<F>(domain: BallRef, f: F) -> Self
    where
        F: Fn(&GroupElement) -> f64 + Sync + Send,
    {
        let values = domain.points.par_iter().map(f).collect();
        BallFunction { domain, values }
    }

    pub fn constant(domain: BallRef, c: f64) -> Self {
        let values = vec![c; domain.len()];
        BallFunction { domain, values }
    }

    /// Evaluate a polynomial in the canonical coordinates.
    pub fn from_poly(domain: BallRef, p: &MultiPoly) -> Self {
        Self::from_fn(domain, |g| p.eval(&poly::coords_f64(g)))
    }

    pub fn radius(&self) -> u32 {
        self.domain.radius
    }

    pub fn get(&self, g: &GroupElement) -> Option<f64> {
        self.domain.index_of(g).map(|i| self.values[i])
    }

    /// Restriction to the concentric ball of radius `r`.
    pub fn restrict(&self, r: u32) -> Result<BallFunction> {
        if r > self.radius() {
            return Err(LabError::DomainTooSmall { needed: r as i64, available: self.radius() });
        }
        if r == self.radius() {
            return Ok(self.clone());
        }
        let sub = Arc::new(self.domain.sub_ball(r));
        let values = self.values[..sub.len()].to_vec();
        Ok(BallFunction { domain: sub, values })
    }

    /// `a * self + b * other` on a shared domain.
    pub fn combine(&self, a: f64, other: &BallFunction, b: f64) -> Result<BallFunction> {
        same_domain(self, other)?;
        let n = self.values.len().min(other.values.len());
        let values = (0..n).map(|i| a * self.values[i] + b * other.values[i]).collect();
        let domain = if self.values.len() <= other.values.len() {
            self.domain.clone()
        } else {
            other.domain.clone()
        };
        Ok(BallFunction { domain, values })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(int_{B(r)} f^2 dm)^{1/2}` over the concentric sub-ball.
    pub fn seminorm(&self, r: u32) -> Result<f64> {
        if r > self.radius() {
            return Err(LabError::DomainTooSmall { needed: r as i64, available: self.radius() });
        }
        let n = self.domain.count_within(r);
        let s: f64 = self.values[..n].iter().map(|v| v * v).sum();
        Ok((s * self.domain.point_weight).sqrt())
    }
}

fn same_domain(a: &BallFunction, b: &BallFunction) -> Result<()> {
    if a.domain.center != b.domain.center {
        return Err(LabError::usage("functions live on balls with different centers"));
    }
    Ok(())
}

fn shrunken(f: &BallFunction, reach: u32) -> Result<BallRef> {
    if reach > f.radius() {
        return Err(LabError::DomainTooSmall { needed: reach as i64, available: f.radius() });
    }
    let r = f.radius() - reach;
    Ok(if r == f.radius() { f.domain.clone() } else { Arc::new(f.domain.sub_ball(r)) })
}

fn lookup(f: &BallFunction, g: &GroupElement) -> f64 {
    let i = f.domain.index_of(g).expect("point inside domain by radius bookkeeping");
    f.values[i]
}

/// `(Pf)(x) = sum_s f(xs) mu(s)` on `B(R - R_t)`.
pub fn markov_operator(group: &Group, f: &BallFunction, mu: &StepMeasure) -> Result<BallFunction> {
    let domain = shrunken(f, mu.support_radius())?;
    let values = markov_values(group, f, mu, &domain.points);
    Ok(BallFunction { domain, values })
}

fn markov_values(group: &Group, f: &BallFunction, mu: &StepMeasure, points: &[GroupElement]) -> Vec<f64> {
    points
        .par_iter()
        .map(|x| {
            mu.support
                .iter()
                .map(|s| s.mass * lookup(f, &group.multiply(x, &s.element)))
                .sum()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Residual {
    pub sup: f64,
    /// `(int_{B(inner)} |f - Pf|^2 dm)^{1/2}`.
    pub l2: f64,
}

pub fn harmonicity_residual(
    group: &Group,
    f: &BallFunction,
    mu: &StepMeasure,
    inner_r: u32,
) -> Result<Residual> {
    let reach = mu.support_radius();
    if inner_r as u64 + reach as u64 > f.radius() as u64 {
        return Err(LabError::DomainTooSmall {
            needed: inner_r as i64 + reach as i64,
            available: f.radius(),
        });
    }
    let n = f.domain.count_within(inner_r);
    let pf = markov_values(group, f, mu, &f.domain.points[..n]);
    let mut sup: f64 = 0.0;
    let mut sq = 0.0;
    for i in 0..n {
        let d = f.values[i] - pf[i];
        sup = sup.max(d.abs());
        sq += d * d;
    }
    Ok(Residual { sup, l2: (sq * f.domain.point_weight).sqrt() })
}

/// Which gradient to take.
#[derive(Clone, Copy, Debug)]
pub enum GradientMode<'a> {
    /// `sup_{s in S} |f(xs) - f(x)|`.
    Inf,
    /// `(int |f(xs) - f(x)|^2 dmu(s))^{1/2}`.
    Mu(&'a StepMeasure),
    /// `(1/|B|) int_B |f(xs) - f(x)| dm(s)` for `B = B(n)` around the identity.
    Ball(u32),
}

impl GradientMode<'_> {
    pub fn reach(&self) -> u32 {
        match self {
            GradientMode::Inf => 1,
            GradientMode::Mu(mu) => mu.support_radius(),
            GradientMode::Ball(n) => *n,
        }
    }
}

/// Pointwise gradient field on `B(inner_r)`.
pub fn gradient(
    group: &Group,
    f: &BallFunction,
    mode: GradientMode<'_>,
    inner_r: u32,
) -> Result<BallFunction> {
    let reach = mode.reach();
    if inner_r as u64 + reach as u64 > f.radius() as u64 {
        return Err(LabError::DomainTooSmall {
            needed: inner_r as i64 + reach as i64,
            available: f.radius(),
        });
    }
    let domain: BallRef = if inner_r == f.radius() {
        f.domain.clone()
    } else {
        Arc::new(f.domain.sub_ball(inner_r))
    };
    let ball_pts: Vec<GroupElement> = match mode {
        GradientMode::Ball(n) => group.ball(n)?.points,
        _ => Vec::new(),
    };
    let values = domain
        .points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let fx = f.values[i];
            match mode {
                GradientMode::Inf => group
                    .generators
                    .iter()
                    .map(|s| (lookup(f, &group.multiply(x, s)) - fx).abs())
                    .fold(0.0, f64::max),
                GradientMode::Mu(mu) => mu
                    .support
                    .iter()
                    .map(|s| s.mass * (lookup(f, &group.multiply(x, &s.element)) - fx).powi(2))
                    .sum::<f64>()
                    .sqrt(),
                GradientMode::Ball(_) => {
                    let total: f64 = ball_pts
                        .iter()
                        .map(|s| (lookup(f, &group.multiply(x, s)) - fx).abs())
                        .sum();
                    total / ball_pts.len() as f64
                }
            }
        })
        .collect();
    Ok(BallFunction { domain, values })
}

/// `(int_K |f|^2 dm)^{1/2}`; `K` must lie inside the domain of `f`.
pub fn seminorm_ball(f: &BallFunction, k: &Ball) -> Result<f64> {
    let mut s = 0.0;
    for p in &k.points {
        let v = f.get(p).ok_or_else(|| {
            LabError::usage(format!("point {p} of K lies outside the domain of f"))
        })?;
        s += v * v;
    }
    Ok((s * k.point_weight).sqrt())
}

/// `max_x |f(x)| / (1 + |x|)^k` over the domain, `|x|` the word length.
pub fn polynomial_k_norm(group: &Group, f: &BallFunction, k: u32) -> Result<f64> {
    let centered = f.domain.center == group.identity();
    let mut best: f64 = 0.0;
    for (i, p) in f.domain.points.iter().enumerate() {
        let len = if centered { f.domain.distances[i] } else { group.word_length(p)? };
        best = best.max(f.values[i].abs() / (1.0 + len as f64).powi(k as i32));
    }
    Ok(best)
}

/// `Q_R(u, v) = int_{B(R)} u v dm` on a finite family.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GramForm {
    pub radius: u32,
    pub basis_size: usize,
    pub matrix: Vec<Vec<f64>>,
    pub det: f64,
    pub singular_values: Vec<f64>,
    pub numerical_rank: usize,
    pub rank_tol: f64,
}

impl GramForm {
    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let m = self.basis_size;
        DMatrix::from_fn(m, m, |i, j| self.matrix[i][j])
    }
}

pub fn gram_matrix(functions: &[BallFunction], r: u32, rank_tol: f64) -> Result<GramForm> {
    let first = functions.first().ok_or_else(|| LabError::usage("empty function list"))?;
    for f in functions {
        same_domain(first, f)?;
        if f.radius() < r {
            return Err(LabError::DomainTooSmall { needed: r as i64, available: f.radius() });
        }
    }
    let n = first.domain.count_within(r);
    let w = first.domain.point_weight;
    let m = functions.len();
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let entries: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&functions[i].values, &functions[j].values);
            (0..n).map(|p| a[p] * b[p]).sum::<f64>() * w
        })
        .collect();
    let mut matrix = vec![vec![0.0; m]; m];
    for (&(i, j), v) in pairs.iter().zip(entries) {
        matrix[i][j] = v;
        matrix[j][i] = v;
    }
    let dm = DMatrix::from_fn(m, m, |i, j| matrix[i][j]);
    let singular_values = linalg::singular_values(&dm);
    let numerical_rank = linalg::numerical_rank(&singular_values, rank_tol);
    Ok(GramForm {
        radius: r,
        basis_size: m,
        det: linalg::determinant(&dm),
        matrix,
        singular_values,
        numerical_rank,
        rank_tol,
    })
}

/// How to compute a basis of harmonic functions of growth `<= k`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum Backend {
    /// Exact polynomial ansatz; functions are evaluated on `B(eval_radius)`.
    PolyAnsatz { eval_radius: u32 },
    /// Weighted least squares over a feature dictionary on `B(r_eval)`,
    /// residuals measured on `B(r_fit)`.
    Variational { r_fit: u32, r_eval: u32 },
}

#[derive(Clone, Debug, Serialize)]
pub struct HarmonicBasis {
    pub backend: Backend,
    pub k: u32,
    pub measure: String,
    pub dimension: usize,
    /// Ansatz only: the canonical (echelon) polynomial basis.
    pub polynomials: Option<Vec<MultiPoly>>,
    /// Ansatz: singular values of `P - I` on the monomial space.
    /// Variational: normalized residual spectrum.
    pub spectrum: Vec<f64>,
    /// Sup residual of each basis function, where measurable.
    pub residuals: Vec<f64>,
    /// Trial functions used (variational) or monomials (ansatz).
    pub trial_size: usize,
    #[serde(skip)]
    pub functions: Vec<BallFunction>,
}

/// Basis of `{f : |f| = O(|x|^k), f = Pf}` under the renormalized retained law
/// of `mu` (the measure conditioned on its truncation radius).
pub fn harmonic_basis(
    group: &Group,
    mu: &StepMeasure,
    k: u32,
    backend: Backend,
    rank_tol: f64,
) -> Result<HarmonicBasis> {
    let law = mu.conditioned();
    match backend {
        Backend::PolyAnsatz { eval_radius } => poly_ansatz(group, &law, k, eval_radius, rank_tol),
        Backend::Variational { r_fit, r_eval } => {
            variational(group, &law, k, r_fit, r_eval, rank_tol)
        }
    }
}

/// `P p` for a polynomial `p` in canonical coordinates.
pub fn apply_markov_poly(group: &Group, mu: &StepMeasure, p: &MultiPoly) -> Result<MultiPoly> {
    let mut out = MultiPoly::zero(p.nvars);
    for s in &mu.support {
        let subs = poly::right_translation(group, &s.element).ok_or_else(|| {
            LabError::usage(format!("{} has no polynomial coordinates", group.name))
        })?;
        out.add_scaled(&p.compose(&subs), s.mass);
    }
    Ok(out)
}

fn poly_ansatz(
    group: &Group,
    law: &StepMeasure,
    k: u32,
    eval_radius: u32,
    rank_tol: f64,
) -> Result<HarmonicBasis> {
    let weights = poly::coordinate_weights(group).ok_or_else(|| {
        LabError::usage(format!(
            "poly_ansatz needs polynomial coordinates; {} has none (use variational)",
            group.name
        ))
    })?;
    let monos = poly::monomial_exponents(&weights, k);
    let m = monos.len();
    let row_of: std::collections::HashMap<&Vec<u32>, usize> =
        monos.iter().enumerate().map(|(i, e)| (e, i)).collect();
    let mut system = DMatrix::<f64>::zeros(m, m);
    for (j, e) in monos.iter().enumerate() {
        let p = MultiPoly::monomial(e.clone());
        let mut image = apply_markov_poly(group, law, &p)?;
        image.add_scaled(&p, -1.0);
        for (te, c) in &image.terms {
            let i = *row_of
                .get(te)
                .expect("the Markov operator preserves weighted degree");
            system[(i, j)] = *c;
        }
    }
    let spectrum = linalg::singular_values(&system);
    let top = spectrum.first().copied().unwrap_or(0.0);
    let null = linalg::nullspace(&system, rank_tol, Some(top.max(1.0)));
    let echelon = linalg::column_echelon(&null, 1e-9);
    let mut polys: Vec<MultiPoly> = (0..echelon.ncols())
        .map(|c| {
            let mut p = MultiPoly::zero(weights.len());
            for (i, e) in monos.iter().enumerate() {
                let v = echelon[(i, c)];
                if v != 0.0 {
                    p.terms.insert(e.clone(), v);
                }
            }
            p.cleaned(1e-9)
        })
        .filter(|p| !p.terms.is_empty())
        .collect();
    polys.reverse();

    let domain: BallRef = Arc::new(group.ball(eval_radius)?);
    let functions: Vec<BallFunction> =
        polys.iter().map(|p| BallFunction::from_poly(domain.clone(), p)).collect();
    let reach = law.support_radius();
    let residuals = if eval_radius >= reach {
        functions
            .iter()
            .map(|f| harmonicity_residual(group, f, law, eval_radius - reach).map(|r| r.sup))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(HarmonicBasis {
        backend: Backend::PolyAnsatz { eval_radius },
        k,
        measure: law.label.clone(),
        dimension: polys.len(),
        polynomials: Some(polys),
        spectrum,
        residuals,
        trial_size: m,
        functions,
    })
}

/// Trial dictionary for the variational backend, evaluated on `ball`.
///
/// Polynomial groups use monomials of weighted degree `<= k`. The
/// lamplighter uses `p^a` and `p^a * eta_j` with `a <= k`, where `p` is the
/// lamplighter position and `eta_j` the state of lamp `j` (lamps carry no growth).
pub fn feature_dictionary(group: &Group, ball: &Ball, k: u32) -> Vec<Vec<f64>> {
    match &group.kind {
        GroupKind::Lamplighter => {
            let r = ball.radius as i64;
            let mut out = Vec::new();
            for a in 0..=k as i32 {
                out.push(ball.points.iter().map(|g| (g.coords()[0] as f64).powi(a)).collect());
            }
            for j in -r..=r {
                for a in 0..=k as i32 {
                    out.push(
                        ball.points
                            .iter()
                            .map(|g| {
                                let lit = g.coords()[1..].binary_search(&j).is_ok();
                                if lit { (g.coords()[0] as f64).powi(a) } else { 0.0 }
                            })
                            .collect(),
                    );
                }
            }
            out
        }
        _ => {
            let weights = poly::coordinate_weights(group).expect("polynomial group");
            poly::monomial_exponents(&weights, k)
                .into_iter()
                .map(|e| {
                    let p = MultiPoly::monomial(e);
                    ball.points.iter().map(|g| p.eval(&poly::coords_f64(g))).collect()
                })
                .collect()
        }
    }
}

fn variational(
    group: &Group,
    law: &StepMeasure,
    k: u32,
    r_fit: u32,
    r_eval: u32,
    rank_tol: f64,
) -> Result<HarmonicBasis> {
    let reach = law.support_radius();
    if r_fit as u64 + reach as u64 > r_eval as u64 {
        return Err(LabError::DomainTooSmall {
            needed: r_fit as i64 + reach as i64,
            available: r_eval,
        });
    }
    let ball: BallRef = Arc::new(group.ball(r_eval)?);
    let n = ball.len();
    let n_fit = ball.count_within(r_fit);

    // Sup-normalized, nonzero features.
    let features: Vec<Vec<f64>> = feature_dictionary(group, &ball, k)
        .into_iter()
        .filter_map(|mut col| {
            let s = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if s == 0.0 {
                return None;
            }
            col.iter_mut().for_each(|v| *v /= s);
            Some(col)
        })
        .collect();
    let m = features.len();
    let phi = DMatrix::from_fn(n, m, |i, j| features[j][i]);

    // Growth weights (1 + |x|)^{-k} on values, Haar weight on squares.
    let wv: Vec<f64> = ball
        .distances
        .iter()
        .map(|&d| (1.0 + d as f64).powi(-(k as i32)) * ball.point_weight.sqrt())
        .collect();
    let weighted = DMatrix::from_fn(n, m, |i, j| wv[i] * phi[(i, j)]);
    let gram = weighted.transpose() * &weighted;
    let eig = SymmetricEigen::new(gram);
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > 1e-12 * lmax).collect();
    let t = DMatrix::from_fn(m, keep.len(), |r, c| {
        eig.eigenvectors[(r, keep[c])] / eig.eigenvalues[keep[c]].sqrt()
    });

    // (I - P) Phi on B(r_fit), then push through T.
    let rows: Vec<Vec<f64>> = ball.points[..n_fit]
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut acc = vec![0.0; m];
            for s in &law.support {
                let idx = ball
                    .index_of(&group.multiply(x, &s.element))
                    .expect("step stays inside the evaluation ball");
                for (j, a) in acc.iter_mut().enumerate() {
                    *a += s.mass * phi[(idx, j)];
                }
            }
            (0..m).map(|j| wv[i] * (phi[(i, j)] - acc[j])).collect()
        })
        .collect();
    let resid = DMatrix::from_fn(n_fit, m, |i, j| rows[i][j]) * &t;

    let kdim = keep.len();
    let rows_needed = n_fit.max(kdim);
    let mut padded = DMatrix::<f64>::zeros(rows_needed, kdim);
    padded.view_mut((0, 0), (n_fit, kdim)).copy_from(&resid);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..kdim).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].partial_cmp(&svd.singular_values[b]).unwrap());
    let spectrum: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = spectrum.last().copied().unwrap_or(0.0);
    let threshold = rank_tol * smax.max(1.0);
    let kept: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| svd.singular_values[i] < threshold)
        .collect();

    let psi = &phi * &t;
    let functions: Vec<BallFunction> = kept
        .iter()
        .map(|&i| {
            let v = v_t.row(i).transpose();
            let vals = &psi * v;
            BallFunction { domain: ball.clone(), values: vals.iter().copied().collect() }
        })
        .collect();
    let residuals = functions
        .iter()
        .map(|f| harmonicity_residual(group, f, law, r_fit).map(|r| r.sup))
        .collect::<Result<Vec<_>>>()?;
    Ok(HarmonicBasis {
        backend: Backend::Variational { r_fit, r_eval },
        k,
        measure: law.label.clone(),
        dimension: functions.len(),
        polynomials: None,
        spectrum,
        residuals,
        trial_size: m,
        functions,
    })
}

/// CSV dump: one row per domain point, `c0..c{d-1}` coordinates then one
/// column per function.
pub fn write_functions_csv<W: Write>(out: &mut W, functions: &[BallFunction]) -> Result<()> {
    let first = functions.first().ok_or_else(|| LabError::usage("empty function list"))?;
    let n = functions.iter().map(|f| f.values.len()).min().unwrap_or(0);
    let width = first.domain.points[..n].iter().map(|p| p.coords().len()).max().unwrap_or(0);
    let mut header: Vec<String> = (0..width).map(|i| format!("c{i}")).collect();
    header.extend((0..functions.len()).map(|j| format!("f{j}")));
    writeln!(out, "{}", header.join(","))?;
    for i in 0..n {
        let p = &first.domain.points[i];
        let mut row: Vec<String> = (0..width)
            .map(|c| p.coords().get(c).map_or(String::new(), |v| v.to_string()))
            .collect();
        row.extend(functions.iter().map(|f| format!("{:e}", f.values[i])));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{geometric_tail_measure, uniform_on_generators, uniform_on_nonidentity_generators};

    fn ball(g: &Group, r: u32) -> BallRef {
        Arc::new(g.ball(r).unwrap())
    }

    fn coord(i: usize) -> impl Fn(&GroupElement) -> f64 + Sync + Send {
        move |g| g.coords()[i] as f64
    }

    #[test]
    fn markov_of_square_on_z() {
        let z = Group::lattice(1);
        let mu = uniform_on_nonidentity_generators(&z);
        let f = BallFunction::from_fn(ball(&z, 6), |g| (g.coords()[0] as f64).powi(2));
        let pf = markov_operator(&z, &f, &mu).unwrap();
        assert_eq!(pf.radius(), 5);
        for (p, v) in pf.domain.points.iter().zip(&pf.values) {
            assert_eq!(*v, (p.coords()[0] as f64).powi(2) + 1.0);
        }
        let r = harmonicity_residual(&z, &f, &mu, 5).unwrap();
        assert_eq!(r.sup, 1.0);
    }

    #[test]
    fn constants_and_harmonic_polys_are_fixed() {
        let z2 = Group::lattice(2);
        let mu = uniform_on_generators(&z2);
        let b = ball(&z2, 8);
        let one = BallFunction::constant(b.clone(), 1.0);
        let p1 = markov_operator(&z2, &one, &mu).unwrap();
        assert!(p1.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        let f = BallFunction::from_fn(b, |g| {
            let (x, y) = (g.coords()[0] as f64, g.coords()[1] as f64);
            x * x - y * y
        });
        let r = harmonicity_residual(&z2, &f, &mu, 7).unwrap();
        assert!(r.sup < 1e-12);
    }

    #[test]
    fn heisenberg_coordinate_is_harmonic() {
        let h = Group::heisenberg();
        let mu = uniform_on_generators(&h);
        let f = BallFunction::from_fn(ball(&h, 6), coord(0));
        let r = harmonicity_residual(&h, &f, &mu, 5).unwrap();
        assert!(r.sup < 1e-14 && r.l2 < 1e-13, "{r:?}");
    }

    #[test]
    fn domain_too_small() {
        let z = Group::lattice(1);
        let mu = geometric_tail_measure(&z, 1.0, 1e-8).unwrap();
        let f = BallFunction::constant(ball(&z, 5), 1.0);
        assert!(matches!(
            markov_operator(&z, &f, &mu),
            Err(LabError::DomainTooSmall { .. })
        ));
    }

    #[test]
    fn gradients_of_simple_functions() {
        let z = Group::lattice(1);
        let mu = uniform_on_generators(&z);
        let one = BallFunction::constant(ball(&z, 5), 3.0);
        for mode in [GradientMode::Inf, GradientMode::Mu(&mu), GradientMode::Ball(2)] {
            let g = gradient(&z, &one, mode, 3).unwrap();
            assert!(g.values.iter().all(|&v| v == 0.0));
        }
        let x = BallFunction::from_fn(ball(&z, 5), coord(0));
        let g = gradient(&z, &x, GradientMode::Inf, 4).unwrap();
        assert!(g.values.iter().all(|&v| v == 1.0));
        assert!(gradient(&z, &x, GradientMode::Ball(3), 3).is_err());
    }

    #[test]
    fn seminorm_examples() {
        let z = Group::lattice(1);
        let b = ball(&z, 5);
        let k = z.ball(3).unwrap();
        let one = BallFunction::constant(b.clone(), 1.0);
        assert!((seminorm_ball(&one, &k).unwrap() - (7.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let zero = BallFunction::constant(b.clone(), 0.0);
        assert_eq!(seminorm_ball(&zero, &k).unwrap(), 0.0);
        let x = BallFunction::from_fn(b, coord(0));
        let k2 = z.ball(2).unwrap();
        assert!((seminorm_ball(&x, &k2).unwrap() - (10.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(x.seminorm(2).unwrap(), seminorm_ball(&x, &k2).unwrap());
    }

    #[test]
    fn k_norm_examples() {
        let z = Group::lattice(1);
        let b = ball(&z, 10);
        let one = BallFunction::constant(b.clone(), 1.0);
        assert_eq!(polynomial_k_norm(&z, &one, 1).unwrap(), 1.0);
        let x = BallFunction::from_fn(b.clone(), coord(0));
        assert!((polynomial_k_norm(&z, &x, 1).unwrap() - 10.0 / 11.0).abs() < 1e-15);
        let x2 = BallFunction::from_fn(b, |g| (g.coords()[0] as f64).powi(2));
        assert!((polynomial_k_norm(&z, &x2, 1).unwrap() - 100.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn gram_on_z() {
        let z = Group::lattice(1);
        let r = 6u32;
        let b = ball(&z, r);
        let one = BallFunction::constant(b.clone(), 1.0);
        let x = BallFunction::from_fn(b.clone(), coord(0));
        let q = gram_matrix(&[one.clone(), x.clone()], r, RANK_TOL).unwrap();
        let rf = r as f64;
        assert_eq!(q.matrix[0][1], 0.0);
        assert!((q.matrix[0][0] - (2.0 * rf + 1.0) / 3.0).abs() < 1e-12);
        let xx = (2.0 / 3.0) * rf * (rf + 1.0) * (2.0 * rf + 1.0) / 6.0;
        assert!((q.matrix[1][1] - xx).abs() < 1e-12);
        assert!(q.det > 0.0);
        assert_eq!(q.numerical_rank, 2);
        let dep = one.combine(3.0, &x, 2.0).unwrap();
        assert_eq!(gram_matrix(&[one, x, dep], r, RANK_TOL).unwrap().numerical_rank, 2);
        let zero = BallFunction::constant(b, 0.0);
        assert_eq!(gram_matrix(&[zero], r, RANK_TOL).unwrap().numerical_rank, 0);
        assert!(gram_matrix(&[], r, RANK_TOL).is_err());
    }

    #[test]
    fn ansatz_dimensions() {
        let z = Group::lattice(1);
        let mu = uniform_on_generators(&z);
        let hb = harmonic_basis(&z, &mu, 2, Backend::PolyAnsatz { eval_radius: 4 }, RANK_TOL).unwrap();
        assert_eq!(hb.dimension, 2);
        let names: Vec<String> = hb.polynomials.unwrap().iter().map(|p| p.to_string()).collect();
        assert_eq!(names, vec!["1", "x"]);

        let z2 = Group::lattice(2);
        let mu = uniform_on_generators(&z2);
        let hb = harmonic_basis(&z2, &mu, 1, Backend::PolyAnsatz { eval_radius: 4 }, RANK_TOL).unwrap();
        assert_eq!(hb.dimension, 3);
        let hb = harmonic_basis(&z2, &mu, 2, Backend::PolyAnsatz { eval_radius: 4 }, RANK_TOL).unwrap();
        let names: Vec<String> = hb.polynomials.unwrap().iter().map(|p| p.to_string()).collect();
        assert_eq!(names, vec!["1", "y", "x", "x*y", "x^2 - y^2"]);
        assert!(hb.residuals.iter().all(|&r| r < 1e-12));
    }

    #[test]
    fn ansatz_rejects_lamplighter() {
        let l = Group::lamplighter();
        let mu = uniform_on_generators(&l);
        let r = harmonic_basis(&l, &mu, 1, Backend::PolyAnsatz { eval_radius: 3 }, RANK_TOL);
        assert!(matches!(r, Err(LabError::Usage(_))));
    }

    #[test]
    fn variational_matches_ansatz_on_lattices() {
        for d in 1..=2 {
            let g = Group::lattice(d);
            let mu = uniform_on_generators(&g);
            for k in 0..=2 {
                let a = harmonic_basis(&g, &mu, k, Backend::PolyAnsatz { eval_radius: 2 }, RANK_TOL)
                    .unwrap();
                let v = harmonic_basis(&g, &mu, k, Backend::Variational { r_fit: 8, r_eval: 9 }, RANK_TOL)
                    .unwrap();
                assert_eq!(a.dimension, v.dimension, "d={d} k={k}");
                assert!(v.residuals.iter().all(|&r| r < 1e-9));
            }
        }
    }

    #[test]
    fn geometric_measure_gives_same_dimensions() {
        let z2 = Group::lattice(2);
        let mu = geometric_tail_measure(&z2, 1.0, 1e-8).unwrap();
        for (k, dim) in [(1, 3), (2, 5)] {
            let hb = harmonic_basis(&z2, &mu, k, Backend::PolyAnsatz { eval_radius: 2 }, RANK_TOL)
                .unwrap();
            assert_eq!(hb.dimension, dim);
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let z = Group::lattice(1);
        let f = BallFunction::from_fn(ball(&z, 1), coord(0));
        let mut buf = Vec::new();
        write_functions_csv(&mut buf, &[f]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 4);
        assert!(s.starts_with("c0,f0\n0,0e0\n"));
    }
}
