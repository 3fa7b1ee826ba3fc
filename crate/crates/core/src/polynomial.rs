//! Left derivatives, polynomial-degree tests, polynomial spaces and the
//! generalized weight-space decomposition of the translation action.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::group::{BallRef, Group, GroupElement};
use crate::harmonic::{BallFunction, GramForm};
use crate::linalg;
use crate::poly::{self, MultiPoly};

/// Tolerance below which a derivative counts as vanishing.
pub const DERIVATIVE_TOL: f64 = 1e-9;
/// Default word-length cap for degree tests.
pub const DEFAULT_WORD_CAP: u32 = 2;
/// Distance from 1 below which an eigenvalue cluster counts as trivial.
pub const UNIPOTENT_TOL: f64 = 1e-6;
/// Eigenvalues closer than this are merged into one cluster. Perturbed
/// Jordan blocks split by roughly `eps^{1/m}`, far more than the error in
/// their mean.
pub const CLUSTER_TOL: f64 = 1e-2;

/// A word `(u_1, .., u_m)` for the iterated derivative `d_{u_1} .. d_{u_m}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct DerivativeWord {
    pub elements: Vec<GroupElement>,
}

impl DerivativeWord {
    pub fn new(elements: Vec<GroupElement>) -> Result<Self> {
        if elements.is_empty() {
            return Err(LabError::usage("derivative word must be nonempty"));
        }
        Ok(DerivativeWord { elements })
    }

    /// Apply the word right to left: `d_{u_1}(d_{u_2}(.. d_{u_m} f))`.
    pub fn apply(&self, group: &Group, f: &BallFunction) -> Result<BallFunction> {
        let mut cur = f.clone();
        for u in self.elements.iter().rev() {
            cur = left_derivative(group, &cur, u)?;
        }
        Ok(cur)
    }
}

/// `d_u f(x) = f(ux) - f(x)` on `B(R - |u|)`; the domain must be centered
/// at the identity.
pub fn left_derivative(group: &Group, f: &BallFunction, u: &GroupElement) -> Result<BallFunction> {
    if f.domain.center != group.identity() {
        return Err(LabError::usage("left derivatives need a ball centered at the identity"));
    }
    let len = group.word_length(u)?;
    if len > f.radius() {
        return Err(LabError::DomainTooSmall {
            needed: len as i64,
            available: f.radius(),
        });
    }
    let r = f.radius() - len;
    let domain: BallRef = if r == f.radius() { f.domain.clone() } else { Arc::new(f.domain.sub_ball(r)) };
    let values = domain
        .points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let ux = group.multiply(u, x);
            let j = f.domain.index_of(&ux).expect("|ux| <= |u| + |x|");
            f.values[j] - f.values[i]
        })
        .collect();
    Ok(BallFunction { domain, values })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DegreeTest {
    pub k: u32,
    pub is_degree_at_most_k: bool,
    pub max_violation: f64,
    /// Test words are the nonidentity elements of `B(word_cap)`.
    pub word_cap: u32,
    pub words: usize,
    pub eval_radius: u32,
    /// Radius of the ball on which the `(k+1)`-fold derivatives were checked.
    pub checked_radius: u32,
}

/// Check that every `(k+1)`-fold left derivative along words of length
/// `<= word_cap` vanishes on `B(eval_radius - (k+1) word_cap)`.
pub fn polynomial_degree_test(
    group: &Group,
    f: &BallFunction,
    k: u32,
    word_cap: u32,
    eval_radius: u32,
) -> Result<DegreeTest> {
    if f.domain.center != group.identity() {
        return Err(LabError::usage("degree test needs a ball centered at the identity"));
    }
    let depth = k + 1;
    let reach = depth as u64 * word_cap as u64;
    if eval_radius as u64 > f.radius() as u64 || reach > eval_radius as u64 {
        return Err(LabError::DomainTooSmall {
            needed: reach.max(eval_radius as u64) as i64,
            available: f.radius().min(eval_radius),
        });
    }
    let ball = &f.domain;
    let id = group.identity();
    let words: Vec<(GroupElement, u32)> = group
        .ball(word_cap)?
        .points
        .into_iter()
        .filter(|u| *u != id)
        .map(|u| {
            let l = group.word_length(&u).expect("ball element");
            (u, l)
        })
        .collect();
    // For each word, the index of u x in the base ball for x in B(eval - |u|).
    let shifts: Vec<Vec<usize>> = words
        .par_iter()
        .map(|(u, l)| {
            let n = ball.count_within(eval_radius - l);
            ball.points[..n]
                .iter()
                .map(|x| ball.index_of(&group.multiply(u, x)).expect("inside"))
                .collect()
        })
        .collect();

    fn descend(
        values: &[f64],
        radius: u32,
        left: u32,
        words: &[(GroupElement, u32)],
        shifts: &[Vec<usize>],
        counts: &[usize],
    ) -> f64 {
        if left == 0 {
            return values.iter().fold(0.0, |m, v| m.max(v.abs()));
        }
        let mut worst: f64 = 0.0;
        for (w, (_, l)) in words.iter().enumerate() {
            let r = radius - l;
            let n = counts[r as usize];
            let next: Vec<f64> = (0..n).map(|i| values[shifts[w][i]] - values[i]).collect();
            worst = worst.max(descend(&next, r, left - 1, words, shifts, counts));
        }
        worst
    }

    let counts: Vec<usize> = (0..=eval_radius).map(|r| ball.count_within(r)).collect();
    let base = &f.values[..counts[eval_radius as usize]];
    // First level in parallel; max is order independent.
    let max_violation = words
        .par_iter()
        .enumerate()
        .map(|(w, (_, l))| {
            let r = eval_radius - l;
            let n = counts[r as usize];
            let next: Vec<f64> = (0..n).map(|i| base[shifts[w][i]] - base[i]).collect();
            descend(&next, r, depth - 1, &words, &shifts, &counts)
        })
        .reduce(|| 0.0, f64::max);
    Ok(DegreeTest {
        k,
        is_degree_at_most_k: max_violation <= DERIVATIVE_TOL,
        max_violation,
        word_cap,
        words: words.len(),
        eval_radius,
        checked_radius: eval_radius - depth * word_cap,
    })
}

#[derive(Clone, Debug)]
pub struct PolySpace {
    pub polynomials: Vec<MultiPoly>,
    pub functions: Vec<BallFunction>,
}

/// Monomials spanning `P^k`, lowest degree first, evaluated on `B(radius)`.
pub fn poly_space_basis(group: &Group, k: u32, radius: u32) -> Result<PolySpace> {
    let weights = poly::coordinate_weights(group).ok_or_else(|| {
        LabError::usage(format!("no polynomial coordinates on {}", group.name))
    })?;
    let mut monos = poly::monomial_exponents(&weights, k);
    monos.reverse();
    let polynomials: Vec<MultiPoly> = monos.into_iter().map(MultiPoly::monomial).collect();
    let domain: BallRef = Arc::new(group.ball(radius)?);
    let functions = polynomials
        .iter()
        .map(|p| BallFunction::from_poly(domain.clone(), p))
        .collect();
    Ok(PolySpace { polynomials, functions })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct EigenCluster {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
    /// Largest distance of a member from the cluster mean.
    pub spread: f64,
}

/// Matrix of `f -> g.f`, `g.f(x) = f(g^{-1} x)`, in the given basis.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ActionMatrix {
    pub element: GroupElement,
    pub matrix: Vec<Vec<f64>>,
    /// `max_j ||g.f_j - sum_i A_ij f_i||_Q / ||g.f_j||_Q`.
    pub residual: f64,
    pub eigenvalues: Vec<EigenCluster>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct WeightReport {
    pub radius: u32,
    pub actions: Vec<ActionMatrix>,
    pub unipotent: bool,
    /// `dim V_1^{(n)}` for `n = 1, 2, ..` until it stabilizes.
    pub chain_dims: Vec<usize>,
}

fn cluster(eigs: &[(f64, f64)]) -> Vec<EigenCluster> {
    let n = eigs.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn root(label: &mut [usize], mut i: usize) -> usize {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            let d = ((eigs[i].0 - eigs[j].0).powi(2) + (eigs[i].1 - eigs[j].1).powi(2)).sqrt();
            if d < CLUSTER_TOL {
                let (a, b) = (root(&mut label, i), root(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = root(&mut label, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<EigenCluster> = groups
        .values()
        .map(|members| {
            let m = members.len() as f64;
            let re = members.iter().map(|&i| eigs[i].0).sum::<f64>() / m;
            let im = members.iter().map(|&i| eigs[i].1).sum::<f64>() / m;
            let spread = members
                .iter()
                .map(|&i| ((eigs[i].0 - re).powi(2) + (eigs[i].1 - im).powi(2)).sqrt())
                .fold(0.0, f64::max);
            EigenCluster { re, im, multiplicity: members.len(), spread }
        })
        .collect();
    out.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    out
}

/// Translation action of each generator on `span(basis)`, fitted by
/// `Q`-least squares on `B(Q.radius)`.
pub fn weight_decomposition(
    group: &Group,
    basis: &[BallFunction],
    generators: &[GroupElement],
    q: &GramForm,
) -> Result<WeightReport> {
    let m = basis.len();
    if m == 0 || q.basis_size != m {
        return Err(LabError::usage("Gram form does not match the basis"));
    }
    if q.numerical_rank < m {
        return Err(LabError::usage(format!(
            "basis is rank deficient: rank {} < size {m}",
            q.numerical_rank
        )));
    }
    let domain = basis[0].domain.clone();
    if domain.center != group.identity() {
        return Err(LabError::usage("basis must live on a ball centered at the identity"));
    }
    let r = q.radius;
    let n = domain.count_within(r);
    let w = domain.point_weight;
    let qm = q.to_dmatrix();
    let chol = qm.clone().cholesky().ok_or_else(|| LabError::usage("Gram form is not positive definite"))?;

    let mut actions = Vec::new();
    for g in generators {
        let len = group.word_length(g)?;
        if r as u64 + len as u64 > domain.radius as u64 {
            return Err(LabError::DomainTooSmall {
                needed: r as i64 + len as i64,
                available: domain.radius,
            });
        }
        let ginv = group.invert(g);
        let idx: Vec<usize> = domain.points[..n]
            .iter()
            .map(|x| domain.index_of(&group.multiply(&ginv, x)).expect("inside"))
            .collect();
        let moved: Vec<Vec<f64>> = basis
            .iter()
            .map(|f| idx.iter().map(|&j| f.values[j]).collect())
            .collect();
        // M_ij = Q(f_i, g.f_j)
        let mmat = DMatrix::from_fn(m, m, |i, j| {
            (0..n).map(|p| basis[i].values[p] * moved[j][p]).sum::<f64>() * w
        });
        let a = chol.solve(&mmat);
        let mut residual: f64 = 0.0;
        for j in 0..m {
            let mut sq = 0.0;
            let mut norm = 0.0;
            for p in 0..n {
                let fit: f64 = (0..m).map(|i| a[(i, j)] * basis[i].values[p]).sum();
                sq += (moved[j][p] - fit).powi(2);
                norm += moved[j][p].powi(2);
            }
            if norm > 0.0 {
                residual = residual.max((sq / norm).sqrt());
            }
        }
        let eigs: Vec<(f64, f64)> = a.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
        actions.push(ActionMatrix {
            element: g.clone(),
            matrix: (0..m).map(|i| (0..m).map(|j| a[(i, j)]).collect()).collect(),
            residual,
            eigenvalues: cluster(&eigs),
        });
    }
    let unipotent = actions.iter().all(|act| {
        act.eigenvalues
            .iter()
            .all(|c| ((c.re - 1.0).powi(2) + c.im.powi(2)).sqrt() < UNIPOTENT_TOL)
    });

    // V^{(n)} = { v : (A_g - I) v in V^{(n-1)} for every g }, V^{(0)} = 0.
    let mats: Vec<DMatrix<f64>> = actions
        .iter()
        .map(|act| DMatrix::from_fn(m, m, |i, j| act.matrix[i][j]) - DMatrix::identity(m, m))
        .collect();
    let mut chain_dims = Vec::new();
    let mut prev = DMatrix::<f64>::zeros(m, 0);
    for _ in 0..m {
        let proj = DMatrix::identity(m, m) - &prev * prev.transpose();
        let mut stacked = DMatrix::<f64>::zeros(m * mats.len(), m);
        for (b, d) in mats.iter().enumerate() {
            stacked.view_mut((b * m, 0), (m, m)).copy_from(&(&proj * d));
        }
        let top = linalg::singular_values(&stacked).first().copied().unwrap_or(0.0);
        let next = linalg::nullspace(&stacked, UNIPOTENT_TOL, Some(top.max(1.0)));
        let dim = next.ncols();
        if chain_dims.last() == Some(&dim) {
            break;
        }
        chain_dims.push(dim);
        prev = next;
        if dim == m {
            break;
        }
    }
    Ok(WeightReport { radius: r, actions, unipotent, chain_dims })
}

/// Nonidentity generators, the default action set.
pub fn action_generators(group: &Group) -> Vec<GroupElement> {
    let id = group.identity();
    group.generators.iter().filter(|g| **g != id).cloned().collect()
}
