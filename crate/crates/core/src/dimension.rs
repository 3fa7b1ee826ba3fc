//! Dimension estimates for `HF_k`, determinant-doubling scans, the
//! kernel-injectivity argument and the explicit Kleiner bound.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::group::{doubling_constant, Group, GroupElement};
use crate::harmonic::{self, gram_matrix, Backend, BallFunction, GradientMode};
use crate::inequality::{self, cover_exponent, separated_cover};
use crate::linalg;
use crate::measure::{check_courteous, StepMeasure};

/// Relative gap required between kept and discarded Gram singular values,
/// on top of `rank_tol`.
pub const GAP_FACTOR: f64 = 1e-2;

/// `2 D^n` with `n = ceil(log(2/eps)/log 2)`, rounded down to an integer.
pub fn kleiner_bound(doubling: f64, eps: f64) -> Result<u64> {
    if !(doubling >= 1.0) {
        return Err(LabError::usage(format!("doubling constant must be >= 1, got {doubling}")));
    }
    if !(eps > 0.0 && eps < 1.0 / 3.0) {
        return Err(LabError::usage(format!("eps must lie in (0, 1/3), got {eps}")));
    }
    let n = cover_exponent(eps)?;
    Ok((2.0 * doubling.powi(n as i32)).floor() as u64)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DimensionStatus {
    Stable,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RadiusRank {
    pub r_fit: u32,
    pub r_eval: u32,
    pub trial_size: usize,
    pub rank: usize,
    pub gram_singular_values: Vec<f64>,
    /// Largest discarded singular value is below `GAP_FACTOR * rank_tol` times the smallest kept one.
    pub gap_ok: bool,
    /// Largest sup residual among kept functions.
    pub max_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DimensionEstimate {
    pub group: String,
    pub measure: String,
    pub k: u32,
    pub rank_tol: f64,
    pub schedule: Vec<u32>,
    pub per_radius: Vec<RadiusRank>,
    pub status: DimensionStatus,
    /// Present only when the rank stabilized.
    pub dimension: Option<usize>,
    pub note: String,
}

impl DimensionEstimate {
    /// The certified dimension, or an inconclusive error.
    pub fn certified(&self) -> Result<usize> {
        self.dimension.ok_or_else(|| LabError::Inconclusive(self.note.clone()))
    }
}

/// Numerical rank of the variational harmonic basis along a radius schedule.
pub fn estimate_hfk_dim(
    group: &Group,
    mu: &StepMeasure,
    k: u32,
    schedule: &[u32],
    rank_tol: f64,
) -> Result<DimensionEstimate> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::usage("radius schedule must be nonempty and strictly increasing"));
    }
    let court = check_courteous(group, mu);
    if !court.symmetric || court.adapted_radius.is_none() {
        return Err(LabError::Precondition(format!(
            "measure {} is not courteous (symmetric={}, adapted={:?})",
            mu.label, court.symmetric, court.adapted_radius
        )));
    }
    let reach = mu.support_radius();
    let mut per_radius = Vec::new();
    for &r in schedule {
        let r_eval = r + reach;
        let hb = harmonic::harmonic_basis(group, mu, k, Backend::Variational { r_fit: r, r_eval }, rank_tol)?;
        let normalized: Vec<BallFunction> = hb
            .functions
            .iter()
            .map(|f| {
                let s = f.sup_norm();
                let values = f.values.iter().map(|v| v / s).collect();
                BallFunction { domain: f.domain.clone(), values }
            })
            .collect();
        let (rank, sv, gap_ok) = if normalized.is_empty() {
            (0, Vec::new(), true)
        } else {
            let q = gram_matrix(&normalized, r_eval, rank_tol)?;
            let kept = &q.singular_values[..q.numerical_rank];
            let dropped = &q.singular_values[q.numerical_rank..];
            let gap_ok = match (kept.last(), dropped.first()) {
                (Some(&lo), Some(&hi)) => hi < GAP_FACTOR * rank_tol * lo,
                _ => true,
            };
            (q.numerical_rank, q.singular_values.clone(), gap_ok)
        };
        per_radius.push(RadiusRank {
            r_fit: r,
            r_eval,
            trial_size: hb.trial_size,
            rank,
            gram_singular_values: sv,
            gap_ok,
            max_residual: hb.residuals.iter().copied().fold(0.0, f64::max),
        });
    }
    let n = per_radius.len();
    let stable = n >= 2
        && per_radius[n - 1].rank == per_radius[n - 2].rank
        && per_radius[n - 1].gap_ok
        && per_radius[n - 2].gap_ok;
    let ranks: Vec<usize> = per_radius.iter().map(|p| p.rank).collect();
    let (status, dimension, note) = if stable {
        (DimensionStatus::Stable, Some(ranks[n - 1]), format!("rank stable at {} over the last two radii", ranks[n - 1]))
    } else if n < 2 {
        (DimensionStatus::Inconclusive, None, "a single radius cannot show stabilization".to_string())
    } else {
        (DimensionStatus::Inconclusive, None, format!("rank did not stabilize: ranks {ranks:?}"))
    };
    Ok(DimensionEstimate {
        group: group.name.clone(),
        measure: mu.label.clone(),
        k,
        rank_tol,
        schedule: schedule.to_vec(),
        per_radius,
        status,
        dimension,
        note,
    })
}

/// Default threshold `6^{2(d + 2k)} + 1`.
pub fn default_delta(d: u32, k: u32) -> f64 {
    6f64.powi(2 * (d + 2 * k) as i32) + 1.0
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DoublingScan {
    pub radii: Vec<u32>,
    pub det: Vec<f64>,
    pub det_6r: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `det(Q_R) <= prod_i Q_R(u_i, u_i)` at every scanned radius (and its 6R partner).
    pub hadamard_ok: Vec<bool>,
    pub delta: f64,
    /// Half the basis size.
    pub d_v: f64,
    /// `Delta^{d_v}`.
    pub threshold: f64,
    /// Radii with `ratio <= Delta^{d_v}`.
    pub hits: Vec<u32>,
    pub growth_degree: u32,
    pub k: u32,
}

fn hadamard(q: &harmonic::GramForm) -> bool {
    let diag: f64 = (0..q.basis_size).map(|i| q.matrix[i][i]).product();
    q.det <= diag * (1.0 + 1e-12)
}

/// `det(Q_{6R}) / det(Q_R)` over the given radii.
pub fn det_doubling_scan(
    basis: &[BallFunction],
    radii: &[u32],
    d: u32,
    k: u32,
    rank_tol: f64,
) -> Result<DoublingScan> {
    if basis.is_empty() || radii.is_empty() {
        return Err(LabError::usage("basis and radii must be nonempty"));
    }
    let delta = default_delta(d, k);
    let d_v = basis.len() as f64 / 2.0;
    let threshold = delta.powf(d_v);
    let mut scan = DoublingScan {
        radii: radii.to_vec(),
        det: Vec::new(),
        det_6r: Vec::new(),
        ratios: Vec::new(),
        hadamard_ok: Vec::new(),
        delta,
        d_v,
        threshold,
        hits: Vec::new(),
        growth_degree: d,
        k,
    };
    for (i, &r) in radii.iter().enumerate() {
        let q = gram_matrix(basis, r, rank_tol)?;
        if i == 0 && (q.numerical_rank < basis.len() || q.det <= 0.0) {
            return Err(LabError::SingularGram { radius: r });
        }
        let q6 = gram_matrix(basis, 6 * r, rank_tol)?;
        let ratio = q6.det / q.det;
        scan.hadamard_ok.push(hadamard(&q) && hadamard(&q6));
        // Compare in log space; the threshold can be astronomically large.
        if ratio.ln() <= d_v * delta.ln() {
            scan.hits.push(r);
        }
        scan.det.push(q.det);
        scan.det_6r.push(q6.det);
        scan.ratios.push(ratio);
    }
    Ok(scan)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KernelElement {
    /// Coefficients in the `Q_R`-orthonormalized basis.
    pub coefficients: Vec<f64>,
    /// `Q_R(u, u)` (equal to 1 after normalization).
    pub q_r: f64,
    /// `D^2 c^{-1} 32 (eps R)^2 D^3 int_{B(2R)} |grad u|_mu^2`.
    pub poincare_chain: f64,
    /// `D^5 c^{-1} 32 eps^2 R^2 (8 sigma^2/(2R)^2 Q_{6R}(u,u) + 12 max(term1, term2))`.
    pub assembled_rhs: f64,
    pub chain_holds: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KernelReport {
    pub radius: u32,
    pub eps: f64,
    pub dim_v: usize,
    pub j: usize,
    pub beta: usize,
    pub kernel_dim: usize,
    pub injective: bool,
    pub kernel: Vec<KernelElement>,
    /// Every kernel element satisfies the assembled chain.
    pub all_chains_hold: bool,
    pub kleiner_bound: u64,
    pub constants: BTreeMap<String, f64>,
}

/// Averages of the basis over a separated cover and the Poincaré chain on
/// every element of their common kernel.
pub fn kernel_injectivity_check(
    group: &Group,
    basis: &[BallFunction],
    mu: &StepMeasure,
    eps: f64,
    r: u32,
    rank_tol: f64,
) -> Result<KernelReport> {
    if !(eps > 0.0 && eps < 1.0 / 3.0) {
        return Err(LabError::usage(format!("eps must lie in (0, 1/3), got {eps}")));
    }
    if basis.is_empty() {
        return Err(LabError::usage("empty basis"));
    }
    let c = check_courteous(group, mu)
        .density_floors
        .iter()
        .find(|f| f.n == 2)
        .map(|f| f.c)
        .filter(|&c| c > 0.0)
        .ok_or_else(|| {
            LabError::usage("no density floor on S^2; use a convolution power such as mu^*2")
        })?;
    let domain = basis[0].domain.clone();
    if domain.center != group.identity() {
        return Err(LabError::usage("basis must live on a ball centered at the identity"));
    }
    let cover = separated_cover(group, r, eps)?;
    let doubling = doubling_constant(group, 2 * r)?.doubling_constant;
    let m = basis.len();

    // Q_R-orthonormal coordinates: u = sum_i coef_i f_i with coef = L^{-T} e.
    let q = gram_matrix(basis, r, rank_tol)?;
    if q.numerical_rank < m {
        return Err(LabError::usage("basis is rank deficient on B(R)"));
    }
    let chol = q
        .to_dmatrix()
        .cholesky()
        .ok_or_else(|| LabError::usage("Gram form is not positive definite"))?;
    let l_inv_t = chol
        .l()
        .transpose()
        .try_inverse()
        .ok_or_else(|| LabError::usage("Gram form is singular"))?;

    let small = group.ball(cover.eps_r)?;
    let phi = DMatrix::from_fn(cover.j, m, |j, i| {
        let x = &cover.centers[j];
        let total: f64 = small
            .points
            .iter()
            .map(|b| {
                let p = group.multiply(x, b);
                basis[i].get(&p).expect("cover ball inside the domain")
            })
            .sum();
        total / small.len() as f64
    });
    let phi_o = &phi * &l_inv_t;
    let top = linalg::singular_values(&phi_o).first().copied().unwrap_or(0.0);
    let kernel = linalg::nullspace(&phi_o, rank_tol, Some(top.max(1.0)));

    let sigma2 = mu.second_moment();
    let rf = r as f64;
    let pre = doubling.powi(5) * 32.0 / c * (eps * rf).powi(2);
    let mut elements = Vec::new();
    for col in 0..kernel.ncols() {
        let coef = &l_inv_t * kernel.column(col);
        let values: Vec<f64> = (0..domain.len())
            .map(|p| (0..m).map(|i| coef[i] * basis[i].values[p]).sum())
            .collect();
        let u = BallFunction { domain: domain.clone(), values };
        let q_r = u.seminorm(r)?.powi(2);
        let grad = harmonic::gradient(group, &u, GradientMode::Mu(mu), 2 * r)?;
        let energy = grad.values.iter().map(|v| v * v).sum::<f64>() * domain.point_weight;
        let poincare_chain = pre * energy;
        let q6 = u.seminorm(6 * r)?.powi(2);
        let tails = inequality::tail_error_terms(group, &u, 2 * r, mu)?;
        let assembled_rhs = pre
            * (8.0 * sigma2 / (4.0 * rf * rf) * q6
                + inequality::TAIL_FACTOR * tails.term1.max(tails.term2));
        elements.push(KernelElement {
            coefficients: kernel.column(col).iter().copied().collect(),
            q_r,
            poincare_chain,
            assembled_rhs,
            chain_holds: q_r <= poincare_chain * (1.0 + 1e-12),
        });
    }
    let mut constants = BTreeMap::new();
    constants.insert("D".to_string(), doubling);
    constants.insert("D^3".to_string(), doubling.powi(3));
    constants.insert("D^5".to_string(), doubling.powi(5));
    constants.insert("c".to_string(), c);
    constants.insert("sigma2".to_string(), sigma2);
    constants.insert("poincare_factor".to_string(), 32.0 / c);
    let kernel_dim = elements.len();
    Ok(KernelReport {
        radius: r,
        eps,
        dim_v: m,
        j: cover.j,
        beta: cover.beta,
        kernel_dim,
        injective: kernel_dim == 0,
        all_chains_hold: elements.iter().all(|e| e.chain_holds),
        kernel: elements,
        kleiner_bound: kleiner_bound(doubling, eps)?,
        constants,
    })
}

/// Restrict functions on a ball of `group` to the sub-ball of `sub` of radius `r`
/// (points of `sub` written in ambient coordinates).
pub fn restrict_to_subgroup(sub: &Group, functions: &[BallFunction], r: u32) -> Result<Vec<BallFunction>> {
    let ball = Arc::new(sub.ball(r)?);
    functions
        .iter()
        .map(|f| {
            let values = ball
                .points
                .iter()
                .map(|p: &GroupElement| {
                    f.get(p).ok_or_else(|| LabError::DomainTooSmall {
                        needed: r as i64,
                        available: f.radius(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(BallFunction { domain: ball.clone(), values })
        })
        .collect()
}
