//! Step measures on groups: construction, convolution, courteousness
//! diagnostics, and hitting measures on finite-index sublattices.

use std::collections::{BTreeMap, HashMap, HashSet};

use num::{BigInt, BigRational, One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::group::{Group, GroupElement, GroupKind};

/// Symmetry tolerance for float-valued measures.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Exact hitting mode fails when more than this much mass leaves the box.
pub const ESCAPE_LIMIT: f64 = 1e-6;
/// Monte Carlo walks are censored after this many steps.
pub const MC_STEP_CAP: u64 = 1_000_000;
/// Budget on the support size of a convolution power.
pub const SUPPORT_BUDGET: usize = 2_000_000;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Truncation {
    pub radius: u32,
    pub discarded_mass: f64,
    pub tail_rate: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SupportPoint {
    pub element: GroupElement,
    pub mass: f64,
    /// Word length in the measure's group.
    pub length: u32,
}

/// A finitely supported (possibly tail-truncated) probability measure.
///
/// Support points are kept sorted by element, so every traversal is in a
/// canonical order.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StepMeasure {
    pub group: String,
    pub label: String,
    pub support: Vec<SupportPoint>,
    /// Exact masses aligned with `support`, when available.
    #[serde(skip)]
    pub exact: Option<Vec<BigRational>>,
    pub truncation: Option<Truncation>,
}

impl StepMeasure {
    /// Build from exact rational masses; zero masses are dropped.
    pub fn from_exact(
        group: &Group,
        label: impl Into<String>,
        masses: Vec<(GroupElement, BigRational)>,
    ) -> Result<Self> {
        let mut merged: BTreeMap<GroupElement, BigRational> = BTreeMap::new();
        for (g, m) in masses {
            if !group.contains(&g) {
                return Err(LabError::usage(format!("{g} is not in {}", group.name)));
            }
            *merged.entry(g).or_insert_with(BigRational::zero) += m;
        }
        let total: BigRational = merged.values().cloned().sum();
        if total != BigRational::one() {
            return Err(LabError::usage(format!("masses sum to {total}, expected 1")));
        }
        let mut support = Vec::new();
        let mut exact = Vec::new();
        for (g, m) in merged {
            if m.is_zero() {
                continue;
            }
            if m < BigRational::zero() {
                return Err(LabError::usage("negative mass"));
            }
            support.push(SupportPoint {
                length: group.word_length(&g)?,
                element: g,
                mass: m.to_f64().unwrap(),
            });
            exact.push(m);
        }
        Ok(StepMeasure {
            group: group.name.clone(),
            label: label.into(),
            support,
            exact: Some(exact),
            truncation: None,
        })
    }

    /// Build from float masses (sorted and merged here).
    pub fn from_masses(
        group: &Group,
        label: impl Into<String>,
        masses: Vec<(GroupElement, f64)>,
        truncation: Option<Truncation>,
    ) -> Result<Self> {
        let mut merged: BTreeMap<GroupElement, f64> = BTreeMap::new();
        for (g, m) in masses {
            *merged.entry(g).or_insert(0.0) += m;
        }
        let mut support = Vec::with_capacity(merged.len());
        for (g, m) in merged {
            if m <= 0.0 {
                continue;
            }
            support.push(SupportPoint {
                length: group.word_length(&g)?,
                element: g,
                mass: m,
            });
        }
        Ok(StepMeasure {
            group: group.name.clone(),
            label: label.into(),
            support,
            exact: None,
            truncation,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.support.iter().map(|p| p.mass).sum()
    }

    pub fn discarded_mass(&self) -> f64 {
        self.truncation.as_ref().map_or(0.0, |t| t.discarded_mass)
    }

    /// Largest word length in the support (the reach of the Markov operator).
    pub fn support_radius(&self) -> u32 {
        self.support.iter().map(|p| p.length).max().unwrap_or(0)
    }

    pub fn mass_of(&self, g: &GroupElement) -> f64 {
        self.support
            .binary_search_by(|p| p.element.cmp(g))
            .map_or(0.0, |i| self.support[i].mass)
    }

    fn exact_mass_of(&self, g: &GroupElement) -> Option<BigRational> {
        let exact = self.exact.as_ref()?;
        Some(
            self.support
                .binary_search_by(|p| p.element.cmp(g))
                .map_or_else(|_| BigRational::zero(), |i| exact[i].clone()),
        )
    }

    /// `sum_x |mu(x) - mu(x^{-1})|`; exactly zero in rational mode for symmetric measures.
    pub fn symmetry_defect(&self, group: &Group) -> f64 {
        if let Some(exact) = &self.exact {
            let mut defect = BigRational::zero();
            for (p, m) in self.support.iter().zip(exact) {
                let inv = self.exact_mass_of(&group.invert(&p.element)).unwrap();
                let d = m - inv;
                defect += if d < BigRational::zero() { -d } else { d };
            }
            return defect.to_f64().unwrap();
        }
        self.support
            .iter()
            .map(|p| (p.mass - self.mass_of(&group.invert(&p.element))).abs())
            .sum()
    }

    pub fn is_symmetric(&self, group: &Group) -> bool {
        match &self.exact {
            Some(_) => self.symmetry_defect(group) == 0.0,
            None => self.symmetry_defect(group) < SYMMETRY_TOL,
        }
    }

    /// `sum mu(s) |s|^2` over the retained support.
    pub fn second_moment(&self) -> f64 {
        self.support.iter().map(|p| p.mass * (p.length as f64).powi(2)).sum()
    }

    /// The retained support renormalized to total mass one (the law of a
    /// step conditioned to land inside the truncation radius).
    pub fn conditioned(&self) -> StepMeasure {
        let total = self.total_mass();
        let mut out = self.clone();
        if self.discarded_mass() == 0.0 {
            return out;
        }
        for p in &mut out.support {
            p.mass /= total;
        }
        out.label = format!("{}|conditioned", self.label);
        if let Some(t) = &mut out.truncation {
            t.discarded_mass = 0.0;
        }
        out
    }

    fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.support
            .iter()
            .map(|p| {
                acc += p.mass;
                acc
            })
            .collect()
    }
}

fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Uniform measure on the generating set (identity included).
pub fn uniform_on_generators(group: &Group) -> StepMeasure {
    let n = group.generator_count() as i64;
    let masses = group
        .generators
        .iter()
        .map(|g| (g.clone(), rational(1, n)))
        .collect();
    StepMeasure::from_exact(group, "uniform", masses).expect("generators are valid")
}

/// Uniform measure on the non-identity generators (e.g. `1/2 d_{-1} + 1/2 d_1` on Z).
pub fn uniform_on_nonidentity_generators(group: &Group) -> StepMeasure {
    let id = group.identity();
    let gens: Vec<&GroupElement> = group.generators.iter().filter(|g| **g != id).collect();
    let n = gens.len() as i64;
    let masses = gens.into_iter().map(|g| (g.clone(), rational(1, n))).collect();
    StepMeasure::from_exact(group, "simple", masses).expect("generators are valid")
}

/// Point mass at `g`.
pub fn dirac(group: &Group, g: GroupElement) -> Result<StepMeasure> {
    StepMeasure::from_exact(group, format!("dirac{g}"), vec![(g, BigRational::one())])
}

/// Number of points of `Z^d` at l1 norm exactly `r`.
pub(crate) fn lattice_sphere_count(d: usize, r: u32) -> f64 {
    if r == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for j in 1..=d.min(r as usize) {
        total += 2f64.powi(j as i32) * binomial(d as u64, j as u64) * binomial(r as u64 - 1, j as u64 - 1);
    }
    total
}

fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shell weights `|S_r| e^{-c r}` for `r = 0..` together with the mass of all
/// shells beyond the returned vector.
fn geometric_shells(group: &Group, decay: f64, mass_tol: f64) -> Result<(Vec<f64>, f64)> {
    let q = (-decay).exp();
    let lattice_dim = match &group.kind {
        GroupKind::Lattice { dim } => Some(*dim),
        GroupKind::Sublattice { basis, .. } => Some(basis.len()),
        _ => None,
    };
    match lattice_dim {
        Some(d) => {
            let mut shells = Vec::new();
            let mut r = 0u32;
            loop {
                let w = lattice_sphere_count(d, r) * q.powi(r as i32);
                shells.push(w);
                let total: f64 = shells.iter().sum();
                if (w < 1e-18 * total && r > 4) || r >= 20_000 {
                    break;
                }
                r += 1;
            }
            Ok((shells, 0.0))
        }
        None => {
            // Enumerate until the extrapolated tail is negligible against mass_tol.
            let mut radius = 8u32.min(group.radius_cap);
            loop {
                let ball = group.ball(radius)?;
                let shells: Vec<f64> = (0..=radius)
                    .map(|r| {
                        let lo = if r == 0 { 0 } else { ball.count_within(r - 1) };
                        (ball.count_within(r) - lo) as f64 * q.powi(r as i32)
                    })
                    .collect();
                let n = shells.len();
                let rho = (n.saturating_sub(3)..n - 1)
                    .map(|i| shells[i + 1] / shells[i])
                    .fold(0.0, f64::max);
                let total: f64 = shells.iter().sum();
                if rho < 1.0 {
                    let tail = shells[n - 1] * rho / (1.0 - rho);
                    if tail < 1e-3 * mass_tol * total {
                        return Ok((shells, tail));
                    }
                }
                if radius >= group.radius_cap {
                    return Err(LabError::Resource {
                        message: format!(
                            "geometric tail normalization on {} not resolved within radius cap",
                            group.name
                        ),
                        largest_radius: radius,
                    });
                }
                radius = (radius + 4).min(group.radius_cap);
            }
        }
    }
}

/// `mass(x) ∝ e^{-c|x|}` on `B(R_t)`, with `R_t` the smallest radius whose
/// complement carries at most `mass_tol` of the untruncated law.
pub fn geometric_tail_measure(group: &Group, decay: f64, mass_tol: f64) -> Result<StepMeasure> {
    if !(decay > 0.0) || !(mass_tol > 0.0 && mass_tol < 1.0) {
        return Err(LabError::usage("geometric tail needs c > 0 and 0 < mass_tol < 1"));
    }
    let (shells, extrapolated) = geometric_shells(group, decay, mass_tol)?;
    // tails[r] = mass of shells strictly beyond r
    let mut tails = vec![0.0; shells.len()];
    let mut acc = extrapolated;
    for r in (0..shells.len()).rev() {
        tails[r] = acc;
        acc += shells[r];
    }
    let z = acc;
    let r_t = (0..shells.len())
        .find(|&r| tails[r] / z <= mass_tol)
        .ok_or_else(|| LabError::Resource {
            message: "mass tolerance unreachable".into(),
            largest_radius: shells.len() as u32 - 1,
        })? as u32;
    if r_t > group.radius_cap {
        return Err(LabError::Resource {
            message: format!("truncation radius {r_t} exceeds radius cap {}", group.radius_cap),
            largest_radius: group.radius_cap,
        });
    }
    let ball = group.ball(r_t)?;
    let masses = ball
        .points
        .iter()
        .zip(&ball.distances)
        .map(|(g, &d)| (g.clone(), (-decay * d as f64).exp() / z))
        .collect();
    StepMeasure::from_masses(
        group,
        format!("geometric(c={decay},tol={mass_tol:e})"),
        masses,
        Some(Truncation {
            radius: r_t,
            discarded_mass: tails[r_t as usize] / z,
            tail_rate: decay,
        }),
    )
}

/// Two-measure convolution `(a * b)(z) = sum_{xy = z} a(x) b(y)`.
pub fn convolve(group: &Group, a: &StepMeasure, b: &StepMeasure) -> Result<StepMeasure> {
    let label = format!("{}*{}", a.label, b.label);
    let truncation = match (&a.truncation, &b.truncation) {
        (None, None) => None,
        (ta, tb) => {
            let radius = ta.as_ref().map_or(a.support_radius(), |t| t.radius)
                + tb.as_ref().map_or(b.support_radius(), |t| t.radius);
            let rate = ta.iter().chain(tb.iter()).map(|t| t.tail_rate).fold(f64::INFINITY, f64::min);
            Some((radius, rate))
        }
    };
    if let (Some(ea), Some(eb)) = (&a.exact, &b.exact) {
        let mut acc: HashMap<GroupElement, BigRational> = HashMap::new();
        for (pa, ma) in a.support.iter().zip(ea) {
            for (pb, mb) in b.support.iter().zip(eb) {
                let z = group.multiply(&pa.element, &pb.element);
                *acc.entry(z).or_insert_with(BigRational::zero) += ma * mb;
            }
            if acc.len() > SUPPORT_BUDGET {
                return Err(support_blowup());
            }
        }
        return StepMeasure::from_exact(group, label, acc.into_iter().collect());
    }
    let mut acc: BTreeMap<GroupElement, f64> = BTreeMap::new();
    for pa in &a.support {
        for pb in &b.support {
            let z = group.multiply(&pa.element, &pb.element);
            *acc.entry(z).or_insert(0.0) += pa.mass * pb.mass;
        }
        if acc.len() > SUPPORT_BUDGET {
            return Err(support_blowup());
        }
    }
    let total: f64 = acc.values().sum();
    let truncation = truncation.map(|(radius, tail_rate)| Truncation {
        radius,
        discarded_mass: (1.0 - total).max(0.0),
        tail_rate,
    });
    StepMeasure::from_masses(group, label, acc.into_iter().collect(), truncation)
}

fn support_blowup() -> LabError {
    LabError::Resource {
        message: format!("convolution support exceeds {SUPPORT_BUDGET} points"),
        largest_radius: 0,
    }
}

/// `mu^{*n}` by repeated convolution.
pub fn convolution_power(group: &Group, mu: &StepMeasure, n: u32) -> Result<StepMeasure> {
    if n == 0 {
        return Err(LabError::usage("convolution power needs n >= 1"));
    }
    let mut out = mu.clone();
    for _ in 1..n {
        out = convolve(group, &out, mu)?;
    }
    if n > 1 {
        out.label = format!("({})^*{n}", mu.label);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TailFit {
    /// Fitted exponential rate `c` in `Pr[|x| > t] ≈ A e^{-c t}`.
    pub rate: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    pub points: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DensityFloor {
    pub n: u32,
    /// `min_{x in S^n} dmu/dm(x) = |S| * mu(x)`.
    pub c: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CourteousReport {
    pub symmetric: bool,
    pub symmetry_defect: f64,
    /// Smallest n with `supp ∪ supp^2 ∪ .. ∪ supp^n ⊇ S`.
    pub adapted_radius: Option<u32>,
    pub compact_support: bool,
    pub tail_fit: Option<TailFit>,
    /// Largest `c` with `Pr[|x| > t] <= e^{-c t}` for every tabulated `t >= 1`.
    pub certified_tail_rate: Option<f64>,
    pub second_moment: f64,
    pub density_floors: Vec<DensityFloor>,
    /// Largest `n` with a positive floor.
    pub density_floor: Option<DensityFloor>,
    pub discarded_mass: f64,
    pub note: String,
}

const ADAPTED_SEARCH_CAP: u32 = 8;

/// Courteousness diagnostics; failures are fields, never errors.
pub fn check_courteous(group: &Group, mu: &StepMeasure) -> CourteousReport {
    let symmetry_defect = mu.symmetry_defect(group);
    let symmetric = mu.is_symmetric(group);

    let targets: HashSet<&GroupElement> = group.generators.iter().collect();
    let supp: Vec<&GroupElement> = mu.support.iter().map(|p| &p.element).collect();
    let mut reached: HashSet<GroupElement> = supp.iter().map(|g| (*g).clone()).collect();
    let mut power: Vec<GroupElement> = supp.iter().map(|g| (*g).clone()).collect();
    let mut adapted_radius = None;
    for n in 1..=ADAPTED_SEARCH_CAP {
        if targets.iter().all(|g| reached.contains(*g)) {
            adapted_radius = Some(n);
            break;
        }
        if n == ADAPTED_SEARCH_CAP || power.len() * supp.len() > SUPPORT_BUDGET {
            break;
        }
        let mut next: HashSet<GroupElement> = HashSet::new();
        for x in &power {
            for s in &supp {
                next.insert(group.multiply(x, s));
            }
        }
        reached.extend(next.iter().cloned());
        power = next.into_iter().collect();
    }

    // Tail table Pr[|x| > t], t = 0..max_len.
    let max_len = mu.support_radius();
    let discarded = mu.discarded_mass();
    let mut by_len = vec![0.0; max_len as usize + 1];
    for p in &mu.support {
        by_len[p.length as usize] += p.mass;
    }
    let mut tails = vec![0.0; max_len as usize + 1];
    let mut acc = discarded;
    for t in (0..=max_len as usize).rev() {
        tails[t] = acc;
        acc += by_len[t];
    }
    let compact_support = discarded == 0.0;
    let pts: Vec<(f64, f64)> = tails
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &v)| v > 0.0)
        .map(|(t, &v)| (t as f64, v.ln()))
        .collect();
    let tail_fit = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        Some(TailFit {
            rate: -slope,
            residual: (rss / n).sqrt(),
            points: pts.len(),
        })
    } else {
        None
    };
    let certified_tail_rate = if compact_support {
        None
    } else {
        pts.iter().map(|&(t, lv)| -lv / t).reduce(f64::min)
    };

    let s_count = group.generator_count() as f64;
    let mut density_floors = Vec::new();
    let mut ball_power: Vec<GroupElement> = vec![group.identity()];
    for n in 1..=2u32 {
        let mut next: HashSet<GroupElement> = HashSet::new();
        for x in &ball_power {
            for s in &group.generators {
                next.insert(group.multiply(x, s));
            }
        }
        ball_power = next.into_iter().collect();
        let c = ball_power
            .iter()
            .map(|x| s_count * mu.mass_of(x))
            .fold(f64::INFINITY, f64::min);
        density_floors.push(DensityFloor { n, c });
    }
    let density_floor = density_floors.iter().rev().find(|f| f.c > 0.0).cloned();

    CourteousReport {
        symmetric,
        symmetry_defect,
        adapted_radius,
        compact_support,
        tail_fit,
        certified_tail_rate,
        second_moment: mu.second_moment(),
        density_floors,
        density_floor,
        discarded_mass: discarded,
        note: "discrete group: every measure has a density w.r.t. counting measure, \
               so the continuity requirement is vacuous"
            .into(),
    }
}

/// Verify `sub` is a finite-index subgroup of `group` by coset enumeration.
pub fn subgroup_index(group: &Group, sub: &Group) -> Result<usize> {
    if !group.is_abelian() || !matches!(sub.kind, GroupKind::Sublattice { .. }) {
        return Err(LabError::usage("hitting measures are implemented for sublattices of Z^d"));
    }
    if group.coord_dim() != sub.coord_dim() {
        return Err(LabError::usage("subgroup dimension does not match the ambient group"));
    }
    for g in &sub.generators {
        if !group.contains(g) {
            return Err(LabError::usage(format!("{g} is not in {}", group.name)));
        }
    }
    const INDEX_CAP: usize = 100_000;
    let mut reps: Vec<GroupElement> = vec![group.identity()];
    let mut frontier = reps.clone();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for x in &frontier {
            for s in &group.generators {
                let y = group.multiply(x, s);
                let known = reps.iter().any(|r| sub.contains(&group.multiply(&group.invert(r), &y)));
                if !known {
                    reps.push(y.clone());
                    next.push(y);
                    if reps.len() > INDEX_CAP {
                        return Err(LabError::usage("subgroup index exceeds enumeration cap"));
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(reps.len())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HittingMode {
    Exact { trunc_radius: u32 },
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct McEstimate {
    pub element: GroupElement,
    pub probability: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct HittingDiagnostics {
    pub mode: HittingMode,
    pub index: usize,
    /// `Pr[tau = t]` for `t = 1, 2, ..` (exact mode) or the empirical frequencies.
    pub tau_distribution: Vec<f64>,
    pub tau_mean: f64,
    pub escaped_mass: f64,
    /// Transient mass left when the iteration stopped.
    pub unresolved_mass: f64,
    pub censored_samples: usize,
    pub estimates: Vec<McEstimate>,
}

#[derive(Clone, Debug)]
pub struct HittingResult {
    pub measure: StepMeasure,
    pub diagnostics: HittingDiagnostics,
}

/// Law of `X_{tau_H}` with `tau_H = inf{t >= 1 : X_t in H}` for the walk
/// started at the identity.
pub fn hitting_measure(
    group: &Group,
    sub: &Group,
    mu: &StepMeasure,
    mode: HittingMode,
) -> Result<HittingResult> {
    let index = subgroup_index(group, sub)?;
    match mode {
        HittingMode::Exact { trunc_radius } => hitting_exact(group, sub, mu, trunc_radius, index),
        HittingMode::MonteCarlo { samples, seed } => {
            hitting_monte_carlo(group, sub, mu, samples, seed, index)
        }
    }
}

fn hitting_exact(
    group: &Group,
    sub: &Group,
    mu: &StepMeasure,
    trunc_radius: u32,
    index: usize,
) -> Result<HittingResult> {
    const STEP_CAP: usize = 1_000_000;
    const RESOLVED: f64 = 1e-18;
    let ball = group.ball(trunc_radius)?;
    let mut current = vec![0.0f64; ball.len()];
    current[0] = 1.0;
    let mut absorbed: BTreeMap<GroupElement, f64> = BTreeMap::new();
    let mut tau = Vec::new();
    let mut escaped = 0.0;
    let mut transient = 1.0;
    let mut steps = 0;
    while transient > RESOLVED && steps < STEP_CAP {
        let mut next = vec![0.0f64; ball.len()];
        let mut absorbed_now = 0.0;
        for (i, &m) in current.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let z = &ball.points[i];
            for p in &mu.support {
                let y = group.multiply(z, &p.element);
                let w = m * p.mass;
                if sub.contains(&y) {
                    *absorbed.entry(y).or_insert(0.0) += w;
                    absorbed_now += w;
                } else if let Some(j) = ball.index_of(&y) {
                    next[j] += w;
                } else {
                    escaped += w;
                }
            }
        }
        tau.push(absorbed_now);
        transient = next.iter().sum();
        current = next;
        steps += 1;
    }
    if escaped > ESCAPE_LIMIT {
        return Err(LabError::TruncationTooSmall {
            escaped,
            limit: ESCAPE_LIMIT,
        });
    }
    let total: f64 = absorbed.values().sum();
    let tau_mean = tau.iter().enumerate().map(|(t, p)| (t + 1) as f64 * p).sum::<f64>() / total;
    let masses: Vec<(GroupElement, f64)> = absorbed.into_iter().collect();
    let rate = mu.truncation.as_ref().map_or(f64::INFINITY, |t| t.tail_rate);
    let measure = StepMeasure::from_masses(
        sub,
        format!("hitting({})", mu.label),
        masses,
        if total < 1.0 {
            Some(Truncation {
                radius: 0,
                discarded_mass: 1.0 - total,
                tail_rate: rate,
            })
        } else {
            None
        },
    )?;
    let measure = fix_truncation_radius(measure);
    while tau.last() == Some(&0.0) {
        tau.pop();
    }
    Ok(HittingResult {
        measure,
        diagnostics: HittingDiagnostics {
            mode: HittingMode::Exact { trunc_radius },
            index,
            tau_distribution: tau,
            tau_mean,
            escaped_mass: escaped,
            unresolved_mass: transient,
            censored_samples: 0,
            estimates: Vec::new(),
        },
    })
}

fn fix_truncation_radius(mut m: StepMeasure) -> StepMeasure {
    let r = m.support_radius();
    if let Some(t) = &mut m.truncation {
        t.radius = r;
        if !t.tail_rate.is_finite() {
            t.tail_rate = 0.0;
        }
    }
    m
}

fn hitting_monte_carlo(
    group: &Group,
    sub: &Group,
    mu: &StepMeasure,
    samples: usize,
    seed: u64,
    index: usize,
) -> Result<HittingResult> {
    if samples == 0 {
        return Err(LabError::usage("Monte Carlo mode needs at least one sample"));
    }
    let cumulative = mu.cumulative();
    let total = *cumulative.last().ok_or_else(|| LabError::usage("empty measure"))?;
    let outcomes: Vec<Option<(GroupElement, u64)>> = (0..samples as u64)
        .into_par_iter()
        .map(|walk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(walk);
            let mut x = group.identity();
            for t in 1..=MC_STEP_CAP {
                let u: f64 = rng.random::<f64>() * total;
                let k = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
                x = group.multiply(&x, &mu.support[k].element);
                if sub.contains(&x) {
                    return Some((x, t));
                }
            }
            None
        })
        .collect();
    let mut counts: BTreeMap<GroupElement, usize> = BTreeMap::new();
    let mut tau_counts: Vec<usize> = Vec::new();
    let mut censored = 0usize;
    for o in outcomes {
        match o {
            Some((x, t)) => {
                *counts.entry(x).or_insert(0) += 1;
                let t = t as usize;
                if tau_counts.len() < t {
                    tau_counts.resize(t, 0);
                }
                tau_counts[t - 1] += 1;
            }
            None => censored += 1,
        }
    }
    let n = samples as f64;
    let estimates: Vec<McEstimate> = counts
        .iter()
        .map(|(g, &c)| {
            let p = c as f64 / n;
            McEstimate {
                element: g.clone(),
                probability: p,
                standard_error: (p * (1.0 - p) / n).sqrt(),
            }
        })
        .collect();
    let tau_distribution: Vec<f64> = tau_counts.iter().map(|&c| c as f64 / n).collect();
    let resolved = n - censored as f64;
    let tau_mean = tau_counts
        .iter()
        .enumerate()
        .map(|(t, &c)| (t + 1) as f64 * c as f64)
        .sum::<f64>()
        / resolved.max(1.0);
    let masses = estimates.iter().map(|e| (e.element.clone(), e.probability)).collect();
    let measure = StepMeasure::from_masses(
        sub,
        format!("hitting-mc({})", mu.label),
        masses,
        (censored > 0).then(|| Truncation {
            radius: 0,
            discarded_mass: censored as f64 / n,
            tail_rate: 0.0,
        }),
    )?;
    Ok(HittingResult {
        measure: fix_truncation_radius(measure),
        diagnostics: HittingDiagnostics {
            mode: HittingMode::MonteCarlo { samples, seed },
            index,
            tau_distribution,
            tau_mean,
            escaped_mass: 0.0,
            unresolved_mass: 0.0,
            censored_samples: censored,
            estimates,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(c: &[i64]) -> GroupElement {
        GroupElement(c.to_vec())
    }

    #[test]
    fn uniform_masses() {
        let z1 = Group::lattice(1);
        let mu = uniform_on_generators(&z1);
        assert_eq!(mu.support.len(), 3);
        for p in &mu.support {
            assert_eq!(mu.exact_mass_of(&p.element).unwrap(), rational(1, 3));
        }
        let z2 = Group::lattice(2);
        assert!(uniform_on_generators(&z2).support.iter().all(|p| p.mass == 0.2));
        assert!(uniform_on_generators(&z2).is_symmetric(&z2));
    }

    #[test]
    fn geometric_tail_truncation_radius_matches_series() {
        // Oracle: on Z, tail beyond R over Z is 2 q^{R+1} / (1 + q).
        let z1 = Group::lattice(1);
        let q = (-1.0f64).exp();
        let expected_r = (0..)
            .find(|&r| 2.0 * q.powi(r + 1) / (1.0 + q) <= 1e-8)
            .unwrap() as u32;
        let mu = geometric_tail_measure(&z1, 1.0, 1e-8).unwrap();
        let t = mu.truncation.as_ref().unwrap();
        assert_eq!(t.radius, expected_r);
        assert_eq!(expected_r, 18);
        let expected_disc = 2.0 * q.powi(expected_r as i32 + 1) / (1.0 + q);
        assert!((t.discarded_mass - expected_disc).abs() < 1e-15);
        assert!((mu.total_mass() + t.discarded_mass - 1.0).abs() < 1e-12);
        assert!(mu.is_symmetric(&z1));
    }

    #[test]
    fn geometric_tail_on_heisenberg_normalizes() {
        let h = Group::heisenberg().with_radius_cap(40);
        let mu = geometric_tail_measure(&h, 2.0, 1e-4).unwrap();
        assert!((mu.total_mass() + mu.discarded_mass() - 1.0).abs() < 1e-12);
        assert!(mu.is_symmetric(&h));
    }

    #[test]
    fn convolution_examples() {
        let z1 = Group::lattice(1);
        let mu = uniform_on_nonidentity_generators(&z1);
        let mu2 = convolution_power(&z1, &mu, 2).unwrap();
        assert_eq!(mu2.exact_mass_of(&e(&[-2])).unwrap(), rational(1, 4));
        assert_eq!(mu2.exact_mass_of(&e(&[0])).unwrap(), rational(1, 2));
        assert_eq!(mu2.exact_mass_of(&e(&[2])).unwrap(), rational(1, 4));
        assert_eq!(convolution_power(&z1, &mu, 1).unwrap(), mu);
        assert!(convolution_power(&z1, &mu, 0).is_err());
    }

    #[test]
    fn density_floor_of_square_of_uniform() {
        let z2 = Group::lattice(2);
        let mu2 = convolution_power(&z2, &uniform_on_generators(&z2), 2).unwrap();
        let rep = check_courteous(&z2, &mu2);
        let floor = rep.density_floor.unwrap();
        assert_eq!(floor.n, 2);
        assert!((floor.c - 0.2).abs() < 1e-15);
    }

    #[test]
    fn courteous_reports() {
        let z2 = Group::lattice(2);
        let rep = check_courteous(&z2, &uniform_on_generators(&z2));
        assert!(rep.symmetric);
        assert_eq!(rep.adapted_radius, Some(1));
        assert!(rep.compact_support);
        let asym = dirac(&z2, e(&[1, 0])).unwrap();
        let rep = check_courteous(&z2, &asym);
        assert!(!rep.symmetric);
        assert_eq!(rep.adapted_radius, None);
    }

    #[test]
    fn geometric_tail_fit_recovers_rate() {
        let z1 = Group::lattice(1);
        let rep = check_courteous(&z1, &geometric_tail_measure(&z1, 1.0, 1e-8).unwrap());
        let fit = rep.tail_fit.unwrap();
        assert!(fit.rate >= 0.8 && fit.rate <= 1.2, "rate {}", fit.rate);
        // ℤ²: empirical tail dominated by e^{-c' t} with c' >= 1 for c = 2.
        let z2 = Group::lattice(2);
        let rep = check_courteous(&z2, &geometric_tail_measure(&z2, 2.0, 1e-8).unwrap());
        assert!(rep.certified_tail_rate.unwrap() >= 1.0);
    }

    #[test]
    fn hitting_on_even_integers() {
        let z1 = Group::lattice(1);
        let two_z = Group::sublattice(vec![vec![2]]).unwrap();
        let mu = uniform_on_nonidentity_generators(&z1);
        let res = hitting_measure(&z1, &two_z, &mu, HittingMode::Exact { trunc_radius: 4 }).unwrap();
        assert_eq!(res.diagnostics.index, 2);
        assert_eq!(res.diagnostics.tau_distribution, vec![0.0, 1.0]);
        assert!((res.measure.mass_of(&e(&[-2])) - 0.25).abs() < 1e-15);
        assert!((res.measure.mass_of(&e(&[0])) - 0.5).abs() < 1e-15);
        assert!((res.measure.mass_of(&e(&[2])) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn hitting_index_one_is_identity() {
        let z1 = Group::lattice(1);
        let all = Group::sublattice(vec![vec![1]]).unwrap();
        let mu = uniform_on_nonidentity_generators(&z1);
        let res = hitting_measure(&z1, &all, &mu, HittingMode::Exact { trunc_radius: 2 }).unwrap();
        assert_eq!(res.diagnostics.tau_distribution, vec![1.0]);
        for p in &mu.support {
            assert_eq!(res.measure.mass_of(&p.element), p.mass);
        }
    }

    #[test]
    fn hitting_truncation_too_small() {
        let z2 = Group::lattice(2);
        let sub = Group::sublattice(vec![vec![3, 0], vec![0, 3]]).unwrap();
        let mu = uniform_on_generators(&z2);
        let err = hitting_measure(&z2, &sub, &mu, HittingMode::Exact { trunc_radius: 1 }).unwrap_err();
        assert!(matches!(err, LabError::TruncationTooSmall { .. }));
    }

    #[test]
    fn monte_carlo_independent_of_thread_count() {
        let z2 = Group::lattice(2);
        let sub = Group::sublattice(vec![vec![2, 0], vec![0, 1]]).unwrap();
        let mu = uniform_on_generators(&z2);
        let mode = HittingMode::MonteCarlo { samples: 2000, seed: 7 };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| hitting_measure(&z2, &sub, &mu, mode).unwrap().diagnostics)
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn change_of_variables_identity_is_exact() {
        // sum_x sum_y f(x,y) mu(x^{-1}y) = sum_y sum_x f(x,y) mu(y^{-1}x) on B(4) x B(4).
        let z2 = Group::lattice(2);
        let mu = convolution_power(&z2, &uniform_on_generators(&z2), 2).unwrap();
        let ball = z2.ball(4).unwrap();
        let f = |x: &GroupElement, y: &GroupElement| {
            rational(x.0[0] * 3 - y.0[1] + x.0[1] * y.0[0], 1 + (x.0[0] - y.0[0]).abs())
        };
        let mut lhs = BigRational::zero();
        let mut rhs = BigRational::zero();
        for x in &ball.points {
            for y in &ball.points {
                let m1 = mu.exact_mass_of(&z2.multiply(&z2.invert(x), y)).unwrap();
                let m2 = mu.exact_mass_of(&z2.multiply(&z2.invert(y), x)).unwrap();
                lhs += f(x, y) * m1;
                rhs += f(x, y) * m2;
            }
        }
        assert_eq!(lhs, rhs);
    }
}
