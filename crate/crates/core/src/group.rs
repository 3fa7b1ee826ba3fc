//! Finitely generated groups as word-metric spaces.
//!
//! Every group here is discrete, so Haar measure is counting measure scaled so
//! that the generating set (which contains the identity) has mass one: each
//! point weighs `1/|S|`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Default cap on BFS radius for word-length queries.
pub const DEFAULT_RADIUS_CAP: u32 = 256;
/// Lamplighter balls grow exponentially; keep them desk-sized.
pub const LAMPLIGHTER_RADIUS_CAP: u32 = 12;
/// Default budget on the number of points a single ball may hold.
pub const DEFAULT_POINT_BUDGET: usize = 4_000_000;

/// A group element in canonical coordinates.
///
/// * `Z^d` and sublattices: `(x_1, .., x_d)` (sublattices reuse ambient coordinates).
/// * Heisenberg `H_3(Z)`: `(x, y, z)`, the upper-triangular entries of
///   `[[1, x, z], [0, 1, y], [0, 0, 1]]`.
/// * Lamplighter `Z_2 wr Z`: `(position, lamp_1 < lamp_2 < ..)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(pub Vec<i64>);

impl GroupElement {
    pub fn new(coords: Vec<i64>) -> Self {
        GroupElement(coords)
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    /// Build a lamplighter element from a lamp set and a position.
    pub fn lamplighter(lamps: &[i64], position: i64) -> Self {
        let mut sorted: Vec<i64> = lamps.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut coords = Vec::with_capacity(sorted.len() + 1);
        coords.push(position);
        coords.extend(sorted);
        GroupElement(coords)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupKind {
    Lattice {
        dim: usize,
    },
    Heisenberg,
    Lamplighter,
    /// Full-rank sublattice of `Z^d` spanned by the rows of `basis`.
    Sublattice {
        basis: Vec<Vec<i64>>,
        det: i64,
        /// Adjugate of `basis^T`; coefficients are `adj * x / det`.
        adj: Vec<Vec<i64>>,
    },
}

/// A finitely generated group with a symmetric generating set containing the identity.
#[derive(Clone, Debug)]
pub struct Group {
    pub name: String,
    pub kind: GroupKind,
    pub generators: Vec<GroupElement>,
    /// Growth degree when known (`|B(R)| ~ R^d`).
    pub dimension_hint: Option<u32>,
    pub radius_cap: u32,
    pub point_budget: usize,
}

impl Group {
    pub fn lattice(dim: usize) -> Self {
        assert!(dim >= 1, "Z^d needs d >= 1");
        let mut generators = vec![GroupElement(vec![0; dim])];
        for i in 0..dim {
            for sign in [1, -1] {
                let mut e = vec![0; dim];
                e[i] = sign;
                generators.push(GroupElement(e));
            }
        }
        Group {
            name: format!("Z^d:d={dim}"),
            kind: GroupKind::Lattice { dim },
            generators,
            dimension_hint: Some(dim as u32),
            radius_cap: DEFAULT_RADIUS_CAP,
            point_budget: DEFAULT_POINT_BUDGET,
        }
    }

    pub fn heisenberg() -> Self {
        let generators = [[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]]
            .iter()
            .map(|c| GroupElement(c.to_vec()))
            .collect();
        Group {
            name: "heisenberg".into(),
            kind: GroupKind::Heisenberg,
            generators,
            dimension_hint: Some(4),
            radius_cap: DEFAULT_RADIUS_CAP,
            point_budget: DEFAULT_POINT_BUDGET,
        }
    }

    pub fn lamplighter() -> Self {
        let generators = vec![
            GroupElement(vec![0]),
            GroupElement(vec![1]),
            GroupElement(vec![-1]),
            GroupElement(vec![0, 0]),
        ];
        Group {
            name: "lamplighter".into(),
            kind: GroupKind::Lamplighter,
            generators,
            dimension_hint: None,
            radius_cap: LAMPLIGHTER_RADIUS_CAP,
            point_budget: DEFAULT_POINT_BUDGET,
        }
    }

    /// Sublattice of `Z^d` spanned by the rows of `basis`, generated by `{0, ±b_i}`.
    pub fn sublattice(basis: Vec<Vec<i64>>) -> Result<Self> {
        let dim = basis.len();
        if dim == 0 || basis.iter().any(|row| row.len() != dim) {
            return Err(LabError::usage("sublattice basis must be a square integer matrix"));
        }
        let det = int_det(&basis);
        if det == 0 {
            return Err(LabError::usage("sublattice basis is singular"));
        }
        let transposed: Vec<Vec<i64>> = (0..dim)
            .map(|i| (0..dim).map(|j| basis[j][i]).collect())
            .collect();
        let adj = int_adjugate(&transposed);
        let mut generators = vec![GroupElement(vec![0; dim])];
        for row in &basis {
            generators.push(GroupElement(row.clone()));
            generators.push(GroupElement(row.iter().map(|v| -v).collect()));
        }
        let rows: Vec<String> = basis
            .iter()
            .map(|r| format!("[{}]", r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        Ok(Group {
            name: format!(
                "sublattice:Z^{dim}:index={},basis=[{}]",
                det.abs(),
                rows.join(",")
            ),
            kind: GroupKind::Sublattice { basis, det, adj },
            generators,
            dimension_hint: Some(dim as u32),
            radius_cap: DEFAULT_RADIUS_CAP,
            point_budget: DEFAULT_POINT_BUDGET,
        })
    }

    /// Parse a group selector such as `Z^d:d=2`, `Z^3`, `heisenberg`,
    /// `lamplighter`, or `sublattice:Z^2:index=2,basis=[[2,0],[0,1]]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let lower = spec.to_ascii_lowercase();
        if lower == "heisenberg" || lower == "h3" {
            return Ok(Group::heisenberg());
        }
        if lower == "lamplighter" {
            return Ok(Group::lamplighter());
        }
        if let Some(rest) = lower.strip_prefix("sublattice:") {
            return parse_sublattice(rest);
        }
        if let Some(rest) = lower.strip_prefix("z^") {
            let dim = if let Some(d) = rest.strip_prefix("d:d=") {
                d.parse::<usize>()
            } else {
                rest.parse::<usize>()
            }
            .map_err(|_| LabError::Config(format!("bad lattice dimension in '{spec}'")))?;
            if dim == 0 {
                return Err(LabError::Config("lattice dimension must be >= 1".into()));
            }
            return Ok(Group::lattice(dim));
        }
        Err(LabError::Config(format!("unknown group '{spec}'")))
    }

    pub fn with_radius_cap(mut self, cap: u32) -> Self {
        self.radius_cap = cap;
        self
    }

    pub fn with_point_budget(mut self, budget: usize) -> Self {
        self.point_budget = budget;
        self
    }

    pub fn identity(&self) -> GroupElement {
        match &self.kind {
            GroupKind::Lattice { dim } => GroupElement(vec![0; *dim]),
            GroupKind::Sublattice { basis, .. } => GroupElement(vec![0; basis.len()]),
            GroupKind::Heisenberg => GroupElement(vec![0, 0, 0]),
            GroupKind::Lamplighter => GroupElement(vec![0]),
        }
    }

    /// Number of generators, identity included (`|S|`).
    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    /// Haar weight of a single point, normalized so that `m(S) = 1`.
    pub fn point_weight(&self) -> f64 {
        1.0 / self.generators.len() as f64
    }

    /// Ambient coordinate dimension (lamplighter: 1, the position).
    pub fn coord_dim(&self) -> usize {
        match &self.kind {
            GroupKind::Lattice { dim } => *dim,
            GroupKind::Sublattice { basis, .. } => basis.len(),
            GroupKind::Heisenberg => 3,
            GroupKind::Lamplighter => 1,
        }
    }

    pub fn is_abelian(&self) -> bool {
        matches!(self.kind, GroupKind::Lattice { .. } | GroupKind::Sublattice { .. })
    }

    /// Does `g` have the canonical shape for this presentation?
    pub fn contains(&self, g: &GroupElement) -> bool {
        let c = &g.0;
        match &self.kind {
            GroupKind::Lattice { dim } => c.len() == *dim,
            GroupKind::Heisenberg => c.len() == 3,
            GroupKind::Lamplighter => !c.is_empty() && c[1..].windows(2).all(|w| w[0] < w[1]),
            GroupKind::Sublattice { basis, .. } => {
                c.len() == basis.len() && self.lattice_coefficients(g).is_some()
            }
        }
    }

    fn check(&self, g: &GroupElement) -> Result<()> {
        if self.contains(g) {
            Ok(())
        } else {
            Err(LabError::usage(format!("element {g} does not belong to {}", self.name)))
        }
    }

    /// Product `g * h`. Inputs are assumed canonical for this group.
    pub fn multiply(&self, g: &GroupElement, h: &GroupElement) -> GroupElement {
        let (a, b) = (&g.0, &h.0);
        match &self.kind {
            GroupKind::Lattice { .. } | GroupKind::Sublattice { .. } => {
                GroupElement(a.iter().zip(b).map(|(x, y)| x + y).collect())
            }
            GroupKind::Heisenberg => {
                GroupElement(vec![a[0] + b[0], a[1] + b[1], a[2] + b[2] + a[0] * b[1]])
            }
            GroupKind::Lamplighter => {
                let shift = a[0];
                let left = &a[1..];
                let right: Vec<i64> = b[1..].iter().map(|l| l + shift).collect();
                let mut coords = Vec::with_capacity(left.len() + right.len() + 1);
                coords.push(a[0] + b[0]);
                coords.extend(symmetric_difference(left, &right));
                GroupElement(coords)
            }
        }
    }

    pub fn invert(&self, g: &GroupElement) -> GroupElement {
        let a = &g.0;
        match &self.kind {
            GroupKind::Lattice { .. } | GroupKind::Sublattice { .. } => {
                GroupElement(a.iter().map(|x| -x).collect())
            }
            GroupKind::Heisenberg => GroupElement(vec![-a[0], -a[1], -a[2] + a[0] * a[1]]),
            GroupKind::Lamplighter => {
                let mut coords = Vec::with_capacity(a.len());
                coords.push(-a[0]);
                coords.extend(a[1..].iter().map(|l| l - a[0]));
                GroupElement(coords)
            }
        }
    }

    /// Checked product; rejects elements from another presentation.
    pub fn try_multiply(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        self.check(h)?;
        Ok(self.multiply(g, h))
    }

    pub fn try_invert(&self, g: &GroupElement) -> Result<GroupElement> {
        self.check(g)?;
        Ok(self.invert(g))
    }

    /// Coefficients of a sublattice element in the lattice basis.
    pub fn lattice_coefficients(&self, g: &GroupElement) -> Option<Vec<i64>> {
        match &self.kind {
            GroupKind::Sublattice { det, adj, .. } => {
                let mut out = Vec::with_capacity(adj.len());
                for row in adj {
                    let num: i64 = row.iter().zip(&g.0).map(|(a, x)| a * x).sum();
                    if num % det != 0 {
                        return None;
                    }
                    out.push(num / det);
                }
                Some(out)
            }
            GroupKind::Lattice { .. } => Some(g.0.clone()),
            _ => None,
        }
    }

    /// Word length `|x| = d_S(1, x)`.
    ///
    /// Lattices and sublattices use the closed-form l1 norm (in basis
    /// coefficients); other groups run a BFS bounded by `radius_cap`.
    pub fn word_length(&self, x: &GroupElement) -> Result<u32> {
        self.check(x)?;
        match &self.kind {
            GroupKind::Lattice { .. } | GroupKind::Sublattice { .. } => {
                let coeffs = self
                    .lattice_coefficients(x)
                    .ok_or_else(|| LabError::usage("element outside sublattice"))?;
                let len: i64 = coeffs.iter().map(|c| c.abs()).sum();
                if len > self.radius_cap as i64 {
                    return Err(LabError::CapExceeded {
                        element: x.to_string(),
                        cap: self.radius_cap,
                    });
                }
                Ok(len as u32)
            }
            _ => self.word_length_bfs(x),
        }
    }

    /// Word length by breadth-first search over generator moves.
    pub fn word_length_bfs(&self, x: &GroupElement) -> Result<u32> {
        let id = self.identity();
        if *x == id {
            return Ok(0);
        }
        let mut seen: HashSet<GroupElement> = HashSet::new();
        seen.insert(id.clone());
        let mut frontier = vec![id];
        for r in 1..=self.radius_cap {
            let mut next = Vec::new();
            for p in &frontier {
                for s in &self.generators {
                    let q = self.multiply(p, s);
                    if q == *x {
                        return Ok(r);
                    }
                    if seen.insert(q.clone()) {
                        next.push(q);
                    }
                }
            }
            if seen.len() > self.point_budget {
                break;
            }
            frontier = next;
        }
        Err(LabError::CapExceeded {
            element: x.to_string(),
            cap: self.radius_cap,
        })
    }

    /// Word-metric distance `d_S(x, y) = |x^{-1} y|`.
    pub fn distance(&self, x: &GroupElement, y: &GroupElement) -> Result<u32> {
        self.word_length(&self.multiply(&self.invert(x), y))
    }

    /// Ball `B(1, radius)`.
    pub fn ball(&self, radius: u32) -> Result<Ball> {
        enumerate_ball(self, &self.identity(), radius)
    }
}

fn symmetric_difference(a: &[i64], b: &[i64]) -> Vec<i64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Parses `[[2,0],[0,1]]`.
pub(crate) fn parse_int_matrix(text: &str) -> Result<Vec<Vec<i64>>> {
    let t = text.trim();
    let inner = t
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| LabError::Config(format!("bad matrix '{text}'")))?;
    let mut rows = Vec::new();
    for chunk in inner.split(']') {
        let chunk = chunk.trim_start_matches([',', ' ']).trim();
        if chunk.is_empty() {
            continue;
        }
        let body = chunk
            .strip_prefix('[')
            .ok_or_else(|| LabError::Config(format!("bad matrix row in '{text}'")))?;
        let row = body
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| LabError::Config(format!("bad integer in '{text}'")))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(LabError::Config(format!("empty matrix '{text}'")));
    }
    Ok(rows)
}

fn parse_sublattice(rest: &str) -> Result<Group> {
    // Optional "z^d:" ambient prefix, then "key=value" pairs; the basis value
    // itself contains commas, so it is located by its key.
    let mut rest = rest;
    let mut ambient: Option<usize> = None;
    if let Some(r) = rest.strip_prefix("z^") {
        let (dim, tail) = r.split_once(':').unwrap_or((r, ""));
        ambient = Some(
            dim.trim_start_matches("d:d=")
                .parse()
                .map_err(|_| LabError::Config(format!("bad ambient lattice in '{rest}'")))?,
        );
        rest = tail;
    }
    let basis_pos = rest
        .find("basis=")
        .ok_or_else(|| LabError::Config("sublattice spec needs basis=[[..]]".into()))?;
    let basis_text = &rest[basis_pos + "basis=".len()..];
    let end = matching_bracket(basis_text)
        .ok_or_else(|| LabError::Config("unbalanced basis brackets".into()))?;
    let basis = parse_int_matrix(&basis_text[..=end])?;
    let mut index: Option<i64> = None;
    let others = format!("{}{}", &rest[..basis_pos], &basis_text[end + 1..]);
    for kv in others.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match kv.split_once('=') {
            Some(("index", v)) => {
                index = Some(
                    v.parse()
                        .map_err(|_| LabError::Config(format!("bad index '{v}'")))?,
                )
            }
            _ => return Err(LabError::Config(format!("unknown sublattice field '{kv}'"))),
        }
    }
    let group = Group::sublattice(basis).map_err(|e| LabError::Config(e.to_string()))?;
    if let Some(d) = ambient {
        if d != group.coord_dim() {
            return Err(LabError::Config(format!(
                "basis dimension {} does not match ambient Z^{d}",
                group.coord_dim()
            )));
        }
    }
    if let (Some(idx), GroupKind::Sublattice { det, .. }) = (index, &group.kind) {
        if idx != det.abs() {
            return Err(LabError::Config(format!(
                "declared index {idx} but basis has index {}",
                det.abs()
            )));
        }
    }
    Ok(group)
}

fn matching_bracket(text: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (i, ch) in text.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Integer determinant by fraction-free (Bareiss) elimination.
pub(crate) fn int_det(m: &[Vec<i64>]) -> i64 {
    let n = m.len();
    if n == 0 {
        return 1;
    }
    let mut a: Vec<Vec<i128>> = m
        .iter()
        .map(|r| r.iter().map(|&v| v as i128).collect())
        .collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    (sign * a[n - 1][n - 1]) as i64
}

fn int_adjugate(m: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let n = m.len();
    if n == 1 {
        return vec![vec![1]];
    }
    let mut adj = vec![vec![0i64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let minor: Vec<Vec<i64>> = m
                .iter()
                .enumerate()
                .filter(|(r, _)| *r != i)
                .map(|(_, row)| {
                    row.iter()
                        .enumerate()
                        .filter(|(c, _)| *c != j)
                        .map(|(_, v)| *v)
                        .collect()
                })
                .collect();
            let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
            // adj = transpose of cofactor matrix
            adj[j][i] = sign * int_det(&minor);
        }
    }
    adj
}

/// A word-metric ball with points in BFS-then-lexicographic order.
///
/// Because points are ordered by distance from the center, the ball of any
/// smaller radius around the same center is a prefix of `points`.
#[derive(Clone, Debug)]
pub struct Ball {
    pub center: GroupElement,
    pub radius: u32,
    pub points: Vec<GroupElement>,
    /// `d_S(center, points[i])`.
    pub distances: Vec<u32>,
    /// `shell_end[r]` = number of points at distance `<= r`.
    pub shell_end: Vec<usize>,
    pub point_weight: f64,
    index: HashMap<GroupElement, usize>,
}

impl Ball {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index_of(&self, g: &GroupElement) -> Option<usize> {
        self.index.get(g).copied()
    }

    /// Number of points within distance `r` of the center.
    pub fn count_within(&self, r: u32) -> usize {
        self.shell_end[(r.min(self.radius)) as usize]
    }

    /// Haar measure of the ball, `|B| * (1/|S|)`.
    pub fn measure(&self) -> f64 {
        self.points.len() as f64 * self.point_weight
    }

    /// The concentric ball of radius `r <= self.radius`.
    pub fn sub_ball(&self, r: u32) -> Ball {
        let r = r.min(self.radius);
        let n = self.shell_end[r as usize];
        let points = self.points[..n].to_vec();
        let index = points.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        Ball {
            center: self.center.clone(),
            radius: r,
            points,
            distances: self.distances[..n].to_vec(),
            shell_end: self.shell_end[..=r as usize].to_vec(),
            point_weight: self.point_weight,
            index,
        }
    }
}

/// Enumerate `B(center, radius)` by breadth-first search over right
/// multiplication by generators, so `d(center, x s) <= d(center, x) + 1`.
pub fn enumerate_ball(group: &Group, center: &GroupElement, radius: u32) -> Result<Ball> {
    group.check(center)?;
    let mut index: HashMap<GroupElement, usize> = HashMap::new();
    let mut points = vec![center.clone()];
    let mut distances = vec![0u32];
    let mut shell_end = vec![1usize];
    index.insert(center.clone(), 0);
    let mut shell_start = 0usize;
    for r in 1..=radius {
        let mut shell: Vec<GroupElement> = Vec::new();
        let mut fresh: HashSet<GroupElement> = HashSet::new();
        for p in &points[shell_start..] {
            for s in &group.generators {
                let q = group.multiply(p, s);
                if !index.contains_key(&q) && fresh.insert(q.clone()) {
                    shell.push(q);
                }
            }
        }
        if points.len() + shell.len() > group.point_budget {
            return Err(LabError::Resource {
                message: format!(
                    "ball of radius {radius} in {} exceeds point budget {}",
                    group.name, group.point_budget
                ),
                largest_radius: r - 1,
            });
        }
        shell.sort_unstable();
        shell_start = points.len();
        for q in shell {
            index.insert(q.clone(), points.len());
            points.push(q);
            distances.push(r);
        }
        shell_end.push(points.len());
    }
    Ok(Ball {
        center: center.clone(),
        radius,
        points,
        distances,
        shell_end,
        point_weight: group.point_weight(),
        index,
    })
}

/// Shared handle to an enumerated ball.
pub type BallRef = Arc<Ball>;

/// Growth sequence and empirical doubling constant.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GrowthReport {
    pub group: String,
    pub r_max: u32,
    /// `|B(R)|` for `R = 0..=r_max` (raw counts).
    pub counts: Vec<usize>,
    /// `|B(R)| / |S|` (Haar units).
    pub haar_volumes: Vec<f64>,
    /// `|B(2R)| / |B(R)|` for `R = 1..=r_max/2`.
    pub doubling_ratios: Vec<f64>,
    /// Max of `doubling_ratios`.
    pub doubling_constant: f64,
    pub argmax_radius: u32,
    /// Ratio of the last doubling ratio to the one at half the range.
    pub ratio_trend: f64,
    /// `ratio_trend <= UNIFORM_DOUBLING_TREND`.
    pub uniform_doubling: bool,
}

/// Trend threshold above which the doubling ratio counts as growing with R.
pub const UNIFORM_DOUBLING_TREND: f64 = 1.25;

/// Growth sequence `|B(1)|..|B(R_max)|` and `D = max_{2R <= R_max} |B(2R)|/|B(R)|`.
pub fn doubling_constant(group: &Group, r_max: u32) -> Result<GrowthReport> {
    if r_max < 2 {
        return Err(LabError::usage("doubling_constant needs R_max >= 2"));
    }
    let ball = group.ball(r_max)?;
    let counts: Vec<usize> = (0..=r_max).map(|r| ball.count_within(r)).collect();
    let haar_volumes = counts.iter().map(|&c| c as f64 * group.point_weight()).collect();
    let doubling_ratios: Vec<f64> = (1..=r_max / 2)
        .map(|r| counts[(2 * r) as usize] as f64 / counts[r as usize] as f64)
        .collect();
    let (argmax, d) = doubling_ratios
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let last = *doubling_ratios.last().unwrap();
    let mid = doubling_ratios[(doubling_ratios.len() - 1) / 2];
    let ratio_trend = last / mid;
    Ok(GrowthReport {
        group: group.name.clone(),
        r_max,
        counts,
        haar_volumes,
        doubling_ratios,
        doubling_constant: d.max(1.0),
        argmax_radius: argmax as u32 + 1,
        ratio_trend,
        uniform_doubling: ratio_trend <= UNIFORM_DOUBLING_TREND,
    })
}
