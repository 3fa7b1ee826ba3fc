//! Sparse multivariate polynomials over group coordinates.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::group::{Group, GroupElement, GroupKind};

/// `sum c_alpha x^alpha`, keyed by exponent vectors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MultiPoly {
    pub nvars: usize,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl MultiPoly {
    pub fn zero(nvars: usize) -> Self {
        MultiPoly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        if c != 0.0 {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn monomial(exps: Vec<u32>) -> Self {
        let nvars = exps.len();
        let mut terms = BTreeMap::new();
        terms.insert(exps, 1.0);
        MultiPoly { nvars, terms }
    }

    pub fn variable(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(e)
    }

    pub fn add_scaled(&mut self, other: &MultiPoly, scale: f64) {
        for (e, c) in &other.terms {
            let entry = self.terms.entry(e.clone()).or_insert(0.0);
            *entry += scale * c;
        }
        self.terms.retain(|_, c| *c != 0.0);
    }

    pub fn mul(&self, other: &MultiPoly) -> MultiPoly {
        let mut out = MultiPoly::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                *out.terms.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    pub fn coefficient(&self, exps: &[u32]) -> f64 {
        self.terms.get(exps).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(&k, &v)| v.powi(k as i32)).product::<f64>())
            .sum()
    }

    /// Substitute `x_i -> subs[i]`.
    pub fn compose(&self, subs: &[MultiPoly]) -> MultiPoly {
        let nvars = subs.first().map_or(self.nvars, |s| s.nvars);
        let mut powers: Vec<Vec<MultiPoly>> = subs
            .iter()
            .map(|s| vec![MultiPoly::constant(nvars, 1.0), s.clone()])
            .collect();
        let mut out = MultiPoly::zero(nvars);
        for (e, c) in &self.terms {
            let mut term = MultiPoly::constant(nvars, *c);
            for (i, &k) in e.iter().enumerate() {
                while powers[i].len() <= k as usize {
                    let next = powers[i].last().unwrap().mul(&subs[i]);
                    powers[i].push(next);
                }
                term = term.mul(&powers[i][k as usize]);
            }
            out.add_scaled(&term, 1.0);
        }
        out
    }

    /// Drop coefficients below `tol` and snap near-integers.
    pub fn cleaned(mut self, tol: f64) -> Self {
        for c in self.terms.values_mut() {
            let r = c.round();
            if (*c - r).abs() < tol {
                *c = r;
            }
        }
        self.terms.retain(|_, c| c.abs() > tol);
        self
    }
}

const VAR_NAMES: [&str; 6] = ["x", "y", "z", "w", "u", "v"];

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in self.terms.iter().rev() {
            let mono: String = e
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(i, &k)| {
                    let name = VAR_NAMES.get(i).map_or_else(|| format!("x{i}"), |s| s.to_string());
                    if k == 1 { name } else { format!("{name}^{k}") }
                })
                .collect::<Vec<_>>()
                .join("*");
            let sign = if *c < 0.0 { "-" } else if first { "" } else { "+" };
            let mag = c.abs();
            let body = match (mono.is_empty(), mag == 1.0) {
                (true, _) => format!("{mag}"),
                (false, true) => mono,
                (false, false) => format!("{mag}*{mono}"),
            };
            if first {
                write!(f, "{sign}{body}")?;
            } else {
                write!(f, " {sign} {body}")?;
            }
            first = false;
        }
        Ok(())
    }
}

impl Serialize for MultiPoly {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Growth weight of each coordinate: Heisenberg `z` counts twice.
pub fn coordinate_weights(group: &Group) -> Option<Vec<u32>> {
    match &group.kind {
        GroupKind::Lattice { dim } => Some(vec![1; *dim]),
        GroupKind::Sublattice { basis, .. } => Some(vec![1; basis.len()]),
        GroupKind::Heisenberg => Some(vec![1, 1, 2]),
        GroupKind::Lamplighter => None,
    }
}

/// Exponent vectors of weighted degree `<= k`, ordered by descending degree
/// and then descending lexicographic order (`x^2, xy, y^2, x, y, 1`).
pub fn monomial_exponents(weights: &[u32], k: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; weights.len()];
    fn rec(i: usize, budget: u32, weights: &[u32], cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == weights.len() {
            out.push(cur.clone());
            return;
        }
        let mut e = 0;
        while e * weights[i] <= budget {
            cur[i] = e;
            rec(i + 1, budget - e * weights[i], weights, cur, out);
            e += 1;
        }
        cur[i] = 0;
    }
    rec(0, k, weights, &mut cur, &mut out);
    let deg = |e: &Vec<u32>| e.iter().zip(weights).map(|(a, w)| a * w).sum::<u32>();
    out.sort_by(|a, b| deg(b).cmp(&deg(a)).then_with(|| b.cmp(a)));
    out
}

/// Coordinates after right multiplication by `s`, as polynomials in the old ones.
pub fn right_translation(group: &Group, s: &GroupElement) -> Option<Vec<MultiPoly>> {
    let c = s.coords();
    match &group.kind {
        GroupKind::Lattice { .. } | GroupKind::Sublattice { .. } => {
            let n = c.len();
            Some(
                (0..n)
                    .map(|i| {
                        let mut p = MultiPoly::variable(n, i);
                        p.add_scaled(&MultiPoly::constant(n, c[i] as f64), 1.0);
                        p
                    })
                    .collect(),
            )
        }
        GroupKind::Heisenberg => {
            // (x,y,z)(a,b,c) = (x+a, y+b, z+c+x b)
            let mut x = MultiPoly::variable(3, 0);
            x.add_scaled(&MultiPoly::constant(3, c[0] as f64), 1.0);
            let mut y = MultiPoly::variable(3, 1);
            y.add_scaled(&MultiPoly::constant(3, c[1] as f64), 1.0);
            let mut z = MultiPoly::variable(3, 2);
            z.add_scaled(&MultiPoly::constant(3, c[2] as f64), 1.0);
            z.add_scaled(&MultiPoly::variable(3, 0), c[1] as f64);
            Some(vec![x, y, z])
        }
        GroupKind::Lamplighter => None,
    }
}

pub fn coords_f64(g: &GroupElement) -> Vec<f64> {
    g.coords().iter().map(|&v| v as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_order_and_count() {
        let m = monomial_exponents(&[1, 1], 2);
        assert_eq!(m, vec![vec![2, 0], vec![1, 1], vec![0, 2], vec![1, 0], vec![0, 1], vec![0, 0]]);
        assert_eq!(monomial_exponents(&[1, 1, 2], 2).len(), 7);
        assert_eq!(monomial_exponents(&[1], 3).len(), 4);
    }

    #[test]
    fn compose_matches_pointwise_product() {
        let h = Group::heisenberg();
        let s = GroupElement::new(vec![2, -1, 3]);
        let subs = right_translation(&h, &s).unwrap();
        let p = MultiPoly::monomial(vec![1, 0, 1]); // x z
        let q = p.compose(&subs);
        for x in [vec![1, 2, 3], vec![-4, 0, 5], vec![3, -3, -1]] {
            let g = GroupElement::new(x.clone());
            let moved = h.multiply(&g, &s);
            assert_eq!(q.eval(&coords_f64(&g)), p.eval(&coords_f64(&moved)));
        }
    }

    #[test]
    fn display_is_readable() {
        let mut p = MultiPoly::monomial(vec![2, 0]);
        p.add_scaled(&MultiPoly::monomial(vec![0, 2]), -1.0);
        assert_eq!(p.to_string(), "x^2 - y^2");
    }
}
