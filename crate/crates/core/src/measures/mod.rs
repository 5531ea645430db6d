//! Finitely supported and Gaussian probability measures, couplings between
//! them, relative entropy, convex-order feasibility and discrete
//! max-covariance.

mod io;

pub use io::MeasureDocument;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{LinearProgram, Relation, Sense};

/// Atoms closer than this (Euclidean) are merged on construction.
pub const ATOM_MERGE_TOLERANCE: f64 = 1e-12;
/// Allowed deviation of the total mass from one.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// A finitely supported probability measure on R^d.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    dim: usize,
    /// Row-major `len × dim` atom coordinates.
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from atoms and strictly positive weights summing to one.
    /// Atoms within [`ATOM_MERGE_TOLERANCE`] of an earlier atom are merged into it.
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let dim = atoms.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = atoms.iter().position(|a| a.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                found: atoms[bad].len(),
            });
        }
        let flat = atoms.into_iter().flatten().collect();
        Self::from_flat(dim, flat, weights)
    }

    pub fn from_flat(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be positive".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("measure has no atoms".into()));
        }
        if atoms.len() != dim * weights.len() {
            return Err(Error::Shape(format!(
                "{} coordinates for {} atoms in dimension {dim}",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidMeasure(format!(
                "weight {i} is not strictly positive: {}",
                weights[i]
            )));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite atom coordinate".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, not 1"
            )));
        }

        let mut merged_atoms: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut merged_weights: Vec<f64> = Vec::with_capacity(weights.len());
        for (i, &w) in weights.iter().enumerate() {
            let a = &atoms[i * dim..(i + 1) * dim];
            let existing = (0..merged_weights.len()).find(|&k| {
                distance(&merged_atoms[k * dim..(k + 1) * dim], a) <= ATOM_MERGE_TOLERANCE
            });
            match existing {
                Some(k) => merged_weights[k] += w,
                None => {
                    merged_atoms.extend_from_slice(a);
                    merged_weights.push(w);
                }
            }
        }
        Ok(Self {
            dim,
            atoms: merged_atoms,
            weights: merged_weights,
        })
    }

    pub fn one_dimensional(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        Self::from_flat(1, atoms.to_vec(), weights.to_vec())
    }

    pub fn dirac(point: &[f64]) -> Self {
        Self {
            dim: point.len(),
            atoms: point.to_vec(),
            weights: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms_flat(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = &[f64]> {
        self.atoms.chunks_exact(self.dim)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.atoms().zip(self.weights.iter().copied())
    }

    /// Index of the atom within `tol` of `point`, if any.
    pub fn find_atom(&self, point: &[f64], tol: f64) -> Option<usize> {
        self.atoms().position(|a| distance(a, point) <= tol)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for (a, w) in self.iter() {
            for (m, x) in mean.iter_mut().zip(a) {
                *m += w * x;
            }
        }
        mean
    }

    pub fn moments(&self) -> Moments {
        let mean = self.mean();
        let mut second_moment = 0.0;
        let mut covariance = DMatrix::zeros(self.dim, self.dim);
        for (a, w) in self.iter() {
            second_moment += w * dot(a, a);
            for r in 0..self.dim {
                for c in 0..self.dim {
                    covariance[(r, c)] += w * (a[r] - mean[r]) * (a[c] - mean[c]);
                }
            }
        }
        Moments {
            mean,
            second_moment,
            covariance,
        }
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        assert_eq!(shift.len(), self.dim);
        let atoms = self
            .atoms
            .chunks_exact(self.dim)
            .flat_map(|a| a.iter().zip(shift).map(|(x, s)| x + s))
            .collect();
        Self {
            dim: self.dim,
            atoms,
            weights: self.weights.clone(),
        }
    }

    /// True when both measures have the same atoms in the same order.
    pub fn same_support(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.len() == other.len()
            && self
                .atoms()
                .zip(other.atoms())
                .all(|(a, b)| distance(a, b) <= ATOM_MERGE_TOLERANCE)
    }

    /// H(self | reference) for two measures on the same atoms.
    pub fn relative_entropy(&self, reference: &Self) -> Result<Entropy> {
        if !self.same_support(reference) {
            return Err(Error::Shape(
                "relative entropy needs measures on identical atoms".into(),
            ));
        }
        relative_entropy(&self.weights, &reference.weights)
    }
}

/// Mean vector, second moment ∫|x|² and covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub second_moment: f64,
    pub covariance: DMatrix<f64>,
}

pub fn barycenter_and_moments(p: &DiscreteMeasure) -> Moments {
    p.moments()
}

/// A Gaussian law N(mean, covariance) with positive-definite covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    mean: Vec<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || !covariance.is_square() {
            return Err(Error::Shape(format!(
                "covariance is {}x{} for a mean of length {}",
                covariance.nrows(),
                covariance.ncols(),
                mean.len()
            )));
        }
        if !linalg::is_symmetric(&covariance, 1e-12) {
            return Err(Error::InvalidMeasure("covariance is not symmetric".into()));
        }
        let (values, _) = linalg::sym_eigen(&covariance);
        if values.iter().any(|v| *v <= 0.0) {
            return Err(Error::InvalidMeasure(
                "covariance is not positive definite".into(),
            ));
        }
        Ok(Self { mean, covariance })
    }

    pub fn centered(covariance: DMatrix<f64>) -> Result<Self> {
        let d = covariance.nrows();
        Self::new(vec![0.0; d], covariance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }
}

/// Relative entropy with a distinguished infinite value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Entropy {
    Finite(f64),
    Infinite,
}

impl Entropy {
    pub fn is_finite(&self) -> bool {
        matches!(self, Entropy::Finite(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Entropy::Finite(v) => Some(*v),
            Entropy::Infinite => None,
        }
    }

    pub fn finite(self, what: &str) -> Result<f64> {
        self.value()
            .ok_or_else(|| Error::InfiniteEntropy(what.to_string()))
    }
}

/// Σ p_i log(p_i / q_i) with 0·log 0 = 0; infinite when some p_i > 0 has q_i = 0.
pub fn relative_entropy(p: &[f64], q: &[f64]) -> Result<Entropy> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "relative entropy of vectors of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut h = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Ok(Entropy::Infinite);
        }
        h += pi * (pi / qi).ln();
    }
    Ok(Entropy::Finite(h))
}

/// A joint weight matrix over supp(source) × supp(target).
///
/// The martingale property is a predicate ([`Coupling::martingale_residual`]),
/// not an invariant, so solver iterates can be represented too.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coupling {
    source: DiscreteMeasure,
    target: DiscreteMeasure,
    /// Row-major, rows indexed by source atoms.
    weights: Vec<f64>,
}

/// A coupling expected to satisfy the conditional-barycenter constraint.
pub type MartingaleCoupling = Coupling;

impl Coupling {
    pub fn new(source: DiscreteMeasure, target: DiscreteMeasure, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != source.len() * target.len() {
            return Err(Error::Shape(format!(
                "{} weights for a {}x{} coupling",
                weights.len(),
                source.len(),
                target.len()
            )));
        }
        if let Some(v) = weights.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidMeasure(format!(
                "coupling weight {v} is negative or not finite"
            )));
        }
        Ok(Self {
            source,
            target,
            weights,
        })
    }

    pub fn from_rows(source: DiscreteMeasure, target: DiscreteMeasure, rows: &[Vec<f64>]) -> Result<Self> {
        let flat = rows.iter().flatten().copied().collect();
        Self::new(source, target, flat)
    }

    pub fn product(source: &DiscreteMeasure, target: &DiscreteMeasure) -> Self {
        let weights = source
            .weights()
            .iter()
            .flat_map(|a| target.weights().iter().map(move |b| a * b))
            .collect();
        Self {
            source: source.clone(),
            target: target.clone(),
            weights,
        }
    }

    pub fn source(&self) -> &DiscreteMeasure {
        &self.source
    }

    pub fn target(&self) -> &DiscreteMeasure {
        &self.target
    }

    pub fn rows(&self) -> usize {
        self.source.len()
    }

    pub fn cols(&self) -> usize {
        self.target.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.cols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.cols();
        &self.weights[i * k..(i + 1) * k]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks_exact(self.cols()).map(<[f64]>::to_vec).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows()).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut cols = vec![0.0; self.cols()];
        for i in 0..self.rows() {
            for (c, v) in cols.iter_mut().zip(self.row(i)) {
                *c += v;
            }
        }
        cols
    }

    /// Largest absolute deviation of a row or column sum from its marginal weight.
    pub fn marginal_residual(&self) -> f64 {
        let rows = self
            .row_sums()
            .iter()
            .zip(self.source.weights())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let cols = self.column_residual_max();
        rows.max(cols)
    }

    fn column_residual_max(&self) -> f64 {
        self.column_sums()
            .iter()
            .zip(self.target.weights())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Σ_j |column sum_j − ν_j|.
    pub fn column_l1_residual(&self) -> f64 {
        self.column_sums()
            .iter()
            .zip(self.target.weights())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// max_i |Σ_j m_ij (y_j − x_i)| / μ_i.
    pub fn martingale_residual(&self) -> f64 {
        let d = self.source.dim();
        (0..self.rows())
            .map(|i| {
                let x = self.source.atom(i);
                let mut drift = vec![0.0; d];
                for (j, m) in self.row(i).iter().enumerate() {
                    let y = self.target.atom(j);
                    for k in 0..d {
                        drift[k] += m * (y[k] - x[k]);
                    }
                }
                norm(&drift) / self.source.weights()[i]
            })
            .fold(0.0, f64::max)
    }

    pub fn is_martingale(&self, tol: f64) -> bool {
        self.marginal_residual() < tol && self.martingale_residual() < tol
    }

    /// Normalised row i: the conditional law of the target given source atom i.
    pub fn conditional(&self, i: usize) -> Vec<f64> {
        let row = self.row(i);
        let s: f64 = row.iter().sum();
        row.iter().map(|v| v / s).collect()
    }

    /// H(m | μ⊗ν) against the product of the declared marginals.
    pub fn entropy_against_product(&self) -> Entropy {
        let reference: Vec<f64> = Self::product(&self.source, &self.target).weights;
        relative_entropy(&self.weights, &reference).expect("shapes agree by construction")
    }

    /// Σ m_ij x_i·y_j.
    pub fn cross_moment(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.rows() {
            let x = self.source.atom(i);
            for (j, m) in self.row(i).iter().enumerate() {
                total += m * dot(x, self.target.atom(j));
            }
        }
        total
    }
}

#[derive(Debug, Clone)]
pub struct ConvexOrderCheck {
    pub in_convex_order: bool,
    /// A feasible martingale coupling when `in_convex_order`.
    pub witness: Option<MartingaleCoupling>,
}

/// Decides μ ⪯c ν by feasibility of the martingale-coupling linear system.
pub fn check_convex_order(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ConvexOrderCheck> {
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let d = mu.dim();
    let (n, k) = (mu.len(), nu.len());
    let mean_gap = norm(
        &mu.mean()
            .iter()
            .zip(nu.mean())
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    let scale = 1.0 + nu.atoms_flat().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if mean_gap > 1e-9 * scale {
        return Ok(ConvexOrderCheck {
            in_convex_order: false,
            witness: None,
        });
    }

    let var = |i: usize, j: usize| i * k + j;
    let mut lp = LinearProgram::new(Sense::Minimize, n * k);
    for i in 0..n {
        lp.add_constraint((0..k).map(|j| (var(i, j), 1.0)).collect(), Relation::Eq, mu.weights()[i]);
    }
    for j in 0..k {
        lp.add_constraint((0..n).map(|i| (var(i, j), 1.0)).collect(), Relation::Eq, nu.weights()[j]);
    }
    for i in 0..n {
        let x = mu.atom(i);
        for c in 0..d {
            let coeffs = (0..k)
                .map(|j| (var(i, j), nu.atom(j)[c] - x[c]))
                .collect();
            lp.add_constraint(coeffs, Relation::Eq, 0.0);
        }
    }
    match lp.solve() {
        Ok(sol) => {
            let witness = Coupling::new(mu.clone(), nu.clone(), sol.values)?;
            Ok(ConvexOrderCheck {
                in_convex_order: true,
                witness: Some(witness),
            })
        }
        Err(Error::LinearProgram(msg)) if msg.starts_with("infeasible") => Ok(ConvexOrderCheck {
            in_convex_order: false,
            witness: None,
        }),
        Err(e) => Err(e),
    }
}

/// MCov(α, β) = sup over couplings of ∫ x·y. Uses the comonotone pairing in
/// one dimension and the transport linear program otherwise.
pub fn mcov_discrete(alpha: &DiscreteMeasure, beta: &DiscreteMeasure) -> Result<(f64, Coupling)> {
    if alpha.dim() != beta.dim() {
        return Err(Error::Dimension {
            expected: alpha.dim(),
            found: beta.dim(),
        });
    }
    if alpha.dim() == 1 {
        Ok(mcov_comonotone(alpha, beta))
    } else {
        mcov_linear_program(alpha, beta)
    }
}

fn mcov_comonotone(alpha: &DiscreteMeasure, beta: &DiscreteMeasure) -> (f64, Coupling) {
    let order = |m: &DiscreteMeasure| {
        let mut idx: Vec<usize> = (0..m.len()).collect();
        idx.sort_by(|&a, &b| m.atom(a)[0].total_cmp(&m.atom(b)[0]));
        idx
    };
    let (ia, ib) = (order(alpha), order(beta));
    let k = beta.len();
    let mut weights = vec![0.0; alpha.len() * k];
    let (mut p, mut q) = (0usize, 0usize);
    let mut ra = alpha.weights()[ia[0]];
    let mut rb = beta.weights()[ib[0]];
    while p < ia.len() && q < ib.len() {
        let mass = ra.min(rb);
        weights[ia[p] * k + ib[q]] += mass;
        if ra <= rb {
            rb -= ra;
            p += 1;
            if p < ia.len() {
                ra = alpha.weights()[ia[p]];
            }
        } else {
            ra -= rb;
            q += 1;
            if q < ib.len() {
                rb = beta.weights()[ib[q]];
            }
        }
    }
    let coupling = Coupling {
        source: alpha.clone(),
        target: beta.clone(),
        weights,
    };
    (coupling.cross_moment(), coupling)
}

/// MCov through the discrete optimal-transport linear program (any dimension).
pub fn mcov_linear_program(alpha: &DiscreteMeasure, beta: &DiscreteMeasure) -> Result<(f64, Coupling)> {
    let (n, k) = (alpha.len(), beta.len());
    let mut lp = LinearProgram::new(Sense::Maximize, n * k);
    for i in 0..n {
        for j in 0..k {
            lp.set_objective(i * k + j, dot(alpha.atom(i), beta.atom(j)));
        }
    }
    for i in 0..n {
        lp.add_constraint((0..k).map(|j| (i * k + j, 1.0)).collect(), Relation::Eq, alpha.weights()[i]);
    }
    for j in 0..k {
        lp.add_constraint((0..n).map(|i| (i * k + j, 1.0)).collect(), Relation::Eq, beta.weights()[j]);
    }
    let sol = lp.solve()?;
    let coupling = Coupling::new(alpha.clone(), beta.clone(), sol.values)?;
    Ok((coupling.cross_moment(), coupling))
}

/// Both sides of H(m|μ⊗ν) + H(ν|γ) = H(m|μ·γ) + m₂(μ)/2, with the Gaussian
/// reference terms scored by the standard normal density at the atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

pub fn gaussian_reference_identity_check(m: &MartingaleCoupling, nu: &DiscreteMeasure) -> Result<ReferenceIdentity> {
    if !m.target().same_support(nu) {
        return Err(Error::Shape("coupling target differs from nu".into()));
    }
    let mu = m.source();
    let log_gauss = |z: &[f64]| -0.5 * dot(z, z) - 0.5 * z.len() as f64 * (2.0 * std::f64::consts::PI).ln();
    let h_product = relative_entropy(m.weights(), Coupling::product(mu, nu).weights())?
        .finite("H(m | mu x nu)")?;
    let h_nu_gamma: f64 = nu
        .iter()
        .map(|(y, w)| w * (w.ln() - log_gauss(y)))
        .sum();
    let mut h_kernel = 0.0;
    for i in 0..m.rows() {
        let x = mu.atom(i);
        for (j, &mij) in m.row(i).iter().enumerate() {
            if mij <= 0.0 {
                continue;
            }
            let y = nu.atom(j);
            let diff: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
            h_kernel += mij * (mij.ln() - mu.weights()[i].ln() - log_gauss(&diff));
        }
    }
    let lhs = h_product + h_nu_gamma;
    let rhs = h_kernel + 0.5 * mu.moments().second_moment;
    Ok(ReferenceIdentity {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m1(atoms: &[f64], weights: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::one_dimensional(atoms, weights).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let p = [0.5, 0.5];
        assert_eq!(relative_entropy(&p, &p).unwrap(), Entropy::Finite(0.0));
        let h = relative_entropy(&p, &[0.25, 0.75]).unwrap().value().unwrap();
        // 0.5 log 2 + 0.5 log(2/3), summed by hand.
        assert!((h - 0.143_841_036_225_890_2).abs() < 1e-15);
        assert_eq!(relative_entropy(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), Entropy::Infinite);
        assert!(matches!(relative_entropy(&p, &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn moments_examples() {
        let m = m1(&[-1.0, 1.0], &[0.5, 0.5]).moments();
        assert_eq!(m.mean, vec![0.0]);
        assert_eq!(m.second_moment, 1.0);
        let m = DiscreteMeasure::dirac(&[3.0, -2.0]).moments();
        assert_eq!(m.mean, vec![3.0, -2.0]);
        assert_eq!(m.covariance, DMatrix::zeros(2, 2));
        let m = m1(&[-2.0, 0.0, 2.0], &[0.25, 0.5, 0.25]).moments();
        assert_eq!(m.mean, vec![0.0]);
        assert_eq!(m.second_moment, 2.0);
    }

    #[test]
    fn construction_validates_and_merges() {
        assert!(DiscreteMeasure::one_dimensional(&[0.0, 1.0], &[0.5, 0.6]).is_err());
        assert!(DiscreteMeasure::one_dimensional(&[0.0, 1.0], &[1.0, 0.0]).is_err());
        let m = m1(&[0.0, 1.0, 1e-14], &[0.25, 0.5, 0.25]);
        assert_eq!(m.len(), 2);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![0.0, 1.0]], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn convex_order_examples() {
        let nu = m1(&[-1.0, 1.0], &[0.5, 0.5]);
        let same = check_convex_order(&nu, &nu).unwrap();
        assert!(same.in_convex_order);
        assert!(same.witness.unwrap().martingale_residual() < 1e-9);

        let dirac = m1(&[0.0], &[1.0]);
        let c = check_convex_order(&dirac, &nu).unwrap();
        assert!(c.in_convex_order);
        let w = c.witness.unwrap();
        assert!((w.get(0, 0) - 0.5).abs() < 1e-14 && (w.get(0, 1) - 0.5).abs() < 1e-14);

        assert!(!check_convex_order(&nu, &dirac).unwrap().in_convex_order);
        // equal means, smaller spread in the target
        let wide = m1(&[-2.0, 2.0], &[0.5, 0.5]);
        assert!(!check_convex_order(&wide, &nu).unwrap().in_convex_order);
        let two_d = DiscreteMeasure::dirac(&[0.0, 0.0]);
        assert!(matches!(check_convex_order(&dirac, &two_d), Err(Error::Dimension { .. })));
    }

    #[test]
    fn convex_order_witness_paper_instance() {
        let mu = m1(&[-1.0, 0.0, 1.0], &[0.40, 0.46, 0.14]);
        let nu = m1(&[-2.0, 0.0, 2.0], &[0.43, 0.27, 0.30]);
        let c = check_convex_order(&mu, &nu).unwrap();
        let w = c.witness.unwrap();
        assert!(w.marginal_residual() < 1e-12);
        assert!(w.martingale_residual() < 1e-9);
    }

    #[test]
    fn mcov_examples() {
        let beta = m1(&[-1.0, 0.5, 3.0], &[0.2, 0.5, 0.3]);
        let (v, _) = mcov_discrete(&m1(&[2.0], &[1.0]), &beta).unwrap();
        assert!((v - 2.0 * beta.mean()[0]).abs() < 1e-14);
        let (v, c) = mcov_discrete(&m1(&[-1.0, 1.0], &[0.5, 0.5]), &m1(&[2.0, -2.0], &[0.5, 0.5])).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        assert_eq!(c.get(0, 1), 0.5);
        let (v, _) = mcov_discrete(&beta, &beta).unwrap();
        assert!((v - beta.moments().second_moment).abs() < 1e-14);
    }

    #[test]
    fn mcov_two_dimensional_uses_lp() {
        let a = DiscreteMeasure::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.5]).unwrap();
        let b = DiscreteMeasure::new(vec![vec![0.0, 2.0], vec![2.0, 0.0]], vec![0.5, 0.5]).unwrap();
        let (v, c) = mcov_discrete(&a, &b).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        assert_eq!(c.get(0, 1), 0.5);
    }

    #[test]
    fn reference_identity_dirac_start() {
        let mu = m1(&[0.0], &[1.0]);
        let nu = m1(&[-1.0, 0.5, 2.0], &[0.3, 0.5, 0.2]);
        let nu = nu.translated(&[-nu.mean()[0]]);
        let m = Coupling::product(&mu, &nu);
        let r = gaussian_reference_identity_check(&m, &nu).unwrap();
        assert!(r.residual < 1e-12);
    }

    proptest! {
        #[test]
        fn entropy_is_jointly_convex(
            raw in proptest::collection::vec((0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0), 2..8)
        ) {
            let norm = |v: Vec<f64>| { let s: f64 = v.iter().sum(); v.into_iter().map(|x| x / s).collect::<Vec<_>>() };
            let p1 = norm(raw.iter().map(|t| t.0).collect());
            let p2 = norm(raw.iter().map(|t| t.1).collect());
            let q1 = norm(raw.iter().map(|t| t.2).collect());
            let q2 = norm(raw.iter().map(|t| t.3).collect());
            let mid = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect::<Vec<_>>();
            let h = |a: &[f64], b: &[f64]| relative_entropy(a, b).unwrap().value().unwrap();
            let lhs = h(&mid(&p1, &p2), &mid(&q1, &q2));
            let rhs = 0.5 * h(&p1, &q1) + 0.5 * h(&p2, &q2);
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn comonotone_matches_lp(
            xs in proptest::collection::vec(-3.0f64..3.0, 1..6),
            ys in proptest::collection::vec(-3.0f64..3.0, 1..6),
            wa in proptest::collection::vec(0.05f64..1.0, 6),
            wb in proptest::collection::vec(0.05f64..1.0, 6),
        ) {
            let mk = |x: &[f64], w: &[f64]| {
                let w = &w[..x.len()];
                let s: f64 = w.iter().sum();
                DiscreteMeasure::one_dimensional(x, &w.iter().map(|v| v / s).collect::<Vec<_>>()).unwrap()
            };
            let (a, b) = (mk(&xs, &wa), mk(&ys, &wb));
            let (v1, c1) = mcov_discrete(&a, &b).unwrap();
            let (v2, _) = mcov_linear_program(&a, &b).unwrap();
            prop_assert!((v1 - v2).abs() < 1e-10, "{} vs {}", v1, v2);
            prop_assert!(c1.marginal_residual() < 1e-12);
        }
    }
}
