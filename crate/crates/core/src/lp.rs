//! Dense two-phase simplex for the small linear programs used across the crate
//! (convex-order feasibility, discrete max-covariance, relative-interior tests,
//! Chebyshev centers).
//!
//! All variables are non-negative. After the simplex terminates, the basic
//! solution is recomputed from the original constraint matrix with an LU solve,
//! which removes the drift accumulated by tableau updates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
struct Constraint {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
}

/// A linear program over non-negative variables.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    sense: Sense,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective: f64,
}

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-11;

impl LinearProgram {
    pub fn new(sense: Sense, n_vars: usize) -> Self {
        Self {
            sense,
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.objective.len()));
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.objective.len();
        let m = self.constraints.len();
        let n_slack = self
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        let n_struct = n + n_slack;
        let n_cols = n_struct + m;
        let rhs_col = n_cols;

        // Equality-form rows [A | S | I_art | b] with b >= 0.
        let mut a_eq = DMatrix::<f64>::zeros(m, n_struct);
        let mut b = DVector::<f64>::zeros(m);
        let mut slack = n;
        for (i, c) in self.constraints.iter().enumerate() {
            for &(j, v) in &c.coeffs {
                a_eq[(i, j)] += v;
            }
            match c.relation {
                Relation::Le => {
                    a_eq[(i, slack)] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    a_eq[(i, slack)] = -1.0;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            b[i] = c.rhs;
            if b[i] < 0.0 {
                b[i] = -b[i];
                for j in 0..n_struct {
                    a_eq[(i, j)] = -a_eq[(i, j)];
                }
            }
        }

        let mut tab = vec![vec![0.0; n_cols + 1]; m];
        for i in 0..m {
            for j in 0..n_struct {
                tab[i][j] = a_eq[(i, j)];
            }
            tab[i][n_struct + i] = 1.0;
            tab[i][rhs_col] = b[i];
        }
        let mut basis: Vec<usize> = (n_struct..n_cols).collect();
        let mut active = vec![true; m];
        let scale = 1.0 + b.iter().map(|v| v.abs()).sum::<f64>();
        let max_iter = 200 * (m + n_cols) + 1000;

        // Phase 1: minimise the sum of artificials.
        let mut cost1 = vec![0.0; n_cols];
        for c in cost1.iter_mut().skip(n_struct) {
            *c = 1.0;
        }
        let allowed1: Vec<bool> = vec![true; n_cols];
        run_simplex(&mut tab, &mut basis, &active, &cost1, &allowed1, max_iter)?;
        let infeasibility: f64 = (0..m)
            .filter(|&i| active[i] && basis[i] >= n_struct)
            .map(|i| tab[i][rhs_col])
            .sum();
        if infeasibility > 1e-9 * scale {
            return Err(Error::LinearProgram(format!(
                "infeasible (phase-one residual {infeasibility:.3e})"
            )));
        }

        // Drive remaining artificials out of the basis or drop redundant rows.
        for i in 0..m {
            if basis[i] < n_struct {
                continue;
            }
            let entering = (0..n_struct)
                .filter(|&j| !basis.contains(&j))
                .max_by(|&p, &q| tab[i][p].abs().total_cmp(&tab[i][q].abs()))
                .filter(|&j| tab[i][j].abs() > 1e-9);
            match entering {
                Some(j) => pivot(&mut tab, &mut basis, &active, i, j),
                None => active[i] = false,
            }
        }

        // Phase 2 on the structural columns.
        let mut cost2 = vec![0.0; n_cols];
        let sign = match self.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        for j in 0..n {
            cost2[j] = sign * self.objective[j];
        }
        let mut allowed2 = vec![true; n_cols];
        for a in allowed2.iter_mut().skip(n_struct) {
            *a = false;
        }
        run_simplex(&mut tab, &mut basis, &active, &cost2, &allowed2, max_iter)?;

        let mut x = vec![0.0; n_struct];
        for i in 0..m {
            if active[i] && basis[i] < n_struct {
                x[basis[i]] = tab[i][rhs_col];
            }
        }
        if let Some(refined) = refine_basic_solution(&a_eq, &b, &basis, &active, n_struct) {
            x = refined;
        }
        for v in x.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let values = x[..n].to_vec();
        let objective = values
            .iter()
            .zip(&self.objective)
            .map(|(v, c)| v * c)
            .sum();
        Ok(LpSolution { values, objective })
    }
}

fn run_simplex(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    active: &[bool],
    cost: &[f64],
    allowed: &[bool],
    max_iter: usize,
) -> Result<()> {
    let m = tab.len();
    let n_cols = cost.len();
    let rhs_col = n_cols;
    let mut degenerate_run = 0usize;
    for _ in 0..max_iter {
        // Reduced costs r_j = c_j - c_B^T T_j.
        let mut best: Option<(usize, f64)> = None;
        let bland = degenerate_run > 50;
        for j in 0..n_cols {
            if !allowed[j] || basis.contains(&j) {
                continue;
            }
            let mut r = cost[j];
            for i in 0..m {
                if active[i] {
                    r -= cost[basis[i]] * tab[i][j];
                }
            }
            if r < -COST_EPS {
                match best {
                    None => best = Some((j, r)),
                    Some((_, rb)) if !bland && r < rb => best = Some((j, r)),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
        }
        let Some((entering, _)) = best else {
            return Ok(());
        };
        let mut leaving: Option<(usize, f64)> = None;
        for i in 0..m {
            if !active[i] || tab[i][entering] <= PIVOT_EPS {
                continue;
            }
            let ratio = tab[i][rhs_col] / tab[i][entering];
            match leaving {
                None => leaving = Some((i, ratio)),
                Some((l, best_ratio)) => {
                    if ratio < best_ratio - 1e-14
                        || (ratio <= best_ratio + 1e-14 && basis[i] < basis[l])
                    {
                        leaving = Some((i, ratio));
                    }
                }
            }
        }
        let Some((row, ratio)) = leaving else {
            return Err(Error::LinearProgram("unbounded".into()));
        };
        if ratio.abs() < 1e-14 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        pivot(tab, basis, active, row, entering);
    }
    Err(Error::LinearProgram(format!(
        "iteration limit {max_iter} reached"
    )))
}

fn pivot(tab: &mut [Vec<f64>], basis: &mut [usize], active: &[bool], row: usize, col: usize) {
    let p = tab[row][col];
    for v in tab[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = tab[row].clone();
    for (i, r) in tab.iter_mut().enumerate() {
        if i == row || !active[i] {
            continue;
        }
        let f = r[col];
        if f != 0.0 {
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            r[col] = 0.0;
        }
    }
    basis[row] = col;
}

fn refine_basic_solution(
    a_eq: &DMatrix<f64>,
    b: &DVector<f64>,
    basis: &[usize],
    active: &[bool],
    n_struct: usize,
) -> Option<Vec<f64>> {
    let rows: Vec<usize> = (0..basis.len()).filter(|&i| active[i]).collect();
    if rows.iter().any(|&i| basis[i] >= n_struct) {
        return None;
    }
    let k = rows.len();
    let mut bm = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for (r, &i) in rows.iter().enumerate() {
        rhs[r] = b[i];
        for (c, &ib) in rows.iter().enumerate() {
            bm[(r, c)] = a_eq[(i, basis[ib])];
        }
    }
    let sol = bm.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return None;
    }
    let mut x = vec![0.0; n_struct];
    for (c, &ib) in rows.iter().enumerate() {
        x[basis[ib]] = sol[c];
    }
    // Reject the refinement if it breaks constraints dropped as redundant.
    let ax = a_eq * DVector::from_column_slice(&x);
    let worst = (ax - b).amax();
    (worst < 1e-9 * (1.0 + b.amax())).then_some(x)
}
