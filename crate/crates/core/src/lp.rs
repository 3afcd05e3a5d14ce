//! Dense two-phase simplex with Bland's rule. All variables are nonnegative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;
/// Constraint satisfaction tolerance for an optimal point.
pub const LP_FEASIBILITY_TOL: f64 = 1e-7;
const MAX_PIVOTS: usize = 200_000;
/// Largest phase-1 artificial sum, relative to the rhs scale, treated as
/// round-off rather than infeasibility.
const PHASE1_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize objective·x  s.t.  constraints, x >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram { objective: vec![0.0; num_vars], constraints: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    /// Largest scaled violation of `x`'s constraints and sign bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0f64, |w, &v| w.max(-v));
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let scale = 1.0 + c.rhs.abs() + c.coeffs.iter().zip(x).map(|(a, v)| (a * v).abs()).sum::<f64>();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v / scale);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point; empty unless optimal.
    pub x: Vec<f64>,
    pub objective: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced costs; the last entry is minus the current objective.
    cost: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r && row[c] != 0.0 {
                let f = row[c];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (v, pv) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Values of the first `n` columns at the current basis.
    fn point(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < n {
                x[b] = row[self.width].max(0.0);
            }
        }
        x
    }

    fn set_cost(&mut self, c: &[f64]) {
        self.cost = c.to_vec();
        self.cost.push(0.0);
        for (r, &b) in self.basis.iter().enumerate() {
            let f = self.cost[b];
            if f != 0.0 {
                for (v, rv) in self.cost.iter_mut().zip(&self.rows[r]) {
                    *v -= f * rv;
                }
            }
        }
    }

    /// Maximizes over columns `< allowed`. Returns false when unbounded.
    fn optimize(&mut self, allowed: usize) -> Result<bool> {
        let rhs = self.width;
        for _ in 0..MAX_PIVOTS {
            // Bland: lowest-index improving column, lowest-index leaving variable.
            let Some(c) = (0..allowed).find(|&j| self.cost[j] > PIVOT_TOL) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if row[c] > PIVOT_TOL {
                    let ratio = row[rhs] / row[c];
                    let take = match leave {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - 1e-12 || (ratio <= best + 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if take {
                        leave = Some((r, ratio));
                    }
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, c),
            }
        }
        Err(Error::Numerical(format!("simplex exceeded {MAX_PIVOTS} pivots")))
    }
}

/// Solves the LP. An optimal point that fails the constraint check at
/// [`LP_FEASIBILITY_TOL`] is reported as a numerical error.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.num_vars();
    if lp.objective.iter().any(|c| !c.is_finite())
        || lp
            .constraints
            .iter()
            .any(|c| c.coeffs.len() != n || !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()))
    {
        return Err(Error::InvalidArgument("LP coefficients must be finite and sized to the variables".into()));
    }
    let m = lp.constraints.len();
    let num_slack = lp.constraints.iter().filter(|c| c.relation != Relation::Eq).count();
    let art_start = n + num_slack;
    let width = art_start + m;

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut slack = n;
    for (r, c) in lp.constraints.iter().enumerate() {
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(&c.coeffs);
        row[width] = c.rhs;
        match c.relation {
            Relation::Le => {
                row[slack] = 1.0;
                slack += 1;
            }
            Relation::Ge => {
                row[slack] = -1.0;
                slack += 1;
            }
            Relation::Eq => {}
        }
        if row[width] < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        // A slack with coefficient +1 can start in the basis.
        let start = if c.relation != Relation::Eq && row[slack - 1] == 1.0 { slack - 1 } else { art_start + r };
        if start >= art_start {
            row[start] = 1.0;
        }
        rows.push(row);
        basis.push(start);
    }
    let mut tab = Tableau { rows, cost: Vec::new(), basis, width };

    // Phase 1: maximize minus the sum of artificials.
    let mut phase1 = vec![0.0; width];
    for v in &mut phase1[art_start..] {
        *v = -1.0;
    }
    tab.set_cost(&phase1);
    tab.optimize(width)?;
    let infeasibility: f64 = tab.cost[width];
    let rhs_scale = 1.0 + lp.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
    // A large rhs inflates the global scale, so the phase-1 point is also
    // checked row by row.
    if infeasibility > PHASE1_TOL * rhs_scale || lp.max_violation(&tab.point(n)) > LP_FEASIBILITY_TOL {
        return Ok(LpSolution { status: LpStatus::Infeasible, x: Vec::new(), objective: f64::NAN });
    }
    // Drive artificials out of the basis; rows where that fails are redundant.
    let mut r = 0;
    while r < tab.rows.len() {
        if tab.basis[r] >= art_start {
            let col = (0..art_start)
                .filter(|&j| tab.rows[r][j].abs() > PIVOT_TOL)
                .max_by(|&a, &b| tab.rows[r][a].abs().total_cmp(&tab.rows[r][b].abs()));
            match col {
                Some(c) => tab.pivot(r, c),
                None => {
                    tab.rows.remove(r);
                    tab.basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }

    let mut phase2 = vec![0.0; width];
    phase2[..n].copy_from_slice(&lp.objective);
    tab.set_cost(&phase2);
    if !tab.optimize(art_start)? {
        return Ok(LpSolution { status: LpStatus::Unbounded, x: Vec::new(), objective: f64::INFINITY });
    }
    let x = tab.point(n);
    let violation = lp.max_violation(&x);
    if violation > LP_FEASIBILITY_TOL {
        return Err(Error::Numerical(format!(
            "simplex optimum violates a constraint by {violation:e} (scaled); the system is ill-conditioned"
        )));
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { status: LpStatus::Optimal, x, objective })
}
