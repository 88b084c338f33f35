//! Dense revised simplex for small linear programs of the form
//!
//! ```text
//! maximize   c·z
//! subject to A_eq z  = b_eq
//!            A_ge z >= b_ge
//!            z >= 0
//! ```
//!
//! Two phases with artificial variables, Bland's rule for both the entering
//! and the leaving variable, and an explicit basis inverse that is
//! refactorised periodically. Every reported optimum is re-checked against
//! the original rows; a check failure is surfaced as
//! [`LpStatus::NumericalFailure`] instead of a wrong answer.

use std::fmt;
use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const OPTIMALITY_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const ROW_CHECK_TOL: f64 = 1e-8;
const REFACTOR_EVERY: usize = 50;

/// A decision variable: either an occupation weight at a (state, action)
/// pair, or an auxiliary variable such as a slack level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Variable {
    Pair { state: usize, action: usize },
    Aux(String),
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variable::Pair { state, action } => write!(f, "mu[{state},{action}]"),
            Variable::Aux(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq_rows: Vec<Row>,
    pub ge_rows: Vec<Row>,
    pub variable_index: Vec<Variable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgramSolution {
    pub status: LpStatus,
    pub value: f64,
    pub primal: Vec<f64>,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new(variable_index: Vec<Variable>) -> Self {
        LinearProgram {
            objective: vec![0.0; variable_index.len()],
            eq_rows: Vec::new(),
            ge_rows: Vec::new(),
            variable_index,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.variable_index.len()
    }

    /// Checks that all rows have one coefficient per variable.
    pub fn is_well_formed(&self) -> bool {
        let n = self.num_vars();
        self.objective.len() == n
            && self.eq_rows.iter().chain(&self.ge_rows).all(|r| r.coeffs.len() == n)
    }

    /// Largest violation of any row or sign constraint by `z`.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let dot = |r: &Row| r.coeffs.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        let eq = self.eq_rows.iter().map(|r| (dot(r) - r.rhs).abs());
        let ge = self.ge_rows.iter().map(|r| (r.rhs - dot(r)).max(0.0));
        let sign = z.iter().map(|v| (-v).max(0.0));
        eq.chain(ge).chain(sign).fold(0.0, f64::max)
    }

    pub fn objective_value(&self, z: &[f64]) -> f64 {
        self.objective.iter().zip(z).map(|(c, v)| c * v).sum()
    }

    /// Plain-text table: a header with the variable names, the objective row,
    /// then one line per constraint ending in the relation and right-hand side.
    pub fn write_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        let names: Vec<String> = self.variable_index.iter().map(ToString::to_string).collect();
        writeln!(w, "kind\t{}\trel\trhs", names.join("\t"))?;
        let fmt_row = |c: &[f64]| c.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join("\t");
        writeln!(w, "max\t{}\t\t", fmt_row(&self.objective))?;
        for r in &self.eq_rows {
            writeln!(w, "eq\t{}\t=\t{:e}", fmt_row(&r.coeffs), r.rhs)?;
        }
        for r in &self.ge_rows {
            writeln!(w, "ge\t{}\t>=\t{:e}", fmt_row(&r.coeffs), r.rhs)?;
        }
        Ok(())
    }
}

struct Tableau {
    /// Constraint matrix in equality form, artificials last. `m × cols`.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    m: usize,
    /// Number of structural + surplus columns (artificials start here).
    first_artificial: usize,
    basis: Vec<usize>,
    binv: Vec<Vec<f64>>,
    x_b: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
}

enum PhaseResult {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let n_ge = lp.ge_rows.len();
        let m = lp.eq_rows.len() + n_ge;
        let first_artificial = n + n_ge;
        let cols = first_artificial + m;
        let mut a = vec![vec![0.0; cols]; m];
        let mut b = vec![0.0; m];
        for (r, row) in lp.eq_rows.iter().chain(&lp.ge_rows).enumerate() {
            a[r][..n].copy_from_slice(&row.coeffs);
            if r >= lp.eq_rows.len() {
                a[r][n + r - lp.eq_rows.len()] = -1.0;
            }
            b[r] = row.rhs;
            if b[r] < 0.0 {
                a[r].iter_mut().for_each(|v| *v = -*v);
                b[r] = -b[r];
            }
            a[r][first_artificial + r] = 1.0;
        }
        let binv = (0..m)
            .map(|r| {
                let mut e = vec![0.0; m];
                e[r] = 1.0;
                e
            })
            .collect();
        Tableau {
            basis: (first_artificial..cols).collect(),
            x_b: b.clone(),
            a,
            b,
            m,
            first_artificial,
            binv,
            iterations: 0,
            max_iterations: 20_000 + 50 * cols,
        }
    }

    /// `B⁻¹ A_j`.
    fn direction(&self, j: usize) -> Vec<f64> {
        self.binv
            .iter()
            .map(|row| row.iter().zip(&self.a).map(|(bi, ar)| bi * ar[j]).sum())
            .collect()
    }

    fn refactor(&mut self) -> bool {
        let m = self.m;
        if m == 0 {
            return true;
        }
        let basis_matrix = DMatrix::from_fn(m, m, |r, c| self.a[r][self.basis[c]]);
        let Some(inv) = basis_matrix.try_inverse() else {
            return false;
        };
        self.binv = (0..m).map(|r| (0..m).map(|c| inv[(r, c)]).collect()).collect();
        self.x_b = (0..m)
            .map(|r| self.binv[r].iter().zip(&self.b).map(|(a, b)| a * b).sum())
            .collect();
        for v in &mut self.x_b {
            if *v < 0.0 && *v > -FEASIBILITY_TOL {
                *v = 0.0;
            }
        }
        true
    }

    fn pivot(&mut self, leave_row: usize, enter: usize, dir: &[f64]) {
        let piv = dir[leave_row];
        let pivot_row: Vec<f64> = self.binv[leave_row].iter().map(|v| v / piv).collect();
        let x_pivot = self.x_b[leave_row] / piv;
        for r in 0..self.m {
            if r == leave_row {
                continue;
            }
            let f = dir[r];
            if f != 0.0 {
                for (v, p) in self.binv[r].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                self.x_b[r] -= f * x_pivot;
                if self.x_b[r] < 0.0 && self.x_b[r] > -FEASIBILITY_TOL {
                    self.x_b[r] = 0.0;
                }
            }
        }
        self.binv[leave_row] = pivot_row;
        self.x_b[leave_row] = x_pivot.max(0.0);
        self.basis[leave_row] = enter;
        self.iterations += 1;
        if self.iterations.is_multiple_of(REFACTOR_EVERY) {
            self.refactor();
        }
    }

    /// Maximises `cost·x` from the current basis. Columns at or beyond
    /// `allowed_cols` never enter.
    fn run(&mut self, cost: &[f64], allowed_cols: usize) -> PhaseResult {
        let mut in_basis = vec![false; cost.len()];
        for &j in &self.basis {
            in_basis[j] = true;
        }
        loop {
            if self.iterations >= self.max_iterations {
                return PhaseResult::IterationLimit;
            }
            // Simplex multipliers y = c_B B⁻¹.
            let mut y = vec![0.0; self.m];
            for (r, &j) in self.basis.iter().enumerate() {
                let cb = cost[j];
                if cb != 0.0 {
                    for (yk, bk) in y.iter_mut().zip(&self.binv[r]) {
                        *yk += cb * bk;
                    }
                }
            }
            // Bland: lowest-index improving column.
            let entering = (0..allowed_cols).find(|&j| {
                !in_basis[j] && {
                    let reduced = cost[j] - self.a.iter().zip(&y).map(|(row, yk)| row[j] * yk).sum::<f64>();
                    reduced > OPTIMALITY_TOL
                }
            });
            let Some(enter) = entering else {
                return PhaseResult::Optimal;
            };
            let dir = self.direction(enter);
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                if dir[r] <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.x_b[r] / dir[r];
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                        if (!tie && ratio < lratio) || (tie && self.basis[r] < self.basis[lr]) {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
            let Some((leave_row, _)) = leave else {
                return PhaseResult::Unbounded;
            };
            in_basis[self.basis[leave_row]] = false;
            in_basis[enter] = true;
            self.pivot(leave_row, enter, &dir);
        }
    }

    fn primal(&self, n: usize) -> Vec<f64> {
        let mut z = vec![0.0; n];
        for (r, &j) in self.basis.iter().enumerate() {
            if j < n {
                z[j] = self.x_b[r];
            }
        }
        z
    }

    fn artificial_mass(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.x_b)
            .filter(|(&j, _)| j >= self.first_artificial)
            .map(|(_, v)| v.abs())
            .sum()
    }

    /// Pivots zero-valued artificials out of the basis where a structural
    /// column can replace them. Rows where none can are redundant; their
    /// artificial stays basic at zero and never moves in phase two.
    fn expel_artificials(&mut self) {
        for r in 0..self.m {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let candidate = (0..self.first_artificial).find(|&j| {
                !self.basis.contains(&j) && {
                    let v: f64 = self.binv[r].iter().zip(&self.a).map(|(b, row)| b * row[j]).sum();
                    v.abs() > 1e-7
                }
            });
            if let Some(j) = candidate {
                let dir = self.direction(j);
                self.pivot(r, j, &dir);
            }
        }
    }
}

/// Solves `lp` to optimality or reports why it cannot.
pub fn solve_lp(lp: &LinearProgram) -> LinearProgramSolution {
    let n = lp.num_vars();
    let failed = |status, iterations| LinearProgramSolution {
        status,
        value: f64::NAN,
        primal: Vec::new(),
        iterations,
    };
    if !lp.is_well_formed() {
        return failed(LpStatus::NumericalFailure, 0);
    }
    let mut t = Tableau::build(lp);
    let cols = t.first_artificial + t.m;
    let scale = 1.0 + t.b.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));

    let mut phase1_cost = vec![0.0; cols];
    phase1_cost[t.first_artificial..].iter_mut().for_each(|c| *c = -1.0);
    match t.run(&phase1_cost, cols) {
        PhaseResult::Optimal => {}
        PhaseResult::IterationLimit => return failed(LpStatus::IterationLimit, t.iterations),
        PhaseResult::Unbounded => return failed(LpStatus::NumericalFailure, t.iterations),
    }
    t.refactor();
    if t.artificial_mass() > FEASIBILITY_TOL * scale {
        return failed(LpStatus::Infeasible, t.iterations);
    }
    t.expel_artificials();

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    match t.run(&cost, t.first_artificial) {
        PhaseResult::Optimal => {}
        PhaseResult::Unbounded => return failed(LpStatus::Unbounded, t.iterations),
        PhaseResult::IterationLimit => return failed(LpStatus::IterationLimit, t.iterations),
    }
    if !t.refactor() {
        return failed(LpStatus::NumericalFailure, t.iterations);
    }
    let primal = t.primal(n);
    if lp.max_violation(&primal) > ROW_CHECK_TOL * scale || t.artificial_mass() > ROW_CHECK_TOL * scale {
        return failed(LpStatus::NumericalFailure, t.iterations);
    }
    LinearProgramSolution {
        status: LpStatus::Optimal,
        value: lp.objective_value(&primal),
        primal,
        iterations: t.iterations,
    }
}
