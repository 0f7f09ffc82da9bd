//! Dense two-phase simplex with Bland's rule.
//!
//! Sized for the handful-of-variables programs that arise from bimatrix
//! games; no attempt is made at sparsity or numerical refactorization.

use crate::error::{invalid, Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-10;
const FEAS_EPS: f64 = 1e-8;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize c·z` subject to linear constraints and per-variable lower
/// bounds (`None` = free variable).
#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    lower: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Empty unless `status` is `Optimal`.
    pub x: Vec<f64>,
    pub value: f64,
}

impl LinearProgram {
    /// All variables start with lower bound zero.
    pub fn maximize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            constraints: Vec::new(),
            lower: vec![Some(0.0); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self
    }

    pub fn le(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.constrain(coeffs, Relation::Le, rhs)
    }

    pub fn ge(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.constrain(coeffs, Relation::Ge, rhs)
    }

    pub fn eq(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.constrain(coeffs, Relation::Eq, rhs)
    }

    pub fn set_lower(&mut self, var: usize, bound: Option<f64>) -> &mut Self {
        self.lower[var] = bound;
        self
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if n == 0 {
            return invalid("linear program without variables");
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return invalid("non-finite objective coefficient");
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return invalid(format!(
                    "constraint {i} has {} coefficients, expected {n}",
                    c.coeffs.len()
                ));
            }
            if c.coeffs.iter().any(|v| !v.is_finite()) || !c.rhs.is_finite() {
                return invalid(format!("constraint {i} has a non-finite coefficient"));
            }
        }
        if self.lower.iter().flatten().any(|l| !l.is_finite()) {
            return invalid("non-finite lower bound");
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (xi, l) in x.iter().zip(&self.lower) {
            if let Some(l) = l {
                worst = worst.max(l - xi);
            }
        }
        worst
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn solve(&self) -> Result<LpSolution> {
        lp_solve(self)
    }
}

/// How each original variable maps onto nonnegative tableau columns.
enum VarMap {
    Shifted { col: usize, lower: f64 },
    Split { pos: usize, neg: usize },
}

struct Tableau {
    /// `m` rows of `cols + 1` entries; the last entry is the right-hand side.
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row for the current phase, same width as `rows`.
    obj: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Runs Bland's rule until optimal or unbounded; `eligible` filters the
    /// entering columns. Maximizes; `obj[j] < 0` means column `j` improves.
    fn run(&mut self, eligible: &dyn Fn(usize) -> bool) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let Some(enter) = (0..self.cols).find(|&j| eligible(j) && self.obj[j] < -COST_EPS)
            else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[enter];
                if a > PIVOT_EPS {
                    let ratio = row[self.cols] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, enter),
            }
        }
        Err(Error::Solver("pivot limit reached".into()))
    }

    fn set_objective(&mut self, costs: &[f64]) {
        self.obj = vec![0.0; self.cols + 1];
        for (j, c) in costs.iter().enumerate() {
            self.obj[j] = -c;
        }
        for i in 0..self.rows.len() {
            let b = self.basis[i];
            let f = self.obj[b];
            if f != 0.0 {
                for (v, rv) in self.obj.iter_mut().zip(&self.rows[i]) {
                    *v -= f * rv;
                }
            }
        }
    }
}

/// Solves `lp` to an optimal basic solution, or reports infeasibility or
/// unboundedness.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;

    // Nonnegative structural columns.
    let mut maps = Vec::with_capacity(lp.num_vars());
    let mut ncols = 0;
    for l in &lp.lower {
        match l {
            Some(lower) => {
                maps.push(VarMap::Shifted {
                    col: ncols,
                    lower: *lower,
                });
                ncols += 1;
            }
            None => {
                maps.push(VarMap::Split {
                    pos: ncols,
                    neg: ncols + 1,
                });
                ncols += 2;
            }
        }
    }
    let structural = ncols;

    struct Row {
        coeffs: Vec<f64>,
        relation: Relation,
        rhs: f64,
    }
    let mut rows: Vec<Row> = Vec::with_capacity(lp.constraints.len());
    for c in &lp.constraints {
        let mut coeffs = vec![0.0; structural];
        let mut rhs = c.rhs;
        for (a, m) in c.coeffs.iter().zip(&maps) {
            match *m {
                VarMap::Shifted { col, lower } => {
                    coeffs[col] = *a;
                    rhs -= a * lower;
                }
                VarMap::Split { pos, neg } => {
                    coeffs[pos] = *a;
                    coeffs[neg] = -a;
                }
            }
        }
        let mut relation = c.relation;
        if rhs < 0.0 {
            coeffs.iter_mut().for_each(|v| *v = -*v);
            rhs = -rhs;
            relation = match relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        rows.push(Row {
            coeffs,
            relation,
            rhs,
        });
    }

    // Slack/surplus columns, then artificials where no slack can start basic.
    let n_slack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.relation != Relation::Le).count();
    let cols = structural + n_slack + n_art;
    let m = rows.len();
    let mut tab = Tableau {
        rows: Vec::with_capacity(m),
        obj: Vec::new(),
        basis: Vec::with_capacity(m),
        cols,
    };
    let mut next_slack = structural;
    let mut next_art = structural + n_slack;
    let first_art = next_art;
    for r in &rows {
        let mut full = vec![0.0; cols + 1];
        full[..structural].copy_from_slice(&r.coeffs);
        full[cols] = r.rhs;
        match r.relation {
            Relation::Le => {
                full[next_slack] = 1.0;
                tab.basis.push(next_slack);
                next_slack += 1;
            }
            Relation::Ge => {
                full[next_slack] = -1.0;
                next_slack += 1;
                full[next_art] = 1.0;
                tab.basis.push(next_art);
                next_art += 1;
            }
            Relation::Eq => {
                full[next_art] = 1.0;
                tab.basis.push(next_art);
                next_art += 1;
            }
        }
        tab.rows.push(full);
    }

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        phase1[first_art..].iter_mut().for_each(|c| *c = -1.0);
        tab.set_objective(&phase1);
        tab.run(&|_| true)?;
        let infeasibility = tab.obj[cols];
        if infeasibility < -FEAS_EPS {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                value: f64::NAN,
            });
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] >= first_art {
                if let Some(c) = (0..first_art).find(|&j| tab.rows[r][j].abs() > 1e-9) {
                    tab.pivot(r, c);
                }
            }
        }
    }

    let mut costs = vec![0.0; cols];
    for (c, map) in lp.objective.iter().zip(&maps) {
        match *map {
            VarMap::Shifted { col, .. } => costs[col] = *c,
            VarMap::Split { pos, neg } => {
                costs[pos] = *c;
                costs[neg] = -c;
            }
        }
    }
    tab.set_objective(&costs);
    let bounded = tab.run(&|j| j < first_art)?;
    if !bounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            value: f64::INFINITY,
        });
    }

    let mut col_values = vec![0.0; cols];
    for (r, &b) in tab.basis.iter().enumerate() {
        col_values[b] = tab.rows[r][cols];
    }
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shifted { col, lower } => lower + col_values[col],
            VarMap::Split { pos, neg } => col_values[pos] - col_values[neg],
        })
        .collect();
    let value = lp.objective_at(&x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_variable() {
        let mut lp = LinearProgram::maximize(vec![1.0]);
        lp.le(vec![1.0], 1.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_optimum() {
        let mut lp = LinearProgram::maximize(vec![1.0, 1.0]);
        lp.le(vec![1.0, 1.0], 1.0);
        let s = lp.solve().unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!(lp.max_violation(&s.x) < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::maximize(vec![1.0]);
        lp.le(vec![1.0], 1.0).ge(vec![1.0], 2.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::maximize(vec![1.0, 0.0]);
        lp.le(vec![-1.0, 1.0], 1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variable_and_equalities() {
        // max v s.t. v <= 2a - 1, v <= -a + 0.5, a in [0,1] (as a + b = 1)
        let mut lp = LinearProgram::maximize(vec![0.0, 0.0, 1.0]);
        lp.set_lower(2, None);
        lp.eq(vec![1.0, 1.0, 0.0], 1.0);
        lp.le(vec![-2.0, 0.0, 1.0], -1.0);
        lp.le(vec![1.0, 0.0, 1.0], 0.5);
        let s = lp.solve().unwrap();
        // 2a - 1 = 0.5 - a -> a = 0.5, v = 0
        assert!((s.value - 0.0).abs() < 1e-9, "{s:?}");
        assert!((s.x[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn shifted_lower_bounds() {
        let mut lp = LinearProgram::maximize(vec![-1.0, -1.0]);
        lp.set_lower(0, Some(2.0)).set_lower(1, Some(-3.0));
        lp.ge(vec![1.0, 1.0], 0.0);
        let s = lp.solve().unwrap();
        assert!((s.value - 0.0).abs() < 1e-9, "{s:?}");
        assert!(lp.max_violation(&s.x) < 1e-9);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::maximize(vec![1.0, 2.0]);
        lp.eq(vec![1.0, 1.0], 1.0).eq(vec![2.0, 2.0], 2.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        let mut lp = LinearProgram::maximize(vec![1.0, 1.0]);
        lp.le(vec![1.0], 1.0);
        assert!(matches!(lp.solve(), Err(Error::InvalidArgument(_))));
    }

    /// Brute-force oracle for 2-variable programs: enumerate intersections
    /// of constraint boundaries (including bounds) and keep the best
    /// feasible vertex.
    fn vertex_oracle(c: [f64; 2], rows: &[([f64; 2], f64)]) -> Option<f64> {
        let mut lines: Vec<([f64; 2], f64)> = rows.to_vec();
        lines.push(([1.0, 0.0], 0.0));
        lines.push(([0.0, 1.0], 0.0));
        let feasible = |x: [f64; 2]| {
            x[0] >= -1e-9
                && x[1] >= -1e-9
                && rows
                    .iter()
                    .all(|(a, b)| a[0] * x[0] + a[1] * x[1] <= b + 1e-9)
        };
        let mut best: Option<f64> = None;
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                let (a, b) = (lines[i], lines[j]);
                let det = a.0[0] * b.0[1] - a.0[1] * b.0[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = [
                    (a.1 * b.0[1] - a.0[1] * b.1) / det,
                    (a.0[0] * b.1 - a.1 * b.0[0]) / det,
                ];
                if feasible(x) {
                    let v = c[0] * x[0] + c[1] * x[1];
                    best = Some(best.map_or(v, |bv: f64| bv.max(v)));
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration(
            c in prop::array::uniform2(-5i32..=5),
            rows in prop::collection::vec((prop::array::uniform2(1i32..=6), 1i32..=10), 1..5),
        ) {
            // Positive coefficients keep the region bounded and nonempty.
            let rows: Vec<([f64; 2], f64)> = rows
                .into_iter()
                .map(|(a, b)| ([a[0] as f64, a[1] as f64], b as f64))
                .collect();
            let c = [c[0] as f64, c[1] as f64];
            let mut lp = LinearProgram::maximize(c.to_vec());
            for (a, b) in &rows {
                lp.le(a.to_vec(), *b);
            }
            let s = lp.solve().unwrap();
            prop_assert_eq!(s.status, LpStatus::Optimal);
            prop_assert!(lp.max_violation(&s.x) <= 1e-8);
            let oracle = vertex_oracle(c, &rows).unwrap();
            prop_assert!((s.value - oracle).abs() <= 1e-8, "lp {} oracle {}", s.value, oracle);
        }
    }
}
