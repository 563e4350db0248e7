//! Bounded-variable revised simplex for `min cᵀx s.t. Ax = b, l ≤ x ≤ u`.
//!
//! The solver is a textbook two-phase method with an explicit dense basis
//! inverse, updated by elementary row operations after each pivot and
//! refactorized periodically. It is sized for the market-clearing problems in
//! this crate (tens to a few hundred rows) and reports the optimal basis, the
//! equality duals and the reduced costs so that callers can perform
//! sensitivity analysis on the right-hand side.
//!
//! Pricing is Dantzig's rule until `3·(m+n)` iterations have passed, after
//! which the solver falls back to Bland's rule. Ties are always broken by the
//! lowest variable index, which makes the reported basis a deterministic
//! function of the input bytes.
//!
//! Rows and columns are equilibrated by power-of-two max-abs scaling before
//! the solve, so scaling and unscaling are exact in floating point.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 48;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("inconsistent problem dimensions: {0}")]
    Dimension(String),
    #[error("infeasible: equality row {row} cannot be satisfied within the bounds")]
    Infeasible { row: usize },
    #[error("unbounded along variable {var}")]
    Unbounded { var: usize },
    #[error("iteration limit {0} reached")]
    MaxIterations(usize),
    #[error("basis matrix is singular")]
    SingularBasis,
}

/// `min cᵀx s.t. Ax = b, l ≤ x ≤ u`; bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn n_rows(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn check(&self) -> Result<(), LpError> {
        let n = self.cost.len();
        let m = self.eq_rhs.len();
        if self.eq_matrix.nrows() != m || self.eq_matrix.ncols() != n {
            return Err(LpError::Dimension(format!(
                "matrix is {}x{}, expected {m}x{n}",
                self.eq_matrix.nrows(),
                self.eq_matrix.ncols()
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Dimension("bound vectors must have n entries".into()));
        }
        for j in 0..n {
            if !(self.lower[j] <= self.upper[j]) || self.lower[j] == f64::INFINITY {
                return Err(LpError::Dimension(format!("bounds of variable {j} are inverted")));
            }
            if !self.cost[j].is_finite() {
                return Err(LpError::Dimension(format!("cost of variable {j} is not finite")));
            }
        }
        if self.eq_matrix.iter().any(|v| !v.is_finite()) || self.eq_rhs.iter().any(|v| !v.is_finite())
        {
            return Err(LpError::Dimension("non-finite matrix or rhs entry".into()));
        }
        Ok(())
    }
}

/// Where a nonbasic variable sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundStatus {
    Lower,
    Upper,
    /// Free variable held at zero.
    Free,
}

/// One pivot of the simplex trajectory, recorded when tracing is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotRecord {
    pub phase: u8,
    pub iteration: usize,
    pub entering: usize,
    /// `None` for a bound flip.
    pub leaving: Option<usize>,
    pub step: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Basic variable of each row. Indices `>= n` denote the artificial
    /// variable of row `index - n` (only left behind by redundant rows).
    pub basis: Vec<usize>,
    pub nonbasic_at: BTreeMap<usize, BoundStatus>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<PivotRecord>,
}

impl LpSolution {
    /// Basic variables, ascending.
    pub fn basic_set(&self) -> Vec<usize> {
        let mut b = self.basis.clone();
        b.sort_unstable();
        b
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    /// Record every pivot in [`LpSolution::trace`].
    pub trace: bool,
}

pub fn solve_lp(p: &LpProblem) -> Result<LpSolution, LpError> {
    solve_lp_with(p, &SolveOptions::default())
}

pub fn solve_lp_with(p: &LpProblem, opts: &SolveOptions) -> Result<LpSolution, LpError> {
    p.check()?;
    let scaled = Scaled::new(p);
    let mut s = Simplex::new(&scaled, opts.trace);
    s.run_phase_one()?;
    s.run_phase_two()?;
    Ok(s.into_solution(p, &scaled))
}

struct Scaled {
    row: Vec<f64>,
    col: Vec<f64>,
    a: DMatrix<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    l: Vec<f64>,
    u: Vec<f64>,
}

fn pow2_inverse(max_abs: f64) -> f64 {
    if max_abs > 0.0 && max_abs.is_finite() {
        2f64.powi(-(max_abs.log2().round() as i32))
    } else {
        1.0
    }
}

impl Scaled {
    fn new(p: &LpProblem) -> Self {
        let (m, n) = (p.n_rows(), p.n_vars());
        let row: Vec<f64> = (0..m)
            .map(|i| pow2_inverse((0..n).map(|j| p.eq_matrix[(i, j)].abs()).fold(0.0, f64::max)))
            .collect();
        let col: Vec<f64> = (0..n)
            .map(|j| {
                pow2_inverse(
                    (0..m)
                        .map(|i| (row[i] * p.eq_matrix[(i, j)]).abs())
                        .fold(0.0, f64::max),
                )
            })
            .collect();
        let a = DMatrix::from_fn(m, n, |i, j| row[i] * p.eq_matrix[(i, j)] * col[j]);
        Scaled {
            b: (0..m).map(|i| row[i] * p.eq_rhs[i]).collect(),
            c: (0..n).map(|j| col[j] * p.cost[j]).collect(),
            l: (0..n).map(|j| p.lower[j] / col[j]).collect(),
            u: (0..n).map(|j| p.upper[j] / col[j]).collect(),
            row,
            col,
            a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Basic(usize),
    Lower,
    Upper,
    Free,
}

struct Simplex {
    m: usize,
    n: usize,
    /// `[A | diag(sign)]`, scaled.
    a: DMatrix<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
    phase_two_cost: Vec<f64>,
    l: Vec<f64>,
    u: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
    trace: Option<Vec<PivotRecord>>,
    phase: u8,
    // scratch
    y: Vec<f64>,
    alpha: Vec<f64>,
}

enum Step {
    Optimal,
    Moved,
}

impl Simplex {
    fn new(sc: &Scaled, trace: bool) -> Self {
        let m = sc.b.len();
        let n = sc.c.len();
        let mut x = vec![0.0; n + m];
        let mut state = vec![State::Lower; n + m];
        for j in 0..n {
            let (lo, hi) = (sc.l[j], sc.u[j]);
            (x[j], state[j]) = if lo.is_finite() {
                (lo, State::Lower)
            } else if hi.is_finite() {
                (hi, State::Upper)
            } else {
                (0.0, State::Free)
            };
        }
        let mut residual = sc.b.clone();
        for j in 0..n {
            if x[j] != 0.0 {
                for i in 0..m {
                    residual[i] -= sc.a[(i, j)] * x[j];
                }
            }
        }
        let mut a = DMatrix::zeros(m, n + m);
        a.columns_mut(0, n).copy_from(&sc.a);
        let mut binv = DMatrix::zeros(m, m);
        let mut l = sc.l.clone();
        let mut u = sc.u.clone();
        l.extend(std::iter::repeat(0.0).take(m));
        u.extend(std::iter::repeat(f64::INFINITY).take(m));
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            let sign = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
            a[(i, n + i)] = sign;
            binv[(i, i)] = sign;
            x[n + i] = residual[i].abs();
            state[n + i] = State::Basic(i);
            basis.push(n + i);
        }
        let mut cost = vec![0.0; n + m];
        cost[n..].iter_mut().for_each(|c| *c = 1.0);
        Simplex {
            m,
            n,
            a,
            b: sc.b.clone(),
            cost,
            phase_two_cost: sc.c.clone(),
            l,
            u,
            x,
            state,
            basis,
            binv,
            since_refactor: 0,
            iterations: 0,
            max_iterations: 100 * (m + n) + 1000,
            trace: trace.then(Vec::new),
            phase: 1,
            y: vec![0.0; m],
            alpha: vec![0.0; m],
        }
    }

    fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    fn run_phase_one(&mut self) -> Result<(), LpError> {
        self.phase = 1;
        self.iterate()?;
        let infeas: f64 = self.x[self.n..].iter().sum();
        let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if infeas > FEAS_TOL * scale * (self.m as f64).max(1.0) {
            let row = (0..self.m)
                .max_by(|&i, &k| {
                    self.x[self.n + i]
                        .partial_cmp(&self.x[self.n + k])
                        .unwrap()
                        .then(k.cmp(&i))
                })
                .unwrap_or(0);
            return Err(LpError::Infeasible { row });
        }
        self.drive_out_artificials()?;
        Ok(())
    }

    fn run_phase_two(&mut self) -> Result<(), LpError> {
        self.phase = 2;
        self.cost[..self.n].copy_from_slice(&self.phase_two_cost);
        for j in self.n..self.n + self.m {
            self.u[j] = 0.0;
            self.cost[j] = 0.0;
            if !matches!(self.state[j], State::Basic(_)) {
                self.x[j] = 0.0;
                self.state[j] = State::Lower;
            }
        }
        self.refactor()?;
        self.iterate()
    }

    /// Pivots basic artificials out of the basis wherever a structural column
    /// can replace them. Rows that remain are linearly dependent.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        for r in 0..self.m {
            if self.basis[r] < self.n {
                continue;
            }
            let mut chosen = None;
            for j in 0..self.n {
                if matches!(self.state[j], State::Basic(_)) {
                    continue;
                }
                // Row r of B^-1 A_j.
                let v: f64 = (0..self.m).map(|i| self.binv[(r, i)] * self.a[(i, j)]).sum();
                if v.abs() > 1e-7 {
                    chosen = Some(j);
                    break;
                }
            }
            if let Some(j) = chosen {
                self.compute_alpha(j);
                self.pivot(j, r, 0.0, 1.0);
            }
        }
        Ok(())
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let bmat = DMatrix::from_fn(m, m, |i, k| self.a[(i, self.basis[k])]);
        self.binv = bmat.lu().try_inverse().ok_or(LpError::SingularBasis)?;
        self.since_refactor = 0;
        // Recompute basic values from the nonbasic ones.
        let mut rhs = self.b.clone();
        for j in 0..self.n + self.m {
            if !matches!(self.state[j], State::Basic(_)) && self.x[j] != 0.0 {
                for i in 0..m {
                    rhs[i] -= self.a[(i, j)] * self.x[j];
                }
            }
        }
        for k in 0..m {
            let mut v = 0.0;
            for i in 0..m {
                v += self.binv[(k, i)] * rhs[i];
            }
            self.x[self.basis[k]] = v;
        }
        Ok(())
    }

    fn compute_duals(&mut self) {
        let m = self.m;
        for i in 0..m {
            let col = self.binv.column(i);
            let mut v = 0.0;
            for k in 0..m {
                v += col[k] * self.cost[self.basis[k]];
            }
            self.y[i] = v;
        }
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        let col = self.a.column(j);
        let mut v = self.cost[j];
        for i in 0..self.m {
            v -= col[i] * self.y[i];
        }
        v
    }

    fn compute_alpha(&mut self, j: usize) {
        let m = self.m;
        self.alpha.iter_mut().for_each(|a| *a = 0.0);
        for i in 0..m {
            let aij = self.a[(i, j)];
            if aij != 0.0 {
                let col = self.binv.column(i);
                for k in 0..m {
                    self.alpha[k] += col[k] * aij;
                }
            }
        }
    }

    fn iterate(&mut self) -> Result<(), LpError> {
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::MaxIterations(self.max_iterations));
            }
            match self.step()? {
                Step::Optimal => return Ok(()),
                Step::Moved => self.iterations += 1,
            }
        }
    }

    fn step(&mut self) -> Result<Step, LpError> {
        self.compute_duals();
        let bland = self.iterations >= 3 * (self.m + self.n);
        // Pricing.
        let mut entering = None;
        let mut best = 0.0;
        for j in 0..self.n + self.m {
            let dir = match self.state[j] {
                State::Basic(_) => continue,
                _ if self.u[j] - self.l[j] <= 0.0 => continue,
                State::Lower => {
                    let d = self.reduced_cost(j);
                    if d < -OPT_TOL {
                        (1.0, -d)
                    } else {
                        continue;
                    }
                }
                State::Upper => {
                    let d = self.reduced_cost(j);
                    if d > OPT_TOL {
                        (-1.0, d)
                    } else {
                        continue;
                    }
                }
                State::Free => {
                    let d = self.reduced_cost(j);
                    if d.abs() > OPT_TOL {
                        (-d.signum(), d.abs())
                    } else {
                        continue;
                    }
                }
            };
            if bland {
                entering = Some((j, dir.0));
                break;
            }
            if dir.1 > best {
                best = dir.1;
                entering = Some((j, dir.0));
            }
        }
        let Some((j, sigma)) = entering else {
            return Ok(Step::Optimal);
        };

        self.compute_alpha(j);
        // Ratio test: basic k changes by -sigma * t * alpha_k.
        let mut t_best = self.u[j] - self.l[j];
        let mut leave: Option<usize> = None;
        let mut leave_piv = 0.0;
        for k in 0..self.m {
            let rate = sigma * self.alpha[k];
            let bv = self.basis[k];
            let ratio = if rate > PIVOT_TOL {
                ((self.x[bv] - self.l[bv]) / rate).max(0.0)
            } else if rate < -PIVOT_TOL {
                ((self.u[bv] - self.x[bv]) / -rate).max(0.0)
            } else {
                continue;
            };
            if !ratio.is_finite() {
                continue;
            }
            let tie = t_best.is_finite() && (ratio - t_best).abs() <= 1e-12 * (1.0 + t_best.abs());
            let better = if ratio < t_best && !tie {
                true
            } else if tie && leave.is_some() {
                let cur = self.basis[leave.unwrap()];
                if bland {
                    bv < cur
                } else {
                    rate.abs() > leave_piv || (rate.abs() == leave_piv && bv < cur)
                }
            } else {
                // A tie with a bound flip keeps the flip.
                false
            };
            if better {
                t_best = ratio;
                leave = Some(k);
                leave_piv = rate.abs();
            }
        }
        if t_best == f64::INFINITY {
            return Err(LpError::Unbounded { var: j });
        }
        match leave {
            None => {
                // Bound flip.
                for k in 0..self.m {
                    let bv = self.basis[k];
                    self.x[bv] -= sigma * t_best * self.alpha[k];
                }
                let (nx, ns) = if sigma > 0.0 {
                    (self.u[j], State::Upper)
                } else {
                    (self.l[j], State::Lower)
                };
                self.x[j] = nx;
                self.state[j] = ns;
                self.record(j, None, t_best);
            }
            Some(r) => {
                let leaving = self.basis[r];
                self.pivot(j, r, t_best, sigma);
                self.record(j, Some(leaving), t_best);
                if self.since_refactor >= REFACTOR_EVERY {
                    self.refactor()?;
                }
            }
        }
        Ok(Step::Moved)
    }

    /// Brings `j` into the basis at row `r` after moving it by `sigma * t`.
    /// `alpha` must hold `B^-1 A_j`.
    fn pivot(&mut self, j: usize, r: usize, t: f64, sigma: f64) {
        let m = self.m;
        for k in 0..m {
            let bv = self.basis[k];
            self.x[bv] -= sigma * t * self.alpha[k];
        }
        self.x[j] += sigma * t;
        let leaving = self.basis[r];
        let rate = sigma * self.alpha[r];
        // The leaving variable lands on the bound it was driven to.
        let (lx, ls) = if t == 0.0 {
            if (self.x[leaving] - self.l[leaving]).abs() <= (self.u[leaving] - self.x[leaving]).abs() {
                (self.l[leaving], State::Lower)
            } else {
                (self.u[leaving], State::Upper)
            }
        } else if rate > 0.0 {
            (self.l[leaving], State::Lower)
        } else {
            (self.u[leaving], State::Upper)
        };
        let (lx, ls) = if lx.is_finite() {
            (lx, ls)
        } else if self.l[leaving].is_finite() {
            (self.l[leaving], State::Lower)
        } else if self.u[leaving].is_finite() {
            (self.u[leaving], State::Upper)
        } else {
            (0.0, State::Free)
        };
        self.x[leaving] = lx;
        self.state[leaving] = ls;
        self.state[j] = State::Basic(r);
        self.basis[r] = j;

        let piv = self.alpha[r];
        for i in 0..m {
            let mut col = self.binv.column_mut(i);
            let pr = col[r] / piv;
            if pr != 0.0 {
                for k in 0..m {
                    col[k] -= self.alpha[k] * pr;
                }
            }
            col[r] = pr;
        }
        self.since_refactor += 1;
    }

    fn record(&mut self, entering: usize, leaving: Option<usize>, step: f64) {
        if self.trace.is_some() {
            let rec = PivotRecord {
                phase: self.phase,
                iteration: self.iterations,
                entering,
                leaving,
                step,
                objective: self.objective(),
            };
            self.trace.as_mut().unwrap().push(rec);
        }
    }

    fn into_solution(mut self, p: &LpProblem, sc: &Scaled) -> LpSolution {
        // Final clean refactor for accurate values and duals.
        let _ = self.refactor();
        self.compute_duals();
        let n = self.n;
        let mut x = vec![0.0; n];
        for j in 0..n {
            let v = self.x[j] * sc.col[j];
            // Snap to bounds that the scaled value sits on.
            x[j] = match self.state[j] {
                State::Lower => p.lower[j],
                State::Upper => p.upper[j],
                _ => v,
            };
        }
        let mut reduced_costs = vec![0.0; n];
        let mut nonbasic_at = BTreeMap::new();
        for j in 0..n {
            match self.state[j] {
                State::Basic(_) => {}
                s => {
                    reduced_costs[j] = self.reduced_cost(j) / sc.col[j];
                    nonbasic_at.insert(
                        j,
                        match s {
                            State::Lower => BoundStatus::Lower,
                            State::Upper => BoundStatus::Upper,
                            _ => BoundStatus::Free,
                        },
                    );
                }
            }
        }
        let duals = (0..self.m).map(|i| self.y[i] * sc.row[i]).collect();
        let objective = p.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpSolution {
            x,
            objective,
            basis: self.basis.clone(),
            nonbasic_at,
            duals,
            reduced_costs,
            iterations: self.iterations,
            trace: self.trace.take().unwrap_or_default(),
        }
    }
}

/// LU factorization of an optimal basis, reusable for many right-hand-side
/// perturbations.
pub struct BasisFactor {
    n: usize,
    basis: Vec<usize>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl BasisFactor {
    pub fn new(p: &LpProblem, sol: &LpSolution) -> Result<Self, LpError> {
        let m = p.n_rows();
        let n = p.n_vars();
        if sol.basis.len() != m {
            return Err(LpError::Dimension("basis size differs from row count".into()));
        }
        let bmat = DMatrix::from_fn(m, m, |i, k| {
            let j = sol.basis[k];
            if j < n {
                p.eq_matrix[(i, j)]
            } else if j - n == i {
                1.0
            } else {
                0.0
            }
        });
        let lu = bmat.lu();
        if !lu.is_invertible() {
            return Err(LpError::SingularBasis);
        }
        // Reject numerically singular factors as well.
        let diag = lu.u().diagonal();
        let dmax = diag.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if diag.iter().any(|v| v.abs() <= 1e-13 * dmax.max(1.0)) {
            return Err(LpError::SingularBasis);
        }
        Ok(BasisFactor {
            n,
            basis: sol.basis.clone(),
            lu,
        })
    }

    /// `∂x/∂b · drhs` with the basis held fixed; nonbasic entries are zero.
    pub fn rhs_direction(&self, drhs: &[f64]) -> Vec<f64> {
        let rhs = nalgebra::DVector::from_column_slice(drhs);
        let xb = self.lu.solve(&rhs).expect("factor checked invertible");
        let mut dx = vec![0.0; self.n];
        for (k, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                dx[j] = xb[k];
            }
        }
        dx
    }

    /// Largest steps `(forward, backward)` along `dx` before a basic variable
    /// leaves its bounds, i.e. the interval over which the basis stays primal
    /// feasible.
    pub fn step_limits(&self, p: &LpProblem, x: &[f64], dx: &[f64]) -> (f64, f64) {
        let mut fwd = f64::INFINITY;
        let mut bwd = f64::INFINITY;
        for &j in &self.basis {
            if j >= self.n {
                continue;
            }
            let scale = 1.0 + x[j].abs();
            let tiny = 1e-11 * scale;
            let v = dx[j];
            if v.abs() <= 1e-12 {
                continue;
            }
            let room_up = (p.upper[j] - x[j]).max(0.0);
            let room_down = (x[j] - p.lower[j]).max(0.0);
            let (f, b) = if v > 0.0 {
                (room_up / v, room_down / v)
            } else {
                (room_down / -v, room_up / -v)
            };
            // Treat rounding-level room as zero.
            let f = if f * v.abs() <= tiny { 0.0 } else { f };
            let b = if b * v.abs() <= tiny { 0.0 } else { b };
            fwd = fwd.min(f);
            bwd = bwd.min(b);
        }
        (fwd, bwd)
    }
}

/// `∂x/∂b · drhs` under the optimal basis of `sol`.
pub fn basis_sensitivity(sol: &LpSolution, p: &LpProblem, drhs: &[f64]) -> Result<Vec<f64>, LpError> {
    if drhs.len() != p.n_rows() {
        return Err(LpError::Dimension(format!(
            "drhs has {} entries, expected {}",
            drhs.len(),
            p.n_rows()
        )));
    }
    Ok(BasisFactor::new(p, sol)?.rhs_direction(drhs))
}

/// Dual objective `bᵀy + Σ d_j·bound_j` using the bound each reduced cost
/// prices. Equals the primal objective at an optimum.
pub fn dual_objective(p: &LpProblem, sol: &LpSolution) -> f64 {
    let mut v: f64 = p.eq_rhs.iter().zip(&sol.duals).map(|(b, y)| b * y).sum();
    for (j, &d) in sol.reduced_costs.iter().enumerate() {
        if d > 0.0 {
            v += d * p.lower[j];
        } else if d < 0.0 {
            v += d * p.upper[j];
        }
    }
    v
}

/// A random feasible instance with finite bounds: sparse `A`, a point drawn
/// inside the box, and `b = A·x0`. Used by property tests.
pub fn random_bounded_problem<R: Rng>(rng: &mut R, m: usize, n: usize) -> LpProblem {
    let a = DMatrix::from_fn(m, n, |_, _| {
        if rng.gen_bool(0.7) {
            rng.gen_range(-5.0..5.0)
        } else {
            0.0
        }
    });
    let lower: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..0.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.gen_range(0.5..6.0)).collect();
    let x0: Vec<f64> = (0..n).map(|j| rng.gen_range(lower[j]..upper[j])).collect();
    let b = (0..m).map(|i| (0..n).map(|j| a[(i, j)] * x0[j]).sum()).collect();
    LpProblem {
        cost: (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect(),
        eq_matrix: a,
        eq_rhs: b,
        lower,
        upper,
    }
}
