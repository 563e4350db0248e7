//! DC-OPF market clearing, emissions, marginal emissions and dispatch
//! Jacobians.
//!
//! The market problem has one variable per generator followed by one per
//! line. Line flows are tied to the nodal injections by PTDF rows, so the
//! clearing LP reads
//!
//! ```text
//! min  cᵀg
//! s.t. Σ g = Σ d
//!      f_l − Σ_k PTDF[l, bus(k)]·g_k = −Σ_i PTDF[l, bus(i)]·d_i   for every line l
//!      g_min ≤ g ≤ g_max,  −F ≤ f ≤ F
//! ```
//!
//! Only the right-hand side depends on the load vector, which keeps the LP
//! basis meaningful for sensitivity analysis.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::case::{CaseError, GridCase};
use crate::lp::{solve_lp, BasisFactor, LpError, LpProblem, LpSolution};

/// Costs of generators that tie exactly are separated by this amount per
/// unit of bus id, so that the optimum (and hence `E`) is unique.
const TIE_BREAK: f64 = 1e-7;
const ACTIVE_TOL: f64 = 1e-7;
/// Default step for finite differences and one-sided derivatives, in MW.
pub const DEFAULT_DELTA: f64 = 1e-3;
/// Left and right derivatives closer than this are considered equal.
const KINK_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("network is islanded: the reduced susceptance matrix is singular")]
    Islanded,
    #[error("load vector has {got} entries, the case has {expected} loads")]
    Dimension { expected: usize, got: usize },
    #[error("load {index} is negative ({value} MW)")]
    NegativeLoad { index: usize, value: f64 },
    #[error("market clearing failed at d = {loads:?}: {source}")]
    Clearing { loads: Vec<f64>, source: LpError },
    #[error("sensitivity analysis failed: {0}")]
    Sensitivity(LpError),
}

/// A bound that holds with equality at the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Binding {
    GenMin(usize),
    GenMax(usize),
    /// Flow at `+limit` (from → to).
    LineForward(usize),
    /// Flow at `−limit`.
    LineReverse(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub g_star: Vec<f64>,
    pub objective: f64,
    pub flows: Vec<f64>,
    pub total_emissions: f64,
    pub per_gen_emissions: Vec<f64>,
    pub active_set: Vec<Binding>,
    pub basis_signature: u64,
    pub lp: LpSolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmceVector {
    pub mu: Vec<f64>,
    pub degenerate_flags: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LmceMethod {
    #[default]
    Basis,
    FiniteDiff,
}

/// Precomputed market model of one case: PTDF and the load-independent part
/// of the LP.
#[derive(Debug, Clone)]
pub struct DispatchModel {
    ptdf: DMatrix<f64>,
    load_bus: Vec<usize>,
    factors: Vec<f64>,
    true_cost: Vec<f64>,
    template: LpProblem,
    n_gen: usize,
    n_line: usize,
}

/// PTDF matrix (lines × buses, bus order as in the case) with the slack bus
/// as reference.
pub fn ptdf(case: &GridCase) -> Result<DMatrix<f64>, DispatchError> {
    case.validate()?;
    let nb = case.buses.len();
    let slack = case.bus_index(case.slack_bus).expect("validated slack bus");
    let mut bbus = DMatrix::<f64>::zeros(nb, nb);
    let idx: Vec<(usize, usize, f64)> = case
        .lines
        .iter()
        .map(|l| {
            (
                case.bus_index(l.from_bus).unwrap(),
                case.bus_index(l.to_bus).unwrap(),
                1.0 / l.reactance,
            )
        })
        .collect();
    for &(a, b, y) in &idx {
        bbus[(a, a)] += y;
        bbus[(b, b)] += y;
        bbus[(a, b)] -= y;
        bbus[(b, a)] -= y;
    }
    let keep: Vec<usize> = (0..nb).filter(|&i| i != slack).collect();
    let reduced = DMatrix::from_fn(keep.len(), keep.len(), |r, c| bbus[(keep[r], keep[c])]);
    let x_red = if keep.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        let lu = reduced.lu();
        let inv = lu.try_inverse().ok_or(DispatchError::Islanded)?;
        let scale = inv.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let ymax = idx.iter().fold(0.0f64, |a, v| a.max(v.2));
        if !scale.is_finite() || scale * ymax > 1e12 {
            return Err(DispatchError::Islanded);
        }
        inv
    };
    let mut x = DMatrix::<f64>::zeros(nb, nb);
    for (r, &i) in keep.iter().enumerate() {
        for (c, &j) in keep.iter().enumerate() {
            x[(i, j)] = x_red[(r, c)];
        }
    }
    Ok(DMatrix::from_fn(idx.len(), nb, |l, n| {
        let (a, b, y) = idx[l];
        y * (x[(a, n)] - x[(b, n)])
    }))
}

impl DispatchModel {
    pub fn new(case: &GridCase) -> Result<Self, DispatchError> {
        let ptdf = ptdf(case)?;
        let ng = case.generators.len();
        let nl = case.lines.len();
        let gen_bus: Vec<usize> = case
            .generators
            .iter()
            .map(|g| case.bus_index(g.bus).unwrap())
            .collect();
        let load_bus = case.loads.iter().map(|l| case.bus_index(l.bus).unwrap()).collect();
        let n = ng + nl;
        let m = 1 + nl;
        let mut a = DMatrix::zeros(m, n);
        for k in 0..ng {
            a[(0, k)] = 1.0;
            for l in 0..nl {
                let v = ptdf[(l, gen_bus[k])];
                if v != 0.0 {
                    a[(1 + l, k)] = -v;
                }
            }
        }
        for l in 0..nl {
            a[(1 + l, ng + l)] = 1.0;
        }
        let mut cost = vec![0.0; n];
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for (k, g) in case.generators.iter().enumerate() {
            cost[k] = g.cost_linear + TIE_BREAK * g.bus as f64;
            lower[k] = g.g_min;
            upper[k] = g.g_max;
        }
        for (l, line) in case.lines.iter().enumerate() {
            lower[ng + l] = -line.flow_limit;
            upper[ng + l] = line.flow_limit;
        }
        Ok(DispatchModel {
            ptdf,
            load_bus,
            factors: case.emission_factors(),
            true_cost: case.generators.iter().map(|g| g.cost_linear).collect(),
            template: LpProblem {
                cost,
                eq_matrix: a,
                eq_rhs: vec![0.0; m],
                lower,
                upper,
            },
            n_gen: ng,
            n_line: nl,
        })
    }

    pub fn n_loads(&self) -> usize {
        self.load_bus.len()
    }

    pub fn n_generators(&self) -> usize {
        self.n_gen
    }

    pub fn emission_factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn ptdf(&self) -> &DMatrix<f64> {
        &self.ptdf
    }

    fn check_loads(&self, d: &[f64]) -> Result<(), DispatchError> {
        if d.len() != self.load_bus.len() {
            return Err(DispatchError::Dimension {
                expected: self.load_bus.len(),
                got: d.len(),
            });
        }
        Ok(())
    }

    /// Right-hand side of the clearing LP for load vector `d`.
    fn rhs(&self, d: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; 1 + self.n_line];
        b[0] = d.iter().sum();
        for (i, &di) in d.iter().enumerate() {
            if di != 0.0 {
                let bus = self.load_bus[i];
                for l in 0..self.n_line {
                    b[1 + l] -= self.ptdf[(l, bus)] * di;
                }
            }
        }
        b
    }

    /// `∂b/∂d_i`.
    pub fn rhs_direction(&self, i: usize) -> Vec<f64> {
        let bus = self.load_bus[i];
        let mut b = vec![0.0; 1 + self.n_line];
        b[0] = 1.0;
        for l in 0..self.n_line {
            b[1 + l] = -self.ptdf[(l, bus)];
        }
        b
    }

    pub fn problem(&self, d: &[f64]) -> Result<LpProblem, DispatchError> {
        self.check_loads(d)?;
        let mut p = self.template.clone();
        p.eq_rhs = self.rhs(d);
        Ok(p)
    }

    pub fn solve(&self, d: &[f64]) -> Result<DispatchResult, DispatchError> {
        if let Some((index, &value)) = d.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(DispatchError::NegativeLoad { index, value });
        }
        self.solve_unchecked(d)
    }

    /// Clears the market without the `d ≥ 0` check; used for perturbations.
    fn solve_unchecked(&self, d: &[f64]) -> Result<DispatchResult, DispatchError> {
        let p = self.problem(d)?;
        let sol = solve_lp(&p).map_err(|source| DispatchError::Clearing {
            loads: d.to_vec(),
            source,
        })?;
        Ok(self.result_from(&p, sol))
    }

    fn result_from(&self, p: &LpProblem, sol: LpSolution) -> DispatchResult {
        let ng = self.n_gen;
        let g_star = sol.x[..ng].to_vec();
        let flows = sol.x[ng..].to_vec();
        let per_gen_emissions: Vec<f64> =
            g_star.iter().zip(&self.factors).map(|(g, f)| g * f).collect();
        let total_emissions = per_gen_emissions.iter().sum();
        let objective = g_star.iter().zip(&self.true_cost).map(|(g, c)| g * c).sum();
        let mut active_set = Vec::new();
        for (j, &x) in sol.x.iter().enumerate() {
            let near = |b: f64| b.is_finite() && (x - b).abs() <= ACTIVE_TOL * (1.0 + b.abs());
            let (lo, hi) = (p.lower[j], p.upper[j]);
            if j < ng {
                if near(lo) {
                    active_set.push(Binding::GenMin(j));
                }
                if near(hi) {
                    active_set.push(Binding::GenMax(j));
                }
            } else {
                if near(hi) {
                    active_set.push(Binding::LineForward(j - ng));
                }
                if near(lo) {
                    active_set.push(Binding::LineReverse(j - ng));
                }
            }
        }
        active_set.sort_unstable();
        DispatchResult {
            basis_signature: fnv1a(&sol.basic_set()),
            g_star,
            objective,
            flows,
            total_emissions,
            per_gen_emissions,
            active_set,
            lp: sol,
        }
    }

    /// Dispatch Jacobian `∂g*/∂d` (G × D) under the optimal basis at `d`.
    pub fn jacobian(&self, d: &[f64]) -> Result<DMatrix<f64>, DispatchError> {
        let res = self.solve(d)?;
        self.jacobian_at(d, &res)
    }

    pub fn jacobian_at(&self, d: &[f64], res: &DispatchResult) -> Result<DMatrix<f64>, DispatchError> {
        let p = self.problem(d)?;
        let factor = BasisFactor::new(&p, &res.lp).map_err(DispatchError::Sensitivity)?;
        let mut jac = DMatrix::zeros(self.n_gen, self.n_loads());
        for i in 0..self.n_loads() {
            let dx = factor.rhs_direction(&self.rhs_direction(i));
            for k in 0..self.n_gen {
                jac[(k, i)] = dx[k];
            }
        }
        Ok(jac)
    }

    pub fn lmce(&self, d: &[f64], method: LmceMethod, delta: f64) -> Result<LmceVector, DispatchError> {
        let res = self.solve(d)?;
        self.lmce_at(d, &res, method, delta)
    }

    /// LMCE at `d` given the dispatch already solved there.
    ///
    /// At a kink of `E` the left derivative is reported (the right one if
    /// the left side cannot be cleared) and the entry is flagged.
    pub fn lmce_at(
        &self,
        d: &[f64],
        res: &DispatchResult,
        method: LmceMethod,
        delta: f64,
    ) -> Result<LmceVector, DispatchError> {
        assert!(delta > 0.0, "step must be positive");
        let nd = self.n_loads();
        let mut mu = vec![0.0; nd];
        let mut flags = vec![false; nd];
        match method {
            LmceMethod::Basis => {
                let p = self.problem(d)?;
                let factor = BasisFactor::new(&p, &res.lp).ok();
                for i in 0..nd {
                    let fixed = factor.as_ref().and_then(|f| {
                        let dx = f.rhs_direction(&self.rhs_direction(i));
                        let (fwd, bwd) = f.step_limits(&p, &res.lp.x, &dx);
                        (fwd > 1e-9 && bwd > 1e-9).then(|| {
                            (0..self.n_gen).map(|k| self.factors[k] * dx[k]).sum::<f64>()
                        })
                    });
                    match fixed {
                        Some(v) => mu[i] = v,
                        None => {
                            let (v, kink) = self.one_sided(d, res.total_emissions, i, delta)?;
                            mu[i] = v;
                            flags[i] = kink;
                        }
                    }
                }
            }
            LmceMethod::FiniteDiff => {
                for i in 0..nd {
                    let mut dp = d.to_vec();
                    dp[i] += delta;
                    let mut dm = d.to_vec();
                    dm[i] -= delta;
                    let plus = self.solve_unchecked(&dp).ok();
                    let minus = self.solve_unchecked(&dm).ok();
                    let e0 = res.total_emissions;
                    (mu[i], flags[i]) = match (minus, plus) {
                        (Some(m), Some(p)) => {
                            if m.active_set == p.active_set {
                                ((p.total_emissions - m.total_emissions) / (2.0 * delta), false)
                            } else {
                                ((e0 - m.total_emissions) / delta, true)
                            }
                        }
                        (Some(m), None) => ((e0 - m.total_emissions) / delta, true),
                        (None, Some(p)) => ((p.total_emissions - e0) / delta, true),
                        (None, None) => {
                            return Err(DispatchError::Clearing {
                                loads: dp,
                                source: LpError::Infeasible { row: 0 },
                            })
                        }
                    };
                }
            }
        }
        Ok(LmceVector {
            mu,
            degenerate_flags: flags,
        })
    }

    /// Left derivative of `E` in `d_i` (right if the left side is
    /// infeasible) and whether the two sides disagree.
    fn one_sided(&self, d: &[f64], e0: f64, i: usize, delta: f64) -> Result<(f64, bool), DispatchError> {
        let mut dp = d.to_vec();
        dp[i] += delta;
        let mut dm = d.to_vec();
        dm[i] -= delta;
        let right = self.solve_unchecked(&dp).map(|r| (r.total_emissions - e0) / delta);
        let left = self.solve_unchecked(&dm).map(|r| (e0 - r.total_emissions) / delta);
        match (left, right) {
            (Ok(l), Ok(r)) => Ok((l, (l - r).abs() > KINK_TOL)),
            (Ok(l), Err(_)) => Ok((l, true)),
            (Err(_), Ok(r)) => Ok((r, true)),
            (Err(e), Err(_)) => Err(e),
        }
    }

    /// Per load, how far (MW, either direction) `d_i` can move before the
    /// optimal basis at `d` changes. Zero if the basis cannot be factored.
    pub fn basis_windows(&self, d: &[f64], res: &DispatchResult) -> Result<Vec<f64>, DispatchError> {
        let p = self.problem(d)?;
        let Ok(factor) = BasisFactor::new(&p, &res.lp) else {
            return Ok(vec![0.0; self.n_loads()]);
        };
        Ok((0..self.n_loads())
            .map(|i| {
                let dx = factor.rhs_direction(&self.rhs_direction(i));
                let (fwd, bwd) = factor.step_limits(&p, &res.lp.x, &dx);
                fwd.min(bwd)
            })
            .collect())
    }

    /// Dispatch and LMCE at `d` in one pass.
    pub fn solve_with_lmce(&self, d: &[f64]) -> Result<(DispatchResult, LmceVector), DispatchError> {
        let res = self.solve(d)?;
        let mu = self.lmce_at(d, &res, LmceMethod::Basis, DEFAULT_DELTA)?;
        Ok((res, mu))
    }
}

fn fnv1a(items: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &v in items {
        for byte in (v as u64).to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

pub fn build_dcopf(case: &GridCase, d: &[f64]) -> Result<LpProblem, DispatchError> {
    DispatchModel::new(case)?.problem(d)
}

pub fn solve_dispatch(case: &GridCase, d: &[f64]) -> Result<DispatchResult, DispatchError> {
    DispatchModel::new(case)?.solve(d)
}

pub fn compute_lmce(
    case: &GridCase,
    d: &[f64],
    method: LmceMethod,
    delta: f64,
) -> Result<LmceVector, DispatchError> {
    DispatchModel::new(case)?.lmce(d, method, delta)
}

pub fn dispatch_jacobian(case: &GridCase, d: &[f64]) -> Result<DMatrix<f64>, DispatchError> {
    DispatchModel::new(case)?.jacobian(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn basis_windows_measure_distance_to_kink() {
        let m = DispatchModel::new(&fixtures::case2()).unwrap();
        let d = [4.0, 6.0];
        let w = m.basis_windows(&d, &m.solve(&d).unwrap()).unwrap();
        assert!((w[1] - 1.0).abs() < 1e-9, "{w:?}");
        let d = [5.0, 5.0];
        let w = m.basis_windows(&d, &m.solve(&d).unwrap()).unwrap();
        assert!(w[1] < 1e-9, "{w:?}");
    }

    #[test]
    fn two_bus_dispatch() {
        let c = fixtures::case2();
        let r = solve_dispatch(&c, &[5.0, 5.0]).unwrap();
        assert_eq!(r.g_star, vec![10.0, 0.0]);
        assert_eq!(r.total_emissions, 10.0);
        let r = solve_dispatch(&c, &[4.0, 6.0]).unwrap();
        assert_eq!(r.g_star, vec![9.0, 1.0]);
        assert_eq!(r.total_emissions, 9.0);
        assert!(r.active_set.contains(&Binding::LineForward(0)));
    }

    #[test]
    fn two_bus_lmce() {
        let c = fixtures::case2();
        for method in [LmceMethod::Basis, LmceMethod::FiniteDiff] {
            let mu = compute_lmce(&c, &[4.0, 6.0], method, DEFAULT_DELTA).unwrap();
            assert_eq!(mu.degenerate_flags, vec![false, false]);
            assert!((mu.mu[0] - 1.0).abs() < 1e-9 && mu.mu[1].abs() < 1e-9, "{mu:?}");
            let mu = compute_lmce(&c, &[5.0, 5.0], method, DEFAULT_DELTA).unwrap();
            assert!((mu.mu[0] - 1.0).abs() < 1e-9 && (mu.mu[1] - 1.0).abs() < 1e-9, "{mu:?}");
            assert!(mu.degenerate_flags[1]);
        }
    }

    #[test]
    fn zero_load_clears_at_zero() {
        let r = solve_dispatch(&fixtures::case2(), &[0.0, 0.0]).unwrap();
        assert_eq!(r.g_star, vec![0.0, 0.0]);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn jacobian_consistent_with_lmce() {
        let c = fixtures::case30();
        let m = DispatchModel::new(&c).unwrap();
        let d: Vec<f64> = c.nominal_loads().iter().map(|v| v * 1.2).collect();
        let jac = m.jacobian(&d).unwrap();
        let mu = m.lmce(&d, LmceMethod::Basis, DEFAULT_DELTA).unwrap();
        for i in 0..d.len() {
            if !mu.degenerate_flags[i] {
                let v: f64 = (0..jac.nrows()).map(|k| m.emission_factors()[k] * jac[(k, i)]).sum();
                assert!((v - mu.mu[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn islanded_network_is_rejected() {
        let mut c = fixtures::case2();
        c.buses.push(crate::case::Bus { id: 3, zone_id: 1 });
        assert_eq!(DispatchModel::new(&c).unwrap_err(), DispatchError::Islanded);
    }

    #[test]
    fn wrong_dimension() {
        let err = solve_dispatch(&fixtures::case2(), &[1.0]).unwrap_err();
        assert_eq!(err, DispatchError::Dimension { expected: 2, got: 1 });
    }
}
