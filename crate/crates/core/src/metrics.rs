//! Classic emission allocation metrics: system average (ACE), the path
//! integral of marginal emissions (LACE-R) and flow-based carbon emission
//! flow (CEF).

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::case::GridCase;
use crate::dispatch::{DispatchError, DispatchModel, LmceMethod, DEFAULT_DELTA};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error("total load is zero")]
    ZeroLoad,
    #[error("bus {bus} has load but receives no power")]
    IsolatedSupply { bus: usize },
    #[error("proportional sharing system is singular")]
    SingularSharing,
    #[error("dispatch failed on the loading path at rho = {rho}: {source}")]
    PathInfeasible { rho: f64, source: DispatchError },
    #[error("at least 2 quadrature segments are required, got {0}")]
    Segments(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    AceBroadcast,
    Lmce,
    LaceR,
    Cef,
    LaceS,
    ZaceSExpanded,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::AceBroadcast => "ACE",
            MetricKind::Lmce => "LMCE",
            MetricKind::LaceR => "LACE-R",
            MetricKind::Cef => "CEF",
            MetricKind::LaceS => "LACE-S",
            MetricKind::ZaceSExpanded => "ZACE-S",
        }
    }
}

/// Per-load emission factors in tCO2e/MWh.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricVector {
    pub values: Vec<f64>,
    pub kind: MetricKind,
    /// Digest of the scenario the values were computed for.
    pub provenance: String,
    /// Entries computed by a fallback rule (e.g. zero load for LACE-R).
    pub marked: Vec<bool>,
}

impl MetricVector {
    pub fn new(kind: MetricKind, values: Vec<f64>, provenance: String) -> Self {
        let marked = vec![false; values.len()];
        MetricVector {
            values,
            kind,
            provenance,
            marked,
        }
    }

    /// `dᵀ·values`.
    pub fn allocated(&self, d: &[f64]) -> f64 {
        d.iter().zip(&self.values).map(|(a, b)| a * b).sum()
    }
}

/// Digest identifying the pair (case, load vector).
pub fn scenario_digest(case_hash: &str, d: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(case_hash.as_bytes());
    for v in d {
        h.update(v.to_le_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// `E / Σd`.
pub fn ace(case: &GridCase, d: &[f64]) -> Result<f64, MetricError> {
    ace_with(&DispatchModel::new(case)?, d)
}

pub fn ace_with(model: &DispatchModel, d: &[f64]) -> Result<f64, MetricError> {
    let total: f64 = d.iter().sum();
    if total <= 0.0 {
        return Err(MetricError::ZeroLoad);
    }
    Ok(model.solve(d)?.total_emissions / total)
}

/// LACE-R values together with the quantities needed to audit them.
#[derive(Debug, Clone, PartialEq)]
pub struct LaceR {
    pub metric: MetricVector,
    /// `E(0)`, allocated in proportion to `d` and included in the values.
    pub e_zero: f64,
    /// Loading-path breakpoints located by bisection.
    pub breakpoints: Vec<f64>,
}

/// Default number of quadrature segments.
pub const LACE_R_SEGMENTS: usize = 200;
const BREAKPOINT_TOL: f64 = 1e-6;

/// `λ_i = ∫₀¹ μ_i(ρd) dρ` by the trapezoid rule on `segments` equal
/// segments, refined at every change of marginal emissions along the path.
pub fn lace_r(case: &GridCase, d: &[f64], segments: usize) -> Result<LaceR, MetricError> {
    let model = DispatchModel::new(case)?;
    lace_r_with(&model, d, segments, &crate::case::case_hash(case))
}

pub fn lace_r_with(
    model: &DispatchModel,
    d: &[f64],
    segments: usize,
    case_hash: &str,
) -> Result<LaceR, MetricError> {
    if segments < 2 {
        return Err(MetricError::Segments(segments));
    }
    let mu_at = |rho: f64| -> Result<Vec<f64>, MetricError> {
        let x: Vec<f64> = d.iter().map(|v| v * rho).collect();
        model
            .lmce(&x, LmceMethod::Basis, DEFAULT_DELTA)
            .map(|m| m.mu)
            .map_err(|source| MetricError::PathInfeasible { rho, source })
    };
    let mut nodes: Vec<(f64, Vec<f64>)> = Vec::with_capacity(segments + 1);
    for k in 0..=segments {
        let rho = k as f64 / segments as f64;
        nodes.push((rho, mu_at(rho)?));
    }
    let mut breakpoints = Vec::new();
    let mut refined = vec![nodes[0].clone()];
    for w in nodes.windows(2) {
        let mut extra = Vec::new();
        locate(&mu_at, &w[0], &w[1], &mut extra, &mut breakpoints, 0)?;
        refined.extend(extra);
        refined.push(w[1].clone());
    }
    let nd = d.len();
    let mut lam = vec![0.0; nd];
    for w in refined.windows(2) {
        let h = w[1].0 - w[0].0;
        for i in 0..nd {
            lam[i] += 0.5 * h * (w[0].1[i] + w[1].1[i]);
        }
    }
    let e_zero = model
        .solve(&vec![0.0; nd])
        .map_err(|source| MetricError::PathInfeasible { rho: 0.0, source })?
        .total_emissions;
    let total: f64 = d.iter().sum();
    if e_zero != 0.0 && total > 0.0 {
        lam.iter_mut().for_each(|v| *v += e_zero / total);
    }
    let mut metric = MetricVector::new(MetricKind::LaceR, lam, scenario_digest(case_hash, d));
    let last = &nodes[segments].1;
    for i in 0..nd {
        if d[i] == 0.0 {
            metric.values[i] = last[i];
            metric.marked[i] = true;
        }
    }
    Ok(LaceR {
        metric,
        e_zero,
        breakpoints,
    })
}

type Node = (f64, Vec<f64>);

fn differs(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-9)
}

/// Inserts nodes bracketing every change of `μ` between `a` and `b`.
fn locate<F>(
    mu_at: &F,
    a: &Node,
    b: &Node,
    out: &mut Vec<Node>,
    breakpoints: &mut Vec<f64>,
    depth: usize,
) -> Result<(), MetricError>
where
    F: Fn(f64) -> Result<Vec<f64>, MetricError>,
{
    if !differs(&a.1, &b.1) || depth > 8 {
        return Ok(());
    }
    if b.0 - a.0 <= BREAKPOINT_TOL {
        breakpoints.push(0.5 * (a.0 + b.0));
        return Ok(());
    }
    let (mut lo, mut hi) = (a.clone(), b.clone());
    while hi.0 - lo.0 > BREAKPOINT_TOL {
        let mid = 0.5 * (lo.0 + hi.0);
        let m = (mid, mu_at(mid)?);
        if differs(&lo.1, &m.1) {
            hi = m;
        } else {
            lo = m;
        }
    }
    breakpoints.push(0.5 * (lo.0 + hi.0));
    // Further changes can only lie between `hi` and `b`.
    let lo_is_a = lo.0 == a.0;
    let hi_is_b = hi.0 == b.0;
    if !lo_is_a {
        out.push(lo);
    }
    if !hi_is_b {
        let mut rest = Vec::new();
        locate(mu_at, &hi, b, &mut rest, breakpoints, depth + 1)?;
        out.push(hi);
        out.extend(rest);
    }
    Ok(())
}

/// Carbon emission flow by proportional sharing.
pub fn cef(case: &GridCase, d: &[f64]) -> Result<MetricVector, MetricError> {
    let model = DispatchModel::new(case)?;
    cef_with(case, &model, d, &crate::case::case_hash(case))
}

pub fn cef_with(
    case: &GridCase,
    model: &DispatchModel,
    d: &[f64],
    case_hash: &str,
) -> Result<MetricVector, MetricError> {
    let res = model.solve(d)?;
    let nb = case.buses.len();
    let mut throughput = vec![0.0; nb];
    let mut rhs = vec![0.0; nb];
    for (k, g) in case.generators.iter().enumerate() {
        let b = case.bus_index(g.bus).unwrap();
        throughput[b] += res.g_star[k];
        rhs[b] += res.per_gen_emissions[k];
    }
    let mut a = DMatrix::<f64>::zeros(nb, nb);
    for (l, line) in case.lines.iter().enumerate() {
        let flow = res.flows[l];
        if flow.abs() <= 1e-9 {
            continue;
        }
        let (src, dst) = if flow > 0.0 {
            (line.from_bus, line.to_bus)
        } else {
            (line.to_bus, line.from_bus)
        };
        let (s, t) = (case.bus_index(src).unwrap(), case.bus_index(dst).unwrap());
        throughput[t] += flow.abs();
        a[(t, s)] -= flow.abs();
    }
    let mut bus_load = vec![0.0; nb];
    for (i, load) in case.loads.iter().enumerate() {
        bus_load[case.bus_index(load.bus).unwrap()] += d[i];
    }
    for n in 0..nb {
        if throughput[n] <= 1e-9 {
            if bus_load[n] > 1e-9 {
                return Err(MetricError::IsolatedSupply {
                    bus: case.buses[n].id,
                });
            }
            // No power passes through: pin the intensity to zero.
            for m in 0..nb {
                a[(n, m)] = 0.0;
            }
            a[(n, n)] = 1.0;
            rhs[n] = 0.0;
        } else {
            a[(n, n)] = throughput[n];
        }
    }
    let rho = a
        .lu()
        .solve(&DVector::from_vec(rhs))
        .ok_or(MetricError::SingularSharing)?;
    let values = case
        .loads
        .iter()
        .map(|l| rho[case.bus_index(l.bus).unwrap()])
        .collect();
    Ok(MetricVector::new(MetricKind::Cef, values, scenario_digest(case_hash, d)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn ace_two_bus() {
        let c = fixtures::case2();
        assert!((ace(&c, &[4.0, 6.0]).unwrap() - 0.9).abs() < 1e-12);
        assert!((ace(&c, &[5.0, 5.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ace(&c, &[0.0, 0.0]), Err(MetricError::ZeroLoad));
    }

    #[test]
    fn ace_clean_system_is_zero() {
        let mut c = fixtures::case2();
        for g in &mut c.generators {
            g.emission_factor = 0.0;
            g.fuel = crate::case::Fuel::Other("clean".into());
        }
        assert_eq!(ace(&c, &[4.0, 6.0]).unwrap(), 0.0);
    }

    #[test]
    fn cef_two_bus() {
        let c = fixtures::case2();
        let v = cef(&c, &[4.0, 6.0]).unwrap();
        assert!((v.values[0] - 1.0).abs() < 1e-12);
        assert!((v.values[1] - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn lace_r_two_bus() {
        let c = fixtures::case2();
        let r = lace_r(&c, &[4.0, 6.0], 600).unwrap();
        assert!((r.metric.values[0] - 1.0).abs() < 2e-3);
        assert!((r.metric.values[1] - 0.8333).abs() < 2e-3);
        assert_eq!(r.breakpoints.len(), 1);
        assert!((r.breakpoints[0] - 5.0 / 6.0).abs() < 1e-6);
        let r = lace_r(&c, &[5.0, 5.0], 600).unwrap();
        assert!((r.metric.values[0] - 1.0).abs() < 2e-3);
        assert!((r.metric.values[1] - 1.0).abs() < 2e-3);
    }

    #[test]
    fn lace_r_zero_entry_takes_lmce() {
        let c = fixtures::case2();
        let r = lace_r(&c, &[4.0, 0.0], 10).unwrap();
        assert!(r.metric.marked[1] && !r.metric.marked[0]);
        assert!((r.metric.values[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_segments() {
        assert_eq!(
            lace_r(&fixtures::case2(), &[1.0, 1.0], 1).unwrap_err(),
            MetricError::Segments(1)
        );
    }
}
