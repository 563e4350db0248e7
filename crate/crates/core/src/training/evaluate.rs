use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{Dataset, TrainError};
use crate::case::Partition;
use crate::nn::{zonal_average, zone_loads, NetworkModel, NnError};

/// Anything that maps loads to allocation factors and their input Jacobian.
pub trait Surrogate: Sync {
    fn outputs(&self, d: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), NnError>;
}

impl Surrogate for NetworkModel {
    fn outputs(&self, d: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), NnError> {
        Ok((self.forward(d)?, self.input_jacobian(d)?))
    }
}

/// Per-scenario deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub index: usize,
    /// `‖λ̂ − λ̃‖ = |dᵀλ̂ − E| / ‖d‖`.
    pub balance: f64,
    pub sensitivity_max: f64,
    pub sensitivity_avg: f64,
    /// `‖J − bdiag(J)‖₁ / ‖J‖₁`.
    pub offblock_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub balance_avg: f64,
    pub balance_max: f64,
    /// Mean of `|μ̂_i − μ_i|` over all entries.
    pub sensitivity_avg: f64,
    pub sensitivity_max: f64,
    pub offblock_ratio: f64,
    pub rows: Vec<EvalRow>,
}

pub const EVAL_HEADER: &str = "index,balance_dev,sens_max,sens_avg,offblock_ratio";

impl EvalReport {
    fn from_rows(rows: Vec<EvalRow>) -> Result<Self, TrainError> {
        if rows.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let n = rows.len() as f64;
        Ok(EvalReport {
            balance_avg: rows.iter().map(|r| r.balance).sum::<f64>() / n,
            balance_max: rows.iter().map(|r| r.balance).fold(0.0, f64::max),
            sensitivity_avg: rows.iter().map(|r| r.sensitivity_avg).sum::<f64>() / n,
            sensitivity_max: rows.iter().map(|r| r.sensitivity_max).fold(0.0, f64::max),
            offblock_ratio: rows.iter().map(|r| r.offblock_ratio).sum::<f64>() / n,
            rows,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{EVAL_HEADER}\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.index, r.balance, r.sensitivity_max, r.sensitivity_avg, r.offblock_ratio
            ));
        }
        s
    }
}

fn mass_ratio(jac: &DMatrix<f64>, off: impl Fn(usize, usize) -> bool) -> f64 {
    let mut total = 0.0;
    let mut outside = 0.0;
    for r in 0..jac.nrows() {
        for c in 0..jac.ncols() {
            let v = jac[(r, c)].abs();
            total += v;
            if off(r, c) {
                outside += v;
            }
        }
    }
    if total > 0.0 {
        outside / total
    } else {
        0.0
    }
}

fn deviations(a: &[f64], b: &[f64]) -> (f64, f64) {
    let dev: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    let max = dev.iter().copied().fold(0.0, f64::max);
    (max, dev.iter().sum::<f64>() / dev.len().max(1) as f64)
}

/// Balance and sensitivity deviations of a nodal surrogate on `idx`.
pub fn evaluate<S: Surrogate + ?Sized>(
    model: &S,
    dataset: &Dataset,
    idx: &[usize],
    partition: &Partition,
) -> Result<EvalReport, TrainError> {
    let rows = idx
        .par_iter()
        .map(|&k| {
            let s = &dataset.scenarios[k];
            let (lh, jac) = model.outputs(&s.d)?;
            if jac.nrows() != s.d.len() || jac.ncols() != s.d.len() {
                return Err(TrainError::Nn(NnError::NotNodal {
                    inputs: jac.ncols(),
                    outputs: jac.nrows(),
                }));
            }
            let norm = s.d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(TrainError::Nn(NnError::ZeroLoad));
            }
            let dl: f64 = s.d.iter().zip(&lh).map(|(a, b)| a * b).sum();
            let mu_hat = crate::nn::sensitivity_estimate(&lh, &jac, &s.d)?;
            let (smax, savg) = deviations(&mu_hat, &s.mu);
            Ok(EvalRow {
                index: k,
                balance: (dl - s.e).abs() / norm,
                sensitivity_max: smax,
                sensitivity_avg: savg,
                offblock_ratio: mass_ratio(&jac, |r, c| !partition.same_group(r, c)),
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    EvalReport::from_rows(rows)
}

/// Zonal counterpart of [`evaluate`]: balance against `dᶻ` and ZMCE
/// deviations; the ratio measures off-zone Jacobian mass.
pub fn evaluate_zonal<S: Surrogate + ?Sized>(
    model: &S,
    dataset: &Dataset,
    idx: &[usize],
    zones: &Partition,
) -> Result<EvalReport, TrainError> {
    let rows = idx
        .par_iter()
        .map(|&k| {
            let s = &dataset.scenarios[k];
            let (lh, jac) = model.outputs(&s.d)?;
            if lh.len() != zones.count || jac.ncols() != s.d.len() {
                return Err(TrainError::Nn(NnError::Dimension {
                    expected: zones.count,
                    got: lh.len(),
                }));
            }
            let dz = zone_loads(&s.d, zones)?;
            let norm = dz.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dl: f64 = dz.iter().zip(&lh).map(|(a, b)| a * b).sum();
            let nu: Vec<f64> = (0..s.d.len())
                .map(|i| lh[zones.group_of(i)] + (0..zones.count).map(|z| dz[z] * jac[(z, i)]).sum::<f64>())
                .collect();
            let mu_hat = zonal_average(&nu, &s.d, zones)?;
            let mu = zonal_average(&s.mu, &s.d, zones)?;
            let (smax, savg) = deviations(&mu_hat, &mu);
            Ok(EvalRow {
                index: k,
                balance: (dl - s.e).abs() / norm,
                sensitivity_max: smax,
                sensitivity_avg: savg,
                offblock_ratio: mass_ratio(&jac, |r, c| zones.group_of(c) != r),
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    EvalReport::from_rows(rows)
}
