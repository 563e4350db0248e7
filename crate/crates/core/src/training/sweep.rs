use super::{mean_losses, nodal_model, train, Dataset, ModelSpec, Normalization, TrainConfig, TrainError};
use crate::case::Partition;
use crate::nn::{LossParams, Objective};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub gamma1_grid: Vec<f64>,
    pub gamma2_grid: Vec<f64>,
    /// Model seeds averaged at every grid point.
    pub seeds: Vec<u64>,
    /// The chosen `γ1` is the largest whose primary loss stays within
    /// `(1 + tolerance)` of the loss at the smallest `γ1`.
    pub tolerance: f64,
    pub train: TrainConfig,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub gamma1: f64,
    pub gamma2: f64,
    pub primary: f64,
    pub block_diag: f64,
    pub diag_dom: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub chosen_gamma1: f64,
}

pub const SWEEP_HEADER: &str = "gamma1,gamma2,L,L_bd,L_d";

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{SWEEP_HEADER}\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{},{},{}\n", p.gamma1, p.gamma2, p.primary, p.block_diag, p.diag_dom));
        }
        s
    }
}

fn point(
    ds: &Dataset,
    norm: &Normalization,
    max_factor: f64,
    partition: &Partition,
    cfg: &SweepConfig,
    gamma1: f64,
    gamma2: f64,
) -> Result<SweepPoint, TrainError> {
    let mut acc = SweepPoint {
        gamma1,
        gamma2,
        primary: 0.0,
        block_diag: 0.0,
        diag_dom: 0.0,
    };
    for &seed in &cfg.seeds {
        let spec = ModelSpec { seed, ..cfg.model.clone() };
        let model = nodal_model(norm, max_factor, &spec, Some(partition))?;
        let tc = TrainConfig {
            gamma1,
            gamma2,
            seed,
            ..cfg.train.clone()
        };
        let out = train(&model, ds, &tc, partition)?;
        let eps = tc.epsilon.unwrap_or(0.01 * out.model.output_scale);
        let objective = Objective::Nodal {
            params: LossParams {
                gamma1,
                gamma2,
                epsilon: eps,
            },
            partition,
        };
        let idx = if ds.test.is_empty() { &ds.train } else { &ds.test };
        let (b, _) = mean_losses(&out.model, ds, idx, objective)?;
        acc.primary += b.primary;
        acc.block_diag += b.block_diag;
        acc.diag_dom += b.diag_dom;
    }
    let n = cfg.seeds.len() as f64;
    acc.primary /= n;
    acc.block_diag /= n;
    acc.diag_dom /= n;
    Ok(acc)
}

/// Sequential sweep: `γ1` over its grid with `γ2 = 0`, then `γ2` over its
/// grid at the chosen `γ1`.
pub fn gamma_sweep(
    dataset: &Dataset,
    norm: &Normalization,
    max_factor: f64,
    partition: &Partition,
    cfg: &SweepConfig,
) -> Result<SweepResult, TrainError> {
    if cfg.gamma1_grid.is_empty() || cfg.gamma2_grid.is_empty() || cfg.seeds.is_empty() {
        return Err(TrainError::Config("sweep grids and seeds must be non-empty".into()));
    }
    let mut points = Vec::new();
    for &g1 in &cfg.gamma1_grid {
        points.push(point(dataset, norm, max_factor, partition, cfg, g1, 0.0)?);
    }
    let base = points
        .iter()
        .min_by(|a, b| a.gamma1.total_cmp(&b.gamma1))
        .map(|p| p.primary)
        .unwrap();
    let chosen_gamma1 = points
        .iter()
        .filter(|p| p.primary <= (1.0 + cfg.tolerance) * base)
        .map(|p| p.gamma1)
        .fold(f64::NEG_INFINITY, f64::max);
    for &g2 in &cfg.gamma2_grid {
        points.push(point(dataset, norm, max_factor, partition, cfg, chosen_gamma1, g2)?);
    }
    Ok(SweepResult { points, chosen_gamma1 })
}
