use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Dataset, TrainError};
use crate::case::Partition;
use crate::nn::{build_masks, Gradients, LossBreakdown, LossParams, NetworkModel, Objective, Target};
use crate::sls::profile_seed;

/// Fraction of the epoch budget given to each stage.
pub const STAGE_SHARES: [f64; 4] = [0.10, 0.40, 0.25, 0.25];
/// Samples per parallel work unit. Fixed so the reduction order does not
/// depend on the thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Total epoch budget, split across stages by [`STAGE_SHARES`].
    pub epochs: usize,
    pub learning_rate: f64,
    /// When set, the rate decays geometrically from `learning_rate` to this
    /// value over the epoch budget.
    pub final_learning_rate: Option<f64>,
    pub batch_size: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    /// Off-diagonal tolerance; `None` means 1% of the model's output scale.
    pub epsilon: Option<f64>,
    /// Relative improvement over the stage's best epoch loss below which an
    /// epoch counts as stalled.
    pub stage_threshold: f64,
    /// Consecutive stalled epochs before the next stage starts.
    pub patience: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub drop_degenerate_labels: bool,
    /// Highest stage to run (1..=4).
    pub last_stage: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            learning_rate: 1e-3,
            final_learning_rate: None,
            batch_size: 256,
            gamma1: 0.1,
            gamma2: 0.01,
            gamma3: 0.1,
            epsilon: None,
            stage_threshold: 1e-3,
            patience: 10,
            dropout_rate: 0.1,
            seed: 0,
            drop_degenerate_labels: true,
            last_stage: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.final_learning_rate.is_some_and(|r| !(r > 0.0)) {
            return bad("final learning rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        if !(self.stage_threshold > 0.0) {
            return bad("stage threshold must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout rate must lie in [0, 1)");
        }
        if [self.gamma1, self.gamma2, self.gamma3].iter().any(|g| !(*g >= 0.0)) {
            return bad("regularization weights must be non-negative");
        }
        if !(1..=4).contains(&self.last_stage) {
            return bad("last stage must be 1..=4");
        }
        Ok(())
    }

    /// Epoch caps of the four stages.
    pub fn stage_caps(&self) -> [usize; 4] {
        let mut caps = STAGE_SHARES.map(|s| ((self.epochs as f64) * s).round().max(1.0) as usize);
        let used: usize = caps.iter().sum();
        caps[1] = (caps[1] + self.epochs).saturating_sub(used).max(1);
        caps
    }
}

/// One row of the loss log. `objective` is what the stage minimizes: the
/// anchor loss in stage 1 and `breakdown.total` afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub stage: usize,
    pub epoch: usize,
    pub breakdown: LossBreakdown,
    pub objective: f64,
}

pub const LOSS_LOG_HEADER: &str = "stage,epoch,L_lambda,L_mu,L,L_bd,L_d,total";

pub fn loss_log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from(LOSS_LOG_HEADER);
    s.push('\n');
    for r in rows {
        let b = &r.breakdown;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.stage, r.epoch, b.balance, b.sensitivity, b.primary, b.block_diag, b.diag_dom, r.objective
        ));
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: NetworkModel,
    pub log: Vec<LogRow>,
    /// Epochs actually run per stage.
    pub stage_epochs: Vec<usize>,
}

/// Model architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    /// `None` means the largest emission factor of the case.
    pub output_scale: Option<f64>,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            hidden: vec![40, 40, 40],
            dropout_rate: 0.1,
            output_scale: None,
            seed: 0,
        }
    }
}

/// Per-input normalization `(d − offset) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    /// Division by nominal loads, no offset.
    pub fn nominal(nominal: &[f64]) -> Self {
        Normalization {
            offset: vec![0.0; nominal.len()],
            scale: nominal.iter().map(|v| if *v > 1e-9 { *v } else { 1.0 }).collect(),
        }
    }

    /// Mean and standard deviation of the training loads. Inputs that never
    /// vary fall back to their mean (or 1) as the scale.
    pub fn from_dataset(ds: &Dataset) -> Result<Self, TrainError> {
        let idx = &ds.train;
        if idx.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let n = idx.len() as f64;
        let dd = ds.n_loads();
        let mut offset = vec![0.0; dd];
        let mut scale = vec![0.0; dd];
        for j in 0..dd {
            let mean = idx.iter().map(|&i| ds.scenarios[i].d[j]).sum::<f64>() / n;
            let var = idx.iter().map(|&i| (ds.scenarios[i].d[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            offset[j] = mean;
            scale[j] = if sd > 1e-9 * mean.abs().max(1.0) {
                sd
            } else if mean.abs() > 1e-9 {
                mean.abs()
            } else {
                1.0
            };
        }
        Ok(Normalization { offset, scale })
    }
}

fn sizes_for(n_in: usize, hidden: &[usize], n_out: usize) -> Vec<usize> {
    let mut sizes = vec![n_in];
    sizes.extend(hidden);
    sizes.push(n_out);
    sizes
}

/// Nodal model sized to the inputs; masked when `partition` is given.
pub fn nodal_model(
    norm: &Normalization,
    max_factor: f64,
    spec: &ModelSpec,
    partition: Option<&Partition>,
) -> Result<NetworkModel, TrainError> {
    let d = norm.scale.len();
    let sizes = sizes_for(d, &spec.hidden, d);
    let masks = partition.map(|p| build_masks(p, &sizes)).transpose()?;
    build(sizes, norm, max_factor, spec, masks)
}

/// Zonal model with one output per zone, masked by zone.
pub fn zonal_model(
    norm: &Normalization,
    max_factor: f64,
    spec: &ModelSpec,
    zones: &Partition,
) -> Result<NetworkModel, TrainError> {
    let sizes = sizes_for(norm.scale.len(), &spec.hidden, zones.count);
    let masks = build_masks(zones, &sizes)?;
    build(sizes, norm, max_factor, spec, Some(masks))
}

fn build(
    sizes: Vec<usize>,
    norm: &Normalization,
    max_factor: f64,
    spec: &ModelSpec,
    masks: Option<(Vec<u8>, Vec<u8>)>,
) -> Result<NetworkModel, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = spec.output_scale.unwrap_or(max_factor);
    let mut m = NetworkModel::new(&sizes, norm.scale.clone(), scale, masks, spec.dropout_rate, &mut rng)?;
    m.set_input_normalization(norm.offset.clone(), norm.scale.clone())?;
    Ok(m)
}

/// Adam with the usual defaults.
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * g;
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * g * g;
            params[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Clone, Copy)]
enum Structure<'a> {
    Nodal(&'a Partition),
    Zonal(&'a Partition),
}

fn objective_for<'a>(s: Structure<'a>, stage: usize, cfg: &TrainConfig, epsilon: f64) -> Objective<'a> {
    match (s, stage) {
        (_, 1) => Objective::Anchor,
        (Structure::Nodal(p), _) => Objective::Nodal {
            params: LossParams {
                gamma1: if stage >= 3 { cfg.gamma1 } else { 0.0 },
                gamma2: if stage >= 4 { cfg.gamma2 } else { 0.0 },
                epsilon,
            },
            partition: p,
        },
        (Structure::Zonal(z), _) => Objective::Zonal {
            gamma3: if stage >= 3 { cfg.gamma3 } else { 0.0 },
            zones: z,
        },
    }
}

fn objective_value(o: &Objective<'_>, b: &LossBreakdown, anchor: f64) -> f64 {
    match o {
        Objective::Anchor => anchor,
        _ => b.total,
    }
}

/// Sum of breakdowns, objectives and gradients over `idx`, reduced in a
/// fixed order.
fn batch_sums(
    model: &NetworkModel,
    ds: &Dataset,
    idx: &[usize],
    objective: Objective<'_>,
    dropout_seed: Option<u64>,
) -> Result<(LossBreakdown, f64, Gradients), TrainError> {
    let parts: Vec<Result<(LossBreakdown, f64, Gradients), TrainError>> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = Gradients::zeros(model);
            let mut b = LossBreakdown::default();
            let mut obj = 0.0;
            for &i in chunk {
                let s = &ds.scenarios[i];
                let target = Target {
                    d: &s.d,
                    e: s.e,
                    mu: &s.mu,
                };
                let mut rng = dropout_seed.map(|seed| ChaCha8Rng::seed_from_u64(profile_seed(seed, i)));
                let (bk, gk, value) = sample(model, target, objective, rng.as_mut())?;
                b.accumulate(&bk);
                obj += value;
                g.add(&gk);
            }
            Ok((b, obj, g))
        })
        .collect();
    let mut g = Gradients::zeros(model);
    let mut b = LossBreakdown::default();
    let mut obj = 0.0;
    for p in parts {
        let (bk, ok, gk) = p?;
        b.accumulate(&bk);
        obj += ok;
        g.add(&gk);
    }
    Ok((b, obj, g))
}

fn sample(
    model: &NetworkModel,
    target: Target<'_>,
    objective: Objective<'_>,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(LossBreakdown, Gradients, f64), TrainError> {
    let mut tape = crate::nn::Tape::new(model);
    model.check_input(target.d)?;
    model.run(target.d, rng, &mut tape);
    let mut g = Gradients::zeros(model);
    let (b, value) = crate::nn::tape_objective(model, &tape, target, objective, Some(&mut g))?;
    Ok((b, g, value))
}

/// Mean breakdown and objective over `idx` with dropout off.
pub fn mean_losses(
    model: &NetworkModel,
    ds: &Dataset,
    idx: &[usize],
    objective: Objective<'_>,
) -> Result<(LossBreakdown, f64), TrainError> {
    if idx.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let (b, obj, _) = batch_sums(model, ds, idx, objective, None)?;
    let s = 1.0 / idx.len() as f64;
    Ok((b.scaled(s), obj * s))
}

fn run_stages(
    model: &NetworkModel,
    ds: &Dataset,
    cfg: &TrainConfig,
    structure: Structure<'_>,
    caps: &[(usize, usize)],
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let train = ds.train_indices(cfg.drop_degenerate_labels);
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut model = model.clone();
    model.dropout_rate = cfg.dropout_rate;
    let epsilon = cfg.epsilon.unwrap_or(0.01 * model.output_scale);
    let mut params = model.parameters();
    let mut log = Vec::new();
    let mut stage_epochs = Vec::new();
    let mut epoch = 0usize;
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    for &(stage, cap) in caps {
        let objective = objective_for(structure, stage, cfg, epsilon);
        let mut best: Option<f64> = None;
        let mut stalled = 0;
        let mut ran = 0;
        for _ in 0..cap {
            epoch += 1;
            ran += 1;
            if let Some(last) = cfg.final_learning_rate {
                let frac = (epoch - 1) as f64 / (cfg.epochs.max(2) - 1) as f64;
                adam.lr = cfg.learning_rate * (last / cfg.learning_rate).powf(frac.min(1.0));
            }
            let before = model.clone();
            let epoch_seed = profile_seed(cfg.seed, epoch);
            let mut order = train.clone();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
            let mut sum_b = LossBreakdown::default();
            let mut sum_obj = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let (b, obj, mut g) = batch_sums(&model, ds, batch, objective, Some(epoch_seed ^ 0xD80F))?;
                sum_b.accumulate(&b);
                sum_obj += obj;
                g.scale(1.0 / batch.len() as f64);
                adam.step(&mut params, &g.flatten());
                model.set_parameters(&params);
                // Masked entries are zeroed by set_parameters; keep the
                // optimizer's copy in sync.
                params = model.parameters();
            }
            let n = train.len() as f64;
            let row = LogRow {
                stage,
                epoch,
                breakdown: sum_b.scaled(1.0 / n),
                objective: sum_obj / n,
            };
            if !row.objective.is_finite() || params.iter().any(|p| !p.is_finite()) {
                return Err(TrainError::Divergence {
                    stage,
                    epoch,
                    last: Box::new(before),
                });
            }
            let cur = objective_value(&objective, &row.breakdown, row.objective);
            log.push(row);
            match best {
                Some(b) if b - cur >= cfg.stage_threshold * b.abs().max(1e-12) => {
                    best = Some(cur);
                    stalled = 0;
                }
                Some(_) => stalled += 1,
                None => best = Some(cur),
            }
            if stalled >= cfg.patience.max(1) {
                break;
            }
        }
        stage_epochs.push(ran);
    }
    Ok(TrainOutcome {
        model,
        log,
        stage_epochs,
    })
}

/// Staged training of a nodal model: anchor to the system average, fit the
/// primary loss, then add the block-diagonal and off-diagonal penalties.
pub fn train(
    model: &NetworkModel,
    dataset: &Dataset,
    config: &TrainConfig,
    partition: &Partition,
) -> Result<TrainOutcome, TrainError> {
    if !model.is_nodal() || partition.len() != model.n_inputs() {
        return Err(TrainError::Config("nodal training needs a square model and a matching partition".into()));
    }
    let caps: Vec<(usize, usize)> = config
        .stage_caps()
        .iter()
        .enumerate()
        .map(|(k, c)| (k + 1, *c))
        .take(config.last_stage)
        .collect();
    run_stages(model, dataset, config, Structure::Nodal(partition), &caps)
}

/// Staged training of a zonal model. Stages 3 and 4 merge into a single
/// stage with the off-zone penalty.
pub fn train_zonal(
    model: &NetworkModel,
    dataset: &Dataset,
    config: &TrainConfig,
    zones: &Partition,
) -> Result<TrainOutcome, TrainError> {
    if model.n_outputs() != zones.count || zones.len() != model.n_inputs() {
        return Err(TrainError::Config("zonal model outputs must match the zone count".into()));
    }
    let c = config.stage_caps();
    let caps: Vec<(usize, usize)> = [(1, c[0]), (2, c[1]), (3, c[2] + c[3])]
        .into_iter()
        .take(config.last_stage.min(3))
        .collect();
    run_stages(model, dataset, config, Structure::Zonal(zones), &caps)
}
