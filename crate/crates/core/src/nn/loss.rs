//! Balance projection, losses and their gradients.

use nalgebra::DMatrix;
use rand::Rng;

use super::{Gradients, NetworkModel, NnError, Tape};
use crate::case::Partition;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub epsilon: f64,
}

impl LossParams {
    pub const ZERO: LossParams = LossParams {
        gamma1: 0.0,
        gamma2: 0.0,
        epsilon: 0.0,
    };
}

/// Loss components of one scenario. For zonal models `block_diag` holds the
/// off-zone Jacobian mass and `gamma1` its weight.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub balance: f64,
    pub sensitivity: f64,
    pub primary: f64,
    pub block_diag: f64,
    pub diag_dom: f64,
    pub total: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub epsilon: f64,
}

impl LossBreakdown {
    fn compose(balance: f64, sensitivity: f64, block_diag: f64, diag_dom: f64, p: LossParams) -> Self {
        let primary = balance + sensitivity;
        LossBreakdown {
            balance,
            sensitivity,
            primary,
            block_diag,
            diag_dom,
            total: primary + p.gamma1 * block_diag + p.gamma2 * diag_dom,
            gamma1: p.gamma1,
            gamma2: p.gamma2,
            epsilon: p.epsilon,
        }
    }

    /// Component-wise sum, used for epoch averages.
    pub fn accumulate(&mut self, o: &LossBreakdown) {
        self.balance += o.balance;
        self.sensitivity += o.sensitivity;
        self.primary += o.primary;
        self.block_diag += o.block_diag;
        self.diag_dom += o.diag_dom;
        self.total += o.total;
        self.gamma1 = o.gamma1;
        self.gamma2 = o.gamma2;
        self.epsilon = o.epsilon;
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.balance *= s;
        self.sensitivity *= s;
        self.primary *= s;
        self.block_diag *= s;
        self.diag_dom *= s;
        self.total *= s;
        self
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Projection of `λ̂` onto the hyperplane `{λ : dᵀλ = E}`.
pub fn project_balance(lambda_hat: &[f64], d: &[f64], e: f64) -> Result<Vec<f64>, NnError> {
    let n2 = dot(d, d);
    if !(n2 > 0.0) {
        return Err(NnError::ZeroLoad);
    }
    let r = (dot(d, lambda_hat) - e) / n2;
    Ok(lambda_hat.iter().zip(d).map(|(l, di)| l - r * di).collect())
}

/// `(dᵀλ̂ − E)² / ‖d‖²`, the squared distance to the balance hyperplane.
pub fn balance_loss(lambda_hat: &[f64], d: &[f64], e: f64) -> Result<f64, NnError> {
    let n2 = dot(d, d);
    if !(n2 > 0.0) {
        return Err(NnError::ZeroLoad);
    }
    let r = dot(d, lambda_hat) - e;
    Ok(r * r / n2)
}

/// `μ̂ = λ̂ + Jᵀd`, the gradient of `dᵀλ̂(d)`.
pub fn sensitivity_estimate(lambda_hat: &[f64], jac: &DMatrix<f64>, d: &[f64]) -> Result<Vec<f64>, NnError> {
    if jac.nrows() != jac.ncols() || jac.nrows() != d.len() || lambda_hat.len() != d.len() {
        return Err(NnError::NotNodal {
            inputs: jac.ncols(),
            outputs: jac.nrows(),
        });
    }
    Ok((0..d.len())
        .map(|j| lambda_hat[j] + (0..d.len()).map(|i| jac[(i, j)] * d[i]).sum::<f64>())
        .collect())
}

/// `‖μ̂ − μ‖²`.
pub fn sensitivity_loss(mu_hat: &[f64], mu: &[f64]) -> f64 {
    mu_hat.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `Σ |J_ij|` over pairs in different groups.
pub fn regularizer_bd(jac: &DMatrix<f64>, partition: &Partition) -> f64 {
    let mut s = 0.0;
    for i in 0..jac.nrows() {
        for j in 0..jac.ncols() {
            if !partition.same_group(i, j) {
                s += jac[(i, j)].abs();
            }
        }
    }
    s
}

/// `Σ_{i≠j} max(|J_ij| − ε, 0)`.
pub fn regularizer_dd(jac: &DMatrix<f64>, epsilon: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..jac.nrows() {
        for j in 0..jac.ncols() {
            if i != j {
                s += (jac[(i, j)].abs() - epsilon).max(0.0);
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub lambda_hat: Vec<f64>,
    pub lambda_tilde: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub jacobian: DMatrix<f64>,
}

/// Full nodal prediction at `d` with balance target `e`.
pub fn predict(model: &NetworkModel, d: &[f64], e: f64) -> Result<Prediction, NnError> {
    if !model.is_nodal() {
        return Err(NnError::NotNodal {
            inputs: model.n_inputs(),
            outputs: model.n_outputs(),
        });
    }
    let jacobian = model.input_jacobian(d)?;
    let lambda_hat = model.forward(d)?;
    Ok(Prediction {
        lambda_tilde: project_balance(&lambda_hat, d, e)?,
        mu_hat: sensitivity_estimate(&lambda_hat, &jacobian, d)?,
        lambda_hat,
        jacobian,
    })
}

/// Training target of one scenario.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    pub d: &'a [f64],
    pub e: f64,
    pub mu: &'a [f64],
}

/// What a training step minimizes.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// `Σ_i (λ̂_i − E/Σd)²`: anchors the output at the system average.
    Anchor,
    /// `L + γ1·L_bd + γ2·L_d`.
    Nodal {
        params: LossParams,
        partition: &'a Partition,
    },
    /// Zonal `L + γ3·‖Jᶻ off-zone‖₁`.
    Zonal { gamma3: f64, zones: &'a Partition },
}

/// Losses of the forward pass stored in `tape` and, if `grads` is given,
/// the accumulated parameter gradients of the objective. Returns the
/// breakdown and the objective value.
pub fn tape_objective(
    model: &NetworkModel,
    tape: &Tape,
    target: Target<'_>,
    objective: Objective<'_>,
    grads: Option<&mut Gradients>,
) -> Result<(LossBreakdown, f64), NnError> {
    let dd = model.n_inputs();
    let n_out = model.n_outputs();
    let lh = &tape.out;
    let mut g_out = vec![0.0; n_out];
    let mut g_jac = vec![0.0; n_out * dd];
    let (breakdown, value) = match objective {
        Objective::Nodal { params, partition } => nodal_terms(model, tape, target, params, partition, &mut g_out, &mut g_jac)?,
        Objective::Zonal { gamma3, zones } => zonal_terms(tape, target, gamma3, zones, n_out, &mut g_out, &mut g_jac)?,
        Objective::Anchor => {
            let total: f64 = target.d.iter().sum();
            if !(total > 0.0) {
                return Err(NnError::ZeroLoad);
            }
            let eta = target.e / total;
            let mut v = 0.0;
            for k in 0..n_out {
                let r = lh[k] - eta;
                v += r * r;
                g_out[k] = 2.0 * r;
            }
            // Report the primary losses alongside the anchor.
            let b = if model.is_nodal() {
                let mut scratch_o = vec![0.0; n_out];
                let mut scratch_j = vec![0.0; n_out * dd];
                let single = Partition::single(dd);
                nodal_terms(model, tape, target, LossParams::ZERO, &single, &mut scratch_o, &mut scratch_j)?.0
            } else {
                LossBreakdown::default()
            };
            (b, v)
        }
    };
    if let Some(g) = grads {
        model.backward(tape, &g_out, &g_jac, g);
    }
    Ok((breakdown, value))
}

fn nodal_terms(
    model: &NetworkModel,
    tape: &Tape,
    t: Target<'_>,
    p: LossParams,
    partition: &Partition,
    g_out: &mut [f64],
    g_jac: &mut [f64],
) -> Result<(LossBreakdown, f64), NnError> {
    let dd = model.n_inputs();
    if !model.is_nodal() {
        return Err(NnError::NotNodal {
            inputs: dd,
            outputs: model.n_outputs(),
        });
    }
    let (d, lh, jac) = (t.d, &tape.out, &tape.jac);
    let n2 = dot(d, d);
    if !(n2 > 0.0) {
        return Err(NnError::ZeroLoad);
    }
    let r = dot(d, lh) - t.e;
    let balance = r * r / n2;
    let mut rho = vec![0.0; dd];
    for j in 0..dd {
        let mut m = lh[j];
        for i in 0..dd {
            m += jac[i * dd + j] * d[i];
        }
        rho[j] = m - t.mu[j];
    }
    let sensitivity = dot(&rho, &rho);
    let mut bd = 0.0;
    let mut ddom = 0.0;
    for j in 0..dd {
        g_out[j] = 2.0 * r * d[j] / n2 + 2.0 * rho[j];
    }
    for i in 0..dd {
        for j in 0..dd {
            let v = jac[i * dd + j];
            let mut g = 2.0 * d[i] * rho[j];
            if !partition.same_group(i, j) {
                bd += v.abs();
                g += p.gamma1 * sign(v);
            }
            if i != j {
                let excess = v.abs() - p.epsilon;
                if excess > 0.0 {
                    ddom += excess;
                    g += p.gamma2 * sign(v);
                }
            }
            g_jac[i * dd + j] = g;
        }
    }
    let b = LossBreakdown::compose(balance, sensitivity, bd, ddom, p);
    Ok((b, b.total))
}

/// Zone loads `dᶻ = M·d`; errors on a zone without load.
pub fn zone_loads(d: &[f64], zones: &Partition) -> Result<Vec<f64>, NnError> {
    let mut dz = vec![0.0; zones.count];
    for (i, v) in d.iter().enumerate() {
        dz[zones.group_of(i)] += v;
    }
    if let Some(k) = dz.iter().position(|v| !(*v > 0.0)) {
        return Err(NnError::EmptyZone(k));
    }
    Ok(dz)
}

/// Load-weighted zonal average of a per-load vector.
pub fn zonal_average(values: &[f64], d: &[f64], zones: &Partition) -> Result<Vec<f64>, NnError> {
    let dz = zone_loads(d, zones)?;
    let mut out = vec![0.0; zones.count];
    for i in 0..d.len() {
        let k = zones.group_of(i);
        out[k] += d[i] / dz[k] * values[i];
    }
    Ok(out)
}

fn zonal_terms(
    tape: &Tape,
    t: Target<'_>,
    gamma3: f64,
    zones: &Partition,
    n_out: usize,
    g_out: &mut [f64],
    g_jac: &mut [f64],
) -> Result<(LossBreakdown, f64), NnError> {
    let d = t.d;
    let dd = d.len();
    if zones.len() != dd || zones.count != n_out {
        return Err(NnError::Dimension {
            expected: n_out,
            got: zones.count,
        });
    }
    let (lh, jac) = (&tape.out, &tape.jac);
    let dz = zone_loads(d, zones)?;
    let n2 = dot(&dz, &dz);
    let r = dot(&dz, lh) - t.e;
    let balance = r * r / n2;
    // ν_i = ∂(dᶻᵀλ̂)/∂d_i
    let mut nu = vec![0.0; dd];
    for i in 0..dd {
        let mut v = lh[zones.group_of(i)];
        for k in 0..n_out {
            v += dz[k] * jac[k * dd + i];
        }
        nu[i] = v;
    }
    let mu_hat_z = zonal_average(&nu, d, zones)?;
    let mu_z = zonal_average(t.mu, d, zones)?;
    let rho: Vec<f64> = mu_hat_z.iter().zip(&mu_z).map(|(a, b)| a - b).collect();
    let sensitivity = dot(&rho, &rho);
    for k in 0..n_out {
        g_out[k] = 2.0 * r * dz[k] / n2;
    }
    let q: Vec<f64> = (0..dd)
        .map(|i| {
            let k = zones.group_of(i);
            2.0 * rho[k] * d[i] / dz[k]
        })
        .collect();
    for i in 0..dd {
        g_out[zones.group_of(i)] += q[i];
    }
    let mut off = 0.0;
    for k in 0..n_out {
        for i in 0..dd {
            let v = jac[k * dd + i];
            let mut g = dz[k] * q[i];
            if zones.group_of(i) != k {
                off += v.abs();
                g += gamma3 * sign(v);
            }
            g_jac[k * dd + i] = g;
        }
    }
    let p = LossParams {
        gamma1: gamma3,
        gamma2: 0.0,
        epsilon: 0.0,
    };
    let b = LossBreakdown::compose(balance, sensitivity, off, 0.0, p);
    Ok((b, b.total))
}

/// Loss breakdown of one scenario in evaluation mode.
pub fn total_loss(
    model: &NetworkModel,
    target: Target<'_>,
    params: LossParams,
    partition: &Partition,
) -> Result<LossBreakdown, NnError> {
    model.check_input(target.d)?;
    let mut tape = Tape::new(model);
    model.run(target.d, None::<&mut rand_chacha::ChaCha8Rng>, &mut tape);
    Ok(tape_objective(model, &tape, target, Objective::Nodal { params, partition }, None)?.0)
}

/// Exact gradients of the total loss with respect to every parameter.
pub fn parameter_gradients(
    model: &NetworkModel,
    target: Target<'_>,
    params: LossParams,
    partition: &Partition,
) -> Result<(LossBreakdown, Gradients), NnError> {
    objective_gradients(model, target, Objective::Nodal { params, partition }, None::<&mut rand_chacha::ChaCha8Rng>)
}

/// Objective value, breakdown and gradients of one scenario, with dropout
/// when `rng` is given.
pub fn objective_gradients<R: Rng>(
    model: &NetworkModel,
    target: Target<'_>,
    objective: Objective<'_>,
    rng: Option<&mut R>,
) -> Result<(LossBreakdown, Gradients), NnError> {
    model.check_input(target.d)?;
    let mut tape = Tape::new(model);
    model.run(target.d, rng, &mut tape);
    let mut g = Gradients::zeros(model);
    let (b, _) = tape_objective(model, &tape, target, objective, Some(&mut g))?;
    Ok((b, g))
}

/// Outputs of a zonal model at one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalOutput {
    pub lambda_hat: Vec<f64>,
    pub lambda_tilde: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub mu: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub losses: LossBreakdown,
}

pub fn zonal_forward_and_losses(
    model: &NetworkModel,
    d: &[f64],
    zones: &Partition,
    e: f64,
    mu: &[f64],
    gamma3: f64,
) -> Result<ZonalOutput, NnError> {
    model.check_input(d)?;
    let mut tape = Tape::new(model);
    model.run(d, None::<&mut rand_chacha::ChaCha8Rng>, &mut tape);
    let target = Target { d, e, mu };
    let (losses, _) = tape_objective(model, &tape, target, Objective::Zonal { gamma3, zones }, None)?;
    let dd = d.len();
    let k = model.n_outputs();
    let jacobian = DMatrix::from_fn(k, dd, |r, c| tape.jac[r * dd + c]);
    let dz = zone_loads(d, zones)?;
    let mut nu = vec![0.0; dd];
    for i in 0..dd {
        nu[i] = tape.out[zones.group_of(i)] + (0..k).map(|z| dz[z] * jacobian[(z, i)]).sum::<f64>();
    }
    Ok(ZonalOutput {
        lambda_tilde: project_balance(&tape.out, &dz, e)?,
        lambda_hat: tape.out.clone(),
        mu_hat: zonal_average(&nu, d, zones)?,
        mu: zonal_average(mu, d, zones)?,
        jacobian,
        losses,
    })
}

/// Expands zonal values to loads.
pub fn expand_zonal(values: &[f64], zones: &Partition) -> Vec<f64> {
    (0..zones.len()).map(|i| values[zones.group_of(i)]).collect()
}
