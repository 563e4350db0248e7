//! Spatial load shifting: moving flexible demand between buses at constant
//! total, guided either by a locational emission signal or by direct search
//! over realized market outcomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dispatch::{DispatchError, DispatchModel, LmceMethod, DEFAULT_DELTA};
use crate::metrics::MetricError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlsError {
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("flexible set is empty")]
    EmptySet,
    #[error("flexible load index {0} is out of range")]
    BadIndex(usize),
    #[error("shift polytope is empty")]
    EmptyPolytope,
    #[error("signal has {got} entries, expected {expected}")]
    SignalLength { expected: usize, got: usize },
    #[error("signal `{name}` failed: {message}")]
    Signal { name: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundMode {
    /// `s_i ∈ [(1−Δ)d_i, (1+Δ)d_i]`.
    Fraction(f64),
    /// `s_i ∈ [max(d_i − cap, 0), d_i + cap]`.
    Cap(f64),
}

/// The shift polytope `{s : l ≤ s ≤ u, Σs = Σd_S}` around base loads `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    pub flexible: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub base: Vec<f64>,
}

impl ShiftSpec {
    pub fn new(base: &[f64], flexible: &[usize], mode: BoundMode) -> Result<Self, SlsError> {
        if flexible.is_empty() {
            return Err(SlsError::EmptySet);
        }
        let mut lower = Vec::with_capacity(flexible.len());
        let mut upper = Vec::with_capacity(flexible.len());
        for &i in flexible {
            let di = *base.get(i).ok_or(SlsError::BadIndex(i))?;
            let (lo, hi) = match mode {
                BoundMode::Fraction(f) => ((1.0 - f) * di, (1.0 + f) * di),
                BoundMode::Cap(c) => ((di - c).max(0.0), di + c),
            };
            if !(lo <= di && di <= hi) {
                return Err(SlsError::EmptyPolytope);
            }
            lower.push(lo);
            upper.push(hi);
        }
        Ok(ShiftSpec {
            flexible: flexible.to_vec(),
            lower,
            upper,
            base: base.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.flexible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flexible.is_empty()
    }

    /// Base loads restricted to the flexible set.
    pub fn base_s(&self) -> Vec<f64> {
        self.flexible.iter().map(|&i| self.base[i]).collect()
    }

    pub fn total(&self) -> f64 {
        self.base_s().iter().sum()
    }

    /// Full load vector with the flexible entries replaced by `s`.
    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        let mut d = self.base.clone();
        for (k, &i) in self.flexible.iter().enumerate() {
            d[i] = s[k];
        }
        d
    }

    /// Restriction of a full-length signal to the flexible set.
    pub fn restrict(&self, phi: &[f64]) -> Vec<f64> {
        self.flexible.iter().map(|&i| phi[i]).collect()
    }

    pub fn contains(&self, s: &[f64], tol: f64) -> bool {
        s.len() == self.len()
            && (s.iter().sum::<f64>() - self.total()).abs() <= tol
            && s.iter()
                .enumerate()
                .all(|(k, v)| *v >= self.lower[k] - tol && *v <= self.upper[k] + tol)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShiftMethod {
    Signal(String),
    Opt,
}

impl ShiftMethod {
    pub fn name(&self) -> &str {
        match self {
            ShiftMethod::Signal(s) => s,
            ShiftMethod::Opt => "Opt-shift",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftPlan {
    pub s: Vec<f64>,
    pub method: ShiftMethod,
    /// `φᵀs` for signal plans, realized `E` for the search.
    pub estimated: f64,
    pub e_pre: Option<f64>,
    pub e_post: Option<f64>,
}

impl ShiftPlan {
    pub fn delta_e(&self) -> Option<f64> {
        Some(self.e_post? - self.e_pre?)
    }
}

/// Minimizes `φᵀs` over the shift polytope.
///
/// Mass moves from the highest-signal bus to the lowest while the signal
/// of the receiver is strictly smaller, so equal signals leave the base
/// point untouched. Ties in the ordering go to the lower position in `S`.
pub fn solve_signal_sls(spec: &ShiftSpec, phi_s: &[f64], name: &str) -> Result<ShiftPlan, SlsError> {
    let n = spec.len();
    if phi_s.len() != n {
        return Err(SlsError::SignalLength {
            expected: n,
            got: phi_s.len(),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| phi_s[a].total_cmp(&phi_s[b]).then(a.cmp(&b)));
    let mut s = spec.base_s();
    let (mut lo, mut hi) = (0usize, n - 1);
    while lo < hi {
        let (a, b) = (order[lo], order[hi]);
        if phi_s[a] >= phi_s[b] {
            break;
        }
        let room_up = spec.upper[a] - s[a];
        let room_down = s[b] - spec.lower[b];
        let t = room_up.min(room_down);
        s[a] += t;
        s[b] -= t;
        if room_up <= room_down {
            s[a] = spec.upper[a];
            lo += 1;
        }
        if room_down <= room_up {
            s[b] = spec.lower[b];
            hi -= 1;
        }
    }
    let estimated = phi_s.iter().zip(&s).map(|(p, v)| p * v).sum();
    Ok(ShiftPlan {
        s,
        method: ShiftMethod::Signal(name.to_string()),
        estimated,
        e_pre: None,
        e_post: None,
    })
}

/// Number of vertex candidates: one coordinate free, the rest at a bound.
pub fn vertex_candidate_count(n: usize) -> usize {
    n * (1usize << (n - 1))
}

/// Feasible vertices of the shift polytope, deduplicated, in enumeration
/// order. Also returns the number of candidates examined.
pub fn enumerate_vertices(spec: &ShiftSpec) -> (Vec<Vec<f64>>, usize) {
    let n = spec.len();
    let total = spec.total();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut candidates = 0;
    for free in 0..n {
        for mask in 0..(1usize << (n - 1)) {
            candidates += 1;
            let mut s = vec![0.0; n];
            let mut bit = 0;
            let mut fixed_sum = 0.0;
            for k in 0..n {
                if k == free {
                    continue;
                }
                s[k] = if mask >> bit & 1 == 1 { spec.upper[k] } else { spec.lower[k] };
                fixed_sum += s[k];
                bit += 1;
            }
            let v = total - fixed_sum;
            let tol = 1e-9 * (1.0 + total.abs());
            if v < spec.lower[free] - tol || v > spec.upper[free] + tol {
                continue;
            }
            s[free] = v.clamp(spec.lower[free], spec.upper[free]);
            if !out.iter().any(|o| o.iter().zip(&s).all(|(a, b)| (a - b).abs() <= tol)) {
                out.push(s);
            }
        }
    }
    (out, candidates)
}

/// Re-clears the market at the shifted loads and records the outcome.
pub fn realize_shift(model: &DispatchModel, spec: &ShiftSpec, plan: &ShiftPlan) -> Result<ShiftPlan, SlsError> {
    let e_pre = match plan.e_pre {
        Some(e) => e,
        None => model.solve(&spec.base)?.total_emissions,
    };
    let e_post = model.solve(&spec.apply(&plan.s))?.total_emissions;
    Ok(ShiftPlan {
        e_pre: Some(e_pre),
        e_post: Some(e_post),
        ..plan.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub random_vertices: usize,
    pub random_interior: usize,
    /// Also start from the best enumerated vertices when `|S|` is at most
    /// this size.
    pub enumerate_up_to: usize,
    pub best_vertex_starts: usize,
    pub max_steps: usize,
    pub line_search: usize,
    pub improvement_tol: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            random_vertices: 20,
            random_interior: 20,
            enumerate_up_to: 8,
            best_vertex_starts: 5,
            max_steps: 30,
            line_search: 8,
            improvement_tol: 1e-6,
            seed: 0,
        }
    }
}

/// Heuristic bilevel search: multi-start projected descent on realized
/// emissions, using the LMCE on `S` as the search direction.
pub fn solve_opt_shift(model: &DispatchModel, spec: &ShiftSpec, cfg: &SearchConfig) -> Result<ShiftPlan, SlsError> {
    let e_pre = model.solve(&spec.base)?.total_emissions;
    let eval = |s: &[f64]| model.solve(&spec.apply(s)).ok().map(|r| r.total_emissions);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = spec.len();
    let mut starts = vec![spec.base_s()];
    let random_vertex = |rng: &mut ChaCha8Rng| {
        let phi: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        solve_signal_sls(spec, &phi, "").map(|p| p.s)
    };
    let mut vertices = Vec::new();
    for _ in 0..cfg.random_vertices {
        vertices.push(random_vertex(&mut rng)?);
    }
    starts.extend(vertices.iter().cloned());
    for _ in 0..cfg.random_interior {
        let a = random_vertex(&mut rng)?;
        let b = random_vertex(&mut rng)?;
        let w: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let ws = w.iter().sum::<f64>().max(1e-12);
        let base = spec.base_s();
        starts.push(
            (0..n)
                .map(|k| (w[0] * base[k] + w[1] * a[k] + w[2] * b[k]) / ws)
                .collect(),
        );
    }
    if n <= cfg.enumerate_up_to {
        let (all, _) = enumerate_vertices(spec);
        let mut scored: Vec<(f64, Vec<f64>)> = all
            .into_iter()
            .filter_map(|v| eval(&v).map(|e| (e, v)))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        starts.extend(scored.into_iter().take(cfg.best_vertex_starts).map(|(_, v)| v));
    }
    let results: Vec<Option<(f64, Vec<f64>)>> = starts
        .par_iter()
        .map(|s0| {
            let e0 = eval(s0)?;
            Some(local_search(model, spec, s0.clone(), e0, cfg))
        })
        .collect();
    let mut best = (e_pre, spec.base_s());
    for (e, s) in results.into_iter().flatten() {
        if e < best.0 - 1e-12 {
            best = (e, s);
        }
    }
    Ok(ShiftPlan {
        estimated: best.0,
        s: best.1,
        method: ShiftMethod::Opt,
        e_pre: Some(e_pre),
        e_post: Some(best.0),
    })
}

fn local_search(model: &DispatchModel, spec: &ShiftSpec, mut s: Vec<f64>, mut e: f64, cfg: &SearchConfig) -> (f64, Vec<f64>) {
    let n = spec.len();
    for _ in 0..cfg.max_steps {
        let d = spec.apply(&s);
        let Ok(mu) = model.lmce(&d, LmceMethod::Basis, DEFAULT_DELTA) else {
            break;
        };
        let grad = spec.restrict(&mu.mu);
        let dir = project_direction(spec, &s, &grad.iter().map(|g| -g).collect::<Vec<_>>());
        let t_max = max_step(spec, &s, &dir);
        if !(t_max > 1e-12) {
            break;
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut t = t_max;
        for _ in 0..cfg.line_search {
            let cand: Vec<f64> = (0..n)
                .map(|k| (s[k] + t * dir[k]).clamp(spec.lower[k], spec.upper[k]))
                .collect();
            if let Ok(r) = model.solve(&spec.apply(&cand)) {
                if best.as_ref().map_or(true, |b| r.total_emissions < b.0) {
                    best = Some((r.total_emissions, cand));
                }
            }
            t *= 0.5;
        }
        match best {
            Some((eb, sb)) if eb < e - cfg.improvement_tol => {
                e = eb;
                s = sb;
            }
            _ => break,
        }
    }
    (e, s)
}

/// Projection of `v` onto `{δ : Σδ = 0}` with coordinates that would leave
/// the box held at zero.
fn project_direction(spec: &ShiftSpec, s: &[f64], v: &[f64]) -> Vec<f64> {
    let n = spec.len();
    let mut free = vec![true; n];
    let tol = 1e-9;
    let mut dir = vec![0.0; n];
    for _ in 0..=n {
        let idx: Vec<usize> = (0..n).filter(|&k| free[k]).collect();
        if idx.is_empty() {
            return vec![0.0; n];
        }
        let mean = idx.iter().map(|&k| v[k]).sum::<f64>() / idx.len() as f64;
        dir.iter_mut().for_each(|x| *x = 0.0);
        for &k in &idx {
            dir[k] = v[k] - mean;
        }
        let mut changed = false;
        for &k in &idx {
            if (dir[k] < 0.0 && s[k] <= spec.lower[k] + tol) || (dir[k] > 0.0 && s[k] >= spec.upper[k] - tol) {
                free[k] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dir
}

fn max_step(spec: &ShiftSpec, s: &[f64], dir: &[f64]) -> f64 {
    let mut t = f64::INFINITY;
    for k in 0..spec.len() {
        if dir[k] > 1e-12 {
            t = t.min((spec.upper[k] - s[k]) / dir[k]);
        } else if dir[k] < -1e-12 {
            t = t.min((s[k] - spec.lower[k]) / -dir[k]);
        }
    }
    if t.is_finite() {
        t
    } else {
        0.0
    }
}

/// A source of per-load emission signals for the experiment driver.
pub trait SignalSource: Sync {
    fn name(&self) -> String;
    /// Full-length signal at base loads `d`.
    fn signal(&self, d: &[f64]) -> Result<Vec<f64>, SlsError>;
}

/// One row of the experiment table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub profile_seed: u64,
    pub method: String,
    pub e_pre: f64,
    pub e_post: f64,
    pub delta_e: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub flexible: Vec<usize>,
    pub mode: BoundMode,
    pub n_profiles: usize,
    pub scale_range: (f64, f64),
    pub jitter: f64,
    pub seed: u64,
    pub search: SearchConfig,
    pub include_opt: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ExperimentRow>,
    /// Profiles or single methods that failed, as `(profile_seed, method,
    /// message)`; the method is empty when the whole profile was skipped.
    pub failures: Vec<(u64, String, String)>,
}

/// Seed of profile `k` in an experiment seeded with `seed`.
pub fn profile_seed(seed: u64, k: usize) -> u64 {
    let mut z = seed ^ (k as u64).wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Load profile drawn from `seed`: one global scale and per-bus jitter.
pub fn sample_profile(nominal: &[f64], scale_range: (f64, f64), jitter: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = if scale_range.1 > scale_range.0 {
        rng.gen_range(scale_range.0..=scale_range.1)
    } else {
        scale_range.0
    };
    nominal
        .iter()
        .map(|v| {
            let j = if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
            v * scale * (1.0 + j)
        })
        .collect()
}

/// Runs every signal (and optionally the search benchmark) on sampled
/// profiles. Profiles are independent; rows come back in profile order.
pub fn sls_experiment(
    model: &DispatchModel,
    nominal: &[f64],
    signals: &[&dyn SignalSource],
    cfg: &ExperimentConfig,
) -> ExperimentOutput {
    type ProfileOutcome = Result<(u64, Vec<ExperimentRow>, Vec<(String, String)>), (u64, String)>;
    let per_profile: Vec<ProfileOutcome> = (0..cfg.n_profiles)
        .into_par_iter()
        .map(|k| {
            let ps = profile_seed(cfg.seed, k);
            let d = sample_profile(nominal, cfg.scale_range, cfg.jitter, ps);
            run_profile(model, &d, ps, signals, cfg)
                .map(|(rows, failed)| (ps, rows, failed))
                .map_err(|e| (ps, e.to_string()))
        })
        .collect();
    let mut out = ExperimentOutput {
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for r in per_profile {
        match r {
            Ok((ps, rows, failed)) => {
                out.rows.extend(rows);
                out.failures
                    .extend(failed.into_iter().map(|(m, e)| (ps, m, e)));
            }
            Err((ps, e)) => out.failures.push((ps, String::new(), e)),
        }
    }
    out
}

/// Rows of one profile plus `(method, message)` for methods whose shifted
/// loads could not be cleared.
pub fn run_profile(
    model: &DispatchModel,
    d: &[f64],
    ps: u64,
    signals: &[&dyn SignalSource],
    cfg: &ExperimentConfig,
) -> Result<(Vec<ExperimentRow>, Vec<(String, String)>), SlsError> {
    let spec = ShiftSpec::new(d, &cfg.flexible, cfg.mode)?;
    let e_pre = model.solve(d)?.total_emissions;
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for sig in signals {
        let phi = sig.signal(d)?;
        if phi.len() != d.len() {
            return Err(SlsError::SignalLength {
                expected: d.len(),
                got: phi.len(),
            });
        }
        let mut plan = solve_signal_sls(&spec, &spec.restrict(&phi), &sig.name())?;
        plan.e_pre = Some(e_pre);
        match realize_shift(model, &spec, &plan) {
            Ok(plan) => rows.push(ExperimentRow {
                profile_seed: ps,
                method: sig.name(),
                e_pre,
                e_post: plan.e_post.unwrap(),
                delta_e: plan.delta_e().unwrap(),
            }),
            Err(e) => failed.push((sig.name(), e.to_string())),
        }
    }
    if cfg.include_opt {
        let search = SearchConfig {
            seed: ps,
            ..cfg.search.clone()
        };
        let plan = solve_opt_shift(model, &spec, &search)?;
        rows.push(ExperimentRow {
            profile_seed: ps,
            method: ShiftMethod::Opt.name().to_string(),
            e_pre,
            e_post: plan.e_post.unwrap(),
            delta_e: plan.delta_e().unwrap(),
        });
    }
    Ok((rows, failed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub method: String,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Histogram of `delta_e` per method over a shared range.
pub fn histogram(rows: &[ExperimentRow], bins: usize) -> Vec<HistogramBin> {
    let mut methods: Vec<String> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let lo = rows.iter().map(|r| r.delta_e).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.delta_e).fold(f64::NEG_INFINITY, f64::max);
    if rows.is_empty() || bins == 0 {
        return Vec::new();
    }
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut out = Vec::new();
    for m in &methods {
        let mut counts = vec![0usize; bins];
        for r in rows.iter().filter(|r| &r.method == m) {
            let b = (((r.delta_e - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        for (b, count) in counts.into_iter().enumerate() {
            out.push(HistogramBin {
                method: m.clone(),
                lo: lo + b as f64 * width,
                hi: lo + (b + 1) as f64 * width,
                count,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn constant_signal_keeps_base() {
        let spec = ShiftSpec::new(&[5.0, 5.0, 3.0], &[0, 1, 2], BoundMode::Cap(1.0)).unwrap();
        let p = solve_signal_sls(&spec, &[0.5, 0.5, 0.5], "c").unwrap();
        assert_eq!(p.s, vec![5.0, 5.0, 3.0]);
    }

    #[test]
    fn shifts_toward_lower_signal() {
        let spec = ShiftSpec::new(&[5.0, 5.0], &[0, 1], BoundMode::Cap(1.0)).unwrap();
        let p = solve_signal_sls(&spec, &[2.0, 1.0], "x").unwrap();
        assert_eq!(p.s, vec![4.0, 6.0]);
    }

    #[test]
    fn two_bus_opt_shift() {
        let c = fixtures::case2();
        let m = DispatchModel::new(&c).unwrap();
        let spec = ShiftSpec::new(&[5.0, 5.0], &[0, 1], BoundMode::Cap(1.0)).unwrap();
        let p = solve_opt_shift(&m, &spec, &SearchConfig::default()).unwrap();
        assert_eq!(p.s, vec![4.0, 6.0]);
        assert_eq!(p.delta_e(), Some(-1.0));
    }

    #[test]
    fn two_bus_signals_realized() {
        let m = DispatchModel::new(&fixtures::case2()).unwrap();
        let spec = ShiftSpec::new(&[5.0, 5.0], &[0, 1], BoundMode::Cap(1.0)).unwrap();
        let tied = solve_signal_sls(&spec, &[1.0, 1.0], "LMCE").unwrap();
        assert_eq!(realize_shift(&m, &spec, &tied).unwrap().delta_e(), Some(0.0));
        let split = solve_signal_sls(&spec, &[1.0, 0.8], "split").unwrap();
        assert_eq!(realize_shift(&m, &spec, &split).unwrap().delta_e(), Some(-1.0));
    }

    #[test]
    fn vertex_counts() {
        for n in 1..=6 {
            let base: Vec<f64> = (0..n).map(|k| 10.0 + k as f64).collect();
            let spec = ShiftSpec::new(&base, &(0..n).collect::<Vec<_>>(), BoundMode::Cap(2.0)).unwrap();
            let (v, cand) = enumerate_vertices(&spec);
            assert_eq!(cand, vertex_candidate_count(n));
            assert!(v.len() <= cand);
            assert!(v.iter().all(|s| spec.contains(s, 1e-9)));
        }
    }

    #[test]
    fn empty_set_rejected() {
        assert_eq!(ShiftSpec::new(&[1.0], &[], BoundMode::Cap(1.0)), Err(SlsError::EmptySet));
    }

    #[test]
    fn histogram_counts_all_rows() {
        let rows: Vec<ExperimentRow> = (0..10)
            .map(|k| ExperimentRow {
                profile_seed: k,
                method: if k % 2 == 0 { "a".into() } else { "b".into() },
                e_pre: 1.0,
                e_post: 1.0 + k as f64,
                delta_e: k as f64,
            })
            .collect();
        let h = histogram(&rows, 4);
        assert_eq!(h.len(), 8);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 10);
    }
}
