use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::TrainError;
use crate::case::{case_hash, GridCase};
use crate::dispatch::DispatchModel;
use crate::sls::profile_seed;

/// One training sample: loads and their dispatch labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScenario {
    pub seed: u64,
    pub scale: f64,
    pub d: Vec<f64>,
    pub e: f64,
    pub mu: Vec<f64>,
    pub degenerate_flags: Vec<bool>,
}

impl LabeledScenario {
    pub fn is_degenerate(&self) -> bool {
        self.degenerate_flags.iter().any(|f| *f)
    }
}

/// Zero-sum perturbation of the flexible loads, bounded by `cap` MW.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftJitter {
    /// Load indices.
    pub flexible: Vec<usize>,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub scale_range: (f64, f64),
    /// Independent multiplicative per-load jitter, as a fraction.
    pub jitter: f64,
    pub shift: Option<ShiftJitter>,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_samples: 50_000,
            scale_range: (1.10, 1.30),
            jitter: 0.05,
            shift: None,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub case_hash: String,
    pub config: DatasetConfig,
    pub scenarios: Vec<LabeledScenario>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Labels whose basis stays valid for less than this many MW around the
/// sample are flagged degenerate. Near a kink the slope can be extreme and
/// does not describe the neighbourhood.
pub const LABEL_WINDOW: f64 = 0.05;

/// Number of draws per sample before giving up.
pub const MAX_TRIES: usize = 10;

fn draw(nominal: &[f64], cfg: &DatasetConfig, rng: &mut ChaCha8Rng) -> (f64, Vec<f64>) {
    let (lo, hi) = cfg.scale_range;
    let scale = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let mut d: Vec<f64> = nominal
        .iter()
        .map(|v| {
            let j = if cfg.jitter > 0.0 {
                rng.gen_range(-cfg.jitter..=cfg.jitter)
            } else {
                0.0
            };
            (v * scale * (1.0 + j)).max(0.0)
        })
        .collect();
    if let Some(sh) = &cfg.shift {
        if sh.flexible.len() > 1 && sh.cap > 0.0 {
            let u: Vec<f64> = sh.flexible.iter().map(|_| rng.gen_range(-1.0..=1.0) * sh.cap).collect();
            let mean = u.iter().sum::<f64>() / u.len() as f64;
            let delta: Vec<f64> = u.iter().map(|x| x - mean).collect();
            // Largest step along `delta` that keeps every load in its box.
            let mut t: f64 = 1.0;
            for (k, &i) in sh.flexible.iter().enumerate() {
                let lower = (-sh.cap).max(-d[i]);
                if delta[k] > sh.cap {
                    t = t.min(sh.cap / delta[k]);
                } else if delta[k] < lower {
                    t = t.min(lower / delta[k]);
                }
            }
            for (k, &i) in sh.flexible.iter().enumerate() {
                d[i] += t * delta[k];
            }
        }
    }
    (scale, d)
}

/// Samples load profiles and labels each with `(E, μ)`. Samples are
/// generated in parallel from per-sample seeds and assembled in index order,
/// so the result depends only on the case and `cfg`.
pub fn generate_dataset(case: &GridCase, cfg: &DatasetConfig) -> Result<Dataset, TrainError> {
    let (lo, hi) = cfg.scale_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(TrainError::Config(format!("scale range [{lo}, {hi}]")));
    }
    if !(0.0..1.0).contains(&cfg.jitter) || !(0.0..1.0).contains(&cfg.test_fraction) {
        return Err(TrainError::Config("jitter and test fraction must lie in [0, 1)".into()));
    }
    if let Some(sh) = &cfg.shift {
        if sh.flexible.iter().any(|&i| i >= case.n_loads()) || sh.cap < 0.0 {
            return Err(TrainError::Config("shift jitter refers to unknown loads".into()));
        }
    }
    let model = DispatchModel::new(case)?;
    let nominal = case.nominal_loads();
    let peak: Vec<f64> = nominal.iter().map(|v| v * hi).collect();
    model.solve(&peak)?;
    let scenarios = (0..cfg.n_samples)
        .into_par_iter()
        .map(|k| {
            let seed = profile_seed(cfg.seed, k);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut last = None;
            for _ in 0..MAX_TRIES {
                let (scale, d) = draw(&nominal, cfg, &mut rng);
                match model.solve_with_lmce(&d) {
                    Ok((res, mut lm)) => {
                        let windows = model.basis_windows(&d, &res)?;
                        for (flag, w) in lm.degenerate_flags.iter_mut().zip(windows) {
                            *flag |= w < LABEL_WINDOW;
                        }
                        return Ok(LabeledScenario {
                            seed,
                            scale,
                            e: res.total_emissions,
                            mu: lm.mu,
                            degenerate_flags: lm.degenerate_flags,
                            d,
                        })
                    }
                    Err(e) => last = Some(e),
                }
            }
            Err(TrainError::Resample {
                index: k,
                tries: MAX_TRIES,
                source: last.expect("at least one draw"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (train, test) = split_indices(cfg.n_samples, cfg.test_fraction, cfg.seed);
    Ok(Dataset {
        case_hash: case_hash(case),
        config: cfg.clone(),
        scenarios,
        train,
        test,
    })
}

/// Seeded shuffle of `0..n`; the last `round(n·test_fraction)` indices form
/// the test set. Both parts are returned sorted.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5B17);
    idx.shuffle(&mut rng);
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let mut test = idx.split_off(n - n_test.min(n));
    idx.sort_unstable();
    test.sort_unstable();
    (idx, test)
}

impl Dataset {
    pub fn n_loads(&self) -> usize {
        self.scenarios.first().map_or(0, |s| s.d.len())
    }

    /// Training indices, without degenerate-label samples if `drop` is set.
    pub fn train_indices(&self, drop_degenerate: bool) -> Vec<usize> {
        self.train
            .iter()
            .copied()
            .filter(|&i| !(drop_degenerate && self.scenarios[i].is_degenerate()))
            .collect()
    }

    /// CSV text. `preamble` entries become `# key=value` lines ahead of the
    /// dataset's own metadata.
    pub fn to_csv(&self, preamble: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in preamble {
            out.push_str(&format!("# {k}={v}\n"));
        }
        let c = &self.config;
        out.push_str(&format!("# case_hash={}\n", self.case_hash));
        out.push_str(&format!("# n_samples={}\n", c.n_samples));
        out.push_str(&format!("# scale_lo={}\n# scale_hi={}\n", c.scale_range.0, c.scale_range.1));
        out.push_str(&format!("# jitter={}\n", c.jitter));
        if let Some(sh) = &c.shift {
            let ids: Vec<String> = sh.flexible.iter().map(|i| i.to_string()).collect();
            out.push_str(&format!("# shift_loads={}\n# shift_cap={}\n", ids.join(" "), sh.cap));
        }
        out.push_str(&format!("# test_fraction={}\n", c.test_fraction));
        out.push_str(&format!("# seed={}\n", c.seed));
        let n = self.n_loads();
        let mut header = vec!["seed".to_string(), "scale".to_string()];
        header.extend((1..=n).map(|i| format!("d_{i}")));
        header.push("E".into());
        header.extend((1..=n).map(|i| format!("mu_{i}")));
        header.push("flags".into());
        out.push_str(&header.join(","));
        out.push('\n');
        for s in &self.scenarios {
            let mut row = vec![s.seed.to_string(), s.scale.to_string()];
            row.extend(s.d.iter().map(|v| v.to_string()));
            row.push(s.e.to_string());
            row.extend(s.mu.iter().map(|v| v.to_string()));
            row.push(s.degenerate_flags.iter().map(|f| if *f { '1' } else { '0' }).collect());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the output of [`Dataset::to_csv`]. Unknown comment keys are
    /// ignored; the split is recomputed from the stored seed.
    pub fn from_csv(text: &str) -> Result<Dataset, TrainError> {
        let mut cfg = DatasetConfig {
            n_samples: 0,
            ..DatasetConfig::default()
        };
        let mut hash = String::new();
        let mut shift_loads: Option<Vec<usize>> = None;
        let mut shift_cap = 0.0;
        let mut scenarios = Vec::new();
        let mut n = None;
        let fmt = |line: usize, message: String| TrainError::Format { line, message };
        for (ln, line) in text.lines().enumerate() {
            let ln = ln + 1;
            if let Some(meta) = line.strip_prefix('#') {
                let Some((k, v)) = meta.trim().split_once('=') else { continue };
                let num = |v: &str| v.trim().parse::<f64>().map_err(|e| fmt(ln, format!("{k}: {e}")));
                match k.trim() {
                    "case_hash" => hash = v.trim().to_string(),
                    "scale_lo" => cfg.scale_range.0 = num(v)?,
                    "scale_hi" => cfg.scale_range.1 = num(v)?,
                    "jitter" => cfg.jitter = num(v)?,
                    "test_fraction" => cfg.test_fraction = num(v)?,
                    "shift_cap" => shift_cap = num(v)?,
                    "seed" => cfg.seed = v.trim().parse().map_err(|e| fmt(ln, format!("seed: {e}")))?,
                    "shift_loads" => {
                        shift_loads = Some(
                            v.split_whitespace()
                                .map(|t| t.parse().map_err(|e| fmt(ln, format!("shift_loads: {e}"))))
                                .collect::<Result<_, _>>()?,
                        )
                    }
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if n.is_none() {
                if cells.len() < 4 || cells[0] != "seed" || (cells.len() - 4) % 2 != 0 {
                    return Err(fmt(ln, "bad header".into()));
                }
                n = Some((cells.len() - 4) / 2);
                continue;
            }
            let n = n.unwrap();
            if cells.len() != 2 * n + 4 {
                return Err(fmt(ln, format!("expected {} fields, found {}", 2 * n + 4, cells.len())));
            }
            let f = |s: &str| s.parse::<f64>().map_err(|e| fmt(ln, format!("{s:?}: {e}")));
            let flags = cells[2 * n + 3];
            if flags.len() != n || flags.chars().any(|c| c != '0' && c != '1') {
                return Err(fmt(ln, "flags must be one 0/1 character per load".into()));
            }
            scenarios.push(LabeledScenario {
                seed: cells[0].parse().map_err(|e| fmt(ln, format!("seed: {e}")))?,
                scale: f(cells[1])?,
                d: cells[2..2 + n].iter().map(|s| f(s)).collect::<Result<_, _>>()?,
                e: f(cells[2 + n])?,
                mu: cells[3 + n..3 + 2 * n].iter().map(|s| f(s)).collect::<Result<_, _>>()?,
                degenerate_flags: flags.chars().map(|c| c == '1').collect(),
            });
        }
        if scenarios.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        cfg.n_samples = scenarios.len();
        cfg.shift = shift_loads.map(|flexible| ShiftJitter { flexible, cap: shift_cap });
        let (train, test) = split_indices(cfg.n_samples, cfg.test_fraction, cfg.seed);
        Ok(Dataset {
            case_hash: hash,
            config: cfg,
            scenarios,
            train,
            test,
        })
    }
}
