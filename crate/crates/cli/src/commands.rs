//! One function per subcommand. Each reads the run configuration, delegates to
//! the library and writes its artifacts under `output_dir`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use carbonlace::case::{case_hash, parse_case_with_warnings, Dialect, GridCase, Partition};
use carbonlace::dispatch::{DispatchModel, LmceMethod, DEFAULT_DELTA};
use carbonlace::fixtures;
use carbonlace::lp::{solve_lp_with, SolveOptions};
use carbonlace::metrics::{ace_with, cef_with, lace_r_with, MetricKind};
use carbonlace::nn::NetworkModel;
use carbonlace::signals::{ClassicSignal, LaceSSignal, ZaceSSignal};
use carbonlace::sls::{run_profile, sls_experiment, ExperimentRow, SignalSource};
use carbonlace::training::{
    cluster_loads, evaluate, evaluate_zonal, generate_dataset, loss_log_csv, nodal_model, train, train_zonal,
    zonal_model, Dataset, EvalReport, Normalization, TrainError, TrainOutcome,
};

use crate::config::RunConfig;
use crate::output::{csv_body, header_value, write_atomic, write_csv, write_timing, Header};
use crate::report::{boxplot_svg, histogram_svg};
use crate::ConfigError;

/// Network variants the `train` and `eval` commands know about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    /// Cluster-masked nodal network with all four training stages.
    LaceS,
    /// Unmasked nodal network trained on the primary loss only.
    Dense,
    /// Zone-masked network with one output per market zone.
    ZaceS,
}

impl ModelKind {
    pub fn stem(self) -> &'static str {
        match self {
            ModelKind::LaceS => "lace_s",
            ModelKind::Dense => "dense",
            ModelKind::ZaceS => "zace_s",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MetricsWhat {
    /// Per-load table of ACE, LMCE, LACE-R and CEF.
    All,
    Lmce,
    /// Total emissions and cost.
    E,
    /// Dispatch Jacobian, generators by loads.
    Jacobian,
}

/// Reads a case from a path or a `builtin:` name. `.m` files use the
/// MATPOWER reader; anything else is parsed as native TOML.
pub fn read_case(spec: &str) -> Result<(GridCase, Vec<String>)> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        let case = match name {
            "case2" => fixtures::case2(),
            "case30" => fixtures::case30(),
            "case14_tight" => fixtures::case14_tight(),
            other => bail!(ConfigError(format!("unknown builtin case `{other}`"))),
        };
        return Ok((case, Vec::new()));
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).with_context(|| format!("reading case {}", path.display()))?;
    let dialect = match path.extension().and_then(|e| e.to_str()) {
        Some("m") => Dialect::MatpowerSubset,
        _ => Dialect::Native,
    };
    let (case, warnings) =
        parse_case_with_warnings(&text, dialect).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    Ok((case, warnings.iter().map(|w| w.to_string()).collect()))
}

pub fn case_validate(path: &str) -> Result<()> {
    let (case, warnings) = read_case(path)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "OK {}: {} buses, {} lines, {} generators, {} loads, case_hash={}",
        path,
        case.buses.len(),
        case.lines.len(),
        case.generators.len(),
        case.loads.len(),
        case_hash(&case)
    );
    Ok(())
}

struct Run {
    cfg: RunConfig,
    case: GridCase,
    hash: String,
}

impl Run {
    fn new(cfg: RunConfig) -> Result<Run> {
        let (case, warnings) = read_case(&cfg.case)?;
        for w in &warnings {
            eprintln!("warning: {w}");
        }
        let hash = case_hash(&case);
        Ok(Run { cfg, case, hash })
    }

    fn header(&self, command: &str, seed: u64) -> Header {
        Header {
            command: command.into(),
            config_hash: self.cfg.hash(),
            case_hash: self.hash.clone(),
            seed,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn dataset(&self) -> Result<Dataset> {
        let p = self.path("dataset.csv");
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading {} (run datagen first)", p.display()))?;
        let ds = Dataset::from_csv(&text)?;
        if ds.case_hash != self.hash {
            bail!(ConfigError(format!(
                "{} was generated for case {}, the configured case is {}",
                p.display(),
                ds.case_hash,
                self.hash
            )));
        }
        Ok(ds)
    }

    fn max_factor(&self) -> f64 {
        self.case.emission_factors().into_iter().fold(0.0, f64::max)
    }

    fn checkpoint(&self, kind: ModelKind) -> Result<(NetworkModel, Vec<(String, String)>)> {
        let p = self.path(&format!("{}.ckpt", kind.stem()));
        let text = std::fs::read_to_string(&p).with_context(|| format!("reading {} (run train first)", p.display()))?;
        let (model, meta) = NetworkModel::from_checkpoint(&text)?;
        let hash = meta.iter().find(|(k, _)| k == "case_hash").map(|(_, v)| v.as_str());
        if hash != Some(self.hash.as_str()) {
            bail!(ConfigError(format!("{} was trained for a different case", p.display())));
        }
        Ok((model, meta))
    }
}

fn partition_text(p: &Partition) -> String {
    p.assignment.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(" ")
}

fn partition_from_meta(meta: &[(String, String)]) -> Result<Partition> {
    let text = meta
        .iter()
        .find(|(k, _)| k == "partition")
        .map(|(_, v)| v.clone())
        .ok_or_else(|| ConfigError("checkpoint has no partition".into()))?;
    let assignment: Vec<usize> = text
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<Result<_, _>>()
        .map_err(|e| ConfigError(format!("checkpoint partition: {e}")))?;
    let count = assignment.iter().max().map_or(0, |m| m + 1);
    Ok(Partition::new(count, assignment)?)
}

pub fn datagen(cfg: RunConfig) -> Result<()> {
    let run = Run::new(cfg)?;
    let t0 = Instant::now();
    let dcfg = run.cfg.dataset_config(&run.case)?;
    let ds = generate_dataset(&run.case, &dcfg)?;
    let header = run.header("datagen", dcfg.seed);
    let path = run.path("dataset.csv");
    write_atomic(&path, ds.to_csv(&header.pairs()).as_bytes())?;
    write_timing(&run.cfg.output_dir, "datagen", &[("generate", t0.elapsed())])?;
    let degenerate = ds.scenarios.iter().filter(|s| s.is_degenerate()).count();
    println!(
        "wrote {} ({} samples, {} train / {} test, {} with degenerate labels)",
        path.display(),
        ds.scenarios.len(),
        ds.train.len(),
        ds.test.len(),
        degenerate
    );
    Ok(())
}

pub fn train_cmd(cfg: RunConfig, kind: ModelKind) -> Result<()> {
    let run = Run::new(cfg)?;
    let t0 = Instant::now();
    let ds = run.dataset()?;
    let norm = match run.cfg.model.normalization.as_str() {
        "nominal" => Normalization::nominal(&run.case.nominal_loads()),
        _ => Normalization::from_dataset(&ds)?,
    };
    let spec = run.cfg.model_spec();
    let mut tcfg = run.cfg.train_config();
    let header = run.header("train", tcfg.seed);
    let t_load = t0.elapsed();

    let (partition, outcome) = match kind {
        ModelKind::LaceS | ModelKind::Dense => {
            let partition = if run.cfg.cluster.from_case {
                run.case
                    .clusters
                    .clone()
                    .ok_or_else(|| ConfigError("cluster.from_case is set but the case has no clusters".into()))?
            } else {
                cluster_loads(&ds, run.cfg.cluster.k, run.cfg.cluster.seed)?
            };
            let mut body = String::from("load,bus,cluster\n");
            for (i, g) in partition.assignment.iter().enumerate() {
                body.push_str(&format!("{},{},{}\n", i, run.case.loads[i].bus, g));
            }
            write_csv(&run.path("clusters.csv"), &header, &body)?;
            let masked = (kind == ModelKind::LaceS).then_some(&partition);
            if kind == ModelKind::Dense {
                tcfg.gamma1 = 0.0;
                tcfg.gamma2 = 0.0;
                tcfg.last_stage = tcfg.last_stage.min(2);
            }
            let model = nodal_model(&norm, run.max_factor(), &spec, masked)?;
            let outcome = train(&model, &ds, &tcfg, &partition);
            (partition, outcome)
        }
        ModelKind::ZaceS => {
            let zones = run.cfg.zones(&run.case)?;
            let model = zonal_model(&norm, run.max_factor(), &spec, &zones)?;
            let outcome = train_zonal(&model, &ds, &tcfg, &zones);
            (zones, outcome)
        }
    };

    let mut meta = header.pairs();
    meta.push(("kind".into(), kind.stem().into()));
    meta.push(("partition".into(), partition_text(&partition)));
    let ckpt = run.path(&format!("{}.ckpt", kind.stem()));
    let TrainOutcome {
        model,
        log,
        stage_epochs,
    } = match outcome {
        Ok(o) => o,
        Err(TrainError::Divergence { stage, epoch, last }) => {
            let p = run.path(&format!("{}.diverged.ckpt", kind.stem()));
            write_atomic(&p, last.to_checkpoint(&meta).as_bytes())?;
            eprintln!("last finite parameters saved to {}", p.display());
            return Err(TrainError::Divergence { stage, epoch, last }.into());
        }
        Err(e) => return Err(e.into()),
    };
    write_atomic(&ckpt, model.to_checkpoint(&meta).as_bytes())?;
    write_csv(&run.path(&format!("loss_{}.csv", kind.stem())), &header, &loss_log_csv(&log))?;
    write_timing(&run.cfg.output_dir, &format!("train_{}", kind.stem()), &[("load", t_load), ("total", t0.elapsed())])?;
    println!(
        "wrote {} ({} trainable parameters, epochs per stage {:?})",
        ckpt.display(),
        model.trainable_parameters(),
        stage_epochs
    );
    Ok(())
}

fn eval_report(run: &Run, kind: ModelKind) -> Result<(EvalReport, NetworkModel)> {
    let ds = run.dataset()?;
    let (model, meta) = run.checkpoint(kind)?;
    let partition = partition_from_meta(&meta)?;
    let report = match kind {
        ModelKind::ZaceS => evaluate_zonal(&model, &ds, &ds.test, &partition)?,
        _ => evaluate(&model, &ds, &ds.test, &partition)?,
    };
    Ok((report, model))
}

pub fn eval_cmd(cfg: RunConfig, kind: ModelKind) -> Result<()> {
    let run = Run::new(cfg)?;
    let t0 = Instant::now();
    let (report, model) = eval_report(&run, kind)?;
    let header = run.header("eval", run.cfg.train.seed);
    let summary = format!(
        "# model={}\n# trainable_parameters={}\n# balance_avg={}\n# balance_max={}\n# sens_avg={}\n# sens_max={}\n# offblock_ratio={}\n",
        kind.stem(),
        model.trainable_parameters(),
        report.balance_avg,
        report.balance_max,
        report.sensitivity_avg,
        report.sensitivity_max,
        report.offblock_ratio
    );
    let path = run.path(&format!("eval_{}.csv", kind.stem()));
    write_csv(&path, &header, &format!("{summary}{}", report.to_csv()))?;
    write_timing(&run.cfg.output_dir, &format!("eval_{}", kind.stem()), &[("evaluate", t0.elapsed())])?;
    println!(
        "{}: balance avg {:.5} max {:.5}; sensitivity avg {:.5} max {:.5}; off-block ratio {:.4}",
        kind.stem(),
        report.balance_avg,
        report.balance_max,
        report.sensitivity_avg,
        report.sensitivity_max,
        report.offblock_ratio
    );
    println!("wrote {}", path.display());
    Ok(())
}

pub fn metrics_cmd(cfg: RunConfig, what: MetricsWhat, load_scale: f64, lp_trace: Option<&Path>) -> Result<()> {
    if !(load_scale >= 0.0) {
        bail!(ConfigError("--load-scale must be non-negative".into()));
    }
    let run = Run::new(cfg)?;
    let t0 = Instant::now();
    let model = DispatchModel::new(&run.case)?;
    let d: Vec<f64> = run.case.nominal_loads().iter().map(|v| v * load_scale).collect();
    let res = model.solve(&d)?;
    let header = run.header("metrics", 0);
    let mut body = format!("# load_scale={load_scale}\n");
    let name = match what {
        MetricsWhat::All => {
            let lmce = model.lmce_at(&d, &res, LmceMethod::Basis, DEFAULT_DELTA)?;
            let ace = ace_with(&model, &d)?;
            let lr = lace_r_with(&model, &d, run.cfg.sls.lace_r_segments, &run.hash)?;
            let cef = cef_with(&run.case, &model, &d, &run.hash)?;
            body.push_str("bus,d,ace,lmce,lace_r,cef,degenerate\n");
            for i in 0..d.len() {
                body.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    run.case.loads[i].bus,
                    d[i],
                    ace,
                    lmce.mu[i],
                    lr.metric.values[i],
                    cef.values[i],
                    u8::from(lmce.degenerate_flags[i])
                ));
            }
            "metrics.csv"
        }
        MetricsWhat::Lmce => {
            let basis = model.lmce_at(&d, &res, LmceMethod::Basis, DEFAULT_DELTA)?;
            let fd = model.lmce(&d, LmceMethod::FiniteDiff, DEFAULT_DELTA)?;
            body.push_str("bus,d,lmce,lmce_fd,degenerate\n");
            for i in 0..d.len() {
                body.push_str(&format!(
                    "{},{},{},{},{}\n",
                    run.case.loads[i].bus,
                    d[i],
                    basis.mu[i],
                    fd.mu[i],
                    u8::from(basis.degenerate_flags[i] || fd.degenerate_flags[i])
                ));
            }
            "lmce.csv"
        }
        MetricsWhat::E => {
            body.push_str("total_load,E,cost,ace\n");
            let total: f64 = d.iter().sum();
            body.push_str(&format!(
                "{},{},{},{}\n",
                total,
                res.total_emissions,
                res.objective,
                ace_with(&model, &d)?
            ));
            "emissions.csv"
        }
        MetricsWhat::Jacobian => {
            let jac = model.jacobian_at(&d, &res)?;
            body.push_str("gen_bus");
            for l in &run.case.loads {
                body.push_str(&format!(",d_{}", l.bus));
            }
            body.push('\n');
            for (k, g) in run.case.generators.iter().enumerate() {
                body.push_str(&g.bus.to_string());
                for i in 0..d.len() {
                    body.push_str(&format!(",{}", jac[(k, i)]));
                }
                body.push('\n');
            }
            "jacobian.csv"
        }
    };
    let path = run.path(name);
    write_csv(&path, &header, &body)?;
    if let Some(trace_path) = lp_trace {
        let sol = solve_lp_with(&model.problem(&d)?, &SolveOptions { trace: true })?;
        let mut t = String::from("phase,iteration,entering,leaving,step,objective\n");
        for r in &sol.trace {
            let leaving = r.leaving.map_or(String::new(), |l| l.to_string());
            t.push_str(&format!("{},{},{},{},{},{}\n", r.phase, r.iteration, r.entering, leaving, r.step, r.objective));
        }
        write_csv(trace_path, &header, &t)?;
        println!("wrote {} ({} pivots)", trace_path.display(), sol.trace.len());
    }
    write_timing(&run.cfg.output_dir, "metrics", &[("metrics", t0.elapsed())])?;
    println!("E = {} tCO2e at {}× nominal; wrote {}", res.total_emissions, load_scale, path.display());
    Ok(())
}

const SLS_HEADER: &str = "profile_seed,method,e_pre,e_post,delta_e\n";

fn sls_rows_csv(rows: &[ExperimentRow]) -> String {
    let mut s = String::from(SLS_HEADER);
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.profile_seed, r.method, r.e_pre, r.e_post, r.delta_e));
    }
    s
}

pub fn sls_cmd(cfg: RunConfig, single_scale: Option<f64>) -> Result<()> {
    let run = Run::new(cfg)?;
    let t0 = Instant::now();
    let market = DispatchModel::new(&run.case)?;
    let ecfg = run.cfg.experiment_config(&run.case)?;
    let nodal = if run.cfg.sls.signals.iter().any(|s| s == "LACE-S") {
        Some(run.checkpoint(ModelKind::LaceS)?.0)
    } else {
        None
    };
    let zonal = if run.cfg.sls.signals.iter().any(|s| s == "ZACE-S") {
        Some((run.checkpoint(ModelKind::ZaceS)?.0, run.cfg.zones(&run.case)?))
    } else {
        None
    };
    let mut owned: Vec<Box<dyn SignalSource + '_>> = Vec::new();
    for name in &run.cfg.sls.signals {
        let classic = |kind| {
            let mut s = ClassicSignal::new(&run.case, &market, kind);
            s.segments = run.cfg.sls.lace_r_segments;
            Box::new(s) as Box<dyn SignalSource>
        };
        owned.push(match name.as_str() {
            "ACE" => classic(MetricKind::AceBroadcast),
            "LMCE" => classic(MetricKind::Lmce),
            "LACE-R" => classic(MetricKind::LaceR),
            "CEF" => classic(MetricKind::Cef),
            "LACE-S" => Box::new(LaceSSignal {
                network: nodal.as_ref().unwrap(),
                market: &market,
            }),
            _ => {
                let (network, zones) = zonal.as_ref().unwrap();
                Box::new(ZaceSSignal {
                    network,
                    market: &market,
                    zones,
                })
            }
        });
    }
    let signals: Vec<&dyn SignalSource> = owned.iter().map(|b| b.as_ref()).collect();
    let header = run.header("sls", ecfg.seed);

    if let Some(scale) = single_scale {
        let d: Vec<f64> = run.case.nominal_loads().iter().map(|v| v * scale).collect();
        let (rows, failed) = run_profile(&market, &d, ecfg.seed, &signals, &ecfg)?;
        for (m, e) in &failed {
            eprintln!("warning: {m} failed: {e}");
        }
        let path = run.path("sls_single.csv");
        write_csv(&path, &header, &format!("# load_scale={scale}\n{}", sls_rows_csv(&rows)))?;
        if let Some(r) = rows.first() {
            println!("E_pre = {:.3} tCO2e at {scale}× nominal", r.e_pre);
        }
        for r in &rows {
            println!("{:>8}  ΔE = {:+.4}", r.method, r.delta_e);
        }
        println!("wrote {}", path.display());
    } else {
        let out = sls_experiment(&market, &run.case.nominal_loads(), &signals, &ecfg);
        let path = run.path("sls.csv");
        write_csv(&path, &header, &sls_rows_csv(&out.rows))?;
        let mut f = String::from("profile_seed,method,message\n");
        for (ps, m, e) in &out.failures {
            f.push_str(&format!("{ps},{m},\"{}\"\n", e.replace('"', "'")));
        }
        write_csv(&run.path("sls_failures.csv"), &header, &f)?;
        for (method, values) in by_method(&out.rows) {
            let pos = values.iter().filter(|v| **v > 1e-9).count();
            let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
            println!(
                "{method:>8}  mean ΔE {mean:+.4}  increases on {pos}/{} profiles",
                values.len()
            );
        }
        if !out.failures.is_empty() {
            eprintln!("{} profile/method failures, see sls_failures.csv", out.failures.len());
        }
        println!("wrote {}", path.display());
    }
    write_timing(&run.cfg.output_dir, "sls", &[("experiment", t0.elapsed())])?;
    Ok(())
}

fn by_method(rows: &[ExperimentRow]) -> Vec<(String, Vec<f64>)> {
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(m, _)| *m == r.method) {
            Some((_, v)) => v.push(r.delta_e),
            None => out.push((r.method.clone(), vec![r.delta_e])),
        }
    }
    out
}

/// Reads the named columns of a CSV written by this tool.
fn read_columns(path: &Path, columns: &[&str]) -> Result<(String, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let body = csv_body(&text);
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| anyhow::anyhow!("{}: no column `{c}`", path.display()))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(idx.iter().map(|&i| rec[i].to_string()).collect());
    }
    Ok((text, rows))
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.parse().with_context(|| format!("{}: bad number `{s}`", path.display()))
}

pub fn report_cmd(cfg: RunConfig) -> Result<()> {
    let run = Run::new(cfg)?;
    let header = run.header("report", 0);
    let mut balance = Vec::new();
    let mut sens = Vec::new();
    let mut summary = String::from("source,series,count,mean,max,positive_fraction\n");
    for kind in [ModelKind::LaceS, ModelKind::Dense, ModelKind::ZaceS] {
        let p = run.path(&format!("eval_{}.csv", kind.stem()));
        if !p.exists() {
            continue;
        }
        let (text, rows) = read_columns(&p, &["balance_dev", "sens_max"])?;
        if header_value(&text, "case_hash").as_deref() != Some(run.hash.as_str()) {
            eprintln!("warning: {} belongs to another case", p.display());
        }
        let b: Vec<f64> = rows.iter().map(|r| parse_f64(&p, &r[0])).collect::<Result<_>>()?;
        let s: Vec<f64> = rows.iter().map(|r| parse_f64(&p, &r[1])).collect::<Result<_>>()?;
        for (series, v) in [("balance_dev", &b), ("sens_max", &s)] {
            summary.push_str(&summary_row("eval", &format!("{}:{series}", kind.stem()), v));
        }
        balance.push((kind.stem().to_string(), b));
        sens.push((kind.stem().to_string(), s));
    }
    let mut written = Vec::new();
    if !balance.is_empty() {
        let p = run.path("fig_balance.svg");
        write_atomic(&p, histogram_svg("Balance deviation ‖λ̂ − λ̃‖", "tCO2e/MWh", &balance, 30).as_bytes())?;
        written.push(p);
        let p = run.path("fig_sensitivity.svg");
        write_atomic(&p, boxplot_svg("Per-scenario max |μ̂ − μ|", "tCO2e/MWh", &sens).as_bytes())?;
        written.push(p);
    }
    let sls_path = run.path("sls.csv");
    if sls_path.exists() {
        let (_, rows) = read_columns(&sls_path, &["method", "delta_e"])?;
        let mut series: Vec<(String, Vec<f64>)> = Vec::new();
        for r in rows {
            let v = parse_f64(&sls_path, &r[1])?;
            match series.iter_mut().find(|(m, _)| *m == r[0]) {
                Some((_, xs)) => xs.push(v),
                None => series.push((r[0].clone(), vec![v])),
            }
        }
        for (m, v) in &series {
            summary.push_str(&summary_row("sls", m, v));
        }
        let p = run.path("fig_sls.svg");
        write_atomic(&p, histogram_svg("Realized emission change after load shifting", "ΔE (tCO2e)", &series, 40).as_bytes())?;
        written.push(p);
    }
    if written.is_empty() {
        bail!(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no eval_*.csv or sls.csv in {}", run.cfg.output_dir.display())
        ));
    }
    let p = run.path("report_summary.csv");
    write_csv(&p, &header, &summary)?;
    written.push(p);
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn summary_row(source: &str, series: &str, v: &[f64]) -> String {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pos = v.iter().filter(|x| **x > 1e-9).count() as f64 / n;
    format!("{source},{series},{},{mean},{max},{pos}\n", v.len())
}
