//! Experiment runner: a config names a generator, a method, and its
//! knobs; the runner produces deterministic JSON metrics and CSV curves
//! stamped with the config hash and library version.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cowherd_core::bounds::{bounds_from_data, BoundsOpts};
use cowherd_core::condind::{cycle_fit, CycleOpts};
use cowherd_core::copulamix::{fit_copula_mixture, CopulaMixOpts};
use cowherd_core::cowsls::ls_cows_binned;
use cowherd_core::dists::ParamDensity;
use cowherd_core::infer::{bootstrap_band, gof_test};
use cowherd_core::nmf::{nmf, normalize_to_mixture, NmfOpts};
use cowherd_core::optweight::{OptWeightProblem, SbShapes};
use cowherd_core::otsignal::{extract_localized, OtOpts};
use cowherd_core::smooth::{hist2d, silverman, KernelMatrix, Sample};
use cowherd_core::sweights::{
    extract_signal, make_weights, mixture_weights, BasisSet, ExtractMode, ExtractOpts, Normalizer,
    WeightEval,
};
use cowherd_core::{GridDensity, Matrix, SeedStream, Support, DEFAULT_GRID};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::io::{write_sample_csv, IoError};
use crate::synth;

/// Failure modes of a run, split for exit-code mapping.
#[derive(Debug)]
pub enum RunError {
    /// Bad config, unknown ids, malformed files.
    Validation(String),
    /// The underlying computation failed numerically.
    Numerical(String),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Validation(m) => write!(f, "validation error: {m}"),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
            RunError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<cowherd_core::Error> for RunError {
    fn from(e: cowherd_core::Error) -> Self {
        if e.is_validation() {
            RunError::Validation(e.to_string())
        } else {
            RunError::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<IoError> for RunError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io(io) => RunError::Io(io),
            IoError::Parse(m) => RunError::Validation(m),
            IoError::Model(c) => c.into(),
        }
    }
}

pub type RunResult<T> = Result<T, RunError>;

/// Optional method knobs; unset fields fall back to method defaults.
#[derive(Serialize, Deserialize, Clone, Default)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

/// One experiment: generator, sample size, seed, method, knobs.
#[derive(Serialize, Deserialize, Clone)]
pub struct RunConfig {
    pub generator: String,
    pub n: usize,
    /// Mandatory; an absent seed is a validation error so that no run is
    /// silently irreproducible.
    pub seed: Option<u64>,
    pub method: String,
    #[serde(default)]
    pub params: Params,
}

/// 64-bit FNV-1a over the canonical JSON encoding of the config.
pub fn config_hash(cfg: &RunConfig) -> String {
    let text = serde_json::to_string(cfg).expect("config serializes");
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Generated input: paired events or a plain coordinate table.
pub enum MethodData {
    Pairs(Sample),
    Table(Matrix),
}

/// A named curve for CSV output: shared abscissa plus one column per
/// series.
pub struct Curve {
    pub name: String,
    pub x_label: String,
    pub x: Vec<f64>,
    pub series: Vec<(String, Vec<f64>)>,
}

impl Curve {
    pub fn from_grids(name: &str, x_label: &str, grids: &[(&str, &GridDensity)]) -> Self {
        let first = grids[0].1;
        Curve {
            name: name.into(),
            x_label: x_label.into(),
            x: first.points(),
            series: grids
                .iter()
                .map(|(label, g)| (label.to_string(), g.values().to_vec()))
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.x_label);
        for (label, _) in &self.series {
            out.push(',');
            out.push_str(label);
        }
        out.push('\n');
        for i in 0..self.x.len() {
            let _ = write!(out, "{:?}", self.x[i]);
            for (_, col) in &self.series {
                let _ = write!(out, ",{:?}", col[i]);
            }
            out.push('\n');
        }
        out
    }
}

/// Metrics plus zero or more curves.
pub struct MethodOutput {
    pub metrics: BTreeMap<String, Value>,
    pub curves: Vec<Curve>,
}

fn l1(a: &GridDensity, b: &GridDensity) -> f64 {
    let mut s = 0.0;
    for c in 0..a.len() {
        s += (a.values()[c] - b.eval(a.point(c))).abs();
    }
    s * a.step()
}

/// Scale a curve to unit signed mass. Weighted extractions dip negative
/// where the background dominates, so the cells stay signed rather than
/// being clipped to a proper density.
fn unit_mass(curve: &GridDensity) -> RunResult<GridDensity> {
    let mass = curve.integrate();
    if !(mass.is_finite() && mass.abs() > 1e-12) {
        return Err(RunError::Numerical(format!(
            "extraction curve has vanishing mass {mass}"
        )));
    }
    Ok(GridDensity::function(
        curve.support(),
        curve.values().iter().map(|v| v / mass).collect(),
    )?)
}

/// Tabulated benchmark basis and conditionals at the default grid.
pub struct SyntheticShapes {
    pub g1: GridDensity,
    pub g2: GridDensity,
    pub h1: GridDensity,
    pub h2: GridDensity,
    pub p_m: GridDensity,
    pub p_t: GridDensity,
}

pub fn synthetic_shapes() -> SyntheticShapes {
    let model = synth::synthetic_model();
    SyntheticShapes {
        g1: model.g[0].tabulate(DEFAULT_GRID).unwrap(),
        g2: model.g[1].tabulate(DEFAULT_GRID).unwrap(),
        h1: model.h[0].tabulate(DEFAULT_GRID).unwrap(),
        h2: model.h[1].tabulate(DEFAULT_GRID).unwrap(),
        p_m: model.marginal_m_grid(DEFAULT_GRID).unwrap(),
        p_t: model.marginal_t_grid(DEFAULT_GRID).unwrap(),
    }
}

fn synthetic_basis(sh: &SyntheticShapes) -> BasisSet {
    BasisSet::new(vec![sh.g1.clone(), sh.g2.clone()], 1, 1).unwrap()
}

fn pairs(data: &MethodData) -> RunResult<&Sample> {
    match data {
        MethodData::Pairs(s) => Ok(s),
        MethodData::Table(_) => Err(RunError::Validation(
            "this method needs paired (m, t) events, not a coordinate table".into(),
        )),
    }
}

fn table(data: &MethodData) -> RunResult<&Matrix> {
    match data {
        MethodData::Table(x) => Ok(x),
        MethodData::Pairs(_) => Err(RunError::Validation(
            "this method needs a coordinate table, not paired events".into(),
        )),
    }
}

fn num(v: f64) -> Value {
    json!(v)
}

/// Dispatch a method over generated or loaded data.
pub fn apply_method(
    method: &str,
    data: &MethodData,
    params: &Params,
    seed: u64,
) -> RunResult<MethodOutput> {
    let mut metrics = BTreeMap::new();
    let mut curves = Vec::new();
    match method {
        "sweights" => {
            let s = pairs(data)?;
            let sh = synthetic_shapes();
            let ws = make_weights(&synthetic_basis(&sh), &Normalizer::Density(sh.p_m.clone()))?;
            let z_hat = cowherd_core::sweights::estimate_z(&ws, s, WeightEval::Interp)[0];
            let ex = extract_signal(
                &ws,
                s,
                &ExtractOpts {
                    mode: ExtractMode::Kde {
                        bandwidth: params.bandwidth,
                    },
                    weight_eval: WeightEval::Interp,
                    support_t: synth::synthetic_support_t(),
                    grid: DEFAULT_GRID,
                    truth: Some((0.5, sh.h1.clone())),
                },
            )?;
            let est = unit_mass(&ex.curve)?;
            metrics.insert("z_hat".into(), num(z_hat));
            metrics.insert("l1".into(), num(l1(&est, &sh.h1)));
            curves.push(Curve::from_grids(
                "signal_t",
                "t",
                &[("estimate", &est), ("truth", &sh.h1)],
            ));
        }
        "mixture-weight" => {
            let s = pairs(data)?;
            let sh = synthetic_shapes();
            let w = mixture_weights(&[0.5, 0.5], &synthetic_basis(&sh))?;
            let wi: Vec<f64> = s.m.iter().map(|&m| w[0].eval(m)).collect();
            let bw = match params.bandwidth {
                Some(b) => b,
                None => silverman(&s.t)?,
            };
            let km = KernelMatrix::new(&s.t, bw, synth::synthetic_support_t(), DEFAULT_GRID)?;
            let est = unit_mass(&km.weighted_density(&wi)?)?;
            let z_hat = wi.iter().sum::<f64>() / wi.len() as f64;
            metrics.insert("z_hat".into(), num(z_hat));
            metrics.insert("l1".into(), num(l1(&est, &sh.h1)));
            curves.push(Curve::from_grids(
                "signal_t",
                "t",
                &[("estimate", &est), ("truth", &sh.h1)],
            ));
        }
        "cows-ls" => {
            let s = pairs(data)?;
            let bins = params.bins.unwrap_or(15);
            let hist = hist2d(
                s,
                bins,
                bins,
                Some((synth::synthetic_support_m(), synth::synthetic_support_t())),
            )?;
            let sh = synthetic_shapes();
            let fit = ls_cows_binned(&hist, &synthetic_basis(&sh))?;
            let resid: f64 = fit.e.iter().map(|v| v * v).sum::<f64>();
            metrics.insert("residual_sq".into(), num(resid));
            metrics.insert(
                "s_hat_total".into(),
                num(fit.s_hat.iter().sum::<f64>()),
            );
            let width = synth::synthetic_support_t().len() / bins as f64;
            let sup = synth::synthetic_support_t();
            let est = unit_mass(&GridDensity::function(
                sup,
                fit.s_hat.iter().map(|&v| v / width).collect(),
            )?)?;
            metrics.insert("l1".into(), num(l1(&est, &sh.h1)));
            curves.push(Curve::from_grids("signal_t", "t", &[("estimate", &est)]));
        }
        "nmf" => {
            let s = pairs(data)?;
            let bins = params.bins.unwrap_or(15);
            let hist = hist2d(
                s,
                bins,
                bins,
                Some((synth::synthetic_support_m(), synth::synthetic_support_t())),
            )?;
            let rank = params.rank.unwrap_or(2);
            let stream = SeedStream::new(seed).split(1);
            let res = nmf(&hist.counts, rank, &NmfOpts::default(), &stream)?;
            metrics.insert("residual".into(), num(res.residual()));
            metrics.insert(
                "iterations".into(),
                json!(res.residual_trace.len()),
            );
            if rank == 2 {
                let parts = normalize_to_mixture(
                    &res,
                    synth::synthetic_support_m(),
                    synth::synthetic_support_t(),
                )?;
                let sh = synthetic_shapes();
                metrics.insert("z_hat".into(), num(parts.z));
                metrics.insert("l1_h1".into(), num(l1(&parts.h1, &sh.h1)));
                curves.push(Curve::from_grids(
                    "factors_t",
                    "t",
                    &[("h1", &parts.h1), ("h2", &parts.h2)],
                ));
            }
        }
        "copula-fit" => {
            let s = pairs(data)?;
            let sh = synthetic_shapes();
            let opts = CopulaMixOpts {
                z0: params.z.unwrap_or(0.5),
                rho0: (params.rho1.unwrap_or(0.0), params.rho2.unwrap_or(0.0)),
                ..CopulaMixOpts::default()
            };
            let fit = fit_copula_mixture(
                &s.m,
                &s.t,
                &sh.g1,
                &sh.g2,
                synth::synthetic_support_t(),
                &opts,
            )?;
            metrics.insert("z_hat".into(), num(fit.z));
            metrics.insert("rho1_hat".into(), num(fit.rho1));
            metrics.insert("rho2_hat".into(), num(fit.rho2));
            metrics.insert("converged".into(), json!(fit.converged));
            metrics.insert("iterations".into(), json!(fit.trace.len()));
            curves.push(Curve::from_grids(
                "conditionals_t",
                "t",
                &[("h1", &fit.h1), ("h2", &fit.h2)],
            ));
        }
        "ot-extract" => {
            let s = pairs(data)?;
            let window = params.window.unwrap_or((0.4, 0.6));
            let flat = ParamDensity::uniform(0.0, 1.0)?.tabulate(DEFAULT_GRID)?;
            let opts = OtOpts {
                window,
                z_hat: params.z.unwrap_or(0.5),
                bw_t: params.bandwidth.unwrap_or(0.05),
                bw_m: None,
                grid_m: 64,
                grid_t: 256,
            };
            let ex = extract_localized(s, &flat, &opts)?;
            let truth = ParamDensity::beta(3.0, 3.0)?.tabulate(ex.s_t.len())?;
            metrics.insert("l1".into(), num(l1(&ex.s_t, &truth)));
            metrics.insert("z_hat".into(), num(ex.z_hat));
            curves.push(Curve::from_grids(
                "signal_t",
                "t",
                &[("estimate", &ex.s_t), ("truth", &truth)],
            ));
        }
        "bounds" => {
            let s = pairs(data)?;
            let sup_m = Support::new(
                s.m.iter().cloned().fold(f64::INFINITY, f64::min),
                s.m.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            )?;
            let sup_t = Support::new(
                s.t.iter().cloned().fold(f64::INFINITY, f64::min),
                s.t.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            )?;
            let opts = BoundsOpts::new(sup_m, sup_t);
            let stream = SeedStream::new(seed).split(2);
            let env = bounds_from_data(s, &opts, &stream)?;
            metrics.insert("max_width".into(), num(env.max_width()));
            metrics.insert("n_feasible".into(), json!(env.n_feasible));
            metrics.insert("n_oriented".into(), json!(env.n_oriented));
            curves.push(Curve::from_grids(
                "envelope_t",
                "t",
                &[("lower", &env.lower), ("upper", &env.upper)],
            ));
        }
        "condind" => {
            let x = table(data)?;
            let k = params.k.unwrap_or(2);
            let opts = CycleOpts {
                sweeps: params.sweeps.unwrap_or(5),
                ..CycleOpts::default()
            };
            let fit = cycle_fit(x, k, None, &opts)?;
            metrics.insert("pi".into(), json!(fit.pi));
            metrics.insert("last_sweep_delta".into(), num(fit.last_sweep_delta));
            let mut grids: Vec<(String, GridDensity)> = Vec::new();
            for r in 0..fit.d {
                for j in 0..fit.k {
                    grids.push((format!("f{}_{}", r + 1, j + 1), fit.f[r][j].clone()));
                }
            }
            let refs: Vec<(&str, &GridDensity)> = grids
                .iter()
                .map(|(n, g)| (n.as_str(), g))
                .collect();
            curves.push(Curve::from_grids("factors", "x", &refs));
        }
        "optw" => {
            let s = pairs(data)?;
            let sh = synthetic_shapes();
            let shapes = SbShapes::new(
                params.z.unwrap_or(0.5),
                sh.g1.clone(),
                sh.g2.clone(),
                sh.h1.clone(),
                sh.h2.clone(),
            )?;
            let target = params.target.clone().unwrap_or_else(|| "t".into());
            let f = target_function(&target, &sh.h1)?;
            let prob = OptWeightProblem::new(shapes, f)?;
            let opt = prob.solve()?;
            let splot = prob.splot_weight()?;
            let v_opt = prob.asymptotic_variance(&opt.w)?;
            let v_splot = prob.asymptotic_variance(&splot)?;
            metrics.insert("psi".into(), num(prob.psi));
            metrics.insert("sigma2_opt".into(), num(v_opt));
            metrics.insert("sigma2_splot".into(), num(v_splot));
            let est = weighted_mean(s, &opt.w);
            let est_splot = weighted_mean(s, &splot);
            metrics.insert("psi_hat_opt".into(), num(est));
            metrics.insert("psi_hat_splot".into(), num(est_splot));
            curves.push(Curve::from_grids(
                "weights_m",
                "m",
                &[("optimal", &opt.w), ("splot", &splot)],
            ));
        }
        "gof" => {
            let s = pairs(data)?;
            let sh = synthetic_shapes();
            let res = gof_test(
                s,
                &synthetic_basis(&sh),
                params.k.unwrap_or(8),
                params.bandwidth,
                params.replicates.unwrap_or(99),
                seed,
            )?;
            metrics.insert("statistic".into(), num(res.statistic));
            metrics.insert("p_value".into(), num(res.p_value));
            metrics.insert("slices".into(), json!(res.k));
            metrics.insert("skipped".into(), json!(res.skipped.len()));
        }
        "band" => {
            let s = pairs(data)?;
            let sh = synthetic_shapes();
            let ws = make_weights(&synthetic_basis(&sh), &Normalizer::Density(sh.p_m.clone()))?;
            let res = bootstrap_band(
                s,
                &ws,
                params.nu.unwrap_or(0.05),
                params.replicates.unwrap_or(299),
                params.alpha.unwrap_or(0.10),
                seed,
            )?;
            metrics.insert("c_alpha".into(), num(res.c_alpha));
            metrics.insert("z_hat".into(), num(res.z_hat));
            metrics.insert("redraws".into(), json!(res.redraws));
            let lo = GridDensity::function(
                res.h1_hat.support(),
                res.h1_hat.values().iter().map(|v| v - res.c_alpha).collect(),
            )?;
            let hi = GridDensity::function(
                res.h1_hat.support(),
                res.h1_hat.values().iter().map(|v| v + res.c_alpha).collect(),
            )?;
            curves.push(Curve::from_grids(
                "band_t",
                "t",
                &[("estimate", &res.h1_hat), ("lower", &lo), ("upper", &hi)],
            ));
        }
        other => {
            return Err(RunError::Validation(format!("unknown method '{other}'")));
        }
    }
    Ok(MethodOutput { metrics, curves })
}

/// Tabulate the target named by `t` or `kernel:t0,nu` on the h1 grid.
pub fn target_function(spec: &str, h1: &GridDensity) -> RunResult<GridDensity> {
    if spec == "t" {
        return Ok(GridDensity::tabulate(h1.support(), h1.len(), |t| t)?);
    }
    if let Some(rest) = spec.strip_prefix("kernel:") {
        let mut it = rest.split(',');
        let t0: f64 = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| RunError::Validation("kernel target needs 'kernel:t0,nu'".into()))?;
        let nu: f64 = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| RunError::Validation("kernel target needs 'kernel:t0,nu'".into()))?;
        if !(nu > 0.0) {
            return Err(RunError::Validation(format!("kernel width {nu} must be positive")));
        }
        let norm = 1.0 / (nu * 2.5066282746310002);
        return Ok(GridDensity::tabulate(h1.support(), h1.len(), |t| {
            let u = (t - t0) / nu;
            norm * (-0.5 * u * u).exp()
        })?);
    }
    Err(RunError::Validation(format!(
        "unknown target '{spec}', expected 't' or 'kernel:t0,nu'"
    )))
}

fn weighted_mean(s: &Sample, w: &GridDensity) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..s.m.len() {
        let wi = w.eval(s.m[i]);
        num += s.t[i] * wi;
        den += wi;
    }
    if den.abs() > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Build the input named by the generator id.
pub fn generate(cfg: &RunConfig) -> RunResult<MethodData> {
    let seed = cfg
        .seed
        .ok_or_else(|| RunError::Validation("seed is mandatory".into()))?;
    let n = cfg.n;
    if n == 0 {
        return Err(RunError::Validation("n must be positive".into()));
    }
    let p = &cfg.params;
    let data = match cfg.generator.as_str() {
        "synthetic" => {
            let mut stream = SeedStream::new(seed);
            MethodData::Pairs(synth::synthetic_model().sample(n, &mut stream)?)
        }
        "synthetic-fixed" => MethodData::Pairs(synth::gen_synthetic(n / 2, n - n / 2, seed)?),
        "copula-toy" => MethodData::Pairs(synth::gen_copula_toy(n, p.rho.unwrap_or(0.7), seed)?),
        "ot" => MethodData::Pairs(synth::gen_ot_example(n, seed)?),
        "bounds-1" => MethodData::Pairs(synth::gen_bounds_example(1, n, seed)?),
        "bounds-2" => MethodData::Pairs(synth::gen_bounds_example(2, n, seed)?),
        "condind" => MethodData::Table(synth::gen_condind(n, seed)?.x),
        "copula-mixture" => MethodData::Pairs(synth::gen_copula_mixture(
            n,
            p.z.unwrap_or(0.5),
            p.rho1.unwrap_or(0.6),
            p.rho2.unwrap_or(-0.3),
            seed,
        )?),
        other => {
            return Err(RunError::Validation(format!("unknown generator '{other}'")));
        }
    };
    Ok(data)
}

/// Serialize metrics with the config stamp; key order is fixed by the
/// BTreeMap so output bytes are reproducible.
pub fn metrics_json(cfg: &RunConfig, out: &MethodOutput) -> String {
    let mut top = BTreeMap::new();
    top.insert("config_hash".to_string(), json!(config_hash(cfg)));
    top.insert("version".to_string(), json!(env!("CARGO_PKG_VERSION")));
    top.insert("generator".to_string(), json!(cfg.generator));
    top.insert("method".to_string(), json!(cfg.method));
    top.insert("n".to_string(), json!(cfg.n));
    top.insert("seed".to_string(), json!(cfg.seed));
    top.insert(
        "metrics".to_string(),
        Value::Object(out.metrics.clone().into_iter().collect()),
    );
    serde_json::to_string_pretty(&top).expect("metrics serialize") + "\n"
}

/// Run one config end to end, writing metrics.json, curve CSVs, and the
/// generated sample into `out_dir`.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> RunResult<()> {
    let data = generate(cfg)?;
    let seed = cfg.seed.expect("generate checked the seed");
    let out = apply_method(&cfg.method, &data, &cfg.params, seed)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("metrics.json"), metrics_json(cfg, &out))?;
    for curve in &out.curves {
        fs::write(out_dir.join(format!("{}.csv", curve.name)), curve.to_csv())?;
    }
    match &data {
        MethodData::Pairs(s) => write_sample_csv(&out_dir.join("data.csv"), s)?,
        MethodData::Table(x) => {
            let mut text = String::new();
            for i in 0..x.rows() {
                for j in 0..x.cols() {
                    if j > 0 {
                        text.push(',');
                    }
                    let _ = write!(text, "{:?}", x[(i, j)]);
                }
                text.push('\n');
            }
            fs::write(out_dir.join("data.csv"), text)?;
        }
    }
    Ok(())
}
