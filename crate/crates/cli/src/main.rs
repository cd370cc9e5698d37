//! `cowherd`: generators, weight-based signal extraction, and the
//! experiment runner, over CSV/JSON files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use cowherd_cli::io::{
    self, read_matrix_csv, read_model_json, read_sample_csv, write_model_json, write_sample_csv,
    EnvelopeJson,
};
use cowherd_cli::run::{
    apply_method, config_hash, generate as generate_data, run_experiment, MethodData, MethodOutput,
    Params, RunConfig, RunError, RunResult,
};
use cowherd_core::bounds::{bounds_from_data, BoundsOpts};
use cowherd_core::optweight::{OptWeightProblem, SbShapes};
use cowherd_core::{SeedStream, Support, DEFAULT_GRID};

#[derive(Parser)]
#[command(
    name = "cowherd",
    version,
    about = "Signal-background separation with orthogonal weight functions"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a dataset from one of the built-in generators.
    Generate {
        /// Generator id: synthetic, synthetic-fixed, copula-toy, ot,
        /// bounds-1, bounds-2, condind, copula-mixture.
        #[arg(long)]
        what: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Copula correlation for copula-toy.
        #[arg(long)]
        rho: Option<f64>,
        /// Signal fraction for copula-mixture.
        #[arg(long)]
        z: Option<f64>,
        /// Signal-side correlation for copula-mixture.
        #[arg(long)]
        rho1: Option<f64>,
        /// Background-side correlation for copula-mixture.
        #[arg(long)]
        rho2: Option<f64>,
    },
    /// Orthogonal-weight signal extraction over the control variable.
    Sweights {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Kernel bandwidth for the extraction curve.
        #[arg(long)]
        bandwidth: Option<f64>,
    },
    /// Least-squares decomposition of the binned joint histogram.
    CowsLs {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 15)]
        bins: usize,
    },
    /// Nonnegative factorization of the binned joint histogram.
    Nmf {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 15)]
        bins: usize,
        #[arg(long, default_value_t = 2)]
        rank: usize,
    },
    /// EM fit of the Gaussian-copula mixture on paired events.
    CopulaFit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Starting signal fraction.
        #[arg(long)]
        z0: Option<f64>,
        #[arg(long)]
        rho1: Option<f64>,
        #[arg(long)]
        rho2: Option<f64>,
    },
    /// Transport-interpolated background subtraction for a localized
    /// signal window.
    OtExtract {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Signal window as lo,hi inside the mass support.
        #[arg(long)]
        window: Option<String>,
        #[arg(long)]
        bandwidth: Option<f64>,
        /// Background mass fraction.
        #[arg(long)]
        z: Option<f64>,
    },
    /// Identifiability envelope for the signal conditional.
    Bounds {
        #[arg(long)]
        data: PathBuf,
        /// Output JSON file holding lower, upper, and the feasibility
        /// mask.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Conditional-independence mixture fit of a coordinate table.
    Condind {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        sweeps: usize,
    },
    /// Minimum-variance weight for a target moment of the control
    /// variable.
    Optw {
        /// Target: `t` for the mean, or `kernel:t0,nu` for a local
        /// kernel moment.
        #[arg(long)]
        f: String,
        /// Two-component mixture model JSON.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional paired events; adds the weighted point estimates.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Semiparametric bootstrap goodness-of-fit test of the assumed
    /// mass shapes.
    Gof {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Number of control-variable slices.
        #[arg(long, default_value_t = 8)]
        k: usize,
        /// Bootstrap replicates.
        #[arg(long, default_value_t = 99)]
        b: usize,
    },
    /// Sup-norm bootstrap confidence band for the signal conditional.
    Band {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Kernel bandwidth of the band estimate.
        #[arg(long, default_value_t = 0.05)]
        nu: f64,
        #[arg(long, default_value_t = 299)]
        b: usize,
        #[arg(long, default_value_t = 0.10)]
        alpha: f64,
    },
    /// Run a full generator-method experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                RunError::Numerical(_) => ExitCode::from(3),
                RunError::Validation(_) | RunError::Io(_) => ExitCode::from(2),
            }
        }
    }
}

/// Serialize verb metrics with the arg stamp, mirroring the runner's
/// metrics.json layout.
fn stamped_metrics(verb: &str, args: &BTreeMap<String, Value>, out: &MethodOutput) -> String {
    let mut top = BTreeMap::new();
    let stamp = serde_json::to_string(&(verb, args)).expect("args serialize");
    top.insert("config_hash".to_string(), json!(fnv1a_hex(&stamp)));
    top.insert("version".to_string(), json!(env!("CARGO_PKG_VERSION")));
    top.insert("verb".to_string(), json!(verb));
    top.insert("args".to_string(), Value::Object(args.clone().into_iter().collect()));
    top.insert(
        "metrics".to_string(),
        Value::Object(out.metrics.clone().into_iter().collect()),
    );
    serde_json::to_string_pretty(&top).expect("metrics serialize") + "\n"
}

fn fnv1a_hex(text: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

fn write_method_output(
    out_dir: &Path,
    verb: &str,
    args: &BTreeMap<String, Value>,
    out: &MethodOutput,
) -> RunResult<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("metrics.json"), stamped_metrics(verb, args, out))?;
    for curve in &out.curves {
        fs::write(out_dir.join(format!("{}.csv", curve.name)), curve.to_csv())?;
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn load_pairs(path: &Path) -> RunResult<MethodData> {
    Ok(MethodData::Pairs(read_sample_csv(path)?))
}

fn parse_window(text: &str) -> RunResult<(f64, f64)> {
    let mut it = text.split(',');
    let lo = it.next().and_then(|v| v.trim().parse::<f64>().ok());
    let hi = it.next().and_then(|v| v.trim().parse::<f64>().ok());
    match (lo, hi, it.next()) {
        (Some(a), Some(b), None) if a < b => Ok((a, b)),
        _ => Err(RunError::Validation(format!(
            "window must be 'lo,hi' with lo < hi, got '{text}'"
        ))),
    }
}

fn opt_num(v: Option<f64>) -> Value {
    match v {
        Some(x) => json!(x),
        None => Value::Null,
    }
}

fn dispatch(cmd: Cmd) -> RunResult<()> {
    match cmd {
        Cmd::Generate {
            what,
            n,
            seed,
            out,
            rho,
            z,
            rho1,
            rho2,
        } => {
            let cfg = RunConfig {
                generator: what.clone(),
                n,
                seed: Some(seed),
                method: String::new(),
                params: Params {
                    rho,
                    z,
                    rho1,
                    rho2,
                    ..Params::default()
                },
            };
            let data = generate_data(&cfg)?;
            fs::create_dir_all(&out)?;
            match &data {
                MethodData::Pairs(s) => write_sample_csv(&out.join("data.csv"), s)?,
                MethodData::Table(x) => {
                    let mut text = String::new();
                    for i in 0..x.rows() {
                        for j in 0..x.cols() {
                            if j > 0 {
                                text.push(',');
                            }
                            text.push_str(&format!("{:?}", x[(i, j)]));
                        }
                        text.push('\n');
                    }
                    fs::write(out.join("data.csv"), text)?;
                }
            }
            match what.as_str() {
                "synthetic" | "synthetic-fixed" => {
                    write_model_json(&out.join("model.json"), &io::synthetic_model_spec())?
                }
                "copula-mixture" => {
                    let mut spec = io::synthetic_model_spec();
                    spec.z = vec![z.unwrap_or(0.5), 1.0 - z.unwrap_or(0.5)];
                    spec.copula = Some(vec![rho1.unwrap_or(0.6), rho2.unwrap_or(-0.3)]);
                    write_model_json(&out.join("model.json"), &spec)?;
                }
                _ => {}
            }
            let mut manifest = BTreeMap::new();
            manifest.insert("config_hash".to_string(), json!(config_hash(&cfg)));
            manifest.insert("version".to_string(), json!(env!("CARGO_PKG_VERSION")));
            manifest.insert("generator".to_string(), json!(what));
            manifest.insert("n".to_string(), json!(n));
            manifest.insert("seed".to_string(), json!(seed));
            fs::write(
                out.join("manifest.json"),
                serde_json::to_string_pretty(&manifest).expect("manifest serialize") + "\n",
            )?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Cmd::Sweights {
            data,
            out,
            bandwidth,
        } => {
            let d = load_pairs(&data)?;
            let params = Params {
                bandwidth,
                ..Params::default()
            };
            let res = apply_method("sweights", &d, &params, 0)?;
            let mut args = BTreeMap::new();
            args.insert("data".to_string(), json!(data.display().to_string()));
            args.insert("bandwidth".to_string(), opt_num(bandwidth));
            write_method_output(&out, "sweights", &args, &res)
        }
        Cmd::CowsLs { data, out, bins } => {
            let d = load_pairs(&data)?;
            let params = Params {
                bins: Some(bins),
                ..Params::default()
            };
            let res = apply_method("cows-ls", &d, &params, 0)?;
            let mut args = BTreeMap::new();
            args.insert("data".to_string(), json!(data.display().to_string()));
            args.insert("bins".to_string(), json!(bins));
            write_method_output(&out, "cows-ls", &args, &res)
        }
        Cmd::Nmf {
            data,
            out,
            seed,
            bins,
            rank,
        } => {
            let d = load_pairs(&data)?;
            let params = Params {
                bins: Some(bins),
                rank: Some(rank),
                ..Params::default()
            };
            let res = apply_method("nmf", &d, &params, seed)?;
            let mut args = BTreeMap::new();
            args.insert("data".to_string(), json!(data.display().to_string()));
            args.insert("seed".to_string(), json!(seed));
            args.insert("bins".to_string(), json!(bins));
            args.insert("rank".to_string(), json!(rank));
            write_method_output(&out, "nmf", &args, &res)
        }
        Cmd::CopulaFit {
            data,
            out,
            z0,
            rho1,
            rho2,
        } => {
            let d = load_pairs(&data)?;
            let params = Params {
                z: z0,
                rho1,
                rho2,
                ..Params::default()
            };
            let res = apply_method("copula-fit", &d, &params, 0)?;
            let mut args = BTreeMap::new();
            args.insert("data".to_string(), json!(data.display().to_string()));
            args.insert("z0".to_string(), opt_num(z0));
            args.insert("rho1".to_string(), opt_num(rho1));
            args.insert("rho2".to_string(), opt_num(rho2));
            write_method_output(&out, "copula-fit", &args, &res)
        }
        Cmd::OtExtract {
            data,
            out,
            window,
            bandwidth,
            z,
        } => {
            let d = load_pairs(&data)?;
            let win = match &window {
                Some(text) => Some(parse_window(text)?),
                None => None,
            };
            let params = Params {
                window: win,
                bandwidth,
                z,
                ..Params::default()
            };
            let res = apply_method("ot-extract", &d, &params, 0)?;
            let mut args = BTreeMap::new();
            args.insert("data".to_string(), json!(data.display().to_string()));
            args.insert("window".to_string(), json!(window));
            args.insert("bandwidth".to_string(), opt_num(bandwidth));
            args.insert("z".to_string(), opt_num(z));
            write_method_output(&out, "ot-extract", &args, &res)
        }
        Cmd::Bounds { data, out, seed } => {
            let s = read_sample_csv(&data)?;
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
            let env = bounds_from_data(&s, &opts, &stream)?;
            let payload = EnvelopeJson {
                lo: env.lower.support().lo,
                hi: env.lower.support().hi,
                lower: env.lower.values().to_vec(),
                upper: env.upper.values().to_vec(),
                theta: env.region.mask(),
                n_feasible: env.n_feasible,
            };
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            io::write_envelope_json(&out, &payload)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Cmd::Condind {
            data,
            out,
            k,
            sweeps,
        } => {
            let x = read_matrix_csv(&data)?;
            let params = Params {
                k: Some(k),
                sweeps: Some(sweeps),
                ..Params::default()
            };
            let res = apply_method("condind", &MethodData::Table(x), &params, 0)?;
            let mut args = BTreeMap::new();
            args.insert("data".to_string(), json!(data.display().to_string()));
            args.insert("k".to_string(), json!(k));
            args.insert("sweeps".to_string(), json!(sweeps));
            write_method_output(&out, "condind", &args, &res)
        }
        Cmd::Optw { f, model, out, data } => {
            let spec = read_model_json(&model)?;
            let m = spec.to_model()?;
            if m.k() != 2 {
                return Err(RunError::Validation(format!(
                    "the weight construction needs exactly 2 components, model has {}",
                    m.k()
                )));
            }
            let g = m.tabulate_g(DEFAULT_GRID)?;
            let h = m.tabulate_h(DEFAULT_GRID)?;
            let shapes = SbShapes::new(m.z[0], g[0].clone(), g[1].clone(), h[0].clone(), h[1].clone())?;
            let target = cowherd_cli::run::target_function(&f, &h[0])?;
            let prob = OptWeightProblem::new(shapes, target)?;
            let opt = prob.solve()?;
            let splot = prob.splot_weight()?;
            let mut res = MethodOutput {
                metrics: BTreeMap::new(),
                curves: vec![cowherd_cli::run::Curve::from_grids(
                    "weights_m",
                    "m",
                    &[("optimal", &opt.w), ("splot", &splot)],
                )],
            };
            res.metrics.insert("psi".into(), json!(prob.psi));
            res.metrics
                .insert("sigma2_opt".into(), json!(prob.asymptotic_variance(&opt.w)?));
            res.metrics
                .insert("sigma2_splot".into(), json!(prob.asymptotic_variance(&splot)?));
            if let Some(path) = &data {
                let s = read_sample_csv(path)?;
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..s.m.len() {
                    let wi = opt.w.eval(s.m[i]);
                    num += target_eval(&f, s.t[i]) * wi;
                    den += wi;
                }
                if den.abs() > 0.0 {
                    res.metrics.insert("psi_hat_opt".into(), json!(num / den));
                }
            }
            let mut args = BTreeMap::new();
            args.insert("f".to_string(), json!(f));
            args.insert("model".to_string(), json!(model.display().to_string()));
            args.insert(
                "data".to_string(),
                json!(data.as_ref().map(|p| p.display().to_string())),
            );
            write_method_output(&out, "optw", &args, &res)
        }
        Cmd::Gof {
            data,
            out,
            seed,
            k,
            b,
        } => {
            let d = load_pairs(&data)?;
            let params = Params {
                k: Some(k),
                replicates: Some(b),
                ..Params::default()
            };
            let res = apply_method("gof", &d, &params, seed)?;
            let mut args = BTreeMap::new();
            args.insert("data".to_string(), json!(data.display().to_string()));
            args.insert("seed".to_string(), json!(seed));
            args.insert("k".to_string(), json!(k));
            args.insert("b".to_string(), json!(b));
            write_method_output(&out, "gof", &args, &res)
        }
        Cmd::Band {
            data,
            out,
            seed,
            nu,
            b,
            alpha,
        } => {
            let d = load_pairs(&data)?;
            let params = Params {
                nu: Some(nu),
                replicates: Some(b),
                alpha: Some(alpha),
                ..Params::default()
            };
            let res = apply_method("band", &d, &params, seed)?;
            let mut args = BTreeMap::new();
            args.insert("data".to_string(), json!(data.display().to_string()));
            args.insert("seed".to_string(), json!(seed));
            args.insert("nu".to_string(), json!(nu));
            args.insert("b".to_string(), json!(b));
            args.insert("alpha".to_string(), json!(alpha));
            write_method_output(&out, "band", &args, &res)
        }
        Cmd::Run { config, out } => {
            let text = fs::read_to_string(&config)?;
            let cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| RunError::Validation(format!("bad config: {e}")))?;
            run_experiment(&cfg, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

/// Evaluate the target spec at a point; the spec was validated when the
/// tabulated target was built.
fn target_eval(spec: &str, t: f64) -> f64 {
    if spec == "t" {
        return t;
    }
    if let Some(rest) = spec.strip_prefix("kernel:") {
        let mut it = rest.split(',');
        if let (Some(Ok(t0)), Some(Ok(nu))) = (
            it.next().map(|v| v.parse::<f64>()),
            it.next().map(|v| v.parse::<f64>()),
        ) {
            let u = (t - t0) / nu;
            return (-0.5 * u * u).exp() / (nu * 2.5066282746310002);
        }
    }
    f64::NAN
}
