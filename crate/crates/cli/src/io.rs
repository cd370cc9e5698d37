//! File formats: CSV samples, JSON densities, model specifications, and
//! envelope summaries. Writers emit LF line endings and full-precision
//! floats so repeated runs are byte comparable.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cowherd_core::dists::ParamDensity;
use cowherd_core::mixture::MixtureModel;
use cowherd_core::smooth::Sample;
use cowherd_core::{GridDensity, Support};
use serde::{Deserialize, Serialize};

/// Errors from reading or writing files.
#[derive(Debug)]
pub enum IoError {
    Io(std::io::Error),
    Parse(String),
    Model(cowherd_core::Error),
}

impl std::fmt::Display for IoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IoError::Io(e) => write!(f, "io error: {e}"),
            IoError::Parse(msg) => write!(f, "parse error: {msg}"),
            IoError::Model(e) => write!(f, "model error: {e}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::Io(e)
    }
}

impl From<cowherd_core::Error> for IoError {
    fn from(e: cowherd_core::Error) -> Self {
        IoError::Model(e)
    }
}

pub type IoResult<T> = Result<T, IoError>;

/// Shortest decimal that round-trips the exact double; Debug keeps the
/// trailing `.0` on integral values so columns stay visibly floats.
fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Write a sample as `m,t` or `m,t,s` CSV with a header row.
pub fn write_sample_csv(path: &Path, s: &Sample) -> IoResult<()> {
    let mut out = String::new();
    let labeled = s.label.is_some();
    out.push_str(if labeled { "m,t,s\n" } else { "m,t\n" });
    for i in 0..s.m.len() {
        let _ = write!(out, "{},{}", fmt_f64(s.m[i]), fmt_f64(s.t[i]));
        if let Some(l) = &s.label {
            let _ = write!(out, ",{}", l[i]);
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a sample written by `write_sample_csv`; the label column is
/// optional.
pub fn read_sample_csv(path: &Path) -> IoResult<Sample> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| IoError::Parse("empty csv".into()))?;
    let labeled = match header.trim() {
        "m,t" => false,
        "m,t,s" => true,
        other => {
            return Err(IoError::Parse(format!(
                "expected header 'm,t' or 'm,t,s', got '{other}'"
            )))
        }
    };
    let mut m = Vec::new();
    let mut t = Vec::new();
    let mut label = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let a = parts
            .next()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| IoError::Parse(format!("line {}: bad m field", no + 2)))?;
        let b = parts
            .next()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| IoError::Parse(format!("line {}: bad t field", no + 2)))?;
        m.push(a);
        t.push(b);
        if labeled {
            let l = parts
                .next()
                .and_then(|v| v.trim().parse::<usize>().ok())
                .ok_or_else(|| IoError::Parse(format!("line {}: bad s field", no + 2)))?;
            label.push(l);
        }
        if parts.next().is_some() {
            return Err(IoError::Parse(format!("line {}: too many fields", no + 2)));
        }
    }
    let s = Sample::new(m, t)?;
    if labeled {
        Ok(s.with_labels(label)?)
    } else {
        Ok(s)
    }
}

/// Read a whitespace/comma separated numeric matrix with one row per
/// line and a fixed column count; a non-numeric first line is treated
/// as a header and skipped.
pub fn read_matrix_csv(path: &Path) -> IoResult<cowherd_core::Matrix> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Option<Vec<f64>> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().ok())
            .collect();
        match vals {
            Some(v) => {
                if let Some(first) = rows.first() {
                    if v.len() != first.len() {
                        return Err(IoError::Parse(format!(
                            "line {}: expected {} columns, got {}",
                            no + 1,
                            first.len(),
                            v.len()
                        )));
                    }
                }
                rows.push(v);
            }
            None if no == 0 => continue,
            None => return Err(IoError::Parse(format!("line {}: non-numeric field", no + 1))),
        }
    }
    if rows.is_empty() {
        return Err(IoError::Parse("no data rows".into()));
    }
    let mut x = cowherd_core::Matrix::zeros(rows.len(), rows[0].len());
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    Ok(x)
}

/// Serialized tabulated density.
#[derive(Serialize, Deserialize)]
pub struct DensityJson {
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl DensityJson {
    pub fn from_grid(d: &GridDensity) -> Self {
        DensityJson {
            lo: d.support().lo,
            hi: d.support().hi,
            values: d.values().to_vec(),
        }
    }

    pub fn to_grid(&self) -> IoResult<GridDensity> {
        let support = Support::new(self.lo, self.hi)?;
        Ok(GridDensity::function(support, self.values.clone())?)
    }
}

pub fn write_density_json(path: &Path, d: &GridDensity) -> IoResult<()> {
    let json = serde_json::to_string_pretty(&DensityJson::from_grid(d))
        .map_err(|e| IoError::Parse(e.to_string()))?;
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn read_density_json(path: &Path) -> IoResult<GridDensity> {
    let text = fs::read_to_string(path)?;
    let parsed: DensityJson =
        serde_json::from_str(&text).map_err(|e| IoError::Parse(e.to_string()))?;
    parsed.to_grid()
}

/// One parametric shape in a model file.
#[derive(Serialize, Deserialize, Clone)]
pub struct ShapeSpec {
    pub kind: String,
    pub params: Vec<f64>,
}

impl ShapeSpec {
    pub fn to_density(&self) -> IoResult<ParamDensity> {
        let p = &self.params;
        let need = |n: usize| -> IoResult<()> {
            if p.len() == n {
                Ok(())
            } else {
                Err(IoError::Parse(format!(
                    "shape '{}' needs {} parameters, got {}",
                    self.kind,
                    n,
                    p.len()
                )))
            }
        };
        let d = match self.kind.as_str() {
            "truncated_normal" => {
                need(4)?;
                ParamDensity::truncated_normal(p[0], p[1], p[2], p[3])?
            }
            "truncated_exponential" => {
                need(3)?;
                ParamDensity::truncated_exponential(p[0], p[1], p[2])?
            }
            "beta" => {
                need(2)?;
                ParamDensity::beta(p[0], p[1])?
            }
            "rescaled_beta" => {
                need(4)?;
                ParamDensity::rescaled_beta(p[0], p[1], p[2], p[3])?
            }
            "uniform" => {
                need(2)?;
                ParamDensity::uniform(p[0], p[1])?
            }
            other => return Err(IoError::Parse(format!("unknown shape kind '{other}'"))),
        };
        Ok(d)
    }
}

/// Mixture model file: weights, mass shapes, control shapes, optional
/// per-component copula correlations.
#[derive(Serialize, Deserialize, Clone)]
pub struct ModelSpec {
    pub z: Vec<f64>,
    pub g: Vec<ShapeSpec>,
    pub h: Vec<ShapeSpec>,
    pub s: usize,
    pub b: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub copula: Option<Vec<f64>>,
}

impl ModelSpec {
    pub fn to_model(&self) -> IoResult<MixtureModel> {
        let g: IoResult<Vec<_>> = self.g.iter().map(|s| s.to_density()).collect();
        let h: IoResult<Vec<_>> = self.h.iter().map(|s| s.to_density()).collect();
        let mut model = MixtureModel::new(self.z.clone(), g?, h?, self.s, self.b)?;
        if let Some(rho) = &self.copula {
            model = model.with_copula(rho.clone())?;
        }
        Ok(model)
    }
}

pub fn read_model_json(path: &Path) -> IoResult<ModelSpec> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse(e.to_string()))
}

pub fn write_model_json(path: &Path, spec: &ModelSpec) -> IoResult<()> {
    let json = serde_json::to_string_pretty(spec).map_err(|e| IoError::Parse(e.to_string()))?;
    fs::write(path, json + "\n")?;
    Ok(())
}

/// Spec of the standard benchmark model, as written by `generate`.
pub fn synthetic_model_spec() -> ModelSpec {
    ModelSpec {
        z: vec![0.5, 0.5],
        g: vec![
            ShapeSpec {
                kind: "truncated_normal".into(),
                params: vec![0.5, 0.1, 0.0, 1.0],
            },
            ShapeSpec {
                kind: "truncated_exponential".into(),
                params: vec![0.5, 0.0, 1.0],
            },
        ],
        h: vec![
            ShapeSpec {
                kind: "truncated_exponential".into(),
                params: vec![0.2, 0.0, 1.5],
            },
            ShapeSpec {
                kind: "truncated_normal".into(),
                params: vec![0.1, 1.0, 0.0, 1.5],
            },
        ],
        s: 1,
        b: 1,
        copula: None,
    }
}

/// Identifiability envelope summary.
#[derive(Serialize, Deserialize)]
pub struct EnvelopeJson {
    pub lo: f64,
    pub hi: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Per-cell feasibility of the oriented parameter region.
    pub theta: Vec<bool>,
    pub n_feasible: usize,
}

pub fn write_envelope_json(path: &Path, e: &EnvelopeJson) -> IoResult<()> {
    let json = serde_json::to_string_pretty(e).map_err(|e| IoError::Parse(e.to_string()))?;
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn read_envelope_json(path: &Path) -> IoResult<EnvelopeJson> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse(e.to_string()))
}
