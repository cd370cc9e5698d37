//! Conditional-independence mixtures in d >= 3 dimensions: each component
//! is a product over coordinates, and the fit cycles sPlot-style weight
//! construction through the coordinates instead of running EM.

use crate::error::{Error, Result};
use crate::grid::{GridDensity, Support};
use crate::linalg::Matrix;
use crate::smooth::{silverman, KernelMatrix};
use crate::sweights::check_condition;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Weight functions dual to the given densities: F_ij = int f_i f_j,
/// w_j = sum_l (F^-1)_jl f_l, so that int f_j w_l is the identity.
pub fn gamma(f: &[GridDensity]) -> Result<Vec<GridDensity>> {
    let k = f.len();
    if k == 0 {
        return Err(Error::InvalidParameter("no densities".into()));
    }
    for d in f {
        if !d.is_density() {
            return Err(Error::InvalidParameter(
                "weight construction needs densities".into(),
            ));
        }
        if !d.same_grid(&f[0]) {
            return Err(Error::GridMismatch("component density grids"));
        }
    }
    let mut gram = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = f[i].inner(&f[j], None)?;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    check_condition(&gram)?;
    let a = gram.inverse()?;
    let g = f[0].len();
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let mut values = vec![0.0; g];
        for l in 0..k {
            let c = a[(j, l)];
            for (v, &fv) in values.iter_mut().zip(f[l].values()) {
                *v += c * fv;
            }
        }
        out.push(GridDensity::function(f[0].support(), values)?);
    }
    Ok(out)
}

/// Fitted conditional-independence mixture.
#[derive(Clone, Debug)]
pub struct CondIndModel {
    pub d: usize,
    pub k: usize,
    /// f[r][j]: density of coordinate r within component j.
    pub f: Vec<Vec<GridDensity>>,
    /// Mixture proportions: empirical estimates clipped at zero and
    /// normalized to sum 1.
    pub pi: Vec<f64>,
    /// Raw mean over events of the product of coordinate weights.
    pub pi_empirical: Vec<f64>,
    /// Product of the plain integrals of the coordinate weights. Kept as
    /// a diagnostic; it does not estimate the proportions (see
    /// `estimate_pi`).
    pub pi_literal: Vec<f64>,
    /// Largest L1 change of any component density in the final sweep.
    pub last_sweep_delta: f64,
}

/// Raw proportion estimates before any normalization.
#[derive(Clone, Debug)]
pub struct PiEstimate {
    /// Mean over events of prod_r w_r(X_r); unbiased for pi_j because
    /// each coordinate integral of w against a density is 0 or 1.
    pub empirical: Vec<f64>,
    /// The plain product integral prod_r int w_r(x) dx. Under the model
    /// this does not reduce to pi_j; reported so the discrepancy between
    /// the two readings stays visible.
    pub literal: Vec<f64>,
}

/// Proportion estimates from per-coordinate densities and data.
pub fn estimate_pi(f: &[Vec<GridDensity>], data: &Matrix) -> Result<PiEstimate> {
    let d = f.len();
    if d == 0 || data.cols() != d {
        return Err(Error::InvalidParameter(format!(
            "density table covers {d} coordinates, data has {}",
            data.cols()
        )));
    }
    let k = f[0].len();
    let n = data.rows();
    let mut weights = Vec::with_capacity(d);
    for fr in f {
        if fr.len() != k {
            return Err(Error::InvalidParameter(
                "component count differs across coordinates".into(),
            ));
        }
        weights.push(gamma(fr)?);
    }
    let mut empirical = vec![0.0; k];
    for i in 0..n {
        for (j, e) in empirical.iter_mut().enumerate() {
            let mut prod = 1.0;
            for (r, wr) in weights.iter().enumerate() {
                prod *= wr[j].eval(data[(i, r)]);
            }
            *e += prod;
        }
    }
    for e in empirical.iter_mut() {
        *e /= n as f64;
    }
    let mut literal = vec![1.0; k];
    for wr in &weights {
        for (j, l) in literal.iter_mut().enumerate() {
            *l *= wr[j].integrate();
        }
    }
    Ok(PiEstimate { empirical, literal })
}

#[derive(Clone, Debug)]
pub struct CycleOpts {
    pub sweeps: usize,
    /// Density tabulation grid per coordinate.
    pub grid: usize,
    /// Kernel bandwidth for every update; per-coordinate Silverman on the
    /// raw coordinate data when absent.
    pub bw: Option<f64>,
    /// Per-coordinate supports; padded data ranges when absent.
    pub supports: Option<Vec<Support>>,
}

impl Default for CycleOpts {
    fn default() -> Self {
        CycleOpts {
            sweeps: 3,
            grid: 512,
            bw: None,
            supports: None,
        }
    }
}

/// Cluster coordinate-1 values with one-dimensional k-means seeded at
/// evenly spaced quantiles, then return per-cluster kernel estimates.
fn kmeans_init(x1: &[f64], k: usize, support: Support, grid: usize) -> Result<Vec<GridDensity>> {
    let n = x1.len();
    let mut sorted = x1.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut centers: Vec<f64> = (0..k)
        .map(|j| sorted[((j as f64 + 0.5) / k as f64 * n as f64) as usize])
        .collect();
    let mut assign = vec![0usize; n];
    for _ in 0..200 {
        let mut changed = false;
        for (i, &x) in x1.iter().enumerate() {
            let mut best = 0;
            let mut bd = f64::INFINITY;
            for (j, &c) in centers.iter().enumerate() {
                let d = libm::fabs(x - c);
                if d < bd {
                    bd = d;
                    best = j;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        for j in 0..k {
            let members: Vec<f64> = x1
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == j)
                .map(|(&x, _)| x)
                .collect();
            if !members.is_empty() {
                centers[j] = members.iter().sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let members: Vec<f64> = x1
            .iter()
            .zip(&assign)
            .filter(|(_, &a)| a == j)
            .map(|(&x, _)| x)
            .collect();
        if members.len() < 2 {
            return Err(Error::Degenerate(format!(
                "initial cluster {j} has {} points",
                members.len()
            )));
        }
        let bw = silverman(&members)?;
        let km = KernelMatrix::new(&members, bw, support, grid)?;
        let w = vec![1.0; members.len()];
        out.push(km.weighted_density(&w)?.normalized()?);
    }
    Ok(out)
}

fn data_support(col: &[f64]) -> Result<Support> {
    let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = 1e-9 * (hi - lo).max(1.0);
    Support::new(lo - pad, hi + pad)
}

/// Cyclic fit: take one coordinate's component densities as known, build
/// its dual weights, refresh every other coordinate by weighted kernel
/// estimates, and rotate through the coordinates `sweeps` times.
pub fn cycle_fit(
    data: &Matrix,
    k: usize,
    init: Option<&[GridDensity]>,
    opts: &CycleOpts,
) -> Result<CondIndModel> {
    let n = data.rows();
    let d = data.cols();
    if d < 3 {
        return Err(Error::InvalidParameter(format!(
            "identifiability needs at least 3 coordinates, got {d}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("no components".into()));
    }
    if n < 3 * k {
        return Err(Error::InvalidParameter(format!(
            "too few events ({n}) for {k} components"
        )));
    }
    if opts.sweeps == 0 {
        return Err(Error::InvalidParameter("zero sweeps".into()));
    }
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|r| (0..n).map(|i| data[(i, r)]).collect())
        .collect();
    let supports: Vec<Support> = match &opts.supports {
        Some(s) => {
            if s.len() != d {
                return Err(Error::InvalidParameter(format!(
                    "{} supports for {d} coordinates",
                    s.len()
                )));
            }
            s.clone()
        }
        None => cols
            .iter()
            .map(|c| data_support(c))
            .collect::<Result<Vec<_>>>()?,
    };
    // Kernel geometry never changes across sweeps, so each coordinate's
    // kernel matrix is built once.
    let mut kernels = Vec::with_capacity(d);
    for r in 0..d {
        let bw = match opts.bw {
            Some(b) => b,
            None => silverman(&cols[r])?,
        };
        kernels.push(KernelMatrix::new(&cols[r], bw, supports[r], opts.grid)?);
    }

    // Coordinate 1 starts from the supplied or clustered init; the other
    // coordinates are filled by the first weight pass.
    let f1: Vec<GridDensity> = match init {
        Some(fs) => {
            if fs.len() != k {
                return Err(Error::InvalidParameter(format!(
                    "{} initial densities for {k} components",
                    fs.len()
                )));
            }
            let mut out = Vec::with_capacity(k);
            for d0 in fs {
                if !d0.is_density() {
                    return Err(Error::InvalidParameter(
                        "initial shapes must be densities".into(),
                    ));
                }
                if !d0.support().same_as(&supports[0]) {
                    return Err(Error::GridMismatch("init support vs coordinate 1"));
                }
                out.push(d0.clone());
            }
            out
        }
        None => kmeans_init(&cols[0], k, supports[0], opts.grid)?,
    };
    let placeholder = GridDensity::function(supports[0], vec![0.0; 1])?;
    let mut f: Vec<Vec<GridDensity>> = vec![vec![placeholder; k]; d];
    f[0] = f1;
    let mut filled = vec![false; d];
    filled[0] = true;

    let mut last_sweep_delta = 0.0f64;
    for sweep in 0..opts.sweeps {
        let mut delta = 0.0f64;
        for r in 0..d {
            if !filled[r] {
                continue;
            }
            let w = gamma(&f[r])?;
            // Per-event weights for every component of coordinate r.
            let mut ev_w = vec![vec![0.0; n]; k];
            for j in 0..k {
                for i in 0..n {
                    ev_w[j][i] = w[j].eval(cols[r][i]);
                }
            }
            for s in 0..d {
                if s == r {
                    continue;
                }
                for j in 0..k {
                    let sw: f64 = ev_w[j].iter().sum();
                    if !(sw > 0.0) {
                        return Err(Error::Degenerate(format!(
                            "component {j} collapsed updating coordinate {s} \
                             in sweep {sweep}: total weight {sw:.3e}"
                        )));
                    }
                    let new = kernels[s]
                        .weighted_density(&ev_w[j])?
                        .clipped()
                        .normalized()?;
                    if filled[s] {
                        let mut l1 = 0.0;
                        for (a, b) in new.values().iter().zip(f[s][j].values()) {
                            l1 += libm::fabs(a - b);
                        }
                        delta = delta.max(l1 * new.step());
                    }
                    f[s][j] = new;
                }
                filled[s] = true;
            }
        }
        last_sweep_delta = delta;
    }

    let pi_raw = estimate_pi(&f, data)?;
    let mut pi: Vec<f64> = pi_raw.empirical.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate(
            "all proportion estimates nonpositive".into(),
        ));
    }
    for p in pi.iter_mut() {
        *p /= total;
    }
    Ok(CondIndModel {
        d,
        k,
        f,
        pi,
        pi_empirical: pi_raw.empirical,
        pi_literal: pi_raw.literal,
        last_sweep_delta,
    })
}
