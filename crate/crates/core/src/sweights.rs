//! Orthogonal weight functions for component-wise signal extraction, plus
//! the conditional-probability ("mixture") weighting comparator.
//!
//! Given component shapes g_k on the discriminating coordinate and a positive
//! normalizer I, the weights are w_j = sum_k A_jk g_k / I with A the inverse
//! of C_jk = int g_j g_k / I. They satisfy int w_j g_k = delta_jk, so the
//! sample mean of w_k recovers the component fraction and weighted sums over
//! the control coordinate recover component marginals.

use crate::error::{Error, Result};
use crate::grid::{GridDensity, Support, EPS_FLOOR};
use crate::linalg::Matrix;
use crate::smooth::{kde, silverman, KernelMatrix, Sample};
use crate::special::probit;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Gram condition number above which a basis is treated as dependent.
pub const COND_LIMIT: f64 = 1e10;

/// Component shapes on a shared grid; the first `s` are signal.
#[derive(Clone, Debug)]
pub struct BasisSet {
    g: Vec<GridDensity>,
    pub s: usize,
    pub b: usize,
}

impl BasisSet {
    /// Validates the shapes share a grid, are densities, and are linearly
    /// independent (plain Gram condition number below `COND_LIMIT`).
    pub fn new(g: Vec<GridDensity>, s: usize, b: usize) -> Result<Self> {
        if g.is_empty() || g.len() != s + b {
            return Err(Error::InvalidParameter(format!(
                "basis size {} does not match s={s} plus b={b}",
                g.len()
            )));
        }
        for (k, d) in g.iter().enumerate() {
            if !d.is_density() {
                return Err(Error::InvalidParameter(format!(
                    "basis component {k} is not a normalized density"
                )));
            }
            if !d.same_grid(&g[0]) {
                return Err(Error::GridMismatch("basis component grids"));
            }
        }
        let basis = BasisSet { g, s, b };
        let c = basis.gram(None)?;
        check_condition(&c)?;
        Ok(basis)
    }

    pub fn k(&self) -> usize {
        self.g.len()
    }

    pub fn support(&self) -> Support {
        self.g[0].support()
    }

    pub fn densities(&self) -> &[GridDensity] {
        &self.g
    }

    /// C_jk = int g_j g_k / I, cells with I below the floor excluded.
    fn gram(&self, normalizer: Option<&GridDensity>) -> Result<Matrix> {
        let k = self.k();
        let mut c = Matrix::zeros(k, k);
        for j in 0..k {
            for l in j..k {
                let v = self.g[j].inner(&self.g[l], normalizer)?;
                c[(j, l)] = v;
                c[(l, j)] = v;
            }
        }
        Ok(c)
    }
}

/// Flags a singular or nearly dependent Gram matrix, naming the most
/// correlated pair of components.
pub(crate) fn check_condition(c: &Matrix) -> Result<()> {
    let bad = match c.cond_1() {
        Ok(cond) => cond >= COND_LIMIT,
        Err(_) => true,
    };
    if !bad {
        return Ok(());
    }
    let k = c.rows();
    let (mut first, mut second, mut best) = (0, k.saturating_sub(1).max(1), 0.0);
    for j in 0..k {
        for l in j + 1..k {
            let denom = libm::sqrt(c[(j, j)] * c[(l, l)]);
            let corr = if denom > 0.0 {
                libm::fabs(c[(j, l)]) / denom
            } else {
                1.0
            };
            if corr > best {
                best = corr;
                first = j;
                second = l;
            }
        }
    }
    Err(Error::RankDeficient { first, second })
}

/// The I(m) in the weight construction.
#[derive(Clone, Debug)]
pub enum Normalizer {
    /// I identically 1.
    Unit,
    /// A tabulated positive function (not necessarily normalized); cells
    /// below the floor are excluded from both the Gram matrix and the
    /// weights.
    Density(GridDensity),
}

/// How tabulated weight functions are evaluated at data points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightEval {
    /// Linear interpolation between cell midpoints.
    Interp,
    /// Piecewise constant over cells.
    Cell,
}

/// Weight functions with their Gram matrix and its inverse.
#[derive(Clone, Debug)]
pub struct WeightSet {
    w: Vec<GridDensity>,
    pub c: Matrix,
    pub a: Matrix,
    pub s: usize,
    pub b: usize,
    /// Sum of the signal-component weights, tabulated once.
    w_signal: GridDensity,
}

impl WeightSet {
    pub fn k(&self) -> usize {
        self.w.len()
    }

    pub fn weight(&self, j: usize) -> &GridDensity {
        &self.w[j]
    }

    pub fn eval(&self, j: usize, m: f64, mode: WeightEval) -> f64 {
        match mode {
            WeightEval::Interp => self.w[j].eval(m),
            WeightEval::Cell => self.w[j].eval_cell(m),
        }
    }

    /// w_s(m), the summed signal weight.
    pub fn signal_weight(&self) -> &GridDensity {
        &self.w_signal
    }

    pub fn eval_signal(&self, m: f64, mode: WeightEval) -> f64 {
        match mode {
            WeightEval::Interp => self.w_signal.eval(m),
            WeightEval::Cell => self.w_signal.eval_cell(m),
        }
    }

    /// Large-sample variance of the estimated signal fraction,
    /// (A_11 - z^2)/n, valid when I matches the sampling marginal.
    pub fn z1_variance(&self, z1: f64, n: usize) -> f64 {
        (self.a[(0, 0)] - z1 * z1) / n as f64
    }
}

/// Build the orthogonal weight set for a basis under a normalizer.
pub fn make_weights(basis: &BasisSet, normalizer: &Normalizer) -> Result<WeightSet> {
    let norm = match normalizer {
        Normalizer::Unit => None,
        Normalizer::Density(d) => {
            if !d.same_grid(&basis.g[0]) {
                return Err(Error::GridMismatch("normalizer grid"));
            }
            if d.values().iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidParameter(
                    "normalizer must be nonnegative".into(),
                ));
            }
            Some(d)
        }
    };
    let c = basis.gram(norm)?;
    check_condition(&c)?;
    let a = c.inverse().map_err(|_| Error::RankDeficient {
        first: 0,
        second: basis.k().saturating_sub(1),
    })?;
    let n_cells = basis.g[0].len();
    let support = basis.support();
    let k = basis.k();
    let mut w = Vec::with_capacity(k);
    for j in 0..k {
        let mut values = vec![0.0; n_cells];
        for cell in 0..n_cells {
            let inv_i = match norm {
                None => 1.0,
                Some(d) => {
                    let iv = d.values()[cell];
                    if iv < EPS_FLOOR {
                        continue;
                    }
                    1.0 / iv
                }
            };
            let mut acc = 0.0;
            for l in 0..k {
                acc += a[(j, l)] * basis.g[l].values()[cell];
            }
            values[cell] = acc * inv_i;
        }
        w.push(GridDensity::function(support, values)?);
    }
    let mut sig = vec![0.0; n_cells];
    for j in 0..basis.s {
        for (cell, v) in w[j].values().iter().enumerate() {
            sig[cell] += v;
        }
    }
    let w_signal = GridDensity::function(support, sig)?;
    Ok(WeightSet {
        w,
        c,
        a,
        s: basis.s,
        b: basis.b,
        w_signal,
    })
}

/// Kernel estimate of the data marginal of M for use as the normalizer,
/// Silverman bandwidth, floored so the weights stay finite everywhere.
pub fn marginal_normalizer(m: &[f64], support: Support, g: usize) -> Result<GridDensity> {
    let bw = silverman(m)?;
    let d = kde(m, None, bw, support, g)?;
    let values: Vec<f64> = d.values().iter().map(|&v| v.max(EPS_FLOOR)).collect();
    GridDensity::function(support, values)
}

/// Component fraction estimates, z_hat_k = mean of w_k(M_i).
pub fn estimate_z(ws: &WeightSet, sample: &Sample, mode: WeightEval) -> Vec<f64> {
    let n = sample.m.len() as f64;
    (0..ws.k())
        .map(|j| sample.m.iter().map(|&m| ws.eval(j, m, mode)).sum::<f64>() / n)
        .collect()
}

/// Output form of `extract_signal`.
#[derive(Clone, Debug)]
pub enum ExtractMode {
    /// Per-bin sums of the signal weight over T.
    Hist { bins: usize },
    /// Weighted kernel estimate; Silverman on the unweighted T sample when
    /// the bandwidth is absent.
    Kde { bandwidth: Option<f64> },
}

#[derive(Clone, Debug)]
pub struct ExtractOpts {
    pub mode: ExtractMode,
    pub weight_eval: WeightEval,
    pub support_t: Support,
    /// Output resolution for the kernel mode and the truth curve.
    pub grid: usize,
    /// True (z_1, h_1); when present the returned truth curve is n z h1.
    pub truth: Option<(f64, GridDensity)>,
}

/// Signal-component yield curve over T, scaled like n z h1(t).
#[derive(Clone, Debug)]
pub struct SignalExtract {
    /// Estimated counts-per-unit-t curve.
    pub curve: GridDensity,
    /// Histogram mode: per-bin weight sums, sums of squared weights, edges.
    pub bin_sums: Option<Vec<f64>>,
    pub bin_sq_sums: Option<Vec<f64>>,
    pub bin_edges: Option<Vec<f64>>,
    /// n z h1 on the curve grid when the truth was supplied.
    pub truth: Option<GridDensity>,
}

/// Accumulate w_s(M_i) against T_i as a binned or smoothed curve.
pub fn extract_signal(ws: &WeightSet, sample: &Sample, opts: &ExtractOpts) -> Result<SignalExtract> {
    let n = sample.m.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    let weights: Vec<f64> = sample
        .m
        .iter()
        .map(|&m| ws.eval_signal(m, opts.weight_eval))
        .collect();
    let sup = opts.support_t;
    let (curve, bin_sums, bin_sq_sums, bin_edges) = match opts.mode {
        ExtractMode::Hist { bins } => {
            if bins == 0 {
                return Err(Error::InvalidParameter("zero bins".into()));
            }
            let width = sup.len() / bins as f64;
            let mut sums = vec![0.0; bins];
            let mut sqs = vec![0.0; bins];
            for (i, &t) in sample.t.iter().enumerate() {
                if !sup.contains(t) {
                    continue;
                }
                let mut b = ((t - sup.lo) / width) as usize;
                if b >= bins {
                    b = bins - 1;
                }
                sums[b] += weights[i];
                sqs[b] += weights[i] * weights[i];
            }
            let edges: Vec<f64> = (0..=bins).map(|j| sup.lo + j as f64 * width).collect();
            let curve_vals: Vec<f64> = sums.iter().map(|&s| s / width).collect();
            (
                GridDensity::function(sup, curve_vals)?,
                Some(sums),
                Some(sqs),
                Some(edges),
            )
        }
        ExtractMode::Kde { bandwidth } => {
            let bw = match bandwidth {
                Some(b) => b,
                None => silverman(&sample.t)?,
            };
            let km = KernelMatrix::new(&sample.t, bw, sup, opts.grid)?;
            let mut d = km.weighted_density(&weights)?;
            for v in d.values_mut().iter_mut() {
                *v *= n as f64;
            }
            (d, None, None, None)
        }
    };
    let truth = match &opts.truth {
        None => None,
        Some((z1, h1)) => {
            let scale = n as f64 * z1;
            let g_out = curve.len();
            Some(GridDensity::tabulate(sup, g_out, |t| scale * h1.eval(t))?)
        }
    };
    Ok(SignalExtract {
        curve,
        bin_sums,
        bin_sq_sums,
        bin_edges,
        truth,
    })
}

/// Conditional component probabilities w'_k(m) = z_k g_k(m) / sum_j z_j g_j(m).
///
/// Cells where the mixture density vanishes get the prior z_k, keeping the
/// pointwise sum equal to 1 everywhere.
pub fn mixture_weights(z: &[f64], basis: &BasisSet) -> Result<Vec<GridDensity>> {
    let k = basis.k();
    if z.len() != k {
        return Err(Error::InvalidParameter(format!(
            "{} mixture weights for {k} components",
            z.len()
        )));
    }
    if z.iter().any(|&v| v < 0.0) || libm::fabs(z.iter().sum::<f64>() - 1.0) > 1e-9 {
        return Err(Error::InvalidParameter(
            "mixture weights must be a probability vector".into(),
        ));
    }
    let n_cells = basis.g[0].len();
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; n_cells]; k];
    for cell in 0..n_cells {
        let denom: f64 = (0..k).map(|j| z[j] * basis.g[j].values()[cell]).sum();
        for j in 0..k {
            out[j][cell] = if denom >= EPS_FLOOR {
                z[j] * basis.g[j].values()[cell] / denom
            } else {
                z[j]
            };
        }
    }
    out.into_iter()
        .map(|v| GridDensity::function(basis.support(), v))
        .collect()
}

/// What conditional-probability weighting converges to when the joint is a
/// copula over the marginals: p(t|S=1) = p(t) int c(F(m), F(t)) p(m|S=1) dm,
/// evaluated by quadrature on the marginal grids.
pub fn copula_toy_signal_oracle(
    rho: f64,
    p_m: &GridDensity,
    p_t: &GridDensity,
    signal_m: &GridDensity,
) -> Result<GridDensity> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "copula correlation {rho} outside (-1, 1)"
        )));
    }
    if !p_m.same_grid(signal_m) {
        return Err(Error::GridMismatch("m-side marginal and signal density"));
    }
    let gm = p_m.len();
    let gt = p_t.len();
    let hm = p_m.step();
    let ht = p_t.step();
    // Probits of both marginal CDFs at the cell midpoints, computed once.
    let mut xm = vec![0.0; gm];
    for j in 0..gm {
        let u = p_m.cdf(p_m.point(j)).clamp(1e-10, 1.0 - 1e-10);
        xm[j] = probit(u)?;
    }
    let mut yt = vec![0.0; gt];
    for c in 0..gt {
        let v = p_t.cdf(p_t.point(c)).clamp(1e-10, 1.0 - 1e-10);
        yt[c] = probit(v)?;
    }
    let r2 = rho * rho;
    let denom = 2.0 * (1.0 - r2);
    let mut values = vec![0.0; gt];
    let mut row = vec![0.0; gt];
    for j in 0..gm {
        let gj = signal_m.values()[j];
        if gj == 0.0 {
            continue;
        }
        let x = xm[j];
        // p(t | m_j) tabulated, then renormalized on the grid so each
        // conditional carries exactly unit mass and the output conserves it.
        let mut rowsum = 0.0;
        for c in 0..gt {
            let y = yt[c];
            let expo = -(r2 * x * x + r2 * y * y - 2.0 * rho * x * y) / denom;
            row[c] = p_t.values()[c] * libm::exp(expo);
            rowsum += row[c];
        }
        if !(rowsum > 0.0) {
            continue;
        }
        let w = gj * hm / (rowsum * ht);
        for c in 0..gt {
            values[c] += w * row[c];
        }
    }
    GridDensity::function(p_t.support(), values)
}
