//! Nonparametric smoothing: kernel density estimates, empirical CDFs,
//! histograms, and conditional densities.
//!
//! All kernels are Gaussian. Near a support boundary each kernel is
//! truncated to the support and renormalized on the evaluation grid, so
//! tabulated estimates carry exactly the mass the weights say they should.

use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridDensity, Support};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Paired observations (m, t) with optional component labels and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub m: Vec<f64>,
    pub t: Vec<f64>,
    /// Component labels, 1-based.
    pub label: Option<Vec<usize>>,
    pub weight: Option<Vec<f64>>,
}

impl Sample {
    pub fn new(m: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        if m.len() != t.len() {
            return Err(Error::InvalidParameter(format!(
                "m has {} entries, t has {}",
                m.len(),
                t.len()
            )));
        }
        if m.is_empty() {
            return Err(Error::InvalidParameter("empty sample".into()));
        }
        if m.iter().chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite observation".into()));
        }
        Ok(Sample {
            m,
            t,
            label: None,
            weight: None,
        })
    }

    pub fn with_labels(mut self, label: Vec<usize>) -> Result<Self> {
        if label.len() != self.m.len() {
            return Err(Error::InvalidParameter("label length mismatch".into()));
        }
        if label.iter().any(|&l| l == 0) {
            return Err(Error::InvalidParameter("labels are 1-based".into()));
        }
        self.label = Some(label);
        Ok(self)
    }

    pub fn with_weights(mut self, weight: Vec<f64>) -> Result<Self> {
        if weight.len() != self.m.len() {
            return Err(Error::InvalidParameter("weight length mismatch".into()));
        }
        if weight.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite weight".into()));
        }
        self.weight = Some(weight);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// Silverman's rule: 1.06 sigma-hat n^(-1/5).
pub fn silverman(points: &[f64]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter(
            "bandwidth rule needs at least 2 points".into(),
        ));
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<f64>() / n;
    let var = points.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sd = libm::sqrt(var);
    if !(sd > 0.0) {
        return Err(Error::Degenerate(
            "all points identical; no bandwidth scale".into(),
        ));
    }
    Ok(1.06 * sd * libm::pow(n, -0.2))
}

/// Silverman's rule under weights, with the effective sample size
/// (sum w)^2 / sum w^2 in place of n.
pub fn silverman_weighted(points: &[f64], weights: &[f64]) -> Result<f64> {
    let sw: f64 = weights.iter().sum();
    let sw2: f64 = weights.iter().map(|w| w * w).sum();
    if !(sw > 0.0) || !(sw2 > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let n_eff = sw * sw / sw2;
    let mean = points
        .iter()
        .zip(weights)
        .map(|(x, w)| w * x)
        .sum::<f64>()
        / sw;
    let var = points
        .iter()
        .zip(weights)
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum::<f64>()
        / sw;
    let sd = libm::sqrt(var);
    if !(sd > 0.0) {
        return Err(Error::Degenerate(
            "all points identical; no bandwidth scale".into(),
        ));
    }
    Ok(1.06 * sd * libm::pow(n_eff, -0.2))
}

/// Per-point truncated-and-renormalized Gaussian kernel rows over a grid.
///
/// Row i tabulates the kernel centered at point i; each row integrates to
/// exactly 1 under the grid quadrature, so weighted sums of rows carry
/// exactly the intended mass. Rows are dense but only the window within
/// 8.5 bandwidths of the center is nonzero.
pub struct KernelMatrix {
    support: Support,
    g: usize,
    rows: Vec<f64>,
    /// Nonzero column range per row.
    windows: Vec<(usize, usize)>,
}

impl KernelMatrix {
    pub fn new(points: &[f64], bandwidth: f64, support: Support, g: usize) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        if g == 0 {
            return Err(Error::InvalidParameter("empty grid".into()));
        }
        for &p in points {
            if !support.contains(p) {
                return Err(Error::InvalidParameter(format!(
                    "point {p} outside support [{}, {}]",
                    support.lo, support.hi
                )));
            }
        }
        let h = support.len() / g as f64;
        let radius = 8.5 * bandwidth / h;
        let mut rows = vec![0.0; points.len() * g];
        let mut windows = Vec::with_capacity(points.len());
        for (i, &p) in points.iter().enumerate() {
            let center = (p - support.lo) / h - 0.5;
            let j0 = libm::floor(center - radius).max(0.0) as usize;
            let j1 = (libm::ceil(center + radius) as usize).min(g - 1);
            let row = &mut rows[i * g..(i + 1) * g];
            let mut mass = 0.0;
            for j in j0..=j1 {
                let z = (j as f64 - center) * h / bandwidth;
                let v = libm::exp(-0.5 * z * z);
                row[j] = v;
                mass += v;
            }
            let mass = mass * h;
            if !(mass > 0.0) {
                return Err(Error::Degenerate(format!(
                    "kernel at {p} has no mass on the grid"
                )));
            }
            for v in row[j0..=j1].iter_mut() {
                *v /= mass;
            }
            windows.push((j0, j1));
        }
        Ok(KernelMatrix {
            support,
            g,
            rows,
            windows,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn grid_size(&self) -> usize {
        self.g
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.g..(i + 1) * self.g]
    }

    /// (1/n) sum_i w_i K_i on the grid. Skips zero weights, so resampled
    /// multiplicity vectors cost only their support.
    pub fn weighted_density(&self, weights: &[f64]) -> Result<GridDensity> {
        assert_eq!(weights.len(), self.len(), "weight count mismatch");
        let n = self.len() as f64;
        let mut values = vec![0.0; self.g];
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (j0, j1) = self.windows[i];
            let row = self.row(i);
            for j in j0..=j1 {
                values[j] += w * row[j];
            }
        }
        for v in values.iter_mut() {
            *v /= n;
        }
        GridDensity::function(self.support, values)
    }
}

/// Weighted kernel density estimate on a grid.
///
/// Output integrates to (sum of weights)/n; pass the result through
/// `normalized()` for a probability density. Weights may be signed (as with
/// orthogonal weight functions); all-zero weights are rejected.
pub fn kde(
    points: &[f64],
    weights: Option<&[f64]>,
    bandwidth: f64,
    support: Support,
    g: usize,
) -> Result<GridDensity> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    if let Some(w) = weights {
        if w.len() != points.len() {
            return Err(Error::InvalidParameter("weight length mismatch".into()));
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(Error::DegenerateWeights);
        }
    }
    let km = KernelMatrix::new(points, bandwidth, support, g)?;
    match weights {
        Some(w) => km.weighted_density(w),
        None => km.weighted_density(&vec![1.0; points.len()]),
    }
}

/// Product-kernel 2-D density estimate of (m, t) pairs on a rectangle.
pub fn kde2d(
    m: &[f64],
    t: &[f64],
    bw_m: f64,
    bw_t: f64,
    support_m: Support,
    support_t: Support,
    nm: usize,
    nt: usize,
) -> Result<Grid2D> {
    assert_eq!(m.len(), t.len(), "coordinate length mismatch");
    let km = KernelMatrix::new(m, bw_m, support_m, nm)?;
    let kt = KernelMatrix::new(t, bw_t, support_t, nt)?;
    let n = m.len() as f64;
    let mut out = Grid2D::zeros(support_m, support_t, nm, nt);
    for i in 0..m.len() {
        let (a0, a1) = km.windows[i];
        let (b0, b1) = kt.windows[i];
        let rm = km.row(i);
        let rt = kt.row(i);
        for a in a0..=a1 {
            let f = rm[a] / n;
            for b in b0..=b1 {
                *out.value_mut(a, b) += f * rt[b];
            }
        }
    }
    Ok(out)
}

/// Empirical CDF with the n+1 convention, optionally weighted.
///
/// Unweighted: F(x) = #{X_i <= x} / (n+1), which keeps values strictly
/// inside (0, 1) at the data points. Weighted: cumulative weight fraction
/// clamped to [1/(n+1), n/(n+1)].
#[derive(Clone, Debug)]
pub struct Ecdf {
    xs: Vec<f64>,
    cum: Vec<f64>,
    total: f64,
    n: usize,
    weighted: bool,
}

impl Ecdf {
    pub fn new(points: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("empty sample".into()));
        }
        let n = points.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by(|&a, &b| points[a].total_cmp(&points[b]));
        let xs: Vec<f64> = order.iter().map(|&i| points[i]).collect();
        let (cumw, total, weighted) = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(Error::InvalidParameter("weight length mismatch".into()));
                }
                if w.iter().any(|&x| x < 0.0) {
                    return Err(Error::InvalidParameter(
                        "ecdf weights must be nonnegative".into(),
                    ));
                }
                let total: f64 = w.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::DegenerateWeights);
                }
                let mut cum = Vec::with_capacity(n);
                let mut s = 0.0;
                for &i in &order {
                    s += w[i];
                    cum.push(s);
                }
                (cum, total, true)
            }
            None => {
                let cum: Vec<f64> = (1..=n).map(|i| i as f64).collect();
                (cum, n as f64, false)
            }
        };
        Ok(Ecdf {
            xs,
            cum: cumw,
            total,
            n,
            weighted,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        // Rightmost index with xs[i] <= x.
        let mut lo = 0usize;
        let mut hi = self.xs.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.xs[mid] <= x {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let np1 = (self.n + 1) as f64;
        if self.weighted {
            let f = if lo == 0 { 0.0 } else { self.cum[lo - 1] / self.total };
            f.clamp(1.0 / np1, self.n as f64 / np1)
        } else {
            if lo == 0 {
                0.0
            } else {
                self.cum[lo - 1] / np1
            }
        }
    }
}

/// 2-D histogram with uniform bins.
#[derive(Clone, Debug)]
pub struct Hist2D {
    pub counts: crate::linalg::Matrix,
    pub m_edges: Vec<f64>,
    pub t_edges: Vec<f64>,
    /// Points outside an explicit range are dropped and counted here.
    pub dropped: usize,
}

impl Hist2D {
    pub fn support_m(&self) -> Support {
        Support {
            lo: self.m_edges[0],
            hi: *self.m_edges.last().unwrap(),
        }
    }

    pub fn support_t(&self) -> Support {
        Support {
            lo: self.t_edges[0],
            hi: *self.t_edges.last().unwrap(),
        }
    }

    pub fn n_m(&self) -> usize {
        self.m_edges.len() - 1
    }

    pub fn n_t(&self) -> usize {
        self.t_edges.len() - 1
    }
}

/// Bin (m, t) pairs into an n_m x n_t grid. With no explicit ranges the
/// edges span the observed data and every point lands in a bin (the top
/// edges are inclusive).
pub fn hist2d(
    s: &Sample,
    n_m: usize,
    n_t: usize,
    ranges: Option<(Support, Support)>,
) -> Result<Hist2D> {
    if n_m == 0 || n_t == 0 {
        return Err(Error::InvalidParameter("histogram needs bins".into()));
    }
    let (rm, rt) = match ranges {
        Some(r) => r,
        None => {
            let lo_m = s.m.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi_m = s.m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo_t = s.t.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi_t = s.t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (Support::new(lo_m, hi_m)?, Support::new(lo_t, hi_t)?)
        }
    };
    let edges = |sup: Support, n: usize| -> Vec<f64> {
        (0..=n)
            .map(|i| sup.lo + sup.len() * i as f64 / n as f64)
            .collect()
    };
    let mut counts = crate::linalg::Matrix::zeros(n_m, n_t);
    let mut dropped = 0usize;
    for (&m, &t) in s.m.iter().zip(&s.t) {
        if !rm.contains(m) || !rt.contains(t) {
            dropped += 1;
            continue;
        }
        let i = (((m - rm.lo) / rm.len() * n_m as f64) as usize).min(n_m - 1);
        let j = (((t - rt.lo) / rt.len() * n_t as f64) as usize).min(n_t - 1);
        counts[(i, j)] += 1.0;
    }
    Ok(Hist2D {
        counts,
        m_edges: edges(rm, n_m),
        t_edges: edges(rt, n_t),
        dropped,
    })
}

/// Options for `cond_density`.
#[derive(Clone, Debug)]
pub struct CondOpts {
    pub support_m: Support,
    pub support_t: Support,
    pub nm: usize,
    pub nt: usize,
    /// Kernel bandwidth in t; Silverman when absent.
    pub bw_t: Option<f64>,
    /// Local-regression bandwidth in m; Silverman when absent.
    pub bw_m: Option<f64>,
}

/// Conditional density field b(t | m) on a grid, plus fit diagnostics.
#[derive(Clone, Debug)]
pub struct CondField {
    /// Rows are m-slices: each row is a density in t (clipped, renormalized).
    pub field: Grid2D,
    pub bw_t: f64,
    pub bw_m: f64,
    /// Indices of m-slices whose regression bandwidth had to be widened.
    pub widened: Vec<usize>,
}

/// Estimate the conditional density of T given M = m by local-linear
/// regression of renormalized kernel columns K(t - T_i) on M_i.
///
/// Slices with fewer than 3 effective points double the local bandwidth
/// until they have them, and are reported in `widened`.
pub fn cond_density(m: &[f64], t: &[f64], opts: &CondOpts) -> Result<CondField> {
    assert_eq!(m.len(), t.len(), "coordinate length mismatch");
    if m.len() < 3 {
        return Err(Error::InvalidParameter(
            "conditional density needs at least 3 points".into(),
        ));
    }
    let bw_t = match opts.bw_t {
        Some(b) => b,
        None => silverman(t)?,
    };
    let bw_m = match opts.bw_m {
        Some(b) => b,
        None => silverman(m)?,
    };
    if !(bw_t > 0.0 && bw_m > 0.0) {
        return Err(Error::InvalidParameter("bandwidths must be positive".into()));
    }
    let n = m.len();
    let kt = KernelMatrix::new(t, bw_t, opts.support_t, opts.nt)?;
    let hm = opts.support_m.len() / opts.nm as f64;
    let ht = opts.support_t.len() / opts.nt as f64;
    let mut field = Grid2D::zeros(opts.support_m, opts.support_t, opts.nm, opts.nt);
    let mut widened = Vec::new();
    let mut omega = vec![0.0; n];
    let mut acc_wy = vec![0.0; opts.nt];
    let mut acc_wdy = vec![0.0; opts.nt];
    for a in 0..opts.nm {
        let m0 = opts.support_m.lo + (a as f64 + 0.5) * hm;
        let mut bw = bw_m;
        let mut tries = 0;
        loop {
            for i in 0..n {
                let z = (m[i] - m0) / bw;
                omega[i] = libm::exp(-0.5 * z * z);
            }
            let sw: f64 = omega.iter().sum();
            let sw2: f64 = omega.iter().map(|w| w * w).sum();
            let n_eff = if sw2 > 0.0 { sw * sw / sw2 } else { 0.0 };
            if n_eff >= 3.0 || tries >= 60 {
                if tries > 0 {
                    widened.push(a);
                }
                break;
            }
            bw *= 2.0;
            tries += 1;
        }
        // Local-linear moments in the m direction.
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for i in 0..n {
            let d = m[i] - m0;
            s0 += omega[i];
            s1 += omega[i] * d;
            s2 += omega[i] * d * d;
        }
        let det = s0 * s2 - s1 * s1;
        let local_constant = det.abs() <= 1e-12 * s0 * s2 + 1e-300;
        acc_wy.fill(0.0);
        acc_wdy.fill(0.0);
        for i in 0..n {
            let w = omega[i];
            if w < 1e-14 {
                continue;
            }
            let d = m[i] - m0;
            let (j0, j1) = kt.windows[i];
            let krow = kt.row(i);
            for j in j0..=j1 {
                let wy = w * krow[j];
                acc_wy[j] += wy;
                acc_wdy[j] += wy * d;
            }
        }
        // Intercept of the weighted linear fit, clipped at zero, then
        // renormalized so the slice is a density in t.
        let row = field.row_mut(a);
        let mut mass = 0.0;
        for j in 0..opts.nt {
            let v = if local_constant {
                acc_wy[j] / s0
            } else {
                (s2 * acc_wy[j] - s1 * acc_wdy[j]) / det
            };
            let v = v.max(0.0);
            row[j] = v;
            mass += v;
        }
        let mass = mass * ht;
        if !(mass > 0.0) {
            return Err(Error::Degenerate(format!(
                "conditional density slice at m = {m0} has no mass"
            )));
        }
        for v in row.iter_mut() {
            *v /= mass;
        }
    }
    Ok(CondField {
        field,
        bw_t,
        bw_m,
        widened,
    })
}
