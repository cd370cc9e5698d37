//! Two-component mixtures with Gaussian copula dependence inside each
//! component, fitted by alternating rank-based moment steps.
//!
//! The M-side component shapes are assumed known; everything on the T side
//! (component densities, copula correlations, mixture weight) is estimated.

use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridDensity, Support};
use crate::mixture::MixtureModel;
use crate::smooth::{kde, silverman};
use crate::special::{norm_pdf, probit};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Gaussian copula density at (u, v) with correlation rho.
///
/// Arguments are clamped into [1e-10, 1 - 1e-10] before the probit map, so
/// the tails stay finite.
pub fn gaussian_copula_density(u: f64, v: f64, rho: f64) -> Result<f64> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "copula correlation {rho} outside (-1, 1)"
        )));
    }
    let u = u.clamp(1e-10, 1.0 - 1e-10);
    let v = v.clamp(1e-10, 1.0 - 1e-10);
    let x = probit(u)?;
    let y = probit(v)?;
    let r2 = rho * rho;
    let expo = -(r2 * x * x + r2 * y * y - 2.0 * rho * x * y) / (2.0 * (1.0 - r2));
    Ok(libm::exp(expo) / libm::sqrt(1.0 - r2))
}

/// Sorted view of one coordinate, built once so each refresh of a weighted
/// ECDF costs a single pass.
struct RankedCoord {
    order: Vec<usize>,
    /// For each point, the index in `order` of its last tied occurrence.
    rank: Vec<usize>,
}

impl RankedCoord {
    fn new(xs: &[f64]) -> Self {
        let n = xs.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let mut rank = vec![0usize; n];
        let mut i = 0;
        while i < n {
            // Ties share the inclusive (rightmost) rank.
            let mut j = i;
            while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
                j += 1;
            }
            for k in i..=j {
                rank[order[k]] = j;
            }
            i = j + 1;
        }
        RankedCoord { order, rank }
    }

    /// Weighted ECDF evaluated at every data point, n+1 convention with the
    /// weighted value clamped into [1/(n+1), n/(n+1)].
    fn ecdf_at_points(&self, weights: &[f64], out: &mut [f64]) -> Result<()> {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateWeights);
        }
        let mut cum = vec![0.0; n];
        let mut s = 0.0;
        for (pos, &i) in self.order.iter().enumerate() {
            s += weights[i];
            cum[pos] = s;
        }
        let np1 = (n + 1) as f64;
        let (lo, hi) = (1.0 / np1, n as f64 / np1);
        for i in 0..n {
            out[i] = (cum[self.rank[i]] / total).clamp(lo, hi);
        }
        Ok(())
    }
}

fn weighted_correlation(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut cxy = 0.0;
    let mut cxx = 0.0;
    let mut cyy = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        cxy += w[i] * dx * dy;
        cxx += w[i] * dx * dx;
        cyy += w[i] * dy * dy;
    }
    if cxx <= 0.0 || cyy <= 0.0 {
        return 0.0;
    }
    (cxy / libm::sqrt(cxx * cyy)).clamp(-(1.0 - 1e-6), 1.0 - 1e-6)
}

#[derive(Clone, Debug)]
pub struct CopulaMixOpts {
    pub z0: f64,
    pub rho0: (f64, f64),
    pub max_iter: usize,
    pub tol: f64,
    /// Tabulation grid for the T-side kernel estimates.
    pub grid: usize,
    /// Kernel bandwidth on T; Silverman when absent.
    pub bw_t: Option<f64>,
}

impl Default for CopulaMixOpts {
    fn default() -> Self {
        CopulaMixOpts {
            z0: 0.5,
            rho0: (0.0, 0.0),
            max_iter: 500,
            tol: 1e-6,
            grid: 512,
            bw_t: None,
        }
    }
}

/// Result of `fit_copula_mixture`.
#[derive(Clone, Debug)]
pub struct CopulaMixtureFit {
    pub z: f64,
    /// Copula correlation of the signal component.
    pub rho1: f64,
    /// Copula correlation of the control component.
    pub rho2: f64,
    /// Per-point signal responsibilities, in [0, 1].
    pub responsibilities: Vec<f64>,
    /// (z, rho1, rho2) after each pass.
    pub trace: Vec<(f64, f64, f64)>,
    pub converged: bool,
    /// Set when the responsibilities collapsed to one component.
    pub degenerate: bool,
    /// Signal-side probit map of T evaluated at the data points.
    a2_t: Vec<f64>,
    /// T values, final kernel estimates, and support, kept for recovery.
    t_data: Vec<f64>,
    pub h1: GridDensity,
    pub h2: GridDensity,
    support_t: Support,
}

impl CopulaMixtureFit {
    pub fn r1(&self) -> [[f64; 2]; 2] {
        [[1.0, self.rho1], [self.rho1, 1.0]]
    }

    pub fn r2(&self) -> [[f64; 2]; 2] {
        [[1.0, self.rho2], [self.rho2, 1.0]]
    }
}

/// Fit the two-component Gaussian copula mixture.
///
/// `g1`, `g2` are the known M-side component densities tabulated on the
/// M support. Each pass rebuilds the weighted rank maps, the weighted
/// correlations, the mixture weight, and the T-side kernel estimates, then
/// refreshes the responsibilities from the implied joint density.
pub fn fit_copula_mixture(
    m: &[f64],
    t: &[f64],
    g1: &GridDensity,
    g2: &GridDensity,
    support_t: Support,
    opts: &CopulaMixOpts,
) -> Result<CopulaMixtureFit> {
    if m.len() != t.len() || m.is_empty() {
        return Err(Error::InvalidParameter("paired sample required".into()));
    }
    if !(opts.z0 > 0.0 && opts.z0 < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "initial weight {} outside (0, 1)",
            opts.z0
        )));
    }
    if !g1.same_grid(g2) {
        return Err(Error::GridMismatch("m-side component densities"));
    }
    let n = m.len();
    let bw_t = match opts.bw_t {
        Some(b) => b,
        None => silverman(t)?,
    };
    let ranked_m = RankedCoord::new(m);
    let ranked_t = RankedCoord::new(t);

    let g1_at: Vec<f64> = m.iter().map(|&x| g1.eval(x)).collect();
    let g2_at: Vec<f64> = m.iter().map(|&x| g2.eval(x)).collect();

    // Responsibilities start from the M-only mixture weights at z0.
    let mut w: Vec<f64> = (0..n)
        .map(|i| {
            let num = opts.z0 * g1_at[i];
            let den = num + (1.0 - opts.z0) * g2_at[i];
            if den > 0.0 {
                num / den
            } else {
                opts.z0
            }
        })
        .collect();
    let mut wc: Vec<f64> = w.iter().map(|x| 1.0 - x).collect();

    let mut f_m1 = vec![0.0; n];
    let mut f_m2 = vec![0.0; n];
    let mut f_t1 = vec![0.0; n];
    let mut f_t2 = vec![0.0; n];
    let mut z = opts.z0;
    let mut rho1 = opts.rho0.0;
    let mut rho2 = opts.rho0.1;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut h1 = kde(t, Some(&w), bw_t, support_t, opts.grid)?.normalized()?;
    let mut h2 = kde(t, Some(&wc), bw_t, support_t, opts.grid)?.normalized()?;
    let mut a2 = vec![0.0; n];

    for _ in 0..opts.max_iter {
        ranked_m.ecdf_at_points(&w, &mut f_m1)?;
        ranked_m.ecdf_at_points(&wc, &mut f_m2)?;
        ranked_t.ecdf_at_points(&w, &mut f_t1)?;
        ranked_t.ecdf_at_points(&wc, &mut f_t2)?;

        // Probit maps of both coordinates under both component CDFs.
        let mut a1 = vec![0.0; n];
        let mut b1 = vec![0.0; n];
        let mut b2 = vec![0.0; n];
        for i in 0..n {
            a1[i] = probit(f_m1[i])?;
            a2[i] = probit(f_t1[i])?;
            b1[i] = probit(f_m2[i])?;
            b2[i] = probit(f_t2[i])?;
        }
        let new_rho1 = weighted_correlation(&a1, &a2, &w);
        let new_rho2 = weighted_correlation(&b1, &b2, &wc);
        let new_z = w.iter().sum::<f64>() / n as f64;

        h1 = kde(t, Some(&w), bw_t, support_t, opts.grid)?.normalized()?;
        h2 = kde(t, Some(&wc), bw_t, support_t, opts.grid)?.normalized()?;

        // Responsibility refresh from the implied component joints.
        for i in 0..n {
            let c1 = copula_factor(f_m1[i], f_t1[i], new_rho1);
            let c2 = copula_factor(f_m2[i], f_t2[i], new_rho2);
            let num = new_z * g1_at[i] * h1.eval(t[i]) * c1;
            let den = num + (1.0 - new_z) * g2_at[i] * h2.eval(t[i]) * c2;
            w[i] = if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { new_z };
            wc[i] = 1.0 - w[i];
        }

        let delta =
            libm::fabs(new_z - z) + libm::fabs(new_rho1 - rho1) + libm::fabs(new_rho2 - rho2);
        z = new_z;
        rho1 = new_rho1;
        rho2 = new_rho2;
        trace.push((z, rho1, rho2));
        if trace.len() > 1 && delta < opts.tol {
            converged = true;
            break;
        }
    }

    let degenerate = !(1e-3..=1.0 - 1e-3).contains(&z);
    Ok(CopulaMixtureFit {
        z,
        rho1,
        rho2,
        responsibilities: w,
        trace,
        converged: converged && !degenerate,
        degenerate,
        a2_t: a2,
        t_data: t.to_vec(),
        h1,
        h2,
        support_t,
    })
}

fn copula_factor(u: f64, v: f64, rho: f64) -> f64 {
    gaussian_copula_density(u, v, rho).unwrap_or(1.0)
}

/// How `recover_signal_density` turns the fit into a density.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecoverMode {
    /// h1(t) = phi(a2(t)) a2'(t) with a2 smoothed by a monotone cubic.
    MapDerivative,
    /// Weighted kernel estimate with the final responsibilities.
    WeightedKde,
}

/// Signal T density implied by a copula mixture fit.
///
/// The map-derivative route smooths the probit rank map of the signal
/// component through 101 knots and differentiates; if the smoothed map is
/// not strictly increasing it falls back to the weighted kernel estimate.
pub fn recover_signal_density(
    fit: &CopulaMixtureFit,
    g_out: usize,
    mode: RecoverMode,
) -> Result<GridDensity> {
    match mode {
        RecoverMode::WeightedKde => Ok(fit.h1.clone()),
        RecoverMode::MapDerivative => {
            const KNOTS: usize = 101;
            // Interpolate the fitted map at evenly spaced knots. The map is
            // only defined at data points; between them we take the linear
            // interpolant along sorted t.
            let mut order: Vec<usize> = (0..fit.t_data.len()).collect();
            order.sort_unstable_by(|&a, &b| fit.t_data[a].total_cmp(&fit.t_data[b]));
            let ts: Vec<f64> = order.iter().map(|&i| fit.t_data[i]).collect();
            let as_: Vec<f64> = order.iter().map(|&i| fit.a2_t[i]).collect();
            let sup = fit.support_t;
            let mut xs = vec![0.0; KNOTS];
            let mut ys = vec![0.0; KNOTS];
            for k in 0..KNOTS {
                let x = sup.lo + sup.len() * k as f64 / (KNOTS - 1) as f64;
                xs[k] = x;
                ys[k] = interp_sorted(&ts, &as_, x);
            }
            if ys.windows(2).any(|p| p[1] <= p[0]) {
                // Flat or inverted stretch: the map route is unusable here.
                return Ok(fit.h1.clone());
            }
            let cubic = MonotoneCubic::new(xs, ys)?;
            let raw = GridDensity::tabulate(sup, g_out, |t| {
                let a = cubic.eval(t);
                let da = cubic.deriv(t).max(0.0);
                norm_pdf(a) * da
            })?;
            raw.normalized()
        }
    }
}

fn interp_sorted(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let mut lo = 0;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if xs[mid] <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if xs[hi] == xs[lo] {
        return 0.5 * (ys[lo] + ys[hi]);
    }
    let f = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] * (1.0 - f) + ys[hi] * f
}

/// Shape-preserving cubic interpolant (Fritsch-Carlson slopes).
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 3 || ys.len() != n {
            return Err(Error::InvalidParameter(
                "monotone cubic needs at least 3 knots".into(),
            ));
        }
        let mut delta = vec![0.0; n - 1];
        for k in 0..n - 1 {
            let h = xs[k + 1] - xs[k];
            if !(h > 0.0) {
                return Err(Error::InvalidParameter("knots must increase".into()));
            }
            delta[k] = (ys[k + 1] - ys[k]) / h;
        }
        let mut ds = vec![0.0; n];
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] <= 0.0 {
                ds[k] = 0.0;
            } else {
                // Weighted harmonic mean keeps the interpolant monotone.
                let h0 = xs[k] - xs[k - 1];
                let h1 = xs[k + 1] - xs[k];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                ds[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        let end_slope = |d0: f64, d1: f64, h0: f64, h1: f64| -> f64 {
            let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
            if d * d0 <= 0.0 {
                0.0
            } else if d0 * d1 <= 0.0 && libm::fabs(d) > 3.0 * libm::fabs(d0) {
                3.0 * d0
            } else {
                d
            }
        };
        ds[0] = end_slope(delta[0], delta[1], xs[1] - xs[0], xs[2] - xs[1]);
        ds[n - 1] = end_slope(
            delta[n - 2],
            delta[n - 3],
            xs[n - 1] - xs[n - 2],
            xs[n - 2] - xs[n - 3],
        );
        Ok(MonotoneCubic { xs, ys, ds })
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0;
        }
        if x >= self.xs[n - 2] {
            return n - 2;
        }
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.xs[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let h = self.xs[k + 1] - self.xs[k];
        let s = ((x - self.xs[k]) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        let s3 = s2 * s;
        self.ys[k] * (2.0 * s3 - 3.0 * s2 + 1.0)
            + h * self.ds[k] * (s3 - 2.0 * s2 + s)
            + self.ys[k + 1] * (-2.0 * s3 + 3.0 * s2)
            + h * self.ds[k + 1] * (s3 - s2)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let h = self.xs[k + 1] - self.xs[k];
        let s = ((x - self.xs[k]) / h).clamp(0.0, 1.0);
        let s2 = s * s;
        (self.ys[k] * (6.0 * s2 - 6.0 * s)
            + h * self.ds[k] * (3.0 * s2 - 4.0 * s + 1.0)
            + self.ys[k + 1] * (-6.0 * s2 + 6.0 * s)
            + h * self.ds[k + 1] * (3.0 * s2 - 2.0 * s))
            / h
    }
}

/// Which side of the mixture a COWs copula is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Signal,
    Background,
}

/// Copula density of the signal (or background) part of a mixture model,
/// i.e. the dependence left in (M, T) after conditioning on the side.
///
/// With a single component on the chosen side this is identically 1.
pub fn cows_copula_density(model: &MixtureModel, which: Side, g: usize) -> Result<Grid2D> {
    let (range, lambda) = match which {
        Side::Signal => (0..model.s, model.z[..model.s].iter().sum::<f64>()),
        Side::Background => (model.s..model.k(), model.z[model.s..].iter().sum::<f64>()),
    };
    if range.is_empty() {
        return Err(Error::InvalidParameter("side has no components".into()));
    }
    let comps: Vec<usize> = range.collect();
    let fine = 4096;
    // Side marginals tabulated finely for quantile lookups.
    let sm = GridDensity::tabulate(model.support_m(), fine, |m| {
        comps.iter().map(|&j| model.z[j] * model.g[j].pdf(m)).sum::<f64>() / lambda
    })?;
    let st = GridDensity::tabulate(model.support_t(), fine, |t| {
        comps.iter().map(|&j| model.z[j] * model.h[j].pdf(t)).sum::<f64>() / lambda
    })?;
    let unit = Support::new(0.0, 1.0)?;
    let mut out = Grid2D::zeros(unit, unit, g, g);
    let mut qm = vec![0.0; g];
    let mut qt = vec![0.0; g];
    for i in 0..g {
        let u = (i as f64 + 0.5) / g as f64;
        qm[i] = sm.quantile(u)?;
        qt[i] = st.quantile(u)?;
    }
    for i in 0..g {
        let mv = qm[i];
        let dm: f64 =
            comps.iter().map(|&j| model.z[j] * model.g[j].pdf(mv)).sum::<f64>() / lambda;
        for jdx in 0..g {
            let tv = qt[jdx];
            let dt: f64 =
                comps.iter().map(|&j| model.z[j] * model.h[j].pdf(tv)).sum::<f64>() / lambda;
            let joint: f64 = comps
                .iter()
                .map(|&j| model.z[j] * model.g[j].pdf(mv) * model.h[j].pdf(tv))
                .sum::<f64>()
                / lambda;
            *out.value_mut(i, jdx) = if dm * dt > 1e-300 { joint / (dm * dt) } else { 0.0 };
        }
    }
    Ok(out)
}
