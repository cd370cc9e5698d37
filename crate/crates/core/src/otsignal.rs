//! Localized-signal extraction without conditional independence: the
//! background conditional is estimated from the sidebands, carried across
//! the signal window along the Wasserstein geodesic, and subtracted.
//!
//! Throughout this module z is the background fraction and `background_m`
//! is the background density of M (the quantity this estimator needs known;
//! it plays the role other modules give to the signal shape).

use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridDensity, Support};
use crate::linalg::Matrix;
use crate::smooth::{cond_density, kde2d, silverman, CondOpts, Sample};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Number of interior quantile levels used for transport interpolation.
pub const U_GRID: usize = 512;

/// Quantile function of the geodesic point at parameter `t` between the
/// distributions with quantile functions `finv` and `ginv`.
pub fn wasserstein_geodesic_quantile<F, G>(finv: F, ginv: G, t: f64) -> Result<impl Fn(f64) -> f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "geodesic parameter {t} outside [0, 1]"
        )));
    }
    Ok(move |u: f64| (1.0 - t) * finv(u) + t * ginv(u))
}

/// Squared 2-Wasserstein distance between two quantile functions, by
/// midpoint quadrature over the unit interval.
pub fn w2_squared<F, G>(finv: F, ginv: G, grid: usize) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let mut s = 0.0;
    for i in 0..grid {
        let u = (i as f64 + 0.5) / grid as f64;
        let d = finv(u) - ginv(u);
        s += d * d;
    }
    s / grid as f64
}

/// Conditional quantiles Q[m, u] = B^{-1}(u | m) across a window.
#[derive(Clone, Debug)]
pub struct QuantileField {
    pub window: (f64, f64),
    /// m positions of the rows (cell midpoints across the window).
    pub grid_m: Vec<f64>,
    /// Support the quantiles live on (the t axis).
    pub support_t: Support,
    /// rows: m; cols: the U_GRID interior quantile levels.
    pub q: Matrix,
}

impl QuantileField {
    /// Turn one quantile row back into a density on `grid_t` cells by
    /// inverting the monotone map and differencing the resulting CDF.
    pub fn density_at(&self, row: usize, grid_t: usize) -> Result<GridDensity> {
        let q = self.q.row(row);
        density_from_quantiles(q, self.support_t, grid_t)
    }
}

fn density_from_quantiles(q: &[f64], support: Support, grid_t: usize) -> Result<GridDensity> {
    let nu = q.len();
    // CDF at a point: the u level whose quantile reaches it, linear
    // between tabulated levels, pinned to 0 and 1 at the support ends.
    let cdf = |x: f64| -> f64 {
        if x <= support.lo {
            return 0.0;
        }
        if x >= support.hi {
            return 1.0;
        }
        if x <= q[0] {
            // Between the support floor (u = 0) and the first level.
            let u0 = 0.5 / nu as f64;
            if q[0] <= support.lo {
                return u0;
            }
            return u0 * (x - support.lo) / (q[0] - support.lo);
        }
        if x >= q[nu - 1] {
            let u1 = (nu as f64 - 0.5) / nu as f64;
            if support.hi <= q[nu - 1] {
                return u1;
            }
            return u1 + (1.0 - u1) * (x - q[nu - 1]) / (support.hi - q[nu - 1]);
        }
        let mut lo = 0;
        let mut hi = nu - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if q[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let ulo = (lo as f64 + 0.5) / nu as f64;
        let uhi = (hi as f64 + 0.5) / nu as f64;
        if q[hi] == q[lo] {
            return 0.5 * (ulo + uhi);
        }
        ulo + (uhi - ulo) * (x - q[lo]) / (q[hi] - q[lo])
    };
    let h = support.len() / grid_t as f64;
    let mut values = vec![0.0; grid_t];
    let mut prev = 0.0;
    for (j, v) in values.iter_mut().enumerate() {
        let next = cdf(support.lo + (j as f64 + 1.0) * h);
        *v = ((next - prev) / h).max(0.0);
        prev = next;
    }
    GridDensity::function(support, values)
}

/// Interpolate the conditional B^{-1}(u | m) linearly in m between the two
/// window-boundary conditionals.
pub fn interpolate_conditional(
    b_left: &GridDensity,
    b_right: &GridDensity,
    window: (f64, f64),
    grid_m: usize,
) -> Result<QuantileField> {
    let (c1, c2) = window;
    if !(c1 < c2) {
        return Err(Error::InvalidParameter(format!(
            "window [{c1}, {c2}] is empty"
        )));
    }
    if !b_left.is_density() || !b_right.is_density() {
        return Err(Error::InvalidParameter(
            "boundary conditionals must be densities".into(),
        ));
    }
    if !b_left.same_grid(b_right) {
        return Err(Error::GridMismatch("boundary conditional grids"));
    }
    if grid_m == 0 {
        return Err(Error::InvalidParameter("empty m grid".into()));
    }
    let mut ql = vec![0.0; U_GRID];
    let mut qr = vec![0.0; U_GRID];
    for i in 0..U_GRID {
        let u = (i as f64 + 0.5) / U_GRID as f64;
        ql[i] = b_left.quantile(u)?;
        qr[i] = b_right.quantile(u)?;
    }
    let hm = (c2 - c1) / grid_m as f64;
    let grid_m_pts: Vec<f64> = (0..grid_m).map(|j| c1 + (j as f64 + 0.5) * hm).collect();
    let q = Matrix::from_fn(grid_m, U_GRID, |j, i| {
        let lam = (grid_m_pts[j] - c1) / (c2 - c1);
        (1.0 - lam) * ql[i] + lam * qr[i]
    });
    Ok(QuantileField {
        window,
        grid_m: grid_m_pts,
        support_t: b_left.support(),
        q,
    })
}

#[derive(Clone, Debug)]
pub struct OtOpts {
    /// Signal window (c1, c2), strictly inside the M support.
    pub window: (f64, f64),
    /// Background fraction, in (0, 1).
    pub z_hat: f64,
    /// Kernel bandwidth on T.
    pub bw_t: f64,
    /// Local-regression and KDE bandwidth on M; Silverman when absent.
    pub bw_m: Option<f64>,
    pub grid_m: usize,
    pub grid_t: usize,
}

/// Localized extraction output; `z_hat` is the background fraction.
#[derive(Clone, Debug)]
pub struct OtExtraction {
    pub window: (f64, f64),
    pub z_hat: f64,
    /// Background conditional b(t|m): sideband fits outside the window,
    /// transport interpolation inside. Rows are densities in t.
    pub b_cond: Grid2D,
    /// b(m, t) = background_m(m) b(t|m).
    pub b_joint: Grid2D,
    /// Signed subtraction (p - z b)/(1 - z) before any policy.
    pub s_joint_raw: Grid2D,
    /// Clipped at zero and renormalized to unit mass.
    pub s_joint: Grid2D,
    /// Signal density of T: m-integral of s_joint, renormalized.
    pub s_t: GridDensity,
    /// Signed m-integral of the raw field, kept for diagnostics.
    pub s_t_raw: GridDensity,
}

/// Subtraction step alone: s = (p - z b)/(1 - z) with the clipping policy.
/// Exposed so exact densities can be plugged in place of estimates.
pub fn extract_from_densities(
    p: &Grid2D,
    b_joint: &Grid2D,
    z_hat: f64,
    window: (f64, f64),
) -> Result<OtExtraction> {
    if !(z_hat > 0.0 && z_hat < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "background fraction {z_hat} outside (0, 1)"
        )));
    }
    let (nm, nt) = (p.nm(), p.nt());
    if nm != b_joint.nm() || nt != b_joint.nt() {
        return Err(Error::GridMismatch("joint density grids"));
    }
    let mut raw = Grid2D::zeros(p.support_m(), p.support_t(), nm, nt);
    for i in 0..nm {
        for j in 0..nt {
            *raw.value_mut(i, j) = (p.value(i, j) - z_hat * b_joint.value(i, j)) / (1.0 - z_hat);
        }
    }
    let mut clipped = raw.clone();
    for i in 0..nm {
        for j in 0..nt {
            let v = clipped.value(i, j);
            *clipped.value_mut(i, j) = v.max(0.0);
        }
    }
    let mass = clipped.integrate();
    if !(mass > 0.0) {
        return Err(Error::Degenerate(
            "subtracted signal field has no positive mass".into(),
        ));
    }
    for i in 0..nm {
        for j in 0..nt {
            let v = clipped.value(i, j);
            *clipped.value_mut(i, j) = v / mass;
        }
    }
    let s_t = clipped.marginal_t().normalized()?;
    let s_t_raw = raw.marginal_t();
    // b(t|m) rows recovered from the joint for the diagnostics view.
    let mut b_cond = b_joint.clone();
    let hm = p.support_m().len() / nm as f64;
    for i in 0..nm {
        let row_mass: f64 = b_joint.row(i).iter().sum::<f64>() * b_joint.step_t();
        if row_mass > 0.0 {
            for j in 0..nt {
                *b_cond.value_mut(i, j) = b_joint.value(i, j) / (row_mass / hm) * hm;
            }
        }
    }
    Ok(OtExtraction {
        window,
        z_hat,
        b_cond,
        b_joint: b_joint.clone(),
        s_joint_raw: raw,
        s_joint: clipped,
        s_t,
        s_t_raw,
    })
}

/// Full pipeline: sideband conditional fit, transport bridge across the
/// window, joint reconstruction, subtraction.
pub fn extract_localized(
    sample: &Sample,
    background_m: &GridDensity,
    opts: &OtOpts,
) -> Result<OtExtraction> {
    let (c1, c2) = opts.window;
    let sup_m = background_m.support();
    if !(z_ok(opts.z_hat)) {
        return Err(Error::InvalidParameter(format!(
            "background fraction {} outside (0, 1)",
            opts.z_hat
        )));
    }
    if !(sup_m.lo < c1 && c1 < c2 && c2 < sup_m.hi) {
        return Err(Error::InvalidParameter(format!(
            "window [{c1}, {c2}] not strictly inside the M support"
        )));
    }
    let n = sample.m.len();
    let (mut side_m, mut side_t) = (Vec::new(), Vec::new());
    let (mut left_n, mut right_n) = (0usize, 0usize);
    for i in 0..n {
        let m = sample.m[i];
        if m < c1 || m > c2 {
            side_m.push(m);
            side_t.push(sample.t[i]);
            if m < c1 {
                left_n += 1;
            } else {
                right_n += 1;
            }
        }
    }
    if left_n < 3 || right_n < 3 {
        return Err(Error::Degenerate(format!(
            "sideband too thin: {left_n} below, {right_n} above the window"
        )));
    }
    let t_lo = sample.t.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_hi = sample.t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = 1e-9 * (t_hi - t_lo).max(1.0);
    let sup_t = Support::new(t_lo - pad, t_hi + pad)?;
    let bw_m = match opts.bw_m {
        Some(b) => b,
        None => silverman(&sample.m)?,
    };

    // Sideband conditional over the full m grid; window rows are replaced
    // by the transport bridge below.
    let field = cond_density(
        &side_m,
        &side_t,
        &CondOpts {
            support_m: sup_m,
            support_t: sup_t,
            nm: opts.grid_m,
            nt: opts.grid_t,
            bw_t: Some(opts.bw_t),
            bw_m: Some(bw_m),
        },
    )?;
    let mut b_cond = field.field;

    // Boundary conditionals evaluated exactly at c1 and c2 by one-slice fits.
    let eps = 1e-6 * sup_m.len();
    let boundary = |c: f64| -> Result<GridDensity> {
        let f = cond_density(
            &side_m,
            &side_t,
            &CondOpts {
                support_m: Support::new(c - eps, c + eps)?,
                support_t: sup_t,
                nm: 1,
                nt: opts.grid_t,
                bw_t: Some(opts.bw_t),
                bw_m: Some(bw_m),
            },
        )?;
        GridDensity::function(sup_t, f.field.row(0).to_vec())?.normalized()
    };
    let b_left = boundary(c1)?;
    let b_right = boundary(c2)?;

    // Transport bridge: replace the rows whose midpoints fall in the window.
    let hm = sup_m.len() / opts.grid_m as f64;
    let window_rows: Vec<usize> = (0..opts.grid_m)
        .filter(|&i| {
            let m = sup_m.lo + (i as f64 + 0.5) * hm;
            m >= c1 && m <= c2
        })
        .collect();
    if !window_rows.is_empty() {
        let mut ql = vec![0.0; U_GRID];
        let mut qr = vec![0.0; U_GRID];
        for u in 0..U_GRID {
            let lvl = (u as f64 + 0.5) / U_GRID as f64;
            ql[u] = b_left.quantile(lvl)?;
            qr[u] = b_right.quantile(lvl)?;
        }
        let mut q = vec![0.0; U_GRID];
        for &i in &window_rows {
            let m = sup_m.lo + (i as f64 + 0.5) * hm;
            let lam = ((m - c1) / (c2 - c1)).clamp(0.0, 1.0);
            for u in 0..U_GRID {
                q[u] = (1.0 - lam) * ql[u] + lam * qr[u];
            }
            let d = density_from_quantiles(&q, sup_t, opts.grid_t)?.normalized()?;
            b_cond.row_mut(i).copy_from_slice(d.values());
        }
    }

    // Joint background and the kernel estimate of the full joint.
    let mut b_joint = Grid2D::zeros(sup_m, sup_t, opts.grid_m, opts.grid_t);
    for i in 0..opts.grid_m {
        let m = sup_m.lo + (i as f64 + 0.5) * hm;
        let gm = background_m.eval(m);
        for j in 0..opts.grid_t {
            *b_joint.value_mut(i, j) = gm * b_cond.value(i, j);
        }
    }
    let p_hat = kde2d(
        &sample.m,
        &sample.t,
        bw_m,
        opts.bw_t,
        sup_m,
        sup_t,
        opts.grid_m,
        opts.grid_t,
    )?;
    let mut out = extract_from_densities(&p_hat, &b_joint, opts.z_hat, opts.window)?;
    out.b_cond = b_cond;
    Ok(out)
}

fn z_ok(z: f64) -> bool {
    z > 0.0 && z < 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::ParamDensity;
    use crate::special::probit;
    use crate::stream::SeedStream;

    #[test]
    fn geodesic_endpoints_are_exact() {
        let f = |u: f64| probit(u).unwrap();
        let g = |u: f64| probit(u).unwrap() + 2.0;
        let q0 = wasserstein_geodesic_quantile(f, g, 0.0).unwrap();
        let q1 = wasserstein_geodesic_quantile(f, g, 1.0).unwrap();
        for &u in &[0.05, 0.3, 0.77] {
            assert!((q0(u) - probit(u).unwrap()).abs() < 1e-15);
            assert!((q1(u) - (probit(u).unwrap() + 2.0)).abs() < 1e-15);
        }
        assert!(wasserstein_geodesic_quantile(f, g, 1.5).is_err());
    }

    #[test]
    fn normal_midpoint_is_shifted_normal() {
        // N(0,1) to N(2,1): the midpoint of the path is N(1,1).
        let f = |u: f64| probit(u).unwrap();
        let g = |u: f64| probit(u).unwrap() + 2.0;
        let q = wasserstein_geodesic_quantile(f, g, 0.5).unwrap();
        for i in 0..512 {
            let u = (i as f64 + 0.5) / 512.0;
            assert!((q(u) - (probit(u).unwrap() + 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn uniform_midpoint_is_uniform() {
        let q = wasserstein_geodesic_quantile(|u| u, |u| 2.0 * u, 0.5).unwrap();
        for i in 0..100 {
            let u = (i as f64 + 0.5) / 100.0;
            assert!((q(u) - 1.5 * u).abs() < 1e-12);
        }
    }

    #[test]
    fn w2_grows_linearly_along_the_path() {
        let left = ParamDensity::beta(2.0, 5.0).unwrap();
        let right = ParamDensity::beta(5.0, 2.0).unwrap();
        let f = |u: f64| left.quantile(u).unwrap();
        let g = |u: f64| right.quantile(u).unwrap();
        let full = libm::sqrt(w2_squared(&f, &g, 512));
        for &t in &[0.25, 0.5, 0.75] {
            let qt = wasserstein_geodesic_quantile(&f, &g, t).unwrap();
            let part = libm::sqrt(w2_squared(&f, &qt, 512));
            assert!((part - t * full).abs() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn constant_boundaries_give_constant_field() {
        let b = ParamDensity::beta(3.0, 3.0).unwrap().tabulate(256).unwrap();
        let qf = interpolate_conditional(&b, &b, (0.4, 0.6), 8).unwrap();
        for row in 1..8 {
            for u in 0..U_GRID {
                assert!((qf.q[(row, u)] - qf.q[(0, u)]).abs() < 1e-12);
            }
        }
        // Rows invert to a density.
        let d = qf.density_at(3, 128).unwrap();
        let mass: f64 = d.values().iter().sum::<f64>() * d.step();
        assert!((mass - 1.0).abs() < 1e-6);
        assert!(d.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn midpoint_row_is_the_half_geodesic() {
        let bl = ParamDensity::beta(2.6, 3.4).unwrap().tabulate(512).unwrap();
        let br = ParamDensity::beta(3.4, 2.6).unwrap().tabulate(512).unwrap();
        // Odd row count puts the middle row exactly at the window center.
        let qf = interpolate_conditional(&bl, &br, (0.4, 0.6), 5).unwrap();
        for u in 0..U_GRID {
            let want = 0.5 * (qf.q[(0, u)] + qf.q[(4, u)]);
            assert!((qf.q[(2, u)] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolated_center_close_to_true_conditional() {
        // True family Beta(1+4m, 5-4m); the geodesic between the m = 0.4
        // and m = 0.6 members, evaluated at m = 0.5, approximates Beta(3,3).
        let bl = ParamDensity::beta(2.6, 3.4).unwrap().tabulate(1024).unwrap();
        let br = ParamDensity::beta(3.4, 2.6).unwrap().tabulate(1024).unwrap();
        let qf = interpolate_conditional(&bl, &br, (0.4, 0.6), 5).unwrap();
        let mid = qf.density_at(2, 256).unwrap();
        let truth = ParamDensity::beta(3.0, 3.0).unwrap();
        let mut l1 = 0.0;
        for c in 0..256 {
            l1 += (mid.values()[c] - truth.pdf(mid.point(c))).abs() * mid.step();
        }
        assert!(l1 < 0.05, "L1 at the window center {l1}");
    }

    #[test]
    fn every_field_row_is_a_density() {
        let bl = ParamDensity::beta(2.6, 3.4).unwrap().tabulate(512).unwrap();
        let br = ParamDensity::beta(3.4, 2.6).unwrap().tabulate(512).unwrap();
        let qf = interpolate_conditional(&bl, &br, (0.4, 0.6), 16).unwrap();
        for row in 0..16 {
            // Quantile rows monotone.
            for u in 1..U_GRID {
                assert!(qf.q[(row, u)] >= qf.q[(row, u - 1)]);
            }
            let d = qf.density_at(row, 128).unwrap();
            let mass: f64 = d.values().iter().sum::<f64>() * d.step();
            assert!((mass - 1.0).abs() < 1e-6, "row {row}: mass {mass}");
            assert!(d.values().iter().all(|&v| v >= 0.0));
        }
    }

    fn ot_paper_model() -> (ParamDensity, ParamDensity, ParamDensity) {
        // background m, signal m, signal t
        (
            ParamDensity::uniform(0.0, 1.0).unwrap(),
            ParamDensity::rescaled_beta(3.0, 3.0, 0.4, 0.6).unwrap(),
            ParamDensity::beta(3.0, 3.0).unwrap(),
        )
    }

    fn sample_ot_model(n: usize, stream: &mut SeedStream) -> Sample {
        let (bm, sm, st) = ot_paper_model();
        let mut m = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        for _ in 0..n {
            if stream.uniform() < 0.5 {
                // Background: M uniform, T | M = Beta(1+4m, 5-4m).
                let mv = bm.quantile(stream.uniform()).unwrap();
                let cond = ParamDensity::beta(1.0 + 4.0 * mv, 5.0 - 4.0 * mv).unwrap();
                m.push(mv);
                t.push(cond.quantile(stream.uniform()).unwrap());
            } else {
                m.push(sm.quantile(stream.uniform()).unwrap());
                t.push(st.quantile(stream.uniform()).unwrap());
            }
        }
        Sample::new(m, t).unwrap()
    }

    #[test]
    fn exact_densities_recover_signal_exactly() {
        // Plug the true joint and true background joint in; the subtraction
        // is pointwise algebra.
        let (bm, sm, st) = ot_paper_model();
        let sup = Support::new(0.0, 1.0).unwrap();
        let (nm, nt) = (64, 64);
        let p = Grid2D::from_fn(sup, sup, nm, nt, |m, t| {
            let cond = ParamDensity::beta(1.0 + 4.0 * m, 5.0 - 4.0 * m).unwrap();
            0.5 * bm.pdf(m) * cond.pdf(t) + 0.5 * sm.pdf(m) * st.pdf(t)
        });
        let b = Grid2D::from_fn(sup, sup, nm, nt, |m, t| {
            let cond = ParamDensity::beta(1.0 + 4.0 * m, 5.0 - 4.0 * m).unwrap();
            bm.pdf(m) * cond.pdf(t)
        });
        let out = extract_from_densities(&p, &b, 0.5, (0.4, 0.6)).unwrap();
        // Raw field matches the true signal joint pointwise.
        for i in 0..nm {
            let m = out.s_joint_raw.point_m(i);
            for j in 0..nt {
                let t = out.s_joint_raw.point_t(j);
                let want = sm.pdf(m) * st.pdf(t);
                assert!(
                    (out.s_joint_raw.value(i, j) - want).abs() < 1e-9,
                    "({m}, {t})"
                );
            }
        }
        // Marginal close to the true signal t-density (quadrature only).
        for j in 0..nt {
            let t = out.s_t.point(j);
            assert!((out.s_t.eval(t) - st.pdf(t)).abs() < 5e-3);
        }
    }

    #[test]
    fn paper_setup_recovers_signal_shape() {
        let sample = sample_ot_model(1000, &mut SeedStream::new(42));
        let (bm, _, st) = ot_paper_model();
        let background = bm.tabulate(128).unwrap();
        let opts = OtOpts {
            window: (0.4, 0.6),
            z_hat: 0.5,
            bw_t: 0.05,
            bw_m: None,
            grid_m: 64,
            grid_t: 64,
        };
        let out = extract_localized(&sample, &background, &opts).unwrap();
        let mut l1 = 0.0;
        for c in 0..out.s_t.len() {
            let t = out.s_t.point(c);
            l1 += (out.s_t.values()[c] - st.pdf(t)).abs() * out.s_t.step();
        }
        assert!(l1 < 0.25, "L1 = {l1}");
        assert!((out.s_t.integrate() - 1.0).abs() < 1e-9);
        // Conditional rows are densities.
        for i in 0..64 {
            let mass: f64 = out.b_cond.row(i).iter().sum::<f64>() * out.b_cond.step_t();
            assert!((mass - 1.0).abs() < 1e-6, "row {i}: {mass}");
        }
    }

    #[test]
    fn thin_sideband_and_bad_fraction_are_rejected() {
        let sample = sample_ot_model(200, &mut SeedStream::new(9));
        let bm = ParamDensity::uniform(0.0, 1.0).unwrap().tabulate(64).unwrap();
        let base = OtOpts {
            window: (0.4, 0.6),
            z_hat: 0.5,
            bw_t: 0.05,
            bw_m: None,
            grid_m: 32,
            grid_t: 32,
        };
        let mut wide = base.clone();
        wide.window = (0.001, 0.999);
        assert!(matches!(
            extract_localized(&sample, &bm, &wide),
            Err(Error::Degenerate(_))
        ));
        let mut bad_z = base;
        bad_z.z_hat = 1.0;
        assert!(matches!(
            extract_localized(&sample, &bm, &bad_z),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn more_data_tightens_the_estimate() {
        let (bm, _, st) = ot_paper_model();
        let background = bm.tabulate(128).unwrap();
        let opts = OtOpts {
            window: (0.4, 0.6),
            z_hat: 0.5,
            bw_t: 0.05,
            bw_m: None,
            grid_m: 64,
            grid_t: 64,
        };
        let l1_at = |n: usize, seed: u64| -> f64 {
            let sample = sample_ot_model(n, &mut SeedStream::new(seed));
            let out = extract_localized(&sample, &background, &opts).unwrap();
            let mut l1 = 0.0;
            for c in 0..out.s_t.len() {
                let t = out.s_t.point(c);
                l1 += (out.s_t.values()[c] - st.pdf(t)).abs() * out.s_t.step();
            }
            l1
        };
        let mut small = Vec::new();
        let mut large = Vec::new();
        for seed in 0..3 {
            small.push(l1_at(1000, seed));
            large.push(l1_at(4000, seed));
        }
        small.sort_by(f64::total_cmp);
        large.sort_by(f64::total_cmp);
        assert!(
            large[1] < small[1],
            "median L1 did not shrink: {large:?} vs {small:?}"
        );
    }
}
