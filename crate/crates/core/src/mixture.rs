//! Two-coordinate mixture models p(m, t) = sum_k z_k g_k(m) h_k(t),
//! optionally with a Gaussian copula coupling (M, T) inside each component.
//!
//! The first `s` components are the signal, the remaining `b` the control
//! (background) components. Sampling is inverse-CDF throughout.

use crate::copulamix::gaussian_copula_density;
use crate::dists::ParamDensity;
use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridDensity, Support};
use crate::smooth::Sample;
use crate::special::{norm_cdf, probit};
use crate::stream::SeedStream;
use alloc::format;
use alloc::vec::Vec;

#[derive(Clone, Debug)]
pub struct MixtureModel {
    pub z: Vec<f64>,
    pub g: Vec<ParamDensity>,
    pub h: Vec<ParamDensity>,
    pub s: usize,
    pub b: usize,
    /// Per-component copula correlation; None means conditional independence.
    pub copula: Option<Vec<f64>>,
}

impl MixtureModel {
    pub fn new(
        z: Vec<f64>,
        g: Vec<ParamDensity>,
        h: Vec<ParamDensity>,
        s: usize,
        b: usize,
    ) -> Result<Self> {
        let k = s + b;
        if k == 0 || z.len() != k || g.len() != k || h.len() != k {
            return Err(Error::InvalidParameter(format!(
                "component counts disagree: s={s}, b={b}, |z|={}, |g|={}, |h|={}",
                z.len(),
                g.len(),
                h.len()
            )));
        }
        if z.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "mixture weights must be positive".into(),
            ));
        }
        let total: f64 = z.iter().sum();
        if libm::fabs(total - 1.0) > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        for d in g.iter().skip(1) {
            if !d.support().same_as(&g[0].support()) {
                return Err(Error::GridMismatch("m-side component supports"));
            }
        }
        for d in h.iter().skip(1) {
            if !d.support().same_as(&h[0].support()) {
                return Err(Error::GridMismatch("t-side component supports"));
            }
        }
        Ok(MixtureModel {
            z,
            g,
            h,
            s,
            b,
            copula: None,
        })
    }

    pub fn with_copula(mut self, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != self.k() {
            return Err(Error::InvalidParameter(
                "one correlation per component required".into(),
            ));
        }
        if rho.iter().any(|&r| !(r > -1.0 && r < 1.0)) {
            return Err(Error::InvalidParameter(
                "copula correlations must lie in (-1, 1)".into(),
            ));
        }
        self.copula = Some(rho);
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.s + self.b
    }

    pub fn support_m(&self) -> Support {
        self.g[0].support()
    }

    pub fn support_t(&self) -> Support {
        self.h[0].support()
    }

    /// Joint density at (m, t).
    pub fn joint(&self, m: f64, t: f64) -> f64 {
        let mut p = 0.0;
        for k in 0..self.k() {
            let mut term = self.z[k] * self.g[k].pdf(m) * self.h[k].pdf(t);
            if let Some(rho) = &self.copula {
                if term > 0.0 && rho[k] != 0.0 {
                    let u = self.g[k].cdf(m);
                    let v = self.h[k].cdf(t);
                    term *= gaussian_copula_density(u, v, rho[k]).unwrap_or(0.0);
                }
            }
            p += term;
        }
        p
    }

    pub fn marginal_m(&self, m: f64) -> f64 {
        (0..self.k()).map(|k| self.z[k] * self.g[k].pdf(m)).sum()
    }

    pub fn marginal_t(&self, t: f64) -> f64 {
        (0..self.k()).map(|k| self.z[k] * self.h[k].pdf(t)).sum()
    }

    pub fn marginal_m_grid(&self, g: usize) -> Result<GridDensity> {
        GridDensity::tabulate(self.support_m(), g, |m| self.marginal_m(m))?.normalized()
    }

    pub fn marginal_t_grid(&self, g: usize) -> Result<GridDensity> {
        GridDensity::tabulate(self.support_t(), g, |t| self.marginal_t(t))?.normalized()
    }

    pub fn joint_grid(&self, nm: usize, nt: usize) -> Grid2D {
        Grid2D::from_fn(self.support_m(), self.support_t(), nm, nt, |m, t| {
            self.joint(m, t)
        })
    }

    /// Tabulated m-side component densities on a shared grid.
    pub fn tabulate_g(&self, g: usize) -> Result<Vec<GridDensity>> {
        self.g.iter().map(|d| d.tabulate(g)).collect()
    }

    pub fn tabulate_h(&self, g: usize) -> Result<Vec<GridDensity>> {
        self.h.iter().map(|d| d.tabulate(g)).collect()
    }

    fn draw_pair(&self, k: usize, stream: &mut SeedStream) -> (f64, f64) {
        let u1 = stream.uniform();
        let u2 = stream.uniform();
        let rho = self.copula.as_ref().map_or(0.0, |r| r[k]);
        if rho == 0.0 {
            (
                self.g[k].quantile(u1).unwrap(),
                self.h[k].quantile(u2).unwrap(),
            )
        } else {
            // Correlated Gaussian pair pushed through the component quantiles.
            let x = probit(u1).unwrap();
            let y = rho * x + libm::sqrt(1.0 - rho * rho) * probit(u2).unwrap();
            let v = norm_cdf(y).clamp(1e-300, 1.0);
            (
                self.g[k].quantile(u1).unwrap(),
                self.h[k].quantile(v).unwrap(),
            )
        }
    }

    /// Draw n points, component picked by the mixture weights each time.
    pub fn sample(&self, n: usize, stream: &mut SeedStream) -> Result<Sample> {
        if n == 0 {
            return Err(Error::InvalidParameter("empty sample requested".into()));
        }
        let mut cum = Vec::with_capacity(self.k());
        let mut acc = 0.0;
        for &zk in &self.z {
            acc += zk;
            cum.push(acc);
        }
        let mut m = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        let mut label = Vec::with_capacity(n);
        for _ in 0..n {
            let u = stream.uniform();
            let k = cum.iter().position(|&c| u <= c).unwrap_or(self.k() - 1);
            let (mi, ti) = self.draw_pair(k, stream);
            m.push(mi);
            t.push(ti);
            label.push(k + 1);
        }
        Sample::new(m, t)?.with_labels(label)
    }

    /// Draw a fixed number of points from each component, in component order.
    pub fn sample_counts(&self, counts: &[usize], stream: &mut SeedStream) -> Result<Sample> {
        if counts.len() != self.k() {
            return Err(Error::InvalidParameter(
                "one count per component required".into(),
            ));
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidParameter("empty sample requested".into()));
        }
        let mut m = Vec::with_capacity(total);
        let mut t = Vec::with_capacity(total);
        let mut label = Vec::with_capacity(total);
        for (k, &nk) in counts.iter().enumerate() {
            for _ in 0..nk {
                let (mi, ti) = self.draw_pair(k, stream);
                m.push(mi);
                t.push(ti);
                label.push(k + 1);
            }
        }
        Sample::new(m, t)?.with_labels(label)
    }
}
