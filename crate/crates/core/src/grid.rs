//! Tabulated functions on uniform grids.
//!
//! Everything downstream trades in `GridDensity`: a function sampled at the
//! midpoints of G equal cells over a closed interval. Quadrature is the
//! composite rule h * sum(values), which is the trapezoid rule on midpoint
//! samples with the two boundary half-cells closed off by rectangles; it is
//! exact for constants and O(h^2) otherwise.

use crate::error::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Cells in the default tabulation grid.
pub const DEFAULT_GRID: usize = 2048;

/// Cells where a weighting density falls below this floor are excluded from
/// weighted inner products rather than divided by.
pub const EPS_FLOOR: f64 = 1e-12;

/// Closed interval a tabulated function lives on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
}

impl Support {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "support [{lo}, {hi}] is not a finite nonempty interval"
            )));
        }
        Ok(Support { lo, hi })
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Supports match when both endpoints agree to within a relative 1e-9.
    pub fn same_as(&self, other: &Support) -> bool {
        let scale = self.len().max(other.len());
        libm::fabs(self.lo - other.lo) <= 1e-9 * scale
            && libm::fabs(self.hi - other.hi) <= 1e-9 * scale
    }
}

/// A function tabulated at cell midpoints of a uniform grid.
///
/// When `density` is true the values are a normalized probability density
/// (nonnegative, unit mass under the module quadrature). Weight functions and
/// other signed curves reuse the type with the flag off.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    support: Support,
    values: Vec<f64>,
    density: bool,
}

impl GridDensity {
    /// Construct a normalized density. Values must be nonnegative (dips to
    /// -1e-9 are treated as roundoff and clamped) with unit integral to 1e-6.
    pub fn density(support: Support, mut values: Vec<f64>) -> Result<Self> {
        check_values(&values)?;
        for v in values.iter_mut() {
            if *v < 0.0 {
                if *v < -1e-9 {
                    return Err(Error::Domain(format!(
                        "density value {v} is negative beyond roundoff"
                    )));
                }
                *v = 0.0;
            }
        }
        let g = GridDensity {
            support,
            values,
            density: true,
        };
        let mass = g.integrate();
        if libm::fabs(mass - 1.0) > 1e-6 {
            return Err(Error::Domain(format!(
                "density integrates to {mass}, not 1"
            )));
        }
        Ok(g)
    }

    /// Construct an arbitrary (possibly signed) tabulated function.
    pub fn function(support: Support, values: Vec<f64>) -> Result<Self> {
        check_values(&values)?;
        Ok(GridDensity {
            support,
            values,
            density: false,
        })
    }

    /// Tabulate a closure at the cell midpoints.
    pub fn tabulate<F: FnMut(f64) -> f64>(support: Support, g: usize, mut f: F) -> Result<Self> {
        let h = support.len() / g as f64;
        let values: Vec<f64> = (0..g)
            .map(|j| f(support.lo + (j as f64 + 0.5) * h))
            .collect();
        Self::function(support, values)
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_density(&self) -> bool {
        self.density
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.density = false;
        &mut self.values
    }

    /// Cell width.
    pub fn step(&self) -> f64 {
        self.support.len() / self.values.len() as f64
    }

    /// Midpoint of cell j.
    pub fn point(&self, j: usize) -> f64 {
        self.support.lo + (j as f64 + 0.5) * self.step()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.point(j)).collect()
    }

    pub fn same_grid(&self, other: &GridDensity) -> bool {
        self.len() == other.len() && self.support.same_as(&other.support)
    }

    /// h * sum(values): trapezoid rule on the midpoint grid with the
    /// boundary half-cells closed by rectangles.
    pub fn integrate(&self) -> f64 {
        self.step() * self.values.iter().sum::<f64>()
    }

    /// Weighted inner product integral of self * other / weight. Cells where
    /// the weight falls below `EPS_FLOOR` are excluded from the sum.
    pub fn inner(&self, other: &GridDensity, weight: Option<&GridDensity>) -> Result<f64> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch("inner product operands"));
        }
        let h = self.step();
        match weight {
            None => Ok(h * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()),
            Some(w) => {
                if !self.same_grid(w) {
                    return Err(Error::GridMismatch("inner product weight"));
                }
                let mut s = 0.0;
                for j in 0..self.len() {
                    if w.values[j] >= EPS_FLOOR {
                        s += self.values[j] * other.values[j] / w.values[j];
                    }
                }
                Ok(h * s)
            }
        }
    }

    /// Differential entropy -integral of g log g. Values below -1e-9 are a
    /// domain error; smaller dips count as zero cells.
    pub fn entropy(&self) -> Result<f64> {
        let mut s = 0.0;
        for &v in &self.values {
            if v < -1e-9 {
                return Err(Error::Domain(format!(
                    "entropy of a function with negative value {v}"
                )));
            }
            if v > 0.0 {
                s += v * libm::log(v);
            }
        }
        Ok(-self.step() * s)
    }

    /// Piecewise-linear interpolation between midpoints; constant over the
    /// two boundary half-cells, zero outside the support.
    pub fn eval(&self, x: f64) -> f64 {
        if !self.support.contains(x) {
            return 0.0;
        }
        let g = self.values.len();
        let u = (x - self.support.lo) / self.step() - 0.5;
        if u <= 0.0 {
            return self.values[0];
        }
        if u >= (g - 1) as f64 {
            return self.values[g - 1];
        }
        let j = u as usize;
        let frac = u - j as f64;
        self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
    }

    /// Value of the cell containing x (piecewise-constant view).
    pub fn eval_cell(&self, x: f64) -> f64 {
        if !self.support.contains(x) {
            return 0.0;
        }
        let g = self.values.len();
        let j = ((x - self.support.lo) / self.step()) as usize;
        self.values[j.min(g - 1)]
    }

    /// Rescale to unit mass. Errors when the current mass is not positive.
    pub fn normalized(&self) -> Result<GridDensity> {
        let mass = self.integrate();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::Degenerate(format!(
                "cannot normalize a function with mass {mass}"
            )));
        }
        let values: Vec<f64> = self.values.iter().map(|v| (v / mass).max(0.0)).collect();
        GridDensity::density(self.support, values)
    }

    /// Clamp negative cells to zero; clears the density flag.
    pub fn clipped(&self) -> GridDensity {
        GridDensity {
            support: self.support,
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
            density: false,
        }
    }

    /// a * self + b * other on a shared grid.
    pub fn lin_comb(&self, a: f64, other: &GridDensity, b: f64) -> Result<GridDensity> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch("linear combination operands"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        GridDensity::function(self.support, values)
    }

    /// Cumulative masses at the G+1 cell edges.
    pub fn cumulative(&self) -> Vec<f64> {
        let h = self.step();
        let mut cum = vec![0.0; self.values.len() + 1];
        for (j, &v) in self.values.iter().enumerate() {
            cum[j + 1] = cum[j] + h * v;
        }
        cum
    }

    /// CDF value at x (normalized by total mass), treating the density as
    /// constant within each cell. Requires nonnegative values.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.support.lo {
            return 0.0;
        }
        if x >= self.support.hi {
            return 1.0;
        }
        let h = self.step();
        let mass: f64 = self.values.iter().sum::<f64>() * h;
        if mass <= 0.0 {
            return 0.0;
        }
        let u = (x - self.support.lo) / h;
        let j = (u as usize).min(self.values.len() - 1);
        let partial: f64 = self.values[..j].iter().sum::<f64>() * h
            + self.values[j] * (x - (self.support.lo + j as f64 * h));
        (partial / mass).clamp(0.0, 1.0)
    }

    /// Quantile of the normalized density by inverting the piecewise-linear
    /// CDF. Errors on negative cells or zero total mass.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile level {u} outside [0,1]")));
        }
        if self.values.iter().any(|&v| v < 0.0) {
            return Err(Error::Domain(
                "quantile of a function with negative values".into(),
            ));
        }
        let cum = self.cumulative();
        let mass = cum[self.values.len()];
        if !(mass > 0.0) {
            return Err(Error::Degenerate("quantile of zero-mass function".into()));
        }
        let target = u * mass;
        // Binary search for the cell whose edge-cumulative brackets target.
        let mut lo = 0usize;
        let mut hi = self.values.len();
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if cum[mid] <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h = self.step();
        let edge = self.support.lo + lo as f64 * h;
        let v = self.values[lo];
        if v <= 0.0 {
            return Ok(edge);
        }
        Ok((edge + (target - cum[lo]) / v).min(self.support.hi))
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("empty value vector".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "non-finite value in tabulation".into(),
        ));
    }
    Ok(())
}

/// A function tabulated on the product of two midpoint grids (m rows, t cols).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    support_m: Support,
    support_t: Support,
    nm: usize,
    nt: usize,
    values: Vec<f64>,
}

impl Grid2D {
    pub fn zeros(support_m: Support, support_t: Support, nm: usize, nt: usize) -> Self {
        Grid2D {
            support_m,
            support_t,
            nm,
            nt,
            values: vec![0.0; nm * nt],
        }
    }

    pub fn from_fn<F: FnMut(f64, f64) -> f64>(
        support_m: Support,
        support_t: Support,
        nm: usize,
        nt: usize,
        mut f: F,
    ) -> Self {
        let hm = support_m.len() / nm as f64;
        let ht = support_t.len() / nt as f64;
        let mut g = Grid2D::zeros(support_m, support_t, nm, nt);
        for i in 0..nm {
            let m = support_m.lo + (i as f64 + 0.5) * hm;
            for j in 0..nt {
                let t = support_t.lo + (j as f64 + 0.5) * ht;
                g.values[i * nt + j] = f(m, t);
            }
        }
        g
    }

    pub fn support_m(&self) -> Support {
        self.support_m
    }

    pub fn support_t(&self) -> Support {
        self.support_t
    }

    pub fn nm(&self) -> usize {
        self.nm
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn step_m(&self) -> f64 {
        self.support_m.len() / self.nm as f64
    }

    pub fn step_t(&self) -> f64 {
        self.support_t.len() / self.nt as f64
    }

    pub fn point_m(&self, i: usize) -> f64 {
        self.support_m.lo + (i as f64 + 0.5) * self.step_m()
    }

    pub fn point_t(&self, j: usize) -> f64 {
        self.support_t.lo + (j as f64 + 0.5) * self.step_t()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.nt + j]
    }

    pub fn value_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.values[i * self.nt + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.nt..(i + 1) * self.nt]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.nt..(i + 1) * self.nt]
    }

    /// Row i as a tabulated function of t.
    pub fn row_fn(&self, i: usize) -> GridDensity {
        GridDensity {
            support: self.support_t,
            values: self.row(i).to_vec(),
            density: false,
        }
    }

    pub fn integrate(&self) -> f64 {
        self.step_m() * self.step_t() * self.values.iter().sum::<f64>()
    }

    /// Integrate out t, leaving a function of m.
    pub fn marginal_m(&self) -> GridDensity {
        let ht = self.step_t();
        let values = (0..self.nm)
            .map(|i| ht * self.row(i).iter().sum::<f64>())
            .collect();
        GridDensity {
            support: self.support_m,
            values,
            density: false,
        }
    }

    /// Integrate out m, leaving a function of t.
    pub fn marginal_t(&self) -> GridDensity {
        let hm = self.step_m();
        let mut values = vec![0.0; self.nt];
        for i in 0..self.nm {
            for (j, v) in self.row(i).iter().enumerate() {
                values[j] += v;
            }
        }
        for v in values.iter_mut() {
            *v *= hm;
        }
        GridDensity {
            support: self.support_t,
            values,
            density: false,
        }
    }

    /// Bilinear interpolation between cell midpoints, constant over the
    /// boundary half-cells, zero outside the support rectangle.
    pub fn eval(&self, m: f64, t: f64) -> f64 {
        if !self.support_m.contains(m) || !self.support_t.contains(t) {
            return 0.0;
        }
        let locate = |x: f64, lo: f64, h: f64, n: usize| -> (usize, f64) {
            let u = (x - lo) / h - 0.5;
            if u <= 0.0 {
                (0, 0.0)
            } else if u >= (n - 1) as f64 {
                (n - 2, 1.0)
            } else {
                let j = u as usize;
                (j, u - j as f64)
            }
        };
        if self.nm == 1 || self.nt == 1 {
            // Degenerate grids fall back to nearest-cell lookup.
            let i = (((m - self.support_m.lo) / self.step_m()) as usize).min(self.nm - 1);
            let j = (((t - self.support_t.lo) / self.step_t()) as usize).min(self.nt - 1);
            return self.value(i, j);
        }
        let (i, fm) = locate(m, self.support_m.lo, self.step_m(), self.nm);
        let (j, ft) = locate(t, self.support_t.lo, self.step_t(), self.nt);
        let v00 = self.value(i, j);
        let v01 = self.value(i, j + 1);
        let v10 = self.value(i + 1, j);
        let v11 = self.value(i + 1, j + 1);
        v00 * (1.0 - fm) * (1.0 - ft)
            + v01 * (1.0 - fm) * ft
            + v10 * fm * (1.0 - ft)
            + v11 * fm * ft
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Support {
        Support::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn integrate_uniform_is_exact() {
        let g = GridDensity::tabulate(unit(), 2048, |_| 1.0).unwrap();
        assert!((g.integrate() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integrate_linear_function() {
        // integral of 2x over [0,1] = 1; midpoint rule is exact for linears.
        let g = GridDensity::tabulate(unit(), 64, |x| 2.0 * x).unwrap();
        assert!((g.integrate() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn entropy_of_uniform_interval() {
        let sup = Support::new(0.0, 2.0).unwrap();
        let g = GridDensity::tabulate(sup, 256, |_| 0.5).unwrap();
        assert!((g.entropy().unwrap() - (2.0_f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_negative_values() {
        let g = GridDensity::function(unit(), vec![1.0, -0.5, 1.0]).unwrap();
        assert!(matches!(g.entropy(), Err(Error::Domain(_))));
    }

    #[test]
    fn inner_excludes_floored_cells() {
        let f = GridDensity::function(unit(), vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let w = GridDensity::function(unit(), vec![0.5, 0.0, 1e-13, 2.0]).unwrap();
        // Only cells 0 and 3 participate: 0.25 * (1/0.5 + 1/2.0)
        let got = f.inner(&f, Some(&w)).unwrap();
        assert!((got - 0.25 * (2.0 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn inner_checks_grids() {
        let f = GridDensity::tabulate(unit(), 16, |_| 1.0).unwrap();
        let g = GridDensity::tabulate(unit(), 32, |_| 1.0).unwrap();
        assert!(matches!(f.inner(&g, None), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn eval_reproduces_linear_functions() {
        let g = GridDensity::tabulate(unit(), 128, |x| 3.0 * x - 1.0).unwrap();
        for &x in &[0.1, 0.25, 0.5, 0.83] {
            assert!((g.eval(x) - (3.0 * x - 1.0)).abs() < 1e-12);
        }
        assert_eq!(g.eval(-0.2), 0.0);
        assert_eq!(g.eval(1.2), 0.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let g = GridDensity::tabulate(unit(), 512, |x| 2.0 * x)
            .unwrap()
            .normalized()
            .unwrap();
        for &u in &[0.0, 0.1, 0.5, 0.9, 1.0] {
            let x = g.quantile(u).unwrap();
            assert!((g.cdf(x) - u).abs() < 1e-9, "u = {u}, x = {x}");
        }
        // Known closed form: F(x) = x^2, so Q(u) = sqrt(u).
        assert!((g.quantile(0.25).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn density_constructor_validates_mass() {
        let bad = GridDensity::density(unit(), vec![1.0, 3.0]);
        assert!(bad.is_err());
        let ok = GridDensity::density(unit(), vec![1.0, 1.0]).unwrap();
        assert!(ok.is_density());
    }

    #[test]
    fn grid2d_marginals_and_eval() {
        let sm = Support::new(0.0, 1.0).unwrap();
        let st = Support::new(0.0, 2.0).unwrap();
        // Separable product: f(m,t) = (2m) * (t/2)
        let g = Grid2D::from_fn(sm, st, 64, 64, |m, t| 2.0 * m * t / 2.0);
        assert!((g.integrate() - 1.0).abs() < 1e-12);
        let mm = g.marginal_m();
        for (j, &v) in mm.values().iter().enumerate() {
            assert!((v - 2.0 * mm.point(j)).abs() < 1e-12);
        }
        let x = g.eval(0.3, 1.1);
        assert!((x - 2.0 * 0.3 * 0.55).abs() < 1e-12);
    }
}
