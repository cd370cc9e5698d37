//! Optimal mass-side weight for estimating a smooth functional of the
//! signal t-density in the two-component factorized model: the ratio
//! estimator's asymptotic variance, the closed-form weight minimizing it
//! under the two basis constraints, and an iterated pointwise density
//! estimate that alternates between the weight and the curve it targets.

use crate::error::{Error, Result};
use crate::grid::{GridDensity, EPS_FLOOR};
use crate::linalg::Matrix;
use crate::smooth::{KernelMatrix, Sample};
use crate::sweights::{make_weights, BasisSet, Normalizer};

use alloc::vec;
use alloc::vec::Vec;

const SQRT_2PI: f64 = 2.5066282746310002;

/// Grid shapes of a two-component model with one factorized density per
/// component on each axis.
#[derive(Clone, Debug)]
pub struct SbShapes {
    pub z: f64,
    pub g1: GridDensity,
    pub g2: GridDensity,
    pub h1: GridDensity,
    pub h2: GridDensity,
}

impl SbShapes {
    pub fn new(
        z: f64,
        g1: GridDensity,
        g2: GridDensity,
        h1: GridDensity,
        h2: GridDensity,
    ) -> Result<Self> {
        if !(z.is_finite() && z > 0.0 && z < 1.0) {
            return Err(Error::InvalidParameter(
                "signal fraction must lie strictly inside (0, 1)".into(),
            ));
        }
        if !g1.same_grid(&g2) {
            return Err(Error::GridMismatch("mass-side component grids"));
        }
        if !h1.same_grid(&h2) {
            return Err(Error::GridMismatch("t-side component grids"));
        }
        for d in [&g1, &g2, &h1, &h2] {
            if !d.is_density() {
                return Err(Error::InvalidParameter(
                    "component shapes must be densities".into(),
                ));
            }
        }
        Ok(SbShapes { z, g1, g2, h1, h2 })
    }

    /// Mass-side marginal z g1 + (1-z) g2.
    pub fn p_m(&self) -> GridDensity {
        self.g1
            .lin_comb(self.z, &self.g2, 1.0 - self.z)
            .expect("component grids already checked")
    }
}

/// Target functional, its conditional moments given the mass variable,
/// and everything fixed by the model needed to score or build weights.
#[derive(Clone, Debug)]
pub struct OptWeightProblem {
    pub shapes: SbShapes,
    /// Target function tabulated on the t grid (not a density).
    pub f: GridDensity,
    pub p_m: GridDensity,
    /// Conditional mean of f(T) given m, zero where the marginal vanishes.
    pub ell1: GridDensity,
    /// Conditional mean of f(T)^2 given m, zero where the marginal vanishes.
    pub ell2: GridDensity,
    /// Signal-component moment of f, the estimand.
    pub psi: f64,
    pub v: [f64; 2],
    mf: [f64; 2],
    ff: [f64; 2],
}

/// Solved stationarity system: constraint Gram, multipliers, weight.
#[derive(Clone, Debug)]
pub struct OptimalWeight {
    pub q: Matrix,
    pub alpha: [f64; 2],
    pub w: GridDensity,
}

impl OptWeightProblem {
    pub fn new(shapes: SbShapes, f: GridDensity) -> Result<Self> {
        if !f.same_grid(&shapes.h1) {
            return Err(Error::GridMismatch("target function grid"));
        }
        if f.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "target function must be finite".into(),
            ));
        }
        let ht = f.step();
        let mut mf = [0.0; 2];
        let mut ff = [0.0; 2];
        for (k, h) in [&shapes.h1, &shapes.h2].iter().enumerate() {
            for c in 0..f.len() {
                let fv = f.values()[c];
                mf[k] += fv * h.values()[c];
                ff[k] += fv * fv * h.values()[c];
            }
            mf[k] *= ht;
            ff[k] *= ht;
        }
        let p_m = shapes.p_m();
        let gm = shapes.g1.len();
        let mut e1 = vec![0.0; gm];
        let mut e2 = vec![0.0; gm];
        for c in 0..gm {
            let p = p_m.values()[c];
            if p < EPS_FLOOR {
                continue;
            }
            let s = shapes.z * shapes.g1.values()[c];
            let b = (1.0 - shapes.z) * shapes.g2.values()[c];
            e1[c] = (s * mf[0] + b * mf[1]) / p;
            e2[c] = (s * ff[0] + b * ff[1]) / p;
        }
        let support_m = shapes.g1.support();
        let psi = mf[0];
        let v = [1.0 / shapes.z, -psi / shapes.z];
        Ok(OptWeightProblem {
            f,
            p_m,
            ell1: GridDensity::function(support_m, e1)?,
            ell2: GridDensity::function(support_m, e2)?,
            psi,
            v,
            mf,
            ff,
            shapes,
        })
    }

    /// Second-moment field of (f(T), 1) given m, scaled by the marginal.
    pub fn lambda_at(&self, c: usize) -> [[f64; 2]; 2] {
        let p = self.p_m.values()[c];
        let l1 = p * self.ell1.values()[c];
        [[p * self.ell2.values()[c], l1], [l1, p]]
    }

    /// Quadratic form v' Lambda(m) v at every cell.
    pub fn v_lambda_v(&self) -> Vec<f64> {
        let z2 = self.shapes.z * self.shapes.z;
        (0..self.p_m.len())
            .map(|c| {
                let l1 = self.ell1.values()[c];
                let l2 = self.ell2.values()[c];
                self.p_m.values()[c] * (l2 - 2.0 * self.psi * l1 + self.psi * self.psi) / z2
            })
            .collect()
    }

    /// Asymptotic variance of sqrt(n) times the ratio estimator built
    /// from w. Computed as the delta-method variance of the ratio of
    /// sample means, which reduces to v' Sigma v with v = (1/z, -psi/z)
    /// whenever w integrates to one against g1 and to zero against g2,
    /// and is invariant under positive rescaling of w in general.
    pub fn asymptotic_variance(&self, w: &GridDensity) -> Result<f64> {
        if !w.same_grid(&self.p_m) {
            return Err(Error::GridMismatch("weight grid"));
        }
        let hm = w.step();
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        for (k, g) in [&self.shapes.g1, &self.shapes.g2].iter().enumerate() {
            for c in 0..w.len() {
                let wv = w.values()[c];
                a[k] += wv * g.values()[c];
                b[k] += wv * wv * g.values()[c];
            }
            a[k] *= hm;
            b[k] *= hm;
        }
        let z = self.shapes.z;
        let mu_w = z * a[0] + (1.0 - z) * a[1];
        if libm::fabs(mu_w) < EPS_FLOOR {
            return Err(Error::Degenerate(
                "weight has no mass under the model".into(),
            ));
        }
        let mu_a = z * a[0] * self.mf[0] + (1.0 - z) * a[1] * self.mf[1];
        let e_w2 = z * b[0] + (1.0 - z) * b[1];
        let e_aw = z * b[0] * self.mf[0] + (1.0 - z) * b[1] * self.mf[1];
        let e_a2 = z * b[0] * self.ff[0] + (1.0 - z) * b[1] * self.ff[1];
        let r = mu_a / mu_w;
        let var_a = e_a2 - mu_a * mu_a;
        let cov = e_aw - mu_a * mu_w;
        let var_w = e_w2 - mu_w * mu_w;
        Ok((var_a - 2.0 * r * cov + r * r * var_w) / (mu_w * mu_w))
    }

    /// Weight minimizing the asymptotic variance subject to unit overlap
    /// with g1 and zero overlap with g2. Cells where the quadratic form
    /// drops below the floor are excluded from the Gram integrals and get
    /// zero weight, mirroring the normalizer floor in the weight builder.
    pub fn solve(&self) -> Result<OptimalWeight> {
        let vlv = self.v_lambda_v();
        let hm = self.p_m.step();
        let gm = self.p_m.len();
        let mut q = Matrix::zeros(2, 2);
        let mut used = 0usize;
        for c in 0..gm {
            if vlv[c] < EPS_FLOOR {
                continue;
            }
            used += 1;
            let g = [self.shapes.g1.values()[c], self.shapes.g2.values()[c]];
            for i in 0..2 {
                for j in 0..2 {
                    q[(i, j)] += g[i] * g[j] / vlv[c];
                }
            }
        }
        if used == 0 {
            return Err(Error::Degenerate(
                "target function is constant given the mass variable".into(),
            ));
        }
        for i in 0..2 {
            for j in 0..2 {
                q[(i, j)] *= hm;
            }
        }
        let alpha = q.solve(&[1.0, 0.0])?;
        let mut values = vec![0.0; gm];
        for c in 0..gm {
            if vlv[c] < EPS_FLOOR {
                continue;
            }
            values[c] = (alpha[0] * self.shapes.g1.values()[c]
                + alpha[1] * self.shapes.g2.values()[c])
                / vlv[c];
        }
        Ok(OptimalWeight {
            q,
            alpha: [alpha[0], alpha[1]],
            w: GridDensity::function(self.p_m.support(), values)?,
        })
    }

    /// Plain two-component signal weight normalized by the model marginal.
    pub fn splot_weight(&self) -> Result<GridDensity> {
        let basis = BasisSet::new(vec![self.shapes.g1.clone(), self.shapes.g2.clone()], 1, 1)?;
        let ws = make_weights(&basis, &Normalizer::Density(self.p_m.clone()))?;
        Ok(ws.weight(0).clone())
    }
}

/// Pointwise signal-density estimate with the weight trace behind it.
#[derive(Clone, Debug)]
pub struct PointwiseFit {
    pub estimate: f64,
    /// Weight used at each stage, starting with the plain signal weight.
    pub trace: Vec<GridDensity>,
    /// Whether the divergence guard discarded the iterated weights.
    pub reverted: bool,
}

fn gauss(x: f64, nu: f64) -> f64 {
    libm::exp(-0.5 * (x / nu) * (x / nu)) / (nu * SQRT_2PI)
}

fn ratio_estimate(s: &Sample, w: &GridDensity, t0: f64, nu: f64) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..s.m.len() {
        let wv = w.eval(s.m[i]);
        num += gauss(s.t[i] - t0, nu) * wv;
        den += wv;
    }
    if libm::fabs(den) < EPS_FLOOR {
        return Err(Error::DegenerateWeights);
    }
    Ok(num / den)
}

/// Kernel estimate of the signal t-density at one point, alternating a
/// fixed number of times between re-estimating the curve with the current
/// weight and rebuilding the variance-optimal weight for the smoothed
/// evaluation functional, with half damping on the curve update. Estimates
/// blowing past ten times the initial curve's range revert to the plain
/// signal weight.
pub fn iterate_h1_pointwise(
    s: &Sample,
    shapes: &SbShapes,
    t0: f64,
    nu: f64,
    iters: usize,
) -> Result<PointwiseFit> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::InvalidParameter("bandwidth must be positive".into()));
    }
    if s.m.is_empty() {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    let support_t = shapes.h1.support();
    if s.t.iter().any(|&t| !support_t.contains(t)) {
        return Err(Error::InvalidParameter(
            "t observations outside the model support".into(),
        ));
    }
    let f0 = GridDensity::tabulate(support_t, shapes.h1.len(), |t| gauss(t - t0, nu))?;
    let problem = OptWeightProblem::new(shapes.clone(), f0.clone())?;
    let w0 = problem.splot_weight()?;
    let mut estimate = ratio_estimate(s, &w0, t0, nu)?;
    let mut trace = vec![w0.clone()];
    if iters == 0 {
        return Ok(PointwiseFit {
            estimate,
            trace,
            reverted: false,
        });
    }
    let kernels = KernelMatrix::new(&s.t, nu, support_t, shapes.h1.len())?;
    let w_at = |w: &GridDensity| -> Vec<f64> { s.m.iter().map(|&m| w.eval(m)).collect() };
    let curve0 = kernels
        .weighted_density(&w_at(&w0))?
        .clipped()
        .normalized()?;
    let mut range = 0.0;
    for &v in curve0.values() {
        if v > range {
            range = v;
        }
    }
    let mut h1_cur = curve0;
    for _ in 0..iters {
        let shapes_cur = SbShapes::new(
            shapes.z,
            shapes.g1.clone(),
            shapes.g2.clone(),
            h1_cur.clone(),
            shapes.h2.clone(),
        )?;
        let w_new = OptWeightProblem::new(shapes_cur, f0.clone())?.solve()?.w;
        let est = ratio_estimate(s, &w_new, t0, nu)?;
        if libm::fabs(est) > 10.0 * range {
            return Ok(PointwiseFit {
                estimate: ratio_estimate(s, &w0, t0, nu)?,
                trace,
                reverted: true,
            });
        }
        let kde = kernels
            .weighted_density(&w_at(&w_new))?
            .clipped()
            .normalized()?;
        h1_cur = h1_cur.lin_comb(0.5, &kde, 0.5)?.normalized()?;
        estimate = est;
        trace.push(w_new);
    }
    Ok(PointwiseFit {
        estimate,
        trace,
        reverted: false,
    })
}
