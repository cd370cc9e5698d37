//! Bounds on the signal t-density when nothing is known about the
//! component shapes: every valid product-mixture decomposition of p(m,t)
//! lies in a two-parameter family around any initial decomposition, so
//! enumerating the feasible parameters and keeping the members whose
//! m-side signal is the more concentrated factor yields pointwise
//! envelopes for h1.

use crate::error::{Error, Result};
use crate::grid::{Grid2D, GridDensity, Support};
use crate::linalg::Matrix;
use crate::nmf::{nmf, normalize_to_mixture, MixtureParts, NmfOpts};
use crate::smooth::{kde2d, silverman, Sample};
use crate::stream::SeedStream;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Pointwise slack when testing a candidate component for nonnegativity;
/// absorbs quadrature noise in the tabulated shapes.
pub const FEAS_TOL: f64 = 1e-9;

/// Slack in the concentration comparison between the two m-factors.
pub const ENTROPY_TOL: f64 = 1e-9;

/// Signed parameter values at which the family is sampled. The same list
/// serves both parameters; pairs are restricted to opposite signs.
#[derive(Clone, Debug)]
pub struct ThetaGrid {
    pub values: Vec<f64>,
}

impl ThetaGrid {
    /// Log-spaced magnitudes in [lo, hi], `per_sign` points, both signs.
    pub fn log_spaced(lo: f64, hi: f64, per_sign: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || per_sign < 2 {
            return Err(Error::InvalidParameter(format!(
                "bad magnitude range [{lo}, {hi}] x {per_sign}"
            )));
        }
        let (llo, lhi) = (libm::log(lo), libm::log(hi));
        let mut values = Vec::with_capacity(2 * per_sign);
        for i in 0..per_sign {
            let f = i as f64 / (per_sign - 1) as f64;
            let mag = libm::exp(llo + f * (lhi - llo));
            values.push(-mag);
        }
        for i in 0..per_sign {
            let f = i as f64 / (per_sign - 1) as f64;
            values.push(libm::exp(llo + f * (lhi - llo)));
        }
        Ok(ThetaGrid { values })
    }

    /// The family is scale-sensitive near zero and unbounded above, so the
    /// default sweeps six decades around unity on both sides.
    pub fn standard() -> Self {
        ThetaGrid::log_spaced(1e-3, 1e3, 121).expect("fixed arguments")
    }
}

/// One member of the decomposition family.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub alpha1: f64,
    pub beta1: f64,
    pub z: f64,
    pub g1: GridDensity,
    pub g2: GridDensity,
    pub h1: GridDensity,
    pub h2: GridDensity,
}

impl Decomposition {
    /// All four shapes nonnegative up to the feasibility slack.
    pub fn feasible(&self) -> bool {
        let ok = |d: &GridDensity| d.values().iter().all(|&v| v >= -FEAS_TOL);
        ok(&self.g1) && ok(&self.g2) && ok(&self.h1) && ok(&self.h2)
    }
}

/// Marginals and the rank-one correction that generate the family.
struct FamilyCore {
    support_m: Support,
    support_t: Support,
    p_m: Vec<f64>,
    p_t: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

impl FamilyCore {
    fn new(init: &MixtureParts) -> Result<Self> {
        if !init.g1.same_grid(&init.g2) {
            return Err(Error::GridMismatch("m-side component grids"));
        }
        if !init.h1.same_grid(&init.h2) {
            return Err(Error::GridMismatch("t-side component grids"));
        }
        let z = init.z;
        if !(z > 0.0 && z < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "mixture fraction {z} outside (0, 1)"
            )));
        }
        let root = libm::sqrt(z * (1.0 - z));
        let nm = init.g1.len();
        let nt = init.h1.len();
        let mut p_m = vec![0.0; nm];
        let mut w1 = vec![0.0; nm];
        for i in 0..nm {
            let (a, b) = (init.g1.values()[i], init.g2.values()[i]);
            p_m[i] = z * a + (1.0 - z) * b;
            w1[i] = root * (a - b);
        }
        let mut p_t = vec![0.0; nt];
        let mut w2 = vec![0.0; nt];
        for j in 0..nt {
            let (a, b) = (init.h1.values()[j], init.h2.values()[j]);
            p_t[j] = z * a + (1.0 - z) * b;
            w2[j] = root * (a - b);
        }
        Ok(FamilyCore {
            support_m: init.g1.support(),
            support_t: init.h1.support(),
            p_m,
            p_t,
            w1,
            w2,
        })
    }

    fn shift(base: &[f64], dir: &[f64], c: f64) -> Vec<f64> {
        base.iter().zip(dir).map(|(&p, &w)| p + c * w).collect()
    }

    fn infimum(base: &[f64], dir: &[f64], c: f64) -> f64 {
        base.iter()
            .zip(dir)
            .map(|(&p, &w)| p + c * w)
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_pair(alpha1: f64, beta1: f64) -> Result<()> {
    if alpha1 == 0.0 || beta1 == 0.0 || !alpha1.is_finite() || !beta1.is_finite() {
        return Err(Error::InvalidParameter(
            "family parameters must be nonzero and finite".into(),
        ));
    }
    if alpha1.signum() == beta1.signum() {
        return Err(Error::InvalidParameter(format!(
            "parameters ({alpha1}, {beta1}) must have opposite signs"
        )));
    }
    Ok(())
}

/// Member of the family at (alpha1, beta1). The member need not be
/// feasible; it always reconstructs the joint exactly.
pub fn family_member(init: &MixtureParts, alpha1: f64, beta1: f64) -> Result<Decomposition> {
    check_pair(alpha1, beta1)?;
    let core = FamilyCore::new(init)?;
    let alpha2 = -1.0 / beta1;
    let beta2 = -1.0 / alpha1;
    let z = libm::fabs(beta1) / (libm::fabs(beta1) + libm::fabs(alpha1));
    let g1 = GridDensity::function(core.support_m, FamilyCore::shift(&core.p_m, &core.w1, alpha1))?;
    let g2 = GridDensity::function(core.support_m, FamilyCore::shift(&core.p_m, &core.w1, beta1))?;
    let h1 = GridDensity::function(core.support_t, FamilyCore::shift(&core.p_t, &core.w2, alpha2))?;
    let h2 = GridDensity::function(core.support_t, FamilyCore::shift(&core.p_t, &core.w2, beta2))?;
    let dec = Decomposition {
        alpha1,
        beta1,
        z,
        g1,
        g2,
        h1,
        h2,
    };
    // The mixture the member induces must match the one the inputs induce.
    let mut worst = 0.0f64;
    for i in 0..core.p_m.len() {
        for j in 0..core.p_t.len() {
            let want = core.p_m[i] * core.p_t[j] + core.w1[i] * core.w2[j];
            let got = dec.z * dec.g1.values()[i] * dec.h1.values()[j]
                + (1.0 - dec.z) * dec.g2.values()[i] * dec.h2.values()[j];
            worst = worst.max(libm::fabs(got - want));
        }
    }
    if worst >= 1e-6 {
        return Err(Error::Degenerate(format!(
            "family member failed to reconstruct the joint: residual {worst:.3e}"
        )));
    }
    Ok(dec)
}

/// Feasibility of the sampled parameter pairs. The four nonnegativity
/// constraints separate: g1 and h2 depend on alpha1 alone, g2 and h1 on
/// beta1 alone, so the region is a product set within each orientation.
#[derive(Clone, Debug)]
pub struct FeasibleRegion {
    /// Signed parameter values, shared by both axes.
    pub values: Vec<f64>,
    /// Per-value feasibility of the alpha1 constraints.
    pub alpha_ok: Vec<bool>,
    /// Per-value feasibility of the beta1 constraints.
    pub beta_ok: Vec<bool>,
    pub n_feasible: usize,
}

impl FeasibleRegion {
    /// Whether the pair (values[i], values[j]) is a valid decomposition.
    pub fn pair(&self, i: usize, j: usize) -> bool {
        self.values[i].signum() != self.values[j].signum() && self.alpha_ok[i] && self.beta_ok[j]
    }

    /// Row-major membership mask over values x values.
    pub fn mask(&self) -> Vec<bool> {
        let n = self.values.len();
        let mut m = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = self.pair(i, j);
            }
        }
        m
    }
}

pub fn feasible_region(init: &MixtureParts, theta: &ThetaGrid) -> Result<FeasibleRegion> {
    if theta.values.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "parameter grid must exclude zero".into(),
        ));
    }
    let core = FamilyCore::new(init)?;
    let n = theta.values.len();
    let mut alpha_ok = vec![false; n];
    let mut beta_ok = vec![false; n];
    for (idx, &v) in theta.values.iter().enumerate() {
        let g_side = FamilyCore::infimum(&core.p_m, &core.w1, v) >= -FEAS_TOL;
        // As alpha1 the value also fixes h2 through beta2 = -1/alpha1; as
        // beta1 it fixes h1 through alpha2 = -1/beta1. Both reciprocals
        // shift p_t along w2 by -1/v.
        let t_side = FamilyCore::infimum(&core.p_t, &core.w2, -1.0 / v) >= -FEAS_TOL;
        alpha_ok[idx] = g_side && t_side;
        beta_ok[idx] = g_side && t_side;
    }
    let mut n_feasible = 0;
    let region = FeasibleRegion {
        values: theta.values.clone(),
        alpha_ok,
        beta_ok,
        n_feasible: 0,
    };
    for i in 0..n {
        for j in 0..n {
            if region.pair(i, j) {
                n_feasible += 1;
            }
        }
    }
    Ok(FeasibleRegion {
        n_feasible,
        ..region
    })
}

/// Pointwise envelopes for the signal t-density over the oriented members.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub lower: GridDensity,
    pub upper: GridDensity,
    /// Parameter pairs that give valid decompositions.
    pub n_feasible: usize,
    /// Pairs that also satisfy the concentration orientation.
    pub n_oriented: usize,
    pub region: FeasibleRegion,
}

impl Envelope {
    pub fn max_width(&self) -> f64 {
        self.upper
            .values()
            .iter()
            .zip(self.lower.values())
            .map(|(&u, &l)| u - l)
            .fold(0.0, f64::max)
    }
}

/// Enumerate the family over the grid, keep members whose first m-factor
/// is at most as diffuse as the second, and trace the h1 envelope.
pub fn envelope(init: &MixtureParts, theta: &ThetaGrid) -> Result<Envelope> {
    let region = feasible_region(init, theta)?;
    let core = FamilyCore::new(init)?;
    let n = region.values.len();
    // Entropy of p_m + v w1 for every value that can serve either axis.
    let mut ent = vec![f64::NAN; n];
    for i in 0..n {
        if region.alpha_ok[i] || region.beta_ok[i] {
            let vals: Vec<f64> = FamilyCore::shift(&core.p_m, &core.w1, region.values[i])
                .iter()
                .map(|&v| v.max(0.0))
                .collect();
            ent[i] = GridDensity::function(core.support_m, vals)?.entropy()?;
        }
    }
    let mut n_oriented = 0;
    let mut beta_used = vec![false; n];
    for i in 0..n {
        if !region.alpha_ok[i] {
            continue;
        }
        for j in 0..n {
            if !region.pair(i, j) {
                continue;
            }
            if ent[i] <= ent[j] + ENTROPY_TOL {
                n_oriented += 1;
                beta_used[j] = true;
            }
        }
    }
    if n_oriented == 0 {
        return Err(Error::Degenerate(
            "no oriented member: refine the parameter grid, or the \
             concentration rule cannot order these components"
                .into(),
        ));
    }
    let nt = core.p_t.len();
    let mut lower = vec![f64::INFINITY; nt];
    let mut upper = vec![f64::NEG_INFINITY; nt];
    for j in 0..n {
        if !beta_used[j] {
            continue;
        }
        let alpha2 = -1.0 / region.values[j];
        for c in 0..nt {
            let v = core.p_t[c] + alpha2 * core.w2[c];
            lower[c] = lower[c].min(v);
            upper[c] = upper[c].max(v);
        }
    }
    Ok(Envelope {
        lower: GridDensity::function(core.support_t, lower)?,
        upper: GridDensity::function(core.support_t, upper)?,
        n_feasible: region.n_feasible,
        n_oriented,
        region,
    })
}

#[derive(Clone, Debug)]
pub struct BoundsOpts {
    pub support_m: Support,
    pub support_t: Support,
    /// Joint-estimate grid, also the family evaluation grid.
    pub grid_m: usize,
    pub grid_t: usize,
    /// Kernel bandwidths; Silverman when absent.
    pub bw_m: Option<f64>,
    pub bw_t: Option<f64>,
    pub nmf: NmfOpts,
    pub theta: ThetaGrid,
}

impl BoundsOpts {
    pub fn new(support_m: Support, support_t: Support) -> Self {
        BoundsOpts {
            support_m,
            support_t,
            grid_m: 64,
            grid_t: 64,
            bw_m: None,
            bw_t: None,
            nmf: NmfOpts::default(),
            theta: ThetaGrid::standard(),
        }
    }
}

/// Envelope from a tabulated joint: factorize, normalize into an initial
/// decomposition, then enumerate the family around it.
pub fn bounds_from_grid(
    p: &Grid2D,
    theta: &ThetaGrid,
    nmf_opts: &NmfOpts,
    stream: &SeedStream,
) -> Result<Envelope> {
    let mat = Matrix::from_fn(p.nm(), p.nt(), |i, j| p.value(i, j));
    let fac = nmf(&mat, 2, nmf_opts, stream)?;
    let parts = normalize_to_mixture(&fac, p.support_m(), p.support_t())?;
    if !(parts.z > 1e-3 && parts.z < 1.0 - 1e-3) {
        return Err(Error::Degenerate(format!(
            "second component carries no weight: z = {}",
            parts.z
        )));
    }
    // A near-product joint factorizes with two copies of one shape on at
    // least one axis; then the family's rank-one correction vanishes and
    // the envelope would be an uninformative point. The correction mass
    // is the product of the two absolute half-differences.
    let l1_m: f64 = parts
        .g1
        .values()
        .iter()
        .zip(parts.g2.values())
        .map(|(&a, &b)| libm::fabs(a - b))
        .sum::<f64>()
        * parts.g1.step();
    let l1_t: f64 = parts
        .h1
        .values()
        .iter()
        .zip(parts.h2.values())
        .map(|(&a, &b)| libm::fabs(a - b))
        .sum::<f64>()
        * parts.h1.step();
    if parts.z * (1.0 - parts.z) * l1_m * l1_t < 1e-3 {
        return Err(Error::Degenerate(format!(
            "factors indistinguishable: the joint is a single product \
             component (separation {:.3e})",
            parts.z * (1.0 - parts.z) * l1_m * l1_t
        )));
    }
    envelope(&parts, theta)
}

/// Envelope from raw events: kernel estimate of the joint, then the grid
/// pipeline above.
pub fn bounds_from_data(s: &Sample, opts: &BoundsOpts, stream: &SeedStream) -> Result<Envelope> {
    if s.m.len() < 200 {
        return Err(Error::InvalidParameter(format!(
            "need at least 200 events for a stable joint estimate, got {}",
            s.m.len()
        )));
    }
    let bw_m = match opts.bw_m {
        Some(b) => b,
        None => silverman(&s.m)?,
    };
    let bw_t = match opts.bw_t {
        Some(b) => b,
        None => silverman(&s.t)?,
    };
    let p = kde2d(
        &s.m,
        &s.t,
        bw_m,
        bw_t,
        opts.support_m,
        opts.support_t,
        opts.grid_m,
        opts.grid_t,
    )?;
    bounds_from_grid(&p, &opts.theta, &opts.nmf, stream)
}
