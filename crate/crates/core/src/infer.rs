//! Statistical validation for the weighted fits: a slice-based
//! goodness-of-fit test comparing per-slice mixture fits against kernel
//! estimates, with a semiparametric bootstrap null, and a sup-norm
//! bootstrap confidence band for the weighted signal density estimate.

use crate::error::{Error, Result};
use crate::grid::{GridDensity, Support, DEFAULT_GRID, EPS_FLOOR};
use crate::smooth::{silverman, KernelMatrix, Sample};
use crate::stream::SeedStream;
use crate::sweights::{make_weights, BasisSet, Normalizer, WeightEval, WeightSet};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Slices whose total kernel weight falls below this times n are skipped.
const SLICE_FLOOR: f64 = 1e-8;
/// Fixed-step EM iteration count for the per-slice proportion fits.
const EM_STEPS: usize = 50;
/// Kernel evaluations stop beyond this many bandwidths, matching the
/// per-point kernel rows used elsewhere.
const KERNEL_RADIUS: f64 = 8.5;

/// Slice goodness-of-fit result with its bootstrap null sample.
#[derive(Clone, Debug)]
pub struct GofResult {
    pub statistic: f64,
    pub null_draws: Vec<f64>,
    pub p_value: f64,
    pub k: usize,
    pub slice_centers: Vec<f64>,
    /// Per-slice L2 terms; skipped slices contribute zero.
    pub contributions: Vec<f64>,
    /// Indices of slices dropped for lack of kernel weight.
    pub skipped: Vec<usize>,
}

/// Sup-norm bootstrap band around the weighted kernel estimate.
#[derive(Clone, Debug)]
pub struct BandResult {
    pub h1_hat: GridDensity,
    pub c_alpha: f64,
    pub alpha: f64,
    pub b: usize,
    pub nu: f64,
    pub z_hat: f64,
    /// Replicates redrawn because their weight mass was not positive.
    pub redraws: usize,
}

fn gauss_weight(x: f64, bw: f64) -> f64 {
    libm::exp(-0.5 * (x / bw) * (x / bw))
}

/// p = (1 + #{null >= observed}) / (B + 1).
fn p_from_draws(observed: f64, draws: &[f64]) -> f64 {
    let above = draws.iter().filter(|&&d| d >= observed).count();
    (1 + above) as f64 / (draws.len() + 1) as f64
}

/// Kernel density on the grid from binned signed weights, each source
/// cell's kernel truncated to the support and renormalized on the grid,
/// the whole estimate scaled to unit mass by the total weight.
fn binned_kde(x: &[f64], w: &[f64], bw: f64, support: Support, g: usize) -> Result<GridDensity> {
    let h = support.len() / g as f64;
    let mut binned = vec![0.0; g];
    let mut total = 0.0;
    for i in 0..x.len() {
        if w[i] == 0.0 {
            continue;
        }
        let mut c = libm::floor((x[i] - support.lo) / h) as isize;
        if c < 0 {
            c = 0;
        }
        if c as usize >= g {
            c = g as isize - 1;
        }
        binned[c as usize] += w[i];
        total += w[i];
    }
    if libm::fabs(total) < EPS_FLOOR {
        return Err(Error::DegenerateWeights);
    }
    let radius = libm::ceil(KERNEL_RADIUS * bw / h) as isize;
    let mut kernel = vec![0.0; radius as usize + 1];
    for (d, v) in kernel.iter_mut().enumerate() {
        *v = gauss_weight(d as f64 * h, bw);
    }
    let mut values = vec![0.0; g];
    for d in 0..g as isize {
        if binned[d as usize] == 0.0 {
            continue;
        }
        let lo = (d - radius).max(0);
        let hi = (d + radius).min(g as isize - 1);
        let mut mass = 0.0;
        for c in lo..=hi {
            mass += kernel[(c - d).unsigned_abs()];
        }
        mass *= h;
        let scale = binned[d as usize] / (total * mass);
        for c in lo..=hi {
            values[c as usize] += scale * kernel[(c - d).unsigned_abs()];
        }
    }
    GridDensity::function(support, values)
}

/// Mixture proportions maximizing the weighted likelihood over fixed
/// component shapes, by a fixed number of EM steps from uniform.
fn em_proportions(evals: &[Vec<f64>], u: &[f64], steps: usize) -> Vec<f64> {
    let k = evals.len();
    let n = u.len();
    let mut theta = vec![1.0 / k as f64; k];
    let mut resp = vec![0.0; k];
    for _ in 0..steps {
        let mut acc = vec![0.0; k];
        let mut wsum = 0.0;
        for i in 0..n {
            if u[i] == 0.0 {
                continue;
            }
            let mut p = 0.0;
            for j in 0..k {
                resp[j] = theta[j] * evals[j][i];
                p += resp[j];
            }
            if p <= 0.0 {
                continue;
            }
            wsum += u[i];
            for j in 0..k {
                acc[j] += u[i] * resp[j] / p;
            }
        }
        if wsum <= 0.0 {
            break;
        }
        for j in 0..k {
            theta[j] = acc[j] / wsum;
        }
    }
    theta
}

struct SliceStat {
    statistic: f64,
    contributions: Vec<f64>,
    skipped: Vec<usize>,
}

/// Observed-or-replicate statistic: per slice, L2 distance between the
/// EM mixture fit and the kernel estimate of the weighted mass sample.
fn slice_statistic(
    m: &[f64],
    t: &[f64],
    basis: &BasisSet,
    k: usize,
    lambda: f64,
) -> Result<SliceStat> {
    let n = m.len();
    let densities = basis.densities();
    let evals: Vec<Vec<f64>> = densities
        .iter()
        .map(|g| m.iter().map(|&x| g.eval(x)).collect())
        .collect();
    let bw_m = silverman(m)?;
    let support = basis.support();
    let g = densities[0].len();
    let h = support.len() / g as f64;
    let (t_lo, t_hi) = t
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let spacing = (t_hi - t_lo) / k as f64;
    let mut contributions = vec![0.0; k];
    let mut skipped = Vec::new();
    let mut u = vec![0.0; n];
    for s in 0..k {
        let center = t_lo + (s as f64 + 0.5) * spacing;
        let mut total = 0.0;
        for i in 0..n {
            u[i] = gauss_weight(t[i] - center, lambda);
            total += u[i];
        }
        if total < SLICE_FLOOR * n as f64 {
            skipped.push(s);
            continue;
        }
        let theta = em_proportions(&evals, &u, EM_STEPS);
        let kde = binned_kde(m, &u, bw_m, support, g)?;
        let mut l2 = 0.0;
        for c in 0..g {
            let mut fit = 0.0;
            for j in 0..densities.len() {
                fit += theta[j] * densities[j].values()[c];
            }
            let d = fit - kde.values()[c];
            l2 += d * d;
        }
        contributions[s] = h * l2;
    }
    let statistic = contributions.iter().sum();
    Ok(SliceStat {
        statistic,
        contributions,
        skipped,
    })
}

/// Conditional component probabilities on a t grid, estimated from the
/// biorthogonal weight evaluations smoothed along t.
struct NullModel {
    t_lo: f64,
    t_step: f64,
    /// Component probabilities per t cell, rows summing to one.
    beta: Vec<Vec<f64>>,
}

impl NullModel {
    fn component_probs(&self, t: f64) -> &[f64] {
        let mut c = libm::floor((t - self.t_lo) / self.t_step) as isize;
        let g = self.beta.len() as isize;
        if c < 0 {
            c = 0;
        }
        if c >= g {
            c = g - 1;
        }
        &self.beta[c as usize]
    }
    fn draw_component(&self, t: f64, u: f64) -> usize {
        let probs = self.component_probs(t);
        let mut acc = 0.0;
        for (j, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        probs.len() - 1
    }
    fn build(m: &[f64], t: &[f64], basis: &BasisSet, evals: &[Vec<f64>]) -> Result<NullModel> {
        let n = m.len();
        let kb = basis.k();
        let fallback = em_proportions(evals, &vec![1.0; n], EM_STEPS);
        let mut marg = vec![0.0; basis.densities()[0].len()];
        for (j, g) in basis.densities().iter().enumerate() {
            for (c, v) in marg.iter_mut().enumerate() {
                *v += fallback[j] * g.values()[c];
            }
        }
        let ws = make_weights(
            basis,
            &Normalizer::Density(GridDensity::function(basis.support(), marg)?),
        )?;
        let (t_lo, t_hi) = t
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        let pad = 1e-9 * (t_hi - t_lo).max(1.0);
        let support_t = Support::new(t_lo - pad, t_hi + pad)?;
        let gt = DEFAULT_GRID;
        let bw_t = silverman(t)?;
        let mut f_hat = Vec::with_capacity(kb);
        for j in 0..kb {
            let w: Vec<f64> = m
                .iter()
                .map(|&x| ws.weight(j).eval(x))
                .collect();
            // Total weight is n z_j; the shared scaling drops out of the
            // per-cell ratios below, so a vanishing component falls back.
            match binned_kde(t, &w, bw_t, support_t, gt) {
                Ok(d) => f_hat.push(Some((d, w.iter().sum::<f64>()))),
                Err(Error::DegenerateWeights) => f_hat.push(None),
                Err(e) => return Err(e),
            }
        }
        let mut beta = vec![vec![0.0; kb]; gt];
        for c in 0..gt {
            let mut any = false;
            let mut row = vec![0.0; kb];
            for j in 0..kb {
                if let Some((d, total)) = &f_hat[j] {
                    let v = d.values()[c] * total;
                    if v > 0.0 {
                        row[j] = v;
                        any = true;
                    }
                }
            }
            let sum: f64 = row.iter().sum();
            if !any || sum <= 0.0 {
                beta[c].clone_from_slice(&fallback);
            } else {
                for j in 0..kb {
                    beta[c][j] = row[j] / sum;
                }
            }
        }
        Ok(NullModel {
            t_lo,
            t_step: support_t.len() / gt as f64,
            beta,
        })
    }
}

/// Slice goodness-of-fit test of the basis against the data, calibrated
/// by a semiparametric bootstrap: t values are resampled from the data
/// and mass values simulated from the fitted conditional mixture, with
/// the full fitting procedure repeated on every replicate.
pub fn gof_test(
    s: &Sample,
    basis: &BasisSet,
    k: usize,
    slice_bandwidth: Option<f64>,
    b: usize,
    seed: u64,
) -> Result<GofResult> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 slices, got {k}"
        )));
    }
    if b < 99 {
        return Err(Error::InvalidParameter(format!(
            "need at least 99 bootstrap replicates, got {b}"
        )));
    }
    let n = s.m.len();
    if n < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 events, got {n}"
        )));
    }
    let support = basis.support();
    if s.m.iter().any(|&x| !support.contains(x)) {
        return Err(Error::InvalidParameter(
            "mass observations outside the basis support".into(),
        ));
    }
    let (t_lo, t_hi) = s
        .t
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if !(t_hi > t_lo) {
        return Err(Error::InvalidParameter(
            "t observations are all identical".into(),
        ));
    }
    let lambda = match slice_bandwidth {
        Some(v) if v > 0.0 && v.is_finite() => v,
        Some(v) => {
            return Err(Error::InvalidParameter(format!(
                "slice bandwidth must be positive, got {v}"
            )))
        }
        None => 1.5 * (t_hi - t_lo) / k as f64,
    };
    let observed = slice_statistic(&s.m, &s.t, basis, k, lambda)?;
    let evals: Vec<Vec<f64>> = basis
        .densities()
        .iter()
        .map(|g| s.m.iter().map(|&x| g.eval(x)).collect())
        .collect();
    let null = NullModel::build(&s.m, &s.t, basis, &evals)?;
    let stream = SeedStream::new(seed);
    let mut null_draws = Vec::with_capacity(b);
    let mut m_rep = vec![0.0; n];
    let mut t_rep = vec![0.0; n];
    for j in 0..b {
        let mut rep = stream.split(j as u64);
        for i in 0..n {
            let idx = (rep.uniform() * n as f64) as usize;
            let idx = idx.min(n - 1);
            t_rep[i] = s.t[idx];
            let comp = null.draw_component(t_rep[i], rep.uniform());
            m_rep[i] = basis.densities()[comp].quantile(rep.uniform())?;
        }
        null_draws.push(slice_statistic(&m_rep, &t_rep, basis, k, lambda)?.statistic);
    }
    let p_value = p_from_draws(observed.statistic, &null_draws);
    let spacing = (t_hi - t_lo) / k as f64;
    Ok(GofResult {
        statistic: observed.statistic,
        null_draws,
        p_value,
        k,
        slice_centers: (0..k).map(|s| t_lo + (s as f64 + 0.5) * spacing).collect(),
        contributions: observed.contributions,
        skipped: observed.skipped,
    })
}

/// Sup-norm bootstrap confidence band for the signal t-density: the
/// weighted kernel estimate is normalized by its mass, pairs are
/// resampled with replacement, and the band half-width is the empirical
/// 1-alpha quantile of the sup deviations of the replicates.
pub fn bootstrap_band(
    s: &Sample,
    ws: &WeightSet,
    nu: f64,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<BandResult> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be positive, got {nu}"
        )));
    }
    if b < 199 {
        return Err(Error::InvalidParameter(format!(
            "need at least 199 bootstrap replicates, got {b}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let n = s.m.len();
    if n < 2 {
        return Err(Error::InvalidParameter("need at least 2 events".into()));
    }
    let omega: Vec<f64> = s
        .m
        .iter()
        .map(|&x| ws.eval_signal(x, WeightEval::Interp))
        .collect();
    let (t_lo, t_hi) = s
        .t
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let support = Support::new(t_lo - nu, t_hi + nu)?;
    let kernels = KernelMatrix::new(&s.t, nu, support, DEFAULT_GRID)?;
    let f_hat = kernels.weighted_density(&omega)?;
    let z_hat = f_hat.integrate();
    if z_hat <= EPS_FLOOR {
        return Err(Error::Degenerate(format!(
            "weighted mass estimate is not positive: {z_hat}"
        )));
    }
    let h1_hat = GridDensity::function(
        support,
        f_hat.values().iter().map(|v| v / z_hat).collect(),
    )?;
    let stream = SeedStream::new(seed);
    let mut sups = Vec::with_capacity(b);
    let mut redraws = 0usize;
    let mut rep_weights = vec![0.0; n];
    let mut j = 0u64;
    while sups.len() < b {
        if redraws > 50 * b {
            return Err(Error::Degenerate(
                "bootstrap replicates keep losing their weight mass".into(),
            ));
        }
        let mut rep = stream.split(j);
        j += 1;
        for w in rep_weights.iter_mut() {
            *w = 0.0;
        }
        for _ in 0..n {
            let idx = ((rep.uniform() * n as f64) as usize).min(n - 1);
            rep_weights[idx] += omega[idx];
        }
        let f_rep = kernels.weighted_density(&rep_weights)?;
        let z_rep = f_rep.integrate();
        if z_rep <= EPS_FLOOR {
            redraws += 1;
            continue;
        }
        let mut sup = 0.0;
        for c in 0..DEFAULT_GRID {
            let d = libm::fabs(f_rep.values()[c] / z_rep - h1_hat.values()[c]);
            if d > sup {
                sup = d;
            }
        }
        sups.push(sup);
    }
    sups.sort_by(|a, b| a.partial_cmp(b).expect("sup deviations are finite"));
    let rank = libm::ceil((1.0 - alpha) * b as f64) as usize;
    let c_alpha = sups[rank.clamp(1, b) - 1];
    Ok(BandResult {
        h1_hat,
        c_alpha,
        alpha,
        b,
        nu,
        z_hat,
        redraws,
    })
}
