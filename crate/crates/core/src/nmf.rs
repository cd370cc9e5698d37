//! Nonnegative factorization of a binned joint density and its conversion
//! into a normalized two-component mixture decomposition.

use crate::error::{Error, Result};
use crate::grid::{GridDensity, Support};
use crate::linalg::Matrix;
use crate::stream::SeedStream;
use alloc::format;
use alloc::vec::Vec;

/// Denominator guard for the multiplicative updates.
const UPDATE_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct NmfOpts {
    pub max_iter: usize,
    /// Stop when the relative residual change falls below this.
    pub tol: f64,
    pub restarts: usize,
}

impl Default for NmfOpts {
    fn default() -> Self {
        NmfOpts {
            max_iter: 2000,
            tol: 1e-8,
            restarts: 5,
        }
    }
}

/// Factorization P ~ G H with everything nonnegative.
#[derive(Clone, Debug)]
pub struct NmfResult {
    /// n_m x r.
    pub g: Matrix,
    /// r x n_t.
    pub h: Matrix,
    pub rank: usize,
    /// Frobenius residual after each iteration of the winning restart.
    pub residual_trace: Vec<f64>,
}

impl NmfResult {
    pub fn residual(&self) -> f64 {
        *self.residual_trace.last().unwrap_or(&f64::INFINITY)
    }
}

fn frobenius_residual(p: &Matrix, g: &Matrix, h: &Matrix) -> f64 {
    let gh = g.matmul(h);
    let mut s = 0.0;
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            let d = p[(i, j)] - gh[(i, j)];
            s += d * d;
        }
    }
    libm::sqrt(s)
}

fn run_restart(p: &Matrix, rank: usize, opts: &NmfOpts, stream: &mut SeedStream) -> NmfResult {
    let (nm, nt) = (p.rows(), p.cols());
    // Positive random start scaled so G H has the magnitude of P.
    let mean = p.data().iter().sum::<f64>() / (nm * nt) as f64;
    let scale = libm::sqrt((mean / rank as f64).max(UPDATE_EPS));
    let mut g = Matrix::from_fn(nm, rank, |_, _| scale * (0.1 + 0.9 * stream.uniform()));
    let mut h = Matrix::from_fn(rank, nt, |_, _| scale * (0.1 + 0.9 * stream.uniform()));
    let mut trace = Vec::new();
    let mut prev = frobenius_residual(p, &g, &h);
    for _ in 0..opts.max_iter {
        // H <- H * (G^T P) / (G^T G H)
        let gt = g.transpose();
        let gtp = gt.matmul(p);
        let gtgh = gt.matmul(&g).matmul(&h);
        for i in 0..rank {
            for j in 0..nt {
                h[(i, j)] *= gtp[(i, j)] / (gtgh[(i, j)] + UPDATE_EPS);
            }
        }
        // G <- G * (P H^T) / (G H H^T)
        let ht = h.transpose();
        let pht = p.matmul(&ht);
        let ghht = g.matmul(&h.matmul(&ht));
        for i in 0..nm {
            for j in 0..rank {
                g[(i, j)] *= pht[(i, j)] / (ghht[(i, j)] + UPDATE_EPS);
            }
        }
        let res = frobenius_residual(p, &g, &h);
        trace.push(res);
        let rel = (prev - res) / prev.max(UPDATE_EPS);
        prev = res;
        if rel.abs() < opts.tol {
            break;
        }
    }
    NmfResult {
        g,
        h,
        rank,
        residual_trace: trace,
    }
}

/// Factor a nonnegative matrix by seeded multiplicative updates, keeping
/// the best of `opts.restarts` random starts by final residual. Restart
/// streams are split from the given stream, so the result is deterministic
/// for a given seed regardless of evaluation order.
pub fn nmf(p: &Matrix, rank: usize, opts: &NmfOpts, stream: &SeedStream) -> Result<NmfResult> {
    if rank == 0 {
        return Err(Error::InvalidParameter("rank must be positive".into()));
    }
    if p.rows() == 0 || p.cols() == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    if p.data().iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidParameter(
            "matrix has negative entries".into(),
        ));
    }
    let mut best: Option<NmfResult> = None;
    for r in 0..opts.restarts.max(1) {
        let mut sub = stream.split(r as u64);
        let cand = run_restart(p, rank, opts, &mut sub);
        let better = match &best {
            None => true,
            Some(b) => cand.residual() < b.residual(),
        };
        if better {
            best = Some(cand);
        }
    }
    Ok(best.unwrap())
}

/// A rank-2 factorization turned into mixture form.
#[derive(Clone, Debug)]
pub struct MixtureParts {
    pub z: f64,
    pub g1: GridDensity,
    pub g2: GridDensity,
    pub h1: GridDensity,
    pub h2: GridDensity,
    /// True when the entropy rule swapped the factor order.
    pub swapped: bool,
}

/// Normalize a rank-2 factorization into (z, g1, g2, h1, h2).
///
/// Each factor column is normalized on its grid; z is the share of total
/// mass carried by the signal term. The lower-entropy m-factor is labeled
/// signal.
pub fn normalize_to_mixture(
    res: &NmfResult,
    support_m: Support,
    support_t: Support,
) -> Result<MixtureParts> {
    if res.rank != 2 {
        return Err(Error::InvalidParameter(format!(
            "mixture normalization needs rank 2, got {}",
            res.rank
        )));
    }
    let nm = res.g.rows();
    let nt = res.h.cols();
    let dm = support_m.len() / nm as f64;
    let dt = support_t.len() / nt as f64;
    let mut masses = [0.0; 2];
    let mut gs = Vec::with_capacity(2);
    let mut hs = Vec::with_capacity(2);
    for k in 0..2 {
        let e_mass: f64 = (0..nm).map(|i| res.g[(i, k)]).sum::<f64>() * dm;
        let f_mass: f64 = (0..nt).map(|j| res.h[(k, j)]).sum::<f64>() * dt;
        if !(e_mass > 0.0) || !(f_mass > 0.0) {
            return Err(Error::Degenerate(format!(
                "factor {k} has no mass"
            )));
        }
        masses[k] = e_mass * f_mass;
        gs.push(GridDensity::density(
            support_m,
            (0..nm).map(|i| res.g[(i, k)] / e_mass).collect(),
        )?);
        hs.push(GridDensity::density(
            support_t,
            (0..nt).map(|j| res.h[(k, j)] / f_mass).collect(),
        )?);
    }
    let mut z = masses[0] / (masses[0] + masses[1]);
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::Degenerate(format!("mixture weight {z}")));
    }
    let mut swapped = false;
    if gs[0].entropy()? > gs[1].entropy()? {
        gs.swap(0, 1);
        hs.swap(0, 1);
        z = 1.0 - z;
        swapped = true;
    }
    let g2 = gs.pop().unwrap();
    let g1 = gs.pop().unwrap();
    let h2 = hs.pop().unwrap();
    let h1 = hs.pop().unwrap();
    Ok(MixtureParts {
        z,
        g1,
        g2,
        h1,
        h2,
        swapped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::ParamDensity;
    use crate::mixture::MixtureModel;
    use crate::smooth::hist2d;

    fn synthetic_model() -> MixtureModel {
        MixtureModel::new(
            vec![0.5, 0.5],
            vec![
                ParamDensity::truncated_normal(0.5, 0.1, 0.0, 1.0).unwrap(),
                ParamDensity::truncated_exponential(0.5, 0.0, 1.0).unwrap(),
            ],
            vec![
                ParamDensity::truncated_exponential(0.2, 0.0, 1.5).unwrap(),
                ParamDensity::truncated_normal(0.1, 1.0, 0.0, 1.5).unwrap(),
            ],
            1,
            1,
        )
        .unwrap()
    }

    fn l1(a: &GridDensity, b: &GridDensity) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            * a.step()
    }

    #[test]
    fn rank_one_outer_product_is_exact() {
        let u: Vec<f64> = (0..12).map(|i| 1.0 + (i as f64 * 0.7).sin().abs()).collect();
        let v: Vec<f64> = (0..9).map(|j| 0.5 + 0.1 * j as f64).collect();
        let p = Matrix::from_fn(12, 9, |i, j| u[i] * v[j]);
        let fit = nmf(&p, 1, &NmfOpts::default(), &SeedStream::new(8)).unwrap();
        let rel = fit.residual() / p.frobenius();
        assert!(rel < 1e-6, "relative residual {rel}");
    }

    #[test]
    fn residual_trace_is_monotone() {
        let model = synthetic_model();
        let sample = model.sample(4000, &mut SeedStream::new(19)).unwrap();
        let hist = hist2d(
            &sample,
            15,
            15,
            Some((model.support_m(), model.support_t())),
        )
        .unwrap();
        let fit = nmf(&hist.counts, 2, &NmfOpts::default(), &SeedStream::new(2)).unwrap();
        for w in fit.residual_trace.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-12) + 1e-12,
                "residual rose from {} to {}",
                w[0],
                w[1]
            );
        }
        assert!(fit.g.data().iter().all(|&v| v >= 0.0));
        assert!(fit.h.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn synthetic_histogram_factors_match_truth() {
        let model = synthetic_model();
        let sample = model.sample(4000, &mut SeedStream::new(19)).unwrap();
        let hist = hist2d(
            &sample,
            15,
            15,
            Some((model.support_m(), model.support_t())),
        )
        .unwrap();
        let fit = nmf(&hist.counts, 2, &NmfOpts::default(), &SeedStream::new(2)).unwrap();
        let parts = normalize_to_mixture(&fit, model.support_m(), model.support_t()).unwrap();
        let tg: Vec<GridDensity> = model.tabulate_g(15).unwrap();
        let th: Vec<GridDensity> = model.tabulate_h(15).unwrap();
        // Alignment is already fixed by the entropy rule; check both the
        // chosen order and the swap, take the better one.
        let direct = l1(&parts.g1, &tg[0])
            + l1(&parts.g2, &tg[1])
            + l1(&parts.h1, &th[0])
            + l1(&parts.h2, &th[1]);
        let crossed = l1(&parts.g1, &tg[1])
            + l1(&parts.g2, &tg[0])
            + l1(&parts.h1, &th[1])
            + l1(&parts.h2, &th[0]);
        assert!(direct <= crossed, "entropy rule picked the wrong label");
        for (got, want, name) in [
            (&parts.g1, &tg[0], "g1"),
            (&parts.g2, &tg[1], "g2"),
            (&parts.h1, &th[0], "h1"),
            (&parts.h2, &th[1], "h2"),
        ] {
            let d = l1(got, want);
            assert!(d < 0.25, "{name}: L1 = {d}");
        }
        assert!((parts.z - 0.5).abs() < 0.1, "z = {}", parts.z);
    }

    #[test]
    fn rescaling_factors_keeps_residual() {
        let model = synthetic_model();
        let sample = model.sample(2000, &mut SeedStream::new(77)).unwrap();
        let hist = hist2d(
            &sample,
            15,
            15,
            Some((model.support_m(), model.support_t())),
        )
        .unwrap();
        let fit = nmf(&hist.counts, 2, &NmfOpts::default(), &SeedStream::new(5)).unwrap();
        let d = [2.3, 0.4];
        let gd = Matrix::from_fn(15, 2, |i, k| fit.g[(i, k)] * d[k]);
        let dih = Matrix::from_fn(2, 15, |k, j| fit.h[(k, j)] / d[k]);
        let r0 = frobenius_residual(&hist.counts, &fit.g, &fit.h);
        let r1 = frobenius_residual(&hist.counts, &gd, &dih);
        assert!((r0 - r1).abs() < 1e-9 * r0.max(1.0));
    }

    #[test]
    fn negative_input_rejected() {
        let mut p = Matrix::zeros(3, 3);
        p[(1, 1)] = -0.5;
        assert!(matches!(
            nmf(&p, 1, &NmfOpts::default(), &SeedStream::new(1)),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn normalized_input_passes_through() {
        let model = synthetic_model();
        let g = model.tabulate_g(32).unwrap();
        let h = model.tabulate_h(32).unwrap();
        // Factor matrices already in mixture form with z = 0.5.
        let gm = Matrix::from_fn(32, 2, |i, k| 0.5 * g[k].values()[i]);
        let hm = Matrix::from_fn(2, 32, |k, j| h[k].values()[j]);
        let res = NmfResult {
            g: gm,
            h: hm,
            rank: 2,
            residual_trace: vec![0.0],
        };
        let parts = normalize_to_mixture(&res, model.support_m(), model.support_t()).unwrap();
        assert!((parts.z - 0.5).abs() < 1e-12);
        for c in 0..32 {
            assert!((parts.g1.values()[c] - g[0].values()[c]).abs() < 1e-12);
            assert!((parts.h1.values()[c] - h[0].values()[c]).abs() < 1e-12);
        }
        // The normal m-factor is more concentrated, so no swap happened.
        assert!(!parts.swapped);
    }

    #[test]
    fn zero_mass_factor_rejected() {
        let gm = Matrix::from_fn(8, 2, |i, k| if k == 0 { 1.0 + i as f64 } else { 0.0 });
        let hm = Matrix::from_fn(2, 8, |_, _| 1.0);
        let res = NmfResult {
            g: gm,
            h: hm,
            rank: 2,
            residual_trace: vec![0.0],
        };
        let sup = Support::new(0.0, 1.0).unwrap();
        assert!(matches!(
            normalize_to_mixture(&res, sup, sup),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let p = Matrix::from_fn(10, 10, |i, j| ((i + 2) * (j + 1)) as f64);
        let a = nmf(&p, 2, &NmfOpts::default(), &SeedStream::new(33)).unwrap();
        let b = nmf(&p, 2, &NmfOpts::default(), &SeedStream::new(33)).unwrap();
        assert_eq!(a.residual_trace, b.residual_trace);
        assert_eq!(a.g.data(), b.g.data());
    }
}
