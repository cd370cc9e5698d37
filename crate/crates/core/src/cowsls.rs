//! Least-squares routes to the same signal extraction the orthogonal
//! weights produce: a binned matrix form, an unbinned per-t regression,
//! and the varying-coefficient view of the mixture.

use crate::error::{Error, Result};
use crate::grid::{GridDensity, Support, EPS_FLOOR};
use crate::linalg::Matrix;
use crate::mixture::MixtureModel;
use crate::smooth::Hist2D;
use crate::sweights::{check_condition, BasisSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Binned least-squares fit of P ~ G H^T.
#[derive(Clone, Debug)]
pub struct LsCowsFit {
    /// n_m x N design matrix, G_ij = g_j(bin midpoint i) * bin width.
    pub g_mat: Matrix,
    /// n_t x N; column j estimates the scaled component curve over t.
    pub h_hat: Matrix,
    /// n_m x N weight matrix G (G^T G)^{-1}.
    pub w_mat: Matrix,
    /// Signal vector H e, one entry per t bin (expected signal counts).
    pub s_hat: Vec<f64>,
    /// Component selector, e_j = 1 for the signal columns.
    pub e: Vec<f64>,
}

fn design_at_midpoints(basis: &BasisSet, edges: &[f64]) -> Matrix {
    let n_m = edges.len() - 1;
    let k = basis.k();
    Matrix::from_fn(n_m, k, |i, j| {
        let mid = 0.5 * (edges[i] + edges[i + 1]);
        let width = edges[i + 1] - edges[i];
        basis.densities()[j].eval(mid) * width
    })
}

/// Least-squares estimate H^T = (G^T G)^{-1} G^T P of the binned mixture.
///
/// The normal equations are solved through a QR factorization; the explicit
/// weight matrix W = G (G^T G)^{-1} is materialized alongside so the two
/// routes can be compared.
pub fn ls_cows_binned(p_hat: &Hist2D, basis: &BasisSet) -> Result<LsCowsFit> {
    let g_mat = design_at_midpoints(basis, &p_hat.m_edges);
    let k = basis.k();
    if p_hat.n_m() < k {
        return Err(Error::InvalidParameter(format!(
            "{} m-bins cannot identify {k} components",
            p_hat.n_m()
        )));
    }
    let gtg = g_mat.transpose().matmul(&g_mat);
    check_condition(&gtg)?;
    let h_hat_t = g_mat.lstsq(&p_hat.counts)?;
    let h_hat = h_hat_t.transpose();
    let w_mat = g_mat.matmul(&gtg.inverse()?);
    let mut e = vec![0.0; k];
    for j in 0..basis.s {
        e[j] = 1.0;
    }
    let s_hat = h_hat.matvec(&e);
    Ok(LsCowsFit {
        g_mat,
        h_hat,
        w_mat,
        s_hat,
        e,
    })
}

/// Unbinned per-t regression of a joint density estimate on the basis.
#[derive(Clone, Debug)]
pub struct UnbinnedCows {
    /// r_j(t) = z_j h_j(t) estimates, one per component.
    pub r: Vec<GridDensity>,
    /// Raw signal curve, sum of the signal components; may go negative.
    pub s_raw: GridDensity,
    /// Clipped and renormalized signal density.
    pub s_density: GridDensity,
}

/// Regress Y(t) = p_hat(M_i, t) on G_ij = g_j(M_i), one regression per
/// t-grid cell, sharing a single factorization of G.
pub fn ls_cows_unbinned<F: Fn(f64, f64) -> f64>(
    p_hat: F,
    m: &[f64],
    basis: &BasisSet,
    support_t: Support,
    grid_t: usize,
) -> Result<UnbinnedCows> {
    let n = m.len();
    let k = basis.k();
    if n < k {
        return Err(Error::InvalidParameter(format!(
            "{n} observations cannot identify {k} components"
        )));
    }
    let g_mat = Matrix::from_fn(n, k, |i, j| basis.densities()[j].eval(m[i]));
    let gtg = g_mat.transpose().matmul(&g_mat);
    check_condition(&gtg)?;
    let ht = support_t.len() / grid_t as f64;
    let y = Matrix::from_fn(n, grid_t, |i, c| {
        p_hat(m[i], support_t.lo + (c as f64 + 0.5) * ht)
    });
    let r_mat = g_mat.lstsq(&y)?;
    let mut r = Vec::with_capacity(k);
    for j in 0..k {
        let values: Vec<f64> = (0..grid_t).map(|c| r_mat[(j, c)]).collect();
        r.push(GridDensity::function(support_t, values)?);
    }
    let mut s_vals = vec![0.0; grid_t];
    for j in 0..basis.s {
        for (c, v) in s_vals.iter_mut().enumerate() {
            *v += r[j].values()[c];
        }
    }
    let s_raw = GridDensity::function(support_t, s_vals)?;
    let s_density = s_raw.clipped().normalized()?;
    Ok(UnbinnedCows {
        r,
        s_raw,
        s_density,
    })
}

/// Mixture proportions as functions of t: beta_k(t) = z_k h_k(t) / p(t).
///
/// Nonnegative with pointwise sum 1; errors where the t-marginal vanishes.
pub fn varying_coefficients(model: &MixtureModel, grid_t: usize) -> Result<Vec<GridDensity>> {
    let sup = model.support_t();
    let h = sup.len() / grid_t as f64;
    let k = model.k();
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; grid_t]; k];
    for c in 0..grid_t {
        let t = sup.lo + (c as f64 + 0.5) * h;
        let p = model.marginal_t(t);
        if p < EPS_FLOOR {
            return Err(Error::Degenerate(format!(
                "t-marginal vanishes at t = {t}"
            )));
        }
        for j in 0..k {
            out[j][c] = model.z[j] * model.h[j].pdf(t) / p;
        }
    }
    out.into_iter()
        .map(|v| GridDensity::function(sup, v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::ParamDensity;
    use crate::smooth::{hist2d, kde2d, silverman};
    use crate::stream::SeedStream;
    use crate::sweights::{
        estimate_z, extract_signal, make_weights, ExtractMode, ExtractOpts, Normalizer,
        WeightEval,
    };

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

    fn fake_hist(counts: Matrix, sup_m: Support, sup_t: Support) -> Hist2D {
        let n_m = counts.rows();
        let n_t = counts.cols();
        Hist2D {
            counts,
            m_edges: (0..=n_m)
                .map(|i| sup_m.lo + sup_m.len() * i as f64 / n_m as f64)
                .collect(),
            t_edges: (0..=n_t)
                .map(|i| sup_t.lo + sup_t.len() * i as f64 / n_t as f64)
                .collect(),
            dropped: 0,
        }
    }

    #[test]
    fn exact_low_rank_input_is_recovered() {
        let model = synthetic_model();
        let basis = BasisSet::new(model.tabulate_g(15).unwrap(), 1, 1).unwrap();
        let sup_m = model.support_m();
        let sup_t = model.support_t();
        let g_mat = design_at_midpoints(
            &basis,
            &(0..=15)
                .map(|i| sup_m.lo + sup_m.len() * i as f64 / 15.0)
                .collect::<Vec<f64>>(),
        );
        // H with arbitrary smooth columns.
        let h_true = Matrix::from_fn(12, 2, |c, j| {
            let t = (c as f64 + 0.5) / 12.0;
            if j == 0 {
                1.0 + t
            } else {
                2.0 - t * t
            }
        });
        let p = g_mat.matmul(&h_true.transpose());
        let hist = fake_hist(p, sup_m, sup_t);
        let fit = ls_cows_binned(&hist, &basis).unwrap();
        for c in 0..12 {
            for j in 0..2 {
                assert!(
                    (fit.h_hat[(c, j)] - h_true[(c, j)]).abs() < 1e-10,
                    "H[{c},{j}]"
                );
            }
        }
    }

    #[test]
    fn residual_orthogonal_to_design_is_invisible() {
        // Adding E with columns orthogonal to col(G) leaves the fit exact.
        let model = synthetic_model();
        let basis = BasisSet::new(model.tabulate_g(15).unwrap(), 1, 1).unwrap();
        let sup_m = model.support_m();
        let sup_t = model.support_t();
        let edges: Vec<f64> = (0..=15)
            .map(|i| sup_m.lo + sup_m.len() * i as f64 / 15.0)
            .collect();
        let g_mat = design_at_midpoints(&basis, &edges);
        let h_true = Matrix::from_fn(10, 2, |c, j| (c + j + 1) as f64 * 0.1);
        let mut stream = SeedStream::new(17);
        let raw = Matrix::from_fn(15, 10, |_, _| stream.uniform() - 0.5);
        // Project the noise off the column space of G.
        let gtg = g_mat.transpose().matmul(&g_mat);
        let proj = g_mat
            .matmul(&gtg.inverse().unwrap())
            .matmul(&g_mat.transpose());
        let mut e = raw.clone();
        let pe = proj.matmul(&raw);
        for i in 0..15 {
            for j in 0..10 {
                e[(i, j)] -= pe[(i, j)];
            }
        }
        let mut p = g_mat.matmul(&h_true.transpose());
        for i in 0..15 {
            for j in 0..10 {
                p[(i, j)] += e[(i, j)];
            }
        }
        let fit = ls_cows_binned(&fake_hist(p, sup_m, sup_t), &basis).unwrap();
        for c in 0..10 {
            for j in 0..2 {
                assert!((fit.h_hat[(c, j)] - h_true[(c, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn weight_matrix_route_matches_qr_route() {
        let model = synthetic_model();
        let basis = BasisSet::new(model.tabulate_g(15).unwrap(), 1, 1).unwrap();
        let sample = model.sample(4000, &mut SeedStream::new(23)).unwrap();
        let hist = hist2d(
            &sample,
            15,
            15,
            Some((model.support_m(), model.support_t())),
        )
        .unwrap();
        let fit = ls_cows_binned(&hist, &basis).unwrap();
        let via_w = fit.w_mat.transpose().matmul(&hist.counts);
        for j in 0..2 {
            for c in 0..15 {
                assert!(
                    (via_w[(j, c)] - fit.h_hat[(c, j)]).abs() < 1e-10,
                    "H[{c},{j}]: {} vs {}",
                    via_w[(j, c)],
                    fit.h_hat[(c, j)]
                );
            }
        }
    }

    #[test]
    fn binned_fit_matches_cell_weight_extraction() {
        // With the basis tabulated on the binning grid and unit normalizer,
        // the least-squares signal vector equals per-bin sums of the cell
        // weights; both reduce to the same linear algebra.
        let model = synthetic_model();
        let basis = BasisSet::new(model.tabulate_g(15).unwrap(), 1, 1).unwrap();
        let sample = model.sample(4000, &mut SeedStream::new(29)).unwrap();
        let hist = hist2d(
            &sample,
            15,
            15,
            Some((model.support_m(), model.support_t())),
        )
        .unwrap();
        let fit = ls_cows_binned(&hist, &basis).unwrap();
        let ws = make_weights(&basis, &Normalizer::Unit).unwrap();
        let opts = ExtractOpts {
            mode: ExtractMode::Hist { bins: 15 },
            weight_eval: WeightEval::Cell,
            support_t: model.support_t(),
            grid: 15,
            truth: None,
        };
        let ex = extract_signal(&ws, &sample, &opts).unwrap();
        let sums = ex.bin_sums.as_ref().unwrap();
        for c in 0..15 {
            assert!(
                (fit.s_hat[c] - sums[c]).abs() < 1e-8,
                "bin {c}: {} vs {}",
                fit.s_hat[c],
                sums[c]
            );
        }
    }

    #[test]
    fn signal_total_near_true_yield() {
        let model = synthetic_model();
        let basis = BasisSet::new(model.tabulate_g(15).unwrap(), 1, 1).unwrap();
        let sample = model.sample(4000, &mut SeedStream::new(41)).unwrap();
        let hist = hist2d(
            &sample,
            15,
            15,
            Some((model.support_m(), model.support_t())),
        )
        .unwrap();
        let fit = ls_cows_binned(&hist, &basis).unwrap();
        let total: f64 = fit.s_hat.iter().sum();
        assert!(
            (total - 2000.0).abs() < 150.0,
            "signal total {total} for true 2000"
        );
    }

    #[test]
    fn unbinned_on_exact_density_recovers_components() {
        // Joint built from the same tabulated shapes the design uses, so
        // the regression system is exactly consistent.
        let model = synthetic_model();
        let basis = BasisSet::new(model.tabulate_g(2048).unwrap(), 1, 1).unwrap();
        let sample = model.sample(500, &mut SeedStream::new(7)).unwrap();
        let g = basis.densities().to_vec();
        let fit = ls_cows_unbinned(
            |m, t| {
                0.5 * g[0].eval(m) * model.h[0].pdf(t) + 0.5 * g[1].eval(m) * model.h[1].pdf(t)
            },
            &sample.m,
            &basis,
            model.support_t(),
            256,
        )
        .unwrap();
        for j in 0..2 {
            for c in 0..256 {
                let t = fit.r[j].point(c);
                let want = 0.5 * model.h[j].pdf(t);
                assert!(
                    (fit.r[j].values()[c] - want).abs() < 1e-6,
                    "r[{j}]({t}) = {} want {want}",
                    fit.r[j].values()[c]
                );
            }
        }
    }

    #[test]
    fn duplicate_basis_column_errors() {
        let g1 = ParamDensity::uniform(0.0, 1.0).unwrap().tabulate(64).unwrap();
        // BasisSet itself rejects duplicates, so build a nearly dependent
        // pair that passes construction and fails on the sample design.
        let m = vec![0.5; 8];
        let g2 = GridDensity::density(
            Support::new(0.0, 1.0).unwrap(),
            {
                let mut v = vec![1.0; 64];
                v[0] = 1.0 + 1e-12;
                let mass: f64 = v.iter().sum::<f64>() / 64.0;
                v.iter().map(|x| x / mass).collect()
            },
        )
        .unwrap();
        let basis = BasisSet::new(vec![g1, g2], 1, 1);
        match basis {
            Err(Error::RankDeficient { .. }) => {}
            Ok(b) => {
                let res = ls_cows_unbinned(
                    |_, _| 1.0,
                    &m,
                    &b,
                    Support::new(0.0, 1.0).unwrap(),
                    16,
                );
                assert!(matches!(res, Err(Error::RankDeficient { .. })));
            }
            Err(e) => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn unbinned_on_kernel_estimate_is_close() {
        // Kernel smoothing of the steep signal peak bounds how close this
        // route can get: measured L1 over 20 seeds is 0.16 +/- 0.02 with
        // Silverman bandwidths, dominated by bias at the t = 0 edge.
        let model = synthetic_model();
        let basis = BasisSet::new(model.tabulate_g(2048).unwrap(), 1, 1).unwrap();
        let sample = model.sample(4000, &mut SeedStream::new(3)).unwrap();
        let bw_m = silverman(&sample.m).unwrap();
        let bw_t = silverman(&sample.t).unwrap();
        let p_hat = kde2d(
            &sample.m,
            &sample.t,
            bw_m,
            bw_t,
            model.support_m(),
            model.support_t(),
            256,
            256,
        )
        .unwrap();
        let fit = ls_cows_unbinned(
            |m, t| p_hat.eval(m, t),
            &sample.m,
            &basis,
            model.support_t(),
            256,
        )
        .unwrap();
        let mut l1 = 0.0;
        for c in 0..256 {
            let t = fit.s_density.point(c);
            l1 += (fit.s_density.values()[c] - model.h[0].pdf(t)).abs() * fit.s_density.step();
        }
        assert!(l1 < 0.2, "L1 distance {l1}");
    }

    #[test]
    fn estimated_fraction_consistent_between_routes() {
        // The unbinned signal mass and the weight-based fraction estimate
        // agree on what share of the data is signal.
        let model = synthetic_model();
        let basis = BasisSet::new(model.tabulate_g(2048).unwrap(), 1, 1).unwrap();
        let sample = model.sample(4000, &mut SeedStream::new(13)).unwrap();
        let marg = model.marginal_m_grid(2048).unwrap();
        let ws = make_weights(&basis, &Normalizer::Density(marg)).unwrap();
        let z = estimate_z(&ws, &sample, WeightEval::Interp);
        assert!((z[0] - 0.5).abs() < 0.05);
    }

    #[test]
    fn varying_coefficients_partition_unity() {
        let model = synthetic_model();
        let beta = varying_coefficients(&model, 512).unwrap();
        for c in 0..512 {
            let total: f64 = beta.iter().map(|b| b.values()[c]).sum();
            assert!((total - 1.0).abs() < 1e-9, "cell {c}: {total}");
            for b in &beta {
                assert!(b.values()[c] >= 0.0);
            }
        }
    }

    #[test]
    fn varying_coefficients_single_component_is_one() {
        let model = MixtureModel::new(
            vec![1.0],
            vec![ParamDensity::uniform(0.0, 1.0).unwrap()],
            vec![ParamDensity::truncated_exponential(0.2, 0.0, 1.5).unwrap()],
            1,
            0,
        )
        .unwrap();
        let beta = varying_coefficients(&model, 128).unwrap();
        for c in 0..128 {
            assert!((beta[0].values()[c] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn varying_coefficient_equals_z_where_components_cross() {
        let model = synthetic_model();
        let beta = varying_coefficients(&model, 4096).unwrap();
        // Find the t cell where the two component densities are closest.
        let sup = model.support_t();
        let h = sup.len() / 4096.0;
        let mut best = (0usize, f64::INFINITY);
        for c in 0..4096 {
            let t = sup.lo + (c as f64 + 0.5) * h;
            let d = (model.h[0].pdf(t) - model.h[1].pdf(t)).abs();
            if d < best.1 {
                best = (c, d);
            }
        }
        let b1 = beta[0].values()[best.0];
        assert!((b1 - 0.5).abs() < 5e-3, "beta1 at crossing = {b1}");
    }
}
