//! Data generators for the worked examples and the shape-parameter fit
//! for the standard two-component benchmark model.

use cowherd_core::dists::ParamDensity;
use cowherd_core::error::{Error, Result};
use cowherd_core::mixture::MixtureModel;
use cowherd_core::smooth::Sample;
use cowherd_core::special::{norm_cdf, probit};
use cowherd_core::{GridDensity, Matrix, SeedStream, Support};

/// Tabulation grid for marginal quantile lookups inside the generators.
const QUANTILE_GRID: usize = 4096;

/// The standard benchmark mixture: signal N(.5,.1) vs background
/// Exp(.5) on the unit mass interval, signal Exp(.2) vs background
/// N(.1,1) on [0,1.5] for the control variable, equal weights.
pub fn synthetic_model() -> MixtureModel {
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

/// Labeled draw with fixed per-component counts from the benchmark model.
pub fn gen_synthetic(n_signal: usize, n_background: usize, seed: u64) -> Result<Sample> {
    let mut stream = SeedStream::new(seed);
    synthetic_model().sample_counts(&[n_signal, n_background], &mut stream)
}

/// Benchmark marginals coupled by a Gaussian copula, labels drawn from
/// the conditional signal probability given the mass value alone.
pub fn gen_copula_toy(n: usize, rho: f64, seed: u64) -> Result<Sample> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "copula correlation {rho} outside (-1, 1)"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("empty sample requested".into()));
    }
    let model = synthetic_model();
    let p_m = model.marginal_m_grid(QUANTILE_GRID)?;
    let p_t = model.marginal_t_grid(QUANTILE_GRID)?;
    let g1 = model.g[0].clone();
    let z = model.z[0];
    let mut stream = SeedStream::new(seed);
    let mut m = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut label = Vec::with_capacity(n);
    for _ in 0..n {
        let x = probit(stream.uniform().clamp(1e-12, 1.0 - 1e-12))?;
        let y = rho * x + (1.0 - rho * rho).sqrt() * probit(stream.uniform().clamp(1e-12, 1.0 - 1e-12))?;
        let mi = p_m.quantile(norm_cdf(x))?;
        let ti = p_t.quantile(norm_cdf(y))?;
        let p_sig = z * g1.pdf(mi) / model.marginal_m(mi).max(1e-300);
        label.push(if stream.uniform() < p_sig { 1 } else { 2 });
        m.push(mi);
        t.push(ti);
    }
    Sample::new(m, t)?.with_labels(label)
}

/// Localized-signal example: uniform background mass with a drifting
/// Beta conditional, and an independent Beta(3,3) signal concentrated
/// on the window [0.4, 0.6]. Half of the density is background.
pub fn gen_ot_example(n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::InvalidParameter("empty sample requested".into()));
    }
    let signal_m = ParamDensity::rescaled_beta(3.0, 3.0, 0.4, 0.6)?;
    let signal_t = ParamDensity::beta(3.0, 3.0)?;
    let mut stream = SeedStream::new(seed);
    let mut m = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut label = Vec::with_capacity(n);
    for _ in 0..n {
        if stream.uniform() < 0.5 {
            let mi = signal_m.quantile(stream.uniform())?;
            m.push(mi);
            t.push(signal_t.quantile(stream.uniform())?);
            label.push(1);
        } else {
            let mi = stream.uniform();
            let cond = ParamDensity::beta(1.0 + 4.0 * mi, 5.0 - 4.0 * mi)?;
            m.push(mi);
            t.push(cond.quantile(stream.uniform())?);
            label.push(2);
        }
    }
    Sample::new(m, t)?.with_labels(label)
}

/// The two worked factorized models for the envelope bounds, equal
/// weights on the unit square.
pub fn bounds_model(case: u8) -> Result<MixtureModel> {
    match case {
        1 => MixtureModel::new(
            vec![0.5, 0.5],
            vec![
                ParamDensity::truncated_normal(0.5, 0.1, 0.0, 1.0)?,
                ParamDensity::uniform(0.0, 1.0)?,
            ],
            vec![
                ParamDensity::truncated_normal(0.5, 0.1, 0.0, 1.0)?,
                ParamDensity::uniform(0.0, 1.0)?,
            ],
            1,
            1,
        ),
        2 => MixtureModel::new(
            vec![0.5, 0.5],
            vec![
                ParamDensity::truncated_normal(0.7, 1.0, 0.0, 1.0)?,
                ParamDensity::beta(3.0, 2.0)?,
            ],
            vec![
                ParamDensity::truncated_normal(0.3, 0.1, 0.0, 1.0)?,
                ParamDensity::uniform(0.0, 1.0)?,
            ],
            1,
            1,
        ),
        other => Err(Error::InvalidParameter(format!(
            "bounds example must be 1 or 2, got {other}"
        ))),
    }
}

pub fn gen_bounds_example(case: u8, n: usize, seed: u64) -> Result<Sample> {
    let mut stream = SeedStream::new(seed);
    bounds_model(case)?.sample(n, &mut stream)
}

/// Sample matrix and labels from a conditionally independent mixture.
pub struct CondIndData {
    /// n x 3 coordinate matrix.
    pub x: Matrix,
    /// 1-based component labels.
    pub label: Vec<usize>,
}

/// Three-coordinate two-component model: every coordinate is Beta(8,2)
/// under the first component and Beta(2,8) under the second, with
/// mixing weights (0.4, 0.6).
pub fn gen_condind(n: usize, seed: u64) -> Result<CondIndData> {
    if n == 0 {
        return Err(Error::InvalidParameter("empty sample requested".into()));
    }
    let f1 = ParamDensity::beta(8.0, 2.0)?;
    let f2 = ParamDensity::beta(2.0, 8.0)?;
    let mut stream = SeedStream::new(seed);
    let mut x = Matrix::zeros(n, 3);
    let mut label = Vec::with_capacity(n);
    for i in 0..n {
        let first = stream.uniform() < 0.4;
        label.push(if first { 1 } else { 2 });
        for r in 0..3 {
            let d = if first { &f1 } else { &f2 };
            x[(i, r)] = d.quantile(stream.uniform())?;
        }
    }
    Ok(CondIndData { x, label })
}

/// Benchmark shapes with per-component Gaussian copulas.
pub fn gen_copula_mixture(n: usize, z: f64, rho1: f64, rho2: f64, seed: u64) -> Result<Sample> {
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mixture weight {z} outside (0, 1)"
        )));
    }
    let base = synthetic_model();
    let model = MixtureModel::new(vec![z, 1.0 - z], base.g.clone(), base.h.clone(), 1, 1)?
        .with_copula(vec![rho1, rho2])?;
    let mut stream = SeedStream::new(seed);
    model.sample(n, &mut stream)
}

/// Maximum-likelihood shape fit of the benchmark mass mixture.
#[derive(Clone, Debug)]
pub struct SyntheticShapeFit {
    pub z: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Mean of the truncated exponential component.
    pub mean_b: f64,
    pub log_lik: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct MassMixture {
    z: f64,
    mu: f64,
    sigma: f64,
    mean_b: f64,
}

impl MassMixture {
    fn log_lik(&self, m: &[f64]) -> f64 {
        let sig = ParamDensity::truncated_normal(self.mu, self.sigma, 0.0, 1.0);
        let bkg = ParamDensity::truncated_exponential(self.mean_b, 0.0, 1.0);
        let (sig, bkg) = match (sig, bkg) {
            (Ok(s), Ok(b)) => (s, b),
            _ => return f64::NEG_INFINITY,
        };
        let mut ll = 0.0;
        for &x in m {
            let p = self.z * sig.pdf(x) + (1.0 - self.z) * bkg.pdf(x);
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += p.ln();
        }
        ll
    }
}

/// Golden-section maximization of a unimodal slice of the likelihood.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.6180339887498949;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

const FIT_MAX_ITER: usize = 500;
const FIT_TOL: f64 = 1e-6;

/// EM with coordinate-wise likelihood ascent in the M step, restarted
/// from five deterministic initial points; the best run is returned and
/// flagged when no run moved less than the tolerance within the cap.
pub fn fit_synthetic_shapes(m: &[f64]) -> Result<SyntheticShapeFit> {
    let n = m.len();
    if n < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 events to fit shapes, got {n}"
        )));
    }
    if m.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::InvalidParameter(
            "mass observations outside the unit interval".into(),
        ));
    }
    let mut sorted = m.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quant = |q: f64| sorted[((q * (n - 1) as f64) as usize).min(n - 1)];
    let mut stream = SeedStream::new(0x5eed);
    let mut best: Option<SyntheticShapeFit> = None;
    for restart in 0..5 {
        let mut jitter = |w: f64| (restart as f64) * w * (stream.uniform() - 0.5);
        let mut p = MassMixture {
            z: (0.5 + jitter(0.5)).clamp(0.1, 0.9),
            mu: (quant(0.5) + jitter(0.2)).clamp(0.05, 0.95),
            sigma: (0.1 + jitter(0.1)).clamp(0.02, 0.5),
            mean_b: (0.5 + jitter(0.5)).clamp(0.05, 5.0),
        };
        let mut converged = false;
        let mut iters = 0;
        let mut resp = vec![0.0; n];
        for it in 0..FIT_MAX_ITER {
            iters = it + 1;
            let sig = ParamDensity::truncated_normal(p.mu, p.sigma, 0.0, 1.0)?;
            let bkg = ParamDensity::truncated_exponential(p.mean_b, 0.0, 1.0)?;
            let mut zsum = 0.0;
            for i in 0..n {
                let a = p.z * sig.pdf(m[i]);
                let b = (1.0 - p.z) * bkg.pdf(m[i]);
                resp[i] = if a + b > 0.0 { a / (a + b) } else { 0.5 };
                zsum += resp[i];
            }
            let z_new = (zsum / n as f64).clamp(1e-3, 1.0 - 1e-3);
            // Weighted likelihood ascent for each shape parameter, holding
            // the others fixed; thirty golden sections pin four digits.
            let wl_sig = |mu: f64, sigma: f64| -> f64 {
                match ParamDensity::truncated_normal(mu, sigma, 0.0, 1.0) {
                    Ok(d) => {
                        let mut s = 0.0;
                        for i in 0..n {
                            if resp[i] > 0.0 {
                                let v = d.pdf(m[i]);
                                if v <= 0.0 {
                                    return f64::NEG_INFINITY;
                                }
                                s += resp[i] * v.ln();
                            }
                        }
                        s
                    }
                    Err(_) => f64::NEG_INFINITY,
                }
            };
            let wl_bkg = |mean: f64| -> f64 {
                match ParamDensity::truncated_exponential(mean, 0.0, 1.0) {
                    Ok(d) => {
                        let mut s = 0.0;
                        for i in 0..n {
                            if resp[i] < 1.0 {
                                let v = d.pdf(m[i]);
                                if v <= 0.0 {
                                    return f64::NEG_INFINITY;
                                }
                                s += (1.0 - resp[i]) * v.ln();
                            }
                        }
                        s
                    }
                    Err(_) => f64::NEG_INFINITY,
                }
            };
            let mu_new = golden_max(|v| wl_sig(v, p.sigma), 0.05, 0.95, 30);
            let sigma_new = golden_max(|v| wl_sig(mu_new, v), 0.02, 0.5, 30);
            let mean_new = golden_max(wl_bkg, 0.05, 5.0, 30);
            let delta = (z_new - p.z).abs().max((mu_new - p.mu).abs())
                .max((sigma_new - p.sigma).abs())
                .max((mean_new - p.mean_b).abs());
            p = MassMixture {
                z: z_new,
                mu: mu_new,
                sigma: sigma_new,
                mean_b: mean_new,
            };
            if delta < FIT_TOL {
                converged = true;
                break;
            }
        }
        let fit = SyntheticShapeFit {
            z: p.z,
            mu: p.mu,
            sigma: p.sigma,
            mean_b: p.mean_b,
            log_lik: p.log_lik(m),
            converged,
            iterations: iters,
        };
        best = match best {
            Some(b) if b.log_lik >= fit.log_lik => Some(b),
            _ => Some(fit),
        };
    }
    Ok(best.expect("five restarts always produce a fit"))
}

/// One-sample Kolmogorov-Smirnov statistic against a tabulated density.
pub fn ks_statistic(xs: &[f64], truth: &GridDensity) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = truth.cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        sup = sup.max((f - lo).abs()).max((hi - f).abs());
    }
    sup
}

/// Convenience: support of the benchmark mass axis.
pub fn synthetic_support_m() -> Support {
    Support::new(0.0, 1.0).unwrap()
}

/// Convenience: support of the benchmark control axis.
pub fn synthetic_support_t() -> Support {
    Support::new(0.0, 1.5).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 99% one-sample KS critical value.
    fn ks_crit(n: usize) -> f64 {
        1.6276 / (n as f64).sqrt()
    }

    #[test]
    fn synthetic_subsamples_match_their_marginals() {
        let s = gen_synthetic(2000, 2000, 7).unwrap();
        let label = s.label.as_ref().unwrap();
        let model = synthetic_model();
        let m_sig: Vec<f64> = s
            .m
            .iter()
            .zip(label)
            .filter(|(_, &l)| l == 1)
            .map(|(&v, _)| v)
            .collect();
        let t_bkg: Vec<f64> = s
            .t
            .iter()
            .zip(label)
            .filter(|(_, &l)| l == 2)
            .map(|(&v, _)| v)
            .collect();
        assert_eq!(m_sig.len(), 2000);
        let g1 = model.g[0].tabulate(QUANTILE_GRID).unwrap();
        let h2 = model.h[1].tabulate(QUANTILE_GRID).unwrap();
        assert!(ks_statistic(&m_sig, &g1) < ks_crit(2000));
        assert!(ks_statistic(&t_bkg, &h2) < ks_crit(2000));
    }

    #[test]
    fn signal_mass_mean_matches_the_moment() {
        let s = gen_synthetic(4000, 0, 3).unwrap();
        let mean = s.m.iter().sum::<f64>() / s.m.len() as f64;
        // Truncation barely moves the N(.5,.1) mean; 3 sigma over root n.
        assert!((mean - 0.5).abs() < 3.0 * 0.1 / (4000f64).sqrt());
    }

    #[test]
    fn pure_background_is_labeled_background() {
        let s = gen_synthetic(0, 500, 1).unwrap();
        assert!(s.label.as_ref().unwrap().iter().all(|&l| l == 2));
    }

    #[test]
    fn copula_toy_keeps_the_marginals_and_flat_conditional_labels() {
        let n = 4000;
        let s = gen_copula_toy(n, 0.7, 11).unwrap();
        let model = synthetic_model();
        let p_m = model.marginal_m_grid(QUANTILE_GRID).unwrap();
        let p_t = model.marginal_t_grid(QUANTILE_GRID).unwrap();
        assert!(ks_statistic(&s.m, &p_m) < ks_crit(n));
        assert!(ks_statistic(&s.t, &p_t) < ks_crit(n));
        // Labels depend on m only. Marginally the signal share does vary
        // with t because m and t are correlated, so the flatness check
        // must condition on m: within each m stratum the share per t bin
        // matches the stratum share up to binomial noise.
        let label = s.label.as_ref().unwrap();
        for stratum in 0..4 {
            let lo = stratum as f64 * 0.25;
            let hi = lo + 0.25;
            let mut bins = [(0usize, 0usize); 3];
            let mut hit_all = 0usize;
            let mut tot_all = 0usize;
            for i in 0..n {
                if !(lo..hi).contains(&s.m[i]) {
                    continue;
                }
                let b = ((s.t[i] / 1.5 * 3.0) as usize).min(2);
                bins[b].1 += 1;
                tot_all += 1;
                if label[i] == 1 {
                    bins[b].0 += 1;
                    hit_all += 1;
                }
            }
            let share = hit_all as f64 / tot_all as f64;
            for (hit, tot) in bins {
                if tot < 80 {
                    continue;
                }
                let rate = hit as f64 / tot as f64;
                let se = (share.max(0.01) * (1.0 - share.max(0.01)) / tot as f64).sqrt();
                assert!(
                    (rate - share).abs() < 4.0 * se,
                    "stratum {stratum}: signal share {rate:.3} vs {share:.3} (se {se:.3})"
                );
            }
        }
    }

    #[test]
    fn rho_zero_gives_independent_ranks() {
        let n = 4000;
        let s = gen_copula_toy(n, 0.0, 5).unwrap();
        let model = synthetic_model();
        let p_m = model.marginal_m_grid(QUANTILE_GRID).unwrap();
        let p_t = model.marginal_t_grid(QUANTILE_GRID).unwrap();
        let mut corr = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for i in 0..n {
            let x = probit(p_m.cdf(s.m[i]).clamp(1e-9, 1.0 - 1e-9)).unwrap();
            let y = probit(p_t.cdf(s.t[i]).clamp(1e-9, 1.0 - 1e-9)).unwrap();
            corr += x * y;
            vx += x * x;
            vy += y * y;
        }
        let r = corr / (vx.sqrt() * vy.sqrt());
        assert!(r.abs() < 3.0 / (n as f64).sqrt(), "rank correlation {r}");
    }

    #[test]
    fn ot_example_background_mass_is_uniform() {
        let s = gen_ot_example(4000, 9).unwrap();
        let label = s.label.as_ref().unwrap();
        let m_bkg: Vec<f64> = s
            .m
            .iter()
            .zip(label)
            .filter(|(_, &l)| l == 2)
            .map(|(&v, _)| v)
            .collect();
        let flat = ParamDensity::uniform(0.0, 1.0)
            .unwrap()
            .tabulate(QUANTILE_GRID)
            .unwrap();
        assert!(ks_statistic(&m_bkg, &flat) < ks_crit(m_bkg.len()));
        let m_sig: Vec<f64> = s
            .m
            .iter()
            .zip(label)
            .filter(|(_, &l)| l == 1)
            .map(|(&v, _)| v)
            .collect();
        assert!(m_sig.iter().all(|&v| (0.4..=0.6).contains(&v)));
    }

    #[test]
    fn condind_columns_match_the_mixture_moments() {
        let d = gen_condind(4000, 13).unwrap();
        // Mixture mean 0.4 * 8/10 + 0.6 * 2/10 = 0.44 per coordinate.
        for r in 0..3 {
            let mean: f64 = (0..4000).map(|i| d.x[(i, r)]).sum::<f64>() / 4000.0;
            assert!(
                (mean - 0.44).abs() < 3.0 * 0.3 / (4000f64).sqrt(),
                "coordinate {r} mean {mean}"
            );
        }
        let share = d.label.iter().filter(|&&l| l == 1).count() as f64 / 4000.0;
        assert!((share - 0.4).abs() < 0.03);
    }

    #[test]
    fn copula_mixture_labels_follow_the_weight() {
        let s = gen_copula_mixture(4000, 0.5, 0.6, -0.3, 17).unwrap();
        let share = s.label.as_ref().unwrap().iter().filter(|&&l| l == 1).count() as f64 / 4000.0;
        assert!((share - 0.5).abs() < 0.03);
        assert!(s.t.iter().all(|&t| (0.0..=1.5).contains(&t)));
    }

    #[test]
    fn shape_fit_recovers_the_truth() {
        let s = gen_synthetic(2000, 2000, 23).unwrap();
        let fit = fit_synthetic_shapes(&s.m).unwrap();
        assert!((fit.z - 0.5).abs() < 0.04, "z {}", fit.z);
        assert!((fit.mu - 0.5).abs() < 0.01, "mu {}", fit.mu);
        assert!((fit.sigma - 0.1).abs() < 0.01, "sigma {}", fit.sigma);
        assert!(fit.converged);
    }

    #[test]
    fn pure_signal_pushes_the_weight_to_one() {
        let s = gen_synthetic(3000, 0, 29).unwrap();
        let fit = fit_synthetic_shapes(&s.m).unwrap();
        assert!(fit.z > 0.95, "z {}", fit.z);
    }

    #[test]
    fn likelihood_never_decreases_between_restart_winners() {
        // The returned fit maximizes the likelihood among restarts, and
        // a refit of the same data reproduces it exactly.
        let s = gen_synthetic(1000, 1000, 31).unwrap();
        let a = fit_synthetic_shapes(&s.m).unwrap();
        let b = fit_synthetic_shapes(&s.m).unwrap();
        assert_eq!(a.z.to_bits(), b.z.to_bits());
        assert_eq!(a.log_lik.to_bits(), b.log_lik.to_bits());
    }

    #[test]
    fn bad_arguments_are_rejected() {
        assert!(gen_copula_toy(100, 1.0, 0).is_err());
        assert!(gen_bounds_example(3, 100, 0).is_err());
        assert!(gen_copula_mixture(100, 0.0, 0.5, 0.5, 0).is_err());
        assert!(fit_synthetic_shapes(&[0.5; 50]).is_err());
    }
}
