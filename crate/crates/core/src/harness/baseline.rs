//! Conventional massive MIMO without RIS: `N_A` antennas, i.i.d. Rayleigh
//! channels with the UEs' large-scale gains, LMMSE estimation from the same
//! pilot book, conjugate beamforming and the same power budget.

use num_complex::Complex64;
use rand::Rng;

use crate::config::CsiKind;
use crate::error::Result;
use crate::estimation::PilotBook;
use crate::geometry::{draw_small_scale, CMat, CVec};
use crate::performance::{equal_share_powers, hardening_terms, mean_and_sem, se_shannon, sinr_from_composite, LbUser};

/// Link parameters shared by the RIS-aided system and the baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// Noise power (W) at the array and at every UE.
    pub noise: f64,
    pub p_max: f64,
    /// Uplink training power (W).
    pub eta_ul: f64,
    pub prelog_pcsi: f64,
    pub prelog_icsi: f64,
}

/// Per-user SE (mean over draws) with its Monte-Carlo standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSe {
    pub se: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Variance of each entry of the baseline LMMSE estimate.
fn estimate_variance(betas: &[f64], pilots: &PilotBook, link: &LinkBudget, k: usize) -> f64 {
    let tau_p = pilots.tau_p() as f64;
    let denom: f64 = betas
        .iter()
        .enumerate()
        .map(|(j, b)| link.eta_ul * b * pilots.rho(j, k).powi(2))
        .sum::<f64>()
        + link.noise * tau_p;
    link.eta_ul * (tau_p * betas[k]).powi(2) / denom
}

/// Baseline SE for each requested CSI kind, in `csi` order.
pub fn baseline_mmimo<R: Rng + ?Sized>(
    n_active: usize,
    betas: &[f64],
    pilots: &PilotBook,
    link: &LinkBudget,
    csi: &[CsiKind],
    draws: usize,
    rng: &mut R,
) -> Result<Vec<(CsiKind, UserSe)>> {
    let k = betas.len();
    let tau_p = pilots.tau_p() as f64;
    let gamma: Vec<f64> = (0..k).map(|i| estimate_variance(betas, pilots, link, i)).collect();
    let noise = vec![link.noise; k];
    // E‖ĝ_k‖² = N_A γ_k
    let avg_norms: Vec<f64> = gamma.iter().map(|g| n_active as f64 * g).collect();
    let eta_avg = equal_share_powers(link.p_max, &avg_norms)?;

    let need_draws = csi.iter().any(|c| *c != CsiKind::Lb);
    let mut pcsi = vec![Vec::with_capacity(draws); k];
    let mut ub = vec![Vec::with_capacity(draws); k];
    let want_pcsi = csi.contains(&CsiKind::Pcsi);
    let want_ub = csi.contains(&CsiKind::Ub);
    if need_draws {
        for _ in 0..draws {
            let g: Vec<CVec> = betas.iter().map(|&b| draw_small_scale(b, n_active, rng)).collect();
            // pilot-projected noise, shared by UEs on the same pilot
            let noise_by_pilot: Vec<CVec> = (0..pilots.tau_p())
                .map(|_| draw_small_scale(link.noise * tau_p, n_active, rng))
                .collect();
            if want_pcsi {
                let beams: Vec<CVec> = g.iter().map(|x| x.conjugate()).collect();
                let norms: Vec<f64> = beams.iter().map(|w| w.norm_squared()).collect();
                let eta = equal_share_powers(link.p_max, &norms)?;
                for (i, s) in sinr_from_composite(&g, &beams, &eta, &noise).into_iter().enumerate() {
                    pcsi[i].push(se_shannon(s, link.prelog_pcsi));
                }
            }
            if want_ub {
                let beams: Vec<CVec> = (0..k)
                    .map(|i| {
                        let mut y = noise_by_pilot[pilots.pilot_of(i)].clone();
                        for (j, gj) in g.iter().enumerate() {
                            let rho = pilots.rho(j, i);
                            if rho != 0.0 {
                                y.axpy(Complex64::from(link.eta_ul.sqrt() * rho), gj, Complex64::from(1.0));
                            }
                        }
                        let c = gamma[i] / (link.eta_ul.sqrt() * tau_p * betas[i]);
                        (y * Complex64::from(c)).conjugate()
                    })
                    .collect();
                for (i, s) in sinr_from_composite(&g, &beams, &eta_avg, &noise).into_iter().enumerate() {
                    ub[i].push(se_shannon(s, link.prelog_icsi));
                }
            }
        }
    }

    let mut out = Vec::with_capacity(csi.len());
    for &c in csi {
        let result = match c {
            CsiKind::Pcsi => summarize(&pcsi),
            CsiKind::Ub => summarize(&ub),
            CsiKind::Lb => {
                // A = I and R_k = γ_k I reduce the RIS bound to the standard MR bound
                let eye = CMat::identity(n_active, n_active);
                let covs: Vec<CMat> = gamma.iter().map(|&g| CMat::identity(n_active, n_active) * Complex64::from(g)).collect();
                let users: Vec<LbUser> = (0..k)
                    .map(|i| LbUser {
                        covariance: &covs[i],
                        beta: betas[i],
                        eta_dl: eta_avg[i],
                        eta_ul: link.eta_ul,
                        noise: link.noise,
                    })
                    .collect();
                let terms = hardening_terms(&eye, &users, pilots)?;
                UserSe {
                    se: terms.iter().map(|t| se_shannon(t.sinr(), link.prelog_icsi)).collect(),
                    std_error: vec![0.0; k],
                }
            }
        };
        out.push((c, result));
    }
    Ok(out)
}

pub(crate) fn summarize(samples: &[Vec<f64>]) -> UserSe {
    let (se, std_error) = samples.iter().map(|s| mean_and_sem(s)).unzip();
    UserSe { se, std_error }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn link(noise: f64) -> LinkBudget {
        LinkBudget {
            noise,
            p_max: 5.0,
            eta_ul: 0.8,
            prelog_pcsi: 1.0,
            prelog_icsi: 0.92,
        }
    }

    #[test]
    fn single_user_perfect_csi_matches_mr_gain() {
        // K = 1: SINR = P‖g‖²/σ², so SE tracks log2(1 + P‖g‖²/σ²) draw by draw
        let pilots = PilotBook::orthogonal(4, 1).unwrap();
        let n = 8;
        let beta = 1e-10;
        let noise = 1e-14;
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        let res = baseline_mmimo(n, &[beta], &pilots, &link(noise), &[CsiKind::Pcsi], 50, &mut a).unwrap();
        let mut oracle = Vec::new();
        for _ in 0..50 {
            let g = draw_small_scale(beta, n, &mut b);
            let _ = (0..4).map(|_| draw_small_scale(noise * 4.0, n, &mut b)).count();
            oracle.push((1.0 + 5.0 * g.norm_squared() / noise).log2());
        }
        let mean = oracle.iter().sum::<f64>() / 50.0;
        assert!((res[0].1.se[0] - mean).abs() < 1e-10 * mean);
    }

    #[test]
    fn lower_bound_below_upper_bound() {
        let pilots = PilotBook::orthogonal(2, 4).unwrap();
        let betas = [1e-10, 3e-11, 2e-12, 8e-11];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let res = baseline_mmimo(
            16,
            &betas,
            &pilots,
            &link(1e-13),
            &[CsiKind::Pcsi, CsiKind::Ub, CsiKind::Lb],
            2000,
            &mut rng,
        )
        .unwrap();
        let (ub, lb) = (&res[1].1, &res[2].1);
        for k in 0..4 {
            assert!(lb.se[k] <= ub.se[k] + 3.0 * ub.std_error[k], "user {k}: {} vs {}", lb.se[k], ub.se[k]);
            assert!(lb.se[k] > 0.0);
        }
    }

    #[test]
    fn closed_form_matches_simulation_of_terms() {
        // standard MR bound: DS² = η(Nγ)², BU = ηNβγ, UI_j = η_j N β γ_j for non-copilots
        let pilots = PilotBook::orthogonal(4, 2).unwrap();
        let betas = [2e-10, 5e-11];
        let l = link(1e-13);
        let n = 4;
        let gamma: Vec<f64> = (0..2).map(|i| estimate_variance(&betas, &pilots, &l, i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let draws = 40_000;
        let mut sum_x = Complex64::new(0.0, 0.0);
        let mut sum_x2 = 0.0;
        let tau_p = 4.0;
        for _ in 0..draws {
            let g = draw_small_scale(betas[0], n, &mut rng);
            let noise = draw_small_scale(l.noise * tau_p, n, &mut rng);
            let y = g.scale(l.eta_ul.sqrt() * tau_p) + noise;
            let est = y.scale(gamma[0] / (l.eta_ul.sqrt() * tau_p * betas[0]));
            let x: Complex64 = g.iter().zip(est.iter()).map(|(a, b)| a * b.conj()).sum();
            sum_x += x;
            sum_x2 += x.norm_sqr();
        }
        let mean = sum_x / draws as f64;
        let var = sum_x2 / draws as f64 - mean.norm_sqr();
        let t = n as f64 * gamma[0];
        assert!((mean.re - t).abs() < 0.02 * t);
        assert!((var - betas[0] * t).abs() < 0.03 * betas[0] * t);
    }
}
