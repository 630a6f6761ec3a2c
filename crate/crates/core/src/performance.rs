//! Downlink conjugate beamforming and spectral-efficiency measures.
//!
//! Three measures are provided: the perfect-CSI SINR, the Monte-Carlo upper
//! bound (ergodic SE with estimate-based beamformers) and the closed-form
//! hardening lower bound. The lower bound is written in terms of
//! `A_Φ = Φᵀ Hᵀ H* Φ*`, for which the beamforming gain of UE `k` is
//! `h_kᵀ A_Φ ĥ_k*`. [`lb_terms_monte_carlo`] estimates the same terms by
//! simulation and serves as the oracle for the closed form.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{simulate_uplink_training, LmmseFilter, PilotBook, TrainingSetup};
use crate::geometry::{compose_effective_channel, scale_columns, CMat, CVec, UserLink};
use crate::phase::RisPhaseConfig;

/// Conjugate beamformer `w = H* Φ* ĥ*`.
pub fn conjugate_beamformer(h: &CMat, phases: &RisPhaseConfig, estimate: &CVec) -> Result<CVec> {
    Ok(compose_effective_channel(h, phases.phasors(), estimate)?.conjugate())
}

/// Equal-share power control `η_k = P_max / (K ‖w_k‖²)`.
pub fn allocate_downlink_power(p_max: f64, beamformers: &[CVec]) -> Result<Vec<f64>> {
    let norms: Vec<f64> = beamformers.iter().map(|w| w.norm_squared()).collect();
    equal_share_powers(p_max, &norms)
}

/// Equal-share power control from (possibly average) squared beamformer norms.
pub fn equal_share_powers(p_max: f64, norms_sq: &[f64]) -> Result<Vec<f64>> {
    if norms_sq.is_empty() {
        return Err(Error::Empty("beamformers"));
    }
    let k = norms_sq.len() as f64;
    norms_sq
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            if n > 0.0 && n.is_finite() {
                Ok(p_max / (k * n))
            } else {
                Err(Error::ZeroChannel(i))
            }
        })
        .collect()
}

/// Everything needed to evaluate the downlink SINR of one realization.
#[derive(Debug, Clone)]
pub struct DownlinkSetup {
    /// `H Φ`.
    pub hphi: CMat,
    pub beamformers: Vec<CVec>,
    pub powers: Vec<f64>,
    /// `σ²_k` at each UE.
    pub noise: Vec<f64>,
    /// Prelog with perfect CSI.
    pub prelog_pcsi: f64,
    /// Prelog with estimated CSI (pilot overhead removed).
    pub prelog_icsi: f64,
}

impl DownlinkSetup {
    pub fn total_power(&self) -> f64 {
        self.powers
            .iter()
            .zip(&self.beamformers)
            .map(|(p, w)| p * w.norm_squared())
            .sum()
    }
}

/// Downlink SINR of every UE for the true channels `channels`.
pub fn sinr_perfect_csi(setup: &DownlinkSetup, channels: &[CVec]) -> Result<Vec<f64>> {
    let k = setup.beamformers.len();
    if channels.len() != k || setup.powers.len() != k || setup.noise.len() != k {
        return Err(Error::Dimension(format!(
            "{} channels, {k} beamformers, {} powers, {} noise entries",
            channels.len(),
            setup.powers.len(),
            setup.noise.len()
        )));
    }
    let composite: Vec<CVec> = channels.iter().map(|h| &setup.hphi * h).collect();
    Ok(sinr_from_composite(&composite, &setup.beamformers, &setup.powers, &setup.noise))
}

/// `g_kᵀ w_j`, the gain from beam `j` at UE `k` (no conjugation).
#[inline]
pub(crate) fn bilinear(g: &CVec, w: &CVec) -> Complex64 {
    g.iter().zip(w.iter()).map(|(a, b)| a * b).sum()
}

pub(crate) fn sinr_from_composite(composite: &[CVec], beams: &[CVec], powers: &[f64], noise: &[f64]) -> Vec<f64> {
    composite
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let mut signal = 0.0;
            let mut interference = 0.0;
            for (j, w) in beams.iter().enumerate() {
                let p = powers[j] * bilinear(g, w).norm_sqr();
                if j == k {
                    signal = p;
                } else {
                    interference += p;
                }
            }
            let denom = interference + noise[k];
            if denom > 0.0 {
                signal / denom
            } else if signal > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .collect()
}

pub fn se_shannon(sinr: f64, prelog: f64) -> f64 {
    prelog * (1.0 + sinr).log2()
}

/// Monte-Carlo upper bound with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperBound {
    pub se: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// `prelog · E{log2(1 + γ)}` from per-draw `log2(1 + γ)` samples.
pub fn se_upper_bound(log_samples: &[f64], prelog: f64) -> Result<UpperBound> {
    if log_samples.is_empty() {
        return Err(Error::Empty("upper-bound samples"));
    }
    let (mean, sem) = mean_and_sem(log_samples);
    Ok(UpperBound {
        se: prelog * mean,
        std_error: prelog * sem,
        draws: log_samples.len(),
    })
}

pub(crate) fn mean_and_sem(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `A_Φ = Φᵀ Hᵀ H* Φ*`, Hermitian PSD with `tr(A_Φ) = ‖H‖²_F`.
pub fn a_phi_matrix(h: &CMat, phases: &RisPhaseConfig) -> Result<CMat> {
    let g = scale_columns(h, phases.phasors())?;
    Ok(g.transpose() * g.conjugate())
}

/// Average squared beamformer norm `E‖w_k‖² = tr(A_Φ R_k*)`.
pub fn mean_beamformer_power(a_phi: &CMat, covariance: &CMat) -> f64 {
    trace_product_conj(a_phi, covariance).re
}

/// `tr(A B*)`.
fn trace_product_conj(a: &CMat, b: &CMat) -> Complex64 {
    // tr(A B*) = Σ_ij A_ij conj(B_ji)
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)].conj();
        }
    }
    acc
}

/// Desired-signal, beamforming-uncertainty and interference powers of one UE.
#[derive(Debug, Clone, PartialEq)]
pub struct HardeningTerms {
    /// `|DS_k|²`.
    pub ds2: f64,
    /// `E|BU_k|²`.
    pub bu: f64,
    /// `E|UI_{k,j}|²`, zero at `j = k`.
    pub ui: Vec<f64>,
    pub noise: f64,
}

impl HardeningTerms {
    pub fn sinr(&self) -> f64 {
        let denom = self.bu + self.ui.iter().sum::<f64>() + self.noise;
        if denom > 0.0 {
            self.ds2 / denom
        } else {
            0.0
        }
    }
}

/// Per-UE second-order quantities needed by the closed-form bound.
#[derive(Debug, Clone)]
pub struct LbUser<'a> {
    pub covariance: &'a CMat,
    pub beta: f64,
    pub eta_dl: f64,
    pub eta_ul: f64,
    pub noise: f64,
}

/// Closed-form terms of the hardening bound for every UE.
///
/// The copilot sum runs over `P_k \ {k}`.
pub fn hardening_terms(a_phi: &CMat, users: &[LbUser<'_>], pilots: &PilotBook) -> Result<Vec<HardeningTerms>> {
    let n = users.len();
    if pilots.n_users() != n {
        return Err(Error::Dimension(format!("{n} users, pilot book covers {}", pilots.n_users())));
    }
    // t1_k = tr(A R_k*), t2_k = tr(A R_k* A)
    let mut t1 = Vec::with_capacity(n);
    let mut t2 = Vec::with_capacity(n);
    for (k, u) in users.iter().enumerate() {
        let ar = a_phi * u.covariance.conjugate();
        let first = ar.trace();
        let second = (&ar * a_phi).trace();
        let scale = a_phi.norm() * u.covariance.norm();
        for (name, v) in [("tr(A R*)", first.re), ("tr(A R* A)", second.re)] {
            if v < -1e-9 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Numeric(format!("{name} = {v:e} is negative for user {k}")));
            }
        }
        t1.push(first.re.max(0.0));
        t2.push(second.re.max(0.0));
    }

    let mut out = Vec::with_capacity(n);
    for (k, u) in users.iter().enumerate() {
        let ds2 = u.eta_dl * t1[k] * t1[k];
        let bu = u.eta_dl * u.beta * t2[k];
        let mut ui = vec![0.0; n];
        for (j, v) in users.iter().enumerate() {
            if j == k {
                continue;
            }
            ui[j] = if pilots.are_copilots(j, k) {
                let ratio = (v.beta * v.eta_ul.sqrt()) / (u.beta * u.eta_ul.sqrt());
                v.eta_dl * ratio * ratio * (t1[k] * t1[k] + u.beta * t2[k])
            } else {
                v.eta_dl * u.beta * t2[j]
            };
        }
        out.push(HardeningTerms {
            ds2,
            bu,
            ui,
            noise: u.noise,
        });
    }
    Ok(out)
}

/// Hardening-bound SINR `γ_{k,LB}` of every UE.
pub fn sinr_hardening_lb(a_phi: &CMat, users: &[LbUser<'_>], pilots: &PilotBook) -> Result<Vec<f64>> {
    Ok(hardening_terms(a_phi, users, pilots)?.iter().map(HardeningTerms::sinr).collect())
}

/// Monte-Carlo estimate of the hardening terms with batch-means standard
/// errors.
#[derive(Debug, Clone)]
pub struct MonteCarloTerms {
    pub terms: HardeningTerms,
    pub ds2_se: f64,
    pub bu_se: f64,
    pub ui_se: Vec<f64>,
    pub sinr: f64,
    pub sinr_se: f64,
}

#[derive(Clone)]
struct BatchAccumulator {
    n: usize,
    /// Σ x_kk
    sum_direct: Vec<Complex64>,
    /// Σ |x_kk|²
    sum_direct_sq: Vec<f64>,
    /// Σ |x_kj|², row-major
    sum_cross_sq: Vec<f64>,
}

impl BatchAccumulator {
    fn new(k: usize) -> Self {
        Self {
            n: 0,
            sum_direct: vec![Complex64::new(0.0, 0.0); k],
            sum_direct_sq: vec![0.0; k],
            sum_cross_sq: vec![0.0; k * k],
        }
    }

    fn merge(&mut self, other: &Self) {
        self.n += other.n;
        for (a, b) in self.sum_direct.iter_mut().zip(&other.sum_direct) {
            *a += b;
        }
        for (a, b) in self.sum_direct_sq.iter_mut().zip(&other.sum_direct_sq) {
            *a += b;
        }
        for (a, b) in self.sum_cross_sq.iter_mut().zip(&other.sum_cross_sq) {
            *a += b;
        }
    }

    fn terms(&self, eta_dl: &[f64], noise: &[f64]) -> Vec<HardeningTerms> {
        let k = self.sum_direct.len();
        let n = self.n as f64;
        (0..k)
            .map(|i| {
                let mean = self.sum_direct[i] / n;
                let var = if self.n > 1 {
                    ((self.sum_direct_sq[i] - n * mean.norm_sqr()) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
                let ui = (0..k)
                    .map(|j| if j == i { 0.0 } else { eta_dl[j] * self.sum_cross_sq[i * k + j] / n })
                    .collect();
                HardeningTerms {
                    ds2: eta_dl[i] * mean.norm_sqr(),
                    bu: eta_dl[i] * var,
                    ui,
                    noise: noise[i],
                }
            })
            .collect()
    }
}

/// Number of independent batches used for parallelism and standard errors.
const MC_BATCHES: usize = 64;

/// Simulates training, LMMSE estimation and conjugate beamforming over
/// `draws` joint realizations and estimates `|DS|²`, `E|BU|²` and `E|UI|²`.
///
/// A master seed is taken from `rng`; batch `b` then uses ChaCha stream `b`,
/// so the result does not depend on the number of worker threads.
#[allow(clippy::too_many_arguments)]
pub fn lb_terms_monte_carlo<R: Rng + ?Sized>(
    h: &CMat,
    phases: &RisPhaseConfig,
    training: &TrainingSetup,
    users: &[UserLink],
    pilots: &PilotBook,
    training_noise: f64,
    ue_noise: &[f64],
    draws: usize,
    rng: &mut R,
) -> Result<Vec<MonteCarloTerms>> {
    if draws < 2 {
        return Err(Error::Config("the Monte-Carlo oracle needs at least two draws".into()));
    }
    let k = users.len();
    if ue_noise.len() != k {
        return Err(Error::Dimension("one noise power per user is required".into()));
    }
    let hphi = scale_columns(h, phases.phasors())?;
    let filters: Vec<LmmseFilter> = (0..k)
        .map(|i| LmmseFilter::new(training.basis(), users, pilots, training_noise, i))
        .collect::<Result<_>>()?;
    let eta_dl: Vec<f64> = users.iter().map(|u| u.eta_dl).collect();
    let master: u64 = rng.random();
    let batches = MC_BATCHES.min(draws);

    let results: Vec<Result<BatchAccumulator>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let size = draws / batches + usize::from(b < draws % batches);
            let mut rng = ChaCha8Rng::seed_from_u64(master);
            rng.set_stream(b as u64);
            let mut local = users.to_vec();
            let mut acc = BatchAccumulator::new(k);
            for _ in 0..size {
                local.iter_mut().for_each(|u| u.redraw(&mut rng));
                let obs = simulate_uplink_training(training, &local, pilots, training_noise, &mut rng)?;
                let mut beams = Vec::with_capacity(k);
                for (f, y) in filters.iter().zip(&obs) {
                    let (est, _) = f.apply(training.basis(), y)?;
                    beams.push((&hphi * est).conjugate());
                }
                for (i, u) in local.iter().enumerate() {
                    let g = &hphi * &u.channel;
                    for (j, w) in beams.iter().enumerate() {
                        let x = bilinear(&g, w);
                        if i == j {
                            acc.sum_direct[i] += x;
                            acc.sum_direct_sq[i] += x.norm_sqr();
                        } else {
                            acc.sum_cross_sq[i * k + j] += x.norm_sqr();
                        }
                    }
                }
                acc.n += 1;
            }
            Ok(acc)
        })
        .collect();

    let batch_accs: Vec<BatchAccumulator> = results.into_iter().collect::<Result<_>>()?;
    let mut total = BatchAccumulator::new(k);
    for b in &batch_accs {
        total.merge(b);
    }
    let overall = total.terms(&eta_dl, ue_noise);
    let per_batch: Vec<Vec<HardeningTerms>> = batch_accs.iter().map(|b| b.terms(&eta_dl, ue_noise)).collect();

    let sem = |values: Vec<f64>| -> f64 {
        if values.len() < 2 {
            return f64::NAN;
        }
        let (_, s) = mean_and_sem(&values);
        s
    };
    Ok(overall
        .into_iter()
        .enumerate()
        .map(|(i, terms)| {
            let ds2_se = sem(per_batch.iter().map(|t| t[i].ds2).collect());
            let bu_se = sem(per_batch.iter().map(|t| t[i].bu).collect());
            let ui_se = (0..k)
                .map(|j| if j == i { 0.0 } else { sem(per_batch.iter().map(|t| t[i].ui[j]).collect()) })
                .collect();
            let sinr_se = sem(per_batch.iter().map(|t| t[i].sinr()).collect());
            MonteCarloTerms {
                sinr: terms.sinr(),
                terms,
                ds2_se,
                bu_se,
                ui_se,
                sinr_se,
            }
        })
        .collect())
}

/// Normalized variance `var(‖HΦh‖²) / E²(‖HΦh‖²)` for `h ~ CN(0, βI)`.
/// Zero when the effective channel norm is deterministic.
pub fn hardening_metric<R: Rng + ?Sized>(
    h: &CMat,
    phases: &RisPhaseConfig,
    beta: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if samples < 2 {
        return Err(Error::Config("hardening metric needs at least two samples".into()));
    }
    let hphi = scale_columns(h, phases.phasors())?;
    let norms: Vec<f64> = (0..samples)
        .map(|_| (&hphi * crate::geometry::draw_small_scale(beta, h.ncols(), rng)).norm_squared())
        .collect();
    let n = samples as f64;
    let mean = norms.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Ok(0.0);
    }
    let var = norms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var / (mean * mean))
}
