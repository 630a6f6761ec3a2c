//! Uplink training through multiple RIS configurations and LMMSE estimation
//! of the RIS-to-UE channels.
//!
//! The UEs repeat their pilots `Q` times while the surface cycles through the
//! training configurations `Φ_T^(q)`. Stacking the pilot-projected array
//! observations gives `ỹ_k = √η_k τ_p H̃_T h_k + Σ_j √η_j ρ_jk H̃_T h_j + ñ_k`
//! with `H̃_T = [HΦ_T^(1); …; HΦ_T^(Q)]`. The dominant right singular
//! subspace of `H̃_T` carries the estimable part of each channel; the
//! estimator works on the coordinates of `h_k` in that subspace, where
//! everything is diagonal.

use nalgebra::SVD;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{scale_columns, CMat, CVec, ChannelMatrix, UserLink};
use crate::phase::{PhaseSet, RisPhaseConfig};

/// Orthogonal real pilots (rows of a Sylvester–Hadamard matrix) and their
/// assignment to UEs.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    tau_p: usize,
    /// One `±1` sequence per UE.
    sequences: Vec<Vec<f64>>,
    assignment: Vec<usize>,
    /// Row-major `K x K` inner products `φ_jᵀ φ_k`.
    cross: Vec<f64>,
}

impl PilotBook {
    /// Assigns pilot `k mod τ_p` to UE `k`.
    pub fn orthogonal(tau_p: usize, n_users: usize) -> Result<Self> {
        if tau_p == 0 || !tau_p.is_power_of_two() {
            return Err(Error::UnsupportedPilotLength(tau_p));
        }
        if n_users == 0 {
            return Err(Error::Config("at least one UE is required".into()));
        }
        let assignment: Vec<usize> = (0..n_users).map(|k| k % tau_p).collect();
        let sequences: Vec<Vec<f64>> = assignment
            .iter()
            .map(|&row| {
                (0..tau_p)
                    .map(|col| if (row & col).count_ones() % 2 == 0 { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        let mut cross = vec![0.0; n_users * n_users];
        for j in 0..n_users {
            for k in 0..n_users {
                cross[j * n_users + k] = sequences[j].iter().zip(&sequences[k]).map(|(a, b)| a * b).sum();
            }
        }
        Ok(Self {
            tau_p,
            sequences,
            assignment,
            cross,
        })
    }

    pub fn tau_p(&self) -> usize {
        self.tau_p
    }

    pub fn n_users(&self) -> usize {
        self.assignment.len()
    }

    pub fn pilot_of(&self, k: usize) -> usize {
        self.assignment[k]
    }

    pub fn sequence(&self, k: usize) -> &[f64] {
        &self.sequences[k]
    }

    /// `ρ_{j,k} = φ_jᵀ φ_k`.
    pub fn rho(&self, j: usize, k: usize) -> f64 {
        self.cross[j * self.n_users() + k]
    }

    /// UEs sharing UE `k`'s pilot, `k` included.
    pub fn copilots(&self, k: usize) -> Vec<usize> {
        (0..self.n_users()).filter(|&j| self.rho(j, k) != 0.0).collect()
    }

    pub fn are_copilots(&self, j: usize, k: usize) -> bool {
        self.rho(j, k) != 0.0
    }
}

/// The `Q` random RIS configurations used during training.
#[derive(Debug, Clone)]
pub struct TrainingConfigs {
    configs: Vec<RisPhaseConfig>,
}

impl TrainingConfigs {
    /// Default count `Q = ⌈N_R / N_A⌉`, enough observables for `N_R` unknowns.
    pub fn default_count(n_active: usize, n_ris: usize) -> usize {
        n_ris.div_ceil(n_active)
    }

    pub fn draw<R: Rng + ?Sized>(
        n_active: usize,
        n_ris: usize,
        phase_set: &PhaseSet,
        count: Option<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        if n_active == 0 {
            return Err(Error::Config("N_A must be positive".into()));
        }
        let q = count.unwrap_or_else(|| Self::default_count(n_active, n_ris));
        if q * n_active < n_ris {
            return Err(Error::Config(format!(
                "{q} training configurations give {} observables for {n_ris} unknowns",
                q * n_active
            )));
        }
        let configs = (0..q).map(|_| RisPhaseConfig::random(phase_set, n_ris, rng)).collect();
        Ok(Self { configs })
    }

    pub fn from_configs(configs: Vec<RisPhaseConfig>) -> Result<Self> {
        if configs.is_empty() {
            return Err(Error::Empty("training configurations"));
        }
        let n = configs[0].len();
        if configs.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("training configurations differ in length".into()));
        }
        Ok(Self { configs })
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configs(&self) -> &[RisPhaseConfig] {
        &self.configs
    }
}

/// `H̃_T`: the blocks `H Φ_T^(q)` stacked vertically.
pub fn stacked_training_matrix(h: &CMat, configs: &TrainingConfigs) -> Result<CMat> {
    let (na, nr) = (h.nrows(), h.ncols());
    let mut out = CMat::zeros(na * configs.len(), nr);
    for (q, cfg) in configs.configs().iter().enumerate() {
        let block = scale_columns(h, cfg.phasors())?;
        out.view_mut((q * na, 0), (na, nr)).copy_from(&block);
    }
    Ok(out)
}

/// How the truncation rank is chosen from the singular values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyCriterion {
    /// Cumulative sum of singular values.
    #[default]
    SingularValues,
    /// Cumulative sum of squared singular values.
    Squared,
}

/// Truncated SVD `H̃_T ≈ Ũ Λ̃ Ṽᴴ`.
#[derive(Debug, Clone)]
pub struct TruncatedBasis {
    spectrum: Vec<f64>,
    numerical_rank: usize,
    u: CMat,
    retained: Vec<f64>,
    v: CMat,
}

impl TruncatedBasis {
    /// Keeps the smallest number of leading singular values whose cumulative
    /// sum reaches `energy_fraction` of the total. A fraction of 1 keeps the
    /// numerical rank.
    pub fn new(stacked: &CMat, energy_fraction: f64, criterion: EnergyCriterion) -> Result<Self> {
        if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "energy fraction must lie in (0, 1], got {energy_fraction}"
            )));
        }
        let (m, n) = stacked.shape();
        let svd = SVD::try_new(stacked.clone(), true, true, f64::EPSILON, 100_000)
            .ok_or_else(|| Error::Numeric(format!("SVD of the {m}x{n} training matrix did not converge")))?;
        let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
        let sigma_max = singular_values.first().copied().unwrap_or(0.0);
        let tol = m.max(n) as f64 * f64::EPSILON * sigma_max;
        let numerical_rank = singular_values.iter().filter(|&&s| s > tol).count();

        let weight = |s: f64| match criterion {
            EnergyCriterion::SingularValues => s,
            EnergyCriterion::Squared => s * s,
        };
        let total: f64 = singular_values.iter().map(|&s| weight(s)).sum();
        let target = energy_fraction * total;
        let mut rank = 0;
        let mut acc = 0.0;
        for &s in &singular_values {
            if acc >= target {
                break;
            }
            acc += weight(s);
            rank += 1;
        }
        let rank = rank.clamp(1.min(numerical_rank), numerical_rank);

        let u_full = svd.u.ok_or_else(|| Error::Numeric("SVD returned no U".into()))?;
        let vt_full = svd.v_t.ok_or_else(|| Error::Numeric("SVD returned no Vᴴ".into()))?;
        let u = u_full.columns(0, rank).into_owned();
        let v = vt_full.rows(0, rank).adjoint();
        Ok(Self {
            retained: singular_values[..rank].to_vec(),
            spectrum: singular_values,
            numerical_rank,
            u,
            v,
        })
    }

    /// Truncation rank `q`.
    pub fn rank(&self) -> usize {
        self.retained.len()
    }

    pub fn numerical_rank(&self) -> usize {
        self.numerical_rank
    }

    pub fn all_singular_values(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.retained
    }

    /// `Ũ`, `(Q·N_A) x q`.
    pub fn u(&self) -> &CMat {
        &self.u
    }

    /// `Ṽ`, `N_R x q`.
    pub fn v(&self) -> &CMat {
        &self.v
    }

    pub fn n_ris(&self) -> usize {
        self.v.nrows()
    }

    /// Sum of squared discarded singular values.
    pub fn discarded_energy(&self) -> f64 {
        self.spectrum[self.rank()..].iter().map(|s| s * s).sum()
    }

    /// Fraction of an isotropic channel's energy outside `span(Ṽ)`.
    pub fn discarded_dimension_fraction(&self) -> f64 {
        1.0 - self.rank() as f64 / self.n_ris() as f64
    }

    pub fn reconstruct(&self) -> CMat {
        let mut us = self.u.clone();
        for (mut col, &s) in us.column_iter_mut().zip(&self.retained) {
            col *= Complex64::from(s);
        }
        us * self.v.adjoint()
    }
}

/// Training configurations, their stacked matrix and its truncated SVD.
/// Built once per `(H, configs)` and shared by every fading draw.
#[derive(Debug, Clone)]
pub struct TrainingSetup {
    n_active: usize,
    configs: TrainingConfigs,
    stacked: CMat,
    basis: TruncatedBasis,
}

impl TrainingSetup {
    pub fn new(
        h: &ChannelMatrix,
        configs: TrainingConfigs,
        energy_fraction: f64,
        criterion: EnergyCriterion,
    ) -> Result<Self> {
        Self::from_matrix(h.matrix(), configs, energy_fraction, criterion)
    }

    pub fn from_matrix(
        h: &CMat,
        configs: TrainingConfigs,
        energy_fraction: f64,
        criterion: EnergyCriterion,
    ) -> Result<Self> {
        let stacked = stacked_training_matrix(h, &configs)?;
        let basis = TruncatedBasis::new(&stacked, energy_fraction, criterion)?;
        Ok(Self {
            n_active: h.nrows(),
            configs,
            stacked,
            basis,
        })
    }

    pub fn n_active(&self) -> usize {
        self.n_active
    }

    pub fn configs(&self) -> &TrainingConfigs {
        &self.configs
    }

    pub fn stacked(&self) -> &CMat {
        &self.stacked
    }

    pub fn basis(&self) -> &TruncatedBasis {
        &self.basis
    }
}

/// Simulates the `Q` training slots and returns the stacked pilot-projected
/// observation `ỹ_k` of every UE.
///
/// The noise is drawn as full `N_A x τ_p` matrices per slot and projected on
/// the pilots, so UEs sharing a pilot see the same noise.
pub fn simulate_uplink_training<R: Rng + ?Sized>(
    setup: &TrainingSetup,
    users: &[UserLink],
    pilots: &PilotBook,
    noise_var: f64,
    rng: &mut R,
) -> Result<Vec<CVec>> {
    check_users(users, pilots, setup.stacked.ncols())?;
    let tau_p = pilots.tau_p();
    let rows = setup.stacked.nrows();
    let received: Vec<CVec> = users
        .iter()
        .map(|u| &setup.stacked * u.channel.scale(u.eta_ul.sqrt()))
        .collect();

    // noise projected on each pilot row: rows x τ_p noise times φ
    let noise_scale = (noise_var / 2.0).sqrt();
    let mut noise = CMat::zeros(rows, tau_p);
    if noise_var > 0.0 {
        for z in noise.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z = Complex64::new(re * noise_scale, im * noise_scale);
        }
    }

    let mut out = Vec::with_capacity(users.len());
    for k in 0..users.len() {
        let phi = CVec::from_iterator(tau_p, pilots.sequence(k).iter().map(|&x| Complex64::from(x)));
        let mut y = &noise * phi;
        for (j, g) in received.iter().enumerate() {
            let rho = pilots.rho(j, k);
            if rho != 0.0 {
                y.axpy(Complex64::from(rho), g, Complex64::from(1.0));
            }
        }
        out.push(y);
    }
    Ok(out)
}

/// Closed form of the stacked observation for given per-UE projected noise
/// vectors `ñ_k`.
pub fn observation_closed_form(
    setup: &TrainingSetup,
    users: &[UserLink],
    pilots: &PilotBook,
    k: usize,
    projected_noise: &CVec,
) -> Result<CVec> {
    check_users(users, pilots, setup.stacked.ncols())?;
    let tau_p = pilots.tau_p() as f64;
    let mut y = &setup.stacked * users[k].channel.scale(users[k].eta_ul.sqrt() * tau_p);
    for (j, u) in users.iter().enumerate() {
        if j != k && pilots.rho(j, k) != 0.0 {
            y += &setup.stacked * u.channel.scale(u.eta_ul.sqrt() * pilots.rho(j, k));
        }
    }
    Ok(y + projected_noise)
}

fn check_users(users: &[UserLink], pilots: &PilotBook, n_ris: usize) -> Result<()> {
    if users.len() != pilots.n_users() {
        return Err(Error::Dimension(format!(
            "{} users but the pilot book covers {}",
            users.len(),
            pilots.n_users()
        )));
    }
    if let Some(u) = users.iter().find(|u| u.channel.len() != n_ris) {
        return Err(Error::Dimension(format!(
            "user channel has {} entries, RIS has {n_ris} elements",
            u.channel.len()
        )));
    }
    Ok(())
}

/// Per-UE LMMSE filter in the truncated subspace.
///
/// With `Λ̃` diagonal, both `R_ṽȳ` and `R_ȳȳ` are diagonal, so the filter is
/// a per-coordinate gain.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmseFilter {
    beta: f64,
    /// Diagonal of `R_ṽȳ R_ȳȳ⁻¹`.
    gains: Vec<f64>,
    /// Diagonal of `R_ṽȳ R_ȳȳ⁻¹ R_ṽȳᴴ` (variance of each estimated coordinate).
    estimate_power: Vec<f64>,
}

impl LmmseFilter {
    pub fn new(basis: &TruncatedBasis, users: &[UserLink], pilots: &PilotBook, noise_var: f64, k: usize) -> Result<Self> {
        if users.len() != pilots.n_users() || k >= users.len() {
            return Err(Error::Dimension(format!(
                "user index {k} with {} users and a {}-user pilot book",
                users.len(),
                pilots.n_users()
            )));
        }
        let tau_p = pilots.tau_p() as f64;
        let me = &users[k];
        let contamination: f64 = users
            .iter()
            .enumerate()
            .map(|(j, u)| u.eta_ul * u.beta * pilots.rho(j, k).powi(2))
            .sum();
        let mut denom: Vec<f64> = basis
            .singular_values()
            .iter()
            .map(|&s| contamination * s * s + noise_var * tau_p)
            .collect();
        if denom.iter().any(|&d| d <= 0.0) {
            let eps = 1e-12 * denom.iter().sum::<f64>();
            denom.iter_mut().for_each(|d| *d += eps);
        }
        let cross_scale = me.eta_ul.sqrt() * tau_p * me.beta;
        let mut gains = Vec::with_capacity(denom.len());
        let mut estimate_power = Vec::with_capacity(denom.len());
        for (&s, &d) in basis.singular_values().iter().zip(&denom) {
            let r = cross_scale * s;
            if d > 0.0 {
                gains.push(r / d);
                estimate_power.push(r * r / d);
            } else {
                gains.push(0.0);
                estimate_power.push(0.0);
            }
        }
        Ok(Self {
            beta: me.beta,
            gains,
            estimate_power,
        })
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn estimate_power(&self) -> &[f64] {
        &self.estimate_power
    }

    /// Returns `(ĥ_k, ṽ̂_k)`.
    pub fn apply(&self, basis: &TruncatedBasis, observation: &CVec) -> Result<(CVec, CVec)> {
        if observation.len() != basis.u().nrows() {
            return Err(Error::Dimension(format!(
                "observation has {} entries, basis expects {}",
                observation.len(),
                basis.u().nrows()
            )));
        }
        let mut coeffs = basis.u().ad_mul(observation);
        for (c, &g) in coeffs.iter_mut().zip(&self.gains) {
            *c *= g;
        }
        let estimate = basis.v() * &coeffs;
        Ok((estimate, coeffs))
    }

    /// `R_ĥĥ = Ṽ diag(estimate_power) Ṽᴴ`.
    pub fn covariance(&self, basis: &TruncatedBasis) -> CMat {
        let mut scaled = basis.v().clone();
        for (mut col, &p) in scaled.column_iter_mut().zip(&self.estimate_power) {
            col *= Complex64::from(p);
        }
        scaled * basis.v().adjoint()
    }

    /// Subspace MSE `E‖ṽ_k − ṽ̂_k‖² = β q − tr(R_ṽȳ R_ȳȳ⁻¹ R_ṽȳᴴ)`.
    pub fn subspace_mse(&self) -> f64 {
        self.beta * self.gains.len() as f64 - self.estimate_power.iter().sum::<f64>()
    }
}

/// Channel estimate of one UE with its covariance.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    pub estimate: CVec,
    pub covariance: CMat,
    pub coefficients: CVec,
}

pub fn lmmse_estimate(
    observation: &CVec,
    basis: &TruncatedBasis,
    users: &[UserLink],
    pilots: &PilotBook,
    noise_var: f64,
    k: usize,
) -> Result<ChannelEstimate> {
    let filter = LmmseFilter::new(basis, users, pilots, noise_var, k)?;
    let (estimate, coefficients) = filter.apply(basis, observation)?;
    Ok(ChannelEstimate {
        estimate,
        covariance: filter.covariance(basis),
        coefficients,
    })
}

pub fn estimate_covariance(
    basis: &TruncatedBasis,
    users: &[UserLink],
    pilots: &PilotBook,
    noise_var: f64,
    k: usize,
) -> Result<CMat> {
    Ok(LmmseFilter::new(basis, users, pilots, noise_var, k)?.covariance(basis))
}
