//! Monte-Carlo experiment driver.
//!
//! A [`Scenario`] holds everything that is fixed across drops: one RIS-aided
//! array per antenna kind (geometry, `H`, training configurations and the
//! truncated basis). [`run_trial`] places the UEs of one drop and evaluates
//! every enabled [`Mode`]; its randomness comes from ChaCha stream
//! `trial + 1` of the master seed, so records do not depend on scheduling.

mod baseline;
mod mode;
mod output;
mod stats;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baseline::{baseline_mmimo, LinkBudget, UserSe};
pub use mode::{Mode, PhaseMode, SystemKind};
pub use output::{write_results_csv, write_summary_json, write_trace_csv, RunInfo, RESULTS_HEADER};
pub use stats::{aggregate, empirical_cdf, merged_samples, quantile, ModeSummary, Summary};

use crate::config::{AntennaKind, CsiKind, ExperimentConfig, RisKind};
use crate::error::{Error, Result};
use crate::estimation::{simulate_uplink_training, LmmseFilter, PilotBook, TrainingConfigs, TrainingSetup};
use crate::geometry::{scale_columns, ChannelMatrix, CMat, CVec, SystemGeometry, UserLink};
use crate::optimizer::{optimize_phases, Objective, ObjectiveContext, OptimizationResult};
use crate::performance::{
    a_phi_matrix, equal_share_powers, hardening_terms, lb_terms_monte_carlo, se_shannon, sinr_from_composite,
    HardeningTerms, LbUser, MonteCarloTerms,
};
use crate::phase::{PhaseSet, RisPhaseConfig};

/// UE placement of one drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPlacement {
    /// Horizontal distance (m) from the RIS center.
    pub distance_m: f64,
    pub distance_3d_m: f64,
    /// Angle from the RIS boresight (degrees).
    pub angle_deg: f64,
    pub beta: f64,
}

impl UserPlacement {
    pub fn position(&self) -> [f64; 2] {
        let a = self.angle_deg.to_radians();
        [self.distance_m * a.cos(), self.distance_m * a.sin()]
    }
}

/// Places `config.users.n_users` UEs uniformly in angle and in horizontal
/// distance.
pub fn drop_users<R: Rng + ?Sized>(config: &ExperimentConfig, rng: &mut R) -> Result<Vec<UserPlacement>> {
    let u = &config.users;
    if !(u.min_distance_m > 0.0 && u.min_distance_m < u.max_distance_m) {
        return Err(Error::Config("need 0 < min_distance_m < max_distance_m".into()));
    }
    let params = config.channel_params();
    let dh = config.system.bs_height_m - config.system.ue_height_m;
    Ok((0..u.n_users)
        .map(|_| {
            let angle_deg = rng.random_range(-u.drop_half_angle_deg..=u.drop_half_angle_deg);
            let distance_m = rng.random_range(u.min_distance_m..=u.max_distance_m);
            let distance_3d_m = distance_m.hypot(dh);
            UserPlacement {
                distance_m,
                distance_3d_m,
                angle_deg,
                beta: params.beta(distance_3d_m),
            }
        })
        .collect())
}

/// One RIS-aided array, fixed across drops.
#[derive(Debug, Clone)]
pub struct ArrayScenario {
    pub kind: AntennaKind,
    pub channel: ChannelMatrix,
    pub training: TrainingSetup,
}

impl ArrayScenario {
    pub fn build<R: Rng + ?Sized>(config: &ExperimentConfig, kind: AntennaKind, rng: &mut R) -> Result<Self> {
        let s = &config.system;
        let lambda = config.wavelength();
        let geometry = SystemGeometry::build(
            s.n_active,
            s.n_ris,
            config.active_spacing_m(kind)?,
            s.ris_spacing_wavelengths * lambda,
            s.separation_wavelengths * lambda,
            lambda,
        )?;
        let channel = ChannelMatrix::build(
            Arc::new(geometry),
            &config.array_pattern(kind)?,
            &config.ris_pattern(),
            s.reflection_efficiency,
        )?;
        let set = PhaseSet::new(config.training.phase_bits)?;
        let configs = TrainingConfigs::draw(s.n_active, s.n_ris, &set, Some(config.training_configs()), rng)?;
        let training = TrainingSetup::new(&channel, configs, config.training.energy_fraction, config.training.energy_criterion)?;
        Ok(Self { kind, channel, training })
    }

    pub fn rank(&self) -> usize {
        self.training.basis().rank()
    }
}

/// Everything shared by the drops of an experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub link: LinkBudget,
    pub pilots: PilotBook,
    pub phase_set: PhaseSet,
    pub arrays: Vec<ArrayScenario>,
    pub modes: Vec<Mode>,
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

impl Scenario {
    /// Builds the arrays from stream 0 of `seed`.
    pub fn new(config: ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, 0);
        let arrays = config
            .experiment
            .antennas
            .iter()
            .map(|&kind| ArrayScenario::build(&config, kind, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let link = LinkBudget {
            noise: config.noise_power_w(),
            p_max: config.p_max_w(),
            eta_ul: config.training.uplink_power_w,
            prelog_pcsi: config.downlink.pcsi_prelog,
            prelog_icsi: config.prelog_icsi(),
        };
        Ok(Self {
            pilots: PilotBook::orthogonal(config.training.pilot_length, config.users.n_users)?,
            phase_set: PhaseSet::new(config.training.phase_bits)?,
            modes: enabled_modes(&config),
            link,
            arrays,
            seed,
            config,
        })
    }

    pub fn array(&self, kind: AntennaKind) -> Option<&ArrayScenario> {
        self.arrays.iter().find(|a| a.kind == kind)
    }
}

/// Modes evaluated by [`run_trial`], in output order. The lower bound is
/// only defined for a Φ that does not depend on the channel realization,
/// so optimized modes report PCSI and UB only.
pub fn enabled_modes(config: &ExperimentConfig) -> Vec<Mode> {
    let e = &config.experiment;
    let mut modes = Vec::new();
    for &antenna in &e.antennas {
        for &ris in &e.ris_modes {
            let phase_modes: Vec<PhaseMode> = match ris {
                RisKind::Random => vec![PhaseMode::Random],
                RisKind::Optimized => config.optimizer.objectives.iter().map(|&o| PhaseMode::Optimized(o)).collect(),
            };
            for phases in phase_modes {
                for &csi in &e.csi_modes {
                    if matches!(phases, PhaseMode::Optimized(_)) && csi == CsiKind::Lb {
                        continue;
                    }
                    modes.push(Mode::ris(antenna, phases, csi));
                }
            }
        }
    }
    if e.baseline {
        modes.extend(e.csi_modes.iter().map(|&c| Mode::baseline(c)));
    }
    modes
}

/// Per-user SE of one mode in one drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: Mode,
    pub se: Vec<f64>,
    /// Monte-Carlo standard error of each entry of `se` (zero for closed forms).
    pub std_error: Vec<f64>,
}

/// Algorithm statistics of one optimized mode over the draws of a drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSummary {
    pub mode: Mode,
    pub runs: usize,
    pub mean_sweeps: f64,
    pub max_sweeps: usize,
    pub converged: usize,
    pub mean_initial: f64,
    pub mean_final: f64,
    /// Objective after each sweep of the first draw, starting value first.
    pub first_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub users: Vec<UserPlacement>,
    /// Truncation rank `q` per antenna kind.
    pub ranks: Vec<(AntennaKind, usize)>,
    pub results: Vec<ModeResult>,
    pub optimizer: Vec<OptimizerSummary>,
}

impl TrialRecord {
    pub fn result(&self, mode: &Mode) -> Option<&ModeResult> {
        self.results.iter().find(|r| &r.mode == mode)
    }

    pub fn rank(&self, kind: AntennaKind) -> Option<usize> {
        self.ranks.iter().find(|(k, _)| *k == kind).map(|(_, q)| *q)
    }
}

/// Objective values after each sweep, starting value first.
pub fn sweep_values(result: &OptimizationResult) -> Vec<f64> {
    let mut out = vec![result.initial_value];
    let mut sweep = 0;
    for t in &result.trace {
        if t.sweep != sweep {
            sweep = t.sweep;
            out.push(t.after);
        } else if let Some(last) = out.last_mut() {
            *last = t.after;
        }
    }
    out
}

#[derive(Default)]
struct OptimizerTally {
    runs: usize,
    sweeps: usize,
    max_sweeps: usize,
    converged: usize,
    initial: f64,
    fin: f64,
    first_trace: Vec<f64>,
}

impl OptimizerTally {
    fn add(&mut self, r: &OptimizationResult) {
        if self.runs == 0 {
            self.first_trace = sweep_values(r);
        }
        self.runs += 1;
        self.sweeps += r.sweeps;
        self.max_sweeps = self.max_sweeps.max(r.sweeps);
        self.converged += usize::from(r.converged);
        self.initial += r.initial_value;
        self.fin += r.final_value;
    }

    fn finish(self, mode: Mode) -> OptimizerSummary {
        let n = self.runs.max(1) as f64;
        OptimizerSummary {
            mode,
            runs: self.runs,
            mean_sweeps: self.sweeps as f64 / n,
            max_sweeps: self.max_sweeps,
            converged: self.converged,
            mean_initial: self.initial / n,
            mean_final: self.fin / n,
            first_trace: self.first_trace,
        }
    }
}

/// `E‖HΦ ĥ_k‖² = Σ_i p_i ‖HΦ ṽ_i‖²` for the LMMSE estimate of one UE.
pub fn mean_estimate_beam_power(hphi: &CMat, training: &TrainingSetup, filter: &LmmseFilter) -> f64 {
    let projected = hphi * training.basis().v();
    projected
        .column_iter()
        .zip(filter.estimate_power())
        .map(|(c, p)| p * c.norm_squared())
        .sum()
}

fn per_draw_sinr(hphi: &CMat, channels: &[CVec], beams_from: &[CVec], powers: Option<&[f64]>, p_max: f64, noise: &[f64]) -> Result<Vec<f64>> {
    let beams: Vec<CVec> = beams_from.iter().map(|x| (hphi * x).conjugate()).collect();
    let composite: Vec<CVec> = channels.iter().map(|h| hphi * h).collect();
    let owned;
    let powers = match powers {
        Some(p) => p,
        None => {
            let norms: Vec<f64> = beams.iter().map(|w| w.norm_squared()).collect();
            owned = equal_share_powers(p_max, &norms)?;
            &owned
        }
    };
    Ok(sinr_from_composite(&composite, &beams, powers, noise))
}

struct ArrayOutcome {
    results: Vec<ModeResult>,
    optimizer: Vec<OptimizerSummary>,
}

fn run_array<R: Rng + ?Sized>(
    scenario: &Scenario,
    array: &ArrayScenario,
    placements: &[UserPlacement],
    rng: &mut R,
) -> Result<ArrayOutcome> {
    let cfg = &scenario.config;
    let link = &scenario.link;
    let k = placements.len();
    let n_ris = array.channel.n_ris();
    let h = array.channel.matrix();
    let basis = array.training.basis();
    let noise = vec![link.noise; k];
    let draws = cfg.experiment.draws;

    let modes: Vec<Mode> = scenario.modes.iter().copied().filter(|m| m.antenna() == Some(array.kind)).collect();
    if modes.is_empty() {
        return Ok(ArrayOutcome {
            results: vec![],
            optimizer: vec![],
        });
    }
    let mut users: Vec<UserLink> = placements
        .iter()
        .enumerate()
        .map(|(i, p)| UserLink::new(p.position(), p.beta, n_ris, scenario.pilots.pilot_of(i), link.eta_ul))
        .collect();
    let filters: Vec<LmmseFilter> = (0..k)
        .map(|i| LmmseFilter::new(basis, &users, &scenario.pilots, link.noise, i))
        .collect::<Result<_>>()?;

    let random_phases = RisPhaseConfig::random(&scenario.phase_set, n_ris, rng);
    let hphi_random = scale_columns(h, random_phases.phasors())?;
    let eta_random = equal_share_powers(
        link.p_max,
        &filters.iter().map(|f| mean_estimate_beam_power(&hphi_random, &array.training, f)).collect::<Vec<_>>(),
    )?;

    let want = |phases: PhaseMode, csi: CsiKind| modes.contains(&Mode::ris(array.kind, phases, csi));
    let objectives: Vec<Objective> = modes
        .iter()
        .filter_map(|m| match m.system {
            SystemKind::Ris {
                phases: PhaseMode::Optimized(o),
                ..
            } => Some(o),
            _ => None,
        })
        .fold(Vec::new(), |mut acc, o| {
            if !acc.contains(&o) {
                acc.push(o);
            }
            acc
        });

    // samples[mode index][user]
    let mut samples: Vec<Vec<Vec<f64>>> = vec![vec![Vec::with_capacity(draws); k]; modes.len()];
    let slot = |m: Mode| modes.iter().position(|x| *x == m).expect("mode enabled");
    let mut tallies: Vec<(Mode, OptimizerTally)> = Vec::new();
    let needs_draws = modes.iter().any(|m| m.csi != CsiKind::Lb);

    if needs_draws {
        for _ in 0..draws {
            users.iter_mut().for_each(|u| u.redraw(rng));
            let channels: Vec<CVec> = users.iter().map(|u| u.channel.clone()).collect();
            let any_ub = modes.iter().any(|m| m.csi == CsiKind::Ub);
            let estimates: Vec<CVec> = if any_ub {
                let obs = simulate_uplink_training(&array.training, &users, &scenario.pilots, link.noise, rng)?;
                filters
                    .iter()
                    .zip(&obs)
                    .map(|(f, y)| f.apply(basis, y).map(|(e, _)| e))
                    .collect::<Result<_>>()?
            } else {
                Vec::new()
            };

            if want(PhaseMode::Random, CsiKind::Pcsi) {
                let s = per_draw_sinr(&hphi_random, &channels, &channels, None, link.p_max, &noise)?;
                let i = slot(Mode::ris(array.kind, PhaseMode::Random, CsiKind::Pcsi));
                for (u, g) in s.into_iter().enumerate() {
                    samples[i][u].push(se_shannon(g, link.prelog_pcsi));
                }
            }
            if want(PhaseMode::Random, CsiKind::Ub) {
                let s = per_draw_sinr(&hphi_random, &channels, &estimates, Some(&eta_random), link.p_max, &noise)?;
                let i = slot(Mode::ris(array.kind, PhaseMode::Random, CsiKind::Ub));
                for (u, g) in s.into_iter().enumerate() {
                    samples[i][u].push(se_shannon(g, link.prelog_icsi));
                }
            }
            for &obj in &objectives {
                let phases = PhaseMode::Optimized(obj);
                for csi in [CsiKind::Pcsi, CsiKind::Ub] {
                    if !want(phases, csi) {
                        continue;
                    }
                    let mode = Mode::ris(array.kind, phases, csi);
                    let known = if csi == CsiKind::Pcsi { &channels } else { &estimates };
                    let ctx = ObjectiveContext::new(h, known, random_phases.clone())?;
                    let res = optimize_phases(ctx, obj, cfg.optimizer.rel_tol, cfg.optimizer.max_sweeps)?;
                    let hphi = scale_columns(h, res.phases.phasors())?;
                    let s = if csi == CsiKind::Pcsi {
                        per_draw_sinr(&hphi, &channels, &channels, None, link.p_max, &noise)?
                    } else {
                        let avg: Vec<f64> = filters
                            .iter()
                            .map(|f| mean_estimate_beam_power(&hphi, &array.training, f))
                            .collect();
                        let eta = equal_share_powers(link.p_max, &avg)?;
                        per_draw_sinr(&hphi, &channels, &estimates, Some(&eta), link.p_max, &noise)?
                    };
                    let prelog = if csi == CsiKind::Pcsi { link.prelog_pcsi } else { link.prelog_icsi };
                    let i = slot(mode);
                    for (u, g) in s.into_iter().enumerate() {
                        samples[i][u].push(se_shannon(g, prelog));
                    }
                    match tallies.iter_mut().find(|(m, _)| *m == mode) {
                        Some((_, t)) => t.add(&res),
                        None => {
                            let mut t = OptimizerTally::default();
                            t.add(&res);
                            tallies.push((mode, t));
                        }
                    }
                }
            }
        }
    }

    let mut results = Vec::with_capacity(modes.len());
    for (i, &mode) in modes.iter().enumerate() {
        if mode.csi == CsiKind::Lb {
            let se = random_phase_lb(h, &random_phases, array, &filters, &users, &eta_random, scenario)?
                .iter()
                .map(|t| se_shannon(t.sinr(), link.prelog_icsi))
                .collect();
            results.push(ModeResult {
                mode,
                se,
                std_error: vec![0.0; k],
            });
        } else {
            let s = baseline::summarize(&samples[i]);
            results.push(ModeResult {
                mode,
                se: s.se,
                std_error: s.std_error,
            });
        }
    }
    Ok(ArrayOutcome {
        results,
        optimizer: tallies.into_iter().map(|(m, t)| t.finish(m)).collect(),
    })
}

fn random_phase_lb(
    h: &CMat,
    phases: &RisPhaseConfig,
    array: &ArrayScenario,
    filters: &[LmmseFilter],
    users: &[UserLink],
    eta: &[f64],
    scenario: &Scenario,
) -> Result<Vec<HardeningTerms>> {
    let a = a_phi_matrix(h, phases)?;
    let covs: Vec<CMat> = filters.iter().map(|f| f.covariance(array.training.basis())).collect();
    let lb_users: Vec<LbUser> = users
        .iter()
        .enumerate()
        .map(|(i, u)| LbUser {
            covariance: &covs[i],
            beta: u.beta,
            eta_dl: eta[i],
            eta_ul: u.eta_ul,
            noise: scenario.link.noise,
        })
        .collect();
    hardening_terms(&a, &lb_users, &scenario.pilots)
}

/// Runs drop `trial`. Deterministic in `(scenario.seed, trial)`.
pub fn run_trial(scenario: &Scenario, trial: usize) -> Result<TrialRecord> {
    run_trial_inner(scenario, trial).map_err(|e| e.in_trial(trial))
}

fn run_trial_inner(scenario: &Scenario, trial: usize) -> Result<TrialRecord> {
    let mut rng = stream(scenario.seed, trial as u64 + 1);
    let users = drop_users(&scenario.config, &mut rng)?;
    let mut results = Vec::with_capacity(scenario.modes.len());
    let mut optimizer = Vec::new();
    for array in &scenario.arrays {
        let out = run_array(scenario, array, &users, &mut rng)?;
        results.extend(out.results);
        optimizer.extend(out.optimizer);
    }
    let base_csi: Vec<CsiKind> = scenario
        .modes
        .iter()
        .filter(|m| m.system == SystemKind::Baseline)
        .map(|m| m.csi)
        .collect();
    if !base_csi.is_empty() {
        let betas: Vec<f64> = users.iter().map(|u| u.beta).collect();
        let base = baseline_mmimo(
            scenario.config.system.n_active,
            &betas,
            &scenario.pilots,
            &scenario.link,
            &base_csi,
            scenario.config.experiment.draws,
            &mut rng,
        )?;
        results.extend(base.into_iter().map(|(c, s)| ModeResult {
            mode: Mode::baseline(c),
            se: s.se,
            std_error: s.std_error,
        }));
    }
    // keep the configured mode order
    results.sort_by_key(|r| scenario.modes.iter().position(|m| *m == r.mode));
    Ok(TrialRecord {
        trial,
        users,
        ranks: scenario.arrays.iter().map(|a| (a.kind, a.rank())).collect(),
        results,
        optimizer,
    })
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Err(Error::Config("worker count must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Runs drops `0..trials` on `workers` threads (all available when `None`).
/// The records do not depend on the number of workers.
pub fn run_experiment(scenario: &Scenario, workers: Option<usize>) -> Result<Vec<TrialRecord>> {
    let trials = scenario.config.experiment.trials;
    let work = || -> Result<Vec<TrialRecord>> { (0..trials).into_par_iter().map(|t| run_trial(scenario, t)).collect() };
    match workers {
        Some(n) => with_workers(n, work)?,
        None => work(),
    }
}

/// One closed-form vs Monte-Carlo comparison of a hardening-bound term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LbCheck {
    pub user: usize,
    /// `ds2`, `bu` or `ui[j]`.
    pub term: String,
    pub closed_form: f64,
    pub monte_carlo: f64,
    pub std_error: f64,
}

impl LbCheck {
    pub fn relative_error(&self) -> f64 {
        (self.monte_carlo - self.closed_form).abs() / self.closed_form.abs()
    }

    pub fn sigmas(&self) -> f64 {
        (self.monte_carlo - self.closed_form).abs() / self.std_error
    }
}

/// Closed-form hardening terms of drop 0 (first antenna kind, random Φ)
/// next to their Monte-Carlo estimates from `draws` simulated realizations.
pub fn validate_lb(scenario: &Scenario, draws: usize) -> Result<Vec<LbCheck>> {
    let array = scenario.arrays.first().ok_or(Error::Empty("antenna kinds"))?;
    let mut rng = stream(scenario.seed, 1);
    let placements = drop_users(&scenario.config, &mut rng)?;
    let n_ris = array.channel.n_ris();
    let link = &scenario.link;
    let mut users: Vec<UserLink> = placements
        .iter()
        .enumerate()
        .map(|(i, p)| UserLink::new(p.position(), p.beta, n_ris, scenario.pilots.pilot_of(i), link.eta_ul))
        .collect();
    let k = users.len();
    let basis = array.training.basis();
    let filters: Vec<LmmseFilter> = (0..k)
        .map(|i| LmmseFilter::new(basis, &users, &scenario.pilots, link.noise, i))
        .collect::<Result<_>>()?;
    let phases = RisPhaseConfig::random(&scenario.phase_set, n_ris, &mut rng);
    let h = array.channel.matrix();
    let hphi = scale_columns(h, phases.phasors())?;
    let eta = equal_share_powers(
        link.p_max,
        &filters.iter().map(|f| mean_estimate_beam_power(&hphi, &array.training, f)).collect::<Vec<_>>(),
    )?;
    for (u, e) in users.iter_mut().zip(&eta) {
        u.eta_dl = *e;
    }
    let closed = random_phase_lb(h, &phases, array, &filters, &users, &eta, scenario)?;
    let mc: Vec<MonteCarloTerms> = lb_terms_monte_carlo(
        h,
        &phases,
        &array.training,
        &users,
        &scenario.pilots,
        link.noise,
        &vec![link.noise; k],
        draws,
        &mut rng,
    )?;
    let mut out = Vec::new();
    for (i, (c, m)) in closed.iter().zip(&mc).enumerate() {
        out.push(LbCheck {
            user: i,
            term: "ds2".into(),
            closed_form: c.ds2,
            monte_carlo: m.terms.ds2,
            std_error: m.ds2_se,
        });
        out.push(LbCheck {
            user: i,
            term: "bu".into(),
            closed_form: c.bu,
            monte_carlo: m.terms.bu,
            std_error: m.bu_se,
        });
        for j in (0..k).filter(|&j| j != i) {
            out.push(LbCheck {
                user: i,
                term: format!("ui[{j}]"),
                closed_form: c.ui[j],
                monte_carlo: m.terms.ui[j],
                std_error: m.ui_se[j],
            });
        }
    }
    Ok(out)
}

/// Coordinate descent on drop 0 with the first fading draw of each UE, started
/// from a random Φ, once per objective.
pub fn optimize_demo(scenario: &Scenario, kind: AntennaKind) -> Result<Vec<(Objective, OptimizationResult)>> {
    let array = scenario.array(kind).ok_or(Error::Empty("antenna kind"))?;
    let mut rng = stream(scenario.seed, 1);
    let placements = drop_users(&scenario.config, &mut rng)?;
    let n_ris = array.channel.n_ris();
    let start = RisPhaseConfig::random(&scenario.phase_set, n_ris, &mut rng);
    let channels: Vec<CVec> = placements
        .iter()
        .map(|p| crate::geometry::draw_small_scale(p.beta, n_ris, &mut rng))
        .collect();
    let opt = &scenario.config.optimizer;
    opt.objectives
        .iter()
        .map(|&o| {
            let ctx = ObjectiveContext::new(array.channel.matrix(), &channels, start.clone())?;
            Ok((o, optimize_phases(ctx, o, opt.rel_tol, opt.max_sweeps)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::performance::mean_beamformer_power;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_toml_with_overrides(
            "",
            &[
                "n_active=4".into(),
                "n_ris=16".into(),
                "n_users=3".into(),
                "pilot_length=2".into(),
                "trials=3".into(),
                "draws=6".into(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn drops_stay_in_the_sector_and_range() {
        let config = ExperimentConfig::default();
        let mut rng = stream(3, 9);
        let mut sum = 0.0;
        let mut n = 0usize;
        for _ in 0..12_500 {
            for u in drop_users(&config, &mut rng).unwrap() {
                assert!(u.angle_deg.abs() <= 60.0);
                assert!((10.0..=400.0).contains(&u.distance_m));
                assert!((u.distance_3d_m - u.distance_m.hypot(8.5)).abs() < 1e-9);
                assert_eq!(u.beta, config.channel_params().beta(u.distance_3d_m));
                sum += u.distance_m;
                n += 1;
            }
        }
        assert_eq!(n, 100_000);
        assert!((sum / n as f64 - 205.0).abs() < 0.01 * 205.0);
    }

    #[test]
    fn mode_enumeration() {
        let modes = enabled_modes(&ExperimentConfig::default());
        // 2 antennas x (random: 3 + two objectives x 2) + 3 baseline
        assert_eq!(modes.len(), 2 * (3 + 4) + 3);
        assert!(!modes.iter().any(|m| matches!(
            m.system,
            SystemKind::Ris {
                phases: PhaseMode::Optimized(_),
                ..
            }
        ) && m.csi == CsiKind::Lb));
        let mut sorted = modes.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), modes.len());
    }

    #[test]
    fn trials_are_deterministic_and_complete() {
        let scenario = Scenario::new(small_config(), 17).unwrap();
        let a = run_trial(&scenario, 2).unwrap();
        let b = run_trial(&Scenario::new(small_config(), 17).unwrap(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, run_trial(&scenario, 1).unwrap());
        assert_eq!(a.results.len(), scenario.modes.len());
        for (r, m) in a.results.iter().zip(&scenario.modes) {
            assert_eq!(&r.mode, m);
            assert_eq!(r.se.len(), 3);
            assert!(r.se.iter().all(|&s| s >= 0.0 && s.is_finite()));
        }
        assert_eq!(a.optimizer.len(), 8);
    }

    #[test]
    fn worker_count_does_not_change_records() {
        let scenario = Scenario::new(small_config(), 5).unwrap();
        let one = run_experiment(&scenario, Some(1)).unwrap();
        let three = run_experiment(&scenario, Some(3)).unwrap();
        assert_eq!(one, three);
        assert_eq!(one.iter().map(|r| r.trial).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(with_workers(0, || ()).is_err());
    }

    #[test]
    fn average_beam_power_matches_trace_form() {
        let scenario = Scenario::new(small_config(), 8).unwrap();
        let array = &scenario.arrays[0];
        let mut rng = stream(8, 99);
        let drops = drop_users(&scenario.config, &mut rng).unwrap();
        let users: Vec<UserLink> = drops
            .iter()
            .enumerate()
            .map(|(i, p)| UserLink::new(p.position(), p.beta, 16, scenario.pilots.pilot_of(i), 0.8))
            .collect();
        let phases = RisPhaseConfig::random(&scenario.phase_set, 16, &mut rng);
        let h = array.channel.matrix();
        let hphi = scale_columns(h, phases.phasors()).unwrap();
        let a = a_phi_matrix(h, &phases).unwrap();
        for k in 0..3 {
            let f = LmmseFilter::new(array.training.basis(), &users, &scenario.pilots, scenario.link.noise, k).unwrap();
            let direct = mean_estimate_beam_power(&hphi, &array.training, &f);
            let trace = mean_beamformer_power(&a, &f.covariance(array.training.basis()));
            assert!((direct - trace).abs() < 1e-9 * trace, "{direct} vs {trace}");
        }
    }

    #[test]
    fn optimized_phases_beat_their_random_start() {
        let config = ExperimentConfig::from_toml_with_overrides(
            "",
            &[
                "trials=4".into(),
                "draws=5".into(),
                "objectives=[\"f1\"]".into(),
                "csi_modes=[\"pcsi\"]".into(),
                "antennas=[\"directional\"]".into(),
                "baseline=false".into(),
            ],
        )
        .unwrap();
        let scenario = Scenario::new(config, 21).unwrap();
        let random = Mode::ris(AntennaKind::Directional, PhaseMode::Random, CsiKind::Pcsi);
        let opt = Mode::ris(AntennaKind::Directional, PhaseMode::Optimized(Objective::F1), CsiKind::Pcsi);
        for rec in run_experiment(&scenario, Some(1)).unwrap() {
            let median = |m: &Mode| {
                let mut v = rec.result(m).unwrap().se.clone();
                v.sort_by(f64::total_cmp);
                v[v.len() / 2]
            };
            assert!(median(&opt) >= median(&random), "trial {}", rec.trial);
            let s = &rec.optimizer[0];
            assert!(s.mean_final <= s.mean_initial);
            // sweep ends straddle a full recompute, so allow rounding
            assert!(s.first_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{:?}", s.first_trace);
        }
    }

    #[test]
    fn lower_bound_checks_agree() {
        let scenario = Scenario::new(small_config(), 2).unwrap();
        let checks = validate_lb(&scenario, 20_000).unwrap();
        // ds2, bu and two interference terms per user
        assert_eq!(checks.len(), 3 * 4);
        for c in &checks {
            assert!(c.relative_error() < 0.1, "{c:?}");
        }
    }

    #[test]
    fn trial_errors_name_the_trial() {
        let mut config = small_config();
        config.experiment.draws = 1;
        let mut scenario = Scenario::new(config, 1).unwrap();
        // a zero uplink power makes every estimate vanish
        scenario.link.eta_ul = 0.0;
        let err = run_trial(&scenario, 4).unwrap_err();
        assert!(matches!(err, Error::Trial { trial: 4, .. }), "{err}");
    }
}
