//! RIS phase optimization by coordinate descent over the quantized phase set.
//!
//! The objectives penalize the cross-correlation of the composite channels
//! `h̄_k = H Φ h_k`, i.e. the off-diagonal entries of the Gram matrix of
//! `S(Φ) = H Φ H̄`. Changing a single phase `φ_i → φ'` moves every column of
//! `S` along `H[:, i]`:
//!
//! ```text
//! s'_k = s_k + δ b_k a,     δ = φ' − φ_i,  a = H[:, i],  b_k = h_k[i]
//! ```
//!
//! so each Gram entry is updated in `O(1)` once `c_k = aᴴ s_k` is known, and
//! one exhaustive coordinate step costs `O(N_A K + L K²)` for `L` levels.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CMat, CVec};
use crate::phase::RisPhaseConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Sum of absolute cross-correlations.
    #[default]
    F1,
    /// Cross-correlations normalized by the total composite channel energy.
    F2,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::F1 => "f1",
            Objective::F2 => "f2",
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(Objective::F1),
            "f2" => Ok(Objective::F2),
            other => Err(Error::Config(format!("unknown objective `{other}` (expected f1 or f2)"))),
        }
    }
}

/// State of one optimization run: channels, current phases and the cached
/// `S(Φ)` and Gram matrix.
#[derive(Debug, Clone)]
pub struct ObjectiveContext {
    n_active: usize,
    n_ris: usize,
    n_users: usize,
    /// `H[:, i]` stored contiguously per RIS element.
    h_cols: Vec<Complex64>,
    /// `‖H[:, i]‖²`.
    h_col_norms: Vec<f64>,
    /// `h_k[i]` stored contiguously per RIS element.
    hbar_rows: Vec<Complex64>,
    phases: RisPhaseConfig,
    /// Columns `s_k`, contiguous per user.
    s: Vec<Complex64>,
    /// `s_kᴴ s_j`, row-major `K x K`.
    gram: Vec<Complex64>,
}

impl ObjectiveContext {
    /// `user_channels` are the columns of `H̄` (true channels or estimates).
    pub fn new(h: &CMat, user_channels: &[CVec], phases: RisPhaseConfig) -> Result<Self> {
        let (n_active, n_ris) = h.shape();
        if phases.len() != n_ris {
            return Err(Error::Dimension(format!(
                "{} phases for {n_ris} RIS elements",
                phases.len()
            )));
        }
        if user_channels.is_empty() {
            return Err(Error::Empty("user channels"));
        }
        if let Some(c) = user_channels.iter().find(|c| c.len() != n_ris) {
            return Err(Error::Dimension(format!(
                "user channel has {} entries, RIS has {n_ris}",
                c.len()
            )));
        }
        let n_users = user_channels.len();
        let mut h_cols = Vec::with_capacity(n_active * n_ris);
        let mut h_col_norms = Vec::with_capacity(n_ris);
        for col in h.column_iter() {
            h_cols.extend(col.iter().copied());
            h_col_norms.push(col.norm_squared());
        }
        let mut hbar_rows = Vec::with_capacity(n_ris * n_users);
        for i in 0..n_ris {
            hbar_rows.extend(user_channels.iter().map(|c| c[i]));
        }
        let mut ctx = Self {
            n_active,
            n_ris,
            n_users,
            h_cols,
            h_col_norms,
            hbar_rows,
            phases,
            s: vec![Complex64::new(0.0, 0.0); n_active * n_users],
            gram: vec![Complex64::new(0.0, 0.0); n_users * n_users],
        };
        ctx.recompute();
        Ok(ctx)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_ris(&self) -> usize {
        self.n_ris
    }

    pub fn phases(&self) -> &RisPhaseConfig {
        &self.phases
    }

    pub fn into_phases(self) -> RisPhaseConfig {
        self.phases
    }

    fn h_col(&self, i: usize) -> &[Complex64] {
        &self.h_cols[i * self.n_active..(i + 1) * self.n_active]
    }

    fn hbar_row(&self, i: usize) -> &[Complex64] {
        &self.hbar_rows[i * self.n_users..(i + 1) * self.n_users]
    }

    fn s_col(&self, k: usize) -> &[Complex64] {
        &self.s[k * self.n_active..(k + 1) * self.n_active]
    }

    /// Rebuilds `S(Φ)` and the Gram matrix from scratch.
    pub fn recompute(&mut self) {
        let (na, k) = (self.n_active, self.n_users);
        let mut s = vec![Complex64::new(0.0, 0.0); na * k];
        for i in 0..self.n_ris {
            let phi = self.phases.phasors()[i];
            let col = self.h_col(i);
            for (u, &b) in self.hbar_row(i).iter().enumerate() {
                let coef = phi * b;
                for (dst, &a) in s[u * na..(u + 1) * na].iter_mut().zip(col) {
                    *dst += a * coef;
                }
            }
        }
        self.s = s;
        for u in 0..k {
            for v in 0..k {
                self.gram[u * k + v] = inner(self.s_col(u), self.s_col(v));
            }
        }
    }

    /// `S(Φ) = H Φ H̄` as an `N_A x K` matrix.
    pub fn s_matrix(&self) -> CMat {
        CMat::from_column_slice(self.n_active, self.n_users, &self.s)
    }

    /// Composite channel `h̄_k`.
    pub fn composite(&self, k: usize) -> CVec {
        CVec::from_column_slice(self.s_col(k))
    }

    /// Gram matrix `S(Φ)ᴴ S(Φ)`: `(k, j)` entry `h̄_kᴴ h̄_j`.
    pub fn gram_matrix(&self) -> CMat {
        let k = self.n_users;
        CMat::from_fn(k, k, |r, c| self.gram[r * k + c])
    }

    pub fn f1(&self) -> f64 {
        f1_of(&self.gram, self.n_users)
    }

    pub fn f2(&self) -> Result<f64> {
        let energy = energy_of(&self.gram, self.n_users);
        if energy > 0.0 {
            Ok(self.f1() / energy)
        } else {
            Err(Error::DegenerateChannel)
        }
    }

    pub fn value(&self, objective: Objective) -> Result<f64> {
        match objective {
            Objective::F1 => Ok(self.f1()),
            Objective::F2 => self.f2(),
        }
    }

    /// Objective value with level `level` at element `i`, others fixed.
    /// `c` holds `H[:, i]ᴴ s_k` for every user.
    fn candidate_value(&self, objective: Objective, i: usize, level: usize, c: &[Complex64], scratch: &mut [Complex64]) -> f64 {
        let k = self.n_users;
        let delta = self.phases.phase_set().phasor(level) - self.phases.phasors()[i];
        let b = self.hbar_row(i);
        let a2 = self.h_col_norms[i];
        updated_gram(&self.gram, k, delta, b, c, a2, scratch);
        let f1 = f1_of(scratch, k);
        match objective {
            Objective::F1 => f1,
            Objective::F2 => {
                let e = energy_of(scratch, k);
                if e > 0.0 {
                    f1 / e
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn column_projections(&self, i: usize) -> Vec<Complex64> {
        let a = self.h_col(i);
        (0..self.n_users).map(|u| inner(a, self.s_col(u))).collect()
    }

    /// Objective for every level of element `i` (others fixed).
    pub fn candidate_values(&self, objective: Objective, i: usize) -> Vec<f64> {
        let c = self.column_projections(i);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.n_users * self.n_users];
        (0..self.phases.phase_set().len())
            .map(|m| self.candidate_value(objective, i, m, &c, &mut scratch))
            .collect()
    }

    fn apply_level(&mut self, i: usize, level: usize, c: &[Complex64]) {
        let k = self.n_users;
        let na = self.n_active;
        let delta = self.phases.phase_set().phasor(level) - self.phases.phasors()[i];
        if delta == Complex64::new(0.0, 0.0) {
            return;
        }
        let mut next = vec![Complex64::new(0.0, 0.0); k * k];
        updated_gram(&self.gram, k, delta, self.hbar_row(i), c, self.h_col_norms[i], &mut next);
        self.gram = next;
        for u in 0..k {
            let coef = delta * self.hbar_rows[i * k + u];
            for r in 0..na {
                let a = self.h_cols[i * na + r];
                self.s[u * na + r] += a * coef;
            }
        }
        self.phases.set_level(i, level);
    }
}

#[inline]
fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn f1_of(gram: &[Complex64], k: usize) -> f64 {
    let mut acc = 0.0;
    for u in 0..k {
        for v in u + 1..k {
            acc += gram[u * k + v].norm();
        }
    }
    acc
}

fn energy_of(gram: &[Complex64], k: usize) -> f64 {
    (0..k).map(|u| gram[u * k + u].re).sum()
}

/// Gram matrix after `s_k ← s_k + δ b_k a`, with `c_k = aᴴ s_k` and `a2 = ‖a‖²`.
fn updated_gram(
    gram: &[Complex64],
    k: usize,
    delta: Complex64,
    b: &[Complex64],
    c: &[Complex64],
    a2: f64,
    out: &mut [Complex64],
) {
    let db: Vec<Complex64> = b.iter().map(|&x| delta * x).collect();
    for u in 0..k {
        for v in 0..k {
            out[u * k + v] = gram[u * k + v] + db[v] * c[u].conj() + db[u].conj() * c[v] + db[u].conj() * db[v] * a2;
        }
    }
}

/// Result of one exhaustive coordinate step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub element: usize,
    pub level: usize,
    pub before: f64,
    pub after: f64,
}

/// Minimizes the objective over the phase of element `i` by exhaustive
/// search and applies the minimizer.
///
/// The current level is kept unless another level is strictly better; among
/// strictly better levels the lowest index wins.
pub fn coordinate_step(ctx: &mut ObjectiveContext, i: usize, objective: Objective) -> Result<StepOutcome> {
    if i >= ctx.n_ris {
        return Err(Error::Dimension(format!("element {i} out of range for {} RIS elements", ctx.n_ris)));
    }
    if ctx.phases.phase_set().is_empty() {
        return Err(Error::Empty("phase set"));
    }
    let c = ctx.column_projections(i);
    let mut scratch = vec![Complex64::new(0.0, 0.0); ctx.n_users * ctx.n_users];
    let current = ctx.phases.levels()[i];
    let before = ctx.candidate_value(objective, i, current, &c, &mut scratch);
    let mut best = (current, before);
    for m in 0..ctx.phases.phase_set().len() {
        if m == current {
            continue;
        }
        let v = ctx.candidate_value(objective, i, m, &c, &mut scratch);
        if v < best.1 {
            best = (m, v);
        }
    }
    ctx.apply_level(i, best.0, &c);
    Ok(StepOutcome {
        element: i,
        level: best.0,
        before,
        after: best.1,
    })
}

/// One entry of the objective trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub sweep: usize,
    pub element: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub phases: RisPhaseConfig,
    pub initial_value: f64,
    pub final_value: f64,
    pub sweeps: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

/// Repeats full coordinate sweeps until the relative decrease over a sweep
/// falls below `rel_tol` or `max_sweeps` is reached. `S(Φ)` and the Gram
/// matrix are rebuilt from scratch after every sweep.
pub fn optimize_phases(
    mut ctx: ObjectiveContext,
    objective: Objective,
    rel_tol: f64,
    max_sweeps: usize,
) -> Result<OptimizationResult> {
    if max_sweeps == 0 {
        return Err(Error::Config("max_sweeps must be at least 1".into()));
    }
    let initial_value = ctx.value(objective)?;
    let mut trace = Vec::with_capacity(max_sweeps * ctx.n_ris);
    let mut start = initial_value;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        for i in 0..ctx.n_ris {
            let step = coordinate_step(&mut ctx, i, objective)?;
            trace.push(TraceEntry {
                sweep: sweeps,
                element: i,
                before: step.before,
                after: step.after,
            });
        }
        ctx.recompute();
        let end = ctx.value(objective)?;
        let decrease = start - end;
        if start == 0.0 || decrease <= rel_tol * start.abs() {
            converged = true;
            start = end;
            break;
        }
        start = end;
    }
    Ok(OptimizationResult {
        final_value: start,
        phases: ctx.into_phases(),
        initial_value,
        sweeps,
        converged,
        trace,
    })
}

/// Largest relative improvement any single-coordinate change could still
/// achieve; zero at a coordinate-wise minimum.
pub fn audit_sweep(ctx: &ObjectiveContext, objective: Objective) -> Result<f64> {
    let current = ctx.value(objective)?;
    let mut best = 0.0f64;
    for i in 0..ctx.n_ris {
        for v in ctx.candidate_values(objective, i) {
            if current > 0.0 {
                best = best.max((current - v) / current);
            }
        }
    }
    Ok(best)
}
