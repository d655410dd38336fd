//! The online private multiplicative-weights engine for convex-minimization
//! queries: parameter schedule, per-query answering, and the hypothesis
//! update.
//!
//! Per query the engine computes the excess risk of its public hypothesis
//! (`err_db`), feeds that value to the sparse-vector mechanism, and either
//! answers from the hypothesis (below threshold) or calls the private oracle,
//! answers with its draw, and reweights the hypothesis (above threshold).
//!
//! The update vector is `u(x) = <theta_priv - theta_hyp, grad l_x(theta_hyp)>`
//! and the hypothesis reweights by `exp(-eta u(x))`. The sign matters: `u` is
//! positively correlated with the hypothesis and negatively with the true
//! data (that is the potential-drop inequality), so weight must shrink where
//! `u` is large for the hypothesis to move toward the data and for the
//! averaged regret bound `(1/T) sum <u^t, hyp^t - D> <= 2S sqrt(ln|X| / T)`
//! to apply.
//!
//! The engine touches the private dataset in exactly two places, both behind
//! the sealed accessor in this module: the sparse-vector query value and the
//! oracle draw. Everything else (hypothesis minimization, update vectors,
//! reweighting) reads only public state.

use crate::erm::{clamp_excess, minimize, net_resolution_for, ErmError, MinimizerResult};
use crate::loss::{loss_on_histogram, LossError, LossQuery, ParameterDomain};
use crate::mech::{
    self, sv_init, Branch, MechError, OracleSpec, PrivacyBudget, SeededRng, SvConfig, SvState,
};
use crate::universe::{Dataset, Histogram, Universe, UniverseError};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("query budget exhausted (T updates reached)")]
    QueryBudgetExhausted,
    #[error("query scale bound {declared} exceeds the schedule's S = {schedule}")]
    ScaleExceedsSchedule { declared: f64, schedule: f64 },
    #[error("non-finite gradient while building the update vector")]
    NonFiniteUpdate,
    #[error("update entry {0} exceeds the [-S, S] range (S = {1})")]
    UpdateOutOfRange(f64, f64),
    #[error("hypothesis mass vanished after reweighting")]
    DegenerateMass,
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Erm(#[from] ErmError),
    #[error(transparent)]
    Mech(#[from] MechError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Universe(#[from] UniverseError),
}

/// The engine's derived parameters. All logarithms are natural; `T` rounds
/// up and clamps to at least one (a single-point universe has `ln|X| = 0`, so
/// the hypothesis never moves).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSchedule {
    // inputs
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub max_queries: usize,
    pub scale_bound: f64,
    pub universe_size: usize,
    pub n: usize,
    // derived
    pub max_updates: usize,
    pub eta: f64,
    pub eps0: f64,
    pub delta0: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub sv_budget: PrivacyBudget,
}

/// Derives the full schedule:
/// `T = ceil(64 S^2 ln|X| / alpha^2)`, `eta = sqrt(ln|X| / T)`,
/// `eps0 = eps / sqrt(8 T ln(4/delta))`, `delta0 = delta / (4T)`,
/// `alpha0 = alpha / 4`, `beta0 = beta / (2T)`, sparse-vector budget
/// `(eps/2, delta/2)`.
#[allow(clippy::too_many_arguments)]
pub fn schedule(
    epsilon: f64,
    delta: f64,
    alpha: f64,
    beta: f64,
    max_queries: usize,
    scale_bound: f64,
    universe_size: usize,
    n: usize,
) -> Result<ParameterSchedule, EngineError> {
    for (name, v) in [
        ("epsilon", epsilon),
        ("delta", delta),
        ("alpha", alpha),
        ("beta", beta),
        ("S", scale_bound),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(EngineError::BadParameter(format!("{name} must be positive, got {v}")));
        }
    }
    if delta >= 1.0 || beta >= 1.0 {
        return Err(EngineError::BadParameter("delta and beta must be below 1".into()));
    }
    if universe_size < 1 || n < 1 {
        return Err(EngineError::BadParameter("universe and dataset must be nonempty".into()));
    }
    let budget = PrivacyBudget::new(epsilon, delta)?;
    let ln_x = (universe_size as f64).ln();
    let t_raw = 64.0 * scale_bound * scale_bound * ln_x / (alpha * alpha);
    let max_updates = if t_raw < 1.0 {
        log::warn!(
            "update schedule T = {t_raw:.3} < 1; clamping to 1 (degenerate universe or very loose alpha)"
        );
        1
    } else {
        t_raw.ceil() as usize
    };
    let tf = max_updates as f64;
    Ok(ParameterSchedule {
        epsilon,
        delta,
        alpha,
        beta,
        max_queries,
        scale_bound,
        universe_size,
        n,
        max_updates,
        eta: (ln_x / tf).sqrt(),
        eps0: epsilon / (8.0 * tf * (4.0 / delta).ln()).sqrt(),
        delta0: delta / (4.0 * tf),
        alpha0: alpha / 4.0,
        beta0: beta / (2.0 * tf),
        sv_budget: PrivacyBudget {
            epsilon: budget.epsilon / 2.0,
            delta: budget.delta / 2.0,
        },
    })
}

/// Dataset size at which both mechanism contracts hold: the sparse-vector
/// sufficient size (at failure share `beta/2`) and the oracle's `n'`, each
/// instantiated from the schedule.
pub fn required_n(
    sched: &ParameterSchedule,
    domain: &ParameterDomain,
    lipschitz: f64,
) -> u64 {
    let sv = mech::sv_required_n(
        sched.scale_bound,
        sched.max_updates,
        sched.max_queries,
        sched.alpha,
        sched.sv_budget.epsilon,
        sched.sv_budget.delta,
        sched.beta / 2.0,
    );
    let resolution = net_resolution_for(domain, lipschitz, sched.alpha0);
    let spec = OracleSpec {
        eps0: sched.eps0,
        delta0: 0.0,
        alpha0: sched.alpha0,
        beta0: sched.beta0,
        net_resolution: resolution,
        noise_mult: 1.0,
    };
    sv.max(spec.min_dataset_size(sched.scale_bound, domain.dim()))
}

/// The per-update reweighting direction; entries live in `[-S, S]` by the
/// scaling condition.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateVector {
    values: Vec<f64>,
    scale_bound: f64,
}

impl UpdateVector {
    /// Wraps a raw vector, enforcing the `[-S, S]` range.
    pub fn new(values: Vec<f64>, scale_bound: f64) -> Result<Self, EngineError> {
        for &v in &values {
            if !v.is_finite() {
                return Err(EngineError::NonFiniteUpdate);
            }
            if v.abs() > scale_bound {
                return Err(EngineError::UpdateOutOfRange(v, scale_bound));
            }
        }
        Ok(Self {
            values,
            scale_bound,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale_bound(&self) -> f64 {
        self.scale_bound
    }
}

/// Builds `u(x) = <theta_priv - theta_hyp, grad l_x(theta_hyp)>` over the
/// whole universe. Entries beyond `S` by less than 1e-9 clamp with a logged
/// warning; anything worse is an error, as is any non-finite gradient.
pub fn build_update_vector(
    q: &LossQuery,
    theta_priv: &[f64],
    theta_hyp: &[f64],
    universe: &Universe,
    scale_bound: f64,
) -> Result<UpdateVector, EngineError> {
    let d = q.domain.dim();
    if theta_priv.len() != d || theta_hyp.len() != d {
        return Err(EngineError::BadParameter("parameter dimension mismatch".into()));
    }
    let dir: Vec<f64> = theta_priv.iter().zip(theta_hyp).map(|(a, b)| a - b).collect();
    let mut grad = vec![0.0; d];
    let mut values = Vec::with_capacity(universe.len());
    for x in 0..universe.len() {
        q.grad_into(theta_hyp, universe.point(x), &mut grad);
        let mut v: f64 = dir.iter().zip(&grad).map(|(a, g)| a * g).sum();
        if !v.is_finite() {
            return Err(EngineError::NonFiniteUpdate);
        }
        if v.abs() > scale_bound {
            if v.abs() - scale_bound < 1e-9 {
                log::warn!("clamping update entry {v} to +/-S = {scale_bound}");
                v = v.clamp(-scale_bound, scale_bound);
            } else {
                return Err(EngineError::UpdateOutOfRange(v, scale_bound));
            }
        }
        values.push(v);
    }
    Ok(UpdateVector {
        values,
        scale_bound,
    })
}

/// Multiplicative-weights step: reweight by `exp(-eta u(x))` and renormalize,
/// computed in log space with max subtraction. `u` is a cost direction, so
/// mass shrinks where `u` is large.
pub fn mw_update(h: &Histogram, u: &UpdateVector, eta: f64) -> Result<Histogram, EngineError> {
    if !(eta >= 0.0) {
        return Err(EngineError::BadParameter(format!("eta must be >= 0, got {eta}")));
    }
    if u.values.len() != h.len() {
        return Err(EngineError::BadParameter("update vector length mismatch".into()));
    }
    let mut log_w: Vec<f64> = h
        .mass()
        .iter()
        .zip(&u.values)
        .map(|(&m, &ux)| if m > 0.0 { m.ln() - eta * ux } else { f64::NEG_INFINITY })
        .collect();
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(EngineError::DegenerateMass);
    }
    for lw in &mut log_w {
        *lw = (*lw - max).exp();
    }
    Ok(Histogram::normalize(log_w).map_err(|_| EngineError::DegenerateMass)?)
}

/// Per-query transcript entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    /// Query index within the session, starting at 1.
    pub j: usize,
    pub loss_id: String,
    /// Generator seed of the query, enough to regenerate it from its family.
    pub loss_seed: u64,
    pub branch: Branch,
    pub theta: Vec<f64>,
    /// Filled only in test mode; absent in any run that claims privacy.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub true_err: Option<f64>,
}

/// Record of one answering session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
    pub updates_used: usize,
    pub halted: bool,
    /// In-memory only; never serialized, so reports stay byte-reproducible.
    #[serde(skip, default)]
    pub wall_time_secs: f64,
}

impl Transcript {
    pub fn max_true_err(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.true_err)
            .fold(None, |acc, e| Some(acc.map_or(e, |a: f64| a.max(e))))
    }

    pub fn mean_true_err(&self) -> Option<f64> {
        let errs: Vec<f64> = self.records.iter().filter_map(|r| r.true_err).collect();
        if errs.is_empty() {
            None
        } else {
            Some(errs.iter().sum::<f64>() / errs.len() as f64)
        }
    }

    /// Copy with the wall time zeroed; the equality used by round-trip tests.
    pub fn normalized(&self) -> Transcript {
        let mut t = self.clone();
        t.wall_time_secs = 0.0;
        t
    }
}

/// The only two ways the engine reads the private dataset: the sparse-vector
/// query value and the oracle draw. Test-mode error logging is the explicit
/// third channel and is gated by the engine's `record_true_error` flag.
struct PrivateData {
    hist: Histogram,
    n: usize,
    /// Optimal loss per query id; data-derived, used only inside channel 1.
    min_loss: HashMap<String, f64>,
}

impl PrivateData {
    /// Channel 1: `err_db` of the hypothesis, the `Delta`-sensitive value fed
    /// to the sparse vector.
    fn sv_query_value(
        &mut self,
        q: &LossQuery,
        theta_hyp: &[f64],
        u: &Universe,
        tol: f64,
    ) -> Result<f64, EngineError> {
        let at_hyp = loss_on_histogram(q, theta_hyp, &self.hist, u)?;
        let best = self.min_loss_for(q, u, tol)?;
        Ok(clamp_excess(at_hyp - best, tol)?)
    }

    fn min_loss_for(&mut self, q: &LossQuery, u: &Universe, tol: f64) -> Result<f64, EngineError> {
        if let Some(&v) = self.min_loss.get(&q.id) {
            return Ok(v);
        }
        let v = minimize(q, &self.hist, u, tol)?.value;
        self.min_loss.insert(q.id.clone(), v);
        Ok(v)
    }

    /// Channel 2: one exponential-mechanism draw at the oracle's budget.
    fn oracle_draw(
        &self,
        spec: &OracleSpec,
        q: &LossQuery,
        u: &Universe,
        rng: &mut SeededRng,
    ) -> Result<Vec<f64>, EngineError> {
        Ok(mech::oracle_answer_hist(spec, q, &self.hist, self.n, u, rng)?)
    }

    /// Test-mode channel: true excess risk of an answer. Callers must keep
    /// this out of anything that claims privacy.
    fn true_error(
        &mut self,
        q: &LossQuery,
        theta: &[f64],
        u: &Universe,
        tol: f64,
    ) -> Result<f64, EngineError> {
        let at = loss_on_histogram(q, theta, &self.hist, u)?;
        let best = self.min_loss_for(q, u, tol)?;
        Ok(clamp_excess(at - best, tol)?)
    }
}

/// Engine construction knobs beyond the schedule.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub schedule: ParameterSchedule,
    /// 0 disables all noise (deterministic debug mode).
    pub noise_mult: f64,
    /// Log per-answer true error into the transcript. Requires noise-free
    /// mode: true errors read the raw data.
    pub record_true_error: bool,
    pub sv_seed: u64,
    pub oracle_seed: u64,
    /// Overrides the per-query net resolution; defaults to the spacing that
    /// keeps the net within `alpha0 / 2` of the continuum optimum.
    pub net_resolution: Option<usize>,
}

/// One answering session: owns the hypothesis, the sparse-vector state, and
/// the sealed private-data accessor. Inherently sequential; run one engine
/// per session and parallelize across sessions.
pub struct Engine {
    cfg: EngineConfig,
    universe: Universe,
    data: PrivateData,
    hypothesis: Histogram,
    sv: SvState,
    oracle_rng: SeededRng,
    solver_tol: f64,
    /// Hypothesis minimizers for the current update epoch, keyed by query id.
    hyp_cache: HashMap<String, MinimizerResult>,
}

impl Engine {
    pub fn new(cfg: EngineConfig, ds: &Dataset, universe: Universe) -> Result<Self, EngineError> {
        let hist = Histogram::from_records(ds, &universe)?;
        Self::from_histogram(cfg, hist, ds.n(), universe)
    }

    /// Construction from a precounted histogram; the entry point when the
    /// dataset is large and already aggregated.
    pub fn from_histogram(
        cfg: EngineConfig,
        hist: Histogram,
        n: usize,
        universe: Universe,
    ) -> Result<Self, EngineError> {
        if cfg.record_true_error && cfg.noise_mult != 0.0 {
            return Err(EngineError::BadParameter(
                "true-error logging requires noise-free mode".into(),
            ));
        }
        if n != cfg.schedule.n {
            return Err(EngineError::BadParameter(format!(
                "schedule built for n = {}, dataset has n = {n}",
                cfg.schedule.n,
            )));
        }
        if hist.len() != universe.len() {
            return Err(EngineError::BadParameter(
                "histogram does not match the universe".into(),
            ));
        }
        let sched = &cfg.schedule;
        // The analyst-facing query cap is enforced by run_session; the
        // mechanism's own cap is a backstop and must be at least T.
        let sv = sv_init(
            SvConfig {
                max_updates: sched.max_updates,
                max_queries: sched.max_queries.max(sched.max_updates),
                alpha: sched.alpha,
                sensitivity: 3.0 * sched.scale_bound / sched.n as f64,
                budget: sched.sv_budget,
                noise_mult: cfg.noise_mult,
            },
            cfg.sv_seed,
        )?;
        let hypothesis = Histogram::uniform(&universe);
        // Inexact inner minimization: keep solver error two orders below the
        // accuracy target.
        let solver_tol = sched.alpha / 100.0;
        let oracle_rng = {
            use rand_chacha::rand_core::SeedableRng;
            SeededRng::seed_from_u64(cfg.oracle_seed)
        };
        Ok(Self {
            oracle_rng,
            cfg,
            universe,
            data: PrivateData {
                hist,
                n,
                min_loss: HashMap::new(),
            },
            hypothesis,
            sv,
            solver_tol,
            hyp_cache: HashMap::new(),
        })
    }

    pub fn schedule(&self) -> &ParameterSchedule {
        &self.cfg.schedule
    }

    /// Current public hypothesis. Exposed for transcripts and the test-only
    /// greedy adversary; it is itself a differentially private object.
    pub fn hypothesis(&self) -> &Histogram {
        &self.hypothesis
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn updates_used(&self) -> usize {
        self.sv.updates_used()
    }

    pub fn halted(&self) -> bool {
        self.sv.halted()
    }

    fn oracle_spec(&self, q: &LossQuery) -> OracleSpec {
        let sched = &self.cfg.schedule;
        let resolution = self
            .cfg
            .net_resolution
            .unwrap_or_else(|| net_resolution_for(&q.domain, q.lipschitz, sched.alpha0));
        OracleSpec {
            eps0: sched.eps0,
            // The net oracle is pure DP, strictly stronger than the
            // (eps0, delta0) the schedule allows it.
            delta0: 0.0,
            alpha0: sched.alpha0,
            beta0: sched.beta0,
            net_resolution: resolution,
            noise_mult: self.cfg.noise_mult,
        }
    }

    fn hyp_minimizer(&mut self, q: &LossQuery) -> Result<MinimizerResult, EngineError> {
        if let Some(m) = self.hyp_cache.get(&q.id) {
            return Ok(m.clone());
        }
        let m = minimize(q, &self.hypothesis, &self.universe, self.solver_tol)?;
        self.hyp_cache.insert(q.id.clone(), m.clone());
        Ok(m)
    }

    /// Answers one query: the sparse vector sees the hypothesis error; below
    /// threshold the hypothesis minimizer is the answer, above threshold the
    /// oracle's draw is, followed by the multiplicative-weights update.
    pub fn answer_query(&mut self, q: &LossQuery) -> Result<(Vec<f64>, Branch), EngineError> {
        if self.sv.halted() {
            return Err(EngineError::QueryBudgetExhausted);
        }
        let sched_s = self.cfg.schedule.scale_bound;
        if q.scale_bound > sched_s + 1e-12 {
            return Err(EngineError::ScaleExceedsSchedule {
                declared: q.scale_bound,
                schedule: sched_s,
            });
        }
        let hyp_min = self.hyp_minimizer(q)?;
        let q_value = self
            .data
            .sv_query_value(q, &hyp_min.theta, &self.universe, self.solver_tol)?;
        match self.sv.process(q_value)? {
            Branch::Bot => Ok((hyp_min.theta, Branch::Bot)),
            Branch::Top => {
                let spec = self.oracle_spec(q);
                let theta_priv =
                    self.data
                        .oracle_draw(&spec, q, &self.universe, &mut self.oracle_rng)?;
                let update =
                    build_update_vector(q, &theta_priv, &hyp_min.theta, &self.universe, sched_s)?;
                #[cfg(debug_assertions)]
                self.assert_potential_drop(q, &update, &theta_priv, &hyp_min.theta)?;
                self.hypothesis = mw_update(&self.hypothesis, &update, self.cfg.schedule.eta)?;
                self.hyp_cache.clear();
                Ok((theta_priv, Branch::Top))
            }
        }
    }

    /// Live check of the potential-drop inequality on every update performed;
    /// test builds only (it reads raw data).
    #[cfg(debug_assertions)]
    fn assert_potential_drop(
        &mut self,
        q: &LossQuery,
        update: &UpdateVector,
        theta_priv: &[f64],
        theta_hyp: &[f64],
    ) -> Result<(), EngineError> {
        let inner: f64 = update
            .values()
            .iter()
            .zip(self.hypothesis.mass().iter().zip(self.data.hist.mass()))
            .map(|(u, (h, d))| u * (h - d))
            .sum();
        let at_hyp = loss_on_histogram(q, theta_hyp, &self.data.hist, &self.universe)?;
        let at_priv = loss_on_histogram(q, theta_priv, &self.data.hist, &self.universe)?;
        debug_assert!(
            inner >= at_hyp - at_priv - 10.0 * self.solver_tol,
            "potential-drop inequality violated: <u, hyp - D> = {inner} < {} - 10 tol",
            at_hyp - at_priv,
        );
        Ok(())
    }

    /// Runs a full session over the query stream. The engine's halt is
    /// recorded, not fatal; the transcript notes where it happened.
    pub fn run_session<'q>(
        &mut self,
        queries: impl IntoIterator<Item = &'q LossQuery>,
    ) -> Result<Transcript, EngineError> {
        let start = std::time::Instant::now();
        let mut records = Vec::new();
        for (ix, q) in queries.into_iter().enumerate() {
            let j = ix + 1;
            if j > self.cfg.schedule.max_queries {
                break;
            }
            match self.answer_query(q) {
                Ok((theta, branch)) => {
                    let true_err = if self.cfg.record_true_error {
                        Some(self.data.true_error(q, &theta, &self.universe, self.solver_tol)?)
                    } else {
                        None
                    };
                    records.push(TranscriptRecord {
                        j,
                        loss_id: q.id.clone(),
                        loss_seed: q.seed,
                        branch,
                        theta,
                        true_err,
                    });
                }
                Err(EngineError::QueryBudgetExhausted) => break,
                Err(e) => return Err(e),
            }
        }
        Ok(Transcript {
            records,
            updates_used: self.sv.updates_used(),
            halted: self.sv.halted(),
            wall_time_secs: start.elapsed().as_secs_f64(),
        })
    }
}
