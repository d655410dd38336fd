//! Drives the accuracy game: the adversary picks queries, the engine
//! answers, the transcript records the trace. Also the per-query composition
//! baseline that answers every query independently through the oracle.

use crate::adversary::{Adversary, GreedyView};
use crate::config::{AdversaryKind, ExperimentConfig, Mode};
use crate::seed::{split_seed, Component};
use pmw_cm::engine::{
    required_n, schedule, Engine, EngineConfig, EngineError, ParameterSchedule, Transcript,
    TranscriptRecord,
};
use pmw_cm::erm::{err_answer, net_resolution_for};
use pmw_cm::loss::LossFamily;
use pmw_cm::mech::{composition_split, oracle_answer_hist, Branch, OracleSpec, SeededRng};
use pmw_cm::universe::{Dataset, Histogram, Universe};
use rand_chacha::rand_core::SeedableRng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GameError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Adversary(#[from] crate::adversary::AdversaryError),
    #[error(transparent)]
    Erm(#[from] pmw_cm::erm::ErmError),
    #[error(transparent)]
    Mech(#[from] pmw_cm::mech::MechError),
    #[error(transparent)]
    Universe(#[from] pmw_cm::universe::UniverseError),
}

/// Everything a single game run produces.
pub struct GameOutcome {
    pub transcript: Transcript,
    pub schedule: ParameterSchedule,
}

/// Resolves `n = 0` (auto) to the dataset size at which both mechanism
/// contracts hold, then returns the schedule.
pub fn resolve_schedule(
    cfg: &ExperimentConfig,
    family: &LossFamily,
    universe_size: usize,
) -> Result<(ParameterSchedule, usize), GameError> {
    let s = family.scale_bound();
    let n = if cfg.n == 0 {
        let probe = schedule(
            cfg.epsilon, cfg.delta, cfg.alpha, cfg.beta, cfg.k, s, universe_size, 1,
        )?;
        required_n(&probe, &family.domain(), family.lipschitz()) as usize
    } else {
        cfg.n
    };
    let sched = schedule(
        cfg.epsilon, cfg.delta, cfg.alpha, cfg.beta, cfg.k, s, universe_size, n,
    )?;
    Ok((sched, n))
}

/// Plays one trial of the accuracy game over prebuilt data. Engine and
/// adversary seeds derive from the config's master seed and the trial index.
pub fn run_game_on(
    cfg: &ExperimentConfig,
    sched: &ParameterSchedule,
    universe: &Universe,
    ds: &Dataset,
    trial: usize,
) -> Result<GameOutcome, GameError> {
    let family = cfg.family_obj()?;
    let start = std::time::Instant::now();
    let d_hist = Histogram::from_records(ds, universe)?;
    let mut engine = Engine::from_histogram(
        EngineConfig {
            schedule: sched.clone(),
            noise_mult: cfg.mode.noise_mult(),
            record_true_error: cfg.mode == Mode::NoiseFree,
            sv_seed: split_seed(cfg.seed, Component::SvNoise, trial as u64),
            oracle_seed: split_seed(cfg.seed, Component::Oracle, trial as u64),
            net_resolution: None,
        },
        d_hist.clone(),
        ds.n(),
        universe.clone(),
    )?;
    let mut adversary = Adversary::new(
        cfg.adversary,
        family,
        split_seed(cfg.seed, Component::Pool, 0),
        cfg.pool_size,
        split_seed(cfg.seed, Component::Adversary, trial as u64),
        sched.alpha / 100.0,
    );
    // The greedy view and test-mode error logging read the true histogram.
    let data_hist = if cfg.adversary == AdversaryKind::GreedyAdaptive || cfg.mode == Mode::NoiseFree
    {
        Some(d_hist)
    } else {
        None
    };
    // Optimal loss per query, so error logging costs one solve per distinct
    // query instead of one per round.
    let mut min_cache: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();

    let mut records: Vec<TranscriptRecord> = Vec::new();
    let mut halted = false;
    for j in 1..=cfg.k {
        let view_storage;
        let view = match (&data_hist, cfg.adversary) {
            (Some(d), AdversaryKind::GreedyAdaptive) => {
                view_storage = GreedyView {
                    data: d,
                    hypothesis: engine.hypothesis(),
                    universe,
                    updates_used: engine.updates_used(),
                };
                Some(&view_storage)
            }
            _ => None,
        };
        let q = adversary.next(&records, view)?;
        match engine.answer_query(&q) {
            Ok((theta, branch)) => {
                let true_err = match (&data_hist, cfg.mode) {
                    (Some(d), Mode::NoiseFree) => {
                        let at = pmw_cm::loss::loss_on_histogram(&q, &theta, d, universe)?;
                        let best = match min_cache.get(&q.seed) {
                            Some(&v) => v,
                            None => {
                                let v =
                                    pmw_cm::erm::minimize(&q, d, universe, sched.alpha / 100.0)?
                                        .value;
                                min_cache.insert(q.seed, v);
                                v
                            }
                        };
                        Some((at - best).max(0.0))
                    }
                    _ => None,
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
            Err(EngineError::QueryBudgetExhausted) => {
                halted = true;
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(GameOutcome {
        transcript: Transcript {
            records,
            updates_used: engine.updates_used(),
            // Halted means cut off early, not merely out of queries.
            halted,
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
        schedule: sched.clone(),
    })
}

/// Convenience wrapper: builds data from the config and runs one trial.
pub fn run_game(cfg: &ExperimentConfig, trial: usize) -> Result<GameOutcome, GameError> {
    let family = cfg.family_obj()?;
    let mut cfg = cfg.clone();
    let universe_size = match cfg.universe.as_str() {
        "grid-1d" | "glm" => cfg.universe_size,
        _ => cfg.build_data().map(|(u, _)| u.len())?,
    };
    let (sched, n) = resolve_schedule(&cfg, &family, universe_size)?;
    cfg.n = n;
    let (universe, ds) = cfg.build_data()?;
    run_game_on(&cfg, &sched, &universe, &ds, trial)
}

/// Per-query composition baseline: every query is answered independently by
/// the oracle, each at the budget the advanced-composition inverse split
/// allots for `k` mechanisms. Consumes the same adversary stream as the
/// engine (given the same seeds) so comparisons are stream-identical.
pub fn run_baseline_on(
    cfg: &ExperimentConfig,
    sched: &ParameterSchedule,
    universe: &Universe,
    ds: &Dataset,
    trial: usize,
) -> Result<GameOutcome, GameError> {
    let family = cfg.family_obj()?;
    let start = std::time::Instant::now();
    let (eps0, _delta0, _dp) = composition_split(cfg.epsilon, cfg.delta, cfg.k);
    // Same net the engine's oracle would use, for a like-for-like answer set.
    let spec = OracleSpec {
        eps0,
        delta0: 0.0,
        alpha0: sched.alpha0,
        beta0: cfg.beta / (2.0 * cfg.k as f64),
        net_resolution: net_resolution_for(&family.domain(), family.lipschitz(), sched.alpha0),
        noise_mult: cfg.mode.noise_mult(),
    };
    let mut adversary = Adversary::new(
        cfg.adversary,
        family,
        split_seed(cfg.seed, Component::Pool, 0),
        cfg.pool_size,
        split_seed(cfg.seed, Component::Adversary, trial as u64),
        sched.alpha / 100.0,
    );
    let mut rng = SeededRng::seed_from_u64(split_seed(cfg.seed, Component::Oracle, trial as u64));
    let d_hist = Histogram::from_records(ds, universe)?;
    let mut records = Vec::with_capacity(cfg.k);
    for j in 1..=cfg.k {
        // The baseline has no hypothesis; the greedy strategy is rejected at
        // config validation, so no view is needed.
        let q = adversary.next(&records, None)?;
        let theta = oracle_answer_hist(&spec, &q, &d_hist, ds.n(), universe, &mut rng)?;
        let true_err = if cfg.mode == Mode::NoiseFree {
            Some(err_answer(&q, &d_hist, &theta, universe, sched.alpha / 100.0)?)
        } else {
            None
        };
        records.push(TranscriptRecord {
            j,
            loss_id: q.id.clone(),
            loss_seed: q.seed,
            branch: Branch::Top, // every baseline answer spends budget
            theta,
            true_err,
        });
    }
    Ok(GameOutcome {
        transcript: Transcript {
            records,
            updates_used: cfg.k.min(records.len()),
            halted: false,
            wall_time_secs: start.elapsed().as_secs_f64(),
        },
        schedule: sched.clone(),
    })
}

/// Recomputes per-query true errors of a transcript from the dataset and the
/// family (queries are regenerated from their recorded seeds). This is how
/// private-mode runs are evaluated: the engine never logs raw-data errors,
/// the evaluator derives them after the fact.
pub fn evaluate_true_errors(
    tr: &Transcript,
    family: &LossFamily,
    d_hist: &Histogram,
    universe: &Universe,
    tol: f64,
) -> Result<Vec<f64>, GameError> {
    let mut out = Vec::with_capacity(tr.records.len());
    let mut min_cache: std::collections::HashMap<u64, f64> = std::collections::HashMap::new();
    for r in &tr.records {
        let q = family.member(r.loss_seed);
        let at = pmw_cm::loss::loss_on_histogram(&q, &r.theta, d_hist, universe)?;
        let best = match min_cache.get(&r.loss_seed) {
            Some(&v) => v,
            None => {
                let v = pmw_cm::erm::minimize(&q, d_hist, universe, tol)?.value;
                min_cache.insert(r.loss_seed, v);
                v
            }
        };
        out.push((at - best).max(0.0));
    }
    Ok(out)
}
