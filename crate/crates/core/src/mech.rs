//! Differential-privacy building blocks: Laplace sampling, the online
//! sparse-vector mechanism, a single-query exponential-mechanism oracle over
//! a parameter net, and the adaptive-composition accountant.
//!
//! # Sparse vector
//!
//! The mechanism answers a stream of low-sensitivity queries with
//! above/below-threshold bits and halts after `T` above answers. Internals:
//! one AboveThreshold epoch per update, composed across the `T` epochs by the
//! advanced-composition recipe, so each epoch runs at
//! `eps_a = eps / sqrt(8 T ln(2/delta))`. Within an epoch the threshold is
//! `3 alpha / 4` plus `Lap(2 Delta / eps_a)` noise (redrawn after every above
//! answer) and each query adds `Lap(4 Delta / eps_a)` noise. The comparison
//! point sits midway in the `(alpha/2, alpha)` band the contract leaves
//! unconstrained, leaving an `alpha/4` noise margin on each side.
//!
//! # Oracle
//!
//! The single-CM-query oracle samples a parameter from a uniform net over the
//! domain with probability proportional to `exp(-eps0 n l_D(theta) / (2S))`.
//! Replacing one row shifts `n l_D(theta)` by a per-point constant plus a
//! term bounded by `S`, which gives pure `(eps0, 0)` differential privacy;
//! tests verify the `e^eps0` ratio bound exactly on small instances. The
//! interface is pluggable so a dimension-efficient oracle can replace the net
//! construction behind the same contract.
//!
//! All logarithms are natural. Noise is research-grade floating point; this
//! crate is not hardened against floating-point side channels.

use crate::erm::{net_points, ErmError};
use crate::loss::{loss_on_histogram, LossError, LossQuery};
use crate::universe::{Dataset, Histogram, Universe, UniverseError};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Deterministic generator used for all mechanism noise.
pub type SeededRng = ChaCha12Rng;

#[derive(Debug, Error)]
pub enum MechError {
    #[error("laplace scale must be positive, got {0}")]
    BadScale(f64),
    #[error("privacy parameters out of range: {0}")]
    BadBudget(String),
    #[error("sparse-vector config invalid: {0}")]
    BadSvConfig(String),
    #[error("mechanism halted")]
    MechanismHalted,
    #[error("composition preconditions violated: {0}")]
    CompositionPreconditions(String),
    #[error(transparent)]
    Erm(#[from] ErmError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Universe(#[from] UniverseError),
}

/// An `(epsilon, delta)` differential-privacy budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    /// Validating constructor for user-supplied budgets: `0 < epsilon <= 10`
    /// (sanity guard) and `0 <= delta < 1`.
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, MechError> {
        if !(epsilon > 0.0) || epsilon > 10.0 {
            return Err(MechError::BadBudget(format!(
                "epsilon must be in (0, 10], got {epsilon}"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(MechError::BadBudget(format!(
                "delta must be in [0, 1), got {delta}"
            )));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Draws from the Laplace density `p(z) ~ exp(-|z| / scale)` by inverse CDF.
pub fn laplace_sample<R: Rng>(scale: f64, rng: &mut R) -> Result<f64, MechError> {
    if !(scale > 0.0) {
        return Err(MechError::BadScale(scale));
    }
    // u uniform in (-1/2, 1/2]; sign(u) * ln(1 - 2|u|) inverts the CDF.
    let u: f64 = rng.random::<f64>() - 0.5;
    let mag = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln();
    Ok(-scale * u.signum() * mag)
}

/// Above/below answer from the sparse-vector mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "top")]
    Top,
    #[serde(rename = "bot")]
    Bot,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Branch::Top => write!(f, "top"),
            Branch::Bot => write!(f, "bot"),
        }
    }
}

/// Sparse-vector parameters: update cutoff `T`, query cap `k`, threshold
/// `alpha`, per-query sensitivity `Delta`, and the mechanism's own budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvConfig {
    pub max_updates: usize,
    pub max_queries: usize,
    pub alpha: f64,
    pub sensitivity: f64,
    pub budget: PrivacyBudget,
    /// Noise scale multiplier; 0 disables all noise (deterministic debug
    /// mode, forbidden in any configuration that claims privacy).
    pub noise_mult: f64,
}

impl SvConfig {
    pub fn validate(&self) -> Result<(), MechError> {
        if self.max_updates < 1 {
            return Err(MechError::BadSvConfig("update cutoff T must be >= 1".into()));
        }
        if self.max_queries < self.max_updates {
            return Err(MechError::BadSvConfig(format!(
                "query cap k = {} must be >= T = {}",
                self.max_queries, self.max_updates
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(MechError::BadSvConfig("threshold alpha must be positive".into()));
        }
        if !(self.sensitivity > 0.0) {
            return Err(MechError::BadSvConfig("sensitivity must be positive".into()));
        }
        if !(self.budget.delta > 0.0) {
            return Err(MechError::BadSvConfig(
                "sparse vector needs delta > 0 for its epoch split".into(),
            ));
        }
        if !(self.noise_mult >= 0.0) {
            return Err(MechError::BadSvConfig("noise multiplier must be >= 0".into()));
        }
        Ok(())
    }

    /// Per-epoch budget from the advanced-composition split across the `T`
    /// update epochs.
    pub fn per_epoch_epsilon(&self) -> f64 {
        self.budget.epsilon
            / (8.0 * self.max_updates as f64 * (2.0 / self.budget.delta).ln()).sqrt()
    }

    /// Comparison point: midpoint of the `(alpha/2, alpha)` band.
    pub fn comparison_point(&self) -> f64 {
        0.75 * self.alpha
    }

    pub fn threshold_noise_scale(&self) -> f64 {
        2.0 * self.sensitivity / self.per_epoch_epsilon()
    }

    pub fn query_noise_scale(&self) -> f64 {
        4.0 * self.sensitivity / self.per_epoch_epsilon()
    }
}

/// Running sparse-vector state; single-owner mutable, one logical thread at a
/// time.
#[derive(Debug, Clone)]
pub struct SvState {
    cfg: SvConfig,
    noisy_threshold: f64,
    updates_used: usize,
    queries_seen: usize,
    halted: bool,
    rng: SeededRng,
}

/// Initializes the mechanism: draws the first noisy threshold, zeroes the
/// counters.
pub fn sv_init(cfg: SvConfig, seed: u64) -> Result<SvState, MechError> {
    cfg.validate()?;
    let mut rng = SeededRng::seed_from_u64(seed);
    let noisy_threshold =
        cfg.comparison_point() + scaled_noise(cfg.threshold_noise_scale(), cfg.noise_mult, &mut rng)?;
    Ok(SvState {
        cfg,
        noisy_threshold,
        updates_used: 0,
        queries_seen: 0,
        halted: false,
        rng,
    })
}

fn scaled_noise<R: Rng>(scale: f64, mult: f64, rng: &mut R) -> Result<f64, MechError> {
    if mult == 0.0 {
        Ok(0.0)
    } else {
        Ok(laplace_sample(scale * mult, rng)?)
    }
}

impl SvState {
    /// Feeds one query value (the caller guarantees `Delta`-sensitivity) and
    /// returns the branch. Above answers consume an update; the mechanism
    /// halts after `T` of them or after `k` queries.
    pub fn process(&mut self, q_value: f64) -> Result<Branch, MechError> {
        if self.halted {
            return Err(MechError::MechanismHalted);
        }
        self.queries_seen += 1;
        let noisy_q = q_value
            + scaled_noise(self.cfg.query_noise_scale(), self.cfg.noise_mult, &mut self.rng)?;
        let branch = if noisy_q >= self.noisy_threshold {
            self.updates_used += 1;
            if self.updates_used >= self.cfg.max_updates {
                self.halted = true;
            } else {
                self.noisy_threshold = self.cfg.comparison_point()
                    + scaled_noise(
                        self.cfg.threshold_noise_scale(),
                        self.cfg.noise_mult,
                        &mut self.rng,
                    )?;
            }
            Branch::Top
        } else {
            Branch::Bot
        };
        if self.queries_seen >= self.cfg.max_queries {
            self.halted = true;
        }
        Ok(branch)
    }

    pub fn updates_used(&self) -> usize {
        self.updates_used
    }

    pub fn queries_seen(&self) -> usize {
        self.queries_seen
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn config(&self) -> &SvConfig {
        &self.cfg
    }
}

/// Dataset-size bound stated for the reference sparse-vector contract
/// (natural log, rounded up):
/// `256 S sqrt(T ln(2/delta)) ln(4k/beta) / (eps alpha)`.
///
/// The shipped mechanism is a different concrete variant with the same
/// asymptotics; use [`sv_required_n`] for its own sufficient size.
pub fn sv_size_bound(
    s: f64,
    max_updates: usize,
    max_queries: usize,
    alpha: f64,
    epsilon: f64,
    delta: f64,
    beta: f64,
) -> u64 {
    let t = max_updates as f64;
    let k = max_queries as f64;
    let v = 256.0 * s * (t * (2.0 / delta).ln()).sqrt() * (4.0 * k / beta).ln()
        / (epsilon * alpha);
    v.ceil() as u64
}

/// Sufficient dataset size for the shipped mechanism to satisfy its accuracy
/// contract with probability `1 - beta`.
///
/// Derivation: with `Delta = 3S/n` and per-epoch budget
/// `eps_a = eps / sqrt(8 T ln(2/delta))`, the contract holds whenever every
/// threshold draw stays within `alpha/8` and every query draw within
/// `alpha/8`. Union-bounding `T + 1` threshold draws at scale
/// `2 Delta / eps_a` and `k` query draws at scale `4 Delta / eps_a` and
/// giving each side `beta/2`:
///
/// - threshold side: `n >= 48 S ln(2(T+1)/beta) / (alpha eps_a)`
/// - query side:     `n >= 96 S ln(2k/beta) / (alpha eps_a)`
pub fn sv_required_n(
    s: f64,
    max_updates: usize,
    max_queries: usize,
    alpha: f64,
    epsilon: f64,
    delta: f64,
    beta: f64,
) -> u64 {
    let t = max_updates as f64;
    let k = max_queries as f64;
    let eps_a = epsilon / (8.0 * t * (2.0 / delta).ln()).sqrt();
    let n_thr = 48.0 * s * (2.0 * (t + 1.0) / beta).ln() / (alpha * eps_a);
    let n_qry = 96.0 * s * (2.0 * k / beta).ln() / (alpha * eps_a);
    n_thr.max(n_qry).ceil() as u64
}

/// Contract parameters for the single-CM-query oracle: budget, accuracy
/// target, failure probability, and the net resolution (points per axis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub eps0: f64,
    /// Always zero for the net-based oracle (pure DP), kept to state the
    /// contract the engine relies on.
    pub delta0: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub net_resolution: usize,
    /// 0 disables sampling: the oracle returns the exact net minimizer.
    pub noise_mult: f64,
}

impl OracleSpec {
    /// Net size for a domain of the given dimension.
    pub fn net_size(&self, dim: usize) -> usize {
        self.net_resolution.pow(dim as u32)
    }

    /// Minimum dataset size `n'` for the `(alpha0, beta0)` accuracy contract:
    /// the standard exponential-mechanism utility bound giving excess loss at
    /// most `alpha0 / 2` with probability `1 - beta0`, on top of a net fine
    /// enough that its best point is within `alpha0 / 2` of the continuum
    /// optimum.
    pub fn min_dataset_size(&self, s: f64, dim: usize) -> u64 {
        let net = self.net_size(dim) as f64;
        (4.0 * s * (net / self.beta0).ln() / (self.eps0 * self.alpha0)).ceil() as u64
    }
}

/// Unnormalized log-weights of the oracle's output distribution on each net
/// point: `-eps0 n l_D(theta) / (2S)`.
pub fn oracle_log_weights(
    spec: &OracleSpec,
    q: &LossQuery,
    d_hist: &Histogram,
    n: usize,
    u: &Universe,
) -> Result<Vec<f64>, MechError> {
    let net = net_points(&q.domain, spec.net_resolution)?;
    let s = spec.eps0 * n as f64 / (2.0 * q.scale_bound);
    let mut out = Vec::with_capacity(net.len());
    for theta in &net {
        out.push(-s * loss_on_histogram(q, theta, d_hist, u)?);
    }
    Ok(out)
}

/// Exact output distribution of [`oracle_answer`] over the net, for analytic
/// differential-privacy checks.
pub fn oracle_output_distribution(
    spec: &OracleSpec,
    q: &LossQuery,
    ds: &Dataset,
    u: &Universe,
) -> Result<Vec<f64>, MechError> {
    let d_hist = Histogram::from_records(ds, u)?;
    let lw = oracle_log_weights(spec, q, &d_hist, ds.n(), u)?;
    let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = lw.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = w.iter().sum();
    for v in &mut w {
        *v /= z;
    }
    Ok(w)
}

/// Samples a private estimate of the loss minimizer on the dataset from the
/// exponential mechanism over the domain net. `(eps0, 0)`-differentially
/// private under row replacement. Sizes below [`OracleSpec::min_dataset_size`]
/// void the accuracy contract but not privacy; they log a warning.
pub fn oracle_answer<R: Rng>(
    spec: &OracleSpec,
    q: &LossQuery,
    ds: &Dataset,
    u: &Universe,
    rng: &mut R,
) -> Result<Vec<f64>, MechError> {
    let d_hist = Histogram::from_records(ds, u)?;
    oracle_answer_hist(spec, q, &d_hist, ds.n(), u, rng)
}

/// [`oracle_answer`] for callers that already hold the dataset's histogram
/// and size; avoids recounting large datasets on every draw.
pub fn oracle_answer_hist<R: Rng>(
    spec: &OracleSpec,
    q: &LossQuery,
    d_hist: &Histogram,
    n: usize,
    u: &Universe,
    rng: &mut R,
) -> Result<Vec<f64>, MechError> {
    let min_n = spec.min_dataset_size(q.scale_bound, q.domain.dim());
    if (n as u64) < min_n {
        log::warn!(
            "oracle called with n = {n} below the contract size n' = {min_n}; accuracy guarantee void"
        );
    }
    let net = net_points(&q.domain, spec.net_resolution)?;
    let s = spec.eps0 * n as f64 / (2.0 * q.scale_bound);
    let mut lw = Vec::with_capacity(net.len());
    for theta in &net {
        lw.push(-s * loss_on_histogram(q, theta, d_hist, u)?);
    }
    let ix = if spec.noise_mult == 0.0 {
        // Deterministic debug mode: exact maximizer, lowest index on ties.
        let mut best = 0;
        for i in 1..lw.len() {
            if lw[i] > lw[best] {
                best = i;
            }
        }
        best
    } else {
        // Temperature scales with the multiplier so mult -> 0 recovers the
        // argmax limit.
        let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|&l| ((l - m) / spec.noise_mult).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut target = rng.random::<f64>() * z;
        let mut chosen = w.len() - 1;
        for (i, &wi) in w.iter().enumerate() {
            if target <= wi {
                chosen = i;
                break;
            }
            target -= wi;
        }
        chosen
    };
    Ok(net[ix].clone())
}

/// Total `(epsilon, delta)` of a `T`-fold adaptive composition of
/// `(eps0, delta0)`-DP mechanisms at slack `delta_prime`:
/// `epsilon = sqrt(2 T ln(1/delta')) eps0 + 2 T eps0^2`,
/// `delta = delta' + T delta0`.
///
/// The output is an accounting value and may exceed the sanity guard that
/// [`PrivacyBudget::new`] applies to user-supplied budgets.
pub fn compose(
    eps0: f64,
    delta0: f64,
    t: usize,
    delta_prime: f64,
) -> Result<PrivacyBudget, MechError> {
    for (name, v) in [("eps0", eps0), ("delta0", delta0), ("delta_prime", delta_prime)] {
        if !(0.0..=0.5).contains(&v) {
            return Err(MechError::CompositionPreconditions(format!(
                "{name} = {v} outside [0, 1/2]"
            )));
        }
    }
    if delta_prime == 0.0 {
        return Err(MechError::CompositionPreconditions(
            "delta_prime must be positive".into(),
        ));
    }
    let tf = t as f64;
    let epsilon = (2.0 * tf * (1.0 / delta_prime).ln()).sqrt() * eps0 + 2.0 * tf * eps0 * eps0;
    Ok(PrivacyBudget {
        epsilon,
        delta: delta_prime + tf * delta0,
    })
}

/// Inverse split: per-mechanism `(eps0, delta0)` and slack `delta_prime` so
/// that the `T`-fold composition stays within `(epsilon, delta)`:
/// `eps0 = epsilon / sqrt(8 T ln(2/delta))`, `delta0 = delta / (2T)`,
/// `delta_prime = delta / 2`.
pub fn composition_split(epsilon: f64, delta: f64, t: usize) -> (f64, f64, f64) {
    let tf = t as f64;
    (
        epsilon / (8.0 * tf * (2.0 / delta).ln()).sqrt(),
        delta / (2.0 * tf),
        delta / 2.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::predicate_query;

    fn test_cfg(noise_mult: f64) -> SvConfig {
        SvConfig {
            max_updates: 4,
            max_queries: 16,
            alpha: 0.5,
            sensitivity: 1e-4,
            budget: PrivacyBudget::new(1.0, 0.01).unwrap(),
            noise_mult,
        }
    }

    #[test]
    fn laplace_rejects_bad_scale() {
        let mut rng = SeededRng::seed_from_u64(0);
        assert!(laplace_sample(0.0, &mut rng).is_err());
        assert!(laplace_sample(-1.0, &mut rng).is_err());
    }

    #[test]
    fn laplace_mean_is_centered() {
        let mut rng = SeededRng::seed_from_u64(1);
        let s = 2.5;
        let n = 1_000_000;
        let mean: f64 = (0..n)
            .map(|_| laplace_sample(s, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!(
            mean.abs() <= 5.0 * s / 1000.0,
            "empirical mean {mean} too far from 0"
        );
    }

    #[test]
    fn laplace_median_of_magnitude() {
        let mut rng = SeededRng::seed_from_u64(2);
        let s = 1.7;
        let cutoff = s * 2f64.ln();
        let n = 1_000_000;
        let above = (0..n)
            .filter(|_| laplace_sample(s, &mut rng).unwrap().abs() > cutoff)
            .count();
        let frac = above as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.01, "P(|Z| > s ln 2) = {frac}");
    }

    #[test]
    fn laplace_stream_is_deterministic() {
        let mut a = SeededRng::seed_from_u64(77);
        let mut b = SeededRng::seed_from_u64(77);
        for _ in 0..100 {
            assert_eq!(
                laplace_sample(1.0, &mut a).unwrap(),
                laplace_sample(1.0, &mut b).unwrap()
            );
        }
    }

    #[test]
    fn sv_init_noise_free_threshold() {
        let st = sv_init(test_cfg(0.0), 3).unwrap();
        assert_eq!(st.noisy_threshold, 0.375);
        assert_eq!(st.updates_used(), 0);
        assert!(!st.halted());
    }

    #[test]
    fn sv_init_same_seed_same_state() {
        let mut a = sv_init(test_cfg(1.0), 9).unwrap();
        let mut b = sv_init(test_cfg(1.0), 9).unwrap();
        for q in [0.1, 0.6, 0.3, 0.45] {
            assert_eq!(a.process(q).unwrap(), b.process(q).unwrap());
        }
    }

    #[test]
    fn sv_noise_free_branching() {
        let mut st = sv_init(test_cfg(0.0), 0).unwrap();
        assert_eq!(st.process(0.6).unwrap(), Branch::Top);
        assert_eq!(st.process(0.2).unwrap(), Branch::Bot);
        // Inside the unconstrained band but below the 3a/4 comparison point.
        assert_eq!(st.process(0.3).unwrap(), Branch::Bot);
    }

    #[test]
    fn sv_halts_after_t_tops() {
        let mut st = sv_init(test_cfg(0.0), 0).unwrap();
        for _ in 0..4 {
            assert_eq!(st.process(0.9).unwrap(), Branch::Top);
        }
        assert!(st.halted());
        assert_eq!(st.updates_used(), 4);
        assert!(matches!(st.process(0.9), Err(MechError::MechanismHalted)));
    }

    #[test]
    fn sv_halts_at_query_cap() {
        let mut cfg = test_cfg(0.0);
        cfg.max_queries = 5;
        let mut st = sv_init(cfg, 0).unwrap();
        for _ in 0..5 {
            st.process(0.0).unwrap();
        }
        assert!(st.halted());
        assert!(st.process(0.0).is_err());
    }

    #[test]
    fn sv_config_validation() {
        let mut cfg = test_cfg(0.0);
        cfg.max_updates = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = test_cfg(0.0);
        cfg.max_queries = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = test_cfg(0.0);
        cfg.budget.delta = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sv_size_bound_frozen_value() {
        // 256 * 2 * sqrt(4 ln 200) * ln 640 / (1 * 0.5)
        assert_eq!(sv_size_bound(2.0, 4, 16, 0.5, 1.0, 0.01, 0.1), 30_461);
    }

    #[test]
    fn sv_size_bound_scalings() {
        let base = sv_size_bound(2.0, 4, 16, 0.25, 1.0, 0.01, 0.1) as f64;
        let doubled_alpha = sv_size_bound(2.0, 4, 16, 0.5, 1.0, 0.01, 0.1) as f64;
        assert!((doubled_alpha / base - 0.5).abs() < 1e-3);
        let double_s = sv_size_bound(4.0, 4, 16, 0.25, 1.0, 0.01, 0.1) as f64;
        assert!((double_s / base - 2.0).abs() < 1e-3);
    }

    #[test]
    fn oracle_argmax_limit_matches_grid() {
        let u = Universe::new(vec![vec![0.0], vec![1.0]]).unwrap();
        let ds = Dataset::new(vec![1, 1, 0, 1], &u).unwrap();
        let q = predicate_query(vec![1.0], 0.5, "sq");
        let spec = OracleSpec {
            eps0: 1e6,
            delta0: 0.0,
            alpha0: 0.1,
            beta0: 0.1,
            net_resolution: 101,
            noise_mult: 1.0,
        };
        let mut rng = SeededRng::seed_from_u64(4);
        let theta = oracle_answer(&spec, &q, &ds, &u, &mut rng).unwrap();
        let grid = crate::erm::grid_minimize(
            &q,
            &Histogram::from_records(&ds, &u).unwrap(),
            &u,
            101,
        )
        .unwrap();
        assert_eq!(theta, grid.theta);
    }

    #[test]
    fn oracle_single_point_net() {
        let u = Universe::new(vec![vec![0.0], vec![1.0]]).unwrap();
        let ds = Dataset::new(vec![0, 1], &u).unwrap();
        let q = predicate_query(vec![1.0], 0.5, "sq");
        let spec = OracleSpec {
            eps0: 0.5,
            delta0: 0.0,
            alpha0: 0.1,
            beta0: 0.1,
            net_resolution: 1,
            noise_mult: 1.0,
        };
        let mut rng = SeededRng::seed_from_u64(4);
        let theta = oracle_answer(&spec, &q, &ds, &u, &mut rng).unwrap();
        assert_eq!(theta, vec![0.5]); // the interval midpoint, data-independent
    }

    #[test]
    fn oracle_sampling_frequencies_match_closed_form() {
        // Net {0, 0.5, 1}, D = (1/2, 1/2) over {0, 1}, exponent scale
        // eps0 * n / (2S) = 1: weights exp(-1/2), exp(-1/4), exp(-1/2).
        let u = Universe::new(vec![vec![0.0], vec![1.0]]).unwrap();
        let ds = Dataset::new(vec![0, 1], &u).unwrap();
        let q = predicate_query(vec![1.0], 0.5, "sq");
        let spec = OracleSpec {
            eps0: 2.0 * q.scale_bound / ds.n() as f64, // makes the scale exactly 1
            delta0: 0.0,
            alpha0: 0.1,
            beta0: 0.1,
            net_resolution: 3,
            noise_mult: 1.0,
        };
        let probs = oracle_output_distribution(&spec, &q, &ds, &u).unwrap();
        let w = [(-0.5f64).exp(), (-0.25f64).exp(), (-0.5f64).exp()];
        let z: f64 = w.iter().sum();
        for (p, wi) in probs.iter().zip(&w) {
            assert!((p - wi / z).abs() < 1e-12);
        }
        let mut rng = SeededRng::seed_from_u64(10);
        let draws = 1_000_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            let theta = oracle_answer(&spec, &q, &ds, &u, &mut rng).unwrap();
            let ix = (theta[0] * 2.0).round() as usize;
            counts[ix] += 1;
        }
        for (c, wi) in counts.iter().zip(&w) {
            let freq = *c as f64 / draws as f64;
            assert!(
                (freq - wi / z).abs() <= 0.01,
                "frequency {freq} vs expected {}",
                wi / z
            );
        }
    }

    #[test]
    fn oracle_min_n_frozen_value() {
        let spec = OracleSpec {
            eps0: 0.1,
            delta0: 0.0,
            alpha0: 0.125,
            beta0: 0.01,
            net_resolution: 101,
            noise_mult: 1.0,
        };
        // ceil(8 ln(10100) / 0.0125)
        assert_eq!(spec.min_dataset_size(2.0, 1), 5_901);
    }

    #[test]
    fn oracle_min_n_monotonicity() {
        let mk = |alpha0: f64, beta0: f64| OracleSpec {
            eps0: 0.1,
            delta0: 0.0,
            alpha0,
            beta0,
            net_resolution: 101,
            noise_mult: 1.0,
        };
        let base = mk(0.125, 0.01).min_dataset_size(2.0, 1) as f64;
        let doubled = mk(0.25, 0.01).min_dataset_size(2.0, 1) as f64;
        assert!((doubled / base - 0.5).abs() < 1e-3);
        assert!(mk(0.125, 0.1).min_dataset_size(2.0, 1) < mk(0.125, 0.01).min_dataset_size(2.0, 1));
    }

    #[test]
    fn compose_single_round_formula() {
        let b = compose(0.3, 0.0, 1, 1e-3).unwrap();
        let expect = (2.0 * (1e3f64).ln()).sqrt() * 0.3 + 2.0 * 0.09;
        assert!((b.epsilon - expect).abs() < 1e-12);
        assert_eq!(b.delta, 1e-3);
    }

    #[test]
    fn compose_frozen_value() {
        let b = compose(0.1, 0.0, 10, 1e-6).unwrap();
        assert!((b.epsilon - 1.862_258_136_269_110_2).abs() < 1e-12);
        assert_eq!(b.delta, 1e-6);
    }

    #[test]
    fn compose_inverse_split_stays_within_budget() {
        for (eps, delta, t) in [
            (1.0, 1e-6, 10),
            (0.5, 1e-9, 1000),
            (1.0, 1e-3, 3),
            (0.9, 1e-12, 50_000),
        ] {
            let (e0, d0, dp) = composition_split(eps, delta, t);
            let total = compose(e0, d0, t, dp).unwrap();
            assert!(
                total.epsilon <= eps + 1e-12,
                "split for ({eps}, {delta}, {t}) gives eps {}",
                total.epsilon
            );
            assert!(total.delta <= delta + 1e-18);
        }
    }

    #[test]
    fn compose_rejects_bad_hypotheses() {
        assert!(compose(0.6, 0.0, 1, 1e-3).is_err());
        assert!(compose(0.1, 0.7, 1, 1e-3).is_err());
        assert!(compose(0.1, 0.0, 1, 0.0).is_err());
    }

    #[test]
    fn compose_monotone() {
        let base = compose(0.1, 0.0, 10, 1e-6).unwrap().epsilon;
        assert!(compose(0.2, 0.0, 10, 1e-6).unwrap().epsilon > base);
        assert!(compose(0.1, 0.0, 20, 1e-6).unwrap().epsilon > base);
        assert!(compose(0.1, 0.0, 10, 1e-9).unwrap().epsilon > base);
    }
}
