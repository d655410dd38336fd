//! Query-choosing strategies for the accuracy game.
//!
//! Three strategies ship: `fixed-pool` cycles a seeded pool, `random` draws a
//! fresh seeded member each round, and `greedy-adaptive` picks the pool
//! member with the largest hypothesis error. The greedy strategy reads the
//! engine's internal hypothesis and the true data, so it exists to stress
//! accuracy in test mode, never to model a privacy adversary; the config
//! layer rejects it in private mode.

use crate::config::AdversaryKind;
use pmw_cm::engine::TranscriptRecord;
use pmw_cm::erm::err_db;
use pmw_cm::loss::{LossFamily, LossQuery};
use pmw_cm::universe::{Histogram, Universe};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("greedy-adaptive adversary needs the engine hypothesis (test mode only)")]
    NeedsPeek,
    #[error(transparent)]
    Erm(#[from] pmw_cm::erm::ErmError),
}

/// What the greedy strategy is allowed to see in test mode: the true data
/// histogram and the engine's current hypothesis.
pub struct GreedyView<'a> {
    pub data: &'a Histogram,
    pub hypothesis: &'a Histogram,
    pub universe: &'a Universe,
    /// Engine update count; the hypothesis only changes when this does, so
    /// pool scans are cached per update epoch.
    pub updates_used: usize,
}

pub struct Adversary {
    kind: AdversaryKind,
    pool: Vec<LossQuery>,
    family: LossFamily,
    rng: ChaCha12Rng,
    round: usize,
    /// (updates_used, chosen pool index) of the last greedy scan.
    greedy_cache: Option<(usize, usize)>,
    solver_tol: f64,
}

impl Adversary {
    pub fn new(
        kind: AdversaryKind,
        family: LossFamily,
        pool_seed: u64,
        pool_size: usize,
        adversary_seed: u64,
        solver_tol: f64,
    ) -> Self {
        let pool = family.pool(pool_seed, pool_size);
        Self {
            kind,
            pool,
            family,
            rng: ChaCha12Rng::seed_from_u64(adversary_seed),
            round: 0,
            greedy_cache: None,
            solver_tol,
        }
    }

    pub fn pool(&self) -> &[LossQuery] {
        &self.pool
    }

    /// Chooses the next query. `history` is the full game trace so far;
    /// `view` must be provided for the greedy strategy.
    pub fn next(
        &mut self,
        history: &[TranscriptRecord],
        view: Option<&GreedyView<'_>>,
    ) -> Result<LossQuery, AdversaryError> {
        let _ = history; // the shipped strategies depend on it only via `view`
        self.round += 1;
        match self.kind {
            AdversaryKind::FixedPool => Ok(self.pool[(self.round - 1) % self.pool.len()].clone()),
            AdversaryKind::Random => {
                let seed = self.rng.random::<u64>();
                Ok(self.family.member(seed))
            }
            AdversaryKind::GreedyAdaptive => {
                let view = view.ok_or(AdversaryError::NeedsPeek)?;
                if let Some((epoch, ix)) = self.greedy_cache {
                    if epoch == view.updates_used {
                        return Ok(self.pool[ix].clone());
                    }
                }
                let mut best_ix = 0;
                let mut best_err = f64::NEG_INFINITY;
                for (ix, q) in self.pool.iter().enumerate() {
                    let e = err_db(q, view.data, view.hypothesis, view.universe, self.solver_tol)?;
                    // Strict comparison: ties break to the lowest pool index.
                    if e > best_err {
                        best_err = e;
                        best_ix = ix;
                    }
                }
                self.greedy_cache = Some((view.updates_used, best_ix));
                Ok(self.pool[best_ix].clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pmw_cm::universe::Histogram;

    fn one_query_family() -> LossFamily {
        LossFamily::linear_query(1)
    }

    #[test]
    fn fixed_pool_of_one_repeats() {
        let mut adv = Adversary::new(AdversaryKind::FixedPool, one_query_family(), 3, 1, 0, 1e-6);
        let a = adv.next(&[], None).unwrap();
        let b = adv.next(&[], None).unwrap();
        assert_eq!(a.id, b.id);
    }

    #[test]
    fn greedy_requires_view() {
        let mut adv =
            Adversary::new(AdversaryKind::GreedyAdaptive, one_query_family(), 3, 4, 0, 1e-6);
        assert!(matches!(adv.next(&[], None), Err(AdversaryError::NeedsPeek)));
    }

    #[test]
    fn greedy_ties_break_low_index() {
        // Hypothesis equals truth: every pool member has zero error, so the
        // first member wins.
        let u = crate::config::grid_universe(4).unwrap();
        let h = Histogram::uniform(&u);
        let mut adv =
            Adversary::new(AdversaryKind::GreedyAdaptive, one_query_family(), 3, 4, 0, 1e-6);
        let view = GreedyView {
            data: &h,
            hypothesis: &h,
            universe: &u,
            updates_used: 0,
        };
        let q = adv.next(&[], Some(&view)).unwrap();
        assert_eq!(q.id, adv.pool()[0].id);
    }

    #[test]
    fn random_strategy_varies() {
        let mut adv = Adversary::new(AdversaryKind::Random, one_query_family(), 3, 1, 9, 1e-6);
        let a = adv.next(&[], None).unwrap();
        let b = adv.next(&[], None).unwrap();
        assert_ne!(a.id, b.id);
    }
}
