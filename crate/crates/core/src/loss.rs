//! Convex loss functions with gradients, parameter domains, and the scaling
//! constant `S`.
//!
//! Every query carries declared constants: the scaling bound `S` (a uniform
//! bound on `|<theta - theta', grad l_x(theta)>|` over the domain and the
//! universe), a gradient-norm bound `L`, a smoothness constant for the solver,
//! and a strong-convexity modulus `sigma` (zero when absent). The constants
//! are part of the family definition and are verified, never inferred, at
//! runtime: [`scaling_constant`] produces a sampled lower estimate used in
//! tests to confirm the declarations.
//!
//! Four concrete families ship as workloads:
//!
//! - `linear-query`: scalar `theta` in `[0,1]` against a binary predicate;
//!   the minimizer over a dataset is the fraction of rows satisfying the
//!   predicate.
//! - `squared-glm`: clipped (Huber) squared loss of `<theta, features> - y`
//!   over the unit ball.
//! - `logistic-glm`: logistic loss with labels in `{-1, +1}` over the unit
//!   ball.
//! - `strongly-convex-glm`: the logistic family plus an `(sigma/2)|theta|^2`
//!   ridge term.
//!
//! Family members are generated deterministically from a seed by randomizing
//! the predicate (for `linear-query`) or an orthogonal feature transform plus
//! feature scale and label flip (for the GLM families), so all members of a
//! family share the same declared constants.

use crate::universe::{Histogram, Universe};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for domain-membership checks: a parameter further than this from
/// its projection onto the domain is rejected.
pub const PROJECTION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("parameter outside domain (distance {0:e} from projection)")]
    ParameterOutsideDomain(f64),
    #[error("parameter has {0} coordinates, domain expects {1}")]
    ParameterDimension(usize, usize),
    #[error("universe points have {0} coordinates, query expects {1}")]
    PointDimension(usize, usize),
    #[error("histogram over {0} points does not match universe of size {1}")]
    UniverseMismatch(usize, usize),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
}

/// Convex parameter domain with exact projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParameterDomain {
    /// Axis-aligned box.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Euclidean ball centered at the origin.
    L2Ball { dim: usize, radius: f64 },
}

impl ParameterDomain {
    pub fn unit_interval() -> Self {
        ParameterDomain::Box {
            lower: vec![0.0],
            upper: vec![1.0],
        }
    }

    pub fn unit_ball(dim: usize) -> Self {
        ParameterDomain::L2Ball { dim, radius: 1.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            ParameterDomain::Box { lower, .. } => lower.len(),
            ParameterDomain::L2Ball { dim, .. } => *dim,
        }
    }

    /// Euclidean projection; exact for both kinds.
    pub fn project(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = theta.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, theta: &mut [f64]) {
        match self {
            ParameterDomain::Box { lower, upper } => {
                for ((t, lo), hi) in theta.iter_mut().zip(lower).zip(upper) {
                    *t = t.clamp(*lo, *hi);
                }
            }
            ParameterDomain::L2Ball { radius, .. } => {
                let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > *radius {
                    let s = radius / norm;
                    for t in theta.iter_mut() {
                        *t *= s;
                    }
                }
            }
        }
    }

    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        let p = self.project(theta);
        let d2: f64 = theta.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        d2.sqrt() <= tol
    }

    pub fn center(&self) -> Vec<f64> {
        match self {
            ParameterDomain::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| 0.5 * (lo + hi))
                .collect(),
            ParameterDomain::L2Ball { dim, .. } => vec![0.0; *dim],
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ParameterDomain::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| (hi - lo) * (hi - lo))
                .sum::<f64>()
                .sqrt(),
            ParameterDomain::L2Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Uniform sample from the domain.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ParameterDomain::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| rng.random_range(*lo..=*hi))
                .collect(),
            ParameterDomain::L2Ball { dim, radius } => {
                // Gaussian direction, radius via the inverse-CDF power rule.
                let mut v: Vec<f64> = (0..*dim).map(|_| gaussian(rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                let r = radius * rng.random::<f64>().powf(1.0 / *dim as f64);
                for x in &mut v {
                    *x *= r / norm;
                }
                v
            }
        }
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; good enough for sampling test points.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Seeded orthogonal feature transform shared by the GLM families. Members of
/// one family differ only in this map, so declared constants carry over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    /// Row-major `d x d` orthogonal matrix.
    matrix: Vec<f64>,
    dim: usize,
    /// Feature shrink factor in `(0, 1]`; keeps transformed features in the
    /// unit ball.
    scale: f64,
    label_flip: bool,
}

impl FeatureMap {
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        Self {
            matrix,
            dim,
            scale: 1.0,
            label_flip: false,
        }
    }

    fn seeded(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut m = Self::identity(dim);
        // Random product of Givens rotations plus an axis reflection.
        for i in 0..dim {
            for j in (i + 1)..dim {
                let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                m.rotate(i, j, angle);
            }
        }
        if dim >= 1 && rng.random::<bool>() {
            for r in 0..dim {
                m.matrix[r * dim] = -m.matrix[r * dim];
            }
        }
        m.scale = rng.random_range(0.5..=1.0);
        m.label_flip = rng.random::<bool>();
        m
    }

    fn rotate(&mut self, i: usize, j: usize, angle: f64) {
        let (s, c) = angle.sin_cos();
        for r in 0..self.dim {
            let a = self.matrix[r * self.dim + i];
            let b = self.matrix[r * self.dim + j];
            self.matrix[r * self.dim + i] = c * a - s * b;
            self.matrix[r * self.dim + j] = s * a + c * b;
        }
    }

    /// Applies `scale * Q` to the feature block of a universe point.
    fn features_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..self.dim {
                acc += self.matrix[r * self.dim + c] * x[c];
            }
            *o = self.scale * acc;
        }
    }

    fn label(&self, x: &[f64]) -> f64 {
        let y = x[self.dim];
        if self.label_flip {
            -y
        } else {
            y
        }
    }
}

/// The per-point loss shape; evaluation dispatches on this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LossKind {
    /// `(theta - p(x))^2` for the binary predicate `p(x) = [<w, x> >= b]`.
    PredicateSquared { weights: Vec<f64>, threshold: f64 },
    /// Huber-clipped squared loss `h_c(<theta, f(x)> - y)`.
    ClippedSquaredGlm { clip: f64, map: FeatureMap },
    /// `ln(1 + exp(-y <theta, f(x)>))`.
    LogisticGlm { map: FeatureMap },
    /// Logistic plus `(reg/2) |theta|^2`.
    RegularizedLogisticGlm { map: FeatureMap, reg: f64 },
}

/// A convex-minimization query: per-point loss and gradient evaluators, the
/// parameter domain, and declared constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossQuery {
    pub id: String,
    /// Generator seed recorded in transcripts so a query can be regenerated.
    pub seed: u64,
    pub kind: LossKind,
    pub domain: ParameterDomain,
    /// Declared scaling constant `S`.
    pub scale_bound: f64,
    /// Declared gradient-norm bound.
    pub lipschitz: f64,
    /// Declared gradient-Lipschitz (smoothness) constant for the solver.
    pub smoothness: f64,
    /// Declared strong-convexity modulus; zero when none.
    pub strong_convexity: f64,
}

impl LossQuery {
    /// Coordinate dimension this query expects of universe points, when it
    /// has a fixed expectation.
    pub fn expected_point_dim(&self) -> usize {
        match &self.kind {
            LossKind::PredicateSquared { weights, .. } => weights.len(),
            LossKind::ClippedSquaredGlm { map, .. }
            | LossKind::LogisticGlm { map }
            | LossKind::RegularizedLogisticGlm { map, .. } => map.dim + 1,
        }
    }

    /// Per-point loss `l(theta; x)`.
    pub fn loss(&self, theta: &[f64], x: &[f64]) -> f64 {
        match &self.kind {
            LossKind::PredicateSquared { weights, threshold } => {
                let p = predicate(weights, *threshold, x);
                let d = theta[0] - p;
                d * d
            }
            LossKind::ClippedSquaredGlm { clip, map } => {
                let z = transformed_inner(map, theta, x);
                huber(z - map.label(x), *clip)
            }
            LossKind::LogisticGlm { map } => {
                let z = transformed_inner(map, theta, x);
                log1p_exp(-map.label(x) * z)
            }
            LossKind::RegularizedLogisticGlm { map, reg } => {
                let z = transformed_inner(map, theta, x);
                let sq: f64 = theta.iter().map(|t| t * t).sum();
                log1p_exp(-map.label(x) * z) + 0.5 * reg * sq
            }
        }
    }

    /// Per-point gradient with respect to `theta`, written into `out`.
    pub fn grad_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        match &self.kind {
            LossKind::PredicateSquared { weights, threshold } => {
                out[0] = 2.0 * (theta[0] - predicate(weights, *threshold, x));
            }
            LossKind::ClippedSquaredGlm { clip, map } => {
                let z = transformed_inner(map, theta, x);
                let u = z - map.label(x);
                let psi = (2.0 * u).clamp(-2.0 * clip, 2.0 * clip);
                map.features_into(x, out);
                for o in out.iter_mut() {
                    *o *= psi;
                }
            }
            LossKind::LogisticGlm { map } => {
                let z = transformed_inner(map, theta, x);
                let y = map.label(x);
                let coeff = -y * sigmoid(-y * z);
                map.features_into(x, out);
                for o in out.iter_mut() {
                    *o *= coeff;
                }
            }
            LossKind::RegularizedLogisticGlm { map, reg } => {
                let z = transformed_inner(map, theta, x);
                let y = map.label(x);
                let coeff = -y * sigmoid(-y * z);
                map.features_into(x, out);
                for (o, t) in out.iter_mut().zip(theta) {
                    *o = *o * coeff + reg * t;
                }
            }
        }
    }

    pub fn grad(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.domain.dim()];
        self.grad_into(theta, x, &mut out);
        out
    }

    fn check_inputs(&self, theta: &[f64], h: &Histogram, u: &Universe) -> Result<(), LossError> {
        if theta.len() != self.domain.dim() {
            return Err(LossError::ParameterDimension(theta.len(), self.domain.dim()));
        }
        if h.len() != u.len() {
            return Err(LossError::UniverseMismatch(h.len(), u.len()));
        }
        if u.dim() != self.expected_point_dim() {
            return Err(LossError::PointDimension(u.dim(), self.expected_point_dim()));
        }
        let p = self.domain.project(theta);
        let dist = theta
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist > PROJECTION_TOL {
            return Err(LossError::ParameterOutsideDomain(dist));
        }
        Ok(())
    }
}

fn predicate(weights: &[f64], threshold: f64, x: &[f64]) -> f64 {
    let z: f64 = weights.iter().zip(x).map(|(w, v)| w * v).sum();
    if z >= threshold {
        1.0
    } else {
        0.0
    }
}

fn transformed_inner(map: &FeatureMap, theta: &[f64], x: &[f64]) -> f64 {
    // <theta, scale * Q * f> without materializing the transformed features.
    let mut z = 0.0;
    for (r, t) in theta.iter().enumerate() {
        let mut acc = 0.0;
        for c in 0..map.dim {
            acc += map.matrix[r * map.dim + c] * x[c];
        }
        z += t * acc;
    }
    map.scale * z
}

fn huber(u: f64, clip: f64) -> f64 {
    let a = u.abs();
    if a <= clip {
        u * u
    } else {
        clip * (2.0 * a - clip)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(z: f64) -> f64 {
    // ln(1 + e^z), stable for large |z|.
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mass-weighted average loss `sum_x h(x) l(theta; x)`; linear in `h`.
pub fn loss_on_histogram(
    q: &LossQuery,
    theta: &[f64],
    h: &Histogram,
    u: &Universe,
) -> Result<f64, LossError> {
    q.check_inputs(theta, h, u)?;
    Ok(loss_on_histogram_unchecked(q, theta, h, u))
}

pub(crate) fn loss_on_histogram_unchecked(
    q: &LossQuery,
    theta: &[f64],
    h: &Histogram,
    u: &Universe,
) -> f64 {
    let mut acc = 0.0;
    for (x, &m) in h.mass().iter().enumerate() {
        if m != 0.0 {
            acc += m * q.loss(theta, u.point(x));
        }
    }
    acc
}

/// Mass-weighted average gradient; linear in `h`.
pub fn grad_on_histogram(
    q: &LossQuery,
    theta: &[f64],
    h: &Histogram,
    u: &Universe,
) -> Result<Vec<f64>, LossError> {
    q.check_inputs(theta, h, u)?;
    let mut out = vec![0.0; q.domain.dim()];
    grad_on_histogram_unchecked(q, theta, h, u, &mut out);
    Ok(out)
}

pub(crate) fn grad_on_histogram_unchecked(
    q: &LossQuery,
    theta: &[f64],
    h: &Histogram,
    u: &Universe,
    out: &mut [f64],
) {
    out.fill(0.0);
    let d = q.domain.dim();
    let mut stack = [0.0f64; 8];
    let mut heap;
    let buf: &mut [f64] = if d <= 8 {
        &mut stack[..d]
    } else {
        heap = vec![0.0; d];
        &mut heap
    };
    for (x, &m) in h.mass().iter().enumerate() {
        if m != 0.0 {
            q.grad_into(theta, u.point(x), buf);
            for (o, g) in out.iter_mut().zip(buf.iter()) {
                *o += m * g;
            }
        }
    }
}

/// Sampled lower estimate of `max |<theta - theta', grad l_x(theta)>|`. Used
/// in tests to confirm a declared `S` is an upper bound; the declared value is
/// never replaced by this estimate.
pub fn scaling_constant<R: Rng>(q: &LossQuery, u: &Universe, samples: usize, rng: &mut R) -> f64 {
    let d = q.domain.dim();
    let mut best: f64 = 0.0;
    let mut grad = vec![0.0; d];
    for _ in 0..samples.max(1) {
        let theta = q.domain.sample(rng);
        let theta2 = q.domain.sample(rng);
        let x = rng.random_range(0..u.len());
        q.grad_into(&theta, u.point(x), &mut grad);
        let ip: f64 = theta
            .iter()
            .zip(&theta2)
            .zip(&grad)
            .map(|((a, b), g)| (a - b) * g)
            .sum();
        best = best.max(ip.abs());
    }
    best
}

/// Family specification: which loss shape and with what fixed parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FamilySpec {
    /// Family (a): scalar parameter against seeded threshold predicates on
    /// universe points of the given coordinate dimension.
    LinearQuery { point_dim: usize },
    /// Family (b): clipped squared-loss regression, parameter dimension
    /// `dim <= 3`, universe points `(features, y)`.
    ClippedSquaredGlm { dim: usize, clip: f64 },
    /// Family (c): logistic regression, labels in `{-1, +1}`.
    LogisticGlm { dim: usize },
    /// Family (d): logistic plus ridge, strong convexity `sigma`.
    StronglyConvexGlm { dim: usize, sigma: f64 },
}

/// Default clip for family (b), chosen so the declared scaling constant is 2.
pub const DEFAULT_CLIP: f64 = 0.5;

/// A named generator of [`LossQuery`] members; the adversary's pool source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFamily {
    pub name: String,
    pub spec: FamilySpec,
}

impl LossFamily {
    pub fn linear_query(point_dim: usize) -> Self {
        Self {
            name: "linear-query".into(),
            spec: FamilySpec::LinearQuery { point_dim },
        }
    }

    pub fn squared_glm(dim: usize, clip: f64) -> Self {
        Self {
            name: "squared-glm".into(),
            spec: FamilySpec::ClippedSquaredGlm { dim, clip },
        }
    }

    pub fn logistic_glm(dim: usize) -> Self {
        Self {
            name: "logistic-glm".into(),
            spec: FamilySpec::LogisticGlm { dim },
        }
    }

    pub fn strongly_convex_glm(dim: usize, sigma: f64) -> Self {
        Self {
            name: "strongly-convex-glm".into(),
            spec: FamilySpec::StronglyConvexGlm { dim, sigma },
        }
    }

    pub fn domain(&self) -> ParameterDomain {
        match &self.spec {
            FamilySpec::LinearQuery { .. } => ParameterDomain::unit_interval(),
            FamilySpec::ClippedSquaredGlm { dim, .. }
            | FamilySpec::LogisticGlm { dim }
            | FamilySpec::StronglyConvexGlm { dim, .. } => ParameterDomain::unit_ball(*dim),
        }
    }

    /// Declared scaling constant `S`, shared by every member.
    pub fn scale_bound(&self) -> f64 {
        match &self.spec {
            FamilySpec::LinearQuery { .. } => 2.0,
            FamilySpec::ClippedSquaredGlm { clip, .. } => 4.0 * clip,
            FamilySpec::LogisticGlm { .. } => 2.0,
            FamilySpec::StronglyConvexGlm { sigma, .. } => 2.0 * (1.0 + sigma),
        }
    }

    /// Declared gradient-norm bound `L`, shared by every member.
    pub fn lipschitz(&self) -> f64 {
        match &self.spec {
            FamilySpec::LinearQuery { .. } => 2.0,
            FamilySpec::ClippedSquaredGlm { clip, .. } => 2.0 * clip,
            FamilySpec::LogisticGlm { .. } => 1.0,
            FamilySpec::StronglyConvexGlm { sigma, .. } => 1.0 + sigma,
        }
    }

    fn smoothness(&self) -> f64 {
        match &self.spec {
            FamilySpec::LinearQuery { .. } => 2.0,
            FamilySpec::ClippedSquaredGlm { .. } => 2.0,
            FamilySpec::LogisticGlm { .. } => 0.25,
            FamilySpec::StronglyConvexGlm { sigma, .. } => 0.25 + sigma,
        }
    }

    pub fn strong_convexity(&self) -> f64 {
        match &self.spec {
            FamilySpec::LinearQuery { .. } => 2.0,
            FamilySpec::StronglyConvexGlm { sigma, .. } => *sigma,
            _ => 0.0,
        }
    }

    /// Deterministically generates the member with the given seed.
    pub fn member(&self, seed: u64) -> LossQuery {
        let kind = match &self.spec {
            FamilySpec::LinearQuery { point_dim } => {
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                let mut w: Vec<f64> = (0..*point_dim).map(|_| gaussian(&mut rng)).collect();
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                for v in &mut w {
                    *v /= norm;
                }
                let threshold = rng.random_range(-1.0..=1.0);
                LossKind::PredicateSquared {
                    weights: w,
                    threshold,
                }
            }
            FamilySpec::ClippedSquaredGlm { dim, clip } => LossKind::ClippedSquaredGlm {
                clip: *clip,
                map: FeatureMap::seeded(*dim, seed),
            },
            FamilySpec::LogisticGlm { dim } => LossKind::LogisticGlm {
                map: FeatureMap::seeded(*dim, seed),
            },
            FamilySpec::StronglyConvexGlm { dim, sigma: _ } => {
                LossKind::RegularizedLogisticGlm {
                    map: FeatureMap::seeded(*dim, seed),
                    reg: self.strong_convexity(),
                }
            }
        };
        LossQuery {
            id: format!("{}#{}", self.name, seed),
            seed,
            kind,
            domain: self.domain(),
            scale_bound: self.scale_bound(),
            lipschitz: self.lipschitz(),
            smoothness: self.smoothness(),
            strong_convexity: self.strong_convexity(),
        }
    }

    /// Pool of `size` members seeded from `base_seed`.
    pub fn pool(&self, base_seed: u64, size: usize) -> Vec<LossQuery> {
        (0..size as u64)
            .map(|i| self.member(base_seed.wrapping_add(i)))
            .collect()
    }
}

/// Fixed-predicate member of the linear-query family; used in tests where a
/// specific predicate is wanted rather than a seeded one.
pub fn predicate_query(weights: Vec<f64>, threshold: f64, id: &str) -> LossQuery {
    LossQuery {
        id: id.into(),
        seed: 0,
        kind: LossKind::PredicateSquared { weights, threshold },
        domain: ParameterDomain::unit_interval(),
        scale_bound: 2.0,
        lipschitz: 2.0,
        smoothness: 2.0,
        strong_convexity: 2.0,
    }
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn glm_test_universe(seed: u64, size: usize, dim: usize) -> Universe {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        let mut tries = 0;
        while pts.len() < size && tries < 10 * size {
            tries += 1;
            let mut f: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 {
                for v in &mut f {
                    *v /= norm;
                }
            }
            f.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
            if Universe::new(
                pts.iter().cloned().chain(std::iter::once(f.clone())).collect(),
            )
            .is_ok()
            {
                pts.push(f);
            }
        }
        Universe::new(pts).unwrap()
    }

    fn families(dim: usize) -> Vec<LossFamily> {
        vec![
            LossFamily::squared_glm(dim, DEFAULT_CLIP),
            LossFamily::logistic_glm(dim),
            LossFamily::strongly_convex_glm(dim, 0.5),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        #[test]
        fn convexity_first_order(seed in 0u64..10_000, fam_ix in 0usize..3, dim in 1usize..4) {
            let fam = &families(dim)[fam_ix];
            let q = fam.member(seed);
            let u = glm_test_universe(seed ^ 0x9e37, 5, dim);
            let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(1));
            for _ in 0..25 {
                let t1 = q.domain.sample(&mut rng);
                let t2 = q.domain.sample(&mut rng);
                let x = u.point(rng.random_range(0..u.len()));
                let g = q.grad(&t1, x);
                let lin: f64 = g.iter().zip(t2.iter().zip(&t1)).map(|(gi, (a, b))| gi * (a - b)).sum();
                let sigma = q.strong_convexity;
                let dist2: f64 = t1.iter().zip(&t2).map(|(a, b)| (a - b) * (a - b)).sum();
                prop_assert!(
                    q.loss(&t2, x) >= q.loss(&t1, x) + lin + 0.5 * sigma * dist2 - 1e-9,
                    "first-order convexity violated for {}", q.id
                );
            }
        }

        #[test]
        fn sampled_scaling_below_declared(seed in 0u64..10_000, fam_ix in 0usize..3, dim in 1usize..4) {
            let fam = &families(dim)[fam_ix];
            let q = fam.member(seed);
            let u = glm_test_universe(seed ^ 0x51ab, 6, dim);
            let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(2));
            let est = scaling_constant(&q, &u, 200, &mut rng);
            prop_assert!(est <= q.scale_bound + 1e-12);
        }

        #[test]
        fn gradient_matches_finite_differences(seed in 0u64..10_000, fam_ix in 0usize..3, dim in 1usize..4) {
            let fam = &families(dim)[fam_ix];
            let q = fam.member(seed);
            let u = glm_test_universe(seed ^ 0x77f2, 4, dim);
            let h = Histogram::uniform(&u);
            let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(3));
            // Interior point so central differences stay inside the domain.
            let mut theta = q.domain.sample(&mut rng);
            for t in &mut theta {
                *t *= 0.5;
            }
            let g = grad_on_histogram(&q, &theta, &h, &u).unwrap();
            let eps = 1e-6;
            for i in 0..dim {
                let mut lo = theta.clone();
                let mut hi = theta.clone();
                lo[i] -= eps;
                hi[i] += eps;
                let flo = loss_on_histogram(&q, &lo, &h, &u).unwrap();
                let fhi = loss_on_histogram(&q, &hi, &h, &u).unwrap();
                let fd = (fhi - flo) / (2.0 * eps);
                let denom = g[i].abs().max(1.0);
                prop_assert!(
                    (fd - g[i]).abs() / denom <= 1e-5,
                    "finite-difference mismatch: fd {fd} vs grad {}", g[i]
                );
            }
        }
    }
}
