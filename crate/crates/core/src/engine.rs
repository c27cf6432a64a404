//! The broadcast gossip state machine and the seeded trial loop.
//!
//! One step: a node `v` drawn uniformly at random broadcasts `x_v`, and every
//! out-neighbor `u` sets `x_u <- (1 - q) x_u + q x_v`. A trial runs steps
//! until the disagreement `d(t)` drops to `epsilon`, then records the bias
//! `|x_ave(T) - x_ave(0)|^2`.
//!
//! `d(t)` is checked after every step, so [`StateVector`] keeps it up to
//! date incrementally in `O(deg v)` and rebuilds it from scratch every
//! [`REBASE_INTERVAL`] steps to bound floating-point drift.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::{Error, Result, Scalar};

pub const REBASE_INTERVAL: u32 = 4096;

/// Step cap used when no spectral gap is available (non-symmetric graphs, `q = 1`).
pub const FALLBACK_MAX_STEPS: u64 = 10_000_000;

/// Node values plus cached sums for `x_ave(t)` and `d(t)`.
///
/// The caches are taken relative to a shift `c` (the mean at the last
/// rebase): `sum_dev = Σ(x_v - c)` and `sq_dev = Σ(x_v - c)^2`.
#[derive(Debug, Clone)]
pub struct StateVector<T> {
    x: Vec<T>,
    shift: T,
    sum_dev: T,
    sq_dev: T,
    since_rebase: u32,
}

impl<T: Scalar> StateVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("state vector must be nonempty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("state values must be finite"));
        }
        let mut s = StateVector {
            x: values,
            shift: T::zero(),
            sum_dev: T::zero(),
            sq_dev: T::zero(),
            since_rebase: 0,
        };
        s.rebase();
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn values(&self) -> &[T] {
        &self.x
    }

    pub fn into_values(self) -> Vec<T> {
        self.x
    }

    /// Cached `x_ave(t)`.
    pub fn average(&self) -> T {
        self.shift + self.sum_dev / T::of_usize(self.n())
    }

    /// Cached `d(t)`, clamped at zero.
    pub fn disagreement(&self) -> T {
        let n = T::of_usize(self.n());
        let m = self.sum_dev / n;
        (self.sq_dev / n - m * m).max(T::zero())
    }

    pub fn average_from_scratch(&self) -> T {
        let c = self.x[0];
        let s = self.x.iter().fold(T::zero(), |acc, &v| acc + (v - c));
        c + s / T::of_usize(self.n())
    }

    /// Two-pass `d(t)`; exactly zero when all values are equal.
    pub fn disagreement_from_scratch(&self) -> T {
        let m = self.average_from_scratch();
        let s = self.x.iter().fold(T::zero(), |acc, &v| acc + (v - m) * (v - m));
        s / T::of_usize(self.n())
    }

    /// Recomputes the caches from the current values.
    pub fn rebase(&mut self) {
        self.shift = self.average_from_scratch();
        let c = self.shift;
        let (s, sq) = self
            .x
            .iter()
            .fold((T::zero(), T::zero()), |(s, sq), &v| (s + (v - c), sq + (v - c) * (v - c)));
        self.sum_dev = s;
        self.sq_dev = sq;
        self.since_rebase = 0;
    }

    /// Applies one broadcast from `v`. Panics if `v` is out of range.
    pub fn broadcast(&mut self, g: &Graph, v: usize, q: T) {
        let xv = self.x[v];
        let keep = T::one() - q;
        let c = self.shift;
        for &u in g.out_neighbors(v) {
            let old = self.x[u];
            // (1-q)x_u + q x_v, written so that q = 1 copies x_v bit-exactly.
            // The clamp only undoes rounding: the exact value lies between the two.
            let new = (keep * old + q * xv).max(old.min(xv)).min(old.max(xv));
            let delta = new - old;
            self.sum_dev = self.sum_dev + delta;
            self.sq_dev = self.sq_dev + delta * ((new - c) + (old - c));
            self.x[u] = new;
        }
        self.since_rebase += 1;
        if self.since_rebase >= REBASE_INTERVAL {
            self.rebase();
        }
    }

    /// The change in `x_ave` a broadcast from `v` would cause:
    /// `(q / N) Σ_{u ∈ N+(v)} (x_v - x_u)`.
    pub fn average_increment(&self, g: &Graph, v: usize, q: T) -> T {
        let xv = self.x[v];
        let s = g
            .out_neighbors(v)
            .iter()
            .fold(T::zero(), |acc, &u| acc + (xv - self.x[u]));
        q * s / T::of_usize(self.n())
    }
}

pub fn broadcast_step<T: Scalar>(state: &mut StateVector<T>, g: &Graph, v: usize, q: T) {
    state.broadcast(g, v, q)
}

pub fn average_increment<T: Scalar>(state: &StateVector<T>, g: &Graph, v: usize, q: T) -> T {
    state.average_increment(g, v, q)
}

pub fn disagreement<T: Scalar>(state: &StateVector<T>) -> T {
    state.disagreement()
}

/// Deterministic per-step cap on `|x_ave(t+1) - x_ave(t)|`: `q deg+_max L / N`.
///
/// Evaluated in the same operation order as [`StateVector::average_increment`]
/// so the comparison holds without slack for `L = 1`.
pub fn step_bound<T: Scalar>(g: &Graph, q: T, range: T) -> T {
    q * (T::of_usize(g.deg_plus_max()) * range) / T::of_usize(g.n())
}

/// How `x(0)` is chosen for each trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "values", rename_all = "snake_case")]
pub enum InitialCondition<T> {
    /// Fresh i.i.d. uniform draw on `[0, L]` per trial.
    Uniform,
    /// The same vector in every trial; only the broadcaster sequence varies.
    Fixed(Arc<[T]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<T> {
    /// Mixing parameter, in `(0, 1]`.
    pub q: T,
    /// Stop once `d(t) <= epsilon`.
    pub epsilon: T,
    /// Upper end `L` of the value range `[0, L]`.
    pub range: T,
    pub max_steps: u64,
    pub master_seed: u64,
    pub trials: usize,
    pub initial: InitialCondition<T>,
}

impl<T: Scalar> SimConfig<T> {
    /// `epsilon = 1e-4`, `L = 1`, 1000 trials, uniform resampled `x(0)`.
    pub fn new(q: T) -> Self {
        SimConfig {
            q,
            epsilon: T::of(1e-4),
            range: T::one(),
            max_steps: FALLBACK_MAX_STEPS,
            master_seed: 0,
            trials: 1000,
            initial: InitialCondition::Uniform,
        }
    }

    pub fn with_epsilon(mut self, epsilon: T) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_range(mut self, range: T) -> Self {
        self.range = range;
        self
    }

    pub fn with_initial(mut self, initial: InitialCondition<T>) -> Self {
        self.initial = initial;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > T::zero() && self.q <= T::one()) {
            return Err(Error::param(format!("q must lie in (0, 1], got {}", self.q)));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::param("epsilon must be positive"));
        }
        if !(self.range > T::zero() && self.range.is_finite()) {
            return Err(Error::param("value range L must be positive and finite"));
        }
        if self.trials < 1 {
            return Err(Error::param("need at least one trial"));
        }
        if self.max_steps < 1 {
            return Err(Error::param("max_steps must be at least 1"));
        }
        if let InitialCondition::Fixed(x0) = &self.initial {
            if x0.iter().any(|&v| !(v >= T::zero() && v <= self.range)) {
                return Err(Error::param("fixed initial values must lie in [0, L]"));
            }
        }
        Ok(())
    }
}

/// Default step cap: `500 N ceil(N / (2 q (1-q) lambda1))`, saturating, or
/// [`FALLBACK_MAX_STEPS`] when the gap is unknown or `q = 1`.
pub fn default_max_steps(n: usize, q: f64, lambda1: Option<f64>) -> u64 {
    let contraction = match lambda1 {
        Some(l) if l > 0.0 && q > 0.0 && q < 1.0 => 2.0 * q * (1.0 - q) * l / n as f64,
        _ => return FALLBACK_MAX_STEPS,
    };
    let steps = 500.0 * n as f64 * (1.0 / contraction).ceil();
    if steps >= u64::MAX as f64 {
        u64::MAX
    } else {
        steps as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult<T> {
    /// `|x_ave(T) - x_ave(0)|^2` at the stopping time.
    pub beta: T,
    pub stop_time: u64,
    pub hit_cap: bool,
    /// Largest `|x_ave(t+1) - x_ave(t)|` seen during the trial.
    pub max_step_increment: T,
    /// Steps whose increment exceeded [`step_bound`]; expected to stay zero.
    pub bound_violations: u64,
    /// `d(T)`, for judging how much residual disagreement remains in `beta`.
    pub final_disagreement: T,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE5_E9B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the independent stream for `(master_seed, index)`:
/// `splitmix64(master_seed ^ splitmix64(index))`.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master_seed, trial_index))
}

/// `n` i.i.d. uniform values on `[0, range]`.
pub fn uniform_values<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize, range: T) -> Vec<T> {
    (0..n).map(|_| T::of(rng.gen::<f64>()) * range).collect()
}

/// Runs one realization.
///
/// The trial's stream draws `x(0)` first (when resampling), then one
/// broadcaster per step, so the result is a pure function of
/// `(g, cfg, trial_index)`.
pub fn run_trial<T: Scalar>(g: &Graph, cfg: &SimConfig<T>, trial_index: u64) -> Result<TrialResult<T>> {
    cfg.validate()?;
    let n = g.n();
    let mut rng = trial_rng(cfg.master_seed, trial_index);
    let x0 = match &cfg.initial {
        InitialCondition::Uniform => uniform_values(&mut rng, n, cfg.range),
        InitialCondition::Fixed(values) => {
            if values.len() != n {
                return Err(Error::param(format!(
                    "fixed initial condition has {} values for {n} nodes",
                    values.len()
                )));
            }
            values.to_vec()
        }
    };
    let mut state = StateVector::new(x0)?;
    let avg0 = state.average_from_scratch();
    let bound = step_bound(g, cfg.q, cfg.range);
    // Cached d(t) may drift by a few ulps of L^2 between rebases; anything
    // within this band of epsilon is confirmed by an exact recomputation.
    let slack = T::epsilon() * cfg.range * cfg.range * T::of(16.0);

    let mut t = 0u64;
    let mut hit_cap = false;
    let mut max_inc = T::zero();
    let mut violations = 0u64;
    loop {
        if state.disagreement() <= cfg.epsilon + slack {
            state.rebase();
            if state.disagreement() <= cfg.epsilon {
                break;
            }
        }
        if t >= cfg.max_steps {
            hit_cap = true;
            break;
        }
        let v = rng.gen_range(0..n as u64) as usize;
        let inc = state.average_increment(g, v, cfg.q).abs();
        if inc > max_inc {
            max_inc = inc;
        }
        if inc > bound {
            violations += 1;
        }
        state.broadcast(g, v, cfg.q);
        t += 1;
    }
    let drift = state.average_from_scratch() - avg0;
    Ok(TrialResult {
        beta: drift * drift,
        stop_time: t,
        hit_cap,
        max_step_increment: max_inc,
        bound_violations: violations,
        final_disagreement: state.disagreement_from_scratch(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn state(x: &[f64]) -> StateVector<f64> {
        StateVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn broadcast_examples() {
        let g = graph::ring(3).unwrap();
        let mut s = state(&[0.0, 1.0, 0.0]);
        broadcast_step(&mut s, &g, 1, 0.5);
        assert_eq!(s.values(), &[0.5, 1.0, 0.5]);

        let g = graph::de_bruijn(2, 3).unwrap();
        let mut x = vec![0.0; 8];
        x[3] = 1.0;
        let mut s = state(&x);
        broadcast_step(&mut s, &g, 3, 0.25);
        let mut want = vec![0.0; 8];
        want[3] = 1.0;
        want[6] = 0.25;
        want[7] = 0.25;
        assert_eq!(s.values(), want.as_slice());
    }

    #[test]
    fn q_one_copies_exactly() {
        let g = graph::complete(5).unwrap();
        let x = [0.1, 0.7, 0.3333333333333333, 0.9, 0.05];
        let mut s = state(&x);
        broadcast_step(&mut s, &g, 2, 1.0);
        assert!(s.values().iter().all(|&v| v == x[2]));
    }

    #[test]
    fn increment_examples() {
        let g = graph::ring(3).unwrap();
        assert_relative_eq!(average_increment(&state(&[0.0, 1.0, 0.0]), &g, 1, 0.5), 1.0 / 3.0);
        let g = graph::complete(2).unwrap();
        assert_eq!(average_increment(&state(&[0.0, 1.0]), &g, 1, 0.5), 0.25);
        let g = graph::hypercube(3).unwrap();
        assert_eq!(average_increment(&state(&[0.4; 8]), &g, 5, 0.7), 0.0);
    }

    #[test]
    fn disagreement_examples() {
        assert_eq!(disagreement(&state(&[0.0, 1.0])), 0.25);
        assert_eq!(disagreement(&state(&[0.0, 0.0, 1.0, 1.0])), 0.25);
        assert_eq!(disagreement(&state(&[0.3; 7])), 0.0);
        assert_eq!(state(&[0.1; 3]).disagreement_from_scratch(), 0.0);
    }

    #[test]
    fn step_bound_examples() {
        assert_eq!(step_bound(&graph::complete(16).unwrap(), 0.5, 1.0), 0.46875);
        for n in [3, 8, 50] {
            assert_relative_eq!(step_bound(&graph::ring(n).unwrap(), 0.5, 1.0), 1.0 / n as f64);
        }
        assert!(step_bound(&graph::ring(8).unwrap(), 1e-12, 1.0) < 1e-12);
    }

    #[test]
    fn cache_coherent_after_many_steps() {
        let g = graph::torus_lattice(2, 6).unwrap();
        let mut rng = trial_rng(5, 0);
        let mut s = StateVector::new(uniform_values(&mut rng, g.n(), 1.0f64)).unwrap();
        for _ in 0..100_000 {
            let v = rng.gen_range(0..g.n());
            s.broadcast(&g, v, 0.3);
            if rng.gen_range(0..997) == 0 {
                // Perturb so the run does not just sit at consensus.
                let u = rng.gen_range(0..g.n());
                let mut x = s.clone().into_values();
                x[u] = rng.gen();
                s = StateVector::new(x).unwrap();
            }
        }
        assert!((s.average() - s.average_from_scratch()).abs() <= 1e-9);
        assert!((s.disagreement() - s.disagreement_from_scratch()).abs() <= 1e-9);
    }

    #[test]
    fn trial_is_deterministic() {
        let g = graph::ring(8).unwrap();
        let cfg = SimConfig::new(0.5).with_seed(42);
        let a = run_trial(&g, &cfg, 3).unwrap();
        let b = run_trial(&g, &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert!(!a.hit_cap);
        assert!(a.final_disagreement <= 1e-4);
        assert_ne!(a, run_trial(&g, &cfg, 4).unwrap());
    }

    #[test]
    fn constant_start_stops_immediately() {
        let g = graph::hypercube(3).unwrap();
        let cfg = SimConfig::new(0.5).with_initial(InitialCondition::Fixed(vec![0.6; 8].into()));
        let r = run_trial(&g, &cfg, 0).unwrap();
        assert_eq!((r.beta, r.stop_time), (0.0, 0));
    }

    #[test]
    fn q_one_ends_on_an_initial_value() {
        let g = graph::complete(4).unwrap();
        let x0 = [0.12, 0.55, 0.31, 0.97];
        let cfg = SimConfig::new(1.0)
            .with_epsilon(1e-300)
            .with_initial(InitialCondition::Fixed(x0.to_vec().into()));
        for trial in 0..20 {
            let r = run_trial(&g, &cfg, trial).unwrap();
            assert!(!r.hit_cap);
            assert_eq!(r.final_disagreement, 0.0);
            let avg0 = x0.iter().sum::<f64>() / 4.0;
            // beta = (x* - avg0)^2 for some initial x*.
            assert!(x0.iter().any(|&x| ((x - avg0) * (x - avg0) - r.beta).abs() < 1e-15));
        }
    }

    #[test]
    fn cap_is_reported() {
        let g = graph::ring(64).unwrap();
        let cfg = SimConfig::new(0.5).with_epsilon(1e-12).with_max_steps(10);
        let r = run_trial(&g, &cfg, 0).unwrap();
        assert!(r.hit_cap);
        assert_eq!(r.stop_time, 10);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(0.0).validate().is_err());
        assert!(SimConfig::new(1.5).validate().is_err());
        assert!(SimConfig::new(1.0).validate().is_ok());
        assert!(SimConfig::new(0.5).with_epsilon(0.0).validate().is_err());
        assert!(SimConfig::new(0.5).with_trials(0).validate().is_err());
        assert!(SimConfig::new(0.5).with_max_steps(0).validate().is_err());
        let wrong_len = SimConfig::new(0.5).with_initial(InitialCondition::Fixed(vec![0.5; 3].into()));
        assert!(run_trial(&graph::ring(4).unwrap(), &wrong_len, 0).is_err());
    }

    #[test]
    fn default_cap() {
        // complete(16), q = 1/2: contraction 0.5 -> 500 * 16 * 2.
        assert_eq!(default_max_steps(16, 0.5, Some(16.0)), 16_000);
        assert_eq!(default_max_steps(16, 1.0, Some(16.0)), FALLBACK_MAX_STEPS);
        assert_eq!(default_max_steps(16, 0.5, None), FALLBACK_MAX_STEPS);
    }

    #[test]
    fn single_precision_trial() {
        let g = graph::hypercube(4).unwrap();
        let r = run_trial(&g, &SimConfig::<f32>::new(0.5).with_seed(1), 0).unwrap();
        assert!(!r.hit_cap);
        assert_eq!(r.bound_violations, 0);
        assert!(r.beta >= 0.0 && r.beta <= 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn steps_are_convex(seed in any::<u64>(), q in 0.01f64..=1.0, steps in 1usize..400) {
            let g = graph::torus_lattice(2, 4).unwrap();
            let mut rng = trial_rng(seed, 0);
            let mut s = StateVector::new(uniform_values(&mut rng, g.n(), 1.0)).unwrap();
            let bound = step_bound(&g, q, 1.0);
            let (mut lo, mut hi) = (1.0f64, 0.0f64);
            for &v in s.values() { lo = lo.min(v); hi = hi.max(v); }
            for _ in 0..steps {
                let v = rng.gen_range(0..g.n());
                let inc = s.average_increment(&g, v, q);
                prop_assert!(inc.abs() <= bound);
                let before = s.average_from_scratch();
                s.broadcast(&g, v, q);
                prop_assert!((s.average_from_scratch() - before - inc).abs() <= 1e-13);
                let (mut l2, mut h2) = (1.0f64, 0.0f64);
                for &x in s.values() { l2 = l2.min(x); h2 = h2.max(x); }
                prop_assert!(l2 >= lo && h2 <= hi);
                lo = l2;
                hi = h2;
            }
        }
    }
}
