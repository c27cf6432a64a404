//! Monte Carlo bias estimation, closed-form bounds and enumeration oracles.
//!
//! The oracles average over all `N` equally likely broadcasters, which gives
//! the exact one-step conditional moments of `x_ave` for a given state.

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{run_trial, InitialCondition, SimConfig, StateVector, TrialResult};
use crate::graph::Graph;
use crate::spectral::{self, SpectralSummary};
use crate::{Error, Result, Scalar, SpectralScalar};

/// An estimate is flagged unreliable when more than this fraction of trials hit the step cap.
pub const UNRELIABLE_CAP_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho<T> {
    pub q: T,
    pub epsilon: T,
    pub range: T,
    pub max_steps: u64,
    pub master_seed: u64,
    pub trials: usize,
    /// `"uniform"` (resampled per trial) or `"fixed"`.
    pub x0_mode: &'static str,
}

impl<T: Scalar> From<&SimConfig<T>> for ConfigEcho<T> {
    fn from(cfg: &SimConfig<T>) -> Self {
        ConfigEcho {
            q: cfg.q,
            epsilon: cfg.epsilon,
            range: cfg.range,
            max_steps: cfg.max_steps,
            master_seed: cfg.master_seed,
            trials: cfg.trials,
            x0_mode: match cfg.initial {
                InitialCondition::Uniform => "uniform",
                InitialCondition::Fixed(_) => "fixed",
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasEstimate<T> {
    pub mean_beta: T,
    /// Sample standard deviation over `sqrt(trials)`.
    pub std_error: T,
    pub trials: usize,
    pub hit_cap_count: usize,
    pub unreliable: bool,
    pub mean_stop_time: f64,
    pub mean_final_disagreement: T,
    pub max_step_increment: T,
    pub bound_violations: u64,
    pub config_echo: ConfigEcho<T>,
}

impl<T: Scalar> BiasEstimate<T> {
    /// Folds trial results in index order, so the estimate does not depend
    /// on which worker finished first.
    pub fn from_trials(trials: &[TrialResult<T>], cfg: &SimConfig<T>) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::param("no trials to aggregate"));
        }
        let count = trials.len();
        let n = T::of_usize(count);
        let mean = trials.iter().fold(T::zero(), |a, r| a + r.beta) / n;
        let std_error = if count > 1 {
            let ss = trials
                .iter()
                .fold(T::zero(), |a, r| a + (r.beta - mean) * (r.beta - mean));
            (ss / T::of_usize(count - 1)).sqrt() / n.sqrt()
        } else {
            T::zero()
        };
        let hit_cap_count = trials.iter().filter(|r| r.hit_cap).count();
        Ok(BiasEstimate {
            mean_beta: mean,
            std_error,
            trials: count,
            hit_cap_count,
            unreliable: hit_cap_count as f64 > UNRELIABLE_CAP_FRACTION * count as f64,
            mean_stop_time: trials.iter().map(|r| r.stop_time as f64).sum::<f64>() / count as f64,
            mean_final_disagreement: trials.iter().fold(T::zero(), |a, r| a + r.final_disagreement) / n,
            max_step_increment: trials
                .iter()
                .fold(T::zero(), |a, r| a.max(r.max_step_increment)),
            bound_violations: trials.iter().map(|r| r.bound_violations).sum(),
            config_echo: cfg.into(),
        })
    }
}

/// Runs `cfg.trials` trials (in parallel), returned in trial-index order.
pub fn run_trials<T: Scalar>(g: &Graph, cfg: &SimConfig<T>) -> Result<Vec<TrialResult<T>>> {
    cfg.validate()?;
    if !g.is_connected() {
        return Err(Error::Disconnected("bias estimation requires a connected graph".into()));
    }
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| run_trial(g, cfg, i))
        .collect()
}

pub fn estimate_bias<T: Scalar>(g: &Graph, cfg: &SimConfig<T>) -> Result<BiasEstimate<T>> {
    BiasEstimate::from_trials(&run_trials(g, cfg)?, cfg)
}

/// Exact `E[x_ave(t+1) - x_ave(t) | x(t)]`, by enumerating every broadcaster.
/// Zero on balanced graphs.
pub fn martingale_oracle<T: Scalar>(state: &StateVector<T>, g: &Graph, q: T) -> T {
    let total = (0..g.n()).fold(T::zero(), |a, v| a + state.average_increment(g, v, q));
    total / T::of_usize(g.n())
}

/// Closed form of the drift: `(q / N^2) Σ_v (deg+_v - deg-_v) x_v`.
pub fn degree_imbalance_drift<T: Scalar>(state: &StateVector<T>, g: &Graph, q: T) -> T {
    let n = T::of_usize(g.n());
    let s = state.values().iter().enumerate().fold(T::zero(), |a, (v, &x)| {
        let diff = g.out_degree(v) as f64 - g.in_degree(v) as f64;
        a + T::of(diff) * x
    });
    q * s / (n * n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceCheck<T> {
    /// `E[(x_ave(t+1) - x_ave(t))^2 | x(t)]` by enumeration.
    pub exact: T,
    /// `4 q^2 deg_max^2 d(t) / N^2`.
    pub bound: T,
}

impl<T: Scalar> VarianceCheck<T> {
    /// Allows a few ulps: the bound is attained with equality on `K_2`, where
    /// rounding alone can tip `exact` over.
    pub fn holds(&self) -> bool {
        self.exact <= self.bound * (T::one() + T::of(64.0) * T::epsilon())
    }
}

pub fn variance_oracle<T: Scalar>(state: &StateVector<T>, g: &Graph, q: T) -> VarianceCheck<T> {
    let n = T::of_usize(g.n());
    let exact = (0..g.n()).fold(T::zero(), |a, v| {
        let inc = state.average_increment(g, v, q);
        a + inc * inc
    }) / n;
    let deg = T::of_usize(g.deg_max());
    let four = T::of(4.0);
    let bound = four * q * q * deg * deg * state.disagreement_from_scratch() / (n * n);
    VarianceCheck { exact, bound }
}

fn check_open_q<T: Scalar>(q: T) -> Result<()> {
    if q > T::zero() && q < T::one() {
        Ok(())
    } else {
        Err(Error::param(format!("mixing parameter must lie in (0, 1), got {q}")))
    }
}

/// `(q / (1-q)) deg_max^2 / (N lambda1)` from already-known graph quantities.
pub fn prop3_shape_from<T: Scalar>(lambda1: T, deg_max: usize, n: usize, q: T) -> Result<T> {
    check_open_q(q)?;
    if !(lambda1 > T::zero()) {
        return Err(Error::UnsupportedGraph("spectral gap must be positive".into()));
    }
    let d = T::of_usize(deg_max);
    Ok(q / (T::one() - q) * d * d / (T::of_usize(n) * lambda1))
}

fn connected_gap<T: SpectralScalar>(g: &Graph) -> Result<SpectralSummary<T>> {
    let s = spectral::spectral_gap(g, T::of(spectral::ZERO_TOL))?;
    if !s.is_connected() {
        return Err(Error::Disconnected("bound shape requires a connected graph".into()));
    }
    Ok(s)
}

/// Shape of the long-run bias bound, up to the unknown multiplicative constant.
pub fn prop3_shape<T: SpectralScalar>(g: &Graph, q: T) -> Result<T> {
    check_open_q(q)?;
    let s = connected_gap::<T>(g)?;
    prop3_shape_from(s.lambda1, g.deg_max(), g.n(), q)
}

/// Markov-inequality shape for `Pr[beta(inf) > c]`: `prop3_shape / c`.
pub fn tail_bound<T: SpectralScalar>(g: &Graph, q: T, c: T) -> Result<T> {
    if !(c > T::zero()) {
        return Err(Error::param("tail threshold c must be positive"));
    }
    Ok(prop3_shape(g, q)? / c)
}

/// Expected bias on the complete graph: `Var(x0) q / (2-q) (N-1) / N`,
/// with `Var` the sample variance of the initial vector (divisor `N - 1`).
pub fn complete_graph_bias<T: Scalar>(sample_var_x0: T, q: T, n: usize) -> Result<T> {
    if !(q > T::zero() && q <= T::one()) {
        return Err(Error::param(format!("q must lie in (0, 1], got {q}")));
    }
    if n < 2 {
        return Err(Error::param("complete graph bias needs n >= 2"));
    }
    if !(sample_var_x0 >= T::zero()) {
        return Err(Error::param("variance must be nonnegative"));
    }
    let two = T::of(2.0);
    Ok(sample_var_x0 * q / (two - q) * T::of_usize(n - 1) / T::of_usize(n))
}

/// Unbiased sample variance (divisor `N - 1`).
pub fn sample_variance<T: Scalar>(x: &[T]) -> T {
    if x.len() < 2 {
        return T::zero();
    }
    let n = T::of_usize(x.len());
    let mean = x.iter().fold(T::zero(), |a, &v| a + v) / n;
    x.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / T::of_usize(x.len() - 1)
}

/// Least-squares slope of `ln(beta)` against `ln(N)`.
pub fn fit_scaling<T: Scalar>(series: &[(T, T)]) -> Result<T> {
    if series.len() < 4 {
        return Err(Error::param("scaling fit needs at least 4 points"));
    }
    if series.iter().any(|&(n, b)| !(n > T::zero() && b > T::zero() && n.is_finite() && b.is_finite())) {
        return Err(Error::param("scaling fit needs positive finite N and beta"));
    }
    let mut sizes: Vec<T> = series.iter().map(|p| p.0).collect();
    sizes.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    if sizes.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::param("scaling fit needs distinct N values"));
    }
    let k = T::of_usize(series.len());
    let (sx, sy) = series
        .iter()
        .fold((T::zero(), T::zero()), |(sx, sy), &(n, b)| (sx + n.ln(), sy + b.ln()));
    let (mx, my) = (sx / k, sy / k);
    let (sxy, sxx) = series.iter().fold((T::zero(), T::zero()), |(sxy, sxx), &(n, b)| {
        let dx = n.ln() - mx;
        (sxy + dx * (b.ln() - my), sxx + dx * dx)
    });
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailPoint<T> {
    pub c: T,
    pub bound_shape: T,
}

/// Theoretical quantities for one (graph, configuration) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport<T> {
    pub family: String,
    pub n: usize,
    pub deg_plus_max: usize,
    pub deg_max: usize,
    pub balanced: bool,
    pub symmetric: bool,
    /// Absent for non-symmetric graphs.
    pub spectral: Option<SpectralSummary<T>>,
    pub step_bound: T,
    /// Absent for non-symmetric or disconnected graphs, and for `q = 1`.
    pub rate_bound: Option<T>,
    pub prop3_shape: Option<T>,
    /// Present iff the graph is tagged as a complete graph.
    pub complete_closed_form: Option<T>,
    /// Tail shape at `c = 1/N`, `0.01` and `0.1`.
    pub tail: Vec<TailPoint<T>>,
}

impl<T: SpectralScalar> BoundReport<T> {
    /// `x0_variance` feeds the complete-graph closed form: the sample
    /// variance of a fixed `x(0)`, or `L^2 / 12` for uniform resampling.
    pub fn compute(g: &Graph, q: T, range: T, x0_variance: T) -> Result<Self> {
        let spectral = if g.is_symmetric() {
            Some(spectral::spectral_gap(g, T::of(spectral::ZERO_TOL))?)
        } else {
            None
        };
        Self::with_spectral(g, spectral, q, range, x0_variance)
    }

    pub fn with_spectral(
        g: &Graph,
        spectral: Option<SpectralSummary<T>>,
        q: T,
        range: T,
        x0_variance: T,
    ) -> Result<Self> {
        let usable = spectral.filter(|s| s.is_connected());
        let rate_bound = usable.and_then(|s| spectral::rate_bound_from(s.lambda1, g.n(), q).ok());
        let shape = usable.and_then(|s| prop3_shape_from(s.lambda1, g.deg_max(), g.n(), q).ok());
        let tail = match shape {
            Some(p) => [T::one() / T::of_usize(g.n()), T::of(0.01), T::of(0.1)]
                .into_iter()
                .map(|c| TailPoint { c, bound_shape: p / c })
                .collect(),
            None => Vec::new(),
        };
        let complete_closed_form = if g.family().is_complete() {
            Some(complete_graph_bias(x0_variance, q, g.n())?)
        } else {
            None
        };
        Ok(BoundReport {
            family: g.family().name().to_string(),
            n: g.n(),
            deg_plus_max: g.deg_plus_max(),
            deg_max: g.deg_max(),
            balanced: g.is_balanced(),
            symmetric: g.is_symmetric(),
            spectral,
            step_bound: crate::engine::step_bound(g, q, range),
            rate_bound,
            prop3_shape: shape,
            complete_closed_form,
            tail,
        })
    }
}
