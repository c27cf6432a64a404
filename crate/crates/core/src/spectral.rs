//! Graph Laplacian and spectral gap.
//!
//! The Laplacian is `L = D_out - A` with `A[v][u] = 1` when `u` hears `v`.
//! Only symmetric graphs are diagonalized; their spectrum is real and the
//! dense symmetric eigensolver is exact to rounding for the sizes used here.

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::Float;
use serde::Serialize;

use crate::graph::Graph;
use crate::{Error, Result, Scalar, SpectralScalar};

/// Default relative threshold below which an eigenvalue counts as zero.
pub const ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralSummary<T> {
    /// Smallest eigenvalue classified as nonzero.
    pub lambda1: T,
    pub lambda_max: T,
    /// Number of eigenvalues at or below `tol * lambda_max`; 1 iff connected.
    pub multiplicity_zero: usize,
}

impl<T: Scalar> SpectralSummary<T> {
    pub fn is_connected(&self) -> bool {
        self.multiplicity_zero == 1
    }
}

/// Integer Laplacian; every row sums to exactly zero.
pub fn laplacian_i64(g: &Graph) -> Vec<Vec<i64>> {
    (0..g.n())
        .map(|v| {
            let mut row = vec![0i64; g.n()];
            row[v] = g.out_degree(v) as i64;
            for &u in g.out_neighbors(v) {
                row[u] -= 1;
            }
            row
        })
        .collect()
}

pub fn laplacian<T: SpectralScalar>(g: &Graph) -> DMatrix<T> {
    let rows = laplacian_i64(g);
    DMatrix::from_fn(g.n(), g.n(), |i, j| T::of(rows[i][j] as f64))
}

/// Smallest nonzero Laplacian eigenvalue of a symmetric graph.
///
/// A disconnected graph is not an error: it shows up as
/// `multiplicity_zero > 1`, with `lambda1` the smallest nonzero eigenvalue
/// over all components.
pub fn spectral_gap<T: SpectralScalar>(g: &Graph, tol: T) -> Result<SpectralSummary<T>> {
    if !g.is_symmetric() {
        return Err(Error::UnsupportedGraph(
            "spectral gap requires a symmetric graph".into(),
        ));
    }
    if !(tol > T::zero()) {
        return Err(Error::param("eigenvalue tolerance must be positive"));
    }
    if g.n() < 2 {
        return Err(Error::param("spectral gap needs at least two nodes"));
    }
    let mut eig: Vec<T> = SymmetricEigen::new(laplacian::<T>(g))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    let lambda_max = eig[eig.len() - 1];
    let threshold = tol * lambda_max;
    let multiplicity_zero = eig.iter().take_while(|&&e| e <= threshold).count();
    // Edgeless graph: everything is zero.
    let lambda1 = eig.get(multiplicity_zero).copied().unwrap_or_else(T::zero);
    Ok(SpectralSummary {
        lambda1,
        lambda_max,
        multiplicity_zero,
    })
}

/// Contraction-rate bound `1 - 2q(1-q) lambda1 / n`.
pub fn rate_bound_from<T: Scalar>(lambda1: T, n: usize, q: T) -> Result<T> {
    if !(q > T::zero() && q < T::one()) {
        return Err(Error::param(format!("mixing parameter must lie in (0, 1), got {q}")));
    }
    let two = T::of(2.0);
    Ok(T::one() - two * q * (T::one() - q) * lambda1 / T::of_usize(n))
}

pub fn rate_bound<T: SpectralScalar>(g: &Graph, q: T) -> Result<T> {
    let summary = spectral_gap(g, T::of(ZERO_TOL))?;
    if !summary.is_connected() {
        return Err(Error::Disconnected("rate bound requires a connected graph".into()));
    }
    rate_bound_from(summary.lambda1, g.n(), q)
}

/// `2 - 2 cos(2 pi / n)`, the gap of the `n`-cycle.
pub fn ring_gap<T: Scalar>(n: usize) -> T {
    let two = T::of(2.0);
    two - two * Float::cos(two * T::of(std::f64::consts::PI) / T::of_usize(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{self, Family};
    use approx::assert_relative_eq;

    #[test]
    fn laplacian_examples() {
        assert_eq!(
            laplacian_i64(&graph::ring(3).unwrap()),
            vec![vec![2, -1, -1], vec![-1, 2, -1], vec![-1, -1, 2]]
        );
        let l = laplacian_i64(&graph::complete(4).unwrap());
        for (i, row) in l.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                assert_eq!(x, if i == j { 3 } else { -1 });
            }
        }
        assert_eq!(laplacian_i64(&graph::de_bruijn(2, 2).unwrap())[0], vec![1, -1, 0, 0]);
    }

    #[test]
    fn rows_sum_to_zero_and_symmetric() {
        for g in [
            graph::de_bruijn(2, 4).unwrap(),
            graph::torus_lattice(2, 5).unwrap(),
            graph::random_geometric_seeded(40, 3).unwrap(),
        ] {
            let l = laplacian_i64(&g);
            assert!(l.iter().all(|r| r.iter().sum::<i64>() == 0));
            if g.is_symmetric() {
                let m = laplacian::<f64>(&g);
                assert_eq!(m, m.transpose());
            }
        }
    }

    #[test]
    fn closed_form_gaps() {
        let s = spectral_gap(&graph::complete(16).unwrap(), 1e-9).unwrap();
        assert_relative_eq!(s.lambda1, 16.0, max_relative = 1e-12);
        assert_eq!(s.multiplicity_zero, 1);

        let s = spectral_gap(&graph::ring(4).unwrap(), 1e-9).unwrap();
        assert_relative_eq!(s.lambda1, 2.0, max_relative = 1e-12);

        for d in 1..=6 {
            let s = spectral_gap(&graph::hypercube(d).unwrap(), 1e-9).unwrap();
            assert_relative_eq!(s.lambda1, 2.0, max_relative = 1e-9);
            assert_relative_eq!(s.lambda_max, 2.0 * d as f64, max_relative = 1e-9);
        }
    }

    #[test]
    fn torus_gap_is_per_axis_cycle_gap() {
        for (k, side) in [(2, 4), (2, 7), (3, 5)] {
            let s = spectral_gap(&graph::torus_lattice(k, side).unwrap(), 1e-9).unwrap();
            assert_relative_eq!(s.lambda1, ring_gap::<f64>(side), max_relative = 1e-9);
        }
    }

    #[test]
    fn summary_invariants() {
        for g in [graph::ring(9).unwrap(), graph::random_geometric_seeded(50, 8).unwrap()] {
            let s = spectral_gap(&g, 1e-9).unwrap();
            assert!(s.lambda1 > 0.0);
            assert!(s.lambda1 <= s.lambda_max);
            assert!(s.lambda_max <= 2.0 * g.deg_max() as f64 + 1e-9);
            assert_eq!(s.is_connected(), g.is_connected());
        }
    }

    #[test]
    fn disconnected_reports_multiplicity() {
        let g = Graph::from_edges(4, [(0, 1), (1, 0), (2, 3), (3, 2)], Family::Custom {}).unwrap();
        let s = spectral_gap(&g, 1e-9).unwrap();
        assert_eq!(s.multiplicity_zero, 2);
        assert!(rate_bound(&g, 0.5).is_err());
    }

    #[test]
    fn non_symmetric_refused() {
        let g = graph::de_bruijn(2, 3).unwrap();
        assert!(matches!(spectral_gap::<f64>(&g, 1e-9), Err(Error::UnsupportedGraph(_))));
    }

    #[test]
    fn rate_bound_examples() {
        assert_relative_eq!(rate_bound(&graph::complete(16).unwrap(), 0.5).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(rate_bound(&graph::ring(4).unwrap(), 0.5).unwrap(), 0.75, epsilon = 1e-12);
        let r = rate_bound(&graph::ring(10).unwrap(), 1e-9).unwrap();
        assert!(r < 1.0 && 1.0 - r < 1e-9);
        assert!(rate_bound(&graph::ring(4).unwrap(), 1.0).is_err());
        assert!(rate_bound(&graph::ring(4).unwrap(), 0.0).is_err());
    }

    #[test]
    fn single_precision_gap() {
        let s = spectral_gap::<f32>(&graph::ring(8).unwrap(), 1e-5).unwrap();
        assert_relative_eq!(s.lambda1, ring_gap::<f32>(8), max_relative = 1e-4);
    }
}
