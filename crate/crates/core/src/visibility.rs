//! Fixed-rule time-series to graph mappings.
//!
//! Two samples `i < j` see each other in the natural visibility graph when
//! every intermediate sample lies strictly below the chord joining them:
//!
//! ```text
//! T_u < (T_j - T_i) * (u - j) / (j - i) + T_j     for all i < u < j
//! ```
//!
//! Collinear intermediates therefore block. The horizontal and limited
//! penetrable variants follow their usual literature definitions: HVG
//! requires `T_u < min(T_i, T_j)` and LPVG tolerates up to `L` violations of
//! the chord condition.

use crate::graph::VisGraph;
use crate::signal::Series;

#[inline]
fn below_chord(t: &[f64], i: usize, j: usize, u: usize) -> bool {
    let (fi, fj, fu) = (i as f64, j as f64, u as f64);
    t[u] < (t[j] - t[i]) * (fu - fj) / (fj - fi) + t[j]
}

/// Natural visibility graph by direct evaluation of the chord condition.
///
/// O(n^2) pairs, each scanned until its first blocking sample.
pub fn vg_naive(series: &Series) -> VisGraph {
    let t = series.values();
    let n = t.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if (i + 1..j).all(|u| below_chord(t, i, j, u)) {
                pairs.push((i, j));
            }
        }
    }
    VisGraph::from_pairs(n, pairs)
}

/// Natural visibility graph by divide and conquer on the segment maximum.
///
/// The maximum of a segment blocks every chord crossing it, so only the pivot
/// needs to look outward; it keeps the steepest slope seen so far on each side
/// and links to every sample that rises above it. Same output as [`vg_naive`].
pub fn vg_fast(series: &Series) -> VisGraph {
    let t = series.values();
    let n = t.len();
    let mut pairs = Vec::with_capacity(2 * n);
    let mut stack = vec![(0usize, n)];
    while let Some((lo, hi)) = stack.pop() {
        if hi - lo < 2 {
            continue;
        }
        let k = argmax(&t[lo..hi]) + lo;

        let mut steepest = f64::NEG_INFINITY;
        for j in k + 1..hi {
            let slope = (t[j] - t[k]) / (j - k) as f64;
            if slope > steepest {
                pairs.push((k, j));
                steepest = slope;
            }
        }
        let mut steepest = f64::NEG_INFINITY;
        for i in (lo..k).rev() {
            let slope = (t[i] - t[k]) / (k - i) as f64;
            if slope > steepest {
                pairs.push((i, k));
                steepest = slope;
            }
        }

        stack.push((lo, k));
        stack.push((k + 1, hi));
    }
    VisGraph::from_pairs(n, pairs)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (idx, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = idx;
        }
    }
    best
}

/// Horizontal visibility graph: `(i, j)` linked iff every sample strictly
/// between them is strictly below `min(T_i, T_j)`.
///
/// Linear-time monotone stack.
pub fn hvg(series: &Series) -> VisGraph {
    let t = series.values();
    let mut pairs = Vec::with_capacity(2 * t.len());
    let mut stack: Vec<usize> = Vec::new();
    for j in 0..t.len() {
        while let Some(&top) = stack.last() {
            if t[top] < t[j] {
                pairs.push((top, j));
                stack.pop();
            } else {
                break;
            }
        }
        if let Some(&top) = stack.last() {
            pairs.push((top, j));
            if t[top] == t[j] {
                stack.pop();
            }
        }
        stack.push(j);
    }
    VisGraph::from_pairs(t.len(), pairs)
}

/// Limited penetrable visibility graph: `(i, j)` linked iff at most
/// `penetrable_limit` intermediate samples violate the chord condition.
pub fn lpvg(series: &Series, penetrable_limit: usize) -> VisGraph {
    let t = series.values();
    let n = t.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let mut violations = 0;
            let ok = (i + 1..j).all(|u| {
                if !below_chord(t, i, j, u) {
                    violations += 1;
                }
                violations <= penetrable_limit
            });
            if ok {
                pairs.push((i, j));
            }
        }
    }
    VisGraph::from_pairs(n, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[f64]) -> Series {
        Series::new(v.to_vec()).unwrap()
    }

    fn one_based(g: &VisGraph) -> Vec<(usize, usize)> {
        g.edges().iter().map(|e| (e.u + 1, e.v + 1)).collect()
    }

    /// Direct evaluation of the horizontal rule over all pairs.
    fn hvg_brute(t: &[f64]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..t.len() {
            for j in i + 1..t.len() {
                let floor = t[i].min(t[j]);
                if (i + 1..j).all(|u| t[u] < floor) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn collinear_path() {
        let series = s(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(one_based(&vg_naive(&series)), vec![(1, 2), (2, 3), (3, 4)]);
        assert_eq!(vg_fast(&series), vg_naive(&series));
    }

    #[test]
    fn convex_is_complete() {
        let g = vg_naive(&s(&[4.0, 1.0, 0.0, 1.0, 4.0]));
        assert_eq!(g.edge_count(), 10);
    }

    #[test]
    fn valley_of_three() {
        let series = s(&[3.0, 1.0, 2.0]);
        let g = vg_naive(&series);
        assert_eq!(one_based(&g), vec![(1, 2), (2, 3), (1, 3)]);
        assert!(g.edges().iter().all(|e| e.weight == 1.0));
        assert_eq!(vg_fast(&series), g);
        assert_eq!(one_based(&hvg(&series)), vec![(1, 2), (2, 3), (1, 3)]);
    }

    #[test]
    fn hvg_equal_peak_blocks() {
        assert_eq!(one_based(&hvg(&s(&[1.0, 2.0, 1.0]))), vec![(1, 2), (2, 3)]);
        // equal intermediate value blocks under the strict rule
        assert_eq!(
            hvg(&s(&[2.0, 2.0, 2.0, 1.0])).pair_set(),
            hvg_brute(&[2.0, 2.0, 2.0, 1.0])
        );
    }

    #[test]
    fn lpvg_single_penetration() {
        let g = lpvg(&s(&[1.0, 3.0, 1.0, 3.0, 1.0]), 1);
        assert_eq!(g.edge_count(), 9);
        assert!(!g.has_edge(0, 4));
    }

    #[test]
    fn two_points() {
        let series = s(&[5.0, -5.0]);
        for g in [
            vg_naive(&series),
            vg_fast(&series),
            hvg(&series),
            lpvg(&series, 0),
        ] {
            assert_eq!(g.pair_set(), vec![(0, 1)]);
        }
    }

    #[test]
    fn flat_series() {
        let series = s(&[0.0; 6]);
        assert_eq!(vg_naive(&series).edge_count(), 5);
        assert_eq!(vg_fast(&series), vg_naive(&series));
        assert_eq!(hvg(&series).pair_set(), hvg_brute(&[0.0; 6]));
    }

    #[test]
    fn monotone_long() {
        let t: Vec<f64> = (0..300).map(|k| (k as f64).sqrt()).collect();
        let series = s(&t);
        assert_eq!(vg_fast(&series), vg_naive(&series));
    }

    proptest! {
        #[test]
        fn fast_matches_naive(t in prop::collection::vec(-100.0f64..100.0, 2..96)) {
            let series = s(&t);
            prop_assert_eq!(vg_fast(&series), vg_naive(&series));
        }

        #[test]
        fn fast_matches_naive_with_ties(t in prop::collection::vec(0i32..5, 2..64)) {
            let series = s(&t.iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
            prop_assert_eq!(vg_fast(&series), vg_naive(&series));
        }

        #[test]
        fn hvg_matches_brute_force(t in prop::collection::vec(0i32..6, 2..64)) {
            let t: Vec<f64> = t.iter().map(|&v| f64::from(v)).collect();
            prop_assert_eq!(hvg(&s(&t)).pair_set(), hvg_brute(&t));
        }

        #[test]
        fn nesting_and_lpvg_monotone(t in prop::collection::vec(-10.0f64..10.0, 2..48)) {
            let series = s(&t);
            let h = hvg(&series).pair_set();
            let v = vg_naive(&series).pair_set();
            prop_assert!(h.iter().all(|p| v.binary_search(p).is_ok()));
            prop_assert_eq!(&lpvg(&series, 0).pair_set(), &v);
            let mut prev = v;
            for limit in 1..4 {
                let cur = lpvg(&series, limit).pair_set();
                prop_assert!(prev.iter().all(|p| cur.binary_search(p).is_ok()));
                prev = cur;
            }
        }

        #[test]
        fn adjacent_pairs_always_linked(t in prop::collection::vec(-10.0f64..10.0, 2..40)) {
            let series = s(&t);
            for g in [vg_fast(&series), hvg(&series), lpvg(&series, 2)] {
                for k in 0..t.len() - 1 {
                    prop_assert!(g.has_edge(k, k + 1));
                }
            }
        }
    }
}
