use halfspace_core::halfspace::{equivalence_replace, EquivalenceMode};
use halfspace_core::ideals::sequence_norm;
use halfspace_core::opcore::csv::{format_entry, from_csv, parse_entry, to_csv};
use halfspace_core::opcore::dd::Dd;
use halfspace_core::opcore::dense::{max_abs, multiset_distance};
use halfspace_core::opcore::Banded;
use halfspace_core::refine::split_indices;
use halfspace_core::{CVec, IdealSpec, Mat, StructuredOp, C64};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3..1e3f64, -1e-200..1e-200f64, any::<f64>().prop_filter("finite", |x| x.is_finite())]
}

fn complex() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b))
}

/// Banded base with one low-rank update, plus a probe vector pair.
fn operator() -> impl Strategy<Value = (StructuredOp, CVec, CVec)> {
    (3usize..24, 0usize..3, 0usize..3, 0usize..3).prop_flat_map(|(n, kl, ku, r)| {
        let band = proptest::collection::vec(complex(), n * (kl + ku + 1));
        let low = proptest::collection::vec(complex(), 2 * n * r);
        let xs = proptest::collection::vec(complex(), 2 * n);
        (band, low, xs).prop_map(move |(band, low, xs)| {
            let mut b = Banded::zeros(n, kl, ku);
            let mut it = band.into_iter();
            for i in 0..n {
                for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                    b.set(i, j, it.next().unwrap());
                }
            }
            let u = Mat::from_fn(n, r, |i, j| low[i * r + j]);
            let v = Mat::from_fn(n, r, |i, j| low[n * r + i * r + j]);
            let op = StructuredOp::new(b, u, v).unwrap();
            (op, CVec::from_fn(n, |i, _| xs[i]), CVec::from_fn(n, |i, _| xs[n + i]))
        })
    })
}

proptest! {
    #[test]
    fn csv_entries_round_trip(re in finite(), im in finite()) {
        let z = C64::new(re, im);
        prop_assert_eq!(parse_entry(&format_entry(z)).unwrap(), z);
    }

    #[test]
    fn csv_matrices_round_trip(rows in 1usize..5, cols in 1usize..5, seed in proptest::collection::vec(complex(), 25)) {
        let m = Mat::from_fn(rows, cols, |i, j| seed[i * 5 + j]);
        prop_assert_eq!(from_csv(&to_csv(&m)).unwrap(), m);
    }

    #[test]
    fn double_double_sum_recovers_addend(a in -1e8..1e8f64, b in -1.0..1.0f64) {
        let s = Dd::from(a) + Dd::from(b);
        let back = (s - Dd::from(a)).to_f64();
        prop_assert!((back - b).abs() <= 1e-30 * a.abs().max(1.0));
    }

    #[test]
    fn structured_apply_matches_dense((op, x, y) in operator()) {
        let d = op.to_dense();
        let scale = 1.0 + d.norm() * x.norm();
        prop_assert!((op.apply(&x) - &d * &x).norm() <= 1e-13 * scale);
        prop_assert!((op.apply_adjoint(&x) - d.adjoint() * &x).norm() <= 1e-13 * scale);
        let lhs = y.dotc(&op.apply(&x));
        let rhs = op.apply_adjoint(&y).dotc(&x);
        prop_assert!((lhs - rhs).norm() <= 1e-13 * (1.0 + d.norm() * x.norm() * y.norm()));
    }

    #[test]
    fn principal_and_shift_match_dense((op, _x, _y) in operator(), mask in any::<u32>(), lambda in complex()) {
        let n = op.dim();
        let idx: Vec<usize> = (0..n).filter(|i| mask >> (i % 32) & 1 == 1).collect();
        prop_assume!(!idx.is_empty());
        let d = op.to_dense();
        let want = Mat::from_fn(idx.len(), idx.len(), |a, b| d[(idx[a], idx[b])]);
        prop_assert!(max_abs(&(op.principal(&idx).to_dense() - want)) <= 1e-14);
        let shifted = op.shifted(lambda).to_dense();
        prop_assert!(max_abs(&(shifted - (&d - Mat::identity(n, n) * lambda))) <= 1e-14);
    }

    #[test]
    fn schatten_norms_decrease_in_p(s in proptest::collection::vec(0.0..2.0f64, 1..20), p in 1.0..4.0f64, dq in 0.0..4.0f64) {
        let lo = sequence_norm(&s, &IdealSpec::schatten(p).unwrap());
        let hi = sequence_norm(&s, &IdealSpec::schatten(p + dq).unwrap());
        let sup = sequence_norm(&s, &IdealSpec::compact());
        prop_assert!(hi <= lo * (1.0 + 1e-12) + 1e-300);
        prop_assert!(sup <= hi * (1.0 + 1e-12) + 1e-300);
        let trace: f64 = s.iter().sum();
        prop_assert!((sequence_norm(&s, &IdealSpec::trace()) - trace).abs() <= 1e-12 * trace.max(1.0));
    }

    #[test]
    fn multiset_distance_ignores_order(v in proptest::collection::vec(complex(), 1..12), rot in 0usize..12) {
        let mut w = v.clone();
        let k = rot % v.len();
        w.rotate_left(k);
        prop_assert!(multiset_distance(&v, &w) <= 1e-15);
    }

    #[test]
    fn split_alternates(len in 8usize..60, stride in 1usize..4) {
        let m: Vec<usize> = (0..len).map(|i| i * stride + 1).collect();
        let (n1, n2) = split_indices(&m).unwrap();
        let mut all: Vec<usize> = n1.iter().chain(&n2).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(&all, &m);
        prop_assert!(n1.len().abs_diff(n2.len()) <= 1);
        prop_assert_eq!(n1[0], m[1]);
    }

    #[test]
    fn psd_replacement_is_diagonal(n in 1usize..7, entries in proptest::collection::vec(complex(), 36)) {
        let t = Mat::from_fn(n, n, |i, j| entries[i * 6 + j]);
        let e = equivalence_replace(&t, EquivalenceMode::PsdDiagonal, None);
        prop_assume!(e.is_ok());
        let e = e.unwrap();
        let b = &e.s1 * &t * &e.s2;
        let top = e.singular_values[0].max(1.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    prop_assert!(b[(i, i)].re >= -1e-12 * top && b[(i, i)].im.abs() <= 1e-12 * top);
                } else {
                    prop_assert!(b[(i, j)].norm() <= 1e-12 * top);
                }
            }
        }
    }
}
