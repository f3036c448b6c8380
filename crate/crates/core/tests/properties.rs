//! Property-based tests over the data-handling and transformation layers.

use proptest::prelude::*;

use autocorr::adjust::{recover_forecast, transform_target};
use autocorr::autodiff::Tensor;
use autocorr::bench::histogram;
use autocorr::series::{
    format_csv, make_windows, parse_csv, Normalizer, SeriesFrame, WindowSpec,
};
use autocorr::stats::{empirical_critical_values, right_tail_threshold};

fn finite_value() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        -1.0..1.0f64,
        Just(0.0),
        Just(-0.0),
        Just(123456.789),
    ]
}

fn frame_strategy(max_rows: usize, max_cols: usize) -> impl Strategy<Value = SeriesFrame> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(rows, cols)| {
        proptest::collection::vec(finite_value(), rows * cols).prop_map(move |data| {
            SeriesFrame::from_values(Tensor::new(rows, cols, data)).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_identity(frame in frame_strategy(40, 6)) {
        let text = format_csv(&frame);
        let back = parse_csv(&text, true).unwrap();
        prop_assert_eq!(back.names(), frame.names());
        prop_assert_eq!(back.values(), frame.values());
    }

    #[test]
    fn normalizer_invert_is_inverse(frame in frame_strategy(30, 4)) {
        let norm = Normalizer::fit(&frame);
        let round = norm.invert(&norm.apply(&frame));
        for t in 0..frame.len() {
            for c in 0..frame.n_series() {
                let a = frame.get(t, c);
                let b = round.get(t, c);
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn transform_then_recover_round_trips(
        y in proptest::collection::vec(-100.0..100.0f64, 1..6),
        prev_scale in -100.0..100.0f64,
        raw_rho in -5.0..5.0f64,
        scalar_rho in proptest::bool::ANY,
    ) {
        let prev: Vec<f64> = y.iter().map(|v| v * 0.5 + prev_scale).collect();
        let rho: Vec<f64> = if scalar_rho {
            vec![raw_rho.tanh()]
        } else {
            y.iter().enumerate().map(|(i, _)| (raw_rho + i as f64).tanh()).collect()
        };
        let recovered = recover_forecast(&y, &prev, &rho);
        let back = transform_target(&recovered, &prev, &rho);
        for (a, b) in back.iter().zip(&y) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn window_count_is_length_minus_window(
        frame in frame_strategy(60, 3),
        window in 1..20usize,
    ) {
        let result = make_windows(&frame, &WindowSpec { window });
        if frame.len() > window {
            let windows = result.unwrap();
            prop_assert_eq!(windows.len(), frame.len() - window);
            // targets are exactly t = window .. len-1 in order
            for (i, w) in windows.iter().enumerate() {
                prop_assert_eq!(w.target_index, window + i);
            }
        } else {
            prop_assert!(result.is_err());
        }
    }

    #[test]
    fn critical_values_are_permutation_invariant(
        mut samples in proptest::collection::vec(-1.0..1.0f64, 20..200),
        seed in 0..1000u64,
    ) {
        let a = empirical_critical_values(&samples, &[0.10, 0.05, 0.01]).unwrap();
        // deterministic shuffle
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by_key(|&i| autocorr::seeds::mix(&[seed, i as u64]));
        let shuffled: Vec<f64> = order.iter().map(|&i| samples[i]).collect();
        let b = empirical_critical_values(&shuffled, &[0.10, 0.05, 0.01]).unwrap();
        prop_assert_eq!(&a.entries, &b.entries);

        // threshold never leaves the sample range
        samples.sort_by(f64::total_cmp);
        for (_, v) in &a.entries {
            prop_assert!(*v >= samples[0] && *v <= samples[samples.len() - 1]);
        }
    }

    #[test]
    fn right_tail_threshold_matches_sort_position(
        samples in proptest::collection::vec(-10.0..10.0f64, 1..100),
        tail in 0.0..1.0f64,
    ) {
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let v = right_tail_threshold(&sorted, tail);
        // count of strictly-greater samples is at most ceil(tail * n)
        let above = sorted.iter().filter(|s| **s > v).count();
        prop_assert!(above as f64 <= (tail * sorted.len() as f64).ceil() + 1e-9);
    }

    #[test]
    fn histogram_conserves_mass(
        values in proptest::collection::vec(-3.0..3.0f64, 0..200),
        bins in 1..50usize,
    ) {
        let counts = histogram(&values, -1.0, 1.0, bins);
        prop_assert_eq!(counts.len(), bins);
        prop_assert_eq!(counts.iter().sum::<usize>(), values.len());
    }
}
