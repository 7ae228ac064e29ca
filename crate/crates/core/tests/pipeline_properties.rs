//! Property tests for the signal pipeline: windowing arithmetic against a
//! brute-force offset oracle, and split bookkeeping.

use nfc_core::signal::{
    stratified_split, window_signal, ClassLabel, RawRecording, SignalSegment,
};
use proptest::prelude::*;

/// Brute-force oracle: every offset at a multiple of the stride whose
/// window fits entirely inside the recording.
fn enumerate_offsets(n: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut offsets = Vec::new();
    let mut start = 0usize;
    while start + window <= n {
        offsets.push(start);
        start += stride;
    }
    offsets
}

proptest! {
    #[test]
    fn window_count_matches_brute_force(
        n in 1usize..1500,
        window in 1usize..600,
        overlap in 0.0f64..0.95,
    ) {
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let rec = RawRecording::new(samples, 1000.0, ClassLabel::Inner).unwrap();
        let stride = (window as f64 * (1.0 - overlap)).round() as usize;
        match window_signal(&rec, window, overlap) {
            Ok(segments) => {
                prop_assert!(stride >= 1);
                let offsets = enumerate_offsets(n, window, stride);
                prop_assert_eq!(segments.len(), offsets.len());
                if n >= window {
                    prop_assert_eq!(segments.len(), (n - window) / stride + 1);
                }
                for (seg, &start) in segments.iter().zip(&offsets) {
                    prop_assert_eq!(seg.values.as_slice(), &rec.samples[start..start + window]);
                }
            }
            Err(_) => prop_assert_eq!(stride, 0),
        }
    }

    #[test]
    fn stratified_split_counts_and_partition(
        counts in prop::array::uniform4(1usize..40),
        fraction in 0.0f64..0.95,
        seed in 0u64..1000,
    ) {
        let mut segments = Vec::new();
        for (ci, &n) in counts.iter().enumerate() {
            let label = ClassLabel::ALL[ci];
            for i in 0..n {
                segments.push(SignalSegment {
                    values: vec![ci as f64, i as f64],
                    label,
                });
            }
        }
        let split = stratified_split(&segments, fraction, seed).unwrap();
        prop_assert_eq!(split.train.len() + split.test.len(), segments.len());
        for (ci, &n) in counts.iter().enumerate() {
            let label = ClassLabel::ALL[ci];
            let in_test = split.test.iter().filter(|s| s.label == label).count();
            let expected = (n as f64 * fraction).round() as usize;
            prop_assert_eq!(in_test, expected, "class {}", ci);
            // Per-class test fraction stays within one segment of the target.
            prop_assert!((in_test as f64 - n as f64 * fraction).abs() <= 0.5 + 1e-9);
        }
        // No segment is lost or duplicated (values are unique keys).
        for seg in &segments {
            let total = split.train.iter().filter(|s| *s == seg).count()
                + split.test.iter().filter(|s| *s == seg).count();
            prop_assert_eq!(total, 1);
        }
    }
}
