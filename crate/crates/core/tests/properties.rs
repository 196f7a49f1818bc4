use exid_fingerprint::features::{freq_features, magnitude_spectrum, time_features, Spectrum};
use exid_fingerprint::frame::{arbitrate, destuff, make_exid, stuff, BitString, ExtendedId, EXID_BITS, STUFF_RUN};
use exid_fingerprint::waveform::Waveform;
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn signal() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 16..400)
}

fn waveform(samples: Vec<f64>) -> Waveform {
    Waveform {
        samples,
        sample_rate: 50e6,
        bit_rate: 500e3,
        source_label: None,
        pattern: BitString::zeros(1),
    }
}

proptest! {
    #[test]
    fn destuff_inverts_stuff(bits in prop::collection::vec(any::<bool>(), 0..300)) {
        let raw = BitString::new(bits);
        let stuffed = stuff(&raw);
        prop_assert!(stuffed.longest_run() <= STUFF_RUN);
        prop_assert_eq!(destuff(&stuffed).unwrap(), raw);
    }

    #[test]
    fn arbitration_picks_lowest_identifier(ids in prop::collection::btree_set(0u32..1 << 29, 1..12)) {
        let contenders: Vec<ExtendedId> = ids.iter().map(|&r| ExtendedId::from_raw(r).unwrap()).collect();
        prop_assert_eq!(arbitrate(&contenders).unwrap().raw(), *ids.iter().next().unwrap());
    }

    #[test]
    fn identifier_round_trips_through_fields(base in 0u16..1 << 11, exid in 0u32..1 << 18) {
        let id = ExtendedId::new(base, make_exid(&BitString::from_uint(exid as u64, EXID_BITS), false).unwrap()).unwrap();
        prop_assert_eq!(ExtendedId::from_raw(id.raw()).unwrap(), id);
        prop_assert_eq!(id.raw(), (base as u32) << 18 | exid);
    }

    #[test]
    fn shift_moves_location_only(x in signal(), c in -10.0f64..10.0) {
        let a = time_features(&x).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let b = time_features(&shifted).unwrap();
        prop_assert!(close(b.mean, a.mean + c, 1e-9));
        prop_assert!(close(b.lowest, a.lowest + c, 1e-9));
        prop_assert!(close(b.highest, a.highest + c, 1e-9));
        prop_assert!(close(b.std_dev, a.std_dev, 1e-9));
        prop_assert!(close(b.avg_deviation, a.avg_deviation, 1e-9));
        prop_assert!(close(b.skewness, a.skewness, 1e-9));
        prop_assert!(close(b.kurtosis, a.kurtosis, 1e-9));
    }

    #[test]
    fn positive_scale_is_equivariant(x in signal(), s in 0.1f64..10.0) {
        let scaled: Vec<f64> = x.iter().map(|v| v * s).collect();
        let a = time_features(&x).unwrap();
        let b = time_features(&scaled).unwrap();
        for (u, v) in [
            (a.mean, b.mean),
            (a.std_dev, b.std_dev),
            (a.avg_deviation, b.avg_deviation),
            (a.rms_amplitude, b.rms_amplitude),
            (a.lowest, b.lowest),
            (a.highest, b.highest),
        ] {
            prop_assert!(close(v, u * s, 1e-9));
        }
        prop_assert!(close(b.skewness, a.skewness, 1e-9));
        prop_assert!(close(b.kurtosis, a.kurtosis, 1e-9));
        let fa = freq_features(&magnitude_spectrum(&waveform(x)).unwrap(), 0.95).unwrap();
        let fb = freq_features(&magnitude_spectrum(&waveform(scaled)).unwrap(), 0.95).unwrap();
        prop_assert!(close(fb.flatness, fa.flatness, 1e-9));
        prop_assert!(close(fb.irregularity_j, fa.irregularity_j, 1e-9));
    }

    #[test]
    fn time_feature_bounds(x in signal()) {
        let t = time_features(&x).unwrap();
        prop_assert!(t.lowest <= t.mean && t.mean <= t.highest);
        prop_assert!(t.std_dev >= 0.0 && t.rms_amplitude >= 0.0);
    }

    #[test]
    fn rolloff_grows_with_fraction(m in prop::collection::vec(0.0f64..1.0, 3..200), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
        prop_assume!(m.iter().sum::<f64>() > 0.0);
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let freqs = (0..m.len()).map(|i| i as f64 * 1e3).collect();
        let s = Spectrum::new(m, freqs).unwrap();
        prop_assert!(freq_features(&s, lo).unwrap().rolloff <= freq_features(&s, hi).unwrap().rolloff);
    }

    #[test]
    fn parseval_holds(x in signal()) {
        let m = x.len();
        let y = magnitude_spectrum(&waveform(x.clone())).unwrap().magnitudes;
        let mut energy = y[0] * y[0];
        for (k, v) in y.iter().enumerate().skip(1) {
            energy += if 2 * k == m { v * v } else { 2.0 * v * v };
        }
        let expected = m as f64 * x.iter().map(|v| v * v).sum::<f64>();
        prop_assert!(close(energy, expected, 1e-9));
    }
}
