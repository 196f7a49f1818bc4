//! Straight-line reference implementations used to cross-check the feature
//! and spectrum code. Deliberately naive: no FFT, no fused loops.

use std::f64::consts::PI;

/// Magnitudes of bins `0..=M/2` by direct summation, one `sin_cos` per term.
pub fn dft_magnitudes(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    (0..=m / 2)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (n, &v) in x.iter().enumerate() {
                let (s, c) = (-2.0 * PI * (k * n) as f64 / m as f64).sin_cos();
                re += v * c;
                im += v * s;
            }
            re.hypot(im)
        })
        .collect()
}

/// Same sum with a precomputed twiddle table indexed by `k*n mod M`. Exact
/// in the index, so it stays an O(M^2) direct summation, just cheaper.
pub fn dft_magnitudes_tabled(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let table: Vec<(f64, f64)> = (0..m).map(|j| (-2.0 * PI * j as f64 / m as f64).sin_cos()).collect();
    (0..=m / 2)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            let mut j = 0;
            for &v in x {
                let (s, c) = table[j];
                re += v * c;
                im += v * s;
                j += k;
                if j >= m {
                    j -= m;
                }
            }
            re.hypot(im)
        })
        .collect()
}

/// mean, std_dev, avg_deviation, skewness, kurtosis, rms, lowest, highest.
pub fn time_features(x: &[f64]) -> [f64; 8] {
    let n = x.len() as f64;
    let mut total = 0.0;
    for v in x {
        total += v;
    }
    let mean = total / n;

    let mut ss = 0.0;
    for v in x {
        ss += (v - mean).powi(2);
    }
    let sigma = (ss / (n - 1.0)).sqrt();

    let mut ad = 0.0;
    for v in x {
        ad += (v - mean).abs();
    }

    let mut g = 0.0;
    let mut b = 0.0;
    if sigma != 0.0 {
        for v in x {
            g += ((v - mean) / sigma).powi(3);
            b += ((v - mean) / sigma).powi(4);
        }
        g /= n;
        b = b / n - 3.0;
    }

    let mut sq = 0.0;
    for v in x {
        sq += v * v;
    }

    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    [mean, sigma, ad / n, g, b, (sq / n).sqrt(), lo, hi]
}

/// spec_std_dev, spec_skewness, spec_kurtosis, centroid, irregularity_k,
/// irregularity_j, rolloff, flatness, smoothness.
pub fn freq_features(ym: &[f64], yf: &[f64], fraction: f64) -> [f64; 9] {
    let n = ym.len();
    let mut total = 0.0;
    let mut weighted = 0.0;
    for i in 0..n {
        total += ym[i];
        weighted += yf[i] * ym[i];
    }
    let c = weighted / total;

    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for i in 0..n {
        m2 += (yf[i] - c).powi(2) * ym[i];
        m3 += (yf[i] - c).powi(3) * ym[i];
        m4 += (yf[i] - c).powi(4) * ym[i];
    }
    let sd = (m2 / total).sqrt();
    let (sk, ku) = if sd > 0.0 {
        (m3 / total / sd.powi(3), m4 / total / sd.powi(4) - 3.0)
    } else {
        (0.0, 0.0)
    };

    let mut ik = 0.0;
    for i in 1..n - 1 {
        ik += (ym[i] - (ym[i - 1] + ym[i] + ym[i + 1]) / 3.0).abs();
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n - 1 {
        num += (ym[i] - ym[i + 1]).powi(2);
        den += ym[i].powi(2);
    }
    let ij = if den > 0.0 { num / den } else { 0.0 };

    let mut ro = yf[n - 1];
    let mut run = 0.0;
    for i in 0..n {
        run += ym[i];
        if run >= fraction * total {
            ro = yf[i];
            break;
        }
    }

    let mut logs = 0.0;
    for &v in ym {
        logs += (v + 1e-12).ln();
    }
    let flat = (logs / n as f64).exp() / (total / n as f64);

    let db = |v: f64| 20.0 * v.max(1e-12).log10();
    let mut sm = 0.0;
    for i in 1..n - 1 {
        sm += (db(ym[i]) - (db(ym[i - 1]) + db(ym[i]) + db(ym[i + 1])) / 3.0).abs();
    }

    [sd, sk, ku, c, ik, ij, ro, flat, sm]
}

/// All 17 features of `x` sampled at `sample_rate`.
pub fn features(x: &[f64], sample_rate: f64, fraction: f64) -> [f64; 17] {
    let ym = dft_magnitudes_tabled(x);
    let yf: Vec<f64> = (0..ym.len()).map(|i| i as f64 * sample_rate / x.len() as f64).collect();
    let t = time_features(x);
    let f = freq_features(&ym, &yf, fraction);
    let mut out = [0.0; 17];
    out[..8].copy_from_slice(&t);
    out[8..].copy_from_slice(&f);
    out
}
