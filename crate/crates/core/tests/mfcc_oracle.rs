//! Cross-checks the MFCC pipeline against an independent scalar-loop
//! reference built on a direct O(N²) DFT. The reference shares no code
//! with the library: its own pre-emphasis, spectrum, filterbank, and DCT.

use breathid_core::features;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SAMPLE_RATE: u32 = 44_100;
const FRAME_LEN: usize = 441;
const FFT_LEN: usize = 512;
const NUM_FILTERS: usize = 64;
const NUM_CEPSTRA: usize = 32;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10.0f64.powf(mel / 2595.0) - 1.0)
}

/// Direct-summation magnitude spectrum of the zero-padded frame,
/// bins 0..=FFT_LEN/2.
fn direct_magnitude_spectrum(frame: &[f64]) -> Vec<f64> {
    let mut mags = Vec::with_capacity(FFT_LEN / 2 + 1);
    for k in 0..=FFT_LEN / 2 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (n, &x) in frame.iter().enumerate() {
            let angle = -2.0 * std::f64::consts::PI * k as f64 * n as f64 / FFT_LEN as f64;
            re += x * angle.cos();
            im += x * angle.sin();
        }
        mags.push((re * re + im * im).sqrt());
    }
    mags
}

/// The full reference pipeline on one frame.
fn reference_mfcc(frame: &[f64]) -> Vec<f64> {
    // Pre-emphasis, first sample passed through.
    let mut emphasized = vec![frame[0]];
    for i in 1..frame.len() {
        emphasized.push(frame[i] - 0.97 * frame[i - 1]);
    }

    let mags = direct_magnitude_spectrum(&emphasized);

    // Triangular filters with edges equally spaced in mel between 0 and
    // Nyquist, evaluated at exact bin frequencies.
    let nyquist = f64::from(SAMPLE_RATE) / 2.0;
    let mel_step = hz_to_mel(nyquist) / (NUM_FILTERS + 1) as f64;
    let mut log_energies = Vec::with_capacity(NUM_FILTERS);
    for m in 0..NUM_FILTERS {
        let lo = mel_to_hz(mel_step * m as f64);
        let center = mel_to_hz(mel_step * (m + 1) as f64);
        let hi = mel_to_hz(mel_step * (m + 2) as f64);
        let mut energy = 0.0;
        for (k, &mag) in mags.iter().enumerate() {
            let f = k as f64 * f64::from(SAMPLE_RATE) / FFT_LEN as f64;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= center {
                (f - lo) / (center - lo)
            } else {
                (hi - f) / (hi - center)
            };
            energy += w * mag;
        }
        log_energies.push(energy.max(1e-10).ln());
    }

    // Orthonormal DCT-II, coefficients 0..31.
    let mut cepstra = Vec::with_capacity(NUM_CEPSTRA);
    for k in 0..NUM_CEPSTRA {
        let alpha = if k == 0 {
            (1.0 / NUM_FILTERS as f64).sqrt()
        } else {
            (2.0 / NUM_FILTERS as f64).sqrt()
        };
        let mut acc = 0.0;
        for (m, &le) in log_energies.iter().enumerate() {
            acc += le
                * (std::f64::consts::PI * (2 * m + 1) as f64 * k as f64
                    / (2 * NUM_FILTERS) as f64)
                    .cos();
        }
        cepstra.push(alpha * acc);
    }
    cepstra
}

fn assert_close(actual: &[f64], expected: &[f64], tol: f64, context: &str) {
    assert_eq!(actual.len(), expected.len());
    for (k, (&a, &e)) in actual.iter().zip(expected).enumerate() {
        let err = (a - e).abs() / e.abs().max(1.0);
        assert!(
            err <= tol,
            "{context}: coefficient {k} differs, got {a}, reference {e}, rel err {err:.3e}"
        );
    }
}

#[test]
fn mfcc_matches_direct_dft_reference_on_random_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0031);
    let extractor = features::FeatureExtractor::new(SAMPLE_RATE).unwrap();

    for trial in 0..100 {
        let frame: Vec<f64> = (0..FRAME_LEN).map(|_| rng.random_range(-1.0..1.0)).collect();
        let actual = extractor.mfcc(&frame);
        let expected = reference_mfcc(&frame);
        assert_close(&actual, &expected, 1e-9, &format!("trial {trial}"));
    }
}

#[test]
fn mfcc_matches_reference_on_structured_signals() {
    let extractor = features::FeatureExtractor::new(SAMPLE_RATE).unwrap();

    // A tone, a chirp-ish product, a decaying impulse, and near-silence.
    let tone: Vec<f64> = (0..FRAME_LEN)
        .map(|n| (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / 44_100.0).sin())
        .collect();
    let product: Vec<f64> = (0..FRAME_LEN)
        .map(|n| {
            let t = n as f64 / 44_100.0;
            (2.0 * std::f64::consts::PI * 300.0 * t).sin()
                * (2.0 * std::f64::consts::PI * 2500.0 * t).cos()
        })
        .collect();
    let impulse: Vec<f64> = (0..FRAME_LEN)
        .map(|n| if n == 7 { 0.9 } else { 0.0 })
        .collect();
    let quiet = vec![1e-8; FRAME_LEN];

    for (name, frame) in [
        ("tone", tone),
        ("product", product),
        ("impulse", impulse),
        ("quiet", quiet),
    ] {
        let actual = extractor.mfcc(&frame);
        let expected = reference_mfcc(&frame);
        assert_close(&actual, &expected, 1e-9, name);
    }
}

/// A tone at a filter's center frequency must put most of that region's
/// energy in that filter rather than in non-adjacent neighbors.
#[test]
fn tone_at_filter_center_dominates_its_filter() {
    let nyquist = f64::from(SAMPLE_RATE) / 2.0;
    let mel_step = hz_to_mel(nyquist) / (NUM_FILTERS + 1) as f64;

    for m in [5usize, 10, 20, 40] {
        let center = mel_to_hz(mel_step * (m + 1) as f64);
        let frame: Vec<f64> = (0..FRAME_LEN)
            .map(|n| (2.0 * std::f64::consts::PI * center * n as f64 / 44_100.0).sin())
            .collect();

        // Mirror the spectrum step of the reference, then compare raw
        // filter energies around filter m.
        let mut emphasized = vec![frame[0]];
        for i in 1..frame.len() {
            emphasized.push(frame[i] - 0.97 * frame[i - 1]);
        }
        let mags = direct_magnitude_spectrum(&emphasized);

        let energy_of = |j: usize| -> f64 {
            let lo = mel_to_hz(mel_step * j as f64);
            let c = mel_to_hz(mel_step * (j + 1) as f64);
            let hi = mel_to_hz(mel_step * (j + 2) as f64);
            mags.iter()
                .enumerate()
                .map(|(k, &mag)| {
                    let f = k as f64 * f64::from(SAMPLE_RATE) / FFT_LEN as f64;
                    let w = if f <= lo || f >= hi {
                        0.0
                    } else if f <= c {
                        (f - lo) / (c - lo)
                    } else {
                        (hi - f) / (hi - c)
                    };
                    w * mag
                })
                .sum()
        };

        let at = energy_of(m);
        for other in [m.saturating_sub(3), m + 3] {
            assert!(
                at > 2.0 * energy_of(other),
                "filter {m} should dominate filter {other} for a centered tone"
            );
        }
    }
}
