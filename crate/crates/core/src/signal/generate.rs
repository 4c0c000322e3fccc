use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::IqFrame;
use crate::error::{Error, Result};

/// Samples per symbol for the digital modulations.
pub const SAMPLES_PER_SYMBOL: usize = 8;

/// Minimum frame length accepted by the generator.
pub const MIN_LENGTH: usize = 8;

/// Modulation schemes supported by the synthetic generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Psk8,
    Qam16,
    Pam4,
    Gfsk,
    Cpfsk,
    AmDsb,
    Wbfm,
}

impl Modulation {
    pub const ALL: [Modulation; 9] = [
        Modulation::Bpsk,
        Modulation::Qpsk,
        Modulation::Psk8,
        Modulation::Qam16,
        Modulation::Pam4,
        Modulation::Gfsk,
        Modulation::Cpfsk,
        Modulation::AmDsb,
        Modulation::Wbfm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "BPSK",
            Modulation::Qpsk => "QPSK",
            Modulation::Psk8 => "PSK8",
            Modulation::Qam16 => "QAM16",
            Modulation::Pam4 => "PAM4",
            Modulation::Gfsk => "GFSK",
            Modulation::Cpfsk => "CPFSK",
            Modulation::AmDsb => "AMDSB",
            Modulation::Wbfm => "WBFM",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_uppercase();
        let m = match key.as_str() {
            "BPSK" => Modulation::Bpsk,
            "QPSK" => Modulation::Qpsk,
            "PSK8" | "8PSK" => Modulation::Psk8,
            "QAM16" | "16QAM" => Modulation::Qam16,
            "PAM4" | "4PAM" => Modulation::Pam4,
            "GFSK" => Modulation::Gfsk,
            "CPFSK" => Modulation::Cpfsk,
            "AMDSB" => Modulation::AmDsb,
            "WBFM" => Modulation::Wbfm,
            _ => return Err(Error::UnknownClass(s.to_string())),
        };
        Ok(m)
    }
}

/// Clean and noise components of one generated frame, before mixing.
#[derive(Debug, Clone)]
pub(crate) struct Components {
    pub clean_i: Vec<f64>,
    pub clean_q: Vec<f64>,
    pub noise_i: Vec<f64>,
    pub noise_q: Vec<f64>,
}

#[cfg(test)]
impl Components {
    pub fn signal_power(&self) -> f64 {
        mean_power(&self.clean_i, &self.clean_q)
    }

    pub fn noise_power(&self) -> f64 {
        mean_power(&self.noise_i, &self.noise_q)
    }
}

fn mean_power(i: &[f64], q: &[f64]) -> f64 {
    let n = i.len() as f64;
    i.iter().zip(q).map(|(a, b)| a * a + b * b).sum::<f64>() / n
}

/// Generates one synthetic I/Q frame of `class` at `snr_db`.
///
/// Digital classes draw random symbols at 8 samples per symbol with
/// rectangular pulses; analog classes modulate a random tone. White Gaussian
/// noise is added so that clean power over noise power equals `snr_db` in
/// expectation. Output values are rounded to `f32` precision so frames survive
/// the dataset container unchanged.
pub fn generate_synthetic(
    class: Modulation,
    snr_db: f64,
    length: usize,
    seed: u64,
) -> Result<IqFrame> {
    let c = components(class, snr_db, length, seed)?;
    let mix = |clean: &[f64], noise: &[f64]| -> Vec<f64> {
        clean
            .iter()
            .zip(noise)
            .map(|(s, w)| (s + w) as f32 as f64)
            .collect()
    };
    IqFrame::from_vecs(mix(&c.clean_i, &c.noise_i), mix(&c.clean_q, &c.noise_q))
}

pub(crate) fn components(
    class: Modulation,
    snr_db: f64,
    length: usize,
    seed: u64,
) -> Result<Components> {
    if length < MIN_LENGTH {
        return Err(Error::SeriesTooShort {
            len: length,
            min: MIN_LENGTH,
        });
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "snr must be finite, got {snr_db}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (clean_i, clean_q) = match class {
        Modulation::Bpsk => linear(&mut rng, length, &[(1.0, 0.0), (-1.0, 0.0)]),
        Modulation::Qpsk => {
            let a = FRAC_1_SQRT_2;
            linear(&mut rng, length, &[(a, a), (-a, a), (-a, -a), (a, -a)])
        }
        Modulation::Psk8 => {
            let points: Vec<(f64, f64)> = (0..8)
                .map(|k| {
                    let phi = PI * f64::from(k) / 4.0;
                    (phi.cos(), phi.sin())
                })
                .collect();
            linear(&mut rng, length, &points)
        }
        Modulation::Qam16 => {
            let scale = 10f64.sqrt();
            let levels = [-3.0, -1.0, 1.0, 3.0];
            let points: Vec<(f64, f64)> = levels
                .iter()
                .flat_map(|&a| levels.iter().map(move |&b| (a / scale, b / scale)))
                .collect();
            linear(&mut rng, length, &points)
        }
        Modulation::Pam4 => {
            let scale = 5f64.sqrt();
            let points: Vec<(f64, f64)> = [-3.0, -1.0, 1.0, 3.0]
                .iter()
                .map(|&a| (a / scale, 0.0))
                .collect();
            linear(&mut rng, length, &points)
        }
        Modulation::Gfsk => fsk(&mut rng, length, true),
        Modulation::Cpfsk => fsk(&mut rng, length, false),
        Modulation::AmDsb => am_dsb(&mut rng, length),
        Modulation::Wbfm => wbfm(&mut rng, length),
    };

    let signal_power = mean_power(&clean_i, &clean_q);
    let noise_power = signal_power / 10f64.powf(snr_db / 10.0);
    let sigma = (noise_power / 2.0).sqrt();
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            })
            .collect()
    };
    let noise_i = draw(length);
    let noise_q = draw(length);
    Ok(Components {
        clean_i,
        clean_q,
        noise_i,
        noise_q,
    })
}

fn symbol_count(length: usize) -> usize {
    length.div_ceil(SAMPLES_PER_SYMBOL)
}

fn linear(rng: &mut ChaCha8Rng, length: usize, points: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let symbols: Vec<(f64, f64)> = (0..symbol_count(length))
        .map(|_| points[rng.gen_range(0..points.len())])
        .collect();
    (0..length).map(|j| symbols[j / SAMPLES_PER_SYMBOL]).unzip()
}

/// Continuous-phase binary FSK with modulation index 0.5, optionally with a
/// Gaussian frequency pulse (BT = 0.35).
fn fsk(rng: &mut ChaCha8Rng, length: usize, gaussian: bool) -> (Vec<f64>, Vec<f64>) {
    const MOD_INDEX: f64 = 0.5;
    let symbols: Vec<f64> = (0..symbol_count(length))
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let nrz: Vec<f64> = (0..length)
        .map(|j| symbols[j / SAMPLES_PER_SYMBOL])
        .collect();
    let freq = if gaussian { gaussian_filter(&nrz) } else { nrz };
    let mut phase = rng.gen_range(0.0..2.0 * PI);
    let step = PI * MOD_INDEX / SAMPLES_PER_SYMBOL as f64;
    freq.iter()
        .map(|f| {
            phase += step * f;
            (phase.cos(), phase.sin())
        })
        .unzip()
}

fn gaussian_filter(x: &[f64]) -> Vec<f64> {
    const BT: f64 = 0.35;
    let sps = SAMPLES_PER_SYMBOL as f64;
    let sigma = (2f64.ln()).sqrt() / (2.0 * PI * BT) * sps;
    let half = (2 * SAMPLES_PER_SYMBOL) as isize;
    let taps: Vec<f64> = (-half..=half)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    let n = x.len() as isize;
    (0..n)
        .map(|j| {
            taps.iter()
                .enumerate()
                .map(|(t, w)| {
                    let idx = (j + t as isize - half).clamp(0, n - 1);
                    w * x[idx as usize]
                })
                .sum::<f64>()
                / norm
        })
        .collect()
}

/// Double-sideband AM with carrier, normalised to unit power.
fn am_dsb(rng: &mut ChaCha8Rng, length: usize) -> (Vec<f64>, Vec<f64>) {
    let freq = rng.gen_range(0.01..0.05);
    let phi = rng.gen_range(0.0..2.0 * PI);
    let depth = 0.5;
    let raw: Vec<f64> = (0..length)
        .map(|t| 1.0 + depth * (2.0 * PI * freq * t as f64 + phi).cos())
        .collect();
    let power = raw.iter().map(|v| v * v).sum::<f64>() / length as f64;
    let scale = power.sqrt().recip();
    (raw.iter().map(|v| v * scale).collect(), vec![0.0; length])
}

/// Wideband FM of a random tone (modulation index 5).
fn wbfm(rng: &mut ChaCha8Rng, length: usize) -> (Vec<f64>, Vec<f64>) {
    let freq = rng.gen_range(0.005..0.02);
    let phi = rng.gen_range(0.0..2.0 * PI);
    let carrier = rng.gen_range(0.0..2.0 * PI);
    let beta = 5.0;
    (0..length)
        .map(|t| {
            let theta = carrier + beta * (2.0 * PI * freq * t as f64 + phi).sin();
            (theta.cos(), theta.sin())
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpsk_high_snr_on_real_axis() {
        let f = generate_synthetic(Modulation::Bpsk, 60.0, 128, 7).unwrap();
        assert_eq!(f.len(), 128);
        for (&i, &q) in f.i().values().iter().zip(f.q().values()) {
            assert!((i.abs() - 1.0).abs() < 0.01, "I = {i}");
            assert!(q.abs() < 0.01, "Q = {q}");
        }
    }

    #[test]
    fn qpsk_high_snr_on_constellation() {
        let f = generate_synthetic(Modulation::Qpsk, 60.0, 128, 7).unwrap();
        let a = FRAC_1_SQRT_2;
        for (&i, &q) in f.i().values().iter().zip(f.q().values()) {
            assert!((i.abs() - a).abs() < 0.01 && (q.abs() - a).abs() < 0.01);
        }
    }

    #[test]
    fn zero_db_noise_matches_signal_power() {
        let c = components(Modulation::Bpsk, 0.0, 128, 7).unwrap();
        let ratio = c.noise_power() / c.signal_power();
        assert!((ratio - 1.0).abs() <= 0.2, "noise/signal = {ratio}");
    }

    #[test]
    fn noise_power_tracks_snr_on_average() {
        for snr in [-10.0, 0.0, 10.0] {
            let mut ratio = 0.0;
            for seed in 0..50 {
                let c = components(Modulation::Qam16, snr, 256, seed).unwrap();
                ratio += c.signal_power() / c.noise_power();
            }
            let measured = 10.0 * (ratio / 50.0).log10();
            assert!(
                (measured - snr).abs() < 0.5,
                "snr {snr}: measured {measured}"
            );
        }
    }

    #[test]
    fn deterministic_given_seed() {
        for class in Modulation::ALL {
            let a = generate_synthetic(class, 4.0, 100, 11).unwrap();
            let b = generate_synthetic(class, 4.0, 100, 11).unwrap();
            assert_eq!(a, b, "{class}");
            let c = generate_synthetic(class, 4.0, 100, 12).unwrap();
            assert_ne!(a, c, "{class}");
        }
    }

    #[test]
    fn constant_envelope_classes() {
        for class in [Modulation::Gfsk, Modulation::Cpfsk, Modulation::Wbfm] {
            let c = components(class, 0.0, 64, 3).unwrap();
            for (i, q) in c.clean_i.iter().zip(&c.clean_q) {
                assert!((i * i + q * q - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_short_frames_and_unknown_names() {
        assert!(matches!(
            generate_synthetic(Modulation::Bpsk, 0.0, 7, 0),
            Err(Error::SeriesTooShort { len: 7, min: 8 })
        ));
        assert!(matches!(
            "OOK".parse::<Modulation>(),
            Err(Error::UnknownClass(_))
        ));
        assert_eq!("8psk".parse::<Modulation>().unwrap(), Modulation::Psk8);
        assert_eq!("AM-DSB".parse::<Modulation>().unwrap(), Modulation::AmDsb);
    }
}
