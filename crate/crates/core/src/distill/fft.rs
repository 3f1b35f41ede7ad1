//! 2-D FFT with amplitude/phase split.
//!
//! The spectrum is written as `F = A · exp(-j·P)`, so the stored phase is
//! the negated complex argument.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub height: usize,
    pub width: usize,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
}

impl Spectrum {
    pub fn to_complex(&self) -> Vec<Complex64> {
        self.amplitude
            .iter()
            .zip(&self.phase)
            .map(|(&a, &p)| Complex64::from_polar(a, -p))
            .collect()
    }

    pub fn from_complex(height: usize, width: usize, bins: &[Complex64]) -> Self {
        Spectrum {
            height,
            width,
            amplitude: bins.iter().map(|c| c.norm()).collect(),
            phase: bins.iter().map(|c| -c.arg()).collect(),
        }
    }
}

fn transform_2d(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row.process(data);
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            column[r] = data[r * w + c];
        }
        col.process(&mut column);
        for r in 0..h {
            data[r * w + c] = column[r];
        }
    }
    if inverse {
        let scale = 1.0 / (h * w) as f64;
        for x in data.iter_mut() {
            *x *= scale;
        }
    }
}

/// Complex spectrum of a row-major `h × w` real image.
pub fn fft2_complex(image: &[f64], h: usize, w: usize) -> (usize, usize, Vec<Complex64>) {
    let mut buf: Vec<Complex64> = image[..h * w].iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform_2d(&mut buf, h, w, false);
    (h, w, buf)
}

pub fn fft2(image: &[f64], h: usize, w: usize) -> Spectrum {
    let (ph, pw, bins) = fft2_complex(image, h, w);
    Spectrum::from_complex(ph, pw, &bins)
}

/// Real part of the inverse transform.
pub fn ifft2(spectrum: &Spectrum) -> Vec<f64> {
    let mut buf = spectrum.to_complex();
    transform_2d(&mut buf, spectrum.height, spectrum.width, true);
    buf.into_iter().map(|c| c.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_has_single_dc_bin() {
        let s = fft2(&[0.3; 16], 4, 4);
        assert!((s.amplitude[0] - 0.3 * 16.0).abs() < 1e-12);
        assert!(s.amplitude[1..].iter().all(|&a| a < 1e-12));
    }

    #[test]
    fn roundtrip_random_8x8() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img: Vec<f64> = (0..64).map(|_| rng.gen()).collect();
        let back = ifft2(&fft2(&img, 8, 8));
        let err = img.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
        assert!(fft2(&img, 8, 8).amplitude.iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn non_power_of_two_roundtrips() {
        let img: Vec<f64> = (0..15).map(|i| i as f64).collect();
        let s = fft2(&img, 3, 5);
        assert_eq!((s.height, s.width), (3, 5));
        let back = ifft2(&s);
        for (a, b) in img.iter().zip(&back) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
