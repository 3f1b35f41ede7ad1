use std::sync::Arc;

use rand::{Rng, RngCore};

use super::fft::{fft2_complex, ifft2, Spectrum};
use super::DistillError;
use crate::envs::{Environment, PixelState, State};

/// Amplitude of `s` moved a fraction `lambda` toward the amplitude of
/// `clean`, recombined with the phase of `s`. Returns the unclipped image
/// at the original `h × w` size.
pub fn intervene_channel(
    s: &[f64],
    clean: &[f64],
    h: usize,
    w: usize,
    lambda: f64,
) -> Result<Vec<f64>, DistillError> {
    if s.len() != h * w || clean.len() != h * w {
        return Err(DistillError::ShapeMismatch(format!(
            "images of {} and {} values for a {h}x{w} grid",
            s.len(),
            clean.len()
        )));
    }
    let spectrum = blend_amplitude(s, clean, h, w, lambda)?;
    let full = ifft2(&spectrum);
    let pw = spectrum.width;
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        out.extend_from_slice(&full[r * pw..r * pw + w]);
    }
    Ok(out)
}

/// The intervened spectrum: `Â = (1-λ)·A(s) + λ·A(clean)`, phase `P(s)`.
pub fn blend_amplitude(
    s: &[f64],
    clean: &[f64],
    h: usize,
    w: usize,
    lambda: f64,
) -> Result<Spectrum, DistillError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(DistillError::InvalidLambda(lambda));
    }
    let (ph, pw, fs) = fft2_complex(s, h, w);
    let (_, _, fc) = fft2_complex(clean, h, w);
    let mut spec = Spectrum::from_complex(ph, pw, &fs);
    for (a, c) in spec.amplitude.iter_mut().zip(&fc) {
        *a = (1.0 - lambda) * *a + lambda * c.norm();
    }
    Ok(spec)
}

/// Fourier amplitude intervention on every channel, clipped to `[0, 1]`.
pub fn fourier_intervene(
    s: &PixelState,
    s_clean: &PixelState,
    lambda: f64,
) -> Result<PixelState, DistillError> {
    if (s.channels, s.height, s.width) != (s_clean.channels, s_clean.height, s_clean.width) {
        return Err(DistillError::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            s.channels, s.height, s.width, s_clean.channels, s_clean.height, s_clean.width
        )));
    }
    let plane = s.height * s.width;
    let mut pixels = Vec::with_capacity(s.pixels.len());
    for c in 0..s.channels {
        let a: Vec<f64> = s.pixels[c * plane..(c + 1) * plane]
            .iter()
            .map(|&v| v as f64)
            .collect();
        let b: Vec<f64> = s_clean.pixels[c * plane..(c + 1) * plane]
            .iter()
            .map(|&v| v as f64)
            .collect();
        let out = intervene_channel(&a, &b, s.height, s.width, lambda)?;
        pixels.extend(out.into_iter().map(|v| v.clamp(0.0, 1.0) as f32));
    }
    Ok(PixelState {
        height: s.height,
        width: s.width,
        channels: s.channels,
        pixels,
        noncausal_region: s.noncausal_region,
    })
}

/// Redraws the environment's distractor dimensions; causal dimensions are
/// copied unchanged. Identity when the environment declares none.
pub fn vector_intervene(s: &State, env: &dyn Environment, rng: &mut dyn RngCore) -> State {
    if env.distractor_dims().is_empty() {
        return s.clone();
    }
    env.clean_state(s, rng)
}

/// One intervention draw for training: pixel states are pulled toward the
/// clean version of `clean_source` with `λ ~ U(0, eps)`, vector states go
/// through [`vector_intervene`].
pub fn intervene(
    env: &dyn Environment,
    s: &State,
    clean_source: &State,
    eps: f64,
    rng: &mut dyn RngCore,
) -> Result<State, DistillError> {
    match s {
        State::Pixel(p) => {
            let clean = env.clean_state(clean_source, rng);
            let clean = clean
                .as_pixel()
                .ok_or_else(|| DistillError::ShapeMismatch("clean source is not an image".into()))?;
            let lambda = if eps > 0.0 { rng.gen_range(0.0..eps) } else { 0.0 };
            Ok(State::Pixel(Arc::new(fourier_intervene(p, clean, lambda)?)))
        }
        State::Vector(_) => Ok(vector_intervene(s, env, rng)),
    }
}
