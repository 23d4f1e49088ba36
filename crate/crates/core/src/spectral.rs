//! Frequency-domain metrics of a single channel.
//!
//! The forward transform carries the `1/(MN)` factor; the inverse carries
//! none, so `idft2d(dft2d(x)) == x`. Bin `k` of an `M`-point axis stands for
//! the signed frequency `k/M` when `2k <= M` and `(k−M)/M` otherwise.
//!
//! [`aliasing_ratio`] sums magnitudes `|F|` while [`lfr`], [`rdf`] and
//! [`high_band_power`] use powers `|F|²`. The two are kept separate on
//! purpose: the first is a reporting metric, the others feed losses.

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{domain, Result};
use crate::tensor::{FeatureMap, Plane};

/// Default Nyquist threshold for 2× downsampling.
pub const DEFAULT_NYQUIST: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.data[k * self.cols + l]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// `|F(k,l)|²` for every bin, row-major.
    pub fn power(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Largest non-DC power bin, as `(k, l)`.
    pub fn dominant_bin(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_p = f64::NEG_INFINITY;
        for k in 0..self.rows {
            for l in 0..self.cols {
                if k == 0 && l == 0 {
                    continue;
                }
                let p = self.get(k, l).norm_sqr();
                if p > best_p {
                    best_p = p;
                    best = (k, l);
                }
            }
        }
        best
    }
}

/// Signed digital frequency of bin `k` on an `n`-point axis.
#[inline]
pub fn signed_frequency(k: usize, n: usize) -> f64 {
    if 2 * k > n {
        (k as f64 - n as f64) / n as f64
    } else {
        k as f64 / n as f64
    }
}

/// The set H of bins strictly above a Nyquist threshold on either axis.
/// A bin whose frequency equals the threshold belongs to the low band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBandSet {
    pub nyquist: f64,
}

impl Default for FrequencyBandSet {
    fn default() -> Self {
        Self {
            nyquist: DEFAULT_NYQUIST,
        }
    }
}

impl FrequencyBandSet {
    pub fn new(nyquist: f64) -> Self {
        Self { nyquist }
    }

    #[inline]
    pub fn is_high(&self, k: usize, l: usize, rows: usize, cols: usize) -> bool {
        signed_frequency(k, rows).abs() > self.nyquist
            || signed_frequency(l, cols).abs() > self.nyquist
    }

    pub fn mask(&self, rows: usize, cols: usize) -> Vec<bool> {
        let mut m = Vec::with_capacity(rows * cols);
        for k in 0..rows {
            for l in 0..cols {
                m.push(self.is_high(k, l, rows, cols));
            }
        }
        m
    }

    pub fn high_count(&self, rows: usize, cols: usize) -> usize {
        self.mask(rows, cols).iter().filter(|&&h| h).count()
    }
}

fn fft2(data: &mut [Complex64], rows: usize, cols: usize, direction: FftDirection) {
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft(cols, direction);
    for row in data.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft(rows, direction);
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for l in 0..cols {
        for k in 0..rows {
            column[k] = data[k * cols + l];
        }
        col_fft.process(&mut column);
        for k in 0..rows {
            data[k * cols + l] = column[k];
        }
    }
}

/// Forward 2-D DFT with the `1/(MN)` normalisation.
pub fn dft2d(channel: &Plane) -> Result<Spectrum> {
    let (rows, cols) = (channel.height(), channel.width());
    if rows < 2 || cols < 2 {
        return domain(format!("DFT needs at least 2x2, got {rows}x{cols}"));
    }
    let mut data: Vec<Complex64> = channel
        .data()
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .collect();
    fft2(&mut data, rows, cols, FftDirection::Forward);
    let scale = 1.0 / (rows * cols) as f64;
    data.iter_mut().for_each(|z| *z *= scale);
    Ok(Spectrum { rows, cols, data })
}

/// Inverse 2-D DFT without normalisation, complex result.
pub fn idft2d_complex(spectrum: &Spectrum) -> Vec<Complex64> {
    let mut data = spectrum.data.clone();
    fft2(&mut data, spectrum.rows, spectrum.cols, FftDirection::Inverse);
    data
}

/// Inverse 2-D DFT, real part.
pub fn idft2d(spectrum: &Spectrum) -> Plane {
    let data = idft2d_complex(spectrum).into_iter().map(|z| z.re).collect();
    Plane::new(spectrum.rows, spectrum.cols, data).expect("spectrum extents are >= 2")
}

/// Share of spectral magnitude in H. An all-zero map yields 0.
pub fn aliasing_ratio(channel: &Plane, nyquist: f64) -> Result<f64> {
    let spectrum = dft2d(channel)?;
    let bands = FrequencyBandSet::new(nyquist);
    let (mut high, mut total) = (0.0, 0.0);
    for k in 0..spectrum.rows {
        for l in 0..spectrum.cols {
            let m = spectrum.get(k, l).norm();
            total += m;
            if bands.is_high(k, l, spectrum.rows, spectrum.cols) {
                high += m;
            }
        }
    }
    Ok(if total > 0.0 { high / total } else { 0.0 })
}

/// `max(|k/M|, |l/N|)` per bin, row-major.
fn radial_max(rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * cols);
    for k in 0..rows {
        let fk = signed_frequency(k, rows).abs();
        for l in 0..cols {
            out.push(fk.max(signed_frequency(l, cols).abs()));
        }
    }
    out
}

struct PowerProfile {
    radius: Vec<f64>,
    power: Vec<f64>,
    total: f64,
}

impl PowerProfile {
    fn new(channel: &Plane) -> Result<Self> {
        let spectrum = dft2d(channel)?;
        let power = spectrum.power();
        let total = power.iter().sum();
        Ok(Self {
            radius: radial_max(spectrum.rows, spectrum.cols),
            power,
            total,
        })
    }

    fn below(&self, xi: f64) -> f64 {
        if self.total <= 0.0 {
            return 0.0;
        }
        let low: f64 = self
            .radius
            .iter()
            .zip(&self.power)
            .filter(|(&r, _)| r < xi)
            .map(|(_, &p)| p)
            .sum();
        low / self.total
    }
}

/// Low-frequency ratio: share of power with `max(|k/M|,|l/N|) < xi`.
pub fn lfr(channel: &Plane, xi: f64) -> Result<f64> {
    Ok(PowerProfile::new(channel)?.below(xi))
}

/// LFR evaluated at each threshold in `xis`, sharing one transform.
pub fn lfr_curve(channel: &Plane, xis: &[f64]) -> Result<Vec<f64>> {
    let profile = PowerProfile::new(channel)?;
    Ok(xis.iter().map(|&xi| profile.below(xi)).collect())
}

/// Ratio density over `bins` equal ξ-intervals covering `(0, 1/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rdf {
    /// Bin width Δξ = 1/(2·bins).
    pub step: f64,
    /// Density per unit ξ; `density[i]·step` is the power share of bin `i`.
    pub density: Vec<f64>,
}

impl Rdf {
    pub fn centers(&self) -> Vec<f64> {
        (0..self.density.len())
            .map(|i| (i as f64 + 0.5) * self.step)
            .collect()
    }

    /// Left edges `e_i = i·Δξ`.
    pub fn edges(&self) -> Vec<f64> {
        (0..self.density.len()).map(|i| i as f64 * self.step).collect()
    }
}

/// Forward finite difference of LFR on the edges `i/(2·bins)`.
///
/// Bin `i` covers `[e_i, e_{i+1})`; the last bin is closed at 1/2 so that
/// Nyquist-row power is counted and `Σ density·Δξ = 1` for non-zero maps.
pub fn rdf(channel: &Plane, bins: usize) -> Result<Rdf> {
    if bins < 2 {
        return domain(format!("rdf needs at least 2 bins, got {bins}"));
    }
    let profile = PowerProfile::new(channel)?;
    let step = 0.5 / bins as f64;
    let top = if profile.total > 0.0 { 1.0 } else { 0.0 };
    let edge = |i: usize| {
        if i == bins {
            top
        } else {
            profile.below(i as f64 * step)
        }
    };
    let density = (0..bins).map(|i| (edge(i + 1) - edge(i)) / step).collect();
    Ok(Rdf { step, density })
}

/// Mean power over H: `(1/|H|) Σ_{H} |F|²`.
pub fn high_band_power(channel: &Plane, nyquist: f64) -> Result<f64> {
    let spectrum = dft2d(channel)?;
    let mask = FrequencyBandSet::new(nyquist).mask(spectrum.rows, spectrum.cols);
    let count = mask.iter().filter(|&&h| h).count();
    if count == 0 {
        return Ok(0.0);
    }
    let sum: f64 = spectrum
        .data
        .iter()
        .zip(&mask)
        .filter(|(_, &h)| h)
        .map(|(z, _)| z.norm_sqr())
        .sum();
    Ok(sum / count as f64)
}

/// Gradient of [`high_band_power`] with respect to every input value.
///
/// With `F = D x / (MN)` and `x` real, the gradient is
/// `2/(|H|·MN) · Re(D^H (1_H ⊙ F))`, i.e. the unnormalised inverse transform
/// of the masked spectrum.
pub fn high_band_power_grad(channel: &Plane, nyquist: f64) -> Result<(f64, Plane)> {
    let spectrum = dft2d(channel)?;
    let (rows, cols) = (spectrum.rows, spectrum.cols);
    let mask = FrequencyBandSet::new(nyquist).mask(rows, cols);
    let count = mask.iter().filter(|&&h| h).count();
    if count == 0 {
        return Ok((0.0, Plane::zeros(rows, cols)));
    }
    let mut value = 0.0;
    let masked = Spectrum {
        rows,
        cols,
        data: spectrum
            .data
            .iter()
            .zip(&mask)
            .map(|(&z, &h)| {
                if h {
                    value += z.norm_sqr();
                    z
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect(),
    };
    let scale = 2.0 / (count as f64 * (rows * cols) as f64);
    let grad = idft2d(&masked).map(|x| x * scale);
    Ok((value / count as f64, grad))
}

fn channel_mean(map: &FeatureMap, f: impl Fn(&Plane) -> Result<f64>) -> Result<f64> {
    let mut acc = 0.0;
    for c in 0..map.channels() {
        acc += f(&map.plane(c))?;
    }
    Ok(acc / map.channels() as f64)
}

/// [`aliasing_ratio`] averaged over channels.
pub fn aliasing_ratio_map(map: &FeatureMap, nyquist: f64) -> Result<f64> {
    channel_mean(map, |p| aliasing_ratio(p, nyquist))
}

/// [`high_band_power`] averaged over channels.
pub fn high_band_power_map(map: &FeatureMap, nyquist: f64) -> Result<f64> {
    channel_mean(map, |p| high_band_power(p, nyquist))
}

/// [`lfr_curve`] averaged over channels.
pub fn lfr_curve_map(map: &FeatureMap, xis: &[f64]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; xis.len()];
    for p in map.planes() {
        for (a, v) in acc.iter_mut().zip(lfr_curve(&p, xis)?) {
            *a += v;
        }
    }
    let n = map.channels() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// [`rdf`] averaged over channels.
pub fn rdf_map(map: &FeatureMap, bins: usize) -> Result<Rdf> {
    let mut acc: Option<Rdf> = None;
    for p in map.planes() {
        let r = rdf(&p, bins)?;
        match acc.as_mut() {
            None => acc = Some(r),
            Some(a) => a
                .density
                .iter_mut()
                .zip(r.density)
                .for_each(|(x, y)| *x += y),
        }
    }
    let mut out = acc.expect("feature maps have at least one channel");
    let n = map.channels() as f64;
    out.density.iter_mut().for_each(|x| *x /= n);
    Ok(out)
}

/// Uniform ξ sweep `(0, 1/2]` with `points` samples: `ξ_i = i/(2·points)`.
pub fn xi_sweep(points: usize) -> Vec<f64> {
    (1..=points).map(|i| 0.5 * i as f64 / points as f64).collect()
}
