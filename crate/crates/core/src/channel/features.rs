use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::{Complex, Complex64};
use rustfft::{Fft, FftPlanner};

use super::CsiTensor;
use crate::error::{Error, Result};
use crate::math::{cx, Scalar};

/// Denominator magnitudes below this are floored in [`csi_ratio`].
pub const RATIO_FLOOR: f64 = 1e-12;
/// Total PDP power at or below this leaves the delay feature undefined.
pub const DELAY_POWER_FLOOR: f64 = 1e-300;

/// Adjacent-antenna CSI ratios indexed `[pair][n_r][j]`, pair `i` being
/// antenna `i + 1` over antenna `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioTensor<S = f64> {
    pub pairs: usize,
    pub nr: usize,
    pub ns: usize,
    pub data: Vec<Complex<S>>,
    /// Set when some denominator was floored.
    pub floored: bool,
}

impl<S: Scalar> RatioTensor<S> {
    pub fn row(&self, pair: usize, r: usize) -> &[Complex<S>] {
        let s = (pair * self.nr + r) * self.ns;
        &self.data[s..s + self.ns]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub fn csi_ratio<S: Scalar>(h: &CsiTensor<S>) -> Result<RatioTensor<S>> {
    if h.nt < 2 {
        return Err(Error::Shape(format!("CSI ratio needs at least 2 transmit antennas, got {}", h.nt)));
    }
    let ns = h.ns();
    let mut data = Vec::with_capacity((h.nt - 1) * h.nr * ns);
    let mut floored = false;
    for t in 0..h.nt - 1 {
        for r in 0..h.nr {
            for (num, &den) in h.row(t + 1, r).iter().zip(h.row(t, r)) {
                let m = den.norm_sqr().val().sqrt();
                let den = if m >= RATIO_FLOOR {
                    den
                } else {
                    floored = true;
                    if m > 0.0 {
                        den * cx(S::cst(RATIO_FLOOR / m))
                    } else {
                        cx(S::cst(RATIO_FLOOR))
                    }
                };
                data.push(*num / den);
            }
        }
    }
    Ok(RatioTensor { pairs: h.nt - 1, nr: h.nr, ns, data, floored })
}

/// Savitzky-Golay smoother as a fixed linear map over a series of length `n`.
/// Points within half a window of either end use the polynomial fitted to
/// the first (last) full window.
#[derive(Clone, Debug)]
pub struct SavGol {
    n: usize,
    /// Per output: window start and weights.
    rows: Vec<(usize, Vec<f64>)>,
}

impl SavGol {
    pub fn new(n: usize, window: usize, order: usize) -> Result<Self> {
        if window % 2 == 0 || window <= order || window > n {
            return Err(Error::invalid(
                "savgol",
                format!("need odd window > order and <= series length; got window {window}, order {order}, length {n}"),
            ));
        }
        let h = window / 2;
        let scale = h.max(1) as f64;
        let a = DMatrix::from_fn(window, order + 1, |k, m| ((k as f64 - h as f64) / scale).powi(m as i32));
        let pinv = a.pseudo_inverse(1e-12).map_err(|e| Error::invalid("savgol", e.to_string()))?;
        let weights_at = |x: f64| -> Vec<f64> {
            (0..window).map(|k| (0..=order).map(|m| (x / scale).powi(m as i32) * pinv[(m, k)]).sum()).collect()
        };
        let rows = (0..n)
            .map(|i| {
                let start = i.saturating_sub(h).min(n - window);
                (start, weights_at(i as f64 - (start + h) as f64))
            })
            .collect();
        Ok(Self { n, rows })
    }

    pub fn apply<S: Scalar>(&self, x: &[Complex<S>]) -> Vec<Complex<S>> {
        assert_eq!(x.len(), self.n, "series length");
        self.rows
            .iter()
            .map(|(s, w)| {
                let mut acc = cx(S::zero());
                for (k, &wk) in w.iter().enumerate() {
                    let z = x[s + k];
                    acc = acc + Complex::new(z.re * wk, z.im * wk);
                }
                acc
            })
            .collect()
    }
}

/// Smooths every subcarrier series of a ratio tensor.
pub fn savgol<S: Scalar>(ratio: &RatioTensor<S>, window: usize, order: usize) -> Result<RatioTensor<S>> {
    let sg = SavGol::new(ratio.ns, window, order)?;
    let mut data = Vec::with_capacity(ratio.len());
    for row in ratio.data.chunks(ratio.ns) {
        data.extend(sg.apply(row));
    }
    Ok(RatioTensor { data, ..ratio.clone() })
}

fn plan(n: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_inverse(n)
}

fn idft_with<S: Scalar>(x: &[Complex<S>], fft: &dyn Fft<f64>) -> Vec<Complex<S>> {
    let n = x.len();
    let inv = 1.0 / n as f64;
    let run = |part: &dyn Fn(S) -> f64| -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|z| Complex64::new(part(z.re), part(z.im))).collect();
        fft.process(&mut buf);
        buf.iter().map(|z| z * inv).collect()
    };
    let value = run(&|s: S| s.val());
    let tangents: Vec<Vec<Complex64>> = (0..S::LANES).map(|k| run(&|s: S| s.tangent(k))).collect();
    (0..n)
        .map(|b| {
            let re: Vec<f64> = tangents.iter().map(|t| t[b].re).collect();
            let im: Vec<f64> = tangents.iter().map(|t| t[b].im).collect();
            Complex::new(S::from_parts(value[b].re, &re), S::from_parts(value[b].im, &im))
        })
        .collect()
}

/// `x_b = (1/N) sum_j h_j exp(+2 pi i j b / N)`.
pub fn idft<S: Scalar>(x: &[Complex<S>]) -> Vec<Complex<S>> {
    if x.is_empty() {
        return Vec::new();
    }
    idft_with(x, plan(x.len()).as_ref())
}

/// Delays `b / (N df)` and powers `|x_b|^2` of one antenna pair.
pub fn power_delay_profile(h: &CsiTensor, t: usize, r: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if t >= h.nt || r >= h.nr {
        return Err(Error::Range(format!("antenna pair ({t}, {r}) outside {}x{}", h.nt, h.nr)));
    }
    let n = h.ns();
    let bin = 1.0 / (n as f64 * h.freq.df);
    let x = idft(h.row(t, r));
    Ok(((0..n).map(|b| b as f64 * bin).collect(), x.iter().map(|z| z.norm_sqr()).collect()))
}

/// Power-weighted mean delay per antenna pair, indexed `[n_t][n_r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayFeature<S = f64> {
    pub values: Vec<S>,
    /// Pairs with no power; their value is 0.
    pub flagged: Vec<bool>,
}

impl<S: Scalar> DelayFeature<S> {
    pub fn any_flagged(&self) -> bool {
        self.flagged.iter().any(|&f| f)
    }
}

/// Centroid `sum P_b tau_b / sum P_b` of the Hann-windowed delay profile.
/// Bins in the upper half map to negative delays, so the centroid of a
/// profile concentrated near zero delay is not biased by wrap-around.
pub fn delay_feature<S: Scalar>(h: &CsiTensor<S>) -> DelayFeature<S> {
    let n = h.ns();
    let fft = plan(n);
    let bin = 1.0 / (n as f64 * h.freq.df);
    let window: Vec<f64> =
        (0..n).map(|j| 0.5 - 0.5 * (std::f64::consts::TAU * j as f64 / n as f64).cos()).collect();
    let delays: Vec<f64> = (0..n).map(|b| if b < n.div_ceil(2) { b as f64 } else { b as f64 - n as f64 } * bin).collect();
    let mut values = Vec::with_capacity(h.nt * h.nr);
    let mut flagged = Vec::with_capacity(h.nt * h.nr);
    for t in 0..h.nt {
        for r in 0..h.nr {
            let w: Vec<Complex<S>> =
                h.row(t, r).iter().zip(&window).map(|(z, &w)| Complex::new(z.re * w, z.im * w)).collect();
            let x = idft_with(&w, fft.as_ref());
            let mut total = S::zero();
            let mut moment = S::zero();
            for (z, &tau) in x.iter().zip(&delays) {
                let p = z.norm_sqr();
                total += p;
                moment += p * tau;
            }
            if total.val() > DELAY_POWER_FLOOR && total.val().is_finite() {
                values.push(moment / total);
                flagged.push(false);
            } else {
                values.push(S::zero());
                flagged.push(true);
            }
        }
    }
    DelayFeature { values, flagged }
}
