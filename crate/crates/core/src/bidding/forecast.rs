use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::grid::PriceGrid;
use crate::error::{Error, Result};

/// Minimum paired history for an accuracy estimate.
pub const MIN_ACCURACY_HOURS: usize = 7 * 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForecastAccuracy {
    pub a_dlmp: f64,
    pub a_rtlmp: f64,
    pub a_sign: f64,
}

/// `1 - MAE / MAD`, floored at 0. MAD is the mean absolute deviation of the
/// actuals from their own mean, so 0 means no better than a flat forecast.
fn magnitude_accuracy(forecast: &[f64], actual: &[f64]) -> f64 {
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let mad = actual.iter().map(|a| (a - mean).abs()).sum::<f64>() / n;
    let mae = forecast.iter().zip(actual).map(|(f, a)| (f - a).abs()).sum::<f64>() / n;
    if mad > 0.0 {
        (1.0 - mae / mad).max(0.0)
    } else if mae == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Accuracy of paired hourly forecasts against actuals. Hours with a missing
/// value on either side are skipped; a zero gap on either side counts as a sign match.
pub fn assess_forecast_accuracy(
    dlmp_hat: &[f64],
    rtlmp_hat: &[f64],
    dlmp: &[f64],
    rtlmp: &[f64],
) -> Result<ForecastAccuracy> {
    let n = dlmp.len();
    if dlmp_hat.len() != n || rtlmp_hat.len() != n || rtlmp.len() != n {
        return Err(Error::InvalidInput("forecast and actual series differ in length".into()));
    }
    let keep: Vec<usize> = (0..n)
        .filter(|&k| [dlmp_hat[k], rtlmp_hat[k], dlmp[k], rtlmp[k]].iter().all(|v| v.is_finite()))
        .collect();
    if keep.len() < MIN_ACCURACY_HOURS {
        return Err(Error::InsufficientData(format!(
            "{} paired forecast hours, need at least {MIN_ACCURACY_HOURS}",
            keep.len()
        )));
    }
    let pick = |v: &[f64]| keep.iter().map(|&k| v[k]).collect::<Vec<_>>();
    let (fl, fp, al, ap) = (pick(dlmp_hat), pick(rtlmp_hat), pick(dlmp), pick(rtlmp));
    let matches = (0..keep.len())
        .filter(|&k| {
            let (g_hat, g) = (fl[k] - fp[k], al[k] - ap[k]);
            g_hat == 0.0 || g == 0.0 || (g_hat > 0.0) == (g > 0.0)
        })
        .count();
    Ok(ForecastAccuracy {
        a_dlmp: magnitude_accuracy(&fl, &al),
        a_rtlmp: magnitude_accuracy(&fp, &ap),
        a_sign: matches as f64 / keep.len() as f64,
    })
}

/// Synthetic forecaster: truth plus Gaussian noise, with the sign of the
/// forecast gap forced to the truth's and then flipped with `sign_error` probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastNoise {
    pub dlmp_sd: f64,
    pub rtlmp_sd: f64,
    pub sign_error: f64,
}

impl Default for ForecastNoise {
    fn default() -> Self {
        ForecastNoise {
            dlmp_sd: 3.0,
            rtlmp_sd: 6.0,
            sign_error: 0.2,
        }
    }
}

impl ForecastNoise {
    pub const PERFECT: ForecastNoise = ForecastNoise {
        dlmp_sd: 0.0,
        rtlmp_sd: 0.0,
        sign_error: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("dlmp_sd", self.dlmp_sd), ("rtlmp_sd", self.rtlmp_sd)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("forecast.{k} {v} must be >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.sign_error) {
            return Err(Error::InvalidConfig(format!(
                "forecast.sign_error {} must be in [0, 1]",
                self.sign_error
            )));
        }
        Ok(())
    }

    pub fn is_perfect(&self) -> bool {
        *self == Self::PERFECT
    }

    /// One forecast pair for actual `(lam, pi)`.
    pub fn forecast<R: Rng>(&self, rng: &mut R, lam: f64, pi: f64) -> (f64, f64) {
        if self.is_perfect() {
            return (lam, pi);
        }
        let noise = |rng: &mut R, sd: f64| {
            if sd > 0.0 {
                Normal::new(0.0, sd).expect("sd validated").sample(rng)
            } else {
                0.0
            }
        };
        let l = lam + noise(rng, self.dlmp_sd);
        let p = pi + noise(rng, self.rtlmp_sd);
        let flip = rng.random_bool(self.sign_error);
        let truth = (lam - pi).signum();
        if lam == pi {
            return (l, p);
        }
        let sign = if flip { -truth } else { truth };
        let (mid, half) = ((l + p) / 2.0, (l - p).abs() / 2.0);
        (mid + sign * half, mid - sign * half)
    }

    /// Forecasts for every grid cell. Node `i` draws from ChaCha8 stream `i`,
    /// day by day, so the result depends only on the seed and the grid.
    pub fn forecast_grid(&self, grid: &PriceGrid, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut fl = Vec::with_capacity(grid.nodes.len());
        let mut fp = Vec::with_capacity(grid.nodes.len());
        for i in 0..grid.nodes.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let (l, p): (Vec<f64>, Vec<f64>) = grid.dlmp[i]
                .iter()
                .zip(&grid.rtlmp[i])
                .map(|(&lam, &pi)| {
                    if lam.is_nan() || pi.is_nan() {
                        (f64::NAN, f64::NAN)
                    } else {
                        self.forecast(&mut rng, lam, pi)
                    }
                })
                .unzip();
            fl.push(l);
            fp.push(p);
        }
        (fl, fp)
    }
}
