//! Weighted linear fusion of consecutive-day countdown predictions.
//!
//! Countdown predictions `y(z)` made on days `z` lie on a line with slope
//! near -1; its z-intercept `-beta0 / beta1` is the fused boundary date.
//! This module fits that line by weighted least squares, propagates the
//! coefficient variances to the intercept, and evaluates the threshold
//! function that tells how many prediction days are needed before fusing
//! beats a single prediction.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|beta1|` at or below this cannot be inverted into a forecast.
pub const SLOPE_FLOOR: f64 = 1e-6;

/// Where the single-prediction variance `sigma0^2` comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma0 {
    /// Weighted mean squared residual of the fit.
    Residual,
    /// A known value (idealized inputs, simulation).
    Known(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlsFit {
    pub beta0: f64,
    pub beta1: f64,
    pub var_beta0: f64,
    pub var_beta1: f64,
    pub sigma0_sq: f64,
    /// `sigma0^2 / N`.
    pub sigma_prime_sq: f64,
    pub n_points: usize,
    /// Weighted mean of z.
    pub z_mean: f64,
    /// Weighted sum of squared z deviations, weights normalized to sum to N.
    pub z_sxx: f64,
    pub weights_used: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalForecast {
    pub y_star: f64,
    pub sigma_y_star: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub n_points: usize,
}

impl FinalForecast {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Coefficient variances for a line fitted on `n` points with (weighted)
/// mean `z_mean` and spread `sxx`, given `sigma_prime_sq`.
pub fn coefficient_variances(sigma_prime_sq: f64, n: usize, z_mean: f64, sxx: f64) -> (f64, f64) {
    let var0 = sigma_prime_sq * (1.0 / n as f64 + z_mean * z_mean / sxx);
    let var1 = sigma_prime_sq / sxx;
    (var0, var1)
}

/// Variance of `-beta0 / beta1` from the relative variances of the two
/// coefficients, with no covariance term:
/// `(beta0/beta1)^2 * (var0/beta0^2 + var1/beta1^2)`, expanded so that
/// `beta0 = 0` needs no division by zero.
pub fn intercept_variance(beta0: f64, beta1: f64, var0: f64, var1: f64) -> f64 {
    let b1_sq = beta1 * beta1;
    var0 / b1_sq + (beta0 * beta0 / b1_sq) * var1 / b1_sq
}

/// Weighted least-squares line through `(z, y)`.
pub fn fit_weighted(z: &[f64], y: &[f64], weights: &[f64], sigma0: Sigma0) -> Result<WlsFit> {
    let n = z.len();
    if y.len() != n {
        return Err(Error::LengthMismatch(n, y.len()));
    }
    if weights.len() != n {
        return Err(Error::LengthMismatch(n, weights.len()));
    }
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::NonPositiveWeight(i));
    }
    if z.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            field: "wls input".into(),
            detail: "non-finite z or y".into(),
        });
    }
    if z.iter().all(|&v| v == z[0]) {
        return Err(Error::DegenerateDesign);
    }

    let nf = n as f64;
    let w_total: f64 = weights.iter().sum();
    let w: Vec<f64> = weights.iter().map(|w| w * nf / w_total).collect();
    let z_mean = w.iter().zip(z).map(|(w, z)| w * z).sum::<f64>() / nf;
    let y_mean = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        let dz = z[i] - z_mean;
        sxx += w[i] * dz * dz;
        sxy += w[i] * dz * (y[i] - y_mean);
    }
    if sxx <= 0.0 {
        return Err(Error::DegenerateDesign);
    }
    let beta1 = sxy / sxx;
    let beta0 = y_mean - beta1 * z_mean;

    let sigma0_sq = match sigma0 {
        Sigma0::Known(s) => s * s,
        Sigma0::Residual => {
            (0..n)
                .map(|i| w[i] * (y[i] - beta0 - beta1 * z[i]).powi(2))
                .sum::<f64>()
                / nf
        }
    };
    let sigma_prime_sq = sigma0_sq / nf;
    let (var_beta0, var_beta1) = coefficient_variances(sigma_prime_sq, n, z_mean, sxx);
    Ok(WlsFit {
        beta0,
        beta1,
        var_beta0,
        var_beta1,
        sigma0_sq,
        sigma_prime_sq,
        n_points: n,
        z_mean,
        z_sxx: sxx,
        weights_used: weights.to_vec(),
    })
}

/// Fits the Stage-3 line with weights `1 / u^2`.
pub fn fit_wls(points: &[crate::pipeline::PredictionPoint]) -> Result<WlsFit> {
    fit_wls_with(points, Sigma0::Residual)
}

pub fn fit_wls_with(points: &[crate::pipeline::PredictionPoint], sigma0: Sigma0) -> Result<WlsFit> {
    let z: Vec<f64> = points.iter().map(|p| f64::from(p.z)).collect();
    let y: Vec<f64> = points.iter().map(|p| p.y_hat).collect();
    let w: Vec<f64> = points.iter().map(|p| 1.0 / (p.u_hat * p.u_hat)).collect();
    fit_weighted(&z, &y, &w, sigma0)
}

/// The fused boundary date and its propagated standard deviation.
pub fn final_forecast(fit: &WlsFit) -> Result<FinalForecast> {
    if fit.beta1.is_nan() || fit.beta1.abs() <= SLOPE_FLOOR {
        return Err(Error::DegenerateSlope(fit.beta1.abs()));
    }
    let y_star = -fit.beta0 / fit.beta1;
    let var = intercept_variance(fit.beta0, fit.beta1, fit.var_beta0, fit.var_beta1);
    Ok(FinalForecast {
        y_star,
        sigma_y_star: var.max(0.0).sqrt(),
        beta0: fit.beta0,
        beta1: fit.beta1,
        n_points: fit.n_points,
    })
}

/// Mean and sum of squared deviations of `z_start, .., z_start + n - 1`.
fn consecutive_moments(n: usize, z_start: f64) -> (f64, f64) {
    let z_mean = (0..n).map(|i| z_start + i as f64).sum::<f64>() / n as f64;
    let sxx = (0..n).map(|i| (z_start + i as f64 - z_mean).powi(2)).sum();
    (z_mean, sxx)
}

/// Ratio of the fused forecast variance to the single-prediction variance
/// for `n` consecutive prediction days starting at `z_start`:
///
/// `f(N) = 1/(N b1^2) * (1/N + zbar^2/Sxx + (b0^2/b1^2)/Sxx)`
pub fn threshold_function(beta0: f64, beta1: f64, n: usize, z_start: f64) -> Result<f64> {
    if beta1 == 0.0 {
        return Err(Error::ZeroSlope);
    }
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    let nf = n as f64;
    let (z_mean, sxx) = consecutive_moments(n, z_start);
    let b1_sq = beta1 * beta1;
    Ok(1.0 / (nf * b1_sq) * (1.0 / nf + z_mean * z_mean / sxx + (beta0 * beta0 / b1_sq) / sxx))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdAnalysis {
    pub beta0: f64,
    pub beta1: f64,
    pub z_start: f64,
    /// `(N, f(N))` for `N = 2..=n_max`.
    pub table: Vec<(usize, f64)>,
    /// Smallest `N` with `f(N) < 1`.
    pub min_days: Option<usize>,
}

impl ThresholdAnalysis {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["N", "f_th"])?;
        for (n, f) in &self.table {
            wtr.write_record([n.to_string(), f.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Scans `N = 2..=n_max` for the minimum number of prediction days.
pub fn min_days(beta0: f64, beta1: f64, z_start: f64, n_max: usize) -> Result<ThresholdAnalysis> {
    if n_max < 2 {
        return Err(Error::InvalidParameter(format!(
            "n_max must be >= 2, got {n_max}"
        )));
    }
    let table = (2..=n_max)
        .map(|n| threshold_function(beta0, beta1, n, z_start).map(|f| (n, f)))
        .collect::<Result<Vec<_>>>()?;
    let min_days = table.iter().find(|(_, f)| *f < 1.0).map(|(n, _)| *n);
    Ok(ThresholdAnalysis {
        beta0,
        beta1,
        z_start,
        table,
        min_days,
    })
}

/// Evaluates the threshold function directly (`lhs`) and as the propagated
/// intercept variance over `sigma0^2` (`rhs`), assembled from the
/// coefficient variances with `sigma'^2 = sigma0^2 / N`.
pub fn propagation_identity_check(
    beta0: f64,
    beta1: f64,
    n: usize,
    z_start: f64,
    sigma0: f64,
) -> Result<(f64, f64)> {
    if sigma0.is_nan() || sigma0 <= 0.0 {
        return Err(Error::InvalidParameter("sigma0 must be > 0".into()));
    }
    let lhs = threshold_function(beta0, beta1, n, z_start)?;
    let s0_sq = sigma0 * sigma0;
    let sigma_prime_sq = s0_sq / n as f64;
    let (z_mean, sxx) = consecutive_moments(n, z_start);
    let (var0, var1) = coefficient_variances(sigma_prime_sq, n, z_mean, sxx);
    let rhs = intercept_variance(beta0, beta1, var0, var1) / s0_sq;
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloResult {
    pub trials: usize,
    /// Trials whose fitted slope fell under the slope floor (excluded).
    pub degenerate_trials: usize,
    pub mean_y_star: f64,
    pub empirical_std: f64,
    pub mean_reported_sigma: f64,
}

/// Simulates `y_i = boundary - z_i + eps_i`, `eps_i ~ N(0, sigma0^2)`, for
/// `n` consecutive days and fuses each trial with uniform weights.
/// Trial `t` draws from its own ChaCha stream so results do not depend on
/// scheduling.
pub fn monte_carlo_variance(
    boundary: f64,
    sigma0: f64,
    n: usize,
    z_start: f64,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloResult> {
    if trials < 100 {
        return Err(Error::InvalidParameter(format!(
            "trials must be >= 100, got {trials}"
        )));
    }
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    if !(sigma0 >= 0.0 && sigma0.is_finite()) {
        return Err(Error::InvalidParameter(
            "sigma0 must be finite and >= 0".into(),
        ));
    }
    let noise = Normal::new(0.0, sigma0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let z: Vec<f64> = (0..n).map(|i| z_start + i as f64).collect();
    let weights = vec![1.0; n];

    let outcomes: Vec<Option<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let y: Vec<f64> = z
                .iter()
                .map(|zi| boundary - zi + noise.sample(&mut rng))
                .collect();
            let fit = fit_weighted(&z, &y, &weights, Sigma0::Residual).ok()?;
            final_forecast(&fit)
                .ok()
                .map(|f| (f.y_star, f.sigma_y_star))
        })
        .collect();

    let ok: Vec<(f64, f64)> = outcomes.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(Error::DegenerateSlope(0.0));
    }
    let m = ok.len() as f64;
    let mean_y_star = ok.iter().map(|o| o.0).sum::<f64>() / m;
    let var = ok.iter().map(|o| (o.0 - mean_y_star).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    Ok(MonteCarloResult {
        trials,
        degenerate_trials: trials - ok.len(),
        mean_y_star,
        empirical_std: var.sqrt(),
        mean_reported_sigma: ok.iter().map(|o| o.1).sum::<f64>() / m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// Weighted normal equations solved by Cramer's rule on raw weights.
    fn normal_equations(z: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
        let (mut s, mut sz, mut szz, mut sy, mut szy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..z.len() {
            s += w[i];
            sz += w[i] * z[i];
            szz += w[i] * z[i] * z[i];
            sy += w[i] * y[i];
            szy += w[i] * z[i] * y[i];
        }
        let det = s * szz - sz * sz;
        ((sy * szz - sz * szy) / det, (s * szy - sz * sy) / det)
    }

    #[test]
    fn exact_line() {
        let z: Vec<f64> = (0..8).map(f64::from).collect();
        let y: Vec<f64> = z.iter().map(|z| 10.0 - z).collect();
        let w = [1.0, 2.0, 0.5, 3.0, 1.0, 1.0, 9.0, 0.1];
        let fit = fit_weighted(&z, &y, &w, Sigma0::Residual).unwrap();
        assert_relative_eq!(fit.beta0, 10.0, epsilon = 1e-12);
        assert_relative_eq!(fit.beta1, -1.0, epsilon = 1e-12);
        assert!(fit.sigma0_sq < 1e-25);
        let f = final_forecast(&fit).unwrap();
        assert_relative_eq!(f.y_star, 10.0, epsilon = 1e-12);
        assert!(f.sigma_y_star < 1e-10);
    }

    #[test]
    fn forecast_from_coefficients() {
        let mut fit =
            fit_weighted(&[0.0, 1.0], &[10.0, 9.0], &[1.0, 1.0], Sigma0::Residual).unwrap();
        assert_eq!(final_forecast(&fit).unwrap().y_star, 10.0);
        assert_eq!(final_forecast(&fit).unwrap().sigma_y_star, 0.0);
        fit.beta1 = 0.0;
        assert!(matches!(
            final_forecast(&fit),
            Err(Error::DegenerateSlope(_))
        ));
        fit.beta1 = 1e-7;
        assert!(matches!(
            final_forecast(&fit),
            Err(Error::DegenerateSlope(_))
        ));
    }

    #[test]
    fn input_errors() {
        assert!(matches!(
            fit_weighted(&[1.0], &[1.0], &[1.0], Sigma0::Residual),
            Err(Error::TooFewPoints(1))
        ));
        assert!(matches!(
            fit_weighted(
                &[3.0, 3.0, 3.0],
                &[1.0, 2.0, 3.0],
                &[1.0; 3],
                Sigma0::Residual
            ),
            Err(Error::DegenerateDesign)
        ));
        assert!(matches!(
            fit_weighted(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 0.0], Sigma0::Residual),
            Err(Error::NonPositiveWeight(1))
        ));
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let z: Vec<f64> = (0..50).map(|i| 40.0 + f64::from(i)).collect();
            let y: Vec<f64> = z
                .iter()
                .map(|z| 100.0 - z + 5.0 * (rng.random::<f64>() - 0.5))
                .collect();
            let w: Vec<f64> = (0..50).map(|_| 0.05 + rng.random::<f64>()).collect();
            let fit = fit_weighted(&z, &y, &w, Sigma0::Residual).unwrap();
            let (b0, b1) = normal_equations(&z, &y, &w);
            assert_relative_eq!(fit.beta0, b0, max_relative = 1e-10);
            assert_relative_eq!(fit.beta1, b1, max_relative = 1e-10);
        }
    }

    #[test]
    fn threshold_values() {
        assert_relative_eq!(
            threshold_function(0.0, 1.0, 2, 0.0).unwrap(),
            0.5,
            max_relative = 1e-15
        );
        // f(N) = 1/N^2 + 3(N-1)/(N^2 (N+1)) for beta0 = 0, z_start = 0
        for n in 2..30 {
            let nf = n as f64;
            let want = 1.0 / (nf * nf) + 3.0 * (nf - 1.0) / (nf * nf * (nf + 1.0));
            assert_relative_eq!(
                threshold_function(0.0, 1.0, n, 0.0).unwrap(),
                want,
                max_relative = 1e-12
            );
        }
        assert!(matches!(
            threshold_function(1.0, 0.0, 5, 0.0),
            Err(Error::ZeroSlope)
        ));
    }

    #[test]
    fn minimum_days() {
        assert_eq!(min_days(0.0, 1.0, 0.0, 100).unwrap().min_days, Some(2));
        let a = min_days(10.0, 1.0, 0.0, 100).unwrap();
        assert_eq!(a.min_days, Some(7));
        assert!(a.table[4].1 >= 1.0 && a.table[5].1 < 1.0);
        assert_eq!(min_days(10.0, 1.0, 0.0, 6).unwrap().min_days, None);
        assert_eq!(a.table.len(), 99);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("N,f_th\n2,"));
    }

    #[test]
    fn identity_at_n7() {
        let (lhs, rhs) = propagation_identity_check(10.0, 1.0, 7, 0.0, 5.0).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        assert!(lhs < 1.0);
    }

    #[test]
    fn noiseless_monte_carlo() {
        let r = monte_carlo_variance(60.0, 0.0, 20, 1.0, 100, 3).unwrap();
        assert!(r.empirical_std < 1e-9);
        assert!((r.mean_y_star - 60.0).abs() < 1e-9);
        assert_eq!(r.degenerate_trials, 0);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let a = monte_carlo_variance(60.0, 5.0, 40, 1.0, 300, 7).unwrap();
        let b = monte_carlo_variance(60.0, 5.0, 40, 1.0, 300, 7).unwrap();
        assert_eq!(a, b);
        assert!(monte_carlo_variance(60.0, 5.0, 40, 1.0, 99, 7).is_err());
    }

    proptest! {
        #[test]
        fn weight_scale_invariance(seed in 0u64..500, c in 0.01..100.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<f64> = (0..12).map(f64::from).collect();
            let y: Vec<f64> = z.iter().map(|z| 30.0 - z + rng.random::<f64>()).collect();
            let w: Vec<f64> = (0..12).map(|_| 0.1 + rng.random::<f64>()).collect();
            let scaled: Vec<f64> = w.iter().map(|w| w * c).collect();
            let a = final_forecast(&fit_weighted(&z, &y, &w, Sigma0::Residual).unwrap()).unwrap();
            let b = final_forecast(&fit_weighted(&z, &y, &scaled, Sigma0::Residual).unwrap()).unwrap();
            prop_assert!((a.y_star - b.y_star).abs() <= 1e-9 * a.y_star.abs().max(1.0));
            prop_assert!((a.beta1 - b.beta1).abs() <= 1e-9);
            prop_assert!((a.sigma_y_star - b.sigma_y_star).abs() <= 1e-9 * a.sigma_y_star.max(1.0));
        }

        #[test]
        fn shifting_days_shifts_forecast(seed in 0u64..500, shift in -100.0..100.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z: Vec<f64> = (0..15).map(|i| 20.0 + f64::from(i)).collect();
            let y: Vec<f64> = z.iter().map(|z| 60.0 - z + 2.0 * rng.random::<f64>()).collect();
            let w: Vec<f64> = (0..15).map(|_| 0.1 + rng.random::<f64>()).collect();
            let moved: Vec<f64> = z.iter().map(|z| z + shift).collect();
            let a = final_forecast(&fit_weighted(&z, &y, &w, Sigma0::Residual).unwrap()).unwrap();
            let b = final_forecast(&fit_weighted(&moved, &y, &w, Sigma0::Residual).unwrap()).unwrap();
            prop_assert!((b.y_star - (a.y_star + shift)).abs() <= 1e-8);
        }

        #[test]
        fn threshold_grows_with_abs_beta0(b0 in 0.0..200.0f64, extra in 0.001..50.0f64, n in 2usize..200, z0 in -50.0..300.0f64) {
            let lo = threshold_function(b0, 1.0, n, z0).unwrap();
            let hi = threshold_function(b0 + extra, 1.0, n, z0).unwrap();
            let neg = threshold_function(-(b0 + extra), 1.0, n, z0).unwrap();
            prop_assert!(hi > lo);
            prop_assert_eq!(hi, neg);
        }
    }
}
