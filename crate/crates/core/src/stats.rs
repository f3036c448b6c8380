//! Residual diagnostics, AR(1) theory and simulation, forecast metrics,
//! empirical critical values, and paired significance testing.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Lag-1 autocorrelation of residuals by regressing e_t on e_{t-1}:
/// `sum_{t=2..T} e_t e_{t-1} / sum_{t=1..T-1} e_t^2`.
///
/// The denominator runs over t = 1..T-1 exactly as the estimator is
/// defined, even though that is asymmetric with the numerator.
pub fn residual_autocorrelation(e: &[f64]) -> Result<f64> {
    if e.len() < 2 {
        return Err(Error::TooFewSamples {
            got: e.len(),
            needed: 2,
        });
    }
    let num: f64 = e.windows(2).map(|w| w[1] * w[0]).sum();
    let den: f64 = e[..e.len() - 1].iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::UndefinedStatistic(
            "all-zero residual prefix (zero denominator)".into(),
        ));
    }
    Ok(num / den)
}

/// Per-series lag-1 autocorrelation averaged over the series for which it
/// is defined. `residuals` is T x N.
pub fn mean_residual_autocorrelation(residuals: &Tensor) -> Result<f64> {
    let mut vals = Vec::new();
    for c in 0..residuals.cols() {
        let col: Vec<f64> = (0..residuals.rows()).map(|r| residuals.get(r, c)).collect();
        if let Ok(v) = residual_autocorrelation(&col) {
            vals.push(v);
        }
    }
    if vals.is_empty() {
        return Err(Error::UndefinedStatistic(
            "autocorrelation undefined for every series".into(),
        ));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Durbin-Watson statistic `sum (e_t - e_{t-1})^2 / sum e_t^2`, in [0, 4].
pub fn durbin_watson(e: &[f64]) -> Result<f64> {
    if e.len() < 2 {
        return Err(Error::TooFewSamples {
            got: e.len(),
            needed: 2,
        });
    }
    let den: f64 = e.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::UndefinedStatistic("zero-energy series".into()));
    }
    let num: f64 = e.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(num / den)
}

/// Stationary AR(1) covariance `Cov(e_t, e_{t-delta}) = rho^delta sigma^2 / (1 - rho^2)`.
pub fn ar1_covariance(rho: f64, sigma: f64, delta: u32) -> Result<f64> {
    if rho.abs() >= 1.0 {
        return Err(Error::RhoOutOfRange(rho));
    }
    Ok(rho.powi(delta as i32) * sigma * sigma / (1.0 - rho * rho))
}

/// Simulates `e_t = rho e_{t-1} + eps_t` with the stationary initial draw
/// `e_0 ~ N(0, sigma^2 / (1 - rho^2))` (no burn-in).
pub fn simulate_ar1(rho: f64, sigma: f64, len: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if rho.abs() >= 1.0 {
        return Err(Error::RhoOutOfRange(rho));
    }
    if sigma == 0.0 {
        return Ok(vec![0.0; len]);
    }
    let innov = Normal::new(0.0, sigma).expect("positive sigma");
    let stationary_sd = sigma / (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(len);
    let mut prev = stationary_sd * Normal::new(0.0, 1.0).unwrap().sample(rng);
    for _ in 0..len {
        out.push(prev);
        prev = rho * prev + innov.sample(rng);
    }
    Ok(out)
}

/// Root relative mean squared error: forecast RMSE over the RMSE of the
/// evaluation-set mean predictor. Both inputs are T x N.
pub fn rrmse(actual: &Tensor, forecast: &Tensor) -> Result<f64> {
    if actual.rows() != forecast.rows() || actual.cols() != forecast.cols() {
        return Err(Error::ShapeMismatch(format!(
            "rrmse {}x{} vs {}x{}",
            actual.rows(),
            actual.cols(),
            forecast.rows(),
            forecast.cols()
        )));
    }
    let n = actual.cols();
    let t = actual.rows() as f64;
    let mut mean = vec![0.0; n];
    for r in 0..actual.rows() {
        for (m, v) in mean.iter_mut().zip(actual.row_slice(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t);
    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..actual.rows() {
        for c in 0..n {
            num += (actual.get(r, c) - forecast.get(r, c)).powi(2);
            den += (actual.get(r, c) - mean[c]).powi(2);
        }
    }
    if den == 0.0 {
        return Err(Error::UndefinedStatistic(
            "constant actuals (zero RRMSE denominator)".into(),
        ));
    }
    Ok((num / den).sqrt())
}

/// `(1/D) sum (RRMSE_wo - RRMSE_w) / RRMSE_wo * 100%`.
pub fn avg_relative_improvement(rrmse_wo: &[f64], rrmse_w: &[f64]) -> Result<f64> {
    if rrmse_wo.len() != rrmse_w.len() {
        return Err(Error::LengthMismatch {
            left: rrmse_wo.len(),
            right: rrmse_w.len(),
        });
    }
    if rrmse_wo.is_empty() {
        return Err(Error::EmptyInput("no RRMSE entries".into()));
    }
    let mut acc = 0.0;
    for (wo, w) in rrmse_wo.iter().zip(rrmse_w) {
        if *wo <= 0.0 {
            return Err(Error::NonPositiveBaseline(*wo));
        }
        acc += (wo - w) / wo;
    }
    Ok(acc / rrmse_wo.len() as f64 * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalValueSource {
    PaperDefault,
    Recomputed,
}

/// Right-tail thresholds of remaining autocorrelation, keyed by tail
/// probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalValueTable {
    /// (tail probability, threshold), ordered by decreasing tail.
    pub entries: Vec<(f64, f64)>,
    pub sample_count: usize,
    pub source: CriticalValueSource,
}

impl CriticalValueTable {
    /// Published thresholds for the unadjusted method:
    /// 10% -> 0.857, 5% -> 0.928, 1% -> 0.984.
    pub fn paper_default() -> Self {
        CriticalValueTable {
            entries: vec![(0.10, 0.857), (0.05, 0.928), (0.01, 0.984)],
            sample_count: 0,
            source: CriticalValueSource::PaperDefault,
        }
    }

    pub fn threshold(&self, tail: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|(t, _)| (*t - tail).abs() < 1e-12)
            .map(|(_, v)| *v)
    }
}

/// Right-tail empirical quantile: position `(1 - tail) * n` over the sorted
/// sample (0-based), linearly interpolated and clamped to the data range.
pub fn right_tail_threshold(sorted: &[f64], tail: f64) -> f64 {
    let n = sorted.len();
    let h = (1.0 - tail) * n as f64;
    if h <= 0.0 {
        return sorted[0];
    }
    let lo = h.floor() as usize;
    if lo >= n - 1 {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Empirical critical values from remaining-autocorrelation samples.
pub fn empirical_critical_values(samples: &[f64], tails: &[f64]) -> Result<CriticalValueTable> {
    if samples.len() < 20 {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            needed: 20,
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let entries = tails
        .iter()
        .map(|&t| (t, right_tail_threshold(&sorted, t)))
        .collect();
    Ok(CriticalValueTable {
        entries,
        sample_count: samples.len(),
        source: CriticalValueSource::Recomputed,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairedTTest {
    pub t_statistic: f64,
    pub p_value: f64,
    pub significant_at_5pct: bool,
}

/// Standard paired t-test on the differences, two-sided p-value.
///
/// All-zero differences (a == b) report t = 0, p = 1 rather than an error;
/// a nonzero constant difference has zero variance and is rejected.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, needed: 2 });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        if mean == 0.0 {
            return Ok(PairedTTest {
                t_statistic: 0.0,
                p_value: 1.0,
                significant_at_5pct: false,
            });
        }
        return Err(Error::DegenerateVariance);
    }
    let t = mean / (var / n as f64).sqrt();
    let p = 2.0 * (1.0 - student_t_cdf(t.abs(), (n - 1) as f64));
    Ok(PairedTTest {
        t_statistic: t,
        p_value: p,
        significant_at_5pct: p < 0.05,
    })
}

/// Student-t CDF via the regularized incomplete beta function.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    let x = dof / (dof + t * t);
    let ib = 0.5 * incomplete_beta_reg(0.5 * dof, 0.5, x);
    if t >= 0.0 {
        1.0 - ib
    } else {
        ib
    }
}

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction,
/// iterated to ~1e-12 relative accuracy.
fn incomplete_beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // use the symmetry that keeps the continued fraction convergent
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - incomplete_beta_reg(b, a, 1.0 - x)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-14;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation, g = 7.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn autocorrelation_forced_cases() {
        assert_eq!(residual_autocorrelation(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(
            residual_autocorrelation(&[1.0, -1.0, 1.0, -1.0]).unwrap(),
            -1.0
        );
        let e = [0.5, 0.25, 0.125, 0.0625];
        assert!((residual_autocorrelation(&e).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn autocorrelation_zero_prefix_is_undefined() {
        let err = residual_autocorrelation(&[0.0, 0.0, 1.0]);
        assert!(matches!(err, Err(Error::UndefinedStatistic(_))));
    }

    #[test]
    fn mean_autocorrelation_matches_per_column_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = 50;
        let n = 7;
        let data: Vec<f64> = (0..t * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = Tensor::new(t, n, data);
        // brute-force oracle: explicit column loop
        let mut acc = 0.0;
        for c in 0..n {
            let col: Vec<f64> = (0..t).map(|r| m.get(r, c)).collect();
            acc += residual_autocorrelation(&col).unwrap();
        }
        let oracle = acc / n as f64;
        assert!((mean_residual_autocorrelation(&m).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn mean_autocorrelation_symmetry_and_identity() {
        // N identical series equal the single-series value
        let e = [0.4, 0.1, -0.3, 0.2, 0.05];
        let single = residual_autocorrelation(&e).unwrap();
        let data: Vec<f64> = e.iter().flat_map(|v| [*v, *v]).collect();
        let m = Tensor::new(5, 2, data);
        assert!((mean_residual_autocorrelation(&m).unwrap() - single).abs() < 1e-15);
        // sign flips cancel in both numerator and denominator
        let flipped: Vec<f64> = e.iter().map(|v| -v).collect();
        assert!(
            (residual_autocorrelation(&flipped).unwrap() - single).abs() < 1e-15
        );
    }

    #[test]
    fn durbin_watson_forced_cases() {
        assert_eq!(durbin_watson(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(durbin_watson(&[1.0, -1.0, 1.0, -1.0]).unwrap(), 3.0);
        assert!(matches!(
            durbin_watson(&[0.0, 0.0]),
            Err(Error::UndefinedStatistic(_))
        ));
    }

    #[test]
    fn ar1_covariance_closed_form() {
        assert_eq!(ar1_covariance(0.0, 1.0, 0).unwrap(), 1.0);
        assert!((ar1_covariance(0.5, 1.0, 0).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!((ar1_covariance(0.5, 1.0, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(ar1_covariance(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn simulate_zero_sigma_is_all_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = simulate_ar1(0.7, 0.0, 100, &mut rng).unwrap();
        assert!(e.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn simulate_rejects_nonstationary_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(simulate_ar1(1.0, 1.0, 10, &mut rng).is_err());
    }

    #[test]
    fn rrmse_forced_cases() {
        let actual = Tensor::new(3, 1, vec![1.0, 2.0, 3.0]);
        assert_eq!(rrmse(&actual, &actual).unwrap(), 0.0);
        let mean_forecast = Tensor::new(3, 1, vec![2.0, 2.0, 2.0]);
        assert!((rrmse(&actual, &mean_forecast).unwrap() - 1.0).abs() < 1e-15);
        let forecast = Tensor::new(3, 1, vec![1.0, 2.0, 4.0]);
        let v = rrmse(&actual, &forecast).unwrap();
        assert!((v - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);
        let constant = Tensor::new(3, 1, vec![5.0, 5.0, 5.0]);
        assert!(rrmse(&constant, &forecast).is_err());
    }

    #[test]
    fn rrmse_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
        let f: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
        let base = rrmse(&Tensor::new(10, 2, a.clone()), &Tensor::new(10, 2, f.clone())).unwrap();
        for c in [2.0, -0.5, 1e6] {
            let ca: Vec<f64> = a.iter().map(|v| c * v).collect();
            let cf: Vec<f64> = f.iter().map(|v| c * v).collect();
            let scaled = rrmse(&Tensor::new(10, 2, ca), &Tensor::new(10, 2, cf)).unwrap();
            assert!((scaled - base).abs() < 1e-12, "c={c}");
        }
    }

    #[test]
    fn improvement_forced_cases() {
        assert_eq!(
            avg_relative_improvement(&[0.3, 0.4], &[0.3, 0.4]).unwrap(),
            0.0
        );
        assert!(
            (avg_relative_improvement(&[0.2, 0.4], &[0.1, 0.3]).unwrap() - 37.5).abs() < 1e-12
        );
        assert!(avg_relative_improvement(&[0.2], &[0.1, 0.2]).is_err());
        assert!(avg_relative_improvement(&[0.0], &[0.1]).is_err());
    }

    #[test]
    fn uniform_grid_threshold() {
        let samples: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let table = empirical_critical_values(&samples, &[0.10, 0.05, 0.01]).unwrap();
        assert!((table.threshold(0.10).unwrap() - 0.90).abs() < 1e-12);
        assert!((table.threshold(0.05).unwrap() - 0.95).abs() < 1e-12);
        assert!((table.threshold(0.01).unwrap() - 0.99).abs() < 1e-12);
    }

    #[test]
    fn thresholds_monotone_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut samples: Vec<f64> = (0..321).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t1 = empirical_critical_values(&samples, &[0.10, 0.05, 0.01]).unwrap();
        assert!(t1.entries[0].1 <= t1.entries[1].1);
        assert!(t1.entries[1].1 <= t1.entries[2].1);
        samples.reverse();
        samples.swap(0, 100);
        let t2 = empirical_critical_values(&samples, &[0.10, 0.05, 0.01]).unwrap();
        assert_eq!(t1.entries, t2.entries);
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(matches!(
            empirical_critical_values(&[0.1; 19], &[0.05]),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn paper_default_table_is_exact() {
        let t = CriticalValueTable::paper_default();
        assert_eq!(t.threshold(0.10), Some(0.857));
        assert_eq!(t.threshold(0.05), Some(0.928));
        assert_eq!(t.threshold(0.01), Some(0.984));
    }

    #[test]
    fn t_cdf_reference_values() {
        // classic table values
        assert!((student_t_cdf(0.0, 10.0) - 0.5).abs() < 1e-12);
        assert!((student_t_cdf(1.812, 10.0) - 0.95).abs() < 1e-3);
        assert!((student_t_cdf(2.228, 10.0) - 0.975).abs() < 1e-3);
        assert!((student_t_cdf(-2.228, 10.0) - 0.025).abs() < 1e-3);
        assert!((student_t_cdf(1.96, 1e7) - 0.975).abs() < 1e-4);
    }

    #[test]
    fn identical_inputs_report_not_significant() {
        let a = [1.0, 2.0, 3.0];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!(r.t_statistic, 0.0);
        assert!(!r.significant_at_5pct);
    }

    #[test]
    fn constant_nonzero_differences_are_degenerate() {
        let a = [2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(matches!(
            paired_t_test(&a, &b),
            Err(Error::DegenerateVariance)
        ));
    }

    #[test]
    fn p_value_agrees_with_permutation_oracle() {
        // sign-flip permutation test as an independent oracle
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for case in 0..3 {
            let n = 18;
            let shift = 0.3 * case as f64;
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) + shift).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let test = paired_t_test(&a, &b).unwrap();

            let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let obs = diffs.iter().sum::<f64>().abs();
            let mut hits = 0u64;
            let reps = 200_000;
            for _ in 0..reps {
                let s: f64 = diffs
                    .iter()
                    .map(|d| if rng.random::<bool>() { *d } else { -*d })
                    .sum();
                if s.abs() >= obs {
                    hits += 1;
                }
            }
            let p_perm = hits as f64 / reps as f64;
            assert!(
                (test.p_value - p_perm).abs() < 0.01,
                "case {case}: t-test p {} vs permutation p {}",
                test.p_value,
                p_perm
            );
        }
    }
}
