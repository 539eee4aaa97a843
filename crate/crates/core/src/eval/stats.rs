//! Percentiles, reliability proportion and Welch's t-test.

use crate::error::{invalid, Error, Result};

/// Linear-interpolated percentile, `p ∈ [0, 100]`. `p = 100` is the maximum
/// and `p = 50` the median (mean of the two central values for even lengths).
pub fn percentile_score(scores: &[f64], p: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(invalid("percentile of an empty list"));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(invalid(format!("percentile {p} outside [0, 100]")));
    }
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("NaN score in percentile input".into()));
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        return Ok(v[lo]);
    }
    let frac = rank - lo as f64;
    Ok(v[lo] + frac * (v[hi] - v[lo]))
}

/// Fraction of scores strictly above `best` (the offline best, 1.0 in
/// normalized units).
pub fn proportion_above_best(scores: &[f64], best: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(invalid("proportion of an empty list"));
    }
    Ok(scores.iter().filter(|&&s| s > best).count() as f64 / scores.len() as f64)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Sample standard deviation over `√n`.
pub fn std_error(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub dof: f64,
    pub p: f64,
}

/// Two-sided Welch's unequal-variance t-test.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(invalid("welch test needs at least two values per sample"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = va + vb;
    if !(se2 > 0.0) {
        return Err(Error::Degenerate("both samples have zero variance".into()));
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let p = student_t_two_sided(t, dof);
    Ok(WelchResult { t, dof, p })
}

/// `P(|T| ≥ |t|)` for Student's t with `dof` degrees of freedom.
pub fn student_t_two_sided(t: f64, dof: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    regularized_incomplete_beta(dof / (dof + t * t), 0.5 * dof, 0.5).clamp(0.0, 1.0)
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The fraction converges fastest for x below the mean a/(a+b).
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
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
    for m in 1..=500 {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile_score(&[0.1, 0.9, 0.5], 100.0).unwrap(), 0.9);
        assert!((percentile_score(&[0.1, 0.9, 0.5, 0.3], 50.0).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(percentile_score(&[0.1, 0.9, 0.5], 50.0).unwrap(), 0.5);
        assert_eq!(percentile_score(&[0.1, 0.9, 0.5], 0.0).unwrap(), 0.1);
        assert!(percentile_score(&[], 50.0).is_err());
        assert!(percentile_score(&[1.0], 101.0).is_err());
    }

    #[test]
    fn proportion_examples() {
        assert_eq!(proportion_above_best(&[0.2, 1.0, 0.99], 1.0).unwrap(), 0.0);
        assert_eq!(proportion_above_best(&[1.2, 0.8, 1.1, 0.9], 1.0).unwrap(), 0.5);
    }

    #[test]
    fn welch_identical_samples() {
        let a = [1.0, 2.0, 4.0];
        let r = welch_t_test(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn welch_reference_case() {
        let r = welch_t_test(&[1., 2., 3., 4., 5.], &[2., 3., 4., 5., 6.]).unwrap();
        assert!((r.t + 1.0).abs() < 1e-12);
        assert!((r.dof - 8.0).abs() < 1e-12);
        assert!((r.p - 0.346_593_507_087_334_16).abs() < 1e-9, "{}", r.p);
    }

    #[test]
    fn welch_more_reference_cases() {
        // Frozen from scipy.stats.ttest_ind(equal_var=False).
        let a = [0.3, -1.2, 0.8, 1.5, -0.4, 0.1, -0.9, 0.6];
        let b: Vec<f64> = [-0.7, 0.2, 1.1, -1.3, 0.4, 0.9, -0.2, -0.5].iter().map(|x| x + 5.0).collect();
        let r = welch_t_test(&a, &b).unwrap();
        assert!((r.t + 11.358_411_073_284_179).abs() < 1e-10);
        assert!((r.dof - 13.873_208_393_689_985).abs() < 1e-10);
        assert!((r.p - 2.074_025_957_801_838_6e-8).abs() < 1e-13);
        assert!(r.p < 1e-3);

        let r = welch_t_test(&[0.61, 0.72, 0.55, 0.80, 0.66], &[0.52, 0.49, 0.70, 0.58, 0.45, 0.61]).unwrap();
        assert!((r.t - 1.925_623_651_315_980_3).abs() < 1e-10);
        assert!((r.dof - 8.395_496_632_035_428).abs() < 1e-10);
        assert!((r.p - 0.088_610_352_380_063_53).abs() < 1e-10);
    }

    #[test]
    fn welch_degenerate() {
        assert!(matches!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]), Err(Error::Degenerate(_))));
        assert!(welch_t_test(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn ln_gamma_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn incomplete_beta_symmetry() {
        for &(x, a, b) in &[(0.3, 2.0, 3.0), (0.9, 0.5, 4.0), (0.01, 10.0, 0.5)] {
            let l = regularized_incomplete_beta(x, a, b);
            let r = 1.0 - regularized_incomplete_beta(1.0 - x, b, a);
            assert!((l - r).abs() < 1e-12);
        }
        // I_x(1, 1) = x
        assert!((regularized_incomplete_beta(0.37, 1.0, 1.0) - 0.37).abs() < 1e-14);
    }
}
