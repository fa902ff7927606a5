//! Small statistics helpers: sample moments and the chi-square tail.

const EPS: f64 = 1e-15;
const MAX_TERMS: usize = 10_000;

/// Sample mean and unbiased sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, libm::sqrt(ss / (n - 1) as f64))
}

/// Regularised upper incomplete gamma `Q(a, x) = Gamma(a, x) / Gamma(a)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_TERMS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * libm::exp(-x + a * libm::log(x) - libm::lgamma(a))
}

// Modified Lentz evaluation.
fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    libm::exp(-x + a * libm::log(x) - libm::lgamma(a)) * h
}

/// Probability that a chi-square variable with `dof` degrees of freedom
/// exceeds `chi2`. Zero degrees of freedom give 1.
pub fn chi2_sf(chi2: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    gamma_q(dof as f64 / 2.0, chi2 / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn chi2_tail_matches_statrs() {
        for dof in [1usize, 2, 3, 5, 8, 20, 97, 400] {
            let dist = ChiSquared::new(dof as f64).unwrap();
            for frac in [0.01, 0.2, 0.7, 1.0, 1.3, 2.0, 4.0] {
                let x = frac * dof as f64;
                let ours = chi2_sf(x, dof);
                let theirs = dist.sf(x);
                assert!(
                    (ours - theirs).abs() <= 1e-10 + 1e-8 * theirs,
                    "dof {dof} x {x}: {ours} vs {theirs}"
                );
            }
        }
    }

    #[test]
    fn chi2_tail_limits() {
        assert_eq!(chi2_sf(0.0, 4), 1.0);
        assert_eq!(chi2_sf(3.0, 0), 1.0);
        assert!(chi2_sf(1e4, 3) < 1e-300 || chi2_sf(1e4, 3) == 0.0);
        // Two degrees of freedom: exp(-x/2).
        assert!((chi2_sf(3.0, 2) - (-1.5f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn moments() {
        let (m, s) = mean_std(&[100.0, 100.0, 100.0]);
        assert_eq!((m, s), (100.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(mean_std(&[1.0]).1.is_nan());
    }
}
