//! Exponential integral `E1(x) = ∫_x^∞ e^{-t}/t dt`.

use super::ModelError;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_TERMS: usize = 500;

/// First exponential integral `E1(x)` for `x > 0`.
///
/// Power series below 1, modified Lentz continued fraction from 1 upward.
/// Relative error is at the level of a few ulps over `(0, 700]`; beyond
/// that `e^{-x}` underflows and the result is 0.
pub fn exp_integral_e1(x: f64) -> Result<f64, ModelError> {
    if !(x > 0.0) {
        return Err(ModelError::Domain {
            op: "exp_integral_e1",
            value: x,
            requirement: "x > 0",
        });
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(if x < 1.0 { series(x) } else { continued_fraction(x) })
}

/// `E1(x) = -γ - ln x - Σ_{k≥1} (-x)^k / (k·k!)`
fn series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0; // (-x)^k / k!
    for k in 1..MAX_TERMS {
        term *= -x / k as f64;
        let contrib = term / k as f64;
        sum += contrib;
        if contrib.abs() < sum.abs() * f64::EPSILON * 0.25 {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

/// `E1(x) = e^{-x} · 1/(x+1- 1/(x+3- 4/(x+5- ...)))`
fn continued_fraction(x: f64) -> f64 {
    let tiny = f64::MIN_POSITIVE / f64::EPSILON;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -((i * i) as f64);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() <= f64::EPSILON {
            break;
        }
    }
    h * (-x).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Reference values evaluated at 30 significant digits with mpmath.
    const REFERENCE: &[(f64, f64)] = &[
        (1e-6, 13.238_295_893_062_49),
        (0.01, 4.037_929_576_538_114),
        (0.5, 0.559_773_594_776_160_8),
        (0.999_999, 0.219_384_302_275_329_3),
        (1.0, 0.219_383_934_395_520_27),
        (1.000_001, 0.219_383_566_516_447),
        (2.0, 0.048_900_510_708_061_12),
        (5.0, 0.001_148_295_591_275_325_8),
        (10.0, 4.156_968_929_685_324e-6),
        (20.0, 9.835_525_290_649_882e-11),
        (50.0, 3.783_264_029_550_459e-24),
    ];

    #[test]
    fn matches_reference_values() {
        for &(x, want) in REFERENCE {
            let got = exp_integral_e1(x).unwrap();
            assert!(rel(got, want) < 1e-13, "E1({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn spot_values() {
        assert!((exp_integral_e1(1.0).unwrap() - 0.21938393439552).abs() < 1e-10);
        assert!(rel(exp_integral_e1(10.0).unwrap(), 4.15697e-6) < 1e-5);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(exp_integral_e1(0.0).is_err());
        assert!(exp_integral_e1(-1.0).is_err());
        assert!(exp_integral_e1(f64::NAN).is_err());
    }

    #[test]
    fn continuous_across_branch_switch() {
        let below = exp_integral_e1(1.0 - 1e-12).unwrap();
        let at = exp_integral_e1(1.0).unwrap();
        assert!(below > at);
        assert!(rel(below, at) < 1e-11);
    }

    #[test]
    fn tiny_and_huge_arguments() {
        let x: f64 = 1e-300;
        let want = -EULER_GAMMA - x.ln();
        assert!(rel(exp_integral_e1(x).unwrap(), want) < 1e-15);
        assert_eq!(exp_integral_e1(800.0).unwrap(), 0.0);
        assert_eq!(exp_integral_e1(f64::INFINITY).unwrap(), 0.0);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn strictly_decreasing(a in 1e-6f64..50.0, frac in 1e-6f64..1.0) {
                let b = a + frac * (50.0 - a) + 1e-9;
                prop_assert!(exp_integral_e1(a).unwrap() > exp_integral_e1(b).unwrap());
            }

            #[test]
            fn standard_bounds(x in 1e-6f64..50.0) {
                let e1 = exp_integral_e1(x).unwrap();
                let ex = (-x).exp();
                prop_assert!(ex / (x + 1.0) < e1);
                prop_assert!(e1 < ex / x);
            }
        }
    }
}
