//! Gamma function.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
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

/// Γ(x) by the Lanczos approximation (g = 7, nine terms), with the
/// reflection formula below 1/2. Poles at non-positive integers return NaN.
pub fn gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return f64::NAN;
    }
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integers_are_factorials() {
        let mut fact = 1.0;
        for n in 1..20 {
            let g = gamma(n as f64);
            assert!((g - fact).abs() <= 1e-13 * fact, "n={n}: {g} vs {fact}");
            fact *= n as f64;
        }
    }

    #[test]
    fn half_integer() {
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
        assert!((gamma(1.5) - 0.5 * PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn matches_statrs_reference() {
        for i in 1..400 {
            let x = 0.013 * i as f64 + 0.001;
            let ours = gamma(x);
            let theirs = statrs::function::gamma::gamma(x);
            assert!(
                ((ours - theirs) / theirs).abs() < 1e-12,
                "x={x}: {ours} vs {theirs}"
            );
        }
    }

    #[test]
    fn negative_poles_and_reflection() {
        assert!(gamma(0.0).is_nan());
        assert!(gamma(-2.0).is_nan());
        // Γ(-0.5) = -2√π
        assert!((gamma(-0.5) + 2.0 * PI.sqrt()).abs() < 1e-13);
    }
}
