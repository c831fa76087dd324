//! Stable special-function evaluations for the probit likelihood.

use statrs::function::erf::erfc;

const SQRT_PI: f64 = 1.772_453_850_905_516;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Scaled complementary error function `erfcx(s) = exp(s^2) erfc(s)`.
///
/// For moderate arguments this goes through `erfc` in log space; beyond the
/// underflow range of `erfc` it switches to the asymptotic series
/// `1/(s sqrt(pi)) (1 - 1/(2 s^2) + 3/(4 s^4) - ...)`.
pub fn erfcx(s: f64) -> f64 {
    if s < 0.0 {
        // erfcx(-s) = 2 exp(s^2) - erfcx(s); only needed for small |s| here.
        return 2.0 * (s * s).exp() - erfcx(-s);
    }
    if s <= 25.0 {
        let e = erfc(s);
        if e > 0.0 {
            return (s * s + e.ln()).exp();
        }
    }
    let inv2 = 1.0 / (2.0 * s * s);
    let series = 1.0 + inv2 * (-1.0 + inv2 * (3.0 - 15.0 * inv2 * (1.0 - 7.0 * inv2)));
    series / (s * SQRT_PI)
}

/// Log of the standard normal CDF, stable for very negative arguments.
pub fn log_ndtr(z: f64) -> f64 {
    if z >= -1.0 {
        // Phi(z) = erfc(-z / sqrt(2)) / 2 is not small here.
        (0.5 * erfc(-z / std::f64::consts::SQRT_2)).ln()
    } else {
        let s = -z / std::f64::consts::SQRT_2;
        -s * s + (0.5 * erfcx(s)).ln()
    }
}

/// Inverse Mills ratio `phi(z) / Phi(z)` for the standard normal, stable for
/// all arguments.
pub fn mills_ratio_inv(z: f64) -> f64 {
    if z >= 0.0 {
        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let cdf = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
        pdf / cdf
    } else {
        let s = -z / std::f64::consts::SQRT_2;
        (2.0 / std::f64::consts::PI).sqrt() / erfcx(s)
    }
}

/// `log H(w; gamma)` where `H(w; gamma) = integral_{-inf}^w exp(-t^2 / (2 gamma^2)) dt`.
///
/// Equals `log(gamma) + log sqrt(2 pi) + log Phi(w / gamma)`.
pub fn log_probit_integral(w: f64, gamma: f64) -> f64 {
    gamma.ln() + LN_SQRT_2PI + log_ndtr(w / gamma)
}

/// Ratio `H'(w; gamma) / H(w; gamma) = exp(-w^2/(2 gamma^2)) / H(w; gamma)`.
pub fn probit_integral_ratio(w: f64, gamma: f64) -> f64 {
    mills_ratio_inv(w / gamma) / gamma
}

/// Numerically stable `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
