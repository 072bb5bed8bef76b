//! Special functions used across the crate. Gamma, beta and error-function
//! kernels come from `statrs`; the inverses we need with tail accuracy are
//! solved here.

use statrs::function::{beta, erf, gamma};

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    gamma::ln_gamma(a) + gamma::ln_gamma(b) - gamma::ln_gamma(a + b)
}

/// `log(exp(x) + exp(y))` without overflow.
pub fn log_add_exp(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let m = x.max(y);
    m + ((x - m).exp() + (y - m).exp()).ln()
}

/// `log(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp()
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn beta_cdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta::beta_reg(a, b, x)
    }
}

/// Beta cdf evaluated from the pair `(x, 1 - x)`, using whichever tail keeps
/// full relative precision.
pub fn beta_cdf_pair(x: f64, xc: f64, a: f64, b: f64) -> f64 {
    if x <= 0.5 {
        beta_cdf(x, a, b)
    } else {
        1.0 - beta_cdf(xc, b, a)
    }
}

pub fn ln_beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
}

/// Solves `I_x(a, b) = q` for `q <= 1/2` working in `t = log x`.
fn beta_lower_quantile(q: f64, a: f64, b: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let lnb = ln_beta(a, b);
    let lnq = q.ln();
    // small-x expansion I_x ~ x^a / (a B(a,b))
    let mut t = ((lnq + a.ln() + lnb) / a).min(-1e-3);
    let (mut lo, mut hi) = (-745.0_f64, 0.0_f64);
    for _ in 0..200 {
        let x = t.exp();
        let cdf = beta_cdf(x, a, b);
        if cdf <= 0.0 {
            lo = t;
            t = 0.5 * (lo + hi);
            continue;
        }
        let g = cdf.ln() - lnq;
        if g > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        // d/dt log I = x f(x) / I
        let lnpdf = (a - 1.0) * t + (b - 1.0) * (-x).ln_1p() - lnb;
        let slope = (lnpdf + t - cdf.ln()).exp();
        let mut next = t - g / slope;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * t.abs().max(1.0) || hi - lo <= 1e-15 * t.abs().max(1.0) {
            return next.exp();
        }
        t = next;
    }
    t.exp()
}

/// Beta quantile returned as the pair `(x, 1 - x)`, each to full relative
/// precision in its own tail.
pub fn beta_quantile_pair(q: f64, a: f64, b: f64) -> (f64, f64) {
    if q <= 0.0 {
        return (0.0, 1.0);
    }
    if q >= 1.0 {
        return (1.0, 0.0);
    }
    if q <= 0.5 {
        let x = beta_lower_quantile(q, a, b);
        (x, 1.0 - x)
    } else {
        let y = beta_lower_quantile(1.0 - q, b, a);
        (1.0 - y, y)
    }
}

pub fn beta_quantile(q: f64, a: f64, b: f64) -> f64 {
    beta_quantile_pair(q, a, b).0
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let z = -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p);
    // one Halley step against the cdf, on the side where it is not cancelled
    let e = if z <= 0.0 { normal_cdf(z) - p } else { (1.0 - p) - normal_cdf(-z) };
    let u = e / normal_pdf(z);
    z - u / (1.0 + 0.5 * z * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_quantile_round_trip() {
        for &(a, b) in &[(0.5, 0.5), (1.0, 4.0), (4.0, 1.0), (8.2, 0.65), (0.2, 7.0)] {
            for &q in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.7, 0.99, 1.0 - 1e-9] {
                let (x, xc) = beta_quantile_pair(q, a, b);
                let back = beta_cdf_pair(x, xc, a, b);
                assert!((back - q).abs() <= 1e-10 * q.max(1e-3), "a={a} b={b} q={q} back={back}");
            }
        }
    }

    #[test]
    fn uniform_quantile_is_identity() {
        for &q in &[0.1, 0.25, 0.5, 0.9] {
            assert!((beta_quantile(q, 1.0, 1.0) - q).abs() < 1e-13);
        }
    }

    #[test]
    fn normal_quantile_matches_cdf() {
        for &p in &[1e-10, 0.001, 0.2, 0.5, 0.8, 0.999] {
            let z = normal_quantile(p);
            assert!((normal_cdf(z) - p).abs() <= 1e-11 * p + 1e-15, "p={p}");
        }
        assert_eq!(normal_quantile(0.5), 0.0);
    }

    #[test]
    fn log_add_exp_handles_infinities() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
