//! The stable-1/2 bridge pinned at a fixed terminal value.
//!
//! Closed forms are written in *increment form*: a bridge that has elapsed
//! `a` time units out of `a + b`, with increment `u` so far and `v` still to
//! come (terminal increment `u + v`). Conditional versions (start at
//! `(s, x)`, pinned at `(T, z)`) are the same functions with
//! `a = t - s`, `b = T - t`, `u = y - x`, `v = z - y`; passing `v` directly
//! keeps it exact when `y` is close to `z`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::specfun::{log_scaled_normal_cdf, std_normal_cdf};
use crate::stable::BridgeParams;

/// The two normal arguments shared by `F` and `M`:
/// `x1 = c(bu - av)/sqrt(u v w)`, `x2 = -c(bu + av)/sqrt(u v w)`, `w = u + v`.
fn arguments(c: f64, a: f64, b: f64, u: f64, v: f64) -> (f64, f64) {
    let root = (u * v * (u + v)).sqrt();
    (c * (b * u - a * v) / root, -c * (b * u + a * v) / root)
}

/// `exp(-x1^2/2) * R(x2)` with `R(x) = exp(x^2/2) Phi(x)`; this is the
/// product `exp(2c^2 ab/((a+b)w)) Phi(x2)` after the exponents are merged.
fn second_term(x1: f64, x2: f64) -> f64 {
    (-0.5 * x1 * x1 + log_scaled_normal_cdf(x2)).exp()
}

/// `ln` of the bridge kernel `f_a(u) f_b(v) / f_{a+b}(u + v)`.
pub fn inc_log_density(c: f64, a: f64, b: f64, u: f64, v: f64) -> f64 {
    if u <= 0.0 || v <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let w = u + v;
    let d = b * u - a * v;
    (c * a * b / (a + b)).ln() - 0.5 * (2.0 * PI).ln() + 1.5 * (w.ln() - u.ln() - v.ln())
        - 0.5 * c * c * d * d / (u * v * w)
}

/// Bridge distribution function in increment form.
pub fn inc_cdf(c: f64, a: f64, b: f64, u: f64, v: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if v <= 0.0 {
        return 1.0;
    }
    let (x1, x2) = arguments(c, a, b, u, v);
    let coef = (b - a) / (a + b);
    let f = if x1 < 0.0 {
        // both terms carry exp(-x1^2/2); factor it out
        (-0.5 * x1 * x1).exp() * (log_scaled_normal_cdf(x1).exp() + coef * log_scaled_normal_cdf(x2).exp())
    } else {
        std_normal_cdf(x1) + coef * second_term(x1, x2)
    };
    f.clamp(0.0, 1.0)
}

/// Incomplete first moment `int_0^u u' k(u') du'` in increment form.
pub fn inc_first_moment(c: f64, a: f64, b: f64, u: f64, v: f64) -> f64 {
    let w = u + v.max(0.0);
    let total = a / (a + b) * w;
    if u <= 0.0 {
        return 0.0;
    }
    if v <= 0.0 {
        return total;
    }
    let (x1, x2) = arguments(c, a, b, u, v);
    let bracket = if x1 < 0.0 {
        // R is increasing and x1 > x2, so the difference is positive
        (-0.5 * x1 * x1).exp() * (log_scaled_normal_cdf(x1).exp() - log_scaled_normal_cdf(x2).exp())
    } else {
        std_normal_cdf(x1) - second_term(x1, x2)
    };
    (total * bracket).clamp(0.0, total)
}

/// Second moment of the increment over `a` of a bridge that must rise by
/// `w` over `a + b`:
/// `a/(a+b) w^2 {1 - c b sqrt(2 pi / w) R(-c(a+b)/sqrt w)}`.
pub fn inc_second_moment(c: f64, a: f64, b: f64, w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let x = -c * (a + b) / w.sqrt();
    let corr = c * b * (2.0 * PI / w).sqrt() * log_scaled_normal_cdf(x).exp();
    a / (a + b) * w * w * (1.0 - corr)
}

fn check_time(params: &BridgeParams, t: f64) -> Result<()> {
    if !(t > 0.0 && t < params.horizon) {
        return Err(Error::domain(format!("bridge time must lie in (0, T), got t = {t}")));
    }
    Ok(())
}

fn check_terminal(z: f64) -> Result<()> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::domain(format!("terminal value must be positive, got z = {z}")));
    }
    Ok(())
}

fn check_level(y: f64, z: f64) -> Result<()> {
    if !(0.0..=z).contains(&y) {
        return Err(Error::domain(format!("bridge level must lie in [0, z], got y = {y}, z = {z}")));
    }
    Ok(())
}

/// Density of the bridge at time `t` started at zero and pinned at `z`.
pub fn bridge_density(params: &BridgeParams, t: f64, y: f64, z: f64) -> Result<f64> {
    check_time(params, t)?;
    check_terminal(z)?;
    if y <= 0.0 || y > z {
        return Ok(0.0);
    }
    Ok(inc_log_density(params.c, t, params.horizon - t, y, z - y).exp())
}

/// `F_tT(y; z)`.
pub fn bridge_cdf(params: &BridgeParams, t: f64, y: f64, z: f64) -> Result<f64> {
    check_time(params, t)?;
    check_terminal(z)?;
    check_level(y, z)?;
    Ok(inc_cdf(params.c, t, params.horizon - t, y, z - y))
}

/// `M_tT(y; z) = int_0^y u f_tT(u; z) du`.
pub fn bridge_incomplete_first_moment(params: &BridgeParams, t: f64, y: f64, z: f64) -> Result<f64> {
    check_time(params, t)?;
    check_terminal(z)?;
    check_level(y, z)?;
    Ok(inc_first_moment(params.c, t, params.horizon - t, y, z - y))
}

fn check_ordering(params: &BridgeParams, s: f64, t: f64, x: f64, z: f64) -> Result<()> {
    if !(0.0 <= s && s < t && t < params.horizon) {
        return Err(Error::domain(format!("need 0 <= s < t < T, got s = {s}, t = {t}")));
    }
    check_terminal(z)?;
    if !(0.0 <= x && x <= z) {
        return Err(Error::domain(format!("need 0 <= x <= z, got x = {x}, z = {z}")));
    }
    Ok(())
}

/// `E[S_t | S_s = x, S_T = z] = ((T - t)x + (t - s)z)/(T - s)`.
pub fn bridge_conditional_mean(params: &BridgeParams, s: f64, t: f64, x: f64, z: f64) -> Result<f64> {
    check_ordering(params, s, t, x, z)?;
    let big_t = params.horizon;
    Ok(((big_t - t) * x + (t - s) * z) / (big_t - s))
}

/// The closed-form conditional second moment
/// `(t-s)/(T-s) (z-x)^2 {1 - c(T-t) sqrt(2 pi/(z-x)) e^{c^2(T-s)^2/(2(z-x))} Phi(-c(T-s)/sqrt(z-x))}`.
///
/// The right side is written in the increment `z - x`, and it is the second
/// moment of `S_t - x`, not of `S_t`; the two agree when `x = 0`. The level
/// moment is [`bridge_conditional_level_second_moment`].
pub fn bridge_conditional_second_moment(params: &BridgeParams, s: f64, t: f64, x: f64, z: f64) -> Result<f64> {
    check_ordering(params, s, t, x, z)?;
    Ok(inc_second_moment(params.c, t - s, params.horizon - t, z - x))
}

/// `E[S_t^2 | S_s = x, S_T = z]`.
pub fn bridge_conditional_level_second_moment(params: &BridgeParams, s: f64, t: f64, x: f64, z: f64) -> Result<f64> {
    check_ordering(params, s, t, x, z)?;
    let (a, b) = (t - s, params.horizon - t);
    let inc_mean = a / (a + b) * (z - x);
    Ok(x * x + 2.0 * x * inc_mean + inc_second_moment(params.c, a, b, z - x))
}

/// Fraction of the remaining rise `w` taken by the midpoint of an interval of
/// length `dt`: `(1 + Z / sqrt(c^2 dt^2 / w + Z^2)) / 2` for a normal draw `Z`.
pub fn midpoint_fraction(c: f64, dt: f64, w: f64, z_draw: f64) -> f64 {
    let a = c * c * dt * dt / w;
    let r = (a + z_draw * z_draw).sqrt();
    if z_draw >= 0.0 {
        0.5 * (1.0 + z_draw / r)
    } else {
        // 1 - |Z|/r without cancellation
        0.5 * a / (r * (r - z_draw))
    }
}

/// Draw of the bridge at `(s + t)/2` given its values `y` at `s` and `z_val` at `t`.
pub fn bridge_midpoint_sample<R: Rng + ?Sized>(
    params: &BridgeParams,
    s: f64,
    t: f64,
    y: f64,
    z_val: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(s < t) {
        return Err(Error::domain(format!("need s < t, got s = {s}, t = {t}")));
    }
    if y > z_val {
        return Err(Error::domain(format!("bridge endpoints decrease: {y} > {z_val}")));
    }
    if z_val == y {
        return Ok(y);
    }
    let z: f64 = rng.sample(StandardNormal);
    let w = z_val - y;
    Ok((y + w * midpoint_fraction(params.c, t - s, w, z)).min(z_val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate_real;
    use crate::stable::subordinator_density;
    use proptest::prelude::*;

    fn p1() -> BridgeParams {
        BridgeParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn density_support_and_normalisation() {
        let p = p1();
        assert_eq!(bridge_density(&p, 0.3, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(bridge_density(&p, 0.3, 2.5, 2.0).unwrap(), 0.0);
        let total = integrate_real(|y| bridge_density(&p, 0.3, y, 2.0).unwrap(), 0.0, Some(2.0), 1.0).unwrap();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(bridge_density(&p, 0.0, 0.5, 2.0).is_err());
        assert!(bridge_density(&p, 0.3, 0.5, 0.0).is_err());
    }

    #[test]
    fn density_matches_subordinator_ratio() {
        let p = p1();
        let want = subordinator_density(&p, 0.5, 0.5) * subordinator_density(&p, 0.5, 0.5) / subordinator_density(&p, 1.0, 1.0);
        let got = bridge_density(&p, 0.5, 0.5, 1.0).unwrap();
        assert!((got / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_closed_form_values() {
        let p = p1();
        assert!((bridge_cdf(&p, 0.5, 0.5, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(bridge_cdf(&p, 0.3, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(bridge_cdf(&p, 0.3, 2.0, 2.0).unwrap(), 1.0);
        assert!(bridge_cdf(&p, 0.3, 1e-12, 2.0).unwrap() < 1e-12);
        assert!(bridge_cdf(&p, 0.3, 2.0 - 1e-12, 2.0).unwrap() > 1.0 - 1e-9);
        let q = integrate_real(|y| bridge_density(&p, 0.3, y, 2.0).unwrap(), 0.0, Some(0.4), 1.0).unwrap();
        assert!((bridge_cdf(&p, 0.3, 0.4, 2.0).unwrap() - q).abs() < 1e-8);
        assert!(bridge_cdf(&p, 0.3, 2.1, 2.0).is_err());
    }

    #[test]
    fn first_moment_values() {
        let p = p1();
        assert!((bridge_incomplete_first_moment(&p, 0.3, 2.0, 2.0).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(bridge_incomplete_first_moment(&p, 0.3, 0.0, 2.0).unwrap(), 0.0);
        let q = integrate_real(|y| y * bridge_density(&p, 0.3, y, 2.0).unwrap(), 0.0, Some(0.4), 1.0).unwrap();
        assert!((bridge_incomplete_first_moment(&p, 0.3, 0.4, 2.0).unwrap() - q).abs() < 1e-8);
    }

    #[test]
    fn conditional_mean_values() {
        let p = p1();
        assert!((bridge_conditional_mean(&p, 0.2, 0.6, 0.5, 2.0).unwrap() - 1.25).abs() < 1e-15);
        assert!((bridge_conditional_mean(&p, 0.0, 0.4, 0.0, 2.0).unwrap() - 0.8).abs() < 1e-15);
        assert!((bridge_conditional_mean(&p, 0.2, 1.0 - 1e-12, 0.5, 2.0).unwrap() - 2.0).abs() < 1e-11);
        assert!(bridge_conditional_mean(&p, 0.6, 0.2, 0.5, 2.0).is_err());
    }

    #[test]
    fn second_moment_from_origin_matches_quadrature() {
        let p = p1();
        let q = integrate_real(|y| y * y * bridge_density(&p, 0.5, y, 1.0).unwrap(), 0.0, Some(1.0), 1.0).unwrap();
        let m2 = bridge_conditional_second_moment(&p, 0.0, 0.5, 0.0, 1.0).unwrap();
        assert!((m2 - q).abs() < 1e-8, "{m2} vs {q}");
        assert!(m2 <= 1.0 * bridge_conditional_mean(&p, 0.0, 0.5, 0.0, 1.0).unwrap());
        let near_t = bridge_conditional_second_moment(&p, 0.0, 1.0 - 1e-10, 0.0, 3.0).unwrap();
        assert!((near_t - 9.0).abs() < 1e-6);
    }

    #[test]
    fn second_moment_after_origin_is_an_increment_moment() {
        // With s > 0 the closed form is the moment of S_t - x; the level
        // moment differs by x^2 + 2x E[S_t - x].
        let p = BridgeParams::new(1.3, 1.0).unwrap();
        let (s, t, x, z) = (0.2, 0.6, 0.5, 2.0);
        let (a, b) = (t - s, 1.0 - t);
        let inc = integrate_real(|u| u * u * inc_log_density(p.c, a, b, u, z - x - u).exp(), 0.0, Some(z - x), 1.0).unwrap();
        let lvl = integrate_real(|u| (x + u).powi(2) * inc_log_density(p.c, a, b, u, z - x - u).exp(), 0.0, Some(z - x), 1.0).unwrap();
        let printed = bridge_conditional_second_moment(&p, s, t, x, z).unwrap();
        let level = bridge_conditional_level_second_moment(&p, s, t, x, z).unwrap();
        eprintln!("s>0 second moment: closed form {printed:.10}, increment quadrature {inc:.10}, level quadrature {lvl:.10}");
        assert!((printed - inc).abs() < 1e-8);
        assert!((level - lvl).abs() < 1e-8);
        assert!((printed - lvl).abs() > 0.1);
    }

    #[test]
    fn scaling_identity() {
        let p = BridgeParams::new(1.4, 1.0).unwrap();
        for &k in &[0.5, 2.0, 10.0] {
            let q = BridgeParams::new(1.4, k).unwrap();
            for &t in &[0.1, 0.5, 0.77] {
                for &z in &[0.3, 1.0, 5.0] {
                    for &f in &[0.01, 0.3, 0.9] {
                        let y = f * z;
                        let a = bridge_cdf(&p, t, y, z).unwrap();
                        let b = bridge_cdf(&q, k * t, k * k * y, k * k * z).unwrap();
                        if k == 10.0 {
                            // 10^2 y is rounded on input, and the rounding is
                            // amplified by x1^2 in the normal tail
                            assert!((a - b).abs() <= 1e-13 * a, "k={k}: {a} vs {b}");
                        } else {
                            assert_eq!(a, b);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn large_activity_degenerates() {
        let p = BridgeParams::new(1e3, 1.0).unwrap();
        for &t in &[0.2, 0.5, 0.8] {
            for &z in &[0.5, 1.0, 3.0] {
                for i in 1..40 {
                    let y = z * i as f64 / 40.0;
                    if (t * z - y).abs() < 0.05 * z {
                        continue;
                    }
                    let ind = if y >= t * z { 1.0 } else { 0.0 };
                    assert!((bridge_cdf(&p, t, y, z).unwrap() - ind).abs() < 0.01);
                }
            }
        }
    }

    #[test]
    fn midpoint_identity_round_trip() {
        // At t = T/2 the bridge law is that of y = z(1 + Z/sqrt(c^2T^2/z + Z^2))/2,
        // so F(y(Z)) = Phi(Z).
        let p = BridgeParams::new(0.8, 1.0).unwrap();
        let z = 1.7;
        for i in -40..=40 {
            let zn = i as f64 * 0.2;
            let y = z * midpoint_fraction(p.c, 1.0, z, zn);
            let f = bridge_cdf(&p, 0.5, y, z).unwrap();
            assert!((f - std_normal_cdf(zn)).abs() < 1e-10, "Z={zn}: {f}");
        }
    }

    #[test]
    fn midpoint_sampler_degenerate_and_bounds() {
        use rand::SeedableRng;
        let p = p1();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        assert_eq!(bridge_midpoint_sample(&p, 0.0, 1.0, 0.7, 0.7, &mut rng).unwrap(), 0.7);
        for _ in 0..1000 {
            let m = bridge_midpoint_sample(&p, 0.0, 1.0, 0.2, 0.9, &mut rng).unwrap();
            assert!((0.2..=0.9).contains(&m));
        }
        assert!(bridge_midpoint_sample(&p, 0.0, 1.0, 1.0, 0.9, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn cdf_derivative_is_density(t in 0.05f64..0.95, z in 0.2f64..5.0, f in 0.02f64..0.98) {
            let p = p1();
            let y = f * z;
            let h = 1e-6 * z;
            let fd = (bridge_cdf(&p, t, y + h, z).unwrap() - bridge_cdf(&p, t, y - h, z).unwrap()) / (2.0 * h);
            let d = bridge_density(&p, t, y, z).unwrap();
            prop_assert!((fd - d).abs() < 1e-5 * d.max(1.0));
        }

        #[test]
        fn moment_monotone_and_bounded(t in 0.05f64..0.95, z in 0.2f64..5.0, f in 0.01f64..0.98, df in 0.0f64..0.02) {
            let p = p1();
            let (y1, y2) = (f * z, (f + df) * z);
            let m1 = bridge_incomplete_first_moment(&p, t, y1, z).unwrap();
            let m2 = bridge_incomplete_first_moment(&p, t, y2, z).unwrap();
            prop_assert!(m2 >= m1 - 1e-15);
            prop_assert!(m1 <= y1 * bridge_cdf(&p, t, y1, z).unwrap() * (1.0 + 1e-12) + 1e-300);
        }
    }
}
