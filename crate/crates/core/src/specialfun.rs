//! Cylindrical Bessel functions `J_n`, `Y_n` and Hankel functions `H^(1)_n` of
//! integer order and positive real argument, with first derivatives.
//!
//! Strategy, by argument `x`:
//! * `x < ASYMPTOTIC_THRESHOLD`: Miller backward recurrence for `J`, normalized by
//!   `J_0 + 2 Σ J_{2k} = 1`; `Y_0` and `Y_1` from their Neumann series in the same
//!   `J` values.
//! * `x >= ASYMPTOTIC_THRESHOLD`: Hankel asymptotic expansions for orders 0 and 1,
//!   forward recurrence for `J` below the turning point, Miller above it.
//!
//! `Y_n` always comes from upward recurrence, which is stable.

use num_complex::Complex64;

use crate::error::{EscatError, Result};

/// Largest supported |order|.
pub const MAX_ORDER: usize = 256;

/// Crossover to the large-argument expansions.
pub const ASYMPTOTIC_THRESHOLD: f64 = 25.0;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const RESCALE_LIMIT: f64 = 1e250;

/// Values of `J_n`, `Y_n` and their derivatives at a single (order, argument).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselEval {
    pub order: i32,
    pub argument: f64,
    pub j: f64,
    pub y: f64,
    pub jp: f64,
    pub yp: f64,
}

impl BesselEval {
    pub fn hankel(&self) -> Complex64 {
        Complex64::new(self.j, self.y)
    }

    pub fn hankel_prime(&self) -> Complex64 {
        Complex64::new(self.jp, self.yp)
    }
}

/// All orders `0..=n_max` at one argument. Negative orders are served through
/// `Z_{-n} = (-1)^n Z_n`.
#[derive(Debug, Clone)]
pub struct BesselTable {
    argument: f64,
    j: Vec<f64>,
    y: Vec<f64>,
    jp: Vec<f64>,
    yp: Vec<f64>,
}

impl BesselTable {
    pub fn new(n_max: usize, x: f64) -> Result<Self> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(EscatError::Domain(format!("Bessel argument must be positive and finite, got {x}")));
        }
        if n_max > MAX_ORDER {
            return Err(EscatError::Range(format!("order {n_max} exceeds {MAX_ORDER}")));
        }
        // One extra order for the derivative formula.
        let top = n_max + 1;
        let (j, y0, y1) = if x < ASYMPTOTIC_THRESHOLD {
            small_argument(top, x)
        } else {
            large_argument(top, x)
        };

        let mut y = vec![0.0; top + 1];
        y[0] = y0;
        if top >= 1 {
            y[1] = y1;
        }
        for k in 1..top {
            y[k + 1] = (2.0 * k as f64 / x) * y[k] - y[k - 1];
        }

        let mut jp = vec![0.0; n_max + 1];
        let mut yp = vec![0.0; n_max + 1];
        jp[0] = -j[1];
        yp[0] = -y[1];
        for k in 1..=n_max {
            let kx = k as f64 / x;
            jp[k] = j[k - 1] - kx * j[k];
            yp[k] = y[k - 1] - kx * y[k];
        }
        let mut j = j;
        j.truncate(n_max + 1);
        y.truncate(n_max + 1);

        if y.iter().chain(yp.iter()).any(|v| !v.is_finite()) {
            return Err(EscatError::Range(format!(
                "Y_n overflows for order up to {n_max} at argument {x}"
            )));
        }
        Ok(Self { argument: x, j, y, jp, yp })
    }

    pub fn argument(&self) -> f64 {
        self.argument
    }

    pub fn n_max(&self) -> usize {
        self.j.len() - 1
    }

    fn slot(&self, order: i32) -> (usize, f64) {
        let n = order.unsigned_abs() as usize;
        assert!(n <= self.n_max(), "order {order} outside cached table (n_max = {})", self.n_max());
        let sign = if order < 0 && n % 2 == 1 { -1.0 } else { 1.0 };
        (n, sign)
    }

    pub fn eval(&self, order: i32) -> BesselEval {
        let (n, s) = self.slot(order);
        BesselEval {
            order,
            argument: self.argument,
            j: s * self.j[n],
            y: s * self.y[n],
            jp: s * self.jp[n],
            yp: s * self.yp[n],
        }
    }

    pub fn j(&self, order: i32) -> f64 {
        let (n, s) = self.slot(order);
        s * self.j[n]
    }

    pub fn jp(&self, order: i32) -> f64 {
        let (n, s) = self.slot(order);
        s * self.jp[n]
    }

    pub fn h(&self, order: i32) -> Complex64 {
        let (n, s) = self.slot(order);
        Complex64::new(s * self.j[n], s * self.y[n])
    }

    pub fn hp(&self, order: i32) -> Complex64 {
        let (n, s) = self.slot(order);
        Complex64::new(s * self.jp[n], s * self.yp[n])
    }
}

/// `J_n`, `Y_n` and derivatives for a single order.
pub fn bessel_jy(order: i32, x: f64) -> Result<BesselEval> {
    let n = order.unsigned_abs() as usize;
    if n > MAX_ORDER {
        return Err(EscatError::Range(format!("order {order} exceeds {MAX_ORDER}")));
    }
    Ok(BesselTable::new(n, x)?.eval(order))
}

/// `(H^(1)_n(x), H^(1)'_n(x))`.
pub fn hankel1(order: i32, x: f64) -> Result<(Complex64, Complex64)> {
    let e = bessel_jy(order, x)?;
    Ok((e.hankel(), e.hankel_prime()))
}

fn miller_start(n: usize, x: f64) -> usize {
    let big = (n as f64).max(x);
    let m = big + (160.0 * big).sqrt() + 20.0;
    2 * ((m as usize) / 2 + 1)
}

/// Unnormalized backward recurrence `f_{k-1} = (2k/x) f_k - f_{k+1}` from an even
/// start order. Entries that would overflow are rescaled as the recurrence proceeds.
fn miller_backward(start: usize, x: f64) -> Vec<f64> {
    let mut f = vec![0.0; start + 2];
    f[start] = 1e-300;
    for k in (1..=start).rev() {
        f[k - 1] = (2.0 * k as f64 / x) * f[k] - f[k + 1];
        if f[k - 1].abs() > RESCALE_LIMIT {
            for v in f[k - 1..].iter_mut() {
                *v /= RESCALE_LIMIT;
            }
        }
    }
    f
}

/// Returns (J_0..J_top, Y_0, Y_1) for arguments below the asymptotic threshold.
fn small_argument(top: usize, x: f64) -> (Vec<f64>, f64, f64) {
    let start = miller_start(top, x);
    let mut f = miller_backward(start, x);
    let norm = f[0] + 2.0 * f.iter().skip(2).step_by(2).sum::<f64>();
    for v in f.iter_mut() {
        *v /= norm;
    }

    let log_term = (x / 2.0).ln() + EULER_GAMMA;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut k = 1;
    while 2 * k + 1 <= start {
        let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
        s0 += sign * f[2 * k] / k as f64;
        s1 += sign * (f[2 * k - 1] - f[2 * k + 1]) / k as f64;
        k += 1;
    }
    let y0 = std::f64::consts::FRAC_2_PI * (log_term * f[0] - 2.0 * s0);
    let y1 = -std::f64::consts::FRAC_2_PI * (f[0] / x - log_term * f[1] - s1);

    f.truncate(top + 1);
    (f, y0, y1)
}

/// Hankel asymptotic expansion for order `nu` in {0, 1}: returns (J, Y).
fn asymptotic_jy(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        if term.abs() > prev {
            break;
        }
        prev = term.abs();
        // a_k / x^k with alternating signs split into P (even k) and Q (odd k).
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 * p.abs().max(1e-300) {
            break;
        }
    }
    // chi = x - (nu/2 + 1/4) pi, expanded to keep the large argument exact.
    let phase = (nu / 2.0 + 0.25) * std::f64::consts::PI;
    let (sx, cx) = x.sin_cos();
    let (sp, cp) = phase.sin_cos();
    let cos_chi = cx * cp + sx * sp;
    let sin_chi = sx * cp - cx * sp;
    let amp = (std::f64::consts::FRAC_2_PI / x).sqrt();
    (amp * (p * cos_chi - q * sin_chi), amp * (p * sin_chi + q * cos_chi))
}

fn large_argument(top: usize, x: f64) -> (Vec<f64>, f64, f64) {
    let (j0, y0) = asymptotic_jy(0.0, x);
    let (j1, y1) = asymptotic_jy(1.0, x);
    let mut j = vec![0.0; top + 1];
    if (top as f64) < x {
        j[0] = j0;
        if top >= 1 {
            j[1] = j1;
        }
        for k in 1..top {
            j[k + 1] = (2.0 * k as f64 / x) * j[k] - j[k - 1];
        }
    } else {
        let f = miller_backward(miller_start(top, x), x);
        // Least-squares fit of the two anchored values, normalized first to avoid overflow.
        let norm = f[0].hypot(f[1]);
        let (u0, u1) = (f[0] / norm, f[1] / norm);
        let scale = (j0 * u0 + j1 * u1) / norm;
        for k in 0..=top {
            j[k] = scale * f[k];
        }
    }
    (j, y0, y1)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct power series for J_n, summed in long form; independent of the recurrences.
    fn j_series(n: usize, x: f64) -> f64 {
        let half = x / 2.0;
        let mut term = 1.0;
        for k in 1..=n {
            term *= half / k as f64;
        }
        let mut sum = term;
        for k in 1..200 {
            term *= -half * half / (k as f64 * (n + k) as f64);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    }

    #[test]
    fn j1_matches_power_series() {
        let e = bessel_jy(1, 1.0).unwrap();
        let oracle = j_series(1, 1.0);
        assert!((e.j - oracle).abs() < 1e-15, "{} vs {}", e.j, oracle);
        // Frozen reference value of J_1(1).
        assert!((e.j - 0.440_050_585_744_933_5).abs() < 1e-15);
    }

    #[test]
    fn j0_near_zero_tends_to_one() {
        let e = bessel_jy(0, 1e-10).unwrap();
        assert!((e.j - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_order_parity() {
        let a = bessel_jy(-3, 2.0).unwrap();
        let b = bessel_jy(3, 2.0).unwrap();
        assert_eq!(a.j, -b.j);
        assert_eq!(a.y, -b.y);
        let c = bessel_jy(-4, 2.0).unwrap();
        let d = bessel_jy(4, 2.0).unwrap();
        assert_eq!(c.j, d.j);
    }

    #[test]
    fn series_agreement_small_arguments() {
        for &x in &[1e-3, 0.01, 0.3, 1.0, 2.5, 7.0] {
            let t = BesselTable::new(40, x).unwrap();
            for n in 0..=40usize {
                let s = j_series(n, x);
                let v = t.j(n as i32);
                if s.abs() > 1e-290 {
                    assert!(((v - s) / s).abs() < 1e-12, "n={n} x={x}: {v} vs {s}");
                }
            }
        }
    }

    #[test]
    fn wronskian_over_range() {
        let mut x = 1e-3;
        while x <= 1e3 {
            let t = BesselTable::new(40, x).unwrap();
            for n in 0..=40 {
                let e = t.eval(n);
                let w = e.j * e.yp - e.jp * e.y;
                let target = 2.0 / (std::f64::consts::PI * x);
                assert!(((w - target) / target).abs() < 1e-12, "n={n} x={x}: {w} vs {target}");
            }
            x *= 1.37;
        }
    }

    #[test]
    fn known_values() {
        // Reference values from a 30-digit arbitrary-precision evaluation.
        let e = bessel_jy(0, 30.0).unwrap();
        assert!((e.j - (-0.086_367_983_581_040_22)).abs() < 1e-14);
        assert!((e.y - (-0.117_295_731_686_664_03)).abs() < 1e-14);
        let e = bessel_jy(0, 1.0).unwrap();
        assert!((e.y - 0.088_256_964_215_676_96).abs() < 1e-15);
        let e = bessel_jy(1, 1.0).unwrap();
        assert!((e.y - (-0.781_212_821_300_288_7)).abs() < 1e-15);
    }

    #[test]
    fn hankel_recurrence() {
        for &x in &[0.05, 0.7, 3.0, 24.9, 25.1, 80.0, 6.3e4] {
            let t = BesselTable::new(30, x).unwrap();
            for n in 1..30 {
                let lhs = t.h(n - 1) + t.h(n + 1);
                let rhs = t.h(n) * (2.0 * n as f64 / x);
                assert!((lhs - rhs).norm() < 1e-11 * rhs.norm().max(lhs.norm()), "n={n} x={x}");
            }
        }
    }

    #[test]
    fn small_argument_growth_of_h5() {
        let (h, _) = hankel1(5, 0.1).unwrap();
        // Gamma(5) = 24.
        let lead = (2.0f64 / 0.1).powi(5) * 24.0 / std::f64::consts::PI;
        assert!((h.norm() / lead - 1.0).abs() < 0.05);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(bessel_jy(0, 0.0), Err(EscatError::Domain(_))));
        assert!(matches!(bessel_jy(0, -1.0), Err(EscatError::Domain(_))));
        assert!(matches!(bessel_jy(300, 1.0), Err(EscatError::Range(_))));
        assert!(matches!(bessel_jy(256, 1e-3), Err(EscatError::Range(_))));
    }

    #[test]
    fn continuity_across_threshold() {
        let step = ASYMPTOTIC_THRESHOLD * 1e-12;
        let a = BesselTable::new(12, ASYMPTOTIC_THRESHOLD - step).unwrap();
        let b = BesselTable::new(12, ASYMPTOTIC_THRESHOLD).unwrap();
        for n in 0..=12 {
            // First-order shift across the tiny step.
            let jb = b.j(n) - step * b.jp(n);
            let hb = b.h(n) - step * b.hp(n);
            assert!((a.j(n) - jb).abs() < 1e-14, "n={n}: {} vs {}", a.j(n), jb);
            assert!((a.h(n) - hb).norm() < 1e-14, "n={n}: {} vs {}", a.h(n), hb);
        }
    }

    #[test]
    fn miller_branch_for_large_argument_high_order() {
        // 30-digit reference values.
        let t = BesselTable::new(60, 30.0).unwrap();
        assert!((t.j(60) / 9.807_557_643_128_625e-14 - 1.0).abs() < 1e-12);
        assert!((t.j(45) / 3.915_769_889_672_734_5e-6 - 1.0).abs() < 1e-12);
    }
}
