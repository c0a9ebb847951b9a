//! Smooth closed boundary curves parametrized on `[0, 2π)`, counterclockwise.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{EscatError, Result};

/// Curve descriptor as read from JSON, e.g. `{"type": "ellipse", "a": 2.0, "b": 1.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSpec {
    Circle {
        radius: f64,
    },
    Ellipse {
        a: f64,
        b: f64,
    },
    /// `scale · (cos t + 0.65 cos 2t - 0.65, 1.5 sin t)`.
    Kite {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `r(θ) = r0 (1 + Σ_k eps_k cos kθ + delta_k sin kθ)`, `k = 1, 2, ...`.
    Fourier {
        r0: f64,
        #[serde(default)]
        eps: Vec<f64>,
        #[serde(default)]
        delta: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

/// Position, velocity and acceleration at a parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: [f64; 2],
    pub dx: [f64; 2],
    pub ddx: [f64; 2],
}

impl CurvePoint {
    pub fn speed(&self) -> f64 {
        self.dx[0].hypot(self.dx[1])
    }

    /// Outward unit normal for a counterclockwise parametrization.
    pub fn normal(&self) -> [f64; 2] {
        let s = self.speed();
        [self.dx[1] / s, -self.dx[0] / s]
    }

    /// Signed curvature, positive on convex counterclockwise arcs.
    pub fn curvature(&self) -> f64 {
        (self.dx[0] * self.ddx[1] - self.dx[1] * self.ddx[0]) / self.speed().powi(3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCurve {
    spec: CurveSpec,
}

impl BoundaryCurve {
    pub fn new(spec: CurveSpec) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(EscatError::InvalidInput(format!("curve parameter {name} must be positive, got {v}")))
            }
        };
        match &spec {
            CurveSpec::Circle { radius } => positive("radius", *radius)?,
            CurveSpec::Ellipse { a, b } => {
                positive("a", *a)?;
                positive("b", *b)?;
            }
            CurveSpec::Kite { scale } => positive("scale", *scale)?,
            CurveSpec::Fourier { r0, eps, delta } => {
                positive("r0", *r0)?;
                let bound: f64 = eps.iter().chain(delta.iter()).map(|v| v.abs()).sum();
                if bound >= 1.0 {
                    return Err(EscatError::InvalidInput(
                        "Fourier radius perturbation must satisfy Σ|eps|+|delta| < 1".into(),
                    ));
                }
            }
        }
        let curve = Self { spec };
        curve.check_geometry()?;
        Ok(curve)
    }

    pub fn circle(radius: f64) -> Self {
        Self::new(CurveSpec::Circle { radius }).expect("valid circle")
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Self::new(CurveSpec::Ellipse { a, b }).expect("valid ellipse")
    }

    pub fn kite(scale: f64) -> Self {
        Self::new(CurveSpec::Kite { scale }).expect("valid kite")
    }

    pub fn spec(&self) -> &CurveSpec {
        &self.spec
    }

    pub fn eval(&self, t: f64) -> CurvePoint {
        let (s, c) = t.sin_cos();
        match &self.spec {
            CurveSpec::Circle { radius } => CurvePoint {
                x: [radius * c, radius * s],
                dx: [-radius * s, radius * c],
                ddx: [-radius * c, -radius * s],
            },
            CurveSpec::Ellipse { a, b } => CurvePoint {
                x: [a * c, b * s],
                dx: [-a * s, b * c],
                ddx: [-a * c, -b * s],
            },
            CurveSpec::Kite { scale } => {
                let (s2, c2) = (2.0 * t).sin_cos();
                CurvePoint {
                    x: [scale * (c + 0.65 * c2 - 0.65), scale * 1.5 * s],
                    dx: [scale * (-s - 1.3 * s2), scale * 1.5 * c],
                    ddx: [scale * (-c - 2.6 * c2), -scale * 1.5 * s],
                }
            }
            CurveSpec::Fourier { r0, eps, delta } => {
                let mut r = 1.0;
                let mut dr = 0.0;
                let mut ddr = 0.0;
                for (k, e) in eps.iter().enumerate() {
                    let kf = (k + 1) as f64;
                    let (sk, ck) = (kf * t).sin_cos();
                    r += e * ck;
                    dr -= e * kf * sk;
                    ddr -= e * kf * kf * ck;
                }
                for (k, d) in delta.iter().enumerate() {
                    let kf = (k + 1) as f64;
                    let (sk, ck) = (kf * t).sin_cos();
                    r += d * sk;
                    dr += d * kf * ck;
                    ddr -= d * kf * kf * sk;
                }
                let (r, dr, ddr) = (r0 * r, r0 * dr, r0 * ddr);
                CurvePoint {
                    x: [r * c, r * s],
                    dx: [dr * c - r * s, dr * s + r * c],
                    ddx: [ddr * c - 2.0 * dr * s - r * c, ddr * s + 2.0 * dr * c - r * s],
                }
            }
        }
    }

    /// Largest chord length, sampled.
    pub fn diameter(&self) -> f64 {
        let pts: Vec<[f64; 2]> = (0..256).map(|k| self.eval(2.0 * PI * k as f64 / 256.0).x).collect();
        let mut d: f64 = 0.0;
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[i + 1..] {
                d = d.max((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        d
    }

    /// Rejects cusps, self-intersections, clockwise orientation and curves not
    /// enclosing the origin.
    fn check_geometry(&self) -> Result<()> {
        let n = 512;
        let pts: Vec<CurvePoint> = (0..n).map(|k| self.eval(2.0 * PI * k as f64 / n as f64)).collect();
        let scale = pts.iter().map(|p| p.x[0].hypot(p.x[1])).fold(0.0, f64::max);
        if pts.iter().any(|p| p.speed() < 1e-8 * scale) {
            return Err(EscatError::InvalidInput("curve has a cusp (vanishing velocity)".into()));
        }
        let mut area = 0.0;
        let mut winding = 0.0;
        for k in 0..n {
            let p = pts[k].x;
            let q = pts[(k + 1) % n].x;
            area += 0.5 * (p[0] * q[1] - p[1] * q[0]);
            let mut dth = q[1].atan2(q[0]) - p[1].atan2(p[0]);
            if dth > PI {
                dth -= 2.0 * PI;
            } else if dth < -PI {
                dth += 2.0 * PI;
            }
            winding += dth;
        }
        if area <= 0.0 {
            return Err(EscatError::InvalidInput("curve must be counterclockwise".into()));
        }
        if (winding / (2.0 * PI) - 1.0).abs() > 1e-6 {
            return Err(EscatError::InvalidInput("curve must enclose the origin".into()));
        }
        for i in 0..n {
            let (a, b) = (pts[i].x, pts[(i + 1) % n].x);
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (c, d) = (pts[j].x, pts[(j + 1) % n].x);
                if segments_cross(a, b, c, d) {
                    return Err(EscatError::InvalidInput("curve self-intersects".into()));
                }
            }
        }
        Ok(())
    }
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}
