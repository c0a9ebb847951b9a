//! Cylindrical elastic wave bases, plane-wave coefficients, the Kupradze
//! fundamental solution and the closed-form traction coefficients.
//!
//! Every basis field is a first derivative of a scalar potential
//! `u_m = Z_m(κ|x|) e^{imθ}` (`Z = J` or `H^(1)`):
//! `J^P_m = ∇u_m` and `J^S_m = (∂_2 u_m, -∂_1 u_m)`. Cartesian derivatives follow
//! from `(∂_1 ± i∂_2) u_m = ∓κ u_{m±1}`, so values and gradients only need the
//! potentials of orders `m-2..=m+2`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{EscatError, Result};
use crate::specialfun::BesselTable;

pub type C64 = Complex64;
pub type CVec2 = [C64; 2];
pub type CMat2 = [[C64; 2]; 2];

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Isotropic linear elastic material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub lame_lambda: f64,
    pub lame_mu: f64,
    pub density: f64,
}

impl Material {
    pub fn new(lame_lambda: f64, lame_mu: f64, density: f64) -> Result<Self> {
        let m = Self { lame_lambda, lame_mu, density };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lame_lambda", self.lame_lambda), ("lame_mu", self.lame_mu), ("density", self.density)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(EscatError::InvalidInput(format!("material {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Uniform scaling of all three parameters.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lame_lambda: self.lame_lambda * factor,
            lame_mu: self.lame_mu * factor,
            density: self.density * factor,
        }
    }

    pub fn c_p(&self) -> f64 {
        ((self.lame_lambda + 2.0 * self.lame_mu) / self.density).sqrt()
    }

    pub fn c_s(&self) -> f64 {
        (self.lame_mu / self.density).sqrt()
    }

    pub fn speed(&self, mode: Mode) -> f64 {
        match mode {
            Mode::P => self.c_p(),
            Mode::S => self.c_s(),
        }
    }

    pub fn kappa(&self, mode: Mode, omega: f64) -> f64 {
        omega / self.speed(mode)
    }

    /// Shear wavelength `2π c_S / ω`.
    pub fn shear_wavelength(&self, omega: f64) -> f64 {
        2.0 * PI * self.c_s() / omega
    }
}

/// Exterior (background) and interior (inclusion) materials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialPair {
    pub exterior: Material,
    pub interior: Material,
}

impl MaterialPair {
    pub fn new(exterior: Material, interior: Material) -> Result<Self> {
        let p = Self { exterior, interior };
        p.validate()?;
        Ok(p)
    }

    /// Both materials valid, and the Lamé contrast is nonzero with `(λ0-λ1)(μ0-μ1) >= 0`.
    pub fn validate(&self) -> Result<()> {
        self.exterior.validate()?;
        self.interior.validate()?;
        let dl = self.exterior.lame_lambda - self.interior.lame_lambda;
        let dm = self.exterior.lame_mu - self.interior.lame_mu;
        if dl * dl + dm * dm == 0.0 {
            return Err(EscatError::InvalidInput("Lamé parameters of the inclusion equal the background".into()));
        }
        if dl * dm < 0.0 {
            return Err(EscatError::InvalidInput("contrast condition (λ0-λ1)(μ0-μ1) >= 0 violated".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    P,
    S,
}

impl Mode {
    pub const BOTH: [Mode; 2] = [Mode::P, Mode::S];

    pub fn index(self) -> usize {
        match self {
            Mode::P => 0,
            Mode::S => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeIndex {
    pub mode: Mode,
    pub order: i32,
}

impl ModeIndex {
    pub fn new(mode: Mode, order: i32) -> Self {
        Self { mode, order }
    }
}

/// Regular (`J`) or outgoing (`H^(1)`) radial profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Regular,
    Outgoing,
}

/// Field value and Cartesian gradient `grad[i][j] = ∂_j f_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveSample {
    pub value: CVec2,
    pub grad: CMat2,
}

impl WaveSample {
    pub fn divergence(&self) -> C64 {
        self.grad[0][0] + self.grad[1][1]
    }

    /// Traction `λ (∇·f) n + μ (∇f + ∇fᵀ) n`.
    pub fn traction(&self, normal: [f64; 2], material: &Material) -> CVec2 {
        traction_from_gradient(&self.grad, normal, material)
    }
}

pub fn traction_from_gradient(grad: &CMat2, normal: [f64; 2], material: &Material) -> CVec2 {
    let div = grad[0][0] + grad[1][1];
    let mut t = [C64::new(0.0, 0.0); 2];
    for i in 0..2 {
        let mut s = div * material.lame_lambda * normal[i];
        for k in 0..2 {
            s += (grad[i][k] + grad[k][i]) * (material.lame_mu * normal[k]);
        }
        t[i] = s;
    }
    t
}

/// Batch evaluator of `J^α_m` or `H^α_m` at one point for all `|m| <= m_max`.
#[derive(Debug, Clone)]
pub struct CylWaveEvaluator {
    kind: Kind,
    m_max: i32,
    kappa: [f64; 2],
    /// Potentials `u_k` for `|k| <= m_max + 2`, per mode, offset by `m_max + 2`.
    potentials: [Vec<C64>; 2],
}

impl CylWaveEvaluator {
    pub fn new(kind: Kind, point: [f64; 2], material: &Material, omega: f64, m_max: usize) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(EscatError::Domain(format!("omega must be positive, got {omega}")));
        }
        let r = point[0].hypot(point[1]);
        let top = m_max + 2;
        let kappa = [material.kappa(Mode::P, omega), material.kappa(Mode::S, omega)];
        let mut potentials: [Vec<C64>; 2] = [vec![C64::new(0.0, 0.0); 2 * top + 1], vec![C64::new(0.0, 0.0); 2 * top + 1]];
        if r == 0.0 {
            if kind == Kind::Outgoing {
                return Err(EscatError::Domain("outgoing wave functions are singular at the origin".into()));
            }
            // J_k(0) e^{ikθ} = δ_{k0}: the entire field is evaluated through its series limit.
            for p in potentials.iter_mut() {
                p[top] = C64::new(1.0, 0.0);
            }
        } else {
            let theta = point[1].atan2(point[0]);
            for (slot, &k) in kappa.iter().enumerate() {
                let table = BesselTable::new(top, k * r)?;
                for order in -(top as i32)..=(top as i32) {
                    let phase = C64::from_polar(1.0, order as f64 * theta);
                    let z = match kind {
                        Kind::Regular => C64::new(table.j(order), 0.0),
                        Kind::Outgoing => table.h(order),
                    };
                    potentials[slot][(order + top as i32) as usize] = z * phase;
                }
            }
        }
        Ok(Self { kind, m_max: m_max as i32, kappa, potentials })
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    fn u(&self, slot: usize, k: i32) -> C64 {
        self.potentials[slot][(k + self.m_max + 2) as usize]
    }

    pub fn sample(&self, mode: Mode, order: i32) -> WaveSample {
        assert!(order.abs() <= self.m_max, "order {order} beyond evaluator range {}", self.m_max);
        let slot = mode.index();
        let k = self.kappa[slot];
        let (um2, um1, u0, up1, up2) = (
            self.u(slot, order - 2),
            self.u(slot, order - 1),
            self.u(slot, order),
            self.u(slot, order + 1),
            self.u(slot, order + 2),
        );
        let dx = (um1 - up1) * (k / 2.0);
        let dy = (um1 + up1) * (I * (k / 2.0));
        let k2 = k * k / 4.0;
        let hxx = (um2 - u0 * 2.0 + up2) * k2;
        let hyy = -(um2 + u0 * 2.0 + up2) * k2;
        let hxy = (um2 - up2) * (I * k2);
        match mode {
            Mode::P => WaveSample { value: [dx, dy], grad: [[hxx, hxy], [hxy, hyy]] },
            Mode::S => WaveSample { value: [dy, -dx], grad: [[hxy, hyy], [-hxx, -hxy]] },
        }
    }

    pub fn value(&self, mode: Mode, order: i32) -> CVec2 {
        self.sample(mode, order).value
    }
}

/// `J^α_m(x)` in Cartesian components.
#[allow(non_snake_case)]
pub fn cyl_wave_J(idx: ModeIndex, point: [f64; 2], material: &Material, omega: f64) -> Result<CVec2> {
    let ev = CylWaveEvaluator::new(Kind::Regular, point, material, omega, idx.order.unsigned_abs() as usize)?;
    Ok(ev.value(idx.mode, idx.order))
}

/// `H^α_m(x)` in Cartesian components; `x` must not be the origin.
#[allow(non_snake_case)]
pub fn cyl_wave_H(idx: ModeIndex, point: [f64; 2], material: &Material, omega: f64) -> Result<CVec2> {
    let ev = CylWaveEvaluator::new(Kind::Outgoing, point, material, omega, idx.order.unsigned_abs() as usize)?;
    Ok(ev.value(idx.mode, idx.order))
}

/// `P_m(θ) = e^{imθ} ê_r`.
pub fn surface_p(m: i32, theta: f64) -> CVec2 {
    let e = C64::from_polar(1.0, m as f64 * theta);
    [e * theta.cos(), e * theta.sin()]
}

/// `S_m(θ) = e^{imθ} ê_θ`.
pub fn surface_s(m: i32, theta: f64) -> CVec2 {
    let e = C64::from_polar(1.0, m as f64 * theta);
    [-e * theta.sin(), e * theta.cos()]
}

/// Far-field amplitude `A^{∞,α}_n` with `H^α_n(x) ~ e^{iκ|x|}/√|x| · A^{∞,α}_n · (P_n or S_n)(x̂)`.
pub fn far_field_amplitude(mode: Mode, n: i32, kappa: f64) -> C64 {
    let base = C64::new(1.0, 1.0) * kappa * C64::from_polar(1.0, -(n as f64) * PI / 2.0) / (PI * kappa).sqrt();
    match mode {
        Mode::P => base,
        Mode::S => -base,
    }
}

/// Coefficients of a plane wave in the regular basis, indexed `m + m_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWaveCoeffs {
    pub m_max: i32,
    pub p: Vec<C64>,
    pub s: Vec<C64>,
}

impl PlaneWaveCoeffs {
    pub fn get(&self, mode: Mode, m: i32) -> C64 {
        let idx = (m + self.m_max) as usize;
        match mode {
            Mode::P => self.p[idx],
            Mode::S => self.s[idx],
        }
    }

    pub fn zeros(m_max: i32) -> Self {
        let n = (2 * m_max + 1) as usize;
        Self { m_max, p: vec![C64::new(0.0, 0.0); n], s: vec![C64::new(0.0, 0.0); n] }
    }
}

/// `a^β_m = -i/(ρ c_β² κ_β) e^{im(π/2 - θ_d)}` for the plane wave
/// `(1/(ρc_P²)) d e^{iκ_P x·d} + (1/(ρc_S²)) d^⊥ e^{iκ_S x·d}` with `d^⊥ = (d_2, -d_1)`.
pub fn plane_wave_coeffs(direction: [f64; 2], omega: f64, material: &Material, m_max: i32) -> Result<PlaneWaveCoeffs> {
    let norm = direction[0].hypot(direction[1]);
    if (norm - 1.0).abs() > 1e-12 {
        return Err(EscatError::InvalidInput(format!("direction must be a unit vector, |d| = {norm}")));
    }
    let theta_d = direction[1].atan2(direction[0]);
    let mut out = PlaneWaveCoeffs::zeros(m_max);
    for mode in Mode::BOTH {
        let c = material.speed(mode);
        let k = material.kappa(mode, omega);
        let scale = -I / (material.density * c * c * k);
        for m in -m_max..=m_max {
            let v = scale * C64::from_polar(1.0, m as f64 * (PI / 2.0 - theta_d));
            match mode {
                Mode::P => out.p[(m + m_max) as usize] = v,
                Mode::S => out.s[(m + m_max) as usize] = v,
            }
        }
    }
    Ok(out)
}

/// `d^⊥ = (d_2, -d_1)`, the polarization matching the shear coefficients above.
pub fn shear_polarization(direction: [f64; 2]) -> [f64; 2] {
    [direction[1], -direction[0]]
}

/// Pressure and shear plane waves evaluated directly (the sum of both is the
/// field represented by [`plane_wave_coeffs`]).
pub fn plane_wave(mode: Mode, direction: [f64; 2], point: [f64; 2], omega: f64, material: &Material) -> WaveSample {
    let c = material.speed(mode);
    let k = material.kappa(mode, omega);
    let amp = 1.0 / (material.density * c * c);
    let pol = match mode {
        Mode::P => direction,
        Mode::S => shear_polarization(direction),
    };
    let phase = C64::from_polar(amp, k * (point[0] * direction[0] + point[1] * direction[1]));
    let value = [phase * pol[0], phase * pol[1]];
    let mut grad = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            grad[i][j] = value[i] * (I * k * direction[j]);
        }
    }
    WaveSample { value, grad }
}

/// Radial profile of the Kupradze matrix `Γ = A(r) I + B(r) r̂ r̂ᵀ` together with
/// `A'(r)` and `B'(r)`.
#[derive(Debug, Clone, Copy)]
pub struct KernelProfile {
    pub a: C64,
    pub b: C64,
    pub da: C64,
    pub db: C64,
}

/// Which part of the Hankel functions enters the profile. `LogCoefficient`
/// replaces every `H^(1)_n` by `(i/π) J_n`, the coefficient of `ln(r²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfilePart {
    Full,
    LogCoefficient,
}

/// `A`, `B` and their radial derivatives:
/// `A = (i/4μ)[H_0(κ_S r) - (κ_S H_1(κ_S r) - κ_P H_1(κ_P r))/(κ_S² r)]`,
/// `B = (i/4μ)[H_2(κ_S r) - (κ_P/κ_S)² H_2(κ_P r)]`.
pub fn kernel_profile(r: f64, omega: f64, material: &Material, part: ProfilePart) -> Result<KernelProfile> {
    let (full, log) = kernel_profiles(r, omega, material)?;
    Ok(match part {
        ProfilePart::Full => full,
        ProfilePart::LogCoefficient => log,
    })
}

/// Both parts of the profile from one pair of Bessel tables.
pub fn kernel_profiles(r: f64, omega: f64, material: &Material) -> Result<(KernelProfile, KernelProfile)> {
    let kp = material.kappa(Mode::P, omega);
    let ks = material.kappa(Mode::S, omega);
    let ts = BesselTable::new(3, ks * r)?;
    let tp = BesselTable::new(3, kp * r)?;
    let pick = |t: &BesselTable, part: ProfilePart| {
        let mut z = [C64::new(0.0, 0.0); 4];
        for (n, slot) in z.iter_mut().enumerate() {
            *slot = match part {
                ProfilePart::Full => t.h(n as i32),
                ProfilePart::LogCoefficient => C64::new(0.0, t.j(n as i32) / PI),
            };
        }
        z
    };
    let full = profile_from_values(r, kp, ks, &pick(&ts, ProfilePart::Full), &pick(&tp, ProfilePart::Full), material);
    let log = profile_from_values(
        r,
        kp,
        ks,
        &pick(&ts, ProfilePart::LogCoefficient),
        &pick(&tp, ProfilePart::LogCoefficient),
        material,
    );
    Ok((full, log))
}

fn profile_from_values(r: f64, kp: f64, ks: f64, hs: &[C64; 4], hp: &[C64; 4], material: &Material) -> KernelProfile {
    let pre = I / (4.0 * material.lame_mu);
    let q = (kp / ks) * (kp / ks);

    // f(r) = H_1(κr)κ/r: derivative via H_1' = H_0 - H_1/x.
    let f = |k: f64, h: &[C64; 4]| h[1] * (k / r);
    let df = |k: f64, h: &[C64; 4]| {
        let x = k * r;
        let h1p = h[0] - h[1] / x;
        h1p * (k * k / r) - h[1] * (k / (r * r))
    };
    let a = pre * (hs[0] - (f(ks, hs) - f(kp, hp)) / (ks * ks));
    let da = pre * (-hs[1] * ks - (df(ks, hs) - df(kp, hp)) / (ks * ks));
    // H_2'(x) = H_1(x) - 2 H_2(x)/x.
    let h2p = |k: f64, h: &[C64; 4]| (h[1] - h[2] * (2.0 / (k * r))) * k;
    let b = pre * (hs[2] - hp[2] * q);
    let db = pre * (h2p(ks, hs) - h2p(kp, hp) * q);
    KernelProfile { a, b, da, db }
}

/// Kupradze matrix `Γ^ω(x - y)` of the material, outgoing, with
/// `(L + ρω²) Γ = -δ I`.
pub fn fundamental_solution(x: [f64; 2], y: [f64; 2], omega: f64, material: &Material) -> Result<CMat2> {
    let d = [x[0] - y[0], x[1] - y[1]];
    let r = d[0].hypot(d[1]);
    if r == 0.0 {
        return Err(EscatError::Domain("fundamental solution evaluated at coincident points".into()));
    }
    let prof = kernel_profile(r, omega, material, ProfilePart::Full)?;
    let rh = [d[0] / r, d[1] / r];
    Ok(assemble_gamma(prof.a, prof.b, rh))
}

pub fn assemble_gamma(a: C64, b: C64, rh: [f64; 2]) -> CMat2 {
    [
        [a + b * (rh[0] * rh[0]), b * (rh[0] * rh[1])],
        [b * (rh[1] * rh[0]), a + b * (rh[1] * rh[1])],
    ]
}

/// Traction at `x` (normal `n` at `x`) of the columns of `A I + B r̂r̂ᵀ`, given
/// `A'`, `B'` and `B/r`.
pub fn traction_of_profile(
    da: C64,
    db: C64,
    b_over_r: C64,
    rh: [f64; 2],
    n: [f64; 2],
    material: &Material,
) -> CMat2 {
    let lam = material.lame_lambda;
    let mu = material.lame_mu;
    let rn = rh[0] * n[0] + rh[1] * n[1];
    let vol = (da + db + b_over_r) * lam;
    let shear = da + b_over_r;
    let radial = (db * 2.0 - b_over_r * 4.0) * rn;
    let mut t = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let delta = if i == j { 1.0 } else { 0.0 };
            t[i][j] = vol * (n[i] * rh[j])
                + (shear * (rn * delta + rh[i] * n[j]) + b_over_r * (2.0 * n[i] * rh[j]) + radial * (rh[i] * rh[j])) * mu;
        }
    }
    t
}

/// Closed-form traction coefficients on `|x| = r`: the traction of `H^α_n`
/// equals `(B P_n + C S_n)/r²`, and the hatted values are the `J_n` analogues.
#[derive(Debug, Clone, Copy, PartialEq)]
#[allow(non_snake_case)]
pub struct TractionCoeffs {
    pub B: C64,
    pub C: C64,
    pub B_hat: C64,
    pub C_hat: C64,
}

/// Radial traction coefficient of the P basis field: `-2μ t Z' + (2μn² - (λ+2μ)t²) Z`.
fn b_pressure(n: f64, t: f64, z: C64, zp: C64, m: &Material) -> C64 {
    -zp * (2.0 * m.lame_mu * t) + z * (2.0 * m.lame_mu * n * n - (m.lame_lambda + 2.0 * m.lame_mu) * t * t)
}

/// Shared coupling coefficient `2iμn(-Z + tZ')`; it is both `C^P` and `B^S`.
fn coupling(n: f64, t: f64, z: C64, zp: C64, m: &Material) -> C64 {
    I * (2.0 * m.lame_mu * n) * (-z + zp * t)
}

/// Tangential traction coefficient of the S basis field: `2μ t Z' + (-2μn² + μt²) Z`.
fn c_shear(n: f64, t: f64, z: C64, zp: C64, m: &Material) -> C64 {
    zp * (2.0 * m.lame_mu * t) + z * (-2.0 * m.lame_mu * n * n + m.lame_mu * t * t)
}

pub fn traction_coeffs(idx: ModeIndex, radius: f64, material: &Material, omega: f64) -> Result<TractionCoeffs> {
    if !(radius > 0.0) {
        return Err(EscatError::Domain(format!("radius must be positive, got {radius}")));
    }
    let t = radius * material.kappa(idx.mode, omega);
    let table = BesselTable::new(idx.order.unsigned_abs() as usize, t)?;
    let n = idx.order as f64;
    let (h, hp) = (table.h(idx.order), table.hp(idx.order));
    let (j, jp) = (C64::new(table.j(idx.order), 0.0), C64::new(table.jp(idx.order), 0.0));
    let out = match idx.mode {
        Mode::P => TractionCoeffs {
            B: b_pressure(n, t, h, hp, material),
            C: coupling(n, t, h, hp, material),
            B_hat: b_pressure(n, t, j, jp, material),
            C_hat: coupling(n, t, j, jp, material),
        },
        Mode::S => TractionCoeffs {
            B: coupling(n, t, h, hp, material),
            C: c_shear(n, t, h, hp, material),
            B_hat: coupling(n, t, j, jp, material),
            C_hat: c_shear(n, t, j, jp, material),
        },
    };
    Ok(out)
}
