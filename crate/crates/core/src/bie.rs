//! Nyström discretization of the elastic transmission problem.
//!
//! The total field is `S̃[φ]` inside the inclusion and `u^inc + S[ψ]` outside,
//! with the densities solving
//!
//! ```text
//! S̃φ - Sψ                   = u^inc
//! (1/2 + K̃*)φ - (-1/2 + K*)ψ = ∂u^inc/∂ν
//! ```
//!
//! where `K*` is the principal-value traction of the single layer. With the sign
//! convention `(L + ρω²)Γ = -δI` the traction of `S[φ]` has limits `(∓1/2 + K*)φ`
//! from outside and inside. Kernels are
//! split as `K₁(t,s) ln(4 sin²((t-s)/2)) + K₂(t,s)` and the log part goes through
//! the Kress product weights. For the traction kernel the elastostatic kernel is
//! subtracted first: its Cauchy part is integrated with the spectral Hilbert
//! weights and the dynamic-minus-static remainder is log-split like `S`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::curves::BoundaryCurve;
use crate::error::{EscatError, Result};
use crate::wavefields::{
    assemble_gamma, fundamental_solution, kernel_profiles, traction_of_profile, CMat2, CVec2, Material, MaterialPair,
    Mode, WaveSample, C64,
};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Condition estimate above which a system is reported as resonant.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Equispaced parameter nodes on a boundary curve.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    curve: BoundaryCurve,
    pub nodes: Vec<[f64; 2]>,
    pub normals: Vec<[f64; 2]>,
    /// `|x'(t_k)|`.
    pub jacobians: Vec<f64>,
    velocities: Vec<[f64; 2]>,
    accelerations: Vec<[f64; 2]>,
    curvatures: Vec<f64>,
}

impl QuadratureGrid {
    pub fn count(&self) -> usize {
        self.nodes.len()
    }

    pub fn curve(&self) -> &BoundaryCurve {
        &self.curve
    }

    /// Parameter step `2π/N`.
    pub fn weight(&self) -> f64 {
        2.0 * PI / self.count() as f64
    }

    pub fn param(&self, k: usize) -> f64 {
        k as f64 * self.weight()
    }

    /// Largest distance between consecutive nodes.
    pub fn spacing(&self) -> f64 {
        let n = self.count();
        (0..n)
            .map(|k| {
                let (a, b) = (self.nodes[k], self.nodes[(k + 1) % n]);
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .fold(0.0, f64::max)
    }

    /// Arc-length weights `|x'(t_k)| 2π/N`.
    pub fn arc_weights(&self) -> Vec<f64> {
        let w = self.weight();
        self.jacobians.iter().map(|j| j * w).collect()
    }

    pub fn perimeter(&self) -> f64 {
        self.arc_weights().iter().sum()
    }

    /// Winding number of the node polygon around `p`, rounded.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let n = self.count();
        let mut winding = 0.0;
        for k in 0..n {
            let a = [self.nodes[k][0] - p[0], self.nodes[k][1] - p[1]];
            let b = [self.nodes[(k + 1) % n][0] - p[0], self.nodes[(k + 1) % n][1] - p[1]];
            winding += (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]);
        }
        (winding / (2.0 * PI)).round() != 0.0
    }

    fn distance_to_nodes(&self, p: [f64; 2]) -> f64 {
        self.nodes.iter().map(|x| (x[0] - p[0]).hypot(x[1] - p[1])).fold(f64::INFINITY, f64::min)
    }

    /// CSV with columns `index,x,y,nx,ny,jacobian`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,x,y,nx,ny,jacobian")?;
        for k in 0..self.count() {
            let (x, n) = (self.nodes[k], self.normals[k]);
            writeln!(out, "{k},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", x[0], x[1], n[0], n[1], self.jacobians[k])?;
        }
        Ok(())
    }
}

pub fn build_grid(curve: &BoundaryCurve, n_nodes: usize) -> Result<QuadratureGrid> {
    if n_nodes % 2 != 0 {
        return Err(EscatError::InvalidInput(format!("node count must be even, got {n_nodes}")));
    }
    if n_nodes < 16 {
        return Err(EscatError::InvalidInput(format!("node count must be at least 16, got {n_nodes}")));
    }
    let mut grid = QuadratureGrid {
        curve: curve.clone(),
        nodes: Vec::with_capacity(n_nodes),
        normals: Vec::with_capacity(n_nodes),
        jacobians: Vec::with_capacity(n_nodes),
        velocities: Vec::with_capacity(n_nodes),
        accelerations: Vec::with_capacity(n_nodes),
        curvatures: Vec::with_capacity(n_nodes),
    };
    for k in 0..n_nodes {
        let p = curve.eval(2.0 * PI * k as f64 / n_nodes as f64);
        grid.nodes.push(p.x);
        grid.normals.push(p.normal());
        grid.jacobians.push(p.speed());
        grid.velocities.push(p.dx);
        grid.accelerations.push(p.ddx);
        grid.curvatures.push(p.curvature());
    }
    Ok(grid)
}

/// Interior (`phi`) and exterior (`psi`) densities at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPair {
    pub phi: Vec<CVec2>,
    pub psi: Vec<CVec2>,
}

impl DensityPair {
    /// CSV with columns `index,x,y` then real and imaginary parts of both components
    /// of `phi` and `psi`.
    pub fn write_csv<W: Write>(&self, grid: &QuadratureGrid, mut out: W) -> Result<()> {
        writeln!(out, "index,x,y,phi1_re,phi1_im,phi2_re,phi2_im,psi1_re,psi1_im,psi2_re,psi2_im")?;
        for k in 0..grid.count() {
            let (x, f, g) = (grid.nodes[k], self.phi[k], self.psi[k]);
            writeln!(
                out,
                "{k},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                x[0], x[1], f[0].re, f[0].im, f[1].re, f[1].im, g[0].re, g[0].im, g[1].re, g[1].im
            )?;
        }
        Ok(())
    }
}

/// Kress weights `R(t_j - t_k)` for `∫ ln(4 sin²((t-s)/2)) f(s) ds`, indexed by `(j - k) mod N`.
fn log_weights(n_nodes: usize) -> Vec<f64> {
    let half = n_nodes / 2;
    let nf = half as f64;
    (0..n_nodes)
        .map(|l| {
            let tau = 2.0 * PI * l as f64 / n_nodes as f64;
            let sum: f64 = (1..half).map(|m| (m as f64 * tau).cos() / m as f64).sum();
            -2.0 * PI / nf * sum - PI / (nf * nf) * (nf * tau).cos()
        })
        .collect()
}

/// Weights for `∫ ½cot((t-s)/2) g(s) ds` (principal value), indexed by `(j - k) mod N`.
fn hilbert_weights(n_nodes: usize) -> Vec<f64> {
    let w = 2.0 * PI / n_nodes as f64;
    (0..n_nodes)
        .map(|l| if l % 2 == 1 { w / (PI * l as f64 / n_nodes as f64).tan() } else { 0.0 })
        .collect()
}

/// Diagonal limits of the smooth part of `Γ = Γ₁ ln(4sin²) + Γ₂` at a node with
/// speed `|x'|`: returns `(A₂, B₂)` with `Γ₂(t,t) = A₂ I + B₂ t̂t̂ᵀ`, and the log
/// coefficient `A₁(0)` (with `Γ₁(t,t) = A₁(0) I`).
fn log_split_diagonal(material: &Material, omega: f64, speed: f64) -> (C64, C64, f64) {
    let mu = material.lame_mu;
    let kp = material.kappa(Mode::P, omega);
    let ks = material.kappa(Mode::S, omega);
    let q = (kp / ks).powi(2);
    let ls = (ks / 2.0).ln();
    let lp = (kp / 2.0).ln();
    let c0 = C64::new(1.0 + (q - 1.0) / 2.0, 0.0)
        + I * (2.0 / PI) * (ls + EULER_GAMMA)
        + I / PI * (-ls + q * lp + (q - 1.0) / 2.0 * (2.0 * EULER_GAMMA - 1.0));
    let a1_zero = -(1.0 + q) / (8.0 * PI * mu);
    let a2 = I / (4.0 * mu) * c0 + 2.0 * a1_zero * speed.ln();
    let b2 = C64::new((1.0 - q) / (4.0 * PI * mu), 0.0);
    (a2, b2, a1_zero)
}

fn scale(m: &CMat2, s: C64) -> CMat2 {
    [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]
}

fn add(a: &CMat2, b: &CMat2) -> CMat2 {
    [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
}

fn sub(a: &CMat2, b: &CMat2) -> CMat2 {
    [[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]]
}

fn real_mat(m: [[f64; 2]; 2]) -> CMat2 {
    [[m[0][0].into(), m[0][1].into()], [m[1][0].into(), m[1][1].into()]]
}

/// Discrete single layer `S` and traction operator `K*` of one material on a grid,
/// as `2N × 2N` matrices acting on densities ordered `(node, component)`.
#[derive(Debug, Clone)]
pub struct LayerOperators {
    pub single: DMatrix<C64>,
    pub traction: DMatrix<C64>,
}

impl LayerOperators {
    pub fn new(grid: &QuadratureGrid, omega: f64, material: &Material) -> Result<Self> {
        if !(omega > 0.0) {
            return Err(EscatError::Domain(format!("frequency must be positive, got {omega}")));
        }
        material.validate()?;
        let n = grid.count();
        let w = grid.weight();
        let logw = log_weights(n);
        let hilw = hilbert_weights(n);
        let lam = material.lame_lambda;
        let mu = material.lame_mu;
        let cauchy_coeff = mu / (2.0 * PI * (lam + 2.0 * mu));
        let static_coeff = 1.0 / (2.0 * PI * (lam + 2.0 * mu));
        let kelvin_b = (lam + mu) / (4.0 * PI * mu * (lam + 2.0 * mu));
        let kelvin_da = -(lam + 3.0 * mu) / (4.0 * PI * mu * (lam + 2.0 * mu));
        let rotation = real_mat([[0.0, 1.0], [-1.0, 0.0]]);

        let rows: Vec<Result<(Vec<CMat2>, Vec<CMat2>)>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let xj = grid.nodes[j];
                let nj = grid.normals[j];
                let vj = grid.velocities[j];
                let speed_j = grid.jacobians[j];
                let mut s_row = vec![[[C64::new(0.0, 0.0); 2]; 2]; n];
                let mut k_row = vec![[[C64::new(0.0, 0.0); 2]; 2]; n];
                for k in 0..n {
                    let l = (j + n - k) % n;
                    let speed_k = grid.jacobians[k];
                    if k == j {
                        let th = [vj[0] / speed_j, vj[1] / speed_j];
                        let (a2, b2, a1) = log_split_diagonal(material, omega, speed_j);
                        let g1 = assemble_gamma(a1.into(), C64::new(0.0, 0.0), th);
                        let g2 = assemble_gamma(a2, b2, th);
                        s_row[k] = scale(&add(&scale(&g1, logw[0].into()), &scale(&g2, w.into())), speed_k.into());

                        let kappa = grid.curvatures[j];
                        let smooth_static = smooth_static_kernel(kappa / 2.0, th, static_coeff, lam, mu);
                        let acc = grid.accelerations[j];
                        let g2_diag = (vj[0] * acc[0] + vj[1] * acc[1]) / (2.0 * speed_j * speed_j);
                        let cauchy_smooth = scale(&rotation, (cauchy_coeff * g2_diag / speed_j).into());
                        k_row[k] = scale(&add(&smooth_static, &cauchy_smooth), (w * speed_k).into());
                        continue;
                    }
                    let xk = grid.nodes[k];
                    let d = [xj[0] - xk[0], xj[1] - xk[1]];
                    let r = d[0].hypot(d[1]);
                    let rh = [d[0] / r, d[1] / r];
                    let (full, log) = kernel_profiles(r, omega, material)?;
                    let half_tau = PI * l as f64 / n as f64;
                    let log_sin = (4.0 * half_tau.sin().powi(2)).ln();

                    let gamma = assemble_gamma(full.a, full.b, rh);
                    let gamma1 = assemble_gamma(log.a, log.b, rh);
                    let gamma2 = sub(&gamma, &scale(&gamma1, log_sin.into()));
                    s_row[k] = scale(
                        &add(&scale(&gamma1, logw[l].into()), &scale(&gamma2, w.into())),
                        speed_k.into(),
                    );

                    let t_dyn = traction_of_profile(full.da, full.db, full.b / r, rh, nj, material);
                    let t_log = traction_of_profile(log.da, log.db, log.b / r, rh, nj, material);
                    let t_static = traction_of_profile(
                        (kelvin_da / r).into(),
                        C64::new(0.0, 0.0),
                        (kelvin_b / r).into(),
                        rh,
                        nj,
                        material,
                    );
                    let remainder = sub(&sub(&t_dyn, &t_static), &scale(&t_log, log_sin.into()));
                    let rn = (rh[0] * nj[0] + rh[1] * nj[1]) / r;
                    let smooth_static = smooth_static_kernel(rn, rh, static_coeff, lam, mu);
                    let g = (vj[0] * d[0] + vj[1] * d[1]) / (r * r);
                    let g2 = g - 0.5 / half_tau.tan();
                    let trapezoid = add(
                        &add(&remainder, &smooth_static),
                        &scale(&rotation, (cauchy_coeff * g2 / speed_j).into()),
                    );
                    let cauchy = scale(&rotation, (cauchy_coeff * hilw[l] / speed_j).into());
                    k_row[k] = scale(
                        &add(&add(&scale(&t_log, logw[l].into()), &scale(&trapezoid, w.into())), &cauchy),
                        speed_k.into(),
                    );
                }
                Ok((s_row, k_row))
            })
            .collect();

        let mut single = DMatrix::zeros(2 * n, 2 * n);
        let mut traction = DMatrix::zeros(2 * n, 2 * n);
        for (j, row) in rows.into_iter().enumerate() {
            let (s_row, k_row) = row?;
            for k in 0..n {
                for a in 0..2 {
                    for b in 0..2 {
                        single[(2 * j + a, 2 * k + b)] = s_row[k][a][b];
                        traction[(2 * j + a, 2 * k + b)] = k_row[k][a][b];
                    }
                }
            }
        }
        Ok(Self { single, traction })
    }
}

/// Non-Cauchy part of the Kelvin traction kernel,
/// `-(1/(2π(λ+2μ))) ((r̂·n)/r) (μ I + 2(λ+μ) r̂r̂ᵀ)`, given `(r̂·n)/r`.
fn smooth_static_kernel(rn_over_r: f64, rh: [f64; 2], coeff: f64, lam: f64, mu: f64) -> CMat2 {
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let delta = if i == j { mu } else { 0.0 };
            m[i][j] = -coeff * rn_over_r * (delta + 2.0 * (lam + mu) * rh[i] * rh[j]);
        }
    }
    real_mat(m)
}

fn flatten(v: &[CVec2]) -> DVector<C64> {
    DVector::from_iterator(2 * v.len(), v.iter().flat_map(|p| p.iter().copied()))
}

fn unflatten(v: &[C64]) -> Vec<CVec2> {
    v.chunks(2).map(|c| [c[0], c[1]]).collect()
}

/// Block system for `(φ, ψ)`: rows are the trace and traction transmission
/// conditions, columns the interior and exterior densities.
pub fn assemble_system(grid: &QuadratureGrid, pair: &MaterialPair, omega: f64) -> Result<DMatrix<C64>> {
    pair.validate()?;
    let ext = LayerOperators::new(grid, omega, &pair.exterior)?;
    let int = LayerOperators::new(grid, omega, &pair.interior)?;
    let m = 2 * grid.count();
    let mut sys = DMatrix::zeros(2 * m, 2 * m);
    let half = C64::new(0.5, 0.0);
    sys.view_mut((0, 0), (m, m)).copy_from(&int.single);
    sys.view_mut((0, m), (m, m)).copy_from(&(-&ext.single));
    sys.view_mut((m, 0), (m, m)).copy_from(&int.traction);
    sys.view_mut((m, m), (m, m)).copy_from(&(-&ext.traction));
    for i in 0..m {
        sys[(m + i, i)] += half;
        sys[(m + i, m + i)] += half;
    }
    Ok(sys)
}

/// Factored transmission system, reusable for many right-hand sides.
pub struct TransmissionSolver {
    grid: QuadratureGrid,
    pair: MaterialPair,
    omega: f64,
    matrix: DMatrix<C64>,
    lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

impl std::fmt::Debug for TransmissionSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransmissionSolver")
            .field("nodes", &self.grid.count())
            .field("omega", &self.omega)
            .field("condition", &self.condition)
            .finish()
    }
}

/// Per-solve diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    /// `‖A x - b‖ / ‖b‖` in the Euclidean norm.
    pub relative_residual: f64,
    /// `(‖φ‖ + ‖ψ‖) / (‖u^inc‖ + ‖∂u^inc/∂ν‖)` in the discrete L² norm.
    pub stability_ratio: f64,
}

impl TransmissionSolver {
    pub fn new(grid: &QuadratureGrid, pair: &MaterialPair, omega: f64) -> Result<Self> {
        let matrix = assemble_system(grid, pair, omega)?;
        let lu = matrix.clone().lu();
        let condition = estimate_condition(&matrix, &lu);
        log::debug!("transmission system: {} unknowns, condition estimate {condition:.3e}", matrix.nrows());
        if !(condition < CONDITION_LIMIT) {
            return Err(EscatError::Resonance {
                context: format!(
                    "transmission system at omega = {omega} is nearly singular; omega may be close to a Dirichlet eigenfrequency of the inclusion filled with the exterior material"
                ),
                condition,
            });
        }
        Ok(Self { grid: grid.clone(), pair: *pair, omega, matrix, lu, condition })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn pair(&self) -> &MaterialPair {
        &self.pair
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn solve(&self, incident_trace: &[CVec2], incident_traction: &[CVec2]) -> Result<(DensityPair, SolveReport)> {
        let n = self.grid.count();
        if incident_trace.len() != n || incident_traction.len() != n {
            return Err(EscatError::InvalidInput(format!(
                "incident data must have {n} nodes, got {} and {}",
                incident_trace.len(),
                incident_traction.len()
            )));
        }
        let mut rhs = flatten(incident_trace);
        rhs.extend(flatten(incident_traction).iter().copied());
        let x = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| EscatError::Resonance { context: "singular transmission matrix".into(), condition: f64::INFINITY })?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EscatError::Resonance { context: "non-finite densities".into(), condition: self.condition });
        }
        let residual = (&self.matrix * &x - &rhs).norm();
        let rhs_norm = rhs.norm();
        let m = 2 * n;
        let phi = unflatten(&x.as_slice()[..m]);
        let psi = unflatten(&x.as_slice()[m..]);
        let report = SolveReport {
            relative_residual: if rhs_norm > 0.0 { residual / rhs_norm } else { residual },
            stability_ratio: {
                let w = self.grid.arc_weights();
                let l2 = |v: &[CVec2]| v.iter().zip(&w).map(|(p, w)| (p[0].norm_sqr() + p[1].norm_sqr()) * w).sum::<f64>().sqrt();
                let data = l2(incident_trace) + l2(incident_traction);
                if data > 0.0 {
                    (l2(&phi) + l2(&psi)) / data
                } else {
                    0.0
                }
            },
        };
        Ok((DensityPair { phi, psi }, report))
    }

    /// Densities for an incident field given as a closure returning value and
    /// gradient in the exterior material.
    pub fn solve_incident<F>(&self, incident: F) -> Result<DensityPair>
    where
        F: Fn([f64; 2]) -> Result<WaveSample>,
    {
        let (trace, traction) = incident_data(&self.grid, &self.pair.exterior, incident)?;
        Ok(self.solve(&trace, &traction)?.0)
    }
}

/// Samples an incident field's trace and traction at the nodes.
pub fn incident_data<F>(grid: &QuadratureGrid, exterior: &Material, incident: F) -> Result<(Vec<CVec2>, Vec<CVec2>)>
where
    F: Fn([f64; 2]) -> Result<WaveSample>,
{
    let mut trace = Vec::with_capacity(grid.count());
    let mut traction = Vec::with_capacity(grid.count());
    for (x, n) in grid.nodes.iter().zip(&grid.normals) {
        let s = incident(*x)?;
        trace.push(s.value);
        traction.push(s.traction(*n, exterior));
    }
    Ok((trace, traction))
}

/// Lower estimate of the 1-norm condition number: `‖A‖₁` times the largest
/// growth `‖A⁻¹v‖₁/‖v‖₁` seen over a few seeded random vectors refined by two
/// inverse-iteration steps.
fn estimate_condition(matrix: &DMatrix<C64>, lu: &nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let n = matrix.nrows();
    let norm1 = |v: &DVector<C64>| v.iter().map(|z| z.norm()).sum::<f64>();
    let a_norm = (0..n).map(|j| matrix.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut growth: f64 = 0.0;
    for _ in 0..3 {
        let mut v = DVector::from_fn(n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        for _ in 0..3 {
            let before = norm1(&v);
            match lu.solve(&v) {
                Some(x) => {
                    let after = norm1(&x);
                    if !after.is_finite() {
                        return f64::INFINITY;
                    }
                    growth = growth.max(after / before);
                    v = x / C64::from(after);
                }
                None => return f64::INFINITY,
            }
        }
    }
    a_norm * growth
}

/// Assembles, factors and solves in one step.
pub fn solve_transmission(
    grid: &QuadratureGrid,
    pair: &MaterialPair,
    omega: f64,
    incident_trace: &[CVec2],
    incident_traction: &[CVec2],
) -> Result<DensityPair> {
    Ok(TransmissionSolver::new(grid, pair, omega)?.solve(incident_trace, incident_traction)?.0)
}

/// Off-surface single layer `S[density](target)` by the trapezoidal rule.
pub fn single_layer_apply(
    grid: &QuadratureGrid,
    omega: f64,
    material: &Material,
    density: &[CVec2],
    target: [f64; 2],
) -> Result<CVec2> {
    check_target(grid, target)?;
    let w = grid.arc_weights();
    let mut sum = [C64::new(0.0, 0.0); 2];
    for k in 0..grid.count() {
        let g = fundamental_solution(target, grid.nodes[k], omega, material)?;
        for i in 0..2 {
            sum[i] += (g[i][0] * density[k][0] + g[i][1] * density[k][1]) * w[k];
        }
    }
    Ok(sum)
}

/// Traction, for the given normal, of the off-surface single layer at `target`.
pub fn single_layer_traction(
    grid: &QuadratureGrid,
    omega: f64,
    material: &Material,
    density: &[CVec2],
    target: [f64; 2],
    normal: [f64; 2],
) -> Result<CVec2> {
    check_target(grid, target)?;
    let w = grid.arc_weights();
    let mut sum = [C64::new(0.0, 0.0); 2];
    for k in 0..grid.count() {
        let y = grid.nodes[k];
        let d = [target[0] - y[0], target[1] - y[1]];
        let r = d[0].hypot(d[1]);
        let (full, _) = kernel_profiles(r, omega, material)?;
        let t = traction_of_profile(full.da, full.db, full.b / r, [d[0] / r, d[1] / r], normal, material);
        for i in 0..2 {
            sum[i] += (t[i][0] * density[k][0] + t[i][1] * density[k][1]) * w[k];
        }
    }
    Ok(sum)
}

/// On-surface single layer at every node, with the product log quadrature.
pub fn single_layer_on_surface(
    grid: &QuadratureGrid,
    omega: f64,
    material: &Material,
    density: &[CVec2],
) -> Result<Vec<CVec2>> {
    let ops = LayerOperators::new(grid, omega, material)?;
    Ok(unflatten((&ops.single * flatten(density)).as_slice()))
}

fn check_target(grid: &QuadratureGrid, target: [f64; 2]) -> Result<()> {
    let dist = grid.distance_to_nodes(target);
    if dist == 0.0 {
        return Err(EscatError::Domain("target coincides with a quadrature node; use the on-surface rule".into()));
    }
    if dist < grid.spacing() {
        log::warn!("target {target:?} lies within one node spacing of the boundary; near-singular quadrature is inaccurate");
    }
    Ok(())
}

/// Exterior scattered field `S[ψ](target)`.
pub fn scattered_field(
    grid: &QuadratureGrid,
    psi: &[CVec2],
    omega: f64,
    material: &Material,
    target: [f64; 2],
) -> Result<CVec2> {
    if grid.contains(target) {
        return Err(EscatError::Domain(format!(
            "target {target:?} lies inside the inclusion; use interior_field with phi"
        )));
    }
    single_layer_apply(grid, omega, material, psi, target)
}

/// Interior total field `S̃[φ](target)`.
pub fn interior_field(
    grid: &QuadratureGrid,
    phi: &[CVec2],
    omega: f64,
    interior: &Material,
    target: [f64; 2],
) -> Result<CVec2> {
    if !grid.contains(target) {
        return Err(EscatError::Domain(format!("target {target:?} lies outside the inclusion")));
    }
    single_layer_apply(grid, omega, interior, phi, target)
}
