//! Full-aperture multi-static response (MSR) acquisition on a circle and the
//! recovery of scattering coefficients from it.
//!
//! Sources sit at `x_s = R(cos θ_s, sin θ_s)` with `θ_s = 2πs/N_s`, `s = 0..N_s`,
//! and emit plane waves travelling inward, `d_s = -x̂_s`; pressure sources use
//! polarization `d_s`, shear sources `d_s^⊥ = (d_{s,2}, -d_{s,1})`. Receivers at
//! `θ_r = 2πr/N_r` record the scattered field along `d_r = x̂_r` and
//! `d_r^⊥ = ê_θ`. With these conventions `A = X W Y* + E` where `W` is the global
//! matrix of [`EscMatrix::global`].

use std::f64::consts::{E, PI};
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bie::{build_grid, TransmissionSolver};
use crate::curves::BoundaryCurve;
use crate::error::{EscatError, Result};
use crate::esc::EscMatrix;
use crate::specialfun::BesselTable;
use crate::wavefields::{
    fundamental_solution, plane_wave, plane_wave_coeffs, CVec2, Material, MaterialPair, Mode, C64,
};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsrConfig {
    pub radius: f64,
    pub sources: usize,
    pub receivers: usize,
    pub omega: f64,
    pub exterior: Material,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl MsrConfig {
    /// Acquisition circle of `wavelengths` exterior shear wavelengths.
    pub fn with_wavelengths(wavelengths: f64, sources: usize, receivers: usize, omega: f64, exterior: Material) -> Self {
        Self { radius: wavelengths * exterior.shear_wavelength(omega), sources, receivers, omega, exterior, noise_sigma: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) || !(self.omega > 0.0) {
            return Err(EscatError::InvalidInput("acquisition radius and frequency must be positive".into()));
        }
        if self.sources == 0 || self.receivers == 0 {
            return Err(EscatError::InvalidInput("need at least one source and one receiver".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(EscatError::InvalidInput("noise_sigma must be nonnegative".into()));
        }
        self.exterior.validate()
    }

    fn check_truncation(&self, truncation: usize) -> Result<()> {
        if 2 * truncation + 1 > self.sources.min(self.receivers) {
            return Err(EscatError::InvalidInput(format!(
                "truncation {truncation} needs 2K+1 ≤ min(N_s, N_r) = {}",
                self.sources.min(self.receivers)
            )));
        }
        Ok(())
    }

    pub fn source_angle(&self, s: usize) -> f64 {
        2.0 * PI * s as f64 / self.sources as f64
    }

    pub fn receiver_angle(&self, r: usize) -> f64 {
        2.0 * PI * r as f64 / self.receivers as f64
    }

    /// Incidence direction `d_s = -x̂_s`.
    pub fn source_direction(&self, s: usize) -> [f64; 2] {
        let t = self.source_angle(s);
        [-t.cos(), -t.sin()]
    }

    pub fn receiver_point(&self, r: usize) -> [f64; 2] {
        let t = self.receiver_angle(r);
        [self.radius * t.cos(), self.radius * t.sin()]
    }

    /// `(d_r, d_r^⊥) = (ê_r, ê_θ)` at receiver `r`.
    pub fn receiver_frame(&self, r: usize) -> ([f64; 2], [f64; 2]) {
        let t = self.receiver_angle(r);
        ([t.cos(), t.sin()], [-t.sin(), t.cos()])
    }
}

/// Which of the four MSR blocks: incident type (`F` pressure / `G` shear) and
/// receiver component (`d_r` / `d_r^⊥`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MsrBlock {
    ParPar,
    ParPerp,
    PerpPar,
    PerpPerp,
}

impl MsrBlock {
    pub const ALL: [MsrBlock; 4] = [MsrBlock::ParPar, MsrBlock::ParPerp, MsrBlock::PerpPar, MsrBlock::PerpPerp];

    fn offsets(self) -> (usize, usize) {
        match self {
            MsrBlock::ParPar => (0, 0),
            MsrBlock::ParPerp => (0, 1),
            MsrBlock::PerpPar => (1, 0),
            MsrBlock::PerpPerp => (1, 1),
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            MsrBlock::ParPar => "A_par_par",
            MsrBlock::ParPerp => "A_par_perp",
            MsrBlock::PerpPar => "A_perp_par",
            MsrBlock::PerpPerp => "A_perp_perp",
        }
    }
}

/// Recorded data as the `2N_s × 2N_r` global matrix `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct MsrDataset {
    pub config: MsrConfig,
    pub data: DMatrix<C64>,
}

impl MsrDataset {
    pub fn block(&self, which: MsrBlock) -> DMatrix<C64> {
        let (i, j) = which.offsets();
        let (ns, nr) = (self.config.sources, self.config.receivers);
        self.data.view((i * ns, j * nr), (ns, nr)).into_owned()
    }

    /// `s,r,re,im` rows for one block.
    pub fn write_block_csv<W: Write>(&self, which: MsrBlock, mut out: W) -> Result<()> {
        writeln!(out, "s,r,re,im")?;
        let b = self.block(which);
        for s in 0..b.nrows() {
            for r in 0..b.ncols() {
                writeln!(out, "{s},{r},{:.16e},{:.16e}", b[(s, r)].re, b[(s, r)].im)?;
            }
        }
        Ok(())
    }

    /// Rebuilds a dataset from its configuration and four block CSV readers.
    pub fn from_csv_blocks<R: BufRead>(config: MsrConfig, blocks: [(MsrBlock, R); 4]) -> Result<Self> {
        config.validate()?;
        let (ns, nr) = (config.sources, config.receivers);
        let mut data = DMatrix::from_element(2 * ns, 2 * nr, ZERO);
        let mut seen = [false; 4];
        for (which, reader) in blocks {
            let (bi, bj) = which.offsets();
            seen[2 * bi + bj] = true;
            let mut filled = vec![false; ns * nr];
            for (lineno, line) in reader.lines().enumerate().skip(1) {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let bad = || EscatError::InvalidInput(format!("{}: malformed line {}: {line:?}", which.file_stem(), lineno + 1));
                let parts: Vec<&str> = line.split(',').map(str::trim).collect();
                if parts.len() != 4 {
                    return Err(bad());
                }
                let s: usize = parts[0].parse().map_err(|_| bad())?;
                let r: usize = parts[1].parse().map_err(|_| bad())?;
                let re: f64 = parts[2].parse().map_err(|_| bad())?;
                let im: f64 = parts[3].parse().map_err(|_| bad())?;
                if s >= ns || r >= nr {
                    return Err(bad());
                }
                data[(bi * ns + s, bj * nr + r)] = C64::new(re, im);
                filled[s * nr + r] = true;
            }
            if filled.iter().any(|f| !f) {
                return Err(EscatError::InvalidInput(format!("{} is missing entries", which.file_stem())));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(EscatError::InvalidInput("all four MSR blocks are required".into()));
        }
        Ok(Self { config, data })
    }
}

/// How [`simulate_msr`] produces the scattered field.
#[derive(Debug, Clone, Copy)]
pub enum SimulationMode<'a> {
    /// Solve the transmission problem for every plane-wave source.
    Bie { n_nodes: usize },
    /// Evaluate the truncated series `X W Y*` for a given coefficient matrix.
    Expansion(&'a EscMatrix),
}

pub fn simulate_msr(curve: &BoundaryCurve, pair: &MaterialPair, config: &MsrConfig, mode: SimulationMode<'_>) -> Result<MsrDataset> {
    config.validate()?;
    if pair.exterior != config.exterior {
        return Err(EscatError::InvalidInput("acquisition exterior material differs from the scene's".into()));
    }
    match mode {
        SimulationMode::Bie { n_nodes } => simulate_bie(curve, pair, config, n_nodes),
        SimulationMode::Expansion(esc) => simulate_expansion(esc, config),
    }
}

fn simulate_bie(curve: &BoundaryCurve, pair: &MaterialPair, config: &MsrConfig, n_nodes: usize) -> Result<MsrDataset> {
    let grid = build_grid(curve, n_nodes)?;
    if (0..config.receivers).any(|r| grid.contains(config.receiver_point(r))) {
        return Err(EscatError::Domain("receivers must lie outside the inclusion".into()));
    }
    let solver = TransmissionSolver::new(&grid, pair, config.omega)?;
    let weights = grid.arc_weights();
    let (ns, nr, nodes) = (config.sources, config.receivers, grid.count());
    // Receiver rows: the components along (d_r, d_r^⊥) of Σ_k Γ(x_r, y_k) w_k ψ_k.
    let rows: Vec<Vec<[CVec2; 2]>> = (0..nr)
        .into_par_iter()
        .map(|r| {
            let x = config.receiver_point(r);
            let (dr, dp) = config.receiver_frame(r);
            (0..nodes)
                .map(|k| {
                    let g = fundamental_solution(x, grid.nodes[k], config.omega, &config.exterior)?;
                    let along = |d: [f64; 2]| {
                        [(g[0][0] * d[0] + g[1][0] * d[1]) * weights[k], (g[0][1] * d[0] + g[1][1] * d[1]) * weights[k]]
                    };
                    Ok([along(dr), along(dp)])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, Mode)> = (0..ns).flat_map(|s| Mode::BOTH.into_iter().map(move |m| (s, m))).collect();
    let columns = jobs
        .par_iter()
        .map(|&(s, mode)| {
            let d = config.source_direction(s);
            let density = solver.solve_incident(|x| Ok(plane_wave(mode, d, x, config.omega, &config.exterior)))?;
            let mut out = vec![ZERO; 2 * nr];
            for (r, row) in rows.iter().enumerate() {
                for comp in 0..2 {
                    let mut acc = ZERO;
                    for (k, psi) in density.psi.iter().enumerate() {
                        acc += row[k][comp][0] * psi[0] + row[k][comp][1] * psi[1];
                    }
                    out[comp * nr + r] = acc;
                }
            }
            Ok((s, mode, out))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = DMatrix::from_element(2 * ns, 2 * nr, ZERO);
    for (s, mode, out) in columns {
        for (j, v) in out.into_iter().enumerate() {
            data[(mode.index() * ns + s, j)] = v;
        }
    }
    Ok(MsrDataset { config: *config, data })
}

fn simulate_expansion(esc: &EscMatrix, config: &MsrConfig) -> Result<MsrDataset> {
    if esc.omega != config.omega || esc.pair.exterior != config.exterior {
        return Err(EscatError::InvalidInput("ESC matrix frequency or exterior material differs from the acquisition".into()));
    }
    let model = assemble_model(config, esc.truncation())?;
    let data = &model.x * esc.global() * model.y.adjoint();
    Ok(MsrDataset { config: *config, data })
}

/// Adds `σ(g₁ + i g₂)/√2` to every entry. Entry `j` (column-major) draws from
/// stream `j` of a ChaCha generator keyed by `seed`, so the result does not
/// depend on evaluation order.
pub fn add_noise(data: &MsrDataset, sigma: f64, seed: u64) -> Result<MsrDataset> {
    if !(sigma >= 0.0) {
        return Err(EscatError::InvalidInput(format!("noise level must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(data.clone());
    }
    let scale = sigma / 2f64.sqrt();
    let noisy: Vec<C64> = data
        .data
        .as_slice()
        .par_iter()
        .enumerate()
        .map(|(j, z)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let g1: f64 = StandardNormal.sample(&mut rng);
            let g2: f64 = StandardNormal.sample(&mut rng);
            z + C64::new(g1, g2) * scale
        })
        .collect();
    let (rows, cols) = data.data.shape();
    let mut config = data.config;
    config.noise_sigma = sigma;
    config.seed = seed;
    Ok(MsrDataset { config, data: DMatrix::from_vec(rows, cols, noisy) })
}

/// `X`, `Y` and the diagonal normalizations of the large-`R` pseudo-inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrices {
    pub truncation: usize,
    /// `2N_s × (4K+2)`, block diagonal `(X^P, X^S)` with `X^β_{s,m} = d^β_m(s)`.
    pub x: DMatrix<C64>,
    /// `2N_r × (4K+2)`, `[[Y^P_∥, Y^S_∥], [Y^P_⊥, Y^S_⊥]]`.
    pub y: DMatrix<C64>,
    /// Diagonal of `Z_X`: `|b_P|⁻²` then `|b_S|⁻²` with `b_β = (2ρ₀ωc_β)²κ_β`.
    pub z_x: Vec<f64>,
    /// Diagonal of `Z_Y`: `|g^P_n|²` then `|h^S_n|²`.
    pub z_y: Vec<f64>,
}

/// `g^α_n` and `h^α_n`: radial and tangential components of `H^α_n` at angle 0.
fn receiver_profile(config: &MsrConfig, truncation: usize) -> Result<[[Vec<C64>; 2]; 2]> {
    let k = truncation as i32;
    let mut out: [[Vec<C64>; 2]; 2] = Default::default();
    for mode in Mode::BOTH {
        let kappa = config.exterior.kappa(mode, config.omega);
        let t = BesselTable::new(truncation, kappa * config.radius)?;
        let (g, h): (Vec<C64>, Vec<C64>) = (-k..=k)
            .map(|n| {
                let tangential = I * (n as f64 / config.radius) * t.h(n);
                let radial = t.hp(n) * kappa;
                match mode {
                    Mode::P => (radial, tangential),
                    Mode::S => (tangential, -radial),
                }
            })
            .unzip();
        out[mode.index()] = [g, h];
    }
    Ok(out)
}

pub fn assemble_model(config: &MsrConfig, truncation: usize) -> Result<ModelMatrices> {
    config.validate()?;
    config.check_truncation(truncation)?;
    let (ns, nr) = (config.sources, config.receivers);
    let d = 2 * truncation + 1;
    let k = truncation as i32;
    let mut x = DMatrix::from_element(2 * ns, 2 * d, ZERO);
    let scale = I / (4.0 * config.exterior.density * config.omega * config.omega);
    for s in 0..ns {
        let coeffs = plane_wave_coeffs(config.source_direction(s), config.omega, &config.exterior, k)?;
        for beta in Mode::BOTH {
            for m in -k..=k {
                x[(beta.index() * ns + s, beta.index() * d + (m + k) as usize)] = scale * coeffs.get(beta, m);
            }
        }
    }
    let profile = receiver_profile(config, truncation)?;
    let mut y = DMatrix::from_element(2 * nr, 2 * d, ZERO);
    for r in 0..nr {
        let theta = config.receiver_angle(r);
        for alpha in Mode::BOTH {
            for n in -k..=k {
                let idx = (n + k) as usize;
                let phase = C64::from_polar(1.0, n as f64 * theta);
                let col = alpha.index() * d + idx;
                y[(r, col)] = (profile[alpha.index()][0][idx] * phase).conj();
                y[(nr + r, col)] = (profile[alpha.index()][1][idx] * phase).conj();
            }
        }
    }
    let b = |mode: Mode| {
        let c = config.exterior.speed(mode);
        (2.0 * config.exterior.density * config.omega * c).powi(2) * config.exterior.kappa(mode, config.omega)
    };
    let mut z_x = vec![b(Mode::P).powi(-2); d];
    z_x.extend(std::iter::repeat(b(Mode::S).powi(-2)).take(d));
    let mut z_y: Vec<f64> = profile[0][0].iter().map(|g| g.norm_sqr()).collect();
    z_y.extend(profile[1][1].iter().map(|h| h.norm_sqr()));
    Ok(ModelMatrices { truncation, x, y, z_x, z_y })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionMethod {
    /// The closed-form large-`R` left inverse `Z_X⁻¹ X* A Y Z_Y⁻¹ / (N_s N_r)`.
    PseudoInverse,
    /// Exact least squares `min ‖X M Y* - A‖_F`.
    Lsq,
    /// Least squares followed by alternating projection onto the reciprocity
    /// and energy constraints.
    LsqConstrained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub esc: EscMatrix,
    /// `‖X Ŵ Y* - A‖_F / ‖A‖_F`.
    pub relative_residual: f64,
}

pub fn reconstruct(data: &MsrDataset, pair: MaterialPair, truncation: usize, method: ReconstructionMethod) -> Result<Reconstruction> {
    let config = &data.config;
    let model = assemble_model(config, truncation)?;
    let (ns, nr) = (config.sources as f64, config.receivers as f64);
    let w = match method {
        ReconstructionMethod::PseudoInverse => {
            let core = model.x.adjoint() * &data.data * &model.y;
            DMatrix::from_fn(core.nrows(), core.ncols(), |i, j| core[(i, j)] / (ns * nr * model.z_x[i] * model.z_y[j]))
        }
        ReconstructionMethod::Lsq | ReconstructionMethod::LsqConstrained => {
            let w = least_squares(&model, &data.data)?;
            if method == ReconstructionMethod::LsqConstrained {
                constrain(&w, truncation, config.exterior.density, config.omega)?
            } else {
                w
            }
        }
    };
    let resid = (&model.x * &w * model.y.adjoint() - &data.data).norm();
    let a_norm = data.data.norm();
    let esc = EscMatrix::from_global(&w, config.omega, pair, None)?;
    Ok(Reconstruction { esc, relative_residual: if a_norm > 0.0 { resid / a_norm } else { resid } })
}

fn check_rank(m: &DMatrix<C64>, name: &str) -> Result<()> {
    let sv = m.clone().svd(false, false).singular_values;
    let (hi, lo) = (sv.max(), sv.min());
    if !(lo > 1e-13 * hi) {
        return Err(EscatError::Reconstruction(format!("{name} is rank deficient (σ_min/σ_max = {:.3e})", lo / hi)));
    }
    Ok(())
}

/// `M = (X*X)⁻¹ X* A Y (Y*Y)⁻¹`; the operator is a Kronecker product, so the
/// least-squares problem separates into two normal-equation solves.
fn least_squares(model: &ModelMatrices, a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    check_rank(&model.x, "X")?;
    check_rank(&model.y, "Y")?;
    let xtx = model.x.adjoint() * &model.x;
    let yty = model.y.adjoint() * &model.y;
    let left = xtx.cholesky().ok_or_else(|| EscatError::Reconstruction("X*X is not positive definite".into()))?;
    let right = yty.cholesky().ok_or_else(|| EscatError::Reconstruction("Y*Y is not positive definite".into()))?;
    let core = model.x.adjoint() * a * &model.y;
    let tmp = left.solve(&core);
    // tmp (Y*Y)⁻¹ = ((Y*Y)⁻¹ tmp*)* since Y*Y is Hermitian.
    Ok(right.solve(&tmp.adjoint()).adjoint())
}

/// Map `W^{α,β}_{m,n} ↦ (-1)^{m+n} W^{β,α}_{-n,-m}` on the global layout.
fn reciprocal(w: &DMatrix<C64>, truncation: usize) -> DMatrix<C64> {
    let d = 2 * truncation + 1;
    let k = truncation as i32;
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
        // Row i = (β, m), column j = (α, n).
        let (beta, m) = (i / d, (i % d) as i32 - k);
        let (alpha, n) = (j / d, (j % d) as i32 - k);
        let sign = if (m + n).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        // Entry of W^{β,α}_{-n,-m}: row (α, -n), column (β, -m).
        w[(alpha * d + (k - n) as usize, beta * d + (k - m) as usize)] * sign
    })
}

/// Twenty damped rounds of: average with the reciprocal image, then replace
/// `S = I + 2i W/(4ρ₀ω²)` by its nearest unitary matrix.
fn constrain(w: &DMatrix<C64>, truncation: usize, density: f64, omega: f64) -> Result<DMatrix<C64>> {
    const ROUNDS: usize = 20;
    const STEP: f64 = 0.5;
    let s = 1.0 / (4.0 * density * omega * omega);
    let n = w.nrows();
    let id = DMatrix::<C64>::identity(n, n);
    let mut cur = w.clone();
    for _ in 0..ROUNDS {
        let sym = (&cur + reciprocal(&cur, truncation)) * C64::from(0.5);
        let scat = &id + &sym * (I * 2.0 * s);
        let svd = scat.svd(true, true);
        let (u, vt) = (
            svd.u.ok_or_else(|| EscatError::Reconstruction("SVD failed".into()))?,
            svd.v_t.ok_or_else(|| EscatError::Reconstruction("SVD failed".into()))?,
        );
        let unitary_w = (u * vt - &id) / (I * 2.0 * s);
        cur = &sym + (unitary_w - &sym) * C64::from(STEP);
    }
    Ok(cur)
}

/// Singular values of `M ↦ X M Y*` in the large-`R` regime, together with
/// their numerical counterparts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularValueReport {
    pub truncation: usize,
    /// `σ_{pq} = ‖X e_p‖ ‖Y e_q‖` with the large-`R` norms
    /// `√N_s/|b_β|` and `√N_r |g^P_n|` or `√N_r |h^S_n|`, row-major over `(p, q)`.
    pub closed_form: Vec<f64>,
    /// The diagonal-block values as usually printed,
    /// `√(N_sN_r) |H'_n(κ_α R)| / (4ρ₀²ω²c_α²κ_α)`, for `p` and `q` on the same
    /// branch; `None` entries for mixed branches where no value is given.
    pub textbook: Vec<Option<f64>>,
    /// Singular values of the explicit `(4N_sN_r) × (4K+2)²` operator matrix,
    /// descending; computed for `K ≤ 6` only.
    pub numeric: Option<Vec<f64>>,
    /// `max σ / min σ` of the closed form.
    pub condition: f64,
    /// `(C_R^P K)^{K+1}` with `C_R^P = 2/(e κ_P R)`.
    pub condition_bound: f64,
}

pub fn singular_values(config: &MsrConfig, truncation: usize) -> Result<SingularValueReport> {
    let model = assemble_model(config, truncation)?;
    let d = 2 * truncation + 1;
    let k = truncation as i32;
    let (ns, nr) = (config.sources as f64, config.receivers as f64);
    let ext = &config.exterior;
    let size = 2 * d;
    let mut closed_form = Vec::with_capacity(size * size);
    let mut textbook = Vec::with_capacity(size * size);
    let tables = [
        BesselTable::new(truncation, ext.kappa(Mode::P, config.omega) * config.radius)?,
        BesselTable::new(truncation, ext.kappa(Mode::S, config.omega) * config.radius)?,
    ];
    for p in 0..size {
        for q in 0..size {
            let x_norm = (ns * model.z_x[p]).sqrt();
            let y_norm = (nr * model.z_y[q]).sqrt();
            closed_form.push(x_norm * y_norm);
            let (bp, bq) = (p / d, q / d);
            textbook.push((bp == bq).then(|| {
                let mode = if bq == 0 { Mode::P } else { Mode::S };
                let n = (q % d) as i32 - k;
                let c = ext.speed(mode);
                let kappa = ext.kappa(mode, config.omega);
                (ns * nr).sqrt() * tables[bq].hp(n).norm()
                    / (4.0 * ext.density.powi(2) * config.omega.powi(2) * c * c * kappa)
            }));
        }
    }
    let numeric = if truncation <= 6 {
        // vec(X M Y*) = (conj(Y) ⊗ X) vec(M) for column-major vec.
        let op = kronecker(&model.y.map(|z| z.conj()), &model.x);
        let mut sv: Vec<f64> = op.svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        Some(sv)
    } else {
        None
    };
    let hi = closed_form.iter().copied().fold(0.0, f64::max);
    let lo = closed_form.iter().copied().fold(f64::INFINITY, f64::min);
    let c_r = 2.0 / (E * ext.kappa(Mode::P, config.omega) * config.radius);
    Ok(SingularValueReport {
        truncation,
        closed_form,
        textbook,
        numeric,
        condition: hi / lo,
        condition_bound: (c_r * truncation as f64).powi(truncation as i32 + 1),
    })
}

fn kronecker(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// `K = max{N ≥ 1 : N^{N-1} ≤ ε·SNR}`, or 0 when even `N = 1` fails.
pub fn max_resolving_order(snr: f64, epsilon: f64) -> Result<usize> {
    if !(snr > 0.0) || !(epsilon > 0.0) {
        return Err(EscatError::InvalidInput("SNR and epsilon must be positive".into()));
    }
    let budget = (snr * epsilon).ln();
    let mut k = 0;
    for n in 1usize.. {
        let nf = n as f64;
        if (nf - 1.0) * nf.ln() <= budget + 1e-12 {
            k = n;
        } else {
            break;
        }
    }
    Ok(k)
}

/// `(|∂D|/√R) / σ_noise`.
pub fn snr_from_geometry(perimeter: f64, radius: f64, sigma_noise: f64) -> f64 {
    perimeter / radius.sqrt() / sigma_noise
}

/// Scattered field of the truncated outgoing series for a single plane wave.
pub fn expansion_field(esc: &EscMatrix, mode: Mode, direction: [f64; 2], point: [f64; 2]) -> Result<CVec2> {
    let k = esc.truncation() as i32;
    let mut coeffs = plane_wave_coeffs(direction, esc.omega, &esc.pair.exterior, k)?;
    match mode {
        Mode::P => coeffs.s.iter_mut().for_each(|z| *z = ZERO),
        Mode::S => coeffs.p.iter_mut().for_each(|z| *z = ZERO),
    }
    let gamma = crate::esc::gamma_coeffs(esc, &coeffs)?;
    gamma.scattered_field(&esc.pair, esc.omega, point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esc::compute_esc;

    fn ext() -> Material {
        Material::new(2.0, 1.0, 1.0).unwrap()
    }

    fn pair() -> MaterialPair {
        MaterialPair::new(ext(), Material::new(4.0, 2.0, 2.0).unwrap()).unwrap()
    }

    fn synthetic(truncation: usize, seed: u64) -> EscMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = EscMatrix::zeros(truncation, 1.0, pair(), None);
        let k = truncation as i32;
        for alpha in Mode::BOTH {
            for beta in Mode::BOTH {
                for m in -k..=k {
                    for n in -k..=k {
                        let a: f64 = StandardNormal.sample(&mut rng);
                        let b: f64 = StandardNormal.sample(&mut rng);
                        w.set(alpha, beta, m, n, C64::new(a, b));
                    }
                }
            }
        }
        w
    }

    #[test]
    fn fourier_identity_for_x() {
        let cfg = MsrConfig::with_wavelengths(10.0, 16, 12, 1.0, ext());
        let m = assemble_model(&cfg, 5).unwrap();
        let xtx = m.x.adjoint() * &m.x;
        let want = DMatrix::from_fn(xtx.nrows(), xtx.ncols(), |i, j| if i == j { C64::from(16.0 * m.z_x[i]) } else { ZERO });
        assert!((&xtx - want).norm() < 1e-12 * xtx.norm());
        assert!(assemble_model(&cfg, 6).is_err());
    }

    #[test]
    fn expansion_matches_gamma_series_at_receivers() {
        // The X W Y* layout reproduces the scattered field of the γ series.
        let w = synthetic(2, 3);
        let cfg = MsrConfig { radius: 7.0, sources: 6, receivers: 5, omega: 1.0, exterior: ext(), noise_sigma: 0.0, seed: 0 };
        let data = simulate_msr(&BoundaryCurve::circle(1.0), &pair(), &cfg, SimulationMode::Expansion(&w)).unwrap();
        for (s, r) in [(0, 0), (2, 3), (5, 4)] {
            for (mode, row) in [(Mode::P, s), (Mode::S, cfg.sources + s)] {
                let u = expansion_field(&w, mode, cfg.source_direction(s), cfg.receiver_point(r)).unwrap();
                let (dr, dp) = cfg.receiver_frame(r);
                let par = u[0] * dr[0] + u[1] * dr[1];
                let perp = u[0] * dp[0] + u[1] * dp[1];
                assert!((data.data[(row, r)] - par).norm() < 1e-12 * par.norm().max(1e-300));
                assert!((data.data[(row, cfg.receivers + r)] - perp).norm() < 1e-12 * perp.norm().max(1e-300));
            }
        }
    }

    #[test]
    fn lsq_round_trip_is_exact() {
        let w = synthetic(3, 11);
        let cfg = MsrConfig::with_wavelengths(3.0, 9, 11, 1.0, ext());
        let data = simulate_msr(&BoundaryCurve::circle(1.0), &pair(), &cfg, SimulationMode::Expansion(&w)).unwrap();
        let rec = reconstruct(&data, pair(), 3, ReconstructionMethod::Lsq).unwrap();
        let err = (rec.esc.global() - w.global()).norm() / w.global().norm();
        assert!(err < 1e-10, "{err}");
        assert!(rec.relative_residual < 1e-12);
    }

    #[test]
    fn noiseless_bie_disk_pseudo_inverse() {
        let p = pair();
        let curve = BoundaryCurve::circle(1.0);
        let cfg = MsrConfig::with_wavelengths(1e3, 16, 16, 1.0, ext());
        let data = simulate_msr(&curve, &p, &cfg, SimulationMode::Bie { n_nodes: 64 }).unwrap();
        let rec = reconstruct(&data, p, 3, ReconstructionMethod::PseudoInverse).unwrap();
        let direct = compute_esc(&curve, &p, 1.0, 3, 64).unwrap();
        let err = (rec.esc.global() - direct.global()).norm() / direct.global().norm();
        assert!(err < 1e-2, "{err}");
    }

    #[test]
    fn constrained_reconstruction_keeps_exact_disk_data() {
        let p = pair();
        let esc = compute_esc(&BoundaryCurve::circle(1.0), &p, 1.0, 2, 64).unwrap();
        let cfg = MsrConfig::with_wavelengths(5.0, 8, 8, 1.0, ext());
        let data = simulate_msr(&BoundaryCurve::circle(1.0), &p, &cfg, SimulationMode::Expansion(&esc)).unwrap();
        let rec = reconstruct(&data, p, 2, ReconstructionMethod::LsqConstrained).unwrap();
        let err = (rec.esc.global() - esc.global()).norm() / esc.global().norm();
        assert!(err < 1e-6, "{err}");
        let rr = reciprocal(&esc.global(), 2);
        assert!((rr - esc.global()).norm() < 1e-8 * esc.global().norm());
    }

    #[test]
    fn noise_statistics_and_determinism() {
        let cfg = MsrConfig::with_wavelengths(3.0, 200, 125, 1.0, ext());
        let clean = MsrDataset { config: cfg, data: DMatrix::from_element(400, 250, ZERO) };
        let a = add_noise(&clean, 0.3, 5).unwrap();
        let b = add_noise(&clean, 0.3, 5).unwrap();
        let c = add_noise(&clean, 0.3, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.data, c.data);
        let var = a.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / a.data.len() as f64;
        assert!((var / 0.09 - 1.0).abs() < 0.02, "{var}");
        assert_eq!(add_noise(&clean, 0.0, 1).unwrap(), clean);
    }

    #[test]
    fn singular_values_closed_form_vs_numeric() {
        let cfg = MsrConfig::with_wavelengths(1e3, 7, 7, 1.0, ext());
        let rep = singular_values(&cfg, 2).unwrap();
        let mut cf = rep.closed_form.clone();
        cf.sort_by(|a, b| b.total_cmp(a));
        let num = rep.numeric.unwrap();
        for (a, b) in cf.iter().zip(&num) {
            assert!((a - b).abs() < 0.05 * b, "{a} vs {b}");
        }
        let conds: Vec<f64> = (1..=3).map(|k| singular_values(&cfg, k).unwrap().condition).collect();
        assert!(conds.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn resolving_order_formula() {
        assert_eq!(max_resolving_order(1.0, 1.0).unwrap(), 1);
        assert_eq!(max_resolving_order(100.0, 1.0).unwrap(), 4);
        assert_eq!(max_resolving_order(10.0, 10.0).unwrap(), 4);
        assert_eq!(max_resolving_order(0.5, 1.0).unwrap(), 0);
        assert!(max_resolving_order(-1.0, 1.0).is_err());
    }

    #[test]
    fn dataset_csv_round_trip() {
        let w = synthetic(1, 2);
        let cfg = MsrConfig::with_wavelengths(2.0, 3, 4, 1.0, ext());
        let data = simulate_msr(&BoundaryCurve::circle(1.0), &pair(), &cfg, SimulationMode::Expansion(&w)).unwrap();
        let bufs: Vec<Vec<u8>> = MsrBlock::ALL
            .iter()
            .map(|b| {
                let mut v = Vec::new();
                data.write_block_csv(*b, &mut v).unwrap();
                v
            })
            .collect();
        let readers = [
            (MsrBlock::ParPar, &bufs[0][..]),
            (MsrBlock::ParPerp, &bufs[1][..]),
            (MsrBlock::PerpPar, &bufs[2][..]),
            (MsrBlock::PerpPerp, &bufs[3][..]),
        ];
        let back = MsrDataset::from_csv_blocks(cfg, readers).unwrap();
        assert_eq!(back, data);
    }
}
