//! Elastic scattering coefficients of a single inclusion.
//!
//! `W^{α,β}_{m,n} = ∮ conj(J^α_n)·ψ^β_m dσ`, where `ψ^β_m` is the exterior
//! density produced by the incident field `J^β_m`. With this normalization the
//! scattered field is `Σ_n γ^P_n H^P_n + γ^S_n H^S_n` with
//! `γ^α_n = Σ_m Σ_β d^β_m W^{α,β}_{m,n}` and `d^β_m = i a^β_m / (4ρ₀ω²)`.
//!
//! The global matrix follows the layout used for the multi-static model:
//! block row `β` (incident), block column `α` (scattered), so
//! `W = [[W^{P,P}, W^{S,P}], [W^{P,S}, W^{S,S}]]`.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bie::{build_grid, QuadratureGrid, TransmissionSolver};
use crate::curves::{BoundaryCurve, CurveSpec};
use crate::error::{EscatError, Result};
use crate::wavefields::{
    far_field_amplitude, surface_p, surface_s, CVec2, CylWaveEvaluator, Kind, MaterialPair, Mode, PlaneWaveCoeffs,
    C64,
};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Truncated scattering-coefficient matrix, `|m|, |n| ≤ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct EscMatrix {
    truncation: usize,
    pub omega: f64,
    pub pair: MaterialPair,
    pub curve: Option<CurveSpec>,
    /// `blocks[α][β][(m + K, n + K)]`.
    blocks: [[DMatrix<C64>; 2]; 2],
}

impl EscMatrix {
    pub fn zeros(truncation: usize, omega: f64, pair: MaterialPair, curve: Option<CurveSpec>) -> Self {
        let d = 2 * truncation + 1;
        let z = || DMatrix::from_element(d, d, ZERO);
        Self { truncation, omega, pair, curve, blocks: [[z(), z()], [z(), z()]] }
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn dim(&self) -> usize {
        2 * self.truncation + 1
    }

    fn slot(&self, m: i32, n: i32) -> (usize, usize) {
        let k = self.truncation as i32;
        assert!(m.abs() <= k && n.abs() <= k, "order ({m}, {n}) outside truncation {k}");
        ((m + k) as usize, (n + k) as usize)
    }

    pub fn get(&self, alpha: Mode, beta: Mode, m: i32, n: i32) -> C64 {
        let s = self.slot(m, n);
        self.blocks[alpha.index()][beta.index()][s]
    }

    pub fn set(&mut self, alpha: Mode, beta: Mode, m: i32, n: i32, value: C64) {
        let s = self.slot(m, n);
        self.blocks[alpha.index()][beta.index()][s] = value;
    }

    /// Block `W^{α,β}` indexed `(m + K, n + K)`.
    pub fn block(&self, alpha: Mode, beta: Mode) -> &DMatrix<C64> {
        &self.blocks[alpha.index()][beta.index()]
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().flatten().flat_map(|b| b.iter()).map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.global().norm()
    }

    /// The `(4K+2)×(4K+2)` global matrix, block row `β`, block column `α`.
    pub fn global(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut g = DMatrix::from_element(2 * d, 2 * d, ZERO);
        for beta in Mode::BOTH {
            for alpha in Mode::BOTH {
                g.view_mut((beta.index() * d, alpha.index() * d), (d, d)).copy_from(self.block(alpha, beta));
            }
        }
        g
    }

    /// Inverse of [`EscMatrix::global`].
    pub fn from_global(global: &DMatrix<C64>, omega: f64, pair: MaterialPair, curve: Option<CurveSpec>) -> Result<Self> {
        let size = global.nrows();
        if size != global.ncols() || size % 2 != 0 || (size / 2) % 2 != 1 {
            return Err(EscatError::InvalidInput(format!("global ESC matrix must be (4K+2)-square, got {}×{}", size, global.ncols())));
        }
        let d = size / 2;
        let mut out = Self::zeros((d - 1) / 2, omega, pair, curve);
        for beta in Mode::BOTH {
            for alpha in Mode::BOTH {
                out.blocks[alpha.index()][beta.index()] = global.view((beta.index() * d, alpha.index() * d), (d, d)).into_owned();
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&EscFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EscFile = serde_json::from_str(text)?;
        file.into_matrix()
    }

    /// One row per entry: `m,n,block,re,im`, where `block` names `α` then `β`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "m,n,block,re,im")?;
        let k = self.truncation as i32;
        for beta in Mode::BOTH {
            for alpha in Mode::BOTH {
                let name = block_name(alpha, beta);
                for m in -k..=k {
                    for n in -k..=k {
                        let z = self.get(alpha, beta, m, n);
                        writeln!(out, "{m},{n},{name},{:.16e},{:.16e}", z.re, z.im)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn block_name(alpha: Mode, beta: Mode) -> &'static str {
    match (alpha, beta) {
        (Mode::P, Mode::P) => "PP",
        (Mode::S, Mode::P) => "SP",
        (Mode::P, Mode::S) => "PS",
        (Mode::S, Mode::S) => "SS",
    }
}

type Nested = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EscMetadata {
    truncation: usize,
    omega: f64,
    pair: MaterialPair,
    #[serde(default)]
    curve: Option<CurveSpec>,
}

/// On-disk form: metadata plus the four blocks as nested `[re, im]` arrays,
/// keyed `PP`, `SP`, `PS`, `SS` (scattered mode first).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EscFile {
    metadata: EscMetadata,
    #[serde(rename = "PP")]
    pp: Nested,
    #[serde(rename = "SP")]
    sp: Nested,
    #[serde(rename = "PS")]
    ps: Nested,
    #[serde(rename = "SS")]
    ss: Nested,
}

impl From<&EscMatrix> for EscFile {
    fn from(w: &EscMatrix) -> Self {
        let nest = |b: &DMatrix<C64>| -> Nested {
            (0..b.nrows()).map(|i| (0..b.ncols()).map(|j| [b[(i, j)].re, b[(i, j)].im]).collect()).collect()
        };
        EscFile {
            metadata: EscMetadata { truncation: w.truncation, omega: w.omega, pair: w.pair, curve: w.curve.clone() },
            pp: nest(w.block(Mode::P, Mode::P)),
            sp: nest(w.block(Mode::S, Mode::P)),
            ps: nest(w.block(Mode::P, Mode::S)),
            ss: nest(w.block(Mode::S, Mode::S)),
        }
    }
}

impl EscFile {
    fn into_matrix(self) -> Result<EscMatrix> {
        let meta = self.metadata;
        let mut w = EscMatrix::zeros(meta.truncation, meta.omega, meta.pair, meta.curve);
        let d = w.dim();
        for (alpha, beta, data) in
            [(Mode::P, Mode::P, self.pp), (Mode::S, Mode::P, self.sp), (Mode::P, Mode::S, self.ps), (Mode::S, Mode::S, self.ss)]
        {
            if data.len() != d || data.iter().any(|row| row.len() != d) {
                return Err(EscatError::InvalidInput(format!("block {} must be {d}×{d}", block_name(alpha, beta))));
            }
            for (i, row) in data.iter().enumerate() {
                for (j, z) in row.iter().enumerate() {
                    w.blocks[alpha.index()][beta.index()][(i, j)] = C64::new(z[0], z[1]);
                }
            }
        }
        Ok(w)
    }
}

/// Regular waves `J^α_n` at every node for `|n| ≤ K`, as `[node][α][n + K]`.
fn regular_waves(grid: &QuadratureGrid, pair: &MaterialPair, omega: f64, k: usize) -> Result<Vec<[Vec<(CVec2, CVec2)>; 2]>> {
    let exterior = &pair.exterior;
    grid.nodes
        .par_iter()
        .zip(grid.normals.par_iter())
        .map(|(x, normal)| {
            let eval = CylWaveEvaluator::new(Kind::Regular, *x, exterior, omega, k)?;
            let per_mode = |mode: Mode| {
                (-(k as i32)..=k as i32)
                    .map(|n| {
                        let s = eval.sample(mode, n);
                        (s.value, s.traction(*normal, exterior))
                    })
                    .collect::<Vec<_>>()
            };
            Ok([per_mode(Mode::P), per_mode(Mode::S)])
        })
        .collect()
}

/// Scattering coefficients of the inclusion bounded by `curve`, from one BIE
/// solve per incident wave `J^β_m`.
pub fn compute_esc(curve: &BoundaryCurve, pair: &MaterialPair, omega: f64, truncation: usize, n_nodes: usize) -> Result<EscMatrix> {
    let grid = build_grid(curve, n_nodes)?;
    let solver = TransmissionSolver::new(&grid, pair, omega)?;
    compute_esc_with(&solver, truncation, Some(curve.spec().clone()))
}

/// [`compute_esc`] on an already factored solver.
pub fn compute_esc_with(solver: &TransmissionSolver, truncation: usize, curve: Option<CurveSpec>) -> Result<EscMatrix> {
    let grid = solver.grid();
    let pair = *solver.pair();
    let omega = solver.omega();
    let waves = regular_waves(grid, &pair, omega, truncation)?;
    let weights = grid.arc_weights();
    let k = truncation as i32;
    let jobs: Vec<(Mode, i32)> = Mode::BOTH.iter().flat_map(|&b| (-k..=k).map(move |m| (b, m))).collect();
    let columns = jobs
        .par_iter()
        .map(|&(beta, m)| {
            let slot = (m + k) as usize;
            let trace: Vec<CVec2> = waves.iter().map(|w| w[beta.index()][slot].0).collect();
            let traction: Vec<CVec2> = waves.iter().map(|w| w[beta.index()][slot].1).collect();
            let (density, report) = solver.solve(&trace, &traction)?;
            log::debug!("ESC solve beta={beta:?} m={m}: residual {:.2e}", report.relative_residual);
            let mut row = [vec![ZERO; 2 * truncation + 1], vec![ZERO; 2 * truncation + 1]];
            for alpha in Mode::BOTH {
                for n in -k..=k {
                    let mut acc = ZERO;
                    for (node, psi) in density.psi.iter().enumerate() {
                        let j = waves[node][alpha.index()][(n + k) as usize].0;
                        acc += (j[0].conj() * psi[0] + j[1].conj() * psi[1]) * weights[node];
                    }
                    row[alpha.index()][(n + k) as usize] = acc;
                }
            }
            Ok((beta, m, row))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = EscMatrix::zeros(truncation, omega, pair, curve);
    for (beta, m, row) in columns {
        for alpha in Mode::BOTH {
            for n in -k..=k {
                out.set(alpha, beta, m, n, row[alpha.index()][(n + k) as usize]);
            }
        }
    }
    Ok(out)
}

/// Outgoing-wave coefficients `γ^P_n`, `γ^S_n` of the scattered field.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaCoeffs {
    pub truncation: usize,
    pub p: Vec<C64>,
    pub s: Vec<C64>,
}

impl GammaCoeffs {
    pub fn get(&self, mode: Mode, n: i32) -> C64 {
        let idx = (n + self.truncation as i32) as usize;
        match mode {
            Mode::P => self.p[idx],
            Mode::S => self.s[idx],
        }
    }

    /// `Σ_n γ^P_n H^P_n(x) + γ^S_n H^S_n(x)`, valid outside the circle enclosing
    /// the inclusion.
    pub fn scattered_field(&self, pair: &MaterialPair, omega: f64, point: [f64; 2]) -> Result<CVec2> {
        let k = self.truncation as i32;
        let eval = CylWaveEvaluator::new(Kind::Outgoing, point, &pair.exterior, omega, self.truncation)?;
        let mut u = [ZERO; 2];
        for n in -k..=k {
            for mode in Mode::BOTH {
                let h = eval.value(mode, n);
                let g = self.get(mode, n);
                u[0] += g * h[0];
                u[1] += g * h[1];
            }
        }
        Ok(u)
    }
}

/// `γ^α_n = Σ_m (d^P_m W^{α,P}_{m,n} + d^S_m W^{α,S}_{m,n})`, `d = i a / (4ρ₀ω²)`.
pub fn gamma_coeffs(esc: &EscMatrix, incident: &PlaneWaveCoeffs) -> Result<GammaCoeffs> {
    let k = esc.truncation as i32;
    if incident.m_max > k {
        return Err(EscatError::InvalidInput(format!(
            "incident coefficients reach order {} beyond the truncation {k}",
            incident.m_max
        )));
    }
    let scale = I / (4.0 * esc.pair.exterior.density * esc.omega * esc.omega);
    let mut out = GammaCoeffs { truncation: esc.truncation, p: vec![ZERO; esc.dim()], s: vec![ZERO; esc.dim()] };
    for n in -k..=k {
        for alpha in Mode::BOTH {
            let mut acc = ZERO;
            for m in -incident.m_max..=incident.m_max {
                for beta in Mode::BOTH {
                    acc += scale * incident.get(beta, m) * esc.get(alpha, beta, m, n);
                }
            }
            let slot = (n + k) as usize;
            match alpha {
                Mode::P => out.p[slot] = acc,
                Mode::S => out.s[slot] = acc,
            }
        }
    }
    Ok(out)
}

/// Far-field amplitudes at observation angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarFieldPattern {
    pub directions: Vec<f64>,
    pub u_p: Vec<CVec2>,
    pub u_s: Vec<CVec2>,
}

/// `u^∞_α(x̂) = Σ_n γ^α_n A^{∞,α}_n (P_n or S_n)(x̂)`.
pub fn far_field(esc: &EscMatrix, incident: &PlaneWaveCoeffs, directions: &[f64]) -> Result<FarFieldPattern> {
    let gamma = gamma_coeffs(esc, incident)?;
    let k = esc.truncation as i32;
    let ext = &esc.pair.exterior;
    let (kp, ks) = (ext.kappa(Mode::P, esc.omega), ext.kappa(Mode::S, esc.omega));
    let mut u_p = Vec::with_capacity(directions.len());
    let mut u_s = Vec::with_capacity(directions.len());
    for &theta in directions {
        let mut p = [ZERO; 2];
        let mut s = [ZERO; 2];
        for n in -k..=k {
            let cp = gamma.get(Mode::P, n) * far_field_amplitude(Mode::P, n, kp);
            let cs = gamma.get(Mode::S, n) * far_field_amplitude(Mode::S, n, ks);
            let (bp, bs) = (surface_p(n, theta), surface_s(n, theta));
            for i in 0..2 {
                p[i] += cp * bp[i];
                s[i] += cs * bs[i];
            }
        }
        u_p.push(p);
        u_s.push(s);
    }
    Ok(FarFieldPattern { directions: directions.to_vec(), u_p, u_s })
}

/// Residuals of the energy identity for the truncated matrix, normalized by
/// `‖W‖_F` (zero for the zero matrix).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalReport {
    /// `‖W conj(W)/(4ρ₀ω²) + Im W‖_F`, the identity as usually stated.
    pub literal: f64,
    /// `‖W W*/(4ρ₀ω²) - (W - W*)/(2i)‖_F`, which is what energy conservation
    /// gives in this basis.
    pub adjoint_form: f64,
}

pub fn verify_optical(esc: &EscMatrix) -> OpticalReport {
    let w = esc.global();
    let norm = w.norm();
    if norm == 0.0 {
        return OpticalReport { literal: 0.0, adjoint_form: 0.0 };
    }
    let scale = 1.0 / (4.0 * esc.pair.exterior.density * esc.omega * esc.omega);
    let conj = w.map(|z| z.conj());
    let im = w.map(|z| C64::new(z.im, 0.0));
    let literal = ((&w * &conj) * C64::from(scale) + im).norm() / norm;
    let adj = w.adjoint();
    let adjoint_form = ((&w * &adj) * C64::from(scale) - (&w - &adj) / (2.0 * I)).norm() / norm;
    OpticalReport { literal, adjoint_form }
}

/// Symmetry defects, each the largest entry defect divided by `max|W|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    /// `W^{α,β}_{m,n} = conj(W^{β,α}_{n,m})`.
    pub hermitian: f64,
    /// `W^{α,β}_{-m,-n} = (-1)^{m+n} conj(W^{α,β}_{m,n})`.
    pub parity: f64,
    /// `W^{α,β}_{m,n} = (-1)^{m+n} W^{β,α}_{-n,-m}`, the relation reciprocity
    /// actually yields for this basis.
    pub reciprocity: f64,
}

pub fn verify_symmetries(esc: &EscMatrix) -> SymmetryReport {
    let scale = esc.max_abs();
    if scale == 0.0 {
        return SymmetryReport { hermitian: 0.0, parity: 0.0, reciprocity: 0.0 };
    }
    let k = esc.truncation as i32;
    let (mut herm, mut par, mut rec) = (0.0f64, 0.0f64, 0.0f64);
    for alpha in Mode::BOTH {
        for beta in Mode::BOTH {
            for m in -k..=k {
                for n in -k..=k {
                    let w = esc.get(alpha, beta, m, n);
                    let sign = if (m + n).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                    herm = herm.max((w - esc.get(beta, alpha, n, m).conj()).norm());
                    par = par.max((esc.get(alpha, beta, -m, -n) - esc.get(alpha, beta, m, n).conj() * sign).norm());
                    rec = rec.max((w - esc.get(beta, alpha, -n, -m) * sign).norm());
                }
            }
        }
    }
    SymmetryReport { hermitian: herm / scale, parity: par / scale, reciprocity: rec / scale }
}

/// `max_{max(|m|,|n|) = k} |W|` for `k = 0..=K` and the fitted constant `C` of
/// the bound `|W_{k,k}| ≲ C^{2k-2} / k^{2k-2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub orders: Vec<usize>,
    pub max_abs: Vec<f64>,
    /// Least-squares fit over `k ≥ 2` with a nonzero profile; `None` when
    /// fewer than two such points exist.
    pub decay_constant: Option<f64>,
    /// Ratio of the last two profile entries times the last entry: a crude
    /// size estimate for the first neglected shell.
    pub tail_estimate: f64,
}

pub fn decay_profile(esc: &EscMatrix) -> DecayProfile {
    let k = esc.truncation as i32;
    let mut max_abs = vec![0.0f64; esc.truncation + 1];
    for alpha in Mode::BOTH {
        for beta in Mode::BOTH {
            for m in -k..=k {
                for n in -k..=k {
                    let shell = m.unsigned_abs().max(n.unsigned_abs()) as usize;
                    max_abs[shell] = max_abs[shell].max(esc.get(alpha, beta, m, n).norm());
                }
            }
        }
    }
    let pts: Vec<(f64, f64)> = max_abs
        .iter()
        .enumerate()
        .filter(|(k, v)| *k >= 2 && **v > 0.0)
        .map(|(k, v)| {
            let kf = k as f64;
            (2.0 * kf - 2.0, v.ln() + (2.0 * kf - 2.0) * kf.ln())
        })
        .collect();
    let decay_constant = (pts.len() >= 2).then(|| crate::cloak::fit_slope(&pts).exp());
    let tail_estimate = match max_abs.len() {
        n if n >= 2 && max_abs[n - 2] > 0.0 => max_abs[n - 1] * max_abs[n - 1] / max_abs[n - 2],
        _ => 0.0,
    };
    DecayProfile { orders: (0..=esc.truncation).collect(), max_abs, decay_constant, tail_estimate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bie;
    use crate::cloak::analytic_disk_esc;
    use crate::wavefields::{plane_wave, plane_wave_coeffs, Material};

    fn pair() -> MaterialPair {
        MaterialPair::new(Material::new(2.0, 1.0, 1.0).unwrap(), Material::new(4.0, 2.0, 2.0).unwrap()).unwrap()
    }

    #[test]
    fn disk_matches_transfer_matrix_route() {
        let p = pair();
        let omega = 1.0;
        let w = compute_esc(&BoundaryCurve::circle(1.0), &p, omega, 4, 96).unwrap();
        let scale = w.max_abs();
        for m in -4..=4 {
            let exact = analytic_disk_esc(&p, 1.0, omega, m).unwrap();
            for alpha in Mode::BOTH {
                for beta in Mode::BOTH {
                    let got = w.get(alpha, beta, m, m);
                    let want = exact.get(alpha, beta);
                    assert!((got - want).norm() <= 1e-8 * want.norm().max(1e-6 * scale), "m={m} {alpha:?}{beta:?}: {got} vs {want}");
                }
                for n in -4..=4 {
                    if n != m {
                        for beta in Mode::BOTH {
                            assert!(w.get(alpha, beta, m, n).norm() < 1e-9 * scale);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn gamma_expansion_matches_pointwise_field() {
        let p = pair();
        let omega = 1.2;
        let curve = BoundaryCurve::ellipse(1.0, 0.7);
        let grid = bie::build_grid(&curve, 96).unwrap();
        let solver = TransmissionSolver::new(&grid, &p, omega).unwrap();
        let esc = compute_esc_with(&solver, 12, Some(curve.spec().clone())).unwrap();
        let d = [0.6f64, 0.8];
        let coeffs = plane_wave_coeffs(d, omega, &p.exterior, 12).unwrap();
        let gamma = gamma_coeffs(&esc, &coeffs).unwrap();
        let dens = solver
            .solve_incident(|x| {
                let a = plane_wave(Mode::P, d, x, omega, &p.exterior);
                let b = plane_wave(Mode::S, d, x, omega, &p.exterior);
                let mut s = a;
                for i in 0..2 {
                    s.value[i] += b.value[i];
                    for j in 0..2 {
                        s.grad[i][j] += b.grad[i][j];
                    }
                }
                Ok(s)
            })
            .unwrap();
        for target in [[4.0, 1.0], [-2.0, -3.5]] {
            let direct = bie::scattered_field(&grid, &dens.psi, omega, &p.exterior, target).unwrap();
            let series = gamma.scattered_field(&p, omega, target).unwrap();
            let err = ((direct[0] - series[0]).norm_sqr() + (direct[1] - series[1]).norm_sqr()).sqrt();
            let size = (direct[0].norm_sqr() + direct[1].norm_sqr()).sqrt();
            assert!(err < 1e-8 * size, "{err} vs {size}");
        }
    }

    #[test]
    fn gamma_is_linear_and_isolates_columns() {
        let p = pair();
        let esc = compute_esc(&BoundaryCurve::ellipse(1.0, 0.6), &p, 0.9, 3, 64).unwrap();
        let mut single = PlaneWaveCoeffs::zeros(3);
        single.p[3] = C64::new(1.0, 0.0);
        let g = gamma_coeffs(&esc, &single).unwrap();
        let scale = I / (4.0 * p.exterior.density * 0.81);
        for n in -3..=3 {
            assert!((g.get(Mode::S, n) - scale * esc.get(Mode::S, Mode::P, 0, n)).norm() < 1e-15);
        }
        let a = plane_wave_coeffs([1.0, 0.0], 0.9, &p.exterior, 3).unwrap();
        let b = plane_wave_coeffs([0.0, -1.0], 0.9, &p.exterior, 3).unwrap();
        let mut sum = a.clone();
        for i in 0..7 {
            sum.p[i] = a.p[i] * 2.0 + b.p[i];
            sum.s[i] = a.s[i] * 2.0 + b.s[i];
        }
        let (ga, gb, gs) = (gamma_coeffs(&esc, &a).unwrap(), gamma_coeffs(&esc, &b).unwrap(), gamma_coeffs(&esc, &sum).unwrap());
        for i in 0..7 {
            assert!((gs.p[i] - (ga.p[i] * 2.0 + gb.p[i])).norm() < 1e-12 * gs.p[i].norm().max(1e-30));
        }
        let zero = EscMatrix::zeros(3, 0.9, p, None);
        assert!(gamma_coeffs(&zero, &a).unwrap().p.iter().all(|z| *z == ZERO));
        assert!(gamma_coeffs(&EscMatrix::zeros(1, 0.9, p, None), &a).is_err());
    }

    #[test]
    fn far_field_polarization_and_reciprocity() {
        let p = pair();
        let omega = 1.0;
        let esc = compute_esc(&BoundaryCurve::kite(0.6), &p, omega, 12, 128).unwrap();
        let theta_x: f64 = 0.7;
        let theta_d: f64 = 2.3;
        // u^∞_P(x̂; d̂, P) against u^∞_P(-d̂; -x̂, P), both from pure P incidence.
        let p_only = |dir: f64| {
            let mut c = plane_wave_coeffs([dir.cos(), dir.sin()], omega, &p.exterior, 12).unwrap();
            c.s.iter_mut().for_each(|z| *z = ZERO);
            c
        };
        let f1 = far_field(&esc, &p_only(theta_d), &[theta_x]).unwrap();
        let f2 = far_field(&esc, &p_only(theta_x + std::f64::consts::PI), &[theta_d + std::f64::consts::PI]).unwrap();
        let radial = |u: CVec2, th: f64| u[0] * th.cos() + u[1] * th.sin();
        let a = radial(f1.u_p[0], theta_x);
        let b = radial(f2.u_p[0], theta_d + std::f64::consts::PI);
        assert!((a - b).norm() < 1e-7 * a.norm(), "{a} vs {b}");
        let tangential = f1.u_p[0][0] * (-theta_x.sin()) + f1.u_p[0][1] * theta_x.cos();
        assert!(tangential.norm() < 1e-15 * a.norm().max(1.0));
    }

    #[test]
    fn symmetry_and_energy_reports() {
        let p = pair();
        let omega = 1.0;
        let esc = compute_esc(&BoundaryCurve::kite(0.6), &p, omega, 8, 128).unwrap();
        let sym = verify_symmetries(&esc);
        assert!(sym.reciprocity < 1e-8, "{sym:?}");
        // The conjugate-symmetric forms do not hold for this basis.
        assert!(sym.hermitian > 1e-3 && sym.parity > 1e-3, "{sym:?}");
        let opt = verify_optical(&esc);
        assert!(opt.adjoint_form < 1e-6, "{opt:?}");
        assert!(opt.literal > 1e-3, "{opt:?}");

        let zero = EscMatrix::zeros(2, 1.0, p, None);
        assert_eq!(verify_symmetries(&zero).hermitian, 0.0);
        assert_eq!(verify_optical(&zero).literal, 0.0);
    }

    #[test]
    fn dissipation_breaks_energy_identity() {
        // A fabricated matrix with a purely imaginary absorptive part fails the
        // identity while a lossless disk passes.
        let p = pair();
        let omega = 1.0;
        let mut w = EscMatrix::zeros(1, omega, p, None);
        for m in -1..=1 {
            let b = analytic_disk_esc(&p, 1.0, omega, m).unwrap();
            for alpha in Mode::BOTH {
                for beta in Mode::BOTH {
                    w.set(alpha, beta, m, m, b.get(alpha, beta));
                }
            }
        }
        let clean = verify_optical(&w).adjoint_form;
        assert!(clean < 1e-10);
        let z = w.get(Mode::P, Mode::P, 0, 0);
        w.set(Mode::P, Mode::P, 0, 0, z * 0.9);
        assert!(verify_optical(&w).adjoint_form > 1e3 * clean.max(1e-14));
    }

    #[test]
    fn decay_profile_of_disk() {
        let esc = compute_esc(&BoundaryCurve::circle(1.0), &pair(), 1.0, 8, 96).unwrap();
        let prof = decay_profile(&esc);
        assert!(prof.max_abs[2..].windows(2).all(|w| w[1] < w[0]), "{:?}", prof.max_abs);
        let c = prof.decay_constant.unwrap();
        assert!(c.is_finite() && c > 0.0);
        let bounded: Vec<f64> = (4..=8).map(|k| prof.max_abs[k] * (k as f64).powi(2 * k as i32 - 2) / c.powi(2 * k as i32 - 2)).collect();
        let (lo, hi) = bounded.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(hi / lo < 1e3, "{bounded:?}");
        let zero = decay_profile(&EscMatrix::zeros(3, 1.0, pair(), None));
        assert!(zero.max_abs.iter().all(|v| *v == 0.0) && zero.decay_constant.is_none());
    }

    #[test]
    fn global_and_file_round_trips() {
        let p = pair();
        let esc = compute_esc(&BoundaryCurve::ellipse(1.0, 0.8), &p, 0.7, 2, 48).unwrap();
        let g = esc.global();
        assert_eq!(g[(0, 5)], esc.get(Mode::S, Mode::P, -2, -2));
        let back = EscMatrix::from_global(&g, esc.omega, p, esc.curve.clone()).unwrap();
        assert_eq!(back, esc);
        let json = esc.to_json().unwrap();
        assert_eq!(EscMatrix::from_json(&json).unwrap(), esc);
        let mut csv = Vec::new();
        esc.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * 25);
        assert!(text.lines().nth(1).unwrap().starts_with("-2,-2,PP,"));
    }

    #[test]
    fn near_zero_contrast_is_small() {
        let e = Material::new(2.0, 1.0, 1.0).unwrap();
        let tiny = MaterialPair::new(e, Material::new(2.0 * (1.0 + 1e-6), 1.0 + 1e-6, 1.0 + 1e-6).unwrap()).unwrap();
        let w = compute_esc(&BoundaryCurve::circle(1.0), &tiny, 1.0, 2, 64).unwrap();
        let reference = compute_esc(&BoundaryCurve::circle(1.0), &pair(), 1.0, 2, 64).unwrap();
        assert!(w.frobenius() <= 1e-4 * reference.frobenius());
    }
}
