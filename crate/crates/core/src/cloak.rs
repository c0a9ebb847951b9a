//! Concentric layered structures: transfer matrices, their scattering
//! coefficients, the analytic penetrable disk, and numerical design of coats
//! that suppress the leading coefficients of a traction-free cavity.
//!
//! For a rotationally invariant structure only `W_{n,n}` survives, written here
//! as a 2×2 [`ModeBlock`] per order. In each annulus the field of order `n` is
//! `â^P J^P_n + â^S J^S_n + a^P H^P_n + a^S H^S_n`; the [`layer_matrix`] maps these
//! four coefficients to the scaled traces `(r u_r, r u_θ, r² t_r, r² t_θ)`.

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EscatError, Result};
use crate::neldermead::{self, NelderMeadOptions};
use crate::specialfun::BesselTable;
use crate::wavefields::{traction_coeffs, Material, MaterialPair, Mode, ModeIndex, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Relative determinant below which an (equilibrated) matrix counts as singular.
const SINGULAR_DET: f64 = 1e-12;

/// Diagonal scattering block of order `n`, `W_n^{α,β} = W^{α,β}_{n,n}`, indexed
/// `[α][β]` with α the scattered mode and β the incident mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeBlock(pub [[C64; 2]; 2]);

impl ModeBlock {
    pub fn get(&self, alpha: Mode, beta: Mode) -> C64 {
        self.0[alpha.index()][beta.index()]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    fn masked_sq(&self, mask: CloakMask) -> f64 {
        let mut s = 0.0;
        for beta in Mode::BOTH {
            if mask.includes(beta) {
                for alpha in Mode::BOTH {
                    s += self.get(alpha, beta).norm_sqr();
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnerRegion {
    /// Traction-free hole.
    Cavity,
    Solid { material: Material },
}

/// Concentric annuli between `radii[j]` and `radii[j+1]` filled with `layers[j]`,
/// the exterior material outside `radii[0]`, and the inner region inside the
/// last radius. `radii.len() == layers.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayeredStructure {
    pub radii: Vec<f64>,
    pub layers: Vec<Material>,
    pub exterior: Material,
    pub inner: InnerRegion,
}

impl LayeredStructure {
    /// Traction-free cavity of the given radius with no coating.
    pub fn bare_cavity(radius: f64, exterior: Material) -> Self {
        Self { radii: vec![radius], layers: vec![], exterior, inner: InnerRegion::Cavity }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.len() != self.layers.len() + 1 {
            return Err(EscatError::InvalidInput(format!(
                "{} layers need {} radii, got {}",
                self.layers.len(),
                self.layers.len() + 1,
                self.radii.len()
            )));
        }
        if self.radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(EscatError::InvalidInput("radii must be positive".into()));
        }
        if self.radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(EscatError::InvalidInput("radii must be strictly decreasing".into()));
        }
        self.exterior.validate()?;
        for m in &self.layers {
            m.validate()?;
        }
        if let InnerRegion::Solid { material } = &self.inner {
            material.validate()?;
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }
}

/// Transfer matrix of order `n` at radius `r`: columns `J^P, J^S, H^P, H^S`,
/// rows `r u·ê_r, r u·ê_θ, r² t·ê_r, r² t·ê_θ`, all stripped of `e^{inθ}`.
pub fn layer_matrix(n: i32, r: f64, material: &Material, omega: f64) -> Result<Matrix4<C64>> {
    if !(r > 0.0) || !(omega > 0.0) {
        return Err(EscatError::Domain(format!("radius and frequency must be positive, got r = {r}, omega = {omega}")));
    }
    let tp = r * material.kappa(Mode::P, omega);
    let ts = r * material.kappa(Mode::S, omega);
    let order = n.unsigned_abs() as usize;
    let bp = BesselTable::new(order, tp)?;
    let bs = BesselTable::new(order, ts)?;
    let nf = n as f64;
    let cp = traction_coeffs(ModeIndex::new(Mode::P, n), r, material, omega)?;
    let cs = traction_coeffs(ModeIndex::new(Mode::S, n), r, material, omega)?;
    let jp = C64::from(bp.j(n));
    let djp = C64::from(bp.jp(n));
    let js = C64::from(bs.j(n));
    let djs = C64::from(bs.jp(n));
    let (hp, dhp) = (bp.h(n), bp.hp(n));
    let (hs, dhs) = (bs.h(n), bs.hp(n));
    Ok(Matrix4::new(
        djp * tp,
        I * nf * js,
        dhp * tp,
        I * nf * hs,
        I * nf * jp,
        -djs * ts,
        I * nf * hp,
        -dhs * ts,
        cp.B_hat,
        cs.B_hat,
        cp.B,
        cs.B,
        cp.C_hat,
        cs.C_hat,
        cp.C,
        cs.C,
    ))
}

/// |det| after scaling every column and then every row to unit max-norm; small
/// values flag near-singular matrices independently of the wildly different
/// column scales at low frequency.
fn equilibrated_det4(m: &Matrix4<C64>) -> f64 {
    let mut a = *m;
    for j in 0..4 {
        let s = a.column(j).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if s > 0.0 {
            a.column_mut(j).unscale_mut(s);
        }
    }
    for i in 0..4 {
        let s = a.row(i).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if s > 0.0 {
            a.row_mut(i).unscale_mut(s);
        }
    }
    a.determinant().norm()
}

fn invert_guarded(m: &Matrix4<C64>, what: impl FnOnce() -> String) -> Result<Matrix4<C64>> {
    let det = equilibrated_det4(m);
    if !(det > SINGULAR_DET) {
        return Err(EscatError::Resonance { context: what(), condition: 1.0 / det });
    }
    m.try_inverse().ok_or_else(|| EscatError::Resonance { context: what(), condition: f64::INFINITY })
}

/// The 4×4 system matrix `Q^(n)` whose top two rows vanish; its bottom rows
/// `[Q21 Q22]` relate incident (`â_0`) and scattered (`a_0`) coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QMatrix {
    pub q: Matrix4<C64>,
}

impl QMatrix {
    pub fn q21(&self) -> Matrix2<C64> {
        self.q.fixed_view::<2, 2>(2, 0).into_owned()
    }

    pub fn q22(&self) -> Matrix2<C64> {
        self.q.fixed_view::<2, 2>(2, 2).into_owned()
    }
}

/// `Q = M_{L+1}(r_{L+1}) T_L ⋯ T_1` with `T_j = M_j(r_j)⁻¹ M_{j-1}(r_j)`: the
/// coefficients are carried inward from the exterior and the inner condition is
/// applied last. For a cavity `M_{L+1}` keeps the traction rows of the innermost
/// layer's matrix; for a solid core the inner field has no `H` part, so the
/// last two rows of `M_core⁻¹ M_L T_L ⋯ T_1` must vanish.
pub fn propagate_q(structure: &LayeredStructure, omega: f64, n: i32) -> Result<QMatrix> {
    structure.validate()?;
    let mut transfer = Matrix4::<C64>::identity();
    let mut outer = structure.exterior;
    for (j, layer) in structure.layers.iter().enumerate() {
        let r = structure.radii[j];
        let inner_m = layer_matrix(n, r, layer, omega)?;
        let inv = invert_guarded(&inner_m, || format!("layer {} matrix at r = {r}, order {n}", j + 1))?;
        transfer = inv * layer_matrix(n, r, &outer, omega)? * transfer;
        outer = *layer;
    }
    let r_last = *structure.radii.last().expect("validated radii");
    let mut q = Matrix4::<C64>::zeros();
    match &structure.inner {
        InnerRegion::Cavity => {
            let m = layer_matrix(n, r_last, &outer, omega)? * transfer;
            q.fixed_view_mut::<2, 4>(2, 0).copy_from(&m.fixed_view::<2, 4>(2, 0));
        }
        InnerRegion::Solid { material } => {
            let core = layer_matrix(n, r_last, material, omega)?;
            let inv = invert_guarded(&core, || format!("core matrix at r = {r_last}, order {n}"))?;
            let m = inv * layer_matrix(n, r_last, &outer, omega)? * transfer;
            q.fixed_view_mut::<2, 4>(2, 0).copy_from(&m.fixed_view::<2, 4>(2, 0));
        }
    }
    Ok(QMatrix { q })
}

/// `W_n` of a layered structure: with unit incident `J^β_n` the scattered
/// coefficients are `a = -Q22⁻¹ Q21 e_β` and `W^{α,β}_n = -4iρ₀ω² a_α`.
///
/// The coefficients come from one equilibrated interface system rather than
/// the product in [`propagate_q`]. At low frequency `J^P_n` and `J^S_n` (and
/// likewise the `H` pair) approach the same static field, and chaining the
/// inverses of nearly singular layer matrices destroys all accuracy for
/// `n ≥ 2` well above `ω = 10⁻³`; the global solve keeps the error near
/// `ε_mach / (κr)²`.
pub fn layered_esc(structure: &LayeredStructure, omega: f64, n: i32) -> Result<ModeBlock> {
    structure.validate()?;
    let (mut a, mut rhs) = interface_system(structure, omega, n)?;
    let size = a.nrows();
    let mut col_scale = vec![1.0; size];
    for (j, cs) in col_scale.iter_mut().enumerate() {
        let s = a.column(j).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if s > 0.0 {
            *cs = s;
            a.column_mut(j).unscale_mut(s);
        }
    }
    for i in 0..size {
        let s = a.row(i).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if s > 0.0 {
            a.row_mut(i).unscale_mut(s);
            rhs.row_mut(i).unscale_mut(s);
        }
    }
    let resonance = |condition: f64| EscatError::Resonance {
        context: format!("interface system of order {n} at omega = {omega}"),
        condition,
    };
    let inv = a.clone().try_inverse().ok_or_else(|| resonance(f64::INFINITY))?;
    let one_norm = |m: &DMatrix<C64>| (0..m.ncols()).map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let condition = one_norm(&a) * one_norm(&inv);
    if !(condition < INTERFACE_CONDITION_LIMIT) {
        return Err(resonance(condition));
    }
    let x = a.lu().solve(&rhs).ok_or_else(|| resonance(f64::INFINITY))?;
    let mut scattered = Matrix2::<C64>::zeros();
    for alpha in 0..2 {
        for beta in 0..2 {
            scattered[(alpha, beta)] = x[(alpha, beta)] / col_scale[alpha];
        }
    }
    Ok(coefficients_to_block(&scattered, structure.exterior.density, omega))
}

/// Above this 1-norm condition number (after equilibration) the interface
/// solve is treated as a breakdown. For real `ω > 0` the system is never
/// exactly singular, so only floating-point collapse trips it.
const INTERFACE_CONDITION_LIMIT: f64 = 1e14;

/// Interface conditions for all media at once. Unknowns: the exterior `H`
/// coefficients (2), four per layer, and the core's `J` coefficients (2) for a
/// solid inner region. The right-hand side holds one column per incident `J^β`.
fn interface_system(structure: &LayeredStructure, omega: f64, n: i32) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let layers = structure.layers.len();
    let core = matches!(structure.inner, InnerRegion::Solid { .. });
    let size = 2 + 4 * layers + if core { 2 } else { 0 };
    let mut a = DMatrix::<C64>::zeros(size, size);
    let mut rhs = DMatrix::<C64>::zeros(size, 2);
    let media: Vec<Material> = std::iter::once(structure.exterior).chain(structure.layers.iter().copied()).collect();
    // Adds `sign · M_j(r)` restricted to `rows` of the layer matrix, written
    // from equation row `at` on.
    let place = |a: &mut DMatrix<C64>, rhs: &mut DMatrix<C64>, medium: usize, r: f64, sign: f64, rows: std::ops::Range<usize>, at: usize| -> Result<()> {
        let m = layer_matrix(n, r, &media[medium], omega)?;
        for (k, i) in rows.enumerate() {
            if medium == 0 {
                for c in 0..2 {
                    a[(at + k, c)] += m[(i, 2 + c)] * sign;
                    rhs[(at + k, c)] -= m[(i, c)] * sign;
                }
            } else {
                let base = 2 + 4 * (medium - 1);
                for c in 0..4 {
                    a[(at + k, base + c)] += m[(i, c)] * sign;
                }
            }
        }
        Ok(())
    };
    for j in 0..layers {
        let r = structure.radii[j];
        place(&mut a, &mut rhs, j, r, 1.0, 0..4, 4 * j)?;
        place(&mut a, &mut rhs, j + 1, r, -1.0, 0..4, 4 * j)?;
    }
    let r_last = structure.radii[layers];
    let row = 4 * layers;
    match &structure.inner {
        InnerRegion::Cavity => place(&mut a, &mut rhs, layers, r_last, 1.0, 2..4, row)?,
        InnerRegion::Solid { material } => {
            place(&mut a, &mut rhs, layers, r_last, 1.0, 0..4, row)?;
            let m = layer_matrix(n, r_last, material, omega)?;
            for i in 0..4 {
                for c in 0..2 {
                    a[(row + i, size - 2 + c)] -= m[(i, c)];
                }
            }
        }
    }
    Ok((a, rhs))
}

/// Entry `[α][β]` of `c` is the `H^α` coefficient scattered by a unit `J^β`.
fn coefficients_to_block(c: &Matrix2<C64>, density: f64, omega: f64) -> ModeBlock {
    let factor = -I * (4.0 * density * omega * omega);
    ModeBlock([[c[(0, 0)] * factor, c[(0, 1)] * factor], [c[(1, 0)] * factor, c[(1, 1)] * factor]])
}

/// `W_n` of a homogeneous disk of radius `radius` by matching the interior
/// `J`-field and the exterior incident-plus-scattered field at the interface.
pub fn analytic_disk_esc(pair: &MaterialPair, radius: f64, omega: f64, n: i32) -> Result<ModeBlock> {
    pair.validate()?;
    let outside = layer_matrix(n, radius, &pair.exterior, omega)?;
    let inside = layer_matrix(n, radius, &pair.interior, omega)?;
    // Unknowns (b_P, b_S, c_P, c_S): inside·(b, 0) - outside·(0, c) = outside·(e_β, 0).
    let mut system = Matrix4::<C64>::zeros();
    system.fixed_view_mut::<4, 2>(0, 0).copy_from(&inside.fixed_view::<4, 2>(0, 0));
    system.fixed_view_mut::<4, 2>(0, 2).copy_from(&(-outside.fixed_view::<4, 2>(0, 2)));
    let det = equilibrated_det4(&system);
    if !(det > SINGULAR_DET) {
        return Err(EscatError::Resonance {
            context: format!("disk interface system of order {n} at omega = {omega}"),
            condition: 1.0 / det,
        });
    }
    let lu = system.lu();
    let mut c = Matrix2::<C64>::zeros();
    for beta in 0..2 {
        let rhs: Vector4<C64> = outside.column(beta).into_owned();
        let x = lu
            .solve(&rhs)
            .ok_or_else(|| EscatError::Resonance { context: "disk interface system".into(), condition: f64::INFINITY })?;
        c[(0, beta)] = x[2];
        c[(1, beta)] = x[3];
    }
    Ok(coefficients_to_block(&c, pair.exterior.density, omega))
}

/// Which incident modes the design objective penalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloakMask {
    #[default]
    Both,
    PressureOnly,
    ShearOnly,
}

impl CloakMask {
    fn includes(self, beta: Mode) -> bool {
        match self {
            CloakMask::Both => true,
            CloakMask::PressureOnly => beta == Mode::P,
            CloakMask::ShearOnly => beta == Mode::S,
        }
    }
}

/// Box for the layer moduli and densities (shared by all layers).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignBounds {
    pub lame_lambda: [f64; 2],
    pub lame_mu: [f64; 2],
    pub density: [f64; 2],
}

impl Default for DesignBounds {
    fn default() -> Self {
        Self { lame_lambda: [0.01, 100.0], lame_mu: [0.01, 100.0], density: [0.01, 100.0] }
    }
}

impl DesignBounds {
    fn validate(&self) -> Result<()> {
        for (name, b) in [("lame_lambda", self.lame_lambda), ("lame_mu", self.lame_mu), ("density", self.density)] {
            if !(b[0] > 0.0 && b[1] > b[0] && b[1].is_finite()) {
                return Err(EscatError::InvalidInput(format!("bounds for {name} must satisfy 0 < lo < hi, got {b:?}")));
            }
        }
        Ok(())
    }

    fn log_boxes(&self) -> [[f64; 2]; 3] {
        let l = |b: [f64; 2]| [b[0].ln(), b[1].ln()];
        [l(self.lame_lambda), l(self.lame_mu), l(self.density)]
    }
}

/// Settings for [`design_svanishing`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub layers: usize,
    pub max_order: usize,
    pub omega_set: Vec<f64>,
    pub exterior: Material,
    #[serde(default = "default_outer")]
    pub outer_radius: f64,
    #[serde(default = "default_inner")]
    pub inner_radius: f64,
    #[serde(default)]
    pub bounds: DesignBounds,
    #[serde(default)]
    pub mask: CloakMask,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_evals")]
    pub max_evals_per_start: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_outer() -> f64 {
    2.0
}
fn default_inner() -> f64 {
    1.0
}
fn default_starts() -> usize {
    16
}
fn default_evals() -> usize {
    30_000
}
fn default_restarts() -> usize {
    8
}

impl DesignConfig {
    pub fn new(layers: usize, max_order: usize, omega_set: Vec<f64>, exterior: Material) -> Self {
        Self {
            layers,
            max_order,
            omega_set,
            exterior,
            outer_radius: default_outer(),
            inner_radius: default_inner(),
            bounds: DesignBounds::default(),
            mask: CloakMask::Both,
            starts: default_starts(),
            seed: 0,
            max_evals_per_start: default_evals(),
            restarts: default_restarts(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(EscatError::InvalidInput("a coat needs at least one layer".into()));
        }
        if self.omega_set.is_empty() || self.omega_set.iter().any(|w| !(*w > 0.0)) {
            return Err(EscatError::InvalidInput("omega_set must be non-empty and positive".into()));
        }
        if !(self.inner_radius > 0.0 && self.outer_radius > self.inner_radius) {
            return Err(EscatError::InvalidInput("need 0 < inner_radius < outer_radius".into()));
        }
        if self.starts == 0 {
            return Err(EscatError::InvalidInput("at least one start is required".into()));
        }
        self.exterior.validate()?;
        self.bounds.validate()
    }

    fn dimension(&self) -> usize {
        3 * self.layers + self.layers - 1
    }

    /// Parameter vector: `ln λ_j, ln μ_j, ln ρ_j` per layer, then `L-1` logits
    /// whose softmax (with an implicit zero) splits the coat into layer widths.
    fn decode(&self, params: &[f64]) -> (LayeredStructure, f64) {
        let boxes = self.bounds.log_boxes();
        let mut excess = 0.0;
        let mut layers = Vec::with_capacity(self.layers);
        for j in 0..self.layers {
            let mut vals = [0.0; 3];
            for k in 0..3 {
                let v = params[3 * j + k];
                let clamped = v.clamp(boxes[k][0], boxes[k][1]);
                excess += (v - clamped).powi(2);
                vals[k] = clamped.exp();
            }
            layers.push(Material { lame_lambda: vals[0], lame_mu: vals[1], density: vals[2] });
        }
        let logits: Vec<f64> = params[3 * self.layers..].iter().copied().chain(std::iter::once(0.0)).collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|z| (z - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        let span = self.outer_radius - self.inner_radius;
        let mut radii = vec![self.outer_radius];
        let mut r = self.outer_radius;
        for w in &weights[..self.layers - 1] {
            r -= span * w / total;
            radii.push(r);
        }
        radii.push(self.inner_radius);
        (LayeredStructure { radii, layers, exterior: self.exterior, inner: InnerRegion::Cavity }, excess)
    }
}

/// Outcome of [`design_svanishing`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub structure: LayeredStructure,
    /// Final value of the relative objective; the bare cavity scores one per
    /// (frequency, order) term.
    pub objective: f64,
    pub bare_objective: f64,
    /// Best objective of every start, in start order.
    pub start_objectives: Vec<f64>,
    /// Best objective after each simplex pass of the winning start.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub per_frequency: Vec<FrequencyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub omega: f64,
    pub orders: Vec<OrderReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub order: usize,
    pub designed: ModeBlock,
    pub bare: ModeBlock,
    /// `Σ|W_n^bare|² / Σ|W_n|²` over the masked entries.
    pub reduction_factor: f64,
}

/// Objective of a coat: `Σ_ω Σ_{n ≤ N} Σ_{α,β} |W_n^{α,β}(ω)|² / s_n(ω)`, with
/// `s_n(ω)` the same sum for the bare cavity. Resonant parameter points score
/// `+∞`.
pub fn design_objective(structure: &LayeredStructure, config: &DesignConfig, bare_scale: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (wi, &omega) in config.omega_set.iter().enumerate() {
        for n in 0..=config.max_order {
            match layered_esc(structure, omega, n as i32) {
                Ok(w) => total += w.masked_sq(config.mask) / bare_scale[wi][n],
                Err(_) => return f64::INFINITY,
            }
        }
    }
    total
}

fn bare_scales(config: &DesignConfig) -> Result<Vec<Vec<f64>>> {
    let bare = LayeredStructure::bare_cavity(config.inner_radius, config.exterior);
    config
        .omega_set
        .iter()
        .map(|&omega| {
            (0..=config.max_order)
                .map(|n| {
                    let s = layered_esc(&bare, omega, n as i32)?.masked_sq(config.mask);
                    if s > 0.0 {
                        Ok(s)
                    } else {
                        Err(EscatError::InvalidInput(format!("bare cavity coefficient of order {n} vanishes")))
                    }
                })
                .collect()
        })
        .collect()
}

/// Multi-start Nelder–Mead search for a coat minimizing [`design_objective`].
/// Every start draws its initial point from its own ChaCha stream, so results
/// are reproducible for a given seed and independent of the thread count.
pub fn design_svanishing(config: &DesignConfig) -> Result<DesignReport> {
    config.validate()?;
    let scales = bare_scales(config)?;
    let dim = config.dimension();
    let boxes = config.bounds.log_boxes();
    let opts = NelderMeadOptions {
        max_evals: config.max_evals_per_start,
        x_tol: 1e-12,
        f_tol_abs: 1e-300,
        f_tol_rel: 1e-14,
        initial_step: 0.5,
        restarts: config.restarts,
    };
    let runs: Vec<(usize, neldermead::NelderMeadResult)> = (0..config.starts)
        .into_par_iter()
        .map(|start| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(start as u64);
            let x0: Vec<f64> = (0..dim)
                .map(|i| if i < 3 * config.layers { rng.gen_range(boxes[i % 3][0]..boxes[i % 3][1]) } else { rng.gen_range(-1.0..1.0) })
                .collect();
            let objective = |p: &[f64]| {
                let (structure, excess) = config.decode(p);
                let base = design_objective(&structure, config, &scales);
                if excess > 0.0 {
                    // Outside the box: strictly worse than any feasible point.
                    config.omega_set.len() as f64 * (config.max_order + 1) as f64 * 1e3 * (1.0 + excess)
                } else {
                    base
                }
            };
            (start, neldermead::minimize(objective, &x0, &opts))
        })
        .collect();
    let start_objectives: Vec<f64> = runs.iter().map(|(_, r)| r.value).collect();
    let evaluations = runs.iter().map(|(_, r)| r.evals).sum();
    let (_, best) = runs
        .into_iter()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value).then(a.0.cmp(&b.0)))
        .expect("at least one start");
    if !best.value.is_finite() {
        return Err(EscatError::Optimization("every start hit a resonant parameter point".into()));
    }
    let (structure, _) = config.decode(&best.x);
    let bare = LayeredStructure::bare_cavity(config.inner_radius, config.exterior);
    let per_frequency = config
        .omega_set
        .iter()
        .map(|&omega| {
            let orders = (0..=config.max_order)
                .map(|n| {
                    let designed = layered_esc(&structure, omega, n as i32)?;
                    let bare_w = layered_esc(&bare, omega, n as i32)?;
                    Ok(OrderReport {
                        order: n,
                        designed,
                        bare: bare_w,
                        reduction_factor: bare_w.masked_sq(config.mask) / designed.masked_sq(config.mask),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FrequencyReport { omega, orders })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DesignReport {
        structure,
        objective: best.value,
        bare_objective: (config.omega_set.len() * (config.max_order + 1)) as f64,
        start_objectives,
        history: best.history,
        evaluations,
        per_frequency,
    })
}

/// Low-frequency behavior of `‖W_n(εω)‖_F` for one order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderScaling {
    pub order: usize,
    pub epsilons: Vec<f64>,
    pub norms: Vec<f64>,
    /// Least-squares log-log slope over the points within one decade of the
    /// smallest ε, where logarithmic corrections matter least.
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub base_omega: f64,
    pub orders: Vec<OrderScaling>,
}

pub fn scaling_report(structure: &LayeredStructure, max_order: usize, base_omega: f64, epsilons: &[f64]) -> Result<ScalingReport> {
    if epsilons.len() < 2 || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(EscatError::InvalidInput("need at least two positive epsilons".into()));
    }
    let orders = (0..=max_order)
        .map(|n| {
            let norms = epsilons
                .iter()
                .map(|e| Ok(layered_esc(structure, e * base_omega, n as i32)?.frobenius_sq().sqrt()))
                .collect::<Result<Vec<f64>>>()?;
            let e_min = epsilons.iter().copied().fold(f64::INFINITY, f64::min);
            let pts: Vec<(f64, f64)> = epsilons
                .iter()
                .zip(&norms)
                .filter(|(e, _)| **e <= 10.0 * e_min * (1.0 + 1e-12))
                .map(|(e, w)| (e.ln(), w.ln()))
                .collect();
            Ok(OrderScaling { order: n, epsilons: epsilons.to_vec(), norms, exponent: fit_slope(&pts) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingReport { base_omega, orders })
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Fitted low-frequency exponents of the four 2×2 blocks of `M_n` and `M_n⁻¹`
/// (largest entry per block), from two frequencies a decade apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockOrders {
    pub matrix: [[f64; 2]; 2],
    pub inverse: [[f64; 2]; 2],
}

pub fn block_orders(n: i32, r: f64, material: &Material, omega_lo: f64, omega_hi: f64) -> Result<BlockOrders> {
    let block_max = |m: &Matrix4<C64>| {
        let mut out = [[0.0; 2]; 2];
        for (bi, row) in out.iter_mut().enumerate() {
            for (bj, slot) in row.iter_mut().enumerate() {
                *slot = m.fixed_view::<2, 2>(2 * bi, 2 * bj).iter().map(|z| z.norm()).fold(0.0, f64::max);
            }
        }
        out
    };
    let at = |omega: f64| -> Result<([[f64; 2]; 2], [[f64; 2]; 2])> {
        let m = layer_matrix(n, r, material, omega)?;
        let inv = m
            .try_inverse()
            .ok_or_else(|| EscatError::Resonance { context: "layer matrix".into(), condition: f64::INFINITY })?;
        Ok((block_max(&m), block_max(&inv)))
    };
    let (m_lo, i_lo) = at(omega_lo)?;
    let (m_hi, i_hi) = at(omega_hi)?;
    let span = (omega_hi / omega_lo).ln();
    let slope = |lo: [[f64; 2]; 2], hi: [[f64; 2]; 2]| {
        let mut s = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] = (hi[i][j] / lo[i][j]).ln() / span;
            }
        }
        s
    };
    Ok(BlockOrders { matrix: slope(m_lo, m_hi), inverse: slope(i_lo, i_hi) })
}

/// Shear wavelength helper for the acceptance set-ups: the frequency at which
/// `κ_S · length = target`.
pub fn omega_for_shear_product(material: &Material, length: f64, target: f64) -> f64 {
    target * material.c_s() / length
}
