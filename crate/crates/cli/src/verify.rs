//! Invariant suites for `escat verify`.

use clap::ValueEnum;
use escat_core::bie::{build_grid, single_layer_traction};
use escat_core::cloak::analytic_disk_esc;
use escat_core::curves::BoundaryCurve;
use escat_core::esc::{compute_esc, verify_optical, verify_symmetries, EscMatrix};
use escat_core::msr::{assemble_model, expansion_field, MsrConfig};
use escat_core::wavefields::{
    plane_wave, plane_wave_coeffs, surface_p, surface_s, CVec2, CylWaveEvaluator, Kind, Material, MaterialPair, Mode, C64,
};
use nalgebra::DMatrix;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    All,
    Orthogonality,
    Jumps,
    Symmetries,
    Optical,
    Fourier,
    Disk,
}

/// Deliberate defects for exercising the harness itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Negate the tangential receiver rows of `Y` before the model check.
    YSign,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: Suite,
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn check(suite: Suite, name: &'static str, value: f64, tolerance: f64) -> Check {
    Check { suite, name, value, tolerance, pass: value.is_finite() && value <= tolerance }
}

fn exterior() -> Material {
    Material { lame_lambda: 2.0, lame_mu: 1.0, density: 1.0 }
}

fn pair() -> MaterialPair {
    MaterialPair { exterior: exterior(), interior: Material { lame_lambda: 4.0, lame_mu: 2.0, density: 2.0 } }
}

fn vnorm(v: CVec2) -> f64 {
    (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
}

pub fn run(suites: &[Suite], fault: Option<Fault>) -> anyhow::Result<Vec<Check>> {
    let mut selected: Vec<Suite> = if suites.is_empty() || suites.contains(&Suite::All) {
        vec![Suite::Orthogonality, Suite::Jumps, Suite::Symmetries, Suite::Optical, Suite::Fourier, Suite::Disk]
    } else {
        suites.to_vec()
    };
    selected.sort();
    selected.dedup();
    // The kite matrix is shared by the symmetry and energy suites.
    let kite = if selected.iter().any(|s| matches!(s, Suite::Symmetries | Suite::Optical)) {
        Some(compute_esc(&BoundaryCurve::kite(0.6), &pair(), 1.0, 6, 128)?)
    } else {
        None
    };
    let mut out = Vec::new();
    for s in selected {
        match s {
            Suite::Orthogonality => out.extend(orthogonality()?),
            Suite::Jumps => out.push(jumps()?),
            Suite::Symmetries => {
                let rep = verify_symmetries(kite.as_ref().expect("kite computed"));
                out.push(check(s, "reciprocity_kite", rep.reciprocity, 1e-6));
            }
            Suite::Optical => {
                let rep = verify_optical(kite.as_ref().expect("kite computed"));
                out.push(check(s, "energy_identity_kite", rep.adjoint_form, 1e-6));
            }
            Suite::Fourier => out.extend(fourier(fault)?),
            Suite::Disk => out.push(disk()?),
            Suite::All => unreachable!("expanded above"),
        }
    }
    Ok(out)
}

/// Orthonormality of the surface harmonics and the plane-wave expansion in the
/// regular basis.
fn orthogonality() -> anyhow::Result<Vec<Check>> {
    const SAMPLES: usize = 64;
    let harmonics: Vec<Vec<CVec2>> = (-4..=4)
        .flat_map(|m| [0, 1].map(move |kind| (m, kind)))
        .map(|(m, kind)| {
            (0..SAMPLES)
                .map(|j| {
                    let t = 2.0 * std::f64::consts::PI * j as f64 / SAMPLES as f64;
                    if kind == 0 {
                        surface_p(m, t)
                    } else {
                        surface_s(m, t)
                    }
                })
                .collect()
        })
        .collect();
    let mut gram_defect = 0.0f64;
    for (a, fa) in harmonics.iter().enumerate() {
        for (b, fb) in harmonics.iter().enumerate() {
            let g: C64 = fa.iter().zip(fb).map(|(x, y)| x[0] * y[0].conj() + x[1] * y[1].conj()).sum::<C64>() / SAMPLES as f64;
            let want = if a == b { 1.0 } else { 0.0 };
            gram_defect = gram_defect.max((g - want).norm());
        }
    }
    let mat = exterior();
    let (omega, d, x) = (1.3, [0.6, -0.8], [0.9, 1.1]);
    let m_max = 30;
    let coeffs = plane_wave_coeffs(d, omega, &mat, m_max)?;
    let eval = CylWaveEvaluator::new(Kind::Regular, x, &mat, omega, m_max as usize)?;
    let mut series = [C64::new(0.0, 0.0); 2];
    for mode in Mode::BOTH {
        for m in -m_max..=m_max {
            let v = eval.value(mode, m);
            for i in 0..2 {
                series[i] += coeffs.get(mode, m) * v[i];
            }
        }
    }
    let (p, s) = (plane_wave(Mode::P, d, x, omega, &mat), plane_wave(Mode::S, d, x, omega, &mat));
    let direct = [p.value[0] + s.value[0], p.value[1] + s.value[1]];
    let err = vnorm([series[0] - direct[0], series[1] - direct[1]]) / vnorm(direct);
    Ok(vec![
        check(Suite::Orthogonality, "surface_harmonic_gram", gram_defect, 1e-12),
        check(Suite::Orthogonality, "plane_wave_expansion", err, 1e-10),
    ])
}

/// Exterior minus interior traction of an off-surface single layer, extrapolated
/// to the boundary, equals minus the density.
fn jumps() -> anyhow::Result<Check> {
    let mat = exterior();
    let omega = 0.9;
    let grid = build_grid(&BoundaryCurve::ellipse(1.3, 0.9), 1024)?;
    let density: Vec<CVec2> = (0..grid.count())
        .map(|k| {
            let t = grid.param(k);
            [C64::new(t.cos(), 0.2 * (2.0 * t).sin()), C64::new(0.4 - (3.0 * t).cos(), 0.1)]
        })
        .collect();
    let mut worst = 0.0f64;
    for j in (0..grid.count()).step_by(171) {
        let (x, n) = (grid.nodes[j], grid.normals[j]);
        let jump_at = |delta: f64| -> anyhow::Result<CVec2> {
            let o = single_layer_traction(&grid, omega, &mat, &density, [x[0] + delta * n[0], x[1] + delta * n[1]], n)?;
            let i = single_layer_traction(&grid, omega, &mat, &density, [x[0] - delta * n[0], x[1] - delta * n[1]], n)?;
            Ok([o[0] - i[0], o[1] - i[1]])
        };
        let (j1, j2, j4) = (jump_at(0.08)?, jump_at(0.04)?, jump_at(0.02)?);
        let extrapolated: Vec<C64> = (0..2).map(|i| (j4[i] * 8.0 - j2[i] * 6.0 + j1[i]) / 3.0).collect();
        let defect = vnorm([extrapolated[0] + density[j][0], extrapolated[1] + density[j][1]]) / vnorm(density[j]);
        worst = worst.max(defect);
    }
    Ok(check(Suite::Jumps, "traction_jump_extrapolated", worst, 2e-2))
}

/// `X*X = N_s Z_X` and the assembled model against the direct series.
fn fourier(fault: Option<Fault>) -> anyhow::Result<Vec<Check>> {
    let cfg = MsrConfig { radius: 40.0, sources: 16, receivers: 12, omega: 1.0, exterior: exterior(), noise_sigma: 0.0, seed: 0 };
    let k = 3usize;
    let mut model = assemble_model(&cfg, k)?;
    let xtx = model.x.adjoint() * &model.x;
    let want = DMatrix::from_fn(xtx.nrows(), xtx.ncols(), |i, j| {
        C64::new(if i == j { cfg.sources as f64 * model.z_x[i] } else { 0.0 }, 0.0)
    });
    let fourier_defect = (&xtx - &want).norm() / want.norm();

    if fault == Some(Fault::YSign) {
        let nr = cfg.receivers;
        for r in nr..2 * nr {
            for c in 0..model.y.ncols() {
                model.y[(r, c)] = -model.y[(r, c)];
            }
        }
    }
    // A deterministic, non-symmetric test matrix.
    let dim = 2 * (2 * k + 1);
    let w = DMatrix::from_fn(dim, dim, |i, j| C64::new(((i * 7 + j * 3) % 11) as f64 - 5.0, ((i + 2 * j) % 5) as f64 - 2.0));
    let esc = EscMatrix::from_global(&w, cfg.omega, pair(), None)?;
    let a = &model.x * &w * model.y.adjoint();
    let mut worst = 0.0f64;
    for s in [0, 5, 11] {
        for r in [0, 4, 9] {
            for (mode, row) in [(Mode::P, s), (Mode::S, cfg.sources + s)] {
                let u = expansion_field(&esc, mode, cfg.source_direction(s), cfg.receiver_point(r))?;
                let (dr, dp) = cfg.receiver_frame(r);
                let par = u[0] * dr[0] + u[1] * dr[1];
                let perp = u[0] * dp[0] + u[1] * dp[1];
                let scale = vnorm(u);
                worst = worst.max((a[(row, r)] - par).norm() / scale);
                worst = worst.max((a[(row, cfg.receivers + r)] - perp).norm() / scale);
            }
        }
    }
    Ok(vec![
        check(Suite::Fourier, "xstar_x_identity", fourier_defect, 1e-10),
        check(Suite::Fourier, "model_matches_series", worst, 1e-10),
    ])
}

fn disk() -> anyhow::Result<Check> {
    let p = pair();
    let (omega, k) = (1.0, 4usize);
    let esc = compute_esc(&BoundaryCurve::circle(1.0), &p, omega, k, 96)?;
    let scale = esc.max_abs();
    let mut worst = 0.0f64;
    let ki = k as i32;
    for m in -ki..=ki {
        let exact = analytic_disk_esc(&p, 1.0, omega, m)?;
        for alpha in Mode::BOTH {
            for beta in Mode::BOTH {
                for n in -ki..=ki {
                    let want = if n == m { exact.get(alpha, beta) } else { C64::new(0.0, 0.0) };
                    worst = worst.max((esc.get(alpha, beta, m, n) - want).norm() / scale);
                }
            }
        }
    }
    Ok(check(Suite::Disk, "bie_vs_transfer_matrix", worst, 1e-8))
}
