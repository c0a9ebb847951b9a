//! Subcommand bodies. Each reads one config, computes, and writes one output
//! document (or, for `msr simulate`, one directory).

use std::path::Path;

use anyhow::{anyhow, Context};
use escat_core::bie::{build_grid, TransmissionSolver};
use escat_core::cloak::{design_svanishing, layered_esc, scaling_report, ModeBlock};
use escat_core::curves::BoundaryCurve;
use escat_core::esc::{compute_esc_with, decay_profile, verify_optical, verify_symmetries, EscMatrix};
use escat_core::msr::{
    add_noise, max_resolving_order, reconstruct, simulate_msr, singular_values, snr_from_geometry, MsrBlock, MsrConfig,
    MsrDataset, SimulationMode,
};
use escat_core::wavefields::MaterialPair;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{self, resolve_path, ConfigError};
use crate::output::{write_atomic, write_json, Provenance};

const DEFAULT_TRUNCATION: usize = 6;
const DEFAULT_NODES: usize = 256;

fn esc_value(esc: &EscMatrix) -> anyhow::Result<Value> {
    Ok(serde_json::from_str(&esc.to_json()?)?)
}

/// Accepts a bare ESC document or any output with an `esc` member.
fn read_esc(path: &Path) -> anyhow::Result<EscMatrix> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text)?;
    let node = doc.get("esc").cloned().unwrap_or(doc);
    Ok(EscMatrix::from_json(&node.to_string())?)
}

fn invalid(path: &Path, message: impl Into<String>) -> anyhow::Error {
    ConfigError { path: path.to_path_buf(), message: message.into(), line: None, column: None }.into()
}

pub fn esc_compute(config_path: &Path, out: &Path, truncation: Option<usize>, nodes: Option<usize>) -> anyhow::Result<()> {
    let cfg = config::load::<config::EscConfig>(config_path)?;
    let scene = &cfg.value.scene;
    let pair = scene.pair()?;
    let curve = BoundaryCurve::new(scene.curve.clone())?;
    let k = truncation.or(cfg.value.truncation).unwrap_or(DEFAULT_TRUNCATION);
    let n = nodes.or(cfg.value.nodes).unwrap_or(DEFAULT_NODES);
    let grid = build_grid(&curve, n)?;
    let solver = TransmissionSolver::new(&grid, &pair, scene.omega)?;
    let esc = compute_esc_with(&solver, k, Some(scene.curve.clone()))?;
    let doc = json!({
        "provenance": Provenance::new("esc compute", &cfg.hash, 0),
        "nodes": n,
        "condition_estimate": solver.condition_estimate(),
        "summary": {
            "decay": decay_profile(&esc),
            "symmetries": verify_symmetries(&esc),
            "optical": verify_optical(&esc),
        },
        "esc": esc_value(&esc)?,
    });
    write_json(out, &doc)
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    acquisition: MsrConfig,
    pair: MaterialPair,
    mode: config::SimulationKind,
    /// Truncation of the coefficient matrix behind expansion-mode data.
    truncation: Option<usize>,
}

pub fn msr_simulate(
    config_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    truncation: Option<usize>,
    nodes: Option<usize>,
) -> anyhow::Result<()> {
    let cfg = config::load::<config::MsrSimulateConfig>(config_path)?;
    let c = &cfg.value;
    let pair = c.scene.pair()?;
    let mut acq = c.acquisition.resolve(c.scene.omega, c.scene.exterior).map_err(|m| invalid(config_path, m))?;
    if let Some(s) = seed {
        acq.seed = s;
    }
    acq.validate()?;
    let curve = BoundaryCurve::new(c.scene.curve.clone())?;
    let n = nodes.or(c.nodes).unwrap_or(DEFAULT_NODES);
    let (clean, used_k) = match c.mode {
        config::SimulationKind::Bie => (simulate_msr(&curve, &pair, &acq, SimulationMode::Bie { n_nodes: n })?, None),
        config::SimulationKind::Expansion => {
            let esc = match &c.esc_file {
                Some(f) => read_esc(&resolve_path(&cfg.dir, f))?,
                None => {
                    let k = truncation.or(c.truncation).unwrap_or(DEFAULT_TRUNCATION);
                    escat_core::esc::compute_esc(&curve, &pair, c.scene.omega, k, n)?
                }
            };
            let k = esc.truncation();
            (simulate_msr(&curve, &pair, &acq, SimulationMode::Expansion(&esc))?, Some(k))
        }
    };
    let data = add_noise(&clean, acq.noise_sigma, acq.seed)?;
    write_dataset(out_dir, &data, pair, c.mode, used_k, &Provenance::new("msr simulate", &cfg.hash, acq.seed))
}

fn write_dataset(
    dir: &Path,
    data: &MsrDataset,
    pair: MaterialPair,
    mode: config::SimulationKind,
    truncation: Option<usize>,
    prov: &Provenance,
) -> anyhow::Result<()> {
    for block in MsrBlock::ALL {
        let mut buf = Vec::new();
        data.write_block_csv(block, &mut buf)?;
        write_atomic(&dir.join(format!("{}.csv", block.file_stem())), &buf)?;
    }
    // The header goes last: its presence marks a complete dataset.
    let header = DatasetHeader { acquisition: data.config, pair, mode, truncation };
    write_json(&dir.join("header.json"), &json!({ "provenance": prov, "header": header }))
}

fn read_dataset(dir: &Path) -> anyhow::Result<(MsrDataset, MaterialPair)> {
    let header_path = dir.join("header.json");
    let text = std::fs::read_to_string(&header_path).with_context(|| format!("reading {}", header_path.display()))?;
    let doc: Value = serde_json::from_str(&text)?;
    let header: DatasetHeader =
        serde_json::from_value(doc.get("header").cloned().ok_or_else(|| anyhow!("{} has no header", header_path.display()))?)?;
    let open = |b: MsrBlock| -> anyhow::Result<(MsrBlock, std::io::BufReader<std::fs::File>)> {
        let p = dir.join(format!("{}.csv", b.file_stem()));
        Ok((b, std::io::BufReader::new(std::fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?)))
    };
    let blocks = [open(MsrBlock::ParPar)?, open(MsrBlock::ParPerp)?, open(MsrBlock::PerpPar)?, open(MsrBlock::PerpPerp)?];
    Ok((MsrDataset::from_csv_blocks(header.acquisition, blocks)?, header.pair))
}

pub fn msr_reconstruct(config_path: &Path, out: &Path, truncation: Option<usize>) -> anyhow::Result<()> {
    let cfg = config::load::<config::MsrReconstructConfig>(config_path)?;
    let c = &cfg.value;
    let (data, pair) = read_dataset(&resolve_path(&cfg.dir, &c.dataset))?;
    let k = truncation.or(c.truncation).ok_or_else(|| invalid(config_path, "truncation is required (config or --K)"))?;
    let rec = reconstruct(&data, pair, k, c.method)?;
    let doc = json!({
        "provenance": Provenance::new("msr reconstruct", &cfg.hash, data.config.seed),
        "method": c.method,
        "truncation": k,
        "relative_residual": rec.relative_residual,
        "esc": esc_value(&rec.esc)?,
    });
    write_json(out, &doc)
}

pub fn msr_analyze(config_path: &Path, out: &Path, truncation: Option<usize>) -> anyhow::Result<()> {
    let cfg = config::load::<config::MsrAnalyzeConfig>(config_path)?;
    let c = &cfg.value;
    let acq = c.acquisition.resolve(c.scene.omega, c.scene.exterior).map_err(|m| invalid(config_path, m))?;
    let k = truncation.or(c.truncation).unwrap_or(4);
    let report = singular_values(&acq, k)?;
    let snr = match (c.snr, c.sigma_noise) {
        (Some(s), None) => s,
        (None, Some(sigma)) => {
            let grid = build_grid(&BoundaryCurve::new(c.scene.curve.clone())?, DEFAULT_NODES)?;
            snr_from_geometry(grid.perimeter(), acq.radius, sigma)
        }
        _ => return Err(invalid(config_path, "give exactly one of snr or sigma_noise")),
    };
    let doc = json!({
        "provenance": Provenance::new("msr analyze", &cfg.hash, acq.seed),
        "radius": acq.radius,
        "truncation": k,
        "singular_values": report,
        "snr": snr,
        "epsilon": c.epsilon,
        "max_resolving_order": max_resolving_order(snr, c.epsilon)?,
    });
    write_json(out, &doc)
}

pub fn cloak_design(config_path: &Path, out: &Path, seed: Option<u64>) -> anyhow::Result<()> {
    let cfg = config::load::<config::CloakDesignConfig>(config_path)?;
    let mut design = cfg.value.design.clone();
    if let Some(s) = seed {
        design.seed = s;
    }
    let report = design_svanishing(&design)?;
    let achieved = report
        .per_frequency
        .iter()
        .filter_map(|f| f.orders.first().map(|o| o.reduction_factor))
        .fold(f64::INFINITY, f64::min);
    let met = achieved >= cfg.value.target_reduction;
    if !met {
        log::warn!("order-0 reduction {achieved:.3e} is below the target {:.3e}", cfg.value.target_reduction);
    }
    let doc = json!({
        "provenance": Provenance::new("cloak design", &cfg.hash, design.seed),
        "status": if met { "target_met" } else { "target_not_met" },
        "target_reduction": cfg.value.target_reduction,
        "reduction_factor": achieved,
        "report": report,
    });
    write_json(out, &doc)
}

#[derive(Serialize)]
struct OrderRow {
    order: usize,
    block: ModeBlock,
    frobenius_sq: f64,
}

pub fn cloak_evaluate(config_path: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = config::load::<config::CloakEvaluateConfig>(config_path)?;
    let c = &cfg.value;
    let structure = config::structure_from(&c.structure, &c.structure_file, &cfg.dir)?;
    let rows = (0..=c.max_order)
        .map(|n| {
            let block = layered_esc(&structure, c.omega, n as i32)?;
            Ok(OrderRow { order: n, frobenius_sq: block.frobenius_sq(), block })
        })
        .collect::<escat_core::Result<Vec<_>>>()?;
    let doc = json!({
        "provenance": Provenance::new("cloak evaluate", &cfg.hash, 0),
        "omega": c.omega,
        "structure": structure,
        "orders": rows,
    });
    write_json(out, &doc)
}

pub fn cloak_scaling(config_path: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = config::load::<config::CloakScalingConfig>(config_path)?;
    let c = &cfg.value;
    let structure = config::structure_from(&c.structure, &c.structure_file, &cfg.dir)?;
    let report = scaling_report(&structure, c.max_order, c.base_omega, &c.epsilons)?;
    let doc = json!({
        "provenance": Provenance::new("cloak scaling", &cfg.hash, 0),
        "structure": structure,
        "report": report,
    });
    write_json(out, &doc)
}
