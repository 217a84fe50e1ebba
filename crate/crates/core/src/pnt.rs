//! Particle-number threshold scans.
//!
//! `D(n)` is the largest holonomy-algebra rank reachable with eigenspace
//! content that needs at most `n` particles, and `N_t` the least `n` with
//! `D(n) = D(N_max)`. Values are certified only up to `N_max`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    block_tower, direct_sum_ranks, holonomy_dimension, sample_points, stagnation, BlockRef, TowerOptions, DEFAULT_RANK_TOL, DEFAULT_SEED,
};
use crate::linalg::CMat;
use crate::models::{ModelKind, ModelSpec, ParameterPoint};
use crate::spectral::{default_cluster_tol, family_across_layers, static_eigenspaces};

#[derive(Debug, Clone, Serialize)]
pub struct ScanConfig {
    pub n_max: u32,
    pub k_max: usize,
    /// Random sample points in addition to the model's base point.
    pub samples: usize,
    pub seed: u64,
    pub cluster_tol: Option<f64>,
    pub rank_tol: f64,
    /// Raise the per-mode cutoff of truncated models to at least
    /// `n_max + cutoff_margin`.
    pub cutoff_margin: u32,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { n_max: 4, k_max: 3, samples: 3, seed: DEFAULT_SEED, cluster_tol: None, rank_tol: DEFAULT_RANK_TOL, cutoff_margin: 2 }
    }
}

/// One eigenspace (or eigenspace family) of a scan.
#[derive(Debug, Clone, Serialize)]
pub struct EigenspaceReportRow {
    pub label: usize,
    pub eigenvalue: f64,
    /// Degeneracy within the scanned truncation.
    pub degeneracy: usize,
    pub particles_needed: u32,
    pub dim_f: usize,
    pub dim_hol: usize,
    pub rank_by_order: Vec<usize>,
    pub stagnation_order: Option<usize>,
    /// Family rank using blocks with at most `n` particles, `n = 0..=N_max`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub prefix_ranks: Vec<usize>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PntReport {
    pub model: String,
    pub n_max: u32,
    pub k_max: usize,
    pub rows: Vec<EigenspaceReportRow>,
    pub n_t: u32,
    /// Label of a row attaining `D(N_max)` first.
    pub argmax_label: Option<usize>,
    /// `D(n)` for `n = 0..=N_max`.
    pub attainment: Vec<usize>,
    pub caveat: String,
}

fn tower_opts(spec: &ModelSpec, cfg: &ScanConfig) -> TowerOptions {
    TowerOptions { k_max: cfg.k_max, cluster_tol: Some(cfg.cluster_tol.unwrap_or_else(|| default_cluster_tol(spec))), rotation: None }
}

/// Model with its cutoff raised far enough for a scan up to `n_max`.
pub fn scan_model(spec: &ModelSpec, cfg: &ScanConfig) -> ModelSpec {
    let mut s = spec.clone();
    if let Some(c) = s.system.cutoff {
        s.system.cutoff = Some(c.max(cfg.n_max + cfg.cutoff_margin));
    }
    s
}

pub fn pnt_scan(spec: &ModelSpec, cfg: &ScanConfig) -> Result<PntReport> {
    spec.validate()?;
    let spec = scan_model(spec, cfg);
    let rows = if spec.number_conserving() { family_rows(&spec, cfg)? } else { static_rows(&spec, cfg)? };
    let attainment: Vec<usize> = (0..=cfg.n_max)
        .map(|n| {
            rows.iter()
                .map(|r| if r.prefix_ranks.is_empty() { if r.particles_needed <= n { r.dim_hol } else { 0 } } else { r.prefix_ranks[n as usize] })
                .max()
                .unwrap_or(0)
        })
        .collect();
    let top = *attainment.last().unwrap_or(&0);
    let n_t = attainment.iter().position(|&d| d == top).unwrap_or(0) as u32;
    let argmax_label = rows
        .iter()
        .find(|r| if r.prefix_ranks.is_empty() { r.particles_needed <= n_t && r.dim_hol == top } else { r.prefix_ranks[n_t as usize] == top })
        .map(|r| r.label);
    Ok(PntReport {
        model: spec.name.clone(),
        n_max: cfg.n_max,
        k_max: cfg.k_max,
        rows,
        n_t,
        argmax_label,
        attainment,
        caveat: format!("N_t certified up to N_max = {} with derivatives to order {}", cfg.n_max, cfg.k_max),
    })
}

/// Scan of a composite model on the full tensor-product system.
pub fn composite_pnt(spec: &ModelSpec, cfg: &ScanConfig) -> Result<PntReport> {
    if spec.kind != ModelKind::Composite {
        return Err(Error::Config(format!("model `{}` is not a composite", spec.name)));
    }
    pnt_scan(spec, cfg)
}

/// Kerr-style table: eigenspaces with degeneracy ≥ 5 plus the two lowest.
pub fn table_report(spec: &ModelSpec, cfg: &ScanConfig) -> Result<Vec<EigenspaceReportRow>> {
    if !spec.compiled().isospectral() || spec.number_conserving() {
        return Err(Error::Config("table report needs an isospectral Gaussian model".into()));
    }
    let spec = scan_model(spec, cfg);
    static_table(&spec, cfg, |label, d| d >= 5 || label <= 1)
}

fn static_rows(spec: &ModelSpec, cfg: &ScanConfig) -> Result<Vec<EigenspaceReportRow>> {
    static_table(spec, cfg, |_, _| true)
}

fn static_table(spec: &ModelSpec, cfg: &ScanConfig, keep: impl Fn(usize, usize) -> bool) -> Result<Vec<EigenspaceReportRow>> {
    let opts = tower_opts(spec, cfg);
    let (_, spaces) = static_eigenspaces(spec, opts.cluster_tol.expect("set"))?;
    let points = sample_points(spec, cfg.seed, cfg.samples);
    let mut jobs = Vec::new();
    let mut index = 0;
    for s in &spaces {
        let blk = BlockRef { layer: None, spectral_index: index, dimension: s.dimension };
        index += s.dimension;
        if s.particles_needed > cfg.n_max || !keep(s.label, s.dimension) {
            continue;
        }
        if !s.complete {
            return Err(Error::Truncation(format!("eigenspace {} (ε = {}) is cut by the truncation", s.label, s.eigenvalue)));
        }
        jobs.push((s.clone(), blk));
    }
    jobs.par_iter()
        .map(|(s, blk)| {
            let r = holonomy_dimension(spec, std::slice::from_ref(blk), &points, &opts, cfg.rank_tol)?;
            let mut flags: Vec<String> = r.skipped.iter().map(|k| format!("skipped point: {}", k.reason)).collect();
            if r.stagnation_order.is_none() {
                flags.push(format!("rank still growing at order {}", cfg.k_max));
            }
            Ok(EigenspaceReportRow {
                label: s.label,
                eigenvalue: s.eigenvalue,
                degeneracy: s.dimension,
                particles_needed: s.particles_needed,
                dim_f: r.dim_f,
                dim_hol: r.rank,
                rank_by_order: r.rank_by_order,
                stagnation_order: r.stagnation_order,
                prefix_ranks: vec![],
                flags,
            })
        })
        .collect()
}

fn family_rows(spec: &ModelSpec, cfg: &ScanConfig) -> Result<Vec<EigenspaceReportRow>> {
    let opts = tower_opts(spec, cfg);
    let points = sample_points(spec, cfg.seed, cfg.samples.max(1));
    let fams = family_across_layers(spec, &points[0], cfg.n_max, opts.cluster_tol.expect("set"))?;
    fams.par_iter()
        .map(|f| {
            let blocks: Vec<BlockRef> = f
                .blocks
                .iter()
                .map(|b| BlockRef { layer: b.particle_number, spectral_index: b.spectral_index, dimension: b.dimension })
                .collect();
            let pr = prefix_ranks(spec, &blocks, &points, &opts, cfg)?;
            let full = pr.ranks.last().cloned().unwrap_or_default();
            let dim_hol = full.last().copied().unwrap_or(0);
            // least n whose blocks already give the full rank
            let needed = (0..=cfg.n_max).find(|&n| pr.ranks[n as usize].last().copied().unwrap_or(0) == dim_hol).unwrap_or(0);
            let mut flags = pr.flags;
            if f.blocks.iter().any(|b| b.ill_conditioned) {
                flags.push("ill-conditioned clustering".into());
            }
            let max_dim: usize = blocks.iter().map(|b| b.dimension * b.dimension).sum();
            Ok(EigenspaceReportRow {
                label: f.label,
                eigenvalue: f.eigenvalue,
                degeneracy: f.dimension(),
                particles_needed: needed,
                dim_f: full.first().copied().unwrap_or(0),
                dim_hol,
                stagnation_order: stagnation(&full, max_dim),
                rank_by_order: full,
                prefix_ranks: pr.ranks.iter().map(|r| r.last().copied().unwrap_or(0)).collect(),
                flags,
            })
        })
        .collect()
}

struct Prefix {
    // ranks[n][k]: rank at order k using blocks with N ≤ n
    ranks: Vec<Vec<usize>>,
    flags: Vec<String>,
}

// Towers are computed once per block and point; prefixes reuse them.
fn prefix_ranks(spec: &ModelSpec, blocks: &[BlockRef], points: &[ParameterPoint], opts: &TowerOptions, cfg: &ScanConfig) -> Result<Prefix> {
    let levels = cfg.k_max + 1;
    let mut ranks = vec![vec![0usize; levels]; cfg.n_max as usize + 1];
    let mut flags = Vec::new();
    'points: for p in points {
        let mut towers: Vec<(u32, Vec<Vec<CMat>>)> = Vec::new();
        for b in blocks {
            match block_tower(spec, p, b, opts) {
                Ok(t) => towers.push((b.layer.unwrap_or(0), t)),
                Err(e @ Error::FrameDegeneracy(_)) => {
                    flags.push(format!("skipped point: {e}"));
                    continue 'points;
                }
                Err(e) => return Err(e),
            }
        }
        for n in 0..=cfg.n_max {
            let refs: Vec<&[Vec<CMat>]> = towers.iter().filter(|(l, _)| *l <= n).map(|(_, t)| t.as_slice()).collect();
            let (r, _) = direct_sum_ranks(&refs, cfg.rank_tol);
            for (k, v) in r.iter().enumerate() {
                ranks[n as usize][k] = ranks[n as usize][k].max(*v);
            }
        }
    }
    if flags.len() == points.len() {
        return Err(Error::FrameDegeneracy("every sample point was skipped".into()));
    }
    Ok(Prefix { ranks, flags })
}
