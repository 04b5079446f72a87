//! The `gen`, `solve`, `recon`, `check` and `bench` subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use elastorecon::recon::{reconstruct, AnisotropyClass, GroundTruth, MaskReason, Method, ReconConfig, TauMethod};
use elastorecon::synth::{constraint_rank, QuadraticDisplacement};
use elastorecon::tensor::stability_check;
use elastorecon::{io, Field, ReconReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::scenario::{generate, Dataset, Kind, PolySpec, Scenario, SolveStat, Sweep};

pub const REPORT_FILE: &str = "recon_report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BENCH_FILE: &str = "bench.csv";

/// Minimum unmasked fraction for a successful `recon`.
pub const MIN_UNMASKED: f64 = 0.9;

/// Command-line values that override the scenario file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub tau: Option<TauMethod>,
    pub seed: Option<u64>,
    pub eta: Option<f64>,
    pub grid: Option<usize>,
    pub inputs: Option<PathBuf>,
    pub displacement_noise: bool,
}

pub fn load_scenario(config: Option<&Path>, ov: &Overrides) -> Result<Scenario> {
    let mut s = match config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => Scenario::default(),
    };
    if let Some(m) = ov.method {
        s.recon.method = Some(m);
    }
    if let Some(t) = ov.tau {
        s.recon.tau_method = Some(t);
    }
    if let Some(v) = ov.seed {
        s.seed = v;
    }
    if let Some(v) = ov.eta {
        s.eta = v;
    }
    if let Some(v) = ov.grid {
        s.grid = v;
    }
    if let Some(p) = &ov.inputs {
        s.inputs = Some(p.clone());
    }
    s.displacement_noise |= ov.displacement_noise;
    s.validate()?;
    Ok(s)
}

/// Description of a generated data directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub fields: usize,
    pub class: AnisotropyClass,
    /// Present when the strain files are exact samples of these
    /// polynomials; `recon` then uses the exact gradients.
    pub polynomials: Option<Vec<PolySpec>>,
    pub solves: Vec<SolveStat>,
    pub scenario: Option<Scenario>,
}

fn field_name(prefix: &str, j: usize) -> String {
    format!("{prefix}_{:02}.efld", j + 1)
}

pub fn write_dataset(dir: &Path, d: &Dataset, s: &Scenario) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (j, u) in d.displacements.iter().enumerate() {
        io::save(dir.join(field_name("u", j)), u)?;
    }
    for (j, e) in d.strains.iter().enumerate() {
        io::save(dir.join(field_name("strain", j)), e)?;
    }
    if let Some(t) = &d.truth {
        io::save(dir.join("stiffness_true.efld"), &t.stiffness)?;
        if let Some(dc) = &t.divc {
            io::save(dir.join("divc_true.efld"), dc)?;
        }
    }
    let manifest = Manifest {
        fields: d.strains.len(),
        class: d.class,
        polynomials: d.polynomials.as_ref().map(|p| p.iter().map(PolySpec::from).collect()),
        solves: d.solves.clone(),
        scenario: Some(s.clone()),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Reads `strain_XX.efld` (consecutive from 01), the optional ground truth
/// and the optional manifest.
pub fn read_dataset(dir: &Path) -> Result<(Dataset, Option<Manifest>)> {
    let manifest: Option<Manifest> = match fs::read_to_string(dir.join(MANIFEST_FILE)) {
        Ok(text) => Some(serde_json::from_str(&text)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    let mut strains = Vec::new();
    while dir.join(field_name("strain", strains.len())).exists() {
        strains.push(io::load(dir.join(field_name("strain", strains.len())))?);
    }
    let Some(first) = strains.first() else {
        return Err(CliError::Config(format!("no strain_01.efld in {}", dir.display())));
    };
    let grid = first.grid;
    if let Some(m) = &manifest {
        if m.fields != strains.len() {
            return Err(CliError::Config(format!(
                "manifest lists {} fields, found {} strain files",
                m.fields,
                strains.len()
            )));
        }
    }
    let truth = if dir.join("stiffness_true.efld").exists() {
        let divc = dir.join("divc_true.efld");
        Some(GroundTruth {
            stiffness: io::load(dir.join("stiffness_true.efld"))?,
            divc: if divc.exists() { Some(io::load(divc)?) } else { None },
        })
    } else {
        None
    };
    let polynomials = manifest
        .as_ref()
        .and_then(|m| m.polynomials.as_ref())
        .map(|p| p.iter().map(QuadraticDisplacement::from).collect());
    let d = Dataset {
        grid,
        class: manifest.as_ref().map_or(AnisotropyClass::General, |m| m.class),
        polynomials,
        displacements: Vec::new(),
        strains,
        truth,
        solves: manifest.as_ref().map(|m| m.solves.clone()).unwrap_or_default(),
    };
    Ok((d, manifest))
}

/// Resolved reconstruction settings, echoed in the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub c0: f64,
    pub c1: f64,
    pub subset_cap: usize,
    pub method: Method,
    pub tau_method: TauMethod,
    pub class: AnisotropyClass,
    pub base_node: Option<usize>,
    pub tau_reference: Option<f64>,
    pub error_margin: usize,
    pub cg_tol: f64,
    pub cg_max_iter: Option<usize>,
}

impl From<&ReconConfig<f64>> for ConfigEcho {
    fn from(c: &ReconConfig<f64>) -> Self {
        Self {
            c0: c.c0,
            c1: c.c1,
            subset_cap: c.subset_cap,
            method: c.method,
            tau_method: c.tau_method,
            class: c.class,
            base_node: c.base_node,
            tau_reference: c.tau_reference,
            error_margin: c.error_margin,
            cg_tol: c.cg_tol,
            cg_max_iter: c.cg_max_iter,
        }
    }
}

/// Contents of `recon_report.json`. Error fields are `null` without
/// ground truth.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub f1_min: f64,
    pub f2_min: f64,
    pub masked_fraction: f64,
    pub err_ctilde_p0: Option<f64>,
    pub err_ctilde_p1: Option<f64>,
    pub err_tau_p0: Option<f64>,
    pub err_tau_p1: Option<f64>,
    pub err_divc_p0: Option<f64>,
    pub err_divc_p1: Option<f64>,
    pub scored_nodes: Option<usize>,
    pub fields: usize,
    pub dims: [usize; 3],
    /// Method actually applied at the nodes.
    pub method: Method,
    pub subsets_sampled: bool,
    pub tau_bases: Vec<usize>,
    pub tau_cg_iterations: usize,
    pub mask_reasons: BTreeMap<String, usize>,
    pub config: ConfigEcho,
    pub scenario: Scenario,
}

fn reason_name(r: MaskReason) -> &'static str {
    match r {
        MaskReason::Ok => "ok",
        MaskReason::HypothesisA => "hypothesis-a",
        MaskReason::HypothesisB => "hypothesis-b",
        MaskReason::Normalization => "normalization",
        MaskReason::Tau => "tau",
    }
}

impl ReportFile {
    pub fn new(r: &ReconReport<f64>, cfg: &ReconConfig<f64>, s: &Scenario, fields: usize) -> Self {
        let e = r.errors;
        let mut mask_reasons = BTreeMap::new();
        for reason in &r.reasons {
            *mask_reasons.entry(reason_name(*reason).to_string()).or_insert(0) += 1;
        }
        Self {
            f1_min: r.f1_min(),
            f2_min: r.f2_min(),
            masked_fraction: r.masked_fraction(),
            err_ctilde_p0: e.map(|e| e.err_ctilde_p0),
            err_ctilde_p1: e.map(|e| e.err_ctilde_p1),
            err_tau_p0: e.map(|e| e.err_tau_p0),
            err_tau_p1: e.map(|e| e.err_tau_p1),
            err_divc_p0: e.map(|e| e.err_divc_p0),
            err_divc_p1: e.map(|e| e.err_divc_p1),
            scored_nodes: e.map(|e| e.scored_nodes),
            fields,
            dims: r.grid.dims,
            method: r.method,
            subsets_sampled: r.subsets_sampled,
            tau_bases: r.tau_bases.clone(),
            tau_cg_iterations: r.cg_iterations,
            mask_reasons,
            config: cfg.into(),
            scenario: s.clone(),
        }
    }
}

/// Data of a `recon` run: read from `inputs` when given, generated from
/// the scenario otherwise.
pub fn recon_dataset(s: &Scenario) -> Result<Dataset> {
    match (&s.inputs, s.kind) {
        (Some(dir), _) => Ok(read_dataset(dir)?.0),
        (None, Kind::FromFiles) => Err(CliError::Config("from-files needs an inputs directory".into())),
        (None, _) => generate(s, false),
    }
}

pub fn run_recon(s: &Scenario, d: &Dataset) -> Result<(ReconReport<f64>, ReconConfig<f64>)> {
    let cfg = s.recon.to_config(d.class, &d.grid);
    let m = d.measurements()?;
    let report = reconstruct(&m, &cfg, d.truth.as_ref())?;
    Ok((report, cfg))
}

pub fn write_recon(
    dir: &Path,
    r: &ReconReport<f64>,
    cfg: &ReconConfig<f64>,
    s: &Scenario,
    fields: usize,
) -> Result<ReportFile> {
    fs::create_dir_all(dir)?;
    io::save(dir.join("ctilde.efld"), &r.ctilde)?;
    io::save(dir.join("tau.efld"), &r.tau)?;
    io::save(dir.join("divc.efld"), &r.divc)?;
    io::save(dir.join("stiffness.efld"), &r.stiffness())?;
    io::save(dir.join("f1.efld"), &r.f1)?;
    io::save(dir.join("f2.efld"), &r.f2)?;
    let mask = Field::from_data(r.grid, 1, r.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())?;
    io::save(dir.join("mask.efld"), &mask)?;
    let file = ReportFile::new(r, cfg, s, fields);
    fs::write(dir.join(REPORT_FILE), serde_json::to_string_pretty(&file)?)?;
    Ok(file)
}

pub fn cmd_gen(s: &Scenario, out: &Path) -> Result<Dataset> {
    let d = generate(s, false)?;
    write_dataset(out, &d, s)?;
    Ok(d)
}

pub fn cmd_solve(s: &Scenario, out: &Path) -> Result<Dataset> {
    let d = generate(s, true)?;
    write_dataset(out, &d, s)?;
    Ok(d)
}

/// Writes the outputs, then fails with [`CliError::Hypotheses`] when fewer
/// than 90% of the nodes are unmasked.
pub fn cmd_recon(s: &Scenario, out: &Path) -> Result<ReportFile> {
    let d = recon_dataset(s)?;
    let (r, cfg) = run_recon(s, &d)?;
    let file = write_recon(out, &r, &cfg, s, d.strains.len())?;
    let unmasked = 1.0 - file.masked_fraction;
    if unmasked < MIN_UNMASKED {
        return Err(CliError::Hypotheses { unmasked });
    }
    Ok(file)
}

/// Summary printed by `check`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub kind: Kind,
    pub lambda_min: Option<f64>,
    pub det_lower_bound: Option<f64>,
    pub fields: usize,
    /// Rank of the constraint rows of the polynomial fields at the base
    /// tensor (20 is full for the general class).
    pub constraint_rank: Option<usize>,
    pub f1_min: Option<f64>,
}

/// Validates the scenario (or the input directory) without reconstructing.
pub fn cmd_check(s: &Scenario) -> Result<CheckReport> {
    if let Some(dir) = &s.inputs {
        let (d, _) = read_dataset(dir)?;
        let m = d.measurements()?;
        let f1 = elastorecon::recon::f1_map(&m);
        return Ok(CheckReport {
            kind: Kind::FromFiles,
            lambda_min: None,
            det_lower_bound: None,
            fields: d.strains.len(),
            constraint_rank: None,
            f1_min: Some(f1.data.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()))),
        });
    }
    let c = s.base_tensor()?;
    let st = stability_check(&c);
    let polys = s.polynomials()?;
    Ok(CheckReport {
        kind: s.kind,
        lambda_min: Some(st.lambda_min),
        det_lower_bound: Some(st.det_lower_bound),
        fields: polys.len(),
        constraint_rank: (s.class() == AnisotropyClass::General).then(|| constraint_rank(&polys)),
        f1_min: None,
    })
}

/// One `bench` run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub parameter: String,
    pub value: f64,
    pub err_ctilde_p0: f64,
    pub err_ctilde_p1: f64,
    pub err_tau_p0: f64,
    pub err_tau_p1: f64,
    pub err_divc_p0: f64,
    pub err_divc_p1: f64,
    pub f1_min: f64,
    pub f2_min: f64,
    pub masked_fraction: f64,
    pub scored_nodes: usize,
    /// Wall-clock seconds; the only column that varies between runs.
    pub runtime_s: f64,
}

fn sweep_points(s: &Scenario) -> Result<Vec<(String, f64, Scenario)>> {
    let sweep = s
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("bench needs a sweep".into()))?;
    let mut out = Vec::new();
    match sweep {
        Sweep::Eta(v) => {
            for &x in v {
                out.push(("eta".into(), x, Scenario { eta: x, ..s.clone() }));
            }
        }
        Sweep::Delta(v) => {
            if s.kind != Kind::NearConstant {
                return Err(CliError::Config("a delta sweep needs the near-constant kind".into()));
            }
            for &x in v {
                out.push(("delta".into(), x, Scenario { delta: x, ..s.clone() }));
            }
        }
        Sweep::Grid(v) => {
            for &n in v {
                let h = 1.0 / (n - 1) as f64;
                out.push(("h".into(), h, Scenario { grid: n, ..s.clone() }));
            }
        }
    }
    for (_, _, p) in &out {
        p.validate()?;
    }
    Ok(out)
}

fn bench_row(parameter: String, value: f64, s: &Scenario) -> Result<BenchRow> {
    let start = Instant::now();
    let d = generate(s, false)?;
    let (r, _) = run_recon(s, &d)?;
    let e = r.errors.ok_or_else(|| CliError::Config("bench needs ground truth".into()))?;
    Ok(BenchRow {
        parameter,
        value,
        err_ctilde_p0: e.err_ctilde_p0,
        err_ctilde_p1: e.err_ctilde_p1,
        err_tau_p0: e.err_tau_p0,
        err_tau_p1: e.err_tau_p1,
        err_divc_p0: e.err_divc_p0,
        err_divc_p1: e.err_divc_p1,
        f1_min: r.f1_min(),
        f2_min: r.f2_min(),
        masked_fraction: r.masked_fraction(),
        scored_nodes: e.scored_nodes,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs the sweep in parallel, rows in sweep order.
pub fn run_bench(s: &Scenario) -> Result<Vec<BenchRow>> {
    sweep_points(s)?
        .into_par_iter()
        .map(|(name, value, p)| bench_row(name, value, &p))
        .collect()
}

pub fn cmd_bench(s: &Scenario, out: &Path) -> Result<Vec<BenchRow>> {
    let rows = run_bench(s)?;
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join(BENCH_FILE))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}
