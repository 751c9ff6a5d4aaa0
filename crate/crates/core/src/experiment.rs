//! End-to-end runs driven by a [`RunConfig`]: node generation, smoothing,
//! the Laplace comparison, and the files each of them writes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{classify_boundary, generate_nodes, select_data_sites, spacing_for_target, NodeRole, NodeSet};
use crate::io::{write_config, write_history_csv, write_mesh, write_summary, HistoryRow, MeshFile, RunConfig, RunSummary};
use crate::mesh::{QualityReport, SimplicialMesh, Stencils};
use crate::smoothing::{self, laplace_smooth, SmoothingRun};

pub use crate::io::ExperimentCase;

/// Node set of a config and the spacing used to build it.
pub fn build_nodes(cfg: &RunConfig) -> Result<(NodeSet, f64)> {
    let domain = cfg.domain()?;
    let h = match cfg.h {
        Some(h) => h,
        None => spacing_for_target(&domain, cfg.n_target, cfg.seed)?,
    };
    let nodes = generate_nodes(&domain, h, cfg.seed)?;
    let nodes = classify_boundary(&nodes, &domain, cfg.alpha)?;
    let nodes = select_data_sites(&nodes, cfg.p, cfg.seed)?;
    Ok((nodes, h))
}

fn role_code(r: NodeRole) -> f64 {
    match r {
        NodeRole::Interior => 0.0,
        NodeRole::Boundary => 1.0,
        NodeRole::DataSite => 2.0,
    }
}

fn mesh_file(mesh: &SimplicialMesh, report: &QualityReport, nodes: &NodeSet) -> MeshFile {
    MeshFile::new(mesh.clone())
        .with_point_field("q_y", report.q_y.clone())
        .with_point_field("role", nodes.roles().iter().map(|&r| role_code(r)).collect())
        .with_cell_field("q_e", report.q_e.clone())
}

fn report_for(mesh: &SimplicialMesh) -> QualityReport {
    QualityReport::compute(mesh, &Stencils::build(mesh))
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// A finished run and where its files went.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub config: RunConfig,
    pub nodes: NodeSet,
    pub spacing: f64,
    pub run: SmoothingRun,
    pub summary: RunSummary,
    pub dir: PathBuf,
}

impl ExperimentOutput {
    pub fn iteration_path(&self, i: usize) -> PathBuf {
        self.dir.join(format!("iter_{i:03}.vtk"))
    }
}

/// Runs the smoothing pipeline and writes, into `output_dir`:
/// `config.toml`, `undeformed.vtk`, `deformed.vtk` (unsmoothed),
/// `iter_NNN.vtk` per assessed iteration, `best.vtk`, `history.csv` and
/// `summary.json`. Only `summary.json` carries wall-clock data.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let dir = output_dir(cfg)?;
    let (nodes, spacing) = build_nodes(cfg)?;
    let run = smoothing::run(
        &nodes,
        &cfg.domain()?,
        &cfg.map(),
        &cfg.smoothing_params(),
        &cfg.kernel_config(),
    )?;

    write_config(dir.join("config.toml"), cfg)?;
    let undeformed = report_for(&run.undeformed_mesh);
    write_mesh(dir.join("undeformed.vtk"), &mesh_file(&run.undeformed_mesh, &undeformed, &nodes))?;
    write_mesh(dir.join("deformed.vtk"), &mesh_file(&run.meshes[0], &run.reports[0], &nodes))?;
    if cfg.write_iterations {
        for (i, (m, r)) in run.meshes.iter().zip(&run.reports).enumerate() {
            write_mesh(dir.join(format!("iter_{i:03}.vtk")), &mesh_file(m, r, &nodes))?;
        }
    }
    write_mesh(dir.join("best.vtk"), &mesh_file(run.best_mesh(), &run.reports[run.best], &nodes))?;
    let rows: Vec<HistoryRow> = run.records.iter().map(HistoryRow::from).collect();
    write_history_csv(dir.join("history.csv"), &rows)?;

    let summary = RunSummary {
        case: cfg.case.name().to_string(),
        seed: cfg.seed,
        spacing,
        eps_star: run.eps_star,
        kappa_star: run.kappa_star,
        fit_residual: run.fit_residual,
        n: nodes.len(),
        n_interior: nodes.num_interior(),
        n_boundary: nodes.num_boundary(),
        n_data_sites: nodes.num_data_sites(),
        history: run.records.clone(),
        termination_iteration: run.termination_iteration,
        termination_reason: run.termination,
        best_iteration: run.best,
        timings: run.timings.means(),
    };
    write_summary(dir.join("summary.json"), &summary)?;
    Ok(ExperimentOutput {
        config: cfg.clone(),
        nodes,
        spacing,
        run,
        summary,
        dir,
    })
}

/// One row of `comparison.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub iterations: usize,
    pub norm2_qe: f64,
    pub min_qe: f64,
    pub mean_qe: f64,
    pub norm2_qy: f64,
    pub min_qy: f64,
    pub inverted_count: usize,
}

impl ComparisonRow {
    fn new(method: &str, iterations: usize, r: &QualityReport) -> Self {
        ComparisonRow {
            method: method.to_string(),
            iterations,
            norm2_qe: r.norm2_qe,
            min_qe: r.min_qe,
            mean_qe: r.mean_qe,
            norm2_qy: r.norm2_qy,
            min_qy: r.min_qy,
            inverted_count: r.inverted_count,
        }
    }
}

#[derive(Debug)]
pub struct LaplaceComparison {
    pub experiment: ExperimentOutput,
    /// Smoothing iterations of the shape-parameter run, reused for Laplace.
    pub iterations: usize,
    pub laplace_mesh: SimplicialMesh,
    pub unsmoothed: QualityReport,
    pub rbf: QualityReport,
    pub laplace: QualityReport,
}

impl LaplaceComparison {
    pub fn rows(&self) -> Vec<ComparisonRow> {
        vec![
            ComparisonRow::new("unsmoothed", 0, &self.unsmoothed),
            ComparisonRow::new("rbf", self.iterations, &self.rbf),
            ComparisonRow::new("laplace", self.iterations, &self.laplace),
        ]
    }
}

/// Runs the experiment, then applies as many Laplace sweeps as it took
/// smoothing iterations to the deformed, unsmoothed mesh. Adds `laplace.vtk`
/// and `comparison.csv` to the output directory.
pub fn compare_laplace(cfg: &RunConfig) -> Result<LaplaceComparison> {
    let experiment = run_experiment(cfg)?;
    let run = &experiment.run;
    let nodes = &experiment.nodes;
    let iterations = run.smoothing_iterations();
    let fixed: Vec<bool> = nodes.roles().iter().map(|r| r.is_boundary()).collect();
    let laplace_mesh = laplace_smooth(&run.meshes[0], &fixed, iterations, run.context.hole.as_deref())?;
    let laplace = report_for(&laplace_mesh);
    write_mesh(experiment.dir.join("laplace.vtk"), &mesh_file(&laplace_mesh, &laplace, nodes))?;

    let cmp = LaplaceComparison {
        iterations,
        laplace_mesh,
        unsmoothed: run.reports[0].clone(),
        rbf: run.reports[run.best].clone(),
        laplace,
        experiment,
    };
    write_comparison_csv(cmp.experiment.dir.join("comparison.csv"), &cmp.rows())?;
    Ok(cmp)
}

pub fn write_comparison_csv(path: impl AsRef<Path>, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| Error::Io(e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Generates the node set of a config and writes `nodes.csv`
/// (coordinates and role) to the output directory.
pub fn gen_nodes(cfg: &RunConfig) -> Result<(NodeSet, PathBuf)> {
    cfg.validate()?;
    let dir = output_dir(cfg)?;
    let (nodes, _) = build_nodes(cfg)?;
    let path = dir.join("nodes.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Io(e.into()))?;
    let axes = ["x", "y", "z"];
    let mut header: Vec<&str> = axes[..nodes.dim()].to_vec();
    header.push("role");
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    for (p, r) in nodes.points().iter().zip(nodes.roles()) {
        let mut rec: Vec<String> = p.iter().map(|c| format!("{c:.16e}")).collect();
        rec.push(
            match r {
                NodeRole::Interior => "interior",
                NodeRole::Boundary => "boundary",
                NodeRole::DataSite => "data_site",
            }
            .to_string(),
        );
        w.write_record(&rec).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok((nodes, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{read_history_csv, read_mesh};

    fn small(dir: &Path, case: ExperimentCase) -> RunConfig {
        let mut c = RunConfig::for_case(case);
        c.n_target = 300;
        c.max_iterations = 6;
        c.output_dir = dir.to_string_lossy().into_owned();
        c
    }

    #[test]
    fn run_writes_all_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let out = run_experiment(&small(tmp.path(), ExperimentCase::SquareToDisk)).unwrap();
        for f in ["config.toml", "undeformed.vtk", "deformed.vtk", "best.vtk", "history.csv", "summary.json"] {
            assert!(out.dir.join(f).exists(), "{f}");
        }
        let rows = read_history_csv(out.dir.join("history.csv")).unwrap();
        assert_eq!(rows.len(), out.run.history.len());
        for (row, rec) in rows.iter().zip(&out.summary.history) {
            assert_eq!(row.norm2_qe, rec.norm2_qe);
            assert_eq!(row.inverted_count, rec.inverted_count);
        }
        for i in 0..out.run.history.len() {
            let f = read_mesh(out.iteration_path(i)).unwrap();
            assert_eq!(f.mesh, out.run.meshes[i]);
        }
        let best = read_mesh(out.dir.join("best.vtk")).unwrap();
        assert_eq!(&best.mesh, out.run.best_mesh());
        assert_eq!(best.cell_field("q_e").unwrap(), out.run.reports[out.run.best].q_e.as_slice());
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(json["n"], out.nodes.len());
        assert!(json["timings"]["33"].as_f64().unwrap() >= 0.0);
    }

    #[test]
    fn zero_delta_keeps_deformed_mesh() {
        let tmp = tempfile::tempdir().unwrap();
        let mut c = small(tmp.path(), ExperimentCase::SquareToDisk);
        c.delta = 0.0;
        c.max_iterations = 3;
        let out = run_experiment(&c).unwrap();
        assert_eq!(
            fs::read(out.dir.join("deformed.vtk")).unwrap(),
            fs::read(out.dir.join("best.vtk")).unwrap()
        );
    }

    #[test]
    fn laplace_comparison_uses_same_iterations() {
        let tmp = tempfile::tempdir().unwrap();
        let cmp = compare_laplace(&small(tmp.path(), ExperimentCase::AnnulusToAirfoil)).unwrap();
        let rows = cmp.rows();
        assert_eq!(rows[1].iterations, rows[2].iterations);
        assert_eq!(cmp.iterations, cmp.experiment.run.history.len() - 1);
        let text = fs::read_to_string(cmp.experiment.dir.join("comparison.csv")).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("method,iterations,"));
        assert!(cmp.experiment.dir.join("laplace.vtk").exists());
    }

    #[test]
    fn gen_nodes_writes_roles() {
        let tmp = tempfile::tempdir().unwrap();
        let (nodes, path) = gen_nodes(&small(tmp.path(), ExperimentCase::CubeToSphere)).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert!(text.starts_with("x,y,z,role\n"));
        assert_eq!(text.lines().count(), nodes.len() + 1);
        assert_eq!(text.matches(",data_site").count(), nodes.num_data_sites());
    }
}
