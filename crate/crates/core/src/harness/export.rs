//! Files written for a report. Everything here is a pure function of the
//! report, so re-exporting a loaded `report.json` reproduces every file.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::similarity::SimilarityMatrix;
use crate::spectral::Clustering;

use super::run::ExperimentReport;

pub const REPORT_FILE: &str = "report.json";
/// Each canvas cell becomes a square of this many pixels.
pub const CANVAS_SCALE: usize = 8;

/// Names of every file `export_artifacts` writes, in writing order.
pub fn artifact_names(report: &ExperimentReport) -> Vec<String> {
    let mut names = vec![REPORT_FILE.to_string(), "codebook.json".to_string()];
    for a in &report.analyses {
        let sfx = a.suffix();
        names.push(format!("ncut{sfx}.csv"));
        names.push(format!("similarity{sfx}.csv"));
        names.push(format!("heatmap{sfx}.pgm"));
    }
    for r in &report.primary().reconstructions {
        names.push(format!("recon_{}.ppm", r.cluster));
        names.push(format!("recon_{}.json", r.cluster));
    }
    names
}

/// States ordered cluster by cluster, ascending within a cluster, with
/// unclustered states last.
pub fn cluster_order(clustering: &Clustering) -> Vec<usize> {
    let mut order: Vec<usize> = (0..clustering.labels.len()).collect();
    order.sort_by_key(|&s| (clustering.labels[s].unwrap_or(usize::MAX), s));
    order
}

/// Binary PGM of `m` with rows and columns taken in `order`; values in
/// `[0, 1]` map linearly onto `[0, 255]`, anything outside is clipped.
pub fn write_heatmap_pgm<W: Write>(mut w: W, m: &SimilarityMatrix, order: &[usize]) -> io::Result<()> {
    let n = order.len();
    write!(w, "P5\n{n} {n}\n255\n")?;
    let mut line = vec![0u8; n];
    for &i in order {
        for (px, &j) in line.iter_mut().zip(order) {
            *px = (m.get(i, j).clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        w.write_all(&line)?;
    }
    Ok(())
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Write the report and every derived file into `out_dir`, creating it if
/// needed. Returns the paths written.
pub fn export_artifacts(report: &ExperimentReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: String, body: &dyn Fn(&mut BufWriter<fs::File>) -> io::Result<()>| -> Result<()> {
        let path = out_dir.join(&name);
        write_file(&path, |w| body(w))?;
        written.push(path);
        Ok(())
    };

    emit(REPORT_FILE.into(), &|w| writeln!(w, "{}", report.to_json()))?;
    let codebook = Codebook::from_centroids(report.centroids.clone());
    emit("codebook.json".into(), &|w| writeln!(w, "{}", codebook.to_json()))?;
    for a in &report.analyses {
        let sfx = a.suffix();
        let m = a.matrix();
        emit(format!("ncut{sfx}.csv"), &|w| w.write_all(a.ncut.to_csv().as_bytes()))?;
        emit(format!("similarity{sfx}.csv"), &|w| m.write_csv(w))?;
        let order = cluster_order(&a.clustering);
        emit(format!("heatmap{sfx}.pgm"), &|w| write_heatmap_pgm(w, &m, &order))?;
    }
    for r in &report.primary().reconstructions {
        emit(format!("recon_{}.ppm", r.cluster), &|w| r.canvas.write_ppm(w, CANVAS_SCALE))?;
        emit(format!("recon_{}.json", r.cluster), &|w| writeln!(w, "{}", r.canvas.to_json()))?;
    }
    Ok(written)
}

pub fn load_report(dir: &Path) -> Result<ExperimentReport> {
    let path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path, source })
}
