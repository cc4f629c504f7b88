//! On-disk cohort layout.
//!
//! ```text
//! DIR/cohort.json           {"atlas": [...], "subjects": [{"id","label","sc_path","fc_path","volumes_path"}]}
//! DIR/sc/<id>.csv           N rows of N comma-separated decimals
//! DIR/fc/<id>.csv
//! DIR/volumes/<id>.txt      N lines, one decimal each
//! ```
//!
//! Paths in the manifest are relative to the manifest's directory. Floats
//! are written in shortest round-trip form, so a save/load cycle is exact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cohort::{Cohort, RoiAtlas, Subject};
use super::matrix::ConnectivityMatrix;
use crate::error::{HscfError, Result};
use crate::tensor::Tensor;

pub const MANIFEST_NAME: &str = "cohort.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    atlas: Vec<String>,
    subjects: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    label: String,
    sc_path: String,
    fc_path: String,
    volumes_path: String,
}

pub fn matrix_to_csv(t: &Tensor) -> String {
    let mut out = String::new();
    for i in 0..t.rows() {
        let row: Vec<String> = t.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn parse_matrix(text: &str, subject: &str, what: &str) -> Result<Tensor> {
    let malformed = |detail: String| HscfError::Malformed {
        subject: subject.to_string(),
        detail: format!("{what}: {detail}"),
    };
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(r, line)| {
            line.split(',')
                .map(|cell| {
                    cell.trim()
                        .parse::<f64>()
                        .map_err(|_| malformed(format!("bad number {cell:?} on row {r}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(malformed(format!("expected a square matrix, got {n} rows")));
    }
    Tensor::from_rows(&rows).map_err(|e| malformed(e.to_string()))
}

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(HscfError::MissingFile {
            path: path.to_path_buf(),
        });
    }
    fs::read_to_string(path).map_err(|e| HscfError::io(format!("reading {}", path.display()), e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| HscfError::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(path, contents).map_err(|e| HscfError::io(format!("writing {}", path.display()), e))
}

/// Writes `cohort` under `dir` and returns the manifest path.
pub fn save_cohort(cohort: &Cohort, dir: &Path) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(cohort.len());
    for s in &cohort.subjects {
        let entry = ManifestEntry {
            id: s.id.clone(),
            label: s.label.to_string(),
            sc_path: format!("sc/{}.csv", s.id),
            fc_path: format!("fc/{}.csv", s.id),
            volumes_path: format!("volumes/{}.txt", s.id),
        };
        write(&dir.join(&entry.sc_path), &matrix_to_csv(s.sc.weights()))?;
        write(&dir.join(&entry.fc_path), &matrix_to_csv(s.fc.weights()))?;
        let vols: String = s.volumes.iter().map(|v| format!("{v}\n")).collect();
        write(&dir.join(&entry.volumes_path), &vols)?;
        entries.push(entry);
    }
    let manifest = Manifest {
        atlas: cohort.atlas.names().to_vec(),
        subjects: entries,
    };
    let path = dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| HscfError::json("encoding manifest", e))?;
    write(&path, &(text + "\n"))?;
    Ok(path)
}

/// Loads a cohort from a manifest file, or from a directory containing
/// `cohort.json`.
pub fn load_cohort(path: &Path) -> Result<Cohort> {
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    };
    let text = read(&manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| HscfError::json(format!("parsing {}", manifest_path.display()), e))?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let atlas = RoiAtlas::new(manifest.atlas)?;

    let mut subjects = Vec::with_capacity(manifest.subjects.len());
    for entry in manifest.subjects {
        let label = entry
            .label
            .parse()
            .map_err(|label| HscfError::InvalidLabel {
                subject: entry.id.clone(),
                label,
            })?;
        let sc = parse_matrix(&read(&root.join(&entry.sc_path))?, &entry.id, "sc")?;
        let fc = parse_matrix(&read(&root.join(&entry.fc_path))?, &entry.id, "fc")?;
        let sc = ConnectivityMatrix::validated(sc, &entry.id, "sc")?;
        let fc = ConnectivityMatrix::validated(fc, &entry.id, "fc")?;
        let volumes = read(&root.join(&entry.volumes_path))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim().parse::<f64>().map_err(|_| HscfError::Malformed {
                    subject: entry.id.clone(),
                    detail: format!("bad volume {l:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        subjects.push(Subject::new(entry.id, label, sc, fc, volumes)?);
    }
    Cohort::new(atlas, subjects)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::generate_synthetic_cohort;

    fn small_cohort() -> Cohort {
        let mut c = generate_synthetic_cohort(9, 2, 6, 0.3).unwrap();
        c.subjects.truncate(3);
        c
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cohort = small_cohort();
        let manifest = save_cohort(&cohort, dir.path()).unwrap();
        assert_eq!(load_cohort(&manifest).unwrap(), cohort);
        assert_eq!(load_cohort(dir.path()).unwrap(), cohort);
    }

    #[test]
    fn out_of_range_weight_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cohort = small_cohort();
        save_cohort(&cohort, dir.path()).unwrap();
        let id = &cohort.subjects[0].id;
        let mut t = cohort.subjects[0].sc.weights().clone();
        t.set(0, 1, 1.5);
        t.set(1, 0, 1.5);
        fs::write(dir.path().join(format!("sc/{id}.csv")), matrix_to_csv(&t)).unwrap();
        let err = load_cohort(dir.path()).unwrap_err();
        assert!(matches!(err, HscfError::OutOfRange { .. }), "{err}");
        assert!(err.to_string().contains(id.as_str()));
    }

    #[test]
    fn bad_label_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_cohort(&small_cohort(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_NAME);
        let text = fs::read_to_string(&path)
            .unwrap()
            .replacen("\"NC\"", "\"AD\"", 1);
        fs::write(&path, text).unwrap();
        assert!(
            matches!(load_cohort(&path), Err(HscfError::InvalidLabel { label, .. }) if label == "AD")
        );
    }

    #[test]
    fn missing_and_asymmetric_files() {
        let dir = tempfile::tempdir().unwrap();
        let cohort = small_cohort();
        save_cohort(&cohort, dir.path()).unwrap();
        let id = &cohort.subjects[1].id;
        let fc_path = dir.path().join(format!("fc/{id}.csv"));
        let mut t = cohort.subjects[1].fc.weights().clone();
        t.set(0, 2, 0.123);
        fs::write(&fc_path, matrix_to_csv(&t)).unwrap();
        assert!(matches!(
            load_cohort(dir.path()),
            Err(HscfError::Asymmetric { .. })
        ));
        fs::remove_file(&fc_path).unwrap();
        assert!(matches!(
            load_cohort(dir.path()),
            Err(HscfError::MissingFile { .. })
        ));
        assert!(matches!(
            load_cohort(&dir.path().join("nope.json")),
            Err(HscfError::MissingFile { .. })
        ));
    }
}
