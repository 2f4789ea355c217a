use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, L1_CLASSES, L2_CLASSES, L3_CLASSES};

/// One image with its three-level label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledSample {
    /// Position among the manifest's accepted entries; stable across runs.
    pub id: usize,
    pub image_path: String,
    pub l1: usize,
    pub l2: usize,
    pub l3: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedEntry {
    pub line: usize,
    pub image_path: String,
    pub reason: String,
}

/// Parsed manifest: accepted samples plus the entries dropped for missing files.
#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub samples: Vec<LabeledSample>,
    pub skipped: Vec<SkippedEntry>,
    /// Non-empty lines seen, including skipped ones.
    pub entries: usize,
}

fn parse_label(
    field: &str,
    level: &'static str,
    limit: usize,
    source_name: &str,
    line: usize,
) -> Result<usize, DatasetError> {
    let value: u64 = field.trim().parse().map_err(|_| DatasetError::Malformed {
        source_name: source_name.to_string(),
        line,
        reason: format!(
            "{level} label {:?} is not a non-negative integer",
            field.trim()
        ),
    })?;
    if value >= limit as u64 {
        return Err(DatasetError::LabelOutOfRange {
            source_name: source_name.to_string(),
            line,
            level,
            value,
            limit,
        });
    }
    Ok(value as usize)
}

/// Parses `relative/path.jpg,l1,l2,l3` lines. Blank lines are ignored.
///
/// With `image_root`, entries whose file does not exist under it are moved to
/// [`Manifest::skipped`] instead of failing the parse.
pub fn parse_manifest_str(
    text: &str,
    source_name: &str,
    image_root: Option<&Path>,
) -> Result<Manifest, DatasetError> {
    let mut out = Manifest::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        out.entries += 1;
        // paths may contain commas, labels never do
        let fields: Vec<&str> = line.rsplitn(4, ',').collect();
        if fields.len() != 4 || fields[3].trim().is_empty() {
            return Err(DatasetError::Malformed {
                source_name: source_name.to_string(),
                line: line_no,
                reason: format!("expected `path,l1,l2,l3`, got {line:?}"),
            });
        }
        let path = fields[3].trim().to_string();
        let l1 = parse_label(fields[2], "l1", L1_CLASSES, source_name, line_no)?;
        let l2 = parse_label(fields[1], "l2", L2_CLASSES, source_name, line_no)?;
        let l3 = parse_label(fields[0], "l3", L3_CLASSES, source_name, line_no)?;
        if let Some(root) = image_root {
            if !root.join(&path).is_file() {
                out.skipped.push(SkippedEntry {
                    line: line_no,
                    image_path: path,
                    reason: "image file not found".into(),
                });
                continue;
            }
        }
        out.samples.push(LabeledSample {
            id: out.samples.len(),
            image_path: path,
            l1,
            l2,
            l3,
        });
    }
    if !out.skipped.is_empty() {
        log::warn!(
            "{source_name}: {} of {} entries skipped (missing image files)",
            out.skipped.len(),
            out.entries
        );
    }
    log::info!(
        "{source_name}: {} samples accepted from {} entries",
        out.samples.len(),
        out.entries
    );
    Ok(out)
}

pub fn parse_manifest(path: &Path, image_root: Option<&Path>) -> Result<Manifest, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    parse_manifest_str(&text, &path.display().to_string(), image_root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_maps_fields() {
        let m = parse_manifest_str("Tree_Pose/img_001.jpg,0,2,10\n", "m", None).unwrap();
        assert_eq!(
            m.samples,
            vec![LabeledSample {
                id: 0,
                image_path: "Tree_Pose/img_001.jpg".into(),
                l1: 0,
                l2: 2,
                l3: 10
            }]
        );
    }

    #[test]
    fn out_of_range_leaf_names_value() {
        let err = parse_manifest_str("a.jpg,0,1,5\nx.jpg,0,2,99\n", "m", None).unwrap_err();
        match err {
            DatasetError::LabelOutOfRange {
                line, level, value, ..
            } => {
                assert_eq!((line, level, value), (2, "l3", 99));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err =
            parse_manifest_str("\na.jpg,0,1,5\nbroken line\n", "train.txt", None).unwrap_err();
        assert!(err.to_string().starts_with("train.txt:3:"), "{err}");
        let err = parse_manifest_str("a.jpg,0,x,5\n", "m", None).unwrap_err();
        assert!(matches!(err, DatasetError::Malformed { line: 1, .. }));
    }

    #[test]
    fn missing_files_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("A")).unwrap();
        std::fs::write(dir.path().join("A/1.jpg"), b"x").unwrap();
        let m = parse_manifest_str(
            "A/1.jpg,0,0,0\nA/2.jpg,0,0,0\nA/1.jpg,0,0,0\n",
            "m",
            Some(dir.path()),
        )
        .unwrap();
        assert_eq!(m.samples.len(), 2);
        assert_eq!(m.samples[1].id, 1);
        assert_eq!(m.skipped.len(), 1);
        assert_eq!(m.skipped[0].line, 2);
        assert_eq!(m.entries, 3);
    }
}
