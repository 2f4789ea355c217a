use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{load_image, preprocess, save_png, PrepError, PrepParams};
use crate::par;

pub const PREPARE_MANIFEST: &str = "prepare_manifest.csv";
const EXTENSIONS: [&str; 6] = ["jpg", "jpeg", "png", "bmp", "gif", "webp"];

/// One processed file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedFile {
    /// Relative to the input directory.
    pub input: PathBuf,
    /// Relative to the output directory.
    pub output: PathBuf,
    /// SHA-256 of the written PNG, lowercase hex.
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrepareSummary {
    pub files: Vec<PreparedFile>,
    /// Files that could not be decoded, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

impl PrepareSummary {
    /// `input,output,sha256` lines under a comment recording the chain.
    pub fn manifest(&self, params: &PrepParams) -> String {
        let mut out = format!(
            "# contrast_factor={} median=3x3 sharpen={} enhance={} target_size={}; same chain for every split\ninput,output,sha256\n",
            params.contrast_factor, params.sharpen_enabled, params.enhance, params.target_size
        );
        for f in &self.files {
            let _ = writeln!(out, "{},{},{}", slash(&f.input), slash(&f.output), f.sha256);
        }
        out
    }
}

fn slash(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn is_image(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Output path of an input image: same relative layout, `.png` extension.
pub fn prepared_path(relative: &Path) -> PathBuf {
    relative.with_extension("png")
}

/// Runs the enhancement chain over every image below `input` and writes PNGs
/// with the same relative layout below `output`, plus [`PREPARE_MANIFEST`].
/// `workers` = 0 uses the global pool.
pub fn prepare_dir(
    input: &Path,
    output: &Path,
    params: &PrepParams,
    workers: usize,
) -> Result<PrepareSummary, PrepError> {
    params.validate()?;
    let io_err = |path: &Path, e: std::io::Error| PrepError::InvalidParam {
        name: "path",
        reason: format!("{}: {e}", path.display()),
    };
    if !input.is_dir() {
        return Err(io_err(
            input,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input directory not found"),
        ));
    }
    let mut inputs: Vec<PathBuf> = walkdir::WalkDir::new(input)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && is_image(e.path()))
        .map(|e| {
            e.path()
                .strip_prefix(input)
                .expect("walk stays below root")
                .to_path_buf()
        })
        .collect();
    inputs.sort();
    let outputs: Vec<PathBuf> = inputs.iter().map(|p| prepared_path(p)).collect();
    for i in 1..outputs.len() {
        if outputs[i] == outputs[i - 1] {
            return Err(PrepError::InvalidParam {
                name: "input",
                reason: format!(
                    "{} and another file both map to {}",
                    inputs[i].display(),
                    outputs[i].display()
                ),
            });
        }
    }
    let process = |i: &usize| -> Result<Result<PreparedFile, String>, PrepError> {
        let (rel_in, rel_out) = (&inputs[*i], &outputs[*i]);
        let img = match load_image(&input.join(rel_in)) {
            Ok(img) => img,
            Err(e) => return Ok(Err(e.to_string())),
        };
        let img = match preprocess(&img, params) {
            Ok(img) => img,
            Err(e @ PrepError::TooSmall { .. }) => return Ok(Err(e.to_string())),
            Err(e) => return Err(e),
        };
        let dest = output.join(rel_out);
        if let Some(parent) = dest.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        save_png(&img, &dest)?;
        let sha256 = crate::backbones::file_sha256(&dest).map_err(|e| PrepError::InvalidParam {
            name: "output",
            reason: e.to_string(),
        })?;
        Ok(Ok(PreparedFile {
            input: rel_in.clone(),
            output: rel_out.clone(),
            sha256,
        }))
    };
    let idx: Vec<usize> = (0..inputs.len()).collect();
    let results = par::Pool::new(workers).install(|| par::map_slice(&idx, process));
    let mut summary = PrepareSummary::default();
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            Ok(f) => summary.files.push(f),
            Err(why) => {
                log::warn!("skipping {}: {why}", inputs[i].display());
                summary.skipped.push((inputs[i].clone(), why));
            }
        }
    }
    std::fs::create_dir_all(output).map_err(|e| io_err(output, e))?;
    let manifest = output.join(PREPARE_MANIFEST);
    std::fs::write(&manifest, summary.manifest(params)).map_err(|e| io_err(&manifest, e))?;
    Ok(summary)
}
