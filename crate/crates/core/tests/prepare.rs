use asana_core::imageprep::*;
use asana_core::synthetic::{write_blob_dataset, BlobSpec};
use sha2::{Digest, Sha256};

#[test]
fn prepare_mirrors_layout_and_hashes_outputs() {
    let raw = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_blob_dataset(
        raw.path(),
        &BlobSpec {
            per_class: 2,
            ..BlobSpec::default()
        },
    )
    .unwrap();
    std::fs::write(raw.path().join("class00/broken.png"), b"not an image").unwrap();
    let params = PrepParams {
        target_size: 40,
        ..PrepParams::default()
    };
    let summary = prepare_dir(raw.path(), out.path(), &params, 0).unwrap();
    assert_eq!(summary.files.len(), 6);
    assert_eq!(summary.skipped.len(), 1);
    for f in &summary.files {
        let bytes = std::fs::read(out.path().join(&f.output)).unwrap();
        assert_eq!(f.sha256, hex::encode(Sha256::digest(&bytes)));
        let img = load_image(&out.path().join(&f.output)).unwrap();
        assert_eq!((img.width(), img.height()), (40, 40));
        let expected =
            preprocess(&load_image(&raw.path().join(&f.input)).unwrap(), &params).unwrap();
        assert_eq!(img, expected);
    }
    let manifest = std::fs::read_to_string(out.path().join(PREPARE_MANIFEST)).unwrap();
    let lines: Vec<_> = manifest.lines().collect();
    assert!(lines[0].starts_with('#'));
    assert_eq!(lines[1], "input,output,sha256");
    assert!(lines[2].starts_with("class00/img000.png,class00/img000.png,"));
    assert_eq!(lines.len(), 8);
    // a second run reproduces the same bytes
    let again = tempfile::tempdir().unwrap();
    assert_eq!(
        prepare_dir(raw.path(), again.path(), &params, 1)
            .unwrap()
            .files,
        summary.files
    );
}

#[test]
fn missing_input_directory_is_an_error() {
    let out = tempfile::tempdir().unwrap();
    let err = prepare_dir(
        &out.path().join("absent"),
        out.path(),
        &PrepParams::default(),
        0,
    )
    .unwrap_err();
    assert!(err.to_string().contains("absent"));
}
