use std::collections::HashSet;
use std::fs;

use sanlite_core::dataset::*;
use sanlite_core::imaging::{BBox, RgbImage, StyleFilter};
use sanlite_core::Error;

fn record(id: &str, k: usize) -> FaceRecord {
    FaceRecord {
        id: id.into(),
        image: default_image_path(id),
        bbox: BBox::new(1.0, 2.0, 30.0, 40.0),
        annotation: LandmarkAnnotation::all_visible((0..k).map(|i| [i as f64 + 0.25, 2.0 * i as f64]).collect()),
        style_tag: None,
    }
}

fn manifest(n: usize) -> DatasetManifest {
    let mut m = DatasetManifest::new("toy", Split::Train, StyleLabel::Original, 5);
    m.records = (0..n).map(|i| record(&format!("r{i:03}"), 5)).collect();
    m
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let mut m = manifest(7);
    m.records[3].annotation.visible[2] = false;
    m.records[4].style_tag = Some("sketch".into());
    write_manifest(&m, &path).unwrap();
    assert_eq!(read_manifest(&path).unwrap(), m);
}

#[test]
fn mixed_landmark_counts_are_rejected() {
    let mut m = manifest(3);
    m.records.push(record("odd", 4));
    let err = m.validate().unwrap_err().to_string();
    assert!(err.contains("odd"), "{err}");
    let dir = tempfile::tempdir().unwrap();
    assert!(write_manifest(&m, &dir.path().join("m.json")).is_err());
}

#[test]
fn malformed_manifests_are_descriptive() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{ not json").unwrap();
    assert!(matches!(read_manifest(&path), Err(Error::Json { .. })));
    let mut value = serde_json::to_value(manifest(1)).unwrap();
    value.as_object_mut().unwrap().remove("num_landmarks");
    fs::write(&path, value.to_string()).unwrap();
    let err = read_manifest(&path).unwrap_err().to_string();
    assert!(err.contains("num_landmarks"), "{err}");
}

#[test]
fn empty_manifest_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    let m = manifest(0);
    write_manifest(&m, &path).unwrap();
    let back = read_manifest(&path).unwrap();
    assert!(back.is_empty());
    assert_eq!(back, m);
}

#[test]
fn split_examples() {
    let m = manifest(100);
    let (train, test) = split_dataset(&m, 0.8, 5).unwrap();
    assert_eq!((train.len(), test.len()), (80, 20));
    assert_eq!((train.split, test.split), (Split::Train, Split::Test));
    let again = split_dataset(&m, 0.8, 5).unwrap();
    assert_eq!((train.clone(), test.clone()), again);
    let ids = |d: &DatasetManifest| d.records.iter().map(|r| r.id.clone()).collect::<HashSet<_>>();
    assert!(ids(&train).is_disjoint(&ids(&test)));
    let union: HashSet<_> = ids(&train).union(&ids(&test)).cloned().collect();
    assert_eq!(union, ids(&m));
    assert_ne!(split_dataset(&m, 0.8, 6).unwrap().0, train);
}

#[test]
fn split_fraction_out_of_range() {
    let m = manifest(10);
    for f in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        assert!(split_dataset(&m, f, 1).is_err(), "{f}");
    }
}

#[test]
fn synthetic_faces_are_seeded() {
    let p = SynthParams::default();
    let a = synth_faces(&p, 6, 42);
    let b = synth_faces(&p, 6, 42);
    assert_eq!(a, b);
    let c = synth_faces(&p, 6, 43);
    assert_ne!(a[0].1, c[0].1);
    // one face does not depend on how many were drawn
    assert_eq!(synth_faces(&p, 2, 42)[1], a[1]);
}

#[test]
fn five_hundred_faces_keep_landmarks_in_their_box() {
    let p = SynthParams::default();
    for (record, image) in synth_faces(&p, 500, 2024) {
        assert_eq!(record.annotation.len(), 5);
        assert_eq!((image.width(), image.height()), (p.image_size, p.image_size));
        for pt in &record.annotation.points {
            assert!(record.bbox.contains(*pt), "{}: {pt:?} outside {:?}", record.id, record.bbox);
        }
        let size = p.image_size as f64;
        assert!(record.bbox.x1 >= 0.0 && record.bbox.y1 >= 0.0 && record.bbox.x2 <= size && record.bbox.y2 <= size);
    }
}

#[test]
fn styled_datasets_copy_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let src_dir = dir.path().join("src");
    let src = generate_synthetic_dataset(&SynthParams::default(), 12, 9, &src_dir, "train", Split::Train).unwrap();
    let src_path = src_dir.join("train.json");
    let out = generate_styled_dataset(&src, &src_path, &StyleFilter::ALL, &dir.path().join("styled")).unwrap();
    assert_eq!(out.iter().map(|s| s.manifest.len()).sum::<usize>(), 3 * src.len());
    for styled in &out {
        let back = read_manifest(&styled.path).unwrap();
        assert_eq!(back, styled.manifest);
        assert_eq!(back.style, styled.style);
        for (a, b) in back.records.iter().zip(&src.records) {
            assert_eq!(a.id, b.id);
            assert_eq!(serde_json::to_string(&a.annotation).unwrap(), serde_json::to_string(&b.annotation).unwrap());
            assert_eq!(serde_json::to_string(&a.bbox).unwrap(), serde_json::to_string(&b.bbox).unwrap());
            let img = RgbImage::load_png(&image_path(&styled.path, a)).unwrap();
            if styled.style == StyleLabel::Gray {
                assert!(img.is_gray());
            }
        }
    }
}

#[test]
fn styled_generation_aborts_on_missing_image() {
    let dir = tempfile::tempdir().unwrap();
    let src_dir = dir.path().join("src");
    let src = generate_synthetic_dataset(&SynthParams::default(), 3, 9, &src_dir, "train", Split::Train).unwrap();
    fs::remove_file(src_dir.join(&src.records[1].image)).unwrap();
    let err = generate_styled_dataset(&src, &src_dir.join("train.json"), &StyleFilter::ALL, &dir.path().join("s")).unwrap_err();
    assert!(matches!(&err, Error::Record { id, .. } if id == &src.records[1].id), "{err}");
}

#[test]
fn pts_sidecars() {
    let text = "version: 1\nn_points: 3\n{\n1.5 2\n3 4.25\n-1 0\n}\n";
    let pts = parse_pts(text).unwrap();
    assert_eq!(pts, vec![[1.5, 2.0], [3.0, 4.25], [-1.0, 0.0]]);
    assert_eq!(parse_pts(&format_pts(&pts)).unwrap(), pts);
    assert!(parse_pts("version: 1\nn_points: 2\n{\n1 2\n}\n").is_err());
    assert!(parse_pts("version: 1\nn_points: 1\n{\n1 x\n}\n").is_err());
}

proptest::proptest! {
    #[test]
    fn manifest_json_preserves_every_float(xs in proptest::collection::vec(-1e4f64..1e4, 10), x1 in -50.0f64..50.0) {
        let mut m = manifest(1);
        m.records[0].annotation.points = xs.chunks(2).map(|c| [c[0], c[1]]).collect();
        m.records[0].bbox = BBox::new(x1, x1 / 3.0, x1 + 17.123456789, x1 + 51.0 / 7.0);
        let json = serde_json::to_string(&m).unwrap();
        let back: DatasetManifest = serde_json::from_str(&json).unwrap();
        proptest::prop_assert_eq!(back, m);
    }
}
