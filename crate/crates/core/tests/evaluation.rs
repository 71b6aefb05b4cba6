use std::cell::RefCell;

use proptest::prelude::*;
use sanlite_core::dataset::{FaceRecord, LandmarkAnnotation, StyleLabel};
use sanlite_core::evaluation::*;
use sanlite_core::imaging::{BBox, Point};
use sanlite_core::Result;

fn annotation(points: Vec<Point>) -> LandmarkAnnotation {
    LandmarkAnnotation::all_visible(points)
}

fn record(id: &str, points: Vec<Point>) -> FaceRecord {
    FaceRecord { id: id.into(), image: format!("{id}.png"), bbox: BBox::new(0.0, 0.0, 40.0, 90.0), annotation: annotation(points), style_tag: None }
}

fn result(detector: &str, dataset: &str, nme: Vec<f64>) -> EvalResult {
    EvalResult {
        dataset: dataset.into(),
        detector: detector.into(),
        normalizer: Normalizer::FaceSize,
        record_ids: (0..nme.len()).map(|i| format!("r{i}")).collect(),
        nme,
    }
}

#[test]
fn nme_examples() {
    let gt = annotation(vec![[0.0, 0.0], [100.0, 0.0]]);
    assert_eq!(nme(&gt.points, &gt, 100.0).unwrap(), 0.0);
    let pred = [[3.0, 4.0], [100.0, 0.0]];
    assert!((nme(&pred, &gt, 100.0).unwrap() - 0.025).abs() < 1e-12);
    for bad in [0.0, -1.0, f64::NAN] {
        assert!(nme(&pred, &gt, bad).is_err());
    }
    assert!(nme(&pred[..1], &gt, 100.0).is_err());
}

#[test]
fn invisible_landmarks_are_skipped() {
    let mut gt = annotation(vec![[0.0, 0.0], [10.0, 0.0]]);
    gt.visible[1] = false;
    assert_eq!(nme(&[[0.0, 2.0], [99.0, 99.0]], &gt, 2.0).unwrap(), 1.0);
    gt.visible[0] = false;
    assert!(nme(&[[0.0, 2.0], [99.0, 99.0]], &gt, 2.0).is_err());
}

#[test]
fn normalizers() {
    let r = record("a", vec![[10.0, 20.0], [40.0, 60.0], [0.0, 0.0]]);
    assert_eq!(Normalizer::Interocular { left: 0, right: 1 }.value(&r).unwrap(), 50.0);
    assert_eq!(Normalizer::FaceSize.value(&r).unwrap(), 60.0);
    assert!(Normalizer::Interocular { left: 0, right: 5 }.value(&r).is_err());
    let e = evaluate_predictions(&[r.clone()], &[vec![[13.0, 24.0], [40.0, 60.0], [0.0, 0.0]]], Normalizer::SYNTHETIC_INTEROCULAR, "d", "m").unwrap();
    assert!((e.nme[0] - 5.0 / 3.0 / 50.0).abs() < 1e-12);
    assert!(evaluate_predictions(&[r], &[], Normalizer::FaceSize, "d", "m").is_err());
}

#[test]
fn ced_examples() {
    let grid = error_grid(0.1, 10);
    let zeros = ced_curve(&[0.0; 5], &grid).unwrap();
    assert!(zeros.fractions.iter().all(|&f| f == 1.0));
    let two = ced_curve(&[0.02, 0.06], &[0.04]).unwrap();
    assert_eq!(two.fractions, vec![0.5]);
    // at-or-below counts ties
    assert_eq!(ced_curve(&[0.04, 0.05], &[0.04]).unwrap().fractions, vec![0.5]);
    assert!(ced_curve(&[], &grid).is_err());
    assert!(ced_curve(&[0.1], &[0.2, 0.1]).is_err());
}

#[test]
fn auc_examples() {
    let grid = error_grid(0.1, 1000);
    assert_eq!(auc_at(&ced_curve(&[0.0, 0.0], &grid).unwrap(), 0.08).unwrap(), 1.0);
    assert_eq!(auc_at(&ced_curve(&[0.09, 0.5], &grid).unwrap(), 0.08).unwrap(), 0.0);
    let half = auc_at(&ced_curve(&[0.04], &grid).unwrap(), 0.08).unwrap();
    assert!((half - 0.5).abs() <= 0.1 / 1000.0 / 0.08, "{half}");
    assert!(auc_at(&ced_curve(&[0.01], &error_grid(0.05, 10)).unwrap(), 0.08).is_err());
    assert!(auc_at(&ced_curve(&[0.01], &[0.01, 0.1]).unwrap(), 0.08).is_err());
}

/// Direct rectangle-rule oracle on a step function, both on the same grid.
#[test]
fn auc_matches_trapezoid_oracle() {
    let grid = error_grid(0.1, 200);
    let errors = [0.003, 0.011, 0.011, 0.027, 0.05, 0.079, 0.081, 0.2];
    let ced = ced_curve(&errors, &grid).unwrap();
    let frac = |e: f64| errors.iter().filter(|&&x| x <= e).count() as f64 / errors.len() as f64;
    let mut area = 0.0;
    for w in grid.windows(2).filter(|w| w[1] <= 0.08 + 1e-12) {
        area += 0.5 * (frac(w[0]) + frac(w[1])) * (w[1] - w[0]);
    }
    assert!((auc_at(&ced, 0.08).unwrap() - area / 0.08).abs() < 1e-6);
}

proptest! {
    #[test]
    fn nme_is_scale_and_translation_invariant(
        pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 4),
        noise in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 4),
        s in 0.1f64..20.0,
        t in (-100.0f64..100.0, -100.0f64..100.0),
    ) {
        prop_assume!((pts[0].0 - pts[1].0).hypot(pts[0].1 - pts[1].1) > 1.0);
        let gt: Vec<Point> = pts.iter().map(|p| [p.0, p.1]).collect();
        let pred: Vec<Point> = gt.iter().zip(&noise).map(|(g, n)| [g[0] + n.0, g[1] + n.1]).collect();
        let map = |p: &Point| [s * p[0] + t.0, s * p[1] + t.1];
        let norm = Normalizer::Interocular { left: 0, right: 1 };
        let a = nme(&pred, &annotation(gt.clone()), norm.value(&record("x", gt.clone())).unwrap()).unwrap();
        let gt2: Vec<Point> = gt.iter().map(map).collect();
        let pred2: Vec<Point> = pred.iter().map(map).collect();
        let b = nme(&pred2, &annotation(gt2.clone()), norm.value(&record("x", gt2)).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn ced_and_auc_are_bounded_and_monotone(
        errors in prop::collection::vec(0.0f64..0.2, 1..40),
        bump in 0.0f64..0.1,
        which in any::<prop::sample::Index>(),
    ) {
        let grid = default_grid();
        let ced = ced_curve(&errors, &grid).unwrap();
        prop_assert!(ced.fractions.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(ced.fractions.iter().all(|f| (0.0..=1.0).contains(f)));
        let auc = auc_at(&ced, AUC_THRESHOLD).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
        let mut worse = errors.clone();
        worse[which.index(errors.len())] += bump;
        prop_assert!(auc_at(&ced_curve(&worse, &grid).unwrap(), AUC_THRESHOLD).unwrap() <= auc + 1e-12);
    }
}

/// NME is a deterministic function of (variant, train, test, seed); training
/// on the cell's own style is easiest.
struct FakeFactory {
    trained: RefCell<Vec<(String, StyleLabel, u64)>>,
    fail: Option<StyleLabel>,
}

impl DetectorFactory for FakeFactory {
    type Model = (StyleLabel, u64);

    fn train(&self, variant: &str, train_style: StyleLabel, seed: u64) -> Result<Self::Model> {
        self.trained.borrow_mut().push((variant.into(), train_style, seed));
        if self.fail == Some(train_style) {
            return Err(sanlite_core::Error::Invalid("diverged".into()));
        }
        Ok((train_style, seed))
    }

    fn evaluate(&self, model: &Self::Model, variant: &str, test_style: StyleLabel) -> Result<EvalResult> {
        let gap = if model.0 == test_style { 0.0 } else { 0.02 };
        let bonus = if variant == "san" { 0.9 } else { 1.0 };
        let base = 0.03 + (model.1 % 7) as f64 * 1e-4;
        Ok(result(variant, test_style.name(), vec![bonus * (base + gap); 3]))
    }
}

fn factory(fail: Option<StyleLabel>) -> FakeFactory {
    FakeFactory { trained: RefCell::new(Vec::new()), fail }
}

#[test]
fn cross_style_grid_structure() {
    let f = factory(None);
    let out = cross_style_matrix(&f, &StyleLabel::BENCHMARK, &["san-wo-gan", "san"], 77);
    assert_eq!(f.trained.borrow().len(), 8);
    assert_eq!(out.evaluations.len(), 32);
    let base = out.matrix("san-wo-gan").unwrap();
    let san = out.matrix("san").unwrap();
    for i in 0..4 {
        assert!(base.diagonal()[i].unwrap() <= base.off_diagonal_row_mean(i).unwrap());
        assert!(san.cells[i].iter().all(|c| c.unwrap().is_finite()));
    }
    assert!(san.off_diagonal_mean().unwrap() < base.off_diagonal_mean().unwrap());
    for row in improvement_grid(base, san) {
        for c in row {
            assert!((c.unwrap() - 0.1).abs() < 1e-9);
        }
    }
    // variants trained on one style share the cell seed
    let t = f.trained.borrow();
    for i in 0..4 {
        assert_eq!(t[i].1, t[i + 4].1);
        assert_eq!(t[i].2, t[i + 4].2);
        assert_eq!(t[i].2, cell_seed(77, t[i].1));
    }
}

#[test]
fn cross_style_is_deterministic() {
    let a = cross_style_matrix(&factory(None), &StyleLabel::BENCHMARK, &["san"], 5);
    let b = cross_style_matrix(&factory(None), &StyleLabel::BENCHMARK, &["san"], 5);
    assert_eq!(a, b);
    assert_ne!(cross_style_matrix(&factory(None), &StyleLabel::BENCHMARK, &["san"], 6), a);
}

#[test]
fn self_comparison_is_zero() {
    let out = cross_style_matrix(&factory(None), &StyleLabel::BENCHMARK, &["san"], 5);
    let m = out.matrix("san").unwrap();
    assert!(improvement_grid(m, m).iter().flatten().all(|c| *c == Some(0.0)));
}

#[test]
fn failed_training_marks_cells_and_continues() {
    let out = cross_style_matrix(&factory(Some(StyleLabel::Gray)), &StyleLabel::BENCHMARK, &["san-wo-gan"], 5);
    let m = &out.matrices[0];
    assert!(m.cells[2].iter().all(Option::is_none));
    assert!(m.cells[3].iter().all(Option::is_some));
    assert_eq!(m.failures.len(), 1);
    assert!(matrix_csv(&out.matrices).contains("san-wo-gan,gray,sketch,failed,failed\n"));
}

fn sample_report() -> EvalReport {
    let out = cross_style_matrix(&factory(None), &StyleLabel::BENCHMARK, &["san-wo-gan", "san"], 5);
    EvalReport {
        evaluations: vec![result("san", "original", vec![0.01, 0.02, 0.04]), result("san-wo-gan", "original", vec![0.03, 0.05]), result("san", "sketch", vec![0.0])],
        matrices: out.matrices,
        comparison: Some(("san-wo-gan".into(), "san".into())),
    }
}

#[test]
fn report_files() {
    let report = sample_report();
    let per_image = per_image_csv(&report.evaluations);
    assert_eq!(per_image.lines().count(), 6 + 1);
    assert_eq!(per_image.lines().next().unwrap(), "dataset,detector,record_id,nme,nme_x100");
    assert!(per_image.contains("original,san,r2,0.040000,4.0000\n"));
    let summary = summary_csv(&report.evaluations).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert_eq!(matrix_csv(&report.matrices).lines().count(), 1 + 2 * 16);
    let svg = ced_svg(&report.evaluations).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    let imp = improvement_csv(&report.matrices[0], &report.matrices[1]);
    assert_eq!(imp.lines().count(), 17);
    assert!(imp.starts_with("train_style,test_style,san-wo-gan_nme,san_nme,relative_improvement\n"));
}

#[test]
fn reports_are_byte_identical() {
    let report = sample_report();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let files_a = emit_report(&report, a.path()).unwrap();
    let files_b = emit_report(&report, b.path()).unwrap();
    assert_eq!(files_a.len(), 6);
    for (x, y) in files_a.iter().zip(&files_b) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{x:?}");
    }
    let bad = EvalReport { comparison: Some(("nope".into(), "san".into())), ..report };
    assert!(emit_report(&bad, a.path()).is_err());
}
