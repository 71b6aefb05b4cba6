use rand::Rng;
use sanlite_core::aggregation::*;
use sanlite_core::dataset::{generate_synthetic_dataset, read_manifest, synth_faces, Split, SynthParams};
use sanlite_core::imaging::RgbImage;
use sanlite_core::seed;
use sanlite_numerics::Tensor;

fn random_batch(n: usize, seed_: u64) -> Tensor<f64> {
    let mut rng = seed::rng(seed_);
    Tensor::from_fn([n, 3, 8, 8], |_| rng.random::<f64>())
}

fn critics() -> (Discriminator<f64>, Discriminator<f64>) {
    let mut rng = seed::rng(4);
    (Discriminator::new(4, &mut rng), Discriminator::new(4, &mut rng))
}

fn faces(n: usize, seed_: u64) -> Vec<RgbImage> {
    synth_faces(&SynthParams { image_size: 32, head_half_width: [7.5, 9.5], ..SynthParams::default() }, n, seed_)
        .into_iter()
        .map(|f| f.1)
        .collect()
}

#[test]
fn identity_generators_have_zero_cycle_and_identity_loss() {
    let (da, db) = critics();
    let (a, b) = (random_batch(2, 1), random_batch(2, 2));
    let l = cycle_losses(&IdentityTranslator, &IdentityTranslator, &da, &db, &a, &b, &CycleTrainConfig::default()).unwrap();
    assert_eq!(l.cycle, 0.0);
    assert_eq!(l.identity, 0.0);
    assert!(l.adv_a > 0.0 && l.adv_b > 0.0);
    assert!((l.total - (l.adv_a + l.adv_b)).abs() < 1e-12);
}

#[test]
fn equal_batches_leave_only_adversarial_terms() {
    let (da, db) = critics();
    let a = random_batch(3, 7);
    let l = cycle_losses(&IdentityTranslator, &IdentityTranslator, &da, &db, &a, &a, &CycleTrainConfig::default()).unwrap();
    assert_eq!((l.cycle, l.identity), (0.0, 0.0));
    assert!(l.adv_a.is_finite() && l.adv_a > 0.0);
    assert_eq!(l.total, l.adv_a + l.adv_b);
}

/// With `G_ab = c` and `G_ba = id`, every reconstruction is known in closed form.
#[test]
fn l1_terms_match_scalar_oracle() {
    let (da, db) = critics();
    let (a, b) = (random_batch(2, 11), random_batch(2, 12));
    let c = 0.3;
    let cfg = CycleTrainConfig::default();
    let l = cycle_losses(&ConstantTranslator(c), &IdentityTranslator, &da, &db, &a, &b, &cfg).unwrap();
    let mean_abs = |t: &Tensor<f64>| t.data().iter().map(|v| (v - c).abs()).sum::<f64>() / t.len() as f64;
    // rec_a = id(c) = c ; rec_b = c(id(b)) = c ; idt_b = c ; idt_a = a
    let cycle = mean_abs(&a) + mean_abs(&b);
    let identity = mean_abs(&b);
    assert!((l.cycle - cycle).abs() < 1e-6, "{} vs {cycle}", l.cycle);
    assert!((l.identity - identity).abs() < 1e-6);
    let total = l.adv_a + l.adv_b + cfg.lambda_cycle * cycle + cfg.lambda_cycle * cfg.lambda_identity_rel * identity;
    assert!((l.total - total).abs() < 1e-6);
}

#[test]
fn batch_shape_mismatch_is_an_error() {
    let (da, db) = critics();
    let r = cycle_losses(&IdentityTranslator, &IdentityTranslator, &da, &db, &random_batch(2, 1), &random_batch(3, 1), &CycleTrainConfig::default());
    assert!(r.is_err());
}

#[test]
fn aggregate_examples() {
    let img = faces(1, 3).remove(0);
    assert_eq!(aggregate_style(&img, &IdentityTranslator, &IdentityTranslator).unwrap(), img);
    let mid = aggregate_style(&img, &ConstantTranslator(0.0), &ConstantTranslator(1.0)).unwrap();
    assert!(mid.data().iter().all(|&v| v == 0.5));
}

#[test]
fn generator_keeps_size_and_range() {
    let g = Generator::<f32>::new(GeneratorConfig::default(), &mut seed::rng(1));
    for img in faces(2, 5) {
        let out = g.apply(&img).unwrap();
        assert_eq!((out.width(), out.height()), (img.width(), img.height()));
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let agg = aggregate_style(&img, &g, &g).unwrap();
        assert_eq!((agg.width(), agg.height()), (32, 32));
    }
    let odd = RgbImage::filled(30, 30, [0.5; 3]);
    assert!(g.apply(&odd).is_err());
}

fn tiny_config(iterations: usize) -> CycleTrainConfig {
    CycleTrainConfig {
        iterations,
        batch_size: 2,
        log_interval: 1,
        probe_size: 2,
        generator: GeneratorConfig { base_channels: 4, residual_blocks: 1 },
        discriminator_channels: 4,
        seed: 9,
        ..CycleTrainConfig::default()
    }
}

#[test]
fn one_step_moves_the_generators() {
    let (a, b) = (faces(3, 1), faces(3, 2));
    let before = train_cycle_generators(&a, &b, &tiny_config(0)).unwrap();
    let after = train_cycle_generators(&a, &b, &tiny_config(1)).unwrap();
    for (g0, g1) in [(&before.to_b, &after.to_b), (&before.to_a, &after.to_a)] {
        let norm: f64 = g0
            .params
            .iter()
            .zip(g1.params.iter())
            .map(|((_, p), (_, q))| p.value.data().iter().zip(q.value.data()).map(|(x, y)| f64::from(x - y).powi(2)).sum::<f64>())
            .sum();
        assert!(norm > 0.0);
    }
    assert_eq!(after.log.entries.len(), 1);
    assert!(after.log.to_csv().starts_with("iteration,adv_a,adv_b,cycle,identity,total,disc_a,disc_b\n1,"));
}

#[test]
fn training_is_reproducible() {
    let (a, b) = (faces(4, 1), faces(5, 2));
    let x = train_cycle_generators(&a, &b, &tiny_config(3)).unwrap();
    let y = train_cycle_generators(&a, &b, &tiny_config(3)).unwrap();
    assert_eq!(x.to_b.params, y.to_b.params);
    assert_eq!(x.to_a.params, y.to_a.params);
    assert_eq!(x.log, y.log);
    let dir = tempfile::tempdir().unwrap();
    for (name, m) in [("x", &x), ("y", &y)] {
        save_generator(&m.to_b, &dir.path().join(format!("{name}.ckpt"))).unwrap();
    }
    assert_eq!(std::fs::read(dir.path().join("x.ckpt")).unwrap(), std::fs::read(dir.path().join("y.ckpt")).unwrap());
    let loaded = load_generator(tiny_config(0).generator, &dir.path().join("x.ckpt")).unwrap();
    assert_eq!(loaded.params, x.to_b.params);
}

#[test]
fn empty_cluster_is_an_error() {
    let a = faces(2, 1);
    assert!(train_cycle_generators(&a, &[], &tiny_config(1)).is_err());
    assert!(train_cycle_generators(&[], &a, &tiny_config(1)).is_err());
    let bad = CycleTrainConfig { lambda_cycle: -1.0, ..tiny_config(1) };
    assert!(train_cycle_generators(&a, &a, &bad).is_err());
}

#[test]
fn aggregated_manifest_reuses_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let params = SynthParams { image_size: 32, head_half_width: [7.5, 9.5], ..SynthParams::default() };
    let src = generate_synthetic_dataset(&params, 5, 3, &dir.path().join("src"), "test", Split::Test).unwrap();
    let src_path = dir.path().join("src/test.json");
    let g = Generator::<f32>::new(GeneratorConfig::default(), &mut seed::rng(2));
    let h = Generator::<f32>::new(GeneratorConfig::default(), &mut seed::rng(3));
    let out_a = dir.path().join("agg_a/test.json");
    let out_b = dir.path().join("agg_b/test.json");
    let m = precompute_aggregated_manifest(&src, &src_path, &g, &h, &out_a).unwrap();
    precompute_aggregated_manifest(&src, &src_path, &g, &h, &out_b).unwrap();
    assert_eq!(m.len(), src.len());
    assert_eq!(read_manifest(&out_a).unwrap(), m);
    for (r, s) in m.records.iter().zip(&src.records) {
        assert_eq!(r.id, s.id);
        assert_eq!(serde_json::to_string(&r.annotation).unwrap(), serde_json::to_string(&s.annotation).unwrap());
        assert_eq!(r.bbox, s.bbox);
        let a = std::fs::read(dir.path().join("agg_a").join(&r.image)).unwrap();
        let b = std::fs::read(dir.path().join("agg_b").join(&r.image)).unwrap();
        assert_eq!(a, b, "{}", r.id);
    }
}
