use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sanlite_numerics::{Bound, Float, OptimizerConfig, OptimizerKind, OptimizerState, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::nets::{Discriminator, Generator, GeneratorConfig, Translator};
use crate::error::{invalid, Result};
use crate::imaging::RgbImage;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleTrainConfig {
    pub lambda_cycle: f64,
    /// Identity weight relative to `lambda_cycle`.
    pub lambda_identity_rel: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub iterations: usize,
    pub log_interval: usize,
    /// Images per cluster in the fixed batch used to measure cycle loss before and after training.
    pub probe_size: usize,
    pub generator: GeneratorConfig,
    pub discriminator_channels: usize,
    pub seed: u64,
}

impl Default for CycleTrainConfig {
    fn default() -> Self {
        Self {
            lambda_cycle: 10.0,
            lambda_identity_rel: 0.1,
            batch_size: 4,
            lr: 2e-4,
            beta1: 0.5,
            iterations: 400,
            log_interval: 20,
            probe_size: 16,
            generator: GeneratorConfig::default(),
            discriminator_channels: 8,
            seed: 0,
        }
    }
}

impl CycleTrainConfig {
    /// The batch size used at full scale; desk runs override it.
    pub const REFERENCE_BATCH_SIZE: usize = 32;

    pub fn validate(&self) -> Result<()> {
        if ![self.lambda_cycle, self.lambda_identity_rel, self.lr].iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(invalid("cycle loss weights and lr must be finite and non-negative"));
        }
        if self.batch_size == 0 || self.probe_size == 0 || self.log_interval == 0 {
            return Err(invalid("batch_size, probe_size and log_interval must be positive"));
        }
        Ok(())
    }

    fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            method: OptimizerKind::Adam { beta1: self.beta1, beta2: 0.999, epsilon: 1e-8 },
            lr: self.lr,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleLosses {
    /// Generator term against `D_a` (fakes `G_ba(b)` pushed toward 1).
    pub adv_a: f64,
    /// Generator term against `D_b` (fakes `G_ab(a)` pushed toward 1).
    pub adv_b: f64,
    pub cycle: f64,
    pub identity: f64,
    pub total: f64,
    pub disc_a: f64,
    pub disc_b: f64,
}

struct GeneratorGraph {
    adv_a: Var,
    adv_b: Var,
    cycle: Var,
    identity: Var,
    total: Var,
    fake_a: Var,
    fake_b: Var,
}

#[allow(clippy::too_many_arguments)]
fn generator_graph<T: Float>(
    tape: &mut Tape<T>,
    g_ab: (&dyn Translator<T>, &Bound),
    g_ba: (&dyn Translator<T>, &Bound),
    d_a: (&Discriminator<T>, &Bound),
    d_b: (&Discriminator<T>, &Bound),
    a: Var,
    b: Var,
    lambda_cycle: f64,
    lambda_identity_rel: f64,
) -> Result<GeneratorGraph> {
    let fake_b = g_ab.0.forward(tape, g_ab.1, a)?;
    let fake_a = g_ba.0.forward(tape, g_ba.1, b)?;
    let score_b = d_b.0.forward(tape, d_b.1, fake_b)?;
    let score_a = d_a.0.forward(tape, d_a.1, fake_a)?;
    let adv_b = tape.mse_to_const(score_b, 1.0)?;
    let adv_a = tape.mse_to_const(score_a, 1.0)?;

    let rec_a = g_ba.0.forward(tape, g_ba.1, fake_b)?;
    let rec_b = g_ab.0.forward(tape, g_ab.1, fake_a)?;
    let cyc_a = tape.l1_loss(rec_a, a)?;
    let cyc_b = tape.l1_loss(rec_b, b)?;
    let cycle = tape.add(cyc_a, cyc_b)?;

    let idt_b = g_ab.0.forward(tape, g_ab.1, b)?;
    let idt_a = g_ba.0.forward(tape, g_ba.1, a)?;
    let id_b = tape.l1_loss(idt_b, b)?;
    let id_a = tape.l1_loss(idt_a, a)?;
    let identity = tape.add(id_b, id_a)?;

    let adv = tape.add(adv_a, adv_b)?;
    let cyc_term = tape.scale(cycle, lambda_cycle)?;
    let idt_term = tape.scale(identity, lambda_cycle * lambda_identity_rel)?;
    let total = tape.add(adv, cyc_term)?;
    let total = tape.add(total, idt_term)?;
    Ok(GeneratorGraph { adv_a, adv_b, cycle, identity, total, fake_a, fake_b })
}

/// Least-squares critic loss: reals toward 1, fakes toward 0, averaged.
fn discriminator_loss<T: Float>(tape: &mut Tape<T>, d: &Discriminator<T>, bound: &Bound, real: Var, fake: Var) -> Result<Var> {
    let sr = d.forward(tape, bound, real)?;
    let sf = d.forward(tape, bound, fake)?;
    let lr = tape.mse_to_const(sr, 1.0)?;
    let lf = tape.mse_to_const(sf, 0.0)?;
    let sum = tape.add(lr, lf)?;
    Ok(tape.scale(sum, 0.5)?)
}

fn check_batches<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape().len() != 4 || a.shape() != b.shape() {
        return Err(invalid(format!("cycle batches must share one [N, 3, H, W] shape, got {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Evaluates every loss component on a pair of batches without updating anything.
pub fn cycle_losses<T: Float>(
    g_ab: &dyn Translator<T>,
    g_ba: &dyn Translator<T>,
    d_a: &Discriminator<T>,
    d_b: &Discriminator<T>,
    batch_a: &Tensor<T>,
    batch_b: &Tensor<T>,
    config: &CycleTrainConfig,
) -> Result<CycleLosses> {
    check_batches(batch_a, batch_b)?;
    let mut tape = Tape::new();
    let bab = g_ab.bind(&mut tape, false)?;
    let bba = g_ba.bind(&mut tape, false)?;
    let bda = d_a.bind(&mut tape, false)?;
    let bdb = d_b.bind(&mut tape, false)?;
    let a = tape.constant(batch_a.clone())?;
    let b = tape.constant(batch_b.clone())?;
    let g = generator_graph(
        &mut tape,
        (g_ab, &bab),
        (g_ba, &bba),
        (d_a, &bda),
        (d_b, &bdb),
        a,
        b,
        config.lambda_cycle,
        config.lambda_identity_rel,
    )?;
    let disc_a = discriminator_loss(&mut tape, d_a, &bda, a, g.fake_a)?;
    let disc_b = discriminator_loss(&mut tape, d_b, &bdb, b, g.fake_b)?;
    let get = |v: Var| tape.value(v).item().to_f64_lossy();
    Ok(CycleLosses {
        adv_a: get(g.adv_a),
        adv_b: get(g.adv_b),
        cycle: get(g.cycle),
        identity: get(g.identity),
        total: get(g.total),
        disc_a: get(disc_a),
        disc_b: get(disc_b),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleLogEntry {
    pub iteration: usize,
    #[serde(flatten)]
    pub losses: CycleLosses,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleTrainLog {
    pub entries: Vec<CycleLogEntry>,
    /// Cycle loss on the fixed probe batch before the first update.
    pub probe_cycle_initial: f64,
    pub probe_cycle_final: f64,
}

impl CycleTrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,adv_a,adv_b,cycle,identity,total,disc_a,disc_b\n");
        for e in &self.entries {
            let l = &e.losses;
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                e.iteration, l.adv_a, l.adv_b, l.cycle, l.identity, l.total, l.disc_a, l.disc_b
            ));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct CycleModels {
    /// Translates cluster A images toward style B.
    pub to_b: Generator,
    /// Translates cluster B images toward style A.
    pub to_a: Generator,
    pub disc_a: Discriminator,
    pub disc_b: Discriminator,
    pub log: CycleTrainLog,
}

fn stack_images(images: &[RgbImage], indices: &[usize]) -> Result<Tensor<f32>> {
    let items: Vec<Tensor<f32>> = indices.iter().map(|&i| images[i].to_tensor()).collect();
    Ok(Tensor::stack(&items)?)
}

fn probe_cycle(models: &CycleModels, a: &Tensor<f32>, b: &Tensor<f32>, config: &CycleTrainConfig) -> Result<f64> {
    Ok(cycle_losses(&models.to_b, &models.to_a, &models.disc_a, &models.disc_b, a, b, config)?.cycle)
}

/// Alternating generator / critic Adam updates on random batches of each cluster.
pub fn train_cycle_generators(images_a: &[RgbImage], images_b: &[RgbImage], config: &CycleTrainConfig) -> Result<CycleModels> {
    config.validate()?;
    if images_a.is_empty() || images_b.is_empty() {
        return Err(invalid("cycle training needs non-empty clusters"));
    }
    let (w, h) = (images_a[0].width(), images_a[0].height());
    if images_a.iter().chain(images_b).any(|im| im.width() != w || im.height() != h) {
        return Err(invalid("cycle training images must share one size"));
    }
    let mut rng = seed::stage_rng(config.seed, "cycle-init");
    let mut models = CycleModels {
        to_b: Generator::new(config.generator, &mut rng),
        to_a: Generator::new(config.generator, &mut rng),
        disc_a: Discriminator::new(config.discriminator_channels, &mut rng),
        disc_b: Discriminator::new(config.discriminator_channels, &mut rng),
        log: CycleTrainLog::default(),
    };
    // a seeded sample rather than a prefix: cluster listings put outliers first
    let mut probe_rng = seed::stage_rng(config.seed, "cycle-probe");
    let n_probe = config.probe_size.min(images_a.len()).min(images_b.len());
    let pick = |len: usize, rng: &mut ChaCha8Rng| sample(rng, len, n_probe).into_vec();
    let (probe_a, probe_b) = (
        stack_images(images_a, &pick(images_a.len(), &mut probe_rng))?,
        stack_images(images_b, &pick(images_b.len(), &mut probe_rng))?,
    );
    models.log.probe_cycle_initial = probe_cycle(&models, &probe_a, &probe_b, config)?;

    let opt = config.optimizer();
    let mut opt_ab = OptimizerState::new(opt, &models.to_b.params);
    let mut opt_ba = OptimizerState::new(opt, &models.to_a.params);
    let mut opt_da = OptimizerState::new(opt, &models.disc_a.params);
    let mut opt_db = OptimizerState::new(opt, &models.disc_b.params);
    let mut rng = seed::stage_rng(config.seed, "cycle-batches");

    for it in 1..=config.iterations {
        let ia: Vec<usize> = (0..config.batch_size).map(|_| rng.random_range(0..images_a.len())).collect();
        let ib: Vec<usize> = (0..config.batch_size).map(|_| rng.random_range(0..images_b.len())).collect();
        let batch_a = stack_images(images_a, &ia)?;
        let batch_b = stack_images(images_b, &ib)?;

        // Generator update with frozen critics.
        let mut tape = Tape::new();
        let bab = models.to_b.params.bind(&mut tape)?;
        let bba = models.to_a.params.bind(&mut tape)?;
        let bda = models.disc_a.bind(&mut tape, false)?;
        let bdb = models.disc_b.bind(&mut tape, false)?;
        let a = tape.constant(batch_a.clone())?;
        let b = tape.constant(batch_b.clone())?;
        let g = generator_graph(
            &mut tape,
            (&models.to_b, &bab),
            (&models.to_a, &bba),
            (&models.disc_a, &bda),
            (&models.disc_b, &bdb),
            a,
            b,
            config.lambda_cycle,
            config.lambda_identity_rel,
        )?;
        tape.backward(g.total)?;
        models.to_b.params.accumulate_grads(&tape, &bab)?;
        models.to_a.params.accumulate_grads(&tape, &bba)?;
        opt_ab.step(&mut models.to_b.params)?;
        opt_ba.step(&mut models.to_a.params)?;
        models.to_b.params.zero_grad();
        models.to_a.params.zero_grad();
        let get = |v: Var| tape.value(v).item().to_f64_lossy();
        let mut losses = CycleLosses {
            adv_a: get(g.adv_a),
            adv_b: get(g.adv_b),
            cycle: get(g.cycle),
            identity: get(g.identity),
            total: get(g.total),
            ..CycleLosses::default()
        };
        let fake_a = tape.value(g.fake_a).clone();
        let fake_b = tape.value(g.fake_b).clone();
        drop(tape);

        // Critic update on the fakes just produced.
        let mut tape = Tape::new();
        let bda = models.disc_a.bind(&mut tape, true)?;
        let bdb = models.disc_b.bind(&mut tape, true)?;
        let real_a = tape.constant(batch_a)?;
        let real_b = tape.constant(batch_b)?;
        let fa = tape.constant(fake_a)?;
        let fb = tape.constant(fake_b)?;
        let la = discriminator_loss(&mut tape, &models.disc_a, &bda, real_a, fa)?;
        let lb = discriminator_loss(&mut tape, &models.disc_b, &bdb, real_b, fb)?;
        let both = tape.add(la, lb)?;
        tape.backward(both)?;
        models.disc_a.params.accumulate_grads(&tape, &bda)?;
        models.disc_b.params.accumulate_grads(&tape, &bdb)?;
        opt_da.step(&mut models.disc_a.params)?;
        opt_db.step(&mut models.disc_b.params)?;
        models.disc_a.params.zero_grad();
        models.disc_b.params.zero_grad();
        losses.disc_a = tape.value(la).item().to_f64_lossy();
        losses.disc_b = tape.value(lb).item().to_f64_lossy();

        if it % config.log_interval == 0 || it == config.iterations {
            log::debug!("cycle iter {it}: cycle {:.4} adv {:.4}", losses.cycle, losses.adv_a + losses.adv_b);
            models.log.entries.push(CycleLogEntry { iteration: it, losses });
        }
    }
    models.log.probe_cycle_final = probe_cycle(&models, &probe_a, &probe_b, config)?;
    Ok(models)
}
