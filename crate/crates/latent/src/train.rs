//! Adam, the three-stage adapter schedule and backbone pretraining.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::ToySample;
use crate::model::{ParamMap, ToyModel, TrainItem, Trainable};
use crate::tensor::Fmap;
use crate::{LatentError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    /// Encoder and injection weight only.
    A,
    /// Adds the low-rank adapters.
    B,
    /// As B, alternating batches from two data sources.
    C,
}

impl Stage {
    pub fn trainable(self) -> Trainable {
        Trainable {
            encoder: true,
            alpha: true,
            lora: self != Stage::A,
            base: false,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Stage::A => "A",
            Stage::B => "B",
            Stage::C => "C",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "A" | "a" => Some(Stage::A),
            "B" | "b" => Some(Stage::B),
            "C" | "c" => Some(Stage::C),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageConfig {
    pub stage: Stage,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl StageConfig {
    pub fn new(stage: Stage, steps: usize) -> Self {
        Self {
            stage,
            steps,
            batch_size: 8,
            lr: 1e-3,
        }
    }

    /// Batches drawn from (synthetic, real) per cycle.
    pub fn data_mix(&self) -> (usize, usize) {
        match self.stage {
            Stage::C => (1, 1),
            _ => (1, 0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: ParamMap,
    v: ParamMap,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: ParamMap::new(),
            v: ParamMap::new(),
        }
    }

    /// Update exactly the parameters named in `grads`.
    pub fn update(&mut self, params: &mut ParamMap, grads: &ParamMap) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("gradient for unknown parameter");
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// A drawn training example: which sample, its time and its noise.
struct Draw {
    index: usize,
    t: f64,
    eps: Vec<f64>,
}

fn draw(rng: &mut ChaCha8Rng, data: &[ToySample]) -> Draw {
    let index = rng.random_range(0..data.len());
    let t = rng.random::<f64>();
    let eps = (0..data[index].latent.data.len())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Draw { index, t, eps }
}

fn item<'a>(sample: &'a ToySample, t: f64, eps: &[f64], conditioned: bool) -> TrainItem<'a> {
    let z = &sample.latent;
    TrainItem {
        proxy: conditioned.then_some(&sample.proxy),
        z_t: Fmap {
            data: z.data.iter().zip(eps).map(|(a, e)| t * a + (1.0 - t) * e).collect(),
            ..*z
        },
        t,
        target: Fmap {
            data: z.data.iter().zip(eps).map(|(a, e)| a - e).collect(),
            ..*z
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    /// Batch loss before each update.
    pub trace: Vec<f64>,
    /// Batches drawn from the synthetic and real sources.
    pub batches_per_source: [usize; 2],
}

/// Source of batch `k` in a stage: stage C alternates one-by-one.
pub fn batch_source(stage: Stage, k: usize) -> usize {
    match stage {
        Stage::C => k % 2,
        _ => 0,
    }
}

/// Train the stage's parameter set in place.
pub fn run_stage(
    model: &mut ToyModel,
    config: &StageConfig,
    synthetic: &[ToySample],
    real: &[ToySample],
    seed: u64,
) -> Result<StageReport> {
    if synthetic.is_empty() {
        return Err(LatentError::EmptyDataset);
    }
    if config.stage == Stage::C && real.is_empty() {
        return Err(LatentError::MissingSource);
    }
    let trainable = config.stage.trainable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(config.lr);
    let mut report = StageReport {
        stage: config.stage,
        trace: Vec::with_capacity(config.steps),
        batches_per_source: [0, 0],
    };
    for k in 0..config.steps {
        let src = batch_source(config.stage, k);
        let data = if src == 0 { synthetic } else { real };
        report.batches_per_source[src] += 1;
        let draws: Vec<Draw> = (0..config.batch_size.max(1)).map(|_| draw(&mut rng, data)).collect();
        let items: Vec<TrainItem> = draws.iter().map(|d| item(&data[d.index], d.t, &d.eps, true)).collect();
        let (loss, grads) = model.loss_and_grads(&items, &trainable)?;
        report.trace.push(loss);
        adam.update(&mut model.params, &grads.params);
    }
    Ok(report)
}

/// Train the backbone alone on unconditioned samples; a stand-in for
/// starting from a pretrained video model.
pub fn pretrain_backbone(
    model: &mut ToyModel,
    data: &[ToySample],
    steps: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(LatentError::EmptyDataset);
    }
    let trainable = Trainable {
        base: true,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(lr);
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let draws: Vec<Draw> = (0..batch_size.max(1)).map(|_| draw(&mut rng, data)).collect();
        let items: Vec<TrainItem> = draws.iter().map(|d| item(&data[d.index], d.t, &d.eps, false)).collect();
        let (loss, grads) = model.loss_and_grads(&items, &trainable)?;
        trace.push(loss);
        adam.update(&mut model.params, &grads.params);
    }
    Ok(trace)
}

/// Conditioned flow loss on a fixed set of draws: for each sample, `draws`
/// stratified times with noise from `seed`.
pub fn evaluate(model: &ToyModel, data: &[ToySample], draws: usize, seed: u64) -> Result<f64> {
    if data.is_empty() || draws == 0 {
        return Err(LatentError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fixed = Vec::with_capacity(data.len() * draws);
    for (i, s) in data.iter().enumerate() {
        for j in 0..draws {
            let t = (j as f64 + 0.5) / draws as f64;
            let eps: Vec<f64> = (0..s.latent.data.len())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            fixed.push((i, t, eps));
        }
    }
    let items: Vec<TrainItem> = fixed.iter().map(|(i, t, e)| item(&data[*i], *t, e, true)).collect();
    model.loss(&items)
}

/// `step,loss` CSV.
pub fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("step,loss\n");
    for (k, l) in trace.iter().enumerate() {
        out.push_str(&format!("{k},{l}\n"));
    }
    out
}

/// The toy schedule end to end: pretrain the backbone unconditioned, then
/// run stage A followed by stage B on the same synthetic set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyRecipe {
    pub samples: usize,
    pub size: usize,
    pub pretrain_steps: usize,
    pub pretrain_batch: usize,
    pub stage_a_steps: usize,
    pub stage_b_steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Stratified times per sample in the evaluation loss.
    pub eval_draws: usize,
}

impl Default for ToyRecipe {
    fn default() -> Self {
        Self {
            samples: 64,
            size: 32,
            pretrain_steps: 2000,
            pretrain_batch: 16,
            stage_a_steps: 100,
            stage_b_steps: 400,
            batch_size: 32,
            lr: 1e-3,
            eval_draws: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecipeReport {
    pub model: ToyModel,
    /// Evaluation loss of the pretrained model before any adapter update.
    pub initial_loss: f64,
    pub after_a: f64,
    pub after_b: f64,
    pub stage_a: StageReport,
    pub stage_b: StageReport,
}

impl RecipeReport {
    pub fn reduction(&self) -> f64 {
        1.0 - self.after_b / self.initial_loss
    }
}

pub fn run_toy_recipe(recipe: &ToyRecipe, seed: u64) -> Result<RecipeReport> {
    let data = crate::data::toy_dataset(crate::data::ToySource::Synthetic, recipe.samples, recipe.size, seed)?;
    let mut model = ToyModel::new(seed.wrapping_add(1));
    pretrain_backbone(
        &mut model,
        &data,
        recipe.pretrain_steps,
        recipe.pretrain_batch,
        recipe.lr,
        seed.wrapping_add(2),
    )?;
    let eval_seed = seed.wrapping_add(99);
    let initial_loss = evaluate(&model, &data, recipe.eval_draws, eval_seed)?;
    let config = |stage, steps| StageConfig {
        batch_size: recipe.batch_size,
        lr: recipe.lr,
        ..StageConfig::new(stage, steps)
    };
    let stage_a = run_stage(
        &mut model,
        &config(Stage::A, recipe.stage_a_steps),
        &data,
        &[],
        seed.wrapping_add(3),
    )?;
    let after_a = evaluate(&model, &data, recipe.eval_draws, eval_seed)?;
    let stage_b = run_stage(
        &mut model,
        &config(Stage::B, recipe.stage_b_steps),
        &data,
        &[],
        seed.wrapping_add(4),
    )?;
    let after_b = evaluate(&model, &data, recipe.eval_draws, eval_seed)?;
    Ok(RecipeReport {
        model,
        initial_loss,
        after_a,
        after_b,
        stage_a,
        stage_b,
    })
}
