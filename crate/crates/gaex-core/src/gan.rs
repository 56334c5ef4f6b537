//! Generator/discriminator pair whose discriminator doubles as a novelty
//! detector. The discriminator is trained to tell recently visited states
//! (real) from generator samples (fake); states it confidently rejects as
//! fake are exactly the ones the agent has frequented, so its
//! miss-probability `1 - D(s)` measures how unfamiliar a state is. The
//! intrinsic bonus paid to the agent is `beta * (1 - D(s))^2`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::{Activation, NetworkParams, Output};
use crate::optim::OptimizerState;
use crate::tensor::Tensor;

/// Floor/ceiling applied to probabilities before they enter a logarithm.
const LOG_EPS: f64 = 1e-7;

/// Exploration bonus for a state the discriminator scores at `d`: zero for
/// states confidently recognized as visited, `beta` for maximally novel
/// ones, quadratic in between.
pub fn intrinsic_reward(d: f64, beta: f64) -> f64 {
    let miss = 1.0 - d;
    beta * miss * miss
}

/// Construction-time knobs for [`GanPair`].
#[derive(Clone, Debug)]
pub struct GanSettings {
    /// Width of the real feature vectors the discriminator judges.
    pub feature_dim: usize,
    /// Width of the generator's latent input.
    pub noise_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    /// Negative-side slope of the LeakyReLU used in both networks.
    pub leaky_slope: f64,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    /// Generator gradient steps taken per adversarial round.
    pub generator_steps: usize,
    /// Discriminator gradient steps taken per adversarial round. Lopsided
    /// step counts are how one side of the game gets starved or
    /// overtrained relative to the other.
    pub discriminator_steps: usize,
    /// Keep the generator at its random initialization: the discriminator
    /// still trains against its samples, but the opponent never adapts.
    /// This is the bonus-without-generator baseline. Frozen fakes are
    /// trivially separable from visited states, so instead of tracking the
    /// visitation frontier the discriminator learns the coarse shape all
    /// real states share — a rule that generalizes to states never visited
    /// — and the novelty differential that should pull the agent outward
    /// collapses.
    pub freeze_generator: bool,
}

impl Default for GanSettings {
    fn default() -> Self {
        GanSettings {
            feature_dim: 10,
            noise_dim: 10,
            generator_hidden: vec![50, 50],
            discriminator_hidden: vec![50, 50],
            leaky_slope: 0.01,
            generator_lr: 0.001,
            discriminator_lr: 0.001,
            generator_steps: 1,
            discriminator_steps: 1,
            freeze_generator: false,
        }
    }
}

/// Diagnostics from one [`GanPair::update`] call, all evaluated on the
/// batch it was given.
#[derive(Clone, Copy, Debug)]
pub struct GanStats {
    /// Mean discriminator score on the real rows (before the update).
    pub d_real: f64,
    /// Mean discriminator score on the generated rows (before the update).
    pub d_fake: f64,
    /// Negated discriminator objective; 2 ln 2 (about 1.386) at chance.
    pub d_loss: f64,
    /// `mean log(1 - D(G(z)))`, the quantity the generator descends.
    pub g_loss: f64,
}

/// The adversarial pair plus its optimizers and update cadence.
pub struct GanPair {
    generator: NetworkParams,
    discriminator: NetworkParams,
    gen_opt: OptimizerState,
    disc_opt: OptimizerState,
    settings: GanSettings,
    /// Number of `update` calls so far, for the every-k cadences.
    calls: u64,
}

impl GanPair {
    pub fn new(settings: GanSettings, rng: &mut impl Rng) -> Result<GanPair> {
        if settings.feature_dim == 0 || settings.noise_dim == 0 {
            return Err(Error::Config(
                "feature and noise dims must be positive".into(),
            ));
        }
        if settings.generator_steps == 0 || settings.discriminator_steps == 0 {
            return Err(Error::Config(
                "per-round step counts must be at least 1".into(),
            ));
        }
        if settings.generator_lr <= 0.0 || settings.discriminator_lr <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        let act = Activation::LeakyRelu(settings.leaky_slope);
        let mut g_dims = vec![settings.noise_dim];
        g_dims.extend_from_slice(&settings.generator_hidden);
        g_dims.push(settings.feature_dim);
        let generator = NetworkParams::mlp(&g_dims, act, Output::Linear, rng)?;
        let mut d_dims = vec![settings.feature_dim];
        d_dims.extend_from_slice(&settings.discriminator_hidden);
        d_dims.push(1);
        let discriminator = NetworkParams::mlp(&d_dims, act, Output::Sigmoid, rng)?;
        let gen_opt = OptimizerState::adam(settings.generator_lr);
        let disc_opt = OptimizerState::adam(settings.discriminator_lr);
        Ok(GanPair {
            generator,
            discriminator,
            gen_opt,
            disc_opt,
            settings,
            calls: 0,
        })
    }

    pub fn settings(&self) -> &GanSettings {
        &self.settings
    }

    pub fn generator(&self) -> &NetworkParams {
        &self.generator
    }

    pub fn discriminator(&self) -> &NetworkParams {
        &self.discriminator
    }

    /// Total generator gradient steps taken so far.
    pub fn generator_updates(&self) -> u64 {
        self.gen_opt.steps_taken()
    }

    /// Total discriminator gradient steps taken so far.
    pub fn discriminator_updates(&self) -> u64 {
        self.disc_opt.steps_taken()
    }

    /// Discriminator score for a single feature vector, in (0, 1).
    pub fn discriminate(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.settings.feature_dim {
            return Err(Error::Shape(format!(
                "discriminator expects {} features, got {}",
                self.settings.feature_dim,
                features.len()
            )));
        }
        Ok(self.discriminator.infer_one(features)?[0])
    }

    /// Map latent rows through the generator (no gradients recorded).
    pub fn generate(&self, noise: &[f64], rows: usize) -> Result<Vec<f64>> {
        if noise.len() != rows * self.settings.noise_dim {
            return Err(Error::Shape(format!(
                "expected {rows} noise rows of {}, got {} values",
                self.settings.noise_dim,
                noise.len()
            )));
        }
        self.generator.infer(noise, rows)
    }

    /// Draw `rows` standard-normal latent rows from `rng`.
    pub fn sample_noise(&self, rows: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..rows * self.settings.noise_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect()
    }

    /// One adversarial round on a batch of real feature rows:
    /// `discriminator_steps` discriminator updates followed by
    /// `generator_steps` generator updates. Each discriminator step
    /// ascends `mean log D(real) + mean log(1 - D(G(z)))` on the same
    /// real batch but freshly drawn latents, with the generator held
    /// fixed; the first generator step then descends
    /// `mean log(1 - D(G(z)))` through the freshly updated discriminator
    /// reusing the last step's latent batch, and any further generator
    /// steps draw their own. Diagnostics come from the round's first
    /// discriminator evaluation, before any parameter moved.
    ///
    /// With `freeze_generator` set, the generator phase never runs; the
    /// discriminator keeps training against the frozen net's samples.
    pub fn update(&mut self, real: &[&[f64]], rng: &mut impl Rng) -> Result<GanStats> {
        let rows = real.len();
        if rows == 0 {
            return Err(Error::Contract("empty real batch".into()));
        }
        let fdim = self.settings.feature_dim;
        let mut real_flat = Vec::with_capacity(rows * fdim);
        for (i, row) in real.iter().enumerate() {
            if row.len() != fdim {
                return Err(Error::Shape(format!(
                    "real row {i} has {} features, expected {fdim}",
                    row.len()
                )));
            }
            real_flat.extend_from_slice(row);
        }
        self.calls += 1;
        let real_t = Tensor::constant(real_flat, &[rows, fdim])?;

        let mut stats = None;
        let mut last_noise = Vec::new();
        for _ in 0..self.settings.discriminator_steps {
            let noise = self.sample_noise(rows, rng);
            // Fakes enter the discriminator phase as constants: the
            // generator must not receive gradients from its opponent's
            // update.
            let fakes = self.generator.infer(&noise, rows)?;
            let fake_t = Tensor::constant(fakes, &[rows, fdim])?;
            let score_real = self.discriminator.forward(&real_t)?;
            let score_fake = self.discriminator.forward(&fake_t)?;
            let objective = log_of(&score_real)
                .mean_all()
                .add(&log_of(&score_fake.affine(-1.0, 1.0)).mean_all())?;
            if stats.is_none() {
                stats = Some(GanStats {
                    d_real: mean(&score_real.data()),
                    d_fake: mean(&score_fake.data()),
                    d_loss: -objective.item()?,
                    g_loss: mean(
                        &score_fake
                            .data()
                            .iter()
                            .map(|&d| (1.0 - d).clamp(LOG_EPS, 1.0 - LOG_EPS).ln())
                            .collect::<Vec<_>>(),
                    ),
                });
            }
            // Minimize the negated objective = ascend the objective.
            let loss = objective.affine(-1.0, 0.0);
            loss.backward()?;
            self.disc_opt.step(&self.discriminator.named_tensors())?;
            last_noise = noise;
        }
        let mut stats = stats.expect("at least one discriminator step");

        if !self.settings.freeze_generator {
            for step in 0..self.settings.generator_steps {
                let noise = if step == 0 {
                    std::mem::take(&mut last_noise)
                } else {
                    self.sample_noise(rows, rng)
                };
                // A fresh pass so the generator sees the updated
                // discriminator. The discriminator's parameters pick up
                // gradients here too; they are simply never stepped.
                let noise_t = Tensor::constant(noise, &[rows, self.settings.noise_dim])?;
                let gen_out = self.generator.forward(&noise_t)?;
                let score = self.discriminator.forward(&gen_out)?;
                let loss = log_of(&score.affine(-1.0, 1.0)).mean_all();
                if step == 0 {
                    stats.g_loss = loss.item()?;
                }
                loss.backward()?;
                self.gen_opt.step(&self.generator.named_tensors())?;
            }
        }

        Ok(stats)
    }

    /// Discriminator-only step against an explicitly supplied fake batch.
    /// This bypasses the generator entirely; tests use it to train the
    /// discriminator against a known density and compare its scores with
    /// the analytic optimum.
    pub fn discriminator_step(&mut self, real: &[&[f64]], fake: &[&[f64]]) -> Result<f64> {
        let fdim = self.settings.feature_dim;
        if real.is_empty() || real.len() != fake.len() {
            return Err(Error::Contract(format!(
                "need equal non-empty batches, got {} real / {} fake",
                real.len(),
                fake.len()
            )));
        }
        let flatten = |rows: &[&[f64]]| -> Result<Tensor> {
            let mut flat = Vec::with_capacity(rows.len() * fdim);
            for row in rows {
                if row.len() != fdim {
                    return Err(Error::Shape(format!(
                        "row has {} features, expected {fdim}",
                        row.len()
                    )));
                }
                flat.extend_from_slice(row);
            }
            Tensor::constant(flat, &[rows.len(), fdim])
        };
        let score_real = self.discriminator.forward(&flatten(real)?)?;
        let score_fake = self.discriminator.forward(&flatten(fake)?)?;
        let objective = log_of(&score_real)
            .mean_all()
            .add(&log_of(&score_fake.affine(-1.0, 1.0)).mean_all())?;
        let value = objective.item()?;
        objective.affine(-1.0, 0.0).backward()?;
        self.disc_opt.step(&self.discriminator.named_tensors())?;
        Ok(-value)
    }
}

/// `log` with its argument clamped away from 0 and 1, so saturated
/// discriminator outputs cannot produce infinities.
fn log_of(p: &Tensor) -> Tensor {
    p.clamp(LOG_EPS, 1.0 - LOG_EPS).log()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
