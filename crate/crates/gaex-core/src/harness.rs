//! The experiment loop: act epsilon-greedily, store transitions, train the
//! Q-learner on its cadence with whatever bonus the mode prescribes, and
//! run adversarial rounds on every k-th learner update. Emits one metrics
//! record per episode.
//!
//! Reproducibility contract: every random concern draws from its own
//! counter-based stream of the run seed (initialization, acting, batch
//! sampling, adversarial batches). Because the streams are independent,
//! runs that differ only in side models — plain DQN versus a zero-scale
//! adversarial bonus, say — consume the acting and sampling streams
//! identically and traverse bit-identical trajectories.

use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{QLearner, ReplayBuffer, Transition, VisitCounter};
use crate::config::{Cadence, Mode, RunConfig};
use crate::error::{Error, Result};
use crate::gan::{intrinsic_reward, GanPair, GanStats};
use crate::metrics::MetricsRecord;

/// Fixed stream ids; the gaps between concerns must never change, or every
/// archived run becomes irreproducible.
mod streams {
    pub const INIT_LEARNER: u64 = 0;
    pub const INIT_GAN: u64 = 1;
    pub const POLICY: u64 = 2;
    pub const REPLAY: u64 = 3;
    pub const GAN_BATCHES: u64 = 4;
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Everything a finished run hands back.
pub struct TrainingResult {
    pub records: Vec<MetricsRecord>,
    pub learner: QLearner,
    pub gan: Option<GanPair>,
}

/// Discriminator scores per state, cached until the discriminator next
/// changes. Training evaluates the bonus thousands of times per update on
/// a handful of distinct states, so this is the difference between
/// re-running the net and a hash lookup.
struct ScoreCache {
    version: u64,
    map: HashMap<Vec<u64>, f64>,
}

impl ScoreCache {
    fn new() -> ScoreCache {
        ScoreCache {
            version: 0,
            map: HashMap::new(),
        }
    }

    fn get(&mut self, gan: &GanPair, features: &[f64]) -> f64 {
        let current = gan.discriminator_updates();
        if current != self.version {
            self.map.clear();
            self.version = current;
        }
        let key: Vec<u64> = features.iter().map(|v| v.to_bits()).collect();
        *self.map.entry(key).or_insert_with(|| {
            gan.discriminate(features)
                .expect("discriminator built for this run's feature width")
        })
    }
}

/// Train one run under `cfg`, tagging its records with `run_index`.
pub fn run_training(cfg: &RunConfig, run_index: u64, seed: u64) -> Result<TrainingResult> {
    cfg.validate()?;
    let mode = cfg.mode;
    let mut env = cfg.make_env()?;
    let fmap = cfg.feature_map();
    let input_dim = fmap.output_dim(env.obs_dim());

    let mut learner = QLearner::new(
        cfg.learner_settings(input_dim, env.num_actions()),
        &mut stream(seed, streams::INIT_LEARNER),
    )?;
    let mut gan = if mode.uses_gan() {
        Some(GanPair::new(
            cfg.gan_settings(input_dim),
            &mut stream(seed, streams::INIT_GAN),
        )?)
    } else {
        None
    };
    let mut counter = mode.uses_counts().then(VisitCounter::new);

    let mut policy_rng = stream(seed, streams::POLICY);
    let mut replay_rng = stream(seed, streams::REPLAY);
    let mut gan_rng = stream(seed, streams::GAN_BATCHES);

    let mut replay = ReplayBuffer::new(cfg.agent.replay_capacity)?;
    let schedule = cfg.epsilon_schedule()?;
    let beta = cfg.bonus.beta;
    let mut cache = ScoreCache::new();

    // Exploration decays per learner update, not per environment step, so
    // epsilon sits at its start value until the buffer has primed and the
    // first update has run, and the anneal pace is tied to how much the
    // network has actually trained.
    let mut total_steps: u64 = 0;
    let mut learner_updates: u64 = 0;
    let mut optimal_streak: u64 = 0;
    let mut records = Vec::new();

    for episode in 0..cfg.episodes {
        let obs = env.reset();
        let mut features: Arc<[f64]> = fmap.apply(&obs)?.into();
        if let Some(c) = counter.as_mut() {
            c.observe(&features);
        }
        let mut ext_return = 0.0;
        let mut int_return = 0.0;
        let mut max_progress = env.progress();
        let mut episode_steps: u64 = 0;
        let mut td_losses = Vec::new();
        let mut gan_stats: Vec<GanStats> = Vec::new();

        loop {
            let epsilon = schedule.value(learner_updates);
            let action =
                learner.select_action_by(epsilon, &mut policy_rng, || learner.q_values(&features))?;
            let out = env.step(action)?;
            let next_features: Arc<[f64]> = fmap.apply(&out.obs)?.into();

            if let Some(c) = counter.as_mut() {
                c.observe(&next_features);
            }
            ext_return += out.reward;
            int_return += match (&gan, &counter) {
                (Some(g), _) => intrinsic_reward(cache.get(g, &next_features), beta),
                (None, Some(c)) => c.bonus(&next_features, beta),
                (None, None) => 0.0,
            };
            replay.push(Transition {
                features: Arc::clone(&features),
                action,
                reward: out.reward,
                next_features: Arc::clone(&next_features),
                done: out.done,
                episode,
                step: episode_steps as usize,
            });
            features = next_features;
            episode_steps += 1;
            total_steps += 1;
            max_progress = max_progress.max(env.progress());
            let primed = replay.len() >= cfg.agent.replay_start;
            if primed {
                decay_steps += 1;
            }
            if let Cadence::Steps { steps } = cfg.agent.train_every {
                if primed && total_steps % steps == 0 {
                    train_once(
                        cfg, mode, beta, &mut learner, &mut gan, &counter, &replay,
                        &mut replay_rng, &mut gan_rng, &mut cache, &mut learner_updates,
                        &mut td_losses, &mut gan_stats,
                    )?;
                }
            }
            if out.done {
                break;
            }
        }

        if let Cadence::Episodes { episodes } = cfg.agent.train_every {
            let primed = replay.len() >= cfg.agent.replay_start;
            if primed && (episode + 1) % episodes == 0 {
                train_once(
                    cfg, mode, beta, &mut learner, &mut gan, &counter, &replay,
                    &mut replay_rng, &mut gan_rng, &mut cache, &mut learner_updates,
                    &mut td_losses, &mut gan_stats,
                )?;
            }
        }

        records.push(MetricsRecord {
            run: run_index,
            seed,
            episode,
            steps: episode_steps,
            ext_return,
            int_return,
            max_state: max_progress,
            d_real: mean_of(gan_stats.iter().map(|s| s.d_real)),
            d_fake: mean_of(gan_stats.iter().map(|s| s.d_fake)),
            d_loss: mean_of(gan_stats.iter().map(|s| s.d_loss)),
            g_loss: mean_of(gan_stats.iter().map(|s| s.g_loss)),
            td_loss: mean_of(td_losses.iter().copied()),
            epsilon: schedule.value(decay_steps),
        });

        if let Some(stop) = cfg.early_stop {
            if ext_return >= stop.return_at_least {
                optimal_streak += 1;
            } else {
                optimal_streak = 0;
            }
            if optimal_streak >= stop.consecutive {
                break;
            }
        }
    }

    Ok(TrainingResult {
        records,
        learner,
        gan,
    })
}

/// One learner update plus, on its cadence, one adversarial round fed with
/// successor states sampled from replay.
#[allow(clippy::too_many_arguments)]
fn train_once(
    cfg: &RunConfig,
    mode: Mode,
    beta: f64,
    learner: &mut QLearner,
    gan: &mut Option<GanPair>,
    counter: &Option<VisitCounter>,
    replay: &ReplayBuffer,
    replay_rng: &mut ChaCha8Rng,
    gan_rng: &mut ChaCha8Rng,
    cache: &mut ScoreCache,
    learner_updates: &mut u64,
    td_losses: &mut Vec<f64>,
    gan_stats: &mut Vec<GanStats>,
) -> Result<()> {
    let td = match mode {
        Mode::Dqn => learner.update(replay, replay_rng, &mut |t: &Transition| t.reward)?,
        Mode::GanBonus | Mode::FrozenGanBonus => {
            let g = gan.as_ref().expect("adversarial modes build a GAN");
            learner.update(replay, replay_rng, &mut |t: &Transition| {
                t.reward + intrinsic_reward(cache.get(g, &t.next_features), beta)
            })?
        }
        Mode::CountBonus => {
            let c = counter.as_ref().expect("count mode builds a counter");
            learner.update(replay, replay_rng, &mut |t: &Transition| {
                t.reward + c.bonus(&t.next_features, beta)
            })?
        }
    };
    td_losses.push(td);
    *learner_updates += 1;
    if let Some(g) = gan.as_mut() {
        if *learner_updates % cfg.gan.train_every_updates == 0 {
            let idxs = replay.sample_indices(cfg.agent.batch_size, gan_rng)?;
            let reals: Vec<&[f64]> = idxs
                .iter()
                .map(|&i| replay.get(i).next_features.as_ref())
                .collect();
            gan_stats.push(g.update(&reals, gan_rng)?);
        }
    }
    Ok(())
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0u64;
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Run `cfg.runs` runs with consecutive seeds and concatenate their
/// records.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<MetricsRecord>> {
    let mut all = Vec::new();
    for r in 0..cfg.runs {
        all.extend(run_training(cfg, r, cfg.seed + r)?.records);
    }
    Ok(all)
}

/// Axes to sweep around a base config. Every non-empty axis contributes
/// one label part per value; the product of all axes defines the variant
/// set. Seeds come from the base config, so every variant sees the same
/// seed list.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationGrid {
    pub modes: Vec<Mode>,
    /// Values for `gan.train_every_updates`.
    pub gan_every: Vec<u64>,
    /// Values for `bonus.beta`.
    pub betas: Vec<f64>,
}

impl AblationGrid {
    pub fn from_toml_str(text: &str) -> Result<AblationGrid> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &std::path::Path) -> Result<AblationGrid> {
        AblationGrid::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Expand the grid into labeled configs, rejecting combinations whose
/// swept knob the mode would silently ignore.
pub fn ablation_variants(
    base: &RunConfig,
    grid: &AblationGrid,
) -> Result<Vec<(String, RunConfig)>> {
    let modes: Vec<Option<Mode>> = if grid.modes.is_empty() {
        vec![None]
    } else {
        grid.modes.iter().copied().map(Some).collect()
    };
    if !grid.gan_every.is_empty() {
        let all = modes
            .iter()
            .map(|m| m.unwrap_or(base.mode))
            .all(Mode::uses_gan);
        if !all {
            return Err(Error::Config(
                "sweeping the adversarial cadence over a mode without a GAN does nothing; \
                 drop the mode or the gan_every axis"
                    .into(),
            ));
        }
    }
    if !grid.betas.is_empty() {
        let any_plain = modes
            .iter()
            .map(|m| m.unwrap_or(base.mode))
            .any(|m| m == Mode::Dqn);
        if any_plain {
            return Err(Error::Config(
                "sweeping the bonus scale over plain DQN does nothing; \
                 drop the mode or the betas axis"
                    .into(),
            ));
        }
    }
    let gan_every: Vec<Option<u64>> = if grid.gan_every.is_empty() {
        vec![None]
    } else {
        grid.gan_every.iter().copied().map(Some).collect()
    };
    let betas: Vec<Option<f64>> = if grid.betas.is_empty() {
        vec![None]
    } else {
        grid.betas.iter().copied().map(Some).collect()
    };

    let mut variants = Vec::new();
    for &mode in &modes {
        for &every in &gan_every {
            for &beta in &betas {
                let mut cfg = base.clone();
                let mut parts = Vec::new();
                if let Some(m) = mode {
                    cfg.mode = m;
                    parts.push(format!("mode={}", mode_tag(m)));
                }
                if let Some(k) = every {
                    cfg.gan.train_every_updates = k;
                    parts.push(format!("gan_every={k}"));
                }
                if let Some(b) = beta {
                    cfg.bonus.beta = b;
                    parts.push(format!("beta={b}"));
                }
                cfg.validate()?;
                let label = if parts.is_empty() {
                    "base".to_string()
                } else {
                    parts.join(",")
                };
                variants.push((label, cfg));
            }
        }
    }
    Ok(variants)
}

fn mode_tag(mode: Mode) -> &'static str {
    match mode {
        Mode::Dqn => "dqn",
        Mode::GanBonus => "gan_bonus",
        Mode::FrozenGanBonus => "frozen_gan_bonus",
        Mode::CountBonus => "count_bonus",
    }
}

/// Run every variant of the grid and return (label, records) pairs.
pub fn run_ablation(
    base: &RunConfig,
    grid: &AblationGrid,
) -> Result<Vec<(String, Vec<MetricsRecord>)>> {
    let mut out = Vec::new();
    for (label, cfg) in ablation_variants(base, grid)? {
        out.push((label, run_experiment(&cfg)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EarlyStop;

    /// A chain config small enough to train in milliseconds.
    fn tiny(mode: Mode) -> RunConfig {
        let mut cfg = RunConfig::chain(5);
        cfg.mode = mode;
        cfg.episodes = 40;
        cfg.agent.hidden = vec![16];
        cfg.agent.batch_size = 16;
        cfg.agent.replay_capacity = 400;
        cfg.agent.replay_start = 60;
        cfg.agent.n_step = crate::config::NStepSpec::Fixed(3);
        cfg.agent.epsilon.stages = vec![(0.05, 0.01)];
        cfg.gan.generator_hidden = vec![8];
        cfg.gan.discriminator_hidden = vec![8];
        cfg
    }

    #[test]
    fn identical_seeds_reproduce_records_exactly() {
        let cfg = tiny(Mode::GanBonus);
        let a = run_training(&cfg, 0, 7).unwrap().records;
        let b = run_training(&cfg, 0, 7).unwrap().records;
        assert_eq!(a, b);
        let c = run_training(&cfg, 0, 8).unwrap().records;
        assert_ne!(a, c);
    }

    #[test]
    fn plain_dqn_and_zero_scale_bonus_walk_the_same_path() {
        // With the bonus scale at zero the adversarial machinery still
        // trains, but every intrinsic reward is exactly 0, and the
        // separated random streams keep acting and sampling untouched —
        // so the trajectory columns must agree bit for bit.
        let dqn = tiny(Mode::Dqn);
        let mut zero = tiny(Mode::GanBonus);
        zero.bonus.beta = 0.0;
        let a = run_training(&dqn, 0, 3).unwrap();
        let b = run_training(&zero, 0, 3).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.trajectory_bits(), y.trajectory_bits());
        }
        // And the side models really did diverge in their own columns.
        assert!(a.records.iter().all(|r| r.d_real.is_none()));
        assert!(b.records.iter().any(|r| r.d_real.is_some()));
        assert!(b.gan.is_some() && b.gan.unwrap().discriminator_updates() > 0);
    }

    #[test]
    fn episode_records_carry_consistent_bookkeeping() {
        let cfg = tiny(Mode::GanBonus);
        let records = run_training(&cfg, 2, 11).unwrap().records;
        assert_eq!(records.len(), 40);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.run, 2);
            assert_eq!(r.seed, 11);
            assert_eq!(r.episode, i as u64);
            assert_eq!(r.steps, 14, "chain of 5 runs 5+9 steps");
            assert!((2..=5).contains(&(r.max_state as usize)));
            assert!(r.ext_return >= 0.0);
        }
        // Epsilon holds at the start value until the buffer primes, then
        // never rises again.
        assert_eq!(records[0].epsilon, 1.0);
        for pair in records.windows(2) {
            assert!(pair[1].epsilon <= pair[0].epsilon);
        }
        assert!(records.last().unwrap().epsilon < 1.0);
        // Updates begin once primed and then follow the every-2-episodes
        // cadence exactly.
        let first_update = records.iter().position(|r| r.td_loss.is_some()).unwrap();
        assert!(first_update >= 4, "60 transitions need 5 episodes");
        for r in &records[first_update..] {
            assert_eq!(r.td_loss.is_some(), (r.episode + 1) % 2 == 0, "episode {}", r.episode);
        }
    }

    #[test]
    fn adversarial_rounds_follow_their_cadence() {
        let mut cfg = tiny(Mode::GanBonus);
        cfg.gan.train_every_updates = 3;
        let records = run_training(&cfg, 0, 5).unwrap().records;
        let with_updates: Vec<&MetricsRecord> =
            records.iter().filter(|r| r.td_loss.is_some()).collect();
        let with_gan = with_updates.iter().filter(|r| r.d_real.is_some()).count();
        // One learner update per 2 episodes; every 3rd carries a GAN round.
        assert!(with_gan >= with_updates.len() / 3 - 1);
        assert!(with_gan <= with_updates.len() / 3 + 1);
        assert!(with_gan > 0);
    }

    #[test]
    fn count_mode_pays_novelty_and_needs_no_gan() {
        let cfg = tiny(Mode::CountBonus);
        let result = run_training(&cfg, 0, 1).unwrap();
        assert!(result.gan.is_none());
        assert!(result.records[0].int_return > 0.0, "first visits pay beta");
        assert!(result.records.iter().all(|r| r.d_real.is_none()));
        // Early episodes visit mostly fresh states, late ones mostly
        // familiar ones, so the diagnostic bonus shrinks.
        let first = result.records[0].int_return;
        let last = result.records.last().unwrap().int_return;
        assert!(last < first);
    }

    #[test]
    fn early_stop_ends_the_run_after_the_streak() {
        let mut cfg = tiny(Mode::Dqn);
        cfg.early_stop = Some(EarlyStop {
            return_at_least: 0.0,
            consecutive: 3,
        });
        let records = run_training(&cfg, 0, 0).unwrap().records;
        assert_eq!(records.len(), 3, "every return clears a 0.0 bar");
    }

    #[test]
    fn experiment_stacks_runs_with_consecutive_seeds() {
        let mut cfg = tiny(Mode::Dqn);
        cfg.episodes = 4;
        cfg.runs = 3;
        cfg.seed = 100;
        let records = run_experiment(&cfg).unwrap();
        assert_eq!(records.len(), 12);
        for r in 0..3u64 {
            let chunk: Vec<&MetricsRecord> =
                records.iter().filter(|rec| rec.run == r).collect();
            assert_eq!(chunk.len(), 4);
            assert!(chunk.iter().all(|rec| rec.seed == 100 + r));
        }
    }

    #[test]
    fn ablation_grids_expand_and_share_seeds() {
        let base = tiny(Mode::GanBonus);
        let grid = AblationGrid {
            modes: vec![Mode::GanBonus, Mode::FrozenGanBonus],
            gan_every: vec![1, 25],
            betas: vec![],
        };
        let variants = ablation_variants(&base, &grid).unwrap();
        assert_eq!(variants.len(), 4);
        let labels: Vec<&str> = variants.iter().map(|(l, _)| l.as_str()).collect();
        assert!(labels.contains(&"mode=gan_bonus,gan_every=1"));
        assert!(labels.contains(&"mode=frozen_gan_bonus,gan_every=25"));
        assert!(variants.iter().all(|(_, c)| c.seed == base.seed));

        // A cadence sweep over plain DQN is refused rather than ignored.
        let bad = AblationGrid {
            modes: vec![Mode::Dqn, Mode::GanBonus],
            gan_every: vec![1, 25],
            betas: vec![],
        };
        assert!(ablation_variants(&base, &bad).is_err());
        let bad = AblationGrid {
            modes: vec![Mode::Dqn],
            gan_every: vec![],
            betas: vec![0.5, 1.0],
        };
        assert!(ablation_variants(&base, &bad).is_err());

        // Empty grid = the base config itself.
        let none = ablation_variants(&base, &AblationGrid::default()).unwrap();
        assert_eq!(none.len(), 1);
        assert_eq!(none[0].0, "base");
    }

    #[test]
    fn grid_parses_from_toml() {
        let grid =
            AblationGrid::from_toml_str("gan_every = [1, 5, 25]\nmodes = [\"gan_bonus\"]\n")
                .unwrap();
        assert_eq!(grid.gan_every, vec![1, 5, 25]);
        assert_eq!(grid.modes, vec![Mode::GanBonus]);
        assert!(AblationGrid::from_toml_str("bogus = 3\n").is_err());

        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let modes = AblationGrid::from_path(&dir.join("chain200_modes.toml")).unwrap();
        assert_eq!(modes.modes, vec![Mode::Dqn, Mode::GanBonus, Mode::CountBonus]);
        let cadence = AblationGrid::from_path(&dir.join("chain200_gan_every.toml")).unwrap();
        assert_eq!(cadence.gan_every, vec![1, 25]);
    }

    #[test]
    fn pixel_runs_train_end_to_end() {
        // A microscopic pixel-grid run: proves the frame stack, feature
        // map, step-cadence training and adversarial rounds compose.
        let mut cfg = RunConfig::pixel();
        cfg.episodes = 2;
        cfg.agent.hidden = vec![16];
        cfg.agent.batch_size = 8;
        cfg.agent.replay_capacity = 600;
        cfg.agent.replay_start = 100;
        cfg.agent.train_every = Cadence::Steps { steps: 50 };
        cfg.gan.generator_hidden = vec![16];
        cfg.gan.discriminator_hidden = vec![16];
        cfg.gan.noise_dim = Some(8);
        cfg.gan.train_every_updates = 2;
        let result = run_training(&cfg, 0, 9).unwrap();
        assert_eq!(result.records.len(), 2);
        let r = &result.records[0];
        assert_eq!(r.steps, 500, "grid episodes run the full horizon early on");
        assert!(r.td_loss.is_some());
        assert!(result.records.iter().any(|r| r.d_real.is_some()));
        assert!(r.int_return.is_finite() && r.ext_return >= 0.0);
    }
}
