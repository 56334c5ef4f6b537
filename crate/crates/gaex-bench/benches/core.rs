//! Wall-clock benchmarks for the pieces that dominate a training run:
//! network forward/backward passes, value-network and adversarial updates,
//! environment stepping, and the frame-stack feature summary.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gaex_core::abstraction::FeatureMap;
use gaex_core::agent::{QLearner, QLearnerSettings, ReplayBuffer, Transition};
use gaex_core::gan::{GanPair, GanSettings};
use gaex_core::nn::{Activation, NetworkParams, Output};
use gaex_core::tensor::Tensor;
use gaex_core::Env;

/// Replay buffer filled with enough random chain transitions to sample from.
fn filled_replay(n: usize, rng: &mut ChaCha8Rng) -> ReplayBuffer {
    let mut env = Env::chain(n).unwrap();
    let mut replay = ReplayBuffer::new(10_000).unwrap();
    let mut episode = 0u64;
    while replay.len() < 2_000 {
        let mut obs = env.reset();
        let mut step = 0usize;
        loop {
            let action = rng.gen_range(0..2);
            let out = env.step(action).unwrap();
            replay.push(Transition {
                features: obs.clone().into(),
                action,
                reward: out.reward,
                next_features: out.obs.clone().into(),
                done: out.done,
                episode,
                step,
            });
            obs = out.obs;
            step += 1;
            if out.done {
                break;
            }
        }
        episode += 1;
    }
    replay
}

fn bench_tensor(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a: Vec<f64> = (0..300 * 128).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..128 * 256).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ta = Tensor::constant(a, &[300, 128]).unwrap();
    let tb = Tensor::constant(b, &[128, 256]).unwrap();
    c.bench_function("matmul_300x128x256", |bench| {
        bench.iter(|| black_box(ta.matmul(&tb).unwrap()))
    });

    let net = NetworkParams::mlp(
        &[10, 64, 128, 256, 128, 2],
        Activation::Relu,
        Output::Linear,
        &mut rng,
    )
    .unwrap();
    let x: Vec<f64> = (0..300 * 10).map(|_| rng.gen_range(0.0..1.0)).collect();
    let xt = Tensor::constant(x.clone(), &[300, 10]).unwrap();
    c.bench_function("mlp_forward_batch300", |bench| {
        bench.iter(|| black_box(net.forward(&xt).unwrap()))
    });
    c.bench_function("mlp_forward_backward_batch300", |bench| {
        bench.iter(|| {
            let y = net.forward(&xt).unwrap();
            let loss = y.mean_all();
            loss.backward().unwrap();
            black_box(loss.item().unwrap())
        })
    });
    c.bench_function("mlp_infer_one", |bench| {
        bench.iter(|| black_box(net.infer_one(&x[..10]).unwrap()))
    });
}

fn bench_agent(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let replay = filled_replay(10, &mut rng);
    let settings = QLearnerSettings::new(10, 2);
    let mut learner = QLearner::new(settings, &mut rng).unwrap();
    c.bench_function("dqn_update_batch300", |bench| {
        bench.iter(|| {
            learner
                .update(&replay, &mut rng, &mut |t: &Transition| t.reward)
                .unwrap()
        })
    });
}

fn bench_gan(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut gan = GanPair::new(GanSettings::default(), &mut rng).unwrap();
    let real: Vec<Vec<f64>> = (0..300)
        .map(|_| (0..10).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let refs: Vec<&[f64]> = real.iter().map(|r| r.as_slice()).collect();
    c.bench_function("gan_update_batch300", |bench| {
        bench.iter(|| black_box(gan.update(&refs, &mut rng).unwrap()))
    });
    let probe: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..1.0)).collect();
    c.bench_function("discriminator_score_one", |bench| {
        bench.iter(|| black_box(gan.discriminate(&probe).unwrap()))
    });
}

fn bench_envs(c: &mut Criterion) {
    let mut env = Env::chain(200).unwrap();
    env.reset();
    let mut flip = 0usize;
    c.bench_function("chain200_step", |bench| {
        bench.iter(|| {
            flip ^= 1;
            black_box(env.step(flip).unwrap().reward)
        })
    });

    let mut pixel = Env::pixel_grid();
    let mut obs = pixel.reset();
    let mut k = 0usize;
    c.bench_function("pixel_grid_step", |bench| {
        bench.iter(|| {
            k = (k + 1) % 4;
            let out = pixel.step(k).unwrap();
            if out.done {
                obs = pixel.reset();
            } else {
                obs = out.obs;
            }
            black_box(obs.len())
        })
    });

    let map = FeatureMap::PixelSummary;
    c.bench_function("frame_stack_summary_148d", |bench| {
        bench.iter(|| black_box(map.apply(&obs).unwrap()))
    });
}

criterion_group!(benches, bench_tensor, bench_agent, bench_gan, bench_envs);
criterion_main!(benches);
