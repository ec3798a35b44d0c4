mod common;

use common::{gaussian_moments_agree, moments, seeded, toy_dataset, toy_network_config};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use stellagen_core::dataset::{Conditions, Dataset, Record};
use stellagen_core::ddpm::{
    linear_schedule, q_sample, sample, train, DiffusionModel, ScheduleConfig, SigmaChoice, TrainConfig,
};
use stellagen_core::mlp::{AdamConfig, Network, NetworkConfig};

fn toy_schedule() -> ScheduleConfig {
    // the usual range rescaled by 1000/T, so that ᾱ_T is close to zero
    ScheduleConfig {
        timesteps: 50,
        beta_start: 2e-3,
        beta_end: 0.4,
        sigma: SigmaChoice::Beta,
    }
}

fn train_toy() -> (DiffusionModel, Vec<f64>) {
    let data = toy_dataset(2000, 0.1, 1);
    let mut model = DiffusionModel {
        schedule: toy_schedule().build().unwrap(),
        network: Network::new(toy_network_config(), 2).unwrap(),
    };
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 128,
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        seed: 3,
    };
    let out = train(&mut model, &data, &cfg).unwrap();
    (model, out.step_losses)
}

#[test]
fn alpha_bar_matches_log_space_product() {
    let s = linear_schedule(200, 1e-4, 0.02).unwrap();
    let mut log_sum = 0.0;
    for t in 1..=200 {
        let beta = 1e-4 + (0.02 - 1e-4) * (t - 1) as f64 / 199.0;
        log_sum += (1.0 - beta).ln();
        assert!((s.alpha_bar[t - 1] - log_sum.exp()).abs() <= 1e-12);
        assert!((s.beta[t - 1] - beta).abs() <= 1e-15);
    }
}

#[test]
fn forward_marginals_match_closed_form() {
    let s = linear_schedule(200, 1e-4, 0.02).unwrap();
    let x0 = [1.5, -0.7, 0.0];
    let n = 100_000;
    let mut rng = seeded(77);
    for t in [1, 100, 200] {
        let ab = s.alpha_bar[t - 1];
        let mut columns = vec![Vec::with_capacity(n); x0.len()];
        for _ in 0..n {
            let z: Vec<f64> = (0..x0.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let xt = q_sample(&s, &x0, t, &z).unwrap();
            for (c, v) in columns.iter_mut().zip(xt) {
                c.push(v);
            }
        }
        for (j, c) in columns.iter().enumerate() {
            assert!(
                gaussian_moments_agree(moments(c), ab.sqrt() * x0[j], 1.0 - ab, n, 4.0),
                "t = {t}, component {j}: {:?}",
                moments(c)
            );
        }
    }
}

#[test]
fn zero_network_sampling_follows_variance_recursion() {
    let config = NetworkConfig {
        input_dim: 2,
        hidden_width: 4,
        hidden_layers: 1,
        x_embed_dim: 2,
        t_embed_dim: 2,
        y_embed_dim: 2,
        output_dim: 2,
        x_sinusoid_dim: 2,
        t_sinusoid_dim: 2,
        y_sinusoid_dim: 2,
    };
    for sigma in [SigmaChoice::Beta, SigmaChoice::Posterior] {
        let schedule = ScheduleConfig {
            timesteps: 40,
            sigma,
            ..ScheduleConfig::default()
        }
        .build()
        .unwrap();
        let mut var = 1.0;
        for t in (1..=schedule.timesteps()).rev() {
            let i = t - 1;
            var = var / schedule.alpha[i] + if t > 1 { schedule.sigma[i].powi(2) } else { 0.0 };
        }
        let model = DiffusionModel {
            schedule,
            network: Network::zeros(config.clone()).unwrap(),
        };
        let n = 20_000;
        let xs = sample(&model, &Conditions([0.3, 4.0, 2.0, 0.0]), n, 5, 0).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = xs.iter().map(|x| x[j]).collect();
            assert!(
                gaussian_moments_agree(moments(&col), 0.0, var, n, 4.0),
                "{sigma:?}: {:?} vs variance {var}",
                moments(&col)
            );
        }
    }
}

#[test]
fn toy_task_learns_the_conditional_means() {
    let (model, losses) = train_toy();
    let window = |k: usize| losses[k..k + 20].iter().sum::<f64>() / 20.0;
    assert!(window(480) < 0.5 * window(0), "{} vs {}", window(480), window(0));
    for y in [1.0, -1.0] {
        let xs = sample(&model, &Conditions([y, 0.0, 0.0, 0.0]), 1000, 7, 0).unwrap();
        let v: Vec<f64> = xs.iter().map(|x| x[0]).collect();
        let (mean, _) = moments(&v);
        assert!((mean - y).abs() < 0.1, "y = {y}: mean {mean}");
    }
}

/// `x0 = (0.8·y, −0.5·y) + 0.1·noise` with `y ~ U[−1, 1]`: the sampler's
/// conditional mean tracks the linear map at unseen `y`.
#[test]
fn conditional_mean_follows_a_linear_map() {
    let mut rng = seeded(8);
    let map = [0.8, -0.5];
    let records: Vec<Record> = (0..2000)
        .map(|k| {
            let y: f64 = 2.0 * rng.random::<f64>() - 1.0;
            let features = map
                .iter()
                .map(|a| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    a * y + 0.1 * z
                })
                .collect();
            Record {
                id: format!("lin{k}"),
                features,
                conditions: Conditions([y, 0.0, 0.0, 0.0]),
            }
        })
        .collect();
    let data = Dataset::new(2, records).unwrap();
    let mut net_config = toy_network_config();
    net_config.input_dim = 2;
    net_config.output_dim = 2;
    let mut model = DiffusionModel {
        schedule: toy_schedule().build().unwrap(),
        network: Network::new(net_config, 4).unwrap(),
    };
    let cfg = TrainConfig {
        epochs: 300,
        batch_size: 128,
        adam: AdamConfig {
            lr: 1e-3,
            ..AdamConfig::default()
        },
        seed: 9,
    };
    train(&mut model, &data, &cfg).unwrap();
    for y in [-0.55, 0.35] {
        let xs = sample(&model, &Conditions([y, 0.0, 0.0, 0.0]), 1000, 1, 0).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = xs.iter().map(|x| x[j]).collect();
            let (mean, _) = moments(&col);
            assert!((mean - map[j] * y).abs() < 0.1, "y = {y}, j = {j}: {mean}");
        }
    }
}
