//! Scratch probe: full desk-scale pipeline check at candidate defaults.

use std::time::Instant;

use hbf_core::baselines::{dbf_se, omp_hbf, Codebook};
use hbf_core::channel::{generate_dataset, optimal_digital_precoder, realization_rng, SystemDims,
    TEST_STREAM_BASE};
use hbf_core::mannet::{fc_hbf_design, train, TrainConfig};
use hbf_core::subnet::{default_candidate_subcarriers, fixed_mapping, heuristic_sc_hbf,
    sc_candidate_design, sc_hbf_design, submannet_train};

fn main() {
    let dims = SystemDims::desk_default();
    let (rho, noise) = (10.0, 1.0);
    let i_net = 10;

    for &t in &[0.1, 0.25] {
        for seed in [1u64, 2, 3] {
            let train_set = generate_dataset(&dims, seed, 0, 200).unwrap();
            let test_set = generate_dataset(&dims, seed, TEST_STREAM_BASE, 50).unwrap();
            let cfg = TrainConfig {
                seed,
                batch_size: 2,
                activation_t: t,
                ..TrainConfig::desk_default()
            };
            let t0 = Instant::now();
            let man = train(&train_set, &cfg).unwrap();
            let sub = submannet_train(&train_set, &cfg).unwrap();
            let mut cfg1 = cfg.clone();
            cfg1.inner_iters = 1;
            let man1 = train(&train_set, &cfg1).unwrap();
            let train_time = t0.elapsed();

            let ratio = man.epoch_mean_loss(30).unwrap() / man.epoch_mean_loss(1).unwrap();
            let i3 = man.epoch_mean_loss(30).unwrap();
            let i1 = man1.epoch_mean_loss(30).unwrap();
            let sub_loss = sub.epoch_mean_loss(30).unwrap();

            let mut sums = [0.0f64; 6];
            let t0 = Instant::now();
            for (i, ch) in test_set.iter().enumerate() {
                let f_opt = optimal_digital_precoder(ch, rho, noise, dims.n_streams).unwrap();
                sums[0] += dbf_se(ch, &f_opt, rho, noise).unwrap();
                let mut rng = realization_rng(seed, (1 << 40) + i as u64);
                let fc = fc_hbf_design(&man.net, ch, &f_opt, rho, noise, i_net, &mut rng).unwrap();
                sums[1] += fc.se;
                let cb = Codebook::from_paths(ch);
                sums[2] += omp_hbf(ch, &f_opt, &cb, rho, noise).unwrap().design.se;
                let cands = default_candidate_subcarriers(dims.n_subcarriers);
                let mut rng = realization_rng(seed, (1 << 41) + i as u64);
                sums[3] +=
                    heuristic_sc_hbf(&man.net, ch, &f_opt, rho, noise, i_net, &cands, &mut rng)
                        .unwrap()
                        .se;
                let mut rng = realization_rng(seed, (1 << 42) + i as u64);
                sums[4] += sc_hbf_design(&sub.net, ch, &f_opt, rho, noise, i_net, &mut rng)
                    .unwrap()
                    .se;
                let map = fixed_mapping(dims.n_tx, dims.n_rf).unwrap();
                sums[5] += sc_candidate_design(&fc.f_rf.matrix, &map, ch, rho, noise)
                    .unwrap()
                    .se;
            }
            let eval_time = t0.elapsed();
            let n = test_set.len() as f64;
            println!(
                "t={t:<4} seed={seed}: loss ratio {ratio:.3}  I3 {i3:.3} vs I1 {i1:.3}  subloss {sub_loss:.3}"
            );
            println!(
                "   fc/dbf {:.4}  omp/dbf {:.4}  heur/fc {:.4}  sub/fc {:.4}  fixed/fc {:.4}  heur-sub {:+.4}  (train {train_time:?}, eval {eval_time:?})",
                sums[1] / sums[0],
                sums[2] / sums[0],
                sums[3] / sums[1],
                sums[4] / sums[1],
                sums[5] / sums[1],
                (sums[3] - sums[4]) / n,
            );
        }
    }
}
