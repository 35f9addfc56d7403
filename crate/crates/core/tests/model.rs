mod common;

use common::*;
use cpnet::model::{apply_ablation, Ablation, BranchConfig, CpNet, ModelConfig, NormalizedBatch};
use cpnet::nn::{Forward, ParamId, ParamStore};
use cpnet::tensor::{Graph, Tensor};
use proptest::prelude::*;

fn small_config(branches: &[(usize, usize)]) -> ModelConfig {
    ModelConfig {
        lookback: 8,
        horizon: 4,
        branches: branches
            .iter()
            .map(|&(t, s)| BranchConfig::new(t, s))
            .collect(),
        embed_channels: 1,
        hidden: 8,
        dilated_kernel: 3,
        ..Default::default()
    }
}

fn set(store: &mut ParamStore, id: ParamId, values: &[f64]) {
    store.get_mut(id).data_mut().copy_from_slice(values);
}

#[test]
fn shape_chain_at_default_configuration() {
    let cfg = ModelConfig::default();
    let (net, params) = CpNet::new(cfg.clone(), 1).unwrap();
    let channels = 7;
    let g = Graph::new();
    let f = Forward::inference(&g, &params);
    let x = g.constant(random_tensor(&mut rng(2), &[channels, 1, 96]));
    let mut sampled = Vec::new();
    for branch in net.branches() {
        let x_tp = branch.token.forward(&f, x).unwrap();
        assert_eq!(g.shape(x_tp), [channels, 1, 96]);
        let trace = branch.sampling.forward_traced(&f, x_tp, x).unwrap();
        assert_eq!(g.shape(trace.context), [channels, 1, 192]);
        assert_eq!(g.shape(trace.dilated), [channels, 1, 192]);
        sampled.push(g.shape(trace.sampled)[2]);
        let y_m = branch.predictor.forward(&f, trace.sampled).unwrap();
        assert_eq!(g.shape(y_m), [channels, 1, 192]);
    }
    assert_eq!(sampled, [96, 48, 24]);
    let window = random_tensor(&mut rng(3), &[96, channels]);
    let y = net.predict(&params, &window).unwrap();
    assert_eq!(y.shape(), [96, channels]);
}

#[test]
fn parameter_count_is_exact() {
    for cfg in [
        ModelConfig::default(),
        small_config(&[(3, 5)]),
        ModelConfig {
            embed_channels: 4,
            ..small_config(&[(2, 2), (3, 4), (1, 1)])
        },
        apply_ablation(&ModelConfig::default(), Ablation::NoTpCs),
    ] {
        let (_, params) = CpNet::new(cfg.clone(), 0).unwrap();
        assert_eq!(params.scalar_count(), cfg.param_count(), "{cfg:?}");
    }
}

#[test]
fn token_projection_with_unit_tokens_is_pointwise_mlp() {
    let cfg = small_config(&[(1, 2)]);
    let (net, mut params) = CpNet::new(cfg, 4).unwrap();
    let tp = &net.branches()[0].token;
    set(&mut params, tp.conv.weight, &[1.0]);
    set(&mut params, tp.conv.bias, &[0.0]);
    set(&mut params, tp.collapse.weight, &[1.0]);
    set(&mut params, tp.collapse.bias, &[0.0]);
    let g = Graph::new();
    let f = Forward::inference(&g, &params);
    let x = g.constant(random_tensor(&mut rng(5), &[3, 1, 8]));
    let block = tp.forward(&f, x).unwrap();
    let plain = tp.mlp.forward(&f, x).unwrap();
    assert_eq!(*g.value(block), *g.value(plain));
    assert_eq!(g.shape(block), [3, 1, 4]);
}

#[test]
fn token_projection_rejects_oversized_tokens() {
    let cfg = small_config(&[(9, 2)]);
    assert!(CpNet::new(cfg, 0).is_err());
}

#[test]
fn identity_sampling_returns_concatenation() {
    let cfg = apply_ablation(&small_config(&[(2, 3)]), Ablation::NoCs);
    let (net, mut params) = CpNet::new(cfg, 6).unwrap();
    let cs = &net.branches()[0].sampling;
    set(&mut params, cs.dilated.weight, &[1.0]);
    set(&mut params, cs.dilated.bias, &[0.0]);
    set(&mut params, cs.sample.weight, &[1.0]);
    set(&mut params, cs.sample.bias, &[0.0]);
    let g = Graph::new();
    let f = Forward::inference(&g, &params);
    let hist = random_tensor(&mut rng(7), &[2, 1, 8]);
    let pred = random_tensor(&mut rng(8), &[2, 1, 4]);
    let out = cs
        .forward(&f, g.constant(pred.clone()), g.constant(hist.clone()))
        .unwrap();
    let value = g.value(out);
    assert_eq!(value.shape(), [2, 1, 12]);
    for r in 0..2 {
        let row = &value.data()[r * 12..][..12];
        assert_eq!(&row[..8], &hist.data()[r * 8..][..8]);
        assert_eq!(&row[8..], &pred.data()[r * 4..][..4]);
    }
}

#[test]
fn sampling_stage_matches_block_dot_oracle() {
    let cfg = ModelConfig::default();
    let (net, params) = CpNet::new(cfg, 9).unwrap();
    let g = Graph::new();
    let f = Forward::inference(&g, &params);
    let x = g.constant(random_tensor(&mut rng(10), &[4, 1, 96]));
    for branch in net.branches() {
        let x_tp = branch.token.forward(&f, x).unwrap();
        let trace = branch.sampling.forward_traced(&f, x_tp, x).unwrap();
        let kernel = params.get(branch.sampling.sample.weight).data().to_vec();
        let bias = params.get(branch.sampling.sample.bias).data()[0];
        let dilated = g.value(trace.dilated).clone();
        let sampled = g.value(trace.sampled).clone();
        for (d, s) in tensor_rows(&dilated, 4)
            .iter()
            .zip(tensor_rows(&sampled, 4))
        {
            let expect = block_dot_conv(d, &kernel, bias);
            assert_eq!(expect.len(), s.len());
            for (a, b) in expect.iter().zip(&s) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn non_dividing_rate_replicates_earliest_value() {
    // I + O = 12, SR = 5 -> three replicated steps, M = 3.
    let cfg = apply_ablation(
        &ModelConfig {
            dilated_kernel: 1,
            ..small_config(&[(2, 5)])
        },
        Ablation::Full,
    );
    let (net, mut params) = CpNet::new(cfg, 11).unwrap();
    let cs = &net.branches()[0].sampling;
    assert_eq!(cs.align_pad, 3);
    set(&mut params, cs.dilated.weight, &[1.0]);
    set(&mut params, cs.dilated.bias, &[0.0]);
    let g = Graph::new();
    let f = Forward::inference(&g, &params);
    let hist: Vec<f64> = (0..8).map(|v| 10.0 + v as f64).collect();
    let hist = g.constant(Tensor::from_vec(&[1, 1, 8], hist).unwrap());
    let pred = g.constant(Tensor::zeros(&[1, 1, 4]));
    let trace = cs.forward_traced(&f, pred, hist).unwrap();
    assert_eq!(g.shape(trace.context), [1, 1, 15]);
    assert_eq!(
        &g.value(trace.context).data()[..4],
        &[10.0, 10.0, 10.0, 10.0]
    );
    assert_eq!(g.shape(trace.sampled), [1, 1, 3]);
}

#[test]
fn prediction_segment_sees_history_not_zeros() {
    // Left-tap-only dilated kernel: output t reads context[t - SR].
    let sr = 2;
    let cfg = small_config(&[(2, sr)]);
    let (net, mut params) = CpNet::new(cfg, 12).unwrap();
    let cs = &net.branches()[0].sampling;
    set(&mut params, cs.dilated.weight, &[1.0, 0.0, 0.0]);
    set(&mut params, cs.dilated.bias, &[0.0]);
    let g = Graph::new();
    let f = Forward::inference(&g, &params);
    let sentinel: Vec<f64> = (0..8).map(|v| 100.0 + v as f64).collect();
    let hist = g.constant(Tensor::from_vec(&[1, 1, 8], sentinel.clone()).unwrap());
    let pred = g.constant(Tensor::full(&[1, 1, 4], -1.0));
    let trace = cs.forward_traced(&f, pred, hist).unwrap();
    let dilated = g.value(trace.dilated);
    for t in 8..8 + sr {
        assert_eq!(dilated.data()[t], sentinel[t - sr]);
    }
    // The first SR positions of the history are the only zero-padded reads.
    assert_eq!(&dilated.data()[..sr], &[0.0, 0.0]);
}

#[test]
fn predictor_zero_weights_emit_bias() {
    let cfg = small_config(&[(2, 2)]);
    let (net, mut params) = CpNet::new(cfg, 13).unwrap();
    let p = &net.branches()[0].predictor;
    assert_eq!((p.first.d_in, p.second.d_out), (6, 12));
    set(&mut params, p.first.weight, &vec![0.0; 6 * 8]);
    set(&mut params, p.first.bias, &[0.0; 8]);
    set(&mut params, p.second.weight, &vec![0.0; 8 * 12]);
    let bias: Vec<f64> = (0..12).map(|v| v as f64 * 0.5).collect();
    set(&mut params, p.second.bias, &bias);
    let g = Graph::new();
    let f = Forward::inference(&g, &params);
    let y = p
        .forward(&f, g.constant(random_tensor(&mut rng(14), &[2, 1, 6])))
        .unwrap();
    assert_eq!(&g.value(y).data()[12..], &bias[..]);
    let wrong = g.constant(Tensor::ones(&[2, 1, 7]));
    assert!(p.forward(&f, wrong).is_err());
}

#[test]
fn merge_identity_average_and_oracle() {
    let horizon = 4;
    for (branches, weights) in [
        (1usize, vec![1.0]),
        (3, vec![1.0 / 3.0; 3]),
        (3, vec![0.7, -0.2, 1.3]),
    ] {
        let cfg = small_config(&vec![(2, 2); branches]);
        let (net, mut params) = CpNet::new(cfg, 15).unwrap();
        let merge = net.merge();
        set(&mut params, merge.conv.weight, &weights);
        set(&mut params, merge.conv.bias, &[0.0]);
        let g = Graph::new();
        let f = Forward::inference(&g, &params);
        let outputs: Vec<Tensor> = (0..branches)
            .map(|i| random_tensor(&mut rng(16 + i as u64), &[2, 3, 12]))
            .collect();
        let vars: Vec<_> = outputs.iter().map(|t| g.constant(t.clone())).collect();
        let merged = merge.forward(&f, &vars, horizon).unwrap();
        assert_eq!(g.shape(merged), [2, 3, horizon]);
        let planes: Vec<Vec<f64>> = outputs.iter().map(|t| t.data().to_vec()).collect();
        let full = weighted_sum_planes(&planes, &weights, 0.0);
        let merged = g.value(merged);
        for row in 0..6 {
            for t in 0..horizon {
                let expect = full[row * 12 + 12 - horizon + t];
                let got = merged.data()[row * horizon + t];
                assert!((expect - got).abs() < 1e-12);
            }
        }
        assert!(merge.forward(&f, &[], horizon).is_err());
    }
}

#[test]
fn channels_are_processed_independently() {
    let cfg = ModelConfig {
        lookback: 24,
        horizon: 12,
        hidden: 16,
        ..Default::default()
    };
    let (net, params) = CpNet::new(cfg, 17).unwrap();
    let single = random_tensor(&mut rng(18), &[24, 1]);
    let y1 = net.predict(&params, &single).unwrap();
    let tiled = Tensor::from_vec(
        &[24, 7],
        single.data().iter().flat_map(|&v| [v; 7]).collect(),
    )
    .unwrap();
    let y7 = net.predict(&params, &tiled).unwrap();
    for t in 0..12 {
        for c in 0..7 {
            assert_eq!(y7.get(&[t, c]).unwrap(), y1.get(&[t, 0]).unwrap());
        }
    }
}

#[test]
fn batched_and_single_window_paths_agree() {
    let cfg = ModelConfig {
        lookback: 24,
        horizon: 12,
        hidden: 16,
        ..Default::default()
    };
    let (net, params) = CpNet::new(cfg, 19).unwrap();
    let windows: Vec<Tensor> = (0..3)
        .map(|i| random_tensor(&mut rng(20 + i), &[24, 2]))
        .collect();
    let slices: Vec<&[f64]> = windows.iter().map(Tensor::data).collect();
    let batched = net.predict_windows(&params, &slices, 2).unwrap();
    for (i, w) in windows.iter().enumerate() {
        let single = net.predict(&params, w).unwrap();
        let block = &batched[i * 24..][..24];
        for (a, b) in single.data().iter().zip(block) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn same_seed_same_network() {
    let cfg = ModelConfig::default();
    let (_, a) = CpNet::new(cfg.clone(), 5).unwrap();
    let (_, b) = CpNet::new(cfg.clone(), 5).unwrap();
    assert_eq!(a, b);
    let (_, c) = CpNet::new(cfg.clone(), 6).unwrap();
    assert_ne!(a, c);
    let (_, d) = CpNet::with_params(cfg, &a).unwrap();
    assert_eq!(a, d);
    assert!(CpNet::with_params(small_config(&[(2, 2)]), &a).is_err());
}

#[test]
fn token_projection_gradients() {
    let cfg = ModelConfig {
        embed_channels: 3,
        ..small_config(&[(3, 2)])
    };
    let (net, params) = CpNet::new(cfg, 21).unwrap();
    let x = random_tensor(&mut rng(22), &[2, 1, 8]);
    let err = param_grad_check(&params, |f| {
        let g = f.graph();
        let y = net.branches()[0].token.forward(f, g.constant(x.clone()))?;
        Ok(weighted_loss(g, y, 23)?)
    });
    assert!(err < GRAD_TOL, "{err}");
}

#[test]
fn predictor_gradients() {
    let cfg = small_config(&[(2, 2)]);
    let (net, params) = CpNet::new(cfg, 24).unwrap();
    let x = random_tensor(&mut rng(25), &[3, 1, 6]);
    let err = param_grad_check(&params, |f| {
        let g = f.graph();
        let y = net.branches()[0]
            .predictor
            .forward(f, g.constant(x.clone()))?;
        Ok(weighted_loss(g, y, 26)?)
    });
    assert!(err < GRAD_TOL, "{err}");
}

#[test]
fn end_to_end_gradients_one_branch() {
    let cfg = small_config(&[(2, 2)]);
    let (net, params) = CpNet::new(cfg, 27).unwrap();
    let window = random_tensor(&mut rng(28), &[8, 1]);
    let target = random_tensor(&mut rng(29), &[4, 1]);
    let batch = NormalizedBatch::from_windows(&[window.data()], 1).unwrap();
    let err = param_grad_check(&params, |f| {
        let g = f.graph();
        let y = net.forward(f, &batch)?;
        let t = g.constant(target.clone().reshape(&[1, 1, 4])?);
        Ok(g.mse(y, t)?)
    });
    assert!(err < GRAD_TOL, "{err}");
}

#[test]
fn end_to_end_gradients_multi_branch_with_alignment() {
    let cfg = ModelConfig {
        embed_channels: 2,
        ..small_config(&[(3, 5), (2, 1), (1, 3)])
    };
    let (net, params) = CpNet::new(cfg, 30).unwrap();
    let windows: Vec<Tensor> = (0..2)
        .map(|i| random_tensor(&mut rng(31 + i), &[8, 2]))
        .collect();
    let slices: Vec<&[f64]> = windows.iter().map(Tensor::data).collect();
    let batch = NormalizedBatch::from_windows(&slices, 2).unwrap();
    let err = param_grad_check(&params, |f| {
        let y = net.forward(f, &batch)?;
        Ok(weighted_loss(f.graph(), y, 33)?)
    });
    assert!(err < GRAD_TOL, "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn permuting_variates_permutes_forecast(seed in any::<u64>(), shift in 1usize..4) {
        let cfg = ModelConfig { lookback: 16, horizon: 8, hidden: 12, ..small_config(&[(4, 2), (2, 4)]) };
        let (net, params) = CpNet::new(cfg, seed).unwrap();
        let x = random_tensor(&mut rng(seed ^ 1), &[16, 4]);
        let perm: Vec<usize> = (0..4).map(|c| (c + shift) % 4).collect();
        let permuted = Tensor::from_vec(
            &[16, 4],
            (0..64).map(|i| x.data()[(i / 4) * 4 + perm[i % 4]]).collect(),
        ).unwrap();
        let y = net.predict(&params, &x).unwrap();
        let yp = net.predict(&params, &permuted).unwrap();
        for t in 0..8 {
            for (c, &src) in perm.iter().enumerate() {
                prop_assert_eq!(yp.get(&[t, c]).unwrap(), y.get(&[t, src]).unwrap());
            }
        }
    }

    #[test]
    fn affine_inputs_give_affine_forecasts(
        seed in any::<u64>(),
        scale in prop::collection::vec(0.1f64..20.0, 3),
        offset in prop::collection::vec(-50.0f64..50.0, 3),
    ) {
        let cfg = ModelConfig { lookback: 16, horizon: 8, hidden: 12, ..small_config(&[(4, 2), (3, 3)]) };
        let (net, params) = CpNet::new(cfg, seed).unwrap();
        let x = random_tensor(&mut rng(seed ^ 2), &[16, 3]);
        let mapped = Tensor::from_vec(
            &[16, 3],
            x.data().iter().enumerate().map(|(i, v)| scale[i % 3] * v + offset[i % 3]).collect(),
        ).unwrap();
        let y = net.predict(&params, &x).unwrap();
        let ym = net.predict(&params, &mapped).unwrap();
        for (i, (a, b)) in y.data().iter().zip(ym.data()).enumerate() {
            let expect = scale[i % 3] * a + offset[i % 3];
            prop_assert!((expect - b).abs() <= 1e-8 * (1.0 + expect.abs()), "{} vs {}", expect, b);
        }
    }
}
