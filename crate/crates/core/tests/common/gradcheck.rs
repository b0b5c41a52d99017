//! Central finite-difference checks of every backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfhover::label::LabelMap;
use mfhover::nn::ops::{
    concat_channels, relu, relu_backward, softmax_channels, softmax_channels_backward, split_channels, upsample2,
    upsample2_backward,
};
use mfhover::nn::{
    composite_loss, composite_loss_grad, conv2d_backward, conv2d_forward, BlockKind, Conv2d, EncoderBlock, LossWeights,
    NetConfig, NetOutput, OutputGrads, Targets, ToyHovernet,
};
use mfhover::Tensor4;

pub const EPS: f64 = 1e-3;
pub const TOL: f64 = 1e-4;
/// Denominator floor for relative error on near-zero gradients.
const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct FdStats {
    pub name: String,
    pub max_rel: f64,
    pub checked: usize,
    /// Coordinates whose ±ε interval straddles a ReLU kink.
    pub kinks: usize,
}

impl FdStats {
    /// Every scored coordinate within tolerance, and at least half of the
    /// probed coordinates scored.
    pub fn passed(&self) -> bool {
        self.max_rel < TOL && self.checked > 0 && self.checked >= self.kinks
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Compares `analytic` with central differences of `f` at `x0` over `coords`.
pub fn fd_compare(name: &str, x0: &[f64], analytic: &[f64], coords: &[usize], f: impl FnMut(&[f64]) -> f64) -> FdStats {
    fd_compare_piecewise(name, x0, analytic, coords, f, |_| Vec::new())
}

/// As [`fd_compare`], for functions built from ReLUs. `pattern` returns the
/// activation sign pattern at a point; a coordinate whose pattern changes
/// within ±ε straddles a kink, where the function is not differentiable on
/// the probe interval, and is counted but not scored.
pub fn fd_compare_piecewise(
    name: &str,
    x0: &[f64],
    analytic: &[f64],
    coords: &[usize],
    mut f: impl FnMut(&[f64]) -> f64,
    mut pattern: impl FnMut(&[f64]) -> Vec<bool>,
) -> FdStats {
    assert_eq!(x0.len(), analytic.len(), "{name}: gradient length");
    let mut x = x0.to_vec();
    let base = pattern(&x);
    let mut stats = FdStats {
        name: name.to_string(),
        max_rel: 0.0,
        checked: 0,
        kinks: 0,
    };
    for &i in coords {
        let v = x[i];
        x[i] = v + EPS;
        let up = f(&x);
        let kink_up = pattern(&x) != base;
        x[i] = v - EPS;
        let down = f(&x);
        let kink_down = pattern(&x) != base;
        x[i] = v;
        if kink_up || kink_down {
            stats.kinks += 1;
            continue;
        }
        stats.checked += 1;
        stats.max_rel = stats.max_rel.max(rel_err(analytic[i], (up - down) / (2.0 * EPS)));
    }
    stats
}

fn signs(ts: &[&Tensor4]) -> Vec<bool> {
    ts.iter().flat_map(|t| t.data().iter().map(|&v| v > 0.0)).collect()
}

fn all(len: usize) -> Vec<usize> {
    (0..len).collect()
}

fn sample(len: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= k {
        return all(len);
    }
    rand::seq::index::sample(rng, len, k).into_vec()
}

fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
    Tensor4::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Random values bounded away from zero, so ReLU is smooth within ±ε.
fn away_from_zero(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
    Tensor4::from_fn(shape, |_| {
        let v: f64 = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

fn dot(a: &Tensor4, b: &Tensor4) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn random_conv(in_c: usize, out_c: usize, k: usize, s: usize, p: usize, rng: &mut ChaCha8Rng) -> Conv2d {
    let mut c = Conv2d::he_uniform(in_c, out_c, k, s, p, rng);
    for b in &mut c.bias {
        *b = rng.gen_range(-0.5..0.5);
    }
    c
}

fn conv_case(name: &str, shape: [usize; 4], out_c: usize, k: usize, s: usize, p: usize, seed: u64) -> Vec<FdStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(shape, &mut rng);
    let layer = random_conv(shape[1], out_c, k, s, p, &mut rng);
    let y = conv2d_forward(&x, &layer).unwrap();
    let r = random(y.shape(), &mut rng);
    let g = conv2d_backward(&x, &layer, &r).unwrap();

    let input = fd_compare(&format!("{name} input"), x.data(), g.input.data(), &all(x.len()), |v| {
        let xi = Tensor4::from_vec(x.shape(), v.to_vec()).unwrap();
        dot(&conv2d_forward(&xi, &layer).unwrap(), &r)
    });
    let weight = fd_compare(
        &format!("{name} weight"),
        layer.weight.data(),
        g.weight.data(),
        &all(layer.weight.len()),
        |v| {
            let mut l = layer.clone();
            l.weight = Tensor4::from_vec(layer.weight.shape(), v.to_vec()).unwrap();
            dot(&conv2d_forward(&x, &l).unwrap(), &r)
        },
    );
    let bias = fd_compare(
        &format!("{name} bias"),
        &layer.bias,
        &g.bias,
        &all(layer.bias.len()),
        |v| {
            let mut l = layer.clone();
            l.bias = v.to_vec();
            dot(&conv2d_forward(&x, &l).unwrap(), &r)
        },
    );
    vec![merge(name, [input, weight, bias])]
}

fn merge<const N: usize>(name: &str, parts: [FdStats; N]) -> FdStats {
    combine(name.to_string(), &parts)
}

fn combine(name: String, parts: &[FdStats]) -> FdStats {
    FdStats {
        name,
        max_rel: parts.iter().map(|p| p.max_rel).fold(0.0, f64::max),
        checked: parts.iter().map(|p| p.checked).sum(),
        kinks: parts.iter().map(|p| p.kinks).sum(),
    }
}

fn relu_case(seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = away_from_zero([2, 3, 5, 4], &mut rng);
    let r = random(x.shape(), &mut rng);
    let g = relu_backward(&relu(&x), &r).unwrap();
    fd_compare("relu", x.data(), g.data(), &all(x.len()), |v| {
        dot(&relu(&Tensor4::from_vec(x.shape(), v.to_vec()).unwrap()), &r)
    })
}

fn upsample_case(seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random([2, 3, 3, 4], &mut rng);
    let r = random([2, 3, 6, 8], &mut rng);
    let g = upsample2_backward(&r).unwrap();
    fd_compare("upsample2", x.data(), g.data(), &all(x.len()), |v| {
        dot(&upsample2(&Tensor4::from_vec(x.shape(), v.to_vec()).unwrap()), &r)
    })
}

fn concat_case(seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random([2, 2, 3, 3], &mut rng);
    let b = random([2, 3, 3, 3], &mut rng);
    let r = random([2, 5, 3, 3], &mut rng);
    let (ga, gb) = split_channels(&r, 2);
    let sa = fd_compare("concat first", a.data(), ga.data(), &all(a.len()), |v| {
        dot(
            &concat_channels(&Tensor4::from_vec(a.shape(), v.to_vec()).unwrap(), &b).unwrap(),
            &r,
        )
    });
    let sb = fd_compare("concat second", b.data(), gb.data(), &all(b.len()), |v| {
        dot(
            &concat_channels(&a, &Tensor4::from_vec(b.shape(), v.to_vec()).unwrap()).unwrap(),
            &r,
        )
    });
    merge("concat", [sa, sb])
}

fn softmax_case(channels: usize, seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random([2, channels, 3, 3], &mut rng).map(|v| 3.0 * v);
    let r = random(x.shape(), &mut rng);
    let g = softmax_channels_backward(&softmax_channels(&x), &r).unwrap();
    fd_compare(
        &format!("softmax {channels}ch"),
        x.data(),
        g.data(),
        &all(x.len()),
        |v| {
            dot(
                &softmax_channels(&Tensor4::from_vec(x.shape(), v.to_vec()).unwrap()),
                &r,
            )
        },
    )
}

fn block_case(kind: BlockKind, seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = EncoderBlock::new(kind, 2, [3, 4, 3], &mut rng);
    for c in block.convs_mut() {
        for b in &mut c.bias {
            *b = rng.gen_range(0.0..0.3);
        }
    }
    let x = random([2, 2, 9, 9], &mut rng);
    let (y, cache) = block.forward(&x).unwrap();
    let r = random(y.shape(), &mut rng);
    let taps: [Tensor4; 2] = [
        random(cache.outputs[0].shape(), &mut rng),
        random(cache.outputs[1].shape(), &mut rng),
    ];
    let objective = |b: &EncoderBlock, x: &Tensor4| {
        let (y, c) = b.forward(x).unwrap();
        dot(&y, &r) + dot(&c.outputs[0], &taps[0]) + dot(&c.outputs[1], &taps[1])
    };
    let pattern = |b: &EncoderBlock, x: &Tensor4| {
        let (_, c) = b.forward(x).unwrap();
        signs(&c.outputs.iter().collect::<Vec<_>>())
    };
    let (gx, layers) = block
        .backward(&cache, [Some(&taps[0]), Some(&taps[1]), Some(&r)])
        .unwrap();
    let name = format!("{kind:?} block");
    let as_input = |v: &[f64]| Tensor4::from_vec(x.shape(), v.to_vec()).unwrap();
    let mut parts = vec![fd_compare_piecewise(
        &format!("{name} input"),
        x.data(),
        gx.data(),
        &all(x.len()),
        |v| objective(&block, &as_input(v)),
        |v| pattern(&block, &as_input(v)),
    )];
    for (li, lg) in layers.iter().enumerate() {
        let conv = &block.convs()[li];
        let with_weight = |v: &[f64]| {
            let mut b = block.clone();
            b.convs_mut()[li].weight.data_mut().copy_from_slice(v);
            b
        };
        let with_bias = |v: &[f64]| {
            let mut b = block.clone();
            b.convs_mut()[li].bias.copy_from_slice(v);
            b
        };
        parts.push(fd_compare_piecewise(
            &format!("{name} conv{li} weight"),
            conv.weight.data(),
            &lg.weight,
            &all(conv.weight.len()),
            |v| objective(&with_weight(v), &x),
            |v| pattern(&with_weight(v), &x),
        ));
        parts.push(fd_compare_piecewise(
            &format!("{name} conv{li} bias"),
            &conv.bias,
            &lg.bias,
            &all(conv.bias.len()),
            |v| objective(&with_bias(v), &x),
            |v| pattern(&with_bias(v), &x),
        ));
    }
    combine(name, &parts)
}

/// Probabilities away from 0, where ε = 1e-3 central differences of
/// `ln p` stay accurate.
fn random_probs(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4 {
    softmax_channels(&random(shape, rng).map(|v| 0.3 * v))
}

fn random_labels(n: usize, h: usize, w: usize, classes: u32, rng: &mut ChaCha8Rng) -> Vec<LabelMap> {
    (0..n)
        .map(|_| LabelMap::from_fn(h, w, |_, _| rng.gen_range(0..classes)))
        .collect()
}

pub fn random_targets(n: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Targets {
    Targets {
        np: random_labels(n, h, w, 2, rng),
        hv: random([n, 2, h, w], rng),
        tp: random_labels(n, h, w, 7, rng),
    }
}

pub fn random_outputs(n: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> NetOutput {
    NetOutput {
        np_prob: random_probs([n, 2, h, w], rng),
        hv: random([n, 2, h, w], rng),
        tp_prob: random_probs([n, 7, h, w], rng),
    }
}

fn loss_case(weights: LossWeights, seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, h, w) = (2, 4, 5);
    let out = random_outputs(n, h, w, &mut rng);
    let t = random_targets(n, h, w, &mut rng);
    let (_, g) = composite_loss_grad(&out, &t, &weights).unwrap();
    let total = |o: &NetOutput| composite_loss(o, &t, &weights).unwrap().total;
    let np = fd_compare(
        "loss np",
        out.np_prob.data(),
        g.np_prob.data(),
        &all(out.np_prob.len()),
        |v| {
            let mut o = out.clone();
            o.np_prob.data_mut().copy_from_slice(v);
            total(&o)
        },
    );
    let hv = fd_compare("loss hv", out.hv.data(), g.hv.data(), &all(out.hv.len()), |v| {
        let mut o = out.clone();
        o.hv.data_mut().copy_from_slice(v);
        total(&o)
    });
    let tp = fd_compare(
        "loss tp",
        out.tp_prob.data(),
        g.tp_prob.data(),
        &all(out.tp_prob.len()),
        |v| {
            let mut o = out.clone();
            o.tp_prob.data_mut().copy_from_slice(v);
            total(&o)
        },
    );
    merge(
        &format!("composite loss (w = {}, {}, {})", weights.mse, weights.ce, weights.dice),
        [np, hv, tp],
    )
}

pub fn tiny_config(kind: BlockKind) -> NetConfig {
    NetConfig {
        input_size: 16,
        block_kind: kind,
        encoder: vec![[3, 4, 4], [4, 5, 5]],
        decoder: vec![4, 4, 3, 3],
    }
}

pub fn one_block_config(kind: BlockKind) -> NetConfig {
    NetConfig {
        input_size: 8,
        block_kind: kind,
        encoder: vec![[3, 4, 4]],
        decoder: vec![4, 3],
    }
}

/// Backward pass of the whole network under a random linear objective of
/// its three outputs.
fn network_case(config: NetConfig, batch: usize, seed: u64) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = config.block_kind;
    let size = config.input_size;
    let blocks = config.encoder.len();
    let mut net = ToyHovernet::new(config, seed).unwrap();
    for (i, p) in net.params_mut().into_iter().enumerate() {
        if i % 2 == 1 {
            for b in p.iter_mut() {
                *b = rng.gen_range(0.5..1.0);
            }
        }
    }
    let x = Tensor4::from_fn([batch, 3, size, size], |_| rng.gen_range(0.0..1.0));
    let probe_of = |out: &NetOutput, rng: &mut ChaCha8Rng| OutputGrads {
        np_prob: random(out.np_prob.shape(), rng),
        hv: random(out.hv.shape(), rng),
        tp_prob: random(out.tp_prob.shape(), rng),
    };
    let cache = net.forward_cached(&x).unwrap();
    let probe = probe_of(cache.output(), &mut rng);
    let objective =
        |o: &NetOutput| dot(&o.np_prob, &probe.np_prob) + dot(&o.hv, &probe.hv) + dot(&o.tp_prob, &probe.tp_prob);
    let grads = net.backward(&cache, &probe).unwrap();
    let flat: Vec<Vec<f64>> = grads.flat().iter().map(|s| s.to_vec()).collect();
    let base: Vec<Vec<f64>> = net.params_mut().iter().map(|s| s.to_vec()).collect();
    let mut parts = Vec::new();
    for (pi, (p0, g)) in base.iter().zip(&flat).enumerate() {
        let coords = sample(p0.len(), 8, &mut rng);
        let with = |v: &[f64]| {
            let mut probe_net = net.clone();
            probe_net.params_mut()[pi].copy_from_slice(v);
            probe_net
        };
        parts.push(fd_compare_piecewise(
            &format!("param {pi}"),
            p0,
            g,
            &coords,
            |v| objective(&with(v).forward(&x).unwrap()),
            |v| signs(&with(v).forward_cached(&x).unwrap().activations()),
        ));
    }
    combine(format!("{kind:?} network, {blocks} blocks, batch {batch}"), &parts)
}

/// Every differentiable operation, over randomized instantiations.
pub fn gradient_suite() -> Vec<FdStats> {
    let mut out = Vec::new();
    let convs: [(&str, [usize; 4], usize, usize, usize, usize); 9] = [
        ("conv 1x1 s1", [2, 3, 5, 5], 4, 1, 1, 0),
        ("conv 1x1 s2", [1, 2, 6, 7], 3, 1, 2, 0),
        ("conv 3x3 s1 p1", [2, 2, 6, 6], 3, 3, 1, 1),
        ("conv 3x3 s2 p1", [1, 2, 8, 8], 2, 3, 2, 1),
        ("conv 3x3 s2 p0", [2, 3, 7, 9], 2, 3, 2, 0),
        ("conv 5x5 s2 p2", [1, 2, 9, 9], 3, 5, 2, 2),
        ("conv 5x5 s1 p0", [1, 1, 7, 6], 2, 5, 1, 0),
        ("conv 2x2 s1 p1", [2, 2, 4, 5], 2, 2, 1, 1),
        ("conv 3x3 s3 p2", [1, 2, 7, 8], 3, 3, 3, 2),
    ];
    for (i, (name, shape, oc, k, s, p)) in convs.into_iter().enumerate() {
        out.extend(conv_case(name, shape, oc, k, s, p, 100 + i as u64));
    }
    out.push(relu_case(1));
    out.push(upsample_case(2));
    out.push(concat_case(3));
    out.push(softmax_case(2, 4));
    out.push(softmax_case(7, 5));
    out.push(block_case(BlockKind::MultiFilter, 6));
    out.push(block_case(BlockKind::Plain, 7));
    out.push(loss_case(LossWeights::default(), 8));
    out.push(loss_case(
        LossWeights {
            mse: 0.5,
            ce: 2.0,
            dice: 1.5,
        },
        9,
    ));
    out.push(network_case(one_block_config(BlockKind::MultiFilter), 1, 10));
    out.push(network_case(one_block_config(BlockKind::Plain), 2, 11));
    out.push(network_case(tiny_config(BlockKind::MultiFilter), 1, 12));
    out.push(network_case(tiny_config(BlockKind::Plain), 1, 13));
    out
}
