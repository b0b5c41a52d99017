use std::collections::{BTreeMap, BTreeSet};

use mfhover::label::LabelMap;
use mfhover::nn::{Conv2d, LossParts, NetOutput, Targets};
use mfhover::postproc::{ClassedInstances, InstanceMap};
use mfhover::Tensor4;

/// Cross-correlation by six nested loops.
pub fn naive_conv(input: &Tensor4, layer: &Conv2d) -> Tensor4 {
    let [n, c, h, w] = input.shape();
    let [oc, _, kh, kw] = layer.weight.shape();
    let (s, pad) = (layer.stride as isize, layer.padding as isize);
    let oh = (h + 2 * layer.padding - kh) / layer.stride + 1;
    let ow = (w + 2 * layer.padding - kw) / layer.stride + 1;
    let mut out = Tensor4::zeros([n, oc, oh, ow]);
    for b in 0..n {
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = layer.bias[o];
                    for ci in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = oy as isize * s + ky as isize - pad;
                                let ix = ox as isize * s + kx as isize - pad;
                                if iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize {
                                    acc += layer.weight.get(o, ci, ky, kx) * input.get(b, ci, iy as usize, ix as usize);
                                }
                            }
                        }
                    }
                    out.set(b, o, oy, ox, acc);
                }
            }
        }
    }
    out
}

pub fn naive_relu(x: &Tensor4) -> Tensor4 {
    x.map(|v| v.max(0.0))
}

/// Composite loss evaluated term by term with scalar loops.
pub fn loop_loss(out: &NetOutput, t: &Targets, w_mse: f64, w_ce: f64, w_dice: f64) -> LossParts {
    let [n, _, h, w] = out.np_prob.shape();
    let mut mse = 0.0;
    let hv_len = out.hv.len();
    for b in 0..n {
        for c in 0..2 {
            for y in 0..h {
                for x in 0..w {
                    let d = out.hv.get(b, c, y, x) - t.hv.get(b, c, y, x);
                    mse += d * d;
                }
            }
        }
    }
    mse /= hv_len as f64;
    let ce = |prob: &Tensor4, labels: &[LabelMap]| {
        let mut s = 0.0;
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let p = prob.get(b, labels[b].get(y, x) as usize, y, x);
                    s += -(p.max(1e-12)).ln();
                }
            }
        }
        s / (n * h * w) as f64
    };
    let dice = |prob: &Tensor4, labels: &[LabelMap]| {
        let c = prob.channels();
        let mut total = 0.0;
        for ch in 0..c {
            let (mut inter, mut psum, mut tsum) = (0.0, 0.0, 0.0);
            for b in 0..n {
                for y in 0..h {
                    for x in 0..w {
                        let p = prob.get(b, ch, y, x);
                        let tv = if labels[b].get(y, x) as usize == ch { 1.0 } else { 0.0 };
                        inter += p * tv;
                        psum += p;
                        tsum += tv;
                    }
                }
            }
            total += 1.0 - (2.0 * inter + 1e-3) / (psum + tsum + 1e-3);
        }
        total / c as f64
    };
    let ce_np = ce(&out.np_prob, &t.np);
    let ce_tp = ce(&out.tp_prob, &t.tp);
    let dice_np = dice(&out.np_prob, &t.np);
    let dice_tp = dice(&out.tp_prob, &t.tp);
    LossParts {
        mse,
        ce_np,
        ce_tp,
        dice_np,
        dice_tp,
        total: w_mse * mse + w_ce * (ce_np + ce_tp) + w_dice * (dice_np + dice_tp),
    }
}

/// TP/FP/FN and matched IoU values from comparing every pair of instances.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteMatch {
    pub pairs: Vec<(u32, u32, u64, u64)>,
    pub fn_ids: Vec<u32>,
    pub fp_ids: Vec<u32>,
}

fn pixel_sets(labels: &LabelMap) -> BTreeMap<u32, BTreeSet<usize>> {
    let mut sets: BTreeMap<u32, BTreeSet<usize>> = BTreeMap::new();
    for (p, &v) in labels.data().iter().enumerate() {
        if v != 0 {
            sets.entry(v).or_default().insert(p);
        }
    }
    sets
}

pub fn brute_match(gt: &ClassedInstances, pred: &ClassedInstances, class: Option<u8>) -> BruteMatch {
    let gs = pixel_sets(gt.instances().labels());
    let ps = pixel_sets(pred.instances().labels());
    let keep_g = |id: u32| class.is_none_or(|c| gt.class_of(id) == c);
    let keep_p = |id: u32| class.is_none_or(|c| pred.class_of(id) == c);
    let mut pairs = Vec::new();
    let mut g_hit = BTreeSet::new();
    let mut p_hit = BTreeSet::new();
    for (&g, gset) in gs.iter().filter(|(g, _)| keep_g(**g)) {
        for (&p, pset) in ps.iter().filter(|(p, _)| keep_p(**p)) {
            let inter = gset.intersection(pset).count() as u64;
            let union = gset.union(pset).count() as u64;
            if union > 0 && inter as f64 / union as f64 > 0.5 {
                pairs.push((g, p, inter, union));
                g_hit.insert(g);
                p_hit.insert(p);
            }
        }
    }
    BruteMatch {
        pairs,
        fn_ids: gs
            .keys()
            .copied()
            .filter(|&g| keep_g(g) && !g_hit.contains(&g))
            .collect(),
        fp_ids: ps
            .keys()
            .copied()
            .filter(|&p| keep_p(p) && !p_hit.contains(&p))
            .collect(),
    }
}

/// PQ from brute-force matches, with the IoU sum taken in pair order.
pub fn brute_pq(m: &[BruteMatch]) -> Option<(f64, f64, f64)> {
    let tp: usize = m.iter().map(|x| x.pairs.len()).sum();
    let fp: usize = m.iter().map(|x| x.fp_ids.len()).sum();
    let fn_: usize = m.iter().map(|x| x.fn_ids.len()).sum();
    if tp + fp + fn_ == 0 {
        return None;
    }
    let iou: Vec<f64> = m
        .iter()
        .flat_map(|x| x.pairs.iter().map(|&(_, _, i, u)| i as f64 / u as f64))
        .collect();
    let dq = tp as f64 / (tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64);
    let sq = if tp == 0 { 0.0 } else { exact_sum(&iou) / tp as f64 };
    Some((dq, sq, dq * sq))
}

/// Correctly rounded sum of IoU values in `[0.5, 1]` via integer units of 2⁻⁵³.
pub fn exact_sum(values: &[f64]) -> f64 {
    let scale = (1u64 << 53) as f64;
    let total: u128 = values.iter().map(|v| (v * scale) as u128).sum();
    total as f64 / scale
}

/// Classed instances from an instance map and per-instance classes.
pub fn classed(h: usize, w: usize, ids: Vec<u32>, classes: &[u8]) -> ClassedInstances {
    let map = InstanceMap::from_gapless(LabelMap::from_vec(h, w, ids)).unwrap();
    ClassedInstances::new(map, classes.to_vec()).unwrap()
}

/// `1 − RSS/TSS` written out directly.
pub fn direct_r2(gt: &[u64], pred: &[u64]) -> f64 {
    let n = gt.len() as f64;
    let mean = gt.iter().sum::<u64>() as f64 / n;
    let mut rss = 0.0;
    let mut tss = 0.0;
    for i in 0..gt.len() {
        rss += (gt[i] as f64 - pred[i] as f64).powi(2);
        tss += (gt[i] as f64 - mean).powi(2);
    }
    1.0 - rss / tss
}
