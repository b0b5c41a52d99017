//! Composite training loss: MSE on the HV maps, cross-entropy and soft Dice
//! on the NP and TP probability maps.

use serde::{Deserialize, Serialize};

use super::network::{NetOutput, OutputGrads, NP_CHANNELS, TP_CHANNELS};
use crate::error::{Error, Result};
use crate::label::LabelMap;
use crate::tensor::{check_dim, check_same_shape, Tensor4};

/// Smoothing term in the Dice ratio.
pub const DICE_SMOOTH: f64 = 1e-3;
/// Probabilities are clamped here before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub mse: f64,
    pub ce: f64,
    pub dice: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mse: 1.0,
            ce: 1.0,
            dice: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub mse: f64,
    pub ce_np: f64,
    pub ce_tp: f64,
    pub dice_np: f64,
    pub dice_tp: f64,
    pub total: f64,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        [self.mse, self.ce_np, self.ce_tp, self.dice_np, self.dice_tp, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Training targets for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// Binary foreground maps.
    pub np: Vec<LabelMap>,
    /// `(n, 2, h, w)`; channel 0 horizontal, channel 1 vertical.
    pub hv: Tensor4,
    /// Class maps with values in `0..=6`.
    pub tp: Vec<LabelMap>,
}

impl Targets {
    pub fn batch(&self) -> usize {
        self.np.len()
    }
}

fn check_targets(out: &NetOutput, t: &Targets) -> Result<()> {
    let [n, _, h, w] = out.np_prob.shape();
    check_dim("np channels", NP_CHANNELS, out.np_prob.channels())?;
    check_dim("tp channels", TP_CHANNELS, out.tp_prob.channels())?;
    check_dim("np target batch", n, t.np.len())?;
    check_dim("tp target batch", n, t.tp.len())?;
    check_same_shape(&out.hv, &t.hv)?;
    check_dim("hv batch", n, out.hv.batch())?;
    check_dim("tp height", h, out.tp_prob.height())?;
    check_dim("tp width", w, out.tp_prob.width())?;
    for (np, tp) in t.np.iter().zip(&t.tp) {
        check_dim("np target height", h, np.height())?;
        check_dim("np target width", w, np.width())?;
        check_dim("tp target height", h, tp.height())?;
        check_dim("tp target width", w, tp.width())?;
        if let Some(&v) = np.data().iter().find(|&&v| v as usize >= NP_CHANNELS) {
            return Err(Error::LabelRange {
                value: v as i64,
                max: NP_CHANNELS as i64 - 1,
            });
        }
        if let Some(&v) = tp.data().iter().find(|&&v| v as usize >= TP_CHANNELS) {
            return Err(Error::LabelRange {
                value: v as i64,
                max: TP_CHANNELS as i64 - 1,
            });
        }
    }
    Ok(())
}

/// Mean per-pixel cross-entropy and its gradient w.r.t. the probabilities.
fn cross_entropy(prob: &Tensor4, target: &[LabelMap], grad: Option<&mut Tensor4>) -> f64 {
    let [n, c, h, w] = prob.shape();
    let plane = h * w;
    let count = (n * plane) as f64;
    let p = prob.data();
    let mut loss = 0.0;
    let mut g = grad.map(|g| g.data_mut());
    for (i, t) in target.iter().enumerate() {
        for (px, &cls) in t.data().iter().enumerate() {
            let k = (i * c + cls as usize) * plane + px;
            let v = p[k];
            loss -= v.max(LOG_CLAMP).ln();
            if let Some(g) = g.as_deref_mut() {
                if v > LOG_CLAMP {
                    g[k] -= 1.0 / (v * count);
                }
            }
        }
    }
    loss / count
}

/// Soft Dice per channel over the whole batch, averaged over channels.
fn dice(prob: &Tensor4, target: &[LabelMap], grad: Option<&mut Tensor4>) -> f64 {
    let [n, c, h, w] = prob.shape();
    let plane = h * w;
    let p = prob.data();
    let mut inter = vec![0.0; c];
    let mut mass = vec![0.0; c];
    for (i, t) in target.iter().enumerate() {
        for ch in 0..c {
            let base = (i * c + ch) * plane;
            mass[ch] += p[base..base + plane].iter().sum::<f64>();
        }
        for (px, &cls) in t.data().iter().enumerate() {
            let k = (i * c + cls as usize) * plane + px;
            inter[cls as usize] += p[k];
            mass[cls as usize] += 1.0;
        }
    }
    let loss = (0..c)
        .map(|ch| 1.0 - (2.0 * inter[ch] + DICE_SMOOTH) / (mass[ch] + DICE_SMOOTH))
        .sum::<f64>()
        / c as f64;
    if let Some(g) = grad {
        let g = g.data_mut();
        for (i, t) in target.iter().enumerate().take(n) {
            for ch in 0..c {
                let denom = mass[ch] + DICE_SMOOTH;
                let num = 2.0 * inter[ch] + DICE_SMOOTH;
                let base = (i * c + ch) * plane;
                for (px, &cls) in t.data().iter().enumerate() {
                    let tv = if cls as usize == ch { 1.0 } else { 0.0 };
                    g[base + px] -= (2.0 * tv * denom - num) / (denom * denom) / c as f64;
                }
            }
        }
    }
    loss
}

fn mse(pred: &Tensor4, target: &Tensor4, grad: Option<&mut Tensor4>) -> f64 {
    let count = pred.len().max(1) as f64;
    let mut loss = 0.0;
    match grad {
        Some(g) => {
            for ((gv, &a), &b) in g.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
                loss += (a - b) * (a - b);
                *gv += 2.0 * (a - b) / count;
            }
        }
        None => {
            for (&a, &b) in pred.data().iter().zip(target.data()) {
                loss += (a - b) * (a - b);
            }
        }
    }
    loss / count
}

fn evaluate(out: &NetOutput, t: &Targets, weights: &LossWeights, grads: Option<&mut OutputGrads>) -> Result<LossParts> {
    check_targets(out, t)?;
    let mut parts = LossParts::default();
    match grads {
        Some(g) => {
            let mut np_ce = Tensor4::zeros(out.np_prob.shape());
            let mut np_dice = Tensor4::zeros(out.np_prob.shape());
            let mut tp_ce = Tensor4::zeros(out.tp_prob.shape());
            let mut tp_dice = Tensor4::zeros(out.tp_prob.shape());
            let mut hv = Tensor4::zeros(out.hv.shape());
            parts.mse = mse(&out.hv, &t.hv, Some(&mut hv));
            parts.ce_np = cross_entropy(&out.np_prob, &t.np, Some(&mut np_ce));
            parts.ce_tp = cross_entropy(&out.tp_prob, &t.tp, Some(&mut tp_ce));
            parts.dice_np = dice(&out.np_prob, &t.np, Some(&mut np_dice));
            parts.dice_tp = dice(&out.tp_prob, &t.tp, Some(&mut tp_dice));
            let combine = |ce: &Tensor4, di: &Tensor4| {
                ce.data()
                    .iter()
                    .zip(di.data())
                    .map(|(a, b)| weights.ce * a + weights.dice * b)
                    .collect::<Vec<_>>()
            };
            g.np_prob = Tensor4::from_vec(out.np_prob.shape(), combine(&np_ce, &np_dice))?;
            g.tp_prob = Tensor4::from_vec(out.tp_prob.shape(), combine(&tp_ce, &tp_dice))?;
            g.hv = hv.map(|v| weights.mse * v);
        }
        None => {
            parts.mse = mse(&out.hv, &t.hv, None);
            parts.ce_np = cross_entropy(&out.np_prob, &t.np, None);
            parts.ce_tp = cross_entropy(&out.tp_prob, &t.tp, None);
            parts.dice_np = dice(&out.np_prob, &t.np, None);
            parts.dice_tp = dice(&out.tp_prob, &t.tp, None);
        }
    }
    parts.total = weights.mse * parts.mse
        + weights.ce * (parts.ce_np + parts.ce_tp)
        + weights.dice * (parts.dice_np + parts.dice_tp);
    Ok(parts)
}

/// `total = w_mse·MSE(hv) + w_ce·(CE(np) + CE(tp)) + w_dice·(Dice(np) + Dice(tp))`.
pub fn composite_loss(out: &NetOutput, targets: &Targets, weights: &LossWeights) -> Result<LossParts> {
    evaluate(out, targets, weights, None)
}

/// Loss plus its gradient with respect to the three head outputs.
pub fn composite_loss_grad(
    out: &NetOutput,
    targets: &Targets,
    weights: &LossWeights,
) -> Result<(LossParts, OutputGrads)> {
    let mut grads = OutputGrads {
        np_prob: Tensor4::zeros([0, 0, 0, 0]),
        hv: Tensor4::zeros([0, 0, 0, 0]),
        tp_prob: Tensor4::zeros([0, 0, 0, 0]),
    };
    let parts = evaluate(out, targets, weights, Some(&mut grads))?;
    Ok((parts, grads))
}
