//! Network inference followed by instance post-processing.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{ImageArchive, NpyArray, NpyData};
use crate::nn::{NetOutput, ToyHovernet, HV_CHANNELS, NP_CHANNELS, TP_CHANNELS};
use crate::postproc::{assign_types, extract_instances, ClassedInstances, PostprocParams};
use crate::targets::image_to_tensor;
use crate::tensor::Tensor4;

/// Network outputs for every patch of an image archive, as single-item
/// tensors in patch order.
pub fn infer(net: &ToyHovernet, images: &ImageArchive, chunk: usize) -> Result<Vec<NetOutput>> {
    let size = net.config().input_size;
    if (images.height, images.width) != (size, size) {
        return Err(Error::Invalid(format!(
            "network expects {size}x{size} patches, archive holds {}x{}",
            images.height, images.width
        )));
    }
    let idx: Vec<usize> = (0..images.len()).collect();
    let mut outputs = Vec::with_capacity(images.len());
    for part in idx.chunks(chunk.max(1)) {
        let inputs: Vec<Tensor4> = part
            .iter()
            .map(|&i| image_to_tensor(images.patch(i), images.height, images.width))
            .collect();
        let out = net.forward(&Tensor4::stack(&inputs)?)?;
        for n in 0..part.len() {
            outputs.push(NetOutput {
                np_prob: out.np_prob.item(n),
                hv: out.hv.item(n),
                tp_prob: out.tp_prob.item(n),
            });
        }
    }
    Ok(outputs)
}

/// Channels of a stored output archive: NP probabilities, HV maps, then
/// type probabilities.
pub const OUTPUT_CHANNELS: usize = NP_CHANNELS + HV_CHANNELS + TP_CHANNELS;

/// Packs single-item outputs into an `N×11×H×W` float64 array.
pub fn outputs_to_npy(outputs: &[NetOutput]) -> Result<NpyArray> {
    let (h, w) = outputs
        .first()
        .map_or((0, 0), |o| (o.np_prob.height(), o.np_prob.width()));
    let mut data = Vec::with_capacity(outputs.len() * OUTPUT_CHANNELS * h * w);
    for (i, o) in outputs.iter().enumerate() {
        for t in [&o.np_prob, &o.hv, &o.tp_prob] {
            if t.batch() != 1 || (t.height(), t.width()) != (h, w) {
                return Err(Error::Patch {
                    index: i,
                    reason: format!("output shape {:?} differs from the first patch", t.shape()),
                });
            }
            data.extend_from_slice(t.data());
        }
    }
    Ok(NpyArray::new(
        vec![outputs.len(), OUTPUT_CHANNELS, h, w],
        NpyData::F64(data),
    )?)
}

/// Inverse of [`outputs_to_npy`].
pub fn outputs_from_npy(array: &NpyArray) -> Result<Vec<NetOutput>> {
    let &[n, c, h, w] = array.shape.as_slice() else {
        return Err(Error::Invalid(format!(
            "output archive must be 4-D, found shape {:?}",
            array.shape
        )));
    };
    if c != OUTPUT_CHANNELS {
        return Err(Error::Invalid(format!(
            "output archive needs {OUTPUT_CHANNELS} channels, found {c}"
        )));
    }
    let data = array.data.to_f64();
    let plane = h * w;
    let mut out = Vec::with_capacity(n);
    for item in data.chunks_exact(c * plane.max(1)).take(n) {
        let part = |from: usize, channels: usize| {
            Tensor4::from_vec(
                [1, channels, h, w],
                item[from * plane..(from + channels) * plane].to_vec(),
            )
        };
        out.push(NetOutput {
            np_prob: part(0, NP_CHANNELS)?,
            hv: part(NP_CHANNELS, HV_CHANNELS)?,
            tp_prob: part(NP_CHANNELS + HV_CHANNELS, TP_CHANNELS)?,
        });
    }
    Ok(out)
}

/// Instance extraction and typing for one patch's outputs.
pub fn postprocess(out: &NetOutput, params: &PostprocParams) -> Result<ClassedInstances> {
    let instances = extract_instances(&out.np_prob, &out.hv, params)?;
    assign_types(&instances, &out.tp_prob)
}

/// [`postprocess`] over many patches on the current rayon pool.
pub fn postprocess_all(outputs: &[NetOutput], params: &PostprocParams) -> Result<Vec<ClassedInstances>> {
    outputs.par_iter().map(|o| postprocess(o, params)).collect()
}

pub fn predict(
    net: &ToyHovernet,
    images: &ImageArchive,
    params: &PostprocParams,
    chunk: usize,
) -> Result<Vec<ClassedInstances>> {
    postprocess_all(&infer(net, images, chunk)?, params)
}
