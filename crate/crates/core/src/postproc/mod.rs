//! From network outputs to classified nucleus instances.
//!
//! Foreground is thresholded from the NP map. Markers are the 4-connected
//! components of foreground pixels with low HV gradient energy, and a
//! marker-controlled watershed over the energy splits touching nuclei.

mod instances;
mod sobel;
pub mod watershed;

use serde::{Deserialize, Serialize};

pub use instances::{counts_from, ClassedInstances, InstanceMap};
pub use sobel::{sobel_gradients, HvMaps};

use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::label::LabelMap;
use crate::tensor::Tensor4;
use watershed::{connected_components, watershed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocParams {
    /// Foreground where the NP nucleus probability exceeds this.
    pub fg_threshold: f64,
    /// Marker pixels have energy strictly below this.
    pub marker_threshold: f64,
    /// Marker components smaller than this many pixels are dropped.
    pub min_marker: usize,
    /// Final instances smaller than this many pixels are dropped.
    pub min_instance: usize,
}

impl Default for PostprocParams {
    fn default() -> Self {
        Self {
            fg_threshold: 0.5,
            marker_threshold: 0.4,
            min_marker: 10,
            min_instance: 10,
        }
    }
}

fn single_item(t: &Tensor4, channels: usize, what: &str) -> Result<()> {
    if t.batch() != 1 || t.channels() != channels {
        return Err(Error::Invalid(format!(
            "{what} must be 1×{channels}×H×W, found {:?}",
            t.shape()
        )));
    }
    Ok(())
}

fn foreground(np_prob: &Tensor4, threshold: f64) -> Result<Vec<bool>> {
    single_item(np_prob, 2, "np_prob")?;
    let plane = np_prob.height() * np_prob.width();
    Ok(np_prob.item_slice(0)[plane..].iter().map(|&p| p > threshold).collect())
}

/// Drops components with fewer than `min_size` pixels and renumbers the rest
/// `1..=K` in label order.
fn filter_small(labels: &mut [u32], count: u32, min_size: usize) -> u32 {
    let mut area = vec![0usize; count as usize + 1];
    for &l in labels.iter() {
        area[l as usize] += 1;
    }
    let mut remap = vec![0u32; count as usize + 1];
    let mut next = 0;
    for id in 1..=count as usize {
        if area[id] >= min_size {
            next += 1;
            remap[id] = next;
        }
    }
    for l in labels.iter_mut() {
        *l = remap[*l as usize];
    }
    next
}

/// Instance map from thresholded foreground alone, without HV separation.
pub fn connected_component_instances(np_prob: &Tensor4, params: &PostprocParams) -> Result<InstanceMap> {
    let (h, w) = (np_prob.height(), np_prob.width());
    let fg = foreground(np_prob, params.fg_threshold)?;
    let (mut labels, k) = connected_components(&fg, h, w);
    filter_small(&mut labels, k, params.min_instance);
    Ok(InstanceMap::relabel(&LabelMap::from_vec(h, w, labels)))
}

pub fn extract_instances(np_prob: &Tensor4, hv: &Tensor4, params: &PostprocParams) -> Result<InstanceMap> {
    single_item(hv, 2, "hv")?;
    let (h, w) = (np_prob.height(), np_prob.width());
    if (hv.height(), hv.width()) != (h, w) {
        return Err(Error::Invalid(format!(
            "np_prob is {h}x{w} but hv is {}x{}",
            hv.height(),
            hv.width()
        )));
    }
    let fg = foreground(np_prob, params.fg_threshold)?;
    if !fg.iter().any(|&f| f) {
        return Ok(InstanceMap::empty(h, w));
    }
    let energy = sobel_gradients(&HvMaps::from_tensor(hv, 0)?);

    let seeds: Vec<bool> = fg
        .iter()
        .zip(&energy)
        .map(|(&f, &e)| f && e < params.marker_threshold)
        .collect();
    let (mut markers, k) = connected_components(&seeds, h, w);
    let mut k = filter_small(&mut markers, k, params.min_marker);

    // A foreground component left without any marker becomes a marker
    // as a whole, so every foreground pixel ends up labelled.
    let (components, nc) = connected_components(&fg, h, w);
    let mut has_marker = vec![false; nc as usize + 1];
    for (&c, &m) in components.iter().zip(&markers) {
        if m != 0 {
            has_marker[c as usize] = true;
        }
    }
    let mut orphan_label = vec![0u32; nc as usize + 1];
    for c in 1..=nc as usize {
        if !has_marker[c] {
            k += 1;
            orphan_label[c] = k;
        }
    }
    for (m, &c) in markers.iter_mut().zip(&components) {
        if c != 0 && orphan_label[c as usize] != 0 {
            *m = orphan_label[c as usize];
        }
    }

    let landscape: Vec<f64> = energy.iter().map(|e| -(1.0 - e)).collect();
    let mut labels = watershed(&landscape, &markers, &fg, h, w);
    filter_small(&mut labels, k, params.min_instance);
    Ok(InstanceMap::relabel(&LabelMap::from_vec(h, w, labels)))
}

/// Classifies each instance by the largest summed TP probability over
/// classes 1..=6; ties go to the smaller class id.
pub fn assign_types(instances: &InstanceMap, tp_prob: &Tensor4) -> Result<ClassedInstances> {
    single_item(tp_prob, NUM_CLASSES + 1, "tp_prob")?;
    let (h, w) = instances.dims();
    if (tp_prob.height(), tp_prob.width()) != (h, w) {
        return Err(Error::Invalid("tp_prob and instance map differ in size".into()));
    }
    let plane = h * w;
    let k = instances.count() as usize;
    let mut mass = vec![[0.0f64; NUM_CLASSES]; k + 1];
    let item = tp_prob.item_slice(0);
    for (p, &id) in instances.labels().data().iter().enumerate() {
        if id == 0 {
            continue;
        }
        for c in 0..NUM_CLASSES {
            mass[id as usize][c] += item[(c + 1) * plane + p];
        }
    }
    let classes = mass[1..]
        .iter()
        .map(|m| {
            let mut best = 0;
            for c in 1..NUM_CLASSES {
                if m[c] > m[best] {
                    best = c;
                }
            }
            best as u8 + 1
        })
        .collect();
    ClassedInstances::new(instances.clone(), classes)
}
