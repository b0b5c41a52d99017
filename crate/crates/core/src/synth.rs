//! Synthetic patches of elliptical nuclei with exact labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::io::{ImageArchive, PatchArchive};
use crate::label::LabelMap;
use crate::postproc::watershed::connected_components;
use crate::postproc::ClassedInstances;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub size: usize,
    pub min_nuclei: usize,
    pub max_nuclei: usize,
    /// The two classes nuclei are drawn from.
    pub classes: [u8; 2],
    /// Semi-axis range in pixels.
    pub radius: (f64, f64),
    /// Probability that a patch contains a touching pair.
    pub touching: f64,
    /// Half-width of the uniform pixel noise.
    pub noise: u8,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            size: 64,
            min_nuclei: 2,
            max_nuclei: 4,
            classes: [1, 2],
            radius: (7.0, 10.0),
            touching: 0.5,
            noise: 12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthPatch {
    /// `size × size × 3` bytes, row-major.
    pub rgb: Vec<u8>,
    pub labels: ClassedInstances,
    /// Ids (in `labels`) of pairs whose union is a single connected region.
    pub touching: Vec<(u32, u32)>,
}

const BACKGROUND: [f64; 3] = [236.0, 226.0, 232.0];
const NUCLEUS: [[f64; 3]; 2] = [[176.0, 36.0, 64.0], [40.0, 52.0, 172.0]];

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    theta: f64,
}

impl Ellipse {
    /// Squared normalized distance; ≤ 1 inside.
    fn dist(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v
    }

    /// Distance from the centre to the boundary along unit direction `(ux, uy)`.
    fn reach(&self, ux: f64, uy: f64) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let u = (ux * c + uy * s) / self.a;
        let v = (-ux * s + uy * c) / self.b;
        1.0 / (u * u + v * v).sqrt()
    }

    fn bound(&self) -> f64 {
        self.a.max(self.b)
    }
}

fn random_ellipse(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Ellipse {
    let (lo, hi) = cfg.radius;
    let a = rng.gen_range(lo..=hi);
    let edge = a + 1.0;
    let span = cfg.size as f64 - 1.0 - edge;
    Ellipse {
        cx: rng.gen_range(edge..span),
        cy: rng.gen_range(edge..span),
        a,
        b: rng.gen_range(lo..=a),
        theta: rng.gen_range(0.0..std::f64::consts::PI),
    }
}

fn inside(e: &Ellipse, size: usize) -> bool {
    let r = e.bound() + 1.0;
    e.cx - r >= 0.0 && e.cy - r >= 0.0 && e.cx + r <= size as f64 - 1.0 && e.cy + r <= size as f64 - 1.0
}

fn well_apart(e: &Ellipse, others: &[Ellipse]) -> bool {
    others
        .iter()
        .all(|o| ((e.cx - o.cx).powi(2) + (e.cy - o.cy).powi(2)).sqrt() > e.bound() + o.bound() + 3.0)
}

/// Places nuclei; the first two touch when `pair` is set.
fn place(rng: &mut ChaCha8Rng, cfg: &SynthConfig, count: usize, pair: bool) -> Option<Vec<Ellipse>> {
    let mut shapes: Vec<Ellipse> = Vec::with_capacity(count);
    if pair {
        let first = random_ellipse(rng, cfg);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let (uy, ux) = angle.sin_cos();
        let mut second = random_ellipse(rng, cfg);
        let gap = (first.reach(ux, uy) + second.reach(-ux, -uy)) * 0.85;
        second.cx = first.cx + ux * gap;
        second.cy = first.cy + uy * gap;
        if !inside(&first, cfg.size) || !inside(&second, cfg.size) {
            return None;
        }
        shapes.push(first);
        shapes.push(second);
    }
    let mut tries = 0;
    while shapes.len() < count {
        tries += 1;
        if tries > 200 {
            return None;
        }
        let e = random_ellipse(rng, cfg);
        if well_apart(&e, &shapes) {
            shapes.push(e);
        }
    }
    Some(shapes)
}

/// Rasterizes shapes; overlapping pixels go to the nearer shape.
fn rasterize(shapes: &[Ellipse], size: usize) -> LabelMap {
    LabelMap::from_fn(size, size, |y, x| {
        let mut best = (f64::INFINITY, 0u32);
        for (i, e) in shapes.iter().enumerate() {
            let d = e.dist(x as f64, y as f64);
            if d <= 1.0 && d < best.0 {
                best = (d, i as u32 + 1);
            }
        }
        best.1
    })
}

fn components_of(labels: &LabelMap, keep: impl Fn(u32) -> bool) -> u32 {
    let (h, w) = labels.dims();
    let mask: Vec<bool> = labels.data().iter().map(|&v| v != 0 && keep(v)).collect();
    connected_components(&mask, h, w).1
}

fn valid(labels: &LabelMap, count: usize, pair: bool) -> bool {
    for id in 1..=count as u32 {
        let area = labels.data().iter().filter(|&&v| v == id).count();
        if area < 20 || components_of(labels, |v| v == id) != 1 {
            return false;
        }
    }
    !pair || components_of(labels, |v| v <= 2) == 1
}

pub fn synth_patch(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> SynthPatch {
    loop {
        let count = rng.gen_range(cfg.min_nuclei..=cfg.max_nuclei);
        let pair = count >= 2 && rng.gen_bool(cfg.touching);
        let Some(shapes) = place(rng, cfg, count, pair) else {
            continue;
        };
        let raw = rasterize(&shapes, cfg.size);
        if !valid(&raw, count, pair) {
            continue;
        }
        let kinds: Vec<usize> = (0..count).map(|_| rng.gen_range(0..2)).collect();
        let class_map = raw.map(|v| {
            if v == 0 {
                0
            } else {
                cfg.classes[kinds[v as usize - 1]] as u32
            }
        });
        let mut rgb = Vec::with_capacity(cfg.size * cfg.size * 3);
        for &v in raw.data() {
            let base = if v == 0 {
                BACKGROUND
            } else {
                NUCLEUS[kinds[v as usize - 1]]
            };
            for ch in base {
                let n = rng.gen_range(-(cfg.noise as f64)..=cfg.noise as f64);
                rgb.push((ch + n).round().clamp(0.0, 255.0) as u8);
            }
        }
        let labels = ClassedInstances::from_maps(&raw, &class_map).expect("synthetic maps are consistent");
        let touching = if pair {
            let id_of = |old: u32| {
                let p = raw
                    .data()
                    .iter()
                    .position(|&v| v == old)
                    .expect("placed shapes are non-empty");
                labels.instances().labels().data()[p]
            };
            vec![(id_of(1), id_of(2))]
        } else {
            Vec::new()
        };
        return SynthPatch { rgb, labels, touching };
    }
}

/// `n` patches from `seed`.
pub fn synth_dataset(n: usize, seed: u64, cfg: &SynthConfig) -> Vec<SynthPatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| synth_patch(&mut rng, cfg)).collect()
}

pub fn to_archive(patches: &[SynthPatch], size: usize) -> Result<PatchArchive> {
    let data = patches.iter().flat_map(|p| p.rgb.iter().copied()).collect();
    let images = ImageArchive::new(size, size, data)?;
    PatchArchive::new(images, patches.iter().map(|p| p.labels.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let cfg = SynthConfig::default();
        let a = synth_dataset(12, 3, &cfg);
        let b = synth_dataset(12, 3, &cfg);
        let mut pairs = 0;
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.rgb, q.rgb);
            assert_eq!(p.labels.instances().labels(), q.labels.instances().labels());
            let k = p.labels.count() as usize;
            assert!((2..=4).contains(&k));
            assert!(p.labels.classes().iter().all(|c| [1, 2].contains(c)));
            for &(x, y) in &p.touching {
                pairs += 1;
                let l = p.labels.instances().labels();
                assert_eq!(components_of(l, |v| v == x || v == y), 1);
            }
        }
        assert!(pairs > 0);
    }
}
