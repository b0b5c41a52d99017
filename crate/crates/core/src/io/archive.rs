//! Image and two-channel label archives.
//!
//! Images are `N×H×W×3` unsigned bytes. Labels are `N×H×W×2` integers of any
//! little-endian width: channel 0 instance ids, channel 1 class ids `0..=6`,
//! with the instance channel nonzero exactly where the class channel is.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::npy::{write_header, DType, NpyArray, NpyData, NpyError, NpyReader};
use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::label::LabelMap;
use crate::postproc::ClassedInstances;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageArchive {
    pub height: usize,
    pub width: usize,
    /// Interleaved RGB, patch after patch.
    pub data: Vec<u8>,
}

impl ImageArchive {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        let patch = height * width * 3;
        if patch == 0 || data.len() % patch != 0 {
            return Err(Error::Invalid(format!(
                "{} image bytes are not a whole number of {height}x{width}x3 patches",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / (self.height * self.width * 3)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn patch(&self, i: usize) -> &[u8] {
        let l = self.height * self.width * 3;
        &self.data[i * l..(i + 1) * l]
    }
}

fn expect_rank(shape: &[usize], rank: usize, last: usize, what: &str) -> Result<()> {
    if shape.len() != rank || shape[rank - 1] != last {
        return Err(Error::Invalid(format!(
            "{what} archive must have shape N×H×W×{last}, found {shape:?}"
        )));
    }
    Ok(())
}

pub fn read_images(path: &Path) -> Result<ImageArchive> {
    let mut r = NpyReader::open(path)?;
    expect_rank(r.shape(), 4, 3, "image")?;
    let (h, w) = (r.shape()[1], r.shape()[2]);
    let arr = r.read_all()?;
    match arr.data {
        NpyData::U8(data) => Ok(ImageArchive {
            height: h,
            width: w,
            data,
        }),
        other => Err(NpyError::TypeMismatch {
            expected: "u8",
            found: other.dtype().name(),
        }
        .into()),
    }
}

pub fn write_images(path: &Path, images: &ImageArchive) -> Result<()> {
    let arr = NpyArray::new(
        vec![images.len(), images.height, images.width, 3],
        NpyData::U8(images.data.clone()),
    )?;
    super::npy::write_array_file(&arr, path)?;
    Ok(())
}

/// Checks one patch's two channels and converts them to instances.
fn decode_patch(index: usize, h: usize, w: usize, values: &[i64]) -> Result<ClassedInstances> {
    let bad = |reason: String| Error::Patch { index, reason };
    let mut inst = Vec::with_capacity(h * w);
    let mut cls = Vec::with_capacity(h * w);
    for (p, px) in values.chunks_exact(2).enumerate() {
        let (id, c) = (px[0], px[1]);
        if id < 0 || id > u32::MAX as i64 {
            return Err(bad(format!("instance id {id} out of range at pixel {p}")));
        }
        if !(0..=NUM_CLASSES as i64).contains(&c) {
            return Err(bad(format!("class id {c} out of range 0..=6 at pixel {p}")));
        }
        if (id == 0) != (c == 0) {
            return Err(bad(format!(
                "instance {id} and class {c} disagree on foreground at pixel {p}"
            )));
        }
        inst.push(id as u32);
        cls.push(c as u32);
    }
    ClassedInstances::from_maps(&LabelMap::from_vec(h, w, inst), &LabelMap::from_vec(h, w, cls))
        .map_err(|e| bad(e.to_string()))
}

/// Streams patches from a label archive.
pub struct LabelReader {
    reader: NpyReader,
}

impl LabelReader {
    pub fn open(path: &Path) -> Result<Self> {
        let reader = NpyReader::open(path)?;
        expect_rank(reader.shape(), 4, 2, "label")?;
        if !reader.dtype().is_integer() {
            return Err(NpyError::TypeMismatch {
                expected: "integer",
                found: reader.dtype().name(),
            }
            .into());
        }
        Ok(Self { reader })
    }

    pub fn len(&self) -> usize {
        self.reader.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reader.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.reader.shape()[1], self.reader.shape()[2])
    }

    pub fn read_patch(&mut self, index: usize) -> Result<ClassedInstances> {
        let (h, w) = self.dims();
        let arr = self.reader.read_rows(index, 1)?;
        let values = arr.data.to_i64().expect("integer dtype checked at open");
        decode_patch(index, h, w, &values)
    }
}

pub fn read_labels(path: &Path) -> Result<Vec<ClassedInstances>> {
    let mut r = LabelReader::open(path)?;
    (0..r.len()).map(|i| r.read_patch(i)).collect()
}

/// Writes patches as an `N×H×W×2` int32 archive. An empty slice writes a
/// `0×height×width×2` array.
pub fn write_labels(path: &Path, patches: &[ClassedInstances], height: usize, width: usize) -> Result<()> {
    for (i, p) in patches.iter().enumerate() {
        if p.dims() != (height, width) {
            return Err(Error::Patch {
                index: i,
                reason: format!("size {:?}, archive is {height}x{width}", p.dims()),
            });
        }
    }
    let mut f = BufWriter::new(File::create(path)?);
    write_header(DType::I32, &[patches.len(), height, width, 2], &mut f)?;
    let mut buf = Vec::with_capacity(height * width * 8);
    for p in patches {
        buf.clear();
        let classes = p.class_map();
        for (&id, &c) in p.instances().labels().data().iter().zip(classes.data()) {
            buf.extend_from_slice(&(id as i32).to_le_bytes());
            buf.extend_from_slice(&(c as i32).to_le_bytes());
        }
        f.write_all(&buf)?;
    }
    f.flush()?;
    Ok(())
}

/// Images and labels sharing patch count and size.
#[derive(Debug, Clone)]
pub struct PatchArchive {
    pub images: ImageArchive,
    pub labels: Vec<ClassedInstances>,
}

impl PatchArchive {
    pub fn new(images: ImageArchive, labels: Vec<ClassedInstances>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Invalid(format!(
                "{} images but {} label patches",
                images.len(),
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.dims() != (images.height, images.width) {
                return Err(Error::Patch {
                    index: i,
                    reason: format!("label size {:?} differs from image size", l.dims()),
                });
            }
        }
        Ok(Self { images, labels })
    }

    pub fn load(images: &Path, labels: &Path) -> Result<Self> {
        Self::new(read_images(images)?, read_labels(labels)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
