//! Array archives, count tables and fold files.

pub mod archive;
pub mod counts;
pub mod folds;
pub mod npy;

pub use archive::{read_images, read_labels, write_images, write_labels, ImageArchive, LabelReader, PatchArchive};
pub use counts::{read_counts_csv, write_counts_csv};
pub use folds::{make_folds, FoldSplit};
pub use npy::{read_array_file, write_array_file, NpyArray, NpyData, NpyError, NpyReader};
