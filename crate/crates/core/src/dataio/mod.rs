//! Image datasets: class-per-directory trees, PGM/PPM I/O, resizing and the
//! synthetic shapes generator.

mod netpbm;
mod resize;
pub mod shapes;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

pub use netpbm::{decode_pnm, encode_pnm, read_pnm, write_pnm, PnmImage};
pub use resize::resize_bilinear;
pub use shapes::{generate_shapes, BoundingBox, ShapeKind, SyntheticShapes, SyntheticShapesSpec};

/// Labelled images held in memory as one `(N, C, H, W)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if images.rank() != 4 || images.shape()[0] != labels.len() {
            return Err(dim_err!("{} labels for images of shape {:?}", labels.len(), images.shape()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::Validation(format!("label {bad} out of range for {} classes", class_names.len())));
        }
        Ok(Self { images, labels, class_names })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// `(C, H, W)` of one sample.
    pub fn sample_shape(&self) -> [usize; 3] {
        let [_, c, h, w] = self.images.nchw();
        [c, h, w]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let x = self.images.select_batch(indices)?;
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((x, y))
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let (images, labels) = self.batch(indices)?;
        Ok(Self { images, labels, class_names: self.class_names.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassFiles {
    pub name: String,
    pub files: Vec<PathBuf>,
}

/// Sorted listing of a `root/<class>/<image>` tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub classes: Vec<ClassFiles>,
}

impl DatasetManifest {
    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn counts(&self) -> Vec<(String, usize)> {
        self.classes.iter().map(|c| (c.name.clone(), c.files.len())).collect()
    }

    pub fn total(&self) -> usize {
        self.classes.iter().map(|c| c.files.len()).sum()
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<fs::DirEntry>> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

fn hidden(entry: &fs::DirEntry) -> bool {
    entry.file_name().to_string_lossy().starts_with('.')
}

/// Lists every class directory under `root`. Each file must decode as a
/// PGM/PPM image; dot-files are skipped and files directly under `root` are
/// ignored.
pub fn scan_dataset(root: &Path) -> Result<DatasetManifest> {
    let mut classes = Vec::new();
    for entry in sorted_entries(root)? {
        if hidden(&entry) || !entry.path().is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let mut files = Vec::new();
        for f in sorted_entries(&entry.path())? {
            if hidden(&f) {
                continue;
            }
            let path = f.path();
            if path.is_dir() {
                return Err(Error::Validation(format!("nested directory {} inside class {name}", path.display())));
            }
            read_pnm(&path)?;
            files.push(path);
        }
        if files.is_empty() {
            return Err(Error::Validation(format!("class {name} has no images")));
        }
        classes.push(ClassFiles { name, files });
    }
    if classes.is_empty() {
        return Err(Error::Validation(format!("no class directories under {}", root.display())));
    }
    Ok(DatasetManifest { root: root.to_path_buf(), classes })
}

/// Decodes `path`, scales samples to `[0, 1]` and resizes bilinearly to
/// `target = (height, width)`. Channel count is preserved.
pub fn load_resize(path: &Path, target: (usize, usize)) -> Result<Tensor> {
    let img = read_pnm(path)?;
    resize_bilinear(&img.to_tensor(), target.0, target.1)
}

/// Loads every file of a manifest. Grayscale images are replicated to three
/// channels when the tree mixes gray and colour files.
pub fn load_dataset(manifest: &DatasetManifest, target: (usize, usize)) -> Result<Dataset> {
    let mut images = Vec::with_capacity(manifest.total());
    let mut labels = Vec::with_capacity(manifest.total());
    for (label, class) in manifest.classes.iter().enumerate() {
        for f in &class.files {
            images.push(load_resize(f, target)?);
            labels.push(label);
        }
    }
    let channels = images.iter().map(|t| t.nchw()[1]).max().unwrap_or(1);
    let (h, w) = target;
    let mut data = Vec::with_capacity(images.len() * channels * h * w);
    for t in &images {
        let c = t.nchw()[1];
        for ch in 0..channels {
            data.extend_from_slice(t.plane(0, if c == channels { ch } else { 0 }));
        }
    }
    let n = images.len();
    Dataset::new(Tensor::new(&[n, channels, h, w], data)?, labels, manifest.class_names())
}

/// Writes every sample as 8-bit PGM/PPM into `root/<class>/<index>.pgm|ppm`.
pub fn write_dataset_tree(dataset: &Dataset, root: &Path) -> Result<()> {
    for name in &dataset.class_names {
        let dir = root.join(name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let ext = if dataset.sample_shape()[0] == 1 { "pgm" } else { "ppm" };
    for i in 0..dataset.len() {
        let sample = dataset.images.select_batch(&[i])?.map(|v| v * 255.0);
        let img = PnmImage::from_tensor_u8(&sample)?;
        let path = root.join(&dataset.class_names[dataset.labels[i]]).join(format!("{i:05}.{ext}"));
        write_pnm(&path, &img)?;
    }
    Ok(())
}
