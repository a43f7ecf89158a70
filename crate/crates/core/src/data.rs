//! Labeled image datasets, the IDX container, and class-incremental task streams.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

/// Square grayscale images in `[0, 1]` with class ids.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    name: String,
    side: usize,
    images: Vec<f32>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        side: usize,
        images: Vec<f32>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let name = name.into();
        if images.len() != labels.len() * side * side {
            return Err(Error::ShapeMismatch(format!(
                "{name}: {} pixels for {} images of side {side}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(Error::UnknownLabel {
                label: bad,
                classes: NUM_CLASSES,
            });
        }
        if images.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::ShapeMismatch(format!(
                "{name}: pixel outside [0, 1]"
            )));
        }
        Ok(Self {
            name,
            side,
            images,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rename(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn pixels_per_image(&self) -> usize {
        self.side * self.side
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let d = self.pixels_per_image();
        &self.images[i * d..(i + 1) * d]
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Sorted distinct class ids.
    pub fn classes(&self) -> Vec<usize> {
        self.labels
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// `[indices.len(), side²]` image batch with its labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let d = self.pixels_per_image();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((Tensor::new(vec![indices.len(), d], data)?, labels))
    }

    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Self {
        let d = self.pixels_per_image();
        let mut images = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            images.extend_from_slice(self.image(i));
        }
        Self {
            name: name.into(),
            side: self.side,
            images,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Samples whose label is in `classes`, in original order.
    pub fn filter_classes(&self, classes: &[usize]) -> Self {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect();
        self.subset(self.name.clone(), &idx)
    }

    /// Keeps at most `cap` samples per class (the first ones in file order).
    pub fn cap_per_class(&self, cap: usize) -> Self {
        let mut seen = [0usize; NUM_CLASSES];
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let c = &mut seen[self.labels[i]];
                *c += 1;
                *c <= cap
            })
            .collect();
        self.subset(self.name.clone(), &idx)
    }

    pub fn concat(name: impl Into<String>, parts: &[&LabeledDataset]) -> Result<Self> {
        let side = parts.first().map_or(0, |p| p.side);
        if parts.iter().any(|p| p.side != side) {
            return Err(Error::ShapeMismatch(
                "concatenating datasets of different image sizes".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            side,
            images: parts
                .iter()
                .flat_map(|p| p.images.iter().copied())
                .collect(),
            labels: parts
                .iter()
                .flat_map(|p| p.labels.iter().copied())
                .collect(),
        })
    }
}

fn read_u32_be(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::TruncatedFile(path.to_path_buf()))
}

fn check_magic(bytes: &[u8], path: &Path, expected: u32) -> Result<()> {
    let found = read_u32_be(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
            expected,
        });
    }
    Ok(())
}

/// Reads an IDX image/label file pair; pixels are scaled by 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let img = fs::read(images_path)?;
    let lab = fs::read(labels_path)?;
    check_magic(&img, images_path, IDX_IMAGE_MAGIC)?;
    check_magic(&lab, labels_path, IDX_LABEL_MAGIC)?;

    let count = read_u32_be(&img, 4, images_path)? as usize;
    let rows = read_u32_be(&img, 8, images_path)? as usize;
    let cols = read_u32_be(&img, 12, images_path)? as usize;
    let label_count = read_u32_be(&lab, 4, labels_path)? as usize;
    if rows != cols {
        return Err(Error::ShapeMismatch(format!(
            "non-square {rows}x{cols} images"
        )));
    }
    if count != label_count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let pixels = img
        .get(16..16 + count * rows * cols)
        .ok_or_else(|| Error::TruncatedFile(images_path.to_path_buf()))?;
    let labels = lab
        .get(8..8 + count)
        .ok_or_else(|| Error::TruncatedFile(labels_path.to_path_buf()))?;

    let name = images_path
        .file_name()
        .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    LabeledDataset::new(
        name,
        rows,
        pixels.iter().map(|&p| f32::from(p) / 255.0).collect(),
        labels.iter().map(|&l| usize::from(l)).collect(),
    )
}

/// Serializes a dataset as an IDX pair (pixels rounded to u8).
pub fn write_idx(dataset: &LabeledDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let n = dataset.len() as u32;
    let side = dataset.side() as u32;
    let mut img = Vec::with_capacity(16 + dataset.images.len());
    for v in [IDX_IMAGE_MAGIC, n, side, side] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend(dataset.images.iter().map(|&p| (p * 255.0).round() as u8));
    let mut lab = Vec::with_capacity(8 + dataset.len());
    for v in [IDX_LABEL_MAGIC, n] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend(dataset.labels.iter().map(|&l| l as u8));
    fs::write(images_path, img)?;
    fs::write(labels_path, lab)?;
    Ok(())
}

/// Zero-pads 28×28 images by two pixels on every side.
pub fn resize_28_to_32(dataset: &LabeledDataset) -> Result<LabeledDataset> {
    if dataset.side != 28 {
        return Err(Error::ShapeMismatch(format!(
            "expected 28x28 images, got side {}",
            dataset.side
        )));
    }
    let mut images = vec![0.0f32; dataset.len() * 32 * 32];
    for i in 0..dataset.len() {
        let src = dataset.image(i);
        let dst = &mut images[i * 1024..(i + 1) * 1024];
        for r in 0..28 {
            dst[(r + 2) * 32 + 2..(r + 2) * 32 + 30].copy_from_slice(&src[r * 28..(r + 1) * 28]);
        }
    }
    Ok(LabeledDataset {
        name: dataset.name.clone(),
        side: 32,
        images,
        labels: dataset.labels.clone(),
    })
}

/// One class of a class-incremental stream.
#[derive(Clone, Debug)]
pub struct Task {
    /// 1-based position in the stream.
    pub index: usize,
    pub class_id: usize,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Ordered single-class tasks with pairwise-disjoint, ascending labels.
#[derive(Clone, Debug)]
pub struct TaskStream {
    tasks: Vec<Task>,
}

impl TaskStream {
    pub fn new(tasks: Vec<Task>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::EmptyDataset("task stream".into()));
        }
        let mut seen = BTreeSet::new();
        for (i, task) in tasks.iter().enumerate() {
            if task.index != i + 1 {
                return Err(Error::ShapeMismatch(format!(
                    "task {} stored at position {}",
                    task.index,
                    i + 1
                )));
            }
            if task.train.is_empty() {
                return Err(Error::EmptyDataset(format!("task {}", task.index)));
            }
            for split in [&task.train, &task.test] {
                if split.labels().iter().any(|&l| l != task.class_id) {
                    return Err(Error::ShapeMismatch(format!(
                        "task {} is not single-class",
                        task.index
                    )));
                }
            }
            if !seen.insert(task.class_id) {
                return Err(Error::LabelOverlap(task.class_id));
            }
            if i > 0 && task.class_id <= tasks[i - 1].class_id {
                return Err(Error::ShapeMismatch("task classes must ascend".into()));
            }
        }
        Ok(Self { tasks })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// First `n` tasks.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Self::new(self.tasks.iter().take(n).cloned().collect())
    }

    /// Training data of tasks `1..=t` merged.
    pub fn train_union(&self, t: usize) -> Result<LabeledDataset> {
        let parts: Vec<&LabeledDataset> = self.tasks[..t].iter().map(|k| &k.train).collect();
        LabeledDataset::concat(format!("train_1..{t}"), &parts)
    }

    /// Test data of tasks `1..=t` merged.
    pub fn test_union(&self, t: usize) -> Result<LabeledDataset> {
        let parts: Vec<&LabeledDataset> = self.tasks[..t].iter().map(|k| &k.test).collect();
        LabeledDataset::concat(format!("test_1..{t}"), &parts)
    }
}

/// Task `t` holds exactly the samples of class `t − 1`, from both splits.
pub fn split_class_incremental(
    train: &LabeledDataset,
    test: &LabeledDataset,
    num_classes: usize,
) -> Result<TaskStream> {
    let mut tasks = Vec::with_capacity(num_classes);
    for class in 0..num_classes {
        let tr = train.filter_classes(&[class]);
        if tr.is_empty() {
            return Err(Error::MissingClass(class));
        }
        let te = test.filter_classes(&[class]);
        tasks.push(Task {
            index: class + 1,
            class_id: class,
            train: LabeledDataset {
                name: format!("{}/class{class}", train.name),
                ..tr
            },
            test: LabeledDataset {
                name: format!("{}/class{class}", test.name),
                ..te
            },
        });
    }
    TaskStream::new(tasks)
}

/// MNIST-family file locations under a data root.
#[derive(Clone, Debug)]
pub struct IdxFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl IdxFiles {
    /// Standard file names inside `<root>/<dataset>/`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }
}

/// Loads, pads to 32×32, optionally caps training samples per class, and
/// splits into ten single-class tasks.
pub fn load_class_incremental(
    files: &IdxFiles,
    per_class_cap: Option<usize>,
) -> Result<TaskStream> {
    let mut train = resize_28_or_keep(load_idx(&files.train_images, &files.train_labels)?)?;
    let test = resize_28_or_keep(load_idx(&files.test_images, &files.test_labels)?)?;
    if let Some(cap) = per_class_cap {
        train = train.cap_per_class(cap);
    }
    split_class_incremental(&train, &test, NUM_CLASSES)
}

fn resize_28_or_keep(ds: LabeledDataset) -> Result<LabeledDataset> {
    match ds.side {
        32 => Ok(ds),
        _ => resize_28_to_32(&ds),
    }
}

/// Per-class bump centre on a 4×3 lattice.
fn toy_center(class: usize) -> (f32, f32) {
    let col = (class % 4) as f32;
    let row = (class / 4) as f32;
    (6.0 + 6.5 * col, 7.0 + 9.0 * row)
}

fn toy_image(class: usize, rng: &mut impl Rng) -> Vec<f32> {
    let (cx, cy) = toy_center(class);
    let (cx, cy) = (cx + rng.gen_range(-1.0..1.0), cy + rng.gen_range(-1.0..1.0));
    let sigma2 = 2.0 * 3.0f32 * 3.0;
    (0..32 * 32)
        .map(|i| {
            let (x, y) = ((i % 32) as f32, (i / 32) as f32);
            let bump = (-((x - cx).powi(2) + (y - cy).powi(2)) / sigma2).exp();
            (bump + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0)
        })
        .collect()
}

/// Synthetic stream: class `c` renders a Gaussian bump at a class-specific
/// location plus uniform noise. Test splits hold a quarter as many samples
/// (at least 20).
pub fn toy_stream(
    num_tasks: usize,
    samples_per_task: usize,
    rng: &mut impl Rng,
) -> Result<TaskStream> {
    if num_tasks == 0 || num_tasks > NUM_CLASSES {
        return Err(Error::BadValue {
            key: "num_tasks".into(),
            reason: format!("must be in 1..={NUM_CLASSES}"),
        });
    }
    let test_n = (samples_per_task / 4).max(20);
    let mut tasks = Vec::with_capacity(num_tasks);
    for class in 0..num_tasks {
        let mut make = |n: usize, split: &str| -> Result<LabeledDataset> {
            let images = (0..n).flat_map(|_| toy_image(class, rng)).collect();
            LabeledDataset::new(
                format!("toy-{split}/class{class}"),
                32,
                images,
                vec![class; n],
            )
        };
        let train = make(samples_per_task, "train")?;
        let test = make(test_n, "test")?;
        tasks.push(Task {
            index: class + 1,
            class_id: class,
            train,
            test,
        });
    }
    TaskStream::new(tasks)
}
