use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Batch, Matrix, TensorError};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, TensorError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| TensorError::Format {
            offset,
            message: format!(
                "file truncated: need 4 header bytes, have {}",
                bytes.len().saturating_sub(offset)
            ),
        })
}

fn expect_magic(bytes: &[u8], magic: u32, what: &str) -> Result<(), TensorError> {
    let found = read_u32(bytes, 0)?;
    if found != magic {
        return Err(TensorError::Format {
            offset: 0,
            message: format!("bad {what} magic 0x{found:08x}, expected 0x{magic:08x}"),
        });
    }
    Ok(())
}

/// Decode an IDX image/label pair already in memory. Pixels are scaled to [0, 1].
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Batch, TensorError> {
    expect_magic(images, IMAGES_MAGIC, "image")?;
    expect_magic(labels, LABELS_MAGIC, "label")?;
    let count = read_u32(images, 4)? as usize;
    let rows = read_u32(images, 8)? as usize;
    let cols = read_u32(images, 12)? as usize;
    let label_count = read_u32(labels, 4)? as usize;
    if count != label_count {
        return Err(TensorError::Format {
            offset: 4,
            message: format!("{count} images but {label_count} labels"),
        });
    }
    if count == 0 {
        return Err(TensorError::Format {
            offset: 4,
            message: "zero examples".into(),
        });
    }
    let width = rows * cols;
    let pixel_end = 16 + count * width;
    if images.len() < pixel_end {
        return Err(TensorError::Format {
            offset: images.len(),
            message: format!("image data truncated, expected {pixel_end} bytes"),
        });
    }
    if labels.len() < 8 + count {
        return Err(TensorError::Format {
            offset: labels.len(),
            message: format!("label data truncated, expected {} bytes", 8 + count),
        });
    }
    let features: Vec<f64> = images[16..pixel_end]
        .iter()
        .map(|&p| f64::from(p) / 255.0)
        .collect();
    let labels: Vec<usize> = labels[8..8 + count]
        .iter()
        .map(|&l| usize::from(l))
        .collect();
    Batch::new(Matrix::from_vec(count, width, features)?, labels)
}

/// Load an IDX image file and its label file (the MNIST layout).
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Batch, TensorError> {
    let read = |p: &Path| {
        std::fs::read(p).map_err(|source| TensorError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let images = read(images_path.as_ref())?;
    let labels = read(labels_path.as_ref())?;
    parse_idx(&images, &labels)
}

/// Gaussian clusters around per-class centers drawn from `N(0, I)`.
///
/// Example `i` belongs to class `i % num_classes`, so any contiguous or
/// strided slice stays class-balanced.
pub fn synth_blobs(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Batch, TensorError> {
    if num_classes == 0 || dim == 0 || per_class == 0 {
        return Err(TensorError::Config(
            "synthetic blob counts must be positive".into(),
        ));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(TensorError::Config(
            "spread must be finite and non-negative".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let total = num_classes * per_class;
    let mut data = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for i in 0..total {
        let class = i % num_classes;
        for c in &centers[class] {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(c + spread * z);
        }
        labels.push(class);
    }
    Batch::new(Matrix::from_vec(total, dim, data)?, labels)
}
