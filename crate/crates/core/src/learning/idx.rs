//! Big-endian IDX containers as used by MNIST.

use alloc::vec::Vec;

use super::data::{Dataset, Split};
use crate::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn header(bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>> {
    let need = 4 * (1 + dims);
    if bytes.len() >= 4 {
        let found = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        if found != magic {
            return Err(Error::BadMagic {
                expected: magic,
                found,
            });
        }
    }
    if bytes.len() < need {
        return Err(Error::Truncated {
            expected: need,
            found: bytes.len(),
        });
    }
    let word = |i: usize| {
        u32::from_be_bytes([
            bytes[4 * i],
            bytes[4 * i + 1],
            bytes[4 * i + 2],
            bytes[4 * i + 3],
        ])
    };
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

fn body(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8]> {
    let end = offset + len;
    if bytes.len() < end {
        return Err(Error::Truncated {
            expected: end,
            found: bytes.len(),
        });
    }
    Ok(&bytes[offset..end])
}

/// Parses an image file (`0x803`, dims count × rows × cols) and a label file
/// (`0x801`, dims count) into a dataset. Trailing bytes are ignored.
pub fn parse_idx(images: &[u8], labels: &[u8], split: Split) -> Result<Dataset> {
    let d = header(images, IMAGE_MAGIC, 3)?;
    let (count, rows, cols) = (d[0], d[1], d[2]);
    let l = header(labels, LABEL_MAGIC, 1)?;
    if l[0] != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: l[0],
        });
    }
    let pixels = body(images, 16, count * rows * cols)?;
    let lab = body(labels, 8, count)?;
    Dataset::new(rows, cols, pixels.to_vec(), lab.to_vec(), split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn image_file(count: u32, rows: u32, cols: u32, px: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [IMAGE_MAGIC, count, rows, cols] {
            v.extend(w.to_be_bytes());
        }
        v.extend(px);
        v
    }

    fn label_file(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend(LABEL_MAGIC.to_be_bytes());
        v.extend((labels.len() as u32).to_be_bytes());
        v.extend(labels);
        v
    }

    #[test]
    fn two_image_fixture() {
        let px = [0, 255, 51, 102, 0, 0, 255, 1];
        let d = parse_idx(
            &image_file(2, 2, 2, &px),
            &label_file(&[7, 3]),
            Split::Train,
        )
        .unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!((d.rows(), d.cols()), (2, 2));
        assert_eq!(d.labels(), &[7, 3]);
        let f: Vec<f64> = (0..4).map(|j| d.feature(0, j)).collect();
        assert_eq!(f, vec![0.0, 1.0, 0.2, 0.4]);
        let f: Vec<f64> = (0..4).map(|j| d.feature(1, j)).collect();
        assert_eq!(f, vec![0.0, 0.0, 1.0, 1.0 / 255.0]);
    }

    #[test]
    fn distinct_errors() {
        let img = image_file(2, 2, 2, &[0; 8]);
        let lab = label_file(&[1, 2]);
        assert!(matches!(
            parse_idx(&[], &lab, Split::Train),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            parse_idx(&img[..20], &lab, Split::Train),
            Err(Error::Truncated {
                expected: 24,
                found: 20
            })
        ));
        assert!(matches!(
            parse_idx(&lab, &lab, Split::Train),
            Err(Error::BadMagic {
                expected: IMAGE_MAGIC,
                found: LABEL_MAGIC
            })
        ));
        assert!(matches!(
            parse_idx(&img, &label_file(&[1]), Split::Train),
            Err(Error::CountMismatch {
                images: 2,
                labels: 1
            })
        ));
        assert!(matches!(
            parse_idx(&img, &label_file(&[1, 12]), Split::Train),
            Err(Error::InvalidParams(_))
        ));
    }
}
