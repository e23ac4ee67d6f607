//! Separable Gaussian blur with mirrored borders.
//!
//! The image is expanded by `radius` pixels on every side by half-sample
//! symmetric reflection (the edge pixel is repeated), convolved along rows and
//! then columns with the normalized kernel, and shrunk back to its size.
//! Channels are blurred independently.

use crate::error::{Error, Result};
use crate::observation::ObservationField;

/// Default truncation radius, `ceil(3 sigma)`.
pub fn default_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

/// Discrete Gaussian of length `2 radius + 1`, normalized to sum 1.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!("blur sigma must be positive, got {sigma}")));
    }
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}

/// Maps an index on the expanded axis back into `0..n`.
pub(crate) fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Pads a `rows x cols` image with `pad` mirrored pixels on each side.
pub fn mirror_expand(img: &ObservationField, rows: usize, cols: usize, pad: usize) -> Result<ObservationField> {
    check_shape(img, rows, cols)?;
    let d = img.dim();
    let (er, ec) = (rows + 2 * pad, cols + 2 * pad);
    let mut out = Vec::with_capacity(er * ec * d);
    for r in 0..er {
        let sr = mirror_index(r as isize - pad as isize, rows);
        for c in 0..ec {
            let sc = mirror_index(c as isize - pad as isize, cols);
            out.extend_from_slice(img.site(sr * cols + sc));
        }
    }
    ObservationField::new(d, out)
}

/// Inverse of [`mirror_expand`]: drops `pad` pixels from each side.
pub fn mirror_shrink(img: &ObservationField, rows: usize, cols: usize, pad: usize) -> Result<ObservationField> {
    let (er, ec) = (rows + 2 * pad, cols + 2 * pad);
    check_shape(img, er, ec)?;
    let mut out = Vec::with_capacity(rows * cols * img.dim());
    for r in pad..pad + rows {
        for c in pad..pad + cols {
            out.extend_from_slice(img.site(r * ec + c));
        }
    }
    ObservationField::new(img.dim(), out)
}

fn check_shape(img: &ObservationField, rows: usize, cols: usize) -> Result<()> {
    if img.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            expected: rows * cols,
            found: img.len(),
        });
    }
    Ok(())
}

pub fn gaussian_blur(
    img: &ObservationField,
    rows: usize,
    cols: usize,
    sigma: f64,
    radius: usize,
) -> Result<ObservationField> {
    let kernel = gaussian_kernel(sigma, radius)?;
    let d = img.dim();
    let expanded = mirror_expand(img, rows, cols, radius)?;
    let (er, ec) = (rows + 2 * radius, cols + 2 * radius);
    let src = expanded.values();

    // rows pass: (er x ec) -> (er x ec), only the central columns are valid
    let mut horiz = vec![0.0; er * ec * d];
    for r in 0..er {
        for c in radius..radius + cols {
            for ch in 0..d {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    acc += w * src[(r * ec + c + k - radius) * d + ch];
                }
                horiz[(r * ec + c) * d + ch] = acc;
            }
        }
    }
    // columns pass on the valid band
    let mut both = vec![0.0; er * ec * d];
    for r in radius..radius + rows {
        for c in radius..radius + cols {
            for ch in 0..d {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    acc += w * horiz[((r + k - radius) * ec + c) * d + ch];
                }
                both[(r * ec + c) * d + ch] = acc;
            }
        }
    }
    mirror_shrink(&ObservationField::new(d, both)?, rows, cols, radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(1.3, 4).unwrap();
        assert_eq!(k.len(), 9);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..4 {
            assert_eq!(k[i], k[8 - i]);
        }
        assert!(gaussian_kernel(0.0, 2).is_err());
        assert_eq!(default_radius(1.0), 3);
        assert_eq!(default_radius(0.4), 2);
    }

    #[test]
    fn mirror_indexing() {
        let got: Vec<usize> = (-4..7).map(|i| mirror_index(i, 3)).collect();
        assert_eq!(got, vec![2, 2, 1, 0, 0, 1, 2, 2, 1, 0, 0]);
    }

    #[test]
    fn expand_then_shrink_is_identity() {
        let img = ObservationField::new(2, (0..24).map(f64::from).collect()).unwrap();
        let e = mirror_expand(&img, 3, 4, 5).unwrap();
        assert_eq!(e.len(), 13 * 14);
        assert_eq!(mirror_shrink(&e, 3, 4, 5).unwrap(), img);
    }

    #[test]
    fn constant_image_unchanged() {
        let img = ObservationField::new(3, [10.0, 20.0, 30.0].repeat(35)).unwrap();
        let out = gaussian_blur(&img, 5, 7, 1.5, 5).unwrap();
        for (a, b) in out.values().iter().zip(img.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_center_is_kernel_center_squared() {
        let mut v = vec![0.0; 81];
        v[40] = 1.0;
        let img = ObservationField::scalar(v).unwrap();
        let out = gaussian_blur(&img, 9, 9, 0.8, 2).unwrap();
        // 1D weights at 0, 1, 2: 1, e^-0.78125, e^-3.125
        let (w0, w1, w2) = (1.0f64, (-0.78125f64).exp(), (-3.125f64).exp());
        let center = w0 / (w0 + 2.0 * w1 + 2.0 * w2);
        assert!((out.values()[40] - center * center).abs() < 1e-15);
    }
}
