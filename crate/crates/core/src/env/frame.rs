//! RGB frames, Gaussian blur and temporal mixing.

use serde::{Deserialize, Serialize};

/// Floating-point RGB image stored row-major as `(row, col, channel)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn black(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width * 3],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn idx(&self, row: usize, col: usize, ch: usize) -> usize {
        debug_assert!(row < self.height && col < self.width && ch < 3);
        (row * self.width + col) * 3 + ch
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[self.idx(row, col, ch)]
    }

    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        let i = self.idx(row, col, ch);
        self.data[i] = value;
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = self.idx(row, col, 0);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let i = self.idx(row, col, 0);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn channel_sum(&self, ch: usize) -> f64 {
        self.data.iter().skip(ch).step_by(3).sum()
    }

    pub fn max_abs_diff(&self, other: &Frame) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "frame shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Binary PPM (`P6`), 8-bit, each channel rounded from `[0, 1]`.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }
}

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "blur sigma must be positive");
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Normalized 2-D Gaussian kernel, `(2r+1) x (2r+1)`, row-major.
pub fn gaussian_kernel(sigma: f64) -> Vec<Vec<f64>> {
    let taps = gaussian_taps(sigma);
    taps.iter()
        .map(|a| taps.iter().map(|b| a * b).collect())
        .collect()
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Per-channel Gaussian blur with reflective boundaries; output clamped to `[0, 1]`.
///
/// The truncated 2-D Gaussian factorizes, so the kernel is applied as two
/// 1-D passes.
pub fn gaussian_blur(frame: &Frame, sigma: f64) -> Frame {
    let taps = gaussian_taps(sigma);
    let r = (taps.len() / 2) as i64;
    let (h, w) = (frame.height, frame.width);

    let mut rows = Frame::black(h, w);
    for row in 0..h {
        for col in 0..w {
            for ch in 0..3 {
                let v: f64 = taps
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * frame.get(row, reflect(col as i64 + k as i64 - r, w), ch))
                    .sum();
                rows.set(row, col, ch, v);
            }
        }
    }
    let mut out = Frame::black(h, w);
    for row in 0..h {
        for col in 0..w {
            for ch in 0..3 {
                let v: f64 = taps
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * rows.get(reflect(row as i64 + k as i64 - r, h), col, ch))
                    .sum();
                out.set(row, col, ch, v.clamp(0.0, 1.0));
            }
        }
    }
    out
}

/// `mix * prev + (1 - mix) * cur`, elementwise.
pub fn temporal_mix(prev: &Frame, cur: &Frame, mix: f64) -> Frame {
    assert!(
        prev.height == cur.height && prev.width == cur.width,
        "frame shape mismatch"
    );
    Frame {
        height: cur.height,
        width: cur.width,
        data: prev
            .data
            .iter()
            .zip(&cur.data)
            .map(|(p, c)| mix * p + (1.0 - mix) * c)
            .collect(),
    }
}
