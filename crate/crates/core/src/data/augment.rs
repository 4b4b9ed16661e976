use crate::error::Result;
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentOps {
    pub hflip: bool,
    /// Maximum absolute shift in pixels, per axis.
    pub shift: usize,
}

impl Default for AugmentOps {
    fn default() -> Self {
        AugmentOps { hflip: true, shift: 0 }
    }
}

fn dims(image: &Tensor) -> (usize, usize, usize) {
    let s = image.shape();
    (s[0], s[1], s[2])
}

/// Mirror each `[C, H, W]` plane left to right.
pub fn hflip(image: &Tensor) -> Tensor {
    let (_, _, w) = dims(image);
    let mut out = image.clone();
    for row in out.data_mut().chunks_mut(w) {
        row.reverse();
    }
    out
}

/// Translate content by `(dy, dx)` pixels, filling uncovered pixels with 0.
pub fn shift_image(image: &Tensor, dy: i64, dx: i64) -> Tensor {
    let (c, h, w) = dims(image);
    let mut out = Tensor::zeros([c, h, w]);
    let src = image.data();
    let dst = out.data_mut();
    for ch in 0..c {
        for y in 0..h as i64 {
            let sy = y - dy;
            if sy < 0 || sy >= h as i64 {
                continue;
            }
            for x in 0..w as i64 {
                let sx = x - dx;
                if sx < 0 || sx >= w as i64 {
                    continue;
                }
                dst[(ch * h + y as usize) * w + x as usize] = src[(ch * h + sy as usize) * w + sx as usize];
            }
        }
    }
    out
}

/// Random horizontal flip (p = ½) followed by a uniform integer shift in
/// `[−shift, shift]²`.
pub fn augment(image: &Tensor, rng: &mut RngStream, ops: AugmentOps) -> Result<Tensor> {
    let (_, h, w) = dims(image);
    let mut out = if ops.hflip && rng.bernoulli(0.5) {
        hflip(image)
    } else {
        image.clone()
    };
    if ops.shift > 0 {
        let m = ops.shift.min(h.max(w)) as i64;
        let dy = rng.int_inclusive(-m, m);
        let dx = rng.int_inclusive(-m, m);
        out = shift_image(&out, dy, dx);
    }
    Ok(out)
}
