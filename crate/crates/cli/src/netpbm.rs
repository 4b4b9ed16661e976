//! Binary PGM/PPM output.

use crelu_core::{Error, Result, Tensor};

/// Encodes a `[1,H,W]` image as P5 or a `[3,H,W]` image as P6. Values are
/// min-max rescaled to `0..=255` over the whole image.
pub fn encode(image: &Tensor) -> Result<Vec<u8>> {
    let &[c, h, w] = image.shape() else {
        return Err(Error::Shape(format!("expected a [C,H,W] image, got {:?}", image.shape())));
    };
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::Shape(format!("cannot write a {c}-channel image as PGM/PPM"))),
    };
    let data = image.data();
    let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let v = (data[(ch * h + y) * w + x] - lo) * scale;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(out)
}

pub fn extension(image: &Tensor) -> &'static str {
    if image.shape().first() == Some(&1) {
        "pgm"
    } else {
        "ppm"
    }
}
