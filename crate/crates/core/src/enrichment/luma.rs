use crate::model::container::Clip;

/// A single-channel 8-bit plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LumaPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl LumaPlane {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// `round((R + G + B) / 3)`; the remainder is never exactly one half.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((r as u16 + g as u16 + b as u16 + 1) / 3) as u8
}

pub fn luma_plane(frame: &[u8], width: u32, height: u32) -> LumaPlane {
    LumaPlane {
        width: width as usize,
        height: height as usize,
        data: frame.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect(),
    }
}

/// Nearest-neighbour decimation by the smallest integer stride that brings
/// the longer side to at most `max_side`.
pub fn downscale_stride(width: u32, height: u32, max_side: u32) -> u32 {
    width.max(height).div_ceil(max_side).max(1)
}

pub fn downscaled_luma(frame: &[u8], width: u32, height: u32, stride: u32) -> LumaPlane {
    let stride = stride as usize;
    let (w, h) = (width as usize, height as usize);
    let out_w = w.div_ceil(stride);
    let out_h = h.div_ceil(stride);
    let mut data = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let row = oy * stride * w;
        for ox in 0..out_w {
            let p = (row + ox * stride) * 3;
            data.push(luma(frame[p], frame[p + 1], frame[p + 2]));
        }
    }
    LumaPlane { width: out_w, height: out_h, data }
}

pub fn clip_luma(clip: &Clip) -> Vec<LumaPlane> {
    clip.frames.iter().map(|f| luma_plane(f, clip.width, clip.height)).collect()
}
