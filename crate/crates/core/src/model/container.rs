//! VDC1 raw clip container.
//!
//! Layout (little-endian): `"VDC1"`, then `u32` width, height, fps_num,
//! fps_den and frame_count, followed by `frame_count` RGB24 frames stored
//! row-major from the top-left pixel.

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"VDC1";
pub const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContainerError {
    #[error("frame {index} has {actual} bytes, expected {expected}")]
    InvalidFrameGeometry { index: usize, expected: usize, actual: usize },
    #[error("clip has no frames")]
    EmptyClip,
    #[error("not a VDC1 container")]
    NotAClip,
    #[error("container holds {actual} bytes, header implies {expected}")]
    TruncatedClip { expected: u64, actual: u64 },
    #[error("invalid header: {0}")]
    InvalidHeader(&'static str),
}

/// A decoded clip. Frames are packed RGB24.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clip {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub frames: Vec<Vec<u8>>,
}

impl Clip {
    pub fn frame_len(&self) -> usize {
        frame_len(self.width, self.height)
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, ContainerError> {
        encode_clip_container(&self.frames, self.width, self.height, self.fps_num, self.fps_den)
    }

    /// Frames `[start, end)` as a new clip with the same geometry.
    pub fn slice(&self, start: usize, end: usize) -> Clip {
        Clip {
            width: self.width,
            height: self.height,
            fps_num: self.fps_num,
            fps_den: self.fps_den,
            frames: self.frames[start..end].to_vec(),
        }
    }
}

fn frame_len(width: u32, height: u32) -> usize {
    width as usize * height as usize * 3
}

pub fn encode_clip_container<F: AsRef<[u8]>>(
    frames: &[F],
    width: u32,
    height: u32,
    fps_num: u32,
    fps_den: u32,
) -> Result<Vec<u8>, ContainerError> {
    if frames.is_empty() {
        return Err(ContainerError::EmptyClip);
    }
    if width == 0 || height == 0 {
        return Err(ContainerError::InvalidHeader("zero dimension"));
    }
    if fps_num == 0 || fps_den == 0 {
        return Err(ContainerError::InvalidHeader("zero frame rate"));
    }
    let expected = frame_len(width, height);
    for (index, frame) in frames.iter().enumerate() {
        let actual = frame.as_ref().len();
        if actual != expected {
            return Err(ContainerError::InvalidFrameGeometry { index, expected, actual });
        }
    }
    let frame_count = u32::try_from(frames.len()).map_err(|_| ContainerError::InvalidHeader("too many frames"))?;

    let mut out = Vec::with_capacity(HEADER_LEN + expected * frames.len());
    out.extend_from_slice(MAGIC);
    for field in [width, height, fps_num, fps_den, frame_count] {
        out.extend_from_slice(&field.to_le_bytes());
    }
    for frame in frames {
        out.extend_from_slice(frame.as_ref());
    }
    Ok(out)
}

/// Header fields only; cheap to read without materializing frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerHeader {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub frame_count: u32,
}

pub fn read_header(bytes: &[u8]) -> Result<ContainerHeader, ContainerError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(ContainerError::NotAClip);
    }
    if bytes.len() < HEADER_LEN {
        return Err(ContainerError::TruncatedClip { expected: HEADER_LEN as u64, actual: bytes.len() as u64 });
    }
    let field = |i: usize| {
        let at = 4 + i * 4;
        u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
    };
    let header = ContainerHeader {
        width: field(0),
        height: field(1),
        fps_num: field(2),
        fps_den: field(3),
        frame_count: field(4),
    };
    if header.width == 0 || header.height == 0 {
        return Err(ContainerError::InvalidHeader("zero dimension"));
    }
    if header.fps_num == 0 || header.fps_den == 0 {
        return Err(ContainerError::InvalidHeader("zero frame rate"));
    }
    if header.frame_count == 0 {
        return Err(ContainerError::InvalidHeader("zero frames"));
    }
    let expected = HEADER_LEN as u64 + header.frame_count as u64 * header.width as u64 * header.height as u64 * 3;
    if bytes.len() as u64 != expected {
        return Err(ContainerError::TruncatedClip { expected, actual: bytes.len() as u64 });
    }
    Ok(header)
}

pub fn decode_clip_container(bytes: &[u8]) -> Result<Clip, ContainerError> {
    let header = read_header(bytes)?;
    let len = frame_len(header.width, header.height);
    let frames = bytes[HEADER_LEN..].chunks_exact(len).map(<[u8]>::to_vec).collect();
    Ok(Clip { width: header.width, height: header.height, fps_num: header.fps_num, fps_den: header.fps_den, frames })
}
