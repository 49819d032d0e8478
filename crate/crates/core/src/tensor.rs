//! Dense row-major tensors and their on-disk format.
//!
//! A tensor file is one JSON header line,
//! `{"shape":[...],"dtype":"f32","order":"row-major"}`, followed by the raw
//! little-endian `f32` payload.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    shape: Vec<usize>,
    dtype: String,
    order: String,
}

/// Shape plus row-major `f32` data.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            shape: self.shape.clone(),
            dtype: "f32".into(),
            order: "row-major".into(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(Error::Format(
                "tensor header is not newline-terminated".into(),
            ));
        }
        let header: Header = serde_json::from_slice(&line[..line.len() - 1])?;
        if header.dtype != "f32" || header.order != "row-major" {
            return Err(Error::Format(format!(
                "unsupported tensor encoding {}/{}",
                header.dtype, header.order
            )));
        }
        let n: usize = header.shape.iter().product();
        let mut bytes = Vec::with_capacity(n * 4);
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * 4 {
            return Err(Error::Format(format!(
                "payload has {} bytes, shape {:?} needs {}",
                bytes.len(),
                header.shape,
                n * 4
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            shape: header.shape,
            data,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    fn dims3(&self, what: &str) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            other => Err(Error::ShapeMismatch(format!(
                "{what} needs a rank-3 tensor, got shape {other:?}"
            ))),
        }
    }
}

macro_rules! chw_tensor {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            pub channels: usize,
            pub height: usize,
            pub width: usize,
            /// Layout `[C][H][W]`.
            pub data: Vec<f32>,
        }

        impl $name {
            pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
                Self {
                    channels,
                    height,
                    width,
                    data: vec![0.0; channels * height * width],
                }
            }

            pub fn from_vec(
                channels: usize,
                height: usize,
                width: usize,
                data: Vec<f32>,
            ) -> Result<Self> {
                if data.len() != channels * height * width {
                    return Err(Error::ShapeMismatch(format!(
                        "[{channels}, {height}, {width}] holds {} values, got {}",
                        channels * height * width,
                        data.len()
                    )));
                }
                if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Format(format!("non-finite value at flat index {bad}")));
                }
                Ok(Self {
                    channels,
                    height,
                    width,
                    data,
                })
            }

            #[inline]
            pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
                (c * self.height + y) * self.width + x
            }

            #[inline]
            pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
                self.data[self.index(c, y, x)]
            }

            #[inline]
            pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
                let i = self.index(c, y, x);
                self.data[i] = v;
            }

            pub fn channel(&self, c: usize) -> &[f32] {
                let n = self.height * self.width;
                &self.data[c * n..(c + 1) * n]
            }

            pub fn to_tensor(&self) -> Tensor {
                Tensor {
                    shape: vec![self.channels, self.height, self.width],
                    data: self.data.clone(),
                }
            }

            pub fn from_tensor(t: Tensor) -> Result<Self> {
                let (c, h, w) = t.dims3(stringify!($name))?;
                Self::from_vec(c, h, w, t.data)
            }
        }
    };
}

chw_tensor!(
    /// Per-view feature map `F(u, v)`, one value per channel and pixel.
    FeatureMap
);

chw_tensor!(
    /// Bird's-eye-view feature tensor `[C_g][H_g][W_g]`, rows along the
    /// grid's `y` axis and columns along `x`.
    GroundFeature
);
