use std::path::Path;

use ndarray::{Array1, Array2};

use super::adam::Adam;
use super::mlp::{Activation, Gradients, Layer, Mlp};
use crate::codec::Cursor;
use crate::features::Normalizer;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"PNTNET\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A network with its input normaliser and, optionally, optimiser state.
///
/// Layout (little-endian): magic, version, seed, layer count, per layer
/// `(in, out, activation tag)`, normaliser dim followed by means and stds,
/// then each layer's weights (row-major) and biases. An Adam flag byte
/// follows; when set, the step count, hyperparameters and both moment
/// buffers in the same order as the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Mlp,
    pub normalizer: Option<Normalizer>,
    pub adam: Option<Adam>,
}

fn put_f64s<'a>(out: &mut Vec<u8>, xs: impl IntoIterator<Item = &'a f64>) {
    for v in xs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn new(net: Mlp, normalizer: Option<Normalizer>) -> Self {
        Self {
            net,
            normalizer,
            adam: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.net.seed.to_le_bytes());
        out.extend_from_slice(&(self.net.layers.len() as u32).to_le_bytes());
        for l in &self.net.layers {
            out.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
            out.push(l.activation.tag());
        }
        match &self.normalizer {
            Some(n) => {
                out.extend_from_slice(&(n.dim() as u32).to_le_bytes());
                put_f64s(&mut out, &n.mean);
                put_f64s(&mut out, &n.std);
            }
            None => out.extend_from_slice(&0u32.to_le_bytes()),
        }
        for l in &self.net.layers {
            put_f64s(&mut out, l.w.iter());
            put_f64s(&mut out, l.b.iter());
        }
        match &self.adam {
            Some(a) => {
                out.push(1);
                out.extend_from_slice(&a.step.to_le_bytes());
                put_f64s(&mut out, &[a.lr, a.beta1, a.beta2, a.eps]);
                for g in [&a.m, &a.v] {
                    put_f64s(&mut out, g.flatten().iter());
                }
            }
            None => out.push(0),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes, "checkpoint");
        if r.take(8)? != MAGIC {
            return Err(Error::BadMagic("checkpoint"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                kind: "checkpoint",
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let seed = r.u64()?;
        let n_layers = r.u32()? as usize;
        let mut shapes = Vec::with_capacity(n_layers.min(64));
        for _ in 0..n_layers {
            let i = r.u32()? as usize;
            let o = r.u32()? as usize;
            shapes.push((i, o, Activation::from_tag(r.u8()?)?));
        }
        let dim = r.u32()? as usize;
        let normalizer = if dim > 0 {
            Some(Normalizer {
                mean: r.f64s(dim)?,
                std: r.f64s(dim)?,
            })
        } else {
            None
        };
        let mut layers = Vec::with_capacity(n_layers);
        for &(i, o, activation) in &shapes {
            let w = Array2::from_shape_vec((i, o), r.f64s(i * o)?).map_err(|_| Error::Truncated("checkpoint"))?;
            let b = Array1::from_vec(r.f64s(o)?);
            layers.push(Layer { w, b, activation });
        }
        let mut net = Mlp::from_layers(layers)?;
        net.seed = seed;
        let adam = match r.u8()? {
            0 => None,
            _ => {
                let step = r.u64()?;
                let h = r.f64s(4)?;
                let mut a = Adam::new(&net, h[0]);
                a.step = step;
                a.beta1 = h[1];
                a.beta2 = h[2];
                a.eps = h[3];
                let n = net.num_params();
                a.m = unflatten(&net, &r.f64s(n)?);
                a.v = unflatten(&net, &r.f64s(n)?);
                Some(a)
            }
        };
        if r.remaining() != 0 {
            return Err(Error::Truncated("checkpoint"));
        }
        Ok(Self { net, normalizer, adam })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }
}

fn unflatten(net: &Mlp, flat: &[f64]) -> Gradients {
    let mut probe = net.clone();
    probe.set_params(flat);
    Gradients {
        w: probe.layers.iter().map(|l| l.w.clone()).collect(),
        b: probe.layers.iter().map(|l| l.b.clone()).collect(),
    }
}
