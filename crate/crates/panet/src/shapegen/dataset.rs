//! Multi-view dataset assembly and the bit-exact on-disk format.
//!
//! File layout (all integers little-endian):
//! magic `PANETDS1`, u32 version=1, u32 K, u32 R, u32 sample_count,
//! then per sample: u32 label, u32 v, v x 3 f64 viewpoints,
//! v x R x R f32 pixels.

use crate::error::{Error, Result};
use crate::shapegen::render::render_view;
use crate::shapegen::shape::{apply_pose_regime, generate_shape, PoseRegime, NUM_CLASSES};
use crate::shapegen::viewpoints::{
    ring_viewpoints, sample_random_with, sample_viewpoints_fps,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

pub const DATASET_MAGIC: &[u8; 8] = b"PANETDS1";
pub const DATASET_VERSION: u32 = 1;

/// Candidate pool size for furthest-point viewpoint selection.
const FPS_CANDIDATES: usize = 100;

/// One object: a variable-length set of rendered views with viewpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewSample {
    pub label: u32,
    pub viewpoints: Vec<[f64; 3]>,
    /// One `R*R` image per view, row-major, values in [0, 1].
    pub views: Vec<Vec<f32>>,
}

impl MultiViewSample {
    pub fn view_count(&self) -> usize {
        self.views.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub k: u32,
    pub r: u32,
    pub samples: Vec<MultiViewSample>,
}

/// Viewpoint placement regimes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Identity pose, fixed 12-view ring.
    Aligned,
    /// Random pose, fixed 12-view ring.
    Rotated,
    /// Random pose, 10..=20 viewpoints from the selected sampler.
    Arbitrary,
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Regime> {
        match s {
            "aligned" => Ok(Regime::Aligned),
            "rotated" => Ok(Regime::Rotated),
            "arbitrary" => Ok(Regime::Arbitrary),
            _ => Err(Error::Usage(format!("unknown regime '{}'", s))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Random,
    Fps,
}

impl std::str::FromStr for Sampler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Sampler> {
        match s {
            "random" => Ok(Sampler::Random),
            "fps" => Ok(Sampler::Fps),
            _ => Err(Error::Usage(format!("unknown sampler '{}'", s))),
        }
    }
}

/// Synthesizes `count_per_class` objects for each of `k` classes.
pub fn build_dataset(
    regime: Regime,
    sampler: Sampler,
    count_per_class: u32,
    k: u32,
    r: u32,
    seed: u64,
) -> Result<DatasetFile> {
    if k == 0 || k > NUM_CLASSES {
        return Err(Error::Usage(format!(
            "K must be in [1, {}], got {}",
            NUM_CLASSES, k
        )));
    }
    if count_per_class == 0 {
        return Err(Error::Usage("count per class must be >= 1".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity((k * count_per_class) as usize);
    for class in 0..k {
        for _ in 0..count_per_class {
            let shape_seed = master.next_u64();
            let pose_seed = master.next_u64();
            let view_seed = master.next_u64();
            let shape = generate_shape(class, shape_seed)?;
            let (shape, viewpoints) = match regime {
                Regime::Aligned => (
                    apply_pose_regime(shape, PoseRegime::Aligned, pose_seed),
                    ring_viewpoints(),
                ),
                Regime::Rotated => (
                    apply_pose_regime(shape, PoseRegime::Rotated, pose_seed),
                    ring_viewpoints(),
                ),
                Regime::Arbitrary => {
                    let shape = apply_pose_regime(shape, PoseRegime::Rotated, pose_seed);
                    let mut vrng = ChaCha8Rng::seed_from_u64(view_seed);
                    let v = vrng.gen_range(10..=20usize);
                    let viewpoints = match sampler {
                        Sampler::Random => sample_random_with(&mut vrng, v),
                        Sampler::Fps => {
                            let candidates = sample_random_with(&mut vrng, FPS_CANDIDATES);
                            sample_viewpoints_fps(&candidates, v, 0)?
                        }
                    };
                    (shape, viewpoints)
                }
            };
            let views = viewpoints
                .iter()
                .map(|&vp| {
                    render_view(&shape, vp, r as usize)
                        .into_iter()
                        .map(|p| p as f32)
                        .collect()
                })
                .collect();
            samples.push(MultiViewSample {
                label: class,
                viewpoints,
                views,
            });
        }
    }
    Ok(DatasetFile { k, r, samples })
}

pub fn write_dataset(dataset: &DatasetFile, path: &Path) -> Result<()> {
    let ctx = |e| Error::io(path.display().to_string(), e);
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    for field in [
        DATASET_VERSION,
        dataset.k,
        dataset.r,
        dataset.samples.len() as u32,
    ] {
        buf.extend_from_slice(&field.to_le_bytes());
    }
    for sample in &dataset.samples {
        buf.extend_from_slice(&sample.label.to_le_bytes());
        buf.extend_from_slice(&(sample.views.len() as u32).to_le_bytes());
        for vp in &sample.viewpoints {
            for c in vp {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
        for view in &sample.views {
            for px in view {
                buf.extend_from_slice(&px.to_le_bytes());
            }
        }
    }
    let mut file = std::fs::File::create(path).map_err(ctx)?;
    file.write_all(&buf).map_err(ctx)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!("{}: truncated file", self.path)));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    let display = path.display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(display.clone(), e))?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
        path: display.clone(),
    };
    let magic = r.take(8)?;
    if magic != DATASET_MAGIC {
        return Err(Error::Format(format!("{}: bad magic", display)));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {}",
            display, version
        )));
    }
    let k = r.u32()?;
    let res = r.u32()?;
    let count = r.u32()?;
    let mut samples = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let label = r.u32()?;
        if label >= k {
            return Err(Error::Format(format!(
                "{}: label {} out of range (K = {})",
                display, label, k
            )));
        }
        let v = r.u32()?;
        if !(1..=20).contains(&v) {
            return Err(Error::Format(format!(
                "{}: view count {} outside [1, 20]",
                display, v
            )));
        }
        let mut viewpoints = Vec::with_capacity(v as usize);
        for _ in 0..v {
            viewpoints.push([r.f64()?, r.f64()?, r.f64()?]);
        }
        let mut views = Vec::with_capacity(v as usize);
        for _ in 0..v {
            let mut view = Vec::with_capacity((res * res) as usize);
            for _ in 0..res * res {
                view.push(r.f32()?);
            }
            views.push(view);
        }
        samples.push(MultiViewSample {
            label,
            viewpoints,
            views,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{}: trailing bytes", display)));
    }
    Ok(DatasetFile {
        k,
        r: res,
        samples,
    })
}
