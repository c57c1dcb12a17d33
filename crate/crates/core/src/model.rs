//! The complete model: weight predictor plus temporal branch, stored together
//! in one weight container.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fusion::{predict_weights, spatial_branch_with_weights};
use crate::interp::OrderTable;
use crate::lut::ExpertBank;
use crate::nnet::{load_tensors, save_tensors, Layer, NamedTensor, Net, DEFAULT_WIDTH};
use crate::plane::{Frame, Plane};
use crate::temporal::{combine, temporal_branch, MotionField, SEARCH_RADIUS};
use crate::{Error, Real, Result};

pub const PREDICTOR_PREFIX: &str = "predictor.";
pub const TEMPORAL_PREFIX: &str = "temporal.";
pub const DEPTH: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLut<T> {
    pub predictor: Net<T>,
    pub temporal: Net<T>,
    pub scale: usize,
    pub search_radius: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub experts: usize,
    pub scale: usize,
    pub width: usize,
    pub softmax: bool,
}

impl ModelShape {
    pub fn new(experts: usize, scale: usize) -> Self {
        Self {
            experts,
            scale,
            width: DEFAULT_WIDTH,
            softmax: true,
        }
    }
}

impl<T: Real> ConvLut<T> {
    /// Seeded initialization. The temporal branch's last conv starts at zero
    /// so an untrained model reproduces the spatial branch.
    pub fn init(shape: ModelShape, seed: u64) -> Result<Self> {
        if shape.experts == 0 || shape.scale == 0 || shape.width == 0 {
            return Err(Error::invalid("experts, scale and width must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let predictor = Net::predictor(1, shape.width, shape.experts, DEPTH, shape.softmax, &mut rng)?;
        let mut temporal = Net::temporal(4, shape.width, 1, DEPTH, shape.scale, &mut rng)?;
        temporal.zero_last_conv();
        Ok(Self {
            predictor,
            temporal,
            scale: shape.scale,
            search_radius: SEARCH_RADIUS,
        })
    }

    pub fn experts(&self) -> usize {
        self.predictor
            .layers()
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Conv3x3(c) => Some(c.out_ch),
                _ => None,
            })
            .unwrap_or(0)
    }

    pub fn check_bank(&self, bank: &ExpertBank) -> Result<()> {
        if self.experts() != bank.len() {
            return Err(Error::invalid(format!(
                "predictor produces {} weights, bank has {} experts",
                self.experts(),
                bank.len()
            )));
        }
        if self.scale != bank.scale() {
            return Err(Error::invalid(format!(
                "model upscales by {}, bank by {}",
                self.scale,
                bank.scale()
            )));
        }
        Ok(())
    }

    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let mut t = vec![
            NamedTensor::scalar("meta.scale", self.scale as f32),
            NamedTensor::scalar("meta.search_radius", self.search_radius as f32),
        ];
        t.extend(self.predictor.to_tensors(PREDICTOR_PREFIX));
        t.extend(self.temporal.to_tensors(TEMPORAL_PREFIX));
        t
    }

    pub fn from_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let meta = |name: &str| -> Result<usize> {
            let t = tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::invalid(format!("missing {name}")))?;
            match t.data.as_slice() {
                [v] if *v >= 0.0 && v.fract() == 0.0 => Ok(*v as usize),
                _ => Err(Error::invalid(format!("{name} must be one non-negative integer"))),
            }
        };
        let model = Self {
            predictor: Net::from_tensors(PREDICTOR_PREFIX, tensors)?,
            temporal: Net::from_tensors(TEMPORAL_PREFIX, tensors)?,
            scale: meta("meta.scale")?,
            search_radius: meta("meta.search_radius")? as u32,
        };
        let out = model.temporal.out_shape([1, 4, 1, 1])?;
        if out != [1, 1, model.scale, model.scale] {
            return Err(Error::invalid(format!(
                "temporal branch maps 1x1 to {out:?}, expected scale {}",
                model.scale
            )));
        }
        if model.predictor.out_shape([1, 1, 1, 1])?[2..] != [1, 1] {
            return Err(Error::invalid("predictor must preserve spatial size"));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_tensors(path, &self.to_tensors())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensors(&load_tensors(path)?)
    }

    /// Upscale one frame. Fusion weights and the temporal residual come from
    /// the luma; the residual is added to every channel.
    pub fn upscale(
        &self,
        bank: &ExpertBank,
        table: &OrderTable,
        cur: &Frame,
        prev: Option<&Frame>,
        motion: Option<&MotionField>,
        use_temporal: bool,
    ) -> Result<Frame> {
        self.check_bank(bank)?;
        let luma = cur.luma();
        let weights = predict_weights(&self.predictor, &luma, bank.len())?;
        let spatial = cur
            .planes()
            .iter()
            .map(|p| spatial_branch_with_weights(bank, table, &weights, p))
            .collect::<Result<Vec<_>>>()?;
        if !use_temporal {
            return Frame::new(spatial);
        }
        let prev_luma = prev.map(Frame::luma);
        let residual = temporal_branch(&self.temporal, &luma, prev_luma.as_ref(), motion)?;
        let planes = spatial
            .iter()
            .map(|s| combine(s, &residual))
            .collect::<Result<Vec<Plane<u8>>>>()?;
        Frame::new(planes)
    }
}
