//! Seeded synthetic channel generators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor2D;

/// Tail shape of a generated channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tail {
    Normal,
    /// `std` acts as the scale of a Student-t with `dof` degrees of freedom.
    StudentT { dof: f64 },
    /// With probability `fraction` a sample is replaced by `mean ± magnitude·std`.
    OutlierMix { fraction: f64, magnitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGenSpec {
    pub mean: f64,
    pub std: f64,
    #[serde(default = "normal_tail")]
    pub tail: Tail,
}

fn normal_tail() -> Tail {
    Tail::Normal
}

impl ChannelGenSpec {
    pub fn normal(mean: f64, std: f64) -> Self {
        Self { mean, std, tail: Tail::Normal }
    }

    pub fn student_t(mean: f64, std: f64, dof: f64) -> Self {
        Self { mean, std, tail: Tail::StudentT { dof } }
    }

    pub fn outlier_mix(mean: f64, std: f64, fraction: f64, magnitude: f64) -> Self {
        Self { mean, std, tail: Tail::OutlierMix { fraction, magnitude } }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.std > 0.0 && self.std.is_finite()) || !self.mean.is_finite() {
            return Err(Error::Config(format!("channel std must be positive and finite: {self:?}")));
        }
        match self.tail {
            Tail::Normal => Ok(()),
            Tail::StudentT { dof } if dof > 0.0 && dof.is_finite() => Ok(()),
            Tail::OutlierMix { fraction, magnitude }
                if (0.0..1.0).contains(&fraction) && magnitude.is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::Config(format!("invalid channel tail: {self:?}"))),
        }
    }

    fn sample(&self, rng: &mut SeededRng) -> f64 {
        match self.tail {
            Tail::Normal => self.mean + self.std * rng.standard_normal(),
            Tail::StudentT { dof } => self.mean + self.std * rng.student_t(dof),
            Tail::OutlierMix { fraction, magnitude } => {
                let z = rng.standard_normal();
                if rng.bernoulli(fraction) {
                    self.mean + rng.sign() * magnitude * self.std
                } else {
                    self.mean + self.std * z
                }
            }
        }
    }
}

/// `s × spec.len()` tensor; column `i` draws from `spec[i]` on RNG stream `i`.
pub fn gen_synthetic(spec: &[ChannelGenSpec], s: usize, seed: u64) -> Result<Tensor2D> {
    if spec.is_empty() {
        return Err(Error::Config("channel spec is empty".into()));
    }
    if s == 0 {
        return Err(Error::Config("token count must be positive".into()));
    }
    spec.iter().try_for_each(ChannelGenSpec::validate)?;
    let d = spec.len();
    let mut data = vec![0.0; s * d];
    for (c, ch) in spec.iter().enumerate() {
        let mut rng = SeededRng::new(seed, c as u64);
        for t in 0..s {
            data[t * d + c] = ch.sample(&mut rng);
        }
    }
    Tensor2D::new(s, d, data)
}

/// Repeats `spec` cyclically to `d` channels.
pub fn tile_channels(spec: &[ChannelGenSpec], d: usize) -> Vec<ChannelGenSpec> {
    spec.iter().cycle().take(d).copied().collect()
}

/// Four-channel illustration fixture: distinct means and scales, one heavy
/// tail. The numbers are chosen for this crate, not taken from a measurement.
pub fn four_channel_spec() -> Vec<ChannelGenSpec> {
    vec![
        ChannelGenSpec::normal(-2.0, 0.5),
        ChannelGenSpec::normal(3.0, 1.5),
        ChannelGenSpec::normal(0.5, 0.2),
        ChannelGenSpec::student_t(0.0, 1.0, 3.0),
    ]
}

/// Default residual-stream channels for the toy block's image input:
/// zero means, mixed scales and tails.
pub fn default_image_spec() -> Vec<ChannelGenSpec> {
    vec![
        ChannelGenSpec::normal(0.0, 1.0),
        ChannelGenSpec::normal(0.0, 0.8),
        ChannelGenSpec::student_t(0.0, 1.0, 4.0),
        ChannelGenSpec::normal(0.0, 0.5),
        ChannelGenSpec::outlier_mix(0.0, 1.0, 0.01, 8.0),
        ChannelGenSpec::normal(0.0, 1.2),
        ChannelGenSpec::normal(0.0, 1.0),
        ChannelGenSpec::student_t(0.0, 0.7, 5.0),
    ]
}

/// Default text-stream channels: heavier tails and offset means.
pub fn default_text_spec() -> Vec<ChannelGenSpec> {
    vec![
        ChannelGenSpec::student_t(0.3, 1.0, 3.0),
        ChannelGenSpec::student_t(-0.8, 0.6, 3.0),
        ChannelGenSpec::normal(1.2, 0.9),
        ChannelGenSpec::student_t(0.0, 1.5, 3.0),
    ]
}

/// Derives an independent seed for a tagged sub-experiment (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
