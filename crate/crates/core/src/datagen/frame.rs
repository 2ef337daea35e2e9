use serde::{Deserialize, Serialize};

use super::DataError;

/// Modality of a channel. Ordering matches the covariate block order used
/// everywhere downstream: ts, then txt, then img.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Ts,
    Txt,
    Img,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Ts, Modality::Txt, Modality::Img];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Ts => "ts",
            Modality::Txt => "txt",
            Modality::Img => "img",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Covariate,
}

/// One entry of the sidecar schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub modality: Modality,
    pub role: Role,
    #[serde(default)]
    pub future_known: bool,
    #[serde(default = "one")]
    pub width: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub version: u32,
    pub channels: Vec<ChannelSpec>,
}

impl Schema {
    pub const VERSION: u32 = 1;

    pub fn validate(&self) -> Result<(), DataError> {
        if self.version != Self::VERSION {
            return Err(DataError::Schema(format!("unsupported schema version {}", self.version)));
        }
        let targets: Vec<&ChannelSpec> = self.channels.iter().filter(|c| c.role == Role::Target).collect();
        match targets.as_slice() {
            [] => return Err(DataError::Schema("no channel has role `target`".into())),
            [t] if t.modality != Modality::Ts || t.width != 1 => {
                return Err(DataError::Schema(format!("target `{}` must be a scalar ts channel", t.name)))
            }
            [_] => {}
            _ => return Err(DataError::Schema("more than one target channel".into())),
        }
        for (i, c) in self.channels.iter().enumerate() {
            if c.width == 0 || (c.modality == Modality::Ts && c.width != 1) {
                return Err(DataError::Schema(format!("channel `{}` has invalid width {}", c.name, c.width)));
            }
            if self.channels[..i].iter().any(|o| o.name == c.name) {
                return Err(DataError::Schema(format!("duplicate channel `{}`", c.name)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub spec: ChannelSpec,
    /// `len × width` values, step-major.
    pub values: Vec<f64>,
}

impl Channel {
    pub fn step(&self, t: usize) -> &[f64] {
        let w = self.spec.width;
        &self.values[t * w..(t + 1) * w]
    }

    /// Scalar view: the value itself for ts channels, the per-step feature
    /// mean for vector channels.
    pub fn scalar_proxy(&self) -> Vec<f64> {
        let w = self.spec.width;
        if w == 1 {
            return self.values.clone();
        }
        self.values.chunks(w).map(|c| c.iter().sum::<f64>() / w as f64).collect()
    }
}

/// A multivariate series with named channels, modality tags and exactly one
/// scalar target.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesFrame {
    channels: Vec<Channel>,
    len: usize,
    first_step: i64,
}

impl SeriesFrame {
    pub fn new(channels: Vec<Channel>, first_step: i64) -> Result<Self, DataError> {
        let schema = Schema { version: Schema::VERSION, channels: channels.iter().map(|c| c.spec.clone()).collect() };
        schema.validate()?;
        let len = channels.first().map_or(0, |c| c.values.len() / c.spec.width);
        for c in &channels {
            if c.values.len() != len * c.spec.width {
                return Err(DataError::Shape(format!(
                    "channel `{}` has {} values, expected {} steps of width {}",
                    c.spec.name,
                    c.values.len(),
                    len,
                    c.spec.width
                )));
            }
            if let Some(v) = c.values.iter().find(|v| !v.is_finite()) {
                return Err(DataError::Shape(format!("channel `{}` contains non-finite value {v}", c.spec.name)));
            }
        }
        Ok(Self { channels, len, first_step })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn first_step(&self) -> i64 {
        self.first_step
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, idx: usize) -> &Channel {
        &self.channels[idx]
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.spec.name == name)
    }

    pub fn schema(&self) -> Schema {
        Schema { version: Schema::VERSION, channels: self.channels.iter().map(|c| c.spec.clone()).collect() }
    }

    pub fn target_index(&self) -> usize {
        self.channels.iter().position(|c| c.spec.role == Role::Target).expect("validated frame has a target")
    }

    pub fn target(&self) -> &[f64] {
        &self.channels[self.target_index()].values
    }

    /// Covariate channel indices in manifest order: ts block, then txt, then
    /// img, frame order within each block.
    pub fn covariate_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> =
            (0..self.channels.len()).filter(|&i| self.channels[i].spec.role == Role::Covariate).collect();
        idx.sort_by_key(|&i| self.channels[i].spec.modality);
        idx
    }

    /// Copy of this frame with `name` as the target and every other ts
    /// channel a covariate that is not future-known; vector channels are
    /// dropped.
    pub fn retarget(&self, name: &str) -> Result<SeriesFrame, DataError> {
        let idx = self.channel_index(name).ok_or_else(|| DataError::Schema(format!("no channel `{name}`")))?;
        if self.channels[idx].spec.modality != Modality::Ts {
            return Err(DataError::Schema(format!("channel `{name}` is not a ts channel")));
        }
        let channels = self
            .channels
            .iter()
            .enumerate()
            .filter(|(_, c)| c.spec.modality == Modality::Ts)
            .map(|(i, c)| {
                let mut c = c.clone();
                c.spec.role = if i == idx { Role::Target } else { Role::Covariate };
                c.spec.future_known = false;
                c
            })
            .collect();
        SeriesFrame::new(channels, self.first_step)
    }
}
