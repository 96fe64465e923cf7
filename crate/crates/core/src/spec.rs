//! Architecture descriptions.
//!
//! A [`ModelSpec`] fully determines a network: its parameter shapes, its
//! token geometry and its FLOPs count.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOKEN_DIM: usize = 256;
pub const HEAD_DIM: usize = 64;
pub const MLP_HIDDEN: usize = 512;
pub const STEM_CHANNELS: [usize; 6] = [16, 32, 64, 32, 16, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Convolutional stem followed by image coordinate encoding.
    Teacher,
    /// Plain ViT on the raw image, no positional information.
    Student,
    /// Teacher path with 16x16 square patches.
    SquareVariant,
    /// Teacher with the coordinate channels removed.
    TeacherNoIce,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Teacher, Role::Student, Role::SquareVariant, Role::TeacherNoIce];

    pub fn name(self) -> &'static str {
        match self {
            Role::Teacher => "teacher",
            Role::Student => "student",
            Role::SquareVariant => "square_variant",
            Role::TeacherNoIce => "teacher_no_ice",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown role {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positional {
    None,
    ImageCoordinate,
}

impl Positional {
    pub fn name(self) -> &'static str {
        match self {
            Positional::None => "none",
            Positional::ImageCoordinate => "image_coordinate",
        }
    }
}

impl FromStr for Positional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Positional::None),
            "image_coordinate" => Ok(Positional::ImageCoordinate),
            _ => Err(Error::Config(format!("unknown positional encoding {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub role: Role,
    pub image_h: usize,
    pub image_w: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub token_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub head_dim: usize,
    /// Hidden width of the MLP inside each transformer block.
    pub mlp_hidden: usize,
    /// Hidden width of the classifier MLP.
    pub head_hidden: usize,
    /// Output channels of the stem convolutions, last one first into ICE.
    pub stem_channels: Vec<usize>,
    pub use_conv_stem: bool,
    pub positional: Positional,
    pub n_classes: usize,
}

impl ModelSpec {
    fn base(role: Role, depth: usize, heads: usize, n_classes: usize) -> Self {
        let teacher_path = role != Role::Student;
        Self {
            role,
            image_h: 128,
            image_w: 128,
            patch_h: 128,
            patch_w: 1,
            token_dim: TOKEN_DIM,
            depth,
            heads,
            head_dim: HEAD_DIM,
            mlp_hidden: MLP_HIDDEN,
            head_hidden: MLP_HIDDEN,
            stem_channels: if teacher_path { STEM_CHANNELS.to_vec() } else { Vec::new() },
            use_conv_stem: teacher_path,
            positional: match role {
                Role::Teacher | Role::SquareVariant => Positional::ImageCoordinate,
                Role::Student | Role::TeacherNoIce => Positional::None,
            },
            n_classes,
        }
    }

    /// Teacher with the given depth and head count (6/5 or 12/12).
    pub fn teacher(depth: usize, heads: usize, n_classes: usize) -> Self {
        Self::base(Role::Teacher, depth, heads, n_classes)
    }

    /// Student: depth 3, 5 heads.
    pub fn student(n_classes: usize) -> Self {
        Self::base(Role::Student, 3, 5, n_classes)
    }

    /// Teacher path with 16x16 patches.
    pub fn square_variant(depth: usize, heads: usize, n_classes: usize) -> Self {
        Self {
            patch_h: 16,
            patch_w: 16,
            ..Self::base(Role::SquareVariant, depth, heads, n_classes)
        }
    }

    pub fn teacher_no_ice(depth: usize, heads: usize, n_classes: usize) -> Self {
        Self::base(Role::TeacherNoIce, depth, heads, n_classes)
    }

    /// Same spec on a smaller canvas; patches keep spanning the full height
    /// when they did before.
    pub fn with_image(mut self, h: usize, w: usize) -> Self {
        if self.patch_h == self.image_h {
            self.patch_h = h;
        }
        self.image_h = h;
        self.image_w = w;
        self
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.image_h / self.patch_h, self.image_w / self.patch_w)
    }

    pub fn n_tokens(&self) -> usize {
        let (r, c) = self.grid();
        r * c
    }

    /// Channels entering patchify.
    pub fn patch_channels(&self) -> usize {
        let base = if self.use_conv_stem { *self.stem_channels.last().unwrap_or(&1) } else { 1 };
        match self.positional {
            Positional::None => base,
            Positional::ImageCoordinate => base + 2,
        }
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_channels() * self.patch_h * self.patch_w
    }

    pub fn inner_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let positive = [
            ("image_h", self.image_h),
            ("image_w", self.image_w),
            ("patch_h", self.patch_h),
            ("patch_w", self.patch_w),
            ("token_dim", self.token_dim),
            ("depth", self.depth),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
            ("mlp_hidden", self.mlp_hidden),
            ("head_hidden", self.head_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.n_classes < 2 {
            return bad(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        if self.image_h % self.patch_h != 0 || self.image_w % self.patch_w != 0 {
            return bad(format!(
                "patch {}x{} does not tile image {}x{}",
                self.patch_h, self.patch_w, self.image_h, self.image_w
            ));
        }
        let (stem, pos) = match self.role {
            Role::Teacher | Role::SquareVariant => (true, Positional::ImageCoordinate),
            Role::Student => (false, Positional::None),
            Role::TeacherNoIce => (true, Positional::None),
        };
        if self.use_conv_stem != stem || self.positional != pos {
            return bad(format!(
                "{} requires use_conv_stem = {stem} and positional = {}",
                self.role,
                pos.name()
            ));
        }
        if self.use_conv_stem {
            if self.stem_channels.is_empty() || self.stem_channels.contains(&0) {
                return bad("stem_channels must be non-empty and positive".into());
            }
            if self.image_h * self.image_w < 2 {
                return bad("instance norm needs at least two pixels".into());
            }
        } else if !self.stem_channels.is_empty() {
            return bad("stem_channels given without a stem".into());
        }
        Ok(())
    }

    /// Key-value form stored in checkpoint metadata under `model.`.
    pub fn to_metadata(&self) -> BTreeMap<String, String> {
        let stem = self.stem_channels.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        [
            ("role", self.role.name().to_string()),
            ("image_h", self.image_h.to_string()),
            ("image_w", self.image_w.to_string()),
            ("patch_h", self.patch_h.to_string()),
            ("patch_w", self.patch_w.to_string()),
            ("token_dim", self.token_dim.to_string()),
            ("depth", self.depth.to_string()),
            ("heads", self.heads.to_string()),
            ("head_dim", self.head_dim.to_string()),
            ("mlp_hidden", self.mlp_hidden.to_string()),
            ("head_hidden", self.head_hidden.to_string()),
            ("stem_channels", stem),
            ("use_conv_stem", self.use_conv_stem.to_string()),
            ("positional", self.positional.name().to_string()),
            ("n_classes", self.n_classes.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (format!("model.{k}"), v))
        .collect()
    }

    pub fn from_metadata(meta: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| {
            meta.get(&format!("model.{k}"))
                .ok_or_else(|| Error::Checkpoint(format!("metadata lacks model.{k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Checkpoint(format!("model.{k} is not an integer")))
        };
        let stem = get("stem_channels")?;
        let stem_channels = if stem.is_empty() {
            Vec::new()
        } else {
            stem.split(',')
                .map(|c| c.parse().map_err(|_| Error::Checkpoint("bad model.stem_channels".into())))
                .collect::<Result<_>>()?
        };
        let spec = Self {
            role: get("role")?.parse()?,
            image_h: num("image_h")?,
            image_w: num("image_w")?,
            patch_h: num("patch_h")?,
            patch_w: num("patch_w")?,
            token_dim: num("token_dim")?,
            depth: num("depth")?,
            heads: num("heads")?,
            head_dim: num("head_dim")?,
            mlp_hidden: num("mlp_hidden")?,
            head_hidden: num("head_hidden")?,
            stem_channels,
            use_conv_stem: get("use_conv_stem")?
                .parse()
                .map_err(|_| Error::Checkpoint("bad model.use_conv_stem".into()))?,
            positional: get("positional")?.parse()?,
            n_classes: num("n_classes")?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn role_invariants() {
        for spec in [
            ModelSpec::teacher(6, 5, 7),
            ModelSpec::teacher(12, 12, 7),
            ModelSpec::student(7),
            ModelSpec::square_variant(6, 5, 7),
            ModelSpec::teacher_no_ice(6, 5, 7),
        ] {
            spec.validate().unwrap();
        }
        let mut s = ModelSpec::student(7);
        s.positional = Positional::ImageCoordinate;
        assert!(s.validate().is_err());
        let mut t = ModelSpec::teacher(6, 5, 7);
        t.use_conv_stem = false;
        assert!(t.validate().is_err());
    }

    #[test]
    fn patch_must_tile() {
        let mut s = ModelSpec::student(7);
        s.patch_w = 3;
        assert!(s.validate().is_err());
    }

    #[test]
    fn token_geometry() {
        let t = ModelSpec::teacher(6, 5, 7);
        assert_eq!((t.n_tokens(), t.patch_dim()), (128, 384));
        let s = ModelSpec::student(7);
        assert_eq!((s.n_tokens(), s.patch_dim()), (128, 128));
        let q = ModelSpec::square_variant(6, 5, 7);
        assert_eq!((q.n_tokens(), q.patch_dim()), (64, 768));
    }

    #[test]
    fn metadata_round_trip() {
        for spec in [ModelSpec::teacher(6, 5, 7), ModelSpec::student(6).with_image(32, 16)] {
            assert_eq!(ModelSpec::from_metadata(&spec.to_metadata()).unwrap(), spec);
        }
    }
}
