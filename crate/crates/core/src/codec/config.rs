use std::path::PathBuf;
use std::str::FromStr;

use super::CodecError;
use crate::geometry::MAX_BIT_DEPTH;
use crate::grc::RpaNetConfig;
use crate::stagewise::StageNetConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    CartesianLossless,
    SphericalLossy,
}

impl Mode {
    pub fn code(self) -> u8 {
        match self {
            Mode::CartesianLossless => 0,
            Mode::SphericalLossy => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Mode::CartesianLossless),
            1 => Some(Mode::SphericalLossy),
            _ => None,
        }
    }
}

impl FromStr for Mode {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lossless" | "cartesian_lossless" => Ok(Mode::CartesianLossless),
            "lossy" | "spherical_lossy" => Ok(Mode::SphericalLossy),
            other => Err(CodecError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub mode: Mode,
    pub bit_depth: u8,
    /// Fixed residual start level; chosen from the saturation threshold when `None`.
    pub grc_start_level: Option<u8>,
    pub saturation: f64,
    pub stage_net: StageNetConfig,
    pub rpa_net: RpaNetConfig,
    pub checkpoint_dir: Option<PathBuf>,
}

impl CodecConfig {
    pub fn lossless(bit_depth: u8) -> Self {
        Self {
            mode: Mode::CartesianLossless,
            bit_depth,
            grc_start_level: None,
            saturation: 0.99,
            stage_net: StageNetConfig::default(),
            rpa_net: RpaNetConfig::default(),
            checkpoint_dir: None,
        }
    }

    pub fn lossy(bit_depth: u8) -> Self {
        Self {
            mode: Mode::SphericalLossy,
            stage_net: StageNetConfig { kernel_size: 5, ..StageNetConfig::default() },
            ..Self::lossless(bit_depth)
        }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.bit_depth == 0 || self.bit_depth > MAX_BIT_DEPTH {
            return Err(CodecError::Config(format!("bit depth {} outside 1..={MAX_BIT_DEPTH}", self.bit_depth)));
        }
        if let Some(j) = self.grc_start_level {
            if j == 0 || j > self.bit_depth {
                return Err(CodecError::Config(format!("start level {j} outside 1..={}", self.bit_depth)));
            }
        }
        if !(self.saturation > 0.0 && self.saturation <= 1.0) {
            return Err(CodecError::Config(format!("saturation {} outside (0, 1]", self.saturation)));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CodecError> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, CodecError> {
            v.parse().map_err(|_| CodecError::Config(format!("bad value {v:?} for {key}")))
        }
        match key {
            "mode" => self.mode = value.parse()?,
            "depth" | "bit_depth" => self.bit_depth = num(key, value)?,
            "grc_start_level" => {
                self.grc_start_level = if value == "auto" { None } else { Some(num(key, value)?) }
            }
            "saturation" | "tau" => self.saturation = num(key, value)?,
            "channels" => self.stage_net.channels = num(key, value)?,
            "kernel" | "stage_kernel" => self.stage_net.kernel_size = num(key, value)?,
            "share_head" => self.stage_net.share_head = num(key, value)?,
            "rpa_channels" => self.rpa_net.channels = num(key, value)?,
            "rpa_kernel" => self.rpa_net.kernel_size = num(key, value)?,
            "history" => self.rpa_net.history = num(key, value)?,
            "ckpt" | "checkpoint_dir" => self.checkpoint_dir = Some(PathBuf::from(value)),
            other => return Err(CodecError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a line-based `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CodecError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CodecError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_settings() {
        let mut c = CodecConfig::lossless(8);
        c.apply_text("# comment\nmode = lossy\ndepth=12 # trailing\n\ngrc_start_level = 9\nrpa_kernel = 5\n").unwrap();
        assert_eq!(c.mode, Mode::SphericalLossy);
        assert_eq!(c.bit_depth, 12);
        assert_eq!(c.grc_start_level, Some(9));
        assert_eq!(c.rpa_net.kernel_size, 5);
        assert!(c.apply_text("colour = red").is_err());
        assert!(c.apply_text("depth").is_err());
        assert!(c.apply_text("depth = x").is_err());
    }

    #[test]
    fn validation() {
        assert!(CodecConfig::lossless(19).validate().is_err());
        let mut c = CodecConfig::lossless(8);
        c.grc_start_level = Some(9);
        assert!(c.validate().is_err());
        c.grc_start_level = Some(8);
        assert!(c.validate().is_ok());
        c.saturation = 0.0;
        assert!(c.validate().is_err());
        assert_eq!(CodecConfig::lossy(12).stage_net.kernel_size, 5);
    }
}
