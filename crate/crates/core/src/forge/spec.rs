//! Labelled error transforms.

use core::fmt;
use core::str::FromStr;

use rand::Rng as _;

use crate::{rng::Rng, Error, Result};

pub const ROT_XY_RANGE: (f64, f64) = (-50.0, 20.0);
pub const ROT_Z_RANGE: (f64, f64) = (-80.0, 10.0);
pub const TRANSLATION_RANGE: (f64, f64) = (-60.0, 60.0);
pub const SCALE_RANGE: (f64, f64) = (0.9, 1.4);
pub const CONDUCTIVITY_RANGE: (f64, f64) = (0.0, 0.13);

/// Error-source classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorClass {
    RotX,
    RotY,
    RotZ,
    TransX,
    TransY,
    TransZ,
    Scale,
    Inhomogeneity,
    Compound,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 9] = [
        ErrorClass::RotX,
        ErrorClass::RotY,
        ErrorClass::RotZ,
        ErrorClass::TransX,
        ErrorClass::TransY,
        ErrorClass::TransZ,
        ErrorClass::Scale,
        ErrorClass::Inhomogeneity,
        ErrorClass::Compound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::RotX => "rot_x",
            ErrorClass::RotY => "rot_y",
            ErrorClass::RotZ => "rot_z",
            ErrorClass::TransX => "trans_x",
            ErrorClass::TransY => "trans_y",
            ErrorClass::TransZ => "trans_z",
            ErrorClass::Scale => "scale",
            ErrorClass::Inhomogeneity => "inhomogeneity",
            ErrorClass::Compound => "compound",
        }
    }

    /// Position in [`ErrorClass::ALL`]; used as the numeric label id.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::param("label", alloc::format!("unknown error class `{s}`")))
    }
}

/// A perturbation of the base geometry that produced an operator's error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSpec {
    rotation_deg: [f64; 3],
    translation_mm: [f64; 3],
    torso_scale: f64,
    conductivity: f64,
    label: ErrorClass,
}

fn within(name: &'static str, v: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(Error::param(name, alloc::format!("{v} outside [{lo}, {hi}]")))
    }
}

impl ErrorSpec {
    pub fn new(
        rotation_deg: [f64; 3],
        translation_mm: [f64; 3],
        torso_scale: f64,
        conductivity: f64,
        label: ErrorClass,
    ) -> Result<Self> {
        within("rotation_x", rotation_deg[0], ROT_XY_RANGE)?;
        within("rotation_y", rotation_deg[1], ROT_XY_RANGE)?;
        within("rotation_z", rotation_deg[2], ROT_Z_RANGE)?;
        for t in translation_mm {
            within("translation", t, TRANSLATION_RANGE)?;
        }
        within("torso_scale", torso_scale, SCALE_RANGE)?;
        within("conductivity", conductivity, CONDUCTIVITY_RANGE)?;
        Ok(ErrorSpec {
            rotation_deg,
            translation_mm,
            torso_scale,
            conductivity,
            label,
        })
    }

    /// The no-op transform.
    pub fn identity(label: ErrorClass) -> Self {
        ErrorSpec {
            rotation_deg: [0.0; 3],
            translation_mm: [0.0; 3],
            torso_scale: 1.0,
            conductivity: 0.0,
            label,
        }
    }

    /// Uniform draw within the admissible ranges. Single-factor classes
    /// perturb only their own factor; `Compound` perturbs all of them.
    pub fn sample(label: ErrorClass, rng: &mut Rng) -> Self {
        let mut draw = |(lo, hi): (f64, f64)| rng.random_range(lo..=hi);
        let mut spec = ErrorSpec::identity(label);
        match label {
            ErrorClass::RotX => spec.rotation_deg[0] = draw(ROT_XY_RANGE),
            ErrorClass::RotY => spec.rotation_deg[1] = draw(ROT_XY_RANGE),
            ErrorClass::RotZ => spec.rotation_deg[2] = draw(ROT_Z_RANGE),
            ErrorClass::TransX => spec.translation_mm[0] = draw(TRANSLATION_RANGE),
            ErrorClass::TransY => spec.translation_mm[1] = draw(TRANSLATION_RANGE),
            ErrorClass::TransZ => spec.translation_mm[2] = draw(TRANSLATION_RANGE),
            ErrorClass::Scale => spec.torso_scale = draw(SCALE_RANGE),
            ErrorClass::Inhomogeneity => spec.conductivity = draw(CONDUCTIVITY_RANGE),
            ErrorClass::Compound => {
                spec.rotation_deg = [draw(ROT_XY_RANGE), draw(ROT_XY_RANGE), draw(ROT_Z_RANGE)];
                spec.translation_mm = [draw(TRANSLATION_RANGE), draw(TRANSLATION_RANGE), draw(TRANSLATION_RANGE)];
                spec.torso_scale = draw(SCALE_RANGE);
                spec.conductivity = draw(CONDUCTIVITY_RANGE);
            }
        }
        spec
    }

    pub fn rotation_deg(&self) -> [f64; 3] {
        self.rotation_deg
    }

    pub fn translation_mm(&self) -> [f64; 3] {
        self.translation_mm
    }

    pub fn torso_scale(&self) -> f64 {
        self.torso_scale
    }

    pub fn conductivity(&self) -> f64 {
        self.conductivity
    }

    pub fn label(&self) -> ErrorClass {
        self.label
    }
}
