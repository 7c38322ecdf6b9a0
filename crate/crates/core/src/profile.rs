//! Code profiles: the complete parameterization of one C3T encoder curve.
//!
//! Even `n` gives a geodesic on the flat torus made of `n/2` circles of
//! radii `r_i` traversed at integer frequencies `w_i`. Odd `n` appends a
//! linear drift `b * alpha` in the last coordinate (a generalized helix).

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;

/// Map from source symbol to curve parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Stretch {
    /// `alpha = pi * s`, the whole period of the curve.
    #[default]
    #[serde(rename = "full")]
    FullCircle,
    /// `alpha = 2 pi s / n`, which keeps every pair phase inside one turn.
    #[serde(rename = "aliasing_safe")]
    AliasingSafe,
}

impl Stretch {
    /// Half-width of the parameter interval used by this stretch for dimension `n`.
    pub fn half_width(self, n: usize) -> f64 {
        match self {
            Stretch::FullCircle => PI,
            Stretch::AliasingSafe => 2.0 * PI / n as f64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileDoc {
    n: usize,
    radii: Vec<f64>,
    frequencies: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(default)]
    stretch: Stretch,
}

/// One C3T code. Construct through [`CodeProfile::new`] or the helpers; every
/// instance in circulation has passed validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileDoc", into = "ProfileDoc")]
pub struct CodeProfile {
    n: usize,
    radii: Vec<f64>,
    frequencies: Vec<u32>,
    b: Option<f64>,
    stretch: Stretch,
}

impl TryFrom<ProfileDoc> for CodeProfile {
    type Error = Error;

    fn try_from(doc: ProfileDoc) -> Result<Self> {
        CodeProfile::new(doc.n, doc.radii, doc.frequencies, doc.b, doc.stretch)
    }
}

impl From<CodeProfile> for ProfileDoc {
    fn from(p: CodeProfile) -> Self {
        ProfileDoc {
            n: p.n,
            radii: p.radii,
            frequencies: p.frequencies,
            b: p.b,
            stretch: p.stretch,
        }
    }
}

impl CodeProfile {
    pub fn new(
        n: usize,
        radii: Vec<f64>,
        frequencies: Vec<u32>,
        b: Option<f64>,
        stretch: Stretch,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidProfile(msg));
        if n < 2 {
            return invalid(format!("dimension must be at least 2, got {n}"));
        }
        let m = n / 2;
        if radii.len() != m {
            return invalid(format!("dimension {n} needs {m} radii, got {}", radii.len()));
        }
        if frequencies.len() != m {
            return invalid(format!(
                "dimension {n} needs {m} frequencies, got {}",
                frequencies.len()
            ));
        }
        if let Some((i, r)) = radii
            .iter()
            .enumerate()
            .find(|(_, r)| !(r.is_finite() && **r > 0.0))
        {
            return invalid(format!("radius r_{} = {r} must be positive", i + 1));
        }
        if frequencies.contains(&0) {
            return invalid("frequencies must be positive integers".into());
        }
        for (i, w) in frequencies.iter().enumerate() {
            if frequencies[..i].contains(w) {
                return invalid(format!("frequency {w} repeated; the curve would not be twisted"));
            }
        }
        let sum_sq: f64 = radii.iter().map(|r| r * r).sum();
        if n.is_multiple_of(2) {
            if b.is_some() {
                return invalid("helix coefficient b is only defined for odd n".into());
            }
            if (sum_sq - 1.0).abs() > NORM_TOL {
                return invalid(format!("sum of squared radii is {sum_sq}, expected 1"));
            }
        } else {
            let b = match b {
                Some(b) if b.is_finite() && b >= 0.0 => b,
                Some(b) => return invalid(format!("helix coefficient b = {b} must be >= 0")),
                None => return invalid("odd n requires the helix coefficient b".into()),
            };
            let power = sum_sq + PI * PI * b * b;
            if power > 1.0 + NORM_TOL {
                return invalid(format!(
                    "sum r_i^2 + pi^2 b^2 = {power} leaves the unit ball"
                ));
            }
        }
        Ok(CodeProfile {
            n,
            radii,
            frequencies,
            b,
            stretch,
        })
    }

    /// Even-`n` profile with the lowest harmonics `w_i = i`.
    pub fn harmonic(radii: Vec<f64>) -> Result<Self> {
        let m = radii.len();
        CodeProfile::new(2 * m, radii, (1..=m as u32).collect(), None, Stretch::FullCircle)
    }

    /// Like [`CodeProfile::harmonic`] but rescales the radii onto the unit sphere
    /// first. Handy for radii printed to four digits.
    pub fn harmonic_normalized(radii: &[f64]) -> Result<Self> {
        let norm = radii.iter().map(|r| r * r).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidProfile("radii have zero norm".into()));
        }
        CodeProfile::harmonic(radii.iter().map(|r| r / norm).collect())
    }

    /// Odd-`n` generalized helix with `w_i = i`.
    pub fn helix(radii: Vec<f64>, b: f64) -> Result<Self> {
        let m = radii.len();
        CodeProfile::new(
            2 * m + 1,
            radii,
            (1..=m as u32).collect(),
            Some(b),
            Stretch::FullCircle,
        )
    }

    pub fn with_stretch(mut self, stretch: Stretch) -> Self {
        self.stretch = stretch;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of cos/sin pairs.
    pub fn pairs(&self) -> usize {
        self.radii.len()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn frequencies(&self) -> &[u32] {
        &self.frequencies
    }

    pub fn helix_coeff(&self) -> Option<f64> {
        self.b
    }

    /// `b` for odd `n`, zero otherwise.
    pub fn drift(&self) -> f64 {
        self.b.unwrap_or(0.0)
    }

    pub fn stretch(&self) -> Stretch {
        self.stretch
    }

    pub fn is_odd(&self) -> bool {
        self.n % 2 == 1
    }

    /// True when `x(alpha + 2 pi) = x(alpha)`.
    pub fn is_periodic(&self) -> bool {
        self.drift() == 0.0
    }

    /// Half-width of the parameter interval reached by the configured stretch.
    pub fn alpha_max(&self) -> f64 {
        self.stretch.half_width(self.n)
    }

    /// Average power per channel use, `E[|x|^2] / n`, with `alpha` uniform
    /// over the stretch image.
    pub fn mean_power(&self) -> f64 {
        let a = self.alpha_max();
        let sum_sq: f64 = self.radii.iter().map(|r| r * r).sum();
        let drift = self.drift();
        (sum_sq + drift * drift * a * a / 3.0) / self.n as f64
    }

    /// Non-fatal remarks about the profile.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.is_odd() && self.drift() == 0.0 {
            out.push("odd-n profile with b = 0 is a planar even-structure curve".to_string());
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}
