//! Time-varying disturbance fields `d(x, t)` in m/s.
//!
//! Analytic generators (uniform, spinning, vortex) and a gridded snapshot
//! series with bilinear-in-space, linear-in-time interpolation. Queries past
//! the forecast horizon hold the value at the horizon.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec2;

#[derive(Clone, Debug, PartialEq)]
pub enum FieldKind {
    Uniform(Vec2),
    /// Spatially uniform vector of fixed magnitude whose heading turns at
    /// `angular_rate` rad/s, starting along +x.
    Spinning {
        magnitude: f64,
        angular_rate: f64,
    },
    /// Solid-body rotation `strength * rot90(x - c(t))` around a center that
    /// orbits `center` at radius `orbit_radius` with angular rate `angular_rate`.
    Vortex {
        center: Vec2,
        strength: f64,
        angular_rate: f64,
        orbit_radius: f64,
    },
    Gridded(GriddedFieldSeries),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeVaryingField {
    kind: FieldKind,
    horizon: Option<f64>,
    time_shift: f64,
}

pub fn rotate90(v: Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

pub fn make_uniform(velocity: Vec2) -> TimeVaryingField {
    TimeVaryingField::new(FieldKind::Uniform(velocity))
}

pub fn make_spinning(magnitude: f64, angular_rate: f64) -> Result<TimeVaryingField> {
    if !(magnitude >= 0.0 && magnitude.is_finite()) || !angular_rate.is_finite() {
        return Err(Error::InvalidField(format!(
            "spinning field needs magnitude >= 0, got {magnitude}"
        )));
    }
    Ok(TimeVaryingField::new(FieldKind::Spinning {
        magnitude,
        angular_rate,
    }))
}

pub fn make_vortex(
    center: Vec2,
    strength: f64,
    angular_rate: f64,
    orbit_radius: f64,
) -> Result<TimeVaryingField> {
    if !(strength >= 0.0 && strength.is_finite()) || !angular_rate.is_finite() {
        return Err(Error::InvalidField(format!(
            "vortex field needs strength >= 0, got {strength}"
        )));
    }
    if !(orbit_radius >= 0.0 && orbit_radius.is_finite()) {
        return Err(Error::InvalidField(format!(
            "orbit radius must be >= 0, got {orbit_radius}"
        )));
    }
    Ok(TimeVaryingField::new(FieldKind::Vortex {
        center,
        strength,
        angular_rate,
        orbit_radius,
    }))
}

impl TimeVaryingField {
    pub fn new(kind: FieldKind) -> Self {
        let horizon = match &kind {
            FieldKind::Gridded(series) => Some(series.last_time()),
            _ => None,
        };
        TimeVaryingField {
            kind,
            horizon,
            time_shift: 0.0,
        }
    }

    /// Limits the forecast horizon; later queries see the field at `horizon`.
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    /// Delays the whole field by `shift` seconds: `query(x, t)` evaluates the
    /// unshifted field at `t - shift`.
    pub fn with_time_shift(mut self, shift: f64) -> Self {
        self.time_shift = shift;
        self
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn horizon(&self) -> Option<f64> {
        self.horizon
    }

    /// True when the field does not depend on time.
    pub fn is_static(&self) -> bool {
        match &self.kind {
            FieldKind::Uniform(_) => true,
            FieldKind::Spinning {
                magnitude,
                angular_rate,
            } => *magnitude == 0.0 || *angular_rate == 0.0,
            FieldKind::Vortex {
                strength,
                angular_rate,
                orbit_radius,
                ..
            } => *strength == 0.0 || *angular_rate == 0.0 || *orbit_radius == 0.0,
            FieldKind::Gridded(series) => series.is_constant(),
        }
    }

    pub fn query(&self, x: Vec2, t: f64) -> Vec2 {
        let mut t = t - self.time_shift;
        if let Some(h) = self.horizon {
            t = t.min(h);
        }
        match &self.kind {
            FieldKind::Uniform(v) => *v,
            FieldKind::Spinning {
                magnitude,
                angular_rate,
            } => {
                let phase = angular_rate * t;
                Vec2::new(phase.cos(), phase.sin()) * *magnitude
            }
            FieldKind::Vortex {
                center,
                strength,
                angular_rate,
                orbit_radius,
            } => {
                let c = vortex_center(*center, *angular_rate, *orbit_radius, t);
                rotate90(x - c) * *strength
            }
            FieldKind::Gridded(series) => series.interpolate(x, t),
        }
    }
}

pub fn vortex_center(center: Vec2, angular_rate: f64, orbit_radius: f64, t: f64) -> Vec2 {
    if orbit_radius == 0.0 {
        return center;
    }
    let phase = angular_rate * t;
    center + Vec2::new(phase.cos(), phase.sin()) * orbit_radius
}

/// One forecast snapshot: per-cell velocity components, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// On-disk layout of a field file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldFile {
    width: usize,
    height: usize,
    cell_size: f64,
    snapshots: Vec<Snapshot>,
}

/// Gridded velocity snapshots over the cell centers of a grid.
///
/// The cell (0, 0) center sits at `origin`; field files always use
/// `origin = (cell_size / 2, cell_size / 2)`, matching [`crate::GridWorld::square`].
#[derive(Clone, Debug, PartialEq)]
pub struct GriddedFieldSeries {
    width: usize,
    height: usize,
    cell_size: f64,
    origin: Vec2,
    snapshots: Vec<Snapshot>,
}

impl GriddedFieldSeries {
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        origin: Vec2,
        snapshots: Vec<Snapshot>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidField(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidField(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if snapshots.len() < 2 {
            return Err(Error::InvalidField(format!(
                "at least 2 snapshots are required, got {}",
                snapshots.len()
            )));
        }
        let cells = width * height;
        for (i, snap) in snapshots.iter().enumerate() {
            if snap.u.len() != cells || snap.v.len() != cells {
                return Err(Error::InvalidField(format!(
                    "snapshot {i}: expected {cells} values per component for a {width}x{height} grid, got u={} v={}",
                    snap.u.len(),
                    snap.v.len()
                )));
            }
            if !snap.t.is_finite() || snap.u.iter().chain(&snap.v).any(|x| !x.is_finite()) {
                return Err(Error::InvalidField(format!(
                    "snapshot {i}: non-finite value"
                )));
            }
            if i > 0 && snap.t <= snapshots[i - 1].t {
                return Err(Error::InvalidField(format!(
                    "snapshot {i}: timestamps must be strictly increasing ({} after {})",
                    snap.t,
                    snapshots[i - 1].t
                )));
            }
        }
        Ok(GriddedFieldSeries {
            width,
            height,
            cell_size,
            origin,
            snapshots,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: FieldFile = serde_json::from_str(text)?;
        let origin = Vec2::repeat(file.cell_size / 2.0);
        Self::new(
            file.width,
            file.height,
            file.cell_size,
            origin,
            file.snapshots,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let file = FieldFile {
            width: self.width,
            height: self.height,
            cell_size: self.cell_size,
            snapshots: self.snapshots.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn first_time(&self) -> f64 {
        self.snapshots[0].t
    }

    pub fn last_time(&self) -> f64 {
        self.snapshots[self.snapshots.len() - 1].t
    }

    fn is_constant(&self) -> bool {
        let first = &self.snapshots[0];
        self.snapshots[1..]
            .iter()
            .all(|s| s.u == first.u && s.v == first.v)
    }

    /// Bilinear over cell centers, linear between bracketing snapshots.
    /// Times outside the snapshot range hold the first/last snapshot.
    pub fn interpolate(&self, x: Vec2, t: f64) -> Vec2 {
        let snaps = &self.snapshots;
        let t = t.clamp(self.first_time(), self.last_time());
        // First snapshot with time > t; the bracket is [k-1, k].
        let k = snaps.partition_point(|s| s.t <= t);
        if k == 0 {
            return self.spatial(&snaps[0], x);
        }
        let lo = &snaps[k - 1];
        if k == snaps.len() || lo.t == t {
            return self.spatial(lo, x);
        }
        let hi = &snaps[k];
        let w = (t - lo.t) / (hi.t - lo.t);
        self.spatial(lo, x) * (1.0 - w) + self.spatial(hi, x) * w
    }

    fn axis(&self, coord: f64, origin: f64, n: usize) -> (usize, usize, f64) {
        let mut f = ((coord - origin) / self.cell_size).clamp(0.0, (n - 1) as f64);
        let r = f.round();
        if (f - r).abs() < 1e-9 {
            f = r;
        }
        let i0 = f.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, f - i0 as f64)
    }

    fn spatial(&self, snap: &Snapshot, x: Vec2) -> Vec2 {
        let (c0, c1, wx) = self.axis(x.x, self.origin.x, self.width);
        let (r0, r1, wy) = self.axis(x.y, self.origin.y, self.height);
        let at = |c: usize, r: usize| {
            let i = r * self.width + c;
            Vec2::new(snap.u[i], snap.v[i])
        };
        if wx == 0.0 && wy == 0.0 {
            return at(c0, r0);
        }
        let bottom = at(c0, r0) * (1.0 - wx) + at(c1, r0) * wx;
        let top = at(c0, r1) * (1.0 - wx) + at(c1, r1) * wx;
        bottom * (1.0 - wy) + top * wy
    }
}

/// Serializable description of a field, as found in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldModelSpec {
    Uniform {
        velocity: [f64; 2],
    },
    Spinning {
        magnitude: f64,
        angular_rate: f64,
    },
    Vortex {
        center: [f64; 2],
        strength: f64,
        angular_rate: f64,
        #[serde(default)]
        orbit_radius: f64,
    },
    /// Field file (JSON); relative paths resolve against the config file's directory.
    File {
        path: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub model: FieldModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub time_shift: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl FieldSpec {
    pub fn build(&self, base_dir: &Path) -> Result<TimeVaryingField> {
        let field = match &self.model {
            FieldModelSpec::Uniform { velocity } => make_uniform(Vec2::from(*velocity)),
            FieldModelSpec::Spinning {
                magnitude,
                angular_rate,
            } => make_spinning(*magnitude, *angular_rate)?,
            FieldModelSpec::Vortex {
                center,
                strength,
                angular_rate,
                orbit_radius,
            } => make_vortex(Vec2::from(*center), *strength, *angular_rate, *orbit_radius)?,
            FieldModelSpec::File { path } => {
                let p = base_dir.join(path);
                let series = GriddedFieldSeries::load(&p)
                    .map_err(|e| Error::InvalidField(format!("{}: {e}", p.display())))?;
                TimeVaryingField::new(FieldKind::Gridded(series))
            }
        };
        let field = match self.horizon {
            Some(h) => field.with_horizon(h),
            None => field,
        };
        Ok(field.with_time_shift(self.time_shift))
    }
}
