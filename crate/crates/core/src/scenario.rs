//! Mission scenarios: fleet, radio parameters, waypoints and limits.
//!
//! Scenarios are read from and written to a single JSON document (see
//! `docs/scenario-schema.md`). Waypoints are either listed explicitly or
//! generated from a terrain description with [`generate_waypoints`].
//!
//! Node ids are zero-based: start points occupy `0..S`, waypoints `S..S+W`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::units;

pub const SCHEMA: &str = "fanet-scenario/1";

pub const DEFAULT_CARRIER_HZ: f64 = 5.8e9;
pub const DEFAULT_SPEED_MPS: f64 = 10.0;
pub const DEFAULT_SUBSAMPLES: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct RadioParams {
    pub carrier_frequency_hz: f64,
    pub bandwidth_hz: f64,
    /// Total receive noise power (sigma^2 B), W.
    pub noise_power_w: f64,
    /// Receive sensitivity threshold gamma, W.
    pub sensitivity_w: f64,
    /// Free-space constant mu_f.
    pub mu_f: f64,
}

impl RadioParams {
    /// Radio with `mu_f` derived from the carrier frequency.
    pub fn from_carrier(carrier_hz: f64, bandwidth_hz: f64, noise_power_w: f64, sensitivity_w: f64) -> Self {
        Self {
            carrier_frequency_hz: carrier_hz,
            bandwidth_hz,
            noise_power_w,
            sensitivity_w,
            mu_f: units::free_space_constant(carrier_hz),
        }
    }

    /// 5.8 GHz carrier, 83.5 MHz bandwidth, -110 dBm noise, -70 dBm sensitivity.
    pub fn default_fanet() -> Self {
        Self::from_carrier(DEFAULT_CARRIER_HZ, 83.5e6, units::dbm_to_w(-110.0), units::dbm_to_w(-70.0))
    }

    fn validate(&self) -> Result<()> {
        positive("radio.carrier_frequency_hz", self.carrier_frequency_hz)?;
        positive("radio.bandwidth_hz", self.bandwidth_hz)?;
        positive("radio.noise_power_w", self.noise_power_w)?;
        positive("radio.sensitivity_w", self.sensitivity_w)?;
        positive("radio.mu_f", self.mu_f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UavSpec {
    pub id: usize,
    /// Index into [`Scenario::start_points`].
    pub start_point: usize,
    pub speed_mps: f64,
    pub t_max_s: f64,
    pub p_max_w: f64,
    pub e_max_j: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub uavs: Vec<UavSpec>,
    pub start_points: Vec<Point3>,
    pub waypoints: Vec<Point3>,
    pub radio: RadioParams,
    pub k_min: usize,
    pub delta: usize,
    pub l_max_m: f64,
    pub d_min_m: f64,
    pub n_slots: usize,
    /// Interior samples per slot used for collision and connectivity checks.
    pub subsamples_per_slot: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn num_uavs(&self) -> usize {
        self.uavs.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.start_points.len() + self.waypoints.len()
    }

    /// Coordinates of all nodes, start points first.
    pub fn nodes(&self) -> Vec<Point3> {
        self.start_points.iter().chain(self.waypoints.iter()).copied().collect()
    }

    pub fn node(&self, id: usize) -> Point3 {
        let s = self.start_points.len();
        if id < s {
            self.start_points[id]
        } else {
            self.waypoints[id - s]
        }
    }

    pub fn is_waypoint(&self, id: usize) -> bool {
        id >= self.start_points.len() && id < self.num_nodes()
    }

    /// Slot duration: the longest flight budget split into `n_slots` slots.
    pub fn slot_duration(&self) -> f64 {
        let horizon = self.uavs.iter().map(|u| u.t_max_s).fold(0.0, f64::max);
        horizon / self.n_slots as f64
    }

    pub fn max_range(&self, uav: usize) -> f64 {
        (self.uavs[uav].p_max_w * self.radio.mu_f / self.radio.sensitivity_w).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.uavs.len();
        if a < 2 {
            return Err(Error::validation("uavs", format!("need at least 2 UAVs, got {a}")));
        }
        if self.start_points.is_empty() {
            return Err(Error::validation("start_points", "no start points"));
        }
        if self.waypoints.is_empty() {
            return Err(Error::validation("waypoints", "no waypoints"));
        }
        for (i, p) in self.start_points.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::validation(format!("start_points[{i}]"), "non-finite coordinate"));
            }
        }
        for (i, p) in self.waypoints.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::validation(format!("waypoints[{i}]"), "non-finite coordinate"));
            }
        }
        for (i, u) in self.uavs.iter().enumerate() {
            if u.id != i {
                return Err(Error::validation(format!("uavs[{i}].id"), "ids must equal list positions"));
            }
            if u.start_point >= self.start_points.len() {
                return Err(Error::validation(
                    format!("uavs[{i}].start_point"),
                    format!("index {} out of range (S = {})", u.start_point, self.start_points.len()),
                ));
            }
            positive(&format!("uavs[{i}].speed_mps"), u.speed_mps)?;
            positive(&format!("uavs[{i}].t_max_s"), u.t_max_s)?;
            positive(&format!("uavs[{i}].p_max_w"), u.p_max_w)?;
            positive(&format!("uavs[{i}].e_max_j"), u.e_max_j)?;
        }
        self.radio.validate()?;
        if self.k_min < 1 || self.k_min > a - 1 {
            return Err(Error::validation(
                "limits.k_min",
                format!("must satisfy 1 <= k_min <= A-1 = {}, got {}", a - 1, self.k_min),
            ));
        }
        if self.n_slots < 1 {
            return Err(Error::validation("limits.n_slots", "must be at least 1"));
        }
        positive("limits.l_max_m", self.l_max_m)?;
        if !(self.d_min_m.is_finite() && self.d_min_m >= 0.0) {
            return Err(Error::validation("limits.d_min_m", "must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawScenario = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let scenario = raw.into_scenario()?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawScenario::from(self);
        let mut s = serde_json::to_string_pretty(&raw).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_json_str(&text)
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be finite and > 0, got {v}")))
    }
}

// ---------------------------------------------------------------------------
// Terrain and waypoint generation
// ---------------------------------------------------------------------------

/// Elevation samples on a regular grid plus camera footprint parameters.
///
/// `elevation[j][i]` is the height at `x = i * extent_x / (nx - 1)`,
/// `y = j * extent_y / (ny - 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainGrid {
    pub extent_x_m: f64,
    pub extent_y_m: f64,
    pub elevation_m: Vec<Vec<f64>>,
    pub footprint_length_m: f64,
    pub footprint_width_m: f64,
    pub overlap_h: f64,
    pub overlap_v: f64,
    pub standoff_m: f64,
}

impl TerrainGrid {
    /// Samples `height(x, y)` every `resolution` metres (at least 2 samples per axis).
    pub fn from_fn(
        extent_x: f64,
        extent_y: f64,
        resolution: f64,
        height: impl Fn(f64, f64) -> f64,
    ) -> TerrainBuilder {
        let nx = ((extent_x / resolution).round() as usize).max(1) + 1;
        let ny = ((extent_y / resolution).round() as usize).max(1) + 1;
        let elevation = (0..ny)
            .map(|j| {
                let y = j as f64 * extent_y / (ny - 1) as f64;
                (0..nx).map(|i| height(i as f64 * extent_x / (nx - 1) as f64, y)).collect()
            })
            .collect();
        TerrainBuilder { extent_x, extent_y, elevation }
    }

    pub fn nx(&self) -> usize {
        self.elevation_m.first().map_or(0, Vec::len)
    }

    pub fn ny(&self) -> usize {
        self.elevation_m.len()
    }

    fn cell(&self) -> (f64, f64) {
        (self.extent_x_m / (self.nx() - 1) as f64, self.extent_y_m / (self.ny() - 1) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |field: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must lie in (0, 1), got {v}")))
            }
        };
        in_unit("terrain.overlap_h", self.overlap_h)?;
        in_unit("terrain.overlap_v", self.overlap_v)?;
        positive("terrain.standoff_m", self.standoff_m)?;
        positive("terrain.footprint_length_m", self.footprint_length_m)?;
        positive("terrain.footprint_width_m", self.footprint_width_m)?;
        if !(self.extent_x_m.is_finite() && self.extent_x_m > 0.0 && self.extent_y_m.is_finite() && self.extent_y_m > 0.0) {
            return Err(Error::DegenerateTerrain(format!(
                "extent {} x {} m has zero area",
                self.extent_x_m, self.extent_y_m
            )));
        }
        let nx = self.nx();
        if nx < 2 || self.ny() < 2 {
            return Err(Error::DegenerateTerrain("elevation grid needs at least 2x2 samples".into()));
        }
        for (j, row) in self.elevation_m.iter().enumerate() {
            if row.len() != nx {
                return Err(Error::DegenerateTerrain(format!("elevation row {j} has {} samples, expected {nx}", row.len())));
            }
            if let Some(i) = row.iter().position(|z| !z.is_finite()) {
                return Err(Error::DegenerateTerrain(format!("non-finite elevation at row {j}, column {i}")));
            }
        }
        Ok(())
    }

    /// Bilinear interpolation of the elevation samples.
    pub fn elevation_at(&self, x: f64, y: f64) -> f64 {
        bilinear(&self.elevation_m, self.cell(), x, y)
    }

    /// Elevation gradient `(dz/dx, dz/dy)`: central differences at grid
    /// nodes (one-sided at the boundary), bilinearly interpolated.
    pub fn gradient_at(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = self.cell();
        let (nx, ny) = (self.nx(), self.ny());
        let z = &self.elevation_m;
        let node = |i: usize, j: usize| {
            let (il, ih) = (i.saturating_sub(1), (i + 1).min(nx - 1));
            let (jl, jh) = (j.saturating_sub(1), (j + 1).min(ny - 1));
            (
                (z[j][ih] - z[j][il]) / ((ih - il) as f64 * dx),
                (z[jh][i] - z[jl][i]) / ((jh - jl) as f64 * dy),
            )
        };
        let fx = (x / dx).clamp(0.0, (nx - 1) as f64);
        let fy = (y / dy).clamp(0.0, (ny - 1) as f64);
        let i = (fx.floor() as usize).min(nx - 2);
        let j = (fy.floor() as usize).min(ny - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let corners = [(node(i, j), (1.0 - tx) * (1.0 - ty)), (node(i + 1, j), tx * (1.0 - ty)), (node(i, j + 1), (1.0 - tx) * ty), (node(i + 1, j + 1), tx * ty)];
        corners.iter().fold((0.0, 0.0), |(gx, gy), &((cx, cy), w)| (gx + w * cx, gy + w * cy))
    }

    /// Upward unit surface normal.
    pub fn normal_at(&self, x: f64, y: f64) -> Result<Point3> {
        let (gx, gy) = self.gradient_at(x, y);
        let n = Point3::new(-gx, -gy, 1.0);
        let len = n.norm();
        if !len.is_finite() || len == 0.0 {
            return Err(Error::DegenerateTerrain(format!("undefined surface normal at ({x}, {y})")));
        }
        Ok(n * (1.0 / len))
    }
}

/// Elevation grid awaiting camera parameters; see [`TerrainGrid::from_fn`].
pub struct TerrainBuilder {
    extent_x: f64,
    extent_y: f64,
    elevation: Vec<Vec<f64>>,
}

impl TerrainBuilder {
    pub fn camera(self, footprint_length: f64, footprint_width: f64, overlap_h: f64, overlap_v: f64, standoff: f64) -> TerrainGrid {
        TerrainGrid {
            extent_x_m: self.extent_x,
            extent_y_m: self.extent_y,
            elevation_m: self.elevation,
            footprint_length_m: footprint_length,
            footprint_width_m: footprint_width,
            overlap_h,
            overlap_v,
            standoff_m: standoff,
        }
    }
}

fn bilinear(grid: &[Vec<f64>], (dx, dy): (f64, f64), x: f64, y: f64) -> f64 {
    let (nx, ny) = (grid[0].len(), grid.len());
    let fx = (x / dx).clamp(0.0, (nx - 1) as f64);
    let fy = (y / dy).clamp(0.0, (ny - 1) as f64);
    let i = (fx.floor() as usize).min(nx - 2);
    let j = (fy.floor() as usize).min(ny - 2);
    let (tx, ty) = (fx - i as f64, fy - j as f64);
    let top = grid[j][i] * (1.0 - tx) + grid[j][i + 1] * tx;
    let bottom = grid[j + 1][i] * (1.0 - tx) + grid[j + 1][i + 1] * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Number of equal cells of size at most `spacing` covering `length`.
fn cell_count(length: f64, spacing: f64) -> usize {
    ((length / spacing - 1e-9).ceil() as usize).max(1)
}

/// Camera waypoints covering the terrain.
///
/// Columns are spaced `(1 - overlap_h) * L_cam` apart across x. Within each
/// column, rows are spaced `(1 - overlap_v) * W_cam` apart in surface arc
/// length along y, so steep columns get more rows. Each waypoint sits
/// `standoff` metres along the surface normal from its foot point.
/// Ordering is row-major (row outer, column inner).
pub fn generate_waypoints(terrain: &TerrainGrid) -> Result<Vec<Point3>> {
    terrain.validate()?;
    let spacing_h = (1.0 - terrain.overlap_h) * terrain.footprint_length_m;
    let spacing_v = (1.0 - terrain.overlap_v) * terrain.footprint_width_m;
    let cols = cell_count(terrain.extent_x_m, spacing_h);

    // Per column: foot-point y coordinates at equal arc-length steps.
    let profile_samples = (terrain.ny() * 8).max(512);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(cols);
    for i in 0..cols {
        let x = (i as f64 + 0.5) * terrain.extent_x_m / cols as f64;
        let step = terrain.extent_y_m / profile_samples as f64;
        let mut arc = Vec::with_capacity(profile_samples + 1);
        arc.push(0.0);
        let mut z_prev = terrain.elevation_at(x, 0.0);
        for k in 1..=profile_samples {
            let z = terrain.elevation_at(x, k as f64 * step);
            let last = *arc.last().unwrap();
            arc.push(last + (step * step + (z - z_prev).powi(2)).sqrt());
            z_prev = z;
        }
        let total = arc[profile_samples];
        let rows = cell_count(total, spacing_v);
        let ys = (0..rows)
            .map(|j| {
                let target = (j as f64 + 0.5) * total / rows as f64;
                let k = arc.partition_point(|&s| s < target).clamp(1, profile_samples);
                let t = (target - arc[k - 1]) / (arc[k] - arc[k - 1]);
                (k as f64 - 1.0 + t) * step
            })
            .collect();
        columns.push(ys);
    }

    let max_rows = columns.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::new();
    for j in 0..max_rows {
        for (i, ys) in columns.iter().enumerate() {
            let Some(&y) = ys.get(j) else { continue };
            let x = (i as f64 + 0.5) * terrain.extent_x_m / cols as f64;
            let foot = Point3::new(x, y, terrain.elevation_at(x, y));
            let normal = terrain.normal_at(x, y)?;
            out.push(foot + normal * terrain.standoff_m);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema: Option<String>,
    #[serde(default)]
    seed: u64,
    uavs: Vec<RawUav>,
    start_points: Vec<Point3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    waypoints: Option<Vec<Point3>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terrain: Option<RawTerrain>,
    radio: RawRadio,
    limits: RawLimits,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUav {
    start_point: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed_mps: Option<f64>,
    t_max_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_max_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_max_dbm: Option<f64>,
    e_max_j: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRadio {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    carrier_frequency_hz: Option<f64>,
    bandwidth_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_power_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sensitivity_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sensitivity_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu_f: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLimits {
    k_min: usize,
    delta: usize,
    l_max_m: f64,
    #[serde(default)]
    d_min_m: f64,
    n_slots: usize,
    #[serde(default = "default_subsamples")]
    subsamples_per_slot: usize,
}

fn default_subsamples() -> usize {
    DEFAULT_SUBSAMPLES
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerrain {
    extent_x_m: f64,
    extent_y_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    elevation_m: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    synthetic: Option<SyntheticSurface>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resolution_m: Option<f64>,
    footprint_length_m: f64,
    footprint_width_m: f64,
    overlap_h: f64,
    overlap_v: f64,
    standoff_m: f64,
}

/// Analytic surfaces accepted in place of an elevation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticSurface {
    Flat { z_m: f64 },
    GaussianHill { base_m: f64, height_m: f64, sigma_m: f64, center_m: [f64; 2] },
}

impl SyntheticSurface {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        match *self {
            SyntheticSurface::Flat { z_m } => z_m,
            SyntheticSurface::GaussianHill { base_m, height_m, sigma_m, center_m } => {
                let r2 = (x - center_m[0]).powi(2) + (y - center_m[1]).powi(2);
                base_m + height_m * (-r2 / (2.0 * sigma_m * sigma_m)).exp()
            }
        }
    }
}

fn one_of(field: &str, w: Option<f64>, dbm: Option<f64>) -> Result<f64> {
    match (w, dbm) {
        (Some(w), None) => Ok(w),
        (None, Some(dbm)) => Ok(units::dbm_to_w(dbm)),
        (Some(_), Some(_)) => Err(Error::validation(field, "give either the _w or the _dbm form, not both")),
        (None, None) => Err(Error::validation(field, "missing (expected a _w or _dbm key)")),
    }
}

impl RawTerrain {
    fn into_grid(self) -> Result<TerrainGrid> {
        let builder = match (self.elevation_m, self.synthetic) {
            (Some(elevation), None) => TerrainBuilder { extent_x: self.extent_x_m, extent_y: self.extent_y_m, elevation },
            (None, Some(surface)) => {
                let res = self.resolution_m.unwrap_or(self.extent_x_m.min(self.extent_y_m) / 100.0);
                positive("terrain.resolution_m", res)?;
                TerrainGrid::from_fn(self.extent_x_m, self.extent_y_m, res, |x, y| surface.height(x, y))
            }
            _ => {
                return Err(Error::validation("terrain", "give exactly one of `elevation_m` or `synthetic`"));
            }
        };
        Ok(builder.camera(self.footprint_length_m, self.footprint_width_m, self.overlap_h, self.overlap_v, self.standoff_m))
    }
}

impl RawScenario {
    fn into_scenario(self) -> Result<Scenario> {
        if let Some(schema) = &self.schema {
            if schema != SCHEMA {
                return Err(Error::validation("schema", format!("unsupported schema `{schema}`, expected `{SCHEMA}`")));
            }
        }
        let waypoints = match (self.waypoints, self.terrain) {
            (Some(w), None) => w,
            (None, Some(t)) => generate_waypoints(&t.into_grid()?)?,
            _ => return Err(Error::validation("waypoints", "give exactly one of `waypoints` or `terrain`")),
        };
        let r = self.radio;
        let carrier = r.carrier_frequency_hz.unwrap_or(DEFAULT_CARRIER_HZ);
        let radio = RadioParams {
            carrier_frequency_hz: carrier,
            bandwidth_hz: r.bandwidth_hz,
            noise_power_w: one_of("radio.noise_power", r.noise_power_w, r.noise_power_dbm)?,
            sensitivity_w: one_of("radio.sensitivity", r.sensitivity_w, r.sensitivity_dbm)?,
            mu_f: r.mu_f.unwrap_or_else(|| units::free_space_constant(carrier)),
        };
        let uavs = self
            .uavs
            .into_iter()
            .enumerate()
            .map(|(i, u)| {
                Ok(UavSpec {
                    id: i,
                    start_point: u.start_point,
                    speed_mps: u.speed_mps.unwrap_or(DEFAULT_SPEED_MPS),
                    t_max_s: u.t_max_s,
                    p_max_w: one_of(&format!("uavs[{i}].p_max"), u.p_max_w, u.p_max_dbm)?,
                    e_max_j: u.e_max_j,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scenario {
            uavs,
            start_points: self.start_points,
            waypoints,
            radio,
            k_min: self.limits.k_min,
            delta: self.limits.delta,
            l_max_m: self.limits.l_max_m,
            d_min_m: self.limits.d_min_m,
            n_slots: self.limits.n_slots,
            subsamples_per_slot: self.limits.subsamples_per_slot,
            seed: self.seed,
        })
    }
}

impl From<&Scenario> for RawScenario {
    fn from(s: &Scenario) -> Self {
        RawScenario {
            schema: Some(SCHEMA.to_string()),
            seed: s.seed,
            uavs: s
                .uavs
                .iter()
                .map(|u| RawUav {
                    start_point: u.start_point,
                    speed_mps: Some(u.speed_mps),
                    t_max_s: u.t_max_s,
                    p_max_w: Some(u.p_max_w),
                    p_max_dbm: None,
                    e_max_j: u.e_max_j,
                })
                .collect(),
            start_points: s.start_points.clone(),
            waypoints: Some(s.waypoints.clone()),
            terrain: None,
            radio: RawRadio {
                carrier_frequency_hz: Some(s.radio.carrier_frequency_hz),
                bandwidth_hz: s.radio.bandwidth_hz,
                noise_power_w: Some(s.radio.noise_power_w),
                noise_power_dbm: None,
                sensitivity_w: Some(s.radio.sensitivity_w),
                sensitivity_dbm: None,
                mu_f: Some(s.radio.mu_f),
            },
            limits: RawLimits {
                k_min: s.k_min,
                delta: s.delta,
                l_max_m: s.l_max_m,
                d_min_m: s.d_min_m,
                n_slots: s.n_slots,
                subsamples_per_slot: s.subsamples_per_slot,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(extent: f64, cam: f64, overlap: f64) -> TerrainGrid {
        TerrainGrid::from_fn(extent, extent, 5.0, |_, _| 0.0).camera(cam, cam, overlap, overlap, 30.0)
    }

    fn sample_json() -> String {
        r#"{
            "seed": 3,
            "uavs": [
                {"start_point": 0, "t_max_s": 200, "p_max_dbm": 27, "e_max_j": 150},
                {"start_point": 1, "t_max_s": 210, "p_max_w": 1.0, "e_max_j": 160},
                {"start_point": 2, "t_max_s": 220, "p_max_dbm": 28, "e_max_j": 170},
                {"start_point": 3, "t_max_s": 230, "p_max_dbm": 29, "e_max_j": 180}
            ],
            "start_points": [[0,0,30],[10,0,30],[0,10,30],[10,10,30]],
            "waypoints": [[50,50,30],[60,50,30]],
            "radio": {"bandwidth_hz": 83.5e6, "noise_power_dbm": -110, "sensitivity_dbm": -70},
            "limits": {"k_min": 2, "delta": 2, "l_max_m": 40000, "d_min_m": 2, "n_slots": 50}
        }"#
        .to_string()
    }

    #[test]
    fn flat_terrain_grid() {
        let wps = generate_waypoints(&flat(100.0, 20.0, 0.5)).unwrap();
        assert_eq!(wps.len(), 100);
        for w in &wps {
            assert!((w.z - 30.0).abs() < 1e-9);
        }
        assert!((wps[1].x - wps[0].x - 10.0).abs() < 1e-9);
        assert!((wps[10].y - wps[0].y - 10.0).abs() < 1e-9);
        // row-major: first row shares y
        assert!(wps[..10].iter().all(|w| (w.y - wps[0].y).abs() < 1e-9));
    }

    #[test]
    fn zero_overlap_limit() {
        let wps = generate_waypoints(&flat(100.0, 20.0, 1e-12)).unwrap();
        assert_eq!(wps.len(), 25);
        assert!((wps[1].x - wps[0].x - 20.0).abs() < 1e-6);
    }

    #[test]
    fn overlap_bounds_enforced() {
        let mut t = flat(100.0, 20.0, 0.5);
        t.overlap_h = 1.0;
        assert!(matches!(generate_waypoints(&t), Err(Error::Validation { field, .. }) if field == "terrain.overlap_h"));
    }

    #[test]
    fn degenerate_terrain_rejected() {
        let mut t = flat(100.0, 20.0, 0.5);
        t.elevation_m = vec![vec![0.0, 0.0]];
        assert!(matches!(generate_waypoints(&t), Err(Error::DegenerateTerrain(_))));
        let mut t = flat(100.0, 20.0, 0.5);
        t.elevation_m[3][4] = f64::NAN;
        assert!(matches!(generate_waypoints(&t), Err(Error::DegenerateTerrain(_))));
    }

    #[test]
    fn parse_mixed_units() {
        let s = Scenario::from_json_str(&sample_json()).unwrap();
        assert_eq!(s.num_uavs(), 4);
        assert!((s.uavs[0].p_max_w - 0.501_187_233_627_272_2).abs() < 1e-12);
        assert_eq!(s.uavs[1].p_max_w, 1.0);
        assert_eq!(s.uavs[0].speed_mps, DEFAULT_SPEED_MPS);
        assert!((s.radio.mu_f - units::free_space_constant(5.8e9)).abs() < 1e-20);
        assert_eq!(s.subsamples_per_slot, DEFAULT_SUBSAMPLES);
    }

    #[test]
    fn k_min_equal_to_fleet_size_rejected() {
        let text = sample_json().replace("\"k_min\": 2", "\"k_min\": 4");
        match Scenario::from_json_str(&text) {
            Err(Error::Validation { field, .. }) => assert!(field.contains("k_min"), "{field}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn negative_bandwidth_rejected() {
        let text = sample_json().replace("83.5e6", "-83.5e6");
        match Scenario::from_json_str(&text) {
            Err(Error::Validation { field, .. }) => assert!(field.starts_with("radio.bandwidth"), "{field}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(Scenario::from_json_str("{\"uavs\": ["), Err(Error::Parse(_))));
        let unknown = sample_json().replace("\"seed\": 3", "\"seed\": 3, \"bogus\": 1");
        assert!(matches!(Scenario::from_json_str(&unknown), Err(Error::Parse(_))));
    }

    #[test]
    fn both_unit_forms_rejected() {
        let text = sample_json().replace("\"p_max_w\": 1.0", "\"p_max_w\": 1.0, \"p_max_dbm\": 30");
        assert!(matches!(Scenario::from_json_str(&text), Err(Error::Validation { .. })));
    }

    #[test]
    fn terrain_section_generates_waypoints() {
        let text = sample_json().replace(
            "\"waypoints\": [[50,50,30],[60,50,30]]",
            r#""terrain": {"extent_x_m": 100, "extent_y_m": 100, "synthetic": {"kind": "flat", "z_m": 0},
                "footprint_length_m": 20, "footprint_width_m": 20, "overlap_h": 0.5, "overlap_v": 0.5, "standoff_m": 30}"#,
        );
        let s = Scenario::from_json_str(&text).unwrap();
        assert_eq!(s.waypoints.len(), 100);
    }
}
