//! Scene description: soil, buried-object class, and acquisition geometry.

use crate::{Result, SimError};
use serde::{Deserialize, Serialize};

/// Propagation speed of the air gap between antenna and ground, in m/s.
pub const C_AIR_M_PER_S: f64 = 3.0e8;

/// Soil types with their electromagnetic propagation velocities.
///
/// Wet soil attenuates more strongly than dry soil, and water content also
/// lowers the velocity, which widens hyperbolas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Soil {
    Gravel,
    DryGravel,
    Sand,
    WetSand,
}

impl Soil {
    /// All soils in a fixed order, used for round-robin dataset assignment.
    pub const ALL: [Soil; 4] = [Soil::Sand, Soil::WetSand, Soil::Gravel, Soil::DryGravel];

    /// One-way propagation velocity in the soil, in m/s.
    pub fn velocity_m_per_s(self) -> f64 {
        match self {
            Soil::Gravel => 1.1e8,
            Soil::DryGravel => 1.4e8,
            Soil::Sand => 1.2e8,
            Soil::WetSand => 0.8e8,
        }
    }

    /// One-way amplitude attenuation in nepers per metre of soil path.
    /// Wet variants lose noticeably more energy per metre.
    pub fn attenuation_np_per_m(self) -> f64 {
        match self {
            Soil::Gravel => 0.40,
            Soil::DryGravel => 0.25,
            Soil::Sand => 0.30,
            Soil::WetSand => 1.00,
        }
    }

    /// Stable lower-case name used in manifests.
    pub fn name(self) -> &'static str {
        match self {
            Soil::Gravel => "gravel",
            Soil::DryGravel => "dry_gravel",
            Soil::Sand => "sand",
            Soil::WetSand => "wet_sand",
        }
    }

    /// Parses the manifest name back into a soil.
    pub fn from_name(name: &str) -> Option<Soil> {
        Soil::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// The four thumbnail classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    /// Buried shelter: wide flattened roof echo (normal polarity) plus two
    /// reversed corner diffractions and a weaker normal-polarity base echo.
    Shelter,
    /// Metallic target: single strong reversed-polarity hyperbola.
    Metal,
    /// Non-metallic target: weak reversed-polarity hyperbola with a pulse
    /// stretched 1.5x in time.
    Nonmetal,
    /// No object; the scene holds only layers, clutter, and noise.
    Empty,
}

impl ObjectClass {
    /// All classes in label order.
    pub const ALL: [ObjectClass; 4] = [
        ObjectClass::Shelter,
        ObjectClass::Metal,
        ObjectClass::Nonmetal,
        ObjectClass::Empty,
    ];

    /// Integer label used by datasets and classifiers.
    pub fn label(self) -> usize {
        match self {
            ObjectClass::Shelter => 0,
            ObjectClass::Metal => 1,
            ObjectClass::Nonmetal => 2,
            ObjectClass::Empty => 3,
        }
    }

    /// Stable lower-case name used in manifests.
    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Shelter => "shelter",
            ObjectClass::Metal => "metal",
            ObjectClass::Nonmetal => "nonmetal",
            ObjectClass::Empty => "empty",
        }
    }

    /// Parses the manifest name back into a class.
    pub fn from_name(name: &str) -> Option<ObjectClass> {
        ObjectClass::ALL.into_iter().find(|c| c.name() == name)
    }
}

/// A horizontal soil-layer interface producing a flat reflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Interface depth below the ground surface, in metres.
    pub depth_m: f64,
    /// Signed reflection amplitude (sign encodes the impedance-contrast
    /// polarity).
    pub amplitude: f64,
}

/// Antenna elevations supported by the acquisition rig, in centimetres.
pub const ELEVATIONS_CM: [u32; 4] = [25, 50, 75, 100];

/// Antenna centre frequencies supported by the rig, in megahertz.
pub const FREQUENCIES_MHZ: [u32; 2] = [200, 350];

/// Full description of one synthetic scene.
///
/// Geometry and deterministic content (layers) are explicit fields; the
/// stochastic content (clutter placement, noise) is realised inside the
/// renderer from `seed`, so equal configurations give equal radargrams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Soil filling the halfspace below the surface.
    pub soil: Soil,
    /// Antenna height above the surface, in centimetres.
    pub elevation_cm: u32,
    /// Antenna centre frequency, in megahertz.
    pub frequency_mhz: u32,
    /// Object class buried in the scene.
    pub object: ObjectClass,
    /// Object depth below the surface, in metres. For `Empty` scenes this is
    /// the would-be placement used to keep thumbnail boxes away from it.
    pub object_depth_m: f64,
    /// Object centre along the antenna track, in metres.
    pub object_x_m: f64,
    /// Horizontal layer interfaces.
    pub layers: Vec<Layer>,
    /// Expected point scatterers per square metre of the imaged soil window.
    pub clutter_density_per_m2: f64,
    /// Standard deviation of the additive white Gaussian noise.
    pub noise_sigma: f64,
    /// Master seed for the scene's stochastic content.
    pub seed: u64,
}

impl SceneConfig {
    /// A plain sand scene with defaults matching dataset generation.
    pub fn new(object: ObjectClass, seed: u64) -> Self {
        SceneConfig {
            soil: Soil::Sand,
            elevation_cm: 50,
            frequency_mhz: 350,
            object,
            object_depth_m: 1.0,
            object_x_m: 2.0,
            layers: vec![Layer {
                depth_m: 0.35,
                amplitude: 0.2,
            }],
            clutter_density_per_m2: 0.5,
            noise_sigma: 0.05,
            seed,
        }
    }

    /// Antenna elevation in metres.
    pub fn elevation_m(&self) -> f64 {
        self.elevation_cm as f64 / 100.0
    }

    /// Centre frequency in hertz.
    pub fn frequency_hz(&self) -> f64 {
        self.frequency_mhz as f64 * 1.0e6
    }

    /// Validates ranges; geometry against the acquisition grid is checked by
    /// the renderer.
    pub fn validate(&self) -> Result<()> {
        if !ELEVATIONS_CM.contains(&self.elevation_cm) {
            return Err(SimError::Config(format!(
                "elevation {} cm is not one of {:?}",
                self.elevation_cm, ELEVATIONS_CM
            )));
        }
        if !FREQUENCIES_MHZ.contains(&self.frequency_mhz) {
            return Err(SimError::Config(format!(
                "frequency {} MHz is not one of {:?}",
                self.frequency_mhz, FREQUENCIES_MHZ
            )));
        }
        if !(self.object_depth_m > 0.0) || !self.object_depth_m.is_finite() {
            return Err(SimError::Config(format!(
                "object depth must be positive, got {}",
                self.object_depth_m
            )));
        }
        let v = self.soil.velocity_m_per_s();
        if !(v > 0.0 && v <= C_AIR_M_PER_S) {
            return Err(SimError::Config(format!(
                "soil velocity {v} outside (0, c]"
            )));
        }
        for layer in &self.layers {
            if !(layer.depth_m > 0.0) || !layer.depth_m.is_finite() {
                return Err(SimError::Config(format!(
                    "layer depth must be positive, got {}",
                    layer.depth_m
                )));
            }
            if !layer.amplitude.is_finite() {
                return Err(SimError::Config("layer amplitude must be finite".into()));
            }
        }
        if self.clutter_density_per_m2 < 0.0 || !self.clutter_density_per_m2.is_finite() {
            return Err(SimError::Config(format!(
                "clutter density must be non-negative, got {}",
                self.clutter_density_per_m2
            )));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(SimError::Config(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}
