//! B-scan synthesis on a fixed acquisition grid.
//!
//! A B-scan stacks the traces recorded while the antenna moves along a
//! straight track. Every echo source is rendered from its closed-form
//! two-way travel time
//! `t(x) = 2 (elevation / c + sqrt(depth^2 + (x - x0)^2) / v_soil)`,
//! convolved with the Ricker pulse, attenuated exponentially along the soil
//! path, and spread geometrically with `depth / path`. Flat interfaces use
//! the same formula with zero lateral offset at every column.

use crate::ricker::{ricker, support_halfwidth_s};
use crate::scene::{Layer, ObjectClass, SceneConfig, C_AIR_M_PER_S};
use crate::{Result, SimError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use spdnet_core::rng::{randn, stream_rng};
use spdnet_core::Tensor;

/// Number of time samples per trace.
pub const N_T: usize = 256;
/// Time step between samples, in seconds (2.5 GHz sampling).
pub const DT_S: f64 = 0.4e-9;
/// Number of traces (antenna positions) per B-scan.
pub const N_X: usize = 160;
/// Antenna step along the track, in metres.
pub const DX_M: f64 = 0.025;
/// Total track length, in metres.
pub const APERTURE_M: f64 = N_X as f64 * DX_M;

/// Lateral margin the object centre must keep from the track ends, metres.
const APERTURE_MARGIN_M: f64 = 0.5;

/// Shelter roof extends this far to each side of the object centre, metres.
/// Wide enough that the corner diffractions arrive well after the roof echo
/// on the apex trace, keeping the roof peak below the metal peak.
pub const SHELTER_ROOF_HALFWIDTH_M: f64 = 1.0;
/// Vertical distance between shelter roof and base echoes, metres.
pub const SHELTER_HEIGHT_M: f64 = 0.5;
/// Pulse-width stretch of the weak dielectric contrast of non-metal objects.
pub const NONMETAL_STRETCH: f64 = 1.5;

/// Depth window populated by point clutter, metres.
const CLUTTER_DEPTH_MIN_M: f64 = 0.2;
const CLUTTER_DEPTH_MAX_M: f64 = 3.5;
/// Clutter scatterer amplitude range; capped well below object echoes.
const CLUTTER_AMP_MIN: f64 = 0.03;
const CLUTTER_AMP_MAX: f64 = 0.15;

/// RNG stream ids within a scene seed. Object geometry (stream 0) and layer
/// draws (stream 1) are consumed by dataset generation; the renderer only
/// realises clutter and noise, so two scenes differing only in object class
/// share identical backgrounds.
const STREAM_CLUTTER: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// Two-way travel time for an antenna at `elevation_m` above the surface and
/// a soil path of length `path_m` at velocity `v_soil`.
pub fn travel_time_s(elevation_m: f64, path_m: f64, v_soil: f64) -> f64 {
    2.0 * (elevation_m / C_AIR_M_PER_S + path_m / v_soil)
}

/// One echo source: a point diffractor, optionally widened into a flat-top
/// segment of half-width `flat_halfwidth_m`, with a pulse stretched by
/// `stretch` in time.
struct Echo {
    x0_m: f64,
    depth_m: f64,
    amplitude: f64,
    reversed: bool,
    flat_halfwidth_m: f64,
    stretch: f64,
}

impl Echo {
    fn point(x0_m: f64, depth_m: f64, amplitude: f64, reversed: bool) -> Echo {
        Echo {
            x0_m,
            depth_m,
            amplitude,
            reversed,
            flat_halfwidth_m: 0.0,
            stretch: 1.0,
        }
    }
}

/// Echo signature of each object class.
///
/// * metal: one strong reversed hyperbola (amplitude 1.0);
/// * shelter: flattened roof (0.8, normal polarity), two reversed corner
///   diffractions (0.5) at the roof edges, and a flattened base (0.4,
///   normal) one shelter height deeper;
/// * non-metal: weak reversed hyperbola (0.35) with a 1.5x longer pulse;
/// * empty: nothing.
fn object_echoes(scene: &SceneConfig) -> Vec<Echo> {
    let x0 = scene.object_x_m;
    let d = scene.object_depth_m;
    match scene.object {
        ObjectClass::Metal => vec![Echo::point(x0, d, 1.0, true)],
        ObjectClass::Shelter => vec![
            Echo {
                x0_m: x0,
                depth_m: d,
                amplitude: 0.8,
                reversed: false,
                flat_halfwidth_m: SHELTER_ROOF_HALFWIDTH_M,
                stretch: 1.0,
            },
            Echo::point(x0 - SHELTER_ROOF_HALFWIDTH_M, d, 0.5, true),
            Echo::point(x0 + SHELTER_ROOF_HALFWIDTH_M, d, 0.5, true),
            Echo {
                x0_m: x0,
                depth_m: d + SHELTER_HEIGHT_M,
                amplitude: 0.4,
                reversed: false,
                flat_halfwidth_m: SHELTER_ROOF_HALFWIDTH_M,
                stretch: 1.0,
            },
        ],
        ObjectClass::Nonmetal => vec![Echo {
            x0_m: x0,
            depth_m: d,
            amplitude: 0.35,
            reversed: true,
            flat_halfwidth_m: 0.0,
            stretch: NONMETAL_STRETCH,
        }],
        ObjectClass::Empty => Vec::new(),
    }
}

/// Deepest soil path of the object's echoes, used for time-window checks.
fn deepest_object_path_m(scene: &SceneConfig) -> f64 {
    match scene.object {
        ObjectClass::Shelter => scene.object_depth_m + SHELTER_HEIGHT_M,
        _ => scene.object_depth_m,
    }
}

fn render_echo(img: &mut Tensor<f64>, echo: &Echo, scene: &SceneConfig) {
    let v = scene.soil.velocity_m_per_s();
    let alpha = scene.soil.attenuation_np_per_m();
    let elev = scene.elevation_m();
    let f = scene.frequency_hz();
    let half_support = support_halfwidth_s(f) * echo.stretch;
    let sign = if echo.reversed { -1.0 } else { 1.0 };
    let data = img.data_mut();
    for col in 0..N_X {
        let x = col as f64 * DX_M;
        let off = ((x - echo.x0_m).abs() - echo.flat_halfwidth_m).max(0.0);
        let path = (echo.depth_m * echo.depth_m + off * off).sqrt();
        let t_arr = travel_time_s(elev, path, v);
        // Geometric spreading normalised to 1 at the apex, plus two-way
        // exponential soil loss.
        let a = sign * echo.amplitude * (echo.depth_m / path) * (-2.0 * alpha * path).exp();
        let lo = (((t_arr - half_support) / DT_S).floor().max(0.0) as usize).min(N_T);
        let hi = ((((t_arr + half_support) / DT_S).ceil()).max(0.0) as usize).min(N_T - 1);
        for row in lo..=hi {
            let tau = (row as f64 * DT_S - t_arr) / echo.stretch;
            data[row * N_X + col] += a * ricker(f, tau);
        }
    }
}

fn render_layer(img: &mut Tensor<f64>, layer: &Layer, scene: &SceneConfig) {
    let v = scene.soil.velocity_m_per_s();
    let alpha = scene.soil.attenuation_np_per_m();
    let f = scene.frequency_hz();
    let t_arr = travel_time_s(scene.elevation_m(), layer.depth_m, v);
    let a = layer.amplitude * (-2.0 * alpha * layer.depth_m).exp();
    let half_support = support_halfwidth_s(f);
    let lo = (((t_arr - half_support) / DT_S).floor().max(0.0) as usize).min(N_T);
    let hi = ((((t_arr + half_support) / DT_S).ceil()).max(0.0) as usize).min(N_T - 1);
    let data = img.data_mut();
    for row in lo..=hi {
        let val = a * ricker(f, row as f64 * DT_S - t_arr);
        for col in 0..N_X {
            data[row * N_X + col] += val;
        }
    }
}

/// Draws a Poisson count by Knuth's product-of-uniforms method; the expected
/// counts here stay small enough that the loop is exact and cheap.
fn poisson_count(lambda: f64, rng: &mut ChaCha8Rng) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let limit = (-lambda).exp();
    let mut k = 0usize;
    let mut p = 1.0f64;
    loop {
        p *= rng.gen::<f64>();
        if p <= limit {
            return k;
        }
        k += 1;
    }
}

fn render_clutter(img: &mut Tensor<f64>, scene: &SceneConfig) {
    let mut rng = stream_rng(scene.seed, STREAM_CLUTTER);
    let area = APERTURE_M * (CLUTTER_DEPTH_MAX_M - CLUTTER_DEPTH_MIN_M);
    let n = poisson_count(scene.clutter_density_per_m2 * area, &mut rng);
    for _ in 0..n {
        let x = rng.gen::<f64>() * APERTURE_M;
        let depth = CLUTTER_DEPTH_MIN_M
            + rng.gen::<f64>() * (CLUTTER_DEPTH_MAX_M - CLUTTER_DEPTH_MIN_M);
        let amp = CLUTTER_AMP_MIN + rng.gen::<f64>() * (CLUTTER_AMP_MAX - CLUTTER_AMP_MIN);
        let reversed = rng.gen::<f64>() < 0.5;
        render_echo(img, &Echo::point(x, depth, amp, reversed), scene);
    }
}

/// Renders the full B-scan for `scene` as an `[N_T, N_X]` matrix of
/// dimensionless amplitudes (time down, track position across).
pub fn synthesize_bscan(scene: &SceneConfig) -> Result<Tensor<f64>> {
    scene.validate()?;
    let v = scene.soil.velocity_m_per_s();
    let window_s = N_T as f64 * DT_S;
    if scene.object != ObjectClass::Empty {
        if scene.object_x_m < APERTURE_MARGIN_M
            || scene.object_x_m > APERTURE_M - APERTURE_MARGIN_M
        {
            return Err(SimError::Geometry(format!(
                "object centre {:.3} m lies outside the imaged aperture [{:.2}, {:.2}] m",
                scene.object_x_m,
                APERTURE_MARGIN_M,
                APERTURE_M - APERTURE_MARGIN_M
            )));
        }
        let deepest = travel_time_s(scene.elevation_m(), deepest_object_path_m(scene), v);
        if deepest + support_halfwidth_s(scene.frequency_hz()) * NONMETAL_STRETCH > window_s {
            return Err(SimError::Geometry(format!(
                "object echo at {:.1} ns falls outside the {:.1} ns time window",
                deepest * 1e9,
                window_s * 1e9
            )));
        }
    }

    let mut img = Tensor::zeros(&[N_T, N_X]);
    for layer in &scene.layers {
        render_layer(&mut img, layer, scene);
    }
    render_clutter(&mut img, scene);
    for echo in object_echoes(scene) {
        render_echo(&mut img, &echo, scene);
    }
    if scene.noise_sigma > 0.0 {
        let mut rng = stream_rng(scene.seed, STREAM_NOISE);
        for val in img.data_mut() {
            *val += scene.noise_sigma * randn(&mut rng);
        }
    }
    Ok(img)
}
