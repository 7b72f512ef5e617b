//! wasm-bindgen shell around the demo engine. Build for the browser with
//!
//! ```text
//! wasm-pack build crates/wasm --target web --out-dir ../../www/pkg
//! ```
//!
//! and serve the `www/` directory; `www/index.html` drives this API.

mod engine;

pub use engine::{DemoParams, Engine};
use wasm_bindgen::prelude::*;

/// A solved scattering scene: rods grouped into clusters, each cluster
/// compressed onto a fitted monopole layer, clusters coupled through
/// their layers until the sweep converges.
#[wasm_bindgen]
pub struct Demo {
    inner: Engine,
}

#[wasm_bindgen]
impl Demo {
    /// Builds the scene and runs the coupled solve. Parameters outside
    /// the supported ranges are clamped, not rejected.
    #[wasm_bindgen(constructor)]
    pub fn new(
        wavelength: f64,
        cluster_count: u32,
        rods_per_cluster: u32,
        seed: u32,
        incident_angle_deg: f64,
    ) -> Result<Demo, JsValue> {
        let inner = Engine::build(DemoParams {
            wavelength,
            cluster_count: cluster_count as usize,
            rods_per_cluster: rods_per_cluster as usize,
            seed: seed as u64,
            incident_angle_deg,
        })
        .map_err(|e| JsValue::from_str(&e))?;
        Ok(Demo { inner })
    }

    pub fn total_rods(&self) -> u32 {
        self.inner.total_rods() as u32
    }

    pub fn cluster_count(&self) -> u32 {
        self.inner.cluster_count() as u32
    }

    pub fn iterations(&self) -> u32 {
        self.inner.iterations() as u32
    }

    pub fn converged(&self) -> bool {
        self.inner.converged()
    }

    pub fn convergence_history(&self) -> Vec<f64> {
        self.inner.convergence_history()
    }

    pub fn monopole_counts(&self) -> Vec<u32> {
        self.inner
            .monopole_counts()
            .into_iter()
            .map(|p| p as u32)
            .collect()
    }

    pub fn suggested_view_radius(&self) -> f64 {
        self.inner.suggested_view_radius()
    }

    /// Row-major |u| over the view rectangle, top row first; -1 marks
    /// rod interiors (mask them in the palette).
    pub fn field_magnitude(
        &self,
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        nx: u32,
        ny: u32,
    ) -> Vec<f32> {
        self.inner
            .field_magnitude(x0, y0, x1, y1, nx as usize, ny as usize)
    }

    /// [re, im, abs] of the total field, or an empty array at a point
    /// that cannot be evaluated.
    pub fn probe(&self, x: f64, y: f64) -> Vec<f64> {
        self.inner.probe(x, y)
    }

    pub fn rod_positions(&self) -> Vec<f32> {
        self.inner.rod_positions()
    }

    pub fn monopole_positions(&self) -> Vec<f32> {
        self.inner.monopole_positions()
    }

    pub fn enclosure_polyline(&self, j: u32) -> Vec<f32> {
        self.inner.enclosure_polyline(j as usize)
    }

    /// Solves the uncompressed rod system and returns the worst relative
    /// disagreement of the scattered fields on a surrounding circle.
    pub fn direct_check(&self, sample_count: u32) -> Result<f64, JsValue> {
        self.inner
            .direct_check(sample_count as usize)
            .map_err(|e| JsValue::from_str(&e))
    }
}
