//! WebAssembly bindings for the browser demo in `www/`.

mod demo;

pub use demo::Demo;

use romkit::toy::ToyVariant;
use wasm_bindgen::prelude::*;

fn js(e: romkit::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = Demo)]
pub struct WebDemo(Demo);

#[wasm_bindgen(js_class = Demo)]
impl WebDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(nx: usize, count: usize, rank: usize, sensors: usize, prose: bool) -> Result<WebDemo, JsError> {
        let variant = if prose { ToyVariant::Prose } else { ToyVariant::Snippet };
        Demo::new(nx, count, rank, sensors, variant).map(WebDemo).map_err(js)
    }

    pub fn side(&self) -> usize {
        self.0.side()
    }

    pub fn rank(&self) -> usize {
        self.0.rank()
    }

    #[wasm_bindgen(js_name = sensorCount)]
    pub fn sensor_count(&self) -> usize {
        self.0.sensor_count()
    }

    #[wasm_bindgen(js_name = singularValues)]
    pub fn singular_values(&self) -> Vec<f64> {
        self.0.singular_values().to_vec()
    }

    pub fn field(&self, mu: f64) -> Vec<f64> {
        self.0.field(mu)
    }

    pub fn compress(&self, mu: f64, n: usize) -> Result<Vec<f64>, JsError> {
        self.0.compress(mu, n).map_err(js)
    }

    #[wasm_bindgen(js_name = sensorPoints)]
    pub fn sensor_points(&self, m: usize) -> Vec<f64> {
        self.0.sensor_points(m)
    }

    pub fn interpolate(&self, mu: f64, m: usize, level: f64, seed: u32, regularize: bool) -> Result<Vec<f64>, JsError> {
        self.0.interpolate(mu, m, level, seed as u64, regularize).map_err(js)
    }

    #[wasm_bindgen(js_name = relativeError)]
    pub fn relative_error(&self, mu: f64, estimate: &[f64]) -> Result<f64, JsError> {
        self.0.relative_error(mu, estimate).map_err(js)
    }
}
