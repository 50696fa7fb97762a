//! Two-moons demo compiled to WebAssembly.
//!
//! `Session` is the plain Rust core; `MoonsDemo` wraps it for JavaScript.
//! Arrays cross the boundary as flat `Float64Array`s.

use naf_core::eval_explain::{explain, two_moons_experiment, MoonsReport, MoonsSetup};
use naf_core::{NafModel, Result};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoParams {
    pub n_train: usize,
    pub noise_sd: f64,
    pub n_trees: usize,
    pub epochs: usize,
    pub seed: u64,
}

pub struct Session {
    report: MoonsReport,
    untrained: NafModel,
    points: Vec<f64>,
}

impl Session {
    pub fn train(p: DemoParams) -> Result<Self> {
        let mut setup = MoonsSetup {
            n_train: p.n_train,
            noise_sd: p.noise_sd,
            n_trees: p.n_trees,
            seed: p.seed,
            ..MoonsSetup::default()
        };
        setup.train.epochs = p.epochs;
        let report = two_moons_experiment(&setup)?;
        let mut untrained = report.model.clone();
        untrained.reinitialize(p.seed)?;
        let train = report.model.train_data();
        let st = report.model.standardizer();
        let points = (0..train.n_rows())
            .flat_map(|i| {
                let mut v = st.invert_row(train.row(i));
                v.push(train.targets()[i]);
                v
            })
            .collect();
        Ok(Self {
            report,
            untrained,
            points,
        })
    }

    /// Training rows as `x1, x2, y` triples.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn metrics(&self) -> [f64; 5] {
        let r = &self.report;
        [
            r.forest_r2,
            r.naf_r2,
            r.random_naf_r2,
            r.median_recon_trained,
            r.median_recon_random,
        ]
    }

    /// Predictions on a `steps x steps` grid, row-major from `(x0, y0)`.
    pub fn surface(
        &self,
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        steps: usize,
        trained: bool,
    ) -> Result<Vec<f64>> {
        let model = if trained {
            &self.report.model
        } else {
            &self.untrained
        };
        let steps = steps.max(2);
        let at = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (steps - 1) as f64;
        let rows: Vec<Vec<f64>> = (0..steps)
            .flat_map(|r| (0..steps).map(move |c| vec![at(x0, x1, c), at(y0, y1, r)]))
            .collect();
        Ok(model.predict_many(&rows)?.into_iter().map(|o| o.y_hat).collect())
    }

    /// `[x_hat1, x_hat2, y_hat, (index, weight)...]`.
    pub fn explain(&self, x: f64, y: f64, top_k: usize, trained: bool) -> Result<Vec<f64>> {
        let model = if trained {
            &self.report.model
        } else {
            &self.untrained
        };
        let e = explain(model, &[x, y], top_k)?;
        let mut out = e.x_hat.clone();
        out.push(e.y_hat);
        for n in &e.neighbors {
            out.push(n.index as f64);
            out.push(n.weight);
        }
        Ok(out)
    }
}

#[wasm_bindgen]
pub struct MoonsDemo {
    session: Session,
}

fn js_err(e: naf_core::NafError) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl MoonsDemo {
    /// Fit an ERT on a fresh two-moons sample and train NAF-1 on it.
    #[wasm_bindgen(constructor)]
    pub fn new(
        n_train: usize,
        noise_sd: f64,
        n_trees: usize,
        epochs: usize,
        seed: u32,
    ) -> std::result::Result<MoonsDemo, JsError> {
        let session = Session::train(DemoParams {
            n_train,
            noise_sd,
            n_trees,
            epochs,
            seed: u64::from(seed),
        })
        .map_err(js_err)?;
        Ok(Self { session })
    }

    pub fn points(&self) -> Vec<f64> {
        self.session.points().to_vec()
    }

    /// ERT R², trained NAF R², untrained NAF R², trained and untrained
    /// median reconstruction distance on 200 held-out points.
    pub fn metrics(&self) -> Vec<f64> {
        self.session.metrics().to_vec()
    }

    pub fn surface(
        &self,
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        steps: usize,
        trained: bool,
    ) -> std::result::Result<Vec<f64>, JsError> {
        self.session
            .surface(x0, x1, y0, y1, steps, trained)
            .map_err(js_err)
    }

    pub fn explain(
        &self,
        x: f64,
        y: f64,
        top_k: usize,
        trained: bool,
    ) -> std::result::Result<Vec<f64>, JsError> {
        self.session.explain(x, y, top_k, trained).map_err(js_err)
    }
}
