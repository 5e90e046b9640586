//! Browser playground: train two small networks on a 2-D toy dataset, merge
//! them, and compare the merged model with straight-line blends of the
//! parents. Everything crosses the JS boundary as JSON strings.

use mega_core::merge::{execute_merge_plan, MergePlan};
use mega_core::{
    build_merge_plan, flatten, gen_synthetic, train, unflatten, weight_average, AccuracyFitness,
    Dataset, GaConfig, GenerationRecord, Genome, ModelSpec, Part, SyntheticKind, TrainConfig,
};
use ndarray::Array2;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Points {
    x: Vec<f64>,
    y: Vec<f64>,
    label: Vec<usize>,
    /// Partition of each point: 0 train, 1 validation.
    part: Vec<u8>,
}

#[derive(Serialize)]
struct ParentSummary {
    val_accuracy: [f64; 2],
    train_accuracy: [f64; 2],
    parameter_count: usize,
}

#[derive(Serialize)]
struct MergeSummary {
    parents: [f64; 2],
    merged: f64,
    weight_average: f64,
    history: Vec<GenerationRecord>,
}

#[derive(Serialize)]
struct SweepPoint {
    alpha: f64,
    accuracy: f64,
}

#[derive(Serialize)]
struct Grid {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    resolution: usize,
    /// Row-major from `y_min` upwards; predicted class per cell.
    classes: Vec<usize>,
}

#[wasm_bindgen]
pub struct Playground {
    spec: ModelSpec,
    data: Dataset,
    parents: Option<[Genome; 2]>,
    merged: Option<Genome>,
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

impl Playground {
    pub fn create(
        kind: &str,
        n: usize,
        noise: f64,
        layers: &str,
        seed: u64,
    ) -> Result<Self, String> {
        let kind: SyntheticKind = kind.parse().map_err(|e: mega_core::Error| e.to_string())?;
        let mut widths: Vec<usize> = vec![2];
        for w in layers.split(['-', ',']).filter(|s| !s.trim().is_empty()) {
            widths.push(
                w.trim()
                    .parse()
                    .map_err(|_| format!("bad hidden width `{w}`"))?,
            );
        }
        widths.push(kind.num_classes());
        let spec = ModelSpec::new(widths).map_err(|e| e.to_string())?;
        let data = gen_synthetic(kind, n, noise, seed)
            .and_then(|d| d.split(0.2, 0.0, seed))
            .map_err(|e| e.to_string())?;
        Ok(Playground {
            spec,
            data,
            parents: None,
            merged: None,
        })
    }

    fn scorer(&self, part: Part) -> Result<AccuracyFitness, String> {
        AccuracyFitness::from_dataset(self.spec.clone(), &self.data, part)
            .map(|f| f.with_checkpoint_precision(true))
            .map_err(|e| e.to_string())
    }

    fn parents(&self) -> Result<&[Genome; 2], String> {
        self.parents
            .as_ref()
            .ok_or_else(|| "train the parents first".to_string())
    }

    pub fn points_json(&self) -> String {
        let mut part = vec![0u8; self.data.len()];
        for &i in &self.data.partition().val {
            part[i] = 1;
        }
        let f = self.data.features();
        to_json(&Points {
            x: f.column(0).to_vec(),
            y: f.column(1).to_vec(),
            label: self.data.labels().to_vec(),
            part,
        })
    }

    pub fn try_train_parents(
        &mut self,
        seed_a: u64,
        seed_b: u64,
        epochs: usize,
    ) -> Result<String, String> {
        let mut genomes = Vec::with_capacity(2);
        for seed in [seed_a, seed_b] {
            let cfg = TrainConfig {
                epochs,
                batch_size: 64,
                seed,
                ..TrainConfig::default()
            };
            let params = train(&self.spec, &self.data, &cfg).map_err(|e| e.to_string())?;
            genomes.push(flatten(&params).map_err(|e| e.to_string())?);
        }
        let [a, b]: [Genome; 2] = genomes.try_into().expect("two parents");
        let val = self.scorer(Part::Val)?;
        let tr = self.scorer(Part::Train)?;
        let acc = |f: &AccuracyFitness, g: &Genome| f.accuracy(g).map_err(|e| e.to_string());
        let summary = ParentSummary {
            val_accuracy: [acc(&val, &a)?, acc(&val, &b)?],
            train_accuracy: [acc(&tr, &a)?, acc(&tr, &b)?],
            parameter_count: a.len(),
        };
        self.parents = Some([a, b]);
        self.merged = None;
        Ok(to_json(&summary))
    }

    pub fn try_merge(
        &mut self,
        population: usize,
        generations: usize,
        mutation_rate: f64,
        seed: u64,
    ) -> Result<String, String> {
        let [a, b] = self.parents()?.clone();
        let cfg = GaConfig {
            population_size: population,
            generations,
            mutation_rate,
            seed,
            ..GaConfig::default()
        };
        let plan: MergePlan =
            build_merge_plan(vec![a.clone(), b.clone()], cfg).map_err(|e| e.to_string())?;
        let val = self.scorer(Part::Val)?;
        let outcome = execute_merge_plan(&plan, &val, false).map_err(|e| e.to_string())?;
        let average = weight_average(&[a.clone(), b.clone()]).map_err(|e| e.to_string())?;
        let acc = |g: &Genome| val.accuracy(g).map_err(|e| e.to_string());
        let summary = MergeSummary {
            parents: [acc(&a)?, acc(&b)?],
            merged: outcome.report.final_val_accuracy,
            weight_average: acc(&average)?,
            history: outcome
                .report
                .nodes
                .into_iter()
                .flat_map(|n| n.history)
                .collect(),
        };
        self.merged = Some(outcome.genome);
        Ok(to_json(&summary))
    }

    /// Validation accuracy of `alpha * theta1 + (1 - alpha) * theta2` for
    /// `steps + 1` evenly spaced `alpha` in `[0, 1]`.
    pub fn try_alpha_sweep(&self, steps: usize) -> Result<String, String> {
        let [a, b] = self.parents()?;
        let val = self.scorer(Part::Val)?;
        let steps = steps.max(1);
        let mut points = Vec::with_capacity(steps + 1);
        for i in 0..=steps {
            let alpha = i as f64 / steps as f64;
            let g = mega_core::ga::blend(a, b, alpha).map_err(|e| e.to_string())?;
            points.push(SweepPoint {
                alpha,
                accuracy: val.accuracy(&g).map_err(|e| e.to_string())?,
            });
        }
        Ok(to_json(&points))
    }

    /// Predicted class over a square grid covering the data, for one of
    /// `parent_a`, `parent_b`, `merged` or `average`.
    pub fn try_decision_grid(&self, which: &str, resolution: usize) -> Result<String, String> {
        let [a, b] = self.parents()?;
        let genome = match which {
            "parent_a" => a.clone(),
            "parent_b" => b.clone(),
            "average" => weight_average(&[a.clone(), b.clone()]).map_err(|e| e.to_string())?,
            "merged" => self.merged.clone().ok_or("run the merge first")?,
            other => return Err(format!("unknown model `{other}`")),
        };
        let params = unflatten(&genome.to_f32_precision().map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let f = self.data.features();
        let bounds = |col: usize| {
            let (lo, hi) = f
                .column(col)
                .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let pad = 0.1 * (hi - lo).max(1e-9);
            (lo - pad, hi + pad)
        };
        let ((x_min, x_max), (y_min, y_max)) = (bounds(0), bounds(1));
        let r = resolution.clamp(2, 400);
        let cell = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * (i as f64 + 0.5) / r as f64;
        let grid = Array2::from_shape_fn((r * r, 2), |(k, c)| {
            if c == 0 {
                cell(x_min, x_max, k % r)
            } else {
                cell(y_min, y_max, k / r)
            }
        });
        let probs =
            mega_core::forward(&params, &self.spec, grid.view()).map_err(|e| e.to_string())?;
        let classes = probs
            .rows()
            .into_iter()
            .map(|row| mega_core::nn::argmax(row.iter().copied()))
            .collect();
        Ok(to_json(&Grid {
            x_min,
            x_max,
            y_min,
            y_max,
            resolution: r,
            classes,
        }))
    }
}

#[wasm_bindgen]
impl Playground {
    /// `kind`: two_moons, gaussian_blobs or concentric_rings. `hidden`: hidden
    /// widths such as `"16-16"`.
    #[wasm_bindgen(constructor)]
    pub fn new(
        kind: &str,
        n: usize,
        noise: f64,
        hidden: &str,
        seed: u64,
    ) -> Result<Playground, JsError> {
        Playground::create(kind, n, noise, hidden, seed).map_err(|e| JsError::new(&e))
    }

    pub fn points(&self) -> String {
        self.points_json()
    }

    #[wasm_bindgen(js_name = trainParents)]
    pub fn train_parents(
        &mut self,
        seed_a: u64,
        seed_b: u64,
        epochs: usize,
    ) -> Result<String, JsError> {
        self.try_train_parents(seed_a, seed_b, epochs)
            .map_err(|e| JsError::new(&e))
    }

    pub fn merge(
        &mut self,
        population: usize,
        generations: usize,
        mutation_rate: f64,
        seed: u64,
    ) -> Result<String, JsError> {
        self.try_merge(population, generations, mutation_rate, seed)
            .map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = alphaSweep)]
    pub fn alpha_sweep(&self, steps: usize) -> Result<String, JsError> {
        self.try_alpha_sweep(steps).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = decisionGrid)]
    pub fn decision_grid(&self, which: &str, resolution: usize) -> Result<String, JsError> {
        self.try_decision_grid(which, resolution)
            .map_err(|e| JsError::new(&e))
    }
}
