//! Classification accuracy on a fixed labelled set as a [`FitnessFn`].

use ndarray::Array2;

use crate::data::{Dataset, Part};
use crate::error::{Error, Result};
use crate::ga::FitnessFn;
use crate::genome::{unflatten, Genome, ShapeManifest};
use crate::nn::{accuracy, ModelSpec};

#[derive(Clone, Debug)]
pub struct AccuracyFitness {
    spec: ModelSpec,
    manifest: ShapeManifest,
    features: Array2<f64>,
    labels: Vec<usize>,
    checkpoint_precision: bool,
}

impl AccuracyFitness {
    pub fn new(spec: ModelSpec, features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(AccuracyFitness {
            manifest: ShapeManifest::from_spec(&spec),
            spec,
            features,
            labels,
            checkpoint_precision: false,
        })
    }

    pub fn from_dataset(spec: ModelSpec, dataset: &Dataset, part: Part) -> Result<Self> {
        let (x, y) = dataset.part(part);
        if y.is_empty() {
            return Err(Error::EmptyPartition(part.name()));
        }
        AccuracyFitness::new(spec, x, y)
    }

    /// Score genomes as they would be after a checkpoint round trip
    /// (values rounded to `f32`). A saved genome then evaluates to exactly
    /// the fitness the search reported for it.
    pub fn with_checkpoint_precision(mut self, on: bool) -> Self {
        self.checkpoint_precision = on;
        self
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn accuracy(&self, genome: &Genome) -> Result<f64> {
        if genome.manifest() != &self.manifest {
            return Err(Error::Incompatible {
                left: self.manifest.to_string(),
                right: genome.manifest().to_string(),
            });
        }
        let params = if self.checkpoint_precision {
            unflatten(&genome.to_f32_precision()?)?
        } else {
            unflatten(genome)?
        };
        accuracy(&params, &self.spec, self.features.view(), &self.labels)
    }
}

impl FitnessFn for AccuracyFitness {
    fn fitness(&self, genome: &Genome) -> Result<f64> {
        self.accuracy(genome)
    }
}
