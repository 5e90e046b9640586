//! Flat parameter vectors and the manifest that maps them back to layers.

use std::fmt;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DenseLayer, LayeredParams, ModelSpec};

/// One dense layer: a `rows x cols` weight matrix followed by a `cols` bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.rows * self.cols + self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered layer shapes defining the flat layout. Two genomes can be
/// merged only when their manifests are identical.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ShapeManifest {
    layers: Vec<LayerShape>,
}

impl ShapeManifest {
    pub fn new(layers: Vec<LayerShape>) -> Self {
        ShapeManifest { layers }
    }

    pub fn from_spec(spec: &ModelSpec) -> Self {
        ShapeManifest {
            layers: spec
                .layer_shapes()
                .map(|(rows, cols)| LayerShape { rows, cols })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn total_len(&self) -> usize {
        self.layers.iter().map(LayerShape::len).sum()
    }

    /// Recovers the model spec when consecutive layers chain
    /// (`cols` of one layer equals `rows` of the next).
    pub fn to_spec(&self) -> Result<ModelSpec> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::InvalidSpec("manifest has no layers".into()))?;
        let mut widths = vec![first.rows];
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.rows != *widths.last().unwrap() {
                return Err(Error::InvalidSpec(format!(
                    "layer {i} takes {} inputs but the previous layer emits {}",
                    layer.rows,
                    widths.last().unwrap()
                )));
            }
            widths.push(layer.cols);
        }
        ModelSpec::new(widths)
    }
}

impl fmt::Display for ShapeManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .layers
            .iter()
            .map(|l| format!("{}x{}+{}", l.rows, l.cols, l.cols))
            .collect();
        write!(f, "[{}] ({} values)", parts.join(", "), self.total_len())
    }
}

/// All network parameters as one flat vector: per layer, weights in
/// row-major order, then the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Genome {
    values: Vec<f64>,
    manifest: ShapeManifest,
}

impl Genome {
    pub fn new(values: Vec<f64>, manifest: ShapeManifest) -> Result<Self> {
        if values.len() != manifest.total_len() {
            return Err(Error::LengthMismatch {
                expected: manifest.total_len(),
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Genome { values, manifest })
    }

    /// Wraps a bare vector in a single `(len - 1) x 1` layer manifest, for
    /// objectives that don't care about network layout.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::LengthMismatch {
                expected: 1,
                actual: 0,
            });
        }
        let manifest = ShapeManifest::new(vec![LayerShape {
            rows: values.len() - 1,
            cols: 1,
        }]);
        Genome::new(values, manifest)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn manifest(&self) -> &ShapeManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Callers must keep every value finite.
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same manifest, new values. Rejects length changes and non-finite values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Genome::new(values, self.manifest.clone())
    }

    /// Every value rounded to the nearest `f32`, the precision checkpoints store.
    pub fn to_f32_precision(&self) -> Result<Self> {
        let values = self.values.iter().map(|&v| v as f32 as f64).collect();
        self.with_values(values)
    }
}

/// True iff the manifests are identical; total length alone is not enough.
pub fn compatible(a: &Genome, b: &Genome) -> bool {
    a.manifest == b.manifest
}

pub(crate) fn ensure_compatible(a: &Genome, b: &Genome) -> Result<()> {
    if compatible(a, b) {
        Ok(())
    } else {
        Err(Error::Incompatible {
            left: a.manifest.to_string(),
            right: b.manifest.to_string(),
        })
    }
}

pub fn flatten(params: &LayeredParams) -> Result<Genome> {
    let mut shapes = Vec::with_capacity(params.layers.len());
    let mut values = Vec::new();
    for layer in &params.layers {
        let (rows, cols) = layer.weights.dim();
        if layer.bias.len() != cols {
            return Err(Error::shape(
                "layer bias",
                format!("{cols} values"),
                format!("{} values", layer.bias.len()),
            ));
        }
        shapes.push(LayerShape { rows, cols });
        // iter() walks logical row-major order regardless of memory layout
        values.extend(layer.weights.iter());
        values.extend(layer.bias.iter());
    }
    Genome::new(values, ShapeManifest::new(shapes))
}

pub fn unflatten(genome: &Genome) -> Result<LayeredParams> {
    let manifest = &genome.manifest;
    if genome.values.len() != manifest.total_len() {
        return Err(Error::LengthMismatch {
            expected: manifest.total_len(),
            actual: genome.values.len(),
        });
    }
    let mut offset = 0;
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for shape in &manifest.layers {
        let w_len = shape.rows * shape.cols;
        let weights = Array2::from_shape_vec(
            (shape.rows, shape.cols),
            genome.values[offset..offset + w_len].to_vec(),
        )
        .expect("length checked");
        offset += w_len;
        let bias = Array1::from(genome.values[offset..offset + shape.cols].to_vec());
        offset += shape.cols;
        layers.push(DenseLayer { weights, bias });
    }
    Ok(LayeredParams { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn flatten_order_is_weights_then_bias() {
        let params = LayeredParams {
            layers: vec![DenseLayer {
                weights: array![[1.0, 2.0], [3.0, 4.0]],
                bias: array![5.0, 6.0],
            }],
        };
        let g = flatten(&params).unwrap();
        assert_eq!(g.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(unflatten(&g).unwrap(), params);
    }

    #[test]
    fn flatten_transposed_view_uses_logical_order() {
        let params = LayeredParams {
            layers: vec![DenseLayer {
                weights: array![[1.0, 3.0], [2.0, 4.0]].reversed_axes(),
                bias: array![5.0, 6.0],
            }],
        };
        assert_eq!(
            flatten(&params).unwrap().values(),
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        );
    }

    #[test]
    fn no_hidden_layer_length() {
        let spec = ModelSpec::new(vec![3, 2]).unwrap();
        let g = flatten(&LayeredParams::zeros(&spec)).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.manifest().total_len(), spec.parameter_count());
        assert_eq!(g.manifest().to_spec().unwrap(), spec);
    }

    #[test]
    fn truncated_values_rejected() {
        let manifest = ShapeManifest::new(vec![LayerShape { rows: 2, cols: 2 }]);
        assert!(matches!(
            Genome::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], manifest.clone()),
            Err(Error::LengthMismatch {
                expected: 6,
                actual: 5
            })
        ));
        assert!(matches!(
            Genome::new(vec![1.0, 2.0, f64::NAN, 4.0, 5.0, 6.0], manifest),
            Err(Error::NonFiniteValue { index: 2 })
        ));
    }

    #[test]
    fn compatibility_is_by_manifest() {
        let spec = |w: Vec<usize>| ModelSpec::new(w).unwrap();
        let a = flatten(&LayeredParams::zeros(&spec(vec![2, 8, 2]))).unwrap();
        let b = flatten(&LayeredParams::zeros(&spec(vec![2, 8, 2]))).unwrap();
        let c = flatten(&LayeredParams::zeros(&spec(vec![2, 9, 2]))).unwrap();
        assert!(compatible(&a, &b));
        assert!(!compatible(&a, &c));

        // 1x4+4 and 2x2+2+... : both 8 values, different split
        let x = Genome::new(
            vec![0.0; 8],
            ShapeManifest::new(vec![LayerShape { rows: 1, cols: 4 }]),
        )
        .unwrap();
        let y = Genome::new(
            vec![0.0; 8],
            ShapeManifest::new(vec![LayerShape { rows: 3, cols: 2 }]),
        )
        .unwrap();
        assert_eq!(x.len(), y.len());
        assert!(!compatible(&x, &y));
        assert!(ensure_compatible(&x, &y).is_err());
    }

    #[test]
    fn manifest_chain_is_checked() {
        let m = ShapeManifest::new(vec![
            LayerShape { rows: 2, cols: 3 },
            LayerShape { rows: 4, cols: 2 },
        ]);
        assert!(m.to_spec().is_err());
    }

    #[test]
    fn from_vec_lengths() {
        for n in 1..12 {
            let g = Genome::from_vec(vec![0.5; n]).unwrap();
            assert_eq!(g.len(), n);
        }
    }

    fn arb_params() -> impl Strategy<Value = LayeredParams> {
        prop::collection::vec(1usize..5, 2..5).prop_flat_map(|widths| {
            let spec = ModelSpec::new(widths).unwrap();
            let n = spec.parameter_count();
            prop::collection::vec(-1e6f64..1e6, n).prop_map(move |vals| {
                let manifest = ShapeManifest::from_spec(&spec);
                unflatten(&Genome::new(vals, manifest).unwrap()).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn flatten_unflatten_roundtrip(params in arb_params()) {
            let g = flatten(&params).unwrap();
            let back = unflatten(&g).unwrap();
            prop_assert_eq!(&back, &params);
            prop_assert_eq!(flatten(&back).unwrap(), g);
        }
    }
}
