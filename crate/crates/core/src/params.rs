//! Flat parameter views shared by every trainable model.

use serde::{Deserialize, Serialize};

use crate::autodiff::{GradientBundle, NodeId, Tape};
use crate::error::{Error, Result};
use crate::tensor::Mat;

/// Borrowed view of one parameter array.
#[derive(Clone, Copy, Debug)]
pub struct ParamRef<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

/// Anything with an ordered list of real parameter arrays.
///
/// The order of `params` is the serialization order and the slot order on a
/// tape; `params_mut` must yield the same arrays in the same order.
pub trait Parametric {
    fn params(&self) -> Vec<ParamRef<'_>>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.params().iter().map(|p| (p.rows, p.cols)).collect()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    fn to_store(&self) -> ParameterStore {
        ParameterStore {
            shapes: self.param_shapes(),
            values: self.params().iter().flat_map(|p| p.data.iter().copied()).collect(),
        }
    }

    fn load_store(&mut self, store: &ParameterStore) -> Result<()> {
        let shapes = self.param_shapes();
        if shapes != store.shapes {
            return Err(Error::Format(format!(
                "parameter layout mismatch: model has {} arrays ({} values), store has {} arrays ({} values)",
                shapes.len(),
                self.param_count(),
                store.shapes.len(),
                store.values.len()
            )));
        }
        self.load_flat(&store.values)
    }

    fn load_flat(&mut self, values: &[f64]) -> Result<()> {
        let total = self.param_count();
        if values.len() != total {
            return Err(Error::shape("load_flat", total, values.len()));
        }
        let mut offset = 0;
        for slot in self.params_mut() {
            let len = slot.len();
            slot.copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// Registers every array as a parameter leaf, in order.
    fn register(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.params()
            .iter()
            .map(|p| tape.parameter(Mat::from_vec(p.rows, p.cols, p.data.to_vec())))
            .collect()
    }

    /// Registers every array as a constant leaf, in order.
    fn register_constant(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.params()
            .iter()
            .map(|p| tape.input_real(Mat::from_vec(p.rows, p.cols, p.data.to_vec())))
            .collect()
    }
}

/// Owned flat copy of a model's parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterStore {
    pub shapes: Vec<(usize, usize)>,
    pub values: Vec<f64>,
}

impl ParameterStore {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn flatten_bundle(&self, bundle: &GradientBundle) -> Result<Vec<f64>> {
        let shapes: Vec<_> = bundle.grads.iter().map(Mat::shape).collect();
        if shapes != self.shapes {
            return Err(Error::shape("gradient bundle", self.shapes.len(), shapes.len()));
        }
        Ok(bundle.flatten())
    }
}

/// Hands out consecutive parameter node ids during recording.
pub struct ParamCursor<'a> {
    ids: &'a [NodeId],
    pos: usize,
}

impl<'a> ParamCursor<'a> {
    pub fn new(ids: &'a [NodeId]) -> Self {
        Self { ids, pos: 0 }
    }

    pub fn next_id(&mut self) -> Result<NodeId> {
        let id = self
            .ids
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::shape("parameter cursor", self.pos + 1, self.ids.len()))?;
        self.pos += 1;
        Ok(id)
    }

    pub fn remaining(&self) -> usize {
        self.ids.len() - self.pos
    }
}
