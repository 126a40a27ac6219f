//! Domain types shared by every other module: labels, feedback, sparse
//! examples and datasets.

use std::fmt;

use crate::error::{Error, Result};

/// The label set `{1, ..., num_labels}`. The value 0 is reserved for
/// abstention feedback and is never a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelSpace {
    num_labels: usize,
}

impl LabelSpace {
    pub fn new(num_labels: usize) -> Result<Self> {
        if num_labels < 2 {
            return Err(Error::InvalidLabelSpace(num_labels));
        }
        Ok(LabelSpace { num_labels })
    }

    pub fn binary() -> Self {
        LabelSpace { num_labels: 2 }
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn contains(&self, label: u32) -> bool {
        label >= 1 && (label as usize) <= self.num_labels
    }

    pub fn check(&self, label: u32) -> Result<u32> {
        if self.contains(label) {
            Ok(label)
        } else {
            Err(Error::InvalidLabel {
                label,
                num_labels: self.num_labels,
            })
        }
    }

    /// Labels in ascending order.
    pub fn labels(&self) -> impl Iterator<Item = u32> {
        1..=self.num_labels as u32
    }
}

/// What the labeler returns for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feedback {
    Abstain,
    Label(u32),
}

impl Feedback {
    /// Integer encoding: 0 for abstention, the label otherwise.
    pub fn value(self) -> u32 {
        match self {
            Feedback::Abstain => 0,
            Feedback::Label(y) => y,
        }
    }

    pub fn from_value(value: u32) -> Self {
        if value == 0 {
            Feedback::Abstain
        } else {
            Feedback::Label(value)
        }
    }

    pub fn is_abstain(self) -> bool {
        matches!(self, Feedback::Abstain)
    }
}

impl fmt::Display for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Sparse feature vector with strictly increasing indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVec {
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::BadInput(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadInput(
                "feature indices must be strictly increasing".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::BadInput(format!("non-finite feature value {v}")));
        }
        Ok(SparseVec { indices, values })
    }

    /// Builds a sparse vector from a dense slice, dropping exact zeros.
    pub fn from_dense(dense: &[f64]) -> Result<Self> {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        SparseVec::new(indices, values)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// One past the largest stored index.
    pub fn dim(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    /// Dot product with a dense vector; indices beyond `dense` contribute 0.
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter()
            .filter_map(|(i, v)| dense.get(i).map(|w| w * v))
            .sum()
    }
}

/// One pool or test example. `label` is `None` for redundant examples,
/// which belong to no target class.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub index: usize,
    pub features: SparseVec,
    pub label: Option<u32>,
}

impl Example {
    pub fn new(index: usize, features: SparseVec, label: Option<u32>) -> Self {
        Example {
            index,
            features,
            label,
        }
    }

    pub fn is_redundant(&self) -> bool {
        self.label.is_none()
    }
}

/// An indexed collection of examples. Example `i` always has `index == i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    label_space: LabelSpace,
}

impl Dataset {
    /// Builds a dataset, re-indexing examples by position.
    pub fn new(examples: Vec<Example>, label_space: LabelSpace) -> Result<Self> {
        let mut examples = examples;
        for (i, ex) in examples.iter_mut().enumerate() {
            if let Some(y) = ex.label {
                label_space.check(y)?;
            }
            ex.index = i;
        }
        Ok(Dataset {
            examples,
            label_space,
        })
    }

    pub fn label_space(&self) -> LabelSpace {
        self.label_space
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, index: usize) -> Result<&Example> {
        self.examples.get(index).ok_or(Error::UnknownExample(index))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    /// One past the largest feature index in use.
    pub fn dim(&self) -> usize {
        self.examples
            .iter()
            .map(|e| e.features.dim())
            .max()
            .unwrap_or(0)
    }

    pub fn num_redundant(&self) -> usize {
        self.examples.iter().filter(|e| e.is_redundant()).count()
    }

    /// New dataset holding clones of the selected examples, re-indexed.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let examples = indices
            .iter()
            .map(|&i| self.get(i).cloned())
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(examples, self.label_space)
    }

    /// Only the examples carrying a target label.
    pub fn targets_only(&self) -> Dataset {
        let examples = self
            .examples
            .iter()
            .filter(|e| !e.is_redundant())
            .cloned()
            .collect();
        Dataset::new(examples, self.label_space).expect("labels already validated")
    }

    pub fn into_examples(self) -> Vec<Example> {
        self.examples
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Example;
    type IntoIter = std::slice::Iter<'a, Example>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_space_rejects_fewer_than_two() {
        assert!(LabelSpace::new(1).is_err());
        assert!(LabelSpace::new(0).is_err());
        let ls = LabelSpace::new(3).unwrap();
        assert!(!ls.contains(0));
        assert!(ls.contains(3));
        assert!(!ls.contains(4));
    }

    #[test]
    fn feedback_encoding() {
        assert_eq!(Feedback::Abstain.value(), 0);
        assert_eq!(Feedback::from_value(2), Feedback::Label(2));
        assert!(Feedback::from_value(0).is_abstain());
    }

    #[test]
    fn sparse_vec_requires_increasing_indices() {
        assert!(SparseVec::new(vec![3, 7], vec![0.5, 1.0]).is_ok());
        assert!(SparseVec::new(vec![7, 3], vec![1.0, 0.5]).is_err());
        assert!(SparseVec::new(vec![3, 3], vec![1.0, 0.5]).is_err());
        assert!(SparseVec::new(vec![1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn sparse_dot_ignores_out_of_range() {
        let v = SparseVec::new(vec![0, 5], vec![2.0, 3.0]).unwrap();
        assert_eq!(v.dot(&[1.0, 1.0]), 2.0);
        assert_eq!(v.dim(), 6);
    }

    #[test]
    fn dataset_reindexes_and_validates_labels() {
        let ls = LabelSpace::binary();
        let ex = |i, y| Example::new(i, SparseVec::default(), y);
        let ds = Dataset::new(vec![ex(9, Some(1)), ex(4, None)], ls).unwrap();
        assert_eq!(ds.examples()[1].index, 1);
        assert_eq!(ds.num_redundant(), 1);
        assert!(Dataset::new(vec![ex(0, Some(3))], ls).is_err());
    }
}
