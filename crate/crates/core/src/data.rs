//! In-memory data model: labeled feature matrices, per-class attribute
//! tables and the seen/unseen class split.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Class identifier. Ids are dense, `0..K`, in attribute-table row order.
pub type ClassId = usize;

/// Labeled feature vectors, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<ClassId>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<ClassId>, class_names: Vec<String>) -> Result<Self> {
        let (n, p) = features.dim();
        if n == 0 || p == 0 {
            return Err(Error::Validation(format!(
                "dataset must have at least one row and one column, got {n}x{p}"
            )));
        }
        if labels.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: labels.len(),
            });
        }
        if let Some((row, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= class_names.len())
        {
            return Err(Error::Validation(format!(
                "row {row}: unknown class id {label} (declared classes: {})",
                class_names.len()
            )));
        }
        if let Some(((row, col), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(Dataset {
            features,
            labels,
            class_names,
        })
    }

    /// Builds a dataset whose class names are generated as `class{id}`.
    pub fn with_class_count(features: Array2<f64>, labels: Vec<ClassId>, classes: usize) -> Result<Self> {
        let names = (0..classes).map(|c| format!("class{c}")).collect();
        Dataset::new(features, labels, names)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, index: usize) -> ArrayView1<'_, f64> {
        self.features.row(index)
    }

    /// Row indices of the samples labeled `class`, in row order.
    pub fn indices_of(&self, class: ClassId) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class).then_some(i))
            .collect()
    }

    /// Row indices whose class is contained in `classes`, in row order.
    pub fn indices_in(&self, classes: &BTreeSet<ClassId>) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| classes.contains(l).then_some(i))
            .collect()
    }

    /// Copies the given rows into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((rows.len(), self.p()));
        for (dst, &src) in rows.iter().enumerate() {
            out.row_mut(dst).assign(&self.features.row(src));
        }
        out
    }
}

/// Per-class attribute descriptions in continuous and binary form.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    continuous: Array2<f64>,
    binary: Array2<u8>,
    class_names: Vec<String>,
}

impl AttributeTable {
    pub fn new(continuous: Array2<f64>, binary: Array2<u8>, class_names: Vec<String>) -> Result<Self> {
        if continuous.dim() != binary.dim() {
            return Err(Error::Validation(format!(
                "continuous attributes are {:?} but binary attributes are {:?}",
                continuous.dim(),
                binary.dim()
            )));
        }
        let (k, d) = continuous.dim();
        if k == 0 || d == 0 {
            return Err(Error::Validation(format!("attribute table is empty ({k}x{d})")));
        }
        if class_names.len() != k {
            return Err(Error::Dimension {
                expected: k,
                actual: class_names.len(),
            });
        }
        if let Some(((row, col), v)) = binary.indexed_iter().find(|(_, &v)| v > 1) {
            return Err(Error::Validation(format!(
                "binary attribute at class {row}, attribute {col} is {v}; expected 0 or 1"
            )));
        }
        if let Some(((row, col), _)) = continuous.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        Ok(AttributeTable {
            continuous,
            binary,
            class_names,
        })
    }

    /// Converts a real-valued binary matrix, rejecting anything but exact 0/1.
    pub fn from_real_binary(continuous: Array2<f64>, binary: &Array2<f64>, class_names: Vec<String>) -> Result<Self> {
        if let Some(((row, col), v)) = binary.indexed_iter().find(|(_, &v)| v != 0.0 && v != 1.0) {
            return Err(Error::Validation(format!(
                "binary attribute at class {row}, attribute {col} is {v}; expected 0 or 1"
            )));
        }
        let binary = binary.mapv(|v| v as u8);
        AttributeTable::new(continuous, binary, class_names)
    }

    pub fn continuous(&self) -> &Array2<f64> {
        &self.continuous
    }

    pub fn binary(&self) -> &Array2<u8> {
        &self.binary
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Number of classes, `K`.
    pub fn k(&self) -> usize {
        self.continuous.nrows()
    }

    /// Attribute dimensionality, `d`.
    pub fn d(&self) -> usize {
        self.continuous.ncols()
    }

    pub fn continuous_row(&self, class: ClassId) -> ArrayView1<'_, f64> {
        self.continuous.row(class)
    }

    pub fn binary_value(&self, class: ClassId, attribute: usize) -> u8 {
        self.binary[[class, attribute]]
    }

    /// Attribute indices where the binary rows of `a` and `b` differ, ascending.
    pub fn differing_attributes(&self, a: ClassId, b: ClassId) -> Vec<usize> {
        (0..self.d())
            .filter(|&n| self.binary[[a, n]] != self.binary[[b, n]])
            .collect()
    }
}

/// Partition of class ids into seen (training) and unseen (target) classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    seen: BTreeSet<ClassId>,
    unseen: BTreeSet<ClassId>,
}

impl SplitSpec {
    pub fn new(seen: BTreeSet<ClassId>, unseen: BTreeSet<ClassId>) -> Result<Self> {
        if let Some(c) = seen.intersection(&unseen).next() {
            return Err(Error::Validation(format!("class {c} is both seen and unseen")));
        }
        if seen.len() < 2 {
            return Err(Error::Validation(format!(
                "at least two seen classes are required, got {}",
                seen.len()
            )));
        }
        if unseen.is_empty() {
            return Err(Error::Validation("at least one unseen class is required".into()));
        }
        Ok(SplitSpec { seen, unseen })
    }

    pub fn seen(&self) -> &BTreeSet<ClassId> {
        &self.seen
    }

    pub fn unseen(&self) -> &BTreeSet<ClassId> {
        &self.unseen
    }

    pub fn is_seen(&self, class: ClassId) -> bool {
        self.seen.contains(&class)
    }

    pub fn is_unseen(&self, class: ClassId) -> bool {
        self.unseen.contains(&class)
    }

    /// Checks the split against an attribute table and a dataset: every id
    /// must be a declared class and every sample's class must be covered.
    pub fn validate(&self, attrs: &AttributeTable, dataset: &Dataset) -> Result<()> {
        let k = attrs.k();
        if let Some(&c) = self.seen.iter().chain(&self.unseen).find(|&&c| c >= k) {
            return Err(Error::Validation(format!(
                "split references class {c} but the attribute table has {k} classes"
            )));
        }
        if let Some((row, &l)) = dataset
            .labels()
            .iter()
            .enumerate()
            .find(|(_, l)| !self.seen.contains(l) && !self.unseen.contains(l))
        {
            return Err(Error::Validation(format!(
                "row {row}: class {l} is in neither the seen nor the unseen set"
            )));
        }
        if k != dataset.class_names().len() {
            return Err(Error::Validation(format!(
                "dataset declares {} classes but the attribute table has {k}",
                dataset.class_names().len()
            )));
        }
        Ok(())
    }
}

/// Arithmetic mean of each requested class's feature rows.
pub fn class_centroids(dataset: &Dataset, classes: &BTreeSet<ClassId>) -> Result<BTreeMap<ClassId, Array1<f64>>> {
    let p = dataset.p();
    let mut sums: BTreeMap<ClassId, (Array1<f64>, usize)> =
        classes.iter().map(|&c| (c, (Array1::zeros(p), 0))).collect();
    for (i, label) in dataset.labels().iter().enumerate() {
        if let Some((sum, count)) = sums.get_mut(label) {
            *sum += &dataset.row(i);
            *count += 1;
        }
    }
    sums.into_iter()
        .map(|(c, (sum, count))| {
            if count == 0 {
                Err(Error::EmptyClass(c))
            } else {
                Ok((c, sum / count as f64))
            }
        })
        .collect()
}
