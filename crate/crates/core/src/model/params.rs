use crate::error::{Error, Result};

/// One named block inside a [`ParameterVector`], stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    pub name: &'static str,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterLayout {
    entries: Vec<LayoutEntry>,
    len: usize,
}

impl ParameterLayout {
    pub fn new(blocks: &[(&'static str, usize, usize)]) -> Self {
        let mut offset = 0;
        let entries = blocks
            .iter()
            .map(|&(name, rows, cols)| {
                let entry = LayoutEntry {
                    name,
                    offset,
                    rows,
                    cols,
                };
                offset += rows * cols;
                entry
            })
            .collect();
        ParameterLayout {
            entries,
            len: offset,
        }
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Flat, ordered view of every trainable scalar of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    layout: ParameterLayout,
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn zeros(layout: ParameterLayout) -> Self {
        let values = vec![0.0; layout.len()];
        ParameterVector { layout, values }
    }

    pub fn from_values(layout: ParameterLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                actual: values.len(),
            });
        }
        Ok(ParameterVector { layout, values })
    }

    pub fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, name: &str) -> &[f64] {
        let entry = self.layout.entry(name).expect("layout block exists");
        &self.values[entry.range()]
    }

    pub fn block_mut(&mut self, name: &str) -> &mut [f64] {
        let range = self
            .layout
            .entry(name)
            .expect("layout block exists")
            .range();
        &mut self.values[range]
    }

    pub fn ensure_same_layout(&self, other: &ParameterVector) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch);
        }
        Ok(())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ParameterVector) -> Result<()> {
        self.ensure_same_layout(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        self.values.iter_mut().for_each(|v| *v = value);
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &ParameterVector) -> Result<f64> {
        self.ensure_same_layout(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}
