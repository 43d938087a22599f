use std::collections::BTreeMap;

/// Output of one operator.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Table(Table),
    Features(FeatureMatrix),
    Model(Model),
    Predictions(Predictions),
    Scalar(f64),
    Sim(SimBlob),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Table(_) => "table",
            Value::Features(_) => "features",
            Value::Model(_) => "model",
            Value::Predictions(_) => "predictions",
            Value::Scalar(_) => "scalar",
            Value::Sim(_) => "sim",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Float(Vec<f64>),
    Text(Vec<String>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Float(v) => v.len(),
            ColumnData::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells rendered as text; floats use the shortest round-trip form.
    pub fn as_strings(&self) -> Vec<String> {
        match self {
            ColumnData::Float(v) => v.iter().map(|x| crate::dsl::format_number(*x)).collect(),
            ColumnData::Text(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<Column>,
}

impl Table {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.data.len())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Dense row-major matrix with named feature columns. `labels` carries raw
/// label columns alongside the features so learners and metrics can find
/// them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: usize,
    pub data: Vec<f64>,
    pub labels: BTreeMap<String, Vec<String>>,
}

impl FeatureMatrix {
    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }
}

/// Binary logistic regression model; `classes[1]` is the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub features: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub label: String,
    pub classes: [String; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub scores: Vec<f64>,
    /// Predicted class per row.
    pub labels: Vec<String>,
    pub classes: [String; 2],
    /// Ground-truth label columns carried from the scored features.
    pub truth: BTreeMap<String, Vec<String>>,
}

/// Opaque payload of a simulated operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimBlob {
    pub size_bytes: u64,
}
