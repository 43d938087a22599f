//! Built-in operator registry.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::logreg;
use super::value::{Column, ColumnData, FeatureMatrix, Model, Predictions, SimBlob, Table, Value};
use crate::dsl::{format_number, Literal, Positional};
use crate::graph::DagNode;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OpError {
    #[error("{0}")]
    Params(String),
    #[error("expected {expected} input, got {got}")]
    Schema {
        expected: &'static str,
        got: &'static str,
    },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("label `{label}` has {classes} distinct values; logistic regression needs exactly 2")]
    NonBinaryLabel { label: String, classes: usize },
    #[error("{0}")]
    Data(String),
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
}

/// Keyword-argument reader that rejects keys nobody asked for.
struct Params<'a> {
    named: &'a BTreeMap<String, Literal>,
    used: BTreeSet<&'a str>,
}

impl<'a> Params<'a> {
    fn new(named: &'a BTreeMap<String, Literal>) -> Self {
        Params {
            named,
            used: BTreeSet::new(),
        }
    }

    fn get(&mut self, key: &'a str) -> Option<&'a Literal> {
        self.used.insert(key);
        self.named.get(key)
    }

    fn num(&mut self, key: &'a str, default: f64) -> Result<f64, OpError> {
        match self.get(key) {
            None => Ok(default),
            Some(Literal::Num(n)) => Ok(*n),
            Some(_) => Err(OpError::Params(format!("`{key}` must be a number"))),
        }
    }

    fn text(&mut self, key: &'a str) -> Result<Option<&'a str>, OpError> {
        match self.get(key) {
            None => Ok(None),
            Some(lit) => lit
                .as_str()
                .map(Some)
                .ok_or_else(|| OpError::Params(format!("`{key}` must be a string"))),
        }
    }

    fn required_text(&mut self, key: &'a str) -> Result<&'a str, OpError> {
        self.text(key)?
            .ok_or_else(|| OpError::Params(format!("missing `{key}=`")))
    }

    fn finish(self) -> Result<(), OpError> {
        match self.named.keys().find(|k| !self.used.contains(k.as_str())) {
            Some(k) => Err(OpError::Params(format!("unknown parameter `{k}`"))),
            None => Ok(()),
        }
    }
}

fn literals(node: &DagNode) -> Vec<&Positional> {
    node.positional
        .iter()
        .filter(|p| !matches!(p, Positional::Ref(_)))
        .collect()
}

fn literal_str<'a>(node: &'a DagNode, idx: usize, what: &str) -> Result<&'a str, OpError> {
    match literals(node).get(idx) {
        Some(Positional::Str(s)) => Ok(s),
        _ => Err(OpError::Params(format!("expected {what} string argument"))),
    }
}

fn arity(inputs: &[&Value], n: usize) -> Result<(), OpError> {
    if inputs.len() != n {
        return Err(OpError::Params(format!(
            "expected {n} parent(s), got {}",
            inputs.len()
        )));
    }
    Ok(())
}

fn table(v: &Value) -> Result<&Table, OpError> {
    match v {
        Value::Table(t) => Ok(t),
        other => Err(OpError::Schema {
            expected: "table",
            got: other.type_name(),
        }),
    }
}

fn features(v: &Value) -> Result<&FeatureMatrix, OpError> {
    match v {
        Value::Features(f) => Ok(f),
        other => Err(OpError::Schema {
            expected: "features",
            got: other.type_name(),
        }),
    }
}

fn column<'t>(t: &'t Table, name: &str) -> Result<&'t Column, OpError> {
    t.column(name)
        .ok_or_else(|| OpError::UnknownColumn(name.to_string()))
}

fn float_column<'t>(t: &'t Table, name: &str) -> Result<&'t [f64], OpError> {
    match &column(t, name)?.data {
        ColumnData::Float(v) => Ok(v),
        ColumnData::Text(_) => Err(OpError::Data(format!("column `{name}` is not numeric"))),
    }
}

/// Runs `node`'s operator on its parents' values.
pub fn run_operator(node: &DagNode, inputs: &[&Value], base_dir: &Path) -> Result<Value, OpError> {
    let mut params = Params::new(&node.named);
    let out = match node.func.as_str() {
        "csv" => {
            arity(inputs, 0)?;
            read_csv(base_dir, literal_str(node, 0, "path")?)?
        }
        "numeric" => {
            arity(inputs, 1)?;
            let t = table(inputs[0])?;
            let name = literal_str(node, 0, "column")?;
            let col = float_column(t, name)?;
            Value::Features(FeatureMatrix {
                names: vec![name.to_string()],
                rows: col.len(),
                data: col.to_vec(),
                labels: BTreeMap::new(),
            })
        }
        "categorical" => {
            arity(inputs, 1)?;
            let t = table(inputs[0])?;
            let name = literal_str(node, 0, "column")?;
            let cells = column(t, name)?.data.as_strings();
            let levels: Vec<&String> = cells.iter().collect::<BTreeSet<_>>().into_iter().collect();
            let mut data = vec![0.0; cells.len() * levels.len()];
            for (i, cell) in cells.iter().enumerate() {
                let j = levels.binary_search(&cell).unwrap();
                data[i * levels.len() + j] = 1.0;
            }
            Value::Features(FeatureMatrix {
                names: levels.iter().map(|l| format!("{name}={l}")).collect(),
                rows: cells.len(),
                data,
                labels: BTreeMap::new(),
            })
        }
        "bucketize" => {
            arity(inputs, 1)?;
            let t = table(inputs[0])?;
            let name = literal_str(node, 0, "column")?;
            let edges: Vec<f64> = literals(node)[1..]
                .iter()
                .map(|p| match p {
                    Positional::Num(n) => Ok(*n),
                    _ => Err(OpError::Params("bucket edges must be numbers".into())),
                })
                .collect::<Result<_, _>>()?;
            if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(OpError::Params(
                    "bucket edges must be nonempty and strictly increasing".into(),
                ));
            }
            bucketize(name, float_column(t, name)?, &edges)
        }
        "label" => {
            arity(inputs, 1)?;
            let t = table(inputs[0])?;
            let name = literal_str(node, 0, "column")?;
            Value::Features(FeatureMatrix {
                names: Vec::new(),
                rows: t.rows(),
                data: Vec::new(),
                labels: BTreeMap::from([(name.to_string(), column(t, name)?.data.as_strings())]),
            })
        }
        "union" => union(inputs)?,
        "logreg" => {
            arity(inputs, 1)?;
            let x = features(inputs[0])?;
            let label = params.required_text("label")?;
            let positive = params.text("positive")?;
            let reg = params.num("reg", 0.0)?;
            let iters = params.num("iters", 100.0)?;
            let lr = params.num("lr", 0.1)?;
            // weights start at zero, so training does not depend on the seed;
            // it is accepted to keep learner declarations uniform
            let _seed = params.num("seed", 0.0)?;
            if !(iters >= 0.0 && iters.fract() == 0.0) {
                return Err(OpError::Params(
                    "`iters` must be a nonnegative integer".into(),
                ));
            }
            logistic_regression(x, label, positive, reg, iters as usize, lr)?
        }
        "predict" => {
            arity(inputs, 2)?;
            let Value::Model(model) = inputs[0] else {
                return Err(OpError::Schema {
                    expected: "model",
                    got: inputs[0].type_name(),
                });
            };
            predict(model, features(inputs[1])?)?
        }
        "accuracy" | "f1" => {
            arity(inputs, 1)?;
            let Value::Predictions(p) = inputs[0] else {
                return Err(OpError::Schema {
                    expected: "predictions",
                    got: inputs[0].type_name(),
                });
            };
            let label = params.required_text("label")?;
            let truth = p
                .truth
                .get(label)
                .ok_or_else(|| OpError::UnknownColumn(label.to_string()))?;
            if truth.is_empty() {
                return Err(OpError::Data("no rows to score".into()));
            }
            Value::Scalar(if node.func == "accuracy" {
                accuracy(&p.labels, truth)
            } else {
                f1(&p.labels, truth, &p.classes[1])
            })
        }
        "sim" => {
            if !literals(node).is_empty() {
                return Err(OpError::Params("sim takes only parent references".into()));
            }
            let _cost = params.num("cost_ms", 0.0)?;
            let size_kb = params.num("size_kb", 0.0)?;
            let _tag = params.get("tag");
            if size_kb < 0.0 {
                return Err(OpError::Params("`size_kb` must be nonnegative".into()));
            }
            Value::Sim(SimBlob {
                size_bytes: (size_kb * 1024.0).round() as u64,
            })
        }
        other => return Err(OpError::Params(format!("no operator `{other}`"))),
    };
    params.finish()?;
    Ok(out)
}

/// Declared simulated cost of a `sim` node, in microseconds.
pub fn sim_cost_us(node: &DagNode) -> Option<u64> {
    if node.func != "sim" {
        return None;
    }
    let ms = node
        .named
        .get("cost_ms")
        .and_then(Literal::as_f64)
        .unwrap_or(0.0);
    Some((ms.max(0.0) * 1000.0).round() as u64)
}

fn read_csv(base: &Path, path: &str) -> Result<Value, OpError> {
    let full = base.join(path);
    let io = |message: String| OpError::Io {
        path: full.display().to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&full)
        .map_err(|e| io(e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| io(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for record in reader.records() {
        let record = record.map_err(|e| io(e.to_string()))?;
        for (col, field) in cells.iter_mut().zip(record.iter()) {
            col.push(field.to_string());
        }
    }
    let columns = headers
        .into_iter()
        .zip(cells)
        .map(|(name, raw)| {
            let parsed: Option<Vec<f64>> = raw
                .iter()
                .map(|s| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect();
            let data = match parsed {
                Some(v) if !v.is_empty() => ColumnData::Float(v),
                _ => ColumnData::Text(raw),
            };
            Column { name, data }
        })
        .collect();
    Ok(Value::Table(Table { columns }))
}

fn bucketize(name: &str, col: &[f64], edges: &[f64]) -> Value {
    let k = edges.len() + 1;
    let e = |x: f64| format_number(x);
    let mut names = Vec::with_capacity(k);
    names.push(format!("{name}<{}", e(edges[0])));
    for w in edges.windows(2) {
        names.push(format!("{}<={name}<{}", e(w[0]), e(w[1])));
    }
    names.push(format!("{name}>={}", e(edges[edges.len() - 1])));
    let mut data = vec![0.0; col.len() * k];
    for (i, x) in col.iter().enumerate() {
        let bucket = edges.partition_point(|edge| edge <= x);
        data[i * k + bucket] = 1.0;
    }
    Value::Features(FeatureMatrix {
        names,
        rows: col.len(),
        data,
        labels: BTreeMap::new(),
    })
}

fn union(inputs: &[&Value]) -> Result<Value, OpError> {
    if inputs.is_empty() {
        return Err(OpError::Params("union needs at least one parent".into()));
    }
    let parts: Vec<&FeatureMatrix> = inputs
        .iter()
        .map(|v| features(v))
        .collect::<Result<_, _>>()?;
    let rows = parts[0].rows;
    if let Some(p) = parts.iter().find(|p| p.rows != rows) {
        return Err(OpError::Data(format!(
            "union of {rows}-row and {}-row features",
            p.rows
        )));
    }
    let mut names: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut labels: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for p in &parts {
        for n in &p.names {
            if !seen.insert(n.clone()) {
                return Err(OpError::Data(format!("duplicate feature `{n}` in union")));
            }
            names.push(n.clone());
        }
        for (k, v) in &p.labels {
            match labels.get(k) {
                Some(existing) if existing != v => {
                    return Err(OpError::Data(format!("conflicting label column `{k}`")))
                }
                _ => {
                    labels.insert(k.clone(), v.clone());
                }
            }
        }
    }
    let mut data = Vec::with_capacity(rows * names.len());
    for i in 0..rows {
        for p in &parts {
            data.extend_from_slice(p.row(i));
        }
    }
    Ok(Value::Features(FeatureMatrix {
        names,
        rows,
        data,
        labels,
    }))
}

fn logistic_regression(
    x: &FeatureMatrix,
    label: &str,
    positive: Option<&str>,
    reg: f64,
    iters: usize,
    lr: f64,
) -> Result<Value, OpError> {
    let raw = x
        .labels
        .get(label)
        .ok_or_else(|| OpError::UnknownColumn(label.to_string()))?;
    let classes: Vec<&String> = raw.iter().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() != 2 {
        return Err(OpError::NonBinaryLabel {
            label: label.to_string(),
            classes: classes.len(),
        });
    }
    let mut pair = [classes[0].clone(), classes[1].clone()];
    if let Some(pos) = positive {
        if pair[0] == pos {
            pair.swap(0, 1);
        } else if pair[1] != pos {
            return Err(OpError::Params(format!(
                "positive class `{pos}` not in label `{label}`"
            )));
        }
    }
    let y: Vec<f64> = raw.iter().map(|v| f64::from(*v == pair[1])).collect();
    let (weights, bias) = logreg::train(x, &y, reg, iters, lr);
    Ok(Value::Model(Model {
        features: x.names.clone(),
        weights,
        bias,
        label: label.to_string(),
        classes: pair,
    }))
}

fn predict(model: &Model, x: &FeatureMatrix) -> Result<Value, OpError> {
    let cols: Vec<usize> = model
        .features
        .iter()
        .map(|f| {
            x.names
                .iter()
                .position(|n| n == f)
                .ok_or_else(|| OpError::UnknownColumn(f.clone()))
        })
        .collect::<Result<_, _>>()?;
    let scores: Vec<f64> = (0..x.rows)
        .map(|i| {
            let z: f64 = cols
                .iter()
                .zip(&model.weights)
                .map(|(&j, w)| x.get(i, j) * w)
                .sum::<f64>()
                + model.bias;
            logreg::sigmoid(z)
        })
        .collect();
    let labels = scores
        .iter()
        .map(|&s| model.classes[usize::from(s >= 0.5)].clone())
        .collect();
    Ok(Value::Predictions(Predictions {
        scores,
        labels,
        classes: model.classes.clone(),
        truth: x.labels.clone(),
    }))
}

fn accuracy(pred: &[String], truth: &[String]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

fn f1(pred: &[String], truth: &[String], positive: &str) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (p, t) in pred.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse, KNOWN_FUNCS};
    use crate::graph::compile;

    fn table_value() -> Value {
        Value::Table(Table {
            columns: vec![
                Column {
                    name: "x".into(),
                    data: ColumnData::Float(vec![1.0, 2.0, 3.0, 4.0]),
                },
                Column {
                    name: "c".into(),
                    data: ColumnData::Text(vec!["b".into(), "a".into(), "c".into(), "a".into()]),
                },
                Column {
                    name: "y".into(),
                    data: ColumnData::Text(vec![
                        "no".into(),
                        "no".into(),
                        "yes".into(),
                        "yes".into(),
                    ]),
                },
            ],
        })
    }

    fn node(decl: &str) -> DagNode {
        let src = format!("workflow w\nsim t = sim()\nsim u = sim()\n{decl}\nmetric m = sim()\n");
        let dag = compile(&parse(&src).unwrap()).unwrap();
        let name = decl.split_whitespace().nth(1).unwrap();
        dag.node(name).clone()
    }

    fn run(decl: &str, inputs: &[&Value]) -> Result<Value, OpError> {
        run_operator(&node(decl), inputs, Path::new("."))
    }

    fn fm(v: Value) -> FeatureMatrix {
        match v {
            Value::Features(f) => f,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn registry_covers_known_funcs() {
        for f in KNOWN_FUNCS {
            let n = DagNode {
                func: f.to_string(),
                ..node("sim s = sim()")
            };
            let err = run_operator(&n, &[], Path::new("."));
            assert!(
                !matches!(err, Err(OpError::Params(ref m)) if m.starts_with("no operator")),
                "{f}"
            );
        }
    }

    #[test]
    fn categorical_is_one_hot() {
        let f = fm(run("extractor e = categorical(t, \"c\")", &[&table_value()]).unwrap());
        assert_eq!(f.names, ["c=a", "c=b", "c=c"]);
        for i in 0..f.rows {
            assert_eq!(f.row(i).iter().sum::<f64>(), 1.0);
        }
        assert_eq!(f.row(0), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn bucketize_edges() {
        let f = fm(run(
            "extractor e = bucketize(t, \"x\", 2, 3.5)",
            &[&table_value()],
        )
        .unwrap());
        assert_eq!(f.names, ["x<2", "2<=x<3.5", "x>=3.5"]);
        assert_eq!(f.data, [1., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 1.]);
        assert!(run("extractor e = bucketize(t, \"x\", 3, 2)", &[&table_value()]).is_err());
    }

    #[test]
    fn numeric_rejects_text_and_unknown_columns() {
        assert!(matches!(
            run("extractor e = numeric(t, \"c\")", &[&table_value()]),
            Err(OpError::Data(_))
        ));
        assert_eq!(
            run("extractor e = numeric(t, \"zz\")", &[&table_value()]),
            Err(OpError::UnknownColumn("zz".into()))
        );
    }

    #[test]
    fn wrong_input_type() {
        assert!(matches!(
            run("extractor e = numeric(t, \"x\")", &[&Value::Scalar(1.0)]),
            Err(OpError::Schema {
                expected: "table",
                ..
            })
        ));
    }

    #[test]
    fn union_merges_columns_and_labels() {
        let t = table_value();
        let a = run("extractor e = numeric(t, \"x\")", &[&t]).unwrap();
        let l = run("extractor e = label(t, \"y\")", &[&t]).unwrap();
        let u = fm(run("features f = union(t, u)", &[&a, &l]).unwrap());
        assert_eq!(u.names, ["x"]);
        assert_eq!(u.labels["y"], ["no", "no", "yes", "yes"]);
        assert!(run("features f = union(t, u)", &[&a, &a]).is_err());
    }

    #[test]
    fn logreg_predict_accuracy_pipeline() {
        let t = table_value();
        let x = run("extractor e = numeric(t, \"x\")", &[&t]).unwrap();
        let l = run("extractor e = label(t, \"y\")", &[&t]).unwrap();
        let f = run("features f = union(t, u)", &[&x, &l]).unwrap();
        let model = run(
            "learner m2 = logreg(t, label=\"y\", iters=500, lr=0.5)",
            &[&f],
        )
        .unwrap();
        let pred = run("output p = predict(t, u)", &[&model, &f]).unwrap();
        let acc = run("metric a = accuracy(t, label=\"y\")", &[&pred]).unwrap();
        assert_eq!(acc, Value::Scalar(1.0));
        let f1v = run("metric a = f1(t, label=\"y\")", &[&pred]).unwrap();
        assert_eq!(f1v, Value::Scalar(1.0));
    }

    #[test]
    fn logreg_requires_binary_label() {
        let t = table_value();
        let l = run("extractor e = label(t, \"c\")", &[&t]).unwrap();
        assert_eq!(
            run("learner m2 = logreg(t, label=\"c\")", &[&l]),
            Err(OpError::NonBinaryLabel {
                label: "c".into(),
                classes: 3
            })
        );
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        assert!(matches!(
            run("sim s = sim(cost_ms=1, bogus=2)", &[]),
            Err(OpError::Params(_))
        ));
    }

    #[test]
    fn f1_counts() {
        let p: Vec<String> = ["y", "y", "n", "n"].map(String::from).to_vec();
        let t: Vec<String> = ["y", "n", "y", "n"].map(String::from).to_vec();
        assert_eq!(f1(&p, &t, "y"), 0.5);
        assert_eq!(accuracy(&p, &t), 0.5);
    }

    #[test]
    fn sim_size_and_cost() {
        let n = node("sim s = sim(cost_ms=2.5, size_kb=3)");
        assert_eq!(sim_cost_us(&n), Some(2500));
        assert_eq!(
            run_operator(&n, &[], Path::new(".")).unwrap(),
            Value::Sim(SimBlob { size_bytes: 3072 })
        );
    }
}
