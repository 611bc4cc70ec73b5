//! Problem files, schema `psarp-problem/1`.
//!
//! A file either lists elements explicitly or names a generator:
//!
//! ```json
//! { "schema": "psarp-problem/1", "n": 2, "q": 0.5,
//!   "elements": [
//!     { "set": "N", "kind": "quadratic", "params": { "hessian": [[2]] }, "U": [[1, 0]] },
//!     { "set": "H", "U": [[0, 1]] } ],
//!   "feasible": { "kind": "box", "params": { "lo": [-1, -1], "hi": [1, 1] } } }
//!
//! { "schema": "psarp-problem/1", "generator": "lq-regression",
//!   "params": { "n": 20, "m": 30, "q": 0.5 }, "seed": 7 }
//! ```
//!
//! Errors carry a JSON-pointer style location such as `/elements/1/U`.

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use crate::element::ElementFunction;
use crate::error::{PsarpError, Result};
use crate::feasible::{FeasibleSet, SetKind};
use crate::problem::{ElementMap, NiceElement, Problem};

pub const PROBLEM_SCHEMA: &str = "psarp-problem/1";

#[derive(Debug, Clone)]
pub enum Source {
    Explicit(Problem),
    Generator { name: String, params: Map<String, Value> },
}

#[derive(Debug, Clone)]
pub struct Descriptor {
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub source: Source,
}

pub fn parse(text: &str) -> Result<Descriptor> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| PsarpError::parse(format!("line {}", e.line()), e.to_string()))?;
    from_value(&value)
}

pub fn from_value(value: &Value) -> Result<Descriptor> {
    let root = Node::root(value);
    let schema = root.field("schema")?.string()?;
    if schema != PROBLEM_SCHEMA {
        return Err(root.field("schema")?.error(format!("expected {PROBLEM_SCHEMA:?}, found {schema:?}")));
    }
    let name = root.opt("name").map(|n| n.string()).transpose()?;
    let seed = root.opt("seed").map(|n| n.u64()).transpose()?;
    if let Some(g) = root.opt("generator") {
        let params = match root.opt("params") {
            Some(p) => p.object()?.clone(),
            None => Map::new(),
        };
        return Ok(Descriptor {
            name,
            seed,
            source: Source::Generator {
                name: g.string()?,
                params,
            },
        });
    }
    let problem = parse_problem(&root)?;
    Ok(Descriptor {
        name,
        seed,
        source: Source::Explicit(problem),
    })
}

fn parse_problem(root: &Node) -> Result<Problem> {
    let n = root.field("n")?.usize()?;
    let q = root.field("q")?.f64()?;
    let mut nice = Vec::new();
    let mut singular = Vec::new();
    for element in root.field("elements")?.array()? {
        let u = element.field("U")?;
        let rows = u.matrix()?;
        if rows.ncols() != n {
            return Err(u.error(format!("rows must have length n = {n}, found {}", rows.ncols())));
        }
        let map = ElementMap::new(rows).map_err(|e| u.error(e.to_string()))?;
        match element.field("set")?.string()?.as_str() {
            "N" => {
                let function = parse_function(&element, map.element_dim())?;
                nice.push(NiceElement { function, map });
            }
            "H" => {
                if let Some(kind) = element.opt("kind") {
                    if kind.string()? != "abs-power" {
                        return Err(kind.error("singular elements are always \"abs-power\""));
                    }
                }
                if map.element_dim() != 1 {
                    return Err(u.error("singular elements need a single row"));
                }
                singular.push(map);
            }
            other => {
                return Err(element
                    .field("set")?
                    .error(format!("expected \"N\" or \"H\", found {other:?}")))
            }
        }
    }
    let feasible = parse_set(&root.field("feasible")?, n)?;
    let problem = Problem::new(n, nice, singular, q, feasible).map_err(|e| root.error(e.to_string()))?;
    match root.opt("x0") {
        Some(x0) => {
            let v = x0.vector()?;
            problem.with_start(v).map_err(|e| x0.error(e.to_string()))
        }
        None => Ok(problem),
    }
}

fn parse_function(element: &Node, dim: usize) -> Result<ElementFunction> {
    let kind_node = element.field("kind")?;
    let empty = Value::Object(Map::new());
    let params = match element.opt("params") {
        Some(p) => p,
        None => element.child("params", &empty),
    };
    let function = match kind_node.string()?.as_str() {
        "quadratic" => {
            let h = params.field("hessian")?;
            let hessian = h.matrix()?;
            if hessian.nrows() != dim || hessian.ncols() != dim {
                return Err(h.error(format!("hessian must be {dim}x{dim}")));
            }
            if (&hessian - hessian.transpose()).amax() > 1e-12 {
                return Err(h.error("hessian must be symmetric"));
            }
            let gradient = match params.opt("gradient") {
                Some(g) => g.vector()?,
                None => DVector::zeros(dim),
            };
            if gradient.len() != dim {
                return Err(params.field("gradient")?.error(format!("gradient must have length {dim}")));
            }
            let constant = params.opt("constant").map(|c| c.f64()).transpose()?.unwrap_or(0.0);
            ElementFunction::quadratic(hessian, gradient, constant)
        }
        "residual-power" => {
            let w = params.field("weights")?;
            let weights = w.vector()?;
            if weights.len() != dim {
                return Err(w.error(format!("weights must have length {dim}")));
            }
            let pw = params.field("power")?;
            let power = pw.usize()?;
            if power == 0 || power > u32::MAX as usize {
                return Err(pw.error("power must be a positive integer"));
            }
            ElementFunction::ResidualPower {
                weights,
                offset: params.opt("offset").map(|c| c.f64()).transpose()?.unwrap_or(0.0),
                power: power as u32,
            }
        }
        "rosenbrock" => {
            if dim != 2 {
                return Err(element.field("U")?.error("rosenbrock elements take two rows"));
            }
            ElementFunction::Rosenbrock {
                a: params.opt("a").map(|c| c.f64()).transpose()?.unwrap_or(1.0),
                b: params.opt("b").map(|c| c.f64()).transpose()?.unwrap_or(100.0),
            }
        }
        "zero" => ElementFunction::Zero { dim },
        "abs-power" => {
            if dim != 1 {
                return Err(element.field("U")?.error("abs-power elements take a single row"));
            }
            let q = params.field("q")?.f64()?;
            ElementFunction::AbsPower { q }
        }
        other => return Err(kind_node.error(format!("unknown element kind {other:?}"))),
    };
    Ok(function)
}

fn parse_set(node: &Node, n: usize) -> Result<FeasibleSet> {
    let kind_node = node.field("kind")?;
    let empty = Value::Object(Map::new());
    let params = match node.opt("params") {
        Some(p) => p,
        None => node.child("params", &empty),
    };
    let wrap = |r: Result<FeasibleSet>| r.map_err(|e| node.error(e.to_string()));
    let check_dim = |set: FeasibleSet| {
        if set.dim() != n {
            Err(node.error(format!("set has dimension {}, expected {n}", set.dim())))
        } else {
            Ok(set)
        }
    };
    let set = match kind_node.string()?.as_str() {
        "free" => FeasibleSet::free(n),
        "box" => {
            let lo = params.field("lo")?.bounds(n, f64::NEG_INFINITY)?;
            let hi = params.field("hi")?.bounds(n, f64::INFINITY)?;
            wrap(FeasibleSet::boxed(lo, hi))?
        }
        "ball" => wrap(FeasibleSet::ball(
            params.field("center")?.vector()?,
            params.field("radius")?.f64()?,
        ))?,
        "halfspaces" => {
            let normals = params
                .field("normals")?
                .array()?
                .iter()
                .map(|a| a.vector())
                .collect::<Result<Vec<_>>>()?;
            let offsets = params.field("offsets")?.vector()?;
            wrap(FeasibleSet::halfspaces(normals, offsets.iter().copied().collect()))?
        }
        "slab" => wrap(FeasibleSet::slab(
            params.field("normal")?.vector()?,
            params.field("lo")?.bound(f64::NEG_INFINITY)?,
            params.field("hi")?.bound(f64::INFINITY)?,
        ))?,
        "product" => {
            let factors = params
                .field("factors")?
                .array()?
                .iter()
                .map(|f| {
                    let d = f.field("dim")?.usize()?;
                    parse_set(f, d)
                })
                .collect::<Result<Vec<_>>>()?;
            wrap(FeasibleSet::product(factors))?
        }
        "intersection" => {
            let parts = params
                .field("parts")?
                .array()?
                .iter()
                .map(|f| parse_set(f, n))
                .collect::<Result<Vec<_>>>()?;
            wrap(FeasibleSet::intersection(parts))?
        }
        other => return Err(kind_node.error(format!("unknown set kind {other:?}"))),
    };
    check_dim(set)
}

/// A descriptor for `problem` listing only the elements it was built from,
/// so reading it back repeats any span repair.
pub fn to_value(problem: &Problem, name: Option<&str>) -> Result<Value> {
    let mut elements = Vec::new();
    for e in &problem.nice()[..problem.raw_nice_count()] {
        let (kind, params) = function_json(&e.function)?;
        elements.push(json!({ "set": "N", "kind": kind, "params": params, "U": matrix_json(e.map.rows()) }));
    }
    for u in problem.singular() {
        elements.push(json!({ "set": "H", "U": matrix_json(u.rows()) }));
    }
    let mut root = json!({
        "schema": PROBLEM_SCHEMA,
        "n": problem.n(),
        "q": problem.q(),
        "elements": elements,
        "feasible": set_json(problem.feasible()),
    });
    if let Some(name) = name {
        root["name"] = json!(name);
    }
    if let Some(x0) = problem.start() {
        root["x0"] = json!(x0.as_slice());
    }
    Ok(root)
}

pub fn to_string(problem: &Problem, name: Option<&str>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&to_value(problem, name)?)?)
}

fn function_json(f: &ElementFunction) -> Result<(&'static str, Value)> {
    let params = match f {
        ElementFunction::Quadratic {
            hessian,
            gradient,
            constant,
        } => json!({ "hessian": matrix_json(hessian), "gradient": gradient.as_slice(), "constant": constant }),
        ElementFunction::ResidualPower { weights, offset, power } => {
            json!({ "weights": weights.as_slice(), "offset": offset, "power": power })
        }
        ElementFunction::Rosenbrock { a, b } => json!({ "a": a, "b": b }),
        ElementFunction::Zero { .. } => json!({}),
        ElementFunction::AbsPower { q } => json!({ "q": q }),
        ElementFunction::Custom(_) => {
            return Err(PsarpError::InvalidProblem(
                "custom element functions cannot be written to a problem file".into(),
            ))
        }
    };
    Ok((f.kind_name(), params))
}

fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| json!(m.row(r).iter().copied().collect::<Vec<f64>>()))
            .collect(),
    )
}

fn bound_json(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn set_json(set: &FeasibleSet) -> Value {
    match set.kind() {
        SetKind::Box { .. } if set.is_unbounded_box() => json!({ "kind": "free" }),
        SetKind::Box { lo, hi } => json!({
            "kind": "box",
            "params": {
                "lo": lo.iter().map(|v| bound_json(*v)).collect::<Vec<_>>(),
                "hi": hi.iter().map(|v| bound_json(*v)).collect::<Vec<_>>(),
            }
        }),
        SetKind::Ball { center, radius } => {
            json!({ "kind": "ball", "params": { "center": center.as_slice(), "radius": radius } })
        }
        SetKind::Halfspaces { normals, offsets } => json!({
            "kind": "halfspaces",
            "params": {
                "normals": normals.iter().map(|a| json!(a.as_slice())).collect::<Vec<_>>(),
                "offsets": offsets,
            }
        }),
        SetKind::Slab { normal, lo, hi } => json!({
            "kind": "slab",
            "params": { "normal": normal.as_slice(), "lo": bound_json(*lo), "hi": bound_json(*hi) }
        }),
        SetKind::Product(factors) => json!({
            "kind": "product",
            "params": {
                "factors": factors
                    .iter()
                    .map(|f| {
                        let mut v = set_json(f);
                        v["dim"] = json!(f.dim());
                        v
                    })
                    .collect::<Vec<_>>()
            }
        }),
        SetKind::Intersection(parts) => json!({
            "kind": "intersection",
            "params": { "parts": parts.iter().map(set_json).collect::<Vec<_>>() }
        }),
    }
}

/// A JSON value together with its location in the document.
struct Node<'a> {
    value: &'a Value,
    path: String,
}

impl<'a> Node<'a> {
    fn root(value: &'a Value) -> Self {
        Self {
            value,
            path: String::new(),
        }
    }

    fn child(&self, key: &str, value: &'a Value) -> Node<'a> {
        Node {
            value,
            path: format!("{}/{}", self.path, key),
        }
    }

    fn error(&self, message: impl Into<String>) -> PsarpError {
        let location = if self.path.is_empty() { "/".to_string() } else { self.path.clone() };
        PsarpError::parse(location, message)
    }

    fn object(&self) -> Result<&'a Map<String, Value>> {
        self.value.as_object().ok_or_else(|| self.error("expected an object"))
    }

    fn opt(&self, key: &str) -> Option<Node<'a>> {
        match self.value.get(key) {
            None | Some(Value::Null) => None,
            Some(v) => Some(self.child(key, v)),
        }
    }

    fn field(&self, key: &str) -> Result<Node<'a>> {
        self.object()?;
        self.opt(key)
            .ok_or_else(|| self.error(format!("missing field {key:?}")))
    }

    fn array(&self) -> Result<Vec<Node<'a>>> {
        let items = self.value.as_array().ok_or_else(|| self.error("expected an array"))?;
        Ok(items
            .iter()
            .enumerate()
            .map(|(i, v)| Node {
                value: v,
                path: format!("{}/{}", self.path, i),
            })
            .collect())
    }

    fn string(&self) -> Result<String> {
        self.value
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| self.error("expected a string"))
    }

    fn f64(&self) -> Result<f64> {
        self.value
            .as_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.error("expected a finite number"))
    }

    fn u64(&self) -> Result<u64> {
        self.value.as_u64().ok_or_else(|| self.error("expected a non-negative integer"))
    }

    fn usize(&self) -> Result<usize> {
        Ok(self.u64()? as usize)
    }

    /// A number, or `null` for an infinite bound.
    fn bound(&self, infinite: f64) -> Result<f64> {
        if self.value.is_null() {
            Ok(infinite)
        } else {
            self.f64()
        }
    }

    /// An array of bounds, or one number applied to every coordinate.
    fn bounds(&self, n: usize, infinite: f64) -> Result<DVector<f64>> {
        if self.value.is_number() {
            return Ok(DVector::from_element(n, self.f64()?));
        }
        let items = self.array()?;
        if items.len() != n {
            return Err(self.error(format!("expected {n} bounds, found {}", items.len())));
        }
        let v = items.iter().map(|i| i.bound(infinite)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(v))
    }

    fn vector(&self) -> Result<DVector<f64>> {
        let v = self.array()?.iter().map(|i| i.f64()).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(v))
    }

    fn matrix(&self) -> Result<DMatrix<f64>> {
        let rows = self.array()?;
        if rows.is_empty() {
            return Err(self.error("expected at least one row"));
        }
        let parsed = rows.iter().map(|r| r.vector()).collect::<Result<Vec<_>>>()?;
        let cols = parsed[0].len();
        if cols == 0 || parsed.iter().any(|r| r.len() != cols) {
            return Err(self.error("rows must be non-empty and of equal length"));
        }
        Ok(DMatrix::from_fn(parsed.len(), cols, |i, j| parsed[i][j]))
    }
}
