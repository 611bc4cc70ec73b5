//! Reproducible test instances: problem files and named generators.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::descriptor::{self, Source};
use crate::element::ElementFunction;
use crate::error::{PsarpError, Result};
use crate::feasible::FeasibleSet;
use crate::models::HModel;
use crate::problem::{ElementMap, NiceElement, Problem};
use crate::SolverConfig;

pub const GENERATORS: &[&str] = &[
    "toy1d",
    "singular1d",
    "lq-regression",
    "chained-quadratic",
    "chained-rosenbrock",
];

/// Solver settings an instance asks for; unset fields keep the caller's.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub p: Option<usize>,
    pub h_model: Option<HModel>,
    pub allow_general_set: Option<bool>,
}

impl Overrides {
    pub fn apply(&self, config: &mut SolverConfig) {
        if let Some(p) = self.p {
            config.p = p;
        }
        if let Some(h) = self.h_model {
            config.h_model = h;
        }
        if let Some(a) = self.allow_general_set {
            config.allow_general_set = a;
        }
    }
}

/// Known solution of an instance, when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub f: f64,
    pub x: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub problem: Problem,
    pub overrides: Overrides,
    pub reference: Option<Reference>,
    pub seed: Option<u64>,
    /// SHA-256 of the canonical problem file, hex encoded.
    pub digest: String,
}

impl Instance {
    fn new(name: String, problem: Problem, seed: Option<u64>) -> Result<Self> {
        let digest = digest(&problem)?;
        Ok(Self {
            name,
            problem,
            overrides: Overrides::default(),
            reference: None,
            seed,
            digest,
        })
    }

    pub fn config(&self, base: &SolverConfig) -> SolverConfig {
        let mut config = base.clone();
        self.overrides.apply(&mut config);
        config
    }
}

pub fn digest(problem: &Problem) -> Result<String> {
    let text = descriptor::to_string(problem, None)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

/// Seed from `PSARP_SEED`, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var("PSARP_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| PsarpError::InvalidConfig(format!("PSARP_SEED must be an integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Builds an instance from a descriptor; `seed` replaces the descriptor's.
pub fn from_descriptor(text: &str, seed: Option<u64>) -> Result<Instance> {
    let d = descriptor::parse(text)?;
    let seed = seed.or(d.seed);
    match d.source {
        Source::Explicit(problem) => Instance::new(d.name.unwrap_or_else(|| "problem".into()), problem, seed),
        Source::Generator { name, params } => generate(&name, &params, seed),
    }
}

/// A problem file path, or a generator spec `gen:NAME k=v ...` (commas may
/// separate the pairs too). `PSARP_SEED` overrides any seed given.
pub fn load(spec: &str) -> Result<Instance> {
    let seed = env_seed()?;
    if let Some(rest) = spec.strip_prefix("gen:") {
        let (name, mut params) = parse_spec(rest)?;
        if let Some(s) = seed {
            params.insert("seed".into(), Value::from(s));
        }
        return generate(&name, &params, None);
    }
    let text = std::fs::read_to_string(Path::new(spec))?;
    from_descriptor(&text, seed)
}

/// `"lq-regression n=20 m=30 q=0.5 seed=7"` into a name and parameters.
pub fn parse_spec(spec: &str) -> Result<(String, Map<String, Value>)> {
    let mut parts = spec.split(|c: char| c.is_whitespace() || c == ',' || c == '?' || c == '&').filter(|s| !s.is_empty());
    let name = parts
        .next()
        .ok_or_else(|| PsarpError::parse("generator spec", "missing generator name"))?
        .to_string();
    let mut params = Map::new();
    for part in parts {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| PsarpError::parse("generator spec", format!("expected key=value, found {part:?}")))?;
        let value = serde_json::from_str::<Value>(v).unwrap_or_else(|_| Value::String(v.to_string()));
        params.insert(k.to_string(), value);
    }
    Ok((name, params))
}

struct Params<'a> {
    generator: &'a str,
    map: &'a Map<String, Value>,
    used: BTreeMap<&'static str, ()>,
}

impl<'a> Params<'a> {
    fn f64(&mut self, key: &'static str, default: f64) -> Result<f64> {
        self.used.insert(key, ());
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| self.error(key, "expected a finite number")),
        }
    }

    fn usize(&mut self, key: &'static str, default: usize) -> Result<usize> {
        self.used.insert(key, ());
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| self.error(key, "expected a non-negative integer")),
        }
    }

    fn opt_f64(&mut self, key: &'static str) -> Result<Option<f64>> {
        if self.map.contains_key(key) {
            self.f64(key, 0.0).map(Some)
        } else {
            self.used.insert(key, ());
            Ok(None)
        }
    }

    fn flag(&mut self, key: &'static str) -> Result<bool> {
        self.used.insert(key, ());
        match self.map.get(key) {
            None => Ok(false),
            Some(Value::Bool(b)) => Ok(*b),
            Some(v) => v.as_u64().map(|x| x != 0).ok_or_else(|| self.error(key, "expected a boolean")),
        }
    }

    fn error(&self, key: &str, message: &str) -> PsarpError {
        PsarpError::parse(format!("{}/params/{key}", self.generator), message)
    }

    fn finish(&self) -> Result<()> {
        for key in self.map.keys() {
            if key != "seed" && !self.used.contains_key(key.as_str()) {
                return Err(self.error(key, "unknown parameter"));
            }
        }
        Ok(())
    }
}

pub fn generate(name: &str, params: &Map<String, Value>, seed: Option<u64>) -> Result<Instance> {
    let seed = match params.get("seed") {
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| PsarpError::parse(format!("{name}/params/seed"), "expected an integer"))?,
        ),
        None => seed,
    };
    let mut p = Params {
        generator: name,
        map: params,
        used: BTreeMap::new(),
    };
    let instance = match name {
        "toy1d" => toy1d(&mut p)?,
        "singular1d" => singular1d(&mut p)?,
        "lq-regression" => lq_regression(&mut p, seed.unwrap_or(0))?,
        "chained-quadratic" => chained_quadratic(&mut p, seed.unwrap_or(0))?,
        "chained-rosenbrock" => chained_rosenbrock(&mut p)?,
        other => {
            return Err(PsarpError::parse(
                "generator",
                format!("unknown generator {other:?}; known: {}", GENERATORS.join(", ")),
            ))
        }
    };
    p.finish()?;
    Ok(Instance { seed, ..instance })
}

/// `x^2` on `[-1, 1]` from `x0`.
fn toy1d(p: &mut Params) -> Result<Instance> {
    let x0 = p.f64("x0", 0.8)?;
    let problem = Problem::new(
        1,
        vec![NiceElement {
            function: ElementFunction::square(0.0),
            map: ElementMap::coordinate(1, 0),
        }],
        vec![],
        0.5,
        FeasibleSet::uniform_box(1, -1.0, 1.0)?,
    )?
    .with_start(DVector::from_element(1, x0))?;
    let mut inst = Instance::new("toy1d".into(), problem, None)?;
    inst.overrides.p = Some(2);
    inst.reference = Some(Reference {
        f: 0.0,
        x: Some(DVector::zeros(1)),
    });
    Ok(inst)
}

/// `|x|^q` alone on `[-1, 1]`; span repair adds the zero element.
fn singular1d(p: &mut Params) -> Result<Instance> {
    let q = p.f64("q", 0.5)?;
    let x0 = p.f64("x0", 0.5)?;
    let problem = Problem::new(
        1,
        vec![],
        vec![ElementMap::coordinate(1, 0)],
        q,
        FeasibleSet::uniform_box(1, -1.0, 1.0)?,
    )?
    .with_start(DVector::from_element(1, x0))?;
    let mut inst = Instance::new("singular1d".into(), problem, None)?;
    inst.reference = Some(Reference {
        f: 0.0,
        x: Some(DVector::zeros(1)),
    });
    Ok(inst)
}

/// `sum_j (a_j^T x - b_j)^2 + lambda sum_i |x_i|^q` over a box.
///
/// `A` has standard normal entries, `b = A x_true + 0.1 noise` with a
/// five-sparse `x_true`. The weight `lambda` is absorbed by the change of
/// variables `x = c y`, `c = lambda^(-1/q)`, so the singular terms stay
/// exactly `|y_i|^q`; the problem is stated in `y`. The box is
/// `[-radius, radius]^n` in `x`, moved by `shift_even` / `shift_odd` on
/// even / odd coordinates, and optionally cut by `sum_i y_i <= halfspace`.
fn lq_regression(p: &mut Params, seed: u64) -> Result<Instance> {
    let n = p.usize("n", 20)?;
    let m = p.usize("m", 30)?;
    let q = p.f64("q", 0.5)?;
    let lambda = p.f64("lambda", 1.0)?;
    let radius = p.f64("radius", 10.0)?;
    let shift_even = p.f64("shift_even", 0.0)?;
    let shift_odd = p.f64("shift_odd", 0.0)?;
    let halfspace = p.opt_f64("halfspace")?;
    let x0_value = p.f64("x0", 1.0)?;
    if n == 0 || m == 0 {
        return Err(p.error("n", "n and m must be positive"));
    }
    if !(lambda > 0.0) {
        return Err(p.error("lambda", "lambda must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let support = sample(&mut rng, n, 5.min(n));
    let mut x_true = DVector::zeros(n);
    for i in support.iter() {
        let magnitude: f64 = rng.random_range(0.5..2.0);
        x_true[i] = if rng.random::<bool>() { magnitude } else { -magnitude };
    }
    let noise = DVector::from_fn(m, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
    let b = &a * &x_true + noise;

    let c = lambda.powf(-1.0 / q);
    let mut nice = Vec::with_capacity(m);
    for j in 0..m {
        let row = a.row(j).transpose();
        let (map, scale) = ElementMap::normalized_row(&row)?;
        nice.push(NiceElement {
            function: ElementFunction::ResidualPower {
                weights: DVector::from_element(1, c * scale),
                offset: b[j],
                power: 2,
            },
            map,
        });
    }
    let singular = (0..n).map(|i| ElementMap::coordinate(n, i)).collect();
    let shift = |i: usize| if i.is_multiple_of(2) { shift_even } else { shift_odd };
    let lo = DVector::from_fn(n, |i, _| (-radius + shift(i)) / c);
    let hi = DVector::from_fn(n, |i, _| (radius + shift(i)) / c);
    let boxed = FeasibleSet::boxed(lo, hi)?;
    let feasible = match halfspace {
        Some(offset) => FeasibleSet::intersection(vec![
            boxed,
            FeasibleSet::halfspaces(vec![DVector::from_element(n, 1.0)], vec![offset])?,
        ])?,
        None => boxed,
    };
    let problem = Problem::new(n, nice, singular, q, feasible)?
        .with_start(DVector::from_element(n, x0_value / c))?;
    let mut inst = Instance::new(format!("lq-regression-n{n}-m{m}"), problem, Some(seed))?;
    inst.overrides.p = Some(3);
    Ok(inst)
}

/// Overlapping two-variable convex quadratics along a chain, optionally with
/// `|x_i|^q` on every coordinate.
fn chained_quadratic(p: &mut Params, seed: u64) -> Result<Instance> {
    let n = p.usize("n", 10)?;
    let q = p.f64("q", 0.5)?;
    let singular_terms = p.flag("singular")?;
    if n < 2 {
        return Err(p.error("n", "need at least two variables"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nice = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        let d1: f64 = rng.random_range(1.0..3.0);
        let d2: f64 = rng.random_range(1.0..3.0);
        let off: f64 = rng.random_range(-0.5..0.5);
        let hessian = DMatrix::from_row_slice(2, 2, &[d1, off, off, d2]);
        let gradient = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        nice.push(NiceElement {
            function: ElementFunction::quadratic(hessian, gradient, 0.0),
            map: ElementMap::coordinates(n, &[i, i + 1]),
        });
    }
    let singular = if singular_terms {
        (0..n).map(|i| ElementMap::coordinate(n, i)).collect()
    } else {
        Vec::new()
    };
    let problem = Problem::new(n, nice, singular, q, FeasibleSet::uniform_box(n, -1.0, 1.0)?)?
        .with_start(DVector::from_element(n, 0.9))?;
    let mut inst = Instance::new(format!("chained-quadratic-n{n}"), problem, Some(seed))?;
    inst.overrides.p = Some(if singular_terms { 3 } else { 2 });
    Ok(inst)
}

/// Chained Rosenbrock couplings over `[-2, 2]^n`, optionally with singular
/// terms on the odd coordinates.
fn chained_rosenbrock(p: &mut Params) -> Result<Instance> {
    let n = p.usize("n", 6)?;
    let q = p.f64("q", 0.5)?;
    let b = p.f64("b", 10.0)?;
    let singular_terms = p.flag("singular")?;
    if n < 2 {
        return Err(p.error("n", "need at least two variables"));
    }
    let nice = (0..n - 1)
        .map(|i| NiceElement {
            function: ElementFunction::Rosenbrock { a: 1.0, b },
            map: ElementMap::coordinates(n, &[i, i + 1]),
        })
        .collect();
    let singular = if singular_terms {
        (1..n).step_by(2).map(|i| ElementMap::coordinate(n, i)).collect()
    } else {
        Vec::new()
    };
    let problem = Problem::new(n, nice, singular, q, FeasibleSet::uniform_box(n, -2.0, 2.0)?)?
        .with_start(DVector::from_element(n, -1.2))?;
    let mut inst = Instance::new(format!("chained-rosenbrock-n{n}"), problem, None)?;
    inst.overrides.p = Some(3);
    if !singular_terms {
        inst.reference = Some(Reference {
            f: 0.0,
            x: Some(DVector::from_element(n, 1.0)),
        });
    }
    Ok(inst)
}
