//! Model zoo, model documents, and evaluation of parametrized Hamiltonians.
//!
//! Every model compiles to `H(κ) = V(κ) H̃(κ) V(κ)†`, where `V` is an ordered
//! word of mixers or Gaussian factors (empty for plain graphs) and `H̃` is an
//! operator expression. Isospectral models have a constant `H̃`.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{rename_expr, Func, Ladder, OperatorExpression, ParamExpr, Term};
use crate::fock::{is_number_conserving, operator_matrix, word_matrix, FockBasis, ModeSystem, SparseMatrix};
use crate::jet::{Jet, JetSpace};
use crate::linalg::{expm, eye, CMat, C64};

/// Named real coordinates of a parameter-space point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub values: BTreeMap<String, f64>,
}

impl ParameterPoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<S: AsRef<str>>(pairs: &[(S, f64)]) -> Self {
        ParameterPoint { values: pairs.iter().map(|(k, v)| (k.as_ref().to_string(), *v)).collect() }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn set(&mut self, name: &str, v: f64) {
        self.values.insert(name.to_string(), v);
    }

    pub fn with(mut self, name: &str, v: f64) -> Self {
        self.set(name, v);
        self
    }

    pub fn merged(&self, other: &ParameterPoint) -> Self {
        let mut out = self.clone();
        out.values.extend(other.values.iter().map(|(k, v)| (k.clone(), *v)));
        out
    }

    /// `self + t·(other − self)` over the names of `self`.
    pub fn lerp(&self, other: &ParameterPoint, t: f64) -> Self {
        let values = self
            .values
            .iter()
            .map(|(k, &a)| {
                let b = other.get(k).unwrap_or(a);
                (k.clone(), a + t * (b - a))
            })
            .collect();
        ParameterPoint { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Angle,
    Phase,
    Amplitude,
    Real,
}

impl Domain {
    /// Range used for random sample points.
    pub fn sample_range(self) -> (f64, f64) {
        match self {
            Domain::Angle => (0.15, 1.42),
            Domain::Phase => (0.0, 2.0 * PI),
            Domain::Amplitude => (0.0, 0.5),
            Domain::Real => (0.5, 2.0),
        }
    }

    pub fn sample(self, rng: &mut impl Rng) -> f64 {
        let (lo, hi) = self.sample_range();
        rng.random_range(lo..hi)
    }

    fn name(self) -> &'static str {
        match self {
            Domain::Angle => "angle",
            Domain::Phase => "phase",
            Domain::Amplitude => "amplitude",
            Domain::Real => "real",
        }
    }

    fn from_name(s: &str) -> Option<Domain> {
        Some(match s {
            "angle" => Domain::Angle,
            "phase" => Domain::Phase,
            "amplitude" => Domain::Amplitude,
            "real" => Domain::Real,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    pub domain: Domain,
}

impl ParamDecl {
    pub fn new(name: &str, domain: Domain) -> Self {
        ParamDecl { name: name.to_string(), domain }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    CoupledGraph,
    IsospectralMixer,
    IsospectralGaussian,
    JaynesCummings,
    Composite,
}

/// `κ·a_i† a_j + h.c.` with `κ = amp·exp(i·phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub amp: ParamExpr,
    pub phase: Option<ParamExpr>,
}

impl Edge {
    pub fn coupling(&self) -> ParamExpr {
        match &self.phase {
            None => self.amp.clone(),
            Some(p) => ParamExpr::mul(
                self.amp.clone(),
                ParamExpr::func(Func::Exp, ParamExpr::mul(ParamExpr::Num(C64::new(0.0, 1.0)), p.clone())),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    /// Two-mode SU(2) mixer with parameters (θ, φ).
    Mixer,
    /// `exp(α a_k† − α* a_k)`.
    Displace,
    /// `exp(ξ a_k†² − ξ* a_k²)`.
    Squeeze,
    /// `exp(ζ a_k† a_l† − ζ* a_k a_l)`.
    TwoModeSqueeze,
    /// `exp(β a_k† a_l − β* a_k a_l†)`.
    BeamSplitter,
}

impl FactorKind {
    pub fn arity(self) -> usize {
        match self {
            FactorKind::Displace | FactorKind::Squeeze => 1,
            _ => 2,
        }
    }

    pub fn conserves_number(self) -> bool {
        matches!(self, FactorKind::Mixer | FactorKind::BeamSplitter)
    }

    fn name(self) -> &'static str {
        match self {
            FactorKind::Mixer => "mixer",
            FactorKind::Displace => "displace",
            FactorKind::Squeeze => "squeeze",
            FactorKind::TwoModeSqueeze => "two_mode_squeeze",
            FactorKind::BeamSplitter => "beam_splitter",
        }
    }

    fn from_name(s: &str) -> Option<FactorKind> {
        Some(match s {
            "mixer" => FactorKind::Mixer,
            "displace" => FactorKind::Displace,
            "squeeze" => FactorKind::Squeeze,
            "two_mode_squeeze" => FactorKind::TwoModeSqueeze,
            "beam_splitter" => FactorKind::BeamSplitter,
            _ => return None,
        })
    }
}

/// One factor of a unitary word; `params` is (θ, φ) for mixers and the
/// polar pair (r, t) of the complex amplitude `r·e^{it}` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub kind: FactorKind,
    pub modes: Vec<usize>,
    pub params: [String; 2],
}

impl Factor {
    pub fn new(kind: FactorKind, modes: &[usize], a: &str, b: &str) -> Self {
        Factor { kind, modes: modes.to_vec(), params: [a.to_string(), b.to_string()] }
    }

    /// Anti-Hermitian generator split as `p·G − p̄·G†`; returns `G`.
    pub fn generator_word(&self) -> Option<Vec<Ladder>> {
        let k = self.modes[0];
        Some(match self.kind {
            FactorKind::Mixer => return None,
            FactorKind::Displace => vec![Ladder::Create(k)],
            FactorKind::Squeeze => vec![Ladder::Create(k), Ladder::Create(k)],
            FactorKind::TwoModeSqueeze => vec![Ladder::Create(k), Ladder::Create(self.modes[1])],
            FactorKind::BeamSplitter => vec![Ladder::Create(k), Ladder::Annihilate(self.modes[1])],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Graph { edges: Vec<Edge> },
    JaynesCummings { omega_a: String, omega_c: String, kappa: String },
    Isospectral { h0: OperatorExpression, word: Vec<Factor> },
    Composite(Vec<ModelSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub kind: ModelKind,
    pub system: ModeSystem,
    pub params: Vec<ParamDecl>,
    pub payload: Payload,
    /// Distinguished base point used in addition to random samples.
    pub base_point: Option<ParameterPoint>,
}

/// Flattened `V H̃ V†` form shared by every model kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Compiled {
    pub system: ModeSystem,
    pub h: OperatorExpression,
    pub word: Vec<Factor>,
    pub params: Vec<ParamDecl>,
}

impl Compiled {
    pub fn number_conserving(&self) -> bool {
        is_number_conserving(&self.h) && self.word.iter().all(|f| f.kind.conserves_number())
    }

    /// `H̃` carries no parameters, so the spectrum is κ-independent.
    pub fn isospectral(&self) -> bool {
        self.h.params().is_empty()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }
}

impl ModelSpec {
    pub fn param_names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn number_conserving(&self) -> bool {
        self.compiled().number_conserving()
    }

    pub fn is_isospectral(&self) -> bool {
        matches!(self.kind, ModelKind::IsospectralMixer | ModelKind::IsospectralGaussian)
    }

    pub fn compiled(&self) -> Compiled {
        match &self.payload {
            Payload::Graph { edges } => {
                let terms = edges
                    .iter()
                    .map(|e| Term::new(e.coupling(), vec![Ladder::Create(e.i), Ladder::Annihilate(e.j)]))
                    .collect();
                Compiled {
                    system: self.system,
                    h: OperatorExpression::new(terms).plus_hc(),
                    word: vec![],
                    params: self.params.clone(),
                }
            }
            Payload::JaynesCummings { omega_a, omega_c, kappa } => {
                let h = OperatorExpression::new(vec![
                    Term::new(ParamExpr::param(omega_a), vec![Ladder::Raise(0), Ladder::Lower(0)]),
                    Term::new(ParamExpr::param(omega_c), vec![Ladder::Create(0), Ladder::Annihilate(0)]),
                    Term::new(ParamExpr::param(kappa), vec![Ladder::Create(0), Ladder::Lower(0)]),
                    Term::new(ParamExpr::param(kappa), vec![Ladder::Annihilate(0), Ladder::Raise(0)]),
                ]);
                Compiled { system: self.system, h: OperatorExpression { hermitian: true, ..h }, word: vec![], params: self.params.clone() }
            }
            Payload::Isospectral { h0, word } => {
                Compiled { system: self.system, h: h0.clone(), word: word.clone(), params: self.params.clone() }
            }
            Payload::Composite(parts) => {
                let mut sys = ModeSystem { boson_modes: 0, two_level_modes: 0, cutoff: self.system.cutoff };
                let mut h = OperatorExpression { terms: vec![], hermitian: true };
                let mut word = Vec::new();
                let mut params = Vec::new();
                for p in parts {
                    let c = p.compiled();
                    h = h.sum(&c.h.shifted(sys.boson_modes, sys.two_level_modes));
                    word.extend(c.word.iter().map(|f| Factor {
                        modes: f.modes.iter().map(|m| m + sys.boson_modes).collect(),
                        ..f.clone()
                    }));
                    params.extend(c.params);
                    sys.boson_modes += c.system.boson_modes;
                    sys.two_level_modes += c.system.two_level_modes;
                }
                Compiled { system: sys, h, word, params }
            }
        }
    }

    /// Structural checks: mode indices, parameter coverage, uniqueness.
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        let mut seen = BTreeSet::new();
        for p in &self.params {
            if !seen.insert(p.name.clone()) {
                return Err(Error::Model(format!("duplicate parameter `{}`", p.name)));
            }
        }
        if let Payload::Composite(parts) = &self.payload {
            if parts.is_empty() {
                return Err(Error::Model("composite model without parts".into()));
            }
            for p in parts {
                p.validate()?;
            }
        }
        let c = self.compiled();
        c.system.check_expression(&c.h)?;
        for f in &c.word {
            if f.modes.len() != f.kind.arity() {
                return Err(Error::Model(format!("factor `{}` takes {} mode(s)", f.kind.name(), f.kind.arity())));
            }
            for &m in &f.modes {
                if m >= c.system.boson_modes {
                    return Err(Error::ModeIndex { index: m + 1, available: c.system.boson_modes });
                }
            }
            if f.modes.len() == 2 && f.modes[0] == f.modes[1] {
                return Err(Error::Model(format!("factor `{}` needs two distinct modes", f.kind.name())));
            }
        }
        let mut used = c.h.params();
        for f in &c.word {
            used.extend(f.params.iter().cloned());
        }
        for u in &used {
            if !seen.contains(u) {
                return Err(Error::Model(format!("parameter `{u}` is used but not declared")));
            }
        }
        Ok(())
    }

    /// Copy with every parameter name prefixed (used before composing a
    /// model with itself).
    pub fn with_prefix(&self, prefix: &str) -> ModelSpec {
        let rn = |s: &str| format!("{prefix}{s}");
        let payload = match &self.payload {
            Payload::Graph { edges } => Payload::Graph {
                edges: edges
                    .iter()
                    .map(|e| Edge {
                        i: e.i,
                        j: e.j,
                        amp: rename_expr(&e.amp, &rn),
                        phase: e.phase.as_ref().map(|p| rename_expr(p, &rn)),
                    })
                    .collect(),
            },
            Payload::JaynesCummings { omega_a, omega_c, kappa } => {
                Payload::JaynesCummings { omega_a: rn(omega_a), omega_c: rn(omega_c), kappa: rn(kappa) }
            }
            Payload::Isospectral { h0, word } => Payload::Isospectral {
                h0: h0.renamed(&rn),
                word: word.iter().map(|f| Factor { params: [rn(&f.params[0]), rn(&f.params[1])], ..f.clone() }).collect(),
            },
            Payload::Composite(parts) => Payload::Composite(parts.iter().map(|p| p.with_prefix(prefix)).collect()),
        };
        ModelSpec {
            name: self.name.clone(),
            kind: self.kind,
            system: self.system,
            params: self.params.iter().map(|p| ParamDecl { name: rn(&p.name), domain: p.domain }).collect(),
            payload,
            base_point: self.base_point.as_ref().map(|b| ParameterPoint {
                values: b.values.iter().map(|(k, v)| (rn(k), *v)).collect(),
            }),
        }
    }

    /// Draw a point with every parameter sampled from its domain.
    pub fn random_point(&self, rng: &mut impl Rng) -> ParameterPoint {
        let mut p = ParameterPoint::new();
        for d in &self.params {
            p.set(&d.name, d.domain.sample(rng));
        }
        p
    }

    pub fn check_point(&self, p: &ParameterPoint) -> Result<()> {
        for d in &self.params {
            let v = p.get(&d.name).ok_or_else(|| Error::UnboundParameter(d.name.clone()))?;
            if d.domain == Domain::Amplitude && v < 0.0 {
                return Err(Error::Model(format!("amplitude `{}` must be non-negative", d.name)));
            }
        }
        Ok(())
    }
}

// ------------------------------------------------------------- builtins

/// Options for builtin models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuiltinOptions {
    /// Displaced mode for kerr2 (1-based).
    pub displace_mode: usize,
    /// Squeezed mode for kerr2 (1-based).
    pub squeeze_mode: usize,
    /// Per-mode cutoff for kerr2.
    pub cutoff: u32,
}

impl Default for BuiltinOptions {
    fn default() -> Self {
        BuiltinOptions { displace_mode: 1, squeeze_mode: 1, cutoff: 20 }
    }
}

pub const BUILTINS: [&str; 6] = ["lambda", "tripod", "fcg4", "fcg3", "kerr2", "jaynes_cummings"];

fn p(s: &str) -> ParamExpr {
    ParamExpr::param(s)
}

fn f(func: Func, s: &str) -> ParamExpr {
    ParamExpr::func(func, p(s))
}

fn graph(name: &str, modes: usize, params: Vec<ParamDecl>, edges: Vec<Edge>) -> ModelSpec {
    ModelSpec {
        name: name.into(),
        kind: ModelKind::CoupledGraph,
        system: ModeSystem::bosons(modes),
        params,
        payload: Payload::Graph { edges },
        base_point: None,
    }
}

fn number_sum(coefs: &[(usize, f64)]) -> OperatorExpression {
    let terms = coefs.iter().map(|&(k, c)| OperatorExpression::number(k, ParamExpr::real(c))).collect();
    OperatorExpression { terms, hermitian: true }
}

pub fn builtin(name: &str) -> Result<ModelSpec> {
    builtin_with(name, &BuiltinOptions::default())
}

pub fn builtin_with(name: &str, opt: &BuiltinOptions) -> Result<ModelSpec> {
    Ok(match name {
        // modes (+, c, −); κ₊ = cos θ e^{iφ}, κ₋ = sin θ
        "lambda" => graph(
            "lambda",
            3,
            vec![ParamDecl::new("theta", Domain::Angle), ParamDecl::new("phi", Domain::Phase)],
            vec![
                Edge { i: 1, j: 0, amp: f(Func::Cos, "theta"), phase: Some(p("phi")) },
                Edge { i: 2, j: 1, amp: f(Func::Sin, "theta"), phase: None },
            ],
        ),
        // modes (+, c, −, 0); the centre couples to each outer mode
        "tripod" => graph(
            "tripod",
            4,
            vec![
                ParamDecl::new("theta", Domain::Angle),
                ParamDecl::new("chi", Domain::Angle),
                ParamDecl::new("phi1", Domain::Phase),
                ParamDecl::new("phi2", Domain::Phase),
            ],
            vec![
                Edge { i: 1, j: 0, amp: ParamExpr::mul(f(Func::Sin, "theta"), f(Func::Cos, "chi")), phase: Some(p("phi1")) },
                Edge { i: 1, j: 3, amp: ParamExpr::mul(f(Func::Sin, "theta"), f(Func::Sin, "chi")), phase: Some(p("phi2")) },
                Edge { i: 2, j: 1, amp: f(Func::Cos, "theta"), phase: None },
            ],
        ),
        "fcg4" => {
            let mut params = Vec::new();
            for k in 1..=3 {
                params.push(ParamDecl::new(&format!("theta{k}"), Domain::Angle));
            }
            for k in 1..=3 {
                params.push(ParamDecl::new(&format!("phi{k}"), Domain::Phase));
            }
            let word = (0..3).map(|k| Factor::new(FactorKind::Mixer, &[k, k + 1], &format!("theta{}", k + 1), &format!("phi{}", k + 1))).collect();
            let mut base = ParameterPoint::new();
            for k in 1..=3 {
                base.set(&format!("theta{k}"), PI / 4.0);
                base.set(&format!("phi{k}"), 0.0);
            }
            ModelSpec {
                name: "fcg4".into(),
                kind: ModelKind::IsospectralMixer,
                system: ModeSystem::bosons(4),
                params,
                payload: Payload::Isospectral { h0: number_sum(&[(0, 1.0), (1, 1.0), (3, -1.0)]), word },
                base_point: Some(base),
            }
        }
        // modes (+, 0, −)
        "fcg3" => ModelSpec {
            name: "fcg3".into(),
            kind: ModelKind::IsospectralMixer,
            system: ModeSystem::bosons(3),
            params: vec![
                ParamDecl::new("theta_p", Domain::Angle),
                ParamDecl::new("theta_m", Domain::Angle),
                ParamDecl::new("phi_p", Domain::Phase),
                ParamDecl::new("phi_m", Domain::Phase),
            ],
            payload: Payload::Isospectral {
                h0: number_sum(&[(0, 1.0), (2, -1.0)]),
                word: vec![
                    Factor::new(FactorKind::Mixer, &[0, 1], "theta_p", "phi_p"),
                    Factor::new(FactorKind::Mixer, &[1, 2], "theta_m", "phi_m"),
                ],
            },
            base_point: None,
        },
        "kerr2" => {
            for (what, m) in [("displace", opt.displace_mode), ("squeeze", opt.squeeze_mode)] {
                if !(1..=2).contains(&m) {
                    return Err(Error::Config(format!("kerr2 {what} mode must be 1 or 2, got {m}")));
                }
            }
            let mut params = Vec::new();
            for k in 1..=4 {
                params.push(ParamDecl::new(&format!("r{k}"), Domain::Amplitude));
            }
            for k in 1..=4 {
                params.push(ParamDecl::new(&format!("t{k}"), Domain::Phase));
            }
            let h0 = OperatorExpression {
                terms: (0..2).map(|k| Term::new(ParamExpr::real(1.0), vec![Ladder::Create(k), Ladder::Create(k), Ladder::Annihilate(k), Ladder::Annihilate(k)])).collect(),
                hermitian: true,
            };
            let word = vec![
                Factor::new(FactorKind::BeamSplitter, &[0, 1], "r4", "t4"),
                Factor::new(FactorKind::TwoModeSqueeze, &[0, 1], "r3", "t3"),
                Factor::new(FactorKind::Displace, &[opt.displace_mode - 1], "r1", "t1"),
                Factor::new(FactorKind::Squeeze, &[opt.squeeze_mode - 1], "r2", "t2"),
            ];
            let mut base = ParameterPoint::new();
            for n in ["r1", "r2", "r3", "t1", "t2", "t3"] {
                base.set(n, 0.0);
            }
            base.set("r4", 0.3);
            base.set("t4", 0.7);
            ModelSpec {
                name: "kerr2".into(),
                kind: ModelKind::IsospectralGaussian,
                system: ModeSystem::bosons(2).with_cutoff(opt.cutoff),
                params,
                payload: Payload::Isospectral { h0, word },
                base_point: Some(base),
            }
        }
        "jaynes_cummings" => ModelSpec {
            name: "jaynes_cummings".into(),
            kind: ModelKind::JaynesCummings,
            system: ModeSystem { boson_modes: 1, two_level_modes: 1, cutoff: None },
            params: vec![
                ParamDecl::new("omega_a", Domain::Real),
                ParamDecl::new("omega_c", Domain::Real),
                ParamDecl::new("kappa", Domain::Real),
            ],
            payload: Payload::JaynesCummings { omega_a: "omega_a".into(), omega_c: "omega_c".into(), kappa: "kappa".into() },
            base_point: None,
        },
        other => return Err(Error::Config(format!("unknown builtin model `{other}` (known: {})", BUILTINS.join(", ")))),
    })
}

/// Non-interacting composite on the tensor-product Fock space.
pub fn compose(specs: &[ModelSpec]) -> Result<ModelSpec> {
    if specs.is_empty() {
        return Err(Error::Model("compose needs at least one model".into()));
    }
    if specs.len() == 1 {
        return Ok(specs[0].clone());
    }
    let mut names = BTreeSet::new();
    let mut params = Vec::new();
    let mut base: Option<ParameterPoint> = None;
    let mut boson_modes = 0;
    let mut two_level_modes = 0;
    let mut cutoff: Option<u32> = None;
    for s in specs {
        for p in &s.params {
            if !names.insert(p.name.clone()) {
                return Err(Error::Model(format!("parameter `{}` appears in more than one component", p.name)));
            }
            params.push(p.clone());
        }
        if let Some(b) = &s.base_point {
            base = Some(base.map_or_else(|| b.clone(), |x| x.merged(b)));
        }
        boson_modes += s.system.boson_modes;
        two_level_modes += s.system.two_level_modes;
        cutoff = match (cutoff, s.system.cutoff) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }
    let name = specs.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join("+");
    let spec = ModelSpec {
        name,
        kind: ModelKind::Composite,
        system: ModeSystem { boson_modes, two_level_modes, cutoff },
        params,
        payload: Payload::Composite(specs.to_vec()),
        base_point: base,
    };
    spec.validate()?;
    Ok(spec)
}

// ------------------------------------------------------ ring-generic lift

/// Minimal commutative ring interface for lifting single-particle maps.
pub trait Ring {
    type E: Clone;
    fn zero(&self) -> Self::E;
    fn one(&self) -> Self::E;
    fn is_zero(&self, a: &Self::E) -> bool;
    fn add(&self, a: &Self::E, b: &Self::E) -> Self::E;
    fn mul(&self, a: &Self::E, b: &Self::E) -> Self::E;
    fn scale(&self, a: &Self::E, s: f64) -> Self::E;
}

pub struct Complex;

impl Ring for Complex {
    type E = C64;
    fn zero(&self) -> C64 {
        C64::new(0.0, 0.0)
    }
    fn one(&self) -> C64 {
        C64::new(1.0, 0.0)
    }
    fn is_zero(&self, a: &C64) -> bool {
        a.re == 0.0 && a.im == 0.0
    }
    fn add(&self, a: &C64, b: &C64) -> C64 {
        a + b
    }
    fn mul(&self, a: &C64, b: &C64) -> C64 {
        a * b
    }
    fn scale(&self, a: &C64, s: f64) -> C64 {
        a * s
    }
}

pub struct JetRing<'a> {
    pub sp: &'a JetSpace,
    pub k: usize,
}

impl Ring for JetRing<'_> {
    type E = Jet;
    fn zero(&self) -> Jet {
        Jet::zero(self.sp, self.k)
    }
    fn one(&self) -> Jet {
        Jet::constant(self.sp, self.k, C64::new(1.0, 0.0))
    }
    fn is_zero(&self, a: &Jet) -> bool {
        a.c.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
    fn add(&self, a: &Jet, b: &Jet) -> Jet {
        a.add(b)
    }
    fn mul(&self, a: &Jet, b: &Jet) -> Jet {
        a.mul(self.sp, b)
    }
    fn scale(&self, a: &Jet, s: f64) -> Jet {
        a.scale(C64::new(s, 0.0))
    }
}

/// Single-particle mixer matrix: `V a_k† V† = c e^{iφ} a_k† + s a_l†` and
/// `V a_l† V† = c e^{−iφ} a_l† − s a_k†`; entries `u[i][j]`.
pub fn mixer_entries<R: Ring>(ring: &R, m: usize, k: usize, l: usize, c: R::E, s: R::E, e: R::E, e_conj: R::E) -> Vec<Vec<R::E>> {
    let mut u: Vec<Vec<R::E>> = (0..m).map(|i| (0..m).map(|j| if i == j { ring.one() } else { ring.zero() }).collect()).collect();
    u[k][k] = ring.mul(&c, &e);
    u[l][k] = s.clone();
    u[k][l] = ring.scale(&s, -1.0);
    u[l][l] = ring.mul(&c, &e_conj);
    u
}

pub fn ring_matmul<R: Ring>(ring: &R, a: &[Vec<R::E>], b: &[Vec<R::E>]) -> Vec<Vec<R::E>> {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut acc = ring.zero();
                    for (k, bk) in b.iter().enumerate() {
                        if ring.is_zero(&a[i][k]) || ring.is_zero(&bk[j]) {
                            continue;
                        }
                        acc = ring.add(&acc, &ring.mul(&a[i][k], &bk[j]));
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Lift a single-particle map to number states:
/// `V|n⟩ = ∏_k (Σ_i u_ik a_i†)^{n_k} / √(n_k!) |0⟩`; returns (row, col, value).
/// Components outside the basis are dropped.
pub fn lift_single_particle<R: Ring>(ring: &R, u: &[Vec<R::E>], basis: &FockBasis) -> Vec<(usize, usize, R::E)> {
    let m = basis.system.boson_modes;
    let mut out = Vec::new();
    for (col, st) in basis.states.iter().enumerate() {
        let mut poly: BTreeMap<Vec<u32>, R::E> = BTreeMap::new();
        poly.insert(vec![0; m], ring.one());
        let mut norm = 1.0f64;
        for k in 0..m {
            for rep in 0..st.occupations[k] {
                norm *= (rep + 1) as f64;
                let mut next: BTreeMap<Vec<u32>, R::E> = BTreeMap::new();
                for (occ, coef) in &poly {
                    for i in 0..m {
                        if ring.is_zero(&u[i][k]) {
                            continue;
                        }
                        let mut o2 = occ.clone();
                        let amp = ((o2[i] + 1) as f64).sqrt();
                        o2[i] += 1;
                        let term = ring.scale(&ring.mul(coef, &u[i][k]), amp);
                        match next.get_mut(&o2) {
                            Some(v) => *v = ring.add(v, &term),
                            None => {
                                next.insert(o2, term);
                            }
                        }
                    }
                }
                poly = next;
            }
        }
        let inv = 1.0 / norm.sqrt();
        for (occ, coef) in poly {
            let target = crate::fock::OccupationState { occupations: occ, excitations: st.excitations.clone() };
            if let Some(row) = basis.position(&target) {
                out.push((row, col, ring.scale(&coef, inv)));
            }
        }
    }
    out
}

fn eval_param(params: &ParameterPoint, name: &str) -> Result<f64> {
    params.get(name).ok_or_else(|| Error::UnboundParameter(name.to_string()))
}

/// Dense matrix of one factor on a basis.
pub fn factor_matrix(f: &Factor, params: &ParameterPoint, basis: &FockBasis) -> Result<CMat> {
    let a = eval_param(params, &f.params[0])?;
    let b = eval_param(params, &f.params[1])?;
    match f.kind {
        FactorKind::Mixer => {
            let m = basis.system.boson_modes;
            let one = C64::new(1.0, 0.0);
            let e = C64::from_polar(1.0, b);
            let u = mixer_entries(&Complex, m, f.modes[0], f.modes[1], one * a.cos(), one * a.sin(), e, e.conj());
            let trip = lift_single_particle(&Complex, &u, basis);
            Ok(SparseMatrix::from_triplets(basis.len(), basis.len(), trip).to_dense())
        }
        _ => {
            if basis.layer.is_some() && !f.kind.conserves_number() {
                return Err(Error::Config(format!("factor `{}` needs a truncated basis", f.kind.name())));
            }
            let g = word_matrix(&f.generator_word().expect("gaussian factor"), basis).to_dense();
            let pz = C64::from_polar(a, b);
            let gen = &g * pz - g.adjoint() * pz.conj();
            Ok(expm(&gen))
        }
    }
}

fn check_basis(c: &Compiled, basis: &FockBasis) -> Result<()> {
    if basis.system.boson_modes != c.system.boson_modes || basis.system.two_level_modes != c.system.two_level_modes {
        return Err(Error::Config(format!(
            "basis has {}+{} modes but the model needs {}+{}",
            basis.system.boson_modes, basis.system.two_level_modes, c.system.boson_modes, c.system.two_level_modes
        )));
    }
    Ok(())
}

/// `V(κ)` on the basis (identity for models without a word).
pub fn unitary_at(spec: &ModelSpec, params: &ParameterPoint, basis: &FockBasis) -> Result<CMat> {
    let c = spec.compiled();
    check_basis(&c, basis)?;
    let mut v = eye(basis.len());
    for f in &c.word {
        v *= factor_matrix(f, params, basis)?;
    }
    Ok(v)
}

/// `H(κ) = V H̃ V†` on the basis.
pub fn hamiltonian_at(spec: &ModelSpec, params: &ParameterPoint, basis: &FockBasis) -> Result<CMat> {
    let c = spec.compiled();
    check_basis(&c, basis)?;
    let h = operator_matrix(&c.h, basis, params)?;
    if c.word.is_empty() {
        return Ok(h);
    }
    let v = unitary_at(spec, params, basis)?;
    Ok(&v * h * v.adjoint())
}

/// Maximum unitarity defect `|U†U − I|` restricted to states with at most
/// `max_particles` quanta.
pub fn unitarity_defect(u: &CMat, basis: &FockBasis, max_particles: u32) -> f64 {
    let keep: Vec<usize> = (0..basis.len()).filter(|&k| basis.states[k].particles() <= max_particles).collect();
    let g = u.adjoint() * u;
    let mut worst = 0.0f64;
    for &i in &keep {
        for &j in &keep {
            let d = g[(i, j)] - if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            worst = worst.max(d.norm());
        }
    }
    worst
}

// ------------------------------------------------------------ documents

mod doc {
    use super::*;
    use toml::Spanned;

    #[derive(Debug, Deserialize, Serialize, Default)]
    #[serde(deny_unknown_fields)]
    pub struct Doc {
        #[serde(skip_serializing_if = "Option::is_none")]
        pub model: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub name: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub options: Option<Options>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub system: Option<SystemDoc>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub params: Option<toml::Table>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub base_point: Option<BTreeMap<String, f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub graph: Option<GraphDoc>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub isospectral: Option<IsoDoc>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub jaynes_cummings: Option<JcDoc>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub composite: Option<Vec<Doc>>,
    }

    #[derive(Debug, Deserialize, Serialize, Default)]
    #[serde(deny_unknown_fields)]
    pub struct Options {
        pub displace_mode: Option<usize>,
        pub squeeze_mode: Option<usize>,
        pub cutoff: Option<u32>,
        pub prefix: Option<String>,
    }

    #[derive(Debug, Deserialize, Serialize)]
    #[serde(deny_unknown_fields)]
    pub struct SystemDoc {
        pub bosons: usize,
        #[serde(default)]
        pub two_levels: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub cutoff: Option<u32>,
    }

    #[derive(Debug, Deserialize, Serialize)]
    #[serde(deny_unknown_fields)]
    pub struct GraphDoc {
        pub edge: Vec<EdgeDoc>,
    }

    #[derive(Debug, Deserialize, Serialize)]
    #[serde(deny_unknown_fields)]
    pub struct EdgeDoc {
        pub i: usize,
        pub j: usize,
        pub amp: Spanned<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub phase: Option<Spanned<String>>,
    }

    #[derive(Debug, Deserialize, Serialize)]
    #[serde(deny_unknown_fields)]
    pub struct IsoDoc {
        pub h0: Spanned<String>,
        pub word: Vec<FactorDoc>,
    }

    #[derive(Debug, Deserialize, Serialize)]
    #[serde(deny_unknown_fields)]
    pub struct FactorDoc {
        pub factor: String,
        pub modes: Vec<usize>,
        pub params: Vec<String>,
    }

    #[derive(Debug, Deserialize, Serialize)]
    #[serde(deny_unknown_fields)]
    pub struct JcDoc {
        pub omega_a: String,
        pub omega_c: String,
        pub kappa: String,
    }
}

/// Byte offset → 1-based (line, column).
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let upto = &text[..offset.min(text.len())];
    let line = upto.matches('\n').count() + 1;
    let col = upto.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, col)
}

fn spanned_expr<T>(text: &str, s: &toml::Spanned<String>, parse: impl Fn(&str) -> Result<T>) -> Result<T> {
    parse(s.get_ref()).map_err(|e| match e {
        Error::Parse { column, message, .. } => {
            // the span includes the opening quote
            let (line, col) = line_col(text, s.span().start + 1);
            Error::Parse { line, column: col + column - 1, message }
        }
        other => other,
    })
}

fn one_based(k: usize, what: &str) -> Result<usize> {
    if k == 0 {
        return Err(Error::Model(format!("{what} indices are 1-based; got 0")));
    }
    Ok(k - 1)
}

/// Parse a model document (TOML).
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    let d: doc::Doc = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        Error::Parse { line, column, message: e.message().to_string() }
    })?;
    let spec = from_doc(text, d)?;
    spec.validate()?;
    Ok(spec)
}

fn from_doc(text: &str, d: doc::Doc) -> Result<ModelSpec> {
    let bodies = [d.model.is_some(), d.graph.is_some(), d.isospectral.is_some(), d.jaynes_cummings.is_some(), d.composite.is_some()]
        .iter()
        .filter(|&&b| b)
        .count();
    if bodies != 1 {
        return Err(Error::Model("exactly one of `model`, `graph`, `isospectral`, `jaynes_cummings`, `composite` is required".into()));
    }
    if let Some(name) = &d.model {
        let o = d.options.unwrap_or_default();
        let mut opt = BuiltinOptions::default();
        if let Some(m) = o.displace_mode {
            opt.displace_mode = m;
        }
        if let Some(m) = o.squeeze_mode {
            opt.squeeze_mode = m;
        }
        if let Some(c) = o.cutoff {
            opt.cutoff = c;
        }
        if d.system.is_some() || d.params.is_some() {
            return Err(Error::Model("builtin references take only `options` and `base_point`".into()));
        }
        let mut spec = builtin_with(name, &opt)?;
        if let Some(p) = &o.prefix {
            spec = spec.with_prefix(p);
        }
        if let Some(b) = d.base_point {
            spec.base_point = Some(ParameterPoint { values: b });
        }
        return Ok(spec);
    }
    if d.options.is_some() {
        return Err(Error::Model("`options` applies to builtin references only".into()));
    }
    if let Some(parts) = d.composite {
        let specs = parts.into_iter().map(|p| from_doc(text, p)).collect::<Result<Vec<_>>>()?;
        let mut spec = compose(&specs)?;
        if let Some(n) = d.name {
            spec.name = n;
        }
        if let Some(b) = d.base_point {
            spec.base_point = Some(ParameterPoint { values: b });
        }
        return Ok(spec);
    }
    let sys = d.system.ok_or_else(|| Error::Model("missing `system` table".into()))?;
    let system = ModeSystem { boson_modes: sys.bosons, two_level_modes: sys.two_levels, cutoff: sys.cutoff };
    // inferred domains; explicit `params` entries override
    let mut inferred: Vec<ParamDecl> = Vec::new();
    let mut note = |n: &str, dom: Domain| {
        if !inferred.iter().any(|p| p.name == n) {
            inferred.push(ParamDecl::new(n, dom));
        }
    };
    let (kind, payload) = if let Some(g) = d.graph {
        let mut edges = Vec::new();
        for e in &g.edge {
            let amp = spanned_expr(text, &e.amp, ParamExpr::parse)?;
            let phase = match &e.phase {
                Some(s) => Some(spanned_expr(text, s, ParamExpr::parse)?),
                None => None,
            };
            let mut names = BTreeSet::new();
            amp.params(&mut names);
            for n in &names {
                note(n, Domain::Real);
            }
            if let Some(ph) = &phase {
                let mut names = BTreeSet::new();
                ph.params(&mut names);
                let dom = if matches!(ph, ParamExpr::Param(_)) { Domain::Phase } else { Domain::Real };
                for n in &names {
                    note(n, dom);
                }
            }
            edges.push(Edge { i: one_based(e.i, "mode")?, j: one_based(e.j, "mode")?, amp, phase });
        }
        (ModelKind::CoupledGraph, Payload::Graph { edges })
    } else if let Some(iso) = d.isospectral {
        let h0 = spanned_expr(text, &iso.h0, OperatorExpression::parse)?;
        if !h0.params().is_empty() {
            return Err(Error::Model("isospectral `h0` must not depend on parameters".into()));
        }
        let mut word = Vec::new();
        for fd in &iso.word {
            let kind = FactorKind::from_name(&fd.factor).ok_or_else(|| Error::Model(format!("unknown factor `{}`", fd.factor)))?;
            if fd.params.len() != 2 {
                return Err(Error::Model(format!("factor `{}` takes two parameter names", fd.factor)));
            }
            let modes = fd.modes.iter().map(|&m| one_based(m, "mode")).collect::<Result<Vec<_>>>()?;
            let (d0, d1) = if kind == FactorKind::Mixer { (Domain::Angle, Domain::Phase) } else { (Domain::Amplitude, Domain::Phase) };
            note(&fd.params[0], d0);
            note(&fd.params[1], d1);
            word.push(Factor { kind, modes, params: [fd.params[0].clone(), fd.params[1].clone()] });
        }
        let kind = if word.iter().all(|f| f.kind == FactorKind::Mixer) { ModelKind::IsospectralMixer } else { ModelKind::IsospectralGaussian };
        (kind, Payload::Isospectral { h0, word })
    } else {
        let jc = d.jaynes_cummings.expect("checked above");
        for n in [&jc.omega_a, &jc.omega_c, &jc.kappa] {
            note(n, Domain::Real);
        }
        (ModelKind::JaynesCummings, Payload::JaynesCummings { omega_a: jc.omega_a, omega_c: jc.omega_c, kappa: jc.kappa })
    };
    // declared parameters come first, in document order
    let mut params = Vec::new();
    if let Some(explicit) = d.params {
        for (n, dom) in explicit {
            let dom = dom
                .as_str()
                .and_then(Domain::from_name)
                .ok_or_else(|| Error::Model(format!("unknown domain `{dom}` for `{n}`")))?;
            if !inferred.iter().any(|p| p.name == n) {
                return Err(Error::Model(format!("declared parameter `{n}` is never used")));
            }
            params.push(ParamDecl { name: n, domain: dom });
        }
    }
    for p in inferred {
        if !params.iter().any(|q| q.name == p.name) {
            params.push(p);
        }
    }
    Ok(ModelSpec {
        name: d.name.unwrap_or_else(|| "custom".into()),
        kind,
        system,
        params,
        payload,
        base_point: d.base_point.map(|values| ParameterPoint { values }),
    })
}

fn toml_str(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Serialize a model as an explicit document (builtins are expanded).
pub fn serialize_model(spec: &ModelSpec) -> String {
    let mut out = String::new();
    write_model(spec, &mut out, "");
    out
}

fn write_model(spec: &ModelSpec, out: &mut String, prefix: &str) {
    let table = |name: &str| if prefix.is_empty() { format!("[{name}]") } else { format!("[{prefix}.{name}]") };
    let _ = writeln!(out, "name = {}", toml_str(&spec.name));
    if let Payload::Composite(parts) = &spec.payload {
        if let Some(b) = &spec.base_point {
            let _ = writeln!(out, "\n{}", table("base_point"));
            for (k, v) in &b.values {
                let _ = writeln!(out, "{k} = {v:?}");
            }
        }
        let arr = if prefix.is_empty() { "composite".to_string() } else { format!("{prefix}.composite") };
        for p in parts {
            let _ = writeln!(out, "\n[[{arr}]]");
            write_model(p, out, &arr);
        }
        return;
    }
    let _ = writeln!(out, "\n{}", table("system"));
    let _ = writeln!(out, "bosons = {}", spec.system.boson_modes);
    let _ = writeln!(out, "two_levels = {}", spec.system.two_level_modes);
    if let Some(c) = spec.system.cutoff {
        let _ = writeln!(out, "cutoff = {c}");
    }
    let _ = writeln!(out, "\n{}", table("params"));
    for p in &spec.params {
        let _ = writeln!(out, "{} = {}", p.name, toml_str(p.domain.name()));
    }
    if let Some(b) = &spec.base_point {
        let _ = writeln!(out, "\n{}", table("base_point"));
        for (k, v) in &b.values {
            let _ = writeln!(out, "{k} = {v:?}");
        }
    }
    match &spec.payload {
        Payload::Graph { edges } => {
            let _ = writeln!(out, "\n{}", table("graph"));
            let _ = writeln!(out, "edge = [");
            for e in edges {
                let phase = e.phase.as_ref().map_or(String::new(), |p| format!(", phase = {}", toml_str(&p.to_string())));
                let _ = writeln!(out, "  {{ i = {}, j = {}, amp = {}{phase} }},", e.i + 1, e.j + 1, toml_str(&e.amp.to_string()));
            }
            let _ = writeln!(out, "]");
        }
        Payload::JaynesCummings { omega_a, omega_c, kappa } => {
            let _ = writeln!(out, "\n{}", table("jaynes_cummings"));
            let _ = writeln!(out, "omega_a = {}\nomega_c = {}\nkappa = {}", toml_str(omega_a), toml_str(omega_c), toml_str(kappa));
        }
        Payload::Isospectral { h0, word } => {
            let _ = writeln!(out, "\n{}", table("isospectral"));
            let _ = writeln!(out, "h0 = {}", toml_str(&h0.to_string()));
            let _ = writeln!(out, "word = [");
            for f in word {
                let modes: Vec<String> = f.modes.iter().map(|m| (m + 1).to_string()).collect();
                let _ = writeln!(
                    out,
                    "  {{ factor = {}, modes = [{}], params = [{}, {}] }},",
                    toml_str(f.kind.name()),
                    modes.join(", "),
                    toml_str(&f.params[0]),
                    toml_str(&f.params[1])
                );
            }
            let _ = writeln!(out, "]");
        }
        Payload::Composite(_) => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::enumerate_layer;

    #[test]
    fn builtin_shapes() {
        let l = builtin("lambda").unwrap();
        assert_eq!((l.system.boson_modes, l.params.len()), (3, 2));
        let f = builtin("fcg4").unwrap();
        assert_eq!((f.system.boson_modes, f.params.len()), (4, 6));
        let k = builtin("kerr2").unwrap();
        assert_eq!((k.system.boson_modes, k.params.len()), (2, 8));
        assert!(builtin("nope").is_err());
    }

    #[test]
    fn mixer_at_zero_is_identity() {
        let spec = builtin("fcg4").unwrap();
        let mut p = ParameterPoint::new();
        for n in spec.param_names() {
            p.set(&n, 0.0);
        }
        for n in 0..=3 {
            let b = enumerate_layer(&spec.system, n);
            let v = unitary_at(&spec, &p, &b).unwrap();
            assert!(crate::linalg::max_abs(&(v - eye(b.len()))) < 1e-15);
        }
    }

    #[test]
    fn composite_collision_is_rejected() {
        let l = builtin("lambda").unwrap();
        assert!(compose(&[l.clone(), l.clone()]).is_err());
        let c = compose(&[l.clone(), l.with_prefix("b_")]).unwrap();
        assert_eq!((c.system.boson_modes, c.params.len()), (6, 4));
    }

    #[test]
    fn document_round_trip() {
        for name in BUILTINS {
            let spec = builtin(name).unwrap();
            let text = serialize_model(&spec);
            let back = parse_model(&text).unwrap_or_else(|e| panic!("{name}: {e}\n{text}"));
            assert_eq!(serialize_model(&back), text);
            assert_eq!(back.params, spec.params);
        }
    }
}
