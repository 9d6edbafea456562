//! Extended plants, regulators and their closed-loop interconnection.
//!
//! The closed loop is built once by symbolic substitution, so a single
//! autonomous vector field in the state `(w, x_p, x_c)` is handed to the
//! integrator and can be printed for inspection.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{linear_combination, Bindings, EvalError, Expr, Family, Var, VarBinding};
use crate::linalg::{controllability_rank, Matrix, RANK_TOL};
use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{context}: variable {var} is not allowed here")]
    VariableOutOfScope { context: String, var: Var },
    #[error("error_in_output is set but the first outputs do not equal the error map")]
    ErrorNotInOutput,
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("internal-model pair (Phi, G) is not controllable (rank {rank} < {dim})")]
    UncontrollableInternalModel { rank: usize, dim: usize },
}

/// Variables admitted in one group of expressions.
struct Scope<'a> {
    context: &'a str,
    allowed: &'a [(Family, usize)],
}

impl Scope<'_> {
    fn check(&self, exprs: &[Expr]) -> Result<(), DynamicsError> {
        for e in exprs {
            for v in e.free_vars() {
                let ok = match v {
                    Var::Indexed(fam, i) => self
                        .allowed
                        .iter()
                        .any(|&(f, n)| f == fam && i >= 1 && (i as usize) <= n),
                    Var::Time => false,
                };
                if !ok {
                    return Err(DynamicsError::VariableOutOfScope {
                        context: self.context.to_string(),
                        var: v,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Exosystem plus plant: `ẇ = s(w)`, `ẋ_p = f_p(w, x_p, u)`, `y = h_p(w, x_p)`,
/// `e = h_e(w, x_p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlantRepr", into = "PlantRepr")]
pub struct ExtendedPlant {
    n_w: usize,
    n_p: usize,
    n_u: usize,
    s: Vec<Expr>,
    f_p: Vec<Expr>,
    h_p: Vec<Expr>,
    h_e: Vec<Expr>,
    error_in_output: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PlantRepr {
    n_u: usize,
    s: Vec<Expr>,
    f_p: Vec<Expr>,
    h_p: Vec<Expr>,
    h_e: Vec<Expr>,
}

impl TryFrom<PlantRepr> for ExtendedPlant {
    type Error = DynamicsError;
    fn try_from(r: PlantRepr) -> Result<Self, DynamicsError> {
        ExtendedPlant::new(r.s, r.f_p, r.h_p, r.h_e, r.n_u)
    }
}

impl From<ExtendedPlant> for PlantRepr {
    fn from(p: ExtendedPlant) -> Self {
        PlantRepr { n_u: p.n_u, s: p.s, f_p: p.f_p, h_p: p.h_p, h_e: p.h_e }
    }
}

impl ExtendedPlant {
    /// Dimensions are taken from the expression counts; `n_u` is explicit
    /// because inputs need not all appear in `f_p`.
    ///
    /// The error is flagged as part of the output (y = (e, y_aux)) when the
    /// first `n_e` output maps are structurally identical to `h_e`.
    pub fn new(
        s: Vec<Expr>,
        f_p: Vec<Expr>,
        h_p: Vec<Expr>,
        h_e: Vec<Expr>,
        n_u: usize,
    ) -> Result<Self, DynamicsError> {
        let (n_w, n_p) = (s.len(), f_p.len());
        Scope { context: "exosystem s", allowed: &[(Family::W, n_w)] }.check(&s)?;
        Scope { context: "plant f_p", allowed: &[(Family::W, n_w), (Family::X, n_p), (Family::U, n_u)] }
            .check(&f_p)?;
        Scope { context: "output h_p", allowed: &[(Family::W, n_w), (Family::X, n_p)] }.check(&h_p)?;
        Scope { context: "error h_e", allowed: &[(Family::W, n_w), (Family::X, n_p)] }.check(&h_e)?;
        let error_in_output = h_e.len() <= h_p.len() && h_p[..h_e.len()] == h_e[..];
        Ok(Self { n_w, n_p, n_u, s, f_p, h_p, h_e, error_in_output })
    }

    /// Like [`ExtendedPlant::new`] but rejects plants whose output does not
    /// start with the regulation error.
    pub fn with_error_in_output(
        s: Vec<Expr>,
        f_p: Vec<Expr>,
        h_p: Vec<Expr>,
        h_e: Vec<Expr>,
        n_u: usize,
    ) -> Result<Self, DynamicsError> {
        let p = Self::new(s, f_p, h_p, h_e, n_u)?;
        if !p.error_in_output {
            return Err(DynamicsError::ErrorNotInOutput);
        }
        Ok(p)
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }
    pub fn n_p(&self) -> usize {
        self.n_p
    }
    pub fn n_u(&self) -> usize {
        self.n_u
    }
    pub fn n_y(&self) -> usize {
        self.h_p.len()
    }
    pub fn n_e(&self) -> usize {
        self.h_e.len()
    }
    pub fn s(&self) -> &[Expr] {
        &self.s
    }
    pub fn f_p(&self) -> &[Expr] {
        &self.f_p
    }
    pub fn h_p(&self) -> &[Expr] {
        &self.h_p
    }
    pub fn h_e(&self) -> &[Expr] {
        &self.h_e
    }
    pub fn error_in_output(&self) -> bool {
        self.error_in_output
    }

    /// Returns a copy with `extra` added to the `component`-th plant equation.
    pub fn with_added_term(&self, component: usize, extra: Expr) -> Result<Self, DynamicsError> {
        if component >= self.n_p {
            return Err(DynamicsError::Dimension(format!(
                "plant has {} equations, cannot perturb component {component}",
                self.n_p
            )));
        }
        let mut f_p = self.f_p.clone();
        f_p[component] = f_p[component].clone() + extra;
        Self::new(self.s.clone(), f_p, self.h_p.clone(), self.h_e.clone(), self.n_u)
    }

    /// Full map `(w, x_p, u) ↦ (s, f_p, h_p)` as one list, used by the
    /// function-space semimetrics.
    pub fn function_components(&self) -> Vec<Expr> {
        self.s.iter().chain(&self.f_p).chain(&self.h_p).cloned().collect()
    }

    /// Variables of [`ExtendedPlant::function_components`], in grid-axis order.
    pub fn function_arguments(&self) -> Vec<Var> {
        let w = (1..=self.n_w as u32).map(Var::w);
        let x = (1..=self.n_p as u32).map(Var::x);
        let u = (1..=self.n_u as u32).map(Var::u);
        w.chain(x).chain(u).collect()
    }
}

/// Compact initial set: a point or an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSet {
    Point(Vec<f64>),
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl InitialSet {
    pub fn origin(dim: usize) -> Self {
        InitialSet::Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialSet::Point(p) => p.len(),
            InitialSet::Box { lo, .. } => lo.len(),
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if let InitialSet::Box { lo, hi } = self {
            if lo.len() != hi.len() {
                return Err(DynamicsError::Dimension("box bounds of different length".into()));
            }
            if lo.iter().zip(hi).any(|(a, b)| a > b || !a.is_finite() || !b.is_finite()) {
                return Err(DynamicsError::Dimension("box with lo > hi or non-finite bound".into()));
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            InitialSet::Point(p) => (p.clone(), p.clone()),
            InitialSet::Box { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        let (lo, hi) = self.bounds();
        lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// Position of the internal-model block `η` inside the regulator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImBlock {
    pub offset: usize,
    pub dim: usize,
}

/// `ẋ_c = f_c(x_c, y)`, `u = h_c(x_c, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegulatorRepr", into = "RegulatorRepr")]
pub struct Regulator {
    n_y: usize,
    f_c: Vec<Expr>,
    h_c: Vec<Expr>,
    x_c: InitialSet,
    internal_model: Option<ImBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RegulatorRepr {
    n_y: usize,
    f_c: Vec<Expr>,
    h_c: Vec<Expr>,
    #[serde(default)]
    x_c: Option<InitialSet>,
    #[serde(default)]
    internal_model: Option<ImBlock>,
}

impl TryFrom<RegulatorRepr> for Regulator {
    type Error = DynamicsError;
    fn try_from(r: RegulatorRepr) -> Result<Self, DynamicsError> {
        let reg = Regulator::new(r.f_c, r.h_c, r.n_y, r.x_c)?;
        match r.internal_model {
            Some(b) => reg.with_internal_model(b),
            None => Ok(reg),
        }
    }
}

impl From<Regulator> for RegulatorRepr {
    fn from(r: Regulator) -> Self {
        RegulatorRepr {
            n_y: r.n_y,
            f_c: r.f_c,
            h_c: r.h_c,
            x_c: Some(r.x_c),
            internal_model: r.internal_model,
        }
    }
}

impl Regulator {
    /// `x_c` defaults to the origin.
    pub fn new(
        f_c: Vec<Expr>,
        h_c: Vec<Expr>,
        n_y: usize,
        x_c: Option<InitialSet>,
    ) -> Result<Self, DynamicsError> {
        let n_c = f_c.len();
        let scope = [(Family::C, n_c), (Family::Y, n_y)];
        Scope { context: "regulator f_c", allowed: &scope }.check(&f_c)?;
        Scope { context: "regulator h_c", allowed: &scope }.check(&h_c)?;
        let x_c = x_c.unwrap_or_else(|| InitialSet::origin(n_c));
        x_c.validate()?;
        if x_c.dim() != n_c {
            return Err(DynamicsError::Dimension(format!(
                "regulator initial set has dimension {}, state has {n_c}",
                x_c.dim()
            )));
        }
        Ok(Self { n_y, f_c, h_c, x_c, internal_model: None })
    }

    /// Static output feedback `u = h_c(y)` with no state.
    pub fn static_feedback(h_c: Vec<Expr>, n_y: usize) -> Result<Self, DynamicsError> {
        Self::new(Vec::new(), h_c, n_y, None)
    }

    pub fn with_internal_model(mut self, block: ImBlock) -> Result<Self, DynamicsError> {
        if block.offset + block.dim > self.n_c() {
            return Err(DynamicsError::Dimension(format!(
                "internal-model block {}..{} outside regulator state of dimension {}",
                block.offset,
                block.offset + block.dim,
                self.n_c()
            )));
        }
        self.internal_model = Some(block);
        Ok(self)
    }

    pub fn n_c(&self) -> usize {
        self.f_c.len()
    }
    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn n_u(&self) -> usize {
        self.h_c.len()
    }
    pub fn f_c(&self) -> &[Expr] {
        &self.f_c
    }
    pub fn h_c(&self) -> &[Expr] {
        &self.h_c
    }
    pub fn initial_set(&self) -> &InitialSet {
        &self.x_c
    }
    pub fn internal_model(&self) -> Option<ImBlock> {
        self.internal_model
    }
}

/// Regulator whose state splits as `x_c = (η, x_st)` with
/// `η̇ = Φη + G e` and `e = (y_1, …, y_{n_e})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearIMRegulator {
    regulator: Regulator,
    phi: Matrix<f64>,
    g: Matrix<f64>,
}

impl LinearIMRegulator {
    /// `f_st` and `h_c` are written in `c` (η first, then `x_st`) and `y`.
    pub fn new(
        phi: Matrix<f64>,
        g: Matrix<f64>,
        f_st: Vec<Expr>,
        h_c: Vec<Expr>,
        n_y: usize,
        x_c: Option<InitialSet>,
    ) -> Result<Self, DynamicsError> {
        let n_eta = phi.nrows();
        if !phi.is_square() || g.nrows() != n_eta {
            return Err(DynamicsError::Dimension(format!(
                "Phi is {}x{}, G is {}x{}",
                phi.nrows(),
                phi.ncols(),
                g.nrows(),
                g.ncols()
            )));
        }
        if g.ncols() > n_y {
            return Err(DynamicsError::Dimension(format!(
                "internal model reads {} errors but only {n_y} outputs exist",
                g.ncols()
            )));
        }
        let rank = controllability_rank(&phi, &g, RANK_TOL);
        if rank < n_eta {
            return Err(DynamicsError::UncontrollableInternalModel { rank, dim: n_eta });
        }
        let mut f_c: Vec<Expr> = (0..n_eta)
            .map(|i| {
                let eta = (0..n_eta).map(|j| (phi[(i, j)], Expr::from(Var::c(j as u32 + 1))));
                let err = (0..g.ncols()).map(|k| (g[(i, k)], Expr::from(Var::y(k as u32 + 1))));
                linear_combination(eta.chain(err))
            })
            .collect();
        f_c.extend(f_st);
        let regulator = Regulator::new(f_c, h_c, n_y, x_c)?
            .with_internal_model(ImBlock { offset: 0, dim: n_eta })?;
        Ok(Self { regulator, phi, g })
    }

    pub fn regulator(&self) -> &Regulator {
        &self.regulator
    }
    pub fn into_regulator(self) -> Regulator {
        self.regulator
    }
    pub fn phi(&self) -> &Matrix<f64> {
        &self.phi
    }
    pub fn g(&self) -> &Matrix<f64> {
        &self.g
    }
    pub fn n_eta(&self) -> usize {
        self.phi.nrows()
    }
    pub fn n_st(&self) -> usize {
        self.regulator.n_c() - self.n_eta()
    }
}

/// Autonomous interconnection of an extended plant and a regulator, with
/// state `z = (w, x_p, x_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopSystem {
    n_w: usize,
    n_p: usize,
    n_c: usize,
    field: Vec<Expr>,
    error: Vec<Expr>,
    control: Vec<Expr>,
    internal_model: Option<ImBlock>,
}

/// Reads closed-loop variables out of a flat state vector.
#[derive(Debug, Clone, Copy)]
pub struct StateView<'a, T> {
    n_w: usize,
    n_p: usize,
    z: &'a [T],
}

impl<T: Copy> Bindings<T> for StateView<'_, T> {
    #[inline]
    fn value(&self, v: Var) -> Option<T> {
        let idx = match v {
            Var::Indexed(Family::W, i) => (i as usize).checked_sub(1)?,
            Var::Indexed(Family::X, i) => self.n_w + (i as usize).checked_sub(1)?,
            Var::Indexed(Family::C, i) => self.n_w + self.n_p + (i as usize).checked_sub(1)?,
            _ => return None,
        };
        self.z.get(idx).copied()
    }
}

impl ClosedLoopSystem {
    pub fn dim(&self) -> usize {
        self.n_w + self.n_p + self.n_c
    }
    pub fn n_w(&self) -> usize {
        self.n_w
    }
    pub fn n_p(&self) -> usize {
        self.n_p
    }
    pub fn n_c(&self) -> usize {
        self.n_c
    }
    pub fn n_e(&self) -> usize {
        self.error.len()
    }
    pub fn field(&self) -> &[Expr] {
        &self.field
    }
    pub fn error_map(&self) -> &[Expr] {
        &self.error
    }
    pub fn control_map(&self) -> &[Expr] {
        &self.control
    }

    /// Range of the internal-model state inside `z`.
    pub fn internal_model_range(&self) -> Option<Range<usize>> {
        self.internal_model.map(|b| {
            let start = self.n_w + self.n_p + b.offset;
            start..start + b.dim
        })
    }

    pub fn view<'a, T>(&self, z: &'a [T]) -> StateView<'a, T> {
        StateView { n_w: self.n_w, n_p: self.n_p, z }
    }

    pub fn eval_field<T: Real>(&self, z: &[T], out: &mut [T]) -> Result<(), EvalError> {
        let view = self.view(z);
        for (o, f) in out.iter_mut().zip(&self.field) {
            *o = f.eval(&view)?;
        }
        Ok(())
    }

    pub fn eval_error<T: Real>(&self, z: &[T]) -> Result<Vec<T>, EvalError> {
        let view = self.view(z);
        self.error.iter().map(|e| e.eval(&view)).collect()
    }

    /// Field printed one equation per line.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (i, f) in self.field.iter().enumerate() {
            let name = self.state_name(i);
            out.push_str(&format!("d{name}/dt = {f}\n"));
        }
        for (i, e) in self.error.iter().enumerate() {
            out.push_str(&format!("e{} = {e}\n", i + 1));
        }
        for (i, u) in self.control.iter().enumerate() {
            out.push_str(&format!("u{} = {u}\n", i + 1));
        }
        out
    }

    /// Variable name of state coordinate `i` (`w1`, `x2`, `c3`, ...).
    pub fn state_name(&self, i: usize) -> Var {
        if i < self.n_w {
            Var::w(i as u32 + 1)
        } else if i < self.n_w + self.n_p {
            Var::x((i - self.n_w) as u32 + 1)
        } else {
            Var::c((i - self.n_w - self.n_p) as u32 + 1)
        }
    }
}

impl fmt::Display for ClosedLoopSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

/// Interconnects `plant` and `reg` by substituting `y = h_p(w, x_p)` into the
/// regulator and `u = h_c(x_c, y)` into the plant.
pub fn compose_closed_loop(
    plant: &ExtendedPlant,
    reg: &Regulator,
) -> Result<ClosedLoopSystem, DynamicsError> {
    if reg.n_y() != plant.n_y() {
        return Err(DynamicsError::Dimension(format!(
            "regulator reads {} outputs, plant provides {}",
            reg.n_y(),
            plant.n_y()
        )));
    }
    if reg.n_u() != plant.n_u() {
        return Err(DynamicsError::Dimension(format!(
            "regulator drives {} inputs, plant has {}",
            reg.n_u(),
            plant.n_u()
        )));
    }
    let outputs = plant.h_p().to_vec();
    let sub_y = |v: Var| match v {
        Var::Indexed(Family::Y, i) => outputs.get(i as usize - 1).cloned(),
        _ => None,
    };
    let control: Vec<Expr> = reg.h_c().iter().map(|h| h.substitute(&sub_y)).collect();
    let reg_field: Vec<Expr> = reg.f_c().iter().map(|f| f.substitute(&sub_y)).collect();
    let sub_u = |v: Var| match v {
        Var::Indexed(Family::U, i) => control.get(i as usize - 1).cloned(),
        _ => None,
    };
    let plant_field = plant.f_p().iter().map(|f| f.substitute(&sub_u));
    let field: Vec<Expr> = plant.s().iter().cloned().chain(plant_field).chain(reg_field).collect();
    Ok(ClosedLoopSystem {
        n_w: plant.n_w(),
        n_p: plant.n_p(),
        n_c: reg.n_c(),
        field,
        error: plant.h_e().to_vec(),
        control,
        internal_model: reg.internal_model(),
    })
}

/// Jacobians of an extended plant at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationBundle<T: Real> {
    /// ∂f_p/∂x_p
    pub dfdx: Matrix<T>,
    /// ∂f_p/∂u
    pub dfdu: Matrix<T>,
    /// ∂f_p/∂w
    pub dfdw: Matrix<T>,
    /// ∂h_e/∂x_p
    pub dhedx: Matrix<T>,
    /// ∂h_e/∂w
    pub dhedw: Matrix<T>,
    /// ∂h_p/∂x_p
    pub dhdx: Matrix<T>,
    /// ∂s/∂w
    pub dsdw: Matrix<T>,
}

fn jacobian<T: Real>(
    exprs: &[Expr],
    vars: &[Var],
    at: &VarBinding<T>,
) -> Result<Matrix<T>, DynamicsError> {
    let mut m = Matrix::zeros(exprs.len(), vars.len());
    for (i, e) in exprs.iter().enumerate() {
        for (j, v) in vars.iter().enumerate() {
            m[(i, j)] = e.differentiate(*v).eval(at)?;
        }
    }
    Ok(m)
}

/// Symbolic Jacobians evaluated at `point = (w, x_p, u)`.
pub fn linearize_at<T: Real>(
    plant: &ExtendedPlant,
    point: &[T],
) -> Result<LinearizationBundle<T>, DynamicsError> {
    let args = plant.function_arguments();
    if point.len() != args.len() {
        return Err(DynamicsError::Dimension(format!(
            "linearization point has {} entries, expected n_w+n_p+n_u = {}",
            point.len(),
            args.len()
        )));
    }
    let at: VarBinding<T> = args.iter().copied().zip(point.iter().copied()).collect();
    let w: Vec<Var> = (1..=plant.n_w() as u32).map(Var::w).collect();
    let x: Vec<Var> = (1..=plant.n_p() as u32).map(Var::x).collect();
    let u: Vec<Var> = (1..=plant.n_u() as u32).map(Var::u).collect();
    Ok(LinearizationBundle {
        dfdx: jacobian(plant.f_p(), &x, &at)?,
        dfdu: jacobian(plant.f_p(), &u, &at)?,
        dfdw: jacobian(plant.f_p(), &w, &at)?,
        dhedx: jacobian(plant.h_e(), &x, &at)?,
        dhedw: jacobian(plant.h_e(), &w, &at)?,
        dhdx: jacobian(plant.h_p(), &x, &at)?,
        dsdw: jacobian(plant.s(), &w, &at)?,
    })
}
