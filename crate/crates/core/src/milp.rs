//! A small mixed-integer linear model representation with named rows, an
//! LP-format writer, and adapters to HiGHS (MILP) and microlp (pure LP).

use std::fmt::Write as _;
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone)]
pub struct Var {
    pub name: String,
    pub lb: f64,
    pub ub: f64,
    pub kind: VarKind,
    pub obj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * x[v.0]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.cmp {
            Cmp::Le => (a - self.rhs).max(0.0),
            Cmp::Ge => (self.rhs - a).max(0.0),
            Cmp::Eq => (a - self.rhs).abs(),
        }
    }
}

/// Maximization model.
#[derive(Debug, Clone, Default)]
pub struct Model {
    pub vars: Vec<Var>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub values: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("model infeasible; suspect rows: {0:?}")]
    Infeasible(Vec<String>),
    #[error("model unbounded")]
    Unbounded,
    #[error("solver time limit reached")]
    Timeout,
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("{0}")]
    Unsupported(String),
}

impl Model {
    pub fn add_var(&mut self, name: impl Into<String>, lb: f64, ub: f64, obj: f64) -> VarId {
        self.vars.push(Var {
            name: name.into(),
            lb,
            ub,
            kind: VarKind::Continuous,
            obj,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>, obj: f64) -> VarId {
        self.vars.push(Var {
            name: name.into(),
            lb: 0.0,
            ub: 1.0,
            kind: VarKind::Binary,
            obj,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_row(&mut self, name: impl Into<String>, terms: Vec<(VarId, f64)>, cmp: Cmp, rhs: f64) {
        self.rows.push(Row {
            name: name.into(),
            terms,
            cmp,
            rhs,
        });
    }

    pub fn fix(&mut self, v: VarId, value: f64) {
        self.vars[v.0].lb = value;
        self.vars[v.0].ub = value;
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, x)| v.obj * x).sum()
    }

    pub fn n_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Rows and bounds violated by more than `tol`, with their residuals.
    pub fn violations(&self, x: &[f64], tol: f64) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (v, &xi) in self.vars.iter().zip(x) {
            let r = (v.lb - xi).max(xi - v.ub).max(0.0);
            if r > tol {
                out.push((format!("bound:{}", v.name), r));
            }
            if v.kind == VarKind::Binary && (xi - xi.round()).abs() > tol {
                out.push((format!("integrality:{}", v.name), (xi - xi.round()).abs()));
            }
        }
        for row in &self.rows {
            let r = row.violation(x);
            if r > tol {
                out.push((row.name.clone(), r));
            }
        }
        out
    }

    /// CPLEX LP format text.
    pub fn to_lp_format(&self, title: &str) -> String {
        let name = |s: &str| -> String {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
                .collect()
        };
        let expr = |terms: &mut dyn Iterator<Item = (usize, f64)>| -> String {
            let mut s = String::new();
            for (i, c) in terms {
                let sign = if c < 0.0 { '-' } else { '+' };
                let _ = write!(s, " {sign} {} {}", c.abs(), name(&self.vars[i].name));
            }
            if s.is_empty() { " 0".into() } else { s }
        };
        let mut out = String::new();
        let _ = writeln!(out, "\\ {title}\nMaximize");
        let mut obj = self
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.obj != 0.0)
            .map(|(i, v)| (i, v.obj));
        let _ = writeln!(out, " obj:{}", expr(&mut obj));
        out.push_str("Subject To\n");
        for row in &self.rows {
            let op = match row.cmp {
                Cmp::Le => "<=",
                Cmp::Ge => ">=",
                Cmp::Eq => "=",
            };
            let mut terms = row.terms.iter().map(|(v, c)| (v.0, *c));
            let _ = writeln!(out, " {}:{} {op} {}", name(&row.name), expr(&mut terms), row.rhs);
        }
        out.push_str("Bounds\n");
        for v in &self.vars {
            let n = name(&v.name);
            match (v.lb.is_finite(), v.ub.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {n} free");
                }
                (true, true) => {
                    let _ = writeln!(out, " {} <= {n} <= {}", v.lb, v.ub);
                }
                (true, false) => {
                    let _ = writeln!(out, " {n} >= {}", v.lb);
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {n} <= {}", v.ub);
                }
            }
        }
        let bins: Vec<String> = self
            .vars
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .map(|v| name(&v.name))
            .collect();
        if !bins.is_empty() {
            out.push_str("Binaries\n");
            for b in bins {
                let _ = writeln!(out, " {b}");
            }
        }
        out.push_str("End\n");
        out
    }
}

/// HiGHS settings. Runs single-threaded with a fixed seed so repeated
/// solves of one model return the same point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighsOptions {
    pub mip_abs_gap: f64,
    pub mip_rel_gap: f64,
    pub time_limit: Duration,
}

impl Default for HighsOptions {
    fn default() -> Self {
        Self {
            mip_abs_gap: 1e-6,
            mip_rel_gap: 1e-6,
            time_limit: Duration::from_secs(60),
        }
    }
}

pub fn solve_highs(model: &Model, opts: &HighsOptions) -> Result<MilpSolution, SolveError> {
    use highs::{HighsModelStatus, RowProblem, Sense};

    let mut pb = RowProblem::default();
    let cols: Vec<_> = model
        .vars
        .iter()
        .map(|v| match v.kind {
            VarKind::Binary => pb.add_integer_column(v.obj, v.lb..=v.ub),
            VarKind::Continuous => match (v.lb.is_finite(), v.ub.is_finite()) {
                (true, true) => pb.add_column(v.obj, v.lb..=v.ub),
                (true, false) => pb.add_column(v.obj, v.lb..),
                (false, true) => pb.add_column(v.obj, ..=v.ub),
                (false, false) => pb.add_column::<f64, _>(v.obj, ..),
            },
        })
        .collect();
    for row in &model.rows {
        let terms: Vec<_> = row.terms.iter().map(|(v, c)| (cols[v.0], *c)).collect();
        match row.cmp {
            Cmp::Le => pb.add_row(..=row.rhs, terms),
            Cmp::Ge => pb.add_row(row.rhs.., terms),
            Cmp::Eq => pb.add_row(row.rhs..=row.rhs, terms),
        }
    }
    let mut m = pb
        .try_optimise(Sense::Maximise)
        .map_err(|e| SolveError::Backend(format!("{e:?}")))?;
    m.make_quiet();
    m.set_option("threads", 1);
    m.set_option("random_seed", 0);
    m.set_option("mip_abs_gap", opts.mip_abs_gap);
    m.set_option("mip_rel_gap", opts.mip_rel_gap);
    m.set_option("time_limit", opts.time_limit.as_secs_f64());
    let solved = m.try_solve().map_err(|e| SolveError::Backend(format!("{e:?}")))?;
    match solved.status() {
        HighsModelStatus::Optimal => {}
        HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
            return Err(SolveError::Infeasible(Vec::new()));
        }
        HighsModelStatus::Unbounded => return Err(SolveError::Unbounded),
        HighsModelStatus::ReachedTimeLimit => return Err(SolveError::Timeout),
        other => return Err(SolveError::Backend(format!("status {other:?}"))),
    }
    let mut values = solved.get_solution().columns().to_vec();
    for (v, x) in model.vars.iter().zip(values.iter_mut()) {
        if v.kind == VarKind::Binary {
            *x = x.round();
        }
    }
    let objective = model.objective(&values);
    Ok(MilpSolution { values, objective })
}

/// Solves the continuous relaxation with microlp. Binary variables must
/// already be fixed through their bounds.
pub fn solve_lp(model: &Model) -> Result<MilpSolution, SolveError> {
    use microlp::{ComparisonOp, Error, OptimizationDirection, Problem};

    let mut pb = Problem::new(OptimizationDirection::Maximize);
    let mut vars = Vec::with_capacity(model.vars.len());
    for v in &model.vars {
        if v.kind == VarKind::Binary && v.lb != v.ub {
            return Err(SolveError::Unsupported(format!(
                "binary {} is not fixed; the LP path needs every binary fixed",
                v.name
            )));
        }
        vars.push(pb.add_var(v.obj, (v.lb, v.ub)));
    }
    for row in &model.rows {
        let mut expr = microlp::LinearExpr::empty();
        for (v, c) in &row.terms {
            expr.add(vars[v.0], *c);
        }
        let op = match row.cmp {
            Cmp::Le => ComparisonOp::Le,
            Cmp::Ge => ComparisonOp::Ge,
            Cmp::Eq => ComparisonOp::Eq,
        };
        pb.add_constraint(expr, op, row.rhs);
    }
    match pb.solve() {
        Ok(outcome) => {
            let sol = outcome
                .solution()
                .ok_or_else(|| SolveError::Backend("microlp returned no solution".into()))?;
            let values: Vec<f64> = vars.iter().map(|v| sol.var_value(*v)).collect();
            let objective = model.objective(&values);
            Ok(MilpSolution { values, objective })
        }
        Err(Error::Infeasible) => Err(SolveError::Infeasible(Vec::new())),
        Err(Error::Unbounded) => Err(SolveError::Unbounded),
        Err(e) => Err(SolveError::Backend(e.to_string())),
    }
}
