use std::path::PathBuf;
use std::str::FromStr;

use korovkin_core::analysis::{
    check_comonotone_additivity, check_monotonicity, check_order_lipschitz, check_sublinearity,
    check_translatability, harness_domain, korovkin_harness, operator_norm, CheckConfig, ConvergenceMode,
    HarnessConfig, Verdict,
};
use korovkin_core::choquet::{choquet_integral, choquet_integral_2d, CellBlock};
use korovkin_core::gridfn::{sample, Domain, DomainKind, FunctionSpec, Grid};
use korovkin_core::{Capacity, Error, OperatorSpec, PropertyReport};

use crate::config::{Setting, Settings};
use crate::error::CliError;
use crate::output::{num, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Integrate,
    Apply,
    Properties,
    Korovkin,
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "integrate" => Ok(Command::Integrate),
            "apply" => Ok(Command::Apply),
            "properties" => Ok(Command::Properties),
            "korovkin" => Ok(Command::Korovkin),
            other => Err(format!("unknown command `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainArg {
    Interval(f64, f64),
    Kind(DomainKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub command: Command,
    pub op: Option<OperatorSpec>,
    pub functions: Vec<FunctionSpec>,
    pub cap: Capacity,
    pub domain: Option<DomainArg>,
    pub cells: Option<usize>,
    pub ns: Vec<usize>,
    pub mode: ConvergenceMode,
    pub seed: u64,
    pub trials: usize,
    pub out: Option<PathBuf>,
    pub strict: bool,
}

/// Parse a core text form, mapping its column to the setting's origin.
fn text_form<T: FromStr<Err = Error>>(s: &Setting) -> Result<T, CliError> {
    s.value.parse::<T>().map_err(|e| match e {
        Error::Parse { column, message } => s.error_at(column, message),
        other => s.error_at(1, other),
    })
}

fn number<T: FromStr>(s: &Setting, what: &str) -> Result<T, CliError> {
    s.value.trim().parse::<T>().map_err(|_| s.error_at(1, format!("expected {what}")))
}

fn boolean(s: &Setting) -> Result<bool, CliError> {
    match s.value.trim() {
        "true" | "yes" | "1" | "" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(s.error_at(1, "expected true or false")),
    }
}

fn domain_arg(s: &Setting) -> Result<DomainArg, CliError> {
    if let Some((a, b)) = s.value.split_once(',') {
        let a: f64 = a.trim().parse().map_err(|_| s.error_at(1, "expected a number"))?;
        let b: f64 = b
            .trim()
            .parse()
            .map_err(|_| s.error_at(s.value.find(',').unwrap() + 2, "expected a number"))?;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(s.error_at(1, "interval needs finite a < b"));
        }
        return Ok(DomainArg::Interval(a, b));
    }
    text_form::<DomainKind>(s).map(DomainArg::Kind)
}

fn ns_list(s: &Setting) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    let mut col = 1;
    for piece in s.value.split(',') {
        let n: usize = piece.trim().parse().map_err(|_| s.error_at(col, "expected a positive integer"))?;
        if n == 0 || out.last().is_some_and(|&prev| n <= prev) {
            return Err(s.error_at(col, "n values must be positive and strictly ascending"));
        }
        out.push(n);
        col += piece.chars().count() + 1;
    }
    Ok(out)
}

fn function_list(s: &Setting) -> Result<Vec<FunctionSpec>, CliError> {
    let mut out = Vec::new();
    let mut col = 1;
    for piece in s.value.split(';') {
        let spec = piece.parse::<FunctionSpec>().map_err(|e| match e {
            Error::Parse { column, message } => s.error_at(col + column - 1, message),
            other => s.error_at(col, other),
        })?;
        out.push(spec);
        col += piece.chars().count() + 1;
    }
    Ok(out)
}

fn mode(settings: &Settings) -> Result<ConvergenceMode, CliError> {
    let mut mode = match settings.get("mode") {
        Some(s) => text_form::<ConvergenceMode>(s)?,
        None => ConvergenceMode::pointwise(),
    };
    if let Some(s) = settings.get("eps") {
        let eps: f64 = number(s, "a number")?;
        match mode {
            ConvergenceMode::InMeasure { .. } if eps > 0.0 && eps.is_finite() => mode = ConvergenceMode::InMeasure { eps },
            ConvergenceMode::InMeasure { .. } => return Err(s.error_at(1, "eps must be positive")),
            _ => return Err(s.error_at(1, "eps applies to --mode measure only")),
        }
    }
    if let Some(s) = settings.get("p") {
        let p: f64 = number(s, "a number")?;
        match mode {
            ConvergenceMode::Lp { .. } if p >= 1.0 && p.is_finite() => mode = ConvergenceMode::Lp { p },
            ConvergenceMode::Lp { .. } => return Err(s.error_at(1, "p must lie in [1, inf)")),
            _ => return Err(s.error_at(1, "p applies to --mode lp only")),
        }
    }
    Ok(mode)
}

impl Experiment {
    pub fn from_settings(command: Command, s: &Settings) -> Result<Experiment, CliError> {
        let allow_large = s.get("allow-large-2d").map(boolean).transpose()?.unwrap_or(false);
        let op = s
            .get("op")
            .map(text_form::<OperatorSpec>)
            .transpose()?
            .map(|op| match op {
                OperatorSpec::Bkc2 { n, cap, .. } if allow_large => OperatorSpec::Bkc2 { n, cap, allow_large: true },
                other => other,
            });
        let exp = Experiment {
            command,
            op,
            functions: s.get("fn").map(function_list).transpose()?.unwrap_or_default(),
            cap: s.get("cap").map(text_form::<Capacity>).transpose()?.unwrap_or_else(Capacity::sqrt),
            domain: s.get("domain").map(domain_arg).transpose()?,
            cells: s
                .get("cells")
                .map(|c| {
                    let m: usize = number(c, "a positive integer")?;
                    if m == 0 {
                        return Err(c.error_at(1, "cells must be positive"));
                    }
                    Ok(m)
                })
                .transpose()?,
            ns: s.get("ns").map(ns_list).transpose()?.unwrap_or_else(|| vec![10, 50, 200]),
            mode: mode(s)?,
            seed: s.get("seed").map(|v| number(v, "an unsigned integer")).transpose()?.unwrap_or(0),
            trials: s.get("trials").map(|v| number(v, "an unsigned integer")).transpose()?.unwrap_or(200),
            out: s.get("out").map(|v| PathBuf::from(&v.value)),
            strict: s.get("strict").map(boolean).transpose()?.unwrap_or(false),
        };
        let needs_op = matches!(command, Command::Apply | Command::Properties | Command::Korovkin);
        if needs_op && exp.op.is_none() {
            return Err(CliError::Parse("missing --op".into()));
        }
        let needs_fn = matches!(command, Command::Integrate | Command::Apply);
        if needs_fn && exp.functions.len() != 1 {
            return Err(CliError::Parse("--fn must name exactly one function".into()));
        }
        Ok(exp)
    }

    fn op(&self) -> &OperatorSpec {
        self.op.as_ref().expect("checked in from_settings")
    }

    fn resolve_domain(&self) -> Result<Domain, CliError> {
        let with_cells = |d: Domain, m: Option<usize>| -> Result<Domain, CliError> {
            Ok(match (d, m) {
                (d, None) => d,
                (Domain::Line(g), Some(m)) => Domain::Line(Grid::new(g.a(), g.b(), m)?),
                (Domain::Plane(g1, g2), Some(m)) => {
                    Domain::Plane(Grid::new(g1.a(), g1.b(), m)?, Grid::new(g2.a(), g2.b(), m)?)
                }
            })
        };
        match (&self.domain, &self.op) {
            (Some(DomainArg::Interval(a, b)), _) => Ok(Domain::Line(Grid::new(*a, *b, self.cells.unwrap_or(1000))?)),
            (Some(DomainArg::Kind(kind)), Some(op)) => Ok(harness_domain(op, *kind, self.default_cells(*kind))?),
            (Some(DomainArg::Kind(kind)), None) => Ok(kind.domain(self.default_cells(*kind))?),
            (None, Some(op)) => with_cells(op.default_domain(), self.cells),
            (None, None) => Ok(Domain::Line(Grid::unit(self.cells.unwrap_or(1000))?)),
        }
    }

    fn default_cells(&self, kind: DomainKind) -> usize {
        let two_d = matches!(kind, DomainKind::Cube(2) | DomainKind::PositiveCone(2));
        self.cells.unwrap_or(if two_d { 64 } else { 1000 })
    }

    /// Run and return the table plus the exit code it earns (0, or 3 for a
    /// strict korovkin run without a confirmed verdict).
    pub fn run(&self) -> Result<(Table, i32), CliError> {
        match self.command {
            Command::Integrate => self.integrate().map(|t| (t, 0)),
            Command::Apply => self.apply().map(|t| (t, 0)),
            Command::Properties => self.properties().map(|t| (t, 0)),
            Command::Korovkin => self.korovkin(),
        }
    }

    fn integrate(&self) -> Result<Table, CliError> {
        let domain = self.resolve_domain()?;
        let f = sample(&self.functions[0], &domain)?;
        let value = match domain {
            Domain::Line(g) => choquet_integral(&CellBlock::new(f.values().to_vec(), g.h())?, &self.cap)?,
            Domain::Plane(g1, g2) => {
                let rows: Vec<Vec<f64>> = f.values().chunks(g2.cells()).map(<[f64]>::to_vec).collect();
                choquet_integral_2d(&rows, (g1.h(), g2.h()), &self.cap)?
            }
        };
        let mut t = Table::new(&["x", "value"]);
        t.push(vec!["integral".into(), num(value)]);
        Ok(t)
    }

    fn apply(&self) -> Result<Table, CliError> {
        let domain = self.resolve_domain()?;
        let out = self.op().apply_spec(&self.functions[0], &domain)?;
        let mut t = Table::new(&["x", "value"]);
        for (i, v) in out.values().iter().enumerate() {
            let x = domain.point(i).into_iter().map(num).collect::<Vec<_>>().join(";");
            t.push(vec![x, num(*v)]);
        }
        Ok(t)
    }

    fn properties(&self) -> Result<Table, CliError> {
        let op = self.op();
        let domain = self.resolve_domain()?;
        let positive = matches!(self.domain, Some(DomainArg::Kind(DomainKind::PositiveCone(_))));
        let cfg = CheckConfig::new(self.trials, self.seed).positive_cone(positive);
        let norm = operator_norm(op, &domain, op.is_weakly_nonlinear_monotone(), &cfg)?;
        let reports: Vec<PropertyReport> = vec![
            check_sublinearity(op, &domain, &cfg)?,
            check_translatability(op, &domain, &cfg)?,
            check_monotonicity(op, &domain, &cfg)?,
            check_comonotone_additivity(op, &domain, &cfg)?,
            check_order_lipschitz(op, &domain, &cfg)?,
            norm.krein,
            norm.factor_two,
        ];
        let mut t = Table::new(&["property", "operator", "trials", "worst_margin", "pass", "witness_summary"]);
        for r in reports {
            t.push(vec![
                r.property.to_string(),
                op.to_string(),
                r.trials.to_string(),
                num(r.worst_margin),
                r.pass.to_string(),
                r.witness.map(|w| w.summary()).unwrap_or_default(),
            ]);
        }
        Ok(t)
    }

    fn korovkin(&self) -> Result<(Table, i32), CliError> {
        let op = self.op();
        let kind = match &self.domain {
            None => DomainKind::Cube(1),
            Some(DomainArg::Kind(k)) => *k,
            Some(DomainArg::Interval(..)) => {
                return Err(CliError::Parse("korovkin needs a domain kind (cube1, cube2, cone1, cone2, circle)".into()))
            }
        };
        let suite = if self.functions.is_empty() {
            vec![FunctionSpec::step(vec![0.5], vec![0.0, 1.0]), FunctionSpec::Monomial(3)]
        } else {
            self.functions.clone()
        };
        let cfg = HarnessConfig {
            ns: self.ns.clone(),
            mode: self.mode,
            cells: self.default_cells(kind),
        };
        let report = korovkin_harness(op, kind, &suite, &cfg)?;
        let mut t = Table::new(&["family", "function", "mode", "n", "error"]);
        for scan in report.stage1.iter().chain(&report.stage2) {
            for row in &scan.rows {
                t.push(vec![
                    scan.family.clone(),
                    scan.function.clone(),
                    scan.mode.to_string(),
                    row.n.to_string(),
                    num(row.error),
                ]);
            }
        }
        let verdict = match &report.witness {
            Some(w) => format!("verdict:{} {w}", report.verdict),
            None => format!("verdict:{}", report.verdict),
        };
        t.push(vec![report.family.clone(), verdict, self.mode.to_string(), String::new(), String::new()]);
        let code = if self.strict && report.verdict != Verdict::Confirmed { 3 } else { 0 };
        Ok((t, code))
    }
}
