//! Grid-sampled functions on intervals and rectangles.
//!
//! A [`GridFunction`] is the piecewise-constant interpolant of a real function
//! on a uniform cell partition: one value per cell, taken at the cell
//! midpoint, plus a mask of the cells on which the sampled function is known
//! to be continuous. Cell boundaries are computed as `a + (b - a) * (i / m)`
//! so that boundaries of two partitions that coincide as rationals also
//! coincide bit for bit.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::text;

/// Uniform partition of `[a, b]` into `m` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    m: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidSpec(format!("grid needs a < b, got [{a}, {b}]")));
        }
        if m == 0 {
            return Err(Error::InvalidSpec("grid needs at least one cell".into()));
        }
        Ok(Grid { a, b, m })
    }

    /// `[0, 1]` with `m` cells.
    pub fn unit(m: usize) -> Result<Self> {
        Grid::new(0.0, 1.0, m)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn cells(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.m as f64
    }

    /// Left boundary of cell `i` (`i == m` gives `b`).
    pub fn boundary(&self, i: usize) -> f64 {
        if i == self.m {
            return self.b;
        }
        self.a + (self.b - self.a) * (i as f64 / self.m as f64)
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.boundary(i), self.boundary(i + 1))
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        self.a + (self.b - self.a) * ((2 * i + 1) as f64 / (2 * self.m) as f64)
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.midpoint(i)).collect()
    }

    /// Index of the cell containing `x`; the right endpoint belongs to the
    /// last cell. `None` outside `[a, b]`.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(self.a..=self.b).contains(&x) {
            return None;
        }
        let guess = (((x - self.a) / self.len()) * self.m as f64).floor() as usize;
        let mut i = guess.min(self.m - 1);
        // floor() can land one cell off near boundaries
        while i > 0 && x < self.boundary(i) {
            i -= 1;
        }
        while i + 1 < self.m && x >= self.boundary(i + 1) {
            i += 1;
        }
        Some(i)
    }

    /// Cells meeting `[lo, hi]` with positive overlap, as `(index, overlap)`.
    /// Overlaps shorter than `1e-10 h` are rounding slivers and are dropped.
    pub fn overlaps(&self, lo: f64, hi: f64) -> Vec<(usize, f64)> {
        let lo = lo.max(self.a);
        let hi = hi.min(self.b);
        if hi <= lo {
            return Vec::new();
        }
        let sliver = 1e-10 * self.h();
        let first = self.locate(lo).unwrap_or(0);
        let mut out = Vec::new();
        let mut i = first;
        while i < self.m {
            let (cl, ch) = self.cell(i);
            if cl >= hi {
                break;
            }
            let w = ch.min(hi) - cl.max(lo);
            if w > sliver {
                out.push((i, w));
            }
            i += 1;
        }
        out
    }

    /// The same interval split into `factor` times as many cells.
    pub fn refine(&self, factor: usize) -> Result<Grid> {
        Grid::new(self.a, self.b, self.m * factor.max(1))
    }
}

/// The sampling domain of a grid function: an interval or a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Line(Grid),
    /// Product grid; values are stored row-major with the first axis outer.
    Plane(Grid, Grid),
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Line(_) => 1,
            Domain::Plane(..) => 2,
        }
    }

    /// Number of cells.
    pub fn size(&self) -> usize {
        match self {
            Domain::Line(g) => g.cells(),
            Domain::Plane(g1, g2) => g1.cells() * g2.cells(),
        }
    }

    /// Lebesgue measure of one cell.
    pub fn cell_measure(&self) -> f64 {
        match self {
            Domain::Line(g) => g.h(),
            Domain::Plane(g1, g2) => g1.h() * g2.h(),
        }
    }

    pub fn total_measure(&self) -> f64 {
        match self {
            Domain::Line(g) => g.len(),
            Domain::Plane(g1, g2) => g1.len() * g2.len(),
        }
    }

    /// First-axis grid.
    pub fn axis1(&self) -> &Grid {
        match self {
            Domain::Line(g) | Domain::Plane(g, _) => g,
        }
    }

    /// Midpoint coordinates of flat cell index `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        match self {
            Domain::Line(g) => vec![g.midpoint(idx)],
            Domain::Plane(g1, g2) => {
                let m2 = g2.cells();
                vec![g1.midpoint(idx / m2), g2.midpoint(idx % m2)]
            }
        }
    }
}

/// Piecewise-constant samples plus a continuity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    domain: Domain,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl GridFunction {
    pub fn new(domain: Domain, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != domain.size() {
            return Err(Error::Shape(format!(
                "{} values for a domain of {} cells",
                values.len(),
                domain.size()
            )));
        }
        if mask.len() != values.len() {
            return Err(Error::Shape("mask length differs from value count".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value in cell {i}")));
        }
        Ok(GridFunction {
            domain,
            values,
            mask,
        })
    }

    /// Samples with an all-true mask.
    pub fn from_values(domain: Domain, values: Vec<f64>) -> Result<Self> {
        let mask = vec![true; values.len()];
        GridFunction::new(domain, values, mask)
    }

    pub fn constant(domain: Domain, c: f64) -> Self {
        let n = domain.size();
        GridFunction {
            domain,
            values: vec![c; n],
            mask: vec![true; n],
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// The underlying grid of a one-dimensional function.
    pub fn grid(&self) -> Result<&Grid> {
        match &self.domain {
            Domain::Line(g) => Ok(g),
            Domain::Plane(..) => Err(Error::UnsupportedDimension(2)),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Replace the mask, keeping the values.
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.values.len() {
            return Err(Error::Shape("mask length differs from value count".into()));
        }
        self.mask = mask;
        Ok(self)
    }

    /// Value of the piecewise-constant interpolant at `x` (1D only).
    pub fn value_at(&self, x: f64) -> Result<f64> {
        let g = self.grid()?;
        g.locate(x)
            .map(|i| self.values[i])
            .ok_or_else(|| Error::Domain(format!("{x} lies outside [{}, {}]", g.a(), g.b())))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            domain: self.domain,
            values: self.values.iter().map(|&v| f(v)).collect(),
            mask: self.mask.clone(),
        }
    }

    /// Cellwise binary operation; masks are combined with logical and.
    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        if self.domain != other.domain {
            return Err(Error::IncompatibleGrid(format!(
                "{:?} vs {:?}",
                self.domain, other.domain
            )));
        }
        Ok(GridFunction {
            domain: self.domain,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            mask: self.mask.iter().zip(&other.mask).map(|(&a, &b)| a && b).collect(),
        })
    }

    pub fn min(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, f64::min)
    }

    pub fn max(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, f64::max)
    }

    pub fn plus(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn minus(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn abs(&self) -> GridFunction {
        self.map(f64::abs)
    }

    pub fn neg(&self) -> GridFunction {
        self.map(|v| -v)
    }

    pub fn scale(&self, alpha: f64) -> GridFunction {
        self.map(|v| alpha * v)
    }

    /// `f + alpha * 1`.
    pub fn translate(&self, alpha: f64) -> GridFunction {
        self.map(|v| v + alpha)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Lattice and affine operations offered by [`lattice`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatticeOp {
    Min,
    Max,
    Abs,
    Plus,
    Scale(f64),
    Translate(f64),
}

/// Cellwise lattice operation. Unary operations ignore `g`; binary ones
/// require it and a matching grid.
pub fn lattice(f: &GridFunction, g: Option<&GridFunction>, op: LatticeOp) -> Result<GridFunction> {
    let need = || g.ok_or_else(|| Error::IncompatibleGrid("binary lattice op needs a second function".into()));
    match op {
        LatticeOp::Min => f.min(need()?),
        LatticeOp::Max => f.max(need()?),
        LatticeOp::Plus => f.plus(need()?),
        LatticeOp::Abs => Ok(f.abs()),
        LatticeOp::Scale(a) => Ok(f.scale(a)),
        LatticeOp::Translate(a) => Ok(f.translate(a)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormMode {
    Sup,
    Lp(f64),
}

/// Sup norm, or the `L^p` norm of the piecewise-constant interpolant against
/// Lebesgue measure.
pub fn norm(f: &GridFunction, mode: NormMode) -> Result<f64> {
    match mode {
        NormMode::Sup => Ok(f.sup_norm()),
        NormMode::Lp(p) => {
            if !(p.is_finite() && p >= 1.0) {
                return Err(Error::Domain(format!("p must lie in [1, inf), got {p}")));
            }
            let w = f.domain.cell_measure();
            let s: f64 = f.values.iter().map(|v| v.abs().powf(p) * w).sum();
            Ok(s.powf(1.0 / p))
        }
    }
}

/// Analytic functions that can be sampled onto a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionSpec {
    Constant(f64),
    /// `pr_k`, 1-based coordinate index.
    Projection(usize),
    NegProjection(usize),
    /// `sum_k pr_k^2` over the coordinates of the domain.
    SumOfSquares,
    /// `x^d` in the first coordinate.
    Monomial(u32),
    /// Right-continuous step in the first coordinate: `levels[j]` holds on
    /// `[jumps[j-1], jumps[j])`.
    Step { jumps: Vec<f64>, levels: Vec<f64> },
    Cosine,
    Sine,
    NegCosine,
    NegSine,
    /// Explicit cell values; must match the cell count of the domain.
    Table(Vec<f64>),
    /// `inner + offset`.
    Shift { offset: f64, inner: Box<FunctionSpec> },
}

impl FunctionSpec {
    pub fn step(jumps: Vec<f64>, levels: Vec<f64>) -> Self {
        FunctionSpec::Step { jumps, levels }
    }

    pub fn shifted(self, offset: f64) -> Self {
        FunctionSpec::Shift {
            offset,
            inner: Box::new(self),
        }
    }

    /// Point evaluation. Tables have no pointwise meaning and return `None`.
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        let x1 = x[0];
        Some(match self {
            FunctionSpec::Constant(c) => *c,
            FunctionSpec::Projection(k) => *x.get(k - 1)?,
            FunctionSpec::NegProjection(k) => -*x.get(k - 1)?,
            FunctionSpec::SumOfSquares => x.iter().map(|v| v * v).sum(),
            FunctionSpec::Monomial(d) => x1.powi(*d as i32),
            FunctionSpec::Step { jumps, levels } => {
                let j = jumps.partition_point(|&t| t <= x1);
                levels[j]
            }
            FunctionSpec::Cosine => x1.cos(),
            FunctionSpec::Sine => x1.sin(),
            FunctionSpec::NegCosine => -x1.cos(),
            FunctionSpec::NegSine => -x1.sin(),
            FunctionSpec::Table(_) => return None,
            FunctionSpec::Shift { offset, inner } => inner.eval(x)? + offset,
        })
    }

    /// Jump locations along the first coordinate.
    pub fn discontinuities(&self) -> Vec<f64> {
        match self {
            FunctionSpec::Step { jumps, .. } => jumps.clone(),
            FunctionSpec::Shift { inner, .. } => inner.discontinuities(),
            _ => Vec::new(),
        }
    }

    pub fn validate(&self, domain: &Domain) -> Result<()> {
        match self {
            FunctionSpec::Projection(k) | FunctionSpec::NegProjection(k) => {
                if *k == 0 || *k > domain.dim() {
                    return Err(Error::InvalidSpec(format!(
                        "projection pr_{k} on a {}-dimensional domain",
                        domain.dim()
                    )));
                }
            }
            FunctionSpec::Step { jumps, levels } => {
                if levels.len() != jumps.len() + 1 {
                    return Err(Error::InvalidSpec(format!(
                        "step with {} jumps needs {} levels, got {}",
                        jumps.len(),
                        jumps.len() + 1,
                        levels.len()
                    )));
                }
                if jumps.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidSpec("step jumps must be strictly increasing".into()));
                }
                let g = domain.axis1();
                if let Some(j) = jumps.iter().find(|&&j| j <= g.a() || j >= g.b()) {
                    return Err(Error::InvalidSpec(format!(
                        "step jump {j} is not interior to [{}, {}]",
                        g.a(),
                        g.b()
                    )));
                }
            }
            FunctionSpec::Table(vals) => {
                if vals.len() != domain.size() {
                    return Err(Error::InvalidSpec(format!(
                        "table has {} values but the domain has {} cells",
                        vals.len(),
                        domain.size()
                    )));
                }
            }
            FunctionSpec::Shift { inner, .. } => inner.validate(domain)?,
            _ => {}
        }
        Ok(())
    }
}

/// Sample `spec` at the cell midpoints of `domain`.
///
/// The mask is false exactly on the cells whose closed first-axis interval
/// contains a declared jump, so a jump sitting on a cell boundary marks both
/// neighbours.
pub fn sample(spec: &FunctionSpec, domain: &Domain) -> Result<GridFunction> {
    spec.validate(domain)?;
    let values: Vec<f64> = match spec {
        FunctionSpec::Table(v) => v.clone(),
        _ => (0..domain.size())
            .map(|i| spec.eval(&domain.point(i)).expect("validated spec"))
            .collect(),
    };

    let g1 = *domain.axis1();
    let jumps = spec.discontinuities();
    let tol = 1e-12 * g1.len();
    let bad_axis1: Vec<bool> = (0..g1.cells())
        .map(|i| {
            let (lo, hi) = g1.cell(i);
            jumps.iter().any(|&j| lo - tol <= j && j <= hi + tol)
        })
        .collect();
    let mask = match domain {
        Domain::Line(_) => bad_axis1.iter().map(|b| !b).collect(),
        Domain::Plane(_, g2) => (0..domain.size())
            .map(|idx| !bad_axis1[idx / g2.cells()])
            .collect(),
    };
    GridFunction::new(*domain, values, mask)
}

/// Shorthand for sampling on an interval grid.
pub fn sample_line(spec: &FunctionSpec, grid: &Grid) -> Result<GridFunction> {
    sample(spec, &Domain::Line(*grid))
}

/// Domains for which Korovkin test sets are defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    Cube(usize),
    PositiveCone(usize),
    Circle,
}

impl DomainKind {
    /// Sampling domain with `m` cells per axis: `[0,1]^N` for cubes and the
    /// positive-cone variant, `[0, 2 pi]` in angle for the circle.
    pub fn domain(&self, m: usize) -> Result<Domain> {
        match *self {
            DomainKind::Cube(1) | DomainKind::PositiveCone(1) => Ok(Domain::Line(Grid::unit(m)?)),
            DomainKind::Cube(2) | DomainKind::PositiveCone(2) => {
                Ok(Domain::Plane(Grid::unit(m)?, Grid::unit(m)?))
            }
            DomainKind::Cube(n) | DomainKind::PositiveCone(n) => Err(Error::UnsupportedDimension(n)),
            DomainKind::Circle => Ok(Domain::Line(Grid::new(0.0, std::f64::consts::TAU, m)?)),
        }
    }
}

impl FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cube1" => Ok(DomainKind::Cube(1)),
            "cube2" => Ok(DomainKind::Cube(2)),
            "cone1" | "positive_cone1" => Ok(DomainKind::PositiveCone(1)),
            "cone2" | "positive_cone2" => Ok(DomainKind::PositiveCone(2)),
            "circle" => Ok(DomainKind::Circle),
            other => Err(Error::parse(1, format!("unknown domain kind `{other}`"))),
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainKind::Cube(n) => write!(f, "cube{n}"),
            DomainKind::PositiveCone(n) => write!(f, "cone{n}"),
            DomainKind::Circle => write!(f, "circle"),
        }
    }
}

/// Korovkin test functions for `kind`.
///
/// Cubes get `1, ±pr_1..±pr_N, sum pr_k^2`; the positive-cone variant drops
/// the `+pr_k`; the circle gets `1, ±cos, ±sin`.
pub fn test_set(kind: DomainKind) -> Result<Vec<FunctionSpec>> {
    use FunctionSpec::*;
    match kind {
        DomainKind::Cube(n @ (1 | 2)) => {
            let mut v = vec![Constant(1.0)];
            for k in 1..=n {
                v.push(Projection(k));
                v.push(NegProjection(k));
            }
            v.push(SumOfSquares);
            Ok(v)
        }
        DomainKind::PositiveCone(n @ (1 | 2)) => {
            let mut v = vec![Constant(1.0)];
            v.extend((1..=n).map(NegProjection));
            v.push(SumOfSquares);
            Ok(v)
        }
        DomainKind::Cube(n) | DomainKind::PositiveCone(n) => Err(Error::UnsupportedDimension(n)),
        DomainKind::Circle => Ok(vec![Constant(1.0), Cosine, NegCosine, Sine, NegSine]),
    }
}

impl fmt::Display for FunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionSpec::Constant(c) => write!(f, "const:{c}"),
            FunctionSpec::Projection(k) => write!(f, "pr:{k}"),
            FunctionSpec::NegProjection(k) => write!(f, "negpr:{k}"),
            FunctionSpec::SumOfSquares => write!(f, "sq"),
            FunctionSpec::Monomial(d) => write!(f, "mono:{d}"),
            FunctionSpec::Step { jumps, levels } => {
                write!(f, "step:{}@{}", text::join_f64(jumps, ","), text::join_f64(levels, ","))
            }
            FunctionSpec::Cosine => write!(f, "cos"),
            FunctionSpec::Sine => write!(f, "sin"),
            FunctionSpec::NegCosine => write!(f, "negcos"),
            FunctionSpec::NegSine => write!(f, "negsin"),
            FunctionSpec::Table(v) => write!(f, "table:{}", text::join_f64(v, ",")),
            FunctionSpec::Shift { offset, inner } => write!(f, "shift:{offset}:{inner}"),
        }
    }
}

impl FromStr for FunctionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_function(s, 1)
    }
}

fn parse_function(s: &str, column: usize) -> Result<FunctionSpec> {
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (s, None),
    };
    let acol = column + kind.chars().count() + 1;
    let need = |what: &str| {
        arg.ok_or_else(|| Error::parse(column, format!("`{kind}` needs {what} after `:`")))
    };
    let no_arg = |v: FunctionSpec| match arg {
        Some(_) => Err(Error::parse(acol, format!("`{kind}` takes no argument"))),
        None => Ok(v),
    };
    match kind.trim() {
        "const" => Ok(FunctionSpec::Constant(text::parse_f64(need("a value")?, acol)?)),
        "pr" => Ok(FunctionSpec::Projection(text::parse_usize(need("an index")?, acol)?)),
        "negpr" => Ok(FunctionSpec::NegProjection(text::parse_usize(need("an index")?, acol)?)),
        "sq" => no_arg(FunctionSpec::SumOfSquares),
        "mono" => {
            let d = text::parse_usize(need("a degree")?, acol)?;
            let d = u32::try_from(d).map_err(|_| Error::parse(acol, "degree too large"))?;
            Ok(FunctionSpec::Monomial(d))
        }
        "step" => {
            let a = need("jumps@levels")?;
            let (j, l) = a
                .split_once('@')
                .ok_or_else(|| Error::parse(acol, "step needs `jumps@levels`"))?;
            let jumps = text::parse_f64_list(j, acol)?;
            let levels = text::parse_f64_list(l, acol + j.chars().count() + 1)?;
            if levels.len() != jumps.len() + 1 {
                return Err(Error::parse(
                    acol,
                    format!("{} jumps need {} levels", jumps.len(), jumps.len() + 1),
                ));
            }
            Ok(FunctionSpec::Step { jumps, levels })
        }
        "cos" => no_arg(FunctionSpec::Cosine),
        "sin" => no_arg(FunctionSpec::Sine),
        "negcos" => no_arg(FunctionSpec::NegCosine),
        "negsin" => no_arg(FunctionSpec::NegSine),
        "table" => Ok(FunctionSpec::Table(text::parse_f64_list(need("values")?, acol)?)),
        "shift" => {
            let a = need("offset:function")?;
            let (o, inner) = a
                .split_once(':')
                .ok_or_else(|| Error::parse(acol, "shift needs `offset:function`"))?;
            let offset = text::parse_f64(o, acol)?;
            let inner = parse_function(inner, acol + o.chars().count() + 1)?;
            Ok(inner.shifted(offset))
        }
        other => Err(Error::parse(column, format!("unknown function kind `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(m: usize) -> Domain {
        Domain::Line(Grid::unit(m).unwrap())
    }

    #[test]
    fn constant_sample() {
        let f = sample(&FunctionSpec::Constant(1.0), &line(4)).unwrap();
        assert_eq!(f.values(), &[1.0; 4]);
        assert!(f.mask().iter().all(|&b| b));
    }

    #[test]
    fn step_on_cell_boundary_masks_both_neighbours() {
        let spec = FunctionSpec::step(vec![0.5], vec![0.0, 1.0]);
        let f = sample(&spec, &line(4)).unwrap();
        assert_eq!(f.values(), &[0.0, 0.0, 1.0, 1.0]);
        // enumerate cells: closed intervals containing 0.5 are [0.25,0.5] and [0.5,0.75]
        let expected: Vec<bool> = (0..4)
            .map(|i| {
                let (lo, hi) = Grid::unit(4).unwrap().cell(i);
                !(lo <= 0.5 && 0.5 <= hi)
            })
            .collect();
        assert_eq!(f.mask(), expected.as_slice());
        assert_eq!(f.mask(), &[true, false, false, true]);
    }

    #[test]
    fn step_inside_cell_masks_one_cell() {
        let spec = FunctionSpec::step(vec![0.3], vec![0.0, 1.0]);
        let f = sample(&spec, &line(4)).unwrap();
        assert_eq!(f.mask(), &[true, false, true, true]);
    }

    #[test]
    fn projection_midpoints() {
        let f = sample(&FunctionSpec::Projection(1), &line(2)).unwrap();
        assert_eq!(f.values(), &[0.25, 0.75]);
    }

    #[test]
    fn table_length_mismatch_is_invalid() {
        let e = sample(&FunctionSpec::Table(vec![1.0, 2.0]), &line(3)).unwrap_err();
        assert!(matches!(e, Error::InvalidSpec(_)));
    }

    #[test]
    fn bad_steps_rejected() {
        let d = line(4);
        assert!(sample(&FunctionSpec::step(vec![0.6, 0.2], vec![0.0, 1.0, 2.0]), &d).is_err());
        assert!(sample(&FunctionSpec::step(vec![1.5], vec![0.0, 1.0]), &d).is_err());
        assert!(sample(&FunctionSpec::Projection(2), &d).is_err());
    }

    #[test]
    fn plane_sampling_is_row_major() {
        let d = Domain::Plane(Grid::unit(2).unwrap(), Grid::unit(2).unwrap());
        let f = sample(&FunctionSpec::Projection(2), &d).unwrap();
        assert_eq!(f.values(), &[0.25, 0.75, 0.25, 0.75]);
        let s = sample(&FunctionSpec::SumOfSquares, &d).unwrap();
        assert_eq!(s.values()[3], 0.75 * 0.75 * 2.0);
    }

    #[test]
    fn test_sets() {
        use FunctionSpec::*;
        assert_eq!(
            test_set(DomainKind::Cube(1)).unwrap(),
            vec![Constant(1.0), Projection(1), NegProjection(1), SumOfSquares]
        );
        assert_eq!(
            test_set(DomainKind::PositiveCone(1)).unwrap(),
            vec![Constant(1.0), NegProjection(1), SumOfSquares]
        );
        assert_eq!(test_set(DomainKind::Cube(2)).unwrap().len(), 6);
        assert_eq!(test_set(DomainKind::PositiveCone(2)).unwrap().len(), 4);
        assert_eq!(test_set(DomainKind::Circle).unwrap().len(), 5);
        assert_eq!(test_set(DomainKind::Cube(3)).unwrap_err(), Error::UnsupportedDimension(3));
    }

    #[test]
    fn norms() {
        let one = GridFunction::constant(line(17), 1.0);
        assert_eq!(norm(&one, NormMode::Sup).unwrap(), 1.0);
        assert!((norm(&one, NormMode::Lp(2.0)).unwrap() - 1.0).abs() < 1e-12);
        let x = sample_line(&FunctionSpec::Projection(1), &Grid::unit(1000).unwrap()).unwrap();
        assert!((norm(&x, NormMode::Lp(1.0)).unwrap() - 0.5).abs() < 1e-6);
        assert!(norm(&x, NormMode::Lp(0.5)).is_err());
    }

    #[test]
    fn lattice_examples() {
        let d = line(2);
        let f = GridFunction::from_values(d, vec![-1.0, 2.0]).unwrap();
        assert_eq!(lattice(&f, None, LatticeOp::Abs).unwrap().values(), &[1.0, 2.0]);
        let a = GridFunction::from_values(d, vec![1.0, 0.0]).unwrap();
        let b = GridFunction::from_values(d, vec![0.0, 1.0]).unwrap();
        assert_eq!(lattice(&a, Some(&b), LatticeOp::Max).unwrap().values(), &[1.0, 1.0]);
        let z = GridFunction::constant(d, 0.0);
        assert_eq!(lattice(&z, None, LatticeOp::Translate(3.0)).unwrap().values(), &[3.0, 3.0]);
        let other = GridFunction::constant(line(3), 0.0);
        assert!(matches!(a.plus(&other), Err(Error::IncompatibleGrid(_))));
        assert!(lattice(&a, None, LatticeOp::Min).is_err());
    }

    #[test]
    fn locate_and_overlaps() {
        let g = Grid::unit(4).unwrap();
        assert_eq!(g.locate(0.0), Some(0));
        assert_eq!(g.locate(0.25), Some(1));
        assert_eq!(g.locate(1.0), Some(3));
        assert_eq!(g.locate(1.5), None);
        let o = g.overlaps(0.1, 0.6);
        assert_eq!(o.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!((o.iter().map(|p| p.1).sum::<f64>() - 0.5).abs() < 1e-15);
        // window boundaries equal to cell boundaries produce no slivers
        let g = Grid::unit(33).unwrap();
        for k in 0..11 {
            let o = g.overlaps(k as f64 / 11.0, (k + 1) as f64 / 11.0);
            assert_eq!(o.len(), 3);
        }
    }

    #[test]
    fn text_forms() {
        for s in ["const:1", "pr:1", "negpr:2", "sq", "mono:3", "step:0.5@0,1", "cos", "sin", "negcos", "negsin", "table:1,2.5,-3", "shift:-0.5:pr:1"] {
            let spec: FunctionSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        match "step:0.5@0,x".parse::<FunctionSpec>() {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 12),
            other => panic!("{other:?}"),
        }
        assert!("blah".parse::<FunctionSpec>().is_err());
        assert!("sq:2".parse::<FunctionSpec>().is_err());
    }

    fn arb_values(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, len)
    }

    proptest! {
        #[test]
        fn lattice_identities(a in arb_values(12), b in arb_values(12)) {
            let d = line(12);
            let f = GridFunction::from_values(d, a).unwrap();
            let g = GridFunction::from_values(d, b).unwrap();
            let abs = f.abs();
            let m = f.max(&f.neg()).unwrap();
            prop_assert_eq!(abs.values(), m.values());
            let lhs = f.min(&g).unwrap().plus(&f.max(&g).unwrap()).unwrap();
            let rhs = f.plus(&g).unwrap();
            prop_assert_eq!(lhs.values(), rhs.values());
        }

        #[test]
        fn lp_of_constant_is_abs(c in -50.0f64..50.0, p in 1.0f64..8.0, m in 1usize..400) {
            let f = GridFunction::constant(line(m), c);
            let n = norm(&f, NormMode::Lp(p)).unwrap();
            prop_assert!((n - c.abs()).abs() <= 1e-12 * c.abs().max(1.0));
        }

        #[test]
        fn step_masks_only_jump_cells(j in 0.01f64..0.99, m in 1usize..64) {
            let spec = FunctionSpec::step(vec![j], vec![0.0, 1.0]);
            let g = Grid::unit(m).unwrap();
            let f = sample_line(&spec, &g).unwrap();
            prop_assert!(f.sup_norm().is_finite());
            for i in 0..m {
                let (lo, hi) = g.cell(i);
                if !f.mask()[i] {
                    prop_assert!(lo - 1e-12 <= j && j <= hi + 1e-12);
                }
            }
            prop_assert!(f.mask().iter().filter(|b| !**b).count() <= 2);
            prop_assert!(f.mask().iter().any(|b| !*b));
        }

        #[test]
        fn function_text_round_trip(vals in prop::collection::vec(-1e6f64..1e6, 1..6), off in -10.0f64..10.0) {
            let spec = FunctionSpec::Table(vals).shifted(off);
            let back: FunctionSpec = spec.to_string().parse().unwrap();
            prop_assert_eq!(back, spec);
        }
    }
}
