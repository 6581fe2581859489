//! Operator families acting on grid functions.
//!
//! Kantorovich-type families (`bk1`, `bkc1`, `bkc2`, `szasz`) first reduce the
//! input to one number per window (a Lebesgue or Choquet average) and then
//! blend those numbers with Bernstein or Poisson weights at each evaluation
//! point. Windows need not line up with cells: a partially covered cell
//! contributes its overlap width, which is exactly what refining both
//! partitions to a common refinement would give for the piecewise-constant
//! interpolant. [`Alignment::Strict`] turns misalignment into an error instead.

use std::fmt;
use std::str::FromStr;

use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::capacity::Capacity;
use crate::choquet::{iterated_window, weighted_choquet, Scratch};
use crate::error::{Error, Result};
use crate::gridfn::{sample, Domain, FunctionSpec, Grid, GridFunction};
use crate::text;

/// Largest `n` accepted by `bkc2` unless the large-cost override is set.
pub const BKC2_MAX_N: usize = 128;

/// Cap on the cell count produced by [`OperatorSpec::input_domain`].
pub const MAX_REFINED_CELLS: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alignment {
    /// Partially covered cells contribute their overlap.
    #[default]
    Exact,
    /// Every window must be a union of whole cells.
    Strict,
}

/// One operator family instance.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    /// Classical Bernstein-Kantorovich on `[0, 1]`.
    Bk1 { n: usize },
    /// Bernstein-Kantorovich-Choquet on `[0, 1]`.
    Bkc1 { n: usize, cap: Capacity },
    /// Tensor Bernstein-Kantorovich-Choquet on `[0, 1]^2`.
    Bkc2 { n: usize, cap: Capacity, allow_large: bool },
    /// Szász-Mirakjan-Kantorovich on `[0, x_max]`. The Lebesgue capacity
    /// selects the classical form with its `(n + 1)` prefactor; any other
    /// capacity selects the unital Choquet form.
    Szasz { n: usize, cap: Capacity, tail_tol: f64, x_max: f64 },
    /// Average over `[x - R, x - r]` with `f` extended by zero. With `shrink`
    /// the window at level `n` is `[r / n, R / n]`. `truncated` applies
    /// `max(., 0)` to the average.
    Slide { r: f64, big_r: f64, shrink: bool, n: usize, truncated: bool },
    /// `f + f^2 / n` cellwise.
    PerturbSq { n: usize },
    /// Largest centred window average over a finite radius list (dyadic
    /// multiples of the cell width by default). `abs` averages `|f|`.
    Maximal { radii: Option<Vec<f64>>, abs: bool },
    /// `(1/n) sum_{k=1..n} T_k` where `T_k` is `inner` at level `k`.
    Cesaro { inner: Box<OperatorSpec>, n: usize },
}

/// Anything that maps grid functions to grid functions.
pub trait Operator: Sync {
    fn apply(&self, f: &GridFunction) -> Result<GridFunction>;
    fn label(&self) -> String;
}

/// Wraps a closure as an [`Operator`].
pub struct FnOperator<F> {
    label: String,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&GridFunction) -> Result<GridFunction> + Sync,
{
    pub fn new(label: impl Into<String>, f: F) -> Self {
        FnOperator {
            label: label.into(),
            f,
        }
    }
}

impl<F> Operator for FnOperator<F>
where
    F: Fn(&GridFunction) -> Result<GridFunction> + Sync,
{
    fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        (self.f)(f)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

impl Operator for OperatorSpec {
    fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        OperatorSpec::apply(self, f)
    }

    fn label(&self) -> String {
        self.to_string()
    }
}

#[cfg(feature = "parallel")]
fn par_collect<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_collect<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Bernstein basis `p_{n,k}(x), k = 0..=n`, evaluated in log space.
#[derive(Debug, Clone)]
pub struct BernsteinBasis {
    n: usize,
    ln_binom: Vec<f64>,
}

impl BernsteinBasis {
    pub fn new(n: usize) -> Self {
        let ln_binom = (0..=n).map(|k| ln_binomial(n as u64, k as u64)).collect();
        BernsteinBasis { n, ln_binom }
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn eval_into(&self, x: f64, out: &mut Vec<f64>) -> Result<()> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("Bernstein basis needs x in [0, 1], got {x}")));
        }
        out.clear();
        out.resize(self.n + 1, 0.0);
        if x == 0.0 {
            out[0] = 1.0;
        } else if x == 1.0 {
            out[self.n] = 1.0;
        } else {
            let lx = x.ln();
            let l1x = (-x).ln_1p();
            for (k, o) in out.iter_mut().enumerate() {
                *o = (self.ln_binom[k] + k as f64 * lx + (self.n - k) as f64 * l1x).exp();
            }
        }
        Ok(())
    }

    /// `sum_k p_{n,k}(x) coeffs[k]`, summed in ascending `k`.
    pub fn blend(&self, x: f64, coeffs: &[f64], buf: &mut Vec<f64>) -> Result<f64> {
        self.eval_into(x, buf)?;
        Ok(buf.iter().zip(coeffs).map(|(p, c)| p * c).sum())
    }
}

pub fn bernstein_basis(n: usize, x: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidSpec("Bernstein degree must be at least 1".into()));
    }
    let mut out = Vec::new();
    BernsteinBasis::new(n).eval_into(x, &mut out)?;
    Ok(out)
}

/// Poisson weights `e^{-lambda} lambda^k / k!` for `k = 0, 1, ...`, stopping
/// once `k >= lambda` and the remaining mass is below `tail_tol`, or after
/// `k_max`. The flag reports whether the tail criterion was met.
pub fn poisson_weights(lambda: f64, tail_tol: f64, k_max: usize) -> (Vec<f64>, bool) {
    if lambda == 0.0 {
        return (vec![1.0], true);
    }
    let ll = lambda.ln();
    let mut w = Vec::new();
    let mut cum = 0.0;
    for k in 0..=k_max {
        let lw = -lambda + k as f64 * ll - ln_factorial(k as u64);
        let p = lw.exp();
        w.push(p);
        cum += p;
        if k as f64 >= lambda && 1.0 - cum < tail_tol {
            return (w, true);
        }
    }
    (w, false)
}

fn check_aligned(grid: &Grid, windows: usize, lo: f64, hi: f64) -> Result<()> {
    // windows partition [lo, hi] into `windows` equal parts
    let cells_per = grid.cells() as f64 * (hi - lo) / grid.len() / windows as f64;
    if (lo - grid.a()).abs() > 1e-12 || (cells_per - cells_per.round()).abs() > 1e-9 || cells_per.round() < 1.0 {
        return Err(Error::Alignment(format!(
            "{} cells do not split into {} whole-cell windows",
            grid.cells(),
            windows
        )));
    }
    Ok(())
}

/// Window averages of a 1D grid function over `[bounds[k], bounds[k+1]]`.
fn window_averages(
    f: &GridFunction,
    bounds: &[f64],
    cap: Option<&Capacity>,
    prefactor: Option<f64>,
) -> Result<Vec<f64>> {
    let g = f.grid()?;
    let mut scratch = Scratch::default();
    let mut vals = Vec::new();
    let mut widths = Vec::new();
    bounds
        .windows(2)
        .map(|w| {
            let cells = g.overlaps(w[0], w[1]);
            vals.clear();
            widths.clear();
            for &(i, width) in &cells {
                vals.push(f.values()[i]);
                widths.push(width);
            }
            let len: f64 = widths.iter().sum();
            if cells.is_empty() {
                return Ok(0.0);
            }
            match (cap, prefactor) {
                // Lebesgue integral times a fixed prefactor
                (None, Some(p)) => Ok(p * vals.iter().zip(&widths).map(|(v, w)| v * w).sum::<f64>()),
                (None, None) => Ok(vals.iter().zip(&widths).map(|(v, w)| v * w).sum::<f64>() / len),
                (Some(c), _) => {
                    let denom = c.of(len);
                    if denom <= 0.0 {
                        return Err(Error::DegenerateCapacity);
                    }
                    Ok(weighted_choquet(&vals, &widths, c, &mut scratch) / denom)
                }
            }
        })
        .collect()
}

fn unit_window_bounds(windows: usize) -> Vec<f64> {
    let w = Grid::unit(windows).expect("windows >= 1");
    (0..=windows).map(|k| w.boundary(k)).collect()
}

fn require_unit_interval(g: &Grid, what: &str) -> Result<()> {
    if g.a() != 0.0 || g.b() != 1.0 {
        return Err(Error::Domain(format!("{what} acts on [0, 1], got [{}, {}]", g.a(), g.b())));
    }
    Ok(())
}

/// Bernstein-Kantorovich(-Choquet) values at points `xs`. `cap = None` is the
/// classical `(n+1) int` form.
fn bernstein_kantorovich_at(
    f: &GridFunction,
    n: usize,
    cap: Option<&Capacity>,
    xs: &[f64],
    alignment: Alignment,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidSpec("n must be at least 1".into()));
    }
    let g = f.grid()?;
    require_unit_interval(g, "Bernstein-Kantorovich")?;
    if alignment == Alignment::Strict {
        check_aligned(g, n + 1, 0.0, 1.0)?;
    }
    let bounds = unit_window_bounds(n + 1);
    let prefactor = cap.is_none().then_some((n + 1) as f64);
    let coeffs = window_averages(f, &bounds, cap, prefactor)?;
    let basis = BernsteinBasis::new(n);
    let out: Vec<Result<f64>> = par_collect(xs.len(), |i| {
        let mut buf = Vec::with_capacity(n + 1);
        basis.blend(xs[i], &coeffs, &mut buf)
    });
    out.into_iter().collect()
}

fn output_grid(f: &GridFunction, out: &Domain) -> Result<Grid> {
    match out {
        Domain::Line(g) => Ok(*g),
        Domain::Plane(..) => Err(Error::UnsupportedDimension(2)),
    }
    .and_then(|g| {
        f.grid()?;
        Ok(g)
    })
}

/// Classical Bernstein-Kantorovich `K_n` at the cell midpoints of `f`.
pub fn apply_bk1(f: &GridFunction, n: usize, alignment: Alignment) -> Result<GridFunction> {
    let g = *f.grid()?;
    let v = bernstein_kantorovich_at(f, n, None, &g.midpoints(), alignment)?;
    GridFunction::from_values(Domain::Line(g), v)
}

/// Bernstein-Kantorovich-Choquet `K_{n,mu}` at the cell midpoints of `f`.
pub fn apply_bkc1(f: &GridFunction, n: usize, cap: &Capacity, alignment: Alignment) -> Result<GridFunction> {
    let g = *f.grid()?;
    let v = bernstein_kantorovich_at(f, n, Some(cap), &g.midpoints(), alignment)?;
    GridFunction::from_values(Domain::Line(g), v)
}

fn bkc2_to(f: &GridFunction, n: usize, cap: &Capacity, allow_large: bool, out: &Domain, alignment: Alignment) -> Result<GridFunction> {
    if n == 0 {
        return Err(Error::InvalidSpec("n must be at least 1".into()));
    }
    if n > BKC2_MAX_N && !allow_large {
        return Err(Error::CostGuard(format!(
            "bkc2 with n = {n} exceeds {BKC2_MAX_N}; set the large-2d override to run it"
        )));
    }
    let (g1, g2) = match f.domain() {
        Domain::Plane(g1, g2) => (*g1, *g2),
        Domain::Line(_) => return Err(Error::UnsupportedDimension(1)),
    };
    let (o1, o2) = match out {
        Domain::Plane(o1, o2) => (*o1, *o2),
        Domain::Line(_) => return Err(Error::UnsupportedDimension(1)),
    };
    require_unit_interval(&g1, "bkc2")?;
    require_unit_interval(&g2, "bkc2")?;
    if alignment == Alignment::Strict {
        check_aligned(&g1, n + 1, 0.0, 1.0)?;
        check_aligned(&g2, n + 1, 0.0, 1.0)?;
    }
    let bounds = unit_window_bounds(n + 1);
    let rows: Vec<Vec<(usize, f64)>> = bounds.windows(2).map(|w| g1.overlaps(w[0], w[1])).collect();
    let cols: Vec<Vec<(usize, f64)>> = bounds.windows(2).map(|w| g2.overlaps(w[0], w[1])).collect();
    let m2 = g2.cells();
    let vals = f.values();
    let q = n + 1;

    // window coefficients A[k1][k2], row-major
    let coeffs: Vec<Result<f64>> = par_collect(q * q, |idx| {
        let (k1, k2) = (idx / q, idx % q);
        let denom = cap.of(rows[k1].iter().map(|r| r.1).sum()) * cap.of(cols[k2].iter().map(|c| c.1).sum());
        if denom <= 0.0 {
            return Err(Error::DegenerateCapacity);
        }
        let mut s = Scratch::default();
        Ok(iterated_window(|i, j| vals[i * m2 + j], &rows[k1], &cols[k2], cap, &mut s) / denom)
    });
    let coeffs: Vec<f64> = coeffs.into_iter().collect::<Result<_>>()?;

    let basis = BernsteinBasis::new(n);
    let basis_rows = |g: &Grid| -> Result<Vec<Vec<f64>>> {
        g.midpoints()
            .into_iter()
            .map(|x| {
                let mut b = Vec::new();
                basis.eval_into(x, &mut b)?;
                Ok(b)
            })
            .collect()
    };
    let p1 = basis_rows(&o1)?;
    let p2 = basis_rows(&o2)?;
    // inner[k1][j] = sum_k2 A[k1][k2] p2[j][k2]
    let inner: Vec<Vec<f64>> = (0..q)
        .map(|k1| {
            p2.iter()
                .map(|pj| (0..q).map(|k2| coeffs[k1 * q + k2] * pj[k2]).sum())
                .collect()
        })
        .collect();
    let on2 = o2.cells();
    let values: Vec<f64> = par_collect(o1.cells() * on2, |idx| {
        let (i, j) = (idx / on2, idx % on2);
        (0..q).map(|k1| p1[i][k1] * inner[k1][j]).sum()
    });
    GridFunction::from_values(*out, values)
}

/// Tensor Bernstein-Kantorovich-Choquet operator on `[0, 1]^2`.
pub fn apply_bkc2(f: &GridFunction, n: usize, cap: &Capacity, allow_large: bool, alignment: Alignment) -> Result<GridFunction> {
    bkc2_to(f, n, cap, allow_large, f.domain(), alignment)
}

fn szasz_at(
    f: &GridFunction,
    n: usize,
    cap: &Capacity,
    tail_tol: f64,
    xs: &[f64],
    alignment: Alignment,
) -> Result<(Vec<f64>, Vec<bool>)> {
    if n == 0 {
        return Err(Error::InvalidSpec("n must be at least 1".into()));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::InvalidSpec(format!("tail tolerance must lie in (0, 1), got {tail_tol}")));
    }
    let g = f.grid()?;
    if g.a() != 0.0 {
        return Err(Error::Domain(format!("Szász operators act on [0, x_max], got [{}, {}]", g.a(), g.b())));
    }
    let x_max = g.b();
    let windows = (x_max * n as f64 - 1e-9).ceil() as usize;
    if alignment == Alignment::Strict {
        let exact = (x_max * n as f64 - windows as f64).abs() < 1e-9;
        if !exact {
            return Err(Error::Alignment(format!("x_max = {x_max} is not a multiple of 1/{n}")));
        }
        check_aligned(g, windows, 0.0, x_max)?;
    }
    let bounds: Vec<f64> = (0..=windows)
        .map(|k| ((k as f64) / n as f64).min(x_max))
        .collect();
    let coeffs = if cap.is_lebesgue() {
        window_averages(f, &bounds, None, Some((n + 1) as f64))?
    } else {
        window_averages(f, &bounds, Some(cap), None)?
    };
    let k_max = windows - 1;
    let out: Vec<Result<(f64, bool)>> = par_collect(xs.len(), |i| {
        let x = xs[i];
        if x < 0.0 {
            return Err(Error::Domain(format!("Szász operator evaluated at x = {x} < 0")));
        }
        let (w, converged) = poisson_weights(n as f64 * x, tail_tol, k_max);
        Ok((w.iter().zip(&coeffs).map(|(p, c)| p * c).sum(), converged))
    });
    let out: Vec<(f64, bool)> = out.into_iter().collect::<Result<_>>()?;
    Ok(out.into_iter().unzip())
}

/// Szász-Mirakjan-Kantorovich operator at the cell midpoints of `f`, whose
/// grid must start at 0. The mask flags cells whose Poisson tail fits inside
/// the domain to within `tail_tol`.
pub fn apply_szasz(f: &GridFunction, n: usize, cap: &Capacity, tail_tol: f64, alignment: Alignment) -> Result<GridFunction> {
    let g = *f.grid()?;
    let (v, ok) = szasz_at(f, n, cap, tail_tol, &g.midpoints(), alignment)?;
    GridFunction::new(Domain::Line(g), v, ok)
}

/// Average of `f` (zero outside its grid) over `[lo, hi]`, divided by `len`.
fn window_mean(f: &GridFunction, g: &Grid, lo: f64, hi: f64, len: f64) -> f64 {
    g.overlaps(lo, hi)
        .iter()
        .map(|&(i, w)| f.values()[i] * w)
        .sum::<f64>()
        / len
}

fn slide_at(f: &GridFunction, r: f64, big_r: f64, truncated: bool, xs: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
    if !(r < 0.0 && 0.0 < big_r) || !r.is_finite() || !big_r.is_finite() {
        return Err(Error::InvalidSpec(format!("sliding window needs r < 0 < R, got [{r}, {big_r}]")));
    }
    let g = *f.grid()?;
    let len = big_r - r;
    let tol = 1e-12 * g.len();
    let out: Vec<(f64, bool)> = par_collect(xs.len(), |i| {
        let x = xs[i];
        let (lo, hi) = (x - big_r, x - r);
        let mut v = window_mean(f, &g, lo, hi, len);
        if truncated {
            v = v.max(0.0);
        }
        (v, lo >= g.a() - tol && hi <= g.b() + tol)
    });
    Ok(out.into_iter().unzip())
}

/// Sliding average `(1/(R-r)) int_r^R f(x - y) dy`, optionally truncated at 0.
/// The mask flags cells whose window lies inside the domain.
pub fn apply_slide(f: &GridFunction, r: f64, big_r: f64, truncated: bool) -> Result<GridFunction> {
    let g = *f.grid()?;
    let (v, ok) = slide_at(f, r, big_r, truncated, &g.midpoints())?;
    GridFunction::new(Domain::Line(g), v, ok)
}

pub fn apply_perturb_sq(f: &GridFunction, n: usize) -> Result<GridFunction> {
    if n == 0 {
        return Err(Error::InvalidSpec("n must be at least 1".into()));
    }
    let n = n as f64;
    f.map(|v| v + v * v / n).with_mask(vec![true; f.values().len()])
}

/// `{h, 2h, 4h, ...}` up to the first radius covering the whole interval.
pub fn dyadic_radii(g: &Grid) -> Vec<f64> {
    let mut radii = vec![g.h()];
    while *radii.last().unwrap() < g.len() {
        let next = radii.last().unwrap() * 2.0;
        radii.push(next);
    }
    radii
}

fn maximal_at(f: &GridFunction, radii: &[f64], abs: bool, xs: &[f64]) -> Result<Vec<f64>> {
    if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidSpec("maximal operator needs positive radii".into()));
    }
    let g = *f.grid()?;
    let src = if abs { f.abs() } else { f.clone() };
    Ok(par_collect(xs.len(), |i| {
        let x = xs[i];
        radii
            .iter()
            .filter_map(|&r| {
                let lo = (x - r).max(g.a());
                let hi = (x + r).min(g.b());
                (hi > lo).then(|| window_mean(&src, &g, lo, hi, hi - lo))
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }))
}

/// Windowed maximal operator; windows are clipped to the domain and averaged
/// over the clipped length.
pub fn apply_maximal(f: &GridFunction, radii: &[f64]) -> Result<GridFunction> {
    let g = *f.grid()?;
    let v = maximal_at(f, radii, false, &g.midpoints())?;
    GridFunction::from_values(Domain::Line(g), v)
}

/// Cesàro mean `(1/n) sum_{k=1..n} family.at(k)(f)`.
pub fn apply_cesaro(family: &OperatorSpec, f: &GridFunction, n: usize) -> Result<GridFunction> {
    OperatorSpec::Cesaro {
        inner: Box::new(family.clone()),
        n,
    }
    .apply(f)
}

impl OperatorSpec {
    pub fn bk1(n: usize) -> Self {
        OperatorSpec::Bk1 { n }
    }

    pub fn bkc1(n: usize, cap: Capacity) -> Self {
        OperatorSpec::Bkc1 { n, cap }
    }

    pub fn bkc2(n: usize, cap: Capacity) -> Self {
        OperatorSpec::Bkc2 { n, cap, allow_large: false }
    }

    pub fn szasz(n: usize, cap: Capacity) -> Self {
        OperatorSpec::Szasz { n, cap, tail_tol: 1e-12, x_max: 4.0 }
    }

    pub fn slide(r: f64, big_r: f64) -> Self {
        OperatorSpec::Slide { r, big_r, shrink: false, n: 1, truncated: false }
    }

    pub fn slide_trunc(r: f64, big_r: f64) -> Self {
        OperatorSpec::Slide { r, big_r, shrink: false, n: 1, truncated: true }
    }

    pub fn perturb_sq(n: usize) -> Self {
        OperatorSpec::PerturbSq { n }
    }

    pub fn maximal() -> Self {
        OperatorSpec::Maximal { radii: None, abs: false }
    }

    pub fn cesaro(inner: OperatorSpec, n: usize) -> Self {
        OperatorSpec::Cesaro { inner: Box::new(inner), n }
    }

    /// Short family tag (`bk1`, `slide-trunc`, ...).
    pub fn family(&self) -> &'static str {
        match self {
            OperatorSpec::Bk1 { .. } => "bk1",
            OperatorSpec::Bkc1 { .. } => "bkc1",
            OperatorSpec::Bkc2 { .. } => "bkc2",
            OperatorSpec::Szasz { .. } => "szasz",
            OperatorSpec::Slide { truncated: false, .. } => "slide",
            OperatorSpec::Slide { truncated: true, .. } => "slide-trunc",
            OperatorSpec::PerturbSq { .. } => "perturb",
            OperatorSpec::Maximal { .. } => "maximal",
            OperatorSpec::Cesaro { .. } => "cesaro",
        }
    }

    /// The family member at level `n`. Fixed-window slides and the maximal
    /// operator do not depend on `n`.
    pub fn at(&self, n: usize) -> OperatorSpec {
        let mut s = self.clone();
        match &mut s {
            OperatorSpec::Bk1 { n: k }
            | OperatorSpec::Bkc1 { n: k, .. }
            | OperatorSpec::Bkc2 { n: k, .. }
            | OperatorSpec::Szasz { n: k, .. }
            | OperatorSpec::PerturbSq { n: k }
            | OperatorSpec::Slide { n: k, .. }
            | OperatorSpec::Cesaro { n: k, .. } => *k = n,
            OperatorSpec::Maximal { .. } => {}
        }
        s
    }

    pub fn level(&self) -> Option<usize> {
        match self {
            OperatorSpec::Bk1 { n }
            | OperatorSpec::Bkc1 { n, .. }
            | OperatorSpec::Bkc2 { n, .. }
            | OperatorSpec::Szasz { n, .. }
            | OperatorSpec::PerturbSq { n }
            | OperatorSpec::Cesaro { n, .. } => Some(*n),
            OperatorSpec::Slide { n, shrink: true, .. } => Some(*n),
            _ => None,
        }
    }

    /// Weakly nonlinear (sublinear and translatable) and monotone on the
    /// whole space, by construction.
    pub fn is_weakly_nonlinear_monotone(&self) -> bool {
        match self {
            OperatorSpec::Bk1 { .. } | OperatorSpec::Slide { truncated: false, .. } => true,
            // max of linear averages; |f| breaks it
            OperatorSpec::Maximal { abs, .. } => !abs,
            // the Choquet forms need a submodular capacity; concave distortions qualify
            OperatorSpec::Bkc1 { cap, .. } | OperatorSpec::Bkc2 { cap, .. } | OperatorSpec::Szasz { cap, .. } => {
                concave(cap)
            }
            OperatorSpec::Cesaro { inner, .. } => inner.is_weakly_nonlinear_monotone(),
            OperatorSpec::Slide { truncated: true, .. } | OperatorSpec::PerturbSq { .. } => false,
        }
    }

    /// Effective `[r, R]` of a slide at its current level.
    pub fn window(&self) -> Option<(f64, f64)> {
        match *self {
            OperatorSpec::Slide { r, big_r, shrink, n, .. } => {
                if shrink {
                    Some((r / n as f64, big_r / n as f64))
                } else {
                    Some((r, big_r))
                }
            }
            _ => None,
        }
    }

    /// A natural sampling domain for property checks on this operator.
    pub fn default_domain(&self) -> Domain {
        let unit = |m: usize| Domain::Line(Grid::unit(m).expect("m >= 1"));
        let aligned = |q: usize, target: usize| q * target.div_ceil(q);
        match self {
            OperatorSpec::Bk1 { n } | OperatorSpec::Bkc1 { n, .. } => unit(aligned(n + 1, 200)),
            OperatorSpec::Bkc2 { n, .. } => {
                let g = Grid::unit(aligned(n + 1, 24)).expect("m >= 1");
                Domain::Plane(g, g)
            }
            OperatorSpec::Szasz { x_max, .. } => Domain::Line(Grid::new(0.0, *x_max, 400).expect("x_max > 0")),
            OperatorSpec::Slide { .. } | OperatorSpec::PerturbSq { .. } => unit(200),
            OperatorSpec::Maximal { .. } => unit(128),
            OperatorSpec::Cesaro { inner, n } => inner.at(*n).default_domain(),
        }
    }

    /// Domain on which to sample an analytic input so that every window is a
    /// union of whole cells; falls back to `out` when the common refinement
    /// would exceed [`MAX_REFINED_CELLS`].
    pub fn input_domain(&self, out: &Domain) -> Domain {
        let refine = |g: &Grid, q: usize| -> Grid {
            let m = lcm(g.cells(), q);
            if m <= MAX_REFINED_CELLS {
                Grid::new(g.a(), g.b(), m).unwrap_or(*g)
            } else {
                *g
            }
        };
        match (self, out) {
            (OperatorSpec::Bk1 { n } | OperatorSpec::Bkc1 { n, .. }, Domain::Line(g)) => Domain::Line(refine(g, n + 1)),
            (OperatorSpec::Bkc2 { n, .. }, Domain::Plane(g1, g2)) => {
                let (r1, r2) = (refine(g1, n + 1), refine(g2, n + 1));
                if r1.cells() * r2.cells() <= MAX_REFINED_CELLS {
                    Domain::Plane(r1, r2)
                } else {
                    *out
                }
            }
            (OperatorSpec::Szasz { n, .. }, Domain::Line(g)) => {
                let w = g.b() * *n as f64;
                if (w - w.round()).abs() < 1e-9 && w.round() >= 1.0 {
                    Domain::Line(refine(g, w.round() as usize))
                } else {
                    *out
                }
            }
            (OperatorSpec::Cesaro { inner, n }, Domain::Line(g)) => {
                // one refinement serving every level, if it stays small
                let mut m = g.cells();
                for k in 1..=*n {
                    if let Domain::Line(r) = inner.at(k).input_domain(&Domain::Line(*g)) {
                        m = lcm(m, r.cells());
                        if m > MAX_REFINED_CELLS {
                            return *out;
                        }
                    }
                }
                Domain::Line(Grid::new(g.a(), g.b(), m).unwrap_or(*g))
            }
            _ => *out,
        }
    }

    /// Apply at the cells of `f`'s own domain.
    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.apply_to(f, f.domain())
    }

    /// Apply to `f` and report the result at the cell midpoints of `out`.
    pub fn apply_to(&self, f: &GridFunction, out: &Domain) -> Result<GridFunction> {
        self.apply_with(f, out, Alignment::Exact)
    }

    pub fn apply_with(&self, f: &GridFunction, out: &Domain, alignment: Alignment) -> Result<GridFunction> {
        if let OperatorSpec::Bkc2 { n, cap, allow_large } = self {
            return bkc2_to(f, *n, cap, *allow_large, out, alignment);
        }
        let g = output_grid(f, out)?;
        let (v, ok) = self.evaluate_with(f, &g.midpoints(), alignment)?;
        GridFunction::new(Domain::Line(g), v, ok)
    }

    /// Sample `spec` on [`Self::input_domain`] and report on `out`.
    pub fn apply_spec(&self, spec: &FunctionSpec, out: &Domain) -> Result<GridFunction> {
        let input = sample(spec, &self.input_domain(out))?;
        self.apply_to(&input, out)
    }

    /// Values at arbitrary points of a 1D domain, plus validity flags (window
    /// inside the domain for slides, Poisson tail captured for Szász).
    pub fn evaluate(&self, f: &GridFunction, xs: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
        self.evaluate_with(f, xs, Alignment::Exact)
    }

    pub fn evaluate_with(&self, f: &GridFunction, xs: &[f64], alignment: Alignment) -> Result<(Vec<f64>, Vec<bool>)> {
        let all = |v: Vec<f64>| {
            let n = v.len();
            (v, vec![true; n])
        };
        match self {
            OperatorSpec::Bk1 { n } => Ok(all(bernstein_kantorovich_at(f, *n, None, xs, alignment)?)),
            OperatorSpec::Bkc1 { n, cap } => Ok(all(bernstein_kantorovich_at(f, *n, Some(cap), xs, alignment)?)),
            OperatorSpec::Bkc2 { .. } => Err(Error::UnsupportedDimension(2)),
            OperatorSpec::Szasz { n, cap, tail_tol, x_max } => {
                let g = f.grid()?;
                if (g.b() - x_max).abs() > 1e-12 * x_max.max(1.0) {
                    return Err(Error::Domain(format!(
                        "szasz with xmax = {x_max} applied on [{}, {}]",
                        g.a(),
                        g.b()
                    )));
                }
                szasz_at(f, *n, cap, *tail_tol, xs, alignment)
            }
            OperatorSpec::Slide { truncated, .. } => {
                let (r, big_r) = self.window().expect("slide");
                slide_at(f, r, big_r, *truncated, xs)
            }
            OperatorSpec::PerturbSq { n } => {
                if *n == 0 {
                    return Err(Error::InvalidSpec("n must be at least 1".into()));
                }
                let k = *n as f64;
                let v = xs
                    .iter()
                    .map(|&x| f.value_at(x).map(|v| v + v * v / k))
                    .collect::<Result<Vec<_>>>()?;
                Ok(all(v))
            }
            OperatorSpec::Maximal { radii, abs } => {
                let g = f.grid()?;
                let r = radii.clone().unwrap_or_else(|| dyadic_radii(g));
                Ok(all(maximal_at(f, &r, *abs, xs)?))
            }
            OperatorSpec::Cesaro { inner, n } => {
                if *n == 0 {
                    return Err(Error::InvalidSpec("Cesàro mean needs n >= 1".into()));
                }
                let mut sum = vec![0.0; xs.len()];
                let mut ok = vec![true; xs.len()];
                for k in 1..=*n {
                    let (v, o) = inner.at(k).evaluate_with(f, xs, alignment)?;
                    for i in 0..xs.len() {
                        sum[i] += v[i];
                        ok[i] &= o[i];
                    }
                }
                let inv = *n as f64;
                Ok((sum.into_iter().map(|s| s / inv).collect(), ok))
            }
        }
    }
}

fn concave(cap: &Capacity) -> bool {
    use crate::capacity::Distortion;
    match &cap.distortion {
        Distortion::Identity | Distortion::Sqrt => true,
        Distortion::Power(a) => *a <= 1.0,
        Distortion::Table { knots, values } => {
            let slopes: Vec<f64> = knots
                .windows(2)
                .zip(values.windows(2))
                .map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0]))
                .collect();
            slopes.windows(2).all(|s| s[1] <= s[0] + 1e-15)
        }
    }
}

/// `{}` prints the full text form; `{:#}` prints the family template with
/// the level `n` left out.
impl fmt::Display for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let template = f.alternate();
        let mut params: Vec<String> = Vec::new();
        let level = |params: &mut Vec<String>, n: usize| {
            if !template {
                params.push(format!("n={n}"));
            }
        };
        let name = match self {
            OperatorSpec::Bk1 { n } | OperatorSpec::PerturbSq { n } => {
                level(&mut params, *n);
                self.family().to_string()
            }
            OperatorSpec::Bkc1 { n, cap } => {
                level(&mut params, *n);
                params.push(format!("cap={cap}"));
                "bkc1".into()
            }
            OperatorSpec::Bkc2 { n, cap, allow_large } => {
                level(&mut params, *n);
                params.push(format!("cap={cap}"));
                if *allow_large {
                    params.push("large".into());
                }
                "bkc2".into()
            }
            OperatorSpec::Szasz { n, cap, tail_tol, x_max } => {
                level(&mut params, *n);
                params.push(format!("cap={cap}"));
                params.push(format!("tail={tail_tol:e}"));
                params.push(format!("xmax={x_max}"));
                "szasz".into()
            }
            OperatorSpec::Slide { r, big_r, shrink, n, .. } => {
                params.push(format!("r={r}"));
                params.push(format!("R={big_r}"));
                if *shrink {
                    params.push("shrink".into());
                    level(&mut params, *n);
                }
                self.family().to_string()
            }
            OperatorSpec::Maximal { radii, abs } => {
                if let Some(r) = radii {
                    params.push(format!("radii={}", text::join_f64(r, ";")));
                }
                if *abs {
                    params.push("abs".into());
                }
                "maximal".into()
            }
            OperatorSpec::Cesaro { inner, n } => {
                level(&mut params, *n);
                format!("cesaro({inner})")
            }
        };
        if params.is_empty() {
            write!(f, "{name}")
        } else {
            write!(f, "{name}:{}", params.join(","))
        }
    }
}

impl FromStr for OperatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_operator(s, 1)
    }
}

struct Params {
    items: Vec<(String, String, usize)>,
    used: Vec<bool>,
}

impl Params {
    fn new(items: Vec<(String, String, usize)>) -> Self {
        let used = vec![false; items.len()];
        Params { items, used }
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        let i = self.items.iter().position(|(k, _, _)| k == key)?;
        self.used[i] = true;
        Some((self.items[i].1.clone(), self.items[i].2))
    }

    fn usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            Some((v, c)) => text::parse_usize(&v, c),
            None => Ok(default),
        }
    }

    fn f64_req(&mut self, key: &str, column: usize) -> Result<f64> {
        match self.take(key) {
            Some((v, c)) => text::parse_f64(&v, c),
            None => Err(Error::parse(column, format!("missing parameter `{key}`"))),
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            Some((v, c)) => text::parse_f64(&v, c),
            None => Ok(default),
        }
    }

    fn cap_or(&mut self, default: Capacity) -> Result<Capacity> {
        match self.take("cap") {
            Some((v, c)) => v.parse::<Capacity>().map_err(|e| e.at_offset(c - 1)),
            None => Ok(default),
        }
    }

    fn flag(&mut self, key: &str) -> bool {
        self.take(key).is_some()
    }

    fn finish(self) -> Result<()> {
        for (i, (k, v, c)) in self.items.iter().enumerate() {
            if !self.used[i] {
                // point at the key rather than its value
                let key_col = if v.is_empty() { *c } else { c - k.chars().count() - 1 };
                return Err(Error::parse(key_col, format!("unknown parameter `{k}`")));
            }
        }
        Ok(())
    }
}

fn positive(n: usize, column: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::parse(column, "n must be at least 1"));
    }
    Ok(n)
}

fn parse_operator(s: &str, column: usize) -> Result<OperatorSpec> {
    let s_trim = s.trim_end();
    if let Some(rest) = s_trim.strip_prefix("cesaro(") {
        // find the matching parenthesis
        let mut depth = 1;
        let mut close = None;
        for (i, ch) in rest.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        let close = close.ok_or_else(|| Error::parse(column + 6, "unclosed `(`"))?;
        let inner = parse_operator(&rest[..close], column + 7)?;
        if matches!(inner, OperatorSpec::Cesaro { .. }) {
            return Err(Error::parse(column + 7, "nested Cesàro means are not supported"));
        }
        let tail = &rest[close + 1..];
        let tcol = column + 7 + rest[..close].chars().count() + 1;
        let n = match tail.strip_prefix(':') {
            Some(p) => {
                let mut params = Params::new(text::split_params(p, tcol + 1));
                let n = params.usize_or("n", 1)?;
                params.finish()?;
                n
            }
            None if tail.is_empty() => 1,
            None => return Err(Error::parse(tcol, format!("unexpected `{tail}`"))),
        };
        return Ok(OperatorSpec::cesaro(inner, positive(n, tcol)?));
    }

    let (kind, rest) = match s_trim.split_once(':') {
        Some((k, r)) => (k, r),
        None => (s_trim, ""),
    };
    let pcol = column + kind.chars().count() + 1;
    let mut p = Params::new(if rest.is_empty() {
        Vec::new()
    } else {
        text::split_params(rest, pcol)
    });
    let spec = match kind.trim() {
        "bk1" => OperatorSpec::Bk1 { n: positive(p.usize_or("n", 1)?, pcol)? },
        "bkc1" => OperatorSpec::Bkc1 {
            n: positive(p.usize_or("n", 1)?, pcol)?,
            cap: p.cap_or(Capacity::sqrt())?,
        },
        "bkc2" => OperatorSpec::Bkc2 {
            n: positive(p.usize_or("n", 1)?, pcol)?,
            cap: p.cap_or(Capacity::sqrt())?,
            allow_large: p.flag("large"),
        },
        "szasz" => {
            let n = positive(p.usize_or("n", 1)?, pcol)?;
            let cap = p.cap_or(Capacity::lebesgue())?;
            let tail_tol = p.f64_or("tail", 1e-12)?;
            if !(tail_tol > 0.0 && tail_tol < 1.0) {
                return Err(Error::parse(pcol, "tail must lie in (0, 1)"));
            }
            let x_max = p.f64_or("xmax", 4.0)?;
            if x_max <= 0.0 {
                return Err(Error::parse(pcol, "xmax must be positive"));
            }
            OperatorSpec::Szasz { n, cap, tail_tol, x_max }
        }
        k @ ("slide" | "slide-trunc") => {
            let r = p.f64_req("r", pcol)?;
            let big_r = p.f64_req("R", pcol)?;
            if !(r < 0.0 && big_r > 0.0) {
                return Err(Error::parse(pcol, "window needs r < 0 < R"));
            }
            let shrink = p.flag("shrink");
            let n = positive(p.usize_or("n", 1)?, pcol)?;
            OperatorSpec::Slide { r, big_r, shrink, n, truncated: k == "slide-trunc" }
        }
        "perturb" => OperatorSpec::PerturbSq { n: positive(p.usize_or("n", 1)?, pcol)? },
        "maximal" => {
            let radii = match p.take("radii") {
                Some((v, c)) => {
                    let list = text::parse_f64_list(&v.replace(';', ","), c)?;
                    if list.is_empty() || list.iter().any(|r| *r <= 0.0) {
                        return Err(Error::parse(c, "radii must be positive"));
                    }
                    Some(list)
                }
                None => None,
            };
            OperatorSpec::Maximal { radii, abs: p.flag("abs") }
        }
        other => return Err(Error::parse(column, format!("unknown operator family `{other}`"))),
    };
    p.finish()?;
    Ok(spec)
}
