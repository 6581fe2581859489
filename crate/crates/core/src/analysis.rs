//! Randomized axiom checks, norm estimates and convergence measurement.
//!
//! Every check runs a few fixed probe inputs first and then `trials` random
//! ones. Trial `t` draws from [`trial_rng`]`(seed, t)`, so reports are
//! identical whatever the thread count. Random inputs are recorded as
//! `table:` specs, which makes witnesses replayable through the text forms.
//!
//! "Almost everywhere" is approximated by the set of valid, continuity-masked
//! grid cells; no report claims more than that.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::capacity::Capacity;
use crate::choquet::{choquet_integral, CellBlock};
use crate::error::{Error, Result};
use crate::gridfn::{norm, sample, test_set, Domain, DomainKind, FunctionSpec, Grid, GridFunction, NormMode};
use crate::operators::{Operator, OperatorSpec};
use crate::report::{MarginTracker, Property, PropertyReport, Witness};
use crate::rng::trial_rng;
use crate::text;

/// Absolute tolerance of the axiom checks.
pub const AXIOM_TOL: f64 = 1e-9;

/// Errors below this are rounding noise and count as converged.
pub const NOISE_FLOOR: f64 = 1e-10;

/// Default pointwise guard band, as a fraction of the first axis length.
pub const DEFAULT_GUARD: f64 = 0.1;

/// A convergent scan must end at or below this fraction of its first error.
pub const CONVERGENCE_FACTOR: f64 = 0.5;

const ALPHAS: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 10.0];

#[cfg(feature = "parallel")]
fn par_collect<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_collect<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).map(f).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    /// Restrict generated inputs to `f >= 0` (and shifts to `alpha >= 0`).
    pub positive_cone: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            trials: 200,
            seed: 0,
            tol: AXIOM_TOL,
            positive_cone: false,
        }
    }
}

impl CheckConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        CheckConfig {
            trials,
            seed,
            ..CheckConfig::default()
        }
    }

    pub fn positive_cone(mut self, on: bool) -> Self {
        self.positive_cone = on;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// Random piecewise polynomial or step function in the normalized coordinate
/// `u in [0, 1]`.
#[derive(Debug, Clone)]
enum Profile {
    Poly { breaks: Vec<f64>, coeffs: Vec<Vec<f64>> },
    Step { jumps: Vec<f64>, levels: Vec<f64> },
}

impl Profile {
    fn random(rng: &mut ChaCha8Rng) -> Profile {
        let pieces = rng.random_range(1..=4usize);
        let mut breaks: Vec<f64> = (1..pieces).map(|_| rng.random::<f64>()).collect();
        breaks.sort_by(f64::total_cmp);
        if rng.random_bool(0.5) {
            let coeffs = (0..pieces)
                .map(|_| {
                    let degree = rng.random_range(0..=4usize);
                    (0..=degree).map(|_| rng.random_range(-2.0..=2.0)).collect()
                })
                .collect();
            Profile::Poly { breaks, coeffs }
        } else {
            let levels = (0..pieces).map(|_| rng.random_range(-2.0..=2.0)).collect();
            Profile::Step { jumps: breaks, levels }
        }
    }

    fn eval(&self, u: f64) -> f64 {
        match self {
            Profile::Poly { breaks, coeffs } => {
                let piece = breaks.partition_point(|&b| b <= u);
                coeffs[piece].iter().rev().fold(0.0, |acc, c| acc * u + c)
            }
            Profile::Step { jumps, levels } => levels[jumps.partition_point(|&b| b <= u)],
        }
    }
}

fn normalized(g: &Grid, i: usize) -> f64 {
    (g.midpoint(i) - g.a()) / g.len()
}

/// One random input on `domain`, as a grid function and a replayable spec.
pub fn random_input(rng: &mut ChaCha8Rng, domain: &Domain, positive: bool) -> (FunctionSpec, GridFunction) {
    let values: Vec<f64> = match domain {
        Domain::Line(g) => {
            let p = Profile::random(rng);
            (0..g.cells()).map(|i| p.eval(normalized(g, i))).collect()
        }
        Domain::Plane(g1, g2) => {
            let p: Vec<Profile> = (0..4).map(|_| Profile::random(rng)).collect();
            let mut v = Vec::with_capacity(domain.size());
            for i in 0..g1.cells() {
                let u1 = normalized(g1, i);
                for j in 0..g2.cells() {
                    let u2 = normalized(g2, j);
                    v.push(p[0].eval(u1) + p[1].eval(u2) + 0.5 * p[2].eval(u1) * p[3].eval(u2));
                }
            }
            v
        }
    };
    let values: Vec<f64> = if positive { values.into_iter().map(f64::abs).collect() } else { values };
    let f = GridFunction::from_values(*domain, values.clone()).expect("finite values of matching length");
    (FunctionSpec::Table(values), f)
}

/// Random nondecreasing piecewise-linear map on `[lo, hi]`.
fn random_monotone_map(rng: &mut ChaCha8Rng, lo: f64, hi: f64, positive: bool) -> impl Fn(f64) -> f64 {
    let pieces = rng.random_range(1..=4usize);
    let mut knots: Vec<f64> = (1..pieces).map(|_| rng.random_range(lo..=hi)).collect();
    knots.sort_by(f64::total_cmp);
    knots.insert(0, lo);
    let slopes: Vec<f64> = (0..pieces)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..=2.0) })
        .collect();
    let offset = if positive { rng.random_range(0.0..=2.0) } else { rng.random_range(-2.0..=2.0) };
    let mut base = vec![offset];
    for k in 1..pieces {
        let prev = base[k - 1];
        base.push(prev + slopes[k - 1] * (knots[k] - knots[k - 1]));
    }
    move |t: f64| {
        let k = knots.partition_point(|&x| x <= t).saturating_sub(1);
        base[k] + slopes[k] * (t - knots[k])
    }
}

fn comonotone_pair(rng: &mut ChaCha8Rng, domain: &Domain, positive: bool) -> (FunctionSpec, GridFunction, FunctionSpec, GridFunction) {
    let (_, g) = random_input(rng, domain, false);
    let lo = g.values().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = g.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let phi1 = random_monotone_map(rng, lo, hi, positive);
    let phi2 = random_monotone_map(rng, lo, hi, positive);
    let f1 = g.map(&phi1);
    let f2 = g.map(&phi2);
    (
        FunctionSpec::Table(f1.values().to_vec()),
        f1,
        FunctionSpec::Table(f2.values().to_vec()),
        f2,
    )
}

/// `(max_i (a_i - b_i), argmax)`.
fn max_excess(a: &[f64], b: &[f64]) -> (f64, usize) {
    a.iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |(m, k), (i, d)| {
            if d > m || d.is_nan() {
                (d, i)
            } else {
                (m, k)
            }
        })
}

fn max_abs_gap(a: &[f64], b: &[f64]) -> (f64, usize) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    max_excess(&d, &vec![0.0; d.len()])
}

fn combine(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 > a.0 {
        b
    } else {
        a
    }
}

type TrialOutcome = Result<(f64, Option<Witness>)>;

/// Runs probes `0..probes` and random trials after them, feeding margins to
/// the tracker in index order.
fn run_trials(
    property: Property,
    subject: String,
    cfg: &CheckConfig,
    probes: usize,
    trial: impl Fn(usize, Option<ChaCha8Rng>) -> TrialOutcome + Sync + Send,
) -> Result<PropertyReport> {
    let total = probes + cfg.trials;
    let tol = cfg.tol;
    let outcomes = par_collect(total, |t| {
        let rng = (t >= probes).then(|| trial_rng(cfg.seed, (t - probes) as u64));
        trial(t, rng)
    });
    let mut tracker = MarginTracker::new(tol);
    for outcome in outcomes {
        let (margin, witness) = outcome?;
        tracker.trial();
        tracker.observe(margin, |m| {
            let mut w = witness.unwrap_or_else(|| Witness::new(m));
            w.margin = m;
            w
        });
    }
    Ok(tracker.finish(property, subject))
}

fn witness_if(margin: f64, tol: f64, build: impl FnOnce() -> Witness) -> Option<Witness> {
    (margin > tol || margin.is_nan()).then(build)
}

fn constant(domain: &Domain, c: f64) -> (FunctionSpec, GridFunction) {
    (FunctionSpec::Constant(c), GridFunction::constant(*domain, c))
}

/// (SL): `T(f+g) <= T(f) + T(g)` and `T(alpha f) = alpha T(f)`.
pub fn check_sublinearity(op: &dyn Operator, domain: &Domain, cfg: &CheckConfig) -> Result<PropertyReport> {
    run_trials(Property::Sublinearity, op.label(), cfg, 1, |t, rng| {
        let (fs, f, gs, g, alpha) = match rng {
            None => {
                let (fs, f) = constant(domain, 1.0);
                (fs.clone(), f.clone(), fs, f, 2.0)
            }
            Some(mut rng) => {
                let (fs, f) = random_input(&mut rng, domain, cfg.positive_cone);
                let (gs, g) = random_input(&mut rng, domain, cfg.positive_cone);
                (fs, f, gs, g, ALPHAS[t % ALPHAS.len()])
            }
        };
        let tf = op.apply(&f)?;
        let tg = op.apply(&g)?;
        let tfg = op.apply(&f.plus(&g)?)?;
        let bound: Vec<f64> = tf.values().iter().zip(tg.values()).map(|(a, b)| a + b).collect();
        let sub = max_excess(tfg.values(), &bound);
        let taf = op.apply(&f.scale(alpha))?;
        let homog = max_abs_gap(taf.values(), tf.scale(alpha).values());
        let (margin, cell) = combine(sub, homog);
        Ok((
            margin,
            witness_if(margin, cfg.tol, || Witness::new(margin).input("f", fs).input("g", gs).alpha(alpha).cell(cell)),
        ))
    })
}

/// (TR): `T(f + alpha) = T(f) + alpha T(1)` for `alpha >= 0`.
pub fn check_translatability(op: &dyn Operator, domain: &Domain, cfg: &CheckConfig) -> Result<PropertyReport> {
    let t_one = op.apply(&GridFunction::constant(*domain, 1.0))?;
    let probes: Vec<f64> = if cfg.positive_cone { vec![1.0] } else { vec![1.0, -1.0] };
    run_trials(Property::Translatability, op.label(), cfg, probes.len(), |t, rng| {
        let (fs, f, alpha) = match rng {
            None => {
                let (fs, f) = constant(domain, probes[t]);
                (fs, f, 1.0)
            }
            Some(mut rng) => {
                let (fs, f) = random_input(&mut rng, domain, cfg.positive_cone);
                (fs, f, ALPHAS[t % ALPHAS.len()])
            }
        };
        let lhs = op.apply(&f.translate(alpha))?;
        let tf = op.apply(&f)?;
        let rhs: Vec<f64> = tf.values().iter().zip(t_one.values()).map(|(a, b)| a + alpha * b).collect();
        let (margin, cell) = max_abs_gap(lhs.values(), &rhs);
        Ok((margin, witness_if(margin, cfg.tol, || Witness::new(margin).input("f", fs).alpha(alpha).cell(cell))))
    })
}

/// (M): `T(f) <= T(f + g)` for `g >= 0`. The witness names `f` and the
/// nonnegative increment `g`.
pub fn check_monotonicity(op: &dyn Operator, domain: &Domain, cfg: &CheckConfig) -> Result<PropertyReport> {
    run_trials(Property::Monotonicity, op.label(), cfg, 1, |_, rng| {
        let (fs, f, gs, g) = match rng {
            None => {
                let (fs, f) = constant(domain, 0.0);
                let (gs, g) = constant(domain, 1.0);
                (fs, f, gs, g)
            }
            Some(mut rng) => {
                let (fs, f) = random_input(&mut rng, domain, cfg.positive_cone);
                let (gs, g) = random_input(&mut rng, domain, true);
                (fs, f, gs, g)
            }
        };
        let lo = op.apply(&f)?;
        let hi = op.apply(&f.plus(&g)?)?;
        let (margin, cell) = max_excess(lo.values(), hi.values());
        Ok((
            margin,
            witness_if(margin, cfg.tol, || Witness::new(margin).input("f", fs).input("g", gs).cell(cell)),
        ))
    })
}

/// (CA): `T(f1 + f2) = T(f1) + T(f2)` for comonotone `f1 = phi1(g)`,
/// `f2 = phi2(g)` with nondecreasing piecewise-linear `phi`.
pub fn check_comonotone_additivity(op: &dyn Operator, domain: &Domain, cfg: &CheckConfig) -> Result<PropertyReport> {
    run_trials(Property::ComonotoneAdditivity, op.label(), cfg, 1, |_, rng| {
        let (f1s, f1, f2s, f2) = match rng {
            None => {
                let (s, f) = constant(domain, 1.0);
                (s.clone(), f.clone(), s, f)
            }
            Some(mut rng) => comonotone_pair(&mut rng, domain, cfg.positive_cone),
        };
        let sum = op.apply(&f1.plus(&f2)?)?;
        let a = op.apply(&f1)?;
        let b = op.apply(&f2)?;
        let parts: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect();
        let (margin, cell) = max_abs_gap(sum.values(), &parts);
        Ok((
            margin,
            witness_if(margin, cfg.tol, || Witness::new(margin).input("f1", f1s).input("f2", f2s).cell(cell)),
        ))
    })
}

/// `|T(f) - T(g)| <= T(|f - g|)` cellwise.
pub fn check_order_lipschitz(op: &dyn Operator, domain: &Domain, cfg: &CheckConfig) -> Result<PropertyReport> {
    run_trials(Property::OrderLipschitz, op.label(), cfg, 1, |_, rng| {
        let (fs, f, gs, g) = match rng {
            None => {
                let (s, f) = constant(domain, 1.0);
                (s.clone(), f.clone(), s, f)
            }
            Some(mut rng) => {
                let (fs, f) = random_input(&mut rng, domain, cfg.positive_cone);
                let (gs, g) = random_input(&mut rng, domain, cfg.positive_cone);
                (fs, f, gs, g)
            }
        };
        let tf = op.apply(&f)?;
        let tg = op.apply(&g)?;
        let bound = op.apply(&f.minus(&g)?.abs())?;
        let gap: Vec<f64> = tf.values().iter().zip(tg.values()).map(|(a, b)| (a - b).abs()).collect();
        let (margin, cell) = max_excess(&gap, bound.values());
        Ok((
            margin,
            witness_if(margin, cfg.tol, || Witness::new(margin).input("f", fs).input("g", gs).cell(cell)),
        ))
    })
}

/// (SL), (TR), (M) and order-Lipschitz, in that order.
pub fn check_axioms(op: &dyn Operator, domain: &Domain, cfg: &CheckConfig) -> Result<Vec<PropertyReport>> {
    Ok(vec![
        check_sublinearity(op, domain, cfg)?,
        check_translatability(op, domain, cfg)?,
        check_monotonicity(op, domain, cfg)?,
        check_order_lipschitz(op, domain, cfg)?,
    ])
}

/// Norm estimate and Lipschitz checks for one operator.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub t_one_sup: f64,
    /// `max ||T f|| / ||f||` over the sampled inputs.
    pub random_lower_bound: f64,
    pub estimate: f64,
    /// Set when the caller vouches that `T` is monotone and sublinear, in
    /// which case `||T|| = ||T(1)||` and the estimate is exact.
    pub exact: bool,
    /// `||T f - T g|| <= estimate ||f - g||`, margins relative to `||f - g||`.
    pub krein: PropertyReport,
    /// The same with `2 estimate`.
    pub factor_two: PropertyReport,
}

pub fn operator_norm(op: &dyn Operator, domain: &Domain, monotone_sublinear: bool, cfg: &CheckConfig) -> Result<NormReport> {
    let t_one_sup = op.apply(&GridFunction::constant(*domain, 1.0))?.sup_norm();
    let ratios: Vec<Result<f64>> = par_collect(cfg.trials + 1, |t| {
        let f = if t == 0 {
            GridFunction::constant(*domain, -1.0)
        } else {
            random_input(&mut trial_rng(cfg.seed, t as u64 - 1), domain, cfg.positive_cone).1
        };
        let s = f.sup_norm();
        if s == 0.0 {
            return Ok(0.0);
        }
        Ok(op.apply(&f.scale(1.0 / s))?.sup_norm())
    });
    let mut random_lower_bound: f64 = 0.0;
    for r in ratios {
        random_lower_bound = random_lower_bound.max(r?);
    }
    let estimate = t_one_sup.max(random_lower_bound);
    let lipschitz = |property: Property, factor: f64| {
        // pair seeds are offset so they differ from the norm sample
        let pair_cfg = CheckConfig {
            seed: cfg.seed ^ 0x005E_ED0F_CA1F,
            ..cfg.clone()
        };
        run_trials(property, op.label(), &pair_cfg, 0, |_, rng| {
            let mut rng = rng.expect("random trial");
            let (fs, f) = random_input(&mut rng, domain, cfg.positive_cone);
            let (gs, g) = random_input(&mut rng, domain, cfg.positive_cone);
            let d = f.minus(&g)?.sup_norm();
            let lhs = op.apply(&f)?.minus(&op.apply(&g)?)?.sup_norm();
            let margin = if d > 0.0 { (lhs - factor * estimate * d) / d } else { lhs };
            Ok((margin, witness_if(margin, cfg.tol, || Witness::new(margin).input("f", fs).input("g", gs))))
        })
    };
    Ok(NormReport {
        t_one_sup,
        random_lower_bound,
        estimate,
        exact: monotone_sublinear,
        krein: lipschitz(Property::KreinLipschitz, 1.0)?,
        factor_two: lipschitz(Property::FactorTwoLipschitz, 2.0)?,
    })
}

fn random_block(rng: &mut ChaCha8Rng) -> CellBlock {
    let m = rng.random_range(1..=64usize);
    let values = (0..m).map(|_| rng.random_range(-2.0..=2.0)).collect();
    CellBlock::new(values, 1.0 / m as f64).expect("nonempty block")
}

fn block_witness(margin: f64, pairs: &[(&str, &CellBlock)]) -> Witness {
    pairs
        .iter()
        .fold(Witness::new(margin), |w, (name, b)| w.input(name, FunctionSpec::Table(b.values().to_vec())))
}

/// `C(v + w) <= C(v) + C(w)` on random block pairs of equal length.
pub fn check_choquet_subadditivity(cap: &Capacity, trials: usize, seed: u64, tol: f64) -> Result<PropertyReport> {
    let cfg = CheckConfig { trials, seed, tol, positive_cone: false };
    run_trials(Property::Subadditivity, format!("choquet:{cap}"), &cfg, 0, |_, rng| {
        let mut rng = rng.expect("random trial");
        let v = random_block(&mut rng);
        let w = CellBlock::new(
            (0..v.values().len()).map(|_| rng.random_range(-2.0..=2.0)).collect(),
            v.cell_width(),
        )?;
        let sum = CellBlock::new(v.values().iter().zip(w.values()).map(|(a, b)| a + b).collect(), v.cell_width())?;
        let margin = choquet_integral(&sum, cap)? - choquet_integral(&v, cap)? - choquet_integral(&w, cap)?;
        Ok((margin, witness_if(margin, tol, || block_witness(margin, &[("v", &v), ("w", &w)]))))
    })
}

/// `C(phi1(g) + phi2(g)) = C(phi1(g)) + C(phi2(g))` on random blocks.
pub fn check_choquet_comonotone_additivity(cap: &Capacity, trials: usize, seed: u64, tol: f64) -> Result<PropertyReport> {
    let cfg = CheckConfig { trials, seed, tol, positive_cone: false };
    run_trials(Property::ComonotoneAdditivity, format!("choquet:{cap}"), &cfg, 0, |_, rng| {
        let mut rng = rng.expect("random trial");
        let g = random_block(&mut rng);
        let lo = g.values().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = g.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let phi1 = random_monotone_map(&mut rng, lo, hi, false);
        let phi2 = random_monotone_map(&mut rng, lo, hi, false);
        let h = g.cell_width();
        let v = CellBlock::new(g.values().iter().map(|&x| phi1(x)).collect(), h)?;
        let w = CellBlock::new(g.values().iter().map(|&x| phi2(x)).collect(), h)?;
        let s = CellBlock::new(v.values().iter().zip(w.values()).map(|(a, b)| a + b).collect(), h)?;
        let margin = (choquet_integral(&s, cap)? - choquet_integral(&v, cap)? - choquet_integral(&w, cap)?).abs();
        Ok((margin, witness_if(margin, tol, || block_witness(margin, &[("v", &v), ("w", &w)]))))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvergenceMode {
    /// Sup error over valid, continuity-masked cells whose midpoint is at
    /// least `guard` (fraction of the first axis) away from every jump.
    Pointwise { guard: f64 },
    /// Lebesgue measure of valid cells with `|T_n f - f| >= eps`.
    InMeasure { eps: f64 },
    /// `L^p` norm of `T_n f - f` over valid cells.
    Lp { p: f64 },
}

impl ConvergenceMode {
    pub fn pointwise() -> Self {
        ConvergenceMode::Pointwise { guard: DEFAULT_GUARD }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ConvergenceMode::Pointwise { guard } if !(0.0..0.5).contains(&guard) => {
                Err(Error::InvalidSpec(format!("guard must lie in [0, 0.5), got {guard}")))
            }
            ConvergenceMode::InMeasure { eps } if !(eps > 0.0 && eps.is_finite()) => {
                Err(Error::InvalidSpec(format!("eps must be positive, got {eps}")))
            }
            ConvergenceMode::Lp { p } if !(p >= 1.0 && p.is_finite()) => {
                Err(Error::InvalidSpec(format!("p must lie in [1, inf), got {p}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ConvergenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvergenceMode::Pointwise { guard } if *guard == DEFAULT_GUARD => write!(f, "pointwise"),
            ConvergenceMode::Pointwise { guard } => write!(f, "pointwise:guard={guard}"),
            ConvergenceMode::InMeasure { eps } => write!(f, "measure:eps={eps}"),
            ConvergenceMode::Lp { p } => write!(f, "lp:p={p}"),
        }
    }
}

impl FromStr for ConvergenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let pcol = kind.chars().count() + 2;
        let params = if rest.is_empty() { Vec::new() } else { text::split_params(rest, pcol) };
        let value = |key: &str, default: f64| -> Result<f64> {
            let mut found = default;
            for (k, v, c) in &params {
                if k != key {
                    return Err(Error::parse(*c, format!("unknown parameter `{k}`")));
                }
                found = text::parse_f64(v, *c)?;
            }
            Ok(found)
        };
        let mode = match kind {
            "pointwise" => ConvergenceMode::Pointwise { guard: value("guard", DEFAULT_GUARD)? },
            "measure" => ConvergenceMode::InMeasure { eps: value("eps", 0.05)? },
            "lp" => ConvergenceMode::Lp { p: value("p", 1.0)? },
            other => return Err(Error::parse(1, format!("unknown mode `{other}`"))),
        };
        mode.validate().map_err(|e| Error::parse(pcol, e.to_string()))?;
        Ok(mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub family: String,
    pub function: String,
    pub mode: ConvergenceMode,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn last_error(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.error)
    }

    /// Strictly decreasing, except that steps at or below [`NOISE_FLOOR`]
    /// always count.
    pub fn decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].error <= NOISE_FLOOR || w[1].error < w[0].error)
    }

    pub fn nonincreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].error <= NOISE_FLOOR || w[1].error <= w[0].error)
    }

    /// Decreasing and ending at or below [`CONVERGENCE_FACTOR`] times the
    /// first error (or at the noise floor). A finite scan can only be
    /// consistent with convergence, never prove it.
    pub fn converges(&self) -> bool {
        let first = self.rows.first().map_or(0.0, |r| r.error);
        let last = self.last_error();
        last <= NOISE_FLOOR || (self.decreasing() && last <= CONVERGENCE_FACTOR * first)
    }
}

fn validate_ns(ns: &[usize]) -> Result<()> {
    if ns.is_empty() {
        return Err(Error::InvalidSpec("the n list is empty".into()));
    }
    if ns.contains(&0) || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSpec("the n list must be positive and strictly ascending".into()));
    }
    Ok(())
}

/// Cells kept by the pointwise mode: valid, continuity-masked and outside the
/// guard band around every jump.
fn pointwise_cells(spec: &FunctionSpec, valid: &[bool], target: &GridFunction, guard: f64) -> Vec<bool> {
    let domain = target.domain();
    let axis = domain.axis1();
    let jumps = spec.discontinuities();
    let band = guard * axis.len();
    let inner = domain.size() / axis.cells();
    (0..domain.size())
        .map(|idx| {
            let x = axis.midpoint(idx / inner);
            valid[idx] && target.mask()[idx] && jumps.iter().all(|&j| (x - j).abs() >= band)
        })
        .collect()
}

fn error_metric(spec: &FunctionSpec, out: &GridFunction, target: &GridFunction, mode: ConvergenceMode) -> Result<f64> {
    let diff: Vec<f64> = out.values().iter().zip(target.values()).map(|(a, b)| (a - b).abs()).collect();
    let valid = out.mask();
    let measure = target.domain().cell_measure();
    match mode {
        ConvergenceMode::Pointwise { guard } => {
            let keep = pointwise_cells(spec, valid, target, guard);
            let kept: Vec<f64> = diff.iter().zip(&keep).filter(|p| *p.1).map(|p| *p.0).collect();
            if kept.is_empty() {
                return Err(Error::EmptyDomain);
            }
            Ok(kept.into_iter().fold(0.0, f64::max))
        }
        ConvergenceMode::InMeasure { eps } => {
            Ok(diff.iter().zip(valid).filter(|(d, v)| **v && **d >= eps).count() as f64 * measure)
        }
        ConvergenceMode::Lp { p } => {
            let kept: Vec<f64> = diff.iter().zip(valid).map(|(d, v)| if *v { *d } else { 0.0 }).collect();
            let g = GridFunction::from_values(*target.domain(), kept)?;
            norm(&g, NormMode::Lp(p))
        }
    }
}

/// One error row per `n` for `template.at(n)` applied to `f` on `domain`.
pub fn convergence_scan(
    template: &OperatorSpec,
    f: &FunctionSpec,
    domain: &Domain,
    ns: &[usize],
    mode: ConvergenceMode,
) -> Result<ConvergenceReport> {
    validate_ns(ns)?;
    mode.validate()?;
    let target = sample(f, domain)?;
    let rows: Vec<Result<ConvergenceRow>> = par_collect(ns.len(), |i| {
        let n = ns[i];
        let out = template.at(n).apply_spec(f, domain)?;
        Ok(ConvergenceRow {
            n,
            error: error_metric(f, &out, &target, mode)?,
        })
    });
    Ok(ConvergenceReport {
        family: format!("{template:#}"),
        function: f.to_string(),
        mode,
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}

/// `|T_n f(x) - f(x)|` at the given points, one row per `n`.
pub fn pointwise_errors_at(
    template: &OperatorSpec,
    f: &FunctionSpec,
    domain: &Domain,
    ns: &[usize],
    xs: &[f64],
) -> Result<Vec<Vec<f64>>> {
    validate_ns(ns)?;
    let exact: Vec<f64> = xs
        .iter()
        .map(|&x| f.eval(&[x]).ok_or_else(|| Error::InvalidSpec(format!("{f} has no closed form"))))
        .collect::<Result<_>>()?;
    ns.iter()
        .map(|&n| {
            let op = template.at(n);
            let input = sample(f, &op.input_domain(domain))?;
            let (v, _) = op.evaluate(&input, xs)?;
            Ok(v.iter().zip(&exact).map(|(a, b)| (a - b).abs()).collect())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// The test-set hypothesis failed, so the implication says nothing.
    Vacuous,
    /// Test set and general suite all converge.
    Confirmed,
    /// The hypothesis held (on the whole test set, or on its nonnegative
    /// members) but a suite function did not converge.
    CounterexampleCandidate,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Vacuous => "vacuous",
            Verdict::Confirmed => "confirmed",
            Verdict::CounterexampleCandidate => "counterexample-candidate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub ns: Vec<usize>,
    pub mode: ConvergenceMode,
    pub cells: usize,
}

impl HarnessConfig {
    pub fn new(ns: Vec<usize>, mode: ConvergenceMode) -> Self {
        HarnessConfig { ns, mode, cells: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KorovkinReport {
    pub family: String,
    pub domain_kind: DomainKind,
    pub stage1: Vec<ConvergenceReport>,
    pub stage2: Vec<ConvergenceReport>,
    pub test_set_converges: bool,
    /// Convergence restricted to the test functions that are `>= 0` on the
    /// domain.
    pub nonnegative_test_set_converges: bool,
    pub suite_converges: bool,
    pub verdict: Verdict,
    /// `function=<spec> n=<n> error=<e>` for the first non-convergent
    /// function that decided the verdict.
    pub witness: Option<String>,
}

/// Sampling domain for a family on `kind`: Szász families live on
/// `[0, x_max]`, everything else on `kind.domain(cells)`.
pub fn harness_domain(template: &OperatorSpec, kind: DomainKind, cells: usize) -> Result<Domain> {
    match (template, kind) {
        (OperatorSpec::Szasz { x_max, .. }, DomainKind::Cube(1) | DomainKind::PositiveCone(1)) => {
            Ok(Domain::Line(Grid::new(0.0, *x_max, cells)?))
        }
        _ => kind.domain(cells),
    }
}

fn describe(r: &ConvergenceReport) -> String {
    let last = r.rows.last().expect("rows are nonempty");
    format!("function={} n={} error={}", r.function, last.n, last.error)
}

pub fn korovkin_harness(
    template: &OperatorSpec,
    kind: DomainKind,
    suite: &[FunctionSpec],
    cfg: &HarnessConfig,
) -> Result<KorovkinReport> {
    if suite.is_empty() {
        return Err(Error::InvalidSpec("the general suite is empty".into()));
    }
    let domain = harness_domain(template, kind, cfg.cells)?;
    let scan = |fs: &[FunctionSpec]| -> Result<Vec<ConvergenceReport>> {
        fs.iter()
            .map(|f| convergence_scan(template, f, &domain, &cfg.ns, cfg.mode))
            .collect()
    };
    let tests = test_set(kind)?;
    let stage1 = scan(&tests)?;
    let stage2 = scan(suite)?;

    let nonnegative = |f: &FunctionSpec| -> Result<bool> {
        Ok(sample(f, &domain)?.values().iter().all(|&v| v >= 0.0))
    };
    let test_set_converges = stage1.iter().all(ConvergenceReport::converges);
    let mut nonnegative_test_set_converges = true;
    for (f, r) in tests.iter().zip(&stage1) {
        if nonnegative(f)? && !r.converges() {
            nonnegative_test_set_converges = false;
        }
    }
    let suite_converges = stage2.iter().all(ConvergenceReport::converges);
    let first_failure = |rs: &[ConvergenceReport]| rs.iter().find(|r| !r.converges()).map(describe);

    let (verdict, witness) = if test_set_converges && suite_converges {
        (Verdict::Confirmed, None)
    } else if test_set_converges {
        (Verdict::CounterexampleCandidate, first_failure(&stage2))
    } else if nonnegative_test_set_converges && !suite_converges {
        // prefer a suite function that takes negative values
        let mut pick = None;
        for (f, r) in suite.iter().zip(&stage2) {
            if !r.converges() && !nonnegative(f)? {
                pick = Some(describe(r));
                break;
            }
        }
        match pick {
            Some(w) => (Verdict::CounterexampleCandidate, Some(w)),
            None => (Verdict::Vacuous, first_failure(&stage1)),
        }
    } else {
        (Verdict::Vacuous, first_failure(&stage1))
    };
    Ok(KorovkinReport {
        family: format!("{template:#}"),
        domain_kind: kind,
        stage1,
        stage2,
        test_set_converges,
        nonnegative_test_set_converges,
        suite_converges,
        verdict,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::FnOperator;

    fn unit(m: usize) -> Domain {
        Domain::Line(Grid::unit(m).unwrap())
    }

    fn cfg(trials: usize) -> CheckConfig {
        CheckConfig::new(trials, 11)
    }

    #[test]
    fn random_inputs_are_reproducible() {
        let d = unit(50);
        let a = random_input(&mut trial_rng(3, 4), &d, false).0;
        let b = random_input(&mut trial_rng(3, 4), &d, false).0;
        assert_eq!(a, b);
        let (_, p) = random_input(&mut trial_rng(3, 5), &d, true);
        assert!(p.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn comonotone_pairs_are_comonotone() {
        let d = unit(40);
        for t in 0..20 {
            let (_, f1, _, f2) = comonotone_pair(&mut trial_rng(1, t), &d, false);
            for i in 0..40 {
                for j in 0..40 {
                    let s = (f1.values()[i] - f1.values()[j]) * (f2.values()[i] - f2.values()[j]);
                    assert!(s >= -1e-12);
                }
            }
        }
    }

    #[test]
    fn bk1_is_linear() {
        let op = OperatorSpec::bk1(10);
        let d = op.default_domain();
        let r = check_sublinearity(&op, &d, &cfg(30)).unwrap();
        assert!(r.pass && r.worst_margin <= 1e-10, "{r:?}");
        let r = check_comonotone_additivity(&op, &d, &cfg(30)).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn perturb_witnesses() {
        let op = OperatorSpec::perturb_sq(1);
        let d = op.default_domain();
        let r = check_sublinearity(&op, &d, &cfg(10)).unwrap();
        assert!(!r.pass);
        let w = r.witness.unwrap();
        assert_eq!(w.alpha, Some(2.0));
        assert_eq!(w.get("f"), Some(&FunctionSpec::Constant(1.0)));
        assert!((w.margin - 2.0).abs() < 1e-12);
        let r = check_translatability(&op, &d, &cfg(10)).unwrap();
        let w = r.witness.unwrap();
        assert_eq!((w.get("f"), w.alpha), (Some(&FunctionSpec::Constant(1.0)), Some(1.0)));
        assert!((w.margin - 2.0).abs() < 1e-12);
        let r = check_comonotone_additivity(&op, &d, &cfg(10)).unwrap();
        assert!(!r.pass && (r.witness.unwrap().margin - 2.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_slide_is_not_translatable() {
        let op = OperatorSpec::slide_trunc(-0.1, 0.1);
        let d = op.default_domain();
        let r = check_translatability(&op, &d, &cfg(10)).unwrap();
        let w = r.witness.unwrap();
        assert_eq!(w.get("f"), Some(&FunctionSpec::Constant(-1.0)));
        assert!(w.margin >= 1.0 - 1e-9);
        // but monotone
        assert!(check_monotonicity(&op, &d, &cfg(30)).unwrap().pass);
    }

    #[test]
    fn negation_stub_is_anti_monotone() {
        let neg = FnOperator::new("neg", |f: &GridFunction| Ok(f.neg()));
        let r = check_monotonicity(&neg, &unit(20), &cfg(5)).unwrap();
        assert!(!r.pass);
        assert!(r.witness.is_some());
    }

    #[test]
    fn identical_inputs_have_zero_order_gap() {
        let op = OperatorSpec::bkc1(5, Capacity::sqrt());
        let r = check_order_lipschitz(&op, &op.default_domain(), &cfg(0)).unwrap();
        assert_eq!(r.trials, 1);
        assert!(r.worst_margin.abs() < 1e-15);
    }

    #[test]
    fn maximal_on_positive_cone() {
        let op = OperatorSpec::Maximal { radii: None, abs: true };
        let d = op.default_domain();
        let c = cfg(40).positive_cone(true);
        assert!(check_monotonicity(&op, &d, &c).unwrap().pass);
        assert!(check_translatability(&op, &d, &c).unwrap().pass);
        // on all of E, |f| breaks translatability
        assert!(!check_translatability(&op, &d, &cfg(40)).unwrap().pass);
    }

    #[test]
    fn norms() {
        let zero = FnOperator::new("zero", |f: &GridFunction| Ok(f.scale(0.0)));
        let r = operator_norm(&zero, &unit(10), true, &cfg(10)).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert!(r.krein.pass);

        let op = OperatorSpec::bkc1(8, "pow:0.3".parse().unwrap());
        let r = operator_norm(&op, &op.default_domain(), true, &cfg(30)).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-9);
        assert!(r.random_lower_bound <= r.t_one_sup + 1e-9);
        assert!(r.krein.pass && r.factor_two.pass);
    }

    #[test]
    fn trial_results_do_not_depend_on_order() {
        let op = OperatorSpec::bkc1(6, Capacity::sqrt());
        let d = op.default_domain();
        let a = check_monotonicity(&op, &d, &cfg(25)).unwrap();
        let b = check_monotonicity(&op, &d, &cfg(25)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mode_text_forms() {
        for s in ["pointwise", "pointwise:guard=0.05", "measure:eps=0.05", "lp:p=2"] {
            let m: ConvergenceMode = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("lp:p=0.5".parse::<ConvergenceMode>().is_err());
        assert!("measure:eps=0".parse::<ConvergenceMode>().is_err());
        assert!("uniform".parse::<ConvergenceMode>().is_err());
    }

    #[test]
    fn one_cell_slide_has_zero_error() {
        let d = unit(200);
        let h = 1.0 / 200.0;
        let op = OperatorSpec::slide(-h / 2.0, h / 2.0);
        for f in ["sq", "step:0.5@0,1", "cos"] {
            let f: FunctionSpec = f.parse().unwrap();
            let r = convergence_scan(&op, &f, &d, &[1, 2], ConvergenceMode::Lp { p: 1.0 }).unwrap();
            assert!(r.errors().iter().all(|&e| e < 1e-12), "{r:?}");
        }
    }

    #[test]
    fn bk1_pointwise_rate_is_first_order() {
        let r = convergence_scan(&OperatorSpec::bk1(1), &FunctionSpec::Monomial(2), &unit(1000), &[10, 100], ConvergenceMode::pointwise())
            .unwrap();
        let ratio = r.rows[0].error / r.rows[1].error;
        assert!((ratio - 10.0).abs() < 1.5, "{ratio}");
    }

    #[test]
    fn mode_ordering() {
        let d = unit(400);
        let f = FunctionSpec::Monomial(2);
        let op = OperatorSpec::bk1(1);
        let pw = convergence_scan(&op, &f, &d, &[50], ConvergenceMode::Pointwise { guard: 0.0 }).unwrap();
        let eps = pw.last_error() * 1.01;
        let m = convergence_scan(&op, &f, &d, &[50], ConvergenceMode::InMeasure { eps }).unwrap();
        assert_eq!(m.last_error(), 0.0);
    }

    #[test]
    fn ns_must_ascend() {
        let d = unit(10);
        let f = FunctionSpec::Constant(1.0);
        assert!(convergence_scan(&OperatorSpec::bk1(1), &f, &d, &[10, 5], ConvergenceMode::pointwise()).is_err());
        assert!(convergence_scan(&OperatorSpec::bk1(1), &f, &d, &[], ConvergenceMode::pointwise()).is_err());
    }

    #[test]
    fn harness_verdicts() {
        let suite: Vec<FunctionSpec> = vec!["step:0.5@0,1".parse().unwrap(), FunctionSpec::Monomial(3)];
        let cfg = HarnessConfig { ns: vec![10, 50, 200], mode: ConvergenceMode::pointwise(), cells: 400 };
        let r = korovkin_harness(&OperatorSpec::bk1(1), DomainKind::Cube(1), &suite, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Confirmed, "{r:?}");

        let trunc: OperatorSpec = "slide-trunc:r=-1,R=1,shrink".parse().unwrap();
        let suite = vec!["shift:-0.5:pr:1".parse().unwrap()];
        let cfg = HarnessConfig { ns: vec![10, 50, 250], mode: ConvergenceMode::pointwise(), cells: 500 };
        let r = korovkin_harness(&trunc, DomainKind::Cube(1), &suite, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::CounterexampleCandidate, "{r:?}");
        assert!(!r.test_set_converges && r.nonnegative_test_set_converges);
        assert!(r.witness.unwrap().starts_with("function=shift:-0.5:pr:1"));
    }
}
