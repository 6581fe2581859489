//! Distorted Lebesgue capacities `mu(A) = gamma(L(A))`.
//!
//! Every capacity here depends on a set only through its Lebesgue measure,
//! so evaluating it on a union of grid cells needs nothing but the total
//! length of the union.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gridfn::{FunctionSpec, Grid};
use crate::report::{MarginTracker, Property, PropertyReport, Witness};
use crate::{rng, text};

/// Tolerance used by [`submodularity_probe`].
pub const SUBMODULARITY_TOL: f64 = 1e-10;

/// Nondecreasing `gamma` with `gamma(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Distortion {
    Identity,
    Sqrt,
    Power(f64),
    /// Piecewise linear through `(knots[i], values[i])`, extrapolated past the
    /// last knot with the last slope. `knots[0] == 0` and `values[0] == 0`.
    Table { knots: Vec<f64>, values: Vec<f64> },
}

impl Distortion {
    pub fn table(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() || knots.len() < 2 {
            return Err(Error::InvalidSpec(
                "distortion table needs at least two (knot, value) pairs".into(),
            ));
        }
        if knots[0] != 0.0 || values[0] != 0.0 {
            return Err(Error::InvalidSpec("distortion table must start at (0, 0)".into()));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec("distortion knots must be strictly increasing".into()));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidSpec("distortion values must be nondecreasing".into()));
        }
        Ok(Distortion::Table { knots, values })
    }

    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidSpec(format!("power distortion needs alpha > 0, got {alpha}")));
        }
        Ok(Distortion::Power(alpha))
    }

    /// `gamma(s)` for `s >= 0`, unchecked.
    #[inline]
    pub fn apply(&self, s: f64) -> f64 {
        match self {
            Distortion::Identity => s,
            Distortion::Sqrt => s.sqrt(),
            Distortion::Power(a) => s.powf(*a),
            Distortion::Table { knots, values } => {
                let n = knots.len();
                let i = knots.partition_point(|&k| k <= s).clamp(1, n - 1);
                let (k0, k1) = (knots[i - 1], knots[i]);
                let (v0, v1) = (values[i - 1], values[i]);
                v0 + (v1 - v0) * (s - k0) / (k1 - k0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Capacity {
    pub distortion: Distortion,
}

impl Capacity {
    pub fn new(distortion: Distortion) -> Self {
        Capacity { distortion }
    }

    pub fn lebesgue() -> Self {
        Capacity::new(Distortion::Identity)
    }

    pub fn sqrt() -> Self {
        Capacity::new(Distortion::Sqrt)
    }

    pub fn is_lebesgue(&self) -> bool {
        self.distortion == Distortion::Identity
    }

    /// `gamma(measure)`.
    pub fn evaluate(&self, lebesgue_measure: f64) -> Result<f64> {
        if lebesgue_measure.is_nan() || lebesgue_measure < 0.0 {
            return Err(Error::Domain(format!(
                "capacity evaluated at negative measure {lebesgue_measure}"
            )));
        }
        Ok(self.distortion.apply(lebesgue_measure))
    }

    #[inline]
    pub(crate) fn of(&self, measure: f64) -> f64 {
        self.distortion.apply(measure)
    }
}

/// `mu(A u B) + mu(A n B) - mu(A) - mu(B)` for cell sets given as membership
/// flags on a common grid with cell width `h`. Positive values violate
/// submodularity.
pub fn submodularity_margin(cap: &Capacity, a: &[bool], b: &[bool], h: f64) -> f64 {
    let count = |p: &dyn Fn(bool, bool) -> bool| {
        a.iter().zip(b).filter(|(&x, &y)| p(x, y)).count() as f64 * h
    };
    let ma = count(&|x, _| x);
    let mb = count(&|_, y| y);
    let mu = count(&|x, y| x || y);
    let mi = count(&|x, y| x && y);
    cap.of(mu) + cap.of(mi) - cap.of(ma) - cap.of(mb)
}

fn indicator(set: &[bool]) -> FunctionSpec {
    FunctionSpec::Table(set.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
}

fn random_union(rng: &mut impl Rng, m: usize) -> Vec<bool> {
    let mut set = vec![false; m];
    let pieces = rng.random_range(1..=3);
    for _ in 0..pieces {
        let start = rng.random_range(0..m);
        let len = rng.random_range(1..=m.div_ceil(2));
        for c in set.iter_mut().skip(start).take(len) {
            *c = true;
        }
    }
    set
}

/// Checks `mu(A u B) + mu(A n B) <= mu(A) + mu(B)` on `trials` random pairs of
/// cell unions of `grid`, plus every pair of subsets of an 8-cell partition of
/// the same interval (the whole grid when it has at most 8 cells).
pub fn submodularity_probe(cap: &Capacity, grid: &Grid, trials: usize, seed: u64) -> PropertyReport {
    let mut tracker = MarginTracker::new(SUBMODULARITY_TOL);

    let coarse = if grid.cells() <= 8 {
        *grid
    } else {
        Grid::new(grid.a(), grid.b(), 8).expect("valid interval")
    };
    let k = coarse.cells();
    let h = coarse.h();
    let bits = |mask: u32| -> Vec<bool> { (0..k).map(|i| mask >> i & 1 == 1).collect() };
    for sa in 0..(1u32 << k) {
        let a = bits(sa);
        for sb in 0..(1u32 << k) {
            let b = bits(sb);
            tracker.trial();
            let margin = submodularity_margin(cap, &a, &b, h);
            tracker.observe(margin, |m| {
                Witness::new(m).input("A", indicator(&a)).input("B", indicator(&b))
            });
        }
    }

    if grid.cells() > 8 {
        for t in 0..trials {
            let mut r = rng::trial_rng(seed, t as u64);
            let a = random_union(&mut r, grid.cells());
            let b = random_union(&mut r, grid.cells());
            tracker.trial();
            let margin = submodularity_margin(cap, &a, &b, grid.h());
            tracker.observe(margin, |m| {
                Witness::new(m).input("A", indicator(&a)).input("B", indicator(&b))
            });
        }
    }
    tracker.finish(Property::Submodularity, cap.to_string())
}

impl fmt::Display for Distortion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distortion::Identity => write!(f, "id"),
            Distortion::Sqrt => write!(f, "sqrt"),
            Distortion::Power(a) => write!(f, "pow:{a}"),
            Distortion::Table { knots, values } => {
                let pairs: Vec<String> = knots
                    .iter()
                    .zip(values)
                    .map(|(k, v)| format!("{k},{v}"))
                    .collect();
                write!(f, "table:{}", pairs.join(";"))
            }
        }
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.distortion.fmt(f)
    }
}

impl FromStr for Capacity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(Capacity::new(parse_distortion(s)?))
    }
}

impl FromStr for Distortion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_distortion(s)
    }
}

fn parse_distortion(s: &str) -> Result<Distortion> {
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (s, None),
    };
    let acol = kind.chars().count() + 2;
    match (kind.trim(), arg) {
        ("id", None) | ("identity", None) | ("lebesgue", None) => Ok(Distortion::Identity),
        ("sqrt", None) => Ok(Distortion::Sqrt),
        ("pow", Some(a)) => {
            let alpha = text::parse_f64(a, acol)?;
            Distortion::power(alpha).map_err(|e| Error::parse(acol, e.to_string()))
        }
        ("table", Some(a)) => {
            let mut knots = Vec::new();
            let mut values = Vec::new();
            let mut col = acol;
            for pair in a.split(';') {
                let (k, v) = pair
                    .split_once(',')
                    .ok_or_else(|| Error::parse(col, format!("expected `knot,value`, found `{pair}`")))?;
                knots.push(text::parse_f64(k, col)?);
                values.push(text::parse_f64(v, col + k.chars().count() + 1)?);
                col += pair.chars().count() + 1;
            }
            Distortion::table(knots, values).map_err(|e| Error::parse(acol, e.to_string()))
        }
        (k, _) => Err(Error::parse(1, format!("unknown capacity `{k}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn evaluate_examples() {
        let s = Capacity::sqrt();
        assert_eq!(s.evaluate(1.0).unwrap(), 1.0);
        assert_eq!(s.evaluate(0.25).unwrap(), 0.5);
        assert_eq!(Capacity::lebesgue().evaluate(0.37).unwrap(), 0.37);
        assert!(matches!(s.evaluate(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn normalization() {
        for c in ["id", "sqrt", "pow:0.5", "pow:2", "table:0,0;0.5,0.8;1,1"] {
            let cap: Capacity = c.parse().unwrap();
            assert_eq!(cap.evaluate(0.0).unwrap(), 0.0, "{c}");
        }
    }

    #[test]
    fn table_interpolates_and_extrapolates() {
        let cap: Capacity = "table:0,0;0.5,0.8;1,1".parse().unwrap();
        assert!((cap.evaluate(0.25).unwrap() - 0.4).abs() < 1e-15);
        assert!((cap.evaluate(0.75).unwrap() - 0.9).abs() < 1e-15);
        assert!((cap.evaluate(2.0).unwrap() - 1.4).abs() < 1e-15);
    }

    #[test]
    fn invalid_tables() {
        assert!("table:0,0".parse::<Capacity>().is_err());
        assert!("table:0,0.1;1,1".parse::<Capacity>().is_err());
        assert!("table:0,0;1,1;0.5,2".parse::<Capacity>().is_err());
        assert!("table:0,0;0.5,0.8;1,0.5".parse::<Capacity>().is_err());
        assert!("pow:-1".parse::<Capacity>().is_err());
        assert!("cube".parse::<Capacity>().is_err());
    }

    #[test]
    fn text_round_trip() {
        for c in ["id", "sqrt", "pow:0.5", "table:0,0;0.5,0.8;1,1"] {
            assert_eq!(c.parse::<Capacity>().unwrap().to_string(), c);
        }
    }

    #[test]
    fn sqrt_is_submodular() {
        let r = submodularity_probe(&Capacity::sqrt(), &Grid::unit(100).unwrap(), 200, 1);
        assert!(r.pass, "{r:?}");
        assert!(r.witness.is_none());
    }

    /// Exhaustive oracle on 8 cells, independent of the probe loop.
    #[test]
    fn sqrt_submodular_exhaustive_oracle() {
        let h = 1.0 / 8.0;
        let mut worst = f64::NEG_INFINITY;
        for a in 0u32..256 {
            for b in 0u32..256 {
                let (ca, cb) = (a.count_ones() as f64, b.count_ones() as f64);
                let (cu, ci) = ((a | b).count_ones() as f64, (a & b).count_ones() as f64);
                let m = (cu * h).sqrt() + (ci * h).sqrt() - (ca * h).sqrt() - (cb * h).sqrt();
                worst = worst.max(m);
            }
        }
        assert!(worst <= 1e-12);
        let r = submodularity_probe(&Capacity::sqrt(), &Grid::unit(8).unwrap(), 1, 0);
        assert_eq!(r.trials, 65536);
        assert!((r.worst_margin - worst).abs() < 1e-15);
    }

    #[test]
    fn identity_is_modular() {
        let r = submodularity_probe(&Capacity::lebesgue(), &Grid::unit(50).unwrap(), 300, 3);
        assert!(r.pass);
        assert!(r.worst_margin.abs() <= 1e-12);
        // disjoint pairs
        let a = [true, true, false, false];
        let b = [false, false, true, false];
        assert!(submodularity_margin(&Capacity::lebesgue(), &a, &b, 0.25).abs() <= 1e-12);
    }

    #[test]
    fn square_fails_with_documented_pair() {
        let cap = Capacity::new(Distortion::power(2.0).unwrap());
        // A = [0, 0.25], B = [0.25, 0.5] on 8 cells
        let a = [true, true, false, false, false, false, false, false];
        let b = [false, false, true, true, false, false, false, false];
        let m = submodularity_margin(&cap, &a, &b, 0.125);
        assert!((m - (0.25 - 0.125)).abs() < 1e-15);
        let r = submodularity_probe(&cap, &Grid::unit(16).unwrap(), 50, 9);
        assert!(!r.pass);
        let w = r.witness.unwrap();
        assert!(w.get("A").is_some() && w.get("B").is_some());
        assert!(w.margin > SUBMODULARITY_TOL);
    }

    proptest! {
        #[test]
        fn monotone_in_measure(s in 0.0f64..3.0, d in 0.0f64..3.0) {
            for c in ["id", "sqrt", "pow:0.3", "pow:2.5", "table:0,0;0.5,0.8;1,1"] {
                let cap: Capacity = c.parse().unwrap();
                prop_assert!(cap.evaluate(s).unwrap() <= cap.evaluate(s + d).unwrap());
            }
        }
    }

    #[test]
    fn monotone_scan() {
        let caps: Vec<Capacity> = ["id", "sqrt", "pow:0.3", "pow:2.5", "table:0,0;0.5,0.8;1,1"]
            .iter()
            .map(|c| c.parse().unwrap())
            .collect();
        for i in 0..1000 {
            let s = i as f64 / 500.0;
            let t = s + (i % 7) as f64 / 100.0;
            for cap in &caps {
                assert!(cap.evaluate(s).unwrap() <= cap.evaluate(t).unwrap());
            }
        }
    }
}
