use std::fmt;

use crate::error::{Error, Result};
use crate::gridfn::FunctionSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Property {
    Sublinearity,
    Translatability,
    Monotonicity,
    ComonotoneAdditivity,
    OrderLipschitz,
    /// `||T f - T g|| <= ||T|| ||f - g||` for monotone sublinear `T`.
    KreinLipschitz,
    /// `||T f - T g|| <= 2 ||T|| ||f - g||` for continuous sublinear `T`.
    FactorTwoLipschitz,
    Submodularity,
    Subadditivity,
}

impl Property {
    pub fn name(&self) -> &'static str {
        match self {
            Property::Sublinearity => "sublinearity",
            Property::Translatability => "translatability",
            Property::Monotonicity => "monotonicity",
            Property::ComonotoneAdditivity => "comonotone_additivity",
            Property::OrderLipschitz => "order_lipschitz",
            Property::KreinLipschitz => "krein_lipschitz",
            Property::FactorTwoLipschitz => "factor_two_lipschitz",
            Property::Submodularity => "submodularity",
            Property::Subadditivity => "subadditivity",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inputs of the first trial that violated a property.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    /// Named inputs, e.g. `("f", const:1)`; set witnesses use indicator tables.
    pub inputs: Vec<(String, FunctionSpec)>,
    pub alpha: Option<f64>,
    pub cell: Option<usize>,
    pub margin: f64,
}

impl Witness {
    pub fn new(margin: f64) -> Self {
        Witness {
            inputs: Vec::new(),
            alpha: None,
            cell: None,
            margin,
        }
    }

    pub fn input(mut self, name: &str, spec: FunctionSpec) -> Self {
        self.inputs.push((name.to_string(), spec));
        self
    }

    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn cell(mut self, cell: usize) -> Self {
        self.cell = Some(cell);
        self
    }

    pub fn get(&self, name: &str) -> Option<&FunctionSpec> {
        self.inputs.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    /// Space separated `key=value` fields; function text forms never contain
    /// spaces, so [`Witness::parse_summary`] inverts this exactly.
    pub fn summary(&self) -> String {
        let mut parts: Vec<String> = self
            .inputs
            .iter()
            .map(|(n, s)| format!("{n}={s}"))
            .collect();
        if let Some(a) = self.alpha {
            parts.push(format!("alpha={a}"));
        }
        if let Some(c) = self.cell {
            parts.push(format!("cell={c}"));
        }
        parts.push(format!("margin={}", self.margin));
        parts.join(" ")
    }

    pub fn parse_summary(s: &str) -> Result<Witness> {
        let mut w = Witness::new(0.0);
        let mut col = 1;
        for field in s.split(' ') {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::parse(col, format!("expected key=value, found `{field}`")))?;
            let vcol = col + k.chars().count() + 1;
            match k {
                "alpha" => w.alpha = Some(crate::text::parse_f64(v, vcol)?),
                "cell" => w.cell = Some(crate::text::parse_usize(v, vcol)?),
                "margin" => w.margin = crate::text::parse_f64(v, vcol)?,
                name => {
                    let spec = v
                        .parse::<FunctionSpec>()
                        .map_err(|e| e.at_offset(vcol - 1))?;
                    w.inputs.push((name.to_string(), spec));
                }
            }
            col += field.chars().count() + 1;
        }
        Ok(w)
    }
}

/// Verdict of one property check: `pass` iff `worst_margin <= tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub property: Property,
    pub subject: String,
    pub trials: usize,
    pub tol: f64,
    /// Largest violation seen; negative or zero when the inequality held with
    /// room to spare.
    pub worst_margin: f64,
    pub pass: bool,
    /// First trial whose margin exceeded `tol`.
    pub witness: Option<Witness>,
}

/// Accumulates margins across trials.
#[derive(Debug)]
pub(crate) struct MarginTracker {
    tol: f64,
    worst: f64,
    trials: usize,
    first: Option<Witness>,
}

impl MarginTracker {
    pub(crate) fn new(tol: f64) -> Self {
        MarginTracker {
            tol,
            worst: f64::NEG_INFINITY,
            trials: 0,
            first: None,
        }
    }

    pub(crate) fn trial(&mut self) {
        self.trials += 1;
    }

    /// Record a margin; `witness` is only built for the first violation.
    pub(crate) fn observe(&mut self, margin: f64, witness: impl FnOnce(f64) -> Witness) {
        // NaN margins count as violations
        let margin = if margin.is_nan() { f64::INFINITY } else { margin };
        if margin > self.worst {
            self.worst = margin;
        }
        if margin > self.tol && self.first.is_none() {
            self.first = Some(witness(margin));
        }
    }

    pub(crate) fn finish(self, property: Property, subject: impl Into<String>) -> PropertyReport {
        let worst = if self.worst == f64::NEG_INFINITY { 0.0 } else { self.worst };
        PropertyReport {
            property,
            subject: subject.into(),
            trials: self.trials,
            tol: self.tol,
            worst_margin: worst,
            pass: worst <= self.tol,
            witness: self.first,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_round_trip() {
        let w = Witness::new(2.0)
            .input("f", FunctionSpec::Constant(1.0))
            .input("g", "step:0.5@0,1".parse().unwrap())
            .alpha(2.0)
            .cell(3);
        let s = w.summary();
        assert_eq!(s, "f=const:1 g=step:0.5@0,1 alpha=2 cell=3 margin=2");
        assert_eq!(Witness::parse_summary(&s).unwrap(), w);
    }

    #[test]
    fn tracker_pass_iff_margin_within_tol() {
        let mut t = MarginTracker::new(1e-9);
        t.trial();
        t.observe(-1.0, Witness::new);
        t.observe(5e-10, Witness::new);
        let r = t.finish(Property::Monotonicity, "x");
        assert!(r.pass && r.witness.is_none());
        assert_eq!(r.worst_margin, 5e-10);

        let mut t = MarginTracker::new(1e-9);
        t.observe(0.5, |m| Witness::new(m).cell(1));
        t.observe(3.0, |m| Witness::new(m).cell(2));
        let r = t.finish(Property::Monotonicity, "x");
        assert!(!r.pass);
        assert_eq!(r.worst_margin, 3.0);
        assert_eq!(r.witness.unwrap().cell, Some(1));
    }
}
