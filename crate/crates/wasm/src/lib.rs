//! Browser bindings: apply an operator, take a Choquet integral, scan
//! convergence. Everything runs on one-dimensional grids.

use korovkin_core::analysis::{convergence_scan, harness_domain, ConvergenceMode};
use korovkin_core::choquet::{choquet_integral, CellBlock};
use korovkin_core::gridfn::{sample, Domain, DomainKind, Grid};
use korovkin_core::{Capacity, FunctionSpec, OperatorSpec};
use wasm_bindgen::prelude::*;

const MAX_CELLS: usize = 20_000;

fn parse<T: std::str::FromStr>(what: &str, text: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    text.trim().parse().map_err(|e| format!("{what}: {e}"))
}

fn check_cells(cells: usize) -> Result<usize, String> {
    if cells == 0 || cells > MAX_CELLS {
        return Err(format!("cells must be in 1..={MAX_CELLS}, got {cells}"));
    }
    Ok(cells)
}

/// Sampled target and operator output on a common grid.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Curves {
    xs: Vec<f64>,
    target: Vec<f64>,
    output: Vec<f64>,
    valid: Vec<u8>,
}

#[wasm_bindgen]
impl Curves {
    #[wasm_bindgen(getter)]
    pub fn xs(&self) -> Vec<f64> {
        self.xs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn target(&self) -> Vec<f64> {
        self.target.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn output(&self) -> Vec<f64> {
        self.output.clone()
    }

    /// 1 where the output value is trustworthy.
    #[wasm_bindgen(getter)]
    pub fn valid(&self) -> Vec<u8> {
        self.valid.clone()
    }
}

pub fn curves(op: &str, func: &str, cells: usize) -> Result<Curves, String> {
    let op: OperatorSpec = parse("operator", op)?;
    let f: FunctionSpec = parse("function", func)?;
    let domain = harness_domain(&op, DomainKind::Cube(1), check_cells(cells)?).map_err(|e| e.to_string())?;
    let target = sample(&f, &domain).map_err(|e| e.to_string())?;
    let out = op.apply_spec(&f, &domain).map_err(|e| e.to_string())?;
    let xs = domain.axis1().midpoints();
    Ok(Curves {
        xs,
        target: target.values().to_vec(),
        output: out.values().to_vec(),
        valid: out.mask().iter().map(|&b| u8::from(b)).collect(),
    })
}

pub fn integral(func: &str, cap: &str, a: f64, b: f64, cells: usize) -> Result<f64, String> {
    let f: FunctionSpec = parse("function", func)?;
    let cap: Capacity = parse("capacity", cap)?;
    let grid = Grid::new(a, b, check_cells(cells)?).map_err(|e| e.to_string())?;
    let values = sample(&f, &Domain::Line(grid)).map_err(|e| e.to_string())?;
    let block = CellBlock::new(values.into_values(), grid.h()).map_err(|e| e.to_string())?;
    choquet_integral(&block, &cap).map_err(|e| e.to_string())
}

/// Error per level of a convergence scan.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Scan {
    ns: Vec<u32>,
    errors: Vec<f64>,
    converges: bool,
}

#[wasm_bindgen]
impl Scan {
    #[wasm_bindgen(getter)]
    pub fn ns(&self) -> Vec<u32> {
        self.ns.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn errors(&self) -> Vec<f64> {
        self.errors.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn converges(&self) -> bool {
        self.converges
    }
}

pub fn scan(op: &str, func: &str, ns: &str, mode: &str, cells: usize) -> Result<Scan, String> {
    let op: OperatorSpec = parse("operator", op)?;
    let f: FunctionSpec = parse("function", func)?;
    let mode: ConvergenceMode = parse("mode", mode)?;
    let ns = ns
        .split(',')
        .map(|t| parse::<usize>("n list", t))
        .collect::<Result<Vec<_>, _>>()?;
    let domain = harness_domain(&op, DomainKind::Cube(1), check_cells(cells)?).map_err(|e| e.to_string())?;
    let report = convergence_scan(&op, &f, &domain, &ns, mode).map_err(|e| e.to_string())?;
    Ok(Scan {
        ns: report.rows.iter().map(|r| r.n as u32).collect(),
        errors: report.errors(),
        converges: report.converges(),
    })
}

#[wasm_bindgen(js_name = applyOperator)]
pub fn apply_operator(op: &str, func: &str, cells: usize) -> Result<Curves, JsError> {
    curves(op, func, cells).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = choquetIntegral)]
pub fn choquet_integral_js(func: &str, cap: &str, a: f64, b: f64, cells: usize) -> Result<f64, JsError> {
    integral(func, cap, a, b, cells).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = convergenceScan)]
pub fn convergence_scan_js(op: &str, func: &str, ns: &str, mode: &str, cells: usize) -> Result<Scan, JsError> {
    scan(op, func, ns, mode, cells).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bk1_first_moment() {
        let c = curves("bk1:n=10", "pr:1", 110).unwrap();
        assert_eq!(c.xs.len(), 110);
        assert!(c.valid.iter().all(|&v| v == 1));
        for (x, o) in c.xs.iter().zip(&c.output) {
            assert!((o - (20.0 * x + 1.0) / 22.0).abs() < 1e-9);
        }
    }

    #[test]
    fn szasz_uses_its_half_line_window() {
        let c = curves("szasz:n=20,cap=id,xmax=4", "const:1", 40).unwrap();
        assert!((c.xs[39] - 3.95).abs() < 1e-12);
    }

    #[test]
    fn sqrt_integral_of_identity() {
        let v = integral("pr:1", "sqrt", 0.0, 1.0, 20_000).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn scan_reports_levels_in_order() {
        let s = scan("bk1", "sq", "5,20,80", "pointwise", 400).unwrap();
        assert_eq!(s.ns, vec![5, 20, 80]);
        assert!(s.converges);
        assert!(s.errors.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn errors_name_the_bad_field() {
        assert!(curves("bk9:n=1", "sq", 10).unwrap_err().starts_with("operator:"));
        assert!(integral("sq", "nope", 0.0, 1.0, 10).unwrap_err().starts_with("capacity:"));
        assert!(scan("bk1", "sq", "5,x", "lp:p=2", 10).unwrap_err().starts_with("n list:"));
        assert!(curves("bk1", "sq", 0).is_err());
    }
}
