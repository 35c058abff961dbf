//! Parameter sweeps of the value functions at a fixed initial state.
//!
//! Axis names are parameter keys (`k_I`, `phi_B`, ...), comma-separated key
//! lists that move together (`k_I,k_U`), or ratios to another key
//! (`k_U/k_B`, `k_I,k_U/k_B`), in which case the grid value multiplies the
//! denominator's base value.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::closed_form::solve;
use crate::error::{Error, Result};
use crate::params::{ModelParams, ValidatedParams, PARAM_KEYS};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Target {
    InformedValue,
    BrokerValue,
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "informed" | "informed_value" => Ok(Target::InformedValue),
            "broker" | "broker_value" => Ok(Target::BrokerValue),
            _ => Err(Error::Config(format!(
                "unknown target {s:?} (informed, broker)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridAxis<T> {
    pub param: String,
    pub min: T,
    pub max: T,
    pub count: usize,
    pub spacing: Spacing,
}

impl<T: Real> GridAxis<T> {
    pub fn linear(param: &str, min: T, max: T, count: usize) -> Self {
        Self {
            param: param.to_string(),
            min,
            max,
            count,
            spacing: Spacing::Linear,
        }
    }

    pub fn log(param: &str, min: T, max: T, count: usize) -> Self {
        Self {
            spacing: Spacing::Log,
            ..Self::linear(param, min, max, count)
        }
    }

    pub fn values(&self) -> Vec<T> {
        if self.count == 1 {
            return vec![self.min];
        }
        let last = T::from_usize(self.count - 1).unwrap();
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    return self.max;
                }
                let u = T::from_usize(i).unwrap() / last;
                match self.spacing {
                    Spacing::Linear => self.min + (self.max - self.min) * u,
                    Spacing::Log => (self.min.ln() + (self.max.ln() - self.min.ln()) * u).exp(),
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        AxisBinding::parse(&self.param)?;
        let ok_range = if self.count == 1 {
            self.min.is_finite() && self.min == self.max
        } else {
            self.min.is_finite() && self.max.is_finite() && self.min < self.max
        };
        if self.count == 0 || !ok_range {
            return Err(Error::Config(format!(
                "axis {}: need count >= 1 and min < max (min = max for one point), got [{}, {}] x {}",
                self.param, self.min, self.max, self.count
            )));
        }
        if self.spacing == Spacing::Log && !(self.min > T::zero()) {
            return Err(Error::Config(format!(
                "axis {}: log spacing needs min > 0",
                self.param
            )));
        }
        Ok(())
    }
}

/// Parsed axis name.
#[derive(Debug, Clone, PartialEq)]
struct AxisBinding {
    keys: Vec<String>,
    per: Option<String>,
}

impl AxisBinding {
    fn parse(name: &str) -> Result<Self> {
        let (lhs, per) = match name.split_once('/') {
            Some((l, r)) => (l, Some(r.trim().to_string())),
            None => (name, None),
        };
        let keys: Vec<String> = lhs.split(',').map(|k| k.trim().to_string()).collect();
        for k in keys.iter().chain(per.iter()) {
            if !PARAM_KEYS.contains(&k.as_str()) || k == "elasticity_enabled" {
                return Err(Error::Config(format!(
                    "axis {name:?}: {k:?} is not a numeric parameter key"
                )));
            }
        }
        Ok(Self { keys, per })
    }

    /// Sets the bound keys; ratios use the denominator's value in `base`.
    fn apply<T: Real>(&self, base: &ModelParams<T>, p: &mut ModelParams<T>, v: T) -> Result<()> {
        let value = match &self.per {
            Some(d) => v * base.get(d).expect("validated key"),
            None => v,
        };
        for k in &self.keys {
            p.set(k, value)?;
        }
        Ok(())
    }
}

/// State at which value functions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialState<T> {
    pub x: T,
    pub s: T,
    pub alpha: T,
    pub q_i: T,
    pub q_b: T,
    pub nu_u: T,
}

impl<T: Real> Default for InitialState<T> {
    fn default() -> Self {
        let z = T::zero();
        Self {
            x: z,
            s: T::lit(100.0),
            alpha: z,
            q_i: z,
            q_b: z,
            nu_u: z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec<T> {
    pub target: Target,
    pub axis1: GridAxis<T>,
    pub axis2: Option<GridAxis<T>>,
    /// Parameters not on an axis (and the base of ratio axes).
    pub fixed: ModelParams<T>,
    pub initial_state: InitialState<T>,
}

impl<T: Real> SweepSpec<T> {
    pub fn validate(&self) -> Result<()> {
        self.axis1.validate()?;
        if let Some(a) = &self.axis2 {
            a.validate()?;
        }
        Ok(())
    }
}

/// Why a grid point has no value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PointStatus {
    Ok,
    DomainError,
    RegimeError,
}

impl PointStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::DomainError => "domain_error",
            PointStatus::RegimeError => "regime_error",
        }
    }

    fn of(e: &Error) -> Self {
        match e {
            Error::Regime(_) => PointStatus::RegimeError,
            _ => PointStatus::DomainError,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceRow<T> {
    pub axis1: T,
    pub axis2: Option<T>,
    /// NaN unless `status` is `Ok`.
    pub value: T,
    pub status: PointStatus,
}

/// Provenance written next to every table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableMetadata {
    pub target: Target,
    pub axis1: GridAxis<f64>,
    pub axis2: Option<GridAxis<f64>>,
    pub params: Vec<(&'static str, String)>,
    pub b: f64,
    pub initial_state: InitialState<f64>,
    pub version: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceTable<T> {
    pub rows: Vec<SurfaceRow<T>>,
    pub metadata: TableMetadata,
}

fn axis_f64<T: Real>(a: &GridAxis<T>) -> GridAxis<f64> {
    GridAxis {
        param: a.param.clone(),
        min: a.min.to_f64_lossy(),
        max: a.max.to_f64_lossy(),
        count: a.count,
        spacing: a.spacing,
    }
}

fn state_f64<T: Real>(s: &InitialState<T>) -> InitialState<f64> {
    InitialState {
        x: s.x.to_f64_lossy(),
        s: s.s.to_f64_lossy(),
        alpha: s.alpha.to_f64_lossy(),
        q_i: s.q_i.to_f64_lossy(),
        q_b: s.q_b.to_f64_lossy(),
        nu_u: s.nu_u.to_f64_lossy(),
    }
}

/// Value of `target` at `state` under `p`.
pub fn value_at<T: Real>(p: &ValidatedParams<T>, target: Target, state: &InitialState<T>) -> T {
    let sol = solve(p);
    match target {
        Target::InformedValue => sol.informed.value(state.x, state.s, state.alpha, state.q_i),
        Target::BrokerValue => sol.broker.value(
            state.x,
            state.s,
            state.alpha,
            state.q_b,
            state.q_i,
            state.nu_u,
        ),
    }
}

fn point<T: Real>(
    spec: &SweepSpec<T>,
    b1: &AxisBinding,
    b2: Option<&AxisBinding>,
    v1: T,
    v2: Option<T>,
) -> SurfaceRow<T> {
    let attempt = || -> Result<T> {
        let mut p = spec.fixed;
        b1.apply(&spec.fixed, &mut p, v1)?;
        if let (Some(b), Some(v)) = (b2, v2) {
            b.apply(&spec.fixed, &mut p, v)?;
        }
        let p = p.validate()?;
        Ok(value_at(&p, spec.target, &spec.initial_state))
    };
    match attempt() {
        Ok(value) => SurfaceRow {
            axis1: v1,
            axis2: v2,
            value,
            status: PointStatus::Ok,
        },
        Err(e) => SurfaceRow {
            axis1: v1,
            axis2: v2,
            value: T::nan(),
            status: PointStatus::of(&e),
        },
    }
}

/// Evaluates the target on the grid, row-major (axis 1 outer). Invalid
/// parameter combinations are kept as flagged rows.
pub fn run_sweep<T: Real>(spec: &SweepSpec<T>) -> Result<SurfaceTable<T>> {
    spec.validate()?;
    let b1 = AxisBinding::parse(&spec.axis1.param)?;
    let b2 = spec
        .axis2
        .as_ref()
        .map(|a| AxisBinding::parse(&a.param))
        .transpose()?;
    let v1 = spec.axis1.values();
    let v2: Vec<Option<T>> = match &spec.axis2 {
        Some(a) => a.values().into_iter().map(Some).collect(),
        None => vec![None],
    };
    let grid: Vec<(T, Option<T>)> = v1
        .iter()
        .flat_map(|&a| v2.iter().map(move |&b| (a, b)))
        .collect();
    let rows = grid
        .par_iter()
        .map(|&(a, b)| point(spec, &b1, b2.as_ref(), a, b))
        .collect();
    Ok(SurfaceTable {
        rows,
        metadata: TableMetadata {
            target: spec.target,
            axis1: axis_f64(&spec.axis1),
            axis2: spec.axis2.as_ref().map(axis_f64),
            params: spec.fixed.key_values(),
            b: spec.fixed.broker.b.to_f64_lossy(),
            initial_state: state_f64(&spec.initial_state),
            version: env!("CARGO_PKG_VERSION"),
        },
    })
}

impl<T: Real> SurfaceTable<T> {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "axis1,axis2,value,status")?;
        for r in &self.rows {
            let a2 = r.axis2.map(|v| v.to_string()).unwrap_or_default();
            let v = if r.status == PointStatus::Ok {
                r.value.to_string()
            } else {
                String::new()
            };
            writeln!(w, "{},{a2},{v},{}", r.axis1, r.status.as_str())?;
        }
        Ok(())
    }

    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(&self.metadata).expect("metadata serializes")
    }

    /// Gnuplot script plotting `csv_name` (surface or curve).
    pub fn gnuplot_stub(&self, csv_name: &str) -> String {
        let m = &self.metadata;
        let label = match m.target {
            Target::InformedValue => "informed value",
            Target::BrokerValue => "broker value",
        };
        let mut s = String::new();
        let _ = writeln!(s, "set datafile separator ','");
        let _ = writeln!(s, "set key off");
        let _ = writeln!(s, "set xlabel '{}'", m.axis1.param);
        if m.axis1.spacing == Spacing::Log {
            let _ = writeln!(s, "set logscale x");
        }
        match &m.axis2 {
            Some(a2) => {
                let _ = writeln!(s, "set ylabel '{}'", a2.param);
                if a2.spacing == Spacing::Log {
                    let _ = writeln!(s, "set logscale y");
                }
                let _ = writeln!(s, "set title '{label}'");
                let _ = writeln!(s, "set view map");
                let _ = writeln!(s, "set dgrid3d {},{}", a2.count, m.axis1.count);
                let _ = writeln!(s, "set palette defined (-1 'blue', 0 'white', 1 'red')");
                let _ = writeln!(s, "splot '{csv_name}' every ::1 using 1:2:3 with pm3d");
            }
            None => {
                let _ = writeln!(s, "set ylabel '{label}'");
                let _ = writeln!(s, "plot '{csv_name}' every ::1 using 1:3 with lines");
            }
        }
        s
    }

    /// Rows with a value.
    pub fn valid(&self) -> impl Iterator<Item = &SurfaceRow<T>> {
        self.rows.iter().filter(|r| r.status == PointStatus::Ok)
    }
}

/// Built-in sweeps on top of `base`.
pub fn preset<T: Real>(name: &str, base: &ModelParams<T>) -> Result<SweepSpec<T>> {
    let l = T::lit;
    let k_i = GridAxis::linear("k_I", l(2e-4), l(2e-3), 41);
    let k_b = GridAxis::linear("k_B", l(6e-4), l(2.4e-3), 41);
    let phi_i = GridAxis::log("phi_I", l(1e-3), l(1e-1), 41);
    let phi_b = GridAxis::log("phi_B", l(1e-3), l(1e-1), 41);
    let ratio = |k: &str| GridAxis::linear(&format!("{k}/k_B"), l(0.1), l(1.0), 41);
    let (target, a1, a2) = match name {
        "fig1-informed" => (Target::InformedValue, k_i, phi_i),
        "fig1-broker" => (Target::BrokerValue, k_i, phi_i),
        "fig2-costs" => (Target::BrokerValue, k_i, k_b),
        "fig2-penalties" => (Target::BrokerValue, phi_i, phi_b),
        "fig3" => (Target::BrokerValue, ratio("k_U"), ratio("k_I")),
        _ => {
            return Err(Error::Config(format!(
                "unknown preset {name:?} ({})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(SweepSpec {
        target,
        axis1: a1,
        axis2: Some(a2),
        fixed: *base,
        initial_state: InitialState::default(),
    })
}

pub const PRESETS: [&str; 5] = [
    "fig1-informed",
    "fig1-broker",
    "fig2-costs",
    "fig2-penalties",
    "fig3",
];

// ---------------------------------------------------------------------------
// Liquidity discount curve

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscountPoint<T> {
    pub ratio: T,
    pub k_client: T,
    /// Multiplier on the uninformed-flow volatility.
    pub flow_scale: T,
    pub value: T,
    pub status: PointStatus,
    /// Client cost equal to the lit cost: uninformed flow vanishes.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscountCurve<T> {
    pub points: Vec<DiscountPoint<T>>,
    /// Best non-degenerate ratio and its value.
    pub argmax_ratio: Option<T>,
    pub max_value: Option<T>,
}

/// `ratio ∈ [lo, hi]` on `n` points.
pub fn ratio_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    GridAxis::linear("k_I", lo, hi, n).values()
}

/// Broker value at the initial state when both clients are charged
/// `ratio·k_B`, with the uninformed flow volatility scaled by
/// `(k_B − k_U)/(k_B − k_U_ref)`.
pub fn discount_curve<T: Real>(p: &ValidatedParams<T>, ratios: &[T]) -> Result<DiscountCurve<T>> {
    for &r in ratios {
        if !(r > T::zero()) || r > T::one() {
            return Err(Error::Config(format!("ratio {r} outside (0, 1]")));
        }
    }
    let base = *p.params();
    let state = InitialState::default();
    let points: Vec<DiscountPoint<T>> = ratios
        .par_iter()
        .map(|&ratio| {
            let k = ratio * base.broker.k_b;
            let mut q = base;
            q.informed.k_i = k;
            q.broker.k_u = k;
            q.flow.elasticity_enabled = true;
            let degenerate = k >= base.broker.k_b;
            let flow_scale = q.flow_scale();
            match q.validate() {
                Ok(v) => DiscountPoint {
                    ratio,
                    k_client: k,
                    flow_scale,
                    value: value_at(&v, Target::BrokerValue, &state),
                    status: PointStatus::Ok,
                    degenerate,
                },
                Err(e) => DiscountPoint {
                    ratio,
                    k_client: k,
                    flow_scale,
                    value: T::nan(),
                    status: PointStatus::of(&e),
                    degenerate,
                },
            }
        })
        .collect();
    let best = points
        .iter()
        .filter(|d| d.status == PointStatus::Ok && !d.degenerate)
        .fold(None::<&DiscountPoint<T>>, |acc, d| match acc {
            Some(b) if !(d.value > b.value) => Some(b),
            _ => Some(d),
        });
    Ok(DiscountCurve {
        argmax_ratio: best.map(|d| d.ratio),
        max_value: best.map(|d| d.value),
        points,
    })
}

impl<T: Real> DiscountCurve<T> {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "ratio,k_client,flow_scale,value,status,degenerate")?;
        for d in &self.points {
            let v = if d.status == PointStatus::Ok {
                d.value.to_string()
            } else {
                String::new()
            };
            writeln!(
                w,
                "{},{},{},{v},{},{}",
                d.ratio,
                d.k_client,
                d.flow_scale,
                d.status.as_str(),
                d.degenerate
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Shape checks

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Trend {
    Increasing,
    Decreasing,
    Flat,
    Mixed,
    /// Fewer than two distinct grid points.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityCheck<T> {
    pub label: &'static str,
    pub axis: GridAxis<T>,
    pub values: Vec<T>,
    pub expected: Trend,
    pub observed: Trend,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport<T> {
    pub checks: Vec<MonotonicityCheck<T>>,
    /// R² of the least-squares plane of broker value over (φ_I, φ_B).
    pub plane_r2: Option<T>,
}

impl<T: Real> MonotonicityReport<T> {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Grids of the shape checks; ten points each by default.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeGrids<T> {
    pub k_i: GridAxis<T>,
    pub phi_i: GridAxis<T>,
    pub phi_b: GridAxis<T>,
}

impl<T: Real> Default for ShapeGrids<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            k_i: GridAxis::linear("k_I", l(2e-4), l(2e-3), 10),
            phi_i: GridAxis::log("phi_I", l(1e-3), l(1e-1), 10),
            phi_b: GridAxis::log("phi_B", l(1e-3), l(1e-1), 10),
        }
    }
}

fn trend<T: Real>(xs: &[T]) -> Trend {
    if xs.len() < 2 {
        return Trend::Degenerate;
    }
    let scale = xs
        .iter()
        .fold(T::zero(), |m, v| m.max(v.abs()))
        .max(T::one());
    let flat_tol = T::lit(1e-12) * scale;
    let (mut up, mut down, mut flat) = (true, true, true);
    for w in xs.windows(2) {
        let d = w[1] - w[0];
        up &= d > T::zero();
        down &= d < T::zero();
        flat &= d.abs() <= flat_tol;
    }
    if flat {
        Trend::Flat
    } else if up {
        Trend::Increasing
    } else if down {
        Trend::Decreasing
    } else {
        Trend::Mixed
    }
}

fn curve<T: Real>(p: &ModelParams<T>, target: Target, axis: &GridAxis<T>) -> Result<Vec<T>> {
    let spec = SweepSpec {
        target,
        axis1: axis.clone(),
        axis2: None,
        fixed: *p,
        initial_state: InitialState::default(),
    };
    Ok(run_sweep(&spec)?.rows.iter().map(|r| r.value).collect())
}

/// Shape claims of the value surfaces: informed value strictly decreasing
/// in `k_I` and `φ_I`, broker value strictly increasing in `φ_I` and
/// strictly decreasing in `φ_B`. The plane fit is reported, not checked.
pub fn monotonicity_report<T: Real>(p: &ValidatedParams<T>) -> Result<MonotonicityReport<T>> {
    monotonicity_report_on(p, &ShapeGrids::default())
}

pub fn monotonicity_report_on<T: Real>(
    p: &ValidatedParams<T>,
    grids: &ShapeGrids<T>,
) -> Result<MonotonicityReport<T>> {
    let m = p.params();
    let cases = [
        (
            "informed value vs k_I",
            Target::InformedValue,
            &grids.k_i,
            Trend::Decreasing,
        ),
        (
            "informed value vs phi_I",
            Target::InformedValue,
            &grids.phi_i,
            Trend::Decreasing,
        ),
        (
            "broker value vs phi_I",
            Target::BrokerValue,
            &grids.phi_i,
            Trend::Increasing,
        ),
        (
            "broker value vs phi_B",
            Target::BrokerValue,
            &grids.phi_b,
            Trend::Decreasing,
        ),
    ];
    let mut checks = Vec::new();
    for (label, target, axis, expected) in cases {
        let values = curve(m, target, axis)?;
        let observed = if axis.count < 2 {
            Trend::Degenerate
        } else {
            trend(&values)
        };
        checks.push(MonotonicityCheck {
            label,
            axis: axis.clone(),
            values,
            expected,
            observed,
            pass: observed == expected,
        });
    }
    let plane_r2 = if grids.phi_i.count >= 2 && grids.phi_b.count >= 2 {
        let table = run_sweep(&SweepSpec {
            target: Target::BrokerValue,
            axis1: grids.phi_i.clone(),
            axis2: Some(grids.phi_b.clone()),
            fixed: *m,
            initial_state: InitialState::default(),
        })?;
        plane_fit_r2(&table)
    } else {
        None
    };
    Ok(MonotonicityReport { checks, plane_r2 })
}

/// R² of `value ≈ a + b·axis1 + c·axis2` over the valid rows.
pub fn plane_fit_r2<T: Real>(t: &SurfaceTable<T>) -> Option<T> {
    let pts: Vec<[f64; 3]> = t
        .valid()
        .filter_map(|r| {
            Some([
                r.axis1.to_f64_lossy(),
                r.axis2?.to_f64_lossy(),
                r.value.to_f64_lossy(),
            ])
        })
        .collect();
    if pts.len() < 4 {
        return None;
    }
    let n = pts.len() as f64;
    let mean = |i: usize| pts.iter().map(|p| p[i]).sum::<f64>() / n;
    let (mx, my, mz) = (mean(0), mean(1), mean(2));
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz, mut szz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in &pts {
        let (x, y, z) = (p[0] - mx, p[1] - my, p[2] - mz);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sxz += x * z;
        syz += y * z;
        szz += z * z;
    }
    let det = sxx * syy - sxy * sxy;
    if det.abs() < f64::MIN_POSITIVE || szz == 0.0 {
        return None;
    }
    let b = (sxz * syy - syz * sxy) / det;
    let c = (syz * sxx - sxz * sxy) / det;
    let explained = b * sxz + c * syz;
    Some(T::lit(explained / szz))
}
