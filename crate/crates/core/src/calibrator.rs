//! Interval backtest of the four-constant broker rule
//! `V_B = −c Q_B − g Q_I + h V_I + f V_U` and its calibration on day-by-day
//! trade tapes.
//!
//! A tape stores, per interval, the mid at the interval start and the
//! informed and uninformed volumes traded over it. Execution prices are
//! reconstructed from the mid and the volume with the impact rule
//! `Ŝ = S + k·V/Δ`, so tapes only need `(S, V_I, V_U)`.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{solve, BrokerCoefficients};
use crate::error::{Error, Result};
use crate::params::{ModelParams, ValidatedParams};
use crate::scalar::{mean_and_std_error, KahanSum, Real};
use crate::simulator::{exogenous_path, ExoPoint, Scheme};

/// Weights of the interval rule. `c` and `g` are per interval, `h` and `f`
/// are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StrategyConstants<T> {
    pub c: T,
    pub g: T,
    pub h: T,
    pub f: T,
}

impl<T: Real> StrategyConstants<T> {
    pub fn new(c: T, g: T, h: T, f: T) -> Self {
        Self { c, g, h, f }
    }

    /// Interval version of the closed-form strategy: `(CΔ, GΔ, H, F)`.
    pub fn theoretical(bc: &BrokerCoefficients<T>, delta: T) -> Self {
        Self {
            c: bc.own_inventory * delta,
            g: bc.client_inventory_flow_form * delta,
            h: bc.informed_flow,
            f: bc.uninformed_hedge,
        }
    }

    pub fn to_array(self) -> [T; 4] {
        [self.c, self.g, self.h, self.f]
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// `c, h, f >= 0` and everything finite.
    pub fn is_admissible(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
            && self.c >= T::zero()
            && self.h >= T::zero()
            && self.f >= T::zero()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_admissible() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "strategy constants need finite values with c, h, f >= 0: {self:?}"
            )))
        }
    }
}

/// One interval of a tape: the mid at its start and the client volumes over it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Record<T> {
    pub t: T,
    pub s: T,
    pub v_i: T,
    pub v_u: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session<T> {
    pub records: Vec<Record<T>>,
    /// Mid at the end of the last interval, used to mark the terminal inventory.
    pub close: T,
}

/// Tape metadata needed to rebuild execution prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta<T> {
    pub delta: T,
    pub k_i: T,
    pub k_u: T,
    pub k_b: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSet<T> {
    pub meta: SessionMeta<T>,
    pub days: Vec<Session<T>>,
}

/// Broker preferences entering the performance functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Penalties<T> {
    pub a_b: T,
    pub phi_b: T,
}

impl<T: Real> Penalties<T> {
    pub fn from_params(p: &ModelParams<T>) -> Self {
        Self {
            a_b: p.broker.a_b,
            phi_b: p.broker.phi_b,
        }
    }
}

fn check_spacing<T: Real>(meta: &SessionMeta<T>, day: usize, s: &Session<T>) -> Result<()> {
    let d = meta.delta;
    if !(d > T::zero()) {
        return Err(Error::Data(format!("interval length must be > 0, got {d}")));
    }
    if s.records.is_empty() {
        return Err(Error::Data(format!("day {day} has no intervals")));
    }
    let tol = T::lit(1e-6) * d + T::lit(1e-12);
    for (j, w) in s.records.windows(2).enumerate() {
        let gap = w[1].t - w[0].t;
        if !((gap - d).abs() <= tol) {
            return Err(Error::Data(format!(
                "day {day}: records {} and {} are {gap} apart, expected Δ = {d}",
                j + 1,
                j + 2
            )));
        }
    }
    Ok(())
}

impl<T: Real> SessionSet<T> {
    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    /// Checks spacing of every day and that there is at least one day.
    pub fn validate(&self) -> Result<()> {
        if self.days.is_empty() {
            return Err(Error::Data("session set has no days".into()));
        }
        for (i, s) in self.days.iter().enumerate() {
            check_spacing(&self.meta, i, s)?;
        }
        Ok(())
    }
}

/// Terminal state and performance of one backtested day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DayResult<T> {
    pub p: T,
    pub q_b: T,
    pub x_b: T,
    pub q_i: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestResult<T> {
    /// Mean of the per-day performances.
    pub p: T,
    pub per_day: Vec<T>,
    pub days: Vec<DayResult<T>>,
}

impl<T: Real> BacktestResult<T> {
    /// Across-day standard error of `p`.
    pub fn std_error(&self) -> T {
        mean_and_std_error(&self.per_day).1
    }
}

/// Runs the interval rule over one day from flat inventories and cash.
pub fn backtest_day<T: Real>(
    meta: &SessionMeta<T>,
    session: &Session<T>,
    k: &StrategyConstants<T>,
    pen: &Penalties<T>,
) -> Result<DayResult<T>> {
    check_spacing(meta, 0, session)?;
    Ok(backtest_unchecked(meta, session, k, pen))
}

fn backtest_unchecked<T: Real>(
    meta: &SessionMeta<T>,
    session: &Session<T>,
    k: &StrategyConstants<T>,
    pen: &Penalties<T>,
) -> DayResult<T> {
    let inv_delta = T::one() / meta.delta;
    let (mut x, mut q_b, mut q_i) = (KahanSum::new(), T::zero(), T::zero());
    let mut penalty = KahanSum::new();
    for r in &session.records {
        let v_b = -k.c * q_b - k.g * q_i + k.h * r.v_i + k.f * r.v_u;
        q_i = q_i + r.v_i;
        q_b = q_b - r.v_i - r.v_u + v_b;
        let exec_i = r.s + meta.k_i * r.v_i * inv_delta;
        let exec_u = r.s + meta.k_u * r.v_u * inv_delta;
        let exec_b = r.s + meta.k_b * v_b * inv_delta;
        x.add(r.v_i * exec_i + r.v_u * exec_u - v_b * exec_b);
        penalty.add(q_b * q_b * meta.delta);
    }
    let x = x.total();
    DayResult {
        p: x + q_b * session.close - pen.a_b * q_b * q_b - pen.phi_b * penalty.total(),
        q_b,
        x_b: x,
        q_i,
    }
}

/// Mean of `xs` that does not depend on their order: values are sorted
/// before the compensated sum.
fn order_free_mean<T: Real>(xs: &[T]) -> T {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v.into_iter().collect::<KahanSum<T>>().total() / T::from_usize(xs.len()).unwrap()
}

/// `P = Σ P^i / Ñ` over all days.
pub fn evaluate_p<T: Real>(
    sessions: &SessionSet<T>,
    k: &StrategyConstants<T>,
    pen: &Penalties<T>,
) -> Result<BacktestResult<T>> {
    sessions.validate()?;
    Ok(evaluate_unchecked(sessions, k, pen))
}

fn evaluate_unchecked<T: Real>(
    sessions: &SessionSet<T>,
    k: &StrategyConstants<T>,
    pen: &Penalties<T>,
) -> BacktestResult<T> {
    let days: Vec<DayResult<T>> = sessions
        .days
        .par_iter()
        .map(|s| backtest_unchecked(&sessions.meta, s, k, pen))
        .collect();
    let per_day: Vec<T> = days.iter().map(|d| d.p).collect();
    BacktestResult {
        p: order_free_mean(&per_day),
        per_day,
        days,
    }
}

/// Builds one day's tape from an exogenous path sampled every `stride`
/// points, with the informed trader on `rate(α, Q_I)` held over each interval.
pub fn session_from_path<T: Real>(
    path: &[ExoPoint<T>],
    stride: usize,
    delta: T,
    informed_rate: impl Fn(T, T) -> T,
) -> Session<T> {
    let stride = stride.max(1);
    let m = (path.len().saturating_sub(1)) / stride;
    let mut q_i = T::zero();
    let mut records = Vec::with_capacity(m);
    for j in 0..m {
        let e = &path[j * stride];
        let v_i = informed_rate(e.alpha, q_i) * delta;
        records.push(Record {
            t: T::from_usize(j).unwrap() * delta,
            s: e.s,
            v_i,
            v_u: e.nu_u * delta,
        });
        q_i = q_i + v_i;
    }
    Session {
        records,
        close: path[m * stride].s,
    }
}

/// Synthetic tapes: `n_days` independent days of `m_intervals` intervals,
/// informed trader on the closed-form policy, exact OU factors. Day `i`
/// uses random stream `i` of `seed`.
pub fn generate_sessions<T: Real>(
    p: &ValidatedParams<T>,
    n_days: usize,
    delta: T,
    m_intervals: usize,
    seed: u64,
) -> Result<SessionSet<T>> {
    if !(delta > T::zero()) || !delta.is_finite() {
        return Err(Error::Config(format!("delta must be > 0, got {delta}")));
    }
    if n_days == 0 || m_intervals == 0 {
        return Err(Error::Config(
            "need at least one day and one interval".into(),
        ));
    }
    let ic = solve(p).informed;
    let m = *p.params();
    let days = (0..n_days as u64)
        .into_par_iter()
        .map(|day| {
            let path = exogenous_path(&m, delta, m_intervals, Scheme::ExactOu, seed, day);
            session_from_path(&path, 1, delta, |a, q| ic.rate(a, q))
        })
        .collect();
    Ok(SessionSet {
        meta: SessionMeta {
            delta,
            k_i: m.informed.k_i,
            k_u: m.broker.k_u,
            k_b: m.broker.k_b,
        },
        days,
    })
}

// ---------------------------------------------------------------------------
// Session files

pub const SESSION_HEADER: [&str; 5] = ["day", "t", "S", "V_I", "V_U"];

/// Sidecar metadata path: `tape.csv` → `tape.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes the tape as CSV plus its metadata sidecar. Each day ends with a
/// close row whose volume fields are empty.
pub fn write_sessions<T: Real>(set: &SessionSet<T>, csv_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record(SESSION_HEADER)?;
    let d = set.meta.delta;
    for (i, day) in set.days.iter().enumerate() {
        let id = i.to_string();
        for r in &day.records {
            w.write_record([
                id.as_str(),
                &r.t.to_string(),
                &r.s.to_string(),
                &r.v_i.to_string(),
                &r.v_u.to_string(),
            ])?;
        }
        let t_close = day.records.last().map_or(T::zero(), |r| r.t + d);
        w.write_record([
            id.as_str(),
            &t_close.to_string(),
            &day.close.to_string(),
            "",
            "",
        ])?;
    }
    w.flush()?;
    let meta = SessionMeta {
        delta: set.meta.delta.to_f64_lossy(),
        k_i: set.meta.k_i.to_f64_lossy(),
        k_u: set.meta.k_u.to_f64_lossy(),
        k_b: set.meta.k_b.to_f64_lossy(),
    };
    let mut f = File::create(meta_path(csv_path))?;
    serde_json::to_writer_pretty(&mut f, &meta).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(f)?;
    Ok(())
}

fn parse_field<T: Real>(s: &str, line: usize, name: &str) -> Result<T> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("{name}: cannot parse {s:?} as a number"),
    })?;
    Ok(T::lit(v))
}

/// Reads a tape written by [`write_sessions`] (or any CSV in that layout)
/// and validates its spacing.
pub fn read_sessions<T: Real>(csv_path: &Path) -> Result<SessionSet<T>> {
    let meta_file = File::open(meta_path(csv_path))
        .map_err(|e| Error::Io(format!("{}: {e}", meta_path(csv_path).display())))?;
    let m: SessionMeta<f64> = serde_json::from_reader(BufReader::new(meta_file))
        .map_err(|e| Error::Data(format!("bad session metadata: {e}")))?;
    let meta = SessionMeta {
        delta: T::lit(m.delta),
        k_i: T::lit(m.k_i),
        k_u: T::lit(m.k_u),
        k_b: T::lit(m.k_b),
    };

    let mut rdr = csv::Reader::from_path(csv_path)?;
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header != SESSION_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "expected header {}, got {}",
                SESSION_HEADER.join(","),
                header.join(",")
            ),
        });
    }

    let mut days = Vec::new();
    let mut current: Option<(String, Vec<Record<T>>)> = None;
    let mut seen = std::collections::HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row?;
        if row.len() != 5 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 5 fields, got {}", row.len()),
            });
        }
        let day = row[0].trim().to_string();
        let t = parse_field(&row[1], line, "t")?;
        let s = parse_field(&row[2], line, "S")?;
        let is_close = row[3].trim().is_empty() && row[4].trim().is_empty();
        let (label, records) = current.get_or_insert_with(|| (day.clone(), Vec::new()));
        if *label != day {
            return Err(Error::Data(format!(
                "line {line}: day {label} has no close row before day {day} starts"
            )));
        }
        if is_close {
            let (label, records) = current.take().unwrap();
            if !seen.insert(label.clone()) {
                return Err(Error::Data(format!("day {label} appears twice")));
            }
            days.push(Session { records, close: s });
        } else {
            let v_i = parse_field(&row[3], line, "V_I")?;
            let v_u = parse_field(&row[4], line, "V_U")?;
            records.push(Record { t, s, v_i, v_u });
        }
    }
    if let Some((label, _)) = current {
        return Err(Error::Data(format!("day {label} has no close row")));
    }
    let set = SessionSet { meta, days };
    set.validate()?;
    Ok(set)
}

// ---------------------------------------------------------------------------
// Optimization

/// Something to maximize over strategy constants.
pub trait Objective<T: Real>: Sync {
    fn evaluate(&self, k: &StrategyConstants<T>) -> T;

    /// Values at many candidates, in order. The default evaluates each one;
    /// implementations may screen faster as long as values agree with
    /// [`evaluate`](Self::evaluate) to rounding.
    fn evaluate_many(&self, ks: &[StrategyConstants<T>]) -> Vec<T> {
        ks.par_iter().map(|k| self.evaluate(k)).collect()
    }
}

/// `P` over a validated session set.
pub struct Backtest<'a, T> {
    sessions: &'a SessionSet<T>,
    pen: Penalties<T>,
}

impl<'a, T: Real> Backtest<'a, T> {
    pub fn new(sessions: &'a SessionSet<T>, pen: Penalties<T>) -> Result<Self> {
        sessions.validate()?;
        Ok(Self { sessions, pen })
    }

    /// Exact expansion of `P` as a quadratic in `θ = (1, g, h, f)` at fixed `c`.
    fn quadratic_at(&self, c: T) -> Quadratic<T> {
        let meta = &self.sessions.meta;
        let per_day: Vec<Quadratic<T>> = self
            .sessions
            .days
            .par_iter()
            .map(|s| day_quadratic(meta, s, c, &self.pen))
            .collect();
        let mut total = Quadratic::default();
        for q in &per_day {
            total.add(q);
        }
        total.scale(T::one() / T::from_usize(per_day.len()).unwrap());
        total
    }
}

impl<T: Real> Objective<T> for Backtest<'_, T> {
    fn evaluate(&self, k: &StrategyConstants<T>) -> T {
        evaluate_unchecked(self.sessions, k, &self.pen).p
    }

    fn evaluate_many(&self, ks: &[StrategyConstants<T>]) -> Vec<T> {
        // group by c; at fixed c the day performance is quadratic in (g, h, f)
        let mut cs: Vec<T> = ks.iter().map(|k| k.c).collect();
        cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cs.dedup();
        if cs.len() * 10 > ks.len() {
            return ks.par_iter().map(|k| self.evaluate(k)).collect();
        }
        let quads: Vec<(T, Quadratic<T>)> = cs.iter().map(|&c| (c, self.quadratic_at(c))).collect();
        ks.iter()
            .map(|k| {
                let q = &quads.iter().find(|(c, _)| *c == k.c).unwrap().1;
                q.eval([T::one(), k.g, k.h, k.f])
            })
            .collect()
    }
}

/// `θᵀ M θ` with `M` symmetric 4×4 (stored full).
#[derive(Debug, Clone, Copy, Default)]
struct Quadratic<T> {
    m: [[T; 4]; 4],
}

impl<T: Real> Quadratic<T> {
    fn add(&mut self, o: &Self) {
        for i in 0..4 {
            for j in 0..4 {
                self.m[i][j] = self.m[i][j] + o.m[i][j];
            }
        }
    }

    fn scale(&mut self, s: T) {
        for row in &mut self.m {
            for v in row {
                *v = *v * s;
            }
        }
    }

    /// Adds `w · u vᵀ` symmetrized.
    #[inline]
    fn add_outer(&mut self, w: T, u: &[T; 4], v: &[T; 4]) {
        let hw = w * T::half();
        for i in 0..4 {
            for j in 0..4 {
                self.m[i][j] = self.m[i][j] + hw * (u[i] * v[j] + u[j] * v[i]);
            }
        }
    }

    fn eval(&self, th: [T; 4]) -> T {
        let mut acc = T::zero();
        for i in 0..4 {
            for j in 0..4 {
                acc = acc + th[i] * self.m[i][j] * th[j];
            }
        }
        acc
    }
}

/// Quadratic form of one day's `P^i` at fixed `c`. Inventory and volumes are
/// affine in `θ = (1, g, h, f)` and carried as coefficient vectors.
fn day_quadratic<T: Real>(
    meta: &SessionMeta<T>,
    s: &Session<T>,
    c: T,
    pen: &Penalties<T>,
) -> Quadratic<T> {
    let z = T::zero();
    let one = [T::one(), z, z, z];
    let inv_delta = T::one() / meta.delta;
    let mut q_b = [z; 4];
    let mut q_i = z;
    let mut out = Quadratic::default();
    let mut penalty = Quadratic::default();
    for r in &s.records {
        let mut v_b = [z, -q_i, r.v_i, r.v_u];
        for (vb, qb) in v_b.iter_mut().zip(&q_b) {
            *vb = *vb - c * *qb;
        }
        q_i = q_i + r.v_i;
        for (qb, vb) in q_b.iter_mut().zip(&v_b) {
            *qb = *qb + *vb;
        }
        q_b[0] = q_b[0] - r.v_i - r.v_u;
        // client cash is θ-free; the broker's lit trade costs v_b (S + k_B v_b / Δ)
        let client = r.v_i * (r.s + meta.k_i * r.v_i * inv_delta)
            + r.v_u * (r.s + meta.k_u * r.v_u * inv_delta);
        out.add_outer(client, &one, &one);
        out.add_outer(-r.s, &one, &v_b);
        out.add_outer(-meta.k_b * inv_delta, &v_b, &v_b);
        penalty.add_outer(meta.delta, &q_b, &q_b);
    }
    out.add_outer(s.close, &one, &q_b);
    out.add_outer(-pen.a_b, &q_b, &q_b);
    penalty.scale(-pen.phi_b);
    out.add(&penalty);
    out
}

/// Search box of the grid stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis<T> {
    pub lo: T,
    pub hi: T,
    pub n: usize,
}

impl<T: Real> Axis<T> {
    pub fn new(lo: T, hi: T, n: usize) -> Self {
        Self { lo, hi, n }
    }

    pub fn point(v: T) -> Self {
        Self { lo: v, hi: v, n: 1 }
    }

    pub fn values(&self) -> Vec<T> {
        if self.n <= 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / T::from_usize(self.n - 1).unwrap();
        (0..self.n)
            .map(|i| {
                if i + 1 == self.n {
                    self.hi
                } else {
                    self.lo + step * T::from_usize(i).unwrap()
                }
            })
            .collect()
    }

    fn span(&self) -> T {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec<T> {
    pub c: Axis<T>,
    pub g: Axis<T>,
    pub h: Axis<T>,
    pub f: Axis<T>,
}

impl<T: Real> GridSpec<T> {
    /// `c ∈ [0, 10Δ]` (11), `g ∈ [−10Δ, 10Δ]` (21), `h ∈ [0, 2]` (21),
    /// `f ∈ [0, 1]` (21).
    pub fn default_for(delta: T) -> Self {
        let ten = T::lit(10.0) * delta;
        Self {
            c: Axis::new(T::zero(), ten, 11),
            g: Axis::new(-ten, ten, 21),
            h: Axis::new(T::zero(), T::two(), 21),
            f: Axis::new(T::zero(), T::one(), 21),
        }
    }

    /// Box collapsed onto one point.
    pub fn at(k: &StrategyConstants<T>) -> Self {
        Self {
            c: Axis::point(k.c),
            g: Axis::point(k.g),
            h: Axis::point(k.h),
            f: Axis::point(k.f),
        }
    }

    fn axes(&self) -> [&Axis<T>; 4] {
        [&self.c, &self.g, &self.h, &self.f]
    }

    pub fn validate(&self) -> Result<()> {
        for a in self.axes() {
            if a.n == 0 || !a.lo.is_finite() || !a.hi.is_finite() || a.hi < a.lo {
                return Err(Error::Config(format!("bad grid axis {a:?}")));
            }
        }
        Ok(())
    }

    /// Row-major candidates (c slowest, f fastest).
    pub fn candidates(&self) -> Vec<StrategyConstants<T>> {
        let [c, g, h, f] = self.axes().map(Axis::values);
        let mut out = Vec::with_capacity(c.len() * g.len() * h.len() * f.len());
        for &c in &c {
            for &g in &g {
                for &h in &h {
                    for &f in &f {
                        out.push(StrategyConstants::new(c, g, h, f));
                    }
                }
            }
        }
        out
    }

    /// Per-axis length scale for the simplex: the box span, or `fallback`
    /// on collapsed axes.
    fn scales(&self, fallback: [T; 4]) -> [T; 4] {
        let axes = self.axes();
        std::array::from_fn(|i| {
            let s = axes[i].span();
            if s > T::zero() {
                s
            } else {
                fallback[i]
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Grid,
    Simplex,
    GridThenSimplex,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Method::Grid),
            "simplex" => Ok(Method::Simplex),
            "grid_then_simplex" | "grid-then-simplex" => Ok(Method::GridThenSimplex),
            _ => Err(Error::Config(format!(
                "unknown method {s:?} (grid, simplex, grid_then_simplex)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimplexOptions {
    /// Stop once every vertex is this close to the best, in box-scaled units.
    pub diameter_tol: f64,
    pub max_iter: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            diameter_tol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry<T> {
    pub k: StrategyConstants<T>,
    pub p: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptResult<T> {
    pub best: StrategyConstants<T>,
    pub p_best: T,
    pub trace: Vec<TraceEntry<T>>,
    pub method: String,
    pub simplex_iterations: usize,
}

impl<T: Real> OptResult<T> {
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "c,g,h,f,P")?;
        for e in &self.trace {
            let k = e.k;
            writeln!(w, "{},{},{},{},{}", k.c, k.g, k.h, k.f, e.p)?;
        }
        Ok(())
    }
}

fn argmax<T: Real>(trace: &[TraceEntry<T>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in trace.iter().enumerate() {
        match best {
            Some(b) if !(e.p > trace[b].p) => {}
            _ if e.p.is_nan() => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Grid screen: admissible candidates evaluated in bulk, then the leader
/// re-evaluated directly until the trace maximum is a direct value.
fn grid_stage<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    grid: &GridSpec<T>,
    trace: &mut Vec<TraceEntry<T>>,
) -> Result<()> {
    grid.validate()?;
    let cands: Vec<StrategyConstants<T>> = grid
        .candidates()
        .into_iter()
        .filter(|k| k.is_admissible())
        .collect();
    if cands.is_empty() {
        return Err(Error::Opt(
            "every grid candidate violates c, h, f >= 0".into(),
        ));
    }
    let start = trace.len();
    let values = obj.evaluate_many(&cands);
    trace.extend(
        cands
            .into_iter()
            .zip(values)
            .map(|(k, p)| TraceEntry { k, p }),
    );
    let mut exact = vec![false; trace.len() - start];
    loop {
        let i = argmax(&trace[start..])
            .ok_or_else(|| Error::Opt("objective is NaN at every grid candidate".into()))?;
        if exact[i] {
            return Ok(());
        }
        trace[start + i].p = obj.evaluate(&trace[start + i].k);
        exact[i] = true;
    }
}

fn project<T: Real>(mut k: [T; 4]) -> [T; 4] {
    for i in [0, 2, 3] {
        k[i] = k[i].max(T::zero());
    }
    k
}

/// Downhill simplex (maximizing) in box-scaled coordinates, projected onto
/// `c, h, f >= 0` after every move.
fn simplex_stage<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    start: StrategyConstants<T>,
    scales: [T; 4],
    opts: &SimplexOptions,
    trace: &mut Vec<TraceEntry<T>>,
) -> usize {
    let to_k = |u: &[T; 4]| -> [T; 4] { project(std::array::from_fn(|i| u[i] * scales[i])) };
    let to_u = |k: &[T; 4]| -> [T; 4] { std::array::from_fn(|i| k[i] / scales[i]) };
    let eval = |u: [T; 4], trace: &mut Vec<TraceEntry<T>>| -> ([T; 4], T) {
        let k = to_k(&u);
        let p = obj.evaluate(&StrategyConstants::from_array(k));
        trace.push(TraceEntry {
            k: StrategyConstants::from_array(k),
            p,
        });
        // keep the vertex on the feasible set so moves start from it
        (to_u(&k), if p.is_nan() { T::neg_infinity() } else { p })
    };

    let x0 = to_u(&project(start.to_array()));
    let step = T::lit(0.05);
    let mut simplex: Vec<([T; 4], T)> = vec![eval(x0, trace)];
    for i in 0..4 {
        let mut u = x0;
        u[i] = u[i] + step;
        simplex.push(eval(u, trace));
    }

    let tol = T::lit(opts.diameter_tol);
    let n = T::lit(4.0);
    let mut iter = 0;
    while iter < opts.max_iter {
        // best first; stable sort keeps ties in insertion order
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .map(|(u, _)| {
                (0..4)
                    .map(|i| (u[i] - best[i]).abs())
                    .fold(T::zero(), T::max)
            })
            .fold(T::zero(), T::max);
        if diameter < tol {
            break;
        }
        iter += 1;

        let mut centroid = [T::zero(); 4];
        for (u, _) in &simplex[..4] {
            for i in 0..4 {
                centroid[i] = centroid[i] + u[i] / n;
            }
        }
        let worst = simplex[4];
        let along = |t: T| -> [T; 4] {
            std::array::from_fn(|i| centroid[i] + t * (worst.0[i] - centroid[i]))
        };

        let refl = eval(along(-T::one()), trace);
        if refl.1 > simplex[0].1 {
            let exp = eval(along(-T::two()), trace);
            simplex[4] = if exp.1 > refl.1 { exp } else { refl };
        } else if refl.1 > simplex[3].1 {
            simplex[4] = refl;
        } else {
            let contracted = if refl.1 > worst.1 {
                eval(along(-T::half()), trace)
            } else {
                eval(along(T::half()), trace)
            };
            if contracted.1 > worst.1.max(refl.1) {
                simplex[4] = contracted;
            } else {
                for v in simplex.iter_mut().skip(1) {
                    let u = std::array::from_fn(|i| best[i] + T::half() * (v.0[i] - best[i]));
                    *v = eval(u, trace);
                }
            }
        }
    }
    iter
}

/// Maximizes `obj` with the chosen method. The grid box also sets the
/// length scales of the simplex.
pub fn optimize_objective<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    init: StrategyConstants<T>,
    method: Method,
    grid: &GridSpec<T>,
    opts: &SimplexOptions,
) -> Result<OptResult<T>> {
    if !init.to_array().iter().all(|v| v.is_finite()) {
        return Err(Error::Config(format!(
            "initial constants not finite: {init:?}"
        )));
    }
    let mut trace = Vec::new();
    let mut iterations = 0;
    let fallback = {
        let a = init.to_array();
        std::array::from_fn(|i| {
            if a[i] != T::zero() {
                a[i].abs()
            } else {
                T::one()
            }
        })
    };
    let scales = grid.scales(fallback);
    let description = match method {
        Method::Grid => {
            grid_stage(obj, grid, &mut trace)?;
            format!("grid({} candidates)", trace.len())
        }
        Method::Simplex => {
            iterations = simplex_stage(obj, init, scales, opts, &mut trace);
            format!("simplex({iterations} iterations)")
        }
        Method::GridThenSimplex => {
            grid_stage(obj, grid, &mut trace)?;
            let n_grid = trace.len();
            let start = trace[argmax(&trace).unwrap()].k;
            iterations = simplex_stage(obj, start, scales, opts, &mut trace);
            format!("grid({n_grid} candidates)+simplex({iterations} iterations)")
        }
    };
    let i = argmax(&trace).ok_or_else(|| Error::Opt("objective is NaN everywhere".into()))?;
    Ok(OptResult {
        best: trace[i].k,
        p_best: trace[i].p,
        trace,
        method: description,
        simplex_iterations: iterations,
    })
}

/// Maximizes `P` over the session set.
pub fn optimize<T: Real>(
    sessions: &SessionSet<T>,
    pen: &Penalties<T>,
    init: StrategyConstants<T>,
    method: Method,
    grid: &GridSpec<T>,
    opts: &SimplexOptions,
) -> Result<OptResult<T>> {
    let obj = Backtest::new(sessions, *pen)?;
    optimize_objective(&obj, init, method, grid, opts)
}

#[cfg(test)]
mod tests;
