//! Monte Carlo simulation of the full market under linear feedback policies.
//!
//! The exogenous processes (midprice, alpha signal, uninformed flow) do not
//! depend on either agent's trading, so one exogenous draw can drive any
//! number of broker policies. Policy comparisons use this for common random
//! numbers.
//!
//! Each path owns a ChaCha8 stream selected by `(seed, path_index)`, so
//! results do not depend on how paths are scheduled across threads. Per-path
//! results are collected in index order and reduced with compensated sums.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::closed_form::{solve, BrokerCoefficients, InformedCoefficients, Solution};
use crate::error::{Error, Result};
use crate::params::{MarketState, ModelParams, ValidatedParams};
use crate::scalar::{mean_and_std_error, KahanSum, Real};

/// Time-stepping scheme for the mean-reverting factors (α and ν_U).
/// The midprice is always stepped with Euler–Maruyama.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Scheme {
    Euler,
    /// Exact Gaussian transition of the Ornstein–Uhlenbeck factors.
    #[default]
    ExactOu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig<T> {
    pub dt: T,
    /// Truncation time of the infinite horizon.
    pub horizon: T,
    pub n_paths: usize,
    pub seed: u64,
    /// Upper bound on `exp(−β·horizon)`.
    pub discount_tail_tol: T,
    pub scheme: Scheme,
    /// Exogenous sub-steps per policy step. Runs with equal `dt / substeps`
    /// and seed see identical exogenous paths.
    pub substeps: usize,
}

impl<T: Real> SimConfig<T> {
    /// `dt = 1e-2`, exact OU steps, and the shortest horizon with
    /// `exp(−β·horizon) <= 1e-6`.
    pub fn for_params(p: &ModelParams<T>, n_paths: usize, seed: u64) -> Self {
        let tol = T::lit(1e-6);
        Self {
            dt: T::lit(1e-2),
            horizon: -tol.ln() / p.beta(),
            n_paths,
            seed,
            discount_tail_tol: tol,
            scheme: Scheme::ExactOu,
            substeps: 1,
        }
    }

    /// Short deterministic-horizon run without the discount-tail requirement.
    pub fn finite(dt: T, horizon: T, n_paths: usize, seed: u64) -> Self {
        Self {
            dt,
            horizon,
            n_paths,
            seed,
            discount_tail_tol: T::one(),
            scheme: Scheme::ExactOu,
            substeps: 1,
        }
    }

    /// Step of the exogenous grid.
    pub fn exo_dt(&self) -> T {
        self.dt / T::from_usize(self.substeps).unwrap()
    }

    fn exogenous(
        &self,
        p: &ModelParams<T>,
        start: ExoPoint<T>,
        path_index: u64,
    ) -> ExogenousProcess<T> {
        ExogenousProcess::starting_at(p, start, self.exo_dt(), self.scheme, self.seed, path_index)
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).ceil().to_usize().unwrap_or(0)
    }

    pub fn check(&self, p: &ModelParams<T>) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(Error::Config(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be >= 1".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be >= 1".into()));
        }
        let truncation = T::from_usize(self.steps()).unwrap() * self.dt;
        let tail = (-p.beta() * truncation).exp();
        if tail > self.discount_tail_tol {
            return Err(Error::Config(format!(
                "discount tail exp(-β·T) = {tail:e} exceeds tolerance {:e}; lengthen the horizon",
                self.discount_tail_tol
            )));
        }
        Ok(())
    }
}

/// Multiplicative factors on the optimal feedback coefficients.
///
/// For the broker they scale `C`, `D`, `E`, `F`; for the informed trader
/// `own_inventory` scales `B`, `alpha` scales `A`, and the other two must
/// stay at one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scaling<T> {
    pub own_inventory: T,
    pub client_inventory: T,
    pub alpha: T,
    pub uninformed: T,
}

impl<T: Real> Default for Scaling<T> {
    fn default() -> Self {
        Self {
            own_inventory: T::one(),
            client_inventory: T::one(),
            alpha: T::one(),
            uninformed: T::one(),
        }
    }
}

/// Broker rule in flow form with rate-unit weights:
/// `ν_B = −c q_B − g q_I + h ν_I + f ν_U`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearRule<T> {
    pub own_inventory: T,
    pub client_inventory: T,
    pub informed_flow: T,
    pub uninformed_flow: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Policy<T> {
    /// The closed-form optimal strategy of the agent.
    Optimal,
    Scaled(Scaling<T>),
    ConstantRate(T),
    /// Broker only.
    Linear(LinearRule<T>),
}

/// Resolved linear feedback:
/// `rate = −own·q_own − client·q_I + alpha·α + informed·ν_I + uninformed·ν_U + constant`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Feedback<T> {
    pub own: T,
    pub client: T,
    pub alpha: T,
    pub informed: T,
    pub uninformed: T,
    pub constant: T,
}

impl<T: Real> Feedback<T> {
    #[inline]
    pub fn rate(&self, q_own: T, q_i: T, alpha: T, nu_i: T, nu_u: T) -> T {
        -self.own * q_own - self.client * q_i
            + self.alpha * alpha
            + self.informed * nu_i
            + self.uninformed * nu_u
            + self.constant
    }
}

fn check_scaling<T: Real>(s: &Scaling<T>) -> Result<()> {
    for v in [s.own_inventory, s.client_inventory, s.alpha, s.uninformed] {
        if !v.is_finite() || v < T::zero() {
            return Err(Error::Config(format!(
                "scaling factors must be finite and >= 0, got {v}"
            )));
        }
    }
    Ok(())
}

impl<T: Real> Policy<T> {
    pub fn informed_feedback(&self, ic: &InformedCoefficients<T>) -> Result<Feedback<T>> {
        let z = T::zero();
        let optimal = Feedback {
            own: ic.inventory_decay,
            alpha: ic.alpha_loading,
            ..Feedback::default()
        };
        match *self {
            Policy::Optimal => Ok(optimal),
            Policy::Scaled(s) => {
                check_scaling(&s)?;
                if s.client_inventory != T::one() || s.uninformed != T::one() {
                    return Err(Error::Config(
                        "informed scaling only acts on own_inventory and alpha".into(),
                    ));
                }
                Ok(Feedback {
                    own: optimal.own * s.own_inventory,
                    alpha: optimal.alpha * s.alpha,
                    ..optimal
                })
            }
            Policy::ConstantRate(v) => Ok(Feedback {
                own: z,
                constant: v,
                ..Feedback::default()
            }),
            Policy::Linear(_) => Err(Error::Config(
                "linear (c, g, h, f) rules are defined for the broker only".into(),
            )),
        }
    }

    pub fn broker_feedback(&self, bc: &BrokerCoefficients<T>) -> Result<Feedback<T>> {
        let optimal = Feedback {
            own: bc.own_inventory,
            client: bc.client_inventory,
            alpha: bc.alpha_loading,
            informed: T::zero(),
            uninformed: bc.uninformed_hedge,
            constant: T::zero(),
        };
        match *self {
            Policy::Optimal => Ok(optimal),
            Policy::Scaled(s) => {
                check_scaling(&s)?;
                Ok(Feedback {
                    own: optimal.own * s.own_inventory,
                    client: optimal.client * s.client_inventory,
                    alpha: optimal.alpha * s.alpha,
                    uninformed: optimal.uninformed * s.uninformed,
                    ..optimal
                })
            }
            Policy::ConstantRate(v) => Ok(Feedback {
                constant: v,
                ..Feedback::default()
            }),
            Policy::Linear(r) => Ok(Feedback {
                own: r.own_inventory,
                client: r.client_inventory,
                informed: r.informed_flow,
                uninformed: r.uninformed_flow,
                ..Feedback::default()
            }),
        }
    }
}

/// Exogenous state on the simulation grid.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ExoPoint<T> {
    pub t: T,
    pub s: T,
    pub alpha: T,
    pub nu_u: T,
}

/// Generator of the exogenous factors on a fixed grid. Three independent
/// standard normals are drawn per step (S, α, ν_U), whatever the volatilities.
#[derive(Debug, Clone)]
pub struct ExogenousProcess<T> {
    point: ExoPoint<T>,
    origin: T,
    step: usize,
    dt: T,
    rng: ChaCha8Rng,
    s_vol: T,
    alpha_decay: T,
    alpha_vol: T,
    nu_decay: T,
    nu_vol: T,
}

/// One-step transition `(decay, noise scale)` of `dX = −κX dt + σ dW`.
fn ou_step<T: Real>(kappa: T, sigma: T, dt: T, scheme: Scheme) -> (T, T) {
    match scheme {
        Scheme::Euler => (T::one() - kappa * dt, sigma * dt.sqrt()),
        Scheme::ExactOu => {
            if kappa == T::zero() {
                (T::one(), sigma * dt.sqrt())
            } else {
                let decay = (-kappa * dt).exp();
                let var = -(-T::two() * kappa * dt).exp_m1() / (T::two() * kappa);
                (decay, sigma * var.sqrt())
            }
        }
    }
}

impl<T: Real> ExogenousProcess<T> {
    pub fn new(p: &ModelParams<T>, dt: T, scheme: Scheme, seed: u64, stream: u64) -> Self {
        let start = ExoPoint {
            t: T::zero(),
            s: p.market.s0,
            alpha: p.market.alpha0,
            nu_u: p.flow.nu_u0,
        };
        Self::starting_at(p, start, dt, scheme, seed, stream)
    }

    /// Starts at an arbitrary point; the clock restarts at `start.t`.
    pub fn starting_at(
        p: &ModelParams<T>,
        start: ExoPoint<T>,
        dt: T,
        scheme: Scheme,
        seed: u64,
        stream: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let (alpha_decay, alpha_vol) =
            ou_step(p.market.kappa_alpha, p.market.sigma_alpha, dt, scheme);
        let (nu_decay, nu_vol) = ou_step(p.flow.kappa_u, p.flow_vol(), dt, scheme);
        Self {
            point: start,
            origin: start.t,
            step: 0,
            dt,
            rng,
            s_vol: p.market.sigma_s * dt.sqrt(),
            alpha_decay,
            alpha_vol,
            nu_decay,
            nu_vol,
        }
    }

    pub fn current(&self) -> ExoPoint<T> {
        self.point
    }

    /// Advances one step and returns the new point.
    pub fn advance(&mut self) -> ExoPoint<T> {
        let zs: f64 = self.rng.sample(StandardNormal);
        let za: f64 = self.rng.sample(StandardNormal);
        let zu: f64 = self.rng.sample(StandardNormal);
        let p = &mut self.point;
        p.s = p.s + p.alpha * self.dt + self.s_vol * T::lit(zs);
        p.alpha = self.alpha_decay * p.alpha + self.alpha_vol * T::lit(za);
        p.nu_u = self.nu_decay * p.nu_u + self.nu_vol * T::lit(zu);
        self.step += 1;
        p.t = self.origin + T::from_usize(self.step).unwrap() * self.dt;
        *p
    }

    pub fn advance_by(&mut self, n: usize) -> ExoPoint<T> {
        for _ in 0..n {
            self.advance();
        }
        self.point
    }
}

/// Inventories and cash of both agents under one pair of policies.
#[derive(Debug, Clone, Copy, Default)]
struct Book<T> {
    q_i: T,
    q_b: T,
    x_i: T,
    x_b: T,
}

#[derive(Debug, Clone, Copy)]
struct Rates<T> {
    nu_i: T,
    nu_b: T,
}

#[derive(Debug, Clone, Copy)]
struct Costs<T> {
    k_i: T,
    k_u: T,
    k_b: T,
}

impl<T: Real> Book<T> {
    fn from_state(s: &MarketState<T>) -> Self {
        Self {
            q_i: s.q_i,
            q_b: s.q_b,
            x_i: s.x_i,
            x_b: s.x_b,
        }
    }

    #[inline]
    fn rates(&self, ex: &ExoPoint<T>, fi: &Feedback<T>, fb: &Feedback<T>) -> Rates<T> {
        let nu_i = fi.rate(self.q_i, T::zero(), ex.alpha, T::zero(), ex.nu_u);
        let nu_b = fb.rate(self.q_b, self.q_i, ex.alpha, nu_i, ex.nu_u);
        Rates { nu_i, nu_b }
    }

    /// One step with rates held at their left-endpoint values. Trades over
    /// the step execute at the step-average midprice `s_mid`.
    #[inline]
    fn advance(&mut self, s_mid: T, nu_u: T, r: Rates<T>, c: &Costs<T>, dt: T) {
        let exec_i = s_mid + c.k_i * r.nu_i;
        let exec_u = s_mid + c.k_u * nu_u;
        let exec_b = s_mid + c.k_b * r.nu_b;
        self.q_i = self.q_i + r.nu_i * dt;
        self.q_b = self.q_b + (r.nu_b - r.nu_i - nu_u) * dt;
        self.x_i = self.x_i - exec_i * r.nu_i * dt;
        self.x_b = self.x_b + (exec_i * r.nu_i + exec_u * nu_u - exec_b * r.nu_b) * dt;
    }
}

// Criterion integrands over one step `[t, t + dt]`. The wealth term
// `β·(X + Q S − a Q²)` is taken at the left end. Terms linear in the
// inventory use the step average of `Q`, so `−2aQν` integrates exactly to
// `−a·Δ(Q²)`. The left-endpoint sum is biased by `a·E[ν²]·dt` per unit
// time, which is far from negligible at the fast optimal rates.

#[inline]
fn informed_integrand<T: Real>(
    m: &ModelParams<T>,
    ex: &ExoPoint<T>,
    before: &Book<T>,
    q_after: T,
    nu_i: T,
) -> T {
    let (k, a, phi, beta) = (m.informed.k_i, m.informed.a_i, m.informed.phi_i, m.beta());
    let q = before.q_i;
    let q_mid = (q + q_after) * T::half();
    let q_sq = (q * q + q_after * q_after) * T::half();
    beta * (before.x_i + q * ex.s - a * q * q) - k * nu_i * nu_i + ex.alpha * q_mid
        - T::two() * a * q_mid * nu_i
        - phi * q_sq
}

#[inline]
fn broker_integrand<T: Real>(
    m: &ModelParams<T>,
    ex: &ExoPoint<T>,
    before: &Book<T>,
    q_after: T,
    r: Rates<T>,
) -> T {
    let (ki, ku, kb) = (m.informed.k_i, m.broker.k_u, m.broker.k_b);
    let (a, bb, phi, beta) = (m.broker.a_b, m.broker.b, m.broker.phi_b, m.beta());
    let q = before.q_b;
    let q_mid = (q + q_after) * T::half();
    let q_sq = (q * q + q_after * q_after) * T::half();
    let nu_u = ex.nu_u;
    beta * (before.x_b + q * ex.s - a * q * q) + ki * r.nu_i * r.nu_i + ku * nu_u * nu_u
        - kb * r.nu_b * r.nu_b
        + q_mid * ex.alpha
        + bb * q_mid * r.nu_b
        - T::two() * a * q_mid * (r.nu_b - r.nu_i - nu_u)
        - phi * q_sq
}

fn costs<T: Real>(m: &ModelParams<T>) -> Costs<T> {
    Costs {
        k_i: m.informed.k_i,
        k_u: m.broker.k_u,
        k_b: m.broker.k_b,
    }
}

/// One grid point of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathStep<T> {
    pub state: MarketState<T>,
    /// Rates held over `[t, t + dt]`. Execution prices use the average of
    /// the midprice at the two ends of that step (the grid value at the end
    /// of the path).
    pub nu_i: T,
    pub nu_u: T,
    pub nu_b: T,
    pub exec_informed: T,
    pub exec_uninformed: T,
    pub exec_broker: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord<T> {
    pub dt: T,
    pub steps: Vec<PathStep<T>>,
}

impl<T: Real> PathRecord<T> {
    pub const CSV_HEADER: &'static str = "t,S,alpha,nu_U,nu_I,nu_B,Q_I,Q_B,X_I,X_B";

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for st in &self.steps {
            let s = &st.state;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                s.t, s.s, s.alpha, s.nu_u, st.nu_i, st.nu_b, s.q_i, s.q_b, s.x_i, s.x_b
            )?;
        }
        Ok(())
    }
}

/// Simulates one path of the full system. Rates are evaluated at the left
/// end of each step and held over it; cash integrates the execution price
/// with the trapezoid rule on the midprice.
pub fn simulate_path<T: Real>(
    p: &ValidatedParams<T>,
    pol_i: &Policy<T>,
    pol_b: &Policy<T>,
    cfg: &SimConfig<T>,
    path_index: u64,
) -> Result<PathRecord<T>> {
    cfg.check(p)?;
    let sol = solve(p);
    let fi = pol_i.informed_feedback(&sol.informed)?;
    let fb = pol_b.broker_feedback(&sol.broker)?;
    let c = costs(p);
    let n = cfg.steps();
    let mut exo = cfg.exogenous(p, exo_start(&MarketState::initial(p)), path_index);
    let mut book = Book::default();
    let mut steps = Vec::with_capacity(n + 1);
    let mut ex = exo.current();
    for i in 0..=n {
        let r = book.rates(&ex, &fi, &fb);
        let next = if i < n {
            Some(exo.advance_by(cfg.substeps))
        } else {
            None
        };
        let s_mid = next.map_or(ex.s, |nx| (ex.s + nx.s) * T::half());
        steps.push(PathStep {
            state: MarketState {
                t: ex.t,
                s: ex.s,
                alpha: ex.alpha,
                nu_u: ex.nu_u,
                q_i: book.q_i,
                q_b: book.q_b,
                x_i: book.x_i,
                x_b: book.x_b,
            },
            nu_i: r.nu_i,
            nu_u: ex.nu_u,
            nu_b: r.nu_b,
            exec_informed: s_mid + c.k_i * r.nu_i,
            exec_uninformed: s_mid + c.k_u * ex.nu_u,
            exec_broker: s_mid + c.k_b * r.nu_b,
        });
        if let Some(nx) = next {
            book.advance(s_mid, ex.nu_u, r, &c, cfg.dt);
            ex = nx;
        }
    }
    Ok(PathRecord { dt: cfg.dt, steps })
}

/// Monte Carlo mean with its standard error and normal 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub mean: T,
    pub std_error: T,
    pub n: usize,
    pub ci95: (T, T),
}

impl<T: Real> Estimate<T> {
    pub fn from_samples(xs: &[T]) -> Self {
        let (mean, std_error) = mean_and_std_error(xs);
        let half = T::lit(1.96) * std_error;
        Self {
            mean,
            std_error,
            n: xs.len(),
            ci95: (mean - half, mean + half),
        }
    }

    /// Half-width of the 95% interval.
    pub fn half_width(&self) -> T {
        T::lit(1.96) * self.std_error
    }
}

/// Discounted criteria of one path: the informed trader's and one broker
/// value per broker feedback, all driven by the same exogenous draws.
fn path_criteria<T: Real>(
    p: &ModelParams<T>,
    cfg: &SimConfig<T>,
    start: &MarketState<T>,
    path_index: u64,
    fi: &Feedback<T>,
    fbs: &[Feedback<T>],
) -> (T, Vec<T>) {
    let c = costs(p);
    let n = cfg.steps();
    let dt = cfg.dt;
    let step_discount = (-p.beta() * dt).exp();
    let mut exo = cfg.exogenous(p, exo_start(start), path_index);
    let mut books = vec![Book::from_state(start); fbs.len().max(1)];
    let mut informed = KahanSum::new();
    let mut broker = vec![KahanSum::new(); fbs.len()];
    let mut discount = T::one();
    let mut ex = exo.current();
    for _ in 0..n {
        let w = discount * dt;
        let next = exo.advance_by(cfg.substeps);
        let s_mid = (ex.s + next.s) * T::half();
        // the informed trader's book does not depend on the broker policy
        let nu_i = fi.rate(books[0].q_i, T::zero(), ex.alpha, T::zero(), ex.nu_u);
        let q_i_after = books[0].q_i + nu_i * dt;
        informed.add(w * informed_integrand(p, &ex, &books[0], q_i_after, nu_i));
        if fbs.is_empty() {
            let r = Rates {
                nu_i,
                nu_b: T::zero(),
            };
            books[0].advance(s_mid, ex.nu_u, r, &c, dt);
        }
        for ((book, fb), acc) in books.iter_mut().zip(fbs).zip(broker.iter_mut()) {
            let r = book.rates(&ex, fi, fb);
            let before = *book;
            book.advance(s_mid, ex.nu_u, r, &c, dt);
            acc.add(w * broker_integrand(p, &ex, &before, book.q_b, r));
        }
        ex = next;
        discount = discount * step_discount;
    }
    (
        informed.total(),
        broker.iter().map(KahanSum::total).collect(),
    )
}

/// Per-path discounted criteria for every path: `(informed, broker[j])`.
fn all_path_criteria<T: Real>(
    p: &ValidatedParams<T>,
    cfg: &SimConfig<T>,
    start: &MarketState<T>,
    fi: &Feedback<T>,
    fbs: &[Feedback<T>],
) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    cfg.check(p)?;
    let m = *p.params();
    let per_path: Vec<(T, Vec<T>)> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| path_criteria(&m, cfg, start, i, fi, fbs))
        .collect();
    let informed = per_path.iter().map(|(v, _)| *v).collect();
    let broker = (0..fbs.len())
        .map(|j| per_path.iter().map(|(_, b)| b[j]).collect())
        .collect();
    Ok((informed, broker))
}

fn exo_start<T: Real>(s: &MarketState<T>) -> ExoPoint<T> {
    ExoPoint {
        t: s.t,
        s: s.s,
        alpha: s.alpha,
        nu_u: s.nu_u,
    }
}

/// Monte Carlo estimate of the informed trader's discounted criterion from
/// the parameters' initial state (zero inventory and cash).
pub fn estimate_informed_performance<T: Real>(
    p: &ValidatedParams<T>,
    cfg: &SimConfig<T>,
    pol_i: &Policy<T>,
) -> Result<Estimate<T>> {
    estimate_informed_performance_from(p, cfg, pol_i, &MarketState::initial(p))
}

/// As [`estimate_informed_performance`] from an arbitrary state. Discounting
/// restarts at the state's time.
pub fn estimate_informed_performance_from<T: Real>(
    p: &ValidatedParams<T>,
    cfg: &SimConfig<T>,
    pol_i: &Policy<T>,
    start: &MarketState<T>,
) -> Result<Estimate<T>> {
    let sol = solve(p);
    let fi = pol_i.informed_feedback(&sol.informed)?;
    let (informed, _) = all_path_criteria(p, cfg, start, &fi, &[])?;
    Ok(Estimate::from_samples(&informed))
}

pub fn estimate_broker_performance<T: Real>(
    p: &ValidatedParams<T>,
    cfg: &SimConfig<T>,
    pol_i: &Policy<T>,
    pol_b: &Policy<T>,
) -> Result<Estimate<T>> {
    estimate_broker_performance_from(p, cfg, pol_i, pol_b, &MarketState::initial(p))
}

pub fn estimate_broker_performance_from<T: Real>(
    p: &ValidatedParams<T>,
    cfg: &SimConfig<T>,
    pol_i: &Policy<T>,
    pol_b: &Policy<T>,
    start: &MarketState<T>,
) -> Result<Estimate<T>> {
    let sol = solve(p);
    let fi = pol_i.informed_feedback(&sol.informed)?;
    let fb = pol_b.broker_feedback(&sol.broker)?;
    let (_, broker) = all_path_criteria(p, cfg, start, &fi, &[fb])?;
    Ok(Estimate::from_samples(&broker[0]))
}

/// Per-path broker criteria for several broker policies under common random
/// numbers; `result[j][path]`.
pub fn broker_performance_samples<T: Real>(
    p: &ValidatedParams<T>,
    cfg: &SimConfig<T>,
    pol_i: &Policy<T>,
    pol_bs: &[Policy<T>],
) -> Result<Vec<Vec<T>>> {
    let sol = solve(p);
    let fi = pol_i.informed_feedback(&sol.informed)?;
    let fbs = pol_bs
        .iter()
        .map(|pb| pb.broker_feedback(&sol.broker))
        .collect::<Result<Vec<_>>>()?;
    Ok(all_path_criteria(p, cfg, &MarketState::initial(p), &fi, &fbs)?.1)
}

/// Outcome of comparing a perturbed policy with the optimal one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// Below optimal, one-sided at 95%.
    Lower,
    Indistinguishable,
    /// Above optimal by more than two paired standard errors.
    Higher,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationRow<T> {
    pub coefficient: &'static str,
    pub factor: T,
    pub estimate: Estimate<T>,
    /// Mean of per-path (perturbed − optimal).
    pub diff_mean: T,
    pub diff_std_error: T,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationReport<T> {
    pub optimal: Estimate<T>,
    pub rows: Vec<PerturbationRow<T>>,
}

impl<T: Real> PerturbationReport<T> {
    /// Rows whose perturbed policy beat the optimal one significantly.
    pub fn flagged(&self) -> impl Iterator<Item = &PerturbationRow<T>> {
        self.rows.iter().filter(|r| r.verdict == Verdict::Higher)
    }
}

pub const BROKER_COEFFICIENTS: [&str; 4] = ["C", "D", "E", "F"];

/// Scales each of `C`, `D`, `E`, `F` in turn by every factor and compares the
/// resulting broker criterion with the optimal one on common random numbers.
pub fn perturbation_report<T: Real>(
    p: &ValidatedParams<T>,
    cfg: &SimConfig<T>,
    factors: &[T],
) -> Result<PerturbationReport<T>> {
    let mut policies = vec![Policy::Optimal];
    let mut labels = Vec::new();
    for (ci, &name) in BROKER_COEFFICIENTS.iter().enumerate() {
        for &f in factors {
            let mut s = Scaling::default();
            match ci {
                0 => s.own_inventory = f,
                1 => s.client_inventory = f,
                2 => s.alpha = f,
                _ => s.uninformed = f,
            }
            policies.push(Policy::Scaled(s));
            labels.push((name, f));
        }
    }
    let samples = broker_performance_samples(p, cfg, &Policy::Optimal, &policies)?;
    let optimal = Estimate::from_samples(&samples[0]);
    let one_sided = T::lit(1.645);
    let rows = labels
        .into_iter()
        .zip(&samples[1..])
        .map(|((coefficient, factor), xs)| {
            let diffs: Vec<T> = xs.iter().zip(&samples[0]).map(|(a, b)| *a - *b).collect();
            let (diff_mean, diff_std_error) = mean_and_std_error(&diffs);
            let verdict = if diff_mean + one_sided * diff_std_error < T::zero() {
                Verdict::Lower
            } else if diff_mean > T::two() * diff_std_error {
                Verdict::Higher
            } else {
                Verdict::Indistinguishable
            };
            PerturbationRow {
                coefficient,
                factor,
                estimate: Estimate::from_samples(xs),
                diff_mean,
                diff_std_error,
                verdict,
            }
        })
        .collect();
    Ok(PerturbationReport { optimal, rows })
}

/// `exp(−βt)·E[ν²]` for both agents on a subsampled grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibilityPoint<T> {
    pub t: T,
    pub informed: T,
    pub broker: T,
}

/// Empirical admissibility proxy for the optimal policies: the discounted
/// mean squared trading rates, recorded every `every` steps.
pub fn admissibility_profile<T: Real>(
    p: &ValidatedParams<T>,
    cfg: &SimConfig<T>,
    every: usize,
) -> Result<Vec<AdmissibilityPoint<T>>> {
    cfg.check(p)?;
    let every = every.max(1);
    let sol: Solution<T> = solve(p);
    let fi = Policy::Optimal.informed_feedback(&sol.informed)?;
    let fb = Policy::Optimal.broker_feedback(&sol.broker)?;
    let c = costs(p);
    let n = cfg.steps();
    let m = *p.params();
    let per_path: Vec<Vec<(usize, T, T)>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|idx| {
            let mut exo = cfg.exogenous(&m, exo_start(&MarketState::initial(&m)), idx);
            let mut book = Book::default();
            let mut out = Vec::with_capacity(n / every + 1);
            let mut ex = exo.current();
            for i in 0..=n {
                let r = book.rates(&ex, &fi, &fb);
                if i % every == 0 || i == n {
                    out.push((i, r.nu_i * r.nu_i, r.nu_b * r.nu_b));
                }
                if i < n {
                    let next = exo.advance_by(cfg.substeps);
                    book.advance((ex.s + next.s) * T::half(), ex.nu_u, r, &c, cfg.dt);
                    ex = next;
                }
            }
            out
        })
        .collect();
    let npaths = T::from_usize(cfg.n_paths).unwrap();
    let points = per_path[0].len();
    Ok((0..points)
        .map(|k| {
            let t = T::from_usize(per_path[0][k].0).unwrap() * cfg.dt;
            let d = (-p.beta() * t).exp();
            let mi = per_path
                .iter()
                .map(|v| v[k].1)
                .collect::<KahanSum<T>>()
                .total()
                / npaths;
            let mb = per_path
                .iter()
                .map(|v| v[k].2)
                .collect::<KahanSum<T>>()
                .total()
                / npaths;
            AdmissibilityPoint {
                t,
                informed: d * mi,
                broker: d * mb,
            }
        })
        .collect())
}

/// Undiscounted terminal criterion over one finite horizon,
/// `X_B(T) + Q_B(T) S_T − a_B Q_B(T)² − φ_B Σ Q_B(t_n)² dt` (right endpoints),
/// on a given exogenous path with spacing `dt`.
pub fn terminal_broker_criterion<T: Real>(
    p: &ModelParams<T>,
    path: &[ExoPoint<T>],
    dt: T,
    fi: &Feedback<T>,
    fb: &Feedback<T>,
) -> T {
    let c = costs(p);
    let mut book = Book::default();
    let mut penalty = KahanSum::new();
    for w in path.windows(2) {
        let r = book.rates(&w[0], fi, fb);
        book.advance((w[0].s + w[1].s) * T::half(), w[0].nu_u, r, &c, dt);
        penalty.add(book.q_b * book.q_b * dt);
    }
    let last = path.last().copied().unwrap_or_default();
    let a = p.broker.a_b;
    book.x_b + book.q_b * last.s - a * book.q_b * book.q_b - p.broker.phi_b * penalty.total()
}

/// Exogenous path of `n_steps` steps (`n_steps + 1` points).
pub fn exogenous_path<T: Real>(
    p: &ModelParams<T>,
    dt: T,
    n_steps: usize,
    scheme: Scheme,
    seed: u64,
    stream: u64,
) -> Vec<ExoPoint<T>> {
    let mut exo = ExogenousProcess::new(p, dt, scheme, seed, stream);
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(exo.current());
    for _ in 0..n_steps {
        out.push(exo.advance());
    }
    out
}
