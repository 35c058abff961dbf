//! Closed-form stationary strategies and value functions of the informed
//! trader and the broker, plus full-HJB residual checks.
//!
//! Both value functions are quadratic forms in the state, so every partial
//! derivative the residuals need is computed analytically. A central finite
//! difference helper is kept for cross-checking those partials.
//!
//! Conventional coefficient names (`A`, `B`, `h2`, `C` ... `H`, `d0`, `c5`)
//! are used only as keys in [`InformedCoefficients::table`] and
//! [`BrokerCoefficients::table`].

use serde::Serialize;

use crate::params::{broker_radicand, informed_radicand, ModelParams, ValidatedParams};
use crate::scalar::Real;

/// Informed trader's strategy `ν = A·α − B·q` and value-function expansion
/// `x + qS − a_I q² + f0 + f1 α + f2 α² + g1 α q + h2 q²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InformedCoefficients<T> {
    /// `A`: trading rate per unit of alpha.
    pub alpha_loading: T,
    /// `B`: inventory mean-reversion rate.
    pub inventory_decay: T,
    /// `h2`
    pub inventory_curvature: T,
    /// `g1`: coefficient of `α·q`.
    pub alpha_inventory: T,
    /// `f0`
    pub constant: T,
    /// `f1`, identically zero.
    pub alpha_linear: T,
    /// `f2`
    pub alpha_curvature: T,
    #[serde(skip)]
    pub params: ModelParams<T>,
}

/// Evaluation point of the informed value function.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InformedPoint<T> {
    pub x: T,
    pub s: T,
    pub alpha: T,
    pub q_i: T,
}

impl<T: Copy> InformedPoint<T> {
    pub fn to_array(self) -> [T; 4] {
        [self.x, self.s, self.alpha, self.q_i]
    }
    pub fn from_array(a: [T; 4]) -> Self {
        Self {
            x: a[0],
            s: a[1],
            alpha: a[2],
            q_i: a[3],
        }
    }
}

/// Partial derivatives of the informed value function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformedPartials<T> {
    pub value: T,
    pub d_x: T,
    pub d_s: T,
    pub d_ss: T,
    pub d_alpha: T,
    pub d_alpha_alpha: T,
    pub d_q: T,
}

pub fn solve_informed<T: Real>(p: &ValidatedParams<T>) -> InformedCoefficients<T> {
    let l = T::lit;
    let (k, a, phi, beta) = (p.informed.k_i, p.informed.a_i, p.informed.phi_i, p.beta());
    let kappa = p.market.kappa_alpha;
    let root = informed_radicand(p).sqrt();

    let alpha_loading = T::one() / (beta * k + T::two() * k * kappa + root);
    let half_beta = beta * T::half();
    let inventory_decay =
        (a * beta / k + half_beta * half_beta + phi / (T::two() * k)).sqrt() - half_beta;
    let h2 = T::two() * a + beta * k - root;
    let g1 = l(4.0) * k / (T::two() * a - h2 + T::two() * beta * k + T::two() * kappa * k);
    let f2 = g1 * g1 / (l(8.0) * beta * k + l(16.0) * kappa * k);
    let sa = p.market.sigma_alpha;
    // Constant-term HJB equation: −β f0 + σα² f2 = 0.
    let f0 = f2 * sa * sa / beta;

    InformedCoefficients {
        alpha_loading,
        inventory_decay,
        inventory_curvature: h2,
        alpha_inventory: g1,
        constant: f0,
        alpha_linear: T::zero(),
        alpha_curvature: f2,
        params: *p.params(),
    }
}

impl<T: Real> InformedCoefficients<T> {
    /// Optimal informed trading rate `A·α − B·q`.
    #[inline]
    pub fn rate(&self, alpha: T, q_i: T) -> T {
        self.alpha_loading * alpha - self.inventory_decay * q_i
    }

    pub fn value(&self, x: T, s: T, alpha: T, q_i: T) -> T {
        let a = self.params.informed.a_i;
        let h0 = self.constant + self.alpha_linear * alpha + self.alpha_curvature * alpha * alpha;
        let h1 = self.alpha_inventory * alpha;
        x + q_i * s - a * q_i * q_i + h0 + h1 * q_i + self.inventory_curvature * q_i * q_i
    }

    pub fn value_at(&self, pt: InformedPoint<T>) -> T {
        self.value(pt.x, pt.s, pt.alpha, pt.q_i)
    }

    pub fn partials(&self, pt: InformedPoint<T>) -> InformedPartials<T> {
        let a = self.params.informed.a_i;
        let two = T::two();
        InformedPartials {
            value: self.value_at(pt),
            d_x: T::one(),
            d_s: pt.q_i,
            d_ss: T::zero(),
            d_alpha: self.alpha_linear
                + two * self.alpha_curvature * pt.alpha
                + self.alpha_inventory * pt.q_i,
            d_alpha_alpha: two * self.alpha_curvature,
            d_q: pt.s - two * a * pt.q_i
                + self.alpha_inventory * pt.alpha
                + two * self.inventory_curvature * pt.q_i,
        }
    }

    /// Full informed HJB evaluated with the supremum replaced by its
    /// feedback maximiser.
    pub fn hjb_residual(&self, pt: InformedPoint<T>) -> T {
        self.hjb_residual_with(pt, &self.partials(pt))
    }

    /// Same as [`hjb_residual`](Self::hjb_residual) with externally supplied
    /// partials (e.g. finite differences).
    pub fn hjb_residual_with(&self, pt: InformedPoint<T>, d: &InformedPartials<T>) -> T {
        let m = &self.params;
        let (k, a, phi, beta) = (m.informed.k_i, m.informed.a_i, m.informed.phi_i, m.beta());
        let (kappa, sa, ss) = (m.market.kappa_alpha, m.market.sigma_alpha, m.market.sigma_s);
        let (x, s, alpha, q) = (pt.x, pt.s, pt.alpha, pt.q_i);
        let two = T::two();
        let half = T::half();

        let reference = x + q * s - a * q * q;
        let nu = (d.d_q - s * d.d_x - two * a * q) / (two * k * (T::one() + d.d_x));
        let gen_alpha = -kappa * alpha * d.d_alpha + half * sa * sa * d.d_alpha_alpha;
        let gen_s = alpha * d.d_s + half * ss * ss * d.d_ss;
        let control = nu * d.d_q - nu * (s + k * nu) * d.d_x - two * a * q * nu - k * nu * nu;

        -beta * (d.value - reference) + gen_alpha + gen_s + alpha * q - phi * q * q + control
    }

    /// Residuals of the scalar equations for `h2` and `g1`.
    pub fn coefficient_residuals(&self) -> [T; 2] {
        let m = &self.params;
        let (k, a, phi, beta) = (m.informed.k_i, m.informed.a_i, m.informed.phi_i, m.beta());
        let h2 = self.inventory_curvature;
        let g1 = self.alpha_inventory;
        let two = T::two();
        [
            -beta * h2 - phi + (h2 - two * a) * (h2 - two * a) / (two * k),
            -beta * g1 + two - m.market.kappa_alpha * g1 + g1 * (h2 - two * a) / (two * k),
        ]
    }

    pub fn table(&self) -> Vec<(&'static str, T)> {
        vec![
            ("A", self.alpha_loading),
            ("B", self.inventory_decay),
            ("h2", self.inventory_curvature),
            ("g0", T::zero()),
            ("g1", self.alpha_inventory),
            ("f0", self.constant),
            ("f1", self.alpha_linear),
            ("f2", self.alpha_curvature),
        ]
    }
}

/// A `q0`-level coefficient whose printed closed form failed the residual
/// check and was re-solved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientResolve {
    pub coefficient: &'static str,
    pub closed_form: f64,
    pub resolved: f64,
    pub monomial_residual: f64,
}

/// Broker strategy `ν_B = −C q_B − D q_I + E α + F ν_U` (equivalently
/// `−C q_B − G q_I + H ν_I + F ν_U`) and the value-function expansion
/// `x + q_B S − a_B q_B² + q0 + q1 q_B + q2 q_B²` with
/// `q1 = d0 α + d1 q_I + d2 ν_U` and
/// `q0 = c0 + c1 α + c2 ν + c3 α ν + c4 α² + c5 ν² + (e1 α + e2 ν) q_I + f2 q_I²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrokerCoefficients<T> {
    /// `q2`
    pub inventory_curvature: T,
    /// `C`
    pub own_inventory: T,
    /// `D`
    pub client_inventory: T,
    /// `E`
    pub alpha_loading: T,
    /// `F`
    pub uninformed_hedge: T,
    /// `G`: weight on client inventory in the flow form.
    pub client_inventory_flow_form: T,
    /// `H`: externalised fraction of informed flow.
    pub informed_flow: T,
    /// `d0`, `d1`, `d2`
    pub slope_alpha: T,
    pub slope_client: T,
    pub slope_uninformed: T,
    /// `f2` of the broker expansion (client inventory squared).
    pub client_curvature: T,
    /// `e1`, `e2`
    pub client_alpha: T,
    pub client_uninformed: T,
    /// `c0` ... `c5`
    pub constant: T,
    pub alpha_linear: T,
    pub uninformed_linear: T,
    pub alpha_uninformed: T,
    pub alpha_curvature: T,
    pub uninformed_curvature: T,
    pub informed: InformedCoefficients<T>,
    /// Coefficients re-solved from the HJB residual, in solve order.
    pub resolves: Vec<CoefficientResolve>,
}

/// Evaluation point of the broker value function.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BrokerPoint<T> {
    pub x_b: T,
    pub s: T,
    pub alpha: T,
    pub q_b: T,
    pub q_i: T,
    pub nu_u: T,
}

impl<T: Copy> BrokerPoint<T> {
    pub fn to_array(self) -> [T; 6] {
        [self.x_b, self.s, self.alpha, self.q_b, self.q_i, self.nu_u]
    }
    pub fn from_array(a: [T; 6]) -> Self {
        Self {
            x_b: a[0],
            s: a[1],
            alpha: a[2],
            q_b: a[3],
            q_i: a[4],
            nu_u: a[5],
        }
    }
}

/// Partial derivatives of the broker value function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrokerPartials<T> {
    pub value: T,
    pub d_x: T,
    pub d_s: T,
    pub d_ss: T,
    pub d_alpha: T,
    pub d_alpha_alpha: T,
    pub d_nu: T,
    pub d_nu_nu: T,
    pub d_qi: T,
    pub d_qb: T,
}

/// Identifies one of the `q0`-level coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Q0Coefficient {
    ClientCurvature,
    ClientUninformed,
    ClientAlpha,
    UninformedCurvature,
    AlphaCurvature,
    AlphaUninformed,
    AlphaLinear,
    UninformedLinear,
    Constant,
}

/// Triangular solve order: each coefficient's monomial equation only
/// involves coefficients earlier in the list.
const Q0_ORDER: [(Q0Coefficient, &str); 9] = [
    (Q0Coefficient::ClientCurvature, "f2b"),
    (Q0Coefficient::ClientUninformed, "e2"),
    (Q0Coefficient::ClientAlpha, "e1"),
    (Q0Coefficient::UninformedCurvature, "c5"),
    (Q0Coefficient::AlphaCurvature, "c4"),
    (Q0Coefficient::AlphaUninformed, "c3"),
    (Q0Coefficient::AlphaLinear, "c1"),
    (Q0Coefficient::UninformedLinear, "c2"),
    (Q0Coefficient::Constant, "c0"),
];

pub fn solve_broker<T: Real>(
    p: &ValidatedParams<T>,
    ic: &InformedCoefficients<T>,
) -> BrokerCoefficients<T> {
    let l = T::lit;
    let two = T::two();
    let (kb, ku, ki) = (p.broker.k_b, p.broker.k_u, p.informed.k_i);
    let (ab, b, beta) = (p.broker.a_b, p.broker.b, p.beta());
    let (kappa_a, kappa_u) = (p.market.kappa_alpha, p.flow.kappa_u);
    let (sa, su) = (p.market.sigma_alpha, p.flow_vol());
    let (a, bb) = (ic.alpha_loading, ic.inventory_decay);

    let q2 = two * ab - b + beta * kb - broker_radicand(p).sqrt();
    let c = (two * ab - b - q2) / (two * kb);
    let gap = two * ab - q2;
    let d2 = two * gap / (beta + kappa_u + c);
    let d1 = -two * bb * gap / (beta + bb + c);
    let d0 = (two + two * a * gap + a * d1) / (beta + kappa_a + c);

    let four_kb = l(4.0) * kb;
    let d = -d1 / four_kb;
    let e = d0 / four_kb;
    let f = d2 / four_kb;

    let f2b = (-(d1 * d1) - l(8.0) * bb * d1 * kb - l(16.0) * bb * bb * kb * ki)
        / (-l(8.0) * beta * kb - l(16.0) * bb * kb);
    let e2 = (-d1 * d2 + l(4.0) * d1 * kb - l(4.0) * bb * d2 * kb)
        / (-four_kb * beta - four_kb * bb - four_kb * kappa_u);
    let e1 = (-d0 * d1 - l(4.0) * bb * d0 * kb + l(4.0) * a * d1 * kb - l(8.0) * a * f2b * kb
        + l(16.0) * a * bb * kb * ki)
        / (-four_kb * beta - four_kb * bb - four_kb * kappa_a);
    let c5 = (-(d2 * d2) + l(8.0) * d2 * kb - l(16.0) * kb * ku)
        / (-l(8.0) * beta * kb - l(16.0) * kappa_u * kb);
    let c4 = (-(d0 * d0) + l(8.0) * a * d0 * kb - l(8.0) * a * e1 * kb - l(16.0) * a * a * kb * ki)
        / (-l(8.0) * beta * kb - l(16.0) * kappa_a * kb);
    let c3 = (-d0 * d2 + l(4.0) * d0 * kb + l(4.0) * a * d2 * kb - l(4.0) * a * e2 * kb)
        / (-four_kb * beta - four_kb * kappa_a - four_kb * kappa_u);
    let c0 = (c4 * sa * sa + c5 * su * su) / beta;

    let mut bc = BrokerCoefficients {
        inventory_curvature: q2,
        own_inventory: c,
        client_inventory: d,
        alpha_loading: e,
        uninformed_hedge: f,
        client_inventory_flow_form: d - bb * e / a,
        informed_flow: e / a,
        slope_alpha: d0,
        slope_client: d1,
        slope_uninformed: d2,
        client_curvature: f2b,
        client_alpha: e1,
        client_uninformed: e2,
        constant: c0,
        alpha_linear: T::zero(),
        uninformed_linear: T::zero(),
        alpha_uninformed: c3,
        alpha_curvature: c4,
        uninformed_curvature: c5,
        informed: *ic,
        resolves: Vec::new(),
    };
    bc.resolve_q0();
    bc
}

impl<T: Real> BrokerCoefficients<T> {
    pub fn params(&self) -> &ModelParams<T> {
        &self.informed.params
    }

    /// Optimal broker rate in state form `−C q_B − D q_I + E α + F ν_U`.
    #[inline]
    pub fn rate(&self, q_b: T, q_i: T, alpha: T, nu_u: T) -> T {
        -self.own_inventory * q_b - self.client_inventory * q_i
            + self.alpha_loading * alpha
            + self.uninformed_hedge * nu_u
    }

    /// Optimal broker rate in flow form `−C q_B − G q_I + H ν_I + F ν_U`.
    #[inline]
    pub fn rate_flow_form(&self, q_b: T, q_i: T, nu_i: T, nu_u: T) -> T {
        -self.own_inventory * q_b - self.client_inventory_flow_form * q_i
            + self.informed_flow * nu_i
            + self.uninformed_hedge * nu_u
    }

    /// Right-hand side of the closed-form sign identity for `G`:
    /// `1/A − κα (2 k_B C + b) / (β + B + C)`.
    pub fn sign_indicator(&self) -> T {
        let m = self.params();
        let (a, bb) = (self.informed.alpha_loading, self.informed.inventory_decay);
        let c = self.own_inventory;
        T::one() / a
            - m.market.kappa_alpha * (T::two() * m.broker.k_b * c + m.broker.b)
                / (m.beta() + bb + c)
    }

    fn q1(&self, alpha: T, q_i: T, nu_u: T) -> T {
        self.slope_alpha * alpha + self.slope_client * q_i + self.slope_uninformed * nu_u
    }

    fn q0(&self, alpha: T, q_i: T, nu_u: T) -> T {
        self.constant
            + self.alpha_linear * alpha
            + self.uninformed_linear * nu_u
            + self.alpha_uninformed * alpha * nu_u
            + self.alpha_curvature * alpha * alpha
            + self.uninformed_curvature * nu_u * nu_u
            + (self.client_alpha * alpha + self.client_uninformed * nu_u) * q_i
            + self.client_curvature * q_i * q_i
    }

    pub fn value(&self, x_b: T, s: T, alpha: T, q_b: T, q_i: T, nu_u: T) -> T {
        let a = self.params().broker.a_b;
        x_b + q_b * s - a * q_b * q_b
            + self.q0(alpha, q_i, nu_u)
            + self.q1(alpha, q_i, nu_u) * q_b
            + self.inventory_curvature * q_b * q_b
    }

    pub fn value_at(&self, pt: BrokerPoint<T>) -> T {
        self.value(pt.x_b, pt.s, pt.alpha, pt.q_b, pt.q_i, pt.nu_u)
    }

    pub fn partials(&self, pt: BrokerPoint<T>) -> BrokerPartials<T> {
        let two = T::two();
        let a = self.params().broker.a_b;
        let BrokerPoint {
            s,
            alpha,
            q_b,
            q_i,
            nu_u,
            ..
        } = pt;
        BrokerPartials {
            value: self.value_at(pt),
            d_x: T::one(),
            d_s: q_b,
            d_ss: T::zero(),
            d_alpha: self.alpha_linear
                + self.alpha_uninformed * nu_u
                + two * self.alpha_curvature * alpha
                + self.client_alpha * q_i
                + self.slope_alpha * q_b,
            d_alpha_alpha: two * self.alpha_curvature,
            d_nu: self.uninformed_linear
                + self.alpha_uninformed * alpha
                + two * self.uninformed_curvature * nu_u
                + self.client_uninformed * q_i
                + self.slope_uninformed * q_b,
            d_nu_nu: two * self.uninformed_curvature,
            d_qi: self.client_alpha * alpha
                + self.client_uninformed * nu_u
                + two * self.client_curvature * q_i
                + self.slope_client * q_b,
            d_qb: s - two * a * q_b
                + self.q1(alpha, q_i, nu_u)
                + two * self.inventory_curvature * q_b,
        }
    }

    /// Full broker HJB with the supremum at its feedback maximiser and the
    /// informed rate replaced by `A α − B q_I`.
    pub fn hjb_residual(&self, pt: BrokerPoint<T>) -> T {
        self.hjb_residual_with(pt, &self.partials(pt))
    }

    pub fn hjb_residual_with(&self, pt: BrokerPoint<T>, d: &BrokerPartials<T>) -> T {
        let m = self.params();
        let two = T::two();
        let half = T::half();
        let (ki, ku, kb) = (m.informed.k_i, m.broker.k_u, m.broker.k_b);
        let (a, b, phi, beta) = (m.broker.a_b, m.broker.b, m.broker.phi_b, m.beta());
        let (kappa_a, sa, ss) = (m.market.kappa_alpha, m.market.sigma_alpha, m.market.sigma_s);
        let (kappa_u, su) = (m.flow.kappa_u, m.flow_vol());
        let BrokerPoint {
            x_b: x,
            s,
            alpha,
            q_b,
            q_i,
            nu_u: nu,
        } = pt;

        let nu_i = self.informed.rate(alpha, q_i);
        let reference = x + q_b * s - a * q_b * q_b;
        let gen_alpha = -kappa_a * alpha * d.d_alpha + half * sa * sa * d.d_alpha_alpha;
        let gen_nu = -kappa_u * nu * d.d_nu + half * su * su * d.d_nu_nu;
        let nu_b = (b * q_b - two * a * q_b - d.d_x * s + d.d_s * b + d.d_qb)
            / (two * kb * (T::one() + d.d_x));
        let control = -kb * nu_b * nu_b + b * q_b * nu_b
            - two * a * q_b * nu_b
            - d.d_x * nu_b * (s + kb * nu_b)
            + d.d_s * b * nu_b
            + nu_b * d.d_qb;

        -beta * (d.value - reference)
            + ki * nu_i * nu_i
            + ku * nu * nu
            + q_b * alpha
            + two * a * q_b * (nu_i + nu)
            + gen_alpha
            + gen_nu
            + d.d_x * nu_i * (s + ki * nu_i)
            + d.d_x * nu * (s + ku * nu)
            + nu_i * d.d_qi
            + alpha * d.d_s
            + half * ss * ss * d.d_ss
            - (nu_i + nu) * d.d_qb
            - phi * q_b * q_b
            + control
    }

    /// Residuals of the `q2` quadratic and the three linear `d`-equations.
    pub fn coefficient_residuals(&self) -> [T; 4] {
        let m = self.params();
        let two = T::two();
        let four = T::lit(4.0);
        let (kb, a, b, phi, beta) = (
            m.broker.k_b,
            m.broker.a_b,
            m.broker.b,
            m.broker.phi_b,
            m.beta(),
        );
        let (aa, bb) = (self.informed.alpha_loading, self.informed.inventory_decay);
        let q2 = self.inventory_curvature;
        let (d0, d1, d2) = (self.slope_alpha, self.slope_client, self.slope_uninformed);
        let feedback = (b - two * a + q2) / (two * kb);
        [
            -beta * q2 - phi + (b - two * a + q2) * (b - two * a + q2) / (two * kb),
            -beta * d0 + two + four * a * aa + aa * d1 - two * aa * q2 - d0 * m.market.kappa_alpha
                + d0 * feedback,
            -beta * d1 - four * a * bb - bb * d1 + two * bb * q2 + d1 * feedback,
            -beta * d2 + four * a - two * q2 - d2 * m.flow.kappa_u + d2 * feedback,
        ]
    }

    /// Monomial coefficients of the `q_B`-free part of the HJB residual,
    /// keyed by the coefficient each monomial equation determines.
    pub fn q0_monomial_residuals(&self) -> Vec<(&'static str, T)> {
        let mono = self.q0_monomials();
        Q0_ORDER
            .iter()
            .map(|&(which, name)| (name, mono.get(which)))
            .collect()
    }

    /// Probes the residual on `q_B = 0` at unit points and recovers the
    /// coefficients of the quadratic polynomial in `(α, q_I, ν_U)`.
    fn q0_monomials(&self) -> Monomials<T> {
        // S and x cancel analytically; probing at zero avoids large
        // intermediate products.
        let r = |alpha: T, q_i: T, nu_u: T| {
            self.hjb_residual(BrokerPoint {
                x_b: T::zero(),
                s: T::zero(),
                alpha,
                q_b: T::zero(),
                q_i,
                nu_u,
            })
        };
        let (z, o) = (T::zero(), T::one());
        let half = T::half();
        let r0 = r(z, z, z);
        let axis = |p: T, m: T| ((p - m) * half, (p + m - T::two() * r0) * half);
        let (lin_a, sq_a) = axis(r(o, z, z), r(-o, z, z));
        let (_lin_q, sq_q) = axis(r(z, o, z), r(z, -o, z));
        let (lin_n, sq_n) = axis(r(z, z, o), r(z, z, -o));
        let cross = |pij: T, pi: T, pj: T| pij - pi - pj + r0;
        Monomials {
            constant: r0,
            alpha: lin_a,
            nu: lin_n,
            alpha_sq: sq_a,
            q_sq: sq_q,
            nu_sq: sq_n,
            alpha_q: cross(r(o, o, z), r(o, z, z), r(z, o, z)),
            alpha_nu: cross(r(o, z, o), r(o, z, z), r(z, z, o)),
            q_nu: cross(r(z, o, o), r(z, o, z), r(z, z, o)),
        }
    }

    fn q0_slot(&mut self, which: Q0Coefficient) -> &mut T {
        match which {
            Q0Coefficient::ClientCurvature => &mut self.client_curvature,
            Q0Coefficient::ClientUninformed => &mut self.client_uninformed,
            Q0Coefficient::ClientAlpha => &mut self.client_alpha,
            Q0Coefficient::UninformedCurvature => &mut self.uninformed_curvature,
            Q0Coefficient::AlphaCurvature => &mut self.alpha_curvature,
            Q0Coefficient::AlphaUninformed => &mut self.alpha_uninformed,
            Q0Coefficient::AlphaLinear => &mut self.alpha_linear,
            Q0Coefficient::UninformedLinear => &mut self.uninformed_linear,
            Q0Coefficient::Constant => &mut self.constant,
        }
    }

    /// Checks every `q0`-level coefficient against its monomial equation in
    /// triangular order and re-solves any that fail. Each monomial residual
    /// is affine in its own coefficient, so one secant step is exact.
    fn resolve_q0(&mut self) {
        let tol = T::lit(1e-10);
        for &(which, name) in Q0_ORDER.iter() {
            let r = self.q0_monomials().get(which);
            let current = *self.q0_slot(which);
            *self.q0_slot(which) = current + T::one();
            let shifted = self.q0_monomials().get(which);
            *self.q0_slot(which) = current;
            let slope = shifted - r;
            let scale = T::one().max((slope * current).abs());
            if r.abs() <= tol * scale || slope == T::zero() {
                continue;
            }
            let resolved = current - r / slope;
            *self.q0_slot(which) = resolved;
            self.resolves.push(CoefficientResolve {
                coefficient: name,
                closed_form: current.to_f64_lossy(),
                resolved: resolved.to_f64_lossy(),
                monomial_residual: r.to_f64_lossy(),
            });
        }
    }

    /// Re-runs the residual check (after manual edits, for instance).
    pub fn recheck(&mut self) {
        self.resolve_q0();
    }

    pub fn table(&self) -> Vec<(&'static str, T)> {
        vec![
            ("q2", self.inventory_curvature),
            ("C", self.own_inventory),
            ("D", self.client_inventory),
            ("E", self.alpha_loading),
            ("F", self.uninformed_hedge),
            ("G", self.client_inventory_flow_form),
            ("H", self.informed_flow),
            ("sign_indicator", self.sign_indicator()),
            ("d0", self.slope_alpha),
            ("d1", self.slope_client),
            ("d2", self.slope_uninformed),
            ("f2b", self.client_curvature),
            ("e1", self.client_alpha),
            ("e2", self.client_uninformed),
            ("c0", self.constant),
            ("c1", self.alpha_linear),
            ("c2", self.uninformed_linear),
            ("c3", self.alpha_uninformed),
            ("c4", self.alpha_curvature),
            ("c5", self.uninformed_curvature),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
struct Monomials<T> {
    constant: T,
    alpha: T,
    nu: T,
    alpha_sq: T,
    q_sq: T,
    nu_sq: T,
    alpha_q: T,
    alpha_nu: T,
    q_nu: T,
}

impl<T: Copy> Monomials<T> {
    fn get(&self, which: Q0Coefficient) -> T {
        match which {
            Q0Coefficient::ClientCurvature => self.q_sq,
            Q0Coefficient::ClientUninformed => self.q_nu,
            Q0Coefficient::ClientAlpha => self.alpha_q,
            Q0Coefficient::UninformedCurvature => self.nu_sq,
            Q0Coefficient::AlphaCurvature => self.alpha_sq,
            Q0Coefficient::AlphaUninformed => self.alpha_nu,
            Q0Coefficient::AlphaLinear => self.alpha,
            Q0Coefficient::UninformedLinear => self.nu,
            Q0Coefficient::Constant => self.constant,
        }
    }
}

/// Both closed-form solutions for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub informed: InformedCoefficients<T>,
    pub broker: BrokerCoefficients<T>,
}

pub fn solve<T: Real>(p: &ValidatedParams<T>) -> Solution<T> {
    let informed = solve_informed(p);
    let broker = solve_broker(p, &informed);
    Solution { informed, broker }
}

/// Central finite differences of `f` at `z`: first partials with step `h`,
/// diagonal second partials with step `h2`. Returns `(gradient, diag hessian)`.
pub fn central_differences<T: Real, const N: usize>(
    f: impl Fn([T; N]) -> T,
    z: [T; N],
    h: T,
    h2: T,
) -> ([T; N], [T; N]) {
    let mut grad = [T::zero(); N];
    let mut diag = [T::zero(); N];
    let f0 = f(z);
    for i in 0..N {
        let mut up = z;
        let mut dn = z;
        up[i] = z[i] + h;
        dn[i] = z[i] - h;
        grad[i] = (f(up) - f(dn)) / (T::two() * h);
        up[i] = z[i] + h2;
        dn[i] = z[i] - h2;
        diag[i] = (f(up) - T::two() * f0 + f(dn)) / (h2 * h2);
    }
    (grad, diag)
}

/// Informed partials by central differences (step `1e-5` for first
/// derivatives, `1e-3` for second derivatives).
pub fn informed_partials_fd<T: Real>(
    c: &InformedCoefficients<T>,
    pt: InformedPoint<T>,
) -> InformedPartials<T> {
    let (g, h) = central_differences(
        |z| c.value_at(InformedPoint::from_array(z)),
        pt.to_array(),
        T::lit(1e-5),
        T::lit(1e-3),
    );
    InformedPartials {
        value: c.value_at(pt),
        d_x: g[0],
        d_s: g[1],
        d_ss: h[1],
        d_alpha: g[2],
        d_alpha_alpha: h[2],
        d_q: g[3],
    }
}

/// Broker partials by central differences (same steps as
/// [`informed_partials_fd`]).
pub fn broker_partials_fd<T: Real>(
    c: &BrokerCoefficients<T>,
    pt: BrokerPoint<T>,
) -> BrokerPartials<T> {
    let (g, h) = central_differences(
        |z| c.value_at(BrokerPoint::from_array(z)),
        pt.to_array(),
        T::lit(1e-5),
        T::lit(1e-3),
    );
    BrokerPartials {
        value: c.value_at(pt),
        d_x: g[0],
        d_s: g[1],
        d_ss: h[1],
        d_alpha: g[2],
        d_alpha_alpha: h[2],
        d_qb: g[3],
        d_qi: g[4],
        d_nu: g[5],
        d_nu_nu: h[5],
    }
}
