//! Shape-parameterized point spread functions `g(x, t)` with x-derivatives
//! to third order, and the unit-speed reparametrization.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// `[g, ∂ₓg, ∂ₓ²g, ∂ₓ³g]` at one `(x, t)`.
pub type Jet = [f64; 4];

/// A kernel `g(x, t)`, even in `t`, on a shape domain `X = [x_min, x_max]`.
pub trait Kernel: Send + Sync + Debug {
    fn domain(&self) -> (f64, f64);

    fn jet(&self, x: f64, t: f64) -> Jet;

    /// Jets at fixed `x` for many offsets. Kernels with per-`x` setup cost
    /// override this.
    fn jets(&self, x: f64, ts: &[f64]) -> Vec<Jet> {
        ts.iter().map(|&t| self.jet(x, t)).collect()
    }

    fn value(&self, x: f64, t: f64) -> f64 {
        self.jet(x, t)[0]
    }

    /// k-th partial derivative in `x`, `k ∈ {0, 1, 2, 3}`.
    fn dx(&self, x: f64, t: f64, k: usize) -> f64 {
        self.jet(x, t)[k]
    }

    fn label(&self) -> String;

    /// Parameter at which this kernel takes the base shape `x`; the
    /// identity unless the kernel is reparametrized.
    fn parameter_of_base(&self, x: f64) -> f64 {
        x
    }
}

/// Per-`x` factors of the jet of `exp(−c·x^(−u))`: `x^(−u)` and the
/// coefficients of `h1, h2, h3` (the derivatives of the exponent over `c·x^(−u)`).
#[derive(Clone, Copy)]
struct PowerFactors {
    xu: f64,
    k: [f64; 3],
}

impl PowerFactors {
    fn new(u: f64, x: f64) -> Self {
        let inv = 1.0 / x;
        Self {
            xu: x.powf(-u),
            k: [u * inv, -u * (u + 1.0) * inv * inv, u * (u + 1.0) * (u + 2.0) * inv * inv * inv],
        }
    }

    fn jet(&self, c: f64) -> Jet {
        if c == 0.0 {
            return [1.0, 0.0, 0.0, 0.0];
        }
        let cx = c * self.xu;
        let g = (-cx).exp();
        if g == 0.0 {
            return [0.0; 4];
        }
        let (h1, h2, h3) = (cx * self.k[0], cx * self.k[1], cx * self.k[2]);
        [g, h1 * g, (h2 + h1 * h1) * g, (h3 + 3.0 * h1 * h2 + h1 * h1 * h1) * g]
    }
}

fn check_domain(x_min: f64, x_max: f64) -> Result<()> {
    if !(x_min > 0.0 && x_min < x_max && x_max.is_finite()) {
        return Err(Error::Domain(format!("kernel domain requires 0 < x_min < x_max, got [{x_min}, {x_max}]")));
    }
    Ok(())
}

/// `exp(−|t|^u / x^u)`; `u = 2` is the Gaussian `exp(−t²/x²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ULaplaceKernel {
    u: f64,
    x_min: f64,
    x_max: f64,
}

impl ULaplaceKernel {
    pub fn new(u: f64, x_min: f64, x_max: f64) -> Result<Self> {
        if !(u > 0.0 && u.is_finite()) {
            return Err(Error::Domain(format!("tail exponent u must be positive, got {u}")));
        }
        check_domain(x_min, x_max)?;
        Ok(Self { u, x_min, x_max })
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    /// `|t|^u`; zero at the center, where every x-derivative vanishes.
    fn tail(&self, t: f64) -> f64 {
        if self.u == 2.0 {
            t * t
        } else {
            t.abs().powf(self.u)
        }
    }
}

impl Kernel for ULaplaceKernel {
    fn domain(&self) -> (f64, f64) {
        (self.x_min, self.x_max)
    }

    fn jet(&self, x: f64, t: f64) -> Jet {
        PowerFactors::new(self.u, x).jet(self.tail(t))
    }

    fn jets(&self, x: f64, ts: &[f64]) -> Vec<Jet> {
        let f = PowerFactors::new(self.u, x);
        ts.iter().map(|&t| f.jet(self.tail(t))).collect()
    }

    fn label(&self) -> String {
        format!("ulaplace(u={})", self.u)
    }
}

/// `exp(−t²/x²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel(ULaplaceKernel);

impl GaussianKernel {
    pub fn new(x_min: f64, x_max: f64) -> Result<Self> {
        Ok(Self(ULaplaceKernel::new(2.0, x_min, x_max)?))
    }
}

impl Kernel for GaussianKernel {
    fn domain(&self) -> (f64, f64) {
        self.0.domain()
    }
    fn jet(&self, x: f64, t: f64) -> Jet {
        self.0.jet(x, t)
    }
    fn jets(&self, x: f64, ts: &[f64]) -> Vec<Jet> {
        self.0.jets(x, ts)
    }
    fn label(&self) -> String {
        "gaussian".into()
    }
}

const QUAD_ABS: f64 = 1e-14;
const QUAD_REL: f64 = 1e-11;

/// `[m, m′, m″]` for `m(x) = ‖∂ₓg(x,·)‖²` on `L²([−T/2, T/2])`.
fn speed_moments(kernel: &dyn Kernel, window: f64, x: f64) -> [f64; 3] {
    let half = quad::integrate(
        |t| {
            let [_, g1, g2, g3] = kernel.jet(x, t);
            [g1 * g1, 2.0 * g1 * g2, 2.0 * (g2 * g2 + g1 * g3)]
        },
        0.0,
        0.5 * window,
        QUAD_ABS,
        QUAD_REL,
    );
    [2.0 * half[0], 2.0 * half[1], 2.0 * half[2]]
}

/// `[n, n′, n″]` for the speed `n(x) = ‖∂ₓg(x,·)‖_{L²(window)}`.
fn speed_jet(kernel: &dyn Kernel, window: f64, x: f64) -> [f64; 3] {
    let [m, m1, m2] = speed_moments(kernel, window, x);
    let n = m.sqrt();
    [n, m1 / (2.0 * n), m2 / (2.0 * n) - m1 * m1 / (4.0 * n * n * n)]
}

/// `‖∂ₓg(x,·)‖` on the continuous window `[−T/2, T/2]`.
pub fn speed(kernel: &dyn Kernel, window: f64, x: f64) -> f64 {
    speed_moments(kernel, window, x)[0].sqrt()
}

/// Arc length `s(x) = ∫_{x_min}^x ‖∂_ν g(ν,·)‖ dν` of the curve `x ↦ g(x,·)`.
pub fn arc_length(kernel: &dyn Kernel, window: f64, x: f64) -> Result<f64> {
    let (lo, hi) = kernel.domain();
    if !(lo..=hi).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside kernel domain [{lo}, {hi}]")));
    }
    if x == lo {
        return Ok(0.0);
    }
    Ok(quad::integrate_scalar(|v| speed(kernel, window, v), lo, x, 1e-13, 1e-10))
}

/// Inverse of [`arc_length`] by bisection.
pub fn inverse_arc_length(kernel: &dyn Kernel, window: f64, s: f64) -> Result<f64> {
    let (mut lo, mut hi) = kernel.domain();
    let total = arc_length(kernel, window, hi)?;
    if !(0.0..=total).contains(&s) {
        return Err(Error::Domain(format!("arc length {s} outside [0, {total}]")));
    }
    while hi - lo > 1e-11 {
        let mid = 0.5 * (lo + hi);
        if arc_length(kernel, window, mid)? < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Cubic-Hermite tabulation of `s(x)` from its exact derivative `n(x)`.
#[derive(Debug, Clone)]
pub struct ArcTable {
    x: Vec<f64>,
    s: Vec<f64>,
    n: Vec<f64>,
}

impl ArcTable {
    pub fn new(kernel: &dyn Kernel, window: f64, nodes: usize) -> Result<Self> {
        let (lo, hi) = kernel.domain();
        let nodes = nodes.max(8);
        let h = (hi - lo) / (nodes - 1) as f64;
        let x: Vec<f64> = (0..nodes).map(|j| if j + 1 == nodes { hi } else { lo + j as f64 * h }).collect();
        let jets: Vec<[f64; 3]> = x.iter().map(|&v| speed_jet(kernel, window, v)).collect();
        if let Some(j) = jets.iter().position(|jt| !(jt[0] > 0.0 && jt[0].is_finite())) {
            return Err(Error::Domain(format!(
                "arc table not strictly monotone: speed {} at x = {}",
                jets[j][0], x[j]
            )));
        }
        let mut s = vec![0.0; nodes];
        for j in 1..nodes {
            let dx = x[j] - x[j - 1];
            let (a, b) = (&jets[j - 1], &jets[j]);
            // corrected trapezoid: exact for the Hermite cubic through (n, n′)
            s[j] = s[j - 1] + 0.5 * dx * (a[0] + b[0]) + dx * dx / 12.0 * (a[1] - b[1]);
        }
        Ok(Self { x, s, n: jets.iter().map(|j| j[0]).collect() })
    }

    pub fn total(&self) -> f64 {
        *self.s.last().unwrap()
    }

    fn interval(&self, s: f64) -> usize {
        match self.s.partition_point(|v| *v <= s) {
            0 => 0,
            k => (k - 1).min(self.s.len() - 2),
        }
    }

    /// `(s, ds/dx)` of the Hermite cubic on interval `j` at `x`.
    fn eval(&self, j: usize, x: f64) -> (f64, f64) {
        let h = self.x[j + 1] - self.x[j];
        let tau = (x - self.x[j]) / h;
        let (t2, t3) = (tau * tau, tau * tau * tau);
        let (s0, s1, m0, m1) = (self.s[j], self.s[j + 1], self.n[j] * h, self.n[j + 1] * h);
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * s0
            + (t3 - 2.0 * t2 + tau) * m0
            + (-2.0 * t3 + 3.0 * t2) * s1
            + (t3 - t2) * m1;
        let dv = (6.0 * t2 - 6.0 * tau) * s0
            + (3.0 * t2 - 4.0 * tau + 1.0) * m0
            + (-6.0 * t2 + 6.0 * tau) * s1
            + (3.0 * t2 - 2.0 * tau) * m1;
        (v, dv / h)
    }

    pub fn arc(&self, x: f64) -> f64 {
        let j = match self.x.partition_point(|v| *v <= x) {
            0 => 0,
            k => (k - 1).min(self.x.len() - 2),
        };
        self.eval(j, x).0
    }

    /// `x` with `s(x) = s`, by safeguarded Newton on the interpolant.
    pub fn inverse(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.total());
        let j = self.interval(s);
        let (mut lo, mut hi) = (self.x[j], self.x[j + 1]);
        let mut x = lo + (hi - lo) * (s - self.s[j]) / (self.s[j + 1] - self.s[j]);
        for _ in 0..60 {
            let (v, dv) = self.eval(j, x);
            let f = v - s;
            if f.abs() <= 1e-15 * (1.0 + s.abs()) {
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - f / dv;
            x = if dv > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-16 * x.abs() {
                break;
            }
        }
        x
    }
}

/// `k(ξ, t) = g(φ(ξ), t)` with `φ = s⁻¹(ξ − x_min)`, so that
/// `‖∂_ξ k(ξ,·)‖ = 1` on the window. The wrapped domain is
/// `[x_min, x_min + s(x_max)]`.
#[derive(Debug, Clone)]
pub struct UnitSpeedKernel {
    base: Arc<dyn Kernel>,
    window: f64,
    table: ArcTable,
}

pub const ARC_TABLE_NODES: usize = 1024;

impl UnitSpeedKernel {
    pub fn new(base: Arc<dyn Kernel>, window: f64) -> Result<Self> {
        if !(window > 0.0) {
            return Err(Error::Domain(format!("window must be positive, got {window}")));
        }
        let table = ArcTable::new(base.as_ref(), window, ARC_TABLE_NODES)?;
        Ok(Self { base, window, table })
    }

    pub fn base(&self) -> &Arc<dyn Kernel> {
        &self.base
    }

    pub fn table(&self) -> &ArcTable {
        &self.table
    }

    /// Base shape parameter `φ(ξ)`.
    pub fn base_parameter(&self, xi: f64) -> f64 {
        self.table.inverse(xi - self.base.domain().0)
    }

    /// Wrapped parameter of a base shape `x`.
    pub fn wrapped_parameter(&self, x: f64) -> f64 {
        self.base.domain().0 + self.table.arc(x)
    }

    /// `[φ, φ′, φ″, φ‴]`.
    fn reparam(&self, xi: f64) -> [f64; 4] {
        let x = self.base_parameter(xi);
        let [n, n1, n2] = speed_jet(self.base.as_ref(), self.window, x);
        [x, 1.0 / n, -n1 / (n * n * n), -n2 / n.powi(4) + 3.0 * n1 * n1 / n.powi(5)]
    }
}

fn chain(g: Jet, p: [f64; 4]) -> Jet {
    let [_, p1, p2, p3] = p;
    [
        g[0],
        g[1] * p1,
        g[2] * p1 * p1 + g[1] * p2,
        g[3] * p1 * p1 * p1 + 3.0 * g[2] * p1 * p2 + g[1] * p3,
    ]
}

impl Kernel for UnitSpeedKernel {
    fn domain(&self) -> (f64, f64) {
        let lo = self.base.domain().0;
        (lo, lo + self.table.total())
    }

    fn jet(&self, xi: f64, t: f64) -> Jet {
        let p = self.reparam(xi);
        chain(self.base.jet(p[0], t), p)
    }

    fn jets(&self, xi: f64, ts: &[f64]) -> Vec<Jet> {
        let p = self.reparam(xi);
        self.base.jets(p[0], ts).into_iter().map(|g| chain(g, p)).collect()
    }

    fn label(&self) -> String {
        format!("unit-speed {}", self.base.label())
    }

    fn parameter_of_base(&self, x: f64) -> f64 {
        self.wrapped_parameter(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    ULaplace,
}

/// Serializable kernel choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Tail exponent; ignored for the Gaussian.
    #[serde(default = "default_u")]
    pub u: f64,
    #[serde(default = "default_unit_speed")]
    pub unit_speed: bool,
}

fn default_u() -> f64 {
    2.0
}

fn default_unit_speed() -> bool {
    true
}

impl KernelSpec {
    pub fn gaussian(unit_speed: bool) -> Self {
        Self { family: KernelFamily::Gaussian, u: 2.0, unit_speed }
    }

    pub fn ulaplace(u: f64, unit_speed: bool) -> Self {
        Self { family: KernelFamily::ULaplace, u, unit_speed }
    }

    /// Builds the kernel on base domain `[x_min, x_max]`; the unit-speed
    /// variant uses arc length over `[−window/2, window/2]`.
    pub fn build(&self, x_min: f64, x_max: f64, window: f64) -> Result<Arc<dyn Kernel>> {
        let base: Arc<dyn Kernel> = match self.family {
            KernelFamily::Gaussian => Arc::new(GaussianKernel::new(x_min, x_max)?),
            KernelFamily::ULaplace => Arc::new(ULaplaceKernel::new(self.u, x_min, x_max)?),
        };
        if self.unit_speed {
            Ok(Arc::new(UnitSpeedKernel::new(base, window)?))
        } else {
            Ok(base)
        }
    }
}
