//! Finite-difference solver for the interface parabolic problem
//! `u_t = (1/2) D u_xx` on each side, `u` continuous and
//! `lambda u_x(0+) = (1 - lambda) u_x(0-)` at every interface.
//!
//! The problem is discretized in flux form, `rho u_t = (1/2)(kappa u_x)_x`
//! with the coefficients of a [`LineProfile`], on a grid with a node on
//! every interface. Each node balances the fluxes through the faces of its
//! control volume, so at an interface node the continuum flux condition is
//! enforced with the time derivative weighted by the capacities of the two
//! half-cells; expanding both one-sided differences to second order shows
//! that this node equation is consistent to `O(h)` at a single node, which
//! keeps the global error `O(h^2)`. The total capacity `sum rho_i V_i u_i`
//! is conserved exactly under no-flux boundaries, and `rho = 1` on every
//! segment when the medium is conservative, so `int u dx` itself is.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::media::{InterfaceMedium, LineProfile};

/// Spatial grid with a node on every interface and uniform spacing inside
/// each segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nodes: Vec<f64>,
    interface_nodes: Vec<usize>,
}

impl Grid {
    /// Distributes `n_cells` over the segments cut by `interfaces` in
    /// proportion to their lengths, with at least two cells per segment.
    pub fn new(x_min: f64, x_max: f64, n_cells: usize, interfaces: &[f64]) -> Result<Self> {
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(invalid("grid", format!("need finite x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if interfaces.iter().any(|&c| !(x_min < c && c < x_max)) {
            return Err(invalid("grid", "every interface must lie strictly inside the domain"));
        }
        let mut cuts = vec![x_min];
        cuts.extend_from_slice(interfaces);
        cuts.push(x_max);
        let n_segments = cuts.len() - 1;
        if n_cells < 2 * n_segments {
            return Err(invalid("n_cells", format!("need at least {} cells for {n_segments} segments", 2 * n_segments)));
        }
        let length = x_max - x_min;
        let mut nodes = vec![x_min];
        let mut interface_nodes = Vec::with_capacity(interfaces.len());
        let mut used = 0;
        for k in 0..n_segments {
            let (lo, hi) = (cuts[k], cuts[k + 1]);
            let cells = if k + 1 == n_segments {
                n_cells - used
            } else {
                (((hi - lo) / length * n_cells as f64).round() as usize).max(2)
            };
            let cells = cells.min(n_cells - used - 2 * (n_segments - k - 1)).max(2);
            used += cells;
            let h = (hi - lo) / cells as f64;
            for j in 1..cells {
                nodes.push(lo + j as f64 * h);
            }
            nodes.push(hi);
            if k + 1 < n_segments {
                interface_nodes.push(nodes.len() - 1);
            }
        }
        Ok(Self { nodes, interface_nodes })
    }

    /// Grid for a single-interface medium at `x = 0`.
    pub fn around_origin(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        Self::new(x_min, x_max, n_cells, &[0.0])
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn x_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.nodes.last().expect("grid has nodes")
    }

    pub fn interface_nodes(&self) -> &[usize] {
        &self.interface_nodes
    }

    pub fn max_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Trapezoid weights: half the length of the two cells adjacent to each node.
    pub fn volumes(&self) -> Vec<f64> {
        let n = self.nodes.len();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.nodes[i] - self.nodes[i - 1] } else { 0.0 };
                let right = if i + 1 < n { self.nodes[i + 1] - self.nodes[i] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect()
    }

    /// Index `i` and weight `w` with `x = (1 - w) x_i + w x_{i+1}`.
    pub fn locate(&self, x: f64) -> Result<(usize, f64)> {
        if !(self.x_min() <= x && x <= self.x_max()) {
            return Err(invalid("x", format!("{x} outside the grid [{}, {}]", self.x_min(), self.x_max())));
        }
        let i = self.nodes.partition_point(|&n| n <= x).saturating_sub(1).min(self.nodes.len() - 2);
        let w = (x - self.nodes[i]) / (self.nodes[i + 1] - self.nodes[i]);
        Ok((i, w))
    }

    /// Linear interpolation of nodal values.
    pub fn interpolate(&self, u: &[f64], x: f64) -> Result<f64> {
        let (i, w) = self.locate(x)?;
        Ok((1.0 - w) * u[i] + w * u[i + 1])
    }

    /// Nodal values of a normalized hat over one cell centred as close as the
    /// grid allows to `x0`: the unit mass is split linearly between the two
    /// nodes bracketing `x0`.
    pub fn delta(&self, x0: f64) -> Result<Vec<f64>> {
        let (i, w) = self.locate(x0)?;
        let vol = self.volumes();
        let mut u = vec![0.0; self.nodes.len()];
        u[i] += (1.0 - w) / vol[i];
        u[i + 1] += w / vol[i + 1];
        Ok(u)
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// Discrete `L^2` norm of `u - exact` with trapezoid weights.
    pub fn l2_error(&self, u: &[f64], exact: impl Fn(f64) -> f64) -> f64 {
        self.volumes()
            .iter()
            .zip(u)
            .zip(&self.nodes)
            .map(|((v, ui), &x)| v * (ui - exact(x)).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Outer boundary condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Boundary {
    /// Prescribed value (`Dirichlet(0.0)` is absorbing).
    Dirichlet(f64),
    /// Zero flux.
    Neumann,
}

impl Boundary {
    fn is_homogeneous(&self) -> bool {
        matches!(self, Boundary::Neumann | Boundary::Dirichlet(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    /// Backward Euler.
    #[default]
    Implicit,
    /// Forward Euler, subject to a stability check.
    Explicit,
    /// Crank–Nicolson after four half-size backward Euler steps.
    CrankNicolson,
}

/// Interface problem on a bounded grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem {
    pub profile: LineProfile,
    pub grid: Grid,
    pub left: Boundary,
    pub right: Boundary,
    pub scheme: TimeScheme,
    /// Constant advection velocity; only allowed for conservative media.
    pub drift: f64,
}

impl PdeProblem {
    pub fn new(profile: LineProfile, grid: Grid, left: Boundary, right: Boundary) -> Result<Self> {
        let p = Self { profile, grid, left, right, scheme: TimeScheme::Implicit, drift: 0.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_scheme(mut self, scheme: TimeScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_drift(mut self, drift: f64) -> Result<Self> {
        self.drift = drift;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let nodes = self.grid.nodes();
        for &c in self.profile.interfaces() {
            if !self.grid.interface_nodes().iter().any(|&i| nodes[i] == c) {
                return Err(invalid("grid", format!("no node at the interface {c}")));
            }
        }
        if !self.drift.is_finite() {
            return Err(invalid("drift", "must be finite"));
        }
        if self.drift != 0.0 && !self.profile.is_conservative() {
            return Err(invalid("drift", "a drift is only supported for conservative interfaces"));
        }
        Ok(())
    }

    /// Capacities `rho V` per node.
    fn capacities(&self) -> Vec<f64> {
        let x = self.grid.nodes();
        let n = x.len();
        (0..n)
            .map(|i| {
                let mut c = 0.0;
                if i > 0 {
                    c += 0.5 * (x[i] - x[i - 1]) * self.profile.capacity(self.profile.segment_of(0.5 * (x[i] + x[i - 1])));
                }
                if i + 1 < n {
                    c += 0.5 * (x[i + 1] - x[i]) * self.profile.capacity(self.profile.segment_of(0.5 * (x[i] + x[i + 1])));
                }
                c
            })
            .collect()
    }

    /// Tridiagonal flux operator `L` with `C u' = L u`, rows of Dirichlet
    /// nodes zeroed.
    fn operator(&self) -> Tridiagonal {
        let x = self.grid.nodes();
        let n = x.len();
        let v = self.drift;
        let mut op = Tridiagonal::zeros(n);
        for i in 0..n - 1 {
            let h = x[i + 1] - x[i];
            let a = 0.5 * self.profile.conductivity(self.profile.segment_of(0.5 * (x[i] + x[i + 1]))) / h;
            // face flux F = a (u_{i+1} - u_i) - v u_upwind, leaving node i and entering node i+1
            let (from_i, from_next) = if v >= 0.0 { (a + v, a) } else { (a, a - v) };
            // node i gains F, node i+1 loses F
            op.diag[i] -= from_i;
            op.upper[i] += from_next;
            op.lower[i + 1] += from_i;
            op.diag[i + 1] -= from_next;
        }
        for (row, bc) in [(0, self.left), (n - 1, self.right)] {
            if let Boundary::Dirichlet(_) = bc {
                op.lower[row] = 0.0;
                op.diag[row] = 0.0;
                op.upper[row] = 0.0;
            }
        }
        op
    }

    /// Largest stable explicit step: the smaller of `h_min^2 / (2 max D)` and
    /// the node-wise bound `C_i / (sum of outgoing face coefficients)`.
    pub fn explicit_limit(&self) -> f64 {
        let caps = self.capacities();
        let op = self.operator();
        let nodewise = caps
            .iter()
            .zip(&op.diag)
            .filter(|(_, d)| **d != 0.0)
            .map(|(c, d)| c / d.abs())
            .fold(f64::INFINITY, f64::min);
        let h = self.grid.min_spacing();
        nodewise.min(h * h / (2.0 * self.profile.max_diffusivity()))
    }
}

#[derive(Debug, Clone)]
struct Tridiagonal {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Tridiagonal {
    fn zeros(n: usize) -> Self {
        Self { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n] }
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        for i in 0..n {
            let mut s = self.diag[i] * u[i];
            if i > 0 {
                s += self.lower[i] * u[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * u[i + 1];
            }
            out[i] = s;
        }
    }

    /// `diag(cap) - theta dt L`.
    fn shifted(op: &Tridiagonal, caps: &[f64], factor: f64) -> Self {
        Self {
            lower: op.lower.iter().map(|l| -factor * l).collect(),
            diag: op.diag.iter().zip(caps).map(|(d, c)| c - factor * d).collect(),
            upper: op.upper.iter().map(|u| -factor * u).collect(),
        }
    }

    /// Thomas algorithm; `scratch` holds the modified upper diagonal.
    fn solve(&self, rhs: &mut [f64], scratch: &mut [f64]) -> Result<()> {
        let n = rhs.len();
        let mut pivot = self.diag[0];
        for i in 0..n {
            if i > 0 {
                pivot = self.diag[i] - self.lower[i] * scratch[i - 1];
            }
            if !(pivot.abs() > 1e-300) || !pivot.is_finite() {
                return Err(Error::SingularSystem { row: i, pivot });
            }
            scratch[i] = self.upper[i] / pivot;
            rhs[i] = if i > 0 { (rhs[i] - self.lower[i] * rhs[i - 1]) / pivot } else { rhs[i] / pivot };
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= scratch[i] * rhs[i + 1];
        }
        Ok(())
    }
}

/// Snapshots of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    pub x: Vec<f64>,
    pub t_snapshots: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    /// `int u dx` per snapshot.
    pub mass: Vec<f64>,
    /// `int rho u dx` per snapshot, the quantity the scheme conserves.
    pub capacity_mass: Vec<f64>,
    /// Cumulative `int rho u dx` that left through the outer boundaries.
    pub boundary_outflow: Vec<f64>,
    /// Largest `|mass(t_{n+1}) - mass(t_n)| / |mass(0)|` over all steps.
    pub max_step_mass_change: f64,
    pub n_steps: usize,
    pub scheme: TimeScheme,
}

impl GridSolution {
    pub fn snapshot(&self, k: usize) -> &[f64] {
        &self.u[k]
    }

    /// Last snapshot.
    pub fn final_state(&self) -> &[f64] {
        self.u.last().expect("at least the initial snapshot")
    }
}

/// Solves the interface problem from `u0` to `t_end` with steps of at most
/// `dt`, recording `u` at `t = 0` and at every time in `snapshots` (which
/// must be increasing and within `(0, t_end]`; `t_end` is always recorded).
pub fn solve_interface_pde(problem: &PdeProblem, u0: &[f64], t_end: f64, dt: f64, snapshots: &[f64]) -> Result<GridSolution> {
    let grid = &problem.grid;
    let n = grid.n_nodes();
    if u0.len() != n {
        return Err(invalid("u0", format!("expected {n} nodal values, got {}", u0.len())));
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("u0", "values must be finite"));
    }
    crate::error::ensure_positive("t_end", t_end)?;
    crate::error::ensure_positive("dt", dt)?;
    if snapshots.windows(2).any(|w| w[1] <= w[0]) || snapshots.iter().any(|&t| !(t > 0.0 && t <= t_end)) {
        return Err(invalid("snapshots", "must be increasing and inside (0, t_end]"));
    }
    if problem.scheme == TimeScheme::Explicit {
        let limit = problem.explicit_limit();
        if dt > limit {
            return Err(Error::Cfl { dt, limit });
        }
    }
    let mut stops: Vec<f64> = snapshots.to_vec();
    if stops.last().is_none_or(|&t| t < t_end) {
        stops.push(t_end);
    }

    let caps = problem.capacities();
    let vols = grid.volumes();
    let op = problem.operator();
    let mut u = u0.to_vec();
    apply_dirichlet(problem, &mut u);
    let mass_of = |u: &[f64]| crate::stats::compensated_sum(vols.iter().zip(u).map(|(v, x)| v * x));
    let cap_mass_of = |u: &[f64]| crate::stats::compensated_sum(caps.iter().zip(u).map(|(c, x)| c * x));
    let mass0 = mass_of(&u);
    let check_max = cfg!(debug_assertions)
        && problem.scheme == TimeScheme::Implicit
        && problem.left.is_homogeneous()
        && problem.right.is_homogeneous()
        && u.iter().all(|&v| v >= 0.0);

    let mut sol = GridSolution {
        x: grid.nodes().to_vec(),
        t_snapshots: vec![0.0],
        u: vec![u.clone()],
        mass: vec![mass0],
        capacity_mass: vec![cap_mass_of(&u)],
        boundary_outflow: vec![0.0],
        max_step_mass_change: 0.0,
        n_steps: 0,
        scheme: problem.scheme,
    };
    let mut stepper = Stepper::new(problem, &caps, &op);
    let mut t = 0.0;
    let mut outflow = 0.0;
    let mut warmup = if problem.scheme == TimeScheme::CrankNicolson { 4 } else { 0 };
    for &stop in &stops {
        let steps = ((stop - t) / dt - 1e-9).ceil().max(1.0) as usize;
        let h = (stop - t) / steps as f64;
        for _ in 0..steps {
            let before_mass = mass_of(&u);
            let before_cap = cap_mass_of(&u);
            let before_max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if warmup > 0 {
                stepper.implicit(&mut u, 0.5 * h)?;
                stepper.implicit(&mut u, 0.5 * h)?;
                warmup -= 2;
            } else {
                stepper.step(&mut u, h)?;
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { step: sol.n_steps + 1 });
            }
            sol.n_steps += 1;
            outflow += before_cap - cap_mass_of(&u);
            let change = (mass_of(&u) - before_mass).abs() / mass0.abs().max(f64::MIN_POSITIVE);
            sol.max_step_mass_change = sol.max_step_mass_change.max(change);
            if check_max {
                let after = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                debug_assert!(after <= before_max * (1.0 + 1e-12) + 1e-300, "discrete maximum principle violated");
                debug_assert!(u.iter().all(|&v| v >= -1e-12 * before_max), "negative values from nonnegative data");
            }
        }
        t = stop;
        sol.t_snapshots.push(stop);
        sol.u.push(u.clone());
        sol.mass.push(mass_of(&u));
        sol.capacity_mass.push(cap_mass_of(&u));
        sol.boundary_outflow.push(outflow);
    }
    Ok(sol)
}

fn apply_dirichlet(problem: &PdeProblem, u: &mut [f64]) {
    let n = u.len();
    if let Boundary::Dirichlet(g) = problem.left {
        u[0] = g;
    }
    if let Boundary::Dirichlet(g) = problem.right {
        u[n - 1] = g;
    }
}

/// Time stepper caching the factor-independent pieces.
struct Stepper<'a> {
    problem: &'a PdeProblem,
    caps: Vec<f64>,
    op: &'a Tridiagonal,
    /// Capacities with Dirichlet rows set to one, so those rows read `u = g`.
    row_caps: Vec<f64>,
    rhs: Vec<f64>,
    work: Vec<f64>,
    scratch: Vec<f64>,
    cached: Option<(f64, Tridiagonal)>,
}

impl<'a> Stepper<'a> {
    fn new(problem: &'a PdeProblem, caps: &[f64], op: &'a Tridiagonal) -> Self {
        let n = caps.len();
        let mut row_caps = caps.to_vec();
        if let Boundary::Dirichlet(_) = problem.left {
            row_caps[0] = 1.0;
        }
        if let Boundary::Dirichlet(_) = problem.right {
            row_caps[n - 1] = 1.0;
        }
        Self {
            problem,
            caps: caps.to_vec(),
            op,
            row_caps,
            rhs: vec![0.0; n],
            work: vec![0.0; n],
            scratch: vec![0.0; n],
            cached: None,
        }
    }

    fn matrix(&mut self, factor: f64) -> &Tridiagonal {
        if self.cached.as_ref().is_none_or(|(f, _)| *f != factor) {
            self.cached = Some((factor, Tridiagonal::shifted(self.op, &self.row_caps, factor)));
        }
        &self.cached.as_ref().expect("just set").1
    }

    fn step(&mut self, u: &mut [f64], h: f64) -> Result<()> {
        match self.problem.scheme {
            TimeScheme::Implicit => self.implicit(u, h),
            TimeScheme::Explicit => {
                self.op.apply(u, &mut self.work);
                for i in 0..u.len() {
                    u[i] += h * self.work[i] / self.caps[i];
                }
                apply_dirichlet(self.problem, u);
                Ok(())
            }
            TimeScheme::CrankNicolson => {
                self.op.apply(u, &mut self.work);
                for i in 0..u.len() {
                    self.rhs[i] = self.row_caps[i] * u[i] + 0.5 * h * self.work[i];
                }
                self.solve_into(u, 0.5 * h)
            }
        }
    }

    fn implicit(&mut self, u: &mut [f64], h: f64) -> Result<()> {
        for i in 0..u.len() {
            self.rhs[i] = self.row_caps[i] * u[i];
        }
        self.solve_into(u, h)
    }

    fn solve_into(&mut self, u: &mut [f64], factor: f64) -> Result<()> {
        let n = u.len();
        if let Boundary::Dirichlet(g) = self.problem.left {
            self.rhs[0] = g;
        }
        if let Boundary::Dirichlet(g) = self.problem.right {
            self.rhs[n - 1] = g;
        }
        let mut rhs = std::mem::take(&mut self.rhs);
        let mut scratch = std::mem::take(&mut self.scratch);
        let result = self.matrix(factor).solve(&mut rhs, &mut scratch);
        u.copy_from_slice(&rhs);
        self.rhs = rhs;
        self.scratch = scratch;
        result
    }
}

/// Time series `(t, u(t, x_obs))` by linear interpolation between nodes.
pub fn breakthrough_curve(solution: &GridSolution, x_obs: f64) -> Result<Vec<(f64, f64)>> {
    let first = solution.x[0];
    let last = *solution.x.last().expect("nonempty grid");
    if !(first <= x_obs && x_obs <= last) {
        return Err(invalid("x_obs", format!("{x_obs} outside the grid [{first}, {last}]")));
    }
    let i = solution.x.partition_point(|&n| n <= x_obs).saturating_sub(1).min(solution.x.len() - 2);
    let w = (x_obs - solution.x[i]) / (solution.x[i + 1] - solution.x[i]);
    Ok(solution
        .t_snapshots
        .iter()
        .zip(&solution.u)
        .map(|(&t, u)| (t, (1.0 - w) * u[i] + w * u[i + 1]))
        .collect())
}

/// Heat conduction between materials with conductivities `kappa` and heat
/// capacities `rho`: `D = kappa / rho` and `lambda = kappa+ / (kappa+ + kappa-)`.
pub fn preset_heat_conduction(kappa_plus: f64, kappa_minus: f64, rho_plus: f64, rho_minus: f64) -> Result<InterfaceMedium> {
    for (name, v) in [("kappa_plus", kappa_plus), ("kappa_minus", kappa_minus), ("rho_plus", rho_plus), ("rho_minus", rho_minus)] {
        crate::error::ensure_positive(name, v)?;
    }
    InterfaceMedium::new(kappa_plus / rho_plus, kappa_minus / rho_minus, kappa_plus / (kappa_plus + kappa_minus))
}

/// Arrested topographic wave over a shelf with bottom slopes `h_plus`,
/// `h_minus`: `D = -r / (f h)` with `lambda = 1/2`. The solver's time axis
/// plays the role of the along-shore coordinate.
pub fn preset_atw(r: f64, f: f64, h_plus: f64, h_minus: f64) -> Result<InterfaceMedium> {
    crate::error::ensure_positive("r", r)?;
    if !(f < 0.0) || !f.is_finite() {
        return Err(invalid("f", "the Coriolis parameter must be negative"));
    }
    crate::error::ensure_positive("h_plus", h_plus)?;
    crate::error::ensure_positive("h_minus", h_minus)?;
    InterfaceMedium::new(-r / (f * h_plus), -r / (f * h_minus), 0.5)
}

/// Observed order `log2(e_coarse / e_fine)` for each successive halving.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
