//! Exact transient solvers by uniformization.
//!
//! The semigroup `e^{tL}` of a generator with uniformization rate
//! `Lambda = max |diagonal|` is the Poisson mixture
//! `sum_k e^{-Lambda t} (Lambda t)^k / k! P^k` with `P = I + L/Lambda`
//! substochastic, so probability vectors stay probability vectors up to the
//! truncated tail. The same power sequence yields exact operator integrals
//! `int_0^h tau^m e^{tau L} dtau` through Poisson survival functions, which is
//! how inhomogeneous (Duhamel) terms are accumulated without operator-norm
//! error.

use std::sync::Arc;

use crate::generator::SparseOperator;
use crate::lattice::{Coord, Geometry, Kernel, LabeledConfig, LatticeBox, StateSpace};
use crate::{Error, Result};

/// Tunable solver parameters. Defaults match the crate-wide contracts.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Poisson tail cutoff per checkpoint.
    pub tail_tol: f64,
    /// Largest Poisson mean per checkpoint of a plain evolution.
    pub checkpoint_mean: f64,
    /// Largest Poisson mean per source-carrying step.
    pub step_mean: f64,
    /// Reject solves whose total Poisson mean exceeds this budget.
    pub mean_budget: f64,
    /// Width of the near-boundary layer for the boundary-mass diagnostic,
    /// in sites (`None` means the kernel range).
    pub boundary_margin: Option<Coord>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tail_tol: 1e-12,
            checkpoint_mean: 64.0,
            step_mean: 256.0,
            mean_budget: 5e7,
            boundary_margin: None,
        }
    }
}

/// Distribution of the process at a grid of times.
#[derive(Debug, Clone)]
pub struct DistributionSeries {
    pub space: Arc<StateSpace>,
    pub times: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// Probability mass within the configured margin of the box edge.
    pub boundary_mass: Vec<f64>,
}

impl DistributionSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Solution table of the `N^2`-speeded discrete heat equation on a torus.
#[derive(Debug, Clone)]
pub struct DensityTable {
    pub n_scale: f64,
    pub boxed: LatticeBox,
    pub times: Vec<f64>,
    /// One row per time, indexed by site id.
    pub values: Vec<Vec<f64>>,
}

impl DensityTable {
    pub fn value(&self, time_idx: usize, site: usize) -> f64 {
        self.values[time_idx][site]
    }
}

/// Initial density profile `rho_0` on the macroscopic coordinate `u = x/N`.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Const(f64),
    /// `mean + amp * sin(2 pi u / period)`.
    Sine { mean: f64, amp: f64, period: f64 },
}

impl Profile {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Profile::Const(v) => *v,
            Profile::Sine { mean, amp, period } => {
                mean + amp * (2.0 * std::f64::consts::PI * u / period).sin()
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Profile::Const(_) => true,
            Profile::Sine { amp, .. } => *amp == 0.0,
        }
    }
}

/// Reusable uniformization engine for one operator at one speed.
pub struct Evolver<'a> {
    op: &'a SparseOperator,
    speed: f64,
    opts: SolverOptions,
    scratch_a: Vec<f64>,
    scratch_b: Vec<f64>,
}

impl<'a> Evolver<'a> {
    pub fn new(op: &'a SparseOperator, speed: f64, opts: SolverOptions) -> Self {
        let dim = op.dim();
        Evolver { op, speed, opts, scratch_a: vec![0.0; dim], scratch_b: vec![0.0; dim] }
    }

    pub fn operator(&self) -> &SparseOperator {
        self.op
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// Effective uniformization rate `speed * max |diag|`.
    pub fn lambda(&self) -> f64 {
        self.speed * self.op.max_diag()
    }

    /// Evolves `v` in place over `dt` (checkpointed plain uniformization).
    pub fn evolve_in_place(&mut self, v: &mut Vec<f64>, dt: f64) -> Result<()> {
        if dt < 0.0 {
            return Err(Error::InvalidInput("negative evolution time".into()));
        }
        let lambda = self.lambda();
        let total = lambda * dt;
        if total > self.opts.mean_budget {
            return Err(Error::Budget(format!(
                "uniformization mean {total:.3e} exceeds budget {:.3e}",
                self.opts.mean_budget
            )));
        }
        if total == 0.0 {
            return Ok(());
        }
        let steps = (total / self.opts.checkpoint_mean).ceil().max(1.0) as usize;
        let lam = total / steps as f64;
        for _ in 0..steps {
            self.poisson_mix(v, lam);
        }
        Ok(())
    }

    /// One Poisson mixture `v <- sum_k pois_k(lam) P^k v`.
    fn poisson_mix(&mut self, v: &mut Vec<f64>, lam: f64) {
        let dim = self.op.dim();
        let lam_base = self.op.max_diag();
        let tol = self.opts.tail_tol;
        let mut term = (-lam).exp();
        let mut tail = 1.0 - term;
        let out = &mut self.scratch_a;
        out.iter_mut().for_each(|x| *x = 0.0);
        let cur: &mut Vec<f64> = v;
        let next = &mut self.scratch_b;
        next.resize(dim, 0.0);
        let mut k = 0usize;
        loop {
            if term > 0.0 {
                axpy(out, term, cur);
            }
            if tail < tol {
                break;
            }
            self.op.apply_p(lam_base, cur, next);
            std::mem::swap(cur, next);
            k += 1;
            term *= lam / k as f64;
            tail -= term;
            if k > (lam + 10.0 * lam.sqrt() + 60.0) as usize {
                break; // hard cap; tail is below tolerance by then
            }
        }
        std::mem::swap(v, out);
    }

    /// Advances `phi` by `h` while accumulating the Duhamel integral of the
    /// polynomial source `Q(u) = q0 + q1 u + q2 u^2` on `[0, h]`:
    /// `phi <- e^{hL} phi + int_0^h e^{(h-u) L} Q(u) du`, exact in the
    /// operator and exact for polynomial sources up to the Poisson tail.
    pub fn duhamel_step(
        &mut self,
        phi: &mut Vec<f64>,
        h: f64,
        q0: &[f64],
        q1: &[f64],
        q2: &[f64],
    ) -> Result<()> {
        if h < 0.0 {
            return Err(Error::InvalidInput("negative step".into()));
        }
        if h == 0.0 {
            return Ok(());
        }
        let lambda = self.lambda();
        if lambda == 0.0 {
            // L = 0: plain quadrature of the polynomial
            for i in 0..phi.len() {
                phi[i] += q0[i] * h + q1[i] * h * h / 2.0 + q2[i] * h * h * h / 3.0;
            }
            return Ok(());
        }
        let total = lambda * h;
        let substeps = (total / self.opts.step_mean).ceil().max(1.0) as usize;
        let delta = h / substeps as f64;
        let dim = self.op.dim();
        let mut block: Vec<[f64; 4]> = vec![[0.0; 4]; dim];
        let mut block_next: Vec<[f64; 4]> = vec![[0.0; 4]; dim];
        let mut out: Vec<f64> = vec![0.0; dim];
        for s in 0..substeps {
            let u1 = (s + 1) as f64 * delta;
            // R(tau) = Q(u1 - tau) = A + B tau + C tau^2 on [0, delta]
            for i in 0..dim {
                let a = q0[i] + q1[i] * u1 + q2[i] * u1 * u1;
                let b = -(q1[i] + 2.0 * q2[i] * u1);
                block[i] = [phi[i], a, b, q2[i]];
            }
            self.poisson_source_mix(&mut block, &mut block_next, &mut out, delta);
            std::mem::swap(phi, &mut out);
        }
        Ok(())
    }

    /// Core blocked mixture: given `W = [phi, A, B, C]` computes
    /// `out = e^{dL} phi + S0 A + S1 B + S2 C` with
    /// `Sm = int_0^d tau^m e^{tau L} dtau`.
    fn poisson_source_mix(
        &self,
        block: &mut Vec<[f64; 4]>,
        block_next: &mut Vec<[f64; 4]>,
        out: &mut [f64],
        delta: f64,
    ) {
        let lam_base = self.op.max_diag();
        let lambda = self.lambda();
        let lam = lambda * delta;
        let tol = self.opts.tail_tol;
        out.iter_mut().for_each(|x| *x = 0.0);

        // Poisson pmf terms two ahead of k, and survival Q_k = P(X > k).
        let mut terms = [0.0f64; 3]; // t_k, t_{k+1}, t_{k+2}
        terms[0] = (-lam).exp();
        terms[1] = terms[0] * lam;
        terms[2] = terms[1] * lam / 2.0;
        let mut q = [0.0f64; 3]; // Q_k, Q_{k+1}, Q_{k+2}
        q[0] = 1.0 - terms[0];
        q[1] = q[0] - terms[1];
        q[2] = q[1] - terms[2];

        let inv_l = 1.0 / lambda;
        let target0 = delta;
        let target1 = delta * delta / 2.0;
        let target2 = delta * delta * delta / 3.0;
        let mut sum0 = 0.0;
        let mut sum1 = 0.0;
        let mut sum2 = 0.0;
        let mut k = 0usize;
        let cap = (lam + 10.0 * lam.sqrt() + 60.0) as usize;
        loop {
            let kf = k as f64;
            let w_phi = terms[0];
            let w0 = q[0] * inv_l;
            let w1 = (kf + 1.0) * q[1] * inv_l * inv_l;
            let w2 = (kf + 1.0) * (kf + 2.0) * q[2] * inv_l * inv_l * inv_l;
            sum0 += w0;
            sum1 += w1;
            sum2 += w2;
            accumulate_block(out, block, [w_phi, w0, w1, w2]);
            let done = q[0] < tol
                && (target0 - sum0) < tol * target0
                && (target1 - sum1) < tol * target1
                && (target2 - sum2) < tol * target2;
            if done || k >= cap {
                break;
            }
            self.op.apply_p_block(lam_base, block, block_next);
            std::mem::swap(block, block_next);
            k += 1;
            // advance the pmf window: need t_{k+2}
            terms[0] = terms[1];
            terms[1] = terms[2];
            terms[2] = terms[1] * lam / (k + 2) as f64;
            q[0] = q[1];
            q[1] = q[2];
            q[2] = q[1] - terms[2];
        }
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    use rayon::prelude::*;
    if y.len() >= 65536 {
        y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, xi)| *yi += a * xi);
    } else {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += a * xi;
        }
    }
}

fn accumulate_block(out: &mut [f64], block: &[[f64; 4]], w: [f64; 4]) {
    use rayon::prelude::*;
    if out.len() >= 65536 {
        out.par_iter_mut().zip(block.par_iter()).for_each(|(o, b)| {
            *o += w[0] * b[0] + w[1] * b[1] + w[2] * b[2] + w[3] * b[3];
        });
    } else {
        for (o, b) in out.iter_mut().zip(block) {
            *o += w[0] * b[0] + w[1] * b[1] + w[2] * b[2] + w[3] * b[3];
        }
    }
}

/// Applies `e^{dt * speed * L}` to a (possibly signed) vector.
///
/// Linear in the input; no probability normalization. The symmetric
/// negative-semidefinite generator makes the map non-expansive in `L^2`;
/// relative growth beyond `1e-9` is flagged as a numerical failure.
pub fn checkpointed_evolve(
    op: &SparseOperator,
    speed: f64,
    v: &[f64],
    dt: f64,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidInput("non-finite input vector".into()));
    }
    let norm_before = l2_norm(v);
    let mut out = v.to_vec();
    let mut ev = Evolver::new(op, speed, opts.clone());
    ev.evolve_in_place(&mut out, dt)?;
    if op.is_symmetric() {
        let norm_after = l2_norm(&out);
        if norm_after > norm_before * (1.0 + 1e-9) {
            return Err(Error::Numerical(format!(
                "L2 norm grew from {norm_before} to {norm_after} under a symmetric semigroup"
            )));
        }
    }
    Ok(out)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Probability mass of `dist` within `margin` sites of the box edge
/// (zero on tori, which have no boundary).
pub fn boundary_mass(space: &StateSpace, dist: &[f64], margin: Coord) -> f64 {
    let Some(boxed) = space.lattice_box() else { return 0.0 };
    if boxed.geometry() == Geometry::Torus {
        return 0.0;
    }
    let cut = boxed.half_width() - margin;
    let mut mass = 0.0;
    for (id, &p) in dist.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let near = space
            .unrank(id)
            .iter()
            .any(|&s| space.site_point(s).iter().any(|&c| c.abs() > cut));
        if near {
            mass += p;
        }
    }
    mass
}

/// Solves the forward equation from a point mass at `initial` on the grid
/// `times` by uniformization.
pub fn solve_forward(
    op: &SparseOperator,
    space: &Arc<StateSpace>,
    kernel: &Kernel,
    initial: usize,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<DistributionSeries> {
    if times.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    if times[0] < 0.0 || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("times must be increasing and nonnegative".into()));
    }
    if initial >= space.size() {
        return Err(Error::InvalidInput("initial state out of range".into()));
    }
    let span = times[times.len() - 1];
    if op.max_diag() * span > opts.mean_budget {
        return Err(Error::Budget(format!(
            "Lambda * span = {:.3e} exceeds budget {:.3e}",
            op.max_diag() * span,
            opts.mean_budget
        )));
    }
    let margin = opts.boundary_margin.unwrap_or(kernel.range());
    let mut v = vec![0.0; space.size()];
    v[initial] = 1.0;
    let mut ev = Evolver::new(op, 1.0, opts.clone());
    let mut vectors = Vec::with_capacity(times.len());
    let mut bmass = Vec::with_capacity(times.len());
    let mut prev_t = 0.0;
    for &t in times {
        ev.evolve_in_place(&mut v, t - prev_t)?;
        prev_t = t;
        bmass.push(boundary_mass(space, &v, margin));
        vectors.push(v.clone());
    }
    Ok(DistributionSeries {
        space: Arc::clone(space),
        times: times.to_vec(),
        vectors,
        boundary_mass: bmass,
    })
}

/// Solves the `N^2`-speeded discrete heat equation for the mean occupation
/// on a one-dimensional torus from the profile `rho_0(x/N)`.
pub fn solve_density(
    kernel: &Kernel,
    profile: &Profile,
    n_scale: f64,
    boxed: &LatticeBox,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<DensityTable> {
    if kernel.dimension() != 1 || boxed.dimension() != 1 {
        return Err(Error::InvalidInput("density tables are one-dimensional".into()));
    }
    if boxed.geometry() != Geometry::Torus {
        return Err(Error::InvalidInput("density solves require a torus".into()));
    }
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("times must be increasing and nonnegative".into()));
    }
    let space = Arc::new(StateSpace::new(boxed, 1, false)?);
    let op = crate::generator::build_unlabeled_generator(&space, kernel)?;
    let mut v: Vec<f64> = Vec::with_capacity(space.size());
    for idx in 0..space.size() {
        let x = space.site_point(idx as u32)[0] as f64;
        let r = profile.eval(x / n_scale);
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidInput(format!(
                "profile value {r} at u={} outside [0,1]",
                x / n_scale
            )));
        }
        v.push(r);
    }
    let mut ev = Evolver::new(&op, n_scale * n_scale, opts.clone());
    let mut values = Vec::with_capacity(times.len());
    let mut prev_t = 0.0;
    for &t in times {
        ev.evolve_in_place(&mut v, t - prev_t)?;
        prev_t = t;
        values.push(v.clone());
    }
    Ok(DensityTable { n_scale, boxed: boxed.clone(), times: times.to_vec(), values })
}

/// Box large enough that a forward solve to time `horizon` keeps its mass
/// away from the edge: `L = max ||z||_inf + range (T + 6 sqrt(T)) + 5`.
pub fn auto_box(kernel: &Kernel, targets: &[LabeledConfig], horizon: f64) -> Result<LatticeBox> {
    let d = kernel.dimension();
    let mut max_coord: Coord = 0;
    for c in targets {
        for p in c.points() {
            for &x in p {
                max_coord = max_coord.max(x.abs());
            }
        }
    }
    let spread = (kernel.range() as f64) * (horizon + 6.0 * horizon.sqrt());
    let half = max_coord + spread.ceil() as Coord + 5;
    LatticeBox::new(d, half.max(1), Geometry::OpenTruncation)
}

/// Forward solve with box auto-selection: enlarges the box by 50% until the
/// boundary-mass diagnostic stays below `1e-6` at every grid time.
pub fn solve_forward_auto(
    kernel: &Kernel,
    initial: &LabeledConfig,
    labeled: bool,
    times: &[f64],
    opts: &SolverOptions,
) -> Result<(Arc<StateSpace>, SparseOperator, DistributionSeries)> {
    let horizon = *times.last().ok_or_else(|| Error::InvalidInput("empty grid".into()))?;
    let mut boxed = auto_box(kernel, std::slice::from_ref(initial), horizon)?;
    for _attempt in 0..4 {
        let space = Arc::new(StateSpace::new(&boxed, initial.len(), labeled)?);
        let op = if labeled {
            crate::generator::build_labeled_generator(&space, kernel)?
        } else {
            crate::generator::build_unlabeled_generator(&space, kernel)?
        };
        let id = if labeled {
            space
                .rank_labeled(initial)
                .ok_or_else(|| Error::InvalidInput("initial configuration outside box".into()))?
        } else {
            space
                .rank_unlabeled(&initial.forget())
                .ok_or_else(|| Error::InvalidInput("initial configuration outside box".into()))?
        };
        let series = solve_forward(&op, &space, kernel, id, times, opts)?;
        if series.boundary_mass.iter().all(|&m| m < 1e-6) {
            return Ok((space, op, series));
        }
        let half = (boxed.half_width() as f64 * 1.5).ceil() as Coord;
        boxed = LatticeBox::new(boxed.dimension(), half, Geometry::OpenTruncation)?;
    }
    Err(Error::Numerical("boundary mass above 1e-6 after repeated enlargement".into()))
}
