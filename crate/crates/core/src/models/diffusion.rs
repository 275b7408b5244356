//! Contaminant diffusion on the unit square:
//!
//! ```text
//! ∂w/∂t = ∇²w + S(x_src, x, t),   ∇w·n = 0 on the boundary,   w(x, 0) = 0
//! S = s / (2π h²) exp(-|x - x_src|² / (2h²))  for t < τ, zero afterwards
//! ```
//!
//! Space uses second-order centered differences on `grid_n × grid_n` nodes
//! spanning [0, 1]² inclusive, with mirrored ghost nodes for the Neumann
//! condition. Time uses fixed-step BDF4, bootstrapped by BDF1, BDF2 and BDF3.
//! The four implicit operators `I - β Δt L` are factored once per solver.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{check_len, ForwardModel, ModelError};

const TIME_TOL: f64 = 1e-9;
const COORD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionConfig {
    /// `s`
    pub source_intensity: f64,
    /// `h`
    pub source_width: f64,
    /// `τ`
    pub shutoff_time: f64,
    pub grid_n: usize,
    pub t_final: f64,
    pub obs_times: Vec<f64>,
    pub dt: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            source_intensity: 2.0,
            source_width: 0.05,
            shutoff_time: 0.3,
            grid_n: 25,
            t_final: 0.6,
            obs_times: vec![0.12, 0.24, 0.36, 0.48, 0.60],
            dt: 1e-3,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if !(self.source_width > 0.0) {
            return bad(format!("source width must be positive, got {}", self.source_width));
        }
        if !(self.shutoff_time > 0.0) {
            return bad(format!("shutoff time must be positive, got {}", self.shutoff_time));
        }
        if self.grid_n < 5 {
            return bad(format!("grid_n must be at least 5, got {}", self.grid_n));
        }
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return bad("dt and t_final must be positive".into());
        }
        if !self.source_intensity.is_finite() {
            return bad("source intensity must be finite".into());
        }
        if self.obs_times.is_empty() {
            return bad("at least one observation time is required".into());
        }
        if self.obs_times.windows(2).any(|w| w[1] <= w[0]) {
            return bad("observation times must be strictly increasing".into());
        }
        if self.obs_times[0] <= 0.0 || *self.obs_times.last().unwrap() > self.t_final + TIME_TOL {
            return bad("observation times must lie in (0, t_final]".into());
        }
        step_index(self.t_final, self.dt).ok_or_else(|| {
            ModelError::InvalidConfig(format!("t_final {} is not a multiple of dt {}", self.t_final, self.dt))
        })?;
        for &t in &self.obs_times {
            step_index(t, self.dt).ok_or_else(|| {
                ModelError::InvalidConfig(format!("observation time {t} is not a multiple of dt {}", self.dt))
            })?;
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.grid_n - 1) as f64
    }
}

fn step_index(t: f64, dt: f64) -> Option<usize> {
    let k = (t / dt).round();
    ((k * dt - t).abs() <= TIME_TOL * t.abs().max(1.0) && k >= 0.0).then_some(k as usize)
}

/// LU factors of a banded matrix without pivoting. The BDF operators are
/// strictly diagonally dominant M-matrices, so no pivoting is needed.
#[derive(Debug, Clone)]
struct BandLu {
    n: usize,
    half: usize,
    band: Vec<f64>,
}

impl BandLu {
    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        row * (2 * self.half + 1) + (col + self.half - row)
    }

    fn factor(mut self) -> Self {
        let (n, half) = (self.n, self.half);
        for k in 0..n {
            let pivot = self.band[self.idx(k, k)];
            let last = (k + half + 1).min(n);
            for i in k + 1..last {
                let ik = self.idx(i, k);
                if self.band[ik] == 0.0 {
                    continue;
                }
                let l = self.band[ik] / pivot;
                self.band[ik] = l;
                for j in k + 1..last {
                    let kj = self.idx(k, j);
                    let ij = self.idx(i, j);
                    self.band[ij] -= l * self.band[kj];
                }
            }
        }
        self
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let (n, half) = (self.n, self.half);
        for i in 0..n {
            let first = i.saturating_sub(half);
            let mut s = x[i];
            for (j, xj) in x.iter().enumerate().take(i).skip(first) {
                s -= self.band[self.idx(i, j)] * xj;
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let last = (i + half + 1).min(n);
            let mut s = x[i];
            for (j, xj) in x.iter().enumerate().take(last).skip(i + 1) {
                s -= self.band[self.idx(i, j)] * xj;
            }
            x[i] = s / self.band[self.idx(i, i)];
        }
    }
}

/// `(history coefficients, β)` for `u_{n+1} = Σ a_j u_{n-j} + β Δt f_{n+1}`.
const BDF: [(&[f64], f64); 4] = [
    (&[1.0], 1.0),
    (&[4.0 / 3.0, -1.0 / 3.0], 2.0 / 3.0),
    (&[18.0 / 11.0, -9.0 / 11.0, 2.0 / 11.0], 6.0 / 11.0),
    (&[48.0 / 25.0, -36.0 / 25.0, 16.0 / 25.0, -3.0 / 25.0], 12.0 / 25.0),
];

/// Prefactored time stepper for one [`DiffusionConfig`].
#[derive(Debug, Clone)]
pub struct DiffusionSolver {
    config: DiffusionConfig,
    n: usize,
    inv_dx2: f64,
    steps: usize,
    factors: Vec<BandLu>,
}

impl DiffusionSolver {
    pub fn new(config: DiffusionConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let n = config.grid_n;
        let dx = config.spacing();
        let inv_dx2 = 1.0 / (dx * dx);
        let steps = step_index(config.t_final, config.dt).expect("validated");
        let factors = BDF
            .iter()
            .map(|&(_, beta)| Self::operator(n, inv_dx2, beta * config.dt).factor())
            .collect();
        Ok(DiffusionSolver {
            config,
            n,
            inv_dx2,
            steps,
            factors,
        })
    }

    /// `I - c L` in band storage.
    fn operator(n: usize, inv_dx2: f64, c: f64) -> BandLu {
        let size = n * n;
        let mut lu = BandLu {
            n: size,
            half: n,
            band: vec![0.0; size * (2 * n + 1)],
        };
        let k = c * inv_dx2;
        for j in 0..n {
            for i in 0..n {
                let p = j * n + i;
                let d = lu.idx(p, p);
                lu.band[d] = 1.0 + 4.0 * k;
                // mirrored ghost nodes double the inward coupling at walls
                let mut add = |q: usize, w: f64| {
                    let e = lu.idx(p, q);
                    lu.band[e] -= w * k;
                };
                match i {
                    0 => add(p + 1, 2.0),
                    _ if i == n - 1 => add(p - 1, 2.0),
                    _ => {
                        add(p - 1, 1.0);
                        add(p + 1, 1.0);
                    }
                }
                match j {
                    0 => add(p + n, 2.0),
                    _ if j == n - 1 => add(p - n, 2.0),
                    _ => {
                        add(p - n, 1.0);
                        add(p + n, 1.0);
                    }
                }
            }
        }
        lu
    }

    pub fn config(&self) -> &DiffusionConfig {
        &self.config
    }

    pub fn grid_n(&self) -> usize {
        self.n
    }

    pub fn n_steps(&self) -> usize {
        self.steps
    }

    /// Node coordinate along one axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        i as f64 / (self.n - 1) as f64
    }

    /// Discrete Neumann Laplacian, `out = L u`.
    pub fn apply_laplacian(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            for i in 0..n {
                let p = j * n + i;
                let west = if i == 0 { u[p + 1] } else { u[p - 1] };
                let east = if i == n - 1 { u[p - 1] } else { u[p + 1] };
                let south = if j == 0 { u[p + n] } else { u[p - n] };
                let north = if j == n - 1 { u[p - n] } else { u[p + n] };
                out[p] = (west + east + south + north - 4.0 * u[p]) * self.inv_dx2;
            }
        }
    }

    /// Trapezoidal integral of a nodal field over the unit square. The
    /// discrete Laplacian sums to zero under these weights, so this is the
    /// conserved mass.
    pub fn mass(&self, u: &[f64]) -> f64 {
        let n = self.n;
        let dx = self.config.spacing();
        let edge = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let mut m = 0.0;
        for j in 0..n {
            for i in 0..n {
                m += edge(i) * edge(j) * u[j * n + i];
            }
        }
        m * dx * dx
    }

    /// Gaussian source profile on the nodes (before time switching).
    pub fn source_profile(&self, x_src: [f64; 2]) -> Vec<f64> {
        let h = self.config.source_width;
        let amp = self.config.source_intensity / (2.0 * PI * h * h);
        let mut s = vec![0.0; self.n * self.n];
        for j in 0..self.n {
            for i in 0..self.n {
                let dx = self.coordinate(i) - x_src[0];
                let dy = self.coordinate(j) - x_src[1];
                s[j * self.n + i] = amp * (-(dx * dx + dy * dy) / (2.0 * h * h)).exp();
            }
        }
        s
    }

    /// Integrates `du/dt = L u + f(t)` from `u = 0` over `n_steps` steps.
    /// `source(t, buf)` fills `f(t)`. Snapshots are returned for each step
    /// index in `record` (which must be ascending; 0 is the initial state).
    pub fn integrate<F>(&self, mut source: F, record: &[usize]) -> Result<Vec<Vec<f64>>, ModelError>
    where
        F: FnMut(f64, &mut [f64]),
    {
        let size = self.n * self.n;
        let dt = self.config.dt;
        let mut history: Vec<Vec<f64>> = vec![vec![0.0; size]; 5];
        let mut f = vec![0.0; size];
        let mut snapshots = Vec::with_capacity(record.len());
        let mut next_record = record.iter().peekable();
        while next_record.peek() == Some(&&0) {
            snapshots.push(history[0].clone());
            next_record.next();
        }
        // history[0] holds u_k, history[1] u_{k-1}, ...
        for k in 1..=self.steps {
            let order = k.min(4);
            let (coeffs, beta) = BDF[order - 1];
            let t = k as f64 * dt;
            source(t, &mut f);
            let mut rhs = history.pop().expect("spare level kept");
            for p in 0..size {
                let mut v = beta * dt * f[p];
                for (j, a) in coeffs.iter().enumerate() {
                    v += a * history[j][p];
                }
                rhs[p] = v;
            }
            self.factors[order - 1].solve_in_place(&mut rhs);
            if rhs.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteField { time: t });
            }
            history.insert(0, rhs);
            while next_record.peek() == Some(&&k) {
                snapshots.push(history[0].clone());
                next_record.next();
            }
            if next_record.peek().is_none() {
                break;
            }
        }
        if let Some(&&k) = next_record.peek() {
            return Err(ModelError::TimeOutOfRange(k as f64 * dt));
        }
        Ok(snapshots)
    }

    fn check_source(x_src: [f64; 2]) -> Result<[f64; 2], ModelError> {
        let mut out = x_src;
        for (dim, v) in out.iter_mut().enumerate() {
            *v = unit_coordinate(*v).ok_or(ModelError::OutOfDomain { dim, value: *v })?;
        }
        Ok(out)
    }

    /// Full space-time solution, every time level stored.
    pub fn solve(&self, x_src: [f64; 2]) -> Result<FieldHistory, ModelError> {
        let record: Vec<usize> = (0..=self.steps).collect();
        self.solve_recording(x_src, &record)
    }

    /// Solution stored only at the requested times (each a multiple of `dt`).
    pub fn solve_at(&self, x_src: [f64; 2], times: &[f64]) -> Result<FieldHistory, ModelError> {
        let mut record = Vec::with_capacity(times.len());
        for &t in times {
            let k = step_index(t, self.config.dt)
                .filter(|&k| k <= self.steps)
                .ok_or(ModelError::TimeOutOfRange(t))?;
            record.push(k);
        }
        let mut sorted = record.clone();
        sorted.sort_unstable();
        sorted.dedup();
        self.solve_recording(x_src, &sorted)
    }

    fn solve_recording(&self, x_src: [f64; 2], record: &[usize]) -> Result<FieldHistory, ModelError> {
        let x_src = Self::check_source(x_src)?;
        let profile = self.source_profile(x_src);
        let tau = self.config.shutoff_time;
        let guard = 1e-9 * self.config.dt;
        let snapshots = self.integrate(
            |t, f| {
                if t < tau - guard {
                    f.copy_from_slice(&profile);
                } else {
                    f.iter_mut().for_each(|v| *v = 0.0);
                }
            },
            record,
        )?;
        Ok(FieldHistory {
            n: self.n,
            times: record.iter().map(|&k| k as f64 * self.config.dt).collect(),
            snapshots,
        })
    }
}

fn unit_coordinate(v: f64) -> Option<f64> {
    if (-COORD_TOL..=1.0 + COORD_TOL).contains(&v) {
        Some(v.clamp(0.0, 1.0))
    } else {
        None
    }
}

/// Stored time levels of a solve, queried by bilinear interpolation in space.
#[derive(Debug, Clone)]
pub struct FieldHistory {
    n: usize,
    times: Vec<f64>,
    snapshots: Vec<Vec<f64>>,
}

impl FieldHistory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn grid_n(&self) -> usize {
        self.n
    }

    /// Nodal field at stored level `k`, index `j * n + i` for node `(i, j)`.
    pub fn level(&self, k: usize) -> &[f64] {
        &self.snapshots[k]
    }

    /// Nodal field at time `t`: exact on stored levels, linear in time between them.
    pub fn field_at_time(&self, t: f64) -> Result<Vec<f64>, ModelError> {
        let (k0, k1, w) = self.bracket(t)?;
        if w == 0.0 {
            return Ok(self.snapshots[k0].clone());
        }
        Ok(self.snapshots[k0]
            .iter()
            .zip(&self.snapshots[k1])
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect())
    }

    fn bracket(&self, t: f64) -> Result<(usize, usize, f64), ModelError> {
        if let Some(k) = self.times.iter().position(|&s| (s - t).abs() <= TIME_TOL) {
            return Ok((k, k, 0.0));
        }
        let k1 = self
            .times
            .iter()
            .position(|&s| s > t)
            .filter(|&k| k > 0)
            .ok_or(ModelError::TimeOutOfRange(t))?;
        let (t0, t1) = (self.times[k1 - 1], self.times[k1]);
        Ok((k1 - 1, k1, (t - t0) / (t1 - t0)))
    }

    /// Bilinear interpolation of a nodal field at `(x, y)`.
    pub fn interpolate(n: usize, field: &[f64], x: f64, y: f64) -> Result<f64, ModelError> {
        let x = unit_coordinate(x).ok_or(ModelError::OutOfDomain { dim: 0, value: x })?;
        let y = unit_coordinate(y).ok_or(ModelError::OutOfDomain { dim: 1, value: y })?;
        let scale = (n - 1) as f64;
        let (fx, fy) = (x * scale, y * scale);
        let i = (fx.floor() as usize).min(n - 2);
        let j = (fy.floor() as usize).min(n - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let at = |i: usize, j: usize| field[j * n + i];
        Ok((1.0 - tx) * (1.0 - ty) * at(i, j)
            + tx * (1.0 - ty) * at(i + 1, j)
            + (1.0 - tx) * ty * at(i, j + 1)
            + tx * ty * at(i + 1, j + 1))
    }

    /// `w(x, t)`.
    pub fn at(&self, point: [f64; 2], t: f64) -> Result<f64, ModelError> {
        let (k0, k1, w) = self.bracket(t)?;
        let a = Self::interpolate(self.n, &self.snapshots[k0], point[0], point[1])?;
        if w == 0.0 {
            return Ok(a);
        }
        let b = Self::interpolate(self.n, &self.snapshots[k1], point[0], point[1])?;
        Ok((1.0 - w) * a + w * b)
    }
}

/// Five (by default) point observations of the concentration at the sensor.
///
/// `θ` is the source location, `d` the sensor location; both live in [0, 1]².
/// Each call runs a full PDE solve, so this model is only practical for
/// surrogate construction and validation.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    solver: DiffusionSolver,
}

impl DiffusionModel {
    pub fn new(config: DiffusionConfig) -> Result<Self, ModelError> {
        Ok(DiffusionModel {
            solver: DiffusionSolver::new(config)?,
        })
    }

    pub fn solver(&self) -> &DiffusionSolver {
        &self.solver
    }

    /// Solve once for a source; the result can be observed at many sensors.
    pub fn solve_observation_times(&self, source: [f64; 2]) -> Result<FieldHistory, ModelError> {
        self.solver.solve_at(source, &self.solver.config.obs_times)
    }

    /// Observables at `sensor` from a history produced by
    /// [`solve_observation_times`](Self::solve_observation_times).
    pub fn observe(&self, history: &FieldHistory, sensor: [f64; 2]) -> Result<Vec<f64>, ModelError> {
        self.solver
            .config
            .obs_times
            .iter()
            .map(|&t| history.at(sensor, t))
            .collect()
    }
}

impl ForwardModel for DiffusionModel {
    fn n_theta(&self) -> usize {
        2
    }

    fn n_design(&self) -> usize {
        2
    }

    fn n_outputs(&self) -> usize {
        self.solver.config.obs_times.len()
    }

    fn value(&self, theta: &[f64], design: &[f64]) -> Result<Vec<f64>, ModelError> {
        check_len("theta", 2, theta.len())?;
        check_len("design", 2, design.len())?;
        let history = self.solve_observation_times([theta[0], theta[1]])?;
        self.observe(&history, [design[0], design[1]])
    }
}
