//! Joint code/filter optimisation.
//!
//! Codes are parameterised by phase, so every iterate is unimodular. Each
//! outer iteration descends the gain-normalised error
//!
//! ```text
//! F(phi; h) = sum_i L^2 e_i(phi, h_i) / |g_i(phi, h_i)|^2
//! ```
//!
//! with the filters frozen, then refits every filter in closed form. `F` is
//! invariant to filter scaling and equals the set error right after a refit
//! (all gains are `L`), so a refit can only lower it: the recorded error is
//! non-increasing. At a refit point the gradient of `F` is also the gradient
//! of the refit-optimal error with respect to the phases.

use std::f64::consts::PI;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{solve_filter_taps, CrossTermMode, GainScale, SolverOptions, DEFAULT_RIDGE};
use crate::waveform::{
    check_constraints, convolve, convolve_at, CodeFilterPair, ConstraintTolerance,
    MainlobeGeometry, MismatchedFilter, OrthogonalSet, PolyphaseCode,
};

/// All code phases, code-major: entry `i * N + n` is sample `n` of code `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector {
    phases: Vec<f64>,
    code_len: usize,
}

impl PhaseVector {
    pub fn new(phases: Vec<f64>, code_len: usize) -> Result<Self> {
        if code_len == 0 || phases.is_empty() || phases.len() % code_len != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} phases do not split into codes of length {code_len}",
                phases.len()
            )));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidCode("non-finite phase".into()));
        }
        Ok(Self { phases, code_len }.wrapped())
    }

    fn wrapped(mut self) -> Self {
        for p in &mut self.phases {
            *p = p.rem_euclid(2.0 * PI);
            // rem_euclid can round up to exactly 2*pi
            if *p >= 2.0 * PI {
                *p = 0.0;
            }
        }
        self
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.phases
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn num_codes(&self) -> usize {
        self.phases.len() / self.code_len
    }

    pub fn code_phases(&self, i: usize) -> &[f64] {
        &self.phases[i * self.code_len..(i + 1) * self.code_len]
    }

    pub fn samples(&self) -> Vec<Vec<Complex64>> {
        self.phases
            .chunks(self.code_len)
            .map(|c| c.iter().map(|&p| Complex64::from_polar(1.0, p)).collect())
            .collect()
    }

    pub fn codes(&self, sample_period: f64) -> Result<Vec<PolyphaseCode>> {
        self.phases
            .chunks(self.code_len)
            .map(|c| PolyphaseCode::from_phases(c, sample_period))
            .collect()
    }

    pub fn from_codes(codes: &[PolyphaseCode]) -> Result<Self> {
        let n = codes.first().map_or(0, |c| c.len());
        Self::new(codes.iter().flat_map(|c| c.phases()).collect(), n)
    }
}

/// Reference-pool settings for the multistart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScatterParams {
    pub pool_size: usize,
    pub elite_fraction: f64,
    pub weight_min: f64,
    pub weight_max: f64,
    /// Standard deviation of the Gaussian phase jitter, radians.
    pub jitter: f64,
}

impl Default for ScatterParams {
    fn default() -> Self {
        Self {
            pool_size: 10,
            elite_fraction: 0.4,
            weight_min: 0.3,
            weight_max: 0.7,
            jitter: 0.2,
        }
    }
}

/// Inner gradient-descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescentParams {
    /// Phase-descent steps between filter refits.
    pub inner_steps: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step shrink factor while backtracking.
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Largest phase change of the very first trial step, radians.
    pub initial_step: f64,
}

impl Default for DescentParams {
    fn default() -> Self {
        Self {
            inner_steps: 3,
            armijo: 1e-4,
            shrink: 0.5,
            max_backtracks: 40,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub code_len: usize,
    pub num_codes: usize,
    pub filter_len: usize,
    pub mainlobe_width: usize,
    pub gain: GainScale,
    pub restarts: usize,
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub rng_seed: u64,
    pub balance_tol: f64,
    pub sample_period: f64,
    pub ridge: f64,
    pub cross_terms: CrossTermMode,
    pub scatter: ScatterParams,
    pub descent: DescentParams,
}

impl OptimizerConfig {
    /// 40-sample codes at 2 Msps (20 us pulse), 480-tap filters, 5-sample
    /// mainlobe, two codes, eight restarts.
    pub fn headline() -> Self {
        Self {
            restarts: 8,
            ..Self::small(40, 480)
        }
    }

    /// Same defaults at another size.
    pub fn small(code_len: usize, filter_len: usize) -> Self {
        Self {
            code_len,
            num_codes: 2,
            filter_len,
            mainlobe_width: 5,
            gain: GainScale::code_energy(code_len),
            restarts: 4,
            max_iters: 300,
            convergence_tol: 1e-6,
            rng_seed: 1,
            balance_tol: 1e-6,
            sample_period: 0.5e-6,
            ridge: DEFAULT_RIDGE,
            cross_terms: CrossTermMode::Full,
            scatter: ScatterParams::default(),
            descent: DescentParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.code_len < 2 {
            return bad(format!("code_len {} must be at least 2", self.code_len));
        }
        if self.num_codes == 0 {
            return bad("num_codes must be positive".into());
        }
        if self.restarts == 0 {
            return bad("restarts must be positive".into());
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol must be positive".into());
        }
        if !(self.balance_tol > 0.0) {
            return bad("balance_tol must be positive".into());
        }
        if !(self.sample_period > 0.0) {
            return bad("sample_period must be positive".into());
        }
        if !(self.ridge >= 0.0) {
            return bad("ridge must be non-negative".into());
        }
        let s = &self.scatter;
        if s.pool_size < 2 || !(0.0..=1.0).contains(&s.elite_fraction) {
            return bad("scatter pool needs at least 2 members and elite_fraction in [0, 1]".into());
        }
        if !(0.0 <= s.weight_min && s.weight_min <= s.weight_max && s.weight_max <= 1.0) {
            return bad("scatter weights must satisfy 0 <= weight_min <= weight_max <= 1".into());
        }
        if !(s.jitter >= 0.0) {
            return bad("scatter jitter must be non-negative".into());
        }
        let d = &self.descent;
        if !(d.shrink > 0.0 && d.shrink < 1.0 && d.armijo > 0.0 && d.armijo < 1.0) {
            return bad("descent shrink and armijo must lie in (0, 1)".into());
        }
        if !(d.initial_step > 0.0) {
            return bad("descent initial_step must be positive".into());
        }
        self.mainlobe().map(|_| ())
    }

    pub fn mainlobe(&self) -> Result<MainlobeGeometry> {
        MainlobeGeometry::centered(self.code_len, self.filter_len, self.mainlobe_width)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            gain: self.gain,
            ridge: self.ridge,
            cross_terms: self.cross_terms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub restart: usize,
    pub isl_error: f64,
    pub iterations: usize,
    pub constraints_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    /// Set error after each accepted refit; entry 0 is the starting point.
    pub errors: Vec<f64>,
    /// Restart that produced the returned set.
    pub incumbent_restart: usize,
    pub wall_time: Duration,
    pub restarts: Vec<RestartOutcome>,
}

pub fn random_code_set<R: Rng + ?Sized>(config: &OptimizerConfig, rng: &mut R) -> PhaseVector {
    let phases = (0..config.code_len * config.num_codes)
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    PhaseVector {
        phases,
        code_len: config.code_len,
    }
}

/// Closed-form filters for every code, each rescaled so its mainlobe gain is
/// exactly `L` (equal gain and zero relative phase across pairs).
pub fn refit(phases: &PhaseVector, config: &OptimizerConfig) -> Result<OrthogonalSet> {
    let mainlobe = config.mainlobe()?;
    let codes = phases.codes(config.sample_period)?;
    let slices: Vec<&[Complex64]> = codes.iter().map(|c| c.samples()).collect();
    let opts = config.solver_options();
    let level = Complex64::new(config.gain.value(), 0.0);
    let mut pairs = Vec::with_capacity(codes.len());
    for (i, code) in codes.iter().enumerate() {
        let taps = solve_filter_taps(&slices, i, config.filter_len, mainlobe, &opts)?;
        let gain = convolve_at(code.samples(), &taps, mainlobe.center);
        let filter =
            MismatchedFilter::new(taps, mainlobe, code.len())?.scaled(level / gain);
        pairs.push(CodeFilterPair::new(code.clone(), filter)?);
    }
    let filters: Vec<&[Complex64]> = pairs.iter().map(|p| p.filter.coefficients.as_slice()).collect();
    let isl_error = objective(&slices, &filters, mainlobe, config.cross_terms)
        .iter()
        .sum();
    OrthogonalSet::new(pairs, isl_error)
}

fn sidelobe_weight(i: usize, j: usize, r: usize, mainlobe: MainlobeGeometry, mode: CrossTermMode) -> bool {
    let protected = match mode {
        CrossTermMode::Full => i == j,
        CrossTermMode::MainlobeDeleted => true,
    };
    !(protected && mainlobe.contains(r))
}

/// Per-filter error `e_i` by direct convolution sums.
pub fn objective(
    codes: &[&[Complex64]],
    filters: &[&[Complex64]],
    mainlobe: MainlobeGeometry,
    mode: CrossTermMode,
) -> Vec<f64> {
    filters
        .iter()
        .enumerate()
        .map(|(i, h)| {
            codes
                .iter()
                .enumerate()
                .map(|(j, x)| {
                    convolve(x, h)
                        .iter()
                        .enumerate()
                        .filter(|(r, _)| sidelobe_weight(i, j, *r, mainlobe, mode))
                        .map(|(_, y)| y.norm_sqr())
                        .sum::<f64>()
                })
                .sum()
        })
        .collect()
}

/// Gain-normalised error `F` with frozen filters and its phase gradient.
pub fn normalized_error_and_gradient(
    phases: &PhaseVector,
    filters: &[&[Complex64]],
    mainlobe: MainlobeGeometry,
    level: f64,
    mode: CrossTermMode,
) -> (f64, Vec<f64>) {
    let codes = phases.samples();
    let n = phases.code_len();
    let c = mainlobe.center;
    let l2 = level * level;
    let mut total = 0.0;
    let mut grad = vec![0.0; phases.as_slice().len()];

    for (i, h) in filters.iter().enumerate() {
        let lf = h.len();
        let gain = convolve_at(&codes[i], h, c);
        let g2 = gain.norm_sqr();
        let mut err = 0.0;
        // d e_i / d phi, unscaled
        let mut derr = vec![0.0; grad.len()];
        for (j, x) in codes.iter().enumerate() {
            let mut y = convolve(x, h);
            for (r, v) in y.iter_mut().enumerate() {
                if sidelobe_weight(i, j, r, mainlobe, mode) {
                    err += v.norm_sqr();
                } else {
                    *v = Complex64::new(0.0, 0.0);
                }
            }
            for m in 0..n {
                // Wirtinger derivative w.r.t. conj(x[m]): sum_r y_r conj(h[r - m])
                let mut w = Complex64::new(0.0, 0.0);
                for k in 0..lf {
                    w += y[m + k] * h[k].conj();
                }
                derr[j * n + m] = 2.0 * (w * x[m].conj()).im;
            }
        }
        let scale = l2 / g2;
        total += scale * err;
        for (g, d) in grad.iter_mut().zip(&derr) {
            *g += scale * d;
        }
        // gain term: -L^2 e / |g|^4 * d|g|^2/dphi
        let x = &codes[i];
        for m in 0..n {
            if c >= m && c - m < lf {
                let dg2 = 2.0 * (gain * h[c - m].conj() * x[m].conj()).im;
                grad[i * n + m] -= l2 * err / (g2 * g2) * dg2;
            }
        }
    }
    (total, grad)
}

fn normalized_error(
    phases: &PhaseVector,
    filters: &[&[Complex64]],
    mainlobe: MainlobeGeometry,
    level: f64,
    mode: CrossTermMode,
) -> f64 {
    let codes = phases.samples();
    let slices: Vec<&[Complex64]> = codes.iter().map(|c| c.as_slice()).collect();
    objective(&slices, filters, mainlobe, mode)
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let g = convolve_at(&codes[i], filters[i], mainlobe.center);
            level * level * e / g.norm_sqr()
        })
        .sum()
}

fn step(phases: &PhaseVector, grad: &[f64], t: f64) -> PhaseVector {
    PhaseVector {
        phases: phases
            .phases
            .iter()
            .zip(grad)
            .map(|(p, g)| p - t * g)
            .collect(),
        code_len: phases.code_len,
    }
    .wrapped()
}

/// Gradient descent on `F` with frozen filters: Barzilai-Borwein trial steps
/// and Armijo backtracking. Returns the new phases and whether any step was
/// accepted.
fn descend_phases(
    start: &PhaseVector,
    set: &OrthogonalSet,
    config: &OptimizerConfig,
    step_hint: &mut f64,
    memory: &mut Option<(PhaseVector, Vec<f64>)>,
) -> (PhaseVector, bool) {
    let mainlobe = set.mainlobe();
    let level = config.gain.value();
    let filters: Vec<&[Complex64]> = set.pairs.iter().map(|p| p.filter.coefficients.as_slice()).collect();
    let p = &config.descent;

    let mut x = start.clone();
    let (mut fx, mut gx) =
        normalized_error_and_gradient(&x, &filters, mainlobe, level, config.cross_terms);
    let mut accepted = false;
    // BB pair from the previous refit point, carried across refits so that
    // short inner loops still get curvature-scaled steps.
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = memory.as_ref().map(|(px, pg)| {
        let s = x
            .as_slice()
            .iter()
            .zip(px.as_slice())
            .map(|(a, b)| crate::waveform::wrap_phase(a - b))
            .collect();
        let yv = gx.iter().zip(pg).map(|(a, b)| a - b).collect();
        (s, yv)
    });
    *memory = Some((x.clone(), gx.clone()));

    for _ in 0..p.inner_steps {
        let gnorm2: f64 = gx.iter().map(|g| g * g).sum();
        if gnorm2 == 0.0 {
            break;
        }
        let mut t = match &prev {
            Some((s, yv)) => {
                let sy: f64 = s.iter().zip(yv).map(|(a, b)| a * b).sum();
                let ss: f64 = s.iter().map(|a| a * a).sum();
                if sy > 0.0 {
                    ss / sy
                } else {
                    *step_hint
                }
            }
            None => *step_hint,
        };
        let mut found = None;
        for _ in 0..=p.max_backtracks {
            let trial = step(&x, &gx, t);
            let ft = normalized_error(&trial, &filters, mainlobe, level, config.cross_terms);
            if ft <= fx - p.armijo * t * gnorm2 {
                found = Some((trial, ft));
                break;
            }
            t *= p.shrink;
        }
        let Some((next, fnext)) = found else { break };
        let (_, gnext) =
            normalized_error_and_gradient(&next, &filters, mainlobe, level, config.cross_terms);
        let s: Vec<f64> = gx.iter().map(|g| -t * g).collect();
        let yv: Vec<f64> = gnext.iter().zip(&gx).map(|(a, b)| a - b).collect();
        prev = Some((s, yv));
        *step_hint = t;
        x = next;
        fx = fnext;
        gx = gnext;
        accepted = true;
    }
    (x, accepted)
}

fn initial_step_hint(start: &PhaseVector, set: &OrthogonalSet, config: &OptimizerConfig) -> f64 {
    let filters: Vec<&[Complex64]> = set.pairs.iter().map(|p| p.filter.coefficients.as_slice()).collect();
    let (_, g) = normalized_error_and_gradient(
        start,
        &filters,
        set.mainlobe(),
        config.gain.value(),
        config.cross_terms,
    );
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if gmax > 0.0 {
        config.descent.initial_step / gmax
    } else {
        1.0
    }
}

/// Alternating refit / phase-descent loop from one start.
pub fn local_descent(
    start: &PhaseVector,
    config: &OptimizerConfig,
) -> Result<(OrthogonalSet, PhaseVector, OptimizationTrace)> {
    config.validate()?;
    if start.code_len() != config.code_len || start.num_codes() != config.num_codes {
        return Err(Error::DimensionMismatch(format!(
            "start has {} codes of length {}, config wants {} of length {}",
            start.num_codes(),
            start.code_len(),
            config.num_codes,
            config.code_len
        )));
    }
    let clock = Instant::now();
    let wrap = |iteration: usize| {
        move |e: Error| Error::Descent {
            restart: 0,
            iteration,
            source: Box::new(e),
        }
    };

    let mut phases = start.clone();
    let mut set = refit(&phases, config).map_err(wrap(0))?;
    let mut errors = vec![set.isl_error];
    let mut step_hint = initial_step_hint(&phases, &set, config);
    let mut memory = None;

    for iteration in 1..=config.max_iters {
        let (next, moved) = descend_phases(&phases, &set, config, &mut step_hint, &mut memory);
        if !moved {
            break;
        }
        let next_set = refit(&next, config).map_err(wrap(iteration))?;
        let prev = set.isl_error;
        if next_set.isl_error > prev {
            // only reachable through the ridge term once converged
            break;
        }
        phases = next;
        set = next_set;
        errors.push(set.isl_error);
        if prev - set.isl_error < config.convergence_tol * prev {
            break;
        }
    }
    let trace = OptimizationTrace {
        errors,
        incumbent_restart: 0,
        wall_time: clock.elapsed(),
        restarts: Vec::new(),
    };
    Ok((set, phases, trace))
}

/// Combine two phase vectors on the unit circle: `arg(w e^{ja} + (1-w) e^{jb})`.
fn circular_blend(a: &[f64], b: &[f64], w: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&pa, &pb)| {
            let z = Complex64::from_polar(w, pa) + Complex64::from_polar(1.0 - w, pb);
            if z.norm() > 1e-12 {
                z.arg()
            } else {
                pa
            }
        })
        .collect()
}

fn circular_distance(a: &PhaseVector, b: &PhaseVector) -> f64 {
    a.phases
        .iter()
        .zip(&b.phases)
        .map(|(x, y)| 2.0 - 2.0 * (x - y).cos())
        .sum::<f64>()
        .sqrt()
}

/// Reference pool: the best `elite_fraction` of a random candidate batch plus
/// members chosen for maximum distance from those already selected.
fn reference_pool(config: &OptimizerConfig, rng: &mut ChaCha8Rng) -> Result<Vec<PhaseVector>> {
    let s = &config.scatter;
    let candidates: Vec<PhaseVector> = (0..2 * s.pool_size)
        .map(|_| random_code_set(config, rng))
        .collect();
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|c| refit(c, config).map(|set| set.isl_error))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));

    let n_elite = ((s.pool_size as f64 * s.elite_fraction).round() as usize).clamp(1, s.pool_size);
    let mut chosen: Vec<usize> = order[..n_elite].to_vec();
    while chosen.len() < s.pool_size {
        let next = (0..candidates.len())
            .filter(|i| !chosen.contains(i))
            .max_by(|&a, &b| {
                let da = chosen.iter().map(|&c| circular_distance(&candidates[a], &candidates[c])).fold(f64::INFINITY, f64::min);
                let db = chosen.iter().map(|&c| circular_distance(&candidates[b], &candidates[c])).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("candidate batch is twice the pool size");
        chosen.push(next);
    }
    Ok(chosen.into_iter().map(|i| candidates[i].clone()).collect())
}

/// Start points for every restart. Restart 0 is the seeded random set; the
/// rest are pool combinations drawn from a separate stream.
pub fn scatter_starts(config: &OptimizerConfig) -> Result<Vec<PhaseVector>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut starts = vec![random_code_set(config, &mut rng)];
    if config.restarts == 1 {
        return Ok(starts);
    }
    let mut pool_rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    pool_rng.set_stream(1);
    let pool = reference_pool(config, &mut pool_rng)?;
    let s = &config.scatter;
    let jitter = Normal::new(0.0, s.jitter).map_err(|e| Error::Config(e.to_string()))?;
    for _ in 1..config.restarts {
        let a = pool_rng.random_range(0..pool.len());
        let mut b = pool_rng.random_range(0..pool.len() - 1);
        if b >= a {
            b += 1;
        }
        let w = if s.weight_max > s.weight_min {
            pool_rng.random_range(s.weight_min..s.weight_max)
        } else {
            s.weight_min
        };
        let mut phases = circular_blend(pool[a].as_slice(), pool[b].as_slice(), w);
        for p in &mut phases {
            *p += jitter.sample(&mut pool_rng);
        }
        starts.push(PhaseVector::new(phases, config.code_len)?);
    }
    Ok(starts)
}

/// Local descent from every scatter start; the lowest-error set that passes
/// the balance constraints wins, ties going to the lowest restart index.
pub fn scatter_multistart(
    config: &OptimizerConfig,
) -> Result<(OrthogonalSet, PhaseVector, OptimizationTrace)> {
    let clock = Instant::now();
    let starts = scatter_starts(config)?;
    let tol = ConstraintTolerance::balance(config.balance_tol);
    let incumbent: Mutex<Option<(f64, usize)>> = Mutex::new(None);

    let outcomes: Vec<Result<(OrthogonalSet, PhaseVector, OptimizationTrace, bool)>> = starts
        .par_iter()
        .enumerate()
        .map(|(r, start)| {
            let (set, phases, trace) = local_descent(start, config).map_err(|e| match e {
                Error::Descent { iteration, source, .. } => Error::Descent {
                    restart: r,
                    iteration,
                    source,
                },
                other => other,
            })?;
            let ok = check_constraints(&set, tol).passed();
            if ok {
                let mut best = incumbent.lock().expect("incumbent lock");
                if best.is_none_or(|(e, _)| set.isl_error < e) {
                    *best = Some((set.isl_error, r));
                    tracing::debug!(restart = r, error = set.isl_error, "new incumbent");
                }
            }
            Ok((set, phases, trace, ok))
        })
        .collect();

    let mut results = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        results.push(o?);
    }
    let summaries: Vec<RestartOutcome> = results
        .iter()
        .enumerate()
        .map(|(r, (set, _, trace, ok))| RestartOutcome {
            restart: r,
            isl_error: set.isl_error,
            iterations: trace.errors.len() - 1,
            constraints_ok: *ok,
        })
        .collect();
    let best = results
        .iter()
        .enumerate()
        .filter(|(_, (_, _, _, ok))| *ok)
        .min_by(|(ra, a), (rb, b)| a.0.isl_error.total_cmp(&b.0.isl_error).then(ra.cmp(rb)))
        .map(|(r, _)| r)
        .ok_or_else(|| Error::ConstraintViolation("no restart satisfied the balance constraints".into()))?;
    let (set, phases, trace, _) = results.swap_remove(best);
    Ok((
        set,
        phases,
        OptimizationTrace {
            errors: trace.errors,
            incumbent_restart: best,
            wall_time: clock.elapsed(),
            restarts: summaries,
        },
    ))
}

/// Snap every phase to the nearest point of a `levels`-phase alphabet and
/// refit the filters. Returns the new set and the error change in dB.
pub fn quantize(
    set: &OrthogonalSet,
    levels: usize,
    config: &OptimizerConfig,
) -> Result<(OrthogonalSet, f64)> {
    if levels < 2 {
        return Err(Error::Config(format!("alphabet size {levels} must be at least 2")));
    }
    let q = 2.0 * PI / levels as f64;
    let phases = PhaseVector::from_codes(&set.codes())?;
    let snapped = PhaseVector::new(
        phases.as_slice().iter().map(|p| (p / q).round() * q).collect(),
        phases.code_len(),
    )?;
    let out = refit(&snapped, config)?;
    let degradation = 10.0 * (out.isl_error / set.isl_error).log10();
    Ok((out, degradation))
}
