//! Residual decay, sandwich bounds, asymptotic phase and finite-time
//! normal-attractivity / center-bunching certificates.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::feedback::FeedbackConfig;
use crate::field::{flow_point, flow_through, VectorField};
use crate::geometry::{gram_schmidt, Ambient, Manifold, ShapingMetric};
use crate::integrate::{monodromy, TangentState, Trajectory};
use crate::rng::{seeded, unit_interval};

/// Samples of `g(y, y)` with `y = v − X(q)` along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    pub times: Vec<f64>,
    pub residual_norm_sq: Vec<f64>,
}

pub fn residual_series<M: Manifold>(manifold: &M, field: &M::Field, traj: &Trajectory<M::Point>) -> ResidualSeries {
    let residual_norm_sq = traj
        .states
        .iter()
        .map(|s| {
            let y = s.v - field.eval(&s.q);
            manifold.metric(&s.q, &y, &y).max(0.0)
        })
        .collect();
    ResidualSeries {
        times: traj.times.clone(),
        residual_norm_sq,
    }
}

/// Extreme values `c ≤ C` of `g̃(v, v)` over `g`-unit tangent vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricBounds {
    pub c: f64,
    pub big_c: f64,
    pub sample_count: usize,
}

/// Estimate [`MetricBounds`] from `samples` uniformly random base points,
/// extremizing exactly (eigenvalues in an orthonormal frame) at each.
pub fn metric_bounds<M: Manifold>(
    manifold: &M,
    shaping: &ShapingMetric,
    samples: usize,
    seed: u64,
) -> Result<MetricBounds> {
    if samples < 100 {
        return Err(Error::invalid("metric bounds need at least 100 samples"));
    }
    shaping.validate(manifold)?;
    match shaping {
        ShapingMetric::SameAsBase => {
            return Ok(MetricBounds {
                c: 1.0,
                big_c: 1.0,
                sample_count: samples,
            })
        }
        ShapingMetric::ScaledBase(l) => {
            return Ok(MetricBounds {
                c: *l,
                big_c: *l,
                sample_count: samples,
            })
        }
        ShapingMetric::AmbientQuadratic(_) => {}
    }
    let mut rng = seeded(seed);
    let mut c = f64::INFINITY;
    let mut big_c = f64::NEG_INFINITY;
    for _ in 0..samples {
        let q = manifold.sample_point(&mut rng);
        let frame = manifold.frame(&q);
        let n = frame.len();
        let gram = DMatrix::from_fn(n, n, |i, j| shaping.eval(manifold, &q, &frame[i], &frame[j]));
        let eig = gram.symmetric_eigenvalues();
        c = c.min(eig.min());
        big_c = big_c.max(eig.max());
    }
    Ok(MetricBounds {
        c,
        big_c,
        sample_count: samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichVerdict {
    pub holds: bool,
    /// `min_t g(t) / (e^{−2Ct/ε} g₀) − 1`; the lower bound holds if ≥ −tol.
    pub worst_lower_margin: f64,
    /// `min_t 1 − g(t) / (e^{−2ct/ε} g₀)`; the upper bound holds if ≥ −tol.
    pub worst_upper_margin: f64,
}

/// Residuals at or below this are round-off on the graph and count as zero.
pub const RESIDUAL_FLOOR: f64 = 1e-24;

/// Check `e^{−2Ct/ε} g₀ ≤ g(t) ≤ e^{−2ct/ε} g₀` at every sample, with
/// multiplicative slack `1 ± tol`.
pub fn sandwich_check(rs: &ResidualSeries, epsilon: f64, mb: &MetricBounds, tol: f64) -> SandwichVerdict {
    let floor = |g: f64| if g <= RESIDUAL_FLOOR { 0.0 } else { g };
    let Some(g0) = rs.residual_norm_sq.first().copied().map(floor) else {
        return SandwichVerdict {
            holds: true,
            worst_lower_margin: 0.0,
            worst_upper_margin: 0.0,
        };
    };
    let t0 = rs.times[0];
    let mut lower = f64::INFINITY;
    let mut upper = f64::INFINITY;
    for (&t, &g) in rs.times.iter().zip(&rs.residual_norm_sq) {
        let g = floor(g);
        let (lo, up) = if g0 == 0.0 {
            if g == 0.0 {
                (0.0, 0.0)
            } else {
                (f64::INFINITY, f64::NEG_INFINITY)
            }
        } else if g == 0.0 {
            (-1.0, 1.0)
        } else {
            let log_ratio = libm::log(g) - libm::log(g0);
            let s = t - t0;
            (
                libm::expm1(log_ratio + 2.0 * mb.big_c * s / epsilon),
                -libm::expm1(log_ratio + 2.0 * mb.c * s / epsilon),
            )
        };
        lower = lower.min(lo);
        upper = upper.min(up);
    }
    SandwichVerdict {
        holds: lower >= -tol && upper >= -tol,
        worst_lower_margin: lower,
        worst_upper_margin: upper,
    }
}

/// Largest deviations of `g(t)` from `e^{−rate·t} g₀`: pointwise relative,
/// and relative to `g₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayDeviation {
    pub max_pointwise: f64,
    pub max_normalized: f64,
}

pub fn decay_deviation(rs: &ResidualSeries, rate: f64) -> DecayDeviation {
    let mut out = DecayDeviation {
        max_pointwise: 0.0,
        max_normalized: 0.0,
    };
    let Some(&g0) = rs.residual_norm_sq.first() else {
        return out;
    };
    if g0 == 0.0 {
        let worst = rs.residual_norm_sq.iter().copied().fold(0.0, f64::max);
        out.max_normalized = worst;
        out.max_pointwise = if worst > 0.0 { f64::INFINITY } else { 0.0 };
        return out;
    }
    let t0 = rs.times[0];
    for (&t, &g) in rs.times.iter().zip(&rs.residual_norm_sq) {
        let pred = libm::exp(-rate * (t - t0));
        let point = if g > 0.0 {
            libm::expm1(libm::log(g) - libm::log(g0) + rate * (t - t0)).abs()
        } else {
            1.0
        };
        out.max_pointwise = out.max_pointwise.max(point);
        out.max_normalized = out.max_normalized.max((g / g0 - pred).abs());
    }
    out
}

/// `ln y ≈ intercept − rate·t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub samples_used: usize,
}

fn log_linear_fit(points: &[(f64, f64)]) -> Option<DecayFit> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let (st, sy) = points.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / n, sy / n);
    let (sxx, sxy) = points.iter().fold((0.0, 0.0), |(a, b), (t, y)| {
        (a + (t - mt) * (t - mt), b + (t - mt) * (y - my))
    });
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(DecayFit {
        rate: -slope,
        intercept: my - slope * mt,
        samples_used: points.len(),
    })
}

/// OLS fit of `ln g(y,y)` against time, skipping the first 5% of samples
/// and samples below `1e-12`. The rate of `‖y‖` is half the returned rate.
pub fn fit_decay_rate(rs: &ResidualSeries) -> Result<DecayFit> {
    let skip = rs.times.len() / 20;
    let points: Vec<(f64, f64)> = rs
        .times
        .iter()
        .zip(&rs.residual_norm_sq)
        .skip(skip)
        .filter(|(_, &g)| g >= 1e-12)
        .map(|(&t, &g)| (t, libm::log(g)))
        .collect();
    log_linear_fit(&points).ok_or_else(|| Error::invalid("too few residual samples above the floor"))
}

/// Comparison of a closed-loop solution with the reference orbit it
/// converges to.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalescenceReport<P> {
    pub t_match: f64,
    pub times: Vec<f64>,
    /// The matched reference orbit sampled at `times`.
    pub reference: Vec<P>,
    /// Ambient distance between the solution and the reference.
    pub distances: Vec<f64>,
    /// Fitted exponential rate of the distance; `None` when too few samples
    /// fall into the fit window (for example on the graph itself).
    pub rate: Option<f64>,
    pub prefactor: Option<f64>,
    pub fit_window: Option<(f64, f64)>,
    pub samples_used: usize,
    pub terminal_separation: f64,
}

/// Match the solution to the reference orbit through `q(t_match)` and fit
/// the rate at which they coalesce.
///
/// The matched orbit passes through `q(t_match)`, so the distance behaves
/// like `a(e^{−λt} − e^{−λ t_match})`; samples within `ln(100)/λ` of
/// `t_match` are excluded from the fit.
pub fn asymptotic_phase<M: Manifold>(
    manifold: &M,
    field: &M::Field,
    traj: &Trajectory<M::Point>,
    t_match: f64,
    dt: f64,
) -> Result<CoalescenceReport<M::Point>> {
    let idx = traj
        .times
        .iter()
        .rposition(|&t| t <= t_match)
        .ok_or_else(|| Error::invalid("matching time precedes the trajectory"))?;
    let t_m = traj.times[idx];
    let s = &traj.states[idx];
    let y = s.v - field.eval(&s.q);
    let residual = manifold.metric(&s.q, &y, &y);
    if !(residual < 1e-6) {
        return Err(Error::NotYetConverged { residual });
    }
    let t0 = traj.times[0];
    let start = flow_point(manifold, field, &s.q, t0 - t_m, dt)?;
    let times = traj.times[..=idx].to_vec();
    let reference = flow_through(manifold, field, &start, t0, &times, dt)?;
    let distances: Vec<f64> = traj.states[..=idx]
        .iter()
        .zip(&reference)
        .map(|(st, r)| (st.q - *r).norm())
        .collect();

    let mut window: Vec<(f64, f64)> = times
        .iter()
        .zip(&distances)
        .filter(|(_, &d)| (1e-10..=1e-2).contains(&d))
        .map(|(&t, &d)| (t, libm::log(d)))
        .collect();
    let drop = window.len() / 20;
    window.drain(..drop);
    let mut fit = log_linear_fit(&window);
    for _ in 0..2 {
        let Some(f) = fit else { break };
        if !(f.rate > 0.0) {
            break;
        }
        let cutoff = t_m - libm::log(100.0) / f.rate;
        let trimmed: Vec<(f64, f64)> = window.iter().copied().filter(|(t, _)| *t <= cutoff).collect();
        match log_linear_fit(&trimmed) {
            Some(g) => {
                fit = Some(g);
                window = trimmed;
            }
            None => break,
        }
    }
    let fit_window = match (window.first(), window.last(), fit) {
        (Some(a), Some(b), Some(_)) => Some((a.0, b.0)),
        _ => None,
    };
    Ok(CoalescenceReport {
        t_match: t_m,
        terminal_separation: distances[idx],
        times,
        reference,
        rate: fit.map(|f| f.rate),
        prefactor: fit.map(|f| libm::exp(f.intercept)),
        fit_window,
        samples_used: fit.map_or(0, |f| f.samples_used),
        distances,
    })
}

/// Weights of the position and velocity blocks in the ambient inner product
/// on `T(TQ)` used to build frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameWeights {
    pub position: f64,
    pub velocity: f64,
}

impl Default for FrameWeights {
    fn default() -> Self {
        FrameWeights {
            position: 1.0,
            velocity: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateSettings {
    pub tau: f64,
    /// Highest power `i` checked (inclusive).
    pub k: usize,
    pub dt: f64,
    pub fd_step: f64,
    /// Factor in `‖A_N‖ < budget · m(A_T)^i`.
    pub naim_budget: f64,
    pub weights: FrameWeights,
}

impl Default for CertificateSettings {
    fn default() -> Self {
        CertificateSettings {
            tau: 1.0,
            k: 3,
            dt: 1e-3,
            fd_step: 1e-5,
            naim_budget: 0.5,
            weights: FrameWeights::default(),
        }
    }
}

/// Finite-time certificate at one base point.
#[derive(Debug, Clone, PartialEq)]
pub struct BunchingEntry<P> {
    pub base: TangentState<P>,
    pub tau: f64,
    /// `‖A_T‖`.
    pub tangent_norm: f64,
    /// `m(A_T)`, the smallest singular value.
    pub tangent_conorm: f64,
    /// `‖A_N‖`.
    pub normal_norm: f64,
    pub naim_budget: f64,
    /// `‖A_N‖ < budget · m(A_T)^i` for `i = 0..=k`.
    pub naim: Vec<bool>,
    /// `‖A_N‖ · ‖A_T‖^i < ½ m(A_T)` for `i = 0..=k`.
    pub bunching: Vec<bool>,
    /// Right side over left side of each NAIM inequality.
    pub naim_margin: Vec<f64>,
    /// Right side over left side of each bunching inequality.
    pub bunching_margin: Vec<f64>,
}

impl<P> BunchingEntry<P> {
    pub fn passes(&self) -> bool {
        self.naim.iter().chain(&self.bunching).all(|&b| b)
    }

    /// Recompute every verdict from the stored norms.
    pub fn is_consistent(&self) -> bool {
        let (n, t, m) = (self.normal_norm, self.tangent_norm, self.tangent_conorm);
        let ordered = t >= m && m >= 0.0 && n >= 0.0;
        let naim_ok = self
            .naim
            .iter()
            .enumerate()
            .all(|(i, &b)| b == (n < self.naim_budget * libm::pow(m, i as f64)));
        let bunch_ok = self
            .bunching
            .iter()
            .enumerate()
            .all(|(i, &b)| b == (n * libm::pow(t, i as f64) < 0.5 * m));
        ordered && naim_ok && bunch_ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BunchingReport<P> {
    pub entries: Vec<BunchingEntry<P>>,
    pub failures: usize,
    pub all_pass: bool,
}

impl<P> BunchingReport<P> {
    pub fn from_entries(entries: Vec<BunchingEntry<P>>) -> Self {
        let failures = entries.iter().filter(|e| !e.passes()).count();
        BunchingReport {
            all_pass: failures == 0,
            failures,
            entries,
        }
    }
}

fn weighted_dot(w: &FrameWeights, half: usize, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let wt = if i < half { w.position } else { w.velocity };
        s += wt * a[i] * b[i];
    }
    s
}

type Frame = Vec<DVector<f64>>;

/// Orthonormal frames `(U_T, U_N)` of `T_v X(Q)` and its complement inside
/// `T_v(TQ)` at a state on the graph.
fn graph_frames<M: Manifold>(
    manifold: &M,
    field: &M::Field,
    state: &TangentState<M::Point>,
    weights: &FrameWeights,
) -> Result<(Frame, Frame)> {
    let n = M::Point::LEN;
    let dot = |a: &DVector<f64>, b: &DVector<f64>| weighted_dot(weights, n, a, b);
    let frame = manifold.frame(&state.q);
    let dim = frame.len();
    let flat = |a: M::Point, b: M::Point| DVector::from_vec(TangentState { q: a, v: b }.to_flat());
    let tangent_raw: Vec<DVector<f64>> = frame.iter().map(|e| flat(*e, field.derivative(&state.q, e))).collect();
    let tangent = gram_schmidt(&tangent_raw, dot, 1e-10);
    if tangent.len() != dim {
        return Err(Error::Frame("differential of the field is rank deficient"));
    }
    let mut all = tangent_raw;
    all.extend(frame.iter().map(|e| flat(M::Point::zero(), *e)));
    let full = gram_schmidt(&all, dot, 1e-10);
    if full.len() != 2 * dim {
        return Err(Error::Frame("vertical directions are not complementary"));
    }
    let normal = full[dim..].to_vec();
    Ok((tangent, normal))
}

fn block(
    w: &FrameWeights,
    half: usize,
    a: &DMatrix<f64>,
    rows: &[DVector<f64>],
    cols: &[DVector<f64>],
) -> DMatrix<f64> {
    let images: Vec<DVector<f64>> = cols.iter().map(|c| a * c).collect();
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        weighted_dot(w, half, &rows[i], &images[j])
    })
}

/// Run the finite-time k-NAIM and center-bunching checks at one point of
/// the graph.
pub fn bunching_certificate<M: Manifold>(
    cfg: &FeedbackConfig<M>,
    base: &TangentState<M::Point>,
    settings: &CertificateSettings,
) -> Result<BunchingEntry<M::Point>> {
    if settings.k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let w = &settings.weights;
    if !(w.position > 0.0 && w.velocity > 0.0) {
        return Err(Error::invalid("frame weights must be positive"));
    }
    let m = cfg.manifold();
    let half = M::Point::LEN;
    let mono = monodromy(cfg, base, settings.tau, settings.dt, settings.fd_step)?;
    let (t_base, n_base) = graph_frames(m, cfg.field(), base, w)?;
    let (t_img, n_img) = graph_frames(m, cfg.field(), &mono.image_state, w)?;
    let a_t = block(w, half, &mono.matrix, &t_img, &t_base);
    let a_n = block(w, half, &mono.matrix, &n_img, &n_base);
    let sv_t = a_t.singular_values();
    let tangent_norm = sv_t.max();
    let tangent_conorm = sv_t.min();
    let normal_norm = a_n.singular_values().max();

    let budget = settings.naim_budget;
    let mut entry = BunchingEntry {
        base: *base,
        tau: settings.tau,
        tangent_norm,
        tangent_conorm,
        normal_norm,
        naim_budget: budget,
        naim: vec![],
        bunching: vec![],
        naim_margin: vec![],
        bunching_margin: vec![],
    };
    for i in 0..=settings.k {
        let p = i as f64;
        let naim_rhs = budget * libm::pow(tangent_conorm, p);
        let bunch_lhs = normal_norm * libm::pow(tangent_norm, p);
        let bunch_rhs = 0.5 * tangent_conorm;
        entry.naim.push(normal_norm < naim_rhs);
        entry.bunching.push(bunch_lhs < bunch_rhs);
        entry.naim_margin.push(naim_rhs / normal_norm);
        entry.bunching_margin.push(bunch_rhs / bunch_lhs);
    }
    Ok(entry)
}

/// Base points on the graph, drawn by flowing uniformly random points for a
/// random time in `[0, 10]` so that samples follow the reference dynamics.
pub fn sample_base_points<M: Manifold>(
    cfg: &FeedbackConfig<M>,
    n_base: usize,
    seed: u64,
    dt: f64,
) -> Result<Vec<TangentState<M::Point>>> {
    if n_base == 0 {
        return Err(Error::invalid("at least one base point is required"));
    }
    let m = cfg.manifold();
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(n_base);
    for _ in 0..n_base {
        let q0 = m.sample_point(&mut rng);
        let t = 10.0 * unit_interval(&mut rng);
        let q = flow_point(m, cfg.field(), &q0, t, dt)?;
        out.push(TangentState {
            q,
            v: cfg.field().eval(&q),
        });
    }
    Ok(out)
}

/// Certificates at `n_base` sampled base points.
pub fn certificate_sweep<M: Manifold>(
    cfg: &FeedbackConfig<M>,
    n_base: usize,
    seed: u64,
    settings: &CertificateSettings,
) -> Result<BunchingReport<M::Point>> {
    let bases = sample_base_points(cfg, n_base, seed, settings.dt)?;
    let entries = bases
        .iter()
        .map(|b| bunching_certificate(cfg, b, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(BunchingReport::from_entries(entries))
}
