//! Smeared-analyzer model of coincidence probabilities.
//!
//! A macroscopic analyzer setting `A` is represented by a distribution of
//! microscopic directions `a` supported on the cap
//! `{a : |1 - a.A| < epsilon}`. Coincidence probabilities are the singlet
//! probabilities averaged over both caps and scaled by the product of the
//! two counting efficiencies:
//!
//! `P(x, y | A, B) = eta_A eta_B E[p(x, y | a, b)]`, `a ~ rho_A`, `b ~ rho_B`.
//!
//! With `epsilon > 0` the equal-setting agreement probability `P(x, x | A, A)`
//! is strictly positive even though the sharp-direction value is zero.

use std::f64::consts::{PI, TAU};

use rand::Rng;

use crate::error::{Error, Result};
use crate::quantum::{build_singlet, joint_probability, Direction, Outcome, Spin, TwoQubitState};
use crate::rng::{par_batches, Stream};
use crate::series::Detection;
use crate::stats::{Estimate, Moments};

/// Minimum Monte Carlo sample count accepted by the estimators.
pub const MIN_SAMPLES: usize = 100;

/// Shape of the direction distribution on the cap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CapProfile {
    /// Uniform with respect to surface area on the cap.
    Uniform,
    /// Isotropic Gaussian of angular width `sigma` (radians) in the tangent
    /// plane, truncated to the cap. The polar angle follows a truncated
    /// Rayleigh law, which has a closed-form inverse CDF.
    TruncatedGaussian { sigma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapDistribution {
    center: Direction,
    epsilon: f64,
    profile: CapProfile,
}

impl CapDistribution {
    pub fn new(center: Direction, epsilon: f64, profile: CapProfile) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 2.0) {
            return Err(Error::parameter(format!(
                "cap epsilon must lie in (0, 2), got {epsilon}"
            )));
        }
        if let CapProfile::TruncatedGaussian { sigma } = profile {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(Error::parameter(format!(
                    "gaussian cap width must be positive, got {sigma}"
                )));
            }
        }
        Ok(CapDistribution {
            center,
            epsilon,
            profile,
        })
    }

    pub fn uniform(center: Direction, epsilon: f64) -> Result<Self> {
        Self::new(center, epsilon, CapProfile::Uniform)
    }

    pub fn center(&self) -> Direction {
        self.center
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn profile(&self) -> CapProfile {
        self.profile
    }

    /// Largest polar angle in the cap.
    pub fn max_polar_angle(&self) -> f64 {
        // 1 - cos(theta) = eps  <=>  theta = 2 asin(sqrt(eps / 2))
        2.0 * (0.5 * self.epsilon).sqrt().asin()
    }

    /// Cap membership `|1 - d.center| < epsilon`, evaluated through the chord.
    pub fn contains(&self, d: &Direction) -> bool {
        0.5 * d.chord_squared(&self.center) < self.epsilon
    }

    /// `1 - cos(theta)` at cumulative probability `u` in `[0, 1)` of the
    /// polar-angle distribution.
    fn one_minus_cos_at(&self, u: f64) -> f64 {
        match self.profile {
            CapProfile::Uniform => self.epsilon * u,
            CapProfile::TruncatedGaussian { sigma } => {
                let theta_max = self.max_polar_angle();
                let tail = -(-0.5 * (theta_max / sigma).powi(2)).exp_m1();
                let theta = sigma * (-2.0 * (-u * tail).ln_1p()).sqrt();
                let h = (0.5 * theta).sin();
                2.0 * h * h
            }
        }
    }

    /// Direction at cumulative polar probability `u` and azimuth `phi`.
    pub fn direction_at(&self, u: f64, phi: f64) -> Direction {
        self.direction_from_polar(self.one_minus_cos_at(u), phi)
    }

    /// Quadrature nodes `(1 - cos theta, weight)` for the polar-angle law.
    /// The uniform profile is linear in `1 - cos theta`; the Gaussian profile
    /// is integrated in `theta` against its density, which is entire.
    fn polar_rule(&self, order: usize) -> Vec<(f64, f64)> {
        let (nodes, weights) = gauss_legendre_unit(order);
        match self.profile {
            CapProfile::Uniform => nodes.iter().zip(&weights).map(|(u, w)| (self.epsilon * u, *w)).collect(),
            CapProfile::TruncatedGaussian { sigma } => {
                let theta_max = self.max_polar_angle();
                let s2 = sigma * sigma;
                let tail = -(-0.5 * theta_max * theta_max / s2).exp_m1();
                nodes
                    .iter()
                    .zip(&weights)
                    .map(|(u, w)| {
                        let theta = theta_max * u;
                        let density = theta / s2 * (-0.5 * theta * theta / s2).exp() / tail;
                        let h = (0.5 * theta).sin();
                        (2.0 * h * h, w * theta_max * density)
                    })
                    .collect()
            }
        }
    }

    fn direction_from_polar(&self, t: f64, phi: f64) -> Direction {
        let cos_t = 1.0 - t;
        let sin_t = (t * (2.0 - t)).max(0.0).sqrt();
        let (e1, e2) = self.center.orthonormal_frame();
        let (sp, cp) = phi.sin_cos();
        let c = self.center.components();
        let (e1, e2) = (e1.components(), e2.components());
        let v = [0, 1, 2].map(|i| cos_t * c[i] + sin_t * (cp * e1[i] + sp * e2[i]));
        Direction::from_raw_unit(v)
    }
}

/// Draws one microscopic direction from the cap by inverse CDF in the polar
/// angle and a uniform azimuth.
pub fn sample_cap_direction<R: Rng + ?Sized>(cap: &CapDistribution, rng: &mut R) -> Direction {
    loop {
        let u: f64 = rng.random();
        let phi = TAU * rng.random::<f64>();
        let d = cap.direction_at(u, phi);
        // Draws that land exactly on the boundary through rounding are redrawn.
        if cap.contains(&d) {
            return d;
        }
    }
}

/// Context `(A, B)` with its counting efficiencies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperimentSetting {
    pub cap_a: CapDistribution,
    pub cap_b: CapDistribution,
    eta_a: f64,
    eta_b: f64,
}

impl ExperimentSetting {
    pub fn new(cap_a: CapDistribution, cap_b: CapDistribution, eta_a: f64, eta_b: f64) -> Result<Self> {
        for (name, eta) in [("eta_a", eta_a), ("eta_b", eta_b)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::parameter(format!("{name} must lie in (0, 1], got {eta}")));
            }
        }
        Ok(ExperimentSetting {
            cap_a,
            cap_b,
            eta_a,
            eta_b,
        })
    }

    /// Perfect counters.
    pub fn ideal(cap_a: CapDistribution, cap_b: CapDistribution) -> Self {
        ExperimentSetting {
            cap_a,
            cap_b,
            eta_a: 1.0,
            eta_b: 1.0,
        }
    }

    pub fn eta_a(&self) -> f64 {
        self.eta_a
    }

    pub fn eta_b(&self) -> f64 {
        self.eta_b
    }

    /// Probability that a pair is registered as a coincidence.
    pub fn detection_probability(&self) -> f64 {
        self.eta_a * self.eta_b
    }

    /// The same context with the two sides exchanged.
    pub fn swapped(&self) -> Self {
        ExperimentSetting {
            cap_a: self.cap_b,
            cap_b: self.cap_a,
            eta_a: self.eta_b,
            eta_b: self.eta_a,
        }
    }
}

fn check_samples(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::parameter(format!(
            "at least {MIN_SAMPLES} Monte Carlo samples are required, got {n}"
        )));
    }
    Ok(())
}

/// Monte Carlo average of `integrand(a, b)` over the two caps, batched on
/// derived streams.
fn cap_average<const K: usize>(
    setting: &ExperimentSetting,
    n_samples: usize,
    stream: &Stream,
    integrand: impl Fn(&TwoQubitState, &Direction, &Direction) -> [f64; K] + Sync,
) -> [Estimate; K] {
    let state = build_singlet();
    let batches = par_batches(stream, n_samples, |rng, len| {
        let mut acc = [Moments::default(); K];
        for _ in 0..len {
            let a = sample_cap_direction(&setting.cap_a, rng);
            let b = sample_cap_direction(&setting.cap_b, rng);
            for (m, v) in acc.iter_mut().zip(integrand(&state, &a, &b)) {
                m.push(v);
            }
        }
        acc
    });
    let mut total = [Moments::default(); K];
    for batch in &batches {
        for (t, m) in total.iter_mut().zip(batch) {
            t.merge(m);
        }
    }
    let scale = setting.detection_probability();
    total.map(|m| {
        let e = m.estimate();
        Estimate::new(scale * e.value, scale * e.std_error)
    })
}

/// Monte Carlo estimate of `P(x, y | A, B)` with its standard error.
pub fn smeared_probability(
    setting: &ExperimentSetting,
    out: Outcome,
    n_samples: usize,
    stream: &Stream,
) -> Result<Estimate> {
    check_samples(n_samples)?;
    let [e] = cap_average(setting, n_samples, stream, |s, a, b| [joint_probability(s, a, b, out)]);
    Ok(e)
}

/// All four smeared probabilities from one common set of cap draws, in
/// [`Outcome::ALL`] order.
pub fn smeared_table(setting: &ExperimentSetting, n_samples: usize, stream: &Stream) -> Result<[Estimate; 4]> {
    check_samples(n_samples)?;
    Ok(cap_average(setting, n_samples, stream, |s, a, b| {
        Outcome::ALL.map(|o| joint_probability(s, a, b, o))
    }))
}

/// `P(+,+|A,A) + P(-,-|A,A)`: the weight of the equal-outcome coincidences
/// that sharp analyzers would forbid.
pub fn anti_correlation_gap(setting: &ExperimentSetting, n_samples: usize, stream: &Stream) -> Result<Estimate> {
    check_samples(n_samples)?;
    let (ca, cb) = (&setting.cap_a, &setting.cap_b);
    if ca.center().chord_squared(&cb.center()) > 1e-24 || ca.epsilon() != cb.epsilon() {
        return Err(Error::parameter(
            "anti-correlation gap needs both caps to share center and epsilon",
        ));
    }
    let up = Outcome::new(Spin::Up, Spin::Up);
    let down = Outcome::new(Spin::Down, Spin::Down);
    let [e] = cap_average(setting, n_samples, stream, |s, a, b| {
        [joint_probability(s, a, b, up) + joint_probability(s, a, b, down)]
    });
    Ok(e)
}

/// One trial of the generative reading: draw `a`, `b` from the caps, draw the
/// outcome from the singlet distribution at `(a, b)`, then register the pair
/// with probability `eta_a * eta_b`.
pub fn sample_contextual_trial<R: Rng + ?Sized>(setting: &ExperimentSetting, rng: &mut R) -> Detection {
    let state = build_singlet();
    let a = sample_cap_direction(&setting.cap_a, rng);
    let b = sample_cap_direction(&setting.cap_b, rng);
    let outcome = crate::quantum::sample_trial(&state, &a, &b, rng);
    // The thinning draw is always consumed so stream positions do not depend
    // on the efficiencies.
    let keep: f64 = rng.random();
    if keep < setting.detection_probability() {
        Detection::Pair(outcome)
    } else {
        Detection::NoDetection
    }
}

/// Deterministic cross-check of [`smeared_probability`]: product Gauss-Legendre
/// rule in the polar variable of each cap and an equally spaced
/// azimuth rule (exact for trigonometric polynomials of degree `< 2 order`).
pub fn smeared_probability_quadrature(setting: &ExperimentSetting, out: Outcome, order: usize) -> Result<f64> {
    if order == 0 {
        return Err(Error::parameter("quadrature order must be positive"));
    }
    let state = build_singlet();
    let n_phi = 2 * order;
    let phis: Vec<f64> = (0..n_phi).map(|k| TAU * (k as f64 + 0.5) / n_phi as f64).collect();
    let grid = |cap: &CapDistribution| -> Vec<(Direction, f64)> {
        let mut pts = Vec::with_capacity(order * n_phi);
        for (t, w) in cap.polar_rule(order) {
            for &phi in &phis {
                pts.push((cap.direction_from_polar(t, phi), w / n_phi as f64));
            }
        }
        pts
    };
    let ga = grid(&setting.cap_a);
    let gb = grid(&setting.cap_b);
    let mut total = 0.0;
    for (a, wa) in &ga {
        let mut inner = 0.0;
        for (b, wb) in &gb {
            inner += wb * joint_probability(&state, a, b, out);
        }
        total += wa * inner;
    }
    Ok(setting.detection_probability() * total)
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// `P_n(x)` and its derivative by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::sample_trial;

    fn cap(deg: f64, eps: f64) -> CapDistribution {
        CapDistribution::uniform(Direction::planar_degrees(deg), eps).unwrap()
    }

    // Independent oracle: the singlet integrand is bilinear in (a, b), so the
    // cap average only depends on the mean direction m_A A of each cap with
    // m = E[cos theta]. For the uniform cap, cos theta ~ U(1 - eps, 1) and
    // m = 1 - eps / 2. Hence P(x,y|A,B) = eta_a eta_b (1 - x y m_A m_B A.B) / 4.
    fn uniform_closed_form(setting: &ExperimentSetting, out: Outcome) -> f64 {
        let ma = 1.0 - 0.5 * setting.cap_a.epsilon();
        let mb = 1.0 - 0.5 * setting.cap_b.epsilon();
        let dot = setting.cap_a.center().dot(&setting.cap_b.center());
        setting.detection_probability() * 0.25 * (1.0 - f64::from(out.product()) * ma * mb * dot)
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CapDistribution::uniform(Direction::Z, 0.0).is_err());
        assert!(CapDistribution::uniform(Direction::Z, 2.0).is_err());
        assert!(CapDistribution::new(Direction::Z, 0.1, CapProfile::TruncatedGaussian { sigma: 0.0 }).is_err());
        let c = cap(0.0, 0.1);
        assert!(ExperimentSetting::new(c, c, 0.0, 1.0).is_err());
        assert!(ExperimentSetting::new(c, c, 1.0, 1.5).is_err());
        let s = ExperimentSetting::ideal(c, c);
        assert!(matches!(
            smeared_probability(&s, Outcome::ALL[0], 99, &Stream::new(0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn samples_stay_in_cap() {
        let mut rng = Stream::new(1);
        for eps in [1e-9, 1e-4, 0.05, 0.5, 1.9] {
            for profile in [CapProfile::Uniform, CapProfile::TruncatedGaussian { sigma: 0.02 }] {
                let c = CapDistribution::new(Direction::normalized(1.0, -2.0, 0.5).unwrap(), eps, profile).unwrap();
                for _ in 0..20_000 {
                    let d = sample_cap_direction(&c, &mut rng);
                    assert!(c.contains(&d));
                    assert!((1.0 - d.dot(&c.center())).abs() < eps * (1.0 + 1e-6));
                    let n = d.components().iter().map(|v| v * v).sum::<f64>().sqrt();
                    assert!((n - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn degenerate_cap_collapses_to_center() {
        let eps = 1e-10;
        let c = cap(30.0, eps);
        let mut rng = Stream::new(2);
        for _ in 0..1000 {
            let d = sample_cap_direction(&c, &mut rng);
            // angle <= acos(1 - eps) ~ sqrt(2 eps)
            assert!(d.angle_to(&c.center()) <= (2.0 * eps).sqrt() * (1.0 + 1e-6));
        }
    }

    #[test]
    fn mean_direction_is_parallel_to_center() {
        let c = cap(70.0, 0.3);
        let (e1, e2) = c.center().orthonormal_frame();
        let mut rng = Stream::new(3);
        let n = 100_000;
        let mut m1 = Moments::default();
        let mut m2 = Moments::default();
        let mut mc = Moments::default();
        for _ in 0..n {
            let d = sample_cap_direction(&c, &mut rng);
            m1.push(d.dot(&e1));
            m2.push(d.dot(&e2));
            mc.push(d.dot(&c.center()));
        }
        for m in [m1, m2] {
            let e = m.estimate();
            assert!(e.value.abs() < 4.0 * e.std_error, "{e}");
        }
        // cos theta is uniform on (1 - eps, 1) for the uniform profile
        let e = mc.estimate();
        assert!((e.value - 0.85).abs() < 4.0 * e.std_error);
    }

    #[test]
    fn gaussian_profile_polar_law() {
        // Truncated Rayleigh: P(theta < r) = (1 - exp(-r^2/2s^2)) / (1 - exp(-tmax^2/2s^2)).
        let sigma = 0.05;
        let c = CapDistribution::new(Direction::Z, 0.01, CapProfile::TruncatedGaussian { sigma }).unwrap();
        let tmax = c.max_polar_angle();
        let r = 0.6 * tmax;
        let expect = (1.0 - (-r * r / (2.0 * sigma * sigma)).exp()) / (1.0 - (-tmax * tmax / (2.0 * sigma * sigma)).exp());
        let mut rng = Stream::new(4);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| sample_cap_direction(&c, &mut rng).angle_to(&Direction::Z) < r)
            .count();
        let f = hits as f64 / n as f64;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((f - expect).abs() < 4.0 * se, "{f} vs {expect}");
    }

    #[test]
    fn sharp_limit_of_equal_settings() {
        let s = ExperimentSetting::ideal(cap(10.0, 1e-12), cap(10.0, 1e-12));
        let e = smeared_probability(&s, Outcome::new(Spin::Up, Spin::Up), 10_000, &Stream::new(5)).unwrap();
        assert!(e.value < 1e-11);
    }

    #[test]
    fn smeared_equal_settings_agree_sometimes() {
        let s = ExperimentSetting::ideal(cap(10.0, 0.05), cap(10.0, 0.05));
        let e = smeared_probability(&s, Outcome::new(Spin::Up, Spin::Up), 100_000, &Stream::new(6)).unwrap();
        assert!(e.value > 0.0 && e.z_score() > 5.0);
    }

    #[test]
    fn perpendicular_with_half_efficiency() {
        let s = ExperimentSetting::new(cap(0.0, 0.2), cap(90.0, 0.2), 0.5, 0.5).unwrap();
        let table = smeared_table(&s, 200_000, &Stream::new(7)).unwrap();
        for e in table {
            assert!((e.value - 0.0625).abs() < 4.0 * e.std_error.max(1e-15), "{e}");
            assert!(e.value <= 0.25);
        }
    }

    #[test]
    fn monte_carlo_matches_closed_form_and_quadrature() {
        let setting = ExperimentSetting::new(cap(0.0, 0.3), cap(50.0, 0.1), 0.9, 0.8).unwrap();
        let table = smeared_table(&setting, 400_000, &Stream::new(8)).unwrap();
        for o in Outcome::ALL {
            let exact = uniform_closed_form(&setting, o);
            let quad = smeared_probability_quadrature(&setting, o, 8).unwrap();
            assert!((quad - exact).abs() < 1e-12, "{quad} vs {exact}");
            let e = table[o.index()];
            assert!((e.value - exact).abs() < 4.0 * e.std_error, "{e} vs {exact}");
        }
    }

    #[test]
    fn quadrature_agrees_for_gaussian_profile() {
        let prof = CapProfile::TruncatedGaussian { sigma: 0.2 };
        let ca = CapDistribution::new(Direction::planar_degrees(0.0), 0.2, prof).unwrap();
        let cb = CapDistribution::new(Direction::planar_degrees(120.0), 0.2, prof).unwrap();
        let setting = ExperimentSetting::ideal(ca, cb);
        let q12 = smeared_probability_quadrature(&setting, Outcome::ALL[0], 12).unwrap();
        let q16 = smeared_probability_quadrature(&setting, Outcome::ALL[0], 16).unwrap();
        assert!((q12 - q16).abs() < 1e-10, "{q12} vs {q16}");
        let e = smeared_probability(&setting, Outcome::ALL[0], 400_000, &Stream::new(9)).unwrap();
        assert!((e.value - q16).abs() < 4.0 * e.std_error);
    }

    #[test]
    fn probabilities_sum_to_one_at_full_efficiency() {
        let setting = ExperimentSetting::ideal(cap(0.0, 0.4), cap(33.0, 0.7));
        let table = smeared_table(&setting, 50_000, &Stream::new(10)).unwrap();
        let sum: f64 = table.iter().map(|e| e.value).sum();
        let se = table.iter().map(|e| e.std_error * e.std_error).sum::<f64>().sqrt();
        assert!((sum - 1.0).abs() < 3.0 * se.max(1e-12));
    }

    #[test]
    fn swap_symmetry() {
        let setting = ExperimentSetting::new(cap(0.0, 0.4), cap(60.0, 0.1), 0.7, 0.9).unwrap();
        let swapped = setting.swapped();
        for o in Outcome::ALL {
            let p = smeared_probability(&setting, o, 100_000, &Stream::new(11)).unwrap();
            let q = smeared_probability(&swapped, Outcome::new(o.y, o.x), 100_000, &Stream::new(12)).unwrap();
            assert!((p.value - q.value).abs() < 3.0 * p.combined_error(&q));
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let setting = ExperimentSetting::ideal(cap(0.0, 0.1), cap(45.0, 0.1));
        let run = || smeared_table(&setting, 150_000, &Stream::new(13)).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
        let many = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(run);
        assert_eq!(one, many);
    }

    #[test]
    fn gap_requires_matching_caps() {
        let s = ExperimentSetting::ideal(cap(0.0, 0.1), cap(1.0, 0.1));
        assert!(matches!(anti_correlation_gap(&s, 1000, &Stream::new(0)), Err(Error::Parameter(_))));
        let s = ExperimentSetting::ideal(cap(0.0, 0.1), cap(0.0, 0.2));
        assert!(anti_correlation_gap(&s, 1000, &Stream::new(0)).is_err());
    }

    #[test]
    fn gap_vanishes_with_cap() {
        let s = ExperimentSetting::ideal(cap(20.0, 1e-9), cap(20.0, 1e-9));
        let g = anti_correlation_gap(&s, 10_000, &Stream::new(14)).unwrap();
        assert!(g.value > 0.0 && g.value < 1e-6);
    }

    #[test]
    fn gap_against_oracles() {
        let eps = 0.05;
        let s = ExperimentSetting::ideal(cap(0.0, eps), cap(0.0, eps));
        let g = anti_correlation_gap(&s, 1_000_000, &Stream::new(15)).unwrap();
        // closed form (1 - m^2) / 2 with m = 1 - eps / 2
        let m = 1.0 - 0.5 * eps;
        let exact = 0.5 * (1.0 - m * m);
        assert!((g.value - exact).abs() < 3.0 * g.std_error, "{g} vs {exact}");

        // rejection-sampling oracle: uniform points on the sphere kept when
        // inside the cap, independent of the inverse-CDF construction
        let mut rng = Stream::new(16);
        let mut draw = || loop {
            let z: f64 = rng.random_range(-1.0..1.0);
            let phi: f64 = rng.random_range(0.0..TAU);
            let d = Direction::from_spherical(z.acos(), phi);
            if 1.0 - d.z() < eps {
                return d;
            }
        };
        let mut m = Moments::default();
        for _ in 0..1_000_000 {
            let a = draw();
            let b = draw();
            m.push(0.5 * (1.0 - a.dot(&b)));
        }
        let oracle = m.estimate();
        assert!((g.value - oracle.value).abs() < 3.0 * g.combined_error(&oracle));
    }

    #[test]
    fn gap_grows_with_epsilon() {
        let eps = 0.02;
        let small = ExperimentSetting::ideal(cap(0.0, eps), cap(0.0, eps));
        let large = ExperimentSetting::ideal(cap(0.0, 2.0 * eps), cap(0.0, 2.0 * eps));
        let stream = Stream::new(17);
        let gs = anti_correlation_gap(&small, 200_000, &stream).unwrap();
        let gl = anti_correlation_gap(&large, 200_000, &stream).unwrap();
        assert!(gl.value - gs.value > -3.0 * gs.combined_error(&gl));
    }

    #[test]
    fn perfect_counters_always_detect() {
        let s = ExperimentSetting::ideal(cap(0.0, 0.1), cap(30.0, 0.1));
        let mut rng = Stream::new(18);
        assert!((0..10_000).all(|_| sample_contextual_trial(&s, &mut rng).is_detected()));
    }

    #[test]
    fn generative_frequencies_match_estimate() {
        let s = ExperimentSetting::new(cap(0.0, 0.3), cap(45.0, 0.3), 0.8, 0.9).unwrap();
        let n = 100_000;
        let mut counts = [0usize; 4];
        let mut rng = Stream::new(19);
        for _ in 0..n {
            if let Detection::Pair(o) = sample_contextual_trial(&s, &mut rng) {
                counts[o.index()] += 1;
            }
        }
        let table = smeared_table(&s, 400_000, &Stream::new(20)).unwrap();
        for o in Outcome::ALL {
            let f = counts[o.index()] as f64 / n as f64;
            let p = table[o.index()];
            let se_f = (p.value * (1.0 - p.value) / n as f64).sqrt();
            assert!((f - p.value).abs() < 4.0 * se_f.hypot(p.std_error), "{o:?}");
        }
    }

    #[test]
    fn degenerate_cap_reproduces_sharp_statistics() {
        let a = Direction::planar_degrees(0.0);
        let b = Direction::planar_degrees(60.0);
        let s = ExperimentSetting::ideal(
            CapDistribution::uniform(a, 1e-12).unwrap(),
            CapDistribution::uniform(b, 1e-12).unwrap(),
        );
        let state = build_singlet();
        let n = 100_000;
        let mut ctx = [0usize; 4];
        let mut sharp = [0usize; 4];
        let mut r1 = Stream::new(21);
        let mut r2 = Stream::new(22);
        for _ in 0..n {
            ctx[sample_contextual_trial(&s, &mut r1).outcome().unwrap().index()] += 1;
            sharp[sample_trial(&state, &a, &b, &mut r2).index()] += 1;
        }
        for i in 0..4 {
            let p = (ctx[i] + sharp[i]) as f64 / (2 * n) as f64;
            let se = (2.0 * p * (1.0 - p) / n as f64).sqrt();
            assert!(((ctx[i] as f64 - sharp[i] as f64) / n as f64).abs() < 4.0 * se);
        }
    }

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre_unit(5);
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        // exact through degree 9: int_0^1 u^9 du = 0.1
        let v: f64 = x.iter().zip(&w).map(|(u, w)| w * u.powi(9)).sum();
        assert!((v - 0.1).abs() < 1e-14);
    }
}
