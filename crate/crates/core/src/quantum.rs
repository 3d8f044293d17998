//! Exact two-qubit machinery for the spin singlet.
//!
//! States are stored as four amplitudes over the product basis
//! `(++, +-, -+, --)` of the z axis. The first factor is particle I (analyzer
//! A), the second particle II (analyzer B). Projectors are built from the
//! closed form `(I + s * sigma_d) / 2`; eigenvectors use half-angle formulas,
//! so no numerical eigensolver is involved anywhere.

use std::fmt;
use std::ops::Neg;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance for exact-algebra identities (norms, sums of probabilities).
pub const EXACT_TOL: f64 = 1e-12;

type Mat2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A unit vector in three dimensions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Direction([f64; 3]);

impl Direction {
    pub const X: Direction = Direction([1.0, 0.0, 0.0]);
    pub const Y: Direction = Direction([0.0, 1.0, 0.0]);
    pub const Z: Direction = Direction([0.0, 0.0, 1.0]);

    /// Accepts components whose Euclidean norm is 1 within [`EXACT_TOL`].
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > EXACT_TOL {
            return Err(Error::domain(format!(
                "direction ({x}, {y}, {z}) has norm {norm}, expected 1"
            )));
        }
        Ok(Direction([x, y, z]))
    }

    /// Rescales any finite non-zero vector to unit length.
    pub fn normalized(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::domain(format!(
                "cannot normalize ({x}, {y}, {z})"
            )));
        }
        Ok(Direction([x / norm, y / norm, z / norm]))
    }

    /// Direction in the x-z measurement plane at `angle` radians from +z.
    pub fn planar(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Direction([s, 0.0, c])
    }

    pub fn planar_degrees(degrees: f64) -> Self {
        Self::planar(degrees.to_radians())
    }

    /// Polar angle `theta` from +z, azimuth `phi` from +x.
    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Direction([st * cp, st * sp, ct])
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    /// Angle to `other` in radians, as `atan2(|a x b|, a . b)` so that it stays
    /// accurate for nearly parallel and nearly antiparallel vectors.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let [ax, ay, az] = self.0;
        let [bx, by, bz] = other.0;
        let cross = [ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx];
        let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        sin.atan2(self.dot(other))
    }

    /// `|self - other|^2`, which equals `2 (1 - self . other)` without the
    /// cancellation of the direct form.
    pub fn chord_squared(&self, other: &Direction) -> f64 {
        let d = [
            self.0[0] - other.0[0],
            self.0[1] - other.0[1],
            self.0[2] - other.0[2],
        ];
        d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    }

    /// Two unit vectors completing `self` to a right-handed orthonormal frame.
    pub fn orthonormal_frame(&self) -> (Direction, Direction) {
        let [x, y, z] = self.0;
        // Branchless construction, stable at both poles.
        let sign = 1.0f64.copysign(z);
        let a = -1.0 / (sign + z);
        let b = x * y * a;
        let e1 = Direction([1.0 + sign * x * x * a, sign * b, -sign * x]);
        let e2 = Direction([b, sign + y * y * a, -y]);
        (e1, e2)
    }

    /// Renormalizes after arithmetic that may have drifted off the sphere.
    pub(crate) fn from_raw_unit(v: [f64; 3]) -> Self {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        Direction([v[0] / n, v[1] / n, v[2] / n])
    }

    fn half_angle_eigenvector(&self, spin: Spin) -> [Complex64; 2] {
        let [x, y, z] = self.0;
        let c = ((1.0 + z) * 0.5).max(0.0).sqrt();
        let s = ((1.0 - z) * 0.5).max(0.0).sqrt();
        let phase = if x == 0.0 && y == 0.0 {
            ONE
        } else {
            Complex64::from_polar(1.0, y.atan2(x))
        };
        match spin {
            Spin::Up => [Complex64::new(c, 0.0), phase * s],
            Spin::Down => [Complex64::new(s, 0.0), -phase * c],
        }
    }
}

impl Neg for Direction {
    type Output = Direction;

    fn neg(self) -> Direction {
        Direction([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

/// Spin projection result on one analyzer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Up, Spin::Down];

    pub fn value(self) -> i8 {
        match self {
            Spin::Up => 1,
            Spin::Down => -1,
        }
    }

    pub fn from_value(v: i64) -> Option<Spin> {
        match v {
            1 => Some(Spin::Up),
            -1 => Some(Spin::Down),
            _ => None,
        }
    }

    /// `Up` for non-negative arguments; zero is resolved to `Up`.
    pub fn from_sign(v: f64) -> Spin {
        if v >= 0.0 {
            Spin::Up
        } else {
            Spin::Down
        }
    }

    pub fn flip(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }

    fn index(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spin::Up => "+1",
            Spin::Down => "-1",
        })
    }
}

/// Coincidence outcome `(x, y)` for particles I and II.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Outcome {
    pub x: Spin,
    pub y: Spin,
}

impl Outcome {
    /// All outcomes in table order `(++, +-, -+, --)`.
    pub const ALL: [Outcome; 4] = [
        Outcome::new(Spin::Up, Spin::Up),
        Outcome::new(Spin::Up, Spin::Down),
        Outcome::new(Spin::Down, Spin::Up),
        Outcome::new(Spin::Down, Spin::Down),
    ];

    pub const fn new(x: Spin, y: Spin) -> Self {
        Outcome { x, y }
    }

    /// Position in [`Outcome::ALL`].
    pub fn index(self) -> usize {
        2 * self.x.index() + self.y.index()
    }

    /// `x * y`.
    pub fn product(self) -> i8 {
        self.x.value() * self.y.value()
    }

    pub fn flipped(self) -> Outcome {
        Outcome::new(self.x.flip(), self.y.flip())
    }
}

/// Pure two-qubit state with unit norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoQubitState {
    amplitudes: [Complex64; 4],
}

impl TwoQubitState {
    pub fn new(amplitudes: [Complex64; 4]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if !norm.is_finite() || (norm - 1.0).abs() > EXACT_TOL {
            return Err(Error::domain(format!(
                "two-qubit state has squared norm {norm}, expected 1"
            )));
        }
        Ok(TwoQubitState { amplitudes })
    }

    pub fn amplitudes(&self) -> &[Complex64; 4] {
        &self.amplitudes
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Pure single-qubit state with unit norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitState {
    amplitudes: [Complex64; 2],
}

impl QubitState {
    pub fn new(amplitudes: [Complex64; 2]) -> Result<Self> {
        let norm = amplitudes[0].norm_sqr() + amplitudes[1].norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > EXACT_TOL {
            return Err(Error::domain(format!(
                "qubit state has squared norm {norm}, expected 1"
            )));
        }
        Ok(QubitState { amplitudes })
    }

    /// Spin eigenstate along `d`.
    pub fn eigenstate(d: &Direction, spin: Spin) -> Self {
        QubitState {
            amplitudes: d.half_angle_eigenvector(spin),
        }
    }

    pub fn amplitudes(&self) -> &[Complex64; 2] {
        &self.amplitudes
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes[0].norm_sqr() + self.amplitudes[1].norm_sqr()
    }

    /// Probability of `spin` when measured along `d`.
    pub fn probability(&self, d: &Direction, spin: Spin) -> f64 {
        let p = projector(d, spin);
        let v = apply2(&p, &self.amplitudes);
        let ip = self.amplitudes[0].conj() * v[0] + self.amplitudes[1].conj() * v[1];
        ip.re.clamp(0.0, 1.0)
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &QubitState) -> f64 {
        let ip = self.amplitudes[0].conj() * other.amplitudes[0]
            + self.amplitudes[1].conj() * other.amplitudes[1];
        ip.norm_sqr()
    }
}

/// `(|+-> - |-+>) / sqrt(2)` with the global phase fixed so the amplitudes are
/// `(0, 1/sqrt 2, -1/sqrt 2, 0)`.
pub fn build_singlet() -> TwoQubitState {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    TwoQubitState {
        amplitudes: [ZERO, Complex64::new(h, 0.0), Complex64::new(-h, 0.0), ZERO],
    }
}

/// Pauli spin operator `sigma . d`.
pub fn spin_operator(d: &Direction) -> [[Complex64; 2]; 2] {
    let [x, y, z] = d.components();
    [
        [Complex64::new(z, 0.0), Complex64::new(x, -y)],
        [Complex64::new(x, y), Complex64::new(-z, 0.0)],
    ]
}

/// Projector onto spin `s` along `d`: `(I + s sigma.d) / 2`.
pub fn projector(d: &Direction, spin: Spin) -> [[Complex64; 2]; 2] {
    let s = f64::from(spin.value());
    let sigma = spin_operator(d);
    let mut p = [[ZERO; 2]; 2];
    for (i, row) in p.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let id = if i == j { 1.0 } else { 0.0 };
            *cell = (Complex64::new(id, 0.0) + sigma[i][j] * s) * 0.5;
        }
    }
    p
}

fn apply2(m: &Mat2, v: &[Complex64; 2]) -> [Complex64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

/// Applies `left (x) right` to a two-qubit amplitude vector.
pub fn apply_product(left: &Mat2, right: &Mat2, psi: &[Complex64; 4]) -> [Complex64; 4] {
    let mut out = [ZERO; 4];
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = ZERO;
            for k in 0..2 {
                for l in 0..2 {
                    acc += left[i][k] * right[j][l] * psi[2 * k + l];
                }
            }
            out[2 * i + j] = acc;
        }
    }
    out
}

/// `<psi| P_a(x) (x) P_b(y) |psi>`.
pub fn joint_probability(
    state: &TwoQubitState,
    a: &Direction,
    b: &Direction,
    out: Outcome,
) -> f64 {
    let pa = projector(a, out.x);
    let pb = projector(b, out.y);
    let psi = state.amplitudes();
    let projected = apply_product(&pa, &pb, psi);
    let ip: Complex64 = psi
        .iter()
        .zip(projected.iter())
        .map(|(u, v)| u.conj() * v)
        .sum();
    ip.re.clamp(0.0, 1.0)
}

/// The four joint probabilities in [`Outcome::ALL`] order.
pub fn joint_table(state: &TwoQubitState, a: &Direction, b: &Direction) -> [f64; 4] {
    Outcome::ALL.map(|o| joint_probability(state, a, b, o))
}

/// Closed form of [`joint_probability`] for the singlet: `(1 - x y a.b) / 4`.
pub fn singlet_probability(a: &Direction, b: &Direction, out: Outcome) -> f64 {
    // 1 - a.b is evaluated through the chord to keep precision when a ~ b.
    let one_minus = 0.5 * a.chord_squared(b);
    let dot = 1.0 - one_minus;
    match out.product() {
        1 => 0.25 * one_minus,
        _ => 0.25 * (1.0 + dot),
    }
}

/// Expectation of `x y`.
pub fn correlation(state: &TwoQubitState, a: &Direction, b: &Direction) -> f64 {
    Outcome::ALL
        .iter()
        .map(|&o| f64::from(o.product()) * joint_probability(state, a, b, o))
        .sum()
}

/// Probability that particle I yields `x` along `a`, whatever particle II does.
pub fn marginal_probability(state: &TwoQubitState, a: &Direction, x: Spin) -> f64 {
    let (_, norm) = conditional_amplitudes(state, a, x);
    norm
}

fn conditional_amplitudes(state: &TwoQubitState, a: &Direction, x: Spin) -> ([Complex64; 2], f64) {
    let e = a.half_angle_eigenvector(x);
    let psi = state.amplitudes();
    let chi = [
        e[0].conj() * psi[0] + e[1].conj() * psi[2],
        e[0].conj() * psi[1] + e[1].conj() * psi[3],
    ];
    let norm = chi[0].norm_sqr() + chi[1].norm_sqr();
    (chi, norm)
}

/// State of the sub-ensemble of particles II whose partners yielded `x`
/// along `a`.
///
/// This describes a selected sub-ensemble of recorded pairs; it is not a
/// dynamical change of any individual particle.
pub fn reduce_on_outcome(state: &TwoQubitState, a: &Direction, x: Spin) -> Result<QubitState> {
    let (chi, norm) = conditional_amplitudes(state, a, x);
    if norm <= EXACT_TOL {
        return Err(Error::domain(format!(
            "outcome {x} along {a} has probability {norm}; cannot condition on it"
        )));
    }
    let scale = 1.0 / norm.sqrt();
    QubitState::new([chi[0] * scale, chi[1] * scale])
}

/// Draws one outcome from the exact joint distribution.
pub fn sample_trial<R: Rng + ?Sized>(
    state: &TwoQubitState,
    a: &Direction,
    b: &Direction,
    rng: &mut R,
) -> Outcome {
    sample_from_table(&joint_table(state, a, b), rng)
}

/// Inverse-CDF draw over a probability table in [`Outcome::ALL`] order.
pub(crate) fn sample_from_table<R: Rng + ?Sized>(table: &[f64; 4], rng: &mut R) -> Outcome {
    let u: f64 = rng.random::<f64>() * table.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &p) in table.iter().enumerate() {
        acc += p;
        if u < acc {
            return Outcome::ALL[i];
        }
    }
    // u landed on the rounding slack above the last non-zero entry.
    let last = table.iter().rposition(|&p| p > 0.0).unwrap_or(3);
    Outcome::ALL[last]
}
