//! Multimode coherent states and their evolution through passive linear optics.
//!
//! A product of coherent states is fully described by one complex amplitude per
//! mode, so no photon-number basis is ever built. A passive network acts on that
//! amplitude vector through a `T x T` unitary.
//!
//! Convention: a [`ModeUnitary`] stores the network matrix `U` exactly as the
//! layer matrices of a beam-splitter mesh are written down (rows = output modes,
//! columns = input modes). The output amplitudes are
//!
//! ```text
//! beta_k = sum_j conj(u_jk) alpha_j,   with u = U^dagger
//! ```
//!
//! i.e. the creation-operator coefficient matrix `u` is the adjoint of the stored
//! network matrix, and the amplitude map reduces to `beta = U alpha`. A single
//! excited input mode 1 therefore leaves the network as the first column of `U`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex coherent-state parameter of a single mode.
pub type ComplexAmplitude = Complex64;

/// 2x2 complex matrix, row-major.
pub type Matrix2 = [[Complex64; 2]; 2];

/// Max-entry tolerance for `U^dagger U - I` on every constructed unitary.
pub const UNITARITY_TOLERANCE: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn check_finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Checks a 1-based mode index against `modes` and returns the 0-based slot.
pub(crate) fn mode_slot(index: usize, modes: usize) -> Result<usize> {
    if index == 0 || index > modes {
        Err(Error::ModeIndex { index, modes })
    } else {
        Ok(index - 1)
    }
}

/// Product of coherent states, one complex amplitude per optical mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct CoherentField {
    amplitudes: Vec<Complex64>,
}

impl CoherentField {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::invalid(
                "amplitudes",
                "a field needs at least one mode",
            ));
        }
        if let Some(k) = amplitudes.iter().position(|z| !check_finite(*z)) {
            return Err(Error::invalid(
                "amplitudes",
                format!("mode {} has a non-finite amplitude", k + 1),
            ));
        }
        Ok(CoherentField { amplitudes })
    }

    /// All modes in the vacuum state.
    pub fn vacuum(modes: usize) -> Result<Self> {
        Self::new(vec![ZERO; modes])
    }

    /// `|alpha>` in mode 1 and vacuum in the remaining `modes - 1` inputs.
    pub fn single_input(alpha: ComplexAmplitude, modes: usize) -> Result<Self> {
        let mut field = Self::vacuum(modes)?;
        field.amplitudes[0] = alpha;
        Self::new(field.amplitudes)
    }

    pub fn mode_count(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    /// Amplitude of mode `k` (1-based).
    pub fn amplitude(&self, k: usize) -> Result<ComplexAmplitude> {
        let slot = mode_slot(k, self.mode_count())?;
        Ok(self.amplitudes[slot])
    }

    /// Mean photon number `|alpha_k|^2` of mode `k` (1-based).
    pub fn expected_photon_number(&self, k: usize) -> Result<f64> {
        Ok(self.amplitude(k)?.norm_sqr())
    }

    /// Mean photon number summed over all modes.
    pub fn total_photon_number(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }
}

impl TryFrom<Vec<Complex64>> for CoherentField {
    type Error = Error;

    fn try_from(value: Vec<Complex64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<CoherentField> for Vec<Complex64> {
    fn from(field: CoherentField) -> Self {
        field.amplitudes
    }
}

/// Mean photon number of mode `k` (1-based): `|alpha_k|^2`.
pub fn expected_photon_number(field: &CoherentField, k: usize) -> Result<f64> {
    field.expected_photon_number(k)
}

/// Overlap `|<a|b>|^2 = exp(-|a - b|^2)` of two single-mode coherent states.
pub fn overlap(a: ComplexAmplitude, b: ComplexAmplitude) -> f64 {
    (-(a - b).norm_sqr()).exp()
}

/// Real two-mode splitter `[[cos g, sin g], [sin g, -cos g]]`.
///
/// `g = pi/4` is the balanced 50:50 splitter. The matrix is Hermitian and
/// unitary, hence an involution.
pub fn bs_matrix(gamma: f64) -> Result<Matrix2> {
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&gamma) {
        return Err(Error::invalid(
            "gamma",
            format!("{gamma} is outside [0, pi/2]"),
        ));
    }
    let (s, c) = gamma.sin_cos();
    Ok([
        [Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(-c, 0.0)],
    ])
}

fn matrix2_unitarity_deviation(g: &Matrix2) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            let dot = g[0][r].conj() * g[0][c] + g[1][r].conj() * g[1][c];
            let target = if r == c { ONE } else { ZERO };
            worst = worst.max((dot - target).norm());
        }
    }
    worst
}

/// Square unitary matrix acting on `dim` optical modes, stored row-major.
///
/// Unitarity is checked on construction.
#[derive(Clone, PartialEq)]
pub struct ModeUnitary {
    dim: usize,
    entries: Vec<Complex64>,
}

impl ModeUnitary {
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        let unchecked = Self::from_raw(dim, entries)?;
        let deviation = unchecked.unitarity_deviation();
        if deviation.is_nan() || deviation > UNITARITY_TOLERANCE {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(unchecked)
    }

    fn from_raw(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "a unitary needs at least one mode"));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Ok(ModeUnitary { dim, entries })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut entries = vec![ZERO; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = ONE;
        }
        Self::from_raw(dim, entries)
    }

    /// Builds a unitary from real rows.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            entries.extend(row.iter().map(|&x| Complex64::new(x, 0.0)));
        }
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Entry at 0-based `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn adjoint(&self) -> ModeUnitary {
        let n = self.dim;
        let mut entries = vec![ZERO; n * n];
        for r in 0..n {
            for c in 0..n {
                entries[c * n + r] = self.entries[r * n + c].conj();
            }
        }
        ModeUnitary { dim: n, entries }
    }

    /// `max |(U^dagger U - I)_{rc}|`.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                let mut dot = ZERO;
                for k in 0..n {
                    dot += self.entries[k * n + r].conj() * self.entries[k * n + c];
                }
                if r == c {
                    dot -= ONE;
                }
                worst = worst.max(dot.norm());
            }
        }
        worst
    }

    /// Largest entrywise distance to another matrix of the same size.
    pub fn max_abs_diff(&self, other: &ModeUnitary) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Left-multiplies in place by a two-mode gate on 0-based rows `(p, q)`.
    ///
    /// Only rows `p` and `q` change, so this costs `O(dim)`.
    pub(crate) fn left_apply_two_mode(&mut self, p: usize, q: usize, g: &Matrix2) {
        let n = self.dim;
        for c in 0..n {
            let a = self.entries[p * n + c];
            let b = self.entries[q * n + c];
            self.entries[p * n + c] = g[0][0] * a + g[0][1] * b;
            self.entries[q * n + c] = g[1][0] * a + g[1][1] * b;
        }
    }

    pub(crate) fn left_apply_phase(&mut self, k: usize, phase: Complex64) {
        let n = self.dim;
        for c in 0..n {
            self.entries[k * n + c] *= phase;
        }
    }

    /// Re-checks unitarity after in-place gate accumulation.
    pub(crate) fn verified(self) -> Result<Self> {
        let deviation = self.unitarity_deviation();
        if deviation.is_nan() || deviation > UNITARITY_TOLERANCE {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(self)
    }
}

impl fmt::Debug for ModeUnitary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ModeUnitary({}x{})", self.dim, self.dim)?;
        for r in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|c| {
                    let z = self.get(r, c);
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct UnitaryRepr {
    dim: usize,
    entries: Vec<[f64; 2]>,
}

impl Serialize for ModeUnitary {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        UnitaryRepr {
            dim: self.dim,
            entries: self.entries.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ModeUnitary {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let repr = UnitaryRepr::deserialize(deserializer)?;
        let entries = repr
            .entries
            .into_iter()
            .map(|[re, im]| Complex64::new(re, im))
            .collect();
        ModeUnitary::new(repr.dim, entries).map_err(serde::de::Error::custom)
    }
}

/// Embeds a 2x2 gate on modes `(p, q)` (1-based, `p < q`) into a `modes x modes`
/// identity.
pub fn embed_two_mode(modes: usize, p: usize, q: usize, g: &Matrix2) -> Result<ModeUnitary> {
    if p >= q {
        return Err(Error::invalid(
            "p",
            format!("expected p < q, got p = {p}, q = {q}"),
        ));
    }
    let p0 = mode_slot(p, modes)?;
    let q0 = mode_slot(q, modes)?;
    let deviation = matrix2_unitarity_deviation(g);
    if deviation > UNITARITY_TOLERANCE {
        return Err(Error::NotUnitary { deviation });
    }
    let mut u = ModeUnitary::identity(modes)?;
    let n = modes;
    u.entries[p0 * n + p0] = g[0][0];
    u.entries[p0 * n + q0] = g[0][1];
    u.entries[q0 * n + p0] = g[1][0];
    u.entries[q0 * n + q0] = g[1][1];
    Ok(u)
}

/// Matrix product `a * b`: `b` acts first, then `a`.
pub fn compose(a: &ModeUnitary, b: &ModeUnitary) -> Result<ModeUnitary> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            found: b.dim,
        });
    }
    let n = a.dim;
    let mut out = vec![ZERO; n * n];
    for i in 0..n {
        let out_row = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let aij = a.entries[i * n + j];
            if aij == ZERO {
                continue;
            }
            let b_row = &b.entries[j * n..(j + 1) * n];
            for (o, bjk) in out_row.iter_mut().zip(b_row) {
                *o += aij * bjk;
            }
        }
    }
    ModeUnitary {
        dim: n,
        entries: out,
    }
    .verified()
}

/// Propagates a multimode coherent state through a network.
///
/// Output mode `k` carries `sum_j conj(u_jk) alpha_j` with `u = U^dagger`,
/// which is `(U alpha)_k` for the stored network matrix `U`.
pub fn apply_unitary(field: &CoherentField, u: &ModeUnitary) -> Result<CoherentField> {
    if field.mode_count() != u.dim {
        return Err(Error::DimensionMismatch {
            expected: u.dim,
            found: field.mode_count(),
        });
    }
    let n = u.dim;
    let alpha = field.amplitudes();
    let beta = (0..n)
        .map(|k| {
            u.entries[k * n..(k + 1) * n]
                .iter()
                .zip(alpha)
                .map(|(ukj, aj)| ukj * aj)
                .sum()
        })
        .collect();
    CoherentField::new(beta)
}

/// One optical element of a network. Mode indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum GateElement {
    #[serde(rename = "bs")]
    BeamSplitter { p: usize, q: usize, gamma: f64 },
    #[serde(rename = "ps")]
    PhaseShifter { k: usize, theta: f64 },
}

impl GateElement {
    pub fn beam_splitter(p: usize, q: usize, gamma: f64) -> Self {
        GateElement::BeamSplitter { p, q, gamma }
    }

    /// Phase shifter with `theta` wrapped into `[0, 2pi)`.
    pub fn phase_shifter(k: usize, theta: f64) -> Self {
        GateElement::PhaseShifter {
            k,
            theta: theta.rem_euclid(std::f64::consts::TAU),
        }
    }

    /// Modes touched by this element.
    pub fn modes(&self) -> ([usize; 2], usize) {
        match *self {
            GateElement::BeamSplitter { p, q, .. } => ([p, q], 2),
            GateElement::PhaseShifter { k, .. } => ([k, 0], 1),
        }
    }

    pub fn validate(&self, modes: usize) -> Result<()> {
        match *self {
            GateElement::BeamSplitter { p, q, gamma } => {
                if p == q {
                    return Err(Error::invalid(
                        "q",
                        format!("splitter couples mode {p} to itself"),
                    ));
                }
                mode_slot(p, modes)?;
                mode_slot(q, modes)?;
                bs_matrix(gamma)?;
            }
            GateElement::PhaseShifter { k, theta } => {
                mode_slot(k, modes)?;
                if !(0.0..std::f64::consts::TAU).contains(&theta) {
                    return Err(Error::invalid(
                        "theta",
                        format!("{theta} is outside [0, 2pi)"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The element's `modes x modes` unitary.
    pub fn unitary(&self, modes: usize) -> Result<ModeUnitary> {
        self.validate(modes)?;
        match *self {
            GateElement::BeamSplitter { p, q, gamma } => {
                let g = bs_matrix(gamma)?;
                if p < q {
                    embed_two_mode(modes, p, q, &g)
                } else {
                    embed_two_mode(modes, q, p, &swap_ports(&g))
                }
            }
            GateElement::PhaseShifter { k, theta } => {
                let mut u = ModeUnitary::identity(modes)?;
                u.left_apply_phase(k - 1, Complex64::from_polar(1.0, theta));
                Ok(u)
            }
        }
    }

    /// Applies the element to an amplitude vector in place.
    ///
    /// Equivalent to `apply_unitary` with [`GateElement::unitary`] but `O(1)`.
    pub(crate) fn act_on(&self, amplitudes: &mut [Complex64]) -> Result<()> {
        self.validate(amplitudes.len())?;
        match *self {
            GateElement::BeamSplitter { p, q, gamma } => {
                let g = bs_matrix(gamma)?;
                let (a, b) = (amplitudes[p - 1], amplitudes[q - 1]);
                amplitudes[p - 1] = g[0][0] * a + g[0][1] * b;
                amplitudes[q - 1] = g[1][0] * a + g[1][1] * b;
            }
            GateElement::PhaseShifter { k, theta } => {
                amplitudes[k - 1] *= Complex64::from_polar(1.0, theta);
            }
        }
        Ok(())
    }

    pub(crate) fn left_apply_to(&self, u: &mut ModeUnitary) -> Result<()> {
        self.validate(u.dim())?;
        match *self {
            GateElement::BeamSplitter { p, q, gamma } => {
                u.left_apply_two_mode(p - 1, q - 1, &bs_matrix(gamma)?)
            }
            GateElement::PhaseShifter { k, theta } => {
                u.left_apply_phase(k - 1, Complex64::from_polar(1.0, theta))
            }
        }
        Ok(())
    }
}

/// Same physical splitter seen with its two ports relabelled.
fn swap_ports(g: &Matrix2) -> Matrix2 {
    [[g[1][1], g[1][0]], [g[0][1], g[0][0]]]
}
