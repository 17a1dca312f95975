//! Two-particle model: product-basis Hilbert space, static Hamiltonian with
//! dipole-dipole coupling, field-coupling operator, and the fluorescence
//! measurement operator.
//!
//! Each particle has three levels g, e, f with dipole-allowed transitions
//! g–e and g–f only. The pair lives in the nine-state product basis
//! {gg, ge, eg, gf, fg, ee, ef, fe, ff}, with |αβ⟩ = |α⟩₁|β⟩₂.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dimension of the two-particle Hilbert space.
pub const DIM: usize = 9;

/// Pure state of the pair, nine complex amplitudes in the product basis.
pub type StateVector = Array1<C64>;

/// Operator on the pair, a 9×9 complex matrix in the product basis.
pub type Operator9 = Array2<C64>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid particle spec: {0}")]
    InvalidParticle(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("point-dipole coupling diverges at zero separation")]
    ZeroSeparation,
}

/// Product basis states in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisState {
    Gg = 0,
    Ge = 1,
    Eg = 2,
    Gf = 3,
    Fg = 4,
    Ee = 5,
    Ef = 6,
    Fe = 7,
    Ff = 8,
}

impl BasisState {
    pub const ALL: [BasisState; DIM] = [
        BasisState::Gg,
        BasisState::Ge,
        BasisState::Eg,
        BasisState::Gf,
        BasisState::Fg,
        BasisState::Ee,
        BasisState::Ef,
        BasisState::Fe,
        BasisState::Ff,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            BasisState::Gg => "gg",
            BasisState::Ge => "ge",
            BasisState::Eg => "eg",
            BasisState::Gf => "gf",
            BasisState::Fg => "fg",
            BasisState::Ee => "ee",
            BasisState::Ef => "ef",
            BasisState::Fe => "fe",
            BasisState::Ff => "ff",
        }
    }

    /// Single-particle levels (particle 1, particle 2); 0 = g, 1 = e, 2 = f.
    fn levels(self) -> (usize, usize) {
        match self {
            BasisState::Gg => (0, 0),
            BasisState::Ge => (0, 1),
            BasisState::Eg => (1, 0),
            BasisState::Gf => (0, 2),
            BasisState::Fg => (2, 0),
            BasisState::Ee => (1, 1),
            BasisState::Ef => (1, 2),
            BasisState::Fe => (2, 1),
            BasisState::Ff => (2, 2),
        }
    }
}

/// Single three-level emitter: level energies and transition dipoles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleSpec {
    pub eps_g: f64,
    pub eps_e: f64,
    pub eps_f: f64,
    pub mu_e: f64,
    pub mu_f: f64,
}

impl ParticleSpec {
    pub fn new(eps_g: f64, eps_e: f64, eps_f: f64, mu_e: f64, mu_f: f64) -> Result<Self, ModelError> {
        let spec = Self { eps_g, eps_e, eps_f, mu_e, mu_f };
        spec.validate()?;
        Ok(spec)
    }

    /// Build from the g→e transition frequency and the e–f splitting, with
    /// the ground level pinned at zero energy.
    pub fn from_transitions(omega_eg: f64, omega_fe: f64, mu_e: f64, mu_f: f64) -> Result<Self, ModelError> {
        Self::new(0.0, omega_eg, omega_eg + omega_fe, mu_e, mu_f)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.eps_g < self.eps_e && self.eps_e < self.eps_f) {
            return Err(ModelError::InvalidParticle(format!(
                "level ordering must satisfy eps_g < eps_e < eps_f, got {}, {}, {}",
                self.eps_g, self.eps_e, self.eps_f
            )));
        }
        if !(self.mu_e > 0.0 && self.mu_f > 0.0) {
            return Err(ModelError::InvalidParticle(format!(
                "transition dipoles must be positive, got mu_e = {}, mu_f = {}",
                self.mu_e, self.mu_f
            )));
        }
        Ok(())
    }

    pub fn omega_eg(&self) -> f64 {
        self.eps_e - self.eps_g
    }

    pub fn omega_fg(&self) -> f64 {
        self.eps_f - self.eps_g
    }

    fn level_energy(&self, level: usize) -> f64 {
        match level {
            0 => self.eps_g,
            1 => self.eps_e,
            _ => self.eps_f,
        }
    }
}

/// Relative placement of the two point dipoles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Separation between the particles.
    pub r: f64,
    /// Angle between the separation vector and the (common) dipole axis.
    pub theta: f64,
}

impl Geometry {
    pub fn new(r: f64, theta: f64) -> Result<Self, ModelError> {
        if r <= 0.0 {
            return Err(ModelError::InvalidGeometry(format!("separation must be positive, got {r}")));
        }
        if !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(ModelError::InvalidGeometry(format!("theta must lie in [0, pi], got {theta}")));
        }
        Ok(Self { r, theta })
    }
}

/// Point-dipole coupling energy mu_a mu_b (1 - 3 cos^2 theta) / r^3.
///
/// Changes sign at the magic angle; negative for dipoles stacked head to
/// tail (theta = 0).
pub fn dipole_coupling(geom: Geometry, mu_a: f64, mu_b: f64) -> Result<f64, ModelError> {
    if geom.r == 0.0 {
        return Err(ModelError::ZeroSeparation);
    }
    let c = geom.theta.cos();
    Ok(mu_a * mu_b * (1.0 - 3.0 * c * c) / geom.r.powi(3))
}

/// Two identical particles plus the resonant exchange couplings between the
/// singly excited e–e and f–f manifolds.
///
/// Off-resonant e–f exchange is not modelled: it is negligible whenever the
/// coupling is small against the e–f splitting, which is the regime this
/// crate targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimerSystem {
    pub particle: ParticleSpec,
    pub v_ee: f64,
    pub v_ff: f64,
}

impl DimerSystem {
    pub fn new(particle: ParticleSpec, v_ee: f64, v_ff: f64) -> Result<Self, ModelError> {
        if !v_ee.is_finite() || !v_ff.is_finite() {
            return Err(ModelError::InvalidParticle(format!(
                "couplings must be finite, got v_ee = {v_ee}, v_ff = {v_ff}"
            )));
        }
        Ok(Self { particle, v_ee, v_ff })
    }

    /// Derive both couplings from an explicit geometry. The ratio then obeys
    /// v_ff / v_ee = (mu_f / mu_e)^2 exactly.
    pub fn from_geometry(particle: ParticleSpec, geom: Geometry) -> Result<Self, ModelError> {
        let v_ee = dipole_coupling(geom, particle.mu_e, particle.mu_e)?;
        let v_ff = dipole_coupling(geom, particle.mu_f, particle.mu_f)?;
        Self::new(particle, v_ee, v_ff)
    }
}

/// Static pair Hamiltonian: free particle energies on the diagonal plus the
/// ge↔eg and gf↔fg exchange couplings.
pub fn build_static_hamiltonian(sys: &DimerSystem) -> Operator9 {
    let mut h = Array2::zeros((DIM, DIM));
    for s in BasisState::ALL {
        let (a, b) = s.levels();
        h[[s.index(), s.index()]] =
            C64::from(sys.particle.level_energy(a) + sys.particle.level_energy(b));
    }
    h[[BasisState::Ge.index(), BasisState::Eg.index()]] = C64::from(sys.v_ee);
    h[[BasisState::Eg.index(), BasisState::Ge.index()]] = C64::from(sys.v_ee);
    h[[BasisState::Gf.index(), BasisState::Fg.index()]] = C64::from(sys.v_ff);
    h[[BasisState::Fg.index(), BasisState::Gf.index()]] = C64::from(sys.v_ff);
    h
}

/// One-body dipole operator D = Σ_n (mu_e |g⟩ₙ⟨e| + mu_f |g⟩ₙ⟨f| + h.c.).
///
/// The field coupling is H_int(t) = -E(t) D, so the single-particle coupling
/// strengths come out as -mu E(t).
pub fn build_dipole_operator(sys: &DimerSystem) -> Operator9 {
    let mut d = Array2::zeros((DIM, DIM));
    for si in BasisState::ALL {
        for sj in BasisState::ALL {
            let (a1, a2) = si.levels();
            let (b1, b2) = sj.levels();
            // one-body: exactly one particle changes level, through g
            let elem = if a2 == b2 {
                transition_dipole(&sys.particle, a1, b1)
            } else if a1 == b1 {
                transition_dipole(&sys.particle, a2, b2)
            } else {
                0.0
            };
            d[[si.index(), sj.index()]] = C64::from(elem);
        }
    }
    d
}

fn transition_dipole(p: &ParticleSpec, from: usize, to: usize) -> f64 {
    match (from, to) {
        (0, 1) | (1, 0) => p.mu_e,
        (0, 2) | (2, 0) => p.mu_f,
        _ => 0.0,
    }
}

/// Fluorescence observable: counts excited particles, P = Σ_n (|e⟩ₙ⟨e| + |f⟩ₙ⟨f|).
pub fn fluorescence_operator() -> Operator9 {
    let mut p = Array2::zeros((DIM, DIM));
    for s in BasisState::ALL {
        p[[s.index(), s.index()]] = C64::from(excited_count(s));
    }
    p
}

/// Number of excited particles in a product basis state.
pub fn excited_count(s: BasisState) -> f64 {
    let (a, b) = s.levels();
    ((a > 0) as u8 + (b > 0) as u8) as f64
}

/// A collective eigenstate of the static pair Hamiltonian.
#[derive(Debug, Clone)]
pub struct CollectiveState {
    pub label: &'static str,
    pub energy: f64,
    pub state: StateVector,
}

/// The nine collective eigenstates: symmetric/antisymmetric combinations of
/// the singly and doubly excited product states.
///
/// The exchange coupling splits ge± by ±v_ee and gf± by ±v_ff; the doubly
/// excited states are unshifted because direct interactions between two
/// excited particles are not modelled.
pub fn collective_eigenbasis(sys: &DimerSystem) -> Vec<CollectiveState> {
    let p = &sys.particle;
    let sym = |i: BasisState, j: BasisState, sign: f64| -> StateVector {
        let mut v: StateVector = Array1::zeros(DIM);
        let w = C64::from(1.0 / 2f64.sqrt());
        v[i.index()] = w;
        v[j.index()] = sign * w;
        v
    };
    let single = |i: BasisState| -> StateVector {
        let mut v: StateVector = Array1::zeros(DIM);
        v[i.index()] = C64::from(1.0);
        v
    };
    vec![
        CollectiveState {
            label: "gg",
            energy: 2.0 * p.eps_g,
            state: single(BasisState::Gg),
        },
        CollectiveState {
            label: "ge+",
            energy: p.eps_g + p.eps_e + sys.v_ee,
            state: sym(BasisState::Ge, BasisState::Eg, 1.0),
        },
        CollectiveState {
            label: "ge-",
            energy: p.eps_g + p.eps_e - sys.v_ee,
            state: sym(BasisState::Ge, BasisState::Eg, -1.0),
        },
        CollectiveState {
            label: "gf+",
            energy: p.eps_g + p.eps_f + sys.v_ff,
            state: sym(BasisState::Gf, BasisState::Fg, 1.0),
        },
        CollectiveState {
            label: "gf-",
            energy: p.eps_g + p.eps_f - sys.v_ff,
            state: sym(BasisState::Gf, BasisState::Fg, -1.0),
        },
        CollectiveState {
            label: "ee",
            energy: 2.0 * p.eps_e,
            state: single(BasisState::Ee),
        },
        CollectiveState {
            label: "ef+",
            energy: p.eps_e + p.eps_f,
            state: sym(BasisState::Ef, BasisState::Fe, 1.0),
        },
        CollectiveState {
            label: "ef-",
            energy: p.eps_e + p.eps_f,
            state: sym(BasisState::Ef, BasisState::Fe, -1.0),
        },
        CollectiveState {
            label: "ff",
            energy: 2.0 * p.eps_f,
            state: single(BasisState::Ff),
        },
    ]
}

/// Largest entrywise deviation from Hermiticity.
pub fn hermiticity_defect(op: &Operator9) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..DIM {
        for j in 0..DIM {
            let d = (op[[i, j]] - op[[j, i]].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// ⟨ψ|A|ψ⟩ for a Hermitian A; the imaginary part is discarded.
pub fn expectation(op: &Operator9, state: &StateVector) -> f64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..DIM {
        let mut row = C64::new(0.0, 0.0);
        for j in 0..DIM {
            row += op[[i, j]] * state[j];
        }
        acc += state[i].conj() * row;
    }
    acc.re
}

/// Squared Euclidean norm of a state.
pub fn norm_sq(state: &StateVector) -> f64 {
    state.iter().map(|a| a.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn table_particle() -> ParticleSpec {
        ParticleSpec::from_transitions(1.5, 0.05, 0.75, 1.054).unwrap()
    }

    fn system(v_ee: f64, v_ff: f64) -> DimerSystem {
        DimerSystem::new(table_particle(), v_ee, v_ff).unwrap()
    }

    #[test]
    fn coupling_vanishes_at_magic_angle() {
        let geom = Geometry::new(2.7, (1.0 / 3f64.sqrt()).acos()).unwrap();
        let v = dipole_coupling(geom, 0.9, 1.3).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn coupling_head_to_tail_unit_case() {
        let geom = Geometry::new(1.0, 0.0).unwrap();
        let v = dipole_coupling(geom, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(v, -2.0, epsilon = 1e-15);
    }

    #[test]
    fn coupling_ratio_follows_dipole_ratio() {
        // same geometry probed with the two transition dipoles
        let geom = Geometry::new(1.7, 0.4).unwrap();
        let v_ff = dipole_coupling(geom, 1.054, 1.054).unwrap();
        let v_ee = dipole_coupling(geom, 0.75, 0.75).unwrap();
        let ratio = v_ff / v_ee;
        assert_relative_eq!(ratio, (1.054f64 / 0.75).powi(2), max_relative = 1e-12);
        // quoted value for these dipoles
        assert!((ratio - 1.974).abs() < 1.5e-3, "ratio = {ratio}");
    }

    #[test]
    fn zero_separation_rejected() {
        assert!(Geometry::new(0.0, 0.3).is_err());
        let geom = Geometry { r: 0.0, theta: 0.3 };
        assert!(matches!(dipole_coupling(geom, 1.0, 1.0), Err(ModelError::ZeroSeparation)));
    }

    #[test]
    fn geometry_derived_couplings_keep_ratio_invariant() {
        let sys = DimerSystem::from_geometry(table_particle(), Geometry::new(2.1, 1.1).unwrap()).unwrap();
        let expected = (sys.particle.mu_f / sys.particle.mu_e).powi(2);
        assert_relative_eq!(sys.v_ff / sys.v_ee, expected, max_relative = 1e-12);
    }

    #[test]
    fn uncoupled_hamiltonian_is_diagonal_product_energies() {
        let sys = system(0.0, 0.0);
        let h = build_static_hamiltonian(&sys);
        for si in BasisState::ALL {
            for sj in BasisState::ALL {
                let hij = h[[si.index(), sj.index()]];
                if si == sj {
                    let (a, b) = si.levels();
                    let e = sys.particle.level_energy(a) + sys.particle.level_energy(b);
                    assert_abs_diff_eq!(hij.re, e, epsilon = 1e-15);
                } else {
                    assert_eq!(hij, C64::new(0.0, 0.0));
                }
            }
        }
    }

    /// Brute-force eigenvalues of a real symmetric 2x2 block [[a, v], [v, a]].
    fn two_by_two_eigs(a: f64, v: f64) -> (f64, f64) {
        (a + v, a - v)
    }

    #[test]
    fn singly_excited_blocks_split_by_coupling() {
        let sys = system(0.013, 0.0257);
        let h = build_static_hamiltonian(&sys);
        let (i, j) = (BasisState::Ge.index(), BasisState::Eg.index());
        let (lo, hi) = two_by_two_eigs(h[[i, i]].re, h[[i, j]].re);
        let e_sum = sys.particle.eps_g + sys.particle.eps_e;
        assert_abs_diff_eq!(lo, e_sum + sys.v_ee, epsilon = 1e-14);
        assert_abs_diff_eq!(hi, e_sum - sys.v_ee, epsilon = 1e-14);

        let (i, j) = (BasisState::Gf.index(), BasisState::Fg.index());
        let (lo, hi) = two_by_two_eigs(h[[i, i]].re, h[[i, j]].re);
        let f_sum = sys.particle.eps_g + sys.particle.eps_f;
        assert_abs_diff_eq!(lo, f_sum + sys.v_ff, epsilon = 1e-14);
        assert_abs_diff_eq!(hi, f_sum - sys.v_ff, epsilon = 1e-14);
    }

    #[test]
    fn dipole_operator_matrix_elements() {
        let sys = system(0.01, 0.01974);
        let d = build_dipole_operator(&sys);
        let el = |a: BasisState, b: BasisState| d[[a.index(), b.index()]].re;
        assert_abs_diff_eq!(el(BasisState::Ge, BasisState::Gg), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(el(BasisState::Ff, BasisState::Gf), 1.054, epsilon = 1e-15);
        // no direct two-photon element for a one-body operator
        assert_abs_diff_eq!(el(BasisState::Ee, BasisState::Gg), 0.0, epsilon = 1e-15);
        // e <-> f is dipole forbidden
        assert_abs_diff_eq!(el(BasisState::Ef, BasisState::Ee), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn operators_are_hermitian() {
        let sys = system(-0.004, 0.02);
        assert!(hermiticity_defect(&build_static_hamiltonian(&sys)) < 1e-14);
        assert!(hermiticity_defect(&build_dipole_operator(&sys)) < 1e-14);
        assert!(hermiticity_defect(&fluorescence_operator()) < 1e-14);
    }

    #[test]
    fn fluorescence_counts_excitations() {
        let p = fluorescence_operator();
        let basis = collective_eigenbasis(&system(0.0, 0.0));
        let gg = &basis[0].state;
        assert_abs_diff_eq!(expectation(&p, gg), 0.0, epsilon = 1e-15);

        let mut ee: StateVector = Array1::zeros(DIM);
        ee[BasisState::Ee.index()] = C64::from(1.0);
        assert_abs_diff_eq!(expectation(&p, &ee), 2.0, epsilon = 1e-15);

        let mut ef: StateVector = Array1::zeros(DIM);
        ef[BasisState::Ef.index()] = C64::from(1.0);
        assert_abs_diff_eq!(expectation(&p, &ef), 2.0, epsilon = 1e-15);

        let bright = &collective_eigenbasis(&system(0.0, 0.0))[1].state;
        assert_abs_diff_eq!(expectation(&p, bright), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn fluorescence_eigenvalue_multiplicities() {
        let p = fluorescence_operator();
        let mut counts = [0usize; 3];
        for s in BasisState::ALL {
            let v = p[[s.index(), s.index()]].re;
            assert!(v == 0.0 || v == 1.0 || v == 2.0);
            counts[v as usize] += 1;
        }
        assert_eq!(counts, [1, 4, 4]);
    }

    #[test]
    fn collective_basis_diagonalizes_static_hamiltonian() {
        let sys = system(0.01, 0.01974);
        let h = build_static_hamiltonian(&sys);
        for cs in collective_eigenbasis(&sys) {
            // residual |H v - E v| should vanish
            for i in 0..DIM {
                let mut hv = C64::new(0.0, 0.0);
                for j in 0..DIM {
                    hv += h[[i, j]] * cs.state[j];
                }
                let res = (hv - C64::from(cs.energy) * cs.state[i]).norm();
                assert!(res < 1e-14, "state {} residual {res}", cs.label);
            }
        }
    }

    #[test]
    fn collective_energies_match_expected_table() {
        let sys = system(0.01, 0.01974);
        let basis = collective_eigenbasis(&sys);
        let energy = |label: &str| basis.iter().find(|c| c.label == label).unwrap().energy;
        assert_abs_diff_eq!(energy("gg"), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(energy("ee"), 2.0 * 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(energy("ff"), 2.0 * 1.55, epsilon = 1e-15);
        assert_abs_diff_eq!(energy("ge+") - energy("ge-"), 2.0 * sys.v_ee, epsilon = 1e-15);
        assert_abs_diff_eq!(energy("gf+") - energy("gf-"), 2.0 * sys.v_ff, epsilon = 1e-15);
        assert_abs_diff_eq!(energy("ef+"), 1.5 + 1.55, epsilon = 1e-15);

        // splitting measured as expectation difference in the +- pair
        let h = build_static_hamiltonian(&sys);
        let plus = basis.iter().find(|c| c.label == "ge+").unwrap();
        let minus = basis.iter().find(|c| c.label == "ge-").unwrap();
        let gap = expectation(&h, &minus.state) - expectation(&h, &plus.state);
        assert_abs_diff_eq!(gap, -2.0 * sys.v_ee, epsilon = 1e-14);
    }

    #[test]
    fn spectrum_invariant_under_coupling_sign_with_branch_swap() {
        let plus = system(0.008, 0.0158);
        let minus = system(-0.008, -0.0158);
        let e = |sys: &DimerSystem, label: &str| {
            collective_eigenbasis(sys)
                .into_iter()
                .find(|c| c.label == label)
                .unwrap()
                .energy
        };
        assert_abs_diff_eq!(e(&plus, "ge+"), e(&minus, "ge-"), epsilon = 1e-15);
        assert_abs_diff_eq!(e(&plus, "gf+"), e(&minus, "gf-"), epsilon = 1e-15);
    }

    #[test]
    fn invalid_particles_rejected() {
        assert!(ParticleSpec::new(0.0, 0.0, 1.0, 0.7, 1.0).is_err());
        assert!(ParticleSpec::new(0.0, 1.0, 0.5, 0.7, 1.0).is_err());
        assert!(ParticleSpec::new(0.0, 1.0, 1.5, 0.0, 1.0).is_err());
        assert!(DimerSystem::new(table_particle(), f64::NAN, 0.0).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn hamiltonian_hermitian_for_any_couplings(
                v_ee in -0.5f64..0.5,
                v_ff in -0.5f64..0.5,
            ) {
                let sys = system(v_ee, v_ff);
                prop_assert!(hermiticity_defect(&build_static_hamiltonian(&sys)) < 1e-14);
            }

            #[test]
            fn coupling_sign_tracks_magic_angle(theta in 0.0f64..std::f64::consts::PI) {
                let geom = Geometry::new(1.3, theta).unwrap();
                let v = dipole_coupling(geom, 1.0, 1.0).unwrap();
                let magic = (1.0f64 / 3.0).sqrt();
                let c2 = theta.cos().powi(2);
                if (c2 - magic * magic).abs() > 1e-9 {
                    prop_assert_eq!(v > 0.0, c2 < magic * magic);
                }
            }
        }
    }
}
