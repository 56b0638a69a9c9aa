//! System-side scalars of a postselected measurement: the overlap ω, the
//! unnormalized weak values α and β, and their normalized forms.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, ComplexMatrix, Tolerances, C64};
use crate::states::{DensityMatrix, Observable, PovmElement};

/// Relative threshold below which ω counts as zero.
pub const ORTHOGONALITY_REL: f64 = 1e-12;

/// Eigenvalue cutoff defining the support of E_f and ρ_i.
pub const SUPPORT_CUTOFF: f64 = 1e-10;

/// ω = Tr[E_f ρ_i], α = Tr[E_f A ρ_i], β = Tr[E_f A ρ_i A].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakValueTriple {
    pub omega: f64,
    pub alpha: C64,
    pub beta: f64,
}

/// A_w = α/ω, B_w = β/ω, C_w = Tr[E_f A² ρ_i]/ω. When ω vanishes the
/// normalized values are undefined and only `orthogonal` is meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CanonicalWeakValues {
    pub a_w: C64,
    pub b_w: f64,
    pub c_w: C64,
    pub orthogonal: bool,
}

impl CanonicalWeakValues {
    pub fn real(&self) -> f64 {
        self.a_w.re
    }

    pub fn imag(&self) -> f64 {
        self.a_w.im
    }
}

fn check_dims(e_f: &PovmElement, rho_i: &DensityMatrix, a: &Observable) -> Result<()> {
    if e_f.dim() != rho_i.dim() || a.dim() != rho_i.dim() {
        return Err(Error::DimensionMismatch(format!(
            "E_f is {0}x{0}, rho_i {1}x{1}, A {2}x{2}",
            e_f.dim(),
            rho_i.dim(),
            a.dim()
        )));
    }
    Ok(())
}

pub fn weak_value_triple(
    e_f: &PovmElement,
    rho_i: &DensityMatrix,
    a: &Observable,
    tol: &Tolerances,
) -> Result<WeakValueTriple> {
    check_dims(e_f, rho_i, a)?;
    let e_rho = e_f.matrix() * rho_i.matrix();
    let omega = e_rho.trace();
    let e_a = e_f.matrix() * a.matrix();
    let alpha = e_a.trace_product(rho_i.matrix());
    let beta = (&e_a * rho_i.matrix()).trace_product(a.matrix());
    let scale_beta = e_f.trace() * a.matrix().max_abs().powi(2) * a.dim() as f64;
    if omega.im.abs() > tol.general_rel * e_f.trace().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "Tr[E_f rho_i] has imaginary part {:e}",
            omega.im
        )));
    }
    if beta.im.abs() > tol.general_rel * scale_beta.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "Tr[E_f A rho_i A] has imaginary part {:e}",
            beta.im
        )));
    }
    Ok(WeakValueTriple {
        omega: omega.re,
        alpha,
        beta: beta.re,
    })
}

/// Threshold on ω below which preparation and postselection count as
/// orthogonal: 1e-12·β/max|A|², or 1e-12·Tr E_f when A vanishes.
pub fn orthogonality_threshold(t: &WeakValueTriple, e_f: &PovmElement, a: &Observable) -> f64 {
    let a_max = a.spectral_radius();
    let scale = if a_max > 0.0 && t.beta > 0.0 {
        t.beta / (a_max * a_max)
    } else {
        e_f.trace()
    };
    ORTHOGONALITY_REL * scale
}

pub fn canonical_weak_values(
    t: &WeakValueTriple,
    e_f: &PovmElement,
    rho_i: &DensityMatrix,
    a: &Observable,
) -> CanonicalWeakValues {
    if t.omega <= orthogonality_threshold(t, e_f, a) {
        let nan = C64::new(f64::NAN, f64::NAN);
        return CanonicalWeakValues {
            a_w: nan,
            b_w: f64::NAN,
            c_w: nan,
            orthogonal: true,
        };
    }
    let a2 = a.matrix() * a.matrix();
    let c = (e_f.matrix() * &a2).trace_product(rho_i.matrix());
    CanonicalWeakValues {
        a_w: t.alpha / t.omega,
        b_w: t.beta / t.omega,
        c_w: c / t.omega,
        orthogonal: false,
    }
}

/// Which of the equality cases of |α|² ≤ βω applies, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualityReason {
    OmegaZero,
    BetaZero,
    ShiftedNullVector,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CauchySchwarzReport {
    /// |α|²
    pub lhs: f64,
    /// β·ω
    pub rhs: f64,
    pub equality: bool,
    pub equality_reason: EqualityReason,
}

/// Eigenvectors with eigenvalue above the support cutoff.
fn support(m: &ComplexMatrix, tol: &Tolerances) -> Result<Vec<Vec<C64>>> {
    let eig = hermitian_eig(m, tol)?;
    let cutoff = SUPPORT_CUTOFF * eig.spectral_radius().max(f64::MIN_POSITIVE);
    Ok((0..eig.values.len())
        .filter(|&j| eig.values[j] > cutoff)
        .map(|j| eig.vector(j))
        .collect())
}

fn braket(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

fn apply(m: &ComplexMatrix, v: &[C64]) -> Vec<C64> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j) * v[j]).sum())
        .collect()
}

/// Classifies equality in |α|² ≤ βω through the null space of the
/// semi-inner product Tr[E_f X ρ_i Y†]: A − z·I is null iff
/// ⟨f|A|i⟩ = z⟨f|i⟩ for all support eigenvectors |f⟩ of E_f and |i⟩ of ρ_i.
pub fn cauchy_schwarz_report(
    e_f: &PovmElement,
    rho_i: &DensityMatrix,
    a: &Observable,
    tol: &Tolerances,
) -> Result<CauchySchwarzReport> {
    let t = weak_value_triple(e_f, rho_i, a, tol)?;
    let lhs = t.alpha.norm_sqr();
    let rhs = t.beta * t.omega;
    let a_max = a.spectral_radius();

    let reason = if t.omega <= orthogonality_threshold(&t, e_f, a) {
        EqualityReason::OmegaZero
    } else if t.beta <= tol.general_rel * e_f.trace() * a_max * a_max {
        EqualityReason::BetaZero
    } else {
        let z = t.alpha / t.omega;
        let fs = support(e_f.matrix(), tol)?;
        let is = support(rho_i.matrix(), tol)?;
        let a_is: Vec<Vec<C64>> = is.iter().map(|i| apply(a.matrix(), i)).collect();
        let scale = a_max + z.norm();
        let null = fs.iter().all(|f| {
            is.iter().zip(&a_is).all(|(i, ai)| {
                let resid = braket(f, ai) - z * braket(f, i);
                resid.norm() <= 1e-8 * scale
            })
        });
        if null {
            EqualityReason::ShiftedNullVector
        } else {
            EqualityReason::None
        }
    };
    Ok(CauchySchwarzReport {
        lhs,
        rhs,
        equality: reason != EqualityReason::None,
        equality_reason: reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{random_hermitian, random_mixed_state, random_pure_state};

    fn r2() -> f64 {
        std::f64::consts::FRAC_1_SQRT_2
    }

    fn ket(re: &[f64]) -> Vec<C64> {
        re.iter().map(|&x| C64::new(x, 0.0)).collect()
    }

    fn plus_x() -> DensityMatrix {
        DensityMatrix::pure(&ket(&[r2(), r2()])).unwrap()
    }

    fn sigma_z() -> Observable {
        Observable::new(ComplexMatrix::from_real_diagonal(&[1.0, -1.0]), &Tolerances::default()).unwrap()
    }

    #[test]
    fn eigenstate_postselection() {
        let tol = Tolerances::default();
        let e = PovmElement::pure(&ket(&[1.0, 0.0])).unwrap();
        let t = weak_value_triple(&e, &plus_x(), &sigma_z(), &tol).unwrap();
        assert!((t.omega - 0.5).abs() < 1e-15);
        assert!((t.alpha - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((t.beta - 0.5).abs() < 1e-15);
        let w = canonical_weak_values(&t, &e, &plus_x(), &sigma_z());
        assert!(!w.orthogonal);
        assert!((w.a_w - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((w.b_w - 1.0).abs() < 1e-15);
        assert!((w.a_w.norm_sqr() - w.b_w).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_postselection() {
        let tol = Tolerances::default();
        let e = PovmElement::pure(&ket(&[r2(), -r2()])).unwrap();
        let t = weak_value_triple(&e, &plus_x(), &sigma_z(), &tol).unwrap();
        assert!(t.omega.abs() < 1e-15);
        assert!(t.alpha.norm() < 1e-15);
        assert!((t.beta - 1.0).abs() < 1e-15);
        let w = canonical_weak_values(&t, &e, &plus_x(), &sigma_z());
        assert!(w.orthogonal);
        let r = cauchy_schwarz_report(&e, &plus_x(), &sigma_z(), &tol).unwrap();
        assert!(r.equality);
        assert_eq!(r.equality_reason, EqualityReason::OmegaZero);
    }

    #[test]
    fn no_postselection_gives_initial_moments() {
        let tol = Tolerances::default();
        let rho = random_mixed_state(3, 5).unwrap();
        let a = random_hermitian(3, 6).unwrap();
        let t = weak_value_triple(&PovmElement::identity(3), &rho, &a, &tol).unwrap();
        assert!((t.omega - 1.0).abs() < 1e-12);
        assert!((t.alpha.re - rho.expect(a.matrix())).abs() < 1e-12);
        assert!(t.alpha.im.abs() < 1e-12);
        assert!((t.beta - rho.expect(&(a.matrix() * a.matrix()))).abs() < 1e-12);
    }

    #[test]
    fn mixed_preparation_eigenstate_postselection_is_equality() {
        let tol = Tolerances::default();
        let rho = DensityMatrix::maximally_mixed(2);
        let e = PovmElement::pure(&ket(&[1.0, 0.0])).unwrap();
        let t = weak_value_triple(&e, &rho, &sigma_z(), &tol).unwrap();
        let w = canonical_weak_values(&t, &e, &rho, &sigma_z());
        assert!((w.a_w - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((w.b_w - 1.0).abs() < 1e-15);
        let r = cauchy_schwarz_report(&e, &rho, &sigma_z(), &tol).unwrap();
        assert_eq!(r.equality_reason, EqualityReason::ShiftedNullVector);
    }

    #[test]
    fn fully_mixed_pair_is_strict() {
        let tol = Tolerances::default();
        let rho = DensityMatrix::maximally_mixed(2);
        let e = PovmElement::new(ComplexMatrix::identity(2).scale_real(0.5), &tol).unwrap();
        // ω = 1/2, α = Tr[σ_z]/4 = 0, β = Tr[σ_z²]/4 = 1/2
        let r = cauchy_schwarz_report(&e, &rho, &sigma_z(), &tol).unwrap();
        assert!(r.lhs.abs() < 1e-15);
        assert!((r.rhs - 0.25).abs() < 1e-15);
        assert!(!r.equality);
        assert_eq!(r.equality_reason, EqualityReason::None);
    }

    #[test]
    fn zero_observable_is_beta_zero() {
        let tol = Tolerances::default();
        let zero = Observable::new(ComplexMatrix::zeros(2, 2), &tol).unwrap();
        let r = cauchy_schwarz_report(&PovmElement::identity(2), &plus_x(), &zero, &tol).unwrap();
        assert_eq!(r.equality_reason, EqualityReason::BetaZero);
    }

    #[test]
    fn pure_pairs_hit_equality() {
        let tol = Tolerances::default();
        for s in 0..50u64 {
            let rho = random_pure_state(4, 3 * s).unwrap();
            let e = PovmElement::new(random_pure_state(4, 3 * s + 1).unwrap().matrix().clone(), &tol).unwrap();
            let a = random_hermitian(4, 3 * s + 2).unwrap();
            let r = cauchy_schwarz_report(&e, &rho, &a, &tol).unwrap();
            assert_eq!(r.equality_reason, EqualityReason::ShiftedNullVector, "seed {s}");
            assert!((r.lhs - r.rhs).abs() <= 1e-9 * r.rhs);
        }
    }

    #[test]
    fn complementary_postselection_identity() {
        let tol = Tolerances::default();
        let rho = random_mixed_state(3, 11).unwrap();
        let e = crate::states::random_mixed_effect(3, 12).unwrap();
        let a = random_hermitian(3, 13).unwrap();
        let t = weak_value_triple(&e, &rho, &a, &tol).unwrap();
        let tc = weak_value_triple(&e.complement(), &rho, &a, &tol).unwrap();
        let mean_a = rho.expect(a.matrix());
        let mean_a2 = rho.expect(&(a.matrix() * a.matrix()));
        assert!((tc.omega - (1.0 - t.omega)).abs() < 1e-12);
        assert!((tc.alpha - (C64::new(mean_a, 0.0) - t.alpha)).norm() < 1e-12);
        assert!((tc.beta - (mean_a2 - t.beta)).abs() < 1e-12);
    }
}
