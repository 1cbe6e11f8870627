//! Gaussian mode coefficients and the overlap matrix against independent
//! numerical oracles: RK4 integration of the Gaussian parameters and direct
//! quadrature of the mode wavefunctions.

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rydchan::coupling::{DisentangledModes, GramSchmidtBasis};
use rydchan::dynamics::ChannelModel;
use rydchan::kernel::{build_channel, ModeCoefficients};
use rydchan::units::NormalizedChain;
use rydchan::C64;

/// `ψ = exp(−½K s² + b s + a)` under `i∂ψ = −½ψ'' + ½ω²s²ψ − Fsψ`.
fn rk4_gaussian(omega_sq: f64, force: f64, t: f64, steps: usize) -> (C64, C64, C64) {
    let i = C64::i();
    let rhs = |k: C64, b: C64| -> (C64, C64, C64) {
        (-i * (k * k - omega_sq), -i * (k * b - force), 0.5 * i * (b * b - k))
    };
    let h = t / steps as f64;
    let (mut k, mut b, mut a) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for _ in 0..steps {
        let (k1, b1, a1) = rhs(k, b);
        let (k2, b2, a2) = rhs(k + 0.5 * h * k1, b + 0.5 * h * b1);
        let (k3, b3, a3) = rhs(k + 0.5 * h * k2, b + 0.5 * h * b2);
        let (k4, b4, a4) = rhs(k + h * k3, b + h * b3);
        k += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        b += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        a += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    }
    (k, b, a)
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * b.norm().max(1.0)
}

#[test]
fn coefficients_match_rk4_across_regimes() {
    // Trapped, free, inverted, and many periods in (winding of ln γ).
    for &(w2, f, t) in &[(2.0, 0.7, 1.3), (0.0, -1.5, 2.0), (-0.8, 0.4, 1.7), (9.0, 2.0, 7.5), (1e-9, 3.0, 0.6)] {
        let c = ModeCoefficients::evaluate(w2, f, t).unwrap();
        let (k, b, a) = rk4_gaussian(w2, f, t, 40_000);
        assert!(close(c.kbar, k, 1e-9), "K̄ at ω²={w2}: {} vs {}", c.kbar, k);
        assert!(close(c.bbar, b, 1e-9), "b̄ at ω²={w2}: {} vs {}", c.bbar, b);
        let lead = c.alpha - 0.5 * c.log_gamma;
        assert!(close(lead, a, 1e-9), "α − ½ln γ at ω²={w2}: {lead} vs {a}");
    }
}

#[test]
fn near_zero_frequency_matches_limit_branch() {
    let (f, t) = (1.7, 1.0);
    let near = ModeCoefficients::evaluate(1e-12, f, t).unwrap();
    let limit = ModeCoefficients::free_limit(f, t);
    for (x, y) in [(near.kbar, limit.kbar), (near.bbar, limit.bbar), (near.alpha, limit.alpha), (near.gamma, limit.gamma)] {
        assert!((x - y).norm() <= 1e-6 * y.norm(), "{x} vs {y}");
    }
    let exact = ModeCoefficients::evaluate(0.0, f, t).unwrap();
    for (x, y) in [(exact.kbar, limit.kbar), (exact.bbar, limit.bbar), (exact.alpha, limit.alpha), (exact.gamma, limit.gamma)] {
        assert!((x - y).norm() <= 1e-13 * y.norm().max(1.0));
    }
}

#[test]
fn trigonometric_form_agrees_away_from_nodes() {
    let (w, f, t) = (1.3, -0.6, 2.1);
    let a = ModeCoefficients::evaluate(w * w, f, t).unwrap();
    let b = ModeCoefficients::trigonometric(w, f, t);
    for (x, y) in [(a.kbar, b.kbar), (a.bbar, b.bbar), (a.alpha, b.alpha), (a.gamma, b.gamma)] {
        assert!((x - y).norm() < 1e-11 * y.norm().max(1.0));
    }
}

fn simpson(f: impl Fn(f64) -> C64, lo: f64, hi: f64, n: usize) -> C64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for k in 1..n {
        s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn two_atom_overlap_matches_quadrature() {
    let chain = NormalizedChain::uniform(2, 30.0, 200.0, 25.0, -40.0, 6);
    let model = ChannelModel::rydberg(&chain).unwrap();
    let modes = model.modes.as_ref().unwrap();
    let t = 0.8;
    let gamma = build_channel(modes, t).unwrap().gamma;
    let wave: Vec<(C64, C64, C64)> = modes
        .modes
        .iter()
        .map(|m| rk4_gaussian(m.omega_sq(0), m.forces[0], t, 20_000))
        .collect();
    let norm = std::f64::consts::PI.sqrt().recip();
    for n in 0..4 {
        for m in 0..4 {
            let (kn, bn, an) = wave[n];
            let (km, bm, am) = wave[m];
            let integrand = |s: f64| {
                let psi_n = (-0.5 * kn * s * s + bn * s + an).exp();
                let psi_m = (-0.5 * km * s * s + bm * s + am).exp();
                psi_m.conj() * psi_n * norm
            };
            let q = simpson(integrand, -40.0, 40.0, 40_000);
            assert!((gamma[[n, m]] - q).norm() < 1e-8, "Γ[{n},{m}] = {} vs {q}", gamma[[n, m]]);
        }
    }
}

#[test]
fn free_modes_give_unit_channel() {
    for l in 2..=10 {
        let modes = DisentangledModes::free(l, 5).unwrap();
        for t in [0.0, 0.3, 2.0, 11.0] {
            let g = build_channel(&modes, t).unwrap().gamma;
            for z in g.iter() {
                assert_abs_diff_eq!((z - C64::new(1.0, 0.0)).norm(), 0.0, epsilon = 1e-10);
            }
        }
    }
}

#[test]
fn gram_schmidt_forms_agree_up_to_fifty_sites() {
    for l in 2..=50 {
        let a = GramSchmidtBasis::iterative(l).unwrap();
        let b = GramSchmidtBasis::closed_form(l).unwrap();
        for (x, y) in a.matrix().iter().zip(b.matrix().iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn channel_is_hermitian_with_unit_diagonal(
        v0 in 50.0f64..400.0,
        rabi in 5.0f64..40.0,
        detuning in -60.0f64..-5.0,
        t in 0.0f64..3.0,
    ) {
        let chain = NormalizedChain::uniform(2, 25.0, v0, rabi, detuning, 6);
        let model = ChannelModel::rydberg(&chain).unwrap();
        let g = model.channel(t).unwrap().gamma;
        for n in 0..4 {
            prop_assert!((g[[n, n]] - 1.0).norm() < 1e-8);
            for m in 0..4 {
                prop_assert!((g[[n, m]] - g[[m, n]].conj()).norm() < 1e-12);
                prop_assert!(g[[n, m]].norm() <= 1.0 + 1e-9);
            }
        }
    }
}
