//! Adaptive Dormand–Prince 5(4) integrator for the segment dynamics
//! `v' = inflow − f(v)`, `I' = v`, used whenever no closed form applies.

use crate::scalar::Scalar;

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

const MAX_STEPS: usize = 10_000_000;

/// Integrates `v' = inflow − f(v)` together with `I' = v` from `(v0, 0)`
/// over `dt`. Returns `(v(dt), ∫₀^dt v)`.
///
/// Steps that would drive `v` negative are rejected and retried with a
/// smaller step.
pub fn evolve<T: Scalar>(f: &dyn Fn(T) -> T, inflow: T, v0: T, dt: T, rtol: f64) -> (T, T) {
    if dt <= T::zero() {
        return (v0, T::zero());
    }
    if v0 == T::zero() && inflow == T::zero() {
        return (T::zero(), T::zero());
    }
    let rtol = T::reachable_rtol(rtol);
    let atol = rtol * T::min_positive_value().sqrt();
    let rate = |v: T| inflow - f(v.max(T::zero()));
    let c5 = T::lit(0.2);

    let mut t = T::zero();
    let mut v = v0;
    let mut integral = T::zero();
    let slope0 = rate(v).abs();
    let mut h = if slope0 > T::zero() { (T::lit(0.01) * v.max(atol) / slope0).min(dt) } else { dt };
    let mut k = [T::zero(); 7];
    k[0] = rate(v);

    for _ in 0..MAX_STEPS {
        if t >= dt {
            break;
        }
        let last = t + h >= dt;
        if last {
            h = dt - t;
        }
        // stage values for v; the I-stages are the v-stages themselves
        let mut vs = [T::zero(); 7];
        vs[0] = v;
        for s in 1..7 {
            let mut acc = T::zero();
            for j in 0..s {
                acc = acc + T::lit(A[s][j]) * k[j];
            }
            vs[s] = v + h * acc;
            k[s] = rate(vs[s]);
        }
        let mut v5 = T::zero();
        let mut v4 = T::zero();
        let mut i5 = T::zero();
        let mut i4 = T::zero();
        for s in 0..7 {
            // fifth-order weights are the last stage row (FSAL)
            let b5 = if s < 6 { T::lit(A[6][s]) } else { T::zero() };
            v5 = v5 + b5 * k[s];
            v4 = v4 + T::lit(B4[s]) * k[s];
            i5 = i5 + b5 * vs[s];
            i4 = i4 + T::lit(B4[s]) * vs[s];
        }
        let v_new = v + h * v5;
        let i_new = integral + h * i5;
        let err_v = (h * (v5 - v4)).abs() / (atol + rtol * v.abs().max(v_new.abs()));
        let err_i = (h * (i5 - i4)).abs() / (atol + rtol * i_new.abs());
        let err = err_v.max(err_i);
        let positive = vs.iter().all(|&x| x >= T::zero()) && v_new >= T::zero();

        if err <= T::one() && positive {
            t = if last { dt } else { t + h };
            v = v_new;
            integral = i_new;
            k[0] = k[6];
            let grow = if err == T::zero() { T::lit(5.0) } else { (T::lit(0.9) * err.powf(-c5)).min(T::lit(5.0)) };
            h = h * grow;
        } else {
            let shrink =
                if positive && err.is_finite() { (T::lit(0.9) * err.powf(-c5)).max(T::lit(0.1)) } else { T::lit(0.25) };
            h = h * shrink;
        }
    }
    (v.max(T::zero()), integral)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_decay_matches_exponential() {
        let f = |v: f64| 2.0 * v;
        let (v, i) = evolve(&f, 0.0, 3.0, 1.5, 1e-11);
        let ev = 3.0 * (-3.0f64).exp();
        let ei = 1.5 * (1.0 - (-3.0f64).exp());
        assert!(((v - ev) / ev).abs() < 1e-9, "{v} vs {ev}");
        assert!(((i - ei) / ei).abs() < 1e-9);
    }

    #[test]
    fn inflow_drives_to_equilibrium() {
        // v' = 1 - v from 0: v = 1 - e^{-t}
        let f = |v: f64| v;
        let (v, i) = evolve(&f, 1.0, 0.0, 2.0, 1e-11);
        assert!((v - (1.0 - (-2.0f64).exp())).abs() < 1e-9);
        assert!((i - (2.0 - (1.0 - (-2.0f64).exp()))).abs() < 1e-9);
    }

    #[test]
    fn fixed_point_is_exact() {
        let f = |v: f64| v * v * v;
        assert_eq!(evolve(&f, 0.0, 0.0, 5.0, 1e-10), (0.0, 0.0));
    }
}
