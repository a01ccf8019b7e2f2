//! Exact max-min power split for fixed beam directions.
//!
//! Write column `k` of `u` as `√p_k · d_k` with `d_k` fixed. Then
//! `SINR_k = p_k G_k / (Σ_ℓ A_{k,ℓ} p_ℓ + 1)` with `G_k = (Σ_m √g_{m,k} d_{m,k})²`
//! and `A_{k,ℓ} = Σ_m g_{m,k} d_{m,ℓ}²`, and the RU loads are linear in `p`.
//! The minimal powers reaching a common SINR `t` are
//! `p(t) = t (diag(G) − tA)⁻¹ 1`, componentwise increasing in `t`, so the
//! best common SINR is the largest `t` keeping every load at most one.

use nalgebra::{DMatrix, DVector};

use super::Instance;

const ITERS: usize = 200;

/// Returns the equalized common SINR and the rescaled `u`. `u` must give every
/// user a non-zero coherent amplitude.
pub(crate) fn equalize(inst: &Instance, u: &[f64]) -> (f64, Vec<f64>) {
    let (mc, kc) = (inst.m, inst.k);
    let mut gain = vec![0.0; kc];
    let mut cross = DMatrix::zeros(kc, kc);
    for m in 0..mc {
        for k in 0..kc {
            let idx = m * kc + k;
            gain[k] += inst.a[idx] * u[idx].abs();
            for l in 0..kc {
                let d = u[m * kc + l];
                cross[(k, l)] += inst.g[idx] * d * d;
            }
        }
    }
    gain.iter_mut().for_each(|x| *x *= *x);

    let powers = |t: f64| -> Option<Vec<f64>> {
        let mut sys = -t * &cross;
        for k in 0..kc {
            sys[(k, k)] += gain[k];
        }
        let rhs = DVector::from_element(kc, t);
        let p = sys.lu().solve(&rhs)?;
        if p.iter().all(|x| x.is_finite() && *x > 0.0) {
            Some(p.iter().copied().collect())
        } else {
            None
        }
    };
    let max_load = |p: &[f64]| -> f64 {
        u.chunks_exact(kc)
            .map(|row| row.iter().zip(p).map(|(d, p)| p * d * d).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let ok = |t: f64| powers(t).is_some_and(|p| max_load(&p) <= 1.0);

    let current = inst.sinr(u).into_iter().fold(f64::INFINITY, f64::min);
    let mut lo = if current > 0.0 && ok(current) { current } else { 0.0 };
    let mut hi = (0..kc)
        .map(|k| gain[k] / cross[(k, k)])
        .fold(f64::INFINITY, f64::min);
    for _ in 0..ITERS {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let Some(p) = (lo > 0.0).then(|| powers(lo)).flatten() else {
        return (current.max(0.0), u.to_vec());
    };
    let mut out = u.to_vec();
    for row in out.chunks_exact_mut(kc) {
        for (x, p) in row.iter_mut().zip(&p) {
            *x = x.abs() * p.sqrt();
        }
    }
    let achieved = inst.sinr(&out).into_iter().fold(f64::INFINITY, f64::min);
    (achieved, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::BetaMatrix;

    #[test]
    fn equalized_point_has_equal_sinr_and_a_tight_ru() {
        let beta = BetaMatrix::new(3, 2, vec![1.0, 0.2, 0.5, 2.0, 0.1, 0.3]).unwrap();
        let inst = Instance::new(&beta, 1.0, 0.1);
        let (t, u) = equalize(&inst, &inst.equal_split());
        let sinr = inst.sinr(&u);
        for s in &sinr {
            assert!((s - t).abs() <= 1e-9 * t);
        }
        let loads = inst.loads(&u);
        assert!(loads.iter().all(|&v| v <= 1.0 + 1e-12));
        assert!(loads.iter().any(|&v| v >= 1.0 - 1e-9));
        let before = inst
            .sinr(&inst.equal_split())
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        assert!(t >= before);
    }
}
