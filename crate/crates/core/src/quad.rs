//! Adaptive Gauss–Kronrod (7/15) quadrature for vector-valued integrands.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
// Gauss weights for the odd Kronrod nodes (indices 1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<const M: usize, F: Fn(f64) -> [f64; M]>(f: &F, a: f64, b: f64) -> ([f64; M], f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = [0.0; M];
    let mut gauss = [0.0; M];
    let fc = f(c);
    for m in 0..M {
        kron[m] = WGK[7] * fc[m];
        gauss[m] = WG[3] * fc[m];
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for m in 0..M {
            let s = f1[m] + f2[m];
            kron[m] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[m] += WG[j / 2] * s;
            }
        }
    }
    let mut err = 0.0_f64;
    for m in 0..M {
        kron[m] *= h;
        gauss[m] *= h;
        err = err.max((kron[m] - gauss[m]).abs());
    }
    (kron, err)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `abs_tol` or relative
/// tolerance `rel_tol` on the largest component, by interval bisection.
pub fn integrate<const M: usize, F: Fn(f64) -> [f64; M]>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> [f64; M] {
    if a == b {
        return [0.0; M];
    }
    let (v0, e0) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v0, e0)];
    let mut total = v0;
    let mut total_err = e0;
    for _ in 0..2000 {
        let mag = total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if total_err <= abs_tol.max(rel_tol * mag) {
            break;
        }
        // split the interval carrying the largest error estimate
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, iv)| if iv.3 > best.1 { (i, iv.3) } else { best });
        let (lo, hi, v, e) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (vl, el) = gk15(&f, lo, mid);
        let (vr, er) = gk15(&f, mid, hi);
        for m in 0..M {
            total[m] += vl[m] + vr[m] - v[m];
        }
        total_err += el + er - e;
        intervals.push((lo, mid, vl, el));
        intervals.push((mid, hi, vr, er));
    }
    // re-sum to shed accumulated cancellation in the running total
    let mut sum = [0.0; M];
    for iv in &intervals {
        for m in 0..M {
            sum[m] += iv.2[m];
        }
    }
    sum
}

pub fn integrate_scalar<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    integrate(|t| [f(t)], a, b, abs_tol, rel_tol)[0]
}
