//! Deterministic Gauss-Legendre quadrature used by the exact cell averages
//! and by the theoretical-bias integrals.

/// 16-point Gauss-Legendre rule on [-1, 1]: positive abscissae and weights.
const GL16_X: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_8,
    0.755_404_408_355_003_0,
    0.865_631_202_387_831_8,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL16_W: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_5,
    0.149_595_988_816_576_7,
    0.124_628_971_255_533_9,
    0.095_158_511_682_492_8,
    0.062_253_523_938_647_9,
    0.027_152_459_411_754_1,
];

/// Nodes and weights of the 16-point rule mapped to `[a, b]`.
pub fn gl16_nodes(a: f64, b: f64) -> [(f64, f64); 16] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 16];
    for i in 0..8 {
        out[2 * i] = (mid - half * GL16_X[i], half * GL16_W[i]);
        out[2 * i + 1] = (mid + half * GL16_X[i], half * GL16_W[i]);
    }
    out
}

/// Integral of `f` over `[a, b]` with one 16-point panel.
pub fn gl16<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    gl16_nodes(a, b).iter().map(|&(x, w)| w * f(x)).sum()
}

/// Composite 16-point rule with `panels` equal subintervals.
pub fn gl16_composite<F: Fn(f64) -> f64>(a: f64, b: f64, panels: usize, f: F) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| gl16(a + i as f64 * h, a + (i + 1) as f64 * h, &f))
        .sum()
}

/// Tensor 16x16 rule over `[a1,b1] x [a2,b2]`.
pub fn gl16_2d<F: Fn(f64, f64) -> f64>(a1: f64, b1: f64, a2: f64, b2: f64, f: F) -> f64 {
    let n1 = gl16_nodes(a1, b1);
    let n2 = gl16_nodes(a2, b2);
    let mut acc = 0.0;
    for &(x, wx) in n1.iter() {
        for &(y, wy) in n2.iter() {
            acc += wx * wy * f(x, y);
        }
    }
    acc
}
