//! Adaptive Gauss–Kronrod (7/15) integration of vector-valued integrands.

use crate::{Error, Result};

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
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

fn gk15<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, buf: &mut [f64]) -> Segment {
    let dim = buf.len();
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    for (j, &x) in XGK.iter().enumerate() {
        let points: &[f64] = if j == 7 { &[0.0] } else { &[-1.0, 1.0] };
        for &sign in points {
            f(center + sign * half * x, buf);
            for i in 0..dim {
                kronrod[i] += WGK[j] * buf[i];
                if j % 2 == 1 {
                    gauss[i] += WG[j / 2] * buf[i];
                }
            }
        }
    }
    let mut error = 0.0f64;
    for i in 0..dim {
        kronrod[i] *= half;
        gauss[i] *= half;
        error = error.max((kronrod[i] - gauss[i]).abs());
    }
    Segment {
        a,
        b,
        value: kronrod,
        error,
    }
}

/// Integrates `f` (writing `dim` real components) over `[a, b]` until the
/// summed per-segment error bound is below `abs_tol` for every component.
pub(crate) fn integrate<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    dim: usize,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_subdivisions: usize,
) -> Result<Vec<f64>> {
    let mut buf = vec![0.0; dim];
    let mut segments = vec![gk15(&mut f, a, b, &mut buf)];
    loop {
        let total: f64 = segments.iter().map(|s| s.error).sum();
        if total <= abs_tol {
            break;
        }
        if segments.len() >= max_subdivisions {
            return Err(Error::Quadrature {
                tolerance: abs_tol,
                max_subdivisions,
                error: total,
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        segments.push(gk15(&mut f, seg.a, mid, &mut buf));
        segments.push(gk15(&mut f, mid, seg.b, &mut buf));
    }
    let mut out = vec![0.0; dim];
    for s in &segments {
        for (o, v) in out.iter_mut().zip(&s.value) {
            *o += v;
        }
    }
    Ok(out)
}
