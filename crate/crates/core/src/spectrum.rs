//! Finite-time Lyapunov exponents by QR re-orthonormalization of the
//! derivative cocycle, center-block exponents of skew products, and
//! exponent fields of the standard map.

use nalgebra::{Const, DimMin, Matrix2, SMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::maps::{BaseMap, MapModel};
use crate::torus::{Angle, TorusPoint};

/// Finite-time Lyapunov spectrum of one orbit.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentReport {
    /// Sorted descending, nats per iterate.
    pub exponents: Vec<f64>,
    pub n_iterations: usize,
    pub sum_residual: f64,
    /// `max_i |χ_i + χ_{d+1-i}|`.
    pub pairing_residual: f64,
    /// Last-quarter mean minus full-window mean, per exponent.
    pub running_tail: Vec<f64>,
}

impl ExponentReport {
    fn from_sums(sums: &[f64], tail: &[f64], n: usize, tail_n: usize) -> ExponentReport {
        let d = sums.len();
        let full: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| full[b].total_cmp(&full[a]));
        let exponents: Vec<f64> = order.iter().map(|&i| full[i]).collect();
        let running_tail = order
            .iter()
            .map(|&i| {
                if tail_n == 0 {
                    0.0
                } else {
                    tail[i] / tail_n as f64 - full[i]
                }
            })
            .collect();
        let sum_residual = exponents.iter().sum::<f64>().abs();
        let pairing_residual = (0..d)
            .map(|i| (exponents[i] + exponents[d - 1 - i]).abs())
            .fold(0.0, f64::max);
        ExponentReport {
            exponents,
            n_iterations: n,
            sum_residual,
            pairing_residual,
            running_tail,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpectrumOptions {
    pub qr_stride: usize,
    pub burn_in: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            qr_stride: 1,
            burn_in: 0,
        }
    }
}

/// Log growth of a `K`-frame under the cocycle: per-direction sums over the
/// whole window and over its last quarter.
struct FrameSums<const K: usize> {
    sums: [f64; K],
    tail: [f64; K],
    tail_n: usize,
}

/// Runs the QR cocycle on a `K`-frame for `burn_in + n` steps, accumulating
/// the last `n`; `step` advances the orbit and returns the one-step
/// derivative.
fn qr_frame<const D: usize, const K: usize>(
    q0: SMatrix<f64, D, K>,
    n: usize,
    stride: usize,
    burn_in: usize,
    mut step: impl FnMut() -> SMatrix<f64, D, D>,
) -> Result<FrameSums<K>>
where
    Const<D>: DimMin<Const<K>, Output = Const<K>>,
{
    let mut q = q0;
    for _ in 0..burn_in {
        q = (step() * q).qr().q();
    }
    let mut sums = [0.0; K];
    let mut tail = [0.0; K];
    let tail_start = n - n / 4;
    let mut tail_n = 0;
    let mut done = 0;
    while done < n {
        let len = stride.min(n - done);
        let mut prod = q;
        for _ in 0..len {
            prod = step() * prod;
        }
        let qr = prod.qr();
        let r = qr.r();
        q = qr.q();
        for i in 0..K {
            let v = r[(i, i)].abs();
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Numerical(format!(
                    "QR diagonal {v} after {done} steps; reduce qr_stride"
                )));
            }
            let l = v.ln();
            sums[i] += l;
            if done >= tail_start {
                tail[i] += l;
            }
        }
        if done >= tail_start {
            tail_n += len;
        }
        done += len;
    }
    Ok(FrameSums { sums, tail, tail_n })
}

fn qr_cocycle<const D: usize>(
    n: usize,
    stride: usize,
    burn_in: usize,
    step: impl FnMut() -> SMatrix<f64, D, D>,
) -> Result<ExponentReport>
where
    Const<D>: DimMin<Const<D>, Output = Const<D>>,
{
    let f = qr_frame::<D, D>(SMatrix::identity(), n, stride, burn_in, step)?;
    Ok(ExponentReport::from_sums(&f.sums, &f.tail, n, f.tail_n))
}

fn check_n(n: usize, stride: usize) -> Result<()> {
    if n < 100 {
        return Err(Error::InvalidParams(format!("need n >= 100, got {n}")));
    }
    if stride < 1 {
        return Err(Error::InvalidParams("qr_stride must be >= 1".into()));
    }
    Ok(())
}

/// Lyapunov spectrum along the orbit of `m0`.
pub fn lyapunov_spectrum(
    map: &MapModel,
    m0: &TorusPoint,
    n: usize,
    qr_stride: usize,
) -> Result<ExponentReport> {
    lyapunov_spectrum_with(
        map,
        m0,
        n,
        SpectrumOptions {
            qr_stride,
            burn_in: 0,
        },
    )
}

pub fn lyapunov_spectrum_with(
    map: &MapModel,
    m0: &TorusPoint,
    n: usize,
    opts: SpectrumOptions,
) -> Result<ExponentReport> {
    check_n(n, opts.qr_stride)?;
    if m0.dim() != map.dim() {
        return Err(Error::Dimension {
            expected: map.dim(),
            got: m0.dim(),
        });
    }
    match *m0 {
        TorusPoint::T4(start) => {
            let mut m = start;
            qr_cocycle::<4>(n, opts.qr_stride, opts.burn_in, || {
                let d = map.derivative4(&m);
                m = map.eval4(&m);
                d
            })
        }
        TorusPoint::T2(_) => {
            let mut m = *m0;
            qr_cocycle::<2>(n, opts.qr_stride, opts.burn_in, || {
                let d = map.derivative(&m).expect("dimension checked");
                m = map.eval(&m).expect("dimension checked");
                Matrix2::new(d[(0, 0)], d[(0, 1)], d[(1, 0)], d[(1, 1)])
            })
        }
    }
}

/// Spectrum of a map of T⁴ from two half frames: the top pair from a forward
/// 2-frame, the bottom pair from a 2-frame of the inverse along the backward
/// orbit. A full 4-frame has to resolve the whole spread `χ_1 − χ_4` in one
/// QR per step, which exhausts double precision once `χ_1 − χ_4` per step
/// nears `log 2^53`.
pub fn split_spectrum(
    map: &MapModel,
    m0: &TorusPoint,
    n: usize,
    opts: SpectrumOptions,
) -> Result<ExponentReport> {
    check_n(n, opts.qr_stride)?;
    let TorusPoint::T4(start) = *m0 else {
        return Err(Error::Dimension {
            expected: 4,
            got: m0.dim(),
        });
    };
    if map.dim() != 4 {
        return Err(Error::Dimension {
            expected: map.dim(),
            got: 4,
        });
    }
    // Coordinate planes can be invariant (the base plane of a skew product),
    // so the half frames start from a fixed generic frame.
    let q0 = SMatrix::<f64, 4, 2>::new(1.0, 0.3, 0.7, -0.5, -0.4, 0.9, 0.2, 0.6)
        .qr()
        .q();
    let mut m = start;
    let fwd = qr_frame::<4, 2>(q0, n, opts.qr_stride, opts.burn_in, || {
        let d = map.derivative4(&m);
        m = map.eval4(&m);
        d
    })?;
    let mut m = start;
    let back = qr_frame::<4, 2>(q0, n, opts.qr_stride, opts.burn_in, || {
        let d = map.inverse_derivative4(&m);
        m = map.inverse4(&m);
        d
    })?;
    let sums = [fwd.sums[0], fwd.sums[1], -back.sums[1], -back.sums[0]];
    let tail = [fwd.tail[0], fwd.tail[1], -back.tail[1], -back.tail[0]];
    Ok(ExponentReport::from_sums(&sums, &tail, n, fwd.tail_n))
}

/// Exponents of the center cocycle `d s_N` driven by the orbit of an
/// unperturbed skew product: `(χ_c⁺, χ_c⁻, |χ_c⁺ + χ_c⁻|)`.
pub fn center_exponents(map: &MapModel, m0: &TorusPoint, n: usize) -> Result<(f64, f64, f64)> {
    let skew = map.skew().ok_or(Error::NotSkew("center_exponents"))?;
    check_n(n, 1)?;
    let TorusPoint::T4(mut m) = *m0 else {
        return Err(Error::Dimension {
            expected: 4,
            got: m0.dim(),
        });
    };
    let rep = qr_cocycle::<2>(n, 1, 0, || {
        let d = skew.base.derivative(m[0].radians());
        m = skew.eval4(&m);
        d
    })?;
    Ok((rep.exponents[0], rep.exponents[1], rep.sum_residual))
}

/// Per-cell finite-time top exponent of the standard map s_r.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentField {
    pub width: usize,
    pub height: usize,
    pub r: f64,
    pub n: usize,
    /// Row-major, row index = y cell.
    pub values: Vec<f64>,
}

impl ExponentField {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.width + ix]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Fraction of cells with value `< t`.
    pub fn fraction_below(&self, t: f64) -> f64 {
        self.values.iter().filter(|&&v| v < t).count() as f64 / self.values.len() as f64
    }

    /// Fraction of cells with value `> t`.
    pub fn fraction_above(&self, t: f64) -> f64 {
        self.values.iter().filter(|&&v| v > t).count() as f64 / self.values.len() as f64
    }
}

/// Top exponent of s_r along one orbit, tracking a single renormalized vector.
pub fn top_exponent_2d(base: &BaseMap, x0: Angle, y0: Angle, n: usize) -> f64 {
    let (mut x, mut y) = (x0, y0);
    let (mut u, mut v) = (1.0f64, 0.0f64);
    let mut acc = 0.0;
    for _ in 0..n {
        let om = base.omega(x.radians());
        let nu = om * u - v;
        let nv = u;
        let norm = nu.hypot(nv);
        acc += norm.ln();
        u = nu / norm;
        v = nv / norm;
        [x, y] = base.eval(x, y);
    }
    acc / n as f64
}

/// Exponent field of s_r on a `width × height` grid of cell centers.
pub fn exponent_field(r: f64, grid: (usize, usize), n: usize) -> Result<ExponentField> {
    let (width, height) = grid;
    if width == 0 || height == 0 || width > 4096 || height > 4096 {
        return Err(Error::InvalidParams(format!(
            "grid {width}x{height} outside 1..=4096"
        )));
    }
    check_n(n, 1)?;
    if !r.is_finite() {
        return Err(Error::InvalidParams("r must be finite".into()));
    }
    let base = BaseMap { p: 2, r };
    let tau = std::f64::consts::TAU;
    let mut values = vec![0.0; width * height];
    values
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(iy, row)| {
            let y = Angle::from_radians((iy as f64 + 0.5) / height as f64 * tau);
            for (ix, cell) in row.iter_mut().enumerate() {
                let x = Angle::from_radians((ix as f64 + 0.5) / width as f64 * tau);
                *cell = top_exponent_2d(&base, x, y, n);
            }
        });
    Ok(ExponentField {
        width,
        height,
        r,
        n,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{HyperbolicMatrix, MapSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(spec: MapSpec) -> MapModel {
        MapModel::new(&spec).unwrap()
    }

    #[test]
    fn cat_map_constant_cocycle() {
        let cat = model(MapSpec::CatPower {
            a: crate::maps::CAT,
            n: 1,
        });
        let opts = SpectrumOptions {
            qr_stride: 1,
            burn_in: 100,
        };
        let rep = lyapunov_spectrum_with(&cat, &TorusPoint::t2(0.1, 0.2), 10_000, opts).unwrap();
        let l = HyperbolicMatrix::cat().mu.ln();
        assert!((l - 0.9624).abs() < 1e-4);
        assert!((rep.exponents[0] - l).abs() < 1e-6);
        assert!((rep.exponents[1] + l).abs() < 1e-6);
    }

    #[test]
    fn unipotent_growth_is_polynomial() {
        let s = model(MapSpec::standard(0.0));
        let n = 2000;
        let rep = lyapunov_spectrum(&s, &TorusPoint::t2(1.0, 2.0), n, 1).unwrap();
        let bound = (n as f64).ln() / n as f64 + 1e-3;
        assert!(rep.exponents.iter().all(|c| c.abs() <= bound), "{rep:?}");
    }

    #[test]
    fn f_n_spectrum_structure() {
        let f = model(MapSpec::f_n(4));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m0 = TorusPoint::random_t4(&mut rng);
        let rep = lyapunov_spectrum(&f, &m0, 20_000, 1).unwrap();
        let top = 8.0 * HyperbolicMatrix::cat().mu.ln();
        assert!((rep.exponents[0] - top).abs() < 1e-3);
        assert!((rep.exponents[3] + top).abs() < 1e-3);
        let opts = SpectrumOptions {
            qr_stride: 1,
            burn_in: 50,
        };
        let settled = lyapunov_spectrum_with(&f, &m0, 20_000, opts).unwrap();
        assert!((settled.exponents[0] - top).abs() < 1e-9);
        assert!(rep.sum_residual < 5e-3);
        assert!(rep.pairing_residual < 5e-3);
        let (cp, cm, res) = center_exponents(&f, &m0, 20_000).unwrap();
        assert!((cp - rep.exponents[1]).abs() < 1e-2);
        assert!((cm - rep.exponents[2]).abs() < 1e-2);
        assert!(res < 5e-3);
    }

    #[test]
    fn spectrum_is_deterministic_and_stride_consistent() {
        let f = model(MapSpec::perturbed_f_n(3, 0.05));
        let m0 = TorusPoint::t4(0.3, 1.1, 2.0, 4.0);
        let a = lyapunov_spectrum(&f, &m0, 3000, 1).unwrap();
        let b = lyapunov_spectrum(&f, &m0, 3000, 1).unwrap();
        assert_eq!(a, b);
        let c = lyapunov_spectrum(&f, &m0, 3000, 2).unwrap();
        for (x, y) in a.exponents.iter().zip(&c.exponents) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn one_step_center_factors_bounded() {
        let n = 10.0;
        let base = BaseMap { p: 2, r: n };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let d = base.derivative(rng.gen::<f64>() * std::f64::consts::TAU);
            let sv = d.singular_values();
            assert!(sv.max() <= 2.0 * n && sv.min() >= 1.0 / (2.0 * n));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let f = model(MapSpec::f_n(3));
        let m = TorusPoint::t4(0.0, 0.0, 0.0, 0.0);
        assert!(lyapunov_spectrum(&f, &m, 50, 1).is_err());
        assert!(lyapunov_spectrum(&f, &TorusPoint::t2(0.0, 0.0), 500, 1).is_err());
        assert!(lyapunov_spectrum(&model(MapSpec::f_n(12)), &m, 500, 40).is_err());
        let g = model(MapSpec::perturbed_f_n(3, 0.1));
        assert!(matches!(
            center_exponents(&g, &m, 500),
            Err(Error::NotSkew(_))
        ));
    }

    #[test]
    fn r_zero_field_is_flat() {
        let f = exponent_field(0.0, (64, 64), 1000).unwrap();
        assert!(f.max() <= 0.01, "{}", f.max());
    }

    #[test]
    fn field_independent_of_thread_count() {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let a = pool.install(|| exponent_field(-0.364, (40, 30), 200).unwrap());
        let b = exponent_field(-0.364, (40, 30), 200).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn large_r_field_mean_against_monte_carlo() {
        // Oracle: Monte Carlo average of log|Ω(x)| over uniform x, the one-step
        // growth of a vector already aligned with the expanding direction.
        let r = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tau = std::f64::consts::TAU;
        let samples = 200_000;
        let mut aligned = 0.0;
        let mut random_dir = 0.0;
        for _ in 0..samples {
            let x: f64 = rng.gen::<f64>() * tau;
            let th: f64 = rng.gen::<f64>() * tau;
            let om = 2.0 + r * x.cos();
            aligned += om.abs().ln();
            random_dir += (om * th.cos() - th.sin()).hypot(th.cos()).ln();
        }
        let aligned = aligned / samples as f64;
        let random_dir = random_dir / samples as f64;
        let field = exponent_field(r, (64, 64), 1000).unwrap();
        let target = (r / 2.0).ln();
        eprintln!(
            "r=50 field mean {:.4}, aligned oracle {aligned:.4}, random-direction oracle {random_dir:.4}, log(r/2) {target:.4}",
            field.mean()
        );
        assert!((aligned - target).abs() < 0.02);
        assert!((field.mean() - aligned).abs() / aligned < 0.15);
        assert!((field.mean() - target).abs() / target < 0.15);
    }

    #[test]
    fn split_frames_resolve_the_outer_pair() {
        let m0 = TorusPoint::t4(0.4, 1.1, 2.3, 5.0);
        for spec in [MapSpec::f_n(10), MapSpec::perturbed_f_n(10, 1e-3)] {
            let map = model(spec);
            let top = map.unperturbed().unwrap().fiber_mu().ln();
            let rep = split_spectrum(&map, &m0, 20_000, SpectrumOptions::default()).unwrap();
            assert!((rep.exponents[0] - top).abs() < 1e-3, "{:?}", rep.exponents);
            assert!((rep.exponents[3] + top).abs() < 1e-3, "{:?}", rep.exponents);
            assert!(rep.exponents[1] > 1.0 && rep.exponents[2] < -1.0);
        }
        // One 4-frame cannot: the perturbed map loses R_44 entirely.
        let g = model(MapSpec::perturbed_f_n(10, 1e-3));
        let full = lyapunov_spectrum(&g, &m0, 20_000, 1);
        assert!(full.map_or(true, |r| r.pairing_residual > 1e-2));
        let planar = model(MapSpec::standard(1.0));
        assert!(split_spectrum(
            &planar,
            &TorusPoint::t2(0.1, 0.2),
            1_000,
            SpectrumOptions::default()
        )
        .is_err());
    }
}
