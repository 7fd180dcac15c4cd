//! Synthetic echo sequences built from advecting anisotropic Gaussian cells
//! with an initiation/maturation/decay intensity envelope.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sftformer_autograd::Tensor;

use super::EchoSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    pub min_cells: usize,
    pub max_cells: usize,
    /// Speed range in pixels per frame.
    pub speed: (f64, f64),
    /// Major-axis standard deviation as a fraction of `min(H, W)`.
    pub sigma_major: (f64, f64),
    /// Minor/major axis ratio.
    pub aspect: (f64, f64),
    pub peak: (f64, f64),
    /// Probability that a cell's anisotropy axis rotates.
    pub rotation_probability: f64,
    /// Maximum rotation rate, radians per frame.
    pub max_angular_velocity: f64,
    /// Lifespan range as a multiple of the sequence length.
    pub lifespan: (f64, f64),
    pub peak_fraction: (f64, f64),
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            min_cells: 1,
            max_cells: 4,
            speed: (1.0, 2.0),
            sigma_major: (0.07, 0.14),
            aspect: (0.4, 0.9),
            peak: (0.6, 1.0),
            rotation_probability: 0.5,
            max_angular_velocity: 0.05,
            lifespan: (0.8, 1.6),
            peak_fraction: (0.3, 0.6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    /// Centre at frame 0, in pixels (x = column, y = row).
    pub x0: f64,
    pub y0: f64,
    pub vx: f64,
    pub vy: f64,
    pub sigma_major: f64,
    pub sigma_minor: f64,
    pub angle0: f64,
    pub angular_velocity: f64,
    pub peak: f64,
    /// Frame at which the cell appears (may be negative).
    pub birth: f64,
    pub lifespan: f64,
    pub peak_fraction: f64,
}

/// Hump on `[0, lifespan]`: `sin^2` rise to 1 at `peak_fraction * lifespan`,
/// then `cos^2` decay back to 0. Zero outside the lifespan.
pub fn lifecycle_envelope(age: f64, lifespan: f64, peak_fraction: f64) -> f64 {
    if !(0.0..=lifespan).contains(&age) || lifespan <= 0.0 {
        return 0.0;
    }
    let rise = peak_fraction * lifespan;
    if age < rise {
        (FRAC_PI_2 * age / rise).sin().powi(2)
    } else {
        let fall = lifespan - rise;
        if fall <= 0.0 {
            return 1.0;
        }
        (FRAC_PI_2 * (age - rise) / fall).cos().powi(2)
    }
}

/// Renders the superposition of `cells` over `t_seq` frames, clipped to `[0, 1]`.
pub fn render_cells(cells: &[CellSpec], t_seq: usize, h: usize, w: usize) -> Tensor<f32> {
    let mut acc = vec![0f64; t_seq * h * w];
    for cell in cells {
        for t in 0..t_seq {
            let tf = t as f64;
            let amp = cell.peak * lifecycle_envelope(tf - cell.birth, cell.lifespan, cell.peak_fraction);
            if amp == 0.0 {
                continue;
            }
            let cx = cell.x0 + cell.vx * tf;
            let cy = cell.y0 + cell.vy * tf;
            let (s, c) = (cell.angle0 + cell.angular_velocity * tf).sin_cos();
            let ia = 1.0 / (2.0 * cell.sigma_major * cell.sigma_major);
            let ib = 1.0 / (2.0 * cell.sigma_minor * cell.sigma_minor);
            let frame = &mut acc[t * h * w..(t + 1) * h * w];
            for y in 0..h {
                let dy = y as f64 - cy;
                for x in 0..w {
                    let dx = x as f64 - cx;
                    let u = c * dx + s * dy;
                    let v = -s * dx + c * dy;
                    frame[y * w + x] += amp * (-(u * u * ia + v * v * ib)).exp();
                }
            }
        }
    }
    let data = acc.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
    Tensor::new(vec![t_seq, h, w], data).expect("length matches shape")
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn sample_cell(rng: &mut ChaCha8Rng, p: &GeneratorParams, t_seq: usize, h: usize, w: usize) -> CellSpec {
    let tf = t_seq as f64;
    let scale = h.min(w) as f64;
    let speed = uniform(rng, p.speed);
    let heading = rng.random_range(0.0..2.0 * PI);
    let (vy, vx) = (speed * heading.sin(), speed * heading.cos());
    let lifespan = uniform(rng, p.lifespan) * tf;
    let birth = rng.random_range(-0.5 * lifespan..0.5 * tf);
    // Place the cell so that it sits inside the frame around mid-life.
    let mid = birth + 0.5 * lifespan;
    let cx = rng.random_range(0.2 * w as f64..0.8 * w as f64);
    let cy = rng.random_range(0.2 * h as f64..0.8 * h as f64);
    let sigma_major = uniform(rng, p.sigma_major) * scale;
    let angular_velocity = if rng.random_bool(p.rotation_probability.clamp(0.0, 1.0)) {
        rng.random_range(-p.max_angular_velocity..=p.max_angular_velocity)
    } else {
        0.0
    };
    CellSpec {
        x0: cx - vx * mid,
        y0: cy - vy * mid,
        vx,
        vy,
        sigma_major,
        sigma_minor: sigma_major * uniform(rng, p.aspect),
        angle0: rng.random_range(0.0..PI),
        angular_velocity,
        peak: uniform(rng, p.peak),
        birth,
        lifespan,
        peak_fraction: uniform(rng, p.peak_fraction),
    }
}

/// Deterministic batch of synthetic sequences for a given seed.
pub fn generate_synthetic(
    seed: u64,
    n_sequences: usize,
    t_seq: usize,
    h: usize,
    w: usize,
    params: &GeneratorParams,
) -> Result<Vec<EchoSequence>> {
    if n_sequences == 0 || t_seq == 0 || h == 0 || w == 0 {
        return Err(Error::Domain("all synthetic dimensions must be positive".into()));
    }
    if params.min_cells == 0 || params.min_cells > params.max_cells {
        return Err(Error::Domain(format!(
            "cell count range [{}, {}] is empty",
            params.min_cells, params.max_cells
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_sequences)
        .map(|i| {
            let n = rng.random_range(params.min_cells..=params.max_cells);
            let cells: Vec<_> = (0..n).map(|_| sample_cell(&mut rng, params, t_seq, h, w)).collect();
            EchoSequence::normalized(render_cells(&cells, t_seq, h, w), format!("synthetic-{seed}-{i:05}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still_cell(lifespan: f64) -> CellSpec {
        CellSpec {
            x0: 15.5,
            y0: 16.0,
            vx: 0.0,
            vy: 0.0,
            sigma_major: 5.0,
            sigma_minor: 2.5,
            angle0: 0.3,
            angular_velocity: 0.0,
            peak: 0.9,
            birth: 0.0,
            lifespan,
            peak_fraction: 0.5,
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let p = GeneratorParams::default();
        let a = generate_synthetic(7, 3, 12, 32, 32, &p).unwrap();
        let b = generate_synthetic(7, 3, 12, 32, 32, &p).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(8, 3, 12, 32, 32, &p).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn symmetric_envelope_is_time_reversible() {
        let lifespan = 12usize;
        let seq = render_cells(&[still_cell(lifespan as f64)], lifespan + 1, 32, 32);
        let n = 32 * 32;
        for t in 0..=lifespan {
            let a = &seq.data()[t * n..(t + 1) * n];
            let b = &seq.data()[(lifespan - t) * n..(lifespan - t + 1) * n];
            let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0f32, f32::max);
            assert!(diff < 1e-6, "t={t} diff={diff}");
        }
    }

    #[test]
    fn values_are_clipped() {
        let p = GeneratorParams {
            min_cells: 4,
            peak: (1.5, 2.0),
            ..Default::default()
        };
        for seq in generate_synthetic(3, 4, 10, 24, 24, &p).unwrap() {
            let d = seq.frames().data();
            assert!(d.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn single_cell_mass_is_unimodal() {
        let mut cell = still_cell(20.0);
        cell.vx = 0.3;
        cell.peak_fraction = 0.35;
        cell.angular_velocity = 0.04;
        let seq = render_cells(&[cell], 21, 32, 32);
        let n = 32 * 32;
        let mass: Vec<f64> = (0..21)
            .map(|t| seq.data()[t * n..(t + 1) * n].iter().map(|&v| v as f64).sum())
            .collect();
        let peak = mass.iter().enumerate().fold(0, |b, (i, &m)| if m > mass[b] { i } else { b });
        for t in 1..=peak {
            assert!(mass[t] + 1e-3 >= mass[t - 1], "rise broken at {t}");
        }
        for t in peak + 1..mass.len() {
            assert!(mass[t] <= mass[t - 1] + 1e-3, "decay broken at {t}");
        }
    }

    #[test]
    fn sampled_cells_move_at_least_one_pixel_per_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = GeneratorParams::default();
        for _ in 0..200 {
            let c = sample_cell(&mut rng, &p, 20, 64, 64);
            assert!(c.vx.hypot(c.vy) >= 1.0 - 1e-12);
        }
    }
}
