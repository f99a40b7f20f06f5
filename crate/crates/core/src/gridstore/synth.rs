//! Deterministic synthetic storm events.
//!
//! Storms are advecting anisotropic Gaussian cells with a grow / hold /
//! decay intensity envelope. Reflectivity is the max over storms on top of
//! a low-amplitude smooth background. Vertical velocity and buoyancy bumps
//! sit on the same footprints but follow the envelope one frame ahead, so
//! updrafts precede reflectivity growth.
//!
//! A single reflectivity gain per event is chosen so that the share of
//! cells exceeding the 35 dBZ label threshold at the label frames matches
//! `target_positive_fraction`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DomainGrid, EventSeries, Frame, GridError, GriddedField, Variable, DEFAULT_CADENCE};

const LABEL_THRESHOLD_DBZ: f32 = 35.0;
const LABEL_LEAD_FRAMES: usize = 2;
const R_MAX_DBZ: f32 = 75.0;
const GAIN_RANGE: (f64, f64) = (0.3, 3.0);
const NOISE_SPACING_PX: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_frames: usize,
    /// Inclusive range for the number of storms over the event's life.
    pub n_storms: (usize, usize),
    /// Footprint standard deviation along each axis, km.
    pub storm_scale_km: (f32, f32),
    pub advection_km_per_frame: (f32, f32),
    /// Envelope gained per frame while growing, as a fraction of peak.
    pub growth_rate: (f32, f32),
    /// Envelope lost per frame while decaying, as a fraction of peak.
    pub decay_rate: (f32, f32),
    pub target_positive_fraction: f64,
    pub seed: u64,
    pub start_time: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_frames: 8,
            n_storms: (20, 30),
            storm_scale_km: (4.0, 9.0),
            advection_km_per_frame: (0.5, 2.0),
            growth_rate: (0.25, 0.5),
            decay_rate: (0.15, 0.35),
            target_positive_fraction: 0.05,
            seed: 1,
            // 2012-07-07 00:00:00 UTC
            start_time: 1_341_619_200,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), GridError> {
        let bad = |m: String| Err(GridError::InvalidParams(m));
        if self.n_frames == 0 {
            return bad("n_frames must be >= 1".into());
        }
        if self.n_storms.0 > self.n_storms.1 {
            return bad(format!("empty n_storms range {:?}", self.n_storms));
        }
        for (name, (lo, hi), positive) in [
            ("storm_scale_km", self.storm_scale_km, true),
            ("advection_km_per_frame", self.advection_km_per_frame, false),
            ("growth_rate", self.growth_rate, true),
            ("decay_rate", self.decay_rate, true),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return bad(format!("empty {name} range ({lo}, {hi})"));
            }
            if (positive && lo <= 0.0) || lo < 0.0 {
                return bad(format!("{name} must be positive, got ({lo}, {hi})"));
            }
        }
        if self.growth_rate.1 > 1.0 || self.decay_rate.1 > 1.0 {
            return bad("growth and decay rates are fractions of peak per frame (<= 1)".into());
        }
        let t = self.target_positive_fraction;
        if !(t > 0.0 && t < 0.5) {
            return bad(format!("target_positive_fraction {t} outside (0, 0.5)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Storm {
    y0: f32,
    x0: f32,
    vy: f32,
    vx: f32,
    sigma_a: f32,
    sigma_b: f32,
    cos_t: f32,
    sin_t: f32,
    peak_dbz: f32,
    w_peak: f32,
    byc_peak: f32,
    birth: f32,
    growth: f32,
    hold: f32,
    decay: f32,
}

impl Storm {
    fn envelope(&self, frame: f32) -> f32 {
        let age = frame - self.birth;
        if age <= 0.0 {
            return 0.0;
        }
        let t_peak = 1.0 / self.growth;
        if age < t_peak {
            return age * self.growth;
        }
        let after = age - t_peak - self.hold;
        if after <= 0.0 {
            1.0
        } else {
            (1.0 - after * self.decay).max(0.0)
        }
    }

    /// Adds `amp·footprint` into `map` with `combine`, restricted to the
    /// storm's bounding box.
    fn splat(
        &self,
        frame: f32,
        shrink: f32,
        amp: f32,
        rows: usize,
        cols: usize,
        map: &mut [f32],
        combine: impl Fn(&mut f32, f32),
    ) {
        if amp == 0.0 {
            return;
        }
        let cy = self.y0 + self.vy * frame;
        let cx = self.x0 + self.vx * frame;
        let sa = self.sigma_a * shrink;
        let sb = self.sigma_b * shrink;
        let reach = 3.5 * sa.max(sb);
        let r0 = (cy - reach).floor().max(0.0) as usize;
        let r1 = ((cy + reach).ceil().max(-1.0) as isize).min(rows as isize - 1);
        let c0 = (cx - reach).floor().max(0.0) as usize;
        let c1 = ((cx + reach).ceil().max(-1.0) as isize).min(cols as isize - 1);
        if r1 < 0 || c1 < 0 {
            return;
        }
        for r in r0..=r1 as usize {
            let dy = r as f32 + 0.5 - cy;
            for c in c0..=c1 as usize {
                let dx = c as f32 + 0.5 - cx;
                let u = self.cos_t * dx + self.sin_t * dy;
                let v = -self.sin_t * dx + self.cos_t * dy;
                let q = 0.5 * (u * u / (sa * sa) + v * v / (sb * sb));
                combine(&mut map[r * cols + c], amp * (-q).exp());
            }
        }
    }
}

/// Bilinearly interpolated lattice noise in [0, 1].
struct SmoothNoise {
    lat_rows: usize,
    lat_cols: usize,
    knots: Vec<f32>,
}

impl SmoothNoise {
    fn new(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Self {
        let lat_rows = rows / NOISE_SPACING_PX + 2;
        let lat_cols = cols / NOISE_SPACING_PX + 2;
        let knots = (0..lat_rows * lat_cols).map(|_| rng.gen::<f32>()).collect();
        SmoothNoise {
            lat_rows,
            lat_cols,
            knots,
        }
    }

    fn render(&self, rows: usize, cols: usize) -> Vec<f32> {
        let s = NOISE_SPACING_PX as f32;
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let fy = r as f32 / s;
            let iy = (fy as usize).min(self.lat_rows - 2);
            let ty = fy - iy as f32;
            for c in 0..cols {
                let fx = c as f32 / s;
                let ix = (fx as usize).min(self.lat_cols - 2);
                let tx = fx - ix as f32;
                let k = |a: usize, b: usize| self.knots[(iy + a) * self.lat_cols + ix + b];
                let top = k(0, 0) * (1.0 - tx) + k(0, 1) * tx;
                let bot = k(1, 0) * (1.0 - tx) + k(1, 1) * tx;
                out.push(top * (1.0 - ty) + bot * ty);
            }
        }
        out
    }
}

fn profile(levels: usize, center_frac: f32, width_frac: f32) -> Vec<f32> {
    let top = (levels.max(2) - 1) as f32;
    let center = center_frac * top;
    let width = (width_frac * levels as f32).max(1.0);
    (0..levels)
        .map(|l| {
            let z = (l as f32 - center) / width;
            (-z * z).exp()
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f32, f32)) -> f32 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Per-frame 2D ingredients shared by the three variables.
struct FrameMaps {
    /// max over storms of `peak·env·footprint`, before gain.
    storm_r: Vec<f32>,
    storm_w: Vec<f32>,
    storm_byc: Vec<f32>,
    noise_r: Vec<f32>,
    noise_w: Vec<f32>,
    noise_byc: Vec<f32>,
}

/// Generates one synthetic event. Pure function of `(grid, params)`.
pub fn synth_event(grid: &DomainGrid, params: &SynthParams) -> Result<EventSeries, GridError> {
    grid.validate()?;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let rows = grid.pixel_rows();
    let cols = grid.pixel_cols();
    let n_frames = params.n_frames;

    let n_storms = rng.gen_range(params.n_storms.0..=params.n_storms.1);
    let steer = rng.gen_range(0.0..std::f32::consts::TAU);
    let storms: Vec<Storm> = (0..n_storms)
        .map(|_| {
            let speed = uniform(&mut rng, params.advection_km_per_frame);
            let heading = steer + rng.gen_range(-0.6f32..0.6);
            let theta = rng.gen_range(0.0..std::f32::consts::PI);
            Storm {
                y0: rng.gen_range(0.0..rows as f32),
                x0: rng.gen_range(0.0..cols as f32),
                vy: speed * heading.sin(),
                vx: speed * heading.cos(),
                sigma_a: uniform(&mut rng, params.storm_scale_km),
                sigma_b: uniform(&mut rng, params.storm_scale_km),
                cos_t: theta.cos(),
                sin_t: theta.sin(),
                peak_dbz: rng.gen_range(42.0..55.0),
                w_peak: rng.gen_range(4.0..10.0),
                byc_peak: rng.gen_range(0.02..0.06),
                birth: rng.gen_range(-6.0..n_frames as f32),
                growth: uniform(&mut rng, params.growth_rate),
                hold: rng.gen_range(0.0..3.0),
                decay: uniform(&mut rng, params.decay_rate),
            }
        })
        .collect();

    let noise = |rng: &mut ChaCha8Rng| {
        let a = SmoothNoise::new(rng, rows, cols).render(rows, cols);
        let b = SmoothNoise::new(rng, rows, cols).render(rows, cols);
        (a, b)
    };
    let (r_a, r_b) = noise(&mut rng);
    let (w_a, w_b) = noise(&mut rng);
    let (b_a, b_b) = noise(&mut rng);
    let blend = |a: &[f32], b: &[f32], f: usize| -> Vec<f32> {
        let t = if n_frames > 1 {
            f as f32 / (n_frames - 1) as f32
        } else {
            0.0
        };
        a.iter().zip(b).map(|(x, y)| x * (1.0 - t) + y * t).collect()
    };

    let maps: Vec<FrameMaps> = (0..n_frames)
        .map(|f| {
            let ff = f as f32;
            let mut storm_r = vec![0.0f32; rows * cols];
            let mut storm_w = vec![0.0f32; rows * cols];
            let mut storm_byc = vec![0.0f32; rows * cols];
            for s in &storms {
                let now = s.envelope(ff);
                let next = s.envelope(ff + 1.0);
                s.splat(ff, 1.0, s.peak_dbz * now, rows, cols, &mut storm_r, |m, v| {
                    *m = m.max(v)
                });
                s.splat(ff, 0.8, s.w_peak * next, rows, cols, &mut storm_w, |m, v| {
                    *m += v
                });
                let drive = s.byc_peak * (next - now + 0.5 * next);
                s.splat(ff, 0.9, drive, rows, cols, &mut storm_byc, |m, v| *m += v);
            }
            FrameMaps {
                storm_r,
                storm_w,
                storm_byc,
                noise_r: blend(&r_a, &r_b, f),
                noise_w: blend(&w_a, &w_b, f),
                noise_byc: blend(&b_a, &b_b, f),
            }
        })
        .collect();

    let levels = grid.levels;
    let prof_r = profile(levels, 0.3, 0.35);
    let prof_w = profile(levels, 0.5, 0.3);
    let prof_byc = profile(levels, 0.15, 0.25);
    let bg_r = |noise: f32, l: usize| -> f32 {
        let fade = 1.0 - 0.5 * l as f32 / levels as f32;
        12.0 * noise * fade - 5.0
    };

    let gain = calibrate_gain(grid, params, &maps, &prof_r, &bg_r);

    let frames = maps
        .iter()
        .enumerate()
        .map(|(f, m)| {
            let ts = params.start_time + f as u64 * DEFAULT_CADENCE;
            let r = GriddedField::from_fn(Variable::R, ts, grid, |l, y, x| {
                let i = y * cols + x;
                (bg_r(m.noise_r[i], l) + gain * m.storm_r[i] * prof_r[l]).min(R_MAX_DBZ)
            });
            let w = GriddedField::from_fn(Variable::W, ts, grid, |l, y, x| {
                let i = y * cols + x;
                0.6 * (m.noise_w[i] - 0.5) + m.storm_w[i] * prof_w[l]
            });
            let byc = GriddedField::from_fn(Variable::Byc, ts, grid, |l, y, x| {
                let i = y * cols + x;
                0.004 * (m.noise_byc[i] - 0.5) + m.storm_byc[i] * prof_byc[l]
            });
            Frame { w, byc, r }
        })
        .collect();

    Ok(EventSeries {
        grid: *grid,
        cadence: DEFAULT_CADENCE,
        frames,
    })
}

/// Chooses the reflectivity gain that puts `target · cells` label-frame
/// cells strictly above the threshold.
fn calibrate_gain(
    grid: &DomainGrid,
    params: &SynthParams,
    maps: &[FrameMaps],
    prof_r: &[f32],
    bg_r: &impl Fn(f32, usize) -> f32,
) -> f32 {
    let cols = grid.pixel_cols();
    let side = grid.pixels_per_cell_side;
    // frames that serve as +30 min verification for some eligible issue time
    let label_frames: Vec<usize> = if maps.len() >= LABEL_LEAD_FRAMES + 2 {
        (LABEL_LEAD_FRAMES + 1..maps.len()).collect()
    } else {
        (0..maps.len()).collect()
    };

    // minimal gain at which each cell crosses the threshold
    let mut cell_gain = Vec::with_capacity(label_frames.len() * grid.n_cells());
    for &f in &label_frames {
        let m = &maps[f];
        for cr in 0..grid.cell_rows {
            for cc in 0..grid.cell_cols {
                let mut best = f64::INFINITY;
                for y in cr * side..(cr + 1) * side {
                    for x in cc * side..(cc + 1) * side {
                        let i = y * cols + x;
                        let s = m.storm_r[i] as f64;
                        for (l, &p) in prof_r.iter().enumerate() {
                            let lift = s * p as f64;
                            let gap = LABEL_THRESHOLD_DBZ as f64 - bg_r(m.noise_r[i], l) as f64;
                            if gap < 0.0 {
                                best = 0.0;
                            } else if lift > 0.0 {
                                best = best.min(gap / lift);
                            }
                        }
                    }
                }
                cell_gain.push(best);
            }
        }
    }
    cell_gain.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let want = (params.target_positive_fraction * cell_gain.len() as f64).round() as usize;
    let gain = if want == 0 {
        GAIN_RANGE.0
    } else if want >= cell_gain.len() {
        GAIN_RANGE.1
    } else {
        let lo = cell_gain[want - 1];
        let hi = cell_gain[want];
        if hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo * 1.01 + 1e-6
        } else {
            GAIN_RANGE.1
        }
    };
    gain.clamp(GAIN_RANGE.0, GAIN_RANGE.1) as f32
}
