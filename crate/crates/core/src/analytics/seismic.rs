//! STA/LTA event detection and S-P epicenter location on a planar km grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metamodel::canonical::decimal_f64;
use crate::metamodel::Timestamp;
use crate::scalar::Scalar;

pub const DEFAULT_VP_KM_S: f64 = 6.0;
pub const DEFAULT_VS_KM_S: f64 = 3.5;
pub const MAX_ITERATIONS: usize = 100;
pub const STEP_TOLERANCE_KM: f64 = 1e-6;
/// Cells per side of the coarse search that seeds the second solver start.
const GRID_CELLS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaLtaParams<T> {
    pub sta_s: T,
    pub lta_s: T,
    pub on_ratio: T,
    pub off_ratio: T,
}

impl StaLtaParams<f64> {
    pub fn standard() -> Self {
        StaLtaParams {
            sta_s: 1.0,
            lta_s: 10.0,
            on_ratio: 3.0,
            off_ratio: 1.5,
        }
    }
}

/// Inclusive sample range `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerInterval {
    pub start: usize,
    pub end: usize,
}

impl TriggerInterval {
    pub fn contains(&self, sample: usize) -> bool {
        self.start <= sample && sample <= self.end
    }
}

fn window<T: Scalar>(seconds: T, rate_hz: T) -> usize {
    (seconds * rate_hz).round().to_usize().unwrap_or(0).max(1)
}

/// Ratio of trailing short-term to long-term mean absolute amplitude.
/// A trigger opens at the first sample whose ratio exceeds `on_ratio` and
/// closes before the first sample whose ratio drops below `off_ratio`.
/// Each interval starts at the first sample of the short window that
/// opened it, so it covers the onset that raised the ratio.
pub fn sta_lta_detect<T: Scalar>(samples: &[T], rate_hz: T, params: &StaLtaParams<T>) -> Result<Vec<TriggerInterval>> {
    let p = params;
    if !(p.sta_s > T::zero() && p.lta_s > p.sta_s) {
        return Err(Error::InvalidArgument("need lta_s > sta_s > 0".into()));
    }
    if !(p.on_ratio > T::zero() && p.off_ratio <= p.on_ratio) {
        return Err(Error::InvalidArgument("need on_ratio > 0 and off_ratio <= on_ratio".into()));
    }
    if !(rate_hz > T::zero()) {
        return Err(Error::InvalidArgument("sample rate must be positive".into()));
    }
    let (ns, nl) = (window(p.sta_s, rate_hz), window(p.lta_s, rate_hz));
    if nl > samples.len() {
        return Err(Error::WindowTooLong {
            window: nl,
            len: samples.len(),
        });
    }
    let mut prefix = Vec::with_capacity(samples.len() + 1);
    prefix.push(T::zero());
    for x in samples {
        let last = *prefix.last().expect("non-empty");
        prefix.push(last + x.abs());
    }
    let mean_abs = |end: usize, n: usize| (prefix[end + 1] - prefix[end + 1 - n]) / T::of_usize(n);
    let mut out: Vec<TriggerInterval> = Vec::new();
    let mut open: Option<usize> = None;
    for i in nl - 1..samples.len() {
        let lta = mean_abs(i, nl);
        let ratio = if lta > T::zero() { mean_abs(i, ns) / lta } else { T::zero() };
        match open {
            None if ratio > p.on_ratio => {
                let floor = out.last().map_or(0, |t| t.end + 1);
                open = Some((i + 1 - ns).max(floor));
            }
            Some(start) if ratio < p.off_ratio => {
                out.push(TriggerInterval { start, end: i - 1 });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        out.push(TriggerInterval {
            start,
            end: samples.len() - 1,
        });
    }
    Ok(out)
}

/// P and S arrivals picked at one station.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePick {
    pub station_id: String,
    #[serde(with = "decimal_f64")]
    pub x_km: f64,
    #[serde(with = "decimal_f64")]
    pub y_km: f64,
    pub p_arrival: Timestamp,
    pub s_arrival: Timestamp,
    pub picker: String,
}

impl PhasePick {
    pub fn s_minus_p(&self) -> f64 {
        (self.s_arrival - self.p_arrival).num_microseconds().unwrap_or(0) as f64 / 1e6
    }

    pub fn observation<T: Scalar>(&self) -> StationObservation<T> {
        StationObservation {
            station_id: self.station_id.clone(),
            x_km: T::of(self.x_km),
            y_km: T::of(self.y_km),
            s_minus_p_s: T::of(self.s_minus_p()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationObservation<T> {
    pub station_id: String,
    pub x_km: T,
    pub y_km: T,
    pub s_minus_p_s: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationDistance<T> {
    pub station_id: String,
    pub distance_km: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpicenterSolution<T> {
    pub x_km: T,
    pub y_km: T,
    pub residual_rms_km: T,
    pub station_count: usize,
    /// S-P distances the solution was fitted to.
    pub distances: Vec<StationDistance<T>>,
    pub iterations: usize,
    /// Stations lie on a line; the solution is one of two mirror images.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

/// `d = dt * vp * vs / (vp - vs)`.
pub fn sp_distance<T: Scalar>(dt: T, vp: T, vs: T) -> T {
    dt * vp * vs / (vp - vs)
}

fn cost<T: Scalar>(x: T, y: T, st: &[(T, T, T)]) -> T {
    st.iter()
        .map(|(sx, sy, d)| {
            let r = ((x - *sx).powi(2) + (y - *sy).powi(2)).sqrt() - *d;
            r * r
        })
        .sum()
}

/// Gauss-Newton on the circle residuals; returns the point and the
/// iteration count.
fn gauss_newton<T: Scalar>(mut x: T, mut y: T, st: &[(T, T, T)]) -> (T, T, usize) {
    let tol = T::of(STEP_TOLERANCE_KM);
    let tiny = T::of(1e-12);
    for it in 1..=MAX_ITERATIONS {
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
        for (sx, sy, d) in st {
            let (dx, dy) = (x - *sx, y - *sy);
            let norm = (dx * dx + dy * dy).sqrt();
            if norm < tiny {
                continue;
            }
            let (jx, jy) = (dx / norm, dy / norm);
            let r = norm - *d;
            a11 += jx * jx;
            a12 += jx * jy;
            a22 += jy * jy;
            g1 += jx * r;
            g2 += jy * r;
        }
        let det = a11 * a22 - a12 * a12;
        if det.abs() < tiny {
            return (x, y, it);
        }
        let sx = -(a22 * g1 - a12 * g2) / det;
        let sy = -(a11 * g2 - a12 * g1) / det;
        x += sx;
        y += sy;
        if (sx * sx + sy * sy).sqrt() < tol {
            return (x, y, it);
        }
    }
    (x, y, MAX_ITERATIONS)
}

fn collinear<T: Scalar>(st: &[(T, T, T)]) -> bool {
    let n = T::of_usize(st.len());
    let mx = st.iter().map(|s| s.0).sum::<T>() / n;
    let my = st.iter().map(|s| s.1).sum::<T>() / n;
    let (mut cxx, mut cxy, mut cyy) = (T::zero(), T::zero(), T::zero());
    for (x, y, _) in st {
        cxx += (*x - mx) * (*x - mx);
        cxy += (*x - mx) * (*y - my);
        cyy += (*y - my) * (*y - my);
    }
    let trace = cxx + cyy;
    let det = cxx * cyy - cxy * cxy;
    // smallest eigenvalue relative to the spread
    trace == T::zero() || det <= T::of(1e-9) * trace * trace
}

/// Least-squares epicenter from S-P distances. The solver starts from the
/// station centroid and again from the best cell of a coarse grid over the
/// station box widened by the largest distance; the lower-cost result wins.
pub fn locate_epicenter<T: Scalar>(obs: &[StationObservation<T>], vp: T, vs: T) -> Result<EpicenterSolution<T>> {
    if obs.len() < 3 {
        return Err(Error::Underdetermined(obs.len()));
    }
    if !(vs > T::zero() && vp > vs) {
        return Err(Error::InvalidArgument("need vp > vs > 0".into()));
    }
    if let Some(o) = obs.iter().find(|o| !(o.s_minus_p_s > T::zero())) {
        return Err(Error::InvalidArgument(format!("station {} has s_arrival <= p_arrival", o.station_id)));
    }
    let st: Vec<(T, T, T)> = obs
        .iter()
        .map(|o| (o.x_km, o.y_km, sp_distance(o.s_minus_p_s, vp, vs)))
        .collect();
    let n = T::of_usize(st.len());
    let cx = st.iter().map(|s| s.0).sum::<T>() / n;
    let cy = st.iter().map(|s| s.1).sum::<T>() / n;
    let first = gauss_newton(cx, cy, &st);

    let reach = st.iter().map(|s| s.2).fold(T::zero(), T::max);
    let lo_x = st.iter().map(|s| s.0).fold(T::infinity(), T::min) - reach;
    let hi_x = st.iter().map(|s| s.0).fold(T::neg_infinity(), T::max) + reach;
    let lo_y = st.iter().map(|s| s.1).fold(T::infinity(), T::min) - reach;
    let hi_y = st.iter().map(|s| s.1).fold(T::neg_infinity(), T::max) + reach;
    let cells = T::of_usize(GRID_CELLS);
    let mut best = (T::infinity(), cx, cy);
    for i in 0..=GRID_CELLS {
        for j in 0..=GRID_CELLS {
            let gx = lo_x + (hi_x - lo_x) * T::of_usize(i) / cells;
            let gy = lo_y + (hi_y - lo_y) * T::of_usize(j) / cells;
            let c = cost(gx, gy, &st);
            if c < best.0 {
                best = (c, gx, gy);
            }
        }
    }
    let second = gauss_newton(best.1, best.2, &st);
    let (x, y, iterations) = if cost(second.0, second.1, &st) < cost(first.0, first.1, &st) {
        second
    } else {
        first
    };

    let degenerate = collinear(&st);
    let mut warnings = Vec::new();
    if degenerate {
        warnings.push("stations are collinear; the epicenter is ambiguous across the station line".to_string());
    }
    Ok(EpicenterSolution {
        x_km: x,
        y_km: y,
        residual_rms_km: (cost(x, y, &st) / n).sqrt(),
        station_count: st.len(),
        distances: obs
            .iter()
            .zip(&st)
            .map(|(o, s)| StationDistance {
                station_id: o.station_id.clone(),
                distance_km: s.2,
            })
            .collect(),
        iterations,
        degenerate,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn forward(event: (f64, f64), stations: &[(f64, f64)]) -> Vec<StationObservation<f64>> {
        let k = DEFAULT_VP_KM_S * DEFAULT_VS_KM_S / (DEFAULT_VP_KM_S - DEFAULT_VS_KM_S);
        stations
            .iter()
            .enumerate()
            .map(|(i, (x, y))| StationObservation {
                station_id: format!("ST{i}"),
                x_km: *x,
                y_km: *y,
                s_minus_p_s: ((event.0 - x).powi(2) + (event.1 - y).powi(2)).sqrt() / k,
            })
            .collect()
    }

    /// 1-km grid minimiser of the same objective, used as an oracle.
    fn grid_oracle(obs: &[StationObservation<f64>]) -> (f64, f64) {
        let st: Vec<(f64, f64, f64)> = obs
            .iter()
            .map(|o| (o.x_km, o.y_km, sp_distance(o.s_minus_p_s, DEFAULT_VP_KM_S, DEFAULT_VS_KM_S)))
            .collect();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in -100..=200 {
            for j in -100..=200 {
                let c = cost(i as f64, j as f64, &st);
                if c < best.0 {
                    best = (c, i as f64, j as f64);
                }
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn distance_formula() {
        assert!((sp_distance(10.0f64, 6.0, 3.5) - 84.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_synthetic_event() {
        let obs = forward((30.0, 40.0), &[(0.0, 0.0), (100.0, 0.0), (0.0, 100.0)]);
        let s = locate_epicenter(&obs, DEFAULT_VP_KM_S, DEFAULT_VS_KM_S).unwrap();
        assert!((s.x_km - 30.0).abs() < 1e-3 && (s.y_km - 40.0).abs() < 1e-3);
        assert!(s.residual_rms_km < 1e-6);
        assert!(!s.degenerate);
        assert_eq!(grid_oracle(&obs), (30.0, 40.0));
        let f: EpicenterSolution<f32> = locate_epicenter(
            &obs.iter()
                .map(|o| StationObservation {
                    station_id: o.station_id.clone(),
                    x_km: o.x_km as f32,
                    y_km: o.y_km as f32,
                    s_minus_p_s: o.s_minus_p_s as f32,
                })
                .collect::<Vec<_>>(),
            6.0,
            3.5,
        )
        .unwrap();
        assert!((f.x_km - 30.0).abs() < 1e-2);
    }

    #[test]
    fn too_few_and_collinear() {
        let obs = forward((30.0, 40.0), &[(0.0, 0.0), (100.0, 0.0)]);
        assert!(matches!(locate_epicenter(&obs, 6.0, 3.5), Err(Error::Underdetermined(2))));
        let line = forward((30.0, 40.0), &[(0.0, 0.0), (50.0, 0.0), (100.0, 0.0)]);
        let s = locate_epicenter(&line, 6.0, 3.5).unwrap();
        assert!(s.degenerate);
        assert!((s.x_km - 30.0).abs() < 1e-3 && (s.y_km.abs() - 40.0).abs() < 1e-3);
    }

    #[test]
    fn sta_lta_burst() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut samples: Vec<f64> = (0..8000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let quiet = sta_lta_detect(&samples, 100.0, &StaLtaParams::standard()).unwrap();
        assert!(quiet.is_empty());
        for (k, s) in samples[5000..5200].iter_mut().enumerate() {
            *s *= 25.0 * (-(k as f64) / 80.0).exp() + 1.0;
        }
        let hits = sta_lta_detect(&samples, 100.0, &StaLtaParams::standard()).unwrap();
        assert_eq!(hits.len(), 1);
        assert!(hits[0].contains(5000));
        let long = StaLtaParams { lta_s: 100.0, ..StaLtaParams::standard() };
        assert!(matches!(sta_lta_detect(&samples, 100.0, &long), Err(Error::WindowTooLong { window: 10000, len: 8000 })));
    }

    proptest::proptest! {
        #[test]
        fn recovers_any_interior_event(ex in 5.0f64..95.0, ey in 5.0f64..95.0) {
            let obs = forward((ex, ey), &[(0.0, 0.0), (100.0, 10.0), (20.0, 100.0), (90.0, 90.0)]);
            let s = locate_epicenter(&obs, DEFAULT_VP_KM_S, DEFAULT_VS_KM_S).unwrap();
            proptest::prop_assert!((s.x_km - ex).abs() < 1e-3 && (s.y_km - ey).abs() < 1e-3);
            let (gx, gy) = grid_oracle(&obs);
            // the grid minimiser sits on a node adjacent to the true optimum
            proptest::prop_assert!((s.x_km - gx).abs() <= 1.0 && (s.y_km - gy).abs() <= 1.0);
        }

        #[test]
        fn intervals_disjoint_and_ordered(
            raw in proptest::collection::vec(-1.0f64..1.0, 400..900),
            bursts in proptest::collection::vec((0usize..800, 1.0f64..40.0), 0..4),
        ) {
            let mut samples = raw;
            let len = samples.len();
            for (at, gain) in bursts {
                for s in samples.iter_mut().skip(at % len).take(30) {
                    *s *= gain;
                }
            }
            let params = StaLtaParams { sta_s: 0.2, lta_s: 2.0, on_ratio: 2.0, off_ratio: 1.2 };
            let hits = sta_lta_detect(&samples, 100.0, &params).unwrap();
            for t in &hits {
                proptest::prop_assert!(t.start <= t.end && t.end < len);
            }
            for w in hits.windows(2) {
                proptest::prop_assert!(w[0].end < w[1].start);
            }
        }
    }
}
