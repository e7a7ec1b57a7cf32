//! Clustered geometric multipath channels on a planar array.
//!
//! Each source (UE or interferer) is a cluster of `L` plane-wave paths with
//! Laplacian angular spread around a uniformly drawn sector direction, an
//! exponential power-delay profile and complex Gaussian gains. Channels are a
//! deterministic function of the path set and the time offset, so evolving a
//! drop only rotates Doppler phases and drifts angles.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flops;
use crate::linalg::{ComplexMatrix, HermitianPsd};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayGeometry {
    pub nx: usize,
    pub ny: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
}

impl ArrayGeometry {
    pub fn new(nx: usize, ny: usize) -> Self {
        Self { nx, ny, spacing: 0.5 }
    }

    pub fn n_rx(&self) -> usize {
        self.nx * self.ny
    }
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::new(8, 8)
    }
}

/// Scenario knobs. Defaults are the desk-scale evaluation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: ArrayGeometry,
    pub carrier_hz: f64,
    pub n_ue: usize,
    pub streams_per_ue: usize,
    pub n_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    /// Per-UE post-beamforming (matched-filter) SNR range in dB; each UE draws uniformly.
    pub ue_snr_range_db: (f64, f64),
    pub interferer: bool,
    /// Per-antenna interference-to-noise ratio in dB.
    pub interferer_inr_db: f64,
    pub paths_per_source: usize,
    pub interferer_paths: usize,
    pub angle_spread_deg: f64,
    /// Cluster centres are drawn in azimuth from `[-sector, sector]`.
    pub sector_half_width_deg: f64,
    /// ... and in elevation from `[-elevation, elevation]`.
    pub elevation_half_width_deg: f64,
    pub delay_spread_ns: f64,
    pub t_lt_ms: f64,
    /// Default is pedestrian, 3 km/h.
    pub ue_speed_mps: f64,
    pub angle_drift_deg_per_s: f64,
    pub n_srs: usize,
    pub null_frames: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            geometry: ArrayGeometry::default(),
            carrier_hz: 3.5e9,
            n_ue: 4,
            streams_per_ue: 1,
            n_subcarriers: 32,
            subcarrier_spacing_hz: 360e3,
            ue_snr_range_db: (-6.0, 14.0),
            interferer: true,
            interferer_inr_db: 30.0,
            paths_per_source: 4,
            interferer_paths: 3,
            angle_spread_deg: 5.0,
            sector_half_width_deg: 60.0,
            elevation_half_width_deg: 15.0,
            delay_spread_ns: 300.0,
            t_lt_ms: 10.0,
            ue_speed_mps: 3.0 / 3.6,
            angle_drift_deg_per_s: 0.1,
            n_srs: 16,
            null_frames: 100,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn n_rx(&self) -> usize {
        self.geometry.n_rx()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let g = &self.geometry;
        if g.n_rx() == 0 || !(g.spacing > 0.0) {
            return bad(format!("invalid array {}x{} spacing {}", g.nx, g.ny, g.spacing));
        }
        if self.n_ue == 0 || self.streams_per_ue == 0 || self.paths_per_source == 0 {
            return bad("n_ue, streams_per_ue and paths_per_source must be at least 1".into());
        }
        let interferer_rank = if self.interferer { self.interferer_paths } else { 0 };
        if self.interferer && self.interferer_paths == 0 {
            return bad("interferer_paths must be at least 1".into());
        }
        if self.n_ue * self.streams_per_ue + interferer_rank >= g.n_rx() {
            return bad(format!(
                "{} UE streams plus interferer rank {} must stay below {} antennas",
                self.n_ue * self.streams_per_ue,
                interferer_rank,
                g.n_rx()
            ));
        }
        if self.ue_snr_range_db.0 > self.ue_snr_range_db.1 {
            return bad("ue_snr_range_db must be ordered".into());
        }
        if self.n_subcarriers == 0 || self.n_srs == 0 || self.n_srs > self.n_subcarriers {
            return bad(format!("need 1 <= n_srs ({}) <= n_subcarriers ({})", self.n_srs, self.n_subcarriers));
        }
        if self.null_frames == 0 {
            return bad("null_frames must be at least 1".into());
        }
        let nonneg = [self.subcarrier_spacing_hz, self.carrier_hz, self.delay_spread_ns, self.t_lt_ms, self.ue_speed_mps];
        if nonneg.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || self.carrier_hz == 0.0 {
            return bad("frequencies, delays, times and speeds must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Subcarrier indices carrying SRS, evenly spread over the band.
    pub fn srs_subcarriers(&self) -> Vec<usize> {
        (0..self.n_srs).map(|k| k * self.n_subcarriers / self.n_srs).collect()
    }
}

/// Array response toward azimuth `az` and elevation `el` (radians).
///
/// Element `(p, q)` sits at index `p * ny + q` with phase
/// `2π·spacing·(p·sin(az)cos(el) + q·sin(el))`.
pub fn steering_vector(geometry: &ArrayGeometry, az: f64, el: f64) -> Vec<Complex64> {
    let u = az.sin() * el.cos();
    let v = el.sin();
    let k = 2.0 * PI * geometry.spacing;
    let mut out = Vec::with_capacity(geometry.n_rx());
    for p in 0..geometry.nx {
        for q in 0..geometry.ny {
            out.push(Complex64::from_polar(1.0, k * (p as f64 * u + q as f64 * v)));
        }
    }
    out
}

/// One plane-wave path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub azimuth: f64,
    pub elevation: f64,
    pub delay_s: f64,
    pub doppler_hz: f64,
    /// Azimuth drift in rad/s.
    pub drift_rad_per_s: f64,
    /// Complex gain per stream.
    pub gains: Vec<Complex64>,
}

/// Path set of one transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePaths {
    pub streams: usize,
    pub paths: Vec<Path>,
}

impl SourcePaths {
    /// `H[n]` at time offset `t_s`: an `n_rx x streams` matrix per subcarrier.
    pub fn channels(&self, geometry: &ArrayGeometry, subcarrier_hz: &[f64], t_s: f64) -> Vec<ComplexMatrix> {
        let n = geometry.n_rx();
        let mut out = vec![ComplexMatrix::zeros(n, self.streams); subcarrier_hz.len()];
        for path in &self.paths {
            let az = path.azimuth + path.drift_rad_per_s * t_s;
            let a = steering_vector(geometry, az, path.elevation);
            let doppler = Complex64::from_polar(1.0, 2.0 * PI * path.doppler_hz * t_s);
            for (h, &f) in out.iter_mut().zip(subcarrier_hz) {
                let delay = Complex64::from_polar(1.0, -2.0 * PI * f * path.delay_s) * doppler;
                for (s, &g) in path.gains.iter().enumerate() {
                    let w = g * delay;
                    for (i, &ai) in a.iter().enumerate() {
                        h[(i, s)] += ai * w;
                    }
                }
            }
        }
        out
    }

    /// Serializes as one blob: row per path with `[az, el, delay, doppler, drift, gains...]`.
    fn to_matrix(&self) -> ComplexMatrix {
        let cols = 5 + self.streams;
        ComplexMatrix::from_fn(self.paths.len(), cols, |l, j| {
            let p = &self.paths[l];
            let r = |x: f64| Complex64::new(x, 0.0);
            match j {
                0 => r(p.azimuth),
                1 => r(p.elevation),
                2 => r(p.delay_s),
                3 => r(p.doppler_hz),
                4 => r(p.drift_rad_per_s),
                _ => p.gains[j - 5],
            }
        })
    }

    fn from_matrix(m: &ComplexMatrix) -> Result<Self> {
        if m.cols() < 6 {
            return Err(Error::Format(format!("path blob has {} columns", m.cols())));
        }
        let paths = (0..m.rows())
            .map(|l| Path {
                azimuth: m[(l, 0)].re,
                elevation: m[(l, 1)].re,
                delay_s: m[(l, 2)].re,
                doppler_hz: m[(l, 3)].re,
                drift_rad_per_s: m[(l, 4)].re,
                gains: m.row(l)[5..].to_vec(),
            })
            .collect();
        Ok(Self { streams: m.cols() - 5, paths })
    }
}

/// One Monte Carlo realization at a given time offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDrop {
    pub index: u64,
    /// Seed of this drop's private RNG stream.
    pub seed: u64,
    pub time_ms: f64,
    pub geometry: ArrayGeometry,
    /// Baseband frequency of each evaluated subcarrier.
    pub subcarrier_hz: Vec<f64>,
    pub srs_subcarriers: Vec<usize>,
    pub ues: Vec<SourcePaths>,
    pub interferer: Option<SourcePaths>,
    /// Per-UE transmit energy per stream relative to unit noise.
    pub ue_alpha: Vec<f64>,
    /// Interferer symbol energy relative to unit noise.
    pub interferer_alpha: f64,
    /// `[ue][subcarrier]`, each `n_rx x streams`.
    pub ue_channels: Vec<Vec<ComplexMatrix>>,
    /// `[subcarrier]`, each `n_rx x 1`.
    pub interferer_channels: Vec<ComplexMatrix>,
    pub noise_var: f64,
}

/// SplitMix64 finalizer used to derive independent per-drop seeds.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn complex_gaussian<R: Rng>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

fn laplacian<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

fn draw_source<R: Rng>(rng: &mut R, cfg: &ScenarioConfig, n_paths: usize, streams: usize, speed: f64) -> SourcePaths {
    let sector = cfg.sector_half_width_deg.to_radians();
    let elev = cfg.elevation_half_width_deg.to_radians();
    let spread = cfg.angle_spread_deg.to_radians();
    let center_az = rng.random_range(-sector..=sector);
    let center_el = rng.random_range(-elev..=elev);
    let heading = rng.random_range(0.0..2.0 * PI);
    let lim = PI / 2.0;
    let tau = cfg.delay_spread_ns * 1e-9;

    let mut raw: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(n_paths);
    for l in 0..n_paths {
        let az = (center_az + laplacian(rng, spread)).clamp(-lim, lim);
        let el = (center_el + laplacian(rng, spread)).clamp(-lim, lim);
        let delay = if l == 0 || tau == 0.0 { 0.0 } else { -tau * (1.0 - rng.random::<f64>()).ln() };
        let power = if tau == 0.0 { 1.0 } else { (-delay / tau).exp() };
        raw.push((az, el, delay, power));
    }
    let total: f64 = raw.iter().map(|r| r.3).sum();
    let drift_rate = if speed > 0.0 { cfg.angle_drift_deg_per_s.to_radians() } else { 0.0 };
    let paths = raw
        .into_iter()
        .map(|(az, el, delay, power)| {
            let gains = (0..streams).map(|_| complex_gaussian(rng, power / total)).collect();
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            Path {
                azimuth: az,
                elevation: el,
                delay_s: delay,
                doppler_hz: speed / cfg.wavelength_m() * (az - heading).cos() * el.cos(),
                drift_rad_per_s: sign * drift_rate,
                gains,
            }
        })
        .collect();
    SourcePaths { streams, paths }
}

/// Draws drop `drop_index` of the scenario at the design instant (`t = 0`).
///
/// UE energies are set so each UE's matched-filter SNR, averaged over the SRS
/// subcarriers, equals its drawn target.
pub fn generate_drop(cfg: &ScenarioConfig, drop_index: u64) -> Result<ChannelDrop> {
    cfg.validate()?;
    let seed = mix_seed(cfg.seed, drop_index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subcarrier_hz: Vec<f64> = (0..cfg.n_subcarriers).map(|n| n as f64 * cfg.subcarrier_spacing_hz).collect();

    let mut ues = Vec::with_capacity(cfg.n_ue);
    let mut snr_db = Vec::with_capacity(cfg.n_ue);
    for _ in 0..cfg.n_ue {
        let (lo, hi) = cfg.ue_snr_range_db;
        snr_db.push(if hi > lo { rng.random_range(lo..=hi) } else { lo });
        ues.push(draw_source(&mut rng, cfg, cfg.paths_per_source, cfg.streams_per_ue, cfg.ue_speed_mps));
    }
    let interferer = cfg.interferer.then(|| draw_source(&mut rng, cfg, cfg.interferer_paths, 1, 0.0));

    let mut drop = ChannelDrop {
        index: drop_index,
        seed,
        time_ms: 0.0,
        geometry: cfg.geometry,
        subcarrier_hz,
        srs_subcarriers: cfg.srs_subcarriers(),
        ues,
        interferer,
        ue_alpha: vec![1.0; cfg.n_ue],
        interferer_alpha: if cfg.interferer { 10f64.powf(cfg.interferer_inr_db / 10.0) } else { 0.0 },
        ue_channels: Vec::new(),
        interferer_channels: Vec::new(),
        noise_var: 1.0,
    };
    drop.refresh_channels();
    for (i, db) in snr_db.iter().enumerate() {
        let per_stream: f64 = drop
            .srs_subcarriers
            .iter()
            .map(|&n| drop.ue_channels[i][n].frobenius_norm().powi(2))
            .sum::<f64>()
            / (drop.srs_subcarriers.len() * cfg.streams_per_ue) as f64;
        drop.ue_alpha[i] = 10f64.powf(db / 10.0) / per_stream.max(f64::MIN_POSITIVE);
    }
    Ok(drop)
}

impl ChannelDrop {
    pub fn n_rx(&self) -> usize {
        self.geometry.n_rx()
    }

    pub fn n_ue(&self) -> usize {
        self.ues.len()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.subcarrier_hz.len()
    }

    fn refresh_channels(&mut self) {
        let t = self.time_ms * 1e-3;
        self.ue_channels = self.ues.iter().map(|s| s.channels(&self.geometry, &self.subcarrier_hz, t)).collect();
        self.interferer_channels =
            self.interferer.as_ref().map(|s| s.channels(&self.geometry, &self.subcarrier_hz, t)).unwrap_or_default();
    }

    /// Advances the drop by `dt_ms`: Doppler phase rotation and angle drift per path.
    pub fn evolve(&self, dt_ms: f64) -> Result<ChannelDrop> {
        if !(dt_ms >= 0.0) {
            return Err(Error::Invalid(format!("negative time step {dt_ms}")));
        }
        let mut next = self.clone();
        if dt_ms > 0.0 {
            next.time_ms += dt_ms;
            next.refresh_channels();
        }
        Ok(next)
    }

    /// SRS covariance estimate of UE `ue`.
    pub fn srs_covariance(&self, ue: usize) -> Result<HermitianPsd> {
        let chans: Vec<&ComplexMatrix> = self.srs_subcarriers.iter().map(|&n| &self.ue_channels[ue][n]).collect();
        srs_covariance(&chans)
    }

    /// Serializes the path sets and energies as a sequence of matrix blobs:
    /// a `1 x 6` header, the UE energies, one path blob per UE and, when
    /// present, the interferer's path blob.
    pub fn write_blobs<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        use crate::linalg::io::write_blob;
        let r = |x: f64| Complex64::new(x, 0.0);
        let header = [
            r(self.index as f64),
            Complex64::new(f64::from_bits(self.seed), 0.0),
            r(self.time_ms),
            r(self.interferer_alpha),
            r(self.noise_var),
            r(if self.interferer.is_some() { 1.0 } else { 0.0 }),
        ];
        write_blob(w, &ComplexMatrix::from_vec(1, header.len(), header.to_vec())?)?;
        let geo = [r(self.geometry.nx as f64), r(self.geometry.ny as f64), r(self.geometry.spacing)];
        write_blob(w, &ComplexMatrix::from_vec(1, 3, geo.to_vec())?)?;
        let sc: Vec<Complex64> = self.subcarrier_hz.iter().map(|&f| r(f)).collect();
        write_blob(w, &ComplexMatrix::from_vec(1, sc.len(), sc)?)?;
        let srs: Vec<Complex64> = self.srs_subcarriers.iter().map(|&n| r(n as f64)).collect();
        write_blob(w, &ComplexMatrix::from_vec(1, srs.len(), srs)?)?;
        let alpha: Vec<Complex64> = self.ue_alpha.iter().map(|&a| r(a)).collect();
        write_blob(w, &ComplexMatrix::from_vec(1, alpha.len(), alpha)?)?;
        for ue in &self.ues {
            write_blob(w, &ue.to_matrix())?;
        }
        if let Some(v) = &self.interferer {
            write_blob(w, &v.to_matrix())?;
        }
        Ok(())
    }

    pub fn read_blobs<R: std::io::Read>(r: &mut R) -> Result<ChannelDrop> {
        use crate::linalg::io::read_blob;
        let header = read_blob(r)?;
        let geo = read_blob(r)?;
        let sc = read_blob(r)?;
        let srs = read_blob(r)?;
        let alpha = read_blob(r)?;
        if header.cols() != 6 || geo.cols() != 3 {
            return Err(Error::Format("bad drop header".into()));
        }
        let ue_alpha: Vec<f64> = alpha.data().iter().map(|z| z.re).collect();
        let ues = (0..ue_alpha.len()).map(|_| SourcePaths::from_matrix(&read_blob(r)?)).collect::<Result<Vec<_>>>()?;
        let interferer = if header[(0, 5)].re != 0.0 { Some(SourcePaths::from_matrix(&read_blob(r)?)?) } else { None };
        let mut drop = ChannelDrop {
            index: header[(0, 0)].re as u64,
            seed: header[(0, 1)].re.to_bits(),
            time_ms: header[(0, 2)].re,
            geometry: ArrayGeometry { nx: geo[(0, 0)].re as usize, ny: geo[(0, 1)].re as usize, spacing: geo[(0, 2)].re },
            subcarrier_hz: sc.data().iter().map(|z| z.re).collect(),
            srs_subcarriers: srs.data().iter().map(|z| z.re as usize).collect(),
            ues,
            interferer,
            ue_alpha,
            interferer_alpha: header[(0, 3)].re,
            ue_channels: Vec::new(),
            interferer_channels: Vec::new(),
            noise_var: header[(0, 4)].re,
        };
        drop.refresh_channels();
        Ok(drop)
    }
}

/// `(1/N) Σ_n H[n] H[n]^H` over the given per-subcarrier channels.
pub fn srs_covariance(channels: &[&ComplexMatrix]) -> Result<HermitianPsd> {
    let first = channels.first().ok_or_else(|| Error::Invalid("no SRS channels".into()))?;
    let n = first.rows();
    let mut acc = ComplexMatrix::zeros(n, n);
    for h in channels {
        if h.rows() != n {
            return Err(Error::Dimension(format!("SRS channel with {} rows, expected {n}", h.rows())));
        }
        flops::add((n * n * h.cols()) as u64);
        for i in 0..n {
            for j in 0..n {
                let mut s = Complex64::new(0.0, 0.0);
                for s_ in 0..h.cols() {
                    s += h[(i, s_)] * h[(j, s_)].conj();
                }
                acc[(i, j)] += s;
            }
        }
    }
    HermitianPsd::symmetrized(&acc.scaled(1.0 / channels.len() as f64))
}

/// How the interferer covariance is formed from null frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullFrames {
    /// Expectation over symbols and noise: `α_v · mean_n h_v[n] h_v[n]^H + σ² I`.
    Analytic,
    /// Sample average over this many null frames on every subcarrier.
    Sampled(usize),
}

/// Non-coherent interferer covariance `E[v v^H]` with `v = h_v x_v + w`.
/// The noise contribution is kept.
pub fn noncoherent_interference_covariance(drop: &ChannelDrop, frames: NullFrames) -> Result<HermitianPsd> {
    if drop.interferer.is_none() {
        return Err(Error::Invalid("drop has no interferer".into()));
    }
    let n = drop.n_rx();
    let amp = drop.interferer_alpha.sqrt();
    let mut acc = ComplexMatrix::zeros(n, n);
    let k = match frames {
        NullFrames::Analytic => {
            for h in &drop.interferer_channels {
                add_outer(&mut acc, h.data(), drop.interferer_alpha);
            }
            let m = drop.interferer_channels.len() as f64;
            let mut out = acc.scaled(1.0 / m);
            for i in 0..n {
                out[(i, i)] += drop.noise_var;
            }
            return HermitianPsd::symmetrized(&out);
        }
        NullFrames::Sampled(0) => return Err(Error::Invalid("need at least one null frame".into())),
        NullFrames::Sampled(k) => k,
    };
    let samples = k * drop.interferer_channels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(drop.seed, 0x6e75_6c6c));
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..k {
        for h in &drop.interferer_channels {
            let x = complex_gaussian(&mut rng, 1.0) * amp;
            for (vi, &hi) in v.iter_mut().zip(h.data()) {
                *vi = hi * x + complex_gaussian(&mut rng, drop.noise_var);
            }
            add_outer(&mut acc, &v, 1.0);
        }
    }
    HermitianPsd::symmetrized(&acc.scaled(1.0 / samples as f64))
}

fn add_outer(acc: &mut ComplexMatrix, v: &[Complex64], w: f64) {
    let n = v.len();
    flops::add((n * n) as u64);
    for i in 0..n {
        let vi = v[i] * w;
        for j in 0..n {
            acc[(i, j)] += vi * v[j].conj();
        }
    }
}
