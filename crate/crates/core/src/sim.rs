//! Event-level Monte Carlo of photon pairs through the Franson or hug
//! interferometer geometry: time-tagged detections, dead time, coincidence
//! identification and postselected count tables.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::quantum::{werner_like, coincidence_probabilities, MeasurementSettings, Port};

/// Common propagation delay from the source to either detector, on top of
/// the short-arm travel time. Arbitrary but fixed.
pub const BASE_TRANSIT: f64 = 5e-9;

/// Interferometer geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Scheme {
    /// One unbalanced interferometer per photon; each photon always reaches
    /// its own observer. Cross-class events are identified by comparing the
    /// two stations' time tags.
    Franson,
    /// The short path of one photon and the long path of the other end at
    /// the same observer; cross-class events never produce an A-B
    /// coincidence.
    Hug,
}

/// Simulation parameters. Times in seconds, rates in events per second.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeometryConfig {
    pub scheme: Scheme,
    /// Common long-short travel-time difference (L_A - S_A = L_B - S_B).
    pub path_delay: f64,
    pub coincidence_window: f64,
    pub dead_time: f64,
    pub detection_efficiency: f64,
    pub pair_rate: f64,
    pub visibility: f64,
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.path_delay <= 0.0 {
            return Err(Error::Config("path_delay must be positive".into()));
        }
        if self.coincidence_window <= 0.0 || self.coincidence_window >= self.path_delay {
            return Err(Error::Config(
                "coincidence_window must be positive and smaller than path_delay".into(),
            ));
        }
        if self.dead_time < 0.0 {
            return Err(Error::Config("dead_time must be nonnegative".into()));
        }
        if !(self.detection_efficiency > 0.0 && self.detection_efficiency <= 1.0) {
            return Err(Error::Config("detection_efficiency must be in (0, 1]".into()));
        }
        if self.pair_rate <= 0.0 {
            return Err(Error::Config("pair_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::Config("visibility must be in [0, 1]".into()));
        }
        Ok(())
    }
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Hug,
            path_delay: 3e-9,
            coincidence_window: 1e-9,
            dead_time: 1e-9,
            detection_efficiency: 0.15,
            pair_rate: 1e4,
            visibility: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathChoice {
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Station {
    A,
    B,
}

/// Two-photon path class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum PairClass {
    SS,
    SL,
    LS,
    LL,
}

impl PairClass {
    pub fn from_paths(a: PathChoice, b: PathChoice) -> Self {
        match (a, b) {
            (PathChoice::Short, PathChoice::Short) => PairClass::SS,
            (PathChoice::Short, PathChoice::Long) => PairClass::SL,
            (PathChoice::Long, PathChoice::Short) => PairClass::LS,
            (PathChoice::Long, PathChoice::Long) => PairClass::LL,
        }
    }

    /// SS and LL are the indistinguishable, interfering classes.
    pub fn interferes(&self) -> bool {
        matches!(self, PairClass::SS | PairClass::LL)
    }
}

/// One pair emission from the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    pub time: f64,
}

/// A fully propagated pair: paths, stations, detector hits and arrival
/// times. `detector_*` is `None` when the photon was lost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonPairRecord {
    pub emission_time: f64,
    pub path_a: PathChoice,
    pub path_b: PathChoice,
    pub station_a: Station,
    pub station_b: Station,
    pub detector_a: Option<Port>,
    pub detector_b: Option<Port>,
    pub arrival_time_a: f64,
    pub arrival_time_b: f64,
}

impl PhotonPairRecord {
    pub fn class(&self) -> PairClass {
        PairClass::from_paths(self.path_a, self.path_b)
    }
}

/// One identified A-B pair event after dead-time filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceRecord {
    pub class: PairClass,
    /// Port of the hit at station A.
    pub port_a: Port,
    /// Port of the hit at station B.
    pub port_b: Port,
    pub accepted: bool,
    pub phi_a: f64,
    pub phi_b: f64,
}

/// Coincidence counts per setting pair, indexed by detector pair
/// (11, 12, 21, 22).
#[derive(Debug, Clone, PartialEq)]
pub struct CountRow {
    pub label: String,
    pub phi_a: f64,
    pub phi_b: f64,
    pub counts: [u64; 4],
    pub duration: f64,
}

impl CountRow {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CountTable {
    pub rows: Vec<CountRow>,
}

impl CountTable {
    /// Serialize with the fixed header
    /// `setting_label,phi_a,phi_b,c11,c12,c21,c22,duration_s`.
    /// Phases are written with 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("setting_label,phi_a,phi_b,c11,c12,c21,c22,duration_s\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:e},{:e},{},{},{},{},{}\n",
                r.label,
                r.phi_a,
                r.phi_b,
                r.counts[0],
                r.counts[1],
                r.counts[2],
                r.counts[3],
                r.duration
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "setting_label,phi_a,phi_b,c11,c12,c21,c22,duration_s" => {}
            Some((_, h)) => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("unexpected header `{h}`"),
                })
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "empty file".into(),
                })
            }
        }
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 8 fields, got {}", fields.len()),
                });
            }
            let num = |i: usize| -> Result<f64> {
                fields[i].trim().parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("invalid number `{}`", fields[i]),
                })
            };
            let count = |i: usize| -> Result<u64> {
                fields[i].trim().parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("invalid count `{}`", fields[i]),
                })
            };
            rows.push(CountRow {
                label: fields[0].trim().to_string(),
                phi_a: num(1)?,
                phi_b: num(2)?,
                counts: [count(3)?, count(4)?, count(5)?, count(6)?],
                duration: num(7)?,
            });
        }
        Ok(Self { rows })
    }
}

/// Emission times of a Poisson pair source over `duration` seconds.
pub fn generate_pairs(cfg: &GeometryConfig, duration: f64, seed: u64) -> Result<Vec<Emission>> {
    cfg.validate()?;
    if duration < 0.0 {
        return Err(Error::Config("duration must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(emission_times(cfg.pair_rate, duration, &mut rng))
}

fn emission_times(rate: f64, duration: f64, rng: &mut impl Rng) -> Vec<Emission> {
    let exp = Exp::new(rate).expect("positive rate");
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t > duration {
            break;
        }
        out.push(Emission { time: t });
    }
    out
}

fn station_of(scheme: Scheme, photon_a: bool, path: PathChoice) -> Station {
    match scheme {
        Scheme::Franson => {
            if photon_a {
                Station::A
            } else {
                Station::B
            }
        }
        // In the hug geometry the short arm of photon a and the long arm of
        // photon b end at Alice; the other two arms end at Bob.
        Scheme::Hug => match (photon_a, path) {
            (true, PathChoice::Short) | (false, PathChoice::Long) => Station::A,
            (true, PathChoice::Long) | (false, PathChoice::Short) => Station::B,
        },
    }
}

/// Complete one emission: sample the path class, detector ports and losses.
///
/// The path class is uniform over {SS, SL, LS, LL}. For the interfering
/// classes the station ports follow the quantum coincidence probabilities of
/// the dephased Phi+ state at the configured visibility; for the
/// distinguishable classes the ports are uniform and independent.
pub fn propagate_pair(
    em: &Emission,
    cfg: &GeometryConfig,
    phi_a: f64,
    phi_b: f64,
    rng: &mut impl Rng,
) -> PhotonPairRecord {
    let path_a = if rng.gen::<bool>() { PathChoice::Long } else { PathChoice::Short };
    let path_b = if rng.gen::<bool>() { PathChoice::Long } else { PathChoice::Short };
    let class = PairClass::from_paths(path_a, path_b);

    let station_a = station_of(cfg.scheme, true, path_a);
    let station_b = station_of(cfg.scheme, false, path_b);

    // Ports are attached to stations: (i, j) = (port at A, port at B).
    let (port_at_a, port_at_b) = if class.interferes() {
        let rho = werner_like(cfg.visibility).expect("validated visibility");
        let p = coincidence_probabilities(&rho, phi_a, phi_b).as_array();
        let u: f64 = rng.gen();
        let pick = if u < p[0] {
            0
        } else if u < p[0] + p[1] {
            1
        } else if u < p[0] + p[1] + p[2] {
            2
        } else {
            3
        };
        let ports = [
            (Port::One, Port::One),
            (Port::One, Port::Two),
            (Port::Two, Port::One),
            (Port::Two, Port::Two),
        ];
        ports[pick]
    } else {
        let pa = if rng.gen::<bool>() { Port::Two } else { Port::One };
        let pb = if rng.gen::<bool>() { Port::Two } else { Port::One };
        (pa, pb)
    };

    // Map station ports back onto the photons. For the interfering classes
    // exactly one photon sits at each station.
    let (raw_port_a, raw_port_b) = if station_a == Station::A {
        (port_at_a, port_at_b)
    } else {
        (port_at_b, port_at_a)
    };

    let kept_a = rng.gen::<f64>() < cfg.detection_efficiency;
    let kept_b = rng.gen::<f64>() < cfg.detection_efficiency;

    let delay = |p: PathChoice| match p {
        PathChoice::Short => 0.0,
        PathChoice::Long => cfg.path_delay,
    };

    PhotonPairRecord {
        emission_time: em.time,
        path_a,
        path_b,
        station_a,
        station_b,
        detector_a: kept_a.then_some(raw_port_a),
        detector_b: kept_b.then_some(raw_port_b),
        arrival_time_a: em.time + BASE_TRANSIT + delay(path_a),
        arrival_time_b: em.time + BASE_TRANSIT + delay(path_b),
    }
}

/// Dead-time filtering followed by A-B pairing and class identification.
///
/// Franson classification compares the two stations' arrival times: |dt|
/// within the window is SS/LL, |dt| near the path delay is SL/LS (rejected).
/// In the hug geometry SL/LS pairs hit a single station and produce no A-B
/// record at all.
pub fn find_coincidences(
    records: &[PhotonPairRecord],
    cfg: &GeometryConfig,
    phi_a: f64,
    phi_b: f64,
) -> Result<Vec<CoincidenceRecord>> {
    cfg.validate()?;
    let mut last = records.first().map(|r| r.emission_time).unwrap_or(0.0);
    for r in records {
        if r.emission_time < last {
            return Err(Error::Domain("records are not time-ordered".into()));
        }
        last = r.emission_time;
    }

    let mut last_accept: HashMap<(Station, Port), f64> = HashMap::new();
    let mut out = Vec::new();

    for rec in records {
        // Per-record hits in time order for the dead-time bookkeeping.
        let mut hits: Vec<(Station, Port, f64, bool)> = Vec::with_capacity(2);
        if let Some(p) = rec.detector_a {
            hits.push((rec.station_a, p, rec.arrival_time_a, true));
        }
        if let Some(p) = rec.detector_b {
            hits.push((rec.station_b, p, rec.arrival_time_b, false));
        }
        hits.sort_by(|x, y| x.2.total_cmp(&y.2));

        let mut surviving: Vec<(Station, Port, f64)> = Vec::with_capacity(2);
        for (st, port, t, _is_a) in hits {
            let key = (st, port);
            let blocked = last_accept
                .get(&key)
                .is_some_and(|&prev| t - prev < cfg.dead_time);
            if !blocked {
                last_accept.insert(key, t);
                surviving.push((st, port, t));
            }
        }

        let hit_a = surviving.iter().find(|h| h.0 == Station::A);
        let hit_b = surviving.iter().find(|h| h.0 == Station::B);
        let (Some(&(_, pa, ta)), Some(&(_, pb, tb))) = (hit_a, hit_b) else {
            continue; // no cross-station pair (lost photon or hug SL/LS)
        };

        let dt = (ta - tb).abs();
        if dt <= cfg.coincidence_window {
            out.push(CoincidenceRecord {
                class: rec.class(),
                port_a: pa,
                port_b: pb,
                accepted: true,
                phi_a,
                phi_b,
            });
        } else if (dt - cfg.path_delay).abs() <= cfg.coincidence_window {
            out.push(CoincidenceRecord {
                class: rec.class(),
                port_a: pa,
                port_b: pb,
                accepted: false,
                phi_a,
                phi_b,
            });
        }
    }
    Ok(out)
}

/// Outcome of simulating one setting pair.
#[derive(Debug, Clone, Copy)]
pub struct SettingRun {
    /// Accepted coincidence counts by detector pair (11, 12, 21, 22).
    pub counts: [u64; 4],
    pub emitted: u64,
    pub accepted: u64,
    /// Cross-class A-B records seen (Franson only; zero for hug).
    pub rejected_cross: u64,
    pub duration: f64,
}

impl SettingRun {
    pub fn selection_rate(&self) -> f64 {
        if self.emitted == 0 {
            0.0
        } else {
            self.accepted as f64 / self.emitted as f64
        }
    }
}

/// Per-setting sub-seed, a fixed function of the run seed and the setting
/// index so that setting order cannot change the streams.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add((index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Simulate `pairs` emissions at one setting pair.
pub fn run_setting(
    cfg: &GeometryConfig,
    phi_a: f64,
    phi_b: f64,
    pairs: u64,
    seed: u64,
) -> Result<SettingRun> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exp = Exp::new(cfg.pair_rate).expect("validated rate");
    let mut t = 0.0;
    let mut records = Vec::with_capacity(pairs as usize);
    for _ in 0..pairs {
        t += exp.sample(&mut rng);
        let em = Emission { time: t };
        records.push(propagate_pair(&em, cfg, phi_a, phi_b, &mut rng));
    }
    let coincidences = find_coincidences(&records, cfg, phi_a, phi_b)?;

    let mut counts = [0u64; 4];
    let mut accepted = 0;
    let mut rejected_cross = 0;
    for c in &coincidences {
        if c.accepted {
            accepted += 1;
            let i = match (c.port_a, c.port_b) {
                (Port::One, Port::One) => 0,
                (Port::One, Port::Two) => 1,
                (Port::Two, Port::One) => 2,
                (Port::Two, Port::Two) => 3,
            };
            counts[i] += 1;
        } else {
            rejected_cross += 1;
        }
    }
    Ok(SettingRun {
        counts,
        emitted: pairs,
        accepted,
        rejected_cross,
        duration: pairs as f64 / cfg.pair_rate,
    })
}

pub const SETTING_LABELS: [&str; 4] = ["AB", "ApB", "ABp", "ApBp"];

/// Simulate all four CHSH setting pairs and tally accepted coincidences.
pub fn run_chsh_experiment(
    cfg: &GeometryConfig,
    settings: &MeasurementSettings,
    pairs_per_setting: u64,
    seed: u64,
) -> Result<CountTable> {
    if pairs_per_setting < 1 {
        return Err(Error::Config("pairs_per_setting must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(4);
    for (k, (label, (pa, pb))) in SETTING_LABELS
        .iter()
        .zip(settings.setting_pairs())
        .enumerate()
    {
        let run = run_setting(cfg, pa, pb, pairs_per_setting, sub_seed(seed, k as u64))?;
        rows.push(CountRow {
            label: (*label).to_string(),
            phi_a: pa,
            phi_b: pb,
            counts: run.counts,
            duration: run.duration,
        });
    }
    Ok(CountTable { rows })
}

/// Count curves versus phi_A at fixed phi_B, one per detector pair.
#[derive(Debug, Clone)]
pub struct FringeScan {
    pub phi_b: f64,
    pub phi_a: Vec<f64>,
    /// counts[k][point] for detector pair k in (11, 12, 21, 22) order.
    pub counts: [Vec<u64>; 4],
    pub duration_per_point: f64,
}

/// Scan phi_A over `grid` at fixed `phi_b`, simulating `pairs_per_point`
/// emissions per grid point.
pub fn fringe_scan(
    cfg: &GeometryConfig,
    phi_b: f64,
    grid: &[f64],
    pairs_per_point: u64,
    seed: u64,
) -> Result<FringeScan> {
    if grid.is_empty() {
        return Err(Error::Config("phase grid must be nonempty".into()));
    }
    let mut counts: [Vec<u64>; 4] = Default::default();
    for (k, &pa) in grid.iter().enumerate() {
        let run = run_setting(cfg, pa, phi_b, pairs_per_point, sub_seed(seed, k as u64))?;
        for d in 0..4 {
            counts[d].push(run.counts[d]);
        }
    }
    Ok(FringeScan {
        phi_b,
        phi_a: grid.to_vec(),
        counts,
        duration_per_point: pairs_per_point as f64 / cfg.pair_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{canonical_settings, correlation, werner_like};

    fn ideal_cfg(scheme: Scheme) -> GeometryConfig {
        GeometryConfig {
            scheme,
            detection_efficiency: 1.0,
            visibility: 0.9,
            ..GeometryConfig::default()
        }
    }

    #[test]
    fn poisson_pair_count() {
        let cfg = GeometryConfig::default();
        let pairs = generate_pairs(&cfg, 1.0, 42).unwrap();
        let n = pairs.len() as f64;
        assert!((n - 1e4).abs() < 4.0 * 100.0, "n = {n}");
    }

    #[test]
    fn zero_duration_is_empty() {
        let cfg = GeometryConfig::default();
        assert!(generate_pairs(&cfg, 0.0, 1).unwrap().is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeometryConfig::default();
        let a = generate_pairs(&cfg, 0.1, 7).unwrap();
        let b = generate_pairs(&cfg, 0.1, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = GeometryConfig::default();
        cfg.pair_rate = 0.0;
        assert!(generate_pairs(&cfg, 1.0, 1).is_err());
        let mut cfg = GeometryConfig::default();
        cfg.coincidence_window = 5e-9; // larger than the path delay
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn interfering_classes_have_correlated_ports_at_v1() {
        let mut cfg = ideal_cfg(Scheme::Franson);
        cfg.visibility = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..2000 {
            let em = Emission { time: i as f64 * 1e-4 };
            let rec = propagate_pair(&em, &cfg, 0.0, 0.0, &mut rng);
            if rec.class().interferes() {
                assert_eq!(rec.detector_a, rec.detector_b);
            }
        }
    }

    #[test]
    fn cross_class_arrival_separation() {
        let cfg = ideal_cfg(Scheme::Franson);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..2000 {
            let em = Emission { time: i as f64 * 1e-4 };
            let rec = propagate_pair(&em, &cfg, 0.3, -0.2, &mut rng);
            if rec.class() == PairClass::SL {
                let dt = rec.arrival_time_a - rec.arrival_time_b;
                assert!((dt + cfg.path_delay).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empirical_correlation_matches_quantum() {
        let cfg = ideal_cfg(Scheme::Franson);
        let s = canonical_settings();
        let run = run_setting(&cfg, s.phi_a, s.phi_b, 100_000, 99).unwrap();
        let n: u64 = run.counts.iter().sum();
        let e = (run.counts[0] as f64 + run.counts[3] as f64
            - run.counts[1] as f64
            - run.counts[2] as f64)
            / n as f64;
        let exact = correlation(&werner_like(0.9).unwrap(), s.phi_a, s.phi_b);
        assert!((e - exact).abs() < 0.02, "e = {e}, exact = {exact}");
    }

    #[test]
    fn franson_selection_rate_is_half() {
        let cfg = ideal_cfg(Scheme::Franson);
        let run = run_setting(&cfg, 0.3, 0.1, 100_000, 17).unwrap();
        let rate = run.selection_rate();
        assert!((rate - 0.5).abs() < 0.01, "rate = {rate}");
        // Rejected cross-class events also make up about half the pairs.
        let cross = run.rejected_cross as f64 / run.emitted as f64;
        assert!((cross - 0.5).abs() < 0.01, "cross = {cross}");
    }

    #[test]
    fn hug_has_no_cross_class_coincidences() {
        let cfg = ideal_cfg(Scheme::Hug);
        let run = run_setting(&cfg, 0.3, 0.1, 50_000, 21).unwrap();
        assert_eq!(run.rejected_cross, 0);
        assert!((run.selection_rate() - 0.5).abs() < 0.01);
    }

    #[test]
    fn hug_acceptance_is_setting_independent() {
        let cfg = ideal_cfg(Scheme::Hug);
        let mut accepted = Vec::new();
        for (pa, pb) in [(0.0, 0.0), (1.1, -0.7)] {
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            let mut flags = Vec::new();
            for i in 0..5000 {
                let em = Emission { time: i as f64 * 1e-4 };
                let rec = propagate_pair(&em, &cfg, pa, pb, &mut rng);
                let coins = find_coincidences(&[rec], &cfg, pa, pb).unwrap();
                flags.push(coins.iter().any(|c| c.accepted));
            }
            accepted.push(flags);
        }
        assert_eq!(accepted[0], accepted[1]);
    }

    #[test]
    fn dead_time_drops_close_hits() {
        let cfg = GeometryConfig {
            scheme: Scheme::Franson,
            detection_efficiency: 1.0,
            ..GeometryConfig::default()
        };
        // Two pairs whose station-A port-1 hits are 0.5 ns apart.
        let mk = |t: f64| PhotonPairRecord {
            emission_time: t,
            path_a: PathChoice::Short,
            path_b: PathChoice::Short,
            station_a: Station::A,
            station_b: Station::B,
            detector_a: Some(Port::One),
            detector_b: Some(Port::One),
            arrival_time_a: t + BASE_TRANSIT,
            arrival_time_b: t + BASE_TRANSIT,
        };
        let records = [mk(0.0), mk(0.5e-9)];
        let coins = find_coincidences(&records, &cfg, 0.0, 0.0).unwrap();
        // Second record's hits fall in both detectors' dead time.
        assert_eq!(coins.len(), 1);
    }

    #[test]
    fn dead_time_monotonicity() {
        let mut accepted = Vec::new();
        for dead in [0.0, 1e-9, 1e-5, 1e-4] {
            let cfg = GeometryConfig {
                scheme: Scheme::Franson,
                dead_time: dead,
                detection_efficiency: 1.0,
                ..GeometryConfig::default()
            };
            let run = run_setting(&cfg, 0.2, 0.0, 20_000, 13).unwrap();
            accepted.push(run.accepted);
        }
        for w in accepted.windows(2) {
            assert!(w[1] <= w[0], "accepted counts {accepted:?}");
        }
    }

    #[test]
    fn unordered_records_rejected() {
        let cfg = ideal_cfg(Scheme::Franson);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = propagate_pair(&Emission { time: 1.0 }, &cfg, 0.0, 0.0, &mut rng);
        let b = propagate_pair(&Emission { time: 0.5 }, &cfg, 0.0, 0.0, &mut rng);
        assert!(find_coincidences(&[a, b], &cfg, 0.0, 0.0).is_err());
    }

    #[test]
    fn experiment_is_deterministic() {
        let cfg = ideal_cfg(Scheme::Hug);
        let s = canonical_settings();
        let t1 = run_chsh_experiment(&cfg, &s, 5000, 77).unwrap();
        let t2 = run_chsh_experiment(&cfg, &s, 5000, 77).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn count_table_csv_round_trip() {
        let cfg = ideal_cfg(Scheme::Hug);
        let s = canonical_settings();
        let t = run_chsh_experiment(&cfg, &s, 2000, 5).unwrap();
        let csv = t.to_csv();
        let back = CountTable::from_csv(&csv).unwrap();
        assert_eq!(t.rows.len(), back.rows.len());
        for (a, b) in t.rows.iter().zip(&back.rows) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.counts, b.counts);
            assert!((a.phi_a - b.phi_a).abs() < 1e-8);
        }
    }

    #[test]
    fn csv_parse_errors_carry_line_numbers() {
        let bad = "setting_label,phi_a,phi_b,c11,c12,c21,c22,duration_s\nAB,0,0,1,2,3\n";
        match CountTable::from_csv(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn fringe_scan_shape() {
        let cfg = ideal_cfg(Scheme::Hug);
        let grid: Vec<f64> = (0..8).map(|i| i as f64 * 0.7 - 2.8).collect();
        let scan = fringe_scan(&cfg, 0.0, &grid, 2000, 3).unwrap();
        assert_eq!(scan.phi_a.len(), 8);
        for d in 0..4 {
            assert_eq!(scan.counts[d].len(), 8);
        }
        assert!(fringe_scan(&cfg, 0.0, &[], 100, 3).is_err());
    }
}
