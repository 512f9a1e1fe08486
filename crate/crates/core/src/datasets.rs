//! Bundled feeder data and synthetic profiles.
//!
//! The IEEE 37-bus feeder is rebuilt from its published line configurations,
//! segment lengths and spot loads. Distributed loads are lumped at their
//! spot buses, line charging is neglected and the in-line XFM-1 transformer
//! with its bus 775 (no load attached) is omitted. Delta-connected loads are
//! mapped onto wye phases (AB→A, BC→B, CA→C).

use crate::harness::{Method, ProfileRef, Scenario, Weights};
use crate::netmodel::schema::{
    BasesRecord, BranchRecord, BusRecord, FeederFile, LoadRecord, PvRecord, SourceRecord, TransformerRecord,
};
use crate::netmodel::{write_profile, Phase, TimeSeriesProfile};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub const FT_PER_MILE: f64 = 5280.0;
pub const KM_PER_FT: f64 = 0.0003048;

/// Seed of the bundled PV deployment.
pub const PV_DEPLOYMENT_SEED: u64 = 20_170_037;
/// Seed of the bundled load and irradiance profiles.
pub const PROFILE_SEED: u64 = 7;
pub const STEPS_PER_DAY: usize = 2880;
pub const DAY_DT_S: f64 = 30.0;

/// Ratio of inverter AC rating to PV DC rating.
pub const SI_OVERSIZE: f64 = 1.1;

const S_BASE_KVA: f64 = 1000.0;
const V_LN_KV: f64 = 4.8 / 1.732_050_807_568_877_2;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Phase impedance matrix in ohm/mile for the underground cable
/// configurations of the feeder.
pub fn line_config(config: u32) -> Option<[[Complex64; 3]; 3]> {
    let (aa, ab, ac, bb, bc, cc) = match config {
        721 => (c(0.2926, 0.1973), c(0.0673, -0.0368), c(0.0337, -0.0417), c(0.2646, 0.1900), c(0.0673, -0.0368), c(0.2926, 0.1973)),
        722 => (c(0.4751, 0.2973), c(0.1629, -0.0326), c(0.1234, -0.0607), c(0.4488, 0.2678), c(0.1629, -0.0326), c(0.4751, 0.2973)),
        723 => (c(1.2936, 0.6713), c(0.4871, 0.2111), c(0.4585, 0.1521), c(1.3022, 0.6326), c(0.4871, 0.2111), c(1.2936, 0.6713)),
        724 => (c(2.0952, 0.7758), c(0.5204, 0.2738), c(0.4926, 0.2123), c(2.1068, 0.7398), c(0.5204, 0.2738), c(2.0952, 0.7758)),
        _ => return None,
    };
    Some([[aa, ab, ac], [ab, bb, bc], [ac, bc, cc]])
}

/// Segments as (from, to, length ft, configuration).
pub const IEEE37_SEGMENTS: [(&str, &str, f64, u32); 35] = [
    ("799", "701", 1850.0, 721),
    ("701", "702", 960.0, 722),
    ("702", "705", 400.0, 724),
    ("702", "713", 360.0, 723),
    ("702", "703", 1320.0, 722),
    ("703", "727", 240.0, 724),
    ("703", "730", 600.0, 723),
    ("704", "714", 80.0, 724),
    ("704", "720", 800.0, 723),
    ("705", "742", 320.0, 724),
    ("705", "712", 240.0, 724),
    ("706", "725", 280.0, 724),
    ("707", "724", 760.0, 724),
    ("707", "722", 120.0, 724),
    ("708", "733", 320.0, 723),
    ("708", "732", 320.0, 724),
    ("709", "731", 600.0, 723),
    ("709", "708", 320.0, 723),
    ("710", "735", 200.0, 724),
    ("710", "736", 1280.0, 724),
    ("711", "741", 400.0, 723),
    ("711", "740", 200.0, 724),
    ("713", "704", 520.0, 723),
    ("714", "718", 520.0, 724),
    ("720", "707", 920.0, 724),
    ("720", "706", 600.0, 723),
    ("727", "744", 280.0, 723),
    ("730", "709", 200.0, 723),
    ("733", "734", 560.0, 723),
    ("734", "737", 640.0, 723),
    ("734", "710", 520.0, 724),
    ("737", "738", 400.0, 723),
    ("738", "711", 400.0, 723),
    ("744", "728", 200.0, 724),
    ("744", "729", 280.0, 724),
];

/// Spot loads as (bus, [(kW, kvar) on A, B, C]).
pub const IEEE37_LOADS: [(&str, [(f64, f64); 3]); 25] = [
    ("701", [(140.0, 70.0), (140.0, 70.0), (350.0, 175.0)]),
    ("712", [(0.0, 0.0), (0.0, 0.0), (85.0, 40.0)]),
    ("713", [(0.0, 0.0), (0.0, 0.0), (85.0, 40.0)]),
    ("714", [(17.0, 8.0), (21.0, 10.0), (0.0, 0.0)]),
    ("718", [(85.0, 40.0), (0.0, 0.0), (0.0, 0.0)]),
    ("720", [(0.0, 0.0), (0.0, 0.0), (85.0, 40.0)]),
    ("722", [(0.0, 0.0), (140.0, 70.0), (21.0, 10.0)]),
    ("724", [(0.0, 0.0), (42.0, 21.0), (0.0, 0.0)]),
    ("725", [(0.0, 0.0), (42.0, 21.0), (0.0, 0.0)]),
    ("727", [(0.0, 0.0), (0.0, 0.0), (42.0, 21.0)]),
    ("728", [(42.0, 21.0), (42.0, 21.0), (42.0, 21.0)]),
    ("729", [(42.0, 21.0), (0.0, 0.0), (0.0, 0.0)]),
    ("730", [(0.0, 0.0), (0.0, 0.0), (85.0, 40.0)]),
    ("731", [(0.0, 0.0), (85.0, 40.0), (0.0, 0.0)]),
    ("732", [(0.0, 0.0), (0.0, 0.0), (42.0, 21.0)]),
    ("733", [(85.0, 40.0), (0.0, 0.0), (0.0, 0.0)]),
    ("734", [(0.0, 0.0), (0.0, 0.0), (42.0, 21.0)]),
    ("735", [(0.0, 0.0), (0.0, 0.0), (85.0, 40.0)]),
    ("736", [(0.0, 0.0), (42.0, 21.0), (0.0, 0.0)]),
    ("737", [(140.0, 70.0), (0.0, 0.0), (0.0, 0.0)]),
    ("738", [(126.0, 62.0), (0.0, 0.0), (0.0, 0.0)]),
    ("740", [(0.0, 0.0), (0.0, 0.0), (85.0, 40.0)]),
    ("741", [(0.0, 0.0), (0.0, 0.0), (42.0, 21.0)]),
    ("742", [(8.0, 4.0), (85.0, 40.0), (0.0, 0.0)]),
    ("744", [(42.0, 21.0), (0.0, 0.0), (0.0, 0.0)]),
];

pub const LOAD_PROFILE_ID: &str = "load";

fn three_phase() -> Vec<Phase> {
    Phase::ALL.to_vec()
}

fn z_total(config: u32, feet: f64) -> Vec<Vec<Complex64>> {
    let z = line_config(config).expect("known configuration");
    z.iter().map(|row| row.iter().map(|v| v * (feet / FT_PER_MILE)).collect()).collect()
}

/// Substation source plus the 2.5 MVA OLTC feeding bus 799.
fn substation(name: &str) -> FeederFile {
    FeederFile {
        name: name.into(),
        bases: BasesRecord { s_base_kva: S_BASE_KVA },
        source: SourceRecord { bus: "sourcebus".into(), v_pu: vec![1.0; 3], angle_deg: vec![0.0, -120.0, 120.0] },
        buses: vec![
            BusRecord { id: "sourcebus".into(), phases: three_phase(), v_base_kv: 115.0 / 3f64.sqrt() },
            BusRecord { id: "799".into(), phases: three_phase(), v_base_kv: V_LN_KV },
        ],
        branches: Vec::new(),
        transformers: vec![TransformerRecord {
            id: "sub".into(),
            primary: "sourcebus".into(),
            secondary: "799".into(),
            phases: three_phase(),
            // 2 + j8 % on 2500 kVA, converted to the per-phase 1000 kVA base
            z_t_pu: c(0.02, 0.08) * (S_BASE_KVA / (2500.0 / 3.0)),
            tau_min: -16,
            tau_max: 16,
            a_max: 1.1,
            ganged: true,
            delta_to_max: 1,
        }],
        loads: Vec::new(),
        pv: Vec::new(),
    }
}

/// IEEE 37-bus feeder without PV.
pub fn ieee37_feeder() -> FeederFile {
    let mut f = substation("ieee37");
    let mut seen: Vec<&str> = vec!["799"];
    for (from, to, _, _) in IEEE37_SEGMENTS {
        for b in [from, to] {
            if !seen.contains(&b) {
                seen.push(b);
            }
        }
    }
    let mut ids: Vec<&str> = seen[1..].to_vec();
    ids.sort_unstable();
    for id in ids {
        f.buses.push(BusRecord { id: id.into(), phases: three_phase(), v_base_kv: V_LN_KV });
    }
    for (from, to, feet, config) in IEEE37_SEGMENTS {
        f.branches.push(BranchRecord {
            id: format!("{from}-{to}"),
            from: from.into(),
            to: to.into(),
            phases: three_phase(),
            z_ohm: z_total(config, feet),
            y_shunt_s: None,
            length_km: feet * KM_PER_FT,
        });
    }
    for (bus, per_phase) in IEEE37_LOADS {
        for (ph, (p, q)) in Phase::ALL.iter().zip(per_phase) {
            if p > 0.0 || q > 0.0 {
                f.loads.push(LoadRecord {
                    id: format!("L{bus}{ph}"),
                    bus: bus.into(),
                    phase: *ph,
                    p_kw: p,
                    q_kvar: q,
                    profile: LOAD_PROFILE_ID.into(),
                });
            }
        }
    }
    f
}

/// Draws `n` sizes in `[min_kw, max_kw]` summing to `total_kw`; the
/// smallest and largest draws are pinned to the range ends.
pub fn pv_sizes(n: usize, total_kw: f64, min_kw: f64, max_kw: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    assert!(n >= 2 && min_kw * n as f64 <= total_kw && total_kw <= max_kw * n as f64);
    let mut s: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let (imin, imax) = extreme_indices(&s);
    s[imin] = 0.0;
    s[imax] = 1.0;
    // excess over min_kw is rescaled until the total matches with the cap respected
    let mut sizes: Vec<f64> = s.iter().map(|u| min_kw + u * (max_kw - min_kw)).collect();
    for _ in 0..100 {
        let free: Vec<usize> = (0..n).filter(|&k| k != imin && k != imax && sizes[k] < max_kw).collect();
        let fixed: f64 = (0..n).filter(|k| !free.contains(k)).map(|k| sizes[k]).sum();
        let excess: f64 = free.iter().map(|&k| sizes[k] - min_kw).sum();
        let target = total_kw - fixed - min_kw * free.len() as f64;
        if excess <= 0.0 {
            break;
        }
        let f = target / excess;
        let mut capped = false;
        for &k in &free {
            sizes[k] = min_kw + (sizes[k] - min_kw) * f;
            if sizes[k] > max_kw {
                sizes[k] = max_kw;
                capped = true;
            }
        }
        if !capped {
            break;
        }
    }
    sizes.iter().map(|v| (v * 10.0).round() / 10.0).collect()
}

fn extreme_indices(v: &[f64]) -> (usize, usize) {
    let mut imin = 0;
    let mut imax = 0;
    for (k, x) in v.iter().enumerate() {
        if *x < v[imin] {
            imin = k;
        }
        if *x > v[imax] {
            imax = k;
        }
    }
    (imin, imax)
}

/// Places single-phase PV units on random (bus, phase) pairs, excluding the
/// listed buses. Returns profile references scaling the 1 kW reference
/// profile to each unit's rating.
pub fn deploy_pv(
    f: &mut FeederFile,
    sizes: &[f64],
    exclude: &[&str],
    reference_file: &Path,
    rng: &mut ChaCha8Rng,
) -> Vec<ProfileRef> {
    let slots: Vec<(String, Phase)> = f
        .buses
        .iter()
        .filter(|b| b.id != f.source.bus && !exclude.contains(&b.id.as_str()))
        .flat_map(|b| b.phases.iter().map(move |p| (b.id.clone(), *p)))
        .collect();
    let mut refs = Vec::with_capacity(sizes.len());
    for (k, kw) in sizes.iter().enumerate() {
        let (bus, phase) = slots[rng.gen_range(0..slots.len())].clone();
        let id = format!("pv{:02}", k + 1);
        let profile = format!("pv_{}", id);
        f.pv.push(PvRecord {
            id: id.clone(),
            bus,
            phase,
            dc_kw: *kw,
            si_kva: (kw * SI_OVERSIZE * 10.0).round() / 10.0,
            profile: profile.clone(),
            allow_curtailment: false,
        });
        refs.push(ProfileRef { id: profile, file: reference_file.to_path_buf(), scale: *kw });
    }
    refs
}

fn bump(h: f64, center: f64, width: f64) -> f64 {
    let d = (h - center) / width;
    (-d * d).exp()
}

/// Daily load multiplier at 30 s resolution: overnight base, a morning
/// shoulder and an evening peak, plus a small seeded AR(1) wobble.
pub fn load_shape(seed: u64) -> TimeSeriesProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = 0.0;
    let values = (0..STEPS_PER_DAY)
        .map(|k| {
            let h = k as f64 * DAY_DT_S / 3600.0;
            noise = 0.995 * noise + 0.0015 * (rng.gen::<f64>() * 2.0 - 1.0);
            let m = 0.30 + 0.12 * bump(h, 7.5, 1.5) + 0.45 * bump(h, 20.0, 2.2) + 0.02 * bump(h, 13.0, 3.0);
            (m * (1.0 + noise) * 1e4).round() / 1e4
        })
        .collect();
    TimeSeriesProfile::new(LOAD_PROFILE_ID, 0.0, DAY_DT_S, values).expect("finite profile")
}

/// Output of a 1 kW (DC) array on a partly cloudy day at 30 s resolution.
/// A clear-sky envelope is multiplied by a seeded two-state cloud process
/// smoothed with a 60 s time constant.
pub fn pv_reference(seed: u64) -> TimeSeriesProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let (sunrise, sunset) = (6.0, 18.5);
    let smooth = 1.0 - (-DAY_DT_S / 60.0f64).exp();
    let (p_enter, p_leave) = (DAY_DT_S / 900.0, DAY_DT_S / 180.0);
    let mut cloudy = false;
    let mut target = 1.0;
    let mut factor = 1.0;
    let values = (0..STEPS_PER_DAY)
        .map(|k| {
            let h = k as f64 * DAY_DT_S / 3600.0;
            let envelope = if h > sunrise && h < sunset {
                0.93 * (std::f64::consts::PI * (h - sunrise) / (sunset - sunrise)).sin().powf(1.3)
            } else {
                0.0
            };
            let u: f64 = rng.gen();
            if cloudy && u < p_leave {
                cloudy = false;
                target = 1.0;
            } else if !cloudy && u < p_enter {
                cloudy = true;
                target = 0.3 + 0.35 * rng.gen::<f64>();
            }
            factor += (target - factor) * smooth;
            ((envelope * factor).max(0.0) * 1e5).round() / 1e5
        })
        .collect();
    TimeSeriesProfile::new("pv_ref", 0.0, DAY_DT_S, values).expect("finite profile")
}

/// The bundled IEEE 37 feeder with its seeded PV deployment (30 units,
/// 23-206 kW, 4.1 MW total).
pub fn ieee37_with_pv(reference_file: &Path) -> (FeederFile, Vec<ProfileRef>) {
    let mut f = ieee37_feeder();
    let mut rng = ChaCha8Rng::seed_from_u64(PV_DEPLOYMENT_SEED);
    let sizes = pv_sizes(30, 4100.0, 23.0, 206.0, &mut rng);
    let refs = deploy_pv(&mut f, &sizes, &["799"], reference_file, &mut rng);
    (f, refs)
}

/// Radial three-phase feeder with `n_buses` buses below the OLTC, random
/// lateral structure, spot loads and PV. Node count is `3·(n_buses + 2)`.
pub fn synthetic_feeder(n_buses: usize, seed: u64, reference_file: &Path) -> (FeederFile, Vec<ProfileRef>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = substation(&format!("synthetic{n_buses}"));
    // heavier substation for a larger feeder
    f.transformers[0].z_t_pu = c(0.005, 0.03);
    let mut names = vec!["799".to_string()];
    for k in 0..n_buses {
        let id = format!("b{k:04}");
        let parent = if k < 40 {
            names[names.len() - 1].clone()
        } else {
            let lo = names.len().saturating_sub(25);
            names[rng.gen_range(lo..names.len())].clone()
        };
        let (config, feet) = if k < 40 { (721, 150.0) } else { (722, rng.gen_range(60.0..160.0)) };
        f.buses.push(BusRecord { id: id.clone(), phases: three_phase(), v_base_kv: V_LN_KV });
        f.branches.push(BranchRecord {
            id: format!("{parent}-{id}"),
            from: parent,
            to: id.clone(),
            phases: three_phase(),
            z_ohm: z_total(config, feet),
            y_shunt_s: None,
            length_km: feet * KM_PER_FT,
        });
        let ph = Phase::ALL[rng.gen_range(0..3)];
        let p = rng.gen_range(5.0..15.0f64).round();
        f.loads.push(LoadRecord {
            id: format!("L{id}"),
            bus: id.clone(),
            phase: ph,
            p_kw: p,
            q_kvar: (p * 0.45).round(),
            profile: LOAD_PROFILE_ID.into(),
        });
        names.push(id);
    }
    let n_pv = (n_buses / 4).max(2);
    let total = 12.0 * n_buses as f64;
    let sizes = pv_sizes(n_pv, total, 10.0, 80.0, &mut rng);
    let refs = deploy_pv(&mut f, &sizes, &["799"], reference_file, &mut rng);
    (f, refs)
}

/// Scenario template used for the bundled data.
pub fn scenario_template(feeder: &str, profiles: Vec<ProfileRef>, method: Method) -> Scenario {
    Scenario {
        name: String::new(),
        feeder: feeder.into(),
        profiles,
        method,
        start_step: 0,
        n_steps: None,
        dt_s: DAY_DT_S,
        horizon_steps: 10,
        replan_steps: None,
        weights: Weights::default(),
        forecast_alpha: 0.0,
        rng_seed: 1,
        volt_var: Default::default(),
        avr: Default::default(),
        initial_taps: None,
        milp_time_budget_s: 30.0,
        base_dir: Default::default(),
    }
}

/// Writes feeders, profiles and scenarios into `dir`.
pub fn write_bundle(dir: &Path) -> std::io::Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let pv_file = Path::new("pv_1kw.csv");
    let load_ref = ProfileRef { id: LOAD_PROFILE_ID.into(), file: "load_shape.csv".into(), scale: 1.0 };
    write_profile(&load_shape(PROFILE_SEED), dir.join("load_shape.csv"))?;
    write_profile(&pv_reference(PROFILE_SEED), dir.join(pv_file))?;
    let mut written = vec!["load_shape.csv".to_string(), "pv_1kw.csv".to_string()];

    let (feeder, pv_refs) = ieee37_with_pv(pv_file);
    write_json(dir, "ieee37.json", &feeder)?;
    written.push("ieee37.json".into());
    for method in [Method::Avr, Method::Ovr] {
        let mut profiles = vec![load_ref.clone()];
        profiles.extend(pv_refs.iter().cloned());
        let mut s = scenario_template("ieee37.json", profiles, method);
        s.name = format!("ieee37 cloudy day, {method}");
        let name = format!("ieee37_cloudy_{method}.json");
        std::fs::write(dir.join(&name), s.to_json() + "\n")?;
        written.push(name);
    }

    let (big, big_refs) = synthetic_feeder(340, 11, pv_file);
    write_json(dir, "synthetic1k.json", &big)?;
    written.push("synthetic1k.json".into());
    let mut profiles = vec![load_ref];
    profiles.extend(big_refs);
    let mut s = scenario_template("synthetic1k.json", profiles, Method::Ovr);
    s.name = "synthetic 1k-node feeder, one horizon at noon".into();
    s.start_step = 1440;
    s.n_steps = Some(10);
    std::fs::write(dir.join("synthetic1k_ovr.json"), s.to_json() + "\n")?;
    written.push("synthetic1k_ovr.json".into());
    Ok(written)
}

fn write_json(dir: &Path, name: &str, f: &FeederFile) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(f).expect("feeder serializes");
    std::fs::write(dir.join(name), text + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::FeederModel;

    #[test]
    fn ieee37_structure() {
        let m = FeederModel::from_file(ieee37_feeder()).unwrap();
        assert_eq!(m.buses.len(), 37);
        assert_eq!(m.n_nodes(), 111);
        assert_eq!(m.branches.len(), 35);
        assert_eq!(m.oltcs.len(), 1);
        let p: f64 = m.loads.iter().map(|l| l.base_p_kw).sum();
        let q: f64 = m.loads.iter().map(|l| l.base_q_kvar).sum();
        assert!((p - 2457.0).abs() < 1e-9 && (q - 1201.0).abs() < 1e-9);
        assert_eq!(&m.nodes[0].bus, "sourcebus");
    }

    #[test]
    fn pv_deployment_matches_targets() {
        let (f, refs) = ieee37_with_pv(Path::new("pv.csv"));
        assert_eq!(f.pv.len(), 30);
        assert_eq!(refs.len(), 30);
        let total: f64 = f.pv.iter().map(|p| p.dc_kw).sum();
        assert!((total - 4100.0).abs() < 2.0, "total {total}");
        let min = f.pv.iter().map(|p| p.dc_kw).fold(f64::INFINITY, f64::min);
        let max = f.pv.iter().map(|p| p.dc_kw).fold(0.0, f64::max);
        assert_eq!((min, max), (23.0, 206.0));
        assert!(f.pv.iter().all(|p| p.bus != "799" && p.bus != "sourcebus"));
        assert_eq!(ieee37_with_pv(Path::new("pv.csv")).0, f);
    }

    #[test]
    fn profiles_are_deterministic_and_shaped() {
        let l = load_shape(PROFILE_SEED);
        assert_eq!(l.len(), STEPS_PER_DAY);
        assert_eq!(l, load_shape(PROFILE_SEED));
        let noon = l.at(1440);
        let evening = l.at(2520);
        assert!(noon < 0.4 && evening > 0.6, "noon {noon}, 21:00 {evening}");
        let pv = pv_reference(PROFILE_SEED);
        assert_eq!(pv.at(0), 0.0);
        assert_eq!(pv.at(2520), 0.0);
        assert!(pv.values.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(pv.values.iter().cloned().fold(0.0, f64::max) > 0.85);
    }

    #[test]
    fn synthetic_feeder_is_large_and_valid() {
        let (f, _) = synthetic_feeder(340, 11, Path::new("pv.csv"));
        let m = FeederModel::from_file(f).unwrap();
        assert!(m.n_nodes() >= 1000);
    }
}
