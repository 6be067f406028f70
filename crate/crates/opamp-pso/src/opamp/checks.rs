//! Specification comparison shared by the analytical and SPICE backends.
//! A metric set passes under one backend's checker iff it passes under the
//! other's, because this is the only implementation.

use super::SpecTable;

/// The measured quantities every backend must produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub av_db: f64,
    pub f3db: f64,
    pub ugb: f64,
    pub phase_margin: f64,
    pub slew_rate: f64,
    pub power: f64,
    pub noise_psd: f64,
    pub area: f64,
}

/// Inclusive comparisons in the spec-table directions: >= for gain, slew
/// rate, f3dB, UGB, and phase margin; <= for power, noise, and area. A NaN
/// metric (unsolved bias point) fails its check.
pub fn spec_violations(m: &Metrics, specs: &SpecTable) -> Vec<String> {
    let mut v = Vec::new();
    if !(m.av_db >= specs.av_min) {
        v.push("gain".into());
    }
    if !(m.power <= specs.p_max) {
        v.push("power".into());
    }
    if !(m.slew_rate >= specs.sr_min) {
        v.push("slew_rate".into());
    }
    if !(m.f3db >= specs.f3db_min) {
        v.push("f3db".into());
    }
    if !(m.ugb >= specs.ugb_min) {
        v.push("ugb".into());
    }
    if !(m.phase_margin >= specs.pm_min) {
        v.push("phase_margin".into());
    }
    if !(m.noise_psd <= specs.noise_max) {
        v.push("noise".into());
    }
    if !(m.area <= specs.area_max) {
        v.push("area".into());
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exactly_at_spec(specs: &SpecTable) -> Metrics {
        Metrics {
            av_db: specs.av_min,
            f3db: specs.f3db_min,
            ugb: specs.ugb_min,
            phase_margin: specs.pm_min,
            slew_rate: specs.sr_min,
            power: specs.p_max,
            noise_psd: specs.noise_max,
            area: specs.area_max,
        }
    }

    #[test]
    fn thresholds_are_inclusive() {
        let specs = SpecTable::default();
        assert!(spec_violations(&exactly_at_spec(&specs), &specs).is_empty());
    }

    #[test]
    fn nan_metrics_fail() {
        let specs = SpecTable::default();
        let mut m = exactly_at_spec(&specs);
        m.ugb = f64::NAN;
        assert_eq!(spec_violations(&m, &specs), vec!["ugb".to_string()]);
    }

    #[test]
    fn each_direction_detects_its_violation() {
        let specs = SpecTable::default();
        let mut m = exactly_at_spec(&specs);
        m.power = specs.p_max * 1.01;
        m.av_db = specs.av_min - 0.1;
        let v = spec_violations(&m, &specs);
        assert!(v.contains(&"power".to_string()) && v.contains(&"gain".to_string()));
        assert_eq!(v.len(), 2);
    }
}
