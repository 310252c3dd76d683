use combust_web::{profile_json, stability_json};

#[test]
fn dc_profile_connects_end_states() {
    let v = profile_json(0.5, 1.0, 0.2, 1.5).unwrap();
    let u = v["u"].as_array().unwrap();
    assert!(u.len() <= 600);
    assert!((u[0].as_f64().unwrap() - 2.366_025_403_784_438_6).abs() < 1e-8);
    assert!(u[u.len() - 1].as_f64().unwrap().abs() < 1e-8);
}

#[test]
fn dc_wave_is_stable() {
    let v = stability_json(0.5, 1.0, 0.2, 1.5).unwrap();
    assert_eq!(v["report"]["verdict"], "stable");
    assert_eq!(v["contour"].as_array().unwrap().len(), v["image"].as_array().unwrap().len());
}

#[test]
fn slow_wave_reports_error() {
    // Below the CJ speed no strong detonation exists.
    assert!(stability_json(0.5, 1.0, 0.2, 0.9).is_err());
}
