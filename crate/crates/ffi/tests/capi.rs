//! Exercises the C ABI the way a foreign binding would: through the raw
//! extern "C" functions, NUL-terminated strings and all.

use std::ffi::{CStr, CString};

use hormsim_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe {
        let p = hs_last_error();
        assert!(!p.is_null(), "expected an error message");
        CStr::from_ptr(p).to_string_lossy().into_owned()
    }
}

#[test]
fn scenario_round_trip_and_run() {
    unsafe {
        let text = c("nodes = 10\nedge_probability = 0.35\nunits = 60\nkeywords = 12\ncapacity_bytes = 90000000\nduration = 120\nseed = 3\n");
        let scenario = hs_scenario_parse(text.as_ptr());
        assert!(!scenario.is_null());

        let back = hs_scenario_to_text(scenario);
        assert!(!back.is_null());
        let rendered = CStr::from_ptr(back).to_string_lossy().into_owned();
        assert!(rendered.contains("nodes = 10"));
        assert!(rendered.contains("duration = 120"));
        hs_string_free(back);

        assert_eq!(
            hs_scenario_set(scenario, c("cleanup").as_ptr(), c("lru").as_ptr()),
            HsStatus::Ok
        );
        assert_eq!(
            hs_scenario_set(scenario, c("bogus").as_ptr(), c("1").as_ptr()),
            HsStatus::InvalidArgument
        );
        assert!(last_error().contains("bogus"));

        let result = hs_run(scenario);
        assert!(!result.is_null(), "run failed: {}", last_error());
        let fulfilled = hs_result_fulfilled_slots(result);
        let missed = hs_result_missed_slots(result);
        assert!(fulfilled > 0);
        let rate = hs_result_missed_rate(result);
        assert!((0.0..=1.0).contains(&rate));
        assert_eq!(
            (rate * (fulfilled + missed) as f64).round() as u64,
            missed,
            "rate consistent with counts"
        );
        assert!(hs_result_mean_delay_s(result) >= hs_result_median_delay_s(result) * 0.0);

        let json = hs_result_summary_json(result);
        assert!(!json.is_null());
        let parsed: serde_json::Value =
            serde_json::from_str(&CStr::from_ptr(json).to_string_lossy()).unwrap();
        assert_eq!(parsed["fulfilled_slots"].as_u64().unwrap(), fulfilled);
        hs_string_free(json);

        hs_result_free(result);
        hs_scenario_free(scenario);
    }
}

#[test]
fn runs_are_reproducible_across_handles() {
    unsafe {
        let scenario = hs_scenario_new();
        for (k, v) in [
            ("nodes", "10"),
            ("edge_probability", "0.35"),
            ("units", "60"),
            ("keywords", "12"),
            ("capacity_bytes", "90000000"),
            ("duration", "100"),
        ] {
            assert_eq!(hs_scenario_set(scenario, c(k).as_ptr(), c(v).as_ptr()), HsStatus::Ok);
        }
        let a = hs_run(scenario);
        let b = hs_run(scenario);
        assert!(!a.is_null() && !b.is_null());
        assert_eq!(hs_result_fulfilled_slots(a), hs_result_fulfilled_slots(b));
        assert_eq!(hs_result_missed_slots(a), hs_result_missed_slots(b));
        assert_eq!(hs_result_mean_delay_s(a), hs_result_mean_delay_s(b));
        hs_result_free(a);
        hs_result_free(b);
        hs_scenario_free(scenario);
    }
}

#[test]
fn write_outputs_creates_files() {
    unsafe {
        let scenario = hs_scenario_new();
        for (k, v) in [
            ("nodes", "10"),
            ("edge_probability", "0.35"),
            ("units", "60"),
            ("keywords", "12"),
            ("capacity_bytes", "90000000"),
            ("duration", "80"),
        ] {
            assert_eq!(hs_scenario_set(scenario, c(k).as_ptr(), c(v).as_ptr()), HsStatus::Ok);
        }
        let result = hs_run(scenario);
        assert!(!result.is_null());
        let dir = std::env::temp_dir().join("hormsim-ffi-test-out");
        let _ = std::fs::remove_dir_all(&dir);
        let c_dir = c(dir.to_str().unwrap());
        assert_eq!(hs_result_write_outputs(result, c_dir.as_ptr()), HsStatus::Ok);
        for file in ["delays.csv", "cdf.csv", "summary.json", "cleanup.csv", "slots.csv"] {
            assert!(dir.join(file).exists(), "{file} missing");
        }
        hs_result_free(result);
        hs_scenario_free(scenario);
    }
}

#[test]
fn null_and_bad_inputs_are_reported() {
    unsafe {
        assert!(hs_scenario_parse(std::ptr::null()).is_null());
        assert!(hs_scenario_load(c("/definitely/not/here.cfg").as_ptr()).is_null());
        assert!(!hs_last_error().is_null());
        assert!(hs_scenario_parse(c("nope = 1\n").as_ptr()).is_null());
        assert!(last_error().contains("nope"));
        assert_eq!(
            hs_scenario_set(std::ptr::null_mut(), c("a").as_ptr(), c("b").as_ptr()),
            HsStatus::NullPointer
        );
        // Invalid scenario caught at run time.
        let scenario = hs_scenario_new();
        assert_eq!(hs_scenario_set(scenario, c("churn_remove").as_ptr(), c("50").as_ptr()), HsStatus::Ok);
        let result = hs_run(scenario);
        assert!(result.is_null());
        assert!(last_error().contains("churn"));
        hs_scenario_free(scenario);
    }
}

#[test]
fn generated_header_exists_with_core_symbols() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/hormsim.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build.rs");
    for symbol in [
        "hs_scenario_new",
        "hs_scenario_parse",
        "hs_scenario_set",
        "hs_run",
        "hs_result_missed_rate",
        "hs_result_summary_json",
        "hs_string_free",
        "HsStatus",
    ] {
        assert!(text.contains(symbol), "{symbol} missing from header");
    }
}

#[test]
fn version_is_static() {
    unsafe {
        let v = CStr::from_ptr(hs_version());
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
