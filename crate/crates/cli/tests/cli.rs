use std::process::{Command, Output};

fn eic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eic")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn region_square() {
    let out = eic(&["region", "--delta", "1/4", "--eps", "5/16"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("facet_label,a1,a2,c\n"));
    let vertices: Vec<&str> = text.lines().skip_while(|l| *l != "vertex_x,vertex_y").skip(1).collect();
    assert_eq!(vertices, ["0,0", "0.75,0", "0.75,0.75", "0,0.75"]);
}

#[test]
fn region_from_config_file() {
    let dir = std::env::temp_dir().join(format!("eic-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("indep.cfg");
    std::fs::write(&path, "# independent links\nmodel = independent\ndelta = 0.25\neps1 = 0.3125\neps2 = 0.3125\n").unwrap();
    // The file wins over the flags.
    let out = eic(&["region", "--delta", "0.9", "--config", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("individual-1,1,0,0.75"));
}

#[test]
fn simulate_csv_rows() {
    let out = eic(&["simulate", "--m", "1500", "--trials", "3", "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "seed,m,delta,eps,t_p1,t_p2,t_p3,t_total,decoded,error_type,sum_rate");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("7,1500,0.2,"));
    assert_eq!(stdout(&eic(&["simulate", "--m", "1500", "--trials", "3", "--seed", "7"])), text);
}

#[test]
fn corner_mirror_swaps_rates() {
    let base = ["simulate", "--scheme", "corner", "--delta", "1/4", "--eps", "5/7", "--m", "2000", "--trials", "1"];
    let plain = stdout(&eic(&base));
    let mut args = base.to_vec();
    args.push("--mirror");
    let mirrored = stdout(&eic(&args));
    let last = |t: &str| {
        let f: Vec<String> = t.lines().nth(1).unwrap().split(',').map(String::from).collect();
        (f[11].clone(), f[12].clone())
    };
    let (a1, a2) = last(&plain);
    assert_eq!(last(&mirrored), (a2, a1));
}

#[test]
fn simulate_json() {
    let out = eic(&["simulate", "--m", "800", "--trials", "2", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["aggregate"]["trials"], 2);
    assert_eq!(v["trials"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_codes() {
    let scope = eic(&["simulate", "--delta", "1/2", "--eps", "3/4", "--m", "100", "--trials", "1"]);
    assert_eq!(scope.status.code(), Some(2));
    let corner = eic(&["simulate", "--scheme", "corner", "--delta", "1/4", "--eps", "0.5", "--m", "100"]);
    assert_eq!(corner.status.code(), Some(2));
    let bad = eic(&["simulate", "--m", "0", "--trials", "1"]);
    assert_eq!(bad.status.code(), Some(1));
    let missing = eic(&["region", "--config", "/nonexistent/params.cfg"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn out_of_condition_opt_in() {
    let out = eic(&[
        "simulate",
        "--delta",
        "1/2",
        "--eps",
        "3/4",
        "--m",
        "400",
        "--trials",
        "1",
        "--allow-out-of-condition",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn figures_are_stable() {
    for fig in ["fig2", "fig3", "fig5", "sec5c"] {
        let a = eic(&["figure", fig]);
        assert!(a.status.success());
        assert_eq!(a.stdout, eic(&["figure", fig]).stdout);
    }
    let sec = stdout(&eic(&["figure", "sec5c"]));
    assert!(sec.contains("stated_total,9/4,2.25"));
    assert!(sec.contains("stated_sum_rate,8/9,"));
}

#[test]
fn verify_entropy_json() {
    let out = eic(&["verify-entropy", "--cases", "20", "--seed", "3"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["precursor_violations"], 0);
    assert_eq!(v["reports"].as_array().unwrap().len(), 20);
    assert!(v["reports"][0]["leakage"]["slack"].is_number());
    assert!(v["reports"][0]["leakage_c_slack"]["slack"].is_number());
    assert_eq!(out.stdout, eic(&["verify-entropy", "--cases", "20", "--seed", "3"]).stdout);
}

#[test]
fn error_prob_and_sweep() {
    let out = eic(&["error-prob", "--m", "200,400", "--trials", "5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("m,trials,error_i_freq,error_ii_freq,type1_bound\n"));

    let out = eic(&["sweep", "--deltas", "0.1,0.9", "--m", "300", "--trials", "2"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 2);
}
