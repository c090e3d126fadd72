use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cellfree_chain::io::{parse_config, Preset};
use cellfree_chain::metrics::{fronthaul_bitrate, FronthaulParams};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellfree-chain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_string_lossy().into_owned()
}

#[test]
fn validate_accepts_good_config_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("good.toml");
    fs::write(&config, "[network]\nK = 12\n").unwrap();
    let out = dir.path().join("out");
    let res = cli(&["validate", config.to_str().unwrap(), "--out", &out_arg(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(!out.exists());
}

#[test]
fn errors_map_to_category_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[network]\nb_l = 0\n").unwrap();
    let res = cli(&["validate", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("b_l ≥ 1"));

    assert_eq!(cli(&["preset", "fig9"]).status.code(), Some(3));
    assert_eq!(
        cli(&["validate", dir.path().join("missing.toml").to_str().unwrap()])
            .status
            .code(),
        Some(6)
    );
    // Usage errors come from the argument parser.
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn bitrate_preset_matches_formula() {
    let dir = tempfile::tempdir().unwrap();
    let res = cli(&["preset", "bitrate", "--out", &out_arg(dir.path())]);
    assert!(res.status.success());
    let csv = fs::read_to_string(dir.path().join("bitrate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("b_l,Br_f,b_s"));
    let (cfg, _) = Preset::Bitrate.resolve(&[]).unwrap();
    let mut rows = 0;
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let rate = fronthaul_bitrate(&FronthaulParams::for_ap(&cfg.with_uniform_bits(cols[0] as u32), 0)).unwrap();
        assert_eq!(cols[1], rate.bits_per_second);
        assert_eq!(cols[2], rate.b_s as f64);
        rows += 1;
    }
    assert_eq!(rows, 8);
}

#[test]
fn rerun_from_emitted_config_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let res = cli(&[
        "preset",
        "fig4",
        "--out",
        &out_arg(&first),
        "--seed",
        "17",
        "--workers",
        "2",
        "--override",
        "n_placements=6",
        "--override",
        "plan.n_blocks_per_placement=2",
        "--override",
        "n_samples_per_block=10",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read(first.join("nmse.csv")).unwrap();
    let text = String::from_utf8(csv.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 9);
    assert!(lines.iter().all(|l| l.split(',').count() == 9));
    assert_eq!(
        lines[0],
        "b_l,NoQuant,Option1,Option2,Option3,NoQuant_hw,Option1_hw,Option2_hw,Option3_hw"
    );

    let (cfg, plan) = parse_config(&first.join("config.toml"), &[]).unwrap();
    assert_eq!(plan.master_seed, 17);
    assert_eq!(cfg.seed, 17);
    assert_eq!(plan.n_placements, 6);

    let second = dir.path().join("second");
    let res = cli(&[
        "run",
        first.join("config.toml").to_str().unwrap(),
        "--out",
        &out_arg(&second),
        "--workers",
        "1",
    ]);
    assert!(res.status.success());
    assert_eq!(fs::read(second.join("nmse.csv")).unwrap(), csv);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["manifest"]["config"]["seed"], 17);
    assert!(manifest["manifest"]["sigma2_watts"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest["result"]["metadata"]["aborted_trials"], 0);
}

#[test]
fn noise_cdf_preset_writes_pair_tables() {
    let dir = tempfile::tempdir().unwrap();
    let res = cli(&[
        "preset",
        "fig2",
        "--out",
        &out_arg(dir.path()),
        "--override",
        "n_samples_per_block=12000",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for pair in 1..=4 {
        for part in ["re", "im", "uniform"] {
            let text = fs::read_to_string(dir.path().join(format!("noise_cdf_pair{pair}_{part}.csv"))).unwrap();
            let mut lines = text.lines();
            assert_eq!(lines.next(), Some("value,cdf"));
            let rows: Vec<(f64, f64)> = lines
                .map(|l| {
                    let (a, b) = l.split_once(',').unwrap();
                    (a.parse().unwrap(), b.parse().unwrap())
                })
                .collect();
            assert!(rows.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
            assert_eq!(rows.last().unwrap().1, 1.0);
        }
    }
}

#[test]
fn selftest_passes() {
    let res = cli(&["selftest"]);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(res.status.success(), "{stdout}");
    assert_eq!(stdout.matches("[PASS]").count(), 3);
}
