use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use image::{GrayImage, Luma, Rgb, RgbImage};

fn rankmin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rankmin")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn printed(out: &Output, key: &str) -> f64 {
    stdout(out)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no `{key}` in output:\n{}", stdout(out)))
        .parse()
        .unwrap()
}

#[test]
fn complete_with_zero_weights_on_full_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = rankmin(&["generate-matrix", "--rows", "12", "--cols", "8", "--rank", "2", "--ratio", "1", "--out", p(d)]);
    assert!(gen.status.success(), "{}", stderr(&gen));
    let out = rankmin(&[
        "complete",
        "--obs",
        p(&d.join("obs.csv")),
        "--truth",
        p(&d.join("truth.csv")),
        "--penalty",
        "weighted:0,0,0,0,0,0,0,0",
        "--out",
        p(&d.join("run")),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(printed(&out, "rel_error") <= 1e-6);
    let trace = fs::read_to_string(d.join("run/trace.csv")).unwrap();
    assert!(trace.starts_with("iter,objective,loss,penalty,step_gap,rank,subgrad_residual,step,svd_count,elapsed_ms\n"));
    assert!(d.join("run/recovered.csv").exists());
}

#[test]
fn missing_input_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = rankmin(&["complete", "--obs", p(&missing), "--penalty", "nuclear:1", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.csv"));
}

#[test]
fn malformed_csv_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("obs.csv");
    fs::write(&obs, "3,3\n0,0,1.0\n1,x,2.0\n").unwrap();
    let out = rankmin(&["complete", "--obs", p(&obs), "--penalty", "nuclear:1", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(":3:"), "{}", stderr(&out));
}

#[test]
fn bad_penalty_and_step_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("obs.csv");
    fs::write(&obs, "2,2\n0,0,1.0\n").unwrap();
    for extra in [&["--penalty", "lasso:1"][..], &["--penalty", "nuclear:1", "--step", "1.5"][..]] {
        let mut args = vec!["complete", "--obs", p(&obs), "--out", p(dir.path())];
        args.extend_from_slice(extra);
        assert_eq!(rankmin(&args).status.code(), Some(2));
    }
}

fn sample_rgb(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("in.png");
    RgbImage::from_fn(24, 16, |x, y| Rgb([(x * 10) as u8, (y * 15) as u8, 77])).save(&path).unwrap();
    path
}

#[test]
fn inpaint_with_nothing_missing_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample_rgb(dir.path());
    let out_path = dir.path().join("out.png");
    let out = rankmin(&[
        "inpaint",
        "--image",
        p(&input),
        "--random-ratio",
        "1.0",
        "--penalty",
        "weighted:0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0",
        "--out",
        p(&out_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(image::open(&out_path).unwrap().into_rgb8(), image::open(&input).unwrap().into_rgb8());
    assert_eq!(printed(&out, "psnr_db"), 120.0);
}

#[test]
fn inpaint_with_an_empty_text_mask_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let input = sample_rgb(dir.path());
    let mask = dir.path().join("mask.png");
    GrayImage::from_pixel(24, 16, Luma([0])).save(&mask).unwrap();
    let out_path = dir.path().join("out.png");
    let out = rankmin(&["inpaint", "--image", p(&input), "--mask", p(&mask), "--penalty", "nuclear:1", "--out", p(&out_path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(printed(&out, "missing_pixels"), 0.0);
    assert_eq!(image::open(&out_path).unwrap().into_rgb8(), image::open(&input).unwrap().into_rgb8());
}

#[test]
fn inpaint_fills_a_text_mask_and_keeps_other_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("img.png");
    let gen = rankmin(&["generate-image", "--rows", "40", "--cols", "40", "--seed", "3", "--out", p(&input)]);
    assert!(gen.status.success());
    let mask = dir.path().join("mask.png");
    GrayImage::from_fn(40, 40, |x, y| Luma([if y % 8 == 3 && x % 5 != 0 { 255 } else { 0 }])).save(&mask).unwrap();
    let out_path = dir.path().join("out.png");
    let out = rankmin(&[
        "inpaint", "--image", p(&input), "--mask", p(&mask), "--reference", p(&input),
        "--penalty", "truncated:5:20", "--out", p(&out_path),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(printed(&out, "psnr_db") > 30.0);
    let (a, b) = (image::open(&input).unwrap().into_rgb8(), image::open(&out_path).unwrap().into_rgb8());
    let m = image::open(&mask).unwrap().into_luma8();
    for (x, y, px) in m.enumerate_pixels() {
        if px.0[0] == 0 {
            assert_eq!(a.get_pixel(x, y), b.get_pixel(x, y));
        }
    }
}

#[test]
fn inpaint_rejects_non_rgb_input() {
    let dir = tempfile::tempdir().unwrap();
    let gray = dir.path().join("gray.png");
    GrayImage::from_pixel(8, 8, Luma([9])).save(&gray).unwrap();
    let out = rankmin(&[
        "inpaint", "--image", p(&gray), "--random-ratio", "0.5", "--penalty", "nuclear:1",
        "--out", p(&dir.path().join("o.png")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("8-bit RGB"));
}

const ONE_CELL: &str = r#"{
  "schema": 1,
  "axis": "rank",
  "values": [2],
  "problem": { "rows": 20, "cols": 15, "rank": 2, "noise": 0.0, "observed_ratio": 1.0 },
  "solvers": [ { "name": "plain", "algorithm": "ista", "penalty": { "variant": "weighted", "weights": [0,0,0,0,0,0,0,0,0,0,0,0,0,0,0] } } ],
  "repetitions": 1
}"#;

#[test]
fn one_cell_bench_writes_one_summary_row() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("grid.json");
    fs::write(&spec, ONE_CELL).unwrap();
    let out_dir = dir.path().join("out");
    let out = rankmin(&["bench-synthetic", "--spec", p(&spec), "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    let mean_re: f64 = summary.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!(mean_re <= 1e-6);
    assert_eq!(fs::read_to_string(out_dir.join("failures.csv")).unwrap().lines().count(), 1);
}

#[test]
fn bench_spec_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("grid.json");
    let cases = [
        (ONE_CELL.replace("\"ista\"", "\"svt\""), "svt"),
        (ONE_CELL.replace("\"schema\": 1", "\"schema\": 7"), "schema"),
        (ONE_CELL.replace("\"repetitions\": 1", "\"repetitions\": 1, \"colour\": 3"), "colour"),
        (ONE_CELL.replace("\"values\": [2]", "\"values\": []"), "values"),
    ];
    for (text, needle) in cases {
        fs::write(&spec, text).unwrap();
        let out = rankmin(&["bench-synthetic", "--spec", p(&spec), "--out", p(dir.path())]);
        assert_eq!(out.status.code(), Some(2), "{needle}");
        assert!(stderr(&out).contains(needle), "{needle}: {}", stderr(&out));
    }
}

#[test]
fn bench_seed_flag_overrides_the_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("grid.json");
    fs::write(&spec, ONE_CELL.replace("\"observed_ratio\": 1.0", "\"observed_ratio\": 0.6").replace("\"weighted\", \"weights\": [0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]", "\"nuclear\", \"lambda\": 1.0")).unwrap();
    let run = |seed: &str, out: &str| {
        let o = dir.path().join(out);
        assert!(rankmin(&["bench-synthetic", "--spec", p(&spec), "--out", p(&o), "--seed", seed]).status.success());
        fs::read_to_string(o.join("cells.csv")).unwrap()
    };
    assert_eq!(run("1", "a"), run("1", "b"));
    assert_ne!(run("1", "a"), run("2", "c"));
}

#[test]
fn shipped_specs_parse() {
    let specs = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs");
    for name in ["fig1_rank.json", "fig3_noise.json"] {
        let _: rankmin::bench::GridSpec<rankmin::synth::SingleGenSpec> =
            rankmin_cli::commands::read_config(&specs.join(name)).unwrap();
    }
    let _: rankmin::bench::GridSpec<rankmin::synth::MultiGenSpec> =
        rankmin_cli::commands::read_config(&specs.join("fig5_multi.json")).unwrap();
}
