//! Per-command integration tests over synthetic inputs and the bundled
//! minicity fixture.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use roadrisk::manifest::{Overrides, RunManifest};
use roadrisk::{cmd_geodetect, cmd_kde, cmd_moran, cmd_report, cmd_tensor, CliError};

fn fixture_manifest() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/minicity/manifest.toml")
}

fn load_fixture(out: &Path) -> RunManifest {
    let overrides = Overrides {
        out_dir: Some(out.to_path_buf()),
        ..Overrides::default()
    };
    RunManifest::load(&fixture_manifest(), &overrides).unwrap()
}

/// Minimal synthetic inputs: a 3-edge path network, two unit squares and a
/// handful of crashes.
fn write_synthetic(dir: &Path) -> PathBuf {
    fs::write(
        dir.join("nodes.csv"),
        "node_id,x,y\nn0,0,0\nn1,300,0\nn2,600,0\nn3,900,0\n",
    )
    .unwrap();
    fs::write(
        dir.join("edges.csv"),
        "edge_id,from,to\ne0,n0,n1\ne1,n1,n2\ne2,n2,n3\n",
    )
    .unwrap();
    fs::write(
        dir.join("zones.json"),
        r#"[
 {"zone_id": "za", "rings": [[[0,-100],[450,-100],[450,100],[0,100],[0,-100]]]},
 {"zone_id": "zb", "rings": [[[450,-100],[900,-100],[900,100],[450,100],[450,-100]]]}
]"#,
    )
    .unwrap();
    fs::write(
        dir.join("crashes.csv"),
        "id,x,y,datetime,severity,age_group\n\
         c1,100.0,2.0,2019-06-03T08:30:00,slight,26-35\n\
         c2,500.0,-3.0,2019-06-04T17:10:00,slight,19-25\n\
         c3,700.0,15.0,2019-06-05T09:00:00,serious,0-18\n",
    )
    .unwrap();
    fs::write(
        dir.join("manifest.toml"),
        "[inputs]\n\
         crashes = \"crashes.csv\"\n\
         zones = \"zones.json\"\n\
         nodes = \"nodes.csv\"\n\
         edges = \"edges.csv\"\n\n\
         [params]\n\
         seed = 7\n\
         bandwidth = 150.0\n\
         lixel_unit = 100.0\n\
         snap_tolerance = 10.0\n\
         permutations = 99\n\n\
         [output]\n\
         dir = \"out\"\n",
    )
    .unwrap();
    dir.join("manifest.toml")
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

#[test]
fn kde_density_rows_and_off_network_exclusion() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = write_synthetic(dir.path());
    let out_a = dir.path().join("a");
    let overrides = Overrides {
        out_dir: Some(out_a.clone()),
        ..Overrides::default()
    };
    let m = RunManifest::load(&manifest_path, &overrides).unwrap();
    let summary = cmd_kde(&m).unwrap();
    // 3 edges of 300 m at a 100 m unit: 9 lixels, one CSV row each.
    assert_eq!(summary.lixels, 9);
    assert_eq!(summary.events_used, 2);
    assert_eq!(summary.events_excluded, 1); // c3 sits 15 m off the network
    let density = fs::read_to_string(out_a.join("density.csv")).unwrap();
    assert_eq!(density.lines().count(), 10);

    // Rerun into another directory: byte-identical outputs.
    let out_b = dir.path().join("b");
    let m2 = RunManifest::load(
        &manifest_path,
        &Overrides {
            out_dir: Some(out_b.clone()),
            ..Overrides::default()
        },
    )
    .unwrap();
    cmd_kde(&m2).unwrap();
    assert_eq!(
        fs::read(out_a.join("density.csv")).unwrap(),
        fs::read(out_b.join("density.csv")).unwrap()
    );
}

#[test]
fn moran_two_zone_antithetic_field() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path());
    // One slight crash in za only: field {1, 0} gives I = -1 for the pair.
    fs::write(
        dir.path().join("crashes.csv"),
        "id,x,y,datetime,severity,age_group\n\
         c1,100.0,2.0,2019-06-03T08:30:00,slight,26-35\n",
    )
    .unwrap();
    let out = dir.path().join("out_moran");
    let m = RunManifest::load(
        &dir.path().join("manifest.toml"),
        &Overrides {
            out_dir: Some(out.clone()),
            ..Overrides::default()
        },
    )
    .unwrap();
    let summary = cmd_moran(&m).unwrap();
    assert_eq!(summary.i, -1.0);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("moran.json")).unwrap()).unwrap();
    assert_eq!(json["I"].as_f64().unwrap(), -1.0);
    assert_eq!(json["seed"].as_u64().unwrap(), 7);

    // Determinism: same seed, identical lisa.csv bytes.
    let out2 = dir.path().join("out_moran2");
    let m2 = RunManifest::load(
        &dir.path().join("manifest.toml"),
        &Overrides {
            out_dir: Some(out2.clone()),
            ..Overrides::default()
        },
    )
    .unwrap();
    cmd_moran(&m2).unwrap();
    assert_eq!(
        fs::read(out.join("lisa.csv")).unwrap(),
        fs::read(out2.join("lisa.csv")).unwrap()
    );
}

#[test]
fn moran_grid_matches_library_computation() {
    // 3x3 grid of 100 m zones with one crash per zone at varying
    // severities; the command output must equal the direct library path.
    let dir = tempfile::tempdir().unwrap();
    let mut zones = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            let (x0, y0) = (c as f64 * 100.0, r as f64 * 100.0);
            zones.push(format!(
                "{{\"zone_id\": \"z{r}{c}\", \"rings\": [[[{x0},{y0}],[{x1},{y0}],[{x1},{y1}],[{x0},{y1}],[{x0},{y0}]]]}}",
                x1 = x0 + 100.0,
                y1 = y0 + 100.0,
            ));
        }
    }
    fs::write(
        dir.path().join("zones.json"),
        format!("[{}]", zones.join(",")),
    )
    .unwrap();
    let severities = [
        "fatal", "slight", "serious", "slight", "fatal", "slight", "serious", "slight", "fatal",
    ];
    let mut crashes = String::from("id,x,y,datetime,severity,age_group\n");
    for (i, sev) in severities.iter().enumerate() {
        let (r, c) = (i / 3, i % 3);
        crashes.push_str(&format!(
            "c{i},{},{},2019-06-03T10:00:00,{sev},26-35\n",
            c as f64 * 100.0 + 50.0,
            r as f64 * 100.0 + 50.0
        ));
    }
    fs::write(dir.path().join("crashes.csv"), crashes).unwrap();
    fs::write(
        dir.path().join("manifest.toml"),
        "[inputs]\nzones = \"zones.json\"\ncrashes = \"crashes.csv\"\n\n\
         [params]\nseed = 11\npermutations = 199\n\n[output]\ndir = \"out\"\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let m = RunManifest::load(
        &dir.path().join("manifest.toml"),
        &Overrides {
            out_dir: Some(out.clone()),
            ..Overrides::default()
        },
    )
    .unwrap();
    let summary = cmd_moran(&m).unwrap();

    // Same computation straight through the library.
    use roadrisk_core::autocorr::{lisa, permutation_test_global, SpatialWeights};
    use roadrisk_core::ingest::{aggregate_zone_swi, load_zones, CrashFilter, ZoneField};
    let zone_list = load_zones(&dir.path().join("zones.json")).unwrap();
    let crash_list = roadrisk_core::ingest::load_crashes(&dir.path().join("crashes.csv")).unwrap();
    let agg = aggregate_zone_swi(&crash_list, &zone_list, &CrashFilter::default());
    let weights = SpatialWeights::queen_from_zones(&zone_list);
    let expected_field: ZoneField = agg.field;
    let expected = permutation_test_global(&expected_field, &weights, 199, 11).unwrap();
    assert_eq!(summary.i, expected.i);
    assert_eq!(summary.p, expected.p);
    let expected_lisa = lisa(&expected_field, &weights, 199, 11, 0.05).unwrap();
    let written = fs::read_to_string(out.join("lisa.csv")).unwrap();
    for (line, want) in written.lines().skip(1).zip(&expected_lisa) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], want.zone_id);
        assert!((cols[4].parse::<f64>().unwrap() - want.local_i).abs() <= 1e-9);
        assert_eq!(cols[6], want.class.as_str());
    }
}

#[test]
fn moran_compare_against_prior_run() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = write_synthetic(dir.path());
    let out_a = dir.path().join("a");
    let m = RunManifest::load(
        &manifest_path,
        &Overrides {
            out_dir: Some(out_a.clone()),
            ..Overrides::default()
        },
    )
    .unwrap();
    cmd_moran(&m).unwrap();

    // Second run comparing against the first: identical inputs, so every
    // zone is unchanged.
    let manifest_b = dir.path().join("manifest_b.toml");
    let body = fs::read_to_string(&manifest_path).unwrap().replace(
        "[output]",
        &format!(
            "compare_with = \"{}\"\n\n[output]",
            out_a.join("lisa.csv").display()
        ),
    );
    fs::write(&manifest_b, body).unwrap();
    let out_b = dir.path().join("b");
    let m2 = RunManifest::load(
        &manifest_b,
        &Overrides {
            out_dir: Some(out_b.clone()),
            ..Overrides::default()
        },
    )
    .unwrap();
    cmd_moran(&m2).unwrap();
    let changes = fs::read_to_string(out_b.join("changes.csv")).unwrap();
    for line in changes.lines().skip(1) {
        assert!(line.ends_with(",unchanged"), "line: {line}");
    }
}

#[test]
fn geodetect_fixture_runs_nine_factors() {
    let dir = tempfile::tempdir().unwrap();
    let m = load_fixture(&dir.path().join("out"));
    let summary = cmd_geodetect(&m).unwrap();
    assert_eq!(summary.factors, 9);
    assert_eq!(summary.interactions, 36);
    let pd = fs::read_to_string(dir.path().join("out/pd.csv")).unwrap();
    // Header + 9 factor rows + 36 interaction rows.
    assert_eq!(pd.lines().count(), 46);
    // The generative fixture plants STATION as the dominant factor at the
    // permutation floor p = 1/(199+1).
    let first = pd.lines().nth(1).unwrap();
    assert!(first.starts_with("STATION,"), "first row: {first}");
    assert!(first.contains(",1,0.005,"), "first row: {first}");
}

#[test]
fn geodetect_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    cmd_geodetect(&load_fixture(&out_a)).unwrap();
    cmd_geodetect(&load_fixture(&out_b)).unwrap();
    assert_eq!(read_dir_bytes(&out_a), read_dir_bytes(&out_b));
}

#[test]
fn tensor_fixture_shapes_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let m = load_fixture(&out);
    let summary = cmd_tensor(&m).unwrap();
    assert_eq!(summary.dims, [16, 7, 24]);
    assert!(summary.swept);
    // Factor tables: one labeled row per axis element.
    let spatial = fs::read_to_string(out.join("factors_spatial.csv")).unwrap();
    assert_eq!(spatial.lines().count(), 17);
    let age = fs::read_to_string(out.join("factors_age.csv")).unwrap();
    assert_eq!(age.lines().count(), 8);
    let time = fs::read_to_string(out.join("factors_time.csv")).unwrap();
    assert_eq!(time.lines().count(), 25);
    // Sweep table: one row per candidate.
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 7);
    // patterns.json uses the band labels on the age axis.
    let patterns = fs::read_to_string(out.join("patterns.json")).unwrap();
    assert!(patterns.contains("\"26-35\"") || patterns.contains("\"0-18\""));
}

#[test]
fn tensor_pattern_field_feeds_geodetect() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    cmd_tensor(&load_fixture(&out)).unwrap();

    // Chain: use one decomposed (age, time) pattern field as the detector
    // response. The chained manifest lives in a temp dir, so input paths
    // must be absolute.
    let base = fixture_manifest();
    let fixture_dir = base.parent().unwrap();
    let mut body = fs::read_to_string(&base).unwrap();
    for file in ["crashes.csv", "pois.csv", "zones.json", "nodes.csv", "edges.csv"] {
        body = body.replace(
            &format!("\"{file}\""),
            &format!("\"{}\"", fixture_dir.join(file).display()),
        );
    }
    body = body.replace(
        "[output]",
        &format!(
            "response = \"field\"\nresponse_field = \"{}\"\nresponse_column = \"a0_t0\"\n\n[output]",
            out.join("pattern_fields.csv").display()
        ),
    );
    let chained = dir.path().join("chained.toml");
    fs::write(&chained, body).unwrap();
    let m = RunManifest::load(
        &chained,
        &Overrides {
            out_dir: Some(dir.path().join("out2")),
            ..Overrides::default()
        },
    )
    .unwrap();
    let summary = cmd_geodetect(&m).unwrap();
    assert_eq!(summary.factors + summary.skipped, 9);
}

#[test]
fn report_single_crash_single_hot_cell() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path());
    fs::write(
        dir.path().join("crashes.csv"),
        "id,x,y,datetime,severity,age_group\n\
         c1,100.0,2.0,2019-06-03T08:30:00,slight,26-35\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let m = RunManifest::load(
        &dir.path().join("manifest.toml"),
        &Overrides {
            out_dir: Some(out.clone()),
            ..Overrides::default()
        },
    )
    .unwrap();
    cmd_report(&m).unwrap();
    let svg = fs::read_to_string(out.join("heatmap.svg")).unwrap();
    let non_white = svg
        .lines()
        .filter(|l| l.contains("<rect") && !l.contains("fill=\"#ffffff\""))
        .count();
    assert_eq!(non_white, 1);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["crashes"]["total"], 1);
    assert_eq!(report["crashes"]["total_swi"], 1);
    assert_eq!(report["heatmap"]["cells"][0][4], 1);
}

#[test]
fn report_empty_dataset_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic(dir.path());
    fs::write(
        dir.path().join("crashes.csv"),
        "id,x,y,datetime,severity,age_group\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let m = RunManifest::load(
        &dir.path().join("manifest.toml"),
        &Overrides {
            out_dir: Some(out.clone()),
            ..Overrides::default()
        },
    )
    .unwrap();
    let summary = cmd_report(&m).unwrap();
    assert_eq!(summary.crashes, 0);
    assert_eq!(summary.total_swi, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["crashes"]["total"], 0);
}

#[test]
fn report_totals_match_ingest_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    cmd_report(&load_fixture(&out)).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    // Heatmap cells sum to the total SWI.
    let cell_sum: u64 = report["heatmap"]["cells"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|row| row.as_array().unwrap())
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(cell_sum, report["crashes"]["total_swi"].as_u64().unwrap());
    // Zone totals partition the SWI.
    let zones = &report["zones"];
    assert_eq!(
        zones["assigned_swi"].as_u64().unwrap() + zones["unassigned_swi"].as_u64().unwrap(),
        report["crashes"]["total_swi"].as_u64().unwrap()
    );
}

#[test]
fn missing_inputs_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = write_synthetic(dir.path());
    let m = RunManifest::load(
        &manifest_path,
        &Overrides {
            out_dir: Some(dir.path().join("out")),
            ..Overrides::default()
        },
    )
    .unwrap();
    // geodetect needs pois, which the synthetic manifest does not provide.
    match cmd_geodetect(&m) {
        Err(CliError::Validation(_)) => {}
        other => panic!("expected validation error, got {other:?}"),
    }
    // No partial outputs on validation failure.
    assert!(!dir.path().join("out").exists());
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_roadrisk");
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = write_synthetic(dir.path());

    // Validation failure: manifest that points at a missing file.
    let broken = dir.path().join("broken.toml");
    fs::write(
        &broken,
        "[inputs]\ncrashes = \"nope.csv\"\n\n[params]\nseed = 1\n\n[output]\ndir = \"out\"\n",
    )
    .unwrap();
    let status = Command::new(bin)
        .args(["report", "--manifest"])
        .arg(&broken)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Runtime failure: constant zone field has zero variance.
    fs::write(
        dir.path().join("crashes.csv"),
        "id,x,y,datetime,severity,age_group\n\
         c1,100.0,2.0,2019-06-03T08:30:00,slight,26-35\n\
         c2,500.0,-3.0,2019-06-04T17:10:00,slight,19-25\n",
    )
    .unwrap();
    let status = Command::new(bin)
        .args(["moran", "--manifest"])
        .arg(&manifest_path)
        .arg("--out")
        .arg(dir.path().join("out_rt"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));

    // Success path, and the off-network exclusion lands in stderr.
    let output = Command::new(bin)
        .args(["kde", "--manifest"])
        .arg(&manifest_path)
        .arg("--out")
        .arg(dir.path().join("out_ok"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("0 excluded"), "stderr: {stderr}");
}
