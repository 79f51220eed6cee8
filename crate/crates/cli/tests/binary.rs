mod common;

use common::{stderr, stdout, voodoo, write_fixture};
use voodoo_core::persist::{load_model, LoadedModel};

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(&dir.path().join("data"), 300, 100);
    dir
}

fn s(p: &std::path::Path) -> String {
    p.display().to_string()
}

#[test]
fn train_writes_record_and_model() {
    let dir = fixture();
    let (data, out, model) = (dir.path().join("data"), dir.path().join("runs.csv"), dir.path().join("m.vdnn"));
    let run = voodoo(
        &["train", "--data-dir", &s(&data), "--dims", "64", "--seeds", "5", "--out", &s(&out), "--save-model", &s(&model)],
        None,
    );
    assert!(run.status.success(), "{}", stderr(&run));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], voodoo_cli::record::RUN_RECORD_HEADER);
    assert!(lines[1].starts_with("mnist,64,svd,5,"), "{}", lines[1]);
    assert!(stdout(&run).contains("mnist,64,svd,5,"));
    let LoadedModel::Voodoo(m) = load_model(&model).unwrap() else { panic!("wrong family") };
    assert_eq!((m.layer().dim(), m.layer().seed(), m.num_classes()), (64, 5, 10));
}

#[test]
fn env_var_supplies_data_dir_and_flag_overrides_it() {
    let dir = fixture();
    let data = dir.path().join("data");
    let run = voodoo(&["train", "--dims", "32", "--format", "json"], Some(&data));
    assert!(run.status.success(), "{}", stderr(&run));
    let row: serde_json::Value = serde_json::from_str(stdout(&run).lines().next().unwrap()).unwrap();
    assert_eq!(row["d"], 32);

    let missing = dir.path().join("nowhere");
    let run = voodoo(&["train", "--dims", "32", "--data-dir", &s(&missing)], Some(&data));
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains(&s(&missing)), "{}", stderr(&run));
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = fixture();
    let cfg = dir.path().join("exp.conf");
    std::fs::write(&cfg, format!("# fixture\ndata_dir = {}\ndims = 16\nseeds = 3\n", s(&dir.path().join("data")))).unwrap();
    let run = voodoo(&["train", "--config", &s(&cfg), "--dims", "24"], None);
    assert!(run.status.success(), "{}", stderr(&run));
    assert!(stdout(&run).contains("mnist,24,svd,3,"), "{}", stdout(&run));

    std::fs::write(&cfg, "colour = blue\n").unwrap();
    let run = voodoo(&["train", "--config", &s(&cfg)], None);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("colour"));
}

#[test]
fn invalid_hyperparameters_exit_2() {
    let dir = fixture();
    let data = s(&dir.path().join("data"));
    for args in [
        vec!["baseline", "--data-dir", &data, "--epochs", "0"],
        vec!["train", "--data-dir", &data, "--dims", "0"],
        vec!["train", "--data-dir", &data, "--solver", "qr"],
        vec!["train", "--data-dir", &data, "--dataset", "imagenet"],
    ] {
        let run = voodoo(&args, None);
        assert_eq!(run.status.code(), Some(2), "{args:?}: {}", stderr(&run));
    }
}

#[test]
fn single_width_scaling_keeps_records_then_fails() {
    let dir = fixture();
    let out = dir.path().join("scaling.csv");
    let run = voodoo(
        &["scaling", "--data-dir", &s(&dir.path().join("data")), "--dims", "32", "--seeds", "1,2", "--out", &s(&out)],
        None,
    );
    assert_eq!(run.status.code(), Some(1), "{}", stderr(&run));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 3);
}

#[test]
fn robustness_drops_duplicate_angles() {
    let dir = fixture();
    let out = dir.path().join("rot.csv");
    let run = voodoo(
        &[
            "robustness", "--data-dir", &s(&dir.path().join("data")), "--dims", "64", "--hidden", "16", "--epochs", "2",
            "--angles", "0,15,15,-30", "--out", &s(&out),
        ],
        None,
    );
    assert!(run.status.success(), "{}", stderr(&run));
    assert!(stderr(&run).contains("15"), "{}", stderr(&run));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "angle,accuracy,model_tag");
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines.iter().any(|l| l.starts_with("-30,") && l.ends_with(",sgd")));
}

#[test]
fn entropy_reports_both_families() {
    let dir = fixture();
    let data = s(&dir.path().join("data"));
    let (vm, sm) = (dir.path().join("v.vdnn"), dir.path().join("s.vdnn"));
    assert!(voodoo(&["train", "--data-dir", &data, "--dims", "64", "--save-model", &s(&vm)], None).status.success());
    let run = voodoo(&["baseline", "--data-dir", &data, "--hidden", "16", "--epochs", "2", "--seeds", "1", "--save-model", &s(&sm)], None);
    assert!(run.status.success(), "{}", stderr(&run));

    let run = voodoo(&["entropy", &s(&vm), &s(&sm), "--bins", "32"], None);
    let text = stdout(&run);
    assert!(matches!(run.status.code(), Some(0) | Some(1)), "{}", stderr(&run));
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.contains(",voodoo,32,") && text.contains(",sgd,32,"), "{text}");

    let run = voodoo(&["entropy", &s(&dir.path().join("absent.vdnn"))], None);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("absent.vdnn"));

    std::fs::write(dir.path().join("junk.vdnn"), b"VDNNjunk").unwrap();
    let run = voodoo(&["entropy", &s(&dir.path().join("junk.vdnn"))], None);
    assert_eq!(run.status.code(), Some(2));
}
