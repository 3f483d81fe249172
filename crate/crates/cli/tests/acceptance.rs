//! Acceptance: reruns of `annotate` and `train` with identical seeds and
//! inputs produce byte-identical outputs.

use std::path::Path;
use std::process::Command;

fn fairtone(args: &[&str], dir: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_fairtone"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "fairtone {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("reading {rel}: {e}"))
}

fn write_tone_png(path: &Path, rgb: (u8, u8, u8), lighter_corner: bool) {
    let img = image::RgbImage::from_fn(96, 96, |x, y| {
        if lighter_corner && x < 20 && y < 20 {
            image::Rgb([240, 222, 200])
        } else {
            image::Rgb([rgb.0, rgb.1, rgb.2])
        }
    });
    img.save(path).unwrap();
}

/// Criterion 11, annotate half: two runs over the same manifest and
/// images give byte-identical CSV and report JSON.
#[test]
fn acceptance_11a_annotate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write_tone_png(&dir.path().join("a.png"), (204, 164, 126), false);
    write_tone_png(&dir.path().join("b.png"), (150, 105, 70), true);
    write_tone_png(&dir.path().join("c.png"), (237, 214, 188), false);
    std::fs::write(
        dir.path().join("manifest.csv"),
        "image_id,path,human_fitzpatrick\na,a.png,3\nb,b.png,1\nc,c.png,2\nmissing,zz.png,\n",
    )
    .unwrap();

    for run in ["one", "two"] {
        fairtone(
            &[
                "annotate",
                "--manifest",
                "manifest.csv",
                "--out",
                &format!("{run}.csv"),
                "--report",
                &format!("{run}.report.json"),
                "--workers",
                if run == "one" { "1" } else { "3" },
            ],
            dir.path(),
        );
    }
    assert_eq!(read(dir.path(), "one.csv"), read(dir.path(), "two.csv"));
    assert_eq!(
        read(dir.path(), "one.report.json"),
        read(dir.path(), "two.report.json")
    );
    println!("ACCEPTANCE 11a PASS annotate determinism (across worker counts)");
}

/// Criterion 11, train half: two runs with the same seed and spec give
/// byte-identical model, history and evaluation files.
#[test]
fn acceptance_11b_train_eval_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("spec.cfg"),
        "n_train = 256\nn_test = 256\nseed = 7\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("train.cfg"), "epochs = 6\nseed = 3\n").unwrap();

    for run in ["one", "two"] {
        fairtone(
            &[
                "train", "--method", "clgr", "--spec", "spec.cfg", "--config", "train.cfg",
                "--out-dir", run,
            ],
            dir.path(),
        );
    }
    for file in ["model.json", "history.json", "eval.json"] {
        assert_eq!(
            read(dir.path(), &format!("one/{file}")),
            read(dir.path(), &format!("two/{file}")),
            "{file} differs between identical runs"
        );
    }
    println!("ACCEPTANCE 11b PASS train/eval determinism");
}
