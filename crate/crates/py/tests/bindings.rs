use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

fn with_module(code: &str) {
    Python::attach(|py| {
        let m = PyModule::new(py, "visage").unwrap();
        visage::visage(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("visage", m).unwrap();
        let src = CString::new(code).unwrap();
        if let Err(e) = py.run(&src, Some(&globals), None) {
            e.display(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn image_round_trip_and_rect_sum() {
    with_module(
        r#"
img = visage.Image(4, 3, 1, bytes(range(12)))
assert (img.width, img.height, img.channels) == (4, 3, 1)
assert img.rect_sum(0, 0, 4, 3) == sum(range(12))
assert img.rect_sum(1, 1, 2, 2) == 5 + 6 + 9 + 10
back = visage.Image.from_pnm(img.to_pnm())
assert back.data == img.data
try:
    visage.Image(4, 3, 1, b"short")
    raise AssertionError("accepted a short buffer")
except ValueError:
    pass
"#,
    );
}

#[test]
fn model_trains_and_predicts() {
    with_module(
        r#"
xs = [[0.0, 0.0], [0.1, 0.2], [0.2, 0.1], [5.0, 5.0], [5.1, 4.9], [4.8, 5.2]]
ys = [1, 1, 1, 2, 2, 2]
m = visage.Model.train(xs, ys, c=10.0, gamma=0.5)
assert m.labels == [1, 2]
assert m.predict([0.05, 0.1])[0] == 1
assert m.predict([5.0, 5.1])[0] == 2
assert m.to_libsvm().startswith("svm_type c_svc")
assert len(m.decision_values([0.0, 0.0])) == 1
"#,
    );
}

#[test]
fn confusion_rates_match_hand_arithmetic() {
    with_module(
        r#"
r = visage.confusion_rates([[3, 1], [0, 4]])
assert abs(r["class_rates"][0] - 75.0) < 1e-9
assert abs(r["class_rates"][1] - 100.0) < 1e-9
assert abs(r["overall"] - 87.5) < 1e-9
"#,
    );
}

#[test]
fn session_processes_a_synthetic_frame() {
    with_module(
        r#"
assert visage.NUM_LANDMARKS == 21
img, (x, y, w, h) = visage.render_synthetic("smile", index=0, frame=0)
s = visage.Session()
r = s.process_frame(img)
assert r["face"] is not None
assert len(r["landmarks"]["points"]) == 21
assert r["reference_captured"]
assert s.initialized and s.frames_processed == 1
faces = visage.detect(img)
assert any(f["verified"] for f in faces)
cfg = visage.SessionConfig(visage.SessionConfig().to_toml())
assert cfg.smoothing_window == 10
"#,
    );
}
