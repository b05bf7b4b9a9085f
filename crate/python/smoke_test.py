"""Smoke test for the `visage` extension module.

Build and install it first, for example:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/visage-*.whl
"""

import tempfile
from pathlib import Path

import visage


def main() -> None:
    img, face = visage.render_synthetic("smile", index=0, frame=0)
    print("rendered", img, "face", face)

    faces = visage.detect(img)
    assert any(f["verified"] for f in faces), faces

    session = visage.Session()
    result = session.process_frame(img)
    assert len(result["landmarks"]["points"]) == visage.NUM_LANDMARKS

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        data = visage.generate_synthetic(
            str(tmp / "data"), seed=5, train_per_class=3, test_per_class=1, frames=20
        )
        model_path = tmp / "expr.model"
        trained = visage.train(data["train_manifest"], str(model_path))
        print("training accuracy", trained["training_accuracy"])

        model = visage.Model.load(str(model_path))
        report = visage.evaluate(model, data["test_manifest"])
        print("confusion", report["confusion"]["counts"])
        print("sequence accuracy", report["sequence_accuracy"])
        assert len(report["confusion"]["counts"]) == 4

        session = visage.Session(model=model)
        for t in range(10):
            frame, _ = visage.render_synthetic("smile", index=3, frame=t)
            result = session.process_frame(frame)
        print("prediction", result["prediction"])
        assert result["prediction"] is not None

    rates = visage.confusion_rates([[15, 3, 12, 0], [5, 18, 5, 2], [10, 5, 13, 2], [0, 4, 0, 26]])
    print("overall", round(rates["overall"], 2))
    print("ok")


if __name__ == "__main__":
    main()
