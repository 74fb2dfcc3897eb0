"""Smoke test for the patchspan_py extension.

Build and install the module first, e.g.
    maturin develop --release -m crates/py/Cargo.toml
then run `python python/smoke.py`.
"""

import os
import tempfile

import patchspan_py as ps


def main():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = ps.gen_corpus(os.path.join(tmp, "corpus"), n_clean=60, n_attacked=60, patch_counts=[1], seed=3)
        records = ps.load_manifest(manifest)
        assert len(records) == 120
        assert {r["split"] for r in records} == {"train", "val", "test"}

        maps = [ps.load_feature_map(r["map_path"]) for r in records]
        assert maps[0].shape == (64, 64)

        raw = ps.raw_curves(maps[0], ensemble_size=20)
        assert raw.shape == (4, 20) and not raw.preprocessed
        # scaling the map by a positive factor leaves the binarized ensemble unchanged
        assert ps.raw_curves(maps[0].scaled(7.5)).to_list() == raw.to_list()

        curves = [ps.featurize_map(m) for m in maps]
        train = [(c, r["label"]) for c, r in zip(curves, records) if r["split"] != "test"]
        test = [(c, r["label"]) for c, r in zip(curves, records) if r["split"] == "test"]

        model = ps.ADModel(ensemble_size=20, seed=1)
        history = model.fit(train, lr=1e-3, patience=5, max_epochs=15, seed=1)
        assert 1 <= len(history) <= 15

        scores = [model.score(c) for c, _ in test]
        labels = [l for _, l in test]
        assert all(0.0 <= s <= 1.0 for s in scores)
        auc, points = ps.roc_curve(scores, labels)
        assert points[0][1:] == (0.0, 0.0) and points[-1][1:] == (1.0, 1.0)
        threshold, accuracy, detection_rate, fpr = ps.best_threshold(scores, labels)
        print(f"test auc={auc:.4f} accuracy={accuracy:.4f} threshold={threshold:.4f}")
        assert auc >= 0.9, auc

        path = os.path.join(tmp, "model.json")
        model.save(path)
        loaded = ps.ADModel.load(path)
        assert loaded.score(test[0][0]) == scores[0]
        assert loaded.score_map(maps[0]) == model.score(curves[0])

        phi = model.explain(test[0][0])
        total = sum(phi[c] for c in model.channels)
        assert abs(total - (phi["score"] - phi["baseline_score"])) < 1e-9

        try:
            ps.FeatureMap([[1.0, 2.0], [3.0]])
        except ValueError:
            pass
        else:
            raise AssertionError("ragged rows accepted")
        try:
            ps.load_feature_map(os.path.join(tmp, "missing.npy"))
        except OSError:
            pass
        else:
            raise AssertionError("missing file accepted")
    print("smoke ok")


if __name__ == "__main__":
    main()
