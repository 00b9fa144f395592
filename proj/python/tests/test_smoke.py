import math
import os

import pytest

import spgcc


def desk_config(tmp_path):
    c = spgcc.Config()
    c.output_dir = str(tmp_path / "out")
    c.hsi_path = str(tmp_path / "synth.hsif")
    c.labels_path = str(tmp_path / "synth.hsil")
    c.set("synth.height", "20")
    c.set("synth.width", "20")
    c.set("synth.bands", "5")
    c.set("synth.classes", "2")
    c.set("synth.noise", "0.02")
    c.set("pca.bands", "4")
    c.set("segmentation.superpixels", "9")
    c.set("vae.epochs", "1")
    c.set("gcn.hidden", "32")
    c.set("gcn.out", "16")
    c.set("cluster.classes", "2")
    c.set("train.epochs", "10")
    return c


def test_synth_and_segment(tmp_path):
    c = desk_config(tmp_path)
    done = spgcc.synth(c)
    assert os.path.exists(done["hsi"])
    assert os.path.exists(done["labels"])

    ids, h, w = spgcc.load_labels_file(done["labels"])
    assert (h, w) == (20, 20)
    assert set(ids) == {1, 2}

    labels, count, sh, sw = spgcc.slic_labels(done["hsi"], 9)
    assert (sh, sw) == (20, 20)
    assert count >= 2
    assert len(labels) == 400


def test_metrics_and_hungarian():
    truth = [1, 1, 2, 2, 3, 3]
    pred = [3, 3, 1, 1, 2, 2]  # a pure relabeling
    report = spgcc.metrics(pred, truth, 1, 6)
    for name in ("OA", "AA", "Kappa", "NMI", "ARI", "F1", "Precision", "Recall", "Purity"):
        assert math.isclose(report[name], 100.0, abs_tol=1e-9)
    match = spgcc.hungarian(pred, truth, 1, 6)
    assert match[:3] == [1, 2, 0]


def test_kmeans_separated_blobs():
    pts = [0.0, 0.1, -0.1, 10.0, 10.1, 9.9]
    assign, centers, objective = spgcc.kmeans(pts, 6, 1, 2, seed=3)
    assert assign[0] == assign[1] == assign[2]
    assert assign[3] == assign[4] == assign[5]
    assert assign[0] != assign[3]
    assert objective < 0.1


def test_missing_artifact_raises(tmp_path):
    c = desk_config(tmp_path)
    with pytest.raises(spgcc.IoError, match="run pretrain first"):
        spgcc.features(c)


def test_mini_pipeline(tmp_path):
    c = desk_config(tmp_path)
    spgcc.synth(c)
    done = spgcc.run_all(c)
    assert 0.0 <= float(done["oa"]) <= 100.0
    for name in ("vae.spgw", "segmentation.hsil", "features.spgf", "labels_pred.hsil",
                 "metrics.tsv", "map.ppm"):
        assert os.path.exists(spgcc.artifact_path(c, name))
