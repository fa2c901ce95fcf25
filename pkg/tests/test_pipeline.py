import numpy as np
import pytest

from contactgrasp.config import config_hash
from contactgrasp.geometry import PointCloud
from contactgrasp.pipeline import (STAGES, SynthResult, format_batch_table,
                                   subsample, summarize_batch, synth_object)
from conftest import plane_patch


def test_synth_box_succeeds_end_to_end(box_cloud, hand16, default_config):
    res = synth_object("crate", box_cloud, hand16, default_config,
                       category="boxes", split="val", cloud_ref="crate.xyz")
    assert all(res.success[s] for s in STAGES), res.errors
    rec = res.record
    assert rec.object_id == "crate"
    assert rec.split == "val" and rec.category == "boxes"
    assert rec.stage_success == res.success
    assert rec.quality > 0.0
    assert len(rec.contacts) == 5
    rot = np.asarray(rec.canonical_rotation)
    assert rot.shape == (3, 3)
    assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-9)
    assert len(rec.grasp["q"]) == hand16.n_joints
    assert len(rec.pregrasp["q"]) == hand16.n_joints
    # pre-grasp backs the wrist off along the stored approach
    d = np.asarray(rec.grasp["t"]) - np.asarray(rec.pregrasp["t"])
    assert np.linalg.norm(d) == pytest.approx(rec.pregrasp_offset)
    assert res.timings.keys() == {"contact", "retarget", "refine"}


def test_synth_records_provenance(box_cloud, hand16, default_config):
    res = synth_object("crate", box_cloud, hand16, default_config)
    prov = res.record.provenance
    assert prov["stages"] == list(STAGES)
    assert prov["config"] == config_hash(default_config)
    assert prov["seed"] == default_config.seed


def test_synth_flat_patch_fails_contact_stage(hand16, default_config):
    cloud = PointCloud(points=plane_patch(1024, 0.12, seed=8))
    res = synth_object("slab", cloud, hand16, default_config)
    assert res.success["contact"] is False
    assert any(e.startswith("contact:") for e in res.errors)
    assert res.record.stage_success["contact"] is False


def test_synth_is_deterministic(box_cloud, hand16, default_config):
    a = synth_object("crate", box_cloud, hand16, default_config)
    b = synth_object("crate", box_cloud, hand16, default_config)
    assert a.record == b.record


def test_subsample_small_cloud_untouched(box_cloud):
    assert subsample(box_cloud, len(box_cloud), seed_key=[0, 0]) is box_cloud


def test_subsample_preserves_order_and_normals():
    pts = np.column_stack([np.arange(500.0), np.zeros(500), np.zeros(500)])
    cloud = PointCloud(points=pts, normals=np.tile([0.0, 0.0, 1.0], (500, 1)))
    sub = subsample(cloud, 64, seed_key=[3, 1])
    assert len(sub) == 64
    assert np.all(np.diff(sub.points[:, 0]) > 0)
    assert sub.normals.shape == (64, 3)


def test_subsample_keyed_by_seed_and_index():
    pts = np.random.default_rng(0).normal(size=(400, 3))
    cloud = PointCloud(points=pts)
    a = subsample(cloud, 50, seed_key=[7, 2])
    b = subsample(cloud, 50, seed_key=[7, 2])
    c = subsample(cloud, 50, seed_key=[7, 3])
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)


def fake_result(success, times):
    res = SynthResult(record=None)
    res.success = dict(zip(STAGES, success))
    res.timings = dict(zip(STAGES, times))
    return res


def test_summarize_batch_rates_and_times():
    batch = [fake_result([True, True, False], [0.2, 0.1, 0.4]),
             fake_result([True, False, False], [0.4, 0.3, 0.0])]
    summary = summarize_batch(batch)
    assert summary["contact"]["success_rate"] == 1.0
    assert summary["retarget"]["success_rate"] == 0.5
    assert summary["refine"]["success_rate"] == 0.0
    assert summary["contact"]["time_mean"] == pytest.approx(0.3)
    assert summary["contact"]["time_std"] == pytest.approx(0.1)


def test_summarize_batch_counts_missing_stage_as_failure():
    partial = SynthResult(record=None)
    partial.success = {"contact": False}
    partial.timings = {"contact": 0.1}
    summary = summarize_batch([partial])
    assert summary["retarget"]["success_rate"] == 0.0
    assert summary["retarget"]["time_mean"] == 0.0


def test_format_batch_table_layout():
    summary = summarize_batch([fake_result([True, True, True], [0.2, 0.1, 0.05])])
    text = format_batch_table(summary)
    lines = text.splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("metric")
    assert lines[1].startswith("SR (%)") and "100.00" in lines[1]
    assert lines[2].startswith("T/Obj (s)") and "+/-" in lines[2]
    for stage in STAGES:
        assert stage in lines[0]
