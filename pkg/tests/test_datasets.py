import json

import numpy as np
import pytest

from smiselect.datasets import (SplitSpec, SyntheticConfig, UtteranceRecord, budget_constraint,
                                cluster_means, dominant_label, feature_matrix,
                                generate_synthetic, load_manifest, random_select, report,
                                save_manifest, skyline_select, split)
from smiselect.exceptions import DataError, ManifestError
from smiselect.kernel import KernelConfig, build_kernel
from smiselect.optimizer import BudgetConstraint, SelectionResult


def rec(i, **kw):
    kw.setdefault("duration_s", 1.0 + i % 3)
    kw.setdefault("features", np.full(3, float(i)))
    return UtteranceRecord(id=f"u{i}", **kw)


def selection(indices, costs, budget):
    return SelectionResult(selected=list(indices), per_step_gain=[],
                           total_cost_s=float(sum(costs[i] for i in indices)),
                           objective_value=0.0, rounds_evaluated=0, budget_s=budget,
                           function="flmi")


class TestRecord:
    def test_validation(self):
        with pytest.raises(DataError):
            UtteranceRecord(id="a", duration_s=0.0, features=[1.0])
        with pytest.raises(DataError):
            UtteranceRecord(id="a", duration_s=1.0)
        with pytest.raises(DataError):
            UtteranceRecord(id="", duration_s=1.0, features=[1.0])
        with pytest.raises(DataError):
            UtteranceRecord(id="a", duration_s=1.0, features=[np.nan])

    def test_label_field(self):
        r = rec(0, speaker="s", accent="a")
        assert r.label("speaker") == "s" and r.label("accent") == "a"
        with pytest.raises(ValueError):
            r.label("gender")


class TestManifest:
    def test_roundtrip(self, tmp_path, rng):
        recs = [UtteranceRecord(id=f"x{i}", duration_s=float(rng.uniform(1, 5)),
                                features=rng.normal(size=39), speaker=f"s{i % 2}",
                                accent="ä" if i == 0 else None)
                for i in range(5)]
        recs.append(UtteranceRecord(id="wav", duration_s=2.5, audio_path="a/b.wav"))
        path = tmp_path / "m.jsonl"
        save_manifest(recs, path)
        assert load_manifest(path) == recs
        first = path.read_bytes()
        save_manifest(load_manifest(path), path)
        assert path.read_bytes() == first

    @pytest.mark.parametrize("lines, lineno, pattern", [
        (['{"id": "a", "duration_s": 1, "features": [1]}', '{"id": "a", "duration_s": 2, '
          '"features": [1]}'], 2, "duplicate id"),
        (['{"id": "a", "duration_s": 1, "features": [1]}', "{oops"], 2, "malformed"),
        (['{"id": "a", "duration_s": -1, "features": [1]}'], 1, "positive"),
        (['{"id": "a", "duration_s": 1, "features": [1]}', "",
          '{"id": "b", "duration_s": 1, "features": [1, 2]}'], 3, "expected 1"),
        (['{"id": "a", "duration_s": 1, "features": [1], "lang": "en"}'], 1, "unknown"),
    ])
    def test_errors_carry_line_numbers(self, tmp_path, lines, lineno, pattern):
        path = tmp_path / "bad.jsonl"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ManifestError, match=pattern) as info:
            load_manifest(path)
        assert info.value.line == lineno
        assert str(info.value).startswith(f"line {lineno}: ")

    def test_save_rejects_duplicates(self, tmp_path):
        with pytest.raises(DataError):
            save_manifest([rec(1), rec(1)], tmp_path / "m.jsonl")

    def test_one_object_per_line(self, tmp_path):
        save_manifest([rec(1), rec(2)], tmp_path / "m.jsonl")
        lines = (tmp_path / "m.jsonl").read_text().splitlines()
        assert [json.loads(x)["id"] for x in lines] == ["u1", "u2"]

    def test_helpers(self):
        recs = [rec(i) for i in range(4)]
        assert feature_matrix(recs).shape == (4, 3)
        c = budget_constraint(recs, 5.0)
        np.testing.assert_array_equal(c.costs, [1, 2, 3, 1])
        with pytest.raises(DataError, match="featurize"):
            feature_matrix([UtteranceRecord(id="w", duration_s=1.0, audio_path="x.wav")])


class TestSplit:
    def test_default_sizes(self):
        recs = [rec(i) for i in range(100)]
        ground, target, dev, test = split(recs)
        assert len(ground) + len(target) == 70 and len(target) == 10
        assert (len(test), len(dev)) == (27, 3)

    def test_partition_and_determinism(self):
        recs = [rec(i) for i in range(137)]
        parts = split(recs, SplitSpec(seed=5))
        ids = [r.id for p in parts for r in p]
        assert sorted(ids) == sorted(r.id for r in recs)
        assert len(set(ids)) == len(ids)
        assert parts == split(recs, SplitSpec(seed=5))
        assert parts != split(recs, SplitSpec(seed=6))

    def test_labelled_target(self):
        recs = [rec(i, speaker=f"s{i % 4}") for i in range(200)]
        ground, target, _, _ = split(recs, SplitSpec(target_label="s2"))
        assert len(target) == 10 and {r.speaker for r in target} == {"s2"}
        assert any(r.speaker == "s2" for r in ground)

    def test_insufficient(self):
        with pytest.raises(DataError):
            split([rec(i) for i in range(8)])
        with pytest.raises(ValueError):
            SplitSpec(ground_fraction=1.0)


class TestSynthetic:
    def test_shape_and_labels(self):
        recs = generate_synthetic(SyntheticConfig(num_clusters=3, points_per_cluster=20, dim=5))
        assert len(recs) == 60 and recs[0].features.shape == (5,)
        assert sorted({r.speaker for r in recs}) == ["spk0", "spk1", "spk2"]
        assert all(2.0 <= r.duration_s <= 6.0 for r in recs)

    def test_deterministic(self):
        cfg = SyntheticConfig(num_clusters=2, points_per_cluster=10, seed=3)
        assert generate_synthetic(cfg) == generate_synthetic(cfg)
        assert generate_synthetic(cfg) != generate_synthetic(SyntheticConfig(
            num_clusters=2, points_per_cluster=10, seed=4))

    @pytest.mark.parametrize("k, dim", [(8, 39), (5, 3)])
    def test_mean_spacing(self, k, dim):
        means = cluster_means(k, dim, 6.0)
        d = np.linalg.norm(means[1:] - means[:-1], axis=1)
        np.testing.assert_allclose(d, 6.0, atol=1e-12)

    def test_empirical_means(self):
        recs = generate_synthetic(SyntheticConfig(num_clusters=2, points_per_cluster=4000, dim=4))
        X = feature_matrix(recs)
        means = cluster_means(2, 4, 6.0)
        for c in range(2):
            assert np.linalg.norm(X[c * 4000:(c + 1) * 4000].mean(0) - means[c]) < 0.1

    def test_hierarchical_labels(self):
        recs = generate_synthetic(SyntheticConfig(num_clusters=2, points_per_cluster=40,
                                                  speakers_per_cluster=4))
        assert {r.accent for r in recs} == {"acc0", "acc1"}
        assert len({r.speaker for r in recs}) == 8
        assert all(r.speaker.startswith(r.accent + "_") for r in recs)

    def test_nearest_neighbour_precondition(self):
        # separation 6 and a single-cluster target: every target point's nearest
        # neighbour in the corpus should share its cluster
        recs = generate_synthetic(SyntheticConfig())
        X = feature_matrix(recs)
        labels = np.array([r.speaker for r in recs])
        bad = 0
        for seed in range(5):
            pick = np.random.default_rng(seed).choice(np.flatnonzero(labels == "spk0"), 10,
                                                       replace=False)
            for i in pick:
                d = np.linalg.norm(X - X[i], axis=1)
                d[i] = np.inf
                bad += labels[np.argmin(d)] != "spk0"
        assert bad == 0, f"{bad} of 50 target points have a cross-cluster nearest neighbour"


class TestBaselines:
    @pytest.fixture
    def ground(self):
        return [rec(i, speaker=f"s{i % 3}", accent=f"a{i % 2}", duration_s=1.0 + (i % 4))
                for i in range(60)]

    def test_random_respects_budget(self, ground):
        c = budget_constraint(ground, 20.0)
        for seed in range(20):
            res = random_select(ground, c, seed=seed)
            assert res.total_cost_s <= 20.0
            again = random_select(ground, c, seed=seed)
            assert (res.selected, res.total_cost_s) == (again.selected, again.total_cost_s)
        assert random_select(ground, c, 1).selected != random_select(ground, c, 2).selected

    def test_random_scored(self, ground):
        X = feature_matrix(ground)
        K = build_kernel(X, X[:3], KernelConfig(gamma=0.1))
        res = random_select(ground, budget_constraint(ground, 10.0), 0, kind="gcmi", kernel=K)
        assert res.function == "gcmi"
        assert res.objective_value == pytest.approx(2 * K.ground_target[res.selected].sum())

    def test_skyline_speaker_only_matches(self, ground):
        c = budget_constraint(ground, 1e6)
        res = skyline_select(ground, "s1", "speaker", c, seed=0)
        assert {ground[i].speaker for i in res.selected} == {"s1"}
        assert len(res.selected) == 20

    def test_skyline_accent_is_stratified(self):
        recs = []
        for s, n in (("a0_s0", 30), ("a0_s1", 30), ("a0_s2", 30), ("a1_s0", 30)):
            recs += [rec(len(recs), speaker=s, accent=s[:2], duration_s=1.0) for _ in range(n)]
        res = skyline_select(recs, "a0", "accent", budget_constraint(recs, 12.0), seed=1)
        counts = {}
        for i in res.selected:
            counts[recs[i].speaker] = counts.get(recs[i].speaker, 0) + 1
        assert counts == {"a0_s0": 4, "a0_s1": 4, "a0_s2": 4}

    def test_skyline_needs_labels(self):
        recs = [rec(i) for i in range(5)]
        with pytest.raises(DataError):
            skyline_select(recs, "x", "speaker", budget_constraint(recs, 3.0))


class TestReport:
    def test_hand_count(self):
        ground = [rec(i, speaker="A" if i < 5 else "B") for i in range(10)]
        target = [rec(100 + i, speaker="A") for i in range(3)]
        costs = [r.duration_s for r in ground]
        rep = report(selection([0, 1, 2, 7], costs, 20.0), ground, target)
        assert rep.purity_by_speaker == 3 / 4
        assert rep.histogram_speaker == {"A": 3, "B": 1}
        assert rep.purity_by_accent is None and rep.target_label_accent is None
        assert rep.utilization == rep.total_cost_s / 20.0
        assert rep.histogram_accent == {"<none>": 4}

    def test_all_match(self):
        ground = [rec(i, speaker="A") for i in range(4)]
        rep = report(selection([0, 3], [1.0] * 4, 5.0), ground, ground[:1])
        assert rep.purity_by_speaker == 1.0

    def test_empty_selection(self):
        ground = [rec(i, speaker="A") for i in range(4)]
        rep = report(selection([], [1.0] * 4, 5.0), ground, ground[:1])
        assert rep.purity_by_speaker is None and rep.utilization == 0.0
        assert json.loads(rep.to_json())["num_selected"] == 0

    def test_dominant_label_ties_lexicographic(self):
        recs = [rec(0, speaker="b"), rec(1, speaker="a"), rec(2)]
        assert dominant_label(recs, "speaker") == "a"


def test_synthetic_manifest_roundtrip(tmp_path):
    recs = generate_synthetic(SyntheticConfig(num_clusters=2, points_per_cluster=5))
    save_manifest(recs, tmp_path / "s.jsonl")
    assert load_manifest(tmp_path / "s.jsonl") == recs


def test_constraint_from_records_rejects_missing_duration():
    r = UtteranceRecord(id="a", features=[1.0])
    with pytest.raises(DataError):
        budget_constraint([r], 1.0)
    assert isinstance(BudgetConstraint(1.0, [1.0]).costs, np.ndarray)
