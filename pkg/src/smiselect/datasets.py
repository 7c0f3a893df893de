"""Manifests, splits, synthetic corpora, baseline selectors and reports."""
from __future__ import annotations

import json
import math
import os
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import DataError, ManifestError
from .optimizer import BudgetConstraint, SelectionResult
from .smi import SelectionState, SmiKind, evaluate

MANIFEST_FIELDS = ("id", "audio_path", "features", "duration_s", "speaker", "accent")
LABEL_FIELDS = ("speaker", "accent")


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    duration_s: float | None = None
    audio_path: str | None = None
    features: np.ndarray | None = None
    speaker: str | None = None
    accent: str | None = None
    sample_rate: int | None = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise DataError("record id must be a nonempty string")
        if self.duration_s is not None:
            if not (isinstance(self.duration_s, (int, float)) and math.isfinite(self.duration_s)
                    and self.duration_s > 0):
                raise DataError(f"record {self.id}: duration_s must be positive, "
                                f"got {self.duration_s!r}")
        if self.audio_path is None and self.features is None:
            raise DataError(f"record {self.id}: needs audio_path or features")
        if self.features is not None:
            vec = np.asarray(self.features, dtype=np.float64)
            if vec.ndim != 1 or vec.size == 0 or not np.all(np.isfinite(vec)):
                raise DataError(f"record {self.id}: features must be a nonempty finite vector")
            object.__setattr__(self, "features", vec)

    def label(self, field_name):
        if field_name not in LABEL_FIELDS:
            raise ValueError(f"label field must be one of {LABEL_FIELDS}")
        return getattr(self, field_name)

    def to_json(self) -> str:
        d = {"id": self.id}
        if self.audio_path is not None:
            d["audio_path"] = self.audio_path
        if self.features is not None:
            d["features"] = [float(v) for v in self.features]
        d["duration_s"] = self.duration_s
        for key in ("speaker", "accent", "sample_rate"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        return json.dumps(d, ensure_ascii=False)

    def __eq__(self, other):
        if not isinstance(other, UtteranceRecord):
            return NotImplemented
        a, b = asdict(self), asdict(other)
        fa, fb = a.pop("features"), b.pop("features")
        if (fa is None) != (fb is None):
            return False
        return a == b and (fa is None or np.array_equal(fa, fb))

    __hash__ = None


def _record_from_obj(obj, lineno):
    if not isinstance(obj, dict):
        raise ManifestError("expected a JSON object", lineno)
    unknown = set(obj) - set(MANIFEST_FIELDS) - {"sample_rate"}
    if unknown:
        raise ManifestError(f"unknown field(s) {sorted(unknown)}", lineno)
    if "id" not in obj:
        raise ManifestError("missing 'id'", lineno)
    try:
        return UtteranceRecord(
            id=obj["id"],
            duration_s=obj.get("duration_s"),
            audio_path=obj.get("audio_path"),
            features=obj.get("features"),
            speaker=obj.get("speaker"),
            accent=obj.get("accent"),
            sample_rate=obj.get("sample_rate"),
        )
    except (DataError, TypeError, ValueError) as exc:
        raise ManifestError(str(exc), lineno) from exc


def read_manifest_lines(lines):
    records, seen, dim = [], {}, None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"malformed record ({exc.msg})", lineno) from exc
        rec = _record_from_obj(obj, lineno)
        if rec.id in seen:
            raise ManifestError(f"duplicate id {rec.id!r} (first seen on line {seen[rec.id]})",
                                lineno)
        seen[rec.id] = lineno
        if rec.features is not None:
            if dim is None:
                dim = rec.features.size
            elif rec.features.size != dim:
                raise ManifestError(f"features have {rec.features.size} values, "
                                    f"expected {dim}", lineno)
        records.append(rec)
    return records


def load_manifest(path):
    with open(path, encoding="utf-8") as fh:
        return read_manifest_lines(fh)


def save_manifest(records, path):
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise DataError("cannot save a manifest with duplicate ids")
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")
    os.replace(tmp, path)


def feature_matrix(records):
    missing = [r.id for r in records if r.features is None]
    if missing:
        raise DataError(f"{len(missing)} record(s) have no features (first: {missing[0]}); "
                        "run featurize first")
    return np.vstack([r.features for r in records])


def durations(records):
    missing = [r.id for r in records if r.duration_s is None]
    if missing:
        raise DataError(f"record {missing[0]} has no duration_s")
    return np.array([r.duration_s for r in records], dtype=np.float64)


def budget_constraint(records, budget_s):
    return BudgetConstraint(budget_s, durations(records))


@dataclass(frozen=True)
class SplitSpec:
    ground_fraction: float = 0.70
    target_size: int = 10
    test_dev_ratio: tuple = (27, 3)
    seed: int = 0
    # draw the target only from records carrying this label (purity experiments)
    target_label: str | None = None
    label_field: str = "speaker"

    def __post_init__(self):
        if not 0 < self.ground_fraction < 1:
            raise ValueError("ground_fraction must be in (0, 1)")
        if self.target_size < 1:
            raise ValueError("target_size must be >= 1")
        test, dev = self.test_dev_ratio
        if test < 0 or dev < 0 or test + dev <= 0:
            raise ValueError("test_dev_ratio must be two nonnegative parts, not both 0")


def split(records, spec: SplitSpec = SplitSpec()):
    """Partition into ``(ground, target, dev, test)``.

    A seeded shuffle sends ``ground_fraction`` of the records to a selection
    partition, from which ``target_size`` records become the target and the
    rest the ground set.  The remainder is divided into test and dev by
    ``test_dev_ratio``.
    """
    n = len(records)
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(n)
    n_main = int(round(spec.ground_fraction * n))
    main, rest = order[:n_main], order[n_main:]
    test_part, dev_part = spec.test_dev_ratio
    n_test = int(round(len(rest) * test_part / (test_part + dev_part)))

    if spec.target_label is None:
        target_pos = list(range(min(spec.target_size, len(main))))
    else:
        target_pos = [k for k, i in enumerate(main)
                      if records[i].label(spec.label_field) == spec.target_label]
        target_pos = target_pos[:spec.target_size]
    if len(target_pos) < spec.target_size or len(main) - len(target_pos) < 1:
        raise DataError(f"not enough records ({n}) for a target of {spec.target_size} "
                        "plus a nonempty ground set")
    is_target = np.zeros(len(main), dtype=bool)
    is_target[target_pos] = True
    ground = [records[i] for i in main[~is_target]]
    target = [records[i] for i in main[is_target]]
    test = [records[i] for i in rest[:n_test]]
    dev = [records[i] for i in rest[n_test:]]
    return ground, target, dev, test


@dataclass(frozen=True)
class SyntheticConfig:
    num_clusters: int = 8
    points_per_cluster: int = 200
    dim: int = 39
    cluster_separation: float = 6.0
    duration_range: tuple = (2.0, 6.0)
    # >1 gives a two-level corpus: each cluster is an accent made of speakers
    speakers_per_cluster: int = 1
    # distance of each speaker mean from its accent mean; None -> separation / sqrt(2),
    # which puts speakers of one accent about as far apart as accent means
    speaker_spread: float | None = None
    seed: int = 0

    def __post_init__(self):
        if min(self.num_clusters, self.points_per_cluster, self.dim,
               self.speakers_per_cluster) < 1:
            raise ValueError("counts must be positive")
        if self.cluster_separation < 0 or (self.speaker_spread or 0) < 0:
            raise ValueError("separations must be >= 0")
        lo, hi = self.duration_range
        if not 0 < lo <= hi:
            raise ValueError("duration_range must satisfy 0 < low <= high")


def cluster_means(num_clusters, dim, separation):
    """Means with every adjacent pair ``separation`` apart.

    Up to ``dim`` clusters sit on scaled coordinate axes (all pairs equidistant);
    beyond that they are laid out on a line.
    """
    means = np.zeros((num_clusters, dim))
    if num_clusters <= dim:
        means[np.arange(num_clusters), np.arange(num_clusters)] = separation / math.sqrt(2.0)
    else:
        means[:, 0] = separation * np.arange(num_clusters)
    return means


def generate_synthetic(cfg: SyntheticConfig = SyntheticConfig()):
    """Gaussian clusters with unit within-cluster std and labelled records.

    Flat corpora label each record with ``speaker = "spk<c>"``.  Two-level
    corpora label ``accent = "acc<c>"`` and ``speaker = "acc<c>_spk<k>"``, with
    speaker means offset from the accent mean by ``speaker_spread`` in a random
    direction.
    """
    rng = np.random.default_rng(cfg.seed)
    means = cluster_means(cfg.num_clusters, cfg.dim, cfg.cluster_separation)
    k = cfg.speakers_per_cluster
    spread = (cfg.cluster_separation / math.sqrt(2.0) if cfg.speaker_spread is None
              else cfg.speaker_spread)
    lo, hi = cfg.duration_range
    records = []
    for c in range(cfg.num_clusters):
        counts = [cfg.points_per_cluster // k + (s < cfg.points_per_cluster % k) for s in range(k)]
        for s, count in enumerate(counts):
            centre = means[c]
            if k > 1:
                direction = rng.normal(size=cfg.dim)
                centre = centre + spread * direction / np.linalg.norm(direction)
            feats = centre + rng.normal(size=(count, cfg.dim))
            durs = rng.uniform(lo, hi, size=count)
            for f, d in zip(feats, durs):
                if k > 1:
                    speaker, accent = f"acc{c}_spk{s}", f"acc{c}"
                else:
                    speaker, accent = f"spk{c}", None
                records.append(UtteranceRecord(
                    id=f"utt{len(records):06d}", duration_s=float(d), features=f,
                    speaker=speaker, accent=accent))
    return records


def _baseline_result(order, costs, budget, seed, kind, kernel, eps, mode):
    chosen, spent = [], 0.0
    for i in order:
        if spent + costs[i] <= budget:
            chosen.append(int(i))
            spent += costs[i]
    gains, value = [], float("nan")
    if kind is not None and kernel is not None:
        state = SelectionState(kind, kernel, eps)
        for i in chosen:
            state.commit(i)
        gains, value = list(state.history), evaluate(kind, chosen, kernel, eps)
    return SelectionResult(
        selected=chosen, per_step_gain=gains, total_cost_s=float(spent),
        objective_value=value, rounds_evaluated=0, budget_s=float(budget),
        function=SmiKind.parse(kind).value if kind is not None else mode.split(":")[0],
        config={"variant": mode, "seed": seed},
    )


def random_select(ground, constraint: BudgetConstraint, seed=0, kind=None, kernel=None,
                  eps=1e-6) -> SelectionResult:
    """Uniformly shuffle the ground set and keep every item that still fits.

    When ``kind`` and ``kernel`` are given the selection is also scored.
    """
    if constraint.costs.size != len(ground):
        raise ValueError("constraint costs do not match the ground set")
    order = np.random.default_rng(seed).permutation(len(ground))
    return _baseline_result(order, constraint.costs, constraint.budget_s, seed,
                            kind, kernel, eps, "random")


def skyline_select(ground, target_label, label_field, constraint: BudgetConstraint, seed=0,
                   kind=None, kernel=None, eps=1e-6) -> SelectionResult:
    """Random selection restricted to ground items carrying ``target_label``.

    For accent targets the draw is stratified: speakers of the accent are
    visited round-robin so each contributes an equal number of utterances
    (until the budget or a speaker's pool runs out).
    """
    if constraint.costs.size != len(ground):
        raise ValueError("constraint costs do not match the ground set")
    labels = [r.label(label_field) for r in ground]
    if all(lab is None for lab in labels):
        raise DataError(f"ground records carry no {label_field!r} labels")
    rng = np.random.default_rng(seed)
    match = [i for i, lab in enumerate(labels) if lab == target_label]
    if label_field == "accent":
        by_speaker = {}
        for i in match:
            by_speaker.setdefault(ground[i].speaker, []).append(i)
        speakers = sorted(by_speaker, key=str)
        pools = [list(rng.permutation(by_speaker[s])) for s in speakers]
        pools = [pools[j] for j in rng.permutation(len(pools))]
        order = []
        depth = max((len(p) for p in pools), default=0)
        for r in range(depth):
            order.extend(p[r] for p in pools if r < len(p))
    else:
        order = [match[j] for j in rng.permutation(len(match))]
    return _baseline_result(order, constraint.costs, constraint.budget_s, seed,
                            kind, kernel, eps, f"skyline:{label_field}={target_label}")


def dominant_label(records, field_name):
    counts = Counter(r.label(field_name) for r in records if r.label(field_name) is not None)
    if not counts:
        return None
    top = max(counts.values())
    return min(lab for lab, c in counts.items() if c == top)


@dataclass
class SelectionReport:
    selected_ids: list
    total_cost_s: float
    budget_s: float
    utilization: float
    objective_value: float
    function: str
    num_selected: int
    target_label_speaker: str | None = None
    target_label_accent: str | None = None
    purity_by_speaker: float | None = None
    purity_by_accent: float | None = None
    histogram_speaker: dict = field(default_factory=dict)
    histogram_accent: dict = field(default_factory=dict)
    sample_rates: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        if isinstance(d["objective_value"], float) and not math.isfinite(d["objective_value"]):
            d["objective_value"] = None
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, **kw)


def report(selection: SelectionResult, ground, target, config=None) -> SelectionReport:
    """Summarize a selection: budget use, objective and label purity.

    Purity is the fraction of selected items whose label equals the target's
    dominant label; it is ``None`` when the target carries no such labels or
    nothing was selected.
    """
    chosen = [ground[i] for i in selection.selected]
    out = SelectionReport(
        selected_ids=[r.id for r in chosen],
        total_cost_s=float(selection.total_cost_s),
        budget_s=float(selection.budget_s),
        utilization=float(selection.total_cost_s / selection.budget_s),
        objective_value=float(selection.objective_value),
        function=selection.function,
        num_selected=len(chosen),
        sample_rates=sorted({r.sample_rate for r in chosen if r.sample_rate is not None}),
        warnings=list(selection.warnings),
        config=dict(config if config is not None else selection.config),
    )
    for name in LABEL_FIELDS:
        labels = [r.label(name) for r in chosen]
        hist = Counter("<none>" if lab is None else lab for lab in labels)
        setattr(out, f"histogram_{name}", dict(sorted(hist.items())))
        dom = dominant_label(target, name)
        setattr(out, f"target_label_{name}", dom)
        if dom is not None and chosen:
            setattr(out, f"purity_by_{name}", sum(lab == dom for lab in labels) / len(chosen))
    return out
