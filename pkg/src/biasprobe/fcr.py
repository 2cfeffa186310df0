"""Feature contribution rate and the train -> ablate -> evaluate sweep loops.

FCR = 1 - (acc_o - acc_rm)/acc_o, where acc_o is accuracy on original images
and acc_rm on images with one feature removed or weakened. Lower FCR means
the ablated feature mattered more. A sweep trains on the unablated task and
re-evaluates the target category's validation images under each ablation
strength.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from .ablation import AblationSpec, apply
from .imagecore import LabeledImage, resize_bilinear
from .tasks import AugmentSpec, TaskSpec
from .tinynn import (
    ModelConfig,
    TrainConfig,
    evaluate_network,
    network_from_checkpoint,
    train,
)

CSV_HEADER = "task,model,category,ablation,window,seed,acc_o,acc_rm,fcr,overall_acc_o,overall_acc_rm"


class UndefinedBaseline(ValueError):
    """FCR is undefined when the original accuracy is zero."""


def compute_fcr(acc_o: float, acc_rm: float) -> float:
    """Eq.-style contribution rate; unclamped, so values above 1 mean the
    ablation helped."""
    if not 0.0 <= acc_o <= 1.0 or not 0.0 <= acc_rm <= 1.0:
        raise ValueError(f"accuracies must be in [0, 1], got {acc_o}, {acc_rm}")
    if acc_o <= 0.0:
        raise UndefinedBaseline("acc_o is zero; FCR has no baseline")
    return 1.0 - (acc_o - acc_rm) / acc_o


@dataclass(frozen=True)
class FcrRecord:
    task: str
    model: str
    category: str
    ablation: str
    window: int
    seed: int
    acc_o: float
    acc_rm: float
    fcr: float
    overall_acc_o: float
    overall_acc_rm: float
    error: bool = False


@dataclass(frozen=True)
class ExperimentSpec:
    task: TaskSpec
    model: ModelConfig
    train: TrainConfig
    ablations: tuple[AblationSpec, ...]
    target_category: int = 0
    repeats: int = 3

    def __post_init__(self):
        if not self.ablations:
            raise ValueError("ablation sweep must be non-empty")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if not 0 <= self.target_category < len(self.task.categories):
            raise ValueError(f"target category {self.target_category} out of range")

    def provenance(self) -> dict:
        """JSON-ready description of the full experiment (task summarized by
        name/shape rather than pixels)."""
        return {
            "task": {
                "name": self.task.name,
                "categories": list(self.task.categories),
                "train_images": len(self.task.train),
                "val_images": len(self.task.val),
                "target_category": self.task.target_category,
            },
            "model": json.loads(self.model.to_json()),
            "train": asdict(self.train),
            "ablations": [asdict(a) for a in self.ablations],
            "target_category": self.target_category,
            "repeats": self.repeats,
        }


def _ablate_for_model(spec: AblationSpec, image: np.ndarray, input_size: int) -> np.ndarray:
    out = apply(spec, image)
    if out.shape[0] != input_size or out.shape[1] != input_size:
        # topology shuffles crop to a grid multiple; bring the result back to
        # the model's input size the same way disk ingestion would
        out = resize_bilinear(out, input_size, input_size)
    return out


def sweep_trained_network(
    net,
    task: TaskSpec,
    target: int,
    ablations: tuple[AblationSpec, ...],
    model_name: str,
    input_size: int,
    seed: int,
    verbose: bool = False,
) -> list[FcrRecord]:
    """Evaluate one trained network over a sweep; read-only on the network.

    A zero baseline yields flagged error records rather than a crash.
    """
    cat_name = task.categories[target]
    target_val = [im for im in task.val if im.label == target]
    other_val = [im for im in task.val if im.label != target]
    if not target_val:
        raise ValueError(f"no validation images for target category {cat_name!r}")

    base = evaluate_network(net, task.val)
    acc_o = float(base.per_category[target])
    other_correct = 0
    if other_val:
        other_correct = int(round(evaluate_network(net, other_val).overall * len(other_val)))

    records: list[FcrRecord] = []
    for ab in ablations:
        if acc_o <= 0.0:
            records.append(FcrRecord(task.name, model_name, cat_name, ab.kind,
                                     ab.window, seed, 0.0, float("nan"), float("nan"),
                                     base.overall, float("nan"), error=True))
            continue
        ablated = [
            LabeledImage(_ablate_for_model(ab, im.image, input_size),
                         im.label, im.source_id + f"#{ab.kind}{ab.window}")
            for im in target_val
        ]
        res = evaluate_network(net, ablated)
        acc_rm = float(res.per_category[target])
        overall_rm = (other_correct + int(round(acc_rm * len(ablated)))) / len(task.val)
        records.append(FcrRecord(task.name, model_name, cat_name, ab.kind,
                                 ab.window, seed, acc_o, acc_rm,
                                 compute_fcr(acc_o, acc_rm), base.overall, overall_rm))
        if verbose:
            print(f"  seed {seed} {ab.kind} window {ab.window}: "
                  f"acc_o {acc_o:.3f} acc_rm {acc_rm:.3f} fcr {records[-1].fcr:.3f}")
    return records


def run_sweep(
    spec: ExperimentSpec,
    augment_spec: AugmentSpec | None = AugmentSpec(),
    stop_val_accuracy: float | None = None,
    verbose: bool = False,
) -> list[FcrRecord]:
    """Step1-Step3 for each repeat seed: train on the unablated task, measure
    the target category's baseline accuracy, then re-measure under every
    ablation in the sweep. Records come back sorted by (seed, ablation,
    window).
    """
    records: list[FcrRecord] = []
    for r in range(spec.repeats):
        seed_r = spec.train.seed + r
        tc = replace(spec.train, seed=seed_r)
        ckpt, _ = train(spec.model, spec.task, tc, augment_spec=augment_spec,
                        stop_val_accuracy=stop_val_accuracy, verbose=verbose)
        net = network_from_checkpoint(ckpt)
        records.extend(sweep_trained_network(net, spec.task, spec.target_category,
                                             spec.ablations, spec.model.name,
                                             spec.model.input_size, seed_r, verbose))
    records.sort(key=lambda rec: (rec.seed, rec.ablation, rec.window))
    return records


@dataclass(frozen=True)
class ComparisonRow:
    window: int
    mean_a: float
    mean_b: float
    difference: float  # mean_a - mean_b
    sign: int


@dataclass(frozen=True)
class ComparisonReport:
    task_a: str
    task_b: str
    category: str
    ablation: str
    rows: tuple[ComparisonRow, ...]
    verdict: str


class SweepMismatch(ValueError):
    """The two record lists do not cover the same ablation sweep."""


def _sweep_signature(records: list[FcrRecord]):
    kinds = {r.ablation for r in records}
    cats = {r.category for r in records}
    if len(kinds) != 1 or len(cats) != 1:
        raise SweepMismatch(f"records must cover exactly one ablation and category, "
                            f"got {sorted(kinds)} / {sorted(cats)}")
    per_window: dict[int, int] = {}
    for r in records:
        per_window[r.window] = per_window.get(r.window, 0) + 1
    return kinds.pop(), cats.pop(), per_window


def compare_tasks(a: list[FcrRecord], b: list[FcrRecord]) -> ComparisonReport:
    """Per-window mean-FCR comparison of the same sweep run on two tasks.

    The verdict names the task with the lower mean FCR at the maximal window
    (lower FCR = feature more important there); equal means are declared
    indistinguishable. Flagged error records are excluded from means.
    """
    if not a or not b:
        raise SweepMismatch("cannot compare empty record lists")
    kind_a, cat_a, win_a = _sweep_signature(a)
    kind_b, cat_b, win_b = _sweep_signature(b)
    if kind_a != kind_b or cat_a != cat_b or sorted(win_a) != sorted(win_b):
        raise SweepMismatch(
            f"sweeps differ: {kind_a}/{cat_a}/{sorted(win_a)} vs {kind_b}/{cat_b}/{sorted(win_b)}")
    task_a = a[0].task
    task_b = b[0].task

    rows = []
    for w in sorted(win_a):
        fa = [r.fcr for r in a if r.window == w and not r.error]
        fb = [r.fcr for r in b if r.window == w and not r.error]
        if not fa or not fb:
            raise SweepMismatch(f"window {w} has only error records")
        ma, mb = float(np.mean(fa)), float(np.mean(fb))
        diff = ma - mb
        rows.append(ComparisonRow(w, ma, mb, diff, int(np.sign(diff))))

    last = rows[-1]
    if last.mean_a == last.mean_b:
        verdict = "indistinguishable"
    else:
        winner = task_a if last.mean_a < last.mean_b else task_b
        verdict = f"feature more important in {winner}"
    return ComparisonReport(task_a, task_b, cat_a, kind_a, tuple(rows), verdict)


def records_to_csv(records: list[FcrRecord]) -> str:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join([
            r.task, r.model, r.category, r.ablation, str(r.window), str(r.seed),
            repr(float(r.acc_o)), repr(float(r.acc_rm)), repr(float(r.fcr)),
            repr(float(r.overall_acc_o)), repr(float(r.overall_acc_rm)),
        ]))
    return "\n".join(lines) + "\n"


def write_records_csv(records: list[FcrRecord], path: str) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(records_to_csv(records))


def read_records_csv(path: str) -> list[FcrRecord]:
    """Parse a sweep CSV; malformed rows raise naming the line number."""
    records = []
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}:1: expected header {CSV_HEADER!r}")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 11:
            raise ValueError(f"{path}:{lineno}: expected 11 fields, got {len(parts)}")
        try:
            rec = FcrRecord(parts[0], parts[1], parts[2], parts[3], int(parts[4]),
                            int(parts[5]), float(parts[6]), float(parts[7]), float(parts[8]),
                            float(parts[9]), float(parts[10]),
                            error=not np.isfinite(float(parts[8])))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
        records.append(rec)
    return records


def write_records_json(records: list[FcrRecord], path: str,
                       experiment: ExperimentSpec | None = None) -> None:
    payload = {"records": [asdict(r) for r in records]}
    if experiment is not None:
        payload["experiment"] = experiment.provenance()
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def plot_data(records: list[FcrRecord], value: str = "fcr") -> dict[str, list[tuple[int, float]]]:
    """Per ablation kind, (window, mean value) pairs for plotting; error
    records are skipped."""
    if value not in ("fcr", "acc_rm"):
        raise ValueError("value must be 'fcr' or 'acc_rm'")
    out: dict[str, list[tuple[int, float]]] = {}
    kinds = sorted({r.ablation for r in records})
    for kind in kinds:
        per_window: dict[int, list[float]] = {}
        for r in records:
            if r.ablation == kind and not r.error:
                per_window.setdefault(r.window, []).append(getattr(r, value))
        out[kind] = [(w, float(np.mean(vs))) for w, vs in sorted(per_window.items())]
    return out
