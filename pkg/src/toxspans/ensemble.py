"""Union / intersection of predicted offset sets across checkpoints and systems.

Combination specs are JSON::

    {"op": "intersection",
     "operands": ["sp_preds.tsv",
                  {"op": "union", "checkpoints": "runs/tc/epoch_*.npz", "k": 3}]}

A string operand is a prediction file. A node with ``checkpoints`` selects
the ``k`` best of those checkpoints (by ``criterion``, default lowest dev
loss), predicts the evaluation split with each and combines them with
``op``; this is the "x-best checkpoints" operand.
"""

from __future__ import annotations

import glob
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence, Union

from .corpus import DatasetSplit
from .decode import DecodeConfig, Prediction, read_predictions
from .metric import EvalReport, evaluate

OPS = ("union", "intersection")


class CombinationError(ValueError):
    pass


def combine(predictions: Sequence[Mapping[int, Sequence[int]]], op: str) -> Prediction:
    if op not in OPS:
        raise CombinationError(f"unknown op {op!r}; expected one of {OPS}")
    if not predictions:
        raise CombinationError("nothing to combine")
    keys = set(predictions[0])
    for k, p in enumerate(predictions[1:], 1):
        if set(p) != keys:
            missing = sorted(keys ^ set(p))
            raise CombinationError(f"operand {k} sample ids differ from operand 0: {missing[:20]}")
    out: Prediction = {}
    for sid in sorted(keys):
        sets = [set(p[sid]) for p in predictions]
        merged = set.union(*sets) if op == "union" else set.intersection(*sets)
        out[sid] = tuple(sorted(merged))
    return out


@dataclass
class CheckpointSelector:
    checkpoints: list[str]
    k: int
    op: str = "union"
    criterion: str = "dev_loss_asc"
    decode: dict = field(default_factory=dict)
    mode: str = "default"


@dataclass
class CombinationSpec:
    op: str
    operands: list[Union[str, "CombinationSpec", CheckpointSelector]]

    def leaves(self) -> int:
        n = 0
        for o in self.operands:
            if isinstance(o, CombinationSpec):
                n += o.leaves()
            elif isinstance(o, CheckpointSelector):
                n += o.k
            else:
                n += 1
        return n


def _resolve_path(p: str, base: Path) -> str:
    return p if os.path.isabs(p) else str(base / p)


def parse_spec(obj: dict | str, base_dir: str | os.PathLike = ".", _top: bool = True):
    """Build a spec tree from parsed JSON; relative paths resolve against ``base_dir``."""
    base = Path(base_dir)
    if isinstance(obj, str):
        return _resolve_path(obj, base)
    if not isinstance(obj, dict) or obj.get("op") not in OPS:
        raise CombinationError(f"bad combination node: {obj!r}")
    if "checkpoints" in obj:
        ck = obj["checkpoints"]
        paths = sorted(glob.glob(_resolve_path(ck, base))) if isinstance(ck, str) else [_resolve_path(c, base) for c in ck]
        node = CheckpointSelector(paths, int(obj.get("k", len(paths))), obj["op"],
                                  obj.get("criterion", "dev_loss_asc"), obj.get("decode", {}), obj.get("mode", "default"))
        if node.k < 1 or node.k > len(paths):
            raise CombinationError(f"k={node.k} but {len(paths)} checkpoints matched {ck!r}")
        if _top and node.k < 2:
            raise CombinationError("a combination needs at least 2 leaf operands")
        return node
    operands = obj.get("operands")
    if not isinstance(operands, list) or not operands:
        raise CombinationError("combination node needs a non-empty 'operands' list")
    spec = CombinationSpec(obj["op"], [parse_spec(o, base, False) for o in operands])
    if _top and spec.leaves() < 2:
        raise CombinationError("a combination needs at least 2 leaf operands")
    return spec


def load_spec(path: str | os.PathLike):
    path = Path(path)
    return parse_spec(json.loads(path.read_text(encoding="utf-8")), path.parent)


def _predict_checkpoints(sel: CheckpointSelector, split: DatasetSplit) -> list[Prediction]:
    from .inference import Predictor
    from .model import ModelCheckpoint, select_checkpoints

    ckpts = [ModelCheckpoint.load(p) for p in sel.checkpoints]
    preds = []
    for ck in select_checkpoints(ckpts, sel.k, sel.criterion):
        cfg = DecodeConfig(**sel.decode)
        if ck.threshold is not None and "threshold" not in sel.decode:
            cfg = replace(cfg, threshold=ck.threshold, word_prob_threshold=ck.threshold)
        preds.append(Predictor.from_checkpoint(ck).predict(split, cfg, sel.mode))
    return preds


def materialize(spec, split: DatasetSplit | None = None,
                loader: Callable[[str], Prediction] = read_predictions) -> Prediction:
    """Evaluate a spec tree bottom-up into a single prediction."""
    if isinstance(spec, str):
        return loader(spec)
    if isinstance(spec, CheckpointSelector):
        if split is None:
            raise CombinationError("checkpoint operands need an evaluation split to predict on")
        try:
            preds = _predict_checkpoints(spec, split)
        except FileNotFoundError as exc:
            raise CombinationError(f"unresolvable checkpoint: {exc}") from exc
        return combine(preds, spec.op)
    if isinstance(spec, CombinationSpec):
        try:
            return combine([materialize(o, split, loader) for o in spec.operands], spec.op)
        except FileNotFoundError as exc:
            raise CombinationError(f"unresolvable operand: {exc}") from exc
    raise CombinationError(f"bad spec node {spec!r}")


def evaluate_combination(spec, split: DatasetSplit,
                         loader: Callable[[str], Prediction] = read_predictions) -> EvalReport:
    return evaluate(materialize(spec, split, loader), split)
