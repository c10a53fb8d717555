"""Ablation grids: train one model per cell and tabulate best dev accuracy."""
from __future__ import annotations

import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from relqa.errors import RelQAError
from relqa.graphbuild import GraphConfig, Instance
from relqa.harness.train import RunConfig, train
from relqa.models import ModelConfig

log = logging.getLogger(__name__)

AXES = ("arch", "use_rgcn", "graph", "embed_spec", "scale")
SETTING_ORDER = ("Base", "+Reason", "+Sents", "+Reason+Sents")


@dataclass
class GridCell:
    index: int
    model: ModelConfig
    best_dev_acc: float | None = None
    best_epoch: int | None = None
    error: str | None = None

    @property
    def row(self) -> str:
        return self.model.label

    @property
    def setting(self) -> str:
        return self.model.graph.setting

    @property
    def embed_label(self) -> str:
        return "+".join(self.model.embed_spec)

    def record(self) -> dict:
        return {"cell": self.index, "row": self.row, "setting": self.setting, "embed": self.embed_label,
                "best_dev_acc": self.best_dev_acc, "best_epoch": self.best_epoch, "error": self.error}


def expand_grid(axes: dict, base: RunConfig) -> list[GridCell]:
    """Cartesian product of the axis values applied on top of ``base.model``."""
    unknown = set(axes) - set(AXES)
    if unknown:
        raise RelQAError(f"unknown grid axes {sorted(unknown)}")
    names = [a for a in AXES if a in axes]
    cells = []
    for i, combo in enumerate(itertools.product(*(axes[a] for a in names))):
        fields = base.model.to_dict()
        for a, v in zip(names, combo):
            fields[a] = v
        if isinstance(fields["graph"], str):
            fields["graph"] = GraphConfig.from_setting(fields["graph"])
        cells.append(GridCell(i, ModelConfig.from_dict(fields)))
    return cells


def _run_cell(cell: GridCell, base: RunConfig, train_set, dev_set, out_dir) -> GridCell:
    run = RunConfig.from_dict(dict(base.to_dict(), model=cell.model.to_dict(), out_dir=None))
    try:
        res = train(run, train_set, dev_set, out_dir=(Path(out_dir) / f"cell{cell.index:03d}") if out_dir else None)
        cell.best_dev_acc, cell.best_epoch = res.best_dev_acc, res.best_epoch
    except (RelQAError, ArithmeticError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
        log.warning("grid cell %d (%s, %s) failed: %s", cell.index, cell.row, cell.setting, cell.error)
    return cell


def render_table(cells: Sequence[GridCell]) -> str:
    """Markdown table with model variants as rows and graph settings as columns."""
    rows = list(dict.fromkeys(c.row for c in cells))
    with_embed = len({c.embed_label for c in cells}) > 1

    def column(c: GridCell) -> str:
        return f"{c.setting} / {c.embed_label}" if with_embed else c.setting

    def col_key(name):
        setting = name.split(" / ")[0]
        return (SETTING_ORDER.index(setting) if setting in SETTING_ORDER else 99, name)

    cols = sorted(dict.fromkeys(column(c) for c in cells), key=col_key)
    lookup = {(c.row, column(c)): c for c in cells}
    lines = ["| Model | " + " | ".join(cols) + " |", "|---|" + "---|" * len(cols)]
    for r in rows:
        vals = []
        for col in cols:
            c = lookup.get((r, col))
            if c is None:
                vals.append("")
            elif c.error is not None:
                vals.append("FAILED")
            else:
                vals.append(f"{100 * c.best_dev_acc:.2f}")
        lines.append(f"| {r} | " + " | ".join(vals) + " |")
    return "\n".join(lines) + "\n"


def run_grid(axes: dict, base: RunConfig, train_set: Sequence[Instance], dev_set: Sequence[Instance],
             out_dir=None, workers: int = 1) -> tuple[list[GridCell], str]:
    cells = expand_grid(axes, base)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            cells = list(pool.map(lambda c: _run_cell(c, base, train_set, dev_set, out_dir), cells))
    else:
        cells = [_run_cell(c, base, train_set, dev_set, out_dir) for c in cells]
    table = render_table(cells)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "cells.jsonl").write_text("".join(json.dumps(c.record(), sort_keys=True) + "\n" for c in cells))
        (out / "report.md").write_text(table)
    return cells, table
