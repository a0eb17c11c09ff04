"""Sweep runners behind the ``ablate`` and ``ir-study`` commands.

A *cell* is one configuration variant.  Each cell is trained and evaluated
once per (seed, trial) pair and the reports are averaged.  A cell that
fails validation or diverges is recorded with a status instead of metrics;
the other cells are unaffected.
"""

from __future__ import annotations

import io
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from dmdsc.datasets import generate_synthetic, make_trial_splits
from dmdsc.errors import DMDSCError, ValidationError
from dmdsc.evaluation import average_reports, evaluate_trial
from dmdsc.trainer import train

log = logging.getLogger(__name__)

METRICS = ("acc", "auroc", "oscr")


@dataclass
class ResultRow:
    variant: str
    params: dict
    acc: float = math.nan
    auroc: float = math.nan
    oscr: float = math.nan
    runs: int = 0
    status: str = "ok"


@dataclass
class ResultsTable:
    param_names: tuple
    rows: list = field(default_factory=list)

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(("variant", *self.param_names, *METRICS, "runs", "status")) + "\n")
        for r in self.rows:
            cells = [r.variant]
            cells += [_fmt(r.params[p]) for p in self.param_names]
            cells += [_fmt(getattr(r, m)) for m in METRICS]
            cells += [str(r.runs), _csv_text(r.status)]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def grid_csv(self, metric, row_param, col_param):
        """Metric laid out as a matrix: one row per ``row_param`` value, one column per ``col_param`` value."""
        row_vals = _unique(r.params[row_param] for r in self.rows)
        col_vals = _unique(r.params[col_param] for r in self.rows)
        lookup = {(r.params[row_param], r.params[col_param]): getattr(r, metric) for r in self.rows}
        buf = io.StringIO()
        buf.write(",".join([f"{row_param}\\{col_param}", *(_fmt(c) for c in col_vals)]) + "\n")
        for rv in row_vals:
            vals = [_fmt(lookup.get((rv, cv), math.nan)) for cv in col_vals]
            buf.write(",".join([_fmt(rv), *vals]) + "\n")
        return buf.getvalue()

    def find(self, **params):
        for r in self.rows:
            if all(r.params.get(k) == v for k, v in params.items()):
                return r
        raise KeyError(params)


def _unique(values):
    out = []
    for v in values:
        if v not in out:
            out.append(v)
    return out


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _csv_text(s):
    return '"' + s.replace('"', '""') + '"' if ("," in s or '"' in s) else s


def run_single(cfg, split=None):
    """Generate data for ``cfg`` (and ``split``), train, and evaluate."""
    train_ds, test_known, test_unknown, background = generate_synthetic(cfg.synth, split)
    net_cfg = cfg.net_config(train_ds.input_dim, cfg.synth.num_known)
    ckpt, _ = train(train_ds, background, net_cfg, cfg.train)
    return evaluate_trial(ckpt, test_known, test_unknown)


def run_variant(cfg, synth=None, train_overrides=None):
    """Average report over ``cfg.seeds`` seeds and ``cfg.trials`` trial splits."""
    reports = []
    for s in range(cfg.seeds):
        c = cfg.with_seed(cfg.seed + s)
        if synth:
            c = replace(c, synth=replace(c.synth, **synth))
        if train_overrides:
            c = replace(c, train=replace(c.train, **train_overrides))
        splits = [None]
        if c.trials > 1:
            total = c.synth.num_known + c.synth.num_unknown
            splits = make_trial_splits(total, c.synth.num_known, c.trials, c.seed)
        for split in splits:
            reports.append(run_single(c, split))
    return average_reports(reports), len(reports)


def _run_cell(args):
    cfg, variant, params, synth, train_overrides = args
    row = ResultRow(variant, params)
    try:
        if train_overrides:
            # Construct once up front so an invalid combination fails before any training.
            replace(cfg.train, **train_overrides)
        avg, n = run_variant(cfg, synth, train_overrides)
    except ValidationError as e:
        row.status = f"invalid: {e}"
        return row
    except (DMDSCError, ArithmeticError) as e:
        row.status = f"failed: {e}"
        return row
    row.acc, row.auroc, row.oscr, row.runs = avg.acc, avg.auroc, avg.oscr, n
    return row


def _run_cells(cells, jobs):
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, cells))
    rows = []
    for cell in cells:
        log.info("running %s", cell[1])
        rows.append(_run_cell(cell))
    return rows


def ablate_lambda(cfg, lambda_inter_values, lambda_bg_values, jobs=1):
    if not lambda_inter_values or not lambda_bg_values:
        raise ValidationError("lambda sweep lists must be non-empty")
    cells = []
    for li, lb in itertools.product(lambda_inter_values, lambda_bg_values):
        params = {"lambda_inter": float(li), "lambda_bg": float(lb)}
        cells.append((cfg, f"li={li:g}/lb={lb:g}", params, None, params))
    table = ResultsTable(("lambda_inter", "lambda_bg"))
    table.rows = _run_cells(cells, jobs)
    return table


def ablate_margin(cfg, m_min_values, m_max_values, jobs=1):
    if not m_min_values or not m_max_values:
        raise ValidationError("margin sweep lists must be non-empty")
    cells = []
    for lo, hi in itertools.product(m_min_values, m_max_values):
        params = {"m_min": float(lo), "m_max": float(hi)}
        cells.append((cfg, f"m={lo:g}-{hi:g}", params, None, params))
    table = ResultsTable(("m_min", "m_max"))
    table.rows = _run_cells(cells, jobs)
    return table


def ir_study(cfg, imbalance_ratios=(1, 10, 100), jobs=1):
    """Uniform vs dynamic margins on identical data for each imbalance ratio."""
    if not imbalance_ratios:
        raise ValidationError("imbalance ratio list must be non-empty")
    cells = []
    for ir in imbalance_ratios:
        for mode in ("uniform", "dynamic"):
            params = {"imbalance_ratio": float(ir), "margin_mode": mode}
            cells.append(
                (cfg, f"ir={ir:g}/{mode}", params, {"imbalance_ratio": float(ir)}, {"margin_mode": mode})
            )
    table = ResultsTable(("imbalance_ratio", "margin_mode"))
    table.rows = _run_cells(cells, jobs)
    return table

