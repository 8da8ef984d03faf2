"""Module ablation grid and lambda sweep on a shared data split."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from ..heads import CLASS_NAMES
from .metrics import EvalError

ABLATION_CELLS = ((False, False), (True, False), (False, True), (True, True))
SWEEP_LAMBDAS = (0.001, 0.1, 0.5, 1.0)


@dataclass(frozen=True)
class EvalReport:
    """Evaluation of one trained configuration."""

    ap: dict  # region -> class -> AP or None
    mAP: dict  # region -> mAP or None
    counts: dict  # region -> class -> {tp, fp, fn}
    motion: dict
    seed: int
    config_hash: str
    split_hash: str
    dmae: bool
    xua: bool
    lam: float

    @classmethod
    def from_metrics(cls, metrics: dict) -> "EvalReport":
        ev = metrics["eval"]
        regions = [r for r in ev if r != "motion"]
        return cls(
            ap={r: ev[r]["ap"] for r in regions},
            mAP={r: ev[r]["mAP"] for r in regions},
            counts={r: ev[r]["counts"] for r in regions},
            motion=ev.get("motion", {}),
            seed=metrics["seed"],
            config_hash=metrics["config_hash"],
            split_hash=metrics["split_hash"],
            dmae=metrics["dmae"],
            xua=metrics["xua"],
            lam=metrics["lambda"],
        )

    def to_dict(self) -> dict:
        return {
            "ap": self.ap,
            "mAP": self.mAP,
            "counts": self.counts,
            "motion": self.motion,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "split_hash": self.split_hash,
            "dmae": self.dmae,
            "xua": self.xua,
            "lambda": self.lam,
        }


def _pct(v) -> str:
    return "    -" if v is None else f"{100.0 * v:6.2f}"


def _row(report: EvalReport, regions: Sequence[str]) -> str:
    cells = []
    for r in regions:
        cells.extend(_pct(report.ap[r][c]) for c in CLASS_NAMES)
        cells.append(_pct(report.mAP[r]))
    return " ".join(cells)


def _header(regions: Sequence[str]) -> list[str]:
    names = {"all": "Entire area", "corridor": "Driving corridor"}
    groups = " ".join(f"{names[r]:<27}" for r in regions)
    cols = " ".join("   Car    Ped    Cyc    mAP" for _ in regions)
    return [groups, cols]


def ablation_table(reports: Sequence[EvalReport]) -> str:
    regions = list(reports[0].mAP)
    head = _header(regions)
    lines = [f"# config {reports[0].config_hash} split {reports[0].split_hash} seed {reports[0].seed}"]
    lines.append(f"{'':12} {head[0]}")
    lines.append(f"{'DMAE  X-UA':12} {head[1]}")
    for rep in reports:
        mark = f"{'yes' if rep.dmae else 'no':<5} {'yes' if rep.xua else 'no':<6}"
        lines.append(f"{mark:12} {_row(rep, regions)}")
    return "\n".join(lines) + "\n"


def sweep_table(reports: Sequence[EvalReport]) -> str:
    regions = list(reports[0].mAP)
    head = _header(regions)
    lines = [f"# split {reports[0].split_hash} seed {reports[0].seed} (DMAE off, X-UA on)"]
    lines.append(f"{'':12} {head[0]}")
    lines.append(f"{'lambda':12} {head[1]}")
    for rep in reports:
        lines.append(f"{rep.lam:<12g} {_row(rep, regions)}")
    return "\n".join(lines) + "\n"


def _run_cell(cfg, split, out_dir, name, log):
    from ..harness.train import run

    cell_dir = None if out_dir is None else Path(out_dir) / name
    try:
        return EvalReport.from_metrics(run(cfg, cell_dir, split, log))
    except Exception as exc:
        raise EvalError(f"cell {name} failed: {exc}") from exc


def run_ablation(
    base,
    cells: Sequence[tuple[bool, bool]] = ABLATION_CELLS,
    out_dir: str | Path | None = None,
    split=None,
    log: Callable[[str], None] | None = None,
) -> list[EvalReport]:
    """Train and evaluate each (DMAE, X-UA) cell on one data split and seed."""
    from ..harness.train import load_data

    split = split or load_data(base)
    reports = []
    for dmae_on, xua_on in cells:
        cfg = replace(base, dmae=replace(base.dmae, enabled=dmae_on), xua=replace(base.xua, enabled=xua_on)).validate()
        name = f"dmae_{'on' if dmae_on else 'off'}-xua_{'on' if xua_on else 'off'}"
        if log:
            log(f"[ablate] cell {name}")
        reports.append(_run_cell(cfg, split, out_dir, name, log))
    if out_dir is not None:
        _write(out_dir, "ablation", reports, ablation_table(reports))
    return reports


def lambda_sweep(
    base,
    values: Sequence[float] = SWEEP_LAMBDAS,
    out_dir: str | Path | None = None,
    split=None,
    log: Callable[[str], None] | None = None,
) -> list[EvalReport]:
    """One run per lambda with DMAE off and X-UA on; everything else fixed."""
    from ..harness.train import load_data

    split = split or load_data(base)
    reports = []
    for lam in values:
        cfg = replace(base, dmae=replace(base.dmae, enabled=False), xua=replace(base.xua, enabled=True, lam=float(lam))).validate()
        if log:
            log(f"[sweep] lambda {lam:g}")
        reports.append(_run_cell(cfg, split, out_dir, f"lambda_{lam:g}", log))
    if out_dir is not None:
        _write(out_dir, "lambda_sweep", reports, sweep_table(reports))
    return reports


def _write(out_dir, stem: str, reports: Sequence[EvalReport], table: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = [r.to_dict() for r in reports]
    (out / f"{stem}.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    (out / f"{stem}.txt").write_text(table)
