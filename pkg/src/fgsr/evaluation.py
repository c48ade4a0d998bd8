"""Average percent metric increase over a validation batch, and report files.

For every image the metric is taken twice against the HR reference, once
for the LR input (baseline) and once for the model output, and the relative
change in percent is averaged over the batch. Reductions always run in
image-id order so results do not depend on the order images arrive in.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .imaging import as_image, check_same_shape, ensure_parent
from .metrics import SsimParams, compute_metric

log = logging.getLogger(__name__)

DEFAULT_METRICS = ("ssim", "psnr", "uqi")
CSV_COLUMNS = ("image", "metric", "region", "baseline", "output", "percent_increase")


class ZeroBaselineError(ArithmeticError):
    pass


def percent_increase(baseline: float, output: float) -> float:
    if baseline == 0:
        raise ZeroBaselineError("baseline score is zero; percent increase is undefined")
    return (output - baseline) / baseline * 100


@dataclass(frozen=True)
class EvalRecord:
    image: str
    metric: str
    region: str
    baseline: float
    output: float
    percent_increase: float


@dataclass
class MetricSummary:
    count: int
    skipped: int
    mean_baseline: float
    mean_output: float
    mean_percent_increase: float


@dataclass
class EvalSummary:
    region: str
    metrics: dict[str, MetricSummary] = field(default_factory=dict)
    skipped_images: dict[str, list[str]] = field(default_factory=dict)

    @property
    def count(self) -> int:
        return max((m.count for m in self.metrics.values()), default=0)


def mask_bbox(mask) -> tuple[slice, slice]:
    bits = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    if rows.size == 0:
        raise ValueError("mask is empty; the foreground region is undefined")
    return slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1)


def _normalise_pairs(pairs):
    items = []
    for i, item in enumerate(pairs):
        if len(item) == 4:
            image_id, lr, hr, out = item
        elif len(item) == 3:
            image_id, (lr, hr, out) = f"{i:06d}", item
        else:
            raise ValueError("each pair must be (lr, hr, out) or (image_id, lr, hr, out)")
        lr, hr, out = as_image(lr), as_image(hr), as_image(out)
        check_same_shape(lr, hr, f"{image_id}: LR and HR")
        check_same_shape(out, hr, f"{image_id}: output and HR")
        items.append((str(image_id), lr, hr, out))
    ids = [it[0] for it in items]
    if len(set(ids)) != len(ids):
        raise ValueError("image ids must be unique")
    return sorted(items, key=lambda it: it[0])


def evaluate_batch(pairs, metrics=DEFAULT_METRICS, region: str = "full", masks=None, *,
                   psnr_variant: str = "paper", ssim_params: SsimParams | None = None,
                   uqi_mode: str = "windowed", uqi_window: int = 8):
    """Score a batch. Returns ``(summary, records)``.

    ``pairs`` holds ``(image_id, lr, hr, out)`` tuples (bare ``(lr, hr, out)``
    triples get positional ids). ``region="foreground"`` crops all three
    images to the bounding box of ``masks[image_id]`` first.

    Images whose baseline is zero, or whose metric is undefined (identical
    images under PSNR, flat images under UQI), are logged, left out of that
    metric's mean and counted in ``skipped``.
    """
    if region not in ("full", "foreground"):
        raise ValueError(f"region must be 'full' or 'foreground', got {region!r}")
    items = _normalise_pairs(pairs)
    if not items:
        raise ValueError("cannot evaluate an empty batch")
    if region == "foreground":
        if masks is None:
            raise ValueError("foreground region needs masks")
        cropped = []
        for image_id, lr, hr, out in items:
            if image_id not in masks:
                raise ValueError(f"no mask for image {image_id!r}")
            mask = np.asarray(masks[image_id], dtype=bool)
            if mask.shape != hr.shape[:2]:
                raise ValueError(f"{image_id}: mask {mask.shape} does not match image {hr.shape[:2]}")
            box = mask_bbox(mask)
            cropped.append((image_id, lr[box], hr[box], out[box]))
        items = cropped

    opts = dict(psnr_variant=psnr_variant, ssim_params=ssim_params,
                uqi_mode=uqi_mode, uqi_window=uqi_window)
    metrics = [m.lower() for m in metrics]
    records: list[EvalRecord] = []
    summary = EvalSummary(region)
    for name in metrics:
        kept: list[EvalRecord] = []
        skipped: list[str] = []
        for image_id, lr, hr, out in items:
            try:
                base = compute_metric(name, lr, hr, **opts).value
                score = compute_metric(name, out, hr, **opts).value
                inc = percent_increase(base, score)
            except ArithmeticError as exc:
                log.warning("skipping %s for %s: %s", name, image_id, exc)
                skipped.append(image_id)
                continue
            kept.append(EvalRecord(image_id, name, region, base, score, inc))
        if not kept:
            raise ValueError(f"metric {name}: every image was skipped")
        n = len(kept)
        summary.metrics[name] = MetricSummary(
            count=n,
            skipped=len(skipped),
            mean_baseline=sum(r.baseline for r in kept) / n,
            mean_output=sum(r.output for r in kept) / n,
            mean_percent_increase=sum(r.percent_increase for r in kept) / n,
        )
        summary.skipped_images[name] = skipped
        records.extend(kept)
    return summary, records


def _fmt(x: float) -> str:
    return "%.6f" % x


def report_csv(summary: EvalSummary, records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([r.image, r.metric, r.region, _fmt(r.baseline), _fmt(r.output),
                    _fmt(r.percent_increase)])
    # summary lines are comments so the table itself stays one row per record
    for name, m in summary.metrics.items():
        buf.write(
            f"# summary,metric={name},region={summary.region},count={m.count},"
            f"skipped={m.skipped},mean_baseline={_fmt(m.mean_baseline)},"
            f"mean_output={_fmt(m.mean_output)},"
            f"mean_percent_increase={_fmt(m.mean_percent_increase)}\n"
        )
    return buf.getvalue()


def _round6(x: float) -> float:
    return float(_fmt(x))


def report_dict(summary: EvalSummary, records) -> dict:
    return {
        "records": [
            {k: (_round6(v) if isinstance(v, float) else v) for k, v in asdict(r).items()}
            for r in records
        ],
        "summary": {
            "region": summary.region,
            "metrics": {
                name: {k: (_round6(v) if isinstance(v, float) else v) for k, v in asdict(m).items()}
                for name, m in summary.metrics.items()
            },
        },
    }


def report_json(summary: EvalSummary, records) -> str:
    return json.dumps(report_dict(summary, records), indent=2) + "\n"


def emit_report(summary: EvalSummary, records, path, fmt: str = "csv") -> None:
    if not records or summary.count == 0:
        raise ValueError("nothing to report: the summary has no records")
    if fmt == "csv":
        text = report_csv(summary, records)
    elif fmt == "json":
        text = report_json(summary, records)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def read_csv_records(path) -> list[EvalRecord]:
    with open(path, encoding="utf-8", newline="") as f:
        rows = [line for line in f if not line.startswith("#")]
    out = []
    for row in csv.DictReader(rows):
        out.append(EvalRecord(row["image"], row["metric"], row["region"], float(row["baseline"]),
                              float(row["output"]), float(row["percent_increase"])))
    return out


def records_from_json(path) -> list[EvalRecord]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return [EvalRecord(**r) for r in data["records"]]
