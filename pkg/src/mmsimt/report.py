"""Merging metric records into a latency/quality table."""

from __future__ import annotations

import json
import logging

from .errors import FormatError, UsageError
from .metrics import MetricRecord

log = logging.getLogger(__name__)

COLUMNS = ("system", "policy", "k", "bleu", "ap", "al", "cw_mean")


def _key(rec):
    return rec.system, rec.policy or "", -1 if rec.k is None else rec.k


def merge_records(records):
    """Deduplicate on (system, policy, k), last one wins, and sort by system then k."""
    if not records:
        raise UsageError("report needs at least one record")
    merged = {}
    for rec in records:
        key = _key(rec)
        if key in merged:
            log.warning("duplicate record for system=%s policy=%s k=%s; keeping the later one",
                        rec.system, rec.policy, rec.k)
        merged[key] = rec
    return [merged[k] for k in sorted(merged, key=lambda k: (k[0], k[2], k[1]))]


def parse_records(lines, source="<input>"):
    out = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            out.append(MetricRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, TypeError) as exc:
            raise FormatError(f"{source}:{n}: not a metric record ({exc})") from None
    return out


def _cell(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.2f}"
    return str(v)


def format_table(records):
    rows = [[_cell(getattr(r, c)) for c in COLUMNS] for r in records]
    widths = [max(len(c), *(len(row[i]) for row in rows)) for i, c in enumerate(COLUMNS)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(COLUMNS, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


def format_jsonl(records):
    return "".join(r.to_json() + "\n" for r in records)
