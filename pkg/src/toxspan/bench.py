"""Single-text prediction latency measurement.

Predictions run one text at a time (batch size 1, the realistic moderation
setting); warmup calls are excluded so first-call cache effects don't skew
the mean. Timing uses the monotonic high-resolution clock.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from typing import Sequence

from .neural import SpanModel


@dataclass(frozen=True)
class BenchResult:
    model_id: str
    device: str
    n_texts: int
    total_seconds: float
    mean_seconds: float
    p50_seconds: float
    p95_seconds: float
    min_seconds: float
    max_seconds: float
    warmup_runs: int
    timer_resolution_seconds: float
    spans_digest: str  # sha256 over the predicted offsets, for determinism checks

    def to_dict(self) -> dict:
        return {
            "model": self.model_id,
            "device": self.device,
            "n_texts": self.n_texts,
            "total_seconds": round(self.total_seconds, 4),
            "per_text_seconds": {
                "mean": round(self.mean_seconds, 6),
                "p50": round(self.p50_seconds, 6),
                "p95": round(self.p95_seconds, 6),
            },
            "warmup_runs": self.warmup_runs,
            "timer_resolution_seconds": self.timer_resolution_seconds,
            "spans_digest": self.spans_digest,
        }


def _percentile(sorted_values: list[float], q: float) -> float:
    # Nearest-rank on the sorted sample.
    idx = min(len(sorted_values) - 1, max(0, round(q * (len(sorted_values) - 1))))
    return sorted_values[idx]


def run_benchmark(
    model: SpanModel,
    texts: Sequence[str],
    warmup: int = 2,
    *,
    model_id: str = "model",
) -> BenchResult:
    """Time ``model.predict`` over each text individually."""
    if not texts:
        raise ValueError("run_benchmark requires at least one text")

    for text in texts[: min(warmup, len(texts))]:
        model.predict(text)

    times: list[float] = []
    all_offsets: list[list[int]] = []
    loop_start = time.perf_counter()
    for text in texts:
        start = time.perf_counter()
        spans, _ = model.predict(text)
        times.append(time.perf_counter() - start)
        all_offsets.append(list(spans.offsets))
    total = time.perf_counter() - loop_start

    ordered = sorted(times)
    digest = hashlib.sha256(json.dumps(all_offsets).encode("utf-8")).hexdigest()
    return BenchResult(
        model_id=model_id,
        device=model.config.device.value,
        n_texts=len(texts),
        total_seconds=total,
        mean_seconds=sum(times) / len(times),
        p50_seconds=_percentile(ordered, 0.5),
        p95_seconds=_percentile(ordered, 0.95),
        min_seconds=ordered[0],
        max_seconds=ordered[-1],
        warmup_runs=min(warmup, len(texts)),
        timer_resolution_seconds=time.get_clock_info("perf_counter").resolution,
        spans_digest=digest,
    )


def format_table(results: Sequence[BenchResult]) -> str:
    """Render results as a model x device table of total seconds."""
    devices = sorted({r.device for r in results})
    models = []
    for r in results:
        if r.model_id not in models:
            models.append(r.model_id)
    cell: dict[tuple[str, str], float] = {(r.model_id, r.device): r.total_seconds for r in results}

    width = max([len("model")] + [len(m) for m in models]) + 2
    header = "model".ljust(width) + "".join(d.rjust(12) for d in devices)
    lines = [header, "-" * len(header)]
    for m in models:
        row = m.ljust(width)
        for d in devices:
            value = cell.get((m, d))
            row += (f"{value:.2f}" if value is not None else "-").rjust(12)
        lines.append(row)
    n = results[0].n_texts if results else 0
    lines.append(f"(total seconds to predict {n} texts, batch size 1)")
    return "\n".join(lines)


_SAMPLE_SENTENCES = (
    "The committee will meet on Thursday to review the new proposal.",
    "I honestly think the weather this weekend is going to be lovely.",
    "Someone parked their car across two spaces again this morning.",
    "The referee's decision changed the momentum of the entire match.",
    "Can anyone recommend a good book about the history of printing?",
    "This is one of the better articles I have read on the subject.",
    "They rebuilt the old bridge after the flood damaged its arches.",
    "Our neighbours are renovating and the noise starts at seven.",
)


def sample_texts(n: int) -> list[str]:
    """Deterministic benchmark corpus: cycles a fixed set of sentences,
    suffixing a counter so every text is distinct."""
    return [
        f"{_SAMPLE_SENTENCES[i % len(_SAMPLE_SENTENCES)]} (sample {i})" for i in range(n)
    ]
