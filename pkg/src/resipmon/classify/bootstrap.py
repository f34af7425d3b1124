"""Groundtruth extension loop: predict, sample positives, fold in verdicts.

Each round scores every candidate, samples a batch of positive predictions
for manual review, and appends the confirmed ones to the groundtruth with a
round-stamped provenance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import ApexDomain
from .features import FeatureVector, RPS
from .forest import ForestModel, LabeledExample, predict

log = logging.getLogger(__name__)


@dataclass
class BootstrapRound:
    round_index: int
    positives_total: int
    pending: list[tuple[ApexDomain, float]]   # sampled for manual review
    confirmed: list[LabeledExample] = field(default_factory=list)
    rejected: int = 0
    exhausted: bool = False  # fewer positives than requested

    @property
    def sampled(self) -> int:
        return len(self.pending)


def bootstrap_round(model: ForestModel,
                    candidates: list[tuple[ApexDomain, FeatureVector]],
                    sample_n: int = 50, seed: int = 0, round_index: int = 1,
                    labels_in: dict[str, bool] | None = None,
                    threshold: float = 0.5) -> BootstrapRound:
    """Run one extension round.

    When fewer than sample_n positives exist, all of them are sampled and the
    round is flagged as exhausted. labels_in maps apex name -> verdict for
    previously sampled candidates; confirmed ones become groundtruth rows
    with provenance bootstrap_round_<n>. The positive-score threshold is
    configurable per round (default matches the classifier's 0.5).
    """
    scored = [(apex, predict(model, fv)) for apex, fv in candidates]
    positives = [(apex, score) for apex, (_, score) in scored
                 if score >= threshold]
    rng = np.random.default_rng(np.random.SeedSequence([seed, round_index]))
    if len(positives) <= sample_n:
        pending = list(positives)
        exhausted = len(positives) < sample_n
        if exhausted:
            log.warning("round %d: only %d positives for sample_n=%d",
                        round_index, len(positives), sample_n)
    else:
        picks = rng.choice(len(positives), size=sample_n, replace=False)
        pending = [positives[i] for i in sorted(int(p) for p in picks)]
        exhausted = False

    result = BootstrapRound(round_index=round_index,
                            positives_total=len(positives),
                            pending=pending, exhausted=exhausted)
    if labels_in:
        by_apex = {apex.name: fv for apex, fv in candidates}
        for name, verdict in labels_in.items():
            if name not in by_apex:
                continue
            if verdict:
                result.confirmed.append(LabeledExample(
                    ApexDomain(name), by_apex[name], RPS,
                    provenance=f"bootstrap_round_{round_index}"))
            else:
                result.rejected += 1
    return result


# --- flat-file formats -----------------------------------------------------
# groundtruth:   apex \t label \t provenance
# pending:       apex \t score
# labels_in:     apex \t verdict (RPS/NonRPS or true/false)

def write_pending(pending: list[tuple[ApexDomain, float]], path,
                  header: str = "") -> None:
    lines = [f"{apex.name}\t{score!r}\n" for apex, score in pending]
    Path(path).write_text(header + "".join(lines), encoding="utf-8")


def read_labels_in(path) -> dict[str, bool]:
    verdicts = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        apex, verdict = line.split("\t")
        verdicts[apex] = verdict.strip().lower() in ("rps", "true", "1", "yes")
    return verdicts


def append_groundtruth(rows: list[tuple[str, str, str]], path) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for apex, label, provenance in rows:
            fh.write(f"{apex}\t{label}\t{provenance}\n")


def read_groundtruth(path) -> list[tuple[str, str, str]]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        apex, label, provenance = line.split("\t")
        rows.append((apex, label, provenance))
    return rows
