"""Timestamp-anomaly detectors over commit records and commit graphs.

Five independent checks: impossibly old dates, dates past the dataset
snapshot, commits dated earlier than their predecessor (linear walk),
commits dated earlier than a parent (exact graph edges), tool signatures
in messages, and the verified-child/unverified-parent clock mismatch.
All comparisons are strict -- equal timestamps are legal and common at
one-second resolution, so they are never flagged.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import Anomaly, AnomalyKind, CommitRecord, Timestamp, format_utc

log = logging.getLogger(__name__)

# 1990-11-19T00:00:00Z, the CVS 1.0 release. Mainstream version control
# starts here; a commit dated before it cannot carry an honest clock.
DEFAULT_OLD_CUTOFF = Timestamp(658972800)


class MissingSnapshotDate(Exception):
    """Future detection needs to know when the dataset was frozen."""


@dataclass(frozen=True)
class DetectorConfig:
    """Shared knobs for the detectors.

    ``future_cutoff`` is the dataset snapshot date and has no safe
    default -- it must come from the dataset's manifest.
    """

    old_cutoff: Timestamp = DEFAULT_OLD_CUTOFF
    future_cutoff: Timestamp | None = None
    exclude_merges: bool = True
    date_field: str = "committer"

    def __post_init__(self):
        if self.date_field not in ("committer", "author"):
            raise ValueError(f"date_field must be committer or author, got {self.date_field!r}")
        if (
            self.future_cutoff is not None
            and not self.old_cutoff.epoch_seconds < self.future_cutoff.epoch_seconds
        ):
            raise ValueError("old_cutoff must lie before future_cutoff")


# ---- Cutoff detectors ----


def detect_old(records: list[CommitRecord], cfg: DetectorConfig) -> list[Anomaly]:
    """Flag commits whose selected date is strictly before the old cutoff."""
    cutoff = cfg.old_cutoff.epoch_seconds
    out = []
    for rec in records:
        ts = rec.date(cfg.date_field)
        if ts.epoch_seconds < cutoff:
            out.append(
                Anomaly(
                    kind=AnomalyKind.OLD,
                    commit_hash=rec.hash,
                    repo_id=rec.repo_id,
                    evidence=(
                        f"{cfg.date_field} date {format_utc(ts)} predates "
                        f"{format_utc(cfg.old_cutoff)}"
                    ),
                )
            )
    return out


def detect_future(records: list[CommitRecord], cfg: DetectorConfig) -> list[Anomaly]:
    """Flag commits whose selected date is strictly after the snapshot date."""
    if cfg.future_cutoff is None:
        raise MissingSnapshotDate(
            "no snapshot date configured; set future_cutoff from the dataset manifest"
        )
    cutoff = cfg.future_cutoff.epoch_seconds
    out = []
    for rec in records:
        ts = rec.date(cfg.date_field)
        if ts.epoch_seconds > cutoff:
            out.append(
                Anomaly(
                    kind=AnomalyKind.FUTURE,
                    commit_hash=rec.hash,
                    repo_id=rec.repo_id,
                    evidence=(
                        f"{cfg.date_field} date {format_utc(ts)} is after the "
                        f"snapshot {format_utc(cfg.future_cutoff)}"
                    ),
                )
            )
    return out


# ---- Ordering detectors ----


def is_merge_message(message: str) -> bool:
    """Substring test, by design: cheap, and wrong in both directions.

    "submerged pump driver" matches too -- that trade-off is accepted to
    keep the exclusion rule trivially auditable.
    """
    return "merge" in message.lower()


def detect_out_of_order_linear(
    ordered: list[CommitRecord], cfg: DetectorConfig
) -> list[Anomaly]:
    """Walk a linearized history and flag backward steps.

    A commit is flagged when its date is strictly earlier than the
    immediately preceding commit's date. The comparison baseline always
    advances, flagged or not. With ``exclude_merges``, a merge message on
    either side of the step suppresses the flag.
    """
    if len(ordered) < 2:
        return []
    epochs = np.array(
        [r.date(cfg.date_field).epoch_seconds for r in ordered], dtype=np.int64
    )
    merge_mask = np.array([is_merge_message(r.message) for r in ordered], dtype=np.bool_)
    flags = kernels.linear_out_of_order_mask(epochs, merge_mask, cfg.exclude_merges)

    out = []
    for i in np.flatnonzero(flags).tolist():
        rec, prev = ordered[i], ordered[i - 1]
        delta = int(epochs[i - 1] - epochs[i])
        out.append(
            Anomaly(
                kind=AnomalyKind.OUT_OF_ORDER_LINEAR,
                commit_hash=rec.hash,
                repo_id=rec.repo_id,
                evidence=(
                    f"{cfg.date_field} date {format_utc(rec.date(cfg.date_field))} "
                    f"precedes previous commit {prev.hash} "
                    f"({format_utc(prev.date(cfg.date_field))})"
                ),
                delta_seconds=delta,
            )
        )
    return out


def detect_out_of_order_parents(graph, cfg: DetectorConfig) -> list[Anomaly]:
    """Flag commits with at least one strictly newer parent.

    One anomaly per child no matter how many parents offend;
    ``delta_seconds`` is the worst (largest) gap, and the evidence names
    the parent achieving it (lexicographically smallest hash on ties).
    Merge exclusion drops an edge when either endpoint has a merge
    message.
    """
    hashes = sorted(graph.nodes)
    if not hashes:
        return []
    index_of = {h: i for i, h in enumerate(hashes)}
    epoch_of = {
        h: graph.nodes[h].date(cfg.date_field).epoch_seconds for h in hashes
    }

    def excluded(child_hash: str, parent_hash: str) -> bool:
        return cfg.exclude_merges and (
            is_merge_message(graph.nodes[child_hash].message)
            or is_merge_message(graph.nodes[parent_hash].message)
        )

    child_rows: list[int] = []
    delta_rows: list[int] = []
    for child in hashes:
        for parent in graph.edges[child]:
            if excluded(child, parent):
                continue
            child_rows.append(index_of[child])
            delta_rows.append(epoch_of[parent] - epoch_of[child])
    if not child_rows:
        return []

    max_delta = kernels.max_parent_delta(
        np.array(child_rows, dtype=np.int64),
        np.array(delta_rows, dtype=np.int64),
        len(hashes),
    )

    out = []
    for i in np.flatnonzero(max_delta > 0).tolist():
        child = hashes[i]
        delta = int(max_delta[i])
        worst_parent = min(
            p
            for p in graph.edges[child]
            if epoch_of[p] - epoch_of[child] == delta and not excluded(child, p)
        )
        rec = graph.nodes[child]
        out.append(
            Anomaly(
                kind=AnomalyKind.OUT_OF_ORDER_PARENT,
                commit_hash=child,
                repo_id=rec.repo_id,
                evidence=(
                    f"parent {worst_parent} is {delta} s newer "
                    f"({format_utc(graph.nodes[worst_parent].date(cfg.date_field))} vs "
                    f"{format_utc(rec.date(cfg.date_field))})"
                ),
                delta_seconds=delta,
            )
        )
    return out


# ---- Message and metadata evidence ----

# Footer tokens are matched case-sensitively, colon included: these are
# machine-written lines and tooling never varies their spelling.
_FOOTER_SIGNATURES = ("git-svn-id", "Change-Id", "Reviewed-by", "rebase_source")
# Short names would drown in substring hits ("highgate", "smoke"), so they
# must stand alone as words; tools write them in varying case.
_WORD_SIGNATURES = (
    ("hg", re.compile(r"\bhg\b", re.IGNORECASE)),
    ("MOE", re.compile(r"\bmoe\b", re.IGNORECASE)),
)

TOOL_SIGNATURES = _FOOTER_SIGNATURES + tuple(name for name, _ in _WORD_SIGNATURES)


def detect_tool_signatures(records: list[CommitRecord]) -> list[Anomaly]:
    """Flag messages carrying known import/review-tool markers.

    Emits one anomaly per (commit, signature) pair so a message written
    by a conversion tool and a review tool counts once for each.
    """
    out = []
    for rec in records:
        for name in _FOOTER_SIGNATURES:
            if f"{name}:" in rec.message:
                out.append(_signature_anomaly(rec, name))
        for name, pattern in _WORD_SIGNATURES:
            if pattern.search(rec.message):
                out.append(_signature_anomaly(rec, name))
    return out


def _signature_anomaly(rec: CommitRecord, name: str) -> Anomaly:
    return Anomaly(
        kind=AnomalyKind.TOOL_SIGNATURE,
        commit_hash=rec.hash,
        repo_id=rec.repo_id,
        evidence=f"tool signature: {name}",
    )


def signature_name(anomaly: Anomaly) -> str:
    """Recover which signature a ToolSignature anomaly matched."""
    if anomaly.kind is not AnomalyKind.TOOL_SIGNATURE:
        raise ValueError("not a tool-signature anomaly")
    return anomaly.evidence.split(": ", 1)[1]


def detect_verified_mismatch(graph) -> list[Anomaly]:
    """Flag edges where a forge-verified child predates an unverified parent.

    A verified commit's date comes from the forge's clock; an unverified
    parent dated *after* it means the parent's user-controlled clock was
    ahead. Commits with unknown verification status never match.
    """
    out = []
    for child in sorted(graph.nodes):
        child_rec = graph.nodes[child]
        if child_rec.verified is not True:
            continue
        child_epoch = child_rec.committer_date.epoch_seconds
        for parent in graph.edges[child]:
            parent_rec = graph.nodes[parent]
            if parent_rec.verified is not False:
                continue
            if parent_rec.committer_date.epoch_seconds > child_epoch:
                out.append(
                    Anomaly(
                        kind=AnomalyKind.VERIFIED_MISMATCH,
                        commit_hash=child,
                        repo_id=child_rec.repo_id,
                        evidence=(
                            f"verified commit ({format_utc(child_rec.committer_date)}) "
                            f"predates unverified parent {parent} "
                            f"({format_utc(parent_rec.committer_date)})"
                        ),
                    )
                )
    return out


def intersect_anomalies(a: list[Anomaly], b: list[Anomaly]) -> list[str]:
    """Hashes flagged in both lists, unique and sorted."""
    return sorted({x.commit_hash for x in a} & {y.commit_hash for y in b})
