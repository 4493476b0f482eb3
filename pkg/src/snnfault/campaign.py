"""Campaign orchestration: golden reference, faulty runs, checkpointed merge.

Every fault runs on a fresh copy of the template network against the first K
dataset inputs (state reset between inputs), so each (fault, input) outcome is
a pure function of (model, descriptor, input). Results stream into
``outcomes.partial.csv`` and a ``checkpoint.txt`` of completed fault_id ranges
(rows are flushed and fsynced BEFORE the checkpoint acknowledges them, and the
checkpoint is replaced atomically). Resume trusts only rows whose fault_id the
checkpoint covers and which form complete per-fault groups; torn or
un-checkpointed trailing rows are discarded and re-run. The final
``outcomes.csv`` is written in one pass sorted by (fault_id, input_id), so its
bytes are identical no matter the worker count or how many times the campaign
was interrupted.

Outcome CSV: ``fault_id,input_id,golden_class,faulty_class,golden_top_score,
faulty_top_score`` with scores as ``hex:decimal`` cells (raw binary32 pattern,
authoritative, plus a human-readable rendering). Golden CSV: one row per
input with top class, top score, and the full score vector as ``;``-joined
hex patterns.
"""

from __future__ import annotations

import json
import multiprocessing
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Network, network_forward, reset_state
from .dataio import (
    SpikeDataset,
    f32_to_hex,
    hex_to_f32,
    load_dataset,
    load_model,
    parse_score,
    render_score,
)
from .errors import AddressError, FormatError, ResumeError
from .faults import FaultDescriptor, inject_static, make_refresh_hook, target_tensor
from .faultlist import read_fault_list

OUTCOME_HEADER = "fault_id,input_id,golden_class,faulty_class,golden_top_score,faulty_top_score"
GOLDEN_HEADER = "input_id,top_class,top_score,scores"


@dataclass
class CampaignConfig:
    model: Path
    dataset: Path
    fault_list: Path
    out_dir: Path
    subset: int | None = None  # first K inputs; None = whole dataset
    workers: int = 1
    checkpoint_every: int = 100  # faults between checkpoint flushes
    resume: bool = False

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.checkpoint_every < 1:
            raise ValueError(f"checkpoint interval must be >= 1, got {self.checkpoint_every}")


@dataclass
class GoldenEntry:
    input_id: int
    scores: np.ndarray
    top_class: int
    top_score: np.float32


@dataclass
class GoldenReference:
    entries: list[GoldenEntry]

    def by_id(self) -> dict[int, GoldenEntry]:
        return {e.input_id: e for e in self.entries}


@dataclass
class RawOutcome:
    fault_id: int
    input_id: int
    scores: np.ndarray | None
    top_class: int
    top_score: np.float32


@dataclass(frozen=True)
class OutcomeRow:
    """One parsed outcomes.csv row. top_class/top_score mirror the faulty side
    so classification code can consume rows and RawOutcomes alike."""

    fault_id: int
    input_id: int
    golden_class: int
    faulty_class: int
    golden_top: np.float32
    faulty_top: np.float32

    @property
    def top_class(self) -> int:
        return self.faulty_class

    @property
    def top_score(self) -> np.float32:
        return self.faulty_top


@dataclass
class CampaignResult:
    status: str  # "complete" | "partial"
    processed: int  # faults executed by this invocation
    total: int
    wall_seconds: float
    out_dir: Path
    golden_path: Path
    outcomes_path: Path | None


def _top(scores: np.ndarray) -> tuple[int, np.float32]:
    # argmax returns the first maximal index: ties break to the lowest class.
    idx = int(np.argmax(scores))
    return idx, np.float32(scores[idx])


def _subset_count(dataset: SpikeDataset, subset: int | None) -> int:
    if subset is None:
        return dataset.num_samples
    if not 1 <= int(subset) <= dataset.num_samples:
        raise ValueError(
            f"subset must be in 1..{dataset.num_samples} (dataset size), got {subset}"
        )
    return int(subset)


def run_golden(net: Network, dataset: SpikeDataset, subset: int | None = None) -> GoldenReference:
    """Fault-free reference over the first `subset` inputs of a fresh network."""
    k = _subset_count(dataset, subset)
    entries = []
    for i in range(k):
        reset_state(net)
        scores = network_forward(net, dataset.sample(i).spikes)
        top_class, top_score = _top(scores)
        entries.append(GoldenEntry(i, scores, top_class, top_score))
    return GoldenReference(entries)


def run_faulty(
    template: Network, d: FaultDescriptor, dataset: SpikeDataset, subset: int | None = None
) -> list[RawOutcome]:
    """One fault, all inputs, on a private copy of the template network."""
    net = template.copy()
    try:
        target_tensor(net, d)  # validate addressability up front
    except AddressError as exc:
        raise AddressError(f"fault {d.fault_id}: {exc}") from None
    hook = None
    if d.parameter.is_dynamic:
        hook = make_refresh_hook(d)
    else:
        inject_static(net, d)
    k = _subset_count(dataset, subset)
    outcomes = []
    for i in range(k):
        reset_state(net)
        scores = network_forward(net, dataset.sample(i).spikes, refresh=hook)
        top_class, top_score = _top(scores)
        outcomes.append(RawOutcome(d.fault_id, i, scores, top_class, top_score))
    return outcomes


# -- golden reference persistence ----------------------------------------------


def write_golden(ref: GoldenReference, path) -> None:
    lines = [
        f"# golden inputs={len(ref.entries)} classes={len(ref.entries[0].scores)}",
        GOLDEN_HEADER,
    ]
    for e in ref.entries:
        vector = ";".join(f32_to_hex(v) for v in e.scores)
        lines.append(f"{e.input_id},{e.top_class},{render_score(e.top_score)},{vector}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_golden(path) -> GoldenReference:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"golden file is not UTF-8: {exc}") from None
    lines = [ln for ln in text.split("\n") if ln != ""]
    body = [ln for ln in lines if not ln.startswith("#")]
    if not body or body[0] != GOLDEN_HEADER:
        raise FormatError(f"expected golden header '{GOLDEN_HEADER}'")
    entries: list[GoldenEntry] = []
    classes = None
    for lineno, line in enumerate(body[1:], start=2):
        fields = line.split(",")
        if len(fields) != 4:
            raise FormatError(f"expected 4 fields, got {len(fields)}", line=lineno)
        try:
            input_id = int(fields[0])
            top_class = int(fields[1])
        except ValueError as exc:
            raise FormatError(f"bad field: {exc}", line=lineno) from None
        top_score = parse_score(fields[2], line=lineno)
        cells = fields[3].split(";")
        scores = np.empty(len(cells), dtype=np.float32)
        for j, cell in enumerate(cells):
            try:
                scores[j] = hex_to_f32(cell)
            except FormatError as exc:
                raise FormatError(str(exc), line=lineno) from None
        if classes is None:
            classes = len(cells)
        elif len(cells) != classes:
            raise FormatError("score vector length varies between rows", line=lineno)
        want_class, want_score = _top(scores)
        if top_class != want_class or f32_to_hex(top_score) != f32_to_hex(want_score):
            raise FormatError("top class/score disagree with the score vector", line=lineno)
        entries.append(GoldenEntry(input_id, scores, top_class, top_score))
    if not entries:
        raise FormatError("golden reference holds no inputs")
    return GoldenReference(entries)


# -- outcome rows ---------------------------------------------------------------


def _render_row(fid: int, iid: int, golden: GoldenEntry, f_class: int, f_score) -> str:
    return (
        f"{fid},{iid},{golden.top_class},{f_class},"
        f"{render_score(golden.top_score)},{render_score(f_score)}"
    )


def _parse_outcome_line(line: str, lineno: int | None = None) -> OutcomeRow:
    fields = line.split(",")
    if len(fields) != 6:
        raise FormatError(f"expected 6 fields, got {len(fields)}", line=lineno)
    try:
        fid, iid, g_class, f_class = (int(v) for v in fields[:4])
    except ValueError as exc:
        raise FormatError(f"bad field: {exc}", line=lineno) from None
    g_top = parse_score(fields[4], line=lineno)
    f_top = parse_score(fields[5], line=lineno)
    return OutcomeRow(fid, iid, g_class, f_class, g_top, f_top)


def read_outcomes(path) -> list[OutcomeRow]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"outcome file is not UTF-8: {exc}") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != OUTCOME_HEADER:
        raise FormatError(f"expected outcome header '{OUTCOME_HEADER}'", line=1)
    return [_parse_outcome_line(line, lineno) for lineno, line in enumerate(lines[1:], start=2)]


# -- checkpointing ---------------------------------------------------------------

_RANGE_RE = re.compile(r"^(\d+)-(\d+)$")


def _write_checkpoint(path: Path, completed: set[int]) -> None:
    ids = sorted(completed)
    lines = []
    i = 0
    while i < len(ids):
        j = i
        while j + 1 < len(ids) and ids[j + 1] == ids[j] + 1:
            j += 1
        lines.append(f"{ids[i]}-{ids[j]}")
        i = j + 1
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def _load_resume_state(
    ckpt: Path, partial: Path, k: int, valid_ids: set[int]
) -> tuple[set[int], list[tuple[int, int, str]]]:
    if not ckpt.exists():
        if partial.exists() and partial.stat().st_size > 0:
            raise ResumeError(f"{partial} holds outcome rows but no checkpoint acknowledges them")
        return set(), []
    completed: set[int] = set()
    try:
        ckpt_text = ckpt.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ResumeError(f"checkpoint is not UTF-8: {exc}") from None
    for lineno, line in enumerate(ckpt_text.split("\n"), start=1):
        line = line.strip()
        if not line:
            continue
        m = _RANGE_RE.match(line)
        if not m:
            raise ResumeError(f"corrupt checkpoint: bad range {line!r} (line {lineno})")
        lo, hi = int(m.group(1)), int(m.group(2))
        if lo > hi:
            raise ResumeError(f"corrupt checkpoint: inverted range {line!r} (line {lineno})")
        completed.update(range(lo, hi + 1))
    unknown = completed - valid_ids
    if unknown:
        raise ResumeError(
            f"checkpoint references fault ids not in the fault list (e.g. {min(unknown)})"
        )
    if not completed:
        return set(), []
    if not partial.exists():
        raise ResumeError("checkpoint exists but the partial outcome file is missing")

    # Keep only fully parseable rows of checkpointed faults; anything else is a
    # torn or un-acknowledged tail and will simply be re-run. Duplicate
    # (fault, input) rows (flush raced a crash) collapse to the last copy --
    # determinism makes the copies byte-identical anyway.
    groups: dict[int, dict[int, str]] = {}
    # errors="replace": garbage bytes in a torn tail become unparseable rows.
    for line in partial.read_text(encoding="utf-8", errors="replace").split("\n"):
        if not line:
            continue
        try:
            row = _parse_outcome_line(line)
        except FormatError:
            continue
        if row.fault_id in completed:
            groups.setdefault(row.fault_id, {})[row.input_id] = line
    kept: list[tuple[int, int, str]] = []
    for fid in sorted(completed):
        g = groups.get(fid)
        if g is None or set(g) != set(range(k)):
            raise ResumeError(
                f"checkpointed fault {fid} is missing outcome rows (have "
                f"{sorted(g) if g else []}, need 0..{k - 1}); refusing to re-run silently"
            )
        kept.extend((fid, iid, g[iid]) for iid in range(k))
    return completed, kept


# -- the campaign loop ------------------------------------------------------------

_WORKER: dict = {}


def _worker_init(net: Network, dataset: SpikeDataset, subset: int) -> None:
    _WORKER["net"] = net
    _WORKER["dataset"] = dataset
    _WORKER["subset"] = subset


def _worker_run(d: FaultDescriptor):
    outs = run_faulty(_WORKER["net"], d, _WORKER["dataset"], _WORKER["subset"])
    return d.fault_id, [(o.input_id, o.top_class, o.top_score) for o in outs]


def run_campaign(cfg: CampaignConfig, limit: int | None = None) -> CampaignResult:
    """Execute (or resume) a campaign; see the module docstring for the files.

    ``limit`` caps how many pending faults this invocation processes, then
    checkpoints and returns with status "partial" -- the deterministic stand-in
    for a mid-campaign kill in tests.
    """
    t0 = time.monotonic()
    net = load_model(cfg.model)
    dataset = load_dataset(cfg.dataset)
    fl = read_fault_list(cfg.fault_list, net)
    k = _subset_count(dataset, cfg.subset)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    golden = run_golden(net.copy(), dataset, k)
    golden_path = out_dir / "golden.csv"
    write_golden(golden, golden_path)
    golden_by = golden.by_id()

    ckpt_path = out_dir / "checkpoint.txt"
    partial_path = out_dir / "outcomes.partial.csv"
    final_path = out_dir / "outcomes.csv"
    valid_ids = {d.fault_id for d in fl.descriptors}

    if cfg.resume:
        completed, rows = _load_resume_state(ckpt_path, partial_path, k, valid_ids)
    else:
        if ckpt_path.exists() or partial_path.exists():
            raise ResumeError(
                f"{out_dir} already holds campaign state; resume it or clean the directory"
            )
        completed, rows = set(), []

    pending = [d for d in fl.descriptors if d.fault_id not in completed]
    if limit is not None:
        pending = pending[: max(0, int(limit))]

    with open(partial_path, "a", encoding="utf-8", newline="\n") as pf:
        unacknowledged = 0

        def checkpoint() -> None:
            pf.flush()
            os.fsync(pf.fileno())
            _write_checkpoint(ckpt_path, completed)

        def record(fid: int, triples) -> None:
            nonlocal unacknowledged
            for iid, f_class, f_score in triples:
                line = _render_row(fid, iid, golden_by[iid], f_class, f_score)
                rows.append((fid, iid, line))
                pf.write(line + "\n")
            completed.add(fid)
            unacknowledged += 1
            if unacknowledged >= cfg.checkpoint_every:
                checkpoint()
                unacknowledged = 0

        if cfg.workers == 1:
            for d in pending:
                outs = run_faulty(net, d, dataset, k)
                record(d.fault_id, [(o.input_id, o.top_class, o.top_score) for o in outs])
        elif pending:
            with multiprocessing.Pool(
                cfg.workers, initializer=_worker_init, initargs=(net, dataset, k)
            ) as pool:
                for fid, triples in pool.imap_unordered(_worker_run, pending, chunksize=1):
                    record(fid, triples)
        if unacknowledged:
            checkpoint()

    status = "complete" if completed == valid_ids else "partial"
    outcomes_path = None
    if status == "complete":
        rows.sort(key=lambda r: (r[0], r[1]))
        with open(final_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(OUTCOME_HEADER + "\n")
            for _, _, line in rows:
                f.write(line + "\n")
        outcomes_path = final_path

    wall = time.monotonic() - t0
    summary = {
        "status": status,
        "faults_total": len(valid_ids),
        "faults_completed": len(completed),
        "inputs": k,
        "workers": cfg.workers,
        "wall_seconds": wall,
    }
    (out_dir / "campaign.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return CampaignResult(
        status=status,
        processed=len(pending),
        total=len(valid_ids),
        wall_seconds=wall,
        out_dir=out_dir,
        golden_path=golden_path,
        outcomes_path=outcomes_path,
    )
