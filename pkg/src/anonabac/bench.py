"""Replay harness: throughput, latency percentiles, and anonymity reports.

Latency is measured per decision in-process; absolute numbers are only
meaningful relative to the other variants run on the same machine.
"""

from __future__ import annotations

import csv
import itertools
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np

from .anonymity import PopulationAnonymity, request_entropy, subject_space
from .errors import BenchError
from .ewpt import VARIANTS, Decision, Engine, EngineConfig
from .model import History, HistoryRecord
from .workload import Workload, case_spec, generate

DEFAULT_SEED = 1729
DEFAULT_RUNS = 10
WARMUP_FRACTION = 0.05

BENCH_COLUMNS = (
    "case",
    "variant",
    "run",
    "throughput_tps",
    "latency_avg_ms",
    "latency_p50_ms",
    "latency_p99_ms",
    "comparisons_avg",
    "grant_rate",
)

ANON_COLUMNS = (
    "case",
    "t",
    "r",
    "cohort_size",
    "e_req_min",
    "e_req_mean",
    "e_req_max",
    "a_sub_q1",
    "a_sub_median",
    "a_sub_q3",
)


def default_seed() -> int:
    """Default workload seed, overridable through the QAE_SEED variable."""
    return int(os.environ.get("QAE_SEED", DEFAULT_SEED))


@dataclass
class BenchResult:
    case: str
    variant: str
    run: Union[int, str]  # 1-based run index, or "mean" for the aggregate
    throughput_tps: float
    latency_avg_ms: float
    latency_p50_ms: float
    latency_p99_ms: float
    comparisons_avg: float
    grant_rate: float


@dataclass
class ReplayOutcome:
    engine: Engine
    decisions: list
    eval_seconds: float  # summed evaluation time over the whole stream
    latency_avg_ms: float  # post-warmup block mean
    sample_latencies_ms: list  # post-warmup per-decision samples


#: every n-th decision is individually timed for latency percentiles
LATENCY_SAMPLE_STRIDE = 16


def _chunk_bounds(n: int, warmup: int, interval: Optional[int]) -> list:
    """Cut points for bulk-synchronous replay: the warmup boundary plus, for
    the rebuilding variant, every weight-update interval."""
    cuts = {0, n}
    if 0 < warmup < n:
        cuts.add(warmup)
    if interval:
        cuts.update(range(interval, n, interval))
    bounds = sorted(cuts)
    return list(zip(bounds, bounds[1:]))


def replay(
    workload: Workload,
    variant: str,
    config: Optional[EngineConfig] = None,
    parallel: bool = False,
    workers: int = 4,
) -> ReplayOutcome:
    """Drive the full request stream through a fresh engine of the variant.

    The stream is admitted first (request parsing, signature verification,
    credential scoring, all order-faithful), then evaluated in chunks
    aligned to the rebuild cadence: each chunk is evaluated against one
    snapshot and its outcomes are then recorded to the ledger and pool,
    which is exactly when rebuilds fire. Decisions are identical to a
    request-by-request decide loop.

    Timing covers the evaluation stage only (recording sits after the
    decision is fixed): chunks are timed as blocks for throughput and the
    mean, and every 16th decision is timed individually for percentiles.
    """
    if variant not in VARIANTS:
        raise BenchError(f"unknown engine variant {variant!r}")
    requests = workload.requests
    if not requests:
        raise BenchError("refusing to replay an empty request stream")
    registry = workload.build_registry()
    engine = Engine(registry, workload.policies, config, variant)
    engine.admit(requests)
    if parallel:
        return _replay_parallel(engine, requests, workers)

    n = len(requests)
    warmup = int(n * WARMUP_FRACTION)
    interval = engine.config.update_interval if variant == "full" else None
    stride = 1 if n < 20 * LATENCY_SAMPLE_STRIDE else LATENCY_SAMPLE_STRIDE

    decisions = []
    samples_ns = []
    eval_ns = 0
    post_warmup_ns = 0
    post_warmup_count = 0
    evaluate = engine._evaluate
    record = engine.record
    counter = time.perf_counter_ns
    for lo, hi in _chunk_bounds(n, warmup, interval):
        snap = engine.snapshot
        block = requests[lo:hi]
        sampled = []
        t_block = counter()
        for i, req in enumerate(block):
            if i % stride == 0:
                t0 = counter()
                decision = evaluate(req, snap)
                sampled.append(counter() - t0)
            else:
                decision = evaluate(req, snap)
            decisions.append(decision)
        block_ns = counter() - t_block
        eval_ns += block_ns
        if lo >= warmup:
            post_warmup_ns += block_ns
            post_warmup_count += len(block)
            samples_ns.extend(sampled)
        for req, decision in zip(block, decisions[lo:hi]):
            record(req, decision)
    if not samples_ns:  # stream fits inside the warmup window
        samples_ns = [eval_ns // n]
        post_warmup_ns, post_warmup_count = eval_ns, n
    return ReplayOutcome(
        engine=engine,
        decisions=decisions,
        eval_seconds=eval_ns / 1e9,
        latency_avg_ms=post_warmup_ns / post_warmup_count / 1e6,
        sample_latencies_ms=[s / 1e6 for s in samples_ns],
    )


def _replay_parallel(engine: Engine, requests: list, workers: int) -> ReplayOutcome:
    """Chunked parallel replay: evaluation fans out over an immutable
    snapshot, recording and rebuilds stay serialized at chunk boundaries.

    Decisions are identical to a serial replay; per-decision latencies are
    not comparable across modes.
    """
    chunk = engine.config.update_interval if engine.variant == "full" else len(requests)
    decisions = []
    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for lo in range(0, len(requests), chunk):
            batch = requests[lo : lo + chunk]
            snap = engine.snapshot
            evaluated = list(pool.map(lambda r: engine._evaluate(r, snap), batch))
            for req, decision in zip(batch, evaluated):
                engine.record(req, decision)
                decisions.append(decision)
    wall = time.perf_counter() - start
    per_ms = wall * 1e3 / len(requests)
    return ReplayOutcome(
        engine=engine,
        decisions=decisions,
        eval_seconds=wall,
        latency_avg_ms=per_ms,
        sample_latencies_ms=[per_ms],
    )


def _result_from_replay(case: str, variant: str, run: int, rep: ReplayOutcome) -> BenchResult:
    n = len(rep.decisions)
    lat = np.asarray(rep.sample_latencies_ms, dtype=np.float64)
    grants = sum(1 for d in rep.decisions if d.outcome == "GRANT")
    comparisons = sum(d.comparisons for d in rep.decisions)
    return BenchResult(
        case=case,
        variant=variant,
        run=run,
        throughput_tps=n / rep.eval_seconds,
        latency_avg_ms=rep.latency_avg_ms,
        latency_p50_ms=float(np.percentile(lat, 50)),
        latency_p99_ms=float(np.percentile(lat, 99)),
        comparisons_avg=comparisons / n,
        grant_rate=grants / n,
    )


def aggregate_results(results: list) -> BenchResult:
    """Arithmetic mean of per-run rows, labeled run="mean"."""
    if not results:
        raise BenchError("nothing to aggregate")
    n = len(results)
    return BenchResult(
        case=results[0].case,
        variant=results[0].variant,
        run="mean",
        throughput_tps=sum(r.throughput_tps for r in results) / n,
        latency_avg_ms=sum(r.latency_avg_ms for r in results) / n,
        latency_p50_ms=sum(r.latency_p50_ms for r in results) / n,
        latency_p99_ms=sum(r.latency_p99_ms for r in results) / n,
        comparisons_avg=sum(r.comparisons_avg for r in results) / n,
        grant_rate=sum(r.grant_rate for r in results) / n,
    )


def run_case(
    case: str,
    variant: str,
    runs: int = DEFAULT_RUNS,
    seed: Optional[int] = None,
    scale: float = 1.0,
    config: Optional[EngineConfig] = None,
    workload: Optional[Workload] = None,
    parallel: bool = False,
) -> list:
    """Replay a test case ``runs`` times; returns per-run rows plus a mean row."""
    if runs < 1:
        raise BenchError("runs must be >= 1")
    if variant not in VARIANTS:
        raise BenchError(f"unknown engine variant {variant!r}")
    spec = case_spec(case)
    if workload is None:
        workload = generate(spec, seed if seed is not None else default_seed(), scale)
    results = []
    for run in range(1, runs + 1):
        rep = replay(workload, variant, config, parallel=parallel)
        results.append(_result_from_replay(case, variant, run, rep))
    results.append(aggregate_results(results))
    return results


# ---------------------------------------------------------------------------
# Anonymity report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnonymityRow:
    case: str
    t: int
    r: int
    cohort_size: int
    e_req_min: float
    e_req_mean: float
    e_req_max: float
    a_sub_q1: float
    a_sub_median: float
    a_sub_q3: float


@dataclass
class AnonymityReport:
    case: str
    rows: list


def history_from_stream(requests: Iterable) -> History:
    """Usage-only ledger view of a request stream (outcomes not simulated)."""
    history = History()
    for req in requests:
        history.append(
            HistoryRecord(
                request=req,
                true_subject=req.true_subject or "",
                outcome="",
                reason="",
                entropy=0.0,
                seq=req.seq,
            )
        )
    return history


def anonymity_report(workload: Workload) -> AnonymityReport:
    """Entropy statistics per credential size plus subject-score quartiles.

    For each feasible threshold t the row carries the worst-case space size
    and the entropy spread over every distinct size-t credential derivable
    from the population, weighted by the stream's usage history.
    """
    if not workload.subjects:
        raise BenchError("anonymity report needs a non-empty population")
    registry = workload.build_registry()
    history = history_from_stream(workload.requests)
    population = PopulationAnonymity(registry, history)
    scores = np.asarray(sorted(population.all_scores().values()), dtype=np.float64)
    q1, median, q3 = (float(v) for v in np.percentile(scores, [25, 50, 75]))

    rows = []
    for t in population.feasible_thresholds():
        rt = population.rt(t)
        creds = set()
        for rec in registry.subjects.values():
            pairs = sorted(rec.pair_set)
            if len(pairs) < t:
                continue
            for combo in itertools.combinations(pairs, t):
                creds.add(frozenset(combo))
        entropies = [
            request_entropy(subject_space(cred, registry, history)) for cred in creds
        ]
        rows.append(
            AnonymityRow(
                case=workload.spec.name,
                t=t,
                r=rt.r,
                cohort_size=len(rt.cohort),
                e_req_min=min(entropies),
                e_req_mean=sum(entropies) / len(entropies),
                e_req_max=max(entropies),
                a_sub_q1=q1,
                a_sub_median=median,
                a_sub_q3=q3,
            )
        )
    return AnonymityReport(case=workload.spec.name, rows=rows)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def export_csv(payload, path: str) -> None:
    """Write bench results or an anonymity report with a fixed column order."""
    if isinstance(payload, AnonymityReport):
        rows = sorted(payload.rows, key=lambda r: (r.case, r.t))
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ANON_COLUMNS)
            for r in rows:
                writer.writerow(
                    [
                        r.case,
                        r.t,
                        r.r,
                        r.cohort_size,
                        r.e_req_min,
                        r.e_req_mean,
                        r.e_req_max,
                        r.a_sub_q1,
                        r.a_sub_median,
                        r.a_sub_q3,
                    ]
                )
        return
    results = list(payload)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCH_COLUMNS)
        for r in results:
            writer.writerow(
                [
                    r.case,
                    r.variant,
                    r.run,
                    r.throughput_tps,
                    r.latency_avg_ms,
                    r.latency_p50_ms,
                    r.latency_p99_ms,
                    r.comparisons_avg,
                    r.grant_rate,
                ]
            )


def write_decision_log(path: str, requests: Iterable, decisions: Iterable, variant: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for req, dec in zip(requests, decisions):
            fh.write(json.dumps(dec.to_json(req.seq, variant)) + "\n")
