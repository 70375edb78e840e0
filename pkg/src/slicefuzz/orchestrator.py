"""Campaign orchestration: greybox fuzzing plus solver-assisted unblocking.

A campaign runs the fuzzing loop until the kept-seed counter stalls for
the plateau window, then mounts one roadblock attempt: pick the most
interesting partially-covered conditional, re-trace its witness up to
the guard, slice the statements feeding that guard, and hand slice plus
witness to the solver. A returned candidate goes into the injection
drop-box and is imported like any other seed; covering the targeted arm
earns the conditional a reward so related roadblocks surface sooner.

Two modes share that logic. ``deterministic`` interleaves everything on
one thread under a virtual clock that advances a fixed amount per
execution, so a campaign is a pure function of config, RNG seed, and
solver replay. ``threaded`` runs the fuzzer in a worker thread on the
wall clock; fuzzer and orchestrator coordinate only through the corpus
files (stats, drop-box, results ledger), never through shared state.
"""

from __future__ import annotations

import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .ast_index import AstIndex, build_ast_index
from .config import Config
from .coverage import (
    CoverageState,
    analyze_corpus,
    coverage_counts,
    interpret_trace_arms,
    retrieve_roadblock,
    reward,
)
from .fuzzer import Corpus, Fuzzer, last_progress_time, read_stats
from .slicer import SliceError, build_slice
from .solver import Solver, SolverConfig
from .tracer import BuildResult, build_target, guard_record_key, run_traced


@dataclass
class RoadblockAttempt:
    attempt: int
    elapsed_s: float
    cond_id: str = ""
    arm_id: int = -1
    arm_kind: str = ""
    synthetic: bool = False
    interest: int = 0
    witness_size: int = 0
    solver_status: str = ""
    outcome: str = "skipped"     # kept | discarded | decode-failed | skipped
    requests: int = 0
    pipeline_latency_s: float = 0.0
    solver_latency_s: float = 0.0
    injected_id: Optional[int] = None
    new_arms: int = 0
    detail: str = ""


@dataclass
class CampaignResult:
    out_dir: Path
    mode: str
    rng_seed: int
    elapsed_s: float
    execs: int
    kept: int
    crashes: int
    timeouts: int
    attempts: list[RoadblockAttempt]
    coverage_samples: list[tuple[float, int]]
    counts: dict
    solver_backend: str
    solver_requests: int
    budget_left: int

    def outcome_totals(self) -> dict[str, int]:
        totals = {"kept": 0, "discarded": 0, "decode-failed": 0, "skipped": 0}
        for att in self.attempts:
            totals[att.outcome] += 1
        return totals

    def injected_count(self) -> int:
        return sum(1 for a in self.attempts if a.injected_id is not None)

    def effective_ratio(self) -> Optional[float]:
        injected = self.injected_count()
        if injected == 0:
            return None
        return self.outcome_totals()["kept"] / injected


# ---------------------------------------------------------------------------
# clocks


class VirtualClock:
    """Deterministic time: advances only when told to."""

    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def tick(self, dt: float) -> None:
        self._now += dt


class WallClock:
    def now(self) -> float:
        return time.monotonic()

    def tick(self, dt: float) -> None:
        pass


# ---------------------------------------------------------------------------
# threaded-mode plumbing


_RESULTS_NAME = "results.tsv"

_PERMANENT_SOLVER_STOPS = ("budget-exhausted", "exhausted")


def append_injection_results(corpus: Corpus, results) -> None:
    """Ledger one import sweep so another process can read the verdicts."""
    if not results:
        return
    path = corpus.llm_queue.parent / _RESULTS_NAME
    with open(path, "a") as fh:
        for r in results:
            pairs = ";".join(f"{c}#{a}" for c, a in sorted(r.new_pairs))
            fh.write(f"{r.llm_id}\t{r.status}\t{len(r.new_pairs)}\t{pairs}\n")


def read_injection_results(out_dir: str | Path) -> dict[int, dict]:
    path = Path(out_dir) / "llm" / _RESULTS_NAME
    if not path.exists():
        return {}
    out: dict[int, dict] = {}
    for line in path.read_text().splitlines():
        parts = line.split("\t")
        if len(parts) != 4:
            continue
        pairs = set()
        for item in parts[3].split(";"):
            if "#" in item:
                cond, _, arm = item.rpartition("#")
                pairs.add((cond, int(arm)))
        out[int(parts[0])] = {
            "status": parts[1],
            "new_arms": int(parts[2]),
            "new_pairs": pairs,
        }
    return out


class _FuzzWorker(threading.Thread):
    """Wall-clock fuzzing loop that also sweeps the injection drop-box."""

    def __init__(self, fuzzer: Fuzzer, *, import_every: int,
                 flush_every_s: float):
        super().__init__(daemon=True)
        self.fuzzer = fuzzer
        self.import_every = max(1, import_every)
        self.flush_every_s = flush_every_s
        self.stop_event = threading.Event()
        self.error: Optional[BaseException] = None

    def run(self) -> None:
        try:
            fz = self.fuzzer
            last_flush = fz.clock()
            steps = 0
            while not self.stop_event.is_set():
                fz.step()
                steps += 1
                if steps % self.import_every == 0:
                    append_injection_results(fz.corpus,
                                             fz.import_injections())
                now = fz.clock()
                if now - last_flush >= self.flush_every_s:
                    fz.flush_stats()
                    last_flush = now
        except BaseException as exc:   # surfaced by the orchestrator
            self.error = exc


# ---------------------------------------------------------------------------
# the campaign


class Campaign:
    """One configured run: build, fuzz, unblock, and account for it all."""

    def __init__(self, config: Config,
                 index: Optional[AstIndex] = None,
                 build: Optional[BuildResult] = None):
        self.config = config
        self.index = index or build_ast_index(config.target.sources)
        build_dir = config.target.build_dir or (config.campaign.out / "build")
        self.build = build or build_target(
            self.index, build_dir, cc=config.target.cc,
            cflags=config.target.cflags or None,
            build_cmd=config.target.build_cmd)
        self.rng = random.Random(config.campaign.rng_seed)
        self.attempts: list[RoadblockAttempt] = []
        self.solver: Optional[Solver] = None
        if config.solver.backend != "off":
            self.solver = Solver(SolverConfig(
                backend=config.solver.backend,
                model=config.solver.model,
                max_tokens=config.solver.max_tokens,
                temperature=config.solver.temperature,
                query_budget=config.solver.query_budget,
                timeout_s=config.solver.timeout_s,
                replay_path=(str(config.solver.replay)
                             if config.solver.replay else None),
                bruteforce_trials=config.solver.bruteforce_trials,
            ))
        self._solver_stopped = False
        self._archive_root = (config.campaign.out / "llm" / "archive"
                              if config.solver.archive else None)

    # -- shared helpers ------------------------------------------------------

    def _seed_files(self) -> list[Path]:
        seeds_dir = self.config.campaign.seeds
        if seeds_dir is None or not Path(seeds_dir).is_dir():
            return []
        return sorted(p for p in Path(seeds_dir).iterdir() if p.is_file())

    def _run_target(self, data: bytes, stop_at=None):
        return run_traced(self.build.binary, data,
                          timeout_s=self.config.target.timeout_s,
                          trace_cap=self.config.target.trace_cap,
                          run_args=self.config.target.run_args or None,
                          stop_at=stop_at)

    def _covers_pair(self, data: bytes, cond_id: str, arm_id: int) -> bool:
        trace = self._run_target(data)
        if trace.exit_status == "crash":
            return False
        _reached, covered = interpret_trace_arms(self.index, trace)
        return (cond_id, arm_id) in covered

    def _solve_roadblock(self, attempt: RoadblockAttempt,
                         state: CoverageState,
                         corpus: Corpus) -> Optional[int]:
        """Select, slice, and solve one roadblock; returns the injection id.

        Fills in every attempt field except the final outcome, which
        depends on what the import of the injected candidate reports.
        """
        t0 = time.perf_counter()
        rb = retrieve_roadblock(self.index, state, self.rng)
        if rb is None:
            attempt.detail = "no roadblock available"
            return None
        attempt.cond_id = rb.cond_id
        attempt.arm_id = rb.arm_id
        attempt.arm_kind = rb.arm_kind
        attempt.synthetic = rb.synthetic
        attempt.interest = rb.interest
        try:
            witness = Path(rb.witness_path).read_bytes()
        except OSError as exc:
            attempt.detail = f"witness unreadable: {exc}"
            return None
        attempt.witness_size = len(witness)
        stop = guard_record_key(self.index, rb.cond_id)
        trace = self._run_target(witness, stop_at=stop)
        if not trace.records:
            attempt.detail = "witness no longer reaches the guard"
            attempt.pipeline_latency_s = time.perf_counter() - t0
            return None
        try:
            sl = build_slice(self.index, trace, rb.cond_id, rb.arm_id)
        except SliceError as exc:
            attempt.detail = f"slice failed: {exc}"
            attempt.pipeline_latency_s = time.perf_counter() - t0
            return None
        attempt.pipeline_latency_s = time.perf_counter() - t0

        check = None
        if self.solver.config.backend == "bruteforce":
            check = lambda cand: self._covers_pair(cand, rb.cond_id,
                                                   rb.arm_id)
        archive_to = None
        if self._archive_root is not None:
            archive_to = self._archive_root / f"attempt{attempt.attempt:04d}"
        result = self.solver.solve(sl.text, witness, rb.cond_id, rb.arm_id,
                                   check=check, archive_to=archive_to)
        attempt.solver_status = result.status
        attempt.solver_latency_s = result.latency_s
        attempt.requests = result.requests_used
        attempt.detail = result.detail
        if result.status in _PERMANENT_SOLVER_STOPS:
            self._solver_stopped = True
        if result.status == "ok":
            llm_id, _path = corpus.add_injection(result.candidate)
            attempt.injected_id = llm_id
            return llm_id
        return None

    @staticmethod
    def _classify(attempt: RoadblockAttempt, verdict: Optional[dict]) -> None:
        """Translate an import verdict into the attempt's outcome."""
        if attempt.injected_id is None:
            if attempt.solver_status == "decode-failed":
                attempt.outcome = "decode-failed"
            else:
                attempt.outcome = "skipped"
            return
        if verdict is None:
            attempt.outcome = "discarded"
            attempt.detail = (attempt.detail or
                              "campaign ended before import")
            return
        attempt.outcome = "kept" if verdict["status"] == "kept" \
            else "discarded"
        attempt.new_arms = verdict["new_arms"]

    def _apply_reward(self, attempt: RoadblockAttempt, verdict: dict,
                      state: CoverageState) -> None:
        if verdict and (attempt.cond_id, attempt.arm_id) in \
                verdict["new_pairs"]:
            reward(state, attempt.cond_id)

    # -- deterministic mode ----------------------------------------------------

    def _run_deterministic(self) -> CampaignResult:
        cfg = self.config.campaign
        clock = VirtualClock()
        fz = Fuzzer(self.index, self.build.binary, cfg.out,
                    rng=self.rng, clock=clock.now,
                    timeout_s=self.config.target.timeout_s,
                    trace_cap=self.config.target.trace_cap,
                    run_args=self.config.target.run_args or None)
        fz.load_initial(self._seed_files())
        fz.flush_stats()
        last_flush = clock.now()
        last_attempt: Optional[float] = None

        while clock.now() < cfg.duration_s:
            fz.step()
            clock.tick(cfg.tick_s)
            now = clock.now()
            if now - last_flush >= cfg.flush_every_s:
                fz.flush_stats()
                last_flush = now
            if self.solver is None or self._solver_stopped:
                continue
            anchor = max(v for v in (fz.last_kept_time, last_attempt, 0.0)
                         if v is not None)
            if now - anchor < cfg.plateau_s:
                continue
            attempt = RoadblockAttempt(attempt=len(self.attempts) + 1,
                                       elapsed_s=now)
            llm_id = self._solve_roadblock(attempt, fz.state, fz.corpus)
            verdict = None
            if llm_id is not None:
                results = fz.import_injections()
                for r in results:
                    if r.llm_id == llm_id:
                        verdict = {"status": r.status,
                                   "new_arms": len(r.new_pairs),
                                   "new_pairs": r.new_pairs}
                self._apply_reward(attempt, verdict, fz.state)
            self._classify(attempt, verdict)
            self.attempts.append(attempt)
            last_attempt = now

        fz.flush_stats()
        return self._result(fz, clock.now(), fz.state)

    # -- threaded mode -----------------------------------------------------------

    def _run_threaded(self) -> CampaignResult:
        cfg = self.config.campaign
        clock = WallClock()
        fz = Fuzzer(self.index, self.build.binary, cfg.out,
                    rng=random.Random(self.rng.randrange(2 ** 63)),
                    clock=clock.now,
                    timeout_s=self.config.target.timeout_s,
                    trace_cap=self.config.target.trace_cap,
                    run_args=self.config.target.run_args or None)
        fz.load_initial(self._seed_files())
        fz.flush_stats()
        start = clock.now()

        # the orchestrator's own coverage view, rebuilt from corpus files
        ostate = CoverageState()
        otrace = lambda data: self._run_target(data)

        worker = _FuzzWorker(fz, import_every=cfg.import_every,
                             flush_every_s=cfg.flush_every_s)
        worker.start()
        pending: list[RoadblockAttempt] = []
        last_attempt: Optional[float] = None
        try:
            while clock.now() - start < cfg.duration_s:
                time.sleep(cfg.poll_s)
                if worker.error is not None:
                    raise worker.error
                verdicts = read_injection_results(cfg.out)
                still = []
                for att in pending:
                    if att.injected_id in verdicts:
                        verdict = verdicts[att.injected_id]
                        self._apply_reward(att, verdict, ostate)
                        self._classify(att, verdict)
                    else:
                        still.append(att)
                pending = still
                if self.solver is None or self._solver_stopped or pending:
                    continue
                rows = read_stats(fz.corpus.stats_path)
                progress = last_progress_time(rows)
                anchor = max(v for v in (progress, last_attempt, start)
                             if v is not None)
                if clock.now() - anchor < cfg.plateau_s:
                    continue
                analyze_corpus(self.index, ostate,
                               fz.corpus.main_queue.iterdir(), otrace)
                attempt = RoadblockAttempt(
                    attempt=len(self.attempts) + 1,
                    elapsed_s=clock.now() - start)
                llm_id = self._solve_roadblock(attempt, ostate, fz.corpus)
                self.attempts.append(attempt)
                last_attempt = clock.now()
                if llm_id is not None:
                    pending.append(attempt)
                else:
                    self._classify(attempt, None)
        finally:
            worker.stop_event.set()
            worker.join(timeout=max(30.0, self.config.target.timeout_s * 3))
        if worker.error is not None:
            raise worker.error

        # final sweep so every injected candidate has a verdict
        append_injection_results(fz.corpus, fz.import_injections())
        fz.flush_stats()
        verdicts = read_injection_results(cfg.out)
        for att in pending:
            verdict = verdicts.get(att.injected_id)
            if verdict is not None:
                self._apply_reward(att, verdict, ostate)
            self._classify(att, verdict)
        return self._result(fz, clock.now() - start, fz.state)

    # -- results ------------------------------------------------------------------

    def _result(self, fz: Fuzzer, elapsed: float,
                state: CoverageState) -> CampaignResult:
        rows = read_stats(fz.corpus.stats_path)
        samples = [(row["time"], row["arms"]) for row in rows]
        if samples:
            base = samples[0][0] if self.config.campaign.mode == "threaded" \
                else 0.0
            samples = [(t - base, arms) for t, arms in samples]
        return CampaignResult(
            out_dir=Path(self.config.campaign.out),
            mode=self.config.campaign.mode,
            rng_seed=self.config.campaign.rng_seed,
            elapsed_s=elapsed,
            execs=fz.execs,
            kept=fz.kept,
            crashes=fz.crash_count,
            timeouts=fz.timeout_count,
            attempts=self.attempts,
            coverage_samples=samples,
            counts=coverage_counts(self.index, state),
            solver_backend=self.config.solver.backend,
            solver_requests=(self.solver.requests_made
                             if self.solver else 0),
            budget_left=(self.solver.budget_left
                         if self.solver else 0),
        )

    def run(self) -> CampaignResult:
        if self.config.campaign.mode == "threaded":
            return self._run_threaded()
        return self._run_deterministic()


def run_campaign(config: Config) -> CampaignResult:
    """Build the target and run one full campaign per the config."""
    return Campaign(config).run()
