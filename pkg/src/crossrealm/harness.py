"""Scenario loading, experiment orchestration, and metrics reporting.

A scenario is one JSON document; an empty document means the default
setup (1000 principals averaging two sessions each, no timeout), and
every field can be overridden. The report covers session counts,
end-to-end and per-phase response times, traffic timeseries, and the
maximum network delay component.

Reports are emitted as either CSV or JSON tables with a stable column
order, so identical (scenario, seed) pairs produce byte-identical files.
An expectations file lists (metric, op, target) triples for pass/fail
checking against an emitted report.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from . import simnet
from .errors import (
    ScenarioParseError,
    ScenarioValidationError,
    UnknownMetric,
)
from .protocol import PHASE_COUNT, Role, TimeoutMode, protocol_table
from .simnet import ConnectionModel, SimRun, Stall, records_to_csv

DEFAULT_SEED = 7


@dataclass(frozen=True)
class Scenario:
    """One experiment configuration; defaults are the full-scale setup."""

    principals: int = 1000
    sessions_per_principal: int | str = "mean2"  # "mean2" = seeded draw from {1,2,3}
    timeout_mode: TimeoutMode = TimeoutMode.none()
    connection: ConnectionModel = ConnectionModel()
    resources: tuple[str, str] = ("R1", "R2")
    network_start_offset_s: float = 105.0
    app_start_offset_s: tuple[float, float] = (5.0, 10.0)
    session_spread_s: float = 540.0
    horizon_s: float = 800.0
    sampling_interval_s: float = 1.0
    seed: int = DEFAULT_SEED
    stalls: tuple[Stall, ...] = ()
    propagation_delay_s: float = 0.0005
    link_counts: Mapping[tuple[str, str], int] | None = None
    phase_request_bytes: Mapping[int, int] | None = None
    phase_response_bytes: Mapping[int, int] | None = None


_SCENARIO_FIELDS = {f.name for f in fields(Scenario)} | {"topology"}


def _validate(scenario: Scenario) -> Scenario:
    if scenario.principals < 1:
        raise ScenarioValidationError("principals", "must be a positive count")
    spp = scenario.sessions_per_principal
    if not (spp == "mean2" or (isinstance(spp, int) and spp >= 1)):
        raise ScenarioValidationError("sessions_per_principal",
                                      "must be a positive count or 'mean2'")
    if scenario.horizon_s <= scenario.network_start_offset_s:
        raise ScenarioValidationError("horizon_s",
                                      "must exceed the network start offset")
    lo, hi = scenario.app_start_offset_s
    if lo < 0 or hi < lo:
        raise ScenarioValidationError("app_start_offset_s", "needs 0 <= low <= high")
    if scenario.session_spread_s < 0:
        raise ScenarioValidationError("session_spread_s", "must be non-negative")
    if scenario.sampling_interval_s <= 0:
        raise ScenarioValidationError("sampling_interval_s", "must be positive")
    if scenario.timeout_mode.kind != "none" and not scenario.timeout_mode.seconds > 0:
        raise ScenarioValidationError("timeout_mode", "timeout seconds must be positive")
    for stall in scenario.stalls:
        if not 1 <= stall.phase_index <= PHASE_COUNT:
            raise ScenarioValidationError("stalls", f"phase_index must be 1..{PHASE_COUNT}")
        if stall.extra_delay_s < 0:
            raise ScenarioValidationError("stalls", "extra_delay_s must be non-negative")
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario file; an empty document is the default."""
    text = Path(path).read_text()
    if not text.strip():
        return _validate(Scenario())
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return scenario_from_dict(doc)


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioParseError("scenario document must be a JSON object")
    unknown = set(doc) - _SCENARIO_FIELDS
    if unknown:
        raise ScenarioValidationError(sorted(unknown)[0], "unknown field")
    kwargs: dict = {}
    for key in ("principals", "seed"):
        if key in doc:
            kwargs[key] = int(doc[key])
    if "sessions_per_principal" in doc:
        v = doc["sessions_per_principal"]
        kwargs["sessions_per_principal"] = v if v == "mean2" else int(v)
    if "timeout_mode" in doc:
        kwargs["timeout_mode"] = TimeoutMode.parse(doc["timeout_mode"])
    if "connection" in doc:
        kwargs["connection"] = ConnectionModel(**doc["connection"])
    if "resources" in doc:
        kwargs["resources"] = tuple(doc["resources"])
    for key in ("network_start_offset_s", "session_spread_s", "horizon_s",
                "sampling_interval_s"):
        if key in doc:
            kwargs[key] = float(doc[key])
    if "app_start_offset_s" in doc:
        lo, hi = doc["app_start_offset_s"]
        kwargs["app_start_offset_s"] = (float(lo), float(hi))
    if "stalls" in doc:
        kwargs["stalls"] = tuple(
            Stall(role=Role(s["role"]), phase_index=int(s["phase_index"]),
                  extra_delay_s=float(s["extra_delay_s"]))
            for s in doc["stalls"])
    if "topology" in doc:
        topo = doc["topology"]
        if "propagation_delay_s" in topo:
            kwargs["propagation_delay_s"] = float(topo["propagation_delay_s"])
        if "link_counts" in topo:
            kwargs["link_counts"] = {(a, b): int(n) for a, b, n in topo["link_counts"]}
    for key in ("phase_request_bytes", "phase_response_bytes"):
        if key in doc:
            kwargs[key] = {int(k): int(v) for k, v in doc[key].items()}
    return _validate(Scenario(**kwargs))


def scenario_to_dict(scenario: Scenario) -> dict:
    """Full explicit form, including the per-phase byte assignment."""
    table = protocol_table(scenario.timeout_mode, scenario.phase_request_bytes,
                           scenario.phase_response_bytes)
    doc = {
        "principals": scenario.principals,
        "sessions_per_principal": scenario.sessions_per_principal,
        "timeout_mode": scenario.timeout_mode.encode(),
        "connection": {
            "handshake_rtts": scenario.connection.handshake_rtts,
            "per_phase_service_s": scenario.connection.per_phase_service_s,
            "rtt_base_s": scenario.connection.rtt_base_s,
        },
        "resources": list(scenario.resources),
        "network_start_offset_s": scenario.network_start_offset_s,
        "app_start_offset_s": list(scenario.app_start_offset_s),
        "session_spread_s": scenario.session_spread_s,
        "horizon_s": scenario.horizon_s,
        "sampling_interval_s": scenario.sampling_interval_s,
        "seed": scenario.seed,
        "stalls": [
            {"role": s.role.value, "phase_index": s.phase_index,
             "extra_delay_s": s.extra_delay_s}
            for s in scenario.stalls
        ],
        "phase_request_bytes": {str(s.index): s.request_bytes for s in table},
        "phase_response_bytes": {str(s.index): s.response_bytes for s in table},
    }
    topo: dict = {"propagation_delay_s": scenario.propagation_delay_s}
    if scenario.link_counts:
        topo["link_counts"] = [[a, b, n] for (a, b), n in scenario.link_counts.items()]
    doc["topology"] = topo
    return doc


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n")


# -- metrics ------------------------------------------------------------------

@dataclass
class MetricsReport:
    """Aggregate measurements of one run."""

    sessions_started: int
    sessions_completed: int
    sessions_dropped: int
    dropped_by_reason: dict[str, int]
    in_flight_at_horizon: int
    end_to_end_mean_s: float | None
    end_to_end_p50_s: float | None
    end_to_end_p90_s: float | None
    end_to_end_p99_s: float | None
    end_to_end_count: int
    per_phase_mean_s: dict[int, float]
    per_phase_count: dict[int, int]
    active_sessions: list[int]
    traffic_sent_bps: list[float]
    traffic_received_bps: list[float]
    peak_traffic_sent_bps: float
    peak_traffic_received_bps: float
    mean_traffic_sent_bps: float
    max_network_delay_s: float
    horizon_exceeded: bool
    sampling_interval_s: float
    seed: int

    def metric_tree(self) -> dict:
        """Nested scalar view used by summaries and acceptance checks."""
        return {
            "sessions": {
                "started": self.sessions_started,
                "completed": self.sessions_completed,
                "dropped": self.sessions_dropped,
                "in_flight_at_horizon": self.in_flight_at_horizon,
                "dropped_by_reason": dict(sorted(self.dropped_by_reason.items())),
            },
            "end_to_end_s": {
                "mean": self.end_to_end_mean_s,
                "p50": self.end_to_end_p50_s,
                "p90": self.end_to_end_p90_s,
                "p99": self.end_to_end_p99_s,
                "count": self.end_to_end_count,
            },
            "per_phase_s": {
                str(k): {"mean": self.per_phase_mean_s.get(k),
                         "count": self.per_phase_count.get(k, 0)}
                for k in range(1, PHASE_COUNT + 1)
            },
            "traffic_bps": {
                "peak_sent": self.peak_traffic_sent_bps,
                "peak_received": self.peak_traffic_received_bps,
                "mean_sent": self.mean_traffic_sent_bps,
            },
            "max_network_delay_s": self.max_network_delay_s,
            "horizon_exceeded": self.horizon_exceeded,
            "sampling_interval_s": self.sampling_interval_s,
            "seed": self.seed,
        }


def aggregate(run: SimRun, scenario: Scenario) -> MetricsReport:
    """Fold an event log and final session states into a MetricsReport."""
    interval = scenario.sampling_interval_s
    buckets = int(math.floor(run.horizon_s / interval)) + 1
    sent = np.zeros(buckets)
    received = np.zeros(buckets)
    started = 0
    phase_req_sent: dict[tuple[str, int], float] = {}
    phase_durations: dict[int, list[float]] = {k: [] for k in range(1, PHASE_COUNT + 1)}

    for rec in run.records:
        b = min(int(rec.time_s / interval), buckets - 1)
        if rec.kind == "send":
            sent[b] += rec.payload_bytes * 8.0
            if rec.phase_index is not None:
                key = (rec.session_id, rec.phase_index)
                # request legs open a phase; remember the earliest send
                if key not in phase_req_sent:
                    phase_req_sent[key] = rec.time_s
        elif rec.kind == "deliver":
            if rec.payload_bytes is not None:
                received[b] += rec.payload_bytes * 8.0
            if rec.outcome == "phase-complete":
                t0 = phase_req_sent.get((rec.session_id, rec.phase_index))
                if t0 is not None:
                    phase_durations[rec.phase_index].append(rec.time_s - t0)
        elif rec.kind == "session-start":
            started += 1

    completed = run.completed()
    dropped = run.dropped()
    reasons: dict[str, int] = {}
    for s in dropped:
        key = str(s.drop_reason)
        reasons[key] = reasons.get(key, 0) + 1

    durations = np.array([s.ended_at - s.started_at for s in completed])
    if durations.size:
        e2e = [float(durations.mean())] + [
            float(np.percentile(durations, q)) for q in (50, 90, 99)]
    else:
        e2e = [None, None, None, None]

    active = np.zeros(buckets, dtype=int)
    for s in run.sessions.values():
        a = int(s.started_at / interval)
        end = s.ended_at if s.ended_at is not None else run.horizon_s
        b = min(int(end / interval), buckets - 1)
        active[a:b + 1] += 1

    sent_bps = sent / interval
    received_bps = received / interval
    return MetricsReport(
        sessions_started=started,
        sessions_completed=len(completed),
        sessions_dropped=len(dropped),
        dropped_by_reason=reasons,
        in_flight_at_horizon=started - len(completed) - len(dropped),
        end_to_end_mean_s=e2e[0],
        end_to_end_p50_s=e2e[1],
        end_to_end_p90_s=e2e[2],
        end_to_end_p99_s=e2e[3],
        end_to_end_count=int(durations.size),
        per_phase_mean_s={k: float(np.mean(v)) for k, v in phase_durations.items() if v},
        per_phase_count={k: len(v) for k, v in phase_durations.items()},
        active_sessions=[int(x) for x in active],
        traffic_sent_bps=[float(x) for x in sent_bps],
        traffic_received_bps=[float(x) for x in received_bps],
        peak_traffic_sent_bps=float(sent_bps.max()) if buckets else 0.0,
        peak_traffic_received_bps=float(received_bps.max()) if buckets else 0.0,
        mean_traffic_sent_bps=float(sent_bps.mean()) if buckets else 0.0,
        max_network_delay_s=run.max_network_delay_s,
        horizon_exceeded=run.horizon_exceeded,
        sampling_interval_s=interval,
        seed=run.seed,
    )


def run_experiment(scenario: Scenario) -> MetricsReport:
    """Drive the simulator once and aggregate its event log."""
    return aggregate(simnet.run(scenario), scenario)


# -- report files ----------------------------------------------------------------

def _flatten(tree: dict, prefix: str = "") -> list[tuple[str, object]]:
    rows = []
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            rows.extend(_flatten(value, name + "."))
        else:
            rows.append((name, value))
    return rows


def _fmt(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def emit_report(report: MetricsReport, format: str, out_dir: str | Path) -> list[Path]:
    """Write summary, per_phase, and timeseries tables; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tree = report.metric_tree()
    per_phase = tree.pop("per_phase_s")
    interval = report.sampling_interval_s
    # a run with no sessions produces tables with headers and no data rows
    empty = report.sessions_started == 0
    n = 0 if empty else len(report.active_sessions)
    phase_rows = () if empty else tuple(range(1, PHASE_COUNT + 1))

    if format == "json-like":
        paths = [out / "summary.json", out / "per_phase.json", out / "timeseries.json"]
        paths[0].write_text(json.dumps(tree, indent=2, sort_keys=True) + "\n")
        paths[1].write_text(json.dumps(
            {str(k): per_phase[str(k)] for k in phase_rows},
            indent=2, sort_keys=True) + "\n")
        series = {
            "t_s": [i * interval for i in range(n)],
            "active_sessions": report.active_sessions[:n],
            "traffic_sent_bps": report.traffic_sent_bps[:n],
            "traffic_received_bps": report.traffic_received_bps[:n],
        }
        paths[2].write_text(json.dumps(series, indent=2, sort_keys=True) + "\n")
        return paths

    if format != "csv":
        raise ScenarioValidationError("format", f"unknown report format {format!r}")
    paths = [out / "summary.csv", out / "per_phase.csv", out / "timeseries.csv"]
    lines = ["metric,value"]
    lines += [f"{k},{_fmt(v)}" for k, v in sorted(_flatten(tree))]
    paths[0].write_text("\n".join(lines) + "\n")
    lines = ["phase_index,mean_response_s,count"]
    for k in phase_rows:
        entry = per_phase[str(k)]
        lines.append(f"{k},{_fmt(entry['mean'])},{entry['count']}")
    paths[1].write_text("\n".join(lines) + "\n")
    lines = ["t_s,active_sessions,traffic_sent_bps,traffic_received_bps"]
    for i in range(n):
        lines.append(f"{_fmt(i * interval)},{report.active_sessions[i]},"
                     f"{_fmt(report.traffic_sent_bps[i])},"
                     f"{_fmt(report.traffic_received_bps[i])}")
    paths[2].write_text("\n".join(lines) + "\n")
    return paths


def emit_event_log(run: SimRun, out_dir: str | Path) -> Path:
    path = Path(out_dir) / "events.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(records_to_csv(run.records))
    return path


def load_report(report_dir: str | Path) -> dict:
    """Reload an emitted report (either format) as a metric tree."""
    d = Path(report_dir)
    if (d / "summary.json").exists():
        tree = json.loads((d / "summary.json").read_text())
        tree["per_phase_s"] = json.loads((d / "per_phase.json").read_text())
        return tree
    if not (d / "summary.csv").exists():
        raise ScenarioParseError(f"no summary.json or summary.csv under {d}")
    tree: dict = {}
    for line in (d / "summary.csv").read_text().splitlines()[1:]:
        name, _, raw = line.partition(",")
        node = tree
        parts = name.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        if raw == "":
            value: object = None
        elif raw in ("true", "false"):
            value = raw == "true"
        else:
            value = float(raw) if ("." in raw or "e" in raw or "inf" in raw) else int(raw)
        node[parts[-1]] = value
    per_phase: dict = {}
    for line in (d / "per_phase.csv").read_text().splitlines()[1:]:
        k, mean, count = line.split(",")
        per_phase[k] = {"mean": float(mean) if mean else None, "count": int(count)}
    tree["per_phase_s"] = per_phase
    return tree


# -- acceptance expectations --------------------------------------------------------

@dataclass(frozen=True)
class Verdict:
    name: str
    metric: str
    passed: bool
    measured: object
    detail: str


def _resolve(tree: dict, dotted: str) -> object:
    node: object = tree
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise UnknownMetric(dotted)
        node = node[part]
    if isinstance(node, dict):
        raise UnknownMetric(dotted)
    return node


def check_acceptance(report: MetricsReport | dict, expectations: list[dict]) -> list[Verdict]:
    """Evaluate each expectation against the report; one verdict per entry."""
    tree = report.metric_tree() if isinstance(report, MetricsReport) else report
    verdicts = []
    for exp in expectations:
        metric = exp["metric"]
        op = exp["op"]
        measured = _resolve(tree, metric)
        value = float("nan") if measured is None else float(measured)
        if op == "gte":
            target = float(exp["target"])
            passed = value >= target
            detail = f"{value:g} >= {target:g}"
        elif op == "lte":
            target = float(exp["target"])
            passed = value <= target
            detail = f"{value:g} <= {target:g}"
        elif op == "lt":
            target = float(exp["target"])
            passed = value < target
            detail = f"{value:g} < {target:g}"
        elif op == "gt":
            target = float(exp["target"])
            passed = value > target
            detail = f"{value:g} > {target:g}"
        elif op == "within-pct":
            target = float(exp["target"])
            tol = float(exp["tolerance_pct"]) / 100.0 * abs(target)
            passed = abs(value - target) <= tol
            detail = f"{value:g} within {target:g} +/- {tol:g}"
        elif op == "range":
            lo, hi = float(exp["lo"]), float(exp["hi"])
            passed = lo <= value <= hi
            detail = f"{value:g} in [{lo:g}, {hi:g}]"
        else:
            raise ScenarioParseError(f"unknown expectation op {op!r}")
        if value != value:  # NaN: metric absent from this run
            passed = False
            detail = "no measurement"
        verdicts.append(Verdict(name=exp.get("name", metric), metric=metric,
                                passed=passed, measured=measured, detail=detail))
    return verdicts


def load_expectations(path: str | Path) -> list[dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or "expectations" not in doc:
        raise ScenarioParseError(f"{path}: expected an object with 'expectations'")
    return doc["expectations"]
