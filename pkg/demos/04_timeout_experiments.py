"""Timeout semantics: per-phase timers versus the localized watchdog at F.

Injects response stalls into single-session runs and compares the three
policies: no timeout (sessions wait), a 60 s per-phase timeout (drops at
the stalled phase), and the 200 s localized watchdog at the front-end.
"""

import math
from dataclasses import replace

from crossrealm import simnet
from crossrealm.harness import Scenario
from crossrealm.protocol import Role, TimeoutMode

base = Scenario(principals=1, sessions_per_principal=1,
                session_spread_s=1.0, horizon_s=600.0, seed=3)


def outcome(scenario, label):
    run = simnet.run(scenario)
    s = next(iter(run.sessions.values()))
    took = "" if s.ended_at is None else f" after {s.ended_at - s.started_at:.1f} s"
    reason = f" ({s.drop_reason})" if s.drop_reason else ""
    print(f"{label:55} -> {s.status.value}{reason}{took}")
    return run


print("baseline, no timeout, no stall:")
outcome(base, "  clean run")

print("\ncredential database stalled 90 s at phase 5:")
stalled = simnet.inject_stall(base, Role.SAC_DB, 5, 90.0)
outcome(stalled, "  timeout mode none (waits it out)")
outcome(replace(stalled, timeout_mode=TimeoutMode.per_phase(60)),
        "  per-phase 60 s (drops at phase 5)")
outcome(simnet.inject_stall(replace(base, timeout_mode=TimeoutMode.per_phase(60)),
                            Role.SAC_DB, 5, 30.0),
        "  per-phase 60 s with only a 30 s stall (completes)")

print("\nCloudB never answers phase 10 (response suppressed):")
suppressed = simnet.inject_stall(base, Role.CLOUD_B, 10, math.inf)
outcome(suppressed, "  timeout mode none (hangs in flight)")
run = outcome(replace(suppressed, timeout_mode=TimeoutMode.localized_f(200)),
              "  localized watchdog at F, 200 s")
t4 = max(r.time_s for r in run.records
         if r.kind == "deliver" and r.phase_index == 4 and r.outcome == "phase-complete")
s = next(iter(run.sessions.values()))
print(f"  watchdog armed when F finished forwarding (t={t4:.1f} s); "
      f"dropped {s.ended_at - t4:.1f} s later")
