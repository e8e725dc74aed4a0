import math
import os

import numpy as np
import pytest

from sawlab.core import Command, Observation, UnitQuaternion

# Multi-minute training checks run by default; set SAWLAB_QUICK=1 to skip them.
QUICK = os.environ.get("SAWLAB_QUICK", "") not in ("", "0")

slow = pytest.mark.skipif(QUICK, reason="SAWLAB_QUICK set")


def make_obs(n_act=6, n_arm=0, **kw) -> Observation:
    base = dict(motor_pos=np.zeros(n_act), motor_vel=np.zeros(n_act),
                arm_pos=np.zeros(n_arm), base_pos=np.array([0.0, 0.0, 0.8]))
    base.update(kw)
    return Observation(**base)


def random_quat(rng) -> UnitQuaternion:
    return UnitQuaternion.from_array(rng.normal(size=4)).normalize()


def walking(c_x=0.5, **kw) -> Command:
    return Command(c_x=c_x, **kw)


def close(a, b, tol=1e-12):
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)


# --- acceptance verdicts -------------------------------------------------------------
# Each acceptance check records (criterion, part, passed, detail). The terminal
# summary folds the parts into one PASS/FAIL line per criterion.

VERDICTS: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def verdict():
    def record(criterion: int, part: str, passed: bool, detail: str) -> bool:
        VERDICTS.append((criterion, part, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} criterion {criterion} [{part}]: {detail}")
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted({v[0] for v in VERDICTS}):
        parts = [v for v in VERDICTS if v[0] == n]
        ok = all(v[2] for v in parts)
        detail = "; ".join(f"{p}: {d}" for _, p, _, d in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {n}: {detail}")
