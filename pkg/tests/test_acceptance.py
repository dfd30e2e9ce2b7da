"""Acceptance criteria 1-13, each reduced to the named checks of the verify suites.

A criterion passes when every check feeding it passes.  Each test prints a
``criterion N PASS|FAIL`` line, and the same lines are repeated in the
terminal summary so they survive output capture.
"""

import time

import pytest

from kfoliate import verify

CRITERIA = {
    1: ("riccati", ("riccati-",)),
    2: ("bounds", ("curvature-bound-",)),
    3: ("riccati", ("phi-derivative-",)),
    4: ("fuchsian", ("constant-leaf-",)),
    5: ("fuchsian", ("gauss-equation-",)),
    6: ("bounds", ("trace-",)),
    7: ("fuchsian", ("homogeneous-speed-gap-paper-literal",)),
    8: ("continuation", ("det-law-",)),
    9: ("continuation", ("fuchsian-continuation-",)),
    10: ("continuation", ("perturbed-",)),
    11: ("wedge", ("wedge-",)),
    12: ("foliation", ("sweep-",)),
    13: ("foliation", ("volume-closed-form",)),
}

TITLES = {
    1: "Riccati closed forms vs RK4",
    2: "curvature bound dominates det",
    3: "phi derivative identity",
    4: "constant-height leaf oracle",
    5: "Gauss equation cross-check",
    6: "trace identity",
    7: "homogeneous elliptic solve",
    8: "determinant law by forcing mode",
    9: "continuation reproduces exact leaves",
    10: "perturbed start: dispersion and nesting",
    11: "wedge weak curvature bound",
    12: "Fuchsian convergence sweep",
    13: "volume closed form",
}


@pytest.fixture(scope="module")
def suites():
    cache = {}

    def get(name):
        if name not in cache:
            start = time.perf_counter()
            cache[name] = (verify.run_suite(name), time.perf_counter() - start)
        return cache[name][0]

    yield get
    total = sum(sec for _, sec in cache.values())
    print(f"\nacceptance suites took {total:.1f} s")


@pytest.mark.parametrize("criterion", sorted(CRITERIA))
def test_criterion(criterion, suites, acceptance_log):
    suite, prefixes = CRITERIA[criterion]
    checks = [c for c in suites(suite) if c.name.startswith(prefixes)]
    assert checks, f"no checks feed criterion {criterion}"
    ok = all(c.passed for c in checks)
    line = f"criterion {criterion} {'PASS' if ok else 'FAIL'} {TITLES[criterion]}"
    print(line)
    for c in checks:
        print("   ", c.line())
    acceptance_log.append(line)
    failed = [c.line() for c in checks if not c.passed]
    assert not failed, "\n".join(failed)
