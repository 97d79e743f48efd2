import re

CRITERIA = {
    1: "LBP oracle equivalence",
    2: "LBP gray-shift invariance",
    3: "histogram normalisation",
    4: "HOG analytic gradients",
    5: "HOG block norm bound",
    6: "KAZE mean conservation",
    7: "KAZE blob localisation",
    8: "fusion arithmetic",
    9: "stump oracle",
    10: "boosting descent",
    11: "SVC KKT",
    12: "determinism",
    13: "synthetic end-to-end benchmark",
    14: "timing identities",
}
_PATTERN = re.compile(r"test_acceptance\.py::test_c(\d+)")
_outcomes = {}


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m:
        return
    node = _outcomes.setdefault(int(m.group(1)), {})
    # a test passes only if its call phase passed outright (xfail counts as a failure)
    if report.failed or report.skipped:
        node[report.nodeid] = False
    elif report.when == "call":
        node[report.nodeid] = not hasattr(report, "wasxfail")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for crit, title in CRITERIA.items():
        results = _outcomes.get(crit)
        if results is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results.values()) else "FAIL"
        terminalreporter.write_line(f"criterion {crit:2d}: {status}  {title}")
        for nodeid, ok in (results or {}).items():
            if not ok:
                terminalreporter.write_line(f"    failing: {nodeid.split('::', 1)[1]}")
