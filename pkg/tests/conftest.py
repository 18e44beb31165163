import pytest

CRITERIA = {
    1: "shared mean of truth, wedge and vee log scores",
    2: "wedge/vee variance ordering and ratio",
    3: "noncentral chi-squared score laws (KS)",
    4: "CRPS closed forms vs definitional Monte Carlo",
    5: "vee CRPS unbiased for the truth CRPS",
    6: "vee gamma log score vs Monte Carlo corrector",
    7: "vee gamma CRPS quadrature",
    8: "EIV variance comparison with and without z",
    9: "EIV score reductions",
    10: "zero-noise collapse",
    11: "CLI determinism, formats and exit codes",
}

_results: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        ok = rep.passed and not hasattr(rep, "wasxfail")
        n = marker.args[0]
        _results[n] = _results.get(n, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        status = "PASS" if _results[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d}  {status}  {CRITERIA.get(n, '')}")
