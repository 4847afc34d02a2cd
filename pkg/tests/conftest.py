import numpy as np
import pytest

from gspconv.reference import ConvParams
from gspconv.tensor import PaddingSpec


def naive_conv(x, w, params):
    """Independent grouped convolution: per-group einsum over explicit windows, in float64."""
    n, c_in, h, wd = x.shape
    g, kpg, cpg = params.groups, params.kpg, params.cpg
    ph, pw = params.pad.pad_h, params.pad.pad_w
    xp = np.zeros((n, c_in, h + 2 * ph, wd + 2 * pw))
    xp[:, :, ph:ph + h, pw:pw + wd] = x
    ho = (h + 2 * ph - params.k_h) // params.s_h + 1
    wo = (wd + 2 * pw - params.k_w) // params.s_w + 1
    y = np.zeros((n, params.c_out, ho, wo))
    for j in range(g):
        xs = xp[:, j * cpg:(j + 1) * cpg]
        ws = w[j * kpg:(j + 1) * kpg].astype(np.float64)
        for kh in range(params.k_h):
            for kw in range(params.k_w):
                patch = xs[:, :, kh:kh + params.s_h * ho:params.s_h, kw:kw + params.s_w * wo:params.s_w]
                y[:, j * kpg:(j + 1) * kpg] += np.einsum("nchw,kc->nkhw", patch, ws[:, :, kh, kw])
    return y


def fig3_params():
    return ConvParams(4, 4, 2, 2, groups=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_params(rng, max_c=16):
    g = int(rng.choice([1, 2, 4]))
    c_in = g * int(rng.integers(1, max_c // g + 1))
    c_out = g * int(rng.integers(1, max_c // g + 1))
    k = int(rng.choice([1, 2, 3]))
    s = int(rng.choice([1, 2]))
    p = int(rng.choice([0, 1]))
    return ConvParams(c_in, c_out, k, k, s, s, PaddingSpec(p, p), g)


# -- acceptance reporting: one pass/fail line per criterion -------------------

_criteria: dict[int, tuple[str, str]] = {}


def criterion(number: int, title: str):
    """Mark an acceptance test; its outcome is listed in the terminal summary."""
    return pytest.mark.criterion(number, title)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else "FAIL"
        seconds = f"{rep.duration:.1f}s"
        _criteria[number] = (title, f"{status} ({seconds})")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status = _criteria[number]
        terminalreporter.write_line(f"criterion {number:2d} {title:<40} {status}")
