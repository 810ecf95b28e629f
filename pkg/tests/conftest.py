import numpy as np
import pytest

from auralkit.scene import PositionPair, make_shoebox


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def box():
    return make_shoebox((4.0, 3.0, 2.5))


@pytest.fixture(scope="session")
def pair():
    return PositionPair((1.1, 0.9, 1.3), (2.7, 2.1, 1.6))


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """Ten oracle entries on two small boxes, order 12."""
    from auralkit.dataset import generate_dataset

    scenes = {"a": make_shoebox((4.0, 3.0, 2.5)), "b": make_shoebox((5.0, 3.5, 2.8))}
    out = tmp_path_factory.mktemp("toy_dataset")
    return generate_dataset(scenes, 1, 5, 12, out, seed=3)


def random_box_pair(rng, dims=None):
    dims = np.asarray(dims if dims is not None else rng.uniform(2.0, 9.0, 3))
    src = rng.uniform(0.1, 0.9, 3) * dims
    lis = rng.uniform(0.1, 0.9, 3) * dims
    return dims, PositionPair(src, lis)


# -- acceptance summary ---------------------------------------------------------

def pytest_configure(config):
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    item.config._criteria[number] = (title, "PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter, config):
    if not config._criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(config._criteria):
        title, verdict, detail = config._criteria[number]
        line = f"criterion {number:>2} {verdict}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
