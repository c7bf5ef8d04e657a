import time

import pytest

from folad import cli
from folad.benchmark import constant_velocity_config
from folad.estimators import FutureObjectLocalizer
from folad.synthetic import generate

# (criterion number, title, passed, detail), filled by test_acceptance.py
ACCEPTANCE = []


@pytest.fixture
def record_criterion():
    def record(number, title, passed, detail=""):
        ACCEPTANCE.append((number, title, bool(passed), detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number} {title}: {status}  {detail}".rstrip())


@pytest.fixture(scope="session")
def cv_localizer():
    """Small localizer trained on noise-free constant-velocity scenes with a parked ego vehicle."""
    videos = [generate(constant_velocity_config(100 + i)) for i in range(60)]
    return FutureObjectLocalizer(hidden_size=16, ego_hidden_size=8, n_epochs=50, learning_rate=2e-3,
                                 random_state=0).fit(videos)


@pytest.fixture(scope="session")
def ego_localizer():
    """Localizer whose ego model saw straight driving at constant speeds in [0.5, 1.5] m/frame."""
    videos = [generate(constant_velocity_config(300 + i, n_objects=(1, 2), ego_speed=(0.5, 1.5)))
              for i in range(30)]
    return FutureObjectLocalizer(hidden_size=8, ego_hidden_size=8, n_epochs=200, learning_rate=2e-3,
                                 random_state=0).fit(videos)


def run_pipeline(root, seed=0):
    """simulate -> train -> detect -> eval through the CLI; returns paths and timings."""
    bench, ckpt = root / "bench", root / "model.ckpt"
    scores, evald = root / "scores", root / "eval"
    timings = {}
    steps = [
        ("simulate", ["--seed", str(seed), "simulate", "--out", str(bench)]),
        ("train", ["--seed", str(seed), "train", "--videos", str(bench), "--out", str(ckpt)]),
        ("detect", ["detect", "--checkpoint", str(ckpt), "--videos", str(bench), "--out", str(scores)]),
        ("eval", ["eval", "--scores", str(scores), "--videos", str(bench), "--out", str(evald)]),
    ]
    for name, argv in steps:
        start = time.perf_counter()
        code = cli.main(argv)
        timings[name] = time.perf_counter() - start
        if code != 0:
            raise RuntimeError(f"{name} exited with {code}")
    return dict(root=root, bench=bench, checkpoint=ckpt, scores=scores, eval=evald, timings=timings)


@pytest.fixture(scope="session")
def benchmark_run(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("run_a"))
