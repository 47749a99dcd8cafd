import numpy as np
import pytest

from kinefield import scene as sc


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_cfg():
    return sc.SceneConfig(T=5, objects=[
        sc.ObjectSpec(n_points=12, keyframes=[sc.Keyframe(0), sc.Keyframe(4, (0.0, 0.0, 0.3), (0.1, 0.0, 0.0))]),
        sc.ObjectSpec(n_points=12, keyframes=[sc.Keyframe(0), sc.Keyframe(4, (0.2, 0.0, 0.0), (0.0, 0.1, 0.0))]),
    ], n_background=8)


@pytest.fixture
def tiny(tiny_cfg):
    scene, gt = sc.generate_synthetic(tiny_cfg, 7)
    return scene, gt


# --- acceptance reporting --------------------------------------------------------

N_CRITERIA = 11
_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one acceptance outcome; the line is echoed now and again in the terminal summary."""

    def record(num, name, passed, detail):
        _ACCEPTANCE[num] = (name, bool(passed), detail)
        print(f"criterion {num:2d} {'PASS' if passed else 'FAIL'}: {name} [{detail}]")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in range(1, N_CRITERIA + 1):
        if num in _ACCEPTANCE:
            name, passed, detail = _ACCEPTANCE[num]
            terminalreporter.write_line(f"criterion {num:2d} {'PASS' if passed else 'FAIL'}: {name} [{detail}]")
        else:
            terminalreporter.write_line(f"criterion {num:2d} NOT RUN")
