import numpy as np
import pytest

from vesselmtl.data import write_gray_png


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_folder(tmp_path):
    """Two 16x16 image/mask pairs in the img/ + gt/ layout."""
    root = tmp_path / "toy"
    (root / "img").mkdir(parents=True)
    (root / "gt").mkdir()
    r = np.random.default_rng(7)
    for name in ("b_second.png", "a_first.png"):
        img = r.integers(0, 256, size=(16, 16), dtype=np.uint8)
        mask = np.zeros((16, 16), dtype=np.uint8)
        mask[4:12, 6:10] = 255
        write_gray_png(str(root / "img" / name), img)
        write_gray_png(str(root / "gt" / name), mask)
    return root


@pytest.fixture
def acceptance(request):
    """Record one ``criterion N: PASS|FAIL`` line; they are echoed at the end of the session."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
