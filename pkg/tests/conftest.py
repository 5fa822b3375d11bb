import pytest

TINY_INI = """\
[experiment]
seed = 1
output_dir = {out}
overlaps = 1.0, 0.0
modes = masked, full-sequence

[data]
neutral = 300
toxic_per_domain = 40
anti_per_domain = 30
retain = 30

[model]
n_layers = 1
n_heads = 2
d_model = 16
d_ff = 32
context_length = 32

[pretrain]
steps = 30
learning_rate = 1e-2

[unlearn]
steps = 4
checkpoint_every = 2
learning_rate = 1e-3

[acceptance]
runtime_budget_s = 120
"""


@pytest.fixture
def tiny_config(tmp_path):
    """Path to a seconds-scale experiment config writing into ``tmp_path/out``."""
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_INI.format(out=tmp_path / "out"), encoding="utf-8")
    return path


_ACCEPTANCE: dict[int | str, str] = {}


@pytest.fixture
def report_criterion():
    """Record one pass/fail line for the acceptance summary printed at the end of the run."""

    def record(key, passed: bool, detail: str) -> None:
        label = f"criterion {key}" if isinstance(key, int) else key
        line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
        _ACCEPTANCE[key] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    keys = sorted(_ACCEPTANCE, key=lambda k: (isinstance(k, str), k if isinstance(k, int) else 0, str(k)))
    for key in keys:
        terminalreporter.write_line(_ACCEPTANCE[key])
