import pytest

from geoprop.dataset import write_dataset
from geoprop.synthetic import SynthConfig, generate_synthetic


@pytest.fixture
def synth_file(tmp_path):
    """Factory: write a synthetic dataset and return (path, SynthData)."""

    def make(name="data.tsv", **kwargs):
        data = generate_synthetic(SynthConfig(**kwargs))
        path = tmp_path / name
        write_dataset(data.dataset, path)
        return path, data

    return make


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            for key, value in rep.user_properties:
                if key == "acceptance":
                    lines.append((value[0], f"{value[0]:<5} {'PASS' if rep.passed else 'FAIL'}  {value[1]}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda x: int(x[0][2:])):
            terminalreporter.write_line(line)
