import pytest

_LINES = []


class _Recorder:
    def __init__(self, criterion: str):
        self.criterion = criterion

    def check(self, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {self.criterion}: {detail}"
        _LINES.append(line)
        print(line)
        assert ok, detail


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    label = marker.args[0] if marker else request.node.name
    return _Recorder(label)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion label")


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
