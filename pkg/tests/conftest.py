import pytest

ACCEPTANCE_RESULTS = []


class AcceptanceRecorder:
    def __init__(self, criterion):
        self.criterion = criterion
        self.checks = []

    def check(self, name, passed, detail=""):
        self.checks.append((name, bool(passed), detail))
        return bool(passed)

    def finish(self):
        passed = all(ok for _, ok, _ in self.checks)
        ACCEPTANCE_RESULTS.append((self.criterion, passed, self.checks))
        status = "PASS" if passed else "FAIL"
        print(f"\nACCEPTANCE {self.criterion}: {status}")
        for name, ok, detail in self.checks:
            print(f"    [{'ok' if ok else 'FAIL'}] {name}: {detail}")
        failed = [f"{name} ({detail})" for name, ok, detail in self.checks if not ok]
        assert not failed, "; ".join(failed)


@pytest.fixture
def acceptance(request):
    marker = request.node.get_closest_marker("criterion")
    return AcceptanceRecorder(marker.args[0] if marker else request.node.name)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, checks in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {criterion}")
        for name, ok, detail in checks:
            terminalreporter.write_line(f"      {'ok  ' if ok else 'FAIL'}  {name}: {detail}")
