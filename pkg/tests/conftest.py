import sys

import pytest

from homsort.encdom import ThresholdDomain

# Every protocol-driven domain built anywhere in the suite is collected here and
# checked after the test that built it.
SUITE_AUDIT = {"domains": 0, "records": 0, "violations": []}


@pytest.fixture(autouse=True)
def audited_domains(monkeypatch, request):
    created = []
    original = ThresholdDomain.__init__

    def tracking_init(self, *args, **kwargs):
        original(self, *args, **kwargs)
        if self.protocol:
            created.append(self)

    monkeypatch.setattr(ThresholdDomain, "__init__", tracking_init)
    yield created
    for dom in created:
        bad = dom.audit_violations()
        SUITE_AUDIT["domains"] += 1
        SUITE_AUDIT["records"] += len(dom.audit)
        SUITE_AUDIT["violations"].extend(f"{request.node.nodeid}: {b}" for b in bad)
        assert not bad, bad[:5]


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
    terminalreporter.section("decryption audit")
    terminalreporter.write_line(
        f"{SUITE_AUDIT['domains']} protocol domains, {SUITE_AUDIT['records']} audit records, "
        f"{len(SUITE_AUDIT['violations'])} violations")
