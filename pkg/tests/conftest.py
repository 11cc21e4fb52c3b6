import pytest

_ACCEPTANCE: dict[tuple, str] = {}


@pytest.fixture
def criterion(request):
    """Record the outcome of an acceptance criterion for the end-of-run summary."""
    state = {"number": None, "label": "", "detail": ""}

    def declare(number, label):
        state["number"], state["label"] = number, label

    def note(text):
        state["detail"] = text

    declare.note = note
    yield declare
    number = state["number"]
    if number is None:
        return
    rep = getattr(request.node, "rep_call", None)
    if rep is None or rep.skipped:
        status = "SKIP"
    else:
        status = "PASS" if rep.passed else "FAIL"
    detail = f" ({state['detail']})" if state["detail"] else ""
    _ACCEPTANCE[(number, state['label'])] = f"{status} criterion {number:>2}: {state['label']}{detail}"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" or (rep.when == "setup" and rep.skipped):
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[key])
