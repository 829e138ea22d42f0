"""Collects one verdict line per acceptance criterion for the terminal summary."""

_VERDICTS: dict[str, list] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    key = props["criterion"]
    entry = _VERDICTS.setdefault(key, [True, props.get("detail", "")])
    if report.failed:
        entry[0] = False
    if props.get("detail"):
        entry[1] = props["detail"]


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS, key=lambda k: int(k.split()[0])):
        ok, detail = _VERDICTS[key]
        line = f"criterion {key}: {'PASS' if ok else 'FAIL'}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)
