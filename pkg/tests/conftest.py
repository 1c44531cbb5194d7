import datetime as dt

import pytest

# daily registered counts for Bulgaria from 2020-03-08
BULGARIA = (4, 0, 2, 1, 16, 8, 10, 10, 11, 19, 11, 18, 17, 36, 22, 16, 19, 22, 22, 29, 38)
BULGARIA_CUMULATIVE = (4, 4, 6, 7, 23, 31, 41, 51, 62, 81, 92, 110, 127, 163, 185, 201, 220, 242,
                       264, 293, 331)


def csv_text(values, start=dt.date(2020, 3, 8), region=None):
    lines = ["date,value" + (",region" if region else "")]
    for i, v in enumerate(values):
        day = (start + dt.timedelta(days=i)).isoformat()
        lines.append(f"{day},{v}" + (f",{region}" if region else ""))
    return "\n".join(lines) + "\n"


@pytest.fixture
def bulgaria():
    return BULGARIA


@pytest.fixture
def bulgaria_csv(tmp_path):
    path = tmp_path / "bulgaria.csv"
    path.write_text(csv_text(BULGARIA))
    return path


# acceptance results, filled by test_acceptance and echoed in the terminal summary
ACCEPTANCE = {}
ACCEPTANCE_IDS = [f"C{i}" for i in range(1, 11)]


def record(cid, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {cid}: {detail}"
    ACCEPTANCE[cid] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in ACCEPTANCE_IDS:
        terminalreporter.write_line(ACCEPTANCE.get(cid, f"[FAIL] {cid}: not evaluated (errored or deselected)"))
