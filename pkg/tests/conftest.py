import json
import time
from pathlib import Path

import pytest

from phasednn import cli

ROOT = Path(__file__).resolve().parents[1]
SEC4_CONFIG = ROOT / "configs" / "paper-sec4.toml"

# (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture(scope="session")
def sec4_run(tmp_path_factory):
    """One full run of the shipped four-scale config, shared across test modules.

    Returns ``(out_dir, report_dict)``; the wall-clock seconds of the whole
    command are stored in the report under ``"_elapsed"``.
    """
    out = tmp_path_factory.mktemp("sec4")
    t0 = time.perf_counter()
    code = cli.main(["train", "--config", str(SEC4_CONFIG), "--out", str(out), "--workers", "1"])
    elapsed = time.perf_counter() - t0
    assert code == 0
    d = json.loads((out / "report.json").read_text())
    d["_elapsed"] = elapsed
    return out, d


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
