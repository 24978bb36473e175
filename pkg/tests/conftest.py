import json
import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("pdpkit", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pdpkit")

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture(scope="session")
def figure3_record():
    with open(os.path.join(DATA, "figure3_wizard.json")) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def figure3(figure3_record):
    from pdpkit.dialog import parse_dialogue_log

    return parse_dialogue_log(figure3_record)


@pytest.fixture(scope="session")
def small_corpus():
    from pdpkit.synth import GeneratorConfig, generate

    return generate(GeneratorConfig(n_dialogues=300, seed=11, signal_strength=0.9))


# one line per acceptance criterion, echoed again at the end of the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
