import numpy as np
import pytest

from kashtts.text import default_rules, default_vocab


@pytest.fixture(scope="session")
def vocab():
    return default_vocab()


@pytest.fixture(scope="session")
def rules():
    return default_rules()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fixture_root(tmp_path_factory):
    from kashtts.fixtures import write_corpus

    return write_corpus(tmp_path_factory.mktemp("fixture"))


@pytest.fixture(scope="session")
def fixture_utterances(fixture_root):
    """The five fixture utterances, enhanced and featurized, in manifest order."""
    from kashtts.audio import read_wav
    from kashtts.corpus import build_utterance, speaker_table
    from kashtts.enhance import enhance_pipeline
    from kashtts.fixtures import UTTERANCES
    from kashtts.text import text_to_ids

    speakers = speaker_table(UTTERANCES)
    out = []
    for u in UTTERANCES:
        buf = enhance_pipeline(read_wav(fixture_root / "wavs" / f"{u.id}.wav")).buf
        out.append(build_utterance(u.id, text_to_ids(u.text).ids, speakers[u.speaker], buf))
    return out


CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def criterion_log():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA):
            terminalreporter.write_line(line)
