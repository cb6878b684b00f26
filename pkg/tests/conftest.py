import numpy as np
import pytest

from tsvad.data import VideoClip

# Collected (name, outcome) pairs from the acceptance gate, printed at the end.
_ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance" in report.nodeid and report.when == "call":
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE_RESULTS.append((name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS:
        status = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"[{status}] {name}")


def make_clip(
    frames: np.ndarray,
    clip_id: str = "clip",
    modality: str = "intensity",
    labels: np.ndarray | None = None,
    fps: float = 8.0,
) -> VideoClip:
    frames = np.asarray(frames, dtype=np.float32)
    return VideoClip(
        frames=frames,
        timestamps=np.arange(frames.shape[0], dtype=np.float64) / fps,
        labels=labels,
        modality=modality,
        clip_id=clip_id,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
