import pytest
from hypothesis import HealthCheck, settings

from surgkit.datamodel import (
    BoundingBox,
    CvsVector,
    GridCell,
    GridPosition,
    SampleRecord,
    TaskKind,
    Triplet,
)

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_record(sample_id="s1", **labels):
    mapping = {TaskKind(k): v for k, v in labels.items()}
    return SampleRecord(sample_id, f"frames/{sample_id}.png", "laparoscopic cholecystectomy", "fixture", mapping)


@pytest.fixture
def rich_record():
    return SampleRecord(
        "rich",
        "frames/rich.png",
        "laparoscopic cholecystectomy",
        "fixture",
        {
            TaskKind.INSTRUMENT_RECOGNITION: "grasper",
            TaskKind.INSTRUMENT_LOCALIZATION_BOX: (BoundingBox(10, 20, 110, 220, "grasper"),),
            TaskKind.INSTRUMENT_LOCALIZATION_GRID: GridCell(GridPosition.LEFT, "grasper"),
            TaskKind.PHASE_RECOGNITION: "calot triangle dissection",
            TaskKind.TRIPLET_RECOGNITION: Triplet("grasper", "retract", "gallbladder"),
            TaskKind.CVS_ASSESSMENT: CvsVector(True, False, True),
        },
        image_size=(854, 480),
    )


@pytest.fixture(scope="session")
def synthetic_suite(tmp_path_factory):
    from surgkit.harness import write_synthetic_suite

    return write_synthetic_suite(tmp_path_factory.mktemp("suite"), 50)


PHASES = ("calot triangle dissection", "gallbladder dissection", "development of the plane between prostate and rectum", "other")
STEPS = ("prevesical dissection", "dissection of Denonvilliers' fascia", "bladder neck transection")
INSTRUMENTS = ("grasper", "L-shape hook", "bipolar forceps", "clipper", "large needle driver")
ACTIONS = ("dissecting", "cutting", "suturing", "retracting")
TISSUES = ("Calot's triangle", "gallbladder", "cystic duct", "liver")


def random_records(n, seed=0):
    """Varied fixture records touching every task kind."""
    import random

    rng = random.Random(seed)
    out = []
    for i in range(n):
        labels = {}
        if rng.random() < 0.7:
            labels[TaskKind.PHASE_RECOGNITION] = rng.choice(PHASES)
        if rng.random() < 0.3:
            labels[TaskKind.STEP_RECOGNITION] = rng.choice(STEPS)
        if rng.random() < 0.6:
            labels[TaskKind.INSTRUMENT_RECOGNITION] = rng.choice(INSTRUMENTS)
        if rng.random() < 0.3:
            labels[TaskKind.ACTION_RECOGNITION] = rng.choice(ACTIONS)
        if rng.random() < 0.3:
            labels[TaskKind.TISSUE_RECOGNITION] = rng.choice(TISSUES)
        if rng.random() < 0.3:
            x, y = rng.randint(0, 400), rng.randint(0, 200)
            labels[TaskKind.INSTRUMENT_LOCALIZATION_BOX] = (BoundingBox(x, y, x + 100, y + 80, rng.choice(INSTRUMENTS)),)
        if rng.random() < 0.3:
            labels[TaskKind.INSTRUMENT_LOCALIZATION_GRID] = GridCell(rng.choice(list(GridPosition)), rng.choice(INSTRUMENTS))
        if rng.random() < 0.3:
            labels[TaskKind.TRIPLET_RECOGNITION] = Triplet(
                rng.choice(("grasper", "hook", "clipper")), rng.choice(("retract", "dissect", "clip")), rng.choice(("gallbladder", "cystic duct"))
            )
        if rng.random() < 0.3:
            labels[TaskKind.CVS_ASSESSMENT] = CvsVector(rng.random() < 0.5, rng.random() < 0.5, rng.random() < 0.5)
        if not labels:
            labels[TaskKind.PHASE_RECOGNITION] = rng.choice(PHASES)
        out.append(SampleRecord(f"r{seed}_{i:05d}", f"frames/{i}.png", "laparoscopic cholecystectomy", "fixture", labels, (854, 480)))
    return out


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
